use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::set_family::check_dim;

/// `n` observations of an `m`-dimensional vector, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    m: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidArgument("dataset has no observations".into()));
        }
        let m = rows[0].len();
        check_dim(m)?;
        let mut values = Vec::with_capacity(n * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: row.len() });
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("observation value {v}")));
            }
            values.extend(row);
        }
        Ok(Dataset { n, m, values })
    }

    /// Row-major values; `values.len()` must be a multiple of `m`.
    pub fn from_flat(values: Vec<f64>, m: usize) -> Result<Self> {
        check_dim(m)?;
        if values.is_empty() || values.len() % m != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of length {m}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("observation value {v}")));
        }
        Ok(Dataset { n: values.len() / m, m, values })
    }

    /// CSV with one observation per row. A first row that does not parse as
    /// numbers is taken as a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut rows = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(row) => rows.push(row),
                Err(_) if line == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("CSV row {}: {e}", line + 1))),
            }
        }
        Self::new(rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.m)
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    /// Fails unless every value lies in `[0, 1]`.
    pub fn check_unit_cube(&self) -> Result<()> {
        match self.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            Some(k) => Err(Error::PointOutsideCube { index: k % self.m, value: self.values[k] }),
            None => Ok(()),
        }
    }

    /// Copula-scale pseudo-observations `R_ij / (n + 1)`.
    pub fn rank_pit(&self) -> Result<Dataset> {
        let r = ranks(self)?;
        let scale = 1.0 / (self.n as f64 + 1.0);
        Ok(Dataset {
            n: self.n,
            m: self.m,
            values: r.ranks.iter().map(|&k| k as f64 * scale).collect(),
        })
    }

    /// Applies `f(j, value)` to every entry.
    pub fn map_columns(&self, f: impl Fn(usize, f64) -> f64) -> Result<Dataset> {
        let values = self.values.iter().enumerate().map(|(k, &v)| f(k % self.m, v)).collect();
        Self::from_flat(values, self.m)
    }
}

/// Column-wise ranks `R_ij ∈ {1..n}`, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RankMatrix {
    n: usize,
    m: usize,
    ranks: Vec<u32>,
}

impl RankMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rank(&self, i: usize, j: usize) -> u32 {
        self.ranks[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ranks[i * self.m..(i + 1) * self.m]
    }

    pub fn column(&self, j: usize) -> Vec<u32> {
        (0..self.n).map(|i| self.rank(i, j)).collect()
    }
}

/// `R_ij = #{k : X_kj ≤ X_ij}`. Ties are an error; columns are 1-based in
/// the error.
pub fn ranks(data: &Dataset) -> Result<RankMatrix> {
    let (n, m) = (data.n, data.m);
    if n > u32::MAX as usize {
        return Err(Error::InvalidArgument("too many observations".into()));
    }
    let mut ranks = vec![0u32; n * m];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for j in 0..m {
        order.clear();
        order.extend(0..n);
        order.sort_by(|&a, &b| data.value(a, j).total_cmp(&data.value(b, j)));
        for w in order.windows(2) {
            if data.value(w[0], j) == data.value(w[1], j) {
                return Err(Error::Ties { column: j + 1 });
            }
        }
        for (pos, &i) in order.iter().enumerate() {
            ranks[i * m + j] = pos as u32 + 1;
        }
    }
    Ok(RankMatrix { n, m, ranks })
}
