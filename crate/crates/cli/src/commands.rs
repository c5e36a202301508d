use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use cubegreen::extremal::{self, efficiency_coefficient, minimal_norm_squared, principal_eigenvalue_report};
use cubegreen::measure::{lambda, lambda_closed_form};
use cubegreen::montecarlo::{
    interior_grid, null_distribution, null_values, sample_gaussian_field, simulate_null_covariance,
    simulate_tied_down_covariance, CovarianceReport, NullStatistic, SimConfig,
};
use cubegreen::set_family::{
    enumerate_monotone_families, family_for_known_margins, is_monotone, parse_mask_list, upward_closure,
};
use cubegreen::statistics::{self, default_grid_n};
use cubegreen::{CubePoint, Dataset, GreenKernel, MeasureSpec, MonotoneFamily, SubsetMask};

use crate::report::{num, Table};
use crate::Failure;

#[derive(Subcommand, Serialize, Deserialize, Clone, Debug)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum Command {
    /// Build, check or enumerate upward-closed families of subsets.
    Family(FamilyArgs),
    /// Integer coefficients a_U of the Green function of a family.
    Coeffs(KernelArgs),
    /// Evaluate the Green function G(x, ξ).
    GreenEval(GreenEvalArgs),
    /// λ = ∬ G dμ dμ and its reciprocal.
    Lambda(LambdaArgs),
    /// Solve the extremal problem and sample the minimizer Ω.
    Solve(SolveArgs),
    /// Efficiency coefficient 1/λ for the family with known margins V.
    Efficiency(EfficiencyArgs),
    /// Principal eigenvalue of the covariance operator by Nyström.
    Eigen(EigenArgs),
    /// Compute a test statistic on a CSV dataset.
    Stat(StatArgs),
    /// Monte Carlo checks of covariances and null distributions.
    Simulate(SimulateArgs),
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
pub struct Shared {
    /// Dimension of the cube.
    #[arg(long)]
    pub m: Option<usize>,
    /// Seed of the random streams.
    #[arg(long, default_value_t = 1)]
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    1
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
pub struct FamilySel {
    /// Upward-closed family, e.g. '[[1,2],[1]]' or '{1,2},{1}'.
    #[arg(long)]
    pub family: Option<String>,
    /// Use the family {M} ∪ {M∖{u} : u ∉ V} for the given V, e.g. "" or "1,3".
    #[arg(long = "family-known-margins-V", conflicts_with = "family")]
    #[serde(rename = "family_known_margins_V")]
    pub known_margins_v: Option<String>,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
pub struct FamilyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    #[serde(flatten)]
    pub sel: FamilySel,
    /// Upward closure of these generators.
    #[arg(long, conflicts_with_all = ["family", "known_margins_v", "check"])]
    pub generators: Option<String>,
    /// Report whether this list of subsets is upward-closed.
    #[arg(long, conflicts_with_all = ["family", "known_margins_v"])]
    pub check: Option<String>,
    /// List every upward-closed family (m ≤ 5).
    #[arg(long)]
    #[serde(default)]
    pub enumerate: bool,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
pub struct KernelArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    #[serde(flatten)]
    pub sel: FamilySel,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
pub struct GreenEvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    #[serde(flatten)]
    pub sel: FamilySel,
    /// First point, e.g. 0.3,0.7.
    #[arg(long)]
    pub x: String,
    /// Second point.
    #[arg(long)]
    pub xi: String,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
pub struct LambdaArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    #[serde(flatten)]
    pub sel: FamilySel,
    /// lebesgue, diagonal, antidiagonal, a '+'-joined sum of these, or measure JSON.
    #[arg(long, default_value = "lebesgue")]
    pub measure: String,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    #[serde(flatten)]
    pub sel: FamilySel,
    #[arg(long, default_value = "lebesgue")]
    pub measure: String,
    /// Points at which to report Ω; repeat the flag or separate with ';'.
    #[arg(long = "eval-at", value_delimiter = ';')]
    #[serde(default)]
    pub eval_at: Vec<String>,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
pub struct EfficiencyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shared: Shared,
    /// Coordinates with known margins, e.g. "" or "1,3".
    #[arg(long = "V", default_value = "")]
    #[serde(rename = "V")]
    pub v: String,
    #[arg(long, default_value = "lebesgue")]
    pub measure: String,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
pub struct EigenArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    #[serde(flatten)]
    pub sel: FamilySel,
    /// Gauss–Legendre nodes per axis; a run at half this size gives the error estimate.
    #[arg(long = "grid-n", default_value_t = 32)]
    pub grid_n: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum StatName {
    B,
    Bhat,
    Rho,
    Gini,
    Footrule,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
pub struct StatArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shared: Shared,
    #[arg(long, value_enum, ignore_case = true)]
    pub name: StatName,
    /// Known-margin coordinates for B.
    #[arg(long = "V", default_value = "")]
    #[serde(rename = "V")]
    pub v: String,
    /// Power p of B^p and B̂^p.
    #[arg(long, default_value_t = 1)]
    pub p: u32,
    /// Cells per axis for p ≥ 2; defaults by dimension.
    #[arg(long = "grid-n")]
    pub grid_n: Option<usize>,
    /// CSV file, one observation per row, optional header.
    #[arg(long)]
    pub input: PathBuf,
    /// Replace the data by ranks/(n+1) before computing.
    #[arg(long)]
    #[serde(default)]
    pub pit: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Covariance of W_{V,n} on a grid.
    Cov,
    /// Covariance of the tied-down process on a grid.
    Tiedcov,
    /// Draws of the Gaussian field with the family's covariance.
    Field,
    /// Null distribution of a statistic.
    Nulldist,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shared: Shared,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long = "V", default_value = "")]
    #[serde(rename = "V")]
    pub v: String,
    /// Sample size per replication.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Replications (draws for field mode).
    #[arg(long = "R", default_value_t = 1000)]
    #[serde(rename = "R")]
    pub r: usize,
    /// Interior grid points per axis.
    #[arg(long = "grid-n", default_value_t = 4)]
    pub grid_n: usize,
    /// Statistic for nulldist: bhat1, b1, rho, gini, footrule.
    #[arg(long, default_value = "bhat1")]
    pub statistic: String,
    /// Kernel for field mode; defaults to the family for V.
    #[command(flatten)]
    #[serde(flatten)]
    pub sel: FamilySel,
}

pub struct Outcome {
    pub result: Value,
    pub table: Option<Table>,
}

fn scalar(result: Value) -> Outcome {
    Outcome { result, table: None }
}

fn need_m(shared: &Shared) -> Result<usize, Failure> {
    shared.m.ok_or_else(|| Failure::invalid("--m is required"))
}

fn resolve_family(sel: &FamilySel, m: usize) -> Result<MonotoneFamily, Failure> {
    match (&sel.family, &sel.known_margins_v) {
        (Some(f), None) => Ok(MonotoneFamily::parse(f, m)?),
        (None, Some(v)) => Ok(family_for_known_margins(SubsetMask::parse(v, m)?, m)?),
        (Some(_), Some(_)) => Err(Failure::invalid("--family and --family-known-margins-V are exclusive")),
        (None, None) => Err(Failure::invalid("one of --family or --family-known-margins-V is required")),
    }
}

fn family_json(f: &MonotoneFamily) -> Value {
    json!(f.to_coord_lists())
}

fn point(text: &str, m: usize) -> Result<CubePoint, Failure> {
    let p = CubePoint::parse(text)?;
    if p.dim() != m {
        return Err(cubegreen::Error::DimensionMismatch { expected: m, got: p.dim() }.into());
    }
    Ok(p)
}

/// Runs the command, inside a pool of `threads` workers when given. Returns
/// the command with defaults that depend on the input filled in.
pub fn execute(command: Command, threads: Option<usize>) -> Result<(Command, Outcome), Failure> {
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Failure::invalid(format!("thread pool: {e}")))?
            .install(|| dispatch(command)),
        None => dispatch(command),
    }
}

fn dispatch(command: Command) -> Result<(Command, Outcome), Failure> {
    let outcome = match &command {
        Command::Family(a) => family(a)?,
        Command::Coeffs(a) => coeffs(a)?,
        Command::GreenEval(a) => green_eval(a)?,
        Command::Lambda(a) => lambda_cmd(a)?,
        Command::Solve(a) => solve(a)?,
        Command::Efficiency(a) => efficiency(a)?,
        Command::Eigen(a) => eigen(a)?,
        Command::Stat(a) => {
            let (resolved, outcome) = stat(a.clone())?;
            return Ok((Command::Stat(resolved), outcome));
        }
        Command::Simulate(a) => simulate(a)?,
    };
    Ok((command, outcome))
}

fn family(a: &FamilyArgs) -> Result<Outcome, Failure> {
    let m = need_m(&a.shared)?;
    if a.enumerate {
        let all = enumerate_monotone_families(m)?;
        let mut table = Table::new(&["index", "size", "family"]);
        for (i, f) in all.iter().enumerate() {
            table.push(vec![i.to_string(), f.len().to_string(), format!("\"{f}\"")]);
        }
        let families: Vec<Value> = all.iter().map(family_json).collect();
        return Ok(Outcome { result: json!({ "m": m, "count": all.len(), "families": families }), table: Some(table) });
    }
    if let Some(list) = &a.check {
        let masks = parse_mask_list(list, m)?;
        let ok = !masks.iter().any(|u| u.is_empty()) && is_monotone(&masks, m)?;
        return Ok(scalar(json!({ "m": m, "monotone": ok })));
    }
    let fam = match &a.generators {
        Some(g) => upward_closure(&parse_mask_list(g, m)?, m)?,
        None => resolve_family(&a.sel, m)?,
    };
    Ok(scalar(json!({
        "m": m,
        "members": family_json(&fam),
        "size": fam.len(),
        "display": fam.to_string(),
    })))
}

fn coeffs(a: &KernelArgs) -> Result<Outcome, Failure> {
    let m = need_m(&a.shared)?;
    let kernel = GreenKernel::new(&resolve_family(&a.sel, m)?);
    let mut map = Map::new();
    let mut table = Table::new(&["set", "a"]);
    for (u, c) in kernel.terms() {
        map.insert(u.to_string(), json!(c));
        table.push(vec![format!("\"{u}\""), c.to_string()]);
    }
    Ok(Outcome {
        result: json!({ "m": m, "family": family_json(kernel.family()), "a": map }),
        table: Some(table),
    })
}

fn green_eval(a: &GreenEvalArgs) -> Result<Outcome, Failure> {
    let m = need_m(&a.shared)?;
    let kernel = GreenKernel::new(&resolve_family(&a.sel, m)?);
    let value = kernel.evaluate(&point(&a.x, m)?, &point(&a.xi, m)?)?;
    Ok(scalar(json!({ "value": value })))
}

fn lambda_cmd(a: &LambdaArgs) -> Result<Outcome, Failure> {
    let m = need_m(&a.shared)?;
    let kernel = GreenKernel::new(&resolve_family(&a.sel, m)?);
    let mu = MeasureSpec::parse(&a.measure, m)?;
    let value = lambda(&kernel, &mu)?;
    let closed = lambda_closed_form(&kernel, &mu)?;
    Ok(scalar(json!({
        "lambda": value,
        "inverse_lambda": 1.0 / value,
        "method": if closed.is_some() { "closed-form" } else { "quadrature" },
        "measure": mu.to_json(),
    })))
}

fn solve(a: &SolveArgs) -> Result<Outcome, Failure> {
    let m = need_m(&a.shared)?;
    let fam = resolve_family(&a.sel, m)?;
    let mu = MeasureSpec::parse(&a.measure, m)?;
    let sol = extremal::solve(&fam, &mu)?;
    let mut header: Vec<String> = (1..=m).map(|j| format!("x{j}")).collect();
    header.extend(["omega".into(), "mixed_derivative".into()]);
    let mut table = Table { header, rows: Vec::new() };
    let mut samples = Vec::new();
    for text in a.eval_at.iter().filter(|t| !t.trim().is_empty()) {
        let x = point(text, m)?;
        let (value, density) = (sol.omega(&x)?, sol.omega_mixed_derivative(&x)?);
        let mut row: Vec<String> = x.coords().iter().map(|&c| num(c)).collect();
        row.extend([num(value), num(density)]);
        table.push(row);
        samples.push(json!({ "x": x.coords(), "omega": value, "mixed_derivative": density }));
    }
    Ok(Outcome {
        result: json!({
            "lambda": sol.lambda(),
            "inverse_lambda": 1.0 / sol.lambda(),
            "minimal_norm_squared": minimal_norm_squared(&sol),
            "normalization": sol.normalization(),
            "omega": samples,
        }),
        table: Some(table),
    })
}

fn efficiency(a: &EfficiencyArgs) -> Result<Outcome, Failure> {
    let m = need_m(&a.shared)?;
    let v = SubsetMask::parse(&a.v, m)?;
    let fam = family_for_known_margins(v, m)?;
    let mu = MeasureSpec::parse(&a.measure, m)?;
    let coefficient = efficiency_coefficient(&fam, &mu)?;
    Ok(scalar(json!({
        "V": v.to_string(),
        "family": family_json(&fam),
        "coefficient": coefficient,
        "lambda": 1.0 / coefficient,
    })))
}

fn eigen(a: &EigenArgs) -> Result<Outcome, Failure> {
    let m = need_m(&a.shared)?;
    let kernel = GreenKernel::new(&resolve_family(&a.sel, m)?);
    let report = principal_eigenvalue_report(&kernel, a.grid_n)?;
    Ok(scalar(serde_json::to_value(report).expect("report is serializable")))
}

fn stat(mut a: StatArgs) -> Result<(StatArgs, Outcome), Failure> {
    let mut data = Dataset::from_csv_path(&a.input)?;
    let m = data.m();
    if let Some(given) = a.shared.m {
        if given != m {
            return Err(cubegreen::Error::DimensionMismatch { expected: given, got: m }.into());
        }
    }
    a.shared.m = Some(m);
    if a.pit {
        data = data.rank_pit()?;
    }
    let grid_n = *a.grid_n.get_or_insert(default_grid_n(m));
    let value = match a.name {
        StatName::B => statistics::stat_b(&data, SubsetMask::parse(&a.v, m)?, a.p, grid_n)?,
        StatName::Bhat => statistics::stat_bhat(&data, a.p, grid_n)?,
        StatName::Rho => statistics::spearman_rho(&data)?,
        StatName::Gini => statistics::gini_coefficient(&data)?,
        StatName::Footrule => statistics::footrule(&data)? as f64,
    };
    let value = if a.name == StatName::Footrule { json!(value as u64) } else { json!(value) };
    let outcome = scalar(json!({ "name": a.name, "n": data.n(), "m": m, "value": value }));
    Ok((a, outcome))
}

fn covariance_outcome(report: &CovarianceReport, grid: &[CubePoint]) -> Outcome {
    let mut table = Table::new(&["a", "b", "empirical", "theoretical", "standard_error"]);
    for i in 0..grid.len() {
        for j in i..grid.len() {
            table.push(vec![
                i.to_string(),
                j.to_string(),
                num(report.empirical[i][j]),
                num(report.theoretical[i][j]),
                num(report.standard_errors[i][j]),
            ]);
        }
    }
    let mut result = serde_json::to_value(report).expect("report is serializable");
    result["grid"] = json!(grid);
    Outcome { result, table: Some(table) }
}

fn simulate(a: &SimulateArgs) -> Result<Outcome, Failure> {
    let m = need_m(&a.shared)?;
    let v = SubsetMask::parse(&a.v, m)?;
    let base = SimConfig::new(a.shared.seed, a.n, a.r, m).with_v(v);
    match a.mode {
        Mode::Cov | Mode::Tiedcov => {
            let grid = interior_grid(m, a.grid_n)?;
            let cfg = base.with_grid(grid.clone());
            let report = if a.mode == Mode::Cov {
                simulate_null_covariance(&cfg)?
            } else {
                simulate_tied_down_covariance(&cfg)?
            };
            Ok(covariance_outcome(&report, &grid))
        }
        Mode::Field => {
            base.validate()?;
            let fam = if a.sel.family.is_some() || a.sel.known_margins_v.is_some() {
                resolve_family(&a.sel, m)?
            } else {
                family_for_known_margins(v, m)?
            };
            let kernel = GreenKernel::new(&fam);
            let grid = interior_grid(m, a.grid_n)?;
            let draws = sample_gaussian_field(&kernel, &grid, a.r, a.shared.seed, None)?;
            let mut header = vec!["draw".to_string()];
            header.extend((0..grid.len()).map(|i| format!("p{i}")));
            let mut table = Table { header, rows: Vec::new() };
            for (s, d) in draws.iter().enumerate() {
                let mut row = vec![s.to_string()];
                row.extend(d.iter().map(|&x| num(x)));
                table.push(row);
            }
            let g = grid.len();
            let r = draws.len() as f64;
            let max_cov_dev = (0..g)
                .flat_map(|i| (i..g).map(move |j| (i, j)))
                .map(|(i, j)| {
                    let emp = draws.iter().map(|d| d[i] * d[j]).sum::<f64>() / r;
                    (emp - kernel.eval(grid[i].coords(), grid[j].coords())).abs()
                })
                .fold(0.0, f64::max);
            Ok(Outcome {
                result: json!({
                    "family": family_json(&fam),
                    "grid": grid,
                    "draws": draws,
                    "max_abs_covariance_deviation": max_cov_dev,
                }),
                table: Some(table),
            })
        }
        Mode::Nulldist => {
            let stat: NullStatistic = a.statistic.parse()?;
            let values = null_values(stat, &base)?;
            let summary = null_distribution(stat, &base)?;
            let mut table = Table::new(&["replication", "value"]);
            for (i, x) in values.iter().enumerate() {
                table.push(vec![i.to_string(), num(*x)]);
            }
            Ok(Outcome { result: serde_json::to_value(summary).expect("summary is serializable"), table: Some(table) })
        }
    }
}
