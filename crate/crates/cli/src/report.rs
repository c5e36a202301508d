use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Rows for CSV output. Cells are already formatted.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// 17 significant digits, enough to read the same `f64` back.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => num(n.as_f64().unwrap_or(f64::NAN)),
        Value::Number(n) => n.to_string(),
        Value::String(s) => quote(s),
        other => quote(&other.to_string()),
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// JSON: the whole report, pretty-printed. CSV: the configuration and timing
/// as `#` comment lines, then the command's table or, failing that, one
/// `key,value` row per top-level result field.
pub fn render(doc: &Value, table: Option<&Table>, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(doc).expect("report is serializable");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut out = String::new();
            out.push_str(&format!("# command: {}\n", doc["command"].as_str().unwrap_or("")));
            out.push_str(&format!("# config: {}\n", doc["config"]));
            out.push_str(&format!("# timing: {}\n", doc["timing"]));
            match table {
                Some(t) => {
                    out.push_str(&t.header.join(","));
                    out.push('\n');
                    for row in &t.rows {
                        out.push_str(&row.join(","));
                        out.push('\n');
                    }
                }
                None => {
                    out.push_str("key,value\n");
                    if let Value::Object(map) = &doc["result"] {
                        for (k, v) in map {
                            out.push_str(&format!("{},{}\n", quote(k), csv_cell(v)));
                        }
                    }
                }
            }
            out
        }
    }
}
