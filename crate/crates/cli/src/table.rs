//! Numeric CSV tables: mandatory header row, '.' decimals, '\n' line endings.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Columns of a numeric CSV file, keyed by lower-cased header name.
pub struct Table {
    columns: HashMap<String, Vec<f64>>,
    rows: usize,
}

impl Table {
    pub fn read(path: &Path, required: &[&str], optional: &[&str]) -> CliResult<Self> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        let mut wanted = Vec::new();
        for &name in required.iter().chain(optional) {
            match headers.iter().position(|h| h == name) {
                Some(i) => wanted.push((name.to_string(), i)),
                None if required.contains(&name) => {
                    return Err(CliError::validation(format!(
                        "{}: missing column `{name}` (header has: {})",
                        path.display(),
                        headers.join(", ")
                    )))
                }
                None => {}
            }
        }
        let mut columns: HashMap<String, Vec<f64>> = wanted.iter().map(|(n, _)| (n.clone(), Vec::new())).collect();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            let line = rec.position().map_or(0, |p| p.line());
            for (name, i) in &wanted {
                let field = rec.get(*i).unwrap_or("");
                let v: f64 = field.parse().map_err(|_| {
                    CliError::validation(format!(
                        "{}: line {line}: column `{name}`: not a number: `{field}`",
                        path.display()
                    ))
                })?;
                columns.get_mut(name).expect("column registered").push(v);
            }
            rows += 1;
        }
        Ok(Self { columns, rows })
    }

    pub fn col(&self, name: &str) -> Vec<f64> {
        self.columns.get(name).cloned().unwrap_or_default()
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| CliError::io(path, e);
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(path, e))?;
    write_file(path, &bytes)
}

pub fn num_row(values: &[f64]) -> Vec<String> {
    values.iter().copied().map(fmt_f64).collect()
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, 1.0, -2.5, 5.645e9, 1e-12, 0.1 + 0.2, 123456.789, -3.3e20] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(5.645e9), "5645000000");
        assert_eq!(fmt_f64(1e-12), "1e-12");
    }

    #[test]
    fn reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "delay,area\n1,2\n2,oops\n").unwrap();
        let err = Table::read(&p, &["delay", "area"], &[]).err().unwrap().to_string();
        assert!(err.contains("line 3"), "{err}");
        std::fs::write(&p, "delay,value\n1,2\n").unwrap();
        let err = Table::read(&p, &["delay", "area"], &[]).err().unwrap().to_string();
        assert!(err.contains("missing column `area`"), "{err}");
    }
}
