//! Writers for report.json, timings.json and the CSV tables.

use std::fs;
use std::path::Path;

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::CliError;

/// A real written with 17 significant digits; non-finite values become
/// `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw =
            RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

pub fn num(x: f64) -> Num {
    Num(x)
}

pub fn opt(x: Option<f64>) -> Option<Num> {
    x.map(Num)
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

/// Named columns of equal length written as CSV with a header row. Values
/// use the shortest representation that parses back to the same `f64`.
#[derive(Debug, Default)]
pub struct Table {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(mut self, name: &str, values: impl IntoIterator<Item = f64>) -> Self {
        self.names.push(name.into());
        self.columns.push(values.into_iter().collect());
        self
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let rows = self.columns.first().map_or(0, Vec::len);
        debug_assert!(self.columns.iter().all(|c| c.len() == rows));
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.names)?;
        for r in 0..rows {
            let row: Vec<f64> = self.columns.iter().map(|c| c[r]).collect();
            w.serialize(row)?;
        }
        w.flush()
            .map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_seventeen_digits() {
        let s = serde_json::to_string(&[num(0.1), num(-1.0 / 3.0), num(f64::NAN)]).unwrap();
        assert_eq!(s, "[1.0000000000000001e-1,-3.3333333333333331e-1,null]");
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0], Some(0.1));
        assert_eq!(back[1], Some(-1.0 / 3.0));
    }
}
