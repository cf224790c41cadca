//! Column-oriented CSV tables of floating-point data.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Named numeric columns of equal length; empty cells and `NA` read as NaN.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DataTable {
    names: Vec<String>,
    columns: BTreeMap<String, Vec<f64>>,
    rows: usize,
}

impl DataTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_column(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.push(name, values)?;
        Ok(self)
    }

    pub fn push(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if !self.names.is_empty() && values.len() != self.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, got: values.len() });
        }
        if self.columns.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate column {name}")));
        }
        self.rows = values.len();
        self.names.push(name.to_string());
        self.columns.insert(name.to_string(), values);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(|v| v.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.get(name).ok_or_else(|| Error::Config(format!("data has no column '{name}'")))
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let names: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
        let mut cols = vec![Vec::new(); names.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (c, field) in rec.iter().enumerate() {
                let v = if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
                    f64::NAN
                } else {
                    field.parse::<f64>().map_err(|_| {
                        Error::Parse(format!("row {}: cannot parse '{field}' in column {}", line + 1, names[c]))
                    })?
                };
                cols[c].push(v);
            }
        }
        let mut t = DataTable::new();
        for (name, col) in names.iter().zip(cols) {
            t.push(name, col)?;
        }
        Ok(t)
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read(f)
    }

    /// Writes the table with a header row; NaN cells are left empty.
    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.names)?;
        for r in 0..self.rows {
            let rec: Vec<String> = self
                .names
                .iter()
                .map(|n| {
                    let v = self.columns[n][r];
                    if v.is_nan() {
                        String::new()
                    } else {
                        format_float(v)
                    }
                })
                .collect();
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.write(std::io::BufWriter::new(f))
    }
}

/// Shortest representation that reads back to the same `f64`.
pub fn format_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}
