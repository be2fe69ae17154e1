//! Tabular results written as CSV or JSON with identical numbers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qparity_core::{fmt9, round_sig9};
use serde_json::{Map, Number, Value as Json};

use crate::config::Format;
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => fmt9(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => u8::from(*b).to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    /// Non-finite numbers become `null`.
    fn json(&self) -> Json {
        match self {
            Cell::Num(x) => Number::from_f64(round_sig9(*x)).map_or(Json::Null, Json::Number),
            Cell::Int(n) => Json::from(*n),
            Cell::Bool(b) => Json::from(u8::from(*b)),
            Cell::Text(s) => Json::from(s.as_str()),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n)
    }
}

impl From<u32> for Cell {
    fn from(n: u32) -> Self {
        Cell::Int(n.into())
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table `{}`", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> CliResult<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns).map_err(std::io::Error::from)?;
        for row in &self.rows {
            out.write_record(row.iter().map(Cell::csv)).map_err(std::io::Error::from)?;
        }
        out.flush()?;
        Ok(())
    }

    /// An array with one object per row, keys in column order.
    pub fn to_json(&self) -> Json {
        Json::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Json> = self.columns.iter().zip(row).map(|(c, v)| (c.to_string(), v.json())).collect();
                    Json::Object(obj)
                })
                .collect(),
        )
    }

    pub fn write(&self, dir: &Path, format: Format) -> CliResult<PathBuf> {
        let path = dir.join(format!("{}.{}", self.name, format.extension()));
        let mut w = BufWriter::new(File::create(&path)?);
        match format {
            Format::Csv => self.write_csv(&mut w)?,
            Format::Json => {
                serde_json::to_writer_pretty(&mut w, &self.to_json()).map_err(std::io::Error::from)?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
        Ok(path)
    }
}
