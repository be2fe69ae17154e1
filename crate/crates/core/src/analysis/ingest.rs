//! Reading shot records back from the exported CSV layout.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::montecarlo::{Dataset, ParityClass, ShotRecord, CSV_HEADER};
use crate::transmon::Parity;

fn parse_err(line: u64, column: &str, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column: column.to_string(),
        reason: reason.into(),
    }
}

pub fn ingest_shot_records(path: impl AsRef<Path>) -> Result<Dataset> {
    read_shot_records(File::open(path)?)
}

/// Parses shot records. Line numbers in errors are 1-based file lines.
pub fn read_shot_records<R: Read>(input: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut rows = rdr.records();
    let header = match rows.next() {
        None => return Err(parse_err(1, CSV_HEADER[0], "missing header")),
        Some(r) => r.map_err(|e| parse_err(1, CSV_HEADER[0], e.to_string()))?,
    };
    for (i, want) in CSV_HEADER.iter().enumerate() {
        match header.get(i) {
            Some(got) if got.trim() == *want => {}
            Some(got) => return Err(parse_err(1, want, format!("expected header `{want}`, found `{got}`"))),
            None => return Err(parse_err(1, want, "missing column")),
        }
    }
    if let Some(extra) = header.get(CSV_HEADER.len()) {
        return Err(parse_err(1, extra, "unexpected column"));
    }

    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, CSV_HEADER[0], e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if row.len() != CSV_HEADER.len() {
            let col = CSV_HEADER.get(row.len()).copied().unwrap_or("seed_index");
            return Err(parse_err(line, col, format!("expected {} fields, found {}", CSV_HEADER.len(), row.len())));
        }
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let delay: f64 = field(0)
            .parse()
            .ok()
            .filter(|d: &f64| *d >= 0.0 && d.is_finite())
            .ok_or_else(|| parse_err(line, "delay_us", format!("invalid delay `{}`", field(0))))?;
        let parity = |i: usize| {
            Parity::from_symbol(field(i))
                .ok_or_else(|| parse_err(line, CSV_HEADER[i], format!("parity must be + or -, got `{}`", field(i))))
        };
        let p_i = parity(1)?;
        let p_f = parity(2)?;
        let class = ParityClass::from_name(field(3))
            .ok_or_else(|| parse_err(line, "class", format!("unknown class `{}`", field(3))))?;
        let outcome = match field(4) {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(line, "outcome", format!("expected 0 or 1, got `{other}`"))),
        };
        let true_flips: u32 = field(5)
            .parse()
            .map_err(|_| parse_err(line, "true_flips", format!("invalid count `{}`", field(5))))?;
        let seed_index: u64 = field(6)
            .parse()
            .map_err(|_| parse_err(line, "seed_index", format!("invalid index `{}`", field(6))))?;
        let rec = ShotRecord {
            delay,
            p_i,
            p_f,
            outcome,
            true_flips,
            seed_index,
        };
        if rec.class() != class {
            return Err(parse_err(
                line,
                "class",
                format!("`{}` contradicts parities {}{}", class.name(), p_i.symbol(), p_f.symbol()),
            ));
        }
        records.push(rec);
    }
    Ok(Dataset::new(records))
}
