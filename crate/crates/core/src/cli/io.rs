//! Reading and writing the files exchanged between subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};
use crate::series_space::{ObservedSeries, SupportClass};

/// Provenance line written at the top of every CSV output.
pub fn provenance_line(seed: u64, config_hash: &str) -> String {
    format!("# seed={seed} config_hash={config_hash}")
}

/// Reads a single-column or multi-column CSV series.
///
/// Lines starting with `#` are skipped. A first row that does not parse as
/// numbers is a header; the column named `x` is used when present, otherwise
/// the last column.
pub fn read_series(path: &Path, support: SupportClass) -> Result<ObservedSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut column: Option<usize> = None;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(e.to_string()))?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if values.is_empty() && column.is_none() && record.iter().any(|f| f.parse::<f64>().is_err()) {
            column = Some(record.iter().position(|f| f == "x").unwrap_or(record.len() - 1));
            continue;
        }
        let c = column.unwrap_or(record.len() - 1);
        let field = record
            .get(c)
            .ok_or_else(|| Error::Data(format!("line {line}: missing column {}", c + 1)))?;
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Data(format!("line {line}: cannot parse {field:?} as a number")))?;
        support
            .check(v)
            .map_err(|why| Error::Data(format!("line {line}: {why}")))?;
        values.push(v);
    }
    ObservedSeries::new(values, support)
}

/// Writes a series with its provenance line and a `t,x` header.
pub fn write_series(path: &Path, x: &[f64], seed: u64, config_hash: &str) -> Result<()> {
    let mut w = create(path)?;
    let body = (|| {
        writeln!(w, "{}", provenance_line(seed, config_hash))?;
        writeln!(w, "t,x")?;
        for (t, v) in x.iter().enumerate() {
            writeln!(w, "{},{v}", t + 1)?;
        }
        w.flush()
    })();
    body.map_err(|e| Error::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(std::io::Error::from)
        .and_then(|_| writeln!(w))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a JSON file; malformed content is a data error.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Writes comma-separated rows after the provenance line and `header`.
pub fn write_csv(
    path: &Path,
    seed: u64,
    config_hash: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = create(path)?;
    let body = (|| {
        writeln!(w, "{}", provenance_line(seed, config_hash))?;
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    })();
    body.map_err(|e| Error::io(path, e))
}
