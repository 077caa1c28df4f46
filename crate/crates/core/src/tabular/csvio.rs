//! CSV persistence.
//!
//! The header carries one `name:kind` field per column, `kind` being `cat` or
//! `num`. The writer always emits the explicit forms `name:cat{a|b|c}` and
//! `name:num{min;max}` so that supports and bounds survive a round trip; the
//! reader also accepts the bare forms and then infers the support (in order
//! of first appearance) or the bounds (data min and max) from the rows.

use std::path::Path;
use std::sync::Arc;

use super::{ColumnKind, ColumnSchema, Dataset, Schema};
use crate::error::{Error, Result};

enum HeaderKind {
    Cat(Option<Vec<String>>),
    Num(Option<(f64, f64)>),
}

fn parse_error(line: usize, column: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        reason: reason.into(),
    }
}

fn parse_header_field(field: &str, column: usize) -> Result<(String, HeaderKind)> {
    let (name, kind) = field
        .rsplit_once(':')
        .ok_or_else(|| parse_error(1, column, format!("header field `{field}` is not `name:kind`")))?;
    if name.is_empty() {
        return Err(parse_error(1, column, "empty column name"));
    }
    let (tag, body) = match kind.find('{') {
        Some(open) => {
            if !kind.ends_with('}') {
                return Err(parse_error(1, column, format!("unterminated `{{` in `{kind}`")));
            }
            (&kind[..open], Some(&kind[open + 1..kind.len() - 1]))
        }
        None => (kind, None),
    };
    let parsed = match tag {
        "cat" => HeaderKind::Cat(body.map(|b| b.split('|').map(str::to_string).collect())),
        "num" => match body {
            None => HeaderKind::Num(None),
            Some(b) => {
                let (lo, hi) = b
                    .split_once(';')
                    .ok_or_else(|| parse_error(1, column, format!("bounds `{b}` are not `min;max`")))?;
                let lo: f64 = lo
                    .parse()
                    .map_err(|_| parse_error(1, column, format!("bad lower bound `{lo}`")))?;
                let hi: f64 = hi
                    .parse()
                    .map_err(|_| parse_error(1, column, format!("bad upper bound `{hi}`")))?;
                HeaderKind::Num(Some((lo, hi)))
            }
        },
        other => {
            return Err(parse_error(
                1,
                column,
                format!("unknown column kind `{other}` (expected `cat` or `num`)"),
            ))
        }
    };
    Ok((name.to_string(), parsed))
}

fn from_reader<R: std::io::Read>(reader: R, provenance: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(parse_error(1, 1, "missing header row")),
    };
    let header: Vec<(String, HeaderKind)> = header
        .iter()
        .enumerate()
        .map(|(j, f)| parse_header_field(f, j + 1))
        .collect::<Result<_>>()?;

    let mut raw: Vec<(usize, csv::StringRecord)> = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(parse_error(
                line,
                rec.len().min(header.len()) + 1,
                format!("expected {} fields, got {}", header.len(), rec.len()),
            ));
        }
        raw.push((line, rec));
    }

    let mut columns = Vec::with_capacity(header.len());
    for (j, (name, kind)) in header.into_iter().enumerate() {
        let kind = match kind {
            HeaderKind::Cat(Some(support)) => ColumnKind::Categorical { support },
            HeaderKind::Cat(None) => {
                let mut support: Vec<String> = Vec::new();
                for (_, rec) in &raw {
                    if !support.iter().any(|s| s == &rec[j]) {
                        support.push(rec[j].to_string());
                    }
                }
                ColumnKind::Categorical { support }
            }
            HeaderKind::Num(Some((min, max))) => ColumnKind::Continuous { min, max },
            HeaderKind::Num(None) => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (line, rec) in &raw {
                    let x = parse_num(&rec[j], *line, j + 1)?;
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
                if raw.is_empty() {
                    (lo, hi) = (-f64::MAX, f64::MAX);
                } else if lo == hi {
                    (lo, hi) = (lo - 1.0, hi + 1.0);
                }
                ColumnKind::Continuous { min: lo, max: hi }
            }
        };
        columns.push(ColumnSchema { name, kind });
    }
    let schema = Schema::new(columns).map_err(|e| parse_error(1, 1, e.to_string()))?;

    let mut rows = Vec::with_capacity(raw.len());
    for (line, rec) in &raw {
        let mut row = Vec::with_capacity(schema.len());
        for (j, col) in schema.columns().iter().enumerate() {
            let cell = &rec[j];
            let v = match &col.kind {
                ColumnKind::Categorical { support } => {
                    support.iter().position(|s| s == cell).ok_or_else(|| {
                        parse_error(*line, j + 1, format!("`{cell}` is not a category of `{}`", col.name))
                    })? as f64
                }
                ColumnKind::Continuous { min, max } => {
                    let x = parse_num(cell, *line, j + 1)?;
                    if x < *min || x > *max {
                        return Err(parse_error(*line, j + 1, format!("{x} outside [{min}, {max}]")));
                    }
                    x
                }
            };
            row.push(v);
        }
        rows.push(row);
    }
    Ok(Dataset::from_checked(Arc::new(schema), rows, provenance))
}

fn parse_num(cell: &str, line: usize, column: usize) -> Result<f64> {
    match cell.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(parse_error(line, column, format!("`{cell}` is not a finite number"))),
    }
}

/// Parses CSV text (header plus rows).
pub fn parse_csv(text: &str) -> Result<Dataset> {
    from_reader(text.as_bytes(), "csv")
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    from_reader(std::io::BufReader::new(file), &path.display().to_string())
}

fn header_field(col: &ColumnSchema) -> Result<String> {
    match &col.kind {
        ColumnKind::Categorical { support } => {
            if let Some(bad) = support.iter().find(|s| s.contains(['|', '{', '}'])) {
                return Err(Error::InvalidArgument(format!(
                    "category `{bad}` of `{}` cannot be written to a CSV header",
                    col.name
                )));
            }
            Ok(format!("{}:cat{{{}}}", col.name, support.join("|")))
        }
        ColumnKind::Continuous { min, max } => Ok(format!("{}:num{{{min};{max}}}", col.name)),
    }
}

fn to_writer<W: std::io::Write>(ds: &Dataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let header: Vec<String> = ds.schema().columns().iter().map(header_field).collect::<Result<_>>()?;
    wtr.write_record(&header)?;
    for i in 0..ds.len() {
        wtr.write_record(ds.render_row(i).iter().map(ToString::to_string))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn render_csv(ds: &Dataset) -> Result<String> {
    let mut buf = Vec::new();
    to_writer(ds, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv writer emits utf-8 for utf-8 input"))
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    to_writer(ds, std::io::BufWriter::new(file))
}
