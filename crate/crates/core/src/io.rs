//! Versioned CSV files for designs, weights and result tables.
//!
//! Every file starts with a metadata line
//! `# schema=1 config_hash=<hex> seed=<u64>`, followed by a header row.
//! Design files use the columns `x1,...,xd`, optionally `w` and `pruned`.

use std::io::{Read, Write};

use crate::design::Design;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FileMeta {
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
}

impl FileMeta {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        FileMeta { schema: SCHEMA_VERSION, config_hash: config_hash.into(), seed }
    }

    fn line(&self) -> String {
        format!("# schema={} config_hash={} seed={}\n", self.schema, self.config_hash, self.seed)
    }

    fn parse(line: &str) -> Result<Self> {
        let mut schema = None;
        let mut hash = String::new();
        let mut seed = 0;
        for field in line.trim_start_matches('#').split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| Error::Parse(format!("bad metadata field {field:?}")))?;
            match k {
                "schema" => schema = Some(v.parse::<u32>().map_err(|e| Error::Parse(format!("schema: {e}")))?),
                "config_hash" => hash = v.to_string(),
                "seed" => seed = v.parse().map_err(|e| Error::Parse(format!("seed: {e}")))?,
                _ => {}
            }
        }
        let schema = schema.ok_or_else(|| Error::Parse("metadata line without schema".into()))?;
        if schema != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(schema));
        }
        Ok(FileMeta { schema, config_hash: hash, seed })
    }
}

/// 17 significant digits: enough to read back the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// A CSV table with optional metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub meta: Option<FileMeta>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn write_table<W: Write>(mut out: W, meta: &FileMeta, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    out.write_all(meta.line().as_bytes())?;
    let mut w = csv::WriterBuilder::new().flexible(false).from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::DimensionMismatch { expected: header.len(), got: row.len() });
        }
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table<R: Read>(mut input: R) -> Result<Table> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let (meta, body) = match text.strip_prefix('#') {
        Some(_) => {
            let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
            (Some(FileMeta::parse(first)?), rest)
        }
        None => (None, text.as_str()),
    };
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect::<Vec<_>>();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse("missing header row".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok(Table { meta, header, rows })
}

/// A design with optional weights and pruning flags.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignFile {
    pub meta: Option<FileMeta>,
    pub design: Design,
    pub weights: Option<Vec<f64>>,
    pub pruned: Option<Vec<bool>>,
}

pub fn write_design<W: Write>(
    out: W,
    meta: &FileMeta,
    design: &Design,
    weights: Option<&[f64]>,
    pruned: Option<&[bool]>,
) -> Result<()> {
    let d = design.dim();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    for (col, len) in [("w", weights.map(<[f64]>::len)), ("pruned", pruned.map(<[bool]>::len))] {
        if let Some(len) = len {
            if len != design.len() {
                return Err(Error::DimensionMismatch { expected: design.len(), got: len });
            }
            header.push(col.to_string());
        }
    }
    let rows: Vec<Vec<String>> = (0..design.len())
        .map(|i| {
            let mut row: Vec<String> = design.point(i).iter().map(|&v| format_float(v)).collect();
            if let Some(w) = weights {
                row.push(format_float(w[i]));
            }
            if let Some(p) = pruned {
                row.push(if p[i] { "1" } else { "0" }.to_string());
            }
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(out, meta, &header, &rows)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|e| Error::Parse(format!("{s:?}: {e}")))
}

pub fn read_design<R: Read>(input: R) -> Result<DesignFile> {
    let table = read_table(input)?;
    let mut d = 0;
    while table.header.get(d).is_some_and(|h| *h == format!("x{}", d + 1)) {
        d += 1;
    }
    if d == 0 {
        return Err(Error::Parse("design header must start with x1".into()));
    }
    let col = |name: &str| table.header.iter().position(|h| h == name);
    let (w_col, p_col) = (col("w"), col("pruned"));
    let mut coords = Vec::with_capacity(table.rows.len() * d);
    let mut weights = w_col.map(|_| Vec::new());
    let mut pruned = p_col.map(|_| Vec::new());
    for row in &table.rows {
        for v in &row[..d] {
            coords.push(parse_f64(v)?);
        }
        if let (Some(c), Some(w)) = (w_col, weights.as_mut()) {
            w.push(parse_f64(&row[c])?);
        }
        if let (Some(c), Some(p)) = (p_col, pruned.as_mut()) {
            p.push(match row[c].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(Error::Parse(format!("bad pruned flag {other:?}"))),
            });
        }
    }
    Ok(DesignFile { meta: table.meta, design: Design::from_flat(d, coords)?, weights, pruned })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_round_trip_is_exact() {
        let d = Design::from_points(2, &[[0.1, 1.0 / 3.0], [0.0, 0.999_999_999_999_999_9]]).unwrap();
        let w = [0.123_456_789_012_345_68, -2.5e-17];
        let meta = FileMeta::new("abc", 7);
        let mut buf = Vec::new();
        write_design(&mut buf, &meta, &d, Some(&w), Some(&[false, true])).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema=1 config_hash=abc seed=7\nx1,x2,w,pruned\n"));
        let back = read_design(buf.as_slice()).unwrap();
        assert_eq!(back.design, d);
        assert_eq!(back.weights.unwrap(), w.to_vec());
        assert_eq!(back.pruned.unwrap(), vec![false, true]);
        assert_eq!(back.meta, Some(meta));
    }

    #[test]
    fn empty_design_keeps_header() {
        let mut buf = Vec::new();
        write_design(&mut buf, &FileMeta::new("h", 1), &Design::empty(3), None, None).unwrap();
        let back = read_design(buf.as_slice()).unwrap();
        assert_eq!(back.design.dim(), 3);
        assert!(back.design.is_empty());
    }

    #[test]
    fn unknown_schema_is_rejected() {
        let text = "# schema=2 config_hash=x seed=1\nx1\n0.5\n";
        assert!(matches!(read_design(text.as_bytes()), Err(Error::SchemaVersion(2))));
        let plain = "x1,x2\n0.5,0.25\n";
        let f = read_design(plain.as_bytes()).unwrap();
        assert_eq!(f.meta, None);
        assert_eq!(f.design.point(0), &[0.5, 0.25]);
        assert!(read_design("a,b\n1,2\n".as_bytes()).is_err());
    }
}
