//! File formats.
//!
//! * MASK: the text line `MASK nx ny h\n`, then `nx * ny` bytes in row-major
//!   order, 1 for fluid and 0 for solid.
//! * FIELD: the text line `FIELD name nx ny h t\n`, one comment line starting
//!   with `#` (may be just `#`), then `nx * ny` little-endian f64 values in
//!   row-major order. Floats in headers use Rust's shortest round-trip format.
//! * CSV: RFC 4180 with a header row.

use crate::grid::Grid;
use crate::{Error, Result};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Split off the first `\n`-terminated line as UTF-8.
fn take_line<'a>(bytes: &'a [u8], what: &str) -> Result<(&'a str, &'a [u8])> {
    let end = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::parse(what, "missing header line"))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::parse(what, "header is not UTF-8"))?;
    Ok((line, &bytes[end + 1..]))
}

fn num<T: std::str::FromStr>(tok: Option<&str>, what: &str, field: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::parse(what, format!("bad or missing {field} in header")))
}

pub fn write_mask(path: &Path, grid: &Grid, fluid: &[bool]) -> Result<()> {
    let mut out = format!("MASK {} {} {}\n", grid.nx, grid.ny, grid.h).into_bytes();
    out.extend(fluid.iter().map(|&f| f as u8));
    std::fs::write(path, out).map_err(io_err(path))
}

pub fn read_mask(path: &Path) -> Result<(usize, usize, f64, Vec<bool>)> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    parse_mask(&bytes)
}

pub fn parse_mask(bytes: &[u8]) -> Result<(usize, usize, f64, Vec<bool>)> {
    let (line, body) = take_line(bytes, "MASK")?;
    let mut t = line.split_ascii_whitespace();
    if t.next() != Some("MASK") {
        return Err(Error::parse("MASK", "header must start with MASK"));
    }
    let nx: usize = num(t.next(), "MASK", "nx")?;
    let ny: usize = num(t.next(), "MASK", "ny")?;
    let h: f64 = num(t.next(), "MASK", "h")?;
    if body.len() != nx * ny {
        return Err(Error::parse("MASK", format!("payload has {} bytes, header says {}", body.len(), nx * ny)));
    }
    if let Some(b) = body.iter().find(|&&b| b > 1) {
        return Err(Error::parse("MASK", format!("byte {b} is neither 0 nor 1")));
    }
    Ok((nx, ny, h, body.iter().map(|&b| b == 1).collect()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub name: String,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub t: f64,
    /// Comment text after `#`, without the newline.
    pub comment: String,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(name: &str, grid: &Grid, t: f64, comment: &str, values: Vec<f64>) -> Self {
        Field { name: name.to_string(), nx: grid.nx, ny: grid.ny, h: grid.h, t, comment: comment.to_string(), values }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.name.is_empty() || self.name.chars().any(|c| c.is_whitespace()) {
            return Err(Error::config(format!("field name {:?} must be one non-empty token", self.name)));
        }
        if self.comment.contains('\n') {
            return Err(Error::config("field comment must be a single line"));
        }
        if self.values.len() != self.nx * self.ny {
            return Err(Error::config("field payload does not match its dimensions"));
        }
        let mut out = format!("FIELD {} {} {} {} {}\n#", self.name, self.nx, self.ny, self.h, self.t).into_bytes();
        if !self.comment.is_empty() {
            out.push(b' ');
            out.extend(self.comment.as_bytes());
        }
        out.push(b'\n');
        out.reserve(8 * self.values.len());
        for v in &self.values {
            out.extend(v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (line, rest) = take_line(bytes, "FIELD")?;
        let mut t = line.split_ascii_whitespace();
        if t.next() != Some("FIELD") {
            return Err(Error::parse("FIELD", "header must start with FIELD"));
        }
        let name = t.next().ok_or_else(|| Error::parse("FIELD", "missing name"))?.to_string();
        let nx: usize = num(t.next(), "FIELD", "nx")?;
        let ny: usize = num(t.next(), "FIELD", "ny")?;
        let h: f64 = num(t.next(), "FIELD", "h")?;
        let time: f64 = num(t.next(), "FIELD", "t")?;
        if t.next().is_some() {
            return Err(Error::parse("FIELD", "trailing tokens in header"));
        }
        let (comment, body) = take_line(rest, "FIELD")?;
        let comment = comment
            .strip_prefix('#')
            .ok_or_else(|| Error::parse("FIELD", "second line must be a # comment"))?;
        let comment = comment.strip_prefix(' ').unwrap_or(comment).to_string();
        if body.len() != 8 * nx * ny {
            return Err(Error::parse("FIELD", format!("payload has {} bytes, expected {}", body.len(), 8 * nx * ny)));
        }
        let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Field { name, nx, ny, h, t: time, comment, values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(io_err(path))?)
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse("csv", format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::parse("csv", e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse("csv", format!("{}: {e}", path.display())))?;
    let rows = r
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse("csv", format!("{} row {}: {e}", path.display(), i + 1))))
        .collect::<Result<Vec<T>>>()?;
    if rows.is_empty() {
        return Err(Error::parse("csv", format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub files: Vec<String>,
    pub timings: Vec<Timing>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

impl Manifest {
    pub fn new(command: &str, config_hash: String) -> Self {
        Manifest {
            command: command.to_string(),
            config_hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            files: Vec::new(),
            timings: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn time(&mut self, stage: &str, seconds: f64) {
        self.timings.push(Timing { stage: stage.to_string(), seconds });
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Internal(e.to_string()))?;
        write_text(&dir.join("manifest.toml"), &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[test]
    fn field_roundtrip_is_bit_exact() {
        let g = Grid::new(3, 2, 0.1, 0.0, 0.0);
        let vals = vec![0.1, -2.5e-300, f64::MAX, 1.0 / 3.0, 0.0, -0.0];
        let f = Field::new("rho_hat", &g, 0.30000000000000004, "extension=mean_value eps=0.25", vals.clone());
        let bytes = f.to_bytes().unwrap();
        assert!(bytes.starts_with(b"FIELD rho_hat 3 2 0.1 0.30000000000000004\n# extension=mean_value eps=0.25\n"));
        let back = Field::from_bytes(&bytes).unwrap();
        assert_eq!(back, f);
        assert!(back.values.iter().zip(&vals).all(|(a, b)| a.to_bits() == b.to_bits()));
        let bare = Field { comment: String::new(), ..f.clone() };
        assert_eq!(Field::from_bytes(&bare.to_bytes().unwrap()).unwrap(), bare);
    }

    #[test]
    fn malformed_fields_rejected() {
        let g = Grid::unit(2);
        let good = Field::new("x", &g, 0.0, "", vec![1.0; 4]).to_bytes().unwrap();
        assert!(Field::from_bytes(&good[..good.len() - 1]).is_err());
        assert!(Field::from_bytes(b"FIELD x 2 2 0.5\n#\n").is_err());
        assert!(Field::from_bytes(b"FIELD x 1 1 0.5 0\nno comment\n\0\0\0\0\0\0\0\0").is_err());
        assert!(Field::new("two words", &g, 0.0, "", vec![0.0; 4]).to_bytes().is_err());
    }

    #[test]
    fn mask_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::unit(4);
        let fluid: Vec<bool> = (0..16).map(|k| k % 3 != 0).collect();
        let p = dir.path().join("m.mask");
        write_mask(&p, &g, &fluid).unwrap();
        assert_eq!(read_mask(&p).unwrap(), (4, 4, 0.25, fluid));
        assert!(parse_mask(b"MASK 2 2 0.5\n\x01\x00\x02\x01").is_err());
        assert!(parse_mask(b"MASK 2 2 0.5\n\x01").is_err());
    }

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct Row {
        name: String,
        v: f64,
    }

    #[test]
    fn csv_quotes_and_rejects_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![Row { name: "a,\"b\"".into(), v: 0.1 }, Row { name: "plain".into(), v: -1e-300 }];
        write_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("name,v\n\"a,\"\"b\"\"\",0.1\n"));
        assert_eq!(read_csv::<Row>(&p).unwrap(), rows);
        write_text(&p, "name,v\n").unwrap();
        let e = read_csv::<Row>(&p).unwrap_err();
        assert!(e.to_string().contains("no data rows"));
    }
}
