//! Study orchestration, file formats and the `korteweg` command line.

pub mod cli;
pub mod config;
pub mod io;
pub mod study;

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One row of `abar.csv`: row `i` of the permeability tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbarRow {
    pub i: usize,
    pub a_i1: f64,
    pub a_i2: f64,
    pub config_hash: String,
}

pub fn write_abar(path: &Path, a: [[f64; 2]; 2], hash: &str) -> Result<()> {
    let rows: Vec<AbarRow> =
        (0..2).map(|i| AbarRow { i: i + 1, a_i1: a[i][0], a_i2: a[i][1], config_hash: hash.to_string() }).collect();
    io::write_csv(path, &rows)
}

pub fn read_abar(path: &Path) -> Result<[[f64; 2]; 2]> {
    let rows: Vec<AbarRow> = io::read_csv(path)?;
    let mut a = [[f64::NAN; 2]; 2];
    for r in &rows {
        if !(1..=2).contains(&r.i) {
            return Err(Error::parse("abar csv", format!("row index {} outside 1..=2", r.i)));
        }
        a[r.i - 1] = [r.a_i1, r.a_i2];
    }
    if a.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::parse("abar csv", "expected rows i = 1 and i = 2"));
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abar.csv");
        let a = [[0.1, 1e-17], [-2e-17, 0.1 + 1e-15]];
        write_abar(&p, a, "abc").unwrap();
        assert_eq!(read_abar(&p).unwrap(), a);
        io::write_text(&p, "i,a_i1,a_i2,config_hash\n1,0.1,0,x\n").unwrap();
        assert!(read_abar(&p).is_err());
    }
}
