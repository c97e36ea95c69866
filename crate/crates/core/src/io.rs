//! File formats: fields as `x,value` CSV, everything else as JSON.
//!
//! Field values are written with 17 significant digits (`{:.16e}`), which is
//! enough for a bit-exact round trip through decimal.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::discretization::{Field, Grid};
use crate::error::{Error, Result};

pub fn field_to_csv(f: &Field) -> String {
    let mut s = String::with_capacity(48 * f.values().len() + 8);
    s.push_str("x,value\n");
    for (x, v) in f.grid().nodes().iter().zip(f.values()) {
        s.push_str(&format!("{x:.16e},{v:.16e}\n"));
    }
    s
}

/// Parses `x,value` CSV; the nodes must be uniformly spaced.
pub fn field_from_csv(text: &str) -> Result<Field> {
    parse_field_lines(text.lines().map(|l| Ok(l.to_string())))
}

fn parse_field_lines(lines: impl Iterator<Item = std::io::Result<String>>) -> Result<Field> {
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with('x')) {
            continue;
        }
        let (x, v) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `x,value`", lineno + 1)))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
        };
        xs.push(parse(x)?);
        vs.push(parse(v)?);
    }
    if xs.len() < 2 {
        return Err(Error::Parse("a field needs at least two rows".into()));
    }
    let grid = Grid::new(xs[0], xs[xs.len() - 1], xs.len())?;
    let tol = 1e-9 * grid.spacing();
    if let Some(i) = xs.iter().enumerate().position(|(i, &x)| (x - grid.node(i)).abs() > tol) {
        return Err(Error::InvalidGrid(format!(
            "row {} has x = {}, expected a uniform node at {}",
            i + 1,
            xs[i],
            grid.node(i)
        )));
    }
    Field::new(grid, vs)
}

pub fn write_field_csv(path: impl AsRef<Path>, f: &Field) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(field_to_csv(f).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_field_csv(path: impl AsRef<Path>) -> Result<Field> {
    let r = BufReader::new(fs::File::open(path)?);
    parse_field_lines(r.lines())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let r = BufReader::new(fs::File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}
