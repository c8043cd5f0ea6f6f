//! Plain-text point-set files.
//!
//! ```text
//! n d delta [norm]
//! x_1 ... x_d
//! ...
//! ```
//!
//! `norm` is one of `l1`, `l2`, `hamming` and defaults to `l1` when absent.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{ReconError, Result};
use crate::geometry::{GridSpec, Norm, Point, PointSet};

fn parse_err(line: usize, msg: impl Into<String>) -> ReconError {
    ReconError::Parse { line, msg: msg.into() }
}

pub fn read_point_set<R: Read>(reader: R) -> Result<PointSet> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if !(3..=4).contains(&fields.len()) {
        return Err(parse_err(1, "header must be `n d delta [norm]`"));
    }
    let num = |s: &str, what: &str| -> Result<u64> {
        s.parse().map_err(|_| parse_err(1, format!("bad {what} `{s}`")))
    };
    let n = num(fields[0], "point count")? as usize;
    let dim = num(fields[1], "dimension")? as usize;
    let delta = u32::try_from(num(fields[2], "delta")?)
        .map_err(|_| parse_err(1, "delta does not fit in 32 bits"))?;
    let norm = match fields.get(3) {
        Some(s) => s.parse::<Norm>().map_err(|e| parse_err(1, e.to_string()))?,
        None => Norm::L1,
    };
    let space = GridSpec::new(delta, dim, norm).map_err(|e| parse_err(1, e.to_string()))?;

    let mut points = Vec::with_capacity(n);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if points.len() == n {
            return Err(parse_err(lineno, format!("more than {n} points")));
        }
        let coords = line
            .split_whitespace()
            .map(|tok| {
                let v: u64 =
                    tok.parse().map_err(|_| parse_err(lineno, format!("bad coordinate `{tok}`")))?;
                if v > delta as u64 {
                    return Err(parse_err(lineno, format!("coordinate {v} exceeds delta {delta}")));
                }
                Ok(v as u32)
            })
            .collect::<Result<Vec<u32>>>()?;
        if coords.len() != dim {
            return Err(parse_err(
                lineno,
                format!("expected {dim} coordinates, found {}", coords.len()),
            ));
        }
        points.push(Point::new(coords));
    }
    if points.len() != n {
        return Err(parse_err(n + 1, format!("expected {n} points, found {}", points.len())));
    }
    PointSet::new(space, points)
}

pub fn write_point_set<W: Write>(set: &PointSet, mut out: W) -> Result<()> {
    let space = set.space();
    writeln!(out, "{} {} {} {}", set.len(), space.dim(), space.delta(), space.norm())?;
    let mut line = String::new();
    for p in set {
        line.clear();
        for (i, c) in p.coords().iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&c.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn load_point_set(path: impl AsRef<Path>) -> Result<PointSet> {
    read_point_set(fs::File::open(path)?)
}

pub fn save_point_set(set: &PointSet, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_point_set(set, &mut f)?;
    f.flush()?;
    Ok(())
}
