//! GridFunction files. Both formats describe origin-centered boxes.
//!
//! Text: first line `n N L`, then the samples in row-major order, one grid
//! row per line. Binary: magic `MKGF`, format byte `1`, `n` and `N` as
//! little-endian `u32`, `L` as little-endian `f64`, then the samples.

use std::fmt::Write as _;

use super::GridFunction;
use crate::error::{Error, Result};
use crate::geometry::Grid;

const MAGIC: &[u8; 4] = b"MKGF";
const MAX_DIM: usize = 4;

fn check_exportable(f: &GridFunction) -> Result<()> {
    if !f.grid().bbox().is_origin_centered() {
        return Err(Error::InvalidArgument(
            "grid function files describe origin-centered boxes only".into(),
        ));
    }
    Ok(())
}

fn make_grid(n: usize, npa: usize, l: f64) -> Result<Grid> {
    if n == 0 || n > MAX_DIM {
        return Err(Error::Parse(format!("unsupported dimension {n}")));
    }
    Grid::centered(n, l, npa).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_grid_text(f: &GridFunction) -> Result<String> {
    check_exportable(f)?;
    let g = f.grid();
    let npa = g.points_per_axis();
    let mut out = String::new();
    writeln!(out, "{} {} {:e}", g.dim(), npa, g.bbox().half_width()).expect("string write");
    for row in f.values().chunks(npa) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn read_grid_text(text: &str) -> Result<GridFunction> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("missing header".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("header needs `n N L`, got {header:?}")));
    }
    let n: usize = parts[0]
        .parse()
        .map_err(|_| Error::Parse(format!("bad dimension {:?}", parts[0])))?;
    let npa: usize = parts[1]
        .parse()
        .map_err(|_| Error::Parse(format!("bad grid size {:?}", parts[1])))?;
    let l: f64 = parts[2]
        .parse()
        .map_err(|_| Error::Parse(format!("bad half width {:?}", parts[2])))?;
    let grid = make_grid(n, npa, l)?;
    let expected = grid.len();
    let mut values = Vec::new();
    for tok in lines.flat_map(str::split_whitespace) {
        if values.len() == expected {
            return Err(Error::Parse("more samples than the header declares".into()));
        }
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::Parse(format!("bad sample {tok:?}")))?;
        values.push(v);
    }
    if values.len() != expected {
        return Err(Error::Parse(format!(
            "expected {expected} samples, found {}",
            values.len()
        )));
    }
    GridFunction::new(&grid, values).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_grid_binary(f: &GridFunction) -> Result<Vec<u8>> {
    check_exportable(f)?;
    let g = f.grid();
    let mut out = Vec::with_capacity(21 + 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.push(1);
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(g.points_per_axis() as u32).to_le_bytes());
    out.extend_from_slice(&g.bbox().half_width().to_le_bytes());
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn read_grid_binary(bytes: &[u8]) -> Result<GridFunction> {
    if bytes.len() < 21 || &bytes[..4] != MAGIC {
        return Err(Error::Parse("missing grid function magic".into()));
    }
    if bytes[4] != 1 {
        return Err(Error::Parse(format!("unknown format version {}", bytes[4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let n = u32_at(5) as usize;
    let npa = u32_at(9) as usize;
    let l = f64::from_le_bytes(bytes[13..21].try_into().expect("8 bytes"));
    let grid = make_grid(n, npa, l)?;
    let body = &bytes[21..];
    if body.len() != 8 * grid.len() {
        return Err(Error::Parse(format!(
            "expected {} sample bytes, found {}",
            8 * grid.len(),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    GridFunction::new(&grid, values).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GridFunction {
        let g = Grid::centered(2, 2.0, 16).unwrap();
        GridFunction::from_fn(&g, |x| (x[0] * 3.1).sin() / 7.0 + x[1] * 1e-9 - 1e300 * 0.0)
    }

    #[test]
    fn text_round_trip_is_exact() {
        let f = sample();
        let back = read_grid_text(&write_grid_text(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let f = sample();
        let back = read_grid_binary(&write_grid_binary(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_short_and_malformed() {
        assert!(read_grid_text("").is_err());
        assert!(read_grid_text("2 8 1\n1 2 3").is_err());
        assert!(read_grid_text("2 7 1\n").is_err());
        assert!(read_grid_text("2 8 nan\n").is_err());
        assert!(read_grid_binary(b"MKGF").is_err());
        let mut b = write_grid_binary(&sample()).unwrap();
        b.pop();
        assert!(read_grid_binary(&b).is_err());
    }

    #[test]
    fn off_center_boxes_are_not_exported() {
        let b = crate::geometry::BoundingBox::new(vec![1.0, 0.0], 1.0).unwrap();
        let g = Grid::new(b, 8).unwrap();
        assert!(write_grid_text(&GridFunction::zeros(&g)).is_err());
    }
}
