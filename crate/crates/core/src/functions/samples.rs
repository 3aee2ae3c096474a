//! Bundled test functions. All are compactly supported on the grid.

use std::str::FromStr;

use super::GridFunction;
use crate::error::{Error, Result};
use crate::geometry::Grid;

/// Identifier of a bundled test function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TestFunction {
    Gaussian,
    Disk,
    TwoBump,
    Spike,
}

impl TestFunction {
    pub fn id(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Disk => "disk",
            Self::TwoBump => "two-bump",
            Self::Spike => "spike",
        }
    }

    pub fn sample(self, grid: &Grid) -> GridFunction {
        match self {
            Self::Gaussian => {
                let c = grid.point(grid.nearest_cell(&vec![0.5; grid.dim()]));
                gaussian(grid, &c, 0.15)
            }
            Self::Disk => disk_indicator(grid),
            Self::TwoBump => two_bump(grid),
            Self::Spike => spike(grid, &vec![0.5; grid.dim()]),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "disk" | "disk-indicator" => Ok(Self::Disk),
            "two-bump" => Ok(Self::TwoBump),
            "spike" => Ok(Self::Spike),
            other => Err(Error::Config(format!("unknown function id {other:?}"))),
        }
    }
}

fn dist2(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(-|x-c|^2 / (2 s^2))`, truncated to zero beyond `6 s`.
pub fn gaussian(grid: &Grid, center: &[f64], width: f64) -> GridFunction {
    let c = center.to_vec();
    GridFunction::from_fn(grid, move |x| {
        let r2 = dist2(x, &c);
        if r2 > 36.0 * width * width {
            0.0
        } else {
            (-r2 / (2.0 * width * width)).exp()
        }
    })
}

/// Indicator of the closed unit ball about the origin.
pub fn disk_indicator(grid: &Grid) -> GridFunction {
    let origin = vec![0.0; grid.dim()];
    GridFunction::from_fn(grid, move |x| if dist2(x, &origin) <= 1.0 { 1.0 } else { 0.0 })
}

fn bump(x: &[f64], c: &[f64], r: f64) -> f64 {
    let s = 1.0 - dist2(x, c) / (r * r);
    if s > 0.0 {
        s * s * s
    } else {
        0.0
    }
}

/// Two smooth compactly supported bumps inside `[0, 1]^n`.
pub fn two_bump(grid: &Grid) -> GridFunction {
    let n = grid.dim();
    let mut c1 = vec![0.35; n];
    c1[0] = 0.3;
    let c2 = vec![0.7; n];
    GridFunction::from_fn(grid, move |x| bump(x, &c1, 0.2) + 0.6 * bump(x, &c2, 0.15))
}

/// Unit-mass spike on the cell nearest `at`.
pub fn spike(grid: &Grid, at: &[f64]) -> GridFunction {
    let mut v = vec![0.0; grid.len()];
    v[grid.nearest_cell(at)] = 1.0 / grid.cell_volume();
    GridFunction::new(grid, v).expect("finite spike")
}
