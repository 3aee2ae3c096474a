//! Grid functions, angular kernels, BMO symbols and their norms.

mod io;
mod kernel;
mod samples;

pub use io::{read_grid_binary, read_grid_text, write_grid_binary, write_grid_text};
pub use kernel::{make_test_kernels, SphereKernel, ANGULAR_SAMPLES};
pub use samples::{disk_indicator, gaussian, spike, two_bump, TestFunction};

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geometry::{cube_cells, DyadicLattice, Grid, Pyramid};
use crate::weights::Weight;

/// Scalar field sampled at the cell centers of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite sample at cell {i}")));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.point(i)))
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// Translate by whole cells along each axis; vacated cells become zero.
    pub fn shift_cells(&self, offset: &[i64]) -> Self {
        let n = self.grid.points_per_axis() as i64;
        let mut out = vec![0.0; self.values.len()];
        for (i, &v) in self.values.iter().enumerate() {
            let idx = self.grid.unflatten(i);
            let moved: Option<Vec<usize>> = idx
                .iter()
                .zip(offset)
                .map(|(&k, &o)| {
                    let m = k as i64 + o;
                    (0..n).contains(&m).then_some(m as usize)
                })
                .collect();
            if let Some(m) = moved {
                out[self.grid.flatten(&m)] = v;
            }
        }
        Self {
            grid: self.grid.clone(),
            values: out,
        }
    }

    pub fn at(&self, x: &[f64]) -> f64 {
        self.values[self.grid.nearest_cell(x)]
    }
}

/// `(sum |f|^p w h^n)^(1/p)`, with `w = 1` when no weight is given.
pub fn lp_norm(f: &GridFunction, p: f64, weight: Option<&Weight>) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("p must be >= 1, got {p}")));
    }
    let hn = f.grid().cell_volume();
    let w: Option<&[f64]> = match weight {
        Some(w) => {
            if w.samples().grid() != f.grid() {
                return Err(invalid("weight lives on a different grid"));
            }
            if let Some((cell, &value)) = w
                .samples()
                .values()
                .iter()
                .enumerate()
                .find(|(_, &v)| !(v > 0.0))
            {
                return Err(Error::NonPositiveWeight { cell, value });
            }
            Some(w.samples().values())
        }
        None => None,
    };
    let term = |i: usize, v: f64| {
        let a = if p == 1.0 {
            v.abs()
        } else if p == 2.0 {
            v * v
        } else {
            v.abs().powf(p)
        };
        match w {
            Some(w) => a * w[i],
            None => a,
        }
    };
    let s: f64 = f.values().iter().enumerate().map(|(i, &v)| term(i, v)).sum::<f64>() * hn;
    Ok(if p == 1.0 {
        s
    } else if p == 2.0 {
        s.sqrt()
    } else {
        s.powf(1.0 / p)
    })
}

/// Max over every cube of every lattice of `<|b - b_Q|>_Q`.
pub fn bmo_norm(b: &GridFunction, lattices: &[DyadicLattice]) -> Result<f64> {
    Ok(bmo_scan(b, lattices)?.0)
}

/// BMO norm together with the cube attaining it.
pub(crate) fn bmo_scan(
    b: &GridFunction,
    lattices: &[DyadicLattice],
) -> Result<(f64, crate::geometry::DyadicCube)> {
    if lattices.is_empty() {
        return Err(Error::EmptyLatticeList);
    }
    let g = b.grid();
    let mut best: Option<(f64, crate::geometry::DyadicCube)> = None;
    for lat in lattices {
        if lat.root != *g.bbox() {
            return Err(Error::RootMismatch);
        }
        let pyr = Pyramid::build(g, &lat.shift, b.values(), crate::geometry::Combine::Sum);
        let cubes = lat.cubes(g);
        let vals: Vec<f64> = cubes
            .par_iter()
            .map(|q| {
                let cells = cube_cells(q, g).expect("lattice cubes are resolvable");
                let mean = pyr.get(q.level, &q.index).expect("cube in table") / cells.len() as f64;
                let dev: f64 = cells.iter().map(|&c| (b.values()[c] - mean).abs()).sum();
                dev / cells.len() as f64
            })
            .collect();
        for (q, v) in cubes.into_iter().zip(vals) {
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, q));
            }
        }
    }
    best.ok_or(Error::EmptyLatticeList)
}

/// A BMO function with its norm estimate over a fixed set of lattices.
#[derive(Clone, Debug)]
pub struct BmoSymbol {
    underlying: GridFunction,
    bmo_norm_estimate: f64,
    lattices: Vec<DyadicLattice>,
}

impl BmoSymbol {
    pub fn new(underlying: GridFunction, lattices: &[DyadicLattice]) -> Result<Self> {
        let bmo_norm_estimate = bmo_norm(&underlying, lattices)?;
        Ok(Self {
            underlying,
            bmo_norm_estimate,
            lattices: lattices.to_vec(),
        })
    }

    /// Symbol over the standard lattice family of its own grid.
    pub fn with_default_lattices(underlying: GridFunction) -> Result<Self> {
        let g = underlying.grid().clone();
        let lats = DyadicLattice::third_shifted_family(g.bbox(), g.levels());
        Self::new(underlying, &lats)
    }

    /// Samples of `log|x|`.
    pub fn log_abs(grid: &Grid) -> Result<Self> {
        let f = GridFunction::from_fn(grid, |x| x.iter().map(|v| v * v).sum::<f64>().sqrt().ln());
        Self::with_default_lattices(f)
    }

    pub fn function(&self) -> &GridFunction {
        &self.underlying
    }

    pub fn norm(&self) -> f64 {
        self.bmo_norm_estimate
    }

    pub fn lattices(&self) -> &[DyadicLattice] {
        &self.lattices
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.underlying.scale(c), &self.lattices)
    }
}
