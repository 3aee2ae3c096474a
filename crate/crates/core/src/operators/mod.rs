//! Quadrature for the fractional integral and maximal function, the
//! fractional Marcinkiewicz square function and its commutator, the
//! dyadically smoothed operator `mu~^l` with its grand maximal function, and
//! Fourier-side envelope checks.
//!
//! Only two-dimensional grids are supported by the grid operators; other
//! dimensions return [`Error::UnsupportedDimension`].

pub(crate) mod fft;
mod fractional;
mod multiplier;
mod smoothed;
mod square;

pub use fractional::{fractional_integral, fractional_integral_with, fractional_maximal};
pub use multiplier::{
    envelope_summary, fit_loglog_slope, khat, multiplier_envelope, EnvelopeRow, EnvelopeSummary,
};
pub use smoothed::{grand_maximal, mu_tilde_l, subsampled_cells, GrandMaximalReport, MuTilde};
pub use square::{commutator, marcinkiewicz};

use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::functions::{GridFunction, SphereKernel};
use crate::geometry::Grid;

/// Treatment of the singular self cell in `I_beta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SingularCellRule {
    /// Replace the self cell by the integral over the disk of equal area.
    #[default]
    PolarCorrection,
    /// Omit the self cell.
    Drop,
}

/// Discretization parameters shared by the square-function operators.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorConfig {
    pub beta: f64,
    /// Log-grid density of the outer `t` integral of `mu`.
    pub t_samples_per_octave: usize,
    /// Samples of `t` in `[1, 2]` for the dyadic pieces of `mu~^l`.
    pub t_unit_samples: usize,
    /// Scale window `[j_min, j_max]`; `None` picks the minimal covering window.
    pub j_range: Option<(i32, i32)>,
    pub singular_cell_rule: SingularCellRule,
    /// Smoothing parameter of `mu~^l`. `None` disables the mollifier.
    pub l: Option<u32>,
}

impl OperatorConfig {
    pub fn new(beta: f64) -> Self {
        Self {
            beta,
            t_samples_per_octave: 8,
            t_unit_samples: 8,
            j_range: None,
            singular_cell_rule: SingularCellRule::PolarCorrection,
            l: Some(1),
        }
    }

    pub fn with_l(mut self, l: Option<u32>) -> Self {
        self.l = l;
        self
    }

    pub(crate) fn validate(&self, grid: &Grid) -> Result<()> {
        check_dim(grid)?;
        check_beta(self.beta, grid.dim())?;
        if self.t_samples_per_octave == 0 || self.t_unit_samples == 0 {
            return Err(invalid("t sample counts must be positive"));
        }
        if self.l == Some(0) {
            return Err(invalid("l must be a positive integer"));
        }
        self.j_window(grid).map(|_| ())
    }

    /// Minimal scale window: `[floor(log2 h) - 2, ceil(log2(4 L sqrt n)) + 1]`.
    pub fn required_j_window(grid: &Grid) -> (i32, i32) {
        let n = grid.dim() as f64;
        let lo = grid.spacing().log2().floor() as i32 - 2;
        let hi = (4.0 * grid.bbox().half_width() * n.sqrt()).log2().ceil() as i32 + 1;
        (lo, hi)
    }

    /// The configured window, checked to cover the required one.
    pub fn j_window(&self, grid: &Grid) -> Result<(i32, i32)> {
        let need = Self::required_j_window(grid);
        match self.j_range {
            None => Ok(need),
            Some((lo, hi)) if lo <= need.0 && hi >= need.1 => Ok((lo, hi)),
            Some((lo, hi)) => Err(Error::JWindowTooSmall {
                have_min: lo,
                have_max: hi,
                need_min: need.0,
                need_max: need.1,
            }),
        }
    }
}

pub(crate) fn check_dim(grid: &Grid) -> Result<()> {
    if grid.dim() == 2 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(grid.dim()))
    }
}

pub(crate) fn check_beta(beta: f64, n: usize) -> Result<()> {
    if beta > 0.0 && beta < n as f64 {
        Ok(())
    } else {
        Err(invalid(format!("beta must lie in (0, {n}), got {beta}")))
    }
}

/// Mean-zero check shared by the square-function operators.
pub(crate) fn check_cancellative(omega: &SphereKernel) -> Result<()> {
    let m = omega.mean();
    if m.abs() > 1e-8 {
        Err(Error::KernelNotCancellative(m))
    } else {
        Ok(())
    }
}

/// Radial bump `c max(0, 1 - 16 |x|^2)^4` of unit mass supported in
/// `|x| <= 1/4`, and its dyadic dilates `2^{-nm} phi(2^{-m} y)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MollifierSpec;

impl MollifierSpec {
    /// Normalization in two dimensions.
    pub const C2: f64 = 80.0 / std::f64::consts::PI;
    pub const SUPPORT: f64 = 0.25;

    pub fn profile(&self, r: f64) -> f64 {
        let s = 1.0 - 16.0 * r * r;
        if s <= 0.0 {
            0.0
        } else {
            Self::C2 * s.powi(4)
        }
    }

    /// `phi_m` at distance `r`.
    pub fn scaled(&self, m: i32, r: f64) -> f64 {
        let s = 2f64.powi(-m);
        s * s * self.profile(r * s)
    }

    /// Support radius of `phi_m`.
    pub fn radius(&self, m: i32) -> f64 {
        Self::SUPPORT * 2f64.powi(m)
    }

    /// Cell weights of `phi_m` on offsets `[-R, R]^2`, normalized to unit sum.
    /// Returns `None` when the support is narrower than one cell, in which
    /// case the mollifier acts as the identity.
    pub(crate) fn discrete(&self, m: i32, h: f64) -> Option<fft::OffsetKernel> {
        let r = (self.radius(m) / h).floor() as usize;
        if r == 0 {
            return None;
        }
        let mut k = fft::OffsetKernel::zeros(r);
        let w = k.width();
        for (i, v) in k.data.iter_mut().enumerate() {
            let dr = (i / w) as f64 - r as f64;
            let dc = (i % w) as f64 - r as f64;
            *v = self.scaled(m, h * (dr * dr + dc * dc).sqrt()) * h * h;
        }
        let total: f64 = k.data.iter().sum();
        k.data.iter_mut().for_each(|v| *v /= total);
        Some(k)
    }
}

/// Surface measure of the unit sphere in `R^n`.
pub fn sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

/// Constant `gamma(n, beta)` bounding the fractional square function in
/// terms of `I_beta`, for exponents with `1/q = 1/p - beta/n`.
pub fn lemma21_constant(n: usize, beta: f64, p: f64, q: f64) -> Result<f64> {
    check_beta(beta, n)?;
    if n == 0 || !(p > 1.0 && q > 1.0 && p.is_finite() && q.is_finite()) {
        return Err(invalid("need n >= 1 and 1 < p, q < inf"));
    }
    let rel = 1.0 / q - (1.0 / p - beta / n as f64);
    if rel.abs() > 1e-12 {
        return Err(Error::ExponentRelation { p, q, beta, n });
    }
    let nf = n as f64;
    let w = sphere_area(n);
    let pp = p / (p - 1.0);
    let lead = w + (q * w / (pp * nf)).powf(1.0 / pp) * beta;
    Ok(lead * 2f64.powf(-beta) * std::f64::consts::PI.powf(-nf / 2.0) * gamma((nf - beta) / 2.0)
        / (2.0 * gamma((2.0 + beta) / 2.0)))
}

/// Weak-type quantity `sup_lambda lambda |{v > lambda}|^{1/q0}` of
/// nonnegative samples, with each sample carrying `cell_volume`.
pub fn weak_type_quantity(values: &[f64], cell_volume: f64, q0: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| *x > 0.0).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.iter()
        .enumerate()
        .map(|(i, &x)| x * ((i + 1) as f64 * cell_volume).powf(1.0 / q0))
        .fold(0.0, f64::max)
}

/// `sup_lambda lambda |{mu~^l f > lambda}|^{1/q0} / (l ||f||_1)` with
/// `q0 = n / (n - beta)`.
pub fn weak_type_probe(f: &GridFunction, omega: &SphereKernel, cfg: &OperatorConfig) -> Result<f64> {
    let out = mu_tilde_l(f, omega, cfg)?;
    let g = f.grid();
    let n = g.dim() as f64;
    let q0 = n / (n - cfg.beta);
    let l = cfg.l.unwrap_or(1) as f64;
    let norm1 = crate::functions::lp_norm(f, 1.0, None)?;
    if norm1 == 0.0 {
        return Ok(0.0);
    }
    Ok(weak_type_quantity(out.values(), g.cell_volume(), q0) / (l * norm1))
}
