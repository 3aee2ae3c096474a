use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::fractional::gl_nodes;
use crate::functions::SphereKernel;

const RADIAL_NODES: usize = 8;

/// Fourier transform of the annulus kernel
/// `(2^j t)^{-1} Omega(x') |x|^{beta-1} chi_{2^j t <= |x| <= 2^{j+1} t}`
/// at frequency `xi`, with `e^{-2 pi i x . xi}` as the transform kernel.
///
/// The angular factor is integrated exactly in the piecewise-linear
/// interpolant of `Omega` (Gauss–Legendre per sample interval); the radial
/// factor by composite Gauss–Legendre.
pub fn khat(omega: &SphereKernel, beta: f64, j: i32, t: f64, xi: [f64; 2]) -> Complex64 {
    let a = 2f64.powi(j) * t;
    let b = 2.0 * a;
    let norm = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
    let s = omega.samples();
    let m = s.len();
    let dth = 2.0 * PI / m as f64;
    let phase_max = 2.0 * PI * b * norm;
    let q = (4.0 + (1.5 * phase_max * dth).ceil()).clamp(4.0, 64.0) as usize;
    let ang = gl_nodes(q);
    // (xi . u_theta, weight * Omega(theta)) for every angular node.
    let mut nodes = Vec::with_capacity(m * q);
    for k in 0..m {
        let (s0, s1) = (s[k], s[(k + 1) % m]);
        for &(x, w) in &ang {
            let u = 0.5 * (x + 1.0);
            let th = (k as f64 + u) * dth;
            let om = s0 + u * (s1 - s0);
            nodes.push((xi[0] * th.cos() + xi[1] * th.sin(), 0.5 * w * dth * om));
        }
    }
    let panels = ((2.0 * (b - a) * norm).ceil() as usize).max(1);
    let rad = gl_nodes(RADIAL_NODES);
    let pw = (b - a) / panels as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let lo = a + p as f64 * pw;
        for &(x, w) in &rad {
            let r = lo + 0.5 * pw * (x + 1.0);
            let mut inner = Complex64::new(0.0, 0.0);
            for &(proj, wo) in &nodes {
                let ph = -2.0 * PI * r * proj;
                inner += Complex64::new(ph.cos(), ph.sin()) * wo;
            }
            total += inner * (0.5 * pw * w * r.powf(beta));
        }
    }
    total / a
}

/// One sample of the multiplier and its predicted envelope.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeRow {
    pub xi_norm: f64,
    /// `|2^j xi|`.
    pub z: f64,
    pub khat_abs: f64,
    /// `||Omega|| |xi|^{-beta} min(z^{1+beta}, z^{-(1-beta)/2})`, zero at `xi = 0`.
    pub envelope: f64,
    /// `|xi|^beta |K^|`, a function of `z` alone by homogeneity.
    pub normalized: f64,
    /// `|xi|^beta |K^| z^{(1-beta)/2}`.
    pub normalized_large: f64,
}

pub fn multiplier_envelope(
    omega: &SphereKernel,
    beta: f64,
    j: i32,
    t: f64,
    xi_samples: &[[f64; 2]],
) -> Vec<EnvelopeRow> {
    xi_samples
        .par_iter()
        .map(|&xi| {
            let xn = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            let z = 2f64.powi(j) * xn;
            let k = khat(omega, beta, j, t, xi).norm();
            let envelope = if xn == 0.0 {
                0.0
            } else {
                omega.sup_norm() * xn.powf(-beta) * z.powf(1.0 + beta).min(z.powf(-(1.0 - beta) / 2.0))
            };
            let normalized = xn.powf(beta) * k;
            EnvelopeRow {
                xi_norm: xn,
                z,
                khat_abs: k,
                envelope,
                normalized,
                normalized_large: normalized * z.powf((1.0 - beta) / 2.0),
            }
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Small- and large-frequency behaviour of one multiplier along a direction.
#[derive(Clone, Debug)]
pub struct EnvelopeSummary {
    pub khat_at_zero: f64,
    pub small: Vec<EnvelopeRow>,
    pub large: Vec<EnvelopeRow>,
    /// Slope of `|xi|^beta |K^|` against `z` over the small rows. Along the
    /// dyadic family at fixed `xi` this is the slope of `|K^|` itself.
    pub small_slope: f64,
    pub large_lower_max: f64,
    pub large_upper_max: f64,
    /// The normalized large-frequency values do not grow across the range.
    pub large_bounded: bool,
}

fn log_space(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (k - 1) as f64).exp())
        .collect()
}

/// Samples `z` in `[1e-4, 1e-2]` and `[4, 64]` along `direction`.
pub fn envelope_summary(
    omega: &SphereKernel,
    beta: f64,
    j: i32,
    t: f64,
    direction: [f64; 2],
) -> EnvelopeSummary {
    let dn = (direction[0] * direction[0] + direction[1] * direction[1]).sqrt();
    let to_xi = |z: f64| {
        let s = z * 2f64.powi(-j) / dn;
        [direction[0] * s, direction[1] * s]
    };
    let small_xi: Vec<[f64; 2]> = log_space(1e-4, 1e-2, 11).into_iter().map(to_xi).collect();
    let large_xi: Vec<[f64; 2]> = log_space(4.0, 64.0, 16).into_iter().map(to_xi).collect();
    let small = multiplier_envelope(omega, beta, j, t, &small_xi);
    let large = multiplier_envelope(omega, beta, j, t, &large_xi);
    let small_slope = fit_loglog_slope(
        &small.iter().map(|r| r.z).collect::<Vec<_>>(),
        &small.iter().map(|r| r.normalized).collect::<Vec<_>>(),
    );
    let half = large.len() / 2;
    let lower = large[..half].iter().map(|r| r.normalized_large).fold(0.0, f64::max);
    let upper = large[half..].iter().map(|r| r.normalized_large).fold(0.0, f64::max);
    EnvelopeSummary {
        khat_at_zero: khat(omega, beta, j, t, [0.0, 0.0]).norm(),
        small,
        large,
        small_slope,
        large_lower_max: lower,
        large_upper_max: upper,
        large_bounded: upper.is_finite() && upper <= lower,
    }
}
