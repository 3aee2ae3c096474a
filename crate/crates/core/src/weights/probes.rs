use std::sync::Arc;

use rayon::prelude::*;

use super::characteristic::{apq_characteristic, CharReport};
use super::{ap_characteristic, conjugate_exponent, snapped_cos, Weight, WeightDescriptor};
use crate::error::{invalid, Error, Result};
use crate::functions::{BmoSymbol, GridFunction};
use crate::geometry::{cube_cells, Combine, DyadicCube, DyadicLattice, Pyramid};

/// Exponents beyond this magnitude are refused or capped and flagged.
pub const EXP_GUARD: f64 = 700.0;

/// Reverse Hölder exponent and constant for a weight with `[w]_p = char_p`.
///
/// `r` is chosen so that `(2^n/alpha)^(r-1) = s^(-1/2)` with
/// `s = 1 - (1-alpha)^p / [w]_p`, which satisfies the admissibility
/// condition `(2^n/alpha)^(r-1) s < 1`.
pub fn lemma_rh_constants(n: usize, p: f64, alpha: f64, char_p: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(char_p >= 1.0 && char_p.is_finite()) {
        return Err(invalid(format!("characteristic must be finite and >= 1, got {char_p}")));
    }
    let s = 1.0 - (1.0 - alpha).powf(p) / char_p;
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Degenerate(format!("reverse Hölder base {s} outside (0, 1)")));
    }
    let base = 2f64.powi(n as i32) / alpha;
    let r = 1.0 - s.ln() / (2.0 * base.ln());
    let denom = base.powf(1.0 - r) - s;
    if !(denom > 0.0) {
        return Err(Error::Degenerate("reverse Hölder denominator vanishes".into()));
    }
    let c = (1.0 + 1.0 / denom).powf(1.0 / r);
    Ok((r, c))
}

/// Exponent `r` used when conjugating an `A_{p,q}` weight by `e^{eps b cos t}`:
/// `r = 1 - log(1 - (1-alpha)^{1+q/p'+p'/q} / [w~]) / (2 log(2^n/alpha))`
/// with `[w~] = [w]_{A_{p,q}}^{max(1, p'/q)}`.
pub fn theorem_rh_exponent(n: usize, alpha: f64, p: f64, q: f64, apq_char: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let pp = conjugate_exponent(p);
    let tilde = apq_char.powf(1f64.max(pp / q));
    let tau = (1.0 - alpha).powf(1.0 + q / pp + pp / q) / tilde;
    let base = 2f64.powi(n as i32) / alpha;
    Ok(1.0 - (1.0 - tau).ln() / (2.0 * base.ln()))
}

/// The conjugation constant in the form used for the bound by 7:
/// `r = 1 - log(1 - tau) / (2 log(2^n/alpha))` and
/// `C = [1 + 1 / ((2^n/alpha)^{1-r} - beta1)]^{1/r}`.
pub fn proof_rh_constant(n: usize, alpha: f64, beta1: f64, tau: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) || !(tau > 0.0 && tau < 1.0) {
        return Err(invalid("alpha and tau must lie in (0, 1)"));
    }
    let base = 2f64.powi(n as i32) / alpha;
    let r = 1.0 - (1.0 - tau).ln() / (2.0 * base.ln());
    let denom = base.powf(1.0 - r) - beta1;
    if !(denom > 0.0) {
        return Err(Error::Degenerate("conjugation constant denominator vanishes".into()));
    }
    Ok((r, (1.0 + 1.0 / denom).powf(1.0 / r)))
}

#[derive(Clone, Debug)]
pub struct RhReport {
    pub r: f64,
    pub c: f64,
    pub char_p: f64,
    pub verified: bool,
    /// Max over cubes of `<w^r>^{1/r} / (C <w>)`.
    pub worst_ratio: f64,
    pub worst_cube: DyadicCube,
    pub cubes: usize,
}

/// Checks `<w^r>_Q^{1/r} <= C <w>_Q` on every cube with the lemma's `(r, C)`.
pub fn reverse_holder_probe(
    w: &Weight,
    p: f64,
    alpha: f64,
    lattices: &[DyadicLattice],
) -> Result<RhReport> {
    let g = w.grid();
    let char_p = ap_characteristic(w, p, lattices)?.value;
    let (r, c) = lemma_rh_constants(g.dim(), p, alpha, char_p)?;
    let base = w.samples().values();
    let wr: Vec<f64> = base.iter().map(|v| v.powf(r)).collect();
    let n = g.dim() as i32;
    let per_lattice: Vec<(f64, DyadicCube, usize)> = lattices
        .par_iter()
        .map(|lat| {
            let s1 = Pyramid::build(g, &lat.shift, base, Combine::Sum);
            let sr = Pyramid::build(g, &lat.shift, &wr, Combine::Sum);
            let mut best = (f64::NEG_INFINITY, 0u32, 0usize);
            let mut count = 0;
            for k in 0..=lat.top_level(g) {
                let cnt = ((g.points_per_axis() >> k) as f64).powi(n);
                let t1 = &s1.levels[k as usize];
                let tr = &sr.levels[k as usize];
                count += t1.len();
                for i in 0..t1.len() {
                    let ratio = (tr.data[i] / cnt).powf(1.0 / r) / (c * (t1.data[i] / cnt));
                    if ratio > best.0 {
                        best = (ratio, k, i);
                    }
                }
            }
            let cube = DyadicCube {
                level: best.1,
                index: s1.levels[best.1 as usize].index_of(best.2),
                root: lat.root.clone(),
                shift: lat.shift.clone(),
            };
            (best.0, cube, count)
        })
        .collect();
    let mut worst: Option<(f64, DyadicCube)> = None;
    let mut cubes = 0;
    for (ratio, cube, count) in per_lattice {
        cubes += count;
        if worst.as_ref().is_none_or(|(b, _)| ratio > *b) {
            worst = Some((ratio, cube));
        }
    }
    let (worst_ratio, worst_cube) = worst.ok_or(Error::EmptyLatticeList)?;
    Ok(RhReport {
        r,
        c,
        char_p,
        verified: worst_ratio <= 1.0,
        worst_ratio,
        worst_cube,
        cubes,
    })
}

#[derive(Clone, Debug)]
pub struct JnReport {
    /// Largest tested `c` with `S(c) <= 4`.
    pub best_c: Option<f64>,
    /// `(c, S(c))` in the order of the input grid.
    pub table: Vec<(f64, f64)>,
    /// Set when some exponent exceeded the guard and was capped.
    pub overflow: bool,
}

/// Threshold on `S(c)` that defines `best_c`.
pub const JN_LEVEL: f64 = 4.0;

/// `S(c) = max_Q <exp(c |b - b_Q| / ||b||_*)>_Q` for each `c`.
pub fn jn_probe(b: &BmoSymbol, c_grid: &[f64]) -> Result<JnReport> {
    let norm = b.norm();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("BMO norm vanishes".into()));
    }
    let f = b.function();
    let g = f.grid();
    // Per cube: the deviations |b - b_Q| / ||b||, reused for every c.
    let mut devs: Vec<Vec<f64>> = Vec::new();
    for lat in b.lattices() {
        let pyr = Pyramid::build(g, &lat.shift, f.values(), Combine::Sum);
        let cubes = lat.cubes(g);
        let mut d: Vec<Vec<f64>> = cubes
            .par_iter()
            .map(|q| {
                let cells = cube_cells(q, g).expect("lattice cubes resolve");
                let mean = pyr.get(q.level, &q.index).expect("cube in table") / cells.len() as f64;
                cells
                    .iter()
                    .map(|&c| (f.values()[c] - mean).abs() / norm)
                    .collect()
            })
            .collect();
        devs.append(&mut d);
    }
    let mut overflow = false;
    let mut table = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        let (s, over) = devs
            .par_iter()
            .map(|cell_devs| {
                let mut over = false;
                let sum: f64 = cell_devs
                    .iter()
                    .map(|&d| {
                        let e = c * d;
                        if e > EXP_GUARD {
                            over = true;
                            EXP_GUARD.exp()
                        } else {
                            e.exp()
                        }
                    })
                    .sum();
                (sum / cell_devs.len() as f64, over)
            })
            .reduce(
                || (f64::NEG_INFINITY, false),
                |a, b| (a.0.max(b.0), a.1 || b.1),
            );
        overflow |= over;
        table.push((c, s));
    }
    let best_c = table
        .iter()
        .filter(|(_, s)| *s <= JN_LEVEL)
        .map(|(c, _)| *c)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))));
    Ok(JnReport {
        best_c,
        table,
        overflow,
    })
}

/// `w = exp(lambda b cos theta)` with its closed form attached.
pub fn exp_bmo_weight(b: &BmoSymbol, lambda: f64, theta: f64) -> Result<Weight> {
    let f = b.function();
    let ct = snapped_cos(theta);
    let peak = f.sup_norm() * lambda.abs() * ct.abs();
    if !(peak <= EXP_GUARD) {
        return Err(Error::Overflow(format!(
            "exponent magnitude {peak} exceeds {EXP_GUARD}"
        )));
    }
    let d = WeightDescriptor::ExpBmo {
        lambda,
        theta,
        b: Arc::new(f.clone()),
    };
    Weight::from_descriptor(f.grid(), d)
}

#[derive(Clone, Debug)]
pub struct LambdaSweep {
    /// `(lambda, theta, [w]_{A_{p,q}})` rows.
    pub rows: Vec<(f64, f64, f64)>,
    /// First `lambda` (in sweep order) whose characteristic stays below the
    /// cap for every `theta`.
    pub first_passing: Option<f64>,
    /// Max over `theta` of the characteristic at `first_passing`.
    pub max_char: Option<f64>,
}

/// Sweeps `lambda` in the given order until every `theta` passes `cap`.
pub fn exp_bmo_lambda_sweep(
    b: &BmoSymbol,
    p: f64,
    q: f64,
    lambdas: &[f64],
    thetas: &[f64],
    cap: f64,
    lattices: &[DyadicLattice],
) -> Result<LambdaSweep> {
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let chars: Vec<f64> = thetas
            .iter()
            .map(|&t| {
                let w = exp_bmo_weight(b, lambda, t)?;
                Ok(apq_characteristic(&w, p, q, lattices)?.value)
            })
            .collect::<Result<_>>()?;
        let worst = chars.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        rows.extend(thetas.iter().zip(&chars).map(|(&t, &c)| (lambda, t, c)));
        if worst.is_finite() && worst <= cap {
            return Ok(LambdaSweep {
                rows,
                first_passing: Some(lambda),
                max_char: Some(worst),
            });
        }
    }
    Ok(LambdaSweep {
        rows,
        first_passing: None,
        max_char: None,
    })
}

/// `eps = c / (r' ||b||_*)`.
pub fn conjugation_epsilon(c: f64, r: f64, b_norm: f64) -> f64 {
    c / (conjugate_exponent(r) * b_norm)
}

#[derive(Clone, Debug)]
pub struct ConjugatedReport {
    pub eps: f64,
    pub base_char: CharReport,
    /// `(theta, [w e^{eps b cos theta}]_{A_{p,q}}, ratio to the base)` rows.
    pub rows: Vec<(f64, f64, f64)>,
    pub worst_ratio: f64,
    pub cap: f64,
    pub below_cap: bool,
}

/// Ratio `[w e^{eps b cos t}]_{A_{p,q}} / [w]_{A_{p,q}}` over `thetas`.
#[allow(clippy::too_many_arguments)]
pub fn conjugated_char_check(
    w: &Weight,
    b: &GridFunction,
    eps: f64,
    thetas: &[f64],
    p: f64,
    q: f64,
    lattices: &[DyadicLattice],
    cap: f64,
) -> Result<ConjugatedReport> {
    if b.grid() != w.grid() {
        return Err(invalid("symbol and weight live on different grids"));
    }
    let base_char = apq_characteristic(w, p, q, lattices)?;
    let mut rows = Vec::with_capacity(thetas.len());
    for &t in thetas {
        let ct = snapped_cos(t);
        let peak = b.sup_norm() * eps.abs() * ct.abs();
        if !(peak <= EXP_GUARD) {
            return Err(Error::Overflow(format!("exponent magnitude {peak} exceeds {EXP_GUARD}")));
        }
        let v: Vec<f64> = w
            .samples()
            .values()
            .iter()
            .zip(b.values())
            .map(|(&wv, &bv)| wv * (eps * bv * ct).exp())
            .collect();
        let wt = Weight::new(GridFunction::new(w.grid(), v)?, None)?;
        let c = apq_characteristic(&wt, p, q, lattices)?.value;
        rows.push((t, c, c / base_char.value));
    }
    let worst_ratio = rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    Ok(ConjugatedReport {
        eps,
        base_char,
        rows,
        worst_ratio,
        cap,
        below_cap: worst_ratio.is_finite() && worst_ratio <= cap,
    })
}
