use rayon::prelude::*;

use super::{conjugate_exponent, Weight};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Combine, DyadicCube, DyadicLattice, Grid, LevelTable, Pyramid};

/// Result of a sup-over-cubes scan.
#[derive(Clone, Debug, PartialEq)]
pub struct CharReport {
    pub value: f64,
    pub argmax_cube: DyadicCube,
    pub cube_count: usize,
    pub lattice_shifts_used: usize,
}

pub const CHAR_CSV_HEADER: [&str; 7] = [
    "weight_id",
    "p",
    "q",
    "value",
    "argmax_level",
    "argmax_index",
    "cubes",
];

/// One CSV row in the fixed column order of [`CHAR_CSV_HEADER`].
pub fn char_csv_row(weight_id: &str, p: f64, q: f64, r: &CharReport) -> Vec<String> {
    let index: Vec<String> = r.argmax_cube.index.iter().map(|m| m.to_string()).collect();
    vec![
        weight_id.to_string(),
        crate::harness::fmt_f64(p),
        crate::harness::fmt_f64(q),
        crate::harness::fmt_f64(r.value),
        r.argmax_cube.level.to_string(),
        index.join(":"),
        r.cube_count.to_string(),
    ]
}

/// Per-cube values of one lattice, levels `0..=top`.
pub(crate) struct LatticeValues {
    pub lattice: DyadicLattice,
    pub levels: Vec<LevelTable>,
}

fn check_lattices(g: &Grid, lattices: &[DyadicLattice]) -> Result<()> {
    if lattices.is_empty() {
        return Err(Error::EmptyLatticeList);
    }
    if lattices.iter().any(|l| l.root != *g.bbox()) {
        return Err(Error::RootMismatch);
    }
    Ok(())
}

fn check_positive(w: &Weight) -> Result<()> {
    match w
        .samples()
        .values()
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
    {
        Some((cell, &value)) => Err(Error::NonPositiveWeight { cell, value }),
        None => Ok(()),
    }
}

/// Per-cube `<u>_Q <v>_Q^e`, set to exactly 1 on cubes where `base` is
/// constant (the functional of a constant weight is identically 1).
pub(crate) fn product_functional(
    g: &Grid,
    base: &[f64],
    u: &[f64],
    v: &[f64],
    e: f64,
    lattices: &[DyadicLattice],
) -> Vec<LatticeValues> {
    let n = g.dim() as u32;
    lattices
        .par_iter()
        .map(|lat| {
            let su = Pyramid::build(g, &lat.shift, u, Combine::Sum);
            let sv = Pyramid::build(g, &lat.shift, v, Combine::Sum);
            let lo = Pyramid::build(g, &lat.shift, base, Combine::Min);
            let hi = Pyramid::build(g, &lat.shift, base, Combine::Max);
            let top = lat.top_level(g);
            let levels = (0..=top)
                .map(|k| {
                    let count = ((g.points_per_axis() >> k) as f64).powi(n as i32);
                    let tu = &su.levels[k as usize];
                    let tv = &sv.levels[k as usize];
                    let data = (0..tu.len())
                        .map(|i| {
                            if lo.levels[k as usize].data[i] == hi.levels[k as usize].data[i] {
                                return 1.0;
                            }
                            let au = tu.data[i] / count;
                            let av = tv.data[i] / count;
                            if e == 1.0 {
                                au * av
                            } else {
                                au * av.powf(e)
                            }
                        })
                        .collect();
                    LevelTable {
                        lo: tu.lo.clone(),
                        shape: tu.shape.clone(),
                        data,
                    }
                })
                .collect();
            LatticeValues {
                lattice: lat.clone(),
                levels,
            }
        })
        .collect()
}

/// First maximum in (lattice, level, index) order.
pub(crate) fn scan_max(tables: &[LatticeValues]) -> CharReport {
    let mut best: Option<(f64, usize, u32, usize)> = None;
    let mut count = 0usize;
    for (li, t) in tables.iter().enumerate() {
        for (k, level) in t.levels.iter().enumerate() {
            count += level.len();
            for (i, &v) in level.data.iter().enumerate() {
                if best.is_none_or(|(b, ..)| v > b) {
                    best = Some((v, li, k as u32, i));
                }
            }
        }
    }
    let (value, li, k, i) = best.expect("at least the root level is present");
    let lat = &tables[li].lattice;
    CharReport {
        value,
        argmax_cube: DyadicCube {
            level: k,
            index: tables[li].levels[k as usize].index_of(i),
            root: lat.root.clone(),
            shift: lat.shift.clone(),
        },
        cube_count: count,
        lattice_shifts_used: tables.len(),
    }
}

/// `[w]_p` over every cube of the supplied lattices.
pub fn ap_characteristic(w: &Weight, p: f64, lattices: &[DyadicLattice]) -> Result<CharReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid(format!("p must exceed 1, got {p}")));
    }
    Ok(scan_max(&ap_tables(w, p, lattices)?))
}

pub(crate) fn ap_tables(w: &Weight, p: f64, lattices: &[DyadicLattice]) -> Result<Vec<LatticeValues>> {
    let g = w.grid();
    check_lattices(g, lattices)?;
    check_positive(w)?;
    let base = w.samples().values();
    let sigma: Vec<f64> = base.iter().map(|x| x.powf(-1.0 / (p - 1.0))).collect();
    Ok(product_functional(g, base, base, &sigma, p - 1.0, lattices))
}

/// `[w]_{A_{p,q}}` over every cube of the supplied lattices.
pub fn apq_characteristic(
    w: &Weight,
    p: f64,
    q: f64,
    lattices: &[DyadicLattice],
) -> Result<CharReport> {
    if !(p > 1.0 && q > 1.0 && p.is_finite() && q.is_finite()) {
        return Err(invalid(format!("need 1 < p, q < inf, got p={p}, q={q}")));
    }
    let g = w.grid();
    check_lattices(g, lattices)?;
    check_positive(w)?;
    let pp = conjugate_exponent(p);
    let base = w.samples().values();
    let u: Vec<f64> = base.iter().map(|x| x.powf(q)).collect();
    let v: Vec<f64> = base.iter().map(|x| x.powf(-pp)).collect();
    Ok(scan_max(&product_functional(g, base, &u, &v, q / pp, lattices)))
}

/// Cube-wise check of `[w^eps]_p <= [w]_p^eps`.
#[derive(Clone, Debug)]
pub struct PowerLemmaReport {
    /// True when the inequality holds on every cube with no tolerance.
    pub holds: bool,
    /// Minimum over cubes of `A_p(w, Q)^eps - A_p(w^eps, Q)`.
    pub cubewise_min_margin: f64,
    pub worst_cube: DyadicCube,
    /// `[w]_p^eps - [w^eps]_p`.
    pub global_margin: f64,
    pub lhs: f64,
    pub rhs: f64,
}

pub fn power_lemma_check(
    w: &Weight,
    p: f64,
    eps: f64,
    lattices: &[DyadicLattice],
) -> Result<PowerLemmaReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    let full = ap_tables(w, p, lattices)?;
    let part = ap_tables(&w.powf(eps), p, lattices)?;
    let mut holds = true;
    let mut worst: Option<(f64, usize, usize, usize)> = None;
    for (li, (tf, tp)) in full.iter().zip(&part).enumerate() {
        for (k, (lf, lp)) in tf.levels.iter().zip(&tp.levels).enumerate() {
            for (i, (&a, &b)) in lf.data.iter().zip(&lp.data).enumerate() {
                let rhs = if a == 1.0 { 1.0 } else { a.powf(eps) };
                if b > rhs {
                    holds = false;
                }
                let m = rhs - b;
                if worst.is_none_or(|(wm, ..)| m < wm) {
                    worst = Some((m, li, k, i));
                }
            }
        }
    }
    let (cubewise_min_margin, li, k, i) = worst.expect("nonempty scan");
    let lat = &full[li].lattice;
    let worst_cube = DyadicCube {
        level: k as u32,
        index: full[li].levels[k].index_of(i),
        root: lat.root.clone(),
        shift: lat.shift.clone(),
    };
    let lhs = scan_max(&part).value;
    let rhs = scan_max(&full).value.powf(eps);
    Ok(PowerLemmaReport {
        holds: holds && lhs <= rhs,
        cubewise_min_margin,
        worst_cube,
        global_margin: rhs - lhs,
        lhs,
        rhs,
    })
}
