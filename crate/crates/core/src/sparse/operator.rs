use super::family::{Provenance, SparseFamily};
use crate::error::{invalid, Result};
use crate::functions::GridFunction;
use crate::geometry::{cells_in_ranges, cube_cell_ranges, triple_cell_ranges, DyadicCube};
use crate::operators::fractional_integral;

/// Which average of `|f|` a sparse operator uses on a cube `Q`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AverageConvention {
    /// `<|f|>_Q`.
    #[default]
    Cube,
    /// `|3Q|^{-1} int_{3Q} |f|`, with `f` zero outside the grid.
    Tripled,
}

/// `(sum_Q (|Q|^{beta/n} <|f|>_Q)^r chi_Q)^{1/r}` with `<|f|>_Q` over `Q`.
pub fn sparse_operator(f: &GridFunction, s: &SparseFamily, r: f64, beta: f64) -> Result<GridFunction> {
    sparse_operator_with(f, s, r, beta, AverageConvention::Cube)
}

pub fn sparse_operator_with(
    f: &GridFunction,
    s: &SparseFamily,
    r: f64,
    beta: f64,
    convention: AverageConvention,
) -> Result<GridFunction> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(format!("sparse exponent r must be positive, got {r}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta must be nonnegative, got {beta}")));
    }
    let g = f.grid();
    if g != &s.grid {
        return Err(invalid("family lives on a different grid"));
    }
    let n = g.dim() as i32;
    let mut acc = vec![0.0; g.len()];
    for q in &s.cubes {
        let term = q.measure().powf(beta / n as f64) * average(f, q, convention)?;
        let add = if r == 1.0 {
            term
        } else if r == 2.0 {
            term * term
        } else {
            term.powf(r)
        };
        for c in cells_in_ranges(g, &cube_cell_ranges(q, g)?) {
            acc[c] += add;
        }
    }
    let out = if r == 1.0 {
        acc
    } else if r == 2.0 {
        acc.iter().map(|v| v.sqrt()).collect()
    } else {
        acc.iter().map(|v| v.powf(1.0 / r)).collect()
    };
    GridFunction::new(g, out)
}

fn average(f: &GridFunction, q: &DyadicCube, convention: AverageConvention) -> Result<f64> {
    let g = f.grid();
    let ranges = cube_cell_ranges(q, g)?;
    let c = ranges[0].1 - ranges[0].0;
    let (ranges, k) = match convention {
        AverageConvention::Cube => (ranges, c),
        AverageConvention::Tripled => (triple_cell_ranges(q, g)?.0, 3 * c),
    };
    let sum: f64 = cells_in_ranges(g, &ranges)
        .iter()
        .map(|&i| f.values()[i].abs())
        .sum();
    Ok(sum / k.pow(g.dim() as u32) as f64)
}

/// Principal cubes of `|f|` from the grid box: a cube is selected below its
/// nearest selected ancestor `P` when `<|f|>_Q > ratio <|f|>_P`, and
/// `E_P = P \ ∪ selected children`.
///
/// With `ratio = 2^{n+1}` every cube keeps at least half of its measure.
pub fn principal_cubes_family(f: &GridFunction, ratio: f64) -> Result<SparseFamily> {
    if !(ratio > 1.0 && ratio.is_finite()) {
        return Err(invalid(format!("ratio must exceed 1, got {ratio}")));
    }
    let g = f.grid();
    let root = DyadicCube::root_of(g.bbox());
    let mut cubes = Vec::new();
    let mut stack = vec![root];
    while let Some(p) = stack.pop() {
        let avg = average(f, &p, AverageConvention::Cube)?;
        let mut children = Vec::new();
        if avg > 0.0 {
            let mut frontier = if cells_in_ranges(g, &cube_cell_ranges(&p, g)?).len() > 1 {
                p.children()
            } else {
                Vec::new()
            };
            while let Some(q) = frontier.pop() {
                if average(f, &q, AverageConvention::Cube)? > ratio * avg {
                    children.push(q);
                } else if cube_cell_ranges(&q, g)?[0].1 - cube_cell_ranges(&q, g)?[0].0 > 1 {
                    frontier.extend(q.children());
                }
            }
        }
        let mut covered = vec![false; g.len()];
        for q in &children {
            for c in cells_in_ranges(g, &cube_cell_ranges(q, g)?) {
                covered[c] = true;
            }
        }
        let own: Vec<usize> = cells_in_ranges(g, &cube_cell_ranges(&p, g)?)
            .into_iter()
            .filter(|&c| !covered[c])
            .collect();
        cubes.push((p, own));
        stack.extend(children);
    }
    cubes.sort_by(|a, b| (a.0.level, &a.0.index).cmp(&(b.0.level, &b.0.index)));
    let (cubes, exceptional) = cubes.into_iter().unzip();
    Ok(SparseFamily {
        grid: g.clone(),
        cubes,
        exceptional,
        eta: 0.5,
        provenance: Provenance::Constructed,
        d_used: None,
    })
}

/// Fitted constants of `C1 A f <= I_beta f <= C2 (1 - 2^{-beta})^{-1} A f`.
#[derive(Clone, Debug, PartialEq)]
pub struct SandwichReport {
    pub beta: f64,
    /// `min I_beta f / A f` over cells with `A f > 0`.
    pub c1: f64,
    /// `max (1 - 2^{-beta}) I_beta f / A f` over the same cells.
    pub c2: f64,
    pub family_size: usize,
}

/// Compares `I_beta |f|` with `A^{1,beta}` over the principal cubes of `|f|`.
pub fn sandwich(f: &GridFunction, beta: f64) -> Result<SandwichReport> {
    let n = f.grid().dim() as i32;
    let fam = principal_cubes_family(f, 2f64.powi(n + 1))?;
    let a = sparse_operator(f, &fam, 1.0, beta)?;
    let i = fractional_integral(&f.abs(), beta)?;
    let damp = 1.0 - 2f64.powf(-beta);
    let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
    for (&iv, &av) in i.values().iter().zip(a.values()) {
        if av > 0.0 {
            c1 = c1.min(iv / av);
            c2 = c2.max(damp * iv / av);
        }
    }
    if !c1.is_finite() {
        c1 = 0.0;
    }
    Ok(SandwichReport {
        beta,
        c1,
        c2,
        family_size: fam.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::TestFunction;
    use crate::geometry::{cube_average, Grid};
    use crate::sparse::verify_sparse;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::centered(2, 2.0, 16).unwrap()
    }

    #[test]
    fn single_cube_is_the_weighted_average() {
        let g = grid();
        let f = TestFunction::Gaussian.sample(&g);
        let q = DyadicCube::new(g.bbox(), 1, vec![1, 0]).unwrap();
        let s = SparseFamily::manual(&g, vec![q.clone()], 0.5).unwrap();
        let beta = 0.7;
        let want = q.measure().powf(beta / 2.0) * cube_average(&f.abs(), &q).unwrap();
        for r in [0.5, 1.0, 2.0, 3.0] {
            let out = sparse_operator(&f, &s, r, beta).unwrap();
            let cells = crate::geometry::cube_cells(&q, &g).unwrap();
            for c in 0..g.len() {
                let expect = if cells.contains(&c) { want } else { 0.0 };
                assert!((out.values()[c] - expect).abs() <= 1e-14 * want, "r={r}");
            }
        }
    }

    #[test]
    fn nested_family_counts_cubes() {
        let g = grid();
        let f = GridFunction::constant(&g, 1.0);
        let mut q = DyadicCube::root_of(g.bbox());
        let mut cubes = vec![q.clone()];
        for _ in 0..3 {
            q = q.children().remove(0);
            cubes.push(q.clone());
        }
        let s = SparseFamily::manual(&g, cubes, 0.5).unwrap();
        let out = sparse_operator(&f, &s, 1.0, 0.0).unwrap();
        let x = crate::geometry::cube_cells(&q, &g).unwrap()[0];
        assert_eq!(out.values()[x], 4.0);
    }

    #[test]
    fn rejects_bad_exponent() {
        let g = grid();
        let f = GridFunction::constant(&g, 1.0);
        let s = SparseFamily::manual(&g, vec![], 0.5).unwrap();
        assert!(sparse_operator(&f, &s, 0.0, 0.2).is_err());
        assert!(sparse_operator(&f, &s, -1.0, 0.2).is_err());
    }

    #[test]
    fn tripled_average_counts_the_full_triple() {
        let g = grid();
        let f = GridFunction::constant(&g, 1.0);
        // A corner cube: its triple is clipped to 4 of 9 blocks.
        let q = DyadicCube::new(g.bbox(), 2, vec![0, 0]).unwrap();
        let s = SparseFamily::manual(&g, vec![q.clone()], 0.5).unwrap();
        let a = sparse_operator_with(&f, &s, 1.0, 0.0, AverageConvention::Tripled).unwrap();
        let x = crate::geometry::cube_cells(&q, &g).unwrap()[0];
        assert!((a.values()[x] - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn principal_cubes_are_sparse() {
        let g = Grid::centered(2, 2.0, 32).unwrap();
        for t in [TestFunction::TwoBump, TestFunction::Spike, TestFunction::Disk] {
            let f = t.sample(&g);
            let s = principal_cubes_family(&f, 8.0).unwrap();
            let v = verify_sparse(&s);
            assert!(v.passed && v.min_ratio >= 0.5, "{t:?}: {v:?}");
        }
    }

    #[test]
    fn sandwich_constants_are_stable_in_beta() {
        let g = Grid::centered(2, 2.0, 64).unwrap();
        let f = TestFunction::TwoBump.sample(&g);
        let reps: Vec<SandwichReport> = [0.25, 0.1, 0.01].iter().map(|&b| sandwich(&f, b).unwrap()).collect();
        let spread = |v: Vec<f64>| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(reps.iter().all(|r| r.c1 > 0.0 && r.c2 > 0.0));
        assert!(spread(reps.iter().map(|r| r.c1).collect()) <= 2.0, "{reps:?}");
        assert!(spread(reps.iter().map(|r| r.c2).collect()) <= 2.0, "{reps:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn monotone_and_l2_below_l1(vals in proptest::collection::vec(0.0f64..3.0, 256), bump in 0.0f64..2.0, beta in 0.0f64..1.5) {
            let g = grid();
            let f = GridFunction::new(&g, vals).unwrap();
            let s = principal_cubes_family(&f, 8.0).unwrap();
            let a1 = sparse_operator(&f, &s, 1.0, beta).unwrap();
            let a2 = sparse_operator(&f, &s, 2.0, beta).unwrap();
            for (x, y) in a2.values().iter().zip(a1.values()) {
                prop_assert!(*x <= y * (1.0 + 1e-12));
            }
            let bigger = f.map(|v| v + bump);
            let b1 = sparse_operator(&bigger, &s, 1.0, beta).unwrap();
            for (x, y) in a1.values().iter().zip(b1.values()) {
                prop_assert!(*x <= *y);
            }
        }
    }
}
