use crate::error::{invalid, Result};
use crate::functions::GridFunction;
use crate::geometry::{
    cells_in_ranges, cells_per_side, cube_cell_ranges, Combine, DyadicCube, DyadicLattice, Pyramid,
};

/// Calderón–Zygmund decomposition of `f` at a height.
#[derive(Clone, Debug)]
pub struct CzResult {
    pub height: f64,
    /// Maximal cubes with `<|f|>_Q > height`, ordered by (level, index).
    pub selected: Vec<DyadicCube>,
    pub good_part: GridFunction,
    /// `(f - <f>_Q) chi_Q`, aligned with `selected`.
    pub bad_parts: Vec<GridFunction>,
    /// A starting cube was itself selected, so the decomposition is trivial.
    pub root_selected: bool,
    /// Unselected cubes at the lattice's last level that still contain a
    /// cell with `|f| > height`.
    pub unresolved: Vec<DyadicCube>,
    /// `sum |Q_i| <= ||f||_1 / height`.
    pub measure_bound_holds: bool,
}

/// Stopping-time selection from the coarsest populated level of `lattice`:
/// a cube is selected when its average of `|f|` exceeds `height` and no
/// ancestor was selected.
pub fn cz_decompose(f: &GridFunction, lattice: &DyadicLattice, height: f64) -> Result<CzResult> {
    if !(height > 0.0 && height.is_finite()) {
        return Err(invalid(format!("height must be positive, got {height}")));
    }
    let g = f.grid();
    if &lattice.root != g.bbox() {
        return Err(crate::Error::RootMismatch);
    }
    let top = lattice.top_level(g);
    let abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let sums = Pyramid::build(g, &lattice.shift, &abs, Combine::Sum);
    let maxes = Pyramid::build(g, &lattice.shift, &abs, Combine::Max);
    let n = g.dim() as u32;
    let avg = |q: &DyadicCube| -> Result<f64> {
        let c = cells_per_side(q.level, g)?;
        let s = sums.get(q.level, &q.index).ok_or(crate::Error::CubeOutsideGrid)?;
        Ok(s / c.pow(n) as f64)
    };
    let start = (0..=top).find(|&k| !lattice.cubes_at(k).is_empty());
    let mut selected = Vec::new();
    let mut unresolved = Vec::new();
    let mut root_selected = false;
    let mut stack: Vec<DyadicCube> = start
        .map(|k| lattice.cubes_at(k))
        .unwrap_or_default()
        .into_iter()
        .rev()
        .collect();
    let first_level = start.unwrap_or(0);
    while let Some(q) = stack.pop() {
        if avg(&q)? > height {
            if q.level == first_level {
                root_selected = true;
            }
            selected.push(q);
        } else if q.level < top {
            stack.extend(q.children().into_iter().rev());
        } else if maxes.get(q.level, &q.index).unwrap_or(0.0) > height {
            unresolved.push(q);
        }
    }
    selected.sort_by(|a, b| (a.level, &a.index).cmp(&(b.level, &b.index)));
    let mut good = f.values().to_vec();
    let mut bad_parts = Vec::with_capacity(selected.len());
    let mut total = 0.0;
    for q in &selected {
        let cells = cells_in_ranges(g, &cube_cell_ranges(q, g)?);
        let mean = cells.iter().map(|&c| f.values()[c]).sum::<f64>() / cells.len() as f64;
        let mut b = vec![0.0; g.len()];
        for &c in &cells {
            b[c] = f.values()[c] - mean;
            good[c] = mean;
        }
        bad_parts.push(GridFunction::new(g, b)?);
        total += q.measure();
    }
    let norm1 = abs.iter().sum::<f64>() * g.cell_volume();
    Ok(CzResult {
        height,
        selected,
        good_part: GridFunction::new(g, good)?,
        bad_parts,
        root_selected,
        unresolved,
        measure_bound_holds: total <= norm1 / height,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cube_cells, Grid};
    use proptest::prelude::*;

    fn lattice(g: &crate::geometry::Grid) -> DyadicLattice {
        DyadicLattice::standard(g.bbox(), g.levels())
    }

    #[test]
    fn dyadic_indicator_is_selected() {
        let g = Grid::centered(2, 2.0, 16).unwrap();
        let q0 = DyadicCube::new(g.bbox(), 2, vec![1, 2]).unwrap();
        let cells = cube_cells(&q0, &g).unwrap();
        let mut v = vec![0.0; g.len()];
        cells.iter().for_each(|&c| v[c] = 1.0);
        let f = GridFunction::new(&g, v).unwrap();
        let r = cz_decompose(&f, &lattice(&g), 0.5).unwrap();
        assert_eq!(r.selected, vec![q0]);
        assert!(!r.root_selected);
        assert!(r.unresolved.is_empty());
        assert!(r.bad_parts[0].values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_below_height_selects_nothing() {
        let g = Grid::centered(2, 2.0, 16).unwrap();
        let f = GridFunction::constant(&g, 0.3);
        let r = cz_decompose(&f, &lattice(&g), 0.5).unwrap();
        assert!(r.selected.is_empty() && r.bad_parts.is_empty());
        assert_eq!(r.good_part, f);
        let t = cz_decompose(&f, &lattice(&g), 0.1).unwrap();
        assert!(t.root_selected);
    }

    #[test]
    fn shallow_lattice_flags_unresolved_leaves() {
        let g = Grid::centered(2, 2.0, 16).unwrap();
        let mut v = vec![0.0; g.len()];
        v[37] = 10.0;
        let f = GridFunction::new(&g, v).unwrap();
        let shallow = DyadicLattice::standard(g.bbox(), 1);
        let r = cz_decompose(&f, &shallow, 0.5).unwrap();
        assert!(r.selected.is_empty());
        assert_eq!(r.unresolved.len(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn cz_invariants(vals in proptest::collection::vec(0.0f64..4.0, 256), height in 0.3f64..3.0) {
            let g = Grid::centered(2, 1.0, 16).unwrap();
            let f = GridFunction::new(&g, vals).unwrap();
            let lat = lattice(&g);
            let r = cz_decompose(&f, &lat, height).unwrap();
            prop_assume!(!r.root_selected);
            prop_assert!(r.measure_bound_holds);
            let mut seen = vec![false; g.len()];
            for (q, b) in r.selected.iter().zip(&r.bad_parts) {
                // Maximality: selected above height, parent at or below.
                prop_assert!(cube_average(&f, q) > height);
                prop_assert!(cube_average(&f, &q.parent().unwrap()) <= height);
                let cells = cube_cells(q, &g).unwrap();
                for &c in &cells {
                    prop_assert!(!seen[c]);
                    seen[c] = true;
                }
                let mean: f64 = cells.iter().map(|&c| b.values()[c]).sum::<f64>() / cells.len() as f64;
                prop_assert!(mean.abs() <= 1e-12);
            }
            let gv = r.good_part.values();
            prop_assert!(r.good_part.sup_norm() <= 4.0 * height);
            for (c, (&good, &fv)) in gv.iter().zip(f.values()).enumerate() {
                let total = good + r.bad_parts.iter().map(|b| b.values()[c]).sum::<f64>();
                prop_assert!((total - fv).abs() <= 4.0 * f64::EPSILON * fv.abs().max(1.0));
            }
        }
    }

    fn cube_average(f: &GridFunction, q: &DyadicCube) -> f64 {
        crate::geometry::cube_average(&f.abs(), q).unwrap()
    }
}
