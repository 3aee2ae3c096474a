use rayon::prelude::*;

use super::family::{Provenance, SparseFamily};
use super::operator::{sparse_operator_with, AverageConvention};
use crate::error::{invalid, Error, Result};
use crate::functions::{GridFunction, SphereKernel};
use crate::geometry::{cells_in_ranges, cube_cell_ranges, triple_cell_ranges, DyadicCube, Grid};
use crate::operators::{MuTilde, OperatorConfig};

/// Doublings of `D` allowed per cube before giving up.
pub const MAX_DOUBLINGS: u32 = 20;
/// Recursion depth at which a cube is kept whole.
pub const MAX_DEPTH: u32 = 12;
/// Cubes with at most this many cells are kept whole.
pub const LEAF_CELLS: usize = 4;
/// Relative slack of the pointwise domination check.
pub const CERTIFICATE_SLACK: f64 = 1e-6;

/// One visited cube of the construction.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    pub cube: DyadicCube,
    pub depth: u32,
    /// Final `D` at this cube.
    pub d: f64,
    /// Cells of the level set `E` inside the cube.
    pub level_set_cells: usize,
    pub cells: usize,
    /// Cells covered by the selected children.
    pub children_cells: usize,
    pub leaf: bool,
}

/// Output of [`build_sparse_family`].
#[derive(Clone, Debug)]
pub struct SparseConstruction {
    pub family: SparseFamily,
    pub d_used: f64,
    pub d_init: f64,
    pub q0: DyadicCube,
    /// Cells of `Q0`, row-major.
    pub q0_cells: Vec<usize>,
    /// `mu~^l(f chi_{3 Q0})` on `q0_cells`.
    pub root_mu: Vec<f64>,
    pub nodes: Vec<NodeRecord>,
    pub l: f64,
    pub beta: f64,
}

struct Ctx<'a> {
    g: &'a Grid,
    mt: &'a MuTilde,
    v: &'a [f64],
    abs: Vec<f64>,
    reaches: Vec<usize>,
    l: f64,
    beta: f64,
    d_init: f64,
}

struct NodeOut {
    cubes: Vec<(DyadicCube, Vec<usize>)>,
    d_max: f64,
    nodes: Vec<NodeRecord>,
    /// `mu~` on the node's cells, kept for the root only.
    mu: Vec<f64>,
}

/// Iterative stopping-time construction of a sparse family in `D(Q0)`
/// dominating `mu~^l(f chi_{3 Q0})`.
///
/// At a cube `P` with `c` cells per side and threshold
/// `D l |P|^{beta/n} <|f|>_{3P}`, the level set `E` collects the cells where
/// `mu~^l(f chi_{3P})` or a local grand maximal surrogate exceeds the
/// threshold. `D` doubles until `|E| <= |P| / 2^{n+2}`. The children are the
/// maximal strict subcubes `Q` with `|E ∩ Q| > |Q| / 2^{n+1}`, and
/// `E_P = P \ ∪ children`.
///
/// The surrogate at `x` is the largest `max_{xi in Q} T_{c_Q/2}(xi)^{1/2}`
/// over subcubes `Q ∋ x` of `P` with at least two cells per side, where
/// `T_r` sums the per-scale energies of the scales reaching beyond `r`
/// cells (max-norm). Scales that do not reach past `c_Q/2` see only
/// `f chi_{3Q'}` on a child `Q'` of `Q`, so the per-cube squares telescope
/// and the family satisfies
/// `mu~^l(f chi_{3 Q0}) <= D_used l A^{2,beta}(f)` with tripled averages.
pub fn build_sparse_family(
    f: &GridFunction,
    omega: &SphereKernel,
    cfg: &OperatorConfig,
    q0: &DyadicCube,
    d_init: f64,
) -> Result<SparseConstruction> {
    if !(d_init > 0.0 && d_init.is_finite()) {
        return Err(invalid(format!("D_init must be positive, got {d_init}")));
    }
    let g = f.grid();
    if &q0.root != g.bbox() {
        return Err(Error::RootMismatch);
    }
    let (_, clipped) = triple_cell_ranges(q0, g)?;
    if clipped {
        return Err(invalid("tripled Q0 leaves the grid box"));
    }
    let mt = MuTilde::new(g, omega, cfg)?;
    let ctx = Ctx {
        g,
        mt: &mt,
        v: f.values(),
        abs: f.values().iter().map(|x| x.abs()).collect(),
        reaches: mt.reaches(),
        l: cfg.l.unwrap_or(1) as f64,
        beta: cfg.beta,
        d_init,
    };
    let out = node(&ctx, q0, 0)?;
    let mut pairs = out.cubes;
    pairs.sort_by(|a, b| (a.0.level, &a.0.index).cmp(&(b.0.level, &b.0.index)));
    let mut nodes = out.nodes;
    nodes.sort_by(|a, b| (a.cube.level, &a.cube.index).cmp(&(b.cube.level, &b.cube.index)));
    let (cubes, exceptional) = pairs.into_iter().unzip();
    Ok(SparseConstruction {
        family: SparseFamily {
            grid: g.clone(),
            cubes,
            exceptional,
            eta: 0.5,
            provenance: Provenance::Constructed,
            d_used: Some(out.d_max),
        },
        d_used: out.d_max,
        d_init,
        q0: q0.clone(),
        q0_cells: cells_in_ranges(g, &cube_cell_ranges(q0, g)?),
        root_mu: out.mu,
        nodes,
        l: ctx.l,
        beta: ctx.beta,
    })
}

fn blow_up(p: &DyadicCube, d: f64) -> Error {
    Error::DominationBlowUp {
        level: p.level,
        index: p.index.clone(),
        d,
    }
}

fn node(ctx: &Ctx, p: &DyadicCube, depth: u32) -> Result<NodeOut> {
    let g = ctx.g;
    let n = g.dim() as u32;
    let ranges = cube_cell_ranges(p, g)?;
    let cells = cells_in_ranges(g, &ranges);
    let c = ranges[0].1 - ranges[0].0;
    let count = cells.len();
    let (tri, _) = triple_cell_ranges(p, g)?;
    let sum3: f64 = cells_in_ranges(g, &tri).iter().map(|&i| ctx.abs[i]).sum();
    let avg3 = sum3 / (3 * c).pow(n) as f64;
    let base = ctx.l * p.measure().powf(ctx.beta / n as f64) * avg3;
    let leaf = count <= LEAF_CELLS || depth >= MAX_DEPTH;
    let record = |d: f64, level_set_cells: usize, children_cells: usize| NodeRecord {
        cube: p.clone(),
        depth,
        d,
        level_set_cells,
        cells: count,
        children_cells,
        leaf,
    };
    if base == 0.0 {
        return Ok(NodeOut {
            cubes: vec![(p.clone(), cells)],
            d_max: ctx.d_init,
            nodes: vec![record(ctx.d_init, 0, 0)],
            mu: vec![0.0; count],
        });
    }
    let energies = ctx.mt.local_energies(ctx.v, &tri, &ranges);
    let mu: Vec<f64> = (0..count)
        .map(|i| energies.iter().map(|e| e[i]).sum::<f64>().sqrt())
        .collect();
    let mu_max = mu.iter().copied().fold(0.0, f64::max);
    let mut d = ctx.d_init;
    let mut doublings = 0;
    if leaf {
        while mu_max > d * base {
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(blow_up(p, d));
            }
            d *= 2.0;
        }
        let e = mu.iter().filter(|&&m| m > d * base).count();
        return Ok(NodeOut {
            cubes: vec![(p.clone(), cells)],
            d_max: d,
            nodes: vec![record(d, e, 0)],
            mu,
        });
    }
    let surrogate = local_surrogate(&energies, &ctx.reaches, c);
    let level_set = |d: f64| -> Vec<bool> {
        let thr = d * base;
        mu.iter()
            .zip(&surrogate)
            .map(|(&m, &s)| m > thr || s > thr)
            .collect()
    };
    let mut e = level_set(d);
    while e.iter().filter(|&&b| b).count() << (n + 2) > count {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(blow_up(p, d));
        }
        d *= 2.0;
        e = level_set(d);
    }
    let e_count = e.iter().filter(|&&b| b).count();
    let sat = SummedArea::new(&e, c);
    let mut selected = Vec::new();
    for q in p.children() {
        select(g, &ranges, &sat, q, n, &mut selected)?;
    }
    let outs: Vec<Result<NodeOut>> = selected
        .par_iter()
        .map(|q| node(ctx, q, depth + 1))
        .collect();
    let mut covered = vec![false; g.len()];
    let mut children_cells = 0;
    for q in &selected {
        for cell in cells_in_ranges(g, &cube_cell_ranges(q, g)?) {
            covered[cell] = true;
            children_cells += 1;
        }
    }
    let own: Vec<usize> = cells.iter().copied().filter(|&cell| !covered[cell]).collect();
    let mut result = NodeOut {
        cubes: vec![(p.clone(), own)],
        d_max: d,
        nodes: vec![record(d, e_count, children_cells)],
        mu,
    };
    for o in outs {
        let o = o?;
        result.cubes.extend(o.cubes);
        result.nodes.extend(o.nodes);
        result.d_max = result.d_max.max(o.d_max);
    }
    Ok(result)
}

/// Depth-first selection of maximal cubes with `|E ∩ Q| 2^{n+1} > |Q|`.
fn select(
    g: &Grid,
    parent: &[(usize, usize)],
    sat: &SummedArea,
    q: DyadicCube,
    n: u32,
    out: &mut Vec<DyadicCube>,
) -> Result<()> {
    let r = cube_cell_ranges(&q, g)?;
    let (r0, c0) = (r[0].0 - parent[0].0, r[1].0 - parent[1].0);
    let side = r[0].1 - r[0].0;
    let hits = sat.count(r0, c0, side);
    if hits == 0 {
        return Ok(());
    }
    if hits << (n + 1) > side.pow(n) {
        out.push(q);
    } else if side > 1 {
        for child in q.children() {
            select(g, parent, sat, child, n, out)?;
        }
    }
    Ok(())
}

/// `max` over dyadic subcubes `Q ∋ x` (side `>= 2`) of
/// `max_{xi in Q} T_{c_Q/2}(xi)^{1/2}`, on a `c x c` row-major block.
fn local_surrogate(energies: &[Vec<f64>], reaches: &[usize], c: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; c * c];
    let mut side = c;
    while side >= 2 {
        let half = side / 2;
        let tail: Vec<f64> = (0..c * c)
            .map(|i| {
                energies
                    .iter()
                    .zip(reaches)
                    .filter(|(_, &r)| r > half)
                    .map(|(e, _)| e[i])
                    .sum()
            })
            .collect();
        let blocks = c / side;
        for br in 0..blocks {
            for bc in 0..blocks {
                let mut m = 0.0f64;
                for r in br * side..(br + 1) * side {
                    for col in bc * side..(bc + 1) * side {
                        m = m.max(tail[r * c + col]);
                    }
                }
                let m = m.sqrt();
                for r in br * side..(br + 1) * side {
                    for col in bc * side..(bc + 1) * side {
                        out[r * c + col] = out[r * c + col].max(m);
                    }
                }
            }
        }
        side = half;
    }
    out
}

/// Integer summed-area table of a `c x c` row-major mask.
struct SummedArea {
    c: usize,
    s: Vec<usize>,
}

impl SummedArea {
    fn new(mask: &[bool], c: usize) -> Self {
        let w = c + 1;
        let mut s = vec![0usize; w * w];
        for r in 0..c {
            for col in 0..c {
                s[(r + 1) * w + col + 1] =
                    mask[r * c + col] as usize + s[r * w + col + 1] + s[(r + 1) * w + col] - s[r * w + col];
            }
        }
        Self { c, s }
    }

    fn count(&self, r0: usize, c0: usize, side: usize) -> usize {
        let w = self.c + 1;
        let (r1, c1) = (r0 + side, c0 + side);
        self.s[r1 * w + c1] + self.s[r0 * w + c0] - self.s[r0 * w + c1] - self.s[r1 * w + c0]
    }
}

/// Pointwise comparison of `mu~^l(f chi_{3 Q0})` with
/// `D_used l A^{2,beta}(f)` over the cells of `Q0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DominationCertificate {
    pub convention: AverageConvention,
    /// `min_x (D_used l A(x) (1 + slack) - mu~(x))`.
    pub min_margin: f64,
    pub worst_cell: Option<usize>,
    pub holds: bool,
}

pub fn domination_certificate(
    c: &SparseConstruction,
    f: &GridFunction,
    convention: AverageConvention,
) -> Result<DominationCertificate> {
    let a = sparse_operator_with(f, &c.family, 2.0, c.beta, convention)?;
    let scale = c.d_used * c.l * (1.0 + CERTIFICATE_SLACK);
    let mut min_margin = f64::INFINITY;
    let mut worst_cell = None;
    for (&cell, &m) in c.q0_cells.iter().zip(&c.root_mu) {
        let margin = scale * a.values()[cell] - m;
        if margin < min_margin {
            min_margin = margin;
            worst_cell = Some(cell);
        }
    }
    if worst_cell.is_none() {
        min_margin = 0.0;
    }
    Ok(DominationCertificate {
        convention,
        min_margin,
        worst_cell,
        holds: min_margin >= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{make_test_kernels, TestFunction};
    use crate::geometry::cube_cells;
    use crate::sparse::verify_sparse;

    fn setup(n: usize) -> (Grid, DyadicCube) {
        let g = Grid::centered(2, 2.0, n).unwrap();
        let q0 = DyadicCube::new(g.bbox(), 2, vec![2, 2]).unwrap();
        (g, q0)
    }

    fn cfg(beta: f64, l: u32) -> OperatorConfig {
        OperatorConfig::new(beta).with_l(Some(l))
    }

    #[test]
    fn zero_function_gives_the_root_only() {
        let (g, q0) = setup(32);
        let f = GridFunction::zeros(&g);
        let k = &make_test_kernels()[0];
        let c = build_sparse_family(&f, k, &cfg(0.3, 1), &q0, 1.0).unwrap();
        assert_eq!(c.family.cubes, vec![q0.clone()]);
        assert_eq!(c.family.exceptional[0], cube_cells(&q0, &g).unwrap());
        assert_eq!(c.d_used, 1.0);
        let cert = domination_certificate(&c, &f, AverageConvention::Tripled).unwrap();
        assert_eq!(cert.min_margin, 0.0);
    }

    #[test]
    fn two_bump_family_is_sparse_and_dominates() {
        let (g, q0) = setup(64);
        let f = TestFunction::TwoBump.sample(&g);
        for k in make_test_kernels().iter().take(2) {
            let c = build_sparse_family(&f, k, &cfg(0.25, 2), &q0, 1.0).unwrap();
            let v = verify_sparse(&c.family);
            assert!(v.passed && v.min_ratio >= 0.5, "{v:?}");
            for q in &c.family.cubes {
                assert!(q0.contains_cube(q));
            }
            for node in &c.nodes {
                assert!(2 * node.children_cells <= node.cells);
                assert!(node.level_set_cells << 4 <= node.cells || node.leaf);
            }
            let cert = domination_certificate(&c, &f, AverageConvention::Tripled).unwrap();
            assert!(cert.holds, "{cert:?}");
        }
    }

    #[test]
    fn spiky_input_forces_recursion() {
        let (g, q0) = setup(64);
        let mut v = vec![0.0; g.len()];
        v[g.nearest_cell(&[0.3, 0.6])] = 50.0;
        v[g.nearest_cell(&[0.8, 0.1])] = 5.0;
        let f = GridFunction::new(&g, v).unwrap();
        let k = &make_test_kernels()[0];
        let c = build_sparse_family(&f, k, &cfg(0.1, 1), &q0, 1.0).unwrap();
        assert!(c.family.len() > 1);
        assert!(verify_sparse(&c.family).passed);
        let cert = domination_certificate(&c, &f, AverageConvention::Tripled).unwrap();
        assert!(cert.holds, "{cert:?}");
        // Measures halve along every root-to-leaf path.
        for q in &c.family.cubes {
            if let Some(parent) = c.family.cubes.iter().filter(|p| p.contains_cube(q) && p.level < q.level).max_by_key(|p| p.level) {
                assert!(q.measure() * 2.0 <= parent.measure());
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (g, _) = setup(32);
        let f = GridFunction::zeros(&g);
        let k = &make_test_kernels()[0];
        let edge = DyadicCube::new(g.bbox(), 2, vec![0, 0]).unwrap();
        assert!(build_sparse_family(&f, k, &cfg(0.3, 1), &edge, 1.0).is_err());
        let q0 = DyadicCube::new(g.bbox(), 2, vec![2, 2]).unwrap();
        assert!(build_sparse_family(&f, k, &cfg(0.3, 1), &q0, 0.0).is_err());
    }

    #[test]
    fn surrogate_dominates_tail_energies() {
        let e = vec![vec![1.0; 16], vec![4.0; 16]];
        let s = local_surrogate(&e, &[2, 3], 4);
        // side 4 uses reach > 2 (second scale), side 2 uses reach > 1 (both).
        assert!(s.iter().all(|&v| (v - 5f64.sqrt()).abs() < 1e-15));
    }
}
