//! Boxes, staggered grids, rooted dyadic lattices and cube arithmetic.
//!
//! Grid samples sit at cell centers. Values are stored row-major with the
//! last axis varying fastest. Shifted lattices translate the standard lattice
//! by `s/3` of the box side per axis with `s` in `{0, 1, 2}`; all cube to cell
//! bookkeeping is done in exact integer arithmetic, so a cube of level `k`
//! always owns exactly `(N / 2^k)^n` cells.

use std::cmp::Ordering;

use crate::error::{invalid, Error, Result};

/// Axis-aligned cube `center + [-L, L]^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundingBox {
    center: Vec<f64>,
    half_width: f64,
}

impl BoundingBox {
    pub fn new(center: Vec<f64>, half_width: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(invalid("box dimension must be at least 1"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(invalid(format!("half width must be positive, got {half_width}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("box center must be finite"));
        }
        Ok(Self { center, half_width })
    }

    /// Box `[-L, L]^dim`.
    pub fn centered(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], half_width)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.center[axis] - self.half_width
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.dim() as i32)
    }

    pub fn is_origin_centered(&self) -> bool {
        self.center.iter().all(|&c| c == 0.0)
    }
}

/// Uniform staggered grid with `N` cells per axis over a box.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    bbox: BoundingBox,
    n: usize,
}

impl Grid {
    pub fn new(bbox: BoundingBox, points_per_axis: usize) -> Result<Self> {
        if points_per_axis < 8 || !points_per_axis.is_power_of_two() {
            return Err(invalid(format!(
                "points per axis must be a power of two >= 8, got {points_per_axis}"
            )));
        }
        let total = points_per_axis.checked_pow(bbox.dim() as u32);
        if total.is_none_or(|t| t > (1usize << 32)) {
            return Err(invalid("grid too large"));
        }
        Ok(Self { bbox, n: points_per_axis })
    }

    /// Grid on `[-L, L]^dim`.
    pub fn centered(dim: usize, half_width: f64, points_per_axis: usize) -> Result<Self> {
        Self::new(BoundingBox::centered(dim, half_width)?, points_per_axis)
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.bbox.side() / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Finest dyadic level, `log2 N`.
    pub fn levels(&self) -> u32 {
        self.n.trailing_zeros()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.bbox.lower(axis) + (i as f64 + 0.5) * self.spacing()
    }

    pub fn unflatten(&self, flat: usize) -> Vec<usize> {
        let d = self.dim();
        let mut out = vec![0; d];
        let mut rem = flat;
        for axis in (0..d).rev() {
            out[axis] = rem % self.n;
            rem /= self.n;
        }
        out
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coord(a, i))
            .collect()
    }

    /// Cell whose center is nearest to `x` (clamped to the grid).
    pub fn nearest_cell(&self, x: &[f64]) -> usize {
        let h = self.spacing();
        let idx: Vec<usize> = x
            .iter()
            .enumerate()
            .map(|(a, &xa)| {
                let u = ((xa - self.bbox.lower(a)) / h - 0.5).round();
                u.clamp(0.0, (self.n - 1) as f64) as usize
            })
            .collect();
        self.flatten(&idx)
    }
}

/// Cube of a rooted dyadic lattice, addressed by level and integer index.
///
/// `shift[a]` in `{0, 1, 2}` translates the lattice by `shift[a] * side / 3`
/// along axis `a`. For unshifted lattices `0 <= index[a] < 2^level`.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicCube {
    pub level: u32,
    pub index: Vec<i64>,
    pub root: BoundingBox,
    pub shift: Vec<u8>,
}

impl Eq for DyadicCube {}

impl Ord for DyadicCube {
    fn cmp(&self, other: &Self) -> Ordering {
        self.shift
            .cmp(&other.shift)
            .then(self.level.cmp(&other.level))
            .then_with(|| self.index.cmp(&other.index))
    }
}

impl PartialOrd for DyadicCube {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl DyadicCube {
    /// The root cube of the standard lattice over `root`.
    pub fn root_of(root: &BoundingBox) -> Self {
        Self {
            level: 0,
            index: vec![0; root.dim()],
            root: root.clone(),
            shift: vec![0; root.dim()],
        }
    }

    /// Cube of the standard lattice.
    pub fn new(root: &BoundingBox, level: u32, index: Vec<i64>) -> Result<Self> {
        if index.len() != root.dim() {
            return Err(invalid("cube index length must equal the dimension"));
        }
        if level > 62 {
            return Err(invalid("cube level too deep"));
        }
        let bound = 1i64 << level;
        if index.iter().any(|&m| m < 0 || m >= bound) {
            return Err(invalid(format!("cube index {index:?} out of range at level {level}")));
        }
        Ok(Self {
            level,
            index,
            root: root.clone(),
            shift: vec![0; root.dim()],
        })
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn side(&self) -> f64 {
        self.root.side() / (1u64 << self.level) as f64
    }

    pub fn measure(&self) -> f64 {
        self.side().powi(self.dim() as i32)
    }

    pub fn lower(&self, axis: usize) -> f64 {
        let l2 = self.root.side();
        self.root.lower(axis)
            + f64::from(self.shift[axis]) * l2 / 3.0
            + self.index[axis] as f64 * self.side()
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.lower(axis) + self.side()
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.lower(a) + 0.5 * self.side())
            .collect()
    }

    /// Half-open membership `lower <= x < upper`.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|a| self.lower(a) <= x[a] && x[a] < self.upper(a))
    }

    /// Children in lexicographic order, axis 0 most significant.
    pub fn children(&self) -> Vec<DyadicCube> {
        let n = self.dim();
        (0..1usize << n)
            .map(|code| {
                let index = (0..n)
                    .map(|a| 2 * self.index[a] + ((code >> (n - 1 - a)) & 1) as i64)
                    .collect();
                DyadicCube {
                    level: self.level + 1,
                    index,
                    root: self.root.clone(),
                    shift: self.shift.clone(),
                }
            })
            .collect()
    }

    pub fn parent(&self) -> Option<DyadicCube> {
        (self.level > 0).then(|| DyadicCube {
            level: self.level - 1,
            index: self.index.iter().map(|m| m.div_euclid(2)).collect(),
            root: self.root.clone(),
            shift: self.shift.clone(),
        })
    }

    /// True when `other` is `self` or a descendant in the same lattice.
    pub fn contains_cube(&self, other: &DyadicCube) -> bool {
        if other.shift != self.shift || other.level < self.level {
            return false;
        }
        let d = other.level - self.level;
        other
            .index
            .iter()
            .zip(&self.index)
            .all(|(&o, &s)| (o >> d) == s)
    }

    /// Whether the cube lies inside its root box (exact rational test).
    pub fn inside_root(&self) -> bool {
        let k = 1i64 << self.level;
        self.index.iter().zip(&self.shift).all(|(&m, &s)| {
            let lo = i64::from(s) * k + 3 * m;
            lo >= 0 && lo + 3 <= 3 * k
        })
    }
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

/// Cells per axis of a level-`level` cube on `g`, or an error if finer than a cell.
pub(crate) fn cells_per_side(level: u32, g: &Grid) -> Result<usize> {
    if level > g.levels() {
        return Err(Error::UnresolvableCube {
            side: g.bbox().side() / (1u64 << level.min(62)) as f64,
            spacing: g.spacing(),
        });
    }
    Ok(g.points_per_axis() >> level)
}

/// First cell along one axis owned by a cube with the given shift and index.
pub(crate) fn first_cell(shift: u8, n: usize, index: i64, c: usize) -> i64 {
    let num = 2 * (i64::from(shift) * n as i64 + 3 * index * c as i64) - 3;
    ceil_div(num, 6)
}

/// Per-axis half-open cell ranges `[start, end)` owned by `q` on `g`.
pub fn cube_cell_ranges(q: &DyadicCube, g: &Grid) -> Result<Vec<(usize, usize)>> {
    if q.root != *g.bbox() {
        return Err(Error::RootMismatch);
    }
    let c = cells_per_side(q.level, g)?;
    if !q.inside_root() {
        return Err(Error::CubeOutsideGrid);
    }
    let n = g.points_per_axis();
    Ok(q.index
        .iter()
        .zip(&q.shift)
        .map(|(&m, &s)| {
            let start = first_cell(s, n, m, c) as usize;
            (start, start + c)
        })
        .collect())
}

/// Flat indices of all cells in a product of axis ranges, row-major order.
pub(crate) fn cells_in_ranges(g: &Grid, ranges: &[(usize, usize)]) -> Vec<usize> {
    let total: usize = ranges.iter().map(|(s, e)| e - s).product();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(g.flatten(&idx));
        let mut axis = ranges.len();
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < ranges[axis].1 {
                break;
            }
            idx[axis] = ranges[axis].0;
        }
    }
}

/// Cells whose centers lie in `q`, sorted ascending.
pub fn cube_cells(q: &DyadicCube, g: &Grid) -> Result<Vec<usize>> {
    let ranges = cube_cell_ranges(q, g)?;
    Ok(cells_in_ranges(g, &ranges))
}

/// Per-axis cell ranges of the concentric triple `3Q`, clipped to the grid.
/// The flag reports whether clipping occurred.
pub fn triple_cell_ranges(q: &DyadicCube, g: &Grid) -> Result<(Vec<(usize, usize)>, bool)> {
    let ranges = cube_cell_ranges(q, g)?;
    let n = g.points_per_axis() as i64;
    let mut clipped = false;
    let out = ranges
        .iter()
        .map(|&(s, e)| {
            let c = (e - s) as i64;
            let lo = s as i64 - c;
            let hi = e as i64 + c;
            if lo < 0 || hi > n {
                clipped = true;
            }
            (lo.max(0) as usize, hi.min(n) as usize)
        })
        .collect();
    Ok((out, clipped))
}

/// Order-fixed sum used by every cube-sum path, so pyramid sums and
/// recursive sums agree bit for bit.
#[inline]
pub(crate) fn ordered_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |acc, v| acc + v)
}

fn cube_sum_rec(values: &[f64], g: &Grid, q: &DyadicCube) -> Result<f64> {
    if q.level == g.levels() {
        let ranges = cube_cell_ranges(q, g)?;
        let idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        return Ok(values[g.flatten(&idx)]);
    }
    let mut parts = Vec::with_capacity(1 << q.dim());
    for child in q.children() {
        parts.push(cube_sum_rec(values, g, &child)?);
    }
    Ok(ordered_sum(parts))
}

/// Cell sum of `values` over `q`, accumulated child by child down to cells.
pub(crate) fn cube_sum(values: &[f64], g: &Grid, q: &DyadicCube) -> Result<f64> {
    cube_cell_ranges(q, g)?;
    cube_sum_rec(values, g, q)
}

/// Midpoint-rule average of `f` over `q`.
///
/// Partial sums follow the dyadic tree, and cell counts are powers of two,
/// so a parent average equals the mean of its children's averages exactly.
pub fn cube_average(f: &crate::functions::GridFunction, q: &DyadicCube) -> Result<f64> {
    let g = f.grid();
    let c = cells_per_side(q.level, g)?;
    let count = c.pow(g.dim() as u32) as f64;
    Ok(cube_sum(f.values(), g, q)? / count)
}

/// Rooted dyadic lattice, optionally translated by thirds of the box side.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicLattice {
    pub root: BoundingBox,
    pub max_level: u32,
    pub shift: Vec<u8>,
}

impl DyadicLattice {
    pub fn standard(root: &BoundingBox, max_level: u32) -> Self {
        Self {
            root: root.clone(),
            max_level,
            shift: vec![0; root.dim()],
        }
    }

    pub fn shifted(root: &BoundingBox, max_level: u32, shift: Vec<u8>) -> Result<Self> {
        if shift.len() != root.dim() || shift.iter().any(|&s| s > 2) {
            return Err(invalid("lattice shift must have one entry in {0,1,2} per axis"));
        }
        Ok(Self {
            root: root.clone(),
            max_level,
            shift,
        })
    }

    /// All `3^n` third-shifted lattices, the standard one first.
    pub fn third_shifted_family(root: &BoundingBox, max_level: u32) -> Vec<Self> {
        let n = root.dim();
        (0..3usize.pow(n as u32))
            .map(|code| {
                let mut rem = code;
                let mut shift = vec![0u8; n];
                for a in (0..n).rev() {
                    shift[a] = (rem % 3) as u8;
                    rem /= 3;
                }
                Self {
                    root: root.clone(),
                    max_level,
                    shift,
                }
            })
            .collect()
    }

    pub fn is_standard(&self) -> bool {
        self.shift.iter().all(|&s| s == 0)
    }

    /// Inclusive per-axis index range of cubes at `level` lying inside the box.
    /// Empty ranges have `lo > hi`.
    pub fn index_range(&self, level: u32) -> Vec<(i64, i64)> {
        let k = 1i64 << level;
        self.shift
            .iter()
            .map(|&s| {
                let s = i64::from(s);
                let lo = ceil_div(-s * k, 3);
                let hi = (3 * k - s * k).div_euclid(3) - 1;
                (lo, hi)
            })
            .collect()
    }

    /// Cubes at `level` inside the box, lexicographic order.
    pub fn cubes_at(&self, level: u32) -> Vec<DyadicCube> {
        let ranges = self.index_range(level);
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            out.push(DyadicCube {
                level,
                index: idx.clone(),
                root: self.root.clone(),
                shift: self.shift.clone(),
            });
            let mut axis = idx.len();
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] <= ranges[axis].1 {
                    break;
                }
                idx[axis] = ranges[axis].0;
            }
        }
    }

    /// Deepest level used on `g`.
    pub fn top_level(&self, g: &Grid) -> u32 {
        self.max_level.min(g.levels())
    }

    /// Every cube of levels `0..=top_level(g)`, ordered by (level, index).
    pub fn cubes(&self, g: &Grid) -> Vec<DyadicCube> {
        (0..=self.top_level(g)).flat_map(|k| self.cubes_at(k)).collect()
    }
}

/// Dense per-level table of a cube functional over one lattice.
#[derive(Clone, Debug)]
pub(crate) struct LevelTable {
    pub lo: Vec<i64>,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl LevelTable {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn index_of(&self, flat: usize) -> Vec<i64> {
        let mut rem = flat;
        let mut out = vec![0i64; self.shape.len()];
        for a in (0..self.shape.len()).rev() {
            out[a] = self.lo[a] + (rem % self.shape[a]) as i64;
            rem /= self.shape[a];
        }
        out
    }

    fn flat_of(&self, index: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for ((&i, &lo), &n) in index.iter().zip(&self.lo).zip(&self.shape) {
            let off = i - lo;
            if off < 0 || off as usize >= n {
                return None;
            }
            flat = flat * n + off as usize;
        }
        Some(flat)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Combine {
    Sum,
    Min,
    Max,
}

/// Bottom-up cube table for one lattice, levels `0..=grid.levels()`.
/// Sums use [`ordered_sum`] over children, matching [`cube_average`].
#[derive(Clone, Debug)]
pub(crate) struct Pyramid {
    pub levels: Vec<LevelTable>,
}

impl Pyramid {
    pub fn build(g: &Grid, shift: &[u8], values: &[f64], combine: Combine) -> Pyramid {
        let n = g.dim();
        let npa = g.points_per_axis();
        let top = g.levels();
        let probe = DyadicLattice {
            root: g.bbox().clone(),
            max_level: top,
            shift: shift.to_vec(),
        };
        let mut levels: Vec<LevelTable> = Vec::with_capacity(top as usize + 1);
        for level in (0..=top).rev() {
            let ranges = probe.index_range(level);
            let shape: Vec<usize> = ranges
                .iter()
                .map(|(lo, hi)| if hi >= lo { (hi - lo + 1) as usize } else { 0 })
                .collect();
            let lo: Vec<i64> = ranges.iter().map(|r| r.0).collect();
            let total: usize = shape.iter().product();
            let mut table = LevelTable {
                lo,
                shape,
                data: vec![0.0; total],
            };
            if level == top {
                for flat in 0..total {
                    let index = table.index_of(flat);
                    let cell: Vec<usize> = index
                        .iter()
                        .zip(shift)
                        .map(|(&m, &s)| first_cell(s, npa, m, 1) as usize)
                        .collect();
                    table.data[flat] = values[g.flatten(&cell)];
                }
            } else {
                let child = levels.last().expect("finer level present");
                let mut kids = Vec::with_capacity(1 << n);
                for flat in 0..total {
                    let index = table.index_of(flat);
                    kids.clear();
                    for code in 0..1usize << n {
                        let ci: Vec<i64> = (0..n)
                            .map(|a| 2 * index[a] + ((code >> (n - 1 - a)) & 1) as i64)
                            .collect();
                        let f = child.flat_of(&ci).expect("children of inside cubes are inside");
                        kids.push(child.data[f]);
                    }
                    table.data[flat] = match combine {
                        Combine::Sum => ordered_sum(kids.iter().copied()),
                        Combine::Min => kids.iter().copied().fold(f64::INFINITY, f64::min),
                        Combine::Max => kids.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    };
                }
            }
            levels.push(table);
        }
        levels.reverse();
        Pyramid { levels }
    }

    pub fn get(&self, level: u32, index: &[i64]) -> Option<f64> {
        let t = self.levels.get(level as usize)?;
        t.flat_of(index).map(|f| t.data[f])
    }
}
