use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::fft::{Fft2, OffsetKernel};
use super::{check_cancellative, fractional_maximal, MollifierSpec, OperatorConfig};
use crate::error::{Error, Result};
use crate::functions::{GridFunction, SphereKernel};
use crate::geometry::{cells_in_ranges, cube_cell_ranges, triple_cell_ranges, DyadicLattice, Grid};

/// Mollifier radii (in cells) up to this use direct convolution.
const DIRECT_MOLLIFIER: usize = 3;
/// Largest cube side (in cells) evaluated by direct sums in local mode.
pub(crate) const DIRECT_SIDE: usize = 16;
const DIRECT_RADIUS: usize = 2 * DIRECT_SIDE - 1;

/// Rasterized kernels `[K_{beta,j}]_t * phi_{j-l}` for one scale `j`.
struct Scale {
    j: i32,
    /// Spectra of packed pairs `G_{t_a} + i G_{t_b}` at size `2N`.
    spectra: Vec<Vec<Complex64>>,
    /// Real kernels on offsets `[-DIRECT_RADIUS, DIRECT_RADIUS]^2`, one per `t`.
    crops: Vec<OffsetKernel>,
    /// Largest max-norm offset carrying a nonzero weight.
    reach: usize,
    /// Smallest Euclidean offset (in cells) carrying a nonzero weight.
    inner: f64,
}

/// Precomputed `mu~^l_{Omega,beta}` on one grid.
///
/// `mu~^l f(x)^2 = sum_j int_1^2 |(K_{j,t} * phi_{j-l} * f)(x)|^2 dt/t`, with
/// the `t` integral done by the midpoint rule in `log t`.
pub struct MuTilde {
    grid: Grid,
    fft: Fft2,
    scales: Vec<Scale>,
    weight: f64,
    l: Option<u32>,
}

fn next_pow2(v: usize) -> usize {
    v.next_power_of_two()
}

impl MuTilde {
    pub fn new(grid: &Grid, omega: &SphereKernel, cfg: &OperatorConfig) -> Result<Self> {
        cfg.validate(grid)?;
        check_cancellative(omega)?;
        let (jlo, jhi) = cfg.j_window(grid)?;
        let n = grid.points_per_axis();
        let h = grid.spacing();
        let ts: Vec<f64> = (0..cfg.t_unit_samples)
            .map(|i| 2f64.powf((i as f64 + 0.5) / cfg.t_unit_samples as f64))
            .collect();
        let fft = Fft2::new(2 * n);
        let scales: Vec<Scale> = (jlo..=jhi)
            .into_par_iter()
            .filter_map(|j| build_scale(j, &ts, n, h, omega, cfg, &fft))
            .collect();
        Ok(Self {
            grid: grid.clone(),
            fft,
            scales,
            weight: std::f64::consts::LN_2 / cfg.t_unit_samples as f64,
            l: cfg.l,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn l(&self) -> Option<u32> {
        self.l
    }

    /// Nonempty scales, ascending.
    pub fn scales(&self) -> Vec<i32> {
        self.scales.iter().map(|s| s.j).collect()
    }

    /// Max-norm reach (cells) of each nonempty scale.
    pub(crate) fn reaches(&self) -> Vec<usize> {
        self.scales.iter().map(|s| s.reach).collect()
    }

    pub fn eval(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.grid() != &self.grid {
            return Err(crate::error::invalid("function lives on a different grid"));
        }
        let e = self.scale_energies(f.values());
        let mut acc = vec![0.0; self.grid.len()];
        for ej in &e {
            acc.iter_mut().zip(ej).for_each(|(a, v)| *a += v);
        }
        GridFunction::new(&self.grid, acc.iter().map(|v| v.sqrt()).collect())
    }

    /// Per-scale energies `sum_t w |F_{j,t}(x)|^2` over the whole grid.
    pub(crate) fn scale_energies(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let n = self.grid.points_per_axis();
        let mut vhat = self.fft.embed_field(v, n);
        self.fft.forward(&mut vhat);
        self.scales
            .par_iter()
            .map(|s| {
                let mut e = vec![0.0; n * n];
                for z in &s.spectra {
                    let mut buf: Vec<Complex64> = z.iter().zip(&vhat).map(|(a, b)| a * b).collect();
                    self.fft.inverse(&mut buf);
                    let (re, im) = self.fft.extract(&buf, n);
                    for ((acc, a), b) in e.iter_mut().zip(&re).zip(&im) {
                        *acc += self.weight * a * a;
                        *acc += self.weight * b * b;
                    }
                }
                e
            })
            .collect()
    }

    /// Per-scale energies at the cells of `dst` for input `v` supported in
    /// `src`. Scales that cannot connect the two boxes are returned as zeros.
    /// Results are row-major over `dst`.
    pub(crate) fn local_energies(
        &self,
        v: &[f64],
        src: &[(usize, usize)],
        dst: &[(usize, usize)],
    ) -> Vec<Vec<f64>> {
        let g = &self.grid;
        let dst_cells = cells_in_ranges(g, dst);
        let side = dst.iter().map(|r| r.1 - r.0).max().unwrap_or(0);
        // Largest Euclidean offset (in cells) between the boxes.
        let span: f64 = src
            .iter()
            .zip(dst)
            .map(|(s, d)| {
                let a = (d.1 as i64 - 1 - s.0 as i64).abs();
                let b = (s.1 as i64 - 1 - d.0 as i64).abs();
                (a.max(b) as f64).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        let max_offset = src
            .iter()
            .zip(dst)
            .map(|(s, d)| (d.1 as i64 - 1 - s.0 as i64).abs().max((s.1 as i64 - 1 - d.0 as i64).abs()))
            .max()
            .unwrap_or(0) as usize;
        let direct = side <= DIRECT_SIDE && max_offset <= DIRECT_RADIUS;
        let active: Vec<bool> = self.scales.iter().map(|s| s.inner <= span + 1e-9).collect();
        if !direct {
            let full = {
                let mut vv = vec![0.0; g.len()];
                for c in cells_in_ranges(g, src) {
                    vv[c] = v[c];
                }
                vv
            };
            let e = self.scale_energies(&full);
            return e
                .into_iter()
                .zip(&active)
                .map(|(ej, &a)| {
                    if a {
                        dst_cells.iter().map(|&c| ej[c]).collect()
                    } else {
                        vec![0.0; dst_cells.len()]
                    }
                })
                .collect();
        }
        let n = g.points_per_axis();
        let sources: Vec<(i64, i64, f64)> = cells_in_ranges(g, src)
            .into_iter()
            .filter(|&c| v[c] != 0.0)
            .map(|c| ((c / n) as i64, (c % n) as i64, v[c]))
            .collect();
        self.scales
            .par_iter()
            .zip(&active)
            .map(|(s, &a)| {
                let mut e = vec![0.0; dst_cells.len()];
                if !a || sources.is_empty() {
                    return e;
                }
                for k in &s.crops {
                    for (slot, &x) in e.iter_mut().zip(&dst_cells) {
                        let (xr, xc) = ((x / n) as i64, (x % n) as i64);
                        let mut acc = 0.0;
                        for &(yr, yc, val) in &sources {
                            acc += k.get(xr - yr, xc - yc) * val;
                        }
                        *slot += self.weight * acc * acc;
                    }
                }
                e
            })
            .collect()
    }
}

/// Annulus kernel `(2^j t)^{-1} Omega(x') |x|^{beta-1}` on `[-w, w]^2`, with
/// the cell measure folded in.
fn annulus_kernel(
    j: i32,
    t: f64,
    w: usize,
    h: f64,
    omega: &SphereKernel,
    beta: f64,
) -> OffsetKernel {
    let mut k = OffsetKernel::zeros(w);
    let a = 2f64.powi(j) * t;
    let b = 2.0 * a;
    let width = k.width();
    for (i, v) in k.data.iter_mut().enumerate() {
        let dr = (i / width) as f64 - w as f64;
        let dc = (i % width) as f64 - w as f64;
        let d = (dr * dr + dc * dc).sqrt() * h;
        if d >= a && d <= b && d > 0.0 {
            *v = omega.eval(&[dr, dc]) * d.powf(beta - 1.0) * h * h / a;
        }
    }
    k
}

/// `k * phi` on offsets `[-out, out]^2`, where `k` has radius `out + R_phi`.
fn mollify(k: &OffsetKernel, phi: &OffsetKernel, out: usize) -> OffsetKernel {
    let rp = phi.radius as i64;
    let mut res = OffsetKernel::zeros(out);
    if phi.radius <= DIRECT_MOLLIFIER {
        let w = res.width();
        let o = out as i64;
        for (i, v) in res.data.iter_mut().enumerate() {
            let dr = (i / w) as i64 - o;
            let dc = (i % w) as i64 - o;
            let mut s = 0.0;
            for sr in -rp..=rp {
                for sc in -rp..=rp {
                    s += phi.get(sr, sc) * k.get(dr - sr, dc - sc);
                }
            }
            *v = s;
        }
        return res;
    }
    let p = next_pow2(2 * k.radius + 2 * phi.radius + 1);
    let fft = Fft2::new(p);
    let mut a = k.embed_pair(None, &fft);
    fft.forward(&mut a);
    let mut b = phi.embed_pair(None, &fft);
    fft.forward(&mut b);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y);
    fft.inverse(&mut a);
    let s = 1.0 / (p * p) as f64;
    let o = out as i64;
    let w = res.width();
    for (i, v) in res.data.iter_mut().enumerate() {
        let dr = (i / w) as i64 - o;
        let dc = (i % w) as i64 - o;
        *v = a[fft.wrap(dr, dc)].re * s;
    }
    res
}

fn build_scale(
    j: i32,
    ts: &[f64],
    n: usize,
    h: f64,
    omega: &SphereKernel,
    cfg: &OperatorConfig,
    fft: &Fft2,
) -> Option<Scale> {
    let spec = MollifierSpec;
    let phi = cfg.l.and_then(|l| spec.discrete(j - l as i32, h));
    let r_cont = match (cfg.l, &phi) {
        (Some(l), Some(_)) => spec.radius(j - l as i32),
        _ => 0.0,
    };
    let rp = phi.as_ref().map_or(0, |p| p.radius);
    let out = n - 1;
    let w = out + rp;
    let far = 2f64.sqrt() * w as f64 * h;
    let mut kernels = Vec::with_capacity(ts.len());
    for &t in ts {
        let a = 2f64.powi(j) * t;
        if a > far || 2.0 * a < h {
            kernels.push(OffsetKernel::zeros(0));
            continue;
        }
        let k = annulus_kernel(j, t, w, h, omega, cfg.beta);
        let mut g = match &phi {
            Some(p) => mollify(&k, p, out),
            None => k,
        };
        if phi.is_some() {
            // Drop transform noise outside the exact support of K * phi.
            let (lo, hi) = (a - r_cont - 1e-9, 2.0 * a + r_cont + 1e-9);
            let width = g.width();
            let o = g.radius as f64;
            for (i, v) in g.data.iter_mut().enumerate() {
                let dr = (i / width) as f64 - o;
                let dc = (i % width) as f64 - o;
                let d = (dr * dr + dc * dc).sqrt() * h;
                if d < lo || d > hi {
                    *v = 0.0;
                }
            }
        }
        kernels.push(g);
    }
    let mut reach = 0usize;
    let mut inner = f64::INFINITY;
    for k in &kernels {
        for (dr, dc, v) in k.entries() {
            if v != 0.0 {
                reach = reach.max(dr.unsigned_abs().max(dc.unsigned_abs()) as usize);
                inner = inner.min(((dr * dr + dc * dc) as f64).sqrt());
            }
        }
    }
    if !inner.is_finite() {
        return None;
    }
    let spectra = kernels
        .chunks(2)
        .map(|c| {
            let mut z = c[0].embed_pair(c.get(1), fft);
            fft.forward(&mut z);
            z
        })
        .collect();
    let crops = if inner <= DIRECT_RADIUS as f64 * 2f64.sqrt() {
        kernels.iter().map(|k| k.crop(DIRECT_RADIUS)).collect()
    } else {
        Vec::new()
    };
    Some(Scale {
        j,
        spectra,
        crops,
        reach,
        inner,
    })
}

/// `mu~^l_{Omega,beta} f` with `l` and the scale window taken from `cfg`.
pub fn mu_tilde_l(f: &GridFunction, omega: &SphereKernel, cfg: &OperatorConfig) -> Result<GridFunction> {
    MuTilde::new(f.grid(), omega, cfg)?.eval(f)
}

/// Grand maximal function sampled on a subset of cells, with the pointwise
/// comparison against `l ||Omega|| M_beta f + mu~^l f`.
#[derive(Clone, Debug)]
pub struct GrandMaximalReport {
    pub eval_cells: Vec<usize>,
    pub values: Vec<f64>,
    pub mu_tilde: Vec<f64>,
    pub m_beta: Vec<f64>,
    /// Largest observed ratio `values / (l ||Omega|| M_beta f + mu~ f)`.
    pub constant: f64,
}

/// Cells whose multi-index is divisible by `stride` on every axis.
pub fn subsampled_cells(grid: &Grid, stride: usize) -> Vec<usize> {
    (0..grid.len())
        .filter(|&c| grid.unflatten(c).iter().all(|i| i % stride.max(1) == 0))
        .collect()
}

/// `sup_{Q ∋ x} max_{xi ∈ Q} mu~^l(f chi_{R^n \ 3Q})(xi)` over the cubes of
/// `pool`, evaluated at `eval_cells`.
///
/// The essential supremum over `Q` is replaced by the maximum over the grid
/// samples in `Q`.
pub fn grand_maximal(
    f: &GridFunction,
    omega: &SphereKernel,
    cfg: &OperatorConfig,
    eval_cells: &[usize],
    pool: &DyadicLattice,
) -> Result<GrandMaximalReport> {
    let g = f.grid();
    let mt = MuTilde::new(g, omega, cfg)?;
    let cubes = pool.cubes(g);
    if cubes.is_empty() {
        return Err(Error::EmptyCubePool);
    }
    let mut is_eval = vec![usize::MAX; g.len()];
    for (k, &c) in eval_cells.iter().enumerate() {
        is_eval[c] = k;
    }
    let per_cube: Vec<Option<(Vec<usize>, f64)>> = cubes
        .par_iter()
        .map(|q| -> Result<Option<(Vec<usize>, f64)>> {
            let cells = cells_in_ranges(g, &cube_cell_ranges(q, g)?);
            let hits: Vec<usize> = cells
                .iter()
                .filter(|&&c| is_eval[c] != usize::MAX)
                .map(|&c| is_eval[c])
                .collect();
            if hits.is_empty() {
                return Ok(None);
            }
            let mut v = f.values().to_vec();
            for c in cells_in_ranges(g, &triple_cell_ranges(q, g)?.0) {
                v[c] = 0.0;
            }
            let out = mt.eval(&GridFunction::new(g, v)?)?;
            let m = cells.iter().map(|&c| out.values()[c]).fold(0.0, f64::max);
            Ok(Some((hits, m)))
        })
        .collect::<Result<_>>()?;
    let mut values = vec![0.0f64; eval_cells.len()];
    for (hits, m) in per_cube.into_iter().flatten() {
        for k in hits {
            values[k] = values[k].max(m);
        }
    }
    let mu = mt.eval(f)?;
    let mb = fractional_maximal(f, cfg.beta)?;
    let l = cfg.l.unwrap_or(1) as f64;
    let mu_tilde: Vec<f64> = eval_cells.iter().map(|&c| mu.values()[c]).collect();
    let m_beta: Vec<f64> = eval_cells.iter().map(|&c| mb.values()[c]).collect();
    let constant = values
        .iter()
        .zip(&mu_tilde)
        .zip(&m_beta)
        .filter_map(|((v, u), m)| {
            let d = l * omega.sup_norm() * m + u;
            (d > 0.0).then(|| v / d)
        })
        .fold(0.0, f64::max);
    Ok(GrandMaximalReport {
        eval_cells: eval_cells.to_vec(),
        values,
        mu_tilde,
        m_beta,
        constant,
    })
}
