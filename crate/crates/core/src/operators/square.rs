use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::fft::Fft2;
use super::{check_cancellative, OperatorConfig};
use crate::error::{invalid, Result};
use crate::functions::{BmoSymbol, GridFunction, SphereKernel};

/// Radius in cells below which every distinct radius is a ladder point.
const EXACT_CELLS: i64 = 8;

/// Kernel entries sorted by distance together with the outer `t` ladder.
struct Setup {
    n: usize,
    /// `(dr, dc, weight)` sorted by `|d|`.
    entries: Vec<(i64, i64, f64)>,
    /// Number of entries with `|d| h <= t_k`.
    counts: Vec<usize>,
    /// Quadrature coefficient of `F(x, t_k)^2`, tail included in the last.
    coef: Vec<f64>,
}

impl Setup {
    fn new(f: &GridFunction, omega: &SphereKernel, cfg: &OperatorConfig) -> Result<Self> {
        let g = f.grid();
        cfg.validate(g)?;
        check_cancellative(omega)?;
        let n = g.points_per_axis();
        let h = g.spacing();
        let beta = cfg.beta;
        let r = n as i64 - 1;
        let mut raw: Vec<(i64, i64, i64)> = Vec::with_capacity((2 * n - 1) * (2 * n - 1));
        for dr in -r..=r {
            for dc in -r..=r {
                if dr != 0 || dc != 0 {
                    raw.push((dr * dr + dc * dc, dr, dc));
                }
            }
        }
        raw.sort_unstable();
        let entries: Vec<(i64, i64, f64)> = raw
            .iter()
            .map(|&(d2, dr, dc)| {
                let dist = (d2 as f64).sqrt() * h;
                (dr, dc, omega.eval(&[dr as f64, dc as f64]) * dist.powf(beta - 1.0) * h * h)
            })
            .collect();
        // Every distinct radius up to EXACT_CELLS is a ladder point, where
        // F is a step function and dt/t^3 integrates exactly. Beyond, a log
        // ladder up to the first t reaching 2 L sqrt(2) with the trapezoid
        // rule in log t.
        let s = cfg.t_samples_per_octave as f64;
        let t_max = 2.0 * g.bbox().half_width() * 2f64.sqrt();
        let r0 = EXACT_CELLS.min(r);
        let mut t: Vec<f64> = Vec::new();
        for &(d2, ..) in &raw {
            if d2 > r0 * r0 {
                break;
            }
            if t.last() != Some(&((d2 as f64).sqrt() * h)) {
                t.push((d2 as f64).sqrt() * h);
            }
        }
        let exact = t.len() - 1;
        let t0 = t[exact];
        let mut i = 1;
        while *t.last().expect("nonempty") < t_max {
            t.push(t0 * 2f64.powf(i as f64 / s));
            i += 1;
        }
        let du = std::f64::consts::LN_2 / s;
        let last = t.len() - 1;
        let coef = (0..t.len())
            .map(|k| {
                let tk = t[k];
                if k < exact {
                    return 0.5 / (tk * tk) - 0.5 / (t[k + 1] * t[k + 1]);
                }
                let w = if k == exact || k == last { du / 2.0 } else { du };
                // The tail int_{t_K}^inf dt / t^3 = 1 / (2 t_K^2).
                let tail = if k == last { 0.5 } else { 0.0 };
                (w + tail) / (tk * tk)
            })
            .collect();
        let counts = t
            .iter()
            .map(|&tk| {
                let lim = (tk / h) * (tk / h) * (1.0 + 1e-12);
                raw.partition_point(|&(d2, ..)| (d2 as f64) <= lim)
            })
            .collect();
        Ok(Self {
            n,
            entries,
            counts,
            coef,
        })
    }

    /// Index pairs of ladder points with nonempty balls.
    fn pairs(&self) -> Vec<(usize, Option<usize>)> {
        let ks: Vec<usize> = (0..self.counts.len()).filter(|&k| self.counts[k] > 0).collect();
        ks.chunks(2).map(|c| (c[0], c.get(1).copied())).collect()
    }

    /// Spectrum of `A_a + i A_b`, where `A_k` is the ball-truncated kernel.
    fn pair_spectrum(&self, fft: &Fft2, a: usize, b: Option<usize>) -> Vec<Complex64> {
        let mut z = fft.zeros();
        for &(dr, dc, v) in &self.entries[..self.counts[a]] {
            z[fft.wrap(dr, dc)].re = v;
        }
        if let Some(b) = b {
            for &(dr, dc, v) in &self.entries[..self.counts[b]] {
                z[fft.wrap(dr, dc)].im = v;
            }
        }
        fft.forward(&mut z);
        z
    }
}

/// `IFFT(z * vhat)` split into the convolutions with the two packed kernels.
fn apply(fft: &Fft2, z: &[Complex64], vhat: &[Complex64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut buf: Vec<Complex64> = z.iter().zip(vhat).map(|(a, b)| a * b).collect();
    fft.inverse(&mut buf);
    fft.extract(&buf, n)
}

fn spectrum(fft: &Fft2, v: &[f64], n: usize) -> Vec<Complex64> {
    let mut b = fft.embed_field(v, n);
    fft.forward(&mut b);
    b
}

fn reduce(n: usize, parts: Vec<Vec<f64>>) -> Vec<f64> {
    let mut acc = vec![0.0; n * n];
    for p in parts {
        acc.iter_mut().zip(&p).for_each(|(a, v)| *a += v);
    }
    acc.iter().map(|v| v.sqrt()).collect()
}

/// `mu_{Omega,beta} f(x) = (int_0^inf |F(x,t)|^2 dt/t^3)^{1/2}` with
/// `F(x,t) = int_{|x-y| <= t} Omega(x-y) |x-y|^{beta-1} f(y) dy`.
///
/// Balls include a cell when its center lies inside. The outer integral is
/// exact over small radii, then a trapezoid rule in `log t`, with the exact
/// tail beyond the ladder.
pub fn marcinkiewicz(
    f: &GridFunction,
    omega: &SphereKernel,
    cfg: &OperatorConfig,
) -> Result<GridFunction> {
    let s = Setup::new(f, omega, cfg)?;
    let n = s.n;
    let fft = Fft2::new(2 * n);
    let fhat = spectrum(&fft, f.values(), n);
    let parts: Vec<Vec<f64>> = s
        .pairs()
        .par_iter()
        .map(|&(a, b)| {
            let z = s.pair_spectrum(&fft, a, b);
            let (re, im) = apply(&fft, &z, &fhat, n);
            let (ca, cb) = (s.coef[a], b.map_or(0.0, |b| s.coef[b]));
            re.iter()
                .zip(&im)
                .map(|(x, y)| ca * x * x + if b.is_some() { cb * y * y } else { 0.0 })
                .collect()
        })
        .collect();
    GridFunction::new(f.grid(), reduce(n, parts))
}

/// Commutator `mu^b_{Omega,beta}`: the inner integrand carries `b(x) - b(y)`.
///
/// The symbol is recentred at its first sample, which leaves the commutator
/// unchanged and makes constant symbols give exact zeros. Each kernel is
/// applied to `f` and `(b - c) f` separately, so doubling `b` doubles the
/// output exactly.
pub fn commutator(
    f: &GridFunction,
    b: &BmoSymbol,
    omega: &SphereKernel,
    cfg: &OperatorConfig,
) -> Result<GridFunction> {
    let bf = b.function();
    if bf.grid() != f.grid() {
        return Err(invalid("symbol and function live on different grids"));
    }
    let s = Setup::new(f, omega, cfg)?;
    let n = s.n;
    let c = bf.values()[0];
    let bt: Vec<f64> = bf.values().iter().map(|v| v - c).collect();
    let btf: Vec<f64> = bt.iter().zip(f.values()).map(|(x, y)| x * y).collect();
    let fft = Fft2::new(2 * n);
    let fhat = spectrum(&fft, f.values(), n);
    let ghat = spectrum(&fft, &btf, n);
    let parts: Vec<Vec<f64>> = s
        .pairs()
        .par_iter()
        .map(|&(a, b)| {
            let z = s.pair_spectrum(&fft, a, b);
            let (f_a, f_b) = apply(&fft, &z, &fhat, n);
            let (g_a, g_b) = apply(&fft, &z, &ghat, n);
            let (ca, cb) = (s.coef[a], b.map_or(0.0, |b| s.coef[b]));
            (0..n * n)
                .map(|x| {
                    let ua = bt[x] * f_a[x] - g_a[x];
                    let ub = bt[x] * f_b[x] - g_b[x];
                    ca * ua * ua + if b.is_some() { cb * ub * ub } else { 0.0 }
                })
                .collect()
        })
        .collect();
    GridFunction::new(f.grid(), reduce(n, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{make_test_kernels, TestFunction};
    use crate::geometry::Grid;
    use crate::operators::fractional_integral;

    fn kernels() -> Vec<SphereKernel> {
        make_test_kernels()
    }

    #[test]
    fn zero_and_radial_annihilation() {
        let g = Grid::centered(2, 2.0, 64).unwrap();
        let cfg = OperatorConfig::new(0.3);
        let z = GridFunction::zeros(&g);
        let f = TestFunction::Gaussian.sample(&g);
        let x0 = g.nearest_cell(&[0.5, 0.5]);
        for k in kernels() {
            assert!(marcinkiewicz(&z, &k, &cfg).unwrap().values().iter().all(|v| *v == 0.0));
            let m = marcinkiewicz(&f, &k, &cfg).unwrap();
            assert!(m.values()[x0] <= 1e-6 * f.sup_norm(), "{}: {}", k.name(), m.values()[x0]);
        }
    }

    #[test]
    fn pointwise_domination_by_fractional_integral() {
        let g = Grid::centered(2, 2.0, 64).unwrap();
        for beta in [0.1, 0.4] {
            let cfg = OperatorConfig::new(beta);
            for tf in [TestFunction::Gaussian, TestFunction::Disk, TestFunction::TwoBump] {
                let f = tf.sample(&g);
                let i = fractional_integral(&f.abs(), beta).unwrap();
                let tol = 1e-3 * i.sup_norm();
                for k in kernels() {
                    let m = marcinkiewicz(&f, &k, &cfg).unwrap();
                    for (a, b) in m.values().iter().zip(i.values()) {
                        assert!(a - k.sup_norm() * b <= tol);
                    }
                }
            }
        }
    }

    #[test]
    fn homogeneity() {
        let g = Grid::centered(2, 2.0, 32).unwrap();
        let f = TestFunction::TwoBump.sample(&g);
        let k = &kernels()[1];
        let cfg = OperatorConfig::new(0.5);
        let a = marcinkiewicz(&f, k, &cfg).unwrap();
        let b = marcinkiewicz(&f.scale(-4.0), k, &cfg).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| 4.0 * x == *y));
        let c = marcinkiewicz(&f.scale(0.3), k, &cfg).unwrap();
        for (x, y) in a.values().iter().zip(c.values()) {
            assert!((0.3 * x - y).abs() <= 1e-12 * a.sup_norm());
        }
    }

    #[test]
    fn rejects_non_cancellative_kernels() {
        let g = Grid::centered(2, 2.0, 16).unwrap();
        let f = TestFunction::Gaussian.sample(&g);
        let k = SphereKernel::unprojected("biased", vec![1.0; 16]).unwrap();
        assert!(matches!(
            marcinkiewicz(&f, &k, &OperatorConfig::new(0.3)),
            Err(crate::Error::KernelNotCancellative(_))
        ));
    }

    #[test]
    fn t_refinement_is_stable() {
        let g = Grid::centered(2, 2.0, 64).unwrap();
        let f = TestFunction::TwoBump.sample(&g);
        let k = &kernels()[0];
        let mut cfg = OperatorConfig::new(0.3);
        let a = marcinkiewicz(&f, k, &cfg).unwrap();
        cfg.t_samples_per_octave = 16;
        let b = marcinkiewicz(&f, k, &cfg).unwrap();
        let diff: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum();
        let norm: f64 = a.values().iter().map(|x| x * x).sum();
        assert!((diff / norm).sqrt() < 0.005, "{}", (diff / norm).sqrt());
    }

    #[test]
    fn translation_equivariance() {
        let g = Grid::centered(2, 2.0, 32).unwrap();
        let f = TestFunction::Gaussian.sample(&g);
        let k = &kernels()[2];
        let cfg = OperatorConfig::new(0.3);
        let a = marcinkiewicz(&f, k, &cfg).unwrap();
        let b = marcinkiewicz(&f.shift_cells(&[-2, -3]), k, &cfg).unwrap();
        let tol = 1e-12 * a.sup_norm();
        for r in 4..28usize {
            for c in 4..28usize {
                assert!((a.values()[r * 32 + c] - b.values()[(r - 2) * 32 + c - 3]).abs() <= tol);
            }
        }
    }

    #[test]
    fn commutator_constant_and_doubling() {
        let g = Grid::centered(2, 2.0, 32).unwrap();
        let f = TestFunction::Disk.sample(&g);
        let k = &kernels()[0];
        let cfg = OperatorConfig::new(0.4);
        let five = BmoSymbol::with_default_lattices(GridFunction::constant(&g, 5.0)).unwrap();
        let out = commutator(&f, &five, k, &cfg).unwrap();
        assert!(out.values().iter().all(|v| *v == 0.0));
        let b = BmoSymbol::log_abs(&g).unwrap();
        let one = commutator(&f, &b, k, &cfg).unwrap();
        let two = commutator(&f, &b.scaled(2.0).unwrap(), k, &cfg).unwrap();
        assert!(one.values().iter().zip(two.values()).all(|(x, y)| 2.0 * x == *y));
        assert!(one.sup_norm() > 0.0);
    }

    #[test]
    fn commutator_below_brute_force_bound() {
        let g = Grid::centered(2, 2.0, 32).unwrap();
        let n = 32;
        let h = g.spacing();
        let beta = 0.4;
        let f = TestFunction::Disk.sample(&g);
        let k = &kernels()[2];
        let b = BmoSymbol::log_abs(&g).unwrap();
        let out = commutator(&f, &b, k, &OperatorConfig::new(beta)).unwrap();
        let bv = b.function().values();
        // Brute-force sum_y |b(x) - b(y)| |x - y|^{beta - 2} |f(y)| h^2,
        // scaled by the 1/sqrt(2) from the t integral and ||Omega||.
        for x in [0usize, 100, 517, 700, 1023] {
            let (xr, xc) = ((x / n) as f64, (x % n) as f64);
            let mut s = 0.0;
            for y in 0..n * n {
                if y == x || f.values()[y] == 0.0 {
                    continue;
                }
                let (yr, yc) = ((y / n) as f64, (y % n) as f64);
                let d = ((xr - yr).powi(2) + (xc - yc).powi(2)).sqrt() * h;
                s += (bv[x] - bv[y]).abs() * d.powf(beta - 2.0) * f.values()[y].abs() * h * h;
            }
            let bound = k.sup_norm() * s / 2f64.sqrt();
            assert!(out.values()[x] <= 1.05 * bound, "{x}: {} vs {bound}", out.values()[x]);
        }
    }
}
