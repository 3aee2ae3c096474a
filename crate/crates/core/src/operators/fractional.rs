use std::f64::consts::PI;

use gauss_quad::GaussLegendre;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::fft::{Fft2, OffsetKernel};
use super::{check_beta, check_dim, SingularCellRule};
use crate::error::Result;
use crate::functions::GridFunction;

/// Offsets within this max-norm distance use the exact cell integral.
const NEAR_FIELD: i64 = 2;
const NEAR_NODES: usize = 24;

pub(crate) fn gl_nodes(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(std::num::NonZeroUsize::new(n).expect("positive degree"));
    rule.as_node_weight_pairs().to_vec()
}

/// `int` of `|u|^{beta - 2}` over the unit cell centered at `(i, j)`.
fn unit_cell_integral(i: i64, j: i64, beta: f64, nodes: &[(f64, f64)]) -> f64 {
    let e = (beta - 2.0) / 2.0;
    let mut s = 0.0;
    for &(xu, wu) in nodes {
        let u = i as f64 + 0.5 * xu;
        for &(xv, wv) in nodes {
            let v = j as f64 + 0.5 * xv;
            s += 0.25 * wu * wv * (u * u + v * v).powf(e);
        }
    }
    s
}

/// Weights of `I_beta` on offsets `[-(N-1), N-1]^2`, including the `h^2`
/// cell measure.
pub(crate) fn integral_kernel(n: usize, h: f64, beta: f64, rule: SingularCellRule) -> OffsetKernel {
    let r = n - 1;
    let mut k = OffsetKernel::zeros(r);
    let w = k.width();
    let hb = h.powf(beta);
    let nodes = gl_nodes(NEAR_NODES);
    k.data.par_iter_mut().enumerate().for_each(|(idx, v)| {
        let dr = (idx / w) as i64 - r as i64;
        let dc = (idx % w) as i64 - r as i64;
        *v = if dr == 0 && dc == 0 {
            match rule {
                // 2 pi rho^beta / beta with rho = h / sqrt(pi).
                SingularCellRule::PolarCorrection => 2.0 * PI * PI.powf(-beta / 2.0) / beta * hb,
                SingularCellRule::Drop => 0.0,
            }
        } else if dr.abs().max(dc.abs()) <= NEAR_FIELD {
            hb * unit_cell_integral(dr, dc, beta, &nodes)
        } else {
            hb * ((dr * dr + dc * dc) as f64).powf((beta - 2.0) / 2.0)
        };
    });
    k
}

/// Linear convolution of an `n x n` field with a kernel of radius `n - 1`.
pub(crate) fn convolve(kernel: &OffsetKernel, values: &[f64], n: usize) -> Vec<f64> {
    let fft = Fft2::new(2 * n);
    let mut a = fft.embed_field(values, n);
    fft.forward(&mut a);
    let mut b = kernel.embed_pair(None, &fft);
    fft.forward(&mut b);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y);
    fft.inverse(&mut a);
    fft.extract(&a, n).0
}

fn finish(f: &GridFunction, mut out: Vec<f64>) -> Result<GridFunction> {
    if f.is_nonnegative() {
        out.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    GridFunction::new(f.grid(), out)
}

/// `I_beta f` with the area-equivalent disk self-cell correction.
pub fn fractional_integral(f: &GridFunction, beta: f64) -> Result<GridFunction> {
    fractional_integral_with(f, beta, SingularCellRule::PolarCorrection)
}

/// `I_beta f` with a chosen self-cell rule.
///
/// Offsets near the singularity use the exact integral of `|x - y|^{beta-2}`
/// over the source cell. Farther cells use the midpoint rule.
pub fn fractional_integral_with(
    f: &GridFunction,
    beta: f64,
    rule: SingularCellRule,
) -> Result<GridFunction> {
    let g = f.grid();
    check_dim(g)?;
    check_beta(beta, g.dim())?;
    let n = g.points_per_axis();
    let k = integral_kernel(n, g.spacing(), beta, rule);
    finish(f, convolve(&k, f.values(), n))
}

/// `M_beta f = sup_r r^{beta - n} int_{|x-y| <= r} |f|` over the radius
/// ladder `h 2^k` up to the first radius reaching `4 L sqrt(n)`.
pub fn fractional_maximal(f: &GridFunction, beta: f64) -> Result<GridFunction> {
    let g = f.grid();
    check_dim(g)?;
    if !(0.0..2.0).contains(&beta) {
        return Err(crate::error::invalid(format!(
            "beta must lie in [0, 2), got {beta}"
        )));
    }
    let n = g.points_per_axis();
    let h = g.spacing();
    let top = 4.0 * g.bbox().half_width() * 2f64.sqrt();
    let mut radii = vec![h];
    while *radii.last().expect("nonempty") < top {
        radii.push(2.0 * radii.last().expect("nonempty"));
    }
    let fft = Fft2::new(2 * n);
    let abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let mut fhat = fft.embed_field(&abs, n);
    fft.forward(&mut fhat);
    let ball = |r: f64| {
        let rad = n - 1;
        let mut k = OffsetKernel::zeros(rad);
        let w = k.width();
        let lim = (r / h) * (r / h) * (1.0 + 1e-12);
        for (i, v) in k.data.iter_mut().enumerate() {
            let dr = (i / w) as f64 - rad as f64;
            let dc = (i % w) as f64 - rad as f64;
            if dr * dr + dc * dc <= lim {
                *v = h * h;
            }
        }
        k
    };
    let pairs: Vec<(f64, Option<f64>)> = radii
        .chunks(2)
        .map(|c| (c[0], c.get(1).copied()))
        .collect();
    let maps: Vec<(Vec<f64>, Option<Vec<f64>>)> = pairs
        .par_iter()
        .map(|&(ra, rb)| {
            let ka = ball(ra);
            let kb = rb.map(ball);
            let mut z = ka.embed_pair(kb.as_ref(), &fft);
            fft.forward(&mut z);
            let mut buf: Vec<Complex64> = fhat.iter().zip(&z).map(|(a, b)| a * b).collect();
            fft.inverse(&mut buf);
            let (re, im) = fft.extract(&buf, n);
            let sa = ra.powf(beta - 2.0);
            let a = re.iter().map(|v| v.max(0.0) * sa).collect();
            let b = rb.map(|r| {
                let s = r.powf(beta - 2.0);
                im.iter().map(|v| v.max(0.0) * s).collect()
            });
            (a, b)
        })
        .collect();
    let mut out = vec![0.0f64; n * n];
    for (a, b) in &maps {
        out.iter_mut().zip(a).for_each(|(o, v)| *o = o.max(*v));
        if let Some(b) = b {
            out.iter_mut().zip(b).for_each(|(o, v)| *o = o.max(*v));
        }
    }
    GridFunction::new(g, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{disk_indicator, TestFunction};
    use crate::geometry::Grid;

    fn gaussian(g: &Grid) -> GridFunction {
        TestFunction::Gaussian.sample(g)
    }

    #[test]
    fn cell_integral_matches_far_field_asymptotics() {
        let nodes = gl_nodes(NEAR_NODES);
        // Far from the singularity the cell average approaches the midpoint value.
        let v = unit_cell_integral(40, 3, 0.5, &nodes);
        let m = (1609.0f64).powf(-0.75);
        assert!((v - m).abs() < 1e-4 * m);
        // Symmetry.
        let a = unit_cell_integral(1, 2, 0.3, &nodes);
        let b = unit_cell_integral(-2, 1, 0.3, &nodes);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn cell_integral_against_polar_oracle() {
        // Integral over the square [-3/2, 3/2]^2 minus the central cell,
        // computed in polar form with the square boundary r(theta).
        let beta = 0.4;
        let nodes = gl_nodes(NEAR_NODES);
        let mut ring = 0.0;
        for i in -1..=1i64 {
            for j in -1..=1i64 {
                if i != 0 || j != 0 {
                    ring += unit_cell_integral(i, j, beta, &nodes);
                }
            }
        }
        // int over square of side s of |x|^{beta-2} = 8 int_0^{pi/4} (s/2 sec t)^beta / beta dt.
        let sq = |s: f64| {
            let m = 20000;
            let dt = PI / 4.0 / m as f64;
            8.0 * (0..m)
                .map(|k| {
                    let t = (k as f64 + 0.5) * dt;
                    (s / 2.0 / t.cos()).powf(beta) / beta * dt
                })
                .sum::<f64>()
        };
        let oracle = sq(3.0) - sq(1.0);
        assert!((ring - oracle).abs() < 1e-6 * oracle, "{ring} vs {oracle}");
    }

    #[test]
    fn disk_indicator_at_origin() {
        let g = Grid::centered(2, 2.0, 128).unwrap();
        let f = disk_indicator(&g);
        for beta in [0.25, 0.5, 1.0] {
            let out = fractional_integral(&f, beta).unwrap();
            let v = out.values()[g.nearest_cell(&[0.0, 0.0])];
            let exact = 2.0 * PI / beta;
            assert!((v - exact).abs() < 0.01 * exact, "beta {beta}: {v} vs {exact}");
        }
    }

    #[test]
    fn zero_in_zero_out_and_drop_rule() {
        let g = Grid::centered(2, 2.0, 16).unwrap();
        let z = GridFunction::zeros(&g);
        assert!(fractional_integral(&z, 0.5).unwrap().values().iter().all(|v| *v == 0.0));
        assert!(fractional_maximal(&z, 0.5).unwrap().values().iter().all(|v| *v == 0.0));
        let f = gaussian(&g);
        let a = fractional_integral(&f, 0.5).unwrap();
        let b = fractional_integral_with(&f, 0.5, SingularCellRule::Drop).unwrap();
        // Equal up to FFT roundoff away from the bump.
        let tol = 1e-12 * a.sup_norm();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x >= &(y - tol)));
        assert!(fractional_integral(&f, 0.0).is_err());
        assert!(fractional_integral(&f, 2.0).is_err());
    }

    #[test]
    fn scaling_law() {
        let g = Grid::centered(2, 2.0, 128).unwrap();
        let beta = 0.5;
        let bump = |x: &[f64], s: f64| {
            let r2 = (x[0] * s) * (x[0] * s) + (x[1] * s) * (x[1] * s);
            (-r2 / (2.0 * 0.16)).exp()
        };
        let f = GridFunction::from_fn(&g, |x| bump(x, 1.0));
        let fl = GridFunction::from_fn(&g, |x| bump(x, 2.0));
        let i1 = fractional_integral(&f, beta).unwrap();
        let i2 = fractional_integral(&fl, beta).unwrap();
        let peak = i1.sup_norm();
        for x in [[0.3, 0.1], [-0.5, 0.4], [0.7, -0.6]] {
            let lhs = i2.at(&x);
            let rhs = 2f64.powf(-beta) * i1.at(&[2.0 * x[0], 2.0 * x[1]]);
            assert!((lhs - rhs).abs() < 0.02 * peak, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn hardy_littlewood_disk() {
        let g = Grid::centered(2, 2.0, 256).unwrap();
        let f = disk_indicator(&g);
        let m = fractional_maximal(&f, 0.0).unwrap();
        let v = m.values()[g.nearest_cell(&[0.0, 0.0])];
        let h = g.spacing();
        assert!(v >= PI * (1.0 - h) * (1.0 - h), "{v}");
    }

    #[test]
    fn maximal_dominated_by_integral() {
        let g = Grid::centered(2, 2.0, 64).unwrap();
        for f in [gaussian(&g), disk_indicator(&g)] {
            for beta in [0.1, 0.5, 1.2] {
                let m = fractional_maximal(&f, beta).unwrap();
                let i = fractional_integral(&f.abs(), beta).unwrap();
                for (a, b) in m.values().iter().zip(i.values()) {
                    assert!(*a <= 1.05 * b + 1e-12, "{a} > {b}");
                }
            }
        }
    }

    #[test]
    fn maximal_is_monotone() {
        let g = Grid::centered(2, 2.0, 32).unwrap();
        let f = gaussian(&g);
        let big = f.map(|v| v.abs() * 1.5 + 0.01);
        let a = fractional_maximal(&f, 0.3).unwrap();
        let b = fractional_maximal(&big, 0.3).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x <= y));
    }

    #[test]
    fn integral_is_translation_equivariant() {
        let g = Grid::centered(2, 2.0, 32).unwrap();
        let f = gaussian(&g);
        let shifted = f.shift_cells(&[-3, 2]);
        let a = fractional_integral(&f, 0.4).unwrap();
        let b = fractional_integral(&shifted, 0.4).unwrap();
        // Compare away from the boundary where the shifted input kept all mass.
        let n = 32;
        let tol = 1e-12 * a.sup_norm();
        for r in 8..24usize {
            for c in 8..24usize {
                let x = a.values()[r * n + c];
                let y = b.values()[(r - 3) * n + c + 2];
                assert!((x - y).abs() <= tol);
            }
        }
    }
}
