//! Square 2-D FFTs and zero-padded embedding for linear convolutions.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward and inverse transforms of size `p x p`.
///
/// `forward` leaves the spectrum transposed and `inverse` expects that
/// layout, which saves one transpose per transform. Spectra are only ever
/// multiplied pointwise, so the layout is invisible to callers.
pub(crate) struct Fft2 {
    p: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: usize,
}

impl Fft2 {
    pub fn new(p: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(p);
        let inv = planner.plan_fft_inverse(p);
        let scratch = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Self {
            p,
            fwd,
            inv,
            scratch,
        }
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.p * self.p);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch];
        plan.process_with_scratch(buf, &mut scratch);
        transpose(buf, self.p);
        plan.process_with_scratch(buf, &mut scratch);
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(&self.fwd, buf);
    }

    /// Unnormalized inverse; divide by `p^2` to undo `forward`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(&self.inv, buf);
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.p * self.p]
    }

    /// Places an `n x n` real field in the top-left corner.
    pub fn embed_field(&self, values: &[f64], n: usize) -> Vec<Complex64> {
        let mut buf = self.zeros();
        for r in 0..n {
            for c in 0..n {
                buf[r * self.p + c].re = values[r * n + c];
            }
        }
        buf
    }

    /// Wrapped position of offset `(dr, dc)`.
    #[inline]
    pub fn wrap(&self, dr: i64, dc: i64) -> usize {
        let p = self.p as i64;
        (dr.rem_euclid(p) * p + dc.rem_euclid(p)) as usize
    }

    /// Reads the top-left `n x n` block of an inverse transform, normalized.
    pub fn extract(&self, buf: &[Complex64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let s = 1.0 / (self.p * self.p) as f64;
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let z = buf[r * self.p + c];
                re.push(z.re * s);
                im.push(z.im * s);
            }
        }
        (re, im)
    }
}

fn transpose(buf: &mut [Complex64], p: usize) {
    const B: usize = 32;
    for rb in (0..p).step_by(B) {
        for cb in (rb..p).step_by(B) {
            for r in rb..(rb + B).min(p) {
                let c0 = if cb == rb { r + 1 } else { cb };
                for c in c0..(cb + B).min(p) {
                    buf.swap(r * p + c, c * p + r);
                }
            }
        }
    }
}

/// Square table of kernel values on offsets `[-radius, radius]^2`.
#[derive(Clone, Debug)]
pub(crate) struct OffsetKernel {
    pub radius: usize,
    pub data: Vec<f64>,
}

impl OffsetKernel {
    pub fn zeros(radius: usize) -> Self {
        let w = 2 * radius + 1;
        Self {
            radius,
            data: vec![0.0; w * w],
        }
    }

    pub fn width(&self) -> usize {
        2 * self.radius + 1
    }

    #[inline]
    pub fn idx(&self, dr: i64, dc: i64) -> usize {
        let r = self.radius as i64;
        ((dr + r) as usize) * self.width() + (dc + r) as usize
    }

    #[inline]
    pub fn get(&self, dr: i64, dc: i64) -> f64 {
        let r = self.radius as i64;
        if dr.abs() > r || dc.abs() > r {
            0.0
        } else {
            self.data[self.idx(dr, dc)]
        }
    }

    /// Iterates `(dr, dc, value)` over all stored offsets.
    pub fn entries(&self) -> impl Iterator<Item = (i64, i64, f64)> + '_ {
        let r = self.radius as i64;
        let w = self.width();
        self.data.iter().enumerate().map(move |(i, &v)| {
            ((i / w) as i64 - r, (i % w) as i64 - r, v)
        })
    }

    /// Copy restricted to a smaller radius.
    pub fn crop(&self, radius: usize) -> Self {
        let mut out = Self::zeros(radius);
        let r = radius.min(self.radius) as i64;
        for dr in -r..=r {
            for dc in -r..=r {
                let i = out.idx(dr, dc);
                out.data[i] = self.get(dr, dc);
            }
        }
        out
    }

    /// Adds `self + i other` into a wrapped `p x p` buffer.
    pub fn embed_pair(&self, other: Option<&OffsetKernel>, fft: &Fft2) -> Vec<Complex64> {
        let mut buf = fft.zeros();
        for (dr, dc, v) in self.entries() {
            if v != 0.0 {
                buf[fft.wrap(dr, dc)].re += v;
            }
        }
        if let Some(o) = other {
            for (dr, dc, v) in o.entries() {
                if v != 0.0 {
                    buf[fft.wrap(dr, dc)].im += v;
                }
            }
        }
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let n = 8;
        let fft = Fft2::new(2 * n);
        let f: Vec<f64> = (0..n * n).map(|i| ((i * 7) % 11) as f64 - 3.0).collect();
        let mut k = OffsetKernel::zeros(n - 1);
        for (i, v) in k.data.iter_mut().enumerate() {
            *v = ((i * 13) % 17) as f64 * 0.1;
        }
        let mut buf = fft.embed_field(&f, n);
        fft.forward(&mut buf);
        let mut kb = k.embed_pair(None, &fft);
        fft.forward(&mut kb);
        for (a, b) in buf.iter_mut().zip(&kb) {
            *a *= b;
        }
        fft.inverse(&mut buf);
        let (re, _) = fft.extract(&buf, n);
        for xr in 0..n as i64 {
            for xc in 0..n as i64 {
                let mut s = 0.0;
                for yr in 0..n as i64 {
                    for yc in 0..n as i64 {
                        s += k.get(xr - yr, xc - yc) * f[(yr * n as i64 + yc) as usize];
                    }
                }
                assert!((re[(xr * n as i64 + xc) as usize] - s).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn transpose_round_trip() {
        let p = 70;
        let mut v: Vec<Complex64> = (0..p * p).map(|i| Complex64::new(i as f64, 0.0)).collect();
        transpose(&mut v, p);
        assert_eq!(v[1].re, p as f64);
        transpose(&mut v, p);
        assert!(v.iter().enumerate().all(|(i, z)| z.re == i as f64));
    }
}
