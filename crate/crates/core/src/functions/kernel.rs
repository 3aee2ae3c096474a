use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Default number of equispaced angular samples.
pub const ANGULAR_SAMPLES: usize = 512;

/// Angle quantum as a fraction of one sample interval. Quantizing the
/// interpolation coordinate makes `eval(x) == eval(c x)` even when `c x`
/// rounds, at a cost far below any grid resolution.
const ANGLE_QUANTUM: f64 = 65536.0;

/// Degree-zero homogeneous angular kernel on the circle.
///
/// Samples live at angles `2 pi j / M`; evaluation interpolates linearly in
/// angle. Construction subtracts the angular mean, so the kernel has zero
/// mean up to rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereKernel {
    name: String,
    samples: Vec<f64>,
    sup_norm: f64,
    mean_before_projection: f64,
}

/// `cos` that returns exactly zero at odd multiples of `pi/2` given as
/// `2 pi j / m` with `4 j` an odd multiple of `m`.
fn cos_of_sample(j: usize, m: usize) -> f64 {
    let r = (4 * j) % (4 * m);
    if r == m || r == 3 * m {
        0.0
    } else {
        (2.0 * PI * j as f64 / m as f64).cos()
    }
}

impl SphereKernel {
    /// Projects `samples` onto mean zero.
    pub fn from_samples(name: impl Into<String>, samples: Vec<f64>) -> Result<Self> {
        let mut k = Self::unprojected(name, samples)?;
        let mean = k.mean();
        for s in &mut k.samples {
            *s -= mean;
        }
        k.sup_norm = k.samples.iter().fold(0.0, |m, v| m.max(v.abs()));
        let after = k.mean();
        if after.abs() > 1e-12 {
            return Err(Error::KernelNotCancellative(after));
        }
        Ok(k)
    }

    /// Keeps `samples` as given; operators reject it unless the mean vanishes.
    pub fn unprojected(name: impl Into<String>, samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 4 {
            return Err(invalid("need at least 4 angular samples"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid("angular samples must be finite"));
        }
        let m = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / m;
        let sup_norm = samples.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        Ok(Self {
            name: name.into(),
            samples,
            sup_norm,
            mean_before_projection: mean,
        })
    }

    /// Samples `f(theta)` on `m` equispaced angles, then projects.
    pub fn from_fn(name: impl Into<String>, m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = (0..m).map(|j| f(2.0 * PI * j as f64 / m as f64)).collect();
        Self::from_samples(name, samples)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        2
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn mean_before_projection(&self) -> f64 {
        self.mean_before_projection
    }

    /// Angular mean, which is exact for the piecewise-linear interpolant.
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Value at angle `theta`.
    pub fn eval_angle(&self, theta: f64) -> f64 {
        let m = self.samples.len();
        let mut u = theta / (2.0 * PI) * m as f64;
        u = (u * ANGLE_QUANTUM).round() / ANGLE_QUANTUM;
        let u = u.rem_euclid(m as f64);
        let i = u.floor();
        let frac = u - i;
        let i = (i as usize) % m;
        let j = (i + 1) % m;
        self.samples[i] + frac * (self.samples[j] - self.samples[i])
    }

    /// Value at direction `x / |x|`; zero at the origin.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if x[0] == 0.0 && x[1] == 0.0 {
            return 0.0;
        }
        self.eval_angle(x[1].atan2(x[0]))
    }
}

/// The canonical test family: `cos t`, `sin 2t` and the projected sign of `cos t`.
pub fn make_test_kernels() -> Vec<SphereKernel> {
    let m = ANGULAR_SAMPLES;
    let cos = SphereKernel::from_samples("cos", (0..m).map(|j| cos_of_sample(j, m)).collect());
    let sin2 = SphereKernel::from_fn("sin2", m, |t| (2.0 * t).sin());
    let rough = SphereKernel::from_samples(
        "signcos",
        (0..m)
            .map(|j| {
                let c = cos_of_sample(j, m);
                if c > 0.0 {
                    1.0
                } else if c < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect(),
    );
    vec![
        cos.expect("cos kernel is valid"),
        sin2.expect("sin 2t kernel is valid"),
        rough.expect("sign kernel is valid"),
    ]
}
