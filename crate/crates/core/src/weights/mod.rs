//! Muckenhoupt characteristics over enumerable cube families and the weight
//! lemma probes built on them.

mod characteristic;
mod probes;

pub use characteristic::{
    ap_characteristic, apq_characteristic, char_csv_row, power_lemma_check, CharReport,
    PowerLemmaReport, CHAR_CSV_HEADER,
};
pub use probes::{
    conjugated_char_check, conjugation_epsilon, exp_bmo_lambda_sweep, exp_bmo_weight, jn_probe,
    lemma_rh_constants, proof_rh_constant, reverse_holder_probe, theorem_rh_exponent,
    ConjugatedReport, JnReport, LambdaSweep, RhReport, EXP_GUARD,
};

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::functions::GridFunction;
use crate::geometry::Grid;

/// Closed form attached to a weight.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightDescriptor {
    /// `|x|^a`
    Power { a: f64 },
    /// `exp(lambda b(x) cos theta)`
    ExpBmo {
        lambda: f64,
        theta: f64,
        b: Arc<GridFunction>,
    },
    /// `|x|^a exp(lambda b(x) cos theta)`
    Product {
        a: f64,
        lambda: f64,
        theta: f64,
        b: Arc<GridFunction>,
    },
}

/// `cos` snapped to zero at odd multiples of `pi/2` (within 1e-15 relative),
/// so that `theta = pi/2` yields the constant weight exactly.
pub(crate) fn snapped_cos(theta: f64) -> f64 {
    let k = theta / std::f64::consts::FRAC_PI_2;
    let r = k.round();
    if (r as i64).rem_euclid(2) == 1 && (k - r).abs() <= 1e-15 * r.abs().max(1.0) {
        0.0
    } else {
        theta.cos()
    }
}

fn radius(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl WeightDescriptor {
    fn eval(&self, x: &[f64], cell: usize) -> f64 {
        match self {
            Self::Power { a } => radius(x).powf(*a),
            Self::ExpBmo { lambda, theta, b } => {
                (lambda * b.values()[cell] * snapped_cos(*theta)).exp()
            }
            Self::Product {
                a,
                lambda,
                theta,
                b,
            } => radius(x).powf(*a) * (lambda * b.values()[cell] * snapped_cos(*theta)).exp(),
        }
    }

    pub fn id(&self) -> String {
        match self {
            Self::Power { a } => format!("power:{a}"),
            Self::ExpBmo { lambda, theta, .. } => format!("expbmo:{lambda}:{theta}"),
            Self::Product {
                a, lambda, theta, ..
            } => format!("product:{a}:{lambda}:{theta}"),
        }
    }
}

/// Positive grid function with an optional closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight {
    samples: GridFunction,
    descriptor: Option<WeightDescriptor>,
}

impl Weight {
    /// Validates positivity and, when a descriptor is given, agreement with
    /// it to 1e-10 relative at every cell.
    pub fn new(samples: GridFunction, descriptor: Option<WeightDescriptor>) -> Result<Self> {
        if let Some((cell, &value)) = samples
            .values()
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::NonPositiveWeight { cell, value });
        }
        let w = Self {
            samples,
            descriptor,
        };
        if let Some(d) = &w.descriptor {
            let g = w.samples.grid();
            for (i, &v) in w.samples.values().iter().enumerate() {
                let e = d.eval(&g.point(i), i);
                if (e - v).abs() > 1e-10 * v.abs().max(e.abs()) {
                    return Err(invalid(format!(
                        "weight sample {v} disagrees with its closed form {e} at cell {i}"
                    )));
                }
            }
        }
        Ok(w)
    }

    /// Skips validation. Used to exercise error paths.
    pub fn unchecked(samples: GridFunction) -> Self {
        Self {
            samples,
            descriptor: None,
        }
    }

    pub fn unit(grid: &Grid) -> Self {
        Self {
            samples: GridFunction::constant(grid, 1.0),
            descriptor: Some(WeightDescriptor::Power { a: 0.0 }),
        }
    }

    /// `|x|^a` sampled at cell centers.
    pub fn power(grid: &Grid, a: f64) -> Result<Self> {
        let d = WeightDescriptor::Power { a };
        let samples = GridFunction::from_fn(grid, |x| radius(x).powf(a));
        Self::new(samples, Some(d))
    }

    pub fn from_descriptor(grid: &Grid, d: WeightDescriptor) -> Result<Self> {
        let samples = GridFunction::new(
            grid,
            (0..grid.len()).map(|i| d.eval(&grid.point(i), i)).collect(),
        )?;
        Self::new(samples, Some(d))
    }

    pub fn samples(&self) -> &GridFunction {
        &self.samples
    }

    pub fn descriptor(&self) -> Option<&WeightDescriptor> {
        self.descriptor.as_ref()
    }

    pub fn grid(&self) -> &Grid {
        self.samples.grid()
    }

    pub fn id(&self) -> String {
        match &self.descriptor {
            Some(WeightDescriptor::Power { a }) if *a == 0.0 => "unit".into(),
            Some(d) => d.id(),
            None => "sampled".into(),
        }
    }

    /// `w^e`, keeping a power descriptor when present.
    pub fn powf(&self, e: f64) -> Self {
        let descriptor = match &self.descriptor {
            Some(WeightDescriptor::Power { a }) => Some(WeightDescriptor::Power { a: a * e }),
            _ => None,
        };
        Self {
            samples: self.samples.map(|v| v.powf(e)),
            descriptor,
        }
    }

    /// Pointwise product with another weight on the same grid.
    pub fn times(&self, other: &Weight) -> Result<Self> {
        if other.grid() != self.grid() {
            return Err(invalid("weights live on different grids"));
        }
        let v = self
            .samples
            .values()
            .iter()
            .zip(other.samples.values())
            .map(|(a, b)| a * b)
            .collect();
        Self::new(GridFunction::new(self.grid(), v)?, None)
    }
}

/// Hölder conjugate `p / (p - 1)`.
pub fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapped_cos_zeroes() {
        use std::f64::consts::PI;
        assert_eq!(snapped_cos(PI / 2.0), 0.0);
        assert_eq!(snapped_cos(3.0 * PI / 2.0), 0.0);
        assert_eq!(snapped_cos(0.0), 1.0);
        assert!(snapped_cos(PI / 4.0) > 0.7);
    }

    #[test]
    fn descriptor_mismatch_is_rejected() {
        let g = Grid::centered(2, 1.0, 8).unwrap();
        let s = GridFunction::constant(&g, 2.0);
        assert!(Weight::new(s, Some(WeightDescriptor::Power { a: 1.0 })).is_err());
    }

    #[test]
    fn power_weight_matches_closed_form() {
        let g = Grid::centered(2, 2.0, 32).unwrap();
        let w = Weight::power(&g, -0.7).unwrap();
        assert_eq!(w.id(), "power:-0.7");
        assert!(w.samples().values().iter().all(|v| v.is_finite() && *v > 0.0));
    }
}
