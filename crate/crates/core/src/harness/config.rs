//! Flat `key=value` experiment configuration.
//!
//! ```text
//! # comment
//! grid=128
//! betas=0.25,0.1,0.01,0.001
//! weights=1,power:0.3
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::fmt_f64;
use crate::error::{Error, Result};
use crate::functions::{make_test_kernels, SphereKernel, TestFunction};
use crate::geometry::{DyadicCube, Grid};
use crate::operators::{OperatorConfig, SingularCellRule};
use crate::weights::{Weight, WeightDescriptor};

/// Tolerance on `1/q = 1/p - beta/n`.
pub const EXPONENT_TOL: f64 = 1e-12;

/// Weight selector of a config file.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSpec {
    Unit,
    Power(f64),
}

impl WeightSpec {
    pub fn id(&self) -> String {
        match self {
            Self::Unit => "1".into(),
            Self::Power(a) => format!("power:{a}"),
        }
    }

    pub fn build(&self, grid: &Grid) -> Result<Weight> {
        match self {
            Self::Unit => Ok(Weight::unit(grid)),
            Self::Power(a) => Weight::from_descriptor(grid, WeightDescriptor::Power { a: *a }),
        }
    }
}

impl FromStr for WeightSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "unit" => Ok(Self::Unit),
            t => match t.strip_prefix("power:") {
                Some(a) => Ok(Self::Power(parse_num(a, "weights")?)),
                None => Err(Error::Config(format!("unknown weight {t:?}"))),
            },
        }
    }
}

/// BMO symbol for commutator experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolSpec {
    /// `log |x|`
    LogAbs,
    /// A constant symbol, whose commutator vanishes.
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub grid: usize,
    pub half_width: f64,
    pub kernel: String,
    pub function: TestFunction,
    pub betas: Vec<f64>,
    pub p: f64,
    /// Explicit `q` per beta; derived from the exponent relation when absent.
    pub q: Option<Vec<f64>>,
    pub weights: Vec<WeightSpec>,
    pub l: Vec<u32>,
    pub t_samples_per_octave: usize,
    pub t_unit_samples: usize,
    pub j_range: Option<(i32, i32)>,
    pub singular_cell_rule: SingularCellRule,
    pub symbol: SymbolSpec,
    pub d_init: f64,
    pub q0_level: u32,
    pub q0_index: Vec<i64>,
    pub multiplier_j: Vec<i32>,
    pub multiplier_t: Vec<f64>,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 2,
            grid: 128,
            half_width: 2.0,
            kernel: "cos".into(),
            function: TestFunction::Disk,
            betas: vec![0.25, 0.1, 0.01, 0.001],
            p: 2.0,
            q: None,
            weights: vec![WeightSpec::Unit, WeightSpec::Power(0.3)],
            l: vec![1, 2, 4, 8],
            t_samples_per_octave: 8,
            t_unit_samples: 8,
            j_range: None,
            singular_cell_rule: SingularCellRule::PolarCorrection,
            symbol: SymbolSpec::LogAbs,
            d_init: 1.0,
            q0_level: 2,
            q0_index: vec![2, 2],
            multiplier_j: vec![0],
            multiplier_t: vec![1.0, 1.5],
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn parse_num<T: FromStr>(v: &str, key: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}

fn parse_list<T: FromStr>(v: &str, key: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::Config(format!("empty list for {key}")));
    }
    items.iter().map(|s| parse_num(s, key)).collect()
}

impl ExperimentConfig {
    /// Parses and validates. Unknown keys and duplicates are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut seen = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if seen.insert(k.to_string(), ()).is_some() {
                return Err(Error::Config(format!("duplicate key {k:?}")));
            }
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, k: &str, v: &str) -> Result<()> {
        match k {
            "n" => self.n = parse_num(v, k)?,
            "grid" => self.grid = parse_num(v, k)?,
            "half_width" => self.half_width = parse_num(v, k)?,
            "kernel" => self.kernel = v.to_string(),
            "function" => {
                self.function = v
                    .parse()
                    .map_err(|_| Error::Config(format!("unknown function {v:?}")))?
            }
            "betas" => self.betas = parse_list(v, k)?,
            "p" => self.p = parse_num(v, k)?,
            "q" => self.q = Some(parse_list(v, k)?),
            "weights" => self.weights = parse_list(v, k)?,
            "l" => self.l = parse_list(v, k)?,
            "t_samples_per_octave" => self.t_samples_per_octave = parse_num(v, k)?,
            "t_unit_samples" => self.t_unit_samples = parse_num(v, k)?,
            "j_range" => {
                let r: Vec<i32> = parse_list(v, k)?;
                if r.len() != 2 {
                    return Err(Error::Config("j_range needs two values".into()));
                }
                self.j_range = Some((r[0], r[1]));
            }
            "singular_cell_rule" => {
                self.singular_cell_rule = match v {
                    "polar_correction" => SingularCellRule::PolarCorrection,
                    "drop" => SingularCellRule::Drop,
                    _ => return Err(Error::Config(format!("unknown singular_cell_rule {v:?}"))),
                }
            }
            "symbol" => {
                self.symbol = match v {
                    "log" => SymbolSpec::LogAbs,
                    "constant" => SymbolSpec::Constant,
                    _ => return Err(Error::Config(format!("unknown symbol {v:?}"))),
                }
            }
            "d_init" => self.d_init = parse_num(v, k)?,
            "q0_level" => self.q0_level = parse_num(v, k)?,
            "q0_index" => self.q0_index = parse_list(v, k)?,
            "multiplier_j" => self.multiplier_j = parse_list(v, k)?,
            "multiplier_t" => self.multiplier_t = parse_list(v, k)?,
            "out" => self.out = PathBuf::from(v),
            "seed" => self.seed = parse_num(v, k)?,
            _ => return Err(Error::Config(format!("unknown key {k:?}"))),
        }
        Ok(())
    }

    /// Checks every field, including `1/q = 1/p - beta/n` for each beta.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return cfg("n must be positive".into());
        }
        if self.grid < 8 || !self.grid.is_power_of_two() {
            return cfg(format!("grid must be a power of two >= 8, got {}", self.grid));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return cfg("half_width must be positive".into());
        }
        if !make_test_kernels().iter().any(|k| k.name() == self.kernel) {
            return cfg(format!("unknown kernel {:?}", self.kernel));
        }
        let nf = self.n as f64;
        if !(self.p > 1.0 && self.p.is_finite()) {
            return cfg(format!("p must exceed 1, got {}", self.p));
        }
        if let Some(q) = &self.q {
            if q.len() != self.betas.len() {
                return cfg("q list must match betas".into());
            }
        }
        for (i, &b) in self.betas.iter().enumerate() {
            if !(b > 0.0 && b < nf) {
                return cfg(format!("beta {b} outside (0, {nf})"));
            }
            if self.p >= nf / b {
                return cfg(format!("p = {} must be below n/beta = {}", self.p, nf / b));
            }
            if let Some(q) = &self.q {
                let lhs = 1.0 / q[i];
                let rhs = 1.0 / self.p - b / nf;
                if (lhs - rhs).abs() > EXPONENT_TOL {
                    return Err(Error::ExponentRelation {
                        p: self.p,
                        q: q[i],
                        beta: b,
                        n: self.n,
                    });
                }
            }
        }
        if self.l.contains(&0) {
            return cfg("l must be positive".into());
        }
        if self.t_samples_per_octave == 0 || self.t_unit_samples == 0 {
            return cfg("sample counts must be positive".into());
        }
        if !(self.d_init > 0.0 && self.d_init.is_finite()) {
            return cfg("d_init must be positive".into());
        }
        if self.q0_index.len() != self.n {
            return cfg("q0_index needs one entry per axis".into());
        }
        if self.multiplier_t.iter().any(|&t| !(1.0..=2.0).contains(&t)) {
            return cfg("multiplier_t must lie in [1, 2]".into());
        }
        Ok(())
    }

    pub fn q_for(&self, i: usize) -> f64 {
        match &self.q {
            Some(q) => q[i],
            None => 1.0 / (1.0 / self.p - self.betas[i] / self.n as f64),
        }
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::centered(self.n, self.half_width, self.grid)
    }

    pub fn kernel(&self) -> Result<SphereKernel> {
        make_test_kernels()
            .into_iter()
            .find(|k| k.name() == self.kernel)
            .ok_or_else(|| Error::Config(format!("unknown kernel {:?}", self.kernel)))
    }

    pub fn operator_config(&self, beta: f64, l: u32) -> OperatorConfig {
        let mut c = OperatorConfig::new(beta).with_l(Some(l));
        c.t_samples_per_octave = self.t_samples_per_octave;
        c.t_unit_samples = self.t_unit_samples;
        c.j_range = self.j_range;
        c.singular_cell_rule = self.singular_cell_rule;
        c
    }

    pub fn q0(&self, grid: &Grid) -> Result<DyadicCube> {
        DyadicCube::new(grid.bbox(), self.q0_level, self.q0_index.clone())
    }

    /// Canonical text: every key in a fixed order, floats at full precision.
    pub fn to_text(&self) -> String {
        let join_f = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",");
        let join = |v: Vec<String>| v.join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        kv("n", self.n.to_string());
        kv("grid", self.grid.to_string());
        kv("half_width", fmt_f64(self.half_width));
        kv("kernel", self.kernel.clone());
        kv("function", self.function.id().to_string());
        kv("betas", join_f(&self.betas));
        kv("p", fmt_f64(self.p));
        if let Some(q) = &self.q {
            kv("q", join_f(q));
        }
        kv("weights", join(self.weights.iter().map(|w| w.id()).collect()));
        kv("l", join(self.l.iter().map(|x| x.to_string()).collect()));
        kv("t_samples_per_octave", self.t_samples_per_octave.to_string());
        kv("t_unit_samples", self.t_unit_samples.to_string());
        if let Some((a, b)) = self.j_range {
            kv("j_range", format!("{a},{b}"));
        }
        kv(
            "singular_cell_rule",
            match self.singular_cell_rule {
                SingularCellRule::PolarCorrection => "polar_correction",
                SingularCellRule::Drop => "drop",
            }
            .into(),
        );
        kv(
            "symbol",
            match self.symbol {
                SymbolSpec::LogAbs => "log",
                SymbolSpec::Constant => "constant",
            }
            .into(),
        );
        kv("d_init", fmt_f64(self.d_init));
        kv("q0_level", self.q0_level.to_string());
        kv("q0_index", join(self.q0_index.iter().map(|x| x.to_string()).collect()));
        kv("multiplier_j", join(self.multiplier_j.iter().map(|x| x.to_string()).collect()));
        kv("multiplier_t", join_f(&self.multiplier_t));
        kv("out", self.out.display().to_string());
        kv("seed", self.seed.to_string());
        s
    }

    /// SHA-256 of [`Self::to_text`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn derived_q_satisfies_the_relation() {
        let c = ExperimentConfig::default();
        for (i, &b) in c.betas.iter().enumerate() {
            let q = c.q_for(i);
            assert!((1.0 / q - (0.5 - b / 2.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "grid=100",
            "betas=0",
            "betas=2.5",
            "p=1",
            "betas=1.5\np=2",
            "kernel=nope",
            "function=square",
            "weights=power",
            "l=0",
            "color=red",
            "grid=64\ngrid=64",
            "no equals sign",
            "j_range=1",
            "betas=0.5\nq=3",
        ] {
            assert!(ExperimentConfig::parse(bad).is_err(), "{bad:?}");
        }
        assert!(matches!(
            ExperimentConfig::parse("betas=0.5\nq=3"),
            Err(Error::ExponentRelation { .. })
        ));
        // 1/q = 1/2 - 1/4.
        assert!(ExperimentConfig::parse("betas=0.5\nq=4").is_ok());
    }

    #[test]
    fn comments_and_whitespace() {
        let c = ExperimentConfig::parse("# hello\n grid = 64 # inline\n\nfunction=two-bump\n").unwrap();
        assert_eq!(c.grid, 64);
        assert_eq!(c.function, TestFunction::TwoBump);
    }

    proptest! {
        #[test]
        fn parse_never_panics(s in "[a-z_=0-9.,:#\n -]{0,120}") {
            let _ = ExperimentConfig::parse(&s);
        }

        #[test]
        fn hash_changes_with_beta(b in 0.001f64..0.9) {
            let mut c = ExperimentConfig { betas: vec![b], ..ExperimentConfig::default() };
            let h = c.hash();
            c.betas = vec![b * 0.5];
            prop_assert_ne!(h, c.hash());
        }
    }
}
