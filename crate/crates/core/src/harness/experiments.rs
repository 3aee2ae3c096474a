use rayon::prelude::*;

use super::config::{ExperimentConfig, SymbolSpec, WeightSpec};
use super::fmt_f64;
use super::table::CsvTable;
use crate::error::Result;
use crate::functions::{lp_norm, write_grid_text, BmoSymbol, GridFunction};
use crate::geometry::{DyadicLattice, Grid};
use crate::operators::{
    commutator, envelope_summary, fractional_integral, marcinkiewicz, EnvelopeSummary,
};
use crate::sparse::{
    build_sparse_family, domination_certificate, sparse_operator, verify_sparse, AverageConvention,
    SparseConstruction,
};
use crate::weights::{apq_characteristic, char_csv_row, conjugate_exponent, CHAR_CSV_HEADER};

/// Frequency direction sampled by the multiplier experiment.
pub const MULTIPLIER_DIRECTION: [f64; 2] = [1.0, 0.3];

/// Weighted-bound exponent of `[w]_{A_{p,q}}` for `mu_{Omega,beta}`.
pub fn uniform_exponent(beta: f64, p: f64, q: f64, n: usize) -> f64 {
    let pq = conjugate_exponent(p) / q;
    let nb = beta / n as f64;
    if beta < 0.5 {
        pq.max(1.0) + (pq * (1.0 - nb)).max(0.5 - nb)
    } else {
        (pq * (1.0 - nb)).max(1.0 - nb)
    }
}

/// The commutator exponent: one more than [`uniform_exponent`].
pub fn commutator_exponent(beta: f64, p: f64, q: f64, n: usize) -> f64 {
    1.0 + uniform_exponent(beta, p, q, n)
}

/// Exponent of `[w]_{A_{p,q}}` in the sparse weighted bound.
pub fn sparse_exponent(beta: f64, p: f64, q: f64, n: usize) -> f64 {
    let nb = beta / n as f64;
    (conjugate_exponent(p) / q * (1.0 - nb)).max(0.5 - nb)
}

/// The non-uniform constant `(1 - 2^{-beta})^{-1}`.
pub fn naive_predictor(beta: f64) -> f64 {
    1.0 / (1.0 - 2f64.powf(-beta))
}

/// `max / min` of positive values; 1 for an empty slice.
pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        1.0
    } else {
        max / min
    }
}

fn lattices(g: &Grid) -> Vec<DyadicLattice> {
    DyadicLattice::third_shifted_family(g.bbox(), g.levels())
}

/// `||f||_{L^p(w^p)}` for a weight `w`.
fn weighted_norm(f: &GridFunction, p: f64, w: &crate::weights::Weight) -> Result<f64> {
    lp_norm(f, p, Some(&w.powf(p)))
}

fn sort_beta_desc<T>(rows: &mut [T], key: impl Fn(&T) -> (String, f64)) {
    rows.sort_by(|a, b| {
        let (ka, ba) = key(a);
        let (kb, bb) = key(b);
        ka.cmp(&kb).then(bb.total_cmp(&ba))
    });
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniformityRow {
    pub weight: String,
    pub beta: f64,
    pub p: f64,
    pub q: f64,
    pub characteristic: f64,
    pub exponent: f64,
    /// `||mu f||_{L^q(w^q)}`, or the commutator's norm.
    pub lhs: f64,
    /// `||f||_{L^p(w^p)}`.
    pub f_norm: f64,
    /// `||Omega||`, times `||b||_*` for the commutator.
    pub scale: f64,
    pub ratio: f64,
    pub predictor: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct UniformityReport {
    pub id: &'static str,
    /// Sorted by weight id, then beta descending.
    pub rows: Vec<UniformityRow>,
}

impl UniformityReport {
    /// `max R / min R` per weight, in weight order.
    pub fn spreads(&self) -> Vec<(String, f64)> {
        let mut ids: Vec<String> = self.rows.iter().map(|r| r.weight.clone()).collect();
        ids.dedup();
        ids.into_iter()
            .map(|id| {
                let v: Vec<f64> = self.rows.iter().filter(|r| r.weight == id).map(|r| r.ratio).collect();
                (id, spread(&v))
            })
            .collect()
    }

    pub fn predictor_spread(&self) -> f64 {
        spread(&self.rows.iter().map(|r| r.predictor).collect::<Vec<_>>())
    }

    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(
            self.id,
            &[
                "weight", "beta", "p", "q", "characteristic", "exponent", "lhs_norm", "f_norm",
                "scale", "ratio", "predictor", "degenerate",
            ],
        );
        for r in &self.rows {
            t.push(vec![
                r.weight.clone(),
                fmt_f64(r.beta),
                fmt_f64(r.p),
                fmt_f64(r.q),
                fmt_f64(r.characteristic),
                fmt_f64(r.exponent),
                fmt_f64(r.lhs),
                fmt_f64(r.f_norm),
                fmt_f64(r.scale),
                fmt_f64(r.ratio),
                fmt_f64(r.predictor),
                r.degenerate.to_string(),
            ]);
        }
        t
    }
}

/// `R(beta) = ||mu f||_{L^q(w^q)} / (||Omega|| [w]^{e} ||f||_{L^p(w^p)})`
/// over the configured betas and weights.
pub fn exp_uniformity(cfg: &ExperimentConfig) -> Result<UniformityReport> {
    uniformity(cfg, false)
}

/// As [`exp_uniformity`] for the commutator, normalized by `||b||_*`.
pub fn exp_commutator_uniformity(cfg: &ExperimentConfig) -> Result<UniformityReport> {
    uniformity(cfg, true)
}

fn uniformity(cfg: &ExperimentConfig, with_symbol: bool) -> Result<UniformityReport> {
    cfg.validate()?;
    let g = cfg.build_grid()?;
    let omega = cfg.kernel()?;
    let f = cfg.function.sample(&g);
    let symbol = if with_symbol {
        Some(match cfg.symbol {
            SymbolSpec::LogAbs => BmoSymbol::log_abs(&g)?,
            SymbolSpec::Constant => BmoSymbol::with_default_lattices(GridFunction::constant(&g, 1.0))?,
        })
    } else {
        None
    };
    let weights: Vec<(WeightSpec, crate::weights::Weight)> = cfg
        .weights
        .iter()
        .map(|w| Ok((w.clone(), w.build(&g)?)))
        .collect::<Result<_>>()?;
    let lats = lattices(&g);
    let per_beta: Vec<Vec<UniformityRow>> = cfg
        .betas
        .par_iter()
        .enumerate()
        .map(|(i, &beta)| -> Result<Vec<UniformityRow>> {
            let q = cfg.q_for(i);
            let ocfg = cfg.operator_config(beta, 1);
            let out = match &symbol {
                Some(b) => commutator(&f, b, &omega, &ocfg)?,
                None => marcinkiewicz(&f, &omega, &ocfg)?,
            };
            let mut rows = Vec::new();
            for (spec, w) in &weights {
                let characteristic = apq_characteristic(w, cfg.p, q, &lats)?.value;
                let exponent = if symbol.is_some() {
                    commutator_exponent(beta, cfg.p, q, cfg.n)
                } else {
                    uniform_exponent(beta, cfg.p, q, cfg.n)
                };
                let lhs = weighted_norm(&out, q, w)?;
                let f_norm = weighted_norm(&f, cfg.p, w)?;
                let scale = omega.sup_norm() * symbol.as_ref().map_or(1.0, |b| b.norm());
                let denom = scale * characteristic.powf(exponent) * f_norm;
                let degenerate = !(denom > 0.0);
                rows.push(UniformityRow {
                    weight: spec.id(),
                    beta,
                    p: cfg.p,
                    q,
                    characteristic,
                    exponent,
                    lhs,
                    f_norm,
                    scale,
                    ratio: if degenerate { 0.0 } else { lhs / denom },
                    predictor: naive_predictor(beta),
                    degenerate,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<UniformityRow> = per_beta.into_iter().flatten().collect();
    sort_beta_desc(&mut rows, |r| (r.weight.clone(), r.beta));
    Ok(UniformityReport {
        id: if with_symbol { "commutator" } else { "uniformity" },
        rows,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DominationRow {
    pub l: u32,
    pub beta: f64,
    pub weight: String,
    pub d_used: f64,
    pub family_size: usize,
    pub min_ratio: f64,
    pub sparse_ok: bool,
    /// Pointwise margin with tripled averages, the construction's own.
    pub margin_tripled: f64,
    /// Pointwise margin with `<|f|>_Q`.
    pub margin_cube: f64,
    /// `||A^{2,beta} f||_{L^q(w^q)} / ([w]^{e} ||f||_{L^p(w^p)})`.
    pub weighted_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct DominationReport {
    /// Sorted by `l`, beta descending, then weight.
    pub rows: Vec<DominationRow>,
    /// One construction per `(l, beta)`, in row order of first appearance.
    pub constructions: Vec<(u32, f64, SparseConstruction)>,
}

impl DominationReport {
    /// `max D_used / min D_used` over beta for each `l`.
    pub fn d_spreads(&self) -> Vec<(u32, f64)> {
        let mut ls: Vec<u32> = self.constructions.iter().map(|c| c.0).collect();
        ls.dedup();
        ls.into_iter()
            .map(|l| {
                let v: Vec<f64> = self
                    .constructions
                    .iter()
                    .filter(|c| c.0 == l)
                    .map(|c| c.2.d_used)
                    .collect();
                (l, spread(&v))
            })
            .collect()
    }

    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(
            "domination",
            &[
                "l", "beta", "weight", "d_used", "family_size", "min_ratio", "sparse_ok",
                "margin_tripled", "margin_cube", "weighted_ratio",
            ],
        );
        for r in &self.rows {
            t.push(vec![
                r.l.to_string(),
                fmt_f64(r.beta),
                r.weight.clone(),
                fmt_f64(r.d_used),
                r.family_size.to_string(),
                fmt_f64(r.min_ratio),
                r.sparse_ok.to_string(),
                fmt_f64(r.margin_tripled),
                fmt_f64(r.margin_cube),
                fmt_f64(r.weighted_ratio),
            ]);
        }
        t
    }
}

/// Sparse construction per `(l, beta)` with its certificates and the
/// weighted sparse-operator comparison per weight.
pub fn exp_domination(cfg: &ExperimentConfig) -> Result<DominationReport> {
    exp_domination_for(cfg, &cfg.function.sample(&cfg.build_grid()?))
}

/// [`exp_domination`] on a given input.
pub fn exp_domination_for(cfg: &ExperimentConfig, f: &GridFunction) -> Result<DominationReport> {
    cfg.validate()?;
    let g = f.grid();
    let omega = cfg.kernel()?;
    let q0 = cfg.q0(g)?;
    let lats = lattices(g);
    let weights: Vec<(String, crate::weights::Weight)> = cfg
        .weights
        .iter()
        .map(|w| Ok((w.id(), w.build(g)?)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(u32, usize)> = cfg
        .l
        .iter()
        .flat_map(|&l| (0..cfg.betas.len()).map(move |i| (l, i)))
        .collect();
    let results: Vec<(u32, f64, SparseConstruction, Vec<DominationRow>)> = jobs
        .par_iter()
        .map(|&(l, i)| {
            let beta = cfg.betas[i];
            let q = cfg.q_for(i);
            let c = build_sparse_family(f, &omega, &cfg.operator_config(beta, l), &q0, cfg.d_init)?;
            let v = verify_sparse(&c.family);
            let tri = domination_certificate(&c, f, AverageConvention::Tripled)?;
            let cube = domination_certificate(&c, f, AverageConvention::Cube)?;
            let a = sparse_operator(f, &c.family, 2.0, beta)?;
            let mut rows = Vec::new();
            for (id, w) in &weights {
                let ch = apq_characteristic(w, cfg.p, q, &lats)?.value;
                let num = weighted_norm(&a, q, w)?;
                let den = ch.powf(sparse_exponent(beta, cfg.p, q, cfg.n)) * weighted_norm(f, cfg.p, w)?;
                rows.push(DominationRow {
                    l,
                    beta,
                    weight: id.clone(),
                    d_used: c.d_used,
                    family_size: c.family.len(),
                    min_ratio: v.min_ratio,
                    sparse_ok: v.passed && v.min_ratio >= 0.5,
                    margin_tripled: tri.min_margin,
                    margin_cube: cube.min_margin,
                    weighted_ratio: if num == 0.0 { 0.0 } else { num / den },
                });
            }
            Ok((l, beta, c, rows))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut constructions = Vec::new();
    for (l, beta, c, r) in results {
        rows.extend(r);
        constructions.push((l, beta, c));
    }
    rows.sort_by(|a, b| {
        a.l.cmp(&b.l)
            .then(b.beta.total_cmp(&a.beta))
            .then(a.weight.cmp(&b.weight))
    });
    constructions.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
    Ok(DominationReport { rows, constructions })
}

#[derive(Clone, Debug)]
pub struct MultiplierReport {
    /// `(beta, j, t, summary)`, beta descending then `j`, `t`.
    pub summaries: Vec<(f64, i32, f64, EnvelopeSummary)>,
}

impl MultiplierReport {
    pub fn tables(&self) -> Vec<CsvTable> {
        let mut rows = CsvTable::new(
            "multiplier",
            &[
                "beta", "j", "t", "region", "xi_norm", "z", "khat_abs", "envelope", "normalized",
                "normalized_large",
            ],
        );
        let mut sum = CsvTable::new(
            "multiplier_summary",
            &[
                "beta", "j", "t", "khat_at_zero", "small_slope", "expected_slope",
                "large_lower_max", "large_upper_max", "large_bounded", "envelope_tail_monotone",
            ],
        );
        for (beta, j, t, s) in &self.summaries {
            let head = vec![fmt_f64(*beta), j.to_string(), fmt_f64(*t)];
            let mut zero = head.clone();
            zero.extend(["zero".to_string()]);
            zero.extend([0.0, 0.0, s.khat_at_zero, 0.0, 0.0, 0.0].map(fmt_f64));
            rows.push(zero);
            for (region, set) in [("small", &s.small), ("large", &s.large)] {
                for r in set {
                    let mut row = head.clone();
                    row.push(region.to_string());
                    row.extend(
                        [r.xi_norm, r.z, r.khat_abs, r.envelope, r.normalized, r.normalized_large]
                            .map(fmt_f64),
                    );
                    rows.push(row);
                }
            }
            let monotone = s.large.windows(2).all(|w| w[1].envelope <= w[0].envelope);
            let mut row = head;
            row.extend(
                [
                    s.khat_at_zero,
                    s.small_slope,
                    1.0 + beta,
                    s.large_lower_max,
                    s.large_upper_max,
                ]
                .map(fmt_f64),
            );
            row.push(s.large_bounded.to_string());
            row.push(monotone.to_string());
            sum.push(row);
        }
        vec![rows, sum]
    }
}

/// Envelope tables per `(beta, j, t)`.
pub fn exp_multiplier(cfg: &ExperimentConfig) -> Result<MultiplierReport> {
    cfg.validate()?;
    let omega = cfg.kernel()?;
    let mut betas = cfg.betas.clone();
    betas.sort_by(|a, b| b.total_cmp(a));
    let mut summaries = Vec::new();
    for &beta in &betas {
        for &j in &cfg.multiplier_j {
            for &t in &cfg.multiplier_t {
                let s = envelope_summary(&omega, beta, j, t, MULTIPLIER_DIRECTION);
                summaries.push((beta, j, t, s));
            }
        }
    }
    Ok(MultiplierReport { summaries })
}

/// `mu f` and `I_beta |f|` per beta: grid-function text files and norms.
pub struct EvalOutput {
    pub norms: CsvTable,
    /// `(file name, contents)`.
    pub grids: Vec<(String, String)>,
}

pub fn eval(cfg: &ExperimentConfig) -> Result<EvalOutput> {
    cfg.validate()?;
    let g = cfg.build_grid()?;
    let omega = cfg.kernel()?;
    let f = cfg.function.sample(&g);
    let mut betas = cfg.betas.clone();
    betas.sort_by(|a, b| b.total_cmp(a));
    let mut norms = CsvTable::new(
        "eval_norms",
        &[
            "beta", "function", "kernel", "f_l1", "f_l2", "mu_l2", "mu_sup", "ibeta_sup",
            "domination_excess",
        ],
    );
    let mut grids = Vec::new();
    for &beta in &betas {
        let mu = marcinkiewicz(&f, &omega, &cfg.operator_config(beta, 1))?;
        let ib = fractional_integral(&f.abs(), beta)?;
        let excess = mu
            .values()
            .iter()
            .zip(ib.values())
            .map(|(m, i)| m - omega.sup_norm() * i)
            .fold(f64::NEG_INFINITY, f64::max);
        norms.push(vec![
            fmt_f64(beta),
            cfg.function.id().to_string(),
            cfg.kernel.clone(),
            fmt_f64(lp_norm(&f, 1.0, None)?),
            fmt_f64(lp_norm(&f, 2.0, None)?),
            fmt_f64(lp_norm(&mu, 2.0, None)?),
            fmt_f64(mu.sup_norm()),
            fmt_f64(ib.sup_norm()),
            fmt_f64(excess),
        ]);
        grids.push((format!("mu_beta_{beta}.grid"), write_grid_text(&mu)?));
    }
    Ok(EvalOutput { norms, grids })
}

/// Sparse families for the first configured `l`, one per beta.
pub fn sparse_families(cfg: &ExperimentConfig) -> Result<(CsvTable, Vec<(String, String)>)> {
    cfg.validate()?;
    let g = cfg.build_grid()?;
    let omega = cfg.kernel()?;
    let f = cfg.function.sample(&g);
    let q0 = cfg.q0(&g)?;
    let mut betas = cfg.betas.clone();
    betas.sort_by(|a, b| b.total_cmp(a));
    let mut t = CsvTable::new(
        "sparse",
        &["beta", "l", "d_used", "family_size", "min_ratio", "passed", "margin_tripled"],
    );
    let mut files = Vec::new();
    for (&beta, &l) in betas.iter().flat_map(|b| cfg.l.iter().map(move |l| (b, l))) {
        let c = build_sparse_family(&f, &omega, &cfg.operator_config(beta, l), &q0, cfg.d_init)?;
        let v = verify_sparse(&c.family);
        let cert = domination_certificate(&c, &f, AverageConvention::Tripled)?;
        t.push(vec![
            fmt_f64(beta),
            l.to_string(),
            fmt_f64(c.d_used),
            c.family.len().to_string(),
            fmt_f64(v.min_ratio),
            v.passed.to_string(),
            fmt_f64(cert.min_margin),
        ]);
        files.push((format!("sparse_beta_{beta}_l_{l}.txt"), c.family.to_text()?));
    }
    Ok((t, files))
}

/// `[w]_{A_{p,q}}` per weight and beta.
pub fn weight_characteristics(cfg: &ExperimentConfig) -> Result<CsvTable> {
    cfg.validate()?;
    let g = cfg.build_grid()?;
    let lats = lattices(&g);
    let mut order: Vec<usize> = (0..cfg.betas.len()).collect();
    order.sort_by(|&a, &b| cfg.betas[b].total_cmp(&cfg.betas[a]));
    let mut t = CsvTable::new("weights", &CHAR_CSV_HEADER);
    for spec in &cfg.weights {
        let w = spec.build(&g)?;
        for &i in &order {
            let q = cfg.q_for(i);
            let r = apq_characteristic(&w, cfg.p, q, &lats)?;
            t.push(char_csv_row(&spec.id(), cfg.p, q, &r));
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            grid: 32,
            betas: vec![0.1, 0.25],
            l: vec![1],
            function: crate::functions::TestFunction::TwoBump,
            ..Default::default()
        }
    }

    #[test]
    fn exponents_follow_the_case_split() {
        // p = 2, n = 2: q = 2 / (1 - beta), p'/q = 1 - beta.
        let b = 0.2;
        let q = 2.0 / (1.0 - b);
        let pq: f64 = 1.0 - b;
        let want = 1.0 + (pq * (1.0 - b / 2.0)).max(0.5 - b / 2.0);
        assert!((uniform_exponent(b, 2.0, q, 2) - want).abs() < 1e-15);
        let b = 0.8;
        let q = 2.0 / (1.0 - b);
        let pq: f64 = 1.0 - b;
        let want = (pq * (1.0 - b / 2.0)).max(1.0 - b / 2.0);
        assert!((uniform_exponent(b, 2.0, q, 2) - want).abs() < 1e-15);
        assert_eq!(commutator_exponent(0.8, 2.0, q, 2), 1.0 + want);
    }

    #[test]
    fn predictor_spread_is_large() {
        let r = naive_predictor(0.001) / naive_predictor(0.25);
        assert!(r > 100.0 && (naive_predictor(0.001) - 1443.19).abs() < 0.1);
    }

    #[test]
    fn unit_weight_matches_unweighted_ratio() {
        let mut c = small();
        c.weights = vec![WeightSpec::Unit];
        let rep = exp_uniformity(&c).unwrap();
        let g = c.build_grid().unwrap();
        let f = c.function.sample(&g);
        let omega = c.kernel().unwrap();
        for r in &rep.rows {
            assert_eq!(r.characteristic, 1.0);
            let mu = marcinkiewicz(&f, &omega, &c.operator_config(r.beta, 1)).unwrap();
            let plain = lp_norm(&mu, r.q, None).unwrap() / (omega.sup_norm() * lp_norm(&f, 2.0, None).unwrap());
            assert!((r.ratio - plain).abs() <= 1e-10 * plain);
        }
        // Rows sorted by beta descending.
        assert!(rep.rows[0].beta > rep.rows[1].beta);
    }

    #[test]
    fn constant_symbol_is_degenerate_and_doubling_is_invisible() {
        let mut c = small();
        c.weights = vec![WeightSpec::Unit];
        c.symbol = SymbolSpec::Constant;
        let rep = exp_commutator_uniformity(&c).unwrap();
        assert!(rep.rows.iter().all(|r| r.degenerate && r.lhs == 0.0));
    }

    #[test]
    fn zero_input_domination() {
        let c = small();
        let g = c.build_grid().unwrap();
        let rep = exp_domination_for(&c, &GridFunction::zeros(&g)).unwrap();
        for r in &rep.rows {
            assert_eq!(r.margin_tripled, 0.0);
            assert_eq!(r.min_ratio, 1.0);
            assert_eq!(r.weighted_ratio, 0.0);
        }
    }

    #[test]
    fn multiplier_zero_row() {
        let mut c = small();
        c.betas = vec![0.4];
        let rep = exp_multiplier(&c).unwrap();
        let t = rep.tables();
        let z = t[0].column_f64("khat_abs").unwrap()[0];
        assert!(z < 1e-10);
        assert!(t[1].column("envelope_tail_monotone").unwrap().iter().all(|v| *v == "true"));
    }
}
