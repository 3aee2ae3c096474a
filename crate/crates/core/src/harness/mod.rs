//! Experiment configuration, runners, CSV persistence and the CLI.

mod cli;
mod config;
mod experiments;
mod table;

pub use cli::{
    exit_code, report, run, EXIT_BLOW_UP, EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, EXIT_USAGE,
};
pub use config::{ExperimentConfig, SymbolSpec, WeightSpec, EXPONENT_TOL};
pub use experiments::{
    commutator_exponent, eval, exp_commutator_uniformity, exp_domination, exp_domination_for,
    exp_multiplier, exp_uniformity, naive_predictor, sparse_exponent, sparse_families, spread,
    uniform_exponent, weight_characteristics, DominationReport, DominationRow, EvalOutput,
    MultiplierReport, UniformityReport, UniformityRow, MULTIPLIER_DIRECTION,
};
pub use table::{write_tables, CsvTable, RunProvenance};

/// Decimal with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}
