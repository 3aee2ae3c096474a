use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use super::config::ExperimentConfig;
use super::experiments::{
    eval, exp_commutator_uniformity, exp_domination, exp_multiplier, exp_uniformity,
    sparse_families, spread, weight_characteristics,
};
use super::table::{write_tables, CsvTable, RunProvenance};
use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "marcinkiewicz", version, about = "Fractional Marcinkiewicz integral experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Points per axis (overrides the config).
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Comma-separated beta list (overrides the config).
    #[arg(long, global = true)]
    beta: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    /// mu and I_beta of the configured function.
    Eval,
    /// Sparse families with certificates.
    Sparse,
    /// A_{p,q} characteristics of the configured weights.
    Weights,
    /// Weighted-bound ratio across beta.
    ExpUniformity,
    /// Weighted-bound ratio of the commutator across beta.
    ExpCommutator,
    /// Sparse construction constants and certificates.
    ExpDomination,
    /// Multiplier envelope tables.
    ExpMultiplier,
    /// Summarizes the CSVs in the output directory.
    Report,
}

impl Cmd {
    fn id(self) -> &'static str {
        match self {
            Self::Eval => "eval",
            Self::Sparse => "sparse",
            Self::Weights => "weights",
            Self::ExpUniformity => "exp-uniformity",
            Self::ExpCommutator => "exp-commutator",
            Self::ExpDomination => "exp-domination",
            Self::ExpMultiplier => "exp-multiplier",
            Self::Report => "report",
        }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::ExponentRelation { .. } => EXIT_CONFIG,
        Error::DominationBlowUp { .. } => EXIT_BLOW_UP,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let threads = cli.threads.unwrap_or(1).max(1);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    match pool.install(|| execute(cli.cmd, &cfg, threads)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = cli.grid {
        cfg.set("grid", &n.to_string())?;
    }
    if let Some(b) = &cli.beta {
        cfg.set("betas", b)?;
        cfg.q = None;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cmd: Cmd, cfg: &ExperimentConfig, threads: usize) -> Result<Vec<PathBuf>> {
    let start = Instant::now();
    let dir = cfg.out.as_path();
    let mut extra: Vec<(String, String)> = Vec::new();
    let tables: Vec<CsvTable> = match cmd {
        Cmd::Eval => {
            let o = eval(cfg)?;
            extra = o.grids;
            vec![o.norms]
        }
        Cmd::Sparse => {
            let (t, files) = sparse_families(cfg)?;
            extra = files;
            vec![t]
        }
        Cmd::Weights => vec![weight_characteristics(cfg)?],
        Cmd::ExpUniformity => vec![exp_uniformity(cfg)?.table()],
        Cmd::ExpCommutator => vec![exp_commutator_uniformity(cfg)?.table()],
        Cmd::ExpDomination => vec![exp_domination(cfg)?.table()],
        Cmd::ExpMultiplier => exp_multiplier(cfg)?.tables(),
        Cmd::Report => {
            let text = report(dir)?;
            print!("{text}");
            std::fs::create_dir_all(dir)?;
            let path = dir.join("report.txt");
            std::fs::write(&path, text)?;
            return Ok(vec![path]);
        }
    };
    let prov = RunProvenance {
        experiment: cmd.id().to_string(),
        config_hash: cfg.hash(),
        grid: format!("n={} N={} L={}", cfg.n, cfg.grid, cfg.half_width),
        threads,
        seed: cfg.seed,
        runtime_ms: start.elapsed().as_millis(),
    };
    let mut paths = write_tables(dir, &tables, &prov)?;
    for (name, body) in extra {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Plain-text summary of the known CSVs present in `dir`.
pub fn report(dir: &Path) -> Result<String> {
    let mut s = String::new();
    let load = |name: &str| -> Result<Option<CsvTable>> {
        let p = dir.join(format!("{name}.csv"));
        if p.exists() {
            Ok(Some(CsvTable::read(&p)?))
        } else {
            Ok(None)
        }
    };
    for name in ["uniformity", "commutator"] {
        if let Some(t) = load(name)? {
            let weights = t.column("weight")?;
            let ratios = t.column_f64("ratio")?;
            let mut ids: Vec<&str> = weights.clone();
            ids.dedup();
            for id in ids {
                let v: Vec<f64> = weights
                    .iter()
                    .zip(&ratios)
                    .filter(|(w, _)| **w == id)
                    .map(|(_, r)| *r)
                    .collect();
                s.push_str(&format!("{name} weight={id} rows={} ratio_spread={}\n", v.len(), spread(&v)));
            }
        }
    }
    if let Some(t) = load("domination")? {
        let d = t.column_f64("d_used")?;
        let ok = t.column("sparse_ok")?.iter().all(|v| *v == "true");
        let m = t.column_f64("margin_tripled")?.into_iter().fold(f64::INFINITY, f64::min);
        s.push_str(&format!(
            "domination rows={} d_spread={} sparse_ok={ok} min_margin_tripled={m}\n",
            d.len(),
            spread(&d)
        ));
    }
    if let Some(t) = load("multiplier_summary")? {
        let slopes = t.column_f64("small_slope")?;
        let want = t.column_f64("expected_slope")?;
        let worst = slopes.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let bounded = t.column("large_bounded")?.iter().all(|v| *v == "true");
        s.push_str(&format!(
            "multiplier rows={} worst_slope_error={worst} large_bounded={bounded}\n",
            slopes.len()
        ));
    }
    for name in ["eval_norms", "sparse", "weights", "multiplier"] {
        if let Some(t) = load(name)? {
            s.push_str(&format!("{name} rows={}\n", t.rows.len()));
        }
    }
    if s.is_empty() {
        s.push_str("no experiment CSVs found\n");
    }
    Ok(s)
}
