use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unresolvable cube: side {side} is below grid spacing {spacing}")]
    UnresolvableCube { side: f64, spacing: f64 },

    #[error("cube does not lie inside the grid box")]
    CubeOutsideGrid,

    #[error("cube root does not match the grid box")]
    RootMismatch,

    #[error("kernel not cancellative: angular mean {0:e}")]
    KernelNotCancellative(f64),

    #[error("j window [{have_min}, {have_max}] does not cover the nonempty scales [{need_min}, {need_max}]")]
    JWindowTooSmall {
        have_min: i32,
        have_max: i32,
        need_min: i32,
        need_max: i32,
    },

    #[error("empty cube pool")]
    EmptyCubePool,

    #[error("empty lattice list")]
    EmptyLatticeList,

    #[error("domination constant blow-up at cube level {level} index {index:?} (D reached {d})")]
    DominationBlowUp { level: u32, index: Vec<i64>, d: f64 },

    #[error("exponent overflow: {0}")]
    Overflow(String),

    #[error("nonpositive weight sample {value} at cell {cell}")]
    NonPositiveWeight { cell: usize, value: f64 },

    #[error("exponent relation 1/q = 1/p - beta/n violated: p={p}, q={q}, beta={beta}, n={n}")]
    ExponentRelation { p: f64, q: f64, beta: f64, n: usize },

    #[error("operation supports dimension 2 only, got {0}")]
    UnsupportedDimension(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
