use thiserror::Error;

pub type Result<T> = std::result::Result<T, JicoError>;

/// Which half-step of the alternating fit an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStage {
    Joint,
    Individual(usize),
}

impl std::fmt::Display for FitStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitStage::Joint => write!(f, "joint step"),
            FitStage::Individual(g) => write!(f, "individual step of group {g}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum JicoError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate projection: the weight constraints remove all signal from X")]
    DegenerateProjection,

    #[error("degenerate direction: the response is orthogonal to the feasible space (|P'd| = {norm:.3e})")]
    DegenerateDirection { norm: f64 },

    #[error(
        "rank exhausted: {constraints} constraints leave no feasible direction in rank {rank}"
    )]
    RankExhausted { rank: usize, constraints: usize },

    #[error("fixed point failure: no fixed point found from {} starts (best relative residual {:.3e})",
        .starts.len(), .residuals.iter().cloned().fold(f64::INFINITY, f64::min))]
    FixedPointFailure {
        starts: Vec<f64>,
        residuals: Vec<f64>,
    },

    #[error("fit failed in {stage}, component {component}: {source}")]
    Fit {
        stage: FitStage,
        component: usize,
        #[source]
        source: Box<JicoError>,
    },

    #[error("group {group} has {size} samples, fewer than the {folds} folds requested")]
    GroupTooSmall {
        group: String,
        size: usize,
        folds: usize,
    },

    #[error("all {0} candidates failed")]
    AllFailed(usize, Vec<String>),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown group label `{0}`")]
    UnknownGroup(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
