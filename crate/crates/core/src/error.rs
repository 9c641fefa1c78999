use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum UqpeError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("no complete rows remain after dropping {dropped} incomplete rows")]
    EmptyData { dropped: usize },

    #[error("degenerate basis: column `{column}` has zero sample variance")]
    DegenerateBasis { column: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate outcome indicator: {ones} of {n} observations below the threshold")]
    DegenerateOutcome { ones: usize, n: usize },

    #[error("every point of the quantile grid has a degenerate indicator")]
    AllGridDegenerate,

    #[error("threshold {q} lies outside the fitted grid range [{lo}, {hi}]")]
    Extrapolation { q: f64, lo: f64, hi: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("density estimate {f} is below the floor {floor}")]
    DensityFloor { f: f64, floor: f64 },

    #[error("bootstrap weight sum is numerically zero")]
    DegenerateWeights,

    #[error("bootstrap draws have zero interquartile range")]
    DegenerateDraws,

    #[error("zero-variance outcome: bandwidth would be zero")]
    ZeroBandwidth,

    #[error("baseline infeasible: {0}")]
    BaselineInfeasible(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("replicate failed after {0} redraws")]
    RedrawsExhausted(usize),

    #[error("Monte Carlo study failed: {failed} of {reps} replications failed")]
    StudyFailed { failed: usize, reps: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<UqpeError>,
    },
}

/// Pipeline stage used to tag propagated errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Basis,
    OutcomeModel,
    Riesz,
    Density,
    PointEstimate,
    Bootstrap,
    Simulation,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Ingest => "ingest",
            Stage::Basis => "basis",
            Stage::OutcomeModel => "outcome_model",
            Stage::Riesz => "riesz",
            Stage::Density => "density",
            Stage::PointEstimate => "point_estimate",
            Stage::Bootstrap => "bootstrap",
            Stage::Simulation => "simulation",
        };
        f.write_str(s)
    }
}

impl UqpeError {
    pub fn at(self, stage: Stage) -> Self {
        match self {
            e @ UqpeError::Stage { .. } => e,
            e => UqpeError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Stage tag, if the error was raised inside a tagged pipeline step.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            UqpeError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// The innermost error, with stage tags stripped.
    pub fn root(&self) -> &UqpeError {
        match self {
            UqpeError::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, UqpeError>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
