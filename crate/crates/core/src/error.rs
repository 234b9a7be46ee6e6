use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown column `{0}`")]
    MissingColumn(String),

    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("row {row}: `{column}` = {value} is outside the domain of ln")]
    LogDomain { row: usize, column: String, value: f64 },

    #[error("row {row}: invalid record: {reason}")]
    InvalidRecord { row: usize, reason: String },

    #[error("collinear columns: {}", .0.join(", "))]
    Collinear(Vec<String>),

    #[error("insufficient observations: n = {n} with {params} parameters")]
    InsufficientObservations { n: usize, params: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("k = {k} exceeds the {distinct} distinct points")]
    InfeasibleClusters { k: usize, distinct: usize },

    #[error("coincident points (zero distance): {pairs:?}")]
    CoincidentPoints { pairs: Vec<(usize, usize)> },

    #[error("cluster-robust variance needs at least 2 clusters, got {0}")]
    DegenerateClusters(usize),

    #[error("group {group} has fewer than 2 observations")]
    SmallGroup { group: usize },

    #[error("model is under-identified: {0}")]
    Underidentified(String),

    #[error("no excluded instruments")]
    ZeroInstruments,

    #[error("response has a single class")]
    SingleClass,

    #[error("perfect separation detected on `{column}`")]
    Separation { column: String },

    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize, last: Vec<f64> },

    #[error("models are not nested: {0}")]
    NotNested(String),

    #[error("optimization failure: unrestricted loglik {unrestricted} < restricted {restricted}")]
    OptimizationFailure { unrestricted: f64, restricted: f64 },

    #[error("degenerate panel: {0}")]
    DegeneratePanel(String),

    #[error("empty {0} partition; try a different seed")]
    EmptyPartition(&'static str),

    #[error("no common coefficients between the models")]
    NoCommonCoefficients,
}
