use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("facet {facet} references vertex {vertex}, but the mesh has {vertex_count} vertices")]
    VertexOutOfRange {
        facet: usize,
        vertex: usize,
        vertex_count: usize,
    },

    #[error("facet {0} is degenerate")]
    DegenerateFacet(usize),

    #[error("facet {facet} has label {label}, but only {label_count} labels exist")]
    LabelOutOfRange {
        facet: usize,
        label: usize,
        label_count: usize,
    },

    #[error("edge ({0}, {1}) is shared by more than two facets")]
    NonManifoldEdge(usize, usize),

    #[error("point lies behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("brute-force search over {0} labelings exceeds the enumeration bound")]
    InstanceTooLarge(f64),

    #[error("non-finite gradient at vertex {vertex}: {detail}")]
    NonFiniteGradient { vertex: usize, detail: String },

    #[error("no pixel has a defined depth in both renders")]
    EmptyOverlap,

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
