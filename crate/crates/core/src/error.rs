use std::path::PathBuf;

use crate::simgraph::ModelId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("self-edge not representable: {0}")]
    SelfEdge(ModelId),

    #[error("empty model id")]
    EmptyModelId,

    #[error("unknown model id: {0}")]
    UnknownModel(ModelId),

    #[error("duplicate model id: {0}")]
    DuplicateModel(ModelId),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{0}")]
    Invalid(String),

    #[error("mesh has zero triangles")]
    ZeroTriangles,

    #[error("degenerate mesh: total surface area is zero")]
    DegenerateMesh,

    #[error("empty point cloud")]
    EmptyCloud,

    #[error("voxel resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(u32, u32),

    #[error("no labeled edges")]
    NoLabeledEdges,

    #[error("class absent from reference")]
    ClassAbsent,

    #[error("silhouette undefined for K=1")]
    SingleCluster,

    #[error("ids not in remaining set: {}", join_ids(.0))]
    NotRemaining(Vec<ModelId>),

    #[error("cluster annotation already terminal")]
    AlreadyTerminal,

    #[error("cluster annotation not terminal")]
    NotTerminal,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

fn join_ids(ids: &[ModelId]) -> String {
    ids.iter().map(|id| id.as_str()).collect::<Vec<_>>().join(", ")
}
