use thiserror::Error;

use crate::ir::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("shape mismatch at `{node}`: declared {declared}, computed {computed}")]
    ShapeMismatch {
        node: String,
        declared: String,
        computed: String,
    },
    #[error("parameter `{0}` not found in blob store")]
    DanglingRef(String),
    #[error("graph contains a cycle through node {0}")]
    Cycle(NodeId),
    #[error("vertex {id} ({kind}) cannot be folded: {reason}")]
    UnfoldableVertex {
        id: NodeId,
        kind: String,
        reason: String,
    },
    #[error("unsupported transform at node {id}: {reason}")]
    UnsupportedTransform { id: NodeId, reason: String },
    #[error("unsupported operation {kind} at node {id}")]
    UnsupportedOp { id: NodeId, kind: String },
    #[error("region exceeds capacity of buffer {buffer}: end {end} > {capacity}")]
    BufferOverflow {
        buffer: String,
        end: usize,
        capacity: usize,
    },
    #[error("tensor {0} is absent from the DDR plan")]
    PlanMiss(NodeId),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("deadlock: instruction {0} can never become ready")]
    Deadlock(usize),
    #[error("group {0:?} admits no feasible tile")]
    Infeasible(Vec<NodeId>),
    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{phase}: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_phase(self, phase: &'static str) -> Error {
        Error::Phase {
            phase,
            source: Box::new(self),
        }
    }
}
