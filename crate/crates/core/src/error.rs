use thiserror::Error;

use crate::graphstate::VertexId;

/// Errors raised by the library. Messages are single-line so the CLI can
/// forward them verbatim.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vertex not found: {0}")]
    VertexNotFound(VertexId),
    #[error("duplicate vertex: {0}")]
    DuplicateVertex(VertexId),
    #[error("self-loop on vertex {0}")]
    SelfLoop(VertexId),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(VertexId, VertexId),
    #[error("wrong vertex kind for {0}: expected {1}")]
    KindMismatch(VertexId, &'static str),
    #[error("photon {p} not absorbable by emitter {e}")]
    NotAbsorbable { e: VertexId, p: VertexId },
    #[error("emitter {0} entangled")]
    EmitterEntangled(VertexId),
    #[error("emitters {0} and {1} cannot be unentangled")]
    NotUnentangleable(VertexId, VertexId),
    #[error("stuck: enlarge initial conditions ({0} photons remain)")]
    Stuck(usize),
    #[error("invalid initial conditions: {0}")]
    InvalidInit(String),
    #[error("plan does not terminate in the empty graph")]
    NonTerminatingPlan,
    #[error("gate on retired emitter {0}")]
    RetiredEmitter(VertexId),
    #[error("qubit set mismatch")]
    QubitMismatch,
    #[error("qubit {0} is entangled with the kept subsystem")]
    NotSeparable(VertexId),
    #[error("classical gate cannot be applied to a tableau")]
    ClassicalGate,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("search space too large: {0}")]
    SearchTooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
