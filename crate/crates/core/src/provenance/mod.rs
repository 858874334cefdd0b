//! The provenance capture engine: dispatched hook events become a versioned
//! whole-system provenance DAG with opacity, event merging and version
//! avoidance, streamed through a bounded ring buffer to a serializer that
//! emits a PROV-DM-style document.
//!
//! Reduction happens during capture, before elements reach the buffer: an
//! open mergeable edge is held in the destination object's capture state and
//! flushed once its merge window closes (an endpoint versions, or the trace
//! ends). Versioning guarantees acyclicity: a new node is created whenever
//! external information flows into an object, except when the inflow is an
//! exact repeat of the object's last inflow (version avoidance).

mod element;
mod engine;
mod ring;
mod serialize;
mod state;

pub use element::{
    node_kind_of, Annotations, NodeKind, NodeRef, ProvEdge, ProvElement, ProvNode, Relation,
};
pub use engine::{
    set_opaque, CaptureCounters, CaptureEngine, CaptureError, CaptureFilter, CaptureOptions,
};
pub use ring::{OverflowPolicy, RingBuffer, RingError, RingStats};
pub use serialize::{drain, serialize, ProvDocument, SerializeError, Serializer};
pub use state::{CaptureState, LastIncoming, LastOutgoing, PendingEdge, CAPTURE_SLOT, CONTEXT_SLOT};

#[cfg(test)]
mod tests;
