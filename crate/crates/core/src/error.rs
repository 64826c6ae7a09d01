use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("node id {id} out of range for {num_nodes} nodes")]
    NodeOutOfRange { id: usize, num_nodes: usize },
    #[error("duplicate edge ({src}, {dst})")]
    DuplicateEdge { src: usize, dst: usize },
    #[error("input edge list contains self-loop on node {node}")]
    SelfLoopInInput { node: usize },
    #[error("graph already has self-loops")]
    SelfLoopsPresent,
    #[error("graph has no self-loops (node {node} would have zero degree)")]
    MissingSelfLoops { node: usize },
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("index {index} out of range for length {len} in {op}")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("empty input to {op}")]
    Empty { op: &'static str },
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
    #[error("variable does not belong to this tape")]
    UnknownVar,
    #[error("loss must be 1x1, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("function is not deterministic: {first} then {second}")]
    NonDeterministic { first: f64, second: f64 },
    #[error("mask selects no labeled nodes")]
    EmptyMask,
    #[error("node {node} is in the mask but has no label")]
    Unlabeled { node: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("label vector of length {len} for {num_classes} classes")]
    LabelWidth { len: usize, num_classes: usize },
    #[error("non-finite gradient for parameter {name}")]
    NonFiniteGradient { name: String },
    #[error("loss diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("{0} has no attention layers")]
    NoAttention(&'static str),
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),
}
