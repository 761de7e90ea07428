use thiserror::Error;

use crate::region_graph::RegionId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    // ---- models ----
    #[error("invalid model size: {0}")]
    InvalidSize(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("state space of {states:.0} configurations exceeds limit {limit}")]
    StateSpaceTooLarge { states: f64, limit: u64 },
    #[error("all joint configurations have zero weight")]
    ZeroPartition,

    // ---- region graphs ----
    #[error("region graph contains a directed cycle")]
    CyclicGraph,
    #[error("unknown region {0}")]
    UnknownRegion(RegionId),
    #[error("invalid region graph: {0}")]
    InvalidRegionGraph(String),
    #[error("inner region {0} is not complete")]
    NonCompleteInnerRegion(RegionId),

    // ---- reduction operators ----
    #[error("{operator} precondition violated: {clause}")]
    PreconditionViolated {
        operator: &'static str,
        clause: String,
    },
    #[error("region {0} is not an outer region")]
    NotOuterRegion(RegionId),
    #[error("removing clique {clique:?} from region {region} orphans a child clique")]
    ChildCliqueOrphaned { region: RegionId, clique: Vec<usize> },
    #[error("region {0} has more than one parent")]
    MultipleParents(RegionId),
    #[error("no shared child clique of regions {from} and {to} covers factor {factor}")]
    NoCoveringSharedChildClique {
        factor: usize,
        from: RegionId,
        to: RegionId,
    },
    #[error("separator does not separate the two sides in the region structure")]
    NotASeparator,
    #[error("separator {0:?} is not complete in the region")]
    SeparatorNotComplete(Vec<usize>),
    #[error("child region {0} straddles the split")]
    ChildStraddlesSplit(RegionId),
    #[error("factor {0} is not covered by either side of the split")]
    FactorUncovered(usize),
    #[error("region {0} is already complete")]
    RegionComplete(RegionId),
    #[error("clique set of region {0} is not decomposable")]
    NotDecomposable(RegionId),
    #[error("inner region {0} is not decomposable")]
    NonDecomposableInnerRegion(RegionId),
    #[error("not a loop-graph: {0}")]
    NotALoopGraph(String),
    #[error("loop {0:?} is not a cycle of the base graph")]
    NotACycle(Vec<usize>),

    // ---- constructions ----
    #[error("model is not pairwise: factor {0} has arity > 2")]
    NotPairwise(usize),
    #[error("star width {width} too large for {n} variables")]
    WidthTooLarge { width: usize, n: usize },
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("factor {0} is not covered by any outer cluster")]
    UncoveredFactor(usize),
    #[error("factor {0} is not assigned to any loop or edge region")]
    UnassignedFactor(usize),
    #[error("base clique set is not decomposable")]
    BaseNotDecomposable,
    #[error("outer region {0} does not subsume the base region")]
    OuterDoesNotSubsumeBase(usize),

    // ---- inference ----
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("variable {0} is not covered by any region")]
    UncoveredVariable(usize),
    #[error("beliefs have not converged")]
    NotConverged,

    // ---- io ----
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn precondition(operator: &'static str, clause: impl Into<String>) -> Error {
    Error::PreconditionViolated {
        operator,
        clause: clause.into(),
    }
}
