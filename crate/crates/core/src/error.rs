use std::fmt;

use crate::bsd::Bsd;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Position inside a parsed text artifact (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke an operation's input contract (widths, indices, ranges).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("enumeration refused: width {width} exceeds exhaustive threshold {threshold}")]
    EnumerationRefused { width: usize, threshold: usize },

    #[error("unknown oracle `{0}`")]
    UnknownOracle(String),

    #[error("invalid parameters for `{name}`: {reason}")]
    InvalidParams { name: String, reason: String },

    #[error("{format} parse error at {pos}: {msg}")]
    Parse {
        format: &'static str,
        pos: Pos,
        msg: String,
    },

    #[error("{format} construct `{construct}` at line {line} is not supported")]
    Unsupported {
        format: &'static str,
        construct: String,
        line: usize,
    },

    #[error("lowering refused: {spec_leaves} speculative leaves remain")]
    LoweringRefused { spec_leaves: usize },

    /// A mismatching output bit ended on a constant leaf.
    #[error("hard fault: output {output} reached constant leaf {node}")]
    HardFault { output: usize, node: u32 },

    #[error("node budget exceeded: {nodes} reachable nodes > limit {limit}")]
    NodeBudget {
        nodes: usize,
        limit: usize,
        partial: Box<Bsd>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(
        format: &'static str,
        line: usize,
        col: usize,
        msg: impl Into<String>,
    ) -> Self {
        Error::Parse {
            format,
            pos: Pos { line, col },
            msg: msg.into(),
        }
    }
}
