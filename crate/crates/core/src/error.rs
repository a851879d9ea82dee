//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GiseError {
    #[error("Gegenbauer parameter must satisfy alpha > -1/2, got {0}")]
    AlphaDomain(f64),

    #[error("argument {value} outside the domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("invalid element [{left}, {right}]")]
    InvalidElement { left: f64, right: f64 },

    #[error("Gauss node solve did not converge for alpha={alpha}, m={m}")]
    NodeSolve { alpha: f64, m: usize },

    #[error("degenerate node set: nodes {0} and {1} coincide")]
    DegenerateNodes(usize, usize),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("non-finite value from {what} (element {element}, node {node})")]
    NonFinite {
        what: &'static str,
        element: usize,
        node: usize,
    },

    #[error("non-finite output at index {0}")]
    NonFiniteIndex(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, GiseError>;

impl From<std::io::Error> for GiseError {
    fn from(e: std::io::Error) -> Self {
        GiseError::Io(e.to_string())
    }
}
