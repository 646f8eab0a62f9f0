use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the cwass library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point {re}+{im}i is not strictly inside the unit disk")]
    OutsideDisk { re: f64, im: f64 },

    #[error("mesh is not a topological disk: euler characteristic {euler}, {boundary_loops} boundary loop(s)")]
    Topology { euler: i64, boundary_loops: usize },

    #[error("malformed mesh {path}: line {line}: {message}")]
    MeshParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unbalanced transport problem: row mass {rows}, column mass {cols}")]
    Unbalanced { rows: f64, cols: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: String, iterations: usize },

    #[error("unsupported schema {0:?}")]
    Schema(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
