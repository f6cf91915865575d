use thiserror::Error;

use crate::grid::ModuleId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("module M{0} does not exist on this grid")]
    InvalidModule(usize),

    #[error("point ({x}, {y}) lies outside the workspace")]
    OutOfWorkspace { x: f64, y: f64 },

    #[error("modules {from} and {to} are not edge-adjacent")]
    NotAdjacent { from: ModuleId, to: ModuleId },

    #[error("degenerate tilt: plane normal z-component {nz} is not positive")]
    DegenerateTilt { nz: f64 },

    #[error("object is on {measured} but target is on {target}")]
    ModuleMismatch {
        measured: ModuleId,
        target: ModuleId,
    },

    #[error("object {0} already has an active task")]
    DuplicateTask(usize),

    #[error("unknown object id {0}")]
    UnknownObject(usize),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("logs cannot be compared: {0}")]
    MismatchedLogs(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
