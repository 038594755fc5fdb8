use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid camera: {0}")]
    Camera(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("frame {frame}: no kept pixels with positive depth")]
    EmptyFrame { frame: usize },

    #[error("initialization failed: {0}")]
    Init(String),

    #[error("forward state does not match the supplied gradients: {0}")]
    StateMismatch(String),

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },

    #[error("scene error in {path}: {detail}")]
    Scene { path: PathBuf, detail: String },

    #[error("frame {frame}: {detail}")]
    Frame { frame: usize, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
