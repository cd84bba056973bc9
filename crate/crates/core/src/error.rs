use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image too small: {height}x{width}, need at least {min}x{min}")]
    TooSmall { height: usize, width: usize, min: usize },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("malformed model file: {0}")]
    Format(String),

    #[error("malformed image file: {0}")]
    Decode(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
