use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image {height}x{width} is not divisible into a {rows}x{cols} grid")]
    NonDivisibleGrid {
        height: usize,
        width: usize,
        rows: usize,
        cols: usize,
    },
    #[error("grid cells are {tile_height}x{tile_width}, pieces must be square")]
    NonSquareTile { tile_height: usize, tile_width: usize },
    #[error("pieces {first} and {second} are both assigned to slot {slot}")]
    SlotCollision {
        first: usize,
        second: usize,
        slot: usize,
    },
    #[error("erosion of {border_px}px leaves nothing of a {side}px piece")]
    ErosionTooLarge { border_px: usize, side: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NonSquare { rows: usize, cols: usize },
    #[error("sinkhorn normalization degenerated: {0}")]
    Degenerate(String),
    #[error("doubly stochastic matrix carries no iteration record; it was not produced by sinkhorn_normalize")]
    IterationRecordMissing,
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("cannot assign {rows} rows injectively into {cols} columns")]
    MoreRowsThanColumns { rows: usize, cols: usize },
    #[error("puzzle {0} has no unperturbed source image")]
    SourceUnavailable(String),
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}: {detail}")]
    NaNLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("no present pieces to score")]
    EmptyPresentSet,
    #[error("need at least {needed} timed samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("no decodable images found in {0}")]
    NoImagesFound(PathBuf),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid weights file: {0}")]
    WeightsFormat(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
