//! The learnable piece-to-slot matcher and its mental-image providers.

mod embed;
mod mlp;
mod pipeline;
mod provider;
mod train;
mod weights;

pub use embed::{
    l2_normalize, l2_normalize_backward, BranchCache, Embedder, EmbeddingNet, Embeddings,
    NetGrads, NetShape, RawPixelEmbedder, DEGENERATE_NORM,
};
pub use mlp::{Adam, Dense, Mlp, MlpCache, MlpGrads};
pub use pipeline::{
    assign_from_scores, cost_matrix, embed_puzzle, roi_crop_slots, solve_puzzle,
    solve_with_mental_image, SolveConfig,
};
pub use provider::{
    provider_external, provider_oracle, ExternalProvider, MeanProvider, MentalImage,
    MentalImageProvider, OracleProvider,
};
pub use train::{
    epoch_batches, sample_loss, train_matcher, train_on_samples, EpochLog, LossParts,
    TrainConfig, TrainOutcome, TrainingSample,
};
pub use weights::{WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub(crate) use weights::{read_file, write_file, Reader, Writer};
