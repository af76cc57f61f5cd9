pub mod acquisition;
pub mod agent;
pub mod analytics;
pub mod api;
pub mod dsp;
pub mod embeddings;
pub mod fixture;
pub mod protocols;
pub mod render;
pub mod scalar;
pub mod search;
pub mod store;

pub use scalar::Real;

/// Default scalar for the daemon and CLI.
pub type Scalar = f64;
pub type Epoch = dsp::Epoch<Scalar>;
pub type EpochMetrics = dsp::EpochMetrics<Scalar>;
pub type EpochProcessor = dsp::EpochProcessor<Scalar>;
pub type ProcessedEpoch = dsp::ProcessedEpoch<Scalar>;
pub type Spectrum = dsp::Spectrum<Scalar>;
pub type BandPowers = dsp::BandPowers<Scalar>;
pub type EmbeddingVector = embeddings::EmbeddingVector<Scalar>;
