use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no images found in {0}")]
    NoImagesFound(PathBuf),

    #[error("failed to decode image {path}: {reason}")]
    ImageDecode { path: PathBuf, reason: String },

    #[error("inconsistent resolutions: {first_path} is {first_w}x{first_h} but {path} is {w}x{h}")]
    InconsistentResolutions {
        first_path: PathBuf,
        first_w: u32,
        first_h: u32,
        path: PathBuf,
        w: u32,
        h: u32,
    },

    #[error("crop exceeds image: requested {req_h}x{req_w} from {src_h}x{src_w}")]
    CropExceedsImage {
        req_h: usize,
        req_w: usize,
        src_h: usize,
        src_w: usize,
    },

    #[error("extractor unavailable: {0}")]
    ExtractorUnavailable(String),

    #[error("feature overflow in image {0}")]
    FeatureOverflow(String),

    #[error("untrusted cache: {0}")]
    UntrustedCache(String),

    #[error("cache format: {0}")]
    CacheFormat(String),

    #[error("insufficient samples: covariance needs at least 2, got {0}")]
    InsufficientSamples(usize),

    #[error("insufficient batch: diversity needs at least 2 images, got {0}")]
    InsufficientBatch(usize),

    #[error("incompatible stats: dimension {0} vs {1}")]
    IncompatibleStats(usize, usize),

    #[error("incompatible features: extractor fingerprints differ ({0} vs {1})")]
    FingerprintMismatch(String, String),

    #[error("fid: sqrtm failed ({0})")]
    SqrtmFailed(String),

    #[error("fid is negative beyond tolerance: {0}")]
    NegativeFid(f64),

    #[error("kid: subset exceeds set ({subset} > {available})")]
    KidSubsetExceedsSet { subset: usize, available: usize },

    #[error("resolution not in ladder: {0} (expected a power of two in 32..=1024)")]
    ResolutionNotInLadder(usize),

    #[error("latent dim: expected {expected}, got {got}")]
    LatentDim { expected: usize, got: usize },

    #[error("sle shapes: {0}")]
    SleShapes(String),

    #[error("adain channels: feature map has {map} channels, params have {params}")]
    AdainChannels { map: usize, params: usize },

    #[error("discriminator domain: {0}")]
    DiscriminatorDomain(String),

    #[error("no discriminators")]
    NoDiscriminators,

    #[error("non-finite scores at iteration {0}")]
    NonFiniteScores(u64),

    #[error("training diverged: non-finite losses for {0} consecutive steps")]
    TrainingDiverged(u64),

    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),

    #[error("k must be >= 1")]
    InvalidK,

    #[error("extractor required for feature-space search")]
    ExtractorRequired,

    #[error("invalid config at {path}: {reason}")]
    InvalidConfig { path: String, reason: String },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
