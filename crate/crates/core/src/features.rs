//! Image -> fixed-length feature vectors, for FID/KID and feature-space
//! nearest-neighbor search.
//!
//! Two extractor kinds exist: a pretrained affine embedding loaded from a
//! model file, and a seeded random projection that needs no downloads and is
//! what the test suite runs on. Both are affine maps followed by a logistic
//! squash, so features live in `[0, 1]^d` and the zero image maps exactly to
//! the squashed bias.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::dataset::ImageSet;
use crate::error::{Error, Result};
use crate::imaging;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    PretrainedEmbedding,
    SeededRandomProjection,
}

/// A deterministic image embedder: resize to `input_resolution`, flatten,
/// apply `sigmoid(W x + b)`.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub kind: ExtractorKind,
    pub output_dim: usize,
    pub input_resolution: usize,
    pub seed: Option<u64>,
    pub model_source: Option<PathBuf>,
    weights: Array2<f64>,
    bias: Array1<f64>,
    fingerprint: String,
}

/// Feature vectors in source-manifest order.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    /// `N x d`, stored as `f32` to match the cache wire format.
    pub vectors: Array2<f32>,
    pub extractor_fingerprint: String,
    /// Source ids (one per row) when known; empty after a cache load.
    pub source_ids: Vec<String>,
}

impl FeatureExtractor {
    /// Fixed random affine map drawn from a seeded generator.
    pub fn seeded_random(output_dim: usize, input_resolution: usize, seed: u64) -> Self {
        assert!(output_dim > 0, "output_dim must be positive");
        let in_dim = 3 * input_resolution * input_resolution;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (in_dim as f64).sqrt();
        let mut weights = Array2::<f64>::zeros((output_dim, in_dim));
        for v in weights.iter_mut() {
            *v = rng.random_range(-1.0..1.0) * scale * 4.0;
        }
        let mut bias = Array1::<f64>::zeros(output_dim);
        for v in bias.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let fingerprint = fingerprint_of(
            ExtractorKind::SeededRandomProjection,
            output_dim,
            input_resolution,
            Some(seed),
            None,
        );
        Self {
            kind: ExtractorKind::SeededRandomProjection,
            output_dim,
            input_resolution,
            seed: Some(seed),
            model_source: None,
            weights,
            bias,
            fingerprint,
        }
    }

    /// Load a pretrained affine embedding from a model file (see
    /// [`write_model_file`] for the format).
    pub fn from_model_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::ExtractorUnavailable(format!("{}: {e}", path.display())))?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::ExtractorUnavailable("model header missing".into()))?;
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| Error::ExtractorUnavailable(format!("model header: {e}")))?;
        if header["version"].as_u64() != Some(MODEL_VERSION as u64) {
            return Err(Error::ExtractorUnavailable("model version mismatch".into()));
        }
        let output_dim = header["output_dim"].as_u64().unwrap_or(0) as usize;
        let input_resolution = header["input_resolution"].as_u64().unwrap_or(0) as usize;
        if output_dim == 0 || input_resolution == 0 {
            return Err(Error::ExtractorUnavailable("model header incomplete".into()));
        }
        let in_dim = 3 * input_resolution * input_resolution;
        let payload = &bytes[nl + 1..];
        let expected = (output_dim * in_dim + output_dim) * 4;
        if payload.len() != expected {
            return Err(Error::ExtractorUnavailable(format!(
                "model payload is {} bytes, expected {expected}",
                payload.len()
            )));
        }
        let mut floats = Vec::with_capacity(output_dim * in_dim + output_dim);
        for chunk in payload.chunks_exact(4) {
            floats.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
        let weights =
            Array2::from_shape_vec((output_dim, in_dim), floats[..output_dim * in_dim].to_vec())
                .expect("shape checked above");
        let bias = Array1::from_vec(floats[output_dim * in_dim..].to_vec());
        let model_sha = hex::encode(Sha256::digest(&bytes));
        let fingerprint = fingerprint_of(
            ExtractorKind::PretrainedEmbedding,
            output_dim,
            input_resolution,
            None,
            Some(&model_sha),
        );
        Ok(Self {
            kind: ExtractorKind::PretrainedEmbedding,
            output_dim,
            input_resolution,
            seed: None,
            model_source: Some(path.to_path_buf()),
            weights,
            bias,
            fingerprint,
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// The vector the zero image embeds to: the squashed bias.
    pub fn bias_response(&self) -> Array1<f64> {
        self.bias.mapv(squash)
    }

    /// Embed one image. `label` only feeds error messages.
    pub fn embed(&self, pixels: &Array3<f32>, label: &str) -> Result<Array1<f64>> {
        let res = self.input_resolution;
        let resized = if pixels.dim() == (res, res, 3) {
            pixels.clone()
        } else {
            imaging::resize_area(pixels, res, res)
        };
        let flat: Array1<f64> = Array1::from_iter(resized.iter().map(|&v| v as f64));
        let mut out = self.weights.dot(&flat);
        out += &self.bias;
        out.mapv_inplace(squash);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::FeatureOverflow(label.to_string()));
        }
        Ok(out)
    }
}

/// Logistic squash followed by a clamp into `[0, 1]`.
fn squash(x: f64) -> f64 {
    (1.0 / (1.0 + (-x).exp())).clamp(0.0, 1.0)
}

fn fingerprint_of(
    kind: ExtractorKind,
    dim: usize,
    res: usize,
    seed: Option<u64>,
    model_sha: Option<&str>,
) -> String {
    let canonical = format!(
        "kind={kind:?};dim={dim};res={res};seed={seed:?};model={model_sha:?}"
    );
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Embed every record of `images`, in manifest order.
pub fn extract_features(images: &ImageSet, extractor: &FeatureExtractor) -> Result<FeatureSet> {
    if images.is_empty() {
        return Err(Error::NoImagesFound(PathBuf::from("<image set>")));
    }
    let mut vectors = Array2::<f32>::zeros((images.len(), extractor.output_dim));
    let mut source_ids = Vec::with_capacity(images.len());
    for (i, rec) in images.records.iter().enumerate() {
        let v = extractor.embed(&rec.pixels, &rec.source_path)?;
        for (j, &x) in v.iter().enumerate() {
            vectors[[i, j]] = x as f32;
        }
        source_ids.push(rec.source_path.clone());
    }
    Ok(FeatureSet {
        vectors,
        extractor_fingerprint: extractor.fingerprint.clone(),
        source_ids,
    })
}

pub const CACHE_VERSION: u32 = 1;
pub const MODEL_VERSION: u32 = 1;

/// Write a `.featcache` file: one JSON header line, then row-major
/// little-endian `f32` payload.
pub fn cache_features(features: &FeatureSet, path: &Path) -> Result<()> {
    let (n, d) = features.vectors.dim();
    let mut payload = Vec::with_capacity(n * d * 4);
    for &v in features.vectors.iter() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let checksum = payload_checksum(&features.extractor_fingerprint, &payload);
    let header = serde_json::json!({
        "version": CACHE_VERSION,
        "n": n,
        "d": d,
        "fingerprint": features.extractor_fingerprint,
        "checksum": checksum,
    });
    let mut file = std::fs::File::create(path)?;
    file.write_all(header.to_string().as_bytes())?;
    file.write_all(b"\n")?;
    file.write_all(&payload)?;
    Ok(())
}

/// Read a `.featcache` file back; refuses version or integrity mismatches.
pub fn load_features(path: &Path) -> Result<FeatureSet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::CacheFormat("missing header line".into()))?;
    let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::CacheFormat(format!("bad header: {e}")))?;
    if header["version"].as_u64() != Some(CACHE_VERSION as u64) {
        return Err(Error::CacheFormat(format!(
            "version {} unsupported",
            header["version"]
        )));
    }
    let fingerprint = header["fingerprint"]
        .as_str()
        .ok_or_else(|| Error::UntrustedCache("fingerprint absent".into()))?
        .to_string();
    if fingerprint.is_empty() {
        return Err(Error::UntrustedCache("fingerprint empty".into()));
    }
    let checksum = header["checksum"]
        .as_str()
        .ok_or_else(|| Error::UntrustedCache("checksum absent".into()))?;
    let n = header["n"].as_u64().ok_or_else(|| Error::CacheFormat("n absent".into()))? as usize;
    let d = header["d"].as_u64().ok_or_else(|| Error::CacheFormat("d absent".into()))? as usize;
    let payload = &bytes[nl + 1..];
    if payload.len() != n * d * 4 {
        return Err(Error::CacheFormat(format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            n * d * 4
        )));
    }
    if payload_checksum(&fingerprint, payload) != checksum {
        return Err(Error::UntrustedCache("checksum mismatch".into()));
    }
    let mut data = Vec::with_capacity(n * d);
    for chunk in payload.chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(FeatureSet {
        vectors: Array2::from_shape_vec((n, d), data).expect("length checked above"),
        extractor_fingerprint: fingerprint,
        source_ids: Vec::new(),
    })
}

fn payload_checksum(fingerprint: &str, payload: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(fingerprint.as_bytes());
    hasher.update(payload);
    hex::encode(hasher.finalize())
}

/// Export an affine embedding as a pretrained model file.
pub fn write_model_file(
    weights: &Array2<f32>,
    bias: &[f32],
    input_resolution: usize,
    path: &Path,
) -> Result<()> {
    let (d, in_dim) = weights.dim();
    assert_eq!(in_dim, 3 * input_resolution * input_resolution);
    assert_eq!(bias.len(), d);
    let header = serde_json::json!({
        "version": MODEL_VERSION,
        "kind": "pretrained_embedding",
        "output_dim": d,
        "input_resolution": input_resolution,
    });
    let mut file = std::fs::File::create(path)?;
    file.write_all(header.to_string().as_bytes())?;
    file.write_all(b"\n")?;
    for &v in weights.iter() {
        file.write_all(&v.to_le_bytes())?;
    }
    for &v in bias {
        file.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}
