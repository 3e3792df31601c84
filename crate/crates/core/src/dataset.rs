//! Image ingestion and augmentation.
//!
//! A prepared training set is an [`ImageSet`]: an ordered list of records,
//! each carrying its source path, crop origin and flip flag, so the whole
//! pipeline (load -> crop -> flip) is reproducible from the manifest and a
//! seed.

use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging;

/// One prepared image plus its provenance.
#[derive(Debug, Clone)]
pub struct ImageRecord {
    /// Path of the source file, relative to the ingested directory.
    pub source_path: String,
    /// `H x W x 3` intensities in `[0, 1]`.
    pub pixels: Array3<f32>,
    /// (row, col) offset of the crop window into the source image.
    pub crop_origin: (usize, usize),
    pub flipped: bool,
}

/// An ordered, fixed-resolution collection of records.
#[derive(Debug, Clone)]
pub struct ImageSet {
    pub records: Vec<ImageRecord>,
    /// (H, W) shared by every record.
    pub resolution: (usize, usize),
    /// Seed that fixed all randomized choices during preparation.
    pub manifest_seed: u64,
}

/// How `load_image_dir` reconciles source resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionPolicy {
    /// Keep native sizes; error out if files disagree.
    Native,
    /// Area-average resample everything to (H, W).
    Resize(usize, usize),
}

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "tif", "tiff"];

/// Ingest a directory (recursively) of PNG/TIFF/JPEG files.
///
/// Records come back sorted by relative path, pixels normalized to `[0, 1]`,
/// crop origin `(0, 0)` and flip flag unset.
pub fn load_image_dir(path: &Path, policy: ResolutionPolicy) -> Result<ImageSet> {
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::ImageDecode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let ext = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if ext.as_deref().is_some_and(|e| IMAGE_EXTENSIONS.contains(&e)) {
            let rel = entry
                .path()
                .strip_prefix(path)
                .unwrap_or(entry.path())
                .to_string_lossy()
                .into_owned();
            files.push((rel, entry.path().to_path_buf()));
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    if files.is_empty() {
        return Err(Error::NoImagesFound(path.to_path_buf()));
    }

    let mut records = Vec::with_capacity(files.len());
    let mut resolution: Option<(usize, usize)> = None;
    let mut first_path = PathBuf::new();
    for (rel, abs) in files {
        let mut pixels = imaging::load_pixels(&abs)?;
        if let ResolutionPolicy::Resize(h, w) = policy {
            pixels = imaging::resize_area(&pixels, h, w);
        }
        let (h, w, _) = pixels.dim();
        match resolution {
            None => {
                resolution = Some((h, w));
                first_path = abs.clone();
            }
            Some((rh, rw)) if (rh, rw) != (h, w) => {
                return Err(Error::InconsistentResolutions {
                    first_path,
                    first_w: rw as u32,
                    first_h: rh as u32,
                    path: abs,
                    w: w as u32,
                    h: h as u32,
                });
            }
            _ => {}
        }
        records.push(ImageRecord {
            source_path: rel,
            pixels,
            crop_origin: (0, 0),
            flipped: false,
        });
    }

    Ok(ImageSet {
        resolution: resolution.unwrap(),
        records,
        manifest_seed: 0,
    })
}

/// Center-crop every record to `size`; record count unchanged.
pub fn center_crop(set: &ImageSet, size: (usize, usize)) -> Result<ImageSet> {
    let (h, w) = size;
    let mut records = Vec::with_capacity(set.records.len());
    for rec in &set.records {
        let (sh, sw, _) = rec.pixels.dim();
        let pixels = imaging::center_crop(&rec.pixels, h, w)?;
        records.push(ImageRecord {
            source_path: rec.source_path.clone(),
            pixels,
            crop_origin: (rec.crop_origin.0 + (sh - h) / 2, rec.crop_origin.1 + (sw - w) / 2),
            flipped: rec.flipped,
        });
    }
    Ok(ImageSet {
        records,
        resolution: size,
        manifest_seed: set.manifest_seed,
    })
}

/// Expand every record into `count` random crops of `size`, offsets drawn by
/// a seeded generator. Output order is record-major: all crops of record 0,
/// then record 1, and so on.
pub fn random_crop_expand(
    set: &ImageSet,
    size: (usize, usize),
    count: usize,
    seed: u64,
) -> Result<ImageSet> {
    assert!(count >= 1, "count must be >= 1");
    let (h, w) = size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(set.records.len() * count);
    for rec in &set.records {
        let (sh, sw, _) = rec.pixels.dim();
        if h > sh || w > sw {
            return Err(Error::CropExceedsImage {
                req_h: h,
                req_w: w,
                src_h: sh,
                src_w: sw,
            });
        }
        for _ in 0..count {
            let top = rng.random_range(0..=sh - h);
            let left = rng.random_range(0..=sw - w);
            records.push(ImageRecord {
                source_path: rec.source_path.clone(),
                pixels: imaging::crop_at(&rec.pixels, top, left, h, w),
                crop_origin: (rec.crop_origin.0 + top, rec.crop_origin.1 + left),
                flipped: rec.flipped,
            });
        }
    }
    Ok(ImageSet {
        records,
        resolution: size,
        manifest_seed: seed,
    })
}

/// Double the set: every record followed by its horizontal mirror.
pub fn hflip_augment(set: &ImageSet) -> ImageSet {
    let mut records = Vec::with_capacity(set.records.len() * 2);
    for rec in &set.records {
        records.push(rec.clone());
        records.push(ImageRecord {
            source_path: rec.source_path.clone(),
            pixels: imaging::hflip(&rec.pixels),
            crop_origin: rec.crop_origin,
            flipped: !rec.flipped,
        });
    }
    ImageSet {
        records,
        resolution: set.resolution,
        manifest_seed: set.manifest_seed,
    }
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Stack a slice of record indices into a `B x H x W x 3` batch.
    pub fn batch_pixels(&self, indices: &[usize]) -> Array4<f32> {
        let (h, w) = self.resolution;
        let mut out = Array4::<f32>::zeros((indices.len(), h, w, 3));
        for (i, &idx) in indices.iter().enumerate() {
            out.index_axis_mut(ndarray::Axis(0), i)
                .assign(&self.records[idx].pixels);
        }
        out
    }

    /// Split off a held-out fraction by seeded permutation. Returns
    /// (train, holdout); the holdout gets at least one record when the
    /// fraction is positive and the set is non-empty.
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> (ImageSet, ImageSet) {
        let n = self.records.len();
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::seq::SliceRandom;
        indices.shuffle(&mut rng);
        let n_holdout = if fraction <= 0.0 {
            0
        } else {
            ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1))
        };
        let (hold_idx, train_idx) = indices.split_at(n_holdout);
        let mut hold_idx = hold_idx.to_vec();
        let mut train_idx = train_idx.to_vec();
        hold_idx.sort_unstable();
        train_idx.sort_unstable();
        let pick = |idx: &[usize]| ImageSet {
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
            resolution: self.resolution,
            manifest_seed: self.manifest_seed,
        };
        (pick(&train_idx), pick(&hold_idx))
    }
}

/// Shuffled minibatch iterator over one epoch.
///
/// Every record appears exactly once; the last partial batch is yielded
/// as-is. A batch size above the set size degrades to one full batch with a
/// logged warning.
pub struct BatchIter<'a> {
    set: &'a ImageSet,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
}

pub fn iterate_batches(set: &ImageSet, batch_size: usize, seed: u64) -> BatchIter<'_> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    if batch_size > set.len() {
        log::warn!(
            "batch_size {} exceeds dataset size {}; yielding a single full batch",
            batch_size,
            set.len()
        );
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    BatchIter {
        set,
        order,
        cursor: 0,
        batch_size: batch_size.min(set.len().max(1)),
    }
}

impl Iterator for BatchIter<'_> {
    /// (record indices, stacked pixels)
    type Item = (Vec<usize>, Array4<f32>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let idx = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        let pixels = self.set.batch_pixels(&idx);
        Some((idx, pixels))
    }
}

// Manifest and prepared-directory output.

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub file: String,
    pub source_path: String,
    pub crop_origin: (usize, usize),
    pub flipped: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub resolution: (usize, usize),
    pub seed: u64,
    pub records: Vec<ManifestRecord>,
}

pub const MANIFEST_VERSION: u32 = 1;

/// Write the set as numbered PNGs plus `manifest.json`.
pub fn write_prepared_dir(set: &ImageSet, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(set.records.len());
    for (i, rec) in set.records.iter().enumerate() {
        let file = format!("img_{i:06}.png");
        imaging::save_png(&rec.pixels, &dir.join(&file))?;
        records.push(ManifestRecord {
            file,
            source_path: rec.source_path.clone(),
            crop_origin: rec.crop_origin,
            flipped: rec.flipped,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        resolution: set.resolution,
        seed: set.manifest_seed,
        records,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toydata;

    fn toy_set(n: usize, h: usize, w: usize, seed: u64) -> ImageSet {
        toydata::generate(n, (h, w), seed, toydata::ToyKind::Blobs)
    }

    #[test]
    fn load_empty_dir_fails() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_image_dir(dir.path(), ResolutionPolicy::Native).unwrap_err();
        assert!(err.to_string().contains("no images found"));
    }

    #[test]
    fn load_dir_roundtrip_sorted_and_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let set = toy_set(3, 16, 16, 5);
        // Write out of order to confirm the loader sorts by name.
        for (i, rec) in set.records.iter().enumerate().rev() {
            imaging::save_png(&rec.pixels, &dir.path().join(format!("b_{i}.png"))).unwrap();
        }
        let loaded = load_image_dir(dir.path(), ResolutionPolicy::Native).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded.records[0].source_path, "b_0.png");
        assert!(loaded
            .records
            .iter()
            .all(|r| r.pixels.iter().all(|&v| (0.0..=1.0).contains(&v))));
        assert_eq!(loaded.resolution, (16, 16));
    }

    #[test]
    fn load_dir_mixed_resolutions_native_fails() {
        let dir = tempfile::tempdir().unwrap();
        imaging::save_png(&Array3::zeros((8, 8, 3)), &dir.path().join("a.png")).unwrap();
        imaging::save_png(&Array3::zeros((4, 4, 3)), &dir.path().join("b.png")).unwrap();
        let err = load_image_dir(dir.path(), ResolutionPolicy::Native).unwrap_err();
        assert!(err.to_string().contains("inconsistent resolutions"));
        // The resize policy reconciles them.
        let set = load_image_dir(dir.path(), ResolutionPolicy::Resize(4, 4)).unwrap();
        assert_eq!(set.resolution, (4, 4));
    }

    #[test]
    fn load_dir_undecodable_file_names_it() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("broken.png"), b"not a png").unwrap();
        let err = load_image_dir(dir.path(), ResolutionPolicy::Native).unwrap_err();
        assert!(err.to_string().contains("broken.png"));
    }

    #[test]
    fn duplicate_names_in_subdirs_are_disambiguated() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("a")).unwrap();
        std::fs::create_dir_all(dir.path().join("b")).unwrap();
        let img = Array3::zeros((4, 4, 3));
        imaging::save_png(&img, &dir.path().join("a/x.png")).unwrap();
        imaging::save_png(&img, &dir.path().join("b/x.png")).unwrap();
        let set = load_image_dir(dir.path(), ResolutionPolicy::Native).unwrap();
        assert_eq!(set.len(), 2);
        assert_ne!(set.records[0].source_path, set.records[1].source_path);
    }

    #[test]
    fn center_crop_counts_and_origin() {
        let set = toy_set(4, 10, 10, 1);
        let out = center_crop(&set, (6, 6)).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out.resolution, (6, 6));
        assert!(out.records.iter().all(|r| r.crop_origin == (2, 2)));
    }

    #[test]
    fn random_crop_expand_multiplies_and_is_deterministic() {
        let set = toy_set(3, 12, 12, 2);
        let a = random_crop_expand(&set, (8, 8), 10, 42).unwrap();
        let b = random_crop_expand(&set, (8, 8), 10, 42).unwrap();
        assert_eq!(a.len(), 30);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.crop_origin, rb.crop_origin);
            assert_eq!(ra.pixels, rb.pixels);
        }
        let c = random_crop_expand(&set, (8, 8), 10, 43).unwrap();
        assert!(a
            .records
            .iter()
            .zip(&c.records)
            .any(|(x, y)| x.crop_origin != y.crop_origin));
    }

    #[test]
    fn random_crop_forced_offset_equals_input() {
        let set = toy_set(2, 8, 8, 3);
        let out = random_crop_expand(&set, (8, 8), 1, 7).unwrap();
        assert_eq!(out.len(), 2);
        for (a, b) in out.records.iter().zip(&set.records) {
            assert_eq!(a.pixels, b.pixels);
            assert_eq!(a.crop_origin, (0, 0));
        }
    }

    #[test]
    fn crop_windows_stay_inside_source() {
        let set = toy_set(3, 12, 12, 2);
        let out = random_crop_expand(&set, (5, 7), 20, 9).unwrap();
        for rec in &out.records {
            assert!(rec.crop_origin.0 + 5 <= 12);
            assert!(rec.crop_origin.1 + 7 <= 12);
        }
    }

    #[test]
    fn hflip_doubles_and_interleaves() {
        let set = toy_set(3, 8, 8, 4);
        let out = hflip_augment(&set);
        assert_eq!(out.len(), 6);
        assert!(!out.records[0].flipped);
        assert!(out.records[1].flipped);
        assert_eq!(out.records[1].pixels, imaging::hflip(&out.records[0].pixels));
        // Flip the doubled set again: mirrors of mirrors reproduce originals.
        let twice = hflip_augment(&out);
        assert_eq!(twice.records[3].pixels, set.records[0].pixels);
        assert!(!twice.records[3].flipped);
    }

    #[test]
    fn batches_partition_the_epoch() {
        let set = toy_set(10, 8, 8, 6);
        let sizes: Vec<usize> = iterate_batches(&set, 4, 0).map(|(idx, _)| idx.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let mut seen: Vec<usize> = iterate_batches(&set, 4, 0).flat_map(|(idx, _)| idx).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn batches_shuffle_by_seed() {
        let set = toy_set(8, 8, 8, 6);
        let a: Vec<usize> = iterate_batches(&set, 8, 1).flat_map(|(i, _)| i).collect();
        let b: Vec<usize> = iterate_batches(&set, 8, 1).flat_map(|(i, _)| i).collect();
        let c: Vec<usize> = iterate_batches(&set, 8, 2).flat_map(|(i, _)| i).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut sorted = c.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn oversized_batch_yields_single_batch() {
        let set = toy_set(3, 8, 8, 6);
        let batches: Vec<_> = iterate_batches(&set, 10, 0).collect();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].0.len(), 3);
    }

    #[test]
    fn holdout_split_is_disjoint_and_seeded() {
        let set = toy_set(20, 8, 8, 6);
        let (train, hold) = set.split_holdout(0.1, 3);
        assert_eq!(train.len() + hold.len(), 20);
        assert_eq!(hold.len(), 2);
        let (train2, hold2) = set.split_holdout(0.1, 3);
        assert_eq!(train.records[0].source_path, train2.records[0].source_path);
        assert_eq!(hold.records[0].source_path, hold2.records[0].source_path);
    }

    #[test]
    fn prepared_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let set = toy_set(4, 8, 8, 11);
        let manifest = write_prepared_dir(&set, dir.path()).unwrap();
        assert_eq!(manifest.records.len(), 4);
        assert!(dir.path().join("manifest.json").exists());
        let loaded = load_image_dir(dir.path(), ResolutionPolicy::Native).unwrap();
        assert_eq!(loaded.len(), 4);
        // 8-bit PNG quantization: within half a grey level.
        for (a, b) in loaded.records.iter().zip(&set.records) {
            let d = imaging::rms_distance(&a.pixels, &b.pixels);
            assert!(d <= 0.5 / 255.0 + 1e-6, "quantization drift {d}");
        }
    }
}
