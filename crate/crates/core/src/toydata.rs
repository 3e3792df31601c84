//! Seeded synthetic blob/ring images so the whole pipeline runs with zero
//! external data.

use ndarray::Array3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ImageRecord, ImageSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    /// Soft gaussian blobs on a dark background.
    Blobs,
    /// Bright annuli on a dark background.
    Rings,
    /// Alternating blobs and rings.
    Mixed,
}

/// Generate `n` seeded `h x w` images. Same arguments, same pixels.
pub fn generate(n: usize, size: (usize, usize), seed: u64, kind: ToyKind) -> ImageSet {
    let (h, w) = size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let ring = match kind {
            ToyKind::Blobs => false,
            ToyKind::Rings => true,
            ToyKind::Mixed => i % 2 == 1,
        };
        let pixels = draw_one(&mut rng, h, w, ring);
        records.push(ImageRecord {
            source_path: format!("toy_{i:06}"),
            pixels,
            crop_origin: (0, 0),
            flipped: false,
        });
    }
    ImageSet {
        records,
        resolution: size,
        manifest_seed: seed,
    }
}

fn draw_one(rng: &mut ChaCha8Rng, h: usize, w: usize, ring: bool) -> Array3<f32> {
    let background = 0.04 + rng.random_range(0.0..0.03);
    let mut img = Array3::<f32>::from_elem((h, w, 3), background as f32);

    let n_shapes = rng.random_range(1..=2usize);
    for _ in 0..n_shapes {
        let cy = rng.random_range(0.25..0.75) * h as f64;
        let cx = rng.random_range(0.25..0.75) * w as f64;
        let radius = rng.random_range(0.12..0.28) * h.min(w) as f64;
        // Greenish-brown tint, vaguely chlorophyll.
        let color = [
            rng.random_range(0.25..0.55),
            rng.random_range(0.55..0.95),
            rng.random_range(0.15..0.45),
        ];
        for y in 0..h {
            for x in 0..w {
                let dy = y as f64 - cy;
                let dx = x as f64 - cx;
                let r = (dy * dy + dx * dx).sqrt();
                let intensity = if ring {
                    let band = radius * 0.3;
                    (-((r - radius) / band).powi(2)).exp()
                } else {
                    (-(r / radius).powi(2)).exp()
                };
                if intensity > 1e-3 {
                    for c in 0..3 {
                        let v = img[[y, x, c]] as f64 + intensity * color[c];
                        img[[y, x, c]] = v.min(1.0) as f32;
                    }
                }
            }
        }
    }
    img
}
