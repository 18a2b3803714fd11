#![allow(dead_code)]

use std::path::Path;

use cmi_explain::experiment::{NeighborhoodGeometry, Rect};
use cmi_explain::io::ImageGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Planted patch fixture: two 3×3 rectangles (n = 18) with a 9×9 footprint,
/// sampled at stride 9 so no target pixel is a feature of another target.
pub const STRIDE: usize = 9;
pub const PATCHES_PER_SIDE: usize = 30;
pub const SIDE: usize = STRIDE * PATCHES_PER_SIDE;
/// Planted pixel offsets and their weights.
pub const PLANTED: [((i64, i64), u32); 2] = [((-1, -3), 7), ((1, 3), 3)];

pub fn planted_geometry() -> NeighborhoodGeometry {
    NeighborhoodGeometry::new(
        Rect {
            row_offset: -1,
            col_offset: -4,
            height: 3,
            width: 3,
        },
        Rect {
            row_offset: -1,
            col_offset: 2,
            height: 3,
            width: 3,
        },
    )
    .unwrap()
}

/// 1-based feature indices of the planted offsets under [`planted_geometry`].
pub fn planted_indices() -> Vec<usize> {
    let offsets = planted_geometry().offsets();
    let mut idx: Vec<usize> = PLANTED
        .iter()
        .map(|(o, _)| offsets.iter().position(|p| p == o).unwrap() + 1)
        .collect();
    idx.sort_unstable();
    idx
}

pub enum Label {
    /// `0.7·x_a + 0.3·x_b`, exact on the 16-bit grid.
    Planted,
    /// Mean of the 18 neighborhood pixels.
    PatchMean,
}

fn is_target(r: usize, c: usize) -> bool {
    r % STRIDE == 4 && c % STRIDE == 4
}

/// 16-bit raster. Pixels are multiples of 180 so both the planted label
/// `(7·a + 3·b)/10` and the 18-pixel mean stay integers.
pub fn planted_raster(seed: u64, label: Label) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw: Vec<u32> = (0..SIDE * SIDE)
        .map(|_| 180 * rng.random_range(0..=364u32))
        .collect();
    let offsets = planted_geometry().offsets();
    for r in 0..SIDE {
        for c in 0..SIDE {
            if !is_target(r, c) {
                continue;
            }
            let at = |(dr, dc): (i64, i64)| raw[(r as i64 + dr) as usize * SIDE + (c as i64 + dc) as usize];
            raw[r * SIDE + c] = match label {
                Label::Planted => PLANTED.iter().map(|&(o, k)| k * at(o)).sum::<u32>() / 10,
                Label::PatchMean => {
                    let sum: u32 = offsets.iter().map(|&o| at(o)).sum();
                    sum / offsets.len() as u32
                }
            };
        }
    }
    raw
}

pub fn to_image(raw: &[u32]) -> ImageGrid {
    ImageGrid::new(SIDE, SIDE, raw.iter().map(|&v| f64::from(v) / 65535.0).collect()).unwrap()
}

/// Planted image with Gaussian noise of std `sigma` on every target pixel.
pub fn noisy_planted_image(seed: u64, sigma: f64) -> ImageGrid {
    let raw = planted_raster(seed, Label::Planted);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let pixels = raw
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let p = f64::from(v) / 65535.0;
            if is_target(k / SIDE, k % SIDE) {
                (p + noise.sample(&mut noise_rng)).clamp(0.0, 1.0)
            } else {
                p
            }
        })
        .collect();
    ImageGrid::new(SIDE, SIDE, pixels).unwrap()
}

/// Binary 16-bit PGM.
pub fn write_pgm16(raw: &[u32], path: &Path) {
    let mut bytes = format!("P5\n{SIDE} {SIDE}\n65535\n").into_bytes();
    for &v in raw {
        bytes.extend((v as u16).to_be_bytes());
    }
    std::fs::write(path, bytes).unwrap();
}

pub fn planted_config_toml(image: &str, method: &str) -> String {
    format!(
        "image = \"{image}\"\ns = 2\nstride = {STRIDE}\nmethod = \"{method}\"\nseed = 7\n\n\
         [[geometry.rectangles]]\nrow_offset = -1\ncol_offset = -4\nheight = 3\nwidth = 3\n\n\
         [[geometry.rectangles]]\nrow_offset = -1\ncol_offset = 2\nheight = 3\nwidth = 3\n"
    )
}
