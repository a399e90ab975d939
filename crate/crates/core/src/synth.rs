//! Deterministic synthetic scenes: blob-counting images for the toy scorer
//! and simple object/background images for refinement checks.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imagery::{self, BinaryMask, GrayMap, ImageRgb};
use crate::toyscorer::NUM_CLASSES;

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub image: ImageRgb,
    pub mask: BinaryMask,
    pub count: usize,
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// `count` non-overlapping discs on a dark, lightly noisy background.
pub fn blob_scene(size: usize, count: usize, seed: u64) -> SynthSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg = [
        rng.random_range(0.02..0.12),
        rng.random_range(0.02..0.12),
        rng.random_range(0.02..0.12),
    ];
    let s = size as f64;
    let mut discs: Vec<(f64, f64, f64, [f64; 3])> = Vec::new();
    let mut attempts = 0;
    while discs.len() < count && attempts < 10_000 {
        attempts += 1;
        let r = rng.random_range(0.11..0.17) * s;
        let cx = rng.random_range(r + 1.0..s - r - 1.0);
        let cy = rng.random_range(r + 1.0..s - r - 1.0);
        let clear = discs
            .iter()
            .all(|&(x, y, rr, _)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() > r + rr + 3.0);
        if clear {
            let color = hsv_to_rgb(
                rng.random::<f64>(),
                rng.random_range(0.5..0.9),
                rng.random_range(0.6..1.0),
            );
            discs.push((cx, cy, r, color));
        }
    }
    let mut image = ImageRgb::filled(size, size, bg);
    let mut mask = vec![false; size * size];
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut c = bg;
            for &(cx, cy, r, color) in &discs {
                if (px - cx).powi(2) + (py - cy).powi(2) <= r * r {
                    c = color;
                    mask[y * size + x] = true;
                }
            }
            let noise = [(); 3].map(|_| rng.random_range(-0.03..0.03));
            image.set_pixel(x, y, [c[0] + noise[0], c[1] + noise[1], c[2] + noise[2]]);
        }
    }
    SynthSample {
        image,
        mask: BinaryMask::new(size, size, mask).expect("sized"),
        count: discs.len(),
    }
}

/// Images with 0, 1 or 2 blobs, cycling through the counts.
pub fn two_blob_dataset(n: usize, size: usize, seed: u64) -> Vec<SynthSample> {
    (0..n)
        .map(|i| {
            blob_scene(
                size,
                i % 3,
                seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
            )
        })
        .collect()
}

/// One object (square or disc) on a contrasting background.
pub fn object_scene(size: usize, seed: u64) -> SynthSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hue = rng.random::<f64>();
    let fg = hsv_to_rgb(hue, rng.random_range(0.6..0.9), rng.random_range(0.7..1.0));
    let bg = hsv_to_rgb(
        hue + rng.random_range(0.35..0.65),
        rng.random_range(0.4..0.8),
        rng.random_range(0.3..0.6),
    );
    let s = size as f64;
    let half = rng.random_range(0.15..0.25) * s;
    let cx = rng.random_range(half + 2.0..s - half - 2.0);
    let cy = rng.random_range(half + 2.0..s - half - 2.0);
    let square = rng.random::<bool>();
    let mut image = ImageRgb::filled(size, size, bg);
    let mut mask = vec![false; size * size];
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let inside = if square {
                dx.abs() <= half && dy.abs() <= half
            } else {
                dx * dx + dy * dy <= half * half
            };
            let c = if inside { fg } else { bg };
            mask[y * size + x] = inside;
            let noise = [(); 3].map(|_| rng.random_range(-0.02..0.02));
            image.set_pixel(x, y, [c[0] + noise[0], c[1] + noise[1], c[2] + noise[2]]);
        }
    }
    SynthSample {
        image,
        mask: BinaryMask::new(size, size, mask).expect("sized"),
        count: 1,
    }
}

/// Mean over a `(2r+1)²` window, clipped at the borders.
pub fn box_blur(mask: &BinaryMask, radius: usize) -> GrayMap {
    let (w, h) = (mask.width(), mask.height());
    // Summed-area table.
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + x + 1] = mask.data()[y * w + x] as u32
                + sat[y * (w + 1) + x + 1]
                + sat[(y + 1) * (w + 1) + x]
                - sat[y * (w + 1) + x];
        }
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(radius), (x + radius + 1).min(w));
            let (y0, y1) = (y.saturating_sub(radius), (y + radius + 1).min(h));
            let s = sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0]
                - sat[y0 * (w + 1) + x1]
                - sat[y1 * (w + 1) + x0];
            out.push(s as f64 / ((x1 - x0) * (y1 - y0)) as f64);
        }
    }
    GrayMap::new(w, h, out).expect("unit values")
}

/// Parses the class from names like `0007_count2.png`.
pub fn parse_count_label(file_name: &str) -> Option<usize> {
    let stem = file_name.strip_suffix(".png")?;
    let (_, tail) = stem.rsplit_once("_count")?;
    let k: usize = tail.parse().ok()?;
    (tail.len() == 1 && k < NUM_CLASSES).then_some(k)
}

/// Writes `NNNN_count{k}.png` images to `dir` and masks to `dir/gt/`.
pub fn write_dataset(samples: &[SynthSample], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let gt = dir.join("gt");
    std::fs::create_dir_all(&gt).map_err(|e| Error::io(&gt, e))?;
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{i:04}_count{}.png", s.count.min(NUM_CLASSES - 1));
        imagery::save_image(&s.image, dir.join(&name))?;
        imagery::save_mask(&s.mask, gt.join(&name))?;
    }
    Ok(())
}
