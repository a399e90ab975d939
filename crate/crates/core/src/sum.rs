//! Saliency updating: mask out what is already salient, look again, and
//! accumulate what the scorer finds.

use crate::error::{Error, Result};
use crate::gradcam::{self, DEFAULT_SCALES};
use crate::imagery::{normalize_unit, same_dims, GrayMap, ImageRgb};
use crate::toyscorer::{self, ToyScorer, NUM_CLASSES, WORKING_SIZE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumConfig {
    /// Sigmoid sharpness.
    pub omega: f64,
    /// Saliency threshold in `(0, 1)`.
    pub sigma: f64,
    /// Weight of the mask-mining term in the total loss.
    pub alpha: f64,
    pub iterations: usize,
}

impl Default for SumConfig {
    fn default() -> Self {
        Self {
            omega: 50.0,
            sigma: 0.5,
            alpha: 1.0,
            iterations: 10,
        }
    }
}

impl SumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "omega {} must be > 0",
                self.omega
            )));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma {} must lie in (0,1)",
                self.sigma
            )));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha {} must be >= 0",
                self.alpha
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `I0 − sigmoid(ω·(M − σ)) ⊙ I0`, one mask factor shared by all channels.
pub fn fuse_mask(original: &ImageRgb, map: &GrayMap, cfg: &SumConfig) -> Result<ImageRgb> {
    same_dims(
        (original.width(), original.height()),
        (map.width(), map.height()),
    )?;
    let data = original
        .data()
        .chunks_exact(3)
        .zip(map.data())
        .flat_map(|(px, &m)| {
            let f = sigmoid(cfg.omega * (m - cfg.sigma));
            [px[0] - f * px[0], px[1] - f * px[1], px[2] - f * px[2]]
        })
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    ImageRgb::new(original.width(), original.height(), data)
}

/// Mean class score over masked samples.
pub fn mask_mining_loss(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument(
            "mask mining loss over no samples".into(),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("mask mining scores"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn total_loss(l_cls: f64, l_mask: f64, alpha: f64) -> f64 {
    l_cls + alpha * l_mask
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration_index: usize,
    /// Map found at this iteration.
    pub map: GrayMap,
    /// Input the map was computed on (the original image at iteration 1).
    pub masked_image: ImageRgb,
    /// Softmax probability of the tracked class on `masked_image`.
    pub class_score: f64,
    /// Elementwise maximum of all maps up to and including this iteration.
    pub accumulated: GrayMap,
}

impl IterationRecord {
    /// Fraction of pixels where the accumulated map exceeds 0.5.
    pub fn active_area_fraction(&self) -> f64 {
        self.accumulated.area_above(0.5)
    }
}

#[derive(Debug, Clone)]
pub struct SumRun {
    pub class_index: usize,
    pub records: Vec<IterationRecord>,
    /// Normalized accumulated map after the last iteration.
    pub final_map: GrayMap,
}

/// Iterative updating loop. Iteration 1 computes the multi-scale activation
/// map of `original`; each later iteration masks `original` with the running
/// elementwise maximum of the maps so far and computes a fresh map on the
/// masked image. The class is fixed at iteration 1 (argmax when `None`).
pub fn update_loop(
    original: &ImageRgb,
    model: &ToyScorer,
    cfg: &SumConfig,
    class_index: Option<usize>,
    scales: &[f64],
) -> Result<SumRun> {
    cfg.validate()?;
    if let Some(c) = class_index {
        if c >= NUM_CLASSES {
            return Err(Error::ClassRange(c));
        }
    }
    let mut records: Vec<IterationRecord> = Vec::with_capacity(cfg.iterations);
    let mut class = class_index;
    for i in 1..=cfg.iterations {
        let input = match records.last() {
            None => original.clone(),
            Some(prev) => fuse_mask(original, &prev.accumulated, cfg)?,
        };
        let cam = gradcam::model_cam(model, &input, class, scales)?;
        class = Some(cam.class_index);
        let accumulated = match records.last() {
            None => cam.map.clone(),
            Some(prev) => prev.accumulated.max_with(&cam.map)?,
        };
        records.push(IterationRecord {
            iteration_index: i,
            map: cam.map,
            masked_image: input,
            class_score: cam.class_score,
            accumulated,
        });
    }
    let last = records.last().expect("at least one iteration");
    let final_map = normalize_unit(&last.accumulated.to_real())?;
    Ok(SumRun {
        class_index: class.expect("class fixed at iteration 1"),
        records,
        final_map,
    })
}

/// Convenience wrapper with the default scales.
pub fn update_loop_default(
    original: &ImageRgb,
    model: &ToyScorer,
    cfg: &SumConfig,
) -> Result<SumRun> {
    update_loop(original, model, cfg, None, &DEFAULT_SCALES)
}

/// Class score of `image` under `model` at the working resolution.
pub fn class_score(model: &ToyScorer, image: &ImageRgb, class_index: usize) -> Result<f64> {
    if class_index >= NUM_CLASSES {
        return Err(Error::ClassRange(class_index));
    }
    let working = image.resize_bilinear(WORKING_SIZE, WORKING_SIZE)?;
    Ok(toyscorer::forward(model, &working)?.probs[class_index])
}
