//! Gradient-weighted class activation maps.
//!
//! Channel weights are spatial means of the class-score gradients; the map is
//! the ReLU of the weighted channel sum. Maps computed at several input scales
//! are upsampled to the target size, summed and min-max normalized.

use crate::error::{Error, Result};
use crate::imagery::{normalize_unit, FeatureStack, GradStack, GrayMap, ImageRgb, RealMap};
use crate::par;
use crate::toyscorer::{self, ToyScorer, NUM_CLASSES, WORKING_SIZE};

/// Input scales used for multi-scale maps.
pub const DEFAULT_SCALES: [f64; 3] = [0.5, 0.75, 1.0];

/// Per-channel importance weights for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronWeights {
    pub weights: Vec<f64>,
    pub class_index: usize,
}

pub fn neuron_weights(grads: &GradStack, class_index: usize) -> Result<NeuronWeights> {
    if grads.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient stack"));
    }
    let n = (grads.rows * grads.cols) as f64;
    let weights = (0..grads.channels)
        .map(|k| grads.plane(k).iter().sum::<f64>() / n)
        .collect();
    Ok(NeuronWeights {
        weights,
        class_index,
    })
}

/// `max(0, Σ_k w_k · f_k)` at feature-map resolution (`cols × rows`).
pub fn cam(acts: &FeatureStack, w: &NeuronWeights) -> Result<RealMap> {
    if acts.channels != w.weights.len() {
        return Err(Error::Shape(format!(
            "{} activation channels vs {} weights",
            acts.channels,
            w.weights.len()
        )));
    }
    let n = acts.rows * acts.cols;
    let mut sum = vec![0.0; n];
    for (k, &wk) in w.weights.iter().enumerate() {
        for (s, &f) in sum.iter_mut().zip(acts.plane(k)) {
            *s += wk * f;
        }
    }
    sum.iter_mut().for_each(|v| *v = v.max(0.0));
    RealMap::new(acts.cols, acts.rows, sum)
}

/// Resizes every map to `target_w × target_h`, sums, then normalizes.
pub fn multiscale_cam(maps: &[RealMap], target_w: usize, target_h: usize) -> Result<GrayMap> {
    if maps.is_empty() {
        return Err(Error::InvalidArgument(
            "multiscale_cam needs at least one map".into(),
        ));
    }
    let mut acc = RealMap::zeros(target_w, target_h);
    for m in maps {
        let r = m.resize_bilinear(target_w, target_h)?;
        acc.data.iter_mut().zip(&r.data).for_each(|(a, b)| *a += b);
    }
    normalize_unit(&acc)
}

/// A class activation map produced by running the toy scorer.
#[derive(Debug, Clone)]
pub struct ModelCam {
    pub map: GrayMap,
    pub class_index: usize,
    /// Softmax probability of `class_index` at the working resolution.
    pub class_score: f64,
}

/// Multi-scale map for `image` from `model`. The image is brought to the
/// working resolution, rescaled by each factor in `scales`, and the resulting
/// maps are fused at the original image size. Without an explicit class the
/// scorer's argmax is used.
pub fn model_cam(
    model: &ToyScorer,
    image: &ImageRgb,
    class_index: Option<usize>,
    scales: &[f64],
) -> Result<ModelCam> {
    if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("scales {scales:?}")));
    }
    if let Some(c) = class_index {
        if c >= NUM_CLASSES {
            return Err(Error::ClassRange(c));
        }
    }
    let working = image.resize_bilinear(WORKING_SIZE, WORKING_SIZE)?;
    let base = toyscorer::forward(model, &working)?;
    let class_index = class_index.unwrap_or_else(|| base.argmax());
    let class_score = base.probs[class_index];

    let maps = par::map(scales, |&s| -> Result<RealMap> {
        let side = ((WORKING_SIZE as f64 * s).round() as usize).max(3);
        let trace = if side == WORKING_SIZE {
            base.clone()
        } else {
            toyscorer::forward(model, &working.resize_bilinear(side, side)?)?
        };
        let (grads, _) = toyscorer::backprop_class(model, &trace, class_index)?;
        cam(&trace.features, &neuron_weights(&grads, class_index)?)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    Ok(ModelCam {
        map: multiscale_cam(&maps, image.width(), image.height())?,
        class_index,
        class_score,
    })
}
