//! A small differentiable subitizing classifier with hand-written backprop.
//!
//! Architecture: valid 3×3 convolution (stride 1, RGB in, `K` channels out),
//! ReLU, global average pooling, and a 5-way linear head with softmax. The
//! classes are salient-object counts 0, 1, 2, 3 and 4+.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gradcam;
use crate::imagery::{self, FeatureStack, GradStack, ImageRgb, Tensor3};
use crate::par;
use crate::sum::{self, SumConfig};

pub const NUM_CLASSES: usize = 5;
/// Side length images are resized to before scoring.
pub const WORKING_SIZE: usize = 64;
pub const DEFAULT_CHANNELS: usize = 8;
const KSIZE: usize = 3;
const KVOL: usize = 3 * KSIZE * KSIZE;
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyScorer {
    /// `K × 3 × 3 × 3`, indexed `[k][channel][dy][dx]`.
    pub conv_kernels: Vec<f64>,
    pub conv_bias: Vec<f64>,
    /// `5 × K`, row per class.
    pub head_weights: Vec<f64>,
    pub head_bias: Vec<f64>,
    pub rng_seed: u64,
}

/// Gradients laid out exactly like the corresponding [`ToyScorer`] fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub conv_kernels: Vec<f64>,
    pub conv_bias: Vec<f64>,
    pub head_weights: Vec<f64>,
    pub head_bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: ImageRgb,
    /// Post-ReLU convolution output.
    pub features: FeatureStack,
    pub pooled: Vec<f64>,
    pub logits: [f64; NUM_CLASSES],
    pub probs: [f64; NUM_CLASSES],
}

impl ForwardTrace {
    /// Lowest index among the maximal probabilities.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if self.probs[c] > self.probs[best] {
                best = c;
            }
        }
        best
    }
}

impl ToyScorer {
    /// Parameters drawn uniformly from `[-0.1, 0.1]`.
    pub fn new(channels: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument(
                "scorer needs at least one channel".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-0.1..=0.1)).collect() };
        Ok(Self {
            conv_kernels: draw(channels * KVOL),
            conv_bias: draw(channels),
            head_weights: draw(NUM_CLASSES * channels),
            head_bias: draw(NUM_CLASSES),
            rng_seed: seed,
        })
    }

    pub fn channels(&self) -> usize {
        self.conv_bias.len()
    }

    fn validate(&self) -> Result<()> {
        let k = self.channels();
        if k == 0
            || self.conv_kernels.len() != k * KVOL
            || self.head_weights.len() != NUM_CLASSES * k
            || self.head_bias.len() != NUM_CLASSES
        {
            return Err(Error::Shape("inconsistent scorer parameter blocks".into()));
        }
        if self
            .blocks()
            .iter()
            .any(|b| b.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("scorer parameters"));
        }
        Ok(())
    }

    pub fn blocks(&self) -> [&Vec<f64>; 4] {
        [
            &self.conv_kernels,
            &self.conv_bias,
            &self.head_weights,
            &self.head_bias,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.conv_kernels,
            &mut self.conv_bias,
            &mut self.head_weights,
            &mut self.head_bias,
        ]
    }

    pub fn param_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl ParamGrads {
    pub fn zeros_like(model: &ToyScorer) -> Self {
        let z = |v: &Vec<f64>| vec![0.0; v.len()];
        Self {
            conv_kernels: z(&model.conv_kernels),
            conv_bias: z(&model.conv_bias),
            head_weights: z(&model.head_weights),
            head_bias: z(&model.head_bias),
        }
    }

    pub fn blocks(&self) -> [&Vec<f64>; 4] {
        [
            &self.conv_kernels,
            &self.conv_bias,
            &self.head_weights,
            &self.head_bias,
        ]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.conv_kernels,
            &mut self.conv_bias,
            &mut self.head_weights,
            &mut self.head_bias,
        ]
    }

    fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
    }
}

fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CLASSES];
    let mut z = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
    out
}

/// Linear head on pooled features.
pub fn head(model: &ToyScorer, pooled: &[f64]) -> [f64; NUM_CLASSES] {
    let k = model.channels();
    let mut logits = [0.0; NUM_CLASSES];
    for (c, l) in logits.iter_mut().enumerate() {
        let row = &model.head_weights[c * k..(c + 1) * k];
        *l = model.head_bias[c] + row.iter().zip(pooled).map(|(w, p)| w * p).sum::<f64>();
    }
    logits
}

/// Global average pool of each channel.
pub fn pool(features: &FeatureStack) -> Vec<f64> {
    let n = (features.rows * features.cols) as f64;
    (0..features.channels)
        .map(|k| features.plane(k).iter().sum::<f64>() / n)
        .collect()
}

/// Runs the scorer. The network is fully convolutional up to the pooling
/// step, so any input of at least 3×3 is accepted.
pub fn forward(model: &ToyScorer, image: &ImageRgb) -> Result<ForwardTrace> {
    model.validate()?;
    let (w, h) = (image.width(), image.height());
    if w < KSIZE || h < KSIZE {
        return Err(Error::Shape(format!(
            "scorer input {w}x{h} is smaller than the {KSIZE}x{KSIZE} kernel"
        )));
    }
    let (rows, cols) = (h - KSIZE + 1, w - KSIZE + 1);
    let planes: Vec<_> = (0..3).map(|c| image.channel(c)).collect();
    let k = model.channels();
    let mut features = Tensor3::zeros(k, rows, cols);
    par::for_each_chunk_mut(&mut features.data, rows * cols, |ch, out| {
        let kern = &model.conv_kernels[ch * KVOL..(ch + 1) * KVOL];
        out.iter_mut().for_each(|v| *v = model.conv_bias[ch]);
        for (c, plane) in planes.iter().enumerate() {
            for dy in 0..KSIZE {
                for dx in 0..KSIZE {
                    let wgt = kern[c * 9 + dy * 3 + dx];
                    for i in 0..rows {
                        let src = &plane.data[(i + dy) * w + dx..(i + dy) * w + dx + cols];
                        let dst = &mut out[i * cols..(i + 1) * cols];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += wgt * s);
                    }
                }
            }
        }
        out.iter_mut().for_each(|v| *v = v.max(0.0));
    });
    let pooled = pool(&features);
    let logits = head(model, &pooled);
    let probs = softmax(&logits);
    Ok(ForwardTrace {
        input: image.clone(),
        features,
        pooled,
        logits,
        probs,
    })
}

/// Backpropagates an upstream gradient on the logits. Returns the gradient
/// with respect to the (post-ReLU) feature maps and all parameters.
pub fn backward(
    model: &ToyScorer,
    trace: &ForwardTrace,
    dlogits: &[f64; NUM_CLASSES],
) -> (GradStack, ParamGrads) {
    let k = model.channels();
    let (rows, cols) = (trace.features.rows, trace.features.cols);
    let n = (rows * cols) as f64;
    let mut g = ParamGrads::zeros_like(model);

    g.head_bias.copy_from_slice(dlogits);
    let mut dpooled = vec![0.0; k];
    for c in 0..NUM_CLASSES {
        for j in 0..k {
            g.head_weights[c * k + j] = dlogits[c] * trace.pooled[j];
            dpooled[j] += dlogits[c] * model.head_weights[c * k + j];
        }
    }

    let mut dfeat = Tensor3::zeros(k, rows, cols);
    for j in 0..k {
        dfeat
            .plane_mut(j)
            .iter_mut()
            .for_each(|v| *v = dpooled[j] / n);
    }

    let w = trace.input.width();
    let planes: Vec<_> = (0..3).map(|c| trace.input.channel(c)).collect();
    let per_channel = par::map_range(k, |j| {
        let act = trace.features.plane(j);
        let grad = dpooled[j] / n;
        let mut dk = [0.0; KVOL];
        let mut db = 0.0;
        if grad != 0.0 {
            for (c, plane) in planes.iter().enumerate() {
                for dy in 0..KSIZE {
                    for dx in 0..KSIZE {
                        let mut s = 0.0;
                        for i in 0..rows {
                            let src = &plane.data[(i + dy) * w + dx..(i + dy) * w + dx + cols];
                            let a = &act[i * cols..(i + 1) * cols];
                            s += src
                                .iter()
                                .zip(a)
                                .filter(|(_, &f)| f > 0.0)
                                .map(|(x, _)| x)
                                .sum::<f64>();
                        }
                        dk[c * 9 + dy * 3 + dx] = grad * s;
                    }
                }
            }
            db = grad * act.iter().filter(|&&f| f > 0.0).count() as f64;
        }
        (dk, db)
    });
    for (j, (dk, db)) in per_channel.into_iter().enumerate() {
        g.conv_kernels[j * KVOL..(j + 1) * KVOL].copy_from_slice(&dk);
        g.conv_bias[j] = db;
    }
    (dfeat, g)
}

/// Gradients of the pre-softmax logit of `class_index`.
pub fn backprop_class(
    model: &ToyScorer,
    trace: &ForwardTrace,
    class_index: usize,
) -> Result<(GradStack, ParamGrads)> {
    if class_index >= NUM_CLASSES {
        return Err(Error::ClassRange(class_index));
    }
    let mut d = [0.0; NUM_CLASSES];
    d[class_index] = 1.0;
    Ok(backward(model, trace, &d))
}

/// Mean negative log-likelihood; probabilities are floored at 1e-12.
pub fn cross_entropy_loss(probs: &[[f64; NUM_CLASSES]], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::Shape(format!(
            "{} probability rows vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (p, &l) in probs.iter().zip(labels) {
        if l >= NUM_CLASSES {
            return Err(Error::ClassRange(l));
        }
        total -= p[l].max(PROB_FLOOR).ln();
    }
    Ok(total / probs.len() as f64)
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: ImageRgb,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

/// Momentum buffers carried between steps.
#[derive(Debug, Clone)]
pub struct SgdState {
    velocity: ParamGrads,
}

impl SgdState {
    pub fn new(model: &ToyScorer) -> Self {
        Self {
            velocity: ParamGrads::zeros_like(model),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub cls: f64,
    pub mask: f64,
    pub total: f64,
}

/// Which parameter blocks a step may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Trainable {
    #[default]
    All,
    HeadOnly,
}

struct SampleGrad {
    grads: ParamGrads,
    cls: f64,
    mask: f64,
}

fn sample_grad(
    model: &ToyScorer,
    s: &TrainSample,
    batch: f64,
    masking: Option<&SumConfig>,
) -> Result<SampleGrad> {
    if s.label >= NUM_CLASSES {
        return Err(Error::ClassRange(s.label));
    }
    let trace = forward(model, &s.image)?;
    let p = trace.probs;
    let cls = -p[s.label].max(PROB_FLOOR).ln();
    let mut dl = [0.0; NUM_CLASSES];
    for (c, d) in dl.iter_mut().enumerate() {
        *d = (p[c] - if c == s.label { 1.0 } else { 0.0 }) / batch;
    }
    let (_, mut grads) = backward(model, &trace, &dl);

    let mut mask = 0.0;
    if let Some(cfg) = masking {
        // The mask is treated as a constant input: no gradient flows through
        // the activation map that produced it.
        let (fgrads, _) = backprop_class(model, &trace, s.label)?;
        let w = gradcam::neuron_weights(&fgrads, s.label)?;
        let raw = gradcam::cam(&trace.features, &w)?;
        let map = gradcam::multiscale_cam(&[raw], s.image.width(), s.image.height())?;
        let masked = sum::fuse_mask(&s.image, &map, cfg)?;
        let mt = forward(model, &masked)?;
        let q = mt.probs;
        mask = q[s.label];
        let mut dm = [0.0; NUM_CLASSES];
        for (c, d) in dm.iter_mut().enumerate() {
            let delta = if c == s.label { 1.0 } else { 0.0 };
            *d = cfg.alpha * q[s.label] * (delta - q[c]) / batch;
        }
        let (_, mg) = backward(model, &mt, &dm);
        grads.add_assign(&mg);
    }
    Ok(SampleGrad { grads, cls, mask })
}

/// Loss and summed gradient over a batch without touching the model.
pub fn batch_gradient(
    model: &ToyScorer,
    batch: &[TrainSample],
    masking: Option<&SumConfig>,
) -> Result<(StepLoss, ParamGrads)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty training batch".into()));
    }
    let n = batch.len() as f64;
    let per = par::map(batch, |s| sample_grad(model, s, n, masking));
    let mut grads = ParamGrads::zeros_like(model);
    let (mut cls, mut mask) = (0.0, 0.0);
    for r in per {
        let r = r?;
        grads.add_assign(&r.grads);
        cls += r.cls;
        mask += r.mask;
    }
    let cls = cls / n;
    let alpha = masking.map(|c| c.alpha).unwrap_or(0.0);
    let l_mask = if masking.is_some() { mask / n } else { 0.0 };
    Ok((
        StepLoss {
            cls,
            mask: l_mask,
            total: sum::total_loss(cls, l_mask, alpha),
        },
        grads,
    ))
}

/// One SGD step with momentum and weight decay
/// (`v ← μv + g + λp`, `p ← p − ηv`). With `masking` the objective is the
/// classification loss plus `alpha` times the masked-image class score;
/// otherwise classification loss alone. The reported loss is the value before
/// the update.
pub fn train_step(
    model: &ToyScorer,
    state: &mut SgdState,
    batch: &[TrainSample],
    sgd: &SgdConfig,
    masking: Option<&SumConfig>,
    trainable: Trainable,
) -> Result<(ToyScorer, StepLoss)> {
    if !(sgd.learning_rate >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate {}",
            sgd.learning_rate
        )));
    }
    let (loss, grads) = batch_gradient(model, batch, masking)?;
    if !grads.is_finite() || !loss.total.is_finite() {
        return Err(Error::NonFinite("training gradients"));
    }
    let mut next = model.clone();
    let frozen = |b: usize| trainable == Trainable::HeadOnly && b < 2;
    for (b, ((p, v), g)) in next
        .blocks_mut()
        .into_iter()
        .zip(state.velocity.blocks_mut())
        .zip(grads.blocks())
        .enumerate()
    {
        if frozen(b) {
            continue;
        }
        for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *v = sgd.momentum * *v + g + sgd.weight_decay * *p;
            *p -= sgd.learning_rate * *v;
        }
    }
    Ok((next, loss))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop early once this many steps have run.
    pub max_steps: Option<usize>,
    pub sgd: SgdConfig,
    /// Enables the mask-mining term with these settings.
    pub masking: Option<SumConfig>,
    pub shuffle_seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            max_steps: None,
            sgd: SgdConfig::default(),
            masking: Some(SumConfig::default()),
            shuffle_seed: 0,
        }
    }
}

/// Mean losses over the steps of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub loss: StepLoss,
}

/// Minibatch SGD over `samples`, reshuffled every epoch from `shuffle_seed`.
/// Images are resized to the working resolution once up front.
pub fn train(
    model: &ToyScorer,
    samples: &[TrainSample],
    plan: &TrainPlan,
) -> Result<(ToyScorer, Vec<EpochLog>)> {
    if samples.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    if plan.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let working = par::map(samples, |s| -> Result<TrainSample> {
        Ok(TrainSample {
            image: s.image.resize_bilinear(WORKING_SIZE, WORKING_SIZE)?,
            label: s.label,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.shuffle_seed);
    let mut model = model.clone();
    let mut state = SgdState::new(&model);
    let mut logs = Vec::new();
    let mut steps = 0;
    let mut order: Vec<usize> = (0..working.len()).collect();
    'epochs: for epoch in 1..=plan.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut acc = StepLoss {
            cls: 0.0,
            mask: 0.0,
            total: 0.0,
        };
        let mut n = 0;
        for chunk in order.chunks(plan.batch_size) {
            if plan.max_steps.is_some_and(|m| steps >= m) {
                if n > 0 {
                    logs.push(epoch_log(epoch, n, acc));
                }
                break 'epochs;
            }
            let batch: Vec<_> = chunk.iter().map(|&i| working[i].clone()).collect();
            let (next, loss) = train_step(
                &model,
                &mut state,
                &batch,
                &plan.sgd,
                plan.masking.as_ref(),
                Trainable::All,
            )?;
            model = next;
            acc.cls += loss.cls;
            acc.mask += loss.mask;
            acc.total += loss.total;
            n += 1;
            steps += 1;
        }
        logs.push(epoch_log(epoch, n, acc));
    }
    Ok((model, logs))
}

fn epoch_log(epoch: usize, steps: usize, acc: StepLoss) -> EpochLog {
    let n = steps as f64;
    EpochLog {
        epoch,
        steps,
        loss: StepLoss {
            cls: acc.cls / n,
            mask: acc.mask / n,
            total: acc.total / n,
        },
    }
}

// ---------------------------------------------------------------------------
// Checkpoints: concatenated tensor records plus a "<path>.manifest" sidecar
// listing "name shape offset" per block.

const BLOCK_NAMES: [&str; 4] = ["conv_kernels", "conv_bias", "head_weights", "head_bias"];

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn block_tensors(model: &ToyScorer) -> [(Tensor3, String); 4] {
    let k = model.channels();
    [
        (
            Tensor3 {
                channels: k,
                rows: 3,
                cols: KSIZE * KSIZE,
                data: model.conv_kernels.clone(),
            },
            format!("{k}x3x{KSIZE}x{KSIZE}"),
        ),
        (
            Tensor3 {
                channels: 1,
                rows: 1,
                cols: k,
                data: model.conv_bias.clone(),
            },
            format!("{k}"),
        ),
        (
            Tensor3 {
                channels: 1,
                rows: NUM_CLASSES,
                cols: k,
                data: model.head_weights.clone(),
            },
            format!("{NUM_CLASSES}x{k}"),
        ),
        (
            Tensor3 {
                channels: 1,
                rows: 1,
                cols: NUM_CLASSES,
                data: model.head_bias.clone(),
            },
            format!("{NUM_CLASSES}"),
        ),
    ]
}

/// Writes the checkpoint and its manifest. Parameters are stored as f32.
pub fn save_checkpoint(model: &ToyScorer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bin = Vec::new();
    let mut manifest = format!("# toyscorer rng_seed={}\n", model.rng_seed);
    for ((t, shape), name) in block_tensors(model).into_iter().zip(BLOCK_NAMES) {
        let _ = writeln!(manifest, "{name} {shape} {}", bin.len());
        bin.extend(imagery::encode_tensor(&t));
    }
    imagery::write_atomic(path, &bin)?;
    imagery::write_atomic(manifest_path(path), manifest.as_bytes())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ToyScorer> {
    let path = path.as_ref();
    let bin = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    let manifest = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let mut seed = 0;
    let mut blocks: [Option<Vec<f64>>; 4] = Default::default();
    for line in manifest.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest
                .split_whitespace()
                .find_map(|t| t.strip_prefix("rng_seed="))
            {
                seed = v
                    .parse()
                    .map_err(|_| Error::format(&mpath, format!("bad seed {v:?}")))?;
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<_> = line.split_whitespace().collect();
        let [name, _shape, offset] = parts[..] else {
            return Err(Error::format(&mpath, format!("bad manifest line {line:?}")));
        };
        let idx = BLOCK_NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::format(&mpath, format!("unknown block {name}")))?;
        let offset: usize = offset
            .parse()
            .map_err(|_| Error::format(&mpath, format!("bad offset {offset:?}")))?;
        if offset > bin.len() {
            return Err(Error::format(path, format!("offset {offset} past end")));
        }
        let (t, _) = imagery::decode_tensor(&bin[offset..], path)?;
        blocks[idx] = Some(t.data);
    }
    let [Some(ck), Some(cb), Some(hw), Some(hb)] = blocks else {
        return Err(Error::format(
            &mpath,
            "manifest is missing parameter blocks",
        ));
    };
    let model = ToyScorer {
        conv_kernels: ck,
        conv_bias: cb,
        head_weights: hw,
        head_bias: hb,
        rng_seed: seed,
    };
    model.validate()?;
    Ok(model)
}
