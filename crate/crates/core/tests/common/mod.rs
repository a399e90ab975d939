//! Independent reference implementations used as test oracles. Nothing here
//! calls into the code paths it is used to check.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salrefine_core::imagery::{BinaryMask, GrayMap, ImageRgb};
use salrefine_core::slic::SuperpixelLabeling;
use salrefine_core::toyscorer::{self, ToyScorer};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Metrics by pixel enumeration

pub struct BrutePr {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

pub fn brute_pr(map: &GrayMap, gt: &BinaryMask) -> BrutePr {
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let pos = gt.data().iter().filter(|&&g| g).count() as f64;
    for k in 0..256 {
        let t = k as f64 / 255.0;
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&v, &g) in map.data().iter().zip(gt.data()) {
            if v >= t {
                if g {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        precision.push(if tp + fp == 0.0 { 1.0 } else { tp / (tp + fp) });
        recall.push(tp / pos);
    }
    BrutePr { precision, recall }
}

pub fn brute_max_f(pr: &BrutePr, beta2: f64) -> f64 {
    let mut best = 0.0f64;
    for (p, r) in pr.precision.iter().zip(&pr.recall) {
        let f = if p + r == 0.0 {
            0.0
        } else {
            (1.0 + beta2) * p * r / (beta2 * p + r)
        };
        best = best.max(f);
    }
    best
}

pub fn brute_mae(map: &GrayMap, gt: &BinaryMask) -> f64 {
    let mut s = 0.0;
    for y in 0..map.height() {
        for x in 0..map.width() {
            let g = if gt.data()[y * gt.width() + x] {
                1.0
            } else {
                0.0
            };
            s += (map.get(x, y) - g).abs();
        }
    }
    s / (map.width() * map.height()) as f64
}

pub fn random_map_mask(seed: u64, w: usize, h: usize) -> (GrayMap, BinaryMask) {
    let mut r = rng(seed);
    // Mix continuous values with exact grid values to hit threshold edges.
    let map: Vec<f64> = (0..w * h)
        .map(|_| {
            if r.random::<bool>() {
                r.random_range(0..=255) as f64 / 255.0
            } else {
                r.random::<f64>()
            }
        })
        .collect();
    let mut gt: Vec<bool> = (0..w * h).map(|_| r.random::<f64>() < 0.4).collect();
    let fix = r.random_range(0..w * h);
    gt[fix] = true;
    (
        GrayMap::new(w, h, map).unwrap(),
        BinaryMask::new(w, h, gt).unwrap(),
    )
}

// ---------------------------------------------------------------------------
// Refinement objective, built from raw inputs with plain vectors.

pub type Mat = Vec<Vec<f64>>;

pub struct RawSystem {
    pub features: Vec<Vec<f64>>,
    pub pairs: BTreeSet<(usize, usize)>,
    pub seeds: Vec<Option<f64>>,
    pub theta1: f64,
    pub theta2: f64,
}

pub fn random_raw_system(seed: u64, theta2: f64, all_seeded: bool) -> RawSystem {
    let mut r = rng(seed);
    let n = r.random_range(2..=20);
    let features = (0..n)
        .map(|_| (0..5).map(|_| r.random_range(0.0..2.0)).collect())
        .collect();
    let mut pairs = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < 0.3 {
                pairs.insert((i, j));
            }
        }
    }
    let mut seeds: Vec<Option<f64>> = (0..n)
        .map(|_| {
            if all_seeded || r.random::<f64>() < 0.6 {
                Some(r.random::<f64>())
            } else {
                None
            }
        })
        .collect();
    if seeds.iter().all(Option::is_none) {
        seeds[0] = Some(1.0);
    }
    RawSystem {
        features,
        pairs,
        seeds,
        theta1: 1.0,
        theta2,
    }
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub struct Objective {
    pub n: usize,
    pub l: f64,
    pub k: Mat,
    /// D^{-1/2} L D^{-1/2}
    pub m: Mat,
    pub j: Vec<f64>,
    pub y: Vec<f64>,
    pub theta1: f64,
    pub theta2: f64,
}

impl Objective {
    pub fn new(sys: &RawSystem) -> Self {
        let n = sys.features.len();
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            for jj in 0..n {
                let d2: f64 = sys.features[i]
                    .iter()
                    .zip(&sys.features[jj])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                k[i][jj] = (-0.5 * d2).exp();
            }
        }
        let mut a = vec![vec![0.0; n]; n];
        for &(i, jj) in &sys.pairs {
            a[i][jj] = k[i][jj];
            a[jj][i] = k[i][jj];
        }
        let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for jj in 0..n {
                let lij = if i == jj { deg[i] } else { 0.0 } - a[i][jj];
                let s = |d: f64| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 };
                m[i][jj] = s(deg[i]) * lij * s(deg[jj]);
            }
        }
        let j: Vec<f64> = sys
            .seeds
            .iter()
            .map(|s| if s.is_some() { 1.0 } else { 0.0 })
            .collect();
        let y = sys.seeds.iter().map(|s| s.unwrap_or(0.0)).collect();
        Self {
            n,
            l: j.iter().sum(),
            k,
            m,
            j,
            y,
            theta1: sys.theta1,
            theta2: sys.theta2,
        }
    }

    /// (1/l)‖y − JKα‖² + θ1 αᵀKα + (θ2/N²) αᵀ K M K α
    pub fn value(&self, alpha: &[f64]) -> f64 {
        let ka = matvec(&self.k, alpha);
        let r: Vec<f64> = (0..self.n).map(|i| self.y[i] - self.j[i] * ka[i]).collect();
        let mka = matvec(&self.m, &ka);
        dot(&r, &r) / self.l
            + self.theta1 * dot(alpha, &ka)
            + self.theta2 / (self.n * self.n) as f64 * dot(&ka, &mka)
    }

    pub fn gradient(&self, alpha: &[f64]) -> Vec<f64> {
        let ka = matvec(&self.k, alpha);
        let jr: Vec<f64> = (0..self.n)
            .map(|i| self.j[i] * (self.y[i] - self.j[i] * ka[i]))
            .collect();
        let mka = matvec(&self.m, &ka);
        let c = self.theta2 / (self.n * self.n) as f64;
        let inner: Vec<f64> = (0..self.n)
            .map(|i| -2.0 / self.l * jr[i] + 2.0 * self.theta1 * alpha[i] + 2.0 * c * mka[i])
            .collect();
        matvec(&self.k, &inner)
    }

    /// Conjugate gradients on the quadratic objective, driven only by its
    /// gradient (Hessian-vector products are gradient differences).
    pub fn minimize(&self) -> Vec<f64> {
        let n = self.n;
        let zero = vec![0.0; n];
        let g0 = self.gradient(&zero);
        let hv = |v: &[f64]| -> Vec<f64> {
            let g = self.gradient(v);
            g.iter().zip(&g0).map(|(a, b)| a - b).collect()
        };
        let mut x = zero.clone();
        for _restart in 0..50 {
            let mut r: Vec<f64> = self.gradient(&x).iter().map(|v| -v).collect();
            let mut p = r.clone();
            let mut rr = dot(&r, &r);
            if rr.sqrt() < 1e-15 {
                break;
            }
            for _ in 0..4 * n {
                let hp = hv(&p);
                let php = dot(&p, &hp);
                if php <= 0.0 {
                    break;
                }
                let step = rr / php;
                x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += step * pi);
                r.iter_mut().zip(&hp).for_each(|(ri, hi)| *ri -= step * hi);
                let rr_new = dot(&r, &r);
                if rr_new.sqrt() < 1e-16 {
                    break;
                }
                p = r
                    .iter()
                    .zip(&p)
                    .map(|(ri, pi)| ri + rr_new / rr * pi)
                    .collect();
                rr = rr_new;
            }
        }
        x
    }
}

/// Solves an SPD system by a textbook Cholesky factorization.
pub fn cholesky_solve(a: &Mat, b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (z[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    d / nb.max(1e-300)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Central finite differences for the toy scorer.

pub const FD_STEP: f64 = 1e-4;

pub fn rel_elem(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn random_image(seed: u64, w: usize, h: usize) -> ImageRgb {
    let mut r = rng(seed);
    ImageRgb::new(w, h, (0..w * h * 3).map(|_| r.random::<f64>()).collect()).unwrap()
}

/// Larger-magnitude parameters than the default init so that the gradient
/// check sees non-trivial activations.
pub fn random_scorer(seed: u64, channels: usize) -> ToyScorer {
    let mut m = ToyScorer::new(channels, seed).unwrap();
    let mut r = rng(seed ^ 0xA5A5);
    for b in m.blocks_mut() {
        b.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
    }
    m
}

/// Max relative error of the parameter gradient of `objective` against
/// central differences.
pub fn check_param_grads(
    model: &ToyScorer,
    analytic: [&Vec<f64>; 4],
    objective: impl Fn(&ToyScorer) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (b, grads) in analytic.iter().enumerate() {
        for i in 0..grads.len() {
            let mut plus = model.clone();
            plus.blocks_mut()[b][i] += FD_STEP;
            let mut minus = model.clone();
            minus.blocks_mut()[b][i] -= FD_STEP;
            let num = (objective(&plus) - objective(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_elem(grads[i], num));
        }
    }
    worst
}

pub fn logit(model: &ToyScorer, image: &ImageRgb, class: usize) -> f64 {
    toyscorer::forward(model, image).unwrap().logits[class]
}

// ---------------------------------------------------------------------------
// Partition validity by flood fill.

pub fn is_connected_partition(l: &SuperpixelLabeling) -> Result<(), String> {
    let (w, h) = (l.width, l.height);
    if l.labels.len() != w * h {
        return Err("label count".into());
    }
    let mut seen_label = vec![false; l.count];
    let mut visited = vec![false; w * h];
    for start in 0..w * h {
        if visited[start] {
            continue;
        }
        let lab = l.labels[start];
        if lab >= l.count {
            return Err(format!("label {lab} >= count {}", l.count));
        }
        if seen_label[lab] {
            return Err(format!("label {lab} has more than one 4-connected piece"));
        }
        seen_label[lab] = true;
        let mut stack = vec![start];
        visited[start] = true;
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            let mut nb = Vec::new();
            if x > 0 {
                nb.push(p - 1);
            }
            if x + 1 < w {
                nb.push(p + 1);
            }
            if y > 0 {
                nb.push(p - w);
            }
            if y + 1 < h {
                nb.push(p + w);
            }
            for q in nb {
                if !visited[q] && l.labels[q] == lab {
                    visited[q] = true;
                    stack.push(q);
                }
            }
        }
    }
    if let Some(missing) = seen_label.iter().position(|s| !s) {
        return Err(format!("label {missing} is empty"));
    }
    Ok(())
}
