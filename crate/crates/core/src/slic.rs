//! SLIC superpixels and per-superpixel features.
//!
//! Centers start on a regular grid, nudged to the lowest-gradient pixel in
//! their 3×3 neighbourhood, then alternate localized assignment (window of
//! ±S around each center, distance `d_lab + (m/S)·d_xy`) and mean updates.
//! A final pass keeps the largest 4-connected piece of every label and merges
//! stray pieces into their largest neighbouring superpixel.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::imagery::ImageRgb;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub target_count: usize,
    pub compactness: f64,
    pub max_iters: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            target_count: 200,
            compactness: 10.0,
            max_iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelLabeling {
    pub width: usize,
    pub height: usize,
    /// Row-major label per pixel, each in `0..count`.
    pub labels: Vec<usize>,
    pub count: usize,
}

impl SuperpixelLabeling {
    #[inline]
    pub fn label(&self, x: usize, y: usize) -> usize {
        self.labels[y * self.width + x]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.count];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

/// Row `i`: scaled mean CIELAB (`L/100`, `a/128`, `b/128`) then centroid
/// (`mean column / W`, `mean row / H`).
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelFeatures {
    pub count: usize,
    pub features: Vec<[f64; 5]>,
    pub pixel_counts: Vec<usize>,
}

// D65 reference white.
const XN: f64 = 0.95047;
const YN: f64 = 1.0;
const ZN: f64 = 1.08883;

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const D: f64 = 6.0 / 29.0;
    if t > D * D * D {
        t.cbrt()
    } else {
        t / (3.0 * D * D) + 4.0 / 29.0
    }
}

/// sRGB in `[0,1]` to CIELAB (D65), `L` in `[0,100]`.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let (fx, fy, fz) = (lab_f(x / XN), lab_f(y / YN), lab_f(z / ZN));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn to_lab(image: &ImageRgb) -> Vec<[f64; 3]> {
    image
        .data()
        .chunks_exact(3)
        .map(|p| srgb_to_lab([p[0], p[1], p[2]]))
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

pub fn slic_segment(image: &ImageRgb, params: &SlicParams) -> Result<SuperpixelLabeling> {
    let (w, h) = (image.width(), image.height());
    let target = params.target_count;
    if target == 0 || target > w * h {
        return Err(Error::InvalidArgument(format!(
            "superpixel target {target} for a {w}x{h} image"
        )));
    }
    if !(params.compactness >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "compactness {}",
            params.compactness
        )));
    }
    let lab = to_lab(image);
    let step = ((w * h) as f64 / target as f64).sqrt();

    let ny = ((h as f64 / step).round() as usize).clamp(1, h);
    let nx = ((target as f64 / ny as f64).round() as usize).clamp(1, w);
    let grad = |x: usize, y: usize| -> f64 {
        let at = |xx: usize, yy: usize| &lab[yy * w + xx];
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        dist2(at(xr, y), at(xl, y)) + dist2(at(x, yd), at(x, yu))
    };
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (i as f64 + 0.5) * w as f64 / nx as f64 - 0.5;
            let cy = (j as f64 + 0.5) * h as f64 / ny as f64 - 0.5;
            let (px, py) = (cx.round() as usize, cy.round() as usize);
            let mut best = (grad(px, py), px, py);
            for yy in py.saturating_sub(1)..=(py + 1).min(h - 1) {
                for xx in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                    let g = grad(xx, yy);
                    if g < best.0 {
                        best = (g, xx, yy);
                    }
                }
            }
            let (x, y) = if best.1 == px && best.2 == py {
                (cx, cy)
            } else {
                (best.1 as f64, best.2 as f64)
            };
            centers.push(Center {
                lab: lab[best.2 * w + best.1],
                x,
                y,
            });
        }
    }

    let mut labels: Vec<usize> = (0..w * h)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            (y * ny / h) * nx + x * nx / w
        })
        .collect();

    let spatial = params.compactness / step;
    for _ in 0..params.max_iters {
        let prev = labels.clone();
        par::for_each_chunk_mut(&mut labels, w, |y, row| {
            let yf = y as f64;
            let near: Vec<usize> = (0..centers.len())
                .filter(|&c| (centers[c].y - yf).abs() <= step)
                .collect();
            for (x, slot) in row.iter_mut().enumerate() {
                let xf = x as f64;
                let px = &lab[y * w + x];
                let mut best = f64::INFINITY;
                for &c in &near {
                    let ct = &centers[c];
                    if (ct.x - xf).abs() > step {
                        continue;
                    }
                    let dxy = ((ct.x - xf).powi(2) + (ct.y - yf).powi(2)).sqrt();
                    let d = dist2(&ct.lab, px).sqrt() + spatial * dxy;
                    if d < best {
                        best = d;
                        *slot = c;
                    }
                }
            }
        });

        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (p, &l) in labels.iter().enumerate() {
            let a = &mut acc[l];
            a[0] += lab[p][0];
            a[1] += lab[p][1];
            a[2] += lab[p][2];
            a[3] += (p % w) as f64;
            a[4] += (p / w) as f64;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                c.lab = [a[0] / a[5], a[1] / a[5], a[2] / a[5]];
                c.x = a[3] / a[5];
                c.y = a[4] / a[5];
            }
        }
        if labels == prev {
            break;
        }
    }

    Ok(enforce_connectivity(w, h, &labels))
}

/// Splits labels into 4-connected components, keeps the largest component of
/// each label, merges the rest into the adjacent superpixel with the most
/// pixels, and relabels densely in scan order.
fn enforce_connectivity(w: usize, h: usize, labels: &[usize]) -> SuperpixelLabeling {
    const NONE: usize = usize::MAX;
    let mut comp = vec![NONE; w * h];
    let mut comp_label = Vec::new();
    let mut comp_size = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if comp[start] != NONE {
            continue;
        }
        let id = comp_label.len();
        let l = labels[start];
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp[q] == NONE && labels[q] == l {
                    comp[q] = id;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        comp_label.push(l);
        comp_size.push(size);
    }

    let ncomp = comp_label.len();
    let max_label = labels.iter().copied().max().unwrap_or(0);
    let mut primary = vec![NONE; max_label + 1];
    for c in 0..ncomp {
        let l = comp_label[c];
        if primary[l] == NONE || comp_size[c] > comp_size[primary[l]] {
            primary[l] = c;
        }
    }
    // group[c]: superpixel (old label) the component ends up in.
    let mut group = vec![NONE; ncomp];
    let mut group_size = vec![0usize; max_label + 1];
    for (l, &c) in primary.iter().enumerate() {
        if c != NONE {
            group[c] = l;
            group_size[l] = comp_size[c];
        }
    }

    let mut neighbours: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ncomp];
    for y in 0..h {
        for x in 0..w {
            let a = comp[y * w + x];
            if x + 1 < w {
                let b = comp[y * w + x + 1];
                if a != b {
                    neighbours[a].insert(b);
                    neighbours[b].insert(a);
                }
            }
            if y + 1 < h {
                let b = comp[(y + 1) * w + x];
                if a != b {
                    neighbours[a].insert(b);
                    neighbours[b].insert(a);
                }
            }
        }
    }

    let mut pending: Vec<usize> = (0..ncomp).filter(|&c| group[c] == NONE).collect();
    while !pending.is_empty() {
        let mut still = Vec::new();
        for &c in &pending {
            let target = neighbours[c]
                .iter()
                .filter_map(|&n| (group[n] != NONE).then_some(group[n]))
                .max_by(|&a, &b| group_size[a].cmp(&group_size[b]).then(b.cmp(&a)));
            match target {
                Some(g) => {
                    group[c] = g;
                    group_size[g] += comp_size[c];
                }
                None => still.push(c),
            }
        }
        if still.len() == pending.len() {
            // Unreachable for a connected pixel grid; keep the pieces as-is.
            for &c in &still {
                group[c] = comp_label[c];
            }
            break;
        }
        pending = still;
    }

    let mut remap = vec![NONE; max_label + 1];
    let mut count = 0;
    let out = comp
        .iter()
        .map(|&c| {
            let g = group[c];
            if remap[g] == NONE {
                remap[g] = count;
                count += 1;
            }
            remap[g]
        })
        .collect();
    SuperpixelLabeling {
        width: w,
        height: h,
        labels: out,
        count,
    }
}

fn check_labeling(image: &ImageRgb, labeling: &SuperpixelLabeling) -> Result<Vec<usize>> {
    if (image.width(), image.height()) != (labeling.width, labeling.height)
        || labeling.labels.len() != labeling.width * labeling.height
    {
        return Err(Error::Shape("labeling does not match image".into()));
    }
    if labeling.labels.iter().any(|&l| l >= labeling.count) {
        return Err(Error::InvalidArgument("label outside 0..count".into()));
    }
    let sizes = labeling.sizes();
    if let Some(gap) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!("label {gap} has no pixels")));
    }
    Ok(sizes)
}

pub fn superpixel_features(
    image: &ImageRgb,
    labeling: &SuperpixelLabeling,
) -> Result<SuperpixelFeatures> {
    let sizes = check_labeling(image, labeling)?;
    let (w, h) = (labeling.width, labeling.height);
    let mut acc = vec![[0.0f64; 5]; labeling.count];
    for (p, (&l, px)) in labeling
        .labels
        .iter()
        .zip(image.data().chunks_exact(3))
        .enumerate()
    {
        let lab = srgb_to_lab([px[0], px[1], px[2]]);
        let a = &mut acc[l];
        a[0] += lab[0];
        a[1] += lab[1];
        a[2] += lab[2];
        a[3] += (p % w) as f64;
        a[4] += (p / w) as f64;
    }
    let features = acc
        .iter()
        .zip(&sizes)
        .map(|(a, &n)| {
            let n = n as f64;
            [
                a[0] / n / 100.0,
                a[1] / n / 128.0,
                a[2] / n / 128.0,
                a[3] / n / w as f64,
                a[4] / n / h as f64,
            ]
        })
        .collect();
    Ok(SuperpixelFeatures {
        count: labeling.count,
        features,
        pixel_counts: sizes,
    })
}

/// Unordered pairs `(i, j)`, `i < j`, of 4-adjacent superpixels.
pub fn adjacency_pairs(labeling: &SuperpixelLabeling) -> BTreeSet<(usize, usize)> {
    let (w, h) = (labeling.width, labeling.height);
    let mut pairs = BTreeSet::new();
    let mut add = |a: usize, b: usize| {
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    };
    for y in 0..h {
        for x in 0..w {
            let a = labeling.label(x, y);
            if x + 1 < w {
                add(a, labeling.label(x + 1, y));
            }
            if y + 1 < h {
                add(a, labeling.label(x, y + 1));
            }
        }
    }
    pairs
}
