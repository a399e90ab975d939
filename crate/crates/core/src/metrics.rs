//! Saliency evaluation: PR curve over 256 thresholds, maximum F-beta, MAE and
//! the structure measure (S-measure).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::imagery::{self, same_dims, BinaryMask, GrayMap};
use crate::par;

pub const NUM_THRESHOLDS: usize = 256;
pub const DEFAULT_BETA2: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// One point per threshold `k/255`, `k = 0..=255`, in increasing order.
    pub points: Vec<PrPoint>,
}

#[inline]
fn threshold(k: usize) -> f64 {
    k as f64 / 255.0
}

/// Largest `k` with `k/255 <= v` (the map is positive at thresholds `0..=k`).
fn top_threshold_index(v: f64) -> usize {
    let mut k = (v * 255.0).floor().clamp(0.0, 255.0) as usize;
    while k < 255 && threshold(k + 1) <= v {
        k += 1;
    }
    while k > 0 && threshold(k) > v {
        k -= 1;
    }
    k
}

/// Precision is 1 where nothing is predicted positive.
pub fn pr_curve(map: &GrayMap, gt: &BinaryMask) -> Result<PrCurve> {
    same_dims((map.width(), map.height()), (gt.width(), gt.height()))?;
    let positives = gt.count();
    if positives == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let mut hist_fg = [0usize; NUM_THRESHOLDS];
    let mut hist_bg = [0usize; NUM_THRESHOLDS];
    for (&v, &g) in map.data().iter().zip(gt.data()) {
        let k = top_threshold_index(v);
        if g {
            hist_fg[k] += 1;
        } else {
            hist_bg[k] += 1;
        }
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = vec![
        PrPoint {
            threshold: 0.0,
            precision: 0.0,
            recall: 0.0
        };
        NUM_THRESHOLDS
    ];
    for k in (0..NUM_THRESHOLDS).rev() {
        tp += hist_fg[k];
        fp += hist_bg[k];
        points[k] = PrPoint {
            threshold: threshold(k),
            precision: if tp + fp == 0 {
                1.0
            } else {
                tp as f64 / (tp + fp) as f64
            },
            recall: tp as f64 / positives as f64,
        };
    }
    Ok(PrCurve { points })
}

pub fn fbeta(precision: f64, recall: f64, beta2: f64) -> f64 {
    let denom = beta2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / denom
    }
}

pub fn max_fbeta(curve: &PrCurve, beta2: f64) -> f64 {
    curve
        .points
        .iter()
        .map(|p| fbeta(p.precision, p.recall, beta2))
        .fold(0.0, f64::max)
}

pub fn mae(map: &GrayMap, gt: &BinaryMask) -> Result<f64> {
    same_dims((map.width(), map.height()), (gt.width(), gt.height()))?;
    let total: f64 = map
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&s, &g)| (s - if g { 1.0 } else { 0.0 }).abs())
        .sum();
    Ok(total / map.data().len() as f64)
}

// ---------------------------------------------------------------------------
// Structure measure. Constants and edge-case conventions follow the reference
// MATLAB implementation of the measure:
//   * S = 0.5·S_o + 0.5·S_r, floored at 0;
//   * all-background GT: S = 1 − mean(map); all-foreground GT: S = mean(map);
//   * object score 2x̄ / (x̄² + 1 + σ_x + eps), σ_x the sample std (n − 1);
//   * S_r splits at the rounded 1-based GT centroid into four quadrants
//     weighted by their share of the image area, each scored with the
//     single-window SSIM variant below;
//   * eps = f64::EPSILON in every denominator where the reference uses it.

const EPS: f64 = f64::EPSILON;

fn object_score(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + std + EPS)
}

fn s_object(map: &[f64], gt: &[bool]) -> f64 {
    let fg: Vec<f64> = map
        .iter()
        .zip(gt)
        .filter(|(_, &g)| g)
        .map(|(&v, _)| v)
        .collect();
    let bg: Vec<f64> = map
        .iter()
        .zip(gt)
        .filter(|(_, &g)| !g)
        .map(|(&v, _)| 1.0 - v)
        .collect();
    let u = fg.len() as f64 / gt.len() as f64;
    u * object_score(&fg) + (1.0 - u) * object_score(&bg)
}

fn region_ssim(map: &[f64], gt: &[f64]) -> f64 {
    let n = map.len() as f64;
    let x = map.iter().sum::<f64>() / n;
    let y = gt.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in map.iter().zip(gt) {
        sxx += (a - x) * (a - x);
        syy += (b - y) * (b - y);
        sxy += (a - x) * (b - y);
    }
    let d = n - 1.0 + EPS;
    let (sxx, syy, sxy) = (sxx / d, syy / d, sxy / d);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sxx + syy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// MATLAB-style rounding (half away from zero).
fn round_half_away(v: f64) -> usize {
    v.round() as usize
}

fn s_region(map: &GrayMap, gt: &BinaryMask) -> f64 {
    let (w, h) = (map.width(), map.height());
    let total = gt.count();
    // 1-based split column/row: the left/top block spans 1..=cx / 1..=cy.
    let (cx, cy) = if total == 0 {
        (
            round_half_away(w as f64 / 2.0),
            round_half_away(h as f64 / 2.0),
        )
    } else {
        let (mut sx, mut sy) = (0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                if gt.data()[y * w + x] {
                    sx += (x + 1) as f64;
                    sy += (y + 1) as f64;
                }
            }
        }
        (
            round_half_away(sx / total as f64),
            round_half_away(sy / total as f64),
        )
    };
    let area = (w * h) as f64;
    let blocks = [
        (0..cx, 0..cy),
        (cx..w, 0..cy),
        (0..cx, cy..h),
        (cx..w, cy..h),
    ];
    let mut score = 0.0;
    for (xs, ys) in blocks {
        let bw = xs.len();
        let bh = ys.len();
        if bw == 0 || bh == 0 {
            continue;
        }
        let mut m = Vec::with_capacity(bw * bh);
        let mut g = Vec::with_capacity(bw * bh);
        for y in ys.clone() {
            for x in xs.clone() {
                m.push(map.data()[y * w + x]);
                g.push(if gt.data()[y * w + x] { 1.0 } else { 0.0 });
            }
        }
        score += (bw * bh) as f64 / area * region_ssim(&m, &g);
    }
    score
}

pub fn s_measure(map: &GrayMap, gt: &BinaryMask) -> Result<f64> {
    same_dims((map.width(), map.height()), (gt.width(), gt.height()))?;
    let n = map.data().len() as f64;
    let fg_ratio = gt.count() as f64 / n;
    let mean = map.data().iter().sum::<f64>() / n;
    let q = if gt.count() == 0 {
        1.0 - mean
    } else if fg_ratio == 1.0 {
        mean
    } else {
        0.5 * s_object(map.data(), gt.data()) + 0.5 * s_region(map, gt)
    };
    Ok(q.clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Batch evaluation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub id: String,
    pub max_fbeta: f64,
    pub mae: f64,
    pub s_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean: EvalRow,
    /// Human-readable reasons for every file that was not evaluated.
    pub skipped: Vec<String>,
}

pub fn evaluate_pair(id: &str, map: &GrayMap, gt: &BinaryMask) -> Result<EvalRow> {
    let curve = pr_curve(map, gt)?;
    Ok(EvalRow {
        id: id.to_string(),
        max_fbeta: max_fbeta(&curve, DEFAULT_BETA2),
        mae: mae(map, gt)?,
        s_measure: s_measure(map, gt)?,
    })
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>, skipped: Vec<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dataset("no image pairs were evaluated".into()));
        }
        let n = rows.len() as f64;
        let mean = EvalRow {
            id: "MEAN".into(),
            max_fbeta: rows.iter().map(|r| r.max_fbeta).sum::<f64>() / n,
            mae: rows.iter().map(|r| r.mae).sum::<f64>() / n,
            s_measure: rows.iter().map(|r| r.s_measure).sum::<f64>() / n,
        };
        Ok(Self {
            rows,
            mean,
            skipped,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,max_fbeta,mae,s_measure\n");
        for r in self.rows.iter().chain(std::iter::once(&self.mean)) {
            let _ = writeln!(out, "{},{},{},{}", r.id, r.max_fbeta, r.mae, r.s_measure);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

const RASTER_EXTS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

fn raster_files(dir: &Path) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if !path.is_file() || !ext.is_some_and(|e| RASTER_EXTS.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

/// Evaluates every map in `map_dir` against the same-stem mask in `gt_dir`.
/// Rows are ordered by name. Unmatched or unreadable pairs are skipped and
/// listed in [`EvalReport::skipped`]; no matches at all is an error.
pub fn batch_eval(map_dir: impl AsRef<Path>, gt_dir: impl AsRef<Path>) -> Result<EvalReport> {
    let maps = raster_files(map_dir.as_ref())?;
    let gts = raster_files(gt_dir.as_ref())?;
    let mut skipped = Vec::new();
    for name in maps.keys().filter(|k| !gts.contains_key(*k)) {
        skipped.push(format!("{name}: no ground truth"));
    }
    for name in gts.keys().filter(|k| !maps.contains_key(*k)) {
        skipped.push(format!("{name}: no saliency map"));
    }
    let pairs: Vec<_> = maps
        .iter()
        .filter_map(|(k, p)| gts.get(k).map(|g| (k.clone(), p.clone(), g.clone())))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Dataset(format!(
            "no matching file names between {} and {}",
            map_dir.as_ref().display(),
            gt_dir.as_ref().display()
        )));
    }
    let results = par::map(&pairs, |(id, mp, gp)| -> Result<EvalRow> {
        let map = imagery::load_graymap(mp)?;
        let gt = imagery::load_mask(gp)?;
        evaluate_pair(id, &map, &gt)
    });
    let mut rows = Vec::new();
    for ((id, _, _), r) in pairs.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => skipped.push(format!("{id}: {e}")),
        }
    }
    EvalReport::from_rows(rows, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, bits: &[u8]) -> BinaryMask {
        BinaryMask::new(w, h, bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    fn gmap(w: usize, h: usize, v: &[f64]) -> GrayMap {
        GrayMap::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_map_curve() {
        let gt = mask(3, 2, &[1, 0, 0, 1, 1, 0]);
        let c = pr_curve(&gt.to_gray(), &gt).unwrap();
        assert_eq!(c.points.len(), 256);
        for p in &c.points[1..] {
            assert_eq!((p.precision, p.recall), (1.0, 1.0));
        }
        assert_eq!(max_fbeta(&c, DEFAULT_BETA2), 1.0);
    }

    #[test]
    fn all_ones_map() {
        let gt = mask(2, 2, &[1, 0, 0, 0]);
        let c = pr_curve(&GrayMap::filled(2, 2, 1.0), &gt).unwrap();
        assert!(c
            .points
            .iter()
            .all(|p| p.recall == 1.0 && p.precision == 0.25));
    }

    #[test]
    fn hand_enumerated_two_by_two() {
        let gt = mask(2, 2, &[1, 0, 0, 0]);
        let m = gmap(2, 2, &[0.9, 0.6, 0.1, 0.1]);
        let c = pr_curve(&m, &gt).unwrap();
        // 0.5 is not on the grid; 127/255 and 128/255 bracket it.
        for k in [127, 128] {
            assert_eq!(c.points[k].precision, 0.5);
            assert_eq!(c.points[k].recall, 1.0);
        }
        assert!(matches!(
            pr_curve(&m, &mask(2, 2, &[0, 0, 0, 0])),
            Err(Error::EmptyGroundTruth)
        ));
    }

    #[test]
    fn fbeta_examples() {
        let curve = |p: f64, r: f64| PrCurve {
            points: vec![PrPoint {
                threshold: 0.5,
                precision: p,
                recall: r,
            }],
        };
        assert!((max_fbeta(&curve(0.37, 0.37), 0.3) - 0.37).abs() < 1e-15);
        let f = max_fbeta(&curve(0.25, 1.0), 0.3);
        assert!((f - 0.325 / 1.075).abs() < 1e-15);
        assert!((f - 0.30233).abs() < 1e-5);
        assert_eq!(max_fbeta(&curve(0.0, 0.0), 0.3), 0.0);
    }

    #[test]
    fn mae_examples() {
        let gt = mask(2, 2, &[1, 0, 0, 0]);
        assert_eq!(mae(&gt.to_gray(), &gt).unwrap(), 0.0);
        assert_eq!(mae(&gt.complement().to_gray(), &gt).unwrap(), 1.0);
        assert_eq!(mae(&gmap(2, 2, &[1.0, 0.0, 0.5, 0.0]), &gt).unwrap(), 0.125);
        assert!(mae(&GrayMap::filled(1, 4, 0.0), &gt).is_err());
    }

    #[test]
    fn s_measure_self_and_inverse() {
        let gt = mask(4, 3, &[0, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0]);
        assert!((s_measure(&gt.to_gray(), &gt).unwrap() - 1.0).abs() < 1e-9);
        assert!(s_measure(&gt.complement().to_gray(), &gt).unwrap() < 0.5);
    }

    #[test]
    fn s_measure_degenerate_ground_truth() {
        let m = gmap(2, 1, &[0.2, 0.6]);
        assert!((s_measure(&m, &mask(2, 1, &[0, 0])).unwrap() - 0.6).abs() < 1e-15);
        assert!((s_measure(&m, &mask(2, 1, &[1, 1])).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn report_means_and_csv() {
        let rows = vec![
            EvalRow {
                id: "a".into(),
                max_fbeta: 1.0,
                mae: 0.0,
                s_measure: 1.0,
            },
            EvalRow {
                id: "b".into(),
                max_fbeta: 0.5,
                mae: 0.25,
                s_measure: 0.5,
            },
        ];
        let r = EvalReport::from_rows(rows, vec![]).unwrap();
        assert_eq!(r.mean.max_fbeta, 0.75);
        assert_eq!(r.mean.mae, 0.125);
        let csv = r.to_csv();
        assert!(csv.starts_with("id,max_fbeta,mae,s_measure\n"));
        assert!(csv.ends_with("MEAN,0.75,0.125,0.75\n"));
        assert!(r.to_json().contains("\"MEAN\""));
        assert!(EvalReport::from_rows(vec![], vec![]).is_err());
    }
}
