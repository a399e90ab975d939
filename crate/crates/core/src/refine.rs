//! Superpixel-graph refinement of coarse saliency maps.
//!
//! Superpixels whose mean coarse saliency is clearly high or clearly low
//! become seeds. A kernel regression `g(x_i) = Σ_j α_j K(x_i, x_j)` with a
//! Gaussian kernel is fitted to the seeds with an RKHS-norm penalty and a
//! normalized-Laplacian smoothness penalty over adjacent superpixels:
//!
//! ```text
//! min_α (1/l)‖y − JKα‖² + θ1 αᵀKα + (θ2/N²) αᵀ K D^{-1/2} L D^{-1/2} K α
//! α* = (JK + θ1·l·I + (θ2·l/N²) D^{-1/2} L D^{-1/2} K)^{-1} y
//! ```
//!
//! `J` is the 0/1 diagonal seed selector, `L = D − A`, `A` the kernel-weighted
//! adjacency and `D` its degree matrix.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::imagery::{normalize_unit, same_dims, GrayMap, ImageRgb, RealMap};
use crate::slic::{self, SlicParams, SuperpixelFeatures, SuperpixelLabeling};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    pub seed_hi: f64,
    pub seed_lo: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// Multiplier on the three colour components before the kernel.
    pub color_weight: f64,
    /// Multiplier on the two centroid components before the kernel.
    pub position_weight: f64,
    pub slic: SlicParams,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            seed_hi: 0.7,
            seed_lo: 0.2,
            theta1: 1.0,
            theta2: 1e-6,
            color_weight: 4.0,
            position_weight: 1.0,
            slic: SlicParams::default(),
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.seed_lo < self.seed_hi) {
            return Err(Error::InvalidArgument(format!(
                "seed_lo {} must be below seed_hi {}",
                self.seed_lo, self.seed_hi
            )));
        }
        if !(self.theta1 > 0.0) || !(self.theta2 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "theta1 {} must be > 0 and theta2 {} >= 0",
                self.theta1, self.theta2
            )));
        }
        if !(self.color_weight > 0.0) || !(self.position_weight >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "feature weights {} / {}",
                self.color_weight, self.position_weight
            )));
        }
        Ok(())
    }

    /// Superpixel features as seen by the kernel. The unit kernel bandwidth is
    /// far too wide for `[0,1]`-scaled colour, so colour is stretched.
    pub fn kernel_features(&self, feats: &SuperpixelFeatures) -> Vec<[f64; 5]> {
        let (c, p) = (self.color_weight, self.position_weight);
        feats
            .features
            .iter()
            .map(|f| [f[0] * c, f[1] * c, f[2] * c, f[3] * p, f[4] * p])
            .collect()
    }
}

/// `exp(-½‖a − b‖²)`.
pub fn gaussian_kernel(a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-0.5 * d2).exp()
}

#[derive(Debug, Clone)]
pub struct RefineSystem {
    pub count: usize,
    pub gram: DMatrix<f64>,
    pub adj: DMatrix<f64>,
    /// Diagonal of `D`.
    pub degree: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    /// Diagonal of `J`.
    pub seeded: Vec<bool>,
    /// Seed targets; zero for unseeded superpixels.
    pub targets: DVector<f64>,
    pub theta1: f64,
    pub theta2: f64,
}

impl RefineSystem {
    /// Assembles the matrices from raw features, adjacency pairs and seed
    /// targets (`None` = unseeded).
    pub fn from_parts<F: AsRef<[f64]>>(
        features: &[F],
        pairs: &BTreeSet<(usize, usize)>,
        seeds: &[Option<f64>],
        theta1: f64,
        theta2: f64,
    ) -> Result<Self> {
        let n = features.len();
        if n == 0 || seeds.len() != n {
            return Err(Error::Shape(format!(
                "{n} feature rows vs {} seed entries",
                seeds.len()
            )));
        }
        if seeds.iter().all(Option::is_none) {
            return Err(Error::NoSeeds);
        }
        let gram = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                gaussian_kernel(features[i].as_ref(), features[j].as_ref())
            }
        });
        let mut adj = DMatrix::zeros(n, n);
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(Error::Shape(format!(
                    "pair ({i},{j}) outside {n} superpixels"
                )));
            }
            if i != j {
                adj[(i, j)] = gram[(i, j)];
                adj[(j, i)] = gram[(i, j)];
            }
        }
        let degree = DVector::from_fn(n, |i, _| adj.row(i).sum());
        let laplacian = DMatrix::from_diagonal(&degree) - &adj;
        Ok(Self {
            count: n,
            gram,
            adj,
            degree,
            laplacian,
            seeded: seeds.iter().map(Option::is_some).collect(),
            targets: DVector::from_iterator(n, seeds.iter().map(|s| s.unwrap_or(0.0))),
            theta1,
            theta2,
        })
    }

    pub fn seed_count(&self) -> usize {
        self.seeded.iter().filter(|&&s| s).count()
    }

    /// `D^{-1/2} L D^{-1/2}` with isolated superpixels (zero degree) dropped.
    pub fn normalized_laplacian(&self) -> DMatrix<f64> {
        let dinv: Vec<f64> = self
            .degree
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        DMatrix::from_fn(self.count, self.count, |i, j| {
            self.laplacian[(i, j)] * dinv[i] * dinv[j]
        })
    }

    /// Left-hand matrix of the closed-form solution.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        let n = self.count;
        let l = self.seed_count() as f64;
        let mut jk = self.gram.clone();
        for (i, &s) in self.seeded.iter().enumerate() {
            if !s {
                jk.row_mut(i).fill(0.0);
            }
        }
        let mut a = jk + DMatrix::identity(n, n) * (self.theta1 * l);
        if self.theta2 != 0.0 {
            let smooth = self.normalized_laplacian() * &self.gram;
            a += smooth * (self.theta2 * l / (n * n) as f64);
        }
        a
    }
}

/// Mean coarse saliency of each superpixel.
pub fn superpixel_means(coarse: &GrayMap, labeling: &SuperpixelLabeling) -> Result<Vec<f64>> {
    same_dims(
        (coarse.width(), coarse.height()),
        (labeling.width, labeling.height),
    )?;
    let mut sum = vec![0.0; labeling.count];
    let mut cnt = vec![0usize; labeling.count];
    for (&l, &v) in labeling.labels.iter().zip(coarse.data()) {
        sum[l] += v;
        cnt[l] += 1;
    }
    Ok(sum
        .iter()
        .zip(&cnt)
        .map(|(s, &c)| s / c.max(1) as f64)
        .collect())
}

fn threshold_seeds(means: &[f64], params: &RefineParams) -> Vec<Option<f64>> {
    means
        .iter()
        .map(|&s| {
            if s >= params.seed_hi {
                Some(1.0)
            } else if s <= params.seed_lo {
                Some(0.0)
            } else {
                None
            }
        })
        .collect()
}

/// Seeds only the highest- and lowest-scoring superpixels (first index wins
/// ties; a single superpixel is seeded high).
fn fallback_seeds(means: &[f64]) -> Vec<Option<f64>> {
    let mut seeds = vec![None; means.len()];
    let top = (0..means.len())
        .reduce(|a, b| if means[b] > means[a] { b } else { a })
        .expect("non-empty");
    seeds[top] = Some(1.0);
    if let Some(bottom) =
        (0..means.len())
            .filter(|&i| i != top)
            .reduce(|a, b| if means[b] < means[a] { b } else { a })
    {
        seeds[bottom] = Some(0.0);
    }
    seeds
}

/// Builds the system from a coarse map. Fails with [`Error::NoSeeds`] when no
/// superpixel passes either threshold.
pub fn build_system(
    feats: &SuperpixelFeatures,
    pairs: &BTreeSet<(usize, usize)>,
    coarse: &GrayMap,
    labeling: &SuperpixelLabeling,
    params: &RefineParams,
) -> Result<RefineSystem> {
    if feats.count != labeling.count {
        return Err(Error::Shape(format!(
            "{} feature rows vs {} superpixels",
            feats.count, labeling.count
        )));
    }
    let means = superpixel_means(coarse, labeling)?;
    RefineSystem::from_parts(
        &params.kernel_features(feats),
        pairs,
        &threshold_seeds(&means, params),
        params.theta1,
        params.theta2,
    )
}

/// [`build_system`], falling back to top-1/bottom-1 seeding on a degenerate
/// coarse map. The flag reports whether the fallback was taken.
pub fn build_system_with_fallback(
    feats: &SuperpixelFeatures,
    pairs: &BTreeSet<(usize, usize)>,
    coarse: &GrayMap,
    labeling: &SuperpixelLabeling,
    params: &RefineParams,
) -> Result<(RefineSystem, bool)> {
    match build_system(feats, pairs, coarse, labeling, params) {
        Err(Error::NoSeeds) => {
            let means = superpixel_means(coarse, labeling)?;
            let sys = RefineSystem::from_parts(
                &params.kernel_features(feats),
                pairs,
                &fallback_seeds(&means),
                params.theta1,
                params.theta2,
            )?;
            Ok((sys, true))
        }
        other => other.map(|s| (s, false)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSolution {
    pub coefficients: Vec<f64>,
    /// Raw `g(x_i) = (Kα)_i`.
    pub scores: Vec<f64>,
}

pub fn solve_alpha(sys: &RefineSystem) -> Result<RegressionSolution> {
    let a = sys.system_matrix();
    let lu = a.clone().lu();
    let condition = || {
        let u = lu.u();
        let d: Vec<f64> = u.diagonal().iter().map(|v| v.abs()).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    };
    let alpha = lu
        .solve(&sys.targets)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular {
            condition: condition(),
        })?;
    let scores = &sys.gram * &alpha;
    Ok(RegressionSolution {
        coefficients: alpha.iter().copied().collect(),
        scores: scores.iter().copied().collect(),
    })
}

/// Paints each superpixel with its score and min-max normalizes.
pub fn render_refined(sol: &RegressionSolution, labeling: &SuperpixelLabeling) -> Result<GrayMap> {
    if sol.scores.len() != labeling.count {
        return Err(Error::Shape(format!(
            "{} scores for {} superpixels",
            sol.scores.len(),
            labeling.count
        )));
    }
    let raw = labeling.labels.iter().map(|&l| sol.scores[l]).collect();
    normalize_unit(&RealMap::new(labeling.width, labeling.height, raw)?)
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub map: GrayMap,
    pub superpixels: usize,
    pub seeds: usize,
    pub used_fallback: bool,
}

/// SLIC → features → adjacency → seeded system → closed-form solve → render.
pub fn refine_map(
    image: &ImageRgb,
    coarse: &GrayMap,
    params: &RefineParams,
) -> Result<RefineOutcome> {
    params.validate()?;
    same_dims(
        (image.width(), image.height()),
        (coarse.width(), coarse.height()),
    )?;
    let labeling = slic::slic_segment(image, &params.slic)?;
    let feats = slic::superpixel_features(image, &labeling)?;
    let pairs = slic::adjacency_pairs(&labeling);
    let (sys, used_fallback) =
        build_system_with_fallback(&feats, &pairs, coarse, &labeling, params)?;
    let sol = solve_alpha(&sys)?;
    Ok(RefineOutcome {
        map: render_refined(&sol, &labeling)?,
        superpixels: labeling.count,
        seeds: sys.seed_count(),
        used_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn split_labeling() -> SuperpixelLabeling {
        SuperpixelLabeling {
            width: 4,
            height: 2,
            labels: vec![0, 0, 1, 1, 0, 0, 1, 1],
            count: 2,
        }
    }

    #[test]
    fn kernel_values() {
        assert_eq!(gaussian_kernel(&[0.3, 0.1], &[0.3, 0.1]), 1.0);
        let k = gaussian_kernel(&[0.0, 0.0], &[1.0, 1.0]);
        assert!((k - (-1f64).exp()).abs() < 1e-15);
        assert!((k - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn saturated_coarse_seeds_everything() {
        let l = split_labeling();
        let img = ImageRgb::filled(4, 2, [0.5; 3]);
        let f = slic::superpixel_features(&img, &l).unwrap();
        let sys = build_system(
            &f,
            &slic::adjacency_pairs(&l),
            &GrayMap::filled(4, 2, 1.0),
            &l,
            &RefineParams::default(),
        )
        .unwrap();
        assert_eq!(sys.seeded, vec![true, true]);
        assert_eq!(sys.targets.as_slice(), &[1.0, 1.0]);

        let half = GrayMap::filled(4, 2, 0.5);
        assert!(matches!(
            build_system(
                &f,
                &slic::adjacency_pairs(&l),
                &half,
                &l,
                &RefineParams::default()
            ),
            Err(Error::NoSeeds)
        ));
        let (sys, fell_back) = build_system_with_fallback(
            &f,
            &slic::adjacency_pairs(&l),
            &half,
            &l,
            &RefineParams::default(),
        )
        .unwrap();
        assert!(fell_back);
        assert_eq!(sys.seed_count(), 2);
    }

    #[test]
    fn one_by_one_system() {
        let sys =
            RefineSystem::from_parts(&[[0.0]], &BTreeSet::new(), &[Some(2.0)], 1.0, 1e-6).unwrap();
        let sol = solve_alpha(&sys).unwrap();
        assert!((sol.coefficients[0] - 1.0).abs() < 1e-15);
        assert!((sol.scores[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_targets_give_zero() {
        let feats = [[0.1, 0.2], [0.4, 0.2], [0.9, 0.5]];
        let pairs = BTreeSet::from([(0, 1), (1, 2)]);
        let sys =
            RefineSystem::from_parts(&feats, &pairs, &[Some(0.0), None, Some(0.0)], 1.0, 1e-6)
                .unwrap();
        let sol = solve_alpha(&sys).unwrap();
        assert!(sol
            .coefficients
            .iter()
            .chain(&sol.scores)
            .all(|&v| v == 0.0));
    }

    #[test]
    fn render_examples() {
        let l = split_labeling();
        let sol = |s: Vec<f64>| RegressionSolution {
            coefficients: vec![0.0; s.len()],
            scores: s,
        };
        let m = render_refined(&sol(vec![0.0, 1.0]), &l).unwrap();
        assert_eq!(m.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        let m = render_refined(&sol(vec![3.0, 3.0]), &l).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));
        let three = SuperpixelLabeling {
            width: 3,
            height: 1,
            labels: vec![0, 1, 2],
            count: 3,
        };
        let m = render_refined(&sol(vec![1.0, 2.0, 4.0]), &three).unwrap();
        assert_eq!(m.data(), &[0.0, 1.0 / 3.0, 1.0]);
        assert!(render_refined(&sol(vec![1.0]), &three).is_err());
    }

    #[test]
    fn isolated_superpixel_has_zero_normalized_row() {
        let feats = [[0.0], [0.5], [3.0]];
        let sys = RefineSystem::from_parts(
            &feats,
            &BTreeSet::from([(0, 1)]),
            &[Some(1.0), Some(0.0), None],
            1.0,
            1e-6,
        )
        .unwrap();
        let m = sys.normalized_laplacian();
        assert!(m.row(2).iter().all(|&v| v == 0.0));
        assert!(solve_alpha(&sys).is_ok());
    }

    fn random_system(feats: &[Vec<f64>], mask: &[bool], seeds: &[Option<f64>]) -> RefineSystem {
        let n = feats.len();
        let mut pairs = BTreeSet::new();
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                if mask[k % mask.len()] {
                    pairs.insert((i, j));
                }
                k += 1;
            }
        }
        let mut seeds = seeds.to_vec();
        seeds[0].get_or_insert(1.0);
        RefineSystem::from_parts(feats, &pairs, &seeds, 1.0, 1e-6).unwrap()
    }

    proptest! {
        #[test]
        fn laplacian_properties(
            feats in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 2..12),
            mask in proptest::collection::vec(any::<bool>(), 1..40),
            x in proptest::collection::vec(-1.0f64..1.0, 12),
        ) {
            let n = feats.len();
            let sys = random_system(&feats, &mask, &vec![None; n]);
            let l = &sys.laplacian;
            prop_assert_eq!(l.transpose(), l.clone());
            for i in 0..n {
                prop_assert!(l.row(i).sum().abs() < 1e-12);
                prop_assert!(sys.degree[i] >= 0.0);
                prop_assert_eq!(sys.gram[(i, i)], 1.0);
                prop_assert_eq!(sys.adj[(i, i)], 0.0);
            }
            prop_assert_eq!(sys.gram.transpose(), sys.gram.clone());
            let v = DVector::from_iterator(n, x.into_iter().take(n));
            prop_assert!((v.transpose() * l * &v)[0] >= -1e-9);
        }

        #[test]
        fn permutation_equivariance(
            feats in proptest::collection::vec(proptest::collection::vec(0.0f64..2.0, 4), 3..10),
            mask in proptest::collection::vec(any::<bool>(), 1..30),
            seeds in proptest::collection::vec(proptest::option::of(0.0f64..1.0), 10),
            rot in 1usize..9,
        ) {
            let n = feats.len();
            let sys = random_system(&feats, &mask, &seeds[..n]);
            let sol = solve_alpha(&sys).unwrap();
            // new index i holds old index perm[i]
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let mut inv = vec![0; n];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            let pf: Vec<Vec<f64>> = perm.iter().map(|&p| feats[p].clone()).collect();
            let mut pairs = BTreeSet::new();
            for i in 0..n {
                for j in i + 1..n {
                    if sys.adj[(i, j)] != 0.0 {
                        let (a, b) = (inv[i], inv[j]);
                        pairs.insert((a.min(b), a.max(b)));
                    }
                }
            }
            let ps: Vec<Option<f64>> = perm
                .iter()
                .map(|&p| sys.seeded[p].then_some(sys.targets[p]))
                .collect();
            let psys = RefineSystem::from_parts(&pf, &pairs, &ps, 1.0, 1e-6).unwrap();
            let psol = solve_alpha(&psys).unwrap();
            for i in 0..n {
                prop_assert!((psol.coefficients[i] - sol.coefficients[perm[i]]).abs() < 1e-9);
                prop_assert!((psol.scores[i] - sol.scores[perm[i]]).abs() < 1e-9);
            }
        }
    }
}
