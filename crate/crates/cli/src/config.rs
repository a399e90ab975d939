//! Run settings: built-in defaults, then an optional `key=value` file, then
//! command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use salrefine_core::gradcam::DEFAULT_SCALES;
use salrefine_core::refine::RefineParams;
use salrefine_core::sum::SumConfig;

use crate::UsageError;

/// Flags shared by every subcommand. Each one overrides the config file key
/// of the same name (dashes or underscores).
#[derive(Debug, Clone, Default, Args)]
pub struct Tunables {
    /// Mask sharpness of the sigmoid fusion.
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    /// Mask threshold of the sigmoid fusion.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Weight of the mask-mining loss.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Saliency updating iterations.
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Target superpixel count.
    #[arg(long, global = true)]
    pub superpixels: Option<usize>,
    #[arg(long, global = true)]
    pub compactness: Option<f64>,
    #[arg(long = "seed-hi", global = true)]
    pub seed_hi: Option<f64>,
    #[arg(long = "seed-lo", global = true)]
    pub seed_lo: Option<f64>,
    #[arg(long, global = true)]
    pub theta1: Option<f64>,
    #[arg(long, global = true)]
    pub theta2: Option<f64>,
    /// Multiplier on superpixel colour before the kernel.
    #[arg(long = "color-weight", global = true)]
    pub color_weight: Option<f64>,
    /// Multiplier on superpixel position before the kernel.
    #[arg(long = "position-weight", global = true)]
    pub position_weight: Option<f64>,
    /// Comma-separated input scales, e.g. 0.5,0.75,1.0.
    #[arg(long, global = true)]
    pub scales: Option<String>,
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Random seed for initialization, shuffling and synthesis.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write reports as JSON.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub sum: SumConfig,
    pub refine: RefineParams,
    pub scales: Vec<f64>,
    pub jobs: Option<usize>,
    pub seed: u64,
    pub json: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            sum: SumConfig::default(),
            refine: RefineParams::default(),
            scales: DEFAULT_SCALES.to_vec(),
            jobs: None,
            seed: 0,
            json: false,
        }
    }
}

fn usage(msg: String) -> anyhow::Error {
    UsageError(msg).into()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| usage(format!("invalid value for {key}: {v:?}")))
}

fn parse_scales(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse_num::<f64>("scales", s))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(usage(format!("invalid value for {key}: {v:?}"))),
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

impl Settings {
    fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "omega" => self.sum.omega = parse_num(key, v)?,
            "sigma" => self.sum.sigma = parse_num(key, v)?,
            "alpha" => self.sum.alpha = parse_num(key, v)?,
            "iterations" => self.sum.iterations = parse_num(key, v)?,
            "superpixels" => self.refine.slic.target_count = parse_num(key, v)?,
            "compactness" => self.refine.slic.compactness = parse_num(key, v)?,
            "seed_hi" => self.refine.seed_hi = parse_num(key, v)?,
            "seed_lo" => self.refine.seed_lo = parse_num(key, v)?,
            "theta1" => self.refine.theta1 = parse_num(key, v)?,
            "theta2" => self.refine.theta2 = parse_num(key, v)?,
            "color_weight" => self.refine.color_weight = parse_num(key, v)?,
            "position_weight" => self.refine.position_weight = parse_num(key, v)?,
            "scales" => self.scales = parse_scales(v)?,
            "jobs" => self.jobs = Some(parse_num(key, v)?),
            "seed" => self.seed = parse_num(key, v)?,
            "json" => self.json = parse_bool(key, v)?,
            _ => return Err(usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn resolve(config: Option<&Path>, flags: &Tunables) -> Result<Self> {
        let mut s = Settings::default();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            for (k, v) in parse_config(&text)? {
                s.apply(&k, &v)
                    .with_context(|| format!("in config {}", path.display()))?;
            }
        }
        let t = flags;
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag {
                    $field = v;
                }
            };
        }
        set!(s.sum.omega, t.omega);
        set!(s.sum.sigma, t.sigma);
        set!(s.sum.alpha, t.alpha);
        set!(s.sum.iterations, t.iterations);
        set!(s.refine.slic.target_count, t.superpixels);
        set!(s.refine.slic.compactness, t.compactness);
        set!(s.refine.seed_hi, t.seed_hi);
        set!(s.refine.seed_lo, t.seed_lo);
        set!(s.refine.theta1, t.theta1);
        set!(s.refine.theta2, t.theta2);
        set!(s.refine.color_weight, t.color_weight);
        set!(s.refine.position_weight, t.position_weight);
        set!(s.seed, t.seed);
        if let Some(v) = &t.scales {
            s.scales = parse_scales(v)?;
        }
        if t.jobs.is_some() {
            s.jobs = t.jobs;
        }
        s.json |= t.json;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.sum.validate().map_err(|e| usage(e.to_string()))?;
        self.refine.validate().map_err(|e| usage(e.to_string()))?;
        if self.refine.slic.target_count == 0 {
            return Err(usage("superpixels must be >= 1".into()));
        }
        if self.scales.is_empty() || self.scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(usage(format!(
                "scales must be positive, got {:?}",
                self.scales
            )));
        }
        if self.jobs == Some(0) {
            return Err(usage("jobs must be >= 1".into()));
        }
        Ok(())
    }
}
