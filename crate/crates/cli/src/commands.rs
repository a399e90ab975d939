use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use salrefine_core::imagery::{self, RealMap};
use salrefine_core::toyscorer::{self, SgdConfig, ToyScorer, TrainPlan, TrainSample};
use salrefine_core::{gradcam, metrics, refine, sum, synth};

use crate::config::Settings;
use crate::{Command, SynthKind, UsageError};

fn require_file(p: &Path) -> Result<()> {
    if !p.is_file() {
        return Err(UsageError(format!("input not found: {}", p.display())).into());
    }
    Ok(())
}

fn require_dir(p: &Path) -> Result<()> {
    if !p.is_dir() {
        return Err(UsageError(format!("directory not found: {}", p.display())).into());
    }
    Ok(())
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

pub fn dispatch(cmd: Command, s: &Settings) -> Result<()> {
    match cmd {
        Command::Cam {
            image,
            features,
            grads,
            model,
            class,
            out,
        } => cam(
            &image,
            &features,
            &grads,
            model.as_deref(),
            class.map(usize::from),
            &out,
            s,
        ),
        Command::Refine { image, coarse, out } => refine(&image, &coarse, &out, s),
        Command::Sumdemo {
            image,
            model,
            class,
            out_dir,
        } => sumdemo(&image, &model, class.map(usize::from), &out_dir, s),
        Command::Eval { maps, gt, out } => eval(&maps, &gt, &out, s),
        Command::Traintoy {
            dataset,
            epochs,
            out,
            channels,
            batch_size,
            max_steps,
            lr,
            no_mask,
        } => {
            let plan = TrainPlan {
                epochs,
                batch_size,
                max_steps,
                sgd: SgdConfig {
                    learning_rate: lr,
                    ..SgdConfig::default()
                },
                masking: (!no_mask).then_some(s.sum),
                shuffle_seed: s.seed,
            };
            traintoy(&dataset, channels, &plan, &out, s)
        }
        Command::Synth {
            kind,
            out_dir,
            count,
            size,
        } => synth(kind, &out_dir, count, size, s),
    }
}

fn cam(
    image: &Path,
    features: &[PathBuf],
    grads: &[PathBuf],
    model: Option<&Path>,
    class: Option<usize>,
    out: &Path,
    s: &Settings,
) -> Result<()> {
    require_file(image)?;
    for p in features
        .iter()
        .chain(grads)
        .map(PathBuf::as_path)
        .chain(model)
    {
        require_file(p)?;
    }
    let img = imagery::load_image(image)?;
    let map = match model {
        Some(m) => {
            let model = toyscorer::load_checkpoint(m)?;
            let c = gradcam::model_cam(&model, &img, class, &s.scales)?;
            info!("class {} score {:.4}", c.class_index, c.class_score);
            c.map
        }
        None => {
            if features.len() != grads.len() {
                return Err(UsageError(format!(
                    "{} feature tensors but {} gradient tensors",
                    features.len(),
                    grads.len()
                ))
                .into());
            }
            let maps = features
                .iter()
                .zip(grads)
                .map(|(f, g)| -> Result<RealMap> {
                    let acts = imagery::load_tensor(f)?;
                    let gs = imagery::load_tensor(g)?;
                    if acts.shape() != gs.shape() {
                        bail!(
                            "{} is {:?} but {} is {:?}",
                            f.display(),
                            acts.shape(),
                            g.display(),
                            gs.shape()
                        );
                    }
                    let w = gradcam::neuron_weights(&gs, class.unwrap_or(0))?;
                    Ok(gradcam::cam(&acts, &w)?)
                })
                .collect::<Result<Vec<_>>>()?;
            gradcam::multiscale_cam(&maps, img.width(), img.height())?
        }
    };
    imagery::save_graymap(&map, out)?;
    Ok(())
}

fn refine(image: &Path, coarse: &Path, out: &Path, s: &Settings) -> Result<()> {
    require_file(image)?;
    require_file(coarse)?;
    let img = imagery::load_image(image)?;
    let coarse = imagery::load_graymap(coarse)?;
    let r = refine::refine_map(&img, &coarse, &s.refine)?;
    if r.used_fallback {
        warn!(
            "no superpixel passed the seed thresholds ({} / {}); seeded the most and least salient instead",
            s.refine.seed_hi, s.refine.seed_lo
        );
    }
    info!("{} superpixels, {} seeds", r.superpixels, r.seeds);
    imagery::save_graymap(&r.map, out)?;
    Ok(())
}

fn sumdemo(
    image: &Path,
    model: &Path,
    class: Option<usize>,
    out_dir: &Path,
    s: &Settings,
) -> Result<()> {
    require_file(image)?;
    require_file(model)?;
    let img = imagery::load_image(image)?;
    let model = toyscorer::load_checkpoint(model)?;
    let run = sum::update_loop(&img, &model, &s.sum, class, &s.scales)?;
    create_dir(out_dir)?;
    let mut csv = String::from("iteration,class_score,active_area_fraction\n");
    for r in &run.records {
        imagery::save_graymap(
            &r.map,
            out_dir.join(format!("iter_{:03}.png", r.iteration_index)),
        )?;
        let _ = writeln!(
            csv,
            "{},{},{}",
            r.iteration_index,
            r.class_score,
            r.active_area_fraction()
        );
    }
    imagery::save_graymap(&run.final_map, out_dir.join("accumulated.png"))?;
    imagery::write_atomic(out_dir.join("summary.csv"), csv.as_bytes())?;
    Ok(())
}

fn json_twin(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn eval(maps: &Path, gt: &Path, out: &Path, s: &Settings) -> Result<()> {
    require_dir(maps)?;
    require_dir(gt)?;
    let report = metrics::batch_eval(maps, gt)?;
    for reason in &report.skipped {
        warn!("skipped {reason}");
    }
    if !report.skipped.is_empty() {
        warn!("{} file(s) skipped", report.skipped.len());
    }
    imagery::write_atomic(out, report.to_csv().as_bytes())?;
    if s.json {
        imagery::write_atomic(json_twin(out), report.to_json().as_bytes())?;
    }
    let m = &report.mean;
    println!(
        "{} pairs: max_fbeta {:.4} mae {:.4} s_measure {:.4}",
        report.rows.len(),
        m.max_fbeta,
        m.mae,
        m.s_measure
    );
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<Vec<TrainSample>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    let mut samples = Vec::new();
    for name in names {
        match synth::parse_count_label(&name) {
            Some(label) => samples.push(TrainSample {
                image: imagery::load_image(dir.join(&name))?,
                label,
            }),
            None => warn!("skipping {name}: expected <name>_count<0-4>.png"),
        }
    }
    if samples.is_empty() {
        bail!("no labelled images in {}", dir.display());
    }
    Ok(samples)
}

fn traintoy(
    dataset: &Path,
    channels: usize,
    plan: &TrainPlan,
    out: &Path,
    s: &Settings,
) -> Result<()> {
    require_dir(dataset)?;
    let samples = load_dataset(dataset)?;
    let init = ToyScorer::new(channels, s.seed)?;
    let (model, logs) = if plan.epochs == 0 {
        (init, Vec::new())
    } else {
        toyscorer::train(&init, &samples, plan)?
    };
    let mut csv = String::from("epoch,l_cls,l_mask,total\n");
    for l in &logs {
        if !l.loss.total.is_finite() {
            bail!("loss became non-finite in epoch {}", l.epoch);
        }
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            l.epoch, l.loss.cls, l.loss.mask, l.loss.total
        );
    }
    toyscorer::save_checkpoint(&model, out)?;
    imagery::write_atomic(loss_log_path(out), csv.as_bytes())?;
    if let (Some(first), Some(last)) = (logs.first(), logs.last()) {
        println!(
            "{} samples, {} epochs: total loss {:.4} -> {:.4}",
            samples.len(),
            logs.len(),
            first.loss.total,
            last.loss.total
        );
    }
    Ok(())
}

pub fn loss_log_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".loss.csv");
    PathBuf::from(p)
}

fn synth(kind: SynthKind, out_dir: &Path, count: usize, size: usize, s: &Settings) -> Result<()> {
    if size < 8 {
        return Err(UsageError(format!("size {size} is below the minimum of 8")).into());
    }
    match kind {
        SynthKind::Blobs => {
            synth::write_dataset(&synth::two_blob_dataset(count, size, s.seed), out_dir)?
        }
        SynthKind::Objects => {
            for sub in ["gt", "coarse"] {
                create_dir(&out_dir.join(sub))?;
            }
            let radius = (size / 24).max(1);
            for i in 0..count {
                let scene = synth::object_scene(size, s.seed.wrapping_add(i as u64));
                let name = format!("{i:04}.png");
                imagery::save_image(&scene.image, out_dir.join(&name))?;
                imagery::save_mask(&scene.mask, out_dir.join("gt").join(&name))?;
                imagery::save_graymap(
                    &synth::box_blur(&scene.mask, radius),
                    out_dir.join("coarse").join(&name),
                )?;
            }
        }
    }
    Ok(())
}
