//! File-backed pipelines: simulate, train, evaluate, benchmark, predict.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use wsmil_core::trainer::{AnnotatedBag, TrainOutcome};
use wsmil_core::{
    evaluate, feasible_grid, simulator, split_for, Bag, EvalReport, FrameworkConfig, Mlp,
    ScoredSlide, Split, TrainSettings, Trainer,
};

use crate::checkpoint::Checkpoint;
use crate::config::{RunConfig, SimulateConfig};
use crate::features::{GroundTruth, SlideFeatures};
use crate::heatmap::PatchScore;
use crate::manifest::{Manifest, ManifestRecord};
use crate::{Error, Result};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Generates a cohort into `out_dir`: `manifest.jsonl` plus one CSV per
/// slide under `features/`.
pub fn simulate(cfg: &SimulateConfig, out_dir: &Path) -> Result<Manifest> {
    let cohort = simulator::generate(&cfg.simulator)?;
    let feat_dir = out_dir.join("features");
    create_dir(&feat_dir)?;
    let records: Vec<ManifestRecord> = cohort
        .slides
        .par_iter()
        .map(|s| {
            let rel = PathBuf::from("features").join(format!("{}.csv", s.slide_id));
            let file = SlideFeatures {
                patch_ids: (0..s.gt.len())
                    .map(|j| format!("{}_p{j:04}", s.slide_id))
                    .collect(),
                coords: s.coords.clone(),
                features: s.features.clone(),
                gt: Some(s.gt.clone()),
            };
            file.write(&out_dir.join(&rel), cfg.export_gt)?;
            Ok(ManifestRecord {
                slide_id: s.slide_id.clone(),
                label: s.label,
                n_patches: s.gt.len(),
                feature_file: rel,
            })
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        base_dir: out_dir.to_path_buf(),
        records,
    };
    manifest.write(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

/// An annotated held-out slide.
#[derive(Debug, Clone)]
pub struct HeldOutSlide {
    pub slide_id: String,
    pub features: SlideFeatures,
}

/// Manifest slides loaded and partitioned by the seeded slide-level split.
/// Training bags are read with the `gt` column ignored.
#[derive(Debug, Clone)]
pub struct SplitCohort {
    pub train: Vec<Bag>,
    pub validation: Vec<HeldOutSlide>,
    pub test: Vec<HeldOutSlide>,
}

impl SplitCohort {
    pub fn load(manifest: &Manifest, settings: &TrainSettings) -> Result<Self> {
        let loaded: Vec<(Split, &ManifestRecord, SlideFeatures)> = manifest
            .records
            .par_iter()
            .map(|rec| {
                let path = manifest.feature_path(rec);
                let split = split_for(
                    &rec.slide_id,
                    settings.seed,
                    settings.validation_fraction,
                    settings.test_fraction,
                );
                let mode = if split == Split::Train {
                    GroundTruth::Ignore
                } else {
                    GroundTruth::IfPresent
                };
                let f = SlideFeatures::read(&path, mode)?;
                if f.len() != rec.n_patches {
                    return Err(Error::format(
                        &path,
                        format!(
                            "manifest says {} patches for {}, file has {}",
                            rec.n_patches,
                            rec.slide_id,
                            f.len()
                        ),
                    ));
                }
                Ok((split, rec, f))
            })
            .collect::<Result<_>>()?;
        let mut cohort = SplitCohort {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        };
        for (split, rec, f) in loaded {
            match split {
                Split::Train => cohort.train.push(Bag {
                    slide_id: rec.slide_id.clone(),
                    label: rec.label,
                    features: f.features,
                }),
                Split::Validation => cohort.validation.push(HeldOutSlide {
                    slide_id: rec.slide_id.clone(),
                    features: f,
                }),
                Split::Test => cohort.test.push(HeldOutSlide {
                    slide_id: rec.slide_id.clone(),
                    features: f,
                }),
            }
        }
        if cohort.train.is_empty() {
            return Err(Error::Config("the split leaves no training slides".into()));
        }
        Ok(cohort)
    }

    fn monitoring(&self) -> Vec<AnnotatedBag> {
        self.validation
            .iter()
            .filter_map(|s| {
                Some(AnnotatedBag {
                    features: s.features.features.clone(),
                    gt: s.features.gt.clone()?,
                })
            })
            .collect()
    }
}

pub fn load_cohort(cfg: &RunConfig) -> Result<SplitCohort> {
    let manifest = Manifest::read(&cfg.manifest)?;
    SplitCohort::load(&manifest, &cfg.train)
}

/// Trains one configuration on the cohort's training split.
pub fn train_on(
    cohort: &SplitCohort,
    framework: FrameworkConfig,
    settings: &TrainSettings,
    hidden: &[usize],
) -> Result<TrainOutcome> {
    let trainer = Trainer::new(framework, settings.clone(), hidden.to_vec())?;
    let monitor = cohort.monitoring();
    let mut last = Instant::now();
    let out = trainer.train_with(&cohort.train, &monitor, |stats| {
        let now = Instant::now();
        stats.wall_clock_secs = Some((now - last).as_secs_f64());
        last = now;
        log::info!(
            "epoch {} loss(T=0) {:?} loss(T=1) {:?} val auc {:?}",
            stats.epoch,
            stats.mean_loss_negative,
            stats.mean_loss_positive,
            stats.validation_auc
        );
    })?;
    Ok(out)
}

pub fn train(cfg: &RunConfig) -> Result<(Checkpoint, wsmil_core::TrainLog)> {
    let cohort = load_cohort(cfg)?;
    let out = train_on(&cohort, cfg.framework, &cfg.train, &cfg.model.hidden)?;
    Ok((
        Checkpoint {
            model: out.model,
            adam: out.adam,
            framework: cfg.framework,
        },
        out.log,
    ))
}

fn scored(model: &Mlp, slides: &[HeldOutSlide]) -> Result<Vec<ScoredSlide>> {
    slides
        .par_iter()
        .filter(|s| s.features.gt.is_some())
        .map(|s| {
            Ok(ScoredSlide {
                slide_id: s.slide_id.clone(),
                scores: model.forward(&s.features.features)?,
                gt: s.features.gt.clone().unwrap_or_default(),
            })
        })
        .collect()
}

/// Instance-level report on the test split, threshold from validation.
pub fn evaluate_model(model: &Mlp, cohort: &SplitCohort) -> Result<EvalReport> {
    let test = scored(model, &cohort.test)?;
    if test.is_empty() {
        return Err(Error::Config(
            "no annotated test slides to evaluate on".into(),
        ));
    }
    let val = scored(model, &cohort.validation)?;
    Ok(evaluate(&test, &val)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub alpha: f64,
    pub beta: f64,
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
}

/// Training seed for the `index`-th grid configuration.
pub fn config_seed(base: u64, index: usize) -> u64 {
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Trains and evaluates every grid configuration, in parallel. Rows come
/// back in lexicographic `(α, β)` order regardless of completion order.
pub fn benchmark(cfg: &RunConfig, step: f64) -> Result<Vec<BenchmarkRow>> {
    let grid = feasible_grid(step)?;
    let cohort = load_cohort(cfg)?;
    grid.par_iter()
        .enumerate()
        .map(|(i, fw)| {
            let framework = FrameworkConfig {
                c0: cfg.framework.c0,
                c1: cfg.framework.c1,
                ..*fw
            };
            let settings = TrainSettings {
                seed: config_seed(cfg.train.seed, i),
                ..cfg.train.clone()
            };
            let out = train_on(&cohort, framework, &settings, &cfg.model.hidden)?;
            let r = evaluate_model(&out.model, &cohort)?;
            log::info!("config ({}, {}): auc {:.4}", fw.alpha, fw.beta, r.auc);
            Ok(BenchmarkRow {
                alpha: fw.alpha,
                beta: fw.beta,
                auc: r.auc,
                precision: r.precision,
                recall: r.recall,
                threshold: r.threshold,
            })
        })
        .collect()
}

pub fn write_benchmark_csv(rows: &[BenchmarkRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Scores every patch of a slide exactly once, in file order.
pub fn predict_slide(model: &Mlp, slide: &SlideFeatures) -> Result<Vec<PatchScore>> {
    let scores = wsmil_core::predict(model, &slide.features)?;
    Ok(slide
        .patch_ids
        .iter()
        .zip(&slide.coords)
        .zip(scores)
        .map(|((id, &(x, y)), score)| PatchScore {
            patch_id: id.clone(),
            x,
            y,
            score,
        })
        .collect())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
