//! End-to-end experiments: the scattering/PCA baseline, fractional arms with
//! feature-map fusion, image fusion across arms, and the reports.
//!
//! A run directory holds `manifest.toml` (the full plan plus every fixed
//! design setting), `master.csv`, `improvements.csv`, the original-image
//! grids, one directory per arm under `arms/` and one per fusion pair under
//! `fusion/`.

mod arms;
mod plan;
mod report;

use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

pub use arms::{arm_dir, arm_seeds, run_arm, run_fusion, ArmResult, Encoder, Images, SplitScores, Status};
pub use plan::{
    alpha_sweep, frac_arm_name, relative_improvement, Arch, ArmSpec, DecoderSettings, ExperimentPlan, FusionSpec,
    ImprovementBase, Reduction, ReportSettings, SWEEP_ORDERS,
};
pub use report::{improvements, write_improvements_csv, write_master_csv, Improvement, MASTER_COLUMNS};

use crate::error::{Error, Result};
use crate::frst::tensor_write;

/// Fixed choices that are not plan keys but shape every number a run emits.
#[derive(Debug, Clone, Serialize)]
pub struct DesignSettings {
    pub embedding_precision: &'static str,
    pub generated_precision: &'static str,
    pub image_range: &'static str,
    pub decoder_target_range: &'static str,
    pub loss: &'static str,
    pub batch_policy: &'static str,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub weight_init: &'static str,
    pub pca_whiten_floor: f64,
    pub pca_sign: &'static str,
    pub fmf_mean: &'static str,
    pub psnr_peak: f64,
    pub psnr_cap_db: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub ssim_k1: f64,
    pub ssim_k2: f64,
    pub ssim_border: &'static str,
    pub filter_normalisation: &'static str,
    pub chirp_grid: &'static str,
}

impl Default for DesignSettings {
    fn default() -> Self {
        let ssim = crate::metrics::SsimParams::default();
        Self {
            embedding_precision: "real32 (computed in real64, rounded once)",
            generated_precision: "real32",
            image_range: "[0, 1]",
            decoder_target_range: "[-1, 1] via 2x - 1",
            loss: "mean absolute error over pixels",
            batch_policy: "seeded per-epoch permutation, remainder dropped",
            bn_eps: crate::decoder::BN_EPS,
            bn_momentum: crate::decoder::BN_MOMENTUM,
            weight_init: "weights uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, batch-norm gamma 1 and beta 0",
            pca_whiten_floor: crate::reduction::WHITEN_FLOOR,
            pca_sign: "largest-magnitude entry of each component is positive",
            fmf_mean: "running mean over each group of order-2 maps",
            psnr_peak: 1.0,
            psnr_cap_db: crate::metrics::PSNR_CAP_DB,
            ssim_window: ssim.window,
            ssim_sigma: ssim.sigma,
            ssim_k1: ssim.k1,
            ssim_k2: ssim.k2,
            ssim_border: "valid windows only",
            filter_normalisation: "unit-peak Morlet, bank scaled so the Littlewood-Paley sum is at most 1",
            chirp_grid: "t = (index - n/2) / n, cot(pi/2) = 0",
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    crate_name: &'a str,
    crate_version: &'a str,
    settings: DesignSettings,
    plan: &'a ExperimentPlan,
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    /// Arms in plan order, then fusion rows.
    pub rows: Vec<ArmResult>,
    pub improvements: Vec<Improvement>,
}

impl RunSummary {
    pub fn row(&self, name: &str) -> Option<&ArmResult> {
        self.rows.iter().find(|r| r.name == name)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

/// Writes the run manifest. `ExperimentPlan::load` reads it back.
pub fn write_run_manifest(plan: &ExperimentPlan, path: impl AsRef<Path>) -> Result<()> {
    let m = RunManifest {
        crate_name: env!("CARGO_PKG_NAME"),
        crate_version: env!("CARGO_PKG_VERSION"),
        settings: DesignSettings::default(),
        plan,
    };
    let text = toml::to_string_pretty(&m).map_err(|e| Error::Config(e.to_string()))?;
    write_text(path.as_ref(), &text)
}

/// Loads the dataset of `plan`, as real64 images.
pub fn load_images(plan: &ExperimentPlan) -> Result<(Images, String)> {
    let data = crate::ingest::load(&plan.dataset)?;
    let text = data.describe(&plan.dataset);
    Ok((
        Images {
            train: data.train.to_f64(),
            test: data.test.to_f64(),
        },
        text,
    ))
}

/// Runs every arm, every fusion pair and the reports into `out`.
pub fn run_plan(plan: &ExperimentPlan, out: impl AsRef<Path>) -> Result<RunSummary> {
    plan.validate()?;
    let (images, description) = load_images(plan)?;
    run_plan_with(plan, &images, &description, out)
}

/// [`run_plan`] on images that are already loaded.
pub fn run_plan_with(
    plan: &ExperimentPlan,
    images: &Images,
    dataset_description: &str,
    out: impl AsRef<Path>,
) -> Result<RunSummary> {
    plan.validate()?;
    let out = out.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::file(out, e))?;
    write_run_manifest(plan, out.join("manifest.toml"))?;
    write_text(&out.join("dataset.txt"), dataset_description)?;
    if plan.persist_intermediates {
        tensor_write(&images.train.to_f32(), out.join("images_train.frst"))?;
        tensor_write(&images.test.to_f32(), out.join("images_test.frst"))?;
    }
    let g = plan.report.grid_side;
    arms::write_grid(&out.join("grid_train_original.png"), &images.train, g)?;
    arms::write_grid(&out.join("grid_test_original.png"), &images.test, g)?;

    let encoder = Encoder::new(plan, images.side()?)?;

    // Arms sharing α share one encoding, so the FMF arm at (1, 1) sees
    // exactly the embeddings the PCA baseline reduces. Groups are dropped as
    // soon as their arms finish to bound memory.
    let mut groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, arm) in plan.arms.iter().enumerate() {
        groups
            .entry((arm.alpha[0].to_bits(), arm.alpha[1].to_bits()))
            .or_default()
            .push(i);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let run_group = |idx: &Vec<usize>| -> Vec<(usize, ArmResult)> {
        let alpha = plan.arms[idx[0]].alpha;
        info!("encoding at alpha = ({}, {})", alpha[0], alpha[1]);
        match encoder.encode(images, alpha) {
            Ok(emb) => idx
                .iter()
                .map(|&i| (i, run_arm(plan, &plan.arms[i], images, &emb, out)))
                .collect(),
            Err(e) => idx
                .iter()
                .map(|&i| {
                    let mut r = ArmResult::pending(&plan.arms[i]);
                    r.status = Status::Failed(e.to_string());
                    (i, r)
                })
                .collect(),
        }
    };
    let mut results: Vec<(usize, ArmResult)> = if plan.parallel_arms {
        groups.par_iter().flat_map_iter(run_group).collect()
    } else {
        groups.iter().flat_map(run_group).collect()
    };
    results.sort_by_key(|(i, _)| *i);
    let mut rows: Vec<ArmResult> = results.into_iter().map(|(_, r)| r).collect();

    for f in &plan.fusion {
        let a = rows.iter().find(|r| r.name == f.a).cloned();
        let b = rows.iter().find(|r| r.name == f.b).cloned();
        let (Some(a), Some(b)) = (a, b) else {
            return Err(Error::Config(format!("fusion pair {} references a missing arm", f.name())));
        };
        rows.push(run_fusion(&a, &b, f.weight, images, out, g));
    }
    write_master_csv(&rows, out.join("master.csv"))?;

    let mut imps = Vec::new();
    match plan.reference_arm() {
        Ok(reference) => {
            let r = rows.iter().find(|r| r.name == reference.name).expect("reference arm has a row");
            if r.status == Status::Ok {
                imps = improvements(&rows, r, plan.report.improvement_base);
                write_improvements_csv(&imps, &r.name, plan.report.improvement_base, out.join("improvements.csv"))?;
            } else {
                warn!("reference arm {} did not complete; no improvement table", r.name);
            }
        }
        Err(e) => info!("no improvement table: {e}"),
    }
    Ok(RunSummary {
        rows,
        improvements: imps,
    })
}
