//! Running the arms of a plan: encode, reduce, train, generate, evaluate.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use super::plan::{Arch, ArmSpec, DecoderSettings, ExperimentPlan, Reduction};
use crate::decoder::{g1_build, g2_build, generate, save_checkpoint, train, write_curve_csv, Split};
use crate::error::{Error, Result};
use crate::filters::{build_bank, FilterBank};
use crate::frst::tensor_write;
use crate::imageio::write_grid_png;
use crate::metrics::{evaluate_split, EvalReport};
use crate::reduction::{fmf, pca_fit, pca_project_batch, pca_save, FmfConfig};
use crate::rng::SeededRng;
use crate::scattering::{enumerate_paths, scatter_batch, Embedding, PathTable};
use crate::tensor::DenseTensor;

/// Images generated per call to the decoder.
const GENERATE_CHUNK: usize = 64;

/// Mean PSNR and SSIM of one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitScores {
    pub psnr: f64,
    pub ssim: f64,
}

impl From<&EvalReport> for SplitScores {
    fn from(r: &EvalReport) -> Self {
        Self {
            psnr: r.mean_psnr,
            ssim: r.mean_ssim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ok,
    Failed(String),
}

impl Status {
    pub fn label(&self) -> String {
        match self {
            Self::Ok => "ok".into(),
            Self::Failed(why) => format!("failed: {why}"),
        }
    }
}

/// One row of the master table.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub name: String,
    /// `gsn` for the PCA baseline, `gfrsn` for FMF arms, `fusion` for fused rows.
    pub kind: String,
    pub alpha: [f64; 2],
    pub reduction: String,
    pub arch: String,
    pub fused: bool,
    pub status: Status,
    pub train: Option<SplitScores>,
    pub test: Option<SplitScores>,
}

impl ArmResult {
    pub(crate) fn pending(arm: &ArmSpec) -> Self {
        Self {
            name: arm.name.clone(),
            kind: match arm.reduction {
                Reduction::Pca { .. } => "gsn".into(),
                Reduction::Fmf { .. } => "gfrsn".into(),
            },
            alpha: arm.alpha,
            reduction: arm.reduction.label().into(),
            arch: match arm.arch() {
                Arch::G1 => "g1".into(),
                Arch::G2 => "g2".into(),
            },
            fused: false,
            status: Status::Ok,
            train: None,
            test: None,
        }
    }
}

/// Ingested images shared by every arm, as `N × 1 × H × W` in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Images {
    pub train: DenseTensor<f64>,
    pub test: DenseTensor<f64>,
}

impl Images {
    pub fn side(&self) -> Result<usize> {
        let (_, _, h, w) = self.train.dims4()?;
        if h != w {
            return Err(Error::shape(format!("images must be square, got {h}x{w}")));
        }
        Ok(h)
    }
}

/// Encoder state shared by all arms of one plan.
pub struct Encoder {
    pub bank: FilterBank,
    pub table: PathTable,
    pub workers: usize,
}

impl Encoder {
    pub fn new(plan: &ExperimentPlan, side: usize) -> Result<Self> {
        let p = &plan.scattering;
        Ok(Self {
            bank: build_bank(p, side, side)?,
            table: enumerate_paths(p.octaves, p.angles)?,
            workers: plan.workers,
        })
    }

    /// Scatters both splits at `alpha`. Coefficients are rounded to real32,
    /// the precision they are stored at, so a rerun from disk sees the same
    /// values as the original run.
    pub fn encode(&self, images: &Images, alpha: [f64; 2]) -> Result<(Embedding, Embedding)> {
        let pair = crate::scattering::FracOrderPair::new(alpha[0], alpha[1])?;
        let round = |mut e: Embedding| {
            e.tensor = e.tensor.to_f32().to_f64();
            e
        };
        let train = scatter_batch(&images.train, &self.bank, pair, &self.table, self.workers)?;
        let test = scatter_batch(&images.test, &self.bank, pair, &self.table, self.workers)?;
        Ok((round(train), round(test)))
    }
}

/// Everything an arm writes lives under `<out>/arms/<name>/`.
pub fn arm_dir(out: &Path, name: &str) -> PathBuf {
    out.join("arms").join(name)
}

fn flatten(e: &DenseTensor<f64>) -> Result<DenseTensor<f64>> {
    let n = e.shape()[0];
    let d = e.item_len();
    e.clone().reshape(vec![n, d])
}

fn f32_round(t: DenseTensor<f64>) -> DenseTensor<f64> {
    t.to_f32().to_f64()
}

fn first(t: &DenseTensor<f64>, n: usize) -> DenseTensor<f64> {
    let idx: Vec<usize> = (0..n.min(t.shape()[0])).collect();
    t.select(&idx)
}

/// Writes the first `side²` images of `images` as a `side × side` grid.
pub fn write_grid(path: &Path, images: &DenseTensor<f64>, side: usize) -> Result<()> {
    if side == 0 || images.shape()[0] == 0 {
        return Ok(());
    }
    write_grid_png(path, &first(images, side * side), side, side)
}

#[derive(Serialize)]
struct ArmManifest<'a> {
    crate_version: &'a str,
    plan_seed: u64,
    arm_seed: u64,
    init_seed: u64,
    shuffle_seed: u64,
    seed_derivation: &'a str,
    arm: &'a ArmSpec,
    arch: &'a str,
    decoder: DecoderSettings,
    input_shape: Vec<usize>,
    parameters: usize,
    status: String,
}

/// The seeds an arm uses: `(arm, init, shuffle)`.
pub fn arm_seeds(arm: &ArmSpec, plan_seed: u64) -> (u64, u64, u64) {
    let root = SeededRng::new(arm.seed(plan_seed));
    (root.seed(), root.child(1).seed(), root.child(2).seed())
}

/// Reduces, trains, generates and evaluates one arm from its embeddings.
/// Any error marks the arm as failed; the plan carries on.
pub fn run_arm(
    plan: &ExperimentPlan,
    arm: &ArmSpec,
    images: &Images,
    embeddings: &(Embedding, Embedding),
    out: &Path,
) -> ArmResult {
    let mut result = ArmResult::pending(arm);
    match run_arm_inner(plan, arm, images, embeddings, out, &mut result) {
        Ok(()) => {}
        Err(e) => {
            warn!("arm {} failed: {e}", arm.name);
            result.status = Status::Failed(e.to_string());
            result.train = None;
            result.test = None;
        }
    }
    result
}

fn run_arm_inner(
    plan: &ExperimentPlan,
    arm: &ArmSpec,
    images: &Images,
    (emb_train, emb_test): &(Embedding, Embedding),
    out: &Path,
    result: &mut ArmResult,
) -> Result<()> {
    let dir = arm_dir(out, &arm.name);
    std::fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    let side = images.side()?;
    let settings = plan.decoder_for(arm);
    let (arm_seed, init_seed, shuffle_seed) = arm_seeds(arm, plan.seed);
    let mut init_rng = SeededRng::new(init_seed);

    if plan.persist_intermediates {
        tensor_write(&emb_train.tensor.to_f32(), dir.join("embeddings_train.frst"))?;
        tensor_write(&emb_test.tensor.to_f32(), dir.join("embeddings_test.frst"))?;
    }

    let (train_in, test_in) = match arm.reduction {
        Reduction::Pca { udim, whiten } => {
            let model = pca_fit(&flatten(&emb_train.tensor)?, udim, whiten)?;
            pca_save(&model, dir.join("pca.json"))?;
            (
                pca_project_batch(&flatten(&emb_train.tensor)?, &model)?,
                pca_project_batch(&flatten(&emb_test.tensor)?, &model)?,
            )
        }
        Reduction::Fmf { grouping } => {
            let cfg = FmfConfig::new(grouping);
            (fmf(emb_train, &cfg)?, fmf(emb_test, &cfg)?)
        }
    };
    let (train_in, test_in) = (f32_round(train_in), f32_round(test_in));
    if plan.persist_intermediates {
        tensor_write(&train_in.to_f32(), dir.join("inputs_train.frst"))?;
        tensor_write(&test_in.to_f32(), dir.join("inputs_test.frst"))?;
    }

    let mut model = match arm.arch() {
        Arch::G1 => g1_build(train_in.item_len(), side, settings.base_width, &mut init_rng)?,
        Arch::G2 => {
            let (_, c, h, w) = train_in.dims4()?;
            if h != w {
                return Err(Error::shape(format!("reduced maps must be square, got {h}x{w}")));
            }
            g2_build(c, h, side, settings.base_width, &mut init_rng)?
        }
    };

    let manifest = ArmManifest {
        crate_version: env!("CARGO_PKG_VERSION"),
        plan_seed: plan.seed,
        arm_seed,
        init_seed,
        shuffle_seed,
        seed_derivation: "arm = plan_seed ^ fnv1a(name); init = arm ^ 1; shuffle = arm ^ 2",
        arm,
        arch: &result.arch,
        decoder: settings,
        input_shape: model.input_shape().to_vec(),
        parameters: model.param_count(),
        status: "started".into(),
    };
    let write_manifest = |m: &ArmManifest| -> Result<()> {
        let text = toml::to_string_pretty(m).map_err(|e| Error::Config(e.to_string()))?;
        let path = dir.join("manifest.toml");
        std::fs::write(&path, text).map_err(|e| Error::file(&path, e))
    };
    write_manifest(&manifest)?;

    let train_split = Split::new(train_in, images.train.clone())?;
    let test_split = Split::new(test_in, images.test.clone())?;
    let mut cfg = settings.train_config(shuffle_seed);
    if settings.checkpoint_every > 0 {
        cfg.checkpoint_dir = Some(dir.join("checkpoints"));
    }
    info!(
        "arm {}: {} parameters, {} steps of batch {}",
        arm.name,
        model.param_count(),
        cfg.max_steps,
        cfg.batch_size
    );
    let outcome = train(&mut model, &train_split, Some(&test_split), &cfg)?;
    write_curve_csv(&outcome.curve, dir.join("curve.csv"))?;
    save_checkpoint(&model, dir.join("final"))?;

    let gen_train = f32_round(generate(&model, &train_split.inputs, GENERATE_CHUNK)?);
    let gen_test = f32_round(generate(&model, &test_split.inputs, GENERATE_CHUNK)?);
    tensor_write(&gen_train.to_f32(), dir.join("generated_train.frst"))?;
    tensor_write(&gen_test.to_f32(), dir.join("generated_test.frst"))?;

    let train_report = evaluate_split(&images.train, &gen_train)?;
    let test_report = evaluate_split(&images.test, &gen_test)?;
    train_report.write_csv(dir.join("eval_train.csv"))?;
    test_report.write_csv(dir.join("eval_test.csv"))?;
    let g = plan.report.grid_side;
    write_grid(&dir.join("grid_train_generated.png"), &gen_train, g)?;
    write_grid(&dir.join("grid_test_generated.png"), &gen_test, g)?;

    result.train = Some((&train_report).into());
    result.test = Some((&test_report).into());
    write_manifest(&ArmManifest {
        status: "ok".into(),
        ..manifest
    })?;
    Ok(())
}

/// Fuses the persisted test and train generations of two arms with weight
/// `weight` on `a`, and scores the result.
pub fn run_fusion(
    a: &ArmResult,
    b: &ArmResult,
    weight: f64,
    images: &Images,
    out: &Path,
    grid_side: usize,
) -> ArmResult {
    let name = format!("{}+{}@{}", a.name, b.name, weight);
    let mut result = ArmResult {
        name: name.clone(),
        kind: "fusion".into(),
        alpha: b.alpha,
        reduction: format!("{}+{}", a.reduction, b.reduction),
        arch: format!("{}+{}", a.arch, b.arch),
        fused: true,
        status: Status::Ok,
        train: None,
        test: None,
    };
    if a.status != Status::Ok || b.status != Status::Ok {
        result.status = Status::Failed("a fused arm did not complete".into());
        return result;
    }
    let dir = out.join("fusion").join(name.replace(['+', '@'], "_"));
    let run = || -> Result<(SplitScores, SplitScores)> {
        std::fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
        let cfg = crate::metrics::FusionConfig::new(weight)?;
        let mut scores = Vec::new();
        for (split, refs) in [("train", &images.train), ("test", &images.test)] {
            let file = format!("generated_{split}.frst");
            let ga = crate::frst::read_real(arm_dir(out, &a.name).join(&file))?;
            let gb = crate::frst::read_real(arm_dir(out, &b.name).join(&file))?;
            let fused = crate::metrics::fuse(&ga, &gb, &cfg)?;
            tensor_write(&fused.to_f32(), dir.join(format!("fused_{split}.frst")))?;
            let report = evaluate_split(refs, &fused)?;
            report.write_csv(dir.join(format!("eval_{split}.csv")))?;
            write_grid(&dir.join(format!("grid_{split}_fused.png")), &fused, grid_side)?;
            scores.push(SplitScores::from(&report));
        }
        Ok((scores[0], scores[1]))
    };
    match run() {
        Ok((train, test)) => {
            result.train = Some(train);
            result.test = Some(test);
        }
        Err(e) => result.status = Status::Failed(e.to_string()),
    }
    result
}
