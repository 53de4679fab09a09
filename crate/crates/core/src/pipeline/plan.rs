use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::{AdamConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::filters::FilterParams;
use crate::ingest::DatasetSpec;
use crate::reduction::Grouping;
use crate::rng::fnv1a;
use crate::scattering::FracOrderPair;

/// Orders paired with 1.00 in the default sweep.
pub const SWEEP_ORDERS: [f64; 9] = [0.05, 0.10, 0.40, 0.70, 1.00, 1.30, 1.60, 1.90, 1.95];

/// `(a, 1)` and `(1, a)` for every sweep order, with `(1, 1)` once: 17 pairs.
pub fn alpha_sweep() -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = SWEEP_ORDERS.iter().map(|&a| [a, 1.0]).collect();
    out.extend(SWEEP_ORDERS.iter().filter(|&&a| a != 1.0).map(|&a| [1.0, a]));
    out
}

/// Canonical arm name for a fractional arm, e.g. `frac_0.40_1.00`.
pub fn frac_arm_name(alpha: [f64; 2]) -> String {
    format!("frac_{:.2}_{:.2}", alpha[0], alpha[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// Vector input: FC head, 7×7 convolutions.
    G1,
    /// Tensor input: 1×1 head, 3×3 convolution blocks.
    G2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reduction {
    Pca {
        udim: usize,
        #[serde(default = "yes")]
        whiten: bool,
    },
    Fmf {
        #[serde(default)]
        grouping: Grouping,
    },
}

fn yes() -> bool {
    true
}

impl Reduction {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Pca { .. } => "pca",
            Self::Fmf { .. } => "fmf",
        }
    }
}

/// Decoder size and optimisation budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSettings {
    pub base_width: usize,
    pub batch_size: usize,
    pub max_steps: usize,
    pub lr: f64,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub checkpoint_every: usize,
}

impl Default for DecoderSettings {
    fn default() -> Self {
        Self {
            base_width: 256,
            batch_size: 64,
            max_steps: 20_000,
            lr: AdamConfig::default().lr,
            eval_every: 500,
            eval_samples: 256,
            checkpoint_every: 0,
        }
    }
}

impl DecoderSettings {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_steps: self.max_steps,
            seed,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            checkpoint_every: self.checkpoint_every,
            eval_every: self.eval_every,
            eval_samples: self.eval_samples,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub name: String,
    pub alpha: [f64; 2],
    pub reduction: Reduction,
    /// Defaults to G1 for PCA and G2 for FMF.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<Arch>,
    /// Overrides the plan-wide decoder settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoder: Option<DecoderSettings>,
}

impl ArmSpec {
    /// The scattering-plus-PCA baseline with a vector generator.
    pub fn gsn(name: impl Into<String>, udim: usize) -> Self {
        Self {
            name: name.into(),
            alpha: [1.0, 1.0],
            reduction: Reduction::Pca { udim, whiten: true },
            arch: None,
            decoder: None,
        }
    }

    /// A fractional arm with feature-map fusion and a tensor generator.
    pub fn gfrsn(alpha: [f64; 2]) -> Self {
        Self {
            name: frac_arm_name(alpha),
            alpha,
            reduction: Reduction::Fmf {
                grouping: Grouping::ConsecutiveBlocks,
            },
            arch: None,
            decoder: None,
        }
    }

    pub fn arch(&self) -> Arch {
        self.arch.unwrap_or(match self.reduction {
            Reduction::Pca { .. } => Arch::G1,
            Reduction::Fmf { .. } => Arch::G2,
        })
    }

    pub fn alpha_pair(&self) -> Result<FracOrderPair> {
        FracOrderPair::new(self.alpha[0], self.alpha[1])
    }

    /// `plan_seed XOR fnv1a(name)`.
    pub fn seed(&self, plan_seed: u64) -> u64 {
        plan_seed ^ fnv1a(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSpec {
    pub a: String,
    pub b: String,
    #[serde(default = "half")]
    pub weight: f64,
}

fn half() -> f64 {
    0.5
}

impl FusionSpec {
    pub fn name(&self) -> String {
        format!("{}+{}@{}", self.a, self.b, self.weight)
    }
}

/// How relative improvements are normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImprovementBase {
    /// `100·(v − ref)/max(v, ref)`, which reproduces the published tables.
    #[default]
    Larger,
    /// `100·(v − ref)/ref`.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    /// Arm the improvements are measured against; defaults to the FMF arm
    /// at α = (1, 1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub improvement_base: ImprovementBase,
    /// Images per side of the PNG grids.
    pub grid_side: usize,
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self {
            reference: None,
            improvement_base: ImprovementBase::Larger,
            grid_side: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub seed: u64,
    /// Scattering threads.
    #[serde(default = "one")]
    pub workers: usize,
    /// Run arms concurrently.
    #[serde(default)]
    pub parallel_arms: bool,
    /// Persist embeddings and reduced inputs of every arm.
    #[serde(default = "yes")]
    pub persist_intermediates: bool,
    pub dataset: DatasetSpec,
    pub scattering: FilterParams,
    #[serde(default)]
    pub decoder: DecoderSettings,
    pub arms: Vec<ArmSpec>,
    #[serde(default)]
    pub fusion: Vec<FusionSpec>,
    #[serde(default)]
    pub report: ReportSettings,
}

fn one() -> usize {
    1
}

impl ExperimentPlan {
    /// The default study: the scattering/PCA baseline, the 17-arm α sweep and
    /// the fusion of the (0.40, 1.00) arm with the (1.00, 1.00) arm.
    pub fn paper_default(dataset: DatasetSpec, seed: u64) -> Self {
        let mut arms = vec![ArmSpec::gsn("gsn_pca", 784)];
        arms.extend(alpha_sweep().into_iter().map(ArmSpec::gfrsn));
        Self {
            seed,
            workers: 1,
            parallel_arms: false,
            persist_intermediates: true,
            dataset,
            scattering: FilterParams::new(3, 8),
            decoder: DecoderSettings::default(),
            arms,
            fusion: vec![FusionSpec {
                a: frac_arm_name([0.4, 1.0]),
                b: frac_arm_name([1.0, 1.0]),
                weight: 0.5,
            }],
            report: ReportSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a plan file, or the plan embedded in a run manifest.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let value: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(plan) = value.get("plan") {
            let plan: Self = plan.clone().try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
            plan.validate()?;
            return Ok(plan);
        }
        Self::from_toml(&text)
    }

    pub fn arm(&self, name: &str) -> Option<&ArmSpec> {
        self.arms.iter().find(|a| a.name == name)
    }

    pub fn decoder_for(&self, arm: &ArmSpec) -> DecoderSettings {
        arm.decoder.unwrap_or(self.decoder)
    }

    /// FMF arms at α = (1, 1).
    fn unit_fmf_arms(&self) -> Vec<&ArmSpec> {
        self.arms
            .iter()
            .filter(|a| a.alpha == [1.0, 1.0] && matches!(a.reduction, Reduction::Fmf { .. }))
            .collect()
    }

    /// The arm improvements are reported against.
    pub fn reference_arm(&self) -> Result<&ArmSpec> {
        if let Some(name) = &self.report.reference {
            return self
                .arm(name)
                .ok_or_else(|| Error::Config(format!("reference arm {name:?} is not in the plan")));
        }
        match self.unit_fmf_arms().as_slice() {
            [one] => Ok(one),
            [] => Err(Error::Config("no FMF arm at alpha = (1, 1) to report against".into())),
            _ => Err(Error::Config("more than one FMF arm at alpha = (1, 1)".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scattering.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.arms.is_empty() {
            return Err(Error::Config("a plan needs at least one arm".into()));
        }
        let mut names = HashSet::new();
        for arm in &self.arms {
            if !names.insert(arm.name.as_str()) {
                return Err(Error::Config(format!("duplicate arm name {:?}", arm.name)));
            }
            if arm.name.is_empty() || arm.name.contains(['/', '\\']) {
                return Err(Error::Config(format!("arm name {:?} is not a valid directory name", arm.name)));
            }
            arm.alpha_pair()?;
            if let (Reduction::Pca { .. }, Arch::G2) = (arm.reduction, arm.arch()) {
                return Err(Error::Config(format!(
                    "arm {:?}: PCA codes are vectors and need the G1 generator",
                    arm.name
                )));
            }
            let d = self.decoder_for(arm);
            if d.batch_size == 0 || d.max_steps == 0 || d.base_width == 0 {
                return Err(Error::Config(format!("arm {:?}: empty decoder budget", arm.name)));
            }
        }
        for f in &self.fusion {
            for side in [&f.a, &f.b] {
                if self.arm(side).is_none() {
                    return Err(Error::Config(format!("fusion pair references unknown arm {side:?}")));
                }
            }
            if !(0.0..=1.0).contains(&f.weight) {
                return Err(Error::Config(format!("fusion weight {} is outside [0, 1]", f.weight)));
            }
        }
        // Fusion pairs and explicit references need an unambiguous baseline;
        // without either, the improvement table is simply skipped when no
        // FMF arm sits at (1, 1).
        if !self.fusion.is_empty() || self.report.reference.is_some() || self.unit_fmf_arms().len() > 1 {
            self.reference_arm()?;
        }
        Ok(())
    }
}

/// `100·(v − reference)/base`, with the base chosen by `mode`.
pub fn relative_improvement(v: f64, reference: f64, mode: ImprovementBase) -> f64 {
    let base = match mode {
        ImprovementBase::Larger => v.max(reference),
        ImprovementBase::Reference => reference,
    };
    100.0 * (v - reference) / base
}
