//! Command-line front end: filters, scattering, reduction, decoder training,
//! evaluation, fusion, ingestion and whole experiment plans.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use frscatter::decoder::{g1_build, g2_build, save_checkpoint, train, write_curve_csv, Split, TrainConfig};
use frscatter::filters::{build_bank, littlewood_paley_report, FilterParams};
use frscatter::frst::{read_real, tensor_write};
use frscatter::imageio::{read_image, write_heatmap_png};
use frscatter::ingest::{self, CropPolicy, DatasetSpec, Source};
use frscatter::metrics::{evaluate_split, fuse, FusionConfig};
use frscatter::pipeline::{run_plan, ExperimentPlan};
use frscatter::reduction::{fmf, pca_fit, pca_load, pca_project_batch, pca_save, FmfConfig, Grouping};
use frscatter::rng::SeededRng;
use frscatter::scattering::{enumerate_paths, scatter_batch, FracOrderPair};
use frscatter::DenseTensor;

#[derive(Parser)]
#[command(name = "frscatter", version, about = "Generative fractional scattering networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write every filter of a bank as an FRST tensor and a PNG heatmap.
    Filters {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scatter a batch of images at one pair of fractional orders.
    Scatter {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha1: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha2: f64,
        /// An image directory, a CIFAR-10 binary batch, or an FRST image tensor.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduce embeddings by feature-map fusion or PCA.
    Reduce {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, value_enum, default_value_t = GroupingArg::Blocks)]
        grouping: GroupingArg,
        #[arg(long, default_value_t = 784)]
        udim: usize,
        /// Skip PCA whitening.
        #[arg(long)]
        no_whiten: bool,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// PCA header file: loaded if it exists, otherwise fitted and written.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train a generator on reduced embeddings.
    Train {
        #[arg(long, value_enum)]
        arch: ArchArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        test_embeddings: Option<PathBuf>,
        #[arg(long)]
        test_images: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-image PSNR and SSIM of generated images against references.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        gen: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pixelwise convex combination `w·a + (1 − w)·b`.
    Fuse {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        weight: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build train and test image tensors from CIFAR-10 or an image folder.
    Ingest {
        #[arg(long, value_enum)]
        source: SourceArg,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        train_n: usize,
        #[arg(long)]
        test_n: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment plan (or re-run one from its manifest).
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Fmf,
    Pca,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    Blocks,
    Parent,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    G1,
    G2,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Cifar10,
    Imagedir,
}

/// Scattering config file. Filter shape keys default to the standard
/// Morlet values for the given `L`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScatterConfig {
    #[serde(rename = "J")]
    octaves: usize,
    #[serde(rename = "L")]
    angles: usize,
    sigma0: Option<f64>,
    xi0: Option<f64>,
    slant: Option<f64>,
    #[serde(default = "one")]
    workers: usize,
    /// Recorded for provenance; the transform itself is deterministic.
    #[serde(default)]
    seed: u64,
    /// Side length image folders are cropped and resized to.
    #[serde(default = "side")]
    size: usize,
}

fn one() -> usize {
    1
}

fn side() -> usize {
    32
}

impl ScatterConfig {
    fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn filter_params(&self) -> anyhow::Result<FilterParams> {
        let mut p = FilterParams::new(self.octaves, self.angles);
        p.sigma0 = self.sigma0.unwrap_or(p.sigma0);
        p.xi0 = self.xi0.unwrap_or(p.xi0);
        p.slant = self.slant.unwrap_or(p.slant);
        p.validate()?;
        Ok(p)
    }
}

/// Training config: the decoder width plus every `TrainConfig` key.
fn load_train_config(path: Option<&Path>) -> anyhow::Result<(usize, TrainConfig)> {
    let Some(path) = path else {
        return Ok((32, TrainConfig::default()));
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut table: toml::Table = toml::from_str(&text)?;
    let base = match table.remove("base_width") {
        Some(v) => v.as_integer().context("base_width must be an integer")? as usize,
        None => 32,
    };
    let cfg: TrainConfig = table.try_into().context("invalid training config")?;
    cfg.validate()?;
    Ok((base, cfg))
}

/// Loads images as `N × 1 × H × W` in `[0, 1]`.
fn load_images(input: &Path, size: usize) -> anyhow::Result<DenseTensor<f64>> {
    if input.is_dir() {
        let mut parts = Vec::new();
        for f in ingest::list_images(input)? {
            let img = read_image(&f).with_context(|| format!("reading {}", f.display()))?;
            let gray = if img.shape()[0] == 3 { ingest::to_grayscale(&img)? } else { img };
            parts.push(ingest::center_square(&gray, size)?.reshape(vec![1, 1, size, size])?);
        }
        if parts.is_empty() {
            bail!("no images in {}", input.display());
        }
        return Ok(DenseTensor::stack(&parts)?);
    }
    if input.extension().is_some_and(|e| e == "bin") {
        let bytes = ingest::read_cifar_file(input)?;
        let n = bytes.len() / ingest::CIFAR_RECORD;
        let mut data = Vec::with_capacity(n * 1024);
        for rec in bytes.chunks(ingest::CIFAR_RECORD) {
            data.extend(ingest::decode_cifar_record(rec).into_iter().map(f64::from));
        }
        return Ok(DenseTensor::new(vec![n, 1, ingest::CIFAR_SIDE, ingest::CIFAR_SIDE], data)?);
    }
    let t = read_real(input)?;
    Ok(match *t.shape() {
        [n, h, w] => t.reshape(vec![n, 1, h, w])?,
        _ => t,
    })
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn cmd_filters(config: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = ScatterConfig::load(config)?;
    let params = cfg.filter_params()?;
    let bank = build_bank(&params, cfg.size, cfg.size)?;
    std::fs::create_dir_all(out)?;
    let (h, w) = (bank.height, bank.width);
    let save = |name: &str, resp: &[num_complex::Complex64]| -> anyhow::Result<()> {
        tensor_write(&DenseTensor::new(vec![h, w], resp.to_vec())?, out.join(format!("{name}.frst")))?;
        let mag: Vec<f64> = resp.iter().map(|v| v.norm()).collect();
        write_heatmap_png(out.join(format!("{name}.png")), &mag, h, w)?;
        Ok(())
    };
    for (j, k, resp) in bank.bandpass() {
        save(&format!("psi_j{j}_k{k}"), resp)?;
    }
    save("phi", bank.phi())?;
    let (lo, hi) = littlewood_paley_report(&bank);
    println!(
        "{} band-pass filters + low-pass at {h}x{w}; gain {:.6}; Littlewood-Paley sum in [{lo:.6}, {hi:.6}]",
        bank.bandpass_count(),
        bank.bandpass_gain
    );
    Ok(())
}

fn cmd_scatter(config: &Path, alpha: [f64; 2], input: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = ScatterConfig::load(config)?;
    let params = cfg.filter_params()?;
    let images = load_images(input, cfg.size)?;
    let (n, _, h, w) = images.dims4()?;
    let bank = build_bank(&params, h, w)?;
    let table = enumerate_paths(params.octaves, params.angles)?;
    let pair = FracOrderPair::new(alpha[0], alpha[1])?;
    let e = scatter_batch(&images, &bank, pair, &table, cfg.workers)?;
    ensure_parent(out)?;
    tensor_write(&e.tensor.to_f32(), out)?;
    println!(
        "scattered {n} images at alpha = ({}, {}) into {:?} (seed {})",
        alpha[0],
        alpha[1],
        e.tensor.shape(),
        cfg.seed
    );
    Ok(())
}

/// Recovers `(J, L)` from the path count `1 + LJ + L²J(J−1)/2`, trying
/// `L = 8` first.
fn infer_table(shape: &[usize]) -> anyhow::Result<frscatter::scattering::PathTable> {
    let p = shape.get(1).copied().context("embeddings must be N × P × h × w")?;
    let angles = std::iter::once(8).chain((1..=32).filter(|&l| l != 8));
    for l in angles {
        for j in 1..=8 {
            if 1 + l * j + l * l * j * (j - 1) / 2 == p {
                return Ok(enumerate_paths(j, l)?);
            }
        }
    }
    bail!("cannot infer (J, L) from {p} paths")
}

fn cmd_reduce(
    method: Method,
    grouping: GroupingArg,
    udim: usize,
    whiten: bool,
    input: &Path,
    out: &Path,
    model: Option<&Path>,
) -> anyhow::Result<()> {
    let e = read_real(input)?;
    let reduced = match method {
        Method::Fmf => {
            let table = infer_table(e.shape())?;
            let grouping = match grouping {
                GroupingArg::Blocks => Grouping::ConsecutiveBlocks,
                GroupingArg::Parent => Grouping::ParentPath,
            };
            let emb = frscatter::scattering::Embedding {
                tensor: e,
                path_table: table,
                alpha: FracOrderPair::ONE,
            };
            fmf(&emb, &FmfConfig::new(grouping))?
        }
        Method::Pca => {
            let n = e.shape()[0];
            let d = e.item_len();
            let flat = e.reshape(vec![n, d])?;
            let m = match model {
                Some(p) if p.exists() => pca_load(p)?,
                _ => {
                    let m = pca_fit(&flat, udim, whiten)?;
                    if let Some(p) = model {
                        ensure_parent(p)?;
                        pca_save(&m, p)?;
                    }
                    m
                }
            };
            pca_project_batch(&flat, &m)?
        }
    };
    ensure_parent(out)?;
    tensor_write(&reduced.to_f32(), out)?;
    println!("reduced to {:?}", reduced.shape());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    arch: ArchArg,
    config: Option<&Path>,
    embeddings: &Path,
    images: &Path,
    test: Option<(&Path, &Path)>,
    out: &Path,
) -> anyhow::Result<()> {
    let (base, mut cfg) = load_train_config(config)?;
    let inputs = read_real(embeddings)?;
    let targets = load_images(images, 32)?;
    let (_, _, side, _) = targets.dims4()?;
    let mut rng = SeededRng::new(cfg.seed).child(1);
    let mut model = match arch {
        ArchArg::G1 => g1_build(inputs.item_len(), side, base, &mut rng)?,
        ArchArg::G2 => {
            let (_, c, h, _) = inputs.dims4()?;
            g2_build(c, h, side, base, &mut rng)?
        }
    };
    let data = Split::new(inputs, targets)?;
    let test = match test {
        Some((e, i)) => Some(Split::new(read_real(e)?, load_images(i, side)?)?),
        None => None,
    };
    if cfg.checkpoint_every > 0 && cfg.checkpoint_dir.is_none() {
        cfg.checkpoint_dir = Some(out.join("checkpoints"));
    }
    let outcome = train(&mut model, &data, test.as_ref(), &cfg)?;
    save_checkpoint(&model, out)?;
    write_curve_csv(&outcome.curve, out.join("curve.csv"))?;
    println!(
        "trained {} parameters for {} steps: loss {:.5} -> {:.5}",
        model.param_count(),
        cfg.max_steps,
        outcome.first_loss(),
        outcome.last_loss()
    );
    Ok(())
}

fn cmd_ingest(
    source: SourceArg,
    dir: &Path,
    train_n: usize,
    test_n: usize,
    size: usize,
    seed: u64,
    out: &Path,
) -> anyhow::Result<()> {
    let spec = DatasetSpec {
        source: match source {
            SourceArg::Cifar10 => Source::Cifar10BinaryDir,
            SourceArg::Imagedir => Source::ImageDir,
        },
        dir: dir.to_path_buf(),
        train_n,
        test_n,
        size,
        crop: CropPolicy::CenterSquare,
        seed,
    };
    let data = ingest::load(&spec)?;
    std::fs::create_dir_all(out)?;
    tensor_write(&data.train, out.join("train.frst"))?;
    tensor_write(&data.test, out.join("test.frst"))?;
    let mut manifest = data.describe(&spec);
    manifest.push_str(&format!("train_indices = {:?}\ntest_indices = {:?}\n", data.train_indices, data.test_indices));
    std::fs::write(out.join("manifest.txt"), manifest)?;
    println!("wrote {} train and {} test images", data.train_indices.len(), data.test_indices.len());
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Filters { config, out } => cmd_filters(&config, &out),
        Command::Scatter {
            config,
            alpha1,
            alpha2,
            input,
            out,
        } => cmd_scatter(&config, [alpha1, alpha2], &input, &out),
        Command::Reduce {
            method,
            grouping,
            udim,
            no_whiten,
            input,
            out,
            model,
        } => cmd_reduce(method, grouping, udim, !no_whiten, &input, &out, model.as_deref()),
        Command::Train {
            arch,
            config,
            embeddings,
            images,
            test_embeddings,
            test_images,
            out,
        } => {
            let test = match (&test_embeddings, &test_images) {
                (Some(e), Some(i)) => Some((e.as_path(), i.as_path())),
                (None, None) => None,
                _ => bail!("--test-embeddings and --test-images go together"),
            };
            cmd_train(arch, config.as_deref(), &embeddings, &images, test, &out)
        }
        Command::Eval { reference, gen, out } => {
            let r = evaluate_split(&load_images(&reference, 32)?, &load_images(&gen, 32)?)?;
            ensure_parent(&out)?;
            r.write_csv(&out)?;
            println!("mean PSNR {:.4} dB, mean SSIM {:.4} over {} images", r.mean_psnr, r.mean_ssim, r.len());
            Ok(())
        }
        Command::Fuse { a, b, weight, out } => {
            let fused = fuse(&read_real(&a)?, &read_real(&b)?, &FusionConfig::new(weight)?)?;
            ensure_parent(&out)?;
            tensor_write(&fused.to_f32(), &out)?;
            Ok(())
        }
        Command::Ingest {
            source,
            dir,
            train_n,
            test_n,
            size,
            seed,
            out,
        } => cmd_ingest(source, &dir, train_n, test_n, size, seed, &out),
        Command::Run { plan, out } => {
            let plan = ExperimentPlan::load(&plan)?;
            let summary = run_plan(&plan, &out)?;
            for r in &summary.rows {
                let fmt = |s: Option<frscatter::pipeline::SplitScores>| {
                    s.map_or("-".to_string(), |s| format!("{:.4} dB / {:.4}", s.psnr, s.ssim))
                };
                println!("{:<28} train {:<22} test {:<22} {}", r.name, fmt(r.train), fmt(r.test), r.status.label());
            }
            Ok(())
        }
    }
}
