//! Dataset loading: CIFAR-10 binary batches and image directories, reduced
//! to grayscale `N × 1 × H × W` tensors in `[0, 1]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::read_image;
use crate::rng::SeededRng;
use crate::tensor::DenseTensor;

/// ITU-R BT.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Cifar10BinaryDir,
    ImageDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropPolicy {
    /// Largest centred square, then bilinear resize.
    #[default]
    CenterSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: Source,
    pub dir: PathBuf,
    pub train_n: usize,
    pub test_n: usize,
    /// Output side length; CIFAR images are always 32.
    pub size: usize,
    #[serde(default)]
    pub crop: CropPolicy,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetSpec {
    /// Desk-scale CIFAR-10 subset.
    pub fn cifar10(dir: impl Into<PathBuf>, train_n: usize, test_n: usize, seed: u64) -> Self {
        Self {
            source: Source::Cifar10BinaryDir,
            dir: dir.into(),
            train_n,
            test_n,
            size: CIFAR_SIDE,
            crop: CropPolicy::CenterSquare,
            seed,
        }
    }

    pub fn image_dir(dir: impl Into<PathBuf>, train_n: usize, test_n: usize, size: usize, seed: u64) -> Self {
        Self {
            source: Source::ImageDir,
            dir: dir.into(),
            train_n,
            test_n,
            size,
            crop: CropPolicy::CenterSquare,
            seed,
        }
    }
}

/// Materialised splits. Indices refer to the source order: the
/// concatenated train batches and the test batch for CIFAR-10, the sorted
/// readable file list for image directories.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: DenseTensor<f32>,
    pub test: DenseTensor<f32>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Files that could not be decoded.
    pub skipped: usize,
}

impl Dataset {
    /// Text summary of every preprocessing choice, for run manifests.
    pub fn describe(&self, spec: &DatasetSpec) -> String {
        format!(
            "source = {:?}\ndir = {}\ntrain_n = {}\ntest_n = {}\nsize = {}\ncrop = {:?}\nseed = {}\n\
             grayscale = BT.601 luma (0.299, 0.587, 0.114)\nresize = bilinear, half-pixel centres\n\
             range = [0, 1], real32\nskipped_files = {}\n",
            spec.source,
            spec.dir.display(),
            self.train_indices.len(),
            self.test_indices.len(),
            spec.size,
            spec.crop,
            spec.seed,
            self.skipped
        )
    }
}

pub fn load(spec: &DatasetSpec) -> Result<Dataset> {
    match spec.source {
        Source::Cifar10BinaryDir => load_cifar10(&spec.dir, spec),
        Source::ImageDir => load_image_dir(&spec.dir, spec),
    }
}

/// `0.299 R + 0.587 G + 0.114 B` for a `3 × H × W` image.
pub fn to_grayscale(rgb: &DenseTensor<f64>) -> Result<DenseTensor<f64>> {
    let (h, w) = match rgb.shape() {
        [3, h, w] => (*h, *w),
        s => return Err(Error::shape(format!("expected a 3 × H × W image, got {s:?}"))),
    };
    let n = h * w;
    let d = rgb.data();
    let data = (0..n)
        .map(|i| LUMA[0] * d[i] + LUMA[1] * d[n + i] + LUMA[2] * d[2 * n + i])
        .collect();
    DenseTensor::new(vec![1, h, w], data)
}

/// Sorted random subset of `0..n` of size `k`.
fn subset(n: usize, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut idx = rng.permutation(n);
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Raw bytes of a CIFAR-10 binary batch, checked to hold whole records.
pub fn read_cifar_file(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Dataset(format!(
            "{} has {} bytes, not a whole number of {CIFAR_RECORD}-byte records",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes)
}

/// Grayscale pixels of one channel-planar CIFAR record (label skipped).
pub fn decode_cifar_record(record: &[u8]) -> Vec<f32> {
    let n = CIFAR_SIDE * CIFAR_SIDE;
    let px = &record[1..];
    (0..n)
        .map(|i| {
            let v = LUMA[0] * px[i] as f64 + LUMA[1] * px[n + i] as f64 + LUMA[2] * px[2 * n + i] as f64;
            (v / 255.0).clamp(0.0, 1.0) as f32
        })
        .collect()
}

fn gather(records: &[u8], indices: &[usize]) -> Result<DenseTensor<f32>> {
    let mut data = Vec::with_capacity(indices.len() * CIFAR_SIDE * CIFAR_SIDE);
    for &i in indices {
        data.extend(decode_cifar_record(&records[i * CIFAR_RECORD..(i + 1) * CIFAR_RECORD]));
    }
    DenseTensor::new(vec![indices.len(), 1, CIFAR_SIDE, CIFAR_SIDE], data)
}

/// Loads the five training batches and the test batch, keeping seeded
/// subsets of `train_n` and `test_n` records.
pub fn load_cifar10(dir: impl AsRef<Path>, spec: &DatasetSpec) -> Result<Dataset> {
    let dir = dir.as_ref();
    if spec.size != CIFAR_SIDE {
        return Err(Error::param(format!("CIFAR-10 images are 32x32, not {}", spec.size)));
    }
    let mut train = Vec::new();
    for f in CIFAR_TRAIN_FILES {
        train.extend(read_cifar_file(&dir.join(f))?);
    }
    let test = read_cifar_file(&dir.join(CIFAR_TEST_FILE))?;
    let (nt, ne) = (train.len() / CIFAR_RECORD, test.len() / CIFAR_RECORD);
    if spec.train_n > nt || spec.test_n > ne {
        return Err(Error::Dataset(format!(
            "requested {}/{} images but the files hold {nt}/{ne}",
            spec.train_n, spec.test_n
        )));
    }
    let mut rng = SeededRng::new(spec.seed);
    let train_indices = subset(nt, spec.train_n, &mut rng);
    let test_indices = subset(ne, spec.test_n, &mut rng);
    Ok(Dataset {
        train: gather(&train, &train_indices)?,
        test: gather(&test, &test_indices)?,
        train_indices,
        test_indices,
        skipped: 0,
    })
}

/// Bilinear resize of an `h × w` plane with half-pixel centres and edge
/// clamping. Same-size resizes return the input unchanged.
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    if (h, w) == (oh, ow) {
        return src.to_vec();
    }
    let taps = |n: usize, m: usize| -> Vec<(usize, usize, f64)> {
        (0..m)
            .map(|o| {
                let s = ((o as f64 + 0.5) * n as f64 / m as f64 - 0.5).clamp(0.0, (n - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ty = taps(h, oh);
    let tx = taps(w, ow);
    let mut out = Vec::with_capacity(oh * ow);
    for &(y0, y1, ly) in &ty {
        for &(x0, x1, lx) in &tx {
            let top = src[y0 * w + x0] * (1.0 - lx) + src[y0 * w + x1] * lx;
            let bot = src[y1 * w + x0] * (1.0 - lx) + src[y1 * w + x1] * lx;
            out.push(top * (1.0 - ly) + bot * ly);
        }
    }
    out
}

/// Crops the largest centred square of a `1 × H × W` image and resizes it
/// to `size × size`.
pub fn center_square(gray: &DenseTensor<f64>, size: usize) -> Result<DenseTensor<f64>> {
    let (h, w) = match gray.shape() {
        [1, h, w] => (*h, *w),
        s => return Err(Error::shape(format!("expected 1 × H × W, got {s:?}"))),
    };
    let side = h.min(w);
    let (r0, c0) = ((h - side) / 2, (w - side) / 2);
    let mut crop = Vec::with_capacity(side * side);
    for r in r0..r0 + side {
        crop.extend_from_slice(&gray.data()[r * w + c0..r * w + c0 + side]);
    }
    DenseTensor::new(vec![1, size, size], resize_bilinear(&crop, side, side, size, size))
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

/// Image files of `dir` in lexicographic file-name order.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::file(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads a directory of PNG/JPEG images: centre-square crop, bilinear
/// resize, grayscale. Unreadable files are skipped and counted. The split
/// is a seeded permutation of the readable files: the first `train_n` go to
/// train and the next `test_n` to test.
pub fn load_image_dir(dir: impl AsRef<Path>, spec: &DatasetSpec) -> Result<Dataset> {
    if spec.size == 0 {
        return Err(Error::param("target size must be positive"));
    }
    let files = list_images(dir)?;
    let mut images = Vec::new();
    let mut skipped = 0;
    for f in &files {
        match read_image(f) {
            Ok(img) => {
                let gray = if img.shape()[0] == 3 { to_grayscale(&img)? } else { img };
                images.push(center_square(&gray, spec.size)?);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", f.display());
                skipped += 1;
            }
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} unreadable files");
    }
    let n = images.len();
    if spec.train_n + spec.test_n > n {
        return Err(Error::Dataset(format!(
            "requested {} + {} images but only {n} are readable",
            spec.train_n, spec.test_n
        )));
    }
    let mut rng = SeededRng::new(spec.seed);
    let order = rng.permutation(n);
    let mut train_indices = order[..spec.train_n].to_vec();
    let mut test_indices = order[spec.train_n..spec.train_n + spec.test_n].to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    let pack = |idx: &[usize]| -> Result<DenseTensor<f32>> {
        let mut data = Vec::with_capacity(idx.len() * spec.size * spec.size);
        for &i in idx {
            data.extend(images[i].data().iter().map(|&v| v.clamp(0.0, 1.0) as f32));
        }
        DenseTensor::new(vec![idx.len(), 1, spec.size, spec.size], data)
    };
    Ok(Dataset {
        train: pack(&train_indices)?,
        test: pack(&test_indices)?,
        train_indices,
        test_indices,
        skipped,
    })
}
