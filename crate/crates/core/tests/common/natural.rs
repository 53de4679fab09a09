//! A CIFAR-10-shaped stand-in cut from the photographs in `tests/data/natural`.
//!
//! Patches are square crops of a few sizes, optionally mirrored, resized to
//! 32×32 and written as binary CIFAR batches. Train patches come from the
//! first part of each photo's long axis and test patches from the rest, so
//! no test pixel was ever seen in training. Set `FRSCATTER_CIFAR10_DIR` to a
//! real `cifar-10-batches-bin` directory to use the actual dataset instead.

use std::path::{Path, PathBuf};

use frscatter::imageio::read_image;
use frscatter::ingest::{list_images, resize_bilinear, CIFAR_SIDE, CIFAR_TEST_FILE, CIFAR_TRAIN_FILES};
use frscatter::rng::SeededRng;

pub const ENV_DIR: &str = "FRSCATTER_CIFAR10_DIR";

/// Share of the long axis that train patches are cut from.
const TRAIN_SHARE: f64 = 0.65;
const CROP_SIDES: [usize; 3] = [32, 40, 48];

pub fn photo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/natural")
}

/// `(channels, h, w, pixels)` of every photo, as RGB in `[0, 1]`.
pub fn photos() -> Vec<(usize, usize, Vec<f64>)> {
    list_images(photo_dir())
        .unwrap()
        .iter()
        .map(|p| {
            let img = read_image(p).unwrap();
            let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
            let mut data = img.into_data();
            if c == 1 {
                data = data.repeat(3);
            }
            (h, w, data)
        })
        .collect()
}

/// One 3073-byte record: label 0, then the R, G and B planes.
fn patch_record(photo: &(usize, usize, Vec<f64>), rng: &mut SeededRng, train: bool) -> Vec<u8> {
    let (h, w, data) = photo;
    let (h, w) = (*h, *w);
    let long_is_width = w >= h;
    let long = if long_is_width { w } else { h };
    let cut = (long as f64 * TRAIN_SHARE).round() as usize;
    let (lo, hi) = if train { (0, cut) } else { (cut, long) };
    let short = if long_is_width { h } else { w };
    let sides: Vec<usize> = CROP_SIDES.iter().copied().filter(|&s| s <= hi - lo && s <= short).collect();
    let side = sides[(rng.next_u64() % sides.len() as u64) as usize];
    let along = lo + (rng.next_u64() % (hi - lo - side + 1) as u64) as usize;
    let across = (rng.next_u64() % (short - side + 1) as u64) as usize;
    let (r0, c0) = if long_is_width { (across, along) } else { (along, across) };
    let flip = rng.next_u64() % 2 == 1;

    let mut rec = vec![0u8];
    for ch in 0..3 {
        let plane = &data[ch * h * w..(ch + 1) * h * w];
        let mut crop = Vec::with_capacity(side * side);
        for r in r0..r0 + side {
            let row = &plane[r * w + c0..r * w + c0 + side];
            if flip {
                crop.extend(row.iter().rev());
            } else {
                crop.extend_from_slice(row);
            }
        }
        let small = resize_bilinear(&crop, side, side, CIFAR_SIDE, CIFAR_SIDE);
        rec.extend(small.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    rec
}

fn records(n: usize, train: bool, seed: u64) -> Vec<u8> {
    let photos = photos();
    let mut rng = SeededRng::new(seed);
    let mut out = Vec::with_capacity(n * 3073);
    for i in 0..n {
        out.extend(patch_record(&photos[i % photos.len()], &mut rng, train));
    }
    out
}

/// Writes `train_n` train records spread over the five batch files and
/// `test_n` test records into `dir`.
pub fn write_cifar_standin(dir: &Path, train_n: usize, test_n: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    let train = records(train_n, true, seed);
    let per = train_n.div_ceil(CIFAR_TRAIN_FILES.len());
    for (i, f) in CIFAR_TRAIN_FILES.iter().enumerate() {
        let a = (i * per).min(train_n) * 3073;
        let b = ((i + 1) * per).min(train_n) * 3073;
        std::fs::write(dir.join(f), &train[a..b]).unwrap();
    }
    std::fs::write(dir.join(CIFAR_TEST_FILE), records(test_n, false, seed ^ 0x7e57)).unwrap();
}

/// The real dataset if `FRSCATTER_CIFAR10_DIR` is set, else a stand-in with
/// at least the requested sizes written under `scratch`. The flag says
/// whether the real dataset is used.
pub fn cifar_dir(scratch: &Path, train_n: usize, test_n: usize) -> (PathBuf, bool) {
    if let Some(d) = std::env::var_os(ENV_DIR) {
        return (PathBuf::from(d), true);
    }
    let dir = scratch.join("cifar-standin");
    write_cifar_standin(&dir, train_n, test_n, 2024);
    (dir, false)
}
