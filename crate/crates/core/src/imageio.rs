//! 8-bit PNG input and output. Pixel value `p` maps to the real value `p / 255`.

use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Quantizes a value in `[0, 1]` to a byte, clamping out-of-range input.
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a `height × width` image (values in `[0, 1]`) as 8-bit grayscale.
pub fn write_gray_png(
    path: impl AsRef<Path>,
    pixels: &[f64],
    height: usize,
    width: usize,
) -> Result<()> {
    if pixels.len() != height * width {
        return Err(Error::shape(format!(
            "{} pixels for a {height}x{width} image",
            pixels.len()
        )));
    }
    let img = GrayImage::from_fn(width as u32, height as u32, |x, y| {
        Luma([to_byte(pixels[y as usize * width + x as usize])])
    });
    img.save(path.as_ref())?;
    Ok(())
}

/// Reads an 8-bit grayscale PNG as a `1 × H × W` tensor in `[0, 1]`.
pub fn read_gray_png(path: impl AsRef<Path>) -> Result<DenseTensor<f64>> {
    let img = image::open(path.as_ref())?.to_luma8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    DenseTensor::new(vec![1, h as usize, w as usize], data)
}

/// Reads any image as a `C × H × W` tensor in `[0, 1]`, with `C` = 1 for
/// grayscale sources and 3 otherwise (alpha is dropped).
pub fn read_image(path: impl AsRef<Path>) -> Result<DenseTensor<f64>> {
    let dynimg = image::open(path.as_ref())?;
    let gray = matches!(
        dynimg.color(),
        image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16
    );
    if gray {
        let img = dynimg.to_luma8();
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
        return DenseTensor::new(vec![1, h as usize, w as usize], data);
    }
    let img = dynimg.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            data[c * h * w + y as usize * w + x as usize] = p.0[c] as f64 / 255.0;
        }
    }
    DenseTensor::new(vec![3, h, w], data)
}

/// Writes a magnitude map rescaled so its maximum is white.
pub fn write_heatmap_png(
    path: impl AsRef<Path>,
    values: &[f64],
    height: usize,
    width: usize,
) -> Result<()> {
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let scaled: Vec<f64> = if max > 0.0 {
        values.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; values.len()]
    };
    write_gray_png(path, &scaled, height, width)
}

/// Tiles up to `rows × cols` single-channel images (an `N × 1 × H × W` tensor
/// in `[0, 1]`) into one PNG with a one-pixel black border between tiles.
pub fn write_grid_png(
    path: impl AsRef<Path>,
    images: &DenseTensor<f64>,
    rows: usize,
    cols: usize,
) -> Result<()> {
    let (n, c, h, w) = images.dims4()?;
    if c != 1 {
        return Err(Error::shape(format!("grid expects 1 channel, got {c}")));
    }
    let gh = rows * (h + 1) + 1;
    let gw = cols * (w + 1) + 1;
    let mut canvas = vec![0.0; gh * gw];
    for i in 0..n.min(rows * cols) {
        let (r, col) = (i / cols, i % cols);
        let img = images.item(i);
        for y in 0..h {
            let dst = (1 + r * (h + 1) + y) * gw + 1 + col * (w + 1);
            canvas[dst..dst + w].copy_from_slice(&img[y * w..(y + 1) * w]);
        }
    }
    write_gray_png(path, &canvas, gh, gw)
}
