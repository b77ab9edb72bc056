//! PNG and raw-array persistence.
//!
//! Raw arrays are little-endian `f32` in channel-major order, paired with a
//! JSON sidecar describing the shape.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Shape record written next to every raw array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySidecar {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// AWGN standard deviation used when the array is a noise residual.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Load any PNG as a 3-channel image on the 0–255 scale.
pub fn load_rgb<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    let (w, h) = (w as usize, h as usize);
    Ok(Tensor::from_fn(3, h, w, |c, y, x| {
        T::lit(img.get_pixel(x as u32, y as u32)[c] as f64)
    }))
}

/// Load a PNG as one channel on the 0–255 scale.
pub fn load_gray<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    Ok(Tensor::from_fn(1, h as usize, w as usize, |_, y, x| {
        T::lit(img.get_pixel(x as u32, y as u32)[0] as f64)
    }))
}

fn to_u8<T: Scalar>(v: T) -> u8 {
    v.as_f64().round().clamp(0.0, 255.0) as u8
}

/// Save a 3-channel 0–255 image as an 8-bit RGB PNG.
pub fn save_rgb<T: Scalar>(path: &Path, img: &Tensor<T>) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::Shape(format!(
            "RGB export needs 3 channels, got {}",
            img.channels()
        )));
    }
    let mut out = RgbImage::new(img.width() as u32, img.height() as u32);
    for (x, y, px) in out.enumerate_pixels_mut() {
        let (x, y) = (x as usize, y as usize);
        *px = Rgb([
            to_u8(img.get(0, y, x)),
            to_u8(img.get(1, y, x)),
            to_u8(img.get(2, y, x)),
        ]);
    }
    out.save(path).map_err(|e| image_err(path, e))
}

/// Save a single-channel map with values in [0, 1] as `round(255·p)`.
pub fn save_unit_gray<T: Scalar>(path: &Path, map: &Tensor<T>) -> Result<()> {
    if map.channels() != 1 {
        return Err(Error::Shape(format!(
            "grayscale export needs 1 channel, got {}",
            map.channels()
        )));
    }
    let mut out = GrayImage::new(map.width() as u32, map.height() as u32);
    for (x, y, px) in out.enumerate_pixels_mut() {
        let p = map.get(0, y as usize, x as usize).as_f64().clamp(0.0, 1.0);
        *px = Luma([(255.0 * p).round() as u8]);
    }
    out.save(path).map_err(|e| image_err(path, e))
}

fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

/// Write `<stem>.f32` plus `<stem>.json`. `raw` must carry the `.f32` extension.
pub fn write_raw<T: Scalar>(raw: &Path, array: &Tensor<T>, sigma: Option<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(array.len() * 4);
    for v in array.as_slice() {
        bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    fs::write(raw, bytes).map_err(|e| Error::io(raw, e))?;
    let sidecar = ArraySidecar {
        height: array.height(),
        width: array.width(),
        channels: array.channels(),
        sigma,
    };
    let side = sidecar_path(raw);
    fs::write(&side, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(side, e))
}

/// Read an array written by [`write_raw`].
pub fn read_raw<T: Scalar>(raw: &Path) -> Result<(Tensor<T>, ArraySidecar)> {
    let side = sidecar_path(raw);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: ArraySidecar = serde_json::from_str(&text)?;
    let bytes = fs::read(raw).map_err(|e| Error::io(raw, e))?;
    let n = sidecar.channels * sidecar.height * sidecar.width;
    if bytes.len() != n * 4 {
        return Err(Error::Shape(format!(
            "{}: expected {} bytes, found {}",
            raw.display(),
            n * 4,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
        .collect();
    let t = Tensor::from_vec(sidecar.channels, sidecar.height, sidecar.width, data)?;
    Ok((t, sidecar))
}
