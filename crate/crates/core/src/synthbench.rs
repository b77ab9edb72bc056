//! Deterministic pristine/manipulated image pairs with exact masks.
//!
//! Each pair starts from a base image (a procedural texture or a file from a
//! user directory). The fake copies the base and blends in an elliptical
//! donor region with a feathered alpha, region-local Gaussian noise and a
//! small colour shift. The ground-truth mask is `alpha > 0.5`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io;
use crate::maskgen::BinaryMask;
use crate::resize;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::trainer::manifest::{write_manifest, Label, ManifestRecord, Quality, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpliceSpec {
    /// Directory of base images; procedural textures when unset.
    pub base_dir: Option<PathBuf>,
    /// Side length of generated images.
    pub size: usize,
    /// Pairs in the train split.
    pub count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub seed: u64,
    /// Largest offset of the ellipse centre from the image centre, as a
    /// fraction of the side.
    pub center_jitter: f64,
    /// Range of the semi-axes as fractions of the side.
    pub axis_min: f64,
    pub axis_max: f64,
    /// Width in pixels over which alpha ramps from 0 to 1.
    pub feather: f64,
    /// Standard deviation of the noise added inside the region.
    pub noise_sigma: f64,
    /// Largest per-channel colour offset inside the region.
    pub color_shift: f64,
}

impl Default for SpliceSpec {
    fn default() -> Self {
        SpliceSpec {
            base_dir: None,
            size: 64,
            count: 10,
            val_count: 0,
            test_count: 0,
            seed: 0,
            center_jitter: 0.08,
            axis_min: 0.24,
            axis_max: 0.38,
            feather: 2.0,
            noise_sigma: 12.0,
            color_shift: 12.0,
        }
    }
}

impl SpliceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.size < 16 {
            return bad(format!("image size {} is below 16", self.size));
        }
        if !(self.noise_sigma >= 0.0 && self.color_shift >= 0.0 && self.feather >= 0.0) {
            return bad("noise, colour shift and feather must be non-negative".into());
        }
        if !(self.axis_min > 0.0 && self.axis_min <= self.axis_max) {
            return bad(format!("axis range [{}, {}] is empty", self.axis_min, self.axis_max));
        }
        if self.center_jitter < 0.0 {
            return bad("center_jitter must be non-negative".into());
        }
        // Worst-case extent of the blended region, feather included.
        let s = self.size as f64;
        let reach = (self.center_jitter + self.axis_max) * s + self.feather / 2.0;
        if reach >= s / 2.0 {
            return bad(format!(
                "ellipse may leave the image: reach {reach:.1} px from centre vs half-side {:.1}",
                s / 2.0
            ));
        }
        Ok(())
    }

    pub fn total_pairs(&self) -> usize {
        self.count + self.val_count + self.test_count
    }

    fn split_of(&self, index: usize) -> Split {
        if index < self.count {
            Split::Train
        } else if index < self.count + self.val_count {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// One generated pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SplicePair<T> {
    pub real: Tensor<T>,
    pub fake: Tensor<T>,
    pub alpha: Tensor<T>,
    pub mask: BinaryMask<T>,
    pub label: Label,
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Smooth colour texture: oriented sinusoids over a gradient plus mild noise.
pub fn procedural_texture(rng: &mut ChaCha8Rng, size: usize) -> Tensor<f64> {
    let s = size as f64;
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(70.0..185.0));
    let grad: [(f64, f64); 3] = std::array::from_fn(|_| (rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)));
    let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..3)
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let freq = rng.random_range(1.0..5.0) * std::f64::consts::TAU / s;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp = std::array::from_fn(|_| rng.random_range(-25.0..25.0));
            (theta, freq, phase, amp)
        })
        .collect();
    let grain = Normal::new(0.0, 2.0).expect("valid normal");
    let mut t = Tensor::zeros(3, size, size);
    for y in 0..size {
        for x in 0..size {
            let (u, v) = (x as f64 / s - 0.5, y as f64 / s - 0.5);
            for c in 0..3 {
                let mut val = base[c] + grad[c].0 * u + grad[c].1 * v;
                for (theta, freq, phase, amp) in &waves {
                    let r = x as f64 * theta.cos() + y as f64 * theta.sin();
                    val += amp[c] * (freq * r + phase).sin();
                }
                val += grain.sample(rng);
                t.set(c, y, x, val);
            }
        }
    }
    t
}

fn quantize(t: &Tensor<f64>) -> Tensor<f64> {
    t.map(|v| v.round().clamp(0.0, 255.0))
}

fn list_base_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Empty(format!("no base images in {}", dir.display())));
    }
    Ok(files)
}

fn load_base(files: &[PathBuf], index: usize, size: usize) -> Result<Tensor<f64>> {
    let img = image_io::load_rgb::<f64>(&files[index % files.len()])?;
    Ok(if (img.height(), img.width()) == (size, size) {
        img
    } else {
        resize::resize(&img, size, size)
    })
}

/// Build pair `index` of `spec` in memory.
pub fn generate_pair<T: Scalar>(spec: &SpliceSpec, index: usize) -> Result<SplicePair<T>> {
    spec.validate()?;
    let files = spec.base_dir.as_deref().map(list_base_images).transpose()?;
    make_pair(spec, index, files.as_deref())
}

fn make_pair<T: Scalar>(spec: &SpliceSpec, index: usize, files: Option<&[PathBuf]>) -> Result<SplicePair<T>> {
    let size = spec.size;
    let s = size as f64;
    let mut rng = sample_rng(spec.seed, index);
    let (real, donor) = match files {
        Some(f) => {
            let donor_index = index + 1 + rng.random_range(0..f.len().max(2) - 1);
            (load_base(f, index, size)?, load_base(f, donor_index, size)?)
        }
        None => (procedural_texture(&mut rng, size), procedural_texture(&mut rng, size)),
    };
    let real = quantize(&real);

    let j = spec.center_jitter * s;
    let cx = s / 2.0 + rng.random_range(-j..=j);
    let cy = s / 2.0 + rng.random_range(-j..=j);
    let a = rng.random_range(spec.axis_min..=spec.axis_max) * s;
    let b = rng.random_range(spec.axis_min..=spec.axis_max) * s;
    let rot = rng.random_range(0.0..std::f64::consts::PI);
    let shift: [f64; 3] = std::array::from_fn(|_| rng.random_range(-spec.color_shift..=spec.color_shift));
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid normal");

    let (cr, sr) = (rot.cos(), rot.sin());
    let mut alpha = Tensor::zeros(1, size, size);
    let mut fake = real.clone();
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let (u, v) = (dx * cr + dy * sr, -dx * sr + dy * cr);
            let r = ((u / a).powi(2) + (v / b).powi(2)).sqrt();
            // approximate signed distance to the boundary, positive inside
            let d = (1.0 - r) * a.min(b);
            let al = if spec.feather > 0.0 {
                (0.5 + d / spec.feather).clamp(0.0, 1.0)
            } else if r < 1.0 {
                1.0
            } else {
                0.0
            };
            alpha.set(0, y, x, al);
            if al == 0.0 {
                continue;
            }
            for c in 0..3 {
                let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                let inside = donor.get(c, y, x) + shift[c] + n;
                let base = real.get(c, y, x);
                fake.set(c, y, x, base + al * (inside - base));
            }
        }
    }
    let fake = quantize(&fake);
    let mask = BinaryMask::new(alpha.map(|v| if v > 0.5 { 1.0 } else { 0.0 }).cast())?;
    let label = [Label::Df, Label::Ff, Label::Fs, Label::Nt][index % 4];
    Ok(SplicePair {
        real: real.cast(),
        fake: fake.cast(),
        alpha: alpha.cast(),
        mask,
        label,
    })
}

/// Write all pairs of `spec` under `out` and return the manifest records.
///
/// Layout: `images/{split}_{index}_{real|fake}.png`,
/// `masks/{split}_{index}_{real|fake}.png` and `manifest.jsonl`.
pub fn generate(spec: &SpliceSpec, out: &Path) -> Result<Vec<ManifestRecord>> {
    spec.validate()?;
    let files = spec.base_dir.as_deref().map(list_base_images).transpose()?;
    for sub in ["images", "masks"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let per_pair: Vec<[ManifestRecord; 2]> = (0..spec.total_pairs())
        .into_par_iter()
        .map(|i| {
            let pair = make_pair::<f64>(spec, i, files.as_deref())?;
            let split = spec.split_of(i);
            let tag = match split {
                Split::Train => "train",
                Split::Val => "val",
                Split::Test => "test",
            };
            let stem = format!("{tag}_{i:05}");
            let real_img = PathBuf::from(format!("images/{stem}_real.png"));
            let fake_img = PathBuf::from(format!("images/{stem}_fake.png"));
            let real_mask = PathBuf::from(format!("masks/{stem}_real.png"));
            let fake_mask = PathBuf::from(format!("masks/{stem}_fake.png"));
            image_io::save_rgb(&out.join(&real_img), &pair.real)?;
            image_io::save_rgb(&out.join(&fake_img), &pair.fake)?;
            image_io::save_unit_gray(&out.join(&real_mask), &Tensor::<f64>::zeros(1, spec.size, spec.size))?;
            image_io::save_unit_gray(&out.join(&fake_mask), pair.mask.values())?;
            Ok([
                ManifestRecord {
                    image_path: fake_img,
                    label: pair.label,
                    mask_path: Some(fake_mask),
                    pair_path: Some(real_img.clone()),
                    split,
                    quality: Quality::Hq,
                },
                ManifestRecord {
                    image_path: real_img,
                    label: Label::Real,
                    mask_path: Some(real_mask),
                    pair_path: None,
                    split,
                    quality: Quality::Hq,
                },
            ])
        })
        .collect::<Result<_>>()?;
    let records: Vec<ManifestRecord> = per_pair.into_iter().flatten().collect();
    write_manifest(&out.join("manifest.jsonl"), &records)?;
    Ok(records)
}
