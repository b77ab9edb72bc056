//! JSON-lines sample manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Df,
    Ff,
    Fs,
    Nt,
}

impl Label {
    pub const ALL: [Label; 5] = [Label::Real, Label::Df, Label::Ff, Label::Fs, Label::Nt];

    pub fn is_fake(self) -> bool {
        self != Label::Real
    }

    /// Class index under a 2- or 5-way head.
    pub fn class_index(self, num_classes: usize) -> usize {
        if num_classes == 2 {
            usize::from(self.is_fake())
        } else {
            Label::ALL.iter().position(|&l| l == self).expect("listed")
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Df => "df",
            Label::Ff => "ff",
            Label::Fs => "fs",
            Label::Nt => "nt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    #[default]
    Hq,
    Lq,
}

impl Quality {
    /// Noise level assumed by the wavelet filter for this compression level.
    pub fn sigma(self) -> f64 {
        match self {
            Quality::Hq => crate::residual::SIGMA_HQ,
            Quality::Lq => crate::residual::SIGMA_LQ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub image_path: PathBuf,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_path: Option<PathBuf>,
    pub split: Split,
    #[serde(default)]
    pub quality: Quality,
}

impl ManifestRecord {
    fn resolve(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.image_path);
        if let Some(p) = self.mask_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.pair_path.as_mut() {
            fix(p);
        }
        self
    }
}

/// Parse manifest text; relative paths are resolved against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if rec.label == Label::Real && rec.mask_path.is_some() && rec.pair_path.is_some() {
            return Err(Error::Manifest {
                line: i + 1,
                msg: "real sample cannot carry both mask_path and pair_path".into(),
            });
        }
        out.push(rec.resolve(base));
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}
