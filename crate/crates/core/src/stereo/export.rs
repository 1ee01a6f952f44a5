use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DisparityMap;
use crate::error::{Error, Result};
use crate::image::{read_pfm, read_png16, write_pfm, write_png16, PfmImage};

/// On-disk disparity encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DisparityFormat {
    /// 32-bit float, +inf for invalid pixels.
    Pfm,
    /// 16-bit PNG holding `round(256 d)`, 0 for invalid pixels.
    KittiPng,
}

impl DisparityFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("pfm") => Ok(Self::Pfm),
            Some("png") => Ok(Self::KittiPng),
            _ => Err(Error::Config(format!(
                "cannot infer a disparity format from {}; use .pfm or .png",
                path.display()
            ))),
        }
    }
}

impl DisparityMap {
    pub fn to_pfm(&self) -> PfmImage {
        PfmImage {
            width: self.width,
            height: self.height,
            data: self
                .values
                .iter()
                .map(|&v| if v.is_nan() { f32::INFINITY } else { v as f32 })
                .collect(),
        }
    }

    /// Non-finite entries become invalid.
    pub fn from_pfm(img: &PfmImage) -> Self {
        let values = img
            .data
            .iter()
            .map(|&v| if v.is_finite() { v as f64 } else { f64::NAN })
            .collect();
        Self {
            width: img.width,
            height: img.height,
            values,
        }
    }

    /// KITTI encoding. Negative disparities cannot be represented and are
    /// rejected; values round to the nearest 1/256 and saturate at 65535.
    pub fn to_kitti(&self) -> Result<Vec<u16>> {
        self.values
            .iter()
            .map(|&v| {
                if v.is_nan() {
                    Ok(0)
                } else if v < 0.0 {
                    Err(Error::Param(format!(
                        "negative disparity {v} has no KITTI encoding"
                    )))
                } else {
                    // A valid zero disparity still needs a nonzero code.
                    Ok((v * 256.0).round().clamp(1.0, 65535.0) as u16)
                }
            })
            .collect()
    }

    pub fn from_kitti(width: usize, height: usize, codes: &[u16]) -> Result<Self> {
        let values = codes
            .iter()
            .map(|&c| if c == 0 { f64::NAN } else { c as f64 / 256.0 })
            .collect();
        Self::new(width, height, values)
    }

    pub fn save(&self, path: impl AsRef<Path>, format: DisparityFormat) -> Result<()> {
        let path = path.as_ref();
        match format {
            DisparityFormat::Pfm => write_pfm(&self.to_pfm(), path),
            DisparityFormat::KittiPng => {
                write_png16(self.width, self.height, self.to_kitti()?, path)
            }
        }
    }

    pub fn save_auto(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.save(path, DisparityFormat::from_path(path)?)
    }
}

/// Reads a disparity map (ground truth or estimate), picking the encoding
/// from the extension.
pub fn read_disparity(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let path = path.as_ref();
    match DisparityFormat::from_path(path)? {
        DisparityFormat::Pfm => Ok(DisparityMap::from_pfm(&read_pfm(path)?)),
        DisparityFormat::KittiPng => {
            let (w, h, codes) = read_png16(path)?;
            DisparityMap::from_kitti(w, h, &codes)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DisparityMap {
        DisparityMap::new(3, 2, vec![0.0, 1.5, f64::NAN, 7.0, 12.25, 3.0]).unwrap()
    }

    #[test]
    fn pfm_round_trip_marks_invalid_as_inf() {
        let map = sample();
        let pfm = map.to_pfm();
        assert_eq!(pfm.data[2], f32::INFINITY);
        assert_eq!(DisparityMap::from_pfm(&pfm), map);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        map.save_auto(&path).unwrap();
        assert_eq!(read_disparity(&path).unwrap(), map);
    }

    #[test]
    fn kitti_codes() {
        let map = sample();
        let codes = map.to_kitti().unwrap();
        assert_eq!(codes, vec![1, 384, 0, 1792, 3136, 768]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        map.save_auto(&path).unwrap();
        let back = read_disparity(&path).unwrap();
        assert!(!back.is_valid(2, 0));
        assert_eq!(back.get(1, 1), Some(12.25));
        assert!(DisparityMap::new(1, 1, vec![-1.0])
            .unwrap()
            .to_kitti()
            .is_err());
    }
}
