//! PGM, 8-bit PNG and PFM readers and writers.
//!
//! PFM rows are stored bottom-to-top; the sign of the scale field selects
//! the byte order (negative = little endian).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    /// Binary PGM (P5).
    Pgm,
    /// 8-bit grayscale PNG.
    Png8,
    /// Single-channel PFM (Pf).
    Pfm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("pgm") => Ok(Self::Pgm),
            Some("png") => Ok(Self::Png8),
            Some("pfm") => Ok(Self::Pfm),
            _ => Err(Error::Config(format!(
                "cannot infer image format from {}",
                path.display()
            ))),
        }
    }
}

pub fn load_image(path: impl AsRef<Path>, format: ImageFormat) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        ImageFormat::Pgm => decode_pgm(&bytes),
        ImageFormat::Png8 => decode_png8(&bytes),
        ImageFormat::Pfm => {
            let raw = decode_pfm(&bytes)?;
            let data = raw.data.iter().map(|&v| v as f64).collect::<Vec<_>>();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::format("PFM", "image contains non-finite values"));
            }
            GrayImage::new(raw.width, raw.height, data)
        }
    }
}

/// Loads an image, picking the format from the file extension.
pub fn load_image_auto(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    load_image(path, ImageFormat::from_path(path)?)
}

/// Writes `img`. 8-bit formats clamp to [0, 1] and round; PFM stores f32.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        ImageFormat::Pgm => encode_pgm(img),
        ImageFormat::Png8 => encode_png8(img)?,
        ImageFormat::Pfm => encode_pfm(&PfmImage {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|&v| v as f32).collect(),
        }),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_image_auto(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    save_image(img, path, ImageFormat::from_path(path)?)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Raw single-channel float raster, top row first. May contain non-finite
/// values (disparity maps use +inf for invalid pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> HeaderReader<'a> {
    fn token(&mut self, allow_comments: bool) -> Result<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if allow_comments && self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(self.format, "truncated header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::format(self.format, "header is not ASCII"))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str, allow_comments: bool) -> Result<T> {
        let tok = self.token(allow_comments)?;
        tok.parse()
            .map_err(|_| Error::format(self.format, format!("bad {what} {tok:?}")))
    }

    /// Consumes the single whitespace byte that ends the header.
    fn end_header(&mut self) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(&self.bytes[self.pos + 1..]),
            _ => Err(Error::format(self.format, "missing data section")),
        }
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut r = HeaderReader {
        bytes,
        pos: 0,
        format: "PGM",
    };
    if r.token(false)? != "P5" {
        return Err(Error::format("PGM", "expected P5 magic"));
    }
    let width: usize = r.number("width", true)?;
    let height: usize = r.number("height", true)?;
    let maxval: u32 = r.number("maxval", true)?;
    if width == 0 || height == 0 {
        return Err(Error::format("PGM", "zero dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(
            "PGM",
            format!("maxval {maxval} out of range"),
        ));
    }
    let body = r.end_header()?;
    let n = width * height;
    let scale = maxval as f64;
    let data: Vec<f64> = if maxval < 256 {
        if body.len() < n {
            return Err(Error::format(
                "PGM",
                "pixel data shorter than width x height",
            ));
        }
        body[..n].iter().map(|&b| b as f64 / scale).collect()
    } else {
        if body.len() < 2 * n {
            return Err(Error::format(
                "PGM",
                "pixel data shorter than width x height",
            ));
        }
        body[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    GrayImage::new(width, height, data)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| to_u8(v)));
    out
}

fn decode_png8(bytes: &[u8]) -> Result<GrayImage> {
    let dynimg = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::format("PNG", e.to_string()))?;
    let luma = match dynimg {
        image::DynamicImage::ImageLuma8(l) => l,
        other => {
            return Err(Error::format(
                "PNG",
                format!("expected 8-bit grayscale, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = luma.dimensions();
    GrayImage::new(
        w as usize,
        h as usize,
        luma.into_raw()
            .into_iter()
            .map(|b| b as f64 / 255.0)
            .collect(),
    )
}

fn encode_png8(img: &GrayImage) -> Result<Vec<u8>> {
    let buf = image::GrayImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.data().iter().map(|&v| to_u8(v)).collect(),
    )
    .expect("buffer matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::format("PNG", e.to_string()))?;
    Ok(out.into_inner())
}

pub fn decode_pfm(bytes: &[u8]) -> Result<PfmImage> {
    let mut r = HeaderReader {
        bytes,
        pos: 0,
        format: "PFM",
    };
    match r.token(false)? {
        "Pf" => {}
        "PF" => return Err(Error::format("PFM", "color PFM is not supported")),
        other => return Err(Error::format("PFM", format!("bad magic {other:?}"))),
    }
    let width: usize = r.number("width", false)?;
    let height: usize = r.number("height", false)?;
    let scale: f64 = r.number("scale", false)?;
    if width == 0 || height == 0 {
        return Err(Error::format("PFM", "zero dimension"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format("PFM", "scale must be a non-zero number"));
    }
    let body = r.end_header()?;
    let n = width * height;
    if body.len() < 4 * n {
        return Err(Error::format(
            "PFM",
            "pixel data shorter than width x height",
        ));
    }
    let little = scale < 0.0;
    let mut data = vec![0f32; n];
    for (i, c) in body[..4 * n].chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        // File rows run bottom to top.
        let (fy, x) = (i / width, i % width);
        data[(height - 1 - fy) * width + x] = v;
    }
    Ok(PfmImage {
        width,
        height,
        data,
    })
}

/// Little-endian PFM (scale -1).
pub fn encode_pfm(img: &PfmImage) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1\n", img.width, img.height).into_bytes();
    out.reserve(4 * img.data.len());
    for y in (0..img.height).rev() {
        for v in &img.data[y * img.width..(y + 1) * img.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PfmImage> {
    let path = path.as_ref();
    decode_pfm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_pfm(img: &PfmImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(img)).map_err(|e| Error::io(path, e))
}

/// 16-bit grayscale PNG, top row first.
pub fn read_png16(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u16>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let dynimg = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::format("PNG", e.to_string()))?;
    let l = match dynimg {
        image::DynamicImage::ImageLuma16(l) => l,
        image::DynamicImage::ImageLuma8(l) => {
            let (w, h) = l.dimensions();
            let data = l.into_raw().into_iter().map(u16::from).collect();
            return Ok((w as usize, h as usize, data));
        }
        other => {
            return Err(Error::format(
                "PNG",
                format!("expected grayscale, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = l.dimensions();
    Ok((w as usize, h as usize, l.into_raw()))
}

pub fn write_png16(
    width: usize,
    height: usize,
    data: Vec<u16>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let buf =
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(width as u32, height as u32, data)
            .ok_or_else(|| Error::Dimension("PNG buffer does not match dimensions".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::format("PNG", other.to_string()),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_scales_by_255() {
        let mut bytes = b"P5\n# comment\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn pgm_rejects_short_data_and_bad_magic() {
        let mut bytes = b"P5 3 3 255\n".to_vec();
        bytes.extend_from_slice(&[0; 5]);
        assert!(matches!(decode_pgm(&bytes), Err(Error::Format { .. })));
        assert!(matches!(
            decode_pgm(b"P2 1 1 255\n0"),
            Err(Error::Format { .. })
        ));
        assert!(matches!(decode_pgm(b"P5 1"), Err(Error::Format { .. })));
    }

    #[test]
    fn pfm_single_value() {
        let mut bytes = b"Pf\n1 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&3.25f32.to_le_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().data, vec![3.25]);

        let mut big = b"Pf\n1 1\n1.0\n".to_vec();
        big.extend_from_slice(&3.25f32.to_be_bytes());
        assert_eq!(decode_pfm(&big).unwrap().data, vec![3.25]);
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let mut bytes = b"Pf\n1 2\n-1\n".to_vec();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        // First stored row is the bottom one.
        assert_eq!(decode_pfm(&bytes).unwrap().data, vec![2.0, 1.0]);
    }

    #[test]
    fn pfm_rejects_color_and_truncation() {
        assert!(decode_pfm(b"PF\n1 1\n-1\n\0\0\0\0\0\0\0\0\0\0\0\0").is_err());
        assert!(decode_pfm(b"Pf\n2 2\n-1\n\0\0\0\0").is_err());
        assert!(decode_pfm(b"Pf\n2 2\n0\n").is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_image("/nonexistent/x.pgm", ImageFormat::Pgm).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(
            ImageFormat::from_path(Path::new("a/b.PFM")).unwrap(),
            ImageFormat::Pfm
        );
        assert!(ImageFormat::from_path(Path::new("a/b.jpg")).is_err());
    }
}
