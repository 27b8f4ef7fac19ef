//! 8-bit RGB image files: binary PPM (P6) handled here directly, PNG via
//! the `image` crate. Pixels map to floats as `byte / 255` and back as
//! `round(clamp01(v) · 255)`.

use std::fs;
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::tensor::Tensor;

const PNG_MAGIC: &[u8; 8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Png,
}

impl ImageFormat {
    /// Detects the container from its leading bytes.
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(PNG_MAGIC) {
            Some(Self::Png)
        } else if bytes.starts_with(b"P6") {
            Some(Self::Ppm)
        } else {
            None
        }
    }

    /// Chooses the output container from a file extension; anything other
    /// than `.png` is written as PPM.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") => Self::Png,
            _ => Self::Ppm,
        }
    }
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Packs an interleaved RGB byte buffer into a `1×3×H×W` tensor.
pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Tensor> {
    if rgb.len() != width * height * 3 {
        return Err(Error::Shape(format!(
            "{} bytes for a {width}x{height} RGB image",
            rgb.len()
        )));
    }
    Tensor::from_fn([1, 3, height, width], |_, c, y, x| rgb[(y * width + x) * 3 + c] as f32 / 255.0)
}

/// Interleaved RGB bytes of the first image in the batch.
pub fn to_rgb8(image: &Tensor) -> Result<Vec<u8>> {
    image.ensure_rgb("image export")?;
    let (r, g, b) = (image.plane(0, 0), image.plane(0, 1), image.plane(0, 2));
    let mut out = Vec::with_capacity(r.len() * 3);
    for i in 0..r.len() {
        out.extend([to_byte(r[i]), to_byte(g[i]), to_byte(b[i])]);
    }
    Ok(out)
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn ppm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(FormatError::Truncated("ppm header".into()).into());
    }
    Ok(&bytes[start..*pos])
}

fn ppm_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let token = ppm_token(bytes, pos)?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| FormatError::Image(format!("ppm {what} is not a number")).into())
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    if ppm_token(bytes, &mut pos)? != b"P6" {
        return Err(FormatError::BadMagic { expected: "P6" }.into());
    }
    let width = ppm_number(bytes, &mut pos, "width")?;
    let height = ppm_number(bytes, &mut pos, "height")?;
    let maxval = ppm_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(FormatError::Image(format!("ppm maxval {maxval} unsupported, only 255")).into());
    }
    if width == 0 || height == 0 {
        return Err(FormatError::Image(format!("empty ppm image {width}x{height}")).into());
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(FormatError::Truncated("ppm header".into()).into());
    }
    pos += 1;
    let need = width * height * 3;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(FormatError::Truncated(format!("ppm raster has {} of {need} bytes", raster.len())).into());
    }
    from_rgb8(width, height, &raster[..need])
}

pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let rgb = to_rgb8(image)?;
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(rgb);
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<Tensor> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| FormatError::Image(e.to_string()))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    from_rgb8(w as usize, h as usize, img.as_raw())
}

pub fn encode_png(image: &Tensor) -> Result<Vec<u8>> {
    let rgb = to_rgb8(image)?;
    let (w, h) = (image.width() as u32, image.height() as u32);
    let buffer = image::RgbImage::from_raw(w, h, rgb)
        .ok_or_else(|| FormatError::Image("buffer size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buffer
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| FormatError::Image(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn decode_image(bytes: &[u8]) -> Result<Tensor> {
    match ImageFormat::sniff(bytes) {
        Some(ImageFormat::Png) => decode_png(bytes),
        Some(ImageFormat::Ppm) => decode_ppm(bytes),
        None => Err(FormatError::Image("unrecognized image format (expected PNG or P6 PPM)".into()).into()),
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Writes PNG for a `.png` extension and PPM otherwise.
pub fn write_image(image: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match ImageFormat::from_path(path) {
        ImageFormat::Png => encode_png(image)?,
        ImageFormat::Ppm => encode_ppm(image)?,
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
