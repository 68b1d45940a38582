//! PNG (8-bit gray or RGB) and ASCII PPM/PGM reading and writing.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::raster::Raster;

fn decode_err(path: &Path, reason: impl ToString) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Loads a PNG or ASCII PPM/PGM, picking the decoder from the extension.
pub fn load_image(path: &Path) -> Result<Raster> {
    match extension(path).as_deref() {
        Some("ppm") | Some("pgm") | Some("pnm") => load_pnm(path),
        _ => load_png(path),
    }
}

pub fn save_image(raster: &Raster, path: &Path) -> Result<()> {
    match extension(path).as_deref() {
        Some("ppm") | Some("pgm") | Some("pnm") => save_pnm(raster, path),
        _ => save_png(raster, path),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

pub fn load_png(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let decoded = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| decode_err(path, e))?;
    let gray = matches!(
        decoded,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
    );
    if gray {
        let img = decoded.into_luma8();
        Raster::from_u8(img.height() as usize, img.width() as usize, 1, img.as_raw())
    } else {
        let img = decoded.into_rgb8();
        Raster::from_u8(img.height() as usize, img.width() as usize, 3, img.as_raw())
    }
}

pub fn save_png(raster: &Raster, path: &Path) -> Result<()> {
    let bytes = raster.to_u8();
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let img = if raster.channels() == 1 {
        DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(w, h, bytes).expect("buffer sized from raster"),
        )
    } else {
        DynamicImage::ImageRgb8(
            image::RgbImage::from_raw(w, h, bytes).expect("buffer sized from raster"),
        )
    };
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::io(format!("writing {}", path.display()), std::io::Error::other(e)))
}

/// ASCII `P3` (RGB) or `P2` (gray) with any maxval up to 65535.
pub fn load_pnm(path: &Path) -> Result<Raster> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let magic = tokens.next().ok_or_else(|| decode_err(path, "empty file"))?;
    let channels = match magic {
        "P3" => 3,
        "P2" => 1,
        other => return Err(decode_err(path, format!("unsupported magic {other}"))),
    };
    let mut number = |what: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| decode_err(path, format!("missing {what}")))?
            .parse::<usize>()
            .map_err(|e| decode_err(path, format!("bad {what}: {e}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(decode_err(path, format!("maxval {maxval} out of range")));
    }
    let mut data = Vec::with_capacity(width * height * channels);
    for _ in 0..width * height * channels {
        let v = number("sample")?;
        if v > maxval {
            return Err(decode_err(path, format!("sample {v} exceeds maxval")));
        }
        data.push(v as f32 / maxval as f32);
    }
    Raster::from_vec(height, width, channels, data)
}

pub fn save_pnm(raster: &Raster, path: &Path) -> Result<()> {
    let magic = if raster.channels() == 1 { "P2" } else { "P3" };
    let mut out = format!("{magic}\n{} {}\n255\n", raster.width(), raster.height());
    let row_len = raster.width() * raster.channels();
    for row in raster.to_u8().chunks(row_len.max(1)) {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
