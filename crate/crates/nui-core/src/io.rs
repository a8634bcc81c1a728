//! Image decoding and encoding: PNG, plus binary PPM/PGM as a
//! dependency-light interchange fallback. Only 8-bit grayscale and RGB
//! images are accepted; alpha channels are rejected outright.

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, ExtendedColorType, ImageEncoder};

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};

/// File extensions recognized as images by the dataset loaders.
pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "ppm", "pgm"];

/// Decodes PNG/PPM/PGM bytes into an [`ImageBuffer`].
pub fn decode(bytes: &[u8], origin: Option<&Path>) -> Result<ImageBuffer> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Image {
        path: origin.map(PathBuf::from),
        message: e.to_string(),
    })?;
    match img.color() {
        ColorType::L8 => {
            let gray = img.into_luma8();
            ImageBuffer::new(gray.width(), gray.height(), 1, gray.into_raw())
        }
        ColorType::Rgb8 => {
            let rgb = img.into_rgb8();
            ImageBuffer::new(rgb.width(), rgb.height(), 3, rgb.into_raw())
        }
        ColorType::La8 | ColorType::Rgba8 | ColorType::La16 | ColorType::Rgba16 => {
            Err(Error::Image {
                path: origin.map(PathBuf::from),
                message: "alpha channels are not supported; strip the alpha plane first"
                    .to_string(),
            })
        }
        other => Err(Error::Image {
            path: origin.map(PathBuf::from),
            message: format!("unsupported color type {other:?}; expected 8-bit gray or RGB"),
        }),
    }
}

/// Loads an image file.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, Some(path))
}

/// Encodes as PNG (grayscale or RGB depending on the buffer).
pub fn encode_png(image: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new(&mut out);
    let color = if image.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    encoder
        .write_image(image.pixels(), image.width(), image.height(), color)
        .map_err(|e| Error::Image {
            path: None,
            message: e.to_string(),
        })?;
    Ok(out)
}

/// Encodes as binary PNM: P5 for grayscale, P6 for RGB.
pub fn encode_pnm(image: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let subtype = if image.channels() == 1 {
        PnmSubtype::Graymap(SampleEncoding::Binary)
    } else {
        PnmSubtype::Pixmap(SampleEncoding::Binary)
    };
    let encoder = PnmEncoder::new(&mut out).with_subtype(subtype);
    let color = if image.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    encoder
        .write_image(image.pixels(), image.width(), image.height(), color)
        .map_err(|e| Error::Image {
            path: None,
            message: e.to_string(),
        })?;
    Ok(out)
}

/// Writes an image, choosing the codec from the file extension
/// (`.ppm`/`.pgm` for PNM, PNG otherwise).
pub fn save_image(path: &Path, image: &ImageBuffer) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let bytes = match ext.as_deref() {
        Some("ppm") | Some("pgm") => encode_pnm(image)?,
        _ => encode_png(image)?,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Encodes an 8-bit grayscale byte plane as PNG; used for mask exports.
pub fn encode_gray_png(width: u32, height: u32, bytes: &[u8]) -> Result<Vec<u8>> {
    let buf = ImageBuffer::new(width, height, 1, bytes.to_vec())?;
    encode_png(&buf)
}

/// Recursively lists image files under `dir`, sorted for determinism.
pub fn list_image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    collect_images(dir, &mut files)?;
    files.sort();
    Ok(files)
}

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_images(&path, out)?;
        } else if is_image_path(&path) {
            out.push(path);
        }
    }
    Ok(())
}

pub(crate) fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| {
            let e = e.to_ascii_lowercase();
            IMAGE_EXTENSIONS.contains(&e.as_str())
        })
        .unwrap_or(false)
}
