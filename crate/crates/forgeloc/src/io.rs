//! Image and map file I/O.
//!
//! Formats:
//! - input images: PNG or JPEG, 8-bit, mapped to `[0,1]` by `v/255`;
//!   grayscale sources are replicated to three channels
//! - masks: single-channel 8-bit PNG with values `{0, 255}`
//! - probability maps: 16-bit single-channel PNG storing `round(p * 65535)`
//! - raw dumps: magic `EDGR`, little-endian `u32` width and height, then one
//!   or more planes of little-endian `f32` samples

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImageRgb, Plane, ProbMap};

const RAW_MAGIC: &[u8; 4] = b"EDGR";

/// Default luminance cutoff for [`load_mask`].
pub const DEFAULT_MASK_THRESHOLD: u8 = 127;

/// Loads a PNG or JPEG image as planar RGB in `[0, 1]`.
pub fn load_image(path: &Path) -> Result<ImageRgb> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::InvalidInput(format!(
            "zero-dimension image {}",
            path.display()
        )));
    }
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut planes = [
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
    ];
    for px in rgb.pixels() {
        for c in 0..3 {
            planes[c].push(px.0[c] as f32 / 255.0);
        }
    }
    let [r, g, b] = planes;
    ImageRgb::from_planes([
        Plane::from_vec(h, w, r)?,
        Plane::from_vec(h, w, g)?,
        Plane::from_vec(h, w, b)?,
    ])
}

/// Loads a mask raster: a pixel is foreground iff its luminance exceeds
/// `threshold`. Multi-channel inputs are converted via integer BT.601
/// luminance first.
pub fn load_mask(path: &Path, threshold: u8) -> Result<BinaryMask> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::InvalidInput(format!(
            "zero-dimension mask {}",
            path.display()
        )));
    }
    let cut = threshold as u32 * 1000;
    let mut mask = BinaryMask::zeros(h, w)?;
    for (x, y, px) in rgb.enumerate_pixels() {
        let milli_luma = 299 * px.0[0] as u32 + 587 * px.0[1] as u32 + 114 * px.0[2] as u32;
        if milli_luma > cut {
            mask.set(y as usize, x as usize, true);
        }
    }
    Ok(mask)
}

/// Writes a mask as an 8-bit grayscale PNG with values `{0, 255}`.
pub fn save_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(
        mask.width() as u32,
        mask.height() as u32,
        |x, y| Luma([mask.get(y as usize, x as usize) * 255]),
    );
    buf.save(path).map_err(|e| Error::image(path, e))
}

/// Writes a probability map as a 16-bit grayscale PNG, `round(p * 65535)`.
pub fn save_prob_png(map: &ProbMap, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(
        map.width() as u32,
        map.height() as u32,
        |x, y| Luma([quantize16(map.get(y as usize, x as usize))]),
    );
    buf.save(path).map_err(|e| Error::image(path, e))
}

#[inline]
pub(crate) fn quantize16(p: f32) -> u16 {
    (p as f64 * 65535.0).round().clamp(0.0, 65535.0) as u16
}

/// Reads a probability map from a grayscale PNG. 16-bit files decode as
/// `v/65535`, 8-bit files as `v/255`.
pub fn load_prob_png(path: &Path) -> Result<ProbMap> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    let plane = match img {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf.into_raw().iter().map(|&v| v as f32 / 65535.0).collect();
            Plane::from_vec(h, w, data)?
        }
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf.into_raw().iter().map(|&v| v as f32 / 255.0).collect();
            Plane::from_vec(h, w, data)?
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "{} is not a grayscale probability map (got {:?} color)",
                path.display(),
                other.color()
            )))
        }
    };
    Ok(ProbMap::new_unchecked(plane))
}

/// Strict 16-bit grayscale read used by the external scorer protocol.
pub(crate) fn load_prob_png16_strict(path: &Path) -> Result<ProbMap> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    match img {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf.into_raw().iter().map(|&v| v as f32 / 65535.0).collect();
            Ok(ProbMap::new_unchecked(Plane::from_vec(h, w, data)?))
        }
        _ => Err(Error::Protocol(format!(
            "{} must be a 16-bit grayscale PNG",
            path.display()
        ))),
    }
}

/// Writes an RGB image as a 16-bit PNG, `round(v * 65535)` per channel.
/// This is the request encoding of the external scorer protocol.
pub fn save_rgb16_png(img: &ImageRgb, path: &Path) -> Result<()> {
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_fn(
        img.width() as u32,
        img.height() as u32,
        |x, y| {
            let px = img.get(y as usize, x as usize);
            Rgb([quantize16(px[0]), quantize16(px[1]), quantize16(px[2])])
        },
    );
    buf.save(path).map_err(|e| Error::image(path, e))
}

/// Writes one or more planes as a raw little-endian float dump.
pub fn save_raw(planes: &[&Plane], path: &Path) -> Result<()> {
    let first = planes
        .first()
        .ok_or_else(|| Error::InvalidInput("raw dump needs at least one plane".into()))?;
    let (h, w) = (first.height(), first.width());
    for p in planes {
        if p.height() != h || p.width() != w {
            return Err(Error::DimMismatch("raw dump planes differ in size".into()));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    out.write_all(RAW_MAGIC).map_err(io_err)?;
    out.write_all(&(w as u32).to_le_bytes()).map_err(io_err)?;
    out.write_all(&(h as u32).to_le_bytes()).map_err(io_err)?;
    for p in planes {
        for v in p.data() {
            out.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

/// Reads a raw float dump; the plane count is inferred from the file size.
pub fn load_raw(path: &Path) -> Result<Vec<Plane>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = [0u8; 12];
    reader
        .read_exact(&mut header)
        .map_err(|e| Error::io(path, e))?;
    if &header[0..4] != RAW_MAGIC {
        return Err(Error::InvalidInput(format!(
            "{} is not a raw float dump (bad magic)",
            path.display()
        )));
    }
    let w = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    if w == 0 || h == 0 {
        return Err(Error::InvalidInput("raw dump has zero dimensions".into()));
    }
    let mut body = Vec::new();
    reader
        .read_to_end(&mut body)
        .map_err(|e| Error::io(path, e))?;
    let plane_bytes = w * h * 4;
    if plane_bytes == 0 || body.len() % plane_bytes != 0 || body.is_empty() {
        return Err(Error::InvalidInput(format!(
            "raw dump body of {} bytes is not a whole number of {}x{} planes",
            body.len(),
            h,
            w
        )));
    }
    let mut planes = Vec::with_capacity(body.len() / plane_bytes);
    for chunk in body.chunks_exact(plane_bytes) {
        let data: Vec<f32> = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("raw dump holds non-finite samples".into()));
        }
        planes.push(Plane::from_vec(h, w, data)?);
    }
    Ok(planes)
}
