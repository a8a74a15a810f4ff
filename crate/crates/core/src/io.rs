//! File formats: PFM depth maps, PNG/PPM images, camera and sparse-depth
//! text files, and the raw cost-volume dump. All writers go through a
//! write-temp-then-rename so partially written files never appear.

use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::process;
use std::sync::atomic::{AtomicU64, Ordering};

use image::{DynamicImage, ImageFormat};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::costvolume::{CostVolume, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::estimation::{SparseDepth, SparseObservation};
use crate::geometry::CameraModel;
use crate::image::{DepthMap, ImageBuffer};

/// Output quantization for image writers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes the full contents to a sibling temp file, then renames into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("path {path:?} has no file name")))?
        .to_string_lossy()
        .into_owned();
    let tmp = path.with_file_name(format!(
        ".{name}.tmp-{}-{}",
        process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// PFM depth maps
// ---------------------------------------------------------------------------

/// Serializes a depth map as grayscale PFM: header `Pf\n{w} {h}\n-1.0\n`,
/// then little-endian f32 samples in bottom-up row order. Invalid pixels are
/// stored as NaN.
pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    let mut bytes = format!("Pf\n{} {}\n-1.0\n", depth.width(), depth.height()).into_bytes();
    bytes.reserve(depth.width() * depth.height() * 4);
    for v in (0..depth.height()).rev() {
        for u in 0..depth.width() {
            let value = depth.get_valid(u, v).map_or(f32::NAN, |z| z as f32);
            bytes.extend_from_slice(&value.to_le_bytes());
        }
    }
    atomic_write(path, &bytes)
}

fn is_pfm_whitespace(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r')
}

fn pfm_token<'a>(bytes: &'a [u8], cursor: &mut usize) -> Result<&'a [u8]> {
    while *cursor < bytes.len() && is_pfm_whitespace(bytes[*cursor]) {
        *cursor += 1;
    }
    let start = *cursor;
    while *cursor < bytes.len() && !is_pfm_whitespace(bytes[*cursor]) {
        *cursor += 1;
    }
    if start == *cursor {
        return Err(Error::format("truncated PFM header"));
    }
    Ok(&bytes[start..*cursor])
}

/// Reads a grayscale PFM file. Negative scale means little-endian samples,
/// positive means big-endian; NaN samples mark invalid pixels.
pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = fs::read(path)?;
    let mut cursor = 0usize;
    let magic = pfm_token(&bytes, &mut cursor)?;
    match magic {
        b"Pf" => {}
        b"PF" => return Err(Error::format("color PFM is not supported, expected grayscale 'Pf'")),
        other => {
            return Err(Error::format(format!(
                "bad PFM magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    }
    let parse_dim = |tok: &[u8]| -> Result<usize> {
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::format("bad PFM dimension"))
    };
    let width = parse_dim(pfm_token(&bytes, &mut cursor)?)?;
    let height = parse_dim(pfm_token(&bytes, &mut cursor)?)?;
    let scale: f64 = std::str::from_utf8(pfm_token(&bytes, &mut cursor)?)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("bad PFM scale"))?;
    if scale == 0.0 {
        return Err(Error::format("PFM scale must be non-zero"));
    }
    // Exactly one whitespace byte separates the header from the samples.
    if cursor >= bytes.len() || !is_pfm_whitespace(bytes[cursor]) {
        return Err(Error::format("missing separator before PFM samples"));
    }
    cursor += 1;
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format("PFM dimensions overflow"))?;
    let data = &bytes[cursor..];
    if data.len() != count {
        return Err(Error::format(format!(
            "PFM payload is {} bytes, expected {count}",
            data.len()
        )));
    }
    let little_endian = scale < 0.0;
    let mut map = DepthMap::new_invalid(width, height);
    let mut offset = 0usize;
    for v in (0..height).rev() {
        for u in 0..width {
            let raw: [u8; 4] = data[offset..offset + 4].try_into().unwrap();
            let value = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            offset += 4;
            if value.is_nan() {
                map.invalidate(u, v);
            } else {
                map.set(u, v, value as f64);
            }
        }
    }
    Ok(map)
}

// ---------------------------------------------------------------------------
// PNG / PPM images
// ---------------------------------------------------------------------------

fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn quantize_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Writes an RGB image as PNG or binary PPM depending on the extension, with
/// channels quantized linearly to the requested bit depth.
pub fn write_image(path: &Path, img: &ImageBuffer, bit_depth: BitDepth) -> Result<()> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "png" => write_png(path, img, bit_depth),
        "ppm" => write_ppm(path, img, bit_depth),
        other => Err(Error::format(format!("unsupported image extension '{other}'"))),
    }
}

fn write_png(path: &Path, img: &ImageBuffer, bit_depth: BitDepth) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynamic = match bit_depth {
        BitDepth::Eight => {
            let mut out = image::RgbImage::new(w, h);
            for (pixel, src) in out.pixels_mut().zip(img.pixels()) {
                *pixel = image::Rgb([quantize_u8(src[0]), quantize_u8(src[1]), quantize_u8(src[2])]);
            }
            DynamicImage::ImageRgb8(out)
        }
        BitDepth::Sixteen => {
            let mut out: image::ImageBuffer<image::Rgb<u16>, Vec<u16>> = image::ImageBuffer::new(w, h);
            for (pixel, src) in out.pixels_mut().zip(img.pixels()) {
                *pixel = image::Rgb([
                    quantize_u16(src[0]),
                    quantize_u16(src[1]),
                    quantize_u16(src[2]),
                ]);
            }
            DynamicImage::ImageRgb16(out)
        }
    };
    let mut bytes = Cursor::new(Vec::new());
    dynamic
        .write_to(&mut bytes, ImageFormat::Png)
        .map_err(|e| Error::format(format!("PNG encode: {e}")))?;
    atomic_write(path, &bytes.into_inner())
}

fn write_ppm(path: &Path, img: &ImageBuffer, bit_depth: BitDepth) -> Result<()> {
    let maxval: u32 = match bit_depth {
        BitDepth::Eight => 255,
        BitDepth::Sixteen => 65535,
    };
    let mut bytes = format!("P6\n{} {}\n{}\n", img.width(), img.height(), maxval).into_bytes();
    for px in img.pixels() {
        for &c in px {
            match bit_depth {
                BitDepth::Eight => bytes.push(quantize_u8(c)),
                // 16-bit PPM samples are big-endian.
                BitDepth::Sixteen => bytes.extend_from_slice(&quantize_u16(c).to_be_bytes()),
            }
        }
    }
    atomic_write(path, &bytes)
}

/// Reads an 8- or 16-bit PNG or binary PPM into unit-range channels
/// (`value / maxval`, declared linear; no gamma transform).
pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "png" => read_png(path),
        "ppm" => read_ppm(path),
        other => Err(Error::format(format!("unsupported image extension '{other}'"))),
    }
}

fn read_png(path: &Path) -> Result<ImageBuffer> {
    let dynamic = image::open(path).map_err(|e| Error::format(format!("PNG decode: {e}")))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let mut out = ImageBuffer::new(w, h);
    match dynamic {
        DynamicImage::ImageRgb8(img) => {
            for (dst, px) in out.pixels_mut().iter_mut().zip(img.pixels()) {
                *dst = [
                    px.0[0] as f64 / 255.0,
                    px.0[1] as f64 / 255.0,
                    px.0[2] as f64 / 255.0,
                ];
            }
        }
        DynamicImage::ImageRgb16(img) => {
            for (dst, px) in out.pixels_mut().iter_mut().zip(img.pixels()) {
                *dst = [
                    px.0[0] as f64 / 65535.0,
                    px.0[1] as f64 / 65535.0,
                    px.0[2] as f64 / 65535.0,
                ];
            }
        }
        DynamicImage::ImageLuma8(img) => {
            for (dst, px) in out.pixels_mut().iter_mut().zip(img.pixels()) {
                let v = px.0[0] as f64 / 255.0;
                *dst = [v, v, v];
            }
        }
        DynamicImage::ImageLuma16(img) => {
            for (dst, px) in out.pixels_mut().iter_mut().zip(img.pixels()) {
                let v = px.0[0] as f64 / 65535.0;
                *dst = [v, v, v];
            }
        }
        other => {
            return Err(Error::format(format!(
                "unsupported PNG pixel format {:?}",
                other.color()
            )))
        }
    }
    Ok(out)
}

fn read_ppm(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path)?;
    let mut cursor = 0usize;
    if pfm_token(&bytes, &mut cursor)? != b"P6" {
        return Err(Error::format("expected binary PPM magic 'P6'"));
    }
    let parse = |tok: &[u8]| -> Result<usize> {
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::format("bad PPM header field"))
    };
    let width = parse(pfm_token(&bytes, &mut cursor)?)?;
    let height = parse(pfm_token(&bytes, &mut cursor)?)?;
    let maxval = parse(pfm_token(&bytes, &mut cursor)?)?;
    if cursor >= bytes.len() || !is_pfm_whitespace(bytes[cursor]) {
        return Err(Error::format("missing separator before PPM samples"));
    }
    cursor += 1;
    let bytes_per_sample = match maxval {
        1..=255 => 1,
        256..=65535 => 2,
        _ => return Err(Error::format(format!("unsupported PPM maxval {maxval}"))),
    };
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3 * bytes_per_sample))
        .ok_or_else(|| Error::format("PPM dimensions overflow"))?;
    let data = &bytes[cursor..];
    if data.len() != needed {
        return Err(Error::format(format!(
            "PPM payload is {} bytes, expected {needed}",
            data.len()
        )));
    }
    let mut out = ImageBuffer::new(width, height);
    let max = maxval as f64;
    let mut offset = 0usize;
    for dst in out.pixels_mut() {
        for slot in dst.iter_mut() {
            let v = if bytes_per_sample == 1 {
                data[offset] as f64
            } else {
                u16::from_be_bytes([data[offset], data[offset + 1]]) as f64
            };
            offset += bytes_per_sample;
            *slot = v / max;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Camera files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CameraFile {
    width: usize,
    height: usize,
    /// Row-major 3x3.
    intrinsics: Vec<f64>,
    /// Row-major 3x3, reference-to-source.
    rotation: Vec<f64>,
    translation: Vec<f64>,
}

/// Reads a camera description (TOML with keys `width`, `height`,
/// `intrinsics`, `rotation`, `translation`) and validates it against the
/// camera invariants.
pub fn read_camera(path: &Path) -> Result<CameraModel> {
    let text = fs::read_to_string(path)?;
    let file: CameraFile =
        toml::from_str(&text).map_err(|e| Error::format(format!("camera file: {e}")))?;
    if file.intrinsics.len() != 9 || file.rotation.len() != 9 || file.translation.len() != 3 {
        return Err(Error::format("camera matrices must have 9/9/3 entries"));
    }
    CameraModel::new(
        Matrix3::from_row_slice(&file.intrinsics),
        Matrix3::from_row_slice(&file.rotation),
        Vector3::from_column_slice(&file.translation),
        file.width,
        file.height,
    )
}

pub fn write_camera(path: &Path, cam: &CameraModel) -> Result<()> {
    let file = CameraFile {
        width: cam.width,
        height: cam.height,
        intrinsics: cam.intrinsics.transpose().as_slice().to_vec(),
        rotation: cam.rotation.transpose().as_slice().to_vec(),
        translation: cam.translation.as_slice().to_vec(),
    };
    let text = toml::to_string(&file).map_err(|e| Error::format(format!("camera encode: {e}")))?;
    atomic_write(path, text.as_bytes())
}

// ---------------------------------------------------------------------------
// Sparse depth files
// ---------------------------------------------------------------------------

/// Reads sparse observations from text: one `u v z` triple per line, `#`
/// starting a comment. Bounds are validated against the given dimensions.
pub fn read_sparse(path: &Path, width: usize, height: usize) -> Result<SparseDepth> {
    let text = fs::read_to_string(path)?;
    let mut observations = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let parse_err = || Error::format(format!("sparse file line {}: expected 'u v z'", line_no + 1));
        let u: usize = fields.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        let v: usize = fields.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        let depth: f64 = fields.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        if fields.next().is_some() {
            return Err(parse_err());
        }
        observations.push(SparseObservation { u, v, depth });
    }
    SparseDepth::new(width, height, observations)
}

pub fn write_sparse(path: &Path, sparse: &SparseDepth) -> Result<()> {
    let mut text = String::from("# u v z\n");
    for obs in sparse.observations() {
        text.push_str(&format!("{} {} {}\n", obs.u, obs.v, obs.depth));
    }
    atomic_write(path, text.as_bytes())
}

// ---------------------------------------------------------------------------
// Cost volume dumps
// ---------------------------------------------------------------------------

const VOLUME_MAGIC: &[u8; 4] = b"DCV1";

/// Dumps a cost volume as little-endian f32, plane-major, behind a 16-byte
/// header (magic `DCV1` and W, H, N as 32-bit unsigned).
pub fn write_cost_volume(path: &Path, vol: &CostVolume) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + vol.costs().len() * 4);
    bytes.extend_from_slice(VOLUME_MAGIC);
    bytes.extend_from_slice(&(vol.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(vol.height() as u32).to_le_bytes());
    bytes.extend_from_slice(&(vol.n_hypotheses() as u32).to_le_bytes());
    for &c in vol.costs() {
        bytes.extend_from_slice(&(c as f32).to_le_bytes());
    }
    atomic_write(path, &bytes)
}

/// Reads a cost-volume dump. The penalty constant is not stored in the
/// format; the result carries the default (or the data maximum if larger).
pub fn read_cost_volume(path: &Path) -> Result<CostVolume> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[0..4] != VOLUME_MAGIC {
        return Err(Error::format("not a cost-volume dump"));
    }
    let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (w, h, n) = (dim(4), dim(8), dim(12));
    let count = w
        .checked_mul(h)
        .and_then(|x| x.checked_mul(n))
        .ok_or_else(|| Error::format("cost-volume dimensions overflow"))?;
    let payload = &bytes[16..];
    if payload.len() != count * 4 {
        return Err(Error::format(format!(
            "cost-volume payload is {} bytes, expected {}",
            payload.len(),
            count * 4
        )));
    }
    let costs: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let gamma = costs.iter().copied().fold(DEFAULT_GAMMA, f64::max);
    CostVolume::from_parts(w, h, n, gamma, costs)
}
