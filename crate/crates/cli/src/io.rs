//! Image files in and out. Inputs may be PNG or PGM/PPM; ground truths and
//! masks are binarised at > 127.

use std::fs;
use std::path::Path;

use bcosfire::preprocess::{FovMask, RgbImage};
use bcosfire::GrayImage;
use image::{DynamicImage, GrayImage as Luma8};

use crate::error::{CliError, CliResult};

fn open(path: &Path) -> CliResult<DynamicImage> {
    if !path.is_file() {
        return Err(CliError::io(path, "no such file"));
    }
    image::open(path).map_err(|e| CliError::io(path, e))
}

/// Colour fundus image; grey inputs are replicated into all channels.
pub fn load_rgb(path: &Path) -> CliResult<RgbImage> {
    let img = open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(RgbImage::from_interleaved(w as usize, h as usize, img.as_raw())?)
}

/// Single-channel image scaled to `[0, 1]`.
pub fn load_gray(path: &Path) -> CliResult<GrayImage> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
    Ok(GrayImage::from_vec(w as usize, h as usize, data)?)
}

/// Raw 8-bit levels as values in `[0, 255]`.
pub fn load_levels(path: &Path) -> CliResult<GrayImage> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| v as f64).collect();
    Ok(GrayImage::from_vec(w as usize, h as usize, data)?)
}

fn load_bits(path: &Path) -> CliResult<(usize, usize, Vec<bool>)> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.as_raw().iter().map(|&v| v > 127).collect()))
}

/// Binary image with values 0 and 1.
pub fn load_binary(path: &Path) -> CliResult<GrayImage> {
    let (w, h, bits) = load_bits(path)?;
    Ok(GrayImage::from_vec(w, h, bits.into_iter().map(|b| b as u8 as f64).collect())?)
}

pub fn load_mask(path: &Path) -> CliResult<FovMask> {
    let (w, h, bits) = load_bits(path)?;
    Ok(FovMask::from_vec(w, h, bits)?)
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Writes values already on the 0–255 scale.
pub fn save_levels(path: &Path, img: &GrayImage) -> CliResult<()> {
    let raw: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    save_raw(path, img, raw)
}

/// Writes a 0/1 image as 0/255.
pub fn save_binary(path: &Path, img: &GrayImage) -> CliResult<()> {
    let raw: Vec<u8> = img.data().iter().map(|&v| if v > 0.5 { 255 } else { 0 }).collect();
    save_raw(path, img, raw)
}

fn save_raw(path: &Path, img: &GrayImage, raw: Vec<u8>) -> CliResult<()> {
    let buf = Luma8::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer length matches dimensions");
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    buf.save(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
