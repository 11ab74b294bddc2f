#![allow(dead_code)]

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use bcosfire::synthetic::{bar_image, BarExtent};
use bcosfire::GrayImage;
use image::{GrayImage as Luma8, RgbImage as Rgb8};

/// Green-channel fundus stand-in: dark bar on a brighter background.
pub fn write_bar_rgb(path: &Path, img: &GrayImage) {
    let (w, h) = img.dims();
    let rgb = Rgb8::from_fn(w as u32, h as u32, |x, y| {
        let g = (40.0 + 180.0 * img.get(x as usize, y as usize)).round() as u8;
        image::Rgb([g / 2, g, g / 3])
    });
    rgb.save(path).unwrap();
}

pub fn write_binary(path: &Path, w: usize, h: usize, f: impl Fn(usize, usize) -> bool) {
    let img = Luma8::from_fn(w as u32, h as u32, |x, y| {
        image::Luma([if f(x as usize, y as usize) { 255 } else { 0 }])
    });
    img.save(path).unwrap();
}

pub fn bar(size: usize, angle: f64, half_width: f64) -> GrayImage {
    let c = size as f64 / 2.0;
    bar_image(size, size, (c, c), angle, half_width, BarExtent::Full)
}

/// `n` bar images at different angles with ground truth and full FOV masks.
pub fn toy_dataset(dir: &Path, n: usize, size: usize) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let mut manifest = String::from("name = \"toy\"\nresolution = \"synthetic\"\n");
    for i in 0..n {
        let angle = i as f64 * PI / n as f64 + 0.2;
        let half_width = 1.0 + 0.5 * (i % 3) as f64;
        let img = bar(size, angle, half_width);
        write_bar_rgb(&dir.join(format!("img{i}.png")), &img);
        write_binary(&dir.join(format!("gt{i}.png")), size, size, |x, y| img.get(x, y) < 0.5);
        write_binary(&dir.join(format!("fov{i}.png")), size, size, |_, _| true);
        manifest.push_str(&format!(
            "\n[[entry]]\nimage = \"img{i}.png\"\nground_truth = \"gt{i}.png\"\nfov_mask = \"fov{i}.png\"\n"
        ));
    }
    let path = dir.join("manifest.toml");
    fs::write(&path, manifest).unwrap();
    path
}

pub const TOY_SPACE: &str = r#"
[symmetric]
sigma = [1.2, 1.8]
rho_max = [4]
sigma0 = [1]
alpha = [0.3]

[asymmetric]
rho_max = [4]
sigma0 = [1]
alpha = [0.1]
"#;

pub fn write_space(dir: &Path) -> PathBuf {
    let p = dir.join("space.toml");
    fs::write(&p, TOY_SPACE).unwrap();
    p
}

pub fn args(list: &[&str]) -> Vec<String> {
    std::iter::once("bcosfire").chain(list.iter().copied()).map(String::from).collect()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
