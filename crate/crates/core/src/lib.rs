//! Trainable bar-selective COSFIRE filters for delineating elongated
//! structures such as retinal vessels.

pub mod cosfire;
pub mod error;
pub mod eval;
pub mod image;
pub mod preprocess;
pub mod synthetic;
pub mod tune;

pub use error::{Error, Result};
pub use image::GrayImage;
pub use preprocess::{FovMask, RgbImage};
