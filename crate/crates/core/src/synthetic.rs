//! Synthetic bar images: configuration prototypes and test fixtures.

use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarExtent {
    /// Bar through the centre in both directions.
    Full,
    /// Bar that starts at the centre and runs along `angle` only.
    Half,
}

const SUPERSAMPLE: usize = 4;

/// Dark bar (0) on a bright background (1), anti-aliased by 4x4 supersampling.
///
/// `angle` is the bar direction measured from +x toward +y; `half_width` is
/// half the bar thickness in pixels.
pub fn bar_image(
    width: usize,
    height: usize,
    center: (f64, f64),
    angle: f64,
    half_width: f64,
    extent: BarExtent,
) -> GrayImage {
    let (ux, uy) = (angle.cos(), angle.sin());
    let step = 1.0 / SUPERSAMPLE as f64;
    let samples = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    GrayImage::from_fn(width, height, |x, y| {
        let mut covered = 0usize;
        for j in 0..SUPERSAMPLE {
            for i in 0..SUPERSAMPLE {
                let px = x as f64 + (i as f64 + 0.5) * step - 0.5 - center.0;
                let py = y as f64 + (j as f64 + 0.5) * step - 0.5 - center.1;
                let along = px * ux + py * uy;
                let across = -px * uy + py * ux;
                let inside = across.abs() <= half_width
                    && (extent == BarExtent::Full || along >= 0.0);
                covered += inside as usize;
            }
        }
        1.0 - covered as f64 / samples
    })
}
