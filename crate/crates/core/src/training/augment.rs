//! Random flips and rescaling of training windows.

use rand::Rng;

use super::Patch;
use crate::imagery::{reflect_index, Raster};

pub const MIN_SCALE: f64 = 0.8;
pub const MAX_SCALE: f64 = 1.25;

/// Geometric transform applied identically to a window and its ground truth.
/// Scaling is about the window centre, followed by the flips; samples that
/// fall outside the window are reflected back in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform {
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    pub scale: f64,
}

impl Transform {
    pub fn identity() -> Self {
        Transform {
            flip_horizontal: false,
            flip_vertical: false,
            scale: 1.0,
        }
    }

    /// Each flip with probability ½, scale log-uniform in `[0.8, 1.25]`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let flip_horizontal = rng.gen_bool(0.5);
        let flip_vertical = rng.gen_bool(0.5);
        let scale = rng.gen_range(MIN_SCALE.ln()..=MAX_SCALE.ln()).exp();
        Transform {
            flip_horizontal,
            flip_vertical,
            scale,
        }
    }

    pub fn apply(&self, patch: &Patch) -> Patch {
        let image = self.resample(&patch.image);
        let gt_soft = self.resample(&patch.gt.map(|&b| if b { 1.0f32 } else { 0.0 }));
        Patch {
            image,
            gt: gt_soft.map(|&v| v >= 0.5),
        }
    }

    fn resample(&self, src: &Raster<f32>) -> Raster<f32> {
        let (w, h) = src.dims();
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        Raster::from_fn(w, h, |r, c| {
            let r = if self.flip_vertical { h - 1 - r } else { r };
            let c = if self.flip_horizontal { w - 1 - c } else { c };
            let sy = (r as f64 + 0.5 - cy) / self.scale + cy - 0.5;
            let sx = (c as f64 + 0.5 - cx) / self.scale + cx - 0.5;
            bilinear(src, sy, sx)
        })
    }
}

fn bilinear(src: &Raster<f32>, y: f64, x: f64) -> f32 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = ((y - y0) as f32, (x - x0) as f32);
    let (y0, x0) = (y0 as isize, x0 as isize);
    let at = |dy: isize, dx: isize| {
        src.get(
            reflect_index(y0 + dy, src.height()),
            reflect_index(x0 + dx, src.width()),
        )
    };
    if fy == 0.0 && fx == 0.0 {
        return at(0, 0);
    }
    let top = at(0, 0) * (1.0 - fx) + at(0, 1) * fx;
    let bottom = at(1, 0) * (1.0 - fx) + at(1, 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// `count` independently transformed copies of `patch`.
pub fn augment<R: Rng + ?Sized>(patch: &Patch, rng: &mut R, count: usize) -> Vec<Patch> {
    (0..count).map(|_| Transform::sample(rng).apply(patch)).collect()
}
