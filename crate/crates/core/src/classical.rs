//! Hand-crafted binarization baselines.
//!
//! All thresholds here are expressed on the 8-bit intensity scale `[0, 255]`,
//! which is where the usual parameter values (Sauvola's `R = 128`, etc.) live.
//! A pixel is foreground when it is darker than its threshold.

use crate::error::{Error, Result};
use crate::imagery::{reflect_index, unit_to_level, BinaryMask, GrayImage, Raster};

pub const DEFAULT_WINDOW: usize = 25;
pub const DEFAULT_NIBLACK_K: f64 = -0.2;
pub const DEFAULT_SAUVOLA_K: f64 = 0.5;
pub const DEFAULT_SAUVOLA_R: f64 = 128.0;
pub const DEFAULT_WOLF_K: f64 = 0.5;

/// Per-pixel threshold on the 8-bit intensity scale.
pub type ThresholdMap = Raster<f64>;

pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in img.as_slice() {
        hist[unit_to_level(v) as usize] += 1;
    }
    hist
}

/// Otsu's global threshold.
///
/// Returns the level `t` maximizing the between-class variance of
/// `{<= t}` / `{> t}`, smallest `t` on ties. A single-level image returns that
/// level.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    otsu_from_histogram(&histogram(img))
}

/// Otsu on a histogram. The pixel total must stay below 2^48, which any
/// in-memory image does.
pub fn otsu_from_histogram(hist: &[u64; 256]) -> u8 {
    let occupied: Vec<usize> = (0..256).filter(|&i| hist[i] > 0).collect();
    match occupied.as_slice() {
        [] => return 0,
        [only] => return *only as u8,
        _ => {}
    }
    let total: u128 = hist.iter().map(|&h| h as u128).sum();
    assert!(total < 1 << 48, "histogram total {total} too large");
    let total_sum: u128 = hist.iter().enumerate().map(|(i, &h)| i as u128 * h as u128).sum();

    // Between-class variance scaled by N^2 is (N*s0 - n0*S)^2 / (n0*n1);
    // candidates are compared as exact fractions.
    let mut best = (0u8, 0u128, 1u128);
    let (mut n0, mut s0) = (0u128, 0u128);
    for t in 0..255usize {
        n0 += hist[t] as u128;
        s0 += t as u128 * hist[t] as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (total * s0).abs_diff(n0 * total_sum);
        let den = n0 * n1;
        if variance_gt((diff, den), (best.1, best.2)) {
            best = (t as u8, diff, den);
        }
    }
    best.0
}

/// `a.0² / a.1 > b.0² / b.1` for positive denominators, exactly.
fn variance_gt(a: (u128, u128), b: (u128, u128)) -> bool {
    mul_wide(widening_mul(a.0, a.0), b.1) > mul_wide(widening_mul(b.0, b.0), a.1)
}

/// 256-bit `(high, low)` times `m`, as 384-bit `(top, high, low)`.
fn mul_wide((hi, lo): (u128, u128), m: u128) -> (u128, u128, u128) {
    let (c0, r0) = widening_mul(lo, m);
    let (c1, r1) = widening_mul(hi, m);
    let (mid, carry) = r1.overflowing_add(c0);
    (c1 + carry as u128, mid, r0)
}

/// Full 256-bit product as `(high, low)`.
fn widening_mul(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a_hi, a_lo) = (a >> 64, a & MASK);
    let (b_hi, b_lo) = (b >> 64, b & MASK);
    let lo_lo = a_lo * b_lo;
    let hi_lo = a_hi * b_lo;
    let lo_hi = a_lo * b_hi;
    let hi_hi = a_hi * b_hi;
    let mid = (lo_lo >> 64) + (hi_lo & MASK) + (lo_hi & MASK);
    let low = (lo_lo & MASK) | (mid << 64);
    let high = hi_hi + (hi_lo >> 64) + (lo_hi >> 64) + (mid >> 64);
    (high, low)
}

/// Global binarization: levels `<= t` are foreground. An image with a single
/// intensity has no contrast and comes out entirely background.
pub fn apply_global(img: &GrayImage, t: u8) -> BinaryMask {
    let hist = histogram(img);
    if hist.iter().filter(|&&h| h > 0).count() <= 1 {
        return BinaryMask::filled(img.width(), img.height(), false);
    }
    img.map(|&v| unit_to_level(v) <= t)
}

pub fn binarize_otsu(img: &GrayImage) -> BinaryMask {
    apply_global(img, otsu_threshold(img))
}

/// Windowed mean and standard deviation (8-bit scale) around every pixel.
#[derive(Clone, Debug)]
pub struct LocalStats {
    pub window_side: usize,
    pub mean: Raster<f64>,
    pub std: Raster<f64>,
}

/// Mean / std over the `window_side`² neighbourhood centred on each pixel,
/// with reflect padding at the borders. Uses integral images of the levels and
/// squared levels, so each pixel costs O(1).
pub fn local_stats(img: &GrayImage, window_side: usize) -> Result<LocalStats> {
    if window_side < 3 || window_side.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "local window side must be odd and >= 3, got {window_side}"
        )));
    }
    let (w, h) = img.dims();
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let r = window_side / 2;
    let pw = w + 2 * r;
    let ph = h + 2 * r;
    let levels = img.to_u8();

    // Summed-area tables with a zero top row / left column.
    let stride = pw + 1;
    let mut sum = vec![0u64; stride * (ph + 1)];
    let mut sq = vec![0u64; stride * (ph + 1)];
    for y in 0..ph {
        let src_row = reflect_index(y as isize - r as isize, h);
        let (mut row_sum, mut row_sq) = (0u64, 0u64);
        for x in 0..pw {
            let src_col = reflect_index(x as isize - r as isize, w);
            let v = levels[src_row * w + src_col] as u64;
            row_sum += v;
            row_sq += v * v;
            let i = (y + 1) * stride + x + 1;
            sum[i] = sum[i - stride] + row_sum;
            sq[i] = sq[i - stride] + row_sq;
        }
    }

    let area = (window_side * window_side) as f64;
    let rect = |t: &[u64], y: usize, x: usize| -> u64 {
        let (y1, x1) = (y + window_side, x + window_side);
        t[y1 * stride + x1] + t[y * stride + x] - t[y * stride + x1] - t[y1 * stride + x]
    };
    let mut mean = Vec::with_capacity(w * h);
    let mut std = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let m = rect(&sum, y, x) as f64 / area;
            let var = rect(&sq, y, x) as f64 / area - m * m;
            mean.push(m);
            std.push(var.max(0.0).sqrt());
        }
    }
    Ok(LocalStats {
        window_side,
        mean: Raster::from_vec(w, h, mean)?,
        std: Raster::from_vec(w, h, std)?,
    })
}

/// Niblack: `T = m + k·s`.
pub fn threshold_niblack(stats: &LocalStats, k: f64) -> ThresholdMap {
    zip_stats(stats, |m, s| m + k * s)
}

/// Sauvola: `T = m·(1 + k·(s/R − 1))`.
pub fn threshold_sauvola(stats: &LocalStats, k: f64, r: f64) -> Result<ThresholdMap> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("Sauvola R must be positive, got {r}")));
    }
    Ok(zip_stats(stats, |m, s| m * (1.0 + k * (s / r - 1.0))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Contrast {
    Normal,
    /// No local contrast anywhere (`max s = 0`); the threshold fell back to `T = m`.
    Degenerate,
}

/// Wolf et al.: `T = (1−k)·m + k·M + k·(s/S)·(m − M)` where `M` is the image
/// minimum and `S` the largest local standard deviation.
pub fn threshold_wolf(stats: &LocalStats, img: &GrayImage, k: f64) -> Result<(ThresholdMap, Contrast)> {
    img.ensure_same_dims(&stats.mean)?;
    let s_max = stats.std.as_slice().iter().copied().fold(0.0, f64::max);
    if s_max <= 0.0 {
        log::warn!("Wolf threshold on an image without contrast; using T = m");
        return Ok((stats.mean.clone(), Contrast::Degenerate));
    }
    let min_level = img.to_u8().into_iter().min().unwrap_or(0) as f64;
    let map = zip_stats(stats, |m, s| {
        (1.0 - k) * m + k * min_level + k * (s / s_max) * (m - min_level)
    });
    Ok((map, Contrast::Normal))
}

fn zip_stats(stats: &LocalStats, f: impl Fn(f64, f64) -> f64) -> ThresholdMap {
    let data = stats
        .mean
        .as_slice()
        .iter()
        .zip(stats.std.as_slice())
        .map(|(&m, &s)| f(m, s))
        .collect();
    Raster::from_vec(stats.mean.width(), stats.mean.height(), data).expect("stats maps share dims")
}

/// Foreground where the pixel's level is strictly below its threshold.
pub fn apply_threshold_map(img: &GrayImage, t: &ThresholdMap) -> Result<BinaryMask> {
    img.ensure_same_dims(t)?;
    let labels = img
        .as_slice()
        .iter()
        .zip(t.as_slice())
        .map(|(&v, &thr)| (unit_to_level(v) as f64) < thr)
        .collect();
    BinaryMask::from_vec(img.width(), img.height(), labels)
}

/// The classical methods with their tunable parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Otsu,
    Niblack { window: usize, k: f64 },
    Sauvola { window: usize, k: f64, r: f64 },
    Wolf { window: usize, k: f64 },
}

impl Method {
    pub fn niblack() -> Self {
        Method::Niblack {
            window: DEFAULT_WINDOW,
            k: DEFAULT_NIBLACK_K,
        }
    }

    pub fn sauvola() -> Self {
        Method::Sauvola {
            window: DEFAULT_WINDOW,
            k: DEFAULT_SAUVOLA_K,
            r: DEFAULT_SAUVOLA_R,
        }
    }

    pub fn wolf() -> Self {
        Method::Wolf {
            window: DEFAULT_WINDOW,
            k: DEFAULT_WOLF_K,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Otsu => "otsu",
            Method::Niblack { .. } => "niblack",
            Method::Sauvola { .. } => "sauvola",
            Method::Wolf { .. } => "wolf",
        }
    }

    pub fn binarize(&self, img: &GrayImage) -> Result<BinaryMask> {
        match *self {
            Method::Otsu => Ok(binarize_otsu(img)),
            Method::Niblack { window, k } => {
                let stats = local_stats(img, window)?;
                apply_threshold_map(img, &threshold_niblack(&stats, k))
            }
            Method::Sauvola { window, k, r } => {
                let stats = local_stats(img, window)?;
                apply_threshold_map(img, &threshold_sauvola(&stats, k, r)?)
            }
            Method::Wolf { window, k } => {
                let stats = local_stats(img, window)?;
                let (map, _) = threshold_wolf(&stats, img, k)?;
                apply_threshold_map(img, &map)
            }
        }
    }
}
