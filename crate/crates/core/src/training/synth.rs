//! Synthetic degraded document pages with exact ground truth.
//!
//! A page is a smooth paper background (tilted intensity gradient, stains,
//! faint bleed-through strokes, Gaussian noise) with dark ink strokes drawn
//! on top. The ink raster is the ground truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{DatasetManifest, Page, Record, Split};
use crate::error::{Error, Result};
use crate::imagery::{save_gray, save_mask, unit_to_level, BinaryMask, GrayImage, Raster};

/// Foreground share every generated ground truth falls into.
pub const FOREGROUND_BAND: (f64, f64) = (0.02, 0.30);

const MIN_PAGE_SIDE: usize = 32;
const REFERENCE_AREA: f64 = 512.0 * 512.0;

/// Strength of each degradation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Degradation {
    /// Standard deviation of additive Gaussian noise, unit-intensity scale.
    pub noise_sigma: f64,
    /// Largest darkening across the page from the illumination gradient.
    pub gradient: f64,
    /// Stains per 512×512 area.
    pub stains: f64,
    /// Bleed-through strokes per 512×512 area.
    pub bleed_strokes: f64,
}

impl Default for Degradation {
    fn default() -> Self {
        Degradation {
            noise_sigma: 0.05,
            gradient: 0.3,
            stains: 6.0,
            bleed_strokes: 30.0,
        }
    }
}

impl Degradation {
    /// Flat paper, ink only.
    pub fn clean() -> Self {
        Degradation {
            noise_sigma: 0.0,
            gradient: 0.0,
            stains: 0.0,
            bleed_strokes: 0.0,
        }
    }
}

/// Corpus layout for [`generate_synthetic_corpus`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusSpec {
    pub seed: u64,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub page_side: usize,
    pub degradation: Degradation,
}

impl CorpusSpec {
    pub fn new(seed: u64, train: usize, validation: usize, test: usize, page_side: usize) -> Self {
        CorpusSpec {
            seed,
            train,
            validation,
            test,
            page_side,
            degradation: Degradation::default(),
        }
    }

    fn splits(&self) -> [(Split, usize); 3] {
        [
            (Split::Train, self.train),
            (Split::Validation, self.validation),
            (Split::Test, self.test),
        ]
    }
}

/// Pages of a synthetic corpus, per split.
#[derive(Clone, Debug, Default)]
pub struct SyntheticCorpus {
    pub train: Vec<Page>,
    pub validation: Vec<Page>,
    pub test: Vec<Page>,
}

impl SyntheticCorpus {
    pub fn pages(&self, split: Split) -> &[Page] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

pub fn synthetic_corpus(spec: &CorpusSpec) -> Result<SyntheticCorpus> {
    if spec.train + spec.validation + spec.test == 0 {
        return Err(Error::invalid("corpus needs at least one page"));
    }
    let mut corpus = SyntheticCorpus::default();
    let mut index = 0u64;
    for (split, count) in spec.splits() {
        for i in 0..count {
            let page = synthesize_page(spec.seed, index, spec.page_side, spec.page_side, &spec.degradation)?;
            let page = Page {
                name: format!("{}_{i:03}", split_prefix(split)),
                ..page
            };
            match split {
                Split::Train => corpus.train.push(page),
                Split::Validation => corpus.validation.push(page),
                Split::Test => corpus.test.push(page),
            }
            index += 1;
        }
    }
    Ok(corpus)
}

fn split_prefix(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Validation => "val",
        Split::Test => "test",
    }
}

/// Generates the corpus into `dir` (`<split>_NNN.pgm`, `<split>_NNN_gt.pgm`
/// and the split manifests) and returns its manifest.
pub fn generate_synthetic_corpus(spec: &CorpusSpec, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let corpus = synthetic_corpus(spec)?;
    let mut manifest = DatasetManifest::default();
    for split in Split::ALL {
        for page in corpus.pages(split) {
            let image = dir.join(format!("{}.pgm", page.name));
            let gt = dir.join(format!("{}_gt.pgm", page.name));
            save_gray(&page.image, &image)?;
            save_mask(&page.gt, &gt)?;
            manifest.records.push(Record { image, gt, split });
        }
    }
    manifest.write_dir(dir)?;
    Ok(manifest)
}

/// One page; `index` selects an independent random stream under `seed`.
pub fn synthesize_page(seed: u64, index: u64, width: usize, height: usize, deg: &Degradation) -> Result<Page> {
    if width < MIN_PAGE_SIDE || height < MIN_PAGE_SIDE {
        return Err(Error::invalid(format!(
            "page must be at least {MIN_PAGE_SIDE}x{MIN_PAGE_SIDE}, got {width}x{height}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let area_scale = (width * height) as f64 / REFERENCE_AREA;

    let mut background = paper(&mut rng, width, height, deg, area_scale);
    let (gt, ink) = ink_layer(&mut rng, width, height, area_scale)?;

    let noise = Normal::new(0.0, deg.noise_sigma.max(0.0)).expect("finite sigma");
    for (i, px) in background.as_mut_slice().iter_mut().enumerate() {
        let base = if gt.as_slice()[i] { ink.as_slice()[i] } else { *px };
        let n = if deg.noise_sigma > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        *px = (base + n).clamp(0.0, 1.0);
    }
    let image = GrayImage::from_vec(width, height, background.as_slice().iter().map(|&v| v as f32).collect())?;
    // Store on the 8-bit lattice, as if read back from disk.
    let image = GrayImage::from_u8(
        width,
        height,
        &image.as_slice().iter().map(|&v| unit_to_level(v)).collect::<Vec<_>>(),
    )?;
    Page::new(format!("page_{index:03}"), image, gt)
}

fn paper(rng: &mut ChaCha8Rng, w: usize, h: usize, deg: &Degradation, area_scale: f64) -> Raster<f64> {
    let base = rng.gen_range(0.72..0.92);
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let amplitude = deg.gradient * rng.gen_range(0.5..1.0);
    let (dx, dy) = (angle.cos(), angle.sin());
    // Projection of the page corners onto the gradient direction.
    let corners = [(0.0, 0.0), (w as f64, 0.0), (0.0, h as f64), (w as f64, h as f64)];
    let proj: Vec<f64> = corners.iter().map(|(x, y)| x * dx + y * dy).collect();
    let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut bg = Raster::from_fn(w, h, |r, c| {
        let t = ((c as f64 * dx + r as f64 * dy) - lo) / (hi - lo);
        base - amplitude * t
    });

    let stains = poisson_like(rng, deg.stains * area_scale);
    for _ in 0..stains {
        let cy = rng.gen_range(0.0..h as f64);
        let cx = rng.gen_range(0.0..w as f64);
        let sigma: f64 = rng.gen_range(8.0..40.0);
        let depth = rng.gen_range(0.05..0.18);
        let reach = (3.0 * sigma) as isize;
        for r in (cy as isize - reach).max(0)..(cy as isize + reach).min(h as isize) {
            for c in (cx as isize - reach).max(0)..(cx as isize + reach).min(w as isize) {
                let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                let v = bg.get(r as usize, c as usize) - depth * (-d2 / (2.0 * sigma * sigma)).exp();
                bg.set(r as usize, c as usize, v);
            }
        }
    }

    let bleed = poisson_like(rng, deg.bleed_strokes * area_scale);
    if bleed > 0 {
        let mut layer = BinaryMask::filled(w, h, false);
        for _ in 0..bleed {
            draw_polyline(rng, &mut layer);
        }
        let soft = box_blur(&layer.map(|&b| if b { 1.0 } else { 0.0 }));
        let darkness = rng.gen_range(0.12..0.25);
        for (v, s) in bg.as_mut_slice().iter_mut().zip(soft.as_slice()) {
            *v -= darkness * s;
        }
    }
    bg
}

/// Rounded mean jittered by ±25%, at least one when the mean is positive.
fn poisson_like(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    ((mean * rng.gen_range(0.75..1.25)).round() as usize).max(1)
}

/// Ink strokes (polylines, discs, rings) until the foreground share lands in
/// [`FOREGROUND_BAND`]. Returns the mask and per-pixel ink intensity.
fn ink_layer(rng: &mut ChaCha8Rng, w: usize, h: usize, area_scale: f64) -> Result<(BinaryMask, Raster<f64>)> {
    let n = (w * h) as f64;
    for _ in 0..200 {
        let mut mask = BinaryMask::filled(w, h, false);
        let mut ink = Raster::filled(w, h, 0.0);
        let strokes = poisson_like(rng, 32.0 * area_scale);
        let blobs = poisson_like(rng, 40.0 * area_scale);
        for i in 0..strokes + blobs {
            let level = rng.gen_range(0.05..0.28);
            let mut stroke = BinaryMask::filled(w, h, false);
            if i < strokes {
                draw_polyline(rng, &mut stroke);
            } else {
                draw_blob(rng, &mut stroke);
            }
            for (j, &on) in stroke.as_slice().iter().enumerate() {
                if on {
                    mask.as_mut_slice()[j] = true;
                    ink.as_mut_slice()[j] = level;
                }
            }
        }
        let share = mask.count_foreground() as f64 / n;
        if (FOREGROUND_BAND.0..=FOREGROUND_BAND.1).contains(&share) {
            return Ok((mask, ink));
        }
    }
    Err(Error::invalid("could not place ink within the foreground band"))
}

fn draw_polyline(rng: &mut ChaCha8Rng, mask: &mut BinaryMask) {
    let (w, h) = (mask.width() as f64, mask.height() as f64);
    let width = rng.gen_range(1.5..3.5);
    let segments = rng.gen_range(2..7);
    let mut y = rng.gen_range(0.0..h);
    let mut x = rng.gen_range(0.0..w);
    let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let max_len = (w.min(h) / 6.0).max(4.0);
    for _ in 0..segments {
        heading += rng.gen_range(-1.2..1.2);
        let len = rng.gen_range(4.0..max_len);
        let (ny, nx) = (y + len * heading.sin(), x + len * heading.cos());
        draw_segment(mask, (y, x), (ny, nx), width / 2.0);
        y = ny;
        x = nx;
    }
}

fn draw_blob(rng: &mut ChaCha8Rng, mask: &mut BinaryMask) {
    let (w, h) = (mask.width() as f64, mask.height() as f64);
    let radius = rng.gen_range(2.0..(w.min(h) / 48.0).clamp(2.5, 7.0));
    let cy = rng.gen_range(0.0..h);
    let cx = rng.gen_range(0.0..w);
    // A third of the blobs are rings.
    let inner = if rng.gen_bool(1.0 / 3.0) && radius > 3.5 {
        radius - 1.8
    } else {
        -1.0
    };
    let reach = radius.ceil() as isize + 1;
    for r in (cy as isize - reach).max(0)..(cy as isize + reach).min(h as isize) {
        for c in (cx as isize - reach).max(0)..(cx as isize + reach).min(w as isize) {
            let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
            if d <= radius && d > inner {
                mask.set(r as usize, c as usize, true);
            }
        }
    }
}

fn draw_segment(mask: &mut BinaryMask, a: (f64, f64), b: (f64, f64), half_width: f64) {
    let (h, w) = (mask.height() as isize, mask.width() as isize);
    let reach = half_width.ceil() as isize + 1;
    let r0 = (a.0.min(b.0) as isize - reach).max(0);
    let r1 = (a.0.max(b.0) as isize + reach).min(h - 1);
    let c0 = (a.1.min(b.1) as isize - reach).max(0);
    let c1 = (a.1.max(b.1) as isize + reach).min(w - 1);
    let (vy, vx) = (b.0 - a.0, b.1 - a.1);
    let len2 = vy * vy + vx * vx;
    for r in r0..=r1 {
        for c in c0..=c1 {
            let (py, px) = (r as f64 - a.0, c as f64 - a.1);
            let t = if len2 > 0.0 {
                ((py * vy + px * vx) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (dy, dx) = (py - t * vy, px - t * vx);
            if dy * dy + dx * dx <= half_width * half_width {
                mask.set(r as usize, c as usize, true);
            }
        }
    }
}

/// Two passes of a 3×3 box filter, clamped at the borders.
fn box_blur(src: &Raster<f64>) -> Raster<f64> {
    let pass = |img: &Raster<f64>| {
        let (w, h) = img.dims();
        Raster::from_fn(w, h, |r, c| {
            let mut acc = 0.0;
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let rr = (r as isize + dr).clamp(0, h as isize - 1) as usize;
                    let cc = (c as isize + dc).clamp(0, w as isize - 1) as usize;
                    acc += img.get(rr, cc);
                }
            }
            acc / 9.0
        })
    };
    pass(&pass(src))
}
