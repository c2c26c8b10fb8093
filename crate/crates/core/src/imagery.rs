//! Rasters, file I/O and page tiling.
//!
//! Gray images are held as `f32` intensities in `[0, 1]` on the 8-bit lattice
//! (`level / 255`). Masks hold `true` for foreground (ink). On disk, masks are
//! binary PGM with ink written black.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A row-major 2-D raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Intensities in `[0, 1]`, 0 = black.
pub type GrayImage = Raster<f32>;

/// Per-pixel labels, `true` = foreground.
pub type BinaryMask = Raster<bool>;

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!(
                "{width}x{height} raster needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Raster { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Raster { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub(crate) fn ensure_same_dims<U>(&self, other: &Raster<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }
}

impl<T: Copy> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }
}

impl Raster<f32> {
    /// Builds a gray image from 8-bit levels.
    pub fn from_u8(width: usize, height: usize, levels: &[u8]) -> Result<Self> {
        Raster::from_vec(width, height, levels.iter().map(|&v| level_to_unit(v)).collect())
    }

    /// Intensities rounded back onto the 8-bit lattice.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| unit_to_level(v)).collect()
    }
}

impl Raster<bool> {
    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[inline]
pub fn level_to_unit(level: u8) -> f32 {
    level as f32 / 255.0
}

#[inline]
pub fn unit_to_level(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Mirror index into `0..n` without repeating the edge sample
/// (`-1 -> 1`, `n -> n - 2`), folding as many times as needed.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

/// Reads a binary PGM (P5) or PNG file as a gray image. Color PNGs are
/// converted with luma weights 0.299 / 0.587 / 0.114.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_gray(&bytes)
}

pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)
    } else {
        let head: String = bytes
            .iter()
            .take(4)
            .map(|b| if b.is_ascii_graphic() { *b as char } else { '.' })
            .collect();
        Err(Error::UnsupportedFormat(format!("unrecognised header {head:?}")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = pgm_header_number(bytes, &mut pos)?;
    }
    let [width, height, maxval] = fields;
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("PGM header not terminated".into()));
    }
    pos += 1;
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("PGM maxval {maxval}")));
    }
    let n = width * height;
    let payload = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::Format(format!("PGM payload truncated ({} of {n} bytes)", bytes.len() - pos)))?;
    let levels: Vec<u8> = if maxval == 255 {
        payload.to_vec()
    } else {
        payload
            .iter()
            .map(|&v| ((v.min(maxval as u8) as u32 * 255 + maxval as u32 / 2) / maxval as u32) as u8)
            .collect()
    };
    GrayImage::from_u8(width, height, &levels)
}

fn pgm_header_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Format("PGM header truncated".into())),
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("bad number in PGM header".into()))
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::Format(format!("PNG: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    let (width, height) = (info.width as usize, info.height as usize);
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::UnsupportedFormat("indexed PNG after expansion".into())),
    };
    let levels: Vec<u8> = buf[..info.buffer_size()]
        .chunks_exact(channels)
        .map(|px| match channels {
            1 | 2 => px[0],
            _ => luma(px[0], px[1], px[2]),
        })
        .collect();
    GrayImage::from_u8(width, height, &levels)
}

/// Luma of an 8-bit RGB triple, rounded to the nearest level. Gray triples map
/// to themselves.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Writes a gray image as binary PGM.
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    write_pgm(path.as_ref(), img.width(), img.height(), &img.to_u8())
}

/// Writes a mask as binary PGM: foreground 0 (black), background 255.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_pgm(path.as_ref(), mask.width(), mask.height(), &mask_levels(mask))
}

pub fn mask_levels(mask: &BinaryMask) -> Vec<u8> {
    mask.as_slice().iter().map(|&fg| if fg { 0 } else { 255 }).collect()
}

/// Reads a ground-truth style mask: levels below 128 are foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    Ok(load_gray(path)?.map(|&v| unit_to_level(v) < 128))
}

pub fn encode_pgm(width: usize, height: usize, levels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(levels);
    out
}

pub(crate) fn write_pgm(path: &Path, width: usize, height: usize, levels: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_pgm(width, height, levels))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Tiling
// ---------------------------------------------------------------------------

/// Layout of the disjoint square windows covering a reflect-padded page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub window_side: usize,
    /// `(row, col)` of each window's top-left corner, row-major.
    pub origins: Vec<(usize, usize)>,
    pub padded_width: usize,
    pub padded_height: usize,
}

impl PatchGrid {
    pub fn new(width: usize, height: usize, window_side: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if window_side == 0 {
            return Err(Error::invalid("window side must be at least 1"));
        }
        let cols = width.div_ceil(window_side);
        let rows = height.div_ceil(window_side);
        let origins = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r * window_side, c * window_side)))
            .collect();
        Ok(PatchGrid {
            window_side,
            origins,
            padded_width: cols * window_side,
            padded_height: rows * window_side,
        })
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

/// Cuts `img` into `side`×`side` windows. The page is reflect-padded at the
/// right and bottom edges up to the next multiple of `side`.
pub fn split_into_windows<T: Copy>(img: &Raster<T>, side: usize) -> Result<(PatchGrid, Vec<Raster<T>>)> {
    let grid = PatchGrid::new(img.width(), img.height(), side)?;
    let windows = grid
        .origins
        .iter()
        .map(|&(r0, c0)| {
            Raster::from_fn(side, side, |r, c| {
                let row = reflect_index((r0 + r) as isize, img.height());
                let col = reflect_index((c0 + c) as isize, img.width());
                img.get(row, col)
            })
        })
        .collect();
    Ok((grid, windows))
}

/// Reassembles windows laid out by `grid` and crops to `out_w`×`out_h`.
pub fn stitch_windows<T: Copy + Default>(
    grid: &PatchGrid,
    windows: &[Raster<T>],
    out_w: usize,
    out_h: usize,
) -> Result<Raster<T>> {
    if windows.len() != grid.len() {
        return Err(Error::shape(format!(
            "grid has {} windows, got {}",
            grid.len(),
            windows.len()
        )));
    }
    let side = grid.window_side;
    if let Some(w) = windows.iter().find(|w| w.dims() != (side, side)) {
        return Err(Error::DimensionMismatch {
            expected: (side, side),
            found: w.dims(),
        });
    }
    if out_w > grid.padded_width || out_h > grid.padded_height {
        return Err(Error::invalid(format!(
            "output {out_w}x{out_h} exceeds padded extent {}x{}",
            grid.padded_width, grid.padded_height
        )));
    }
    let mut out = Raster::filled(out_w, out_h, T::default());
    for (&(r0, c0), win) in grid.origins.iter().zip(windows) {
        let rows = side.min(out_h.saturating_sub(r0));
        let cols = side.min(out_w.saturating_sub(c0));
        for r in 0..rows {
            let src = &win.as_slice()[r * side..r * side + cols];
            let start = (r0 + r) * out_w + c0;
            out.as_mut_slice()[start..start + cols].copy_from_slice(src);
        }
    }
    Ok(out)
}
