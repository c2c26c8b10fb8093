//! F-measure evaluation and the experiment drivers built on it: threshold
//! sweeps, per-window error heat maps and cross-corpus matrices.

use std::fmt::Write as _;
use std::ops::{Add, AddAssign};
use std::path::Path;

use rayon::prelude::*;

use crate::classical::Method;
use crate::error::{Error, Result};
use crate::imagery::{split_into_windows, write_pgm, BinaryMask, GrayImage};
use crate::sae::{binarize_activations, Model};
use crate::training::Page;

/// Pixel confusion counts, foreground being the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn errors(&self) -> u64 {
        self.fp + self.fn_
    }

    pub fn f_measure(&self) -> f64 {
        f_measure(self)
    }

    /// Same counts with prediction and ground truth swapped.
    pub fn transposed(&self) -> Confusion {
        Confusion {
            fp: self.fn_,
            fn_: self.fp,
            ..*self
        }
    }
}

impl Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, o: Confusion) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Confusion {
    fn sum<I: Iterator<Item = Confusion>>(iter: I) -> Confusion {
        iter.fold(Confusion::default(), Add::add)
    }
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<Confusion> {
    gt.ensure_same_dims(pred)?;
    let mut c = Confusion::default();
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `2TP / (2TP + FP + FN)`; 1.0 when there is nothing to find and nothing
/// was found.
pub fn f_measure(c: &Confusion) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        return 1.0;
    }
    (2 * c.tp) as f64 / denom as f64
}

/// Scores of one binarizer over a set of pages.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusScore {
    pub per_image: Vec<(String, Confusion)>,
}

impl CorpusScore {
    pub fn total(&self) -> Confusion {
        self.per_image.iter().map(|(_, c)| *c).sum()
    }

    /// F-m of the summed confusion counts.
    pub fn micro_f_measure(&self) -> f64 {
        self.total().f_measure()
    }

    /// Mean of the per-image F-m values.
    pub fn macro_f_measure(&self) -> f64 {
        if self.per_image.is_empty() {
            return 0.0;
        }
        self.per_image.iter().map(|(_, c)| c.f_measure()).sum::<f64>() / self.per_image.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,fm,tp,fp,fn,tn\n");
        for (name, c) in &self.per_image {
            let _ = writeln!(out, "{name},{:.6},{},{},{},{}", c.f_measure(), c.tp, c.fp, c.fn_, c.tn);
        }
        out
    }
}

fn score_pages(pages: &[Page], binarize: impl Fn(&GrayImage) -> Result<BinaryMask> + Sync) -> Result<CorpusScore> {
    if pages.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let per_image = pages
        .par_iter()
        .map(|p| Ok((p.name.clone(), confusion(&binarize(&p.image)?, &p.gt)?)))
        .collect::<Result<_>>()?;
    Ok(CorpusScore { per_image })
}

pub fn evaluate_model(model: &Model, pages: &[Page], tau: f32) -> Result<CorpusScore> {
    score_pages(pages, |img| crate::sae::binarize_document(model, img, tau))
}

pub fn evaluate_method(method: &Method, pages: &[Page]) -> Result<CorpusScore> {
    score_pages(pages, |img| method.binarize(img))
}

/// The thresholds `0.1, 0.2, …, 0.9`.
pub fn default_taus() -> Vec<f32> {
    (1..=9).map(|i| i as f32 / 10.0).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub tau: f32,
    pub confusion: Confusion,
}

impl SweepRow {
    pub fn f_measure(&self) -> f64 {
        self.confusion.f_measure()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Largest minus smallest F-m across the sweep.
    pub fn spread(&self) -> f64 {
        let fms = self.rows.iter().map(SweepRow::f_measure);
        let (lo, hi) = fms.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if self.rows.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,fm,tp,fp,fn\n");
        for r in &self.rows {
            let c = &r.confusion;
            let _ = writeln!(out, "{},{:.6},{},{},{}", r.tau, r.f_measure(), c.tp, c.fp, c.fn_);
        }
        out
    }
}

/// Micro F-m of `model` on `pages` at each threshold. Activations are
/// computed once per page and re-thresholded.
pub fn threshold_sweep(model: &Model, pages: &[Page], taus: &[f32]) -> Result<SweepTable> {
    if pages.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    if let Some(t) = taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::invalid(format!("threshold {t} outside [0, 1]")));
    }
    let maps = pages
        .par_iter()
        .map(|p| model.activation_map(&p.image))
        .collect::<Result<Vec<_>>>()?;
    let rows = taus
        .iter()
        .map(|&tau| {
            let confusion = maps
                .iter()
                .zip(pages)
                .map(|(a, p)| confusion(&binarize_activations(a, tau)?, &p.gt))
                .sum::<Result<Confusion>>()?;
            Ok(SweepRow { tau, confusion })
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable { rows })
}

/// Error counts by position inside the inference window, accumulated over
/// every window of every page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorHeatMap {
    pub window_side: usize,
    pub windows: u64,
    pub false_positives: Vec<u64>,
    pub false_negatives: Vec<u64>,
    /// Ground-truth foreground counts, for comparison with the error maps.
    pub foreground: Vec<u64>,
}

impl ErrorHeatMap {
    pub fn new(window_side: usize) -> Self {
        let n = window_side * window_side;
        ErrorHeatMap {
            window_side,
            windows: 0,
            false_positives: vec![0; n],
            false_negatives: vec![0; n],
            foreground: vec![0; n],
        }
    }

    /// Adds one window. Only the top-left `valid_rows`×`valid_cols` region is
    /// counted; the rest is padding beyond the page.
    pub fn accumulate(
        &mut self,
        pred: &BinaryMask,
        gt: &BinaryMask,
        valid_rows: usize,
        valid_cols: usize,
    ) -> Result<()> {
        let side = self.window_side;
        pred.ensure_same_dims(gt)?;
        if pred.dims() != (side, side) {
            return Err(Error::DimensionMismatch {
                expected: (side, side),
                found: pred.dims(),
            });
        }
        for r in 0..valid_rows.min(side) {
            for c in 0..valid_cols.min(side) {
                let i = r * side + c;
                let (p, g) = (pred.as_slice()[i], gt.as_slice()[i]);
                self.false_positives[i] += (p && !g) as u64;
                self.false_negatives[i] += (!p && g) as u64;
                self.foreground[i] += g as u64;
            }
        }
        self.windows += 1;
        Ok(())
    }

    pub fn errors(&self) -> Vec<u64> {
        self.false_positives
            .iter()
            .zip(&self.false_negatives)
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn total_errors(&self) -> u64 {
        self.errors().iter().sum()
    }

    /// Percentage of windows with an error at each cell, in `[0, 100]`.
    pub fn error_percent(&self) -> Vec<f64> {
        percent(&self.errors(), self.windows)
    }

    pub fn foreground_percent(&self) -> Vec<f64> {
        percent(&self.foreground, self.windows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,fp,fn,errors,error_pct,gt_fg,gt_fg_pct\n");
        let err_pct = self.error_percent();
        let fg_pct = self.foreground_percent();
        let side = self.window_side;
        for i in 0..side * side {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4},{},{:.4}",
                i / side,
                i % side,
                self.false_positives[i],
                self.false_negatives[i],
                self.false_positives[i] + self.false_negatives[i],
                err_pct[i],
                self.foreground[i],
                fg_pct[i]
            );
        }
        out
    }

    /// Writes `<prefix>_errors.pgm`, `<prefix>_fp.pgm`, `<prefix>_fn.pgm`,
    /// `<prefix>_gt.pgm` (each linearly scaled so its maximum is 255) and
    /// `<prefix>.csv`.
    pub fn write(&self, prefix: &Path) -> Result<()> {
        let with_suffix = |s: &str| {
            let mut p = prefix.as_os_str().to_owned();
            p.push(s);
            std::path::PathBuf::from(p)
        };
        let side = self.window_side;
        for (suffix, counts) in [
            ("_errors.pgm", self.errors()),
            ("_fp.pgm", self.false_positives.clone()),
            ("_fn.pgm", self.false_negatives.clone()),
            ("_gt.pgm", self.foreground.clone()),
        ] {
            write_pgm(&with_suffix(suffix), side, side, &scale_to_u8(&counts))?;
        }
        let csv = with_suffix(".csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))
    }
}

fn percent(counts: &[u64], windows: u64) -> Vec<f64> {
    counts
        .iter()
        .map(|&c| {
            if windows == 0 {
                0.0
            } else {
                100.0 * c as f64 / windows as f64
            }
        })
        .collect()
}

fn scale_to_u8(counts: &[u64]) -> Vec<u8> {
    let max = counts.iter().copied().max().unwrap_or(0);
    counts
        .iter()
        .map(|&c| {
            if max == 0 {
                0
            } else {
                ((c as f64 * 255.0) / max as f64).round() as u8
            }
        })
        .collect()
}

pub fn error_heatmap(model: &Model, pages: &[Page], tau: f32) -> Result<ErrorHeatMap> {
    let side = model.window_side();
    let mut map = ErrorHeatMap::new(side);
    for page in pages {
        page.image.ensure_same_dims(&page.gt)?;
        let (grid, windows) = split_into_windows(&page.image, side)?;
        let (_, gt_windows) = split_into_windows(&page.gt, side)?;
        let acts = model.window_activations(&windows)?;
        for ((&(r0, c0), act), gt) in grid.origins.iter().zip(&acts).zip(&gt_windows) {
            let pred = binarize_activations(act, tau)?;
            map.accumulate(&pred, gt, page.image.height() - r0, page.image.width() - c0)?;
        }
    }
    Ok(map)
}

/// F-m of models trained on one corpus (rows) on the test pages of each
/// corpus (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct DomainMatrix {
    pub train_corpora: Vec<String>,
    pub test_corpora: Vec<String>,
    pub fm: Vec<Vec<f64>>,
}

impl DomainMatrix {
    pub fn row_average(&self, row: usize) -> f64 {
        let r = &self.fm[row];
        r.iter().sum::<f64>() / r.len() as f64
    }

    pub fn get(&self, train: &str, test: &str) -> Option<f64> {
        let i = self.train_corpora.iter().position(|n| n == train)?;
        let j = self.test_corpora.iter().position(|n| n == test)?;
        Some(self.fm[i][j])
    }

    /// `train_corpus,test_corpus,fm` rows; each training corpus ends with an
    /// `avg` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("train_corpus,test_corpus,fm\n");
        for (i, train) in self.train_corpora.iter().enumerate() {
            for (j, test) in self.test_corpora.iter().enumerate() {
                let _ = writeln!(out, "{train},{test},{:.6}", self.fm[i][j]);
            }
            let _ = writeln!(out, "{train},avg,{:.6}", self.row_average(i));
        }
        out
    }
}

pub fn domain_matrix(models: &[(String, Model)], tests: &[(String, Vec<Page>)], tau: f32) -> Result<DomainMatrix> {
    if models.is_empty() {
        return Err(Error::invalid("domain matrix needs at least one model"));
    }
    if tests.is_empty() {
        return Err(Error::invalid("domain matrix needs at least one test corpus"));
    }
    let fm = models
        .iter()
        .map(|(_, model)| {
            tests
                .iter()
                .map(|(_, pages)| Ok(evaluate_model(model, pages, tau)?.micro_f_measure()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(DomainMatrix {
        train_corpora: models.iter().map(|(n, _)| n.clone()).collect(),
        test_corpora: tests.iter().map(|(n, _)| n.clone()).collect(),
        fm,
    })
}
