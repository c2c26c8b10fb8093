//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

pub mod gradcheck;

use binkit::imagery::{reflect_index, GrayImage};
use binkit::tensor::{Graph, Tensor, Var};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_levels(rng: &mut impl Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.gen()).collect()
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::from_u8(w, h, &random_levels(rng, w * h)).unwrap()
}

/// Otsu by exhaustive search: the textbook between-class variance
/// `w0·w1·(μ0 − μ1)²` for every split, first maximum wins.
pub fn otsu_bruteforce(levels: &[u8]) -> u8 {
    let mut hist = [0u64; 256];
    for &v in levels {
        hist[v as usize] += 1;
    }
    let total = levels.len() as f64;
    let mut best: Option<(u8, f64)> = None;
    for t in 0..256usize {
        let n0: u64 = hist[..=t].iter().sum();
        let n1 = levels.len() as u64 - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s0: u64 = hist[..=t].iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
        let s1: u64 = hist[t + 1..]
            .iter()
            .enumerate()
            .map(|(i, &c)| (i + t + 1) as u64 * c)
            .sum();
        let (w0, w1) = (n0 as f64 / total, n1 as f64 / total);
        let (m0, m1) = (s0 as f64 / n0 as f64, s1 as f64 / n1 as f64);
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(_, b)| var > b) {
            best = Some((t as u8, var));
        }
    }
    best.map_or(levels[0], |(t, _)| t)
}

/// Mean and population standard deviation of every `side`×`side`
/// neighbourhood, summed directly over a reflect-padded copy.
pub fn naive_local_stats(levels: &[u8], w: usize, h: usize, side: usize) -> (Vec<f64>, Vec<f64>) {
    let r = side / 2;
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    let padded: Vec<f64> = (0..ph)
        .flat_map(|y| {
            (0..pw).map(move |x| {
                let sy = reflect_index(y as isize - r as isize, h);
                let sx = reflect_index(x as isize - r as isize, w);
                (sy, sx)
            })
        })
        .map(|(sy, sx)| levels[sy * w + sx] as f64)
        .collect();
    let area = (side * side) as f64;
    let mut mean = Vec::with_capacity(w * h);
    let mut std = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let rows = || (0..side).map(|dy| &padded[(y + dy) * pw + x..(y + dy) * pw + x + side]);
            let m = rows().map(|row| row.iter().sum::<f64>()).sum::<f64>() / area;
            let var = rows()
                .map(|row| row.iter().map(|v| (v - m) * (v - m)).sum::<f64>())
                .sum::<f64>()
                / area;
            mean.push(m);
            std.push(var.sqrt());
        }
    }
    (mean, std)
}

/// Micro F-measure straight from the definition.
pub fn f_measure_from_masks(pred: &[bool], gt: &[bool]) -> f64 {
    let tp = pred.iter().zip(gt).filter(|(&p, &g)| p && g).count() as f64;
    let fp = pred.iter().zip(gt).filter(|(&p, &g)| p && !g).count() as f64;
    let fn_ = pred.iter().zip(gt).filter(|(&p, &g)| !p && g).count() as f64;
    if tp + fp + fn_ == 0.0 {
        1.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error. Central differences at
/// `FD_STEP` carry truncation error around 1e-11 on these graphs, which
/// swamps gradients below about 1e-7; beneath the floor the check becomes
/// an absolute one at `FD_TOLERANCE * FD_FLOOR`.
pub const FD_FLOOR: f64 = 1e-6;

/// Central finite-difference check of every gradient of the scalar built by
/// `f` from parameter leaves initialised to `inputs`. Returns the worst
/// relative error `|a − n| / max(|a| + |n|, FD_FLOOR)`.
pub fn max_gradient_error(inputs: &[Tensor<f64>], f: impl Fn(&mut Graph<f64>, &[Var]) -> Var) -> f64 {
    let eval = |values: &[Tensor<f64>]| -> (Graph<f64>, Vec<Var>, Var) {
        let mut g = Graph::new();
        let leaves: Vec<Var> = values.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &leaves);
        (g, leaves, out)
    };
    let (mut g, leaves, out) = eval(inputs);
    assert_eq!(g.value(out).len(), 1, "check needs a scalar");
    g.backward(out).unwrap();
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).map_or(vec![0.0; t.len()], |d| d.to_vec()))
        .collect();

    let mut worst = 0.0f64;
    for (k, t) in inputs.iter().enumerate() {
        for i in 0..t.len() {
            let probe = |delta: f64| {
                let mut moved = inputs.to_vec();
                moved[k].values_mut()[i] += delta;
                let (g, _, out) = eval(&moved);
                g.value(out).values()[0]
            };
            let numeric = (probe(FD_STEP) - probe(-FD_STEP)) / (2.0 * FD_STEP);
            let a = analytic[k][i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(FD_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Tensor with values uniform in `[lo, hi)`.
pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

/// Distinct values in `[-2, 2]` whose magnitudes and pairwise gaps are all at
/// least `2 / n`, so relu kinks and pooling ties stay clear of the
/// finite-difference step for tensors of up to a few hundred elements.
pub fn separated(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    assert!(2.0 / n as f64 > 4.0 * FD_STEP, "tensor too large for separated values");
    let mut vals: Vec<f64> = (0..n)
        .map(|i| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * 2.0 * (i + 1) as f64 / n as f64
        })
        .collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.gen_range(0..=i));
    }
    Tensor::new(shape.to_vec(), vals).unwrap()
}

pub fn random_labels(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut y: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
    y[0] = 1.0;
    y
}
