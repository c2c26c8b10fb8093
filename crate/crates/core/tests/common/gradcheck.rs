//! Finite-difference checks of every differentiable graph operation.

use binkit::tensor::{Graph, Padding, Tensor, Var};
use rand::Rng;

use super::{max_gradient_error, random_labels, rng, separated, uniform};

/// Worst relative error of one operation over several random shapes.
#[derive(Debug)]
pub struct OpCheck {
    pub op: &'static str,
    pub shapes: usize,
    pub worst: f64,
}

/// Reduces any activation to a scalar through sigmoid and the soft F loss, so
/// every upstream gradient is exercised.
fn reduce(g: &mut Graph<f64>, x: Var, labels: &[f64]) -> Var {
    let p = g.sigmoid(x);
    g.soft_fmeasure_loss(p, labels).unwrap()
}

/// Output length of a graph built from `inputs`, for sizing the labels.
fn out_len(inputs: &[Tensor<f64>], f: &dyn Fn(&mut Graph<f64>, &[Var]) -> Var) -> usize {
    let mut g = Graph::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let v = f(&mut g, &leaves);
    g.value(v).len()
}

fn check(rng: &mut impl Rng, inputs: Vec<Tensor<f64>>, body: impl Fn(&mut Graph<f64>, &[Var]) -> Var) -> f64 {
    let n = out_len(&inputs, &body);
    let labels = random_labels(rng, n);
    max_gradient_error(&inputs, |g, v| {
        let out = body(g, v);
        reduce(g, out, &labels)
    })
}

pub fn conv2d(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let shapes = [
        (1, 1, 1, 3, 5, 5, 1),
        (2, 2, 3, 3, 6, 5, 1),
        (1, 3, 2, 5, 7, 7, 2),
        (2, 2, 2, 3, 8, 6, 2),
        (1, 1, 3, 5, 9, 9, 3),
        (1, 2, 2, 1, 4, 4, 1),
    ];
    let mut worst = 0.0f64;
    for &(n, cin, cout, k, h, w, s) in &shapes {
        let inputs = vec![
            uniform(&mut r, &[n, cin, h, w], -1.0, 1.0),
            uniform(&mut r, &[cout, cin, k, k], -0.5, 0.5),
            uniform(&mut r, &[cout], -0.2, 0.2),
        ];
        worst = worst.max(check(&mut r, inputs, |g, v| {
            g.conv2d(v[0], v[1], v[2], s, Padding::Same).unwrap()
        }));
    }
    OpCheck {
        op: "conv2d",
        shapes: shapes.len(),
        worst,
    }
}

pub fn deconv2d(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let shapes = [
        (1, 1, 1, 3, 3, 3, 1),
        (2, 2, 3, 3, 3, 4, 2),
        (1, 3, 2, 5, 4, 4, 2),
        (1, 2, 2, 3, 2, 3, 3),
        (2, 1, 2, 5, 3, 3, 1),
    ];
    let mut worst = 0.0f64;
    for &(n, cin, cout, k, h, w, s) in &shapes {
        let inputs = vec![
            uniform(&mut r, &[n, cin, h, w], -1.0, 1.0),
            uniform(&mut r, &[cin, cout, k, k], -0.5, 0.5),
            uniform(&mut r, &[cout], -0.2, 0.2),
        ];
        worst = worst.max(check(&mut r, inputs, |g, v| g.deconv2d(v[0], v[1], v[2], s).unwrap()));
    }
    OpCheck {
        op: "deconv2d",
        shapes: shapes.len(),
        worst,
    }
}

const POOL_SHAPES: [[usize; 4]; 5] = [[1, 1, 2, 2], [1, 2, 4, 4], [2, 1, 4, 6], [1, 3, 6, 2], [2, 2, 2, 4]];

pub fn maxpool2(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for shape in POOL_SHAPES {
        let inputs = vec![separated(&mut r, &shape)];
        worst = worst.max(check(&mut r, inputs, |g, v| g.maxpool2(v[0]).unwrap().0));
    }
    OpCheck {
        op: "maxpool2",
        shapes: POOL_SHAPES.len(),
        worst,
    }
}

pub fn unpool2(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for shape in POOL_SHAPES {
        // Switches come from pooling an unrelated tensor of the full shape.
        let mut g = Graph::<f64>::new();
        let src = g.input(separated(&mut r, &shape));
        let (pooled, switches) = g.maxpool2(src).unwrap();
        let pooled_shape = g.value(pooled).shape().to_vec();
        let inputs = vec![uniform(&mut r, &pooled_shape, -1.0, 1.0)];
        worst = worst.max(check(&mut r, inputs, |g, v| g.unpool2(v[0], &switches).unwrap()));
    }
    OpCheck {
        op: "unpool2",
        shapes: POOL_SHAPES.len(),
        worst,
    }
}

pub fn upsample2(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let shapes: [[usize; 4]; 5] = [[1, 1, 1, 1], [1, 2, 2, 3], [2, 1, 3, 3], [1, 3, 2, 2], [2, 2, 1, 4]];
    let mut worst = 0.0f64;
    for shape in shapes {
        let inputs = vec![uniform(&mut r, &shape, -1.0, 1.0)];
        worst = worst.max(check(&mut r, inputs, |g, v| g.upsample2(v[0]).unwrap()));
    }
    OpCheck {
        op: "upsample2",
        shapes: shapes.len(),
        worst,
    }
}

const ELEMENTWISE_SHAPES: [[usize; 4]; 5] = [[1, 1, 1, 3], [1, 2, 3, 3], [2, 1, 4, 2], [1, 3, 2, 5], [3, 1, 2, 2]];

pub fn sigmoid(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for shape in ELEMENTWISE_SHAPES {
        let inputs = vec![uniform(&mut r, &shape, -3.0, 3.0)];
        let n = inputs[0].len();
        let labels = random_labels(&mut r, n);
        worst = worst.max(max_gradient_error(&inputs, |g, v| {
            let p = g.sigmoid(v[0]);
            g.soft_fmeasure_loss(p, &labels).unwrap()
        }));
    }
    OpCheck {
        op: "sigmoid",
        shapes: ELEMENTWISE_SHAPES.len(),
        worst,
    }
}

pub fn relu(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for shape in ELEMENTWISE_SHAPES {
        let inputs = vec![separated(&mut r, &shape)];
        worst = worst.max(check(&mut r, inputs, |g, v| g.relu(v[0])));
    }
    OpCheck {
        op: "relu",
        shapes: ELEMENTWISE_SHAPES.len(),
        worst,
    }
}

pub fn add(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for shape in ELEMENTWISE_SHAPES {
        let inputs = vec![uniform(&mut r, &shape, -1.0, 1.0), uniform(&mut r, &shape, -1.0, 1.0)];
        worst = worst.max(check(&mut r, inputs, |g, v| g.add(v[0], v[1]).unwrap()));
    }
    // The same variable on both sides must receive both contributions.
    let inputs = vec![uniform(&mut r, &[1, 1, 2, 2], -1.0, 1.0)];
    worst = worst.max(check(&mut r, inputs, |g, v| g.add(v[0], v[0]).unwrap()));
    OpCheck {
        op: "add",
        shapes: ELEMENTWISE_SHAPES.len() + 1,
        worst,
    }
}

pub fn soft_fmeasure_loss(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for shape in ELEMENTWISE_SHAPES {
        let inputs = vec![uniform(&mut r, &shape, 0.05, 0.95)];
        let labels = random_labels(&mut r, inputs[0].len());
        worst = worst.max(max_gradient_error(&inputs, |g, v| {
            g.soft_fmeasure_loss(v[0], &labels).unwrap()
        }));
    }
    OpCheck {
        op: "soft_fmeasure_loss",
        shapes: ELEMENTWISE_SHAPES.len(),
        worst,
    }
}

pub fn all(seed: u64) -> Vec<OpCheck> {
    vec![
        conv2d(seed),
        deconv2d(seed + 1),
        maxpool2(seed + 2),
        unpool2(seed + 3),
        upsample2(seed + 4),
        sigmoid(seed + 5),
        relu(seed + 6),
        add(seed + 7),
        soft_fmeasure_loss(seed + 8),
    ]
}

/// `|⟨conv(x), y⟩ − ⟨x, deconv(y)⟩|` relative to the magnitudes involved,
/// worst case over several geometries (zero bias).
pub fn conv_deconv_adjoint(seed: u64) -> f64 {
    let mut r = rng(seed);
    let cases = [
        (1, 1, 1, 3, 4, 4, 1),
        (2, 3, 2, 3, 6, 8, 2),
        (1, 2, 4, 5, 8, 8, 2),
        (1, 4, 3, 5, 9, 6, 3),
        (3, 2, 2, 7, 10, 10, 2),
    ];
    let mut worst = 0.0f64;
    for &(n, cin, cout, k, h, w, s) in &cases {
        let mut g = Graph::<f64>::new();
        let x = g.input(uniform(&mut r, &[n, cin, h, w], -1.0, 1.0));
        let wt = g.input(uniform(&mut r, &[cout, cin, k, k], -1.0, 1.0));
        let bc = g.input(Tensor::zeros([cout]));
        let bd = g.input(Tensor::zeros([cin]));
        let cx = g.conv2d(x, wt, bc, s, Padding::Same).unwrap();
        let y = g.input(uniform(&mut r, g.value(cx).shape(), -1.0, 1.0));
        let dy = g.deconv2d(y, wt, bd, s).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let lhs = dot(g.value(cx).values(), g.value(y).values());
        let rhs = dot(g.value(x).values(), g.value(dy).values());
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    worst
}
