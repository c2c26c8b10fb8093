use super::conv::{self, ConvGeometry, Padding};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Guard added to the soft F-measure denominator.
pub const SOFT_F_EPSILON: f64 = 1e-7;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Arg-max positions recorded by 2×2 max-pooling: for each pooled element,
/// the flat index of the winning element in the pooled tensor's input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Switches {
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeometry,
    },
    Deconv {
        y: Var,
        w: Var,
        b: Var,
        geom: ConvGeometry,
    },
    MaxPool {
        x: Var,
        indices: Vec<usize>,
    },
    Unpool {
        x: Var,
        indices: Vec<usize>,
    },
    Upsample {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Relu {
        x: Var,
    },
    Add {
        x: Var,
        y: Var,
    },
    SoftF {
        pred: Var,
        gt: Vec<f64>,
        tp: f64,
        denom: f64,
    },
}

struct Node<T> {
    tensor: Tensor<T>,
    op: Op,
    needs_grad: bool,
}

/// A tape of tensor operations, differentiated in reverse by
/// [`backward`](Graph::backward).
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, tensor: Tensor<T>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { tensor, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records data that gradients do not flow into.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].tensor
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].tensor.grad()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Cross-correlation of `x` `[n, cin, h, w]` with `w` `[cout, cin, k, k]`
    /// plus bias `b` `[cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let (cout, wcin, kh, kw) = self.value(w).dims4()?;
        if wcin != cin || kh != kw {
            return Err(Error::shape(format!(
                "conv2d: input has {cin} channels, kernel shape {:?}",
                self.value(w).shape()
            )));
        }
        self.check_bias(b, cout)?;
        let geom = ConvGeometry::new(cin, cout, kh, stride, h, wd, padding)?;
        let out = conv::conv_forward(
            &geom,
            n,
            self.value(x).values(),
            self.value(w).values(),
            self.value(b).values(),
        );
        let t = Tensor::new([n, cout, geom.out_rows, geom.out_cols], out)?;
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(t, Op::Conv { x, w, b, geom }, needs))
    }

    /// Transposed convolution of `y` `[n, cin, h, w]` with `w` `[cin, cout, k, k]`;
    /// spatial dims grow by `stride`. The adjoint of `conv2d` with the same
    /// kernel, stride and same-padding.
    pub fn deconv2d(&mut self, y: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (n, cin, h, wd) = self.value(y).dims4()?;
        let (wcin, cout, kh, kw) = self.value(w).dims4()?;
        if wcin != cin || kh != kw {
            return Err(Error::shape(format!(
                "deconv2d: input has {cin} channels, kernel shape {:?}",
                self.value(w).shape()
            )));
        }
        self.check_bias(b, cout)?;
        let geom = ConvGeometry::new(cout, cin, kh, stride, h * stride, wd * stride, Padding::Same)?;
        debug_assert_eq!((geom.out_rows, geom.out_cols), (h, wd));
        let out = conv::deconv_forward(
            &geom,
            n,
            self.value(y).values(),
            self.value(w).values(),
            self.value(b).values(),
        );
        let t = Tensor::new([n, cout, h * stride, wd * stride], out)?;
        let needs = self.needs(y) || self.needs(w) || self.needs(b);
        Ok(self.push(t, Op::Deconv { y, w, b, geom }, needs))
    }

    fn check_bias(&self, b: Var, channels: usize) -> Result<()> {
        if self.value(b).len() != channels {
            return Err(Error::shape(format!(
                "bias has {} values for {channels} channels",
                self.value(b).len()
            )));
        }
        Ok(())
    }

    /// 2×2 non-overlapping max-pooling. Ties go to the first element in
    /// row-major order.
    pub fn maxpool2(&mut self, x: Var) -> Result<(Var, Switches)> {
        let src = self.value(x);
        let (n, c, h, w) = src.dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(format!("maxpool2 needs even spatial dims, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let xs = src.values();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut indices = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let first = base + 2 * oy * w + 2 * ox;
                    let mut best = first;
                    for cand in [first + 1, first + w, first + w + 1] {
                        if xs[cand] > xs[best] {
                            best = cand;
                        }
                    }
                    out.push(xs[best]);
                    indices.push(best);
                }
            }
        }
        let switches = Switches {
            input_shape: vec![n, c, h, w],
            output_shape: vec![n, c, oh, ow],
            indices: indices.clone(),
        };
        let t = Tensor::new([n, c, oh, ow], out)?;
        let needs = self.needs(x);
        Ok((self.push(t, Op::MaxPool { x, indices }, needs), switches))
    }

    /// Places each element of `x` at its switch position in a zero tensor of
    /// the pooled input's shape.
    pub fn unpool2(&mut self, x: Var, switches: &Switches) -> Result<Var> {
        let src = self.value(x);
        if src.shape() != switches.output_shape.as_slice() || switches.indices.len() != src.len() {
            return Err(Error::shape(format!(
                "unpool2: input shape {:?} does not match switches {:?}",
                src.shape(),
                switches.output_shape
            )));
        }
        let total: usize = switches.input_shape.iter().product();
        if switches.indices.iter().any(|&i| i >= total) {
            return Err(Error::shape("unpool2: switch index out of range"));
        }
        let mut out = vec![T::zero(); total];
        for (&i, &v) in switches.indices.iter().zip(src.values()) {
            out[i] = v;
        }
        let t = Tensor::new(switches.input_shape.clone(), out)?;
        let needs = self.needs(x);
        Ok(self.push(
            t,
            Op::Unpool {
                x,
                indices: switches.indices.clone(),
            },
            needs,
        ))
    }

    /// Nearest-neighbour 2× up-sampling.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let (n, c, h, w) = src.dims4()?;
        let xs = src.values();
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); n * c * oh * ow];
        for plane in 0..n * c {
            for y in 0..oh {
                for xx in 0..ow {
                    out[plane * oh * ow + y * ow + xx] = xs[plane * h * w + (y / 2) * w + xx / 2];
                }
            }
        }
        let t = Tensor::new([n, c, oh, ow], out)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Upsample { x }, needs))
    }

    /// Logistic sigmoid. Outputs are kept strictly inside `(0, 1)`.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let lo = T::min_positive_value();
        let hi = T::one() - T::epsilon() / (T::one() + T::one());
        let src = self.value(x);
        let out = src.values().iter().map(|&v| sigmoid(v).max(lo).min(hi)).collect();
        let t = Tensor::new(src.shape().to_vec(), out).expect("same shape");
        let needs = self.needs(x);
        self.push(t, Op::Sigmoid { x }, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let out = src.values().iter().map(|&v| v.max(T::zero())).collect();
        let t = Tensor::new(src.shape().to_vec(), out).expect("same shape");
        let needs = self.needs(x);
        self.push(t, Op::Relu { x }, needs)
    }

    pub fn add(&mut self, x: Var, y: Var) -> Result<Var> {
        let (a, b) = (self.value(x), self.value(y));
        if a.shape() != b.shape() {
            return Err(Error::shape(format!("add: {:?} vs {:?}", a.shape(), b.shape())));
        }
        let out = a.values().iter().zip(b.values()).map(|(&p, &q)| p + q).collect();
        let t = Tensor::new(a.shape().to_vec(), out)?;
        let needs = self.needs(x) || self.needs(y);
        Ok(self.push(t, Op::Add { x, y }, needs))
    }

    /// `1 − 2·TP/(2·TP + FP + FN + ε)` with the soft counts
    /// `TP = Σp·y`, `FP = Σp·(1−y)`, `FN = Σ(1−p)·y`.
    pub fn soft_fmeasure_loss(&mut self, pred: Var, gt: &[T]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != gt.len() {
            return Err(Error::shape(format!(
                "soft F-measure: {} predictions for {} labels",
                p.len(),
                gt.len()
            )));
        }
        if gt.iter().any(|&y| y != T::zero() && y != T::one()) {
            return Err(Error::invalid("soft F-measure ground truth must be 0 or 1"));
        }
        let gt: Vec<f64> = gt.iter().map(|v| v.to_f64().expect("real")).collect();
        let (mut tp, mut sum_p, mut sum_y) = (0.0f64, 0.0f64, 0.0f64);
        for (&pv, &y) in p.values().iter().zip(&gt) {
            let pv = pv.to_f64().expect("real");
            tp += pv * y;
            sum_p += pv;
            sum_y += y;
        }
        // 2TP + FP + FN = Σp + Σy
        let denom = sum_p + sum_y + SOFT_F_EPSILON;
        let loss = 1.0 - 2.0 * tp / denom;
        let needs = self.needs(pred);
        Ok(self.push(
            Tensor::scalar(T::from_f64_lossy(loss)),
            Op::SoftF { pred, gt, tp, denom },
            needs,
        ))
    }

    /// Back-propagates from the scalar `root`, filling gradients of every
    /// recorded value that depends on a parameter.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::shape("backward needs a scalar root"));
        }
        for node in &mut self.nodes {
            node.tensor.set_grad(None)?;
        }
        self.nodes[root.0].tensor.set_grad(Some(vec![T::one()]))?;
        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(gout) = self.nodes[i].tensor.take_grad() else {
                continue;
            };
            let (before, rest) = self.nodes.split_at_mut(i);
            backprop_node(before, &rest[0], &gout);
            rest[0].tensor.set_grad(Some(gout))?;
        }
        Ok(())
    }
}

#[inline]
fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Pushes `gout` (gradient of `node`'s output) into the inputs of `node`,
/// all of which live in `before`.
fn backprop_node<T: Real>(before: &mut [Node<T>], node: &Node<T>, gout: &[T]) {
    match &node.op {
        Op::Leaf => {}
        Op::Conv { x, w, b, geom } => {
            let batch = node.tensor.shape()[0];
            let mut dw = vec![T::zero(); before[w.0].tensor.len()];
            let mut db = vec![T::zero(); before[b.0].tensor.len()];
            let mut dx = before[x.0]
                .needs_grad
                .then(|| vec![T::zero(); before[x.0].tensor.len()]);
            conv::conv_backward(
                geom,
                batch,
                before[x.0].tensor.values(),
                before[w.0].tensor.values(),
                gout,
                dx.as_deref_mut(),
                &mut dw,
                &mut db,
            );
            accumulate(before, *w, &dw);
            accumulate(before, *b, &db);
            if let Some(dx) = dx {
                accumulate(before, *x, &dx);
            }
        }
        Op::Deconv { y, w, b, geom } => {
            let batch = node.tensor.shape()[0];
            let mut dw = vec![T::zero(); before[w.0].tensor.len()];
            let mut db = vec![T::zero(); before[b.0].tensor.len()];
            let mut dy = before[y.0]
                .needs_grad
                .then(|| vec![T::zero(); before[y.0].tensor.len()]);
            conv::deconv_backward(
                geom,
                batch,
                before[y.0].tensor.values(),
                before[w.0].tensor.values(),
                gout,
                dy.as_deref_mut(),
                &mut dw,
                &mut db,
            );
            accumulate(before, *w, &dw);
            accumulate(before, *b, &db);
            if let Some(dy) = dy {
                accumulate(before, *y, &dy);
            }
        }
        Op::MaxPool { x, indices } => {
            let dx = before[x.0].tensor.grad_mut_or_zero();
            for (&i, &g) in indices.iter().zip(gout) {
                dx[i] += g;
            }
        }
        Op::Unpool { x, indices } => {
            let dx: Vec<T> = indices.iter().map(|&i| gout[i]).collect();
            accumulate(before, *x, &dx);
        }
        Op::Upsample { x } => {
            let (n, c, oh, ow) = node.tensor.dims4().expect("4-D");
            let (h, w) = (oh / 2, ow / 2);
            let dx = before[x.0].tensor.grad_mut_or_zero();
            for plane in 0..n * c {
                for y in 0..oh {
                    for xx in 0..ow {
                        dx[plane * h * w + (y / 2) * w + xx / 2] += gout[plane * oh * ow + y * ow + xx];
                    }
                }
            }
        }
        Op::Sigmoid { x } => {
            let s = node.tensor.values();
            let dx: Vec<T> = s.iter().zip(gout).map(|(&s, &g)| g * s * (T::one() - s)).collect();
            accumulate(before, *x, &dx);
        }
        Op::Relu { x } => {
            let xs = before[x.0].tensor.values();
            let dx: Vec<T> = xs
                .iter()
                .zip(gout)
                .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                .collect();
            accumulate(before, *x, &dx);
        }
        Op::Add { x, y } => {
            accumulate(before, *x, gout);
            accumulate(before, *y, gout);
        }
        Op::SoftF { pred, gt, tp, denom } => {
            // d(1 - 2TP/D)/dp_i = -(2·y_i·D - 2·TP) / D²
            let g = gout[0].to_f64().expect("real");
            let d2 = denom * denom;
            let dp: Vec<T> = gt
                .iter()
                .map(|&y| T::from_f64_lossy(-g * (2.0 * y * denom - 2.0 * tp) / d2))
                .collect();
            accumulate(before, *pred, &dp);
        }
    }
}

fn accumulate<T: Real>(before: &mut [Node<T>], v: Var, delta: &[T]) {
    let node = &mut before[v.0];
    if node.needs_grad {
        node.tensor.accumulate_grad(delta);
    }
}
