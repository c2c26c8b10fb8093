//! Dense tensors with reverse-mode gradients.
//!
//! Only the operations the auto-encoder topologies need are provided:
//! strided convolution and its transpose, 2×2 max-pooling with switches,
//! unpooling, nearest-neighbour up-sampling, relu / sigmoid / add, and the
//! soft F-measure loss. Computations are recorded on a [`Graph`] and
//! differentiated with [`Graph::backward`].
//!
//! Activations are 4-D, `[batch, channels, rows, cols]`, row-major.

mod conv;
mod tape;

use std::fmt;

use num_traits::{Float, FromPrimitive};

pub use conv::{ConvGeometry, Padding};
pub use tape::{Graph, Switches, Var, SOFT_F_EPSILON};

use crate::error::{Error, Result};

/// Scalar type of a tensor. `f32` is used for training and inference, `f64`
/// for gradient checking.
pub trait Real:
    Float + FromPrimitive + Default + fmt::Debug + std::iter::Sum + std::ops::AddAssign + Send + Sync + 'static
{
    /// `C = alpha·A·B + beta·C` with explicit strides (see `matrixmultiply`).
    ///
    /// # Safety
    /// The strided views described by the dimensions must lie inside the
    /// buffers behind `a`, `b` and `c`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite conversion")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major matrix operand: `data` holds `rows×cols` values, or the
/// transpose of that when `transposed` is set.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, T> {
    pub data: &'a [T],
    pub transposed: bool,
}

impl<'a, T> Mat<'a, T> {
    pub fn n(data: &'a [T]) -> Self {
        Mat {
            data,
            transposed: false,
        }
    }

    pub fn t(data: &'a [T]) -> Self {
        Mat { data, transposed: true }
    }
}

/// `c (m×n) = a (m×k) · b (k×n) [+ c]`.
pub(crate) fn gemm<T: Real>(m: usize, k: usize, n: usize, a: Mat<T>, b: Mat<T>, c: &mut [T], accumulate: bool) {
    assert!(a.data.len() >= m * k && b.data.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a.transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b.transposed { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: lengths asserted above cover every strided access.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// An n-dimensional array with an optional gradient buffer.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    values: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.values.len())
            .field("has_grad", &self.grad.is_some())
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, values: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                values.len()
            )));
        }
        Ok(Tensor {
            shape,
            values,
            grad: None,
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![value; n],
            grad: None,
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor {
            shape,
            values: (0..n).map(&mut f).collect(),
            grad: None,
        }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: vec![1],
            values: vec![v],
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Option<Vec<T>>) -> Result<()> {
        if let Some(g) = &grad {
            if g.len() != self.values.len() {
                return Err(Error::shape("gradient length differs from tensor length"));
            }
        }
        self.grad = grad;
        Ok(())
    }

    pub(crate) fn take_grad(&mut self) -> Option<Vec<T>> {
        self.grad.take()
    }

    /// Adds `delta` into the gradient buffer, allocating it on first use.
    pub(crate) fn accumulate_grad(&mut self, delta: &[T]) {
        match &mut self.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(g, &d)| *g += d),
            None => self.grad = Some(delta.to_vec()),
        }
    }

    pub(crate) fn grad_mut_or_zero(&mut self) -> &mut [T] {
        let n = self.values.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); n])
    }

    /// Same values in another scalar type.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            values: self
                .values
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64().expect("real")))
                .collect(),
            grad: None,
        }
    }

    /// `(batch, channels, rows, cols)` of a 4-D tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape(format!(
                "expected a 4-D tensor, got shape {:?}",
                self.shape
            ))),
        }
    }
}
