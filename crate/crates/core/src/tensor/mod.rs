//! Dense channel-major tensors and the numerical kernels the networks are
//! built from. Every differentiable kernel comes with a hand-written
//! backward pass.

mod activation;
mod channels;
pub(crate) mod conv;
pub(crate) mod resize;

pub use activation::{leaky_relu_backward, leaky_relu_forward, sigmoid, sigmoid_backward};
pub use channels::{concat_channels, split_channels};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads};
pub use resize::{resize_bilinear, resize_bilinear_backward};

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating point element type. Training and inference use `f32`; gradient
/// checks run the same code in `f64`.
pub trait Real:
    Float + Default + fmt::Debug + fmt::Display + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` for strided row/column layouts.
    ///
    /// # Safety
    /// Every element addressed by the (m, k, n) extents and strides must lie
    /// inside the backing allocations; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
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
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm(
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
    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    unsafe fn gemm(
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

/// `c = a · b + beta · c` over strided views of row-major buffers. Bounds of
/// every view are checked before the kernel runs.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_strided<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    (rsa, csa): (usize, usize),
    b: &[T],
    (rsb, csb): (usize, usize),
    beta: T,
    c: &mut [T],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: output view out of bounds");
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len(), "gemm: lhs view out of bounds");
        assert!(last(k, n, rsb, csb) < b.len(), "gemm: rhs view out of bounds");
    }
    // SAFETY: the assertions above bound every strided access, and `c` is a
    // unique borrow so it cannot alias `a` or `b`.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "shape components must be positive, got {channels}x{height}x{width}"
            )));
        }
        Ok(Shape { channels, height, width })
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn same_spatial(&self, other: &Shape) -> bool {
        self.height == other.height && self.width == other.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Channel-major (then row, then column) dense array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, data: vec![T::zero(); shape.len()] }
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        Tensor { shape, data: vec![value; shape.len()] }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::invalid(format!(
                "tensor of shape {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for y in 0..shape.height {
                for x in 0..shape.width {
                    data.push(f(c, y, x));
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let p = self.shape.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let p = self.shape.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn expect_shape(&self, op: &'static str, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(Error::shape(op, expected, self.shape));
        }
        Ok(())
    }
}

/// Convolution filters for one layer: `out × in × kh × kw` weights plus one
/// bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelBank<T> {
    out_channels: usize,
    in_channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> KernelBank<T> {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel_h: usize, kernel_w: usize) -> Result<Self> {
        let n = Self::check_dims(out_channels, in_channels, kernel_h, kernel_w)?;
        Ok(KernelBank {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            weights: vec![T::zero(); n],
            bias: vec![T::zero(); out_channels],
        })
    }

    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        let n = Self::check_dims(out_channels, in_channels, kernel_h, kernel_w)?;
        if weights.len() != n {
            return Err(Error::invalid(format!(
                "kernel bank {out_channels}x{in_channels}x{kernel_h}x{kernel_w} needs {n} weights, got {}",
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::invalid(format!(
                "kernel bank needs {out_channels} biases, got {}",
                bias.len()
            )));
        }
        Ok(KernelBank { out_channels, in_channels, kernel_h, kernel_w, weights, bias })
    }

    fn check_dims(out_channels: usize, in_channels: usize, kernel_h: usize, kernel_w: usize) -> Result<usize> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::invalid("kernel bank channel counts must be positive"));
        }
        if kernel_h % 2 == 0 || kernel_w % 2 == 0 {
            return Err(Error::invalid(format!(
                "kernel dims must be odd for same padding, got {kernel_h}x{kernel_w}"
            )));
        }
        Ok(out_channels * in_channels * kernel_h * kernel_w)
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_h(&self) -> usize {
        self.kernel_h
    }

    pub fn kernel_w(&self) -> usize {
        self.kernel_w
    }

    /// Number of values feeding one output: `in × kh × kw`.
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    pub fn weight(&self, o: usize, c: usize, dy: usize, dx: usize) -> T {
        self.weights[((o * self.in_channels + c) * self.kernel_h + dy) * self.kernel_w + dx]
    }

    pub fn cast<U: Real>(&self) -> KernelBank<U> {
        KernelBank {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            kernel_h: self.kernel_h,
            kernel_w: self.kernel_w,
            weights: self.weights.iter().map(|v| U::of(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_rejects_zero_dims() {
        assert!(Shape::new(0, 2, 2).is_err());
        assert!(Shape::new(1, 0, 2).is_err());
        assert_eq!(Shape::new(2, 3, 4).unwrap().len(), 24);
    }

    #[test]
    fn tensor_length_must_match_shape() {
        let s = Shape::new(1, 2, 2).unwrap();
        assert!(Tensor::<f32>::from_vec(s, vec![0.0; 3]).is_err());
        let t = Tensor::<f32>::from_vec(s, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.get(0, 1, 0), 3.0);
    }

    #[test]
    fn kernel_bank_requires_odd_dims() {
        assert!(KernelBank::<f32>::zeros(1, 1, 2, 3).is_err());
        assert!(KernelBank::<f32>::zeros(1, 1, 3, 4).is_err());
        let k = KernelBank::<f32>::zeros(4, 3, 5, 5).unwrap();
        assert_eq!(k.weights.len(), 4 * 3 * 25);
        assert_eq!(k.fan_in(), 75);
    }

    #[test]
    fn gemm_handles_transposed_strides() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm_strided(2, 2, 2, &a, (2, 1), &b, (2, 1), 0.0, &mut c, (2, 1));
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm_strided(2, 2, 2, &a, (1, 2), &b, (2, 1), 0.0, &mut c, (2, 1));
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm_strided(2, 2, 2, &a, (2, 1), &b, (1, 2), 0.0, &mut c, (2, 1));
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
        gemm_strided(2, 2, 2, &a, (2, 1), &b, (2, 1), 1.0, &mut c, (2, 1));
        assert_eq!(c, [36.0, 45.0, 82.0, 103.0]);
    }
}
