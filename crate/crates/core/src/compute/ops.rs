//! Forward and backward kernels for the layer set used by the U-Net
//! generator and the PatchGAN discriminator.
//!
//! Backward functions take the forward inputs (and cached intermediates where
//! needed) and *accumulate* parameter gradients into caller-provided slices,
//! so several backward passes through the same network add up.

use crate::compute::scalar::{matmul, Scalar};
use crate::compute::tensor::{Shape4, Tensor4};
use crate::error::{Error, Result};

/// Convolution weights `(Cout, Cin, k, k)` with an optional per-channel bias.
#[derive(Clone, Copy, Debug)]
pub struct Filter<'a, T> {
    pub weight: &'a [T],
    pub shape: [usize; 4],
    pub bias: Option<&'a [T]>,
}

impl<'a, T: Scalar> Filter<'a, T> {
    pub fn new(weight: &'a [T], shape: [usize; 4], bias: Option<&'a [T]>) -> Self {
        Filter { weight, shape, bias }
    }

    fn validate(&self, input: Shape4) -> Result<()> {
        let [cout, cin, kh, kw] = self.shape;
        if kh != kw || kh == 0 {
            return Err(Error::shape("conv2d", format!("kernel must be square, got {kh}x{kw}")));
        }
        if self.weight.len() != cout * cin * kh * kw {
            return Err(Error::shape(
                "conv2d",
                format!("weights hold {} values for shape {:?}", self.weight.len(), self.shape),
            ));
        }
        if input.c != cin {
            return Err(Error::shape(
                "conv2d",
                format!("input has {} channels, weights expect {cin}", input.c),
            ));
        }
        if let Some(b) = self.bias {
            if b.len() != cout {
                return Err(Error::shape("conv2d", format!("bias has {} values, expected {cout}", b.len())));
            }
        }
        Ok(())
    }
}

/// Spatial output size of a convolution.
pub fn conv_output_size(size: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || size + 2 * padding < k {
        return None;
    }
    Some((size + 2 * padding - k) / stride + 1)
}

#[derive(Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(input: Shape4, k: usize, stride: usize, padding: usize) -> Result<Self> {
        let oh = conv_output_size(input.h, k, stride, padding);
        let ow = conv_output_size(input.w, k, stride, padding);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok(Geometry {
                cin: input.c,
                h: input.h,
                w: input.w,
                k,
                stride,
                padding,
                oh,
                ow,
            }),
            _ => Err(Error::shape(
                "conv2d",
                format!("kernel {k}, stride {stride}, padding {padding} do not fit input {input}"),
            )),
        }
    }

    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Output index range `[lo, hi)` whose input coordinate `o * stride + kk - padding`
    /// falls inside `[0, size)`.
    fn valid_range(&self, kk: usize, size: usize, out: usize) -> (usize, usize) {
        let s = self.stride;
        let p = self.padding;
        let lo = if kk >= p { 0 } else { (p - kk).div_ceil(s) };
        // o * s + kk - p <= size - 1  <=>  o <= (size - 1 + p - kk) / s
        let hi = if size + p < kk + 1 {
            0
        } else {
            ((size - 1 + p - kk) / s + 1).min(out)
        };
        (lo.min(hi), hi)
    }
}

fn im2col<T: Scalar>(g: &Geometry, src: &[T], cols: &mut [T]) {
    let ncols = g.cols();
    for ci in 0..g.cin {
        let plane = &src[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            let (ylo, yhi) = g.valid_range(ky, g.h, g.oh);
            for kx in 0..g.k {
                let (xlo, xhi) = g.valid_range(kx, g.w, g.ow);
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                dst.fill(T::zero());
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ky - g.padding;
                    let drow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let srow = &plane[iy * g.w..(iy + 1) * g.w];
                    if g.stride == 1 {
                        let start = xlo + kx - g.padding;
                        drow[xlo..xhi].copy_from_slice(&srow[start..start + (xhi - xlo)]);
                    } else {
                        for ox in xlo..xhi {
                            drow[ox] = srow[ox * g.stride + kx - g.padding];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(g: &Geometry, cols: &[T], dst: &mut [T]) {
    let ncols = g.cols();
    for ci in 0..g.cin {
        let plane = &mut dst[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            let (ylo, yhi) = g.valid_range(ky, g.h, g.oh);
            for kx in 0..g.k {
                let (xlo, xhi) = g.valid_range(kx, g.w, g.ow);
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ky - g.padding;
                    let srow = &src[oy * g.ow..(oy + 1) * g.ow];
                    let prow = &mut plane[iy * g.w..(iy + 1) * g.w];
                    for ox in xlo..xhi {
                        prow[ox * g.stride + kx - g.padding] += srow[ox];
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation with zero padding.
pub fn conv2d<T: Scalar>(input: &Tensor4<T>, filter: Filter<'_, T>, stride: usize, padding: usize) -> Result<Tensor4<T>> {
    let s = input.shape();
    filter.validate(s)?;
    let [cout, _, k, _] = filter.shape;
    let g = Geometry::new(s, k, stride, padding)?;
    let out_shape = Shape4::new(s.n, cout, g.oh, g.ow);
    let mut out = vec![T::zero(); out_shape.len()];
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    let x = input.data();
    for n in 0..s.n {
        im2col(&g, &x[n * s.item()..(n + 1) * s.item()], &mut cols);
        let dst = &mut out[n * out_shape.item()..(n + 1) * out_shape.item()];
        matmul(cout, g.rows(), g.cols(), filter.weight, false, &cols, false, dst, false);
        if let Some(bias) = filter.bias {
            for (co, &b) in bias.iter().enumerate() {
                for v in &mut dst[co * g.cols()..(co + 1) * g.cols()] {
                    *v += b;
                }
            }
        }
    }
    Ok(Tensor4::from_parts(out_shape, out))
}

/// Backward pass of [`conv2d`]. Adds the weight gradient into `grad_weight`
/// and returns the gradient with respect to the input. The bias gradient is
/// computed separately by [`conv2d_bias_backward`].
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor4<T>,
    weight: &[T],
    shape: [usize; 4],
    stride: usize,
    padding: usize,
    grad_out: &Tensor4<T>,
    grad_weight: &mut [T],
) -> Result<Tensor4<T>> {
    let s = input.shape();
    Filter::new(weight, shape, None).validate(s)?;
    let [cout, _, k, _] = shape;
    let g = Geometry::new(s, k, stride, padding)?;
    let go = grad_out.shape();
    if go != Shape4::new(s.n, cout, g.oh, g.ow) {
        return Err(Error::shape(
            "conv2d_backward",
            format!("grad_out {go} does not match output ({}, {cout}, {}, {})", s.n, g.oh, g.ow),
        ));
    }
    if grad_weight.len() != weight.len() {
        return Err(Error::shape("conv2d_backward", "weight gradient slot has the wrong length"));
    }
    let mut grad_in = vec![T::zero(); s.len()];
    let mut cols = vec![T::zero(); g.rows() * g.cols()];
    let mut grad_cols = vec![T::zero(); g.rows() * g.cols()];
    let x = input.data();
    let dy = grad_out.data();
    for n in 0..s.n {
        im2col(&g, &x[n * s.item()..(n + 1) * s.item()], &mut cols);
        let dyn_ = &dy[n * go.item()..(n + 1) * go.item()];
        // dW (cout x rows) += dY (cout x cols) * cols^T
        matmul(cout, g.cols(), g.rows(), dyn_, false, &cols, true, grad_weight, true);
        // dCols (rows x cols) = W^T * dY
        matmul(g.rows(), cout, g.cols(), weight, true, dyn_, false, &mut grad_cols, false);
        col2im(&g, &grad_cols, &mut grad_in[n * s.item()..(n + 1) * s.item()]);
    }
    Ok(Tensor4::from_parts(s, grad_in))
}

/// Adds the per-channel sum of `grad_out` into `grad_bias`.
pub fn conv2d_bias_backward<T: Scalar>(grad_out: &Tensor4<T>, grad_bias: &mut [T]) -> Result<()> {
    let s = grad_out.shape();
    if grad_bias.len() != s.c {
        return Err(Error::shape("conv2d_bias_backward", format!("{} slots for {} channels", grad_bias.len(), s.c)));
    }
    let plane = s.plane();
    for (i, chunk) in grad_out.data().chunks(plane).enumerate() {
        grad_bias[i % s.c] += chunk.iter().copied().sum::<T>();
    }
    Ok(())
}

/// Nearest-neighbour upsampling by an integer factor.
pub fn upsample_nearest<T: Scalar>(input: &Tensor4<T>, factor: usize) -> Result<Tensor4<T>> {
    if factor != 2 {
        return Err(Error::Unsupported(format!("upsampling factor {factor} (only 2 is supported)")));
    }
    let s = input.shape();
    let out_shape = Shape4::new(s.n, s.c, s.h * 2, s.w * 2);
    let mut out = Vec::with_capacity(out_shape.len());
    for plane in input.data().chunks(s.plane()) {
        for y in 0..out_shape.h {
            let row = &plane[(y / 2) * s.w..(y / 2 + 1) * s.w];
            for &v in row {
                out.push(v);
                out.push(v);
            }
        }
    }
    Ok(Tensor4::from_parts(out_shape, out))
}

pub fn upsample_nearest_backward<T: Scalar>(grad_out: &Tensor4<T>, factor: usize) -> Result<Tensor4<T>> {
    if factor != 2 {
        return Err(Error::Unsupported(format!("upsampling factor {factor} (only 2 is supported)")));
    }
    let s = grad_out.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::shape("upsample_backward", format!("odd gradient size {s}")));
    }
    let in_shape = Shape4::new(s.n, s.c, s.h / 2, s.w / 2);
    let mut out = vec![T::zero(); in_shape.len()];
    for (plane_in, plane_out) in grad_out.data().chunks(s.plane()).zip(out.chunks_mut(in_shape.plane())) {
        for y in 0..s.h {
            let dst = &mut plane_out[(y / 2) * in_shape.w..(y / 2 + 1) * in_shape.w];
            for (x, &g) in plane_in[y * s.w..(y + 1) * s.w].iter().enumerate() {
                dst[x / 2] += g;
            }
        }
    }
    Ok(Tensor4::from_parts(in_shape, out))
}

/// Nearest-neighbour x2 upsampling followed by a stride-1 "same" convolution.
pub fn upsample_conv<T: Scalar>(input: &Tensor4<T>, filter: Filter<'_, T>, factor: usize) -> Result<Tensor4<T>> {
    let up = upsample_nearest(input, factor)?;
    let k = filter.shape[2];
    if k % 2 == 0 {
        return Err(Error::Unsupported(format!("upsample_conv needs an odd kernel, got {k}")));
    }
    conv2d(&up, filter, 1, k / 2)
}

pub fn upsample_conv_backward<T: Scalar>(
    input: &Tensor4<T>,
    weight: &[T],
    shape: [usize; 4],
    factor: usize,
    grad_out: &Tensor4<T>,
    grad_weight: &mut [T],
) -> Result<Tensor4<T>> {
    let up = upsample_nearest(input, factor)?;
    let grad_up = conv2d_backward(&up, weight, shape, 1, shape[2] / 2, grad_out, grad_weight)?;
    upsample_nearest_backward(&grad_up, factor)
}

/// Per-sample, per-channel statistics kept from an instance-norm forward pass.
#[derive(Clone, Debug)]
pub struct NormCache<T> {
    pub normalized: Tensor4<T>,
    pub inv_std: Vec<T>,
}

pub const DEFAULT_NORM_EPS: f64 = 1e-5;

/// Instance normalization: each `(n, c)` plane is shifted to zero mean and
/// unit variance, then scaled by `gain[c]` and shifted by `offset[c]`.
pub fn instance_norm<T: Scalar>(
    input: &Tensor4<T>,
    gain: &[T],
    offset: &[T],
    eps: T,
) -> Result<(Tensor4<T>, NormCache<T>)> {
    let s = input.shape();
    if gain.len() != s.c || offset.len() != s.c {
        return Err(Error::shape(
            "instance_norm",
            format!("gain/offset lengths {}/{} for {} channels", gain.len(), offset.len(), s.c),
        ));
    }
    if eps <= T::zero() {
        return Err(Error::InvalidArgument("instance_norm eps must be > 0".into()));
    }
    let plane = s.plane();
    let count = plane as f64;
    let mut normalized = Vec::with_capacity(s.len());
    let mut out = Vec::with_capacity(s.len());
    let mut inv_std = Vec::with_capacity(s.n * s.c);
    for (i, chunk) in input.data().chunks(plane).enumerate() {
        let c = i % s.c;
        let mean = chunk.iter().map(|v| v.to_f64().unwrap()).sum::<f64>() / count;
        let var = chunk
            .iter()
            .map(|v| {
                let d = v.to_f64().unwrap() - mean;
                d * d
            })
            .sum::<f64>()
            / count;
        let istd = T::of(1.0 / (var + eps.to_f64().unwrap()).sqrt());
        let mean = T::of(mean);
        for &v in chunk {
            let xh = (v - mean) * istd;
            normalized.push(xh);
            out.push(gain[c] * xh + offset[c]);
        }
        inv_std.push(istd);
    }
    Ok((
        Tensor4::from_parts(s, out),
        NormCache {
            normalized: Tensor4::from_parts(s, normalized),
            inv_std,
        },
    ))
}

/// Backward pass of [`instance_norm`]; accumulates into `grad_gain` / `grad_offset`.
pub fn instance_norm_backward<T: Scalar>(
    cache: &NormCache<T>,
    gain: &[T],
    grad_out: &Tensor4<T>,
    grad_gain: &mut [T],
    grad_offset: &mut [T],
) -> Result<Tensor4<T>> {
    let s = grad_out.shape();
    if cache.normalized.shape() != s {
        return Err(Error::shape(
            "instance_norm_backward",
            format!("grad {s} vs cached {}", cache.normalized.shape()),
        ));
    }
    let plane = s.plane();
    let count = T::of(plane as f64);
    let mut grad_in = Vec::with_capacity(s.len());
    for (i, (dy, xh)) in grad_out
        .data()
        .chunks(plane)
        .zip(cache.normalized.data().chunks(plane))
        .enumerate()
    {
        let c = i % s.c;
        let mut sum_dy = T::zero();
        let mut sum_dy_xh = T::zero();
        for (&g, &x) in dy.iter().zip(xh) {
            sum_dy += g;
            sum_dy_xh += g * x;
        }
        grad_gain[c] += sum_dy_xh;
        grad_offset[c] += sum_dy;
        // dx = gain * istd / N * (N * dy - sum(dy) - xh * sum(dy * xh))
        let scale = gain[c] * cache.inv_std[i] / count;
        for (&g, &x) in dy.iter().zip(xh) {
            grad_in.push(scale * (count * g - sum_dy - x * sum_dy_xh));
        }
    }
    Ok(Tensor4::from_parts(s, grad_in))
}

/// Elementwise activation functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::LeakyRelu(a) => {
                if x > T::zero() {
                    x
                } else {
                    x * T::of(a)
                }
            }
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
        }
    }

    /// Derivative given the input `x` and output `y`. Kinks take subgradient 0.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Activation::LeakyRelu(a) => {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    T::of(a)
                } else {
                    T::zero()
                }
            }
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
        }
    }

    /// Inputs at which the derivative is discontinuous.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            Activation::LeakyRelu(_) | Activation::Relu => &[0.0],
            Activation::Tanh | Activation::Sigmoid => &[],
        }
    }
}

pub fn activation<T: Scalar>(input: &Tensor4<T>, kind: Activation) -> Tensor4<T> {
    input.map(|v| kind.apply(v))
}

pub fn activation_backward<T: Scalar>(
    input: &Tensor4<T>,
    output: &Tensor4<T>,
    kind: Activation,
    grad_out: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    if input.shape() != grad_out.shape() || output.shape() != grad_out.shape() {
        return Err(Error::shape("activation_backward", format!("{} vs {}", input.shape(), grad_out.shape())));
    }
    let data = input
        .data()
        .iter()
        .zip(output.data())
        .zip(grad_out.data())
        .map(|((&x, &y), &g)| g * kind.derivative(x, y))
        .collect();
    Ok(Tensor4::from_parts(input.shape(), data))
}

/// Concatenate along channels, `a` first.
pub fn concat_channels<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
        return Err(Error::shape("concat_channels", format!("{sa} vs {sb}")));
    }
    let out_shape = Shape4::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let mut data = Vec::with_capacity(out_shape.len());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data()[n * sa.item()..(n + 1) * sa.item()]);
        data.extend_from_slice(&b.data()[n * sb.item()..(n + 1) * sb.item()]);
    }
    Ok(Tensor4::from_parts(out_shape, data))
}

/// Split a channel-concatenated gradient back into its `a` and `b` parts.
pub fn split_channels<T: Scalar>(grad: &Tensor4<T>, channels_a: usize) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let s = grad.shape();
    if channels_a == 0 || channels_a >= s.c {
        return Err(Error::shape("split_channels", format!("cannot split {} channels at {channels_a}", s.c)));
    }
    Ok((grad.channels(0, channels_a)?, grad.channels(channels_a, s.c - channels_a)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: Shape4) -> Tensor4<f32> {
        Tensor4::from_fn(shape, |n, c, y, x| ((n * 7 + c * 5 + y * 3 + x) % 11) as f32 * 0.1 - 0.4).unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = ramp(Shape4::new(2, 3, 5, 6));
        let mut w = vec![0.0f32; 9];
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        let bias = [0.0f32; 3];
        let y = conv2d(&x, Filter::new(&w, [3, 3, 1, 1], Some(&bias)), 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_yields_bias() {
        let x = Tensor4::<f32>::zeros(Shape4::new(1, 2, 6, 6)).unwrap();
        let w = vec![0.3f32; 3 * 2 * 9];
        let bias = [0.5f32, -1.0, 2.0];
        let y = conv2d(&x, Filter::new(&w, [3, 2, 3, 3], Some(&bias)), 1, 1).unwrap();
        for c in 0..3 {
            let ch = y.channels(c, 1).unwrap();
            assert!(ch.data().iter().all(|&v| v == bias[c]));
        }
    }

    #[test]
    fn output_size_formula() {
        let x = ramp(Shape4::new(1, 1, 9, 7));
        let w = vec![1.0f32; 16];
        let y = conv2d(&x, Filter::new(&w, [1, 1, 4, 4], None), 2, 1).unwrap();
        assert_eq!((y.shape().h, y.shape().w), ((9 + 2 - 4) / 2 + 1, (7 + 2 - 4) / 2 + 1));
    }

    #[test]
    fn stride_two_halving_chain_is_exact() {
        let mut size = 128;
        while size > 1 {
            let next = conv_output_size(size, 3, 2, 1).unwrap();
            assert_eq!(next, size / 2);
            size = next;
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let x = ramp(Shape4::new(1, 2, 4, 4));
        let w = vec![0.0f32; 9];
        let err = conv2d(&x, Filter::new(&w, [1, 1, 3, 3], None), 1, 1).unwrap_err();
        assert!(err.to_string().contains("channels"), "{err}");
    }

    #[test]
    fn upsample_conv_doubles_constant_image() {
        let x = Tensor4::<f32>::filled(Shape4::new(1, 1, 8, 8), 0.75).unwrap();
        let mut w = vec![0.0f32; 9];
        w[4] = 1.0;
        let y = upsample_conv(&x, Filter::new(&w, [1, 1, 3, 3], None), 2).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 1, 16, 16));
        assert!(y.data().iter().all(|&v| v == 0.75));
        assert!(upsample_conv(&x, Filter::new(&w, [1, 1, 3, 3], None), 3).is_err());
    }

    #[test]
    fn instance_norm_statistics() {
        let x = ramp(Shape4::new(2, 3, 8, 8)).map(|v: f32| v * 4.0 + 1.0);
        let gain = [1.0f32, 2.0, 0.5];
        let offset = [0.0f32; 3];
        let (y, _) = instance_norm(&x, &gain, &offset, 1e-5).unwrap();
        for (i, plane) in y.data().chunks(64).enumerate() {
            let g = gain[i % 3] as f64;
            let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / 64.0;
            let var = plane.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 64.0;
            assert!(mean.abs() < 1e-5, "mean {mean}");
            assert!((var - g * g).abs() < 1e-3, "var {var} gain {g}");
        }
    }

    #[test]
    fn instance_norm_constant_channel_is_zero() {
        let x = Tensor4::<f32>::filled(Shape4::new(1, 1, 4, 4), 3.0).unwrap();
        let (y, _) = instance_norm(&x, &[1.0], &[0.0], 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::LeakyRelu(0.2).apply(-1.0f64), -0.2);
        assert_eq!(Activation::Tanh.apply(0.0f64), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0f64), 0.5);
        assert_eq!(Activation::Relu.apply(-3.0f64), 0.0);
        assert_eq!(Activation::Relu.derivative(0.0f64, 0.0), 0.0);
    }

    #[test]
    fn concat_then_slice_recovers_inputs() {
        let a = ramp(Shape4::new(1, 2, 4, 4));
        let b = ramp(Shape4::new(1, 3, 4, 4)).map(|v: f32| v + 10.0);
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), Shape4::new(1, 5, 4, 4));
        let (ga, gb) = split_channels(&c, 2).unwrap();
        assert_eq!(ga, a);
        assert_eq!(gb, b);

        let ones = Tensor4::<f32>::filled(c.shape(), 1.0).unwrap();
        let (da, _) = split_channels(&ones, 2).unwrap();
        assert!(da.data().iter().all(|&v| v == 1.0));
        assert!(concat_channels(&a, &ramp(Shape4::new(1, 1, 4, 5))).is_err());
    }
}
