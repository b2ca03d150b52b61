use std::fmt;

use crate::compute::scalar::Scalar;
use crate::error::{Error, Result};

/// Shape of a [`Tensor4`]: batch, channels, height, width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape4 { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one spatial plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Elements in one batch item.
    pub const fn item(&self) -> usize {
        self.c * self.h * self.w
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense row-major NCHW tensor. Networks run in `f32`; gradient checks reuse
/// the same code in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T = f32> {
    shape: Shape4,
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(shape: Shape4) -> Result<Self> {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: Shape4, value: T) -> Result<Self> {
        check_shape(shape)?;
        Ok(Tensor4 {
            shape,
            data: vec![value; shape.len()],
        })
    }

    pub fn from_vec(shape: Shape4, data: Vec<T>) -> Result<Self> {
        check_shape(shape)?;
        if data.len() != shape.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape} needs {} values, got {}", shape.len(), data.len()),
            ));
        }
        Ok(Tensor4 { shape, data })
    }

    /// Build from a closure over `(n, c, y, x)`.
    pub fn from_fn(shape: Shape4, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Result<Self> {
        check_shape(shape)?;
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Ok(Tensor4 { shape, data })
    }

    // Internal constructor for buffers whose length is correct by construction.
    pub(crate) fn from_parts(shape: Shape4, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Tensor4 { shape, data }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    /// One batch item as a `(1, C, H, W)` tensor.
    pub fn item(&self, n: usize) -> Tensor4<T> {
        let len = self.shape.item();
        let shape = Shape4::new(1, self.shape.c, self.shape.h, self.shape.w);
        Tensor4::from_parts(shape, self.data[n * len..(n + 1) * len].to_vec())
    }

    /// Concatenate tensors along the batch axis.
    pub fn stack(items: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack an empty list".into()))?;
        let s = first.shape;
        let mut data = Vec::with_capacity(s.item() * items.iter().map(|t| t.shape.n).sum::<usize>());
        let mut n = 0;
        for t in items {
            let ts = t.shape;
            if (ts.c, ts.h, ts.w) != (s.c, s.h, s.w) {
                return Err(Error::shape("stack", format!("{ts} vs {s}")));
            }
            data.extend_from_slice(&t.data);
            n += ts.n;
        }
        Ok(Tensor4::from_parts(Shape4::new(n, s.c, s.h, s.w), data))
    }

    /// Slice channels `[start, start + count)`.
    pub fn channels(&self, start: usize, count: usize) -> Result<Tensor4<T>> {
        let s = self.shape;
        if count == 0 || start + count > s.c {
            return Err(Error::shape(
                "channels",
                format!("range {start}..{} outside {} channels", start + count, s.c),
            ));
        }
        let plane = s.plane();
        let mut data = Vec::with_capacity(s.n * count * plane);
        for n in 0..s.n {
            let base = (n * s.c + start) * plane;
            data.extend_from_slice(&self.data[base..base + count * plane]);
        }
        Ok(Tensor4::from_parts(Shape4::new(s.n, count, s.h, s.w), data))
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Tensor4<U> {
        Tensor4::from_parts(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn add_assign(&mut self, other: &Tensor4<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("add", format!("{} vs {}", self.shape, other.shape)));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn check_shape(shape: Shape4) -> Result<()> {
    if shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0 {
        return Err(Error::shape("tensor", format!("all dimensions must be >= 1, got {shape}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    type Tensor = Tensor4<f32>;

    #[test]
    fn rejects_zero_dims_and_bad_lengths() {
        assert!(Tensor::zeros(Shape4::new(1, 0, 4, 4)).is_err());
        assert!(Tensor::from_vec(Shape4::new(1, 1, 2, 2), vec![0.0f32; 3]).is_err());
    }

    #[test]
    fn stack_and_item_are_inverse() {
        let a = Tensor::from_fn(Shape4::new(1, 2, 3, 3), |_, c, y, x| (c * 9 + y * 3 + x) as f32).unwrap();
        let b = a.map(|v: f32| -v);
        let s = Tensor4::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), Shape4::new(2, 2, 3, 3));
        assert_eq!(s.item(0), a);
        assert_eq!(s.item(1), b);
    }
}
