//! Deterministic inputs shared by the kernel benchmarks.

use lightgan::datapipe::Plane;
use lightgan::{Shape4, Tensor4};

/// Smooth non-constant pattern in `[-1, 1]`.
fn wave(i: usize) -> f64 {
    (i as f64 * 0.37).sin() * (i as f64 * 0.011).cos()
}

pub fn pattern_tensor(shape: Shape4) -> Tensor4 {
    let data = (0..shape.len()).map(|i| wave(i) as f32).collect();
    Tensor4::from_vec(shape, data).expect("shape matches data")
}

/// Image plane with values in `[0, 255]`; `phase` shifts the pattern.
pub fn pattern_plane(width: usize, height: usize, phase: usize) -> Plane {
    Plane::from_fn(width, height, |x, y| 127.5 * (1.0 + wave(y * width + x + phase)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic() {
        let s = Shape4::new(1, 2, 4, 4);
        assert_eq!(pattern_tensor(s), pattern_tensor(s));
        let p = pattern_plane(8, 8, 3);
        assert!(p.data.iter().all(|v| (0.0..=255.0).contains(v)));
    }
}
