use crate::datapipe::image::{Plane, RawImage};
use crate::error::{Error, Result};

/// Square, odd-sided, non-negative point-spread function summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Psf {
    side: usize,
    data: Vec<f64>,
    /// 1-D factor when the kernel is an outer product of it with itself.
    separable: Option<Vec<f64>>,
}

impl Psf {
    pub fn new(side: usize, data: Vec<f64>) -> Result<Self> {
        if side % 2 == 0 || data.len() != side * side {
            return Err(Error::InvalidArgument(format!(
                "psf must be odd-sided and square, got side {side} with {} values",
                data.len()
            )));
        }
        if data.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("psf must be non-negative".into()));
        }
        let sum: f64 = data.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("psf must sum to 1, sums to {sum}")));
        }
        Ok(Psf {
            side,
            data,
            separable: None,
        })
    }

    pub fn delta() -> Self {
        Psf {
            side: 1,
            data: vec![1.0],
            separable: Some(vec![1.0]),
        }
    }

    /// Isotropic Gaussian truncated at four standard deviations.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("psf sigma must be > 0, got {sigma}")));
        }
        let r = (4.0 * sigma).ceil() as i64;
        let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let s: f64 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= s);
        let side = k.len();
        let data = (0..side * side).map(|i| k[i / side] * k[i % side]).collect();
        Ok(Psf {
            side,
            data,
            separable: Some(k),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Periodic convolution of `img` with this PSF (or its mirror when `adjoint`).
    pub fn convolve(&self, img: &Plane, adjoint: bool) -> Plane {
        let (w, h) = (img.width, img.height);
        let r = (self.side / 2) as i64;
        let wrap = |v: i64, n: usize| v.rem_euclid(n as i64) as usize;
        if let Some(k) = &self.separable {
            // Symmetric 1-D factor: the adjoint equals the kernel itself.
            let mut tmp = vec![0.0; w * h];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (i, kv) in k.iter().enumerate() {
                        acc += kv * img.data[y * w + wrap(x as i64 + i as i64 - r, w)];
                    }
                    tmp[y * w + x] = acc;
                }
            }
            let mut out = vec![0.0; w * h];
            for y in 0..h {
                for (i, kv) in k.iter().enumerate() {
                    let sy = wrap(y as i64 + i as i64 - r, h);
                    let (dst, src) = (&mut out[y * w..(y + 1) * w], &tmp[sy * w..(sy + 1) * w]);
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += kv * s;
                    }
                }
            }
            return Plane {
                width: w,
                height: h,
                data: out,
            };
        }
        let side = self.side as i64;
        Plane::from_fn(w, h, |x, y| {
            let mut acc = 0.0;
            for ky in 0..side {
                for kx in 0..side {
                    let (kx2, ky2) = if adjoint { (side - 1 - kx, side - 1 - ky) } else { (kx, ky) };
                    let v = self.data[(ky2 * side + kx2) as usize];
                    if v != 0.0 {
                        // correlation with the flipped kernel = convolution
                        acc += v * img.get(wrap(x as i64 + r - kx, w), wrap(y as i64 + r - ky, h));
                    }
                }
            }
            acc
        })
    }
}

/// Richardson-Lucy iterations on a real-valued image with periodic boundaries,
/// starting from the observation itself.
pub fn rl_deconvolve_plane(img: &Plane, psf: &Psf, iterations: usize) -> Result<Plane> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be >= 1".into()));
    }
    if img.data.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("deconvolution input must be finite and non-negative".into()));
    }
    if img.data.iter().all(|&v| v == 0.0) {
        return Ok(img.clone());
    }
    let mut est = img.clone();
    for _ in 0..iterations {
        let blurred = psf.convolve(&est, false);
        let ratio = Plane {
            width: img.width,
            height: img.height,
            data: img
                .data
                .iter()
                .zip(&blurred.data)
                .map(|(&o, &b)| if b > 1e-12 { o / b } else { 0.0 })
                .collect(),
        };
        let correction = psf.convolve(&ratio, true);
        for (e, c) in est.data.iter_mut().zip(&correction.data) {
            *e *= c;
        }
    }
    Ok(est)
}

/// Richardson-Lucy deconvolution of an integer image; results are rounded and
/// clamped to the image's range.
pub fn rl_deconvolve(img: &RawImage, psf: &Psf, iterations: usize) -> Result<RawImage> {
    let out = rl_deconvolve_plane(&img.to_plane(), psf, iterations)?;
    let max = img.max_value() as f64;
    let pixels = out.data.iter().map(|&v| v.round().clamp(0.0, max) as u16).collect();
    RawImage::new(img.width(), img.height(), img.bit_depth(), pixels)
}
