use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compute::tensor::{Shape4, Tensor4};
use crate::datapipe::image::RawImage;
use crate::error::{Error, Result};

/// Percentile by linear interpolation between order statistics.
fn percentile(sorted: &[u16], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - frac) + sorted[hi] as f64 * frac
}

/// Linearly remap the `[low_pct, high_pct]` percentile range onto the full
/// intensity range, clamping outside it. Constant images are returned as is.
pub fn contrast_stretch(img: &RawImage, low_pct: f64, high_pct: f64) -> Result<RawImage> {
    if !(0.0 <= low_pct && low_pct < high_pct && high_pct <= 100.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= low < high <= 100, got {low_pct}, {high_pct}"
        )));
    }
    let mut sorted = img.pixels().to_vec();
    sorted.sort_unstable();
    let lo = percentile(&sorted, low_pct);
    let hi = percentile(&sorted, high_pct);
    if hi <= lo {
        return Ok(img.clone());
    }
    let max = img.max_value() as f64;
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| (((p as f64 - lo) / (hi - lo)).clamp(0.0, 1.0) * max).round() as u16)
        .collect();
    RawImage::new(img.width(), img.height(), img.bit_depth(), pixels)
}

/// Translate by `(dx, dy)`: `out(x, y) = img(x - dx, y - dy)`, zero-filled.
pub fn shift_image(img: &RawImage, dx: i32, dy: i32) -> RawImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut pixels = vec![0u16; img.pixels().len()];
    for y in 0..h {
        let sy = y - dy as i64;
        if !(0..h).contains(&sy) {
            continue;
        }
        for x in 0..w {
            let sx = x - dx as i64;
            if (0..w).contains(&sx) {
                pixels[(y * w + x) as usize] = img.get(sx as usize, sy as usize);
            }
        }
    }
    RawImage::new(img.width(), img.height(), img.bit_depth(), pixels).expect("same geometry")
}

fn bin_of(v: u16, max: u16, bins: usize) -> usize {
    ((v as usize * bins) / (max as usize + 1)).min(bins - 1)
}

/// Mutual information (nats) of the joint intensity histogram over the
/// overlap of `reference(x, y)` and `moving(x + dx, y + dy)`.
pub fn mutual_information(reference: &RawImage, moving: &RawImage, dx: i32, dy: i32, bins: usize) -> f64 {
    let (w, h) = (reference.width() as i64, reference.height() as i64);
    let mut joint = vec![0u64; bins * bins];
    let mut n = 0u64;
    let (rmax, mmax) = (reference.max_value(), moving.max_value());
    for y in 0..h {
        let my = y + dy as i64;
        if !(0..h).contains(&my) {
            continue;
        }
        for x in 0..w {
            let mx = x + dx as i64;
            if !(0..w).contains(&mx) {
                continue;
            }
            let a = bin_of(reference.get(x as usize, y as usize), rmax, bins);
            let b = bin_of(moving.get(mx as usize, my as usize), mmax, bins);
            joint[a * bins + b] += 1;
            n += 1;
        }
    }
    if n == 0 {
        return 0.0;
    }
    let mut pa = vec![0u64; bins];
    let mut pb = vec![0u64; bins];
    for a in 0..bins {
        for b in 0..bins {
            pa[a] += joint[a * bins + b];
            pb[b] += joint[a * bins + b];
        }
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for a in 0..bins {
        for b in 0..bins {
            let c = joint[a * bins + b];
            if c > 0 {
                let pab = c as f64 / nf;
                mi += pab * (pab * nf * nf / (pa[a] as f64 * pb[b] as f64)).ln();
            }
        }
    }
    mi
}

pub const DEFAULT_REGISTRATION_RADIUS: usize = 8;
pub const MAX_REGISTRATION_RADIUS: usize = 16;
pub const DEFAULT_MI_BINS: usize = 64;

/// Integer translation `(dx, dy)` such that `moving ≈ shift_image(reference, dx, dy)`,
/// found by exhaustive search for the largest mutual information.
///
/// Ties go to the smallest `|dx| + |dy|`, then the lexicographically smallest `(dx, dy)`.
pub fn register_translation(reference: &RawImage, moving: &RawImage, radius: usize, bins: usize) -> Result<(i32, i32)> {
    if reference.width() != moving.width() || reference.height() != moving.height() {
        return Err(Error::shape(
            "register_translation",
            format!(
                "{}x{} vs {}x{}",
                reference.width(),
                reference.height(),
                moving.width(),
                moving.height()
            ),
        ));
    }
    if radius > MAX_REGISTRATION_RADIUS {
        return Err(Error::InvalidArgument(format!("radius {radius} exceeds {MAX_REGISTRATION_RADIUS}")));
    }
    if bins < 2 {
        return Err(Error::InvalidArgument("need at least 2 histogram bins".into()));
    }
    let (w, h) = (reference.width(), reference.height());
    if radius >= w || radius >= h || 2 * (w - radius) * (h - radius) < w * h {
        return Err(Error::InvalidArgument(format!(
            "radius {radius} leaves less than 50% overlap on a {w}x{h} image"
        )));
    }
    let r = radius as i32;
    let mut best: Option<(f64, i32, i32)> = None;
    for dx in -r..=r {
        for dy in -r..=r {
            let mi = mutual_information(reference, moving, dx, dy, bins);
            let better = match best {
                None => true,
                Some((bmi, bx, by)) => {
                    if (mi - bmi).abs() > 1e-12 * bmi.abs().max(1.0) {
                        mi > bmi
                    } else {
                        (dx.abs() + dy.abs(), dx, dy) < (bx.abs() + by.abs(), bx, by)
                    }
                }
            };
            if better {
                best = Some((mi, dx, dy));
            }
        }
    }
    let (_, dx, dy) = best.expect("search space is non-empty");
    Ok((dx, dy))
}

/// Center `img` on a `size x size` canvas: oversized dimensions are center
/// cropped, undersized ones zero padded.
pub fn pad_to_square(img: &RawImage, size: usize) -> Result<RawImage> {
    let (w, h) = (img.width(), img.height());
    // Offsets of the source relative to the canvas (negative = crop).
    let ox = (size as i64 - w as i64).div_euclid(2);
    let oy = (size as i64 - h as i64).div_euclid(2);
    RawImage::from_fn(size, size, img.bit_depth(), |x, y| {
        let sx = x as i64 - ox;
        let sy = y as i64 - oy;
        if (0..w as i64).contains(&sx) && (0..h as i64).contains(&sy) {
            img.get(sx as usize, sy as usize)
        } else {
            0
        }
    })
}

/// Per-image min-max mapping remembered for denormalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRange {
    pub min: u16,
    pub max: u16,
    pub bit_depth: u8,
}

impl NormRange {
    /// Map `[-1, 1]` onto the full intensity range of `bit_depth`.
    pub fn full(bit_depth: u8) -> Self {
        NormRange {
            min: 0,
            max: crate::datapipe::image::max_value(bit_depth),
            bit_depth,
        }
    }
}

/// Min-max map to `[-1, 1]` as a `(1, 1, H, W)` tensor. Constant images map to all `-1`.
pub fn normalize_to_net(img: &RawImage) -> (Tensor4, NormRange) {
    let min = *img.pixels().iter().min().expect("non-empty");
    let max = *img.pixels().iter().max().expect("non-empty");
    let span = (max - min) as f64;
    let data = img
        .pixels()
        .iter()
        .map(|&p| if span == 0.0 { -1.0 } else { (2.0 * (p - min) as f64 / span - 1.0) as f32 })
        .collect();
    let t = Tensor4::from_vec(Shape4::new(1, 1, img.height(), img.width()), data).expect("valid shape");
    (
        t,
        NormRange {
            min,
            max,
            bit_depth: img.bit_depth(),
        },
    )
}

/// Inverse of [`normalize_to_net`] for sample `n`, channel 0; values are clamped to `[-1, 1]`.
pub fn denormalize(t: &Tensor4, n: usize, range: NormRange) -> Result<RawImage> {
    let s = t.shape();
    if n >= s.n {
        return Err(Error::InvalidArgument(format!("sample {n} out of range for batch of {}", s.n)));
    }
    let plane = &t.data()[n * s.item()..n * s.item() + s.plane()];
    let span = (range.max - range.min) as f64;
    let pixels = plane
        .iter()
        .map(|&v| {
            let u = (v as f64).clamp(-1.0, 1.0) * 0.5 + 0.5;
            (range.min as f64 + u * span).round() as u16
        })
        .collect();
    RawImage::new(s.w, s.h, range.bit_depth, pixels)
}

/// The full preprocessing chain for one image: contrast stretch, square
/// canvas, normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    pub low_pct: f64,
    pub high_pct: f64,
    pub size: usize,
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess {
            low_pct: 1.0,
            high_pct: 99.0,
            size: 128,
        }
    }
}

impl Preprocess {
    /// Contrast stretch and pad, returning the native-range image.
    pub fn prepare(&self, img: &RawImage) -> Result<RawImage> {
        pad_to_square(&contrast_stretch(img, self.low_pct, self.high_pct)?, self.size)
    }

    /// Contrast stretch, register `moving` onto `reference` (both stretched)
    /// and pad both. Returns the prepared pair and the detected shift.
    pub fn prepare_pair(
        &self,
        reference: &RawImage,
        moving: &RawImage,
        radius: usize,
        bins: usize,
    ) -> Result<(RawImage, RawImage, (i32, i32))> {
        let r = contrast_stretch(reference, self.low_pct, self.high_pct)?;
        let m = contrast_stretch(moving, self.low_pct, self.high_pct)?;
        let (dx, dy) = if radius == 0 {
            (0, 0)
        } else {
            register_translation(&r, &m, radius, bins)?
        };
        let aligned = shift_image(&m, -dx, -dy);
        Ok((pad_to_square(&r, self.size)?, pad_to_square(&aligned, self.size)?, (dx, dy)))
    }
}

/// One of the eight symmetries of the square: rotate by `quarter_turns`
/// (counter-clockwise), then optionally flip horizontally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dihedral {
    pub quarter_turns: u8,
    pub flip: bool,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral {
        quarter_turns: 0,
        flip: false,
    };

    pub fn all() -> impl Iterator<Item = Dihedral> {
        (0..8u8).map(Dihedral::from_index)
    }

    pub fn from_index(i: u8) -> Dihedral {
        Dihedral {
            quarter_turns: i % 4,
            flip: i >= 4,
        }
    }

    pub fn sample(rng: &mut impl Rng) -> Dihedral {
        Dihedral::from_index(rng.gen_range(0..8))
    }

    /// Source coordinate read for output `(x, y)` on an `n x n` grid.
    fn source(self, x: usize, y: usize, n: usize) -> (usize, usize) {
        let x = if self.flip { n - 1 - x } else { x };
        let (mut sx, mut sy) = (x, y);
        for _ in 0..self.quarter_turns {
            // Inverse of a counter-clockwise quarter turn.
            let (px, py) = (n - 1 - sy, sx);
            sx = px;
            sy = py;
        }
        (sx, sy)
    }

    pub fn apply(self, t: &Tensor4) -> Result<Tensor4> {
        let s = t.shape();
        if s.h != s.w {
            return Err(Error::InvalidArgument(format!("augmentation needs square input, got {s}")));
        }
        Tensor4::from_fn(s, |n, c, y, x| {
            let (sx, sy) = self.source(x, y, s.w);
            t.at(n, c, sy, sx)
        })
    }
}

/// Apply one randomly drawn symmetry identically to both tensors.
pub fn augment(a: &Tensor4, b: &Tensor4, rng: &mut impl Rng) -> Result<(Tensor4, Tensor4)> {
    if a.shape() != b.shape() {
        return Err(Error::shape("augment", format!("{} vs {}", a.shape(), b.shape())));
    }
    let d = Dihedral::sample(rng);
    Ok((d.apply(a)?, d.apply(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(w: usize, h: usize) -> RawImage {
        RawImage::from_fn(w, h, 8, |x, y| ((x * 7 + y * 3) % 256) as u16).unwrap()
    }

    #[test]
    fn stretch_cases() {
        let full = RawImage::from_fn(16, 16, 8, |x, y| (x + 16 * y) as u16).unwrap();
        assert_eq!(contrast_stretch(&full, 0.0, 100.0).unwrap(), full);
        let c = RawImage::filled(8, 8, 8, 42).unwrap();
        assert_eq!(contrast_stretch(&c, 1.0, 99.0).unwrap(), c);
        let narrow = RawImage::from_fn(11, 8, 8, |x, _| 10 + x as u16).unwrap();
        let s = contrast_stretch(&narrow, 1.0, 99.0).unwrap();
        assert!(s.get(0, 0) <= 3 && s.get(10, 0) >= 252, "{} {}", s.get(0, 0), s.get(10, 0));
        assert!((1..11).all(|x| s.get(x, 0) >= s.get(x - 1, 0)));
        assert!(contrast_stretch(&c, 50.0, 50.0).is_err());
    }

    fn textured(seed: u64) -> RawImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blobs: Vec<(f64, f64, f64)> = (0..12)
            .map(|_| (rng.gen_range(8.0..56.0), rng.gen_range(8.0..56.0), rng.gen_range(2.0..5.0)))
            .collect();
        RawImage::from_fn(64, 64, 8, |x, y| {
            let v: f64 = blobs
                .iter()
                .map(|&(cx, cy, s)| (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp())
                .sum();
            (v.min(1.0) * 255.0).round() as u16
        })
        .unwrap()
    }

    #[test]
    fn registration_recovers_shift() {
        let img = textured(3);
        assert_eq!(register_translation(&img, &img, 8, 64).unwrap(), (0, 0));
        let moved = shift_image(&img, 3, -2);
        let (dx, dy) = register_translation(&img, &moved, 8, 64).unwrap();
        assert_eq!((dx, dy), (3, -2));
        assert!(mutual_information(&img, &moved, dx, dy, 64) >= mutual_information(&img, &moved, 0, 0, 64));
    }

    #[test]
    fn registration_rejects_small_overlap() {
        let img = ramp(16, 16);
        assert!(register_translation(&img, &img, 8, 64).is_err());
        assert!(register_translation(&img, &ramp(16, 17), 2, 64).is_err());
    }

    #[test]
    fn padding_geometry() {
        let img = RawImage::filled(80, 100, 8, 9).unwrap();
        let p = pad_to_square(&img, 128).unwrap();
        let rows: Vec<usize> = (0..128).filter(|&y| p.get(64, y) == 9).collect();
        let cols: Vec<usize> = (0..128).filter(|&x| p.get(x, 64) == 9).collect();
        assert_eq!((rows[0], *rows.last().unwrap()), (14, 113));
        assert_eq!((cols[0], *cols.last().unwrap()), (24, 103));
        let same = ramp(128, 128);
        assert_eq!(pad_to_square(&same, 128).unwrap(), same);
        let wide = RawImage::from_fn(100, 200, 8, |_, y| (y % 256) as u16).unwrap();
        let q = pad_to_square(&wide, 128).unwrap();
        assert_eq!(q.get(64, 0), 36);
        assert_eq!(q.get(0, 5), 0);
    }

    #[test]
    fn normalization() {
        let img = RawImage::from_fn(8, 8, 8, |x, _| if x == 0 { 0 } else { 255 }).unwrap();
        let (t, r) = normalize_to_net(&img);
        assert!(t.data().iter().all(|&v| v == -1.0 || v == 1.0));
        assert_eq!(denormalize(&t, 0, r).unwrap(), img);
        let (c, _) = normalize_to_net(&RawImage::filled(8, 8, 8, 77).unwrap());
        assert!(c.data().iter().all(|&v| v == -1.0));
        let odd = ramp(16, 16);
        let (t, r) = normalize_to_net(&odd);
        let back = denormalize(&t, 0, r).unwrap();
        assert!(odd.pixels().iter().zip(back.pixels()).all(|(a, b)| a.abs_diff(*b) <= 1));
    }

    #[test]
    fn dihedral_group() {
        let t = Tensor4::from_fn(Shape4::new(1, 1, 5, 5), |_, _, y, x| (y * 5 + x) as f32).unwrap();
        let r1 = Dihedral::from_index(1);
        let r2 = Dihedral::from_index(2);
        assert_eq!(r1.apply(&r1.apply(&t).unwrap()).unwrap(), r2.apply(&t).unwrap());
        let r4 = r2.apply(&r2.apply(&t).unwrap()).unwrap();
        assert_eq!(r4, t);
        for d in Dihedral::all() {
            let mut a = d.apply(&t).unwrap().into_data();
            a.sort_by(f32::total_cmp);
            let mut b = t.data().to_vec();
            b.sort_by(f32::total_cmp);
            assert_eq!(a, b);
        }
        let distinct: std::collections::HashSet<Vec<u32>> = Dihedral::all()
            .map(|d| d.apply(&t).unwrap().data().iter().map(|v| v.to_bits()).collect())
            .collect();
        assert_eq!(distinct.len(), 8);
        let rect = Tensor4::<f32>::zeros(Shape4::new(1, 1, 4, 5)).unwrap();
        assert!(Dihedral::IDENTITY.apply(&rect).is_err());
    }

    #[test]
    fn augmentation_is_seeded_and_paired() {
        let a = Tensor4::from_fn(Shape4::new(1, 1, 4, 4), |_, _, y, x| (y * 4 + x) as f32).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..6).map(|_| augment(&a, &a, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        let x = run(1);
        assert_eq!(x, run(1));
        assert!(x.iter().all(|(p, q)| p == q));
    }
}
