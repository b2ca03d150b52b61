use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datapipe::deconv::{rl_deconvolve_plane, Psf};
use crate::datapipe::image::{write_png, Plane, RawImage};
use crate::error::{Error, Result};

/// Degradation applied to the STED acquisition of low-quality samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Degrade {
    #[default]
    None,
    /// Signal scaled by `factor` in (0, 1) before noise is added.
    Photobleach { factor: f64 },
    /// Spurious stripes and bright speckles of relative `strength`.
    Artifact { strength: f64 },
}

impl fmt::Display for Degrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degrade::None => f.write_str("none"),
            Degrade::Photobleach { factor } => write!(f, "photobleach({factor})"),
            Degrade::Artifact { strength } => write!(f, "artifact({strength})"),
        }
    }
}

impl std::str::FromStr for Degrade {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let arg = |prefix: &str| -> Option<Result<f64>> {
            s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')')).map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("invalid number in {s:?}")))
            })
        };
        if s == "none" {
            Ok(Degrade::None)
        } else if let Some(v) = arg("photobleach(") {
            Ok(Degrade::Photobleach { factor: v? })
        } else if let Some(v) = arg("artifact(") {
            Ok(Degrade::Artifact { strength: v? })
        } else {
            Err(Error::Config(format!(
                "unknown degradation {s:?}; expected none, photobleach(F) or artifact(S)"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    High,
    Low,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub image_size: usize,
    pub psf_sigma_confocal: f64,
    pub psf_sigma_sted: f64,
    /// Standard deviation of additive Gaussian noise relative to the peak.
    pub noise_level: f64,
    pub rl_iterations: usize,
    pub degrade: Degrade,
    /// Share of samples that receive the degradation (ignored for `none`).
    pub low_quality_fraction: f64,
    pub bit_depth: u8,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 80,
            image_size: 128,
            psf_sigma_confocal: 3.0,
            psf_sigma_sted: 1.0,
            noise_level: 0.02,
            rl_iterations: 10,
            degrade: Degrade::None,
            low_quality_fraction: 0.5,
            bit_depth: 8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        if !(self.psf_sigma_confocal > self.psf_sigma_sted && self.psf_sigma_sted > 0.0) {
            return Err(Error::Config(format!(
                "need psf_sigma_confocal > psf_sigma_sted > 0, got {} and {}",
                self.psf_sigma_confocal, self.psf_sigma_sted
            )));
        }
        if self.image_size < 32 {
            return Err(Error::Config("image_size must be >= 32".into()));
        }
        if !(self.noise_level >= 0.0) {
            return Err(Error::Config("noise_level must be >= 0".into()));
        }
        if self.rl_iterations == 0 {
            return Err(Error::Config("rl_iterations must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.low_quality_fraction) {
            return Err(Error::Config("low_quality_fraction must lie in [0, 1]".into()));
        }
        if self.bit_depth != 8 && self.bit_depth != 16 {
            return Err(Error::Config("bit_depth must be 8 or 16".into()));
        }
        match self.degrade {
            Degrade::Photobleach { factor } if !(factor > 0.0 && factor < 1.0) => {
                Err(Error::Config(format!("photobleach factor must lie in (0, 1), got {factor}")))
            }
            Degrade::Artifact { strength } if !(strength > 0.0) => {
                Err(Error::Config(format!("artifact strength must be > 0, got {strength}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleTriplet {
    pub id: String,
    pub confocal: RawImage,
    pub sted: RawImage,
    pub dsted: Option<RawImage>,
    pub truth: Option<RawImage>,
    pub quality: Quality,
}

/// Cross-section standard deviation of a rendered membrane line, in pixels.
const LINE_SIGMA: f64 = 0.6;

/// Add a Gaussian-profile line along `points` (polyline, sampled densely).
fn splat_curve(canvas: &mut Plane, points: &[(f64, f64)], amplitude: f64) {
    let step = 0.25;
    let reach = (4.0 * LINE_SIGMA).ceil() as i64;
    let norm = amplitude * step / ((2.0 * std::f64::consts::PI).sqrt() * LINE_SIGMA);
    for seg in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (seg[0], seg[1]);
        let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        let n = (len / step).ceil().max(1.0) as usize;
        for i in 0..n {
            let t = (i as f64 + 0.5) / n as f64;
            let (cx, cy) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
            let w = norm * len / (n as f64 * step);
            let (ix, iy) = (cx.round() as i64, cy.round() as i64);
            for y in iy - reach..=iy + reach {
                for x in ix - reach..=ix + reach {
                    if x < 0 || y < 0 || x >= canvas.width as i64 || y >= canvas.height as i64 {
                        continue;
                    }
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    canvas.data[y as usize * canvas.width + x as usize] += w * (-d2 / (2.0 * LINE_SIGMA * LINE_SIGMA)).exp();
                }
            }
        }
    }
}

/// Quadratic Bezier sampled at `n + 1` points.
fn bezier(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64), n: usize) -> Vec<(f64, f64)> {
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let a = (1.0 - t) * (1.0 - t);
            let b = 2.0 * t * (1.0 - t);
            let c = t * t;
            (a * p0.0 + b * p1.0 + c * p2.0, a * p0.1 + b * p1.1 + c * p2.1)
        })
        .collect()
}

/// Offset a polyline sideways by `d` pixels.
fn offset_curve(points: &[(f64, f64)], d: f64) -> Vec<(f64, f64)> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = (points[i.saturating_sub(1)], points[(i + 1).min(n - 1)]);
            let (tx, ty) = (b.0 - a.0, b.1 - a.1);
            let l = (tx * tx + ty * ty).sqrt().max(1e-12);
            (points[i].0 - d * ty / l, points[i].1 + d * tx / l)
        })
        .collect()
}

/// Ground truth: a few cilium-like rods, each drawn as its two membrane
/// walls (parallel smooth curves a few pixels apart).
fn render_truth(size: usize, rng: &mut ChaCha8Rng) -> Plane {
    let mut canvas = Plane::from_fn(size, size, |_, _| 0.0);
    let margin = (size as f64 * 0.1).min(12.0);
    let hi = size as f64 - margin;
    let count = rng.gen_range(2..=4);
    for _ in 0..count {
        let length = rng.gen_range(0.2..0.5) * size as f64;
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let (dx, dy) = (angle.cos() * length / 2.0, angle.sin() * length / 2.0);
        let cx = rng.gen_range(margin + dx.abs()..hi - dx.abs());
        let cy = rng.gen_range(margin + dy.abs()..hi - dy.abs());
        let bend = rng.gen_range(-0.25..0.25) * length;
        let p0 = (cx - dx, cy - dy);
        let p2 = (cx + dx, cy + dy);
        let p1 = (cx - bend * angle.sin(), cy + bend * angle.cos());
        let axis = bezier(p0, p1, p2, 48);
        let separation = rng.gen_range(4.0..8.0);
        let amplitude = rng.gen_range(0.6..1.0);
        splat_curve(&mut canvas, &offset_curve(&axis, -separation / 2.0), amplitude);
        splat_curve(&mut canvas, &offset_curve(&axis, separation / 2.0), amplitude);
    }
    canvas
}

fn scale_to_peak(p: &mut Plane) {
    let peak = p.data.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        p.data.iter_mut().for_each(|v| *v /= peak);
    }
}

/// Blur a unit-peak ground truth, rescale so the brightest pixel is 1, then
/// multiply by `gain` and add noise.
fn acquire(truth: &Plane, sigma: f64, gain: f64, noise: f64, rng: &mut ChaCha8Rng) -> Result<Plane> {
    let mut p = Psf::gaussian(sigma)?.convolve(truth, false);
    scale_to_peak(&mut p);
    let normal = Normal::new(0.0, noise.max(1e-300)).expect("positive sigma");
    for v in p.data.iter_mut() {
        *v = *v * gain + if noise > 0.0 { normal.sample(rng) } else { 0.0 };
        *v = v.clamp(0.0, 1.0);
    }
    Ok(p)
}

fn add_artifacts(p: &mut Plane, strength: f64, rng: &mut ChaCha8Rng) {
    let period = rng.gen_range(6.0..12.0);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let w = p.width;
    for (i, v) in p.data.iter_mut().enumerate() {
        let y = (i / w) as f64;
        *v += 0.5 * strength * (0.5 + 0.5 * (y * std::f64::consts::TAU / period + phase).sin());
    }
    for _ in 0..(p.data.len() / 200) {
        let i = rng.gen_range(0..p.data.len());
        p.data[i] += strength;
    }
    p.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn generate_one(cfg: &SynthConfig, index: usize) -> Result<SampleTriplet> {
    let mut rng = sample_rng(cfg.seed, index);
    let mut truth = render_truth(cfg.image_size, &mut rng);
    scale_to_peak(&mut truth);
    let low = cfg.degrade != Degrade::None && rng.gen_bool(cfg.low_quality_fraction);
    let gain = match (low, cfg.degrade) {
        (true, Degrade::Photobleach { factor }) => factor,
        _ => 1.0,
    };
    let confocal = acquire(&truth, cfg.psf_sigma_confocal, 1.0, cfg.noise_level, &mut rng)?;
    let mut sted = acquire(&truth, cfg.psf_sigma_sted, gain, cfg.noise_level, &mut rng)?;
    if let (true, Degrade::Artifact { strength }) = (low, cfg.degrade) {
        add_artifacts(&mut sted, strength, &mut rng);
    }
    let mut dsted = rl_deconvolve_plane(&sted, &Psf::gaussian(cfg.psf_sigma_sted)?, cfg.rl_iterations)?;
    // Keep the deconvolved image on the acquisition's brightness scale.
    let peak = sted.data.iter().cloned().fold(0.0, f64::max);
    scale_to_peak(&mut dsted);
    dsted.data.iter_mut().for_each(|v| *v *= peak);

    let n = cfg.image_size;
    let q = |p: &Plane| RawImage::from_unit(n, n, cfg.bit_depth, &p.data);
    Ok(SampleTriplet {
        id: format!("s{index:04}"),
        confocal: q(&confocal)?,
        sted: q(&sted)?,
        dsted: Some(q(&dsted)?),
        truth: Some(q(&truth)?),
        quality: if low { Quality::Low } else { Quality::High },
    })
}

/// Deterministic synthetic dataset. Every sample draws from its own random
/// stream, so the result does not depend on the worker count.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<SampleTriplet>> {
    cfg.validate()?;
    (0..cfg.n_samples).into_par_iter().map(|i| generate_one(cfg, i)).collect()
}

/// Two straight vertical membrane lines `separation` pixels apart through the
/// image center, blurred at both resolutions, noise free.
#[derive(Clone, Debug)]
pub struct TwoLinePhantom {
    pub truth: RawImage,
    pub confocal: RawImage,
    pub sted: RawImage,
    /// Horizontal profile endpoints through the center, as `(x, y)`.
    pub profile_line: ((f64, f64), (f64, f64)),
}

pub fn two_line_phantom(size: usize, separation: f64, sigma_confocal: f64, sigma_sted: f64) -> Result<TwoLinePhantom> {
    let mut truth = Plane::from_fn(size, size, |_, _| 0.0);
    let c = size as f64 / 2.0;
    let lo = size as f64 * 0.2;
    let hi = size as f64 * 0.8;
    for x in [c - separation / 2.0, c + separation / 2.0] {
        splat_curve(&mut truth, &[(x, lo), (x, hi)], 1.0);
    }
    scale_to_peak(&mut truth);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let confocal = acquire(&truth, sigma_confocal, 1.0, 0.0, &mut rng)?;
    let sted = acquire(&truth, sigma_sted, 1.0, 0.0, &mut rng)?;
    let q = |p: &Plane| RawImage::from_unit(size, size, 8, &p.data);
    let half = 3.0 * separation;
    Ok(TwoLinePhantom {
        truth: q(&truth)?,
        confocal: q(&confocal)?,
        sted: q(&sted)?,
        profile_line: ((c - half, c), (c + half, c)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub quality: Quality,
}

/// Index written next to a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub samples: Vec<ManifestEntry>,
}

pub const DOMAINS: [&str; 4] = ["confocal", "sted", "dsted", "truth"];

/// Write samples as `root/<domain>/<id>.png` plus `root/manifest.json`.
pub fn write_dataset(root: &Path, samples: &[SampleTriplet], cfg: &SynthConfig) -> Result<()> {
    for d in DOMAINS {
        let dir = root.join(d);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for s in samples {
        let name = format!("{}.png", s.id);
        write_png(&root.join("confocal").join(&name), &s.confocal)?;
        write_png(&root.join("sted").join(&name), &s.sted)?;
        if let Some(d) = &s.dsted {
            write_png(&root.join("dsted").join(&name), d)?;
        }
        if let Some(t) = &s.truth {
            write_png(&root.join("truth").join(&name), t)?;
        }
    }
    let manifest = SynthManifest {
        config: cfg.clone(),
        samples: samples
            .iter()
            .map(|s| ManifestEntry {
                id: s.id.clone(),
                quality: s.quality,
            })
            .collect(),
    };
    let path = root.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(root: &Path) -> Result<SynthManifest> {
    let path = root.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path,
        detail: e.to_string(),
    })
}
