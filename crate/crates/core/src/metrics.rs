//! Image-quality metrics: MSE, PSNR and its normalized form, SSIM, line
//! profiles, Pearson correlation, and per-sample / aggregate reports.
//!
//! All arithmetic is `f64` on images in their native intensity units.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datapipe::image::{Plane, RawImage};
use crate::error::{Error, Result};

/// PSNR reported for identical images and used as the normalization ceiling.
pub const PSNR_CAP_DB: f64 = 50.0;

fn same_dims(op: &'static str, a: &Plane, b: &Plane) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::shape(
            op,
            format!("{}x{} vs {}x{}", a.width, a.height, b.width, b.height),
        ));
    }
    Ok(())
}

pub fn mse(reference: &Plane, test: &Plane) -> Result<f64> {
    same_dims("mse", reference, test)?;
    let sum: f64 = reference.data.iter().zip(&test.data).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / reference.data.len() as f64)
}

/// Peak signal-to-noise ratio in dB, `PSNR_CAP_DB` for identical images.
pub fn psnr(reference: &Plane, test: &Plane, max_value: f64) -> Result<f64> {
    if !(max_value > 0.0) {
        return Err(Error::InvalidArgument(format!("max_value must be > 0, got {max_value}")));
    }
    let e = mse(reference, test)?;
    Ok(psnr_from_mse(e, max_value))
}

pub fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        10.0 * (max_value * max_value / mse).log10()
    }
}

/// PSNR mapped to `[0, 1]` by clamping to `[0, PSNR_CAP_DB]` and dividing by the cap.
pub fn normalized_psnr(psnr_db: f64) -> f64 {
    psnr_db.clamp(0.0, PSNR_CAP_DB) / PSNR_CAP_DB
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L` of the pixel values.
    pub dynamic_range: f64,
}

impl SsimParams {
    pub fn for_bit_depth(bit_depth: u8) -> Self {
        SsimParams {
            dynamic_range: crate::datapipe::image::max_value(bit_depth) as f64,
            ..Default::default()
        }
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::InvalidArgument(format!("SSIM window must be odd, got {}", self.window)));
        }
        if !(self.sigma > 0.0 && self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::InvalidArgument("SSIM sigma, k1, k2 and dynamic range must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

fn gaussian_window(side: usize, sigma: f64) -> Vec<f64> {
    let r = (side / 2) as f64;
    let k: Vec<f64> = (0..side).map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable weighted filtering over every fully contained window position.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * data[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Local SSIM at every window position that fits inside the image.
pub fn ssim_map(a: &Plane, b: &Plane, params: &SsimParams) -> Result<Plane> {
    params.validate()?;
    same_dims("ssim", a, b)?;
    let n = params.window;
    if a.width < n || a.height < n {
        return Err(Error::InvalidArgument(format!(
            "image {}x{} is smaller than the {n}x{n} SSIM window",
            a.width, a.height
        )));
    }
    let k = gaussian_window(n, params.sigma);
    let (w, h) = (a.width, a.height);
    let f = |d: &[f64]| filter_valid(d, w, h, &k);
    let mu_a = f(&a.data);
    let mu_b = f(&b.data);
    let aa: Vec<f64> = a.data.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.data.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    let (e_aa, e_bb, e_ab) = (f(&aa), f(&bb), f(&ab));
    let (c1, c2) = (params.c1(), params.c2());
    let data = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect();
    Plane::new(w - n + 1, h - n + 1, data)
}

/// Mean structural similarity with a Gaussian window.
pub fn ssim(a: &Plane, b: &Plane, params: &SsimParams) -> Result<f64> {
    let m = ssim_map(a, b, params)?;
    Ok(m.data.iter().sum::<f64>() / m.data.len() as f64)
}

fn bilinear(img: &Plane, x: f64, y: f64) -> f64 {
    let x0 = (x.floor() as usize).min(img.width - 1);
    let y0 = (y.floor() as usize).min(img.height - 1);
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Intensities at `samples` equally spaced points from `p0` to `p1`
/// (pixel-center coordinates `(x, y)`), bilinearly interpolated.
pub fn line_profile(img: &Plane, p0: (f64, f64), p1: (f64, f64), samples: usize) -> Result<Vec<f64>> {
    if samples < 2 {
        return Err(Error::InvalidArgument("a profile needs at least 2 samples".into()));
    }
    let inside = |(x, y): (f64, f64)| x >= 0.0 && y >= 0.0 && x <= (img.width - 1) as f64 && y <= (img.height - 1) as f64;
    if !inside(p0) || !inside(p1) {
        return Err(Error::InvalidArgument(format!(
            "profile endpoints {p0:?}, {p1:?} outside {}x{} image",
            img.width, img.height
        )));
    }
    Ok((0..samples)
        .map(|i| {
            let t = i as f64 / (samples - 1) as f64;
            bilinear(img, p0.0 + t * (p1.0 - p0.0), p0.1 + t * (p1.1 - p0.1))
        })
        .collect())
}

/// Number of local maxima that stand at least `min_prominence` times the
/// profile's range above the valleys separating them from their neighbours
/// (or from the profile ends). Weaker maxima are merged into neighbours,
/// weakest first; a plateau counts once.
pub fn count_peaks(profile: &[f64], min_prominence: f64) -> usize {
    let (lo, hi) = profile
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if profile.len() < 3 || hi - lo <= 0.0 {
        return 0;
    }
    let threshold = min_prominence * (hi - lo);
    let n = profile.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        let start = i;
        while i + 1 < n - 1 && profile[i + 1] == profile[i] {
            i += 1;
        }
        if profile[start - 1] < profile[start] && profile[i + 1] < profile[start] {
            peaks.push(start);
        }
        i += 1;
    }
    let valley = |a: usize, b: usize| profile[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
    loop {
        let prominence: Vec<f64> = (0..peaks.len())
            .map(|k| {
                let left = valley(if k == 0 { 0 } else { peaks[k - 1] }, peaks[k]);
                let right = valley(peaks[k], if k + 1 == peaks.len() { n - 1 } else { peaks[k + 1] });
                profile[peaks[k]] - left.max(right)
            })
            .collect();
        match prominence
            .iter()
            .enumerate()
            .filter(|(_, &p)| p < threshold)
            .min_by(|a, b| a.1.total_cmp(b.1))
        {
            Some((k, _)) => {
                peaks.remove(k);
            }
            None => return peaks.len(),
        }
    }
}

/// Sample Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pearson needs two sequences of equal length >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidArgument("pearson correlation is undefined for a constant sequence".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub psnr_db: f64,
    pub npsnr: f64,
    pub ssim: f64,
}

/// PSNR, normalized PSNR and SSIM of `test` against `reference`, with MAX
/// and the SSIM range taken from the reference's bit depth.
pub fn score(reference: &RawImage, test: &RawImage) -> Result<Scores> {
    let max = reference.max_value() as f64;
    let (r, t) = (reference.to_plane(), test.to_plane());
    let p = psnr(&r, &t, max)?;
    Ok(Scores {
        psnr_db: p,
        npsnr: normalized_psnr(p),
        ssim: ssim(&r, &t, &SsimParams::for_bit_depth(reference.bit_depth()))?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub psnr_db: f64,
    pub npsnr: f64,
    pub ssim: f64,
    pub baseline: Option<Scores>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub psnr_db: Summary,
    pub npsnr: Summary,
    pub ssim: Summary,
}

impl Aggregate {
    fn of<'a>(scores: impl Iterator<Item = &'a Scores> + Clone) -> Aggregate {
        let col = |f: fn(&Scores) -> f64| Summary::of(&scores.clone().map(f).collect::<Vec<_>>());
        Aggregate {
            psnr_db: col(|s| s.psnr_db),
            npsnr: col(|s| s.npsnr),
            ssim: col(|s| s.ssim),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub id: String,
    pub p0: (f64, f64),
    pub p1: (f64, f64),
    pub pearson_r: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub samples: Vec<SampleMetrics>,
    pub aggregate: Aggregate,
    pub baseline_aggregate: Option<Aggregate>,
    pub profiles: Vec<ProfileEntry>,
}

impl MetricReport {
    pub fn from_samples(samples: Vec<SampleMetrics>) -> MetricReport {
        let scores: Vec<Scores> = samples
            .iter()
            .map(|s| Scores {
                psnr_db: s.psnr_db,
                npsnr: s.npsnr,
                ssim: s.ssim,
            })
            .collect();
        let base: Vec<Scores> = samples.iter().filter_map(|s| s.baseline).collect();
        let baseline_aggregate = (!base.is_empty() && base.len() == samples.len()).then(|| Aggregate::of(base.iter()));
        MetricReport {
            aggregate: Aggregate::of(scores.iter()),
            baseline_aggregate,
            samples,
            profiles: Vec::new(),
        }
    }

    /// Merge several reports (e.g. one per fold) into one.
    pub fn pooled(reports: &[MetricReport]) -> MetricReport {
        let mut samples: Vec<SampleMetrics> = reports.iter().flat_map(|r| r.samples.iter().cloned()).collect();
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        let mut out = MetricReport::from_samples(samples);
        out.profiles = reports.iter().flat_map(|r| r.profiles.iter().cloned()).collect();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per sample.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let with_base = self.baseline_aggregate.is_some();
        let mut header = vec!["id", "psnr_db", "npsnr", "ssim"];
        if with_base {
            header.extend(["baseline_psnr_db", "baseline_npsnr", "baseline_ssim"]);
        }
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(&header).map_err(csv_err)?;
        for s in &self.samples {
            let mut row = vec![s.id.clone(), s.psnr_db.to_string(), s.npsnr.to_string(), s.ssim.to_string()];
            if with_base {
                let b = s.baseline.expect("all rows carry a baseline");
                row.extend([b.psnr_db.to_string(), b.npsnr.to_string(), b.ssim.to_string()]);
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Write `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (ext, body) in [("json", self.to_json() + "\n"), ("csv", self.to_csv()?)] {
            let p = dir.join(format!("{stem}.{ext}"));
            let mut f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
            f.write_all(body.as_bytes()).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// An image with its sample id.
#[derive(Clone, Copy, Debug)]
pub struct Labeled<'a> {
    pub id: &'a str,
    pub image: &'a RawImage,
}

/// Score `generated` (and optionally `baselines`) against `targets`. All
/// lists must carry the same ids in the same order.
pub fn evaluate_pairset(generated: &[Labeled], targets: &[Labeled], baselines: Option<&[Labeled]>) -> Result<MetricReport> {
    let check = |other: &[Labeled], what: &str| -> Result<()> {
        if other.len() != targets.len() || other.iter().zip(targets).any(|(a, b)| a.id != b.id) {
            return Err(Error::InvalidArgument(format!("{what} ids do not match target ids")));
        }
        Ok(())
    };
    check(generated, "generated")?;
    if let Some(b) = baselines {
        check(b, "baseline")?;
    }
    let samples = targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let s = score(t.image, generated[i].image)?;
            let baseline = baselines.map(|b| score(t.image, b[i].image)).transpose()?;
            Ok(SampleMetrics {
                id: t.id.to_string(),
                psnr_db: s.psnr_db,
                npsnr: s.npsnr,
                ssim: s.ssim,
                baseline,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_samples(samples))
}
