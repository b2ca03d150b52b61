use std::fs;
use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted image side.
pub const MIN_SIDE: usize = 8;

/// Integer grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawImage {
    width: usize,
    height: usize,
    bit_depth: u8,
    pixels: Vec<u16>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, bit_depth: u8, pixels: Vec<u16>) -> Result<Self> {
        if bit_depth != 8 && bit_depth != 16 {
            return Err(Error::InvalidArgument(format!("bit depth must be 8 or 16, got {bit_depth}")));
        }
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::InvalidArgument(format!(
                "image is {width}x{height}; both sides must be >= {MIN_SIDE}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::shape(
                "image",
                format!("{width}x{height} needs {} pixels, got {}", width * height, pixels.len()),
            ));
        }
        let max = max_value(bit_depth);
        if let Some(p) = pixels.iter().find(|&&p| p > max) {
            return Err(Error::InvalidArgument(format!("pixel {p} exceeds {bit_depth}-bit range")));
        }
        Ok(RawImage {
            width,
            height,
            bit_depth,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, bit_depth: u8, value: u16) -> Result<Self> {
        RawImage::new(width, height, bit_depth, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, bit_depth: u8, mut f: impl FnMut(usize, usize) -> u16) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        RawImage::new(width, height, bit_depth, pixels)
    }

    /// Quantize real intensities in `[0, 1]` (clamped) to the full integer range.
    pub fn from_unit(width: usize, height: usize, bit_depth: u8, values: &[f64]) -> Result<Self> {
        let max = max_value(bit_depth) as f64;
        let pixels = values.iter().map(|&v| (v.clamp(0.0, 1.0) * max).round() as u16).collect();
        RawImage::new(width, height, bit_depth, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn max_value(&self) -> u16 {
        max_value(self.bit_depth)
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    /// Pixels as `f64` in native intensity units.
    pub fn to_plane(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|&p| p as f64).collect(),
        }
    }
}

pub fn max_value(bit_depth: u8) -> u16 {
    if bit_depth == 8 {
        u8::MAX as u16
    } else {
        u16::MAX
    }
}

/// Real-valued single-channel image used by the metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height || width == 0 || height == 0 {
            return Err(Error::shape(
                "plane",
                format!("{width}x{height} needs {} values, got {}", width * height, data.len()),
            ));
        }
        Ok(Plane { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

fn format_err(path: &Path, detail: impl std::fmt::Display) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

/// Read an 8- or 16-bit grayscale PNG (an alpha channel is dropped).
pub fn read_png(path: &Path) -> Result<RawImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| format_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| format_err(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => return Err(format_err(path, format!("expected grayscale, found {other:?}"))),
    };
    let (depth, pixels): (u8, Vec<u16>) = match info.bit_depth {
        png::BitDepth::Eight => (8, buf[..w * h * channels].chunks(channels).map(|c| c[0] as u16).collect()),
        png::BitDepth::Sixteen => (
            16,
            buf[..w * h * channels * 2]
                .chunks(2 * channels)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect(),
        ),
        other => return Err(format_err(path, format!("unsupported bit depth {other:?}"))),
    };
    RawImage::new(w, h, depth, pixels).map_err(|e| format_err(path, e))
}

pub fn write_png(path: &Path, img: &RawImage) -> Result<()> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        let data: Vec<u8> = if img.bit_depth == 8 {
            enc.set_depth(png::BitDepth::Eight);
            img.pixels.iter().map(|&p| p as u8).collect()
        } else {
            enc.set_depth(png::BitDepth::Sixteen);
            img.pixels.iter().flat_map(|p| p.to_be_bytes()).collect()
        };
        let mut writer = enc.write_header().map_err(|e| format_err(path, e))?;
        writer.write_image_data(&data).map_err(|e| format_err(path, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for depth in [8u8, 16] {
            let max = max_value(depth) as usize;
            let img = RawImage::from_fn(9, 12, depth, |x, y| ((x * 31 + y * 17) % (max + 1)) as u16).unwrap();
            let p = dir.path().join(format!("i{depth}.png"));
            write_png(&p, &img).unwrap();
            assert_eq!(read_png(&p).unwrap(), img);
        }
    }

    #[test]
    fn invariants() {
        assert!(RawImage::filled(7, 8, 8, 0).is_err());
        assert!(RawImage::filled(8, 8, 12, 0).is_err());
        assert!(RawImage::new(8, 8, 8, vec![256; 64]).is_err());
    }

    #[test]
    fn unreadable_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        fs::write(&p, b"not a png").unwrap();
        assert!(read_png(&p).unwrap_err().to_string().contains("bad.png"));
    }
}
