//! RGB images stored as `f64` samples in `[0, 1]`, interleaved row-major (HWC).
//!
//! One 8-bit step is `1/255`; [`quantize_u8`] and [`dequantize_u8`] are exact
//! inverses on the 256-point grid.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{param, shape, Error, Result};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Maps an 8-bit code to its real value `v / 255`.
pub fn dequantize_u8(v: u8) -> f64 {
    f64::from(v) / 255.0
}

/// Rounds a real sample to the nearest 8-bit code, saturating outside `[0, 1]`.
pub fn quantize_u8(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * CHANNELS {
            return Err(shape(format!(
                "expected {} samples for {height}x{width}x3, got {}",
                height * width * CHANNELS,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(param("image samples must be finite"));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width * CHANNELS],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * CHANNELS + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(shape(format!(
                "image shapes differ: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )))
        }
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn clamped(mut self) -> Self {
        self.clamp_unit();
        self
    }

    pub fn is_valid(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Snaps every sample to the 8-bit grid, as a PNG round trip would.
    pub fn quantized_8bit(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| dequantize_u8(quantize_u8(v))).collect(),
        }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize_u8(v)).collect()
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width * CHANNELS {
            return Err(shape("byte buffer does not match image dimensions"));
        }
        Ok(Self {
            height,
            width,
            data: bytes.iter().map(|&b| dequantize_u8(b)).collect(),
        })
    }

    /// Largest absolute per-sample difference.
    pub fn linf_distance(&self, other: &Image) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .ok_or_else(|| shape("buffer size mismatch while encoding PNG"))?;
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::from_rgb8(h as usize, w as usize, img.as_raw())
    }

    /// Writes an ASCII (P3) PPM with maxval 255.
    pub fn write_ppm<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "P3")?;
        writeln!(out, "{} {}", self.width, self.height)?;
        writeln!(out, "255")?;
        for row in self.to_rgb8().chunks(self.width * CHANNELS) {
            let line: Vec<String> = row.iter().map(|b| b.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Reads an ASCII (P3) PPM. Comments (`#` to end of line) are allowed.
    pub fn read_ppm<R: Read>(input: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in BufReader::new(input).lines() {
            let line = line?;
            let content = line.split('#').next().unwrap_or("");
            tokens.extend(content.split_whitespace().map(str::to_owned));
        }
        let mut it = tokens.into_iter();
        let magic = it.next().ok_or_else(|| Error::Format("empty PPM".into()))?;
        if magic != "P3" {
            return Err(Error::Format(format!("expected P3 magic, found {magic}")));
        }
        let mut next_num = |what: &str| -> Result<u32> {
            it.next()
                .ok_or_else(|| Error::Format(format!("PPM truncated before {what}")))?
                .parse::<u32>()
                .map_err(|e| Error::Format(format!("bad PPM {what}: {e}")))
        };
        let width = next_num("width")? as usize;
        let height = next_num("height")? as usize;
        let maxval = next_num("maxval")?;
        if maxval == 0 || maxval > 65535 {
            return Err(Error::Format(format!("unsupported PPM maxval {maxval}")));
        }
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for _ in 0..width * height * CHANNELS {
            let v = next_num("sample")?;
            if v > maxval {
                return Err(Error::Format("PPM sample exceeds maxval".into()));
            }
            data.push(f64::from(v) / f64::from(maxval));
        }
        Self::new(height, width, data)
    }

    /// Dispatches on the extension: `.ppm` is ASCII PPM, anything else PNG.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if is_ppm(path) {
            let f = fs::File::create(path)?;
            self.write_ppm(std::io::BufWriter::new(f))
        } else {
            self.save_png(path)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if is_ppm(path) {
            Self::read_ppm(fs::File::open(path)?)
        } else {
            Self::load_png(path)
        }
    }

    /// Bilinear resample of the pixel grid with half-pixel (edge-aligned) sample centers.
    pub fn resized(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(param("target size must be positive"));
        }
        let ys = crate::resize::axis_weights(self.height, height);
        let xs = crate::resize::axis_weights(self.width, width);
        Ok(Self::from_fn(height, width, |y, x, c| {
            let (y0, y1, ty) = ys[y];
            let (x0, x1, tx) = xs[x];
            let top = self.get(y0, x0, c) * (1.0 - tx) + self.get(y0, x1, c) * tx;
            let bot = self.get(y1, x0, c) * (1.0 - tx) + self.get(y1, x1, c) * tx;
            top * (1.0 - ty) + bot * ty
        }))
    }

    /// Largest centered square crop, resized to `size`×`size`.
    pub fn center_crop_square(&self, size: usize) -> Result<Self> {
        let side = self.height.min(self.width);
        let y0 = (self.height - side) / 2;
        let x0 = (self.width - side) / 2;
        let crop = Self::from_fn(side, side, |y, x, c| self.get(y0 + y, x0 + x, c));
        crop.resized(size, size)
    }
}

fn is_ppm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
}

/// Pixel-wise mean of equally shaped images.
pub fn mean_image(images: &[Image]) -> Result<Image> {
    let first = images.first().ok_or_else(|| param("cannot average an empty corpus"))?;
    let mut acc = vec![0.0; first.data.len()];
    for img in images {
        first.check_same_shape(img)?;
        for (a, v) in acc.iter_mut().zip(&img.data) {
            *a += v;
        }
    }
    let n = images.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Image::new(first.height, first.width, acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_grid_round_trip_is_lossless() {
        for v in 0..=255u8 {
            assert_eq!(quantize_u8(dequantize_u8(v)), v);
        }
    }

    #[test]
    fn ppm_round_trip() {
        let img = Image::from_fn(3, 5, |y, x, c| ((y * 31 + x * 7 + c * 101) % 256) as f64 / 255.0);
        let mut buf = Vec::new();
        img.write_ppm(&mut buf).unwrap();
        let back = Image::read_ppm(buf.as_slice()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn ppm_rejects_binary_magic() {
        assert!(Image::read_ppm("P6\n1 1\n255\n".as_bytes()).is_err());
    }

    #[test]
    fn png_round_trip_on_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::from_fn(4, 6, |y, x, c| ((y * 40 + x * 3 + c) % 256) as f64 / 255.0);
        img.save(&path).unwrap();
        assert_eq!(Image::load(&path).unwrap(), img);
    }

    #[test]
    fn mean_of_zeros_and_ones_is_half() {
        let m = mean_image(&[Image::filled(2, 2, 0.0), Image::filled(2, 2, 1.0)]).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.5));
        assert!(mean_image(&[]).is_err());
    }

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(Image::new(2, 2, vec![0.0; 11]).is_err());
        let mut d = vec![0.0; 12];
        d[3] = f64::NAN;
        assert!(Image::new(2, 2, d).is_err());
    }
}
