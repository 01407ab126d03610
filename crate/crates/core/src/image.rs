//! Dense pixel grids: rendered/target images, per-pixel gradients, and
//! per-pixel gradient weights. All buffers are row-major.

use crate::error::CoreError;
use std::io::Cursor;
use std::path::Path;

/// RGB image with channels in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize) -> Self {
        ColorImage { width, height, pixels: vec![[0.0; 3]; width * height] }
    }

    pub fn constant(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        ColorImage { width, height, pixels: vec![rgb; width * height] }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self, CoreError> {
        if pixels.len() != width * height {
            return Err(CoreError::dims("ColorImage::from_pixels", width * height, pixels.len()));
        }
        Ok(ColorImage { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        ColorImage { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn same_dims(&self, other: &ColorImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// 8-bit PNG bytes; values quantized by round(255 * clamp(v)).
    pub fn to_png_bytes(&self) -> Vec<u8> {
        let mut raw = Vec::with_capacity(self.pixels.len() * 3);
        for px in &self.pixels {
            for c in px {
                raw.push((255.0 * c.clamp(0.0, 1.0)).round() as u8);
            }
        }
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("pixel buffer length matches dimensions");
        let mut out = Cursor::new(Vec::new());
        image::DynamicImage::ImageRgb8(buf)
            .write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory png encode");
        out.into_inner()
    }

    pub fn write_png(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_png_bytes())
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self, CoreError> {
        let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| CoreError::invalid("png", e))?
            .into_rgb8();
        let (w, h) = (decoded.width() as usize, decoded.height() as usize);
        let pixels = decoded
            .pixels()
            .map(|p| [p.0[0] as f64 / 255.0, p.0[1] as f64 / 255.0, p.0[2] as f64 / 255.0])
            .collect();
        Ok(ColorImage { width: w, height: h, pixels })
    }

    pub fn read_png(path: &Path) -> Result<Self, CoreError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CoreError::invalid("png path", format!("{}: {e}", path.display())))?;
        ColorImage::from_png_bytes(&bytes)
    }
}

/// Per-pixel dL/dColor. Same layout as ColorImage but unbounded values.
#[derive(Debug, Clone, PartialEq)]
pub struct GradImage {
    width: usize,
    height: usize,
    values: Vec<[f64; 3]>,
}

impl GradImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        GradImage { width, height, values: vec![[0.0; 3]; width * height] }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<[f64; 3]>) -> Result<Self, CoreError> {
        if values.len() != width * height {
            return Err(CoreError::dims("GradImage::from_values", width * height, values.len()));
        }
        Ok(GradImage { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: [f64; 3]) {
        self.values[y * self.width + x] = v;
    }

    pub fn add(&mut self, x: usize, y: usize, v: [f64; 3]) {
        let cell = &mut self.values[y * self.width + x];
        cell[0] += v[0];
        cell[1] += v[1];
        cell[2] += v[2];
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }
}

/// Per-pixel gradient weights in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl WeightMap {
    pub fn ones(width: usize, height: usize) -> Self {
        WeightMap { width, height, values: vec![1.0; width * height] }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        WeightMap { width, height, values: vec![0.0; width * height] }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self, CoreError> {
        if values.len() != width * height {
            return Err(CoreError::dims("WeightMap::from_values", width * height, values.len()));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CoreError::invalid("weight map", format!("value {bad} outside [0, 1]")));
        }
        Ok(WeightMap { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Grayscale PNG of the map, values quantized like ColorImage channels.
    pub fn to_png_bytes(&self) -> Vec<u8> {
        let raw: Vec<u8> = self
            .values
            .iter()
            .map(|v| (255.0 * v.clamp(0.0, 1.0)).round() as u8)
            .collect();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions");
        let mut out = Cursor::new(Vec::new());
        image::DynamicImage::ImageLuma8(buf)
            .write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory png encode");
        out.into_inner()
    }
}
