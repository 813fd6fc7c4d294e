use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

use crate::nn::Tensor;

pub const STRIP_HEIGHT: usize = 32;
pub const DOUBLE_EYE_WIDTH: usize = 128;
pub const SINGLE_EYE_WIDTH: usize = 64;

#[derive(Debug, Error)]
pub enum StripError {
    #[error("strip data has {got} values, {width}x{height}x3 needs {expected}")]
    Size {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("image decode failed: {0}")]
    Decode(#[from] image::ImageError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// RGB eye crop, row-major H×W×3 with channel values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct EyeStrip {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl EyeStrip {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, StripError> {
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(StripError::Size {
                width,
                height,
                expected,
                got: data.len(),
            });
        }
        let mut strip = Self { width, height, data };
        strip.clamp();
        Ok(strip)
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        for (c, v) in rgb.iter().enumerate() {
            self.data[i + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Builds a strip by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self { width, height, data }
    }

    fn clamp(&mut self) {
        for v in &mut self.data {
            // NaN maps to 0.
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
    }

    /// Mirror about the vertical axis.
    pub fn hflip(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.pixel(self.width - 1 - x, y))
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(vec![self.height, self.width, 3], self.data.clone()).expect("strip shape")
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let bytes = self.data.iter().map(|&v| (v * 255.0).round() as u8).collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, bytes).expect("strip shape")
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let data = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data,
        }
    }

    /// Rounds every channel to the nearest 8-bit level.
    pub fn quantized(&self) -> Self {
        Self::from_rgb8(&self.to_rgb8())
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        self.to_rgb8()
            .write_to(&mut buf, ImageFormat::Png)
            .expect("in-memory png encoding");
        buf.into_inner()
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, StripError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn save_png(&self, path: &Path) -> Result<(), StripError> {
        std::fs::write(path, self.encode_png()).map_err(|source| StripError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_png(path: &Path) -> Result<Self, StripError> {
        let bytes = std::fs::read(path).map_err(|source| StripError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::decode_png(&bytes)
    }
}
