use std::path::Path;

use crate::error::{Error, Result};

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image", "width and height must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(
                "image",
                format!("{} pixels for a {width}x{height} image", pixels.len()),
            ));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("image", format!("intensity {v} outside [0, 1]")));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from `f(x, y)`, clamping values into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    /// Decodes an 8-bit PNG or JPEG. Colour input is converted with luma
    /// weights 0.299 / 0.587 / 0.114.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = ::image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(Self::from_dynamic(&img))
    }

    pub fn from_dynamic(img: &::image::DynamicImage) -> Self {
        let (width, height) = (img.width() as usize, img.height() as usize);
        let pixels = match img {
            ::image::DynamicImage::ImageLuma8(g) => {
                g.as_raw().iter().map(|&p| f64::from(p) / 255.0).collect()
            }
            other => other
                .to_rgb8()
                .pixels()
                .map(|p| {
                    let [r, g, b] = p.0;
                    (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)) / 255.0
                })
                .collect(),
        };
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with coordinates clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear resampling with pixel-centre alignment. Resizing to the
    /// current size returns an identical image.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> GrayImage {
        assert!(width > 0 && height > 0, "empty target size");
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let top = self.get(x0, y0) * (1.0 - wx) + self.get(x1, y0) * wx;
                let bottom = self.get(x0, y1) * (1.0 - wx) + self.get(x1, y1) * wx;
                pixels.push((top * (1.0 - wy) + bottom * wy).clamp(0.0, 1.0));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    /// Quarter turn clockwise: pixel `(x, y)` moves to `(height - 1 - y, x)`.
    pub fn rotate90(&self) -> GrayImage {
        let (w, h) = (self.height, self.width);
        let mut pixels = vec![0.0; w * h];
        for y in 0..self.height {
            for x in 0..self.width {
                pixels[x * w + (self.height - 1 - y)] = self.get(x, y);
            }
        }
        GrayImage {
            width: w,
            height: h,
            pixels,
        }
    }
}
