//! In-memory rasters and the small amount of pixel geometry the pipeline
//! needs: RGB images as `f64` in `[0, 1]`, CIELAB conversion, separable
//! Gaussian smoothing with replicated borders, and axis-aligned pixel
//! rectangles.

use std::path::Path;

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle, `x`/`y` top-left corner, in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Rect { x, y, width, height }
    }

    /// One past the rightmost column.
    pub fn right(&self) -> u32 {
        self.x + self.width
    }

    /// One past the bottom row.
    pub fn bottom(&self) -> u32 {
        self.y + self.height
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    /// Intersection with an image of the given size. May come out empty.
    pub fn clip(&self, width: u32, height: u32) -> Rect {
        let x0 = self.x.min(width);
        let y0 = self.y.min(height);
        let x1 = self.right().min(width);
        let y1 = self.bottom().min(height);
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Grow the rectangle by `frac` of its size on every side (rounded),
    /// clipped to the image.
    pub fn dilate(&self, frac: f64, width: u32, height: u32) -> Rect {
        let dx = (self.width as f64 * frac).round() as i64;
        let dy = (self.height as f64 * frac).round() as i64;
        let x0 = (self.x as i64 - dx).max(0) as u32;
        let y0 = (self.y as i64 - dy).max(0) as u32;
        let x1 = (self.right() as i64 + dx).min(width as i64) as u32;
        let y1 = (self.bottom() as i64 + dy).min(height as i64) as u32;
        Rect::new(x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0))
    }

    /// Union of two rectangles (smallest rectangle containing both).
    pub fn union(&self, other: &Rect) -> Rect {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }
}

/// RGB image with channel values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbRaster {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f64; 3]>,
}

impl RgbRaster {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid_input("zero-sized image"));
        }
        Ok(RgbRaster {
            width,
            height,
            pixels: vec![[0.0; 3]; width as usize * height as usize],
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Result<Self> {
        let mut r = RgbRaster::new(width, height)?;
        r.pixels.fill(rgb);
        Ok(r)
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid_input("zero-sized image"));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(Error::dimension_mismatch(format!(
                "pixel buffer has {} entries for {}x{} image",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(RgbRaster { width, height, pixels })
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f64; 3] {
        self.pixels[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [f64; 3]) {
        let i = self.index(x, y);
        self.pixels[i] = rgb;
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    /// Rec. 601 luma, stays in `[0, 1]`.
    pub fn luminance_plane(&self) -> Vec<f64> {
        self.pixels
            .iter()
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }

    /// Area-average downsampling by an integer factor. Trailing rows/columns
    /// that do not fill a whole block are averaged into the last block.
    pub fn downsample(&self, factor: u32) -> Result<RgbRaster> {
        if factor == 0 {
            return Err(Error::invalid_input("downsample factor must be >= 1"));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let ow = (self.width / factor).max(1);
        let oh = (self.height / factor).max(1);
        let mut out = RgbRaster::new(ow, oh)?;
        for oy in 0..oh {
            for ox in 0..ow {
                let x0 = ox * factor;
                let y0 = oy * factor;
                let x1 = if ox + 1 == ow { self.width } else { x0 + factor };
                let y1 = if oy + 1 == oh { self.height } else { y0 + factor };
                let mut acc = [0.0; 3];
                let mut n = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = self.get(x, y);
                        acc[0] += p[0];
                        acc[1] += p[1];
                        acc[2] += p[2];
                        n += 1.0;
                    }
                }
                out.set(ox, oy, [acc[0] / n, acc[1] / n, acc[2] / n]);
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<RgbRaster> {
        let img = image::open(path)?.into_rgb8();
        let (width, height) = img.dimensions();
        let pixels = img
            .pixels()
            .map(|p| {
                [
                    p.0[0] as f64 / 255.0,
                    p.0[1] as f64 / 255.0,
                    p.0[2] as f64 / 255.0,
                ]
            })
            .collect();
        RgbRaster::from_pixels(width, height, pixels)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut img = image::RgbImage::new(self.width, self.height);
        for (i, px) in self.pixels.iter().enumerate() {
            let x = (i % self.width as usize) as u32;
            let y = (i / self.width as usize) as u32;
            img.put_pixel(
                x,
                y,
                image::Rgb([
                    (px[0].clamp(0.0, 1.0) * 255.0).round() as u8,
                    (px[1].clamp(0.0, 1.0) * 255.0).round() as u8,
                    (px[2].clamp(0.0, 1.0) * 255.0).round() as u8,
                ]),
            );
        }
        img.save(path)?;
        Ok(())
    }
}

/// sRGB (D65) to CIELAB. Input channels in `[0, 1]`.
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    fn linearize(c: f64) -> f64 {
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    }
    let r = linearize(rgb[0]);
    let g = linearize(rgb[1]);
    let b = linearize(rgb[2]);

    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;

    // D65 reference white
    let xn = x / 0.95047;
    let yn = y / 1.0;
    let zn = z / 1.08883;

    fn f(t: f64) -> f64 {
        const DELTA: f64 = 6.0 / 29.0;
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    }
    let fx = f(xn);
    let fy = f(yn);
    let fz = f(zn);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// 1-D Gaussian kernel with radius `ceil(3 sigma)`, normalized to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur of a scalar plane, borders replicated.
pub fn gaussian_blur_plane(plane: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    assert_eq!(plane.len(), width * height);
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return plane.to_vec();
    }
    let radius = (kernel.len() / 2) as i64;

    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (j, kv) in kernel.iter().enumerate() {
                let sx = (x as i64 + j as i64 - radius).clamp(0, width as i64 - 1) as usize;
                acc += kv * row[sx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (j, kv) in kernel.iter().enumerate() {
                let sy = (y as i64 + j as i64 - radius).clamp(0, height as i64 - 1) as usize;
                acc += kv * tmp[sy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Bilinear sample of a scalar plane at continuous coordinates, where integer
/// coordinates are pixel centers. Coordinates are clamped to the plane.
pub fn bilinear_sample(plane: &[f64], width: usize, height: usize, u: f64, v: f64) -> f64 {
    let u = u.clamp(0.0, (width - 1) as f64);
    let v = v.clamp(0.0, (height - 1) as f64);
    let x0 = u.floor() as usize;
    let y0 = v.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = u - x0 as f64;
    let fy = v - y0 as f64;
    let top = plane[y0 * width + x0] * (1.0 - fx) + plane[y0 * width + x1] * fx;
    let bot = plane[y1 * width + x0] * (1.0 - fx) + plane[y1 * width + x1] * fx;
    top * (1.0 - fy) + bot * fy
}
