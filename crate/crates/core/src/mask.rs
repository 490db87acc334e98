//! Binary masks and their run-length encoded interchange form.
//!
//! The RLE layout follows the dominant mask-interchange convention:
//! column-major pixel order with alternating run lengths that always start
//! with a (possibly zero-length) background run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense binary mask, row-major, one byte per pixel (0 or 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[y as usize * self.width as usize + x as usize] = v as u8;
    }

    pub fn area(&self) -> u64 {
        self.data.iter().filter(|&&v| v != 0).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Tight bounding box of the foreground, or `None` for an empty mask.
    pub fn bbox(&self) -> Option<crate::raster::Rect> {
        let (mut x0, mut y0) = (u32::MAX, u32::MAX);
        let (mut x1, mut y1) = (0u32, 0u32);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then(|| crate::raster::Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    pub fn load_png(path: &std::path::Path) -> Result<BinaryMask> {
        let img = image::open(path)?.into_luma8();
        let (width, height) = img.dimensions();
        let mut mask = BinaryMask::new(width, height);
        for (x, y, p) in img.enumerate_pixels() {
            mask.set(x, y, p.0[0] >= 128);
        }
        Ok(mask)
    }

    pub fn save_png(&self, path: &std::path::Path) -> Result<()> {
        let mut img = image::GrayImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                img.put_pixel(x, y, image::Luma([if self.get(x, y) { 255 } else { 0 }]));
            }
        }
        img.save(path)?;
        Ok(())
    }
}

/// Run-length encoded binary mask. `counts` alternates background/foreground
/// run lengths in column-major pixel order, starting with a background run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub height: u32,
    pub width: u32,
    pub counts: Vec<u32>,
}

impl RleMask {
    /// Encode a dense mask. The produced counts always start with a
    /// background run (zero-length when pixel (0,0) is foreground).
    pub fn encode(mask: &BinaryMask) -> RleMask {
        let mut counts = Vec::new();
        let mut current: u8 = 0;
        let mut run: u32 = 0;
        for x in 0..mask.width {
            for y in 0..mask.height {
                let v = mask.get(x, y) as u8;
                if v == current {
                    run += 1;
                } else {
                    counts.push(run);
                    current = v;
                    run = 1;
                }
            }
        }
        counts.push(run);
        RleMask {
            height: mask.height,
            width: mask.width,
            counts,
        }
    }

    pub fn decode(&self) -> Result<BinaryMask> {
        let n = self.height as u64 * self.width as u64;
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if total != n {
            return Err(Error::Format(format!(
                "rle counts sum to {total}, expected {n} for {}x{}",
                self.width, self.height
            )));
        }
        let mut mask = BinaryMask::new(self.width, self.height);
        let mut idx: u64 = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            let v = (i % 2 == 1) as u8;
            if v == 1 {
                for k in idx..idx + c as u64 {
                    let x = (k / self.height as u64) as u32;
                    let y = (k % self.height as u64) as u32;
                    mask.set(x, y, true);
                }
            }
            idx += c as u64;
        }
        Ok(mask)
    }

    /// Foreground area without decoding.
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 2 == 1)
            .map(|(_, &c)| c as u64)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_starts_with_zero_run_for_set_origin() {
        let mut m = BinaryMask::new(2, 2);
        m.set(0, 0, true);
        let rle = RleMask::encode(&m);
        assert_eq!(rle.counts[0], 0);
        assert_eq!(rle.counts.iter().map(|&c| c as u64).sum::<u64>(), 4);
    }

    #[test]
    fn decode_rejects_bad_total() {
        let rle = RleMask {
            height: 2,
            width: 2,
            counts: vec![1, 1],
        };
        assert!(rle.decode().is_err());
    }

    #[test]
    fn column_major_order() {
        // 2x2 with only (x=1, y=0) set: column-major order is
        // (0,0),(0,1),(1,0),(1,1) -> runs [2, 1, 1]
        let mut m = BinaryMask::new(2, 2);
        m.set(1, 0, true);
        let rle = RleMask::encode(&m);
        assert_eq!(rle.counts, vec![2, 1, 1]);
    }

    proptest! {
        #[test]
        fn rle_round_trip(bits in proptest::collection::vec(any::<bool>(), 1..200),
                          width in 1u32..14) {
            let height = (bits.len() as u32).div_ceil(width);
            let mut mask = BinaryMask::new(width, height);
            for (i, b) in bits.iter().enumerate() {
                let x = (i as u32) % width;
                let y = (i as u32) / width;
                mask.set(x, y, *b);
            }
            let rle = RleMask::encode(&mask);
            prop_assert_eq!(rle.decode().unwrap(), mask);
            prop_assert_eq!(rle.counts.iter().map(|&c| c as u64).sum::<u64>(),
                            (width * height) as u64);
        }
    }
}
