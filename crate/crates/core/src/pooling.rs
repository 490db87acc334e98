//! Mean pooling over superpixels, forward and backward, and the mask prior
//! pooled from upsampled coarse proposal masks.

use crate::error::{Error, Result};
use crate::featurizer::FeatureMap;
use crate::raster::{bilinear_sample, Rect};
use crate::segmentation::SuperpixelSegmentation;

/// `n_superpixels x D` matrix of pooled per-superpixel values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
    /// Fingerprint of the segmentation the rows are aligned with.
    pub seg_ref: u64,
}

impl FeatureTable {
    pub fn zeros(rows: usize, cols: usize, seg_ref: u64) -> FeatureTable {
        FeatureTable { rows, cols, data: vec![0.0; rows * cols], seg_ref }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Per-superpixel scalar in `[0, 1]`, aligned with a sampled id list.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorVector {
    pub values: Vec<f64>,
}

/// Mean of `map` over each superpixel, one row per id, one column per channel.
pub fn pool_mean_forward(
    map: &FeatureMap,
    seg: &SuperpixelSegmentation,
) -> Result<FeatureTable> {
    if map.width != seg.width || map.height != seg.height {
        return Err(Error::dimension_mismatch(format!(
            "feature map {}x{} vs segmentation {}x{}",
            map.width, map.height, seg.width, seg.height
        )));
    }
    let n = seg.count as usize;
    let mut table = FeatureTable::zeros(n, map.channels, seg.fingerprint());
    let areas = seg.areas();
    let pixels = seg.pixel_count();
    for c in 0..map.channels {
        let plane = map.plane(c);
        for p in 0..pixels {
            let id = seg.labels[p] as usize;
            table.data[id * map.channels + c] += plane[p];
        }
    }
    for id in 0..n {
        let inv = 1.0 / areas[id] as f64;
        for v in table.row_mut(id) {
            *v *= inv;
        }
    }
    Ok(table)
}

/// Adjoint of the mean pooling: each pixel of superpixel `i` receives
/// `grad_table[i] / area(i)` per channel.
pub fn pool_mean_backward(
    grad_table: &FeatureTable,
    seg: &SuperpixelSegmentation,
) -> Result<FeatureMap> {
    if grad_table.rows != seg.count as usize {
        return Err(Error::dimension_mismatch(format!(
            "gradient table has {} rows for {} superpixels",
            grad_table.rows, seg.count
        )));
    }
    let areas = seg.areas();
    let mut map = FeatureMap::new(grad_table.cols, seg.width, seg.height);
    let pixels = seg.pixel_count();
    for c in 0..grad_table.cols {
        let n = pixels;
        let plane = &mut map.data[c * n..(c + 1) * n];
        for p in 0..pixels {
            let id = seg.labels[p] as usize;
            plane[p] = grad_table.data[id * grad_table.cols + c] / areas[id] as f64;
        }
    }
    Ok(map)
}

/// Pool an upsampled coarse mask over the sampled superpixels of a window.
///
/// The `mask_side x mask_side` soft mask is bilinearly upsampled (half-pixel
/// aligned) to the window resolution and treated as zero outside the window.
/// The prior of a superpixel is the mean over its FULL area, so superpixels
/// that barely overlap the window get proportionally small priors.
pub fn pool_mask_prior(
    coarse_mask: &[f64],
    mask_side: usize,
    window: &Rect,
    seg: &SuperpixelSegmentation,
    sampled_ids: &[u32],
) -> Result<PriorVector> {
    if coarse_mask.len() != mask_side * mask_side {
        return Err(Error::dimension_mismatch(format!(
            "coarse mask has {} values, expected {}",
            coarse_mask.len(),
            mask_side * mask_side
        )));
    }
    if window.is_empty() {
        return Err(Error::invalid_input("empty proposal window"));
    }
    if window.right() > seg.width || window.bottom() > seg.height {
        return Err(Error::invalid_input("window exceeds image bounds"));
    }

    let mut index_of = std::collections::HashMap::with_capacity(sampled_ids.len());
    for (i, &id) in sampled_ids.iter().enumerate() {
        index_of.insert(id, i);
    }
    let mut sums = vec![0.0f64; sampled_ids.len()];

    let sx = mask_side as f64 / window.width as f64;
    let sy = mask_side as f64 / window.height as f64;
    for wy in 0..window.height {
        let v = (wy as f64 + 0.5) * sy - 0.5;
        for wx in 0..window.width {
            let id = seg.label_at(window.x + wx, window.y + wy);
            if let Some(&slot) = index_of.get(&id) {
                let u = (wx as f64 + 0.5) * sx - 0.5;
                sums[slot] += bilinear_sample(coarse_mask, mask_side, mask_side, u, v);
            }
        }
    }

    let areas = seg.areas();
    let values = sampled_ids
        .iter()
        .zip(&sums)
        .map(|(&id, &s)| (s / areas[id as usize] as f64).clamp(0.0, 1.0))
        .collect();
    Ok(PriorVector { values })
}
