//! Selecting superpixels in and around each coarse proposal window and
//! batching `[mask prior, features]` rows across windows and scales.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pooling::{FeatureTable, PriorVector};
use crate::raster::Rect;
use crate::segmentation::SuperpixelSegmentation;

/// Side length of the fixed coarse mask grid.
pub const MASK_SIDE: usize = 40;

/// A coarse proposal: a scale-tagged window with a soft 40x40 mask and an
/// objectness score. This is the refiner's input unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseProposal {
    pub window: Rect,
    /// Downscale factor of the scale this window originates from.
    pub scale_id: u32,
    /// Row-major 40x40 soft mask, values in `[0, 1]`.
    pub mask40: Vec<f64>,
    pub objectness: f64,
}

impl CoarseProposal {
    pub fn validate(&self, image_width: u32, image_height: u32) -> Result<()> {
        if self.mask40.len() != MASK_SIDE * MASK_SIDE {
            return Err(Error::Format(format!(
                "mask40 has {} values, expected {}",
                self.mask40.len(),
                MASK_SIDE * MASK_SIDE
            )));
        }
        if self.mask40.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format("mask40 values outside [0, 1]".into()));
        }
        if self.window.right() > image_width || self.window.bottom() > image_height {
            return Err(Error::Format("proposal window outside image bounds".into()));
        }
        if self.window.is_empty() {
            return Err(Error::Format("empty proposal window".into()));
        }
        Ok(())
    }
}

/// The superpixels a window samples: every id with at least one pixel inside
/// the window, plus the expanded rectangle covering their full extents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegCrop {
    pub window: Rect,
    /// Union of the sampled superpixels' bounding boxes; contains `window`.
    pub expanded: Rect,
    /// Sampled global superpixel ids, ascending. The position in this list is
    /// the local id.
    pub ids: Vec<u32>,
}

/// Collect the superpixels intersecting `window`.
pub fn crop_segmentation(seg: &SuperpixelSegmentation, window: &Rect) -> Result<SegCrop> {
    if window.is_empty() {
        return Err(Error::invalid_input("empty window"));
    }
    if window.right() > seg.width || window.bottom() > seg.height {
        return Err(Error::invalid_input("window outside segmentation bounds"));
    }
    let mut sampled = vec![false; seg.count as usize];
    for y in window.y..window.bottom() {
        for x in window.x..window.right() {
            sampled[seg.label_at(x, y) as usize] = true;
        }
    }
    let ids: Vec<u32> = (0..seg.count).filter(|&id| sampled[id as usize]).collect();

    // Expand to the sampled superpixels' full extents.
    let mut expanded = *window;
    for y in 0..seg.height {
        for x in 0..seg.width {
            if sampled[seg.label_at(x, y) as usize] {
                expanded = expanded.union(&Rect::new(x, y, 1, 1));
            }
        }
    }
    Ok(SegCrop { window: *window, expanded, ids })
}

/// Bilinearly upsample a proposal's coarse mask to its window, binarize at
/// `threshold` and place it on a full-image canvas. This is the no-refinement
/// baseline a refined proposal is compared against.
pub fn upsampled_coarse_mask(
    proposal: &CoarseProposal,
    image_width: u32,
    image_height: u32,
    threshold: f64,
) -> Result<crate::mask::BinaryMask> {
    proposal.validate(image_width, image_height)?;
    let mut mask = crate::mask::BinaryMask::new(image_width, image_height);
    let w = &proposal.window;
    let sx = MASK_SIDE as f64 / w.width as f64;
    let sy = MASK_SIDE as f64 / w.height as f64;
    for wy in 0..w.height {
        let v = (wy as f64 + 0.5) * sy - 0.5;
        for wx in 0..w.width {
            let u = (wx as f64 + 0.5) * sx - 0.5;
            let value =
                crate::raster::bilinear_sample(&proposal.mask40, MASK_SIDE, MASK_SIDE, u, v);
            if value >= threshold {
                mask.set(w.x + wx, w.y + wy, true);
            }
        }
    }
    Ok(mask)
}

/// Rows of `[mask prior, D features]` with provenance and optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelBatch {
    /// Number of feature columns (row width is `feature_dim + 1`).
    pub feature_dim: usize,
    /// Row-major `n x (feature_dim + 1)`.
    pub data: Vec<f64>,
    /// Per row: (proposal index, global superpixel id).
    pub provenance: Vec<(u32, u32)>,
    /// Present in training batches only.
    pub labels: Option<Vec<u8>>,
}

impl SuperpixelBatch {
    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    pub fn row_width(&self) -> usize {
        self.feature_dim + 1
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.row_width();
        &self.data[r * w..(r + 1) * w]
    }
}

/// Concatenate the mask prior with the per-superpixel features for every
/// sampled superpixel of every proposal, in deterministic order (proposal
/// index ascending, then global superpixel id ascending).
///
/// `tables` maps scale id to that scale's projected feature table; `priors`
/// and optional `labels` align with each proposal's crop id list.
pub fn assemble_batch(
    proposals: &[CoarseProposal],
    crops: &[SegCrop],
    priors: &[PriorVector],
    tables: &BTreeMap<u32, FeatureTable>,
    labels: Option<&[Vec<u8>]>,
) -> Result<SuperpixelBatch> {
    if proposals.len() != crops.len() || proposals.len() != priors.len() {
        return Err(Error::dimension_mismatch(
            "proposals, crops and priors must align",
        ));
    }
    if let Some(l) = labels {
        if l.len() != proposals.len() {
            return Err(Error::dimension_mismatch("labels must align with proposals"));
        }
    }
    let feature_dim = match tables.values().next() {
        Some(t) => t.cols,
        None if proposals.is_empty() => 0,
        None => return Err(Error::Config("no pooled feature tables supplied".into())),
    };

    let mut batch = SuperpixelBatch {
        feature_dim,
        data: Vec::new(),
        provenance: Vec::new(),
        labels: labels.map(|_| Vec::new()),
    };

    for (p_idx, proposal) in proposals.iter().enumerate() {
        let crop = &crops[p_idx];
        let prior = &priors[p_idx];
        if prior.values.len() != crop.ids.len() {
            return Err(Error::dimension_mismatch(format!(
                "proposal {p_idx}: prior has {} values for {} sampled superpixels",
                prior.values.len(),
                crop.ids.len()
            )));
        }
        let table = tables.get(&proposal.scale_id).ok_or_else(|| {
            Error::Config(format!(
                "no pooled feature table for scale {}",
                proposal.scale_id
            ))
        })?;
        if table.cols != feature_dim {
            return Err(Error::dimension_mismatch(
                "pooled tables disagree on feature width",
            ));
        }
        let label_row = labels.map(|l| &l[p_idx]);
        if let Some(lr) = label_row {
            if lr.len() != crop.ids.len() {
                return Err(Error::dimension_mismatch(format!(
                    "proposal {p_idx}: {} labels for {} sampled superpixels",
                    lr.len(),
                    crop.ids.len()
                )));
            }
        }
        for (local, &id) in crop.ids.iter().enumerate() {
            if id as usize >= table.rows {
                return Err(Error::dimension_mismatch(format!(
                    "superpixel id {id} outside feature table with {} rows",
                    table.rows
                )));
            }
            batch.data.push(prior.values[local]);
            batch.data.extend_from_slice(table.row(id as usize));
            batch.provenance.push((p_idx as u32, id));
            if let (Some(out), Some(lr)) = (batch.labels.as_mut(), label_row) {
                out.push(lr[local]);
            }
        }
    }
    Ok(batch)
}
