//! Per-superpixel training labels from pixel-precise annotations.
//!
//! Annotations rarely align with superpixel boundaries, so each annotation is
//! converted to the set of superpixels that best approximates it under IoU:
//! seeded with every fully-contained superpixel, then grown greedily while
//! the IoU strictly increases. A brute-force oracle validates the greedy
//! procedure on small instances.

pub mod synth;

pub use synth::{synth_generate, SynthConfig, SynthDataset, SynthItem};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::sampling::SegCrop;
use crate::segmentation::SuperpixelSegmentation;

/// Strict-improvement tolerance for greedy acceptance.
const IOU_EPS: f64 = 1e-12;

/// A full-resolution binary annotation mask.
#[derive(Debug, Clone)]
pub struct GtObject {
    pub id: u32,
    pub mask: BinaryMask,
}

impl GtObject {
    pub fn new(id: u32, mask: BinaryMask) -> Result<GtObject> {
        if mask.is_empty() {
            return Err(Error::invalid_input("annotation mask is empty"));
        }
        Ok(GtObject { id, mask })
    }
}

/// A set of superpixel ids approximating one annotation, with the IoU the
/// set achieves against it.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSet {
    /// Ascending superpixel ids.
    pub ids: Vec<u32>,
    pub iou: f64,
}

struct Overlap {
    /// Pixels of each superpixel inside the annotation.
    inter: Vec<u64>,
    /// Total pixels of each superpixel.
    area: Vec<u64>,
    gt_area: u64,
}

impl Overlap {
    fn compute(seg: &SuperpixelSegmentation, gt: &GtObject) -> Result<Overlap> {
        if seg.width != gt.mask.width || seg.height != gt.mask.height {
            return Err(Error::dimension_mismatch(format!(
                "segmentation {}x{} vs annotation {}x{}",
                seg.width, seg.height, gt.mask.width, gt.mask.height
            )));
        }
        let n = seg.count as usize;
        let mut inter = vec![0u64; n];
        let mut area = vec![0u64; n];
        let mut gt_area = 0u64;
        for (p, &label) in seg.labels.iter().enumerate() {
            area[label as usize] += 1;
            if gt.mask.data[p] != 0 {
                inter[label as usize] += 1;
                gt_area += 1;
            }
        }
        if gt_area == 0 {
            return Err(Error::invalid_input("annotation does not overlap the image"));
        }
        Ok(Overlap { inter, area, gt_area })
    }

    /// IoU of a set described by its accumulated intersection and the
    /// accumulated non-annotation pixels it drags into the union.
    fn iou(&self, inter_sum: u64, extra_sum: u64) -> f64 {
        inter_sum as f64 / (self.gt_area + extra_sum) as f64
    }
}

/// Greedy optimal superpixel set for one annotation.
///
/// Seeds with all superpixels fully contained in the annotation (each such
/// addition strictly increases IoU); when none exists, seeds with the single
/// superpixel of highest IoU (ties toward the lowest id). Then repeatedly
/// adds the best-improving superpixel until no addition strictly increases
/// the IoU.
pub fn greedy_optimal_set(seg: &SuperpixelSegmentation, gt: &GtObject) -> Result<OptimalSet> {
    let ov = Overlap::compute(seg, gt)?;
    let n = seg.count as usize;
    let mut in_set = vec![false; n];
    let mut inter_sum = 0u64;
    let mut extra_sum = 0u64;

    for i in 0..n {
        if ov.inter[i] > 0 && ov.inter[i] == ov.area[i] {
            in_set[i] = true;
            inter_sum += ov.inter[i];
        }
    }

    if inter_sum == 0 {
        // no fully contained superpixel: seed with the highest-IoU single
        let mut best = 0usize;
        let mut best_iou = -1.0;
        for i in 0..n {
            let iou = ov.iou(ov.inter[i], ov.area[i] - ov.inter[i]);
            if iou > best_iou {
                best_iou = iou;
                best = i;
            }
        }
        in_set[best] = true;
        inter_sum = ov.inter[best];
        extra_sum = ov.area[best] - ov.inter[best];
    }

    let mut current = ov.iou(inter_sum, extra_sum);
    loop {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if in_set[i] || ov.inter[i] == 0 {
                continue;
            }
            let iou = ov.iou(inter_sum + ov.inter[i], extra_sum + ov.area[i] - ov.inter[i]);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((i, iou));
            }
        }
        match best {
            Some((i, iou)) if iou > current + IOU_EPS => {
                in_set[i] = true;
                inter_sum += ov.inter[i];
                extra_sum += ov.area[i] - ov.inter[i];
                current = iou;
            }
            _ => break,
        }
    }

    let ids = (0..n as u32).filter(|&i| in_set[i as usize]).collect();
    Ok(OptimalSet { ids, iou: current })
}

/// Exhaustive maximum-IoU subset; refuses segmentations with more than 20
/// superpixels. Ties resolve to the lexicographically smallest id set.
pub fn brute_force_optimal_set(
    seg: &SuperpixelSegmentation,
    gt: &GtObject,
) -> Result<OptimalSet> {
    if seg.count > 20 {
        return Err(Error::invalid_input(format!(
            "brute force refuses {} superpixels (limit 20)",
            seg.count
        )));
    }
    let ov = Overlap::compute(seg, gt)?;
    let n = seg.count as usize;

    let mut best_iou = -1.0;
    let mut best_ids: Vec<u32> = Vec::new();
    for mask in 1u32..(1 << n) {
        let mut inter_sum = 0u64;
        let mut extra_sum = 0u64;
        for i in 0..n {
            if mask & (1 << i) != 0 {
                inter_sum += ov.inter[i];
                extra_sum += ov.area[i] - ov.inter[i];
            }
        }
        let iou = ov.iou(inter_sum, extra_sum);
        let ids: Vec<u32> = (0..n as u32).filter(|&i| mask & (1 << i) != 0).collect();
        if iou > best_iou || (iou == best_iou && lex_smaller(&ids, &best_ids)) {
            best_iou = iou;
            best_ids = ids;
        }
    }
    Ok(OptimalSet { ids: best_ids, iou: best_iou })
}

fn lex_smaller(a: &[u32], b: &[u32]) -> bool {
    a < b
}

/// Binary labels for the sampled superpixels of a window: 1 iff the
/// superpixel belongs to the optimal set.
pub fn labels_for_window(optimal: &OptimalSet, crop: &SegCrop) -> Vec<u8> {
    crop.ids
        .iter()
        .map(|id| optimal.ids.binary_search(id).is_ok() as u8)
        .collect()
}
