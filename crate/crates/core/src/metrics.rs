//! Evaluation: mask IoU, average recall at proposal budgets (overall and by
//! object size), and the joined-segmentation protocol with boundary recall
//! and undersegmentation error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// IoU thresholds used for average recall: 0.50 to 0.95 in steps of 0.05.
pub const AR_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// COCO-convention object size partition boundaries (areas in pixels).
pub const SMALL_AREA_MAX: u64 = 32 * 32;
pub const LARGE_AREA_MIN: u64 = 96 * 96;

/// `|a and b| / |a or b|`; 0 when both masks are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::dimension_mismatch(format!(
            "mask {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let (x, y) = (x != 0, y != 0);
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        Ok(0.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// Best IoU against the top-`n` proposals, for every ground-truth object of
/// every image. `proposals` must already be sorted by descending score.
fn best_ious_at(
    proposals: &[Vec<BinaryMask>],
    gts: &[Vec<BinaryMask>],
    n: usize,
) -> Result<Vec<f64>> {
    if proposals.len() != gts.len() {
        return Err(Error::dimension_mismatch(
            "proposal and ground-truth image lists differ in length",
        ));
    }
    let mut best = Vec::new();
    for (img_props, img_gts) in proposals.iter().zip(gts) {
        let top = &img_props[..img_props.len().min(n)];
        for gt in img_gts {
            let mut b = 0.0f64;
            for p in top {
                b = b.max(mask_iou(p, gt)?);
            }
            best.push(b);
        }
    }
    Ok(best)
}

fn ar_from_best_ious(best: &[f64], thresholds: &[f64]) -> f64 {
    let n_gt = best.len() as f64;
    let mut acc = 0.0;
    for &t in thresholds {
        let recalled = best.iter().filter(|&&b| b >= t).count();
        acc += recalled as f64 / n_gt;
    }
    acc / thresholds.len() as f64
}

/// Average recall for the top-`n` proposals per image, pooled over the
/// dataset's ground-truth objects and averaged over `thresholds`.
pub fn average_recall(
    proposals: &[Vec<BinaryMask>],
    gts: &[Vec<BinaryMask>],
    n: usize,
    thresholds: &[f64],
) -> Result<f64> {
    let best = best_ious_at(proposals, gts, n)?;
    if best.is_empty() {
        return Err(Error::invalid_input("no ground-truth objects"));
    }
    Ok(ar_from_best_ious(&best, thresholds))
}

/// Average recall per object-size partition (small < 32^2 <= medium <= 96^2
/// < large), at the top-`n` budget. Empty partitions report `None`.
pub fn ar_by_size(
    proposals: &[Vec<BinaryMask>],
    gts: &[Vec<BinaryMask>],
    n: usize,
) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
    if proposals.len() != gts.len() {
        return Err(Error::dimension_mismatch(
            "proposal and ground-truth image lists differ in length",
        ));
    }
    let mut small = Vec::new();
    let mut medium = Vec::new();
    let mut large = Vec::new();
    for (img_props, img_gts) in proposals.iter().zip(gts) {
        let top = &img_props[..img_props.len().min(n)];
        for gt in img_gts {
            let mut b = 0.0f64;
            for p in top {
                b = b.max(mask_iou(p, gt)?);
            }
            let area = gt.area();
            if area < SMALL_AREA_MAX {
                small.push(b);
            } else if area <= LARGE_AREA_MIN {
                medium.push(b);
            } else {
                large.push(b);
            }
        }
    }
    let ar = |v: &Vec<f64>| {
        if v.is_empty() {
            None
        } else {
            Some(ar_from_best_ious(v, &AR_THRESHOLDS))
        }
    };
    Ok((ar(&small), ar(&medium), ar(&large)))
}

/// Join per-image annotations and their best proposals into two label maps.
///
/// Every ground-truth object is painted with a distinct label over background
/// 0, in input order (later objects overwrite earlier on overlap). The
/// prediction map paints, per object, the proposal with the highest IoU
/// against it, using the same labels and order.
pub fn join_best_proposals(
    proposals: &[BinaryMask],
    gts: &[BinaryMask],
    width: u32,
    height: u32,
) -> Result<(Vec<u32>, Vec<u32>)> {
    if gts.is_empty() {
        return Err(Error::invalid_input("need at least one ground-truth object"));
    }
    let n = width as usize * height as usize;
    let mut gt_map = vec![0u32; n];
    let mut pred_map = vec![0u32; n];
    for (k, gt) in gts.iter().enumerate() {
        if gt.width != width || gt.height != height {
            return Err(Error::dimension_mismatch("ground-truth mask size"));
        }
        let label = k as u32 + 1;
        for (i, &v) in gt.data.iter().enumerate() {
            if v != 0 {
                gt_map[i] = label;
            }
        }
        // best proposal for this object
        let mut best: Option<(usize, f64)> = None;
        for (pi, p) in proposals.iter().enumerate() {
            let iou = mask_iou(p, gt)?;
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((pi, iou));
            }
        }
        if let Some((pi, _)) = best {
            for (i, &v) in proposals[pi].data.iter().enumerate() {
                if v != 0 {
                    pred_map[i] = label;
                }
            }
        }
    }
    Ok((pred_map, gt_map))
}

fn boundary_pixels(map: &[u32], width: usize, height: usize) -> Vec<bool> {
    let mut boundary = vec![false; map.len()];
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            let l = map[p];
            if (x + 1 < width && map[p + 1] != l) || (y + 1 < height && map[p + width] != l) {
                boundary[p] = true;
            }
            if (x > 0 && map[p - 1] != l) || (y > 0 && map[p - width] != l) {
                boundary[p] = true;
            }
        }
    }
    boundary
}

/// Fraction of ground-truth boundary pixels that have a predicted boundary
/// pixel within Chebyshev distance `tol`. Defined as 1 when the ground-truth
/// map has no boundary at all.
pub fn boundary_recall(
    pred_map: &[u32],
    gt_map: &[u32],
    width: u32,
    height: u32,
    tol: u32,
) -> Result<f64> {
    let n = width as usize * height as usize;
    if pred_map.len() != n || gt_map.len() != n {
        return Err(Error::dimension_mismatch("label map size"));
    }
    let (w, h) = (width as usize, height as usize);
    let gt_boundary = boundary_pixels(gt_map, w, h);
    let pred_boundary = boundary_pixels(pred_map, w, h);

    // dilate predicted boundaries by the Chebyshev tolerance
    let t = tol as i64;
    let mut near_pred = vec![false; n];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if !pred_boundary[y as usize * w + x as usize] {
                continue;
            }
            for dy in -t..=t {
                for dx in -t..=t {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                        near_pred[ny as usize * w + nx as usize] = true;
                    }
                }
            }
        }
    }

    let total = gt_boundary.iter().filter(|&&b| b).count();
    if total == 0 {
        return Ok(1.0);
    }
    let hit = gt_boundary
        .iter()
        .zip(&near_pred)
        .filter(|(&b, &np)| b && np)
        .count();
    Ok(hit as f64 / total as f64)
}

/// Corrected undersegmentation error:
/// `(1/P) * sum over gt regions G, pred regions S intersecting G of
/// min(|S and G|, |S minus G|)`. Background counts as a region on both sides.
pub fn undersegmentation_error(
    pred_map: &[u32],
    gt_map: &[u32],
    width: u32,
    height: u32,
) -> Result<f64> {
    let n = width as usize * height as usize;
    if pred_map.len() != n || gt_map.len() != n {
        return Err(Error::dimension_mismatch("label map size"));
    }
    use std::collections::HashMap;
    let mut pred_area: HashMap<u32, u64> = HashMap::new();
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    for i in 0..n {
        *pred_area.entry(pred_map[i]).or_insert(0) += 1;
        *joint.entry((pred_map[i], gt_map[i])).or_insert(0) += 1;
    }
    let mut total = 0u64;
    for (&(s, _g), &inter) in &joint {
        let out = pred_area[&s] - inter;
        total += inter.min(out);
    }
    Ok(total as f64 / n as f64)
}

/// Aggregate evaluation results for a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Average recall per requested proposal budget.
    pub ar_at: Vec<ArAtN>,
    /// Size-stratified AR at the 100-proposal budget (absent partitions are
    /// `null`).
    pub ar_small_100: Option<f64>,
    pub ar_medium_100: Option<f64>,
    pub ar_large_100: Option<f64>,
    /// Mean boundary recall of the joined best-proposal maps.
    pub boundary_recall: f64,
    /// Mean undersegmentation error of the joined maps.
    pub undersegmentation_error: f64,
    pub per_image: Vec<ImageRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArAtN {
    pub n: usize,
    pub ar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub name: String,
    pub gt_count: usize,
    pub proposal_count: usize,
    /// Mean over this image's objects of the best proposal IoU (full list).
    pub mean_best_iou: f64,
    pub boundary_recall: f64,
    pub undersegmentation_error: f64,
}

impl EvalReport {
    pub fn ar(&self, n: usize) -> Option<f64> {
        self.ar_at.iter().find(|e| e.n == n).map(|e| e.ar)
    }

    /// CSV rendering: dataset-level numbers, then one row per image.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("metric,value\n");
        for e in &self.ar_at {
            out.push_str(&format!("ar@{},{}\n", e.n, e.ar));
        }
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        out.push_str(&format!("ar_small@100,{}\n", opt(self.ar_small_100)));
        out.push_str(&format!("ar_medium@100,{}\n", opt(self.ar_medium_100)));
        out.push_str(&format!("ar_large@100,{}\n", opt(self.ar_large_100)));
        out.push_str(&format!("boundary_recall,{}\n", self.boundary_recall));
        out.push_str(&format!(
            "undersegmentation_error,{}\n",
            self.undersegmentation_error
        ));
        out.push('\n');
        out.push_str(
            "image,gt_count,proposal_count,mean_best_iou,boundary_recall,undersegmentation_error\n",
        );
        for r in &self.per_image {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.name,
                r.gt_count,
                r.proposal_count,
                r.mean_best_iou,
                r.boundary_recall,
                r.undersegmentation_error
            ));
        }
        out
    }
}

/// Run the full evaluation protocol over one dataset.
///
/// `proposals` per image must be sorted by descending score; `names` gives
/// the per-image identifiers for the report.
pub fn evaluate_dataset(
    names: &[String],
    proposals: &[Vec<BinaryMask>],
    gts: &[Vec<BinaryMask>],
    at: &[usize],
    boundary_tol: u32,
) -> Result<EvalReport> {
    if names.len() != proposals.len() || names.len() != gts.len() {
        return Err(Error::dimension_mismatch("evaluation inputs must align"));
    }
    if gts.iter().all(|g| g.is_empty()) {
        return Err(Error::invalid_input("no ground-truth objects in the dataset"));
    }

    let mut ar_at = Vec::new();
    for &n in at {
        ar_at.push(ArAtN {
            n,
            ar: average_recall(proposals, gts, n, &AR_THRESHOLDS)?,
        });
    }
    let (ar_small_100, ar_medium_100, ar_large_100) = ar_by_size(proposals, gts, 100)?;

    let mut per_image = Vec::new();
    let mut br_sum = 0.0;
    let mut ue_sum = 0.0;
    let mut joined_images = 0usize;
    for i in 0..names.len() {
        if gts[i].is_empty() {
            continue;
        }
        let (width, height) = (gts[i][0].width, gts[i][0].height);
        let (pred_map, gt_map) = join_best_proposals(&proposals[i], &gts[i], width, height)?;
        let br = boundary_recall(&pred_map, &gt_map, width, height, boundary_tol)?;
        let ue = undersegmentation_error(&pred_map, &gt_map, width, height)?;
        let mut best_sum = 0.0;
        for gt in &gts[i] {
            let mut b = 0.0f64;
            for p in &proposals[i] {
                b = b.max(mask_iou(p, gt)?);
            }
            best_sum += b;
        }
        per_image.push(ImageRecord {
            name: names[i].clone(),
            gt_count: gts[i].len(),
            proposal_count: proposals[i].len(),
            mean_best_iou: best_sum / gts[i].len() as f64,
            boundary_recall: br,
            undersegmentation_error: ue,
        });
        br_sum += br;
        ue_sum += ue;
        joined_images += 1;
    }

    Ok(EvalReport {
        ar_at,
        ar_small_100,
        ar_medium_100,
        ar_large_100,
        boundary_recall: br_sum / joined_images as f64,
        undersegmentation_error: ue_sum / joined_images as f64,
        per_image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn rect_mask(w: u32, h: u32, r: crate::raster::Rect) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        for y in r.y..r.bottom().min(h) {
            for x in r.x..r.right().min(w) {
                m.set(x, y, true);
            }
        }
        m
    }

    #[test]
    fn iou_basic_cases() {
        let a = rect_mask(20, 20, crate::raster::Rect::new(0, 0, 10, 10));
        assert_relative_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        let b = rect_mask(20, 20, crate::raster::Rect::new(10, 10, 10, 10));
        assert_relative_eq!(mask_iou(&a, &b).unwrap(), 0.0);
        // 10x10 squares overlapping in a 5x10 strip: 50 / 150
        let c = rect_mask(20, 20, crate::raster::Rect::new(5, 0, 10, 10));
        assert_relative_eq!(mask_iou(&a, &c).unwrap(), 50.0 / 150.0);
        let empty = BinaryMask::new(20, 20);
        assert_relative_eq!(mask_iou(&empty, &empty).unwrap(), 0.0);
        let other = BinaryMask::new(10, 20);
        assert!(mask_iou(&a, &other).is_err());
    }

    #[test]
    fn ar_perfect_and_empty() {
        let gt = vec![vec![rect_mask(32, 32, crate::raster::Rect::new(4, 4, 10, 12))]];
        let ar = average_recall(&[gt[0].clone()], &gt, 10, &AR_THRESHOLDS).unwrap();
        assert_relative_eq!(ar, 1.0);
        let ar0 = average_recall(&[vec![]], &gt, 10, &AR_THRESHOLDS).unwrap();
        assert_relative_eq!(ar0, 0.0);
        assert!(average_recall(&[vec![]], &[vec![]], 10, &AR_THRESHOLDS).is_err());
    }

    #[test]
    fn ar_single_iou_072_gives_half() {
        // gt is 10x10 = 100 px; the proposal covers 90 of them plus 25
        // extra pixels: IoU = 90 / 125 = 0.72, passing thresholds 0.50-0.70
        let gt = rect_mask(40, 40, crate::raster::Rect::new(0, 0, 10, 10));
        let mut prop = rect_mask(40, 40, crate::raster::Rect::new(0, 1, 10, 9));
        for x in 0..25 {
            prop.set(x, 20, true);
        }
        let iou = mask_iou(&prop, &gt).unwrap();
        assert_relative_eq!(iou, 0.72, epsilon = 1e-12);
        let ar = average_recall(&[vec![prop]], &[vec![gt]], 10, &AR_THRESHOLDS).unwrap();
        assert_relative_eq!(ar, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ar_monotone_in_n() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut proposals = Vec::new();
        let mut gts = Vec::new();
        for _ in 0..4 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                rect_mask(
                    32,
                    32,
                    crate::raster::Rect::new(
                        rng.random_range(0..20),
                        rng.random_range(0..20),
                        rng.random_range(3..10),
                        rng.random_range(3..10),
                    ),
                )
            };
            proposals.push((0..12).map(|_| mk(&mut rng)).collect::<Vec<_>>());
            gts.push((0..3).map(|_| mk(&mut rng)).collect::<Vec<_>>());
        }
        let a10 = average_recall(&proposals, &gts, 10, &AR_THRESHOLDS).unwrap();
        let a100 = average_recall(&proposals, &gts, 100, &AR_THRESHOLDS).unwrap();
        let a1000 = average_recall(&proposals, &gts, 1000, &AR_THRESHOLDS).unwrap();
        assert!(a10 <= a100 && a100 <= a1000);
    }

    /// Independent oracle: explicit loops over thresholds, ground truths and
    /// proposals, recomputing IoUs from scratch.
    fn ar_oracle(proposals: &[Vec<BinaryMask>], gts: &[Vec<BinaryMask>], n: usize) -> f64 {
        let mut n_gt = 0usize;
        for img in gts {
            n_gt += img.len();
        }
        let mut acc = 0.0;
        for &t in AR_THRESHOLDS.iter() {
            let mut recalled = 0usize;
            for (img_props, img_gts) in proposals.iter().zip(gts) {
                for gt in img_gts {
                    let mut hit = false;
                    for p in img_props.iter().take(n) {
                        let mut inter = 0u64;
                        let mut union = 0u64;
                        for (a, b) in p.data.iter().zip(&gt.data) {
                            inter += (*a != 0 && *b != 0) as u64;
                            union += (*a != 0 || *b != 0) as u64;
                        }
                        let iou = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
                        if iou >= t {
                            hit = true;
                        }
                    }
                    recalled += hit as usize;
                }
            }
            acc += recalled as f64 / n_gt as f64;
        }
        acc / AR_THRESHOLDS.len() as f64
    }

    #[test]
    fn ar_matches_brute_force_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        for _ in 0..25 {
            let mut proposals = Vec::new();
            let mut gts = Vec::new();
            for _ in 0..3 {
                let np = rng.random_range(0..6);
                let ng = rng.random_range(1..4);
                let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                    rect_mask(
                        24,
                        24,
                        crate::raster::Rect::new(
                            rng.random_range(0..16),
                            rng.random_range(0..16),
                            rng.random_range(2..8),
                            rng.random_range(2..8),
                        ),
                    )
                };
                proposals.push((0..np).map(|_| mk(&mut rng)).collect::<Vec<_>>());
                gts.push((0..ng).map(|_| mk(&mut rng)).collect::<Vec<_>>());
            }
            for n in [1, 3, 10] {
                let fast = average_recall(&proposals, &gts, n, &AR_THRESHOLDS).unwrap();
                let slow = ar_oracle(&proposals, &gts, n);
                assert_eq!(fast, slow, "AR mismatch at n={n}");
            }
        }
    }

    #[test]
    fn size_partition_boundaries() {
        // areas 500 (small), 5000 (medium), 10000 (large)
        let g_small = rect_mask(128, 128, crate::raster::Rect::new(0, 0, 25, 20));
        let g_medium = rect_mask(128, 128, crate::raster::Rect::new(0, 28, 50, 100));
        let g_large = rect_mask(128, 128, crate::raster::Rect::new(28, 0, 100, 100));
        assert_eq!(g_small.area(), 500);
        assert_eq!(g_medium.area(), 5000);
        assert_eq!(g_large.area(), 10000);
        let gts = vec![vec![g_small.clone(), g_medium.clone(), g_large.clone()]];
        let props = vec![vec![g_small, g_medium, g_large]];
        let (s, m, l) = ar_by_size(&props, &gts, 100).unwrap();
        assert_eq!(s, Some(1.0));
        assert_eq!(m, Some(1.0));
        assert_eq!(l, Some(1.0));

        // all ground truths tiny: only the small partition is defined
        let tiny = vec![vec![rect_mask(64, 64, crate::raster::Rect::new(0, 0, 10, 10))]];
        let (s, m, l) = ar_by_size(&tiny, &tiny, 100).unwrap();
        assert_eq!(s, Some(1.0));
        assert_eq!(m, None);
        assert_eq!(l, None);
    }

    #[test]
    fn join_maps_and_overlap_ownership() {
        let gt1 = rect_mask(16, 16, crate::raster::Rect::new(0, 0, 8, 8));
        let gt2 = rect_mask(16, 16, crate::raster::Rect::new(4, 4, 8, 8));
        let (pred, gt) = join_best_proposals(
            &[gt1.clone(), gt2.clone()],
            &[gt1.clone(), gt2.clone()],
            16,
            16,
        )
        .unwrap();
        assert_eq!(pred, gt);
        // overlap owned by the later object
        assert_eq!(gt[5 * 16 + 5], 2);
        assert_eq!(gt[16 + 1], 1);
        assert_eq!(gt[15 * 16 + 15], 0);
    }

    #[test]
    fn boundary_recall_cases() {
        let gt1 = rect_mask(32, 32, crate::raster::Rect::new(8, 8, 10, 10));
        let (pred, gt) = join_best_proposals(std::slice::from_ref(&gt1), std::slice::from_ref(&gt1), 32, 32).unwrap();
        assert_relative_eq!(boundary_recall(&pred, &gt, 32, 32, 2).unwrap(), 1.0);

        // all-background prediction has no boundary at all
        let empty = vec![0u32; 32 * 32];
        assert_relative_eq!(boundary_recall(&empty, &gt, 32, 32, 2).unwrap(), 0.0);

        // shifted by one pixel, within tolerance two
        let shifted = rect_mask(32, 32, crate::raster::Rect::new(9, 9, 10, 10));
        let (pred, gt) = join_best_proposals(&[shifted], &[gt1], 32, 32).unwrap();
        assert_relative_eq!(boundary_recall(&pred, &gt, 32, 32, 2).unwrap(), 1.0);

        // gt without boundary defines recall 1
        let flat = vec![0u32; 16];
        assert_relative_eq!(boundary_recall(&flat, &flat, 4, 4, 2).unwrap(), 1.0);
    }

    #[test]
    fn ue_cases() {
        let gt1 = rect_mask(10, 10, crate::raster::Rect::new(0, 0, 5, 10));
        let (pred, gt) = join_best_proposals(std::slice::from_ref(&gt1), std::slice::from_ref(&gt1), 10, 10).unwrap();
        assert_relative_eq!(undersegmentation_error(&pred, &gt, 10, 10).unwrap(), 0.0);

        // gt: cols 0-2 region 1 (30 px), cols 3-9 region 2 (70 px);
        // pred region 7 covers cols 0-3 (40 px): 30 px in region 1,
        // 10 px in region 2 -> min(30,10) + min(10,30) = 20
        let mut gt_map = vec![0u32; 100];
        let mut pred_map = vec![0u32; 100];
        for i in 0..100 {
            let x = i % 10;
            gt_map[i] = if x < 3 { 1 } else { 2 };
            if x < 4 {
                pred_map[i] = 7;
            }
        }
        // the remaining background region lies entirely inside gt region 2
        let ue = undersegmentation_error(&pred_map, &gt_map, 10, 10).unwrap();
        assert_relative_eq!(ue, 20.0 / 100.0);

        // single pred region covering everything:
        // sum over gt regions of min(|G|, P - |G|) = min(30,70) + min(70,30)
        let all = vec![3u32; 100];
        let ue = undersegmentation_error(&all, &gt_map, 10, 10).unwrap();
        assert_relative_eq!(ue, 60.0 / 100.0);
    }

    #[test]
    fn ue_and_br_invariant_under_relabeling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let mut gt_map = vec![0u32; 18 * 18];
        let mut pred_map = vec![0u32; 18 * 18];
        for i in 0..gt_map.len() {
            gt_map[i] = rng.random_range(0..4);
            pred_map[i] = rng.random_range(0..4);
        }
        let relabel = |m: &[u32]| -> Vec<u32> { m.iter().map(|&l| l * 7 + 3).collect() };
        let ue1 = undersegmentation_error(&pred_map, &gt_map, 18, 18).unwrap();
        let ue2 = undersegmentation_error(&relabel(&pred_map), &relabel(&gt_map), 18, 18).unwrap();
        assert_relative_eq!(ue1, ue2);
        let br1 = boundary_recall(&pred_map, &gt_map, 18, 18, 2).unwrap();
        let br2 = boundary_recall(&relabel(&pred_map), &relabel(&gt_map), 18, 18, 2).unwrap();
        assert_relative_eq!(br1, br2);
    }

    #[test]
    fn ue_zero_iff_refinement() {
        // prediction that splits each gt region into strips still refines it
        let mut gt_map = vec![0u32; 64];
        let mut pred_map = vec![0u32; 64];
        for i in 0..64 {
            let x = i % 8;
            gt_map[i] = if x < 4 { 1 } else { 2 };
            pred_map[i] = x as u32 / 2 + 1;
        }
        assert_relative_eq!(undersegmentation_error(&pred_map, &gt_map, 8, 8).unwrap(), 0.0);
        // a region crossing the gt boundary breaks refinement
        for i in 0..64 {
            let x = i % 8;
            pred_map[i] = if !(3..6).contains(&x) { 1 } else { 2 };
        }
        assert!(undersegmentation_error(&pred_map, &gt_map, 8, 8).unwrap() > 0.0);
    }

    #[test]
    fn evaluate_dataset_smoke() {
        let gt = rect_mask(40, 40, crate::raster::Rect::new(5, 5, 12, 12));
        let names = vec!["a".to_string()];
        let report = evaluate_dataset(
            &names,
            &[vec![gt.clone()]],
            &[vec![gt.clone()]],
            &[10, 100],
            2,
        )
        .unwrap();
        assert_relative_eq!(report.ar(10).unwrap(), 1.0);
        assert_relative_eq!(report.boundary_recall, 1.0);
        assert_relative_eq!(report.undersegmentation_error, 0.0);
        assert!(report.to_csv().contains("ar@10,1"));
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"ar_at\""));
    }
}
