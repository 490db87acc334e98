//! From per-superpixel probabilities to final full-resolution proposals:
//! superpixel-level bilateral filtering, mask rendering, binary morphology
//! and near-duplicate suppression, plus the end-to-end per-image pipeline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::TrainedModel;
use crate::error::{Error, Result};
use crate::featurizer::{scale_feature_map, FeatureStackConfig};
use crate::mask::{BinaryMask, RleMask};
use crate::pooling::{pool_mask_prior, pool_mean_forward, FeatureTable};
use crate::raster::RgbRaster;
use crate::sampling::{assemble_batch, crop_segmentation, CoarseProposal, MASK_SIDE};
use crate::segmentation::{
    adjacency, region_stats, segment_to_target_count, AdjacencyGraph, RegionStats, ScaleConfig,
    SegMethod, SuperpixelSegmentation,
};

/// Post-processing configuration. Every stage can be toggled individually;
/// with all stages off the pipeline reduces to plain mask rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostConfig {
    pub bilateral: bool,
    /// Color sigma in CIELAB units.
    pub sigma_color: f64,
    /// Spatial sigma in pixels; `None` uses half the mean superpixel
    /// diameter of the scale's segmentation.
    pub sigma_spatial: Option<f64>,
    pub morphology: bool,
    pub morph_radius: u32,
    pub nms: bool,
    pub nms_iou: f64,
    /// Probability threshold for rendering.
    pub threshold: f64,
}

impl Default for PostConfig {
    fn default() -> Self {
        PostConfig {
            bilateral: true,
            sigma_color: 10.0,
            sigma_spatial: None,
            morphology: true,
            morph_radius: 1,
            nms: true,
            nms_iou: 0.95,
            threshold: 0.5,
        }
    }
}

impl PostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_color <= 0.0 || self.sigma_spatial.is_some_and(|s| s <= 0.0) {
            return Err(Error::Config("bilateral sigmas must be > 0".into()));
        }
        if !(0.0 < self.nms_iou && self.nms_iou <= 1.0) {
            return Err(Error::Config("nms iou must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// A refined proposal: full-resolution binary mask (run-length encoded), the
/// objectness score carried over from the coarse proposal, and the index of
/// that proposal in the input list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedProposal {
    pub rle: RleMask,
    pub score: f64,
    pub source_id: u32,
}

/// Smooth per-superpixel probabilities over the region adjacency graph:
/// `p'_i = sum_j w_ij p_j / sum_j w_ij` over `j` in the 2-hop neighborhood of
/// `i` (including `i`), with Gaussian color and centroid-distance weights.
pub fn bilateral_filter_spx(
    probs: &[f64],
    stats: &RegionStats,
    graph: &AdjacencyGraph,
    sigma_color: f64,
    sigma_spatial: f64,
) -> Result<Vec<f64>> {
    if probs.len() != stats.len() || probs.len() != graph.len() {
        return Err(Error::dimension_mismatch(
            "probabilities, stats and graph must align",
        ));
    }
    let mut out = vec![0.0; probs.len()];
    let mut stamp = vec![u32::MAX; probs.len()];
    let mut hood: Vec<u32> = Vec::new();
    for i in 0..probs.len() {
        hood.clear();
        let mark = i as u32;
        stamp[i] = mark;
        hood.push(i as u32);
        for &j in &graph.neighbors[i] {
            if stamp[j as usize] != mark {
                stamp[j as usize] = mark;
                hood.push(j);
            }
            for &k in &graph.neighbors[j as usize] {
                if stamp[k as usize] != mark {
                    stamp[k as usize] = mark;
                    hood.push(k);
                }
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        let li = stats.mean_lab[i];
        let ci = stats.centroid[i];
        for &j in &hood {
            let j = j as usize;
            let lj = stats.mean_lab[j];
            let cj = stats.centroid[j];
            let dc = (li[0] - lj[0]).powi(2) + (li[1] - lj[1]).powi(2) + (li[2] - lj[2]).powi(2);
            let ds = (ci[0] - cj[0]).powi(2) + (ci[1] - cj[1]).powi(2);
            let w = (-dc / (2.0 * sigma_color * sigma_color)).exp()
                * (-ds / (2.0 * sigma_spatial * sigma_spatial)).exp();
            num += w * probs[j];
            den += w;
        }
        out[i] = num / den;
    }
    Ok(out)
}

/// Paint the sampled superpixels whose probability clears `threshold`;
/// everything not sampled by the window stays background.
pub fn render_mask(
    seg: &SuperpixelSegmentation,
    sampled_ids: &[u32],
    probs: &[f64],
    threshold: f64,
) -> Result<BinaryMask> {
    if sampled_ids.len() != probs.len() {
        return Err(Error::dimension_mismatch("sampled ids vs probabilities"));
    }
    let mut keep = vec![false; seg.count as usize];
    for (&id, &p) in sampled_ids.iter().zip(probs) {
        if p >= threshold {
            keep[id as usize] = true;
        }
    }
    let mut mask = BinaryMask::new(seg.width, seg.height);
    for (i, &label) in seg.labels.iter().enumerate() {
        mask.data[i] = keep[label as usize] as u8;
    }
    Ok(mask)
}

fn max_filter_rows(mask: &BinaryMask, radius: u32, dilate: bool) -> BinaryMask {
    let r = radius as i64;
    let mut out = BinaryMask::new(mask.width, mask.height);
    for y in 0..mask.height as i64 {
        for x in 0..mask.width as i64 {
            let mut acc = !dilate;
            for dx in -r..=r {
                let sx = x + dx;
                let v = if sx < 0 || sx >= mask.width as i64 {
                    false // outside the image counts as background
                } else {
                    mask.get(sx as u32, y as u32)
                };
                if dilate {
                    acc |= v;
                } else {
                    acc &= v;
                }
            }
            out.set(x as u32, y as u32, acc);
        }
    }
    out
}

fn max_filter_cols(mask: &BinaryMask, radius: u32, dilate: bool) -> BinaryMask {
    let r = radius as i64;
    let mut out = BinaryMask::new(mask.width, mask.height);
    for y in 0..mask.height as i64 {
        for x in 0..mask.width as i64 {
            let mut acc = !dilate;
            for dy in -r..=r {
                let sy = y + dy;
                let v = if sy < 0 || sy >= mask.height as i64 {
                    false
                } else {
                    mask.get(x as u32, sy as u32)
                };
                if dilate {
                    acc |= v;
                } else {
                    acc &= v;
                }
            }
            out.set(x as u32, y as u32, acc);
        }
    }
    out
}

/// Dilation with a square element of side `2 radius + 1`.
pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    max_filter_cols(&max_filter_rows(mask, radius, true), radius, true)
}

/// Erosion with a square element of side `2 radius + 1`.
pub fn erode(mask: &BinaryMask, radius: u32) -> BinaryMask {
    max_filter_cols(&max_filter_rows(mask, radius, false), radius, false)
}

/// Closing (fills small holes) followed by opening (removes thin
/// protuberances), square element of side `2 radius + 1`.
pub fn morph_open_close(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let closed = erode(&dilate(mask, radius), radius);
    dilate(&erode(&closed, radius), radius)
}

/// Score-ordered greedy duplicate removal: keep a proposal iff its mask IoU
/// with every kept proposal stays below `iou_thresh`. Ties in score resolve
/// toward the lower source id. The output stays sorted by descending score.
pub fn nms_near_duplicates(
    proposals: Vec<RefinedProposal>,
    iou_thresh: f64,
) -> Result<Vec<RefinedProposal>> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| {
        proposals[b]
            .score
            .partial_cmp(&proposals[a].score)
            .expect("finite scores")
            .then(proposals[a].source_id.cmp(&proposals[b].source_id))
    });
    let decoded: Vec<BinaryMask> = proposals
        .iter()
        .map(|p| p.rle.decode())
        .collect::<Result<_>>()?;
    let mut kept_idx: Vec<usize> = Vec::new();
    for &i in &order {
        let mut duplicate = false;
        for &k in &kept_idx {
            if crate::metrics::mask_iou(&decoded[i], &decoded[k])? >= iou_thresh {
                duplicate = true;
                break;
            }
        }
        if !duplicate {
            kept_idx.push(i);
        }
    }
    Ok(kept_idx.into_iter().map(|i| proposals[i].clone()).collect())
}

/// Everything the pipeline derives from one scale of one image.
pub struct ScaleArtifacts {
    pub seg: SuperpixelSegmentation,
    pub stats: RegionStats,
    pub graph: AdjacencyGraph,
    /// Raw pooled (unprojected) per-superpixel features.
    pub raw_table: FeatureTable,
}

/// Segment, featurize and pool once per required scale.
pub fn build_scale_artifacts(
    image: &RgbRaster,
    scales: &[u32],
    scale_cfg: &ScaleConfig,
    method: SegMethod,
    feature_cfg: &FeatureStackConfig,
) -> Result<BTreeMap<u32, ScaleArtifacts>> {
    scale_cfg.validate()?;
    let mut out = BTreeMap::new();
    for &factor in scales {
        let level = scale_cfg
            .level(factor)
            .ok_or_else(|| Error::Config(format!("no scale level for factor {factor}")))?;
        let target = level
            .target_superpixels
            .min(image.pixel_count() as u32)
            .max(1);
        let seg = segment_to_target_count(image, method, target)?;
        let stats = region_stats(&seg, image)?;
        let graph = adjacency(&seg);
        let map = scale_feature_map(image, ScaleConfig::image_downsample(factor), feature_cfg)?;
        let raw_table = pool_mean_forward(&map, &seg)?;
        out.insert(factor, ScaleArtifacts { seg, stats, graph, raw_table });
    }
    Ok(out)
}

/// Refine all coarse proposals of one image into pixel-precise proposals.
///
/// Per scale present among the proposals: count-targeted segmentation, the
/// raw feature stack, superpixel pooling and the learned projection. Per
/// proposal: mask prior pooling, batching, classification, bilateral
/// filtering, rendering and morphology. One suppression pass runs over all
/// windows; the output is sorted by descending score.
pub fn refine_image(
    image: &RgbRaster,
    proposals: &[CoarseProposal],
    model: &TrainedModel,
    post: &PostConfig,
    scale_cfg: &ScaleConfig,
    method: SegMethod,
) -> Result<Vec<RefinedProposal>> {
    post.validate()?;
    if proposals.is_empty() {
        return Ok(Vec::new());
    }
    for p in proposals {
        p.validate(image.width, image.height)?;
    }

    let mut scales: Vec<u32> = proposals.iter().map(|p| p.scale_id).collect();
    scales.sort_unstable();
    scales.dedup();
    let artifacts = build_scale_artifacts(image, &scales, scale_cfg, method, &model.feature_cfg)?;

    let mut projected = BTreeMap::new();
    for (&factor, art) in &artifacts {
        projected.insert(factor, model.project(&art.raw_table)?);
    }

    // sample and pool the prior per proposal, then classify one joint batch
    let mut crops = Vec::with_capacity(proposals.len());
    let mut priors = Vec::with_capacity(proposals.len());
    for p in proposals {
        let art = &artifacts[&p.scale_id];
        let window = p.window.clip(image.width, image.height);
        let crop = crop_segmentation(&art.seg, &window)?;
        let prior = pool_mask_prior(&p.mask40, MASK_SIDE, &window, &art.seg, &crop.ids)?;
        crops.push(crop);
        priors.push(prior);
    }
    let batch = assemble_batch(proposals, &crops, &priors, &projected, None)?;
    let probs = model.classify(&batch)?;

    // split classifier outputs back out by proposal (batch order is proposal
    // index ascending, then superpixel id ascending)
    let mut refined = Vec::with_capacity(proposals.len());
    let mut row = 0usize;
    for (p_idx, proposal) in proposals.iter().enumerate() {
        let art = &artifacts[&proposal.scale_id];
        let crop = &crops[p_idx];
        let window_probs = &probs[row..row + crop.ids.len()];
        row += crop.ids.len();

        let filtered: Vec<f64> = if post.bilateral {
            let mut full = vec![0.0; art.seg.count as usize];
            for (&id, &p) in crop.ids.iter().zip(window_probs) {
                full[id as usize] = p;
            }
            let sigma_spatial = post
                .sigma_spatial
                .unwrap_or_else(|| (0.5 * art.stats.mean_diameter()).max(1e-6));
            let smoothed =
                bilateral_filter_spx(&full, &art.stats, &art.graph, post.sigma_color, sigma_spatial)?;
            crop.ids.iter().map(|&id| smoothed[id as usize]).collect()
        } else {
            window_probs.to_vec()
        };

        let mut mask = render_mask(&art.seg, &crop.ids, &filtered, post.threshold)?;
        if post.morphology {
            mask = morph_open_close(&mask, post.morph_radius);
        }
        refined.push(RefinedProposal {
            rle: RleMask::encode(&mask),
            score: proposal.objectness,
            source_id: p_idx as u32,
        });
    }

    let mut result = if post.nms {
        nms_near_duplicates(refined, post.nms_iou)?
    } else {
        refined
    };
    result.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite scores")
            .then(a.source_id.cmp(&b.source_id))
    });
    Ok(result)
}
