//! Seeded synthetic data: anti-aliased shapes over textured backgrounds, with
//! pixel-precise annotations and degraded coarse proposals standing in for an
//! upstream proposal generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::raster::{gaussian_blur_plane, Rect, RgbRaster};
use crate::sampling::{upsampled_coarse_mask, CoarseProposal, MASK_SIDE};

use super::GtObject;

/// Generator parameters. Everything is driven by `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    pub images: u32,
    pub shapes_per_image: u32,
    /// Std of the per-pixel background noise.
    pub texture_noise: f64,
    /// Gaussian blur applied to the 40x40 coarse mask (0 disables).
    pub blur_sigma: f64,
    /// Max window shift in pixels applied before cropping the coarse mask
    /// (0 disables).
    pub jitter_px: u32,
    pub min_shape_radius: u32,
    pub max_shape_radius: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 64,
            height: 64,
            images: 20,
            shapes_per_image: 2,
            texture_noise: 0.03,
            blur_sigma: 2.0,
            jitter_px: 4,
            min_shape_radius: 8,
            max_shape_radius: 16,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 40 || self.height < 40 {
            return Err(Error::Config("synthetic images must be at least 40x40".into()));
        }
        if self.shapes_per_image == 0 || self.images == 0 {
            return Err(Error::Config("need at least one image and one shape".into()));
        }
        if self.min_shape_radius < 3 || self.max_shape_radius < self.min_shape_radius {
            return Err(Error::Config("invalid shape radius range".into()));
        }
        if 2 * self.max_shape_radius >= self.width.min(self.height) {
            return Err(Error::Config("max shape radius too large for the image".into()));
        }
        Ok(())
    }
}

/// One generated image with its annotations and coarse proposals
/// (proposal `k` corresponds to annotation `k`).
#[derive(Debug, Clone)]
pub struct SynthItem {
    pub name: String,
    pub image: RgbRaster,
    pub gts: Vec<GtObject>,
    pub proposals: Vec<CoarseProposal>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub items: Vec<SynthItem>,
}

enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, rot: f64 },
    Polygon { points: Vec<(f64, f64)> },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Ellipse { cx, cy, rx, ry, rot } => {
                let dx = x - cx;
                let dy = y - cy;
                let (c, s) = (rot.cos(), rot.sin());
                let u = (c * dx + s * dy) / rx;
                let v = (-s * dx + c * dy) / ry;
                u * u + v * v <= 1.0
            }
            Shape::Polygon { points } => {
                // convex, counter-clockwise: inside iff left of every edge
                let n = points.len();
                for i in 0..n {
                    let (x0, y0) = points[i];
                    let (x1, y1) = points[(i + 1) % n];
                    if (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) < 0.0 {
                        return false;
                    }
                }
                true
            }
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        match self {
            Shape::Ellipse { cx, cy, rx, ry, .. } => {
                let r = rx.max(*ry);
                (cx - r, cy - r, cx + r, cy + r)
            }
            Shape::Polygon { points } => {
                let mut b = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
                for &(x, y) in points {
                    b.0 = b.0.min(x);
                    b.1 = b.1.min(y);
                    b.2 = b.2.max(x);
                    b.3 = b.3.max(y);
                }
                b
            }
        }
    }
}

fn sample_shape(rng: &mut ChaCha8Rng, cfg: &SynthConfig, shrink: f64) -> Shape {
    let r_min = cfg.min_shape_radius as f64;
    let r_max = (cfg.max_shape_radius as f64 * (1.0 - shrink)).max(r_min);
    // radius first so small shapes can sit near the borders
    let r = rng.random_range(r_min..=r_max);
    let margin = r + 2.0;
    let cx = rng.random_range(margin..cfg.width as f64 - margin);
    let cy = rng.random_range(margin..cfg.height as f64 - margin);
    if rng.random_bool(0.5) {
        Shape::Ellipse {
            cx,
            cy,
            rx: r,
            ry: rng.random_range(r_min..=r),
            rot: rng.random_range(0.0..std::f64::consts::PI),
        }
    } else {
        // convex polygon: points on a jittered circle, counter-clockwise
        let k = rng.random_range(3..=6);
        let points = (0..k)
            .map(|i| {
                let angle = (i as f64 + rng.random_range(0.0..0.6)) / k as f64
                    * std::f64::consts::TAU;
                let rr = r * rng.random_range(0.75..1.0);
                (cx + rr * angle.cos(), cy + rr * angle.sin())
            })
            .collect();
        Shape::Polygon { points }
    }
}

/// Anti-aliased coverage of a shape at one pixel via 4x4 supersampling.
fn coverage(shape: &Shape, x: u32, y: u32) -> f64 {
    let mut hit = 0;
    for sy in 0..4 {
        for sx in 0..4 {
            let px = x as f64 + (sx as f64 + 0.5) / 4.0;
            let py = y as f64 + (sy as f64 + 0.5) / 4.0;
            if shape.contains(px, py) {
                hit += 1;
            }
        }
    }
    hit as f64 / 16.0
}

/// Generate a deterministic dataset.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut items = Vec::with_capacity(cfg.images as usize);
    for image_idx in 0..cfg.images {
        items.push(generate_item(&mut rng, cfg, image_idx)?);
    }
    Ok(SynthDataset { items })
}

fn generate_item(rng: &mut ChaCha8Rng, cfg: &SynthConfig, image_idx: u32) -> Result<SynthItem> {
    let (w, h) = (cfg.width, cfg.height);

    // textured background: base color + linear gradient + pixel noise
    let base = [
        rng.random_range(0.25..0.75),
        rng.random_range(0.25..0.75),
        rng.random_range(0.25..0.75),
    ];
    let grad = [
        rng.random_range(-0.15..0.15),
        rng.random_range(-0.15..0.15),
        rng.random_range(-0.15..0.15),
    ];
    let mut image = RgbRaster::new(w, h)?;
    for y in 0..h {
        for x in 0..w {
            let t = (x as f64 / w as f64 + y as f64 / h as f64) / 2.0;
            let mut px = [0.0; 3];
            for c in 0..3 {
                let noise = rng.random_range(-1.0..1.0) * cfg.texture_noise;
                px[c] = (base[c] + grad[c] * t + noise).clamp(0.0, 1.0);
            }
            image.set(x, y, px);
        }
    }
    let base_luma = 0.299 * base[0] + 0.587 * base[1] + 0.114 * base[2];

    // place non-overlapping shapes; restart the whole image with smaller
    // shapes when a greedy early placement leaves no room
    let mut shapes: Vec<(Shape, [f64; 3])> = Vec::new();
    'placement: for restart in 0..12 {
        shapes.clear();
        let mut occupied: Vec<Rect> = Vec::new();
        let restart_shrink = restart as f64 / 12.0;
        'shapes: for _ in 0..cfg.shapes_per_image {
            for attempt in 0..300 {
                // give up on large shapes as attempts accumulate
                let shrink = restart_shrink.max(attempt as f64 / 300.0);
                let shape = sample_shape(rng, cfg, shrink);
                let (x0, y0, x1, y1) = shape.bounds();
                let bbox = Rect::new(
                    x0.floor().max(0.0) as u32,
                    y0.floor().max(0.0) as u32,
                    (x1.ceil() - x0.floor()).max(1.0) as u32,
                    (y1.ceil() - y0.floor()).max(1.0) as u32,
                );
                let padded = bbox.dilate(0.15, w, h);
                if occupied.iter().any(|r| rects_overlap(r, &padded)) {
                    continue;
                }
                // shape color with clear luminance contrast to the background
                let color = loop {
                    let c = [
                        rng.random_range(0.0..1.0),
                        rng.random_range(0.0..1.0),
                        rng.random_range(0.0..1.0),
                    ];
                    let luma = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
                    if (luma - base_luma).abs() >= 0.25 {
                        break c;
                    }
                };
                occupied.push(padded);
                shapes.push((shape, color));
                continue 'shapes;
            }
            continue 'placement; // this shape never fit; retry the image
        }
        break 'placement;
    }
    if shapes.len() != cfg.shapes_per_image as usize {
        return Err(Error::Config(
            "could not place all shapes; reduce count or radius".into(),
        ));
    }

    // render with anti-aliasing and build pixel-precise annotations
    let mut gts = Vec::with_capacity(shapes.len());
    for (gt_idx, (shape, color)) in shapes.iter().enumerate() {
        let (x0, y0, x1, y1) = shape.bounds();
        let mut mask = BinaryMask::new(w, h);
        for y in y0.floor().max(0.0) as u32..(y1.ceil() as u32 + 1).min(h) {
            for x in x0.floor().max(0.0) as u32..(x1.ceil() as u32 + 1).min(w) {
                let alpha = coverage(shape, x, y);
                if alpha > 0.0 {
                    let bg = image.get(x, y);
                    image.set(
                        x,
                        y,
                        [
                            alpha * color[0] + (1.0 - alpha) * bg[0],
                            alpha * color[1] + (1.0 - alpha) * bg[1],
                            alpha * color[2] + (1.0 - alpha) * bg[2],
                        ],
                    );
                    if alpha >= 0.5 {
                        mask.set(x, y, true);
                    }
                }
            }
        }
        gts.push(GtObject::new(gt_idx as u32, mask)?);
    }

    // one degraded coarse proposal per annotation
    let mut proposals = Vec::with_capacity(gts.len());
    for gt in &gts {
        proposals.push(degrade_to_proposal(rng, cfg, gt, w, h)?);
    }

    Ok(SynthItem {
        name: format!("img_{image_idx:04}"),
        image,
        gts,
        proposals,
    })
}

fn rects_overlap(a: &Rect, b: &Rect) -> bool {
    a.x < b.right() && b.x < a.right() && a.y < b.bottom() && b.y < a.bottom()
}

/// Build the coarse proposal for an annotation: dilate its box by 20%, crop
/// and downsample the mask onto the 40x40 grid, blur it, and finally shift
/// the window by the jitter. Because the mask stays with the shifted window,
/// the jitter misplaces it relative to the annotation, imitating upstream
/// localization error; the blur imitates low-resolution mask prediction.
fn degrade_to_proposal(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    gt: &GtObject,
    w: u32,
    h: u32,
) -> Result<CoarseProposal> {
    let bbox = gt.mask.bbox().ok_or_else(|| Error::invalid_input("empty annotation"))?;
    let window = bbox.dilate(0.2, w, h);

    // area-average downsample of the cropped annotation onto the 40x40 grid
    let mut mask40 = vec![0.0f64; MASK_SIDE * MASK_SIDE];
    for gy in 0..MASK_SIDE {
        let y0 = window.y as f64 + gy as f64 * window.height as f64 / MASK_SIDE as f64;
        let y1 = window.y as f64 + (gy + 1) as f64 * window.height as f64 / MASK_SIDE as f64;
        for gx in 0..MASK_SIDE {
            let x0 = window.x as f64 + gx as f64 * window.width as f64 / MASK_SIDE as f64;
            let x1 = window.x as f64 + (gx + 1) as f64 * window.width as f64 / MASK_SIDE as f64;
            let mut acc = 0.0;
            let mut weight = 0.0;
            for py in y0.floor() as u32..(y1.ceil() as u32).min(h) {
                for px in x0.floor() as u32..(x1.ceil() as u32).min(w) {
                    let ox = overlap_1d(px as f64, px as f64 + 1.0, x0, x1);
                    let oy = overlap_1d(py as f64, py as f64 + 1.0, y0, y1);
                    let ww = ox * oy;
                    if ww > 0.0 {
                        acc += ww * gt.mask.get(px, py) as u8 as f64;
                        weight += ww;
                    }
                }
            }
            mask40[gy * MASK_SIDE + gx] = if weight > 0.0 { acc / weight } else { 0.0 };
        }
    }

    if cfg.blur_sigma > 0.0 {
        mask40 = gaussian_blur_plane(&mask40, MASK_SIDE, MASK_SIDE, cfg.blur_sigma);
        for v in mask40.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }

    let jittered = if cfg.jitter_px > 0 {
        let j = cfg.jitter_px as i64;
        let dx = rng.random_range(-j..=j);
        let dy = rng.random_range(-j..=j);
        let x0 = (window.x as i64 + dx).clamp(0, w as i64 - window.width as i64) as u32;
        let y0 = (window.y as i64 + dy).clamp(0, h as i64 - window.height as i64) as u32;
        Rect::new(x0, y0, window.width, window.height)
    } else {
        window
    };

    let mut proposal = CoarseProposal {
        window: jittered,
        scale_id: 8, // patched below once the window is final
        mask40,
        objectness: 0.0,
    };
    proposal.scale_id = crate::segmentation::ScaleConfig::default().assign_window(&proposal.window);

    // objectness: quality of the degraded mask against the annotation
    let coarse = upsampled_coarse_mask(&proposal, w, h, 0.5)?;
    proposal.objectness = crate::metrics::mask_iou(&coarse, &gt.mask)?;
    Ok(proposal)
}

fn overlap_1d(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}
