//! Superpixel oversegmentation: the FH graph-merging segmenter (primary), a
//! SLIC segmenter (for comparisons), approximate count targeting, per-region
//! statistics and the region adjacency graph.

mod fh;
mod slic;

pub use fh::{fh_segment, FhGraph};
pub use slic::slic_segment;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{rgb_to_lab, Rect, RgbRaster};

/// Dense per-pixel label map partitioning an image into contiguous regions.
///
/// Labels are compact: every id in `[0, count)` occurs at least once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelSegmentation {
    pub width: u32,
    pub height: u32,
    /// Row-major per-pixel superpixel id.
    pub labels: Vec<u32>,
    pub count: u32,
}

impl SuperpixelSegmentation {
    /// Wrap a label buffer that is already compacted to `[0, max+1)`.
    pub(crate) fn from_compacted(width: u32, height: u32, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid_input("zero-sized segmentation"));
        }
        if labels.len() != width as usize * height as usize {
            return Err(Error::dimension_mismatch("label buffer size"));
        }
        let count = labels.iter().copied().max().unwrap_or(0) + 1;
        Ok(SuperpixelSegmentation { width, height, labels, count })
    }

    #[inline]
    pub fn label_at(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn pixel_count(&self) -> usize {
        self.labels.len()
    }

    /// Per-superpixel pixel counts.
    pub fn areas(&self) -> Vec<u32> {
        let mut areas = vec![0u32; self.count as usize];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }

    /// Cheap fingerprint used to tag derived tables with their source.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.width.hash(&mut h);
        self.height.hash(&mut h);
        self.count.hash(&mut h);
        self.labels.hash(&mut h);
        h.finish()
    }

    /// Check the partition invariants: all ids in range with no empty bins,
    /// and every superpixel a single 8-connected region.
    pub fn validate(&self) -> Result<()> {
        let areas = self.areas();
        if areas.contains(&0) {
            return Err(Error::Format("empty label bin".into()));
        }
        let (w, h) = (self.width as usize, self.height as usize);
        let mut seen = vec![false; self.count as usize];
        let mut visited = vec![false; self.labels.len()];
        let mut stack = Vec::new();
        for start in 0..self.labels.len() {
            if visited[start] {
                continue;
            }
            let label = self.labels[start] as usize;
            if seen[label] {
                return Err(Error::Format(format!("superpixel {label} is disconnected")));
            }
            seen[label] = true;
            visited[start] = true;
            stack.push(start);
            while let Some(p) = stack.pop() {
                let (x, y) = ((p % w) as i64, (p / w) as i64);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let q = ny as usize * w + nx as usize;
                        if !visited[q] && self.labels[q] as usize == label {
                            visited[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Write the label map as 16-bit grayscale PNG plus a JSON sidecar header.
    /// Fails when the id range exceeds 16 bits.
    pub fn save(&self, png_path: &Path, header: &SegmentationHeader) -> Result<()> {
        if self.count > u16::MAX as u32 {
            return Err(Error::invalid_input(format!(
                "superpixel count {} exceeds 16-bit label range",
                self.count
            )));
        }
        let mut img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                img.put_pixel(x, y, image::Luma([self.label_at(x, y) as u16]));
            }
        }
        img.save(png_path)?;
        let json = serde_json::to_string_pretty(header)?;
        std::fs::write(header_path(png_path), json)?;
        Ok(())
    }

    /// Load a label map written by [`SuperpixelSegmentation::save`].
    pub fn load(png_path: &Path) -> Result<(Self, SegmentationHeader)> {
        let header: SegmentationHeader =
            serde_json::from_str(&std::fs::read_to_string(header_path(png_path))?)?;
        let img = image::open(png_path)?.into_luma16();
        let (width, height) = img.dimensions();
        let labels: Vec<u32> = img.pixels().map(|p| p.0[0] as u32).collect();
        let seg = SuperpixelSegmentation::from_compacted(width, height, labels)?;
        if seg.width != header.width || seg.height != header.height || seg.count != header.count {
            return Err(Error::Format("label map does not match its header".into()));
        }
        Ok((seg, header))
    }
}

fn header_path(png_path: &Path) -> std::path::PathBuf {
    png_path.with_extension("json")
}

/// Sidecar metadata stored next to a label-map PNG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationHeader {
    pub width: u32,
    pub height: u32,
    pub count: u32,
    pub method: String,
    pub params: serde_json::Value,
}

/// Per-superpixel color/location statistics.
#[derive(Debug, Clone)]
pub struct RegionStats {
    /// CIELAB mean per superpixel.
    pub mean_lab: Vec<[f64; 3]>,
    /// Centroid in pixel-center coordinates (x, y).
    pub centroid: Vec<[f64; 2]>,
    pub area: Vec<u32>,
    pub bbox: Vec<Rect>,
}

impl RegionStats {
    pub fn len(&self) -> usize {
        self.area.len()
    }

    pub fn is_empty(&self) -> bool {
        self.area.is_empty()
    }

    /// Mean superpixel diameter estimate, `mean(sqrt(area))`.
    pub fn mean_diameter(&self) -> f64 {
        if self.area.is_empty() {
            return 0.0;
        }
        self.area.iter().map(|&a| (a as f64).sqrt()).sum::<f64>() / self.area.len() as f64
    }
}

/// Compute [`RegionStats`] for a segmentation of `image`.
pub fn region_stats(seg: &SuperpixelSegmentation, image: &RgbRaster) -> Result<RegionStats> {
    if seg.width != image.width || seg.height != image.height {
        return Err(Error::dimension_mismatch(format!(
            "segmentation {}x{} vs image {}x{}",
            seg.width, seg.height, image.width, image.height
        )));
    }
    let n = seg.count as usize;
    let mut lab_sum = vec![[0.0f64; 3]; n];
    let mut xy_sum = vec![[0.0f64; 2]; n];
    let mut area = vec![0u32; n];
    let mut min_x = vec![u32::MAX; n];
    let mut min_y = vec![u32::MAX; n];
    let mut max_x = vec![0u32; n];
    let mut max_y = vec![0u32; n];

    for y in 0..seg.height {
        for x in 0..seg.width {
            let id = seg.label_at(x, y) as usize;
            let lab = rgb_to_lab(image.get(x, y));
            for c in 0..3 {
                lab_sum[id][c] += lab[c];
            }
            xy_sum[id][0] += x as f64;
            xy_sum[id][1] += y as f64;
            area[id] += 1;
            min_x[id] = min_x[id].min(x);
            min_y[id] = min_y[id].min(y);
            max_x[id] = max_x[id].max(x);
            max_y[id] = max_y[id].max(y);
        }
    }

    let mut mean_lab = Vec::with_capacity(n);
    let mut centroid = Vec::with_capacity(n);
    let mut bbox = Vec::with_capacity(n);
    for i in 0..n {
        let a = area[i] as f64;
        mean_lab.push([lab_sum[i][0] / a, lab_sum[i][1] / a, lab_sum[i][2] / a]);
        centroid.push([xy_sum[i][0] / a, xy_sum[i][1] / a]);
        bbox.push(Rect::new(
            min_x[i],
            min_y[i],
            max_x[i] - min_x[i] + 1,
            max_y[i] - min_y[i] + 1,
        ));
    }
    Ok(RegionStats { mean_lab, centroid, area, bbox })
}

/// Symmetric neighbor lists from 4-neighborhood pixel scans.
#[derive(Debug, Clone)]
pub struct AdjacencyGraph {
    pub neighbors: Vec<Vec<u32>>,
}

impl AdjacencyGraph {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Build the region adjacency graph of a segmentation.
pub fn adjacency(seg: &SuperpixelSegmentation) -> AdjacencyGraph {
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); seg.count as usize];
    let note = |a: u32, b: u32, neighbors: &mut Vec<Vec<u32>>| {
        if a != b {
            if !neighbors[a as usize].contains(&b) {
                neighbors[a as usize].push(b);
            }
            if !neighbors[b as usize].contains(&a) {
                neighbors[b as usize].push(a);
            }
        }
    };
    for y in 0..seg.height {
        for x in 0..seg.width {
            let l = seg.label_at(x, y);
            if x + 1 < seg.width {
                note(l, seg.label_at(x + 1, y), &mut neighbors);
            }
            if y + 1 < seg.height {
                note(l, seg.label_at(x, y + 1), &mut neighbors);
            }
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    AdjacencyGraph { neighbors }
}

/// Which segmenter to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegMethod {
    Fh,
    Slic,
}

impl std::str::FromStr for SegMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fh" => Ok(SegMethod::Fh),
            "slic" => Ok(SegMethod::Slic),
            other => Err(Error::Config(format!("unknown segmentation method '{other}'"))),
        }
    }
}

impl std::fmt::Display for SegMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SegMethod::Fh => write!(f, "fh"),
            SegMethod::Slic => write!(f, "slic"),
        }
    }
}

/// Default presmoothing sigma for FH.
pub const FH_DEFAULT_SIGMA: f64 = 0.8;

/// Minimum FH component size derived from a count target: a quarter of the
/// expected mean superpixel area. The min-size pass merges fragments until
/// they clear the bound, which inflates mean areas well past `min_size`;
/// a quarter keeps the target count reachable.
pub fn fh_min_size_for_target(pixel_count: usize, n_target: u32) -> u32 {
    ((0.25 * pixel_count as f64 / n_target as f64).round() as u32).max(1)
}

/// Segment with an approximate superpixel count. SLIC takes the target
/// directly; FH has no count parameter, so the threshold scale is bisected
/// (in log space, at most 20 probes) until the count lands within 20% of the
/// target, returning the closest probe otherwise.
pub fn segment_to_target_count(
    image: &RgbRaster,
    method: SegMethod,
    n_target: u32,
) -> Result<SuperpixelSegmentation> {
    if n_target == 0 {
        return Err(Error::invalid_input("n_target must be >= 1"));
    }
    match method {
        SegMethod::Slic => slic_segment(image, n_target.min(image.pixel_count() as u32), 10.0, 10),
        SegMethod::Fh => {
            let min_size = fh_min_size_for_target(image.pixel_count(), n_target);
            let graph = FhGraph::build(image, FH_DEFAULT_SIGMA)?;
            let target = n_target as f64;
            let within = |c: u32| (c as f64 - target).abs() <= 0.2 * target;

            let mut lo = 1e-6_f64; // high count end
            let mut hi = 2.0 * image.pixel_count() as f64; // single component end
            let mut best: Option<(u32, SuperpixelSegmentation)> = None;
            let consider = |seg: SuperpixelSegmentation, best: &mut Option<(u32, SuperpixelSegmentation)>| {
                let c = seg.count;
                let better = match best {
                    None => true,
                    Some((bc, _)) => {
                        (c as f64 - target).abs() < (*bc as f64 - target).abs()
                    }
                };
                if better {
                    *best = Some((c, seg));
                }
            };

            for _ in 0..20 {
                let k = (lo.ln() + hi.ln()).mul_add(0.5, 0.0).exp();
                let seg = graph.partition(k, min_size)?;
                let c = seg.count;
                consider(seg, &mut best);
                if within(c) {
                    break;
                }
                if c > n_target {
                    lo = k;
                } else {
                    hi = k;
                }
            }
            Ok(best.expect("at least one probe ran").1)
        }
    }
}

/// Scale ladder: per downscale factor, the approximate superpixel count used
/// for that scale's segmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub levels: Vec<ScaleLevel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleLevel {
    /// Downscale factor identifying the scale (8 = finest).
    pub factor: u32,
    pub target_superpixels: u32,
}

pub const SCALE_FACTORS: [u32; 8] = [8, 16, 24, 32, 48, 64, 96, 128];

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig::with_base(8000)
    }
}

impl ScaleConfig {
    /// Counts interpolated linearly in the downscale factor, from `base` at
    /// the finest scale down to `base / 16` at the coarsest.
    pub fn with_base(base: u32) -> ScaleConfig {
        let lo = (base as f64 / 16.0).max(1.0);
        let levels = SCALE_FACTORS
            .iter()
            .map(|&n| {
                let t = (n - 8) as f64 / (128 - 8) as f64;
                let count = (base as f64 + (lo - base as f64) * t).round().max(1.0) as u32;
                ScaleLevel { factor: n, target_superpixels: count }
            })
            .collect();
        ScaleConfig { levels }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("scale config has no levels".into()));
        }
        for w in self.levels.windows(2) {
            if w[1].factor <= w[0].factor {
                return Err(Error::Config("scale factors must increase".into()));
            }
            if w[1].target_superpixels >= w[0].target_superpixels {
                return Err(Error::Config("superpixel counts must strictly decrease".into()));
            }
        }
        if self.levels.iter().any(|l| l.target_superpixels == 0) {
            return Err(Error::Config("superpixel counts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn level(&self, factor: u32) -> Option<&ScaleLevel> {
        self.levels.iter().find(|l| l.factor == factor)
    }

    /// Image downsampling applied before feature extraction at this scale,
    /// relative to the finest scale.
    pub fn image_downsample(factor: u32) -> u32 {
        (factor / 8).max(1)
    }

    /// Scale assignment for a window: pick the level whose factor is nearest
    /// to `max(w, h) / 10`, ties toward the finer scale.
    pub fn assign_window(&self, window: &Rect) -> u32 {
        let ideal = window.width.max(window.height) as f64 / 10.0;
        let mut best = self.levels[0].factor;
        let mut best_d = f64::INFINITY;
        for l in &self.levels {
            let d = (l.factor as f64 - ideal).abs();
            if d < best_d {
                best_d = d;
                best = l.factor;
            }
        }
        best
    }
}
