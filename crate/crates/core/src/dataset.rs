//! On-disk dataset layout and training-set assembly.
//!
//! A dataset root contains `images/` (PNG or PPM), `gt/<image>/<k>.png`
//! (binary object masks) and `proposals/<image>.json` (a JSON array of
//! coarse proposals). Training pairs proposal `k` of an image with ground
//! truth `k`: synthetic datasets derive each proposal from one annotation,
//! so the pairing is by construction.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use crate::classifier::TrainingSet;
use crate::error::{Error, Result};
use crate::featurizer::FeatureStackConfig;
use crate::groundtruth::{greedy_optimal_set, labels_for_window, GtObject, SynthDataset};
use crate::mask::BinaryMask;
use crate::pooling::pool_mask_prior;
use crate::raster::RgbRaster;
use crate::refine::build_scale_artifacts;
use crate::sampling::{assemble_batch, crop_segmentation, CoarseProposal, MASK_SIDE};
use crate::segmentation::{ScaleConfig, SegMethod};

/// Paths of one dataset root.
#[derive(Debug, Clone)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> DatasetLayout {
        DatasetLayout { root: root.into() }
    }

    pub fn images_dir(&self) -> PathBuf {
        self.root.join("images")
    }

    pub fn gt_dir(&self, stem: &str) -> PathBuf {
        self.root.join("gt").join(stem)
    }

    pub fn proposals_path(&self, stem: &str) -> PathBuf {
        self.root.join("proposals").join(format!("{stem}.json"))
    }

    /// Sorted image stems found under `images/`.
    pub fn image_stems(&self) -> Result<Vec<String>> {
        let dir = self.images_dir();
        if !dir.is_dir() {
            return Err(Error::Format(format!(
                "dataset root {} has no images/ directory",
                self.root.display()
            )));
        }
        let mut stems = Vec::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            if matches!(ext, "png" | "ppm") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    stems.push(stem.to_string());
                }
            }
        }
        stems.sort();
        Ok(stems)
    }

    pub fn image_path(&self, stem: &str) -> Result<PathBuf> {
        for ext in ["png", "ppm"] {
            let p = self.images_dir().join(format!("{stem}.{ext}"));
            if p.is_file() {
                return Ok(p);
            }
        }
        Err(Error::Format(format!("no image found for '{stem}'")))
    }

    /// Load one image with its annotations and proposals, validating sizes.
    pub fn load_item(&self, stem: &str) -> Result<DatasetItem> {
        let image = RgbRaster::load(&self.image_path(stem)?)?;
        let mut gts = Vec::new();
        let gt_dir = self.gt_dir(stem);
        if gt_dir.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(&gt_dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            entries.sort();
            for path in entries {
                if path.extension().and_then(|e| e.to_str()) != Some("png") {
                    continue;
                }
                let mask = BinaryMask::load_png(&path)?;
                if mask.width != image.width || mask.height != image.height {
                    return Err(Error::Format(format!(
                        "{}: mask size {}x{} does not match image {}x{}",
                        path.display(),
                        mask.width,
                        mask.height,
                        image.width,
                        image.height
                    )));
                }
                gts.push(GtObject::new(gts.len() as u32, mask)?);
            }
        }
        let proposals_path = self.proposals_path(stem);
        let proposals: Vec<CoarseProposal> = if proposals_path.is_file() {
            serde_json::from_str(&std::fs::read_to_string(&proposals_path)?)?
        } else {
            Vec::new()
        };
        for p in &proposals {
            p.validate(image.width, image.height)?;
        }
        Ok(DatasetItem { stem: stem.to_string(), image, gts, proposals })
    }
}

/// One loaded dataset entry.
#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub stem: String,
    pub image: RgbRaster,
    pub gts: Vec<GtObject>,
    pub proposals: Vec<CoarseProposal>,
}

/// Write a synthetic dataset in the standard layout.
pub fn write_dataset(ds: &SynthDataset, root: &Path) -> Result<()> {
    let layout = DatasetLayout::new(root);
    std::fs::create_dir_all(layout.images_dir())?;
    std::fs::create_dir_all(root.join("gt"))?;
    std::fs::create_dir_all(root.join("proposals"))?;
    for item in &ds.items {
        item.image
            .save_png(&layout.images_dir().join(format!("{}.png", item.name)))?;
        let gt_dir = layout.gt_dir(&item.name);
        std::fs::create_dir_all(&gt_dir)?;
        for (k, gt) in item.gts.iter().enumerate() {
            gt.mask.save_png(&gt_dir.join(format!("{k}.png")))?;
        }
        let json = serde_json::to_string(&item.proposals)?;
        std::fs::write(layout.proposals_path(&item.name), json)?;
    }
    Ok(())
}

/// Assemble the labeled training rows for one image: per scale present among
/// the proposals, segment and pool raw features once; per proposal, sample
/// its window, pool the mask prior, and label the sampled superpixels from
/// the greedy optimal set of the paired annotation.
pub fn training_rows_for_item(
    item: &DatasetItem,
    scale_cfg: &ScaleConfig,
    method: SegMethod,
    feature_cfg: &FeatureStackConfig,
    out: &mut TrainingSet,
) -> Result<()> {
    if item.proposals.is_empty() {
        return Ok(());
    }
    if item.proposals.len() != item.gts.len() {
        return Err(Error::Format(format!(
            "{}: {} proposals but {} ground-truth masks (training pairs by index)",
            item.stem,
            item.proposals.len(),
            item.gts.len()
        )));
    }

    let mut scales: Vec<u32> = item.proposals.iter().map(|p| p.scale_id).collect();
    scales.sort_unstable();
    scales.dedup();
    let artifacts =
        build_scale_artifacts(&item.image, &scales, scale_cfg, method, feature_cfg)?;

    let mut raw_tables = BTreeMap::new();
    for (&factor, art) in &artifacts {
        raw_tables.insert(factor, art.raw_table.clone());
    }

    // greedy optimal sets are per (annotation, scale)
    let mut optimal_cache: HashMap<(usize, u32), crate::groundtruth::OptimalSet> = HashMap::new();

    let mut crops = Vec::with_capacity(item.proposals.len());
    let mut priors = Vec::with_capacity(item.proposals.len());
    let mut labels = Vec::with_capacity(item.proposals.len());
    for (idx, proposal) in item.proposals.iter().enumerate() {
        let art = &artifacts[&proposal.scale_id];
        let window = proposal.window.clip(item.image.width, item.image.height);
        let crop = crop_segmentation(&art.seg, &window)?;
        let prior = pool_mask_prior(&proposal.mask40, MASK_SIDE, &window, &art.seg, &crop.ids)?;
        let optimal = match optimal_cache.entry((idx, proposal.scale_id)) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(greedy_optimal_set(&art.seg, &item.gts[idx])?)
            }
        };
        labels.push(labels_for_window(optimal, &crop));
        crops.push(crop);
        priors.push(prior);
    }

    let batch = assemble_batch(&item.proposals, &crops, &priors, &raw_tables, Some(&labels))?;
    out.push_batch(&batch)?;
    Ok(())
}

/// Build a training set from loaded dataset items.
pub fn build_training_set(
    items: &[DatasetItem],
    scale_cfg: &ScaleConfig,
    method: SegMethod,
    feature_cfg: &FeatureStackConfig,
) -> Result<TrainingSet> {
    let mut set = TrainingSet::default();
    for item in items {
        training_rows_for_item(item, scale_cfg, method, feature_cfg, &mut set)?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::{synth_generate, SynthConfig};

    #[test]
    fn synth_round_trip_through_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { images: 3, shapes_per_image: 2, seed: 11, ..Default::default() };
        let ds = synth_generate(&cfg).unwrap();
        write_dataset(&ds, dir.path()).unwrap();

        let layout = DatasetLayout::new(dir.path());
        let stems = layout.image_stems().unwrap();
        assert_eq!(stems, vec!["img_0000", "img_0001", "img_0002"]);
        let item = layout.load_item(&stems[0]).unwrap();
        assert_eq!(item.gts.len(), 2);
        assert_eq!(item.proposals.len(), 2);
        assert_eq!(item.image.width, 64);
        // PNG round-trip quantizes to 8 bits per channel
        for (a, b) in item.image.pixels.iter().zip(&ds.items[0].image.pixels) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 0.5 / 255.0 + 1e-9);
            }
        }
        // proposals survive exactly (JSON round-trip of f64)
        assert_eq!(item.proposals, ds.items[0].proposals);
    }

    #[test]
    fn training_rows_have_both_classes() {
        let cfg = SynthConfig { images: 4, shapes_per_image: 2, seed: 3, ..Default::default() };
        let ds = synth_generate(&cfg).unwrap();
        let items: Vec<DatasetItem> = ds
            .items
            .iter()
            .map(|i| DatasetItem {
                stem: i.name.clone(),
                image: i.image.clone(),
                gts: i.gts.clone(),
                proposals: i.proposals.clone(),
            })
            .collect();
        let scale_cfg = ScaleConfig::with_base(200);
        let set = build_training_set(
            &items,
            &scale_cfg,
            SegMethod::Fh,
            &FeatureStackConfig::default(),
        )
        .unwrap();
        assert!(!set.is_empty());
        let pos = set.labels.iter().filter(|&&l| l != 0).count();
        assert!(pos > 0 && pos < set.len(), "positives: {pos} of {}", set.len());
        assert_eq!(set.d_raw, crate::featurizer::RAW_CHANNELS);
    }

    #[test]
    fn mismatched_counts_rejected() {
        let cfg = SynthConfig { images: 1, shapes_per_image: 2, seed: 5, ..Default::default() };
        let ds = synth_generate(&cfg).unwrap();
        let mut item = DatasetItem {
            stem: ds.items[0].name.clone(),
            image: ds.items[0].image.clone(),
            gts: ds.items[0].gts.clone(),
            proposals: ds.items[0].proposals.clone(),
        };
        item.proposals.pop();
        let mut set = TrainingSet::default();
        let err = training_rows_for_item(
            &item,
            &ScaleConfig::with_base(200),
            SegMethod::Fh,
            &FeatureStackConfig::default(),
            &mut set,
        );
        assert!(err.is_err());
    }
}
