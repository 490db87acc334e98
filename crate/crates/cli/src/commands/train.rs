use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Parser;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use spxrefine_core::classifier::{train_with_features, TrainConfig, TrainingSet};
use spxrefine_core::dataset::{training_rows_for_item, DatasetLayout};
use spxrefine_core::featurizer::FeatureStackConfig;
use spxrefine_core::model::save_model;
use spxrefine_core::segmentation::{ScaleConfig, SegMethod};

use super::segment::SegMethodArg;

/// Everything a training run needs: optimizer settings, the segmentation
/// method and scale ladder, and the feature recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRunConfig {
    pub train: TrainConfig,
    pub method: SegMethod,
    /// Superpixel count at the finest scale; coarser scales interpolate
    /// down to a sixteenth of this.
    pub scale_base_superpixels: u32,
    pub feature: FeatureStackConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            train: TrainConfig::default(),
            method: SegMethod::Fh,
            scale_base_superpixels: 8000,
            feature: FeatureStackConfig::default(),
        }
    }
}

#[derive(Parser)]
pub struct Args {
    /// Dataset root (images/, gt/, proposals/)
    #[arg(long, required_unless_present = "print_default_config")]
    pub dataset: Option<PathBuf>,
    /// JSON training config; defaults apply for missing fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output model path (a .loss.csv training log is written alongside)
    #[arg(long, required_unless_present = "print_default_config")]
    pub out: Option<PathBuf>,
    /// Override the config seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the segmentation method
    #[arg(long)]
    pub method: Option<SegMethodArg>,
    /// Override the finest-scale superpixel count
    #[arg(long)]
    pub superpixels: Option<u32>,
    /// Worker threads for per-image feature extraction
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Print the default config as JSON and exit
    #[arg(long)]
    pub print_default_config: bool,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    if args.print_default_config {
        println!("{}", serde_json::to_string_pretty(&TrainRunConfig::default())?);
        return Ok(());
    }
    let mut config: TrainRunConfig = match &args.config {
        Some(path) => serde_json::from_str(
            &std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?,
        )?,
        None => TrainRunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    if let Some(method) = args.method {
        config.method = method.into();
    }
    if let Some(base) = args.superpixels {
        config.scale_base_superpixels = base;
    }

    let layout = DatasetLayout::new(args.dataset.expect("clap enforces --dataset"));
    let stems = layout.image_stems()?;
    if stems.is_empty() {
        bail!("dataset {} contains no images", layout.root.display());
    }
    let scale_cfg = ScaleConfig::with_base(config.scale_base_superpixels);
    scale_cfg.validate()?;

    // per-image rows are independent; merge preserves stem order so the
    // training set is identical regardless of scheduling
    let pool = super::thread_pool(args.jobs)?;
    let per_image: Vec<spxrefine_core::Result<TrainingSet>> = pool.install(|| {
        stems
            .par_iter()
            .map(|stem| {
                let item = layout.load_item(stem)?;
                let mut set = TrainingSet::default();
                training_rows_for_item(&item, &scale_cfg, config.method, &config.feature, &mut set)?;
                Ok(set)
            })
            .collect()
    });
    let mut training = TrainingSet::default();
    for part in per_image {
        let part = part?;
        if part.is_empty() {
            continue;
        }
        if training.d_raw == 0 {
            training.d_raw = part.d_raw;
        }
        training.priors.extend(part.priors);
        training.raw.extend(part.raw);
        training.labels.extend(part.labels);
    }
    if training.is_empty() {
        bail!("dataset produced no training rows (no proposals?)");
    }

    let model = train_with_features(&training, &config.train, config.feature.clone())?;
    if model.stats.single_class {
        eprintln!("warning: training labels contain a single class; proceeding anyway");
    }

    let out = args.out.expect("clap enforces --out");
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_model(&model, &out)?;

    let mut csv = String::from("epoch,loss\n");
    for (i, loss) in model.stats.epoch_loss.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, loss));
    }
    let loss_path = out.with_extension("loss.csv");
    std::fs::write(&loss_path, csv)?;

    println!(
        "trained on {} rows ({} positive); model written to {}",
        model.stats.rows,
        model.stats.positives,
        out.display()
    );
    Ok(())
}
