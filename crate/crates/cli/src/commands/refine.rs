use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Parser;
use rayon::prelude::*;

use spxrefine_core::dataset::DatasetLayout;
use spxrefine_core::model::load_model;
use spxrefine_core::raster::RgbRaster;
use spxrefine_core::refine::{refine_image, PostConfig};
use spxrefine_core::sampling::CoarseProposal;
use spxrefine_core::segmentation::{ScaleConfig, SegMethod};

use super::segment::SegMethodArg;

#[derive(Parser)]
pub struct Args {
    /// Refine a single image (requires --proposals)
    #[arg(long, conflicts_with = "dataset")]
    pub image: Option<PathBuf>,
    /// Coarse proposals JSON for --image
    #[arg(long, requires = "image")]
    pub proposals: Option<PathBuf>,
    /// Refine every image of a dataset root
    #[arg(long, required_unless_present = "image")]
    pub dataset: Option<PathBuf>,
    /// Trained model file
    #[arg(long)]
    pub model: PathBuf,
    /// Output JSON file (--image) or directory (--dataset)
    #[arg(long)]
    pub out: PathBuf,
    /// Segmentation method (must match training for meaningful results)
    #[arg(long, default_value = "fh")]
    pub method: SegMethodArg,
    /// Superpixel count at the finest scale
    #[arg(long, default_value_t = 8000)]
    pub superpixels: u32,
    /// Disable superpixel-level bilateral filtering
    #[arg(long)]
    pub no_bilateral: bool,
    /// Disable morphological cleanup
    #[arg(long)]
    pub no_morph: bool,
    /// Disable near-duplicate suppression
    #[arg(long)]
    pub no_nms: bool,
    /// IoU threshold for near-duplicate suppression
    #[arg(long, default_value_t = 0.95)]
    pub nms_iou: f64,
    /// Probability threshold for rendering (defaults to the model's)
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Worker threads for dataset mode
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let model = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let method: SegMethod = args.method.into();
    let scale_cfg = ScaleConfig::with_base(args.superpixels);
    scale_cfg.validate()?;
    let post = PostConfig {
        bilateral: !args.no_bilateral,
        morphology: !args.no_morph,
        nms: !args.no_nms,
        nms_iou: args.nms_iou,
        threshold: args.threshold.unwrap_or(model.threshold),
        ..Default::default()
    };
    post.validate()?;

    match (&args.image, &args.dataset) {
        (Some(image_path), None) => {
            let proposals_path = args
                .proposals
                .as_ref()
                .context("--image requires --proposals")?;
            let image = RgbRaster::load(image_path)?;
            let proposals: Vec<CoarseProposal> =
                serde_json::from_str(&std::fs::read_to_string(proposals_path)?)?;
            let refined = refine_image(&image, &proposals, &model, &post, &scale_cfg, method)?;
            super::write_json(&args.out, &refined, false)?;
            println!("refined {} proposals -> {}", refined.len(), args.out.display());
        }
        (None, Some(root)) => {
            let layout = DatasetLayout::new(root);
            let stems = layout.image_stems()?;
            if stems.is_empty() {
                bail!("dataset {} contains no images", root.display());
            }
            std::fs::create_dir_all(&args.out)?;
            let pool = super::thread_pool(args.jobs)?;
            let results: Vec<anyhow::Result<usize>> = pool.install(|| {
                stems
                    .par_iter()
                    .map(|stem| {
                        let item = layout.load_item(stem)?;
                        let refined = refine_image(
                            &item.image,
                            &item.proposals,
                            &model,
                            &post,
                            &scale_cfg,
                            method,
                        )?;
                        let path = args.out.join(format!("{stem}.json"));
                        super::write_json(&path, &refined, false)?;
                        Ok(refined.len())
                    })
                    .collect()
            });
            let mut total = 0usize;
            for r in results {
                total += r?;
            }
            println!(
                "refined {} images ({} proposals) -> {}",
                stems.len(),
                total,
                args.out.display()
            );
        }
        _ => bail!("specify either --image with --proposals, or --dataset"),
    }
    Ok(())
}
