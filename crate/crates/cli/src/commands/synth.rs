use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

use spxrefine_core::dataset::write_dataset;
use spxrefine_core::groundtruth::{synth_generate, SynthConfig};

#[derive(Parser)]
pub struct Args {
    /// JSON config; defaults apply for missing fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output dataset root
    #[arg(long, required_unless_present = "print_default_config")]
    pub out: Option<PathBuf>,
    /// Override the config seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of images
    #[arg(long)]
    pub images: Option<u32>,
    /// Override the shapes per image
    #[arg(long)]
    pub shapes: Option<u32>,
    /// Print the default config as JSON and exit
    #[arg(long)]
    pub print_default_config: bool,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    if args.print_default_config {
        println!("{}", serde_json::to_string_pretty(&SynthConfig::default())?);
        return Ok(());
    }
    let mut config: SynthConfig = match &args.config {
        Some(path) => serde_json::from_str(
            &std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?,
        )?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(images) = args.images {
        config.images = images;
    }
    if let Some(shapes) = args.shapes {
        config.shapes_per_image = shapes;
    }

    let dataset = synth_generate(&config)?;
    let out = args.out.expect("clap enforces --out");
    write_dataset(&dataset, &out)?;
    let gts: usize = dataset.items.iter().map(|i| i.gts.len()).sum();
    println!(
        "wrote {} images with {} annotated objects to {}",
        dataset.items.len(),
        gts,
        out.display()
    );
    Ok(())
}
