use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

use spxrefine_core::raster::RgbRaster;
use spxrefine_core::segmentation::{segment_to_target_count, SegMethod, SegmentationHeader};

#[derive(Parser)]
pub struct Args {
    /// Input image (PNG or PPM)
    #[arg(long)]
    pub image: PathBuf,
    /// Segmentation method
    #[arg(long, default_value = "fh")]
    pub method: SegMethodArg,
    /// Approximate superpixel count target
    #[arg(long, default_value_t = 8000)]
    pub superpixels: u32,
    /// Output label-map PNG path (a .json header is written alongside)
    #[arg(long)]
    pub out: PathBuf,
}

/// clap-friendly wrapper around the core method enum.
#[derive(Clone, Copy, clap::ValueEnum)]
pub enum SegMethodArg {
    Fh,
    Slic,
}

impl From<SegMethodArg> for SegMethod {
    fn from(value: SegMethodArg) -> SegMethod {
        match value {
            SegMethodArg::Fh => SegMethod::Fh,
            SegMethodArg::Slic => SegMethod::Slic,
        }
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let image = RgbRaster::load(&args.image)
        .with_context(|| format!("loading {}", args.image.display()))?;
    let method: SegMethod = args.method.into();
    let target = args.superpixels.min(image.pixel_count() as u32).max(1);
    let seg = segment_to_target_count(&image, method, target)?;
    let header = SegmentationHeader {
        width: seg.width,
        height: seg.height,
        count: seg.count,
        method: method.to_string(),
        params: serde_json::json!({ "n_target": target }),
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    seg.save(&args.out, &header)?;
    println!(
        "segmented {} into {} superpixels ({})",
        args.image.display(),
        seg.count,
        args.out.display()
    );
    Ok(())
}
