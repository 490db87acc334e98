use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

use spxrefine_core::mask::BinaryMask;
use spxrefine_core::raster::RgbRaster;
use spxrefine_core::refine::RefinedProposal;

#[derive(Parser)]
pub struct Args {
    /// Input image
    #[arg(long)]
    pub image: PathBuf,
    /// Refined proposals JSON
    #[arg(long)]
    pub proposals: PathBuf,
    /// Output overlay PNG
    #[arg(long)]
    pub out: PathBuf,
    /// Fill opacity for proposal interiors
    #[arg(long, default_value_t = 0.35)]
    pub alpha: f64,
}

/// Deterministic palette: hues spaced by the golden angle.
fn palette_color(index: usize) -> [f64; 3] {
    let hue = (index as f64 * 0.618_033_988_749_895).fract() * 360.0;
    let (h, s, v) = (hue, 0.85, 0.95);
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

fn boundary_of(mask: &BinaryMask) -> Vec<bool> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut boundary = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as u32, y as u32) {
                continue;
            }
            let mut edge = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            if !edge {
                edge = !mask.get(x as u32 - 1, y as u32)
                    || !mask.get(x as u32 + 1, y as u32)
                    || !mask.get(x as u32, y as u32 - 1)
                    || !mask.get(x as u32, y as u32 + 1);
            }
            boundary[y * w + x] = edge;
        }
    }
    boundary
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut image = RgbRaster::load(&args.image)
        .with_context(|| format!("loading {}", args.image.display()))?;
    let proposals: Vec<RefinedProposal> =
        serde_json::from_str(&std::fs::read_to_string(&args.proposals)?)?;

    for (idx, proposal) in proposals.iter().enumerate() {
        let mask = proposal.rle.decode()?;
        if mask.width != image.width || mask.height != image.height {
            anyhow::bail!("proposal {idx} mask does not match the image size");
        }
        let color = palette_color(idx);
        let boundary = boundary_of(&mask);
        for y in 0..image.height {
            for x in 0..image.width {
                let i = (y * image.width + x) as usize;
                if boundary[i] {
                    image.set(x, y, color);
                } else if mask.data[i] != 0 {
                    let bg = image.get(x, y);
                    image.set(
                        x,
                        y,
                        [
                            args.alpha * color[0] + (1.0 - args.alpha) * bg[0],
                            args.alpha * color[1] + (1.0 - args.alpha) * bg[1],
                            args.alpha * color[2] + (1.0 - args.alpha) * bg[2],
                        ],
                    );
                }
            }
        }
    }

    image.save_png(&args.out)?;
    println!(
        "rendered {} proposals over {} -> {}",
        proposals.len(),
        args.image.display(),
        args.out.display()
    );
    Ok(())
}
