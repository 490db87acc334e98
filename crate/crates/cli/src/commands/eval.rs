use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Parser;

use spxrefine_core::mask::BinaryMask;
use spxrefine_core::metrics::evaluate_dataset;
use spxrefine_core::refine::RefinedProposal;

#[derive(Parser)]
pub struct Args {
    /// Directory of per-image refined proposal JSON files
    #[arg(long)]
    pub proposals: PathBuf,
    /// Ground-truth root: a directory containing gt/<image>/<k>.png
    #[arg(long)]
    pub gt: PathBuf,
    /// Proposal budgets, comma separated
    #[arg(long, default_value = "10,100,1000", value_delimiter = ',')]
    pub at: Vec<usize>,
    /// Output path prefix (.json and .csv are appended)
    #[arg(long)]
    pub out: PathBuf,
    /// Boundary-recall tolerance in pixels
    #[arg(long, default_value_t = 2)]
    pub boundary_tol: u32,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(&args.proposals)
        .with_context(|| format!("reading {}", args.proposals.display()))?
    {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    if stems.is_empty() {
        bail!("no proposal files in {}", args.proposals.display());
    }

    let gt_root = if args.gt.join("gt").is_dir() {
        args.gt.join("gt")
    } else {
        args.gt.clone()
    };

    let mut names = Vec::new();
    let mut proposals = Vec::new();
    let mut gts = Vec::new();
    for stem in &stems {
        let props: Vec<RefinedProposal> = serde_json::from_str(
            &std::fs::read_to_string(args.proposals.join(format!("{stem}.json")))?,
        )?;
        // files are score-sorted by the refiner; decode in that order
        let mut masks = Vec::with_capacity(props.len());
        for p in &props {
            masks.push(p.rle.decode()?);
        }

        let gt_dir = gt_root.join(stem);
        if !gt_dir.is_dir() {
            bail!("missing ground truth for '{stem}' under {}", gt_root.display());
        }
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&gt_dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        let mut img_gts = Vec::new();
        for path in entries {
            if path.extension().and_then(|e| e.to_str()) == Some("png") {
                img_gts.push(BinaryMask::load_png(&path)?);
            }
        }
        if img_gts.is_empty() {
            bail!("no ground-truth masks for '{stem}'");
        }
        names.push(stem.clone());
        proposals.push(masks);
        gts.push(img_gts);
    }

    let report = evaluate_dataset(&names, &proposals, &gts, &args.at, args.boundary_tol)?;

    let json_path = args.out.with_extension("json");
    let csv_path = args.out.with_extension("csv");
    super::write_json(&json_path, &report, true)?;
    std::fs::write(&csv_path, report.to_csv())?;

    for e in &report.ar_at {
        println!("AR@{}: {:.4}", e.n, e.ar);
    }
    println!("BR: {:.4}  UE: {:.4}", report.boundary_recall, report.undersegmentation_error);
    println!("report written to {} and {}", json_path.display(), csv_path.display());
    Ok(())
}
