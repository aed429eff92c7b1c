use std::collections::BTreeSet;
use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lbpseg::harness::{self, EvaluateOptions};
use lbpseg::lbp::write_presence_csv;
use lbpseg::{
    border_error, fpr, g_perp, lbp_map, overlay, presence_analysis, segment_image_detailed, tdr, to_luminance,
    BinaryMask, Error, KMeansConfig, PipelineConfig, RasterImage, Variant,
};

#[derive(Parser)]
#[command(name = "lbpseg", version, about = "Dermoscopic lesion segmentation by LBP clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment one image.
    Segment(SegmentArgs),
    /// Segment and score every image of a manifest.
    Evaluate(EvaluateArgs),
    /// Per-class LBP presence inside and outside a ground-truth lesion.
    LbpStats(LbpStatsArgs),
    /// Mean wall time of the full pipeline on one image.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Feature space: ab or zn.
    #[arg(long, default_value = "ab", value_parser = parse_variant)]
    variant: Variant,
    /// Gaussian sigma (pixels) for the flatness map.
    #[arg(long, default_value_t = lbpseg::pipeline::DEFAULT_SIGMA)]
    sigma: f64,
    /// K-means seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// K-means restarts.
    #[arg(long, default_value_t = KMeansConfig::default().restarts)]
    restarts: usize,
}

impl PipelineArgs {
    fn config(&self, postprocess: bool) -> PipelineConfig {
        PipelineConfig {
            sigma: self.sigma,
            variant: self.variant,
            kmeans: KMeansConfig {
                seed: self.seed,
                restarts: self.restarts,
                ..KMeansConfig::default()
            },
            postprocess,
        }
    }
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct SegmentArgs {
    image: PathBuf,
    /// Ground-truth mask; prints BE, TDR, FPR and G⊥ when given.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Output mask PNG (0 = skin, 255 = lesion).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input image with the mask contour in red.
    #[arg(long)]
    overlay: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Skip largest-component selection and hole filling.
    #[arg(long)]
    no_postprocess: bool,
    /// Dump luminance and smoothed flatness PNGs into this directory.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
    /// Dump the feature cloud as pixel_x,pixel_y,a,b.
    #[arg(long)]
    features_csv: Option<PathBuf>,
    /// Print cluster centroids, SSE and iteration count.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Image ids (one per line) left out of the filtered summary.
    #[arg(long)]
    exclude: Option<PathBuf>,
    /// Per-image metrics CSV; summary and failure lists are written next to it.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    masks_dir: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct LbpStatsArgs {
    image: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    image: PathBuf,
    #[arg(long, default_value_t = 1)]
    iters: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Segment(a) => segment(a),
        Command::Evaluate(a) => evaluate(a),
        Command::LbpStats(a) => lbp_stats(a),
        Command::Bench(a) => bench(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn segment(a: SegmentArgs) -> Result<ExitCode> {
    let img = RasterImage::open_rgb(&a.image)?;
    let cfg = a.pipeline.config(!a.no_postprocess);
    let seg = match segment_image_detailed(&img, &cfg) {
        Ok(s) => s,
        Err(e) if e.is_unsegmentable() => {
            eprintln!("unsegmentable: {e}");
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };

    if a.verbose {
        let c = &seg.clusters;
        println!(
            "centroids=({:.4},{:.4}) ({:.4},{:.4}) sse={:.4} iterations={}",
            c.centroids[0].a, c.centroids[0].b, c.centroids[1].a, c.centroids[1].b, c.sse, c.iterations
        );
        println!("lesion_area={}", seg.mask.area());
    }
    if let Some(p) = &a.out {
        seg.mask.save_png(p)?;
    }
    if let Some(p) = &a.overlay {
        overlay(&img, &seg.mask)?.save(p)?;
    }
    if let Some(dir) = &a.dump_dir {
        std::fs::create_dir_all(dir)?;
        seg.luminance.save_png(dir.join("luminance.png"))?;
        seg.flatness.save_png(dir.join("flatness.png"))?;
        seg.flatness_smooth.save_png(dir.join("flatness_smooth.png"))?;
    }
    if let Some(p) = &a.features_csv {
        seg.features.write_csv(File::create(p)?)?;
    }
    if let Some(p) = &a.gt {
        let gt = BinaryMask::open(p)?;
        println!("be={:.6}", border_error(&seg.mask, &gt)?);
        println!("tdr={:.6}", tdr(&seg.mask, &gt)?);
        println!("fpr={:.6}", fpr(&seg.mask, &gt)?);
        let fmt = |r: lbpseg::Result<f64>| r.map(|v| format!("{v:.6}")).unwrap_or_else(|e| format!("NA ({e})"));
        println!("g_perp={}", fmt(g_perp(&seg.mask, &seg.luminance)));
        println!("g_perp_gt={}", fmt(g_perp(&gt, &seg.luminance)));
    }
    Ok(ExitCode::SUCCESS)
}

fn evaluate(a: EvaluateArgs) -> Result<ExitCode> {
    let records = harness::load_manifest(&a.manifest)?;
    let excluded = match &a.exclude {
        Some(p) => {
            let ex = harness::apply_exclusions(&records, p)?;
            for id in &ex.unknown_ids {
                eprintln!("warning: excluded id {id:?} is not in the manifest");
            }
            let kept: BTreeSet<&str> = ex.kept.iter().map(|r| r.image_id.as_str()).collect();
            Some(
                records
                    .iter()
                    .filter(|r| !kept.contains(r.image_id.as_str()))
                    .map(|r| r.image_id.clone())
                    .collect::<BTreeSet<_>>(),
            )
        }
        None => None,
    };

    let cfg = a.pipeline.config(true);
    let opts = EvaluateOptions {
        masks_dir: a.masks_dir.clone(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .context("building worker pool")?;
    let eval = pool.install(|| harness::evaluate_dataset(&records, &cfg, &opts))?;
    let files = harness::write_evaluation(&eval, excluded.as_ref(), &a.report)?;

    println!(
        "segmented {} of {} images ({} unsegmentable)",
        eval.records.len(),
        records.len(),
        eval.failures.len()
    );
    for f in &eval.failures {
        eprintln!("unsegmentable {}: {}", f.image_id, f.reason);
    }
    println!("report: {}", files.report.display());
    println!("summary: {}", files.summary.display());
    Ok(ExitCode::SUCCESS)
}

fn lbp_stats(a: LbpStatsArgs) -> Result<ExitCode> {
    let img = RasterImage::open_rgb(&a.image)?;
    let gt = BinaryMask::open(&a.gt)?;
    let lbp = lbp_map(&to_luminance(&img)?)?;
    let rows = presence_analysis(&lbp, &gt)?;
    write_presence_csv(&rows, File::create(&a.out)?)?;
    println!("{} classes written to {}", rows.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn bench(a: BenchArgs) -> Result<ExitCode> {
    if a.iters == 0 {
        bail!("--iters must be >= 1");
    }
    let img = RasterImage::open_rgb(&a.image)?;
    let cfg = PipelineConfig::default();
    let mut total = 0.0;
    for _ in 0..a.iters {
        let start = Instant::now();
        let seg = segment_image_detailed(&img, &cfg)?;
        total += start.elapsed().as_secs_f64();
        std::hint::black_box(seg);
    }
    println!(
        "image={}x{} iters={} mean_seconds={:.4}",
        img.width(),
        img.height(),
        a.iters,
        total / a.iters as f64
    );
    Ok(ExitCode::SUCCESS)
}
