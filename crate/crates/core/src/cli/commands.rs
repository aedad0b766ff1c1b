//! Subcommand implementations.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::color::{build_pixel_dataset, project_cues_with};
use crate::eed::{run_eed_with_observer, DiffusionParams, Diffusivity};
use crate::error::{CueError, Result};
use crate::experts::{
    fuse_predict, load_softmax_stack, predict_dense, save_model, save_softmax_stack,
    train_color_expert, train_fusion, FusionTask, LrSchedule, MlpSpec, TrainConfig,
};
use crate::io;
use crate::manifest::{load_dataset, save_manifest, DatasetManifest, ManifestItem};
use crate::metrics::{
    accumulate, boundary_mask, class_iou, coverage_histogram, gt_segments, miou,
    segment_recall, split_accuracy, ConfusionMatrix,
};
use crate::raster::{validate_mask, ColorSpace, CueSet, GrayMode, RasterImage};
use crate::texture::{generate_texture_dataset, SeedCount, TextureConfig};

#[derive(Parser)]
#[command(
    name = "cueforge",
    version,
    about = "Cue decomposition and evaluation toolkit for semantic segmentation datasets"
)]
struct Cli {
    /// Worker threads; falls back to CUEFORGE_WORKERS, then all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive a cue-specific dataset from a base dataset.
    Decompose {
        #[command(subcommand)]
        what: DecomposeCmd,
    },
    /// Train a per-pixel color expert and export its dense predictions.
    TrainColor(TrainColorArgs),
    /// Evaluate predicted masks against a manifest's ground truth.
    Evaluate(EvaluateArgs),
    /// Train a pixel-wise late fusion of two experts and export fused
    /// predictions plus weight heatmaps.
    Fuse(FuseArgs),
    /// Bundle evaluation outputs into a report directory.
    Report(ReportArgs),
    /// Validate a manifest and all of its items.
    Validate(ValidateArgs),
}

#[derive(Subcommand)]
enum DecomposeCmd {
    /// Project color carriers: keep gray (v), chroma (hs) or both.
    Color(ColorArgs),
    /// Build the Voronoi texture dataset.
    Texture(TextureArgs),
    /// Remove texture by edge-enhancing diffusion.
    Eed(EedArgs),
}

#[derive(Args)]
struct ColorArgs {
    /// Color carriers to keep: v | hs | vhs.
    #[arg(long)]
    keep: String,
    /// Gray projection mode: mean | max.
    #[arg(long, default_value = "mean")]
    gray: String,
    /// Value channel used when rendering HS-only images.
    #[arg(long, default_value_t = 0.5)]
    neutral_v: f64,
    #[arg(long)]
    out: PathBuf,
    manifest: PathBuf,
}

#[derive(Args)]
struct TextureArgs {
    #[arg(long, default_value_t = 36)]
    min_pixels: usize,
    /// Voronoi seeds per megapixel (about 32 on 512x512).
    #[arg(long, default_value_t = 122.0)]
    seeds_per_mpx: f64,
    /// Fixed seed count per layout; overrides --seeds-per-mpx.
    #[arg(long)]
    seeds: Option<usize>,
    /// Output layout size HxW; defaults to each base item's size.
    #[arg(long, value_parser = parse_size)]
    out_size: Option<(usize, usize)>,
    #[arg(long, default_value_t = 0.5)]
    balance_fraction: f64,
    /// Mandatory generation seed; there is no wall-clock default.
    #[arg(long)]
    seed: u64,
    /// Export the balanced patch pool (PNG patches + JSON index) here.
    #[arg(long)]
    cache_pool: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    manifest: PathBuf,
}

#[derive(Args)]
struct EedArgs {
    #[arg(long, default_value_t = 1.0 / 15.0)]
    lambda: f64,
    #[arg(long, default_value_t = 2.23606797749979)]
    sigma: f64,
    /// Orientation smoothing scale; defaults to sigma.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 5)]
    kernel: usize,
    #[arg(long, default_value_t = 0.2)]
    tau: f64,
    #[arg(long, default_value_t = 8192)]
    steps: usize,
    #[arg(long, default_value_t = 0.49)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Diffusivity: pm (Perona-Malik) | exp (exponential).
    #[arg(long, default_value = "pm")]
    diffusivity: String,
    /// Recompute the diffusion tensor every N steps.
    #[arg(long, default_value_t = 1)]
    refresh: usize,
    /// Write PFM intermediates every N steps.
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Accept a time step beyond the stability guard.
    #[arg(long)]
    force_tau: bool,
    #[arg(long)]
    out: PathBuf,
    manifest: PathBuf,
}

#[derive(Args)]
struct TrainColorArgs {
    /// Color carriers the expert sees: v | hs | vhs.
    #[arg(long)]
    keep: String,
    #[arg(long, default_value = "mean")]
    gray: String,
    /// Layer widths, comma separated; K stands for the class count.
    #[arg(long, default_value = "3,16,K")]
    spec: String,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1024)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    /// Learning rate schedule: const | poly.
    #[arg(long, default_value = "const")]
    schedule: String,
    /// Pixel samples drawn per training image.
    #[arg(long, default_value_t = 2048)]
    samples_per_image: usize,
    #[arg(long, default_value_t = 1e-1)]
    init_scale: f64,
    /// Mandatory training seed; there is no wall-clock default.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    manifest: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of predicted masks named {image stem}_pred.png.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 4)]
    boundary_radius: usize,
    /// Segment-area bin edges for the coverage histogram.
    #[arg(long, value_delimiter = ',', default_values_t = vec![64usize, 256, 1024, 4096])]
    coverage_bins: Vec<usize>,
    /// Report JSON path; the coverage CSV lands next to it.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// Directory with expert A softmax stacks (as written by train-color).
    #[arg(long)]
    expert_a: PathBuf,
    #[arg(long)]
    expert_b: PathBuf,
    /// Manifest providing ground truth masks.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1024)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    /// Hidden widths of the gate, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![16usize])]
    hidden: Vec<usize>,
    /// Feed the gate a 3x3 softmax neighborhood instead of one pixel.
    #[arg(long)]
    window3: bool,
    /// Mandatory training seed; there is no wall-clock default.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Evaluation JSON files (repeatable, compared side by side).
    #[arg(long = "evaluation", required = true)]
    evaluations: Vec<PathBuf>,
    /// Weight heatmap PNGs to copy into the bundle.
    #[arg(long = "heatmap")]
    heatmaps: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    manifest: PathBuf,
    /// Optional JSON report of per-item validation results.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s}"))?;
    let h = h.parse().map_err(|_| format!("bad height in {s}"))?;
    let w = w.parse().map_err(|_| format!("bad width in {s}"))?;
    Ok((h, w))
}

fn parse_keep(s: &str) -> Result<CueSet> {
    match s {
        "v" => CueSet::new(false, false, true, false),
        "hs" => CueSet::new(false, false, false, true),
        "vhs" => CueSet::new(false, false, true, true),
        other => Err(CueError::InvalidParameter(format!(
            "--keep must be v, hs or vhs, got {other}"
        ))),
    }
}

fn parse_gray(s: &str) -> Result<GrayMode> {
    match s {
        "mean" => Ok(GrayMode::Mean),
        "max" => Ok(GrayMode::Max),
        other => Err(CueError::InvalidParameter(format!(
            "--gray must be mean or max, got {other}"
        ))),
    }
}

fn parse_spec(s: &str, k: usize, init_scale: f64) -> Result<MlpSpec> {
    let widths: Vec<usize> = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            if t.eq_ignore_ascii_case("k") {
                Ok(k)
            } else {
                t.parse::<usize>().map_err(|_| {
                    CueError::InvalidParameter(format!("bad layer width '{t}' in --spec"))
                })
            }
        })
        .collect::<Result<_>>()?;
    MlpSpec::new(widths, init_scale)
}

fn item_stem(manifest: &DatasetManifest, index: usize) -> String {
    manifest.items[index]
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("item_{index:05}"))
}

/// Run the CLI on an argument vector and map the outcome to an exit code:
/// 0 success, 1 validation error, 2 I/O error. Diagnostics go to stderr;
/// machine-readable output only ever lands in files.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let provenance = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    let cli = match Cli::try_parse_from(argv.clone()) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };

    let workers = cli.workers.or_else(|| {
        std::env::var("CUEFORGE_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = workers {
        // The global pool can only be installed once per process; later
        // invocations with the same settings are harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }

    // Exit-code mapping is total: a panic anywhere below still yields a
    // diagnostic and a nonzero code instead of an abort.
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        dispatch(cli.command, &provenance)
    }));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
        Err(_) => {
            eprintln!("error: internal failure");
            1
        }
    }
}

fn dispatch(command: Command, provenance: &str) -> Result<()> {
    match command {
        Command::Decompose { what } => match what {
            DecomposeCmd::Color(args) => decompose_color(args, provenance),
            DecomposeCmd::Texture(args) => decompose_texture(args, provenance),
            DecomposeCmd::Eed(args) => decompose_eed(args, provenance),
        },
        Command::TrainColor(args) => train_color(args, provenance),
        Command::Evaluate(args) => evaluate(args),
        Command::Fuse(args) => fuse(args, provenance),
        Command::Report(args) => report(args),
        Command::Validate(args) => validate(args),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CueError::io(dir, e))
}

/// Write the derived items of a per-image transformation plus a fresh
/// manifest. `transform` maps (index, image) to the derived image.
fn derive_per_image(
    base: &DatasetManifest,
    out: &Path,
    cue_set: CueSet,
    name_suffix: &str,
    provenance: &str,
    seed: u64,
    mut transform: impl FnMut(usize, RasterImage) -> Result<RasterImage>,
) -> Result<DatasetManifest> {
    ensure_dir(out)?;
    let mut items = Vec::with_capacity(base.items.len());
    for i in 0..base.items.len() {
        let (img, mask) = base.load_item(i)?;
        let derived = transform(i, img)?;
        let stem = item_stem(base, i);
        let image_name = format!("{i:05}_{stem}.png");
        let mask_name = format!("{i:05}_{stem}_mask.png");
        io::save_image(&derived, &out.join(&image_name))?;
        io::save_mask(&mask, &out.join(&mask_name))?;
        items.push(ManifestItem {
            image: image_name.into(),
            mask: mask_name.into(),
        });
    }
    let manifest = DatasetManifest::new(
        format!("{}_{name_suffix}", base.name),
        base.split,
        base.class_table.clone(),
        cue_set,
        items,
        provenance.to_string(),
        seed,
        out.to_path_buf(),
    )?;
    save_manifest(&manifest, &out.join("manifest.json"))?;
    Ok(manifest)
}

fn decompose_color(args: ColorArgs, provenance: &str) -> Result<()> {
    let keep = parse_keep(&args.keep)?;
    let mode = parse_gray(&args.gray)?;
    let base = load_dataset(&args.manifest)?;
    let cue_set = CueSet::new(
        base.cue_set.s,
        base.cue_set.t && (base.cue_set.v && keep.v || base.cue_set.hs && keep.hs),
        base.cue_set.v && keep.v,
        base.cue_set.hs && keep.hs,
    )?;
    // Every resolved parameter lands in the provenance, after the verbatim
    // command line.
    let provenance = format!(
        "{provenance} | keep={} gray={:?} neutral_v={}",
        args.keep, mode, args.neutral_v
    );
    derive_per_image(
        &base,
        &args.out,
        cue_set,
        &format!("color_{}", args.keep),
        &provenance,
        base.rng_seed,
        |_, img| project_cues_with(&img, keep, mode, args.neutral_v),
    )?;
    Ok(())
}

fn decompose_texture(args: TextureArgs, provenance: &str) -> Result<()> {
    let base = load_dataset(&args.manifest)?;
    let cfg = TextureConfig {
        min_pixels: args.min_pixels,
        seeds: match args.seeds {
            Some(n) => SeedCount::Fixed(n),
            None => SeedCount::PerMegapixel(args.seeds_per_mpx),
        },
        out_size: args.out_size,
        balance_fraction: args.balance_fraction,
        cache_pool: args.cache_pool.clone(),
        ..TextureConfig::default()
    };
    let provenance = format!(
        "{provenance} | min_pixels={} seeds={:?} out_size={:?} balance_fraction={} seed={}",
        cfg.min_pixels, cfg.seeds, cfg.out_size, cfg.balance_fraction, args.seed
    );
    generate_texture_dataset(&base, &cfg, &args.out, args.seed, &provenance)?;
    Ok(())
}

fn decompose_eed(args: EedArgs, provenance: &str) -> Result<()> {
    let params = DiffusionParams {
        lambda: args.lambda,
        kernel_size: args.kernel,
        sigma: args.sigma,
        rho: args.rho.unwrap_or(args.sigma),
        tau: args.tau,
        h: 1.0,
        n_steps: args.steps,
        alpha: args.alpha,
        beta: args.beta,
        diffusivity: match args.diffusivity.as_str() {
            "pm" => Diffusivity::PeronaMalik,
            "exp" => Diffusivity::WeickertExp,
            other => {
                return Err(CueError::InvalidParameter(format!(
                    "--diffusivity must be pm or exp, got {other}"
                )))
            }
        },
        force_tau: args.force_tau,
    };
    params.validate()?;
    let base = load_dataset(&args.manifest)?;
    let cue_set = CueSet::new(true, false, base.cue_set.v, base.cue_set.hs)?;
    let out = args.out.clone();
    let snapshot_every = args.snapshot_every;
    let refresh = args.refresh;
    ensure_dir(&out)?;
    let provenance = format!(
        "{provenance} | lambda={} kernel={} sigma={} rho={} tau={} h={} steps={} alpha={} \
         beta={} diffusivity={} refresh={refresh}",
        params.lambda,
        params.kernel_size,
        params.sigma,
        params.rho,
        params.tau,
        params.h,
        params.n_steps,
        params.alpha,
        params.beta,
        args.diffusivity,
    );
    derive_per_image(
        &base,
        &args.out,
        cue_set,
        "eed",
        &provenance,
        base.rng_seed,
        |i, img| {
            let snap_dir = out.clone();
            run_eed_with_observer(&img, &params, refresh, |step, state| {
                if let Some(every) = snapshot_every {
                    if every > 0 && step % every == 0 {
                        let path = snap_dir.join(format!("{i:05}_step{step:06}.pfm"));
                        io::write_pfm(state, &path)?;
                    }
                }
                Ok(())
            })
        },
    )?;
    Ok(())
}

#[derive(serde::Serialize)]
struct ExpertIndex {
    k: usize,
    stems: Vec<String>,
}

fn train_color(args: TrainColorArgs, provenance: &str) -> Result<()> {
    let keep = parse_keep(&args.keep)?;
    let mode = parse_gray(&args.gray)?;
    let base = load_dataset(&args.manifest)?;
    let k = base.k();
    let spec = parse_spec(&args.spec, k, args.init_scale)?;
    if spec.input_dim() != keep.feature_dim() {
        return Err(CueError::DimMismatch {
            expected: keep.feature_dim(),
            got: spec.input_dim(),
        });
    }
    if spec.output_dim() != k {
        return Err(CueError::InvalidParameter(format!(
            "--spec must end in the class count {k}, got {}",
            spec.output_dim()
        )));
    }

    let items: Vec<_> = (0..base.items.len())
        .map(|i| base.load_item(i))
        .collect::<Result<_>>()?;
    let ds = build_pixel_dataset(&items, keep, mode, args.samples_per_image, args.seed)?;

    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        rng_seed: args.seed,
        lr_schedule: match args.schedule.as_str() {
            "const" => LrSchedule::Const,
            "poly" => LrSchedule::Poly,
            other => {
                return Err(CueError::InvalidParameter(format!(
                    "--schedule must be const or poly, got {other}"
                )))
            }
        },
        ..TrainConfig::default()
    };
    let (model, log) = train_color_expert(&ds.features, &ds.labels, ds.feature_dim, &spec, &cfg)?;

    ensure_dir(&args.out)?;
    save_model(&model, &args.out.join("model.json"))?;
    let log_path = args.out.join("training_log.json");
    std::fs::write(
        &log_path,
        serde_json::to_string_pretty(&log)? + "\n",
    )
    .map_err(|e| CueError::io(&log_path, e))?;

    let mut stems = Vec::new();
    for (i, (img, _)) in items.iter().enumerate() {
        let (field, pred) = predict_dense(&model, img, keep, mode)?;
        // Keyed by the manifest item's image stem so `evaluate` and `fuse`
        // can find the files again.
        let stem = item_stem(&base, i);
        save_softmax_stack(&field, &args.out, &stem)?;
        io::save_mask(&pred, &args.out.join(format!("{stem}_pred.png")))?;
        stems.push(stem);
    }
    let index = ExpertIndex { k, stems };
    let provenance = format!(
        "{provenance} | keep={} gray={} spec={:?} epochs={} batch={} lr={} schedule={} \
         samples_per_image={} init_scale={} seed={}",
        args.keep,
        args.gray,
        spec.layer_widths,
        args.epochs,
        args.batch_size,
        args.lr,
        args.schedule,
        args.samples_per_image,
        args.init_scale,
        args.seed
    );
    let index_path = args.out.join("index.json");
    std::fs::write(
        &index_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "k": index.k,
            "stems": index.stems,
            "provenance": provenance,
            "seed": args.seed,
        }))? + "\n",
    )
    .map_err(|e| CueError::io(&index_path, e))?;
    Ok(())
}

#[derive(serde::Serialize)]
struct EvaluationReport {
    n_items: usize,
    k: usize,
    boundary_radius: usize,
    miou: f64,
    per_class_iou: Vec<Option<f64>>,
    accuracy: AccuracyTriple,
    coverage_csv: String,
}

#[derive(serde::Serialize)]
struct AccuracyTriple {
    interior: Option<f64>,
    boundary: Option<f64>,
    overall: Option<f64>,
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let base = load_dataset(&args.manifest)?;
    let k = base.k();
    let mut cm = ConfusionMatrix::new(k);
    let (mut n_int, mut ok_int, mut n_bnd, mut ok_bnd) = (0u64, 0u64, 0u64, 0u64);
    let mut segments_all = Vec::new();
    let mut recalls_all = Vec::new();

    for i in 0..base.items.len() {
        let (_, gt) = base.load_item(i)?;
        let stem = item_stem(&base, i);
        let pred_path = args.pred.join(format!("{stem}_pred.png"));
        let pred = io::load_mask(&pred_path)?;
        accumulate(&mut cm, &pred, &gt)?;

        let bm = boundary_mask(&gt, args.boundary_radius);
        let acc = split_accuracy(&pred, &gt, &bm)?;
        // Re-derive the raw counts so the dataset-level triple is exact.
        ok_int += acc
            .interior
            .map(|f| (f * acc.n_interior as f64).round() as u64)
            .unwrap_or(0);
        ok_bnd += acc
            .boundary
            .map(|f| (f * acc.n_boundary as f64).round() as u64)
            .unwrap_or(0);
        n_int += acc.n_interior;
        n_bnd += acc.n_boundary;

        for seg in gt_segments(&gt) {
            recalls_all.push(segment_recall(&seg, &pred));
            segments_all.push(seg);
        }
    }

    let bins = coverage_histogram(&segments_all, &recalls_all, &args.coverage_bins)?;
    // Referenced by file name so report bundles stay relocatable and
    // reruns byte-identical.
    let coverage_path = args.report.with_extension("coverage.csv");
    let coverage_name = coverage_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "coverage.csv".into());
    let mut csv = String::from("bin_lower,bin_upper,count,mean_recall,median_recall\n");
    for b in &bins {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            b.lower,
            b.upper.map(|u| u.to_string()).unwrap_or_default(),
            b.count,
            b.mean_recall.map(|v| format!("{v:.6}")).unwrap_or_default(),
            b.median_recall
                .map(|v| format!("{v:.6}"))
                .unwrap_or_default(),
        ));
    }
    std::fs::write(&coverage_path, csv).map_err(|e| CueError::io(&coverage_path, e))?;

    let frac = |ok: u64, n: u64| if n == 0 { None } else { Some(ok as f64 / n as f64) };
    let report = EvaluationReport {
        n_items: base.items.len(),
        k,
        boundary_radius: args.boundary_radius,
        miou: miou(&cm)?,
        per_class_iou: class_iou(&cm),
        accuracy: AccuracyTriple {
            interior: frac(ok_int, n_int),
            boundary: frac(ok_bnd, n_bnd),
            overall: frac(ok_int + ok_bnd, n_int + n_bnd),
        },
        coverage_csv: coverage_name,
    };
    std::fs::write(
        &args.report,
        serde_json::to_string_pretty(&report)? + "\n",
    )
    .map_err(|e| CueError::io(&args.report, e))?;
    Ok(())
}

fn load_expert_index(dir: &Path) -> Result<(usize, Vec<String>)> {
    let path = dir.join("index.json");
    if !path.exists() {
        return Err(CueError::MissingInput(format!(
            "expert index {} (run train-color first)",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CueError::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let k = value["k"]
        .as_u64()
        .ok_or_else(|| CueError::Schema("expert index lacks k".into()))? as usize;
    let stems = value["stems"]
        .as_array()
        .ok_or_else(|| CueError::Schema("expert index lacks stems".into()))?
        .iter()
        .map(|s| s.as_str().unwrap_or_default().to_string())
        .collect();
    Ok((k, stems))
}

fn fuse(args: FuseArgs, provenance: &str) -> Result<()> {
    let base = load_dataset(&args.gt)?;
    let (ka, stems_a) = load_expert_index(&args.expert_a)?;
    let (kb, stems_b) = load_expert_index(&args.expert_b)?;
    if ka != kb || ka != base.k() {
        return Err(CueError::ShapeMismatch(format!(
            "class counts disagree: expert A {ka}, expert B {kb}, manifest {}",
            base.k()
        )));
    }
    if stems_a.len() != base.items.len() || stems_b.len() != base.items.len() {
        return Err(CueError::ShapeMismatch(
            "expert indices and manifest disagree on the item count".into(),
        ));
    }

    let mut fields_a = Vec::new();
    let mut fields_b = Vec::new();
    let mut gts = Vec::new();
    for i in 0..base.items.len() {
        fields_a.push(load_softmax_stack(&args.expert_a, &stems_a[i], ka)?);
        fields_b.push(load_softmax_stack(&args.expert_b, &stems_b[i], kb)?);
        gts.push(base.load_item(i)?.1);
    }

    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        rng_seed: args.seed,
        ..TrainConfig::default()
    };
    let task = FusionTask {
        expert_a: &fields_a,
        expert_b: &fields_b,
        gts: &gts,
    };
    let model = train_fusion(&task, &args.hidden, args.window3, &cfg)?;

    ensure_dir(&args.out)?;
    save_model(&model.gate, &args.out.join("gate.json"))?;
    for i in 0..base.items.len() {
        let (fused, weights) = fuse_predict(&model, &fields_a[i], &fields_b[i])?;
        let stem = item_stem(&base, i);
        io::save_mask(&fused, &args.out.join(format!("{stem}_fused.png")))?;

        let (h, w) = (fields_a[i].height, fields_a[i].width);
        let heat = RasterImage::new(ColorSpace::Gray, h, w, weights.clone())?;
        io::save_image(&heat, &args.out.join(format!("{stem}_weight.png")))?;
        let mut csv = String::new();
        for row in weights.chunks(w) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.8}")).collect();
            csv.push_str(&line.join(","));
            csv.push('\n');
        }
        let csv_path = args.out.join(format!("{stem}_weight.csv"));
        std::fs::write(&csv_path, csv).map_err(|e| CueError::io(&csv_path, e))?;
    }
    let provenance = format!(
        "{provenance} | epochs={} batch={} lr={} hidden={:?} window3={} seed={}",
        args.epochs, args.batch_size, args.lr, args.hidden, args.window3, args.seed
    );
    let summary_path = args.out.join("fusion.json");
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "k": ka,
            "items": base.items.len(),
            "window3": args.window3,
            "provenance": provenance,
            "seed": args.seed,
        }))? + "\n",
    )
    .map_err(|e| CueError::io(&summary_path, e))?;
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let mut reports = Vec::new();
    for path in &args.evaluations {
        if !path.exists() {
            return Err(CueError::MissingInput(format!("{}", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CueError::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        reports.push((path.clone(), value));
    }

    // Side-by-side per-class IoU table.
    let k = reports
        .iter()
        .map(|(_, v)| v["per_class_iou"].as_array().map_or(0, Vec::len))
        .max()
        .unwrap_or(0);
    let mut csv = String::from("class");
    for (path, _) in &reports {
        csv.push_str(&format!(
            ",{}",
            path.file_stem().unwrap_or_default().to_string_lossy()
        ));
    }
    csv.push('\n');
    for c in 0..k {
        csv.push_str(&format!("{c}"));
        for (_, v) in &reports {
            let cell = v["per_class_iou"]
                .as_array()
                .and_then(|a| a.get(c))
                .and_then(|x| x.as_f64())
                .map(|x| format!("{x:.6}"))
                .unwrap_or_default();
            csv.push_str(&format!(",{cell}"));
        }
        csv.push('\n');
    }
    let iou_path = args.out.join("per_class_iou.csv");
    std::fs::write(&iou_path, csv).map_err(|e| CueError::io(&iou_path, e))?;

    // Accuracy triple table.
    let mut acc = String::from("run,miou,interior,boundary,overall\n");
    for (path, v) in &reports {
        let get = |key: &str| {
            v["accuracy"][key]
                .as_f64()
                .map(|x| format!("{x:.6}"))
                .unwrap_or_default()
        };
        acc.push_str(&format!(
            "{},{},{},{},{}\n",
            path.file_stem().unwrap_or_default().to_string_lossy(),
            v["miou"].as_f64().map(|x| format!("{x:.6}")).unwrap_or_default(),
            get("interior"),
            get("boundary"),
            get("overall"),
        ));
    }
    let acc_path = args.out.join("accuracy.csv");
    std::fs::write(&acc_path, acc).map_err(|e| CueError::io(&acc_path, e))?;

    // Copy coverage CSVs and heatmaps into the bundle. Coverage files are
    // named relative to their evaluation JSON.
    let mut copied = Vec::new();
    for (path, v) in &reports {
        if let Some(cov) = v["coverage_csv"].as_str() {
            let src = path.parent().unwrap_or(Path::new(".")).join(cov);
            if src.exists() {
                let name = format!(
                    "coverage_{}.csv",
                    path.file_stem().unwrap_or_default().to_string_lossy()
                );
                let dst = args.out.join(&name);
                std::fs::copy(&src, &dst).map_err(|e| CueError::io(&src, e))?;
                copied.push(name);
            }
        }
    }
    for hm in &args.heatmaps {
        if !hm.exists() {
            return Err(CueError::MissingInput(format!("{}", hm.display())));
        }
        let name = hm
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "heatmap.png".into());
        let dst = args.out.join(&name);
        std::fs::copy(hm, &dst).map_err(|e| CueError::io(hm, e))?;
        copied.push(name);
    }

    let index_path = args.out.join("index.json");
    std::fs::write(
        &index_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "evaluations": args
                .evaluations
                .iter()
                .map(|p| p.to_string_lossy().into_owned())
                .collect::<Vec<_>>(),
            "per_class_iou": "per_class_iou.csv",
            "accuracy": "accuracy.csv",
            "artifacts": copied,
        }))? + "\n",
    )
    .map_err(|e| CueError::io(&index_path, e))?;
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<()> {
    let manifest = load_dataset(&args.manifest)?;
    let mut totals: BTreeMap<u8, u64> = BTreeMap::new();
    let mut ignore_total = 0u64;
    let mut item_reports = Vec::new();
    let mut all_valid = true;
    for i in 0..manifest.items.len() {
        let (_, mask) = manifest.load_item(i)?;
        let report = validate_mask(&mask, &manifest.class_table);
        all_valid &= report.is_valid();
        for (&class, &count) in &report.counts {
            *totals.entry(class).or_insert(0) += count;
        }
        ignore_total += report.ignore_count;
        item_reports.push(report);
    }
    eprintln!(
        "{}: {} items, {} classes, {} labeled px, {} ignored px",
        manifest.name,
        manifest.items.len(),
        manifest.k(),
        totals.values().sum::<u64>(),
        ignore_total
    );
    if let Some(path) = &args.report {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&serde_json::json!({
                "name": manifest.name,
                "valid": all_valid,
                "class_totals": totals,
                "ignore_total": ignore_total,
                "items": item_reports,
            }))? + "\n",
        )
        .map_err(|e| CueError::io(path, e))?;
    }
    if all_valid {
        Ok(())
    } else {
        Err(CueError::Schema("manifest contains invalid masks".into()))
    }
}
