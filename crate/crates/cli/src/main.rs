//! `otex` — patch-based texture synthesis from the command line.
//!
//! Exit codes: 0 success, 2 usage error (bad paths or parameters),
//! 3 runtime or numerical error.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use otex_core::gram::{gram_synthesize, GramConfig};
use otex_core::image::{load_png, save_png, ImageTensor};
use otex_core::innovation::{innovation_capacity, tile_map, tile_map_render};
use otex_core::synthesis::{synthesize, Heuristic, SynthesisConfig};

const MANIFEST_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "otex",
    version,
    about = "Texture synthesis by patch matching: nearest-neighbor, bidirectional similarity, entropic optimal transport, and a random-filter gram baseline"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a texture from an exemplar PNG.
    ///
    /// Writes OUTPUT plus a `.manifest` (resolved parameters; replayable via
    /// --from-manifest) and a `.trace.csv` next to it.
    Synth(SynthArgs),
    /// Innovation capacity of a synthesis against its exemplar.
    Ic(IcArgs),
    /// Render the tile map of a synthesis against its exemplar as a PNG.
    Tilemap(TilemapArgs),
}

#[derive(Args, Clone)]
struct SynthArgs {
    /// Exemplar PNG (omit when replaying a manifest).
    input: Option<PathBuf>,
    /// Output PNG (omit when replaying a manifest).
    output: Option<PathBuf>,
    /// Match heuristic: nn, bs, ot, or gram.
    #[arg(long, default_value = "ot")]
    method: String,
    /// Entropic regularizer for the ot method.
    #[arg(long, default_value_t = 0.001)]
    eps: f64,
    /// Forward/backward balance for the bs method.
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    /// Patch side in pixels.
    #[arg(long, default_value_t = 4)]
    patch: usize,
    /// Number of resolution scales.
    #[arg(long, default_value_t = 4)]
    scales: usize,
    /// Synthesis iterations per scale.
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// Fraction of patches sampled per iteration.
    #[arg(long, default_value_t = 0.35)]
    subsample: f64,
    /// Weight of the coarser scale blended into each iterate.
    #[arg(long, default_value_t = 0.5)]
    blend: f32,
    /// Sinkhorn sweeps per ot match.
    #[arg(long, default_value_t = 10)]
    sweeps: usize,
    /// Random filters for the gram method.
    #[arg(long, default_value_t = 256)]
    filters: usize,
    /// Optimizer steps per scale for the gram method.
    #[arg(long, default_value_t = 500)]
    steps: usize,
    /// RNG seed; equal seeds reproduce outputs bit-exactly.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output width (defaults to the exemplar's).
    #[arg(long)]
    width: Option<usize>,
    /// Output height (defaults to the exemplar's).
    #[arg(long)]
    height: Option<usize>,
    /// Memory budget in bytes for one cost block.
    #[arg(long, default_value_t = 64 << 20)]
    slice_bytes: usize,
    /// Re-run an earlier synthesis from its manifest.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    /// Dump per-sweep Sinkhorn marginal residuals as CSV (ot only).
    #[arg(long)]
    debug_residuals: Option<PathBuf>,
}

#[derive(Args)]
struct IcArgs {
    /// Exemplar PNG.
    exemplar: PathBuf,
    /// Synthesis PNG.
    synthesis: PathBuf,
    /// Maximum scale index J; scales J..0 are evaluated.
    #[arg(long, default_value_t = 4)]
    scales: usize,
    /// Patch side the metric is computed with.
    #[arg(long, default_value_t = 4)]
    patch: usize,
    /// Also write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Memory budget in bytes for one cost block.
    #[arg(long, default_value_t = 64 << 20)]
    slice_bytes: usize,
}

#[derive(Args)]
struct TilemapArgs {
    /// Exemplar PNG.
    exemplar: PathBuf,
    /// Synthesis PNG.
    synthesis: PathBuf,
    /// Output PNG for the rendered map.
    output: PathBuf,
    /// Patch side of the nearest-neighbor field.
    #[arg(long, default_value_t = 4)]
    patch: usize,
    /// Memory budget in bytes for one cost block.
    #[arg(long, default_value_t = 64 << 20)]
    slice_bytes: usize,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
    fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Ic(args) => cmd_ic(args),
        Cmd::Tilemap(args) => cmd_tilemap(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_input(path: &Path) -> Result<ImageTensor, CliError> {
    load_png(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn cmd_synth(mut args: SynthArgs) -> Result<(), CliError> {
    if let Some(manifest_path) = args.from_manifest.clone() {
        args = synth_args_from_manifest(&manifest_path)?;
    }
    let input = args
        .input
        .clone()
        .ok_or_else(|| CliError::usage("missing exemplar path (or --from-manifest)"))?;
    let output = args
        .output
        .clone()
        .ok_or_else(|| CliError::usage("missing output path (or --from-manifest)"))?;
    let exemplar = load_input(&input)?;

    let method = args.method.to_ascii_lowercase();
    let started = Instant::now();
    let mut residual_csv: Option<String> = None;
    let (image, trace_csv) = match method.as_str() {
        "nn" | "bs" | "ot" => {
            let heuristic: Heuristic = method.parse().map_err(|e| CliError::usage(format!("{e}")))?;
            let cfg = SynthesisConfig {
                patch_side: args.patch,
                num_scales: args.scales,
                iters_per_scale: args.iters,
                heuristic,
                epsilon: args.eps,
                alpha: args.alpha,
                subsample_fraction: args.subsample,
                slice_bytes: args.slice_bytes,
                coarse_blend_weight: args.blend,
                sinkhorn_sweeps: args.sweeps,
                seed: args.seed,
                out_height: args.height,
                out_width: args.width,
                trace_residuals: args.debug_residuals.is_some() && heuristic == Heuristic::Ot,
                ..Default::default()
            };
            cfg.validate(&exemplar)
                .map_err(|e| CliError::usage(format!("{e}")))?;
            let (image, trace) =
                synthesize(&exemplar, &cfg).map_err(|e| CliError::runtime(format!("{e}")))?;
            let mut csv = Vec::new();
            trace
                .write_csv(&mut csv)
                .map_err(|e| CliError::runtime(format!("{e}")))?;
            if args.debug_residuals.is_some() {
                let mut buf = Vec::new();
                trace
                    .write_residuals_csv(&mut buf)
                    .map_err(|e| CliError::runtime(format!("{e}")))?;
                residual_csv = Some(String::from_utf8(buf).expect("ascii csv"));
            }
            (image, String::from_utf8(csv).expect("ascii csv"))
        }
        "gram" => {
            let cfg = GramConfig {
                patch_side: args.patch,
                filters: args.filters,
                steps_per_scale: args.steps,
                num_scales: args.scales,
                seed: args.seed,
                slice_bytes: args.slice_bytes,
                out_height: args.height,
                out_width: args.width,
            };
            let (image, trace) =
                gram_synthesize(&exemplar, &cfg).map_err(|e| CliError::runtime(format!("{e}")))?;
            let mut csv = Vec::new();
            trace
                .write_csv(&mut csv)
                .map_err(|e| CliError::runtime(format!("{e}")))?;
            (image, String::from_utf8(csv).expect("ascii csv"))
        }
        other => return Err(CliError::usage(format!("unknown method '{other}'"))),
    };
    let wall = started.elapsed().as_secs_f64();

    let mut m = manifest::Manifest::new();
    m.push("format_version", MANIFEST_VERSION);
    m.push("command", "synth");
    m.push("method", &method);
    m.push("input", input.display());
    m.push("output", output.display());
    m.push_opt("out_height", args.height);
    m.push_opt("out_width", args.width);
    m.push("patch_side", args.patch);
    m.push("num_scales", args.scales);
    m.push("iters_per_scale", args.iters);
    m.push("epsilon", args.eps);
    m.push("alpha", args.alpha);
    m.push("subsample_fraction", args.subsample);
    m.push("coarse_blend_weight", args.blend);
    m.push("sinkhorn_sweeps", args.sweeps);
    m.push("filters", args.filters);
    m.push("steps_per_scale", args.steps);
    m.push("slice_bytes", args.slice_bytes);
    m.push("seed", args.seed);
    m.push("software_version", env!("CARGO_PKG_VERSION"));
    m.push("wall_seconds", wall);

    // All outputs are ready in memory; write them last and clean up whatever
    // landed if any write fails.
    let manifest_path = output.with_extension("manifest");
    let trace_path = output.with_extension("trace.csv");
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<(), CliError> {
        save_png(&image, &output)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", output.display())))?;
        written.push(output.clone());
        m.write(&manifest_path).map_err(|e| {
            CliError::runtime(format!("cannot write {}: {e}", manifest_path.display()))
        })?;
        written.push(manifest_path.clone());
        fs::write(&trace_path, &trace_csv).map_err(|e| {
            CliError::runtime(format!("cannot write {}: {e}", trace_path.display()))
        })?;
        written.push(trace_path.clone());
        if let (Some(path), Some(csv)) = (&args.debug_residuals, &residual_csv) {
            fs::write(path, csv)
                .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
            written.push(path.clone());
        }
        Ok(())
    })();
    if result.is_err() {
        for p in written {
            let _ = fs::remove_file(p);
        }
    }
    result
}

fn synth_args_from_manifest(path: &Path) -> Result<SynthArgs, CliError> {
    let map = manifest::read(path).map_err(CliError::Usage)?;
    let command: String = manifest::get_parsed(&map, "command").map_err(CliError::Usage)?;
    if command != "synth" {
        return Err(CliError::usage(format!(
            "manifest command '{command}' is not synth"
        )));
    }
    let get = |k: &str| manifest::get_parsed::<String>(&map, k).map_err(CliError::Usage);
    Ok(SynthArgs {
        input: Some(PathBuf::from(get("input")?)),
        output: Some(PathBuf::from(get("output")?)),
        method: get("method")?,
        eps: manifest::get_parsed(&map, "epsilon").map_err(CliError::Usage)?,
        alpha: manifest::get_parsed(&map, "alpha").map_err(CliError::Usage)?,
        patch: manifest::get_parsed(&map, "patch_side").map_err(CliError::Usage)?,
        scales: manifest::get_parsed(&map, "num_scales").map_err(CliError::Usage)?,
        iters: manifest::get_parsed(&map, "iters_per_scale").map_err(CliError::Usage)?,
        subsample: manifest::get_parsed(&map, "subsample_fraction").map_err(CliError::Usage)?,
        blend: manifest::get_parsed(&map, "coarse_blend_weight").map_err(CliError::Usage)?,
        sweeps: manifest::get_parsed(&map, "sinkhorn_sweeps").map_err(CliError::Usage)?,
        filters: manifest::get_parsed(&map, "filters").map_err(CliError::Usage)?,
        steps: manifest::get_parsed(&map, "steps_per_scale").map_err(CliError::Usage)?,
        seed: manifest::get_parsed(&map, "seed").map_err(CliError::Usage)?,
        width: manifest::get_parsed_opt(&map, "out_width").map_err(CliError::Usage)?,
        height: manifest::get_parsed_opt(&map, "out_height").map_err(CliError::Usage)?,
        slice_bytes: manifest::get_parsed(&map, "slice_bytes").map_err(CliError::Usage)?,
        from_manifest: None,
        debug_residuals: None,
    })
}

fn cmd_ic(args: IcArgs) -> Result<(), CliError> {
    let x = load_input(&args.exemplar)?;
    let y = load_input(&args.synthesis)?;
    let report = innovation_capacity(&x, &y, args.scales, args.patch, args.slice_bytes)
        .map_err(|e| CliError::usage(format!("{e}")))?;
    println!(
        "innovation capacity (patch_side={}, scales={}..0)",
        report.patch_side, report.max_scale
    );
    for level in &report.levels {
        println!("scale {}: {:.6}", level.scale, level.value);
    }
    println!("mean: {:.6}", report.mean);
    if let Some(csv_path) = &args.csv {
        let mut csv = String::from("scale,ic\n");
        for level in &report.levels {
            csv.push_str(&format!("{},{}\n", level.scale, level.value));
        }
        csv.push_str(&format!("mean,{}\n", report.mean));
        fs::write(csv_path, csv).map_err(|e| {
            CliError::runtime(format!("cannot write {}: {e}", csv_path.display()))
        })?;
    }
    Ok(())
}

fn cmd_tilemap(args: TilemapArgs) -> Result<(), CliError> {
    let x = load_input(&args.exemplar)?;
    let y = load_input(&args.synthesis)?;
    let tm = tile_map(&x, &y, args.patch, args.slice_bytes)
        .map_err(|e| CliError::usage(format!("{e}")))?;
    let rendered = tile_map_render(&tm);
    save_png(&rendered, &args.output).map_err(|e| {
        CliError::runtime(format!("cannot write {}: {e}", args.output.display()))
    })?;
    Ok(())
}
