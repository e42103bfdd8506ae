//! Command-line entry points: `synth`, `map`, `vectorize`, `eval`, `report`.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use crate::eval::{evaluate, transfer_ratio, EvalConfig, EvalReport, EvalSample};
use crate::grid::{ConfusionMatrix, IntensityPrior};
use crate::io;
use crate::pipeline::{self, grid_config_for_sequence, run_mapping};
use crate::synthetic::{generate_synthetic, SyntheticSceneSpec};
use crate::vector::MapClass;
use crate::vectorize::{VectorizerConfig, VectorizerRegistry};
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "semgrid",
    about = "LiDAR + camera semantic grid mapping, vectorization and Chamfer-AP evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth
    Synth(SynthArgs),
    /// Build semantic maps from a sequence manifest
    Map(MapArgs),
    /// Convert semantic map snapshots into vector maps
    Vectorize(VectorizeArgs),
    /// Evaluate predicted vector maps against ground truth
    Eval(EvalArgs),
    /// Cross-dataset transfer ratio from two evaluation results
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    cameras: usize,
    #[arg(long, default_value_t = 20)]
    frames: usize,
    /// Symmetric mask noise rate in [0, 1); 0 disables noise
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.2)]
    cell_size: f64,
    #[arg(long, default_value_t = 32)]
    lidar_channels: usize,
    #[arg(long, default_value_t = 0.35)]
    azimuth_step_deg: f64,
    #[arg(long, default_value_t = 120.0)]
    road_length: f64,
}

#[derive(Args)]
struct MapArgs {
    /// Sequence manifest path
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for snapshots
    #[arg(long)]
    out: PathBuf,
    /// Override the grid cell size in meters
    #[arg(long)]
    cell_size: Option<f64>,
    /// Confusion matrix JSON; identity when omitted
    #[arg(long)]
    confusion: Option<PathBuf>,
    /// Intensity prior JSON (B x C confusion-style table); uniform when omitted
    #[arg(long)]
    intensity_prior: Option<PathBuf>,
    /// Skip writing per-frame ego snapshots
    #[arg(long, default_value_t = false)]
    no_snapshots: bool,
}

#[derive(Args)]
struct VectorizeArgs {
    /// Directory of ego snapshot .pgm files
    #[arg(long)]
    maps: PathBuf,
    /// Output directory for vector map JSON files
    #[arg(long)]
    out: PathBuf,
    /// Registered vectorizer to run
    #[arg(long, default_value = "baseline")]
    vectorizer: String,
    #[arg(long, default_value_t = 20)]
    min_component_cells: usize,
    #[arg(long, default_value_t = 0.3)]
    simplify_tolerance: f64,
    #[arg(long, default_value_t = 20)]
    points_n: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted vector map JSON file or directory
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth vector map JSON file or directory
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated Chamfer thresholds in meters
    #[arg(long, default_value = "0.5,1.0,1.5")]
    thresholds: String,
    /// Square point distances inside the chamfer sum
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    squared_chamfer: bool,
    /// Also write the report as JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Cross-dataset evaluation report JSON
    #[arg(long, conflicts_with = "cross_map")]
    cross_report: Option<PathBuf>,
    /// Same-dataset evaluation report JSON
    #[arg(long, conflicts_with = "same_map")]
    same_report: Option<PathBuf>,
    /// Cross-dataset mAP given directly
    #[arg(long)]
    cross_map: Option<f64>,
    /// Same-dataset mAP given directly
    #[arg(long)]
    same_map: Option<f64>,
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

/// Parse and dispatch. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not usage errors.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    pipeline::init_thread_pool();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Map(args) => cmd_map(args),
        Command::Vectorize(args) => cmd_vectorize(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}

fn cmd_synth(args: SynthArgs) -> CliResult {
    let mut spec = SyntheticSceneSpec {
        seed: args.seed,
        camera_count: args.cameras,
        frames: args.frames,
        cell_size: args.cell_size,
        lidar_channels: args.lidar_channels,
        lidar_azimuth_step_deg: args.azimuth_step_deg,
        road_length: args.road_length,
        ..SyntheticSceneSpec::default()
    };
    if args.noise > 0.0 {
        spec = spec.with_symmetric_noise(args.noise);
    }
    let out = generate_synthetic(&spec, &args.out)?;
    println!("manifest: {}", out.manifest_path.display());
    println!("ground-truth vector map: {}", out.gt_vector_world_path.display());
    println!("ground-truth raster: {}", out.gt_raster_path.display());
    println!("confusion matrix: {}", out.confusion_path.display());
    println!("per-frame ground truth: {} files", out.gt_frame_paths.len());
    Ok(())
}

fn cmd_map(args: MapArgs) -> CliResult {
    let seq = io::load_sequence(&args.manifest)?;
    let grid_config = grid_config_for_sequence(&seq, args.cell_size)?;
    let num_classes = seq.num_classes().max(2);
    let confusion = match &args.confusion {
        Some(path) => io::confusion_file::read_confusion(path)?,
        None => ConfusionMatrix::identity(num_classes),
    };
    let intensity_prior = match &args.intensity_prior {
        Some(path) => {
            let cm = io::confusion_file::read_confusion(path)?;
            IntensityPrior::new(cm.entries().to_vec(), cm.num_classes(), num_classes)?
        }
        None => IntensityPrior::column_uniform(grid_config.intensity_bins, num_classes),
    };

    std::fs::create_dir_all(&args.out)?;
    let maps_dir = args.out.join("maps");
    let mut failures: Vec<String> = Vec::new();
    let (grid, summary) = run_mapping(&seq, grid_config, &confusion, &intensity_prior, |frame| {
        println!(
            "frame {:>4}  points integrated {:>8}  coverage {:>5.1}%  associate {:>7.2} ms  integrate {:>7.2} ms",
            frame.index,
            frame.stats.integrated,
            frame.coverage * 100.0,
            frame.association_ms,
            frame.integration_ms
        );
        if !args.no_snapshots {
            let path = maps_dir.join(format!("{:06}.pgm", frame.index));
            if let Err(err) = io::snapshot::write_semantic_map(&path, &frame.ego_map) {
                failures.push(err.to_string());
            }
        }
    })?;
    if let Some(first) = failures.first() {
        return Err(first.clone().into());
    }

    let world = grid.render();
    io::snapshot::write_world_raster(&args.out.join("world.pgm"), &world, &seq.manifest.palette)?;

    println!(
        "mapped {} frames, {} of {} points integrated",
        summary.frames, summary.integrated_points, summary.total_points
    );
    println!(
        "mean per-frame time: associate {:.2} ms, integrate {:.2} ms",
        summary.mean_association_ms(),
        summary.mean_integration_ms()
    );
    Ok(())
}

fn cmd_vectorize(args: VectorizeArgs) -> CliResult {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&args.maps)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "pgm").unwrap_or(false))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(format!("no .pgm snapshots in {}", args.maps.display()).into());
    }

    std::fs::create_dir_all(&args.out)?;
    let mut registry: Option<VectorizerRegistry> = None;
    for path in &entries {
        let map = io::snapshot::read_semantic_map(path)?;
        let registry = registry.get_or_insert_with(|| {
            let config = VectorizerConfig {
                min_component_cells: args.min_component_cells,
                simplify_tolerance: args.simplify_tolerance,
                output_points_n: args.points_n,
                ..VectorizerConfig::default()
            }
            .map_classes_from_palette(&map.palette);
            VectorizerRegistry::with_baseline(config)
        });
        let vectorizer = registry.get(&args.vectorizer)?;
        let vm = vectorizer.vectorize(&map);
        let out_path = args
            .out
            .join(path.file_stem().unwrap_or_default())
            .with_extension("json");
        io::vector_map_file::write_vector_map(&out_path, &vm)?;
        println!(
            "{} -> {} ({} instances)",
            path.display(),
            out_path.display(),
            vm.instances.len()
        );
    }
    Ok(())
}

fn collect_samples(pred: &Path, gt: &Path) -> Result<Vec<EvalSample>, Box<dyn std::error::Error>> {
    if pred.is_file() {
        let sample = EvalSample {
            sample_id: pred
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "sample".to_string()),
            predictions: io::vector_map_file::read_vector_map(pred)?,
            ground_truth: io::vector_map_file::read_vector_map(gt)?,
        };
        return Ok(vec![sample]);
    }

    let mut names: Vec<String> = std::fs::read_dir(pred)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().map(|x| x == "json").unwrap_or(false))
        .filter_map(|e| e.path().file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(format!("no .json vector maps in {}", pred.display()).into());
    }
    let mut samples = Vec::new();
    for name in names {
        let gt_path = gt.join(&name);
        if !gt_path.exists() {
            return Err(format!("no ground truth for {name} in {}", gt.display()).into());
        }
        samples.push(EvalSample {
            sample_id: name.trim_end_matches(".json").to_string(),
            predictions: io::vector_map_file::read_vector_map(&pred.join(&name))?,
            ground_truth: io::vector_map_file::read_vector_map(&gt_path)?,
        });
    }
    Ok(samples)
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let thresholds: Vec<f64> = args
        .thresholds
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bad --thresholds: {e}"))?;
    if thresholds.is_empty() || thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err("thresholds must be positive and ascending".into());
    }
    let config = EvalConfig {
        thresholds,
        squared_chamfer: args.squared_chamfer,
        classes: MapClass::ALL.to_vec(),
        ..EvalConfig::default()
    };
    let samples = collect_samples(&args.pred, &args.gt)?;
    let report = evaluate(&samples, &config);
    print!("{}", report.to_table());
    println!("mAP: {:.4}", report.mean_ap);
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
        println!("report written to {}", out.display());
    }
    Ok(())
}

/// Transfer-ratio table over two mAPs, cross-dataset over same-dataset.
pub fn transfer_table(map_cross: f64, map_same: f64) -> Result<String, crate::eval::EvalError> {
    let ratio = transfer_ratio(map_cross, map_same)?;
    let mut out = String::new();
    out.push_str(&format!(
        "{:<18}{:>10}{:>18}\n",
        "setting", "mAP", "mAP ratio (%)"
    ));
    out.push_str(&format!("{:<18}{:>10.2}{:>18.1}\n", "cross-dataset", map_cross, ratio));
    out.push_str(&format!("{:<18}{:>10.2}{:>18}\n", "same-dataset", map_same, ""));
    Ok(out)
}

fn cmd_report(args: ReportArgs) -> CliResult {
    let read_map = |path: &PathBuf| -> Result<f64, Box<dyn std::error::Error>> {
        let text = std::fs::read_to_string(path)?;
        let report: EvalReport = serde_json::from_str(&text)?;
        Ok(report.mean_ap)
    };
    let cross = match (&args.cross_map, &args.cross_report) {
        (Some(v), _) => *v,
        (None, Some(path)) => read_map(path)?,
        (None, None) => return Err("provide --cross-map or --cross-report".into()),
    };
    let same = match (&args.same_map, &args.same_report) {
        (Some(v), _) => *v,
        (None, Some(path)) => read_map(path)?,
        (None, None) => return Err("provide --same-map or --same-report".into()),
    };
    print!("{}", transfer_table(cross, same)?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run(["semgrid", "frobnicate"]), 1);
    }

    #[test]
    fn missing_args_are_usage_errors() {
        assert_eq!(run(["semgrid", "eval"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["semgrid", "--help"]), 0);
    }

    #[test]
    fn report_from_literal_maps() {
        assert_eq!(
            run([
                "semgrid",
                "report",
                "--cross-map",
                "12.2",
                "--same-map",
                "49.0"
            ]),
            0
        );
    }

    #[test]
    fn report_with_zero_baseline_is_a_data_error() {
        assert_eq!(
            run([
                "semgrid",
                "report",
                "--cross-map",
                "12.2",
                "--same-map",
                "0.0"
            ]),
            2
        );
    }

    #[test]
    fn transfer_table_reproduces_reported_ratios() {
        let table = transfer_table(12.2, 49.0).unwrap();
        assert!(table.contains("24.9"), "table:\n{table}");
        let table = transfer_table(16.2, 48.8).unwrap();
        assert!(table.contains("33.2"), "table:\n{table}");
    }

    #[test]
    fn eval_missing_pred_dir_is_a_data_error() {
        assert_eq!(
            run([
                "semgrid",
                "eval",
                "--pred",
                "/nonexistent/preds",
                "--gt",
                "/nonexistent/gts"
            ]),
            2
        );
    }
}
