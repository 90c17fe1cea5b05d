mod array;
mod error;
mod manifest;
mod render;

use array::{read_array, write_array, Array};
use clap::{Args, Parser, Subcommand};
use error::{CliError, Result};
use manifest::RunManifest;
use num_complex::Complex64;
use prtk_core::field::{forward_intensities, ComplexImage, DiffractionPattern};
use prtk_core::hio::{solve_hio, HioConfig};
use prtk_core::metrics::{best_symmetry_alignment, fourier_residual};
use prtk_core::optimize::{solve_pixel_least_squares, solve_sidgp, RecoveryResult, SidgpConfig};
use prtk_core::simulate::{simulate_crystal, simulate_toy, CrystalParams, ShapeKind, ToyParams};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "prtk", about = "Fourier phase retrieval toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a test instance (ground truth + measurement).
    Simulate {
        #[command(subcommand)]
        family: SimulateFamily,
    },
    /// Hybrid input-output baseline.
    Hio(HioArgs),
    /// Generative-prior solver driven by a JSON config.
    Sidgp(SidgpArgs),
    /// Pixel-parametrized least squares (negative baseline).
    BaselineLs(BaselineArgs),
    /// Symmetry-adjusted comparison of a recovery against ground truth.
    Eval(EvalArgs),
    /// Render magnitude and phase PNGs from an array file.
    Render(RenderArgs),
}

#[derive(Subcommand)]
enum SimulateFamily {
    Crystal(CrystalArgs),
    Toy(ToyArgs),
}

#[derive(Args)]
struct CrystalArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 128)]
    frame: usize,
    #[arg(long, default_value_t = 110)]
    region: usize,
    #[arg(long, default_value_t = 2)]
    num_defects: usize,
    /// Use the concave (star polygon) shape family instead of convex hulls.
    #[arg(long)]
    concave: bool,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    frame: usize,
    #[arg(long, default_value_t = 4)]
    max_offset: usize,
}

#[derive(Args)]
struct HioArgs {
    #[arg(long)]
    meas: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 0.04)]
    tau: f64,
    #[arg(long)]
    real: bool,
    #[arg(long)]
    nonneg: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SidgpArgs {
    #[arg(long)]
    meas: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    meas: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3000)]
    iters: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    rec: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out_mag: PathBuf,
    #[arg(long)]
    out_phase: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with exit 0; everything else
            // is a usage problem -> stderr, exit 1
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { family } => match family {
            SimulateFamily::Crystal(a) => cmd_simulate_crystal(a),
            SimulateFamily::Toy(a) => cmd_simulate_toy(a),
        },
        Command::Hio(a) => cmd_hio(a),
        Command::Sidgp(a) => cmd_sidgp(a),
        Command::BaselineLs(a) => cmd_baseline(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Render(a) => cmd_render(a),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))
}

fn image_to_array(img: &ComplexImage) -> Array {
    Array::Complex {
        rows: img.side(),
        cols: img.side(),
        data: img.data().to_vec(),
    }
}

fn array_to_image(arr: &Array, path: &Path) -> Result<ComplexImage> {
    if arr.rows() != arr.cols() {
        return Err(CliError::Validation(format!(
            "{}: expected a square array, got {}x{}",
            path.display(),
            arr.rows(),
            arr.cols()
        )));
    }
    let data = match arr {
        Array::Complex { data, .. } => data.clone(),
        Array::Real { data, .. } => data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    };
    Ok(ComplexImage::new(arr.rows(), data)?)
}

fn read_measurement(path: &Path) -> Result<DiffractionPattern> {
    let arr = read_array(path)?;
    if arr.rows() != arr.cols() {
        return Err(CliError::Validation(format!(
            "{}: measurement must be square",
            path.display()
        )));
    }
    match arr {
        Array::Real { rows, data, .. } => Ok(DiffractionPattern::new(rows, data)?),
        Array::Complex { .. } => Err(CliError::Validation(format!(
            "{}: measurement must be a real array",
            path.display()
        ))),
    }
}

fn write_trace_csv(path: &Path, result: &RecoveryResult) -> Result<()> {
    let mut csv = String::from("iter,loss,elapsed_ms\n");
    for e in &result.trace {
        csv.push_str(&format!("{},{:.17e},{:.3}\n", e.iter, e.loss, e.elapsed_ms));
    }
    array::atomic_write(path, csv.as_bytes())
}

/// Recovery array + CSV trace + manifest: the common tail of every solver run.
fn write_run_outputs(
    out: &Path,
    result: &RecoveryResult,
    config: serde_json::Value,
    rng_seed: u64,
    meas: &Path,
) -> Result<()> {
    ensure_dir(out)?;
    let rec_path = out.join("recovery.prtk");
    let trace_path = out.join("trace.csv");
    let manifest_path = out.join("manifest.json");
    write_array(&rec_path, &image_to_array(&result.image))?;
    write_trace_csv(&trace_path, result)?;
    let mut paths = BTreeMap::new();
    paths.insert("measurement".into(), meas.display().to_string());
    paths.insert("recovery".into(), rec_path.display().to_string());
    paths.insert("trace".into(), trace_path.display().to_string());
    let mut metrics = BTreeMap::new();
    metrics.insert("fourier_residual".into(), result.fourier_residual);
    if let Some(last) = result.trace.last() {
        metrics.insert("best_loss".into(), last.loss);
    }
    RunManifest {
        solver: result.solver.clone(),
        config,
        rng_seed,
        paths,
        wall_ms: result.wall_ms,
        metrics,
    }
    .write(&manifest_path)
}

fn json_echo<T: serde::Serialize>(value: &T) -> Result<serde_json::Value> {
    serde_json::to_value(value).map_err(|e| CliError::Validation(format!("config echo: {e}")))
}

fn write_instance(
    out: &Path,
    tag: &str,
    seed: u64,
    config: serde_json::Value,
    image: &ComplexImage,
    pattern: &DiffractionPattern,
) -> Result<()> {
    ensure_dir(out)?;
    let gt_path = out.join("ground_truth.prtk");
    let meas_path = out.join("measurement.prtk");
    write_array(&gt_path, &image_to_array(image))?;
    write_array(
        &meas_path,
        &Array::Real {
            rows: pattern.side(),
            cols: pattern.side(),
            data: pattern.data().to_vec(),
        },
    )?;
    let mut paths = BTreeMap::new();
    paths.insert("ground_truth".into(), gt_path.display().to_string());
    paths.insert("measurement".into(), meas_path.display().to_string());
    RunManifest {
        solver: tag.into(),
        config,
        rng_seed: seed,
        paths,
        wall_ms: 0.0,
        metrics: BTreeMap::new(),
    }
    .write(&out.join("manifest.json"))
}

fn cmd_simulate_crystal(a: CrystalArgs) -> Result<()> {
    let params = CrystalParams {
        frame: a.frame,
        region: a.region,
        num_defects: a.num_defects,
        shape_kind: if a.concave {
            ShapeKind::Concave
        } else {
            ShapeKind::Convex
        },
        rng_seed: a.seed,
        ..CrystalParams::default()
    };
    let (image, pattern) = simulate_crystal(&params)?;
    write_instance(
        &a.out,
        "simulate-crystal",
        a.seed,
        json_echo(&params)?,
        &image,
        &pattern,
    )
}

fn cmd_simulate_toy(a: ToyArgs) -> Result<()> {
    let params = ToyParams {
        frame: a.frame,
        max_offset: a.max_offset,
        rng_seed: a.seed,
        ..ToyParams::default()
    };
    let (image, pattern) = simulate_toy(&params)?;
    write_instance(
        &a.out,
        "simulate-toy",
        a.seed,
        json_echo(&params)?,
        &image,
        &pattern,
    )
}

fn cmd_hio(a: HioArgs) -> Result<()> {
    let y = read_measurement(&a.meas)?;
    let cfg = HioConfig {
        beta: a.beta,
        iterations: a.iters,
        tau: a.tau,
        support: true,
        real: a.real,
        nonneg: a.nonneg,
        rng_seed: a.seed,
    };
    let result = solve_hio(&y, a.n, &cfg)?;
    write_run_outputs(&a.out, &result, json_echo(&cfg)?, a.seed, &a.meas)
}

fn cmd_sidgp(a: SidgpArgs) -> Result<()> {
    let y = read_measurement(&a.meas)?;
    let bytes = std::fs::read(&a.config)
        .map_err(CliError::io(format!("reading {}", a.config.display())))?;
    let cfg: SidgpConfig = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Validation(format!("{}: {e}", a.config.display())))?;
    let result = solve_sidgp(&y, &cfg)?;
    write_run_outputs(&a.out, &result, json_echo(&cfg)?, cfg.rng_seed, &a.meas)
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    let y = read_measurement(&a.meas)?;
    let result = solve_pixel_least_squares(&y, a.n, a.iters, a.lr, a.seed)?;
    let config = serde_json::json!({
        "n": a.n, "iterations": a.iters, "lr": a.lr, "rng_seed": a.seed,
    });
    write_run_outputs(&a.out, &result, config, a.seed, &a.meas)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let gt = array_to_image(&read_array(&a.gt)?, &a.gt)?;
    let rec = array_to_image(&read_array(&a.rec)?, &a.rec)?;
    if gt.side() != rec.side() {
        return Err(CliError::Validation(format!(
            "size mismatch: ground truth {} vs recovery {}",
            gt.side(),
            rec.side()
        )));
    }
    // evaluate on the measurement frame the simulators use: m = 2n
    let m = 2 * gt.side();
    let alignment = best_symmetry_alignment(&gt, &rec, m)?;
    let y = forward_intensities(&gt, m)?;
    let residual = fourier_residual(&y, &rec)?;
    if a.json {
        let record = serde_json::json!({
            "rel_error": alignment.rel_error,
            "shift_row": alignment.shift_row,
            "shift_col": alignment.shift_col,
            "flipped": alignment.flipped,
            "phase": alignment.phase,
            "fourier_residual": residual,
        });
        println!("{}", serde_json::to_string_pretty(&record).unwrap());
    } else {
        println!(
            "rel_error {:.6}  shift ({}, {})  flipped {}  phase {:.6}  fourier_residual {:.6}",
            alignment.rel_error,
            alignment.shift_row,
            alignment.shift_col,
            alignment.flipped,
            alignment.phase,
            residual,
        );
    }
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let img = array_to_image(&read_array(&a.input)?, &a.input)?;
    render::render_png(&img, &a.out_mag, &a.out_phase)
}
