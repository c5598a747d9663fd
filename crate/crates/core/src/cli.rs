//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 when the library rejects
//! the request. Every random draw derives from `--seed`, so repeated
//! invocations write identical bytes (the `wall_time_s` column of `bench`
//! is a measurement and the only exception).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::ai::AiConfig;
use crate::alloc::{load_profile, validate_profile, Allocator, Architecture, LayerSpec, ProfileFile};
use crate::bench::{bench_generation, BenchConfig, BenchScheme};
use crate::conv::{half_width, sample_conv, CenterMode};
use crate::density::{expected_density_curve, monte_carlo_curve};
use crate::error::{domain, Error, Result};
use crate::exec::Exec;
use crate::io::{write_kernel, write_matrix};
use crate::isometry::{critical_constants, spectrum_sweep, Activation, MlpSpec, Scheme, SweepConfig};
use crate::rng;
use crate::sampler::{sample_rectangular, AngleMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "sparse-ortho",
    version,
    about = "Sparse exactly-orthogonal initializations from random Givens rotations"
)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a sparse orthogonal matrix.
    Sample(SampleArgs),
    /// Sample a sparse delta-orthogonal convolution kernel.
    SampleConv(SampleConvArgs),
    /// Expected (and optionally empirical) density against rotation count.
    DensityCurve(DensityCurveArgs),
    /// Per-layer densities for an architecture, or validation of a profile.
    Allocate(AllocateArgs),
    /// Jacobian singular-value statistics of sparse MLPs.
    Spectrum(SpectrumArgs),
    /// Generation time and orthogonality of EOI against AI.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Rows.
    #[arg(long)]
    n: usize,
    /// Columns; defaults to `n`.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    density: f64,
    /// Fixed rotation angle in radians instead of uniform angles.
    #[arg(long)]
    angle: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma_w: f64,
}

#[derive(Debug, Args)]
struct SampleConvArgs {
    #[arg(long)]
    c_out: usize,
    #[arg(long)]
    c_in: usize,
    /// Half width; the kernel is (2k+1)x(2k+1).
    #[arg(long, conflicts_with = "kernel_size", required_unless_present = "kernel_size")]
    k: Option<usize>,
    /// Odd kernel width.
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long)]
    density: f64,
    /// `equal`, `sqrt`, or an explicit center density.
    #[arg(long, default_value = "equal")]
    center: String,
}

#[derive(Debug, Args)]
struct DensityCurveArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    t_max: usize,
    /// Monte Carlo trials per point; 0 leaves the empirical columns empty.
    #[arg(long, default_value_t = 0)]
    mc_trials: usize,
}

#[derive(Debug, Args)]
struct AllocateArgs {
    /// Architecture JSON.
    #[arg(long)]
    arch: PathBuf,
    /// Global density budget.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long, default_value = "erk")]
    method: String,
    /// Validate this profile file instead of computing one.
    #[arg(long)]
    validate: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    #[arg(long, default_value_t = 7)]
    depth: usize,
    #[arg(long, default_value_t = 100)]
    width: usize,
    #[arg(long, value_delimiter = ',', default_value = "tanh")]
    activations: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "base,eoi,ai")]
    schemes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "uniform,erk")]
    allocators: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.9,0.95,0.97")]
    sparsities: Vec<f64>,
    /// Seeds `seed, seed+1, …` to run.
    #[arg(long, default_value_t = 1)]
    num_seeds: u64,
    #[arg(long, default_value_t = 8)]
    inputs: usize,
    /// `default` or `deep_tanh`.
    #[arg(long, default_value = "default")]
    constants: String,
    #[arg(long)]
    sigma_w: Option<f64>,
    #[arg(long)]
    sigma_b: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    ai_iters: usize,
    #[arg(long, default_value_t = 0.01)]
    ai_step: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.0625")]
    densities: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "eoi,ai")]
    schemes: Vec<String>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 10_000)]
    ai_iters: usize,
    #[arg(long, default_value_t = 0.01)]
    ai_step: f64,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let bytes = match &cli.command {
        Command::Sample(a) => sample(cli, a)?,
        Command::SampleConv(a) => sample_conv_cmd(cli, a)?,
        Command::DensityCurve(a) => density_curve(cli, a)?,
        Command::Allocate(a) => allocate(cli, a)?,
        Command::Spectrum(a) => spectrum(cli, a)?,
        Command::Bench(a) => bench(cli, a)?,
    };
    match &cli.out {
        Some(path) => fs::write(path, bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn rows_out<T: Serialize>(format: Format, rows: &[T]) -> Result<Vec<u8>> {
    match format {
        Format::Csv => to_csv(rows),
        Format::Json => to_json(rows),
    }
}

fn parse_list<T: std::str::FromStr<Err = Error>>(items: &[String]) -> Result<Vec<T>> {
    items.iter().map(|s| s.trim().parse()).collect()
}

#[derive(Serialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    nnz: usize,
    density: f64,
    rotations: usize,
    sigma_w: f64,
    entries: Vec<(usize, usize, f64)>,
}

fn sample(cli: &Cli, a: &SampleArgs) -> Result<Vec<u8>> {
    let mode = match a.angle {
        Some(phi) => AngleMode::fixed(phi)?,
        None => AngleMode::Uniform,
    };
    let mut rng = rng::seeded(cli.seed);
    let s = sample_rectangular(a.n, a.m.unwrap_or(a.n), a.density, mode, &mut rng)?;
    if s.below_floor {
        eprintln!(
            "warning: density {} is below the identity floor; returning the identity",
            a.density
        );
    }
    let m = s.matrix.scale_weights(a.sigma_w)?;
    match cli.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_matrix(&m, &mut buf)?;
            Ok(buf)
        }
        Format::Json => to_json(&MatrixJson {
            rows: m.rows(),
            cols: m.cols(),
            nnz: m.nnz(),
            density: m.density(),
            rotations: s.rotations,
            sigma_w: m.sigma_w(),
            entries: m.entries(),
        }),
    }
}

fn parse_center(s: &str) -> Result<CenterMode> {
    match s {
        "equal" => Ok(CenterMode::Equal),
        "sqrt" => Ok(CenterMode::Sqrt),
        other => other
            .parse::<f64>()
            .map(CenterMode::Custom)
            .map_err(|_| Error::Domain(format!("unknown center mode '{other}'"))),
    }
}

#[derive(Serialize)]
struct KernelJson {
    c_out: usize,
    c_in: usize,
    k: usize,
    center_density: f64,
    mask: Vec<(usize, usize, usize, usize)>,
    weights: Vec<(usize, usize, f64)>,
}

fn sample_conv_cmd(cli: &Cli, a: &SampleConvArgs) -> Result<Vec<u8>> {
    let k = match (a.k, a.kernel_size) {
        (Some(k), _) => k,
        (None, Some(size)) => half_width(size)?,
        (None, None) => return domain("either --k or --kernel-size is required"),
    };
    let center = parse_center(&a.center)?;
    let mut rng = rng::seeded(cli.seed);
    let kern = sample_conv(a.c_out, a.c_in, k, a.density, center, &mut rng)?;
    match cli.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_kernel(&kern, &mut buf)?;
            Ok(buf)
        }
        Format::Json => to_json(&KernelJson {
            c_out: kern.c_out(),
            c_in: kern.c_in(),
            k,
            center_density: kern.center_density(),
            mask: kern
                .mask()
                .indexed_iter()
                .filter(|(_, &m)| m)
                .map(|(idx, _)| idx)
                .collect(),
            weights: kern.center().entries(),
        }),
    }
}

#[derive(Serialize)]
struct CurveRow {
    t: usize,
    expected_density: f64,
    mc_mean: Option<f64>,
    mc_stderr: Option<f64>,
}

fn density_curve(cli: &Cli, a: &DensityCurveArgs) -> Result<Vec<u8>> {
    let model = expected_density_curve(a.n, a.t_max)?;
    let mc = if a.mc_trials > 0 {
        let mut rng = rng::seeded(cli.seed);
        Some(monte_carlo_curve(a.n, a.t_max, a.mc_trials, &mut rng, Exec::default())?)
    } else {
        None
    };
    let rows: Vec<CurveRow> = model
        .iter()
        .enumerate()
        .map(|(t, &e)| CurveRow {
            t,
            expected_density: e,
            mc_mean: mc.as_ref().map(|m| m[t].mean),
            mc_stderr: mc.as_ref().map(|m| m[t].stderr),
        })
        .collect();
    rows_out(cli.format, &rows)
}

#[derive(Serialize)]
struct AllocRow {
    layer: usize,
    kind: &'static str,
    param_count: usize,
    density: f64,
}

#[derive(Serialize)]
struct DiagnosticsRow {
    budget_residual: f64,
    out_of_range: String,
}

fn allocate(cli: &Cli, a: &AllocateArgs) -> Result<Vec<u8>> {
    let arch = Architecture::from_json(&fs::read_to_string(&a.arch)?)?;
    if let Some(path) = &a.validate {
        let profile = load_profile(&fs::read_to_string(path)?, &arch)?;
        let d = a.density.unwrap_or(profile.budget);
        let diag = validate_profile(&profile, &arch, d)?;
        return match cli.format {
            Format::Json => to_json(&diag),
            Format::Csv => to_csv(&[DiagnosticsRow {
                budget_residual: diag.budget_residual,
                out_of_range: diag
                    .out_of_range
                    .iter()
                    .map(|l| l.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            }]),
        };
    }
    let d = a
        .density
        .ok_or_else(|| Error::Domain("--density is required unless --validate is given".into()))?;
    let method: Allocator = a.method.parse()?;
    let profile = method.profile(&arch, d)?;
    match cli.format {
        Format::Json => to_json::<ProfileFile>(&profile.to_file()),
        Format::Csv => {
            let rows: Vec<AllocRow> = arch
                .layers
                .iter()
                .zip(&profile.densities)
                .enumerate()
                .map(|(layer, (spec, &density))| AllocRow {
                    layer,
                    kind: match spec {
                        LayerSpec::Fc { .. } => "fc",
                        LayerSpec::Conv { .. } => "conv",
                    },
                    param_count: spec.param_count(),
                    density,
                })
                .collect();
            to_csv(&rows)
        }
    }
}

fn spectrum(cli: &Cli, a: &SpectrumArgs) -> Result<Vec<u8>> {
    let (mut sigma_w, mut sigma_b) = critical_constants(&a.constants)?;
    if let Some(w) = a.sigma_w {
        sigma_w = w;
    }
    if let Some(b) = a.sigma_b {
        sigma_b = b;
    }
    let activations: Vec<Activation> = parse_list(&a.activations)?;
    let mut rows = Vec::new();
    for activation in activations {
        let mut spec = MlpSpec::new(a.depth, a.width, activation);
        spec.sigma_w = sigma_w;
        spec.sigma_b = sigma_b;
        let cfg = SweepConfig {
            spec,
            allocators: parse_list(&a.allocators)?,
            schemes: parse_list::<Scheme>(&a.schemes)?,
            sparsities: a.sparsities.clone(),
            seeds: (0..a.num_seeds).map(|i| cli.seed.wrapping_add(i)).collect(),
            inputs_per_seed: a.inputs,
            ai: AiConfig {
                iters: a.ai_iters,
                step: a.ai_step,
            },
        };
        rows.extend(spectrum_sweep(&cfg, Exec::default())?);
    }
    rows_out(cli.format, &rows)
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<Vec<u8>> {
    let cfg = BenchConfig {
        sizes: a.sizes.clone(),
        densities: a.densities.clone(),
        schemes: parse_list::<BenchScheme>(&a.schemes)?,
        repeats: a.repeats,
        ai: AiConfig {
            iters: a.ai_iters,
            step: a.ai_step,
        },
        seed: cli.seed,
    };
    let report = bench_generation(&cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    rows_out(cli.format, &report.records)
}
