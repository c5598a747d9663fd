//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints its own result line, in order, on a quiet machine.

use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use rand::Rng;
use rand_distr::StandardNormal;

use sparse_ortho::ai::{ai_gradient, ai_loss, ai_optimize};
use sparse_ortho::alloc::{erk_profile, uniform_profile, Allocator, Architecture, LayerSpec};
use sparse_ortho::bench::{bench_generation, BenchConfig, BenchScheme};
use sparse_ortho::conv::{conv_forward_circular, mask_count, sample_conv, CenterMode};
use sparse_ortho::density::{
    expected_density, expected_density_curve, inflection_point, monte_carlo_curve,
    row_nnz_distribution,
};
use sparse_ortho::isometry::{
    build_sparse_mlp, spectrum, spectrum_sweep, Activation, MlpSpec, Scheme, SpectrumRow,
    SweepConfig,
};
use sparse_ortho::linalg::{haar_orthogonal, orthogonality_score};
use sparse_ortho::rng::{seeded, stream};
use sparse_ortho::{sample_square, AngleMode, Exec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn density_model() -> Outcome {
    let start = Instant::now();
    let n = 100;
    let t_max = 2000;
    let dp = expected_density_curve(n, t_max).map_err(|e| e.to_string())?;
    let mc = monte_carlo_curve(n, t_max, 200, &mut seeded(2024), Exec::default())
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut misses = 0;
    for (t, (p, est)) in dp.iter().zip(&mc).enumerate() {
        let tol = f64::max(0.01, 3.0 * est.stderr);
        let gap = (p - est.mean).abs();
        worst = worst.max(gap);
        if gap > tol {
            misses += 1;
            eprintln!("  t={t}: dp {p} vs mc {} (tol {tol})", est.mean);
        }
    }
    let knee = inflection_point(&dp).ok_or("empty curve")?;
    let secs = start.elapsed().as_secs_f64();
    check(
        misses == 0 && (250..=300).contains(&knee) && secs < 30.0,
        format!("max |dp-mc| {worst:.4}, {misses} misses, inflection t={knee}, {secs:.2}s"),
    )
}

fn exact_orthogonality() -> Outcome {
    let start = Instant::now();
    let d = 0.0625;
    let mut worst = 0.0f64;
    let mut eoi_256 = None;
    for (i, n) in [16, 64, 256, 1024, 2048].into_iter().enumerate() {
        let m = sample_square(n, d, AngleMode::Uniform, &mut stream(7, i as u64))
            .map_err(|e| e.to_string())?
            .matrix;
        let score = m.orthogonality_score();
        worst = worst.max(score);
        if n == 256 {
            eoi_256 = Some(m);
        }
    }
    let eoi = eoi_256.expect("n = 256 sampled");
    let mask = eoi.support_mask();
    let w = haar_orthogonal(256, 256, &mut seeded(8));
    let ai = ai_optimize(&w, &mask, 10_000, 0.01).map_err(|e| e.to_string())?;
    let ai_score = orthogonality_score(&ai.weights);
    let eoi_score = eoi.orthogonality_score();
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-8 && ai_score >= 100.0 * eoi_score && secs < 300.0,
        format!(
            "max EOI score {worst:.2e}; n=256 EOI {eoi_score:.2e} vs AI {ai_score:.2e} ({:?}); {secs:.1}s",
            ai.status
        ),
    )
}

fn speed_ratio() -> Outcome {
    let cfg = |scheme, repeats| BenchConfig {
        sizes: vec![256],
        densities: vec![0.0625],
        schemes: vec![scheme],
        repeats,
        ai: Default::default(),
        seed: 3,
    };
    let eoi = bench_generation(&cfg(BenchScheme::Eoi, 5)).map_err(|e| e.to_string())?;
    let ai = bench_generation(&cfg(BenchScheme::Ai, 1)).map_err(|e| e.to_string())?;
    let (te, ta) = (eoi.records[0].wall_time_s, ai.records[0].wall_time_s);
    check(
        ta >= 10.0 * te,
        format!("EOI median {te:.3e}s, AI {ta:.3e}s, ratio {:.0}x", ta / te),
    )
}

fn recurrence_values() -> Outcome {
    let dist = row_nnz_distribution(3, 1).map_err(|e| e.to_string())?;
    let exact = dist.probs() == [1.0 / 3.0, 2.0 / 3.0, 0.0];
    let e = expected_density(3, 1).map_err(|e| e.to_string())?;
    check(
        exact && (e - 5.0 / 9.0).abs() <= 1e-15,
        format!("p(1,·) = {:?}, E[dens] = {e}", dist.probs()),
    )
}

fn erk_example() -> Outcome {
    let arch = Architecture::new(vec![
        LayerSpec::Fc { input: 10, output: 100 },
        LayerSpec::Fc { input: 100, output: 100 },
    ])
    .map_err(|e| e.to_string())?;
    let p = erk_profile(&arch, 0.1).map_err(|e| e.to_string())?;
    let want = [0.11 * 1100.0 / 310.0, 0.02 * 1100.0 / 310.0];
    let gap = p
        .densities
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let budget = (p.realized_density() - 0.1).abs() / 0.1;
    check(
        gap < 1e-12 && budget < 1e-12,
        format!("densities {:?}, max gap {gap:.1e}, budget residual {budget:.1e}", p.densities),
    )
}

fn linear_isometry() -> Outcome {
    let spec = MlpSpec::new(7, 100, Activation::Linear);
    let arch = spec.architecture();
    let mut worst = 0.0f64;
    for (i, sparsity) in [0.0, 0.5, 0.9, 0.95, 0.97].into_iter().enumerate() {
        let profile = uniform_profile(&arch, 1.0 - sparsity).map_err(|e| e.to_string())?;
        let net = build_sparse_mlp(&spec, &profile, Scheme::Eoi, &Default::default(), &mut seeded(i as u64))
            .map_err(|e| e.to_string())?;
        let x = DVector::from_fn(100, |r, _| (r as f64 * 0.37).sin());
        let stats = spectrum(&net.jacobian(&x)).map_err(|e| e.to_string())?;
        for s in &stats.spectrum {
            worst = worst.max((s - 1.0).abs());
        }
    }
    check(worst < 1e-6, format!("max |σ - 1| = {worst:.2e}"))
}

fn seed_mean(rows: &[SpectrumRow], scheme: Scheme, allocator: &str, sparsity: f64) -> f64 {
    let picked: Vec<f64> = rows
        .iter()
        .filter(|r| r.scheme == scheme && r.allocator == allocator && r.sparsity == sparsity)
        .map(|r| r.mean_sv)
        .collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}

fn tanh_ordering() -> Outcome {
    let start = Instant::now();
    let mut cfg = SweepConfig::new(MlpSpec::new(7, 100, Activation::Tanh));
    cfg.schemes = vec![Scheme::Base, Scheme::Eoi];
    cfg.sparsities = vec![0.0, 0.95];
    cfg.seeds = (0..5).collect();
    let rows = spectrum_sweep(&cfg, Exec::default()).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut notes = Vec::new();
    for alloc in [Allocator::Uniform, Allocator::Erk] {
        let name = alloc.to_string();
        let dense = seed_mean(&rows, Scheme::Base, &name, 0.0);
        let base = seed_mean(&rows, Scheme::Base, &name, 0.95);
        let eoi = seed_mean(&rows, Scheme::Eoi, &name, 0.95);
        ok &= eoi > base && (eoi - dense).abs() <= 0.25 * dense;
        notes.push(format!("{name}: eoi {eoi:.4} base {base:.4} dense {dense:.4}"));
    }
    let secs = start.elapsed().as_secs_f64();
    check(ok && secs < 600.0, format!("{}; {secs:.1}s", notes.join(", ")))
}

fn conv_norms() -> Outcome {
    let mut kernels = 0;
    let mut worst = 0.0f64;
    let mut bad_masks = 0;
    let mut rng = seeded(31);
    'grid: for (c_out, c_in) in [(4, 4), (8, 4), (6, 3), (16, 16), (12, 5)] {
        for k in [1, 2] {
            for d in [0.05, 0.1, 0.25, 0.5, 0.8] {
                if kernels == 50 {
                    break 'grid;
                }
                let kern = sample_conv(c_out, c_in, k, d, CenterMode::Equal, &mut rng)
                    .map_err(|e| e.to_string())?;
                let total = c_out * c_in * (2 * k + 1).pow(2);
                if kern.mask_population() != mask_count(d, total) {
                    bad_masks += 1;
                }
                for _ in 0..20 {
                    let x = Array3::from_shape_simple_fn((c_in, 9, 9), || rng.sample(StandardNormal));
                    let y = conv_forward_circular(&kern, &x).map_err(|e| e.to_string())?;
                    let ratio = y.iter().map(|v| v * v).sum::<f64>().sqrt()
                        / x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    worst = worst.max((ratio - 1.0).abs());
                }
                kernels += 1;
            }
        }
    }
    check(
        kernels == 50 && worst < 1e-6 && bad_masks == 0,
        format!("{kernels} kernels, max norm deviation {worst:.2e}, {bad_masks} wrong mask counts"),
    )
}

fn finite_differences() -> Outcome {
    // Jacobian of a tanh net against central differences of the forward pass.
    let mut spec = MlpSpec::new(4, 24, Activation::Tanh);
    spec.sigma_w = 1.0247;
    spec.sigma_b = 0.00448;
    let profile = uniform_profile(&spec.architecture(), 0.5).map_err(|e| e.to_string())?;
    let net = build_sparse_mlp(&spec, &profile, Scheme::Eoi, &Default::default(), &mut seeded(5))
        .map_err(|e| e.to_string())?;
    let mut rng = seeded(6);
    let x: DVector<f64> = DVector::from_fn(24, |_, _| rng.sample(StandardNormal));
    let jac = net.jacobian(&x);
    let h = 1e-6;
    let mut jac_err = 0.0f64;
    for c in 0..24 {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += h;
        xm[c] -= h;
        let col = (net.forward(&xp) - net.forward(&xm)) / (2.0 * h);
        for r in 0..24 {
            jac_err = jac_err.max((col[r] - jac[(r, c)]).abs());
        }
    }

    // AI gradient on an 8x8 masked instance.
    let w = DMatrix::from_fn(8, 8, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.4);
    let mask = DMatrix::from_fn(8, 8, |_, _| rng.random_bool(0.6));
    let grad = ai_gradient(&w, &mask).map_err(|e| e.to_string())?;
    let eps = 1e-6;
    let mut grad_err = 0.0f64;
    for idx in 0..64 {
        let mut wp = w.clone();
        let mut wm = w.clone();
        wp[idx] += eps;
        wm[idx] -= eps;
        let fd = if mask[idx] {
            (ai_loss(&wp, &mask).unwrap() - ai_loss(&wm, &mask).unwrap()) / (2.0 * eps)
        } else {
            0.0
        };
        let rel = (grad[idx] - fd).abs() / grad[idx].abs().max(fd.abs()).max(1.0);
        grad_err = grad_err.max(rel);
    }
    check(
        jac_err < 1e-5 && grad_err < 1e-5,
        format!("jacobian ||J - J_fd||_inf {jac_err:.2e}, AI gradient rel err {grad_err:.2e}"),
    )
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sparse-ortho"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

/// Drops the timing column so that bench rows can be compared.
fn without_wall_time(csv: &[u8]) -> String {
    let text = String::from_utf8_lossy(csv);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = header.iter().position(|h| *h == "wall_time_s");
    text.lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|(i, _)| Some(*i) != col)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn cli_determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("sparse-ortho-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let arch = dir.join("arch.json");
    std::fs::write(
        &arch,
        r#"{"layers":[{"kind":"fc","in":10,"out":100},{"kind":"conv","c_in":3,"c_out":16,"k":1}]}"#,
    )
    .map_err(|e| e.to_string())?;
    let arch = arch.to_str().ok_or("non-utf8 temp path")?;

    let invocations: Vec<Vec<&str>> = vec![
        vec!["--seed", "11", "sample", "--n", "64", "--density", "0.2"],
        vec!["--seed", "11", "sample", "--n", "12", "--m", "30", "--density", "0.3", "--sigma-w", "1.5"],
        vec!["--seed", "11", "--format", "json", "sample", "--n", "9", "--density", "0.5"],
        vec!["--seed", "11", "sample-conv", "--c-out", "8", "--c-in", "4", "--k", "1", "--density", "0.2"],
        vec!["--seed", "11", "density-curve", "--n", "50", "--t-max", "300", "--mc-trials", "20"],
        vec!["--seed", "11", "allocate", "--arch", arch, "--density", "0.1", "--method", "erk"],
        vec![
            "--seed", "11", "spectrum", "--depth", "3", "--width", "16", "--activations", "tanh,linear",
            "--sparsities", "0,0.9", "--ai-iters", "50", "--inputs", "2",
        ],
    ];
    let mut checked = 0;
    for args in &invocations {
        let a = run_cli(args)?;
        let b = run_cli(args)?;
        if a != b {
            return Err(format!("{args:?} differs between runs"));
        }
        checked += 1;
    }
    let bench = [
        "--seed", "11", "bench", "--sizes", "16,32", "--repeats", "2", "--ai-iters", "50",
    ];
    let a = without_wall_time(&run_cli(&bench)?);
    let b = without_wall_time(&run_cli(&bench)?);
    let _ = std::fs::remove_dir_all(&dir);
    check(
        a == b,
        format!("{checked} invocations byte-identical; bench identical apart from wall_time_s"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("density model vs Monte Carlo", density_model),
        ("exact orthogonality", exact_orthogonality),
        ("EOI vs AI generation speed", speed_ratio),
        ("hand-derived recurrence values", recurrence_values),
        ("ERK worked example", erk_example),
        ("linear-chain isometry", linear_isometry),
        ("tanh singular-value ordering", tanh_ordering),
        ("conv norm preservation", conv_norms),
        ("finite-difference checks", finite_differences),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
