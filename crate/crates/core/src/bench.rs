//! Generation-time benchmark of EOI against the AI baseline.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::ai::{ai_optimize, AiConfig};
use crate::error::{domain, Error, Result};
use crate::isometry::base_layer;
use crate::linalg;
use crate::rng::{self, SeededRng};
use crate::sampler::{sample_square, AngleMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchScheme {
    Eoi,
    Ai,
    /// Reserved; not implemented, reported as skipped.
    Sao,
}

impl fmt::Display for BenchScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchScheme::Eoi => "eoi",
            BenchScheme::Ai => "ai",
            BenchScheme::Sao => "sao",
        })
    }
}

impl FromStr for BenchScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eoi" => Ok(BenchScheme::Eoi),
            "ai" => Ok(BenchScheme::Ai),
            "sao" => Ok(BenchScheme::Sao),
            other => domain(format!("unknown benchmark scheme '{other}'")),
        }
    }
}

/// One `bench` CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub scheme: BenchScheme,
    pub n: usize,
    pub density: f64,
    /// Median over repeats, seconds.
    pub wall_time_s: f64,
    /// Mean over repeats.
    pub ortho_score: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub densities: Vec<f64>,
    pub schemes: Vec<BenchScheme>,
    pub repeats: usize,
    pub ai: AiConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    /// Human-readable notes for cells that were not run.
    pub warnings: Vec<String>,
}

/// Generates one matrix; returns elapsed seconds and its orthogonality
/// score. Scoring is not timed.
fn generate(
    scheme: BenchScheme,
    n: usize,
    d: f64,
    ai: &AiConfig,
    rng: &mut SeededRng,
) -> Result<(f64, f64)> {
    match scheme {
        BenchScheme::Eoi => {
            let start = Instant::now();
            let m = sample_square(n, d, AngleMode::Uniform, rng)?.matrix;
            let elapsed = start.elapsed().as_secs_f64();
            Ok((elapsed, m.orthogonality_score()))
        }
        BenchScheme::Ai => {
            let start = Instant::now();
            let (w, mask) = base_layer(n, n, d, rng);
            let r = ai_optimize(&w, &mask, ai.iters, ai.step)?;
            let elapsed = start.elapsed().as_secs_f64();
            Ok((elapsed, linalg::orthogonality_score(&r.weights)))
        }
        BenchScheme::Sao => domain("scheme sao is unavailable"),
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Times matrix generation for every size × density × scheme cell.
///
/// Cells run one after another on the calling thread. Each cell does one
/// untimed warm-up generation and then `repeats` timed ones.
pub fn bench_generation(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.sizes.is_empty() || cfg.densities.is_empty() || cfg.schemes.is_empty() {
        return domain("benchmark grids must be nonempty");
    }
    if cfg.repeats == 0 {
        return domain("benchmark needs at least one repeat");
    }
    let mut report = BenchReport::default();
    let mut cell = 0u64;
    for &n in &cfg.sizes {
        for &d in &cfg.densities {
            for &scheme in &cfg.schemes {
                cell += 1;
                if scheme == BenchScheme::Sao {
                    report
                        .warnings
                        .push(format!("scheme sao unavailable; skipped n={n} density={d}"));
                    continue;
                }
                let mut rng = rng::stream(cfg.seed, cell);
                generate(scheme, n, d, &cfg.ai, &mut rng)?;
                let mut times = Vec::with_capacity(cfg.repeats);
                let mut score_sum = 0.0;
                for _ in 0..cfg.repeats {
                    let (t, s) = generate(scheme, n, d, &cfg.ai, &mut rng)?;
                    times.push(t.max(1e-9));
                    score_sum += s;
                }
                report.records.push(BenchRecord {
                    scheme,
                    n,
                    density: d,
                    wall_time_s: median(times),
                    ortho_score: score_sum / cfg.repeats as f64,
                    seed: cfg.seed,
                });
            }
        }
    }
    Ok(report)
}
