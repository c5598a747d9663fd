//! Sparse MLPs under Base, EOI and AI initialization and the singular
//! spectrum of their input-output Jacobian.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::ai::{ai_optimize, AiConfig};
use crate::alloc::{Allocator, Architecture, DensityProfile, LayerSpec};
use crate::error::{contract, domain, Error, Result};
use crate::exec::Exec;
use crate::linalg;
use crate::rng;
use crate::sampler::{sample_biases, sample_rectangular, AngleMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Tanh,
    HardTanh,
    Relu,
}

impl Activation {
    pub fn apply(self, h: f64) -> f64 {
        match self {
            Activation::Linear => h,
            Activation::Tanh => h.tanh(),
            Activation::HardTanh => h.clamp(-1.0, 1.0),
            Activation::Relu => h.max(0.0),
        }
    }

    /// Derivative, with 0 at the relu and hard-tanh kinks.
    pub fn derivative(self, h: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => {
                let t = h.tanh();
                1.0 - t * t
            }
            Activation::HardTanh => {
                if h > -1.0 && h < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Linear => "linear",
            Activation::Tanh => "tanh",
            Activation::HardTanh => "hard_tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "linear" => Ok(Activation::Linear),
            "tanh" => Ok(Activation::Tanh),
            "hard_tanh" | "hardtanh" => Ok(Activation::HardTanh),
            "relu" => Ok(Activation::Relu),
            other => domain(format!("unknown activation '{other}'")),
        }
    }
}

/// Initialization scheme for the sparse layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Dense orthogonal weights under a uniformly random mask.
    Base,
    /// Sparse orthogonal weights from Givens rotations.
    Eoi,
    /// Base followed by Approximated Isometry optimization.
    Ai,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Base => "base",
            Scheme::Eoi => "eoi",
            Scheme::Ai => "ai",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Scheme::Base),
            "eoi" => Ok(Scheme::Eoi),
            "ai" => Ok(Scheme::Ai),
            other => domain(format!("unknown scheme '{other}'")),
        }
    }
}

/// `(sigma_w, sigma_b)` presets: `default` is `(1, 0)`, `deep_tanh` is the
/// critical tanh pair `(1.0247, 0.00448)`.
pub fn critical_constants(name: &str) -> Result<(f64, f64)> {
    match name {
        "default" => Ok((1.0, 0.0)),
        "deep_tanh" => Ok((1.0247, 0.00448)),
        other => domain(format!("unknown constants preset '{other}'")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    pub sigma_w: f64,
    pub sigma_b: f64,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl MlpSpec {
    /// Square network of `depth` layers of `width` units, `sigma_w = 1`,
    /// `sigma_b = 0`.
    pub fn new(depth: usize, width: usize, activation: Activation) -> Self {
        Self {
            depth,
            width,
            activation,
            sigma_w: 1.0,
            sigma_b: 0.0,
            in_dim: width,
            out_dim: width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.in_dim == 0 || self.out_dim == 0 {
            return contract("MLP dimensions must be positive");
        }
        if self.sigma_w.is_nan() || self.sigma_w <= 0.0 {
            return domain(format!("sigma_w must be positive, got {}", self.sigma_w));
        }
        Ok(())
    }

    /// `(out, in)` per layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let input = if l == 0 { self.in_dim } else { self.width };
                let output = if l + 1 == self.depth {
                    self.out_dim
                } else {
                    self.width
                };
                (output, input)
            })
            .collect()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            layers: self
                .layer_shapes()
                .into_iter()
                .map(|(output, input)| LayerSpec::Fc { input, output })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `W ⊙ M`, already scaled by `sigma_w`.
    pub weights: DMatrix<f64>,
    pub mask: DMatrix<bool>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMlp {
    pub activation: Activation,
    pub layers: Vec<Layer>,
}

/// Exactly `round(d * rows * cols)` positions, uniformly at random.
fn uniform_mask<R: Rng + ?Sized>(rows: usize, cols: usize, d: f64, rng: &mut R) -> DMatrix<bool> {
    let total = rows * cols;
    let keep = ((d * total as f64).round() as usize).min(total);
    let mut mask = DMatrix::from_element(rows, cols, false);
    let flat = mask.as_mut_slice();
    for idx in index::sample(rng, total, keep) {
        flat[idx] = true;
    }
    mask
}

/// Dense Haar orthogonal weights with a uniform random mask of density `d`.
pub fn base_layer<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    d: f64,
    rng: &mut R,
) -> (DMatrix<f64>, DMatrix<bool>) {
    let w = linalg::haar_orthogonal(rows, cols, rng);
    let mask = uniform_mask(rows, cols, d, rng);
    let w = w.zip_map(&mask, |v, m| if m { v } else { 0.0 });
    (w, mask)
}

pub fn build_sparse_mlp<R: Rng + ?Sized>(
    spec: &MlpSpec,
    profile: &DensityProfile,
    scheme: Scheme,
    ai: &AiConfig,
    rng: &mut R,
) -> Result<SparseMlp> {
    spec.validate()?;
    if profile.densities.len() != spec.depth {
        return contract(format!(
            "profile has {} densities for {} layers",
            profile.densities.len(),
            spec.depth
        ));
    }
    let mut layers = Vec::with_capacity(spec.depth);
    for ((rows, cols), &d) in spec.layer_shapes().into_iter().zip(&profile.densities) {
        let (w, mask) = match scheme {
            Scheme::Base => base_layer(rows, cols, d, rng),
            Scheme::Ai => {
                let (w, mask) = base_layer(rows, cols, d, rng);
                let r = ai_optimize(&w, &mask, ai.iters, ai.step)?;
                if r.is_failure() {
                    return domain("orthogonality optimization diverged");
                }
                (r.weights, mask)
            }
            Scheme::Eoi => {
                let m = sample_rectangular(rows, cols, d, AngleMode::Uniform, rng)?.matrix;
                let mask = m.support_mask();
                (m.values().clone(), mask)
            }
        };
        let bias = DVector::from_vec(sample_biases(rows, spec.sigma_b, rng)?);
        layers.push(Layer {
            weights: w * spec.sigma_w,
            mask,
            bias,
        });
    }
    Ok(SparseMlp {
        activation: spec.activation,
        layers,
    })
}

impl SparseMlp {
    pub fn in_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").weights.nrows()
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.layers.iter().fold(x.clone(), |x, layer| {
            (&layer.weights * x + &layer.bias).map(|h| self.activation.apply(h))
        })
    }

    /// Pre-activations of every layer for input `x`.
    pub fn preactivations(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut x = x.clone();
        for layer in &self.layers {
            let h = &layer.weights * &x + &layer.bias;
            x = h.map(|v| self.activation.apply(v));
            out.push(h);
        }
        out
    }

    /// `J = D^L W^L ⋯ D^1 W^1` at input `x`, with `D^l = diag(φ'(h^l))`.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut x = x.clone();
        let mut jac = DMatrix::identity(self.in_dim(), self.in_dim());
        for layer in &self.layers {
            let h = &layer.weights * &x + &layer.bias;
            let mut next = &layer.weights * &jac;
            for (r, &hr) in h.iter().enumerate() {
                let scale = self.activation.derivative(hr);
                next.row_mut(r).scale_mut(scale);
            }
            jac = next;
            x = h.map(|v| self.activation.apply(v));
        }
        jac
    }
}

/// Singular-value statistics of one Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumStats {
    pub mean: f64,
    pub max: f64,
    /// Descending, `min(rows, cols)` values.
    pub spectrum: Vec<f64>,
}

pub fn spectrum(j: &DMatrix<f64>) -> Result<SpectrumStats> {
    let spectrum = linalg::singular_values(j)?;
    let mean = spectrum.iter().sum::<f64>() / spectrum.len() as f64;
    let max = spectrum.first().copied().unwrap_or(0.0);
    Ok(SpectrumStats {
        mean,
        max,
        spectrum,
    })
}

/// One `spectrum` CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub scheme: Scheme,
    pub allocator: String,
    pub activation: Activation,
    pub sparsity: f64,
    pub seed: u64,
    pub mean_sv: f64,
    pub max_sv: f64,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub spec: MlpSpec,
    pub allocators: Vec<Allocator>,
    pub schemes: Vec<Scheme>,
    pub sparsities: Vec<f64>,
    pub seeds: Vec<u64>,
    pub inputs_per_seed: usize,
    pub ai: AiConfig,
}

impl SweepConfig {
    pub fn new(spec: MlpSpec) -> Self {
        Self {
            spec,
            allocators: vec![Allocator::Uniform, Allocator::Erk],
            schemes: vec![Scheme::Base, Scheme::Eoi, Scheme::Ai],
            sparsities: vec![0.0, 0.5, 0.9, 0.95, 0.97],
            seeds: vec![0],
            inputs_per_seed: 8,
            ai: AiConfig::default(),
        }
    }
}

/// Mean and max singular value for every allocator × sparsity × seed ×
/// scheme, averaged over `inputs_per_seed` inputs drawn from `N(0, I)`.
///
/// For a given (allocator, sparsity, seed) all schemes consume the same
/// weight stream and see the same inputs, so Base and AI start from the
/// same dense matrices. Rows come out in nested order allocator, sparsity,
/// seed, scheme regardless of `exec`.
pub fn spectrum_sweep(cfg: &SweepConfig, exec: Exec) -> Result<Vec<SpectrumRow>> {
    cfg.spec.validate()?;
    if cfg.allocators.is_empty()
        || cfg.schemes.is_empty()
        || cfg.sparsities.is_empty()
        || cfg.seeds.is_empty()
        || cfg.inputs_per_seed == 0
    {
        return domain("spectrum sweep needs nonempty grids and at least one input");
    }
    if let Some(s) = cfg.sparsities.iter().find(|s| !(0.0..1.0).contains(*s)) {
        return domain(format!("sparsity {s} outside [0, 1)"));
    }
    let arch = cfg.spec.architecture();
    let profiles = cfg
        .allocators
        .iter()
        .map(|a| {
            cfg.sparsities
                .iter()
                .map(|s| a.profile(&arch, 1.0 - s))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let (n_sp, n_seed, n_sch) = (cfg.sparsities.len(), cfg.seeds.len(), cfg.schemes.len());
    let jobs = cfg.allocators.len() * n_sp * n_seed * n_sch;
    let results = exec.map(jobs, |job| {
        let scheme_idx = job % n_sch;
        let seed_idx = (job / n_sch) % n_seed;
        let sp_idx = (job / (n_sch * n_seed)) % n_sp;
        let alloc_idx = job / (n_sch * n_seed * n_sp);
        let seed = cfg.seeds[seed_idx];
        let cell = (alloc_idx * n_sp + sp_idx) as u64;

        let mut weight_rng = rng::stream(seed, 2 * cell);
        let mut input_rng = rng::stream(seed, 2 * cell + 1);
        let net = build_sparse_mlp(
            &cfg.spec,
            &profiles[alloc_idx][sp_idx],
            cfg.schemes[scheme_idx],
            &cfg.ai,
            &mut weight_rng,
        )?;
        let (mut mean_sum, mut max_sum) = (0.0, 0.0);
        for _ in 0..cfg.inputs_per_seed {
            let x = DVector::from_fn(cfg.spec.in_dim, |_, _| input_rng.sample(StandardNormal));
            let stats = spectrum(&net.jacobian(&x))?;
            mean_sum += stats.mean;
            max_sum += stats.max;
        }
        let k = cfg.inputs_per_seed as f64;
        Ok(SpectrumRow {
            scheme: cfg.schemes[scheme_idx],
            allocator: cfg.allocators[alloc_idx].to_string(),
            activation: cfg.spec.activation,
            sparsity: cfg.sparsities[sp_idx],
            seed,
            mean_sv: mean_sum / k,
            max_sv: max_sum / k,
        })
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::uniform_profile;
    use crate::rng::seeded;

    fn net(spec: &MlpSpec, d: f64, scheme: Scheme, seed: u64) -> SparseMlp {
        let profile = uniform_profile(&spec.architecture(), d).unwrap();
        build_sparse_mlp(spec, &profile, scheme, &AiConfig { iters: 50, step: 0.01 }, &mut seeded(seed)).unwrap()
    }

    #[test]
    fn eoi_layers_are_orthogonal() {
        let spec = MlpSpec::new(4, 20, Activation::Linear);
        for d in [0.05, 0.3, 1.0] {
            let m = net(&spec, d, Scheme::Eoi, 1);
            for layer in &m.layers {
                assert!(linalg::orthogonality_score(&layer.weights) < 1e-12);
                for (v, &keep) in layer.weights.iter().zip(layer.mask.iter()) {
                    if !keep {
                        assert_eq!(*v, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn base_at_full_density_is_dense_orthogonal() {
        let spec = MlpSpec::new(3, 16, Activation::Tanh);
        let m = net(&spec, 1.0, Scheme::Base, 2);
        let mut rng = seeded(2);
        for layer in &m.layers {
            assert!(layer.mask.iter().all(|&b| b));
            let q = linalg::haar_orthogonal(16, 16, &mut rng);
            let _ = uniform_mask(16, 16, 1.0, &mut rng);
            let _ = sample_biases(16, 0.0, &mut rng);
            assert_eq!(layer.weights, q);
        }
    }

    #[test]
    fn base_pruning_breaks_orthogonality() {
        let spec = MlpSpec::new(2, 100, Activation::Linear);
        let m = net(&spec, 0.05, Scheme::Base, 3);
        for layer in &m.layers {
            assert!(linalg::orthogonality_score(&layer.weights) > 0.1);
            assert_eq!(layer.mask.iter().filter(|&&b| b).count(), 500);
        }
    }

    #[test]
    fn linear_eoi_jacobian_is_orthogonal() {
        let spec = MlpSpec::new(5, 24, Activation::Linear);
        let m = net(&spec, 0.2, Scheme::Eoi, 4);
        let x = DVector::from_fn(24, |i, _| i as f64 * 0.1 - 1.0);
        let j = m.jacobian(&x);
        assert!((j.tr_mul(&j) - DMatrix::<f64>::identity(24, 24)).amax() < 1e-6);
    }

    #[test]
    fn single_tanh_layer_at_origin() {
        let spec = MlpSpec::new(1, 10, Activation::Tanh);
        let m = net(&spec, 0.4, Scheme::Eoi, 5);
        let j = m.jacobian(&DVector::zeros(10));
        assert_eq!(j, m.layers[0].weights);
    }

    #[test]
    fn activation_derivatives() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(0.1), 1.0);
        assert_eq!(Activation::HardTanh.derivative(1.0), 0.0);
        assert_eq!(Activation::HardTanh.derivative(0.99), 1.0);
        assert_eq!(Activation::Tanh.derivative(0.0), 1.0);
        assert_eq!(Activation::Linear.derivative(7.0), 1.0);
        assert_eq!(Activation::HardTanh.apply(3.0), 1.0);
        assert_eq!("hard-tanh".parse::<Activation>().unwrap(), Activation::HardTanh);
        assert!("gelu".parse::<Activation>().is_err());
    }

    #[test]
    fn constants() {
        assert_eq!(critical_constants("default").unwrap(), (1.0, 0.0));
        assert_eq!(critical_constants("deep_tanh").unwrap(), (1.0247, 0.00448));
        assert!(critical_constants("edge").is_err());
    }

    #[test]
    fn profile_mismatch() {
        let spec = MlpSpec::new(3, 8, Activation::Tanh);
        let profile = uniform_profile(&MlpSpec::new(2, 8, Activation::Tanh).architecture(), 0.5).unwrap();
        assert!(build_sparse_mlp(&spec, &profile, Scheme::Eoi, &AiConfig::default(), &mut seeded(0)).is_err());
    }

    #[test]
    fn rectangular_network() {
        let mut spec = MlpSpec::new(3, 12, Activation::Linear);
        spec.in_dim = 20;
        spec.out_dim = 5;
        let m = net(&spec, 0.3, Scheme::Eoi, 6);
        assert_eq!(m.in_dim(), 20);
        assert_eq!(m.out_dim(), 5);
        let j = m.jacobian(&DVector::zeros(20));
        assert_eq!(j.shape(), (5, 20));
        let s = spectrum(&j).unwrap();
        assert_eq!(s.spectrum.len(), 5);
        assert!(s.spectrum.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn sweep_is_deterministic_and_execution_independent() {
        let mut cfg = SweepConfig::new(MlpSpec::new(3, 12, Activation::Tanh));
        cfg.sparsities = vec![0.0, 0.8];
        cfg.seeds = vec![1, 2];
        cfg.inputs_per_seed = 2;
        cfg.ai = AiConfig { iters: 20, step: 0.01 };
        let a = spectrum_sweep(&cfg, Exec::Sequential).unwrap();
        let b = spectrum_sweep(&cfg, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 * 2 * 2 * 3);
        for row in &a {
            assert!(row.max_sv >= row.mean_sv && row.mean_sv >= 0.0);
        }
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let mut cfg = SweepConfig::new(MlpSpec::new(2, 4, Activation::Tanh));
        cfg.sparsities = vec![1.0];
        assert!(spectrum_sweep(&cfg, Exec::Sequential).is_err());
        cfg.sparsities = vec![];
        assert!(spectrum_sweep(&cfg, Exec::Sequential).is_err());
    }
}
