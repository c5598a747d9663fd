//! Per-layer density allocation under a global parameter budget.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Error, Result};

/// Shape of one prunable layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Fc {
        #[serde(rename = "in")]
        input: usize,
        #[serde(rename = "out")]
        output: usize,
    },
    /// Square `(2k+1) x (2k+1)` convolution.
    Conv { c_in: usize, c_out: usize, k: usize },
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Fc { input, output } => input * output,
            LayerSpec::Conv { c_in, c_out, k } => {
                let w = 2 * k + 1;
                c_in * c_out * w * w
            }
        }
    }

    /// Erdős–Rényi(-kernel) shape score; layer densities are proportional
    /// to it.
    pub fn erk_score(&self) -> f64 {
        match *self {
            LayerSpec::Fc { input, output } => {
                (input + output) as f64 / (input * output) as f64
            }
            LayerSpec::Conv { c_in, c_out, k } => {
                let w = 2 * k + 1;
                (c_in + c_out + 2 * w) as f64 / (c_in * c_out * w * w) as f64
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Fc { input, output } => input > 0 && output > 0,
            LayerSpec::Conv { c_in, c_out, .. } => c_in > 0 && c_out > 0,
        };
        if ok {
            Ok(())
        } else {
            contract(format!("layer {self:?} has a zero dimension"))
        }
    }
}

/// An ordered list of layers, as read from an architecture document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let arch = Self { layers };
        arch.validate()?;
        Ok(arch)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let arch: Architecture = serde_json::from_str(text)?;
        arch.validate()?;
        Ok(arch)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return contract("architecture has no layers");
        }
        self.layers.iter().try_for_each(LayerSpec::validate)
    }

    pub fn param_counts(&self) -> Vec<usize> {
        self.layers.iter().map(LayerSpec::param_count).collect()
    }

    pub fn total_params(&self) -> usize {
        self.param_counts().iter().sum()
    }
}

/// Densities `d_l` for each layer together with the global budget `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub budget: f64,
    pub densities: Vec<f64>,
    pub param_counts: Vec<usize>,
}

impl DensityProfile {
    /// `Σ d_l m_l / Σ m_l`.
    pub fn realized_density(&self) -> f64 {
        let kept: f64 = self
            .densities
            .iter()
            .zip(&self.param_counts)
            .map(|(d, &m)| d * m as f64)
            .sum();
        kept / self.param_counts.iter().sum::<usize>() as f64
    }

    pub fn to_file(&self) -> ProfileFile {
        ProfileFile {
            d: self.budget,
            densities: self.densities.clone(),
        }
    }
}

/// On-disk profile: `{"d": 0.1, "densities": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub d: f64,
    pub densities: Vec<f64>,
}

/// Named density distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Allocator {
    Uniform,
    Erk,
}

impl Allocator {
    pub fn profile(&self, arch: &Architecture, d: f64) -> Result<DensityProfile> {
        match self {
            Allocator::Uniform => uniform_profile(arch, d),
            Allocator::Erk => erk_profile(arch, d),
        }
    }
}

impl fmt::Display for Allocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Allocator::Uniform => "uniform",
            Allocator::Erk => "erk",
        })
    }
}

impl FromStr for Allocator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Allocator::Uniform),
            "erk" => Ok(Allocator::Erk),
            other => domain(format!("unknown allocator '{other}'")),
        }
    }
}

fn check_budget(d: f64) -> Result<()> {
    if !(d > 0.0 && d <= 1.0) {
        return domain(format!("global density {d} outside (0, 1]"));
    }
    Ok(())
}

/// Every layer at density `d`.
pub fn uniform_profile(arch: &Architecture, d: f64) -> Result<DensityProfile> {
    check_budget(d)?;
    Ok(DensityProfile {
        budget: d,
        densities: vec![d; arch.layers.len()],
        param_counts: arch.param_counts(),
    })
}

/// ERK densities `d_l = ε s_l`, with `ε` fixed by the budget.
///
/// Layers whose density would exceed 1 are set dense and the remaining
/// budget is spread over the rest; repeated until no layer overflows.
pub fn erk_profile(arch: &Architecture, d: f64) -> Result<DensityProfile> {
    check_budget(d)?;
    let counts = arch.param_counts();
    let scores: Vec<f64> = arch.layers.iter().map(LayerSpec::erk_score).collect();
    let budget = d * counts.iter().sum::<usize>() as f64;

    let mut dense = vec![false; counts.len()];
    let mut eps = 0.0;
    for _ in 0..=counts.len() {
        let dense_params: usize = (0..counts.len())
            .filter(|&l| dense[l])
            .map(|l| counts[l])
            .sum();
        let free_mass: f64 = (0..counts.len())
            .filter(|&l| !dense[l])
            .map(|l| scores[l] * counts[l] as f64)
            .sum();
        if free_mass == 0.0 {
            break;
        }
        eps = (budget - dense_params as f64) / free_mass;
        let overflow: Vec<usize> = (0..counts.len())
            .filter(|&l| !dense[l] && eps * scores[l] > 1.0)
            .collect();
        if overflow.is_empty() {
            break;
        }
        for l in overflow {
            dense[l] = true;
        }
    }

    let densities = (0..counts.len())
        .map(|l| if dense[l] { 1.0 } else { eps * scores[l] })
        .collect();
    Ok(DensityProfile {
        budget: d,
        densities,
        param_counts: counts,
    })
}

/// Reads a profile file and checks it against `arch`.
pub fn load_profile(text: &str, arch: &Architecture) -> Result<DensityProfile> {
    if text.trim().is_empty() {
        return Err(Error::Parse("empty profile file".into()));
    }
    let file: ProfileFile = serde_json::from_str(text)?;
    if file.densities.len() != arch.layers.len() {
        return contract(format!(
            "profile has {} densities for {} layers",
            file.densities.len(),
            arch.layers.len()
        ));
    }
    if let Some((l, d)) = file
        .densities
        .iter()
        .enumerate()
        .find(|(_, d)| !(**d > 0.0 && **d <= 1.0))
    {
        return domain(format!("layer {l} density {d} outside (0, 1]"));
    }
    check_budget(file.d)?;
    Ok(DensityProfile {
        budget: file.d,
        densities: file.densities,
        param_counts: arch.param_counts(),
    })
}

pub fn write_profile(profile: &DensityProfile) -> Result<String> {
    Ok(serde_json::to_string_pretty(&profile.to_file())?)
}

/// Findings of [`validate_profile`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileDiagnostics {
    /// `(Σ d_l m_l - d Σ m_l) / (d Σ m_l)`.
    pub budget_residual: f64,
    /// Layers with `d_l` outside `(0, 1]`.
    pub out_of_range: Vec<usize>,
}

impl ProfileDiagnostics {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.out_of_range.is_empty() && self.budget_residual.abs() <= tol
    }
}

pub fn validate_profile(
    profile: &DensityProfile,
    arch: &Architecture,
    d: f64,
) -> Result<ProfileDiagnostics> {
    if profile.densities.len() != arch.layers.len() {
        return contract(format!(
            "profile has {} densities for {} layers",
            profile.densities.len(),
            arch.layers.len()
        ));
    }
    let counts = arch.param_counts();
    let total = counts.iter().sum::<usize>() as f64;
    let kept: f64 = profile
        .densities
        .iter()
        .zip(&counts)
        .map(|(dl, &m)| dl * m as f64)
        .sum();
    let out_of_range = profile
        .densities
        .iter()
        .enumerate()
        .filter(|(_, dl)| !(**dl > 0.0 && **dl <= 1.0))
        .map(|(l, _)| l)
        .collect();
    Ok(ProfileDiagnostics {
        budget_residual: (kept - d * total) / (d * total),
        out_of_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fc(input: usize, output: usize) -> LayerSpec {
        LayerSpec::Fc { input, output }
    }

    fn arch(layers: Vec<LayerSpec>) -> Architecture {
        Architecture::new(layers).unwrap()
    }

    #[test]
    fn uniform() {
        let a = arch(vec![fc(10, 100), LayerSpec::Conv { c_in: 3, c_out: 8, k: 1 }]);
        let p = uniform_profile(&a, 0.1).unwrap();
        assert_eq!(p.densities, vec![0.1, 0.1]);
        assert!((p.realized_density() - 0.1).abs() < 1e-15);
        let p = uniform_profile(&a, 1.0).unwrap();
        assert_eq!(p.densities, vec![1.0, 1.0]);
        assert!(uniform_profile(&a, 0.0).is_err());
        assert!(uniform_profile(&a, 1.1).is_err());
    }

    #[test]
    fn erk_symmetric_layers() {
        let a = arch(vec![fc(30, 40), fc(30, 40)]);
        let p = erk_profile(&a, 0.2).unwrap();
        for d in &p.densities {
            assert!((d - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn erk_two_layer_example() {
        let a = arch(vec![fc(10, 100), fc(100, 100)]);
        let p = erk_profile(&a, 0.1).unwrap();
        let eps = 1100.0 / 310.0;
        assert!((p.densities[0] - 0.11 * eps).abs() < 1e-12);
        assert!((p.densities[1] - 0.02 * eps).abs() < 1e-12);
        assert!((p.densities[0] - 0.3903).abs() < 1e-4);
        assert!((p.densities[1] - 0.0710).abs() < 1e-4);
        let kept = p.densities[0] * 1000.0 + p.densities[1] * 10000.0;
        assert!((kept - 1100.0).abs() < 1e-9 * 1100.0);
    }

    #[test]
    fn erk_clamps_tiny_layer() {
        // scores 1 and 0.02; unclamped eps = 1000.4 / 204 > 1, so the 2x2
        // layer goes dense and the rest gets (1000.4 - 4) / 200.
        let a = arch(vec![fc(2, 2), fc(100, 100)]);
        let p = erk_profile(&a, 0.1).unwrap();
        assert_eq!(p.densities[0], 1.0);
        assert!((p.densities[1] - 0.02 * 996.4 / 200.0).abs() < 1e-15);
        let residual = validate_profile(&p, &a, 0.1).unwrap().budget_residual;
        assert!(residual.abs() < 1e-12);
    }

    #[test]
    fn erk_conv_score() {
        let l = LayerSpec::Conv { c_in: 3, c_out: 64, k: 1 };
        assert_eq!(l.param_count(), 3 * 64 * 9);
        assert_eq!(l.erk_score(), (3.0 + 64.0 + 6.0) / (3.0 * 64.0 * 9.0));
    }

    #[test]
    fn erk_full_density() {
        let a = arch(vec![fc(2, 2), fc(50, 10), LayerSpec::Conv { c_in: 4, c_out: 4, k: 2 }]);
        let p = erk_profile(&a, 1.0).unwrap();
        assert!(p.densities.iter().all(|&d| (d - 1.0).abs() < 1e-12));
    }

    #[test]
    fn architecture_json() {
        let a = Architecture::from_json(
            r#"{"layers":[{"kind":"fc","in":784,"out":128}, {"kind":"conv","c_in":3,"c_out":64,"k":1}]}"#,
        )
        .unwrap();
        assert_eq!(a.layers[0], fc(784, 128));
        assert_eq!(a.param_counts(), vec![784 * 128, 3 * 64 * 9]);
        assert!(Architecture::from_json(r#"{"layers":[]}"#).is_err());
        assert!(Architecture::from_json(r#"{"layers":[{"kind":"fc","in":0,"out":3}]}"#).is_err());
    }

    #[test]
    fn profile_round_trip() {
        let a = arch(vec![fc(10, 100), fc(100, 100), fc(100, 7)]);
        let p = erk_profile(&a, 0.13).unwrap();
        let text = write_profile(&p).unwrap();
        assert_eq!(load_profile(&text, &a).unwrap(), p);
    }

    #[test]
    fn profile_errors() {
        let a = arch(vec![fc(10, 10), fc(10, 10)]);
        assert!(load_profile("", &a).is_err());
        assert!(load_profile("{", &a).is_err());
        assert!(load_profile(r#"{"d":0.1,"densities":[0.1]}"#, &a).is_err());
        assert!(load_profile(r#"{"d":0.1,"densities":[0.1,1.5]}"#, &a).is_err());
        assert!(load_profile(r#"{"d":0.1,"densities":[0.0,0.2]}"#, &a).is_err());
    }

    #[test]
    fn validation_flags_budget_violation() {
        let a = arch(vec![fc(10, 10), fc(10, 10)]);
        let p = load_profile(r#"{"d":0.1,"densities":[0.105,0.105]}"#, &a).unwrap();
        let diag = validate_profile(&p, &a, 0.1).unwrap();
        assert!((diag.budget_residual - 0.05).abs() < 1e-12);
        assert!(!diag.is_valid(1e-9));
        assert!(diag.out_of_range.is_empty());

        let bad = DensityProfile {
            budget: 0.1,
            densities: vec![1.2, 0.0],
            param_counts: a.param_counts(),
        };
        assert_eq!(validate_profile(&bad, &a, 0.1).unwrap().out_of_range, vec![0, 1]);
    }
}
