//! Density growth of products of random Givens rotations.
//!
//! Right-multiplying by a rotation on plane `(i, j)` adds one structural
//! nonzero to a row exactly when the row is supported in one of the two
//! columns but not the other. With `k` nonzeros in a row of size `n`, that
//! happens with probability `k(n-k) / C(n,2)`; otherwise the count stays.
//! Iterating this birth chain from `p(0, 1) = 1` gives the per-row
//! distribution `p(t, k)` and the expected matrix density
//! `(1/n) Σ k p(t, k)`.

use rand::Rng;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::exec::Exec;
use crate::rng;
use crate::sampler::{AngleMode, GivensRotation, SparseOrthoMatrix};

/// Expected density that counts as "fully dense" for `d = 1` queries.
pub const SATURATION_DENSITY: f64 = 1.0 - 1e-9;

/// Transition weights of the row-count chain for a fixed `n`.
#[derive(Debug, Clone)]
struct RowChain {
    /// `stay[k-1]`: probability a row with `k` nonzeros keeps `k`.
    stay: Vec<f64>,
    /// `grow[k-1]`: probability a row with `k` nonzeros gains one.
    grow: Vec<f64>,
}

impl RowChain {
    fn new(n: usize) -> Self {
        let pairs = (n * (n - 1) / 2) as f64;
        let choose2 = |m: usize| (m * m.saturating_sub(1) / 2) as f64;
        let stay = (1..=n)
            .map(|k| (choose2(k) + choose2(n - k)) / pairs)
            .collect();
        let grow = (1..=n).map(|k| (k * (n - k)) as f64 / pairs).collect();
        Self { stay, grow }
    }

    /// Advances `probs` (indexed by `k - 1`) by one rotation, in place.
    fn step(&self, probs: &mut [f64]) {
        for idx in (1..probs.len()).rev() {
            probs[idx] = probs[idx] * self.stay[idx] + probs[idx - 1] * self.grow[idx - 1];
        }
        probs[0] *= self.stay[0];
    }
}

fn initial_probs(n: usize) -> Vec<f64> {
    let mut probs = vec![0.0; n];
    probs[0] = 1.0;
    probs
}

fn mean_density(probs: &[f64]) -> f64 {
    let n = probs.len();
    let weighted: f64 = probs
        .iter()
        .enumerate()
        .map(|(idx, p)| (idx + 1) as f64 * p)
        .sum();
    weighted / n as f64
}

fn check_size(n: usize) -> Result<()> {
    if n < 2 {
        return domain(format!("row distribution needs n >= 2, got {n}"));
    }
    Ok(())
}

/// Distribution of the nonzero count of a fixed row after `t` rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct RowNnzDistribution {
    n: usize,
    t: usize,
    probs: Vec<f64>,
}

impl RowNnzDistribution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// `probs()[k - 1] = p(t, k)` for `k = 1..=n`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `p(t, k)`; zero for `k = 0` or `k > n`.
    pub fn p(&self, k: usize) -> f64 {
        if k == 0 || k > self.n {
            0.0
        } else {
            self.probs[k - 1]
        }
    }

    pub fn expected_density(&self) -> f64 {
        mean_density(&self.probs)
    }
}

/// `p(t, ·)` for rotations of size `n`, in `O(t n)`.
pub fn row_nnz_distribution(n: usize, t: usize) -> Result<RowNnzDistribution> {
    check_size(n)?;
    let chain = RowChain::new(n);
    let mut probs = initial_probs(n);
    for _ in 0..t {
        chain.step(&mut probs);
    }
    Ok(RowNnzDistribution { n, t, probs })
}

/// Expected density of a product of `t` random rotations of size `n`.
pub fn expected_density(n: usize, t: usize) -> Result<f64> {
    Ok(row_nnz_distribution(n, t)?.expected_density())
}

/// Expected densities for every `t` in `0..=t_max`.
pub fn expected_density_curve(n: usize, t_max: usize) -> Result<Vec<f64>> {
    check_size(n)?;
    let chain = RowChain::new(n);
    let mut probs = initial_probs(n);
    let mut curve = Vec::with_capacity(t_max + 1);
    curve.push(mean_density(&probs));
    for _ in 0..t_max {
        chain.step(&mut probs);
        curve.push(mean_density(&probs));
    }
    Ok(curve)
}

/// Rotation count at which a density curve switches from convex to
/// concave: the step with the largest increment.
pub fn inflection_point(curve: &[f64]) -> Option<usize> {
    curve
        .windows(2)
        .map(|w| w[1] - w[0])
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(t, _)| t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RotationBudget {
    pub rotations: usize,
    /// The target was at or above [`SATURATION_DENSITY`], which stood in
    /// for it.
    pub saturated: bool,
}

/// Smallest `t` with `expected_density(n, t) >= d`.
pub fn rotations_for_density(n: usize, d: f64) -> Result<RotationBudget> {
    if !(0.0..=1.0).contains(&d) {
        return domain(format!("target density {d} outside [0, 1]"));
    }
    let saturated = d > SATURATION_DENSITY;
    if n < 2 {
        return Ok(RotationBudget {
            rotations: 0,
            saturated,
        });
    }
    let target = d.min(SATURATION_DENSITY);
    let chain = RowChain::new(n);
    let mut probs = initial_probs(n);
    let mut t = 0;
    while mean_density(&probs) < target {
        chain.step(&mut probs);
        t += 1;
    }
    Ok(RotationBudget {
        rotations: t,
        saturated,
    })
}

/// Mean and standard error of an empirical density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl McEstimate {
    fn from_samples(samples: impl ExactSizeIterator<Item = f64> + Clone) -> Self {
        let count = samples.len() as f64;
        let mean = samples.clone().sum::<f64>() / count;
        let stderr = if samples.len() > 1 {
            let var = samples.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1.0);
            (var / count).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

/// Structural density after each of `t_max` random rotations applied to
/// `I_n`, starting with the identity's own density.
pub fn structural_density_path<R: Rng + ?Sized>(n: usize, t_max: usize, rng: &mut R) -> Vec<f64> {
    let mut a = SparseOrthoMatrix::identity(n);
    let mut path = Vec::with_capacity(t_max + 1);
    path.push(a.density());
    for _ in 0..t_max {
        let g = GivensRotation::sample(n, AngleMode::Uniform, rng);
        a.apply_rotation_right(&g).expect("rotation sized to matrix");
        path.push(a.density());
    }
    path
}

/// Empirical density of `t` random rotations, averaged over `trials`.
pub fn monte_carlo_density<R: Rng + ?Sized>(
    n: usize,
    t: usize,
    trials: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    let curve = monte_carlo_curve(n, t, trials, rng, Exec::default())?;
    Ok(curve[t])
}

/// Empirical density curve for `t = 0..=t_max`.
///
/// Each trial follows one chain of `t_max` rotations and contributes its
/// density at every `t`. Trial `r` draws from stream `r` of a seed forked
/// from `rng`, so the result does not depend on `exec`.
pub fn monte_carlo_curve<R: Rng + ?Sized>(
    n: usize,
    t_max: usize,
    trials: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<Vec<McEstimate>> {
    check_size(n)?;
    if trials == 0 {
        return domain("Monte Carlo needs at least one trial");
    }
    let base = rng::fork_seed(rng);
    let paths = exec.map(trials, |trial| {
        let mut r = rng::stream(base, trial as u64);
        structural_density_path(n, t_max, &mut r)
    });
    Ok((0..=t_max)
        .map(|t| McEstimate::from_samples(paths.iter().map(|p| p[t])))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn base_condition() {
        for n in [2, 3, 17] {
            let dist = row_nnz_distribution(n, 0).unwrap();
            assert_eq!(dist.p(1), 1.0);
            assert!((2..=n).all(|k| dist.p(k) == 0.0));
            assert_eq!(dist.expected_density(), 1.0 / n as f64);
        }
    }

    #[test]
    fn three_by_three_one_rotation() {
        let dist = row_nnz_distribution(3, 1).unwrap();
        assert_eq!(dist.probs(), &[1.0 / 3.0, 2.0 / 3.0, 0.0]);
        assert!((dist.expected_density() - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn probability_is_conserved() {
        let dist = row_nnz_distribution(10, 50).unwrap();
        assert!((dist.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(dist.probs().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn small_sizes_rejected() {
        assert!(row_nnz_distribution(1, 3).is_err());
        assert!(expected_density(0, 0).is_err());
    }

    #[test]
    fn two_by_two_saturates_in_one_step() {
        assert_eq!(expected_density(2, 1).unwrap(), 1.0);
        let b = rotations_for_density(2, 1.0).unwrap();
        assert_eq!(b.rotations, 1);
        assert!(b.saturated);
    }

    #[test]
    fn identity_floor_needs_no_rotations() {
        assert_eq!(rotations_for_density(50, 0.02).unwrap().rotations, 0);
        assert_eq!(rotations_for_density(50, 0.0).unwrap().rotations, 0);
        assert!(rotations_for_density(50, 1.2).is_err());
    }

    #[test]
    fn curve_matches_pointwise_queries() {
        let curve = expected_density_curve(12, 60).unwrap();
        for t in [0, 1, 7, 60] {
            assert_eq!(curve[t], expected_density(12, t).unwrap());
        }
    }

    #[test]
    fn deterministic_monte_carlo_cases() {
        let mut rng = seeded(3);
        let est = monte_carlo_density(2, 1, 7, &mut rng).unwrap();
        assert_eq!(est.mean, 1.0);
        for _ in 0..20 {
            assert_eq!(structural_density_path(3, 1, &mut rng)[1], 5.0 / 9.0);
        }
        let est = monte_carlo_density(3, 1, 9, &mut rng).unwrap();
        assert!((est.mean - 5.0 / 9.0).abs() < 1e-15);
        assert!(est.stderr < 1e-15);
    }

    #[test]
    fn monte_carlo_tracks_model() {
        let mut rng = seeded(12);
        let est = monte_carlo_density(100, 270, 200, &mut rng).unwrap();
        let model = expected_density(100, 270).unwrap();
        assert!((est.mean - model).abs() <= 3.0 * est.stderr, "{est:?} vs {model}");
    }

    #[test]
    fn monte_carlo_needs_trials() {
        let mut rng = seeded(0);
        assert!(monte_carlo_density(4, 2, 0, &mut rng).is_err());
    }

    #[test]
    fn execution_strategy_does_not_change_results() {
        let seq = monte_carlo_curve(20, 80, 16, &mut seeded(5), Exec::Sequential).unwrap();
        let par = monte_carlo_curve(20, 80, 16, &mut seeded(5), Exec::Parallel).unwrap();
        assert_eq!(seq, par);
    }
}
