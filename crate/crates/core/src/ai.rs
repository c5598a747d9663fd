//! Approximated Isometry: gradient descent on the masked Gram deviation.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::error::{contract, domain, Result};
use crate::linalg;

/// Halvings tried before an iteration is declared stalled.
pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AiConfig {
    pub iters: usize,
    pub step: f64,
}

impl Default for AiConfig {
    fn default() -> Self {
        Self {
            iters: 10_000,
            step: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AiStatus {
    /// All requested iterations ran.
    Completed,
    /// No step size down to `step / 2^30` decreased the loss.
    Stalled,
    /// The loss became non-finite.
    Diverged,
}

#[derive(Debug, Clone)]
pub struct AiResult {
    /// Optimized `W ⊙ M`.
    pub weights: DMatrix<f64>,
    /// Loss before the first iteration, then after each accepted one.
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub wall_time: Duration,
    pub status: AiStatus,
}

impl AiResult {
    pub fn is_failure(&self) -> bool {
        self.status == AiStatus::Diverged
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("trace holds the initial loss")
    }

    /// `iter,loss` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,loss\n");
        for (i, l) in self.loss_trace.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

fn check_shapes(w: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<()> {
    if w.shape() != mask.shape() {
        return contract(format!(
            "weights {:?} and mask {:?} differ in shape",
            w.shape(),
            mask.shape()
        ));
    }
    Ok(())
}

fn apply_mask(w: &DMatrix<f64>, mask: &DMatrix<bool>) -> DMatrix<f64> {
    w.zip_map(mask, |v, m| if m { v } else { 0.0 })
}

/// `‖Gram(W ⊙ M) - I‖_F²`, Gram over the smaller dimension.
pub fn ai_loss(w: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<f64> {
    check_shapes(w, mask)?;
    Ok(linalg::gram_deviation(&apply_mask(w, mask)).norm_squared())
}

fn masked_gradient(a: &DMatrix<f64>, dev: &DMatrix<f64>, mask: &DMatrix<bool>) -> DMatrix<f64> {
    let g = if a.nrows() <= a.ncols() {
        dev * a
    } else {
        a * dev
    };
    g.zip_map(mask, |v, m| if m { 4.0 * v } else { 0.0 })
}

/// Gradient of [`ai_loss`] with respect to the unmasked weights; masked
/// positions get zero.
pub fn ai_gradient(w: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<DMatrix<f64>> {
    check_shapes(w, mask)?;
    let a = apply_mask(w, mask);
    let dev = linalg::gram_deviation(&a);
    Ok(masked_gradient(&a, &dev, mask))
}

/// Runs `iters` steps of masked gradient descent with step halving.
///
/// A step that would raise the loss is retried at half the step size, up
/// to [`MAX_HALVINGS`] times; the reduced step carries over to later
/// iterations. The loss trace is therefore non-increasing.
pub fn ai_optimize(
    w: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    iters: usize,
    step: f64,
) -> Result<AiResult> {
    check_shapes(w, mask)?;
    if !(step > 0.0 && step.is_finite()) {
        return domain(format!("step must be positive, got {step}"));
    }
    let start = Instant::now();
    let mut a = apply_mask(w, mask);
    let mut dev = linalg::gram_deviation(&a);
    let mut loss = dev.norm_squared();
    let mut trace = vec![loss];
    let mut step = step;
    let mut status = AiStatus::Completed;

    if !loss.is_finite() {
        status = AiStatus::Diverged;
    }

    let mut done = 0;
    while status == AiStatus::Completed && done < iters {
        let grad = masked_gradient(&a, &dev, mask);
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &a - &grad * step;
            let cand_dev = linalg::gram_deviation(&candidate);
            let cand_loss = cand_dev.norm_squared();
            if !cand_loss.is_finite() {
                step *= 0.5;
                continue;
            }
            if cand_loss <= loss {
                a = candidate;
                dev = cand_dev;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            status = if grad.iter().all(|v| v.is_finite()) {
                AiStatus::Stalled
            } else {
                AiStatus::Diverged
            };
            break;
        }
        trace.push(loss);
        done += 1;
    }

    Ok(AiResult {
        weights: a,
        loss_trace: trace,
        iterations: done,
        wall_time: start.elapsed(),
        status,
    })
}
