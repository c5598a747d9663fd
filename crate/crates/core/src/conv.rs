//! Sparse delta-orthogonal convolution kernels.
//!
//! A sparse orthogonal channel matrix `H` (`c_out x c_in`) is placed on the
//! spatial center of a `(2k+1) x (2k+1)` kernel; every off-center weight is
//! zero. The mask starts as the support of `H` and is then topped up to the
//! target density by unfreezing zero positions chosen uniformly over the
//! whole tensor.

use ndarray::{Array3, Array4};
use rand::seq::index;
use rand::Rng;

use crate::error::{contract, domain, Result};
use crate::sampler::{sample_rectangular, AngleMode, SparseOrthoMatrix};

/// Density of the embedded center matrix relative to the mask density `d`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CenterMode {
    /// `d_H = d`.
    #[default]
    Equal,
    /// `d_H = sqrt(d)`.
    Sqrt,
    Custom(f64),
}

impl CenterMode {
    pub fn resolve(&self, d: f64) -> f64 {
        match *self {
            CenterMode::Equal => d,
            CenterMode::Sqrt => d.sqrt(),
            CenterMode::Custom(d_h) => d_h,
        }
    }
}

/// Half width `k` for an odd kernel size `2k + 1`.
pub fn half_width(kernel_size: usize) -> Result<usize> {
    if kernel_size.is_multiple_of(2) {
        return domain(format!(
            "kernel size {kernel_size} is even; delta kernels need a center tap"
        ));
    }
    Ok(kernel_size / 2)
}

/// Mask population for density `d` over `total` positions, rounded half
/// away from zero.
pub fn mask_count(d: f64, total: usize) -> usize {
    (d * total as f64).round() as usize
}

/// Convolution weights `[c_out, c_in, 2k+1, 2k+1]` with a binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    k: usize,
    weights: Array4<f64>,
    mask: Array4<bool>,
    center: SparseOrthoMatrix,
    center_density: f64,
}

impl ConvKernel {
    /// Assembles a kernel from parts, checking shapes, the center-only
    /// weight layout and mask coverage of every nonzero weight.
    pub fn from_parts(
        k: usize,
        center: SparseOrthoMatrix,
        mask: Array4<bool>,
    ) -> Result<Self> {
        let (c_out, c_in) = (center.rows(), center.cols());
        let w = 2 * k + 1;
        if mask.dim() != (c_out, c_in, w, w) {
            return contract(format!(
                "mask shape {:?} does not match ({c_out}, {c_in}, {w}, {w})",
                mask.dim()
            ));
        }
        let mut weights = Array4::zeros((c_out, c_in, w, w));
        for (i, j, v) in center.entries() {
            if !mask[[i, j, k, k]] {
                return contract(format!("mask removes nonzero center weight ({i}, {j})"));
            }
            weights[[i, j, k, k]] = v;
        }
        Ok(Self {
            k,
            weights,
            mask,
            center_density: center.density(),
            center,
        })
    }

    pub fn c_out(&self) -> usize {
        self.weights.dim().0
    }

    pub fn c_in(&self) -> usize {
        self.weights.dim().1
    }

    pub fn half_width(&self) -> usize {
        self.k
    }

    pub fn kernel_size(&self) -> usize {
        2 * self.k + 1
    }

    pub fn weights(&self) -> &Array4<f64> {
        &self.weights
    }

    pub fn mask(&self) -> &Array4<bool> {
        &self.mask
    }

    pub fn center(&self) -> &SparseOrthoMatrix {
        &self.center
    }

    /// Realized density of the embedded center matrix.
    pub fn center_density(&self) -> f64 {
        self.center_density
    }

    pub fn mask_population(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn mask_density(&self) -> f64 {
        self.mask_population() as f64 / self.mask.len() as f64
    }

    /// `mask ⊙ weights`.
    pub fn effective_weights(&self) -> Array4<f64> {
        let mut w = self.weights.clone();
        w.zip_mut_with(&self.mask, |v, &m| {
            if !m {
                *v = 0.0
            }
        });
        w
    }
}

/// Samples a sparse delta-orthogonal kernel whose mask has density `d`.
///
/// For `k >= 1` the mask holds exactly `round(d * total)` positions, and a
/// center whose realized density leaves no room for that is an error. For
/// `k = 0` the kernel is the sampled channel matrix and the mask is its
/// support.
pub fn sample_conv<R: Rng + ?Sized>(
    c_out: usize,
    c_in: usize,
    k: usize,
    d: f64,
    center_mode: CenterMode,
    rng: &mut R,
) -> Result<ConvKernel> {
    if c_out == 0 || c_in == 0 {
        return contract("channel counts must be positive");
    }
    if !(0.0..=1.0).contains(&d) {
        return domain(format!("mask density {d} outside [0, 1]"));
    }
    let w = 2 * k + 1;
    let taps = (w * w) as f64;
    let total = c_out * c_in * w * w;
    let target = mask_count(d, total);

    let d_h = center_mode.resolve(d);
    if !(0.0..=1.0).contains(&d_h) {
        return domain(format!("center density {d_h} outside [0, 1]"));
    }
    if d_h / taps > d {
        return domain(format!(
            "center density {d_h} exceeds what mask density {d} admits; maximal admissible center density is {}",
            (d * taps).min(1.0)
        ));
    }

    let center = sample_rectangular(c_out, c_in, d_h, AngleMode::Uniform, rng)?.matrix;
    if k == 0 {
        // A 1x1 kernel is the channel matrix itself; its mask is its support.
        let mut mask = Array4::from_elem((c_out, c_in, 1, 1), false);
        for (i, j, _) in center.entries() {
            mask[[i, j, 0, 0]] = true;
        }
        return ConvKernel::from_parts(0, center, mask);
    }
    if center.nnz() > target {
        return domain(format!(
            "sampled center has {} nonzeros but the mask holds only {target}; maximal admissible center density is {}",
            center.nnz(),
            target as f64 / (c_out * c_in) as f64
        ));
    }

    let mut mask = Array4::from_elem((c_out, c_in, w, w), false);
    for (i, j, _) in center.entries() {
        mask[[i, j, k, k]] = true;
    }
    let zeros: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(idx, &m)| (!m).then_some(idx))
        .collect();
    let need = target - center.nnz();
    let flat = mask.as_slice_mut().expect("standard layout");
    for pick in index::sample(rng, zeros.len(), need) {
        flat[zeros[pick]] = true;
    }

    ConvKernel::from_parts(k, center, mask)
}

/// Direct cross-correlation of `x` (`[c_in, h, w]`) with `mask ⊙ weights`,
/// stride 1 and circular padding.
pub fn conv_forward_circular(kernel: &ConvKernel, x: &Array3<f64>) -> Result<Array3<f64>> {
    let (c_in, h, w) = x.dim();
    let size = kernel.kernel_size();
    if c_in != kernel.c_in() {
        return contract(format!(
            "input has {c_in} channels, kernel expects {}",
            kernel.c_in()
        ));
    }
    if h < size || w < size {
        return contract(format!("input {h}x{w} smaller than kernel {size}x{size}"));
    }
    Ok(correlate_circular(&kernel.effective_weights(), kernel.half_width(), x))
}

fn correlate_circular(eff: &Array4<f64>, k: usize, x: &Array3<f64>) -> Array3<f64> {
    let (c_out, c_in, size, _) = eff.dim();
    let (_, h, w) = x.dim();
    let mut y = Array3::zeros((c_out, h, w));
    for o in 0..c_out {
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for i in 0..c_in {
                    for p in 0..size {
                        let rr = (r + h + p - k) % h;
                        for q in 0..size {
                            let cc = (c + w + q - k) % w;
                            acc += eff[[o, i, p, q]] * x[[i, rr, cc]];
                        }
                    }
                }
                y[[o, r, c]] = acc;
            }
        }
    }
    y
}
