//! Random sparse orthogonal matrices built from Givens rotations.
//!
//! Sampling starts from the identity (or `[I | 0]` for wide shapes) and
//! right-multiplies random plane rotations until the structural density
//! reaches the target. Sparsity is tracked structurally: after a rotation
//! on columns `i` and `j`, a row is supported in both columns iff it was
//! supported in either of them before. Numeric magnitudes are never
//! thresholded.

use std::f64::consts::{FRAC_PI_2, TAU};

use bitvec::prelude::*;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{contract, domain, Result};
use crate::linalg;

/// Cosines or sines below this magnitude make a fixed angle degenerate.
const DEGENERATE_EPS: f64 = 1e-12;

/// How rotation angles are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AngleMode {
    /// `phi` uniform on `[0, 2π)`.
    #[default]
    Uniform,
    /// Every rotation uses the same angle. Multiples of `π/2` are rejected.
    Fixed(f64),
}

impl AngleMode {
    /// Builds a validated fixed-angle mode.
    pub fn fixed(phi: f64) -> Result<Self> {
        let mode = AngleMode::Fixed(phi);
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AngleMode::Uniform => Ok(()),
            AngleMode::Fixed(phi) => {
                check_angle_range(phi)?;
                if phi.cos().abs() < DEGENERATE_EPS || phi.sin().abs() < DEGENERATE_EPS {
                    return domain(format!(
                        "fixed angle {phi} is a multiple of pi/2; the rotation would not mix its plane"
                    ));
                }
                Ok(())
            }
        }
    }
}

fn check_angle_range(phi: f64) -> Result<()> {
    if !(0.0..TAU).contains(&phi) {
        return domain(format!("rotation angle {phi} outside [0, 2pi)"));
    }
    Ok(())
}

/// A plane rotation `G_n(i, j, phi)` of size `n`.
///
/// Indices are 0-based with `i < j < n`. As a matrix it is the identity
/// except for `G[i][i] = G[j][j] = cos phi`, `G[i][j] = -sin phi` and
/// `G[j][i] = sin phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GivensRotation {
    n: usize,
    i: usize,
    j: usize,
    phi: f64,
}

impl GivensRotation {
    pub fn new(n: usize, i: usize, j: usize, phi: f64) -> Result<Self> {
        if !(i < j && j < n) {
            return contract(format!("rotation plane ({i}, {j}) invalid for size {n}"));
        }
        check_angle_range(phi)?;
        Ok(Self { n, i, j, phi })
    }

    /// Draws a rotation with `(i, j)` uniform over all `n(n-1)/2` planes.
    pub fn sample<R: Rng + ?Sized>(n: usize, mode: AngleMode, rng: &mut R) -> Self {
        debug_assert!(n >= 2);
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        let phi = match mode {
            AngleMode::Uniform => {
                let phi = rng.random::<f64>() * TAU;
                if phi >= TAU {
                    0.0
                } else {
                    phi
                }
            }
            AngleMode::Fixed(phi) => phi,
        };
        Self { n, i, j, phi }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn plane(&self) -> (usize, usize) {
        (self.i, self.j)
    }

    pub fn angle(&self) -> f64 {
        self.phi
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let (s, c) = self.phi.sin_cos();
        let mut g = DMatrix::identity(self.n, self.n);
        g[(self.i, self.i)] = c;
        g[(self.j, self.j)] = c;
        g[(self.i, self.j)] = -s;
        g[(self.j, self.i)] = s;
        g
    }
}

/// A sparse matrix with orthonormal rows (wide/square) or columns (tall).
///
/// Values live in a dense column-major array next to a structural support
/// bitset of the same layout. Positions outside the support hold exactly
/// `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOrthoMatrix {
    values: DMatrix<f64>,
    support: BitVec<u64, Lsb0>,
    nnz: usize,
    sigma_w: f64,
}

impl SparseOrthoMatrix {
    pub fn identity(n: usize) -> Self {
        Self::padded_identity(n, n)
    }

    /// `[I_rows | 0]` for `rows <= cols`, or its transpose for tall shapes.
    pub fn padded_identity(rows: usize, cols: usize) -> Self {
        let mut values = DMatrix::zeros(rows, cols);
        let mut support = bitvec![u64, Lsb0; 0; rows * cols];
        let diag = rows.min(cols);
        for k in 0..diag {
            values[(k, k)] = 1.0;
            support.set(k * rows + k, true);
        }
        Self {
            values,
            support,
            nnz: diag,
            sigma_w: 1.0,
        }
    }

    /// Builds a matrix from explicit nonzero entries; every listed position
    /// becomes structural. Orthogonality is not checked.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut values = DMatrix::zeros(rows, cols);
        let mut support = bitvec![u64, Lsb0; 0; rows * cols];
        let mut nnz = 0;
        for (r, c, v) in entries {
            if r >= rows || c >= cols {
                return contract(format!("entry ({r}, {c}) outside {rows}x{cols}"));
            }
            let idx = c * rows + r;
            if support[idx] {
                return contract(format!("duplicate entry ({r}, {c})"));
            }
            support.set(idx, true);
            values[(r, c)] = v;
            nnz += 1;
        }
        Ok(Self {
            values,
            support,
            nnz,
            sigma_w: 1.0,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn sigma_w(&self) -> f64 {
        self.sigma_w
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[(r, c)]
    }

    pub fn in_support(&self, r: usize, c: usize) -> bool {
        self.support[c * self.rows() + r]
    }

    /// Structural nonzeros as `(row, col, value)` in ascending `(row, col)`.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz);
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                if self.in_support(r, c) {
                    out.push((r, c, self.values[(r, c)]));
                }
            }
        }
        out
    }

    pub fn support_mask(&self) -> DMatrix<bool> {
        DMatrix::from_fn(self.rows(), self.cols(), |r, c| self.in_support(r, c))
    }

    /// Fraction of structural nonzeros.
    pub fn density(&self) -> f64 {
        let total = self.rows() * self.cols();
        if total == 0 {
            return 0.0;
        }
        self.nnz as f64 / total as f64
    }

    /// Frobenius norm of `Gram - I`, taken over the smaller dimension.
    pub fn orthogonality_score(&self) -> f64 {
        linalg::orthogonality_score(&self.values)
    }

    /// `A <- A * g`. Touches only columns `i` and `j`, in `O(rows)`.
    pub fn apply_rotation_right(&mut self, g: &GivensRotation) -> Result<()> {
        if g.n != self.cols() {
            return contract(format!(
                "rotation of size {} applied to a matrix with {} columns",
                g.n,
                self.cols()
            ));
        }
        let rows = self.rows();
        let (s, c) = g.phi.sin_cos();
        let (i, j) = (g.i, g.j);

        let data = self.values.as_mut_slice();
        let (left, right) = data.split_at_mut(j * rows);
        let col_i = &mut left[i * rows..(i + 1) * rows];
        let col_j = &mut right[..rows];

        let mut added = 0;
        for r in 0..rows {
            let si = self.support[i * rows + r];
            let sj = self.support[j * rows + r];
            if !(si || sj) {
                continue;
            }
            let (x, y) = (col_i[r], col_j[r]);
            col_i[r] = x * c + y * s;
            col_j[r] = -x * s + y * c;
            if si != sj {
                self.support.set(i * rows + r, true);
                self.support.set(j * rows + r, true);
                added += 1;
            }
        }
        self.nnz += added;
        Ok(())
    }

    /// Multiplies all values by `sigma_w`; the support is unchanged.
    pub fn scale_weights(mut self, sigma_w: f64) -> Result<Self> {
        if !(sigma_w > 0.0 && sigma_w.is_finite()) {
            return domain(format!("sigma_w must be positive, got {sigma_w}"));
        }
        if sigma_w != 1.0 {
            self.values *= sigma_w;
        }
        self.sigma_w *= sigma_w;
        Ok(self)
    }

    pub fn transpose(&self) -> Self {
        let (rows, cols) = (self.rows(), self.cols());
        let mut support = bitvec![u64, Lsb0; 0; rows * cols];
        for c in 0..cols {
            for r in 0..rows {
                if self.support[c * rows + r] {
                    // (r, c) becomes (c, r) in a cols x rows matrix
                    support.set(r * cols + c, true);
                }
            }
        }
        Self {
            values: self.values.transpose(),
            support,
            nnz: self.nnz,
            sigma_w: self.sigma_w,
        }
    }
}

/// Result of a sampling run.
#[derive(Debug, Clone)]
pub struct Sampled {
    pub matrix: SparseOrthoMatrix,
    /// Rotations composed into the matrix.
    pub rotations: usize,
    /// The target was below the density of the starting identity, which is
    /// returned unchanged.
    pub below_floor: bool,
}

fn check_density(d: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&d) {
        return domain(format!("target density {d} outside [0, 1]"));
    }
    Ok(())
}

/// Samples an `n x n` orthogonal matrix with density at least `d`.
pub fn sample_square<R: Rng + ?Sized>(
    n: usize,
    d: f64,
    mode: AngleMode,
    rng: &mut R,
) -> Result<Sampled> {
    sample_rectangular(n, n, d, mode, rng)
}

/// Samples a `rows x cols` matrix with orthonormal rows (`rows <= cols`)
/// or orthonormal columns (`rows > cols`).
///
/// Wide shapes start from `[I | 0]` and rotate in dimension `cols`. Tall
/// shapes are sampled wide and transposed.
pub fn sample_rectangular<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    d: f64,
    mode: AngleMode,
    rng: &mut R,
) -> Result<Sampled> {
    check_density(d)?;
    mode.validate()?;
    if rows == 0 || cols == 0 {
        return contract(format!("matrix shape {rows}x{cols} must be nonempty"));
    }
    if rows > cols {
        let wide = sample_rectangular(cols, rows, d, mode, rng)?;
        return Ok(Sampled {
            matrix: wide.matrix.transpose(),
            ..wide
        });
    }

    let mut matrix = SparseOrthoMatrix::padded_identity(rows, cols);
    let below_floor = d < matrix.density();
    let mut rotations = 0;
    if cols >= 2 {
        while matrix.density() < d {
            let g = GivensRotation::sample(cols, mode, rng);
            matrix.apply_rotation_right(&g)?;
            rotations += 1;
        }
    }
    Ok(Sampled {
        matrix,
        rotations,
        below_floor,
    })
}

/// I.i.d. `Normal(0, sigma_b^2)` biases; `sigma_b = 0` yields exact zeros.
pub fn sample_biases<R: Rng + ?Sized>(len: usize, sigma_b: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(sigma_b >= 0.0 && sigma_b.is_finite()) {
        return domain(format!("sigma_b must be nonnegative, got {sigma_b}"));
    }
    if sigma_b == 0.0 {
        return Ok(vec![0.0; len]);
    }
    let normal = Normal::new(0.0, sigma_b).expect("validated scale");
    Ok((0..len).map(|_| normal.sample(rng)).collect())
}

/// Whether `phi` is a multiple of `π/2` up to rounding.
pub fn is_degenerate_angle(phi: f64) -> bool {
    let q = phi / FRAC_PI_2;
    (q - q.round()).abs() < DEGENERATE_EPS
}
