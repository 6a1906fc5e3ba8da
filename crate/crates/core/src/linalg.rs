//! Small complex linear-algebra toolkit shared by the optimizers.
//!
//! Everything is dense `nalgebra` storage over `Complex<f64>`. Rank decisions
//! use a relative singular-value cutoff so the same matrix is classified the
//! same way by every module.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative singular-value cutoff for rank and pseudo-inverse decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Pseudo-inverse together with the rank information that produced it.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub pinv: CMat,
    pub rank: usize,
    pub sigma_max: f64,
    /// Smallest singular value over the full min(rows, cols) spectrum.
    pub sigma_min: f64,
    /// Smallest singular value that survived the cutoff (0 when rank is 0).
    pub sigma_min_kept: f64,
}

impl PseudoInverse {
    /// Largest singular value of the pseudo-inverse itself.
    pub fn pinv_norm2(&self) -> f64 {
        if self.rank == 0 {
            0.0
        } else {
            1.0 / self.sigma_min_kept
        }
    }

    pub fn condition(&self) -> f64 {
        if self.sigma_min > 0.0 {
            self.sigma_max / self.sigma_min
        } else {
            f64::INFINITY
        }
    }
}

/// Moore-Penrose pseudo-inverse via SVD, discarding singular values at or
/// below `rel_tol * sigma_max`.
pub fn pseudo_inverse(a: &CMat, rel_tol: f64) -> PseudoInverse {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return PseudoInverse {
            pinv: CMat::zeros(cols, rows),
            rank: 0,
            sigma_max: 0.0,
            sigma_min: 0.0,
            sigma_min_kept: 0.0,
        };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let sigma_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let sigma_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cutoff = rel_tol * sigma_max;

    let mut pinv = CMat::zeros(cols, rows);
    let mut rank = 0;
    let mut sigma_min_kept = f64::INFINITY;
    for (i, &s) in sv.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            sigma_min_kept = sigma_min_kept.min(s);
            // pinv += v_i * (1/s) * u_i^H
            let vi = v_t.row(i).adjoint();
            let ui = u.column(i);
            pinv.ger(C64::new(1.0 / s, 0.0), &vi, &ui.conjugate(), C64::new(1.0, 0.0));
        }
    }
    if rank == 0 {
        sigma_min_kept = 0.0;
    }
    PseudoInverse {
        pinv,
        rank,
        sigma_max,
        sigma_min,
        sigma_min_kept,
    }
}

/// Eigenvalues of a Hermitian matrix, sorted descending.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let eig = SymmetricEigen::new(hermitize(a));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|x, y| y.total_cmp(x));
    vals
}

/// `(a + a^H) / 2`, removing round-off asymmetry before an eigen-solve.
pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Column-stacking vectorization.
pub fn vec_of(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

/// Inverse of [`vec_of`] for a `rows x cols` matrix.
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    CMat::from_column_slice(rows, cols, v.as_slice())
}

pub fn frobenius_sq(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}
