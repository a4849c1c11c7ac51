//! Lyapunov machinery for the linear observer error dynamics.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::gain_scaling;
use crate::stability::linalg::{
    eigenvalues, inverse, matrix_exp, pseudo_inverse, singular_values, solve, symmetric_eigenvalues,
};

/// Relative threshold on the smallest singular value below which
/// `Id - e^{ΛKC·NT}` counts as singular.
pub const SINGULAR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSolution {
    pub p: DMatrix<f64>,
    /// `‖P·A + Aᵀ·P + Id‖_F`.
    pub residual: f64,
}

pub fn is_hurwitz(eig: &[Complex<f64>]) -> bool {
    eig.iter().all(|e| e.re < 0.0)
}

/// Solves `P·A + Aᵀ·P = -Id` for Hurwitz `A`.
pub fn solve_lyapunov(a: &DMatrix<f64>) -> Result<LyapunovSolution> {
    let eig = eigenvalues(a)?;
    if !is_hurwitz(&eig) {
        return Err(Error::CertificateInapplicable(format!(
            "matrix is not Hurwitz, eigenvalues {eig:?}"
        )));
    }
    let n = a.nrows();
    let at = a.transpose();
    let id = DMatrix::<f64>::identity(n, n);
    // column-major vec: vec(P·A) = (Aᵀ ⊗ I)·vec(P), vec(Aᵀ·P) = (I ⊗ Aᵀ)·vec(P)
    let system = at.kronecker(&id) + id.kronecker(&at);
    let rhs = DVector::from_iterator(n * n, (-&id).iter().copied());
    let vec_p = solve(&system, &rhs)?;
    let raw = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    let p = (&raw + raw.transpose()) * 0.5;
    let residual = (&p * a + &at * &p + &id).norm();
    Ok(LyapunovSolution { p, residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayMatrix {
    /// `A - ΛKC·(Id - e^{ΛKC·NT})⁻¹·(Id + e^{-A·NT})`, with the
    /// pseudoinverse substituted when the bracket is singular.
    pub matrix: DMatrix<f64>,
    pub singular_inverse: bool,
    pub eigenvalues: Vec<Complex<f64>>,
    /// Singular values of `Id - e^{ΛKC·NT}`, descending.
    pub bracket_singular_values: Vec<f64>,
}

/// Builds `𝒜` from `A`, `Λ`, `K`, `C` and the delay `NT`.
pub fn build_delay_matrix(
    a: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    k: &DMatrix<f64>,
    c: &DMatrix<f64>,
    nt: f64,
) -> Result<DelayMatrix> {
    let injection = lambda * k * c;
    build_from_injection(a, &injection, nt)
}

/// As [`build_delay_matrix`] with the product `ΛKC` given directly.
pub fn build_from_injection(
    a: &DMatrix<f64>,
    injection: &DMatrix<f64>,
    nt: f64,
) -> Result<DelayMatrix> {
    let n = a.nrows();
    if injection.shape() != a.shape() {
        return Err(Error::invalid("injection", "ΛKC must have the shape of A"));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let bracket = &id - matrix_exp(&(injection * nt))?;
    let sv = singular_values(&bracket);
    let largest = sv.first().copied().unwrap_or(0.0);
    let smallest = sv.last().copied().unwrap_or(0.0);
    let singular = !(smallest > SINGULAR_TOL * largest);
    let inv = if singular {
        if largest == 0.0 {
            DMatrix::zeros(n, n)
        } else {
            pseudo_inverse(&bracket, SINGULAR_TOL)?
        }
    } else {
        inverse(&bracket)?
    };
    let tail = &id + matrix_exp(&(a * -nt))?;
    let matrix = a - injection * inv * tail;
    let eigenvalues = eigenvalues(&matrix)?;
    Ok(DelayMatrix {
        matrix,
        singular_inverse: singular,
        eigenvalues,
        bracket_singular_values: sv,
    })
}

/// `W = Λ⁻¹·P·Λ⁻¹`.
pub fn weight_matrix(p: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let inv = gain_scaling(1.0 / lambda, p.nrows())?;
    Ok(&inv * p * &inv)
}

/// `V(η) = ½·ηᵀ·Λ⁻¹·P·Λ⁻¹·η`.
pub fn lyapunov_value(p: &DMatrix<f64>, lambda: &DMatrix<f64>, eta: &DVector<f64>) -> Result<f64> {
    if p.nrows() != eta.len() || lambda.nrows() != eta.len() {
        return Err(Error::invalid("eta", "dimension mismatch"));
    }
    let z = inverse(lambda)? * eta;
    Ok(0.5 * z.dot(&(p * &z)))
}

/// `α₁(r) = λ_min(P)/(2λ^{2n})·r²` and `α₂(r) = λ_max(P)/(2λ²)·r²`.
pub fn alpha_bounds(p: &DMatrix<f64>, lambda: f64, n: usize, r: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", "must be positive"));
    }
    let eig = symmetric_eigenvalues(p)?;
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let a1 = lo / (2.0 * lambda.powi(2 * n as i32)) * r * r;
    let a2 = hi / (2.0 * lambda * lambda) * r * r;
    Ok((a1, a2))
}
