//! Parameter-independent energy matrix `G*` and coercivity constants.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, sym_eigen_range, Csr, SparseCholesky};
use crate::mpfa::ParameterPoint;

/// Largest dimension accepted by the dense eigen oracles.
pub const DENSE_LIMIT: usize = 5000;

/// Which matrix defines the energy norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyVariant {
    /// `G* = A*_sym`.
    Stiffness,
    /// `G* = M + Δt A*_sym`.
    SpaceTime,
}

/// SPD energy matrix with its factorization.
pub struct EnergyMatrix {
    pub g: Csr,
    pub xi_star: ParameterPoint,
    pub dt: f64,
    pub variant: EnergyVariant,
    chol: SparseCholesky,
}

impl std::fmt::Debug for EnergyMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnergyMatrix").field("n", &self.g.nrows).field("variant", &self.variant).finish()
    }
}

impl EnergyMatrix {
    /// `G* = M + Δt (A + Aᵀ)/2`.
    pub fn build(m: &[f64], a_star: &Csr, dt: f64, xi_star: ParameterPoint) -> Result<Self> {
        check_dim(a_star.nrows, m.len())?;
        let s = a_star.sym_part();
        let g = s.with_values(s.data.iter().map(|v| v * dt).collect()).add_diag(m);
        Self::from_matrix(g, xi_star, dt, EnergyVariant::SpaceTime)
    }

    /// `G* = (A + Aᵀ)/2`.
    pub fn stiffness(a_star: &Csr, dt: f64, xi_star: ParameterPoint) -> Result<Self> {
        Self::from_matrix(a_star.sym_part(), xi_star, dt, EnergyVariant::Stiffness)
    }

    pub fn from_matrix(g: Csr, xi_star: ParameterPoint, dt: f64, variant: EnergyVariant) -> Result<Self> {
        let chol = SparseCholesky::new(&g).map_err(|_| Error::Model("G* is not positive definite (no Dirichlet face?)".into()))?;
        Ok(EnergyMatrix { g, xi_star, dt, variant, chol })
    }

    pub fn n(&self) -> usize {
        self.g.nrows
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.g.matvec(v)
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(self.n(), u.len())?;
        check_dim(self.n(), v.len())?;
        Ok(dot(u, &self.g.matvec(v)))
    }

    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        Ok(self.inner(v, v)?.max(0.0).sqrt())
    }

    /// `(G*)⁻¹ r`.
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        self.chol.solve(r)
    }

    /// `√(rᵀ (G*)⁻¹ r)`.
    pub fn dual_norm(&self, r: &[f64]) -> f64 {
        dot(r, &self.solve(r)).max(0.0).sqrt()
    }

    pub fn dense_factor(&self) -> Result<DenseGeneralized> {
        DenseGeneralized::new(&self.g)
    }
}

/// Dense Cholesky transform `C = L⁻¹ S L⁻ᵀ` for `G* = L Lᵀ`.
pub struct DenseGeneralized {
    l: DMatrix<f64>,
}

impl DenseGeneralized {
    pub fn new(g: &Csr) -> Result<Self> {
        if g.nrows > DENSE_LIMIT {
            return Err(Error::Eigen(format!("dense oracle limited to {DENSE_LIMIT} unknowns, got {}", g.nrows)));
        }
        let chol = nalgebra::Cholesky::new(g.to_dense()).ok_or_else(|| Error::Eigen("dense Cholesky of G* failed".into()))?;
        Ok(DenseGeneralized { l: chol.l() })
    }

    pub fn transform(&self, s: &Csr) -> DMatrix<f64> {
        let lower = |m: &DMatrix<f64>| self.l.solve_lower_triangular(m).expect("triangular solve");
        let x = lower(&s.to_dense());
        let c = lower(&x.transpose());
        (&c + c.transpose()) * 0.5
    }

    /// Maps an eigenvector of `C` back to a generalized eigenvector.
    pub fn back(&self, z: &DVector<f64>) -> DVector<f64> {
        self.l.transpose().solve_upper_triangular(z).expect("triangular solve")
    }
}

/// Smallest generalized eigenvalue of `(A_sym, G*)` and its `G*`-normalized eigenvector
/// in transformed coordinates.
pub fn smallest_pair(c: DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    crate::linalg::sym_min_eigenpair(c)
}

/// `inf vᵀ A_sym v / vᵀ G* v` by dense generalized eigensolve.
pub fn exact_alpha(a_sym: &Csr, g: &EnergyMatrix) -> Result<f64> {
    check_dim(g.n(), a_sym.nrows)?;
    let dg = g.dense_factor()?;
    Ok(smallest_pair(dg.transform(a_sym))?.0)
}

/// `inf vᵀ M v / vᵀ G* v`; zero whenever `M` has a zero diagonal entry.
pub fn alpha_m(m: &[f64], g: &EnergyMatrix) -> Result<f64> {
    check_dim(g.n(), m.len())?;
    if m.iter().any(|&v| v == 0.0) {
        return Ok(0.0);
    }
    exact_alpha(&Csr::from_triplets(m.len(), m.len(), &m.iter().enumerate().map(|(i, &v)| (i, i, v)).collect::<Vec<_>>()), g)
}

/// `Δt α_{A_sym,LB} + α_M`.
pub fn alpha_g_lb(alpha_a_lb: f64, alpha_m: f64, dt: f64) -> Result<f64> {
    if alpha_a_lb < 0.0 || alpha_m < 0.0 || dt < 0.0 {
        return Err(Error::Estimator("coercivity bounds must be nonnegative".into()));
    }
    Ok(dt * alpha_a_lb + alpha_m)
}

/// Extreme generalized eigenvalues of `(S, G*)`.
pub fn eigen_range(s: &Csr, dg: &DenseGeneralized) -> Result<(f64, f64)> {
    sym_eigen_range(dg.transform(s))
}
