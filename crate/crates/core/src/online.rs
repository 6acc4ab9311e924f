//! Reduced operators and certified online evaluation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::eim::{AffineModel, ThetaMap};
use crate::energy::{EnergyMatrix, EnergyVariant};
use crate::error::{check_dim, Error, Result};
use crate::estimators::{DualTable, EstimateBundle, PrimalTable};
use crate::hf::{dual_terminal, TimeGrid};
use crate::linalg::dot;
use crate::mpfa::{ParameterPoint, ParameterRanges};
use crate::reduction::GBasis;
use crate::scm::{ScmModel, ScmOracle};

/// Galerkin projections of the affine terms onto the dual basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DualOperator {
    pub m: DMatrix<f64>,
    /// `Z_duᵀ A_dᵀ Z_du`.
    pub a: Vec<DMatrix<f64>>,
    /// Terminal coefficients per term: `Z_duᵀ G* (−M_c⁻¹ l_d)`.
    pub terminal: Vec<DVector<f64>>,
    /// `Z_prᵀ M Z_du`.
    pub p_m: DMatrix<f64>,
    /// `Z_prᵀ A_dᵀ Z_du`.
    pub p_a: Vec<DMatrix<f64>>,
    /// `Z_duᵀ b̃_d`.
    pub q: Vec<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedOperator {
    pub m: DMatrix<f64>,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
    pub l: Vec<DVector<f64>>,
    /// Lifted output offsets `c_d + l_dᵀ p⁰`.
    pub c: Vec<f64>,
    pub dual: Option<DualOperator>,
}

fn gram(left: &GBasis, right: &GBasis, f: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(left.len(), right.len());
    for (j, v) in right.vecs.iter().enumerate() {
        let fv = f(v);
        for (i, w) in left.vecs.iter().enumerate() {
            out[(i, j)] = dot(w, &fv);
        }
    }
    out
}

fn project_vec(z: &GBasis, v: &[f64]) -> DVector<f64> {
    DVector::from_iterator(z.len(), z.vecs.iter().map(|w| dot(w, v)))
}

impl ReducedOperator {
    pub fn project(z_pr: &GBasis, z_du: Option<&GBasis>, aff: &AffineModel, g: &EnergyMatrix) -> Result<Self> {
        let mass = |v: &[f64]| v.iter().zip(&aff.mass).map(|(a, m)| a * m).collect::<Vec<f64>>();
        let mats: Vec<_> = (0..aff.d()).map(|d| aff.a_matrix(d)).collect();
        let m = gram(z_pr, z_pr, mass);
        let a = mats.iter().map(|ad| gram(z_pr, z_pr, |v| ad.matvec(v))).collect();
        let b = aff.b_lift.iter().map(|bd| project_vec(z_pr, bd)).collect();
        let l = aff.l.iter().map(|ld| project_vec(z_pr, ld)).collect();
        let dual = match z_du {
            None => None,
            Some(zd) => Some(DualOperator {
                m: gram(zd, zd, mass),
                a: mats.iter().map(|ad| gram(zd, zd, |v| ad.matvec_t(v))).collect(),
                terminal: aff
                    .l
                    .iter()
                    .map(|ld| {
                        let t = dual_terminal(ld, &aff.mass);
                        project_vec(zd, &g.apply(&t))
                    })
                    .collect(),
                p_m: gram(z_pr, zd, mass),
                p_a: mats.iter().map(|ad| gram(z_pr, zd, |v| ad.matvec_t(v))).collect(),
                q: aff.b_lift.iter().map(|bd| project_vec(zd, bd)).collect(),
            }),
        };
        Ok(ReducedOperator { m, a, b, l, c: aff.c_lift.clone(), dual })
    }

    pub fn n_pr(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_du(&self) -> usize {
        self.dual.as_ref().map_or(0, |d| d.m.nrows())
    }

    pub fn d(&self) -> usize {
        self.a.len()
    }

    /// Reduced primal trajectory `u⁰ = 0, u¹..u^N`.
    pub fn solve_primal(&self, theta: &[f64], grid: &TimeGrid) -> Result<Vec<DVector<f64>>> {
        check_dim(self.d(), theta.len())?;
        let n = self.n_pr();
        let mut lhs = self.m.clone();
        let mut rhs_b = DVector::zeros(n);
        for (d, t) in theta.iter().enumerate() {
            lhs += &self.a[d] * (grid.dt * t);
            rhs_b += &self.b[d] * (grid.dt * t);
        }
        let lu = lhs.lu();
        let mut traj = Vec::with_capacity(grid.n_steps + 1);
        traj.push(DVector::zeros(n));
        for k in 0..grid.n_steps {
            let rhs = &self.m * &traj[k] + &rhs_b;
            let x = lu.solve(&rhs).ok_or_else(|| Error::Solver { step: k + 1, msg: "singular reduced primal matrix".into() })?;
            traj.push(x);
        }
        Ok(traj)
    }

    /// Reduced dual trajectory `ψ⁰..ψ^N`.
    pub fn solve_dual(&self, theta: &[f64], grid: &TimeGrid) -> Result<Vec<DVector<f64>>> {
        check_dim(self.d(), theta.len())?;
        let du = self.dual.as_ref().ok_or_else(|| Error::Model("no dual basis".into()))?;
        let n = du.m.nrows();
        let mut lhs = du.m.clone();
        let mut term = DVector::zeros(n);
        for (d, t) in theta.iter().enumerate() {
            lhs += &du.a[d] * (grid.dt * t);
            term += &du.terminal[d] * *t;
        }
        let lu = lhs.lu();
        let mut traj = vec![DVector::zeros(n); grid.n_steps + 1];
        traj[grid.n_steps] = term;
        for k in (0..grid.n_steps).rev() {
            let rhs = &du.m * &traj[k + 1];
            traj[k] = lu.solve(&rhs).ok_or_else(|| Error::Solver { step: k, msg: "singular reduced dual matrix".into() })?;
        }
        Ok(traj)
    }

    /// `s̃ = l̃(θ)ᵀ u + c′(θ)`.
    pub fn output(&self, theta: &[f64], u: &DVector<f64>) -> f64 {
        theta.iter().enumerate().map(|(d, t)| t * (self.l[d].dot(u) + self.c[d])).sum()
    }

    /// `⟨r^{k+1}, Z_du ψ⟩` for primal states `u^k, u^{k+1}`.
    pub fn pairing(&self, theta: &[f64], u_prev: &DVector<f64>, u_next: &DVector<f64>, psi: &DVector<f64>, dt: f64) -> f64 {
        let du = self.dual.as_ref().expect("pairing needs a dual operator");
        let delta = (u_next - u_prev) / dt;
        let mut s = delta.dot(&(&du.p_m * psi));
        for (d, t) in theta.iter().enumerate() {
            s += t * (u_next.dot(&(&du.p_a[d] * psi)) - du.q[d].dot(psi));
        }
        s
    }
}

/// Source of coercivity lower bounds.
#[derive(Clone, Debug)]
pub enum Coercivity {
    Scm(ScmModel),
    /// Dense generalized eigensolve, only for offline validation.
    Exact(Arc<ScmOracle>),
}

impl Coercivity {
    pub fn alpha_lb(&self, xi: &ParameterPoint, theta: &[f64]) -> Result<f64> {
        match self {
            Coercivity::Scm(m) => m.alpha_lb(xi, theta),
            Coercivity::Exact(o) => o.alpha(theta),
        }
    }
}

/// Certified output at one parameter.
#[derive(Clone, Debug)]
pub struct CertifiedResult {
    pub xi: ParameterPoint,
    pub theta: Vec<f64>,
    /// Time step index of the output.
    pub horizon: usize,
    pub s_plain: f64,
    pub s_corrected: Option<f64>,
    pub estimates: EstimateBundle,
    pub u: Vec<DVector<f64>>,
    pub psi: Option<Vec<DVector<f64>>>,
}

impl CertifiedResult {
    /// `|||ũ|||` over steps `1..=horizon`, assuming orthonormal `Z_pr`.
    pub fn primal_norm(&self) -> f64 {
        self.u[1..=self.horizon].iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    }
}

/// Complete online model: no quantity scales with the high-fidelity dimension.
#[derive(Clone, Debug)]
pub struct ReducedModel {
    pub grid: TimeGrid,
    pub ranges: ParameterRanges,
    pub variant: EnergyVariant,
    pub map: ThetaMap,
    pub op: ReducedOperator,
    pub primal_table: PrimalTable,
    pub dual_table: Option<DualTable>,
    pub coercivity: Coercivity,
    pub alpha_m: f64,
}

impl ReducedModel {
    pub fn has_dual(&self) -> bool {
        self.dual_table.is_some() && self.op.dual.is_some()
    }

    pub fn evaluate(&self, xi: &ParameterPoint) -> Result<CertifiedResult> {
        self.evaluate_at(xi, self.grid.n_steps)
    }

    /// Output at step `horizon`, with the shifted dual for `horizon < N`.
    pub fn evaluate_at(&self, xi: &ParameterPoint, horizon: usize) -> Result<CertifiedResult> {
        self.ranges.check(xi)?;
        let theta = self.map.theta(xi)?;
        let alpha = self.coercivity.alpha_lb(xi, &theta)?;
        self.evaluate_with(*xi, theta, alpha, horizon)
    }

    pub fn evaluate_with(&self, xi: ParameterPoint, theta: Vec<f64>, alpha_lb: f64, horizon: usize) -> Result<CertifiedResult> {
        let n = self.grid.n_steps;
        if horizon == 0 || horizon > n {
            return Err(Error::Domain(format!("horizon {horizon} outside 1..={n}")));
        }
        let dt = self.grid.dt;
        let u = self.op.solve_primal(&theta, &self.grid)?;
        let primal_norms = self.primal_table.norms(&theta, &u[..=horizon], dt)?;
        let s_plain = self.op.output(&theta, &u[horizon]);
        let (dual_norms, pairing, psi) = match (&self.dual_table, self.op.dual.is_some()) {
            (Some(dt_table), true) => {
                let psi = self.op.solve_dual(&theta, &self.grid)?;
                let shift = n - horizon;
                let pairing: Vec<f64> =
                    (0..horizon).map(|k| self.op.pairing(&theta, &u[k], &u[k + 1], &psi[shift + k], dt)).collect();
                let dn = dt_table.norms(&theta, &psi, dt, shift..n)?;
                (dn, pairing, Some(psi))
            }
            _ => (Vec::new(), Vec::new(), None),
        };
        let s_corrected = psi.as_ref().map(|_| s_plain + dt * pairing.iter().sum::<f64>());
        let estimates = EstimateBundle::compute(primal_norms, dual_norms, pairing, alpha_lb, self.alpha_m, dt)?;
        Ok(CertifiedResult { xi, theta, horizon, s_plain, s_corrected, estimates, u, psi })
    }

    /// High-dimensional pressure `p⁰ + Z_pr u` for visualization and validation.
    pub fn lift(z_pr: &[Vec<f64>], p0: &[f64], u: &DVector<f64>) -> Vec<f64> {
        let mut p = p0.to_vec();
        for (c, z) in u.iter().zip(z_pr) {
            crate::linalg::axpy(*c, z, &mut p);
        }
        p
    }
}
