//! Empirical interpolation of the coefficient vector and the resulting affine operators.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm_inf, Csr};
use crate::mpfa::{CoefficientRecipe, Discretization, HfOperator, ParameterPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EimStop {
    Tolerance,
    MaxTerms,
    Stagnation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EimModel {
    pub basis: Vec<Vec<f64>>,
    pub indices: Vec<usize>,
    /// Strict lower part of the unit lower triangular matrix, row by row.
    pub lower: Vec<Vec<f64>>,
    pub tol: f64,
    /// Max relative training error after each added term.
    pub error_curve: Vec<f64>,
    /// Training positions of the selected snapshots.
    pub selected: Vec<usize>,
    pub stop: EimStop,
}

impl EimModel {
    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn max_error(&self) -> f64 {
        self.error_curve.last().copied().unwrap_or(1.0)
    }

    /// Forward substitution for `θ` from the values at the interpolation indices.
    pub fn coefficients(&self, values: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.m(), values.len())?;
        let mut theta = Vec::with_capacity(self.m());
        self.coefficients_into(values, &mut theta);
        Ok(theta)
    }

    pub fn coefficients_into(&self, values: &[f64], theta: &mut Vec<f64>) {
        theta.clear();
        for (m, row) in self.lower.iter().enumerate() {
            let s: f64 = row.iter().zip(theta.iter()).map(|(b, t)| b * t).sum();
            theta.push(values[m] - s);
        }
    }

    /// `I_M[v]` from a full vector.
    pub fn interpolate(&self, v: &[f64]) -> Result<Vec<f64>> {
        let values: Vec<f64> = self.indices.iter().map(|&j| v[j]).collect();
        let theta = self.coefficients(&values)?;
        let mut out = vec![0.0; v.len()];
        for (t, q) in theta.iter().zip(&self.basis) {
            crate::linalg::axpy(*t, q, &mut out);
        }
        Ok(out)
    }
}

fn argmax_abs(v: &[f64]) -> (usize, f64) {
    let mut best = (0, 0.0f64);
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best.1 {
            best = (i, x.abs());
        }
    }
    best
}

/// Greedy EIM over precomputed training snapshots.
pub fn train(snapshots: &[Vec<f64>], tol: f64, m_max: usize) -> Result<EimModel> {
    if snapshots.is_empty() {
        return Err(Error::Model("empty EIM training set".into()));
    }
    let f = snapshots[0].len();
    for s in snapshots {
        check_dim(f, s.len())?;
    }
    let scale: Vec<f64> = snapshots.iter().map(|s| norm_inf(s)).collect();
    let first = (0..scale.len()).fold(0, |b, i| if scale[i] > scale[b] { i } else { b });
    if scale[first] == 0.0 {
        return Err(Error::Model("degenerate EIM input: all snapshots vanish".into()));
    }
    let mut residuals: Vec<Vec<f64>> = snapshots.to_vec();
    let mut rel: Vec<f64> = scale.iter().map(|&s| if s > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut model = EimModel {
        basis: Vec::new(),
        indices: Vec::new(),
        lower: Vec::new(),
        tol,
        error_curve: Vec::new(),
        selected: Vec::new(),
        stop: EimStop::MaxTerms,
    };
    let mut pick = first;
    while model.m() < m_max {
        let r = &residuals[pick];
        let (j, rj) = argmax_abs(r);
        if rj < 1e-14 * scale[pick] || rj == 0.0 {
            model.stop = EimStop::Stagnation;
            break;
        }
        let pivot = r[j];
        let mut q: Vec<f64> = r.iter().map(|v| v / pivot).collect();
        q[j] = 1.0;
        for &jk in &model.indices {
            q[jk] = 0.0;
        }
        model.lower.push(model.basis.iter().map(|b| b[j]).collect());
        model.indices.push(j);
        model.selected.push(pick);
        for (i, res) in residuals.iter_mut().enumerate() {
            let c = res[j];
            if c != 0.0 {
                crate::linalg::axpy(-c, &q, res);
            }
            for &jk in &model.indices {
                res[jk] = 0.0;
            }
            rel[i] = if scale[i] > 0.0 { norm_inf(res) / scale[i] } else { 0.0 };
        }
        model.basis.push(q);
        pick = (0..rel.len()).fold(0, |b, i| if rel[i] > rel[b] { i } else { b });
        model.error_curve.push(rel[pick]);
        if rel[pick] < tol {
            model.stop = EimStop::Tolerance;
            break;
        }
    }
    Ok(model)
}

/// Affine decomposition `A(ξ) = Σ θ_d A_d`, `b(ξ) = Σ θ_d b_d`, `l(ξ) = Σ θ_d l_d`.
///
/// The first `n_flux` terms come from the EIM basis, the remaining ones are exact
/// well terms, one per zone crossed by the perforations.
#[derive(Clone, Debug)]
pub struct AffineModel {
    pub pattern: Csr,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub mass: Vec<f64>,
    /// Initial state used for lifting.
    pub p0: Vec<f64>,
    /// `b_d − A_d p⁰`.
    pub b_lift: Vec<Vec<f64>>,
    /// `c_d + l_dᵀ p⁰`.
    pub c_lift: Vec<f64>,
    pub eim: EimModel,
    pub map: ThetaMap,
}

/// Everything needed to evaluate `θ(ξ)` without high-dimensional data.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaMap {
    pub recipes: Vec<CoefficientRecipe>,
    /// Strict lower rows of the EIM interpolation matrix.
    pub lower: Vec<Vec<f64>>,
    pub well_zones: Vec<u8>,
    pub kappa_ref: ParameterPoint,
    pub mu: f64,
}

impl ThetaMap {
    pub fn d(&self) -> usize {
        self.recipes.len() + self.well_zones.len()
    }

    pub fn theta(&self, xi: &ParameterPoint) -> Result<Vec<f64>> {
        let mut theta: Vec<f64> = Vec::with_capacity(self.d());
        for (r, row) in self.recipes.iter().zip(&self.lower) {
            let v = r.evaluate(xi, self.mu)?;
            let s: f64 = row.iter().zip(theta.iter()).map(|(b, t)| b * t).sum();
            theta.push(v - s);
        }
        for &z in &self.well_zones {
            theta.push(xi.kappa(z) / self.kappa_ref.kappa(z));
        }
        Ok(theta)
    }
}

impl AffineModel {
    pub fn build(disc: &Discretization, eim: EimModel, kappa_ref: ParameterPoint, p0: Vec<f64>) -> Result<Self> {
        check_dim(disc.n(), p0.len())?;
        if let Some(&j) = eim.indices.iter().find(|&&j| j >= disc.vhat_len()) {
            return Err(Error::Dimension { expected: disc.vhat_len(), got: j + 1 });
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut l = Vec::new();
        let mut c = Vec::new();
        for q in &eim.basis {
            a.push(disc.flux_values(q));
            b.push(disc.flux_rhs(q));
            let (ld, cd) = disc.qoi(q);
            l.push(ld);
            c.push(cd);
        }
        let mut well_zones: Vec<u8> = disc.wells.iter().map(|w| w.zone).collect();
        well_zones.sort_unstable();
        well_zones.dedup();
        let n = disc.n();
        for &z in &well_zones {
            let lam_ref = kappa_ref.kappa(z) / disc.props.mu;
            let (diag, rhs) = disc.well_values(|zone| if zone == z { lam_ref } else { 0.0 });
            let mut vals = vec![0.0; disc.pattern().nnz()];
            for (slot, v) in diag {
                vals[slot] += v;
            }
            let mut bd = vec![0.0; n];
            for (r, v) in rhs {
                bd[r] += v;
            }
            a.push(vals);
            b.push(bd);
            l.push(vec![0.0; n]);
            c.push(0.0);
        }
        let pattern = disc.pattern().clone();
        let mut b_lift = Vec::with_capacity(b.len());
        let mut c_lift = Vec::with_capacity(b.len());
        for d in 0..a.len() {
            let ap = pattern.with_values(a[d].clone()).matvec(&p0);
            b_lift.push(b[d].iter().zip(&ap).map(|(x, y)| x - y).collect());
            c_lift.push(c[d] + dot(&l[d], &p0));
        }
        let map = ThetaMap {
            recipes: eim.indices.iter().map(|&j| disc.coefficient_recipe(j)).collect(),
            lower: eim.lower.clone(),
            well_zones,
            kappa_ref,
            mu: disc.props.mu,
        };
        Ok(AffineModel {
            pattern,
            a,
            b,
            l,
            c,
            mass: disc.mass.clone(),
            p0,
            b_lift,
            c_lift,
            eim,
            map,
        })
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// Number of affine terms.
    pub fn d(&self) -> usize {
        self.a.len()
    }

    pub fn n_flux(&self) -> usize {
        self.eim.m()
    }

    pub fn a_matrix(&self, d: usize) -> Csr {
        self.pattern.with_values(self.a[d].clone())
    }

    /// `θ(ξ)` from local patch evaluations only.
    pub fn theta(&self, xi: &ParameterPoint) -> Result<Vec<f64>> {
        self.map.theta(xi)
    }

    /// Operator for the lifted unknown `u = p − p⁰`.
    pub fn assemble_lifted(&self, theta: &[f64]) -> Result<HfOperator> {
        let mut op = self.assemble(theta)?;
        op.b.iter_mut().for_each(|v| *v = 0.0);
        op.c = 0.0;
        for d in 0..self.d() {
            crate::linalg::axpy(theta[d], &self.b_lift[d], &mut op.b);
            op.c += theta[d] * self.c_lift[d];
        }
        Ok(op)
    }

    pub fn assemble(&self, theta: &[f64]) -> Result<HfOperator> {
        check_dim(self.d(), theta.len())?;
        let n = self.n();
        let mut vals = vec![0.0; self.pattern.nnz()];
        let mut b = vec![0.0; n];
        let mut l = vec![0.0; n];
        let mut c = 0.0;
        for d in 0..self.d() {
            crate::linalg::axpy(theta[d], &self.a[d], &mut vals);
            crate::linalg::axpy(theta[d], &self.b[d], &mut b);
            crate::linalg::axpy(theta[d], &self.l[d], &mut l);
            c += theta[d] * self.c[d];
        }
        Ok(HfOperator { a: self.pattern.with_values(vals), m: self.mass.clone(), b, l, c })
    }
}
