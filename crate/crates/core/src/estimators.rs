//! Residual dual norms, a posteriori estimators, true errors and effectivities.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eim::AffineModel;
use crate::energy::{EnergyMatrix, EnergyVariant};
use crate::error::{check_dim, Error, Result};
use crate::linalg::dot;
use crate::reduction::GBasis;

/// Estimator driving a greedy run or reported by the online stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    DeltaPr,
    DeltaS,
    DeltaSTilde,
    Gho1,
    Gho2,
    Ghoqoi1,
    Ghoqoi2,
    Ghonew1,
    Ghonew2,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 9] = [
        EstimatorKind::DeltaPr,
        EstimatorKind::DeltaS,
        EstimatorKind::DeltaSTilde,
        EstimatorKind::Gho1,
        EstimatorKind::Gho2,
        EstimatorKind::Ghoqoi1,
        EstimatorKind::Ghoqoi2,
        EstimatorKind::Ghonew1,
        EstimatorKind::Ghonew2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::DeltaPr => "delta_pr",
            EstimatorKind::DeltaS => "delta_s",
            EstimatorKind::DeltaSTilde => "delta_s_tilde",
            EstimatorKind::Gho1 => "gho1",
            EstimatorKind::Gho2 => "gho2",
            EstimatorKind::Ghoqoi1 => "ghoqoi1",
            EstimatorKind::Ghoqoi2 => "ghoqoi2",
            EstimatorKind::Ghonew1 => "ghonew1",
            EstimatorKind::Ghonew2 => "ghonew2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Energy norm the estimator is defined with.
    pub fn variant(self) -> EnergyVariant {
        match self {
            EstimatorKind::Gho1 | EstimatorKind::Ghoqoi1 | EstimatorKind::Ghonew1 => EnergyVariant::Stiffness,
            _ => EnergyVariant::SpaceTime,
        }
    }

    /// Whether the estimator needs a dual basis.
    pub fn is_goal(self) -> bool {
        !matches!(self, EstimatorKind::DeltaPr | EstimatorKind::Gho1 | EstimatorKind::Gho2)
    }

    /// Whether the estimator pairs with the corrected output.
    pub fn uses_corrected_output(self) -> bool {
        matches!(self, EstimatorKind::DeltaS | EstimatorKind::Ghoqoi1 | EstimatorKind::Ghoqoi2)
    }

    pub fn value(self, b: &EstimateBundle) -> f64 {
        match self {
            EstimatorKind::DeltaPr => b.delta_pr,
            EstimatorKind::DeltaS => b.delta_s,
            EstimatorKind::DeltaSTilde => b.delta_s_tilde,
            EstimatorKind::Gho1 | EstimatorKind::Gho2 => b.gho_pr,
            EstimatorKind::Ghoqoi1 | EstimatorKind::Ghoqoi2 => b.gho_s,
            EstimatorKind::Ghonew1 | EstimatorKind::Ghonew2 => b.gho_new,
        }
    }
}

/// `η̄_{d,i} = ⟨η̂_d, ζ_i⟩_{G*}` for an orthonormal basis `ζ` of `η̂_d = (G*)⁻¹ x_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualTable {
    /// `D_r × n_ζ`.
    pub eta_bar: DMatrix<f64>,
    pub dropped: usize,
}

impl ResidualTable {
    pub fn build(raw: &[Vec<f64>], g: &EnergyMatrix) -> Result<Self> {
        for x in raw {
            check_dim(g.n(), x.len())?;
        }
        let mut zeta = GBasis::new();
        let mut dropped = 0;
        for x in raw {
            if !zeta.push(g.solve(x), g) {
                dropped += 1;
            }
        }
        let k = zeta.len();
        let mut eta_bar = DMatrix::zeros(raw.len(), k);
        for (d, x) in raw.iter().enumerate() {
            for i in 0..k {
                eta_bar[(d, i)] = dot(x, &zeta.vecs[i]);
            }
        }
        Ok(ResidualTable { eta_bar, dropped })
    }

    pub fn rank(&self) -> usize {
        self.eta_bar.ncols()
    }

    /// `‖Σ r̂_d η̂_d‖_{G*}` as a sum of squares.
    pub fn norm(&self, coeffs: &[f64]) -> Result<f64> {
        check_dim(self.eta_bar.nrows(), coeffs.len())?;
        let r = DVector::from_column_slice(coeffs);
        Ok((self.eta_bar.transpose() * r).norm())
    }
}

/// Expanded quadratic form `Σ r̂_d r̂_{d'} x_dᵀ (G*)⁻¹ x_{d'}`, unstable under cancellation.
pub fn naive_norm_sq(raw: &[Vec<f64>], g: &EnergyMatrix, coeffs: &[f64]) -> f64 {
    let sol: Vec<Vec<f64>> = raw.iter().map(|x| g.solve(x)).collect();
    let mut s = 0.0;
    for (d, x) in raw.iter().enumerate() {
        for (e, y) in sol.iter().enumerate() {
            s += coeffs[d] * coeffs[e] * dot(x, y);
        }
    }
    s
}

/// Primal residual table split by block: `r = M Z δ/Δt + Σ θ_d A_d Z u − Σ θ_d b̃_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalTable {
    pub e_m: DMatrix<f64>,
    pub e_a: Vec<DMatrix<f64>>,
    pub e_b: Vec<DVector<f64>>,
}

impl PrimalTable {
    pub fn build(z: &GBasis, aff: &AffineModel, g: &EnergyMatrix) -> Result<Self> {
        let n = z.len();
        let d = aff.d();
        let mut raw = Vec::with_capacity(n * (d + 1) + d);
        for v in &z.vecs {
            raw.push(v.iter().zip(&aff.mass).map(|(a, m)| a * m).collect());
        }
        for dd in 0..d {
            let a = aff.a_matrix(dd);
            for v in &z.vecs {
                raw.push(a.matvec(v));
            }
        }
        for b in &aff.b_lift {
            raw.push(b.clone());
        }
        let t = ResidualTable::build(&raw, g)?;
        let eb = t.eta_bar.transpose();
        let e_m = eb.columns(0, n).into_owned();
        let e_a = (0..d).map(|dd| eb.columns(n * (dd + 1), n).into_owned()).collect();
        let e_b = (0..d).map(|dd| eb.column(n * (d + 1) + dd).into_owned()).collect();
        Ok(PrimalTable { e_m, e_a, e_b })
    }

    pub fn rank(&self) -> usize {
        self.e_m.nrows()
    }

    /// `‖r^k‖₋₁` for `k = 1..len−1` of a reduced trajectory.
    pub fn norms(&self, theta: &[f64], u: &[DVector<f64>], dt: f64) -> Result<Vec<f64>> {
        check_dim(self.e_a.len(), theta.len())?;
        let k = self.rank();
        let n = self.e_m.ncols();
        let mut f = DMatrix::zeros(k, n);
        let mut gv = DVector::zeros(k);
        for (d, t) in theta.iter().enumerate() {
            f += &self.e_a[d] * *t;
            gv += &self.e_b[d] * *t;
        }
        let mut out = Vec::with_capacity(u.len().saturating_sub(1));
        let mut y = DVector::zeros(k);
        for s in 1..u.len() {
            let delta = (&u[s] - &u[s - 1]) / dt;
            y.copy_from(&gv);
            y.gemv(1.0, &self.e_m, &delta, -1.0);
            y.gemv(1.0, &f, &u[s], 1.0);
            out.push(y.norm());
        }
        Ok(out)
    }
}

/// Dual residual table: `ϱ = M Z (ψ^k − ψ^{k+1})/Δt + Σ θ_d A_dᵀ Z ψ^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualTable {
    pub e_m: DMatrix<f64>,
    pub e_a: Vec<DMatrix<f64>>,
}

impl DualTable {
    pub fn build(z: &GBasis, aff: &AffineModel, g: &EnergyMatrix) -> Result<Self> {
        let n = z.len();
        let d = aff.d();
        let mut raw = Vec::with_capacity(n * (d + 1));
        for v in &z.vecs {
            raw.push(v.iter().zip(&aff.mass).map(|(a, m)| a * m).collect());
        }
        for dd in 0..d {
            let a = aff.a_matrix(dd);
            for v in &z.vecs {
                raw.push(a.matvec_t(v));
            }
        }
        let t = ResidualTable::build(&raw, g)?;
        let eb = t.eta_bar.transpose();
        let e_m = eb.columns(0, n).into_owned();
        let e_a = (0..d).map(|dd| eb.columns(n * (dd + 1), n).into_owned()).collect();
        Ok(DualTable { e_m, e_a })
    }

    /// `‖ϱ^k‖₋₁` for `k` in `range` of a reduced dual trajectory.
    pub fn norms(&self, theta: &[f64], psi: &[DVector<f64>], dt: f64, range: std::ops::Range<usize>) -> Result<Vec<f64>> {
        check_dim(self.e_a.len(), theta.len())?;
        let k = self.e_m.nrows();
        let n = self.e_m.ncols();
        let mut f = DMatrix::zeros(k, n);
        for (d, t) in theta.iter().enumerate() {
            f += &self.e_a[d] * *t;
        }
        let mut out = Vec::with_capacity(range.len());
        let mut y = DVector::zeros(k);
        for s in range {
            let delta = (&psi[s] - &psi[s + 1]) / dt;
            y.gemv(1.0, &self.e_m, &delta, 0.0);
            y.gemv(1.0, &f, &psi[s], 1.0);
            out.push(y.norm());
        }
        Ok(out)
    }
}

/// All estimator values at one parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateBundle {
    pub primal_norms: Vec<f64>,
    pub dual_norms: Vec<f64>,
    /// `⟨r^{k+1}, Ψ^{N_du,k}⟩` per step.
    pub pairing: Vec<f64>,
    pub alpha_lb: f64,
    pub alpha_g_lb: f64,
    pub delta_pr: f64,
    pub delta_du: f64,
    pub delta_s: f64,
    pub delta_s_tilde: f64,
    pub gho_pr: f64,
    pub gho_s: f64,
    pub gho_new: f64,
}

pub fn delta_pr(norms: &[f64], alpha_g_lb: f64, alpha_lb: f64, t: f64, dt: f64) -> Result<f64> {
    if !(alpha_g_lb > 0.0 && alpha_lb > 0.0) {
        return Err(Error::Estimator(format!("non-positive coercivity bounds ({alpha_lb:e}, {alpha_g_lb:e})")));
    }
    let s: f64 = norms.iter().map(|r| r * r).sum();
    Ok(((t + dt) / (alpha_g_lb * alpha_lb) * s).sqrt())
}

pub fn delta_du(norms: &[f64], alpha_g_lb: f64, alpha_lb: f64, t: f64, dt: f64) -> Result<f64> {
    delta_pr(norms, alpha_g_lb, alpha_lb, t, dt)
}

pub fn delta_s(primal_norms: &[f64], delta_du: f64, dt: f64) -> f64 {
    dt * primal_norms.iter().map(|r| r * r).sum::<f64>().sqrt() * delta_du
}

pub fn delta_s_tilde(delta_s: f64, pairing: &[f64], dt: f64) -> f64 {
    delta_s + dt * pairing.iter().map(|v| v.abs()).sum::<f64>()
}

/// `(Σ Δt/α ‖r‖²)^{1/2}`.
pub fn gho(norms: &[f64], alpha_lb: f64, dt: f64) -> Result<f64> {
    if !(alpha_lb > 0.0) {
        return Err(Error::Estimator("non-positive coercivity bound".into()));
    }
    Ok((norms.iter().map(|r| dt / alpha_lb * r * r).sum::<f64>()).sqrt())
}

impl EstimateBundle {
    pub fn compute(primal_norms: Vec<f64>, dual_norms: Vec<f64>, pairing: Vec<f64>, alpha_lb: f64, alpha_m: f64, dt: f64) -> Result<Self> {
        let alpha_g_lb = crate::energy::alpha_g_lb(alpha_lb, alpha_m, dt)?;
        let t = dt * primal_norms.len() as f64;
        let dpr = delta_pr(&primal_norms, alpha_g_lb, alpha_lb, t, dt)?;
        let ddu = delta_du(&dual_norms, alpha_g_lb, alpha_lb, t, dt)?;
        let ds = delta_s(&primal_norms, ddu, dt);
        let dst = delta_s_tilde(ds, &pairing, dt);
        let gpr = gho(&primal_norms, alpha_lb, dt)?;
        let gdu = gho(&dual_norms, alpha_lb, dt)?;
        let gs = gpr * gdu;
        let gnew = gs + dt * pairing.iter().map(|v| v.abs()).sum::<f64>();
        let out = EstimateBundle {
            primal_norms,
            dual_norms,
            pairing,
            alpha_lb,
            alpha_g_lb,
            delta_pr: dpr,
            delta_du: ddu,
            delta_s: ds,
            delta_s_tilde: dst,
            gho_pr: gpr,
            gho_s: gs,
            gho_new: gnew,
        };
        if [dpr, ddu, ds, dst, gpr, gs, gnew].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Estimator("non-finite estimator value".into()));
        }
        Ok(out)
    }
}

/// Ratio of estimate to true error; `None` when the true error vanishes.
pub fn effectivity(estimate: f64, error: f64) -> Option<f64> {
    if error > 0.0 {
        Some(estimate / error)
    } else {
        None
    }
}

/// `(Σ_m ‖x^m − y^m‖²_{G*})^{1/2}` over the given steps.
pub fn trajectory_error(g: &EnergyMatrix, x: &[Vec<f64>], y: &[Vec<f64>], steps: std::ops::Range<usize>) -> Result<f64> {
    let mut s = 0.0;
    for m in steps {
        let e: Vec<f64> = x[m].iter().zip(&y[m]).map(|(a, b)| a - b).collect();
        s += g.inner(&e, &e)?;
    }
    Ok(s.max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueErrors {
    pub primal: f64,
    pub dual: Option<f64>,
    pub output_plain: f64,
    pub output_corrected: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Csr;
    use crate::mpfa::ParameterPoint;
    use proptest::prelude::*;

    fn energy(n: usize) -> EnergyMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5 + (i % 3) as f64));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        EnergyMatrix::stiffness(&Csr::from_triplets(n, n, &t), 1.0, ParameterPoint::new(1.0, 1.0)).unwrap()
    }

    #[test]
    fn single_vector_by_hand() {
        let g = energy(3);
        let x = vec![vec![1.0, 0.0, 0.0]];
        let t = ResidualTable::build(&x, &g).unwrap();
        let want = dot(&x[0], &g.solve(&x[0])).sqrt();
        assert!((t.eta_bar[(0, 0)].abs() - want).abs() < 1e-14);
        assert_eq!(t.norm(&[0.0]).unwrap(), 0.0);
        assert!((t.norm(&[2.0]).unwrap() - 2.0 * t.norm(&[1.0]).unwrap()).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn stable_norm_matches_dense(seed in 0u64..10_000) {
            let n = 12;
            let g = energy(n);
            let mut s = seed;
            let mut rnd = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5 };
            let raw: Vec<Vec<f64>> = (0..7).map(|_| (0..n).map(|_| rnd()).collect()).collect();
            let coeffs: Vec<f64> = (0..7).map(|_| rnd() * 4.0).collect();
            let t = ResidualTable::build(&raw, &g).unwrap();
            let mut r = vec![0.0; n];
            for (c, x) in coeffs.iter().zip(&raw) { crate::linalg::axpy(*c, x, &mut r); }
            let dense = g.dual_norm(&r);
            prop_assert!((t.norm(&coeffs).unwrap() - dense).abs() <= 1e-8 * dense);
        }
    }

    #[test]
    fn ill_conditioned_family_stays_nonnegative() {
        let n = 10;
        let g = energy(n);
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() + 1.0).collect();
        let w: Vec<f64> = (0..n).map(|i| (i as f64 * 1.7).cos()).collect();
        let mut negative = false;
        for k in 0..40 {
            let delta = 1e-9 * (1.0 + k as f64 * 0.1);
            let x2: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + delta * b).collect();
            let raw = vec![v.clone(), x2];
            let t = ResidualTable::build(&raw, &g).unwrap();
            let c = [1.0 + k as f64 * 1e-3, -(1.0 + k as f64 * 1e-3)];
            assert!(t.norm(&c).unwrap() >= 0.0);
            negative |= naive_norm_sq(&raw, &g, &c) < 0.0;
        }
        assert!(negative);
    }

    #[test]
    fn estimator_arithmetic() {
        assert_eq!(delta_pr(&[0.0, 0.0], 1.0, 1.0, 2.0, 1.0).unwrap(), 0.0);
        let v = delta_pr(&[3.0], 2.0, 0.5, 1.0, 1.0).unwrap();
        assert!((v - (2.0f64 * 9.0).sqrt()).abs() < 1e-14);
        let w = delta_pr(&[6.0], 2.0, 0.5, 1.0, 1.0).unwrap();
        assert!((w - 2.0 * v).abs() < 1e-13);
        assert!(delta_pr(&[1.0], 0.0, 1.0, 1.0, 1.0).is_err());
        assert!((delta_s(&[3.0, 4.0], 2.0, 0.5) - 5.0).abs() < 1e-14);
        assert!((delta_s_tilde(1.0, &[-1.0, 2.0], 0.5) - 2.5).abs() < 1e-14);
        assert!((gho(&[2.0], 0.25, 1.0).unwrap() - 4.0).abs() < 1e-14);
        let b = EstimateBundle::compute(vec![0.0; 3], vec![0.0; 3], vec![0.0; 3], 1.0, 0.0, 1.0).unwrap();
        assert_eq!((b.delta_pr, b.delta_s, b.delta_s_tilde, b.gho_new), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(effectivity(1.0, 0.0), None);
        assert_eq!(effectivity(3.0, 1.5), Some(2.0));
        for k in EstimatorKind::ALL {
            assert_eq!(EstimatorKind::parse(k.name()), Some(k));
        }
    }
}
