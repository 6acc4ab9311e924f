//! Successive constraint method for certified bounds of `α_{A_sym}(ξ)`.

pub mod lp;

use nalgebra::DMatrix;

use crate::energy::{eigen_range, smallest_pair, DenseGeneralized, EnergyMatrix};
use crate::error::{check_dim, Error, Result};
use crate::linalg::Csr;
use crate::mpfa::ParameterPoint;

#[derive(Clone, Debug, PartialEq)]
pub struct ScmPoint {
    pub training_index: usize,
    pub xi: ParameterPoint,
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub w: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScmModel {
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub selected: Vec<ScmPoint>,
    pub m1: usize,
    pub m2: usize,
    pub tol: f64,
    pub training: Vec<ParameterPoint>,
    pub training_theta: Vec<Vec<f64>>,
    /// Lower bounds at the training points after the last round.
    pub training_lb: Vec<f64>,
    /// Max relative gap after each round.
    pub gap_history: Vec<f64>,
}

/// Precomputed `C_d = L⁻¹ A_{d,sym} L⁻ᵀ`.
#[derive(Clone, Debug)]
pub struct ScmOracle {
    pub c: Vec<DMatrix<f64>>,
}

impl ScmOracle {
    pub fn new(a_sym: &[Csr], g: &EnergyMatrix) -> Result<Self> {
        let dg = DenseGeneralized::new(&g.g)?;
        Self::with_factor(a_sym, &dg)
    }

    pub fn with_factor(a_sym: &[Csr], dg: &DenseGeneralized) -> Result<Self> {
        Ok(ScmOracle { c: a_sym.iter().map(|a| dg.transform(a)).collect() })
    }

    fn combine(&self, theta: &[f64]) -> DMatrix<f64> {
        let mut s = &self.c[0] * theta[0];
        for (cd, t) in self.c.iter().zip(theta).skip(1) {
            s += cd * *t;
        }
        s
    }

    /// Exact `α(ξ)` and the minimizing `w` vector.
    pub fn alpha_and_w(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.c.len(), theta.len())?;
        let (alpha, z) = smallest_pair(self.combine(theta))?;
        let w = self.c.iter().map(|cd| (z.transpose() * cd * &z)[(0, 0)]).collect();
        Ok((alpha, w))
    }

    pub fn alpha(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.c.len(), theta.len())?;
        Ok(smallest_pair(self.combine(theta))?.0)
    }

    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for cd in &self.c {
            let (a, b) = crate::linalg::sym_eigen_range(cd.clone())?;
            let pad = 1e-10 * a.abs().max(b.abs());
            lo.push(a - pad);
            hi.push(b + pad);
        }
        Ok((lo, hi))
    }
}

/// Box from the generalized spectra of `(A_{d,sym}, G*)` without forming an oracle.
pub fn bounding_box(a_sym: &[Csr], dg: &DenseGeneralized) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for a in a_sym {
        let (x, y) = eigen_range(a, dg)?;
        lo.push(x);
        hi.push(y);
    }
    Ok((lo, hi))
}

fn nearest(from: &ParameterPoint, pts: &[ParameterPoint], k: usize, skip: &[bool]) -> Vec<usize> {
    let mut idx: Vec<(f64, usize)> = pts.iter().enumerate().filter(|(i, _)| !skip[*i]).map(|(i, p)| (from.log_distance(p), i)).collect();
    idx.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    idx.into_iter().take(k).map(|x| x.1).collect()
}

impl ScmModel {
    pub fn d(&self) -> usize {
        self.box_lo.len()
    }

    pub fn alpha_ub(&self, theta: &[f64]) -> f64 {
        self.selected
            .iter()
            .map(|p| p.w.iter().zip(theta).map(|(w, t)| w * t).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    /// LP lower bound with the given unselected lower-bound data, clamped at zero.
    fn lp_bound(&self, xi: &ParameterPoint, theta: &[f64], lbs: &[f64]) -> Result<f64> {
        let d = self.d();
        let width: Vec<f64> = (0..d).map(|i| self.box_hi[i] - self.box_lo[i]).collect();
        let sel_pts: Vec<ParameterPoint> = self.selected.iter().map(|p| p.xi).collect();
        let near_sel = nearest(xi, &sel_pts, self.m1, &vec![false; sel_pts.len()]);
        let mut taken = vec![false; self.training.len()];
        for p in &self.selected {
            taken[p.training_index] = true;
        }
        let near_unsel = nearest(xi, &self.training, self.m2, &taken);
        let mut g = Vec::new();
        let mut h = Vec::new();
        let mut push = |th: &[f64], bound: f64| {
            let row: Vec<f64> = (0..d).map(|i| th[i] * width[i]).collect();
            let offset: f64 = (0..d).map(|i| th[i] * self.box_lo[i]).sum();
            let mag: f64 = bound.abs() + (0..d).map(|i| th[i].abs() * self.box_lo[i].abs().max(self.box_hi[i].abs())).sum::<f64>();
            let s = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if s > 1e-13 * mag {
                g.push(row.iter().map(|v| v / s).collect());
                h.push((bound - offset - 1e-11 * mag) / s);
            }
        };
        for &j in &near_sel {
            let p = &self.selected[j];
            push(&p.theta, p.alpha);
        }
        for &j in &near_unsel {
            push(&self.training_theta[j], lbs[j]);
        }
        let c: Vec<f64> = (0..d).map(|i| theta[i] * width[i]).collect();
        let offset: f64 = (0..d).map(|i| theta[i] * self.box_lo[i]).sum();
        let sol = lp::minimize(&c, &g, &h, &vec![1.0; d])?;
        Ok((sol.objective + offset).max(0.0))
    }

    /// Certified lower bound at an arbitrary parameter.
    pub fn alpha_lb(&self, xi: &ParameterPoint, theta: &[f64]) -> Result<f64> {
        check_dim(self.d(), theta.len())?;
        if theta.iter().all(|&t| t == 0.0) {
            return Ok(0.0);
        }
        if let Some(p) = self.selected.iter().find(|p| p.xi == *xi) {
            return Ok(p.alpha);
        }
        let lb = self.lp_bound(xi, theta, &self.training_lb)?;
        match self.training.iter().position(|t| t == xi) {
            Some(i) => Ok(lb.max(self.training_lb[i])),
            None => Ok(lb),
        }
    }

    /// Relative gap `(UB − LB)/max(UB, floor)`.
    pub fn gap(lb: f64, ub: f64) -> f64 {
        (ub - lb) / ub.abs().max(1e-300)
    }
}

/// Greedy SCM training.
///
/// `thetas[i]` is the affine coefficient vector of `training[i]`.
pub fn train(
    oracle: &ScmOracle,
    training: &[ParameterPoint],
    thetas: &[Vec<f64>],
    m1: usize,
    m2: usize,
    tol: f64,
    max_points: usize,
) -> Result<ScmModel> {
    if training.is_empty() || training.len() != thetas.len() {
        return Err(Error::Model("SCM needs a non-empty training set with coefficients".into()));
    }
    let (box_lo, box_hi) = oracle.bounding_box()?;
    let mut model = ScmModel {
        box_lo,
        box_hi,
        selected: Vec::new(),
        m1,
        m2,
        tol,
        training: training.to_vec(),
        training_theta: thetas.to_vec(),
        training_lb: vec![0.0; training.len()],
        gap_history: Vec::new(),
    };
    let mut pick = 0usize;
    while model.selected.len() < max_points.max(1) {
        if model.selected.iter().any(|p| p.training_index == pick) {
            break;
        }
        let (alpha, w) = oracle.alpha_and_w(&thetas[pick])?;
        model.selected.push(ScmPoint { training_index: pick, xi: training[pick], theta: thetas[pick].clone(), alpha, w });
        let prev = model.training_lb.clone();
        let mut worst = (0usize, f64::NEG_INFINITY);
        for i in 0..training.len() {
            let ub = model.alpha_ub(&thetas[i]);
            let lb = match model.selected.iter().find(|p| p.training_index == i) {
                Some(p) => p.alpha.min(ub),
                None => model.lp_bound(&training[i], &thetas[i], &prev)?.max(prev[i]),
            };
            model.training_lb[i] = lb;
            let eta = ScmModel::gap(lb, ub);
            if eta > worst.1 {
                worst = (i, eta);
            }
        }
        model.gap_history.push(worst.1);
        if worst.1 <= tol {
            break;
        }
        pick = worst.0;
    }
    Ok(model)
}
