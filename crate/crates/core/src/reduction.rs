//! Orthonormal bases, POD and the POD-greedy drivers.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::eim::AffineModel;
use crate::energy::EnergyMatrix;
use crate::error::{Error, Result};
use crate::estimators::{DualTable, EstimatorKind, PrimalTable};
use crate::hf::{solve_dual, solve_primal, TimeGrid};
use crate::linalg::{axpy, dot};
use crate::mpfa::{ParameterPoint, ParameterRanges};
use crate::online::{CertifiedResult, Coercivity, ReducedModel, ReducedOperator};

/// Relative norm below which a vector is treated as linearly dependent.
pub const DEPENDENCE_TOL: f64 = 1e-12;

/// Basis orthonormal in the `G*` inner product, with cached `G* z_i`.
#[derive(Clone, Debug, Default)]
pub struct GBasis {
    pub vecs: Vec<Vec<f64>>,
    gvecs: Vec<Vec<f64>>,
}

impl GBasis {
    pub fn new() -> Self {
        Self::default()
    }

    /// Re-orthonormalizes stored vectors, e.g. after loading.
    pub fn from_vecs(vecs: Vec<Vec<f64>>, g: &EnergyMatrix) -> Self {
        let mut b = Self::new();
        for v in vecs {
            b.push(v, g);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.vecs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vecs.is_empty()
    }

    /// Two-pass modified Gram-Schmidt; returns whether `v` was accepted.
    pub fn push(&mut self, mut v: Vec<f64>, g: &EnergyMatrix) -> bool {
        let orig = dot(&v, &g.apply(&v)).max(0.0).sqrt();
        if !(orig > 0.0) || !orig.is_finite() {
            return false;
        }
        for _ in 0..2 {
            for (z, gz) in self.vecs.iter().zip(&self.gvecs) {
                let c = dot(&v, gz);
                axpy(-c, z, &mut v);
            }
        }
        let gv = g.apply(&v);
        let nrm = dot(&v, &gv).max(0.0).sqrt();
        if nrm < DEPENDENCE_TOL * orig {
            return false;
        }
        v.iter_mut().for_each(|x| *x /= nrm);
        self.gvecs.push(gv.into_iter().map(|x| x / nrm).collect());
        self.vecs.push(v);
        true
    }

    pub fn truncate(&mut self, n: usize) {
        self.vecs.truncate(n);
        self.gvecs.truncate(n);
    }

    /// `v − Σ ⟨v, z_i⟩ z_i`.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for (z, gz) in self.vecs.iter().zip(&self.gvecs) {
            axpy(-dot(v, gz), z, &mut r);
        }
        r
    }

    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        self.gvecs.iter().map(|gz| dot(v, gz)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Pod {
    pub modes: Vec<Vec<f64>>,
    /// All retained-candidate eigenvalues in decreasing order.
    pub eigenvalues: Vec<f64>,
}

/// POD by the method of snapshots in the `G*` inner product; keeps the fewest modes
/// reaching relative information content `ric`.
pub fn pod(snaps: &[Vec<f64>], g: &EnergyMatrix, ric: f64) -> Pod {
    let k = snaps.len();
    if k == 0 {
        return Pod { modes: Vec::new(), eigenvalues: Vec::new() };
    }
    let gs: Vec<Vec<f64>> = snaps.iter().map(|s| g.apply(s)).collect();
    let mut c = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let v = 0.5 * (dot(&snaps[i], &gs[j]) + dot(&snaps[j], &gs[i]));
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal));
    let lams: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = lams.iter().sum();
    let lmax = lams.first().copied().unwrap_or(0.0);
    let mut modes = Vec::new();
    if total <= 0.0 {
        return Pod { modes, eigenvalues: lams };
    }
    let mut acc = 0.0;
    for (r, &i) in order.iter().enumerate() {
        let lam = lams[r];
        if lam <= 1e-13 * lmax {
            break;
        }
        let mut phi = vec![0.0; snaps[0].len()];
        for (j, s) in snaps.iter().enumerate() {
            axpy(eig.eigenvectors[(j, i)] / lam.sqrt(), s, &mut phi);
        }
        modes.push(phi);
        acc += lam;
        if acc >= ric * total {
            break;
        }
    }
    Pod { modes, eigenvalues: lams }
}

#[derive(Clone, Debug)]
pub struct GreedySettings {
    pub estimator: EstimatorKind,
    /// Relative tolerance on the driving estimator.
    pub tol: f64,
    pub n_max: usize,
    pub max_rounds: usize,
    pub ric: f64,
}

impl GreedySettings {
    pub fn primal(tol: f64, n_max: usize) -> Self {
        GreedySettings { estimator: EstimatorKind::DeltaPr, tol, n_max, max_rounds: 200, ric: 1.0 - 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GreedyStop {
    Tolerance,
    MaxBasis,
    MaxRounds,
    Stagnation,
}

#[derive(Clone, Debug)]
pub struct GreedyRound {
    pub round: usize,
    pub n_pr: usize,
    pub n_du: usize,
    /// Training index added in this round.
    pub added: usize,
    /// Largest driving estimator over the training set after the update.
    pub max_estimate: f64,
    pub max_relative: f64,
    pub argmax: usize,
}

/// Offline data shared by every greedy round.
pub struct GreedyProblem<'a> {
    pub affine: &'a AffineModel,
    pub energy: &'a EnergyMatrix,
    pub coercivity: Coercivity,
    pub alpha_m: f64,
    pub grid: TimeGrid,
    pub ranges: ParameterRanges,
    pub training: &'a [ParameterPoint],
    pub training_theta: Vec<Vec<f64>>,
    pub training_alpha: Vec<f64>,
}

impl<'a> GreedyProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        affine: &'a AffineModel,
        energy: &'a EnergyMatrix,
        coercivity: Coercivity,
        alpha_m: f64,
        grid: TimeGrid,
        ranges: ParameterRanges,
        training: &'a [ParameterPoint],
    ) -> Result<Self> {
        if training.is_empty() {
            return Err(Error::Model("empty training set".into()));
        }
        let training_theta = crate::par::map(training, |xi| affine.theta(xi))?;
        let pairs: Vec<(ParameterPoint, Vec<f64>)> = training.iter().copied().zip(training_theta.iter().cloned()).collect();
        let training_alpha = crate::par::map(&pairs, |(xi, th)| coercivity.alpha_lb(xi, th))?;
        Ok(GreedyProblem { affine, energy, coercivity, alpha_m, grid, ranges, training, training_theta, training_alpha })
    }

    /// Lifted high-fidelity trajectories `u⁰..u^N` and optionally `Ψ⁰..Ψ^N` from the affine operator.
    pub fn snapshots(&self, theta: &[f64], dual: bool) -> Result<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> {
        let op = self.affine.assemble_lifted(theta)?;
        let u = solve_primal(&op, &vec![0.0; op.n()], &self.grid)?;
        let psi = if dual { Some(solve_dual(&op, &self.grid)?) } else { None };
        Ok((u, psi))
    }

    pub fn build_model(&self, z_pr: &GBasis, z_du: Option<&GBasis>) -> Result<ReducedModel> {
        let op = ReducedOperator::project(z_pr, z_du, self.affine, self.energy)?;
        let primal_table = PrimalTable::build(z_pr, self.affine, self.energy)?;
        let dual_table = match z_du {
            Some(z) => Some(DualTable::build(z, self.affine, self.energy)?),
            None => None,
        };
        Ok(ReducedModel {
            grid: self.grid,
            ranges: self.ranges,
            variant: self.energy.variant,
            map: self.affine.map.clone(),
            op,
            primal_table,
            dual_table,
            coercivity: self.coercivity.clone(),
            alpha_m: self.alpha_m,
        })
    }

    /// Evaluates the model on the whole training set with cached coercivity bounds.
    pub fn sweep(&self, model: &ReducedModel) -> Result<Vec<CertifiedResult>> {
        let idx: Vec<usize> = (0..self.training.len()).collect();
        crate::par::map(&idx, |&i| {
            model.evaluate_with(self.training[i], self.training_theta[i].clone(), self.training_alpha[i], self.grid.n_steps)
        })
    }

    /// Terminal dual data `−M_c⁻¹ l_d` used to seed the dual basis.
    pub fn dual_seeds(&self) -> Vec<Vec<f64>> {
        self.affine.l.iter().map(|l| crate::hf::dual_terminal(l, &self.affine.mass)).collect()
    }
}

/// Driving estimator and its relative version.
pub fn driving_value(kind: EstimatorKind, r: &CertifiedResult) -> (f64, f64) {
    let v = kind.value(&r.estimates);
    let scale = if kind.is_goal() {
        if kind.uses_corrected_output() { r.s_corrected.unwrap_or(r.s_plain) } else { r.s_plain }.abs()
    } else {
        r.primal_norm()
    };
    (v, v / scale.max(f64::MIN_POSITIVE))
}

pub struct GreedyOutcome {
    pub z_pr: GBasis,
    pub z_du: Option<GBasis>,
    pub model: ReducedModel,
    pub rounds: Vec<GreedyRound>,
    pub selected: Vec<usize>,
    pub stop: GreedyStop,
}

/// Training index nearest to `target` in log distance.
pub fn nearest_index(training: &[ParameterPoint], target: &ParameterPoint) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, t) in training.iter().enumerate() {
        let d = t.log_distance(target);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

type Observer<'o> = dyn FnMut(&GreedyRound, &ReducedModel, &GBasis, Option<&GBasis>) -> Result<()> + 'o;

/// POD-greedy for the primal basis, and jointly for the dual basis when the driving
/// estimator is goal oriented.
pub fn pod_greedy(problem: &GreedyProblem, settings: &GreedySettings, observer: &mut Observer) -> Result<GreedyOutcome> {
    let goal = settings.estimator.is_goal();
    let g = problem.energy;
    let n = problem.grid.n_steps;
    let mut z_pr = GBasis::new();
    let mut z_du = if goal { Some(GBasis::new()) } else { None };
    if let Some(zd) = z_du.as_mut() {
        for s in problem.dual_seeds() {
            zd.push(s, g);
        }
    }
    let mut cache: HashMap<usize, (Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> = HashMap::new();
    let mut selected = Vec::new();
    let mut rounds = Vec::new();
    let mut pick = nearest_index(problem.training, &problem.ranges.log_midpoint());
    let mut model;
    let stop;
    let mut round = 0;
    loop {
        if !cache.contains_key(&pick) {
            let snaps = problem.snapshots(&problem.training_theta[pick], goal)?;
            cache.insert(pick, snaps);
        }
        let (u, psi) = &cache[&pick];
        selected.push(pick);
        let errs: Vec<Vec<f64>> = u[1..=n].iter().map(|v| z_pr.residual(v)).collect();
        let mut added = 0;
        for mode in pod(&errs, g, settings.ric).modes {
            if z_pr.len() >= settings.n_max {
                break;
            }
            added += z_pr.push(mode, g) as usize;
        }
        if let (Some(zd), Some(psi)) = (z_du.as_mut(), psi.as_ref()) {
            let errs: Vec<Vec<f64>> = psi[..n].iter().map(|v| zd.residual(v)).collect();
            for mode in pod(&errs, g, settings.ric).modes {
                if zd.len() >= settings.n_max {
                    break;
                }
                added += zd.push(mode, g) as usize;
            }
        }
        if z_pr.is_empty() {
            return Err(Error::Model("first greedy snapshot is zero".into()));
        }
        model = problem.build_model(&z_pr, z_du.as_ref())?;
        let results = problem.sweep(&model)?;
        let mut worst = (0usize, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (i, r) in results.iter().enumerate() {
            let (v, rel) = driving_value(settings.estimator, r);
            if rel > worst.2 {
                worst = (i, v, rel);
            }
        }
        round += 1;
        let rec = GreedyRound {
            round,
            n_pr: z_pr.len(),
            n_du: z_du.as_ref().map_or(0, |z| z.len()),
            added: pick,
            max_estimate: worst.1,
            max_relative: worst.2,
            argmax: worst.0,
        };
        observer(&rec, &model, &z_pr, z_du.as_ref())?;
        rounds.push(rec);
        if worst.2 <= settings.tol {
            stop = GreedyStop::Tolerance;
            break;
        }
        if z_pr.len() >= settings.n_max {
            stop = GreedyStop::MaxBasis;
            break;
        }
        if round >= settings.max_rounds {
            stop = GreedyStop::MaxRounds;
            break;
        }
        if added == 0 || selected.contains(&worst.0) {
            stop = GreedyStop::Stagnation;
            break;
        }
        pick = worst.0;
    }
    Ok(GreedyOutcome { z_pr, z_du, model, rounds, selected, stop })
}

/// Primal-only greedy driven by `Δ_pr`.
pub fn pod_greedy_primal(problem: &GreedyProblem, tol: f64, n_max: usize) -> Result<GreedyOutcome> {
    pod_greedy(problem, &GreedySettings::primal(tol, n_max), &mut |_, _, _, _| Ok(()))
}
