//! Case setup and the offline pipeline: EIM, affine operators, energy matrices, SCM and POD-greedy.

use std::sync::Arc;

use crate::artifact::OfflineArtifact;
use crate::config::Config;
use crate::eim::{self, AffineModel};
use crate::energy::{alpha_m, EnergyMatrix, EnergyVariant};
use crate::error::{Error, Result};
use crate::estimators::{trajectory_error, TrueErrors};
use crate::hf::{hydrostatic_init, solve_dual, solve_primal, TimeGrid};
use crate::linalg::{dot, Csr};
use crate::mesh::{build_cartesian_mesh, select_gamma_int, select_perforations, tag_boundaries, Aabb};
use crate::mpfa::{Discretization, ParameterPoint};
use crate::online::{CertifiedResult, Coercivity, ReducedModel};
use crate::reduction::{pod_greedy, GreedyOutcome, GreedyProblem, GreedyRound, GreedySettings};
use crate::scm::{self, ScmModel, ScmOracle};

/// Mesh, discretization, time grid and parameter samples of one run.
#[derive(Clone, Debug)]
pub struct Case {
    pub config: Config,
    pub disc: Discretization,
    pub grid: TimeGrid,
    pub training: Vec<ParameterPoint>,
    pub test: Vec<ParameterPoint>,
    pub xi_star: ParameterPoint,
    pub p0: Vec<f64>,
}

impl Case {
    pub fn from_config(config: Config) -> Result<Self> {
        let m = &config.mesh;
        let extents = Aabb::new(m.lo, m.hi);
        let mesh = build_cartesian_mesh(m.nx, m.ny, m.nz, extents, &m.zone())?;
        let mut mesh = tag_boundaries(mesh, &m.dirichlet)?;
        mesh.perforations = select_perforations(&mesh, &m.well_box.aabb())?;
        mesh.gamma_int = select_gamma_int(&mesh, &m.gamma_int.aabb())?;
        let disc = Discretization::new(mesh, config.physics)?;
        let grid = TimeGrid::new(config.time.dt(), config.time.n_steps()?)?;
        let (training, test) = config.samples();
        let xi_star = config.parameters.log_midpoint();
        let p0 = hydrostatic_init(&disc);
        Ok(Case { config, disc, grid, training, test, xi_star, p0 })
    }

    pub fn n(&self) -> usize {
        self.disc.n()
    }
}

/// High-fidelity reference at one parameter, by direct assembly.
#[derive(Clone, Debug)]
pub struct Truth {
    pub p: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    /// `s(t^n)` for `n = 0..N`.
    pub s: Vec<f64>,
}

/// Everything the greedy needs, built once per case.
pub struct Offline {
    pub case: Case,
    pub affine: AffineModel,
    /// `M + Δt A*_sym`; defines the true-error norm.
    pub spacetime: EnergyMatrix,
    /// `A*_sym`, only built for the stiffness variant.
    pub stiffness: Option<EnergyMatrix>,
    pub variant: EnergyVariant,
    pub alpha_m: f64,
    pub oracle: Arc<ScmOracle>,
    pub scm: Option<ScmModel>,
}

impl Offline {
    /// EIM on the training set, affine model, `G*` and, if enabled, SCM.
    pub fn prepare(case: Case, variant: EnergyVariant) -> Result<Self> {
        let cfg = &case.config;
        let snaps = crate::par::map(&case.training, |xi| case.disc.coefficient_vector(xi))?;
        let eim_model = eim::train(&snaps, cfg.eim.tol, cfg.eim.max_terms)?;
        drop(snaps);
        let affine = AffineModel::build(&case.disc, eim_model, case.xi_star, case.p0.clone())?;
        let a_star = case.disc.assemble(&case.xi_star)?.a;
        let spacetime = EnergyMatrix::build(&case.disc.mass, &a_star, case.grid.dt, case.xi_star)?;
        let stiffness = match variant {
            EnergyVariant::SpaceTime => None,
            EnergyVariant::Stiffness => Some(EnergyMatrix::stiffness(&a_star, case.grid.dt, case.xi_star)?),
        };
        let g = stiffness.as_ref().unwrap_or(&spacetime);
        let am = alpha_m(&case.disc.mass, g)?;
        let a_sym: Vec<Csr> = (0..affine.d()).map(|d| affine.a_matrix(d).sym_part()).collect();
        let oracle = Arc::new(ScmOracle::new(&a_sym, g)?);
        let scm = if cfg.scm.enabled {
            let thetas = crate::par::map(&case.training, |xi| affine.theta(xi))?;
            Some(scm::train(&oracle, &case.training, &thetas, cfg.scm.m1, cfg.scm.m2, cfg.scm.tol, cfg.scm.max_points)?)
        } else {
            None
        };
        Ok(Offline { case, affine, spacetime, stiffness, variant, alpha_m: am, oracle, scm })
    }

    pub fn energy(&self) -> &EnergyMatrix {
        self.stiffness.as_ref().unwrap_or(&self.spacetime)
    }

    pub fn coercivity(&self) -> Coercivity {
        match &self.scm {
            Some(m) => Coercivity::Scm(m.clone()),
            None => Coercivity::Exact(self.oracle.clone()),
        }
    }

    pub fn problem(&self) -> Result<GreedyProblem<'_>> {
        GreedyProblem::new(
            &self.affine,
            self.energy(),
            self.coercivity(),
            self.alpha_m,
            self.case.grid,
            self.case.config.parameters,
            &self.case.training,
        )
    }

    pub fn settings(&self) -> GreedySettings {
        let g = &self.case.config.greedy;
        GreedySettings { estimator: g.estimator, tol: g.tol, n_max: g.n_max, max_rounds: g.max_rounds, ric: g.ric }
    }

    pub fn greedy(
        &self,
        settings: &GreedySettings,
        observer: &mut dyn FnMut(&GreedyRound, &ReducedModel, &crate::reduction::GBasis, Option<&crate::reduction::GBasis>) -> Result<()>,
    ) -> Result<GreedyOutcome> {
        if settings.estimator.variant() != self.variant {
            return Err(Error::Config(format!(
                "estimator {} needs the {:?} energy norm",
                settings.estimator.name(),
                settings.estimator.variant()
            )));
        }
        pod_greedy(&self.problem()?, settings, observer)
    }

    pub fn truth(&self, xi: &ParameterPoint) -> Result<Truth> {
        truth(&self.case, xi)
    }

    pub fn artifact(&self, config_text: &str, out: &GreedyOutcome) -> OfflineArtifact {
        OfflineArtifact {
            config_text: config_text.to_string(),
            model: out.model.clone(),
            z_pr: out.z_pr.vecs.clone(),
            z_du: out.z_du.as_ref().map(|z| z.vecs.clone()),
            selected: out.selected.clone(),
            rounds: out.rounds.clone(),
            eim_error_curve: self.affine.eim.error_curve.clone(),
        }
    }
}

/// Parses `config_text`, runs the whole offline stage and packages the result.
pub fn run_offline(
    config_text: &str,
    observer: &mut dyn FnMut(&GreedyRound, &ReducedModel, &crate::reduction::GBasis, Option<&crate::reduction::GBasis>) -> Result<()>,
) -> Result<(Offline, GreedyOutcome, OfflineArtifact)> {
    let config = Config::parse(config_text)?;
    let variant = config.greedy.estimator.variant();
    let off = Offline::prepare(Case::from_config(config)?, variant)?;
    let out = off.greedy(&off.settings(), observer)?;
    let art = off.artifact(config_text, &out);
    Ok((off, out, art))
}

pub fn truth(case: &Case, xi: &ParameterPoint) -> Result<Truth> {
    let op = case.disc.assemble(xi)?;
    let p = solve_primal(&op, &case.p0, &case.grid)?;
    let psi = solve_dual(&op, &case.grid)?;
    let s = p.iter().map(|v| dot(&op.l, v) + op.c).collect();
    Ok(Truth { p, psi, s })
}

/// True errors of a reduced evaluation at the full horizon.
pub fn compare(
    g: &EnergyMatrix,
    p0: &[f64],
    z_pr: &[Vec<f64>],
    z_du: Option<&[Vec<f64>]>,
    res: &CertifiedResult,
    truth: &Truth,
) -> Result<TrueErrors> {
    let n = res.horizon;
    if n + 1 != truth.p.len() {
        return Err(Error::Domain("true errors are only defined at the final horizon".into()));
    }
    let lifted: Vec<Vec<f64>> = res.u[..=n].iter().map(|u| ReducedModel::lift(z_pr, p0, u)).collect();
    let primal = trajectory_error(g, &truth.p, &lifted, 1..n + 1)?;
    let dual = match (z_du, &res.psi) {
        (Some(zd), Some(psi)) => {
            let zero = vec![0.0; p0.len()];
            let lifted: Vec<Vec<f64>> = psi.iter().map(|v| ReducedModel::lift(zd, &zero, v)).collect();
            Some(trajectory_error(g, &truth.psi, &lifted, 0..n)?)
        }
        _ => None,
    };
    let s = truth.s[n];
    Ok(TrueErrors {
        primal,
        dual,
        output_plain: (s - res.s_plain).abs(),
        output_corrected: res.s_corrected.map(|v| (s - v).abs()),
    })
}
