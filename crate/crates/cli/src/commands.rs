//! `offline`, `online` and `validate`.

use std::path::{Path, PathBuf};

use darcy_rb::artifact::OfflineArtifact;
use darcy_rb::config::Config;
use darcy_rb::energy::{EnergyMatrix, EnergyVariant};
use darcy_rb::estimators::{effectivity, trajectory_error, EstimatorKind};
use darcy_rb::linalg::dot;
use darcy_rb::mpfa::ParameterPoint;
use darcy_rb::offline::{compare, truth, Case, Offline, Truth};
use darcy_rb::online::ReducedModel;

use crate::params::PointSource;
use crate::schema::{self, num};
use crate::{io_err, CliError, Result};

/// Relative slack for round-off when comparing true errors against bounds.
pub const FLOOR: f64 = 1e-12;

pub struct OfflineArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub rounds: Option<PathBuf>,
    pub seed_override: Option<u64>,
    pub estimator: Option<EstimatorKind>,
    pub track_errors: bool,
}

#[derive(Clone, Debug)]
pub struct OfflineSummary {
    pub n: usize,
    pub n_pr: usize,
    pub n_du: usize,
    pub rounds: usize,
    pub eim_terms: usize,
    pub scm_points: usize,
    pub stop: String,
    pub rounds_csv: PathBuf,
}

/// Rewrites seed and estimator in the config text so the archive records what actually ran.
pub fn apply_overrides(text: &str, seed: Option<u64>, estimator: Option<EstimatorKind>) -> Result<String> {
    Config::parse(text)?;
    if seed.is_none() && estimator.is_none() {
        return Ok(text.to_string());
    }
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Usage(e.to_string()))?;
    let section = |t: &mut toml::Table, name: &str| -> Result<toml::Table> {
        match t.remove(name) {
            None => Ok(toml::Table::new()),
            Some(toml::Value::Table(s)) => Ok(s),
            Some(_) => Err(CliError::Usage(format!("[{name}] is not a table"))),
        }
    };
    if let Some(seed) = seed {
        let v = i64::try_from(seed).map_err(|_| CliError::Usage("seed must fit in a signed 64-bit integer".into()))?;
        let mut s = section(&mut table, "sampling")?;
        s.insert("seed".into(), toml::Value::Integer(v));
        table.insert("sampling".into(), toml::Value::Table(s));
    }
    if let Some(e) = estimator {
        let mut s = section(&mut table, "greedy")?;
        s.insert("estimator".into(), toml::Value::String(e.name().into()));
        table.insert("greedy".into(), toml::Value::Table(s));
    }
    let out = toml::to_string(&table).map_err(|e| CliError::Usage(e.to_string()))?;
    Config::parse(&out)?;
    Ok(out)
}

pub fn default_rounds_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".rounds.csv");
    PathBuf::from(s)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn offline(args: &OfflineArgs) -> Result<OfflineSummary> {
    let raw = std::fs::read_to_string(&args.config).map_err(io_err(&args.config))?;
    let text = apply_overrides(&raw, args.seed_override, args.estimator)?;
    let config = Config::parse(&text)?;
    if !config.scm.enabled {
        return Err(CliError::Usage("archiving needs SCM coercivity bounds; set [scm] enabled = true".into()));
    }
    let kind = config.greedy.estimator;
    let off = Offline::prepare(Case::from_config(config)?, kind.variant())?;
    let truths: Option<Vec<Truth>> =
        if args.track_errors { Some(darcy_rb::par::map(&off.case.training, |xi| off.truth(xi))?) } else { None };
    let mut tracked: Vec<(f64, f64)> = Vec::new();
    let out = off.greedy(&off.settings(), &mut |_, model, zp, zd| {
        if let Some(truths) = &truths {
            let idx: Vec<usize> = (0..truths.len()).collect();
            let errs = darcy_rb::par::map(&idx, |&i| {
                let res = model.evaluate(&off.case.training[i])?;
                compare(&off.spacetime, &off.case.p0, &zp.vecs, zd.map(|z| z.vecs.as_slice()), &res, &truths[i])
            })?;
            let pr = errs.iter().map(|e| e.primal).fold(0.0, f64::max);
            let use_corrected = kind.is_goal() && kind.uses_corrected_output();
            let s = errs
                .iter()
                .map(|e| if use_corrected { e.output_corrected.unwrap_or(e.output_plain) } else { e.output_plain })
                .fold(0.0, f64::max);
            tracked.push((pr, s));
        }
        Ok(())
    })?;
    let art = off.artifact(&text, &out);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    art.save(&args.out)?;
    let rows: Vec<Vec<String>> = out
        .rounds
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let xi = off.case.training[r.added];
            let t = tracked.get(i);
            vec![
                r.round.to_string(),
                r.n_pr.to_string(),
                r.n_du.to_string(),
                r.added.to_string(),
                num(Some(xi.kappa1)),
                num(Some(xi.kappa2)),
                num(Some(r.max_estimate)),
                num(Some(r.max_relative)),
                r.argmax.to_string(),
                num(t.map(|t| t.0)),
                num(t.map(|t| t.1)),
            ]
        })
        .collect();
    let rounds_csv = args.rounds.clone().unwrap_or_else(|| default_rounds_path(&args.out));
    write_csv(&rounds_csv, schema::ROUNDS, &rows)?;
    Ok(OfflineSummary {
        n: off.case.n(),
        n_pr: out.z_pr.len(),
        n_du: out.z_du.as_ref().map_or(0, |z| z.len()),
        rounds: out.rounds.len(),
        eim_terms: off.affine.eim.m(),
        scm_points: off.scm.as_ref().map_or(0, |s| s.selected.len()),
        stop: format!("{:?}", out.stop),
        rounds_csv,
    })
}

fn load(archive: &Path) -> Result<(OfflineArtifact, Config)> {
    if !archive.exists() {
        return Err(CliError::Usage(format!("archive {} does not exist", archive.display())));
    }
    let art = OfflineArtifact::load(archive)?;
    let config = Config::parse(&art.config_text)?;
    Ok((art, config))
}

/// Certified reduced outputs at the requested points; returns the row count.
pub fn online(archive: &Path, points: &PointSource, horizon: Option<usize>, out: &Path) -> Result<usize> {
    let (art, config) = load(archive)?;
    let model = &art.model;
    let pts = points.resolve(&config)?;
    let h = horizon.unwrap_or(model.grid.n_steps);
    let results = darcy_rb::par::map(&pts, |xi| model.evaluate_at(xi, h))?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let e = &r.estimates;
            let dual = model.has_dual();
            let d = |v: f64| num(dual.then_some(v));
            vec![
                num(Some(r.xi.kappa1)),
                num(Some(r.xi.kappa2)),
                r.horizon.to_string(),
                model.op.n_pr().to_string(),
                model.op.n_du().to_string(),
                num(Some(e.alpha_lb)),
                num(Some(r.s_plain)),
                num(r.s_corrected),
                num(Some(e.delta_pr)),
                d(e.delta_du),
                d(e.delta_s),
                d(e.delta_s_tilde),
                num(Some(e.gho_pr)),
                d(e.gho_s),
                d(e.gho_new),
            ]
        })
        .collect();
    write_csv(out, schema::ONLINE, &rows)?;
    Ok(rows.len())
}

#[derive(Clone, Debug, Default)]
pub struct ValidateSummary {
    pub points: usize,
    pub violations: usize,
    pub max_eff_plain: Option<f64>,
}

struct Check {
    err: Option<f64>,
    bound: Option<f64>,
    floor: f64,
    /// Reported only when false.
    enforced: bool,
}

impl Check {
    fn holds(&self) -> bool {
        match (self.err, self.bound) {
            (Some(e), Some(b)) if self.enforced => e <= b + self.floor,
            _ => true,
        }
    }

    fn eff(&self) -> Option<f64> {
        effectivity(self.bound?, self.err?)
    }
}

/// `(Σ_{n≥1} Δt · eᵀ A_sym(ξ) e)^{1/2}`, the norm bounded by the stiffness-variant primal estimator.
fn energy_error(a: &darcy_rb::linalg::Csr, dt: f64, x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (p, q) in x.iter().zip(y).skip(1) {
        let e: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
        s += dt * dot(&e, &a.matvec(&e));
    }
    s.max(0.0).sqrt()
}

/// Reduced evaluation against high-fidelity solves; errors if any bound is violated.
pub fn validate(archive: &Path, points: &PointSource, out: &Path) -> Result<ValidateSummary> {
    let (art, config) = load(archive)?;
    let model = &art.model;
    let pts = points.resolve(&config)?;
    let case = Case::from_config(config)?;
    let a_star = case.disc.assemble(&case.xi_star)?.a;
    let g = EnergyMatrix::build(&case.disc.mass, &a_star, case.grid.dt, case.xi_star)?;
    let n = case.grid.n_steps;
    let dt = case.grid.dt;
    let rows = darcy_rb::par::map(&pts, |xi: &ParameterPoint| -> darcy_rb::Result<(Vec<String>, bool, Option<f64>)> {
        let res = model.evaluate(xi)?;
        let t = truth(&case, xi)?;
        let e = compare(&g, &case.p0, &art.z_pr, art.z_du.as_deref(), &res, &t)?;
        let est = &res.estimates;
        let dual = model.has_dual();
        let s = t.s[n];
        let zeros = vec![vec![0.0; case.n()]; n + 1];
        let checks = match model.variant {
            EnergyVariant::SpaceTime => {
                let p_norm = trajectory_error(&g, &t.p, &zeros, 1..n + 1)?;
                let psi_norm = trajectory_error(&g, &t.psi, &zeros, 0..n)?;
                [
                    Check { err: Some(e.primal), bound: Some(est.delta_pr), floor: FLOOR * p_norm, enforced: true },
                    Check { err: e.dual, bound: dual.then_some(est.delta_du), floor: FLOOR * psi_norm, enforced: true },
                    Check { err: e.output_corrected, bound: dual.then_some(est.delta_s), floor: FLOOR * s.abs(), enforced: true },
                    Check { err: Some(e.output_plain), bound: dual.then_some(est.delta_s_tilde), floor: FLOOR * s.abs(), enforced: true },
                ]
            }
            EnergyVariant::Stiffness => {
                let a = case.disc.assemble(xi)?.a.sym_part();
                let lifted: Vec<Vec<f64>> = res.u.iter().map(|u| ReducedModel::lift(&art.z_pr, &case.p0, u)).collect();
                let err = energy_error(&a, dt, &t.p, &lifted);
                let scale = energy_error(&a, dt, &t.p, &zeros);
                [
                    Check { err: Some(err), bound: Some(est.gho_pr), floor: FLOOR * scale, enforced: true },
                    Check { err: e.dual, bound: None, floor: 0.0, enforced: true },
                    Check { err: e.output_corrected, bound: dual.then_some(est.gho_s), floor: 0.0, enforced: false },
                    Check { err: Some(e.output_plain), bound: dual.then_some(est.gho_new), floor: 0.0, enforced: false },
                ]
            }
        };
        let ok = checks.iter().all(Check::holds);
        let mut row = vec![
            num(Some(xi.kappa1)),
            num(Some(xi.kappa2)),
            model.op.n_pr().to_string(),
            model.op.n_du().to_string(),
            num(Some(s)),
            num(Some(res.s_plain)),
            num(res.s_corrected),
        ];
        row.extend(checks.iter().map(|c| num(c.err)));
        row.extend(checks.iter().map(|c| num(c.bound)));
        row.extend(checks.iter().map(|c| num(c.eff())));
        row.push(if ok { "true" } else { "false" }.to_string());
        Ok((row, ok, checks[3].eff()))
    })?;
    let violations = rows.iter().filter(|r| !r.1).count();
    let max_eff_plain = rows.iter().filter_map(|r| r.2).reduce(f64::max);
    let table: Vec<Vec<String>> = rows.into_iter().map(|r| r.0).collect();
    write_csv(out, schema::VALIDATE, &table)?;
    let summary = ValidateSummary { points: table.len(), violations, max_eff_plain };
    if violations > 0 {
        return Err(CliError::Unreliable(violations));
    }
    Ok(summary)
}
