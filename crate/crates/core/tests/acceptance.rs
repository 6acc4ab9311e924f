use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use darcy_rb::config::Config;
use darcy_rb::energy::EnergyVariant;
use darcy_rb::estimators::{effectivity, naive_norm_sq, trajectory_error, DualTable, PrimalTable, ResidualTable};
use darcy_rb::hf::{hydrostatic_init, solve_dual, solve_primal, step_residual, TimeGrid};
use darcy_rb::linalg::{dot, Csr};
use darcy_rb::mesh::{build_cartesian_mesh, select_perforations, tag_boundaries, Aabb, BoundaryTag, Plane, ZoneSpec};
use darcy_rb::mpfa::{Discretization, FluidRockProps, ParameterPoint, Var};
use darcy_rb::offline::{compare, truth, Case, Offline, Truth};
use darcy_rb::online::{CertifiedResult, ReducedModel};
use darcy_rb::persistence::Archive;
use darcy_rb::reduction::{GBasis, GreedySettings};
use darcy_rb::{artifact::OfflineArtifact, config::sample_sets, offline::run_offline};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Counting;

static ARMED: AtomicBool = AtomicBool::new(false);
static MAX_ALLOC: AtomicUsize = AtomicUsize::new(0);
static N_ALLOC: AtomicUsize = AtomicUsize::new(0);

fn record(size: usize) {
    if ARMED.load(Ordering::Relaxed) {
        N_ALLOC.fetch_add(1, Ordering::Relaxed);
        MAX_ALLOC.fetch_max(size, Ordering::Relaxed);
    }
}

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        record(layout.size());
        unsafe { System.alloc(layout) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        record(new_size);
        unsafe { System.realloc(ptr, layout, new_size) }
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

type Outcome = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// 6×6×4 variant of the default case, 216 unknowns.
const SMALL: &str = r#"
[mesh]
nx = 6
ny = 6
nz = 4
well_box = { lo = [700.0, 700.0, -700.0], hi = [900.0, 900.0, -300.0] }
gamma_int = { lo = [665.3333333333334, 665.3333333333334, -750.0], hi = [1330.6666666666667, 1330.6666666666667, -250.0] }

[sampling]
training = 20
test = 5

[scm]
max_points = 20

[greedy]
tol = 1e-6
n_max = 40
"#;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

fn random_dvec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_vec(random_vec(rng, n).into_iter().map(|x| x * scale).collect())
}

fn has_dirichlet(disc: &Discretization, cell: usize) -> bool {
    disc.mesh.cells[cell].faces.iter().any(|&f| disc.mesh.faces[f].tag == BoundaryTag::Dirichlet)
}

fn c1_patch() -> Outcome {
    let t0 = Instant::now();
    let mesh = build_cartesian_mesh(8, 8, 4, Aabb::new([0.0, 0.0, -200.0], [800.0, 800.0, 0.0]), &ZoneSpec::whole()).map_err(err)?;
    let mut mesh = tag_boundaries(mesh, &[Plane::XMin]).map_err(err)?;
    mesh.perforations = vec![0];
    let props = FluidRockProps::reference();
    let disc = Discretization::new(mesh, props).map_err(err)?;
    let kappa = 2.5e-13;
    let xi = ParameterPoint::new(kappa, kappa);
    let vhat = disc.coefficient_vector(&xi).map_err(err)?;
    let grad = [1.3e3, -0.7e3, 2.1e3];
    let field = |x: [f64; 3]| 2.0e7 + grad[0] * x[0] + grad[1] * x[1] + grad[2] * x[2];
    let mesh = &disc.mesh;
    let mut p = vec![0.0; disc.n()];
    for (k, c) in mesh.cells.iter().enumerate() {
        p[k] = field(c.center);
    }
    for (f, u) in mesh.neumann_index.iter().enumerate() {
        if let Some(u) = u {
            p[*u] = field(mesh.faces[f].center);
        }
    }
    let lam = kappa / props.mu;
    let rg = props.rho * props.g;
    let pot = [grad[0], grad[1], grad[2] + rg];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (f, face) in mesh.faces.iter().enumerate() {
        if !face.is_interior() {
            continue;
        }
        let (k, l) = (face.cells[0], face.cells[1]);
        if has_dirichlet(&disc, k) || has_dirichlet(&disc, l) {
            continue;
        }
        let n = mesh.normal_from(f, k);
        let exact = -lam * (pot[0] * n[0] + pot[1] * n[1] + pot[2] * n[2]) * face.area;
        let got = disc.face_flux(&vhat, f, k, &p);
        worst = worst.max((got - exact).abs() / exact.abs());
        checked += 1;
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = worst <= 1e-9 && secs < 5.0 && checked > 0;
    Ok((ok, format!("{checked} interior faces, max relative flux error {worst:.2e} (tol 1e-9), {secs:.2}s (limit 5s)")))
}

fn c2_conservation(case: &Case) -> Outcome {
    let disc = &case.disc;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_sum: f64 = 0.0;
    let mut structural = true;
    let mut faces = 0;
    for xi in case.training.iter().take(5) {
        let vhat = disc.coefficient_vector(xi).map_err(err)?;
        let p: Vec<f64> = case.p0.iter().map(|x| x + 1e5 * (rng.random::<f64>() - 0.5)).collect();
        for (f, face) in disc.mesh.faces.iter().enumerate() {
            if !face.is_interior() {
                continue;
            }
            let (k, l) = (face.cells[0], face.cells[1]);
            let fk = disc.face_flux(&vhat, f, k, &p);
            let fl = disc.face_flux(&vhat, f, l, &p);
            worst_sum = worst_sum.max((fk + fl).abs());
            faces += 1;
        }
    }
    let key = |v: Var| match v {
        Var::Unknown(j) => j as i64,
        Var::Const => -1,
    };
    for (f, face) in disc.mesh.faces.iter().enumerate() {
        if !face.is_interior() {
            continue;
        }
        let mut a: Vec<(i64, usize, u64)> =
            disc.flux_terms(f, face.cells[0]).iter().map(|t| (key(t.var), t.vidx, t.coef.to_bits())).collect();
        let mut b: Vec<(i64, usize, u64)> =
            disc.flux_terms(f, face.cells[1]).iter().map(|t| (key(t.var), t.vidx, (-t.coef).to_bits())).collect();
        a.sort_unstable();
        b.sort_unstable();
        structural &= a == b;
    }
    let ok = worst_sum == 0.0 && structural;
    Ok((ok, format!("{faces} face evaluations, max |F_K + F_L| = {worst_sum:e}, term-wise negation {structural}")))
}

fn mat_pow(s: &DMatrix<f64>, mut e: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(s.nrows(), s.ncols());
    let mut base = s.clone();
    while e > 0 {
        if e & 1 == 1 {
            out = &out * &base;
        }
        base = &base * &base;
        e >>= 1;
    }
    out
}

fn c3_closed_form() -> Outcome {
    let grid = TimeGrid::new(10.0 * 86400.0, 20).map_err(err)?;
    let xi = ParameterPoint::new(4e-13, 1e-13);
    let mut worst: f64 = 0.0;
    let mut sizes = Vec::new();
    for nx in [2usize, 3] {
        let extents = Aabb::new([0.0, 0.0, -100.0], [100.0 * nx as f64, 100.0, 0.0]);
        let mesh = build_cartesian_mesh(nx, 1, 1, extents, &ZoneSpec::slab(-100.0, 0.0)).map_err(err)?;
        let mut mesh = tag_boundaries(mesh, &[Plane::XMin]).map_err(err)?;
        let well = Aabb::new([100.0 * (nx - 1) as f64, 0.0, -100.0], [100.0 * nx as f64, 100.0, 0.0]);
        mesh.perforations = select_perforations(&mesh, &well).map_err(err)?;
        let disc = Discretization::new(mesh, FluidRockProps::reference()).map_err(err)?;
        let op = disc.assemble(&xi).map_err(err)?;
        let p0 = hydrostatic_init(&disc);
        let hf = solve_primal(&op, &p0, &grid).map_err(err)?;
        let a = op.a.to_dense();
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&op.m));
        let b = DVector::from_column_slice(&op.b);
        let p_inf = a.clone().lu().solve(&b).ok_or("singular A")?;
        let s = (&m + &a * grid.dt).lu().solve(&m).ok_or("singular step matrix")?;
        let e0 = DVector::from_column_slice(&p0) - &p_inf;
        let scale = hf.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()));
        for (n, p) in hf.iter().enumerate() {
            let exact = &p_inf + mat_pow(&s, n) * &e0;
            let d = (DVector::from_column_slice(p) - exact).amax();
            worst = worst.max(d / scale);
        }
        sizes.push(op.n());
    }
    Ok((worst <= 1e-10, format!("systems of {sizes:?} unknowns, 20 steps, max relative deviation {worst:.2e} (tol 1e-10)")))
}

fn c4_stable_norms() -> Outcome {
    let config = Config::parse(SMALL).map_err(err)?;
    let mut config = config;
    config.scm.enabled = false;
    let case = Case::from_config(config).map_err(err)?;
    let n = case.n();
    let off = Offline::prepare(case, EnergyVariant::SpaceTime).map_err(err)?;
    let g = off.energy();
    let aff = &off.affine;
    let dt = off.case.grid.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z = GBasis::from_vecs((0..5).map(|_| random_vec(&mut rng, n)).collect(), g);
    let pt = PrimalTable::build(&z, aff, g).map_err(err)?;
    let dtab = DualTable::build(&z, aff, g).map_err(err)?;
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let xi = off.case.training[i % off.case.training.len()];
        let theta = aff.theta(&xi).map_err(err)?;
        let op = aff.assemble_lifted(&theta).map_err(err)?;
        let u = vec![random_dvec(&mut rng, z.len(), 1e5), random_dvec(&mut rng, z.len(), 1e5)];
        let stable = pt.norms(&theta, &u, dt).map_err(err)?[0];
        let x: Vec<Vec<f64>> = u.iter().map(|v| ReducedModel::lift(&z.vecs, &vec![0.0; n], v)).collect();
        let dense = g.dual_norm(&step_residual(&op, &x[0], &x[1], dt));
        worst = worst.max((stable - dense).abs() / dense);
        let sd = dtab.norms(&theta, &u, dt, 0..1).map_err(err)?[0];
        let mut rho: Vec<f64> = x[0].iter().zip(&x[1]).zip(&op.m).map(|((a, b), m)| m * (a - b) / dt).collect();
        let at = op.a.matvec_t(&x[0]);
        rho.iter_mut().zip(&at).for_each(|(r, a)| *r += a);
        let dd = g.dual_norm(&rho);
        worst = worst.max((sd - dd).abs() / dd);
    }
    let mut negative = 0;
    let mut stable_negative = 0;
    let mut cond_min = f64::INFINITY;
    for t in 0..40 {
        let x1 = random_vec(&mut rng, n);
        let w = random_vec(&mut rng, n);
        let delta = 10f64.powi(-(7 + (t % 5) as i32));
        let x2: Vec<f64> = x1.iter().zip(&w).map(|(a, b)| a + delta * b).collect();
        let raw = vec![x1, x2];
        let table = ResidualTable::build(&raw, g).map_err(err)?;
        let coeffs = [1.0, -1.0];
        let s = table.norm(&coeffs).map_err(err)?;
        if !(s >= 0.0) {
            stable_negative += 1;
        }
        if naive_norm_sq(&raw, g, &coeffs) < 0.0 {
            negative += 1;
        }
        let sol: Vec<Vec<f64>> = raw.iter().map(|x| g.solve(x)).collect();
        let gram = DMatrix::from_fn(2, 2, |i, j| dot(&raw[i], &sol[j]));
        let ev = gram.symmetric_eigenvalues();
        let cond = ev.amax() / ev.iter().fold(f64::INFINITY, |a, &b| a.min(b.abs())).max(f64::MIN_POSITIVE);
        cond_min = cond_min.min(cond);
    }
    let ok = n <= 500 && worst <= 1e-8 && stable_negative == 0 && negative > 0 && cond_min >= 1e12;
    Ok((
        ok,
        format!(
            "N = {n}, 50 primal and dual states, max relative deviation {worst:.2e} (tol 1e-8); ill-conditioned family (cond >= {cond_min:.1e}): naive form negative in {negative}/40, stable form negative in {stable_negative}/40"
        ),
    ))
}

/// Desk-scale data shared by criteria 5 to 9 and 12.
struct Desk {
    off: Offline,
    prep_secs: f64,
    train: Vec<Checked>,
    test: Vec<Checked>,
}

struct Checked {
    truth: Truth,
    p_norm: f64,
    psi_norm: f64,
}

impl Desk {
    fn new() -> Result<Self, String> {
        let t0 = Instant::now();
        let case = Case::from_config(Config::default()).map_err(err)?;
        let off = Offline::prepare(case, EnergyVariant::SpaceTime).map_err(err)?;
        let prep_secs = t0.elapsed().as_secs_f64();
        let checked = |set: &[ParameterPoint]| -> Result<Vec<Checked>, String> {
            darcy_rb::par::map(set, |xi| {
                let t = truth(&off.case, xi)?;
                let n = off.case.grid.n_steps;
                let zeros = vec![vec![0.0; off.case.n()]; n + 1];
                let p_norm = trajectory_error(&off.spacetime, &t.p, &zeros, 1..n + 1)?;
                let psi_norm = trajectory_error(&off.spacetime, &t.psi, &zeros, 0..n)?;
                Ok(Checked { truth: t, p_norm, psi_norm })
            })
            .map_err(err)
        };
        let train = checked(&off.case.training)?;
        let test = checked(&off.case.test)?;
        Ok(Desk { off, prep_secs, train, test })
    }
}

fn c5_scm(desk: &Desk) -> Outcome {
    let t0 = Instant::now();
    let off = &desk.off;
    let scm = off.scm.as_ref().ok_or("SCM disabled")?;
    let pts: Vec<ParameterPoint> = off.case.training.iter().chain(&off.case.test).copied().collect();
    let rows = darcy_rb::par::map(&pts, |xi| {
        let theta = off.affine.theta(xi)?;
        let lb = scm.alpha_lb(xi, &theta)?;
        let ub = scm.alpha_ub(&theta);
        let ex = off.oracle.alpha(&theta)?;
        Ok((lb, ex, ub))
    })
    .map_err(err)?;
    let mut violations = 0;
    let mut max_gap: f64 = 0.0;
    for &(lb, ex, ub) in &rows {
        if lb > ex + 1e-9 * ex.abs() || ex > ub + 1e-9 * ub.abs() {
            violations += 1;
        }
        max_gap = max_gap.max((ub - lb) / ub);
    }
    let terminal = *scm.gap_history.last().ok_or("empty SCM history")?;
    let secs = desk.prep_secs + t0.elapsed().as_secs_f64();
    let ok = violations == 0 && terminal <= 1e-4 && secs < 600.0;
    Ok((
        ok,
        format!(
            "{} points, {violations} sandwich violations, terminal training gap {terminal:.2e} (tol 1e-4), max gap on all points {max_gap:.2e}, {} SCM points, {secs:.1}s",
            rows.len(),
            scm.selected.len()
        ),
    ))
}

fn rel_frobenius(a: &Csr, b: &Csr) -> f64 {
    let n = a.nrows;
    let mut num = 0.0;
    for r in 0..n {
        for (c, v) in a.row(r) {
            num += (v - b.get(r, c)).powi(2);
        }
        for (c, v) in b.row(r) {
            if a.slot(r, c).is_none() {
                num += v * v;
            }
        }
    }
    num.sqrt() / a.frobenius()
}

fn c6_eim(desk: &Desk) -> Outcome {
    let off = &desk.off;
    let eim = &off.affine.eim;
    let eps = eim.tol;
    let train_err = eim.max_error();
    let monotone = eim.error_curve.windows(2).all(|w| w[1] <= w[0]);
    let (unseen, _) = sample_sets(&off.case.config.parameters, 20, 0, 99);
    let mut worst_a: f64 = 0.0;
    let mut worst_b: f64 = 0.0;
    for xi in &unseen {
        let direct = off.case.disc.assemble(xi).map_err(err)?;
        let theta = off.affine.theta(xi).map_err(err)?;
        let aff = off.affine.assemble(&theta).map_err(err)?;
        worst_a = worst_a.max(rel_frobenius(&direct.a, &aff.a));
        let db: f64 = direct.b.iter().zip(&aff.b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        worst_b = worst_b.max(db / direct.b.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    let ok = train_err <= eps && monotone && worst_a <= 10.0 * eps && worst_b <= 10.0 * eps;
    Ok((
        ok,
        format!(
            "M = {}, training error {train_err:.2e} (tol {eps:.0e}), non-increasing curve {monotone}, unseen A error {worst_a:.2e}, b error {worst_b:.2e} (tol {:.0e})",
            eim.m(),
            10.0 * eps
        ),
    ))
}

#[derive(Default)]
struct Reliability {
    points: usize,
    violations: Vec<String>,
    worst_pr: f64,
    worst_du: f64,
    worst_s: f64,
    worst_st: f64,
}

const FLOOR: f64 = 1e-12;

struct RoundStats {
    n_pr: usize,
    max_eff_test: f64,
    max_eff_train: f64,
    corrected_wins: usize,
    test_len: usize,
    max_primal_error: f64,
}

fn check_set(
    desk: &Desk,
    model: &ReducedModel,
    z_pr: &GBasis,
    z_du: Option<&GBasis>,
    pts: &[ParameterPoint],
    data: &[Checked],
    round: usize,
    rel: &mut Reliability,
) -> Result<(Vec<CertifiedResult>, Vec<darcy_rb::estimators::TrueErrors>), String> {
    let off = &desk.off;
    let idx: Vec<usize> = (0..pts.len()).collect();
    let pairs = darcy_rb::par::map(&idx, |&i| {
        let res = model.evaluate(&pts[i])?;
        let e = compare(&off.spacetime, &off.case.p0, &z_pr.vecs, z_du.map(|z| z.vecs.as_slice()), &res, &data[i].truth)?;
        Ok((res, e))
    })
    .map_err(err)?;
    let n = off.case.grid.n_steps;
    for (i, (res, e)) in pairs.iter().enumerate() {
        let est = &res.estimates;
        let s = data[i].truth.s[n].abs();
        rel.points += 1;
        let mut flag = |name: &str, error: f64, bound: f64, floor: f64, worst: &mut f64| {
            if bound + floor > 0.0 {
                *worst = worst.max(error / (bound + floor));
            }
            if !(error <= bound + floor) {
                rel.violations.push(format!("round {round} xi {i} {name}: error {error:.3e} > bound {bound:.3e}"));
            }
        };
        let mut w = rel.worst_pr;
        flag("delta_pr", e.primal, est.delta_pr, FLOOR * data[i].p_norm, &mut w);
        rel.worst_pr = w;
        if let (Some(du), Some(corr)) = (e.dual, e.output_corrected) {
            let mut w = rel.worst_du;
            flag("delta_du", du, est.delta_du, FLOOR * data[i].psi_norm, &mut w);
            rel.worst_du = w;
            let mut w = rel.worst_s;
            flag("delta_s", corr, est.delta_s, FLOOR * s, &mut w);
            rel.worst_s = w;
            let mut w = rel.worst_st;
            flag("delta_s_tilde", e.output_plain, est.delta_s_tilde, FLOOR * s, &mut w);
            rel.worst_st = w;
        }
    }
    Ok(pairs.into_iter().unzip())
}

struct GreedyRuns {
    rel: Reliability,
    goal_rounds: usize,
    primal_rounds: usize,
    last_goal: RoundStats,
    primal_first: f64,
    primal_last: RoundStats,
    primal_stop: String,
    artifact: OfflineArtifact,
}

fn run_greedies(desk: &Desk) -> Result<GreedyRuns, String> {
    let off = &desk.off;
    let mut rel = Reliability::default();
    let mut last_goal = None;
    let goal = off
        .greedy(&off.settings(), &mut |round, model, zp, zd| {
            let (res_tr, errs_tr) = check_set(desk, model, zp, zd, &off.case.training, &desk.train, round.round, &mut rel)
                .map_err(darcy_rb::Error::Model)?;
            let (res, errs) = check_set(desk, model, zp, zd, &off.case.test, &desk.test, round.round, &mut rel)
                .map_err(darcy_rb::Error::Model)?;
            let mut wins = 0;
            let mut max_eff: f64 = 0.0;
            for (r, e) in res.iter().zip(&errs) {
                if e.output_corrected.unwrap_or(f64::INFINITY) <= e.output_plain {
                    wins += 1;
                }
                if let Some(eta) = effectivity(r.estimates.delta_s_tilde, e.output_plain) {
                    max_eff = max_eff.max(eta);
                }
            }
            let train_eff = res_tr
                .iter()
                .zip(&errs_tr)
                .filter_map(|(r, e)| effectivity(r.estimates.delta_s_tilde, e.output_plain))
                .fold(0.0, f64::max);
            last_goal = Some(RoundStats {
                n_pr: zp.len(),
                max_eff_test: max_eff,
                max_eff_train: train_eff,
                corrected_wins: wins,
                test_len: res.len(),
                max_primal_error: errs.iter().map(|e| e.primal).fold(0.0, f64::max),
            });
            Ok(())
        })
        .map_err(err)?;
    let artifact = off.artifact("", &goal);
    let goal_rounds = goal.rounds.len();

    let primal_settings = GreedySettings::primal(1e-8, 200);
    let mut primal_last = None;
    let primal = off
        .greedy(&primal_settings, &mut |round, model, zp, _| {
            let (_, errs_train) = check_set(desk, model, zp, None, &off.case.training, &desk.train, round.round, &mut rel)
                .map_err(darcy_rb::Error::Model)?;
            let (_, errs) = check_set(desk, model, zp, None, &off.case.test, &desk.test, round.round, &mut rel)
                .map_err(darcy_rb::Error::Model)?;
            primal_last = Some(RoundStats {
                n_pr: zp.len(),
                max_eff_test: 0.0,
                max_eff_train: 0.0,
                corrected_wins: 0,
                test_len: errs.len(),
                max_primal_error: errs_train.iter().map(|e| e.primal).fold(0.0, f64::max),
            });
            Ok(())
        })
        .map_err(err)?;
    let problem = off.problem().map_err(err)?;
    let mut z1 = primal.z_pr.clone();
    z1.truncate(1);
    let m1 = problem.build_model(&z1, None).map_err(err)?;
    let mut scratch = Reliability::default();
    let (_, e1) = check_set(desk, &m1, &z1, None, &off.case.training, &desk.train, 0, &mut scratch)?;
    let primal_first = e1.iter().map(|e| e.primal).fold(0.0, f64::max);
    Ok(GreedyRuns {
        rel,
        goal_rounds,
        primal_rounds: primal.rounds.len(),
        last_goal: last_goal.ok_or("no goal round")?,
        primal_first,
        primal_last: primal_last.ok_or("no primal round")?,
        primal_stop: format!("{:?}", primal.stop),
        artifact,
    })
}

fn c7_reliability(g: &GreedyRuns) -> Outcome {
    let r = &g.rel;
    let mut msg = format!(
        "{} evaluations over {} goal and {} primal rounds, {} violations; max error/(bound + floor): pr {:.3}, du {:.3}, s {:.3}, s_tilde {:.3} (round-off floor {FLOOR:.0e} relative)",
        r.points,
        g.goal_rounds,
        g.primal_rounds,
        r.violations.len(),
        r.worst_pr,
        r.worst_du,
        r.worst_s,
        r.worst_st
    );
    if let Some(v) = r.violations.first() {
        msg.push_str(&format!("; first: {v}"));
    }
    Ok((r.violations.is_empty(), msg))
}

fn c8_decay(g: &GreedyRuns) -> Outcome {
    let first = g.primal_first;
    let last = g.primal_last.max_primal_error;
    let orders = (first / last).log10();
    Ok((
        orders >= 4.0,
        format!(
            "max training primal error {first:.3e} at N_pr = 1, {last:.3e} at N_pr = {} (stop {}), {orders:.1} orders (need 4)",
            g.primal_last.n_pr, g.primal_stop
        ),
    ))
}

fn c9_effectivity(g: &GreedyRuns) -> Outcome {
    let s = &g.last_goal;
    let frac = s.corrected_wins as f64 / s.test_len as f64;
    let ok = s.max_eff_test <= 100.0 && frac >= 0.8;
    Ok((
        ok,
        format!(
            "final round N_pr = {}: max effectivity {:.2} on test, {:.2} on training (limit 100), corrected beats plain on {:.0}% of test points (need 80%)",
            s.n_pr,
            s.max_eff_test,
            s.max_eff_train,
            100.0 * frac
        ),
    ))
}

fn c10_identity() -> Outcome {
    let mut config = Config::default();
    config.mesh.nx = 2;
    config.mesh.ny = 2;
    config.mesh.nz = 4;
    config.mesh.lo = [0.0, 0.0, -400.0];
    config.mesh.hi = [200.0, 200.0, 0.0];
    config.mesh.zone1 = Some([-300.0, -100.0]);
    config.mesh.dirichlet = vec![Plane::XMin, Plane::XMax, Plane::YMin, Plane::YMax, Plane::ZMin];
    config.mesh.well_box = darcy_rb::config::BoxSpec { lo: [0.0, 0.0, -300.0], hi: [100.0, 100.0, -200.0] };
    config.mesh.gamma_int = darcy_rb::config::BoxSpec { lo: [10.0, 10.0, -300.0], hi: [100.0, 100.0, -200.0] };
    config.sampling.training = 8;
    config.sampling.test = 3;
    config.scm.enabled = false;
    let case = Case::from_config(config).map_err(err)?;
    let n = case.n();
    let off = Offline::prepare(case, EnergyVariant::SpaceTime).map_err(err)?;
    let problem = off.problem().map_err(err)?;
    let g = off.energy();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let zp = GBasis::from_vecs((0..3).map(|_| random_vec(&mut rng, n)).collect(), g);
    let zd = GBasis::from_vecs((0..3).map(|_| random_vec(&mut rng, n)).collect(), g);
    let model = problem.build_model(&zp, Some(&zd)).map_err(err)?;
    let grid = off.case.grid;
    let dt = grid.dt;
    let mut worst: f64 = 0.0;
    for xi in &off.case.test {
        let theta = off.affine.theta(xi).map_err(err)?;
        let res = model.evaluate_with(*xi, theta.clone(), 1.0, grid.n_steps).map_err(err)?;
        let op = off.affine.assemble_lifted(&theta).map_err(err)?;
        let u = solve_primal(&op, &vec![0.0; n], &grid).map_err(err)?;
        let psi = solve_dual(&op, &grid).map_err(err)?;
        let zeros = vec![0.0; n];
        let ut: Vec<Vec<f64>> = res.u.iter().map(|v| ReducedModel::lift(&zp.vecs, &zeros, v)).collect();
        let rpsi = res.psi.as_ref().ok_or("no dual")?;
        let pt: Vec<Vec<f64>> = rpsi.iter().map(|v| ReducedModel::lift(&zd.vecs, &zeros, v)).collect();
        let nn = grid.n_steps;
        let diff: Vec<f64> = u[nn].iter().zip(&ut[nn]).map(|(a, b)| a - b).collect();
        let lhs = dot(&op.l, &diff);
        let mut t_err = 0.0;
        let mut t_red = 0.0;
        for k in 0..nn {
            let r = step_residual(&op, &ut[k], &ut[k + 1], dt);
            let eps: Vec<f64> = psi[k].iter().zip(&pt[k]).map(|(a, b)| a - b).collect();
            t_err += dt * dot(&r, &eps);
            t_red += dt * dot(&r, &pt[k]);
        }
        let scale = lhs.abs().max(t_err.abs()).max(t_red.abs());
        worst = worst.max((lhs - t_err - t_red).abs() / scale);
        let pairing = res.s_corrected.ok_or("no corrected output")? - res.s_plain;
        worst = worst.max((pairing - t_red).abs() / scale);
    }
    Ok((n == 20 && worst <= 1e-9, format!("N = {n}, {} parameters, max relative identity defect {worst:.2e} (tol 1e-9)", off.case.test.len())))
}

fn c11_determinism() -> Outcome {
    let run = || -> Result<Vec<u8>, String> {
        let (_, _, art) = run_offline(SMALL, &mut |_, _, _, _| Ok(())).map_err(err)?;
        Ok(art.to_archive().map_err(err)?.to_bytes())
    };
    let a = run()?;
    let b = run()?;
    let path = std::env::temp_dir().join(format!("darcy-rb-acceptance-{}.drb", std::process::id()));
    let reloaded = OfflineArtifact::from_archive(&Archive::from_bytes(&a).map_err(err)?).map_err(err)?;
    reloaded.save(&path).map_err(err)?;
    let c = std::fs::read(&path).map_err(err)?;
    let _ = std::fs::remove_file(&path);
    let ok = a == b && a == c;
    Ok((ok, format!("archive of {} bytes, runs identical {}, save-load round trip identical {}", a.len(), a == b, a == c)))
}

fn c12_online(desk: &Desk, g: &GreedyRuns) -> Outcome {
    let off = &desk.off;
    let bytes = g.artifact.to_archive().map_err(err)?.to_bytes();
    let art = OfflineArtifact::from_archive(&Archive::from_bytes(&bytes).map_err(err)?).map_err(err)?;
    let model = &art.model;
    let pts: Vec<ParameterPoint> = off.case.test.iter().take(10).copied().collect();
    for xi in &pts {
        model.evaluate(xi).map_err(err)?;
    }
    let reps = 20;
    MAX_ALLOC.store(0, Ordering::SeqCst);
    N_ALLOC.store(0, Ordering::SeqCst);
    ARMED.store(true, Ordering::SeqCst);
    let t0 = Instant::now();
    for _ in 0..reps {
        for xi in &pts {
            std::hint::black_box(model.evaluate(xi).map_err(err)?);
        }
    }
    let t_online = t0.elapsed().as_secs_f64() / (reps * pts.len()) as f64;
    ARMED.store(false, Ordering::SeqCst);
    let max_alloc = MAX_ALLOC.load(Ordering::SeqCst);
    let n_alloc = N_ALLOC.load(Ordering::SeqCst) / (reps * pts.len());
    let t0 = Instant::now();
    for xi in &pts {
        let op = off.case.disc.assemble(xi).map_err(err)?;
        let p = solve_primal(&op, &off.case.p0, &off.case.grid).map_err(err)?;
        std::hint::black_box(dot(&op.l, &p[off.case.grid.n_steps]));
    }
    let t_hf = t0.elapsed().as_secs_f64() / pts.len() as f64;
    let speedup = t_hf / t_online;
    let n_hf = off.case.n();
    let n_pr = model.op.n_pr();
    let n_du = model.op.n_du();
    let rank = model.primal_table.rank().max(model.dual_table.as_ref().map_or(0, |t| t.e_m.nrows()));
    let nb = n_pr.max(n_du);
    let bound = 8 * (rank * nb).max(nb * nb).max((off.case.grid.n_steps + 1) * nb) + 8192;
    let ok = speedup >= 5.0 && max_alloc <= bound;
    Ok((
        ok,
        format!(
            "online {:.1}us vs high-fidelity {:.1}us, speedup {speedup:.0}x (need 5x); largest online allocation {max_alloc} B within reduced-size bound {bound} B (N_pr {n_pr}, N_du {n_du}, residual rank {rank}, N = {n_hf}), {n_alloc} allocations per query",
            1e6 * t_online,
            1e6 * t_hf
        ),
    ))
}

fn main() {
    let t0 = Instant::now();
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |id: usize, out: Outcome| {
        let line = match &out {
            Ok((true, msg)) => format!("criterion {id:>2}: PASS  {msg}"),
            Ok((false, msg)) => format!("criterion {id:>2}: FAIL  {msg}"),
            Err(e) => format!("criterion {id:>2}: FAIL  error: {e}"),
        };
        println!("{line}");
        results.push((id, out));
    };
    report(1, c1_patch());
    report(3, c3_closed_form());
    report(4, c4_stable_norms());
    report(10, c10_identity());
    report(11, c11_determinism());
    match Desk::new() {
        Err(e) => {
            for id in [2, 5, 6, 7, 8, 9, 12] {
                report(id, Err(e.clone()));
            }
        }
        Ok(desk) => {
            report(2, c2_conservation(&desk.off.case));
            report(5, c5_scm(&desk));
            report(6, c6_eim(&desk));
            match run_greedies(&desk) {
                Err(e) => {
                    for id in [7, 8, 9, 12] {
                        report(id, Err(e.clone()));
                    }
                }
                Ok(g) => {
                    report(7, c7_reliability(&g));
                    report(8, c8_decay(&g));
                    report(9, c9_effectivity(&g));
                    report(12, c12_online(&desk, &g));
                }
            }
        }
    }
    results.sort_by_key(|(id, _)| *id);
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !matches!(o, Ok((true, _)))).map(|(id, _)| *id).collect();
    println!("acceptance: {} of {} criteria passed in {:.1}s", results.len() - failed.len(), results.len(), t0.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
