use darcy_rb::artifact::OfflineArtifact;
use darcy_rb::config::Config;
use darcy_rb::hf::step_residual;
use darcy_rb::linalg::{dot, norm2};
use darcy_rb::offline::{run_offline, truth, Offline};
use darcy_rb::online::{Coercivity, ReducedModel};
use darcy_rb::persistence::Archive;
use darcy_rb::reduction::{GBasis, GreedyOutcome};

const CASE: &str = r#"
[mesh]
nx = 4
ny = 4
nz = 3
lo = [0.0, 0.0, -300.0]
hi = [400.0, 400.0, 0.0]
zone1 = [-200.0, -100.0]
well_box = { lo = [100.0, 100.0, -200.0], hi = [200.0, 200.0, -100.0] }
gamma_int = { lo = [100.0, 100.0, -200.0], hi = [300.0, 300.0, -100.0] }

[sampling]
training = 12
test = 4

[scm]
max_points = 12

[greedy]
tol = 1e-7
"#;

fn build() -> (Offline, GreedyOutcome, OfflineArtifact) {
    run_offline(CASE, &mut |_, _, _, _| Ok(())).unwrap()
}

#[test]
fn saved_model_evaluates_bitwise_like_the_original() {
    let (off, _, art) = build();
    let path = std::env::temp_dir().join(format!("darcy-rb-pipeline-{}.drb", std::process::id()));
    art.save(&path).unwrap();
    let loaded = OfflineArtifact::load(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(loaded.config_text, CASE);
    assert_eq!(loaded.selected, art.selected);
    for xi in &off.case.test {
        let a = art.model.evaluate(xi).unwrap();
        let b = loaded.model.evaluate(xi).unwrap();
        assert_eq!(a.s_plain.to_bits(), b.s_plain.to_bits());
        assert_eq!(a.s_corrected.unwrap().to_bits(), b.s_corrected.unwrap().to_bits());
        assert_eq!(a.estimates.delta_s_tilde.to_bits(), b.estimates.delta_s_tilde.to_bits());
    }
}

#[test]
fn corrupted_archive_is_rejected() {
    let (_, _, art) = build();
    let mut bytes = art.to_archive().unwrap().to_bytes();
    let n = bytes.len();
    bytes[n - 3] ^= 0x40;
    assert!(Archive::from_bytes(&bytes).is_err());
    assert!(Archive::from_bytes(&bytes[..n / 2]).is_err());
}

#[test]
fn exact_coercivity_is_not_archivable() {
    let (off, out, _) = build();
    let mut art = off.artifact(CASE, &out);
    art.model.coercivity = Coercivity::Exact(off.oracle.clone());
    assert!(art.to_archive().is_err());
}

#[test]
fn reduced_residual_is_orthogonal_to_the_primal_basis() {
    let (off, out, _) = build();
    let z = &out.z_pr;
    let grid = off.case.grid;
    for xi in &off.case.test {
        let theta = off.affine.theta(xi).unwrap();
        let op = off.affine.assemble_lifted(&theta).unwrap();
        let u = out.model.op.solve_primal(&theta, &grid).unwrap();
        let zeros = vec![0.0; off.case.n()];
        let x: Vec<Vec<f64>> = u.iter().map(|v| ReducedModel::lift(&z.vecs, &zeros, v)).collect();
        for k in 0..grid.n_steps {
            let r = step_residual(&op, &x[k], &x[k + 1], grid.dt);
            let scale = norm2(&op.b) + norm2(&op.a.matvec(&x[k + 1]));
            for w in &z.vecs {
                assert!(dot(w, &r).abs() <= 1e-9 * scale * norm2(w), "step {k}");
            }
        }
    }
}

#[test]
fn shortened_horizon_is_certified() {
    let (off, out, _) = build();
    let model = &out.model;
    for xi in &off.case.test {
        let t = truth(&off.case, xi).unwrap();
        for h in [1, 7, off.case.grid.n_steps] {
            let r = model.evaluate_at(xi, h).unwrap();
            assert_eq!(r.horizon, h);
            let plain = off.affine.theta(xi).map(|th| model.op.output(&th, &r.u[h])).unwrap();
            assert_eq!(plain.to_bits(), r.s_plain.to_bits());
            let s = t.s[h];
            let e_plain = (s - r.s_plain).abs();
            let e_corr = (s - r.s_corrected.unwrap()).abs();
            let floor = 1e-12 * s.abs();
            assert!(e_plain <= r.estimates.delta_s_tilde + floor, "plain at {h}: {e_plain} > {}", r.estimates.delta_s_tilde);
            assert!(e_corr <= r.estimates.delta_s + floor, "corrected at {h}: {e_corr} > {}", r.estimates.delta_s);
        }
    }
    assert!(model.evaluate_at(&off.case.test[0], 0).is_err());
    assert!(model.evaluate_at(&off.case.test[0], off.case.grid.n_steps + 1).is_err());
}

#[test]
fn repeated_evaluation_is_deterministic_and_ranges_are_enforced() {
    let (off, out, _) = build();
    let xi = off.case.test[1];
    let a = out.model.evaluate(&xi).unwrap();
    let b = out.model.evaluate(&xi).unwrap();
    assert_eq!(a.s_corrected.unwrap().to_bits(), b.s_corrected.unwrap().to_bits());
    assert_eq!(a.estimates.delta_pr.to_bits(), b.estimates.delta_pr.to_bits());
    let outside = darcy_rb::mpfa::ParameterPoint::new(1.0, 1.0);
    assert!(matches!(out.model.evaluate(&outside), Err(darcy_rb::Error::Domain(_))));
}

#[test]
fn zero_output_functional_gives_constant_output_and_zero_bound() {
    let config = Config::parse(CASE).unwrap();
    let case = darcy_rb::offline::Case::from_config(config).unwrap();
    let mut off = Offline::prepare(case, darcy_rb::energy::EnergyVariant::SpaceTime).unwrap();
    for l in off.affine.l.iter_mut() {
        l.iter_mut().for_each(|v| *v = 0.0);
    }
    off.affine.c_lift = off.affine.c.clone();
    let problem = off.problem().unwrap();
    let g = problem.energy;
    let n = off.case.n();
    let zp = GBasis::from_vecs((0..3).map(|i| (0..n).map(|j| ((i * n + j) as f64).sin()).collect()).collect(), g);
    let zd = GBasis::from_vecs((0..2).map(|i| (0..n).map(|j| ((i * n + j) as f64).cos()).collect()).collect(), g);
    let model = problem.build_model(&zp, Some(&zd)).unwrap();
    let xi = off.case.test[0];
    let r = model.evaluate(&xi).unwrap();
    let theta = off.affine.theta(&xi).unwrap();
    let c: f64 = theta.iter().zip(&off.affine.c).map(|(t, c)| t * c).sum();
    assert!((r.s_plain - c).abs() <= 1e-12 * c.abs().max(1.0));
    assert_eq!(r.estimates.delta_du, 0.0);
    assert_eq!(r.estimates.delta_s, 0.0);
}

#[test]
fn training_selected_parameters_are_reproduced() {
    let (off, out, _) = build();
    for &i in &out.selected {
        let xi = off.case.training[i];
        let t = truth(&off.case, &xi).unwrap();
        let r = out.model.evaluate(&xi).unwrap();
        let s = t.s[off.case.grid.n_steps];
        assert!((s - r.s_corrected.unwrap()).abs() <= 1e-7 * s.abs());
    }
}
