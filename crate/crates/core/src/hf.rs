//! Backward-Euler high-fidelity solver for the primal and dual problems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Csr, SparseLu};
use crate::mpfa::{Discretization, HfOperator, ParameterPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || n_steps == 0 {
            return Err(Error::Config("time step must be positive and the step count nonzero".into()));
        }
        Ok(TimeGrid { dt, n_steps })
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// Hydrostatic initial pressure; Neumann face unknowns copy their cell.
pub fn hydrostatic_init(disc: &Discretization) -> Vec<f64> {
    let mesh = &disc.mesh;
    let mut p = vec![0.0; disc.n()];
    for (k, c) in mesh.cells.iter().enumerate() {
        p[k] = disc.props.hydrostatic(c.center[2]);
    }
    for (fid, u) in mesh.neumann_index.iter().enumerate() {
        if let Some(u) = u {
            p[*u] = p[mesh.faces[fid].cells[0]];
        }
    }
    p
}

/// Factored `M + ΔtA` for repeated primal and dual steps.
pub struct Stepper {
    lu: SparseLu,
    lhs: Csr,
    m: Vec<f64>,
    dt: f64,
}

impl Stepper {
    pub fn new(a: &Csr, m: &[f64], dt: f64) -> Result<Self> {
        let lhs = a.with_values(a.data.iter().map(|v| v * dt).collect()).add_diag(m);
        let lu = SparseLu::new(&lhs)?;
        Ok(Stepper { lu, lhs, m: m.to_vec(), dt })
    }

    /// `(M + ΔtA) x = M prev + Δt b`.
    pub fn step(&self, prev: &[f64], b: &[f64], step: usize) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = prev.iter().zip(&self.m).zip(b).map(|((p, m), b)| m * p + self.dt * b).collect();
        let mut x = rhs.clone();
        self.lu.solve_in_place(&mut x);
        self.check(&self.lhs.matvec(&x), &rhs, step, prev)?;
        Ok(x)
    }

    /// `(M + ΔtAᵀ) x = M next`.
    pub fn back_step(&self, next: &[f64], step: usize) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = next.iter().zip(&self.m).map(|(p, m)| m * p).collect();
        let mut x = rhs.clone();
        self.lu.solve_transpose_in_place(&mut x);
        self.check(&self.lhs.matvec_t(&x), &rhs, step, next)?;
        Ok(x)
    }

    fn check(&self, lx: &[f64], rhs: &[f64], step: usize, prev: &[f64]) -> Result<()> {
        let r: Vec<f64> = lx.iter().zip(rhs).map(|(a, b)| a - b).collect();
        let mp: Vec<f64> = prev.iter().zip(&self.m).map(|(p, m)| m * p).collect();
        let scale = norm2(rhs).max(norm2(&mp));
        let rn = norm2(&r);
        if !rn.is_finite() || rn > 1e-8 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Solver { step, msg: format!("relative residual {:e}", rn / scale) });
        }
        Ok(())
    }
}

/// Pressure trajectory `p⁰..p^N`.
pub fn solve_primal(op: &HfOperator, p0: &[f64], grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    crate::error::check_dim(op.n(), p0.len())?;
    let st = Stepper::new(&op.a, &op.m, grid.dt)?;
    let mut traj = Vec::with_capacity(grid.n_steps + 1);
    traj.push(p0.to_vec());
    for n in 0..grid.n_steps {
        let next = st.step(&traj[n], &op.b, n + 1)?;
        traj.push(next);
    }
    Ok(traj)
}

/// Terminal dual datum `−M_c⁻¹ l` on cells and zero on face unknowns.
pub fn dual_terminal(l: &[f64], m: &[f64]) -> Vec<f64> {
    l.iter().zip(m).map(|(l, m)| if *m > 0.0 { -l / m } else { 0.0 }).collect()
}

/// Dual trajectory `Ψ⁰..Ψ^N`.
pub fn solve_dual(op: &HfOperator, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    let st = Stepper::new(&op.a, &op.m, grid.dt)?;
    let n = grid.n_steps;
    let mut traj = vec![Vec::new(); n + 1];
    traj[n] = dual_terminal(&op.l, &op.m);
    for k in (0..n).rev() {
        traj[k] = st.back_step(&traj[k + 1], k)?;
    }
    Ok(traj)
}

pub fn outputs(op: &HfOperator, traj: &[Vec<f64>]) -> Vec<f64> {
    traj.iter().map(|p| dot(&op.l, p) + op.c).collect()
}

/// Residual `M(x^{n+1} − x^n)/Δt + A x^{n+1} − b`.
pub fn step_residual(op: &HfOperator, prev: &[f64], next: &[f64], dt: f64) -> Vec<f64> {
    let ax = op.a.matvec(next);
    (0..op.n()).map(|i| op.m[i] * (next[i] - prev[i]) / dt + ax[i] - op.b[i]).collect()
}

#[derive(Clone, Debug)]
pub struct HfSolution {
    pub p: Vec<Vec<f64>>,
    pub s: Vec<f64>,
}

/// Direct assembly and primal solve at `ξ`.
pub fn solve(disc: &Discretization, xi: &ParameterPoint, grid: &TimeGrid) -> Result<HfSolution> {
    let op = disc.assemble(xi)?;
    let p = solve_primal(&op, &hydrostatic_init(disc), grid)?;
    let s = outputs(&op, &p);
    Ok(HfSolution { p, s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian_mesh, select_gamma_int, select_perforations, tag_boundaries, Aabb, Plane, ZoneSpec};
    use crate::mpfa::FluidRockProps;
    use proptest::prelude::*;

    fn small_disc() -> Discretization {
        let ext = Aabb::new([0.0, 0.0, -400.0], [400.0, 400.0, 0.0]);
        let mut mesh = tag_boundaries(build_cartesian_mesh(4, 4, 4, ext, &ZoneSpec::slab(-300.0, -100.0)).unwrap(), &[Plane::XMin, Plane::XMax]).unwrap();
        mesh.perforations = select_perforations(&mesh, &Aabb::new([100.0, 100.0, -300.0], [200.0, 200.0, -100.0])).unwrap();
        mesh.gamma_int = select_gamma_int(&mesh, &Aabb::new([100.0, 100.0, -300.0], [300.0, 300.0, -100.0])).unwrap();
        Discretization::new(mesh, FluidRockProps::reference()).unwrap()
    }

    #[test]
    fn single_cell_recursion() {
        let mesh = tag_boundaries(build_cartesian_mesh(1, 1, 1, Aabb::new([0.0; 3], [1.0; 3]), &ZoneSpec::whole()).unwrap(), &Plane::ALL).unwrap();
        let props = FluidRockProps { g: 0.0, ..FluidRockProps::reference() };
        let disc = Discretization::new(mesh, props).unwrap();
        let op = disc.assemble(&ParameterPoint::new(1e-13, 1e-13)).unwrap();
        let (a, m, b) = (op.a.get(0, 0), op.m[0], op.b[0]);
        let grid = TimeGrid::new(0.3, 5).unwrap();
        let traj = solve_primal(&op, &[7e6], &grid).unwrap();
        let mut p = 7e6;
        for x in traj.iter().skip(1) {
            p = (m * p + grid.dt * b) / (m + grid.dt * a);
            assert!((x[0] - p).abs() <= 1e-12 * p.abs());
        }
    }

    #[test]
    fn hydrostatic_state_is_stationary_without_wells() {
        let mut disc = small_disc();
        disc.wells.clear();
        let grid = TimeGrid::new(864000.0, 3).unwrap();
        let op = disc.assemble(&ParameterPoint::new(5e-13, 5e-16)).unwrap();
        let p0 = hydrostatic_init(&disc);
        let traj = solve_primal(&op, &p0, &grid).unwrap();
        let nc = disc.mesh.n_cells();
        for (a, b) in traj[3].iter().zip(&p0).take(nc) {
            assert!((a - b).abs() <= 1e-8 * b.abs());
        }
        for (fid, u) in disc.mesh.neumann_index.iter().enumerate() {
            if let Some(u) = u {
                let want = disc.props.hydrostatic(disc.mesh.faces[fid].center[2]);
                assert!((traj[1][*u] - want).abs() <= 1e-8 * want.abs());
            }
        }
    }

    #[test]
    fn well_drives_pressure_up() {
        let disc = small_disc();
        let grid = TimeGrid::new(864000.0, 4).unwrap();
        let sol = solve(&disc, &ParameterPoint::new(5e-13, 5e-16), &grid).unwrap();
        let k = disc.wells[0].cell;
        assert!(sol.p[4][k] > sol.p[0][k]);
        assert_eq!(sol.s.len(), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn duality_identity(seed in 0u64..1000, amp in 1e2f64..1e6) {
            let disc = small_disc();
            let grid = TimeGrid::new(864000.0, 4).unwrap();
            let op = disc.assemble(&ParameterPoint::new(3e-13, 2e-16)).unwrap();
            let p0 = hydrostatic_init(&disc);
            let exact = solve_primal(&op, &p0, &grid).unwrap();
            let psi = solve_dual(&op, &grid).unwrap();
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let mut noise = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * amp
            };
            let mut approx = vec![p0.clone()];
            for n in 1..=grid.n_steps {
                approx.push(exact[n].iter().map(|v| v + noise()).collect());
            }
            let lhs: f64 = dot(&op.l, &exact[4]) - dot(&op.l, &approx[4]);
            let mut rhs = 0.0;
            for k in 0..grid.n_steps {
                rhs += grid.dt * dot(&step_residual(&op, &approx[k], &approx[k + 1], grid.dt), &psi[k]);
            }
            let scale: f64 = op.l.iter().map(|v| v.abs()).sum::<f64>() * amp;
            prop_assert!((lhs - rhs).abs() <= 1e-7 * scale, "{} vs {}", lhs, rhs);
        }
    }
}
