//! Browser demo: a 6×6×3 offline stage run in the page, then certified reduced outputs,
//! pressure slices and high-fidelity comparisons on demand.

use darcy_rb::config::Config;
use darcy_rb::mpfa::ParameterPoint;
use darcy_rb::offline::{run_offline, truth, Offline};
use darcy_rb::online::ReducedModel;
use wasm_bindgen::prelude::*;

/// Case solved by the demo; small enough for a single-threaded offline stage.
pub const DEMO_CONFIG: &str = r#"
[mesh]
nx = 6
ny = 6
nz = 3
zone1 = [-666.6666666666667, -333.33333333333337]
well_box = { lo = [700.0, 700.0, -600.0], hi = [900.0, 900.0, -400.0] }
gamma_int = { lo = [665.3333333333334, 665.3333333333334, -666.6666666666667], hi = [1330.6666666666667, 1330.6666666666667, -333.33333333333337] }

[sampling]
training = 30
test = 0

[scm]
max_points = 30

[greedy]
tol = 1e-7
"#;

/// Offline result plus what the demo needs to lift reduced states.
pub struct DemoModel {
    pub off: Offline,
    pub model: ReducedModel,
    pub z_pr: Vec<Vec<f64>>,
}

impl DemoModel {
    pub fn build(config_text: &str) -> Result<Self, String> {
        let (off, out, _) = run_offline(config_text, &mut |_, _, _, _| Ok(())).map_err(|e| e.to_string())?;
        Ok(DemoModel { z_pr: out.z_pr.vecs.clone(), model: out.model, off })
    }

    fn config(&self) -> &Config {
        &self.off.case.config
    }

    fn point(&self, k1: f64, k2: f64) -> Result<ParameterPoint, String> {
        let xi = ParameterPoint::new(k1, k2);
        self.config().parameters.check(&xi).map_err(|e| e.to_string())?;
        Ok(xi)
    }

    /// Rows of `[t_days, s_plain, Δ̃_s, s_corrected, Δ_s]` for every step `1..=N`.
    pub fn curve(&self, k1: f64, k2: f64) -> Result<Vec<f64>, String> {
        let xi = self.point(k1, k2)?;
        let dt_days = self.config().time.dt_days;
        let mut out = Vec::with_capacity(5 * self.model.grid.n_steps);
        for h in 1..=self.model.grid.n_steps {
            let r = self.model.evaluate_at(&xi, h).map_err(|e| e.to_string())?;
            out.extend([h as f64 * dt_days, r.s_plain, r.estimates.delta_s_tilde, r.s_corrected.unwrap_or(f64::NAN), r.estimates.delta_s]);
        }
        Ok(out)
    }

    /// Reduced pressure of layer `k` (0 = bottom) at `step`, row-major in `(y, x)`.
    pub fn slice(&self, k1: f64, k2: f64, layer: usize, step: usize) -> Result<Vec<f64>, String> {
        let xi = self.point(k1, k2)?;
        let [nx, ny, nz] = self.off.case.disc.mesh.dims;
        if layer >= nz || step > self.model.grid.n_steps {
            return Err(format!("layer {layer} or step {step} out of range"));
        }
        let r = self.model.evaluate(&xi).map_err(|e| e.to_string())?;
        let p = ReducedModel::lift(&self.z_pr, &self.off.case.p0, &r.u[step]);
        Ok((0..nx * ny).map(|i| p[layer * nx * ny + i]).collect())
    }

    /// High-fidelity output `s(t^n)` for `n = 1..=N`.
    pub fn hf_curve(&self, k1: f64, k2: f64) -> Result<Vec<f64>, String> {
        let xi = self.point(k1, k2)?;
        let t = truth(&self.off.case, &xi).map_err(|e| e.to_string())?;
        Ok(t.s[1..].to_vec())
    }
}

#[wasm_bindgen]
pub struct Demo {
    inner: DemoModel,
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
impl Demo {
    /// Runs the offline stage; takes a few seconds.
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Demo, JsError> {
        Ok(Demo { inner: DemoModel::build(DEMO_CONFIG).map_err(js)? })
    }

    pub fn evaluate(&self, k1: f64, k2: f64) -> Result<Vec<f64>, JsError> {
        self.inner.curve(k1, k2).map_err(js)
    }

    pub fn pressure_slice(&self, k1: f64, k2: f64, layer: usize, step: usize) -> Result<Vec<f64>, JsError> {
        self.inner.slice(k1, k2, layer, step).map_err(js)
    }

    pub fn hf_compare(&self, k1: f64, k2: f64) -> Result<Vec<f64>, JsError> {
        self.inner.hf_curve(k1, k2).map_err(js)
    }

    /// `[nx, ny, nz, n_steps, n_hf, n_pr, n_du, eim_terms]`.
    pub fn sizes(&self) -> Vec<f64> {
        let d = &self.inner.off;
        let [nx, ny, nz] = d.case.disc.mesh.dims;
        let m = &self.inner.model;
        [nx, ny, nz, m.grid.n_steps, d.case.n(), m.op.n_pr(), m.op.n_du(), d.affine.eim.m()].map(|v| v as f64).to_vec()
    }

    /// `[κ1_min, κ1_max, κ2_min, κ2_max]`.
    pub fn ranges(&self) -> Vec<f64> {
        let r = self.inner.config().parameters;
        vec![r.kappa1[0], r.kappa1[1], r.kappa2[0], r.kappa2[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_bounds_hold_against_high_fidelity() {
        let d = DemoModel::build(DEMO_CONFIG).unwrap();
        assert_eq!(d.off.case.disc.mesh.dims, [6, 6, 3]);
        let r = d.config().parameters;
        let (k1, k2) = ((r.kappa1[0] * r.kappa1[1]).sqrt() * 1.3, r.kappa2[0] * 4.0);
        let curve = d.curve(k1, k2).unwrap();
        let hf = d.hf_curve(k1, k2).unwrap();
        assert_eq!(curve.len(), 5 * hf.len());
        for (row, s) in curve.chunks(5).zip(&hf) {
            let floor = 1e-12 * s.abs();
            assert!((s - row[1]).abs() <= row[2] + floor);
            assert!((s - row[3]).abs() <= row[4] + floor);
        }
        let slice = d.slice(k1, k2, 1, 20).unwrap();
        assert_eq!(slice.len(), 36);
        assert!(slice.iter().all(|p| p.is_finite() && *p > 0.0));
        assert!(d.slice(k1, k2, 3, 0).is_err());
        assert!(d.curve(1.0, 1.0).is_err());
    }
}
