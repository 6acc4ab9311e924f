//! Offline artifact: the reduced model plus run metadata, stored as an [`Archive`].

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::eim::ThetaMap;
use crate::energy::EnergyVariant;
use crate::error::{Error, Result};
use crate::estimators::{DualTable, PrimalTable};
use crate::hf::TimeGrid;
use crate::mpfa::{CellPatch, CoefficientRecipe, ParameterPoint, ParameterRanges, PatchFace, PatchNeighbor};
use crate::online::{Coercivity, DualOperator, ReducedModel, ReducedOperator};
use crate::persistence::{Archive, ArchiveError};
use crate::reduction::GreedyRound;
use crate::scm::{ScmModel, ScmPoint};

#[derive(Clone, Debug)]
pub struct OfflineArtifact {
    pub config_text: String,
    pub model: ReducedModel,
    /// Basis columns, kept only for lifting and validation.
    pub z_pr: Vec<Vec<f64>>,
    pub z_du: Option<Vec<Vec<f64>>>,
    pub selected: Vec<usize>,
    pub rounds: Vec<GreedyRound>,
    pub eim_error_curve: Vec<f64>,
}

fn shape_err(name: &str, msg: impl Into<String>) -> Error {
    Error::Archive(ArchiveError::Shape { name: name.into(), msg: msg.into() })
}

fn put_mat(a: &mut Archive, name: &str, m: &DMatrix<f64>) {
    a.put_f64(name, &[m.nrows(), m.ncols()], m.as_slice());
}

fn get_mat(a: &Archive, name: &str) -> Result<DMatrix<f64>> {
    let (s, v) = a.get_f64(name)?;
    if s.len() != 2 {
        return Err(shape_err(name, "expected a matrix"));
    }
    Ok(DMatrix::from_column_slice(s[0], s[1], &v))
}

fn put_mats(a: &mut Archive, name: &str, ms: &[DMatrix<f64>]) {
    let (r, c) = ms.first().map_or((0, 0), |m| m.shape());
    let mut data = Vec::with_capacity(ms.len() * r * c);
    for m in ms {
        data.extend_from_slice(m.as_slice());
    }
    a.put_f64(name, &[ms.len(), r, c], &data);
}

fn get_mats(a: &Archive, name: &str) -> Result<Vec<DMatrix<f64>>> {
    let (s, v) = a.get_f64(name)?;
    if s.len() != 3 {
        return Err(shape_err(name, "expected a matrix stack"));
    }
    let sz = s[1] * s[2];
    Ok((0..s[0]).map(|k| DMatrix::from_column_slice(s[1], s[2], &v[k * sz..(k + 1) * sz])).collect())
}

fn put_rows(a: &mut Archive, name: &str, rows: &[Vec<f64>], width: usize) {
    let mut data = Vec::with_capacity(rows.len() * width);
    for r in rows {
        data.extend_from_slice(r);
    }
    a.put_f64(name, &[rows.len(), width], &data);
}

fn get_rows(a: &Archive, name: &str) -> Result<Vec<Vec<f64>>> {
    let (s, v) = a.get_f64(name)?;
    if s.len() != 2 {
        return Err(shape_err(name, "expected rows"));
    }
    if s[1] == 0 {
        return Ok(vec![Vec::new(); s[0]]);
    }
    Ok(v.chunks_exact(s[1]).map(|c| c.to_vec()).collect())
}

fn put_dvecs(a: &mut Archive, name: &str, vs: &[DVector<f64>]) {
    let rows: Vec<Vec<f64>> = vs.iter().map(|v| v.as_slice().to_vec()).collect();
    put_rows(a, name, &rows, vs.first().map_or(0, |v| v.len()));
}

fn get_dvecs(a: &Archive, name: &str) -> Result<Vec<DVector<f64>>> {
    Ok(get_rows(a, name)?.into_iter().map(DVector::from_vec).collect())
}

fn put_points(a: &mut Archive, name: &str, pts: &[ParameterPoint]) {
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.kappa1, p.kappa2]).collect();
    put_rows(a, name, &rows, 2);
}

fn get_points(a: &Archive, name: &str) -> Result<Vec<ParameterPoint>> {
    get_rows(a, name)?
        .into_iter()
        .map(|r| if r.len() == 2 { Ok(ParameterPoint::new(r[0], r[1])) } else { Err(shape_err(name, "expected pairs")) })
        .collect()
}

fn get_usize(a: &Archive, name: &str) -> Result<Vec<usize>> {
    Ok(a.get_u64(name)?.1.into_iter().map(|v| v as usize).collect())
}

fn put_usize(a: &mut Archive, name: &str, v: &[usize]) {
    a.put_u64(name, &[v.len()], &v.iter().map(|&x| x as u64).collect::<Vec<_>>());
}

const RECIPE_HEADER: usize = 6;
const FACE_WIDTH: usize = 13;

fn flatten_recipes(recipes: &[CoefficientRecipe]) -> Vec<f64> {
    let mut out = Vec::new();
    for r in recipes {
        let p = &r.patch;
        out.extend_from_slice(&p.center);
        out.extend_from_slice(&[p.zone as f64, r.offset as f64, p.faces.len() as f64]);
        for f in &p.faces {
            out.extend_from_slice(&f.normal);
            out.extend_from_slice(&f.center);
            out.push(f.d_self);
            match f.neighbor {
                None => out.extend_from_slice(&[0.0; 6]),
                Some(nb) => {
                    out.extend_from_slice(&[1.0, nb.zone as f64, nb.d_other]);
                    out.extend_from_slice(&nb.center_other);
                }
            }
        }
    }
    out
}

fn unflatten_recipes(data: &[f64], count: usize) -> Result<Vec<CoefficientRecipe>> {
    let bad = || shape_err("map.recipes", "malformed recipe data");
    let mut pos = 0;
    let mut out = Vec::with_capacity(count);
    let v3 = |s: &[f64]| [s[0], s[1], s[2]];
    for _ in 0..count {
        let h = data.get(pos..pos + RECIPE_HEADER).ok_or_else(bad)?;
        let (center, zone, offset, nf) = (v3(h), h[3] as u8, h[4] as usize, h[5] as usize);
        pos += RECIPE_HEADER;
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            let f = data.get(pos..pos + FACE_WIDTH).ok_or_else(bad)?;
            let neighbor = if f[7] != 0.0 {
                Some(PatchNeighbor { zone: f[8] as u8, d_other: f[9], center_other: v3(&f[10..13]) })
            } else {
                None
            };
            faces.push(PatchFace { normal: v3(&f[0..3]), center: v3(&f[3..6]), d_self: f[6], neighbor });
            pos += FACE_WIDTH;
        }
        out.push(CoefficientRecipe { patch: CellPatch { center, zone, faces }, offset });
    }
    if pos != data.len() {
        return Err(bad());
    }
    Ok(out)
}

fn put_scm(a: &mut Archive, m: &ScmModel) {
    let d = m.d();
    a.put_f64("scm.box_lo", &[d], &m.box_lo);
    a.put_f64("scm.box_hi", &[d], &m.box_hi);
    put_usize(a, "scm.params", &[m.m1, m.m2]);
    a.put_scalar("scm.tol", m.tol);
    put_usize(a, "scm.sel.index", &m.selected.iter().map(|p| p.training_index).collect::<Vec<_>>());
    put_points(a, "scm.sel.xi", &m.selected.iter().map(|p| p.xi).collect::<Vec<_>>());
    put_rows(a, "scm.sel.theta", &m.selected.iter().map(|p| p.theta.clone()).collect::<Vec<_>>(), d);
    put_rows(a, "scm.sel.w", &m.selected.iter().map(|p| p.w.clone()).collect::<Vec<_>>(), d);
    let alphas: Vec<f64> = m.selected.iter().map(|p| p.alpha).collect();
    a.put_f64("scm.sel.alpha", &[alphas.len()], &alphas);
    put_points(a, "scm.training", &m.training);
    put_rows(a, "scm.training_theta", &m.training_theta, d);
    a.put_f64("scm.training_lb", &[m.training_lb.len()], &m.training_lb);
    a.put_f64("scm.gap_history", &[m.gap_history.len()], &m.gap_history);
}

fn get_scm(a: &Archive) -> Result<ScmModel> {
    let params = get_usize(a, "scm.params")?;
    if params.len() != 2 {
        return Err(shape_err("scm.params", "expected two entries"));
    }
    let idx = get_usize(a, "scm.sel.index")?;
    let xi = get_points(a, "scm.sel.xi")?;
    let theta = get_rows(a, "scm.sel.theta")?;
    let w = get_rows(a, "scm.sel.w")?;
    let alpha = a.get_f64("scm.sel.alpha")?.1;
    if [xi.len(), theta.len(), w.len(), alpha.len()].iter().any(|&l| l != idx.len()) {
        return Err(shape_err("scm.sel", "inconsistent selected-point blocks"));
    }
    let selected = (0..idx.len())
        .map(|k| ScmPoint { training_index: idx[k], xi: xi[k], theta: theta[k].clone(), alpha: alpha[k], w: w[k].clone() })
        .collect();
    Ok(ScmModel {
        box_lo: a.get_f64("scm.box_lo")?.1,
        box_hi: a.get_f64("scm.box_hi")?.1,
        selected,
        m1: params[0],
        m2: params[1],
        tol: a.get_scalar("scm.tol")?,
        training: get_points(a, "scm.training")?,
        training_theta: get_rows(a, "scm.training_theta")?,
        training_lb: a.get_f64("scm.training_lb")?.1,
        gap_history: a.get_f64("scm.gap_history")?.1,
    })
}

impl OfflineArtifact {
    pub fn to_archive(&self) -> Result<Archive> {
        let mut a = Archive::new();
        let m = &self.model;
        a.put_bytes("config", self.config_text.as_bytes());
        a.put_scalar("grid.dt", m.grid.dt);
        put_usize(&mut a, "grid.n_steps", &[m.grid.n_steps]);
        a.put_f64("ranges", &[4], &[m.ranges.kappa1[0], m.ranges.kappa1[1], m.ranges.kappa2[0], m.ranges.kappa2[1]]);
        put_usize(&mut a, "variant", &[matches!(m.variant, EnergyVariant::Stiffness) as usize]);
        a.put_scalar("alpha_m", m.alpha_m);

        let map = &m.map;
        put_usize(&mut a, "map.count", &[map.recipes.len()]);
        let flat = flatten_recipes(&map.recipes);
        a.put_f64("map.recipes", &[flat.len()], &flat);
        let lower: Vec<f64> = map.lower.iter().flatten().copied().collect();
        a.put_f64("map.lower", &[lower.len()], &lower);
        put_usize(&mut a, "map.well_zones", &map.well_zones.iter().map(|&z| z as usize).collect::<Vec<_>>());
        a.put_f64("map.kappa_ref", &[2], &[map.kappa_ref.kappa1, map.kappa_ref.kappa2]);
        a.put_scalar("map.mu", map.mu);

        let op = &m.op;
        put_mat(&mut a, "op.m", &op.m);
        put_mats(&mut a, "op.a", &op.a);
        put_dvecs(&mut a, "op.b", &op.b);
        put_dvecs(&mut a, "op.l", &op.l);
        a.put_f64("op.c", &[op.c.len()], &op.c);
        if let Some(du) = &op.dual {
            put_mat(&mut a, "du.m", &du.m);
            put_mats(&mut a, "du.a", &du.a);
            put_dvecs(&mut a, "du.terminal", &du.terminal);
            put_mat(&mut a, "du.p_m", &du.p_m);
            put_mats(&mut a, "du.p_a", &du.p_a);
            put_dvecs(&mut a, "du.q", &du.q);
        }
        put_mat(&mut a, "prt.e_m", &m.primal_table.e_m);
        put_mats(&mut a, "prt.e_a", &m.primal_table.e_a);
        put_dvecs(&mut a, "prt.e_b", &m.primal_table.e_b);
        if let Some(t) = &m.dual_table {
            put_mat(&mut a, "dut.e_m", &t.e_m);
            put_mats(&mut a, "dut.e_a", &t.e_a);
        }
        match &m.coercivity {
            Coercivity::Scm(s) => put_scm(&mut a, s),
            Coercivity::Exact(_) => return Err(Error::Model("archives need SCM coercivity bounds".into())),
        }

        let n = self.z_pr.first().map_or(0, |v| v.len());
        put_rows(&mut a, "z_pr", &self.z_pr, n);
        if let Some(z) = &self.z_du {
            put_rows(&mut a, "z_du", z, n);
        }
        put_usize(&mut a, "greedy.selected", &self.selected);
        let ints: Vec<u64> =
            self.rounds.iter().flat_map(|r| [r.round, r.n_pr, r.n_du, r.added, r.argmax]).map(|v| v as u64).collect();
        a.put_u64("greedy.rounds", &[self.rounds.len(), 5], &ints);
        let vals: Vec<f64> = self.rounds.iter().flat_map(|r| [r.max_estimate, r.max_relative]).collect();
        a.put_f64("greedy.values", &[self.rounds.len(), 2], &vals);
        a.put_f64("eim.error_curve", &[self.eim_error_curve.len()], &self.eim_error_curve);
        Ok(a)
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        let config_text =
            String::from_utf8(a.get_bytes("config")?.to_vec()).map_err(|_| shape_err("config", "config text is not UTF-8"))?;
        let n_steps = *get_usize(a, "grid.n_steps")?.first().ok_or_else(|| shape_err("grid.n_steps", "empty"))?;
        let grid = TimeGrid::new(a.get_scalar("grid.dt")?, n_steps)?;
        let r = a.get_f64_shaped("ranges", &[4])?;
        let ranges = ParameterRanges { kappa1: [r[0], r[1]], kappa2: [r[2], r[3]] };
        let variant = if get_usize(a, "variant")?.first() == Some(&1) { EnergyVariant::Stiffness } else { EnergyVariant::SpaceTime };

        let count = *get_usize(a, "map.count")?.first().ok_or_else(|| shape_err("map.count", "empty"))?;
        let recipes = unflatten_recipes(&a.get_f64("map.recipes")?.1, count)?;
        let flat_lower = a.get_f64("map.lower")?.1;
        if flat_lower.len() != count * count.saturating_sub(1) / 2 {
            return Err(shape_err("map.lower", "wrong length"));
        }
        let mut lower = Vec::with_capacity(count);
        let mut pos = 0;
        for i in 0..count {
            lower.push(flat_lower[pos..pos + i].to_vec());
            pos += i;
        }
        let kr = a.get_f64_shaped("map.kappa_ref", &[2])?;
        let map = ThetaMap {
            recipes,
            lower,
            well_zones: get_usize(a, "map.well_zones")?.into_iter().map(|z| z as u8).collect(),
            kappa_ref: ParameterPoint::new(kr[0], kr[1]),
            mu: a.get_scalar("map.mu")?,
        };

        let dual = if a.contains("du.m") {
            Some(DualOperator {
                m: get_mat(a, "du.m")?,
                a: get_mats(a, "du.a")?,
                terminal: get_dvecs(a, "du.terminal")?,
                p_m: get_mat(a, "du.p_m")?,
                p_a: get_mats(a, "du.p_a")?,
                q: get_dvecs(a, "du.q")?,
            })
        } else {
            None
        };
        let op = ReducedOperator {
            m: get_mat(a, "op.m")?,
            a: get_mats(a, "op.a")?,
            b: get_dvecs(a, "op.b")?,
            l: get_dvecs(a, "op.l")?,
            c: a.get_f64("op.c")?.1,
            dual,
        };
        if op.d() != map.d() || op.b.len() != op.d() || op.l.len() != op.d() || op.c.len() != op.d() {
            return Err(shape_err("op", "affine term count mismatch"));
        }
        let primal_table =
            PrimalTable { e_m: get_mat(a, "prt.e_m")?, e_a: get_mats(a, "prt.e_a")?, e_b: get_dvecs(a, "prt.e_b")? };
        let dual_table =
            if a.contains("dut.e_m") { Some(DualTable { e_m: get_mat(a, "dut.e_m")?, e_a: get_mats(a, "dut.e_a")? }) } else { None };
        let model = ReducedModel {
            grid,
            ranges,
            variant,
            map,
            op,
            primal_table,
            dual_table,
            coercivity: Coercivity::Scm(get_scm(a)?),
            alpha_m: a.get_scalar("alpha_m")?,
        };

        let z_pr = get_rows(a, "z_pr")?;
        let z_du = if a.contains("z_du") { Some(get_rows(a, "z_du")?) } else { None };
        let (rs, ints) = a.get_u64("greedy.rounds")?;
        let vals = a.get_f64("greedy.values")?.1;
        if rs.len() != 2 || rs[1] != 5 || vals.len() != 2 * rs[0] {
            return Err(shape_err("greedy.rounds", "malformed round log"));
        }
        let rounds = (0..rs[0])
            .map(|i| {
                let r = &ints[5 * i..5 * i + 5];
                GreedyRound {
                    round: r[0] as usize,
                    n_pr: r[1] as usize,
                    n_du: r[2] as usize,
                    added: r[3] as usize,
                    argmax: r[4] as usize,
                    max_estimate: vals[2 * i],
                    max_relative: vals[2 * i + 1],
                }
            })
            .collect();
        Ok(OfflineArtifact {
            config_text,
            model,
            z_pr,
            z_du,
            selected: get_usize(a, "greedy.selected")?,
            rounds,
            eim_error_curve: a.get_f64("eim.error_curve")?.1,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_archive()?.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}
