//! Average multi-point flux approximation: harmonic points, conormal decompositions,
//! Peaceman wells, and assembly of the parametrized operator `(A, M, b, l, c)`.
//!
//! Every ξ-dependent quantity enters through the coefficient vector `v̂(ξ)`, which stores
//! for each cell `K`, face `σ ∈ E_K` and candidate face `σ' ∈ E_K` the triple
//! `(α_{K,σσ'}, α ω_{K,σ'}, α ω_{M,σ'})`. The operator entries are fixed linear
//! functions of `v̂` (the assembly template) plus a well term linear in the mobility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Csr;
use crate::mesh::{dot3, scale, sub, BoundaryTag, Mesh, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidRockProps {
    /// Viscosity, Pa·s.
    pub mu: f64,
    /// Total compressibility, 1/Pa.
    pub c_t: f64,
    pub phi: f64,
    /// Density, kg/m³.
    pub rho: f64,
    pub g: f64,
    /// Bottom-hole pressure, Pa.
    pub p_bh: f64,
    pub z_bh: f64,
    /// Well radius, m.
    pub r_w: f64,
    pub skin: f64,
    /// Dirichlet reference pressure, Pa, at depth `z_d`.
    pub p_d: f64,
    pub z_d: f64,
}

impl Default for FluidRockProps {
    fn default() -> Self {
        Self::reference()
    }
}

impl FluidRockProps {
    pub fn reference() -> Self {
        FluidRockProps {
            mu: 1.5e-5,
            c_t: 1.4e-7,
            phi: 0.2,
            rho: 700.0,
            g: 9.81,
            p_bh: 4.13e7,
            z_bh: 0.0,
            r_w: 0.1,
            skin: 0.0,
            p_d: 1e5,
            z_d: 80.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("mu", self.mu), ("c_t", self.c_t), ("phi", self.phi), ("rho", self.rho), ("r_w", self.r_w)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        if !(self.g >= 0.0) || !self.g.is_finite() {
            return Err(Error::Config("g must be nonnegative and finite".into()));
        }
        Ok(())
    }

    /// Hydrostatic pressure at depth `z`.
    pub fn hydrostatic(&self, z: f64) -> f64 {
        self.p_d - self.rho * self.g * (z - self.z_d)
    }
}

/// Permeabilities of the two zones, m².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub kappa1: f64,
    pub kappa2: f64,
}

impl ParameterPoint {
    pub fn new(kappa1: f64, kappa2: f64) -> Self {
        ParameterPoint { kappa1, kappa2 }
    }

    pub fn kappa(&self, zone: u8) -> f64 {
        if zone == 1 {
            self.kappa1
        } else {
            self.kappa2
        }
    }

    pub fn log10(&self) -> [f64; 2] {
        [self.kappa1.log10(), self.kappa2.log10()]
    }

    /// Euclidean distance in `(log₁₀κ1, log₁₀κ2)`.
    pub fn log_distance(&self, other: &ParameterPoint) -> f64 {
        let (a, b) = (self.log10(), other.log10());
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterRanges {
    pub kappa1: [f64; 2],
    pub kappa2: [f64; 2],
}

impl ParameterRanges {
    pub fn reference() -> Self {
        ParameterRanges { kappa1: [1e-13, 1e-12], kappa2: [1e-17, 1e-15] }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.kappa1, self.kappa2] {
            if !(r[0] > 0.0 && r[1] >= r[0] && r[1].is_finite()) {
                return Err(Error::Config("permeability ranges must satisfy 0 < lo <= hi".into()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, xi: &ParameterPoint) -> bool {
        let tol = 1e-12;
        let inside = |v: f64, r: [f64; 2]| v >= r[0] * (1.0 - tol) && v <= r[1] * (1.0 + tol);
        inside(xi.kappa1, self.kappa1) && inside(xi.kappa2, self.kappa2)
    }

    pub fn check(&self, xi: &ParameterPoint) -> Result<()> {
        if self.contains(xi) {
            Ok(())
        } else {
            Err(Error::Domain(format!("({:e}, {:e}) outside the configured ranges", xi.kappa1, xi.kappa2)))
        }
    }

    /// Geometric midpoint of both ranges.
    pub fn log_midpoint(&self) -> ParameterPoint {
        ParameterPoint::new((self.kappa1[0] * self.kappa1[1]).sqrt(), (self.kappa2[0] * self.kappa2[1]).sqrt())
    }
}

/// Harmonic averaging point of an interior face for isotropic cells.
///
/// Returns `(x_σ, ω_K, ω_L)`.
pub fn harmonic_point(d_k: f64, d_l: f64, tau_k: f64, tau_l: f64, y_k: Vec3, y_l: Vec3) -> Result<(Vec3, f64, f64)> {
    if !(d_k > 0.0 && d_l > 0.0) {
        return Err(Error::Assembly("non-positive center-to-face distance".into()));
    }
    let den = d_l * tau_k + d_k * tau_l;
    if !(den > 0.0) {
        return Err(Error::Assembly("singular face: both mobilities vanish".into()));
    }
    let wk = d_l * tau_k / den;
    let wl = d_k * tau_l / den;
    let x = [wk * y_k[0] + wl * y_l[0], wk * y_k[1] + wl * y_l[1], wk * y_k[2] + wl * y_l[2]];
    Ok((x, wk, wl))
}

fn residual_norm(target: Vec3, cands: &[Vec3], idx: &[usize], coef: &[f64]) -> f64 {
    let mut r = target;
    for (&i, &a) in idx.iter().zip(coef) {
        for c in 0..3 {
            r[c] -= a * cands[i][c];
        }
    }
    dot3(r, r).sqrt()
}

fn solve_subset(target: Vec3, cands: &[Vec3], idx: &[usize]) -> Option<Vec<f64>> {
    let k = idx.len();
    let mut g = nalgebra::DMatrix::<f64>::zeros(k, k);
    let mut rhs = nalgebra::DVector::<f64>::zeros(k);
    for a in 0..k {
        rhs[a] = dot3(cands[idx[a]], target);
        for b in 0..k {
            g[(a, b)] = dot3(cands[idx[a]], cands[idx[b]]);
        }
    }
    let sol = g.lu().solve(&rhs)?;
    if sol.iter().all(|v| v.is_finite()) {
        Some(sol.iter().cloned().collect())
    } else {
        None
    }
}

/// Writes `target ≈ Σ α_i cands_i`.
///
/// Preference order: nonnegative coefficients, then the smallest stencil, then the
/// smallest coefficient sum. Subsets of size at most three are enumerated; a
/// least-squares fit over all candidates is the fallback.
pub fn conormal_decomposition(target: Vec3, cands: &[Vec3]) -> Result<Vec<f64>> {
    let nc = cands.len();
    let tn = dot3(target, target).sqrt();
    let mut out = vec![0.0; nc];
    if tn == 0.0 {
        return Ok(out);
    }
    let tol = 1e-9 * tn;
    let mut best_signed: Option<(usize, f64, Vec<usize>, Vec<f64>)> = None;
    for size in 1..=3usize.min(nc) {
        let mut best_nonneg: Option<(f64, Vec<usize>, Vec<f64>)> = None;
        for subset in subsets(nc, size) {
            let Some(coef) = solve_subset(target, cands, &subset) else { continue };
            if residual_norm(target, cands, &subset, &coef) > tol {
                continue;
            }
            let sum: f64 = coef.iter().sum();
            let scale_ref = coef.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if coef.iter().all(|&v| v >= -1e-12 * scale_ref) {
                if best_nonneg.as_ref().is_none_or(|b| sum < b.0) {
                    best_nonneg = Some((sum, subset.clone(), coef.clone()));
                }
            }
            let abs_sum: f64 = coef.iter().map(|v| v.abs()).sum();
            if best_signed.as_ref().is_none_or(|b| (size, abs_sum) < (b.0, b.1)) {
                best_signed = Some((size, abs_sum, subset, coef));
            }
        }
        if let Some((_, idx, coef)) = best_nonneg {
            for (i, a) in idx.into_iter().zip(coef) {
                out[i] = a.max(0.0);
            }
            return Ok(out);
        }
    }
    if let Some((_, _, idx, coef)) = best_signed {
        for (i, a) in idx.into_iter().zip(coef) {
            out[i] = a;
        }
        return Ok(out);
    }
    let a = nalgebra::DMatrix::from_fn(3, nc, |r, c| cands[c][r]);
    let t = nalgebra::DVector::from_column_slice(&target);
    let sol = a
        .svd(true, true)
        .solve(&t, 1e-14)
        .map_err(|e| Error::Assembly(format!("conormal least squares failed: {e}")))?;
    let all: Vec<usize> = (0..nc).collect();
    let coef: Vec<f64> = sol.iter().cloned().collect();
    if residual_norm(target, cands, &all, &coef) > tol {
        return Err(Error::Assembly("stencil candidates do not span R^3".into()));
    }
    Ok(coef)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Peaceman equivalent radius for a diagonal mobility `(λ1, λ2)` and cell sizes `h1, h2`.
pub fn peaceman_radius(l1: f64, l2: f64, h1: f64, h2: f64) -> f64 {
    if l1 == 0.0 || l2 == 0.0 {
        return 0.14 * (h1 * h1 + h2 * h2).sqrt();
    }
    let r21 = l2 / l1;
    let r12 = l1 / l2;
    0.14 * (r21.sqrt() * h1 * h1 + r12.sqrt() * h2 * h2).sqrt() / (0.5 * (r21.powf(0.25) + r12.powf(0.25)))
}

/// Peaceman well index `2π h3 √(λ1λ2) / (ln(r_e/r_w) + s_d)`.
pub fn well_index(l1: f64, l2: f64, h1: f64, h2: f64, h3: f64, r_w: f64, s_d: f64) -> Result<f64> {
    let re = peaceman_radius(l1, l2, h1, h2);
    if re <= r_w {
        return Err(Error::Config(format!("Peaceman radius {re} does not exceed the well radius {r_w}")));
    }
    let den = (re / r_w).ln() + s_d;
    if den <= 0.0 {
        return Err(Error::Config("ln(r_e/r_w) + skin must be positive".into()));
    }
    Ok(2.0 * std::f64::consts::PI * h3 * (l1 * l2).sqrt() / den)
}

/// Neighbor data of an interior patch face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchNeighbor {
    pub zone: u8,
    pub d_other: f64,
    pub center_other: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchFace {
    pub normal: Vec3,
    pub center: Vec3,
    pub d_self: f64,
    pub neighbor: Option<PatchNeighbor>,
}

/// Local geometry needed to compute the coefficient block of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellPatch {
    pub center: Vec3,
    pub zone: u8,
    pub faces: Vec<PatchFace>,
}

impl CellPatch {
    pub fn gather(mesh: &Mesh, k: usize) -> Self {
        let c = &mesh.cells[k];
        let faces = c
            .faces
            .iter()
            .map(|&fid| {
                let f = &mesh.faces[fid];
                let neighbor = f.other(k).map(|l| PatchNeighbor {
                    zone: mesh.cells[l].zone,
                    d_other: mesh.distance(l, fid),
                    center_other: mesh.cells[l].center,
                });
                PatchFace { normal: mesh.normal_from(fid, k), center: f.center, d_self: mesh.distance(k, fid), neighbor }
            })
            .collect();
        CellPatch { center: c.center, zone: c.zone, faces }
    }

    /// Candidate points `x_σ'` and interpolation weights `(ω_K, ω_M)` per face.
    fn face_points(&self, xi: &ParameterPoint, mu: f64) -> Result<Vec<(Vec3, f64, f64)>> {
        let lam_k = xi.kappa(self.zone) / mu;
        self.faces
            .iter()
            .map(|pf| match pf.neighbor {
                None => Ok((pf.center, 0.0, 0.0)),
                Some(nb) => {
                    let lam_m = xi.kappa(nb.zone) / mu;
                    let y_k = crate::mesh::add(self.center, scale(pf.normal, pf.d_self));
                    let y_m = crate::mesh::add(nb.center_other, scale(pf.normal, -nb.d_other));
                    harmonic_point(pf.d_self, nb.d_other, lam_k, lam_m, y_k, y_m)
                }
            })
            .collect()
    }

    /// Coefficient block `[(α, αω_K, αω_M)]` ordered by `(σ, σ')`.
    pub fn coefficients(&self, xi: &ParameterPoint, mu: f64) -> Result<Vec<f64>> {
        let nf = self.faces.len();
        let lam_k = xi.kappa(self.zone) / mu;
        let pts = self.face_points(xi, mu)?;
        let cands: Vec<Vec3> = pts.iter().map(|p| sub(p.0, self.center)).collect();
        let mut out = vec![0.0; 3 * nf * nf];
        for a in 0..nf {
            let target = scale(self.faces[a].normal, lam_k);
            let alpha = conormal_decomposition(target, &cands)?;
            for b in 0..nf {
                let base = 3 * (a * nf + b);
                out[base] = alpha[b];
                if self.faces[b].neighbor.is_some() {
                    out[base + 1] = alpha[b] * pts[b].1;
                    out[base + 2] = alpha[b] * pts[b].2;
                }
            }
        }
        Ok(out)
    }
}

/// Recipe for evaluating one entry of `v̂` from local data only.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientRecipe {
    pub patch: CellPatch,
    pub offset: usize,
}

impl CoefficientRecipe {
    pub fn evaluate(&self, xi: &ParameterPoint, mu: f64) -> Result<f64> {
        Ok(self.patch.coefficients(xi, mu)?[self.offset])
    }
}

/// What a flux term multiplies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    Unknown(usize),
    Const,
}

/// `coef · v̂[vidx] · var`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxTerm {
    pub var: Var,
    pub vidx: usize,
    pub coef: f64,
}

/// Perforated cell data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WellCell {
    pub cell: usize,
    pub zone: u8,
    /// Well index per unit mobility.
    pub wi_unit: f64,
    /// `p_bh − ρg(z_bh − z_K)`.
    pub head: f64,
}

/// The high-fidelity operator at one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct HfOperator {
    pub a: Csr,
    /// Diagonal of `M` (zero on Neumann face rows).
    pub m: Vec<f64>,
    pub b: Vec<f64>,
    pub l: Vec<f64>,
    pub c: f64,
}

impl HfOperator {
    pub fn n(&self) -> usize {
        self.m.len()
    }
}

/// ξ-independent discretization data: mesh, coefficient layout and assembly template.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: Mesh,
    pub props: FluidRockProps,
    block_offset: Vec<usize>,
    vhat_len: usize,
    pattern: Csr,
    a_terms: Vec<(usize, usize, f64)>,
    b_terms: Vec<(usize, usize, f64)>,
    l_terms: Vec<(usize, usize, f64)>,
    c_terms: Vec<(usize, f64)>,
    pub wells: Vec<WellCell>,
    pub mass: Vec<f64>,
}

impl Discretization {
    pub fn new(mesh: Mesh, props: FluidRockProps) -> Result<Self> {
        props.validate()?;
        if mesh.n_dirichlet() == 0 {
            return Err(Error::Config("mesh has no Dirichlet face".into()));
        }
        let nc = mesh.n_cells();
        let n = mesh.n_unknowns();
        let mut block_offset = Vec::with_capacity(nc + 1);
        let mut off = 0;
        for c in &mesh.cells {
            block_offset.push(off);
            off += 3 * c.faces.len() * c.faces.len();
        }
        block_offset.push(off);
        let mut disc = Discretization {
            mesh,
            props,
            block_offset,
            vhat_len: off,
            pattern: Csr::pattern(n, n, &[]),
            a_terms: Vec::new(),
            b_terms: Vec::new(),
            l_terms: Vec::new(),
            c_terms: Vec::new(),
            wells: Vec::new(),
            mass: Vec::new(),
        };
        disc.build_template()?;
        Ok(disc)
    }

    pub fn n(&self) -> usize {
        self.mesh.n_unknowns()
    }

    pub fn vhat_len(&self) -> usize {
        self.vhat_len
    }

    pub fn pattern(&self) -> &Csr {
        &self.pattern
    }

    fn local_face(&self, cell: usize, face: usize) -> usize {
        self.mesh.cells[cell].faces.iter().position(|&f| f == face).expect("face not incident to cell")
    }

    /// Outward flux approximation of `cell` through `face`, scaled by `weight`.
    fn one_sided(&self, cell: usize, face: usize, weight: f64, out: &mut Vec<FluxTerm>) {
        let mesh = &self.mesh;
        let p = &self.props;
        let rg = p.rho * p.g;
        let c = &mesh.cells[cell];
        let nf = c.faces.len();
        let a = self.local_face(cell, face);
        let s = -weight * mesh.faces[face].area;
        let zk = c.center[2];
        for (b, &fb) in c.faces.iter().enumerate() {
            let ia = self.block_offset[cell] + 3 * (a * nf + b);
            let f = &mesh.faces[fb];
            match f.tag {
                BoundaryTag::Interior => {
                    let m = f.other(cell).unwrap();
                    let zm = mesh.cells[m].center[2];
                    out.push(FluxTerm { var: Var::Unknown(cell), vidx: ia + 1, coef: s });
                    out.push(FluxTerm { var: Var::Unknown(cell), vidx: ia, coef: -s });
                    out.push(FluxTerm { var: Var::Unknown(m), vidx: ia + 2, coef: s });
                    out.push(FluxTerm { var: Var::Const, vidx: ia + 1, coef: s * rg * zk });
                    out.push(FluxTerm { var: Var::Const, vidx: ia, coef: -s * rg * zk });
                    out.push(FluxTerm { var: Var::Const, vidx: ia + 2, coef: s * rg * zm });
                }
                BoundaryTag::Dirichlet => {
                    out.push(FluxTerm { var: Var::Unknown(cell), vidx: ia, coef: -s });
                    out.push(FluxTerm { var: Var::Const, vidx: ia, coef: s * (p.p_d + rg * p.z_d - rg * zk) });
                }
                BoundaryTag::Neumann => {
                    let u = mesh.neumann_index[fb].unwrap();
                    out.push(FluxTerm { var: Var::Unknown(u), vidx: ia, coef: s });
                    out.push(FluxTerm { var: Var::Unknown(cell), vidx: ia, coef: -s });
                    out.push(FluxTerm { var: Var::Const, vidx: ia, coef: s * rg * (f.center[2] - zk) });
                }
            }
        }
    }

    /// Flux `F_{K,σ}` as linear terms in `v̂`: `μ_K F_K − μ_L F_L` on interior faces.
    pub fn flux_terms(&self, face: usize, from: usize) -> Vec<FluxTerm> {
        let f = &self.mesh.faces[face];
        let mut out = Vec::new();
        match f.other(from) {
            Some(l) => {
                self.one_sided(from, face, 0.5, &mut out);
                let mut other = Vec::new();
                self.one_sided(l, face, 0.5, &mut other);
                out.extend(other.into_iter().map(|t| FluxTerm { coef: -t.coef, ..t }));
            }
            None => self.one_sided(from, face, 1.0, &mut out),
        }
        out
    }

    /// Numerical value of `F_{K,σ}` for a pressure vector.
    pub fn face_flux(&self, vhat: &[f64], face: usize, from: usize, p: &[f64]) -> f64 {
        let eval = |terms: &[FluxTerm]| -> f64 {
            terms
                .iter()
                .map(|t| {
                    let x = match t.var {
                        Var::Unknown(j) => p[j],
                        Var::Const => 1.0,
                    };
                    t.coef * vhat[t.vidx] * x
                })
                .sum()
        };
        let f = &self.mesh.faces[face];
        match f.other(from) {
            Some(l) => {
                let mut tk = Vec::new();
                let mut tl = Vec::new();
                self.one_sided(from, face, 0.5, &mut tk);
                self.one_sided(l, face, 0.5, &mut tl);
                eval(&tk) - eval(&tl)
            }
            None => {
                let mut t = Vec::new();
                self.one_sided(from, face, 1.0, &mut t);
                eval(&t)
            }
        }
    }

    fn build_template(&mut self) -> Result<()> {
        let mesh = &self.mesh;
        let nc = mesh.n_cells();
        let n = mesh.n_unknowns();
        let mut rows: Vec<(usize, FluxTerm)> = Vec::new();
        for (fid, f) in mesh.faces.iter().enumerate() {
            let k = f.cells[0];
            let terms = self.flux_terms(fid, k);
            match f.tag {
                BoundaryTag::Interior => {
                    let l = f.cells[1];
                    for t in &terms {
                        rows.push((k, *t));
                        rows.push((l, FluxTerm { coef: -t.coef, ..*t }));
                    }
                }
                BoundaryTag::Dirichlet => rows.extend(terms.iter().map(|t| (k, *t))),
                BoundaryTag::Neumann => {
                    let u = mesh.neumann_index[fid].unwrap();
                    for t in &terms {
                        rows.push((k, *t));
                        rows.push((u, FluxTerm { coef: -t.coef, ..*t }));
                    }
                }
            }
        }
        let mut positions: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        for (r, t) in &rows {
            if let Var::Unknown(j) = t.var {
                positions.push((*r, j));
            }
        }
        let pattern = Csr::pattern(n, n, &positions);
        let mut a_terms = Vec::new();
        let mut b_terms = Vec::new();
        for (r, t) in rows {
            match t.var {
                Var::Unknown(j) => a_terms.push((pattern.slot(r, j).unwrap(), t.vidx, t.coef)),
                Var::Const => b_terms.push((r, t.vidx, -t.coef)),
            }
        }
        let mut l_terms = Vec::new();
        let mut c_terms = Vec::new();
        for of in &mesh.gamma_int {
            for t in self.flux_terms(of.face, of.inside) {
                match t.var {
                    Var::Unknown(j) => l_terms.push((j, t.vidx, t.coef)),
                    Var::Const => c_terms.push((t.vidx, t.coef)),
                }
            }
        }
        let p = &self.props;
        let mut wells = Vec::new();
        for &k in &mesh.perforations {
            let c = &mesh.cells[k];
            let wi_unit = well_index(1.0, 1.0, c.sizes[0], c.sizes[1], c.sizes[2], p.r_w, p.skin)?;
            let head = p.p_bh - p.rho * p.g * (p.z_bh - c.center[2]);
            wells.push(WellCell { cell: k, zone: c.zone, wi_unit, head });
        }
        let mut mass = vec![0.0; n];
        for (k, c) in mesh.cells.iter().enumerate().take(nc) {
            mass[k] = c.volume * p.phi * p.c_t;
        }
        self.pattern = pattern;
        self.a_terms = a_terms;
        self.b_terms = b_terms;
        self.l_terms = l_terms;
        self.c_terms = c_terms;
        self.wells = wells;
        self.mass = mass;
        Ok(())
    }

    /// Coefficient vector `v̂(ξ)` in the canonical ordering.
    pub fn coefficient_vector(&self, xi: &ParameterPoint) -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(self.vhat_len);
        for k in 0..self.mesh.n_cells() {
            v.extend(CellPatch::gather(&self.mesh, k).coefficients(xi, self.props.mu)?);
        }
        Ok(v)
    }

    /// Local recipe for entry `j` of `v̂`.
    pub fn coefficient_recipe(&self, j: usize) -> CoefficientRecipe {
        let k = self.block_offset.partition_point(|&o| o <= j) - 1;
        CoefficientRecipe { patch: CellPatch::gather(&self.mesh, k), offset: j - self.block_offset[k] }
    }

    /// Cell and `(σ, σ', slot)` of an entry of `v̂`.
    pub fn coefficient_location(&self, j: usize) -> (usize, usize, usize, usize) {
        let k = self.block_offset.partition_point(|&o| o <= j) - 1;
        let nf = self.mesh.cells[k].faces.len();
        let local = j - self.block_offset[k];
        (k, local / (3 * nf), (local / 3) % nf, local % 3)
    }

    /// Values of the flux part of `A` on the common pattern.
    pub fn flux_values(&self, vhat: &[f64]) -> Vec<f64> {
        let mut vals = vec![0.0; self.pattern.nnz()];
        for &(slot, vidx, coef) in &self.a_terms {
            vals[slot] += coef * vhat[vidx];
        }
        vals
    }

    /// Flux part of `b` (Dirichlet data and gravity).
    pub fn flux_rhs(&self, vhat: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.n()];
        for &(r, vidx, coef) in &self.b_terms {
            b[r] += coef * vhat[vidx];
        }
        b
    }

    pub fn qoi(&self, vhat: &[f64]) -> (Vec<f64>, f64) {
        let mut l = vec![0.0; self.n()];
        for &(j, vidx, coef) in &self.l_terms {
            l[j] += coef * vhat[vidx];
        }
        let c = self.c_terms.iter().map(|&(vidx, coef)| coef * vhat[vidx]).sum();
        (l, c)
    }

    /// Well contributions to `A`'s diagonal slots and to `b` for mobilities per zone.
    pub fn well_values(&self, mobility: impl Fn(u8) -> f64) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
        let mut diag = Vec::new();
        let mut rhs = Vec::new();
        for w in &self.wells {
            let wi = w.wi_unit * mobility(w.zone);
            diag.push((self.pattern.slot(w.cell, w.cell).unwrap(), wi));
            rhs.push((w.cell, wi * w.head));
        }
        (diag, rhs)
    }

    /// Assembles the operator from a coefficient vector and zone mobilities.
    pub fn assemble_from(&self, vhat: &[f64], mobility: impl Fn(u8) -> f64) -> HfOperator {
        let mut vals = self.flux_values(vhat);
        let mut b = self.flux_rhs(vhat);
        let (diag, rhs) = self.well_values(mobility);
        for (slot, v) in diag {
            vals[slot] += v;
        }
        for (r, v) in rhs {
            b[r] += v;
        }
        let (l, c) = self.qoi(vhat);
        HfOperator { a: self.pattern.with_values(vals), m: self.mass.clone(), b, l, c }
    }

    pub fn assemble(&self, xi: &ParameterPoint) -> Result<HfOperator> {
        let vhat = self.coefficient_vector(xi)?;
        let mu = self.props.mu;
        Ok(self.assemble_from(&vhat, |z| xi.kappa(z) / mu))
    }
}
