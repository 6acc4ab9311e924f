//! Structured hexahedral meshes with a two-zone layout, boundary tags, a well and the QOI surface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    pub fn new(lo: Vec3, hi: Vec3) -> Self {
        Aabb { lo, hi }
    }

    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        (0..3).all(|i| p[i] >= self.lo[i] - tol && p[i] <= self.hi[i] + tol)
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| (self.hi[i] - self.lo[i]).max(0.0)).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..3).map(|i| (self.hi[i] - self.lo[i]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn intersection(&self, other: &Aabb) -> Aabb {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for i in 0..3 {
            lo[i] = self.lo[i].max(other.lo[i]);
            hi[i] = self.hi[i].min(other.hi[i]);
        }
        Aabb { lo, hi }
    }

    /// True if `p` lies on one of the six bounding planes and inside the closed box.
    pub fn on_surface(&self, p: Vec3, tol: f64) -> bool {
        self.contains(p, tol) && (0..3).any(|i| (p[i] - self.lo[i]).abs() <= tol || (p[i] - self.hi[i]).abs() <= tol)
    }
}

/// One of the six planes bounding the domain box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Plane {
    pub const ALL: [Plane; 6] = [Plane::XMin, Plane::XMax, Plane::YMin, Plane::YMax, Plane::ZMin, Plane::ZMax];

    pub fn axis(self) -> usize {
        match self {
            Plane::XMin | Plane::XMax => 0,
            Plane::YMin | Plane::YMax => 1,
            Plane::ZMin | Plane::ZMax => 2,
        }
    }

    pub fn is_max(self) -> bool {
        matches!(self, Plane::XMax | Plane::YMax | Plane::ZMax)
    }
}

/// Zone 1 (reservoir) is the set of cells whose centers lie in `reservoir`; the rest is zone 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub reservoir: Aabb,
}

impl ZoneSpec {
    /// Zone 1 as a horizontal slab `z ∈ [z_lo, z_hi]`.
    pub fn slab(z_lo: f64, z_hi: f64) -> Self {
        ZoneSpec {
            reservoir: Aabb::new([f64::NEG_INFINITY, f64::NEG_INFINITY, z_lo], [f64::INFINITY, f64::INFINITY, z_hi]),
        }
    }

    pub fn whole() -> Self {
        ZoneSpec { reservoir: Aabb::new([f64::NEG_INFINITY; 3], [f64::INFINITY; 3]) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryTag {
    Interior,
    Dirichlet,
    Neumann,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub center: Vec3,
    pub volume: f64,
    /// 1 = reservoir, 2 = cap rock.
    pub zone: u8,
    pub faces: Vec<usize>,
    /// Edge lengths along x, y, z.
    pub sizes: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub area: f64,
    /// Unit normal pointing out of `cells[0]`.
    pub normal: Vec3,
    pub center: Vec3,
    pub cells: Vec<usize>,
    pub plane: Option<Plane>,
    pub tag: BoundaryTag,
}

impl Face {
    pub fn is_interior(&self) -> bool {
        self.cells.len() == 2
    }

    pub fn other(&self, k: usize) -> Option<usize> {
        if self.cells.len() == 2 {
            Some(if self.cells[0] == k { self.cells[1] } else { self.cells[0] })
        } else {
            None
        }
    }
}

/// A QOI face with the cell on the inner side of the storage box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrientedFace {
    pub face: usize,
    pub inside: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub cells: Vec<Cell>,
    pub faces: Vec<Face>,
    pub extents: Aabb,
    pub dims: [usize; 3],
    /// Unknown index of each Neumann face (`N_c + k`), `None` otherwise.
    pub neumann_index: Vec<Option<usize>>,
    pub n_neumann: usize,
    pub perforations: Vec<usize>,
    pub gamma_int: Vec<OrientedFace>,
}

impl Mesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Number of unknowns `N_c + N_b`.
    pub fn n_unknowns(&self) -> usize {
        self.cells.len() + self.n_neumann
    }

    pub fn diameter(&self) -> f64 {
        self.extents.diameter()
    }

    pub fn geom_tol(&self) -> f64 {
        1e-9 * self.diameter()
    }

    /// Outward unit normal of `face` seen from `cell`.
    pub fn normal_from(&self, face: usize, cell: usize) -> Vec3 {
        let f = &self.faces[face];
        if f.cells[0] == cell {
            f.normal
        } else {
            scale(f.normal, -1.0)
        }
    }

    /// Orthogonal distance from the center of `cell` to the plane of `face`.
    pub fn distance(&self, cell: usize, face: usize) -> f64 {
        let n = self.faces[face].normal;
        dot3(sub(self.faces[face].center, self.cells[cell].center), n).abs()
    }

    /// Number of Dirichlet faces.
    pub fn n_dirichlet(&self) -> usize {
        self.faces.iter().filter(|f| f.tag == BoundaryTag::Dirichlet).count()
    }
}

/// Generates an `nx × ny × nz` Cartesian mesh over `extents`.
pub fn build_cartesian_mesh(nx: usize, ny: usize, nz: usize, extents: Aabb, zone: &ZoneSpec) -> Result<Mesh> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::Config("mesh dimensions must be at least 1".into()));
    }
    for i in 0..3 {
        if !(extents.hi[i] > extents.lo[i]) || !extents.lo[i].is_finite() || !extents.hi[i].is_finite() {
            return Err(Error::Config(format!("degenerate mesh extent along axis {i}")));
        }
    }
    let overlap = zone.reservoir.intersection(&extents);
    if !(overlap.volume() > 0.0) {
        return Err(Error::Config("zone-1 box does not intersect the domain with positive volume".into()));
    }
    let n = [nx, ny, nz];
    let h: Vec3 = std::array::from_fn(|i| (extents.hi[i] - extents.lo[i]) / n[i] as f64);
    let coord = |axis: usize, k: usize| -> f64 {
        if k == n[axis] {
            extents.hi[axis]
        } else {
            extents.lo[axis] + k as f64 * h[axis]
        }
    };
    let cid = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut cells = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let lo = [coord(0, i), coord(1, j), coord(2, k)];
                let hi = [coord(0, i + 1), coord(1, j + 1), coord(2, k + 1)];
                let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
                let sizes = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
                let zone_id = if zone.reservoir.contains(center, 0.0) { 1 } else { 2 };
                cells.push(Cell { center, volume: sizes[0] * sizes[1] * sizes[2], zone: zone_id, faces: Vec::new(), sizes });
            }
        }
    }
    let mut faces: Vec<Face> = Vec::new();
    for axis in 0..3 {
        let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
        for c2 in 0..n[a2] {
            for c1 in 0..n[a1] {
                for c0 in 0..=n[axis] {
                    let mut idx_lo = [0usize; 3];
                    idx_lo[axis] = c0;
                    idx_lo[a1] = c1;
                    idx_lo[a2] = c2;
                    let mut center = [0.0; 3];
                    center[axis] = coord(axis, c0);
                    center[a1] = 0.5 * (coord(a1, c1) + coord(a1, c1 + 1));
                    center[a2] = 0.5 * (coord(a2, c2) + coord(a2, c2 + 1));
                    let area = (coord(a1, c1 + 1) - coord(a1, c1)) * (coord(a2, c2 + 1) - coord(a2, c2));
                    let mut normal = [0.0; 3];
                    let (cells_of, plane) = if c0 == 0 {
                        normal[axis] = -1.0;
                        let mut ix = idx_lo;
                        ix[axis] = 0;
                        (vec![cid(ix[0], ix[1], ix[2])], Some(Plane::ALL[2 * axis]))
                    } else if c0 == n[axis] {
                        normal[axis] = 1.0;
                        let mut ix = idx_lo;
                        ix[axis] = c0 - 1;
                        (vec![cid(ix[0], ix[1], ix[2])], Some(Plane::ALL[2 * axis + 1]))
                    } else {
                        normal[axis] = 1.0;
                        let mut left = idx_lo;
                        left[axis] = c0 - 1;
                        let right = idx_lo;
                        (vec![cid(left[0], left[1], left[2]), cid(right[0], right[1], right[2])], None)
                    };
                    let tag = if plane.is_some() { BoundaryTag::Neumann } else { BoundaryTag::Interior };
                    faces.push(Face { area, normal, center, cells: cells_of, plane, tag });
                }
            }
        }
    }
    for (fid, f) in faces.iter().enumerate() {
        for &c in &f.cells {
            cells[c].faces.push(fid);
        }
    }
    let nf = faces.len();
    Ok(Mesh {
        cells,
        faces,
        extents,
        dims: n,
        neumann_index: vec![None; nf],
        n_neumann: 0,
        perforations: Vec::new(),
        gamma_int: Vec::new(),
    })
}

/// Tags boundary faces on the listed planes as Dirichlet and the rest as Neumann.
pub fn tag_boundaries(mut mesh: Mesh, dirichlet: &[Plane]) -> Result<Mesh> {
    if dirichlet.is_empty() {
        return Err(Error::Config("at least one Dirichlet plane is required".into()));
    }
    let nc = mesh.n_cells();
    let mut k = 0;
    for (fid, f) in mesh.faces.iter_mut().enumerate() {
        mesh.neumann_index[fid] = None;
        if let Some(p) = f.plane {
            if dirichlet.contains(&p) {
                f.tag = BoundaryTag::Dirichlet;
            } else {
                f.tag = BoundaryTag::Neumann;
                mesh.neumann_index[fid] = Some(nc + k);
                k += 1;
            }
        }
    }
    mesh.n_neumann = k;
    if mesh.n_dirichlet() == 0 {
        return Err(Error::Config("no Dirichlet face on the mesh".into()));
    }
    Ok(mesh)
}

/// Interior faces lying on the surface of `bx`, oriented outward from the box.
pub fn select_gamma_int(mesh: &Mesh, bx: &Aabb) -> Result<Vec<OrientedFace>> {
    let tol = mesh.geom_tol();
    for i in 0..3 {
        if !(bx.lo[i] > mesh.extents.lo[i] + tol && bx.hi[i] < mesh.extents.hi[i] - tol && bx.lo[i] < bx.hi[i]) {
            return Err(Error::Config("the QOI box must lie strictly inside the domain".into()));
        }
    }
    let mut out = Vec::new();
    for (fid, f) in mesh.faces.iter().enumerate() {
        if !f.is_interior() || !bx.on_surface(f.center, tol) {
            continue;
        }
        let (a, b) = (f.cells[0], f.cells[1]);
        let ina = bx.contains(mesh.cells[a].center, 0.0);
        let inb = bx.contains(mesh.cells[b].center, 0.0);
        let inside = match (ina, inb) {
            (true, false) => a,
            (false, true) => b,
            _ => continue,
        };
        out.push(OrientedFace { face: fid, inside });
    }
    if out.is_empty() {
        return Err(Error::Config("no interior face lies on the QOI box surface".into()));
    }
    Ok(out)
}

/// Cells whose centers lie in `well_box`.
pub fn select_perforations(mesh: &Mesh, well_box: &Aabb) -> Result<Vec<usize>> {
    let out: Vec<usize> = (0..mesh.n_cells()).filter(|&k| well_box.contains(mesh.cells[k].center, 0.0)).collect();
    if out.is_empty() {
        return Err(Error::Config("the well box contains no cell center".into()));
    }
    Ok(out)
}
