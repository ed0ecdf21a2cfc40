//! Uniform type-6 tetrahedral partition of a box.
//!
//! Each cube of the grid is cut by the six diagonal planes through its
//! center into 24 congruent tetrahedra. The tetrahedra are numbered
//! `4 * face + triangle`:
//!
//! * `face = 2 * axis + side`, where `side` is 0 for the face at the low end
//!   of `axis` and 1 for the high end;
//! * `triangle = 2 * w + sign`, where the face square is split by its two
//!   diagonals; `w = 0` picks the triangle extending along axis
//!   `(axis + 1) % 3`, `w = 1` along `(axis + 2) % 3`, and `sign` selects
//!   the low (0) or high (1) half along that axis.
//!
//! Vertex order inside every tetrahedron is `[cube center, face center,
//! corner, corner]`, the two corners differing only in the remaining axis
//! (low corner first).
//!
//! Internally all geometry is expressed in grid units (`x / h`).

use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};

use crate::{Error, MultiIndex, Point, Result};

/// Number of tetrahedra per cube.
pub const TETS_PER_CUBE: usize = 24;

/// Tolerance on barycentric coordinates when deciding containment.
pub const CONTAINMENT_EPS: f64 = 1e-12;

/// Box `[0, m1 h] x [0, m2 h] x [0, m3 h]` split into `m1 m2 m3` cubes of side `h`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DomainGrid {
    m: [usize; 3],
    h: f64,
}

impl DomainGrid {
    pub fn new(m: [usize; 3], h: f64) -> Result<Self> {
        if m.iter().any(|&v| v == 0) {
            return Err(Error::InvalidGrid(format!("cube counts must be positive, got {m:?}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidGrid(format!("cube side must be positive, got {h}")));
        }
        Ok(Self { m, h })
    }

    /// Cubic grid with `m` cubes per axis.
    pub fn uniform(m: usize, h: f64) -> Result<Self> {
        Self::new([m; 3], h)
    }

    pub fn m(&self) -> [usize; 3] {
        self.m
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Upper corner of the domain.
    pub fn extent(&self) -> Point {
        [
            self.m[0] as f64 * self.h,
            self.m[1] as f64 * self.h,
            self.m[2] as f64 * self.h,
        ]
    }

    pub fn cube_count(&self) -> usize {
        self.m.iter().product()
    }

    /// The quasi-interpolant's boundary functionals reach 11 cubes deep.
    pub fn require_qi(&self) -> Result<()> {
        if self.m.iter().any(|&v| v < 11) {
            Err(Error::GridTooSmall(self.m))
        } else {
            Ok(())
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        let e = self.extent();
        (0..3).all(|a| p[a] >= 0.0 && p[a] <= e[a])
    }

    pub fn to_grid_units(&self, p: Point) -> Point {
        [p[0] / self.h, p[1] / self.h, p[2] / self.h]
    }

    pub fn to_physical(&self, q: Point) -> Point {
        [q[0] * self.h, q[1] * self.h, q[2] * self.h]
    }

    fn check_cube(&self, cube: MultiIndex) -> Result<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            if cube[a] < 0 || cube[a] as usize >= self.m[a] {
                return Err(Error::CubeOutOfRange { cube, dims: self.m });
            }
            out[a] = cube[a] as usize;
        }
        Ok(out)
    }
}

/// A tetrahedron of the partition: cube coordinates plus local id in `0..24`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TetraRef {
    pub cube: [usize; 3],
    pub tet: u8,
}

/// Barycentric coordinates with respect to a tetrahedron's vertices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Barycentric4(pub [f64; 4]);

impl Barycentric4 {
    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Tetrahedron given by its four vertices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tetrahedron {
    pub vertices: [Point; 4],
}

impl Tetrahedron {
    pub fn new(vertices: [Point; 4]) -> Self {
        Self { vertices }
    }

    fn edge_matrix(&self) -> Matrix3<f64> {
        let v = &self.vertices;
        let col = |i: usize| {
            Vector3::new(v[i][0] - v[0][0], v[i][1] - v[0][1], v[i][2] - v[0][2])
        };
        Matrix3::from_columns(&[col(1), col(2), col(3)])
    }

    pub fn signed_volume(&self) -> f64 {
        self.edge_matrix().determinant() / 6.0
    }

    pub fn volume(&self) -> f64 {
        self.signed_volume().abs()
    }

    fn is_degenerate(&self) -> bool {
        let diam = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| dist(self.vertices[i], self.vertices[j]))
            .fold(0.0, f64::max);
        diam == 0.0 || self.volume() <= 1e-12 * diam.powi(3)
    }

    pub fn barycentric(&self, p: Point) -> Result<Barycentric4> {
        let inv = self
            .edge_matrix()
            .try_inverse()
            .ok_or(Error::DegenerateTetrahedron)?;
        let v0 = self.vertices[0];
        let mu = inv * Vector3::new(p[0] - v0[0], p[1] - v0[1], p[2] - v0[2]);
        Ok(Barycentric4([1.0 - mu[0] - mu[1] - mu[2], mu[0], mu[1], mu[2]]))
    }

    pub fn point_at(&self, b: &Barycentric4) -> Point {
        let mut p = [0.0; 3];
        for (w, v) in b.0.iter().zip(&self.vertices) {
            for a in 0..3 {
                p[a] += w * v[a];
            }
        }
        p
    }

    pub fn centroid(&self) -> Point {
        self.point_at(&Barycentric4([0.25; 4]))
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Affine barycentric map of one reference tetrahedron: `lambda = A q + b`.
#[derive(Clone, Copy, Debug)]
struct BaryMap {
    rows: [[f64; 4]; 4],
}

impl BaryMap {
    #[inline]
    fn apply(&self, q: Point) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (o, r) in out.iter_mut().zip(&self.rows) {
            *o = r[0] * q[0] + r[1] * q[1] + r[2] * q[2] + r[3];
        }
        out
    }
}

struct Reference {
    tets: [Tetrahedron; TETS_PER_CUBE],
    maps: [BaryMap; TETS_PER_CUBE],
}

fn reference() -> &'static Reference {
    static REF: OnceLock<Reference> = OnceLock::new();
    REF.get_or_init(|| {
        let tets: [Tetrahedron; TETS_PER_CUBE] = std::array::from_fn(|id| build_reference(id as u8));
        let maps = std::array::from_fn(|id| {
            let t = &tets[id];
            let inv = t.edge_matrix().try_inverse().expect("reference tetrahedra are regular");
            let v0 = Vector3::from(t.vertices[0]);
            let off = -(inv * v0);
            let mut rows = [[0.0; 4]; 4];
            for r in 0..3 {
                rows[r + 1] = [inv[(r, 0)], inv[(r, 1)], inv[(r, 2)], off[r]];
            }
            for c in 0..4 {
                rows[0][c] = -(rows[1][c] + rows[2][c] + rows[3][c]);
            }
            rows[0][3] += 1.0;
            BaryMap { rows }
        });
        Reference { tets, maps }
    })
}

fn build_reference(id: u8) -> Tetrahedron {
    let face = (id / 4) as usize;
    let tri = (id % 4) as usize;
    let axis = face / 2;
    let side = (face % 2) as f64;
    let b = (axis + 1) % 3;
    let c = (axis + 2) % 3;
    let (dominant, other) = if tri / 2 == 0 { (b, c) } else { (c, b) };
    let sign = (tri % 2) as f64;

    let center = [0.5; 3];
    let mut face_center = [0.5; 3];
    face_center[axis] = side;
    let mut c0 = [0.0; 3];
    c0[axis] = side;
    c0[dominant] = sign;
    c0[other] = 0.0;
    let mut c1 = c0;
    c1[other] = 1.0;
    Tetrahedron::new([center, face_center, c0, c1])
}

/// The 24 tetrahedra of the unit cube `[0,1]³`, in canonical order.
pub fn reference_tetrahedra() -> &'static [Tetrahedron; TETS_PER_CUBE] {
    &reference().tets
}

/// Barycentric coordinates of a unit-cube local point w.r.t. reference tetrahedron `tet`.
#[inline]
pub fn local_barycentric(tet: u8, q: Point) -> [f64; 4] {
    reference().maps[tet as usize].apply(q)
}

/// Tetrahedron of the unit cube containing `q`, ties broken towards the smallest id.
pub fn locate_local(q: Point) -> (u8, [f64; 4]) {
    let d = [q[0] - 0.5, q[1] - 0.5, q[2] - 0.5];
    let ad = [d[0].abs(), d[1].abs(), d[2].abs()];
    let axis = if ad[0] >= ad[1] && ad[0] >= ad[2] {
        0
    } else if ad[1] >= ad[2] {
        1
    } else {
        2
    };
    let side = usize::from(d[axis] > 0.0);
    let b = (axis + 1) % 3;
    let c = (axis + 2) % 3;
    let (w, dom) = if ad[b] >= ad[c] { (0, b) } else { (1, c) };
    let sign = usize::from(d[dom] > 0.0);
    let guess = (4 * (2 * axis + side) + 2 * w + sign) as u8;
    let lam = local_barycentric(guess, q);
    if lam.iter().all(|&l| l > CONTAINMENT_EPS) {
        return (guess, lam);
    }
    for tet in 0..TETS_PER_CUBE as u8 {
        let lam = local_barycentric(tet, q);
        if lam.iter().all(|&l| l >= -CONTAINMENT_EPS) {
            return (tet, lam);
        }
    }
    // Only reachable for points outside the closed unit cube.
    (guess, lam)
}

/// The 24 tetrahedra of a grid cube in physical coordinates.
pub fn tetrahedra_of_cube(cube: MultiIndex, grid: &DomainGrid) -> Result<[Tetrahedron; TETS_PER_CUBE]> {
    let c = grid.check_cube(cube)?;
    let h = grid.h();
    let refs = reference_tetrahedra();
    Ok(std::array::from_fn(|t| {
        let mut v = refs[t].vertices;
        for p in v.iter_mut() {
            for a in 0..3 {
                p[a] = (p[a] + c[a] as f64) * h;
            }
        }
        Tetrahedron::new(v)
    }))
}

/// Grid-unit location: cube, tetrahedron and barycentric coordinates.
#[inline]
pub(crate) fn locate_grid_units(q: Point, m: [usize; 3]) -> Option<(TetraRef, [f64; 4])> {
    const SLACK: f64 = 1e-9;
    let mut cube = [0usize; 3];
    let mut local = [0.0; 3];
    for a in 0..3 {
        let x = q[a];
        let hi = m[a] as f64;
        if !(x >= -SLACK && x <= hi + SLACK) {
            return None;
        }
        let x = x.clamp(0.0, hi);
        let c = ((x.ceil() as i64) - 1).clamp(0, m[a] as i64 - 1) as usize;
        cube[a] = c;
        local[a] = x - c as f64;
    }
    let (tet, lam) = locate_local(local);
    Some((TetraRef { cube, tet }, lam))
}

/// Locate a physical point of the closed domain.
///
/// Points on shared faces go to the lexicographically smallest `(cube, tet)`
/// that contains them.
pub fn locate(p: Point, grid: &DomainGrid) -> Result<(TetraRef, Barycentric4)> {
    let q = grid.to_grid_units(p);
    locate_grid_units(q, grid.m())
        .map(|(r, l)| (r, Barycentric4(l)))
        .ok_or(Error::PointOutsideDomain(p))
}

/// Quartic domain-point multi-indices `(i, j, k, l)`, `i + j + k + l = 4`,
/// in descending lexicographic order (the first is `(4,0,0,0)`).
pub fn quartic_multi_indices() -> &'static [[u8; 4]; 35] {
    &crate::bernstein::QUARTIC
}

/// The 35 quartic domain points `(i v0 + j v1 + k v2 + l v3) / 4`.
pub fn domain_points(t: &Tetrahedron) -> Result<[Point; 35]> {
    if t.is_degenerate() {
        return Err(Error::DegenerateTetrahedron);
    }
    let idx = quartic_multi_indices();
    Ok(std::array::from_fn(|n| {
        let w = idx[n];
        t.point_at(&Barycentric4([
            w[0] as f64 / 4.0,
            w[1] as f64 / 4.0,
            w[2] as f64 / 4.0,
            w[3] as f64 / 4.0,
        ]))
    }))
}
