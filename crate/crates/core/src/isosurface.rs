//! Isosurfaces of a spline by marching tetrahedra, and mesh export.
//!
//! The spline is sampled on an `R^3` grid spanning the closed domain. Each
//! sampling cell is cut into six tetrahedra around its main diagonal; the cut
//! is the same in every cell, so neighbouring cells share their face
//! triangulations and a mesh vertex is identified by the grid edge it lies on.

use std::collections::HashMap;
use std::io::Write;

use crate::qi::{grid_points, QiSpline};
use crate::{par, Error, Point, Result};

/// The six tetrahedra of a cell; corners are numbered by bits `x = 1, y = 2, z = 4`.
const CELL_TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Bisection stops once `|s(v) - iso|` drops below this.
pub const REFINE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy)]
pub struct IsoRequest<'a> {
    pub iso: f64,
    /// Sample points per axis, endpoints included.
    pub res: usize,
    /// Move vertices onto the spline's level set by bisection along their edge.
    pub refine: bool,
    /// Reference function (world coordinates); vertices get `|f - s|` as scalar.
    pub reference: Option<&'a (dyn Fn(Point) -> f64 + Sync)>,
}

impl<'a> IsoRequest<'a> {
    pub fn new(iso: f64, res: usize) -> Self {
        Self { iso, res, refine: false, reference: None }
    }

    pub fn refined(mut self) -> Self {
        self.refine = true;
        self
    }

    pub fn with_reference(mut self, f: &'a (dyn Fn(Point) -> f64 + Sync)) -> Self {
        self.reference = Some(f);
        self
    }
}

impl std::fmt::Debug for IsoRequest<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IsoRequest")
            .field("iso", &self.iso)
            .field("res", &self.res)
            .field("refine", &self.refine)
            .field("reference", &self.reference.is_some())
            .finish()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[u32; 3]>,
    pub scalars: Option<Vec<f64>>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn map_vertices(&mut self, f: impl Fn(Point) -> Point) {
        for v in &mut self.vertices {
            *v = f(*v);
        }
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        let u = sub(b, a);
        let v = sub(c, a);
        0.5 * norm(cross(u, v))
    }

    /// Largest number of triangles sharing an (undirected) edge.
    pub fn max_edge_valence(&self) -> usize {
        let mut count: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        count.values().copied().max().unwrap_or(0)
    }

    /// Whether every edge shared by two triangles is traversed in opposite directions.
    pub fn consistently_oriented(&self) -> bool {
        let mut seen: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                *seen.entry((t[e], t[(e + 1) % 3])).or_default() += 1;
            }
        }
        seen.values().all(|&c| c == 1)
    }

    /// `max |s(v) - iso|` over the vertices (world coordinates).
    pub fn max_residual(&self, s: &QiSpline, iso: f64) -> Result<f64> {
        let r: Result<Vec<f64>> = par::map_slice(&self.vertices, |&v| Ok((s.eval_world(v)? - iso).abs()))
            .into_iter()
            .collect();
        Ok(r?.into_iter().fold(0.0, f64::max))
    }
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: Point, b: Point) -> Point {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

struct Sampling<'s> {
    n: usize,
    values: Vec<f64>,
    pts: crate::qi::GridPoints,
    iso: f64,
    spline: &'s QiSpline,
}

type EdgeKey = (usize, usize);

impl Sampling<'_> {
    fn id(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    /// Linear crossing on the edge `(a, b)` whose endpoints straddle `iso`.
    fn crossing(&self, (a, b): EdgeKey) -> (Point, f64) {
        let (va, vb) = (self.values[a], self.values[b]);
        let t = if vb == va { 0.5 } else { ((self.iso - va) / (vb - va)).clamp(0.0, 1.0) };
        let (pa, pb) = (self.pts.point(a), self.pts.point(b));
        (std::array::from_fn(|c| pa[c] + t * (pb[c] - pa[c])), t)
    }

    /// Bisection for `s = iso` on the segment of edge `(a, b)`.
    fn refine(&self, (a, b): EdgeKey) -> Result<Point> {
        let (pa, pb) = (self.pts.point(a), self.pts.point(b));
        let at = |t: f64| -> Point { std::array::from_fn(|c| pa[c] + t * (pb[c] - pa[c])) };
        let above_a = self.values[a] > self.iso;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let (p0, mut t) = self.crossing((a, b));
        let mut r = self.spline.eval(p0)? - self.iso;
        for _ in 0..80 {
            if r.abs() <= REFINE_TOLERANCE {
                break;
            }
            if (r > 0.0) == above_a {
                lo = t;
            } else {
                hi = t;
            }
            t = 0.5 * (lo + hi);
            r = self.spline.eval(at(t))? - self.iso;
        }
        Ok(at(t))
    }

    /// Triangles of one z-slab of cells as edge-key triples.
    fn slab(&self, k: usize) -> Vec<[EdgeKey; 3]> {
        let n = self.n;
        let mut out = Vec::new();
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let corner: [usize; 8] = std::array::from_fn(|c| {
                    self.id(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))
                });
                let above: [bool; 8] = std::array::from_fn(|c| self.values[corner[c]] > self.iso);
                if above.iter().all(|&a| a) || above.iter().all(|&a| !a) {
                    continue;
                }
                for tet in CELL_TETS {
                    let v = tet.map(|c| corner[c]);
                    let up = tet.map(|c| above[c]);
                    self.march(v, up, &mut out);
                }
            }
        }
        out
    }

    fn march(&self, v: [usize; 4], up: [bool; 4], out: &mut Vec<[EdgeKey; 3]>) {
        let key = |a: usize, b: usize| -> EdgeKey { (v[a].min(v[b]), v[a].max(v[b])) };
        let ins: Vec<usize> = (0..4).filter(|&c| up[c]).collect();
        let outs: Vec<usize> = (0..4).filter(|&c| !up[c]).collect();
        let tris: Vec<[EdgeKey; 3]> = match ins.len() {
            1 => vec![[key(ins[0], outs[0]), key(ins[0], outs[1]), key(ins[0], outs[2])]],
            3 => vec![[key(outs[0], ins[0]), key(outs[0], ins[1]), key(outs[0], ins[2])]],
            2 => {
                let (a, b, c, d) = (ins[0], ins[1], outs[0], outs[1]);
                vec![[key(a, c), key(a, d), key(b, d)], [key(a, c), key(b, d), key(b, c)]]
            }
            _ => return,
        };
        // orient each triangle so its normal points towards larger values
        let centroid = |cs: &[usize]| -> Point {
            let mut p = [0.0; 3];
            for &c in cs {
                let q = self.pts.point(v[c]);
                for a in 0..3 {
                    p[a] += q[a] / cs.len() as f64;
                }
            }
            p
        };
        let uphill = sub(centroid(&ins), centroid(&outs));
        for t in tris {
            let p = t.map(|e| self.crossing(e).0);
            let nrm = cross(sub(p[1], p[0]), sub(p[2], p[0]));
            out.push(if dot(nrm, uphill) < 0.0 { [t[0], t[2], t[1]] } else { t });
        }
    }
}

/// Extract the `iso` level set of `s`; the mesh is in world coordinates.
pub fn extract(s: &QiSpline, req: &IsoRequest) -> Result<TriangleMesh> {
    if req.res < 2 {
        return Err(Error::InvalidGrid(format!("isosurface resolution {} must be at least 2", req.res)));
    }
    if !req.iso.is_finite() {
        return Err(Error::Format(format!("isovalue {} is not finite", req.iso)));
    }
    let n = req.res;
    let prepared = s.prepared_for(n * n * n)?;
    let values = prepared.eval_grid(n)?;
    let smp = Sampling { n, values, pts: grid_points(s.grid(), n), iso: req.iso, spline: &prepared };

    let slabs = par::map_range(n - 1, |k| smp.slab(k));
    let mut index: HashMap<EdgeKey, u32> = HashMap::new();
    let mut edges: Vec<EdgeKey> = Vec::new();
    let mut tris: Vec<[u32; 3]> = Vec::new();
    for slab in slabs {
        for t in slab {
            let ids = t.map(|e| {
                *index.entry(e).or_insert_with(|| {
                    edges.push(e);
                    (edges.len() - 1) as u32
                })
            });
            tris.push(ids);
        }
    }

    let local: Vec<Point> = if req.refine {
        par::map_slice(&edges, |&e| smp.refine(e)).into_iter().collect::<Result<_>>()?
    } else {
        edges.iter().map(|&e| smp.crossing(e).0).collect()
    };
    let o = s.origin();
    let vertices: Vec<Point> = local.iter().map(|p| std::array::from_fn(|a| p[a] + o[a])).collect();

    // drop slivers created where the level set passes through sample points
    let cell = s.grid().extent().iter().fold(0.0f64, |m, &e| m.max(e)) / (n - 1) as f64;
    let min_area = 1e-12 * cell * cell;
    let mut mesh = TriangleMesh { vertices, triangles: tris, scalars: None };
    let keep: Vec<bool> = (0..mesh.triangles.len())
        .map(|t| {
            let [a, b, c] = mesh.triangles[t];
            a != b && b != c && a != c && mesh.area(t) > min_area
        })
        .collect();
    let mut it = keep.iter();
    mesh.triangles.retain(|_| *it.next().expect("one flag per triangle"));
    compact(&mut mesh);

    if let Some(f) = req.reference {
        let err: Result<Vec<f64>> = par::map_slice(&mesh.vertices, |&v| Ok((f(v) - s.eval_world(v)?).abs()))
            .into_iter()
            .collect();
        mesh.scalars = Some(err?);
    }
    Ok(mesh)
}

/// Remove vertices no triangle uses, keeping the order of the rest.
fn compact(mesh: &mut TriangleMesh) {
    let mut used = vec![false; mesh.vertices.len()];
    for t in &mesh.triangles {
        for &i in t {
            used[i as usize] = true;
        }
    }
    let mut remap = vec![u32::MAX; used.len()];
    let mut next = 0u32;
    for (i, u) in used.iter().enumerate() {
        if *u {
            remap[i] = next;
            next += 1;
        }
    }
    let mut i = 0;
    mesh.vertices.retain(|_| {
        i += 1;
        used[i - 1]
    });
    if let Some(s) = &mut mesh.scalars {
        let mut i = 0;
        s.retain(|_| {
            i += 1;
            used[i - 1]
        });
    }
    for t in &mut mesh.triangles {
        *t = t.map(|i| remap[i as usize]);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(Self::Obj),
            "ply" => Ok(Self::Ply),
            _ => Err(Error::Format(format!("unknown mesh format `{s}` (expected obj or ply)"))),
        }
    }

    /// Guess from a file extension, defaulting to OBJ.
    pub fn from_path(p: &std::path::Path) -> Self {
        match p.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => Self::Ply,
            _ => Self::Obj,
        }
    }
}

/// Nine significant digits, printed in the shortest form that reads back the same.
pub fn format_coord(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    let s = format!("{rounded}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub fn write_obj(mesh: &TriangleMesh, w: &mut impl Write) -> Result<()> {
    let mut out = String::new();
    for v in &mesh.vertices {
        out.push_str(&format!("v {} {} {}\n", format_coord(v[0]), format_coord(v[1]), format_coord(v[2])));
    }
    for t in &mesh.triangles {
        out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Binary little-endian PLY; the scalar channel, if any, is a per-vertex `value` property.
pub fn write_ply(mesh: &TriangleMesh, w: &mut impl Write) -> Result<()> {
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
        mesh.vertices.len()
    );
    if mesh.scalars.is_some() {
        header.push_str("property double value\n");
    }
    header.push_str(&format!(
        "element face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        mesh.triangles.len()
    ));
    let mut buf = header.into_bytes();
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in v {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(s) = &mesh.scalars {
            buf.extend_from_slice(&s[i].to_le_bytes());
        }
    }
    for t in &mesh.triangles {
        buf.push(3);
        for i in t {
            buf.extend_from_slice(&i.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_mesh(mesh: &TriangleMesh, format: MeshFormat, w: &mut impl Write) -> Result<()> {
    match format {
        MeshFormat::Obj => write_obj(mesh, w),
        MeshFormat::Ply => write_ply(mesh, w),
    }
}

/// Read the `v` and `f` records of an OBJ file (polygons are fanned into triangles).
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut mesh = TriangleMesh::default();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let bad = |what: &str| Error::Format(format!("OBJ line {}: {what}", ln + 1));
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it.take(3).map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("bad vertex"))?;
                if c.len() != 3 {
                    return Err(bad("vertex needs three coordinates"));
                }
                mesh.vertices.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|tok| {
                        let i: i64 = tok.split('/').next().unwrap_or("").parse().map_err(|_| bad("bad face index"))?;
                        let n = mesh.vertices.len() as i64;
                        let i = if i < 0 { n + i } else { i - 1 };
                        if i < 0 || i >= n {
                            return Err(bad("face index out of range"));
                        }
                        Ok(i as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad("face needs three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}
