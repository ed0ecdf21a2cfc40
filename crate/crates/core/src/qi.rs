//! The quasi-interpolant `Qf = sum_alpha lambda_alpha(f) B_alpha`.
//!
//! Evaluation goes through the Bézier form: a point is located in its
//! tetrahedron once, and the patches of the (at most 53) translates that are
//! nonzero there are combined with the coefficients. Compiling stores the
//! combined patch of every tetrahedron, trading `6720` bytes per cube for a
//! single dot product per evaluation.

use std::borrow::Cow;
use std::io::{Read, Write};
use std::sync::OnceLock;

use crate::bernstein::{quartic_basis, quartic_linear_stage, QUARTIC_LEN};
use crate::boxspline::{self, check_order, derivative_of_patch, ANCHOR};
use crate::domain::{classify, ClassKey, DataPoints, IndexSet};
use crate::partition::{locate_grid_units, TETS_PER_CUBE};
use crate::{par, rational, stencils, DomainGrid, Error, MultiIndex, Point, Result};

/// Bytes held by a compiled patch per cube.
pub const BYTES_PER_CUBE: u64 = (TETS_PER_CUBE * QUARTIC_LEN * 8) as u64;

/// Memory allowed for an implicit compile.
pub const DEFAULT_COMPILE_BUDGET: u64 = 2 << 30;

/// Point count above which `eval_many` considers compiling first.
pub const COMPILE_MIN_POINTS: usize = 10_000;

/// Compiling costs about as much as evaluating this many points per cube directly.
pub const COMPILE_POINTS_PER_CUBE: usize = 24;

/// Samples `f(M_beta)` at every data point, x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleField {
    grid: DomainGrid,
    values: Vec<f64>,
}

impl SampleField {
    pub fn new(grid: DomainGrid, values: Vec<f64>) -> Result<Self> {
        let expected = DataPoints::new(&grid).len();
        if values.len() != expected {
            return Err(Error::IncompleteSamples { expected, got: values.len() });
        }
        Ok(Self { grid, values })
    }

    /// Sample `f` (physical coordinates of the grid) at every data point.
    pub fn from_fn(grid: DomainGrid, f: impl Fn(Point) -> f64 + Sync + Send) -> Self {
        let dp = DataPoints::new(&grid);
        let values = par::map_range(dp.len(), |o| f(dp.point(dp.index_of(o))));
        Self { grid, values }
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, beta: MultiIndex) -> Option<f64> {
        DataPoints::new(&self.grid).offset(beta).ok().map(|o| self.values[o])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Stencils with weights rounded once, for fast assembly.
struct FloatStencil {
    key: ClassKey,
    entries: Vec<(MultiIndex, f64)>,
}

fn float_stencils() -> Result<&'static [FloatStencil]> {
    static CACHE: OnceLock<Vec<FloatStencil>> = OnceLock::new();
    if let Some(c) = CACHE.get() {
        return Ok(c);
    }
    let lib = stencils::library()?;
    let v = lib
        .iter()
        .map(|s| FloatStencil {
            key: s.key,
            entries: s.entries.iter().map(|(b, w)| (*b, rational::to_f64(w))).collect(),
        })
        .collect();
    Ok(CACHE.get_or_init(|| v))
}

/// Combined patches for a box of cubes.
#[derive(Clone, Debug)]
pub struct CompiledPatches {
    lo: [usize; 3],
    dims: [usize; 3],
    patches: Vec<[f64; QUARTIC_LEN]>,
}

impl CompiledPatches {
    pub fn lo(&self) -> [usize; 3] {
        self.lo
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bytes(&self) -> u64 {
        self.patches.len() as u64 * (QUARTIC_LEN * 8) as u64
    }

    #[inline]
    fn slot(&self, cube: [usize; 3]) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for a in 0..3 {
            let r = cube[a].checked_sub(self.lo[a])?;
            if r >= self.dims[a] {
                return None;
            }
            idx += r * stride;
            stride *= self.dims[a];
        }
        Some(idx)
    }

    pub fn patch(&self, cube: [usize; 3], tet: u8) -> Option<&[f64; QUARTIC_LEN]> {
        self.slot(cube).map(|s| &self.patches[s * TETS_PER_CUBE + tet as usize])
    }
}

/// Coefficients of `Qf` over the enclosing index box of `A` (zero on excluded slots).
#[derive(Clone, Debug)]
pub struct QiSpline {
    grid: DomainGrid,
    coefs: Vec<f64>,
    origin: Point,
    tag: String,
    compiled: Option<CompiledPatches>,
}

impl QiSpline {
    /// Spline with given coefficients on the full index box, x fastest.
    pub fn from_coefficients(grid: DomainGrid, coefs: Vec<f64>) -> Result<Self> {
        let set = IndexSet::new(&grid);
        let expected: usize = set.box_dims().iter().product();
        if coefs.len() != expected {
            return Err(Error::SizeMismatch { expected, got: coefs.len() });
        }
        Ok(Self { grid, coefs, origin: [0.0; 3], tag: String::new(), compiled: None })
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    /// World position of the domain corner `(0, 0, 0)`.
    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn with_origin(mut self, origin: Point) -> Self {
        self.origin = origin;
        self
    }

    /// Free-form provenance label kept in saved files (e.g. a test function id).
    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    /// Coefficient `a_alpha` (0 outside `A`).
    pub fn coefficient(&self, alpha: MultiIndex) -> f64 {
        let set = IndexSet::new(&self.grid);
        if set.contains(alpha) {
            self.coefs[set.box_offset(alpha)]
        } else {
            0.0
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefs
    }

    pub fn is_compiled(&self) -> bool {
        self.compiled.as_ref().is_some_and(|c| c.dims == self.grid.m())
    }

    pub fn compiled(&self) -> Option<&CompiledPatches> {
        self.compiled.as_ref()
    }

    /// Combined patch `sum_alpha a_alpha (patch of B_alpha)` on one tetrahedron.
    pub fn patch(&self, cube: [usize; 3], tet: u8) -> [f64; QUARTIC_LEN] {
        if let Some(p) = self.compiled.as_ref().and_then(|c| c.patch(cube, tet)) {
            return *p;
        }
        self.assemble_patch(cube, tet)
    }

    fn assemble_patch(&self, cube: [usize; 3], tet: u8) -> [f64; QUARTIC_LEN] {
        let table = boxspline::table();
        let set = IndexSet::new(&self.grid);
        let mut out = [0.0; QUARTIC_LEN];
        for &o in table.nonzero_offsets(tet) {
            let alpha = [
                cube[0] as i64 + ANCHOR[0] - o[0],
                cube[1] as i64 + ANCHOR[1] - o[1],
                cube[2] as i64 + ANCHOR[2] - o[2],
            ];
            let a = self.coefs[set.box_offset(alpha)];
            if a == 0.0 {
                continue;
            }
            let p = table.patch(o, tet).expect("offset inside support");
            for (dst, c) in out.iter_mut().zip(p) {
                *dst += a * c;
            }
        }
        out
    }

    /// Direct evaluation: one location, then the nonzero translates.
    fn eval_direct_local(&self, q: Point) -> Option<f64> {
        let (r, lam) = locate_grid_units(q, self.grid.m())?;
        let table = boxspline::table();
        let set = IndexSet::new(&self.grid);
        let basis = quartic_basis(lam);
        let mut s = 0.0;
        for &o in table.nonzero_offsets(r.tet) {
            let alpha = [
                r.cube[0] as i64 + ANCHOR[0] - o[0],
                r.cube[1] as i64 + ANCHOR[1] - o[1],
                r.cube[2] as i64 + ANCHOR[2] - o[2],
            ];
            let a = self.coefs[set.box_offset(alpha)];
            if a != 0.0 {
                s += a * boxspline::dot(table.patch(o, r.tet).expect("offset inside support"), &basis);
            }
        }
        Some(s)
    }

    fn eval_local(&self, q: Point) -> Option<f64> {
        if let Some(c) = &self.compiled {
            let (r, lam) = locate_grid_units(q, self.grid.m())?;
            if let Some(p) = c.patch(r.cube, r.tet) {
                return Some(boxspline::dot(p, &quartic_basis(lam)));
            }
        }
        self.eval_direct_local(q)
    }

    /// `Qf(p)` for `p` in the closed domain (coordinates relative to the domain corner).
    pub fn eval(&self, p: Point) -> Result<f64> {
        self.eval_local(self.grid.to_grid_units(p)).ok_or(Error::PointOutsideDomain(p))
    }

    /// Always the uncompiled path; used to cross-check compiled patches.
    pub fn eval_direct(&self, p: Point) -> Result<f64> {
        self.eval_direct_local(self.grid.to_grid_units(p)).ok_or(Error::PointOutsideDomain(p))
    }

    /// Evaluation in world coordinates (shifted by [`origin`](Self::origin)).
    pub fn eval_world(&self, p: Point) -> Result<f64> {
        self.eval(std::array::from_fn(|a| p[a] - self.origin[a]))
    }

    /// `D^gamma Qf(p)`, `|gamma| <= 3`, from the piece of the tetrahedron containing `p`.
    pub fn eval_derivative(&self, p: Point, gamma: [u32; 3]) -> Result<f64> {
        check_order(gamma)?;
        let q = self.grid.to_grid_units(p);
        let (r, lam) = locate_grid_units(q, self.grid.m()).ok_or(Error::PointOutsideDomain(p))?;
        let patch = self.patch(r.cube, r.tet);
        let order: u32 = gamma.iter().sum();
        Ok(derivative_of_patch(&patch, r.tet, gamma).eval(lam) / self.grid.h().powi(order as i32))
    }

    /// Gradient of `Qf` at `p`.
    pub fn eval_gradient(&self, p: Point) -> Result<[f64; 3]> {
        let q = self.grid.to_grid_units(p);
        let (r, lam) = locate_grid_units(q, self.grid.m()).ok_or(Error::PointOutsideDomain(p))?;
        let lin = match self.compiled.as_ref().and_then(|c| c.patch(r.cube, r.tet)) {
            Some(patch) => quartic_linear_stage(patch, lam),
            None => quartic_linear_stage(&self.assemble_patch(r.cube, r.tet), lam),
        };
        let scale = 4.0 / self.grid.h();
        Ok(std::array::from_fn(|a| {
            let dir = boxspline::axis_direction(r.tet, a);
            scale * (0..4).map(|k| dir[k] * lin[k]).sum::<f64>()
        }))
    }

    /// One-sided derivative of the piece on `(cube, tet)`, evaluated at `p` even
    /// if `p` lies outside that tetrahedron.
    pub fn eval_piece(&self, cube: [usize; 3], tet: u8, p: Point, gamma: [u32; 3]) -> Result<f64> {
        check_order(gamma)?;
        let q = self.grid.to_grid_units(p);
        let local = std::array::from_fn(|a| q[a] - cube[a] as f64);
        let lam = crate::partition::local_barycentric(tet, local);
        let order: u32 = gamma.iter().sum();
        Ok(derivative_of_patch(&self.patch(cube, tet), tet, gamma).eval(lam) / self.grid.h().powi(order as i32))
    }

    /// The spline to use for `points` evaluations: `self`, or a compiled copy
    /// when the batch is large and dense relative to the grid.
    pub fn prepared_for(&self, points: usize) -> Result<Cow<'_, QiSpline>> {
        let dense = !self.is_compiled()
            && points > COMPILE_MIN_POINTS
            && points >= COMPILE_POINTS_PER_CUBE * self.grid.cube_count()
            && compiled_bytes(&self.grid) <= DEFAULT_COMPILE_BUDGET;
        if !dense {
            return Ok(Cow::Borrowed(self));
        }
        let mut s = self.clone();
        s.compile()?;
        Ok(Cow::Owned(s))
    }

    /// Evaluate at many points (in parallel).
    pub fn eval_many(&self, points: &[Point]) -> Result<Vec<f64>> {
        let s = self.prepared_for(points.len())?;
        par::map_slice(points, |&p| s.eval(p)).into_iter().collect()
    }

    /// Values on the `n^3` grid spanning the closed domain (endpoints included), x fastest.
    pub fn eval_grid(&self, n: usize) -> Result<Vec<f64>> {
        let pts = grid_points(&self.grid, n);
        let s = self.prepared_for(pts.len())?;
        par::map_range(pts.len(), |i| s.eval(pts.point(i))).into_iter().collect()
    }

    /// Compile every tetrahedron within the default memory budget.
    pub fn compile(&mut self) -> Result<()> {
        self.compile_with_budget(DEFAULT_COMPILE_BUDGET)
    }

    pub fn compile_with_budget(&mut self, budget: u64) -> Result<()> {
        let c = self.compile_region([0; 3], self.grid.m(), budget)?;
        self.compiled = Some(c);
        Ok(())
    }

    /// Compile the cubes `lo <= c < hi` only; evaluation elsewhere stays direct.
    pub fn compile_region(&self, lo: [usize; 3], hi: [usize; 3], budget: u64) -> Result<CompiledPatches> {
        let m = self.grid.m();
        for a in 0..3 {
            if lo[a] >= hi[a] || hi[a] > m[a] {
                return Err(Error::CubeOutOfRange { cube: lo.map(|v| v as i64), dims: m });
            }
        }
        let dims: [usize; 3] = std::array::from_fn(|a| hi[a] - lo[a]);
        let cubes: u64 = dims.iter().map(|&d| d as u64).product();
        let needed = cubes * BYTES_PER_CUBE;
        if needed > budget {
            return Err(Error::TooLarge { needed, budget });
        }
        let mut patches = Vec::new();
        patches
            .try_reserve_exact(cubes as usize * TETS_PER_CUBE)
            .map_err(|_| Error::TooLarge { needed, budget })?;
        patches.resize(cubes as usize * TETS_PER_CUBE, [0.0; QUARTIC_LEN]);
        par::fill_chunks(&mut patches, TETS_PER_CUBE * 64, |start, chunk| {
            for (i, p) in chunk.iter_mut().enumerate() {
                let n = start + i;
                let c = n / TETS_PER_CUBE;
                let cube = [
                    lo[0] + c % dims[0],
                    lo[1] + (c / dims[0]) % dims[1],
                    lo[2] + c / (dims[0] * dims[1]),
                ];
                *p = self.assemble_patch(cube, (n % TETS_PER_CUBE) as u8);
            }
        });
        Ok(CompiledPatches { lo, dims, patches })
    }

    /// Attach a region compiled by [`compile_region`](Self::compile_region).
    pub fn set_compiled(&mut self, c: CompiledPatches) {
        self.compiled = Some(c);
    }

    pub fn clear_compiled(&mut self) {
        self.compiled = None;
    }

    /// Binary layout (little endian): magic `BOXQIS`, u16 version, u64 m1 m2 m3,
    /// f64 h, f64 origin x3, u32 tag length + UTF-8 tag, u64 coefficient count,
    /// f64 coefficients over the index box `[-1, m + 2]^3`, x fastest.
    pub fn save(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for m in self.grid.m() {
            w.write_all(&(m as u64).to_le_bytes())?;
        }
        w.write_all(&self.grid.h().to_le_bytes())?;
        for o in self.origin {
            w.write_all(&o.to_le_bytes())?;
        }
        w.write_all(&(self.tag.len() as u32).to_le_bytes())?;
        w.write_all(self.tag.as_bytes())?;
        w.write_all(&(self.coefs.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.coefs.len() * 8);
        for c in &self.coefs {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn load(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a spline file".into()));
        }
        let version = u16::from_le_bytes(read_array(r)?);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported spline file version {version}")));
        }
        let mut m = [0usize; 3];
        for v in m.iter_mut() {
            *v = u64::from_le_bytes(read_array(r)?) as usize;
        }
        let h = f64::from_le_bytes(read_array(r)?);
        let mut origin = [0.0; 3];
        for o in origin.iter_mut() {
            *o = f64::from_le_bytes(read_array(r)?);
        }
        let tag_len = u32::from_le_bytes(read_array(r)?) as usize;
        if tag_len > 1 << 16 {
            return Err(Error::Format("tag too long".into()));
        }
        let mut tag = vec![0u8; tag_len];
        r.read_exact(&mut tag)?;
        let tag = String::from_utf8(tag).map_err(|_| Error::Format("tag is not UTF-8".into()))?;
        let grid = DomainGrid::new(m, h)?;
        let count = u64::from_le_bytes(read_array(r)?);
        let expected: u64 = IndexSet::new(&grid).box_dims().iter().map(|&d| d as u64).product();
        if count != expected {
            return Err(Error::SizeMismatch { expected: expected as usize, got: count as usize });
        }
        let mut bytes = vec![0u8; count as usize * 8];
        r.read_exact(&mut bytes)?;
        let coefs = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Self::from_coefficients(grid, coefs)?.with_origin(origin).with_tag(tag))
    }
}

const MAGIC: &[u8; 6] = b"BOXQIS";
const FORMAT_VERSION: u16 = 1;

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

/// Bytes needed to compile every tetrahedron of `grid`.
pub fn compiled_bytes(grid: &DomainGrid) -> u64 {
    grid.cube_count() as u64 * BYTES_PER_CUBE
}

/// Boxes of cubes `(lo, hi)` covering `grid`, each compilable within `budget` bytes.
pub fn tile_plan(grid: &DomainGrid, budget: u64) -> Result<Vec<([usize; 3], [usize; 3])>> {
    let edge = ((budget / BYTES_PER_CUBE) as f64).cbrt().floor() as usize;
    let edge = (edge..=edge + 1).rev().find(|&e| (e as u64).pow(3) * BYTES_PER_CUBE <= budget).unwrap_or(0);
    if edge == 0 {
        return Err(Error::TooLarge { needed: BYTES_PER_CUBE, budget });
    }
    let m = grid.m();
    let starts = |a: usize| (0..m[a]).step_by(edge).collect::<Vec<_>>();
    let mut out = Vec::new();
    for &z in &starts(2) {
        for &y in &starts(1) {
            for &x in &starts(0) {
                let lo = [x, y, z];
                out.push((lo, std::array::from_fn(|a| (lo[a] + edge).min(m[a]))));
            }
        }
    }
    Ok(out)
}

/// Uniform `n^3` sampling of the closed domain, endpoints included.
#[derive(Clone, Copy, Debug)]
pub struct GridPoints {
    n: usize,
    extent: Point,
}

impl GridPoints {
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn point(&self, i: usize) -> Point {
        let n = self.n;
        let idx = [i % n, (i / n) % n, i / (n * n)];
        let step = |a: usize| if n > 1 { self.extent[a] / (n - 1) as f64 } else { 0.0 };
        std::array::from_fn(|a| if idx[a] == n - 1 { self.extent[a] } else { idx[a] as f64 * step(a) })
    }
}

pub fn grid_points(grid: &DomainGrid, n: usize) -> GridPoints {
    GridPoints { n, extent: grid.extent() }
}

/// Coefficients `a_alpha = lambda_alpha(f)` for every `alpha` in `A`.
pub fn approximate(samples: &SampleField, grid: &DomainGrid) -> Result<QiSpline> {
    if samples.grid() != grid {
        return Err(Error::InvalidGrid(format!(
            "samples are on {:?}, spline requested on {:?}",
            samples.grid(),
            grid
        )));
    }
    grid.require_qi()?;
    let lib = float_stencils()?;
    let set = IndexSet::new(grid);
    let dp = DataPoints::new(grid);
    let m = grid.m();
    let d = set.box_dims();
    let total: usize = d.iter().product();
    let values = samples.values();
    let coefs: Vec<Result<f64>> = par::map_range(total, |o| {
        let alpha = [(o % d[0]) as i64 - 1, ((o / d[0]) % d[1]) as i64 - 1, (o / (d[0] * d[1])) as i64 - 1];
        if !set.contains(alpha) {
            return Ok(0.0);
        }
        let class = classify(alpha, grid)?;
        let st = lib.iter().find(|s| s.key == class.key).expect("complete library");
        let mut s = 0.0;
        for (b, w) in &st.entries {
            let beta = class.map_beta(*b, m);
            s += w * values[dp.offset(beta)?];
        }
        Ok(s)
    });
    let coefs = coefs.into_iter().collect::<Result<Vec<_>>>()?;
    QiSpline::from_coefficients(*grid, coefs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rng() -> rand::rngs::StdRng {
        rand::rngs::StdRng::seed_from_u64(0x51)
    }

    fn random_point(r: &mut impl Rng, g: &DomainGrid) -> Point {
        let e = g.extent();
        std::array::from_fn(|a| r.gen::<f64>() * e[a])
    }

    #[test]
    fn constant_is_reproduced() {
        let g = DomainGrid::uniform(11, 0.1).unwrap();
        let s = approximate(&SampleField::from_fn(g, |_| 3.25), &g).unwrap();
        for a in IndexSet::new(&g).iter() {
            assert!((s.coefficient(a) - 3.25).abs() < 1e-12);
        }
        let mut r = rng();
        for _ in 0..200 {
            assert!((s.eval(random_point(&mut r, &g)).unwrap() - 3.25).abs() < 1e-12);
        }
        assert!((s.eval(g.extent()).unwrap() - 3.25).abs() < 1e-12);
        assert!(s.eval([-0.01, 0.0, 0.0]).is_err());
    }

    #[test]
    fn cubic_is_reproduced() {
        let g = DomainGrid::new([11, 12, 13], 1.0 / 12.0).unwrap();
        let p = |x: Point| {
            1.0 - 2.0 * x[0] + x[1] * x[2] + 3.0 * x[0] * x[0] * x[1] - x[2] * x[2] * x[2] + 0.5 * x[0] * x[1] * x[2]
        };
        let s = approximate(&SampleField::from_fn(g, p), &g).unwrap();
        let mut r = rng();
        for _ in 0..500 {
            let x = random_point(&mut r, &g);
            assert!((s.eval(x).unwrap() - p(x)).abs() < 1e-11);
        }
    }

    #[test]
    fn compiled_matches_direct_and_constant_patches_are_one() {
        let g = DomainGrid::uniform(11, 0.2).unwrap();
        let mut one = approximate(&SampleField::from_fn(g, |_| 1.0), &g).unwrap();
        one.compile().unwrap();
        for cube in [[0, 0, 0], [5, 3, 10], [10, 10, 10]] {
            for t in 0..24 {
                assert!(one.patch(cube, t).iter().all(|c| (c - 1.0).abs() < 1e-12));
            }
        }
        let f = |x: Point| (3.0 * x[0]).sin() * (x[1] - x[2]).cos();
        let direct = approximate(&SampleField::from_fn(g, f), &g).unwrap();
        let mut compiled = direct.clone();
        compiled.compile().unwrap();
        assert!(compiled.is_compiled());
        let mut r = rng();
        for _ in 0..2000 {
            let x = random_point(&mut r, &g);
            let a = direct.eval(x).unwrap();
            let b = compiled.eval(x).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-3));
        }
    }

    #[test]
    fn compile_budget_is_enforced() {
        let g = DomainGrid::uniform(11, 1.0).unwrap();
        let mut s = approximate(&SampleField::from_fn(g, |_| 0.0), &g).unwrap();
        let need = compiled_bytes(&g);
        assert_eq!(need, 1331 * 6720);
        match s.compile_with_budget(need - 1) {
            Err(Error::TooLarge { needed, .. }) => assert_eq!(needed, need),
            other => panic!("{other:?}"),
        }
        let region = s.compile_region([2, 2, 2], [4, 5, 6], 1 << 20).unwrap();
        assert_eq!(region.bytes(), 2 * 3 * 4 * 6720);
        let plan = tile_plan(&g, 100 * 6720).unwrap();
        assert_eq!(plan.len(), 27);
        let cubes: usize = plan.iter().map(|(lo, hi)| (0..3).map(|a| hi[a] - lo[a]).product::<usize>()).sum();
        assert_eq!(cubes, 1331);
        assert!(tile_plan(&g, 6719).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let g = DomainGrid::uniform(12, 1.0 / 12.0).unwrap();
        let f = |x: Point| (x[0] * 2.0).exp() * (x[1] + 0.3 * x[2]).sin();
        let s = approximate(&SampleField::from_fn(g, f), &g).unwrap();
        let mut r = rng();
        let step = 1e-6;
        for _ in 0..100 {
            let x: Point = std::array::from_fn(|_| 0.05 + 0.9 * r.gen::<f64>());
            for a in 0..3 {
                let mut gamma = [0; 3];
                gamma[a] = 1;
                let d = s.eval_derivative(x, gamma).unwrap();
                let (mut xp, mut xm) = (x, x);
                xp[a] += step;
                xm[a] -= step;
                let fd = (s.eval(xp).unwrap() - s.eval(xm).unwrap()) / (2.0 * step);
                assert!((d - fd).abs() <= 1e-6 * d.abs().max(1.0), "{d} {fd}");
            }
        }
        let c = approximate(&SampleField::from_fn(g, |_| 2.0), &g).unwrap();
        assert!(c.eval_derivative([0.3, 0.4, 0.5], [1, 0, 0]).unwrap().abs() < 1e-10);
        assert!(c.eval_derivative([0.3, 0.4, 0.5], [2, 2, 0]).is_err());
    }

    #[test]
    fn linearity() {
        let g = DomainGrid::uniform(11, 0.1).unwrap();
        let mut r = rng();
        let u: Vec<f64> = (0..13 * 13 * 13).map(|_| r.gen::<f64>() - 0.5).collect();
        let v: Vec<f64> = (0..13 * 13 * 13).map(|_| r.gen::<f64>() - 0.5).collect();
        let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let su = approximate(&SampleField::new(g, u).unwrap(), &g).unwrap();
        let sv = approximate(&SampleField::new(g, v).unwrap(), &g).unwrap();
        let sw = approximate(&SampleField::new(g, w).unwrap(), &g).unwrap();
        for i in 0..su.coefficients().len() {
            let want = 2.0 * su.coefficients()[i] - 3.0 * sv.coefficients()[i];
            assert!((sw.coefficients()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn bounded_by_norm_bound() {
        let g = DomainGrid::uniform(11, 0.1).unwrap();
        let bound = stencils::norm_bound(stencils::library().unwrap());
        let mut r = rng();
        for _ in 0..5 {
            let u: Vec<f64> = (0..13 * 13 * 13).map(|_| if r.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            let s = approximate(&SampleField::new(g, u).unwrap(), &g).unwrap();
            let m = s.coefficients().iter().fold(0.0f64, |m, c| m.max(c.abs()));
            assert!(m <= bound + 1e-12);
        }
    }

    #[test]
    fn samples_must_be_complete() {
        let g = DomainGrid::uniform(11, 1.0).unwrap();
        assert!(matches!(SampleField::new(g, vec![0.0; 10]), Err(Error::IncompleteSamples { .. })));
        let small = DomainGrid::uniform(10, 1.0).unwrap();
        assert!(matches!(
            approximate(&SampleField::from_fn(small, |_| 0.0), &small),
            Err(Error::GridTooSmall(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let g = DomainGrid::new([11, 12, 11], 0.25).unwrap();
        let s = approximate(&SampleField::from_fn(g, |x| x[0] - x[1] * x[2]), &g)
            .unwrap()
            .with_origin([-1.0, 0.5, 2.0])
            .with_tag("demo");
        let mut buf = Vec::new();
        s.save(&mut buf).unwrap();
        let t = QiSpline::load(&mut buf.as_slice()).unwrap();
        assert_eq!(t.coefficients(), s.coefficients());
        assert_eq!(t.grid(), s.grid());
        assert_eq!(t.origin(), s.origin());
        assert_eq!(t.tag(), "demo");
        assert!(QiSpline::load(&mut &buf[..20]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(QiSpline::load(&mut bad.as_slice()).is_err());
    }

    #[test]
    fn grid_points_include_endpoints() {
        let g = DomainGrid::new([11, 12, 13], 0.5).unwrap();
        let gp = grid_points(&g, 5);
        assert_eq!(gp.point(0), [0.0; 3]);
        assert_eq!(gp.point(gp.len() - 1), g.extent());
    }
}
