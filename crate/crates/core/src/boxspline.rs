//! The seven-direction quartic box spline `B(.|X)`.
//!
//! `X = {e1, e2, e3, (1,1,1), (-1,1,1), (1,-1,1), (-1,-1,1)}`. `B` is a C²
//! piecewise quartic on the type-6 partition of the integer cube grid, with
//! support in `[-2,3] x [-2,3] x [0,5]` centered at `(1/2, 1/2, 5/2)`.
//!
//! Two evaluators live here:
//!
//! * [`Oracle`] evaluates the box-spline recurrence directly. It is slow and
//!   only valid off knot planes, and is used to build and audit the table.
//! * [`BbTable`] stores the Bézier patch of `B` on every tetrahedron of its
//!   support box and evaluates by point location plus a 35-term dot product.

use std::sync::OnceLock;

use nalgebra::{Matrix3, SMatrix};

use crate::bernstein::{quartic_basis, BbPoly, QuarticInterpolator, QUARTIC, QUARTIC_LEN};
use crate::partition::{local_barycentric, locate_local, reference_tetrahedra, TETS_PER_CUBE};
use crate::rational::{self, Rat};
use crate::{par, DomainGrid, Error, MultiIndex, Point, Result};

/// Direction vectors, in the order `e1..e7`.
pub const DIRECTIONS: [[i32; 3]; 7] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 1],
    [-1, 1, 1],
    [1, -1, 1],
    [-1, -1, 1],
];

pub const SUPPORT_CENTER: Point = [0.5, 0.5, 2.5];
/// Lowest cube corner of the support box.
pub const SUPPORT_LO: MultiIndex = [-2, -2, 0];
/// Cubes per axis of the support box.
pub const SUPPORT_CUBES: usize = 5;
const OFFSETS: usize = SUPPORT_CUBES * SUPPORT_CUBES * SUPPORT_CUBES;

/// Shift between a translate index and the box-spline frame:
/// `B_alpha(x) = B(x/h - alpha + ANCHOR)`.
pub const ANCHOR: MultiIndex = [1, 1, 3];

/// Default contraction of the sample points towards each tetrahedron's centroid.
pub const DEFAULT_SHRINK: f64 = 0.83;
const FALLBACK_SHRINK: [f64; 3] = [DEFAULT_SHRINK, 0.77, 0.69];
const MAX_CONDITION: f64 = 1e10;

const STATES: usize = 2187; // 3^7

/// Recurrence evaluator for `B`.
///
/// Uses `(n - 3) M_X(x) = sum_xi t_xi M_{X\xi}(x) + (1 - t_xi) M_{X\xi}(x - xi)`
/// with `x = sum t_xi xi` the minimum-norm representation, down to
/// three-direction parallelepiped indicators. Sub-box-splines whose
/// directions do not span R³ vanish off knot planes and are dropped.
pub struct Oracle {
    dirs: [[f64; 3]; 7],
    /// Minimum-norm coefficient map per subset (row per direction).
    pinv: Vec<Option<[[f64; 3]; 7]>>,
    /// Inverse and `1/|det|` for spanning three-direction subsets.
    leaf: Vec<Option<(Matrix3<f64>, f64)>>,
}

impl Default for Oracle {
    fn default() -> Self {
        Self::new()
    }
}

impl Oracle {
    pub fn new() -> Self {
        let dirs = DIRECTIONS.map(|d| d.map(f64::from));
        let mut pinv = vec![None; 128];
        let mut leaf = vec![None; 128];
        for mask in 0u32..128 {
            let members: Vec<usize> = (0..7).filter(|&i| mask & (1 << i) != 0).collect();
            if members.len() < 3 {
                continue;
            }
            let k = members.len();
            let x = nalgebra::DMatrix::from_fn(3, k, |r, c| dirs[members[c]][r]);
            let gram = &x * x.transpose();
            if gram.determinant().abs() < 1e-9 {
                continue;
            }
            let p = x.transpose() * gram.try_inverse().expect("spanning subset");
            let mut rows = [[0.0; 3]; 7];
            for (c, &i) in members.iter().enumerate() {
                rows[i] = [p[(c, 0)], p[(c, 1)], p[(c, 2)]];
            }
            pinv[mask as usize] = Some(rows);
            if k == 3 {
                let m = Matrix3::from_fn(|r, c| dirs[members[c]][r]);
                let det = m.determinant();
                leaf[mask as usize] = Some((m.try_inverse().expect("nonsingular"), 1.0 / det.abs()));
            }
        }
        Self { dirs, pinv, leaf }
    }

    /// `B(x)` for `x` off every knot plane.
    pub fn eval(&self, x: Point) -> f64 {
        // cheap reject outside the support box
        if x[0] <= -2.0 || x[0] >= 3.0 || x[1] <= -2.0 || x[1] >= 3.0 || x[2] <= 0.0 || x[2] >= 5.0 {
            return 0.0;
        }
        let mut memo = [f64::NAN; STATES];
        self.node(x, 0, &mut memo)
    }

    /// State digits per direction: 0 present, 1 removed, 2 removed and shifted.
    fn node(&self, x: Point, state: usize, memo: &mut [f64; STATES]) -> f64 {
        let cached = memo[state];
        if !cached.is_nan() {
            return cached;
        }
        let mut mask = 0usize;
        let mut y = x;
        let mut s = state;
        let mut pow = [0usize; 7];
        let mut p = 1;
        for i in 0..7 {
            pow[i] = p;
            p *= 3;
            match s % 3 {
                0 => mask |= 1 << i,
                2 => {
                    for a in 0..3 {
                        y[a] -= self.dirs[i][a];
                    }
                }
                _ => {}
            }
            s /= 3;
        }
        let k = mask.count_ones() as usize;
        let value = if k == 3 {
            match &self.leaf[mask] {
                Some((inv, scale)) => {
                    let t = inv * nalgebra::Vector3::new(y[0], y[1], y[2]);
                    if t.iter().all(|&v| (0.0..1.0).contains(&v)) {
                        *scale
                    } else {
                        0.0
                    }
                }
                None => 0.0,
            }
        } else {
            match &self.pinv[mask] {
                None => 0.0,
                Some(rows) => {
                    let mut acc = 0.0;
                    for i in 0..7 {
                        if mask & (1 << i) == 0 {
                            continue;
                        }
                        let r = rows[i];
                        let t = r[0] * y[0] + r[1] * y[1] + r[2] * y[2];
                        let kept = self.node(x, state + pow[i], memo);
                        let shifted = self.node(x, state + 2 * pow[i], memo);
                        acc += t * kept + (1.0 - t) * shifted;
                    }
                    acc / (k - 3) as f64
                }
            }
        };
        memo[state] = value;
        value
    }
}

fn oracle() -> &'static Oracle {
    static ORACLE: OnceLock<Oracle> = OnceLock::new();
    ORACLE.get_or_init(Oracle::new)
}

/// Recurrence value of `B(x)`; `x` must avoid knot planes.
pub fn eval_oracle(x: Point) -> f64 {
    oracle().eval(x)
}

#[inline]
fn offset_index(o: MultiIndex) -> Option<usize> {
    let mut idx = 0usize;
    let mut stride = 1usize;
    for a in 0..3 {
        let r = o[a] - SUPPORT_LO[a];
        if !(0..SUPPORT_CUBES as i64).contains(&r) {
            return None;
        }
        idx += r as usize * stride;
        stride *= SUPPORT_CUBES;
    }
    Some(idx)
}

fn offset_of(idx: usize) -> MultiIndex {
    let n = SUPPORT_CUBES;
    [
        (idx % n) as i64 + SUPPORT_LO[0],
        ((idx / n) % n) as i64 + SUPPORT_LO[1],
        (idx / (n * n)) as i64 + SUPPORT_LO[2],
    ]
}

/// Bézier patches of `B` on every tetrahedron of its support box.
#[derive(Clone, Debug)]
pub struct BbTable {
    shrink: f64,
    patches: Vec<[f64; QUARTIC_LEN]>,
    nonzero: [Vec<MultiIndex>; TETS_PER_CUBE],
}

impl BbTable {
    /// Build with the default shrink factor, falling back to others if the
    /// collocation system is ill-conditioned.
    pub fn build() -> Result<Self> {
        let mut last = None;
        for f in FALLBACK_SHRINK {
            match Self::build_with_shrink(f) {
                Ok(t) => return Ok(t),
                Err(e @ Error::IllConditioned(_)) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    pub fn build_with_shrink(shrink: f64) -> Result<Self> {
        let samples = sample_barycentrics(shrink);
        let interp = QuarticInterpolator::new(&samples)?;
        if !(interp.condition() < MAX_CONDITION) {
            return Err(Error::IllConditioned(interp.condition()));
        }
        let refs = reference_tetrahedra();
        let oracle = oracle();
        let cells: Vec<(usize, usize)> =
            (0..OFFSETS).flat_map(|o| (0..TETS_PER_CUBE).map(move |t| (o, t))).collect();
        let patches = par::map_slice(&cells, |&(o, t)| {
            let off = offset_of(o);
            let tet = &refs[t];
            let shift = |p: Point| [p[0] + off[0] as f64, p[1] + off[1] as f64, p[2] + off[2] as f64];
            if oracle.eval(shift(tet.centroid())) <= 0.0 {
                return [0.0; QUARTIC_LEN];
            }
            let values: Vec<f64> = samples
                .iter()
                .map(|b| oracle.eval(shift(tet.point_at(&crate::partition::Barycentric4(*b)))))
                .collect();
            interp.solve(&values)
        });
        Ok(Self::from_patches(shrink, patches))
    }

    fn from_patches(shrink: f64, patches: Vec<[f64; QUARTIC_LEN]>) -> Self {
        let mut nonzero: [Vec<MultiIndex>; TETS_PER_CUBE] = Default::default();
        for (n, p) in patches.iter().enumerate() {
            if p.iter().any(|&c| c != 0.0) {
                nonzero[n % TETS_PER_CUBE].push(offset_of(n / TETS_PER_CUBE));
            }
        }
        Self { shrink, patches, nonzero }
    }

    pub fn shrink(&self) -> f64 {
        self.shrink
    }

    /// Patch of `B` on tetrahedron `tet` of the cube with lower corner `offset`
    /// (box-spline frame). `None` outside the support box.
    #[inline]
    pub fn patch(&self, offset: MultiIndex, tet: u8) -> Option<&[f64; QUARTIC_LEN]> {
        offset_index(offset).map(|o| &self.patches[o * TETS_PER_CUBE + tet as usize])
    }

    /// Cube offsets whose patch on `tet` is not identically zero.
    pub fn nonzero_offsets(&self, tet: u8) -> &[MultiIndex] {
        &self.nonzero[tet as usize]
    }

    /// Number of tetrahedra of the support carrying a nonzero patch.
    pub fn support_tetrahedra(&self) -> usize {
        self.nonzero.iter().map(Vec::len).sum()
    }

    pub fn iter_patches(&self) -> impl Iterator<Item = (MultiIndex, u8, &[f64; QUARTIC_LEN])> {
        self.patches
            .iter()
            .enumerate()
            .map(|(n, p)| (offset_of(n / TETS_PER_CUBE), (n % TETS_PER_CUBE) as u8, p))
    }

    /// Exact piecewise-quartic value of `B(x)`.
    pub fn eval(&self, x: Point) -> f64 {
        let Some((offset, tet, lam)) = locate_in_frame(x) else {
            return 0.0;
        };
        match self.patch(offset, tet) {
            Some(p) => dot(p, &quartic_basis(lam)),
            None => 0.0,
        }
    }

    /// `D^gamma B(x)`, `|gamma| <= 3`, from the patch containing `x`.
    pub fn eval_derivative(&self, x: Point, gamma: [u32; 3]) -> Result<f64> {
        check_order(gamma)?;
        let Some((offset, tet, lam)) = locate_in_frame(x) else {
            return Ok(0.0);
        };
        Ok(match self.patch(offset, tet) {
            Some(p) => derivative_of_patch(p, tet, gamma).eval(lam),
            None => 0.0,
        })
    }

    /// `D^gamma` of the polynomial piece on `(offset, tet)`, evaluated at `x`
    /// even if `x` lies outside that tetrahedron.
    pub fn eval_piece(&self, offset: MultiIndex, tet: u8, x: Point, gamma: [u32; 3]) -> Result<f64> {
        check_order(gamma)?;
        let Some(p) = self.patch(offset, tet) else {
            return Ok(0.0);
        };
        let local = std::array::from_fn(|a| x[a] - offset[a] as f64);
        Ok(derivative_of_patch(p, tet, gamma).eval(local_barycentric(tet, local)))
    }

    /// `B_alpha(p)` for a physical point `p`.
    pub fn eval_translate(&self, alpha: MultiIndex, grid: &DomainGrid, p: Point) -> f64 {
        self.eval(translate_frame(alpha, grid, p))
    }
}

/// Box-spline frame coordinates of a physical point for translate `alpha`.
pub fn translate_frame(alpha: MultiIndex, grid: &DomainGrid, p: Point) -> Point {
    let h = grid.h();
    std::array::from_fn(|a| p[a] / h - (alpha[a] - ANCHOR[a]) as f64)
}

pub(crate) fn check_order(gamma: [u32; 3]) -> Result<()> {
    if gamma.iter().sum::<u32>() > 3 {
        Err(Error::DerivativeOrder(gamma))
    } else {
        Ok(())
    }
}

/// Derivative polynomial (grid units) of a quartic patch living on reference
/// tetrahedron `tet`.
pub fn derivative_of_patch(patch: &[f64; QUARTIC_LEN], tet: u8, gamma: [u32; 3]) -> BbPoly {
    let mut poly = BbPoly::quartic(patch);
    for axis in 0..3 {
        let dir = axis_direction(tet, axis);
        for _ in 0..gamma[axis] {
            poly = poly.directional(dir);
        }
    }
    poly
}

/// Barycentric increments of a unit step along `axis` on reference tetrahedron `tet`.
pub fn axis_direction(tet: u8, axis: usize) -> [f64; 4] {
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let at1 = local_barycentric(tet, e);
    let at0 = local_barycentric(tet, [0.0; 3]);
    std::array::from_fn(|v| at1[v] - at0[v])
}

#[inline]
fn locate_in_frame(x: Point) -> Option<(MultiIndex, u8, [f64; 4])> {
    let mut cube = [0i64; 3];
    let mut local = [0.0; 3];
    for a in 0..3 {
        let lo = SUPPORT_LO[a] as f64;
        let hi = lo + SUPPORT_CUBES as f64;
        if !(x[a] >= lo && x[a] < hi) {
            return None;
        }
        let c = x[a].floor();
        cube[a] = c as i64;
        local[a] = x[a] - c;
    }
    let (tet, lam) = locate_local(local);
    Some((cube, tet, lam))
}

#[inline]
pub(crate) fn dot(p: &[f64; QUARTIC_LEN], b: &[f64; QUARTIC_LEN]) -> f64 {
    p.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sample points: quartic domain points pulled towards the centroid.
pub fn sample_barycentrics(shrink: f64) -> Vec<[f64; 4]> {
    QUARTIC
        .iter()
        .map(|w| w.map(|c| (1.0 - shrink) * 0.25 + shrink * c as f64 / 4.0))
        .collect()
}

/// Process-wide table, built on first use.
pub fn table() -> &'static BbTable {
    static TABLE: OnceLock<BbTable> = OnceLock::new();
    TABLE.get_or_init(|| BbTable::build().expect("box-spline table construction"))
}

/// `B(x)` through the shared table.
pub fn eval(x: Point) -> f64 {
    table().eval(x)
}

pub fn eval_translate(alpha: MultiIndex, grid: &DomainGrid, p: Point) -> f64 {
    table().eval_translate(alpha, grid, p)
}

pub fn eval_derivative(x: Point, gamma: [u32; 3]) -> Result<f64> {
    table().eval_derivative(x, gamma)
}

/// Table with every Bézier coefficient as an exact rational, recovered from
/// the floating-point build and audited exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalTable {
    patches: Vec<(MultiIndex, u8, Vec<Rat>)>,
}

const RATIONAL_MAX_DEN: i64 = 1 << 40;
const RATIONAL_TOL: f64 = 1e-11;

#[derive(serde::Serialize, serde::Deserialize)]
struct TableFile {
    format: String,
    version: u32,
    patches: Vec<PatchRecord>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct PatchRecord {
    offset: MultiIndex,
    tet: u8,
    coefs: Vec<String>,
}

const TABLE_FORMAT: &str = "boxqi-bb-table";
const TABLE_VERSION: u32 = 1;

impl RationalTable {
    pub fn from_table(t: &BbTable) -> Result<Self> {
        let mut patches = Vec::new();
        for (offset, tet, p) in t.iter_patches() {
            if p.iter().all(|&c| c == 0.0) {
                continue;
            }
            let coefs = p
                .iter()
                .map(|&c| {
                    rational::reconstruct(c, RATIONAL_MAX_DEN, RATIONAL_TOL).ok_or_else(|| {
                        Error::Format(format!("coefficient {c} of patch {offset:?}/{tet} is not a small rational"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            patches.push((offset, tet, coefs));
        }
        Ok(Self { patches })
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patches(&self) -> &[(MultiIndex, u8, Vec<Rat>)] {
        &self.patches
    }

    /// Sum over all integer translates of each local patch must be the
    /// constant 1, coefficient by coefficient.
    pub fn audit_partition_of_unity(&self) -> Result<()> {
        let mut sums: Vec<Vec<Rat>> = vec![vec![rational::int(0); QUARTIC_LEN]; TETS_PER_CUBE];
        for (_, tet, coefs) in &self.patches {
            for (s, c) in sums[*tet as usize].iter_mut().zip(coefs) {
                *s += c;
            }
        }
        let one = rational::int(1);
        for (tet, s) in sums.iter().enumerate() {
            if s.iter().any(|v| *v != one) {
                return Err(Error::Format(format!("translates do not sum to one on tetrahedron {tet}")));
            }
        }
        Ok(())
    }

    pub fn to_float(&self) -> BbTable {
        let mut patches = vec![[0.0; QUARTIC_LEN]; OFFSETS * TETS_PER_CUBE];
        for (offset, tet, coefs) in &self.patches {
            let o = offset_index(*offset).expect("offset inside support box");
            patches[o * TETS_PER_CUBE + *tet as usize] = std::array::from_fn(|i| rational::to_f64(&coefs[i]));
        }
        BbTable::from_patches(f64::NAN, patches)
    }

    /// Stable JSON encoding; identical tables give identical bytes.
    pub fn to_json(&self) -> String {
        let file = TableFile {
            format: TABLE_FORMAT.into(),
            version: TABLE_VERSION,
            patches: self
                .patches
                .iter()
                .map(|(offset, tet, coefs)| PatchRecord {
                    offset: *offset,
                    tet: *tet,
                    coefs: coefs.iter().map(rational::format).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(s)?;
        if file.format != TABLE_FORMAT || file.version != TABLE_VERSION {
            return Err(Error::Format(format!("unsupported table file {} v{}", file.format, file.version)));
        }
        let patches = file
            .patches
            .into_iter()
            .map(|r| {
                if offset_index(r.offset).is_none() || r.tet as usize >= TETS_PER_CUBE || r.coefs.len() != QUARTIC_LEN {
                    return Err(Error::Format(format!("bad patch record {:?}/{}", r.offset, r.tet)));
                }
                let coefs = r.coefs.iter().map(|c| rational::parse(c)).collect::<Result<Vec<_>>>()?;
                Ok((r.offset, r.tet, coefs))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { patches })
    }
}

/// Small helper used by tests and tools: the 3x3 integer matrix of a
/// three-direction subset.
pub fn direction_matrix(i: usize, j: usize, k: usize) -> SMatrix<f64, 3, 3> {
    let d = DIRECTIONS.map(|v| v.map(f64::from));
    SMatrix::<f64, 3, 3>::from_fn(|r, c| [d[i], d[j], d[k]][c][r])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rng() -> rand::rngs::StdRng {
        rand::rngs::StdRng::seed_from_u64(0xB0C5)
    }

    /// A point that is almost surely off all knot planes.
    fn generic(rng: &mut impl Rng, lo: Point, hi: Point) -> Point {
        std::array::from_fn(|a| lo[a] + rng.gen::<f64>() * (hi[a] - lo[a]))
    }

    #[test]
    fn oracle_zero_far_away() {
        assert_eq!(eval_oracle([10.0, 10.0, 10.0]), 0.0);
    }

    #[test]
    fn oracle_central_symmetry() {
        let mut r = rng();
        for _ in 0..50 {
            let v: Point = generic(&mut r, [-2.4; 3], [2.4; 3]);
            let a = eval_oracle([0.5 + v[0], 0.5 + v[1], 2.5 + v[2]]);
            let b = eval_oracle([0.5 - v[0], 0.5 - v[1], 2.5 - v[2]]);
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn oracle_partition_of_unity() {
        let mut r = rng();
        for _ in 0..20 {
            let x = generic(&mut r, [0.0; 3], [1.0; 3]);
            let mut s = 0.0;
            for i in -3..=3 {
                for j in -3..=3 {
                    for k in -5..=1 {
                        s += eval_oracle([x[0] - i as f64, x[1] - j as f64, x[2] - k as f64]);
                    }
                }
            }
            assert!((s - 1.0).abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn support_volume_matches_zonotope() {
        // zonotope volume = sum of |det| over three-direction subsets
        let mut vol = 0.0;
        for i in 0..7 {
            for j in i + 1..7 {
                for k in j + 1..7 {
                    vol += direction_matrix(i, j, k).determinant().abs();
                }
            }
        }
        assert_eq!(vol, 53.0);
        let t = table();
        assert_eq!(t.support_tetrahedra() as f64, vol * 24.0);
    }

    #[test]
    fn table_matches_oracle_at_center_and_random_points() {
        let t = table();
        let c = SUPPORT_CENTER;
        // the support center is a vertex; nudge it off the planes for the oracle
        let off = [c[0] + 1e-9 * 0.31, c[1] + 1e-9 * 0.17, c[2] + 1e-9 * 0.05];
        assert!((t.eval(c) - eval_oracle(off)).abs() < 1e-8);
        let mut r = rng();
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let x = generic(&mut r, [-2.0, -2.0, 0.0], [3.0, 3.0, 5.0]);
            worst = worst.max((t.eval(x) - eval_oracle(x)).abs());
        }
        assert!(worst <= 1e-9, "max table/oracle difference {worst}");
    }

    #[test]
    fn patches_outside_support_box_are_absent() {
        let t = table();
        assert!(t.patch([3, 0, 0], 0).is_none());
        assert!(t.patch([0, 0, -1], 5).is_none());
        assert_eq!(t.eval([3.5, 0.5, 2.5]), 0.0);
        assert_eq!(t.eval([0.5, 0.5, -0.1]), 0.0);
        assert_eq!(t.eval([0.5, 0.5, 5.0]), 0.0);
    }

    #[test]
    fn coefficients_are_nonnegative_and_bounded() {
        for (_, _, p) in table().iter_patches() {
            for &c in p {
                assert!(c >= -1e-12 && c <= 1.0 + 1e-12, "{c}");
            }
        }
    }

    #[test]
    fn translate_vanishes_beyond_support_box() {
        let g = DomainGrid::uniform(12, 0.1).unwrap();
        let alpha = [4, 5, 6];
        let c = crate::domain::center(alpha, &g);
        let eps = 1e-9;
        for s in [-1.0, 1.0] {
            let p = [c[0], c[1], c[2] + s * (2.5 * g.h() + eps)];
            assert_eq!(eval_translate(alpha, &g, p), 0.0);
        }
        assert!(eval_translate(alpha, &g, c) > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = table();
        let mut r = rng();
        let step = 1e-5;
        for _ in 0..100 {
            let x = generic(&mut r, [-1.5, -1.5, 0.5], [2.5, 2.5, 4.5]);
            for axis in 0..3 {
                let mut g = [0u32; 3];
                g[axis] = 1;
                let d = t.eval_derivative(x, g).unwrap();
                let mut xp = x;
                let mut xm = x;
                xp[axis] += step;
                xm[axis] -= step;
                let fd = (t.eval(xp) - t.eval(xm)) / (2.0 * step);
                assert!((d - fd).abs() <= 1e-6 * d.abs().max(1e-2), "{d} vs {fd}");
            }
        }
    }

    #[test]
    fn zeroth_derivative_is_value() {
        let t = table();
        let x = [0.3, 0.77, 2.11];
        assert!((t.eval_derivative(x, [0, 0, 0]).unwrap() - t.eval(x)).abs() < 1e-15);
        assert!(t.eval_derivative(x, [2, 1, 1]).is_err());
    }

    #[test]
    fn linear_reproduction() {
        let t = table();
        let mut r = rng();
        // sum_alpha (alpha + c) B(x - alpha) = x with c the support center
        for _ in 0..20 {
            let x = generic(&mut r, [0.0; 3], [1.0; 3]);
            let mut first = [0.0; 3];
            for i in -3..=3i64 {
                for j in -3..=3i64 {
                    for k in -5..=1i64 {
                        let b = t.eval([x[0] - i as f64, x[1] - j as f64, x[2] - k as f64]);
                        first[0] += i as f64 * b;
                        first[1] += j as f64 * b;
                        first[2] += k as f64 * b;
                    }
                }
            }
            for a in 0..3 {
                assert!((x[a] - first[a] - SUPPORT_CENTER[a]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invariant_under_cube_symmetries() {
        let t = table();
        let mut r = rng();
        let c = SUPPORT_CENTER;
        for g in crate::domain::SymmetryTransform::all() {
            for _ in 0..20 {
                let v = generic(&mut r, [-2.5; 3], [2.5; 3]);
                let mut w = [0.0; 3];
                for k in 0..3 {
                    w[g.perm[k]] = v[k];
                }
                for k in 0..3 {
                    if g.reflect[k] {
                        w[k] = -w[k];
                    }
                }
                let a = t.eval([c[0] + v[0], c[1] + v[1], c[2] + v[2]]);
                let b = t.eval([c[0] + w[0], c[1] + w[1], c[2] + w[2]]);
                assert!((a - b).abs() < 1e-9, "{g:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn pieces_join_c2_across_faces() {
        let t = table();
        let refs = crate::partition::reference_tetrahedra();
        let mut r = rng();
        let orders: Vec<[u32; 3]> = (0..3u32)
            .flat_map(|a| (0..3u32).flat_map(move |b| (0..3u32).map(move |c| [a, b, c])))
            .filter(|g| g.iter().sum::<u32>() <= 2)
            .collect();
        let mut checked = 0;
        for (offset, tet, patch) in t.iter_patches() {
            if patch.iter().all(|&c| c == 0.0) || r.gen::<f64>() > 0.1 {
                continue;
            }
            let v = refs[tet as usize].vertices;
            let skip = r.gen_range(0..4);
            let mut w = [0.0; 4];
            let mut s = 0.0;
            for (k, wk) in w.iter_mut().enumerate() {
                if k != skip {
                    *wk = 0.05 + r.gen::<f64>();
                    s += *wk;
                }
            }
            let local = crate::partition::Tetrahedron::new(v).point_at(&crate::partition::Barycentric4(w.map(|x| x / s)));
            let x: Point = std::array::from_fn(|a| local[a] + offset[a] as f64);
            // step across the face, away from the skipped vertex
            let centroid = refs[tet as usize].centroid();
            let out: Point = std::array::from_fn(|a| x[a] + 1e-7 * (local[a] - centroid[a]));
            let Some((o2, t2, _)) = locate_in_frame(out) else { continue };
            if (o2, t2) == (offset, tet) {
                continue;
            }
            for g in &orders {
                let a = t.eval_piece(offset, tet, x, *g).unwrap();
                let b = t.eval_piece(o2, t2, x, *g).unwrap();
                let tol = if g.iter().sum::<u32>() == 0 { 1e-9 } else { 1e-8 };
                assert!((a - b).abs() <= tol * a.abs().max(1.0), "{offset:?}/{tet} vs {o2:?}/{t2} {g:?}: {a} {b}");
            }
            checked += 1;
        }
        assert!(checked > 50, "{checked}");
    }

    #[test]
    fn rational_table_round_trip_and_audit() {
        let rt = RationalTable::from_table(table()).unwrap();
        rt.audit_partition_of_unity().unwrap();
        let json = rt.to_json();
        assert_eq!(json, RationalTable::from_table(table()).unwrap().to_json());
        let back = RationalTable::from_json(&json).unwrap();
        assert_eq!(back, rt);
        let ft = back.to_float();
        let mut r = rng();
        for _ in 0..200 {
            let x = generic(&mut r, [-2.0, -2.0, 0.0], [3.0, 3.0, 5.0]);
            assert!((ft.eval(x) - table().eval(x)).abs() < 1e-11);
        }
    }
}
