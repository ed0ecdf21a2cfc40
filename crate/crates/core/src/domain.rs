//! Index sets, data points and the box symmetries used to classify
//! translates near the boundary.
//!
//! Translates are indexed by `alpha = (i, j, k)` with `-1 <= alpha_a <= m_a + 2`,
//! minus the excluded set of indices lying on two extreme values at once.
//! Data points are `M_beta`, `0 <= beta_a <= m_a + 1`, with
//! `s_0 = 0`, `s_i = (i - 1/2) h`, `s_{m+1} = m h` per axis.

use crate::{DomainGrid, Error, MultiIndex, Point, Result};

/// Center `C_alpha = ((i - 1/2) h, (j - 1/2) h, (k - 1/2) h)` of the support of `B_alpha`.
pub fn center(alpha: MultiIndex, grid: &DomainGrid) -> Point {
    let h = grid.h();
    alpha.map(|i| (i as f64 - 0.5) * h)
}

#[inline]
fn is_extreme(v: i64, m: usize) -> bool {
    v == -1 || v == m as i64 + 2
}

/// The set `A` of translates whose supports meet the domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexSet {
    m: [usize; 3],
}

impl IndexSet {
    pub fn new(grid: &DomainGrid) -> Self {
        Self { m: grid.m() }
    }

    /// Side lengths of the enclosing index box `[-1, m_a + 2]`.
    pub fn box_dims(&self) -> [usize; 3] {
        self.m.map(|v| v + 4)
    }

    pub fn in_box(&self, alpha: MultiIndex) -> bool {
        (0..3).all(|a| alpha[a] >= -1 && alpha[a] <= self.m[a] as i64 + 2)
    }

    pub fn contains(&self, alpha: MultiIndex) -> bool {
        self.in_box(alpha) && (0..3).filter(|&a| is_extreme(alpha[a], self.m[a])).count() < 2
    }

    pub fn len(&self) -> usize {
        let [a, b, c] = self.m;
        (a + 4) * (b + 4) * (c + 4) - (4 * (a + 4) + 4 * (b + 2) + 4 * (c + 2))
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of `alpha` in the enclosing box, x fastest.
    #[inline]
    pub fn box_offset(&self, alpha: MultiIndex) -> usize {
        let d = self.box_dims();
        (alpha[0] + 1) as usize + d[0] * ((alpha[1] + 1) as usize + d[1] * (alpha[2] + 1) as usize)
    }

    /// Members of `A` in box order (x fastest).
    pub fn iter(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        let d = self.box_dims();
        (0..d[2] as i64)
            .flat_map(move |k| (0..d[1] as i64).flat_map(move |j| (0..d[0] as i64).map(move |i| [i - 1, j - 1, k - 1])))
            .filter(move |a| self.contains(*a))
    }
}

pub fn index_set(grid: &DomainGrid) -> IndexSet {
    IndexSet::new(grid)
}

/// Coordinate of data index `i` along an axis with `m` cubes.
#[inline]
pub fn data_coord(i: i64, m: usize, h: f64) -> f64 {
    if i <= 0 {
        0.0
    } else if i > m as i64 {
        m as f64 * h
    } else {
        (i as f64 - 0.5) * h
    }
}

/// The data point set `D = {M_beta}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataPoints {
    grid: DomainGrid,
}

impl DataPoints {
    pub fn new(grid: &DomainGrid) -> Self {
        Self { grid: *grid }
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    /// Points per axis, `m_a + 2`.
    pub fn dims(&self) -> [usize; 3] {
        self.grid.m().map(|v| v + 2)
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, beta: MultiIndex) -> bool {
        let m = self.grid.m();
        (0..3).all(|a| beta[a] >= 0 && beta[a] <= m[a] as i64 + 1)
    }

    /// Linear position of `beta`, x fastest.
    #[inline]
    pub fn offset(&self, beta: MultiIndex) -> Result<usize> {
        if !self.contains(beta) {
            return Err(Error::DataIndexOutOfRange(beta));
        }
        let d = self.dims();
        Ok(beta[0] as usize + d[0] * (beta[1] as usize + d[1] * beta[2] as usize))
    }

    pub fn index_of(&self, offset: usize) -> MultiIndex {
        let d = self.dims();
        [
            (offset % d[0]) as i64,
            ((offset / d[0]) % d[1]) as i64,
            (offset / (d[0] * d[1])) as i64,
        ]
    }

    pub fn point(&self, beta: MultiIndex) -> Point {
        let m = self.grid.m();
        let h = self.grid.h();
        std::array::from_fn(|a| data_coord(beta[a], m[a], h))
    }

    /// All data points in offset order.
    pub fn iter(&self) -> impl Iterator<Item = (MultiIndex, Point)> + '_ {
        (0..self.len()).map(|o| {
            let b = self.index_of(o);
            (b, self.point(b))
        })
    }
}

pub fn data_points(grid: &DomainGrid) -> DataPoints {
    DataPoints::new(grid)
}

/// Data index of the lattice point `((l - 1/2) h)` after clamping it into the domain.
#[inline]
pub fn project_lattice(l: MultiIndex, grid: &DomainGrid) -> MultiIndex {
    let m = grid.m();
    std::array::from_fn(|a| l[a].clamp(0, m[a] as i64 + 1))
}

/// Componentwise clamp of a point into the closed domain.
pub fn project_to_boundary(p: Point, grid: &DomainGrid) -> Point {
    let e = grid.extent();
    std::array::from_fn(|a| p[a].clamp(0.0, e[a]))
}

/// Element of the 48-element symmetry group of the box, mapping a canonical
/// frame to the actual one: canonical axis `c` becomes actual axis `perm[c]`,
/// after which actual axis `a` is mirrored when `reflect[a]` is set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SymmetryTransform {
    pub perm: [usize; 3],
    pub reflect: [bool; 3],
}

impl Default for SymmetryTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl SymmetryTransform {
    pub const IDENTITY: Self = Self { perm: [0, 1, 2], reflect: [false; 3] };

    pub fn new(perm: [usize; 3], reflect: [bool; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &p in &perm {
            if p > 2 || seen[p] {
                return Err(Error::InvalidGrid(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        Ok(Self { perm, reflect })
    }

    /// All 48 group elements.
    pub fn all() -> Vec<Self> {
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut out = Vec::with_capacity(48);
        for perm in PERMS {
            for bits in 0..8u8 {
                out.push(Self { perm, reflect: [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0] });
            }
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Cube counts of the canonical frame.
    pub fn canonical_m(&self, actual: [usize; 3]) -> [usize; 3] {
        self.perm.map(|p| actual[p])
    }

    /// Map an alpha or beta index from the canonical frame to the actual frame
    /// of a grid with cube counts `m` (both index families mirror as `m + 1 - i`).
    pub fn apply_index(&self, idx: MultiIndex, m: [usize; 3]) -> MultiIndex {
        let mut out = [0i64; 3];
        for c in 0..3 {
            out[self.perm[c]] = idx[c];
        }
        for a in 0..3 {
            if self.reflect[a] {
                out[a] = m[a] as i64 + 1 - out[a];
            }
        }
        out
    }

    /// Inverse of [`apply_index`](Self::apply_index).
    pub fn invert_index(&self, idx: MultiIndex, m: [usize; 3]) -> MultiIndex {
        let mut v = idx;
        for a in 0..3 {
            if self.reflect[a] {
                v[a] = m[a] as i64 + 1 - v[a];
            }
        }
        std::array::from_fn(|c| v[self.perm[c]])
    }

    /// Same action on physical points of a domain with extent `e` (actual frame).
    pub fn apply_point(&self, p: Point, extent: Point) -> Point {
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[self.perm[c]] = p[c];
        }
        for a in 0..3 {
            if self.reflect[a] {
                out[a] = extent[a] - out[a];
            }
        }
        out
    }
}

/// Canonical boundary class `(p, q, r)`, `p >= q >= r >= -1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct ClassKey(pub [i64; 3]);

impl ClassKey {
    /// Every class with its own functional, grouped by the smallest entry.
    pub const ALL: [ClassKey; 23] = [
        ClassKey([0, 0, -1]),
        ClassKey([1, 0, -1]),
        ClassKey([2, 0, -1]),
        ClassKey([1, 1, -1]),
        ClassKey([2, 1, -1]),
        ClassKey([2, 2, -1]),
        ClassKey([0, 0, 0]),
        ClassKey([1, 0, 0]),
        ClassKey([2, 0, 0]),
        ClassKey([3, 0, 0]),
        ClassKey([1, 1, 0]),
        ClassKey([2, 1, 0]),
        ClassKey([3, 1, 0]),
        ClassKey([2, 2, 0]),
        ClassKey([3, 2, 0]),
        ClassKey([4, 2, 0]),
        ClassKey([3, 3, 0]),
        ClassKey([1, 1, 1]),
        ClassKey([2, 1, 1]),
        ClassKey([3, 1, 1]),
        ClassKey([2, 2, 1]),
        ClassKey([2, 2, 2]),
        ClassKey([3, 3, 3]),
    ];

    pub const INTERIOR: ClassKey = ClassKey([3, 3, 3]);

    pub fn is_known(&self) -> bool {
        Self::ALL.contains(self)
    }

    /// The translate index this class is defined at (near the origin corner).
    pub fn alpha(&self) -> MultiIndex {
        self.0
    }

    /// Parse `"p,q,r"`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::Format(format!("expected a class key like `0,0,-1`, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut v = [0i64; 3];
        for (o, p) in v.iter_mut().zip(&parts) {
            *o = p.parse().map_err(|_| bad())?;
        }
        let key = ClassKey(v);
        if key.is_known() {
            Ok(key)
        } else {
            Err(Error::Format(format!("unknown class key ({s})")))
        }
    }
}

impl std::fmt::Display for ClassKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

/// Result of [`classify`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Classification {
    pub key: ClassKey,
    /// Canonical-frame translation applied to the key's functional.
    pub shift: [i64; 3],
    pub transform: SymmetryTransform,
}

impl Classification {
    /// Map a data index of the key's functional to the data index used for `alpha`.
    pub fn map_beta(&self, beta: MultiIndex, m: [usize; 3]) -> MultiIndex {
        let shifted = std::array::from_fn(|c| beta[c] + self.shift[c]);
        self.transform.apply_index(shifted, m)
    }
}

fn clamp_to_key(sorted: [i64; 3]) -> [i64; 3] {
    let [p, q, r] = sorted;
    match r {
        -1 => {
            let q = q.min(2);
            [p.min(2), q, -1]
        }
        0 => {
            let q = q.min(3);
            let pmax = if q == 2 { 4 } else { 3 };
            [p.min(pmax), q, 0]
        }
        1 => {
            let q = q.min(2);
            let pmax = if q == 1 { 3 } else { 2 };
            [p.min(pmax), q, 1]
        }
        2 => [2, 2, 2],
        _ => [3, 3, 3],
    }
}

/// Boundary class of `alpha` and the symmetry carrying the class functional to it.
pub fn classify(alpha: MultiIndex, grid: &DomainGrid) -> Result<Classification> {
    grid.require_qi()?;
    let set = IndexSet::new(grid);
    if !set.contains(alpha) {
        return Err(Error::NotInIndexSet(alpha));
    }
    let m = grid.m();
    let mut class = [0i64; 3];
    let mut reflect = [false; 3];
    for a in 0..3 {
        let mid = (m[a] as i64 + 2) / 2; // ceil((m + 1) / 2)
        if alpha[a] <= mid {
            class[a] = alpha[a];
        } else {
            class[a] = m[a] as i64 + 1 - alpha[a];
            reflect[a] = true;
        }
    }
    let mut perm = [0usize, 1, 2];
    // stable sort keeps the smaller axis first on ties
    perm.sort_by(|&x, &y| class[y].cmp(&class[x]));
    let sorted = perm.map(|a| class[a]);
    let key = clamp_to_key(sorted);
    debug_assert!(ClassKey(key).is_known(), "{key:?}");
    Ok(Classification {
        key: ClassKey(key),
        shift: std::array::from_fn(|c| sorted[c] - key[c]),
        transform: SymmetryTransform { perm, reflect },
    })
}
