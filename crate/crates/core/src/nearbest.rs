//! Derivation of l1-minimal coefficient functionals.
//!
//! For a translate `alpha` and a radius `n`, the candidate data set is the
//! set of lattice points `((l - 1/2) h)` with `|l - alpha|_1 <= n`, clamped
//! into the domain. A functional `sum sigma(beta) f(M_beta)` is admissible if
//! it agrees with `(I - 5/24 h^2 Lap + 3/128 h^4 Lap^2) f (C_alpha)` for every
//! cubic `f`; among those we minimise `||sigma||_1` with the exact simplex
//! solver in [`crate::lp`].
//!
//! Everything is expressed in units of `h`, so the system does not depend on
//! `h`. Monomials are taken about `C_alpha`, which keeps the right-hand side
//! trivial: `1` for the constant, `-5/12` for each pure square, `0` otherwise.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};

use crate::domain::{ClassKey, IndexSet, SymmetryTransform};
use crate::lp::{self, LpStatus};
use crate::rational::{self, Rat};
use crate::{DomainGrid, Error, MultiIndex, Result};

/// Exponents of the 20 monomials spanning cubic polynomials.
pub const MONOMIALS: [[u32; 3]; 20] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [2, 0, 0],
    [0, 2, 0],
    [0, 0, 2],
    [1, 1, 0],
    [1, 0, 1],
    [0, 1, 1],
    [3, 0, 0],
    [0, 3, 0],
    [0, 0, 3],
    [2, 1, 0],
    [1, 2, 0],
    [2, 0, 1],
    [1, 0, 2],
    [0, 2, 1],
    [0, 1, 2],
    [1, 1, 1],
];

/// Right-hand side for the monomial `prod (x_a - C_a)^{e_a}` (units of `h`).
pub fn target(e: [u32; 3]) -> Rat {
    match e {
        [0, 0, 0] => rational::int(1),
        [2, 0, 0] | [0, 2, 0] | [0, 0, 2] => rational::frac(-5, 12),
        _ => rational::int(0),
    }
}

/// Twice the coordinate (units of `h`) of data index `b` on an axis with `m` cubes.
#[inline]
fn doubled_data(b: i64, m: usize) -> i64 {
    if b <= 0 {
        0
    } else if b > m as i64 {
        2 * m as i64
    } else {
        2 * b - 1
    }
}

fn data_from_doubled(d: i64, m: usize) -> Option<i64> {
    if d == 0 {
        Some(0)
    } else if d == 2 * m as i64 {
        Some(m as i64 + 1)
    } else if d % 2 != 0 && d > 0 && d < 2 * m as i64 {
        Some((d + 1) / 2)
    } else {
        None
    }
}

/// Value of the monomial `e` about `C_alpha` at `M_beta`, in units of `h`.
pub fn monomial_at(e: [u32; 3], alpha: MultiIndex, beta: MultiIndex, m: [usize; 3]) -> Rat {
    let mut num: i64 = 1;
    let mut deg = 0;
    for a in 0..3 {
        let d = doubled_data(beta[a], m[a]) - (2 * alpha[a] - 1);
        num *= d.pow(e[a]);
        deg += e[a];
    }
    rational::frac(num, 1 << deg)
}

/// Residuals `V sigma - b` of a functional for all 20 monomials; all zero iff
/// the functional is exact on cubics.
pub fn exactness_residual(alpha: MultiIndex, entries: &[(MultiIndex, Rat)], m: [usize; 3]) -> Vec<Rat> {
    MONOMIALS
        .iter()
        .map(|&e| {
            let mut s = -target(e);
            for (beta, w) in entries {
                s += monomial_at(e, alpha, *beta, m) * w;
            }
            s
        })
        .collect()
}

/// Clamped octahedral candidate set.
#[derive(Clone, Debug, PartialEq)]
pub struct OctahedronSet {
    pub alpha: MultiIndex,
    pub n: u32,
    /// Lattice points before projection (a centered octahedral number).
    pub lattice: Vec<MultiIndex>,
    /// Distinct data indices after projection, sorted with x fastest.
    pub points: Vec<MultiIndex>,
}

fn zyx(b: &MultiIndex) -> [i64; 3] {
    [b[2], b[1], b[0]]
}

pub fn octahedron(alpha: MultiIndex, n: u32, grid: &DomainGrid) -> Result<OctahedronSet> {
    if n == 0 {
        return Err(Error::InvalidGrid("octahedron radius must be at least 1".into()));
    }
    if !IndexSet::new(grid).contains(alpha) {
        return Err(Error::NotInIndexSet(alpha));
    }
    let r = n as i64;
    let mut lattice = Vec::new();
    for dz in -r..=r {
        for dy in -(r - dz.abs())..=(r - dz.abs()) {
            let rest = r - dz.abs() - dy.abs();
            for dx in -rest..=rest {
                lattice.push([alpha[0] + dx, alpha[1] + dy, alpha[2] + dz]);
            }
        }
    }
    let mut points: Vec<MultiIndex> = lattice.iter().map(|&l| crate::domain::project_lattice(l, grid)).collect();
    points.sort_by_key(zyx);
    points.dedup();
    Ok(OctahedronSet { alpha, n, lattice, points })
}

/// Centered octahedral number `(2n + 1)(2n^2 + 2n + 3) / 3`.
pub fn octahedral_number(n: u32) -> usize {
    let n = n as usize;
    (2 * n + 1) * (2 * n * n + 2 * n + 3) / 3
}

/// Signed permutation about a center, acting on relative vectors.
fn act(g: &SymmetryTransform, v: [i64; 3]) -> [i64; 3] {
    let mut w = [0i64; 3];
    for k in 0..3 {
        w[g.perm[k]] = v[k];
    }
    for a in 0..3 {
        if g.reflect[a] {
            w[a] = -w[a];
        }
    }
    w
}

fn doubled_point(beta: MultiIndex, m: [usize; 3]) -> [i64; 3] {
    std::array::from_fn(|a| doubled_data(beta[a], m[a]))
}

/// Symmetries about `C_alpha` that commute with the boundary projection on the
/// octahedron's lattice points.
pub fn stabilizer(oct: &OctahedronSet, grid: &DomainGrid) -> Vec<SymmetryTransform> {
    let m = grid.m();
    let c: [i64; 3] = oct.alpha.map(|v| 2 * v - 1);
    SymmetryTransform::all()
        .into_iter()
        .filter(|g| {
            oct.lattice.iter().all(|&l| {
                let delta = std::array::from_fn(|a| l[a] - oct.alpha[a]);
                let gd = act(g, delta);
                let gl = std::array::from_fn(|a| oct.alpha[a] + gd[a]);
                let lhs = doubled_point(crate::domain::project_lattice(gl, grid), m);
                let p = doubled_point(crate::domain::project_lattice(l, grid), m);
                let rel = std::array::from_fn(|a| p[a] - c[a]);
                let gr = act(g, rel);
                (0..3).all(|a| lhs[a] == c[a] + gr[a])
            })
        })
        .collect()
}

/// Linear system `V sigma = b` over orbit variables.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub alpha: MultiIndex,
    pub n: u32,
    pub m: [usize; 3],
    /// Monomial exponents labelling the rows.
    pub row_labels: Vec<[u32; 3]>,
    pub rows: Vec<Vec<Rat>>,
    pub rhs: Vec<Rat>,
    /// Data indices sharing each variable.
    pub columns: Vec<Vec<MultiIndex>>,
    /// Size of the symmetry group used for tying (1 without tying).
    pub group_order: usize,
}

impl ConstraintSystem {
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    /// Expand per-variable values to per-point weights.
    pub fn expand(&self, values: &[Rat]) -> Vec<(MultiIndex, Rat)> {
        let mut out: Vec<(MultiIndex, Rat)> = self
            .columns
            .iter()
            .zip(values)
            .flat_map(|(col, v)| col.iter().map(move |b| (*b, v.clone())))
            .collect();
        out.sort_by_key(|(b, _)| zyx(b));
        out
    }
}

fn transform_monomial(g: &SymmetryTransform, e: [u32; 3]) -> ([u32; 3], bool) {
    let exps = std::array::from_fn(|k| e[g.perm[k]]);
    let odd = (0..3).filter(|&a| g.reflect[a] && e[a] % 2 == 1).count() % 2 == 1;
    (exps, odd)
}

pub fn constraint_system(alpha: MultiIndex, n: u32, grid: &DomainGrid, tie_symmetry: bool) -> Result<ConstraintSystem> {
    let oct = octahedron(alpha, n, grid)?;
    let m = grid.m();
    let group = if tie_symmetry { stabilizer(&oct, grid) } else { vec![SymmetryTransform::IDENTITY] };

    let c: [i64; 3] = alpha.map(|v| 2 * v - 1);
    let mut assigned: BTreeMap<[i64; 3], usize> = BTreeMap::new();
    let mut columns: Vec<Vec<MultiIndex>> = Vec::new();
    for &beta in &oct.points {
        if assigned.contains_key(&zyx(&beta)) {
            continue;
        }
        let p = doubled_point(beta, m);
        let rel = std::array::from_fn(|a| p[a] - c[a]);
        let mut orbit = Vec::new();
        for g in &group {
            let gr = act(g, rel);
            let img: Option<Vec<i64>> = (0..3).map(|a| data_from_doubled(c[a] + gr[a], m[a])).collect();
            let img = img.ok_or_else(|| Error::Format(format!("symmetry image of {beta:?} is not a data point")))?;
            let b = [img[0], img[1], img[2]];
            if !orbit.contains(&b) {
                orbit.push(b);
            }
        }
        orbit.sort_by_key(zyx);
        let id = columns.len();
        for b in &orbit {
            assigned.insert(zyx(b), id);
        }
        columns.push(orbit);
    }

    let mut row_labels = Vec::new();
    let mut seen: Vec<[u32; 3]> = Vec::new();
    for &e in &MONOMIALS {
        if seen.contains(&e) {
            continue;
        }
        let mut annihilated = false;
        for g in &group {
            let (img, odd) = transform_monomial(g, e);
            if img == e && odd {
                annihilated = true;
            }
            if !seen.contains(&img) {
                seen.push(img);
            }
        }
        if annihilated {
            debug_assert!(target(e).is_zero());
            continue;
        }
        row_labels.push(e);
    }

    let rows = row_labels
        .iter()
        .map(|&e| {
            columns
                .iter()
                .map(|col| col.iter().fold(Rat::zero(), |acc, b| acc + monomial_at(e, alpha, *b, m)))
                .collect()
        })
        .collect();
    let rhs = row_labels.iter().map(|&e| target(e)).collect();
    Ok(ConstraintSystem { alpha, n, m, row_labels, rows, rhs, columns, group_order: group.len() })
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct L1Solution {
    pub status: SolveStatus,
    /// Nonzero weights, sorted with x fastest.
    pub weights: Vec<(MultiIndex, Rat)>,
    pub norm: Rat,
}

impl L1Solution {
    pub fn norm_f64(&self) -> Option<f64> {
        (self.status == SolveStatus::Optimal).then(|| rational::to_f64(&self.norm))
    }
}

pub fn minimize_l1(sys: &ConstraintSystem) -> L1Solution {
    let w: Vec<Rat> = sys.columns.iter().map(|c| rational::int(c.len() as i64)).collect();
    let sol = lp::minimize_weighted_l1(&sys.rows, &sys.rhs, &w);
    match sol.status {
        LpStatus::Optimal => {
            let weights: Vec<(MultiIndex, Rat)> = sys.expand(&sol.x).into_iter().filter(|(_, v)| !v.is_zero()).collect();
            let norm = weights.iter().fold(Rat::zero(), |acc, (_, v)| acc + v.abs());
            L1Solution { status: SolveStatus::Optimal, weights, norm }
        }
        // the objective is bounded below by zero, so anything else means no solution
        _ => L1Solution { status: SolveStatus::Infeasible, weights: vec![], norm: Rat::zero() },
    }
}

/// Grid on which a class's functional is derived: large enough that the
/// octahedron never reaches the far faces.
pub fn canonical_grid(key: ClassKey, n: u32) -> DomainGrid {
    let reach = key.0.iter().copied().max().unwrap_or(0) + n as i64 + 2;
    DomainGrid::uniform(reach.max(11) as usize, 1.0).expect("positive size")
}

/// Derive the l1-minimal functional of a class at radius `n`.
pub fn derive(key: ClassKey, n: u32, tie_symmetry: bool) -> Result<(ConstraintSystem, L1Solution)> {
    let grid = canonical_grid(key, n);
    let sys = constraint_system(key.alpha(), n, &grid, tie_symmetry)?;
    let sol = minimize_l1(&sys);
    Ok((sys, sol))
}

#[derive(Clone, Debug)]
pub struct NormRow {
    pub key: ClassKey,
    /// `(n, optimal norm)`; `None` marks an infeasible system.
    pub cells: Vec<(u32, Option<Rat>)>,
}

/// Optimal norms for every class and radius; independent solves run in parallel.
pub fn norm_table(classes: &[ClassKey], n_range: std::ops::RangeInclusive<u32>) -> Result<Vec<NormRow>> {
    let jobs: Vec<(ClassKey, u32)> = classes.iter().flat_map(|&k| n_range.clone().map(move |n| (k, n))).collect();
    let results = crate::par::map_slice(&jobs, |&(k, n)| {
        derive(k, n, true).map(|(_, s)| (s.status == SolveStatus::Optimal).then_some(s.norm))
    });
    let mut rows: Vec<NormRow> = classes.iter().map(|&key| NormRow { key, cells: vec![] }).collect();
    for ((k, n), r) in jobs.into_iter().zip(results) {
        let row = rows.iter_mut().find(|r| r.key == k).expect("class present");
        row.cells.push((n, r?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{frac, int};

    fn big() -> DomainGrid {
        DomainGrid::uniform(20, 1.0).unwrap()
    }

    #[test]
    fn octahedral_counts() {
        let g = big();
        for n in 1..=5 {
            let o = octahedron([10, 10, 10], n, &g).unwrap();
            assert_eq!(o.lattice.len(), octahedral_number(n));
            assert_eq!(o.points.len(), o.lattice.len());
        }
        assert_eq!((1..=5).map(octahedral_number).collect::<Vec<_>>(), vec![7, 25, 63, 129, 231]);
        let o = octahedron([3, 3, 3], 1, &g).unwrap();
        assert_eq!(o.points.len(), 7);
    }

    #[test]
    fn projected_points_are_data_points() {
        let g = DomainGrid::uniform(11, 1.0).unwrap();
        let o = octahedron([0, 0, -1], 4, &g).unwrap();
        assert_eq!(o.lattice.len(), 129);
        assert!(o.points.iter().all(|b| b.iter().all(|&v| (0..=12).contains(&v))));
        assert!(o.points.len() < 129);
    }

    #[test]
    fn row_counts() {
        let g = big();
        let s = constraint_system([0, 0, -1], 4, &g, true).unwrap();
        assert_eq!(s.row_count(), 13);
        assert_eq!(s.group_order, 2);
        let s = constraint_system([0, 0, -1], 4, &g, false).unwrap();
        assert_eq!(s.row_count(), 20);
        assert_eq!(s.rhs[0], int(1));
        let s = constraint_system([3, 3, 3], 2, &g, true).unwrap();
        assert_eq!(s.group_order, 48);
    }

    #[test]
    fn interior_classes() {
        let (_, s) = derive(ClassKey([3, 3, 3]), 2, true).unwrap();
        assert_eq!(s.norm, frac(13, 8));
        let (_, s) = derive(ClassKey([3, 3, 3]), 1, true).unwrap();
        assert_eq!(s.norm, frac(7, 2));
        let (_, s) = derive(ClassKey([2, 2, 2]), 1, false).unwrap();
        assert_eq!(s.norm, frac(7, 2));
        assert_eq!(s.weights.len(), 7);
    }

    #[test]
    fn tied_and_untied_optima_agree() {
        let (_, a) = derive(ClassKey([1, 1, 1]), 2, true).unwrap();
        let (_, b) = derive(ClassKey([1, 1, 1]), 2, false).unwrap();
        assert_eq!(a.norm, b.norm);
        assert_eq!(a.norm, frac(9, 2));
    }

    #[test]
    fn solutions_are_exact_and_scale_free() {
        let (sys, s) = derive(ClassKey([2, 1, 1]), 2, true).unwrap();
        assert!(exactness_residual(sys.alpha, &s.weights, sys.m).iter().all(Zero::is_zero));
        let g7 = DomainGrid::uniform(sys.m[0], 1.0 / 7.0).unwrap();
        let sys7 = constraint_system(sys.alpha, 2, &g7, true).unwrap();
        assert_eq!(sys7.rows, sys.rows);
        assert_eq!(sys7.rhs, sys.rhs);
    }

    #[test]
    fn corner_class_needs_radius_four() {
        for n in 1..=3 {
            let (_, s) = derive(ClassKey([0, 0, -1]), n, true).unwrap();
            assert_eq!(s.status, SolveStatus::Infeasible, "n = {n}");
        }
    }
}
