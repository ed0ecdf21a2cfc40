//! Exact-rational linear programming: `min c^T x` subject to `A x = b`, `x >= 0`.
//!
//! Two-phase revised simplex with an explicit basis inverse and Bland's
//! rule for both the entering and the leaving variable, so degenerate
//! problems terminate.

use num_traits::{One, Signed, Zero};

use crate::rational::Rat;

#[derive(Clone, Debug, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values (empty unless optimal).
    pub x: Vec<Rat>,
    pub objective: Rat,
    pub pivots: usize,
}

/// Dense problem in equality form.
#[derive(Clone, Debug)]
pub struct Problem {
    pub a: Vec<Vec<Rat>>,
    pub b: Vec<Rat>,
    pub c: Vec<Rat>,
}

struct Tableau {
    /// Column-major constraint matrix including artificial columns.
    cols: Vec<Vec<Rat>>,
    binv: Vec<Vec<Rat>>,
    basis: Vec<usize>,
    xb: Vec<Rat>,
    pivots: usize,
}

impl Tableau {
    fn rows(&self) -> usize {
        self.basis.len()
    }

    /// `B^-1 A_j`.
    fn ftran(&self, j: usize) -> Vec<Rat> {
        let col = &self.cols[j];
        self.binv
            .iter()
            .map(|row| {
                row.iter()
                    .zip(col)
                    .filter(|(_, v)| !v.is_zero())
                    .fold(Rat::zero(), |acc, (r, v)| acc + r * v)
            })
            .collect()
    }

    /// Simplex multipliers `y = c_B^T B^-1`.
    fn duals(&self, cost: &[Rat]) -> Vec<Rat> {
        let m = self.rows();
        let mut y = vec![Rat::zero(); m];
        for (r, &bj) in self.basis.iter().enumerate() {
            let cb = &cost[bj];
            if cb.is_zero() {
                continue;
            }
            for (yk, v) in y.iter_mut().zip(&self.binv[r]) {
                if !v.is_zero() {
                    *yk += cb * v;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, cost: &[Rat], y: &[Rat]) -> Rat {
        let mut d = cost[j].clone();
        for (yk, v) in y.iter().zip(&self.cols[j]) {
            if !v.is_zero() && !yk.is_zero() {
                d -= yk * v;
            }
        }
        d
    }

    fn pivot(&mut self, leave_row: usize, enter: usize, dir: &[Rat]) {
        let m = self.rows();
        let piv = dir[leave_row].clone();
        let prow: Vec<Rat> = self.binv[leave_row].iter().map(|v| v / &piv).collect();
        let theta = &self.xb[leave_row] / &piv;
        for r in 0..m {
            if r == leave_row || dir[r].is_zero() {
                continue;
            }
            let f = dir[r].clone();
            for (dst, p) in self.binv[r].iter_mut().zip(&prow) {
                if !p.is_zero() {
                    *dst -= &f * p;
                }
            }
            let dx = &f * &theta;
            self.xb[r] -= dx;
        }
        self.binv[leave_row] = prow;
        self.xb[leave_row] = theta;
        self.basis[leave_row] = enter;
        self.pivots += 1;
    }

    /// Minimise `cost` over the columns marked `allowed`. Returns false if unbounded.
    fn optimise(&mut self, cost: &[Rat], allowed: &[bool]) -> bool {
        loop {
            let y = self.duals(cost);
            let mut in_basis = vec![false; self.cols.len()];
            for &bj in &self.basis {
                in_basis[bj] = true;
            }
            // Bland: smallest index with negative reduced cost
            let enter = (0..self.cols.len())
                .filter(|&j| allowed[j] && !in_basis[j])
                .find(|&j| self.reduced_cost(j, cost, &y).is_negative());
            let Some(enter) = enter else {
                return true;
            };
            let dir = self.ftran(enter);
            let mut best: Option<(Rat, usize)> = None;
            for r in 0..self.rows() {
                if !dir[r].is_positive() {
                    continue;
                }
                let ratio = &self.xb[r] / &dir[r];
                let better = match &best {
                    None => true,
                    Some((br, brow)) => ratio < *br || (ratio == *br && self.basis[r] < self.basis[*brow]),
                };
                if better {
                    best = Some((ratio, r));
                }
            }
            let Some((_, row)) = best else {
                return false;
            };
            self.pivot(row, enter, &dir);
        }
    }
}

/// Solve with exact arithmetic.
pub fn solve(p: &Problem) -> LpSolution {
    let m = p.b.len();
    let n = p.c.len();
    assert!(p.a.len() == m && p.a.iter().all(|r| r.len() == n), "constraint matrix shape");

    // rows with negative right-hand side are negated so artificials start feasible
    let sign: Vec<bool> = p.b.iter().map(|v| v.is_negative()).collect();
    let mut cols: Vec<Vec<Rat>> = (0..n)
        .map(|j| (0..m).map(|i| if sign[i] { -&p.a[i][j] } else { p.a[i][j].clone() }).collect())
        .collect();
    for i in 0..m {
        let mut e = vec![Rat::zero(); m];
        e[i] = Rat::one();
        cols.push(e);
    }
    let xb: Vec<Rat> = p.b.iter().map(|v| v.abs()).collect();
    let binv = (0..m)
        .map(|i| (0..m).map(|k| if i == k { Rat::one() } else { Rat::zero() }).collect())
        .collect();
    let mut t = Tableau { cols, binv, basis: (n..n + m).collect(), xb, pivots: 0 };

    let total = n + m;
    let phase1: Vec<Rat> = (0..total).map(|j| if j >= n { Rat::one() } else { Rat::zero() }).collect();
    let all = vec![true; total];
    t.optimise(&phase1, &all);
    let infeas: Rat = t.xb.iter().zip(&t.basis).filter(|(_, &b)| b >= n).map(|(v, _)| v.clone()).sum();
    if infeas.is_positive() {
        return LpSolution { status: LpStatus::Infeasible, x: vec![], objective: Rat::zero(), pivots: t.pivots };
    }

    // drive zero-level artificials out where possible; the rest sit on redundant rows
    for r in 0..m {
        if t.basis[r] < n {
            continue;
        }
        let mut in_basis = vec![false; total];
        for &bj in &t.basis {
            in_basis[bj] = true;
        }
        if let Some(j) = (0..n).filter(|&j| !in_basis[j]).find(|&j| !t.ftran(j)[r].is_zero()) {
            let dir = t.ftran(j);
            t.pivot(r, j, &dir);
        }
    }

    let mut cost = p.c.clone();
    cost.extend((0..m).map(|_| Rat::zero()));
    let allowed: Vec<bool> = (0..total).map(|j| j < n).collect();
    if !t.optimise(&cost, &allowed) {
        return LpSolution { status: LpStatus::Unbounded, x: vec![], objective: Rat::zero(), pivots: t.pivots };
    }
    let mut x = vec![Rat::zero(); n];
    for (r, &bj) in t.basis.iter().enumerate() {
        if bj < n {
            x[bj] = t.xb[r].clone();
        }
    }
    let objective = x.iter().zip(&p.c).fold(Rat::zero(), |acc, (xi, ci)| acc + xi * ci);
    LpSolution { status: LpStatus::Optimal, x, objective, pivots: t.pivots }
}

/// Minimise `sum_j w_j |s_j|` subject to `A s = b` by splitting `s = u - v`.
pub fn minimize_weighted_l1(a: &[Vec<Rat>], b: &[Rat], w: &[Rat]) -> LpSolution {
    let n = w.len();
    let rows = a
        .iter()
        .map(|row| row.iter().cloned().chain(row.iter().map(|v| -v)).collect())
        .collect();
    let c = w.iter().cloned().chain(w.iter().cloned()).collect();
    let sol = solve(&Problem { a: rows, b: b.to_vec(), c });
    if sol.status != LpStatus::Optimal {
        return sol;
    }
    let x = (0..n).map(|j| &sol.x[j] - &sol.x[n + j]).collect();
    LpSolution { x, ..sol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{frac, int};

    fn ints(v: &[i64]) -> Vec<Rat> {
        v.iter().map(|&x| int(x)).collect()
    }

    #[test]
    fn small_optimum() {
        // min -x - y  s.t. x + 2y + s1 = 4, 3x + y + s2 = 6
        let p = Problem {
            a: vec![ints(&[1, 2, 1, 0]), ints(&[3, 1, 0, 1])],
            b: ints(&[4, 6]),
            c: ints(&[-1, -1, 0, 0]),
        };
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x[0], frac(8, 5));
        assert_eq!(s.x[1], frac(6, 5));
        assert_eq!(s.objective, frac(-14, 5));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let p = Problem { a: vec![ints(&[1, 1]), ints(&[1, 1])], b: ints(&[1, 2]), c: ints(&[1, 1]) };
        assert_eq!(solve(&p).status, LpStatus::Infeasible);
        let p = Problem { a: vec![ints(&[1, -1])], b: ints(&[1]), c: ints(&[0, -1]) };
        assert_eq!(solve(&p).status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let p = Problem {
            a: vec![ints(&[1, 1, 0]), ints(&[2, 2, 0]), ints(&[0, 1, 1])],
            b: ints(&[2, 4, 3]),
            c: ints(&[1, 1, 1]),
        };
        let s = solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.objective, int(3));
    }

    #[test]
    fn weighted_l1_picks_sparse_solution() {
        // s0 + s1 + s2 = 1, s0 - s2 = 0 ; min |s0| + |s1| + |s2| -> s1 = 1
        let a = vec![ints(&[1, 1, 1]), ints(&[1, 0, -1])];
        let s = minimize_weighted_l1(&a, &ints(&[1, 0]), &ints(&[1, 1, 1]));
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.objective, int(1));
        assert_eq!(s.x, ints(&[0, 1, 0]));
        // negative entries are reachable
        let s = minimize_weighted_l1(&[ints(&[1, 2])], &ints(&[-4]), &ints(&[1, 1]));
        assert_eq!(s.x, ints(&[0, -2]));
    }
}
