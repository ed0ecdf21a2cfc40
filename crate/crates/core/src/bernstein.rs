//! Trivariate Bernstein–Bézier polynomials on a tetrahedron.
//!
//! Coefficients of a degree-`d` polynomial are stored against multi-indices
//! `(i, j, k, l)` with `i + j + k + l = d`, in descending lexicographic order.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub const QUARTIC_LEN: usize = 35;

const fn build_quartic() -> [[u8; 4]; 35] {
    let mut out = [[0u8; 4]; 35];
    let mut n = 0;
    let mut i = 4i32;
    while i >= 0 {
        let mut j = 4 - i;
        while j >= 0 {
            let mut k = 4 - i - j;
            while k >= 0 {
                out[n] = [i as u8, j as u8, k as u8, (4 - i - j - k) as u8];
                n += 1;
                k -= 1;
            }
            j -= 1;
        }
        i -= 1;
    }
    out
}

/// Quartic multi-indices in storage order.
pub static QUARTIC: [[u8; 4]; 35] = build_quartic();

/// Number of coefficients of a degree-`d` polynomial.
pub const fn dim(d: usize) -> usize {
    (d + 1) * (d + 2) * (d + 3) / 6
}

/// Storage position of `(i, j, k, d - i - j - k)`.
pub fn index(d: usize, i: usize, j: usize, k: usize) -> usize {
    debug_assert!(i + j + k <= d);
    let mut n = 0;
    for ip in (i + 1)..=d {
        let r = d - ip;
        n += (r + 1) * (r + 2) / 2;
    }
    for jp in (j + 1)..=(d - i) {
        n += d - i - jp + 1;
    }
    n + (d - i - j - k)
}

pub fn multi_indices(d: usize) -> Vec<[u8; 4]> {
    let mut out = Vec::with_capacity(dim(d));
    for i in (0..=d).rev() {
        for j in (0..=d - i).rev() {
            for k in (0..=d - i - j).rev() {
                out.push([i as u8, j as u8, k as u8, (d - i - j - k) as u8]);
            }
        }
    }
    out
}

const FACT: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];

/// All 35 quartic Bernstein basis polynomials at `lam`.
#[inline]
pub fn quartic_basis(lam: [f64; 4]) -> [f64; 35] {
    let mut pw = [[1.0f64; 5]; 4];
    for v in 0..4 {
        for e in 1..5 {
            pw[v][e] = pw[v][e - 1] * lam[v];
        }
    }
    let mut out = [0.0; 35];
    for (o, w) in out.iter_mut().zip(QUARTIC.iter()) {
        let c = 24.0 / (FACT[w[0] as usize] * FACT[w[1] as usize] * FACT[w[2] as usize] * FACT[w[3] as usize]);
        *o = c * pw[0][w[0] as usize] * pw[1][w[1] as usize] * pw[2][w[2] as usize] * pw[3][w[3] as usize];
    }
    out
}

/// For each cubic multi-index `w` (storage order), the quartic positions of `w + e_v`.
fn cubic_raise() -> &'static [[usize; 4]; 20] {
    static T: std::sync::OnceLock<[[usize; 4]; 20]> = std::sync::OnceLock::new();
    T.get_or_init(|| {
        let mut t = [[0; 4]; 20];
        for (n, w) in multi_indices(3).iter().enumerate() {
            let (i, j, k) = (w[0] as usize, w[1] as usize, w[2] as usize);
            t[n] = [index(4, i + 1, j, k), index(4, i, j + 1, k), index(4, i, j, k + 1), index(4, i, j, k)];
        }
        t
    })
}

/// The four degree-one coefficients left after three de Casteljau steps of a
/// quartic at `lam`. The derivative along barycentric increments `v` is
/// `4 * sum_v v_k * out_k`.
pub fn quartic_linear_stage(coefs: &[f64; QUARTIC_LEN], lam: [f64; 4]) -> [f64; 4] {
    let mut pw = [[1.0f64; 4]; 4];
    for v in 0..4 {
        for e in 1..4 {
            pw[v][e] = pw[v][e - 1] * lam[v];
        }
    }
    let mut out = [0.0; 4];
    for (n, w) in multi_indices_cubic().iter().enumerate() {
        let b = 6.0 / (FACT[w[0] as usize] * FACT[w[1] as usize] * FACT[w[2] as usize] * FACT[w[3] as usize])
            * pw[0][w[0] as usize]
            * pw[1][w[1] as usize]
            * pw[2][w[2] as usize]
            * pw[3][w[3] as usize];
        let r = &cubic_raise()[n];
        for v in 0..4 {
            out[v] += b * coefs[r[v]];
        }
    }
    out
}

fn multi_indices_cubic() -> &'static [[u8; 4]] {
    static T: std::sync::OnceLock<Vec<[u8; 4]>> = std::sync::OnceLock::new();
    T.get_or_init(|| multi_indices(3))
}

/// Polynomial in Bernstein–Bézier form on a fixed tetrahedron.
#[derive(Clone, Debug, PartialEq)]
pub struct BbPoly {
    degree: usize,
    coefs: Vec<f64>,
}

impl BbPoly {
    pub fn new(degree: usize, coefs: Vec<f64>) -> Self {
        assert_eq!(coefs.len(), dim(degree), "coefficient count does not match degree");
        Self { degree, coefs }
    }

    pub fn quartic(coefs: &[f64; 35]) -> Self {
        Self { degree: 4, coefs: coefs.to_vec() }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coefs(&self) -> &[f64] {
        &self.coefs
    }

    /// de Casteljau evaluation; `lam` need not lie in the simplex.
    pub fn eval(&self, lam: [f64; 4]) -> f64 {
        let mut c = self.coefs.clone();
        let mut d = self.degree;
        while d > 0 {
            let mut next = vec![0.0; dim(d - 1)];
            for (n, w) in multi_indices(d - 1).iter().enumerate() {
                let (i, j, k) = (w[0] as usize, w[1] as usize, w[2] as usize);
                next[n] = lam[0] * c[index(d, i + 1, j, k)]
                    + lam[1] * c[index(d, i, j + 1, k)]
                    + lam[2] * c[index(d, i, j, k + 1)]
                    + lam[3] * c[index(d, i, j, k)];
            }
            c = next;
            d -= 1;
        }
        c[0]
    }

    /// Derivative along a direction whose barycentric increments are `dir`
    /// (components sum to zero).
    pub fn directional(&self, dir: [f64; 4]) -> BbPoly {
        if self.degree == 0 {
            return BbPoly::new(0, vec![0.0]);
        }
        let d = self.degree;
        let coefs = multi_indices(d - 1)
            .iter()
            .map(|w| {
                let (i, j, k) = (w[0] as usize, w[1] as usize, w[2] as usize);
                d as f64
                    * (dir[0] * self.coefs[index(d, i + 1, j, k)]
                        + dir[1] * self.coefs[index(d, i, j + 1, k)]
                        + dir[2] * self.coefs[index(d, i, j, k + 1)]
                        + dir[3] * self.coefs[index(d, i, j, k)])
            })
            .collect();
        BbPoly::new(d - 1, coefs)
    }
}

/// LU-factored collocation system for quartic interpolation at 35 fixed
/// barycentric sample points.
pub struct QuarticInterpolator {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

impl QuarticInterpolator {
    pub fn new(samples: &[[f64; 4]]) -> Result<Self> {
        if samples.len() != QUARTIC_LEN {
            return Err(Error::Format(format!("need 35 samples, got {}", samples.len())));
        }
        let mut m = DMatrix::zeros(QUARTIC_LEN, QUARTIC_LEN);
        for (r, s) in samples.iter().enumerate() {
            for (c, v) in quartic_basis(*s).iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        let sv = m.clone().singular_values();
        let smin = sv.min();
        let condition = if smin > 0.0 { sv.max() / smin } else { f64::INFINITY };
        Ok(Self { lu: m.lu(), condition })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Bézier coefficients of the quartic taking `values` at the samples.
    pub fn solve(&self, values: &[f64]) -> [f64; 35] {
        let rhs = DVector::from_column_slice(values);
        let x = self.lu.solve(&rhs).expect("collocation matrix is regular");
        std::array::from_fn(|i| x[i])
    }
}
