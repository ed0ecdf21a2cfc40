//! The coefficient functional library and its instantiation over a grid.
//!
//! Each of the 23 boundary classes carries an exact rational stencil defined
//! at the class's own translate index near the origin corner. Any other
//! translate reuses the stencil of its class, translated along the axes that
//! were clamped and carried over by a box symmetry.

use std::sync::OnceLock;

use num_traits::{Signed, Zero};

use crate::domain::{classify, ClassKey, DataPoints};
use crate::nearbest::exactness_residual;
use crate::rational::{self, Rat};
use crate::{DomainGrid, Error, MultiIndex, Result};

type Terms = &'static [(&'static str, &'static [[i64; 3]])];

struct Row {
    key: [i64; 3],
    n: u32,
    norm: &'static str,
    terms: Terms,
}

const ROWS: &[Row] = &[
    Row {
        key: [0, 0, -1],
        n: 11,
        norm: "8.774",
        terms: &[
            ("5720029937968/1777075925625", &[[0, 0, 0]]),
            ("-17625172171/30540510000", &[[3, 0, 0], [0, 3, 0]]),
            ("5091473/125966750", &[[4, 4, 0]]),
            ("-49957799237/1496484990000", &[[11, 0, 0], [0, 11, 0]]),
            ("42683993/462735000", &[[8, 1, 0], [1, 8, 0]]),
            ("-51197831/3054051000", &[[6, 5, 0], [5, 6, 0]]),
            ("-323423/157500", &[[0, 0, 3]]),
            ("371/1800", &[[5, 0, 3], [0, 5, 3]]),
            ("-3/175", &[[3, 3, 4]]),
            ("-26/165", &[[4, 0, 6], [0, 4, 6]]),
            ("155/312", &[[1, 0, 7], [0, 1, 7]]),
            ("557/15000", &[[0, 0, 8]]),
            ("-6553/26600", &[[0, 0, 10]]),
        ],
    },
    Row {
        key: [1, 0, -1],
        n: 9,
        norm: "9.099",
        terms: &[
            ("17446153/20540520", &[[0, 0, 0]]),
            ("7677660701/3308104800", &[[1, 0, 0]]),
            ("2896225/6918912", &[[2, 0, 0]]),
            ("772241/5915669760", &[[10, 0, 0]]),
            ("-4139/9072", &[[0, 3, 0]]),
            ("-109793/453600", &[[2, 3, 0]]),
            ("3743/39312", &[[0, 7, 0]]),
            ("16889/157248", &[[1, 7, 0]]),
            ("3041/157248", &[[3, 7, 0]]),
            ("-473/5712", &[[1, 9, 0]]),
            ("-815/432", &[[0, 0, 2]]),
            ("-3997/4320", &[[2, 0, 2]]),
            ("1/12", &[[1, 3, 3]]),
            ("13/100", &[[2, 3, 3]]),
            ("13/42", &[[0, 2, 4]]),
            ("-53/270", &[[1, 3, 5]]),
            ("18103/39600", &[[0, 0, 6]]),
            ("805/3168", &[[2, 0, 6]]),
            ("59/13200", &[[3, 0, 6]]),
            ("-937/3600", &[[1, 0, 8]]),
        ],
    },
    Row {
        key: [2, 0, -1],
        n: 9,
        norm: "9.099",
        terms: &[
            ("722869/772200", &[[1, 0, 0], [3, 0, 0]]),
            ("78797/45900", &[[2, 0, 0]]),
            ("-15083/43200", &[[1, 3, 0], [3, 3, 0]]),
            ("277/2496", &[[1, 7, 0], [3, 7, 0]]),
            ("-473/5712", &[[2, 9, 0]]),
            ("-4049/2880", &[[1, 0, 2], [3, 0, 2]]),
            ("1859/43200", &[[1, 3, 3], [3, 3, 3]]),
            ("2749/21600", &[[2, 3, 3]]),
            ("853/8640", &[[1, 2, 4], [3, 2, 4]]),
            ("3389/30240", &[[2, 2, 4]]),
            ("-53/270", &[[2, 3, 5]]),
            ("3779/10560", &[[1, 0, 6], [3, 0, 6]]),
            ("-937/3600", &[[2, 0, 8]]),
        ],
    },
    Row {
        key: [1, 1, -1],
        n: 7,
        norm: "9.386",
        terms: &[
            ("101/2430", &[[1, 0, 0], [0, 1, 0]]),
            ("12995/4158", &[[1, 1, 0]]),
            ("101/34020", &[[8, 1, 0], [1, 8, 0]]),
            ("-538/675", &[[0, 0, 2]]),
            ("-7/54", &[[2, 0, 2], [0, 2, 2]]),
            ("-293/2700", &[[3, 0, 2], [0, 3, 2]]),
            ("-239/144", &[[1, 1, 2]]),
            ("-7/72", &[[2, 1, 2], [1, 2, 2]]),
            ("-199/5400", &[[3, 3, 2]]),
            ("641/972", &[[1, 0, 5], [0, 1, 5]]),
            ("641/1944", &[[2, 1, 5], [1, 2, 5]]),
            ("-181/176", &[[1, 1, 6]]),
        ],
    },
    Row {
        key: [2, 1, -1],
        n: 7,
        norm: "9.386",
        terms: &[
            ("1/156", &[[1, 0, 0], [3, 0, 0]]),
            ("881/1296", &[[1, 1, 0], [3, 1, 0]]),
            ("81/44", &[[2, 1, 0]]),
            ("1/1872", &[[1, 7, 0], [3, 7, 0]]),
            ("-43/72", &[[1, 0, 2], [3, 0, 2]]),
            ("-119/216", &[[1, 1, 2], [3, 1, 2]]),
            ("-13/48", &[[2, 1, 2]]),
            ("-43/144", &[[1, 2, 2], [3, 2, 2]]),
            ("7/12", &[[2, 0, 5]]),
            ("715/1296", &[[1, 1, 5], [3, 1, 5]]),
            ("7/24", &[[2, 2, 5]]),
            ("-181/176", &[[2, 1, 6]]),
        ],
    },
    Row {
        key: [2, 2, -1],
        n: 10,
        norm: "5.561",
        terms: &[
            ("1492/663", &[[2, 2, 0]]),
            ("-5/12", &[[1, 2, 3], [2, 1, 3], [3, 2, 3], [2, 3, 3]]),
            ("-19/96", &[[2, 2, 3]]),
            ("5/24", &[[1, 2, 7], [2, 1, 7], [3, 2, 7], [2, 3, 7]]),
            ("245/1248", &[[2, 2, 7]]),
            ("-113/272", &[[2, 2, 9]]),
        ],
    },
    Row {
        key: [0, 0, 0],
        n: 6,
        norm: "7.740",
        terms: &[
            ("174511/59400", &[[0, 0, 0]]),
            ("-1243/1350", &[[2, 0, 0], [0, 2, 0], [0, 0, 2]]),
            ("-43/990", &[[6, 0, 0], [0, 6, 0], [0, 0, 6]]),
            ("2987/28800", &[[2, 3, 0], [3, 2, 0], [3, 0, 2], [0, 3, 2], [2, 0, 3], [0, 2, 3]]),
            ("-11/75", &[[3, 3, 0], [3, 0, 3], [0, 3, 3]]),
            ("259/1920", &[[4, 1, 0], [1, 4, 0], [4, 0, 1], [0, 4, 1], [1, 0, 4], [0, 1, 4]]),
            ("-1/27", &[[2, 2, 2]]),
        ],
    },
    Row {
        key: [1, 0, 0],
        n: 4,
        norm: "7.649",
        terms: &[
            ("92/405", &[[0, 0, 0]]),
            ("1301/432", &[[1, 0, 0]]),
            ("13/108", &[[2, 0, 0]]),
            ("5/1296", &[[5, 0, 0]]),
            ("-155/216", &[[0, 1, 0], [0, 0, 1]]),
            ("-1/36", &[[0, 2, 0], [0, 0, 2]]),
            ("-25/54", &[[1, 2, 0], [1, 0, 2]]),
            ("-41/108", &[[2, 1, 0], [2, 0, 1]]),
            ("23/360", &[[0, 3, 0], [0, 0, 3]]),
            ("1/36", &[[2, 3, 0], [2, 0, 3]]),
            ("7/27", &[[0, 2, 1], [0, 1, 2]]),
            ("7/54", &[[2, 2, 1], [2, 1, 2]]),
            ("-4/27", &[[1, 2, 2]]),
        ],
    },
    Row {
        key: [2, 0, 0],
        n: 4,
        norm: "7.649",
        terms: &[
            ("106/495", &[[0, 0, 0]]),
            ("1115/432", &[[2, 0, 0]]),
            ("101/180", &[[3, 0, 0]]),
            ("53/7920", &[[6, 0, 0]]),
            ("-61/144", &[[1, 1, 0], [1, 0, 1]]),
            ("-97/144", &[[3, 1, 0], [3, 0, 1]]),
            ("-1/6", &[[1, 2, 0], [1, 0, 2]]),
            ("-35/108", &[[2, 2, 0], [2, 0, 2]]),
            ("17/240", &[[1, 3, 0], [1, 0, 3]]),
            ("1/48", &[[3, 3, 0], [3, 0, 3]]),
            ("7/36", &[[1, 2, 1], [3, 2, 1], [1, 1, 2], [3, 1, 2]]),
            ("-4/27", &[[2, 2, 2]]),
        ],
    },
    Row {
        key: [3, 0, 0],
        n: 3,
        norm: "9.945",
        terms: &[
            ("697/180", &[[3, 0, 0]]),
            ("1/24", &[[2, 0, 0], [4, 0, 0]]),
            ("-11/24", &[[2, 1, 0], [2, 0, 1], [4, 1, 0], [4, 0, 1]]),
            ("-77/72", &[[3, 1, 0], [3, 0, 1]]),
            ("-7/36", &[[3, 2, 0], [3, 0, 2]]),
            ("11/120", &[[3, 3, 0], [3, 0, 3]]),
            ("2/3", &[[2, 1, 1], [4, 1, 1]]),
            ("-1/18", &[[3, 2, 1], [3, 1, 2]]),
        ],
    },
    Row {
        key: [1, 1, 0],
        n: 3,
        norm: "5.508",
        terms: &[
            ("-16/33", &[[0, 0, 0]]),
            ("-14/99", &[[3, 0, 0], [0, 3, 0]]),
            ("38/15", &[[1, 1, 0]]),
            ("1/11", &[[2, 1, 0], [1, 2, 0]]),
            ("-4/99", &[[3, 2, 0], [2, 3, 0], [2, 0, 1], [0, 2, 1]]),
            ("-23/88", &[[1, 1, 1]]),
            ("-17/44", &[[2, 1, 1], [1, 2, 1]]),
            ("59/264", &[[3, 1, 1], [1, 3, 1]]),
            ("-4/99", &[[2, 2, 1]]),
            ("-1/4", &[[1, 1, 2]]),
            ("11/120", &[[1, 1, 3]]),
        ],
    },
    Row {
        key: [2, 1, 0],
        n: 3,
        norm: "5.108",
        terms: &[
            ("-188/945", &[[0, 0, 0]]),
            ("-8/63", &[[4, 0, 0]]),
            ("37/405", &[[0, 1, 0]]),
            ("1043/540", &[[2, 1, 0]]),
            ("11/360", &[[3, 1, 0]]),
            ("5/648", &[[5, 1, 0]]),
            ("43/108", &[[2, 2, 0]]),
            ("1/36", &[[4, 2, 0]]),
            ("-5/36", &[[1, 3, 0]]),
            ("-7/45", &[[3, 3, 0]]),
            ("-46/135", &[[2, 0, 1]]),
            ("5/63", &[[0, 1, 1]]),
            ("5/84", &[[4, 1, 1]]),
            ("-91/108", &[[2, 2, 1]]),
            ("121/360", &[[2, 3, 1]]),
            ("-1/4", &[[2, 1, 2]]),
            ("11/120", &[[2, 1, 3]]),
        ],
    },
    Row {
        key: [3, 1, 0],
        n: 3,
        norm: "5.048",
        terms: &[
            ("-29/216", &[[1, 0, 0], [5, 0, 0]]),
            ("-41/1080", &[[2, 0, 0], [4, 0, 0]]),
            ("29/384", &[[1, 1, 0], [5, 1, 0]]),
            ("1867/960", &[[3, 1, 0]]),
            ("29/72", &[[3, 2, 0]]),
            ("-23/160", &[[2, 3, 0], [4, 3, 0]]),
            ("-29/90", &[[3, 0, 1]]),
            ("5/96", &[[1, 1, 1], [5, 1, 1]]),
            ("-59/72", &[[3, 2, 1]]),
            ("79/240", &[[3, 3, 1]]),
            ("-1/4", &[[3, 1, 2]]),
            ("11/120", &[[3, 1, 3]]),
        ],
    },
    Row {
        key: [2, 2, 0],
        n: 3,
        norm: "4.129",
        terms: &[
            ("358/165", &[[2, 2, 0]]),
            ("-10/231", &[[1, 0, 0], [3, 0, 0], [0, 1, 0], [0, 3, 0]]),
            ("-5/154", &[[4, 1, 0], [4, 3, 0], [1, 4, 0], [3, 4, 0]]),
            ("-167/264", &[[2, 2, 1]]),
            ("-5/66", &[[3, 2, 1], [2, 3, 1]]),
            ("5/132", &[[4, 2, 1], [2, 4, 1]]),
            ("-21/44", &[[2, 2, 2]]),
            ("5/88", &[[1, 2, 2], [2, 1, 2], [3, 2, 2], [2, 3, 2]]),
            ("11/120", &[[2, 2, 3]]),
        ],
    },
    Row {
        key: [3, 2, 0],
        n: 3,
        norm: "4.028",
        terms: &[
            ("-460/12033", &[[2, 0, 0]]),
            ("-860/12033", &[[4, 0, 0]]),
            ("-25/1146", &[[1, 1, 0], [5, 3, 0]]),
            ("-135/2674", &[[2, 4, 0]]),
            ("6098/2865", &[[3, 2, 0]]),
            ("-175/18909", &[[6, 2, 0]]),
            ("-320/18909", &[[0, 2, 0]]),
            ("-85/2674", &[[4, 4, 0]]),
            ("-1009/1528", &[[3, 2, 1]]),
            ("-55/573", &[[3, 3, 1]]),
            ("55/1146", &[[3, 4, 1]]),
            ("-3409/6876", &[[3, 2, 2]]),
            ("245/4584", &[[3, 1, 2], [3, 3, 2]]),
            ("5/72", &[[2, 2, 2], [4, 2, 2]]),
            ("11/120", &[[3, 2, 3]]),
        ],
    },
    Row {
        key: [4, 2, 0],
        n: 3,
        norm: "3.994",
        terms: &[
            ("-5/84", &[[3, 0, 0], [5, 0, 0]]),
            ("193/90", &[[4, 2, 0]]),
            ("-5/144", &[[1, 2, 0], [7, 2, 0]]),
            ("-5/112", &[[3, 4, 0], [5, 4, 0]]),
            ("-73/96", &[[4, 2, 1]]),
            ("5/96", &[[2, 2, 1], [4, 4, 1], [6, 2, 1], [4, 1, 2], [4, 3, 2]]),
            ("-5/48", &[[4, 3, 1]]),
            ("-17/48", &[[4, 2, 2]]),
            ("11/120", &[[4, 2, 3]]),
        ],
    },
    Row {
        key: [3, 3, 0],
        n: 5,
        norm: "2.617",
        terms: &[
            ("85/54", &[[3, 3, 0]]),
            ("-55/1536", &[[1, 1, 1], [5, 1, 1], [1, 5, 1], [5, 5, 1]]),
            ("-85/144", &[[3, 3, 2]]),
            ("5/768", &[[3, 1, 3], [1, 3, 3], [5, 3, 3], [3, 5, 3]]),
            ("5/96", &[[3, 2, 4], [2, 3, 4], [4, 3, 4], [3, 4, 4]]),
            ("-259/3456", &[[3, 3, 5]]),
        ],
    },
    Row {
        key: [1, 1, 1],
        n: 6,
        norm: "1.730",
        terms: &[
            ("41/96", &[[1, 1, 1]]),
            ("5/18", &[[2, 1, 1], [1, 2, 1], [1, 1, 2]]),
            ("-35/288", &[[5, 1, 1], [1, 5, 1], [1, 1, 5]]),
            ("5/144", &[[7, 1, 1], [1, 7, 1], [1, 1, 7]]),
        ],
    },
    Row {
        key: [2, 1, 1],
        n: 2,
        norm: "3.75",
        terms: &[
            ("-4/9", &[[2, 0, 0]]),
            ("-2/9", &[[2, 2, 0], [2, 0, 2]]),
            ("-2/21", &[[0, 1, 1]]),
            ("55/24", &[[2, 1, 1]]),
            ("-5/168", &[[4, 1, 1]]),
            ("-1/12", &[[3, 1, 1], [2, 2, 1], [2, 1, 2]]),
            ("1/24", &[[2, 3, 1], [2, 1, 3]]),
            ("-1/9", &[[2, 2, 2]]),
        ],
    },
    Row {
        key: [3, 1, 1],
        n: 2,
        norm: "3.542",
        terms: &[
            ("-4/9", &[[3, 0, 0]]),
            ("-2/9", &[[3, 2, 0], [3, 0, 2]]),
            ("-5/96", &[[1, 1, 1], [5, 1, 1]]),
            ("35/16", &[[3, 1, 1]]),
            ("-1/12", &[[3, 2, 1], [3, 1, 2]]),
            ("1/24", &[[3, 3, 1], [3, 1, 3]]),
            ("-1/9", &[[3, 2, 2]]),
        ],
    },
    Row {
        key: [2, 2, 1],
        n: 3,
        norm: "2.370",
        terms: &[
            ("-1/7", &[[2, 2, 0]]),
            ("-1/12", &[[1, 1, 0], [3, 1, 0], [1, 3, 0], [3, 3, 0]]),
            ("13/8", &[[2, 2, 1]]),
            ("-1/24", &[[2, 1, 3], [1, 2, 3], [2, 2, 3], [3, 2, 3], [2, 3, 3]]),
            ("5/84", &[[2, 2, 4]]),
        ],
    },
    Row {
        key: [2, 2, 2],
        n: 1,
        norm: "3.5",
        terms: &[
            ("9/4", &[[2, 2, 2]]),
            ("-5/24", &[[2, 1, 2], [2, 3, 2], [1, 2, 2], [3, 2, 2], [2, 2, 1], [2, 2, 3]]),
        ],
    },
    Row {
        key: [3, 3, 3],
        n: 2,
        norm: "1.625",
        terms: &[
            ("21/16", &[[3, 3, 3]]),
            ("-5/96", &[[3, 1, 3], [3, 5, 3], [1, 3, 3], [5, 3, 3], [3, 3, 1], [3, 3, 5]]),
        ],
    },
];

/// Cube count of the grid used to check a class stencil in isolation.
const CHECK_GRID: usize = 24;

/// Exact coefficient functional of one class, at the class's own index.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    pub key: ClassKey,
    pub n: u32,
    /// Data indices and weights, sorted with x fastest.
    pub entries: Vec<(MultiIndex, Rat)>,
    /// Norm as listed alongside the functional (four significant figures).
    pub listed_norm: &'static str,
}

impl Stencil {
    pub fn norm(&self) -> Rat {
        self.entries.iter().fold(Rat::zero(), |acc, (_, w)| acc + w.abs())
    }

    pub fn norm_f64(&self) -> f64 {
        rational::to_f64(&self.norm())
    }

    pub fn weight_sum(&self) -> Rat {
        self.entries.iter().fold(Rat::zero(), |acc, (_, w)| acc + w)
    }

    /// Exactness residuals on cubics (all zero for a valid stencil).
    pub fn residual(&self) -> Vec<Rat> {
        exactness_residual(self.key.alpha(), &self.entries, [CHECK_GRID; 3])
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.residual();
        if let Some(pos) = r.iter().position(|v| !v.is_zero()) {
            return Err(Error::StencilValidation {
                key: self.key.0,
                reason: format!(
                    "not exact for monomial {:?}: residual {}",
                    crate::nearbest::MONOMIALS[pos],
                    rational::format(&r[pos])
                ),
            });
        }
        Ok(())
    }

    /// Largest max-norm distance, in grid steps, between `C_alpha` and a data point used.
    pub fn reach(&self) -> f64 {
        let m = [CHECK_GRID; 3];
        let dp = DataPoints::new(&DomainGrid::new(m, 1.0).expect("valid"));
        let c = self.key.alpha().map(|v| v as f64 - 0.5);
        self.entries
            .iter()
            .map(|(b, _)| {
                let p = dp.point(*b);
                (0..3).map(|a| (p[a] - c[a]).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

fn build_row(row: &Row) -> Result<Stencil> {
    let mut entries = Vec::new();
    for (w, betas) in row.terms {
        let w = rational::parse(w)?;
        for b in *betas {
            entries.push((*b, w.clone()));
        }
    }
    entries.sort_by_key(|(b, _)| [b[2], b[1], b[0]]);
    if entries.windows(2).any(|p| p[0].0 == p[1].0) {
        return Err(Error::StencilValidation { key: row.key, reason: "repeated data index".into() });
    }
    Ok(Stencil { key: ClassKey(row.key), n: row.n, entries, listed_norm: row.norm })
}

/// All class stencils, validated.
#[derive(Clone, Debug)]
pub struct StencilLibrary {
    stencils: Vec<Stencil>,
}

impl StencilLibrary {
    /// Parse the embedded tables and check every stencil for exactness.
    pub fn load() -> Result<Self> {
        let stencils = ROWS.iter().map(build_row).collect::<Result<Vec<_>>>()?;
        for s in &stencils {
            s.validate()?;
        }
        Ok(Self { stencils })
    }

    pub fn get(&self, key: ClassKey) -> Option<&Stencil> {
        self.stencils.iter().find(|s| s.key == key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Stencil> {
        self.stencils.iter()
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    /// `max ||sigma||_1` over the library, which bounds the operator norm.
    pub fn norm_bound(&self) -> Rat {
        self.stencils.iter().map(Stencil::norm).max().unwrap_or_else(Rat::zero)
    }

    /// JSON array `{key, n, l1, l1_exact, entries}`, in table order.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.stencils
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "key": s.key.0,
                        "n": s.n,
                        "l1": s.norm_f64(),
                        "l1_exact": rational::format(&s.norm()),
                        "entries": s.entries.iter().map(|(b, w)| serde_json::json!({
                            "beta": b,
                            "weight": rational::format(w),
                        })).collect::<Vec<_>>(),
                    })
                })
                .collect(),
        )
    }
}

/// The shared library, loaded and validated once.
pub fn library() -> Result<&'static StencilLibrary> {
    static LIB: OnceLock<std::result::Result<StencilLibrary, String>> = OnceLock::new();
    match LIB.get_or_init(|| StencilLibrary::load().map_err(|e| e.to_string())) {
        Ok(l) => Ok(l),
        Err(e) => Err(Error::StencilValidation { key: [0; 3], reason: e.clone() }),
    }
}

/// `norm_bound` of the shared library.
pub fn norm_bound(lib: &StencilLibrary) -> f64 {
    rational::to_f64(&lib.norm_bound())
}

/// A concrete coefficient functional `f -> sum w f(M_beta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Functional {
    pub alpha: MultiIndex,
    pub key: ClassKey,
    pub entries: Vec<(MultiIndex, Rat)>,
}

impl Functional {
    /// Weighted sum with weights rounded to `f64`.
    pub fn apply(&self, value: impl Fn(MultiIndex) -> Option<f64>) -> Result<f64> {
        let mut s = 0.0;
        for (b, w) in &self.entries {
            let v = value(*b).ok_or(Error::DataIndexOutOfRange(*b))?;
            s += rational::to_f64(w) * v;
        }
        Ok(s)
    }

    /// Same weights with every data index as a linear offset into a sample array.
    pub fn compile(&self, grid: &DomainGrid) -> Result<Vec<(usize, f64)>> {
        let dp = DataPoints::new(grid);
        self.entries.iter().map(|(b, w)| Ok((dp.offset(*b)?, rational::to_f64(w)))).collect()
    }
}

/// The functional used for translate `alpha` on `grid`.
pub fn instantiate(alpha: MultiIndex, grid: &DomainGrid, lib: &StencilLibrary) -> Result<Functional> {
    let class = classify(alpha, grid)?;
    let stencil = lib
        .get(class.key)
        .ok_or_else(|| Error::StencilValidation { key: class.key.0, reason: "missing from library".into() })?;
    let m = grid.m();
    let dp = DataPoints::new(grid);
    let mut entries = Vec::with_capacity(stencil.entries.len());
    for (b, w) in &stencil.entries {
        let beta = class.map_beta(*b, m);
        if !dp.contains(beta) {
            return Err(Error::DataIndexOutOfRange(beta));
        }
        entries.push((beta, w.clone()));
    }
    entries.sort_by_key(|(b, _)| [b[2], b[1], b[0]]);
    Ok(Functional { alpha, key: class.key, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{center, IndexSet, SymmetryTransform};
    use crate::rational::{frac, int};

    #[test]
    fn library_loads_and_validates() {
        let lib = library().unwrap();
        assert_eq!(lib.len(), 23);
        for s in lib.iter() {
            assert_eq!(s.weight_sum(), int(1), "{}", s.key);
            assert!(s.norm() >= int(1));
            assert!(s.reach() <= 11.0, "{}", s.key);
        }
    }

    #[test]
    fn interior_stencils() {
        let lib = library().unwrap();
        let s = lib.get(ClassKey([3, 3, 3])).unwrap();
        assert_eq!(s.entries.len(), 7);
        assert_eq!(s.norm(), frac(13, 8));
        assert!(s.entries.contains(&([3, 3, 3], frac(21, 16))));
        assert!(s.entries.contains(&([5, 3, 3], frac(-5, 96))));
        let s = lib.get(ClassKey([2, 2, 2])).unwrap();
        assert_eq!(s.norm(), frac(7, 2));
        assert!(s.entries.contains(&([2, 2, 2], frac(9, 4))));
    }

    #[test]
    fn bound_is_attained_by_face_class() {
        let lib = library().unwrap();
        let s = lib.get(ClassKey([3, 0, 0])).unwrap();
        assert_eq!(lib.norm_bound(), s.norm());
        assert_eq!(s.norm(), frac(179, 18));
    }

    #[test]
    fn broken_stencil_fails_validation() {
        let mut s = library().unwrap().get(ClassKey([3, 0, 0])).unwrap().clone();
        s.entries[0].1 += frac(1, 1000);
        assert!(matches!(s.validate(), Err(Error::StencilValidation { .. })));
    }

    #[test]
    fn instantiate_examples() {
        let g = DomainGrid::uniform(11, 1.0).unwrap();
        let lib = library().unwrap();
        let f = instantiate([3, 3, 3], &g, lib).unwrap();
        let mut betas: Vec<_> = f.entries.iter().map(|e| e.0).collect();
        betas.sort();
        let mut want = vec![[3, 3, 3], [1, 3, 3], [5, 3, 3], [3, 1, 3], [3, 5, 3], [3, 3, 1], [3, 3, 5]];
        want.sort();
        assert_eq!(betas, want);

        let f = instantiate([9, 9, 9], &g, lib).unwrap();
        assert!(f.entries.iter().any(|e| e.0 == [9, 9, 9] && e.1 == frac(21, 16)));
        assert!(f.entries.iter().any(|e| e.0 == [7, 9, 9]));

        let f = instantiate([7, 0, 0], &g, lib).unwrap();
        assert_eq!(f.key, ClassKey([3, 0, 0]));
        assert!(f.entries.iter().any(|e| e.0 == [7, 0, 0] && e.1 == frac(697, 180)));
    }

    #[test]
    fn apply_examples() {
        let g = DomainGrid::uniform(11, 1.0).unwrap();
        let lib = library().unwrap();
        let dp = DataPoints::new(&g);
        let f = instantiate([3, 3, 3], &g, lib).unwrap();
        assert!((f.apply(|_| Some(1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((f.apply(|b| Some(dp.point(b)[0])).unwrap() - 2.5).abs() < 1e-14);
        let f = instantiate([3, 0, 0], &g, lib).unwrap();
        assert!((f.apply(|_| Some(1.0)).unwrap() - 1.0).abs() < 1e-14);
        assert!(f.apply(|_| None).is_err());
    }

    /// The central check: every instantiated functional reproduces the
    /// differential operator on all cubic monomials, exactly.
    #[test]
    fn every_translate_is_exact_on_cubics() {
        for m in [[11, 11, 11], [12, 13, 14]] {
            let g = DomainGrid::new(m, 1.0).unwrap();
            let lib = library().unwrap();
            for alpha in IndexSet::new(&g).iter() {
                let f = instantiate(alpha, &g, lib).unwrap();
                let r = exactness_residual(alpha, &f.entries, m);
                assert!(r.iter().all(Zero::is_zero), "alpha {alpha:?} class {}", f.key);
                let c = center(alpha, &g);
                let dp = DataPoints::new(&g);
                for (b, _) in &f.entries {
                    let p = dp.point(*b);
                    assert!((0..3).all(|a| (p[a] - c[a]).abs() <= 11.0));
                }
            }
        }
    }

    #[test]
    fn reflection_coherence() {
        let g = DomainGrid::uniform(11, 1.0).unwrap();
        let lib = library().unwrap();
        let m = g.m();
        for t in SymmetryTransform::all() {
            for alpha in IndexSet::new(&g).iter().step_by(7) {
                let ta = t.apply_index(alpha, m);
                let mut mapped: Vec<_> =
                    instantiate(alpha, &g, lib).unwrap().entries.into_iter().map(|(b, w)| (t.apply_index(b, m), w)).collect();
                mapped.sort_by_key(|(b, _)| [b[2], b[1], b[0]]);
                assert_eq!(instantiate(ta, &g, lib).unwrap().entries, mapped, "{alpha:?} {t:?}");
            }
        }
    }

    #[test]
    fn json_dump_is_stable() {
        let lib = library().unwrap();
        let a = serde_json::to_string(&lib.to_json()).unwrap();
        assert_eq!(a, serde_json::to_string(&StencilLibrary::load().unwrap().to_json()).unwrap());
        assert!(a.contains("\"l1_exact\":\"13/8\""));
    }
}
