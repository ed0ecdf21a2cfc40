//! Exact rational helpers shared by the stencil library, the simplex solver
//! and the box-spline table audit.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::{Error, Result};

pub type Rat = BigRational;

pub fn int(v: i64) -> Rat {
    Rat::from_integer(BigInt::from(v))
}

pub fn frac(p: i64, q: i64) -> Rat {
    Rat::new(BigInt::from(p), BigInt::from(q))
}

pub fn to_f64(r: &Rat) -> f64 {
    // numerator and denominator can exceed f64 range only for absurd inputs
    r.to_f64().unwrap_or_else(|| {
        r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
    })
}

/// Parse `"p"` or `"p/q"`.
pub fn parse(s: &str) -> Result<Rat> {
    let s = s.trim();
    let bad = || Error::Format(format!("not a rational number: `{s}`"));
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            Ok(Rat::new(p, q))
        }
        None => Ok(Rat::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

/// Canonical text form: `p/q` in lowest terms, or `p` for integers.
pub fn format(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Decimal text of the smallest number with `digits` significant figures
/// that is `>= r` (for `r > 0`), trailing zeros dropped.
pub fn ceil_sig(r: &Rat, digits: u32) -> String {
    if !r.is_positive() {
        return format(r);
    }
    let ten = int(10);
    // exponent e with 10^(e-1) <= r < 10^e
    let mut e: i32 = 0;
    let mut p = Rat::one();
    while &p <= r {
        p *= &ten;
        e += 1;
    }
    while &(&p / &ten) > r {
        p /= &ten;
        e -= 1;
    }
    let shift = digits as i32 - e;
    let scale = if shift >= 0 { ten.pow(shift) } else { Rat::one() / ten.pow(-shift) };
    let n = (r * &scale).ceil().to_integer();
    let mut text = if shift > 0 {
        let s = format!("{:0>width$}", n.to_string(), width = shift as usize + 1);
        let (a, b) = s.split_at(s.len() - shift as usize);
        format!("{a}.{b}")
    } else {
        (n * BigInt::from(10).pow((-shift) as u32)).to_string()
    };
    if text.contains('.') {
        text = text.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    text
}

/// Best rational approximation of `x` with denominator at most `max_den`
/// (continued-fraction convergents), accepted only within `tol`.
pub fn reconstruct(x: f64, max_den: i64, tol: f64) -> Option<Rat> {
    if !x.is_finite() {
        return None;
    }
    if x == 0.0 {
        return Some(Rat::zero());
    }
    let neg = x < 0.0;
    let ax = x.abs();
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut rest = ax;
    let mut best: Option<(i128, i128)> = None;
    for _ in 0..64 {
        let a = rest.floor();
        if a > 1e15 {
            break;
        }
        let a = a as i128;
        let h2 = a * h1 + h0;
        let k2 = a * k1 + k0;
        if k2 > max_den as i128 {
            break;
        }
        best = Some((h2, k2));
        if (h2 as f64 / k2 as f64 - ax).abs() <= tol {
            break;
        }
        let frac_part = rest - rest.floor();
        if frac_part < 1e-18 {
            break;
        }
        rest = 1.0 / frac_part;
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
    }
    let (p, q) = best?;
    if (p as f64 / q as f64 - ax).abs() > tol {
        return None;
    }
    let r = Rat::new(BigInt::from(p), BigInt::from(q));
    Some(if neg { -r } else { r })
}

pub fn abs_sum(v: &[Rat]) -> Rat {
    v.iter().fold(Rat::zero(), |acc, x| acc + x.abs())
}
