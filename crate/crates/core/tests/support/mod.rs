//! Reference implementations used as oracles. They share no code with the
//! crate: moments are summed in exact rational arithmetic, tail areas come
//! from a separately coded incomplete-beta continued fraction and libm's
//! erfc, and the exact Wilcoxon distribution is enumerated sign by sign.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

pub fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

fn rat_int(n: usize) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn f(r: &BigRational) -> f64 {
    r.to_f64().expect("representable")
}

/// Regularized incomplete beta I_x(a, b), continued fraction evaluated with
/// the modified Lentz method.
pub fn betainc(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // The fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise.
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - betainc(b, a, 1.0 - x);
    }
    const TINY: f64 = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let num_even = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        for num in [num_even, -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0))] {
            d = 1.0 + num * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + num / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;
        }
        if (d * c - 1.0).abs() < 1e-16 {
            break;
        }
    }
    ln_front.exp() * h / a
}

/// Two-sided Student-t tail from t² and degrees of freedom.
pub fn t_two_sided_from_sq(t_sq: &BigRational, df: usize) -> f64 {
    let dfr = rat_int(df);
    let x = &dfr / (&dfr + t_sq);
    betainc(df as f64 / 2.0, 0.5, f(&x))
}

#[derive(Debug, Clone, Copy)]
pub struct RefT {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

pub fn paired_t(a: &[f64], b: &[f64]) -> RefT {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    // The crate forms differences in f64; do the same so both see one input.
    let d: Vec<BigRational> = a.iter().zip(b).map(|(x, y)| rat(x - y)).collect();
    let nr = rat_int(n);
    let mean = d.iter().fold(BigRational::zero(), |s, v| s + v) / &nr;
    let ss = d
        .iter()
        .fold(BigRational::zero(), |s, v| s + (v - &mean) * (v - &mean));
    let var = ss / rat_int(n - 1);
    let t_sq = &mean * &mean * &nr / &var;
    let t = f(&t_sq).sqrt() * if mean.is_negative() { -1.0 } else { 1.0 };
    RefT {
        t,
        p: t_two_sided_from_sq(&t_sq, n - 1),
        df: n - 1,
    }
}

#[derive(Debug, Clone)]
pub struct RefWilcoxon {
    pub w: f64,
    pub n: usize,
    pub p_exact: f64,
    pub p_normal: f64,
}

/// Average ranks of |d| for the nonzero differences, doubled to integers.
fn doubled_ranks(d: &[f64]) -> (Vec<u64>, Vec<bool>, Vec<usize>) {
    let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let n = nz.len();
    let mut doubled = vec![0u64; n];
    let mut ties = Vec::new();
    // Rank by counting: rank = 1 + #smaller + (#equal - 1)/2.
    for i in 0..n {
        let smaller = nz.iter().filter(|v| v.abs() < nz[i].abs()).count() as u64;
        let equal = nz.iter().filter(|v| v.abs() == nz[i].abs()).count() as u64;
        doubled[i] = 2 * (1 + smaller) + (equal - 1);
    }
    let mut seen: Vec<f64> = Vec::new();
    for v in &nz {
        if !seen.contains(&v.abs()) {
            seen.push(v.abs());
            let c = nz.iter().filter(|u| u.abs() == v.abs()).count();
            if c > 1 {
                ties.push(c);
            }
        }
    }
    (doubled, nz.iter().map(|v| *v > 0.0).collect(), ties)
}

pub fn wilcoxon(a: &[f64], b: &[f64]) -> RefWilcoxon {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (ranks, positive, ties) = doubled_ranks(&d);
    let n = ranks.len();
    assert!(n > 0);
    let plus: u64 = ranks.iter().zip(&positive).filter(|(_, p)| **p).map(|(r, _)| r).sum();
    let minus: u64 = ranks.iter().zip(&positive).filter(|(_, p)| !**p).map(|(r, _)| r).sum();
    let w2 = plus.min(minus);

    let p_exact = if n <= 22 {
        let mut at_most = 0u64;
        for mask in 0u64..(1 << n) {
            let s: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if s <= w2 {
                at_most += 1;
            }
        }
        (2.0 * at_most as f64 / (1u64 << n) as f64).min(1.0)
    } else {
        f64::NAN
    };

    // Normal approximation: mean n(n+1)/4, variance n(n+1)(2n+1)/24 less
    // Σ(t³−t)/48 over tie groups, half-unit continuity correction.
    let nn = rat_int(n);
    let one = rat_int(1);
    let two = rat_int(2);
    let mu = &nn * (&nn + &one) / rat_int(4);
    let tie_sum = ties
        .iter()
        .fold(BigRational::zero(), |s, &t| s + rat_int(t * t * t - t));
    let var = &nn * (&nn + &one) * (&two * &nn + &one) / rat_int(24) - tie_sum / rat_int(48);
    let w = BigRational::new(BigInt::from(w2), BigInt::from(2));
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let mut dev = (&w - &mu).abs() - half;
    if dev.is_negative() {
        dev = BigRational::zero();
    }
    let z = f(&dev) / f(&var).sqrt();
    let p_normal = libm::erfc(z / std::f64::consts::SQRT_2).min(1.0);

    RefWilcoxon {
        w: w2 as f64 / 2.0,
        n,
        p_exact,
        p_normal,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RefOls {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub p: f64,
}

pub fn ols(points: &[(f64, f64)]) -> RefOls {
    let n = points.len();
    let nr = rat_int(n);
    let xs: Vec<BigRational> = points.iter().map(|p| rat(p.0)).collect();
    let ys: Vec<BigRational> = points.iter().map(|p| rat(p.1)).collect();
    let xm = xs.iter().fold(BigRational::zero(), |s, v| s + v) / &nr;
    let ym = ys.iter().fold(BigRational::zero(), |s, v| s + v) / &nr;
    let mut sxx = BigRational::zero();
    let mut sxy = BigRational::zero();
    let mut syy = BigRational::zero();
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - &xm) * (x - &xm);
        sxy += (x - &xm) * (y - &ym);
        syy += (y - &ym) * (y - &ym);
    }
    let slope = &sxy / &sxx;
    let intercept = &ym - &slope * &xm;
    let sse = &syy - &sxy * &sxy / &sxx;
    let r_squared = if syy.is_zero() {
        0.0
    } else {
        f(&(rat_int(1) - &sse / &syy))
    };
    let df = n - 2;
    let p = if sse.is_zero() {
        if slope.is_zero() {
            1.0
        } else {
            0.0
        }
    } else {
        let t_sq = &slope * &slope * &sxx * rat_int(df) / &sse;
        t_two_sided_from_sq(&t_sq, df)
    };
    RefOls {
        slope: f(&slope),
        intercept: f(&intercept),
        r_squared,
        p,
    }
}

/// Gauss-Jordan inverse with partial pivoting, row-major.
pub fn invert(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        for k in 0..n {
            m.swap(col * n + k, pivot * n + k);
            inv.swap(col * n + k, pivot * n + k);
        }
        let p = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = m[r * n + col];
                if factor != 0.0 {
                    for k in 0..n {
                        m[r * n + k] -= factor * m[col * n + k];
                        inv[r * n + k] -= factor * inv[col * n + k];
                    }
                }
            }
        }
    }
    inv
}

pub fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
