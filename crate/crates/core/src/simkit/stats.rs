//! Paired t-test, Wilcoxon signed-rank test and simple linear regression.
//! All p-values are two-sided.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

/// Sample size at or below which the Wilcoxon p-value is computed exactly.
pub const WILCOXON_EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("samples have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} observations, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("differences have zero variance")]
    ZeroVariance,
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("x values are all equal")]
    DegenerateX,
    #[error("input contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    /// Degrees of freedom, for t-based tests.
    pub df: Option<f64>,
    pub regression: Option<Regression>,
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

fn paired_differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    check_finite(a)?;
    check_finite(b)?;
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<StatReport, StatsError> {
    let d = paired_differences(a, b)?;
    let n = d.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: n });
    }
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let t = m / (var / n as f64).sqrt();
    let df = (n - 1) as f64;
    Ok(StatReport {
        statistic: t,
        p_value: t_two_sided(t, df),
        n,
        df: Some(df),
        regression: None,
    })
}

/// Signed ranks of the nonzero differences.
struct SignedRanks {
    /// Average ranks of |d|, in input order of the nonzero differences.
    ranks: Vec<f64>,
    positive: Vec<bool>,
    /// Sizes of tie groups (only groups larger than one).
    ties: Vec<usize>,
}

impl SignedRanks {
    fn new(diffs: &[f64]) -> Result<Self, StatsError> {
        let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
        if nonzero.is_empty() {
            return Err(StatsError::AllZeroDifferences);
        }
        let mut order: Vec<usize> = (0..nonzero.len()).collect();
        order.sort_by(|&i, &j| nonzero[i].abs().total_cmp(&nonzero[j].abs()));
        let mut ranks = vec![0.0; nonzero.len()];
        let mut ties = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && nonzero[order[end]].abs() == nonzero[order[start]].abs() {
                end += 1;
            }
            // Positions start+1 ..= end share their mean rank.
            let avg = (start + 1 + end) as f64 / 2.0;
            for &i in &order[start..end] {
                ranks[i] = avg;
            }
            if end - start > 1 {
                ties.push(end - start);
            }
            start = end;
        }
        Ok(Self {
            ranks,
            positive: nonzero.iter().map(|d| *d > 0.0).collect(),
            ties,
        })
    }

    fn n(&self) -> usize {
        self.ranks.len()
    }

    fn w_plus(&self) -> f64 {
        self.ranks.iter().zip(&self.positive).filter(|(_, p)| **p).map(|(r, _)| r).sum()
    }

    fn w_minus(&self) -> f64 {
        self.ranks.iter().zip(&self.positive).filter(|(_, p)| !**p).map(|(r, _)| r).sum()
    }

    fn statistic(&self) -> f64 {
        self.w_plus().min(self.w_minus())
    }
}

/// `2 · P(T ≤ W)` under the null, by dynamic programming over doubled
/// (integer) ranks. Exact with ties.
fn exact_p(sr: &SignedRanks, w: f64) -> f64 {
    let doubled: Vec<usize> = sr.ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let limit = (w * 2.0).round() as usize;
    let at_most: f64 = counts[..=limit.min(total)].iter().sum();
    let all = 2f64.powi(sr.n() as i32);
    (2.0 * at_most / all).min(1.0)
}

/// Normal approximation with tie and continuity corrections.
fn normal_p(sr: &SignedRanks, w: f64) -> f64 {
    let n = sr.n() as f64;
    let mu = n * (n + 1.0) / 4.0;
    let tie_term: f64 = sr.ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum::<f64>() / 48.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * std_normal.sf(z)).clamp(0.0, 1.0)
}

fn wilcoxon_report(a: &[f64], b: &[f64], exact: Option<bool>) -> Result<StatReport, StatsError> {
    let d = paired_differences(a, b)?;
    let sr = SignedRanks::new(&d)?;
    let w = sr.statistic();
    let use_exact = exact.unwrap_or(sr.n() <= WILCOXON_EXACT_MAX_N);
    let p_value = if use_exact { exact_p(&sr, w) } else { normal_p(&sr, w) };
    Ok(StatReport {
        statistic: w,
        p_value,
        n: sr.n(),
        df: None,
        regression: None,
    })
}

/// W = min(W⁺, W⁻) over nonzero differences; exact p-value up to
/// [`WILCOXON_EXACT_MAX_N`] nonzero pairs, normal approximation above.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<StatReport, StatsError> {
    wilcoxon_report(a, b, None)
}

pub fn wilcoxon_exact(a: &[f64], b: &[f64]) -> Result<StatReport, StatsError> {
    wilcoxon_report(a, b, Some(true))
}

pub fn wilcoxon_normal(a: &[f64], b: &[f64]) -> Result<StatReport, StatsError> {
    wilcoxon_report(a, b, Some(false))
}

/// Slope and intercept of the least-squares line; `None` when fewer than two
/// points or all x are equal.
pub fn least_squares(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let xm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - xm).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    Some((slope, ym - slope * xm))
}

pub fn ols_trend(points: &[(f64, f64)]) -> Result<StatReport, StatsError> {
    let n = points.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples { needed: 3, got: n });
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (slope, intercept) = least_squares(points).ok_or(StatsError::DegenerateX)?;
    let nf = n as f64;
    let xm = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - xm).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - ym).powi(2)).sum();
    let sse: f64 = points.iter().map(|p| (p.1 - (intercept + slope * p.0)).powi(2)).sum();
    let r_squared = if syy == 0.0 { 0.0 } else { (1.0 - sse / syy).clamp(0.0, 1.0) };
    let df = nf - 2.0;
    let se = (sse / df / sxx).sqrt();
    let (t, p_value) = if se == 0.0 {
        if slope == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(slope), 0.0)
        }
    } else {
        let t = slope / se;
        (t, t_two_sided(t, df))
    };
    Ok(StatReport {
        statistic: t,
        p_value,
        n,
        df: Some(df),
        regression: Some(Regression {
            slope,
            intercept,
            r_squared,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_test_hand_case() {
        let r = paired_t_test(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]).unwrap();
        assert!((r.statistic + 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.df, Some(2.0));
        // t = -√3 with 2 df: p = 1 - 1/√(1 + 1/3)... two-sided p = 1 - |t|/√(t²+2) = 1 - √3/√5
        assert!((r.p_value - (1.0 - (3.0f64 / 5.0).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn t_test_errors() {
        assert_eq!(paired_t_test(&[1.0, 2.0], &[1.0, 2.0]), Err(StatsError::ZeroVariance));
        assert_eq!(
            paired_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]),
            Err(StatsError::LengthMismatch { left: 3, right: 4 })
        );
        assert!(matches!(paired_t_test(&[1.0], &[2.0]), Err(StatsError::TooFewSamples { .. })));
    }

    #[test]
    fn wilcoxon_hand_cases() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        // 1 of 8 sign patterns has W⁻ = 0: p = 2/8.
        assert_eq!(r.p_value, 0.25);

        let r = wilcoxon_signed_rank(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(r.statistic, 1.5);
        assert_eq!(r.p_value, 1.0);

        assert_eq!(
            wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]),
            Err(StatsError::AllZeroDifferences)
        );
    }

    #[test]
    fn wilcoxon_drops_zero_differences() {
        let r = wilcoxon_signed_rank(&[1.0, 5.0, 2.0, 3.0], &[1.0, 4.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.n, 3);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn ols_hand_cases() {
        let r = ols_trend(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).unwrap();
        let reg = r.regression.unwrap();
        assert_eq!(reg.slope, 1.0);
        assert_eq!(reg.r_squared, 1.0);
        assert_eq!(r.p_value, 0.0);

        let r = ols_trend(&[(0.0, 5.0), (1.0, 5.0), (2.0, 5.0)]).unwrap();
        let reg = r.regression.unwrap();
        assert_eq!(reg.slope, 0.0);
        assert_eq!(reg.r_squared, 0.0);
        assert_eq!(r.p_value, 1.0);

        assert_eq!(
            ols_trend(&[(1.0, 0.0), (1.0, 1.0), (1.0, 2.0)]),
            Err(StatsError::DegenerateX)
        );
        assert!(matches!(ols_trend(&[(0.0, 0.0), (1.0, 1.0)]), Err(StatsError::TooFewSamples { .. })));
    }

    #[test]
    fn least_squares_two_points() {
        assert_eq!(least_squares(&[(0.0, 70.0), (2.0, 74.0)]), Some((2.0, 70.0)));
        assert_eq!(least_squares(&[(0.0, 70.0)]), None);
    }
}
