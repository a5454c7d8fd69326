use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{average_ranks, mean, normal_cdf, student_t_two_sided};

/// Largest number of nonzero differences handled by exact enumeration.
pub const EXACT_WILCOXON_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Pearson correlation of average ranks; two-sided p from the t approximation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let k = x.len();
    if k < 4 {
        return Err(Error::TooFewObservations { required: 4, found: k });
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let (mx, my) = (mean(&rx), mean(&ry));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVarianceInput);
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p_value = if rho.abs() == 1.0 {
        0.0
    } else {
        let t = rho * ((k as f64 - 2.0) / (1.0 - rho * rho)).sqrt();
        student_t_two_sided(t, k as f64 - 2.0)
    };
    Ok(SpearmanResult { rho, p_value, n: k })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Smaller of the positive and negative signed-rank sums.
    pub statistic: f64,
    pub p_value: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n_used: usize,
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test on paired samples `a - b`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(Error::AllDifferencesZero);
    }
    let k = diffs.len();
    if k < 5 {
        return Err(Error::TooFewObservations { required: 5, found: k });
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (k * (k + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let (p_value, exact) = if k <= EXACT_WILCOXON_LIMIT {
        (exact_p(&ranks, statistic), true)
    } else {
        (normal_p(&ranks, statistic), false)
    };
    Ok(WilcoxonResult {
        statistic,
        p_value,
        w_plus,
        w_minus,
        n_used: k,
        exact,
    })
}

/// Share of the `2^k` sign assignments whose smaller rank sum is at most
/// the observed one. Ranks are doubled so tied half-ranks stay integral.
fn exact_p(ranks: &[f64], statistic: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut ways = vec![0u64; total + 1];
    ways[0] = 1;
    for &r in &doubled {
        for s in (r..=total).rev() {
            ways[s] += ways[s - r];
        }
    }
    let w = (2.0 * statistic).round() as usize;
    let hits: u64 = (0..=total)
        .filter(|&s| s.min(total - s) <= w)
        .map(|s| ways[s])
        .sum();
    hits as f64 / 2f64.powi(ranks.len() as i32)
}

fn normal_p(ranks: &[f64], statistic: f64) -> f64 {
    let k = ranks.len() as f64;
    let mean = k * (k + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = k * (k + 1.0) * (2.0 * k + 1.0) / 24.0 - tie_term / 48.0;
    let z = (statistic - mean + 0.5) / var.sqrt();
    (2.0 * normal_cdf(z)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_reference_values() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman(&x, &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap().rho, 0.8);
        assert_eq!(spearman(&x, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap().rho, 1.0);
        assert_eq!(spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap().rho, -1.0);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Err(Error::TooFewObservations { .. })));
        assert!(matches!(spearman(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]), Err(Error::ZeroVarianceInput)));
    }

    #[test]
    fn spearman_p_value_matches_t_reference() {
        // rho = 0.8, k = 5: t = 0.8 sqrt(3 / 0.36) = 2.3094; two-sided p with 3 df = 0.10408
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        assert!((r.p_value - 0.104_088).abs() < 1e-5, "{}", r.p_value);
    }

    #[test]
    fn wilcoxon_five_positive_pairs() {
        let a = [2.0, 4.0, 6.0, 8.0, 10.0];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 0.0625);
        assert!(r.exact);
    }

    #[test]
    fn wilcoxon_zero_differences() {
        assert!(matches!(wilcoxon_signed_rank(&[1.0; 6], &[1.0; 6]), Err(Error::AllDifferencesZero)));
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 3.0, 5.0, 6.0]),
            Err(Error::TooFewObservations { .. })
        ));
    }

    #[test]
    fn wilcoxon_normal_branch_is_sane() {
        let a: Vec<f64> = (0..40).map(|i| i as f64 + if i % 5 == 0 { -0.5 } else { 1.0 }).collect();
        let b: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(!r.exact);
        assert!(r.p_value < 0.01);
        let balanced: Vec<f64> = (0..40).map(|i| i as f64 + if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(wilcoxon_signed_rank(&balanced, &b).unwrap().p_value > 0.5);
    }
}
