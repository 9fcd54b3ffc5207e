use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub w: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub p_value: f64,
    pub method: PMethod,
}

/// Average ranks of `x` (1-based), with ties sharing the mean rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in &idx[i..=j] {
            ranks[*k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided p from the null distribution of `W+` over all sign patterns of `ranks`.
pub fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    // average ranks are multiples of 1/2, so doubled ranks are integers
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let patterns = 2f64.powi(ranks.len() as i32);
    let w = (w_plus * 2.0).round() as usize;
    let le: f64 = counts[..=w].iter().sum::<f64>() / patterns;
    let ge: f64 = counts[w..].iter().sum::<f64>() / patterns;
    (2.0 * le.min(ge)).min(1.0)
}

/// Paired two-sided signed-rank test of `a - b`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = d.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!("{n} non-zero paired differences, need at least 5")));
    }
    let ranks = average_ranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let w_minus = (n * (n + 1)) as f64 / 2.0 - w_plus;
    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p(&ranks, w_plus), PMethod::Exact)
    } else {
        let nf = n as f64;
        let mut abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let mut ties = 0.0;
        let mut i = 0;
        while i < abs.len() {
            let j = abs[i..].iter().take_while(|x| **x == abs[i]).count();
            let t = j as f64;
            ties += t * t * t - t;
            i += j;
        }
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::standard();
        ((2.0 * (1.0 - normal.cdf(z))).min(1.0), PMethod::Normal)
    };
    Ok(WilcoxonResult {
        w: w_plus.min(w_minus),
        w_plus,
        w_minus,
        n,
        p_value,
        method,
    })
}

/// `min(1, p * m)` for each value.
pub fn bonferroni(p: &[f64], m: usize) -> Result<Vec<f64>> {
    if m < p.len() {
        return Err(Error::domain(format!("{} p values but only {m} comparisons", p.len())));
    }
    Ok(p.iter().map(|p| (p * m as f64).min(1.0)).collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Two-sided p by enumerating every sign pattern.
    pub(crate) fn enumerate_p(ranks: &[f64], w_plus: f64) -> f64 {
        let n = ranks.len();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if w <= w_plus + 1e-9 {
                le += 1;
            }
            if w >= w_plus - 1e-9 {
                ge += 1;
            }
        }
        let total = (1u64 << n) as f64;
        (2.0 * (le as f64 / total).min(ge as f64 / total)).min(1.0)
    }

    #[test]
    fn five_positive() {
        let r = wilcoxon_signed_rank(&[2.0; 5], &[1.0; 5]).unwrap();
        assert_eq!(r.p_value, 0.0625);
        assert_eq!((r.w_plus, r.w_minus, r.w), (15.0, 0.0, 0.0));
        assert_eq!(r.method, PMethod::Exact);
    }

    #[test]
    fn equal_samples_lack_data() {
        let a = [1.0, 2.0, 3.0, 1.0, 0.0, 2.0];
        assert!(matches!(wilcoxon_signed_rank(&a, &a), Err(Error::InsufficientData(_))));
        assert!(wilcoxon_signed_rank(&a, &a[..5]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn normal_mode_for_large_n() {
        let a: Vec<f64> = (0..40).map(|i| (i % 4) as f64).collect();
        let b: Vec<f64> = (0..40).map(|i| ((i + 1) % 4) as f64 * 0.5).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.method, PMethod::Normal);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        // strong shift is significant
        let c: Vec<f64> = b.iter().map(|x| x - 3.0).collect();
        assert!(wilcoxon_signed_rank(&b, &c).unwrap().p_value < 1e-6);
    }

    #[test]
    fn bonferroni_examples() {
        let adj = bonferroni(&[0.01, 0.5], 3).unwrap();
        assert!((adj[0] - 0.03).abs() < 1e-15);
        assert_eq!(adj[1], 1.0);
        assert!(bonferroni(&[0.1, 0.2], 1).is_err());
    }

    proptest! {
        #[test]
        fn exact_matches_enumeration(pairs in proptest::collection::vec((0i32..4, 0i32..4), 5..13)) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
            prop_assume!(d.len() >= 5);
            let r = wilcoxon_signed_rank(&a, &b).unwrap();
            let ranks = average_ranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
            prop_assert_eq!(r.p_value, enumerate_p(&ranks, r.w_plus));
        }

        #[test]
        fn bonferroni_never_lowers(p in proptest::collection::vec(0.0f64..1.0, 1..6), extra in 0usize..4) {
            let adj = bonferroni(&p, p.len() + extra).unwrap();
            for (a, r) in adj.iter().zip(&p) {
                prop_assert!(a >= r && *a <= 1.0);
            }
        }
    }
}
