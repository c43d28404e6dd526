//! Shapiro-Wilk normality test and the Mann-Whitney U rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// `c[0] + c[1] x + c[2] x^2 + ...`
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapiroWilk {
    pub w: f64,
    /// Small values reject normality.
    pub p_value: f64,
    pub n: usize,
    /// Zero-range sample; `w` and `p_value` are reported as 1.
    pub degenerate: bool,
}

impl ShapiroWilk {
    pub fn rejects_normality(&self, alpha: f64) -> bool {
        !self.degenerate && self.p_value < alpha
    }
}

/// Royston's (1995) approximation of the W test, valid for 3 <= n <= 5000.
pub fn shapiro_wilk(scores: &[f64]) -> Result<ShapiroWilk> {
    let n = scores.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::validation(format!("Shapiro-Wilk needs 3..=5000 observations, got {n}")));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("Shapiro-Wilk input must be finite"));
    }
    let mut x = scores.to_vec();
    x.sort_by(f64::total_cmp);
    if x[n - 1] - x[0] < 1e-19 {
        return Ok(ShapiroWilk { w: 1.0, p_value: 1.0, n, degenerate: true });
    }

    let half = n / 2;
    let an = n as f64;
    let norm = std_normal();
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = 0.5f64.sqrt();
    } else {
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        // Expected order statistics of the lower half (negative).
        let m: Vec<f64> = (1..=half).map(|i| norm.inverse_cdf((i as f64 - 0.375) / (an + 0.25))).collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
            a[1] = a2;
            (2, fac)
        } else {
            (1, ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt())
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    let mean = x.iter().sum::<f64>() / an;
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let b: f64 = (0..half).map(|i| a[i] * (x[n - 1 - i] - x[i])).sum();
    let w = (b * b / ss).min(1.0);

    let p_value = if n == 3 {
        (6.0 / std::f64::consts::PI * (w.sqrt().asin() - std::f64::consts::PI / 3.0)).max(0.0)
    } else {
        let w1 = (1.0 - w).ln();
        let (y, m, s) = if n <= 11 {
            let gamma = poly(&[-2.273, 0.459], an);
            if w1 >= gamma {
                return Ok(ShapiroWilk { w, p_value: 1e-99, n, degenerate: false });
            }
            let m = poly(&[0.544, -0.39978, 0.025054, -6.714e-4], an);
            let s = poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp();
            (-(gamma - w1).ln(), m, s)
        } else {
            let ln_n = an.ln();
            let m = poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n);
            let s = poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp();
            (w1, m, s)
        };
        1.0 - norm.cdf((y - m) / s)
    };
    Ok(ShapiroWilk { w, p_value, n, degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_value: f64,
    /// Whether `p_value` came from full enumeration.
    pub exact: bool,
}

/// Largest combined sample size for which the null distribution is enumerated.
pub const EXACT_LIMIT: usize = 12;

/// Ranks 1..n with ties sharing their mean rank, doubled so they stay integral.
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, f64) {
    let n = pooled.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1; doubled mean = i + j + 2
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    (ranks, tie_term)
}

/// Visits every `k`-subset of `0..n` as a bitmask-free index list.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Mann-Whitney U test of `a` against `b`.
///
/// Two-sided unless `two_sided` is false, in which case the alternative is that `a`
/// tends to be larger than `b`. Exact enumeration for `a.len() + b.len() <= 12`
/// (ties handled by the conditional permutation distribution); otherwise the normal
/// approximation with tie and continuity corrections.
pub fn mann_whitney_u(a: &[f64], b: &[f64], two_sided: bool) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::validation("Mann-Whitney U needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::validation("Mann-Whitney U input must be finite"));
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_term) = doubled_midranks(&pooled);
    // Doubled U: 2 R_a - n_a (n_a + 1).
    let u2 = |rank_sum2: u64| rank_sum2 as i64 - (na * (na + 1)) as i64;
    let mean2 = (na * nb) as i64;
    let observed = u2(ranks[..na].iter().sum());
    let u = observed as f64 / 2.0;

    if n <= EXACT_LIMIT {
        let (mut hits, mut total) = (0u64, 0u64);
        for_each_combination(n, na, |idx| {
            let stat = u2(idx.iter().map(|&i| ranks[i]).sum());
            let extreme = if two_sided {
                (stat - mean2).abs() >= (observed - mean2).abs()
            } else {
                stat >= observed
            };
            hits += extreme as u64;
            total += 1;
        });
        return Ok(MannWhitney { u, p_value: hits as f64 / total as f64, exact: true });
    }

    let (naf, nbf, nf) = (na as f64, nb as f64, n as f64);
    let mu = naf * nbf / 2.0;
    let var = naf * nbf / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(MannWhitney { u, p_value: 1.0, exact: false });
    }
    let norm = std_normal();
    let p_value = if two_sided {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * (1.0 - norm.cdf(z))).min(1.0)
    } else {
        let z = (u - mu - 0.5) / var.sqrt();
        1.0 - norm.cdf(z)
    };
    Ok(MannWhitney { u, p_value, exact: false })
}
