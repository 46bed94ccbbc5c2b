//! Shared oracles for the integration tests.
//!
//! Everything here is independent of the library under test: closed forms
//! evaluated directly, statrs CDFs, and brute-force enumerations. Expected
//! values in the test files come from these, never from running softreg.

#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

// ---------------------------------------------------------------------------
// Closed-form moments
// ---------------------------------------------------------------------------

/// (a/(2|c|))·tanh(|c|/2), with the exact c=0 limit a/4.
pub fn pg_mean_ref(a: f64, c: f64) -> f64 {
    let c = c.abs();
    if c == 0.0 {
        a / 4.0
    } else {
        a / (2.0 * c) * (c / 2.0).tanh()
    }
}

/// (a/(2|c|³))·(sinh|c|−|c|)/(cosh|c|+1), with the exact c=0 limit a/24.
pub fn pg_var_ref(a: f64, c: f64) -> f64 {
    let c = c.abs();
    if c == 0.0 {
        a / 24.0
    } else {
        a / (2.0 * c.powi(3)) * (c.sinh() - c) / (c.cosh() + 1.0)
    }
}

/// E[#tables] for n customers at concentration r: Σ_{i=1..n} r/(r+i−1).
pub fn crt_mean_ref(n: u64, r: f64) -> f64 {
    (1..=n).map(|i| r / (r + (i - 1) as f64)).sum()
}

/// Mean of the zero-truncated Poisson: λ/(1−e^{−λ}).
pub fn trpois_mean_ref(lambda: f64) -> f64 {
    lambda / (-(-lambda).exp_m1())
}

/// Mean of the logarithmic distribution: −p/((1−p)·ln(1−p)).
pub fn logser_mean_ref(p: f64) -> f64 {
    -p / ((1.0 - p) * (1.0 - p).ln())
}

// ---------------------------------------------------------------------------
// Goodness-of-fit machinery
// ---------------------------------------------------------------------------

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Asymptotic KS p-value with Stephens' small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    kolmogorov_q(lambda)
}

/// Survival function of the Kolmogorov distribution: 2Σ (−1)^{j−1} e^{−2j²λ²}.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64).powi(2) * lambda * lambda).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Pearson chi-square GOF p-value. Cells with expected < min_expected are
/// pooled into a single remainder cell (and dof reduced accordingly).
pub fn chi_square_p(observed: &[f64], expected: &[f64], min_expected: f64) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let mut obs_kept = Vec::new();
    let mut exp_kept = Vec::new();
    let (mut pooled_o, mut pooled_e) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e >= min_expected {
            obs_kept.push(o);
            exp_kept.push(e);
        } else {
            pooled_o += o;
            pooled_e += e;
        }
    }
    if pooled_e > 0.0 {
        obs_kept.push(pooled_o);
        exp_kept.push(pooled_e);
    }
    let stat: f64 = obs_kept
        .iter()
        .zip(&exp_kept)
        .map(|(&o, &e)| (o - e) * (o - e) / e)
        .sum();
    let dof = obs_kept.len().saturating_sub(1).max(1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Composite Simpson rule on [a,b] with n (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

// ---------------------------------------------------------------------------
// CRT / negative-binomial joint enumeration
// ---------------------------------------------------------------------------

/// Unsigned Stirling numbers of the first kind, |s(m,l)| for m,l ≤ max_m.
/// Recurrence |s(m+1,l)| = m·|s(m,l)| + |s(m,l−1)|. Exact in f64 up to m≈30.
pub fn stirling_unsigned(max_m: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; max_m + 1]; max_m + 1];
    s[0][0] = 1.0;
    for m in 0..max_m {
        for l in 0..=m {
            let v = s[m][l];
            if v != 0.0 {
                s[m + 1][l] += m as f64 * v;
                s[m + 1][l + 1] += v;
            }
        }
    }
    s
}

/// Joint pmf p(m, l) of [m ~ NB(r, p), l ~ CRT(m, r)]:
/// (1−p)^r · p^m · |s(m,l)| · r^l / m!, for 0 ≤ l ≤ m ≤ m_max.
pub fn crt_nb_joint_pmf(r: f64, p: f64, m_max: usize) -> Vec<Vec<f64>> {
    let s = stirling_unsigned(m_max);
    let mut pmf = vec![vec![0.0; m_max + 1]; m_max + 1];
    for m in 0..=m_max {
        let log_common = r * (1.0 - p).ln() + m as f64 * p.ln() - ln_gamma(m as f64 + 1.0);
        for l in 0..=m {
            if s[m][l] != 0.0 {
                pmf[m][l] = (log_common + (l as f64) * r.ln() + s[m][l].ln()).exp();
            }
        }
    }
    pmf[0][0] = (1.0 - p).powf(r);
    pmf
}

/// NB(r, p) pmf via log-gamma (independent cross-check for the joint table).
pub fn nb_pmf_ref(r: f64, p: f64, m: u64) -> f64 {
    let m = m as f64;
    (ln_gamma(m + r) - ln_gamma(r) - ln_gamma(m + 1.0) + r * (1.0 - p).ln() + m * p.ln()).exp()
}

// ---------------------------------------------------------------------------
// Stack-softplus literal form
// ---------------------------------------------------------------------------

/// ln(1 + e^{z_{T+1}}·ln(1 + e^{z_T}·ln(... ln(1+e^{z_2})))) evaluated naively.
/// zs[0] is the innermost activation z_2. Only valid away from overflow.
pub fn stack_softplus_literal(zs: &[f64]) -> f64 {
    let mut w = 1.0;
    for &z in zs {
        w = (1.0 + z.exp() * w).ln();
    }
    w
}
