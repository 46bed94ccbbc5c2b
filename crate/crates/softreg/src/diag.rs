//! Built-in statistical self-tests for the augmentation samplers: moment
//! checks for the Polya-Gamma and count samplers, and a chi-square check
//! that the CRT/SumLog compound agrees with its negative-binomial joint.

use crate::error::{Error, Result};
use crate::rng::{pg_mean, pg_variance, PGParams, RngStream, PG_TRUNCATION_DEFAULT};
use crate::stats::{chi_square_test, ln_gamma};

pub struct DiagReport {
    pub suite: String,
    pub lines: Vec<String>,
    pub passed: bool,
}

pub fn run_suite(suite: &str, seed: u64) -> Result<DiagReport> {
    match suite {
        "pg" => Ok(pg_suite(seed)),
        "crt" => Ok(crt_suite(seed)),
        "trpois" => Ok(trpois_suite(seed)),
        "duality" => Ok(duality_suite(seed)),
        other => Err(Error::Parameter(format!(
            "unknown diagnostic suite '{other}' (pg|crt|trpois|duality)"
        ))),
    }
}

fn sample_moments(draws: &mut dyn FnMut() -> f64, n: usize) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n {
        let x = draws();
        sum += x;
        sumsq += x * x;
    }
    let mean = sum / n as f64;
    (mean, sumsq / n as f64 - mean * mean)
}

/// Empirical PG(a,c) mean and variance over the (a,c) grid against the
/// closed forms; 10^6 draws per cell, tolerances 1% and 3%.
fn pg_suite(seed: u64) -> DiagReport {
    let mut rng = RngStream::new(seed, 0);
    let n = 1_000_000;
    let mut lines = Vec::new();
    let mut passed = true;
    for &a in &[0.5, 1.0, 3.0, 10.0] {
        for &c in &[0.0, 0.1, 1.0, 4.0, 20.0] {
            let p = PGParams::new(a, c, PG_TRUNCATION_DEFAULT).unwrap();
            let (emp_m, emp_v) = sample_moments(&mut || rng.polya_gamma(&p), n);
            let (m, v) = (pg_mean(a, c).unwrap(), pg_variance(a, c).unwrap());
            let (em, ev) = ((emp_m - m).abs() / m, (emp_v - v).abs() / v);
            let ok = em <= 0.01 && ev <= 0.03;
            passed &= ok;
            lines.push(format!(
                "pg a={a:<4} c={c:<4} mean {emp_m:.6} vs {m:.6} ({:.3}%)  var {emp_v:.6e} vs {v:.6e} ({:.3}%)  {}",
                100.0 * em,
                100.0 * ev,
                if ok { "ok" } else { "FAIL" }
            ));
        }
    }
    DiagReport {
        suite: "pg".into(),
        lines,
        passed,
    }
}

/// Empirical CRT means against the analytic sum of Bernoulli probabilities.
fn crt_suite(seed: u64) -> DiagReport {
    let mut rng = RngStream::new(seed, 0);
    let n_draws = 200_000;
    let mut lines = Vec::new();
    let mut passed = true;
    for &(n, r) in &[(1u64, 0.5), (5, 1.0), (21, 2.0), (50, 5.0)] {
        let analytic: f64 = (0..n).map(|i| r / (r + i as f64)).sum();
        let mut sum = 0u64;
        for _ in 0..n_draws {
            sum += rng.crt(n, r).unwrap();
        }
        let emp = sum as f64 / n_draws as f64;
        let rel = (emp - analytic).abs() / analytic;
        let ok = rel <= 0.01;
        passed &= ok;
        lines.push(format!(
            "crt n={n:<3} r={r:<4} mean {emp:.4} vs {analytic:.4} ({:.3}%)  {}",
            100.0 * rel,
            if ok { "ok" } else { "FAIL" }
        ));
    }
    DiagReport {
        suite: "crt".into(),
        lines,
        passed,
    }
}

/// Zero-truncated Poisson means against lambda/(1-e^{-lambda}); also
/// verifies no zero is ever emitted.
fn trpois_suite(seed: u64) -> DiagReport {
    let mut rng = RngStream::new(seed, 0);
    let n_draws = 200_000;
    let mut lines = Vec::new();
    let mut passed = true;
    for &lam in &[0.1f64, 0.5, 1.0, 5.0, 20.0] {
        let analytic = lam / -(-lam).exp_m1();
        let mut sum = 0u64;
        let mut min = u64::MAX;
        for _ in 0..n_draws {
            let x = rng.truncated_poisson(lam).unwrap();
            sum += x;
            min = min.min(x);
        }
        let emp = sum as f64 / n_draws as f64;
        let rel = (emp - analytic).abs() / analytic;
        let ok = rel <= 0.01 && min >= 1;
        passed &= ok;
        lines.push(format!(
            "trpois lambda={lam:<4} mean {emp:.4} vs {analytic:.4} ({:.3}%) min={min}  {}",
            100.0 * rel,
            if ok { "ok" } else { "FAIL" }
        ));
    }
    DiagReport {
        suite: "trpois".into(),
        lines,
        passed,
    }
}

/// Unsigned Stirling numbers of the first kind up to m_max, |s(m,l)|.
fn stirling_table(m_max: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; m_max + 1]; m_max + 1];
    s[0][0] = 1.0;
    for m in 0..m_max {
        for l in 0..=m {
            if s[m][l] == 0.0 {
                continue;
            }
            s[m + 1][l] += m as f64 * s[m][l];
            s[m + 1][l + 1] += s[m][l];
        }
    }
    s
}

/// Draw the (m, l) pair both ways, [m ~ NB(r,p), l ~ CRT(m,r)] and
/// [l ~ Pois(r q), m ~ SumLog(l,p)], and chi-square each against the
/// enumerated joint PMF (1-p)^r p^m |s(m,l)| r^l / m!.
fn duality_suite(seed: u64) -> DiagReport {
    let r = 2.0f64;
    let q0 = 0.7f64;
    let p = -(-q0).exp_m1();
    let m_max = 30usize;
    let n_draws = 200_000usize;

    let s_table = stirling_table(m_max);
    // cell layout: (m,l) for l <= m, triangular index, plus one overflow cell
    let idx = |m: usize, l: usize| m * (m + 1) / 2 + l;
    let n_cells = idx(m_max, m_max) + 1;
    let mut expected = vec![0.0f64; n_cells + 1];
    let mut kept = 0.0;
    for m in 0..=m_max {
        for l in 0..=m {
            if s_table[m][l] == 0.0 {
                continue;
            }
            let lnp = r * (-p).ln_1p() + m as f64 * p.ln() + l as f64 * r.ln()
                + s_table[m][l].ln()
                - ln_gamma(m as f64 + 1.0);
            let prob = lnp.exp();
            expected[idx(m, l)] = prob;
            kept += prob;
        }
    }
    expected[n_cells] = (1.0 - kept).max(0.0); // mass beyond m_max

    let mut lines = Vec::new();
    let mut passed = true;
    let mut rng = RngStream::new(seed, 0);
    for (name, direction) in [("nb-crt", 0), ("pois-sumlog", 1)] {
        let mut observed = vec![0.0f64; n_cells + 1];
        for _ in 0..n_draws {
            let (m, l) = if direction == 0 {
                let lam = rng.gamma(r, q0.exp_m1()).unwrap();
                let m = rng.poisson(lam);
                let l = rng.crt(m, r).unwrap();
                (m, l)
            } else {
                let l = rng.poisson(r * q0);
                let m = if l == 0 { 0 } else { rng.sum_log(l, p).unwrap() };
                (m, l)
            };
            if m as usize > m_max || l > m {
                observed[n_cells] += 1.0;
            } else {
                observed[idx(m as usize, l as usize)] += 1.0;
            }
        }
        let scaled: Vec<f64> = expected.iter().map(|e| e * n_draws as f64).collect();
        let (stat, p_val) = chi_square_test(&observed, &scaled, 5.0);
        let ok = p_val > 0.01;
        passed &= ok;
        lines.push(format!(
            "duality {name}: chi2 {stat:.1}, p {p_val:.4}  {}",
            if ok { "ok" } else { "FAIL" }
        ));
    }
    DiagReport {
        suite: "duality".into(),
        lines,
        passed,
    }
}
