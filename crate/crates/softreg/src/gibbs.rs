//! The upward-downward Gibbs sampler for the sum-stack-softplus family.
//!
//! One iteration runs, in order: a downward sweep drawing the gamma-
//! distributed layer rates, the truncated-Poisson/multinomial count draws,
//! an upward sweep (CRT table counts, Polya-Gamma weights, Gaussian
//! coefficient draws, ARD precisions), pruning, then the global weight
//! updates. Per-expert blocks are independent given the layer-1 counts,
//! so experts run in parallel, each on its own RNG stream; results are
//! bit-identical for any worker count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    dot, q_recursion, softplus, Dataset, Expert, FittedModel, HyperParams, ModelMeta, Variant,
};
use crate::rng::{PGParams, RngStream};

// CRT rates can underflow to zero when a layer collapses; the table-count
// conditional still needs its "first customer opens a table" behaviour, so
// rates are floored just above zero rather than rejected.
const CRT_RATE_FLOOR: f64 = 1e-300;

/// Everything one expert owns. Per-sample arrays are row-major over
/// samples; layers are numbered 1-based, so layer t lives at column t-1
/// (for beta and omega, which start at layer 2, column 0 holds layer 2).
#[derive(Debug, Clone)]
pub struct ExpertState {
    pub active: bool,
    pub r: f64,
    pub ltilde: u64,
    pub beta: Vec<f64>,   // T x dim, row t-2 houses beta^{(t)}
    pub alpha: Vec<f64>,  // T x dim
    pub theta: Vec<f64>,  // N x T, theta^{(1..T)}
    pub tau: Vec<f64>,    // N x T
    pub omega: Vec<f64>,  // N x T, omega^{(2..T+1)}
    pub q: Vec<f64>,      // N x (T+1), q^{(1..T+1)}
    pub mcount: Vec<u64>, // N x (T+1), m^{(1..T+1)}
    n: usize,
    t_depth: usize,
    dim: usize,
}

impl ExpertState {
    /// q^{(t)}_{i.} with t in 1..=T+1.
    #[inline]
    pub fn q_at(&self, i: usize, t: usize) -> f64 {
        self.q[i * (self.t_depth + 1) + t - 1]
    }

    /// m^{(t)}_{i.} with t in 1..=T+1.
    #[inline]
    pub fn mcount_at(&self, i: usize, t: usize) -> u64 {
        self.mcount[i * (self.t_depth + 1) + t - 1]
    }

    /// theta^{(t)}_{i.} with t in 1..=T+1; the top layer reads r.
    #[inline]
    pub fn theta_at(&self, i: usize, t: usize) -> f64 {
        if t == self.t_depth + 1 {
            self.r
        } else {
            self.theta[i * self.t_depth + t - 1]
        }
    }

    /// beta^{(t)} with t in 2..=T+1.
    #[inline]
    pub fn beta_layer(&self, t: usize) -> &[f64] {
        &self.beta[(t - 2) * self.dim..(t - 1) * self.dim]
    }

    pub fn beta_layers(&self) -> Vec<Vec<f64>> {
        (2..=self.t_depth + 1)
            .map(|t| self.beta_layer(t).to_vec())
            .collect()
    }

    /// Column sum of m^{(t)} over samples.
    pub fn layer_total(&self, t: usize) -> u64 {
        (0..self.n).map(|i| self.mcount_at(i, t)).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub n: usize,
    pub dim: usize,
    pub t_depth: usize,
    pub k_max: usize,
    pub experts: Vec<ExpertState>,
    pub m: Vec<u64>,
    pub gamma0: f64,
    pub c0: f64,
    pub iter: usize,
    /// Logistic variant: r stays 1 and its resampling is skipped.
    pub pin_r: bool,
}

impl ChainState {
    pub fn n_active(&self) -> usize {
        self.experts.iter().filter(|e| e.active).count()
    }

    /// Total count m^{(t)}_{..} over samples and experts.
    pub fn layer_total(&self, t: usize) -> u64 {
        self.experts.iter().map(|e| e.layer_total(t)).sum()
    }
}

/// One RNG stream per expert plus a shared stream for the cross-expert
/// draws (counts and the scalar globals). Stream ids are stable, so a
/// chain's draws do not depend on thread scheduling.
pub struct RngBank {
    pub global: RngStream,
    pub experts: Vec<RngStream>,
}

impl RngBank {
    pub fn new(seed: u64, k_max: usize) -> Self {
        RngBank {
            global: RngStream::new(seed, 0),
            experts: (0..k_max).map(|k| RngStream::new(seed, k as u64 + 1)).collect(),
        }
    }
}

pub fn init_state(d: &Dataset, hp: &HyperParams) -> Result<ChainState> {
    hp.validate()?;
    if d.n() == 0 {
        return Err(Error::Data("cannot initialize a chain on zero samples".into()));
    }
    if d.n_features() == 0 {
        return Err(Error::Data("cannot initialize a chain on zero features".into()));
    }
    let (n, dim, t, k) = (d.n(), d.dim(), hp.t_depth, hp.k_max);
    let alpha0 = (hp.a_t / hp.b_t).clamp(hp.alpha_floor, 1e6);
    // beta = 0 makes every q layer a softplus composite of ln 2,
    // independent of x; compute the ladder once and broadcast.
    let mut q_ladder = vec![1.0f64; t + 1];
    for s in 1..=t {
        q_ladder[s] = softplus(q_ladder[s - 1].ln());
    }
    let mut q = vec![0.0; n * (t + 1)];
    for i in 0..n {
        q[i * (t + 1)..(i + 1) * (t + 1)].copy_from_slice(&q_ladder);
    }
    let expert = ExpertState {
        active: true,
        r: 1.0 / k as f64,
        ltilde: 0,
        beta: vec![0.0; t * dim],
        alpha: vec![alpha0; t * dim],
        theta: vec![0.0; n * t],
        tau: vec![0.0; n * t],
        omega: vec![0.0; n * t],
        q,
        mcount: vec![0; n * (t + 1)],
        n,
        t_depth: t,
        dim,
    };
    Ok(ChainState {
        n,
        dim,
        t_depth: t,
        k_max: k,
        experts: vec![expert; k],
        m: vec![0; n],
        gamma0: 1.0,
        c0: 1.0,
        iter: 0,
        pin_r: false,
    })
}

/// Downward sweep: tau^{(t)} ~ Gamma(theta^{(t+1)} + m^{(t)}, 1-e^{-q^{(t+1)}}),
/// theta^{(t)} = tau^{(t)} / max(eps_q, q^{(t)}), for t = T down to 1.
/// Degenerate shape or scale yields tau = 0.
pub fn sample_theta_sweep(
    s: &mut ChainState,
    _d: &Dataset,
    hp: &HyperParams,
    bank: &mut RngBank,
) -> Result<()> {
    let (n, t_depth, eps) = (s.n, s.t_depth, hp.eps_q);
    s.experts
        .par_iter_mut()
        .zip(bank.experts.par_iter_mut())
        .try_for_each(|(e, rng)| -> Result<()> {
            if !e.active {
                return Ok(());
            }
            for t in (1..=t_depth).rev() {
                for i in 0..n {
                    let shape = e.theta_at(i, t + 1) + e.mcount_at(i, t) as f64;
                    let scale = -(-e.q_at(i, t + 1)).exp_m1();
                    let tau = if shape > 0.0 && scale > 0.0 {
                        rng.gamma(shape, scale)?
                    } else {
                        0.0
                    };
                    e.tau[i * t_depth + t - 1] = tau;
                    e.theta[i * t_depth + t - 1] = tau / e.q_at(i, t).max(eps);
                }
            }
            Ok(())
        })
}

/// m_i ~ y_i Pois_+(theta^{(1)}_{i.}) and its multinomial split across
/// experts. The rate and, when every weight has underflowed, the weights
/// are floored at eps_q so a positive label always keeps m_i >= 1.
pub fn sample_counts(
    s: &mut ChainState,
    d: &Dataset,
    hp: &HyperParams,
    bank: &mut RngBank,
) -> Result<()> {
    let (n, k_max, t1) = (s.n, s.k_max, s.t_depth + 1);
    let mut weights = vec![0.0f64; k_max];
    for i in 0..n {
        if d.labels()[i] == 0 {
            s.m[i] = 0;
            for e in &mut s.experts {
                e.mcount[i * t1] = 0;
            }
            continue;
        }
        let mut total = 0.0;
        for (k, e) in s.experts.iter().enumerate() {
            weights[k] = if e.active { e.theta_at(i, 1) } else { 0.0 };
            total += weights[k];
        }
        if total <= 0.0 {
            for (k, e) in s.experts.iter().enumerate() {
                weights[k] = if e.active { hp.eps_q } else { 0.0 };
            }
        }
        let m_i = bank.global.truncated_poisson(total.max(hp.eps_q))?;
        s.m[i] = m_i;
        let split = bank.global.multinomial(m_i, &weights)?;
        for (k, e) in s.experts.iter_mut().enumerate() {
            e.mcount[i * t1] = split[k];
        }
    }
    Ok(())
}

/// Upward sweep for t = 2..=T+1: CRT table counts, Polya-Gamma weights,
/// the Gaussian draw for beta^{(t)}, the q^{(t)} refresh, and the ARD
/// precision update. Rows whose q^{(t-1)} collapsed to zero contribute
/// omega = 0 and a linear term of m^{(t-1)} alone.
pub fn upward_sweep(
    s: &mut ChainState,
    d: &Dataset,
    hp: &HyperParams,
    bank: &mut RngBank,
) -> Result<()> {
    let (n, t_depth, dim) = (s.n, s.t_depth, s.dim);
    s.experts
        .par_iter_mut()
        .zip(bank.experts.par_iter_mut())
        .try_for_each(|(e, rng)| -> Result<()> {
            if !e.active {
                return Ok(());
            }
            for t in 2..=t_depth + 1 {
                for i in 0..n {
                    let m_prev = e.mcount_at(i, t - 1);
                    let rate = e.theta_at(i, t).max(CRT_RATE_FLOOR);
                    e.mcount[i * (t_depth + 1) + t - 1] = rng.crt(m_prev, rate)?;
                }
                for i in 0..n {
                    let q_prev = e.q_at(i, t - 1);
                    let shape = e.mcount_at(i, t - 1) as f64 + e.theta_at(i, t);
                    e.omega[i * t_depth + t - 2] = if q_prev == 0.0 || !(shape > 0.0) {
                        0.0
                    } else {
                        let psi = dot(d.row(i), e.beta_layer(t)) + q_prev.ln();
                        rng.polya_gamma(&PGParams::new(shape, psi, hp.pg_truncation)?)
                    };
                }
                let mut prec = DMatrix::zeros(dim, dim);
                for v in 0..dim {
                    prec[(v, v)] = e.alpha[(t - 2) * dim + v];
                }
                let mut linear = DVector::zeros(dim);
                for i in 0..n {
                    let x = d.row(i);
                    let w = e.omega[i * t_depth + t - 2];
                    let q_prev = e.q_at(i, t - 1);
                    let m_prev = e.mcount_at(i, t - 1) as f64;
                    let kappa = if q_prev == 0.0 {
                        m_prev
                    } else {
                        -w * q_prev.ln() + (m_prev - e.theta_at(i, t)) / 2.0
                    };
                    if w != 0.0 {
                        for a in 0..dim {
                            for b in 0..dim {
                                prec[(a, b)] += w * x[a] * x[b];
                            }
                        }
                    }
                    if kappa != 0.0 {
                        for a in 0..dim {
                            linear[a] += kappa * x[a];
                        }
                    }
                }
                let beta_new = rng.mvn_precision(&prec, &linear)?;
                e.beta[(t - 2) * dim..(t - 1) * dim].copy_from_slice(beta_new.as_slice());
                for i in 0..n {
                    let q_prev = e.q_at(i, t - 1);
                    e.q[i * (t_depth + 1) + t - 1] = if q_prev == 0.0 {
                        0.0
                    } else {
                        softplus(dot(d.row(i), e.beta_layer(t)) + q_prev.ln())
                    };
                }
                for v in 0..dim {
                    let b = e.beta[(t - 2) * dim + v];
                    let a_post = hp.a_t + 0.5;
                    let scale = 1.0 / (hp.b_t + b * b / 2.0);
                    e.alpha[(t - 2) * dim + v] = rng.gamma(a_post, scale)?.max(hp.alpha_floor);
                }
            }
            Ok(())
        })
}

/// At scheduled iterations, experts whose layer-1 counts are all zero are
/// switched off for good; their per-sample latents are zeroed. The frozen
/// beta and q stay consistent with each other but never re-enter the
/// likelihood (prediction snapshots and S_k exclude inactive experts).
pub fn prune(s: &mut ChainState, hp: &HyperParams) {
    if !hp.prune_iters.contains(&s.iter) {
        return;
    }
    for e in &mut s.experts {
        if !e.active {
            continue;
        }
        if e.layer_total(1) == 0 {
            e.active = false;
            e.theta.iter_mut().for_each(|v| *v = 0.0);
            e.tau.iter_mut().for_each(|v| *v = 0.0);
            e.omega.iter_mut().for_each(|v| *v = 0.0);
            e.mcount.iter_mut().for_each(|v| *v = 0);
        }
    }
}

/// Global updates: l~_k ~ CRT(l_{.k}, gamma0/K_max), then gamma0, then c0
/// (still using the pre-update r's), then every r_k with the fresh c0.
/// Inactive experts keep S_k = 0 so their r reverts toward its prior.
pub fn sample_globals(
    s: &mut ChainState,
    _d: &Dataset,
    hp: &HyperParams,
    bank: &mut RngBank,
) -> Result<()> {
    let (n, k_max, t_top) = (s.n, s.k_max, s.t_depth + 1);
    let crt_rate = (s.gamma0 / k_max as f64).max(CRT_RATE_FLOOR);
    let mut l_sum = 0u64;
    let mut log1mp_sum = 0.0;
    let mut l_counts = vec![0u64; k_max];
    let mut s_k = vec![0.0f64; k_max];
    for (k, (e, rng)) in s.experts.iter_mut().zip(bank.experts.iter_mut()).enumerate() {
        l_counts[k] = e.layer_total(t_top);
        e.ltilde = rng.crt(l_counts[k], crt_rate)?;
        l_sum += e.ltilde;
        s_k[k] = if e.active {
            (0..n).map(|i| e.q_at(i, t_top)).sum()
        } else {
            0.0
        };
        let p_tilde = s_k[k] / (s.c0 + s_k[k]);
        log1mp_sum += (-p_tilde).ln_1p();
    }
    // gamma0, c0 and r are positive by contract; draws with near-zero shape
    // can underflow to 0.0, so they are floored at the smallest normal.
    s.gamma0 = bank
        .global
        .gamma(
            hp.a0 + l_sum as f64,
            1.0 / (hp.b0 - log1mp_sum / k_max as f64),
        )?
        .max(f64::MIN_POSITIVE);
    let r_sum: f64 = s.experts.iter().map(|e| e.r).sum();
    s.c0 = bank
        .global
        .gamma(hp.e0 + s.gamma0, 1.0 / (hp.f0 + r_sum))?
        .max(f64::MIN_POSITIVE);
    if !s.pin_r {
        let r_shape_base = s.gamma0 / k_max as f64;
        for (k, (e, rng)) in s.experts.iter_mut().zip(bank.experts.iter_mut()).enumerate() {
            e.r = rng
                .gamma(r_shape_base + l_counts[k] as f64, 1.0 / (s.c0 + s_k[k]))?
                .max(f64::MIN_POSITIVE);
        }
    }
    Ok(())
}

/// One full iteration in the fixed update order.
pub fn step(s: &mut ChainState, d: &Dataset, hp: &HyperParams, bank: &mut RngBank) -> Result<()> {
    s.iter += 1;
    sample_theta_sweep(s, d, hp, bank)?;
    sample_counts(s, d, hp, bank)?;
    upward_sweep(s, d, hp, bank)?;
    prune(s, hp);
    sample_globals(s, d, hp, bank)?;
    Ok(())
}

/// Training log likelihood of the marginal Bernoulli model under the
/// current (r, beta), read off the stored top-layer q.
pub fn state_log_likelihood(s: &ChainState, d: &Dataset, eps_q: f64) -> f64 {
    let t_top = s.t_depth + 1;
    let mut ll = 0.0;
    for i in 0..s.n {
        let lam: f64 = s
            .experts
            .iter()
            .filter(|e| e.active)
            .map(|e| e.r * e.q_at(i, t_top))
            .sum();
        if d.labels()[i] == 1 {
            ll += (-(-lam.max(eps_q)).exp_m1()).ln();
        } else {
            ll -= lam;
        }
    }
    ll
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iter: usize,
    pub log_lik: f64,
    pub n_active: usize,
    /// m^{(t)}_{..} for t = 1..=T+1.
    pub m_totals: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub t_depth: usize,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new(t_depth: usize) -> Self {
        Trace {
            t_depth,
            rows: Vec::new(),
        }
    }

    /// Delimited text: iter, log_lik, n_active, m_total[1..T+1].
    pub fn to_text(&self) -> String {
        let mut out = String::from("# iter log_lik n_active");
        for t in 1..=self.t_depth + 1 {
            out.push_str(&format!(" m{t}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{} {} {}", row.iter, row.log_lik, row.n_active));
            for v in &row.m_totals {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn snapshot(s: &ChainState, d: &Dataset, hp: &HyperParams, variant: Variant, ll: f64) -> FittedModel {
    let experts = s
        .experts
        .iter()
        .filter(|e| e.active && e.r > 0.0)
        .map(|e| Expert {
            r: e.r,
            beta: e.beta_layers(),
        })
        .collect();
    FittedModel {
        t_depth: s.t_depth,
        n_features: d.n_features(),
        experts,
        orientation: d.orientation(),
        standardization: d.standardization().map(|p| p.to_vec()),
        log_lik: ll,
        meta: ModelMeta {
            variant,
            seed: hp.seed,
            n_iter: hp.n_iter,
            k_max: hp.k_max,
            provenance: format!("gibbs n_iter={} burn={}", hp.n_iter, hp.burn_frac),
        },
    }
}

/// Run the full chain and keep the post-burn-in snapshot with the highest
/// training log likelihood, along with the per-iteration trace.
pub fn run(d: &Dataset, hp: &HyperParams, variant: Variant) -> Result<(FittedModel, Trace)> {
    hp.validate()?;
    variant.check_shape(hp.k_max, hp.t_depth)?;
    let mut s = init_state(d, hp)?;
    s.pin_r = variant.pins_r();
    let mut bank = RngBank::new(hp.seed, hp.k_max);
    let mut trace = Trace::new(hp.t_depth);
    let first_snap = hp.first_snapshot_iter();
    let mut best: Option<(f64, FittedModel)> = None;
    for _ in 0..hp.n_iter {
        step(&mut s, d, hp, &mut bank)?;
        let ll = state_log_likelihood(&s, d, hp.eps_q);
        if !ll.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite log likelihood at iteration {} (gamma0={}, c0={}, active={})",
                s.iter,
                s.gamma0,
                s.c0,
                s.n_active()
            )));
        }
        trace.rows.push(TraceRow {
            iter: s.iter,
            log_lik: ll,
            n_active: s.n_active(),
            m_totals: (1..=s.t_depth + 1).map(|t| s.layer_total(t)).collect(),
        });
        if s.iter >= first_snap && best.as_ref().map_or(true, |(b, _)| ll > *b) {
            best = Some((ll, snapshot(&s, d, hp, variant, ll)));
        }
    }
    let (_, model) = best.ok_or_else(|| {
        Error::Parameter("burn-in consumed every iteration; lower burn_frac or raise n_iter".into())
    })?;
    model.validate()?;
    Ok((model, trace))
}

/// Recompute q from scratch for an expert and compare against the stored
/// array (used by the count-propagation checks; tolerance 1e-10).
pub fn q_consistency_error(e: &ExpertState, d: &Dataset) -> f64 {
    let mut worst = 0.0f64;
    let betas = e.beta_layers();
    for i in 0..e.n {
        let fresh = q_recursion(d.row(i), &betas);
        for (t, &qf) in fresh.iter().enumerate() {
            worst = worst.max((qf - e.q[i * (e.t_depth + 1) + t]).abs());
        }
    }
    worst
}
