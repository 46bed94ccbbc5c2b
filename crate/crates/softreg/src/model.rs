//! Domain types (datasets, hyperparameters, fitted models) and the
//! deterministic predictive math.
//!
//! A fitted model is a set of experts `{r_k, β_k^{(2..T+1)}}`. Its rate at a
//! covariate vector x (bias prepended) is
//!
//! ```text
//! λ(x) = Σ_k r_k · ς(x'β_k^{(2)}, …, x'β_k^{(T+1)})
//! ς(z_2,…,z_{T+1}) = ln(1 + e^{z_{T+1}} ln(1 + e^{z_T} ln(… ln(1+e^{z_2}))))
//! P(y=1|x) = 1 − e^{−λ(x)}
//! ```
//!
//! computed through the numerically stable recursion
//! `q_{t+1} = softplus(x'β^{(t+1)} + ln q_t)`, `q_1 = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to rates/denominators where a zero would produce −∞ or a
/// degenerate conditional.
pub const DEFAULT_EPS_Q: f64 = 1e-6;

/// Lower clip for the coefficient precisions, keeping β's conditional
/// covariance positive definite.
pub const DEFAULT_ALPHA_FLOOR: f64 = 1e-3;

/// Largest f64 strictly below 1; predict_prob saturates here.
const MAX_PROB: f64 = 1.0 - f64::EPSILON / 2.0;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// ln(1+e^z) without overflow: max(z,0) + log1p(e^{−|z|}).
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Which class is coded as 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    AsIs,
    Flipped,
}

impl Orientation {
    pub fn toggled(self) -> Self {
        match self {
            Orientation::AsIs => Orientation::Flipped,
            Orientation::Flipped => Orientation::AsIs,
        }
    }
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Orientation::AsIs => write!(f, "asis"),
            Orientation::Flipped => write!(f, "flipped"),
        }
    }
}

/// Covariate matrix with a prepended all-ones bias column, binary labels,
/// and the standardization that produced columns 1..V (if any).
#[derive(Debug, Clone)]
pub struct Dataset {
    n: usize,
    p: usize, // V+1, bias included
    x: Vec<f64>,
    y: Vec<u8>,
    standardization: Option<Vec<(f64, f64)>>,
    orientation: Orientation,
}

impl Dataset {
    /// Build from augmented rows (`rows[i][0]` must be 1.0) and 0/1 labels.
    pub fn from_augmented(
        rows: Vec<Vec<f64>>,
        y: Vec<u8>,
        standardization: Option<Vec<(f64, f64)>>,
        orientation: Orientation,
    ) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Data("empty dataset".into()));
        }
        if y.len() != n {
            return Err(Error::Dimension(format!(
                "{} rows vs {} labels",
                n,
                y.len()
            )));
        }
        let p = rows[0].len();
        if p < 1 {
            return Err(Error::Data("rows need at least the bias column".into()));
        }
        let mut x = Vec::with_capacity(n * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Dimension(format!(
                    "row {i} has {} columns, expected {p}",
                    row.len()
                )));
            }
            if row[0] != 1.0 {
                return Err(Error::Data(format!("row {i}: bias column is {}", row[0])));
            }
            x.extend_from_slice(row);
        }
        for (i, &lab) in y.iter().enumerate() {
            if lab > 1 {
                return Err(Error::Data(format!("label {lab} at row {i} is not 0/1")));
            }
        }
        if let Some(params) = &standardization {
            if params.len() != p - 1 {
                return Err(Error::Dimension(format!(
                    "{} standardization pairs for {} features",
                    params.len(),
                    p - 1
                )));
            }
            if let Some((_, s)) = params.iter().find(|(_, s)| !(*s > 0.0)) {
                return Err(Error::Data(format!("nonpositive stored std {s}")));
            }
        }
        Ok(Dataset {
            n,
            p,
            x,
            y,
            standardization,
            orientation,
        })
    }

    /// A zero-row dataset of known width, e.g. the test side of an
    /// identity partition. Training rejects these; prediction just
    /// produces nothing.
    pub fn empty(dim: usize, standardization: Option<Vec<(f64, f64)>>) -> Result<Self> {
        if dim < 1 {
            return Err(Error::Data("rows need at least the bias column".into()));
        }
        if let Some(params) = &standardization {
            if params.len() != dim - 1 {
                return Err(Error::Dimension(format!(
                    "{} standardization pairs for {} features",
                    params.len(),
                    dim - 1
                )));
            }
        }
        Ok(Dataset {
            n: 0,
            p: dim,
            x: Vec::new(),
            y: Vec::new(),
            standardization,
            orientation: Orientation::AsIs,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of raw covariates V (bias excluded).
    pub fn n_features(&self) -> usize {
        self.p - 1
    }

    /// Row length V+1 (bias included).
    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn standardization(&self) -> Option<&[(f64, f64)]> {
        self.standardization.as_deref()
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Complement every label and toggle the orientation flag.
    pub fn flipped(&self) -> Dataset {
        let mut d = self.clone();
        for lab in &mut d.y {
            *lab = 1 - *lab;
        }
        d.orientation = self.orientation.toggled();
        d
    }
}

/// Every fixed scalar of the prior and the sampler schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperParams {
    pub k_max: usize,
    pub t_depth: usize,
    pub a0: f64,
    pub b0: f64,
    pub e0: f64,
    pub f0: f64,
    pub a_t: f64,
    pub b_t: f64,
    pub n_iter: usize,
    pub burn_frac: f64,
    pub prune_iters: Vec<usize>,
    pub pg_truncation: usize,
    pub eps_q: f64,
    pub alpha_floor: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            k_max: 20,
            t_depth: 1,
            a0: 0.01,
            b0: 0.01,
            e0: 1.0,
            f0: 1.0,
            a_t: 1e-6,
            b_t: 1e-6,
            n_iter: 5000,
            burn_frac: 0.5,
            prune_iters: default_prune_schedule(),
            pg_truncation: crate::rng::PG_TRUNCATION_DEFAULT,
            eps_q: DEFAULT_EPS_Q,
            alpha_floor: DEFAULT_ALPHA_FLOOR,
            seed: 1,
        }
    }
}

/// Deactivation checkpoints 525, 575, …, 4975.
pub fn default_prune_schedule() -> Vec<usize> {
    (525..=4975).step_by(50).collect()
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("a0", self.a0),
            ("b0", self.b0),
            ("e0", self.e0),
            ("f0", self.f0),
            ("a_t", self.a_t),
            ("b_t", self.b_t),
            ("eps_q", self.eps_q),
            ("alpha_floor", self.alpha_floor),
        ];
        for (name, v) in pos {
            if !(v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.k_max < 1 || self.t_depth < 1 {
            return Err(Error::Parameter("K_max and T must be >= 1".into()));
        }
        if self.n_iter < 1 {
            return Err(Error::Parameter("n_iter must be >= 1".into()));
        }
        if !(self.burn_frac > 0.0 && self.burn_frac < 1.0) {
            return Err(Error::Parameter(format!(
                "burn_frac must lie in (0,1), got {}",
                self.burn_frac
            )));
        }
        if self.pg_truncation < 1 {
            return Err(Error::Parameter("pg_truncation must be >= 1".into()));
        }
        Ok(())
    }

    /// First iteration (1-based) eligible for the likelihood snapshot.
    pub fn first_snapshot_iter(&self) -> usize {
        (self.n_iter as f64 * self.burn_frac).floor() as usize + 1
    }
}

/// Model family member. `Ss` is the general case; the others constrain
/// (K_max, T) and `Logistic` additionally pins r = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Softplus,
    Sum,
    Stack,
    Ss,
    Logistic,
}

impl Variant {
    pub fn check_shape(&self, k_max: usize, t_depth: usize) -> Result<()> {
        let bad = match self {
            Variant::Sum => t_depth != 1,
            Variant::Stack => k_max != 1,
            Variant::Softplus | Variant::Logistic => k_max != 1 || t_depth != 1,
            Variant::Ss => false,
        };
        if bad {
            return Err(Error::Parameter(format!(
                "variant {self} incompatible with K_max={k_max}, T={t_depth}"
            )));
        }
        Ok(())
    }

    /// Logistic regression keeps r fixed at 1 instead of resampling it.
    pub fn pins_r(&self) -> bool {
        matches!(self, Variant::Logistic)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::Softplus => "softplus",
            Variant::Sum => "sum",
            Variant::Stack => "stack",
            Variant::Ss => "ss",
            Variant::Logistic => "logistic",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softplus" => Ok(Variant::Softplus),
            "sum" => Ok(Variant::Sum),
            "stack" => Ok(Variant::Stack),
            "ss" => Ok(Variant::Ss),
            "logistic" => Ok(Variant::Logistic),
            other => Err(Error::Parameter(format!("unknown variant '{other}'"))),
        }
    }
}

/// One gamma-process atom: weight r and the T coefficient vectors
/// β^{(2)}..β^{(T+1)} (index 0 holds β^{(2)}).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Expert {
    pub r: f64,
    pub beta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub variant: Variant,
    pub seed: u64,
    pub n_iter: usize,
    pub k_max: usize,
    pub provenance: String,
}

/// Maximum-likelihood snapshot for one labeling orientation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedModel {
    pub t_depth: usize,
    pub n_features: usize,
    pub experts: Vec<Expert>,
    pub orientation: Orientation,
    pub standardization: Option<Vec<(f64, f64)>>,
    pub log_lik: f64,
    pub meta: ModelMeta,
}

impl FittedModel {
    pub fn validate(&self) -> Result<()> {
        if self.t_depth < 1 {
            return Err(Error::Parameter("model depth T must be >= 1".into()));
        }
        for (k, e) in self.experts.iter().enumerate() {
            if !(e.r > 0.0) {
                return Err(Error::Parameter(format!("expert {k} has weight {}", e.r)));
            }
            if e.beta.len() != self.t_depth {
                return Err(Error::Dimension(format!(
                    "expert {k} has {} coefficient vectors, expected {}",
                    e.beta.len(),
                    self.t_depth
                )));
            }
            for b in &e.beta {
                if b.len() != self.n_features + 1 {
                    return Err(Error::Dimension(format!(
                        "expert {k}: coefficient length {} vs V+1 = {}",
                        b.len(),
                        self.n_features + 1
                    )));
                }
            }
        }
        if let Some(s) = &self.standardization {
            if s.len() != self.n_features {
                return Err(Error::Dimension(format!(
                    "{} standardization pairs for {} features",
                    s.len(),
                    self.n_features
                )));
            }
        }
        Ok(())
    }

    /// Standardize a raw covariate vector with the training parameters and
    /// prepend the bias coordinate.
    pub fn augment_raw(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.n_features {
            return Err(Error::Dimension(format!(
                "input has {} features, model expects {}",
                raw.len(),
                self.n_features
            )));
        }
        let mut row = Vec::with_capacity(raw.len() + 1);
        row.push(1.0);
        match &self.standardization {
            Some(params) => {
                for (v, (m, s)) in raw.iter().zip(params) {
                    row.push((v - m) / s);
                }
            }
            None => row.extend_from_slice(raw),
        }
        Ok(row)
    }

    /// λ(x) for an augmented, already-standardized row.
    pub fn rate_aug(&self, x_aug: &[f64]) -> f64 {
        self.experts
            .iter()
            .map(|e| e.r * *q_recursion(x_aug, &e.beta).last().unwrap())
            .sum()
    }

    pub fn rate(&self, raw: &[f64]) -> Result<f64> {
        Ok(self.rate_aug(&self.augment_raw(raw)?))
    }

    /// P(y=1|x) = 1 − e^{−λ}, computed as −expm1(−λ). The rate is finite, so
    /// the probability stays strictly below 1 even when −expm1 rounds up.
    pub fn predict_prob_aug(&self, x_aug: &[f64]) -> f64 {
        (-(-self.rate_aug(x_aug)).exp_m1()).min(MAX_PROB)
    }

    pub fn predict_prob(&self, raw: &[f64]) -> Result<f64> {
        Ok(self.predict_prob_aug(&self.augment_raw(raw)?))
    }
}

/// The q-recursion: returns [q^{(1)}, …, q^{(T+1)}] with q^{(1)} = 1 and
/// q^{(t+1)} = softplus(x'β^{(t+1)} + ln q^{(t)}). Once any level reaches
/// exactly 0 every later level stays 0.
pub fn q_recursion(x_aug: &[f64], betas: &[Vec<f64>]) -> Vec<f64> {
    let mut q = Vec::with_capacity(betas.len() + 1);
    q.push(1.0);
    let mut prev = 1.0f64;
    for beta in betas {
        let next = if prev == 0.0 {
            0.0
        } else {
            softplus(dot(x_aug, beta) + prev.ln())
        };
        q.push(next);
        prev = next;
    }
    q
}

/// Two fits of the same training table under opposite label codings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusedModel {
    pub model_pos: FittedModel,
    pub model_neg: FittedModel,
}

impl FusedModel {
    pub fn new(model_pos: FittedModel, model_neg: FittedModel) -> Result<Self> {
        if model_pos.orientation == model_neg.orientation {
            return Err(Error::Parameter(
                "fused model needs opposite label orientations".into(),
            ));
        }
        if model_pos.standardization != model_neg.standardization
            || model_pos.n_features != model_neg.n_features
        {
            return Err(Error::Parameter(
                "fused model halves disagree on standardization".into(),
            ));
        }
        Ok(FusedModel {
            model_pos,
            model_neg,
        })
    }

    /// (1 − e^{−λ1} + e^{−λ2})/2; at the default threshold 1/2 this labels a
    /// point 1 exactly when λ1 > λ2.
    pub fn fused_prob_aug(&self, x_aug: &[f64]) -> f64 {
        let l1 = self.model_pos.rate_aug(x_aug);
        let l2 = self.model_neg.rate_aug(x_aug);
        (1.0 - (-l1).exp() + (-l2).exp()) / 2.0
    }

    pub fn fused_prob(&self, raw: &[f64]) -> Result<f64> {
        Ok(self.fused_prob_aug(&self.model_pos.augment_raw(raw)?))
    }
}

/// Bernoulli log-likelihood Σ_i [y_i ln(1−e^{−λ_i}) + (1−y_i)(−λ_i)], with
/// λ floored at eps_q on positive labels so a dead rate never yields −∞.
pub fn log_likelihood(d: &Dataset, m: &FittedModel, eps_q: f64) -> f64 {
    let mut ll = 0.0;
    for i in 0..d.n() {
        let lam = m.rate_aug(d.row(i));
        if d.labels()[i] == 1 {
            ll += (-(-lam.max(eps_q)).exp_m1()).ln();
        } else {
            ll -= lam;
        }
    }
    ll
}
