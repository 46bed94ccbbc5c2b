//! Polytope diagnostics for fitted models.
//!
//! For T = 1 the negative region {x : P(y=1|x) ≤ p0} sits inside the convex
//! polytope {x : x'β_k ≤ ln[(1−p0)^{−1/r_k} − 1] ∀k}; counting violated
//! half-space constraints therefore certifies positive predictions. For
//! stacks the analogous per-layer thresholds come from the g/h recursions,
//! and for expert unions the exact per-expert test compares
//! ln(e^{q_k^{(T+1)}} − 1) against ln[(1−p0)^{−1/r_k} − 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, q_recursion, FittedModel};

/// ln(e^z − 1) for z > 0, stable at both ends.
#[inline]
pub fn ln_expm1(z: f64) -> f64 {
    if z > 30.0 {
        z + (-(-z).exp()).ln_1p()
    } else {
        z.exp_m1().ln()
    }
}

/// −ln(1−p0)/r: the per-expert rate threshold in softplus units.
#[inline]
pub fn rate_threshold(r: f64, p0: f64) -> f64 {
    -(-p0).ln_1p() / r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    SumViolations,
    StackSatisfied,
    SsSatisfied,
}

impl std::fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GeometryKind::SumViolations => "sum_violations",
            GeometryKind::StackSatisfied => "stack_satisfied",
            GeometryKind::SsSatisfied => "ss_satisfied",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for GeometryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" | "sum_violations" => Ok(GeometryKind::SumViolations),
            "stack" | "stack_satisfied" => Ok(GeometryKind::StackSatisfied),
            "ss" | "ss_satisfied" => Ok(GeometryKind::SsSatisfied),
            other => Err(Error::Parameter(format!("unknown geometry kind '{other}'"))),
        }
    }
}

/// Per-point inequality counts over a set of query points.
#[derive(Debug, Clone)]
pub struct GeometryReport {
    pub counts: Vec<usize>,
    pub kind: GeometryKind,
    pub p0: f64,
    /// g_1..g_T (depth recursion, independent of the weights).
    pub g: Vec<f64>,
    /// h_2..h_{T+1}; populated only for single-expert models, where the
    /// thresholds are well defined. Overflowed entries are +∞.
    pub h: Vec<f64>,
}

/// g_1 = 1, g_t = ln(1+g_{t−1}); h_{T+1} = (1−p0)^{−1/r} − 1,
/// h_t = e^{h_{t+1}} − 1. Entries that overflow become +∞ (the matching
/// inequality is unsatisfiable). Returned as (g_1..g_T, h_2..h_{T+1}).
pub fn gh_recursions(t_depth: usize, r: f64, p0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::Parameter(format!("p0 must lie in (0,1), got {p0}")));
    }
    if !(r > 0.0) {
        return Err(Error::Parameter(format!("weight must be > 0, got {r}")));
    }
    if t_depth < 1 {
        return Err(Error::Parameter("depth must be >= 1".into()));
    }
    let mut g = vec![1.0f64; t_depth];
    for t in 1..t_depth {
        g[t] = g[t - 1].ln_1p();
    }
    let mut h = vec![0.0f64; t_depth];
    h[t_depth - 1] = rate_threshold(r, p0).exp_m1();
    for t in (0..t_depth - 1).rev() {
        h[t] = h[t + 1].exp_m1();
    }
    Ok((g, h))
}

/// Number of experts whose half-space bound x'β_k ≤ ln[(1−p0)^{−1/r_k} − 1]
/// is violated. Zero means x lies inside the bounding convex polytope.
pub fn sum_polytope_violations(x_aug: &[f64], m: &FittedModel, p0: f64) -> Result<usize> {
    if m.t_depth != 1 {
        return Err(Error::Parameter(format!(
            "sum polytope diagnostics need T = 1, model has T = {}",
            m.t_depth
        )));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::Parameter(format!("p0 must lie in (0,1), got {p0}")));
    }
    Ok(m
        .experts
        .iter()
        .filter(|e| dot(x_aug, &e.beta[0]) > ln_expm1(rate_threshold(e.r, p0)))
        .count())
}

/// Number of layers t ∈ {2..T+1} with x'β^{(t)} > ln h_t − ln g_{t−1} for a
/// single-expert (stack) model; T means x is inside the approximating
/// polytope.
pub fn stack_criteria_satisfied(x_aug: &[f64], m: &FittedModel, p0: f64) -> Result<usize> {
    if m.experts.len() != 1 {
        return Err(Error::Parameter(format!(
            "stack diagnostics need a single expert, model has {}",
            m.experts.len()
        )));
    }
    let e = &m.experts[0];
    let (g, h) = gh_recursions(m.t_depth, e.r, p0)?;
    let mut count = 0;
    for t in 0..m.t_depth {
        // index t holds layer t+2, whose threshold uses g_{t+1} = g[t].
        if dot(x_aug, &e.beta[t]) > h[t].ln() - g[t].ln() {
            count += 1;
        }
    }
    Ok(count)
}

/// Number of experts whose stack inequality
/// ln(e^{q_k^{(T+1)}} − 1) > ln[(1−p0)^{−1/r_k} − 1] holds. Any nonzero
/// count certifies P(y=1|x) > p0. Requires p0 ∈ (0,1).
pub fn ss_union_membership(x_aug: &[f64], m: &FittedModel, p0: f64) -> usize {
    m.experts
        .iter()
        .filter(|e| {
            let q_top = *q_recursion(x_aug, &e.beta).last().unwrap();
            q_top > 0.0 && ln_expm1(q_top) > ln_expm1(rate_threshold(e.r, p0))
        })
        .count()
}

/// Evaluate the variant-appropriate diagnostic over query points: sum
/// violations for depth-1 models, union membership otherwise, unless
/// overridden.
pub fn geometry_counts<'a>(
    m: &FittedModel,
    points: impl Iterator<Item = &'a [f64]>,
    p0: f64,
    kind: Option<GeometryKind>,
) -> Result<GeometryReport> {
    let kind = kind.unwrap_or(if m.t_depth == 1 {
        GeometryKind::SumViolations
    } else {
        GeometryKind::SsSatisfied
    });
    let mut counts = Vec::new();
    for x in points {
        let c = match kind {
            GeometryKind::SumViolations => sum_polytope_violations(x, m, p0)?,
            GeometryKind::StackSatisfied => stack_criteria_satisfied(x, m, p0)?,
            GeometryKind::SsSatisfied => {
                if !(p0 > 0.0 && p0 < 1.0) {
                    return Err(Error::Parameter(format!("p0 must lie in (0,1), got {p0}")));
                }
                ss_union_membership(x, m, p0)
            }
        };
        counts.push(c);
    }
    let (g, h) = if m.experts.len() == 1 {
        gh_recursions(m.t_depth, m.experts[0].r, p0)?
    } else {
        (
            gh_recursions(m.t_depth, 1.0, p0)?.0,
            Vec::new(), // h is weight-specific; undefined across experts
        )
    };
    Ok(GeometryReport {
        counts,
        kind,
        p0,
        g,
        h,
    })
}
