//! Deterministic predictive math: softplus, the q-recursion, rates,
//! probabilities, fusion, likelihood, and the domain-type invariants.

mod common;

use common::stack_softplus_literal;
use proptest::prelude::*;
use softreg::model::{
    default_prune_schedule, log_likelihood, q_recursion, softplus, Dataset, Expert, FittedModel,
    FusedModel, HyperParams, ModelMeta, Orientation, Variant,
};

fn meta() -> ModelMeta {
    ModelMeta {
        variant: Variant::Ss,
        seed: 0,
        n_iter: 0,
        k_max: 1,
        provenance: "test".into(),
    }
}

/// Hand-built model over raw V=1 with no standardization.
fn model(t_depth: usize, experts: Vec<Expert>) -> FittedModel {
    FittedModel {
        t_depth,
        n_features: 1,
        experts,
        orientation: Orientation::AsIs,
        standardization: None,
        log_lik: 0.0,
        meta: meta(),
    }
}

fn expert(r: f64, layers: usize) -> Expert {
    Expert {
        r,
        beta: vec![vec![0.0, 0.0]; layers],
    }
}

#[test]
fn softplus_values() {
    assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    assert_eq!(softplus(-745.3), 0.0);
    assert_eq!(softplus(1000.0), 1000.0);
    assert_eq!(softplus(f64::NEG_INFINITY), 0.0);
}

#[test]
fn q_recursion_values() {
    let q = q_recursion(&[1.0, 0.0], &[vec![0.0, 0.0]]);
    assert_eq!(q[0], 1.0);
    assert!((q[1] - std::f64::consts::LN_2).abs() < 1e-15);

    let q2 = q_recursion(&[1.0, 0.0], &[vec![0.0, 0.0], vec![0.0, 0.0]]);
    assert!((q2[2] - 0.526589) < 1e-6 && (q2[2] - 0.526589) > -1e-6);

    // x'β^{(2)} = −800 kills every later layer
    let q3 = q_recursion(
        &[1.0, 0.0],
        &[vec![-800.0, 0.0], vec![5.0, 1.0], vec![5.0, 1.0]],
    );
    assert_eq!(&q3[1..], &[0.0, 0.0, 0.0]);
}

#[test]
fn q_recursion_depth_one_is_softplus_exactly() {
    for z in [-30.0, -3.0, 0.0, 0.7, 12.0, 200.0] {
        let q = q_recursion(&[1.0, 1.0], &[vec![0.0, z]]);
        assert_eq!(q[1].to_bits(), softplus(z).to_bits());
    }
}

#[test]
fn rate_values() {
    let m1 = model(1, vec![expert(1.0, 1)]);
    assert!((m1.rate(&[0.3]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);

    let m2 = model(1, vec![expert(1.0, 1), expert(1.0, 1)]);
    assert!((m2.rate(&[0.3]).unwrap() - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);

    let m3 = model(2, vec![expert(2.0, 2)]);
    assert!((m3.rate(&[0.3]).unwrap() - 1.053178).abs() < 1e-6);
}

#[test]
fn rate_rejects_dimension_mismatch() {
    let m = model(1, vec![expert(1.0, 1)]);
    assert!(m.rate(&[0.3, 0.4]).is_err());
}

#[test]
fn predict_prob_values() {
    let m = model(1, vec![expert(1.0, 1)]);
    assert!((m.predict_prob(&[0.0]).unwrap() - 0.5).abs() < 1e-15);

    let m2 = model(1, vec![expert(2.0, 1)]);
    assert!((m2.predict_prob(&[0.0]).unwrap() - 0.75).abs() < 1e-12);

    // λ = 0: an expert whose layer collapsed
    let mut e = expert(1.0, 1);
    e.beta[0] = vec![-800.0, 0.0];
    let m3 = model(1, vec![e]);
    assert_eq!(m3.predict_prob(&[0.0]).unwrap(), 0.0);

    // huge λ saturates strictly below 1
    let mut big = expert(6.4, 1);
    big.beta[0] = vec![9.0, 0.0];
    let m4 = model(1, vec![big]);
    let p = m4.predict_prob(&[0.0]).unwrap();
    assert!(p < 1.0 && p > 0.999_999);
}

#[test]
fn fused_prob_values() {
    let pos = model(1, vec![expert(1.0, 1)]);
    let mut neg = pos.clone();
    neg.orientation = Orientation::Flipped;
    let fm = FusedModel::new(pos.clone(), neg).unwrap();
    // identical rates → 0.5 exactly
    assert_eq!(fm.fused_prob(&[0.7]).unwrap(), 0.5);

    // λ1 = ln 2, λ2 = ln 4 → (1 − 1/2 + 1/4)/2 = 0.375
    // choose x'β so softplus hits the target rate: softplus(z)=λ ⇒ z=ln(e^λ−1)
    let z1 = std::f64::consts::LN_2.exp_m1().ln();
    let z2 = 4.0f64.ln().exp_m1().ln();
    let mut me1 = expert(1.0, 1);
    me1.beta[0] = vec![z1, 0.0];
    let mut me2 = expert(1.0, 1);
    me2.beta[0] = vec![z2, 0.0];
    let mpos = model(1, vec![me1]);
    let mut mneg = model(1, vec![me2]);
    mneg.orientation = Orientation::Flipped;
    let fm2 = FusedModel::new(mpos, mneg).unwrap();
    assert!((fm2.fused_prob(&[0.0]).unwrap() - 0.375).abs() < 1e-12);

    // large λ1, zero λ2 → probability approaches 1
    let mut big = expert(1.0, 1);
    big.beta[0] = vec![50.0, 0.0];
    let mut dead = expert(1.0, 1);
    dead.beta[0] = vec![-800.0, 0.0];
    let mpos3 = model(1, vec![big]);
    let mut mneg3 = model(1, vec![dead]);
    mneg3.orientation = Orientation::Flipped;
    let fm3 = FusedModel::new(mpos3, mneg3).unwrap();
    assert!(fm3.fused_prob(&[0.0]).unwrap() > 0.999_999);
}

#[test]
fn fused_model_rejects_bad_pairs() {
    let pos = model(1, vec![expert(1.0, 1)]);
    // same orientation
    assert!(FusedModel::new(pos.clone(), pos.clone()).is_err());
    // mismatched standardization
    let mut neg = pos.clone();
    neg.orientation = Orientation::Flipped;
    neg.standardization = Some(vec![(0.0, 2.0)]);
    assert!(FusedModel::new(pos, neg).is_err());
}

#[test]
fn log_likelihood_values() {
    let hp = HyperParams::default();
    let m = model(1, vec![expert(1.0, 1)]); // λ = ln 2 everywhere

    let d1 = Dataset::from_augmented(vec![vec![1.0, 0.0]], vec![1], None, Orientation::AsIs).unwrap();
    assert!((log_likelihood(&d1, &m, hp.eps_q) - 0.5f64.ln()).abs() < 1e-12);

    // y=0, λ=0
    let mut dead = expert(1.0, 1);
    dead.beta[0] = vec![-800.0, 0.0];
    let m0 = model(1, vec![dead]);
    let d0 = Dataset::from_augmented(vec![vec![1.0, 0.0]], vec![0], None, Orientation::AsIs).unwrap();
    assert_eq!(log_likelihood(&d0, &m0, hp.eps_q), 0.0);

    // y=[1,0] with λ=[ln 4, ln 2]: ln(3/4) − ln 2
    let z4 = 4.0f64.ln().exp_m1().ln(); // softplus⁻¹(ln 4)
    let mut e = expert(1.0, 1);
    e.beta[0] = vec![0.0, z4]; // row x=(1,1) → ln 4; row x=(1,0) → ln 2
    let m2 = model(1, vec![e]);
    let d2 = Dataset::from_augmented(
        vec![vec![1.0, 1.0], vec![1.0, 0.0]],
        vec![1, 0],
        None,
        Orientation::AsIs,
    )
    .unwrap();
    let want = 0.75f64.ln() - std::f64::consts::LN_2;
    assert!((want + 0.980829).abs() < 1e-6);
    assert!((log_likelihood(&d2, &m2, hp.eps_q) - want).abs() < 1e-12);

    // y=1 with λ=0 stays finite via the eps_q floor
    let d3 = Dataset::from_augmented(vec![vec![1.0, 0.0]], vec![1], None, Orientation::AsIs).unwrap();
    let ll = log_likelihood(&d3, &m0, hp.eps_q);
    assert!(ll.is_finite() && ll < -13.0);
}

#[test]
fn sigmoid_equivalence_grid() {
    let mut z = -30.0;
    while z <= 30.0 {
        let lhs = -(-softplus(z)).exp_m1();
        let rhs = 1.0 / (1.0 + (-z).exp());
        assert!((lhs - rhs).abs() < 1e-12, "z = {z}");
        z += 0.01;
    }
}

proptest! {
    #[test]
    fn stack_literal_matches_recursion(
        zs in proptest::collection::vec(-5.0f64..5.0, 1..6),
    ) {
        let betas: Vec<Vec<f64>> = zs.iter().map(|&z| vec![z, 0.0]).collect();
        let q = q_recursion(&[1.0, 0.0], &betas);
        let lit = stack_softplus_literal(&zs);
        prop_assert!((q.last().unwrap() - lit).abs() < 1e-12);
    }

    #[test]
    fn rate_monotone_in_r(r1 in 0.01f64..5.0, bump in 0.0f64..5.0, z in -10.0f64..10.0) {
        let mut e = expert(r1, 1);
        e.beta[0] = vec![z, 0.0];
        let mut e2 = e.clone();
        e2.r = r1 + bump;
        let m1 = model(1, vec![e]);
        let m2 = model(1, vec![e2]);
        prop_assert!(m2.rate(&[0.0]).unwrap() >= m1.rate(&[0.0]).unwrap());
    }

    #[test]
    fn probability_ranges(z in -50.0f64..50.0, r in 0.01f64..10.0) {
        let mut e = expert(r, 1);
        e.beta[0] = vec![z, 0.0];
        let m = model(1, vec![e]);
        let p = m.predict_prob(&[0.0]).unwrap();
        prop_assert!((0.0..1.0).contains(&p));
        let mut neg = m.clone();
        neg.orientation = Orientation::Flipped;
        let f = FusedModel::new(m, neg).unwrap().fused_prob(&[0.0]).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
    }
}

#[test]
fn dataset_validation() {
    // bias column enforced
    assert!(Dataset::from_augmented(vec![vec![0.5, 1.0]], vec![0], None, Orientation::AsIs).is_err());
    // labels binary
    assert!(Dataset::from_augmented(vec![vec![1.0, 1.0]], vec![2], None, Orientation::AsIs).is_err());
    // ragged rows
    assert!(Dataset::from_augmented(
        vec![vec![1.0, 1.0], vec![1.0]],
        vec![0, 1],
        None,
        Orientation::AsIs
    )
    .is_err());
    // stored std must be positive
    assert!(Dataset::from_augmented(
        vec![vec![1.0, 1.0]],
        vec![0],
        Some(vec![(0.0, 0.0)]),
        Orientation::AsIs
    )
    .is_err());
    // zero rows only via the explicit constructor
    assert!(Dataset::from_augmented(vec![], vec![], None, Orientation::AsIs).is_err());
    let empty = Dataset::empty(3, None).unwrap();
    assert_eq!(empty.n(), 0);
    assert_eq!(empty.dim(), 3);
}

#[test]
fn flip_toggles_labels_and_orientation() {
    let d = Dataset::from_augmented(
        vec![vec![1.0, 0.1], vec![1.0, 0.2], vec![1.0, 0.3]],
        vec![0, 1, 1],
        None,
        Orientation::AsIs,
    )
    .unwrap();
    let f = d.flipped();
    assert_eq!(f.labels(), &[1, 0, 0]);
    assert_eq!(f.orientation(), Orientation::Flipped);
    assert_eq!(f.n_positive(), 1);
    let ff = f.flipped();
    assert_eq!(ff.labels(), d.labels());
    assert_eq!(ff.orientation(), Orientation::AsIs);
}

#[test]
fn hyperparams_defaults_and_validation() {
    let hp = HyperParams::default();
    assert_eq!(hp.a0, 0.01);
    assert_eq!(hp.b0, 0.01);
    assert_eq!(hp.e0, 1.0);
    assert_eq!(hp.f0, 1.0);
    assert_eq!(hp.a_t, 1e-6);
    assert_eq!(hp.b_t, 1e-6);
    assert_eq!(hp.n_iter, 5000);
    assert_eq!(hp.burn_frac, 0.5);
    assert_eq!(hp.k_max, 20);
    assert_eq!(hp.pg_truncation, 6);
    assert_eq!(hp.eps_q, 1e-6);
    assert_eq!(hp.alpha_floor, 1e-3);
    assert_eq!(hp.first_snapshot_iter(), 2501);

    let sched = default_prune_schedule();
    assert_eq!(sched.first(), Some(&525));
    assert_eq!(sched.last(), Some(&4975));
    assert_eq!(sched.len(), 90);
    assert!(sched.windows(2).all(|w| w[1] - w[0] == 50));

    let mut bad = hp.clone();
    bad.burn_frac = 1.0;
    assert!(bad.validate().is_err());
    let mut bad2 = hp.clone();
    bad2.k_max = 0;
    assert!(bad2.validate().is_err());
    let mut bad3 = hp;
    bad3.a_t = 0.0;
    assert!(bad3.validate().is_err());
}

#[test]
fn variant_shapes_and_parsing() {
    assert!(Variant::Sum.check_shape(20, 1).is_ok());
    assert!(Variant::Sum.check_shape(20, 2).is_err());
    assert!(Variant::Stack.check_shape(1, 7).is_ok());
    assert!(Variant::Stack.check_shape(2, 7).is_err());
    assert!(Variant::Softplus.check_shape(1, 1).is_ok());
    assert!(Variant::Softplus.check_shape(1, 2).is_err());
    assert!(Variant::Logistic.check_shape(1, 1).is_ok());
    assert!(Variant::Ss.check_shape(20, 5).is_ok());
    assert!(Variant::Logistic.pins_r());
    assert!(!Variant::Ss.pins_r());
    assert_eq!("ss".parse::<Variant>().unwrap(), Variant::Ss);
    assert_eq!("sum".parse::<Variant>().unwrap(), Variant::Sum);
    assert!("mlp".parse::<Variant>().is_err());
    assert_eq!(Variant::Stack.to_string(), "stack");
}

#[test]
fn fitted_model_validation() {
    let good = model(1, vec![expert(0.5, 1)]);
    assert!(good.validate().is_ok());
    let mut bad_r = good.clone();
    bad_r.experts[0].r = 0.0;
    assert!(bad_r.validate().is_err());
    let mut bad_layers = good.clone();
    bad_layers.experts[0].beta.push(vec![0.0, 0.0]);
    assert!(bad_layers.validate().is_err());
    let mut bad_width = good;
    bad_width.experts[0].beta[0] = vec![0.0];
    assert!(bad_width.validate().is_err());
}
