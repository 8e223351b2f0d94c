use proptest::prelude::*;

use uamlab::cascade::{
    build_cascade, depth_for_tolerance, evaluate_cascade, Cascade, CascadeConfig, CascadePrefix, FamilyConfig,
};
use uamlab::geometry::{make_box, random_samples, sup_distance, AxisBox};
use uamlab::map::{Padded, VectorMap};
use uamlab::probability::{build_classifier, classifier_error, PosteriorTarget};
use uamlab::target::{builtin_target, parse_target, TargetFunction};

fn unit(d: usize) -> AxisBox {
    make_box(vec![0.0; d], vec![1.0; d]).unwrap()
}

fn build(f: &TargetFunction, domain: &AxisBox, eps: f64, cfg: &CascadeConfig, seed: u64) -> Cascade {
    build_cascade(f, &f.id(), domain, eps, cfg, seed).unwrap()
}

/// Constructive guarantees every successful cascade must satisfy.
fn check_invariants(c: &Cascade, f: &TargetFunction, eps: f64, cfg: &CascadeConfig, seed: u64) {
    let eps1 = cfg.schedule.eps1;
    let n = c.depth();
    assert!(n >= 1 && n <= cfg.depth_slack as usize * depth_for_tolerance(eps1, eps));
    for (i, t) in c.traces.iter().enumerate() {
        assert_eq!(t.layer, i + 1);
        let budget = eps1 * cfg.schedule.factor.powi(i as i32);
        assert!((t.epsilon - budget).abs() <= 1e-15 * budget);
        assert!(t.measured_error < t.epsilon);
    }
    assert!(c.final_error() < eps);

    // Fresh points land inside each layer's padded image box.
    let fresh = random_samples(&c.domain, 500, seed ^ 0xabc).unwrap();
    for (i, t) in c.traces.iter().enumerate() {
        for x in fresh.points() {
            let z = evaluate_cascade(c, x, Some(i + 1)).unwrap();
            assert!(t.image_box.contains(&z), "layer {} point {x:?} -> {z:?}", i + 1);
        }
    }
    let padded = Padded {
        inner: f,
        width: c.width,
    };
    assert_eq!(c.dim_out(), padded.dim_out());
}

#[test]
fn sine_cascade_matches_pointwise() {
    let f = builtin_target("sine_wave", 1).unwrap();
    let cfg = CascadeConfig::new(FamilyConfig::default());
    let c = build(&f, &unit(1), 0.01, &cfg, 7);
    check_invariants(&c, &f, 0.01, &cfg, 7);
    for x in random_samples(&unit(1), 20, 99).unwrap().points() {
        let got = evaluate_cascade(&c, x, None).unwrap()[0];
        assert!((got - (2.0 * std::f64::consts::PI * x[0]).sin()).abs() < 0.01);
    }
}

#[test]
fn composition_is_associative() {
    let f = builtin_target("sine_wave", 1).unwrap();
    let c = build(
        &f,
        &unit(1),
        0.05,
        &CascadeConfig::new(FamilyConfig::random_features()),
        3,
    );
    assert!(c.depth() >= 3);
    for x in random_samples(&unit(1), 50, 4).unwrap().points() {
        let full = evaluate_cascade(&c, x, None).unwrap();
        for k in 1..c.depth() {
            let mut z = evaluate_cascade(&c, x, Some(k)).unwrap();
            for m in &c.modules[k..] {
                z = m.evaluate(&z).unwrap();
            }
            assert_eq!(z, full);
        }
        assert_eq!(
            CascadePrefix {
                cascade: &c,
                upto: c.depth()
            }
            .eval(x)
            .unwrap(),
            full
        );
    }
}

#[test]
fn wide_target_is_zero_padded() {
    let f = parse_target(&["x1", "x1*x1", "1 - x1"], 1).unwrap();
    let cfg = CascadeConfig::new(FamilyConfig::random_features());
    let c = build(&f, &unit(1), 0.05, &cfg, 5);
    assert_eq!(c.width, 3);
    check_invariants(&c, &f, 0.05, &cfg, 5);
}

#[test]
fn two_dimensional_domain() {
    for name in ["gaussian_bump", "rotation"] {
        let f = builtin_target(name, 2).unwrap();
        let cfg = CascadeConfig::new(FamilyConfig::default());
        let c = build(&f, &unit(2), 0.1, &cfg, 11);
        check_invariants(&c, &f, 0.1, &cfg, 11);
        let padded = Padded {
            inner: &f,
            width: c.width,
        };
        let err = sup_distance(&c, &padded, &random_samples(&unit(2), 2000, 12).unwrap()).unwrap();
        assert!(err < 0.1, "{name}: fresh error {err}");
    }
}

#[test]
fn early_exit_stops_after_one_layer() {
    let f = builtin_target("identity", 1).unwrap();
    let mut cfg = CascadeConfig::new(FamilyConfig::default());
    cfg.early_exit = true;
    assert_eq!(build(&f, &unit(1), 0.01, &cfg, 1).depth(), 1);
    cfg.early_exit = false;
    assert_eq!(build(&f, &unit(1), 0.01, &cfg, 1).depth(), 8);
}

#[test]
fn tolerance_above_first_budget_gives_one_layer() {
    let f = builtin_target("sine_wave", 1).unwrap();
    let c = build(&f, &unit(1), 2.0, &CascadeConfig::new(FamilyConfig::default()), 1);
    assert_eq!(c.depth(), 1);
}

#[test]
fn three_class_classifier_contract() {
    let t = parse_target(&["2*x1", "-x1", "sin(3*x1)"], 1).unwrap();
    let post = PosteriorTarget::logits(t).unwrap();
    let cfg = CascadeConfig::new(FamilyConfig::random_features());
    let c = build_classifier(&post, &unit(1), 0.1, &cfg, 10_000, 5).unwrap();
    let e = classifier_error(&c, &post, &random_samples(&unit(1), 5000, 6).unwrap()).unwrap();
    assert!(e.p_error < 0.1);
    assert!(e.p_error <= c.lipschitz_used * e.logit_error + 1e-12);
    for x in random_samples(&unit(1), 100, 8).unwrap().points() {
        let p = c.predict(x).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn random_targets_keep_budget_chain(
        a in 0.2f64..1.5,
        b in 0.5f64..6.0,
        c0 in -1.0f64..1.0,
        eps in 0.02f64..0.3,
        grid in any::<bool>(),
        seed in 0u64..1000,
    ) {
        let expr = format!("{a}*sin({b}*x1) + {c0}");
        let f = parse_target(&[expr], 1).unwrap();
        let family = if grid { FamilyConfig::default() } else { FamilyConfig::random_features() };
        let cfg = CascadeConfig::new(family);
        let c = build(&f, &unit(1), eps, &cfg, seed);
        check_invariants(&c, &f, eps, &cfg, seed);
        prop_assert!(c.traces.last().unwrap().epsilon < eps);
    }
}
