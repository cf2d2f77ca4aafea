mod support;

use bayescount::exec::Exec;
use bayescount::loss::{bayes_loss_with, expected_counts_with};
use bayescount::{
    baseline_density, baseline_loss, bayes_loss, expected_counts, total_count, DensityGrid, Distance, Error,
    Kernel, LossConfig, LossKind, Point2, Scene,
};
use rand::Rng;
use support::{
    close, density_gradcheck, oracle_bayes_loss, oracle_counts, random_cfg, random_density, random_scene, rng,
};

#[test]
fn counts_add_up_to_total_mass() {
    let mut r = rng(21);
    for k in 0..1000 {
        let s = random_scene(&mut r, 24, 15, 1);
        let cfg = random_cfg(&mut r, k % 2 == 0);
        let d = random_density(&mut r, &s, 2.0);
        let e = expected_counts(&s, &d, &cfg).unwrap();
        let total = total_count(&d);
        assert!((e.total() - total).abs() <= 1e-9 * total, "{} vs {total}", e.total());
    }
}

#[test]
fn counts_and_loss_match_dense_oracle() {
    let mut r = rng(22);
    for k in 0..200 {
        let s = random_scene(&mut r, 32, 20, 1);
        let cfg = random_cfg(&mut r, k % 2 == 0);
        let margin = cfg.background.then(|| cfg.margin.resolve(&s));
        let d = random_density(&mut r, &s, 1.0);
        let e = expected_counts(&s, &d, &cfg).unwrap();
        let oracle = oracle_counts(&s, d.values(), cfg.sigma, margin);
        for (a, b) in e.per_head.iter().zip(&oracle) {
            assert!(close(*a, *b, 1e-12), "{a} vs {b}");
        }
        if cfg.background {
            assert!(close(e.background, oracle[s.count()], 1e-12));
        }
        let loss = bayes_loss(&s, &d, &cfg).unwrap().value;
        assert!(close(loss, oracle_bayes_loss(&s, d.values(), cfg.sigma, margin), 1e-12));
    }
}

#[test]
fn large_grid_spans_many_tiles() {
    let mut r = rng(23);
    let s = Scene::new(
        100,
        90,
        1,
        (0..25).map(|_| Point2::new(r.gen_range(0.0..100.0), r.gen_range(0.0..90.0))).collect(),
    )
    .unwrap();
    let cfg = LossConfig::new(5.0).with_background(bayescount::Margin::Fraction(0.15));
    let d = random_density(&mut r, &s, 0.05);
    let e = expected_counts(&s, &d, &cfg).unwrap();
    let oracle = oracle_counts(&s, d.values(), 5.0, Some(13.5));
    for (a, b) in e.per_head.iter().chain([&e.background]).zip(&oracle) {
        assert!(close(*a, *b, 1e-12), "{a} vs {b}");
    }
}

#[test]
fn exec_modes_agree_bitwise() {
    let mut r = rng(24);
    for _ in 0..5 {
        let s = random_scene(&mut r, 120, 20, 1);
        let cfg = random_cfg(&mut r, true);
        let d = random_density(&mut r, &s, 1.0);
        assert_eq!(
            expected_counts_with(Exec::Sequential, &s, &d, &cfg).unwrap(),
            expected_counts_with(Exec::Parallel, &s, &d, &cfg).unwrap()
        );
        assert_eq!(
            bayes_loss_with(Exec::Sequential, &s, &d, &cfg).unwrap(),
            bayes_loss_with(Exec::Parallel, &s, &d, &cfg).unwrap()
        );
    }
}

#[test]
fn density_gradients_match_finite_differences() {
    for (kind, squared) in [
        (LossKind::Baseline, false),
        (LossKind::Bayes, false),
        (LossKind::BayesPlus, false),
        (LossKind::Bayes, true),
        (LossKind::BayesPlus, true),
    ] {
        let st = density_gradcheck(kind, squared, 25, 40);
        assert!(st.worst < 1e-6, "{kind} squared={squared}: {st:?}");
        assert!(st.checked > 10 * st.skipped, "{kind}: too many kinks {st:?}");
    }
}

#[test]
fn empty_scene_pushes_mass_to_zero() {
    let s = Scene::new(2, 2, 1, vec![]).unwrap();
    let d = DensityGrid::new(2, 2, vec![0.5, 1.0, 0.7, 1.0]).unwrap();
    for cfg in [LossConfig::new(8.0), LossConfig::new(8.0).with_background(bayescount::Margin::Absolute(2.0))] {
        let l = bayes_loss(&s, &d, &cfg).unwrap();
        assert_eq!(l.value, 3.2);
        assert!(l.gradient.values().iter().all(|&g| g == 1.0));
    }
    let l = bayes_loss(&s, &d, &LossConfig::new(8.0).with_distance(Distance::Squared)).unwrap();
    assert!((l.value - 3.2 * 3.2).abs() < 1e-12);
    assert!(l.gradient.values().iter().all(|&g| (g - 6.4).abs() < 1e-12));
    assert!(matches!(expected_counts(&s, &d, &LossConfig::new(8.0)), Err(Error::EmptyScene)));
}

#[test]
fn zero_density_loses_one_per_head() {
    let mut r = rng(26);
    for _ in 0..20 {
        let s = random_scene(&mut r, 12, 8, 1);
        let d = DensityGrid::zeros(s.height(), s.width());
        let l = bayes_loss(&s, &d, &random_cfg(&mut r, false)).unwrap();
        assert_eq!(l.value, s.count() as f64);
    }
}

#[test]
fn losses_are_nonnegative() {
    let mut r = rng(27);
    for k in 0..300 {
        let s = random_scene(&mut r, 12, 8, 0);
        let cfg = random_cfg(&mut r, k % 2 == 0);
        let d = random_density(&mut r, &s, 1.0);
        assert!(bayes_loss(&s, &d, &cfg).unwrap().value >= 0.0);
        let gt = baseline_density(&s, Kernel::Fixed { sigma: cfg.sigma }).unwrap();
        assert!(baseline_loss(&gt, &d).unwrap().value >= 0.0);
    }
}

#[test]
fn shape_mismatch_is_reported() {
    let s = Scene::new(3, 3, 1, vec![Point2::new(1.0, 1.0)]).unwrap();
    let d = DensityGrid::zeros(3, 4);
    assert!(matches!(
        bayes_loss(&s, &d, &LossConfig::new(1.0)),
        Err(Error::Shape { expected: (3, 3), actual: (3, 4) })
    ));
    assert!(matches!(baseline_loss(&DensityGrid::zeros(3, 3), &d), Err(Error::Shape { .. })));
}

#[test]
fn baseline_kernels_carry_unit_mass() {
    let mut r = rng(28);
    for _ in 0..200 {
        let s = random_scene(&mut r, 40, 10, 0);
        let fixed = baseline_density(&s, Kernel::Fixed { sigma: support::random_sigma(&mut r) }).unwrap();
        assert!((total_count(&fixed) - s.count() as f64).abs() < 1e-12 * (1 + s.count()) as f64);
        let adaptive = baseline_density(&s, Kernel::Adaptive { beta: 0.3 }).unwrap();
        assert!((total_count(&adaptive) - s.count() as f64).abs() < 1e-12 * (1 + s.count()) as f64);
        assert!(fixed.values().iter().chain(adaptive.values()).all(|&v| v >= 0.0));
    }
}

#[test]
fn baseline_loss_matches_scalar_loop() {
    let mut r = rng(29);
    for _ in 0..100 {
        let gt = DensityGrid::new(4, 4, support::random_values(&mut r, 16, 1.0)).unwrap();
        let est = DensityGrid::new(4, 4, support::random_values(&mut r, 16, 1.0)).unwrap();
        let mut want = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let diff = est.get(i, j) - gt.get(i, j);
                want += diff * diff;
            }
        }
        let l = baseline_loss(&gt, &est).unwrap();
        assert!((l.value - want).abs() < 1e-12);
        assert!(baseline_loss(&gt, &gt).unwrap().value == 0.0);
    }
    let gt = DensityGrid::zeros(2, 2);
    let est = DensityGrid::new(2, 2, vec![0.0, 2.0, 0.0, 0.0]).unwrap();
    let l = baseline_loss(&gt, &est).unwrap();
    assert_eq!(l.value, 4.0);
    assert_eq!(l.gradient.values(), &[0.0, 4.0, 0.0, 0.0]);
}

#[test]
fn single_head_counts_everything() {
    let mut r = rng(30);
    for _ in 0..50 {
        let s = random_scene(&mut r, 16, 1, 1);
        let d = random_density(&mut r, &s, 1.0);
        let e = expected_counts(&s, &d, &LossConfig::new(3.0)).unwrap();
        assert!(close(e.per_head[0], total_count(&d), 1e-12));
        assert_eq!(e.background, 0.0);
    }
}
