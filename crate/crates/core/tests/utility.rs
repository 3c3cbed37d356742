use proptest::prelude::*;
use riskpoa_core::utility::*;

fn exp_model() -> UtilityModel {
    UtilityModel::exponential()
}

fn finite(m: &UtilityModel, v: f64, p: f64) -> f64 {
    m.eval(v, p).unwrap().finite().unwrap()
}

#[test]
fn spec_examples() {
    assert!((finite(&UtilityModel::Quasilinear, 1.0, 0.9) - 0.1).abs() < 1e-15);
    assert_eq!(finite(&exp_model(), 1.0, 1.0), 0.0);
    // closed forms evaluated independently of the transform code
    let e = std::f64::consts::E;
    let half = (1.0 - (-0.5f64).exp()) / (1.0 - 1.0 / e);
    assert!((finite(&exp_model(), 1.0, 0.5) - half).abs() < 1e-14);
    assert!((half - 0.622_459_331_201_854_6).abs() < 1e-12);
    // losing bid 0.5 with reference value 1
    let lose = exp_model().eval_with_reference(0.0, 0.5, 1.0).unwrap().finite().unwrap();
    assert!((lose - (1.0 - 0.5f64.exp()) / (1.0 - 1.0 / e)).abs() < 1e-14);
    assert!((lose + 1.026_261_939_498_273_7).abs() < 1e-13, "{lose}");
}

#[test]
fn budget_sentinel() {
    let m = UtilityModel::budgeted(UtilityModel::Quasilinear, 0.5);
    assert_eq!(m.eval(1.0, 0.4).unwrap(), Utility::Finite(0.6));
    assert!(m.eval(1.0, 0.6).unwrap().is_infeasible());
}

#[test]
fn normalization_reports() {
    let ps: Vec<f64> = (0..64).map(|k| 4.0 * k as f64 / 63.0).collect();
    assert!(check_normalization(&UtilityModel::Quasilinear, &[0.5, 1.0, 2.0], &ps).passed());
    assert!(check_normalization(&exp_model(), &[0.5, 1.0, 2.0], &ps).passed());
    let r = check_normalization_with(|v: f64, p: f64| Some(v - 2.0 * p), &[1.0], &[0.0, 0.5, 1.0, 2.0]);
    assert!(!r.passed());
}

#[test]
fn cap_examples() {
    assert_eq!(cap_valuation(&[5.0], &[3.0]).unwrap(), vec![3.0]);
    assert_eq!(cap_valuation(&[2.0], &[f64::INFINITY]).unwrap(), vec![2.0]);
    assert_eq!(cap_valuation(&[7.0, 3.0], &[4.0, 4.0]).unwrap(), vec![4.0, 3.0]);
}

#[test]
fn variance_examples() {
    let coin = Lottery::new(vec![(0.5, 1.0), (0.5, 0.0)]).unwrap();
    assert_eq!(variance_adjusted(&coin, 1.0).unwrap(), 0.0);
    assert_eq!(variance_adjusted(&coin, 0.0).unwrap(), 0.5);
    assert_eq!(variance_adjusted(&Lottery::certain(5.0), 0.7).unwrap(), 5.0);
}

fn transforms() -> impl Strategy<Value = ConcaveTransform> {
    prop_oneof![
        Just(ConcaveTransform::Linear),
        Just(ConcaveTransform::Exponential),
        (1.0f64..20.0).prop_map(|c| ConcaveTransform::PiecewiseLinear { slope: c }),
    ]
}

proptest! {
    #[test]
    fn transform_monotone(h in transforms(), a in -50.0f64..50.0, b in -50.0f64..50.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(h.eval(lo) <= h.eval(hi));
    }

    #[test]
    fn linear_is_quasilinear(v in 0.01f64..10.0, p in 0.0f64..20.0) {
        let lin = UtilityModel::risk_averse(ConcaveTransform::Linear);
        prop_assert!((finite(&lin, v, p) - (v - p)).abs() <= 1e-12 * v.max(p).max(1.0));
    }

    #[test]
    fn variance_adjusted_nonincreasing(
        outcomes in prop::collection::vec((0.01f64..1.0, -5.0f64..5.0), 1..6),
        g1 in 0.0f64..1.0,
        g2 in 0.0f64..1.0,
    ) {
        let total: f64 = outcomes.iter().map(|o| o.0).sum();
        let l = Lottery::new(outcomes.iter().map(|&(p, x)| (p / total, x)).collect()).unwrap();
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        prop_assert!(variance_adjusted(&l, hi).unwrap() <= variance_adjusted(&l, lo).unwrap() + 1e-15);
    }

    #[test]
    fn gamma_zero_is_expectation(outcomes in prop::collection::vec((0.01f64..1.0, -5.0f64..5.0), 1..6)) {
        let total: f64 = outcomes.iter().map(|o| o.0).sum();
        let probs: Vec<(f64, f64)> = outcomes.iter().map(|&(p, x)| (p / total, x)).collect();
        let mean: f64 = probs.iter().map(|(p, x)| p * x).sum();
        let l = Lottery::new(probs).unwrap();
        prop_assert!((variance_adjusted(&l, 0.0).unwrap() - mean).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn risk_averse_models_normalized(
        slope in 1.0f64..30.0,
        exponential in any::<bool>(),
        values in prop::collection::vec(0.01f64..10.0, 1..5),
        points in 2usize..40,
    ) {
        let h = if exponential { ConcaveTransform::Exponential } else { ConcaveTransform::PiecewiseLinear { slope } };
        let vmax = values.iter().copied().fold(0.0, f64::max);
        let ps: Vec<f64> = (0..points).map(|k| 2.0 * vmax * k as f64 / (points - 1) as f64).collect();
        let r = check_normalization(&UtilityModel::risk_averse(h), &values, &ps);
        prop_assert!(r.passed(), "{:?}", r);
    }
}
