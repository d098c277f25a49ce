use std::collections::BTreeSet;
use std::sync::Arc;

use margin_adapt::binomial::{binom_pmf, pmf_floor, FloorMode};
use margin_adapt::complexity::{
    fixed_point, u_hat, ComplexityConfig, EmpiricalProfile, FixedPointKind, GeometricGrid,
};
use margin_adapt::domain::{
    draw_sample, empirical_mean, excess_risk, population_mean, DiscreteDistribution, Domain, LossFunction,
    Model, Sample,
};
use margin_adapt::erm::{diameter, erm, minimal_set, rademacher_modulus, rademacher_signs, Basis};
use margin_adapt::margin::MarginFunction;
use margin_adapt::CHECK_TOL;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Instance {
    masses: Vec<f64>,
    eta: Vec<f64>,
    predictors: Vec<Vec<u8>>,
    n: usize,
    seed: u64,
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..5)
        .prop_flat_map(|g| {
            (
                prop::collection::vec(0.05f64..1.0, g),
                prop::collection::vec(0.0f64..=1.0, g),
                prop::collection::vec(prop::collection::vec(0u8..2, g), 1..6),
                5usize..60,
                any::<u64>(),
            )
        })
        .prop_map(|(w, eta, predictors, n, seed)| {
            let total: f64 = w.iter().sum();
            Instance { masses: w.iter().map(|v| v / total).collect(), eta, predictors, n, seed }
        })
}

struct Built {
    p: DiscreteDistribution,
    model: Model,
    sample: Sample,
    bayes: LossFunction,
}

fn build(inst: &Instance) -> Built {
    let labels: Vec<String> = (0..inst.masses.len()).map(|i| format!("x{i}")).collect();
    let d = Arc::new(Domain::product(labels).unwrap());
    let p = DiscreteDistribution::from_regression(d.clone(), &inst.masses, &inst.eta).unwrap();
    let fs = inst
        .predictors
        .iter()
        .enumerate()
        .map(|(i, u)| LossFunction::zero_one(i, d.clone(), u).unwrap())
        .collect();
    let model = Model::new("m", fs).unwrap();
    let sample = draw_sample(&p, inst.n, inst.seed).unwrap();
    let bayes = LossFunction::zero_one(usize::MAX, d, &p.bayes_predictor()).unwrap();
    Built { p, model, sample, bayes }
}

fn cfg(t: f64) -> ComplexityConfig {
    ComplexityConfig {
        t,
        grid: GeometricGrid { min: 1e-3, max: 4.0, ratio: 1.2 },
        mc_reps: 20,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn minimal_sets_grow_with_level(inst in instance(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let Built { p, model, sample, .. } = build(&inst);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for basis in [Basis::Population(&p), Basis::Empirical(&sample)] {
            let small: BTreeSet<usize> = minimal_set(&model, basis, lo).unwrap().member_ids.into_iter().collect();
            let large: BTreeSet<usize> = minimal_set(&model, basis, hi).unwrap().member_ids.into_iter().collect();
            prop_assert!(!small.is_empty());
            prop_assert!(small.is_subset(&large));
            prop_assert!(diameter(&model, basis, lo).unwrap() <= diameter(&model, basis, hi).unwrap() + CHECK_TOL);
        }
        let eps = rademacher_signs(sample.len(), inst.seed ^ 1);
        let r_lo = rademacher_modulus(&model, &sample, lo, &eps).unwrap();
        let r_hi = rademacher_modulus(&model, &sample, hi, &eps).unwrap();
        prop_assert!(r_lo <= r_hi + CHECK_TOL);
    }

    #[test]
    fn erm_minimizes_and_excess_is_nonnegative(inst in instance()) {
        let Built { p, model, sample, bayes } = build(&inst);
        let best = empirical_mean(erm(&model, &sample).unwrap(), &sample).unwrap();
        for f in model.functions() {
            prop_assert!(best <= empirical_mean(f, &sample).unwrap() + CHECK_TOL);
            prop_assert!(excess_risk(f, &p, &bayes).unwrap() >= -CHECK_TOL);
        }
    }

    #[test]
    fn population_mean_is_linear(inst in instance(), a in 0.0f64..=1.0) {
        let b = 1.0 - a;
        let Built { p, model, .. } = build(&inst);
        let f = &model.functions()[0];
        let g = model.functions().last().unwrap();
        let combo: Vec<f64> = f.values().iter().zip(g.values()).map(|(x, y)| a * x + b * y).collect();
        let h = LossFunction::new(99, f.domain().clone(), combo).unwrap();
        let lhs = population_mean(&h, &p).unwrap();
        let rhs = a * population_mean(f, &p).unwrap() + b * population_mean(g, &p).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn empirical_complexity_is_monotone_and_certified(
        inst in instance(),
        t in 0.1f64..5.0,
        dt in 0.0f64..5.0,
        kh in 0.5f64..3.0,
        dk in 0.0f64..2.0,
    ) {
        let Built { model, sample, .. } = build(&inst);
        let eps = rademacher_signs(sample.len(), inst.seed);
        let profile = EmpiricalProfile::new(&model, &sample, &eps).unwrap();
        let base = ComplexityConfig { khat: kh, ..cfg(t) };
        let r0 = profile.fixed_point(&base);
        prop_assert!(r0.is_valid_certificate(CHECK_TOL));
        let r_t = profile.fixed_point(&base.with_t(t + dt));
        let r_k = profile.fixed_point(&ComplexityConfig { khat: kh + dk, ..base });
        prop_assert!(r0.delta <= r_t.delta);
        prop_assert!(r0.delta <= r_k.delta);
        for sigma in [1e-3, 0.05, 0.3, 1.7] {
            let direct = u_hat(&model, &sample, sigma, &base, &eps).unwrap();
            prop_assert!((profile.u_hat(sigma, &base) - direct).abs() <= 1e-12);
        }
    }

    #[test]
    fn ideal_complexity_grows_with_scale(inst in instance(), kb in 0.5f64..2.0, dk in 0.0f64..2.0) {
        let Built { p, model, .. } = build(&inst);
        let small = ComplexityConfig { kbar: kb, ..cfg(1.0) };
        let large = ComplexityConfig { kbar: kb + dk, ..small };
        let a = fixed_point(FixedPointKind::Ideal { p: &p, n: inst.n }, &model, &small).unwrap();
        let b = fixed_point(FixedPointKind::Ideal { p: &p, n: inst.n }, &model, &large).unwrap();
        prop_assert!(a.is_valid_certificate(CHECK_TOL));
        prop_assert!(a.delta <= b.delta);
    }

    #[test]
    fn conjugate_is_monotone_and_satisfies_young(
        h in 0.01f64..10.0,
        kappa in 1.0f64..4.0,
        x in 0.0f64..5.0,
        dx in 0.0f64..5.0,
        y in 0.0f64..5.0,
    ) {
        let phi = MarginFunction::power(h, kappa).unwrap();
        let cx = phi.conjugate(x);
        prop_assert!(cx >= 0.0);
        prop_assert!(cx <= phi.conjugate(x + dx) + 1e-12);
        prop_assert!(x * y <= phi.eval(y) + cx + 1e-9 * (1.0 + x * y));
        let tab = MarginFunction::tabulated(vec![(0.0, 0.0), (1.0, h), (2.0, 3.0 * h)]).unwrap();
        prop_assert!(x * y <= tab.eval(y) + tab.conjugate(x) + 1e-2 * (1.0 + x * y));
    }

    #[test]
    fn pmf_is_a_distribution(n in 1u64..400, p in 0.0f64..=1.0) {
        let s: f64 = (0..=n).map(|k| binom_pmf(n, p, k).unwrap()).sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn exact_floor_matches_grid(n in 2u64..200, a in 0.2f64..2.0, b in 0.2f64..2.0, c in 0.05f64..0.45) {
        let exact = pmf_floor(n, a, b, c, FloorMode::Exact).unwrap();
        let grid = pmf_floor(n, a, b, c, FloorMode::Grid(201)).unwrap();
        prop_assert!(exact.min_value <= grid.min_value + 1e-12);
        prop_assert!(exact.min_value > 0.0);
    }
}
