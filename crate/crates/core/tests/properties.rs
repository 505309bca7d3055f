use proptest::prelude::*;

use allact::nn::{finite_diff_gradient, mlp_backward, mlp_forward, param_count, LayerSpec, Mlp, ParamVector};
use allact::policy::{ActionBox, GaussianPolicy};
use allact::estimators::QuadratureSpec;
use allact::rng;
use allact::stats;
use statrs::distribution::{Continuous, Normal};

fn arch() -> impl Strategy<Value = (usize, Vec<usize>, usize)> {
    (1usize..4, prop::collection::vec(1usize..6, 0..3), 1usize..3)
}

fn vec_in(len: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, len)
}

fn network() -> impl Strategy<Value = (Vec<LayerSpec>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    arch().prop_flat_map(|(i, h, o)| {
        let spec = LayerSpec::chain(i, &h, o);
        let n = param_count(&spec);
        (Just(spec), vec_in(n, 1.0), vec_in(i, 2.0), vec_in(o, 2.0))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backprop_matches_central_differences((spec, params, x, up) in network()) {
        let analytic = mlp_backward(&params, &spec, &x, &up).unwrap();
        let numeric = finite_diff_gradient(
            |p| stats::dot(&up, &mlp_forward(p, &spec, &x).unwrap()),
            &params,
            1e-6,
        )
        .unwrap();
        for (a, n) in analytic.0.iter().zip(&numeric.0) {
            prop_assert!((a - n).abs() <= 1e-6 * (1.0 + n.abs()), "{a} vs {n}");
        }
    }

    #[test]
    fn flatten_inverts_unflatten((spec, params, _x, _up) in network()) {
        let p = ParamVector(params);
        let blocks = p.unflatten(&spec).unwrap();
        prop_assert_eq!(ParamVector::flatten(&blocks), p);
    }

    #[test]
    fn score_matches_log_prob_differences(
        (spec, params, x, _up) in arch().prop_flat_map(|(i, h, _)| {
            let spec = LayerSpec::chain(i, &h, 1);
            let n = param_count(&spec);
            (Just(spec), vec_in(n, 1.0), vec_in(i, 2.0), vec_in(1, 1.0))
        }),
        a in -3.0f64..3.0,
        sigma in 0.3f64..2.0,
    ) {
        let mlp = Mlp::new(spec, ParamVector(params.clone())).unwrap();
        let box_ = ActionBox::symmetric(1, 5.0).unwrap();
        let policy = GaussianPolicy::new(mlp, vec![sigma], box_).unwrap();
        let score = policy.score(&x, &[a]).unwrap();
        let numeric = finite_diff_gradient(
            |p| {
                let mut q = policy.clone();
                q.params_mut().0.copy_from_slice(p);
                q.log_prob(&x, &[a]).unwrap()
            },
            &params,
            1e-6,
        )
        .unwrap();
        for (s, n) in score.0.iter().zip(&numeric.0) {
            prop_assert!((s - n).abs() <= 1e-5 * (1.0 + n.abs()));
        }
    }

    #[test]
    fn log_prob_matches_reference_normal(mu in -4.0f64..4.0, a in -4.0f64..4.0, sigma in 0.05f64..3.0) {
        let mlp = Mlp::zeros(LayerSpec::chain(1, &[], 1)).unwrap();
        let policy = GaussianPolicy::new(mlp, vec![sigma], ActionBox::symmetric(1, 5.0).unwrap()).unwrap();
        let expected = Normal::new(mu, sigma).unwrap().ln_pdf(a);
        prop_assert!((policy.log_prob_given_mean(&[mu], &[a]) - expected).abs() < 1e-12);
    }

    #[test]
    fn samples_stay_in_box(mu in -20.0f64..20.0, half in 0.1f64..5.0, seed in any::<u64>()) {
        let mlp = Mlp::zeros(LayerSpec::chain(1, &[], 1)).unwrap();
        let box_ = ActionBox::symmetric(1, half).unwrap();
        let policy = GaussianPolicy::new(mlp, vec![1.0], box_.clone()).unwrap();
        let mut r = rng::from_seed(seed);
        for _ in 0..32 {
            let mut a = policy.sample_around(&[mu], &mut r);
            box_.clip(&mut a);
            prop_assert!(box_.contains(&a));
        }
    }

    #[test]
    fn trapezoid_integrates_lines_exactly(
        points in 2usize..200,
        low in -10.0f64..0.0,
        width in 0.1f64..10.0,
        c in -5.0f64..5.0,
        m in -5.0f64..5.0,
    ) {
        let high = low + width;
        let q = QuadratureSpec::new(points, low, high).unwrap();
        let approx: f64 = q.grid().iter().zip(q.weights()).map(|(x, w)| w * (c + m * x)).sum();
        let exact = c * width + 0.5 * m * (high * high - low * low);
        prop_assert!((approx - exact).abs() <= 1e-10 * (1.0 + exact.abs()));
    }

    #[test]
    fn derived_streams_are_reproducible(seed in any::<u64>(), index in 0u64..64) {
        use rand::Rng as _;
        let a: Vec<u64> = (0..8).map({ let mut r = rng::stream(seed, index); move |_| r.random() }).collect();
        let b: Vec<u64> = (0..8).map({ let mut r = rng::stream(seed, index); move |_| r.random() }).collect();
        let c: Vec<u64> = (0..8).map({ let mut r = rng::stream(seed, index + 1); move |_| r.random() }).collect();
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(a, c);
    }

    #[test]
    fn sample_variance_is_shift_invariant(xs in prop::collection::vec(-100.0f64..100.0, 2..50), shift in -1e3f64..1e3) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let v = stats::sample_variance(&xs);
        prop_assert!(v >= 0.0);
        prop_assert!((stats::sample_variance(&shifted) - v).abs() <= 1e-8 * (1.0 + v));
    }
}
