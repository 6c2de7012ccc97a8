use pathpref_core::bayes::{Choice, PosteriorState, PriorKind};
use pathpref_core::experiments::median;
use pathpref_core::regions::Side;
use pathpref_core::select::{logistic_preference, sigmoid};
use proptest::prelude::*;

fn side() -> impl Strategy<Value = Side> {
    prop_oneof![
        Just(Side::InsideIJ),
        Just(Side::InsideJI),
        Just(Side::Mixed)
    ]
}

proptest! {
    #[test]
    fn posterior_stays_normalized_and_measure_shrinks(
        n in 2usize..8,
        steps in prop::collection::vec((prop::collection::vec(side(), 8), any::<bool>(), 0.51f64..0.999), 0..60),
    ) {
        let prior = vec![1.0 / n as f64; n];
        let mut state = PosteriorState::from_prior(PriorKind::Uniform, &prior);
        let mut measure = state.total_measure();
        for (sides, first, p) in steps {
            let choice = if first { Choice::First } else { Choice::Second };
            state.apply_sides(&sides[..n], choice, p).unwrap();
            let probs = state.probabilities();
            prop_assert!(probs.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let m = state.total_measure();
            prop_assert!(m <= measure * (1.0 + 1e-12));
            measure = m;
        }
    }

    #[test]
    fn mirrored_answers_cancel(n in 2usize..6, sides in prop::collection::vec(side(), 6), p in 0.51f64..0.999) {
        let prior = vec![1.0 / n as f64; n];
        let mut state = PosteriorState::from_prior(PriorKind::Uniform, &prior);
        state.apply_sides(&sides[..n], Choice::First, p).unwrap();
        let mirrored: Vec<Side> = sides[..n].iter().map(|s| s.mirrored()).collect();
        state.apply_sides(&mirrored, Choice::First, p).unwrap();
        // Decisive regions saw p̂(1 − p̂), Mixed ones ¼; uniform kinds cancel.
        let decisive = sides[..n].iter().filter(|s| s.is_decisive()).count();
        if decisive == 0 || decisive == n {
            for (a, b) in state.probabilities().iter().zip(&prior) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn logistic_preference_is_complementary(beta in 0.0f64..50.0, a in -100.0f64..100.0, b in -100.0f64..100.0) {
        let p = logistic_preference(beta, a, b);
        let q = logistic_preference(beta, b, a);
        prop_assert!((p + q - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn median_lies_between_extremes(values in prop::collection::vec(-1e6f64..1e6, 1..50)) {
        let m = median(&values).unwrap();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= m && m <= hi);
    }
}
