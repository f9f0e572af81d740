mod common;

use aspect_rec::aspect::{em_iteration, log_likelihood, AspectModel, Event, ModelKind, SnapshotMeta};
use common::Instance;
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = ModelKind> {
    prop_oneof![
        Just(ModelKind::TwoWay),
        Just(ModelKind::ThreeWay),
        Just(ModelKind::UserWords)
    ]
}

fn event(u: usize, d: Option<usize>, w: Option<usize>) -> Event {
    match (d, w) {
        (Some(doc), Some(word)) => Event::UserDocWord { user: u, doc, word },
        (Some(doc), None) => Event::UserDoc { user: u, doc },
        (None, Some(word)) => Event::UserWord { user: u, word },
        (None, None) => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn untempered_em_never_lowers_training_likelihood(kind in kind_strategy(), seed in any::<u64>()) {
        let inst = Instance::random(kind, seed);
        let obs = inst.observations();
        let mut model = AspectModel::random(kind, inst.k, inst.dims(), seed ^ 0xabc).unwrap();
        let mut prev = log_likelihood(&model, &obs).unwrap().value;
        for _ in 0..25 {
            model = em_iteration(&model, &obs, 1.0).unwrap().0;
            let ll = log_likelihood(&model, &obs).unwrap().value;
            prop_assert!(ll >= prev - 1e-8, "{} -> {}", prev, ll);
            prev = ll;
        }
    }

    #[test]
    fn parameters_and_posteriors_stay_normalised(
        kind in kind_strategy(),
        seed in any::<u64>(),
        beta in 0.5f64..=1.0,
    ) {
        let inst = Instance::random(kind, seed);
        let obs = inst.observations();
        let mut model = AspectModel::random(kind, inst.k, inst.dims(), seed).unwrap();
        for _ in 0..5 {
            model = em_iteration(&model, &obs, beta).unwrap().0;
            prop_assert_eq!(model.invariant_violation(1e-9), None);
            for (u, d, w, _) in inst.dense_observations() {
                let post = model.posterior(event(u, d, w), beta).unwrap();
                prop_assert!((post.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn snapshots_round_trip_exactly(kind in kind_strategy(), seed in any::<u64>()) {
        let inst = Instance::random(kind, seed);
        let model = em_iteration(
            &AspectModel::random(kind, inst.k, inst.dims(), seed).unwrap(),
            &inst.observations(),
            1.0,
        )
        .unwrap()
        .0;
        let meta = SnapshotMeta { seed, config_digest: "d".into() };
        let mut buf = Vec::new();
        model.write_snapshot(&mut buf, &meta).unwrap();
        let (back, back_meta) = AspectModel::read_snapshot(buf.as_slice()).unwrap();
        prop_assert_eq!(back, model);
        prop_assert_eq!(back_meta, meta);
    }

    #[test]
    fn holdout_partitions_observation_weight(
        kind in kind_strategy(),
        seed in any::<u64>(),
        fraction in 0.05f64..0.5,
    ) {
        let obs = Instance::random(kind, seed).observations();
        if let Ok((train, valid)) = obs.holdout(fraction, seed) {
            let total = obs.total_weight();
            prop_assert!((train.total_weight() + valid.total_weight() - total).abs() <= 1e-9 * total);
            prop_assert!(!train.is_empty());
        }
    }
}
