use mad_core::dataset::{collect, DatasetBuilder, TrajectoryDataset};
use mad_core::diffnet::{Graph, Mlp, Tensor};
use mad_core::env::CliffWalking;
use mad_core::training::{
    loss_maddist, sample_step_batches, train, Objective, TrainConfig, TrainState,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic chain s0 → s1 → s2 with one-hot observations; every
/// trajectory starts at s0 and ends absorbed in s2.
fn chain_dataset() -> TrajectoryDataset {
    let one_hot = |i: usize| {
        let mut v = [0.0; 3];
        v[i] = 1.0;
        v
    };
    let mut b = DatasetBuilder::new("chain", 3, 0);
    for tail in 0..4 {
        let ids: Vec<usize> = [0, 1]
            .into_iter()
            .chain(std::iter::repeat_n(2, 1 + tail))
            .collect();
        let obs: Vec<[f64; 3]> = ids.iter().map(|&i| one_hot(i)).collect();
        b.push(ids.iter().zip(&obs).map(|(&i, o)| (i, o.as_slice())))
            .unwrap();
    }
    b.finish()
}

fn small(objective: Objective, steps: usize) -> TrainConfig {
    let base = match objective {
        Objective::MadDist { .. } => TrainConfig::maddist(),
        Objective::TdMadDist { .. } => TrainConfig::tdmaddist(),
    };
    TrainConfig {
        objective,
        hidden: vec![16, 16],
        latent_dim: 8,
        batch_objective: 32,
        batch_constraint: 32,
        steps,
        eval_interval: 0,
        ..base
    }
}

fn learned(net: &Mlp, cfg: &TrainConfig, a: &[f64], b: &[f64]) -> f64 {
    let e = net.forward(&Tensor::from_rows(&[a, b]).unwrap()).unwrap();
    cfg.quasimetric.distance(e.row(0), e.row(1)).unwrap()
}

#[test]
fn chain_distance_is_learned() {
    let ds = chain_dataset();
    let mut cfg = small(Objective::MadDist { d_max: 100.0 }, 4000);
    cfg.optimizer.learning_rate = 1e-3;
    let st = train(&ds, &cfg, 0, None).unwrap();
    let d = learned(&st.online, &cfg, &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]);
    assert!((1.6..=2.4).contains(&d), "d(s0, s2) = {d}");
}

#[test]
fn training_is_bit_identical_under_a_seed() {
    let env = CliffWalking::new();
    let ds = collect(&env, 5, 40, 0).unwrap();
    for objective in [
        Objective::MadDist { d_max: 100.0 },
        Objective::TdMadDist { polyak_beta: 0.05 },
    ] {
        let cfg = small(objective, 30);
        let a = train(&ds, &cfg, 7, None).unwrap();
        let b = train(&ds, &cfg, 7, None).unwrap();
        let bits = |s: &TrainState| -> Vec<u64> {
            s.online
                .params()
                .iter()
                .flat_map(|p| p.data().iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.history, b.history);
    }
}

#[test]
fn unit_polyak_rate_keeps_target_equal_to_online() {
    let ds = collect(&CliffWalking::new(), 5, 40, 0).unwrap();
    let cfg = small(Objective::TdMadDist { polyak_beta: 1.0 }, 3);
    let st = train(&ds, &cfg, 1, None).unwrap();
    assert_eq!(st.target.as_ref().unwrap(), &st.online);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn loss_components_are_non_negative(seed in any::<u64>()) {
        let ds = collect(&CliffWalking::new(), 3, 30, seed).unwrap();
        let cfg = small(Objective::MadDist { d_max: 100.0 }, 1);
        let net = Mlp::new(2, &cfg.hidden, cfg.latent_dim, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let batches = sample_step_batches(&ds, &cfg, &mut rng).unwrap();
        let mut g = Graph::new();
        let (nodes, _) = loss_maddist(&mut g, &net, &ds, &batches, &cfg).unwrap();
        let v = nodes.values(&g).unwrap();
        prop_assert!(v.objective >= 0.0 && v.random >= 0.0 && v.constraint >= 0.0);
        if v.constraint == 0.0 {
            let c = &batches.constraint;
            for ((a, p), &gap) in c.anchors.iter().zip(&c.partners).zip(c.gaps.as_ref().unwrap()) {
                prop_assert!(learned(&net, &cfg, ds.observation(*a), ds.observation(*p)) <= gap as f64 + 1e-9);
            }
        }
    }

    #[test]
    fn learned_distance_is_a_quasimetric(
        seed in any::<u64>(),
        pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 3),
    ) {
        let cfg = small(Objective::MadDist { d_max: 100.0 }, 1);
        let net = Mlp::new(2, &cfg.hidden, cfg.latent_dim, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let d = |a: &[f64], b: &[f64]| learned(&net, &cfg, a, b);
        prop_assert_eq!(d(&pts[0], &pts[0]), 0.0);
        prop_assert!(d(&pts[0], &pts[1]) >= 0.0);
        prop_assert!(d(&pts[0], &pts[2]) <= d(&pts[0], &pts[1]) + d(&pts[1], &pts[2]) + 1e-9);
    }
}
