use fedsim::availability::{
    assign_by_datasize, assign_random, assign_regional, build_plans, company_threshold, AvailabilityPlan, RevealState,
    Scenario, ScenarioTag,
};
use fedsim::data::{partition_by_vehicle, synth_trajectories, BBox, SynthKind, TrajectoryPoint};
use fedsim::rng::{stream_rng, Stream};
use proptest::prelude::*;
use rand::Rng;

fn point(lat: f64, lon: f64) -> TrajectoryPoint {
    TrajectoryPoint { vehicle_id: "a".into(), timestamp: 0, lat, lon }
}

#[test]
fn regional_probabilities_follow_weak_areas() {
    let area = BBox::new(0.0, 1.0, 0.0, 1.0).unwrap();
    let probs = assign_regional(&[point(0.5, 0.5), point(2.0, 2.0), point(1.0, 0.0)], &[area], 0.3, 0.9).unwrap();
    assert_eq!(probs, vec![0.3, 0.9, 0.3]);
    assert!(assign_regional(&[], &[area], 0.9, 0.3).is_err());
}

#[test]
fn datasize_split_at_threshold() {
    let counts = [10, 400, 50, 399, 800];
    let threshold = company_threshold(&counts, 0.4);
    assert_eq!(threshold, 400);
    assert_eq!(assign_by_datasize(&counts, threshold, 0.95, 0.6), vec![0.6, 0.95, 0.6, 0.6, 0.95]);
}

#[test]
fn plans_cover_every_point_and_are_seeded() {
    let trajs = synth_trajectories(4, 6, 50, SynthKind::RandomWalk);
    let clients = partition_by_vehicle(&trajs, 2).unwrap();
    let bbox = BBox::around(trajs.iter().flat_map(|t| t.points.iter())).unwrap();
    let scenario = Scenario::Random { alpha_dir: 0.5 };
    let a = build_plans(&scenario, &clients, &bbox, 9).unwrap();
    assert_eq!(a, build_plans(&scenario, &clients, &bbox, 9).unwrap());
    assert_ne!(a, build_plans(&scenario, &clients, &bbox, 10).unwrap());
    for (plan, c) in a.iter().zip(&clients) {
        assert_eq!(plan.len(), c.point_count());
        assert_eq!(plan.scenario, ScenarioTag::Random);
    }
    let full = build_plans(&Scenario::Full, &clients, &bbox, 9).unwrap();
    assert!(full.iter().all(|p| p.probs.iter().all(|&x| x == 1.0)));
}

#[test]
fn full_plan_reveals_everything_in_order() {
    let plan = AvailabilityPlan { probs: vec![1.0; 50], scenario: ScenarioTag::Full };
    let mut s = RevealState::new(50, 16).unwrap();
    let mut rng = stream_rng(0, Stream::Reveal(0));
    let sizes: Vec<usize> =
        std::iter::from_fn(|| (!s.exhausted()).then(|| s.reveal_round(&plan, &mut rng).len())).collect();
    assert_eq!(sizes, vec![16, 16, 16, 2]);
    assert_eq!(s.available(), (0..50).collect::<Vec<_>>().as_slice());
    assert!(s.reveal_round(&plan, &mut rng).is_empty());
}

#[test]
fn zero_slice_is_rejected() {
    assert!(RevealState::new(10, 0).is_err());
}

proptest! {
    #[test]
    fn dirichlet_probabilities_are_valid(n in 1usize..300, alpha in 0.05f64..5.0, seed in any::<u64>()) {
        let probs = assign_random(n, alpha, &mut stream_rng(seed, Stream::Plan(0))).unwrap();
        prop_assert_eq!(probs.len(), n);
        prop_assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        // Before clipping the scaled draws sum to n, so the clipped mean is at most 1.
        prop_assert!(probs.iter().sum::<f64>() <= n as f64 + 1e-9);
    }

    #[test]
    fn reveal_partitions_the_processed_prefix(
        total in 0usize..400,
        slice in 1usize..64,
        seed in any::<u64>(),
    ) {
        let mut prng = stream_rng(seed, Stream::Plan(1));
        let plan = AvailabilityPlan { probs: (0..total).map(|_| prng.random_range(0.0..=1.0)).collect(), scenario: ScenarioTag::Random };
        let mut s = RevealState::new(total, slice).unwrap();
        let mut rng = stream_rng(seed, Stream::Reveal(1));
        let mut rounds = 0;
        while !s.exhausted() {
            let before = s.available().len();
            let fresh = s.reveal_round(&plan, &mut rng);
            rounds += 1;
            prop_assert_eq!(&s.available()[before..], fresh.as_slice());
            prop_assert_eq!(s.available().len() + s.lost().len(), s.cursor());
            prop_assert!(s.cursor() <= total);
        }
        prop_assert_eq!(rounds, total.div_ceil(slice));
        let mut all: Vec<usize> = s.available().iter().chain(s.lost()).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..total).collect::<Vec<_>>());
        for &j in s.available() {
            prop_assert!(plan.probs[j] > 0.0);
        }
        for &j in s.lost() {
            prop_assert!(plan.probs[j] < 1.0);
        }
    }
}
