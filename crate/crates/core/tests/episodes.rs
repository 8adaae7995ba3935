use proptest::prelude::*;
use shrinking_pomcp::belief::{BeliefSpec, Peak};
use shrinking_pomcp::grid::{Cell, Obstacle, Rect};
use shrinking_pomcp::mission::{run_episode, EpisodeConfig, PlannerKind, Termination};
use shrinking_pomcp::scenario::{Scenario, TargetSpec};

fn rect() -> impl Strategy<Value = Rect> {
    (0.0..90.0f64, 0.0..90.0f64, 1.0..40.0f64, 1.0..40.0f64).prop_map(|(x, y, w, h)| Rect::new(x, y, x + w, y + h).unwrap())
}

fn scenario() -> impl Strategy<Value = Scenario> {
    let targets = prop_oneof![
        (1usize..5).prop_map(|count| TargetSpec::Sampled { count }),
        prop::collection::vec((0.0..100.0f64, 0.0..100.0f64).prop_map(|(x, y)| [x, y]), 1..4)
            .prop_map(|positions| TargetSpec::Fixed { positions }),
    ];
    let peak = (0usize..5, 0usize..5, 0.3..3.0f64, 0.1..1.0f64).prop_map(|(i, j, spread, weight)| Peak { center: Cell::new(i, j), spread, weight });
    let belief = prop_oneof![Just(BeliefSpec::Uniform), prop::collection::vec(peak, 1..4).prop_map(|peaks| BeliefSpec::Peaks { peaks })];
    (
        "[a-z][a-z0-9_-]{0,12}",
        (0.0..100.0f64, 0.0..100.0f64),
        targets,
        belief,
        prop::collection::vec((rect(), 0.0..40.0f64).prop_map(|(rect, height_m)| Obstacle { rect, height_m }), 0..4),
        prop::collection::vec(rect(), 0..3),
    )
        .prop_map(|(name, (sx, sy), targets, belief, obstacles, no_fly)| Scenario {
            name,
            side_length_m: 100.0,
            grid_n: 5,
            raster_m: 2.0,
            start: [sx, sy],
            targets,
            belief,
            obstacles,
            no_fly,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn toml_round_trip(sc in scenario()) {
        let text = sc.to_toml().unwrap();
        prop_assert_eq!(Scenario::from_toml(&text).unwrap(), sc);
    }

    #[test]
    fn episode_invariants(sc in scenario(), planner in 0usize..4, seed in 0u64..1000) {
        let mut ec = EpisodeConfig { planner: PlannerKind::ALL[planner], seed, max_epochs: 10, ..EpisodeConfig::default() };
        ec.cfg.max_iterations = 50;
        let Ok(r) = run_episode(&sc, &ec) else { return Ok(()) };

        prop_assert!(r.epochs_used <= ec.max_epochs);
        prop_assert!(r.targets_found <= r.targets_total);
        prop_assert_eq!(r.events.len(), r.epochs_used + 1);
        let captures: usize = r.events.iter().map(|e| e.captures.len()).sum();
        prop_assert_eq!(captures, r.targets_found);
        match r.terminated_by {
            Termination::AllFound => prop_assert_eq!(r.targets_found, r.targets_total),
            Termination::EpochCap => prop_assert_eq!(r.epochs_used, ec.max_epochs),
            Termination::BoxedIn => prop_assert!(r.targets_found < r.targets_total),
        }

        // raster moves only, at one altitude
        let mut length = 0.0;
        for w in r.trajectory.windows(2) {
            let d = (w[1].x - w[0].x).abs() + (w[1].y - w[0].y).abs();
            prop_assert!((d - sc.raster_m).abs() < 1e-9, "jump of {} m", d);
            prop_assert_eq!(w[0].z, w[1].z);
            length += d;
        }
        prop_assert!((length - r.path_length_m).abs() < 1e-6);
        prop_assert!((r.travel_time_s - r.path_length_m / ec.speed_mps).abs() < 1e-6);
    }

    #[test]
    fn episodes_replay(sc in scenario(), planner in 0usize..4, seed in 0u64..1000) {
        let mut ec = EpisodeConfig { planner: PlannerKind::ALL[planner], seed, max_epochs: 6, ..EpisodeConfig::default() };
        ec.cfg.max_iterations = 30;
        let (Ok(a), Ok(b)) = (run_episode(&sc, &ec), run_episode(&sc, &ec)) else { return Ok(()) };
        prop_assert_eq!(a.trajectory, b.trajectory);
        prop_assert_eq!(a.events, b.events);
    }
}
