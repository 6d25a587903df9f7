use fragwave_core::frag_sim::simulate;
use fragwave_core::replicate::map_replicates;
use fragwave_core::{DislocationMeasure, FragTrajectory, Seed, SimControls, Summary};
use proptest::prelude::*;

fn measure_strategy() -> impl Strategy<Value = DislocationMeasure> {
    let atom = (0.2f64..2.0, prop::collection::vec(0.05f64..1.0, 2..=4)).prop_map(|(w, raw)| {
        let total: f64 = raw.iter().sum();
        (w, raw.iter().map(|r| r / total).collect::<Vec<_>>())
    });
    prop_oneof![
        Just(DislocationMeasure::uniform_binary()),
        Just(DislocationMeasure::binary_half()),
        prop::collection::vec(atom, 1..=3).prop_map(|a| DislocationMeasure::discrete(a).unwrap()),
    ]
}

fn atom_sizes(m: &DislocationMeasure) -> Vec<usize> {
    match m {
        DislocationMeasure::DiscreteAtoms(t) => {
            t.atoms().iter().map(|a| a.ratios().len()).collect()
        }
        DislocationMeasure::UniformBinary => vec![2],
    }
}

/// Rate at which the expected population grows.
fn growth_rate(m: &DislocationMeasure) -> f64 {
    match m {
        DislocationMeasure::DiscreteAtoms(t) => t
            .atoms()
            .iter()
            .map(|a| a.weight() * (a.ratios().len() as f64 - 1.0))
            .sum(),
        DislocationMeasure::UniformBinary => 1.0,
    }
}

fn check_structure(traj: &FragTrajectory, sizes: &[usize]) -> Result<(), TestCaseError> {
    let frags = traj.fragments();
    let events = traj.events();
    for w in events.windows(2) {
        prop_assert!(w[1].time > w[0].time);
    }
    for e in events {
        prop_assert!(sizes.contains(&(e.n_parts as usize)));
        prop_assert!(e.n_children <= e.n_parts);
        let parent = &frags[e.parent as usize];
        for id in e.first_child..e.first_child + e.n_children as u64 {
            let child = &frags[id as usize];
            prop_assert_eq!(child.parent, Some(e.parent));
            prop_assert!(child.x > parent.x);
            prop_assert!(child.birth_time >= parent.birth_time);
            prop_assert_eq!(child.birth_time, e.time);
        }
    }
    let step = (events.len() / 50).max(1);
    for e in events.iter().step_by(step) {
        let snap = traj.snapshot_at(e.time).unwrap();
        let total = snap.total_mass() + snap.dropped_mass;
        prop_assert!(
            (total - 1.0).abs() <= 1e-9,
            "mass {} at t={}",
            total,
            e.time
        );
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conservation_and_genealogy(m in measure_strategy(), frac in 0.0f64..1.0, seed in any::<u64>()) {
        let horizon = 5.0 * frac / growth_rate(&m);
        let traj = simulate(&m, horizon, Seed::new(seed), &SimControls::default()).unwrap();
        check_structure(&traj, &atom_sizes(&m))?;
        let fin = traj.final_population();
        prop_assert_eq!(&traj.snapshot_at(horizon).unwrap(), &fin);
        prop_assert!((fin.total_mass() + fin.dropped_mass - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn conservation_with_aggressive_floor(m in measure_strategy(), seed in any::<u64>()) {
        let controls = SimControls { size_floor: 1e-2, ..SimControls::default() };
        let traj = simulate(&m, 6.0 / growth_rate(&m), Seed::new(seed), &controls).unwrap();
        check_structure(&traj, &atom_sizes(&m))?;
        let fin = traj.final_population();
        prop_assert!(fin.entries.iter().all(|e| (-e.x).exp() >= 1e-2));
    }

    #[test]
    fn population_never_shrinks(seed in any::<u64>()) {
        let traj = simulate(&DislocationMeasure::uniform_binary(), 4.0, Seed::new(seed), &SimControls::default()).unwrap();
        let times: Vec<f64> = (0..=40).map(|k| 0.1 * k as f64).collect();
        let counts = traj.population_counts(&times).unwrap();
        prop_assert!(counts.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(counts[0], 1);
    }
}

#[test]
fn same_seed_same_log_other_seed_different() {
    let m = DislocationMeasure::uniform_binary();
    let c = SimControls::default();
    let a = simulate(&m, 5.0, Seed::new(11).replicate(3), &c).unwrap();
    let b = simulate(&m, 5.0, Seed::new(11).replicate(3), &c).unwrap();
    let other = simulate(&m, 5.0, Seed::new(11).replicate(4), &c).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.events(), other.events());
    let bits =
        |t: &FragTrajectory| -> Vec<u64> { t.events().iter().map(|e| e.time.to_bits()).collect() };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn yule_population_mean_at_three() {
    let target = 3f64.exp();
    for m in [
        DislocationMeasure::uniform_binary(),
        DislocationMeasure::binary_half(),
    ] {
        let counts: Vec<f64> = map_replicates(10_000, |i| {
            simulate(&m, 3.0, Seed::new(21).replicate(i), &SimControls::default())
                .unwrap()
                .final_population()
                .len() as f64
        });
        let s = Summary::of(&counts);
        assert!(
            s.z_score(target).abs() <= 4.0,
            "mean {} se {} target {target}",
            s.mean,
            s.se
        );
    }
}

#[test]
fn size_biased_marginal_mean_is_t_over_two() {
    let m = DislocationMeasure::uniform_binary();
    for t in [2.0, 4.0] {
        let v: Vec<f64> = map_replicates(20_000, |i| {
            let traj =
                simulate(&m, t, Seed::new(31).replicate(i), &SimControls::default()).unwrap();
            traj.final_population()
                .entries
                .iter()
                .map(|e| (-e.x).exp() * e.x)
                .sum()
        });
        let s = Summary::of(&v);
        assert!(
            s.z_score(0.5 * t).abs() <= 4.0,
            "t={t} mean {} se {}",
            s.mean,
            s.se
        );
    }
}
