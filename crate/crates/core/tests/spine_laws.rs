use fragwave_core::replicate::map_replicates;
use fragwave_core::spine::{many_to_one_check, q_large, tagged_value_at, PassageSampler};
use fragwave_core::stats::{ks_distance, ls_slope};
use fragwave_core::{
    DislocationMeasure, Seed, SimControls, SpectralProfile, Summary, TestFunctional,
};

fn uniform() -> SpectralProfile {
    SpectralProfile::new(DislocationMeasure::uniform_binary()).unwrap()
}

/// Observed overshoots above 0. At `p̄` the walk has no drift and a few
/// passages outlast the time cap; with exponential jumps the overshoot is
/// independent of `τ`, so dropping them does not bias the law.
fn overshoots(prof: &SpectralProfile, p: f64, n: usize, seed: u64) -> Vec<f64> {
    let sampler = PassageSampler::new(prof, p).unwrap();
    let all = map_replicates(n, |i| {
        sampler.sample(0.0, &mut Seed::new(seed).replicate(i).rng())
    });
    let seen: Vec<f64> = all
        .iter()
        .filter_map(|fp| fp.tau.map(|tau| (tau, fp.overshoot)))
        .map(|(tau, o)| {
            assert!(tau > 0.0);
            o
        })
        .collect();
    assert!(seen.len() * 50 >= n * 49, "{} of {n} observed", seen.len());
    seen
}

#[test]
fn tagged_mean_at_one_is_phi_prime() {
    let law = uniform().jump_law(0.0).unwrap();
    let xi: Vec<f64> = map_replicates(100_000, |i| {
        tagged_value_at(&law, 1.0, &mut Seed::new(41).replicate(i).rng())
    });
    let s = Summary::of(&xi);
    assert!(s.z_score(0.5).abs() <= 4.0, "mean {} se {}", s.mean, s.se);
}

#[test]
fn empirical_laplace_transform() {
    let prof = uniform();
    for p in [0.0, 1.0] {
        let law = prof.jump_law(p).unwrap();
        for t in [1.0, 2.0] {
            let xi: Vec<f64> = map_replicates(20_000, |i| {
                tagged_value_at(&law, t, &mut Seed::new(43).tagged(p.to_bits(), i).rng())
            });
            for q in [0.5, 1.0] {
                let v: Vec<f64> = xi.iter().map(|x| (-q * x).exp()).collect();
                let want = (-t * (prof.phi(p + q).unwrap() - prof.phi(p).unwrap())).exp();
                let s = Summary::of(&v);
                assert!(
                    s.z_score(want).abs() <= 4.0,
                    "p={p} t={t} q={q}: {} vs {want}",
                    s.mean
                );
            }
        }
    }
}

#[test]
fn overshoot_is_exponential_with_rate_p_plus_two() {
    let prof = uniform();
    for p in [0.5, 1.0, prof.p_bar()] {
        let o = overshoots(&prof, p, 100_000, 47);
        assert!(o.iter().all(|&v| v > 0.0));
        let r = p + 2.0;
        let mean = Summary::of(&o).mean;
        assert!((mean * r - 1.0).abs() <= 0.02, "p={p} mean {mean}");
        let ks = ks_distance(&o, |x| -(-r * x).exp_m1());
        assert!(ks <= 0.02, "p={p} ks {ks}");
    }
}

#[test]
fn malthusian_transform_of_overshoot() {
    let prof = uniform();
    for p in [0.5, 1.0, prof.p_bar()] {
        let o = overshoots(&prof, p, 50_000, 53);
        let v: Vec<f64> = o.iter().map(|&y| (-(p + 1.0) * y).exp()).collect();
        let want = (p + 2.0) / (2.0 * p + 3.0);
        let s = Summary::of(&v);
        assert!(s.z_score(want).abs() <= 4.0, "p={p}: {} vs {want}", s.mean);
    }
}

#[test]
fn q_large_fixtures() {
    let prof = uniform();
    let pb = prof.p_bar();
    let id = q_large(&prof, pb, &TestFunctional::Identity, 100_000, Seed::new(59)).unwrap();
    let want = 1.0 / (2.0 + 2f64.sqrt());
    assert!(
        (id.value - want).abs() <= 4.0 * id.se,
        "{} ± {}",
        id.value,
        id.se
    );
    assert!((id.value / want - 1.0).abs() <= 0.05);
    assert!(id.unobserved * 50 < 100_000, "unobserved {}", id.unobserved);
    let ind = q_large(&prof, 1.0, &TestFunctional::Indicator, 1_000, Seed::new(59)).unwrap();
    assert!((ind.value - 1.0).abs() <= 1e-12);
    let zero = q_large(&prof, 1.0, &TestFunctional::Zero, 1_000, Seed::new(59)).unwrap();
    assert_eq!(zero.value, 0.0);
}

#[test]
fn q_large_standard_error_halves_with_quadrupled_samples() {
    let prof = uniform();
    let ns = [1_000usize, 2_000, 4_000, 8_000, 16_000, 32_000];
    let (mut ln_n, mut ln_se) = (Vec::new(), Vec::new());
    for &n in &ns {
        let r = q_large(
            &prof,
            1.0,
            &TestFunctional::Identity,
            n,
            Seed::new(61).replicate(n as u64),
        )
        .unwrap();
        ln_n.push((n as f64).ln());
        ln_se.push(r.se.ln());
    }
    let slope = ls_slope(&ln_n, &ln_se);
    assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
}

#[test]
fn many_to_one_tree_matches_spine() {
    let prof = uniform();
    let controls = SimControls::default();
    for p in [0.0, 1.0] {
        for t in [2.0, 4.0] {
            let one =
                many_to_one_check(&prof, p, t, |_| 1.0, 5_000, Seed::new(67), &controls).unwrap();
            assert!(one.z_score.abs() <= 4.0, "g=1 p={p} t={t}: {one:?}");
            assert!(one.spine.mean == 1.0);
            let id =
                many_to_one_check(&prof, p, t, |x| x, 5_000, Seed::new(71), &controls).unwrap();
            assert!(id.z_score.abs() <= 4.0, "g=id p={p} t={t}: {id:?}");
            let want = prof.phi_prime(p).unwrap() * t;
            assert!(
                id.spine.z_score(want).abs() <= 4.0,
                "spine mean {} vs {want}",
                id.spine.mean
            );
        }
    }
}
