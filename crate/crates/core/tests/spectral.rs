use fragwave_core::{DislocationMeasure, SpectralProfile};
use proptest::prelude::*;

fn uniform() -> SpectralProfile {
    SpectralProfile::new(DislocationMeasure::uniform_binary()).unwrap()
}

fn half() -> SpectralProfile {
    SpectralProfile::new(DislocationMeasure::binary_half()).unwrap()
}

/// Random conservative discrete measure with 1 to 3 atoms of 2 to 4 parts.
fn discrete_measure() -> impl Strategy<Value = Vec<(f64, Vec<f64>)>> {
    let atom = (0.1f64..3.0, prop::collection::vec(0.05f64..1.0, 2..=4)).prop_map(|(w, raw)| {
        let total: f64 = raw.iter().sum();
        (w, raw.iter().map(|r| r / total).collect::<Vec<_>>())
    });
    prop::collection::vec(atom, 1..=3)
}

/// `Φ(q) = Σ w (1 − Σ s^{q+1})` evaluated directly.
fn phi_direct(atoms: &[(f64, Vec<f64>)], q: f64) -> f64 {
    atoms
        .iter()
        .map(|(w, s)| w * (1.0 - s.iter().map(|r| r.powf(q + 1.0)).sum::<f64>()))
        .sum()
}

#[test]
fn standard_grid_closed_forms() {
    let (u, h) = (uniform(), half());
    for q in [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 5.0] {
        if q > u.p_lower() {
            assert!(
                (u.phi(q).unwrap() - q / (q + 2.0)).abs() <= 1e-10,
                "uniform q={q}"
            );
        }
        if q > h.p_lower() {
            assert!(
                (h.phi(q).unwrap() - (1.0 - 2f64.powf(-q))).abs() <= 1e-10,
                "half q={q}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_phi_matches_closed_form(q in -1.95f64..20.0) {
        let u = uniform();
        prop_assert!((u.phi(q).unwrap() - q / (q + 2.0)).abs() <= 1e-10);
    }

    #[test]
    fn binary_half_phi_matches_closed_form(q in -0.99f64..20.0) {
        prop_assert!((half().phi(q).unwrap() - (1.0 - 2f64.powf(-q))).abs() <= 1e-10);
    }

    #[test]
    fn discrete_phi_matches_direct_sum(atoms in discrete_measure(), q in -0.5f64..6.0) {
        let prof = SpectralProfile::new(DislocationMeasure::discrete(atoms.clone()).unwrap()).unwrap();
        prop_assert!((prof.phi(q).unwrap() - phi_direct(&atoms, q)).abs() <= 1e-10 * (1.0 + phi_direct(&atoms, q).abs()));
        prop_assert!(prof.phi(0.0).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn p_bar_maximises_wave_speed(atoms in discrete_measure(), frac in 0.05f64..0.95) {
        let prof = SpectralProfile::new(DislocationMeasure::discrete(atoms).unwrap()).unwrap();
        let pb = prof.p_bar();
        let cb = prof.c_bar();
        prop_assert!((prof.wave_speed(pb).unwrap() - cb).abs() <= 1e-9);
        prop_assert!((prof.phi_prime(pb).unwrap() - cb).abs() <= 1e-7);
        let lo = prof.p_lower().max(-1.0);
        let p = lo + frac * (pb - lo);
        prop_assert!(prof.wave_speed(p).unwrap() <= cb + 1e-12);
        prop_assert!(prof.wave_speed(pb + 1.0 + frac).unwrap() <= cb + 1e-12);
    }

    #[test]
    fn eta_solves_its_equation(frac in 0.02f64..1.0) {
        for prof in [uniform(), half()] {
            let p = frac * prof.p_bar();
            let eta = prof.eta_root(p).unwrap();
            let c = prof.wave_speed(p).unwrap();
            let g = c * eta - prof.phi(eta + p).unwrap() + prof.phi(p).unwrap();
            prop_assert!(eta >= 0.0);
            prop_assert!(g.abs() <= 1e-9, "p={p} eta={eta} g={g}");
        }
    }

    #[test]
    fn jump_law_exponent_is_shifted_phi(frac in 0.0f64..1.0, q in 0.0f64..4.0) {
        for prof in [uniform(), half()] {
            let p = -0.5 + frac * (prof.p_bar() + 0.5);
            let law = prof.jump_law(p).unwrap();
            let want = prof.phi(p + q).unwrap() - prof.phi(p).unwrap();
            prop_assert!((law.laplace_exponent(q) - want).abs() <= 1e-9);
        }
    }
}

#[test]
fn uniform_eta_at_one_and_p_bar() {
    let u = uniform();
    assert!((u.eta_root(1.0).unwrap() - 1.0).abs() <= 1e-9);
    assert!(u.eta_root(u.p_bar()).unwrap().abs() <= 1e-9);
    assert!((u.p_bar() - 2f64.sqrt()).abs() <= 1e-9);
    assert!((u.c_bar() - (3.0 - 2.0 * 2f64.sqrt())).abs() <= 1e-9);
}
