//! Additive, derivative and product martingales evaluated on snapshots, and
//! samples of their limits `Δ_p`.

use crate::dislocation::SpectralProfile;
use crate::error::{Error, Result};
use crate::frag_sim::{simulate, FragTrajectory, SimControls, Snapshot};
use crate::replicate::try_map_replicates;
use crate::rng::Seed;
use crate::stopping_lines::{sweep_lines, SweepControls};

/// Default threshold `x` of the truncated derivative martingale used for
/// critical limits.
pub const DEFAULT_X_TRUNC: f64 = 8.0;

/// `W(t, p) = e^{Φ(p)t} Σ_i e^{−(p+1)x_i}`.
pub fn additive_w(profile: &SpectralProfile, snap: &Snapshot, p: f64) -> Result<f64> {
    let phi = profile.phi(p)?;
    Ok(additive_with(snap, p, phi))
}

fn additive_with(snap: &Snapshot, p: f64, phi: f64) -> f64 {
    snap.xs()
        .map(|x| (phi * snap.t - (p + 1.0) * x).exp())
        .sum()
}

/// `∂W(t, p̄) = Σ_i (x_i − tΦ′(p̄)) e^{Φ(p̄)t − (p̄+1)x_i}`.
pub fn derivative_w(profile: &SpectralProfile, snap: &Snapshot, p: f64) -> Result<f64> {
    if !profile.is_critical(p) {
        return Err(Error::NotCritical {
            p,
            p_bar: profile.p_bar(),
        });
    }
    let phi = profile.phi(p)?;
    let dphi = profile.phi_prime(p)?;
    let t = snap.t;
    Ok(snap
        .xs()
        .map(|x| (x - t * dphi) * (phi * t - (p + 1.0) * x).exp())
        .sum())
}

/// `∂W(t, p̄, x)`: the derivative martingale restricted to lineages that kept
/// `x + x_i(s) − c_p̄ s > 0` for all `s ≤ t`.
pub fn truncated_derivative_w(
    profile: &SpectralProfile,
    traj: &FragTrajectory,
    p: f64,
    x: f64,
    t: f64,
) -> Result<f64> {
    if !profile.is_critical(p) {
        return Err(Error::NotCritical {
            p,
            p_bar: profile.p_bar(),
        });
    }
    if !(x > 0.0) {
        return Err(Error::OutOfRange {
            what: "x",
            value: x,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let c = profile.c_bar();
    match traj.lineage_drift() {
        Some(d) if (d - c).abs() <= 1e-12 * c.abs().max(1.0) => {}
        _ => return Err(Error::MissingLineage { drift: c }),
    }
    let snap = traj.snapshot_at(t)?;
    Ok(truncated_on(&snap, p, profile.phi(p)?, c, x))
}

fn truncated_on(snap: &Snapshot, p: f64, phi: f64, c: f64, x: f64) -> f64 {
    let t = snap.t;
    snap.entries
        .iter()
        .filter(|e| x + e.lineage_min > 0.0)
        .map(|e| (x + e.x - c * t) * (phi * t - (p + 1.0) * e.x).exp())
        .sum()
}

/// `M(t, p, x) = Π_i ψ(x + x_i − c t)`.
pub fn product_m<F: Fn(f64) -> f64>(snap: &Snapshot, psi: F, c: f64, x: f64) -> Result<f64> {
    let mut prod = 1.0;
    for y in snap.xs() {
        let arg = x + y - c * snap.t;
        let v = psi(arg);
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::WaveOutOfRange { x: arg, value: v });
        }
        prod *= v;
    }
    Ok(prod)
}

/// All martingales of one run at time `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MartingaleSample {
    pub p: f64,
    pub t: f64,
    pub w: f64,
    /// Only at `p̄`.
    pub dw: Option<f64>,
    /// Only at `p̄` when lineage minima were tracked.
    pub dw_trunc: Option<f64>,
    /// Bound on the part of `W` lost to the size floor.
    pub truncation_bias_bound: f64,
    pub n_alive: usize,
    pub dropped_mass: f64,
}

pub fn martingale_sample(
    profile: &SpectralProfile,
    traj: &FragTrajectory,
    p: f64,
    t: f64,
    x_trunc: f64,
) -> Result<MartingaleSample> {
    let snap = traj.snapshot_at(t)?;
    let phi = profile.phi(p)?;
    let critical = profile.is_critical(p);
    let dw = if critical {
        Some(derivative_w(profile, &snap, p)?)
    } else {
        None
    };
    let dw_trunc = if critical && traj.lineage_drift().is_some() {
        Some(truncated_derivative_w(profile, traj, p, x_trunc, t)?)
    } else {
        None
    };
    Ok(MartingaleSample {
        p,
        t,
        w: additive_with(&snap, p, phi),
        dw,
        dw_trunc,
        truncation_bias_bound: traj.retired_bias_bound(p, phi, t),
        n_alive: snap.len(),
        dropped_mass: snap.dropped_mass,
    })
}

/// How far the limit `Δ_p` is approximated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaHorizon {
    /// `W(T, p)` (or the truncated derivative at `p̄`) at a fixed time.
    Time(f64),
    /// `W(ℓ^{(p,z)}, p)` on the first-passage line at level `z`, for `p < p̄`.
    Line(f64),
}

impl DeltaHorizon {
    pub fn value(self) -> f64 {
        match self {
            DeltaHorizon::Time(v) | DeltaHorizon::Line(v) => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaSample {
    pub p: f64,
    pub horizon: DeltaHorizon,
    pub value: f64,
    /// The same martingale at half the horizon.
    pub half_value: f64,
    /// Fragments alive (or frozen) at the horizon.
    pub fragments: u64,
}

impl DeltaSample {
    /// `|value − half_value|`.
    pub fn diagnostic(&self) -> f64 {
        (self.value - self.half_value).abs()
    }
}

/// Everything `estimate_delta` needs besides the profile and `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaPlan {
    pub horizon: DeltaHorizon,
    pub n_reps: usize,
    pub seed: Seed,
    pub sim: SimControls,
    pub sweep: SweepControls,
    /// Barrier of the truncated derivative martingale (critical `p` only).
    pub x_trunc: f64,
}

impl DeltaPlan {
    pub fn new(horizon: DeltaHorizon, n_reps: usize, seed: Seed) -> Self {
        DeltaPlan {
            horizon,
            n_reps,
            seed,
            sim: SimControls::default(),
            sweep: SweepControls::default(),
            x_trunc: DEFAULT_X_TRUNC,
        }
    }
}

/// Samples of `Δ_p` for `p ∈ (p̲, p̄]`; replicate `i` uses stream `i` of `plan.seed`.
pub fn estimate_delta(
    profile: &SpectralProfile,
    p: f64,
    plan: &DeltaPlan,
) -> Result<Vec<DeltaSample>> {
    let DeltaPlan {
        horizon,
        n_reps,
        seed,
        ref sim,
        ref sweep,
        x_trunc,
    } = *plan;
    if !(p > profile.p_lower() && p <= profile.p_bar() * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange {
            what: "p",
            value: p,
            lo: profile.p_lower(),
            hi: profile.p_bar(),
        });
    }
    let critical = profile.is_critical(p);
    let phi = profile.phi(p)?;
    match horizon {
        DeltaHorizon::Time(t) => {
            let controls = if critical {
                sim.clone().with_lineage_drift(profile.c_bar())
            } else {
                sim.clone()
            };
            let c = profile.c_bar();
            try_map_replicates(n_reps, |i| {
                let traj = simulate(profile.measure(), t, seed.replicate(i), &controls)?;
                let end = traj.snapshot_at(t)?;
                let half = traj.snapshot_at(0.5 * t)?;
                let (value, half_value) = if critical {
                    (
                        truncated_on(&end, p, phi, c, x_trunc),
                        truncated_on(&half, p, phi, c, x_trunc),
                    )
                } else {
                    (additive_with(&end, p, phi), additive_with(&half, p, phi))
                };
                Ok(DeltaSample {
                    p,
                    horizon,
                    value,
                    half_value,
                    fragments: end.len() as u64,
                })
            })
        }
        DeltaHorizon::Line(z) => {
            if critical {
                return Err(Error::Degenerate(
                    "W on lines vanishes at p_bar; use a time horizon".into(),
                ));
            }
            if !(z > 0.0) {
                return Err(Error::OutOfRange {
                    what: "z",
                    value: z,
                    lo: 0.0,
                    hi: f64::INFINITY,
                });
            }
            let zs = [0.5 * z, z];
            try_map_replicates(n_reps, |i| {
                let mut w = [0.0; 2];
                let stats = sweep_lines(
                    profile,
                    p,
                    &zs,
                    &mut seed.replicate(i).rng(),
                    sweep,
                    |k, f, _| {
                        w[k] += f.weight;
                        Ok(())
                    },
                )?;
                Ok(DeltaSample {
                    p,
                    horizon,
                    value: w[1],
                    half_value: w[0],
                    fragments: stats.frozen[1],
                })
            })
        }
    }
}
