//! Event-driven simulation of a finite-activity conservative fragmentation.
//!
//! Every alive fragment carries an exponential clock of rate `γ = ν(∇₁)`.
//! When it rings the fragment is replaced by children whose relative sizes
//! are drawn from `γ⁻¹ν`. Sizes are kept as `x = −ln(mass)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::dislocation::DislocationMeasure;
use crate::error::{Error, Result};
use crate::rng::{Seed, StreamRng};
use crate::stats::ls_slope;

pub const DEFAULT_MAX_FRAGMENTS: usize = 4_000_000;
pub const DEFAULT_SIZE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SimControls {
    /// Abort once this many fragments are alive at the same time.
    pub max_fragments: usize,
    /// Fragments born with a mass below this are retired into `dropped_mass`.
    /// Zero disables retirement.
    pub size_floor: f64,
    /// When set, every fragment records `min_s (x(s) − drift·s)` over the
    /// lives of its strict ancestors.
    pub lineage_drift: Option<f64>,
}

impl Default for SimControls {
    fn default() -> Self {
        SimControls {
            max_fragments: DEFAULT_MAX_FRAGMENTS,
            size_floor: DEFAULT_SIZE_FLOOR,
            lineage_drift: None,
        }
    }
}

impl SimControls {
    pub fn with_lineage_drift(mut self, drift: f64) -> Self {
        self.lineage_drift = Some(drift);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_fragments == 0 {
            return Err(Error::OutOfRange {
                what: "max_fragments",
                value: 0.0,
                lo: 1.0,
                hi: f64::INFINITY,
            });
        }
        if !(0.0..1.0).contains(&self.size_floor) {
            return Err(Error::OutOfRange {
                what: "size_floor",
                value: self.size_floor,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if let Some(d) = self.lineage_drift {
            if !d.is_finite() {
                return Err(Error::Degenerate(format!("lineage drift {d}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fragment {
    pub id: u64,
    pub parent: Option<u64>,
    /// `−ln` of the mass.
    pub x: f64,
    pub birth_time: f64,
    /// Ring time of the clock, or `+∞` when still alive at the horizon.
    pub death_time: f64,
    /// Minimum of `x(s) − drift·s` along the ancestors' lives; `+∞` for the
    /// root or when lineage tracking is off.
    pub lineage_min: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub parent: u64,
    /// Kept children have the contiguous ids `first_child..first_child + n_children`.
    pub first_child: u64,
    pub n_children: u32,
    /// Parts of the drawn split, including the ones retired below the floor.
    pub n_parts: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Retired {
    pub time: f64,
    pub x: f64,
}

/// Full record of one simulated run.
#[derive(Clone, Debug, PartialEq)]
pub struct FragTrajectory {
    seed: Seed,
    horizon: f64,
    fragments: Vec<Fragment>,
    events: Vec<Event>,
    retired: Vec<Retired>,
    dropped_mass: f64,
    lineage_drift: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotEntry {
    pub x: f64,
    pub birth_time: f64,
    pub id: u64,
    /// Lineage minimum including the fragment's own life up to the snapshot.
    pub lineage_min: f64,
}

/// Alive population at a fixed time, sorted by `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub entries: Vec<SnapshotEntry>,
    /// Mass retired below the size floor up to `t`.
    pub dropped_mass: f64,
}

impl Snapshot {
    /// The initial single fragment.
    pub fn root() -> Self {
        Snapshot {
            t: 0.0,
            entries: vec![SnapshotEntry {
                x: 0.0,
                birth_time: 0.0,
                id: 0,
                lineage_min: f64::INFINITY,
            }],
            dropped_mass: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.x)
    }

    pub fn min_x(&self) -> f64 {
        self.entries.first().map_or(f64::INFINITY, |e| e.x)
    }

    /// `Σ e^{−x}` over alive fragments.
    pub fn total_mass(&self) -> f64 {
        self.xs().map(|x| (-x).exp()).sum()
    }
}

#[derive(PartialEq)]
struct Pending {
    time: f64,
    id: u64,
}

impl Eq for Pending {}

impl Ord for Pending {
    // Reversed so that `BinaryHeap` pops the earliest ring first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn clock<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Simulates the fragmentation on `[0, horizon]`.
pub fn simulate(
    measure: &DislocationMeasure,
    horizon: f64,
    seed: Seed,
    controls: &SimControls,
) -> Result<FragTrajectory> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::OutOfRange {
            what: "horizon",
            value: horizon,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    controls.validate()?;
    let rate = measure.total_rate();
    let x_floor = if controls.size_floor > 0.0 {
        -controls.size_floor.ln()
    } else {
        f64::INFINITY
    };
    let drift = controls.lineage_drift;
    let mut rng: StreamRng = seed.rng();

    let mut fragments = vec![Fragment {
        id: 0,
        parent: None,
        x: 0.0,
        birth_time: 0.0,
        death_time: f64::INFINITY,
        lineage_min: f64::INFINITY,
    }];
    let mut events = Vec::new();
    let mut retired = Vec::new();
    let mut dropped_mass = 0.0;
    let mut alive = 1usize;
    let mut heap = BinaryHeap::new();
    heap.push(Pending {
        time: clock(&mut rng, rate),
        id: 0,
    });

    while let Some(Pending { time, id }) = heap.pop() {
        if time > horizon {
            break;
        }
        let parent = fragments[id as usize];
        fragments[id as usize].death_time = time;
        alive -= 1;
        let child_min = match drift {
            Some(c) => parent.lineage_min.min(parent.x - c * time),
            None => f64::INFINITY,
        };
        let first_child = fragments.len() as u64;
        let split = measure.draw_split(&mut rng);
        let parts = split.parts();
        let mut kept = 0u32;
        for &s in parts {
            let x = parent.x - s.ln();
            if x > x_floor {
                dropped_mass += (-x).exp();
                retired.push(Retired { time, x });
                continue;
            }
            let child = fragments.len() as u64;
            fragments.push(Fragment {
                id: child,
                parent: Some(id),
                x,
                birth_time: time,
                death_time: f64::INFINITY,
                lineage_min: child_min,
            });
            heap.push(Pending {
                time: time + clock(&mut rng, rate),
                id: child,
            });
            kept += 1;
        }
        alive += kept as usize;
        events.push(Event {
            time,
            parent: id,
            first_child,
            n_children: kept,
            n_parts: parts.len() as u32,
        });
        if alive > controls.max_fragments {
            return Err(Error::FragmentCap {
                cap: controls.max_fragments,
                time,
                alive,
                events: events.len(),
                dropped_mass,
            });
        }
    }

    Ok(FragTrajectory {
        seed,
        horizon,
        fragments,
        events,
        retired,
        dropped_mass,
        lineage_drift: drift,
    })
}

impl FragTrajectory {
    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn retired(&self) -> &[Retired] {
        &self.retired
    }

    /// Total mass retired below the size floor by the horizon.
    pub fn dropped_mass(&self) -> f64 {
        self.dropped_mass
    }

    pub fn lineage_drift(&self) -> Option<f64> {
        self.lineage_drift
    }

    /// Upper bound `e^{Φ(p)t} Σ m^{p+1}` on the contribution of fragments
    /// retired by time `t` to `W(t, p)`, given `phi_p = Φ(p)`.
    pub fn retired_bias_bound(&self, p: f64, phi_p: f64, t: f64) -> f64 {
        let s: f64 = self
            .retired
            .iter()
            .filter(|r| r.time <= t)
            .map(|r| (-(p + 1.0) * r.x).exp())
            .sum();
        (phi_p * t).exp() * s
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "t",
                value: t,
                lo: 0.0,
                hi: self.horizon,
            })
        }
    }

    /// Alive population at time `t`.
    pub fn snapshot_at(&self, t: f64) -> Result<Snapshot> {
        self.check_time(t)?;
        let drift = self.lineage_drift;
        let mut entries: Vec<SnapshotEntry> = self
            .fragments
            .iter()
            .filter(|f| f.birth_time <= t && t < f.death_time)
            .map(|f| SnapshotEntry {
                x: f.x,
                birth_time: f.birth_time,
                id: f.id,
                lineage_min: match drift {
                    Some(c) => f.lineage_min.min(f.x - c * t),
                    None => f64::INFINITY,
                },
            })
            .collect();
        entries.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.id.cmp(&b.id)));
        let dropped_mass = self
            .retired
            .iter()
            .filter(|r| r.time <= t)
            .map(|r| (-r.x).exp())
            .sum();
        Ok(Snapshot {
            t,
            entries,
            dropped_mass,
        })
    }

    pub fn final_population(&self) -> Snapshot {
        self.snapshot_at(self.horizon).expect("horizon is in range")
    }

    /// Number of alive fragments at each of the (ascending) `times`.
    pub fn population_counts(&self, times: &[f64]) -> Result<Vec<usize>> {
        let mut counts = vec![0usize; times.len()];
        for &t in times {
            self.check_time(t)?;
        }
        for f in &self.fragments {
            let lo = times.partition_point(|&t| t < f.birth_time);
            let hi = times.partition_point(|&t| t < f.death_time);
            for c in &mut counts[lo..hi] {
                *c += 1;
            }
        }
        Ok(counts)
    }

    /// `min x` over the alive population at each of the (ascending) `times`.
    pub fn min_x_path(&self, times: &[f64]) -> Result<Vec<f64>> {
        for &t in times {
            self.check_time(t)?;
        }
        let mut out = vec![f64::INFINITY; times.len()];
        for f in &self.fragments {
            let lo = times.partition_point(|&t| t < f.birth_time);
            let hi = times.partition_point(|&t| t < f.death_time);
            for m in &mut out[lo..hi] {
                *m = m.min(f.x);
            }
        }
        Ok(out)
    }
}

/// Least-squares slope of `t ↦ min x(t)` on `[t0, t1]` (sampled every
/// `step`), averaged over the trajectories.
pub fn largest_fragment_speed(
    trajectories: &[FragTrajectory],
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<f64> {
    if !(t1 > t0 && t0 >= 0.0) || trajectories.is_empty() {
        return Err(Error::EmptyWindow { t0, t1 });
    }
    if !(step > 0.0) {
        return Err(Error::OutOfRange {
            what: "step",
            value: step,
            lo: 0.0,
            hi: t1 - t0,
        });
    }
    let n = ((t1 - t0) / step + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=n).map(|k| t0 + k as f64 * step).collect();
    let mut total = 0.0;
    for traj in trajectories {
        if traj.horizon() < t1 {
            return Err(Error::EmptyWindow {
                t0,
                t1: traj.horizon(),
            });
        }
        let path = traj.min_x_path(&times)?;
        total += ls_slope(&times, &path);
    }
    Ok(total / trajectories.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_zero_is_root() {
        let m = DislocationMeasure::uniform_binary();
        let tr = simulate(&m, 0.0, Seed::new(1), &SimControls::default()).unwrap();
        let snap = tr.final_population();
        assert_eq!(snap, Snapshot::root());
        assert!(tr.events().is_empty());
    }

    #[test]
    fn snapshot_before_first_event_is_root() {
        let m = DislocationMeasure::binary_half();
        let tr = simulate(&m, 3.0, Seed::new(9), &SimControls::default()).unwrap();
        let t_first = tr.events()[0].time;
        let snap = tr.snapshot_at(t_first * (1.0 - 1e-12)).unwrap();
        assert_eq!(snap.entries, Snapshot::root().entries);
        assert!(tr.snapshot_at(3.5).is_err());
        assert!(tr.snapshot_at(-0.1).is_err());
    }

    #[test]
    fn conservation_and_ordering() {
        let m = DislocationMeasure::uniform_binary();
        let tr = simulate(&m, 6.0, Seed::new(3), &SimControls::default()).unwrap();
        for w in tr.events().windows(2) {
            assert!(w[0].time < w[1].time);
        }
        for e in tr.events() {
            let snap = tr.snapshot_at(e.time).unwrap();
            assert!((snap.total_mass() + snap.dropped_mass - 1.0).abs() < 1e-9);
            assert_eq!(e.n_parts, 2);
        }
        for f in tr.fragments() {
            if let Some(pid) = f.parent {
                let parent = tr.fragments()[pid as usize];
                assert!(f.x > parent.x);
                assert!(f.birth_time >= parent.birth_time);
            }
        }
    }

    #[test]
    fn size_floor_retires_mass() {
        let m = DislocationMeasure::uniform_binary();
        let controls = SimControls {
            size_floor: 1e-3,
            ..SimControls::default()
        };
        let tr = simulate(&m, 8.0, Seed::new(4), &controls).unwrap();
        assert!(tr.dropped_mass() > 0.0);
        let snap = tr.final_population();
        assert!((snap.total_mass() + tr.dropped_mass() - 1.0).abs() < 1e-9);
        assert!(snap.xs().all(|x| x <= -(1e-3f64).ln()));
        assert!(tr.retired_bias_bound(1.0, 1.0 / 3.0, 8.0) > 0.0);
    }

    #[test]
    fn cap_aborts_with_diagnostics() {
        let m = DislocationMeasure::binary_half();
        let controls = SimControls {
            max_fragments: 50,
            size_floor: 0.0,
            lineage_drift: None,
        };
        match simulate(&m, 20.0, Seed::new(5), &controls) {
            Err(Error::FragmentCap { cap, alive, .. }) => {
                assert_eq!(cap, 50);
                assert!(alive > 50);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn determinism() {
        let m = DislocationMeasure::uniform_binary();
        let a = simulate(&m, 5.0, Seed::new(77).replicate(2), &SimControls::default()).unwrap();
        let b = simulate(&m, 5.0, Seed::new(77).replicate(2), &SimControls::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lineage_minimum_matches_brute_force() {
        let m = DislocationMeasure::uniform_binary();
        let c = 0.3;
        let tr = simulate(
            &m,
            4.0,
            Seed::new(8),
            &SimControls::default().with_lineage_drift(c),
        )
        .unwrap();
        let t = 4.0;
        let snap = tr.final_population();
        for e in &snap.entries {
            // walk up the ancestry: each ancestor ends its life at its death time
            let mut want = e.x - c * t;
            let mut cur = tr.fragments()[e.id as usize];
            while let Some(pid) = cur.parent {
                let par = tr.fragments()[pid as usize];
                want = want.min(par.x - c * par.death_time);
                cur = par;
            }
            assert!((e.lineage_min - want).abs() < 1e-12);
        }
    }

    #[test]
    fn speed_window_errors() {
        let m = DislocationMeasure::uniform_binary();
        let tr = simulate(&m, 3.0, Seed::new(1), &SimControls::default()).unwrap();
        assert!(largest_fragment_speed(std::slice::from_ref(&tr), 5.0, 12.0, 0.5).is_err());
        assert!(largest_fragment_speed(&[tr], 2.0, 2.0, 0.5).is_err());
        assert!(largest_fragment_speed(&[], 1.0, 2.0, 0.5).is_err());
    }

    #[test]
    fn population_counts_monotone() {
        let m = DislocationMeasure::binary_half();
        let tr = simulate(&m, 5.0, Seed::new(2), &SimControls::default()).unwrap();
        let times: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
        let c = tr.population_counts(&times).unwrap();
        assert_eq!(c[0], 1);
        assert!(c.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*c.last().unwrap(), tr.final_population().len());
    }
}
