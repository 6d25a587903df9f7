//! First-passage stopping lines `ℓ^{(p,z)}`.
//!
//! A lineage is frozen the first time `x(t) − c_p t > z`. The sweep explores
//! the tree depth-first and never extends a fragment past its freeze time, so
//! the cost is the size of the frozen generation rather than that of the tree
//! at a fixed horizon. Several nested levels `z₁ < z₂ < …` can be swept in one
//! exploration; a fragment frozen at level `k` keeps evolving until it is
//! frozen at every level.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::dislocation::SpectralProfile;
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::spine::TestFunctional;

pub const DEFAULT_MAX_SPLITS: u64 = 20_000_000_000;
pub const DEFAULT_MAX_FROZEN: usize = 20_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepControls {
    /// Abort after this many dislocations.
    pub max_splits: u64,
    /// Abort when a stored line would hold more fragments than this.
    pub max_frozen: usize,
}

impl Default for SweepControls {
    fn default() -> Self {
        SweepControls {
            max_splits: DEFAULT_MAX_SPLITS,
            max_frozen: DEFAULT_MAX_FROZEN,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrozenFragment {
    pub x: f64,
    pub freeze_time: f64,
    /// `x − c_p ℓ − z`.
    pub distance: f64,
    /// `e^{−(p+1)x + Φ(p)ℓ}`.
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrozenLineState {
    pub p: f64,
    pub z: f64,
    pub drift: f64,
    pub fragments: Vec<FrozenFragment>,
    /// For nested sweeps: index of the ancestor on the previous line.
    pub ancestors: Vec<u64>,
    pub max_freeze_time: f64,
    pub splits: u64,
}

impl FrozenLineState {
    pub fn total_mass(&self) -> f64 {
        self.fragments.iter().map(|f| (-f.x).exp()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepStats {
    pub splits: u64,
    pub frozen: Vec<u64>,
    pub max_freeze_time: f64,
}

struct Node {
    x: f64,
    t: f64,
    level: usize,
    ancestor: u64,
}

fn validate(profile: &SpectralProfile, p: f64, zs: &[f64]) -> Result<()> {
    if !(p > profile.p_lower() && p <= profile.p_bar() * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange {
            what: "p",
            value: p,
            lo: profile.p_lower(),
            hi: profile.p_bar(),
        });
    }
    if zs.is_empty() {
        return Err(Error::Degenerate("no line levels".into()));
    }
    if zs.iter().any(|z| !(*z >= 0.0 && z.is_finite())) || zs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::OutOfRange {
            what: "z",
            value: zs.iter().copied().fold(f64::NAN, f64::min),
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(())
}

/// Sweeps the lines `ℓ^{(p,z)}` for the ascending levels `zs`, reporting each
/// frozen fragment to `visit(level, fragment, ancestor_on_previous_level)`.
pub fn sweep_lines<R, V>(
    profile: &SpectralProfile,
    p: f64,
    zs: &[f64],
    rng: &mut R,
    controls: &SweepControls,
    mut visit: V,
) -> Result<SweepStats>
where
    R: Rng + ?Sized,
    V: FnMut(usize, &FrozenFragment, Option<u64>) -> Result<()>,
{
    validate(profile, p, zs)?;
    let c = profile.wave_speed(p)?;
    let phi = profile.phi(p)?;
    let measure = profile.measure();
    let rate = measure.total_rate();
    let levels = zs.len();
    // At p ≤ 0 the line through the origin is crossed at time zero.
    let weak = p <= 0.0;
    let mut frozen = vec![0u64; levels];
    let mut splits = 0u64;
    let mut max_freeze_time = 0.0f64;
    let mut stack = vec![Node {
        x: 0.0,
        t: 0.0,
        level: 0,
        ancestor: u64::MAX,
    }];

    let mut emit = |level: usize,
                    x: f64,
                    t: f64,
                    d: f64,
                    ancestor: u64,
                    frozen: &mut [u64],
                    max_t: &mut f64|
     -> Result<u64> {
        let frag = FrozenFragment {
            x,
            freeze_time: t,
            distance: d,
            weight: (phi * t - (p + 1.0) * x).exp(),
        };
        *max_t = max_t.max(t);
        visit(level, &frag, (level > 0).then_some(ancestor))?;
        let idx = frozen[level];
        frozen[level] += 1;
        Ok(idx)
    };

    while let Some(Node {
        x,
        t,
        mut level,
        mut ancestor,
    }) = stack.pop()
    {
        while level < levels {
            let lhs = x - c * t - zs[level];
            if lhs > 0.0 || (weak && lhs >= 0.0) {
                ancestor = emit(
                    level,
                    x,
                    t,
                    lhs.max(0.0),
                    ancestor,
                    &mut frozen,
                    &mut max_freeze_time,
                )?;
                level += 1;
            } else {
                break;
            }
        }
        if level == levels {
            continue;
        }
        let e: f64 = Exp1.sample(rng);
        let t_split = t + e / rate;
        if c < 0.0 {
            // x − c t rises between dislocations and can creep over a level.
            while level < levels {
                let t_creep = (x - zs[level]) / c;
                if t_creep < t_split {
                    ancestor = emit(
                        level,
                        x,
                        t_creep,
                        0.0,
                        ancestor,
                        &mut frozen,
                        &mut max_freeze_time,
                    )?;
                    level += 1;
                } else {
                    break;
                }
            }
            if level == levels {
                continue;
            }
        }
        splits += 1;
        if splits > controls.max_splits {
            return Err(Error::FragmentCap {
                cap: controls.max_splits as usize,
                time: t_split,
                alive: stack.len(),
                events: splits as usize,
                dropped_mass: 0.0,
            });
        }
        let split = measure.draw_split(rng);
        for &s in split.parts().iter().rev() {
            stack.push(Node {
                x: x - s.ln(),
                t: t_split,
                level,
                ancestor,
            });
        }
    }

    Ok(SweepStats {
        splits,
        frozen,
        max_freeze_time,
    })
}

/// Stores every frozen fragment of the nested lines `zs`.
pub fn sweep_nested(
    profile: &SpectralProfile,
    p: f64,
    zs: &[f64],
    seed: Seed,
    controls: &SweepControls,
) -> Result<Vec<FrozenLineState>> {
    let drift = profile.wave_speed(p)?;
    let mut states: Vec<FrozenLineState> = zs
        .iter()
        .map(|&z| FrozenLineState {
            p,
            z,
            drift,
            fragments: Vec::new(),
            ancestors: Vec::new(),
            max_freeze_time: 0.0,
            splits: 0,
        })
        .collect();
    let cap = controls.max_frozen;
    let stats = sweep_lines(profile, p, zs, &mut seed.rng(), controls, |k, f, anc| {
        let st = &mut states[k];
        if st.fragments.len() >= cap {
            return Err(Error::FragmentCap {
                cap,
                time: f.freeze_time,
                alive: st.fragments.len(),
                events: 0,
                dropped_mass: 0.0,
            });
        }
        st.fragments.push(*f);
        st.max_freeze_time = st.max_freeze_time.max(f.freeze_time);
        if let Some(a) = anc {
            st.ancestors.push(a);
        }
        Ok(())
    })?;
    for st in &mut states {
        st.splits = stats.splits;
    }
    Ok(states)
}

pub fn sweep_line(
    profile: &SpectralProfile,
    p: f64,
    z: f64,
    seed: Seed,
    controls: &SweepControls,
) -> Result<FrozenLineState> {
    Ok(sweep_nested(profile, p, &[z], seed, controls)?.remove(0))
}

/// `W(ℓ, p) = Σ_i y_i`.
pub fn line_w(frozen: &FrozenLineState) -> f64 {
    frozen.fragments.iter().map(|f| f.weight).sum()
}

/// Distances to the line `ℓ^{(p,0)}`: one realisation of the point process
/// `D^{(p)}`.
pub fn coming_generation(
    profile: &SpectralProfile,
    p: f64,
    seed: Seed,
    controls: &SweepControls,
) -> Result<Vec<f64>> {
    if !(p > 0.0) {
        return Err(Error::OutOfRange {
            what: "p",
            value: p,
            lo: 0.0,
            hi: profile.p_bar(),
        });
    }
    let line = sweep_line(profile, p, 0.0, seed, controls)?;
    Ok(line.fragments.iter().map(|f| f.distance).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LlnRatio {
    /// `Σ_i y_i f(d_i)`.
    pub numerator: f64,
    /// `Σ_i y_i`.
    pub line_w: f64,
    pub ratio: f64,
    pub frozen: u64,
    pub splits: u64,
}

/// One sweep of `ℓ^{(p,z)}` reduced to the weighted functional, without
/// storing the line.
pub fn lln_ratio(
    profile: &SpectralProfile,
    p: f64,
    z: f64,
    f: &TestFunctional,
    seed: Seed,
    controls: &SweepControls,
) -> Result<LlnRatio> {
    f.check_admissible(profile, p)?;
    let (mut num, mut den) = (0.0, 0.0);
    let stats = sweep_lines(profile, p, &[z], &mut seed.rng(), controls, |_, fr, _| {
        num += fr.weight * f.eval(fr.distance);
        den += fr.weight;
        Ok(())
    })?;
    let ratio = if num == 0.0 { 0.0 } else { num / den };
    Ok(LlnRatio {
        numerator: num,
        line_w: den,
        ratio,
        frozen: stats.frozen[0],
        splits: stats.splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dislocation::DislocationMeasure;

    fn uniform() -> SpectralProfile {
        SpectralProfile::new(DislocationMeasure::uniform_binary()).unwrap()
    }

    #[test]
    fn root_line_for_nonpositive_p() {
        let u = uniform();
        for p in [-0.5, 0.0] {
            let line = sweep_line(&u, p, 0.0, Seed::new(1), &SweepControls::default()).unwrap();
            assert_eq!(line.fragments.len(), 1);
            assert_eq!(line.fragments[0].freeze_time, 0.0);
            assert_eq!(line_w(&line), 1.0);
        }
    }

    #[test]
    fn positive_p_freezes_after_time_zero() {
        let u = uniform();
        for i in 0..20 {
            let line = sweep_line(
                &u,
                1.0,
                0.0,
                Seed::new(2).replicate(i),
                &SweepControls::default(),
            )
            .unwrap();
            assert!(line.fragments.len() >= 2);
            assert!(line
                .fragments
                .iter()
                .all(|f| f.freeze_time > 0.0 && f.distance > 0.0));
            assert!((line.total_mass() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn p_zero_weights_are_masses() {
        let u = uniform();
        let line = sweep_line(&u, 0.0, 3.0, Seed::new(3), &SweepControls::default()).unwrap();
        assert!((line_w(&line) - 1.0).abs() < 1e-12);
        assert!(line.fragments.iter().all(|f| f.x > 3.0));
    }

    #[test]
    fn creeping_at_negative_p() {
        let u = uniform();
        let mut creeps = 0;
        for i in 0..20 {
            let line = sweep_line(
                &u,
                -0.5,
                2.0,
                Seed::new(4).replicate(i),
                &SweepControls::default(),
            )
            .unwrap();
            assert!((line.total_mass() - 1.0).abs() < 1e-9);
            assert!(line.fragments.iter().all(|f| f.distance >= 0.0));
            creeps += line.fragments.iter().filter(|f| f.distance == 0.0).count();
        }
        assert!(creeps > 0);
    }

    #[test]
    fn nested_lines_descend() {
        let u = uniform();
        let zs = [0.5, 1.5, 2.5];
        let states = sweep_nested(
            &u,
            2f64.sqrt(),
            &zs,
            Seed::new(5),
            &SweepControls::default(),
        )
        .unwrap();
        for k in 1..zs.len() {
            let (prev, cur) = (&states[k - 1], &states[k]);
            assert_eq!(cur.ancestors.len(), cur.fragments.len());
            let mut mass = vec![0.0; prev.fragments.len()];
            for (f, &a) in cur.fragments.iter().zip(&cur.ancestors) {
                let anc = prev.fragments[a as usize];
                assert!(f.freeze_time >= anc.freeze_time);
                assert!(f.x >= anc.x);
                mass[a as usize] += (-f.x).exp();
            }
            // each ancestor's mass is fully dissected by the next line
            for (m, a) in mass.iter().zip(&prev.fragments) {
                assert!((m - (-a.x).exp()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let u = uniform();
        let c = SweepControls::default();
        assert!(sweep_line(&u, 2.0, 1.0, Seed::new(1), &c).is_err());
        assert!(sweep_line(&u, 1.0, -1.0, Seed::new(1), &c).is_err());
        assert!(coming_generation(&u, 0.0, Seed::new(1), &c).is_err());
        let tiny = SweepControls {
            max_splits: 10,
            ..c
        };
        assert!(matches!(
            sweep_line(&u, 1.0, 5.0, Seed::new(1), &tiny),
            Err(Error::FragmentCap { .. })
        ));
    }

    #[test]
    fn zero_functional() {
        let u = uniform();
        let r = lln_ratio(
            &u,
            1.0,
            2.0,
            &TestFunctional::Zero,
            Seed::new(6),
            &SweepControls::default(),
        )
        .unwrap();
        assert_eq!((r.numerator, r.ratio), (0.0, 0.0));
    }
}
