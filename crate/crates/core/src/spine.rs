//! The tagged fragment `ξ_t = −ln|Π₁(t)|` under the tilted laws `ℙ^{(p)}`,
//! first passage of `Y_t = ξ_t − c_p t`, and the renewal functionals used
//! by the laws of large numbers.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::dislocation::{JumpKind, JumpLaw, SpectralProfile};
use crate::error::{Error, Result};
use crate::frag_sim::{simulate, SimControls};
use crate::numerics::Laguerre;
use crate::replicate::{map_replicates, try_map_replicates};
use crate::rng::Seed;
use crate::stats::{ratio_estimate, z_of, Summary};

pub const DEFAULT_TIME_CAP: f64 = 1e4;

/// Growth bound declared for a test functional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Envelope {
    Bounded,
    /// `|f(x)| ≤ C_ε e^{εx}` for every `ε > 0`.
    Subexponential,
    /// `|f(x)| ≤ C e^{εx}` for this `ε`.
    Exponential(f64),
}

/// A function `f` on `[0, ∞)` with `f(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum TestFunctional {
    Zero,
    Identity,
    /// Indicator of `(0, ∞)`.
    Indicator,
    /// `e^{εx} − 1`.
    ExpEps(f64),
    /// Piecewise linear through `(xs, fs)`, constant after the last knot.
    Tabulated {
        xs: Vec<f64>,
        fs: Vec<f64>,
        cumulative: Vec<f64>,
    },
}

impl TestFunctional {
    pub fn tabulated(xs: Vec<f64>, fs: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != fs.len() {
            return Err(Error::Inadmissible(
                "a table needs at least two knots and one value per knot".into(),
            ));
        }
        if xs[0] != 0.0 || fs[0] != 0.0 {
            return Err(Error::Inadmissible("tables must start at (0, 0)".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || fs.iter().any(|f| !f.is_finite()) {
            return Err(Error::Inadmissible(
                "knots must be strictly increasing with finite values".into(),
            ));
        }
        let mut cumulative = vec![0.0];
        for k in 1..xs.len() {
            let prev = cumulative[k - 1];
            cumulative.push(prev + 0.5 * (fs[k] + fs[k - 1]) * (xs[k] - xs[k - 1]));
        }
        Ok(TestFunctional::Tabulated { xs, fs, cumulative })
    }

    /// Looks a functional up by its config name.
    pub fn by_name(name: &str, eps: Option<f64>) -> Result<Self> {
        match name {
            "zero" => Ok(TestFunctional::Zero),
            "identity" => Ok(TestFunctional::Identity),
            "indicator" => Ok(TestFunctional::Indicator),
            "exp_eps" => match eps {
                Some(e) if e > 0.0 && e.is_finite() => Ok(TestFunctional::ExpEps(e)),
                _ => Err(Error::Inadmissible("exp_eps needs a positive eps".into())),
            },
            other => Err(Error::Inadmissible(format!("unknown functional {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TestFunctional::Zero => "zero",
            TestFunctional::Identity => "identity",
            TestFunctional::Indicator => "indicator",
            TestFunctional::ExpEps(_) => "exp_eps",
            TestFunctional::Tabulated { .. } => "bounded_custom_grid",
        }
    }

    pub fn envelope(&self) -> Envelope {
        match self {
            TestFunctional::Zero | TestFunctional::Indicator | TestFunctional::Tabulated { .. } => {
                Envelope::Bounded
            }
            TestFunctional::Identity => Envelope::Subexponential,
            TestFunctional::ExpEps(e) => Envelope::Exponential(*e),
        }
    }

    /// Requires `|Φ(p − ε)| < ∞` for the declared envelope.
    pub fn check_admissible(&self, profile: &SpectralProfile, p: f64) -> Result<()> {
        match self.envelope() {
            Envelope::Bounded | Envelope::Subexponential => Ok(()),
            Envelope::Exponential(eps) if p - eps > profile.p_lower() => Ok(()),
            Envelope::Exponential(eps) => Err(Error::Inadmissible(format!(
                "growth e^({eps}x) needs p - eps > p_lower = {}, got p = {p}",
                profile.p_lower()
            ))),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunctional::Zero => 0.0,
            TestFunctional::Identity => x,
            TestFunctional::Indicator => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunctional::ExpEps(e) => (e * x).exp_m1(),
            TestFunctional::Tabulated { xs, fs, .. } => {
                if x <= 0.0 {
                    return 0.0;
                }
                let k = xs.partition_point(|&a| a <= x);
                if k >= xs.len() {
                    return *fs.last().unwrap();
                }
                let (a, b) = (xs[k - 1], xs[k]);
                fs[k - 1] + (fs[k] - fs[k - 1]) * (x - a) / (b - a)
            }
        }
    }

    /// `F(w) = ∫_0^w f(t) dt`.
    pub fn integral(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        match self {
            TestFunctional::Zero => 0.0,
            TestFunctional::Identity => 0.5 * w * w,
            TestFunctional::Indicator => w,
            TestFunctional::ExpEps(e) => (e * w).exp_m1() / e - w,
            TestFunctional::Tabulated { xs, fs, cumulative } => {
                let k = xs.partition_point(|&a| a <= w);
                if k >= xs.len() {
                    return cumulative.last().unwrap()
                        + fs.last().unwrap() * (w - xs.last().unwrap());
                }
                let a = xs[k - 1];
                cumulative[k - 1] + 0.5 * (fs[k - 1] + self.eval(w)) * (w - a)
            }
        }
    }
}

/// One path of the tilted subordinator `ξ` on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinePath {
    pub p: f64,
    pub drift: f64,
    pub horizon: f64,
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
}

impl SpinePath {
    pub fn xi_at(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.jump_sizes[..k].iter().sum()
    }

    /// `Y_t = ξ_t − c_p t`.
    pub fn y_at(&self, t: f64) -> f64 {
        self.xi_at(t) - self.drift * t
    }
}

fn exp_time<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Jumps of `ξ` under `ℙ^{(p)}`: rate `∫m^{(p)}`, sizes from the normalised
/// `m^{(p)}`.
pub fn simulate_tagged(
    profile: &SpectralProfile,
    p: f64,
    horizon: f64,
    seed: Seed,
) -> Result<SpinePath> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::OutOfRange {
            what: "horizon",
            value: horizon,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let law = profile.jump_law(p)?;
    let drift = profile.wave_speed(p)?;
    let mut rng = seed.rng();
    let mut t = 0.0;
    let (mut jump_times, mut jump_sizes) = (Vec::new(), Vec::new());
    loop {
        t += exp_time(&mut rng, law.total_rate());
        if t > horizon {
            break;
        }
        jump_times.push(t);
        jump_sizes.push(law.sample(&mut rng));
    }
    Ok(SpinePath {
        p,
        drift,
        horizon,
        jump_times,
        jump_sizes,
    })
}

/// `ξ_t` alone, without storing the path.
pub fn tagged_value_at<R: Rng + ?Sized>(law: &JumpLaw, t: f64, rng: &mut R) -> f64 {
    let mut s = 0.0;
    let mut xi = 0.0;
    loop {
        s += exp_time(rng, law.total_rate());
        if s > t {
            return xi;
        }
        xi += law.sample(rng);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstPassage {
    pub z: f64,
    /// `None` when the time cap was reached first.
    pub tau: Option<f64>,
    /// `Y_τ − z`; zero for creeping or immediate passage, NaN when unobserved.
    pub overshoot: f64,
    pub jumps: u64,
}

impl FirstPassage {
    pub fn observed(&self) -> bool {
        self.tau.is_some()
    }
}

/// First passage of `Y = ξ − c_p t` above levels `z ≥ 0` for a fixed tilt.
#[derive(Clone, Debug)]
pub struct PassageSampler {
    p: f64,
    law: JumpLaw,
    drift: f64,
    time_cap: f64,
}

impl PassageSampler {
    pub fn new(profile: &SpectralProfile, p: f64) -> Result<Self> {
        Ok(PassageSampler {
            p,
            law: profile.jump_law(p)?,
            drift: profile.wave_speed(p)?,
            time_cap: DEFAULT_TIME_CAP,
        })
    }

    pub fn with_time_cap(mut self, cap: f64) -> Self {
        self.time_cap = cap;
        self
    }

    pub fn law(&self) -> &JumpLaw {
        &self.law
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn sample<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> FirstPassage {
        let c = self.drift;
        if z == 0.0 && self.p <= 0.0 {
            return FirstPassage {
                z,
                tau: Some(0.0),
                overshoot: 0.0,
                jumps: 0,
            };
        }
        let rate = self.law.total_rate();
        let (mut t, mut xi, mut jumps) = (0.0, 0.0, 0u64);
        loop {
            let next = t + exp_time(rng, rate);
            if c < 0.0 {
                // Y rises linearly between jumps and may creep over z.
                let t_creep = (z - xi) / -c;
                if t_creep <= next.min(self.time_cap) {
                    return FirstPassage {
                        z,
                        tau: Some(t_creep),
                        overshoot: 0.0,
                        jumps,
                    };
                }
            }
            if next > self.time_cap {
                return FirstPassage {
                    z,
                    tau: None,
                    overshoot: f64::NAN,
                    jumps,
                };
            }
            t = next;
            xi += self.law.sample(rng);
            jumps += 1;
            let y = xi - c * t;
            if y > z {
                return FirstPassage {
                    z,
                    tau: Some(t),
                    overshoot: y - z,
                    jumps,
                };
            }
        }
    }
}

pub fn first_passage(
    profile: &SpectralProfile,
    p: f64,
    z: f64,
    seed: Seed,
) -> Result<FirstPassage> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::OutOfRange {
            what: "z",
            value: z,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(PassageSampler::new(profile, p)?.sample(z, &mut seed.rng()))
}

/// Result of the deterministic functional for `p ∈ (p̲, 0]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QSmall {
    pub value: f64,
    /// Difference between the full and half-node quadrature (zero for atoms).
    pub truncation_error: f64,
    /// The renewal limit behind the formula needs a non-lattice jump law;
    /// the value is computed regardless.
    pub lattice: bool,
}

/// `Q^{(p)}(f) = (Φ′(p) − c_p)⁻¹ ∫ F(y) m^{(p)}(dy)`.
pub fn q_small(profile: &SpectralProfile, p: f64, f: &TestFunctional) -> Result<QSmall> {
    if !(p > profile.p_lower() && p <= 0.0) {
        return Err(Error::OutOfRange {
            what: "p",
            value: p,
            lo: profile.p_lower(),
            hi: 0.0,
        });
    }
    f.check_admissible(profile, p)?;
    let law = profile.jump_law(p)?;
    let den = profile.phi_prime(p)? - profile.wave_speed(p)?;
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!("Φ'(p) - c_p = {den} at p = {p}")));
    }
    // Move the declared growth of F into the Laguerre weight.
    let shift = match f.envelope() {
        Envelope::Exponential(eps) => eps,
        _ => 0.0,
    };
    let full = integrate_shifted(&law, profile.laguerre(), shift, |y| f.integral(y));
    let truncation_error = match law.kind() {
        JumpKind::Atoms { .. } => 0.0,
        JumpKind::Exponential { .. } => {
            let half = Laguerre::new((profile.nodes() / 2).max(2));
            (full - integrate_shifted(&law, &half, shift, |y| f.integral(y))).abs() / den
        }
    };
    Ok(QSmall {
        value: full / den,
        truncation_error,
        lattice: law.is_lattice(),
    })
}

/// `∫ f dm^{(p)}` with a density law integrated against the weight
/// `e^{−(decay − shift)y}`.
fn integrate_shifted<F: Fn(f64) -> f64>(law: &JumpLaw, quad: &Laguerre, shift: f64, f: F) -> f64 {
    match law.kind() {
        JumpKind::Exponential { coefficient, decay } => {
            coefficient * quad.integrate_decay(decay - shift, |y| f(y) * (-shift * y).exp())
        }
        JumpKind::Atoms { .. } => law.integrate(quad, f),
    }
}

/// Monte Carlo `Q^{(p)}(f) = E[F(O)] / E[O]` with `O = Y_{τ₀}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QLarge {
    pub value: f64,
    pub se: f64,
    pub n: usize,
    /// Passages that hit the time cap and were left out.
    pub unobserved: usize,
}

pub fn q_large(
    profile: &SpectralProfile,
    p: f64,
    f: &TestFunctional,
    n_samples: usize,
    seed: Seed,
) -> Result<QLarge> {
    if !(p > 0.0 && p <= profile.p_bar() * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange {
            what: "p",
            value: p,
            lo: 0.0,
            hi: profile.p_bar(),
        });
    }
    if n_samples < 2 {
        return Err(Error::TooFewSamples {
            got: n_samples,
            need: 2,
        });
    }
    f.check_admissible(profile, p)?;
    let sampler = PassageSampler::new(profile, p)?;
    let passages = map_replicates(n_samples, |i| {
        sampler.sample(0.0, &mut seed.replicate(i).rng())
    });
    let overshoots: Vec<f64> = passages
        .iter()
        .filter(|fp| fp.observed())
        .map(|fp| fp.overshoot)
        .collect();
    let num: Vec<f64> = overshoots.iter().map(|&o| f.integral(o)).collect();
    let (value, se) = ratio_estimate(&num, &overshoots);
    if !value.is_finite() {
        return Err(Error::Degenerate("zero mean overshoot".into()));
    }
    Ok(QLarge {
        value,
        se,
        n: overshoots.len(),
        unobserved: n_samples - overshoots.len(),
    })
}

/// `(lhs, rhs)` of `∫ e^{εx} m_H^{(p)}(dx) = [Φ(p+η) − Φ(p−ε)]/(η+ε)`.
pub fn ladder_height_check(profile: &SpectralProfile, p: f64, eps: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && p - eps > profile.p_lower()) {
        return Err(Error::Inadmissible(format!(
            "eps = {eps} needs eps > 0 and p - eps > p_lower = {}",
            profile.p_lower()
        )));
    }
    let eta = profile.eta_root(p)?;
    let rhs = (profile.phi(p + eta)? - profile.phi(p - eps)?) / (eta + eps);
    let law = profile.jump_law(p)?;
    let lhs = match law.kind() {
        JumpKind::Atoms { sizes, rates, .. } => {
            // m^{(p)}(x, ∞) is a step function; integrate each step exactly.
            sizes
                .iter()
                .zip(rates)
                .map(|(&a, &r)| {
                    let tail_part = r * (eps * a).exp_m1() / eps;
                    let eta_part = if eta > 0.0 {
                        r * ((eps * a).exp_m1() / eps
                            - (-eta * a).exp() * ((eps + eta) * a).exp_m1() / (eps + eta))
                    } else {
                        0.0
                    };
                    tail_part - eta_part
                })
                .sum()
        }
        JumpKind::Exponential { decay, .. } => {
            let quad = profile.laguerre();
            let b = *decay;
            // ∫_x^∞ e^{−η(y−x)} T(y) dy with y = x + u.
            let inner = |x: f64| quad.integrate_decay(eta + b, |u| law.tail(x + u) * (b * u).exp());
            quad.integrate_decay(b - eps, |x| (b * x).exp() * (law.tail(x) - eta * inner(x)))
        }
    };
    Ok((lhs, rhs))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManyToOne {
    pub tree: Summary,
    pub spine: Summary,
    pub z_score: f64,
}

/// Compares `E[Σ_i e^{Φ(p)t} |Π_i(t)|^{p+1} g(x_i)]` over simulated trees
/// with `E^{(p)}[g(ξ_t)]` over tilted spines.
pub fn many_to_one_check<G>(
    profile: &SpectralProfile,
    p: f64,
    t: f64,
    g: G,
    n_runs: usize,
    seed: Seed,
    controls: &SimControls,
) -> Result<ManyToOne>
where
    G: Fn(f64) -> f64 + Sync + Send,
{
    let phi_p = profile.phi(p)?;
    let law = profile.jump_law(p)?;
    let measure = profile.measure();
    let tree_vals = try_map_replicates(n_runs, |i| -> Result<f64> {
        let traj = simulate(measure, t, seed.tagged(1, i), controls)?;
        let snap = traj.final_population();
        Ok(snap
            .xs()
            .map(|x| (phi_p * t - (p + 1.0) * x).exp() * g(x))
            .sum())
    })?;
    let spine_vals = map_replicates(n_runs, |i| {
        g(tagged_value_at(&law, t, &mut seed.tagged(2, i).rng()))
    });
    let tree = Summary::of(&tree_vals);
    let spine = Summary::of(&spine_vals);
    let se = (tree.se * tree.se + spine.se * spine.se).sqrt();
    let diff = tree.mean - spine.mean;
    let z_score = z_of(diff, se, spine.mean.abs());
    Ok(ManyToOne {
        tree,
        spine,
        z_score,
    })
}
