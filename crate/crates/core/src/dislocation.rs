//! Dislocation measures and the deterministic spectral quantities derived
//! from them.
//!
//! Two families are supported: finitely many atoms (each a rate and a
//! conservative ratio vector) and the uniform binary measure where
//! `s₁ ~ U(1/2, 1)`, `s₂ = 1 − s₁` with total rate one.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::numerics::{bisect, Laguerre, Legendre};

pub const DEFAULT_QUADRATURE_NODES: usize = 64;

/// Search window for the critical parameter `p̄`.
pub const P_BAR_WINDOW: (f64, f64) = (1e-6, 50.0);

const RATIO_SUM_TOL: f64 = 1e-12;

/// Power of the substitution `s₂ = w^k / 2` used for the uniform binary
/// integrals. It turns the `s₂^{q+1}` endpoint singularity at `s₂ → 0` into a
/// smooth power of `w`.
const ENDPOINT_STRETCH: i32 = 8;

/// Below this `q` the uniform binary spectral integrals switch to Laguerre.
const UNIFORM_EDGE: f64 = -1.5;

/// Atoms whose jump sizes agree to this relative precision are merged.
const ATOM_MERGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    weight: f64,
    ratios: Vec<f64>,
}

impl Atom {
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Descending, sums to one.
    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomTable {
    atoms: Vec<Atom>,
    cumulative: Vec<f64>,
}

impl AtomTable {
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> &Atom {
        if self.atoms.len() == 1 {
            return &self.atoms[0];
        }
        let u = rng.random::<f64>() * self.total();
        let k = self.cumulative.partition_point(|&c| c <= u);
        &self.atoms[k.min(self.atoms.len() - 1)]
    }
}

/// The splitting law `ν` of a finite-activity conservative fragmentation.
#[derive(Clone, Debug, PartialEq)]
pub enum DislocationMeasure {
    DiscreteAtoms(AtomTable),
    UniformBinary,
}

/// Relative sizes produced by one dislocation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Split<'a> {
    Atom(&'a [f64]),
    Pair([f64; 2]),
}

impl Split<'_> {
    pub fn parts(&self) -> &[f64] {
        match self {
            Split::Atom(r) => r,
            Split::Pair(p) => p,
        }
    }
}

impl DislocationMeasure {
    /// Builds a discrete measure from `(weight, ratios)` pairs.
    ///
    /// Ratios are sorted in descending order and must lie in `(0, 1]` with at
    /// least two parts; their sum must be one up to `1e-12`, after which they
    /// are renormalised.
    pub fn discrete(atoms: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        let mut out = Vec::with_capacity(atoms.len());
        for (k, (weight, mut ratios)) in atoms.into_iter().enumerate() {
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(Error::InvalidMeasure(format!(
                    "atom {k}: weight {weight} must be positive and finite"
                )));
            }
            if ratios.len() < 2 {
                return Err(Error::InvalidMeasure(format!(
                    "atom {k}: a dislocation needs at least two parts"
                )));
            }
            if let Some(bad) = ratios.iter().find(|&&s| !(s > 0.0 && s <= 1.0)) {
                return Err(Error::InvalidMeasure(format!(
                    "atom {k}: ratio {bad} is outside (0, 1]"
                )));
            }
            let sum: f64 = ratios.iter().sum();
            if (sum - 1.0).abs() > RATIO_SUM_TOL {
                return Err(Error::InvalidMeasure(format!(
                    "atom {k}: ratios sum to {sum}, not 1 (non-conservative measures are not supported)"
                )));
            }
            ratios.iter_mut().for_each(|s| *s /= sum);
            ratios.sort_by(|a, b| b.total_cmp(a));
            out.push(Atom { weight, ratios });
        }
        let cumulative = out
            .iter()
            .scan(0.0, |acc, a| {
                *acc += a.weight;
                Some(*acc)
            })
            .collect();
        let table = AtomTable {
            atoms: out,
            cumulative,
        };
        let erosion_integral: f64 = table
            .atoms
            .iter()
            .map(|a| a.weight * (1.0 - a.ratios[0]))
            .sum();
        assert!(erosion_integral.is_finite());
        Ok(DislocationMeasure::DiscreteAtoms(table))
    }

    pub fn uniform_binary() -> Self {
        DislocationMeasure::UniformBinary
    }

    /// Rate-one splitting into two equal halves.
    pub fn binary_half() -> Self {
        Self::discrete(vec![(1.0, vec![0.5, 0.5])]).expect("valid measure")
    }

    /// Total mass `γ = ν(∇₁)`.
    pub fn total_rate(&self) -> f64 {
        match self {
            DislocationMeasure::DiscreteAtoms(t) => t.total(),
            DislocationMeasure::UniformBinary => 1.0,
        }
    }

    /// `p̲ = inf{p : ∫ Σ_{i≥2} s_i^{p+1} ν(ds) < ∞}`, known in closed form for
    /// each family.
    pub fn p_lower(&self) -> f64 {
        match self {
            DislocationMeasure::DiscreteAtoms(_) => f64::NEG_INFINITY,
            // ∫_0^{1/2} 2 u^{p+1} du is finite iff p > -2.
            DislocationMeasure::UniformBinary => -2.0,
        }
    }

    /// Draws the ratio vector of one dislocation from `γ⁻¹ν`.
    pub fn draw_split<R: Rng + ?Sized>(&self, rng: &mut R) -> Split<'_> {
        match self {
            DislocationMeasure::DiscreteAtoms(t) => Split::Atom(&t.pick(rng).ratios),
            DislocationMeasure::UniformBinary => {
                let s2 = 0.5 * (1.0 - rng.random::<f64>());
                Split::Pair([1.0 - s2, s2])
            }
        }
    }

    /// The `ν`-integral as explicit `(weight, parts)` nodes: the atoms
    /// themselves, or the mapped quadrature rule for the uniform binary family.
    pub fn nodes(&self, quad: &Legendre) -> Vec<(f64, Vec<f64>)> {
        match self {
            DislocationMeasure::DiscreteAtoms(t) => t
                .atoms
                .iter()
                .map(|a| (a.weight, a.ratios.clone()))
                .collect(),
            DislocationMeasure::UniformBinary => {
                let k = ENDPOINT_STRETCH;
                quad.mapped(0.0, 1.0)
                    .map(|(w, h)| {
                        let s2 = 0.5 * w.powi(k);
                        (h * k as f64 * w.powi(k - 1), vec![1.0 - s2, s2])
                    })
                    .collect()
            }
        }
    }

    /// `∫ g(s) ν(ds)` with `quad` used for the uniform binary family.
    pub fn integrate<G: FnMut(&[f64]) -> f64>(&self, quad: &Legendre, mut g: G) -> f64 {
        match self {
            DislocationMeasure::DiscreteAtoms(t) => {
                t.atoms.iter().map(|a| a.weight * g(&a.ratios)).sum()
            }
            DislocationMeasure::UniformBinary => {
                // s₁ ∈ (1/2, 1) with density 2; put s₂ = 1 − s₁ = w^k / 2.
                let k = ENDPOINT_STRETCH;
                let kf = k as f64;
                quad.integrate(0.0, 1.0, |w| {
                    let s2 = 0.5 * w.powi(k);
                    kf * w.powi(k - 1) * g(&[1.0 - s2, s2])
                })
            }
        }
    }
}

/// Lévy measure `m^{(p)}` of the tagged fragment under the tilted law.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpLaw {
    p: f64,
    total_rate: f64,
    kind: JumpKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum JumpKind {
    /// Point masses at `sizes` (ascending) with the given `rates`.
    Atoms {
        sizes: Vec<f64>,
        rates: Vec<f64>,
        cumulative: Vec<f64>,
    },
    /// Density `coefficient · e^{−decay·x}` on `(0, ∞)`.
    Exponential { coefficient: f64, decay: f64 },
}

impl JumpLaw {
    pub fn p(&self) -> f64 {
        self.p
    }

    /// `∫ m^{(p)}(dx)`.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    pub fn kind(&self) -> &JumpKind {
        &self.kind
    }

    /// Draws one jump size from the normalised law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            JumpKind::Atoms {
                sizes, cumulative, ..
            } => {
                if sizes.len() == 1 {
                    return sizes[0];
                }
                let u = rng.random::<f64>() * self.total_rate;
                let k = cumulative.partition_point(|&c| c <= u);
                sizes[k.min(sizes.len() - 1)]
            }
            JumpKind::Exponential { decay, .. } => {
                let e: f64 = Exp1.sample(rng);
                e / decay
            }
        }
    }

    /// `∫ (1 − e^{−qx}) m^{(p)}(dx)`.
    pub fn laplace_exponent(&self, q: f64) -> f64 {
        match &self.kind {
            JumpKind::Atoms { sizes, rates, .. } => sizes
                .iter()
                .zip(rates)
                .map(|(a, r)| -r * (-q * a).exp_m1())
                .sum(),
            JumpKind::Exponential { coefficient, decay } => coefficient * q / (decay * (decay + q)),
        }
    }

    /// Tail mass `m^{(p)}((x, ∞))`.
    pub fn tail(&self, x: f64) -> f64 {
        match &self.kind {
            JumpKind::Atoms { sizes, rates, .. } => sizes
                .iter()
                .zip(rates)
                .filter(|(a, _)| **a > x)
                .map(|(_, r)| r)
                .sum(),
            JumpKind::Exponential { coefficient, decay } => {
                coefficient / decay * (-decay * x.max(0.0)).exp()
            }
        }
    }

    /// `∫ x m^{(p)}(dx)`.
    pub fn first_moment(&self) -> f64 {
        match &self.kind {
            JumpKind::Atoms { sizes, rates, .. } => {
                sizes.iter().zip(rates).map(|(a, r)| a * r).sum()
            }
            JumpKind::Exponential { coefficient, decay } => coefficient / (decay * decay),
        }
    }

    /// `∫ f dm^{(p)}`; the density case uses Gauss–Laguerre with `quad`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, quad: &Laguerre, mut f: F) -> f64 {
        match &self.kind {
            JumpKind::Atoms { sizes, rates, .. } => {
                sizes.iter().zip(rates).map(|(a, r)| r * f(*a)).sum()
            }
            JumpKind::Exponential { coefficient, decay } => {
                coefficient * quad.integrate_decay(*decay, f)
            }
        }
    }

    /// True when every atom is an integer multiple of a common step (within
    /// `1e-9`), which rules out renewal limits.
    pub fn is_lattice(&self) -> bool {
        match &self.kind {
            JumpKind::Atoms { sizes, .. } => lattice_step(sizes).is_some(),
            JumpKind::Exponential { .. } => false,
        }
    }
}

/// Common step of `sizes` if they all are rational multiples of the smallest
/// one with denominator at most 1000.
fn lattice_step(sizes: &[f64]) -> Option<f64> {
    let base = sizes.iter().copied().fold(f64::INFINITY, f64::min);
    let mut denom_lcm: u64 = 1;
    for &a in sizes {
        let r = a / base;
        let (_, q) = best_rational(r, 1000)?;
        denom_lcm = lcm(denom_lcm, q);
        if denom_lcm > 1_000_000 {
            return None;
        }
    }
    Some(base / denom_lcm as f64)
}

fn best_rational(x: f64, max_den: u64) -> Option<(u64, u64)> {
    // Continued-fraction convergents.
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut v = x;
    for _ in 0..64 {
        let a = v.floor();
        if a > 1e12 {
            break;
        }
        let a_int = a as u64;
        let h2 = a_int.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a_int.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (x - h1 as f64 / k1 as f64).abs() <= 1e-9 * x.abs().max(1.0) {
            return Some((h1, k1));
        }
        let frac = v - a;
        if frac < 1e-15 {
            break;
        }
        v = 1.0 / frac;
    }
    if k1 > 0 && (x - h1 as f64 / k1 as f64).abs() <= 1e-9 * x.abs().max(1.0) {
        Some((h1, k1))
    } else {
        None
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    fn gcd(mut a: u64, mut b: u64) -> u64 {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    }
    a / gcd(a, b) * b
}

/// Cached spectral data of one dislocation measure.
///
/// All values are immutable after construction; profiles are `Send + Sync`
/// and meant to be shared across replicate workers.
#[derive(Clone, Debug)]
pub struct SpectralProfile {
    measure: DislocationMeasure,
    quad: Legendre,
    laguerre: Laguerre,
    p_lower: f64,
    p_bar: f64,
}

impl SpectralProfile {
    pub fn new(measure: DislocationMeasure) -> Result<Self> {
        Self::with_nodes(measure, DEFAULT_QUADRATURE_NODES)
    }

    pub fn with_nodes(measure: DislocationMeasure, nodes: usize) -> Result<Self> {
        let p_lower = measure.p_lower();
        let mut profile = SpectralProfile {
            measure,
            quad: Legendre::new(nodes),
            laguerre: Laguerre::new(nodes),
            p_lower,
            p_bar: f64::NAN,
        };
        profile.p_bar = profile.solve_p_bar(P_BAR_WINDOW)?;
        Ok(profile)
    }

    pub fn measure(&self) -> &DislocationMeasure {
        &self.measure
    }

    pub fn quadrature(&self) -> &Legendre {
        &self.quad
    }

    pub fn laguerre(&self) -> &Laguerre {
        &self.laguerre
    }

    pub fn nodes(&self) -> usize {
        self.quad.len()
    }

    pub fn p_lower(&self) -> f64 {
        self.p_lower
    }

    /// The unique root `p̄ > 0` of `(p+1)Φ′(p) = Φ(p)`.
    pub fn p_bar(&self) -> f64 {
        self.p_bar
    }

    /// The critical speed `c_p̄ = Φ′(p̄)`.
    pub fn c_bar(&self) -> f64 {
        self.phi_unchecked(self.p_bar) / (self.p_bar + 1.0)
    }

    pub fn is_critical(&self, p: f64) -> bool {
        (p - self.p_bar).abs() <= 1e-9 * self.p_bar.max(1.0)
    }

    fn check_domain(&self, what: &'static str, q: f64) -> Result<()> {
        if q > self.p_lower && q.is_finite() {
            Ok(())
        } else {
            Err(Error::BelowLowerExponent {
                what,
                value: q,
                p_lower: self.p_lower,
            })
        }
    }

    /// Laplace exponent `Φ(q) = ∫ (1 − Σ s_i^{q+1}) ν(ds)`.
    pub fn phi(&self, q: f64) -> Result<f64> {
        self.check_domain("q", q)?;
        Ok(self.phi_unchecked(q))
    }

    /// Near `p̲ = −2` the `s₂^{q+1}` singularity outruns the stretched
    /// Legendre rule; there the per-part density `2e^{−2x}dx` of `x = −ln s`
    /// is integrated with Laguerre weight `e^{−(q+2)x}` instead.
    fn near_uniform_edge(&self, q: f64) -> bool {
        matches!(self.measure, DislocationMeasure::UniformBinary) && q < UNIFORM_EDGE
    }

    fn phi_unchecked(&self, q: f64) -> f64 {
        if self.near_uniform_edge(q) {
            // ∫ 2(e^{−2x} − e^{−(q+2)x}) dx; no cancellation this far below 0.
            let lag = &self.laguerre;
            return lag.integrate_decay(2.0, |_| 2.0) - lag.integrate_decay(q + 2.0, |_| 2.0);
        }
        // Σ s_i = 1, so 1 − Σ s_i^{q+1} = −Σ s_i (s_i^q − 1); exact zero at q = 0.
        self.measure.integrate(&self.quad, |s| {
            -s.iter().map(|&si| si * (q * si.ln()).exp_m1()).sum::<f64>()
        })
    }

    /// `Φ′(q) = ∫ Σ s_i^{q+1} (−ln s_i) ν(ds)`.
    pub fn phi_prime(&self, q: f64) -> Result<f64> {
        self.check_domain("q", q)?;
        Ok(self.phi_prime_unchecked(q))
    }

    fn phi_prime_unchecked(&self, q: f64) -> f64 {
        if self.near_uniform_edge(q) {
            return self.laguerre.integrate_decay(q + 2.0, |x| 2.0 * x);
        }
        self.measure.integrate(&self.quad, |s| {
            s.iter()
                .map(|&si| {
                    let l = si.ln();
                    -l * (l * (q + 1.0)).exp()
                })
                .sum::<f64>()
        })
    }

    fn solve_p_bar(&self, window: (f64, f64)) -> Result<f64> {
        let h = |p: f64| (p + 1.0) * self.phi_prime_unchecked(p) - self.phi_unchecked(p);
        bisect("(p+1)Φ'(p) - Φ(p)", h, window.0, window.1, 1e-14)
    }

    /// Wave speed `c_p = Φ(p)/(p+1)`.
    pub fn wave_speed(&self, p: f64) -> Result<f64> {
        self.check_domain("p", p)?;
        if p == -1.0 {
            return Err(Error::Degenerate("c_p is undefined at p = -1".into()));
        }
        Ok(self.phi_unchecked(p) / (p + 1.0))
    }

    /// The tilted jump law `m^{(p)}(dx) = e^{−px} m(dx)` with
    /// `m(dx) = e^{−x} Σ_i ν(−ln s_i ∈ dx)`.
    pub fn jump_law(&self, p: f64) -> Result<JumpLaw> {
        self.check_domain("p", p)?;
        match &self.measure {
            DislocationMeasure::DiscreteAtoms(t) => {
                let mut pts: Vec<(f64, f64)> = Vec::new();
                for a in &t.atoms {
                    for &s in &a.ratios {
                        pts.push((-s.ln(), a.weight * s.powf(p + 1.0)));
                    }
                }
                pts.sort_by(|l, r| l.0.total_cmp(&r.0));
                let mut sizes: Vec<f64> = Vec::new();
                let mut rates: Vec<f64> = Vec::new();
                for (x, r) in pts {
                    match sizes.last() {
                        Some(&last) if (x - last).abs() <= ATOM_MERGE_TOL * x.max(1.0) => {
                            *rates.last_mut().unwrap() += r;
                        }
                        _ => {
                            sizes.push(x);
                            rates.push(r);
                        }
                    }
                }
                let cumulative: Vec<f64> = rates
                    .iter()
                    .scan(0.0, |acc, r| {
                        *acc += r;
                        Some(*acc)
                    })
                    .collect();
                let total_rate = *cumulative.last().unwrap();
                Ok(JumpLaw {
                    p,
                    total_rate,
                    kind: JumpKind::Atoms {
                        sizes,
                        rates,
                        cumulative,
                    },
                })
            }
            DislocationMeasure::UniformBinary => {
                // Σ_i ν(s_i ∈ ds) = 2 ds on (0,1); x = −ln s gives 2e^{−x}dx,
                // times e^{−(p+1)x}.
                let decay = p + 2.0;
                Ok(JumpLaw {
                    p,
                    total_rate: 2.0 / decay,
                    kind: JumpKind::Exponential {
                        coefficient: 2.0,
                        decay,
                    },
                })
            }
        }
    }

    /// Largest root in `[0, ∞)` of `c_p θ − Φ(θ+p) + Φ(p) = 0` for
    /// `p ∈ (0, p̄]`; zero at `p̄`.
    pub fn eta_root(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= self.p_bar * (1.0 + 1e-12)) {
            return Err(Error::OutOfRange {
                what: "p",
                value: p,
                lo: 0.0,
                hi: self.p_bar,
            });
        }
        if self.is_critical(p) {
            return Ok(0.0);
        }
        let c = self.wave_speed(p)?;
        let phi_p = self.phi_unchecked(p);
        let g = |theta: f64| c * theta - self.phi_unchecked(theta + p) + phi_p;
        // g is convex with g(0) = 0 and g'(0) = c_p − Φ'(p) ≤ 0.
        let lo = 1e-9;
        if g(lo) >= 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        for _ in 0..80 {
            if g(hi) > 0.0 {
                return bisect("c_p θ − Φ(θ+p) + Φ(p)", g, lo, hi, 1e-14);
            }
            hi *= 2.0;
        }
        Err(Error::RootNotBracketed {
            what: "c_p θ − Φ(θ+p) + Φ(p)",
            lo,
            hi,
        })
    }

    pub fn split_nodes(&self) -> Vec<(f64, Vec<f64>)> {
        self.measure.nodes(&self.quad)
    }

    /// `∫ g(s) ν(ds)` with this profile's quadrature rule.
    pub fn integrate_split<G: FnMut(&[f64]) -> f64>(&self, g: G) -> f64 {
        self.measure.integrate(&self.quad, g)
    }
}
