//! Travelling waves `ψ_p(x) = E exp(−e^{−(p+1)x} Δ_p)` estimated from samples
//! of `Δ_p`, their `L` transforms, and the travelling-wave operator
//!
//! `𝒜ψ(x) = −c ψ′(x) + ∫ (Π_i ψ(x − ln s_i) − ψ(x)) ν(ds)`.

use crate::dislocation::SpectralProfile;
use crate::error::{Error, Result};
use crate::numerics::bisect;
use crate::stats::{ls_slope, mean_var};

pub const MIN_DELTA_SAMPLES: usize = 1000;

/// Parts smaller than this are left out of the product in `𝒜ψ`.
pub const PART_CUTOFF: f64 = 1e-14;

/// An evenly spaced grid `lo, lo + step, …, hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    /// `[−4/(p+1), 12/(p+1)]` with step `0.1/(p+1)`.
    pub fn default_for(p: f64) -> Self {
        let s = 1.0 / (p + 1.0);
        Grid {
            lo: -4.0 * s,
            hi: 12.0 * s,
            step: 0.1 * s,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

/// A tabulated wave estimate. The sorted `Δ` samples are kept so the
/// estimator can be evaluated exactly off the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    p: f64,
    grid: Grid,
    xs: Vec<f64>,
    values: Vec<f64>,
    se: Vec<f64>,
    samples: Vec<f64>,
}

/// Per-sample terms of the estimator at `x`: `exp(−a Δ)` with `a = e^{−(p+1)x}`.
fn terms(samples: &[f64], p: f64, x: f64) -> impl Iterator<Item = f64> + '_ {
    let a = (-(p + 1.0) * x).exp();
    samples.iter().map(move |&d| (-a * d).exp())
}

/// Builds `ψ̂` from samples of `Δ_p` on `grid` (default grid when `None`).
pub fn estimate_wave(samples: &[f64], p: f64, grid: Option<Grid>) -> Result<WaveFunction> {
    if samples.len() < MIN_DELTA_SAMPLES {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: MIN_DELTA_SAMPLES,
        });
    }
    if let Some((index, &value)) = samples
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
    {
        return Err(Error::NegativeSample { index, value });
    }
    if !(p > -1.0) {
        return Err(Error::OutOfRange {
            what: "p",
            value: p,
            lo: -1.0,
            hi: f64::INFINITY,
        });
    }
    let grid = grid.unwrap_or_else(|| Grid::default_for(p));
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let xs = grid.points();
    let n = sorted.len() as f64;
    let mut values = Vec::with_capacity(xs.len());
    let mut se = Vec::with_capacity(xs.len());
    for &x in &xs {
        let v: Vec<f64> = terms(&sorted, p, x).collect();
        let (m, var) = mean_var(&v);
        if !(m > 0.0 && m <= 1.0) {
            return Err(Error::WaveOutOfRange { x, value: m });
        }
        values.push(m);
        se.push((var / n).sqrt());
    }
    let wave = WaveFunction {
        p,
        grid,
        xs,
        values,
        se,
        samples: sorted,
    };
    wave.check_coverage()?;
    Ok(wave)
}

impl WaveFunction {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn se(&self) -> &[f64] {
        &self.se
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `ψ̂(x₀) ≤ 0.05` and `ψ̂(x_n) ≥ 0.999`.
    pub fn check_coverage(&self) -> Result<()> {
        let (first, last) = (self.values[0], *self.values.last().unwrap());
        if first > 0.05 {
            return Err(Error::GridCoverage(format!(
                "psi({}) = {first} exceeds 0.05",
                self.xs[0]
            )));
        }
        if last < 0.999 {
            return Err(Error::GridCoverage(format!(
                "psi({}) = {last} is below 0.999",
                self.xs.last().unwrap()
            )));
        }
        Ok(())
    }

    /// The estimator evaluated exactly at any `x`.
    pub fn psi_exact(&self, x: f64) -> f64 {
        terms(&self.samples, self.p, x).sum::<f64>() / self.samples.len() as f64
    }

    /// Piecewise-linear interpolation on the grid. To the left `−ln ψ` is
    /// continued as `e^{−(p+1)x}`; to the right `1 − ψ` is continued as
    /// `k e^{−(p+1)x}`.
    pub fn psi(&self, x: f64) -> f64 {
        let q = self.p + 1.0;
        let (x0, xn) = (self.xs[0], *self.xs.last().unwrap());
        if x <= x0 {
            return self.values[0].powf((q * (x0 - x)).exp());
        }
        if x >= xn {
            let k = (q * xn).exp() * (1.0 - self.values.last().unwrap());
            return 1.0 - k * (-q * x).exp();
        }
        let j = (((x - x0) / self.grid.step) as usize).min(self.xs.len() - 2);
        let w = (x - self.xs[j]) / (self.xs[j + 1] - self.xs[j]);
        self.values[j] + w * (self.values[j + 1] - self.values[j])
    }

    /// Index set of the central half of the grid.
    pub fn central_half(&self) -> std::ops::Range<usize> {
        let n = self.xs.len();
        n / 4..n - n / 4
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LTransform {
    pub p: f64,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub se: Vec<f64>,
    /// Estimate of `k_p`: `lim L(x)` below `p̄`, `lim L(x)/x` at `p̄`.
    pub k: f64,
    pub critical: bool,
}

impl LTransform {
    /// Relative change of `L(x)/x` across the last quarter of the grid points
    /// with `x > 0`.
    pub fn l_over_x_change(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .xs
            .iter()
            .zip(&self.values)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, l)| (*x, l / x))
            .collect();
        if pts.len() < 4 {
            return f64::NAN;
        }
        let start = pts[pts.len() - pts.len() / 4 - 1].1;
        let end = pts.last().unwrap().1;
        ((end - start) / end).abs()
    }
}

/// `L(x) = e^{(p+1)x}(1 − ψ(x))`, checked to be nondecreasing up to twice the
/// pointwise standard error.
pub fn l_transform(wave: &WaveFunction, critical: bool) -> Result<LTransform> {
    let q = wave.p + 1.0;
    let n = wave.samples.len() as f64;
    let mut values = Vec::with_capacity(wave.xs.len());
    let mut se = Vec::with_capacity(wave.xs.len());
    for &x in &wave.xs {
        let a = (-q * x).exp();
        // (1 − e^{−aΔ})/a is nondecreasing in x for every sample.
        let v: Vec<f64> = wave
            .samples
            .iter()
            .map(|&d| -(-a * d).exp_m1() / a)
            .collect();
        let (m, var) = mean_var(&v);
        values.push(m);
        se.push((var / n).sqrt());
    }
    for j in 1..values.len() {
        let slack = 2.0 * se[j].max(se[j - 1]);
        if values[j] < values[j - 1] - slack {
            return Err(Error::NotMonotoneL {
                x: wave.xs[j],
                prev: values[j - 1],
                next: values[j],
                slack,
            });
        }
    }
    let k = if critical {
        let m = values.len();
        let tail = m - m / 4 - 1..m;
        ls_slope(&wave.xs[tail.clone()], &values[tail])
    } else {
        let ok = (0..values.len())
            .rev()
            .find(|&j| se[j] < 0.1 * values[j].abs())
            .unwrap_or(0);
        values[ok]
    };
    Ok(LTransform {
        p: wave.p,
        xs: wave.xs.clone(),
        values,
        se,
        k,
        critical,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub x: f64,
    pub value: f64,
    /// Delta-method standard error from the sample variability of `ψ̂`.
    pub se: f64,
    /// Bound on the log-product dropped with parts below [`PART_CUTOFF`].
    pub neglected: f64,
}

/// `𝒜ψ̂(x)` at speed `c` with `ψ′` by a central difference of one grid step.
pub fn fkpp_residual(
    wave: &WaveFunction,
    profile: &SpectralProfile,
    x: f64,
    c: f64,
) -> Result<Residual> {
    let h = wave.grid.step;
    let (lo, hi) = (wave.xs[0], *wave.xs.last().unwrap());
    if x - 2.0 * h < lo - 1e-12 || x + 2.0 * h > hi + 1e-12 {
        return Err(Error::NearGridEdge { x, lo, hi });
    }
    let nodes = profile.split_nodes();
    Ok(residual_at(wave, &nodes, x, c))
}

/// Residuals at every `x` of `xs`, sharing the quadrature nodes.
pub fn fkpp_residuals(
    wave: &WaveFunction,
    profile: &SpectralProfile,
    xs: &[f64],
    c: f64,
) -> Result<Vec<Residual>> {
    let h = wave.grid.step;
    let (lo, hi) = (wave.xs[0], *wave.xs.last().unwrap());
    if let Some(&x) = xs
        .iter()
        .find(|&&x| x - 2.0 * h < lo - 1e-12 || x + 2.0 * h > hi + 1e-12)
    {
        return Err(Error::NearGridEdge { x, lo, hi });
    }
    let nodes = profile.split_nodes();
    Ok(xs
        .iter()
        .map(|&x| residual_at(wave, &nodes, x, c))
        .collect())
}

fn residual_at(wave: &WaveFunction, nodes: &[(f64, Vec<f64>)], x: f64, c: f64) -> Residual {
    let h = wave.grid.step;
    let n = wave.samples.len();
    let nf = n as f64;
    let mean_terms = |y: f64| -> Vec<f64> { terms(&wave.samples, wave.p, y).collect() };
    let avg = |v: &[f64]| v.iter().sum::<f64>() / nf;

    // Per-sample influence of each ψ̂ evaluation on 𝒜ψ̂(x).
    let mut influence = vec![0.0; n];
    let center = mean_terms(x);
    let psi_x = avg(&center);
    let plus = mean_terms(x + h);
    let minus = mean_terms(x - h);
    let dpsi = (avg(&plus) - avg(&minus)) / (2.0 * h);
    for j in 0..n {
        influence[j] -= c * (plus[j] - minus[j]) / (2.0 * h);
    }

    let mut integral = 0.0;
    let mut neglected = 0.0;
    for (w, parts) in nodes {
        let mut kept: Vec<(Vec<f64>, f64)> = Vec::with_capacity(parts.len());
        for &s in parts {
            let y = x - s.ln();
            if s < PART_CUTOFF {
                // −ln ψ̂(y) ≈ 1 − ψ̂(y) for ψ̂(y) near one.
                neglected += w * -wave.psi(y).ln();
                continue;
            }
            let t = mean_terms(y);
            let m = avg(&t);
            kept.push((t, m));
        }
        let prod: f64 = kept.iter().map(|(_, m)| m).product();
        integral += w * (prod - psi_x);
        for (i, (t, _)) in kept.iter().enumerate() {
            let others: f64 = kept
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, (_, mk))| mk)
                .product();
            for j in 0..n {
                influence[j] += w * t[j] * others;
            }
        }
        for j in 0..n {
            influence[j] -= w * center[j];
        }
    }
    let value = -c * dpsi + integral;
    let (_, var) = mean_var(&influence);
    Residual {
        x,
        value,
        se: (var / nf).sqrt(),
        neglected,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpeedClass {
    /// `c < c_p̄`, with the `p ∈ (max(p̲, −1), p̄)` solving `c_p = c`.
    SubCritical {
        p: f64,
    },
    Critical,
    SuperCritical,
}

impl SpeedClass {
    pub fn label(&self) -> &'static str {
        match self {
            SpeedClass::SubCritical { .. } => "sub-critical",
            SpeedClass::Critical => "critical",
            SpeedClass::SuperCritical => "super-critical",
        }
    }
}

pub fn classify_speed(profile: &SpectralProfile, c: f64) -> Result<SpeedClass> {
    let cb = profile.c_bar();
    if (c - cb).abs() <= 1e-9 {
        return Ok(SpeedClass::Critical);
    }
    if c > cb {
        return Ok(SpeedClass::SuperCritical);
    }
    // c_p runs from −∞ (as p ↓ −1) up to c_p̄ on (−1, p̄].
    let lo = profile.p_lower().max(-1.0) + 1e-12;
    let p = bisect(
        "c_p - c",
        |p| profile.wave_speed(p).unwrap_or(f64::NEG_INFINITY) - c,
        lo,
        profile.p_bar(),
        1e-14,
    )?;
    Ok(SpeedClass::SubCritical { p })
}
