//! Experiment configuration: one JSON document per run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use fragwave_core::spine::TestFunctional;
use fragwave_core::waves::Grid;
use fragwave_core::{DislocationMeasure, SpectralProfile};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub master_seed: u64,
    /// Worker threads; results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub experiments: Vec<ExperimentConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Exponents,
    Simulate,
    Martingale,
    Line,
    Lln,
    Wave,
    Residual,
    Speed,
    ManyToOne,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Exponents => "exponents",
            Kind::Simulate => "simulate",
            Kind::Martingale => "martingale",
            Kind::Line => "line",
            Kind::Lln => "lln",
            Kind::Wave => "wave",
            Kind::Residual => "residual",
            Kind::Speed => "speed",
            Kind::ManyToOne => "many_to_one",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    UniformBinary,
    BinaryHalf,
    DiscreteAtoms { atoms: Vec<(f64, Vec<f64>)> },
}

impl MeasureSpec {
    pub fn build(&self) -> fragwave_core::Result<DislocationMeasure> {
        match self {
            MeasureSpec::UniformBinary => Ok(DislocationMeasure::uniform_binary()),
            MeasureSpec::BinaryHalf => Ok(DislocationMeasure::binary_half()),
            MeasureSpec::DiscreteAtoms { atoms } => DislocationMeasure::discrete(atoms.clone()),
        }
    }

    /// `Φ(q)` in closed form for the two named fixtures.
    pub fn closed_form_phi(&self, q: f64) -> Option<f64> {
        match self {
            MeasureSpec::UniformBinary => Some(q / (q + 2.0)),
            MeasureSpec::BinaryHalf => Some(1.0 - (-q).exp2()),
            MeasureSpec::DiscreteAtoms { .. } => None,
        }
    }

    /// `uniform_binary`, `binary_half`, or an inline JSON object.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        match text.trim() {
            "uniform_binary" => Ok(MeasureSpec::UniformBinary),
            "binary_half" => Ok(MeasureSpec::BinaryHalf),
            other => serde_json::from_str(other).map_err(|e| {
                ConfigError::new("measure", format!("unrecognised measure spec: {e}"))
            }),
        }
    }
}

/// A number, or one of the symbols `p_bar`, `c_bar`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Num(f64),
    Sym(String),
}

impl Param {
    pub fn resolve(&self, profile: &SpectralProfile) -> Option<f64> {
        match self {
            Param::Num(v) => Some(*v),
            Param::Sym(s) => match s.as_str() {
                "p_bar" => Some(profile.p_bar()),
                "c_bar" => Some(profile.c_bar()),
                _ => None,
            },
        }
    }

    fn is_symbol_ok(&self) -> bool {
        matches!(self, Param::Num(v) if v.is_finite())
            || matches!(self, Param::Sym(s) if s == "p_bar" || s == "c_bar")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl From<&GridSpec> for Grid {
    fn from(g: &GridSpec) -> Grid {
        Grid {
            lo: g.lo,
            hi: g.hi,
            step: g.step,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Breakpoints and values for `bounded_custom_grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs: Option<Vec<f64>>,
}

impl FunctionalSpec {
    pub fn build(&self) -> fragwave_core::Result<TestFunctional> {
        match (self.name.as_str(), &self.xs, &self.fs) {
            ("bounded_custom_grid", Some(xs), Some(fs)) => {
                TestFunctional::tabulated(xs.clone(), fs.clone())
            }
            (name, _, _) => TestFunctional::by_name(name, self.eps),
        }
    }
}

/// How `Δ_p` is approximated for wave estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaSpec {
    /// `W` (or the truncated derivative martingale at `p̄`) at time `T`.
    Time(f64),
    /// `W` on the stopping line at level `z`.
    Line(f64),
    /// `Δ ≡ 1`.
    Constant,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_fragments: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_splits: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_frozen: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_cap: Option<f64>,
}

/// A declared tolerance applied to every report cell of `metric` matching `where`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub metric: String,
    #[serde(default, rename = "where", skip_serializing_if = "BTreeMap::is_empty")]
    pub filter: BTreeMap<String, Param>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Param>,
    /// `|value − target| ≤ z_max · SE`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs: Option<f64>,
    /// Relative to the target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: Kind,
    pub measure: MeasureSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p: Vec<Param>,
    /// `a:b:step`, appended to `p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub z: Vec<f64>,
    /// Barriers of the truncated derivative martingale, or wave points for
    /// the product-martingale check.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x: Vec<f64>,
    /// Speeds for `speed` and `residual`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub c: Vec<Param>,
    /// Test functions for `many_to_one`: `one`, `identity`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub g: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_trunc: Option<f64>,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_nodes: Option<usize>,
    /// `line`: also emit one row per frozen fragment.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fragment_rows: bool,
    /// `line`: also compare `Σ y_i 1{ℓ_i ≤ T}` with the spine passage
    /// probability `P(τ_z ≤ T)` at these `T`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub freeze_horizons: Vec<f64>,
    /// `line`: sample the coming generation at every positive `p`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub coming_generation: bool,
    /// `line`: number of spine first passages above 0 per positive `p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overshoot_samples: Option<usize>,
    /// `wave`: runs for the product-martingale check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_runs: Option<usize>,
    /// `wave`: the mismatched speed is `c_p̄ + offset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrong_speed_offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Parses `a:b:step` into `a, a+step, …` up to `b` inclusive.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        return Err(format!("expected a:b:step, got {spec:?}"));
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    let (a, b, step) = (num(a)?, num(b)?, num(step)?);
    if !(step > 0.0 && b >= a && a.is_finite() && b.is_finite()) {
        return Err(format!("need finite a ≤ b and step > 0 in {spec:?}"));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(format!("{spec:?} has more than 10^6 points"));
    }
    Ok((0..=n).map(|k| a + k as f64 * step).collect())
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("parsing {}: {e}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.experiments.is_empty() {
            return Err(ConfigError::new(
                "experiments",
                "at least one experiment is required",
            ));
        }
        if self.workers == Some(0) {
            return Err(ConfigError::new("workers", "must be at least 1"));
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, e) in self.experiments.iter().enumerate() {
            let at = |field: &str| format!("experiments[{i}].{field}");
            if !names.insert(e.name.as_str()) {
                return Err(ConfigError::new(
                    at("name"),
                    format!("duplicate name {:?}", e.name),
                ));
            }
            if e.name.is_empty()
                || !e
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(ConfigError::new(
                    at("name"),
                    "use ASCII letters, digits, '_' or '-'",
                ));
            }
            e.validate(&at)?;
        }
        Ok(())
    }
}

impl ExperimentConfig {
    /// An experiment with every optional parameter unset.
    pub fn new(name: &str, kind: Kind, measure: MeasureSpec) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            kind,
            measure,
            p: Vec::new(),
            p_grid: None,
            t: Vec::new(),
            z: Vec::new(),
            x: Vec::new(),
            c: Vec::new(),
            g: Vec::new(),
            horizon: None,
            replicates: None,
            window: None,
            step: None,
            grid: None,
            functional: None,
            delta: None,
            x_trunc: None,
            caps: Caps::default(),
            quadrature_nodes: None,
            fragment_rows: false,
            freeze_horizons: Vec::new(),
            coming_generation: false,
            overshoot_samples: None,
            product_runs: None,
            wrong_speed_offset: None,
            checks: Vec::new(),
        }
    }

    fn validate(&self, at: &dyn Fn(&str) -> String) -> Result<(), ConfigError> {
        let err = |field: &str, msg: &str| Err(ConfigError::new(at(field), msg));
        if let Err(e) = self.measure.build() {
            return err("measure", &e.to_string());
        }
        if let Some(g) = &self.p_grid {
            if let Err(e) = parse_grid(g) {
                return err("p_grid", &e);
            }
        }
        for (k, p) in self.p.iter().enumerate() {
            if !p.is_symbol_ok() {
                return err(
                    &format!("p[{k}]"),
                    "expected a finite number, \"p_bar\" or \"c_bar\"",
                );
            }
        }
        for (k, c) in self.c.iter().enumerate() {
            if !c.is_symbol_ok() {
                return err(
                    &format!("c[{k}]"),
                    "expected a finite number, \"p_bar\" or \"c_bar\"",
                );
            }
        }
        for (field, vals) in [
            ("t", &self.t),
            ("z", &self.z),
            ("freeze_horizons", &self.freeze_horizons),
        ] {
            if let Some(k) = vals.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return err(&format!("{field}[{k}]"), "must be finite and ≥ 0");
            }
        }
        if self.replicates == Some(0) {
            return err("replicates", "must be at least 1");
        }
        let need = |field: &str, present: bool| -> Result<(), ConfigError> {
            if present {
                Ok(())
            } else {
                Err(ConfigError::new(
                    at(field),
                    format!("required for kind {}", self.kind.name()),
                ))
            }
        };
        match self.kind {
            Kind::Exponents => {}
            Kind::Simulate => {
                need("horizon", self.horizon.is_some())?;
                need("replicates", self.replicates.is_some())?;
                let h = self.horizon.unwrap();
                if !(h >= 0.0 && h.is_finite()) {
                    return err("horizon", "must be finite and ≥ 0");
                }
                if let Some(k) = self.t.iter().position(|&t| t > h) {
                    return err(&format!("t[{k}]"), "beyond the horizon");
                }
                if let Some([a, b]) = self.window {
                    if !(b > a && a >= 0.0 && b <= h) {
                        return err("window", "need 0 ≤ t0 < t1 ≤ horizon");
                    }
                }
            }
            Kind::Martingale | Kind::ManyToOne => {
                need("p", !self.p.is_empty())?;
                need("t", !self.t.is_empty())?;
                need("replicates", self.replicates.is_some())?;
                if self.kind == Kind::ManyToOne {
                    need("g", !self.g.is_empty())?;
                    if let Some(k) = self.g.iter().position(|g| g != "one" && g != "identity") {
                        return err(&format!("g[{k}]"), "expected \"one\" or \"identity\"");
                    }
                }
            }
            Kind::Line => {
                need("p", !self.p.is_empty())?;
                need("z", !self.z.is_empty())?;
                need("replicates", self.replicates.is_some())?;
                if self.z.windows(2).any(|w| w[1] <= w[0]) {
                    return err("z", "levels must be strictly increasing");
                }
            }
            Kind::Lln => {
                need("p", !self.p.is_empty())?;
                need("z", !self.z.is_empty())?;
                need("replicates", self.replicates.is_some())?;
                need("functional", self.functional.is_some())?;
                if let Err(e) = self.functional.as_ref().unwrap().build() {
                    return err("functional", &e.to_string());
                }
            }
            Kind::Wave => {
                need("p", self.p.len() == 1)?;
                need("delta", self.delta.is_some())?;
                if self.delta != Some(DeltaSpec::Constant) {
                    need("replicates", self.replicates.is_some())?;
                }
            }
            Kind::Residual => {
                need("p", self.p.len() == 1)?;
            }
            Kind::Speed => {
                need("c", !self.c.is_empty())?;
            }
        }
        for (k, check) in self.checks.iter().enumerate() {
            let has_tol = check.z_max.is_some()
                || check.abs.is_some()
                || check.rel.is_some()
                || check.max.is_some()
                || check.min.is_some()
                || check.label.is_some();
            if !has_tol {
                return err(&format!("checks[{k}]"), "declares no tolerance");
            }
            let needs_target = check.z_max.is_some() || check.abs.is_some() || check.rel.is_some();
            if needs_target && check.target.is_none() {
                return err(
                    &format!("checks[{k}].target"),
                    "required by z_max, abs or rel",
                );
            }
        }
        Ok(())
    }
}
