use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dislocation measure: {0}")]
    InvalidMeasure(String),

    #[error("{what} = {value} is outside the admissible domain (must exceed p_lower = {p_lower})")]
    BelowLowerExponent {
        what: &'static str,
        value: f64,
        p_lower: f64,
    },

    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("no sign change of {what} found in the search window ({lo}, {hi})")]
    RootNotBracketed {
        what: &'static str,
        lo: f64,
        hi: f64,
    },

    #[error(
        "fragment cap {cap} exceeded at time {time} ({alive} alive, {events} events, dropped mass {dropped_mass})"
    )]
    FragmentCap {
        cap: usize,
        time: f64,
        alive: usize,
        events: usize,
        dropped_mass: f64,
    },

    #[error("empty time window [{t0}, {t1}]")]
    EmptyWindow { t0: f64, t1: f64 },

    #[error("p = {p} is not the critical parameter p_bar = {p_bar}")]
    NotCritical { p: f64, p_bar: f64 },

    #[error("trajectory does not carry lineage minima for drift {drift}")]
    MissingLineage { drift: f64 },

    #[error("wave value {value} at x = {x} is outside (0, 1]")]
    WaveOutOfRange { x: f64, value: f64 },

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },

    #[error("sample {index} is negative ({value})")]
    NegativeSample { index: usize, value: f64 },

    #[error("x = {x} is within two grid steps of the grid edge [{lo}, {hi}]")]
    NearGridEdge { x: f64, lo: f64, hi: f64 },

    #[error("grid does not cover the wave transition: {0}")]
    GridCoverage(String),

    #[error("L transform decreases at x = {x}: {prev} -> {next} beyond the noise slack {slack}")]
    NotMonotoneL {
        x: f64,
        prev: f64,
        next: f64,
        slack: f64,
    },

    #[error("inadmissible test functional: {0}")]
    Inadmissible(String),

    #[error("degenerate estimate: {0}")]
    Degenerate(String),
}
