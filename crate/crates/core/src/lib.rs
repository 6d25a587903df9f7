//! Numerical laboratory for homogeneous, conservative, finite-activity mass
//! fragmentations.
//!
//! The crate is organised bottom-up:
//!
//! * [`dislocation`]: dislocation measures and their spectral functions
//!   (Laplace exponent `Φ`, critical parameter `p̄`, wave speeds `c_p`,
//!   tagged-fragment jump laws).
//! * [`frag_sim`]: exact event-driven simulation of the fragmentation.
//! * [`spine`]: the tagged fragment under tilted laws, first passage and the
//!   renewal functionals used by the laws of large numbers.
//! * [`martingales`]: additive, derivative and product martingales.
//! * [`stopping_lines`]: first-passage stopping lines swept through the
//!   fragmentation tree.
//! * [`waves`]: travelling-wave estimates and the travelling-wave operator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dislocation;
pub mod error;
pub mod frag_sim;
pub mod martingales;
pub mod numerics;
pub mod replicate;
pub mod rng;
pub mod spine;
pub mod stats;
pub mod stopping_lines;
pub mod waves;

pub use dislocation::{DislocationMeasure, JumpLaw, SpectralProfile, Split};
pub use error::{Error, Result};
pub use frag_sim::{FragTrajectory, Fragment, SimControls, Snapshot};
pub use martingales::{DeltaHorizon, DeltaPlan, DeltaSample};
pub use rng::Seed;
pub use spine::{FirstPassage, SpinePath, TestFunctional};
pub use stats::Summary;
pub use stopping_lines::{FrozenFragment, FrozenLineState, SweepControls};
pub use waves::{LTransform, SpeedClass, WaveFunction};
