//! Mixed Nash equilibria of entropy-regularized zero-sum games on flat tori,
//! mean-field gradient descent-ascent, and its particle approximation.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix `f64`.

pub mod diagnostics;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod games;
pub mod measures;
pub mod particles;
pub mod scalar;

pub use error::{Error, Result};
pub use games::{GameKernel, KernelBounds, KernelMatrix};
pub use measures::{GridMeasure, TorusGrid};
pub use scalar::Scalar;

pub type Real = f64;
pub type Grid = TorusGrid<Real>;
pub type Measure = GridMeasure<Real>;
pub type Matrix = KernelMatrix<Real>;
pub type State = dynamics::GdaState<Real>;
pub type Schedule = dynamics::ScaleSchedule<Real>;
pub type Mne = equilibrium::MnePair<Real>;
pub type Ensemble = particles::ParticleEnsemble<Real>;
