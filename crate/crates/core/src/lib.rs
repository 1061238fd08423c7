//! Axisymmetric simulator for the fully nonlinear flow of two-convex
//! hypersurfaces with normal speed `G = (sum_{i<j} 1/(l_i + l_j))^{-1}`.
//!
//! The crate is organised bottom-up:
//!
//! * [`speed`]: pointwise algebra of `G` on principal-curvature spectra.
//! * [`profile`]: surfaces of revolution through their generating curve.
//! * [`flow`]: explicit time stepping, history, exact oracles.
//! * [`monitor`]: running checks of the curvature estimates.
//! * [`neck`]: neck detection, parabolic neighbourhoods, the convexity dichotomy.
//! * [`surgery`]: cutting, capping, classification and the surgery loop.
//! * [`scenario`]: initial data presets.

pub mod flow;
pub mod monitor;
pub mod neck;
pub mod profile;
pub mod scenario;
pub mod speed;
mod spline;
pub mod surgery;

pub use flow::{FlowError, FlowState, StepControl, StopCondition, StopReason};
pub use profile::{ComponentId, EndKind, GeometryError, ProfileCurve, ProfilePoint, SurfacePointRef};
pub use speed::{CurvatureSpectrum, Dimension, ModelSurface, SpeedError};
