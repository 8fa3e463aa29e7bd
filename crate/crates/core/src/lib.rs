//! Palm calculus for stationary Poisson–Poisson cluster processes.
//!
//! Analytic evaluators (Palm intensity, generating functionals, nearest
//! neighbor distance, D2D coverage and device discovery) and Monte Carlo
//! counterparts built on keyed, reproducible samplers.

pub mod coverage;
pub mod error;
pub mod geometry;
pub mod mc;
pub mod offspring;
pub mod palm;
pub mod pointproc;
pub mod quadrature;
pub mod rng;
pub mod sinr;
pub mod special;

pub use coverage::{coverage, discovery, ppp_coverage, ppp_discovery, AnalyticValue, Mode};
pub use error::{Error, Result};
pub use geometry::{Point, Window};
pub use mc::{EstimateCI, Execution, Moments};
pub use offspring::OffspringKernel;
pub use palm::{nnd_ccdf, palm_intensity_ball, palm_pgfl, stationary_pgfl, RadialTestFunction};
pub use pointproc::{ClusterSpec, Mark, PointPattern, SimConfig};
pub use quadrature::QuadPolicy;
pub use sinr::NetworkSpec;
