//! Numerical engine for a family of singularly perturbed nonlinear PDEs in two
//! complex time variables.
//!
//! The pipeline mirrors the analytic construction of the solutions:
//!
//! 1. [`config`] holds a full problem instance (exponents, polynomials, forcing)
//!    and validates every structural constraint the construction needs.
//! 2. [`fourier`] provides the exponentially weighted frequency spaces, the
//!    inverse Fourier transform and the frequency convolution.
//! 3. [`borel_plane`] carries the Borel-domain grids, the weighted sup norm, the
//!    divisor polynomial `P_m` and the root/direction analysis that picks
//!    admissible Laplace directions.
//! 4. [`fixed_point`] assembles the convolution operator block by block and
//!    solves `omega = H_eps(omega)` by Picard iteration.
//! 5. [`laplace`] builds good coverings, evaluates the solutions by truncated
//!    double Laplace + inverse Fourier quadrature, and checks the Laplace
//!    algebra and the PDE residual end to end.
//! 6. [`asymptotics`] measures exponential flatness of solution differences,
//!    fits Gevrey data and computes the formal-series coefficients.

pub mod asymptotics;
pub mod borel_plane;
pub mod config;
pub mod error;
pub mod fixed_point;
pub mod fourier;
pub mod laplace;
pub mod util;

pub use error::EngineError;
pub use num_complex::Complex64;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, EngineError>;
