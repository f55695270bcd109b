//! Numerical laboratory for `u_t = u_xx + f(t, u)` with time-periodic `f`.

pub mod diagnostics;
pub mod error;
pub mod kinetics;
pub mod lab;
pub mod linalg;
pub mod nonlinearity;
pub mod pde;
pub mod periodic;
pub mod scalar;

pub use error::{LabError, Result};
pub use scalar::Scalar;

pub type Grid64 = pde::Grid<f64>;
pub type Field64 = pde::Field<f64>;
pub type SolverConfig64 = pde::SolverConfig<f64>;
pub type Spec64 = nonlinearity::NonlinearitySpec<f64>;
pub type Orbit64 = kinetics::PeriodicOrbit<f64>;
pub type OrbitScan64 = kinetics::OrbitScan<f64>;
pub type OdeConfig64 = kinetics::OdeConfig<f64>;
pub type OmegaReport64 = diagnostics::OmegaLimitReport<f64>;
pub type OmegaConfig64 = diagnostics::OmegaConfig<f64>;
pub type DirichletSolution64 = periodic::PeriodicDirichletSolution<f64>;
