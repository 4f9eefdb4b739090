pub mod bounds;
pub mod cli;
pub mod corpus;
pub mod counterex;
pub mod decompose;
pub mod error;
pub mod estimate;
pub mod follmer;
pub mod functionals;
pub mod gaussmix;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
pub use estimate::{BoundReport, Direction, Estimate, MatrixEstimate, Method};
pub use gaussmix::{GaussianMixture, LocalDensityData, MixtureSpec};
