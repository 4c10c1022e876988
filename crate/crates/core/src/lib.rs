pub mod config;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod kg;
pub mod linalg;
pub mod modeops;
pub mod report;
pub mod scattering;
pub mod spectral;

pub use error::Error;
