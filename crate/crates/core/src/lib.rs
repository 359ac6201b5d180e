pub mod error;
pub mod linalg;
pub mod instance;
pub mod gamma;
pub mod spectral;
pub mod barrier;
pub mod report;
pub mod budget;
pub mod matrix_bounds;
pub mod fact_bounds;
pub mod bnb;
pub mod cli;
