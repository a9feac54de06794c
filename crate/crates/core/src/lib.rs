//! Pseudo-spectral simulation of the stochastic 2D vorticity equation on the
//! torus, together with the numerical checks that go with it.

pub mod biot_savart;
pub mod checks;
pub mod cli;
pub mod config;
pub mod density;
pub mod error;
mod fft;
pub mod heat_kernel;
pub mod malliavin;
pub mod noise;
pub mod rng;
pub mod solver;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
