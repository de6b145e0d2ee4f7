//! Tensor-train and quantized tensor-train tools for space-time spectral-element
//! discretizations of convection-diffusion-reaction problems.

pub mod cross;
pub mod driver;
pub mod error;
pub mod krylov;
pub mod la;
pub mod problem;
pub mod quantize;
pub mod reference;
pub mod sem;
pub mod solve;
pub mod tt;

pub use error::{Error, Result};
