//! Implicit density estimation with shallow ReLU generators.
//!
//! A generator `g: [0,1] -> R^d` pushed through uniform noise and blurred by
//! isotropic Gaussian noise of scale `sigma` defines the density
//!
//! ```text
//! p_{g,sigma}(x) = \int_0^1 phi_sigma(x - g(z)) dz.
//! ```
//!
//! For piecewise-linear generators (shallow ReLU networks and step functions)
//! the integral has a closed form, which this crate evaluates exactly. On top
//! of that sit:
//!
//! * [`measures`]: discrete mixing measures and the discretization steps that
//!   turn a Gaussian mixture into a step generator,
//! * [`networks`]: shallow ReLU generators and step generators,
//! * [`density`]: exact and Monte-Carlo evaluation, sampling and gradients,
//! * [`constructor`]: the step-to-ReLU construction and the full
//!   mixture-to-network pipeline,
//! * [`metrics`]: Hellinger and Kullback-Leibler distances,
//! * [`training`]: Adam, Monte-Carlo likelihood training and AEVB,
//! * [`baselines`]: Gaussian kernel density estimation,
//! * [`theory`]: rate, sieve-schedule and entropy calculators.
//!
//! ```
//! use implicit_density::constructor::brute_force_two_mixture;
//!
//! let p = brute_force_two_mixture(&[1.3, 1.3], 1e-5).unwrap();
//! let at_mode = p.exact_density(&[1.3, 1.3]);
//! assert!(at_mode > 0.07 && at_mode < 0.09);
//! ```

// `!(x > 0.0)` guards are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod constructor;
pub mod density;
mod error;
pub mod io;
pub mod measures;
pub mod metrics;
pub mod networks;
pub mod rng;
pub mod special;
pub mod theory;
pub mod training;

pub use error::{Error, Result};
