//! Learning curves of random-feature models on block-anisotropic Gaussian data.
//!
//! The crate pairs an asymptotic theory with a finite-size simulator:
//!
//! * [`gaussmoments`] evaluates Gaussian expectations of activations and the
//!   Gaussian-equivalence constants κ₀, κ₁, κ★.
//! * [`blockspectra`] solves the coupled resolvent equations of block-scaled
//!   Wishart matrices.
//! * [`replica`] iterates the saddle-point equations and evaluates train and
//!   test errors for regression, square-loss and logistic classification.
//! * [`montecarlo`] samples the data model, trains students and measures the
//!   same quantities at finite size.
//! * [`realdata`] parses MNIST/CIFAR-10 and builds the PCA/saliency pipeline.
//! * [`cli`] runs sweeps from a JSON configuration and writes CSV tables.
//!
//! ```
//! use anisorf::gaussmoments::{kappa_constants, Activation};
//! use anisorf::replica::{BlockModel, Channel, SaddleProblem, SolverOptions, solve_saddle_point};
//!
//! let problem = SaddleProblem {
//!     model: BlockModel::isotropic(),
//!     channel: Channel::regression(0.1).unwrap(),
//!     activation: Activation::Tanh,
//!     alpha: 0.5,  // N/P
//!     gamma: 0.5,  // D/P
//!     lambda: 1e-2,
//! };
//! let sol = solve_saddle_point(&problem, &SolverOptions::default()).unwrap();
//! assert!(sol.converged);
//! assert!(sol.eps_g > 0.0 && sol.eps_t < sol.eps_g);
//! # let _ = kappa_constants(Activation::Relu, 1.0).unwrap();
//! ```

pub mod blockspectra;
pub mod cli;
pub mod error;
pub mod gaussmoments;
pub mod linalg;
pub mod montecarlo;
pub mod realdata;
pub mod replica;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

// Compile and run the Rust snippets of the guide as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/quickstart.md")]
    struct Quickstart;
    #[doc = include_str!("../../../book/src/gaussian-equivalence.md")]
    struct GaussianEquivalence;
    #[doc = include_str!("../../../book/src/resolvent.md")]
    struct Resolvent;
    #[doc = include_str!("../../../book/src/saddle-point.md")]
    struct SaddlePoint;
    #[doc = include_str!("../../../book/src/simulation.md")]
    struct Simulation;
    #[doc = include_str!("../../../book/src/real-data.md")]
    struct RealData;
}
