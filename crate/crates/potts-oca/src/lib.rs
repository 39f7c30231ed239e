//! Ordered conditional approximations (OCA) for Potts and hidden Potts
//! models on 2-D rectangular lattices.
//!
//! The joint mass function of a K-state Potts field is intractable at
//! scale because its normalizing constant sums over all K^n label
//! configurations. This crate approximates the joint density as an
//! ordered product of per-site conditionals, where each site conditions
//! on its `m_g` nearest previously ordered sites and marginalizes its
//! `m_f` nearest subsequently ordered sites through a truncated
//! Hamiltonian. Evaluation cost is linear in the number of sites and
//! the per-site terms evaluate in parallel.
//!
//! Modules:
//! - [`lattice`]: grid geometry, lexicographic ordering, conditioning-set plans
//! - [`potts`]: exact and approximate densities for the observed model,
//!   pseudo-likelihood baseline, maximum-likelihood fitting of the
//!   inverse temperature
//! - [`sampler`]: direct joint sampling from the approximate model,
//!   Swendsen-Wang and exact-enumeration reference samplers
//! - [`hidden`]: Gaussian emission layer, integrated likelihood,
//!   latent-field posterior, and the full Gibbs sampler
//! - [`gmm`]: Gaussian mixture baseline with Dirichlet labels, k-means
//! - [`metrics`]: RMSE, Brier score, empirical CRPS

pub mod error;
pub mod gmm;
pub mod hidden;
pub mod io;
pub mod lattice;
pub mod math;
pub mod metrics;
pub mod potts;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use lattice::{Lattice, OcaPlan};
pub use potts::{LabelField, PottsParams};
