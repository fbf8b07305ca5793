//! # crndist
//!
//! A compiler and verifier for stochastic chemical reaction networks (CRNs)
//! whose stationary distributions approximate target distributions on the
//! non-negative integer lattice.
//!
//! The crate is organized around five concerns:
//!
//! - [`network`]: the reaction-network data model. Species, reactions with
//!   integer stoichiometry, mass-action propensities, and the transition
//!   structure of the associated continuous-time Markov chain.
//! - [`dist`]: target and result distributions on `Z^d_{>=0}`. Sparse finite
//!   tables, analytic families (point mass, uniform box, product Poisson,
//!   mixtures), truncation, norms, and marginals.
//! - [`synth`]: the compiler. Constructions mapping distributions (and
//!   component networks) to reaction networks, either detailed balanced
//!   (initial-condition dependent) or robust (ergodic).
//! - [`analysis`]: exact verification. Detailed-balance certificates,
//!   closed-form stationary laws, a truncated-generator oracle, uniform-error
//!   and mixing-time bounds.
//! - [`sim`]: exact stochastic simulation (direct-method SSA) with
//!   reproducible seeding, time-average occupancy estimation, perturbation
//!   experiments, and end-to-end verification reports.

pub mod analysis;
pub mod dist;
pub mod network;
pub mod sim;
pub mod synth;

pub(crate) mod numerics;
