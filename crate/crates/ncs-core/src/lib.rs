//! Symbolic control of nonlinear plants closed over non-ideal networks.
//!
//! The crate turns a plant with an incremental Lyapunov certificate, a
//! description of the network (bandwidth, access and delivery delays,
//! dropouts) and a finite specification into a Mealy controller, and it
//! simulates the resulting loop under delay and quantization realizations.
//!
//! Module map:
//! - [`plant`]: vector fields, the sampled flow map, lattices and quantizers.
//! - [`network`]: delay calculus and delay sampling policies.
//! - [`tsys`]: finite transition systems over interned states.
//! - [`abstraction`]: concrete and symbolic burst systems.
//! - [`relations`]: approximate (alternating) simulation relations.
//! - [`synthesis`]: specification lifting and controller synthesis.
//! - [`refine`]: Mealy machine refinement of a synthesized controller.
//! - [`sim`]: closed-loop simulation and trace verification.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod abstraction;
pub mod network;
pub mod plant;
pub mod refine;
pub mod relations;
pub mod sim;
pub mod synthesis;
pub mod tsys;
