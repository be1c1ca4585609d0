//! Deterministic simulator of semi-decentralized federated learning for
//! trajectory prediction under client availability budgets.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Recurrent cell math reads clearer with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod availability;
pub mod collab;
pub mod connectivity;
pub mod data;
pub mod error;
pub mod nn;
pub mod ranking;
pub mod rng;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
