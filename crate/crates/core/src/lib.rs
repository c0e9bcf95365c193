// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod decay_model;
pub mod error;
pub mod evaluation;
pub mod nls;
pub mod pelt;
pub mod penalty;
pub mod segment_cost;
pub mod simulation;
pub mod timeseries;

pub use error::{Error, Result};
