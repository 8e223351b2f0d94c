#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod cascade;
pub mod config;
pub mod continuation;
pub mod error;
pub mod experiment;
pub mod expr;
pub mod geometry;
pub mod map;
pub mod probability;
pub mod recoverability;
pub mod report;
pub mod rng;
pub mod target;

pub use error::{Error, Result};
