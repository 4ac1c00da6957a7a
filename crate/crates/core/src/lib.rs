#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod decompose;
pub mod dynsys;
pub mod error;
pub mod format;
pub mod limit_cycle;
pub mod linalg;
pub mod modes;
pub mod phase;
pub mod resolvent;

pub use error::{Error, Result};
