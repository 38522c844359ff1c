//! Oracles and checks shared by the core integration tests and the
//! acceptance harness.
#![allow(dead_code)]

pub mod gradcheck;
pub mod metrics;
pub mod retrieval;
