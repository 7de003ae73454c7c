//! Generators and oracles shared by the property tests and the acceptance run.
#![allow(dead_code)]

pub mod dsl_gen;
pub mod oracle;
