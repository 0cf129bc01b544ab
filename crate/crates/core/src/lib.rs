pub mod benchmarks;
pub mod cli;
pub mod error;
pub mod mcs;
pub mod penalties;
pub mod simulation;
pub mod solvers;
pub mod validation;
pub mod varx;
