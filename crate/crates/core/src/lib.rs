pub mod bits;
pub mod config;
pub mod crypto;
pub mod discretize;
pub mod fieldmath;
pub mod finitekey;
pub mod ldpc;
pub mod reconcile;
pub mod session;
pub mod simulator;
pub mod sweep;
