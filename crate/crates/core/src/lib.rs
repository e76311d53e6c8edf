pub mod cli;
pub mod forecast;
pub mod guarantees;
pub mod hub;
pub mod mpc;
pub mod optimizer;
pub mod sampler;
pub mod sim;
pub mod timeutil;
