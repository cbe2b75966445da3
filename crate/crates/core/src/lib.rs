pub mod cnum;
pub mod nnet;
pub mod channel;
pub mod env;
pub mod agent;
pub mod baselines;
pub mod harness;
