pub mod agent;
pub mod control;
pub mod corpus;
pub mod env;
pub mod geodesy;
pub mod harness;
pub mod lang;
pub mod metrics;
pub mod oracle;
pub mod rng;
