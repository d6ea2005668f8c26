#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Multi-machine grid frequency simulation with stochastic and
//! battery-dispatched buses.

pub mod batch;
pub mod dispatch;
pub mod grid;
pub mod machine;
pub mod metrics;
pub mod profile;
pub mod protection;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod sparse;
