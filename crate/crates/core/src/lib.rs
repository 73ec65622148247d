//! Urban chair-sensor system: node simulation, uplink codec, network server
//! store and the analytics run on its measurements.

pub mod airtime;
pub mod codec;
pub mod energy;
pub mod envelope;
pub mod geometry;
pub mod model;
pub mod node;
pub mod rng;
pub mod analytics;
pub mod channel;
pub mod store;
pub mod export;
pub mod scenario;
pub mod sim;
pub mod report;
