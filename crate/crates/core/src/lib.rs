//! Particle-based Monte Carlo simulation of molecular communication in
//! blood-vessel ducts, with a link-level layer on top of the simulated channel.
//!
//! Units throughout: μm, s, μm²/s, μm/s.

pub mod boundary;
pub mod channel;
pub mod chemistry;
pub mod comms;
pub mod rng;
pub mod relay;
pub mod scenario;
pub mod transport;

pub use channel::{ChannelImpulseResponse, CirStatistics, MassLedger};
pub use rng::{derive_stream, RngStream};
pub use scenario::{SimulationScenario, ValidationReport};
