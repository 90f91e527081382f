//! Leader-free consensus of nonlinear multi-agent systems over switching
//! digraphs, including disconnected intervals, under an average dwell time
//! condition on the connected topologies.

pub mod agent;
pub mod certificate;
pub mod error;
pub mod gain;
pub mod graph;
pub mod linalg;
pub mod lyapunov;
pub mod plot;
pub mod report;
pub mod scenario;
pub mod schedule;
pub mod sim;
pub mod sweep;
pub mod transform;

pub use error::{Error, Result};
