//! Simulation and solver suite for sharing entanglement among distributed
//! quantum computing applications over a repeater network.
//!
//! * [`model`]: network, application and assignment types with validation.
//! * [`routing`]: shortest paths, swap success probability, Werner fidelity.
//! * [`scheduling`]: FCFS, RR, WRR and DRR grant arbitration per slot.
//! * [`fairshare`]: weighted max-min rates, Jain's index, worker assignment.
//! * [`engine`]: the seeded time-slotted simulation loop and replications.
//! * [`cli`]: scenario files, CSV output and the command implementations.

pub mod cli;
pub mod engine;
pub mod fairshare;
pub mod model;
pub mod routing;
pub mod scheduling;
