//! Networks of kinetic automata ("kinons").
//!
//! Every kinon holds one scalar storage and one buffer per incident link. On
//! each synchronous step it gathers its inputs and storage, converts them to
//! ranks with a unit sum, bends those ranks through a kinetic map and scales
//! the result back to the gathered quantity. The total quantity of the network
//! never changes.
//!
//! The crate is organised bottom-up:
//!
//! * [`crt`]: the encode / modulate / decode kernel for a single kinon.
//! * [`maps`]: kinetic maps and map schedules.
//! * [`topology`]: rings, tori and arbitrary graphs with reciprocal links.
//! * [`network`]: network state and the synchronous step.
//! * [`engine`]: scenarios, seeding, the run loop and external commands.
//! * [`analysis`]: energies, order parameters, regime classification, sweeps.
//! * [`contour`]: marching-squares level sets and circularity.
//! * [`io`]: scenario documents, PGM frames and CSV tables.
//! * [`presets`]: bundled scenarios.

pub mod analysis;
pub mod contour;
pub mod crt;
pub mod engine;
mod error;
pub mod io;
pub mod maps;
pub mod network;
pub mod presets;
mod sum;
pub mod topology;

pub use error::{Error, Result};
pub use maps::{KineticMap, MapSchedule, MapSpec};
pub use network::{NetworkState, Quantum};
pub use topology::{Neighborhood, Topology};
