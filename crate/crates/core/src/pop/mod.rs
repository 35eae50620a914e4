//! Synthetic population and campus generation, plus population file I/O.

mod campus;
mod io;
mod population;

pub use campus::{synthesize_campus, CampusSpec};
pub use io::{read_population, write_population};
pub use population::{
    assign_entry_gates, assign_parking, synthesize_population, validate_population, Agent,
    ClassCatalog, ClassSection, PopulationSpec, Role, ScheduleItem, DAY_END_MIN, DAY_START_MIN,
};

use crate::net::NetError;

#[derive(Debug, thiserror::Error)]
pub enum PopError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("too many {kind} nodes for the grid: {requested} requested, {slots} slots")]
    GridTooSmall { kind: &'static str, requested: usize, slots: usize },
    #[error("residence capacity exceeded: {needed} residents, {available} beds")]
    ResidenceCapacity { needed: u64, available: u64 },
    #[error("class seats cannot cover enrollment: demand {demand}, seats {seats}")]
    InsufficientSeats { demand: u64, seats: u64 },
    #[error("parking capacity exhausted: {needed} drivers, {available} spaces (short by {})", needed - available)]
    ParkingExhausted { needed: u64, available: u64 },
    #[error("network has no gates")]
    NoGates,
    #[error("agent {agent}: {reason}")]
    InvalidAgent { agent: u32, reason: String },
    #[error("node {node} over capacity: {used} > {capacity}")]
    OverCapacity { node: String, used: u32, capacity: u32 },
    #[error("population file: {0}")]
    Csv(String),
}
