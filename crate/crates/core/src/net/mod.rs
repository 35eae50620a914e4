//! Two-layer campus transportation network: geometry, validation, routing.

mod geo;
mod network;
mod routing;

pub use geo::{point_along, polyline_length, GeoPoint, EARTH_RADIUS_M, METERS_PER_DEGREE};
pub use network::{
    load_campus, load_campus_file, BoundingBox, CampusDocument, EdgeDoc, EdgeIx, Layer, Link,
    MultilayerNetwork, NetEdge, NetNode, NodeDoc, NodeIx, NodeKind,
};
pub(crate) use routing::minutes_for;
pub use routing::{
    multimodal_route, shortest_path, travel_time, Mode, Path, PathStep, Router, TRAVEL_EPSILON_M,
};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("campus schema violation: {0}")]
    Schema(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("node {node}: {reason}")]
    InvalidNode { node: String, reason: String },
    #[error("mode-switch node not in both layers: {0}")]
    ModeSwitchLayers(String),
    #[error("edge {edge}: {reason}")]
    InvalidEdge { edge: String, reason: String },
    #[error("edge {edge} references missing node {node}")]
    DanglingEndpoint { edge: String, node: String },
    #[error("walk layer is disconnected: {0} is unreachable")]
    WalkLayerDisconnected(String),
    #[error("gate {gate} cannot reach parking lot {lot} on the road layer")]
    GateCannotReachLot { gate: String, lot: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {node} is not in the {mode} layer")]
    NotInLayer { node: String, mode: Mode },
    #[error("no {mode} route from {from} to {to}")]
    NoRoute { mode: Mode, from: String, to: String },
    #[error("speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
}
