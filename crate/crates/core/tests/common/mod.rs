#![allow(dead_code)]

use campus_sim::net::{CampusDocument, EdgeDoc, GeoPoint, Layer, MultilayerNetwork, NodeDoc, NodeKind, NodeIx};
use campus_sim::pop::{Agent, Role, ScheduleItem};

/// Hand-built campus document; nodes are placed in meters north/east of (0, 0).
pub struct Doc {
    pub doc: CampusDocument,
}

impl Doc {
    pub fn new() -> Self {
        Self { doc: CampusDocument { nodes: Vec::new(), edges: Vec::new() } }
    }

    pub fn node(&mut self, id: &str, kind: NodeKind, north_m: f64, east_m: f64) -> &mut Self {
        let layers = match kind {
            NodeKind::Gate => vec![Layer::Road],
            NodeKind::ParkingLot | NodeKind::BusStop => vec![Layer::Road, Layer::Walk],
            _ => vec![Layer::Walk],
        };
        self.node_in(id, kind, north_m, east_m, layers)
    }

    pub fn node_in(&mut self, id: &str, kind: NodeKind, north_m: f64, east_m: f64, layers: Vec<Layer>) -> &mut Self {
        let area_m2 = match kind {
            NodeKind::Building => Some(100.0),
            NodeKind::FoodPlace => Some(200.0),
            NodeKind::ResidenceHall => Some(1000.0),
            _ => None,
        };
        let capacity = kind.has_capacity().then_some(10);
        self.doc.nodes.push(NodeDoc {
            id: id.into(),
            pos: GeoPoint::new(0.0, 0.0).offset_m(north_m, east_m),
            kind,
            layers,
            area_m2,
            capacity,
        });
        self
    }

    pub fn capacity(&mut self, id: &str, cap: u32) -> &mut Self {
        self.doc.nodes.iter_mut().find(|n| n.id == id).unwrap().capacity = Some(cap);
        self
    }

    pub fn area(&mut self, id: &str, area: f64) -> &mut Self {
        self.doc.nodes.iter_mut().find(|n| n.id == id).unwrap().area_m2 = Some(area);
        self
    }

    fn pos(&self, id: &str) -> GeoPoint {
        self.doc.nodes.iter().find(|n| n.id == id).unwrap_or_else(|| panic!("no node {id}")).pos
    }

    pub fn edge(&mut self, layer: Layer, from: &str, to: &str, directed: bool) -> &mut Self {
        let (a, b) = (self.pos(from), self.pos(to));
        let id = format!("{}{}", if layer == Layer::Walk { "w" } else { "r" }, self.doc.edges.len());
        self.doc.edges.push(EdgeDoc {
            id,
            from: from.into(),
            to: to.into(),
            layer,
            directed,
            polyline: vec![[a.lat, a.lon], [b.lat, b.lon]],
        });
        self
    }

    pub fn walk(&mut self, from: &str, to: &str) -> &mut Self {
        self.edge(Layer::Walk, from, to, false)
    }

    pub fn road(&mut self, from: &str, to: &str) -> &mut Self {
        self.edge(Layer::Road, from, to, false)
    }

    pub fn build(&self) -> MultilayerNetwork {
        MultilayerNetwork::from_document(&self.doc).expect("fixture network is valid")
    }
}

/// A small campus laid out on the equator so east/north offsets are exact lengths.
///
/// ```text
///              F1 (100 N, 400 E)
///  B2 (166 N, 200 E)   |
///       |              |
///  H ---- X1 --------- B1
///  (0)   (200 E)     (400 E)
///         |            |
///        P1           S1      (100 S)
///         |
///        G1                   (300 S)
/// ```
pub fn strip() -> Doc {
    let mut d = Doc::new();
    d.node("H", NodeKind::ResidenceHall, 0.0, 0.0)
        .node("X1", NodeKind::Intersection, 0.0, 200.0)
        .node("B1", NodeKind::Building, 0.0, 400.0)
        .node("B2", NodeKind::Building, 166.0, 200.0)
        .node("F1", NodeKind::FoodPlace, 100.0, 400.0)
        .node("P1", NodeKind::ParkingLot, -100.0, 200.0)
        .node("S1", NodeKind::BusStop, -100.0, 400.0)
        .node("G1", NodeKind::Gate, -300.0, 200.0)
        .walk("H", "X1")
        .walk("X1", "B1")
        .walk("X1", "B2")
        .walk("B1", "F1")
        .walk("X1", "P1")
        .walk("B1", "S1")
        .road("G1", "P1")
        .road("P1", "S1");
    d
}

pub fn agent(id: u32, role: Role, home: NodeIx, speed: f64, buffer: u32, schedule: &[(u32, u32, NodeIx)]) -> Agent {
    Agent {
        id,
        role,
        home,
        gate: None,
        walk_speed: speed,
        punctuality_buffer: buffer,
        claimed_parking: None,
        uses_bus: false,
        schedule: schedule.iter().map(|&(start, end, location)| ScheduleItem { start, end, location }).collect(),
    }
}

pub fn scenario_path(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(rel)
}
