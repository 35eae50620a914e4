//! Synthetic campus generator: a pedestrian grid inside a two-way ring road,
//! with gates on the ring corners and mode-switch nodes on the perimeter.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::net::{CampusDocument, EdgeDoc, GeoPoint, Layer, NodeDoc, NodeKind};

use super::PopError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampusSpec {
    /// Pedestrian grid intersections per column / row.
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub spacing_m: f64,
    /// South-west corner of the pedestrian grid.
    pub origin: GeoPoint,
    pub n_buildings: u32,
    pub n_food_places: u32,
    pub n_residence_halls: u32,
    pub n_parking_lots: u32,
    pub n_bus_stops: u32,
    pub n_gates: u32,
    pub building_area_m2: [f64; 2],
    pub food_area_m2: [f64; 2],
    pub hall_area_m2: [f64; 2],
    pub lot_capacity: [u32; 2],
    pub hall_capacity: [u32; 2],
}

impl Default for CampusSpec {
    fn default() -> Self {
        Self {
            grid_rows: 8,
            grid_cols: 8,
            spacing_m: 90.0,
            origin: GeoPoint::new(40.0, -75.0),
            n_buildings: 12,
            n_food_places: 3,
            n_residence_halls: 4,
            n_parking_lots: 4,
            n_bus_stops: 2,
            n_gates: 2,
            building_area_m2: [150.0, 300.0],
            food_area_m2: [80.0, 160.0],
            hall_area_m2: [2000.0, 4000.0],
            lot_capacity: [300, 400],
            hall_capacity: [250, 350],
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Side {
    South,
    North,
    West,
    East,
}

impl Side {
    fn tag(self) -> char {
        match self {
            Side::South => 'S',
            Side::North => 'N',
            Side::West => 'W',
            Side::East => 'E',
        }
    }
}

struct Builder {
    origin: GeoPoint,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

impl Builder {
    fn at(&self, north_m: f64, east_m: f64) -> GeoPoint {
        self.origin.offset_m(north_m, east_m)
    }

    fn node(&mut self, id: String, pos: GeoPoint, kind: NodeKind, layers: &[Layer]) {
        self.nodes.push(NodeDoc { id, pos, kind, layers: layers.to_vec(), area_m2: None, capacity: None });
    }

    fn pos(&self, id: &str) -> GeoPoint {
        self.nodes.iter().find(|n| n.id == id).expect("node added before edge").pos
    }

    fn edge(&mut self, from: &str, to: &str, layer: Layer, directed: bool, via: &[GeoPoint]) {
        let id = format!("{}{:04}", if layer == Layer::Road { 'r' } else { 'w' }, self.edges.len());
        let mut polyline = vec![self.pos(from)];
        polyline.extend_from_slice(via);
        polyline.push(self.pos(to));
        self.edges.push(EdgeDoc {
            id,
            from: from.into(),
            to: to.into(),
            layer,
            directed,
            polyline: polyline.iter().map(|p| [p.lat, p.lon]).collect(),
        });
    }

    /// Two opposing one-way road edges.
    fn two_way(&mut self, a: &str, b: &str) {
        self.edge(a, b, Layer::Road, true, &[]);
        self.edge(b, a, Layer::Road, true, &[]);
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.gen_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn uniform_u32(rng: &mut ChaCha8Rng, range: [u32; 2]) -> u32 {
    if range[1] > range[0] {
        rng.gen_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

fn grid_id(r: u32, c: u32) -> String {
    format!("X{r:02}{c:02}")
}

pub fn synthesize_campus(spec: &CampusSpec, seed: u64) -> Result<CampusDocument, PopError> {
    let (rows, cols) = (spec.grid_rows, spec.grid_cols);
    if rows < 2 || cols < 2 {
        return Err(PopError::InvalidSpec("grid needs at least 2 x 2 intersections".into()));
    }
    if !(spec.spacing_m > 0.0) || !spec.origin.is_valid() {
        return Err(PopError::InvalidSpec("spacing must be positive and origin valid".into()));
    }
    let interior = (rows * cols) as usize;
    let indoor = (spec.n_buildings + spec.n_food_places + spec.n_residence_halls) as usize;
    if indoor > interior {
        return Err(PopError::GridTooSmall { kind: "indoor", requested: indoor, slots: interior });
    }
    let perimeter = 2 * (rows + cols) as usize;
    let switch = (spec.n_parking_lots + spec.n_bus_stops) as usize;
    if switch > perimeter {
        return Err(PopError::GridTooSmall { kind: "perimeter", requested: switch, slots: perimeter });
    }
    if spec.n_gates > 4 {
        return Err(PopError::GridTooSmall { kind: "gate", requested: spec.n_gates as usize, slots: 4 });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = spec.spacing_m;
    let mut b = Builder { origin: spec.origin, nodes: Vec::new(), edges: Vec::new() };

    // Pedestrian grid.
    for r in 0..rows {
        for c in 0..cols {
            let p = b.at(r as f64 * s, c as f64 * s);
            b.node(grid_id(r, c), p, NodeKind::Intersection, &[Layer::Walk]);
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                b.edge(&grid_id(r, c), &grid_id(r, c + 1), Layer::Walk, false, &[]);
            }
            if r + 1 < rows {
                b.edge(&grid_id(r, c), &grid_id(r + 1, c), Layer::Walk, false, &[]);
            }
        }
    }

    // Ring road one spacing outside the grid. Corners first, in gate-priority order.
    let (south, north) = (-s, rows as f64 * s);
    let (west, east) = (-s, cols as f64 * s);
    let corners = [("SW", south, west), ("NE", north, east), ("NW", north, west), ("SE", south, east)];
    let mut corner_ids = Vec::new();
    for (i, &(tag, n, e)) in corners.iter().enumerate() {
        let p = b.at(n, e);
        if (i as u32) < spec.n_gates {
            let id = format!("G{}", i + 1);
            b.node(id.clone(), p, NodeKind::Gate, &[Layer::Road]);
            corner_ids.push((tag, id));
        } else {
            let id = format!("R_{tag}");
            b.node(id.clone(), p, NodeKind::Intersection, &[Layer::Road]);
            corner_ids.push((tag, id));
        }
    }
    let corner = |tag: &str| corner_ids.iter().find(|(t, _)| *t == tag).unwrap().1.clone();
    let ring_id = |side: Side, i: u32| format!("R_{}{i:02}", side.tag());
    let sides = [
        (Side::South, cols, corner("SW"), corner("SE")),
        (Side::North, cols, corner("NW"), corner("NE")),
        (Side::West, rows, corner("SW"), corner("NW")),
        (Side::East, rows, corner("SE"), corner("NE")),
    ];
    for &(side, n, ref start, ref end) in &sides {
        for i in 0..n {
            let p = match side {
                Side::South => b.at(south, i as f64 * s),
                Side::North => b.at(north, i as f64 * s),
                Side::West => b.at(i as f64 * s, west),
                Side::East => b.at(i as f64 * s, east),
            };
            b.node(ring_id(side, i), p, NodeKind::Intersection, &[Layer::Road]);
        }
        let mut chain = vec![start.clone()];
        chain.extend((0..n).map(|i| ring_id(side, i)));
        chain.push(end.clone());
        for w in chain.windows(2) {
            b.two_way(&w[0], &w[1]);
        }
    }

    // Perimeter slots: half a spacing outside each border intersection.
    let mut slots: Vec<(Side, u32)> = Vec::new();
    for c in 0..cols {
        slots.push((Side::South, c));
        slots.push((Side::North, c));
    }
    for r in 0..rows {
        slots.push((Side::West, r));
        slots.push((Side::East, r));
    }
    slots.shuffle(&mut rng);
    let place_switch = |b: &mut Builder, rng: &mut ChaCha8Rng, id: String, kind: NodeKind, slot: (Side, u32)| {
        let (side, i) = slot;
        let (host, n, e) = match side {
            Side::South => (grid_id(0, i), -s / 2.0, i as f64 * s),
            Side::North => (grid_id(rows - 1, i), (rows - 1) as f64 * s + s / 2.0, i as f64 * s),
            Side::West => (grid_id(i, 0), i as f64 * s, -s / 2.0),
            Side::East => (grid_id(i, cols - 1), i as f64 * s, (cols - 1) as f64 * s + s / 2.0),
        };
        let p = b.at(n, e);
        b.node(id.clone(), p, kind, &[Layer::Road, Layer::Walk]);
        if kind == NodeKind::ParkingLot {
            b.nodes.last_mut().unwrap().capacity = Some(uniform_u32(rng, spec.lot_capacity));
        }
        b.edge(&ring_id(side, i), &id, Layer::Road, false, &[]);
        b.edge(&id, &host, Layer::Walk, false, &[]);
    };
    let mut slot_iter = slots.into_iter();
    for k in 0..spec.n_parking_lots {
        place_switch(&mut b, &mut rng, format!("P{}", k + 1), NodeKind::ParkingLot, slot_iter.next().unwrap());
    }
    for k in 0..spec.n_bus_stops {
        place_switch(&mut b, &mut rng, format!("S{}", k + 1), NodeKind::BusStop, slot_iter.next().unwrap());
    }

    // Indoor nodes hang off interior intersections on a bent footpath.
    let mut hosts: Vec<(u32, u32)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
    hosts.shuffle(&mut rng);
    let mut hosts = hosts.into_iter();
    let kinds = [
        (NodeKind::Building, spec.n_buildings, 'B', spec.building_area_m2),
        (NodeKind::FoodPlace, spec.n_food_places, 'F', spec.food_area_m2),
        (NodeKind::ResidenceHall, spec.n_residence_halls, 'H', spec.hall_area_m2),
    ];
    for (kind, count, prefix, area) in kinds {
        let width = if count >= 10 { 2 } else { 1 };
        for k in 0..count {
            let (r, c) = hosts.next().unwrap();
            let id = format!("{prefix}{:0width$}", k + 1);
            let (n0, e0) = (r as f64 * s, c as f64 * s);
            let bend = b.at(n0 + 0.25 * s, e0);
            let p = b.at(n0 + 0.25 * s, e0 + 0.25 * s);
            b.node(id.clone(), p, kind, &[Layer::Walk]);
            let last = b.nodes.last_mut().unwrap();
            last.area_m2 = Some(uniform(&mut rng, area).round());
            if kind == NodeKind::ResidenceHall {
                last.capacity = Some(uniform_u32(&mut rng, spec.hall_capacity));
            }
            b.edge(&grid_id(r, c), &id, Layer::Walk, false, &[bend]);
        }
    }

    Ok(CampusDocument { nodes: b.nodes, edges: b.edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::MultilayerNetwork;

    fn smallest() -> CampusSpec {
        CampusSpec {
            grid_rows: 2,
            grid_cols: 2,
            n_buildings: 1,
            n_food_places: 0,
            n_residence_halls: 1,
            n_parking_lots: 1,
            n_bus_stops: 0,
            n_gates: 1,
            ..CampusSpec::default()
        }
    }

    #[test]
    fn smallest_campus_is_valid() {
        let doc = synthesize_campus(&smallest(), 1).unwrap();
        let net = MultilayerNetwork::from_document(&doc).unwrap();
        for kind in [NodeKind::Building, NodeKind::ParkingLot, NodeKind::Gate, NodeKind::ResidenceHall] {
            assert_eq!(net.nodes_of_kind(kind).len(), 1, "{kind}");
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = CampusSpec::default();
        let a = synthesize_campus(&spec, 11).unwrap().to_json();
        let b = synthesize_campus(&spec, 11).unwrap().to_json();
        assert_eq!(a, b);
        let c = synthesize_campus(&spec, 12).unwrap().to_json();
        assert_ne!(a, c);
    }

    #[test]
    fn default_spec_loads_with_declared_counts() {
        let spec = CampusSpec::default();
        let doc = synthesize_campus(&spec, 3).unwrap();
        let net = MultilayerNetwork::from_document(&doc).unwrap();
        assert_eq!(net.node_count(), doc.nodes.len());
        assert_eq!(net.edge_count(), doc.edges.len());
        assert_eq!(net.nodes_of_kind(NodeKind::Building).len(), 12);
        assert_eq!(net.nodes_of_kind(NodeKind::ParkingLot).len(), 4);
        assert_eq!(net.nodes_of_kind(NodeKind::Gate).len(), 2);
        assert_eq!(net.nodes_of_kind(NodeKind::FoodPlace).len(), 3);
        assert_eq!(net.nodes_of_kind(NodeKind::ResidenceHall).len(), 4);
    }

    #[test]
    fn too_many_buildings_for_grid() {
        let spec = CampusSpec { n_buildings: 10, ..smallest() };
        assert!(matches!(synthesize_campus(&spec, 0), Err(PopError::GridTooSmall { .. })));
        let spec = CampusSpec { n_gates: 5, ..smallest() };
        assert!(synthesize_campus(&spec, 0).is_err());
    }
}
