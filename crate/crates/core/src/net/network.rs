use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use super::geo::{polyline_length, GeoPoint};
use super::NetError;

/// Endpoint tolerance between a polyline's first/last point and its node, in degrees.
const ENDPOINT_TOLERANCE_DEG: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Intersection,
    Building,
    FoodPlace,
    ResidenceHall,
    ParkingLot,
    BusStop,
    Gate,
}

impl NodeKind {
    /// Kinds with indoor occupancy, which carry a floor area.
    pub fn is_indoor(self) -> bool {
        matches!(self, NodeKind::Building | NodeKind::FoodPlace | NodeKind::ResidenceHall)
    }

    pub fn is_mode_switch(self) -> bool {
        matches!(self, NodeKind::ParkingLot | NodeKind::BusStop)
    }

    pub fn has_capacity(self) -> bool {
        matches!(self, NodeKind::ParkingLot | NodeKind::ResidenceHall)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Intersection => "intersection",
            NodeKind::Building => "building",
            NodeKind::FoodPlace => "food_place",
            NodeKind::ResidenceHall => "residence_hall",
            NodeKind::ParkingLot => "parking_lot",
            NodeKind::BusStop => "bus_stop",
            NodeKind::Gate => "gate",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Road,
    Walk,
}

impl Layer {
    fn slot(self) -> usize {
        match self {
            Layer::Road => 0,
            Layer::Walk => 1,
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::Road => "road",
            Layer::Walk => "walk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeIx(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeIx(pub u32);

impl NodeIx {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl EdgeIx {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetNode {
    pub id: String,
    pub pos: GeoPoint,
    pub kind: NodeKind,
    pub road: bool,
    pub walk: bool,
    pub area_m2: Option<f64>,
    pub capacity: Option<u32>,
}

impl NetNode {
    pub fn in_layer(&self, layer: Layer) -> bool {
        match layer {
            Layer::Road => self.road,
            Layer::Walk => self.walk,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetEdge {
    pub id: String,
    pub from: NodeIx,
    pub to: NodeIx,
    pub layer: Layer,
    pub directed: bool,
    pub polyline: Vec<GeoPoint>,
    pub length_m: f64,
}

/// One adjacency entry: leaving through `edge` to `node`; `forward` is false when an
/// undirected edge is traversed from its `to` end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub edge: EdgeIx,
    pub node: NodeIx,
    pub forward: bool,
}

/// Axis-aligned lat/lon extent of all network geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl BoundingBox {
    pub fn with_margin(&self, fraction: f64) -> BoundingBox {
        let dlat = (self.north - self.south).max(1e-6) * fraction;
        let dlon = (self.east - self.west).max(1e-6) * fraction;
        BoundingBox {
            south: self.south - dlat,
            west: self.west - dlon,
            north: self.north + dlat,
            east: self.east + dlon,
        }
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint::new((self.south + self.north) / 2.0, (self.west + self.east) / 2.0)
    }
}

/// Road + pedestrian network. Immutable after [`MultilayerNetwork::from_document`].
#[derive(Debug, Clone)]
pub struct MultilayerNetwork {
    nodes: Vec<NetNode>,
    edges: Vec<NetEdge>,
    index: HashMap<String, NodeIx>,
    edge_index: HashMap<String, EdgeIx>,
    /// Position of each node in ascending id order, used for tie-breaking.
    rank: Vec<u32>,
    out: [Vec<Vec<Link>>; 2],
    inc: [Vec<Vec<Link>>; 2],
    bbox: BoundingBox,
}

impl PartialEq for MultilayerNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

// ---------------------------------------------------------------------------
// Campus description document

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: String,
    pub pos: GeoPoint,
    pub kind: NodeKind,
    pub layers: Vec<Layer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub id: String,
    pub from: String,
    pub to: String,
    pub layer: Layer,
    pub directed: bool,
    /// `[lat, lon]` pairs.
    pub polyline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampusDocument {
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<EdgeDoc>,
}

impl CampusDocument {
    pub fn from_json(text: &str) -> Result<Self, NetError> {
        serde_json::from_str(text).map_err(|e| NetError::Schema(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("campus document serializes");
        s.push('\n');
        s
    }
}

/// Parse and validate a campus description.
pub fn load_campus(text: &str) -> Result<MultilayerNetwork, NetError> {
    MultilayerNetwork::from_document(&CampusDocument::from_json(text)?)
}

pub fn load_campus_file(path: &FsPath) -> Result<MultilayerNetwork, NetError> {
    let text = std::fs::read_to_string(path).map_err(|source| NetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_campus(&text)
}

impl MultilayerNetwork {
    pub fn from_document(doc: &CampusDocument) -> Result<Self, NetError> {
        let mut nodes = Vec::with_capacity(doc.nodes.len());
        let mut index = HashMap::with_capacity(doc.nodes.len());
        for (i, nd) in doc.nodes.iter().enumerate() {
            if index.insert(nd.id.clone(), NodeIx(i as u32)).is_some() {
                return Err(NetError::DuplicateId(nd.id.clone()));
            }
            nodes.push(validate_node(nd)?);
        }

        let mut edges = Vec::with_capacity(doc.edges.len());
        let mut edge_index = HashMap::with_capacity(doc.edges.len());
        for (i, ed) in doc.edges.iter().enumerate() {
            if edge_index.insert(ed.id.clone(), EdgeIx(i as u32)).is_some() {
                return Err(NetError::DuplicateId(ed.id.clone()));
            }
            edges.push(validate_edge(ed, &nodes, &index)?);
        }

        let net = Self::assemble(nodes, edges, index, edge_index);
        net.check_walk_connected()?;
        net.check_gates_reach_lots()?;
        Ok(net)
    }

    fn assemble(
        nodes: Vec<NetNode>,
        edges: Vec<NetEdge>,
        index: HashMap<String, NodeIx>,
        edge_index: HashMap<String, EdgeIx>,
    ) -> Self {
        let n = nodes.len();
        let mut out = [vec![Vec::new(); n], vec![Vec::new(); n]];
        let mut inc = [vec![Vec::new(); n], vec![Vec::new(); n]];
        for (i, e) in edges.iter().enumerate() {
            let ix = EdgeIx(i as u32);
            let s = e.layer.slot();
            out[s][e.from.idx()].push(Link { edge: ix, node: e.to, forward: true });
            inc[s][e.to.idx()].push(Link { edge: ix, node: e.from, forward: true });
            if !e.directed {
                out[s][e.to.idx()].push(Link { edge: ix, node: e.from, forward: false });
                inc[s][e.from.idx()].push(Link { edge: ix, node: e.to, forward: false });
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| nodes[a].id.cmp(&nodes[b].id));
        let mut rank = vec![0u32; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r as u32;
        }

        let mut bbox = BoundingBox {
            south: f64::INFINITY,
            west: f64::INFINITY,
            north: f64::NEG_INFINITY,
            east: f64::NEG_INFINITY,
        };
        let points = nodes.iter().map(|n| &n.pos).chain(edges.iter().flat_map(|e| e.polyline.iter()));
        for p in points {
            bbox.south = bbox.south.min(p.lat);
            bbox.north = bbox.north.max(p.lat);
            bbox.west = bbox.west.min(p.lon);
            bbox.east = bbox.east.max(p.lon);
        }
        if nodes.is_empty() {
            bbox = BoundingBox { south: 0.0, west: 0.0, north: 0.0, east: 0.0 };
        }

        Self { nodes, edges, index, edge_index, rank, out, inc, bbox }
    }

    fn check_walk_connected(&self) -> Result<(), NetError> {
        let walk: Vec<NodeIx> = self.node_ixs().filter(|&i| self.node(i).walk).collect();
        let Some(&start) = walk.first() else {
            return Ok(());
        };
        let mut seen = vec![false; self.nodes.len()];
        seen[start.idx()] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for a in self.out_arcs(Layer::Walk, u) {
                if !seen[a.node.idx()] {
                    seen[a.node.idx()] = true;
                    queue.push_back(a.node);
                }
            }
        }
        match walk.iter().find(|i| !seen[i.idx()]) {
            Some(&i) => Err(NetError::WalkLayerDisconnected(self.node(i).id.clone())),
            None => Ok(()),
        }
    }

    fn check_gates_reach_lots(&self) -> Result<(), NetError> {
        let lots = self.nodes_of_kind(NodeKind::ParkingLot);
        for gate in self.nodes_of_kind(NodeKind::Gate) {
            let reach = self.reachable(Layer::Road, gate);
            if let Some(&lot) = lots.iter().find(|l| !reach.contains(l)) {
                return Err(NetError::GateCannotReachLot {
                    gate: self.node(gate).id.clone(),
                    lot: self.node(lot).id.clone(),
                });
            }
        }
        Ok(())
    }

    fn reachable(&self, layer: Layer, from: NodeIx) -> HashSet<NodeIx> {
        let mut seen = HashSet::from([from]);
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            for a in self.out_arcs(layer, u) {
                if seen.insert(a.node) {
                    stack.push(a.node);
                }
            }
        }
        seen
    }

    pub fn to_document(&self) -> CampusDocument {
        CampusDocument {
            nodes: self
                .nodes
                .iter()
                .map(|n| {
                    let mut layers = Vec::new();
                    if n.road {
                        layers.push(Layer::Road);
                    }
                    if n.walk {
                        layers.push(Layer::Walk);
                    }
                    NodeDoc {
                        id: n.id.clone(),
                        pos: n.pos,
                        kind: n.kind,
                        layers,
                        area_m2: n.area_m2,
                        capacity: n.capacity,
                    }
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDoc {
                    id: e.id.clone(),
                    from: self.node(e.from).id.clone(),
                    to: self.node(e.to).id.clone(),
                    layer: e.layer,
                    directed: e.directed,
                    polyline: e.polyline.iter().map(|p| [p.lat, p.lon]).collect(),
                })
                .collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, ix: NodeIx) -> &NetNode {
        &self.nodes[ix.idx()]
    }

    pub fn edge(&self, ix: EdgeIx) -> &NetEdge {
        &self.edges[ix.idx()]
    }

    pub fn nodes(&self) -> &[NetNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[NetEdge] {
        &self.edges
    }

    pub fn node_ixs(&self) -> impl Iterator<Item = NodeIx> {
        (0..self.nodes.len() as u32).map(NodeIx)
    }

    pub fn lookup(&self, id: &str) -> Result<NodeIx, NetError> {
        self.index.get(id).copied().ok_or_else(|| NetError::UnknownNode(id.to_string()))
    }

    pub fn lookup_edge(&self, id: &str) -> Option<EdgeIx> {
        self.edge_index.get(id).copied()
    }

    pub fn id_rank(&self, ix: NodeIx) -> u32 {
        self.rank[ix.idx()]
    }

    /// Nodes of `kind`, sorted by id.
    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<NodeIx> {
        let mut v: Vec<NodeIx> = self.node_ixs().filter(|&i| self.node(i).kind == kind).collect();
        v.sort_by_key(|&i| self.id_rank(i));
        v
    }

    pub fn out_arcs(&self, layer: Layer, node: NodeIx) -> &[Link] {
        &self.out[layer.slot()][node.idx()]
    }

    pub fn in_arcs(&self, layer: Layer, node: NodeIx) -> &[Link] {
        &self.inc[layer.slot()][node.idx()]
    }

    pub fn bounding_box(&self) -> BoundingBox {
        self.bbox
    }
}

fn validate_node(nd: &NodeDoc) -> Result<NetNode, NetError> {
    let bad = |reason: &str| NetError::InvalidNode { node: nd.id.clone(), reason: reason.to_string() };
    if !nd.pos.is_valid() {
        return Err(bad("coordinates out of range"));
    }
    let road = nd.layers.contains(&Layer::Road);
    let walk = nd.layers.contains(&Layer::Walk);
    if !road && !walk {
        return Err(bad("belongs to no layer"));
    }
    if nd.kind.is_mode_switch() && !(road && walk) {
        return Err(NetError::ModeSwitchLayers(nd.id.clone()));
    }
    if nd.kind == NodeKind::Gate && !road {
        return Err(bad("gate must belong to the road layer"));
    }
    if nd.kind.is_indoor() && !walk {
        return Err(bad("indoor node must belong to the walk layer"));
    }
    match (nd.kind.is_indoor(), nd.area_m2) {
        (true, None) => return Err(bad("area_m2 required")),
        (true, Some(a)) if !(a.is_finite() && a > 0.0) => return Err(bad("area_m2 must be positive")),
        (false, Some(_)) => return Err(bad("area_m2 not allowed for this kind")),
        _ => {}
    }
    match (nd.kind.has_capacity(), nd.capacity) {
        (true, None) => return Err(bad("capacity required")),
        (false, Some(_)) => return Err(bad("capacity not allowed for this kind")),
        _ => {}
    }
    Ok(NetNode {
        id: nd.id.clone(),
        pos: nd.pos,
        kind: nd.kind,
        road,
        walk,
        area_m2: nd.area_m2,
        capacity: nd.capacity,
    })
}

fn validate_edge(
    ed: &EdgeDoc,
    nodes: &[NetNode],
    index: &HashMap<String, NodeIx>,
) -> Result<NetEdge, NetError> {
    let bad = |reason: String| NetError::InvalidEdge { edge: ed.id.clone(), reason };
    let endpoint = |id: &str| {
        index.get(id).copied().ok_or_else(|| NetError::DanglingEndpoint {
            edge: ed.id.clone(),
            node: id.to_string(),
        })
    };
    let from = endpoint(&ed.from)?;
    let to = endpoint(&ed.to)?;
    for ix in [from, to] {
        if !nodes[ix.idx()].in_layer(ed.layer) {
            return Err(bad(format!("endpoint {} is not in the {} layer", nodes[ix.idx()].id, ed.layer)));
        }
    }
    if ed.layer == Layer::Walk && ed.directed {
        return Err(bad("walk edges must be undirected".into()));
    }
    if ed.polyline.len() < 2 {
        return Err(bad("polyline needs at least two points".into()));
    }
    let polyline: Vec<GeoPoint> = ed.polyline.iter().map(|&[lat, lon]| GeoPoint::new(lat, lon)).collect();
    if polyline.iter().any(|p| !p.is_valid()) {
        return Err(bad("polyline coordinates out of range".into()));
    }
    let close = |a: &GeoPoint, b: &GeoPoint| {
        (a.lat - b.lat).abs() <= ENDPOINT_TOLERANCE_DEG && (a.lon - b.lon).abs() <= ENDPOINT_TOLERANCE_DEG
    };
    if !close(&polyline[0], &nodes[from.idx()].pos) || !close(polyline.last().unwrap(), &nodes[to.idx()].pos) {
        return Err(bad("polyline endpoints do not coincide with from/to nodes".into()));
    }
    let length_m = polyline_length(&polyline);
    Ok(NetEdge { id: ed.id.clone(), from, to, layer: ed.layer, directed: ed.directed, polyline, length_m })
}
