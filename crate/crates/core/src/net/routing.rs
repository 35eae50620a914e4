use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::network::{EdgeIx, Layer, MultilayerNetwork, NodeIx};
use super::NetError;

/// Distance slack, in meters, below which a leg counts as complete. Shared by
/// [`travel_time`] and the engine so planned and realized minutes agree.
pub const TRAVEL_EPSILON_M: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Walk,
    Drive,
}

impl Mode {
    pub fn layer(self) -> Layer {
        match self {
            Mode::Walk => Layer::Walk,
            Mode::Drive => Layer::Road,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Walk => "walk",
            Mode::Drive => "drive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    pub edge: EdgeIx,
    /// True when traversing from the edge's `from` node to its `to` node.
    pub forward: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub mode: Mode,
    pub steps: Vec<PathStep>,
    /// Visited nodes, `steps.len() + 1` long.
    pub nodes: Vec<NodeIx>,
    pub length_m: f64,
}

impl Path {
    pub fn empty(mode: Mode, at: NodeIx) -> Self {
        Self { mode, steps: Vec::new(), nodes: vec![at], length_m: 0.0 }
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn origin(&self) -> NodeIx {
        self.nodes[0]
    }

    pub fn destination(&self) -> NodeIx {
        *self.nodes.last().expect("path has at least one node")
    }

    /// Distance from the path origin to the start of each step.
    pub fn step_offsets(&self, net: &MultilayerNetwork) -> Vec<f64> {
        let mut acc = 0.0;
        self.steps
            .iter()
            .map(|s| {
                let here = acc;
                acc += net.edge(s.edge).length_m;
                here
            })
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    node: NodeIx,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source distances on one layer. With `reverse`, distances are *to* `root`.
fn dijkstra(net: &MultilayerNetwork, layer: Layer, root: NodeIx, reverse: bool) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; net.node_count()];
    let mut heap = BinaryHeap::new();
    dist[root.idx()] = 0.0;
    heap.push(Frontier { dist: 0.0, node: root });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if d > dist[node.idx()] {
            continue;
        }
        let links = if reverse { net.in_arcs(layer, node) } else { net.out_arcs(layer, node) };
        for l in links {
            let nd = d + net.edge(l.edge).length_m;
            if nd < dist[l.node.idx()] {
                dist[l.node.idx()] = nd;
                heap.push(Frontier { dist: nd, node: l.node });
            }
        }
    }
    dist
}

fn tied(a: f64, b: f64) -> bool {
    a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn check_layer(net: &MultilayerNetwork, mode: Mode, node: NodeIx) -> Result<(), NetError> {
    if net.node(node).in_layer(mode.layer()) {
        Ok(())
    } else {
        Err(NetError::NotInLayer { node: net.node(node).id.clone(), mode })
    }
}

/// Walk forward from `src` along arcs that stay on a shortest path to the target,
/// always taking the smallest next node id. This yields the lexicographically
/// smallest node-id sequence among all minimum-length paths.
fn extract(
    net: &MultilayerNetwork,
    mode: Mode,
    src: NodeIx,
    dst: NodeIx,
    dist_to: &[f64],
) -> Result<Path, NetError> {
    if !dist_to[src.idx()].is_finite() {
        return Err(NetError::NoRoute {
            mode,
            from: net.node(src).id.clone(),
            to: net.node(dst).id.clone(),
        });
    }
    let layer = mode.layer();
    let mut path = Path::empty(mode, src);
    let mut visited = vec![false; net.node_count()];
    let mut here = src;
    visited[here.idx()] = true;
    while here != dst {
        let remaining = dist_to[here.idx()];
        let next = net
            .out_arcs(layer, here)
            .iter()
            .filter(|l| !visited[l.node.idx()])
            .filter(|l| tied(net.edge(l.edge).length_m + dist_to[l.node.idx()], remaining))
            .min_by(|a, b| {
                net.id_rank(a.node)
                    .cmp(&net.id_rank(b.node))
                    .then_with(|| net.edge(a.edge).id.cmp(&net.edge(b.edge).id))
            })
            .copied()
            .expect("a tight arc exists on every finite-distance node");
        path.steps.push(PathStep { edge: next.edge, forward: next.forward });
        path.nodes.push(next.node);
        path.length_m += net.edge(next.edge).length_m;
        visited[next.node.idx()] = true;
        here = next.node;
    }
    Ok(path)
}

/// Minimum-length path on the layer implied by `mode`. Ties go to the
/// lexicographically smallest node-id sequence.
pub fn shortest_path(net: &MultilayerNetwork, mode: Mode, src: NodeIx, dst: NodeIx) -> Result<Path, NetError> {
    check_layer(net, mode, src)?;
    check_layer(net, mode, dst)?;
    if src == dst {
        return Ok(Path::empty(mode, src));
    }
    let dist_to = dijkstra(net, mode.layer(), dst, true);
    extract(net, mode, src, dst, &dist_to)
}

/// Drive leg gate→parking and walk leg parking→destination, each independently shortest.
pub fn multimodal_route(
    net: &MultilayerNetwork,
    gate: NodeIx,
    parking: NodeIx,
    dst: NodeIx,
) -> Result<(Path, Path), NetError> {
    let drive = shortest_path(net, Mode::Drive, gate, parking)?;
    let walk = shortest_path(net, Mode::Walk, parking, dst)?;
    Ok((drive, walk))
}

/// Whole minutes needed to cover `length_m` at `speed_mps`, rounded up.
pub(crate) fn minutes_for(length_m: f64, speed_mps: f64) -> u32 {
    if length_m <= TRAVEL_EPSILON_M {
        return 0;
    }
    ((length_m - TRAVEL_EPSILON_M) / (speed_mps * 60.0)).ceil() as u32
}

pub fn travel_time(path: &Path, speed_mps: f64) -> Result<u32, NetError> {
    if !(speed_mps > 0.0 && speed_mps.is_finite()) {
        return Err(NetError::NonPositiveSpeed(speed_mps));
    }
    Ok(minutes_for(path.length_m, speed_mps))
}

type DistCache = HashMap<(Mode, NodeIx), Arc<Vec<f64>>>;

/// Memoizing router over an immutable network, safe to share across threads.
pub struct Router<'a> {
    net: &'a MultilayerNetwork,
    to: Mutex<DistCache>,
    from: Mutex<DistCache>,
    paths: Mutex<HashMap<(Mode, NodeIx, NodeIx), Arc<Path>>>,
}

impl<'a> Router<'a> {
    pub fn new(net: &'a MultilayerNetwork) -> Self {
        Self {
            net,
            to: Mutex::new(HashMap::new()),
            from: Mutex::new(HashMap::new()),
            paths: Mutex::new(HashMap::new()),
        }
    }

    pub fn network(&self) -> &'a MultilayerNetwork {
        self.net
    }

    fn cached(&self, cache: &Mutex<DistCache>, mode: Mode, root: NodeIx, reverse: bool) -> Arc<Vec<f64>> {
        if let Some(d) = cache.lock().unwrap().get(&(mode, root)) {
            return Arc::clone(d);
        }
        let d = Arc::new(dijkstra(self.net, mode.layer(), root, reverse));
        cache.lock().unwrap().entry((mode, root)).or_insert(d).clone()
    }

    /// Distances from every node to `dst`.
    pub fn distances_to(&self, mode: Mode, dst: NodeIx) -> Arc<Vec<f64>> {
        self.cached(&self.to, mode, dst, true)
    }

    /// Distances from `src` to every node.
    pub fn distances_from(&self, mode: Mode, src: NodeIx) -> Arc<Vec<f64>> {
        self.cached(&self.from, mode, src, false)
    }

    pub fn path(&self, mode: Mode, src: NodeIx, dst: NodeIx) -> Result<Arc<Path>, NetError> {
        if let Some(p) = self.paths.lock().unwrap().get(&(mode, src, dst)) {
            return Ok(Arc::clone(p));
        }
        check_layer(self.net, mode, src)?;
        check_layer(self.net, mode, dst)?;
        let path = if src == dst {
            Path::empty(mode, src)
        } else {
            extract(self.net, mode, src, dst, &self.distances_to(mode, dst))?
        };
        let path = Arc::new(path);
        Ok(self.paths.lock().unwrap().entry((mode, src, dst)).or_insert(path).clone())
    }
}
