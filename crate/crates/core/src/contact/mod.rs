//! Close-contact measurement: pairwise proximity episodes outdoors, the crowding
//! estimate indoors, and the spatial tallies both feed.

mod grid;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use grid::{Grid, GridGeometry};

use crate::net::{point_along, EdgeIx, GeoPoint, MultilayerNetwork, NodeIx};

/// Three feet, in meters.
const THREE_FEET_M: f64 = 0.9144;

#[derive(Debug, thiserror::Error)]
pub enum ContactError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactParams {
    pub distance_threshold_m: f64,
    pub duration_threshold_min: u32,
    /// Clear personal space per occupant, the area of a three-foot-radius disk.
    pub personal_disk_area_m2: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            distance_threshold_m: 2.0,
            duration_threshold_min: 10,
            personal_disk_area_m2: std::f64::consts::PI * THREE_FEET_M * THREE_FEET_M,
        }
    }
}

impl ContactParams {
    pub fn check(&self) -> Result<(), ContactError> {
        if !(self.distance_threshold_m > 0.0) || self.duration_threshold_min == 0 || !(self.personal_disk_area_m2 > 0.0) {
            return Err(ContactError::Parameter("contact thresholds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridParams {
    pub rows: usize,
    pub cols: usize,
    /// Bounding-box margin as a fraction of its extent.
    pub margin: f64,
    /// Per-minute diffusion share sent to each neighbor, display grid only.
    pub diffusion: f64,
    /// Per-minute retention factor, display grid only.
    pub retention: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { rows: 200, cols: 200, margin: 0.05, diffusion: 0.2, retention: 0.97 }
    }
}

impl GridParams {
    pub fn check(&self) -> Result<(), ContactError> {
        if self.rows == 0 || self.cols == 0 || !(self.margin >= 0.0) {
            return Err(ContactError::Parameter("grid needs positive size and non-negative margin".into()));
        }
        Grid::new(1, 1).diffuse_decay(self.diffusion, self.retention)
    }

    pub fn geometry(&self, net: &MultilayerNetwork) -> GridGeometry {
        GridGeometry::new(net.bounding_box().with_margin(self.margin), self.rows, self.cols)
    }
}

/// Estimated close contacts among `occupants` sharing `area_m2`:
/// `max((N / (A / a) - 1) * N / 2, 0)`.
pub fn indoor_contacts(occupants: u32, area_m2: f64, params: &ContactParams) -> Result<f64, ContactError> {
    if !(area_m2 > 0.0) {
        return Err(ContactError::Parameter(format!("area must be positive, got {area_m2}")));
    }
    if occupants < 2 {
        return Ok(0.0);
    }
    let n = occupants as f64;
    if n * params.personal_disk_area_m2 <= area_m2 {
        return Ok(0.0);
    }
    let capacity = area_m2 / params.personal_disk_area_m2;
    Ok(((n / capacity - 1.0) * n / 2.0).max(0.0))
}

/// Per-minute share of the indoor estimate: holding `occupants` steady for one
/// duration threshold accumulates exactly [`indoor_contacts`].
pub fn indoor_contact_increment(occupants: u32, area_m2: f64, params: &ContactParams) -> Result<f64, ContactError> {
    Ok(indoor_contacts(occupants, area_m2, params)? / params.duration_threshold_min as f64)
}

/// Where a walking agent is during one minute, for proximity purposes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Place {
    /// Distance from the edge's `from` node.
    OnEdge { edge: EdgeIx, pos_m: f64 },
    AtNode { node: NodeIx },
}

impl Place {
    pub fn geo(&self, net: &MultilayerNetwork) -> GeoPoint {
        match *self {
            Place::OnEdge { edge, pos_m } => point_along(&net.edge(edge).polyline, pos_m),
            Place::AtNode { node } => net.node(node).pos,
        }
    }
}

/// Raw contact tallies plus the cosmetic display field.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactLedger {
    pub geometry: GridGeometry,
    /// Never diffused or decayed.
    pub cumulative: Grid,
    pub display: Grid,
    pub pairwise_by_agent: Vec<u32>,
    /// Indoor credit in units of [`INDOOR_UNIT`], so per-agent shares add up to
    /// the deposited total without rounding.
    pub indoor_by_agent: Vec<u64>,
    pub pairwise_events: u64,
    pub indoor_units: u64,
}

/// Fixed-point resolution of indoor contact credit.
pub const INDOOR_UNIT: f64 = 1.0 / (1u64 << 32) as f64;

impl ContactLedger {
    pub fn new(geometry: GridGeometry, agents: usize) -> Self {
        Self {
            geometry,
            cumulative: Grid::new(geometry.rows, geometry.cols),
            display: Grid::new(geometry.rows, geometry.cols),
            pairwise_by_agent: vec![0; agents],
            indoor_by_agent: vec![0; agents],
            pairwise_events: 0,
            indoor_units: 0,
        }
    }

    fn deposit(&mut self, pos: GeoPoint, amount: f64) {
        let cell = self.geometry.cell_of(pos);
        self.cumulative.add(cell, amount);
        self.display.add(cell, amount);
    }

    /// One pairwise contact: +1 to each agent and 2 units (one per agent) at the midpoint.
    pub fn record_pair(&mut self, a: usize, b: usize, midpoint: GeoPoint) {
        self.pairwise_by_agent[a] += 1;
        self.pairwise_by_agent[b] += 1;
        self.pairwise_events += 1;
        self.deposit(midpoint, 2.0);
    }

    /// Indoor increment at `pos`, shared equally among `occupants`. Each share is
    /// rounded to the fixed-point unit and the deposit is the sum of the shares.
    pub fn record_indoor(&mut self, occupants: &[usize], pos: GeoPoint, amount: f64) {
        if !(amount > 0.0) || occupants.is_empty() {
            return;
        }
        let share = (amount / occupants.len() as f64 / INDOOR_UNIT).round() as u64;
        if share == 0 {
            return;
        }
        for &o in occupants {
            self.indoor_by_agent[o] += share;
        }
        let units = share * occupants.len() as u64;
        self.indoor_units += units;
        self.deposit(pos, units as f64 * INDOOR_UNIT);
    }

    pub fn indoor_total(&self) -> f64 {
        self.indoor_units as f64 * INDOOR_UNIT
    }

    pub fn indoor_of(&self, agent: usize) -> f64 {
        self.indoor_by_agent[agent] as f64 * INDOOR_UNIT
    }

    pub fn agent_total(&self, agent: usize) -> f64 {
        self.pairwise_by_agent[agent] as f64 + self.indoor_of(agent)
    }

    pub fn total_by_agents(&self) -> f64 {
        (0..self.pairwise_by_agent.len()).map(|a| self.agent_total(a)).sum()
    }

    /// Mean contacts per agent over the population the ledger was sized for.
    pub fn mean_per_agent(&self) -> f64 {
        let n = self.pairwise_by_agent.len();
        if n == 0 {
            0.0
        } else {
            self.total_by_agents() / n as f64
        }
    }
}

/// Consecutive-minute proximity timers for agent pairs.
#[derive(Debug, Clone, Default)]
pub struct PairTimers {
    timers: HashMap<(u32, u32), u32>,
}

impl PairTimers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn active(&self) -> usize {
        self.timers.len()
    }

    pub fn get(&self, a: u32, b: u32) -> u32 {
        self.timers.get(&(a.min(b), a.max(b))).copied().unwrap_or(0)
    }

    /// Advance all timers by one minute given this minute's frozen positions of
    /// walking agents. Candidates share an edge (distance = offset difference) or
    /// stand on the same node (distance 0). A pair below the distance threshold
    /// ticks up; any other pair resets. A contact is recorded when a timer reaches
    /// the duration threshold, so each continuous episode counts once.
    pub fn update(
        &mut self,
        observations: &[(u32, Place)],
        net: &MultilayerNetwork,
        params: &ContactParams,
        ledger: &mut ContactLedger,
    ) {
        let close = close_pairs(observations, params.distance_threshold_m);
        let mut next = HashMap::with_capacity(close.len());
        for (a, b, ia, ib) in close {
            let t = self.timers.get(&(a, b)).copied().unwrap_or(0) + 1;
            if t == params.duration_threshold_min {
                let (pa, pb) = (observations[ia].1.geo(net), observations[ib].1.geo(net));
                let mid = GeoPoint::new((pa.lat + pb.lat) / 2.0, (pa.lon + pb.lon) / 2.0);
                ledger.record_pair(a as usize, b as usize, mid);
            }
            next.insert((a, b), t);
        }
        self.timers = next;
    }
}

/// Pairs `(low id, high id, obs index of low, obs index of high)` closer than
/// `threshold`, sorted by id pair.
fn close_pairs(observations: &[(u32, Place)], threshold: f64) -> Vec<(u32, u32, usize, usize)> {
    let mut on_edges: Vec<(EdgeIx, f64, usize)> = Vec::new();
    let mut on_nodes: Vec<(NodeIx, usize)> = Vec::new();
    for (k, (_, place)) in observations.iter().enumerate() {
        match *place {
            Place::OnEdge { edge, pos_m } => on_edges.push((edge, pos_m, k)),
            Place::AtNode { node } => on_nodes.push((node, k)),
        }
    }
    on_edges.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2)));
    on_nodes.sort();

    let mut out = Vec::new();
    let mut push = |i: usize, j: usize| {
        let (a, b) = (observations[i].0, observations[j].0);
        if a < b {
            out.push((a, b, i, j));
        } else if b < a {
            out.push((b, a, j, i));
        }
    };
    for i in 0..on_edges.len() {
        let (edge, pos, k) = on_edges[i];
        for &(e2, p2, k2) in &on_edges[i + 1..] {
            if e2 != edge || p2 - pos >= threshold {
                break;
            }
            push(k, k2);
        }
    }
    let mut start = 0;
    while start < on_nodes.len() {
        let node = on_nodes[start].0;
        let end = start + on_nodes[start..].iter().take_while(|x| x.0 == node).count();
        for i in start..end {
            for j in i + 1..end {
                push(on_nodes[i].1, on_nodes[j].1);
            }
        }
        start = end;
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a() -> f64 {
        ContactParams::default().personal_disk_area_m2
    }

    #[test]
    fn personal_disk_area() {
        assert!((a() - 2.627).abs() < 1e-3);
    }

    #[test]
    fn single_occupant_has_no_contacts() {
        let p = ContactParams::default();
        for area in [0.5, 1.0, 10.0, 1e4] {
            assert_eq!(indoor_contacts(1, area, &p).unwrap(), 0.0);
        }
        assert_eq!(indoor_contacts(0, 3.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn occupancy_at_capacity_is_zero() {
        let p = ContactParams::default();
        assert_eq!(indoor_contacts(10, 10.0 * a(), &p).unwrap(), 0.0);
    }

    #[test]
    fn twice_capacity() {
        let p = ContactParams::default();
        let n = indoor_contacts(20, 10.0 * a(), &p).unwrap();
        assert!((n - 10.0).abs() < 1e-12);
        assert!((indoor_contact_increment(20, 10.0 * a(), &p).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn nonpositive_area_is_rejected() {
        let p = ContactParams::default();
        assert!(indoor_contacts(3, 0.0, &p).is_err());
        assert!(indoor_contacts(3, -1.0, &p).is_err());
    }

    #[test]
    fn close_pairs_scope() {
        let e = |edge: u32, pos_m: f64| Place::OnEdge { edge: EdgeIx(edge), pos_m };
        let obs = vec![
            (5, e(0, 10.0)),
            (2, e(0, 11.5)),
            (9, e(0, 13.4)),
            (4, e(0, 15.4)),
            (7, e(1, 10.0)),
            (3, Place::AtNode { node: NodeIx(4) }),
            (1, Place::AtNode { node: NodeIx(4) }),
        ];
        let pairs: Vec<(u32, u32)> = close_pairs(&obs, 2.0).into_iter().map(|p| (p.0, p.1)).collect();
        assert_eq!(pairs, vec![(1, 3), (2, 5), (2, 9)]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_in_occupants(n in 0u32..500, area in 1.0f64..2000.0) {
                let p = ContactParams::default();
                prop_assert!(indoor_contacts(n + 1, area, &p).unwrap() >= indoor_contacts(n, area, &p).unwrap());
            }

            #[test]
            fn antitone_in_area(n in 0u32..500, area in 1.0f64..2000.0, grow in 0.0f64..500.0) {
                let p = ContactParams::default();
                prop_assert!(indoor_contacts(n, area + grow, &p).unwrap() <= indoor_contacts(n, area, &p).unwrap());
            }

            #[test]
            fn mass_conserved_without_decay(cells in prop::collection::vec((0usize..12, 0usize..9, 0.0f64..50.0), 1..20), d in 0.0f64..=0.25) {
                let mut g = Grid::new(12, 9);
                for (r, c, v) in cells {
                    g.add((r, c), v);
                }
                let before = g.mass();
                g.diffuse_decay(d, 1.0).unwrap();
                prop_assert!((g.mass() - before).abs() <= 1e-9 * before.max(1.0));
            }
        }
    }
}
