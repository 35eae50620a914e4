//! Minute-by-minute execution of planned itineraries.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::contact::{indoor_contact_increment, ContactLedger, ContactParams, GridParams, PairTimers, Place};
use crate::net::{GeoPoint, Mode, MultilayerNetwork, NodeIx, NodeKind, TRAVEL_EPSILON_M};
use crate::plan::{Element, Itinerary, Leg};
use crate::pop::{Agent, DAY_END_MIN, DAY_START_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineParams {
    /// Half-width of the same-edge neighborhood used for walking density.
    pub density_window_m: f64,
    /// Persons per meter at which walkers reach the slowest speed.
    pub critical_density: f64,
    pub min_speed_factor: f64,
    pub contact: ContactParams,
    pub grid: GridParams,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            density_window_m: 10.0,
            critical_density: 1.0,
            min_speed_factor: 0.5,
            contact: ContactParams::default(),
            grid: GridParams::default(),
        }
    }
}

impl EngineParams {
    pub fn check(&self) -> Result<(), String> {
        if !(self.density_window_m > 0.0) || !(self.critical_density > 0.0) {
            return Err("density window and critical density must be positive".into());
        }
        if !(self.min_speed_factor > 0.0 && self.min_speed_factor <= 1.0) {
            return Err("min_speed_factor must be in (0, 1]".into());
        }
        self.contact.check().map_err(|e| e.to_string())?;
        self.grid.check().map_err(|e| e.to_string())
    }
}

/// Walkers per meter around the walker at `positions[me]`, counting every walker
/// (itself included) within `window_m` on either side over a `2 * window_m` span.
/// A walker with nobody else in range sees zero density.
pub fn local_density(positions: &[f64], me: usize, window_m: f64) -> f64 {
    let here = positions[me];
    let n = positions.iter().filter(|&&p| (p - here).abs() <= window_m).count();
    if n <= 1 {
        0.0
    } else {
        n as f64 / (2.0 * window_m)
    }
}

/// Speed multiplier `1 - (1 - floor) * min(1, (rho / rho_c)^2)`.
pub fn congestion_factor(density: f64, params: &EngineParams) -> f64 {
    let x = (density / params.critical_density).powi(2).min(1.0);
    1.0 - (1.0 - params.min_speed_factor) * x
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Staying { elem: usize },
    Travelling { elem: usize, wait_left: u32, moved: u32, progress: f64, impeded: bool },
}

/// Where an agent is at the current minute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Whereabouts {
    NotEntered,
    Exited,
    AtNode(NodeIx),
    /// Offset measured from the edge's `from` node.
    OnEdge { edge: crate::net::EdgeIx, pos_m: f64, mode: Mode },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounts {
    pub not_entered: usize,
    pub at_node: usize,
    pub on_edge: usize,
    pub exited: usize,
}

impl StepCounts {
    pub fn total(&self) -> usize {
        self.not_entered + self.at_node + self.on_edge + self.exited
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    /// Index of the stay within the itinerary.
    pub element: usize,
    pub planned: u32,
    pub realized: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LotSeries {
    pub lot: NodeIx,
    pub capacity: u32,
    /// One sample per minute from day start to day end inclusive.
    pub occupied: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub agents: usize,
    pub steps: u32,
    pub pairwise_events: u64,
    pub indoor_contacts: f64,
    pub total_contacts: f64,
    pub mean_contacts_per_agent: f64,
    pub late_arrivals: usize,
    pub max_delay_min: u32,
    pub peak_parking: Vec<(String, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub ledger: ContactLedger,
    pub parking: Vec<LotSeries>,
    pub arrivals: Vec<Vec<Arrival>>,
    pub counts: Vec<StepCounts>,
    pub summary: Summary,
}

impl SimOutput {
    /// Occupied fraction of one lot at `minute`.
    pub fn parking_rate(&self, lot: usize, minute: u32) -> f64 {
        let s = &self.parking[lot];
        s.occupied[(minute - DAY_START_MIN) as usize] as f64 / s.capacity.max(1) as f64
    }

    pub fn write_parking_csv<W: Write>(&self, net: &MultilayerNetwork, out: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(out);
        writeln!(w, "minute,lot_id,occupied")?;
        for (k, minute) in (DAY_START_MIN..=DAY_END_MIN).enumerate() {
            for s in &self.parking {
                writeln!(w, "{minute},{},{}", net.node(s.lot).id, s.occupied[k])?;
            }
        }
        Ok(())
    }
}

/// Lockstep state of one simulated day.
pub struct Simulation<'a> {
    net: &'a MultilayerNetwork,
    agents: &'a [Agent],
    itineraries: &'a [Itinerary],
    params: &'a EngineParams,
    minute: u32,
    status: Vec<Status>,
    lots: Vec<NodeIx>,
    lot_slot: Vec<Option<usize>>,
    occupied: Vec<u32>,
    timers: PairTimers,
    pub ledger: ContactLedger,
    pub parking: Vec<LotSeries>,
    pub arrivals: Vec<Vec<Arrival>>,
    pub counts: Vec<StepCounts>,
    /// Node index to area for spaces where the indoor estimate applies.
    indoor_area: Vec<Option<f64>>,
}

fn leg(it: &Itinerary, elem: usize) -> &Leg {
    match &it.elements[elem] {
        Element::Leg(l) => l,
        Element::Stay(_) => panic!("element {elem} of agent {} is not a leg", it.agent),
    }
}

fn stay_depart(it: &Itinerary, elem: usize) -> Option<u32> {
    match &it.elements[elem] {
        Element::Stay(s) if elem + 1 < it.elements.len() => Some(s.depart),
        _ => None,
    }
}

impl<'a> Simulation<'a> {
    /// `itineraries[i]` belongs to `agents[i]`.
    pub fn new(net: &'a MultilayerNetwork, agents: &'a [Agent], itineraries: &'a [Itinerary], params: &'a EngineParams) -> Self {
        assert_eq!(agents.len(), itineraries.len(), "one itinerary per agent");
        let lots = net.nodes_of_kind(NodeKind::ParkingLot);
        let mut lot_slot = vec![None; net.node_count()];
        for (k, l) in lots.iter().enumerate() {
            lot_slot[l.idx()] = Some(k);
        }
        let parking = lots
            .iter()
            .map(|&lot| LotSeries { lot, capacity: net.node(lot).capacity.unwrap_or(0), occupied: vec![0] })
            .collect();
        let indoor_area = net
            .nodes()
            .iter()
            .map(|n| match n.kind {
                NodeKind::Building | NodeKind::FoodPlace => n.area_m2,
                _ => None,
            })
            .collect();
        let mut sim = Self {
            net,
            agents,
            itineraries,
            params,
            minute: DAY_START_MIN,
            status: vec![Status::Staying { elem: 0 }; agents.len()],
            occupied: vec![0; lots.len()],
            lots,
            lot_slot,
            timers: PairTimers::new(),
            ledger: ContactLedger::new(params.grid.geometry(net), agents.len()),
            parking,
            arrivals: vec![Vec::new(); agents.len()],
            counts: Vec::new(),
            indoor_area,
        };
        sim.counts.push(sim.step_counts());
        sim
    }

    pub fn minute(&self) -> u32 {
        self.minute
    }

    pub fn is_done(&self) -> bool {
        self.minute >= DAY_END_MIN
    }

    pub fn parking_occupied(&self) -> &[u32] {
        &self.occupied
    }

    pub fn lots(&self) -> &[NodeIx] {
        &self.lots
    }

    pub fn whereabouts(&self, agent: usize) -> Whereabouts {
        let it = &self.itineraries[agent];
        match self.status[agent] {
            Status::Staying { elem } => {
                if self.agents[agent].role.commutes() {
                    if elem == 0 {
                        return Whereabouts::NotEntered;
                    }
                    if elem + 1 == it.elements.len() {
                        return Whereabouts::Exited;
                    }
                }
                match &it.elements[elem] {
                    Element::Stay(s) => Whereabouts::AtNode(s.node),
                    Element::Leg(_) => unreachable!(),
                }
            }
            Status::Travelling { elem, wait_left, progress, .. } => {
                let l = leg(it, elem);
                if wait_left > 0 || l.path.steps.is_empty() {
                    // Waiting at the origin (bus stop or gate).
                    if elem == 1 && self.agents[agent].role.commutes() {
                        return Whereabouts::NotEntered;
                    }
                    return Whereabouts::AtNode(l.path.origin());
                }
                let (edge, pos_m) = self.edge_position(&l.path, progress);
                Whereabouts::OnEdge { edge, pos_m, mode: l.mode }
            }
        }
    }

    pub fn position(&self, agent: usize) -> Option<GeoPoint> {
        match self.whereabouts(agent) {
            Whereabouts::AtNode(n) => Some(self.net.node(n).pos),
            Whereabouts::OnEdge { edge, pos_m, .. } => {
                Some(Place::OnEdge { edge, pos_m }.geo(self.net))
            }
            _ => None,
        }
    }

    fn edge_position(&self, path: &crate::net::Path, progress: f64) -> (crate::net::EdgeIx, f64) {
        let mut acc = 0.0;
        for (k, s) in path.steps.iter().enumerate() {
            let len = self.net.edge(s.edge).length_m;
            if progress < acc + len || k + 1 == path.steps.len() {
                let along = (progress - acc).clamp(0.0, len);
                let pos = if s.forward { along } else { len - along };
                return (s.edge, pos);
            }
            acc += len;
        }
        unreachable!("empty path has no edge position")
    }

    fn step_counts(&self) -> StepCounts {
        let mut c = StepCounts::default();
        for a in 0..self.agents.len() {
            match self.whereabouts(a) {
                Whereabouts::NotEntered => c.not_entered += 1,
                Whereabouts::Exited => c.exited += 1,
                Whereabouts::AtNode(_) => c.at_node += 1,
                Whereabouts::OnEdge { .. } => c.on_edge += 1,
            }
        }
        c
    }

    fn arrive(&mut self, agent: usize, leg_elem: usize, at: u32) {
        let it = &self.itineraries[agent];
        let l = leg(it, leg_elem);
        if l.mode == Mode::Drive {
            if let Some(k) = self.lot_slot[l.path.destination().idx()] {
                self.occupied[k] += 1;
            }
        }
        let planned = match &it.elements[leg_elem + 1] {
            Element::Stay(s) => s.arrive,
            Element::Leg(_) => unreachable!(),
        };
        self.arrivals[agent].push(Arrival { element: leg_elem + 1, planned, realized: at });
        self.status[agent] = Status::Staying { elem: leg_elem + 1 };
    }

    fn is_instant(l: &Leg) -> bool {
        l.wait_min == 0 && l.path.length_m <= TRAVEL_EPSILON_M
    }

    /// Start every leg due at the current minute, hopping through instantaneous ones.
    fn depart(&mut self, agent: usize) {
        let t = self.minute;
        while let Status::Staying { elem } = self.status[agent] {
            let it = &self.itineraries[agent];
            match stay_depart(it, elem) {
                Some(d) if d <= t => {}
                _ => return,
            }
            let l = leg(it, elem + 1);
            if l.mode == Mode::Drive {
                if let Some(k) = self.lot_slot[l.path.origin().idx()] {
                    self.occupied[k] -= 1;
                }
            }
            if Self::is_instant(l) {
                self.arrive(agent, elem + 1, t);
            } else {
                self.status[agent] =
                    Status::Travelling { elem: elem + 1, wait_left: l.wait_min, moved: 0, progress: 0.0, impeded: false };
            }
        }
    }

    /// Walk-speed factors for all moving walkers, from positions frozen at step start.
    fn walking_factors(&self) -> Vec<f64> {
        let mut factor = vec![1.0; self.agents.len()];
        let mut by_edge: std::collections::BTreeMap<crate::net::EdgeIx, Vec<(usize, f64)>> = Default::default();
        for a in 0..self.agents.len() {
            if let Whereabouts::OnEdge { edge, pos_m, mode: Mode::Walk } = self.whereabouts(a) {
                by_edge.entry(edge).or_default().push((a, pos_m));
            }
        }
        let w = self.params.density_window_m;
        for group in by_edge.values_mut() {
            if group.len() < 2 {
                continue;
            }
            group.sort_by(|x, y| x.1.total_cmp(&y.1));
            let pos: Vec<f64> = group.iter().map(|g| g.1).collect();
            let (mut lo, mut hi) = (0, 0);
            for (k, &(a, p)) in group.iter().enumerate() {
                while pos[lo] < p - w {
                    lo += 1;
                }
                while hi < pos.len() && pos[hi] <= p + w {
                    hi += 1;
                }
                let n = hi - lo;
                let rho = if n <= 1 { 0.0 } else { n as f64 / (2.0 * w) };
                debug_assert!(k >= lo && k < hi);
                factor[a] = congestion_factor(rho, self.params);
            }
        }
        factor
    }

    /// Advance from the current minute to the next.
    pub fn step(&mut self) {
        if self.is_done() {
            return;
        }
        let t = self.minute;
        for a in 0..self.agents.len() {
            self.depart(a);
        }
        let factors = self.walking_factors();
        for a in 0..self.agents.len() {
            let Status::Travelling { elem, wait_left, moved, progress, impeded } = self.status[a] else {
                continue;
            };
            let l = leg(&self.itineraries[a], elem);
            let len = l.path.length_m;
            if wait_left > 0 {
                let wait_left = wait_left - 1;
                if wait_left == 0 && len <= TRAVEL_EPSILON_M {
                    self.arrive(a, elem, t + 1);
                } else {
                    self.status[a] = Status::Travelling { elem, wait_left, moved, progress, impeded };
                }
                continue;
            }
            let stride = l.speed_mps * 60.0;
            let f = if l.mode == Mode::Walk { factors[a] } else { 1.0 };
            let impeded = impeded || f < 1.0;
            let moved = moved + 1;
            // Unimpeded travel is computed in closed form so realized and planned minutes agree.
            let progress = if impeded { progress + stride * f } else { moved as f64 * stride };
            if progress >= len - TRAVEL_EPSILON_M {
                self.arrive(a, elem, t + 1);
            } else {
                self.status[a] = Status::Travelling { elem, wait_left: 0, moved, progress, impeded };
            }
        }
        self.minute = t + 1;
        self.measure_contacts();
        for (s, &o) in self.parking.iter_mut().zip(&self.occupied) {
            s.occupied.push(o);
        }
        self.counts.push(self.step_counts());
    }

    fn measure_contacts(&mut self) {
        let net = self.net;
        let mut observations = Vec::new();
        let mut indoor: std::collections::BTreeMap<NodeIx, Vec<usize>> = Default::default();
        for a in 0..self.agents.len() {
            match self.whereabouts(a) {
                Whereabouts::OnEdge { edge, pos_m, mode: Mode::Walk } => {
                    observations.push((a as u32, Place::OnEdge { edge, pos_m }))
                }
                Whereabouts::AtNode(node) => {
                    let kind = net.node(node).kind;
                    if self.indoor_area[node.idx()].is_some() {
                        indoor.entry(node).or_default().push(a);
                    } else if !kind.is_indoor() && kind != NodeKind::Gate {
                        observations.push((a as u32, Place::AtNode { node }));
                    }
                }
                _ => {}
            }
        }
        self.timers.update(&observations, net, &self.params.contact, &mut self.ledger);
        for (node, occupants) in indoor {
            let area = self.indoor_area[node.idx()].expect("indoor node has area");
            let inc = indoor_contact_increment(occupants.len() as u32, area, &self.params.contact)
                .expect("validated network has positive areas");
            self.ledger.record_indoor(&occupants, net.node(node).pos, inc);
        }
        self.ledger
            .display
            .diffuse_decay(self.params.grid.diffusion, self.params.grid.retention)
            .expect("validated grid parameters");
    }

    pub fn finish(self) -> SimOutput {
        let net = self.net;
        let mut late = 0;
        let mut max_delay = 0;
        for arr in &self.arrivals {
            for a in arr {
                if a.realized > a.planned {
                    late += 1;
                    max_delay = max_delay.max(a.realized - a.planned);
                }
            }
        }
        let total = self.ledger.total_by_agents();
        let summary = Summary {
            agents: self.agents.len(),
            steps: self.minute - DAY_START_MIN,
            pairwise_events: self.ledger.pairwise_events,
            indoor_contacts: self.ledger.indoor_total(),
            total_contacts: total,
            mean_contacts_per_agent: self.ledger.mean_per_agent(),
            late_arrivals: late,
            max_delay_min: max_delay,
            peak_parking: self
                .parking
                .iter()
                .map(|s| (net.node(s.lot).id.clone(), s.occupied.iter().copied().max().unwrap_or(0)))
                .collect(),
        };
        SimOutput { ledger: self.ledger, parking: self.parking, arrivals: self.arrivals, counts: self.counts, summary }
    }
}

/// Run the whole day. Deterministic: agents update in index order and all
/// within-minute decisions read the state frozen at the start of the minute.
pub fn run_day(net: &MultilayerNetwork, agents: &[Agent], itineraries: &[Itinerary], params: &EngineParams) -> SimOutput {
    let mut sim = Simulation::new(net, agents, itineraries, params);
    while !sim.is_done() {
        sim.step();
    }
    sim.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_examples() {
        assert_eq!(local_density(&[5.0], 0, 10.0), 0.0);
        assert_eq!(local_density(&[5.0, 50.0], 0, 10.0), 0.0);
        assert_eq!(local_density(&[5.0, 1.0, 9.0, 14.0, 15.0], 0, 10.0), 0.25);
    }

    #[test]
    fn congestion_examples() {
        let p = EngineParams::default();
        assert_eq!(congestion_factor(0.0, &p), 1.0);
        assert_eq!(congestion_factor(1.0, &p), 0.5);
        assert_eq!(congestion_factor(7.0, &p), 0.5);
        assert!((congestion_factor(0.5, &p) - 0.875).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn factor_bounded_and_monotone(a in 0.0f64..5.0, b in 0.0f64..5.0) {
                let p = EngineParams::default();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let (fl, fh) = (congestion_factor(lo, &p), congestion_factor(hi, &p));
                prop_assert!((0.5..=1.0).contains(&fl) && (0.5..=1.0).contains(&fh));
                prop_assert!(fh <= fl);
            }

            #[test]
            fn duplicating_walkers_never_speeds_anyone_up(pos in prop::collection::vec(0.0f64..100.0, 1..30)) {
                let p = EngineParams::default();
                let mut doubled = pos.clone();
                doubled.extend(pos.iter().copied());
                for k in 0..pos.len() {
                    let before = congestion_factor(local_density(&pos, k, 10.0), &p);
                    let after = congestion_factor(local_density(&doubled, k, 10.0), &p);
                    prop_assert!(after <= before);
                }
            }
        }
    }
}
