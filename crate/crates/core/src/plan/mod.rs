//! Day planning: turns an agent's schedule into a timed itinerary of stays and
//! travel legs, with lunch trips and mid-day returns to the residence hall.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::net::{minutes_for, Mode, NetError, NodeIx, NodeKind, Path, Router};
use crate::pop::{Agent, Role, DAY_END_MIN, DAY_START_MIN};

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("agent {agent}: {source}")]
    Route {
        agent: u32,
        #[source]
        source: NetError,
    },
    #[error("agent {agent}: schedule item [{start}, {end}) outside the simulated day")]
    OutsideWindow { agent: u32, start: u32, end: u32 },
    #[error("agent {agent}: return home at minute {arrive} is after the end of the day")]
    ReturnTooLate { agent: u32, arrive: u32 },
    #[error("agent {agent}: {reason}")]
    Agent { agent: u32, reason: String },
    #[error("no {0} reachable on the walk layer")]
    NoAmenity(NodeKind),
    #[error("itinerary export: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerParams {
    /// Lunch must overlap this window, minutes from midnight.
    pub lunch_window: [u32; 2],
    pub lunch_duration: u32,
    pub lunch_min_gap: u32,
    /// Net time at the hall required before a resident goes home between classes.
    pub home_break_min: u32,
    pub vehicle_speed_mps: f64,
    pub bus_speed_mps: f64,
    pub bus_wait_min: u32,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            lunch_window: [660, 840],
            lunch_duration: 30,
            lunch_min_gap: 45,
            home_break_min: 90,
            vehicle_speed_mps: 8.0,
            bus_speed_mps: 6.0,
            bus_wait_min: 5,
        }
    }
}

impl PlannerParams {
    pub fn check(&self) -> Result<(), String> {
        if self.lunch_window[0] >= self.lunch_window[1] {
            return Err("lunch_window must be increasing".into());
        }
        if !(self.vehicle_speed_mps > 0.0) || !(self.bus_speed_mps > 0.0) {
            return Err("vehicle and bus speeds must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    Scheduled,
    Lunch,
    HomeBreak,
}

/// A timed presence the agent intends, before travel is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Activity {
    pub location: NodeIx,
    pub start: u32,
    pub end: u32,
    pub kind: ActivityKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StayPurpose {
    Home,
    Scheduled,
    Lunch,
    HomeBreak,
    /// Zero-length mode switch at a parking lot or bus stop.
    Transfer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stay {
    pub node: NodeIx,
    pub arrive: u32,
    pub depart: u32,
    pub purpose: StayPurpose,
    /// Start of the earliest scheduled item served by this stay.
    pub scheduled_start: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    pub path: Arc<Path>,
    pub mode: Mode,
    pub speed_mps: f64,
    /// Minutes spent at the origin before moving (bus boarding).
    pub wait_min: u32,
    pub depart: u32,
    pub planned_arrive: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Stay(Stay),
    Leg(Leg),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Itinerary {
    pub agent: u32,
    pub elements: Vec<Element>,
}

impl Itinerary {
    pub fn stays(&self) -> impl Iterator<Item = &Stay> {
        self.elements.iter().filter_map(|e| match e {
            Element::Stay(s) => Some(s),
            Element::Leg(_) => None,
        })
    }

    pub fn legs(&self) -> impl Iterator<Item = &Leg> {
        self.elements.iter().filter_map(|e| match e {
            Element::Leg(l) => Some(l),
            Element::Stay(_) => None,
        })
    }
}

fn walk_minutes(router: &Router, agent: &Agent, from: NodeIx, to: NodeIx) -> Result<(Arc<Path>, u32), PlanError> {
    let path = router.path(Mode::Walk, from, to).map_err(|source| PlanError::Route { agent: agent.id, source })?;
    let t = crate::net::travel_time(&path, agent.walk_speed).map_err(|source| PlanError::Route { agent: agent.id, source })?;
    Ok((path, t))
}

/// Walk-nearest node of `kind`; ties go to the smaller node id.
pub fn nearest_amenity(router: &Router, from: NodeIx, kind: NodeKind) -> Result<(NodeIx, f64), PlanError> {
    let net = router.network();
    let dist = router.distances_from(Mode::Walk, from);
    net.nodes_of_kind(kind)
        .into_iter()
        .filter(|n| dist[n.idx()].is_finite())
        .map(|n| (n, dist[n.idx()]))
        .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| net.id_rank(a.0).cmp(&net.id_rank(b.0))))
        .ok_or(PlanError::NoAmenity(kind))
}

/// The agent's scheduled items as activities, validated against the day window.
pub fn scheduled_activities(agent: &Agent) -> Result<Vec<Activity>, PlanError> {
    let mut acts: Vec<Activity> = agent
        .schedule
        .iter()
        .map(|s| {
            if s.start < DAY_START_MIN || s.end > DAY_END_MIN || s.start >= s.end {
                return Err(PlanError::OutsideWindow { agent: agent.id, start: s.start, end: s.end });
            }
            Ok(Activity { location: s.location, start: s.start, end: s.end, kind: ActivityKind::Scheduled })
        })
        .collect::<Result<_, _>>()?;
    acts.sort_by_key(|a| (a.start, a.end));
    if acts.windows(2).any(|w| w[1].start < w[0].end) {
        return Err(PlanError::Agent { agent: agent.id, reason: "overlapping schedule items".into() });
    }
    Ok(acts)
}

/// Insert one lunch stay in the first free gap between activities that is long
/// enough, overlaps the lunch window, and leaves time to walk there and back.
pub fn insert_lunch(
    plan: &[Activity],
    agent: &Agent,
    router: &Router,
    params: &PlannerParams,
) -> Result<Vec<Activity>, PlanError> {
    let [win_lo, win_hi] = params.lunch_window;
    for i in 0..plan.len().saturating_sub(1) {
        let (prev, next) = (&plan[i], &plan[i + 1]);
        let (gap_lo, gap_hi) = (prev.end, next.start);
        if gap_hi < gap_lo + params.lunch_min_gap || gap_hi <= win_lo || gap_lo >= win_hi {
            continue;
        }
        let Ok((food, _)) = nearest_amenity(router, prev.location, NodeKind::FoodPlace) else {
            return Ok(plan.to_vec());
        };
        let (_, t_there) = walk_minutes(router, agent, prev.location, food)?;
        let (_, t_back) = walk_minutes(router, agent, food, next.location)?;
        let earliest = gap_lo + t_there;
        let latest = gap_hi.saturating_sub(t_back + agent.punctuality_buffer + params.lunch_duration);
        if latest < earliest {
            continue;
        }
        let start = earliest.max(win_lo).min(latest);
        let mut out = plan.to_vec();
        out.insert(
            i + 1,
            Activity { location: food, start, end: start + params.lunch_duration, kind: ActivityKind::Lunch },
        );
        return Ok(out);
    }
    Ok(plan.to_vec())
}

/// For residents, fill each long enough gap with a stay at their residence hall.
pub fn insert_home_break(
    plan: &[Activity],
    agent: &Agent,
    router: &Router,
    params: &PlannerParams,
) -> Result<Vec<Activity>, PlanError> {
    if agent.role != Role::ResidentStudent {
        return Ok(plan.to_vec());
    }
    let home = agent.home;
    let mut out: Vec<Activity> = Vec::with_capacity(plan.len() * 2);
    for (i, act) in plan.iter().enumerate() {
        out.push(*act);
        let Some(next) = plan.get(i + 1) else { break };
        if act.location == home || next.location == home {
            continue;
        }
        let (_, t_out) = walk_minutes(router, agent, act.location, home)?;
        let (_, t_back) = walk_minutes(router, agent, home, next.location)?;
        let gap = next.start.saturating_sub(act.end);
        if gap < params.home_break_min + t_out + t_back {
            continue;
        }
        let start = act.end + t_out;
        let end = next.start.saturating_sub(t_back + agent.punctuality_buffer).max(start);
        out.push(Activity { location: home, start, end, kind: ActivityKind::HomeBreak });
    }
    Ok(out)
}

struct Timeline<'r, 'a> {
    router: &'r Router<'a>,
    agent: &'r Agent,
    elements: Vec<Element>,
    /// Earliest minute the agent may leave the current stay.
    free_from: u32,
}

impl Timeline<'_, '_> {
    fn current(&mut self) -> &mut Stay {
        match self.elements.last_mut() {
            Some(Element::Stay(s)) => s,
            _ => unreachable!("timeline always ends in a stay between appends"),
        }
    }

    fn here(&mut self) -> NodeIx {
        self.current().node
    }

    /// Close the current stay at `depart` and travel along `path`.
    fn travel(&mut self, path: Arc<Path>, speed: f64, wait: u32, depart: u32, purpose: StayPurpose, stay_until: u32) {
        let t = wait + minutes_for(path.length_m, speed);
        let depart = depart.max(self.free_from);
        self.current().depart = depart;
        let arrive = depart + t;
        let mode = path.mode;
        let node = path.destination();
        self.elements.push(Element::Leg(Leg { path, mode, speed_mps: speed, wait_min: wait, depart, planned_arrive: arrive }));
        self.elements.push(Element::Stay(Stay {
            node,
            arrive,
            depart: stay_until.max(arrive),
            purpose,
            scheduled_start: None,
        }));
        self.free_from = stay_until.max(arrive);
    }

    fn walk_path(&self, from: NodeIx, to: NodeIx) -> Result<Arc<Path>, PlanError> {
        self.router
            .path(Mode::Walk, from, to)
            .map_err(|source| PlanError::Route { agent: self.agent.id, source })
    }

    fn drive_path(&self, from: NodeIx, to: NodeIx) -> Result<Arc<Path>, PlanError> {
        self.router
            .path(Mode::Drive, from, to)
            .map_err(|source| PlanError::Route { agent: self.agent.id, source })
    }
}

fn purpose_of(kind: ActivityKind) -> StayPurpose {
    match kind {
        ActivityKind::Scheduled => StayPurpose::Scheduled,
        ActivityKind::Lunch => StayPurpose::Lunch,
        ActivityKind::HomeBreak => StayPurpose::HomeBreak,
    }
}

/// Bus stop used by a rider entering at `gate`: nearest by road distance, ties by id.
pub fn bus_stop_for(router: &Router, gate: NodeIx) -> Option<NodeIx> {
    let net = router.network();
    let dist = router.distances_from(Mode::Drive, gate);
    net.nodes_of_kind(NodeKind::BusStop)
        .into_iter()
        .filter(|s| dist[s.idx()].is_finite())
        .min_by(|a, b| dist[a.idx()].total_cmp(&dist[b.idx()]).then_with(|| net.id_rank(*a).cmp(&net.id_rank(*b))))
}

/// Expand an agent's schedule into a full, contiguous itinerary.
pub fn build_itinerary(agent: &Agent, router: &Router, params: &PlannerParams) -> Result<Itinerary, PlanError> {
    let plan = scheduled_activities(agent)?;
    let plan = insert_lunch(&plan, agent, router, params)?;
    let plan = insert_home_break(&plan, agent, router, params)?;
    expand(agent, &plan, router, params)
}

/// Lay out legs and stays for an already decided activity plan.
pub fn expand(agent: &Agent, plan: &[Activity], router: &Router, params: &PlannerParams) -> Result<Itinerary, PlanError> {
    let home = agent.home;
    let mut tl = Timeline {
        router,
        agent,
        elements: vec![Element::Stay(Stay {
            node: home,
            arrive: DAY_START_MIN,
            depart: DAY_END_MIN,
            purpose: StayPurpose::Home,
            scheduled_start: None,
        })],
        free_from: DAY_START_MIN,
    };
    if plan.is_empty() {
        return Ok(Itinerary { agent: agent.id, elements: tl.elements });
    }

    // Commuters: the transfer node and the vehicle leg on either end of the day.
    let transfer = if agent.role.commutes() {
        let gate = agent.gate.ok_or_else(|| PlanError::Agent { agent: agent.id, reason: "commuter without gate".into() })?;
        if agent.uses_bus {
            let stop = bus_stop_for(router, gate)
                .ok_or_else(|| PlanError::Agent { agent: agent.id, reason: "no bus stop reachable from gate".into() })?;
            Some((stop, params.bus_speed_mps, params.bus_wait_min))
        } else {
            let lot = agent
                .claimed_parking
                .ok_or_else(|| PlanError::Agent { agent: agent.id, reason: "driver without claimed parking".into() })?;
            Some((lot, params.vehicle_speed_mps, 0))
        }
    } else {
        None
    };

    for (i, act) in plan.iter().enumerate() {
        let buffer = if act.kind == ActivityKind::Scheduled { agent.punctuality_buffer } else { 0 };
        let target = act.start.saturating_sub(buffer);
        let purpose = purpose_of(act.kind);
        if i == 0 {
            if let Some((hub, speed, wait)) = transfer {
                let drive = tl.drive_path(home, hub)?;
                let walk = tl.walk_path(hub, act.location)?;
                let t_drive = wait + minutes_for(drive.length_m, speed);
                let t_walk = minutes_for(walk.length_m, agent.walk_speed);
                let depart = target.saturating_sub(t_drive + t_walk).max(DAY_START_MIN);
                tl.travel(drive, speed, wait, depart, StayPurpose::Transfer, 0);
                tl.travel(walk, agent.walk_speed, 0, 0, purpose, act.end);
                tl.current().scheduled_start = (act.kind == ActivityKind::Scheduled).then_some(act.start);
                continue;
            }
        }
        let here = tl.here();
        if here == act.location {
            tl.free_from = tl.free_from.max(act.end);
            let stay = tl.current();
            stay.depart = stay.depart.max(act.end);
            if act.kind == ActivityKind::Scheduled && stay.scheduled_start.is_none() {
                stay.scheduled_start = Some(act.start);
            }
            continue;
        }
        let path = tl.walk_path(here, act.location)?;
        let t = minutes_for(path.length_m, agent.walk_speed);
        let depart = target.saturating_sub(t).max(DAY_START_MIN);
        tl.travel(path, agent.walk_speed, 0, depart, purpose, act.end);
        tl.current().scheduled_start = (act.kind == ActivityKind::Scheduled).then_some(act.start);
    }

    // Return home at the end of the last activity.
    let last_end = tl.free_from;
    let here = tl.here();
    match transfer {
        Some((hub, speed, wait)) => {
            let walk = tl.walk_path(here, hub)?;
            tl.travel(walk, agent.walk_speed, 0, last_end, StayPurpose::Transfer, 0);
            let drive = tl.drive_path(hub, home)?;
            tl.travel(drive, speed, wait, 0, StayPurpose::Home, DAY_END_MIN);
        }
        None => {
            let walk = tl.walk_path(here, home)?;
            tl.travel(walk, agent.walk_speed, 0, last_end, StayPurpose::Home, DAY_END_MIN);
        }
    }
    let arrive = tl.current().arrive;
    if arrive > DAY_END_MIN {
        return Err(PlanError::ReturnTooLate { agent: agent.id, arrive });
    }
    Ok(Itinerary { agent: agent.id, elements: tl.elements })
}

/// Plan every agent, in parallel, preserving input order.
pub fn build_all(agents: &[Agent], router: &Router, params: &PlannerParams) -> Result<Vec<Itinerary>, PlanError> {
    use rayon::prelude::*;
    agents.par_iter().map(|a| build_itinerary(a, router, params)).collect()
}

/// Check contiguity, anchoring, and mode legality of an itinerary.
pub fn check_itinerary(it: &Itinerary, agent: &Agent, router: &Router) -> Result<(), String> {
    let net = router.network();
    let els = &it.elements;
    let first = match els.first() {
        Some(Element::Stay(s)) => s,
        _ => return Err("itinerary must start with a stay".into()),
    };
    let last = match els.last() {
        Some(Element::Stay(s)) => s,
        _ => return Err("itinerary must end with a stay".into()),
    };
    if first.node != agent.home || last.node != agent.home {
        return Err("itinerary must start and end at home".into());
    }
    if first.arrive != DAY_START_MIN || last.depart != DAY_END_MIN {
        return Err("itinerary must span the whole day".into());
    }
    let mut switches = 0;
    for (k, w) in els.windows(3).enumerate().step_by(2) {
        let (Element::Stay(a), Element::Leg(l), Element::Stay(b)) = (&w[0], &w[1], &w[2]) else {
            return Err(format!("element {k}: stays and legs must alternate"));
        };
        if l.depart != a.depart || l.planned_arrive != b.arrive || a.arrive > a.depart {
            return Err(format!("element {k}: timeline is not contiguous"));
        }
        if l.path.origin() != a.node || l.path.destination() != b.node {
            return Err(format!("element {k}: leg endpoints do not match stays"));
        }
        for s in &l.path.steps {
            if net.edge(s.edge).layer != l.mode.layer() {
                return Err(format!("element {k}: {} leg uses an edge of another layer", l.mode));
            }
        }
    }
    if els.len().is_multiple_of(2) {
        return Err("stays and legs must alternate".into());
    }
    let legs: Vec<(usize, &Leg)> = els
        .iter()
        .enumerate()
        .filter_map(|(k, e)| match e {
            Element::Leg(l) => Some((k, l)),
            Element::Stay(_) => None,
        })
        .collect();
    for pair in legs.windows(2) {
        let ((k, a), (_, b)) = (pair[0], pair[1]);
        if a.mode != b.mode {
            if !net.node(a.path.destination()).kind.is_mode_switch() {
                return Err(format!("element {k}: mode switch outside a parking lot or bus stop"));
            }
            switches += 1;
        }
    }
    let expected = if agent.role.commutes() && !agent.schedule.is_empty() { 2 } else { 0 };
    if switches != expected {
        return Err(format!("expected {expected} mode switches, found {switches}"));
    }
    Ok(())
}

/// CSV dump: agent_id, element_index, type, node/path, depart_min, arrive_min.
pub fn write_itineraries<W: Write>(router: &Router, itineraries: &[Itinerary], out: W) -> Result<(), PlanError> {
    let net = router.network();
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "agent_id,element_index,type,location,depart_min,arrive_min")?;
    for it in itineraries {
        for (k, el) in it.elements.iter().enumerate() {
            match el {
                Element::Stay(s) => {
                    writeln!(out, "{},{},stay,{},{},{}", it.agent, k, net.node(s.node).id, s.depart, s.arrive)?
                }
                Element::Leg(l) => {
                    let route: Vec<&str> = l.path.nodes.iter().map(|&n| net.node(n).id.as_str()).collect();
                    writeln!(out, "{},{},{},{},{},{}", it.agent, k, l.mode, route.join(">"), l.depart, l.planned_arrive)?
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
