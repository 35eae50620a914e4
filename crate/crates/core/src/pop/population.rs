use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::net::{Mode, MultilayerNetwork, NodeIx, NodeKind, Router};
use crate::stream;

use super::PopError;

/// First simulated minute (6:30am).
pub const DAY_START_MIN: u32 = 390;
/// Last simulated minute (10:30pm).
pub const DAY_END_MIN: u32 = 1350;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ResidentStudent,
    CommuterStudent,
    Employee,
}

impl Role {
    pub fn commutes(self) -> bool {
        !matches!(self, Role::ResidentStudent)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::ResidentStudent => "resident_student",
            Role::CommuterStudent => "commuter_student",
            Role::Employee => "employee",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "resident_student" => Some(Role::ResidentStudent),
            "commuter_student" => Some(Role::CommuterStudent),
            "employee" => Some(Role::Employee),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleItem {
    pub start: u32,
    pub end: u32,
    pub location: NodeIx,
}

impl ScheduleItem {
    fn overlaps(&self, other: &ScheduleItem) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: u32,
    pub role: Role,
    /// Residence hall for residents, entry gate for commuters.
    pub home: NodeIx,
    pub gate: Option<NodeIx>,
    pub walk_speed: f64,
    pub punctuality_buffer: u32,
    pub claimed_parking: Option<NodeIx>,
    pub uses_bus: bool,
    pub schedule: Vec<ScheduleItem>,
}

impl Agent {
    pub fn drives(&self) -> bool {
        self.role.commutes() && !self.uses_bus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSection {
    pub location: String,
    pub start: u32,
    pub end: u32,
    pub seats: u32,
}

/// Generates the same set of time slots in every building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCatalog {
    pub slots: Vec<[u32; 2]>,
    pub sections_per_building: u32,
    pub seats: u32,
}

impl ClassCatalog {
    pub fn sections(&self, net: &MultilayerNetwork) -> Vec<ClassSection> {
        let mut out = Vec::new();
        for b in net.nodes_of_kind(NodeKind::Building) {
            for &[start, end] in &self.slots {
                for _ in 0..self.sections_per_building {
                    out.push(ClassSection { location: net.node(b).id.clone(), start, end, seats: self.seats });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub n_resident_students: u32,
    pub n_commuter_students: u32,
    pub n_employees: u32,
    #[serde(default)]
    pub classes: Vec<ClassSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_catalog: Option<ClassCatalog>,
    /// Fraction of commuting agents who ride the bus instead of driving.
    #[serde(default = "defaults::bus_share")]
    pub bus_share: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::walk_speed")]
    pub walk_speed: [f64; 2],
    #[serde(default = "defaults::buffer")]
    pub punctuality_buffer: [u32; 2],
    #[serde(default = "defaults::classes_per_student")]
    pub classes_per_student: [u32; 2],
    #[serde(default = "defaults::employee_start")]
    pub employee_start: u32,
    #[serde(default = "defaults::employee_end")]
    pub employee_end: u32,
    #[serde(default = "defaults::employee_jitter")]
    pub employee_jitter: u32,
    /// Midday break splitting the work block, in minutes; 0 keeps it whole.
    #[serde(default = "defaults::employee_break")]
    pub employee_break: u32,
}

mod defaults {
    pub fn bus_share() -> f64 {
        0.2
    }
    pub fn walk_speed() -> [f64; 2] {
        [1.2, 1.6]
    }
    pub fn buffer() -> [u32; 2] {
        [0, 10]
    }
    pub fn classes_per_student() -> [u32; 2] {
        [1, 4]
    }
    pub fn employee_start() -> u32 {
        510
    }
    pub fn employee_end() -> u32 {
        1020
    }
    pub fn employee_jitter() -> u32 {
        60
    }
    pub fn employee_break() -> u32 {
        60
    }
}

impl PopulationSpec {
    pub fn empty(seed: u64) -> Self {
        Self {
            n_resident_students: 0,
            n_commuter_students: 0,
            n_employees: 0,
            classes: Vec::new(),
            class_catalog: None,
            bus_share: defaults::bus_share(),
            seed,
            walk_speed: defaults::walk_speed(),
            punctuality_buffer: defaults::buffer(),
            classes_per_student: defaults::classes_per_student(),
            employee_start: defaults::employee_start(),
            employee_end: defaults::employee_end(),
            employee_jitter: defaults::employee_jitter(),
            employee_break: defaults::employee_break(),
        }
    }

    pub fn total(&self) -> u32 {
        self.n_resident_students + self.n_commuter_students + self.n_employees
    }

    pub fn commuting(&self) -> u32 {
        self.n_commuter_students + self.n_employees
    }

    pub fn bus_riders(&self) -> u32 {
        (self.commuting() as f64 * self.bus_share).round() as u32
    }

    fn check(&self) -> Result<(), PopError> {
        let bad = |m: &str| Err(PopError::InvalidSpec(m.to_string()));
        if !(0.0..=1.0).contains(&self.bus_share) {
            return bad("bus_share must be in [0, 1]");
        }
        let [lo, hi] = self.walk_speed;
        if !(1.0..=2.0).contains(&lo) || !(1.0..=2.0).contains(&hi) || lo > hi {
            return bad("walk_speed range must lie within [1.0, 2.0] m/s");
        }
        if self.punctuality_buffer[0] > self.punctuality_buffer[1] {
            return bad("punctuality_buffer range is inverted");
        }
        let [cmin, cmax] = self.classes_per_student;
        if cmin == 0 || cmin > cmax {
            return bad("classes_per_student must satisfy 1 <= min <= max");
        }
        let j = self.employee_jitter;
        if self.employee_start < DAY_START_MIN + j
            || self.employee_end + j > DAY_END_MIN
            || self.employee_start + self.employee_break + 2 * j >= self.employee_end
        {
            return bad("employee work block does not fit the day");
        }
        Ok(())
    }
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[u32]) -> Option<usize> {
    let total: u64 = weights.iter().map(|&w| w as u64).sum();
    if total == 0 {
        return None;
    }
    let mut x = rng.gen_range(0..total);
    for (i, &w) in weights.iter().enumerate() {
        if x < w as u64 {
            return Some(i);
        }
        x -= w as u64;
    }
    unreachable!()
}

struct Section {
    location: NodeIx,
    start: u32,
    end: u32,
    seats: u32,
}

fn resolve_sections(net: &MultilayerNetwork, spec: &PopulationSpec) -> Result<Vec<Section>, PopError> {
    let mut listed = spec.classes.clone();
    if let Some(cat) = &spec.class_catalog {
        listed.extend(cat.sections(net));
    }
    listed
        .iter()
        .map(|c| {
            let location = net.lookup(&c.location)?;
            if net.node(location).kind != NodeKind::Building {
                return Err(PopError::InvalidSpec(format!("class location {} is not a building", c.location)));
            }
            if c.start < DAY_START_MIN || c.end > DAY_END_MIN || c.start >= c.end {
                return Err(PopError::InvalidSpec(format!(
                    "class at {} [{}, {}) lies outside the day window",
                    c.location, c.start, c.end
                )));
            }
            Ok(Section { location, start: c.start, end: c.end, seats: c.seats })
        })
        .collect()
}

/// Build the full population: roles, homes, behavior parameters, schedules, bus
/// riders, entry gates, and parking claims. Deterministic in `spec.seed`.
pub fn synthesize_population(net: &MultilayerNetwork, spec: &PopulationSpec) -> Result<Vec<Agent>, PopError> {
    spec.check()?;
    let n_res = spec.n_resident_students as usize;
    let n_com = spec.n_commuter_students as usize;
    let n_emp = spec.n_employees as usize;
    let total = n_res + n_com + n_emp;
    if total == 0 {
        return Ok(Vec::new());
    }

    // Residence halls, weighted by remaining beds so no hall overflows.
    let halls = net.nodes_of_kind(NodeKind::ResidenceHall);
    let mut beds: Vec<u32> = halls.iter().map(|&h| net.node(h).capacity.unwrap_or(0)).collect();
    let available: u64 = beds.iter().map(|&b| b as u64).sum();
    if (n_res as u64) > available {
        return Err(PopError::ResidenceCapacity { needed: n_res as u64, available });
    }
    let mut rng = stream(spec.seed, 1);
    let mut homes = Vec::with_capacity(n_res);
    for _ in 0..n_res {
        let i = pick_weighted(&mut rng, &beds).expect("capacity checked");
        beds[i] -= 1;
        homes.push(halls[i]);
    }

    let mut rng = stream(spec.seed, 2);
    let mut agents: Vec<Agent> = (0..total)
        .map(|i| {
            let role = if i < n_res {
                Role::ResidentStudent
            } else if i < n_res + n_com {
                Role::CommuterStudent
            } else {
                Role::Employee
            };
            let [slo, shi] = spec.walk_speed;
            let walk_speed = if shi > slo { rng.gen_range(slo..shi) } else { slo };
            let [blo, bhi] = spec.punctuality_buffer;
            Agent {
                id: i as u32,
                role,
                home: if i < n_res { homes[i] } else { NodeIx(0) },
                gate: None,
                walk_speed,
                punctuality_buffer: rng.gen_range(blo..=bhi),
                claimed_parking: None,
                uses_bus: false,
                schedule: Vec::new(),
            }
        })
        .collect();

    assign_classes(net, spec, &mut agents[..n_res + n_com])?;
    assign_work(net, spec, &mut agents[n_res + n_com..])?;

    // Bus riders: an exact count drawn uniformly from the commuting agents.
    let mut rng = stream(spec.seed, 4);
    let riders = spec.bus_riders() as usize;
    for k in index::sample(&mut rng, n_com + n_emp, riders) {
        agents[n_res + k].uses_bus = true;
    }

    assign_entry_gates(&mut agents, net, spec.seed)?;
    assign_parking(&mut agents, net)?;
    Ok(agents)
}

fn assign_classes(net: &MultilayerNetwork, spec: &PopulationSpec, students: &mut [Agent]) -> Result<(), PopError> {
    if students.is_empty() {
        return Ok(());
    }
    let mut sections = resolve_sections(net, spec)?;
    let mut rng = stream(spec.seed, 3);
    let [cmin, cmax] = spec.classes_per_student;
    let wants: Vec<u32> = students.iter().map(|_| rng.gen_range(cmin..=cmax)).collect();
    let demand: u64 = wants.iter().map(|&k| k as u64).sum();
    let seats: u64 = sections.iter().map(|s| s.seats as u64).sum();
    if demand > seats {
        return Err(PopError::InsufficientSeats { demand, seats });
    }

    let mut weights = vec![0u32; sections.len()];
    for (agent, &want) in students.iter_mut().zip(&wants) {
        let mut chosen: Vec<ScheduleItem> = Vec::with_capacity(want as usize);
        for _ in 0..want {
            for (w, s) in weights.iter_mut().zip(&sections) {
                let item = ScheduleItem { start: s.start, end: s.end, location: s.location };
                *w = if chosen.iter().any(|c| c.overlaps(&item)) { 0 } else { s.seats };
            }
            let Some(i) = pick_weighted(&mut rng, &weights) else { break };
            sections[i].seats -= 1;
            chosen.push(ScheduleItem { start: sections[i].start, end: sections[i].end, location: sections[i].location });
        }
        if chosen.is_empty() {
            return Err(PopError::InsufficientSeats { demand, seats });
        }
        chosen.sort_by_key(|c| (c.start, c.end));
        agent.schedule = chosen;
    }
    Ok(())
}

fn assign_work(net: &MultilayerNetwork, spec: &PopulationSpec, employees: &mut [Agent]) -> Result<(), PopError> {
    if employees.is_empty() {
        return Ok(());
    }
    let buildings = net.nodes_of_kind(NodeKind::Building);
    if buildings.is_empty() {
        return Err(PopError::InvalidSpec("employees need at least one building".into()));
    }
    let mut rng = stream(spec.seed, 5);
    let j = spec.employee_jitter as i64;
    for agent in employees {
        let office = *buildings.choose(&mut rng).unwrap();
        let shift = rng.gen_range(-j..=j);
        let start = (spec.employee_start as i64 + shift) as u32;
        let end = (spec.employee_end as i64 + shift) as u32;
        agent.schedule = if spec.employee_break == 0 {
            vec![ScheduleItem { start, end, location: office }]
        } else {
            let noon = ((720 + shift / 2) as u32).clamp(start + 30, end.saturating_sub(spec.employee_break + 30).max(start + 30));
            vec![
                ScheduleItem { start, end: noon, location: office },
                ScheduleItem { start: noon + spec.employee_break, end, location: office },
            ]
        };
    }
    Ok(())
}

/// Give every commuting agent a uniformly random gate; residents keep none.
pub fn assign_entry_gates(agents: &mut [Agent], net: &MultilayerNetwork, seed: u64) -> Result<(), PopError> {
    let gates = net.nodes_of_kind(NodeKind::Gate);
    let mut rng = stream(seed, 6);
    for agent in agents.iter_mut() {
        if !agent.role.commutes() {
            agent.gate = None;
            continue;
        }
        let gate = *gates.choose(&mut rng).ok_or(PopError::NoGates)?;
        agent.gate = Some(gate);
        agent.home = gate;
    }
    Ok(())
}

/// Claim a space for each driving commuter in the walk-nearest lot (to the first
/// scheduled location) that still has room. Agents are served in id order; equal
/// distances go to the smaller lot id.
pub fn assign_parking(agents: &mut [Agent], net: &MultilayerNetwork) -> Result<(), PopError> {
    let lots = net.nodes_of_kind(NodeKind::ParkingLot);
    let mut free: Vec<u32> = lots.iter().map(|&l| net.node(l).capacity.unwrap_or(0)).collect();
    let needed = agents.iter().filter(|a| a.drives()).count() as u64;
    let available: u64 = free.iter().map(|&c| c as u64).sum();
    if needed > available {
        return Err(PopError::ParkingExhausted { needed, available });
    }
    let router = Router::new(net);
    let mut order: Vec<usize> = (0..agents.len()).collect();
    order.sort_by_key(|&i| agents[i].id);
    for i in order {
        let agent = &mut agents[i];
        agent.claimed_parking = None;
        if !agent.drives() {
            continue;
        }
        let best = match agent.schedule.first() {
            Some(first) => {
                let dist = router.distances_from(Mode::Walk, first.location);
                (0..lots.len())
                    .filter(|&k| free[k] > 0)
                    .min_by(|&a, &b| dist[lots[a].idx()].total_cmp(&dist[lots[b].idx()]).then(a.cmp(&b)))
            }
            None => (0..lots.len()).find(|&k| free[k] > 0),
        }
        .expect("capacity checked");
        free[best] -= 1;
        agent.claimed_parking = Some(lots[best]);
    }
    Ok(())
}

/// Structural checks on a population against its network.
pub fn validate_population(net: &MultilayerNetwork, agents: &[Agent]) -> Result<(), PopError> {
    let bad = |a: &Agent, m: &str| Err(PopError::InvalidAgent { agent: a.id, reason: m.to_string() });
    let mut lot_use = vec![0u32; net.node_count()];
    let mut hall_use = vec![0u32; net.node_count()];
    for a in agents {
        if !(1.0..=2.0).contains(&a.walk_speed) {
            return bad(a, "walk_speed outside [1.0, 2.0] m/s");
        }
        match a.role {
            Role::ResidentStudent => {
                if a.gate.is_some() || a.claimed_parking.is_some() || a.uses_bus {
                    return bad(a, "residents have no gate, parking, or bus");
                }
                if net.node(a.home).kind != NodeKind::ResidenceHall {
                    return bad(a, "resident home must be a residence hall");
                }
                hall_use[a.home.idx()] += 1;
            }
            _ => {
                let Some(gate) = a.gate else { return bad(a, "commuter without gate") };
                if net.node(gate).kind != NodeKind::Gate || a.home != gate {
                    return bad(a, "commuter home must be its gate");
                }
                if a.claimed_parking.is_some() == a.uses_bus {
                    return bad(a, "commuter needs exactly one of parking or bus");
                }
                if let Some(lot) = a.claimed_parking {
                    if net.node(lot).kind != NodeKind::ParkingLot {
                        return bad(a, "claimed parking is not a parking lot");
                    }
                    lot_use[lot.idx()] += 1;
                }
            }
        }
        let mut prev_end = DAY_START_MIN;
        for item in &a.schedule {
            if item.start < prev_end || item.start >= item.end || item.end > DAY_END_MIN {
                return bad(a, "schedule items must be sorted, non-overlapping, and inside the day");
            }
            if !net.node(item.location).walk {
                return bad(a, "schedule location is not on the walk layer");
            }
            prev_end = item.end;
        }
    }
    for n in net.node_ixs() {
        let node = net.node(n);
        let used = lot_use[n.idx()].max(hall_use[n.idx()]);
        if used > node.capacity.unwrap_or(0) && used > 0 {
            return Err(PopError::OverCapacity { node: node.id.clone(), used, capacity: node.capacity.unwrap_or(0) });
        }
    }
    Ok(())
}
