//! Population CSV files: one row per agent plus a companion schedule table.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::net::MultilayerNetwork;

use super::{Agent, PopError, Role, ScheduleItem};

#[derive(Debug, Serialize, Deserialize)]
struct AgentRow {
    id: u32,
    role: String,
    home: String,
    gate: String,
    parking: String,
    uses_bus: bool,
    walk_speed: f64,
    buffer: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleRow {
    agent_id: u32,
    start_min: u32,
    end_min: u32,
    location: String,
}

fn csv_err(e: csv::Error) -> PopError {
    PopError::Csv(e.to_string())
}

pub fn write_population<W: Write, S: Write>(
    net: &MultilayerNetwork,
    agents: &[Agent],
    agents_out: W,
    schedule_out: S,
) -> Result<(), PopError> {
    let name = |n: Option<crate::net::NodeIx>| n.map(|n| net.node(n).id.clone()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(agents_out);
    for a in agents {
        w.serialize(AgentRow {
            id: a.id,
            role: a.role.as_str().to_string(),
            home: net.node(a.home).id.clone(),
            gate: name(a.gate),
            parking: name(a.claimed_parking),
            uses_bus: a.uses_bus,
            walk_speed: a.walk_speed,
            buffer: a.punctuality_buffer,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| PopError::Csv(e.to_string()))?;

    let mut w = csv::Writer::from_writer(schedule_out);
    for a in agents {
        for s in &a.schedule {
            w.serialize(ScheduleRow {
                agent_id: a.id,
                start_min: s.start,
                end_min: s.end,
                location: net.node(s.location).id.clone(),
            })
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| PopError::Csv(e.to_string()))
}

pub fn read_population<A: Read, S: Read>(
    net: &MultilayerNetwork,
    agents_in: A,
    schedule_in: S,
) -> Result<Vec<Agent>, PopError> {
    let opt = |s: &str| -> Result<_, PopError> {
        if s.is_empty() {
            Ok(None)
        } else {
            Ok(Some(net.lookup(s)?))
        }
    };
    let mut agents = Vec::new();
    for row in csv::Reader::from_reader(agents_in).deserialize::<AgentRow>() {
        let row = row.map_err(csv_err)?;
        let role = Role::parse(&row.role)
            .ok_or_else(|| PopError::Csv(format!("agent {}: unknown role {}", row.id, row.role)))?;
        agents.push(Agent {
            id: row.id,
            role,
            home: net.lookup(&row.home)?,
            gate: opt(&row.gate)?,
            walk_speed: row.walk_speed,
            punctuality_buffer: row.buffer,
            claimed_parking: opt(&row.parking)?,
            uses_bus: row.uses_bus,
            schedule: Vec::new(),
        });
    }
    agents.sort_by_key(|a| a.id);
    if agents.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(PopError::Csv("duplicate agent id".into()));
    }
    for row in csv::Reader::from_reader(schedule_in).deserialize::<ScheduleRow>() {
        let row = row.map_err(csv_err)?;
        let k = agents
            .binary_search_by_key(&row.agent_id, |a| a.id)
            .map_err(|_| PopError::Csv(format!("schedule row for unknown agent {}", row.agent_id)))?;
        agents[k].schedule.push(ScheduleItem {
            start: row.start_min,
            end: row.end_min,
            location: net.lookup(&row.location)?,
        });
    }
    for a in &mut agents {
        a.schedule.sort_by_key(|s| (s.start, s.end));
    }
    Ok(agents)
}
