mod common;

use campus_sim::net::{load_campus_file, Mode, NodeIx, NodeKind, Router};
use campus_sim::pop::{
    assign_entry_gates, assign_parking, read_population, synthesize_population, validate_population, write_population,
    PopError, PopulationSpec, Role,
};
use campus_sim::scenario::read_json;
use common::{agent, scenario_path, Doc};

fn sample_spec() -> PopulationSpec {
    read_json(&scenario_path("sample/population_spec.json")).unwrap()
}

#[test]
fn zero_counts_give_empty_population() {
    let net = load_campus_file(&scenario_path("sample/campus.json")).unwrap();
    assert!(synthesize_population(&net, &PopulationSpec::empty(3)).unwrap().is_empty());
}

#[test]
fn same_seed_same_population() {
    let net = load_campus_file(&scenario_path("sample/campus.json")).unwrap();
    let mut spec = sample_spec();
    spec.seed = 99;
    let a = synthesize_population(&net, &spec).unwrap();
    let b = synthesize_population(&net, &spec).unwrap();
    assert_eq!(a, b);
    spec.seed = 100;
    assert_ne!(a, synthesize_population(&net, &spec).unwrap());
}

#[test]
fn csv_round_trip_preserves_agents() {
    let net = load_campus_file(&scenario_path("sample/campus.json")).unwrap();
    let agents = synthesize_population(&net, &sample_spec()).unwrap();
    let (mut ab, mut sb) = (Vec::new(), Vec::new());
    write_population(&net, &agents, &mut ab, &mut sb).unwrap();
    let back = read_population(&net, ab.as_slice(), sb.as_slice()).unwrap();
    assert_eq!(back, agents);
}

#[test]
fn full_scale_role_counts() {
    let net = load_campus_file(&scenario_path("full_scale/campus.json")).unwrap();
    let mut spec: PopulationSpec = read_json(&scenario_path("full_scale/population_spec.json")).unwrap();
    for bus_share in [0.0, 0.2] {
        spec.bus_share = bus_share;
        let agents = synthesize_population(&net, &spec).unwrap();
        assert_eq!(agents.len(), 17_000);
        let count = |r: Role| agents.iter().filter(|a| a.role == r).count();
        assert_eq!(count(Role::ResidentStudent), 7_000);
        assert_eq!(count(Role::CommuterStudent) + count(Role::Employee), 10_000);
        let drivers = agents.iter().filter(|a| a.drives()).count();
        assert_eq!(drivers, (10_000.0 * (1.0 - bus_share)).round() as usize);
        validate_population(&net, &agents).unwrap();
    }
}

#[test]
fn residents_need_beds() {
    let net = load_campus_file(&scenario_path("sample/campus.json")).unwrap();
    let mut spec = sample_spec();
    spec.n_resident_students = 100_000;
    assert!(matches!(synthesize_population(&net, &spec), Err(PopError::ResidenceCapacity { .. })));
}

/// Two lots at different distances from one building.
fn two_lots(near_cap: u32) -> campus_sim::net::MultilayerNetwork {
    let mut d = Doc::new();
    d.node("B", NodeKind::Building, 0.0, 0.0)
        .node("X", NodeKind::Intersection, 0.0, 100.0)
        .node("PA", NodeKind::ParkingLot, 0.0, 150.0)
        .node("PB", NodeKind::ParkingLot, 0.0, -400.0)
        .node("G", NodeKind::Gate, -200.0, 0.0)
        .capacity("PA", near_cap)
        .capacity("PB", 5)
        .walk("B", "X")
        .walk("X", "PA")
        .walk("B", "PB")
        .road("G", "PA")
        .road("G", "PB");
    d.build()
}

fn commuters(net: &campus_sim::net::MultilayerNetwork, n: u32) -> Vec<campus_sim::pop::Agent> {
    let (g, b) = (net.lookup("G").unwrap(), net.lookup("B").unwrap());
    (0..n)
        .map(|i| {
            let mut a = agent(i, Role::CommuterStudent, g, 1.4, 0, &[(600, 660, b)]);
            a.gate = Some(g);
            a
        })
        .collect()
}

#[test]
fn single_commuter_takes_the_only_space() {
    let net = two_lots(1);
    let mut agents = commuters(&net, 1);
    assign_parking(&mut agents, &net).unwrap();
    assert_eq!(agents[0].claimed_parking, Some(net.lookup("PA").unwrap()));
}

#[test]
fn second_commuter_overflows_to_next_nearest() {
    let net = two_lots(1);
    let mut agents = commuters(&net, 2);
    assign_parking(&mut agents, &net).unwrap();
    let (pa, pb) = (net.lookup("PA").unwrap(), net.lookup("PB").unwrap());
    assert_eq!(agents[0].claimed_parking, Some(pa));
    assert_eq!(agents[1].claimed_parking, Some(pb));

    // Brute force: among capacity-respecting assignments, agent 0 (served first)
    // gets its nearest lot and agent 1 the nearest lot still open.
    let router = Router::new(&net);
    let b = net.lookup("B").unwrap();
    let dist = |l: NodeIx| router.distances_to(Mode::Walk, b)[l.idx()];
    let lots = [pa, pb];
    let caps = [1u32, 5];
    let mut best: Option<(f64, f64, [usize; 2])> = None;
    for x in 0..2 {
        for y in 0..2 {
            let mut used = [0u32; 2];
            used[x] += 1;
            used[y] += 1;
            if used[0] > caps[0] || used[1] > caps[1] {
                continue;
            }
            let key = (dist(lots[x]), dist(lots[y]), [x, y]);
            if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                best = Some(key);
            }
        }
    }
    let [x, y] = best.unwrap().2;
    assert_eq!((agents[0].claimed_parking, agents[1].claimed_parking), (Some(lots[x]), Some(lots[y])));
}

#[test]
fn too_many_drivers_is_an_error() {
    let net = two_lots(1);
    let mut agents = commuters(&net, 7);
    assert!(matches!(assign_parking(&mut agents, &net), Err(PopError::ParkingExhausted { needed: 7, available: 6 })));
}

#[test]
fn one_gate_takes_everyone_and_residents_get_none() {
    let net = two_lots(5);
    let (g, b) = (net.lookup("G").unwrap(), net.lookup("B").unwrap());
    let mut agents = commuters(&net, 5);
    agents.push(agent(5, Role::ResidentStudent, b, 1.4, 0, &[]));
    assign_entry_gates(&mut agents, &net, 1).unwrap();
    assert!(agents[..5].iter().all(|a| a.gate == Some(g) && a.home == g));
    assert_eq!(agents[5].gate, None);
    assert_eq!(agents[5].home, b);
}

#[test]
fn four_gates_share_within_three_sigma() {
    let net = load_campus_file(&scenario_path("sample/campus.json")).unwrap();
    let gates = net.nodes_of_kind(NodeKind::Gate);
    assert_eq!(gates.len(), 4);
    let b = net.nodes_of_kind(NodeKind::Building)[0];
    let mut agents: Vec<_> = (0..10_000).map(|i| agent(i, Role::Employee, b, 1.4, 0, &[])).collect();
    assign_entry_gates(&mut agents, &net, 2024).unwrap();
    let sigma = (10_000.0f64 * 0.25 * 0.75).sqrt();
    for g in gates {
        let n = agents.iter().filter(|a| a.gate == Some(g)).count() as f64;
        assert!((n - 2500.0).abs() <= 3.0 * sigma, "gate {}: {n}", net.node(g).id);
    }
}

#[test]
fn sample_population_is_consistent() {
    let net = load_campus_file(&scenario_path("sample/campus.json")).unwrap();
    let agents = synthesize_population(&net, &sample_spec()).unwrap();
    validate_population(&net, &agents).unwrap();
    for a in &agents {
        assert!((1.2..=1.6).contains(&a.walk_speed));
        assert!(a.punctuality_buffer <= 10);
        match a.role {
            Role::ResidentStudent => {
                assert!(a.gate.is_none() && a.claimed_parking.is_none());
                assert_eq!(net.node(a.home).kind, NodeKind::ResidenceHall);
                assert!((1..=4).contains(&a.schedule.len()));
            }
            Role::CommuterStudent => assert!((1..=4).contains(&a.schedule.len())),
            Role::Employee => {
                let first = a.schedule.first().unwrap().start;
                let last = a.schedule.last().unwrap().end;
                assert!((480..=720).contains(&(last - first)), "work block {first}-{last}");
            }
        }
        if a.role.commutes() {
            assert_eq!(Some(a.home), a.gate);
            assert_eq!(a.drives(), a.claimed_parking.is_some());
        }
    }
}
