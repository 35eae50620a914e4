//! End-to-end acceptance checks. Run with `--nocapture` to see one PASS/FAIL
//! line per criterion.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use campus_sim::contact::{indoor_contacts, ContactLedger, ContactParams, Grid, GridParams, PairTimers, Place};
use campus_sim::experiments::{
    density_sweep, loglog_regression, r0_threshold, roi_optimal_density, ParkingMatrix, SweepCurve, SweepInput,
    PARKING_SAMPLE_MINUTES,
};
use campus_sim::net::{
    shortest_path, CampusDocument, EdgeDoc, GeoPoint, Layer, Mode, MultilayerNetwork, NetError, NodeDoc, NodeIx,
    NodeKind,
};
use campus_sim::scenario::Scenario;
use campus_sim::sim::run_day;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, ok: bool, detail: String) {
    println!("criterion {id:>2} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn scenario(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(rel)
}

fn load(rel: &str) -> (Scenario, Vec<campus_sim::plan::Itinerary>) {
    let s = Scenario::load(&scenario(rel), None).unwrap();
    let plans = s.plan(&s.router()).unwrap();
    (s, plans)
}

#[test]
fn c01_indoor_estimate_oracle() {
    let start = Instant::now();
    let p = ContactParams::default();
    let a = p.personal_disk_area_m2;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n: u32 = rng.gen_range(1..3000);
        let area: f64 = rng.gen_range(0.5..10_000.0);
        let nf = n as f64;
        let want = ((nf / (area / a) - 1.0) * nf / 2.0).max(0.0);
        let want = if n < 2 { 0.0 } else { want };
        let got = indoor_contacts(n, area, &p).unwrap();
        worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
        if want == 0.0 && got != 0.0 {
            worst = f64::INFINITY;
        }
    }
    let boundaries = (1..=1000u32).all(|n| {
        indoor_contacts(1, n as f64, &p).unwrap() == 0.0 && indoor_contacts(n, n as f64 * a, &p).unwrap() == 0.0
    });
    let elapsed = start.elapsed().as_secs_f64();
    report(
        1,
        "indoor estimate oracle",
        worst <= 1e-12 && boundaries && elapsed < 1.0,
        format!("max rel err {worst:.2e}, boundaries exact {boundaries}, {elapsed:.3}s"),
    );
}

#[test]
fn c02_r0_threshold() {
    let n = r0_threshold(4.0, 0.05).unwrap();
    report(2, "R0 threshold", n == 5.0, format!("n = {n}"));
}

fn random_network(rng: &mut ChaCha8Rng) -> MultilayerNetwork {
    let n = rng.gen_range(2..=12);
    let origin = GeoPoint::new(-33.9, 151.2);
    let nodes: Vec<NodeDoc> = (0..n)
        .map(|i| NodeDoc {
            id: format!("N{i}"),
            pos: origin.offset_m(rng.gen_range(0.0..800.0), rng.gen_range(0.0..800.0)),
            kind: NodeKind::Intersection,
            layers: vec![Layer::Road],
            area_m2: None,
            capacity: None,
        })
        .collect();
    let m = rng.gen_range(0..=n * 2);
    let edges = (0..m)
        .filter_map(|k| {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if a == b {
                return None;
            }
            let (pa, pb) = (nodes[a].pos, nodes[b].pos);
            let mid = origin.offset_m(rng.gen_range(0.0..800.0), rng.gen_range(0.0..800.0));
            Some(EdgeDoc {
                id: format!("e{k}"),
                from: nodes[a].id.clone(),
                to: nodes[b].id.clone(),
                layer: Layer::Road,
                directed: rng.gen_bool(0.5),
                polyline: vec![[pa.lat, pa.lon], [mid.lat, mid.lon], [pb.lat, pb.lon]],
            })
        })
        .collect();
    MultilayerNetwork::from_document(&CampusDocument { nodes, edges }).unwrap()
}

/// Shortest simple-path length by exhaustive enumeration.
fn enumerate(net: &MultilayerNetwork, src: NodeIx, dst: NodeIx) -> Option<f64> {
    fn go(net: &MultilayerNetwork, u: NodeIx, dst: NodeIx, seen: &mut [bool], acc: f64, best: &mut Option<f64>) {
        if u == dst {
            *best = Some(best.map_or(acc, |b| b.min(acc)));
            return;
        }
        for e in net.edges() {
            let step = |v: NodeIx, seen: &mut [bool], best: &mut Option<f64>| {
                if !seen[v.idx()] {
                    seen[v.idx()] = true;
                    go(net, v, dst, seen, acc + e.length_m, best);
                    seen[v.idx()] = false;
                }
            };
            if e.from == u {
                step(e.to, seen, best);
            }
            if e.to == u && !e.directed {
                step(e.from, seen, best);
            }
        }
    }
    let mut seen = vec![false; net.node_count()];
    seen[src.idx()] = true;
    let mut best = None;
    go(net, src, dst, &mut seen, 0.0, &mut best);
    best
}

#[test]
fn c03_routing_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut reachable, mut unreachable, mut bad) = (0, 0, Vec::new());
    for k in 0..50 {
        let net = random_network(&mut rng);
        for s in net.node_ixs() {
            for t in net.node_ixs() {
                match (enumerate(&net, s, t), shortest_path(&net, Mode::Drive, s, t)) {
                    (Some(want), Ok(p))
                        if (p.length_m - want).abs() <= 1e-9 * want.max(1.0)
                            && p.origin() == s
                            && p.destination() == t =>
                    {
                        reachable += 1
                    }
                    (None, Err(NetError::NoRoute { .. })) => unreachable += 1,
                    (want, got) => bad.push(format!("net {k} {s:?}->{t:?}: oracle {want:?}, router {got:?}")),
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        3,
        "routing oracle",
        bad.is_empty() && elapsed < 10.0,
        match bad.first() {
            None => format!("{reachable} reachable and {unreachable} unreachable pairs agree, {elapsed:.2}s"),
            Some(first) => format!("{} mismatches, first {first}", bad.len()),
        },
    );
}

#[test]
fn c04_contact_rule() {
    let doc = CampusDocument {
        nodes: ["A", "B"]
            .iter()
            .enumerate()
            .map(|(i, id)| NodeDoc {
                id: id.to_string(),
                pos: GeoPoint::new(0.0, 0.0).offset_m(0.0, 300.0 * i as f64),
                kind: NodeKind::Intersection,
                layers: vec![Layer::Walk],
                area_m2: None,
                capacity: None,
            })
            .collect(),
        edges: vec![EdgeDoc {
            id: "ab".into(),
            from: "A".into(),
            to: "B".into(),
            layer: Layer::Walk,
            directed: false,
            polyline: vec![[0.0, 0.0], [0.0, GeoPoint::new(0.0, 0.0).offset_m(0.0, 300.0).lon]],
        }],
    };
    let net = MultilayerNetwork::from_document(&doc).unwrap();
    let edge = net.lookup_edge("ab").unwrap();
    let params = ContactParams::default();
    let run = |gaps: &[Option<f64>]| {
        let mut ledger = ContactLedger::new(GridParams::default().geometry(&net), 2);
        let mut timers = PairTimers::new();
        for g in gaps {
            let mut obs = vec![(0, Place::OnEdge { edge, pos_m: 100.0 })];
            if let Some(g) = g {
                obs.push((1, Place::OnEdge { edge, pos_m: 100.0 + g }));
            }
            timers.update(&obs, &net, &params, &mut ledger);
        }
        ledger.pairwise_events
    };
    let close = |n| vec![Some(1.0); n];
    let mut reentry = close(10);
    reentry.push(None);
    reentry.extend(close(10));
    let cases = [
        ("1 m for 10 min", run(&close(10)), 1),
        ("1 m for 9 min", run(&close(9)), 0),
        ("2.5 m for 60 min", run(&vec![Some(2.5); 60]), 0),
        ("re-entry after separation", run(&reentry), 2),
        ("1 m for 20 min", run(&close(20)), 1),
    ];
    let ok = cases.iter().all(|c| c.1 == c.2);
    let detail = cases.iter().map(|c| format!("{} -> {}", c.0, c.1)).collect::<Vec<_>>().join("; ");
    report(4, "contact rule", ok, detail);
}

#[test]
fn c05_conservation_on_sample() {
    let (s, plans) = load("sample/sample.json");
    let out = run_day(&s.net, &s.agents, &plans, &s.config.engine);
    let n = s.agents.len();
    let agents_ok = out.counts.len() == 961 && out.counts.iter().all(|c| c.total() == n);
    let parking_ok = out.parking.iter().all(|l| {
        l.occupied.len() == 961 && l.occupied.iter().all(|&o| o <= l.capacity) && *l.occupied.last().unwrap() == 0
    });
    let pair_sum: u64 = out.ledger.pairwise_by_agent.iter().map(|&c| c as u64).sum();
    let indoor_sum: u64 = out.ledger.indoor_by_agent.iter().sum();
    let contacts_ok = pair_sum == 2 * out.ledger.pairwise_events && indoor_sum == out.ledger.indoor_units;
    report(
        5,
        "conservation on sample campus",
        agents_ok && parking_ok && contacts_ok && out.ledger.pairwise_events > 0 && indoor_sum > 0,
        format!(
            "{n} agents every step {agents_ok}, parking in bounds and empty at close {parking_ok}, \
             {pair_sum} pairwise credits for {} events, indoor units {indoor_sum} = {}",
            out.ledger.pairwise_events, out.ledger.indoor_units
        ),
    );
}

#[test]
fn c06_determinism() {
    let config = scenario("sample/sample.json");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let manifests: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| {
            let status = Command::new(env!("CARGO_BIN_EXE_campus-sim"))
                .args(["simulate", "--seed", "7", "--config"])
                .arg(&config)
                .arg("--out")
                .arg(d.path())
                .env_remove("CAMPUS_SIM_SEED")
                .status()
                .unwrap();
            assert!(status.success());
            std::fs::read(d.path().join("manifest.json")).unwrap()
        })
        .collect();
    let same = manifests[0] == manifests[1] && !manifests[0].is_empty();
    report(6, "determinism", same, format!("manifests identical: {same}, {} bytes", manifests[0].len()));
}

#[test]
fn c07_density_nonlinearity() {
    let start = Instant::now();
    let (s, plans) = load("sample/sample.json");
    let input = SweepInput { net: &s.net, agents: &s.agents, itineraries: &plans, engine: &s.config.engine };
    let curve = density_sweep(&input, &[0.25, 0.5, 1.0], 5, s.config.seed).unwrap();
    let norm = curve.normalized().unwrap();
    let at = |d: f64| norm.iter().find(|p| p.0 == d).unwrap().1;
    let monotone = curve.points.windows(2).all(|w| {
        let pooled = ((w[0].std.powi(2) + w[1].std.powi(2)) / 2.0).sqrt();
        w[1].mean_contacts >= w[0].mean_contacts - pooled
    });
    let elapsed = start.elapsed().as_secs_f64();
    report(
        7,
        "density reduction is nonlinear",
        at(0.5) < 0.45 && at(0.25) < 0.20 && monotone && elapsed < 300.0,
        format!("normalized 0.25 -> {:.3}, 0.5 -> {:.3}, monotone {monotone}, {elapsed:.1}s", at(0.25), at(0.5)),
    );
}

#[test]
fn c08_roi_on_quadratic() {
    let pairs: Vec<(f64, f64)> = (1..=20).map(|k| k as f64 * 0.05).map(|x| (x, x * x)).collect();
    let x = roi_optimal_density(&SweepCurve::from_pairs(&pairs)).unwrap();
    report(8, "ROI optimum on y = x^2", (x - 0.5).abs() <= 0.05 + 1e-12, format!("optimum at {x:.3}"));
}

#[test]
fn c09_regression_tool() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let values: Vec<Vec<f64>> = (0..10)
        .map(|_| {
            let level = rng.gen_range(0.0f64..6.0).exp();
            (0..6).map(|_| (level * rng.gen_range(0.9..1.1)).round()).collect()
        })
        .collect();
    let actual = ParkingMatrix {
        lots: (0..10).map(|i| format!("P{i}")).collect(),
        minutes: PARKING_SAMPLE_MINUTES.to_vec(),
        values: values.clone(),
    };
    let same = loglog_regression(&actual, &actual).unwrap().r_squared;
    let mut order: Vec<usize> = (0..10).collect();
    order.shuffle(&mut rng);
    let permuted = ParkingMatrix { values: order.iter().map(|&i| values[i].clone()).collect(), ..actual.clone() };
    let shuffled = loglog_regression(&actual, &permuted).unwrap().r_squared;
    report(
        9,
        "regression tool",
        (same - 1.0).abs() <= 1e-12 && shuffled < 0.1,
        format!("identical R2 = {same}, row-permuted R2 = {shuffled:.4}"),
    );
}

#[test]
fn c10_diffusion_and_decay() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut g = Grid::new(40, 50);
    for _ in 0..300 {
        g.add((rng.gen_range(0..40), rng.gen_range(0..50)), rng.gen_range(0.0..5.0));
    }
    let start_mass = g.mass();
    let mut conserved = g.clone();
    let mut worst_mass: f64 = 0.0;
    for _ in 0..500 {
        conserved.diffuse_decay(0.2, 1.0).unwrap();
        worst_mass = worst_mass.max((conserved.mass() - start_mass).abs() / start_mass);
    }
    let mut decayed = g.clone();
    let lambda: f64 = 0.97;
    for _ in 0..100 {
        decayed.diffuse_decay(0.0, lambda).unwrap();
    }
    let factor = lambda.powi(100);
    let worst_decay = g
        .values()
        .iter()
        .zip(decayed.values())
        .map(|(v0, v)| (v - v0 * factor).abs() / (v0 * factor).max(f64::MIN_POSITIVE))
        .filter(|e| e.is_finite())
        .fold(0.0, f64::max);
    report(
        10,
        "diffusion and decay",
        worst_mass <= 1e-9 && worst_decay <= 1e-12,
        format!("mass drift {worst_mass:.2e} over 500 steps, decay error {worst_decay:.2e}"),
    );
}

#[test]
fn c11_performance() {
    let (s, plans) = load("full_scale/full_scale.json");
    let vehicles = s.agents.iter().filter(|a| a.drives()).count();
    let t = Instant::now();
    let out = run_day(&s.net, &s.agents, &plans, &s.config.engine);
    let big = t.elapsed().as_secs_f64();

    let (small, small_plans) = load("sample/sample.json");
    let t = Instant::now();
    run_day(&small.net, &small.agents, &small_plans, &small.config.engine);
    let little = t.elapsed().as_secs_f64();

    report(
        11,
        "performance",
        out.summary.steps == 960 && s.agents.len() == 17_000 && vehicles == 10_000 && big < 300.0 && little < 10.0,
        format!(
            "{} agents, {vehicles} vehicles, 960 steps in {big:.1}s; sample {} agents in {little:.2}s",
            s.agents.len(),
            small.agents.len()
        ),
    );
}
