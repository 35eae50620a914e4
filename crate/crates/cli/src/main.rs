use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use campus_sim::contact::Grid;
use campus_sim::experiments::{
    density_sweep, parking_openings, recommend_density, thin_population, EpiParams, SweepInput,
};
use campus_sim::net::load_campus_file;
use campus_sim::pop::{synthesize_campus, synthesize_population, write_population, CampusSpec, PopulationSpec};
use campus_sim::scenario::{read_json, Scenario};
use campus_sim::sim::{Simulation, Whereabouts};
use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "campus-sim", version, about = "Campus population movement and close-contact simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a scenario and run every structural check.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "CAMPUS_SIM_SEED")]
        seed: Option<u64>,
    },
    /// Run one simulated day and write its artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "CAMPUS_SIM_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Keep this fraction of agents, chosen at random.
        #[arg(long)]
        density: Option<f64>,
        /// Also write every agent's position for every minute.
        #[arg(long)]
        trace: bool,
    },
    /// Re-run the day at several population densities.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "CAMPUS_SIM_SEED")]
        seed: Option<u64>,
        #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
        fractions: String,
        #[arg(long, default_value_t = 5)]
        replicates: usize,
        /// Infectious period in days.
        #[arg(long, default_value_t = 4.0)]
        d: f64,
        /// Infection probability per contact.
        #[arg(long = "pi", default_value_t = 0.05)]
        p_i: f64,
        #[arg(long, env = "CAMPUS_SIM_JOBS")]
        jobs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic inputs.
    #[command(subcommand)]
    Synth(Synth),
}

#[derive(Subcommand)]
enum Synth {
    /// Campus network document from a geometry spec.
    Campus {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Agent and schedule CSVs for a campus.
    Population {
        #[arg(long)]
        campus: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        agents_out: PathBuf,
        #[arg(long)]
        schedules_out: PathBuf,
    },
}

/// Failure that maps to exit status 1 after its report has been printed.
#[derive(Debug)]
struct ValidationFailed;

impl std::fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("validation failed")
    }
}

impl std::error::Error for ValidationFailed {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ValidationFailed>() => ExitCode::from(1),
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate { config, seed } => validate(&config, seed),
        Command::Simulate { config, seed, out, density, trace } => simulate(&config, seed, &out, density, trace),
        Command::Sweep { config, seed, fractions, replicates, d, p_i, jobs, out } => {
            let fractions = parse_fractions(&fractions)?;
            if replicates == 0 {
                return Err(usage("--replicates must be at least 1"));
            }
            if let Some(j) = jobs {
                rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global()?;
            }
            sweep(&config, seed, &fractions, replicates, EpiParams { d, p_i }, &out)
        }
        Command::Synth(Synth::Campus { spec, seed, out }) => {
            let spec: CampusSpec = match spec {
                Some(p) => read_json(&p)?,
                None => CampusSpec::default(),
            };
            let doc = synthesize_campus(&spec, seed)?;
            write_file(&out, doc.to_json().as_bytes())?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Synth(Synth::Population { campus, spec, seed, agents_out, schedules_out }) => {
            let net = load_campus_file(&campus)?;
            let mut spec: PopulationSpec = read_json(&spec)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let agents = synthesize_population(&net, &spec)?;
            write_population(&net, &agents, create(&agents_out)?, create(&schedules_out)?)?;
            println!("wrote {} agents", agents.len());
            Ok(())
        }
    }
}

fn parse_fractions(s: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let f: f64 = part.trim().parse().map_err(|_| usage(format!("bad fraction {part:?}")))?;
        if !(f > 0.0 && f <= 1.0) {
            return Err(usage(format!("fraction {f} must be in (0, 1]")));
        }
        out.push(f);
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}

fn validate(config: &Path, seed: Option<u64>) -> Result<()> {
    let scenario = match Scenario::load(config, seed) {
        Ok(s) => s,
        Err(e) => {
            println!("FAIL load scenario: {e}");
            return Err(ValidationFailed.into());
        }
    };
    let mut ok = true;
    for (name, result) in scenario.checks() {
        match result {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                ok = false;
                println!("FAIL {name}: {e}");
            }
        }
    }
    if ok {
        Ok(())
    } else {
        Err(ValidationFailed.into())
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    bytes: u64,
    sha256: String,
}

/// Hash every listed artifact in `dir` into `manifest.json`.
fn write_manifest(dir: &Path, files: &[&str]) -> Result<()> {
    let mut entries = Vec::new();
    for &f in files {
        let data = fs::read(dir.join(f))?;
        entries.push(ManifestEntry { file: f.to_string(), bytes: data.len() as u64, sha256: format!("{:x}", Sha256::digest(&data)) });
    }
    entries.sort_by(|a, b| a.file.cmp(&b.file));
    let mut text = serde_json::to_string_pretty(&entries)?;
    text.push('\n');
    write_file(&dir.join("manifest.json"), text.as_bytes())
}

fn write_grid(dir: &Path, stem: &str, grid: &Grid) -> Result<()> {
    let mut f = create(&dir.join(format!("{stem}.csv")))?;
    grid.write_csv(&mut f)?;
    f.flush()?;
    let mut f = create(&dir.join(format!("{stem}.pgm")))?;
    grid.write_pgm(&mut f)?;
    f.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    seed: u64,
    density: f64,
    #[serde(flatten)]
    summary: &'a campus_sim::sim::Summary,
    pairwise_contacts_by_agents: u64,
    indoor_contacts_by_agents: f64,
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path, density: Option<f64>, trace: bool) -> Result<()> {
    let density = density.unwrap_or(1.0);
    if !(density > 0.0 && density <= 1.0) {
        return Err(usage(format!("density must be in (0, 1], got {density}")));
    }
    let scenario = Scenario::load(config, seed)?;
    let router = scenario.router();
    let plans = scenario.plan(&router)?;
    let seed = scenario.config.seed;
    let (agents, plans) = if density < 1.0 {
        thin_population(&scenario.agents, &plans, density, seed)
    } else {
        (scenario.agents.clone(), plans)
    };
    let net = &scenario.net;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut sim = Simulation::new(net, &agents, &plans, &scenario.config.engine);
    let mut trace_out = if trace {
        let mut w = create(&out.join("trace.csv"))?;
        writeln!(w, "minute,agent_id,state,lat,lon")?;
        Some(w)
    } else {
        None
    };
    loop {
        if let Some(w) = trace_out.as_mut() {
            for (k, a) in agents.iter().enumerate() {
                let state = match sim.whereabouts(k) {
                    Whereabouts::NotEntered => "not_entered",
                    Whereabouts::Exited => "exited",
                    Whereabouts::AtNode(_) => "at_node",
                    Whereabouts::OnEdge { .. } => "on_edge",
                };
                match sim.position(k) {
                    Some(p) => writeln!(w, "{},{},{state},{},{}", sim.minute(), a.id, p.lat, p.lon)?,
                    None => writeln!(w, "{},{},{state},,", sim.minute(), a.id)?,
                }
            }
        }
        if sim.is_done() {
            break;
        }
        sim.step();
    }
    if let Some(mut w) = trace_out {
        w.flush()?;
    }
    let output = sim.finish();

    let summary = SimulateSummary {
        seed,
        density,
        summary: &output.summary,
        pairwise_contacts_by_agents: output.ledger.pairwise_by_agent.iter().map(|&c| c as u64).sum(),
        indoor_contacts_by_agents: (0..output.ledger.indoor_by_agent.len()).map(|a| output.ledger.indoor_of(a)).sum(),
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write_file(&out.join("summary.json"), text.as_bytes())?;

    let mut f = create(&out.join("parking.csv"))?;
    output.write_parking_csv(net, &mut f)?;
    f.flush()?;
    let mut f = create(&out.join("parking_openings.csv"))?;
    parking_openings(&output, net)?.write_csv(&mut f)?;
    f.flush()?;
    write_grid(out, "heatmap_cumulative", &output.ledger.cumulative)?;
    write_grid(out, "heatmap_display", &output.ledger.display)?;

    let mut files = vec![
        "summary.json",
        "parking.csv",
        "parking_openings.csv",
        "heatmap_cumulative.csv",
        "heatmap_cumulative.pgm",
        "heatmap_display.csv",
        "heatmap_display.pgm",
    ];
    if trace {
        files.push("trace.csv");
    }
    write_manifest(out, &files)?;
    println!(
        "simulated {} agents for {} steps: {:.3} contacts per agent per day",
        output.summary.agents, output.summary.steps, output.summary.mean_contacts_per_agent
    );
    Ok(())
}

fn sweep(config: &Path, seed: Option<u64>, fractions: &[f64], replicates: usize, epi: EpiParams, out: &Path) -> Result<()> {
    let scenario = Scenario::load(config, seed)?;
    let router = scenario.router();
    let plans = scenario.plan(&router)?;
    let input = SweepInput { net: &scenario.net, agents: &scenario.agents, itineraries: &plans, engine: &scenario.config.engine };
    let curve = density_sweep(&input, fractions, replicates, scenario.config.seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut f = create(&out.join("sweep.csv"))?;
    curve.write_csv(&mut f)?;
    f.flush()?;

    let rec = match recommend_density(&curve, epi) {
        Ok(r) => {
            match r.recommendation {
                Some(x) => println!("recommended density: {x:.3} (ROI {:.3}, contact threshold {})", r.roi_density, r.contact_threshold),
                None => println!("{}; ROI-optimal density {:.3}", r.note, r.roi_density),
            }
            serde_json::to_value(&r)?
        }
        Err(e) => {
            println!("no recommendation: {e}");
            let threshold = campus_sim::experiments::r0_threshold(epi.d, epi.p_i).ok();
            serde_json::json!({ "epi": epi, "contact_threshold": threshold, "error": e.to_string() })
        }
    };
    let mut text = serde_json::to_string_pretty(&rec)?;
    text.push('\n');
    write_file(&out.join("recommendation.json"), text.as_bytes())?;
    write_manifest(out, &["sweep.csv", "recommendation.json"])
}
