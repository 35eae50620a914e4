//! Scenario files: one JSON document naming the campus, the population source and
//! every model parameter.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::net::{load_campus_file, MultilayerNetwork, NetError, Router};
use crate::plan::{build_all, check_itinerary, Itinerary, PlanError, PlannerParams};
use crate::pop::{read_population, synthesize_population, validate_population, Agent, PopError, PopulationSpec};
use crate::sim::EngineParams;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Json { path: String, message: String },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Pop(#[from] PopError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationSource {
    /// Synthesize from a spec file; the scenario seed replaces the spec's own.
    Spec { spec: PathBuf },
    Files { agents: PathBuf, schedules: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub campus: PathBuf,
    pub population: PopulationSource,
    #[serde(default)]
    pub planner: PlannerParams,
    #[serde(default)]
    pub engine: EngineParams,
    #[serde(default)]
    pub seed: u64,
}

fn open(path: &Path) -> Result<BufReader<File>, ScenarioError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ScenarioError> {
    serde_json::from_reader(open(path)?)
        .map_err(|e| ScenarioError::Json { path: path.display().to_string(), message: e.to_string() })
}

impl ScenarioConfig {
    pub fn check(&self) -> Result<(), ScenarioError> {
        self.planner.check().map_err(ScenarioError::Parameter)?;
        self.engine.check().map_err(ScenarioError::Parameter)
    }
}

/// A loaded scenario: network and population, ready to plan.
pub struct Scenario {
    pub config: ScenarioConfig,
    /// Directory relative paths in the config resolve against.
    pub base_dir: PathBuf,
    pub net: MultilayerNetwork,
    pub agents: Vec<Agent>,
}

impl Scenario {
    /// Load a scenario file. `seed` overrides the configured seed.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self, ScenarioError> {
        let mut config: ScenarioConfig = read_json(path)?;
        if let Some(s) = seed {
            config.seed = s;
        }
        config.check()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let net = load_campus_file(&base_dir.join(&config.campus))?;
        let agents = match &config.population {
            PopulationSource::Spec { spec } => {
                let mut spec: PopulationSpec = read_json(&base_dir.join(spec))?;
                spec.seed = config.seed;
                synthesize_population(&net, &spec)?
            }
            PopulationSource::Files { agents, schedules } => {
                read_population(&net, open(&base_dir.join(agents))?, open(&base_dir.join(schedules))?)?
            }
        };
        Ok(Self { config, base_dir, net, agents })
    }

    pub fn router(&self) -> Router<'_> {
        Router::new(&self.net)
    }

    pub fn plan(&self, router: &Router) -> Result<Vec<Itinerary>, ScenarioError> {
        Ok(build_all(&self.agents, router, &self.config.planner)?)
    }

    /// Named structural checks, each passing or carrying its violations.
    pub fn checks(&self) -> Vec<(&'static str, Result<(), String>)> {
        let mut out = vec![("campus network", Ok(()))];
        let ids_dense = self.agents.iter().enumerate().all(|(i, a)| a.id as usize == i);
        out.push((
            "agent ids are 0..N",
            if ids_dense { Ok(()) } else { Err("agent ids must be consecutive from 0".into()) },
        ));
        out.push(("population", validate_population(&self.net, &self.agents).map_err(|e| e.to_string())));
        let router = self.router();
        let plans = match self.plan(&router) {
            Ok(p) => {
                out.push(("itineraries plan", Ok(())));
                p
            }
            Err(e) => {
                out.push(("itineraries plan", Err(e.to_string())));
                return out;
            }
        };
        let bad: Vec<String> = plans
            .iter()
            .zip(&self.agents)
            .filter_map(|(it, a)| check_itinerary(it, a, &router).err().map(|e| format!("agent {}: {e}", a.id)))
            .take(10)
            .collect();
        out.push(("itineraries valid", if bad.is_empty() { Ok(()) } else { Err(bad.join("; ")) }));
        out
    }
}
