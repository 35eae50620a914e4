//! Analyses over simulation runs: parking calibration, density sweeps and the
//! density recommendation drawn from them.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::net::MultilayerNetwork;
use crate::plan::Itinerary;
use crate::pop::Agent;
use crate::sim::{run_day, EngineParams, SimOutput};
use crate::stream;

/// Sample minutes for parking openings: every two hours from 8:00 to 18:00.
pub const PARKING_SAMPLE_MINUTES: [u32; 6] = [480, 600, 720, 840, 960, 1080];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ExperimentError {
    #[error("matrix shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("regression needs at least 3 cells, got {0}")]
    TooFewCells(usize),
    #[error("negative value {0} in parking matrix")]
    NegativeValue(f64),
    #[error("regressor has no variance")]
    NoVariance,
    #[error("occupancy series for lot {0} is too short")]
    MissingSeries(String),
    #[error("fraction {0} keeps no agents")]
    EmptyPopulation(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parking matrix: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkingMatrix {
    pub lots: Vec<String>,
    pub minutes: Vec<u32>,
    /// `values[lot][time]`, open spaces.
    pub values: Vec<Vec<f64>>,
}

impl ParkingMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.lots.len(), self.minutes.len())
    }

    /// CSV with a `lot_id` column followed by one column per sample minute.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["lot_id".to_string()];
        header.extend(self.minutes.iter().map(|m| m.to_string()));
        w.write_record(&header).map_err(|e| ExperimentError::Csv(e.to_string()))?;
        for (lot, row) in self.lots.iter().zip(&self.values) {
            let mut rec = vec![lot.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| ExperimentError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| ExperimentError::Csv(e.to_string()))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, ExperimentError> {
        let err = |e: csv::Error| ExperimentError::Csv(e.to_string());
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(err)?.clone();
        let minutes = header
            .iter()
            .skip(1)
            .map(|h| h.trim().parse::<u32>().map_err(|_| ExperimentError::Csv(format!("bad minute column {h:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let mut m = ParkingMatrix { lots: Vec::new(), minutes, values: Vec::new() };
        for rec in r.records() {
            let rec = rec.map_err(err)?;
            m.lots.push(rec.get(0).unwrap_or_default().to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.trim().parse::<f64>().map_err(|_| ExperimentError::Csv(format!("bad value {v:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != m.minutes.len() {
                return Err(ExperimentError::Csv(format!("row for {} has {} values", m.lots.last().unwrap(), row.len())));
            }
            m.values.push(row);
        }
        Ok(m)
    }
}

/// Open spaces (capacity minus occupied) per lot at the six sample minutes.
pub fn parking_openings(out: &SimOutput, net: &MultilayerNetwork) -> Result<ParkingMatrix, ExperimentError> {
    let mut m = ParkingMatrix { lots: Vec::new(), minutes: PARKING_SAMPLE_MINUTES.to_vec(), values: Vec::new() };
    for s in &out.parking {
        let id = net.node(s.lot).id.clone();
        let row = PARKING_SAMPLE_MINUTES
            .iter()
            .map(|&t| {
                let k = (t - crate::pop::DAY_START_MIN) as usize;
                s.occupied.get(k).map(|&o| s.capacity.saturating_sub(o) as f64)
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ExperimentError::MissingSeries(id.clone()))?;
        m.lots.push(id);
        m.values.push(row);
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub cells: usize,
}

/// Least squares of `ln(1 + simulated)` on `ln(1 + actual)` over all cells.
pub fn loglog_regression(actual: &ParkingMatrix, simulated: &ParkingMatrix) -> Result<Regression, ExperimentError> {
    let (sa, ss) = (actual.values.len(), simulated.values.len());
    let ca = actual.values.first().map_or(0, Vec::len);
    let cs = simulated.values.first().map_or(0, Vec::len);
    if sa != ss || ca != cs || actual.values.iter().chain(&simulated.values).any(|r| r.len() != ca) {
        return Err(ExperimentError::ShapeMismatch((sa, ca), (ss, cs)));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (ra, rs) in actual.values.iter().zip(&simulated.values) {
        for (&a, &s) in ra.iter().zip(rs) {
            if a < 0.0 || s < 0.0 {
                return Err(ExperimentError::NegativeValue(a.min(s)));
            }
            xs.push(a.ln_1p());
            ys.push(s.ln_1p());
        }
    }
    let n = xs.len();
    if n < 3 {
        return Err(ExperimentError::TooFewCells(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(ExperimentError::NoVariance);
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(Regression { slope, intercept: my - slope * mx, r_squared, cells: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub density: f64,
    pub mean_contacts: f64,
    pub std: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self {
            points: pairs
                .iter()
                .map(|&(density, mean_contacts)| SweepPoint { density, mean_contacts, std: 0.0, replicates: 1 })
                .collect(),
        }
    }

    /// Means divided by the mean at density 1.0 (or the densest point).
    pub fn normalized(&self) -> Result<Vec<(f64, f64)>, ExperimentError> {
        let top = self
            .points
            .iter()
            .max_by(|a, b| a.density.total_cmp(&b.density))
            .ok_or_else(|| ExperimentError::Invalid("empty curve".into()))?;
        if !(top.mean_contacts > 0.0) {
            return Err(ExperimentError::Invalid("curve is zero at its densest point".into()));
        }
        Ok(self.points.iter().map(|p| (p.density, p.mean_contacts / top.mean_contacts)).collect())
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        let e = |e: csv::Error| ExperimentError::Csv(e.to_string());
        w.write_record(["density", "mean_contacts", "std"]).map_err(e)?;
        for p in &self.points {
            w.write_record([p.density.to_string(), p.mean_contacts.to_string(), p.std.to_string()]).map_err(e)?;
        }
        w.flush().map_err(|e| ExperimentError::Csv(e.to_string()))
    }
}

/// Everything needed to re-run a planned day on a subset of its agents.
pub struct SweepInput<'a> {
    pub net: &'a MultilayerNetwork,
    pub agents: &'a [Agent],
    pub itineraries: &'a [Itinerary],
    pub engine: &'a EngineParams,
}

/// Keep `round(fraction * N)` agents chosen uniformly at random, preserving order.
pub fn thin_population(agents: &[Agent], itineraries: &[Itinerary], fraction: f64, seed: u64) -> (Vec<Agent>, Vec<Itinerary>) {
    let n = agents.len();
    let keep = ((fraction * n as f64).round() as usize).min(n);
    let mut picked = index::sample(&mut stream(seed, 11), n, keep).into_vec();
    picked.sort_unstable();
    let a = picked.iter().map(|&i| agents[i].clone()).collect();
    let it = picked.iter().map(|&i| itineraries[i].clone()).collect();
    (a, it)
}

/// Mean contacts per surviving agent after thinning the population to `fraction`.
pub fn thinned_run(input: &SweepInput, fraction: f64, seed: u64) -> Result<f64, ExperimentError> {
    let (agents, its) = thin_population(input.agents, input.itineraries, fraction, seed);
    if agents.is_empty() {
        return Err(ExperimentError::EmptyPopulation(fraction));
    }
    Ok(run_day(input.net, &agents, &its, input.engine).ledger.mean_per_agent())
}

/// Seed of replicate `r` at sweep point `k`.
pub fn replicate_seed(seed: u64, k: usize, r: usize) -> u64 {
    seed ^ ((k as u64 + 1) << 32 | r as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93)
}

/// Run every (fraction, replicate) pair in parallel and aggregate per fraction.
/// A fraction of exactly 1 keeps everybody, so its replicates coincide.
pub fn density_sweep(input: &SweepInput, fractions: &[f64], replicates: usize, seed: u64) -> Result<SweepCurve, ExperimentError> {
    if replicates == 0 {
        return Err(ExperimentError::Invalid("replicates must be at least 1".into()));
    }
    if fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(ExperimentError::Invalid("fractions must lie in (0, 1]".into()));
    }
    let mut sorted = fractions.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let jobs: Vec<(usize, usize)> = (0..sorted.len()).flat_map(|k| (0..replicates).map(move |r| (k, r))).collect();
    let results = jobs
        .par_iter()
        .map(|&(k, r)| thinned_run(input, sorted[k], replicate_seed(seed, k, r)))
        .collect::<Result<Vec<f64>, _>>()?;
    let points = sorted
        .iter()
        .enumerate()
        .map(|(k, &density)| {
            let xs = &results[k * replicates..(k + 1) * replicates];
            let mean = xs.iter().sum::<f64>() / replicates as f64;
            let std = if replicates > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (replicates - 1) as f64).sqrt()
            } else {
                0.0
            };
            SweepPoint { density, mean_contacts: mean, std, replicates }
        })
        .collect();
    Ok(SweepCurve { points })
}

/// Daily contacts per person at which `R0 = d * n * p_i` equals one.
pub fn r0_threshold(d: f64, p_i: f64) -> Result<f64, ExperimentError> {
    if !(d > 0.0) || !(p_i > 0.0 && p_i <= 1.0) {
        return Err(ExperimentError::Invalid(format!("need d > 0 and 0 < p_i <= 1, got d={d}, p_i={p_i}")));
    }
    Ok(1.0 / (d * p_i))
}

/// Density minimizing `normalized(x) - x` over the curve's points, the place where
/// the piecewise-linear curve's slope crosses that of the diagonal. Ties go to the
/// smaller density.
pub fn roi_optimal_density(curve: &SweepCurve) -> Result<f64, ExperimentError> {
    if curve.points.len() < 3 {
        return Err(ExperimentError::Invalid("need at least 3 sweep points".into()));
    }
    let mut norm = curve.normalized()?;
    norm.sort_by(|a, b| a.0.total_cmp(&b.0));
    if norm.iter().all(|p| p.1 == norm[0].1) {
        return Err(ExperimentError::Invalid("degenerate curve: all values equal".into()));
    }
    let mut best = norm[0];
    for &p in &norm[1..] {
        // Slack so rounding noise on an exactly linear curve still ties.
        if p.1 - p.0 < best.1 - best.0 - 1e-12 {
            best = p;
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpiParams {
    /// Asymptomatic infectious period in days.
    pub d: f64,
    /// Infection probability per close contact.
    pub p_i: f64,
}

impl Default for EpiParams {
    fn default() -> Self {
        Self { d: 4.0, p_i: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub epi: EpiParams,
    pub contact_threshold: f64,
    pub roi_density: f64,
    /// `None` when every swept density stays above the threshold.
    pub epi_density: Option<f64>,
    pub recommendation: Option<f64>,
    pub note: String,
}

/// Largest density whose mean stays at or below `threshold` on the piecewise-linear
/// curve, searching up from the smallest swept density.
fn threshold_density(points: &[(f64, f64)], threshold: f64) -> Option<f64> {
    if points.iter().all(|p| p.1 <= threshold) {
        return points.last().map(|p| p.0);
    }
    if points[0].1 > threshold {
        return None;
    }
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y0 <= threshold && y1 > threshold {
            return Some(x0 + (threshold - y0) / (y1 - y0) * (x1 - x0));
        }
    }
    None
}

pub fn recommend_density(curve: &SweepCurve, epi: EpiParams) -> Result<Recommendation, ExperimentError> {
    let contact_threshold = r0_threshold(epi.d, epi.p_i)?;
    let roi_density = roi_optimal_density(curve)?;
    let mut raw: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.density, p.mean_contacts)).collect();
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let epi_density = threshold_density(&raw, contact_threshold);
    let (recommendation, note) = match epi_density {
        Some(e) => (Some(roi_density.min(e)), "min of ROI-optimal and epidemic-threshold densities".to_string()),
        None => (None, "no safe density in sweep range".to_string()),
    };
    Ok(Recommendation { epi, contact_threshold, roi_density, epi_density, recommendation, note })
}
