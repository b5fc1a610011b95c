//! Scoring and experiment orchestration.
//!
//! Predictions are partitions of the observed pseudonyms and are scored
//! pairwise against ground truth. Experiments sweep (scheme, tracker, seed)
//! cells and emit a long-format results table, a per-cell summary and a
//! manifest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{slowtrack_link, SlowtrackConfig};
use crate::error::{Error, Result};
use crate::linker::{link_zone, LinkerConfig, PseudonymChain};
use crate::mobility::{simulate_traffic, MapSpec, RoadMap, TrafficSpec, VehicleTrace};
use crate::radar::{associate, reconstruct_trips, ChainAssociation, Metric, RadarConfig, TripReconstruction};
use crate::radio::{capture, AntennaZone, Capture, RadioConfig};
use crate::schemes::{apply_schemes, IdentifierStream, SchemeConfig, SchemeKind};
use crate::trace::{AntennaId, GroundTruth, Pseudonym, RadioObservation};

/// How a prediction is produced from an observation log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tracker {
    Count,
    Statistical,
    Pearson,
    /// Dead-reckoning baseline over all zones.
    Slowtrack,
    /// Per-zone chains only, no Wi-Fi association.
    Linker,
}

impl Tracker {
    pub const ALL: [Tracker; 5] = [
        Tracker::Count,
        Tracker::Statistical,
        Tracker::Pearson,
        Tracker::Slowtrack,
        Tracker::Linker,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tracker::Count => "count",
            Tracker::Statistical => "statistical",
            Tracker::Pearson => "pearson",
            Tracker::Slowtrack => "slowtrack",
            Tracker::Linker => "linker",
        }
    }

    pub fn radar_metric(self) -> Option<Metric> {
        match self {
            Tracker::Count => Some(Metric::Count),
            Tracker::Statistical => Some(Metric::Statistical),
            Tracker::Pearson => Some(Metric::Pearson),
            Tracker::Slowtrack | Tracker::Linker => None,
        }
    }
}

impl fmt::Display for Tracker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tracker {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tracker::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Tracker::ALL.iter().map(|t| t.name()).collect();
            Error::Config(format!("unknown metric `{s}` (valid: {})", valid.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pair counts of `predicted` against `truth` over `universe`. Universe
/// members missing from the prediction count as singletons.
pub fn pairwise_counts(
    predicted: &[Vec<Pseudonym>],
    truth: &GroundTruth,
    universe: &BTreeSet<Pseudonym>,
) -> Result<PairCounts> {
    let mut placed = BTreeSet::new();
    let mut tp = 0;
    let mut predicted_pairs = 0;
    for group in predicted {
        let mut by_owner: HashMap<_, u64> = HashMap::new();
        let mut size = 0;
        for p in group {
            if !universe.contains(p) {
                return Err(Error::Input(format!("pseudonym {p} is predicted but was never observed")));
            }
            if !placed.insert(*p) {
                return Err(Error::Input(format!("pseudonym {p} appears in two predicted groups")));
            }
            let owner = truth
                .owner_of_pseudonym(*p)
                .ok_or_else(|| Error::Input(format!("pseudonym {p} has no ground-truth owner")))?;
            *by_owner.entry(owner).or_default() += 1;
            size += 1;
        }
        tp += by_owner.values().map(|n| pairs(*n)).sum::<u64>();
        predicted_pairs += pairs(size);
    }
    let mut per_vehicle: HashMap<_, u64> = HashMap::new();
    for p in universe {
        let owner = truth
            .owner_of_pseudonym(*p)
            .ok_or_else(|| Error::Input(format!("pseudonym {p} has no ground-truth owner")))?;
        *per_vehicle.entry(owner).or_default() += 1;
    }
    let truth_pairs: u64 = per_vehicle.values().map(|n| pairs(*n)).sum();
    Ok(PairCounts {
        tp,
        fp: predicted_pairs - tp,
        fn_: truth_pairs - tp,
    })
}

impl PairCounts {
    /// `(precision, recall)`; an empty denominator scores 1.
    pub fn precision_recall(&self) -> (f64, f64) {
        let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        (ratio(self.tp, self.tp + self.fp), ratio(self.tp, self.tp + self.fn_))
    }
}

pub fn pairwise_score(
    predicted: &[Vec<Pseudonym>],
    truth: &GroundTruth,
    universe: &BTreeSet<Pseudonym>,
) -> Result<(f64, f64)> {
    Ok(pairwise_counts(predicted, truth, universe)?.precision_recall())
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Pseudonyms carried by at least one observed BSM.
pub fn observed_pseudonyms(observations: &[RadioObservation]) -> BTreeSet<Pseudonym> {
    observations.iter().filter_map(|o| o.as_bsm()).map(|b| b.pseudonym).collect()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Partition induced by unions over chain indices. Chains that share a
/// pseudonym are always joined.
fn chain_partition(chains: &[PseudonymChain], uf: &mut UnionFind) -> Vec<Vec<Pseudonym>> {
    let mut holder: HashMap<Pseudonym, usize> = HashMap::new();
    for (i, c) in chains.iter().enumerate() {
        for p in &c.pseudonyms {
            if let Some(&j) = holder.get(p) {
                uf.union(i, j);
            } else {
                holder.insert(*p, i);
            }
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<Pseudonym>> = BTreeMap::new();
    for (i, c) in chains.iter().enumerate() {
        let root = uf.find(i);
        groups.entry(root).or_default().extend(c.pseudonyms.iter().copied());
    }
    groups.into_values().map(|g| g.into_iter().collect()).collect()
}

/// Pseudonym partition from chains alone.
pub fn grouping_from_chains(chains: &[PseudonymChain]) -> Vec<Vec<Pseudonym>> {
    chain_partition(chains, &mut UnionFind::new(chains.len()))
}

/// Pseudonym partition from reconstructed trips: chains on one trip form one
/// group, chains on no trip stay on their own.
pub fn grouping_from_trips(trips: &[TripReconstruction], chains: &[PseudonymChain]) -> Result<Vec<Vec<Pseudonym>>> {
    let index: HashMap<(AntennaId, usize), usize> =
        chains.iter().enumerate().map(|(i, c)| ((c.zone, c.id), i)).collect();
    let mut uf = UnionFind::new(chains.len());
    let mut on_trip = vec![false; chains.len()];
    for trip in trips {
        let mut first = None;
        for v in &trip.visits {
            let &i = index.get(&(v.zone, v.chain_id)).ok_or_else(|| {
                Error::Internal(format!("trip visits unknown chain {} in zone {}", v.chain_id, v.zone))
            })?;
            if on_trip[i] {
                return Err(Error::Internal(format!(
                    "chain {} in zone {} belongs to two trips",
                    v.chain_id, v.zone
                )));
            }
            on_trip[i] = true;
            match first {
                None => first = Some(i),
                Some(f) => uf.union(f, i),
            }
        }
    }
    Ok(chain_partition(chains, &mut uf))
}

/// Everything a tracker needs besides the log itself.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackerSettings {
    pub radio: RadioConfig,
    pub linker: LinkerConfig,
    pub radar: RadarConfig,
    pub baseline: SlowtrackConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutcome {
    pub chains: Vec<PseudonymChain>,
    pub associations: Vec<ChainAssociation>,
    pub trips: Vec<TripReconstruction>,
    pub grouping: Vec<Vec<Pseudonym>>,
    /// Candidate identifiers summed over chains.
    pub candidates: usize,
    pub universe: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Per-zone chains for every antenna present in the log.
pub fn link_all_zones(observations: &[RadioObservation], linker: &LinkerConfig) -> Vec<PseudonymChain> {
    let zones: BTreeSet<AntennaId> = observations.iter().map(|o| o.antenna_id).collect();
    zones
        .into_iter()
        .flat_map(|z| link_zone(z, observations, linker))
        .collect()
}

/// Runs one tracker over a log and scores it.
pub fn run_tracker(
    observations: &[RadioObservation],
    truth: &GroundTruth,
    tracker: Tracker,
    settings: &TrackerSettings,
) -> Result<TrackOutcome> {
    let universe = observed_pseudonyms(observations);
    let mut chains = Vec::new();
    let mut associations = Vec::new();
    let mut trips = Vec::new();
    let mut candidates = 0;
    let grouping = match tracker {
        Tracker::Slowtrack => slowtrack_link(observations, &settings.baseline),
        Tracker::Linker => {
            chains = link_all_zones(observations, &settings.linker);
            grouping_from_chains(&chains)
        }
        _ => {
            let metric = tracker.radar_metric().expect("radar tracker");
            chains = link_all_zones(observations, &settings.linker);
            let radar = RadarConfig {
                metric,
                ..settings.radar.clone()
            };
            let radio = &settings.radio;
            associations = associate(
                &chains,
                observations,
                &radar,
                radio.expected_ratio(),
                radio.dsrc_tx_dbm - radio.wifi_tx_dbm,
            )?;
            candidates = associations.iter().map(|a| a.candidates).sum();
            trips = reconstruct_trips(&associations);
            grouping_from_trips(&trips, &chains)?
        }
    };
    let (precision, recall, f) = if universe.is_empty() {
        log::warn!("no BSM observed; scoring f = 0");
        (0.0, 0.0, 0.0)
    } else {
        let (p, r) = pairwise_score(&grouping, truth, &universe)?;
        (p, r, f_measure(p, r))
    };
    Ok(TrackOutcome {
        chains,
        associations,
        trips,
        grouping,
        candidates,
        universe: universe.len(),
        precision,
        recall,
        f_measure: f,
    })
}

/// Inputs of the simulator side of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub map: MapSpec,
    pub traffic: TrafficSpec,
    pub radio: RadioConfig,
    pub zones: Vec<AntennaZone>,
    pub scheme: SchemeConfig,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub map: RoadMap,
    pub traces: Vec<VehicleTrace>,
    pub streams: Vec<IdentifierStream>,
    pub capture: Capture,
}

/// Mobility, pseudonym scheme and capture for one seed.
pub fn simulate_scenario(spec: &SimulationSpec, seed: u64) -> Result<Scenario> {
    let map = spec.map.build()?;
    let traces = simulate_traffic(&map, &spec.traffic, seed)?;
    let streams = apply_schemes(&traces, &spec.scheme, spec.radio.bsm_period, seed)?;
    let capture = capture(&traces, &streams, &spec.zones, &map, &spec.radio, seed)?;
    Ok(Scenario {
        map,
        traces,
        streams,
        capture,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// `scheme.kind` is replaced per cell.
    pub simulation: SimulationSpec,
    pub tracking: TrackerSettings,
    pub cells: Vec<(SchemeKind, Tracker)>,
    pub seeds: Vec<u64>,
    /// 0 uses every available core.
    pub workers: usize,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        if self.cells.is_empty() {
            return Err(Error::Config("experiment must contain at least one cell".into()));
        }
        crate::radio::validate_zones(&self.simulation.zones)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: SchemeKind,
    pub scheme_params: SchemeConfig,
    pub metric: Tracker,
    pub seed: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub chains: usize,
    pub candidates: usize,
    pub trips: usize,
    pub universe: usize,
    /// seconds
    pub runtime: f64,
    /// Failure message of a cell that did not complete.
    pub error: Option<String>,
}

impl EvalReport {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    fn failed(scheme: &SchemeConfig, metric: Tracker, seed: u64, runtime: f64, error: String) -> Self {
        EvalReport {
            scheme: scheme.kind,
            scheme_params: scheme.clone(),
            metric,
            seed,
            precision: f64::NAN,
            recall: f64::NAN,
            f_measure: f64::NAN,
            chains: 0,
            candidates: 0,
            trips: 0,
            universe: 0,
            runtime,
            error: Some(error),
        }
    }
}

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| e.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn run_job(plan: &ExperimentPlan, scheme: SchemeKind, seed: u64, trackers: &[Tracker]) -> Vec<EvalReport> {
    let started = Instant::now();
    let mut sim = plan.simulation.clone();
    sim.scheme.kind = scheme;
    let scenario = std::panic::catch_unwind(|| simulate_scenario(&sim, seed))
        .unwrap_or_else(|e| Err(Error::Internal(panic_message(e))));
    let sim_time = started.elapsed().as_secs_f64();
    let scenario = match scenario {
        Ok(s) => s,
        Err(e) => {
            log::error!("{scheme} seed {seed}: {e}");
            return trackers
                .iter()
                .map(|t| EvalReport::failed(&sim.scheme, *t, seed, sim_time, e.to_string()))
                .collect();
        }
    };
    trackers
        .iter()
        .map(|&tracker| {
            let t0 = Instant::now();
            let outcome = std::panic::catch_unwind(|| {
                run_tracker(
                    &scenario.capture.observations,
                    &scenario.capture.truth,
                    tracker,
                    &plan.tracking,
                )
            })
            .unwrap_or_else(|e| Err(Error::Internal(panic_message(e))));
            let runtime = sim_time + t0.elapsed().as_secs_f64();
            match outcome {
                Ok(o) => EvalReport {
                    scheme,
                    scheme_params: sim.scheme.clone(),
                    metric: tracker,
                    seed,
                    precision: o.precision,
                    recall: o.recall,
                    f_measure: o.f_measure,
                    chains: o.chains.len(),
                    candidates: o.candidates,
                    trips: o.trips.len(),
                    universe: o.universe,
                    runtime,
                    error: None,
                },
                Err(e) => {
                    log::error!("{scheme}/{tracker} seed {seed}: {e}");
                    EvalReport::failed(&sim.scheme, tracker, seed, runtime, e.to_string())
                }
            }
        })
        .collect()
}

/// Runs every (cell, seed) pair. Rows come back ordered by cell, then seed,
/// whatever the worker count.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<EvalReport>> {
    plan.validate()?;
    let mut jobs: Vec<(SchemeKind, u64, Vec<Tracker>)> = Vec::new();
    for &(scheme, tracker) in &plan.cells {
        for &seed in &plan.seeds {
            match jobs.iter_mut().find(|(s, sd, _)| *s == scheme && *sd == seed) {
                Some(job) if !job.2.contains(&tracker) => job.2.push(tracker),
                Some(_) => {}
                None => jobs.push((scheme, seed, vec![tracker])),
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::Internal(format!("worker pool: {e}")))?;
    let done: Vec<EvalReport> = pool.install(|| {
        jobs.par_iter()
            .flat_map_iter(|(scheme, seed, trackers)| run_job(plan, *scheme, *seed, trackers))
            .collect()
    });
    let mut out = Vec::with_capacity(plan.cells.len() * plan.seeds.len());
    for &(scheme, tracker) in &plan.cells {
        for &seed in &plan.seeds {
            let row = done
                .iter()
                .find(|r| r.scheme == scheme && r.metric == tracker && r.seed == seed)
                .expect("every job reports each of its cells");
            out.push(row.clone());
        }
    }
    Ok(out)
}

pub const RESULTS_HEADER: [&str; 6] = ["scheme", "metric", "seed", "precision", "recall", "f"];

fn csv_writer(destination: &Path) -> Result<csv::Writer<std::io::BufWriter<std::fs::File>>> {
    let file = std::fs::File::create(destination).map_err(|e| Error::io(destination, e))?;
    Ok(csv::Writer::from_writer(std::io::BufWriter::new(file)))
}

fn finish(w: csv::Writer<std::io::BufWriter<std::fs::File>>, destination: &Path) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io(destination, std::io::Error::other(e.to_string())))?
        .flush()
        .map_err(|e| Error::io(destination, e))
}

fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// Long-format results; failed cells leave the numeric columns empty.
pub fn write_results_csv(reports: &[EvalReport], destination: &Path) -> Result<()> {
    let mut w = csv_writer(destination)?;
    let io = |e: csv::Error| Error::io(destination, std::io::Error::other(e));
    w.write_record(RESULTS_HEADER).map_err(io)?;
    for r in reports {
        w.write_record([
            r.scheme.to_string(),
            r.metric.to_string(),
            r.seed.to_string(),
            num(r.precision),
            num(r.recall),
            num(r.f_measure),
        ])
        .map_err(io)?;
    }
    finish(w, destination)
}

/// Quantile by linear interpolation between closest ranks.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scheme: SchemeKind,
    pub metric: Tracker,
    pub runs: usize,
    pub failed: usize,
    pub median_f: f64,
    pub q1_f: f64,
    pub q3_f: f64,
    pub median_precision: f64,
    pub median_recall: f64,
}

impl CellSummary {
    pub fn iqr_f(&self) -> f64 {
        self.q3_f - self.q1_f
    }
}

/// Median and quartiles per (scheme, metric), in first-appearance order.
pub fn summarize(reports: &[EvalReport]) -> Vec<CellSummary> {
    let mut order: Vec<(SchemeKind, Tracker)> = Vec::new();
    for r in reports {
        if !order.contains(&(r.scheme, r.metric)) {
            order.push((r.scheme, r.metric));
        }
    }
    order
        .into_iter()
        .map(|(scheme, metric)| {
            let cell: Vec<&EvalReport> = reports.iter().filter(|r| r.scheme == scheme && r.metric == metric).collect();
            let ok: Vec<&&EvalReport> = cell.iter().filter(|r| r.is_ok()).collect();
            let sorted = |f: fn(&EvalReport) -> f64| {
                let mut v: Vec<f64> = ok.iter().map(|r| f(r)).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let fs = sorted(|r| r.f_measure);
            CellSummary {
                scheme,
                metric,
                runs: cell.len(),
                failed: cell.len() - ok.len(),
                median_f: quantile(&fs, 0.5),
                q1_f: quantile(&fs, 0.25),
                q3_f: quantile(&fs, 0.75),
                median_precision: quantile(&sorted(|r| r.precision), 0.5),
                median_recall: quantile(&sorted(|r| r.recall), 0.5),
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "scheme",
    "metric",
    "runs",
    "failed",
    "median_f",
    "iqr_f",
    "q1_f",
    "q3_f",
    "median_precision",
    "median_recall",
];

pub fn write_summary_csv(summary: &[CellSummary], destination: &Path) -> Result<()> {
    let mut w = csv_writer(destination)?;
    let io = |e: csv::Error| Error::io(destination, std::io::Error::other(e));
    w.write_record(SUMMARY_HEADER).map_err(io)?;
    for s in summary {
        w.write_record([
            s.scheme.to_string(),
            s.metric.to_string(),
            s.runs.to_string(),
            s.failed.to_string(),
            num(s.median_f),
            num(s.iqr_f()),
            num(s.q1_f),
            num(s.q3_f),
            num(s.median_precision),
            num(s.median_recall),
        ])
        .map_err(io)?;
    }
    finish(w, destination)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Artifact {
            path: path.file_name().map(PathBuf::from).unwrap_or_else(|| path.to_path_buf()),
            sha256: sha256_file(path)?,
        })
    }
}

/// Run manifest: resolved configuration, its hash, and what was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    /// Configuration sections absent from the input and filled with defaults.
    pub defaulted_sections: Vec<String>,
    pub artifacts: Vec<Artifact>,
    pub reports: Vec<EvalReport>,
}

pub fn write_manifest(manifest: &RunManifest, destination: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Internal(format!("manifest serialization: {e}")))?;
    std::fs::write(destination, text + "\n").map_err(|e| Error::io(destination, e))
}
