//! Command-line front end: simulate logs, track a log, or run an experiment
//! matrix.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use radar_core::config::{LoadedConfig, RunConfig};
use radar_core::eval::{
    run_experiment, run_tracker, simulate_scenario, summarize, write_manifest, write_results_csv, write_summary_csv,
    Artifact, CellSummary, RunManifest, Tracker,
};
use radar_core::radar::write_associations;
use radar_core::schemes::SchemeKind;
use radar_core::trace::{read_ground_truth, read_observation_log, write_ground_truth, write_observation_log};

const EXIT_CELL_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "radar", version, about = "Multi-radio vehicle tracking testbed")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; every section defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validate and print the resolved configuration without writing anything.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate traffic, pseudonym schemes and radio capture; write logs per seed.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Run this seed only.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Track a captured log and score it against ground truth.
    Track {
        #[command(flatten)]
        common: Common,
        /// Observation log CSV.
        #[arg(long)]
        log: PathBuf,
        /// Ground truth file.
        #[arg(long)]
        truth: PathBuf,
        /// count, statistical, pearson, slowtrack or linker.
        #[arg(long, default_value = "pearson")]
        metric: Tracker,
    },
    /// Run every configured (scheme, metric) cell over every seed.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Run this seed only.
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict the metrics; repeat or separate with commas.
        #[arg(long, value_delimiter = ',')]
        metric: Vec<Tracker>,
        /// Concurrent jobs; 0 uses every core.
        #[arg(long)]
        workers: Option<usize>,
    },
}

/// Failures that map to the usage exit code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn load(common: &Common) -> Result<LoadedConfig> {
    let loaded = match &common.config {
        Some(path) => RunConfig::load(path),
        None => RunConfig::from_toml_str("", Path::new("<defaults>")),
    };
    let mut loaded = loaded.map_err(|e| UsageError(e.to_string()))?;
    if let Some(out) = &common.out {
        loaded.config.output = out.clone();
    }
    Ok(loaded)
}

fn revalidate(loaded: &LoadedConfig) -> Result<()> {
    loaded.config.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(())
}

fn print_resolved(loaded: &LoadedConfig) {
    println!("# config hash {}", loaded.config.hash());
    if !loaded.defaulted.is_empty() {
        println!("# defaulted sections: {}", loaded.defaulted.join(", "));
    }
    print!("{}", loaded.config.to_toml());
}

fn manifest(loaded: &LoadedConfig, artifacts: Vec<Artifact>, reports: Vec<radar_core::eval::EvalReport>) -> RunManifest {
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: loaded.config.hash(),
        config: serde_json::to_value(&loaded.config).expect("configuration serializes"),
        defaulted_sections: loaded.defaulted.clone(),
        artifacts,
        reports,
    }
}

fn output_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.output.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn simulate(common: &Common, seed: Option<u64>) -> Result<u8> {
    let mut loaded = load(common)?;
    if let Some(s) = seed {
        loaded.config.seeds = vec![s];
    }
    revalidate(&loaded)?;
    if common.dry_run {
        print_resolved(&loaded);
        return Ok(0);
    }
    let dir = output_dir(&loaded.config)?;
    let spec = loaded.config.simulation();
    let mut artifacts = Vec::new();
    for &seed in &loaded.config.seeds {
        let scenario = simulate_scenario(&spec, seed)?;
        let log = dir.join(format!("observations_seed{seed}.csv"));
        let truth = dir.join(format!("ground_truth_seed{seed}.csv"));
        write_observation_log(&scenario.capture.observations, &log)?;
        write_ground_truth(&scenario.capture.truth, &truth)?;
        println!(
            "seed {seed}: {} vehicles, {} observations -> {}",
            scenario.traces.len(),
            scenario.capture.observations.len(),
            log.display()
        );
        artifacts.push(Artifact::of(&log)?);
        artifacts.push(Artifact::of(&truth)?);
    }
    write_manifest(&manifest(&loaded, artifacts, Vec::new()), &dir.join("manifest.json"))?;
    Ok(0)
}

#[derive(Serialize)]
struct TrackReport {
    config_hash: String,
    log: PathBuf,
    truth: PathBuf,
    metric: Tracker,
    precision: f64,
    recall: f64,
    f_measure: f64,
    chains: usize,
    candidates: usize,
    trips: usize,
    universe: usize,
    runtime: f64,
}

fn track(common: &Common, log: &Path, truth: &Path, metric: Tracker) -> Result<u8> {
    let loaded = load(common)?;
    revalidate(&loaded)?;
    if common.dry_run {
        print_resolved(&loaded);
        return Ok(0);
    }
    let started = Instant::now();
    let observations = read_observation_log(log)?;
    let truth_map = read_ground_truth(truth)?;
    truth_map.covers(&observations)?;
    let outcome = run_tracker(&observations, &truth_map, metric, &loaded.config.tracking())?;
    let runtime = started.elapsed().as_secs_f64();
    println!(
        "{metric}: precision {:.4} recall {:.4} f {:.4}",
        outcome.precision, outcome.recall, outcome.f_measure
    );

    let dir = output_dir(&loaded.config)?;
    let mut artifacts = Vec::new();
    if metric.radar_metric().is_some() {
        let path = dir.join(format!("associations_{metric}.csv"));
        write_associations(&outcome.associations, &path)?;
        artifacts.push(Artifact::of(&path)?);
    }
    let report = TrackReport {
        config_hash: loaded.config.hash(),
        log: log.to_path_buf(),
        truth: truth.to_path_buf(),
        metric,
        precision: outcome.precision,
        recall: outcome.recall,
        f_measure: outcome.f_measure,
        chains: outcome.chains.len(),
        candidates: outcome.candidates,
        trips: outcome.trips.len(),
        universe: outcome.universe,
        runtime,
    };
    let path = dir.join(format!("track_{metric}.json"));
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    artifacts.push(Artifact::of(&path)?);
    write_manifest(&manifest(&loaded, artifacts, Vec::new()), &dir.join(format!("manifest_track_{metric}.json")))?;
    Ok(0)
}

/// Items in first-appearance order without repeats.
fn distinct<T: PartialEq>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

fn print_table(summary: &[CellSummary]) {
    let schemes: Vec<SchemeKind> = distinct(summary.iter().map(|c| c.scheme));
    let metrics: Vec<Tracker> = distinct(summary.iter().map(|c| c.metric));
    print!("{:<22}", "median f");
    for m in &metrics {
        print!(" {:>11}", m.to_string());
    }
    println!();
    for s in &schemes {
        print!("{:<22}", s.to_string());
        for m in &metrics {
            match summary.iter().find(|c| c.scheme == *s && c.metric == *m) {
                Some(c) if c.median_f.is_finite() => print!(" {:>11.3}", c.median_f),
                Some(_) => print!(" {:>11}", "failed"),
                None => print!(" {:>11}", "-"),
            }
        }
        println!();
    }
}

fn experiment(common: &Common, seed: Option<u64>, metrics: &[Tracker], workers: Option<usize>) -> Result<u8> {
    let mut loaded = load(common)?;
    if let Some(s) = seed {
        loaded.config.seeds = vec![s];
    }
    if !metrics.is_empty() {
        loaded.config.experiment.metrics = distinct(metrics.iter().copied());
    }
    if let Some(w) = workers {
        loaded.config.eval.workers = w;
    }
    revalidate(&loaded)?;
    if common.dry_run {
        print_resolved(&loaded);
        return Ok(0);
    }
    let dir = output_dir(&loaded.config)?;
    let plan = loaded.config.plan();
    let started = Instant::now();
    let reports = run_experiment(&plan)?;
    let summary = summarize(&reports);

    let results = dir.join("results.csv");
    let summary_path = dir.join("summary.csv");
    write_results_csv(&reports, &results)?;
    write_summary_csv(&summary, &summary_path)?;
    let artifacts = vec![Artifact::of(&results)?, Artifact::of(&summary_path)?];

    print_table(&summary);
    let failed: Vec<_> = reports.iter().filter(|r| !r.is_ok()).collect();
    for r in &failed {
        eprintln!(
            "cell {} / {} seed {} failed: {}",
            r.scheme,
            r.metric,
            r.seed,
            r.error.as_deref().unwrap_or("unknown error")
        );
    }
    println!(
        "{} runs in {:.2} s, {} failed; results in {}",
        reports.len(),
        started.elapsed().as_secs_f64(),
        failed.len(),
        dir.display()
    );
    write_manifest(&manifest(&loaded, artifacts, reports.clone()), &dir.join("manifest.json"))?;
    Ok(if failed.is_empty() { 0 } else { EXIT_CELL_FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Simulate { common, seed } => simulate(common, *seed),
        Command::Track {
            common,
            log,
            truth,
            metric,
        } => track(common, log, truth, *metric),
        Command::Experiment {
            common,
            seed,
            metric,
            workers,
        } => experiment(common, *seed, metric, *workers),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_CELL_FAILURE)
            }
        }
    }
}
