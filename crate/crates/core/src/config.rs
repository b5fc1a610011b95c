//! TOML run configuration.
//!
//! Every section is optional and falls back to its defaults. Sections that
//! were absent from the input are reported so manifests can record them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::SlowtrackConfig;
use crate::error::{Error, Result};
use crate::eval::{ExperimentPlan, SimulationSpec, Tracker, TrackerSettings};
use crate::linker::LinkerConfig;
use crate::mobility::{MapSpec, TrafficSpec};
use crate::radar::RadarConfig;
use crate::radio::{validate_zones, AntennaZone, RadioConfig};
use crate::schemes::{SchemeConfig, SchemeKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Concurrent experiment jobs; 0 uses every available core.
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { workers: 0 }
    }
}

/// Cells of an experiment: every listed scheme crossed with every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schemes: Vec<SchemeKind>,
    pub metrics: Vec<Tracker>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schemes: SchemeKind::F2MD.to_vec(),
            metrics: vec![Tracker::Count, Tracker::Statistical, Tracker::Pearson],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub map: MapSpec,
    pub traffic: TrafficSpec,
    pub radio: RadioConfig,
    /// Empty means three zones placed on interior intersections.
    pub zones: Vec<AntennaZone>,
    pub scheme: SchemeConfig,
    pub linker: LinkerConfig,
    pub radar: RadarConfig,
    pub baseline: SlowtrackConfig,
    pub eval: EvalConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seeds: (0..25).collect(),
            output: PathBuf::from("results"),
            map: MapSpec::default(),
            traffic: TrafficSpec::default(),
            radio: RadioConfig::default(),
            zones: Vec::new(),
            scheme: SchemeConfig::default(),
            linker: LinkerConfig::default(),
            radar: RadarConfig::default(),
            baseline: SlowtrackConfig::default(),
            eval: EvalConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

pub const SECTIONS: [&str; 12] = [
    "seeds",
    "output",
    "map",
    "traffic",
    "radio",
    "zones",
    "scheme",
    "linker",
    "radar",
    "baseline",
    "eval",
    "experiment",
];

/// Three zones of `radius` at intersections (1,1), (1,cols−2) and
/// (rows−2, cols/2). On grids too small to hold them apart, fewer are placed.
pub fn default_zones(map: &MapSpec, radius: f64) -> Vec<AntennaZone> {
    let (r, c) = (map.rows, map.cols);
    let picks = [
        (1.min(r - 1), 1.min(c - 1)),
        (1.min(r - 1), c.saturating_sub(2)),
        (r.saturating_sub(2), c / 2),
    ];
    let mut zones: Vec<AntennaZone> = Vec::new();
    for (row, col) in picks {
        let center = crate::trace::Point::new(col as f64 * map.block_length, row as f64 * map.block_length);
        let fits = zones.iter().all(|z| z.center.distance(center) > z.radius + radius);
        if fits {
            zones.push(AntennaZone {
                antenna_id: zones.len() as u32,
                center,
                radius,
            });
        }
    }
    zones
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Top-level keys filled from defaults.
    pub defaulted: Vec<String>,
}

impl RunConfig {
    /// Parses, fills derived defaults and validates.
    pub fn from_toml_str(text: &str, source: &Path) -> Result<LoadedConfig> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", source.display(), e.message())))?;
        let defaulted = SECTIONS
            .iter()
            .filter(|s| !table.contains_key(**s))
            .map(|s| s.to_string())
            .collect();
        let mut config: RunConfig = toml::from_str(text)
            .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", source.display(), describe(&e))))?;
        config.resolve();
        config.validate()?;
        Ok(LoadedConfig { config, defaulted })
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    /// Replaces empty derived fields with their computed defaults.
    pub fn resolve(&mut self) {
        if self.zones.is_empty() && self.map.rows >= 2 && self.map.cols >= 2 {
            self.zones = default_zones(&self.map, 50.0);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        let map = self.map.build()?;
        self.traffic.validate()?;
        self.radio.validate()?;
        if self.zones.is_empty() {
            return Err(Error::Config("zones must define at least one antenna".into()));
        }
        validate_zones(&self.zones)?;
        for (i, z) in self.zones.iter().enumerate() {
            if !map.contains(z.center) {
                return Err(Error::Config(format!("zones[{i}].center lies outside the map")));
            }
        }
        self.scheme.validate()?;
        self.linker.validate()?;
        self.radar.validate()?;
        self.baseline.validate()?;
        if self.experiment.schemes.is_empty() {
            return Err(Error::Config("experiment.schemes must not be empty".into()));
        }
        if self.experiment.metrics.is_empty() {
            return Err(Error::Config("experiment.metrics must not be empty".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn simulation(&self) -> SimulationSpec {
        SimulationSpec {
            map: self.map.clone(),
            traffic: self.traffic.clone(),
            radio: self.radio.clone(),
            zones: self.zones.clone(),
            scheme: self.scheme.clone(),
        }
    }

    pub fn tracking(&self) -> TrackerSettings {
        TrackerSettings {
            radio: self.radio.clone(),
            linker: self.linker.clone(),
            radar: self.radar.clone(),
            baseline: self.baseline.clone(),
        }
    }

    pub fn plan(&self) -> ExperimentPlan {
        let cells = self
            .experiment
            .schemes
            .iter()
            .flat_map(|s| self.experiment.metrics.iter().map(move |m| (*s, *m)))
            .collect();
        ExperimentPlan {
            simulation: self.simulation(),
            tracking: self.tracking(),
            cells,
            seeds: self.seeds.clone(),
            workers: self.eval.workers,
        }
    }
}

/// Deserialization error with the offending key path when available.
fn describe(e: &toml::de::Error) -> String {
    let msg = e.message().trim().to_string();
    match e.span() {
        Some(span) => format!("{msg} (at bytes {}..{})", span.start, span.end),
        None => msg,
    }
}
