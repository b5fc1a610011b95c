//! Emission schedules and RSSI propagation.
//!
//! Vehicles emit BSMs every `bsm_period` since entry and Wi-Fi probes every
//! `probe_period`. An antenna hears an emission when the emitter lies within
//! its zone radius and the received power, log-distance path loss plus
//! obstacle shadowing plus Gaussian noise, clears the sensitivity floor.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{RoadMap, VehicleTrace};
use crate::rng::{derive, stream_rng, Stream};
use crate::schemes::IdentifierStream;
use crate::trace::{
    AntennaId, BsmRecord, GroundTruth, MacAddr, Payload, Point, ProbeRecord, RadioObservation,
    TrueVehicleId, WifiId,
};

/// Distances below this are clamped before taking the logarithm.
pub const MIN_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub dsrc_tx_dbm: f64,
    pub wifi_tx_dbm: f64,
    /// seconds
    pub bsm_period: f64,
    /// seconds
    pub probe_period: f64,
    pub path_loss_exponent: f64,
    /// Loss at 1 m, dB.
    pub ref_loss_db: f64,
    pub shadowing_sigma_db: f64,
    pub obstacle_wall_db: f64,
    pub obstacle_meter_db: f64,
    pub sensitivity_dbm: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            dsrc_tx_dbm: 23.0,
            wifi_tx_dbm: 20.0,
            bsm_period: 1.0,
            probe_period: 0.1,
            path_loss_exponent: 2.75,
            ref_loss_db: 47.0,
            shadowing_sigma_db: 3.0,
            obstacle_wall_db: 9.0,
            obstacle_meter_db: 0.4,
            sensitivity_dbm: -92.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("radio.{m}")));
        for (name, v) in [("bsm_period", self.bsm_period), ("probe_period", self.probe_period)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive (got {v})"));
            }
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return bad(format!(
                "shadowing_sigma_db must be non-negative (got {})",
                self.shadowing_sigma_db
            ));
        }
        if !(self.path_loss_exponent > 0.0) {
            return bad(format!(
                "path_loss_exponent must be positive (got {})",
                self.path_loss_exponent
            ));
        }
        if self.obstacle_wall_db < 0.0 || self.obstacle_meter_db < 0.0 {
            return bad("obstacle losses must be non-negative".into());
        }
        if !(self.sensitivity_dbm < self.dsrc_tx_dbm.min(self.wifi_tx_dbm)) {
            return bad(format!(
                "sensitivity_dbm {} must lie below both transmit powers",
                self.sensitivity_dbm
            ));
        }
        Ok(())
    }

    /// Probes expected per BSM, `bsm_period / probe_period`.
    pub fn expected_ratio(&self) -> f64 {
        self.bsm_period / self.probe_period
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaZone {
    pub antenna_id: AntennaId,
    pub center: Point,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    50.0
}

impl AntennaZone {
    pub fn covers(&self, p: Point) -> bool {
        p.distance(self.center) <= self.radius
    }
}

/// Zones must have positive radii, unique ids, and be pairwise disjoint.
pub fn validate_zones(zones: &[AntennaZone]) -> Result<()> {
    for (i, a) in zones.iter().enumerate() {
        if !(a.radius > 0.0) {
            return Err(Error::Config(format!(
                "zones[{i}].radius must be positive (got {})",
                a.radius
            )));
        }
        for b in &zones[i + 1..] {
            if a.antenna_id == b.antenna_id {
                return Err(Error::Config(format!("duplicate antenna_id {}", a.antenna_id)));
            }
            if a.center.distance(b.center) <= a.radius + b.radius {
                return Err(Error::Config(format!(
                    "zones {} and {} overlap",
                    a.antenna_id, b.antenna_id
                )));
            }
        }
    }
    Ok(())
}

/// Log-distance mean received power.
pub fn mean_rssi(tx_dbm: f64, distance: f64, config: &RadioConfig) -> f64 {
    let d = distance.max(MIN_DISTANCE);
    tx_dbm - config.ref_loss_db - 10.0 * config.path_loss_exponent * d.log10()
}

/// Parameter interval `[t0, t1] ⊂ [0, 1]` of segment `a→b` inside the closed
/// box, by Liang–Barsky clipping.
fn clip(a: Point, b: Point, min: Point, max: Point) -> Option<(f64, f64)> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, a.x - min.x),
        (dx, max.x - a.x),
        (-dy, a.y - min.y),
        (dy, max.y - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 < t1).then_some((t0, t1))
}

/// Shadowing along `tx→rx`: `obstacle_wall_db` per building wall crossed plus
/// `obstacle_meter_db` per meter travelled inside buildings.
pub fn obstacle_loss(map: &RoadMap, tx: Point, rx: Point, config: &RadioConfig) -> f64 {
    const EPS: f64 = 1e-12;
    let len = tx.distance(rx);
    if len == 0.0 {
        return 0.0;
    }
    let mut walls = 0u32;
    let mut inside = 0.0;
    for o in &map.obstacles {
        let Some((t0, t1)) = clip(tx, rx, o.min, o.max) else { continue };
        inside += (t1 - t0) * len;
        if t0 > EPS {
            walls += 1;
        }
        if t1 < 1.0 - EPS {
            walls += 1;
        }
    }
    walls as f64 * config.obstacle_wall_db + inside * config.obstacle_meter_db
}

/// Wi-Fi identity of a vehicle: a locally administered MAC obtained from a
/// seeded permutation of the vehicle id, so distinct vehicles never collide.
pub fn wifi_id_for(vehicle: TrueVehicleId, seed: u64) -> WifiId {
    const MASK: u64 = (1 << 40) - 1;
    let key = derive(seed, Stream::Identity, 0);
    // Four Feistel rounds over two 20-bit halves: a bijection on 40 bits.
    let v = vehicle.0 & MASK;
    let (mut l, mut r) = (v >> 20, v & 0xF_FFFF);
    for round in 0..4u64 {
        let f = crate::rng::mix64(r ^ key.rotate_left(round as u32 * 16) ^ round) & 0xF_FFFF;
        (l, r) = (r, l ^ f);
    }
    let mac = MacAddr::from_u64((0x02u64 << 40) | (l << 20) | r);
    WifiId::new(mac, format!("car-{:05}", vehicle.0)).expect("generated ssid is valid")
}

/// Attacker view of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub observations: Vec<RadioObservation>,
    pub truth: GroundTruth,
}

/// Emission instants `entry + k·period` strictly before exit.
fn instants(trace: &VehicleTrace, period: f64) -> impl Iterator<Item = f64> + '_ {
    let span = trace.active_duration();
    (0u64..)
        .map(move |k| k as f64 * period)
        .take_while(move |off| *off < span - 1e-9)
        .map(move |off| trace.entry_time + off)
}

/// Produces every observation heard by the antennas, sorted in log order,
/// together with the ownership of all identifiers in the run.
pub fn capture(
    traces: &[VehicleTrace],
    streams: &[IdentifierStream],
    zones: &[AntennaZone],
    map: &RoadMap,
    config: &RadioConfig,
    seed: u64,
) -> Result<Capture> {
    config.validate()?;
    validate_zones(zones)?;
    let mut truth = GroundTruth::default();
    let mut by_vehicle = std::collections::HashMap::new();
    for s in streams {
        by_vehicle.insert(s.vehicle, s);
        for p in s.pseudonyms() {
            if truth.pseudonyms.insert(p, s.vehicle).is_some() {
                return Err(Error::Input(format!("pseudonym {p} issued twice")));
            }
        }
    }
    for t in traces {
        if !by_vehicle.contains_key(&t.vehicle) {
            return Err(Error::Input(format!(
                "no identifier stream for vehicle {}",
                t.vehicle
            )));
        }
        truth.macs.insert(wifi_id_for(t.vehicle, seed).mac, t.vehicle);
    }

    let per_vehicle: Vec<Vec<RadioObservation>> = traces
        .par_iter()
        .map(|t| emit_vehicle(t, by_vehicle[&t.vehicle], zones, map, config, seed))
        .collect();
    let mut observations: Vec<RadioObservation> = per_vehicle.into_iter().flatten().collect();
    observations.sort_by(RadioObservation::log_order);
    Ok(Capture {
        observations,
        truth,
    })
}

fn emit_vehicle(
    trace: &VehicleTrace,
    stream: &IdentifierStream,
    zones: &[AntennaZone],
    map: &RoadMap,
    config: &RadioConfig,
    seed: u64,
) -> Vec<RadioObservation> {
    let mut rng = stream_rng(seed, Stream::Capture, trace.vehicle.0);
    let mut out = Vec::new();
    let receive = |rng: &mut rand_chacha::ChaCha8Rng, pos: Point, tx: f64| {
        let mut heard = Vec::new();
        for z in zones {
            let d = pos.distance(z.center);
            if d > z.radius {
                continue;
            }
            let noise: f64 = if config.shadowing_sigma_db > 0.0 {
                rng.sample::<f64, _>(StandardNormal) * config.shadowing_sigma_db
            } else {
                0.0
            };
            let rssi = (mean_rssi(tx, d, config) - obstacle_loss(map, pos, z.center, config) + noise)
                .min(tx);
            if rssi >= config.sensitivity_dbm {
                heard.push((z.antenna_id, rssi));
            }
        }
        heard
    };

    for t in instants(trace, config.bsm_period) {
        if stream.is_silent(t) {
            continue;
        }
        let Some(s) = trace.state_at(t) else { continue };
        let record = BsmRecord {
            pseudonym: stream.pseudonym_at(t),
            timestamp: t,
            position: s.position,
            speed: s.speed,
            heading: s.heading,
            acceleration: s.acceleration,
        };
        for (antenna_id, rssi) in receive(&mut rng, s.position, config.dsrc_tx_dbm) {
            out.push(RadioObservation {
                antenna_id,
                payload: Payload::Bsm(record.clone()),
                rssi,
            });
        }
    }
    let wifi = wifi_id_for(trace.vehicle, seed);
    for t in instants(trace, config.probe_period) {
        let Some(s) = trace.state_at(t) else { continue };
        for (antenna_id, rssi) in receive(&mut rng, s.position, config.wifi_tx_dbm) {
            out.push(RadioObservation {
                antenna_id,
                payload: Payload::Probe(ProbeRecord {
                    wifi_id: wifi.clone(),
                    timestamp: t,
                }),
                rssi,
            });
        }
    }
    out
}
