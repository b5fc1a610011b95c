//! Pseudonym-changing schemes.
//!
//! Every scheme reduces to a time-ordered list of [`SchemeDecision`] events
//! per vehicle. [`build_stream`] turns those events into an
//! [`IdentifierStream`]: the pseudonym in force at each instant plus the
//! intervals during which the vehicle keeps DSRC silent.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::VehicleTrace;
use crate::rng::{mix64, stream_rng, Stream};
use crate::trace::{Pseudonym, TrueVehicleId};

/// Event-time tolerance, seconds.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Periodical,
    Disposable,
    Distance,
    Random,
    #[serde(rename = "car2car")]
    Car2Car,
    SilentPeriod,
    CooperativeExchange,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 7] = [
        SchemeKind::Periodical,
        SchemeKind::Disposable,
        SchemeKind::Distance,
        SchemeKind::Random,
        SchemeKind::Car2Car,
        SchemeKind::SilentPeriod,
        SchemeKind::CooperativeExchange,
    ];

    /// The five context-free and context-aware schemes of the F2MD family.
    pub const F2MD: [SchemeKind; 5] = [
        SchemeKind::Periodical,
        SchemeKind::Disposable,
        SchemeKind::Distance,
        SchemeKind::Random,
        SchemeKind::Car2Car,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Periodical => "periodical",
            SchemeKind::Disposable => "disposable",
            SchemeKind::Distance => "distance",
            SchemeKind::Random => "random",
            SchemeKind::Car2Car => "car2car",
            SchemeKind::SilentPeriod => "silent_period",
            SchemeKind::CooperativeExchange => "cooperative_exchange",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = SchemeKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown scheme kind `{s}` (valid: {})",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SchemeDecision {
    Keep,
    Change,
    /// Stay silent for `duration` seconds, then switch pseudonym.
    SilentThenChange { duration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// seconds
    pub period: f64,
    pub max_messages: u32,
    /// meters
    pub distance_threshold: f64,
    /// per BSM
    pub change_probability: f64,
    /// meters
    pub neighbor_radius: f64,
    pub neighbor_min: u32,
    /// `[min, max]` seconds
    pub silence_range: [f64; 2],
    pub exchange_min_group: u32,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            kind: SchemeKind::Periodical,
            period: 60.0,
            max_messages: 60,
            distance_threshold: 500.0,
            change_probability: 0.05,
            neighbor_radius: 30.0,
            neighbor_min: 2,
            silence_range: [1.0, 5.0],
            exchange_min_group: 3,
        }
    }
}

impl SchemeConfig {
    pub fn with_kind(kind: SchemeKind) -> Self {
        SchemeConfig {
            kind,
            ..SchemeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scheme.{m}")));
        if !(self.period > 0.0) {
            return bad("period must be positive");
        }
        if self.max_messages == 0 {
            return bad("max_messages must be positive");
        }
        if !(self.distance_threshold > 0.0) {
            return bad("distance_threshold must be positive");
        }
        if !(0.0..=1.0).contains(&self.change_probability) {
            return bad("change_probability must lie in [0, 1]");
        }
        if !(self.neighbor_radius > 0.0) {
            return bad("neighbor_radius must be positive");
        }
        if self.neighbor_min == 0 {
            return bad("neighbor_min must be positive");
        }
        let [lo, hi] = self.silence_range;
        if !(lo > 0.0) || lo > hi {
            return bad("silence_range must satisfy 0 < min ≤ max");
        }
        if self.exchange_min_group < 2 {
            return bad("exchange_min_group must be at least 2");
        }
        Ok(())
    }
}

/// Never-reusing pseudonym issuer. Values are a bijective scramble of a
/// counter, so they look opaque but cannot collide.
#[derive(Debug, Clone)]
pub struct PseudonymPool {
    key: u64,
    issued: u64,
}

impl PseudonymPool {
    pub fn new(seed: u64) -> Self {
        PseudonymPool {
            key: mix64(seed ^ 0x7073_6575_646f),
            issued: 0,
        }
    }

    pub fn issue(&mut self) -> Pseudonym {
        let p = Pseudonym(mix64(self.issued ^ self.key));
        self.issued += 1;
        p
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudonymSegment {
    pub pseudonym: Pseudonym,
    /// First instant at which the pseudonym is in use.
    pub issued_at: f64,
}

/// Half-open `[start, end)` interval, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start - TIME_EPS && t < self.end - TIME_EPS
    }
}

/// Pseudonyms and radio silences of one vehicle over its active interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifierStream {
    pub vehicle: TrueVehicleId,
    /// Ordered by `issued_at`; the first starts at the vehicle's entry.
    pub segments: Vec<PseudonymSegment>,
    pub silences: Vec<Interval>,
}

impl IdentifierStream {
    pub fn pseudonym_at(&self, t: f64) -> Pseudonym {
        let idx = self
            .segments
            .partition_point(|s| s.issued_at <= t + TIME_EPS)
            .max(1);
        self.segments[idx - 1].pseudonym
    }

    pub fn is_silent(&self, t: f64) -> bool {
        self.silences.iter().any(|s| s.contains(t))
    }

    pub fn change_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().skip(1).map(|s| s.issued_at)
    }

    pub fn pseudonyms(&self) -> impl Iterator<Item = Pseudonym> + '_ {
        self.segments.iter().map(|s| s.pseudonym)
    }
}

/// BSM emission instants `entry + k·period` strictly before exit.
pub fn bsm_instants(trace: &VehicleTrace, bsm_period: f64) -> impl Iterator<Item = f64> + '_ {
    let span = trace.active_duration();
    (0u64..)
        .map(move |k| k as f64 * bsm_period)
        .take_while(move |off| *off < span - TIME_EPS)
        .map(move |off| trace.entry_time + off)
}

/// Turns scheme events into an identifier stream, drawing fresh pseudonyms
/// from `pool`. Events at or before entry, at or after exit, or inside an
/// ongoing silence are ignored.
pub fn build_stream(
    trace: &VehicleTrace,
    events: &[(f64, SchemeDecision)],
    pool: &mut PseudonymPool,
) -> IdentifierStream {
    let mut segments = vec![PseudonymSegment {
        pseudonym: pool.issue(),
        issued_at: trace.entry_time,
    }];
    let mut silences = Vec::new();
    let mut silent_until = f64::NEG_INFINITY;
    for &(t, decision) in events {
        if t <= trace.entry_time + TIME_EPS || t >= trace.exit_time - TIME_EPS {
            continue;
        }
        if t < silent_until - TIME_EPS {
            continue;
        }
        match decision {
            SchemeDecision::Keep => {}
            SchemeDecision::Change => segments.push(PseudonymSegment {
                pseudonym: pool.issue(),
                issued_at: t,
            }),
            SchemeDecision::SilentThenChange { duration } => {
                let end = t + duration;
                silences.push(Interval { start: t, end });
                silent_until = end;
                if end < trace.exit_time - TIME_EPS {
                    segments.push(PseudonymSegment {
                        pseudonym: pool.issue(),
                        issued_at: end,
                    });
                }
            }
        }
    }
    IdentifierStream {
        vehicle: trace.vehicle,
        segments,
        silences,
    }
}

/// Identifier stream for one vehicle. `all_traces` provides the neighbours
/// seen by the context-aware schemes and must contain `trace`.
pub fn apply_scheme(
    trace: &VehicleTrace,
    all_traces: &[VehicleTrace],
    config: &SchemeConfig,
    bsm_period: f64,
    seed: u64,
    pool: &mut PseudonymPool,
) -> Result<IdentifierStream> {
    config.validate()?;
    let events = match config.kind {
        SchemeKind::CooperativeExchange => {
            let idx = all_traces
                .iter()
                .position(|t| t.vehicle == trace.vehicle)
                .ok_or_else(|| {
                    Error::Input(format!("vehicle {} missing from all_traces", trace.vehicle))
                })?;
            cooperative_events(all_traces, config, bsm_period, seed).swap_remove(idx)
        }
        _ => vehicle_events(trace, all_traces, config, bsm_period, seed),
    };
    Ok(build_stream(trace, &events, pool))
}

/// Identifier streams for every vehicle, in trace order, from one pool.
pub fn apply_schemes(
    traces: &[VehicleTrace],
    config: &SchemeConfig,
    bsm_period: f64,
    seed: u64,
) -> Result<Vec<IdentifierStream>> {
    config.validate()?;
    if !(bsm_period > 0.0) {
        return Err(Error::Config("radio.bsm_period must be positive".into()));
    }
    let events: Vec<Vec<(f64, SchemeDecision)>> = match config.kind {
        SchemeKind::CooperativeExchange => cooperative_events(traces, config, bsm_period, seed),
        _ => traces
            .iter()
            .map(|t| vehicle_events(t, traces, config, bsm_period, seed))
            .collect(),
    };
    let mut pool = PseudonymPool::new(seed);
    Ok(traces
        .iter()
        .zip(&events)
        .map(|(t, ev)| build_stream(t, ev, &mut pool))
        .collect())
}

fn uniform_silence<R: Rng>(rng: &mut R, config: &SchemeConfig) -> f64 {
    let [lo, hi] = config.silence_range;
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn periodic_times(trace: &VehicleTrace, period: f64) -> impl Iterator<Item = f64> + '_ {
    let span = trace.active_duration();
    (1u64..)
        .map(move |m| m as f64 * period)
        .take_while(move |off| *off < span - TIME_EPS)
        .map(move |off| trace.entry_time + off)
}

fn vehicle_events(
    trace: &VehicleTrace,
    all_traces: &[VehicleTrace],
    config: &SchemeConfig,
    bsm_period: f64,
    seed: u64,
) -> Vec<(f64, SchemeDecision)> {
    let mut rng = stream_rng(seed, Stream::Scheme, trace.vehicle.0);
    match config.kind {
        SchemeKind::Periodical => periodic_times(trace, config.period)
            .map(|t| (t, SchemeDecision::Change))
            .collect(),
        SchemeKind::SilentPeriod => periodic_times(trace, config.period)
            .map(|t| {
                let duration = uniform_silence(&mut rng, config);
                (t, SchemeDecision::SilentThenChange { duration })
            })
            .collect(),
        SchemeKind::Disposable => {
            let n = config.max_messages as usize;
            bsm_instants(trace, bsm_period)
                .enumerate()
                .filter(|(k, _)| *k > 0 && k % n == 0)
                .map(|(_, t)| (t, SchemeDecision::Change))
                .collect()
        }
        SchemeKind::Distance => {
            let cumulative = trace.cumulative_distance();
            let mut next = config.distance_threshold;
            let mut out = Vec::new();
            for (s, d) in trace.samples.iter().zip(&cumulative) {
                if *d >= next - 1e-6 {
                    out.push((s.t, SchemeDecision::Change));
                    while *d >= next - 1e-6 {
                        next += config.distance_threshold;
                    }
                }
            }
            out
        }
        SchemeKind::Random => bsm_instants(trace, bsm_period)
            .skip(1)
            .filter_map(|t| {
                (rng.random::<f64>() < config.change_probability).then_some((t, SchemeDecision::Change))
            })
            .collect(),
        SchemeKind::Car2Car => {
            let mut armed = true;
            let mut out = Vec::new();
            for (k, t) in bsm_instants(trace, bsm_period).enumerate() {
                let Some(me) = trace.state_at(t) else { continue };
                let crowd = all_traces
                    .iter()
                    .filter(|o| o.vehicle != trace.vehicle)
                    .filter_map(|o| o.state_at(t))
                    .filter(|o| o.position.distance(me.position) <= config.neighbor_radius)
                    .count();
                let in_crowd = crowd >= config.neighbor_min as usize;
                if in_crowd && armed && k > 0 {
                    out.push((t, SchemeDecision::Change));
                    armed = false;
                } else if !in_crowd {
                    armed = true;
                }
            }
            out
        }
        SchemeKind::CooperativeExchange => unreachable!("handled jointly"),
    }
}

/// One simultaneous group change of the cooperative scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupChange {
    pub t: f64,
    pub members: Vec<TrueVehicleId>,
}

/// Events of the cooperative exchange scheme for every trace, plus the group
/// changes that produced them.
///
/// Time advances on the global grid `j·bsm_period`. At each instant, armed
/// and non-silent vehicles that are pairwise within `neighbor_radius` form
/// groups (greedy cliques in trace order); groups of at least
/// `exchange_min_group` change together and disarm. A vehicle re-arms once
/// fewer than `exchange_min_group − 1` vehicles surround it. Outside groups a
/// vehicle follows the silent-period timer, skipping a periodic change if a
/// group change happened within the last period.
pub fn cooperative_schedule(
    traces: &[VehicleTrace],
    config: &SchemeConfig,
    bsm_period: f64,
    seed: u64,
) -> (Vec<Vec<(f64, SchemeDecision)>>, Vec<GroupChange>) {
    struct State {
        armed: bool,
        silent_until: f64,
        last_change: f64,
        next_periodic: u64,
    }
    let n = traces.len();
    let mut events: Vec<Vec<(f64, SchemeDecision)>> = vec![Vec::new(); n];
    let mut groups = Vec::new();
    let mut rngs: Vec<_> = traces
        .iter()
        .map(|t| stream_rng(seed, Stream::Scheme, t.vehicle.0))
        .collect();
    let mut state: Vec<State> = (0..n)
        .map(|_| State {
            armed: true,
            silent_until: f64::NEG_INFINITY,
            last_change: f64::NEG_INFINITY,
            next_periodic: 1,
        })
        .collect();
    let horizon = traces.iter().map(|t| t.exit_time).fold(0.0, f64::max);
    let radius = config.neighbor_radius;
    let min_group = config.exchange_min_group as usize;

    let mut j = 0u64;
    loop {
        let t = j as f64 * bsm_period;
        if t > horizon + TIME_EPS {
            break;
        }
        j += 1;
        let active: Vec<(usize, crate::trace::Point)> = traces
            .iter()
            .enumerate()
            .filter(|(_, tr)| t >= tr.entry_time - TIME_EPS && t < tr.exit_time - TIME_EPS)
            .filter_map(|(i, tr)| tr.state_at(t).map(|s| (i, s.position)))
            .collect();

        let eligible: Vec<(usize, crate::trace::Point)> = active
            .iter()
            .copied()
            .filter(|(i, _)| {
                let st = &state[*i];
                st.armed && t >= st.silent_until - TIME_EPS && t > traces[*i].entry_time + TIME_EPS
            })
            .collect();
        let mut grouped = vec![false; eligible.len()];
        for a in 0..eligible.len() {
            if grouped[a] {
                continue;
            }
            let mut clique = vec![a];
            for b in a + 1..eligible.len() {
                if grouped[b] {
                    continue;
                }
                if clique
                    .iter()
                    .all(|&m| eligible[m].1.distance(eligible[b].1) <= radius)
                {
                    clique.push(b);
                }
            }
            if clique.len() >= min_group {
                let mut members = Vec::with_capacity(clique.len());
                for &m in &clique {
                    grouped[m] = true;
                    let i = eligible[m].0;
                    events[i].push((t, SchemeDecision::Change));
                    state[i].armed = false;
                    state[i].last_change = t;
                    members.push(traces[i].vehicle);
                }
                groups.push(GroupChange { t, members });
            }
        }

        for &(i, p) in &active {
            if !state[i].armed {
                let around = active
                    .iter()
                    .filter(|(k, q)| *k != i && q.distance(p) <= radius)
                    .count();
                if around + 1 < min_group {
                    state[i].armed = true;
                }
            }
            let trace = &traces[i];
            let st = &mut state[i];
            loop {
                let due = trace.entry_time + st.next_periodic as f64 * config.period;
                if due > t + TIME_EPS {
                    break;
                }
                st.next_periodic += 1;
                let recently_changed = st.last_change > due - config.period + TIME_EPS;
                if recently_changed || t < st.silent_until - TIME_EPS {
                    continue;
                }
                let duration = uniform_silence(&mut rngs[i], config);
                events[i].push((t, SchemeDecision::SilentThenChange { duration }));
                st.silent_until = t + duration;
                st.last_change = t + duration;
            }
        }
    }
    (events, groups)
}

fn cooperative_events(
    traces: &[VehicleTrace],
    config: &SchemeConfig,
    bsm_period: f64,
    seed: u64,
) -> Vec<Vec<(f64, SchemeDecision)>> {
    cooperative_schedule(traces, config, bsm_period, seed).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::{generate_map, simulate_traffic, TraceSample, TrafficSpec};
    use crate::trace::Point;
    use std::collections::HashSet;

    /// Straight eastbound drive at constant speed, sampled at 0.1 s.
    pub(crate) fn straight(id: u64, entry: f64, duration: f64, speed: f64, y: f64) -> VehicleTrace {
        let dt = 0.1;
        let n = (duration / dt).round() as usize;
        let samples: Vec<TraceSample> = (0..=n)
            .map(|i| TraceSample {
                t: entry + i as f64 * dt,
                position: Point::new(speed * i as f64 * dt, y),
                speed,
                heading: 0.0,
                acceleration: 0.0,
            })
            .collect();
        VehicleTrace {
            vehicle: TrueVehicleId(id),
            dt,
            entry_time: samples[0].t,
            exit_time: samples[n].t,
            samples,
        }
    }

    fn stream_for(trace: &VehicleTrace, cfg: &SchemeConfig) -> IdentifierStream {
        let all = vec![trace.clone()];
        apply_scheme(trace, &all, cfg, 1.0, 3, &mut PseudonymPool::new(3)).unwrap()
    }

    #[test]
    fn periodical_boundary() {
        let t = straight(0, 0.0, 200.0, 10.0, 0.0);
        let s = stream_for(&t, &SchemeConfig::with_kind(SchemeKind::Periodical));
        assert_ne!(s.pseudonym_at(59.0), s.pseudonym_at(60.0));
        assert_eq!(s.pseudonym_at(0.0), s.pseudonym_at(59.0));
        assert_eq!(s.segments.len(), (200.0f64 / 60.0).ceil() as usize);
    }

    #[test]
    fn periodical_count_is_ceiling() {
        for d in [30.0, 60.0, 60.5, 119.9, 120.0, 121.0, 300.0] {
            let t = straight(0, 0.0, d, 10.0, 0.0);
            let s = stream_for(&t, &SchemeConfig::with_kind(SchemeKind::Periodical));
            assert_eq!(s.segments.len(), (t.active_duration() / 60.0).ceil() as usize, "d={d}");
        }
    }

    #[test]
    fn distance_changes_every_threshold() {
        let t = straight(0, 0.0, 170.0, 10.0, 0.0);
        let s = stream_for(&t, &SchemeConfig::with_kind(SchemeKind::Distance));
        // Oracle: position x = 10·t crosses 500·m at t = 50·m.
        let changes: Vec<f64> = s.change_times().collect();
        assert_eq!(changes.len(), 3);
        for (c, want) in changes.iter().zip([50.0, 100.0, 150.0]) {
            assert!((c - want).abs() < 1e-6, "{c} vs {want}");
        }
    }

    #[test]
    fn disposable_changes_after_max_messages() {
        let t = straight(0, 5.0, 130.0, 10.0, 0.0);
        let cfg = SchemeConfig {
            max_messages: 50,
            ..SchemeConfig::with_kind(SchemeKind::Disposable)
        };
        let s = stream_for(&t, &cfg);
        let changes: Vec<f64> = s.change_times().collect();
        assert_eq!(changes, vec![55.0, 105.0]);
    }

    #[test]
    fn random_with_zero_probability_never_changes() {
        let t = straight(0, 0.0, 600.0, 10.0, 0.0);
        let cfg = SchemeConfig {
            change_probability: 0.0,
            ..SchemeConfig::with_kind(SchemeKind::Random)
        };
        assert_eq!(stream_for(&t, &cfg).segments.len(), 1);
        let cfg = SchemeConfig {
            change_probability: 1.0,
            ..SchemeConfig::with_kind(SchemeKind::Random)
        };
        assert_eq!(stream_for(&t, &cfg).segments.len(), 600);
    }

    #[test]
    fn silent_period_precedes_each_change() {
        let t = straight(0, 0.0, 200.0, 10.0, 0.0);
        let s = stream_for(&t, &SchemeConfig::with_kind(SchemeKind::SilentPeriod));
        assert_eq!(s.silences.len(), 3);
        for (sil, seg) in s.silences.iter().zip(s.segments.iter().skip(1)) {
            let d = sil.end - sil.start;
            assert!((1.0..=5.0).contains(&d));
            assert_eq!(seg.issued_at, sil.end);
        }
    }

    #[test]
    fn car2car_changes_once_per_crowd() {
        // Three vehicles side by side for the whole drive: one change each,
        // never re-armed.
        let traces: Vec<_> = (0..3).map(|i| straight(i, 0.0, 100.0, 10.0, i as f64 * 5.0)).collect();
        let cfg = SchemeConfig::with_kind(SchemeKind::Car2Car);
        for s in apply_schemes(&traces, &cfg, 1.0, 1).unwrap() {
            assert_eq!(s.segments.len(), 2);
            assert_eq!(s.segments[1].issued_at, 1.0);
        }
        // A lone vehicle never changes.
        let lone = vec![straight(9, 0.0, 100.0, 10.0, 0.0)];
        assert_eq!(apply_schemes(&lone, &cfg, 1.0, 1).unwrap()[0].segments.len(), 1);
    }

    #[test]
    fn cooperative_group_changes_together() {
        let mut traces: Vec<_> = (0..3).map(|i| straight(i, 0.0, 100.0, 10.0, i as f64 * 5.0)).collect();
        traces.push(straight(3, 0.0, 100.0, 10.0, 500.0));
        let cfg = SchemeConfig::with_kind(SchemeKind::CooperativeExchange);
        let (_, groups) = cooperative_schedule(&traces, &cfg, 1.0, 4);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].members.len(), 3);
        let streams = apply_schemes(&traces, &cfg, 1.0, 4).unwrap();
        let t0 = groups[0].t;
        for s in &streams[..3] {
            assert!(s.change_times().any(|c| (c - t0).abs() < 1e-9));
        }
        // The lone vehicle falls back to silent periodic changes.
        assert!(!streams[3].silences.is_empty());
    }

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!("teleport".parse::<SchemeKind>(), Err(Error::Config(_))));
        assert_eq!("car2car".parse::<SchemeKind>().unwrap(), SchemeKind::Car2Car);
    }

    #[test]
    fn pseudonyms_are_never_shared() {
        let map = generate_map(5, 5, 100.0, 0.4).unwrap();
        let spec = TrafficSpec {
            n_vehicles: 60,
            duration: 400.0,
            ..TrafficSpec::default()
        };
        let traces = simulate_traffic(&map, &spec, 2).unwrap();
        for kind in SchemeKind::ALL {
            let streams = apply_schemes(&traces, &SchemeConfig::with_kind(kind), 1.0, 2).unwrap();
            let mut seen = HashSet::new();
            for s in &streams {
                for p in s.pseudonyms() {
                    assert!(seen.insert(p), "{kind}: pseudonym reused");
                }
            }
            let (_, groups) = cooperative_schedule(&traces, &SchemeConfig::with_kind(kind), 1.0, 2);
            if kind == SchemeKind::CooperativeExchange {
                for g in groups {
                    for m in g.members {
                        let s = streams.iter().find(|s| s.vehicle == m).unwrap();
                        assert!(s.change_times().any(|c| (c - g.t).abs() < 1e-9));
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let map = generate_map(5, 5, 100.0, 0.4).unwrap();
        let spec = TrafficSpec {
            n_vehicles: 30,
            duration: 300.0,
            ..TrafficSpec::default()
        };
        let traces = simulate_traffic(&map, &spec, 5).unwrap();
        for kind in SchemeKind::ALL {
            let cfg = SchemeConfig::with_kind(kind);
            assert_eq!(
                apply_schemes(&traces, &cfg, 1.0, 8).unwrap(),
                apply_schemes(&traces, &cfg, 1.0, 8).unwrap()
            );
        }
    }
}
