//! Per-zone pseudonym chaining by kinematic continuity.
//!
//! A nearest-neighbour gating tracker: each BSM either continues the track
//! already using its pseudonym or, when the pseudonym is new, takes over the
//! open track whose dead-reckoned prediction lands closest to it.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{AntennaId, BsmRecord, Point, Pseudonym, RadioObservation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkerConfig {
    /// meters
    pub gate_radius: f64,
    /// m/s
    pub gate_speed: f64,
    /// radians; largest heading change accepted across a link
    pub gate_heading: f64,
    /// seconds
    pub max_gap: f64,
    /// seconds
    pub max_silence: f64,
    pub bridge_silence: bool,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        LinkerConfig {
            gate_radius: 15.0,
            gate_speed: 5.0,
            gate_heading: 2.0,
            max_gap: 2.5,
            max_silence: 6.0,
            bridge_silence: true,
        }
    }
}

impl LinkerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gate_radius", self.gate_radius),
            ("gate_speed", self.gate_speed),
            ("gate_heading", self.gate_heading),
            ("max_gap", self.max_gap),
            ("max_silence", self.max_silence),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("linker.{name} must be positive (got {v})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMessage {
    pub bsm: BsmRecord,
    pub rssi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudonymChain {
    pub zone: AntennaId,
    /// Index within the zone, in order of `first_seen`.
    pub id: usize,
    /// First-appearance order.
    pub pseudonyms: Vec<Pseudonym>,
    pub messages: Vec<ChainMessage>,
    pub first_seen: f64,
    pub last_seen: f64,
}

impl PseudonymChain {
    fn open(zone: AntennaId, msg: ChainMessage) -> Self {
        let t = msg.bsm.timestamp;
        PseudonymChain {
            zone,
            id: 0,
            pseudonyms: vec![msg.bsm.pseudonym],
            messages: vec![msg],
            first_seen: t,
            last_seen: t,
        }
    }

    fn push(&mut self, msg: ChainMessage) {
        if self.current() != msg.bsm.pseudonym {
            self.pseudonyms.push(msg.bsm.pseudonym);
        }
        self.last_seen = msg.bsm.timestamp;
        self.messages.push(msg);
    }

    pub fn current(&self) -> Pseudonym {
        *self.pseudonyms.last().expect("chains are never empty")
    }

    pub fn last(&self) -> &BsmRecord {
        &self.messages.last().expect("chains are never empty").bsm
    }

    pub fn first(&self) -> &BsmRecord {
        &self.messages[0].bsm
    }

    pub fn bsm_count(&self) -> usize {
        self.messages.len()
    }
}

/// Dead-reckoned position and speed `dt` seconds after `last`.
pub fn predict_state(last: &BsmRecord, dt: f64) -> (Point, f64) {
    let (sin, cos) = last.heading.sin_cos();
    let travel = last.speed * dt + 0.5 * last.acceleration * dt * dt;
    let position = Point::new(last.position.x + cos * travel, last.position.y + sin * travel);
    (position, (last.speed + last.acceleration * dt).max(0.0))
}

/// Absolute difference between two headings, in [0, π].
pub fn heading_change(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Phase-1 chaining over the BSMs heard by antenna `zone`. Other records in
/// `log` are ignored. `log` must be sorted by timestamp.
pub fn match_pseudonyms(
    zone: AntennaId,
    log: &[RadioObservation],
    gate_radius: f64,
    gate_speed: f64,
    gate_heading: f64,
    max_gap: f64,
) -> Vec<PseudonymChain> {
    const EPS: f64 = 1e-9;
    let msgs: Vec<ChainMessage> = log
        .iter()
        .filter(|o| o.antenna_id == zone)
        .filter_map(|o| {
            o.as_bsm().map(|b| ChainMessage {
                bsm: b.clone(),
                rssi: o.rssi,
            })
        })
        .collect();

    let mut chains: Vec<PseudonymChain> = Vec::new();
    // Current pseudonym of each chain → chain index.
    let mut by_current: HashMap<Pseudonym, usize> = HashMap::new();
    let mut seen: BTreeSet<Pseudonym> = BTreeSet::new();

    let mut start = 0;
    while start < msgs.len() {
        let t = msgs[start].bsm.timestamp;
        let end = start + msgs[start..].partition_point(|m| m.bsm.timestamp <= t + EPS);
        let batch = &msgs[start..end];
        start = end;

        let mut extended = vec![false; chains.len()];
        let mut fresh = Vec::new();
        for m in batch {
            match by_current.get(&m.bsm.pseudonym) {
                Some(&c) if chains[c].last_seen < m.bsm.timestamp - EPS => {
                    chains[c].push(m.clone());
                    extended[c] = true;
                }
                Some(_) => {} // same pseudonym twice at one instant: duplicate
                None => fresh.push(m),
            }
        }

        // Gate every (fresh message, idle open track) pair, then assign
        // greedily by prediction error.
        let mut pairs = Vec::new();
        for (mi, m) in fresh.iter().enumerate() {
            if seen.contains(&m.bsm.pseudonym) {
                continue; // superseded pseudonyms never rejoin a track
            }
            for (ci, c) in chains.iter().enumerate() {
                let gap = m.bsm.timestamp - c.last_seen;
                if extended[ci] || gap <= EPS || gap > max_gap + EPS {
                    continue;
                }
                let (pos, speed) = predict_state(c.last(), gap);
                let err = pos.distance(m.bsm.position);
                if err <= gate_radius
                    && (speed - m.bsm.speed).abs() <= gate_speed
                    && heading_change(c.last().heading, m.bsm.heading) <= gate_heading
                {
                    pairs.push((err, c.last_seen, ci, mi));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        });
        let mut taken = vec![false; fresh.len()];
        for (_, _, ci, mi) in pairs {
            if extended[ci] || taken[mi] {
                continue;
            }
            let m = fresh[mi];
            by_current.remove(&chains[ci].current());
            by_current.insert(m.bsm.pseudonym, ci);
            seen.insert(m.bsm.pseudonym);
            chains[ci].push(m.clone());
            extended[ci] = true;
            taken[mi] = true;
        }
        for (mi, m) in fresh.iter().enumerate() {
            if taken[mi] {
                continue;
            }
            if let Some(&c) = by_current.get(&m.bsm.pseudonym) {
                // A later message of a pseudonym opened in this same batch.
                if chains[c].last_seen < m.bsm.timestamp - EPS {
                    chains[c].push((*m).clone());
                }
                continue;
            }
            by_current.insert(m.bsm.pseudonym, chains.len());
            seen.insert(m.bsm.pseudonym);
            chains.push(PseudonymChain::open(zone, (*m).clone()));
        }
    }
    number(&mut chains);
    chains
}

fn number(chains: &mut [PseudonymChain]) {
    chains.sort_by(|a, b| {
        a.first_seen
            .total_cmp(&b.first_seen)
            .then(a.pseudonyms[0].cmp(&b.pseudonyms[0]))
    });
    for (i, c) in chains.iter_mut().enumerate() {
        c.id = i;
    }
}

/// Merges chains separated by a silent gap of at most `max_silence` seconds
/// when the earlier chain's prediction lands within `gate_radius` of the
/// later chain's first message and its heading turns by at most
/// `gate_heading`. Pairs are taken greedily by prediction error;
/// each chain gains at most one successor and one predecessor.
pub fn silence_bridge(
    chains: Vec<PseudonymChain>,
    max_silence: f64,
    gate_radius: f64,
    gate_heading: f64,
) -> Vec<PseudonymChain> {
    const EPS: f64 = 1e-9;
    let n = chains.len();
    let mut pairs = Vec::new();
    for (a, ca) in chains.iter().enumerate() {
        for (b, cb) in chains.iter().enumerate() {
            let gap = cb.first_seen - ca.last_seen;
            if a == b || ca.zone != cb.zone || gap <= EPS || gap > max_silence + EPS {
                continue;
            }
            if cb.pseudonyms.iter().any(|p| ca.pseudonyms.contains(p)) {
                continue;
            }
            let (pos, _) = predict_state(ca.last(), gap);
            let err = pos.distance(cb.first().position);
            if err <= gate_radius && heading_change(ca.last().heading, cb.first().heading) <= gate_heading {
                pairs.push((err, a, b));
            }
        }
    }
    if pairs.is_empty() {
        return chains;
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut next = vec![None; n];
    let mut has_prev = vec![false; n];
    for (_, a, b) in pairs {
        if next[a].is_none() && !has_prev[b] {
            next[a] = Some(b);
            has_prev[b] = true;
        }
    }

    let mut slots: Vec<Option<PseudonymChain>> = chains.into_iter().map(Some).collect();
    let mut out = Vec::new();
    for head in 0..n {
        if has_prev[head] {
            continue;
        }
        let mut merged = slots[head].take().expect("each chain visited once");
        let mut cur = head;
        while let Some(b) = next[cur] {
            let tail = slots[b].take().expect("each chain visited once");
            for p in tail.pseudonyms {
                if !merged.pseudonyms.contains(&p) {
                    merged.pseudonyms.push(p);
                }
            }
            merged.messages.extend(tail.messages);
            merged.last_seen = tail.last_seen;
            cur = b;
        }
        out.push(merged);
    }
    number(&mut out);
    out
}

/// Chains of one zone under `config`, bridged across silences if enabled.
pub fn link_zone(zone: AntennaId, log: &[RadioObservation], config: &LinkerConfig) -> Vec<PseudonymChain> {
    let chains = match_pseudonyms(
        zone,
        log,
        config.gate_radius,
        config.gate_speed,
        config.gate_heading,
        config.max_gap,
    );
    if config.bridge_silence {
        silence_bridge(chains, config.max_silence, config.gate_radius, config.gate_heading)
    } else {
        chains
    }
}
