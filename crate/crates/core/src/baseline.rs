//! Dead-reckoning pseudonym linker in the style of SLOWTrack.
//!
//! Every pseudonym forms one track across all zones. Tracks are visited in
//! order of their last message; each is joined to the later track whose first
//! message best continues its trajectory within the gap and tolerance gates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linker::heading_change;
use crate::trace::{BsmRecord, Point, Pseudonym, RadioObservation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlowtrackConfig {
    /// seconds
    pub max_gap: f64,
    /// meters
    pub position_tolerance: f64,
    /// m/s
    pub velocity_tolerance: f64,
    /// radians; largest heading change accepted across a link
    pub heading_tolerance: f64,
}

impl Default for SlowtrackConfig {
    fn default() -> Self {
        SlowtrackConfig {
            max_gap: 6.0,
            position_tolerance: 15.0,
            velocity_tolerance: 5.0,
            heading_tolerance: 2.0,
        }
    }
}

impl SlowtrackConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("max_gap", self.max_gap),
            ("position_tolerance", self.position_tolerance),
            ("velocity_tolerance", self.velocity_tolerance),
            ("heading_tolerance", self.heading_tolerance),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("baseline.{name} must be positive (got {v})")));
            }
        }
        Ok(())
    }
}

struct Track<'a> {
    pseudonym: Pseudonym,
    first: &'a BsmRecord,
    last: &'a BsmRecord,
}

/// Partition of the observed pseudonyms into predicted vehicles.
pub fn slowtrack_link(observations: &[RadioObservation], config: &SlowtrackConfig) -> Vec<Vec<Pseudonym>> {
    const EPS: f64 = 1e-9;
    let mut spans: BTreeMap<Pseudonym, (&BsmRecord, &BsmRecord)> = BTreeMap::new();
    for b in observations.iter().filter_map(|o| o.as_bsm()) {
        spans
            .entry(b.pseudonym)
            .and_modify(|(first, last)| {
                if b.timestamp < first.timestamp {
                    *first = b;
                }
                if b.timestamp > last.timestamp {
                    *last = b;
                }
            })
            .or_insert((b, b));
    }
    let mut tracks: Vec<Track> = spans
        .into_iter()
        .map(|(pseudonym, (first, last))| Track { pseudonym, first, last })
        .collect();
    tracks.sort_by(|a, b| {
        a.last
            .timestamp
            .total_cmp(&b.last.timestamp)
            .then(a.pseudonym.cmp(&b.pseudonym))
    });

    let n = tracks.len();
    let mut next: Vec<Option<usize>> = vec![None; n];
    let mut has_prev = vec![false; n];
    for a in 0..n {
        let end = tracks[a].last;
        let (sin, cos) = end.heading.sin_cos();
        let mut best: Option<(f64, usize)> = None;
        for b in 0..n {
            if b == a || has_prev[b] {
                continue;
            }
            let start = tracks[b].first;
            let gap = start.timestamp - end.timestamp;
            if gap <= EPS || gap > config.max_gap + EPS {
                continue;
            }
            let reckoned = Point::new(
                end.position.x + end.speed * cos * gap,
                end.position.y + end.speed * sin * gap,
            );
            let err = reckoned.distance(start.position);
            if err > config.position_tolerance
                || (start.speed - end.speed).abs() > config.velocity_tolerance
                || heading_change(end.heading, start.heading) > config.heading_tolerance
            {
                continue;
            }
            if best.is_none_or(|(e, _)| err < e) {
                best = Some((err, b));
            }
        }
        if let Some((_, b)) = best {
            next[a] = Some(b);
            has_prev[b] = true;
        }
    }

    let mut groups = Vec::new();
    for head in 0..n {
        if has_prev[head] {
            continue;
        }
        let mut group = vec![tracks[head].pseudonym];
        let mut cur = head;
        while let Some(b) = next[cur] {
            group.push(tracks[b].pseudonym);
            cur = b;
        }
        groups.push(group);
    }
    groups
}
