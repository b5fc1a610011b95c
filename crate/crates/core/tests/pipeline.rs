use std::collections::{BTreeMap, BTreeSet};

use radar_core::baseline::slowtrack_link;
use radar_core::config::RunConfig;
use radar_core::eval::{
    link_all_zones, observed_pseudonyms, pairwise_score, run_experiment, simulate_scenario, Scenario, Tracker,
};
use radar_core::radar::{associate, candidate_ids, Metric, RadarConfig};
use radar_core::schemes::SchemeKind;
use radar_core::trace::{Pseudonym, RadioObservation, TrueVehicleId};

fn config(vehicles: usize, duration: f64) -> RunConfig {
    let mut c = RunConfig::default();
    c.traffic.n_vehicles = vehicles;
    c.traffic.duration = duration;
    c.resolve();
    c
}

fn scenario(kind: SchemeKind, seed: u64) -> (RunConfig, Scenario) {
    let mut c = config(40, 300.0);
    c.scheme.kind = kind;
    let s = simulate_scenario(&c.simulation(), seed).unwrap();
    (c, s)
}

#[test]
fn ground_truth_covers_every_observation() {
    for kind in SchemeKind::ALL {
        let (_, s) = scenario(kind, 3);
        s.capture.truth.covers(&s.capture.observations).unwrap();
    }
}

#[test]
fn observations_lie_inside_their_zone() {
    let (c, s) = scenario(SchemeKind::Periodical, 5);
    let traces: BTreeMap<TrueVehicleId, _> = s.traces.iter().map(|t| (t.vehicle, t)).collect();
    let zones: BTreeMap<u32, _> = c.zones.iter().map(|z| (z.antenna_id, z)).collect();
    for o in &s.capture.observations {
        let owner = match (o.as_bsm(), o.as_probe()) {
            (Some(b), _) => s.capture.truth.owner_of_pseudonym(b.pseudonym).unwrap(),
            (_, Some(p)) => s.capture.truth.owner_of_wifi(&p.wifi_id).unwrap(),
            _ => unreachable!(),
        };
        let pos = traces[&owner].state_at(o.timestamp()).unwrap().position;
        let zone = zones[&o.antenna_id];
        assert!(pos.distance(zone.center) <= zone.radius + 1e-9);
    }
}

#[test]
fn silences_hold_no_bsm_and_keep_probes() {
    // Seed 1 places several silences inside zones.
    let (_, silent) = scenario(SchemeKind::SilentPeriod, 1);
    let (_, plain) = scenario(SchemeKind::Periodical, 1);
    let streams: BTreeMap<TrueVehicleId, _> = silent.streams.iter().map(|s| (s.vehicle, s)).collect();
    let mut silences = 0;
    for s in &silent.streams {
        silences += s.silences.len();
    }
    assert!(silences > 0);
    for o in &silent.capture.observations {
        if let Some(b) = o.as_bsm() {
            let owner = silent.capture.truth.owner_of_pseudonym(b.pseudonym).unwrap();
            assert!(!streams[&owner].is_silent(b.timestamp), "BSM at {} inside a silence", b.timestamp);
        }
    }
    let probe_counts = |s: &Scenario| {
        let mut m: BTreeMap<(u32, String), usize> = BTreeMap::new();
        for o in &s.capture.observations {
            if let Some(p) = o.as_probe() {
                *m.entry((o.antenna_id, p.wifi_id.to_string())).or_default() += 1;
            }
        }
        m
    };
    assert_eq!(probe_counts(&silent), probe_counts(&plain));
    let bsms = |s: &Scenario| s.capture.observations.iter().filter(|o| o.as_bsm().is_some()).count();
    assert!(bsms(&silent) < bsms(&plain), "{} vs {}", bsms(&silent), bsms(&plain));
}

#[test]
fn every_zone_sees_traffic() {
    let c = config(50, 600.0);
    for seed in 0..5 {
        let s = simulate_scenario(&c.simulation(), seed).unwrap();
        let heard: BTreeSet<u32> = s.capture.observations.iter().map(|o| o.antenna_id).collect();
        for z in &c.zones {
            assert!(heard.contains(&z.antenna_id), "zone {} silent for seed {seed}", z.antenna_id);
        }
    }
}

#[test]
fn chains_partition_the_zone_bsms() {
    for kind in [SchemeKind::Periodical, SchemeKind::SilentPeriod, SchemeKind::Car2Car] {
        let (c, s) = scenario(kind, 11);
        let chains = link_all_zones(&s.capture.observations, &c.linker);
        let mut seen = BTreeSet::new();
        for ch in &chains {
            assert!(ch.messages.windows(2).all(|w| w[0].bsm.timestamp < w[1].bsm.timestamp));
            let mut order: Vec<Pseudonym> = Vec::new();
            for m in &ch.messages {
                if order.last() != Some(&m.bsm.pseudonym) {
                    assert!(!order.contains(&m.bsm.pseudonym), "pseudonym recurs in a chain");
                    order.push(m.bsm.pseudonym);
                }
                assert!(seen.insert((ch.zone, m.bsm.pseudonym, m.bsm.timestamp.to_bits())));
            }
            assert_eq!(order, ch.pseudonyms);
        }
        let bsms = s.capture.observations.iter().filter(|o| o.as_bsm().is_some()).count();
        assert_eq!(seen.len(), bsms);
    }
}

#[test]
fn baseline_partitions_observed_pseudonyms() {
    let (c, s) = scenario(SchemeKind::SilentPeriod, 2);
    let groups = slowtrack_link(&s.capture.observations, &c.baseline);
    let mut all: Vec<Pseudonym> = groups.into_iter().flatten().collect();
    let n = all.len();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), n);
    assert_eq!(all.into_iter().collect::<BTreeSet<_>>(), observed_pseudonyms(&s.capture.observations));
}

#[test]
fn truth_grouping_scores_one() {
    for seed in 0..3 {
        let (_, s) = scenario(SchemeKind::Random, seed);
        let universe = observed_pseudonyms(&s.capture.observations);
        let mut by_owner: BTreeMap<TrueVehicleId, Vec<Pseudonym>> = BTreeMap::new();
        for p in &universe {
            by_owner.entry(s.capture.truth.owner_of_pseudonym(*p).unwrap()).or_default().push(*p);
        }
        let grouping: Vec<Vec<Pseudonym>> = by_owner.into_values().collect();
        assert_eq!(pairwise_score(&grouping, &s.capture.truth, &universe).unwrap(), (1.0, 1.0));
    }
}

#[test]
fn associations_pick_from_the_candidate_set() {
    let (c, s) = scenario(SchemeKind::Periodical, 4);
    let obs = &s.capture.observations;
    let chains = link_all_zones(obs, &c.linker);
    let mut probes: BTreeMap<u32, Vec<RadioObservation>> = BTreeMap::new();
    for o in obs.iter().filter(|o| o.as_probe().is_some()) {
        probes.entry(o.antenna_id).or_default().push(o.clone());
    }
    for metric in [Metric::Count, Metric::Statistical, Metric::Pearson] {
        let radar = RadarConfig {
            metric,
            ..c.radar.clone()
        };
        let assoc = associate(&chains, obs, &radar, c.radio.expected_ratio(), 3.0).unwrap();
        assert_eq!(assoc.len(), chains.len());
        for (a, ch) in assoc.iter().zip(&chains) {
            let cands = candidate_ids(ch, probes.get(&ch.zone).map_or(&[][..], |v| v), radar.slack);
            assert_eq!(a.candidates, cands.len());
            if let Some(w) = &a.wifi_id {
                assert!(cands.contains(w));
            }
        }
    }
}

#[test]
fn experiment_rows_follow_cells_then_seeds() {
    let mut c = config(20, 200.0);
    c.seeds = (0..5).collect();
    c.experiment.schemes = SchemeKind::F2MD.to_vec();
    c.experiment.metrics = vec![Tracker::Count, Tracker::Statistical, Tracker::Pearson];
    let reports = run_experiment(&c.plan()).unwrap();
    assert_eq!(reports.len(), 75);
    let mut i = 0;
    for s in SchemeKind::F2MD {
        for m in [Tracker::Count, Tracker::Statistical, Tracker::Pearson] {
            for seed in 0..5 {
                let r = &reports[i];
                assert_eq!((r.scheme, r.metric, r.seed), (s, m, seed));
                assert!(r.is_ok());
                assert!((0.0..=1.0).contains(&r.f_measure));
                i += 1;
            }
        }
    }
}
