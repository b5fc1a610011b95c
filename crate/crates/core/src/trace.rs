//! Domain types shared across the pipeline and the CSV formats for
//! observation logs and ground truth.
//!
//! Observation log columns:
//!
//! ```text
//! antenna_id,kind,timestamp,rssi,identifier,x,y,speed,heading,accel
//! ```
//!
//! `kind` is `bsm` or `probe`. BSM rows carry the pseudonym as 16 hex digits
//! in `identifier`; probe rows carry `<mac>/<ssid>` and leave the five
//! kinematic columns empty.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity of a simulated vehicle. Only ground truth ever carries it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrueVehicleId(pub u64);

impl fmt::Display for TrueVehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Short-lived identifier carried in BSMs.
///
/// The issue time of a pseudonym is scheme bookkeeping and lives in
/// [`crate::schemes::PseudonymSegment`]; on the air only the value is visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pseudonym(pub u64);

impl fmt::Display for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for Pseudonym {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.len() != 16 {
            return Err(format!("pseudonym `{s}` must be 16 hex digits"));
        }
        u64::from_str_radix(s, 16)
            .map(Pseudonym)
            .map_err(|e| format!("pseudonym `{s}`: {e}"))
    }
}

/// 48-bit IEEE 802 MAC address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    /// Builds an address from the low 48 bits of `value`.
    pub fn from_u64(value: u64) -> Self {
        let b = value.to_be_bytes();
        MacAddr([b[2], b[3], b[4], b[5], b[6], b[7]])
    }

    pub fn to_u64(self) -> u64 {
        self.0.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64)
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl FromStr for MacAddr {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 6 {
            return Err(format!("mac `{s}` must have six octets"));
        }
        let mut out = [0u8; 6];
        for (slot, part) in out.iter_mut().zip(&parts) {
            if part.len() != 2 {
                return Err(format!("mac `{s}` has a malformed octet `{part}`"));
            }
            *slot = u8::from_str_radix(part, 16).map_err(|e| format!("mac `{s}`: {e}"))?;
        }
        Ok(MacAddr(out))
    }
}

/// Stable Wi-Fi identity of a vehicle's infotainment access point.
///
/// Ordering compares the MAC first, which is what every tie-break rule uses.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WifiId {
    pub mac: MacAddr,
    pub ssid: String,
}

impl WifiId {
    pub fn new(mac: MacAddr, ssid: impl Into<String>) -> Result<Self> {
        let ssid = ssid.into();
        if ssid.len() > 32 {
            return Err(Error::Input(format!("ssid `{ssid}` longer than 32 bytes")));
        }
        if ssid.chars().any(|c| matches!(c, ',' | '/' | '"' | '\n' | '\r')) {
            return Err(Error::Input(format!(
                "ssid `{ssid}` contains a reserved character"
            )));
        }
        Ok(WifiId { mac, ssid })
    }
}

impl fmt::Display for WifiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.mac, self.ssid)
    }
}

impl FromStr for WifiId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (mac, ssid) = s
            .split_once('/')
            .ok_or_else(|| format!("wifi identifier `{s}` must be `<mac>/<ssid>`"))?;
        WifiId::new(mac.parse()?, ssid).map_err(|e| e.to_string())
    }
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, frac: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * frac,
            self.y + (other.y - self.y) * frac,
        )
    }
}

/// Basic Safety Message as broadcast by a vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsmRecord {
    pub pseudonym: Pseudonym,
    pub timestamp: f64,
    pub position: Point,
    /// m/s
    pub speed: f64,
    /// radians, counter-clockwise from +x
    pub heading: f64,
    /// m/s²
    pub acceleration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub wifi_id: WifiId,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Bsm(BsmRecord),
    Probe(ProbeRecord),
}

pub type AntennaId = u32;

/// One message as captured by one antenna.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioObservation {
    pub antenna_id: AntennaId,
    pub payload: Payload,
    /// dBm
    pub rssi: f64,
}

impl RadioObservation {
    pub fn timestamp(&self) -> f64 {
        match &self.payload {
            Payload::Bsm(b) => b.timestamp,
            Payload::Probe(p) => p.timestamp,
        }
    }

    pub fn as_bsm(&self) -> Option<&BsmRecord> {
        match &self.payload {
            Payload::Bsm(b) => Some(b),
            Payload::Probe(_) => None,
        }
    }

    pub fn as_probe(&self) -> Option<&ProbeRecord> {
        match &self.payload {
            Payload::Probe(p) => Some(p),
            Payload::Bsm(_) => None,
        }
    }

    fn kind(&self) -> &'static str {
        match self.payload {
            Payload::Bsm(_) => "bsm",
            Payload::Probe(_) => "probe",
        }
    }

    fn identifier(&self) -> String {
        match &self.payload {
            Payload::Bsm(b) => b.pseudonym.to_string(),
            Payload::Probe(p) => p.wifi_id.to_string(),
        }
    }

    /// Canonical log order: timestamp, antenna, kind, identifier.
    pub fn log_order(a: &RadioObservation, b: &RadioObservation) -> std::cmp::Ordering {
        a.timestamp()
            .total_cmp(&b.timestamp())
            .then(a.antenna_id.cmp(&b.antenna_id))
            .then(a.kind().cmp(b.kind()))
            .then_with(|| a.identifier().cmp(&b.identifier()))
    }
}

/// Owner of every identifier emitted during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pseudonyms: BTreeMap<Pseudonym, TrueVehicleId>,
    pub macs: BTreeMap<MacAddr, TrueVehicleId>,
}

impl GroundTruth {
    pub fn owner_of_pseudonym(&self, p: Pseudonym) -> Option<TrueVehicleId> {
        self.pseudonyms.get(&p).copied()
    }

    pub fn owner_of_wifi(&self, w: &WifiId) -> Option<TrueVehicleId> {
        self.macs.get(&w.mac).copied()
    }

    /// Checks that every identifier in `observations` has an owner.
    pub fn covers(&self, observations: &[RadioObservation]) -> Result<()> {
        for obs in observations {
            let known = match &obs.payload {
                Payload::Bsm(b) => self.pseudonyms.contains_key(&b.pseudonym),
                Payload::Probe(p) => self.macs.contains_key(&p.wifi_id.mac),
            };
            if !known {
                return Err(Error::Internal(format!(
                    "identifier {} has no ground-truth owner",
                    obs.identifier()
                )));
            }
        }
        Ok(())
    }
}

pub const OBSERVATION_HEADER: [&str; 10] = [
    "antenna_id",
    "kind",
    "timestamp",
    "rssi",
    "identifier",
    "x",
    "y",
    "speed",
    "heading",
    "accel",
];

pub fn write_observation_log(observations: &[RadioObservation], destination: &Path) -> Result<()> {
    let file = File::create(destination).map_err(|e| Error::io(destination, e))?;
    write_observations_to(observations, BufWriter::new(file))
        .map_err(|e| Error::io(destination, e))
}

/// Writes the log to any sink. Used directly for hashing and in tests.
pub fn write_observations_to<W: Write>(
    observations: &[RadioObservation],
    sink: W,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(OBSERVATION_HEADER)?;
    for obs in observations {
        let mut row: Vec<String> = vec![
            obs.antenna_id.to_string(),
            obs.kind().to_string(),
            obs.timestamp().to_string(),
            obs.rssi.to_string(),
            obs.identifier(),
        ];
        match &obs.payload {
            Payload::Bsm(b) => row.extend([
                b.position.x.to_string(),
                b.position.y.to_string(),
                b.speed.to_string(),
                b.heading.to_string(),
                b.acceleration.to_string(),
            ]),
            Payload::Probe(_) => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn read_observation_log(source: &Path) -> Result<Vec<RadioObservation>> {
    let file = File::open(source).map_err(|e| Error::io(source, e))?;
    read_observations_from(BufReader::new(file), source)
}

/// Parses an observation log from any reader; `name` labels errors.
pub fn read_observations_from<R: Read>(reader: R, name: &Path) -> Result<Vec<RadioObservation>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| csv_error(name, &e))?
        .clone();
    if header.iter().ne(OBSERVATION_HEADER.iter().copied()) {
        return Err(Error::parse(
            name,
            1,
            format!("expected header `{}`", OBSERVATION_HEADER.join(",")),
        ));
    }

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(name, &e))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::parse(name, line, msg);

        let antenna_id: AntennaId = parse_field(&record[0], "antenna_id").map_err(bad)?;
        let timestamp: f64 = parse_field(&record[2], "timestamp").map_err(bad)?;
        let rssi: f64 = parse_field(&record[3], "rssi").map_err(bad)?;
        if !(timestamp >= 0.0) {
            return Err(bad(format!("timestamp {timestamp} is negative")));
        }
        let kinematics: Vec<&str> = record.iter().skip(5).collect();

        let payload = match &record[1] {
            "bsm" => {
                let pseudonym: Pseudonym = record[4].parse().map_err(bad)?;
                let x = parse_field(&record[5], "x").map_err(bad)?;
                let y = parse_field(&record[6], "y").map_err(bad)?;
                let speed: f64 = parse_field(&record[7], "speed").map_err(bad)?;
                let heading = parse_field(&record[8], "heading").map_err(bad)?;
                let acceleration = parse_field(&record[9], "accel").map_err(bad)?;
                if speed < 0.0 {
                    return Err(bad(format!("speed {speed} is negative")));
                }
                Payload::Bsm(BsmRecord {
                    pseudonym,
                    timestamp,
                    position: Point::new(x, y),
                    speed,
                    heading,
                    acceleration,
                })
            }
            "probe" => {
                if let Some(col) = kinematics.iter().position(|f| !f.is_empty()) {
                    return Err(bad(format!(
                        "probe row must leave `{}` empty",
                        OBSERVATION_HEADER[5 + col]
                    )));
                }
                let wifi_id: WifiId = record[4].parse().map_err(bad)?;
                Payload::Probe(ProbeRecord { wifi_id, timestamp })
            }
            other => return Err(bad(format!("unknown kind `{other}`"))),
        };
        out.push(RadioObservation {
            antenna_id,
            payload,
            rssi,
        });
    }
    Ok(out)
}

fn parse_field<T: FromStr>(raw: &str, column: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| format!("column `{column}`: cannot parse `{raw}`: {e}"))
}

fn csv_error(name: &Path, e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::parse(name, line, e.to_string())
}

/// Ground truth as two CSV sections: `pseudonym,vehicle` then `mac,vehicle`.
pub fn write_ground_truth(truth: &GroundTruth, destination: &Path) -> Result<()> {
    let file = File::create(destination).map_err(|e| Error::io(destination, e))?;
    let mut w = BufWriter::new(file);
    let mut body = String::from("pseudonym,vehicle\n");
    for (p, v) in &truth.pseudonyms {
        body.push_str(&format!("{p},{v}\n"));
    }
    body.push_str("mac,vehicle\n");
    for (m, v) in &truth.macs {
        body.push_str(&format!("{m},{v}\n"));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(destination, e))
}

pub fn read_ground_truth(source: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(source).map_err(|e| Error::io(source, e))?;
    parse_ground_truth(&text, source)
}

pub(crate) fn parse_ground_truth(text: &str, name: &Path) -> Result<GroundTruth> {
    enum Section {
        None,
        Pseudonyms,
        Macs,
    }
    let mut truth = GroundTruth::default();
    let mut section = Section::None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u64 + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        match row {
            "pseudonym,vehicle" => {
                section = Section::Pseudonyms;
                continue;
            }
            "mac,vehicle" => {
                section = Section::Macs;
                continue;
            }
            _ => {}
        }
        let (key, vehicle) = row
            .split_once(',')
            .ok_or_else(|| Error::parse(name, line, "expected two columns"))?;
        let vehicle = TrueVehicleId(
            vehicle
                .parse()
                .map_err(|e| Error::parse(name, line, format!("vehicle `{vehicle}`: {e}")))?,
        );
        let dup = match section {
            Section::None => return Err(Error::parse(name, line, "row before any section header")),
            Section::Pseudonyms => {
                let p: Pseudonym = key.parse().map_err(|e| Error::parse(name, line, e))?;
                truth.pseudonyms.insert(p, vehicle).is_some()
            }
            Section::Macs => {
                let m: MacAddr = key.parse().map_err(|e| Error::parse(name, line, e))?;
                truth.macs.insert(m, vehicle).is_some()
            }
        };
        if dup {
            return Err(Error::parse(name, line, format!("`{key}` has two owners")));
        }
    }
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bsm(t: f64) -> RadioObservation {
        RadioObservation {
            antenna_id: 2,
            payload: Payload::Bsm(BsmRecord {
                pseudonym: Pseudonym(0xdead_beef_0000_0001),
                timestamp: t,
                position: Point::new(101.25, 99.5),
                speed: 11.3,
                heading: -1.5707963267948966,
                acceleration: -0.7,
            }),
            rssi: -61.234,
        }
    }

    fn probe(t: f64) -> RadioObservation {
        RadioObservation {
            antenna_id: 0,
            payload: Payload::Probe(ProbeRecord {
                wifi_id: WifiId::new(MacAddr([2, 0, 0, 0xab, 0xcd, 0xef]), "IVI-00AB").unwrap(),
                timestamp: t,
            }),
            rssi: -70.0,
        }
    }

    fn to_string(obs: &[RadioObservation]) -> String {
        let mut buf = Vec::new();
        write_observations_to(obs, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    fn parse(text: &str) -> Result<Vec<RadioObservation>> {
        read_observations_from(text.as_bytes(), Path::new("log.csv"))
    }

    #[test]
    fn empty_log_is_header_only() {
        let text = to_string(&[]);
        assert_eq!(text, "antenna_id,kind,timestamp,rssi,identifier,x,y,speed,heading,accel\n");
        assert!(parse(&text).unwrap().is_empty());
    }

    #[test]
    fn bsm_row_populates_all_columns() {
        let text = to_string(&[bsm(3.5)]);
        let row = text.lines().nth(1).unwrap();
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 10);
        assert_eq!(cols[1], "bsm");
        assert!(cols.iter().all(|c| !c.is_empty()));
    }

    #[test]
    fn probe_row_leaves_kinematics_empty() {
        let text = to_string(&[probe(0.1)]);
        let row = text.lines().nth(1).unwrap();
        assert!(row.ends_with(",,,,,"));
        assert!(row.contains("02:00:00:ab:cd:ef/IVI-00AB"));
    }

    #[test]
    fn probe_with_speed_is_rejected() {
        let text = "antenna_id,kind,timestamp,rssi,identifier,x,y,speed,heading,accel\n\
                    0,probe,1.0,-50,02:00:00:00:00:01/x,,,3.0,,\n";
        let err = parse(text).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("speed"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let text = "antenna_id,kind,timestamp,rssi,identifier,x,y,speed,heading,accel\n\
                    0,bluetooth,1.0,-50,abc,,,,,\n";
        assert!(matches!(parse(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn malformed_row_names_line() {
        let text = "antenna_id,kind,timestamp,rssi,identifier,x,y,speed,heading,accel\n\
                    0,probe,1.0,-50,02:00:00:00:00:01/x,,,,,\n\
                    0,bsm,oops,-50,0000000000000001,1,2,3,4,5\n";
        match parse(text).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("timestamp"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unwritable_destination_reports_path() {
        let path = Path::new("/nonexistent-dir/obs.csv");
        let err = write_observation_log(&[], path).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/obs.csv"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let obs = vec![probe(0.0), bsm(0.0), probe(0.1)];
        write_observation_log(&obs, &path).unwrap();
        assert_eq!(read_observation_log(&path).unwrap(), obs);
    }

    #[test]
    fn ground_truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let mut truth = GroundTruth::default();
        truth.pseudonyms.insert(Pseudonym(7), TrueVehicleId(1));
        truth.pseudonyms.insert(Pseudonym(u64::MAX), TrueVehicleId(2));
        truth.macs.insert(MacAddr([2, 1, 2, 3, 4, 5]), TrueVehicleId(1));
        write_ground_truth(&truth, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("pseudonym,vehicle\n"));
        assert!(text.contains("mac,vehicle\n02:01:02:03:04:05,1\n"));
        assert_eq!(read_ground_truth(&path).unwrap(), truth);
    }

    #[test]
    fn ground_truth_rejects_duplicate_owner() {
        let text = "pseudonym,vehicle\n0000000000000001,1\n0000000000000001,2\n";
        assert!(parse_ground_truth(text, Path::new("t")).is_err());
    }

    fn arb_observation() -> impl Strategy<Value = RadioObservation> {
        let bsm = (
            0u32..8,
            any::<u64>(),
            0.0f64..1e4,
            -120.0f64..23.0,
            (-1e3f64..1e3, -1e3f64..1e3),
            0.0f64..40.0,
            -3.2f64..3.2,
            -3.0f64..3.0,
        )
            .prop_map(|(a, p, t, rssi, (x, y), v, h, acc)| RadioObservation {
                antenna_id: a,
                payload: Payload::Bsm(BsmRecord {
                    pseudonym: Pseudonym(p),
                    timestamp: t,
                    position: Point::new(x, y),
                    speed: v,
                    heading: h,
                    acceleration: acc,
                }),
                rssi,
            });
        let probe = (0u32..8, any::<u64>(), "[A-Za-z0-9 _-]{0,12}", 0.0f64..1e4, -120.0f64..20.0)
            .prop_map(|(a, mac, ssid, t, rssi)| RadioObservation {
                antenna_id: a,
                payload: Payload::Probe(ProbeRecord {
                    wifi_id: WifiId::new(MacAddr::from_u64(mac), ssid).unwrap(),
                    timestamp: t,
                }),
                rssi,
            });
        prop_oneof![bsm, probe]
    }

    proptest! {
        #[test]
        fn write_read_is_identity(mut obs in proptest::collection::vec(arb_observation(), 0..60)) {
            obs.sort_by(RadioObservation::log_order);
            let text = to_string(&obs);
            prop_assert_eq!(parse(&text).unwrap(), obs);
        }
    }

    #[test]
    fn thousand_mixed_records_round_trip() {
        use proptest::strategy::ValueTree;
        use proptest::test_runner::TestRunner;
        let mut runner = TestRunner::deterministic();
        let strat = proptest::collection::vec(arb_observation(), 1000);
        let mut obs = strat.new_tree(&mut runner).unwrap().current();
        obs.sort_by(RadioObservation::log_order);
        assert_eq!(parse(&to_string(&obs)).unwrap(), obs);
    }
}
