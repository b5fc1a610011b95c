//! Ground-truth vehicle motion.
//!
//! Vehicles drive along the centerlines of a Manhattan grid. Each one enters
//! at a boundary intersection and performs a random walk over intersections
//! until it drives off the map or the simulation ends. Traces can also be
//! loaded from floating-car-data CSV exports.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::trace::{Point, TrueVehicleId};

/// Building fills above this leave no room for the road and are clamped.
pub const MAX_BUILDING_FILL: f64 = 0.95;

/// Axis-aligned building footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub min: Point,
    pub max: Point,
}

impl Obstacle {
    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadMap {
    /// Intersections per column of the grid.
    pub rows: usize,
    /// Intersections per row of the grid.
    pub cols: usize,
    pub block_length: f64,
    /// Effective fill after clamping.
    pub building_fill: f64,
    pub obstacles: Vec<Obstacle>,
}

impl RoadMap {
    pub fn width(&self) -> f64 {
        (self.cols - 1) as f64 * self.block_length
    }

    pub fn height(&self) -> f64 {
        (self.rows - 1) as f64 * self.block_length
    }

    /// Intersection `(row, col)` sits at `x = col·block`, `y = row·block`.
    pub fn intersection(&self, row: usize, col: usize) -> Point {
        Point::new(col as f64 * self.block_length, row as f64 * self.block_length)
    }

    pub fn intersection_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, p: Point) -> bool {
        const EPS: f64 = 1e-9;
        p.x >= -EPS && p.y >= -EPS && p.x <= self.width() + EPS && p.y <= self.height() + EPS
    }

    fn is_node(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.rows && (col as usize) < self.cols
    }
}

/// Builds a `rows × cols` intersection grid with one centered square
/// building per block covering `building_fill` of the block area.
pub fn generate_map(rows: usize, cols: usize, block_length: f64, building_fill: f64) -> Result<RoadMap> {
    if rows < 2 || cols < 2 {
        return Err(Error::Config(format!(
            "map.rows and map.cols must be at least 2 (got {rows}×{cols})"
        )));
    }
    if !(block_length > 0.0) || !block_length.is_finite() {
        return Err(Error::Config(format!(
            "map.block_length must be positive (got {block_length})"
        )));
    }
    if !(0.0..=1.0).contains(&building_fill) {
        return Err(Error::Config(format!(
            "map.building_fill must lie in [0, 1] (got {building_fill})"
        )));
    }
    let fill = if building_fill > MAX_BUILDING_FILL {
        log::warn!(
            "building_fill {building_fill} would cover the roads; clamped to {MAX_BUILDING_FILL}"
        );
        MAX_BUILDING_FILL
    } else {
        building_fill
    };

    let mut obstacles = Vec::new();
    if fill > 0.0 {
        let side = block_length * fill.sqrt();
        let margin = (block_length - side) / 2.0;
        for r in 0..rows - 1 {
            for c in 0..cols - 1 {
                let x0 = c as f64 * block_length + margin;
                let y0 = r as f64 * block_length + margin;
                obstacles.push(Obstacle {
                    min: Point::new(x0, y0),
                    max: Point::new(x0 + side, y0 + side),
                });
            }
        }
    }
    Ok(RoadMap {
        rows,
        cols,
        block_length,
        building_fill: fill,
        obstacles,
    })
}

/// Map parameters as they appear in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSpec {
    pub rows: usize,
    pub cols: usize,
    /// meters
    pub block_length: f64,
    pub building_fill: f64,
}

impl Default for MapSpec {
    fn default() -> Self {
        MapSpec {
            rows: 5,
            cols: 5,
            block_length: 100.0,
            building_fill: 0.4,
        }
    }
}

impl MapSpec {
    pub fn build(&self) -> Result<RoadMap> {
        generate_map(self.rows, self.cols, self.block_length, self.building_fill)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub position: Point,
    pub speed: f64,
    pub heading: f64,
    pub acceleration: f64,
}

/// Ground-truth path of one vehicle, sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrace {
    pub vehicle: TrueVehicleId,
    pub dt: f64,
    pub samples: Vec<TraceSample>,
    pub entry_time: f64,
    pub exit_time: f64,
}

impl VehicleTrace {
    pub fn active_duration(&self) -> f64 {
        self.exit_time - self.entry_time
    }

    /// State at time `t`, linearly interpolated between samples.
    /// `None` outside `[entry_time, exit_time]`.
    pub fn state_at(&self, t: f64) -> Option<TraceSample> {
        const SNAP: f64 = 1e-6;
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.t - SNAP * self.dt || t > last.t + SNAP * self.dt {
            return None;
        }
        let pos = ((t - first.t) / self.dt).max(0.0);
        let nearest = pos.round();
        if (pos - nearest).abs() < SNAP {
            let idx = (nearest as usize).min(self.samples.len() - 1);
            let mut s = self.samples[idx];
            s.t = t;
            return Some(s);
        }
        let lo = (pos.floor() as usize).min(self.samples.len() - 1);
        let hi = (lo + 1).min(self.samples.len() - 1);
        let (a, b) = (&self.samples[lo], &self.samples[hi]);
        let frac = pos - lo as f64;
        Some(TraceSample {
            t,
            position: a.position.lerp(b.position, frac),
            speed: a.speed + (b.speed - a.speed) * frac,
            heading: lerp_angle(a.heading, b.heading, frac),
            acceleration: b.acceleration,
        })
    }

    /// Path length travelled up to and including sample `idx`.
    pub fn cumulative_distance(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.samples.len());
        for (i, s) in self.samples.iter().enumerate() {
            if i > 0 {
                acc += s.position.distance(self.samples[i - 1].position);
            }
            out.push(acc);
        }
        out
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

fn lerp_angle(a: f64, b: f64, frac: f64) -> f64 {
    wrap_angle(a + wrap_angle(b - a) * frac)
}

/// Traffic generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSpec {
    pub n_vehicles: usize,
    /// seconds
    pub duration: f64,
    /// seconds
    pub dt: f64,
    /// m/s
    pub v_min: f64,
    /// m/s
    pub v_max: f64,
    /// Probability of turning (left or right) at an intersection instead of
    /// going straight.
    pub turn_probability: f64,
    /// Speed at which turns are taken, m/s.
    pub turn_speed: f64,
    /// Acceleration bound, m/s². Capped at 3.
    pub max_accel: f64,
    /// Entries are uniform over `[0, entry_fraction·duration]`.
    pub entry_fraction: f64,
    /// Seconds after entry during which a vehicle keeps to the map: moves
    /// that would leave it are redrawn among the remaining directions.
    pub min_trip: f64,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        TrafficSpec {
            n_vehicles: 500,
            duration: 1200.0,
            dt: 0.1,
            v_min: 8.0,
            v_max: 14.0,
            turn_probability: 0.5,
            turn_speed: 5.0,
            max_accel: 3.0,
            entry_fraction: 0.8,
            min_trip: 0.0,
        }
    }
}

impl TrafficSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.dt > 0.0) {
            return bad(format!("traffic.dt must be positive (got {})", self.dt));
        }
        if !(self.duration >= 0.0) {
            return bad(format!("traffic.duration must be non-negative (got {})", self.duration));
        }
        if !(self.v_min > 0.0) || self.v_min > self.v_max {
            return bad(format!(
                "traffic.v_min must be positive and ≤ traffic.v_max (got {}..{})",
                self.v_min, self.v_max
            ));
        }
        if !(0.0..=1.0).contains(&self.turn_probability) {
            return bad(format!(
                "traffic.turn_probability must lie in [0, 1] (got {})",
                self.turn_probability
            ));
        }
        if !(self.turn_speed > 0.0) {
            return bad(format!("traffic.turn_speed must be positive (got {})", self.turn_speed));
        }
        if !(self.max_accel > 0.0 && self.max_accel <= 3.0) {
            return bad(format!(
                "traffic.max_accel must lie in (0, 3] (got {})",
                self.max_accel
            ));
        }
        if !(0.0..=1.0).contains(&self.entry_fraction) {
            return bad(format!(
                "traffic.entry_fraction must lie in [0, 1] (got {})",
                self.entry_fraction
            ));
        }
        if !(self.min_trip >= 0.0) {
            return bad(format!("traffic.min_trip must be non-negative (got {})", self.min_trip));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    East,
    North,
    West,
    South,
}

impl Dir {
    fn delta(self) -> (i64, i64) {
        // (drow, dcol)
        match self {
            Dir::East => (0, 1),
            Dir::North => (1, 0),
            Dir::West => (0, -1),
            Dir::South => (-1, 0),
        }
    }

    fn heading(self) -> f64 {
        match self {
            Dir::East => 0.0,
            Dir::North => FRAC_PI_2,
            Dir::West => PI,
            Dir::South => -FRAC_PI_2,
        }
    }

    fn unit(self) -> Point {
        let (dr, dc) = self.delta();
        Point::new(dc as f64, dr as f64)
    }

    fn left(self) -> Dir {
        match self {
            Dir::East => Dir::North,
            Dir::North => Dir::West,
            Dir::West => Dir::South,
            Dir::South => Dir::East,
        }
    }

    fn right(self) -> Dir {
        self.left().left().left()
    }
}

/// Where a vehicle goes once it reaches the end of its current segment.
#[derive(Debug, Clone, Copy)]
enum NextMove {
    Continue { dir: Dir, turning: bool },
    Exit,
}

struct Segment {
    row: i64,
    col: i64,
    dir: Dir,
    cruise: f64,
    next: NextMove,
}

impl Segment {
    fn end_node(&self) -> (i64, i64) {
        let (dr, dc) = self.dir.delta();
        (self.row + dr, self.col + dc)
    }

    fn end_speed(&self, turn_speed: f64) -> f64 {
        match self.next {
            NextMove::Continue { turning: true, .. } => turn_speed.min(self.cruise),
            _ => self.cruise,
        }
    }
}

/// Generates `spec.n_vehicles` traces on `map`. Deterministic in `seed`.
pub fn simulate_traffic(map: &RoadMap, spec: &TrafficSpec, seed: u64) -> Result<Vec<VehicleTrace>> {
    spec.validate()?;
    Ok((0..spec.n_vehicles)
        .map(|i| simulate_vehicle(map, spec, seed, i as u64))
        .filter(|t| !t.samples.is_empty())
        .collect())
}

/// Move taken at `node` when arriving in direction `dir`. With `may_exit`
/// false, an off-map draw is replaced by a uniform pick among the on-map
/// directions other than a U-turn.
fn choose_move<R: Rng>(
    map: &RoadMap,
    spec: &TrafficSpec,
    rng: &mut R,
    node: (i64, i64),
    dir: Dir,
    may_exit: bool,
) -> NextMove {
    let on_map = |d: Dir| {
        let (dr, dc) = d.delta();
        map.is_node(node.0 + dr, node.1 + dc)
    };
    let next_dir = if rng.random::<f64>() < spec.turn_probability {
        if rng.random::<bool>() {
            dir.left()
        } else {
            dir.right()
        }
    } else {
        dir
    };
    if on_map(next_dir) {
        return NextMove::Continue {
            dir: next_dir,
            turning: next_dir != dir,
        };
    }
    if may_exit {
        return NextMove::Exit;
    }
    let options: Vec<Dir> = [dir, dir.left(), dir.right()].into_iter().filter(|d| on_map(*d)).collect();
    match options.len() {
        0 => NextMove::Exit,
        n => {
            let d = options[rng.random_range(0..n)];
            NextMove::Continue {
                dir: d,
                turning: d != dir,
            }
        }
    }
}

fn boundary_entries(map: &RoadMap) -> Vec<(i64, i64, Dir)> {
    let mut out = Vec::new();
    for r in 0..map.rows as i64 {
        for c in 0..map.cols as i64 {
            for dir in [Dir::East, Dir::North, Dir::West, Dir::South] {
                let (dr, dc) = dir.delta();
                // Inward direction: the opposite neighbour is off the map.
                if !map.is_node(r - dr, c - dc) && map.is_node(r + dr, c + dc) {
                    out.push((r, c, dir));
                }
            }
        }
    }
    out
}

fn simulate_vehicle(map: &RoadMap, spec: &TrafficSpec, seed: u64, index: u64) -> VehicleTrace {
    let mut rng = stream_rng(seed, Stream::Traffic, index);
    let dt = spec.dt;
    let total_steps = (spec.duration / dt + 1e-9).floor() as u64;
    let last_entry_step = (spec.entry_fraction * spec.duration / dt + 1e-9).floor() as u64;
    let entry_step = rng.random_range(0..=last_entry_step.min(total_steps));

    let entries = boundary_entries(map);
    let (row, col, dir) = entries[rng.random_range(0..entries.len())];
    let cruise = rng.random_range(spec.v_min..=spec.v_max);
    let next = choose_move(
        map,
        spec,
        &mut rng,
        (row + dir.delta().0, col + dir.delta().1),
        dir,
        spec.min_trip <= 0.0,
    );
    let mut seg = Segment {
        row,
        col,
        dir,
        cruise,
        next,
    };

    let mut s = 0.0;
    let mut v = cruise;
    let mut samples = Vec::new();
    let origin = |seg: &Segment| map.intersection(seg.row as usize, seg.col as usize);
    let at = |seg: &Segment, s: f64| {
        let o = origin(seg);
        let u = seg.dir.unit();
        Point::new(o.x + u.x * s, o.y + u.y * s)
    };

    samples.push(TraceSample {
        t: entry_step as f64 * dt,
        position: at(&seg, 0.0),
        speed: v,
        heading: seg.dir.heading(),
        acceleration: 0.0,
    });

    let brake = 0.9 * spec.max_accel;
    for step in entry_step + 1..=total_steps {
        let remaining = map.block_length - s;
        let v_end = seg.end_speed(spec.turn_speed);
        let lookahead = (remaining - v * dt).max(0.0);
        let v_allow = (v_end * v_end + 2.0 * brake * lookahead).sqrt();
        let target = seg.cruise.min(v_allow);
        let a = ((target - v) / dt).clamp(-spec.max_accel, spec.max_accel);
        let v_new = (v + a * dt).max(0.0);
        let a_actual = (v_new - v) / dt;
        let mut s_new = s + v_new * dt;

        if s_new >= map.block_length {
            let dir = match seg.next {
                NextMove::Exit => break,
                NextMove::Continue { dir, .. } => dir,
            };
            let node = seg.end_node();
            s_new -= map.block_length;
            let cruise = rng.random_range(spec.v_min..=spec.v_max);
            let (dr, dc) = dir.delta();
            let may_exit = (step - entry_step) as f64 * dt >= spec.min_trip;
            let next = choose_move(map, spec, &mut rng, (node.0 + dr, node.1 + dc), dir, may_exit);
            seg = Segment {
                row: node.0,
                col: node.1,
                dir,
                cruise,
                next,
            };
        }
        s = s_new;
        v = v_new;
        samples.push(TraceSample {
            t: step as f64 * dt,
            position: at(&seg, s),
            speed: v,
            heading: seg.dir.heading(),
            acceleration: a_actual,
        });
    }

    let entry_time = samples[0].t;
    let exit_time = samples[samples.len() - 1].t;
    VehicleTrace {
        vehicle: TrueVehicleId(index),
        dt,
        samples,
        entry_time,
        exit_time,
    }
}

pub const FCD_HEADER: [&str; 6] = ["vehicle", "timestamp", "x", "y", "speed", "heading"];

/// Loads floating-car data (`vehicle,timestamp,x,y,speed,heading`, heading in
/// radians counter-clockwise from +x) and resamples every vehicle onto a
/// uniform `dt` grid starting at its first timestamp.
///
/// Vehicle ids are kept when every id is an unsigned integer; otherwise
/// vehicles are numbered in order of first appearance.
pub fn ingest_fcd(source: &Path, dt: f64) -> Result<Vec<VehicleTrace>> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive (got {dt})")));
    }
    let file = File::open(source).map_err(|e| Error::io(source, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(source, 1, e.to_string()))?
        .clone();
    if header.iter().ne(FCD_HEADER.iter().copied()) {
        return Err(Error::parse(
            source,
            1,
            format!("expected header `{}`", FCD_HEADER.join(",")),
        ));
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<TraceSample>> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            Error::parse(source, e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            record[i].parse::<f64>().map_err(|e| {
                Error::parse(source, line, format!("column `{}`: {e}", FCD_HEADER[i]))
            })
        };
        let vehicle = record[0].to_string();
        let sample = TraceSample {
            t: num(1)?,
            position: Point::new(num(2)?, num(3)?),
            speed: num(4)?,
            heading: num(5)?,
            acceleration: 0.0,
        };
        let entry = rows.entry(vehicle.clone()).or_insert_with(|| {
            order.push(vehicle.clone());
            Vec::new()
        });
        if let Some(prev) = entry.last() {
            if !(sample.t > prev.t) {
                return Err(Error::parse(
                    source,
                    line,
                    format!(
                        "vehicle `{vehicle}`: timestamp {} does not increase after {}",
                        sample.t, prev.t
                    ),
                ));
            }
        }
        entry.push(sample);
    }

    let numeric: Option<Vec<u64>> = order.iter().map(|v| v.parse::<u64>().ok()).collect();
    let mut traces = Vec::with_capacity(order.len());
    for (idx, name) in order.iter().enumerate() {
        let raw = &rows[name];
        let id = numeric.as_ref().map_or(idx as u64, |ids| ids[idx]);
        let samples = resample(raw, dt);
        traces.push(VehicleTrace {
            vehicle: TrueVehicleId(id),
            dt,
            entry_time: samples[0].t,
            exit_time: samples[samples.len() - 1].t,
            samples,
        });
    }
    Ok(traces)
}

fn resample(raw: &[TraceSample], dt: f64) -> Vec<TraceSample> {
    let t0 = raw[0].t;
    let t_end = raw[raw.len() - 1].t;
    let n = ((t_end - t0) / dt + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut j = 0;
    for k in 0..=n {
        let t = t0 + k as f64 * dt;
        while j + 1 < raw.len() && raw[j + 1].t <= t + 1e-12 {
            j += 1;
        }
        let s = if j + 1 >= raw.len() || (raw[j].t - t).abs() < 1e-12 {
            let mut s = raw[j];
            s.t = t;
            s
        } else {
            let (a, b) = (&raw[j], &raw[j + 1]);
            let frac = (t - a.t) / (b.t - a.t);
            TraceSample {
                t,
                position: a.position.lerp(b.position, frac),
                speed: a.speed + (b.speed - a.speed) * frac,
                heading: lerp_angle(a.heading, b.heading, frac),
                acceleration: 0.0,
            }
        };
        out.push(s);
    }
    // Acceleration by first differences of speed; the first sample copies
    // the second.
    for k in 1..out.len() {
        out[k].acceleration = (out[k].speed - out[k - 1].speed) / dt;
    }
    if out.len() > 1 {
        out[0].acceleration = out[1].acceleration;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn spec(n: usize) -> TrafficSpec {
        TrafficSpec {
            n_vehicles: n,
            duration: 300.0,
            ..TrafficSpec::default()
        }
    }

    #[test]
    fn two_by_two_without_buildings() {
        let m = generate_map(2, 2, 100.0, 0.0).unwrap();
        assert_eq!(m.intersection_count(), 4);
        assert!(m.obstacles.is_empty());
    }

    #[test]
    fn obstacle_area_matches_fill() {
        let m = generate_map(3, 3, 100.0, 0.5).unwrap();
        assert_eq!(m.obstacles.len(), 4);
        for o in &m.obstacles {
            assert!((o.area() - 5000.0).abs() < 1e-6, "{}", o.area());
        }
    }

    #[test]
    fn full_fill_is_clamped() {
        let m = generate_map(3, 3, 100.0, 1.0).unwrap();
        assert_eq!(m.building_fill, MAX_BUILDING_FILL);
        for o in &m.obstacles {
            // Strictly inside the block: never touches a road centerline.
            assert!(o.min.x % 100.0 > 0.0 && o.max.x % 100.0 < 100.0);
            assert!((o.area() - 9500.0).abs() < 1e-6);
        }
    }

    #[test]
    fn map_rejects_bad_parameters() {
        assert!(generate_map(3, 3, 0.0, 0.2).is_err());
        assert!(generate_map(3, 3, -5.0, 0.2).is_err());
        assert!(generate_map(1, 3, 100.0, 0.2).is_err());
        assert!(generate_map(3, 3, 100.0, 1.5).is_err());
    }

    #[test]
    fn same_seed_same_traces() {
        let m = generate_map(5, 5, 100.0, 0.4).unwrap();
        let a = simulate_traffic(&m, &spec(20), 9).unwrap();
        let b = simulate_traffic(&m, &spec(20), 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_traffic(&m, &spec(20), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_vehicles_is_empty() {
        let m = generate_map(5, 5, 100.0, 0.4).unwrap();
        assert!(simulate_traffic(&m, &spec(0), 1).unwrap().is_empty());
    }

    #[test]
    fn min_trip_delays_exit() {
        let m = generate_map(5, 5, 100.0, 0.4).unwrap();
        let s = TrafficSpec {
            min_trip: 150.0,
            duration: 600.0,
            ..spec(30)
        };
        let traces = simulate_traffic(&m, &s, 3).unwrap();
        let early: Vec<_> = traces.iter().filter(|t| t.exit_time < s.duration - 1.0).collect();
        assert!(!early.is_empty());
        assert!(early.iter().all(|t| t.exit_time - t.entry_time >= s.min_trip));
    }

    #[test]
    fn straight_corridor_keeps_heading() {
        let m = generate_map(2, 6, 100.0, 0.0).unwrap();
        let s = TrafficSpec {
            turn_probability: 0.0,
            ..spec(1)
        };
        let traces = simulate_traffic(&m, &s, 4).unwrap();
        assert_eq!(traces.len(), 1);
        let h0 = traces[0].samples[0].heading;
        assert!(traces[0].samples.iter().all(|s| s.heading == h0));
    }

    #[test]
    fn kinematics_are_consistent() {
        let m = generate_map(5, 5, 100.0, 0.4).unwrap();
        let s = spec(40);
        for seed in 0..3 {
            for trace in simulate_traffic(&m, &s, seed).unwrap() {
                check_trace(&trace, &m, &s);
            }
        }
    }

    fn check_trace(trace: &VehicleTrace, m: &RoadMap, s: &TrafficSpec) {
        let eps = 0.01 * s.dt * s.v_max;
        assert!(trace.entry_time <= s.entry_fraction * s.duration + 1e-9);
        for w in trace.samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            assert!(((b.t - a.t) - s.dt).abs() < 1e-9);
            assert!(b.speed >= 0.0 && b.speed <= s.v_max + 1e-9);
            assert!(b.acceleration.abs() <= s.max_accel + 1e-9);
            assert!(m.contains(b.position));
            let step = a.position.distance(b.position);
            assert!(step <= (b.speed + 0.01) * s.dt, "{step} vs {}", b.speed);
            if a.heading == b.heading {
                assert!((step - b.speed * s.dt).abs() <= eps, "straight step {step}");
            }
        }
    }

    fn write_fcd(rows: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "vehicle,timestamp,x,y,speed,heading").unwrap();
        write!(f, "{rows}").unwrap();
        f
    }

    #[test]
    fn fcd_constant_speed_has_zero_acceleration() {
        let f = write_fcd("7,0,0,0,10,0\n7,1,10,0,10,0\n");
        let traces = ingest_fcd(f.path(), 1.0).unwrap();
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0].vehicle, TrueVehicleId(7));
        assert!(traces[0].samples.iter().all(|s| s.acceleration == 0.0));
    }

    #[test]
    fn fcd_acceleration_is_first_difference() {
        let f = write_fcd("7,0,0,0,10,0\n7,1,11,0,12,0\n");
        let traces = ingest_fcd(f.path(), 1.0).unwrap();
        assert_eq!(traces[0].samples[1].acceleration, 2.0);
    }

    #[test]
    fn fcd_irregular_input_is_resampled() {
        let f = write_fcd("a,0,0,0,10,0\na,0.3,3,0,10,0\na,1.0,13,2,10,0\n");
        let traces = ingest_fcd(f.path(), 0.5).unwrap();
        let ts: Vec<f64> = traces[0].samples.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0.0, 0.5, 1.0]);
        // t = 0.5 lies 2/7 of the way from (3,0) at 0.3 to (13,2) at 1.0.
        let p = traces[0].samples[1].position;
        assert!((p.x - (3.0 + 10.0 * 2.0 / 7.0)).abs() < 1e-12);
        assert!((p.y - 2.0 * 2.0 / 7.0).abs() < 1e-12);
        assert_eq!(traces[0].samples[2].position, Point::new(13.0, 2.0));
        assert_eq!(traces[0].vehicle, TrueVehicleId(0));
    }

    #[test]
    fn fcd_non_monotonic_names_vehicle() {
        let f = write_fcd("car9,0,0,0,10,0\ncar9,2,0,0,10,0\ncar9,1,0,0,10,0\n");
        let err = ingest_fcd(f.path(), 0.5).unwrap_err().to_string();
        assert!(err.contains("car9"), "{err}");
    }

    #[test]
    fn state_at_interpolates() {
        let f = write_fcd("1,0,0,0,10,0\n1,1,10,0,10,0\n");
        let t = &ingest_fcd(f.path(), 1.0).unwrap()[0];
        assert_eq!(t.state_at(0.5).unwrap().position, Point::new(5.0, 0.0));
        assert!(t.state_at(1.5).is_none());
    }
}
