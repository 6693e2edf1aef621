//! Seeded synthetic county: a grid road network, simulated journeys sampled
//! every three seconds, and the feature rows those journeys must produce.
//!
//! Vehicles drive routes over the grid under a simple speed controller:
//! accelerate toward a target speed, brake so as to halt before planned
//! stops, dwell, go again. Every fix sits exactly on its road segment, so the
//! segment, limit and nearby intersections of each fix are known without any
//! matching. The truth rows are tallied directly from those simulated fixes.

mod tabular;
mod truth;

pub use tabular::nonlinear_classes;
pub use truth::{journey_truth, SegmentTruth, SimFix};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{JourneyFeatures, N_LEVELS};
use crate::geo::{normalize_heading, LatLon, METERS_PER_DEGREE, MPH_TO_MPS};
use crate::ingest::GpsPoint;
use crate::roadnet::{network_to_geojson, ContextClass, Intersection, LandUse, NetworkSchema, RoadNetwork, RoadSegment};

/// Journey share per speeding level in the default mix (the test-set
/// supports 17,099 / 40,723 / 57,203 / 23,064 / 7,413 / 1,635).
pub const DEFAULT_BEHAVIOR_MIX: [f64; N_LEVELS] = [0.1162, 0.2768, 0.3888, 0.1568, 0.0504, 0.0111];

const SAMPLE_S: i64 = 3;
/// Fixes closer than this to a grid node are resampled; the match there is ambiguous.
const NODE_CLEARANCE_M: f64 = 0.5;
const STOP_SETBACK_M: f64 = 6.0;
const LOOKAHEAD_M: f64 = 2500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_journeys: usize,
    /// Nodes per side of the square grid.
    pub grid_size: usize,
    pub block_m: f64,
    pub behavior_mix: [f64; N_LEVELS],
    pub seed: u64,
    pub origin: LatLon,
    pub min_duration_s: i64,
    pub max_duration_s: i64,
    /// Chance that an arterial/local crossing carries a signal.
    pub signalized_share: f64,
    /// Share of segments with a planted speeding bonus.
    pub hot_share: f64,
    pub timezone: String,
    pub years: Vec<i16>,
    /// Drive every journey with this profile instead of sampling one.
    pub fixed_profile: Option<BehaviorProfile>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_journeys: 10_000,
            grid_size: 20,
            block_m: 400.0,
            behavior_mix: DEFAULT_BEHAVIOR_MIX,
            seed: 2024,
            origin: LatLon::new(28.62, -81.42),
            min_duration_s: 180,
            max_duration_s: 420,
            signalized_share: 0.4,
            hot_share: 0.08,
            timezone: "America/New_York".into(),
            years: vec![2019, 2020],
            fixed_profile: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic: {m}")));
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2");
        }
        // at top speed a vehicle must leave at least two fixes on every block
        if !(self.block_m >= 400.0) {
            return bad("block_m must be at least 400");
        }
        if self.behavior_mix.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || self.behavior_mix.iter().sum::<f64>() <= 0.0
        {
            return bad("behavior_mix needs non-negative weights with a positive sum");
        }
        if self.min_duration_s < 30 || self.max_duration_s < self.min_duration_s {
            return bad("durations must satisfy 30 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.signalized_share) || !(0.0..=1.0).contains(&self.hot_share) {
            return bad("shares must lie in [0, 1]");
        }
        if self.years.is_empty() {
            return bad("years must not be empty");
        }
        jiff::tz::TimeZone::get(&self.timezone).map_err(|e| Error::Config(format!("timezone: {e}")))?;
        Ok(())
    }
}

/// How one simulated driver behaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorProfile {
    /// Cruise at `limit · (1 + target_speeding)`.
    pub target_speeding: f64,
    /// m/s²
    pub accel: f64,
    /// m/s²
    pub decel: f64,
    /// Std-dev of per-fix speed noise while cruising, m/s.
    pub jitter_mps: f64,
    /// Half-width of the per-block relative change in cruise speed.
    pub speed_wobble: f64,
    pub p_straight: f64,
    pub p_stop_signalized: f64,
    pub p_stop_unsignalized: f64,
    pub p_stop_midblock: f64,
    /// Seconds; drawn uniformly per stop.
    pub dwell_signalized: (f64, f64),
    pub dwell_unsignalized: (f64, f64),
    /// Start already cruising instead of from rest.
    pub start_cruising: bool,
}

impl BehaviorProfile {
    fn sample(level: usize, rng: &mut ChaCha8Rng) -> Self {
        let (lo, hi) = [(-0.15, 0.02), (0.08, 0.17), (0.23, 0.37), (0.43, 0.57), (0.63, 0.77), (0.86, 1.10)][level];
        BehaviorProfile {
            target_speeding: rng.random_range(lo..hi),
            accel: rng.random_range(0.8..3.0),
            decel: rng.random_range(1.2..4.0),
            jitter_mps: rng.random_range(0.1..0.8),
            speed_wobble: 0.03,
            p_straight: rng.random_range(0.45..0.85),
            p_stop_signalized: rng.random_range(0.2..0.6),
            p_stop_unsignalized: rng.random_range(0.05..0.35),
            p_stop_midblock: rng.random_range(0.0..0.05),
            dwell_signalized: (12.0, 75.0),
            dwell_unsignalized: (3.0, 12.0),
            start_cruising: false,
        }
    }
}

/// The generated network with grid bookkeeping.
#[derive(Debug, Clone)]
pub struct SynthNetwork {
    pub network: RoadNetwork,
    grid: usize,
    block_m: f64,
    /// Planted speeding bonus per segment.
    hot_bonus: Vec<f64>,
}

impl SynthNetwork {
    fn n_horizontal(&self) -> usize {
        self.grid * (self.grid - 1)
    }

    fn node_index(&self, r: usize, c: usize) -> usize {
        r * self.grid + c
    }

    pub fn node(&self, r: usize, c: usize) -> &Intersection {
        &self.network.intersections[self.node_index(r, c)]
    }

    /// Segments carrying a planted speeding bonus.
    pub fn hot_segments(&self) -> Vec<Arc<str>> {
        self.hot_bonus
            .iter()
            .zip(&self.network.segments)
            .filter(|(b, _)| **b > 0.0)
            .map(|(_, s)| s.segment_id.clone())
            .collect()
    }
}

fn is_arterial(i: usize) -> bool {
    i % 4 == 0
}

/// Builds a `grid × grid` street grid. Every fourth row and column is an
/// arterial; arterial crossings are signalized, local crossings never.
pub fn generate_network(cfg: &SynthConfig) -> Result<SynthNetwork> {
    cfg.validate()?;
    let g = cfg.grid_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dlat = cfg.block_m / METERS_PER_DEGREE;
    let dlon = cfg.block_m / (METERS_PER_DEGREE * cfg.origin.lat.to_radians().cos());
    let pos = |r: usize, c: usize| LatLon::new(cfg.origin.lat + r as f64 * dlat, cfg.origin.lon + c as f64 * dlon);

    let mut intersections = Vec::with_capacity(g * g);
    for r in 0..g {
        for c in 0..g {
            let signalized = match (is_arterial(r), is_arterial(c)) {
                (true, true) => true,
                (false, false) => false,
                _ => rng.random_bool(cfg.signalized_share),
            };
            intersections.push(Intersection {
                intersection_id: Arc::from(format!("n{r:03}_{c:03}")),
                location: pos(r, c),
                signalized,
            });
        }
    }

    let mut segments = Vec::with_capacity(2 * g * (g - 1));
    let mut hot_bonus = Vec::with_capacity(2 * g * (g - 1));
    let mut make = |id: String, a: LatLon, b: LatLon, arterial: bool, rng: &mut ChaCha8Rng| {
        let (speed_limit, context_class, land_use) = if arterial {
            let limit = [45.0, 50.0, 55.0][rng.random_range(0..3)];
            let ctx = if rng.random_bool(0.85) { ContextClass::C3C } else { ContextClass::C2 };
            let land = if rng.random_bool(0.75) { LandUse::Commercial } else { LandUse::Industrial };
            (limit, ctx, land)
        } else {
            let limit = [25.0, 30.0, 35.0][rng.random_range(0..3)];
            let u: f64 = rng.random();
            let ctx = if u < 0.6 {
                ContextClass::C3R
            } else if u < 0.85 {
                ContextClass::C3C
            } else if u < 0.97 {
                ContextClass::C4
            } else {
                ContextClass::C1
            };
            let u: f64 = rng.random();
            let land = if u < 0.6 {
                LandUse::Residential
            } else if u < 0.85 {
                LandUse::Commercial
            } else if u < 0.95 {
                LandUse::Institutional
            } else {
                LandUse::Industrial
            };
            (limit, ctx, land)
        };
        let bonus = if rng.random_bool(cfg.hot_share) { rng.random_range(0.1..0.3) } else { 0.0 };
        hot_bonus.push(bonus);
        segments.push(RoadSegment {
            segment_id: Arc::from(id),
            polyline: vec![a, b],
            speed_limit,
            context_class,
            land_use,
            functional_class: Some(if arterial { "arterial" } else { "local" }.to_string()),
            extra_attributes: BTreeMap::new(),
        });
    };
    for r in 0..g {
        for c in 0..g - 1 {
            make(format!("h{r:03}_{c:03}"), pos(r, c), pos(r, c + 1), is_arterial(r), &mut rng);
        }
    }
    for r in 0..g - 1 {
        for c in 0..g {
            make(format!("v{r:03}_{c:03}"), pos(r, c), pos(r + 1, c), is_arterial(c), &mut rng);
        }
    }
    Ok(SynthNetwork {
        network: RoadNetwork {
            segments,
            intersections,
        },
        grid: g,
        block_m: cfg.block_m,
        hot_bonus,
    })
}

/// One block of a route, driven in a fixed direction.
#[derive(Debug, Clone, Copy)]
struct Leg {
    segment: usize,
    from: (usize, usize),
    to: (usize, usize),
    heading: f64,
    /// Per-visit multiplicative speed wobble.
    wobble: f64,
}

const DIRS: [(i64, i64, f64); 4] = [(1, 0, 0.0), (0, 1, 90.0), (-1, 0, 180.0), (0, -1, 270.0)];

impl SynthNetwork {
    fn leg(&self, from: (usize, usize), dir: usize, wobble: f64) -> Option<Leg> {
        let (dr, dc, heading) = DIRS[dir];
        let r = from.0 as i64 + dr;
        let c = from.1 as i64 + dc;
        let g = self.grid as i64;
        if r < 0 || c < 0 || r >= g || c >= g {
            return None;
        }
        let to = (r as usize, c as usize);
        let segment = match dir {
            0 => self.n_horizontal() + from.0 * self.grid + from.1,
            2 => self.n_horizontal() + to.0 * self.grid + to.1,
            1 => from.0 * (self.grid - 1) + from.1,
            _ => to.0 * (self.grid - 1) + to.1,
        };
        Some(Leg {
            segment,
            from,
            to,
            heading,
            wobble,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct PlannedStop {
    at_m: f64,
    dwell_steps: usize,
}

struct Route<'a> {
    net: &'a SynthNetwork,
    legs: Vec<Leg>,
    dirs: Vec<usize>,
    stops: Vec<PlannedStop>,
}

impl Route<'_> {
    fn length(&self) -> f64 {
        self.legs.len() as f64 * self.net.block_m
    }

    fn extend(&mut self, profile: &BehaviorProfile, rng: &mut ChaCha8Rng) {
        let last = *self.legs.last().expect("route starts with one leg");
        let dir = *self.dirs.last().expect("route starts with one leg");
        let straight = dir;
        let left = (dir + 3) % 4;
        let right = (dir + 1) % 4;
        let u: f64 = rng.random();
        let pref = if u < profile.p_straight {
            [straight, left, right]
        } else if u < profile.p_straight + (1.0 - profile.p_straight) / 2.0 {
            [left, right, straight]
        } else {
            [right, left, straight]
        };
        let wobble = wobble(profile, rng);
        let (leg, d) = pref
            .iter()
            .find_map(|&d| self.net.leg(last.to, d, wobble).map(|l| (l, d)))
            .expect("a grid node always has a non-reversing exit");
        // stop decisions for the node at the end of the previous leg are made
        // when the route turns onto the next one
        let node = self.net.node(last.to.0, last.to.1);
        let end_m = self.length();
        let (p, dwell) = if node.signalized {
            (profile.p_stop_signalized, profile.dwell_signalized)
        } else {
            (profile.p_stop_unsignalized, profile.dwell_unsignalized)
        };
        if rng.random_bool(p.clamp(0.0, 1.0)) {
            self.stops.push(PlannedStop {
                at_m: end_m - STOP_SETBACK_M,
                dwell_steps: dwell_steps(dwell, rng),
            });
        }
        if rng.random_bool(profile.p_stop_midblock.clamp(0.0, 1.0)) {
            self.stops.push(PlannedStop {
                at_m: end_m + rng.random_range(0.35..0.65) * self.net.block_m,
                dwell_steps: dwell_steps((6.0, 30.0), rng),
            });
        }
        self.legs.push(leg);
        self.dirs.push(d);
    }
}

fn wobble(profile: &BehaviorProfile, rng: &mut ChaCha8Rng) -> f64 {
    if profile.speed_wobble > 0.0 {
        rng.random_range(-profile.speed_wobble..profile.speed_wobble)
    } else {
        0.0
    }
}

fn dwell_steps(range: (f64, f64), rng: &mut ChaCha8Rng) -> usize {
    let s = if range.1 > range.0 { rng.random_range(range.0..range.1) } else { range.0 };
    (s / SAMPLE_S as f64).ceil().max(1.0) as usize
}

/// A simulated journey with its truth row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthJourney {
    pub journey_id: String,
    pub planned_level: usize,
    pub profile: BehaviorProfile,
    pub turns: usize,
    pub truth: JourneyFeatures,
    #[serde(skip)]
    pub fixes: Vec<SimFix>,
}

impl SynthJourney {
    pub fn points(&self) -> impl Iterator<Item = GpsPoint> + '_ {
        self.fixes.iter().enumerate().map(|(i, f)| GpsPoint {
            journey_id: self.journey_id.clone(),
            point_id: format!("{}-{i:04}", self.journey_id),
            timestamp: f.timestamp,
            lat: f.position.lat,
            lon: f.position.lon,
            speed: f.speed_mph,
            heading: f.heading,
            postal_code: None,
        })
    }
}

struct Start {
    timestamp: i64,
    hour: i8,
    dayofweek: i8,
    year: i16,
}

/// Local start time drawn from a two-week window in one of the configured
/// years, away from the 01:00–03:00 band where clocks jump.
fn draw_start(cfg: &SynthConfig, tz: &jiff::tz::TimeZone, rng: &mut ChaCha8Rng) -> Result<Start> {
    let year = cfg.years[rng.random_range(0..cfg.years.len())];
    let day = 10 + rng.random_range(0..14) as i8;
    let hour = rng.random_range(5..24) as i8;
    let dt = jiff::civil::date(year, 10, day).at(hour, rng.random_range(0..60), rng.random_range(0..60), 0);
    let zoned = dt
        .to_zoned(tz.clone())
        .map_err(|e| Error::Config(format!("start time: {e}")))?;
    Ok(Start {
        timestamp: zoned.timestamp().as_second(),
        hour,
        dayofweek: dt.date().weekday().to_monday_zero_offset(),
        year,
    })
}

/// Drives one journey. Returns `None` when a fix lands on a grid node, in
/// which case the caller redraws.
fn drive(
    net: &SynthNetwork,
    profile: &BehaviorProfile,
    n_fixes: usize,
    start_ts: i64,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<SimFix>, usize)> {
    let g = net.grid;
    let mut dir = rng.random_range(0..4);
    let from = (rng.random_range(0..g), rng.random_range(0..g));
    let first = loop {
        if let Some(l) = net.leg(from, dir, wobble(profile, rng)) {
            break l;
        }
        dir = (dir + 1) % 4;
    };
    let mut route = Route {
        net,
        legs: vec![first],
        dirs: vec![dir],
        stops: Vec::new(),
    };
    let block = net.block_m;
    let mut s = rng.random_range(0.1..0.4) * block;
    let noise = Normal::new(0.0, profile.jitter_mps.max(0.0)).ok()?;

    let target_at = |route: &Route, s: f64| -> f64 {
        let leg = route.legs[(s / block) as usize];
        let seg = &net.network.segments[leg.segment];
        seg.speed_limit * MPH_TO_MPS * (1.0 + profile.target_speeding + net.hot_bonus[leg.segment]) * (1.0 + leg.wobble)
    };

    while route.length() < s + LOOKAHEAD_M {
        route.extend(profile, rng);
    }
    let mut v = if profile.start_cruising { target_at(&route, s) } else { 0.0 };
    let mut next_stop = route.stops.partition_point(|st| st.at_m <= s);
    let mut dwell_left = 0usize;
    let dt = SAMPLE_S as f64;
    let mut fixes = Vec::with_capacity(n_fixes);

    for i in 0..n_fixes {
        if i > 0 {
            let u = if dwell_left > 0 {
                dwell_left -= 1;
                if dwell_left == 0 {
                    next_stop += 1;
                }
                0.0
            } else {
                let target = target_at(&route, s);
                let mut u = if target >= v {
                    target.min(v + profile.accel * dt)
                } else {
                    target.max(v - profile.decel * dt)
                };
                if profile.jitter_mps > 0.0 && u > 3.0 {
                    let e: f64 = noise.sample(rng);
                    u = (u + e.clamp(-3.0 * profile.jitter_mps, 3.0 * profile.jitter_mps)).max(2.0);
                }
                match route.stops.get(next_stop) {
                    Some(stop) => {
                        let d = stop.at_m - s;
                        let b = profile.decel;
                        let disc = 2.25 + 2.0 * (d - 1.5 * v) / b;
                        let u_brake = if disc > 0.0 { b * (disc.sqrt() - 1.5) } else { 0.0 };
                        u = u.min(u_brake.max(0.0));
                        if d <= 0.5 || u < 0.3 {
                            dwell_left = stop.dwell_steps;
                            0.0
                        } else {
                            u
                        }
                    }
                    None => u,
                }
            };
            s += 0.5 * (v + u) * dt;
            v = u;
            while route.length() < s + LOOKAHEAD_M {
                route.extend(profile, rng);
            }
        }
        let k = (s / block) as usize;
        let f = s / block - k as f64;
        if f * block < NODE_CLEARANCE_M || (1.0 - f) * block < NODE_CLEARANCE_M {
            return None;
        }
        let leg = route.legs[k];
        let a = net.node(leg.from.0, leg.from.1).location;
        let b = net.node(leg.to.0, leg.to.1).location;
        let position = LatLon::new(a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon));
        let heading = normalize_heading(leg.heading + rng.random_range(-2.0..2.0));
        fixes.push(SimFix {
            timestamp: start_ts + SAMPLE_S * i as i64,
            position,
            speed_mph: v / MPH_TO_MPS,
            heading,
            segment: leg.segment,
            ends: [net.node_index(leg.from.0, leg.from.1), net.node_index(leg.to.0, leg.to.1)],
        });
    }
    // a turn is counted when the route changes direction between two fixes
    let last_leg = (s / block) as usize;
    let turns = route.dirs[..=last_leg].windows(2).filter(|w| w[0] != w[1]).count();
    Some((fixes, turns))
}

fn pick_level(mix: &[f64; N_LEVELS], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = mix.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (k, w) in mix.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    mix.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Everything the generator knows about a bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub config: SynthConfig,
    pub journeys: Vec<SynthJourney>,
    pub segments: Vec<SegmentTruth>,
    pub hot_segments: Vec<Arc<str>>,
}

impl SyntheticTruth {
    pub fn journey(&self, id: &str) -> Option<&SynthJourney> {
        self.journeys.iter().find(|j| j.journey_id == id)
    }

    pub fn level_histogram(&self) -> [usize; N_LEVELS] {
        let mut h = [0; N_LEVELS];
        for j in &self.journeys {
            h[j.truth.speeding_level.index()] += 1;
        }
        h
    }

    pub fn total_points(&self) -> usize {
        self.journeys.iter().map(|j| j.fixes.len()).sum()
    }
}

/// Network plus journeys, with their truth rows.
pub struct SyntheticBundle {
    pub network: SynthNetwork,
    pub truth: SyntheticTruth,
}

pub const NETWORK_FILE: &str = "network.geojson";
pub const POINTS_FILE: &str = "points.csv";
pub const TRUTH_FILE: &str = "truth.json";

/// Where [`SyntheticBundle::write`] put things.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleFiles {
    pub network: PathBuf,
    pub points: PathBuf,
    pub truth: PathBuf,
}

impl SyntheticBundle {
    /// Writes the network GeoJSON, the points CSV and the truth JSON into `dir`.
    pub fn write(&self, dir: &Path) -> Result<BundleFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = BundleFiles {
            network: dir.join(NETWORK_FILE),
            points: dir.join(POINTS_FILE),
            truth: dir.join(TRUTH_FILE),
        };
        let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
        let geo = network_to_geojson(&self.network.network, &NetworkSchema::default());
        let mut w = create(&files.network)?;
        serde_json::to_writer(&mut w, &geo)?;
        w.flush().map_err(|e| Error::io(&files.network, e))?;
        write_points_csv(create(&files.points)?, &self.truth.journeys)?;
        let mut w = create(&files.truth)?;
        serde_json::to_writer(&mut w, &self.truth)?;
        w.flush().map_err(|e| Error::io(&files.truth, e))?;
        Ok(files)
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticBundle> {
    let network = generate_network(cfg)?;
    let tz = jiff::tz::TimeZone::get(&cfg.timezone).map_err(|e| Error::Config(format!("timezone: {e}")))?;
    let journeys: Vec<SynthJourney> = (0..cfg.n_journeys)
        .into_par_iter()
        .map(|j| -> Result<SynthJourney> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(j as u64 + 1);
            let planned_level = pick_level(&cfg.behavior_mix, &mut rng);
            let profile = match &cfg.fixed_profile {
                Some(p) => p.clone(),
                None => BehaviorProfile::sample(planned_level, &mut rng),
            };
            let duration = rng.random_range(cfg.min_duration_s..=cfg.max_duration_s);
            let n_fixes = (duration / SAMPLE_S) as usize + 1;
            let start = draw_start(cfg, &tz, &mut rng)?;
            let (fixes, turns) = loop {
                if let Some(r) = drive(&network, &profile, n_fixes, start.timestamp, &mut rng) {
                    break r;
                }
            };
            let truth = journey_truth(&fixes, &network.network, turns, (start.hour, start.dayofweek, start.year));
            Ok(SynthJourney {
                journey_id: format!("J{j:06}"),
                planned_level,
                profile,
                turns,
                truth,
                fixes,
            })
        })
        .collect::<Result<_>>()?;
    let segments = truth::segment_truth(&journeys, &network.network);
    let hot_segments = network.hot_segments();
    Ok(SyntheticBundle {
        truth: SyntheticTruth {
            config: cfg.clone(),
            journeys,
            segments,
            hot_segments,
        },
        network,
    })
}

/// Writes the fixes as CSV in the default input layout, journey by journey.
pub fn write_points_csv<W: Write>(w: W, journeys: &[SynthJourney]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["journeyId", "dataPointId", "timestamp", "latitude", "longitude", "speed", "heading"])?;
    for j in journeys {
        for p in j.points() {
            out.write_record([
                p.journey_id,
                p.point_id,
                p.timestamp.to_string(),
                p.lat.to_string(),
                p.lon.to_string(),
                p.speed.to_string(),
                p.heading.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
