//! Feature rows tallied straight from simulated fixes.
//!
//! Written against the feature definitions, not against the pipeline code:
//! no intervals, no matching. Every fix's segment, limit and nearby nodes are
//! known from the simulation.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::SynthJourney;
use crate::features::{bin_level, JourneyFeatures};
use crate::geo::{distance_m, LatLon};
use crate::roadnet::{ContextClass, LandUse, RoadNetwork};

const STOP_MPH: f64 = 2.0;
const RADIUS_M: f64 = 50.0;
const HARD_BRAKE: f64 = 1.0;
const HARD_ACC: f64 = 1.0;
const TURN_MIN_YAW: f64 = 8.0;

/// A fix as the simulator placed it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimFix {
    pub timestamp: i64,
    pub position: LatLon,
    pub speed_mph: f64,
    pub heading: f64,
    /// Index into the network's segments.
    pub segment: usize,
    /// Intersection indices at both ends of the segment.
    pub ends: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub segment_id: Arc<str>,
    pub point_count: u64,
    pub mean_speeding_prop: f64,
}

fn positive_speeding(f: &SimFix, net: &RoadNetwork) -> f64 {
    let limit = net.segments[f.segment].speed_limit;
    ((f.speed_mph - limit) / limit).max(0.0)
}

fn heading_step(a: f64, b: f64) -> f64 {
    let mut d = b - a;
    while d > 180.0 {
        d -= 360.0;
    }
    while d <= -180.0 {
        d += 360.0;
    }
    d.abs()
}

/// Truth row for one simulated journey.
pub fn journey_truth(
    fixes: &[SimFix],
    net: &RoadNetwork,
    turns: usize,
    (hour, dayofweek, year): (i8, i8, i16),
) -> JourneyFeatures {
    let n = fixes.len();
    let near = |f: &SimFix, signalized: bool| {
        f.ends.iter().any(|&k| {
            let x = &net.intersections[k];
            x.signalized == signalized && distance_m(f.position, x.location) <= RADIUS_M
        })
    };

    let mut out = JourneyFeatures {
        journeytime_sum: (fixes[n - 1].timestamp - fixes[0].timestamp) as f64,
        turn_sum: turns as f64,
        hour: hour as f64,
        dayofweek: dayofweek as f64,
        year: year as f64,
        ..JourneyFeatures::default()
    };

    // stops: maximal runs of intervals with both ends under the stop speed
    let stopped: Vec<bool> = (0..n - 1)
        .map(|i| fixes[i].speed_mph < STOP_MPH && fixes[i + 1].speed_mph < STOP_MPH)
        .collect();
    let mut i = 0;
    while i < stopped.len() {
        if !stopped[i] {
            i += 1;
            continue;
        }
        let begin = i;
        while i < stopped.len() && stopped[i] {
            i += 1;
        }
        let run = &fixes[begin..=i];
        let secs = (run[run.len() - 1].timestamp - run[0].timestamp) as f64;
        out.time_stopped_sum += secs;
        if run.iter().any(|f| near(f, true)) {
            out.time_stopped_at_signalized_sum += secs;
        } else if run.iter().any(|f| near(f, false)) {
            out.time_stopped_at_unsignalized_sum += secs;
        }
    }

    let passed: BTreeSet<usize> = fixes
        .iter()
        .flat_map(|f| {
            f.ends
                .iter()
                .copied()
                .filter(move |&k| {
                    let x = &net.intersections[k];
                    x.signalized && distance_m(f.position, x.location) <= RADIUS_M
                })
        })
        .collect();
    out.is_signalized = passed.len() as f64;

    let (mut n_brake, mut n_acc, mut n_moving, mut n_hard_brake, mut n_hard_acc) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let (mut moving_speed_sum, mut sp_sum, mut yaw_sum) = (0.0, 0.0, 0.0);
    for w in fixes.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = (b.timestamp - a.timestamp) as f64;
        let acc = (b.speed_mph - a.speed_mph) * 0.44704 / dt;
        if acc < 0.0 {
            n_brake += 1;
            out.hardbrake_count += acc;
            out.hardbrake_min = out.hardbrake_min.min(acc);
        } else if acc > 0.0 {
            n_acc += 1;
            out.hardacc_count += acc;
            out.hardacc_max = out.hardacc_max.max(acc);
        }
        let yaw = heading_step(a.heading, b.heading) / dt;
        yaw_sum += yaw;
        out.yaw_rate_max = out.yaw_rate_max.max(yaw);
        if yaw >= TURN_MIN_YAW {
            out.moving_yaw_rate += yaw;
        }
        if a.speed_mph >= STOP_MPH && b.speed_mph >= STOP_MPH {
            n_moving += 1;
            n_hard_brake += usize::from(acc <= -HARD_BRAKE);
            n_hard_acc += usize::from(acc >= HARD_ACC);
            // every sampling gap is the same, so time weights cancel
            moving_speed_sum += 0.5 * (a.speed_mph + b.speed_mph);
            sp_sum += 0.5 * (positive_speeding(a, net) + positive_speeding(b, net));
        }
    }
    if n_brake > 0 {
        out.hardbrake_mean = out.hardbrake_count / n_brake as f64;
    }
    if n_acc > 0 {
        out.hardacc_mean = out.hardacc_count / n_acc as f64;
    }
    out.yaw_rate_mean = yaw_sum / (n - 1) as f64;
    if n_moving > 0 {
        out.moving_speed = moving_speed_sum / n_moving as f64;
        out.speeding_prop = sp_sum / n_moving as f64;
        out.hardbrake_prop = n_hard_brake as f64 / n_moving as f64;
        out.hardacc_prop = n_hard_acc as f64 / n_moving as f64;
    }

    // each fix is an interval endpoint once at the ends of the journey and twice inside
    let mut land: BTreeMap<LandUse, f64> = BTreeMap::new();
    let mut ctx: BTreeMap<ContextClass, f64> = BTreeMap::new();
    for (i, f) in fixes.iter().enumerate() {
        let weight = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
        let s = &net.segments[f.segment];
        *land.entry(s.land_use).or_default() += weight;
        *ctx.entry(s.context_class).or_default() += weight;
    }
    let ends = 2.0 * (n - 1) as f64;
    let share = |v: Option<&f64>| v.copied().unwrap_or(0.0) / ends;
    out.residential_prop = share(land.get(&LandUse::Residential));
    out.commercial_prop = share(land.get(&LandUse::Commercial));
    out.industrial_prop = share(land.get(&LandUse::Industrial));
    out.institutional_prop = share(land.get(&LandUse::Institutional));
    out.c1_prop = share(ctx.get(&ContextClass::C1));
    out.c2_prop = share(ctx.get(&ContextClass::C2));
    out.c3c_prop = share(ctx.get(&ContextClass::C3C));
    out.c3r_prop = share(ctx.get(&ContextClass::C3R));
    out.c4_prop = share(ctx.get(&ContextClass::C4));
    out.speeding_level = bin_level(out.speeding_prop).expect("speeding proportion is finite and non-negative");
    out
}

/// Point count and mean positive speeding per segment over every fix.
pub(super) fn segment_truth(journeys: &[SynthJourney], net: &RoadNetwork) -> Vec<SegmentTruth> {
    let mut acc: BTreeMap<usize, (u64, f64)> = BTreeMap::new();
    for j in journeys {
        for f in &j.fixes {
            let e = acc.entry(f.segment).or_default();
            e.0 += 1;
            e.1 += positive_speeding(f, net);
        }
    }
    let mut out: Vec<SegmentTruth> = acc
        .into_iter()
        .map(|(k, (count, sum))| SegmentTruth {
            segment_id: net.segments[k].segment_id.clone(),
            point_count: count,
            mean_speeding_prop: sum / count as f64,
        })
        .collect();
    out.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
    out
}
