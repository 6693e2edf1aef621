//! Per-interval motion signals and the episodes built from them.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geo::{wrap180, MPH_TO_MPS};
use crate::ingest::GpsPoint;
use crate::roadnet::MatchedPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsConfig {
    /// Both endpoint speeds below this ⇒ stopped; both at or above ⇒ moving.
    pub stop_speed_mph: f64,
    /// Consecutive fixes further apart than this do not form an interval.
    pub gap_split_s: i64,
    pub turn_angle_deg: f64,
    pub turn_window_s: f64,
    /// Minimum yaw rate (°/s) for an interval to belong to a turn.
    pub turn_min_yaw: f64,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        KinematicsConfig {
            stop_speed_mph: 2.0,
            gap_split_s: 600,
            turn_angle_deg: 45.0,
            turn_window_s: 15.0,
            turn_min_yaw: 8.0,
        }
    }
}

/// The part of a fix the kinematics need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fix {
    pub timestamp: i64,
    /// mph
    pub speed: f64,
    /// degrees
    pub heading: f64,
}

impl From<&GpsPoint> for Fix {
    fn from(p: &GpsPoint) -> Self {
        Fix {
            timestamp: p.timestamp,
            speed: p.speed,
            heading: p.heading,
        }
    }
}

impl From<&MatchedPoint> for Fix {
    fn from(p: &MatchedPoint) -> Self {
        Fix::from(&p.point)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionInterval {
    /// Index of the first fix; the interval ends at `start + 1`.
    pub start: usize,
    pub dt: f64,
    /// m/s², signed.
    pub accel: f64,
    /// Signed heading change wrapped into (-180, 180].
    pub heading_change: f64,
    /// °/s, ≥ 0.
    pub yaw_rate: f64,
    pub moving: bool,
    pub stopped: bool,
}

impl MotionInterval {
    pub fn end(&self) -> usize {
        self.start + 1
    }
}

/// One interval per consecutive fix pair closer than `gap_split_s`.
pub fn derive_intervals(fixes: &[Fix], cfg: &KinematicsConfig) -> Vec<MotionInterval> {
    fixes
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            let (a, b) = (w[0], w[1]);
            let gap = b.timestamp - a.timestamp;
            if gap <= 0 || gap > cfg.gap_split_s {
                return None;
            }
            let dt = gap as f64;
            let heading_change = wrap180(b.heading - a.heading);
            Some(MotionInterval {
                start: i,
                dt,
                accel: (b.speed - a.speed) * MPH_TO_MPS / dt,
                heading_change,
                yaw_rate: heading_change.abs() / dt,
                moving: a.speed >= cfg.stop_speed_mph && b.speed >= cfg.stop_speed_mph,
                stopped: a.speed < cfg.stop_speed_mph && b.speed < cfg.stop_speed_mph,
            })
        })
        .collect()
}

/// Convenience wrapper over a matched journey's points.
pub fn derive_journey_intervals(points: &[MatchedPoint], cfg: &KinematicsConfig) -> Vec<MotionInterval> {
    let fixes: Vec<Fix> = points.iter().map(Fix::from).collect();
    derive_intervals(&fixes, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StopAttribution {
    Signalized,
    Unsignalized,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopEpisode {
    pub start: usize,
    pub end: usize,
    pub duration: f64,
    pub attribution: StopAttribution,
}

/// Iterates maximal runs of contiguous intervals satisfying `keep`.
fn runs<'a>(
    intervals: &'a [MotionInterval],
    keep: impl Fn(&MotionInterval, Option<&MotionInterval>) -> bool + 'a,
) -> impl Iterator<Item = &'a [MotionInterval]> + 'a {
    let mut i = 0;
    std::iter::from_fn(move || {
        while i < intervals.len() && !keep(&intervals[i], None) {
            i += 1;
        }
        if i >= intervals.len() {
            return None;
        }
        let begin = i;
        i += 1;
        while i < intervals.len()
            && intervals[i].start == intervals[i - 1].end()
            && keep(&intervals[i], Some(&intervals[i - 1]))
        {
            i += 1;
        }
        Some(&intervals[begin..i])
    })
}

/// Maximal runs of stopped intervals, attributed to the intersection type
/// nearest any of the run's fixes (signalized wins).
pub fn detect_stops(
    intervals: &[MotionInterval],
    points: &[MatchedPoint],
    intersection_radius_m: f64,
) -> Vec<StopEpisode> {
    runs(intervals, |iv, _| iv.stopped)
        .map(|run| {
            let start = run[0].start;
            let end = run[run.len() - 1].end();
            let fixes = &points[start..=end];
            let attribution = if fixes
                .iter()
                .any(|p| p.matched.nearest_signalized_m <= intersection_radius_m)
            {
                StopAttribution::Signalized
            } else if fixes
                .iter()
                .any(|p| p.matched.nearest_unsignalized_m <= intersection_radius_m)
            {
                StopAttribution::Unsignalized
            } else {
                StopAttribution::None
            };
            StopEpisode {
                start,
                end,
                duration: run.iter().map(|iv| iv.dt).sum(),
                attribution,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnEvent {
    pub start: usize,
    pub end: usize,
    /// Signed total heading change over the run, degrees.
    pub total_change: f64,
}

/// Turns are maximal runs of same-sign heading-change intervals, each with
/// yaw rate at least `turn_min_yaw`, that accumulate `turn_angle_deg` of
/// heading change within some `turn_window_s` stretch.
pub fn detect_turns(intervals: &[MotionInterval], cfg: &KinematicsConfig) -> Vec<TurnEvent> {
    let turning = |iv: &MotionInterval| iv.yaw_rate >= cfg.turn_min_yaw && iv.heading_change != 0.0;
    runs(intervals, |iv, prev| {
        turning(iv) && prev.is_none_or(|p| p.heading_change.signum() == iv.heading_change.signum())
    })
    .filter(|run| reaches_angle_within_window(run, cfg))
    .map(|run| TurnEvent {
        start: run[0].start,
        end: run[run.len() - 1].end(),
        total_change: run.iter().map(|iv| iv.heading_change).sum(),
    })
    .collect()
}

fn reaches_angle_within_window(run: &[MotionInterval], cfg: &KinematicsConfig) -> bool {
    // windows summed directly so boundary cases are not disturbed by
    // running-sum cancellation
    let mut left = 0;
    for right in 0..run.len() {
        while left <= right && run[left..=right].iter().map(|iv| iv.dt).sum::<f64>() > cfg.turn_window_s {
            left += 1;
        }
        if left <= right
            && run[left..=right]
                .iter()
                .map(|iv| iv.heading_change.abs())
                .sum::<f64>()
                >= cfg.turn_angle_deg
        {
            return true;
        }
    }
    false
}

/// Distinct signalized intersections that any fix came within the radius of.
pub fn count_signalized(points: &[MatchedPoint]) -> usize {
    signalized_passed(points).len()
}

pub fn signalized_passed(points: &[MatchedPoint]) -> BTreeSet<Arc<str>> {
    points
        .iter()
        .flat_map(|p| p.matched.signalized_nearby.iter().cloned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fixes(spec: &[(i64, f64, f64)]) -> Vec<Fix> {
        spec.iter()
            .map(|&(timestamp, speed, heading)| Fix {
                timestamp,
                speed,
                heading,
            })
            .collect()
    }

    #[test]
    fn acceleration_arithmetic() {
        let cfg = KinematicsConfig::default();
        let iv = derive_intervals(&fixes(&[(0, 50.0, 0.0), (3, 50.0, 0.0)]), &cfg);
        assert_eq!(iv[0].accel, 0.0);
        let iv = derive_intervals(&fixes(&[(0, 60.0, 0.0), (3, 30.0, 0.0)]), &cfg);
        assert_abs_diff_eq!(iv[0].accel, -4.4704, epsilon = 1e-12);
    }

    #[test]
    fn yaw_wraps_through_north() {
        let cfg = KinematicsConfig::default();
        let iv = derive_intervals(&fixes(&[(0, 30.0, 350.0), (4, 30.0, 10.0)]), &cfg);
        assert_abs_diff_eq!(iv[0].yaw_rate, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(iv[0].heading_change, 20.0, epsilon = 1e-12);
    }

    #[test]
    fn long_gaps_produce_no_interval() {
        let cfg = KinematicsConfig::default();
        let iv = derive_intervals(&fixes(&[(0, 30.0, 0.0), (601, 30.0, 0.0), (604, 30.0, 0.0)]), &cfg);
        assert_eq!(iv.len(), 1);
        assert_eq!(iv[0].start, 1);
    }

    #[test]
    fn moving_and_stopped_are_exclusive() {
        let cfg = KinematicsConfig::default();
        let iv = derive_intervals(
            &fixes(&[(0, 0.0, 0.0), (3, 1.9, 0.0), (6, 2.0, 0.0), (9, 5.0, 0.0)]),
            &cfg,
        );
        assert!(iv[0].stopped && !iv[0].moving);
        assert!(!iv[1].stopped && !iv[1].moving);
        assert!(iv[2].moving && !iv[2].stopped);
    }

    fn turn_run(deltas: &[f64], dt: i64) -> Vec<MotionInterval> {
        let mut h: f64 = 0.0;
        let mut spec = vec![(0, 30.0, 0.0)];
        for (i, d) in deltas.iter().enumerate() {
            h = crate::geo::normalize_heading(h + d);
            spec.push(((i as i64 + 1) * dt, 30.0, h));
        }
        derive_intervals(&fixes(&spec), &KinematicsConfig::default())
    }

    #[test]
    fn ninety_degree_turn_detected_once() {
        // 90° left over 9 s at 10 °/s
        let iv = turn_run(&[-30.0, -30.0, -30.0], 3);
        let t = detect_turns(&iv, &KinematicsConfig::default());
        assert_eq!(t.len(), 1);
        assert_abs_diff_eq!(t[0].total_change, -90.0, epsilon = 1e-9);
    }

    #[test]
    fn slow_drift_is_not_a_turn() {
        // 30° over 60 s at 0.5 °/s
        let iv = turn_run(&[1.5; 20], 3);
        assert!(detect_turns(&iv, &KinematicsConfig::default()).is_empty());
    }

    #[test]
    fn s_curve_is_two_turns() {
        let iv = turn_run(&[-30.0, -30.0, -30.0, 30.0, 30.0, 30.0], 3);
        let t = detect_turns(&iv, &KinematicsConfig::default());
        assert_eq!(t.len(), 2);
        assert!(t[0].total_change < 0.0 && t[1].total_change > 0.0);
    }

    #[test]
    fn window_and_angle_gates() {
        // 9 °/s sustained for 30 s: one long run, a single event
        let iv = turn_run(&[27.0; 10], 3);
        assert_eq!(detect_turns(&iv, &KinematicsConfig::default()).len(), 1);
        // 40° total never reaches 45°
        let iv = turn_run(&[10.0, 10.0, 10.0, 10.0], 1);
        assert!(detect_turns(&iv, &KinematicsConfig::default()).is_empty());
    }
}
