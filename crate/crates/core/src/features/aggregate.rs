use serde::{Deserialize, Serialize};

use super::{bin_level, point_speeding, JourneyFeatures};
use crate::error::{Error, Result};
use crate::kinematics::{
    count_signalized, KinematicsConfig, MotionInterval, StopAttribution, StopEpisode, TurnEvent,
};
use crate::roadnet::{ContextClass, LandUse, MatchedJourney, MatchedPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Deceleration magnitude (m/s²) that counts as a hard brake.
    pub hard_brake_thresh: f64,
    /// Acceleration (m/s²) that counts as a hard acceleration.
    pub hard_acc_thresh: f64,
    /// IANA zone for hour / dayofweek / year.
    pub timezone: String,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            hard_brake_thresh: 1.0,
            hard_acc_thresh: 1.0,
            timezone: "America/New_York".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    LowCoverage,
    NoMovingInterval,
    NoMatchedMovingPoint,
}

/// Aggregates journeys into feature rows under one configuration.
#[derive(Debug, Clone)]
pub struct Aggregator {
    cfg: FeatureConfig,
    turn_min_yaw: f64,
    tz: jiff::tz::TimeZone,
}

impl Aggregator {
    pub fn new(cfg: &FeatureConfig, kin: &KinematicsConfig) -> Result<Self> {
        let tz = jiff::tz::TimeZone::get(&cfg.timezone)
            .map_err(|e| Error::Config(format!("timezone `{}`: {e}", cfg.timezone)))?;
        Ok(Aggregator {
            cfg: cfg.clone(),
            turn_min_yaw: kin.turn_min_yaw,
            tz,
        })
    }

    pub fn aggregate(
        &self,
        journey: &MatchedJourney,
        intervals: &[MotionInterval],
        stops: &[StopEpisode],
        turns: &[TurnEvent],
    ) -> Result<JourneyFeatures, ExclusionReason> {
        let pts: &[MatchedPoint] = &journey.points;
        let moving: Vec<&MotionInterval> = intervals.iter().filter(|iv| iv.moving).collect();
        if moving.is_empty() {
            return Err(ExclusionReason::NoMovingInterval);
        }

        // speeding and moving speed: each moving interval lends dt/2 to each endpoint
        let (mut sp_weight, mut sp_sum) = (0.0, 0.0);
        let (mut mv_time, mut mv_dist) = (0.0, 0.0);
        for iv in &moving {
            let half = iv.dt / 2.0;
            for p in [&pts[iv.start], &pts[iv.end()]] {
                mv_time += half;
                mv_dist += half * p.point.speed;
                if let Some(a) = &p.attrs {
                    let y = point_speeding(p.point.speed, a.speed_limit)
                        .map_err(|_| ExclusionReason::NoMatchedMovingPoint)?;
                    sp_weight += half;
                    sp_sum += half * y.max(0.0);
                }
            }
        }
        if sp_weight <= 0.0 {
            return Err(ExclusionReason::NoMatchedMovingPoint);
        }
        let speeding_prop = sp_sum / sp_weight;

        // attribute shares over matched time, same half-interval rule on all intervals
        let mut matched_time = 0.0;
        let mut land = [0.0; 4];
        let mut context = [0.0; 5];
        for iv in intervals {
            let half = iv.dt / 2.0;
            for p in [&pts[iv.start], &pts[iv.end()]] {
                let Some(a) = &p.attrs else { continue };
                matched_time += half;
                if let Some(k) = LandUse::MODELLED.iter().position(|l| *l == a.land_use) {
                    land[k] += half;
                }
                if let Some(k) = ContextClass::MODELLED.iter().position(|c| *c == a.context_class) {
                    context[k] += half;
                }
            }
        }
        let share = |t: f64| if matched_time > 0.0 { t / matched_time } else { 0.0 };

        let braking: Vec<f64> = intervals.iter().map(|iv| iv.accel).filter(|a| *a < 0.0).collect();
        let accelerating: Vec<f64> = intervals.iter().map(|iv| iv.accel).filter(|a| *a > 0.0).collect();
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let n_moving = moving.len() as f64;
        let hard_brakes = moving
            .iter()
            .filter(|iv| iv.accel <= -self.cfg.hard_brake_thresh)
            .count() as f64;
        let hard_accs = moving
            .iter()
            .filter(|iv| iv.accel >= self.cfg.hard_acc_thresh)
            .count() as f64;

        let yaw: Vec<f64> = intervals.iter().map(|iv| iv.yaw_rate).collect();
        let stop_sum = |want: Option<StopAttribution>| -> f64 {
            stops
                .iter()
                .filter(|s| want.is_none_or(|w| s.attribution == w))
                .map(|s| s.duration)
                .sum()
        };

        let first = pts.first().map_or(0, |p| p.point.timestamp);
        let last = pts.last().map_or(0, |p| p.point.timestamp);
        let start = jiff::Timestamp::from_second(first)
            .map_err(|_| ExclusionReason::NoMovingInterval)?
            .to_zoned(self.tz.clone());

        let level = bin_level(speeding_prop).map_err(|_| ExclusionReason::NoMatchedMovingPoint)?;
        Ok(JourneyFeatures {
            time_stopped_sum: stop_sum(None),
            time_stopped_at_signalized_sum: stop_sum(Some(StopAttribution::Signalized)),
            time_stopped_at_unsignalized_sum: stop_sum(Some(StopAttribution::Unsignalized)),
            journeytime_sum: (last - first) as f64,
            is_signalized: count_signalized(pts) as f64,
            turn_sum: turns.len() as f64,
            hardbrake_mean: mean(&braking),
            hardbrake_min: braking.iter().copied().fold(0.0, f64::min),
            hardbrake_count: braking.iter().sum(),
            hardacc_mean: mean(&accelerating),
            hardacc_max: accelerating.iter().copied().fold(0.0, f64::max),
            hardacc_count: accelerating.iter().sum(),
            moving_speed: mv_dist / mv_time,
            yaw_rate_mean: mean(&yaw),
            yaw_rate_max: yaw.iter().copied().fold(0.0, f64::max),
            moving_yaw_rate: yaw.iter().filter(|&&y| y >= self.turn_min_yaw).sum(),
            hour: start.hour() as f64,
            dayofweek: start.weekday().to_monday_zero_offset() as f64,
            year: start.year() as f64,
            hardbrake_prop: hard_brakes / n_moving,
            hardacc_prop: hard_accs / n_moving,
            speeding_prop,
            residential_prop: share(land[0]),
            commercial_prop: share(land[1]),
            industrial_prop: share(land[2]),
            institutional_prop: share(land[3]),
            c1_prop: share(context[0]),
            c2_prop: share(context[1]),
            c3c_prop: share(context[2]),
            c3r_prop: share(context[3]),
            c4_prop: share(context[4]),
            speeding_level: level,
        })
    }
}

/// One-shot form of [`Aggregator::aggregate`].
pub fn aggregate_journey(
    journey: &MatchedJourney,
    intervals: &[MotionInterval],
    stops: &[StopEpisode],
    turns: &[TurnEvent],
    cfg: &FeatureConfig,
    kin: &KinematicsConfig,
) -> Result<Result<JourneyFeatures, ExclusionReason>> {
    Ok(Aggregator::new(cfg, kin)?.aggregate(journey, intervals, stops, turns))
}
