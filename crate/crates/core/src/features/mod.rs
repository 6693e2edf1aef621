//! Speeding measures and the per-journey feature row.
//!
//! A fix's speeding proportion is `(speed - limit) / limit`. A journey's
//! speeding proportion is the time-weighted mean of the positive part of that
//! quantity over moving, matched fixes, and its speeding level bins that mean:
//!
//! | proportion     | level |
//! |----------------|-------|
//! | [0.00, 0.05)   | 0     |
//! | [0.05, 0.20)   | 1     |
//! | [0.20, 0.40)   | 2     |
//! | [0.40, 0.60)   | 3     |
//! | [0.60, 0.80)   | 4     |
//! | [0.80, ∞)      | 5     |

mod aggregate;
mod dataset;

pub use aggregate::{aggregate_journey, Aggregator, ExclusionReason, FeatureConfig};
pub use dataset::{
    assemble_dataset, read_features_csv, FeatureCsvWriter, write_features_csv, AssembleReport, FeatureMatrix,
    FeatureSelection, DEFAULT_FEATURES,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of speeding levels.
pub const N_LEVELS: usize = 6;

/// Lower bounds of levels 1..=5.
pub const LEVEL_BOUNDS: [f64; 5] = [0.05, 0.20, 0.40, 0.60, 0.80];

/// Journey label in 0..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeedingLevel(u8);

impl SpeedingLevel {
    pub fn new(level: u8) -> Result<Self> {
        if (level as usize) < N_LEVELS {
            Ok(SpeedingLevel(level))
        } else {
            Err(Error::LabelOutOfRange {
                label: level as usize,
                classes: N_LEVELS,
            })
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Relative excess of `speed` over `speed_limit`; negative below the limit.
pub fn point_speeding(speed: f64, speed_limit: f64) -> Result<f64> {
    if !(speed_limit > 0.0) || !speed_limit.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "speed limit must be positive, got {speed_limit}"
        )));
    }
    Ok((speed - speed_limit) / speed_limit)
}

/// Bins a speeding proportion into a level. Bins are left-closed; everything
/// from 0.80 upward is level 5.
pub fn bin_level(speeding_prop: f64) -> Result<SpeedingLevel> {
    if !speeding_prop.is_finite() || speeding_prop < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "speeding proportion must be finite and non-negative, got {speeding_prop}"
        )));
    }
    let level = LEVEL_BOUNDS.iter().filter(|&&b| speeding_prop >= b).count();
    Ok(SpeedingLevel(level as u8))
}

/// One journey's aggregated row, named and ordered as in the output CSV.
///
/// `hardbrake_count` and `hardacc_count` are sums of signed accelerations over
/// the braking and accelerating intervals respectively (m/s²), not counts.
/// `moving_yaw_rate` is the sum of yaw rates over turning intervals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JourneyFeatures {
    #[serde(rename = "timeStopped_sum")]
    pub time_stopped_sum: f64,
    #[serde(rename = "timeStoppedAtSignalized_sum")]
    pub time_stopped_at_signalized_sum: f64,
    #[serde(rename = "timeStoppedAtUnsignalized_sum")]
    pub time_stopped_at_unsignalized_sum: f64,
    pub journeytime_sum: f64,
    #[serde(rename = "isSignalized")]
    pub is_signalized: f64,
    pub turn_sum: f64,
    pub hardbrake_mean: f64,
    pub hardbrake_min: f64,
    pub hardbrake_count: f64,
    pub hardacc_mean: f64,
    pub hardacc_max: f64,
    pub hardacc_count: f64,
    pub moving_speed: f64,
    pub yaw_rate_mean: f64,
    pub yaw_rate_max: f64,
    pub moving_yaw_rate: f64,
    pub hour: f64,
    pub dayofweek: f64,
    pub year: f64,
    pub hardbrake_prop: f64,
    pub hardacc_prop: f64,
    pub speeding_prop: f64,
    #[serde(rename = "Residential_prop")]
    pub residential_prop: f64,
    #[serde(rename = "Commerical_prop")]
    pub commercial_prop: f64,
    #[serde(rename = "Industrial_prop")]
    pub industrial_prop: f64,
    #[serde(rename = "Institutional_prop")]
    pub institutional_prop: f64,
    #[serde(rename = "C1_prop")]
    pub c1_prop: f64,
    #[serde(rename = "C2_prop")]
    pub c2_prop: f64,
    #[serde(rename = "C3C_prop")]
    pub c3c_prop: f64,
    #[serde(rename = "C3R_prop")]
    pub c3r_prop: f64,
    #[serde(rename = "C4_prop")]
    pub c4_prop: f64,
    pub speeding_level: SpeedingLevel,
}

impl Default for SpeedingLevel {
    fn default() -> Self {
        SpeedingLevel(0)
    }
}

impl JourneyFeatures {
    /// Column names in output order (the last one is the label).
    pub const COLUMNS: [&'static str; 32] = [
        "timeStopped_sum",
        "timeStoppedAtSignalized_sum",
        "timeStoppedAtUnsignalized_sum",
        "journeytime_sum",
        "isSignalized",
        "turn_sum",
        "hardbrake_mean",
        "hardbrake_min",
        "hardbrake_count",
        "hardacc_mean",
        "hardacc_max",
        "hardacc_count",
        "moving_speed",
        "yaw_rate_mean",
        "yaw_rate_max",
        "moving_yaw_rate",
        "hour",
        "dayofweek",
        "year",
        "hardbrake_prop",
        "hardacc_prop",
        "speeding_prop",
        "Residential_prop",
        "Commerical_prop",
        "Industrial_prop",
        "Institutional_prop",
        "C1_prop",
        "C2_prop",
        "C3C_prop",
        "C3R_prop",
        "C4_prop",
        "speeding_level",
    ];

    pub fn values(&self) -> [f64; 32] {
        [
            self.time_stopped_sum,
            self.time_stopped_at_signalized_sum,
            self.time_stopped_at_unsignalized_sum,
            self.journeytime_sum,
            self.is_signalized,
            self.turn_sum,
            self.hardbrake_mean,
            self.hardbrake_min,
            self.hardbrake_count,
            self.hardacc_mean,
            self.hardacc_max,
            self.hardacc_count,
            self.moving_speed,
            self.yaw_rate_mean,
            self.yaw_rate_max,
            self.moving_yaw_rate,
            self.hour,
            self.dayofweek,
            self.year,
            self.hardbrake_prop,
            self.hardacc_prop,
            self.speeding_prop,
            self.residential_prop,
            self.commercial_prop,
            self.industrial_prop,
            self.institutional_prop,
            self.c1_prop,
            self.c2_prop,
            self.c3c_prop,
            self.c3r_prop,
            self.c4_prop,
            self.speeding_level.get() as f64,
        ]
    }

    pub fn value(&self, column: &str) -> Option<f64> {
        Self::COLUMNS
            .iter()
            .position(|c| *c == column)
            .map(|i| self.values()[i])
    }
}
