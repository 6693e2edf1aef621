//! The single pipeline configuration file.
//!
//! TOML, every table optional. Relative paths resolve against the directory
//! holding the config file. `key.path=value` overrides are applied to the
//! parsed document before it is typed, so they accept anything the file does.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::explain::TsneParams;
use crate::features::{FeatureConfig, FeatureSelection};
use crate::hotspot::HotspotConfig;
use crate::ingest::{GroupConfig, SchemaConfig, ValidationConfig};
use crate::kinematics::KinematicsConfig;
use crate::learn::{LearnConfig, ModelKind, TuneGrid};
use crate::roadnet::{MatchParams, NetworkSchema};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub points: PathBuf,
    pub network: PathBuf,
    pub schema: SchemaConfig,
    pub network_schema: NetworkSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_ratio: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_ratio: 0.3,
            seed: 42,
            stratified: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    /// Any of LDA, LinearSVM, RF, GBM, XGB.
    pub train: Vec<String>,
    /// Grid-search depth and tree count for GBM and XGB before the final fit.
    pub tune: bool,
    pub grid: TuneGrid,
    pub holdout_ratio: f64,
    pub tune_seed: u64,
    /// Model whose attributions and embedding are produced.
    pub explain: String,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            train: ModelKind::ALL.iter().map(|k| k.as_str().to_string()).collect(),
            tune: false,
            grid: TuneGrid::default(),
            holdout_ratio: 0.2,
            tune_seed: 7,
            explain: ModelKind::Xgb.as_str().into(),
        }
    }
}

impl ModelsConfig {
    pub fn kinds(&self) -> Result<Vec<ModelKind>> {
        let mut out: Vec<ModelKind> = Vec::new();
        for name in &self.train {
            let k: ModelKind = name.parse()?;
            if !out.contains(&k) {
                out.push(k);
            }
        }
        Ok(out)
    }

    pub fn explain_kind(&self) -> Result<ModelKind> {
        self.explain.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Test rows attributed and embedded.
    pub shap_rows: usize,
    /// Training rows used as background for linear attributions.
    pub background_rows: usize,
    pub sample_seed: u64,
    pub tsne: TsneParams,
    /// Dependence curves are fitted for this many top-importance features.
    pub dependence_features: usize,
    /// Rows listed in the importance CSV (all when 0).
    pub importance_top: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            shap_rows: 5000,
            background_rows: 1000,
            sample_seed: 11,
            tsne: TsneParams::default(),
            dependence_features: 6,
            importance_top: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub group: GroupConfig,
    pub validation: ValidationConfig,
    pub matching: MatchParams,
    pub kinematics: KinematicsConfig,
    pub features: FeatureConfig,
    pub selection: FeatureSelection,
    pub split: SplitConfig,
    pub models: ModelsConfig,
    pub learn: LearnConfig,
    pub explain: ExplainConfig,
    pub hotspot: HotspotConfig,
}

fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty override key `{key}`")))?;
    let mut table = doc;
    for p in parts {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Parses any config table from TOML text, with `key.path=value` overrides
/// applied to the document first.
pub fn parse_with_overrides<T: DeserializeOwned>(text: &str, overrides: &[String]) -> Result<T> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
        apply_override(&mut doc, k.trim(), parse_override_value(v.trim()))?;
    }
    toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

impl PipelineConfig {
    /// Parses TOML text with `key=value` overrides applied on top.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        parse_with_overrides(text, overrides)
    }

    /// Reads a config file; relative paths become relative to its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, overrides)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.input.points, &mut self.input.network, &mut self.output_dir] {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    /// Checks every threshold and name without touching the filesystem.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must be positive, got {v}")))
            }
        };
        positive("group.gap_split_s", self.group.gap_split_s as f64)?;
        positive("group.flush_window", self.group.flush_window as f64)?;
        positive("validation.min_points", self.validation.min_points as f64)?;
        positive("validation.min_duration_s", self.validation.min_duration_s as f64)?;
        positive("validation.max_implied_speed_mph", self.validation.max_implied_speed_mph)?;
        positive("matching.match_radius_m", self.matching.match_radius_m)?;
        positive("matching.heading_tol_deg", self.matching.heading_tol_deg)?;
        positive("matching.intersection_radius_m", self.matching.intersection_radius_m)?;
        if !(0.0..=1.0).contains(&self.matching.min_coverage) {
            return Err(Error::Config("`matching.min_coverage` must lie in [0, 1]".into()));
        }
        positive("kinematics.stop_speed_mph", self.kinematics.stop_speed_mph)?;
        positive("kinematics.gap_split_s", self.kinematics.gap_split_s as f64)?;
        positive("kinematics.turn_angle_deg", self.kinematics.turn_angle_deg)?;
        positive("kinematics.turn_window_s", self.kinematics.turn_window_s)?;
        positive("kinematics.turn_min_yaw", self.kinematics.turn_min_yaw)?;
        positive("features.hard_brake_thresh", self.features.hard_brake_thresh)?;
        positive("features.hard_acc_thresh", self.features.hard_acc_thresh)?;
        jiff::tz::TimeZone::get(&self.features.timezone)
            .map_err(|e| Error::Config(format!("timezone `{}`: {e}", self.features.timezone)))?;
        self.selection.resolve()?;
        if !(self.split.test_ratio > 0.0 && self.split.test_ratio < 1.0) {
            return Err(Error::Config("`split.test_ratio` must lie in (0, 1)".into()));
        }
        if self.models.kinds()?.is_empty() {
            return Err(Error::Config("`models.train` lists no model".into()));
        }
        self.models.explain_kind()?;
        if self.models.tune {
            if !(self.models.holdout_ratio > 0.0 && self.models.holdout_ratio < 1.0) {
                return Err(Error::Config("`models.holdout_ratio` must lie in (0, 1)".into()));
            }
            if self.models.grid.max_depth.is_empty() || self.models.grid.n_trees.is_empty() {
                return Err(Error::Config("`models.grid` is empty".into()));
            }
        }
        self.learn.gbm.validate()?;
        self.learn.xgb.validate()?;
        positive("explain.tsne.perplexity", self.explain.tsne.perplexity)?;
        positive("explain.tsne.learning_rate", self.explain.tsne.learning_rate)?;
        Ok(())
    }
}
