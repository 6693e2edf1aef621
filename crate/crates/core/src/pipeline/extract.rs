//! Streaming ingest → enrich → kinematics → features.
//!
//! Points are read once, grouped into journeys, and every closed batch of
//! journeys goes through all four passes before the next batch is read, so
//! memory is bounded by the grouper's window plus one batch. Each pass is
//! parallel over journeys; results keep input order.

use std::collections::BTreeMap;
use std::io::Read;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::features::{Aggregator, ExclusionReason, JourneyFeatures};
use crate::ingest::{parse_points, validate_journey, GroupStats, Journey, JourneyGrouper, RejectReport};
use crate::kinematics::{derive_journey_intervals, detect_stops, detect_turns};
use crate::roadnet::{enrich_journey, MatchedJourney, NetworkIndex};

use super::{in_stage, StageRecord};

/// Journeys handed to the parallel passes at a time.
pub const BATCH_JOURNEYS: usize = 1024;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PassTimes {
    pub ingest: f64,
    pub enrich: f64,
    pub kinematics: f64,
    pub features: f64,
}

/// Counts from one pass over the input.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub points: RejectReport,
    pub grouping: GroupStats,
    /// Journeys leaving the grouper.
    pub journeys_in: u64,
    pub journey_rejections: BTreeMap<String, u64>,
    pub teleports_dropped: u64,
    pub validated: u64,
    pub matched: u64,
    pub low_coverage: u64,
    pub exclusions: BTreeMap<String, u64>,
    pub features_out: u64,
    pub times: PassTimes,
}

impl ExtractReport {
    pub fn ingest_record(&self) -> StageRecord {
        let mut r = StageRecord::new("ingest", self.journeys_in, self.validated);
        r.rejected = self.journey_rejections.clone();
        r.detail("records_read", self.points.records_read);
        r.detail("points_accepted", self.points.accepted);
        r.detail("points_rejected", self.points.rejected);
        let by_reason: BTreeMap<String, u64> = self
            .points
            .by_reason
            .iter()
            .map(|(k, n)| (snake(k), *n))
            .collect();
        r.detail("points_rejected_by_reason", by_reason);
        r.detail("duplicates_collapsed", self.grouping.duplicates_collapsed);
        r.detail("late_points", self.grouping.late_points);
        r.detail("fragments_dropped", self.grouping.fragments_dropped);
        r.detail("teleports_dropped", self.teleports_dropped);
        r
    }

    pub fn enrich_record(&self) -> StageRecord {
        let mut r = StageRecord::new("enrich", self.validated, self.matched);
        r.detail("low_coverage", self.low_coverage);
        r
    }

    pub fn kinematics_record(&self) -> StageRecord {
        StageRecord::new("kinematics", self.matched, self.matched)
    }

    pub fn features_record(&self) -> StageRecord {
        let mut r = StageRecord::new("features", self.matched, self.features_out);
        r.rejected = self.exclusions.clone();
        r
    }
}

pub(crate) fn snake<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => "unknown".into(),
    }
}

/// The four per-batch passes plus their running counts.
pub struct Extractor<'a> {
    cfg: &'a PipelineConfig,
    aggregator: Aggregator,
    pub report: ExtractReport,
}

impl<'a> Extractor<'a> {
    pub fn new(cfg: &'a PipelineConfig) -> Result<Self> {
        Ok(Extractor {
            cfg,
            aggregator: in_stage("features", Aggregator::new(&cfg.features, &cfg.kinematics))?,
            report: ExtractReport::default(),
        })
    }

    /// Teleport filter and point/duration gates.
    pub fn validate(&mut self, batch: Vec<Journey>) -> Vec<Journey> {
        let t = Instant::now();
        self.report.journeys_in += batch.len() as u64;
        let results: Vec<_> = batch
            .into_par_iter()
            .map(|j| validate_journey(j, &self.cfg.validation))
            .collect();
        let mut kept = Vec::with_capacity(results.len());
        for r in results {
            match r {
                Ok(v) => {
                    self.report.teleports_dropped += v.teleports_dropped as u64;
                    kept.push(v.journey);
                }
                Err(rej) => *self.report.journey_rejections.entry(snake(&rej.reason)).or_default() += 1,
            }
        }
        self.report.validated += kept.len() as u64;
        self.report.times.ingest += t.elapsed().as_secs_f64();
        kept
    }

    pub fn enrich(&mut self, batch: Vec<Journey>, index: &NetworkIndex) -> Vec<MatchedJourney> {
        let t = Instant::now();
        let out: Vec<MatchedJourney> = batch
            .into_par_iter()
            .map(|j| enrich_journey(j, index, &self.cfg.matching))
            .collect();
        self.report.matched += out.len() as u64;
        self.report.low_coverage += out.iter().filter(|m| m.low_coverage).count() as u64;
        self.report.times.enrich += t.elapsed().as_secs_f64();
        out
    }

    /// Kinematics then aggregation; low-coverage journeys are excluded here.
    pub fn featurize(&mut self, batch: &[MatchedJourney]) -> Vec<Result<JourneyFeatures, ExclusionReason>> {
        let t = Instant::now();
        let kin = &self.cfg.kinematics;
        let radius = self.cfg.matching.intersection_radius_m;
        let motion: Vec<_> = batch
            .par_iter()
            .map(|mj| {
                let iv = derive_journey_intervals(&mj.points, kin);
                let stops = detect_stops(&iv, &mj.points, radius);
                let turns = detect_turns(&iv, kin);
                (iv, stops, turns)
            })
            .collect();
        self.report.times.kinematics += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let agg = &self.aggregator;
        let rows: Vec<_> = batch
            .par_iter()
            .zip(motion)
            .map(|(mj, (iv, stops, turns))| {
                if mj.low_coverage {
                    Err(ExclusionReason::LowCoverage)
                } else {
                    agg.aggregate(mj, &iv, &stops, &turns)
                }
            })
            .collect();
        for r in &rows {
            match r {
                Ok(_) => self.report.features_out += 1,
                Err(e) => *self.report.exclusions.entry(snake(e)).or_default() += 1,
            }
        }
        self.report.times.features += t.elapsed().as_secs_f64();
        rows
    }

    /// Reads points, closes journeys through the streaming grouper and hands
    /// batches of them to `on_batch` in a deterministic order.
    pub fn stream<R: Read>(
        &mut self,
        points: R,
        mut on_batch: impl FnMut(&mut Self, Vec<Journey>) -> Result<()>,
    ) -> Result<()> {
        let mut reader = in_stage("ingest", parse_points(points, &self.cfg.input.schema))?;
        let mut grouper = JourneyGrouper::new(self.cfg.group.clone());
        let mut ready: Vec<Journey> = Vec::new();
        let mut t = Instant::now();
        for p in reader.by_ref() {
            grouper.push(in_stage("ingest", p)?, &mut ready);
            if ready.len() >= BATCH_JOURNEYS {
                self.report.times.ingest += t.elapsed().as_secs_f64();
                on_batch(self, std::mem::take(&mut ready))?;
                t = Instant::now();
            }
        }
        grouper.finish(&mut ready);
        self.report.points = reader.into_report();
        self.report.grouping = grouper.stats().clone();
        self.report.times.ingest += t.elapsed().as_secs_f64();
        for chunk in chunked(ready) {
            on_batch(self, chunk)?;
        }
        Ok(())
    }
}

fn chunked(mut v: Vec<Journey>) -> Vec<Vec<Journey>> {
    let mut out = Vec::new();
    while v.len() > BATCH_JOURNEYS {
        let rest = v.split_off(BATCH_JOURNEYS);
        out.push(v);
        v = rest;
    }
    if !v.is_empty() {
        out.push(v);
    }
    out
}

/// The fused pass. `on_row` sees each feature row, `on_matched` each enriched
/// journey, both in input order.
pub fn extract_features<R: Read>(
    cfg: &PipelineConfig,
    index: &NetworkIndex,
    points: R,
    mut on_row: impl FnMut(&str, &JourneyFeatures) -> Result<()>,
    mut on_matched: impl FnMut(&MatchedJourney) -> Result<()>,
) -> Result<ExtractReport> {
    let mut ex = Extractor::new(cfg)?;
    ex.stream(points, |ex, batch| {
        let kept = ex.validate(batch);
        let matched = ex.enrich(kept, index);
        let rows = ex.featurize(&matched);
        for (mj, row) in matched.iter().zip(&rows) {
            if let Ok(f) = row {
                in_stage("features", on_row(&mj.journey_id, f))?;
            }
            on_matched(mj)?;
        }
        Ok(())
    })?;
    Ok(ex.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_keeps_order_and_sizes() {
        let v: Vec<Journey> = (0..2500)
            .map(|i| Journey {
                journey_id: format!("{i:05}"),
                points: Vec::new(),
            })
            .collect();
        let chunks = chunked(v);
        assert_eq!(chunks.iter().map(Vec::len).collect::<Vec<_>>(), [1024, 1024, 452]);
        let ids: Vec<_> = chunks.concat().into_iter().map(|j| j.journey_id).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert!(chunked(Vec::new()).is_empty());
    }
}
