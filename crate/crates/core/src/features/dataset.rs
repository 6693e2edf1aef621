use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{JourneyFeatures, SpeedingLevel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Predictors used when no selection is configured: every column except
/// `speeding_prop` (the label is a binning of it) and the label itself.
pub const DEFAULT_FEATURES: [&str; 30] = [
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
    "Residential_prop",
    "Commerical_prop",
    "Industrial_prop",
    "Institutional_prop",
    "C1_prop",
    "C2_prop",
    "C3C_prop",
    "C3R_prop",
    "C4_prop",
];

const LEAKY: &str = "speeding_prop";
const LABEL: &str = "speeding_level";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSelection {
    /// Replaces the default predictor list when set.
    pub columns: Option<Vec<String>>,
    pub include: Vec<String>,
    pub exclude: Vec<String>,
}

impl FeatureSelection {
    pub fn resolve(&self) -> Result<Vec<String>> {
        let mut cols: Vec<String> = match &self.columns {
            Some(c) => c.clone(),
            None => DEFAULT_FEATURES.iter().map(|s| s.to_string()).collect(),
        };
        for c in &self.include {
            if !cols.contains(c) {
                cols.push(c.clone());
            }
        }
        cols.retain(|c| !self.exclude.contains(c));
        for c in &cols {
            if c == LABEL {
                return Err(Error::Config("the label cannot be a feature".into()));
            }
            if !JourneyFeatures::COLUMNS.contains(&c.as_str()) {
                return Err(Error::Config(format!("unknown feature column `{c}`")));
            }
        }
        Ok(cols)
    }
}

/// Model-ready table: selected predictors, labels and row keys, sorted by journey id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub journey_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssembleReport {
    pub rows_in: usize,
    pub dropped_non_finite: usize,
    pub leakage_warning: bool,
}

pub fn assemble_dataset(
    features: impl IntoIterator<Item = (String, JourneyFeatures)>,
    selection: &FeatureSelection,
) -> Result<(FeatureMatrix, AssembleReport)> {
    let columns = selection.resolve()?;
    let mut report = AssembleReport::default();
    if columns.iter().any(|c| c == LEAKY) {
        report.leakage_warning = true;
        log::warn!(
            "LEAKAGE: `{LEAKY}` selected as a predictor; the label is a deterministic binning of it"
        );
    }
    let picks: Vec<usize> = columns
        .iter()
        .map(|c| JourneyFeatures::COLUMNS.iter().position(|k| k == c).unwrap_or(0))
        .collect();

    let mut rows: Vec<(String, Vec<f64>, usize)> = Vec::new();
    for (id, f) in features {
        report.rows_in += 1;
        let all = f.values();
        let row: Vec<f64> = picks.iter().map(|&i| all[i]).collect();
        if row.iter().any(|v| !v.is_finite()) {
            report.dropped_non_finite += 1;
            continue;
        }
        rows.push((id, row, f.speeding_level.index()));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let n_cols = columns.len();
    let mut data = Vec::with_capacity(rows.len() * n_cols);
    let mut labels = Vec::with_capacity(rows.len());
    let mut journey_ids = Vec::with_capacity(rows.len());
    for (id, row, label) in rows {
        data.extend(row);
        labels.push(label);
        journey_ids.push(id);
    }
    let x = Matrix::new(labels.len(), n_cols, data)?;
    Ok((
        FeatureMatrix {
            columns,
            x,
            labels,
            journey_ids,
        },
        report,
    ))
}

/// Row-at-a-time feature CSV writer.
pub struct FeatureCsvWriter<W: Write> {
    out: csv::Writer<W>,
    rec: Vec<String>,
}

impl<W: Write> FeatureCsvWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["journey_id"];
        header.extend(JourneyFeatures::COLUMNS);
        out.write_record(&header)?;
        Ok(FeatureCsvWriter {
            out,
            rec: Vec::with_capacity(33),
        })
    }

    pub fn write(&mut self, id: &str, f: &JourneyFeatures) -> Result<()> {
        self.rec.clear();
        self.rec.push(id.to_owned());
        self.rec.extend(f.values().iter().map(|v| v.to_string()));
        self.out.write_record(&self.rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Writes `journey_id` plus every feature column.
pub fn write_features_csv<W: Write>(w: W, rows: &[(String, JourneyFeatures)]) -> Result<()> {
    let mut out = FeatureCsvWriter::new(w)?;
    for (id, f) in rows {
        out.write(id, f)?;
    }
    out.finish()
}

pub fn read_features_csv<R: Read>(r: R) -> Result<Vec<(String, JourneyFeatures)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("journey_id")
        || headers.iter().skip(1).ne(JourneyFeatures::COLUMNS.iter().copied())
    {
        return Err(Error::Schema("feature CSV header does not match the feature schema".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_owned();
        let mut v = [0.0f64; 32];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rec
                .get(k + 1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Schema(format!("bad value in column {}", JourneyFeatures::COLUMNS[k])))?;
        }
        let level = SpeedingLevel::new(v[31] as u8)?;
        out.push((
            id,
            JourneyFeatures {
                time_stopped_sum: v[0],
                time_stopped_at_signalized_sum: v[1],
                time_stopped_at_unsignalized_sum: v[2],
                journeytime_sum: v[3],
                is_signalized: v[4],
                turn_sum: v[5],
                hardbrake_mean: v[6],
                hardbrake_min: v[7],
                hardbrake_count: v[8],
                hardacc_mean: v[9],
                hardacc_max: v[10],
                hardacc_count: v[11],
                moving_speed: v[12],
                yaw_rate_mean: v[13],
                yaw_rate_max: v[14],
                moving_yaw_rate: v[15],
                hour: v[16],
                dayofweek: v[17],
                year: v[18],
                hardbrake_prop: v[19],
                hardacc_prop: v[20],
                speeding_prop: v[21],
                residential_prop: v[22],
                commercial_prop: v[23],
                industrial_prop: v[24],
                institutional_prop: v[25],
                c1_prop: v[26],
                c2_prop: v[27],
                c3c_prop: v[28],
                c3r_prop: v[29],
                c4_prop: v[30],
                speeding_level: level,
            },
        ));
    }
    Ok(out)
}

impl FeatureMatrix {
    /// CSV with `journey_id`, the selected columns and `speeding_level`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["journey_id".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push(LABEL.into());
        out.write_record(&header)?;
        for (i, id) in self.journey_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            rec.push(self.labels[i].to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(level: u8, speeding: f64) -> JourneyFeatures {
        JourneyFeatures {
            journeytime_sum: 100.0,
            speeding_prop: speeding,
            speeding_level: SpeedingLevel::new(level).unwrap(),
            ..JourneyFeatures::default()
        }
    }

    #[test]
    fn default_selection_excludes_leaky_column() {
        let rows = vec![
            ("b".to_string(), row(1, 0.1)),
            ("a".to_string(), row(0, 0.0)),
            ("c".to_string(), row(2, 0.3)),
        ];
        let (m, rep) = assemble_dataset(rows, &FeatureSelection::default()).unwrap();
        assert_eq!(m.x.n_rows(), 3);
        assert_eq!(m.columns.len(), DEFAULT_FEATURES.len());
        assert!(!m.columns.iter().any(|c| c == "speeding_prop"));
        assert!(!m.columns.iter().any(|c| c == "speeding_level"));
        assert_eq!(m.journey_ids, vec!["a", "b", "c"]);
        assert_eq!(m.labels, vec![0, 1, 2]);
        assert!(!rep.leakage_warning);
    }

    #[test]
    fn explicit_leaky_column_warns() {
        let sel = FeatureSelection {
            include: vec!["speeding_prop".into()],
            ..FeatureSelection::default()
        };
        let (m, rep) = assemble_dataset(vec![("a".into(), row(1, 0.1))], &sel).unwrap();
        assert!(m.columns.iter().any(|c| c == "speeding_prop"));
        assert!(rep.leakage_warning);
    }

    #[test]
    fn non_finite_rows_dropped_and_empty_is_error() {
        let mut bad = row(0, 0.0);
        bad.moving_speed = f64::NAN;
        let (m, rep) =
            assemble_dataset(vec![("a".into(), bad), ("b".into(), row(0, 0.0))], &FeatureSelection::default()).unwrap();
        assert_eq!(m.x.n_rows(), 1);
        assert_eq!(rep.dropped_non_finite, 1);
        assert!(matches!(
            assemble_dataset(vec![("a".into(), bad)], &FeatureSelection::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn label_and_unknown_columns_rejected() {
        let sel = FeatureSelection {
            include: vec!["speeding_level".into()],
            ..FeatureSelection::default()
        };
        assert!(sel.resolve().is_err());
        let sel = FeatureSelection {
            columns: Some(vec!["nope".into()]),
            ..FeatureSelection::default()
        };
        assert!(sel.resolve().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut f = row(3, 0.45);
        f.moving_speed = 51.123456789012345;
        f.c3c_prop = 1.0 / 3.0;
        let rows = vec![("j1".to_string(), f)];
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("journey_id,timeStopped_sum,timeStoppedAtSignalized_sum"));
        assert_eq!(read_features_csv(buf.as_slice()).unwrap(), rows);
    }
}
