mod common;

use common::*;
use speedlens::synth::SynthConfig;

#[test]
fn default_bundle_features_match_generator_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let (files, truth) = write_bundle(&SynthConfig::default(), tmp.path());
    let cfg = config_for(&files, &tmp.path().join("out"));
    let (rows, report) = extract(&cfg);
    let bad = mismatches(&rows, &truth);
    assert!(bad.is_empty(), "{} mismatches, first: {:?}", bad.len(), &bad[..bad.len().min(20)]);
    assert_eq!(report.features_out, 10_000);
    assert!(report.exclusions.is_empty() && report.journey_rejections.is_empty());
}
