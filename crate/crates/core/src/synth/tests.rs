use super::*;
use crate::geo::distance_m;

fn small(n: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_journeys: n,
        grid_size: 8,
        seed,
        ..SynthConfig::default()
    }
}

fn cruiser(target: f64) -> BehaviorProfile {
    BehaviorProfile {
        target_speeding: target,
        accel: 2.0,
        decel: 2.0,
        jitter_mps: 0.0,
        speed_wobble: 0.0,
        p_straight: 1.0,
        p_stop_signalized: 0.0,
        p_stop_unsignalized: 0.0,
        p_stop_midblock: 0.0,
        dwell_signalized: (0.0, 0.0),
        dwell_unsignalized: (0.0, 0.0),
        start_cruising: true,
    }
}

#[test]
fn grid_shape() {
    let net = generate_network(&small(0, 1)).unwrap();
    assert_eq!(net.network.intersections.len(), 64);
    assert_eq!(net.network.segments.len(), 2 * 8 * 7);
    assert!(net.node(0, 4).signalized && net.node(4, 0).signalized);
    assert!(!net.node(1, 1).signalized);
    let ids: std::collections::HashSet<_> = net.network.segments.iter().map(|s| s.segment_id.clone()).collect();
    assert_eq!(ids.len(), net.network.segments.len());
    // polylines are one block long
    for s in &net.network.segments {
        assert!((distance_m(s.polyline[0], s.polyline[1]) - 400.0).abs() < 1.0);
    }
}

#[test]
fn single_segment_journey_is_level_one() {
    let cfg = SynthConfig {
        n_journeys: 1,
        grid_size: 2,
        block_m: 2000.0,
        hot_share: 0.0,
        min_duration_s: 30,
        max_duration_s: 30,
        fixed_profile: Some(cruiser(0.10)),
        ..SynthConfig::default()
    };
    let b = generate_synthetic(&cfg).unwrap();
    let j = &b.truth.journeys[0];
    assert_eq!(j.fixes.len(), 11);
    assert!(j.fixes.iter().all(|f| f.segment == j.fixes[0].segment));
    assert!((j.truth.speeding_prop - 0.10).abs() < 1e-12);
    assert_eq!(j.truth.speeding_level.get(), 1);
    assert_eq!(j.truth.turn_sum, 0.0);
    assert_eq!(j.truth.time_stopped_sum, 0.0);
}

#[test]
fn seeded_runs_are_identical() {
    let a = generate_synthetic(&small(40, 9)).unwrap();
    let b = generate_synthetic(&small(40, 9)).unwrap();
    let (mut pa, mut pb) = (Vec::new(), Vec::new());
    write_points_csv(&mut pa, &a.truth.journeys).unwrap();
    write_points_csv(&mut pb, &b.truth.journeys).unwrap();
    assert_eq!(pa, pb);
    assert_eq!(serde_json::to_string(&a.truth).unwrap(), serde_json::to_string(&b.truth).unwrap());
    let c = generate_synthetic(&small(40, 10)).unwrap();
    let mut pc = Vec::new();
    write_points_csv(&mut pc, &c.truth.journeys).unwrap();
    assert_ne!(pa, pc);
}

#[test]
fn mix_can_force_every_level() {
    let cfg = SynthConfig {
        behavior_mix: [1.0; 6],
        ..small(300, 3)
    };
    let b = generate_synthetic(&cfg).unwrap();
    let h = b.truth.level_histogram();
    assert!(h.iter().all(|&c| c > 0), "{h:?}");
}

#[test]
fn fixes_lie_on_their_segments() {
    let b = generate_synthetic(&small(60, 4)).unwrap();
    let net = &b.network.network;
    for j in &b.truth.journeys {
        for w in j.fixes.windows(2) {
            assert_eq!(w[1].timestamp - w[0].timestamp, 3);
            // never faster over ground than the fastest simulated driver
            assert!(distance_m(w[0].position, w[1].position) < 200.0);
        }
        for f in &j.fixes {
            let s = &net.segments[f.segment];
            let along = distance_m(s.polyline[0], f.position) + distance_m(f.position, s.polyline[1]);
            assert!((along - distance_m(s.polyline[0], s.polyline[1])).abs() < 1e-6);
            assert!(f.speed_mph >= 0.0 && (0.0..360.0).contains(&f.heading));
        }
        // every planned turn shows up as exactly one sharp heading change
        let sharp = j
            .fixes
            .windows(2)
            .filter(|w| {
                let d = (w[1].heading - w[0].heading).rem_euclid(360.0);
                d.min(360.0 - d) > 45.0
            })
            .count();
        assert_eq!(sharp, j.turns, "{}", j.journey_id);
    }
}

#[test]
fn stops_and_signals_occur() {
    let b = generate_synthetic(&small(200, 5)).unwrap();
    let js = &b.truth.journeys;
    assert!(js.iter().any(|j| j.truth.time_stopped_at_signalized_sum > 0.0));
    assert!(js.iter().any(|j| j.truth.time_stopped_at_unsignalized_sum > 0.0));
    assert!(js.iter().any(|j| j.truth.hardbrake_prop > 0.0));
    assert!(js.iter().all(|j| j.truth.time_stopped_sum
        >= j.truth.time_stopped_at_signalized_sum + j.truth.time_stopped_at_unsignalized_sum));
    let seg_points: u64 = b.truth.segments.iter().map(|s| s.point_count).sum();
    assert_eq!(seg_points as usize, b.truth.total_points());
}

#[test]
fn bad_configs_rejected() {
    for cfg in [
        SynthConfig { grid_size: 1, ..SynthConfig::default() },
        SynthConfig { block_m: 100.0, ..SynthConfig::default() },
        SynthConfig { behavior_mix: [0.0; 6], ..SynthConfig::default() },
        SynthConfig { timezone: "Mars/Olympus".into(), ..SynthConfig::default() },
    ] {
        assert!(matches!(generate_network(&cfg), Err(Error::Config(_))));
    }
}
