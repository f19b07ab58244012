use proptest::prelude::*;
use qkd_workbench::linksim::{
    apply_hardware_deadtime, detect_bright, detect_single_photon, read_binary, read_csv, run_session,
    sample_photon_number, software_deadtime_filter, thin, write_binary, write_clicks_csv, write_pulses_csv, Basis,
    ChannelConfig, ClickFlag, ClickRecord, ClickTruth, DetectorModel, Intensity, SessionLog, SessionOptions,
    SourceConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TRAIN: u32 = 10_000;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn click_at(gate: u64, detector: u8) -> ClickRecord {
    ClickRecord {
        train: (gate / u64::from(TRAIN)) as u32,
        slot: (gate % u64::from(TRAIN)) as u32,
        detector,
        bob_basis: Basis::Z,
        bob_bit: detector,
        flag: ClickFlag::Single,
        alice_basis: Basis::Z,
        alice_bit: detector,
        intensity: Intensity::Mu,
        sent_through: [0; 3],
        truth: Some(ClickTruth::default()),
    }
}

fn log_of(clicks: Vec<ClickRecord>) -> SessionLog {
    let n_trains = clicks.iter().map(|c| c.train + 1).max().unwrap_or(1);
    SessionLog {
        train_length: TRAIN,
        n_trains,
        four_state_bob: false,
        train_counts: vec![[0; 3]; n_trains as usize],
        pulses: None,
        clicks,
    }
}

fn gates(log: &SessionLog) -> Vec<u64> {
    log.clicks.iter().map(|c| c.gate(log.train_length)).collect()
}

fn mean(xs: impl Iterator<Item = u32>, n: usize) -> f64 {
    xs.map(f64::from).sum::<f64>() / n as f64
}

#[test]
fn poisson_source() {
    let mut r = rng(1);
    assert!((0..1000).all(|_| sample_photon_number(0.0, &mut r) == 0));
    let n = 1_000_000;
    let m = mean((0..n).map(|_| sample_photon_number(0.5, &mut r)), n);
    assert!((m - 0.5).abs() < 0.002, "{m}");
}

#[test]
fn binomial_thinning() {
    let mut r = rng(2);
    assert_eq!(thin(7, 1.0, &mut r), 7);
    assert_eq!(thin(7, 0.0, &mut r), 0);
    let n = 1_000_000;
    let m = mean((0..n).map(|_| thin(2, 0.5, &mut r)), n);
    assert!((m - 1.0).abs() < 0.01, "{m}");
}

#[test]
fn single_photon_clicks() {
    let mut r = rng(3);
    let quiet = DetectorModel::ideal(0.1, 0.0);
    assert!((0..10_000).all(|_| !detect_single_photon(0, &quiet, &mut r)));
    let perfect = DetectorModel::ideal(1.0, 0.0);
    assert!((1..50).all(|n| detect_single_photon(n, &perfect, &mut r)));
    let n = 1_000_000;
    let hits = (0..n).filter(|_| detect_single_photon(2, &quiet, &mut r)).count();
    // 1 − (1 − η)^n for η = 0.1, n = 2
    let expected = 1.0 - 0.9 * 0.9;
    assert!((hits as f64 / n as f64 - expected).abs() < 0.005);
}

#[test]
fn blinded_ramp() {
    let d = DetectorModel::default();
    assert_eq!(detect_bright(12e-15, &d, true).unwrap(), 0.0);
    assert_eq!(detect_bright(22e-15, &d, true).unwrap(), 1.0);
    assert_eq!(detect_bright(40e-15, &d, true).unwrap(), 1.0);
    assert!((detect_bright(17e-15, &d, true).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn software_filter_examples() {
    let filtered = software_deadtime_filter(&log_of(vec![click_at(0, 0), click_at(1000, 1), click_at(2500, 0)]), 1875);
    assert_eq!(gates(&filtered), vec![0]);
    let filtered = software_deadtime_filter(&log_of(vec![click_at(0, 0), click_at(4999, 1)]), 1875);
    assert_eq!(gates(&filtered), vec![0, 4999]);
}

proptest! {
    #[test]
    fn filter_leaves_wide_gaps(mut gs in prop::collection::btree_set(0u64..200_000, 0..200), n in 1u64..5000) {
        let clicks: Vec<_> = std::mem::take(&mut gs).into_iter().map(|g| click_at(g, (g % 2) as u8)).collect();
        let input = log_of(clicks);
        let out = gates(&software_deadtime_filter(&input, n));
        prop_assert!(out.windows(2).all(|w| w[1] - w[0] >= n));
        // Every kept click is also at least N after the previous input click.
        let all = gates(&input);
        for g in &out {
            let i = all.iter().position(|x| x == g).unwrap();
            prop_assert!(i == 0 || g - all[i - 1] >= n);
        }
    }
}

#[test]
fn hardware_deadtime_leaves_isolated_click() {
    let d = DetectorModel::default();
    let input = log_of(vec![click_at(17, 1)]);
    let out = apply_hardware_deadtime(&input, &d, &d, &mut rng(4));
    assert_eq!(out, input);
}

/// A click on every gate, alternating detectors, in one train.
fn saturated_stream(n: u64) -> SessionLog {
    log_of((0..n).map(|g| click_at(g, (g % 2) as u8)).collect())
}

#[test]
fn cross_clicks_only_early_in_deadtime() {
    let d = DetectorModel::default();
    let out = apply_hardware_deadtime(&saturated_stream(TRAIN as u64), &d, &d, &mut rng(5));
    let g = gates(&out);
    let dead = u64::from(d.deadtime_gates());
    let mut cross = 0;
    for w in g.windows(2) {
        let gap = w[1] - w[0];
        if gap < dead {
            assert!(gap <= u64::from(d.crosslink_delay_gates), "gap {gap}");
            cross += 1;
        }
    }
    assert!(cross > 0);
}

#[test]
fn simultaneous_deadtime_has_no_cross_clicks() {
    let d = DetectorModel { crosslink_delay_gates: 0, recovery_profile: Vec::new(), ..DetectorModel::default() };
    let out = apply_hardware_deadtime(&saturated_stream(TRAIN as u64), &d, &d, &mut rng(6));
    let g = gates(&out);
    assert!(g.len() > 1);
    assert!(g.windows(2).all(|w| w[1] - w[0] > u64::from(d.deadtime_gates())));
}

fn noiseless() -> (SourceConfig, ChannelConfig, [DetectorModel; 2]) {
    let d = DetectorModel::ideal(1.0, 0.0);
    (SourceConfig::signal_only(0.5, 200_000), ChannelConfig::new(0.0, 0.0), [d.clone(), d])
}

#[test]
fn noiseless_link_has_no_errors() {
    let (s, c, d) = noiseless();
    let log = run_session(&s, &c, &d, &SessionOptions::new(2, 7)).unwrap();
    let matched: Vec<_> = log.clicks.iter().filter(|k| k.alice_basis == k.bob_basis).collect();
    assert!(matched.len() > 10_000);
    assert!(matched.iter().all(|k| k.alice_bit == k.bob_bit));
}

#[test]
fn sessions_are_reproducible() {
    let (s, c, d) = noiseless();
    let a = run_session(&s, &c, &d, &SessionOptions::new(2, 99)).unwrap();
    let b = run_session(&s, &c, &d, &SessionOptions::new(2, 99)).unwrap();
    let other = run_session(&s, &c, &d, &SessionOptions::new(2, 100)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.clicks, other.clicks);
}

fn mismatched(four_state: bool) -> SessionLog {
    let d0 = DetectorModel::ideal(0.09, 0.0);
    let d1 = DetectorModel::ideal(0.11, 0.0);
    let s = SourceConfig { train_length: 1_000_000, ..SourceConfig::signal_only(0.5, 1_000_000) };
    run_session(&s, &ChannelConfig::new(0.0, 0.0), &[d0, d1], &SessionOptions::new(3, 11).four_state(four_state))
        .unwrap()
}

#[test]
fn efficiency_mismatch_skews_detector_counts() {
    let log = mismatched(false);
    let [a, b] = log.detector_counts();
    assert!(a + b >= 100_000);
    let share = a as f64 / (a + b) as f64;
    assert!((share - 0.45).abs() < 0.01, "{share}");
    let [z, o] = log.bit_counts();
    assert!((z as f64 / (z + o) as f64 - 0.45).abs() < 0.01);
}

#[test]
fn four_state_bob_balances_bits() {
    let log = mismatched(true);
    let [z, o] = log.bit_counts();
    assert!(z + o >= 100_000);
    let share = z as f64 / (z + o) as f64;
    assert!((share - 0.5).abs() < 0.01, "{share}");
}

fn small_noisy_log() -> SessionLog {
    let s = SourceConfig { train_length: 50_000, ..SourceConfig::default() };
    let d = DetectorModel::ideal(0.2, 1e-3);
    let opts = SessionOptions::new(2, 5).four_state(true).with_pulses();
    run_session(&s, &ChannelConfig::new(3.0, 0.02), &[d.clone(), d], &opts).unwrap()
}

fn without_truth(log: &SessionLog) -> SessionLog {
    let mut l = log.clone();
    for c in &mut l.clicks {
        c.truth = None;
    }
    l
}

#[test]
fn csv_round_trip() {
    let log = small_noisy_log();
    let mut pulses = Vec::new();
    let mut clicks = Vec::new();
    write_pulses_csv(&log, &mut pulses).unwrap();
    write_clicks_csv(&log, &mut clicks).unwrap();
    let back = read_csv(pulses.as_slice(), clicks.as_slice(), true).unwrap();
    let expected = without_truth(&log);
    assert_eq!(back.clicks, expected.clicks);
    assert_eq!(back.total_sent(), log.total_sent());
}

#[test]
fn binary_round_trip() {
    let log = small_noisy_log();
    let mut buf = Vec::new();
    write_binary(&log, &mut buf).unwrap();
    let back = read_binary(buf.as_slice()).unwrap();
    assert_eq!(back.clicks, without_truth(&log).clicks);
    assert_eq!(back.train_counts, log.train_counts);
}
