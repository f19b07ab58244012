use std::path::{Path, PathBuf};

use qkd_workbench::attacks::{
    covering_filter_window, deadtime_attack, faked_state_attack, run_attack, AttackConfig, AttackKind,
};
use qkd_workbench::linksim::{
    detect_bright, run_session, ChannelConfig, DetectorModel, SessionOptions, SourceConfig,
};
use qkd_workbench::lossbudget::builtin;
use qkd_workbench::postproc::estimate::binary_entropy;
use qkd_workbench::postproc::pipeline::BlockReport;
use qkd_workbench::scenario::{
    emit_series, load_scenario, run_scenario, write_outputs, Report, Scenario, ScenarioError, SeriesError,
    CATALOG_PATH_ENV, REPORT_SCHEMA,
};

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run_bundled(name: &str) -> qkd_workbench::scenario::RunArtifacts {
    let (scn, base) = load_scenario(&bundled(name)).unwrap();
    run_scenario(&scn, &base).unwrap()
}

/// Decoy bounds and key length written out term by term, with the
/// single-photon gain denominator expanded as µν1 − µν2 − ν1² + ν2².
fn straight_line_ell(r: &BlockReport, mu: f64, nu1: f64, nu2: f64, z: f64, eps_pa: f64) -> (f64, f64) {
    let gain = |a: usize| r.stats.detected[a] as f64 / r.stats.sent[a] as f64;
    let width = |a: usize| z * (gain(a) * (1.0 - gain(a)) / r.stats.sent[a] as f64).sqrt();
    let (qmu_u, qn1_u, qn1_l, qn2_u, qn2_l) =
        (gain(0) + width(0), gain(1) + width(1), gain(1) - width(1), gain(2) + width(2), gain(2) - width(2));
    let y0 = f64::max(0.0, (nu1 * qn2_l * nu2.exp() - nu2 * qn1_u * nu1.exp()) / (nu1 - nu2));
    let denom = mu * nu1 - mu * nu2 - nu1 * nu1 + nu2 * nu2;
    let q1 = mu * mu * (-mu).exp() / denom
        * (qn1_l * nu1.exp() - qn2_u * nu2.exp() - (nu1 * nu1 - nu2 * nu2) / (mu * mu) * (qmu_u * mu.exp() - y0));
    let l_ver = r.l_ver as f64;
    let p1 = q1 / qmu_u;
    let m1 = l_ver * p1 - z * (l_ver * p1 * (1.0 - p1)).sqrt();
    let n_mu = r.stats.sent[0] as f64;
    let p0 = (-mu).exp() * y0 / 4.0;
    let m0 = f64::max(0.0, n_mu * p0 - z * (n_mu * p0 * (1.0 - p0)).sqrt());
    let e1 = f64::max(0.0, (l_ver * r.e_mu - m0) / m1);
    (m1, m1 * (1.0 - binary_entropy(e1)) - r.leak - 5.0 * (1.0 / eps_pa).log2())
}

#[test]
fn honest_link_produces_matching_keys() {
    let art = run_bundled("honest_10db.json");
    let report = &art.report;
    assert!(report.secret_bits > 0);
    assert_eq!(report.exit_code(), 0);
    assert_eq!(report.schema, REPORT_SCHEMA);
    assert_eq!(art.alice_key, art.bob_key);

    let z = report.blocks[0].estimation.as_ref().unwrap().z;
    for b in report.blocks.iter().filter(|b| !b.aborted()) {
        let (m1, expected) = straight_line_ell(b, 0.5, 0.1, 0.01, z, 1e-12);
        let est = b.estimation.as_ref().unwrap();
        assert!((est.m1_lower - m1).abs() / m1 < 1e-8, "m1 {} vs {m1}", est.m1_lower);
        assert_eq!(b.ell_sec, expected.floor() as i64, "raw {expected}");
        assert_eq!(b.alice_secret.len() as i64, b.ell_sec);
    }
}

#[test]
fn identical_scenarios_give_identical_reports() {
    let a = run_bundled("honest_10db.json").report.to_json();
    let b = run_bundled("honest_10db.json").report.to_json();
    assert_eq!(a, b);
}

#[test]
fn trojan_scenario_total_loss() {
    let r = run_bundled("trojan_tableII.json").report;
    let loss = r.budget.unwrap().total_loss_db;
    assert!((loss - 172.15).abs() < 0.01, "{loss}");
}

fn budget_only(catalog: &str, report: Option<&str>) -> Scenario {
    let outputs = report.map(|r| format!(r#", "outputs": {{ "report": "{r}" }}"#)).unwrap_or_default();
    Scenario::from_json(&format!(
        r#"{{ "name": "t", "seed": 1,
             "budget": {{ "catalog": "{catalog}", "path": "trojan", "input_power_w": 100.0,
                          "pulse_rate_hz": 312.5e6, "wavelength_nm": 1548.51 }}{outputs} }}"#
    ))
    .unwrap()
}

#[test]
fn missing_catalog_is_a_config_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let scn = budget_only("no_such_catalog.json", Some("report.json"));
    let err = run_scenario(&scn, dir.path()).unwrap_err();
    assert!(matches!(err, ScenarioError::ConfigInvalid(_)));
    assert_eq!(err.exit_code(), 2);
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn catalog_found_through_search_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cat = builtin::table_ii();
    cat.paths = builtin::alice_paths();
    std::fs::write(dir.path().join("lab.json"), cat.to_json()).unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    std::env::set_var(CATALOG_PATH_ENV, dir.path());
    let art = run_scenario(&budget_only("lab.json", Some("report.json")), elsewhere.path()).unwrap();
    std::env::remove_var(CATALOG_PATH_ENV);
    write_outputs(&art, elsewhere.path()).unwrap();
    let text = std::fs::read_to_string(elsewhere.path().join("report.json")).unwrap();
    let back: Report = serde_json::from_str(&text).unwrap();
    assert!((back.budget.unwrap().total_loss_db - 172.15).abs() < 0.01);
}

fn parse_series(text: &str) -> Vec<(f64, f64)> {
    text.lines()
        .map(|l| {
            let mut it = l.split_whitespace().map(|v| v.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect()
}

#[test]
fn sweep_series() {
    let report = run_bundled("key_rate_sweep.json").report;
    let blinding = parse_series(&emit_series(&report, "click_probability_vs_trigger_energy").unwrap());
    assert_eq!(blinding.first().unwrap().1, 0.0);
    assert_eq!(blinding.last().unwrap().1, 1.0);
    assert!(blinding.windows(2).all(|w| w[1].1 >= w[0].1));

    let lsec = parse_series(&emit_series(&report, "lsec_vs_loss").unwrap());
    assert!(lsec[0].1 > 0.0);
    let (last, head) = lsec.split_last().unwrap();
    assert_eq!(last.1, 0.0);
    assert!(head.iter().all(|p| p.1 > 0.0));
    assert!(last.0 < 60.0);
}

#[test]
fn report_without_series_rejects_metric() {
    let report = run_scenario(&budget_only("table_ii", None), Path::new(".")).unwrap().report;
    assert!(matches!(emit_series(&report, "lsec_vs_loss"), Err(SeriesError::UnknownMetric(_))));
}

fn blinded_pair(e_always_j: f64) -> [DetectorModel; 2] {
    let d = DetectorModel { e_always_j, ..DetectorModel::ideal(0.1, 1e-5) };
    [d.clone(), d]
}

#[test]
fn faked_state_with_slow_ramp_follows_closed_form() {
    let detectors = blinded_pair(30e-15);
    let src = SourceConfig { train_length: 200_000, ..SourceConfig::default() };
    let cfg = AttackConfig::faked_state(10e-6);
    let (_, m) = faked_state_attack(&src, &ChannelConfig::new(10.0, 0.0), &detectors, &SessionOptions::new(3, 8), &cfg)
        .unwrap();
    let e = 2.0 * detectors[0].e_never_j;
    let same = detect_bright(e, &detectors[0], true).unwrap();
    let split = detect_bright(e / 2.0, &detectors[0], true).unwrap();
    let expected = 0.5 * same + 0.5 * (1.0 - (1.0 - split).powi(2));
    let got = m.detection_per_resend.unwrap();
    let sigma = (expected * (1.0 - expected) / m.resends as f64).sqrt();
    assert!(expected < 0.5);
    assert!((got - expected).abs() < 4.0 * sigma, "{got} vs {expected}");
    assert_eq!(m.dark_rate_under_attack, 0.0);
}

#[test]
fn flat_simultaneous_deadtime_leaves_nothing_to_exploit() {
    let d = DetectorModel { crosslink_delay_gates: 0, recovery_profile: Vec::new(), ..DetectorModel::default() };
    let detectors = [d.clone(), d];
    assert_eq!(covering_filter_window(&detectors), 0);
    let src = SourceConfig { train_length: 200_000, ..SourceConfig::default() };
    let (_, m) = deadtime_attack(
        &src,
        &ChannelConfig::new(10.0, 0.0),
        &detectors,
        &SessionOptions::new(2, 3),
        &AttackConfig::deadtime_exploit(),
    )
    .unwrap();
    assert_eq!(m.one_detector_clicks, 0);
}

#[test]
fn no_attack_reproduces_honest_session() {
    let src = SourceConfig { train_length: 100_000, ..SourceConfig::default() };
    let ch = ChannelConfig::new(5.0, 0.01);
    let det = [DetectorModel::default(), DetectorModel::default()];
    let opts = SessionOptions::new(2, 77);
    let (log, m) = run_attack(&src, &ch, &det, &opts, &AttackConfig::default()).unwrap();
    assert_eq!(log, run_session(&src, &ch, &det, &opts).unwrap());
    assert_eq!(m.kind, AttackKind::None);
    let again = run_attack(&src, &ch, &det, &opts, &AttackConfig::deadtime_exploit()).unwrap();
    let twice = run_attack(&src, &ch, &det, &opts, &AttackConfig::deadtime_exploit()).unwrap();
    assert_eq!(again, twice);
}
