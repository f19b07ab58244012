use std::collections::BTreeSet;

use proptest::prelude::*;
use qkd_workbench::lossbudget::{
    builtin, db_to_linear, delivered_power, linear_to_db, path_loss, photons_per_pulse, trojan_leakage, Catalog,
    ComponentSpec, Direction, Leg, OpticalPath, SpectralTable,
};
use qkd_workbench::risk::{grade, reference_issues, Grade, IssueRecord, Layer, Ledger, RiskFactors};

const PLANCK: f64 = 6.626_070_15e-34;
const LIGHT_SPEED: f64 = 299_792_458.0;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn scenario_for(name: &str) -> qkd_workbench::lossbudget::InjectionScenario {
    builtin::scenario(&builtin::alice_paths()[name])
}

#[test]
fn db_fixed_points() {
    assert_eq!(db_to_linear(0.0), 1.0);
    assert!(rel(db_to_linear(10.0), 0.1) < 1e-15);
}

#[test]
fn db_172_matches_split_exponent() {
    // 10^-17.215 = 10^-17 · e^(-0.215 ln 10), each factor exact to a few ulp.
    let oracle = 1e-17 * (-0.215 * std::f64::consts::LN_10).exp();
    let got = db_to_linear(172.15);
    assert!(rel(got, oracle) < 1e-12);
    assert!(rel(got, 6.10e-18) < 0.01);
}

#[test]
fn trojan_chain_totals() {
    let paths = builtin::alice_paths();
    let trojan = &paths["trojan"];
    let table = builtin::table_ii();
    let loss = path_loss(&table, trojan, builtin::OPERATING_WAVELENGTH_NM).unwrap();
    // Inbound chain counted twice, isolators once in each direction.
    let inbound = 1.0 + 20.0 + 0.5 + 1.0 + 20.0 + 2.5 + 2.7;
    let isolators = 48.0 + 28.0 + 0.35 + 0.4;
    assert!((loss - (2.0 * inbound + isolators)).abs() < 1e-9);
    assert!((loss - 172.15).abs() < 0.01);

    let alt = path_loss(&builtin::appendix_f(), trojan, builtin::OPERATING_WAVELENGTH_NM).unwrap();
    assert!((alt - 243.0).abs() < 1.0, "{alt}");
}

#[test]
fn empty_path_costs_nothing() {
    let empty = OpticalPath::single_pass(Vec::new());
    assert_eq!(path_loss(&Catalog::default(), &empty, 1550.0).unwrap(), 0.0);
}

#[test]
fn photon_numbers() {
    let p = photons_per_pulse(100.0, 312.5e6, 1550.0);
    assert!(rel(p, 2.5e12) < 0.05, "{p}");
    assert_eq!(photons_per_pulse(0.0, 1e9, 1550.0), 0.0);
    let oracle = 1.0 / 1e9 / (PLANCK * LIGHT_SPEED / 1550e-9);
    let q = photons_per_pulse(1.0, 1e9, 1550.0);
    assert!(rel(q, oracle) < 0.01);
    assert!(rel(q, 7.80e9) < 0.01);
}

#[test]
fn trojan_leakage_matches_published_magnitudes() {
    let scn = scenario_for("trojan");
    let r = trojan_leakage(&builtin::table_ii(), &scn).unwrap();
    assert!(rel(r.mean_photons_out, 1.5e-5) < 0.1, "{}", r.mean_photons_out);
    let alt = trojan_leakage(&builtin::appendix_f(), &scn).unwrap();
    assert!(rel(alt.mean_photons_out, 1.25e-12) < 0.1, "{}", alt.mean_photons_out);
}

#[test]
fn lossless_path_returns_input_photons() {
    let mut scn = scenario_for("trojan");
    let mirror = ComponentSpec::symmetric("mirror", SpectralTable::flat(scn.wavelength_nm, 0.0));
    scn.path = OpticalPath::double_pass(vec![Leg::new("mirror", Direction::Forward, 2)]);
    let r = trojan_leakage(&Catalog::default().with_component(mirror), &scn).unwrap();
    assert_eq!(r.total_loss_db, 0.0);
    let i_in = photons_per_pulse(scn.input_power_w, scn.pulse_rate_hz, scn.wavelength_nm);
    assert!(rel(r.mean_photons_out, i_in) < 1e-12);
}

#[test]
fn injected_powers() {
    let t = builtin::table_ii();
    let seeding = delivered_power(&t, &scenario_for("seeding")).unwrap();
    assert!(rel(seeding, 42.7e-12) < 0.01, "{seeding}");
    let pm1 = delivered_power(&t, &scenario_for("photorefraction_pm1")).unwrap();
    let im = delivered_power(&t, &scenario_for("photorefraction_im")).unwrap();
    assert!(rel(pm1, 141e-12) < 0.02, "{pm1}");
    assert!(rel(im, 79e-12) < 0.02, "{im}");
}

proptest! {
    #[test]
    fn db_round_trip(db in 0.0f64..300.0) {
        prop_assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-9);
    }

    #[test]
    fn db_is_additive(a in 0.0f64..150.0, b in 0.0f64..150.0) {
        let lhs = db_to_linear(a + b);
        let rhs = db_to_linear(a) * db_to_linear(b);
        prop_assert!(rel(lhs, rhs) < 1e-12);
    }

    #[test]
    fn grade_follows_factor_sum(l in 0u8..2, c in 0u8..2, k in 0u8..2) {
        let expected = match l + c + k { 0 | 1 => Grade::L, 2 => Grade::M, _ => Grade::H };
        prop_assert_eq!(grade(&RiskFactors::new(l, c, k)), expected);
    }
}

#[test]
fn grade_examples() {
    assert_eq!(grade(&RiskFactors::new(1, 1, 1)), Grade::H);
    assert_eq!(grade(&RiskFactors::new(0, 0, 0)), Grade::L);
    assert_eq!(grade(&RiskFactors::new(1, 1, 0)), Grade::M);
    assert_eq!(grade(&RiskFactors::solved()), Grade::Solved);
}

fn layers(ls: &[Layer]) -> BTreeSet<Layer> {
    ls.iter().copied().collect()
}

#[test]
fn ledger_persists_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("issues.jsonl");
    {
        let mut ledger = Ledger::open(&path).unwrap();
        ledger
            .add(IssueRecord::new("a", "Alpha", layers(&[Layer::Q1]), "Alice", RiskFactors::new(1, 0, 0), "fix"))
            .unwrap();
        ledger
            .add(IssueRecord::new("b", "Beta", layers(&[Layer::Q2, Layer::Q3]), "Bob", RiskFactors::new(1, 1, 1), "fix"))
            .unwrap();
    }
    let reopened = Ledger::open(&path).unwrap();
    assert_eq!(reopened.records().len(), 2);
    assert_eq!(reopened.records()[1].grade, Grade::H);
    assert_eq!(reopened.list(&layers(&[Layer::Q3])).len(), 1);
}

#[test]
fn empty_ledger_exports_nothing() {
    let ledger = Ledger::in_memory();
    assert!(ledger.export_json().is_empty());
    assert!(ledger.export_table().is_empty());
}

#[test]
fn layer_filter_selects_subset() {
    let mut ledger = Ledger::in_memory();
    for rec in reference_issues() {
        ledger.add(rec).unwrap();
    }
    assert_eq!(ledger.records().len(), 15);
    let q1 = layers(&[Layer::Q1]);
    let hits = ledger.list(&q1);
    assert!(!hits.is_empty() && hits.len() < 15);
    assert!(hits.iter().all(|r| r.layers.contains(&Layer::Q1)));
    let misses = ledger.records().iter().filter(|r| !r.layers.contains(&Layer::Q1)).count();
    assert_eq!(hits.len() + misses, 15);
}
