//! Golden-number and Monte-Carlo acceptance checks, shared by the
//! `acceptance` test target and `qkdbench --check`.
//!
//! Every check runs at its pinned tolerance and reports each sub-check with
//! the measured value, so a failure says exactly what missed.

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attacks::{covering_filter_window, deadtime_attack, faked_state_attack, score, AttackConfig};
use crate::linksim::{
    run_session, software_deadtime_filter, ChannelConfig, DetectorModel, SessionLog, SessionOptions, SourceConfig,
};
use crate::lossbudget::{builtin, evaluate, photons_per_pulse, Catalog, LeakageResult};
use crate::postproc::{
    collision_probability, decoy_bounds, epsilon_budget, estimate, is_sifted, polyhash, privacy_amplify, quantile,
    run_block, BlockAssembler, DecoyStats, EstimateInputs, Intensities, ProtocolConfig,
};
use crate::risk::{reference_issues, Grade};
use crate::scenario::expected_secret_length;

#[derive(Debug, Clone)]
pub struct SubCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub subchecks: Vec<SubCheck>,
}

impl CriterionOutcome {
    fn new(id: u8, title: &'static str) -> Self {
        Self { id, title, subchecks: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        !self.subchecks.is_empty() && self.subchecks.iter().all(|s| s.passed)
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.subchecks.push(SubCheck { name: name.into(), passed, detail: detail.into() });
    }

    /// `value` within `rel` relative tolerance of `target`.
    fn near(&mut self, name: &str, value: f64, target: f64, rel: f64) {
        let ok = ((value - target) / target).abs() <= rel;
        self.check(name, ok, format!("{value:.4e} vs {target:.4e} ±{:.0}%", rel * 100.0));
    }

    pub fn summary_line(&self) -> String {
        let failed: Vec<&str> = self.subchecks.iter().filter(|s| !s.passed).map(|s| s.name.as_str()).collect();
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        if failed.is_empty() {
            format!("{verdict} criterion {:>2}: {}", self.id, self.title)
        } else {
            format!("{verdict} criterion {:>2}: {} (failed: {})", self.id, self.title, failed.join(", "))
        }
    }
}

pub type Criterion = fn() -> CriterionOutcome;

pub fn criteria() -> Vec<Criterion> {
    vec![
        loss_budget_golden,
        alternate_wavelength_budget,
        risk_grades,
        epsilon_accounting,
        static_mismatch,
        faked_state,
        deadtime_exploit,
        finite_key_coverage,
        end_to_end,
        key_rate_monotonicity,
    ]
}

fn budget(catalog: &Catalog, path: &str) -> LeakageResult {
    let p = catalog.path(path).expect("bundled path");
    evaluate(catalog, &builtin::scenario(p)).expect("bundled scenario evaluates")
}

pub fn loss_budget_golden() -> CriterionOutcome {
    let mut c = CriterionOutcome::new(1, "loss-budget golden numbers");
    let cat = builtin::table_ii();
    let t = budget(&cat, "trojan");
    c.near("trojan loss dB", t.total_loss_db, 172.15, 0.10);
    c.near("trojan photons out", t.mean_photons_out, 1.5e-5, 0.10);
    let i_in = photons_per_pulse(100.0, builtin::SYSTEM_PULSE_RATE_HZ, builtin::OPERATING_WAVELENGTH_NM);
    c.near("photons in per pulse", i_in, 2.5e12, 0.05);
    for (path, loss, power) in [
        ("seeding", 123.7, 40e-12),
        ("power_meter", 98.5, 14e-9),
        ("photorefraction_pm1", 118.5, 141e-12),
        ("photorefraction_im", 121.0, 79e-12),
    ] {
        let r = budget(&cat, path);
        c.near(&format!("{path} loss dB"), r.total_loss_db, loss, 0.10);
        c.near(&format!("{path} power W"), r.delivered_power_w, power, 0.10);
    }
    c
}

pub fn alternate_wavelength_budget() -> CriterionOutcome {
    let mut c = CriterionOutcome::new(2, "alternate-wavelength loss budget");
    let cat = builtin::appendix_f();
    let t = budget(&cat, "trojan");
    c.near("trojan loss dB", t.total_loss_db, 243.0, 0.10);
    c.near("trojan photons out", t.mean_photons_out, 1.25e-12, 0.10);
    for (path, power) in [
        ("seeding", 0.63e-12),
        ("power_meter", 0.2e-9),
        ("photorefraction_pm1", 1.8e-12),
        ("photorefraction_im", 1.0e-12),
    ] {
        let r = budget(&cat, path);
        c.near(&format!("{path} power W"), r.delivered_power_w, power, 0.10);
    }
    c
}

/// Published grade of each reference issue, kept apart from the factor
/// triples so the grading rule is checked against it.
const TABULATED_GRADES: [(&str, Grade); 15] = [
    ("protocol", Grade::Solved),
    ("superlinear-control", Grade::H),
    ("efficiency-mismatch", Grade::H),
    ("deadtime", Grade::H),
    ("trojan-horse", Grade::L),
    ("laser-seeding", Grade::Solved),
    ("power-meter-injection", Grade::L),
    ("photorefraction", Grade::M),
    ("laser-damage", Grade::M),
    ("backflash", Grade::M),
    ("intersymbol-interference", Grade::L),
    ("state-preparation", Grade::L),
    ("channel-calibration", Grade::H),
    ("qrng", Grade::L),
    ("supply-chain", Grade::M),
];

pub fn risk_grades() -> CriterionOutcome {
    let mut c = CriterionOutcome::new(3, "risk grades from factor triples");
    let issues = reference_issues();
    c.check("issue count", issues.len() == TABULATED_GRADES.len(), format!("{} issues", issues.len()));
    for (id, want) in TABULATED_GRADES {
        match issues.iter().find(|r| r.id == id) {
            Some(rec) => {
                let got = rec.computed_grade();
                c.check(id, got == want, format!("computed {got:?}, tabulated {want:?}"));
            }
            None => c.check(id, false, "missing"),
        }
    }
    c
}

pub fn epsilon_accounting() -> CriterionOutcome {
    let mut c = CriterionOutcome::new(4, "epsilon accounting");
    let eps_col = collision_probability(1_360_000);
    c.check("collision bound", (2.4e-11..=2.5e-11).contains(&eps_col), format!("{eps_col:.4e}"));
    let b = epsilon_budget(1e-12, eps_col, 1e-12, 1);
    c.check("total", b.eps < 3e-11, format!("{:.4e}", b.eps));
    c
}

pub fn static_mismatch() -> CriterionOutcome {
    let mut c = CriterionOutcome::new(5, "static efficiency mismatch and four-state Bob");
    let source = SourceConfig::default();
    let channel = ChannelConfig::new(0.0, 0.0);
    let det = [DetectorModel::ideal(0.09, 1e-6), DetectorModel::ideal(0.11, 1e-6)];
    let plain = run_session(&source, &channel, &det, &SessionOptions::new(3, 505)).expect("valid config");
    let n = plain.detector_counts();
    let total = (n[0] + n[1]) as f64;
    c.check("clicks", total >= 1e5, format!("{total}"));
    let share = n[0] as f64 / total;
    c.check("detector share 45%", (share - 0.45).abs() <= 0.01, format!("{share:.4}"));

    let four = run_session(&source, &channel, &det, &SessionOptions::new(3, 506).four_state(true)).expect("valid");
    let b = four.bit_counts();
    let share = b[0] as f64 / (b[0] + b[1]) as f64;
    c.check("four-state bit share 50%", (share - 0.5).abs() <= 0.01, format!("{share:.4}"));
    c
}

pub fn faked_state() -> CriterionOutcome {
    let mut c = CriterionOutcome::new(6, "faked-state attack on blinded detectors");
    let source = SourceConfig::default();
    let channel = ChannelConfig::new(10.0, 0.01);
    let det = [DetectorModel::ideal(0.1, 1e-6), DetectorModel::ideal(0.1, 1e-6)];
    let options = SessionOptions::new(20, 606);

    let cfg = AttackConfig::faked_state(5e-6);
    let (_, m) = faked_state_attack(&source, &channel, &det, &options, &cfg).expect("blinded");
    c.check("induced QBER <= 0.5%", m.induced_qber <= 0.005, format!("{:.5}", m.induced_qber));
    let p = m.detection_per_resend.unwrap_or(0.0);
    c.check("detection per resend 0.5±0.01", (p - 0.5).abs() <= 0.01, format!("{p:.4} over {} resends", m.resends));
    c.check("no dark clicks", m.dark_rate_under_attack == 0.0, format!("{:e}", m.dark_rate_under_attack));

    let cfg = AttackConfig { compensate_rate: true, ..cfg };
    let (_, m) = faked_state_attack(&source, &channel, &det, &options, &cfg).expect("blinded");
    c.check(
        "compensated sifted rate within 5%",
        (m.sifted_rate_ratio - 1.0).abs() <= 0.05,
        format!("{:.4} at resend fraction {:.4}", m.sifted_rate_ratio, m.resend_fraction.unwrap_or(1.0)),
    );
    c.check("compensated run has no dark clicks", m.dark_rate_under_attack == 0.0, format!("{:e}", m.dark_rate_under_attack));
    c
}

/// Smallest gap between consecutive clicks, on the global gate index.
fn min_gap(log: &SessionLog) -> Option<u64> {
    let gates: Vec<u64> = log.clicks.iter().map(|k| k.gate(log.train_length)).collect();
    gates.windows(2).map(|w| w[1] - w[0]).min()
}

pub fn deadtime_exploit() -> CriterionOutcome {
    let mut c = CriterionOutcome::new(7, "deadtime exploit and software filter");
    let source = SourceConfig::default();
    let channel = ChannelConfig::new(10.0, 0.01);
    let det = [DetectorModel::default(), DetectorModel::default()];
    let options = SessionOptions::new(150, 707);

    let (log, m) = deadtime_attack(&source, &channel, &det, &options, &AttackConfig::deadtime_exploit())
        .expect("valid config");
    let sig = (m.eve_bit_agreement - 0.5) / m.agreement_sigma;
    c.check(
        "unfiltered agreement >= 0.5 + 10σ",
        sig >= 10.0,
        format!("{:.4} ({sig:.1}σ over {} bits)", m.eve_bit_agreement, m.accepted_sifted),
    );

    let n = covering_filter_window(&det);
    let filtered = software_deadtime_filter(&log, n);
    let f = score(m.kind, &filtered, &filtered, options.seed, Some(n));
    let sig = (f.eve_bit_agreement - 0.5) / f.agreement_sigma;
    c.check(
        "filtered agreement 0.5 ± 3σ",
        sig.abs() <= 3.0,
        format!("{:.4} ({sig:+.1}σ over {} bits, N = {n})", f.eve_bit_agreement, f.accepted_sifted),
    );
    let gap = min_gap(&filtered);
    c.check("retained clicks at least N apart", gap.is_none_or(|g| g >= n), format!("min gap {gap:?}"));

    let flat = DetectorModel { crosslink_delay_gates: 0, recovery_profile: vec![], ..DetectorModel::default() };
    let flat = [flat.clone(), flat];
    let (_, m) = deadtime_attack(&source, &channel, &flat, &SessionOptions::new(5, 708), &AttackConfig::deadtime_exploit())
        .expect("valid config");
    c.check("no window without cross-link delay", m.one_detector_clicks == 0, format!("{}", m.one_detector_clicks));
    c
}

/// Coverage of the single-photon bounds on `blocks` short simulated blocks.
pub fn coverage_rate(blocks: u32, pulses_per_block: u32, eps_decoy: f64, seed: u64) -> (u32, u32) {
    let source = SourceConfig { train_length: pulses_per_block, ..SourceConfig::default() };
    let channel = ChannelConfig::new(0.0, 0.02);
    let det = [DetectorModel::ideal(0.5, 1e-4), DetectorModel::ideal(0.5, 1e-4)];
    let it = Intensities { mu: source.mu, nu1: source.nu1, nu2: source.nu2 };
    let z = quantile(eps_decoy).expect("valid ε");
    let chunk = 500u32;
    let mut violations = 0u32;
    let mut done = 0u32;
    while done < blocks {
        let n = chunk.min(blocks - done);
        let log = run_session(&source, &channel, &det, &SessionOptions::new(n, seed + u64::from(done)))
            .expect("valid config");
        let mut per_train: Vec<(DecoyStats, u64, u64, u64, u64)> =
            log.train_counts.iter().map(|&sent| (DecoyStats { sent, detected: [0; 3] }, 0, 0, 0, 0)).collect();
        for k in &log.clicks {
            let e = &mut per_train[k.train as usize];
            e.0.detected[k.intensity.index()] += 1;
            if is_sifted(k) {
                let err = u64::from(k.alice_bit != k.bob_bit);
                e.1 += 1;
                e.2 += err;
                if k.truth.is_some_and(|t| t.photons_sent == 1) {
                    e.3 += 1;
                    e.4 += err;
                }
            }
        }
        for (stats, l, errs, m1, e1) in per_train {
            let Ok(b) = decoy_bounds(&stats, &it, z) else { continue };
            let Ok(est) = estimate(&EstimateInputs {
                q1_lower: b.q1_lower,
                q_mu_upper: b.q_upper[0],
                y0_lower: b.y0_lower,
                l_ver: l,
                e_mu: if l == 0 { 0.0 } else { errs as f64 / l as f64 },
                n_mu: stats.sent[0],
                mu: it.mu,
                leak: 0.0,
                z,
                eps_pa: 1e-12,
            }) else {
                continue;
            };
            let m1_bad = (m1 as f64) < est.m1_lower;
            let e1_true = if m1 == 0 { 0.0 } else { e1 as f64 / m1 as f64 };
            let e1_bad = est.e1_upper.is_finite() && e1_true > est.e1_upper;
            violations += u32::from(m1_bad || e1_bad);
        }
        done += n;
    }
    (violations, blocks)
}

pub fn finite_key_coverage() -> CriterionOutcome {
    let mut c = CriterionOutcome::new(8, "finite-key bound coverage");
    let eps = 0.07;
    let (bad, n) = coverage_rate(10_000, 20_000, eps, 808);
    let frac = f64::from(bad) / f64::from(n);
    let limit = eps + 3.0 * (eps * (1.0 - eps) / f64::from(n)).sqrt();
    c.check("violation fraction", frac <= limit, format!("{bad}/{n} = {frac:.4} (limit {limit:.4})"));
    c
}

/// Dense Toeplitz product, row `i` column `j` = `seed[i + j]`.
pub fn dense_toeplitz(key: &[u8], seed: &[u8]) -> Vec<u8> {
    let rows = seed.len() + 1 - key.len();
    let matrix: Vec<Vec<u8>> = (0..rows).map(|i| (0..key.len()).map(|j| seed[i + j]).collect()).collect();
    matrix.iter().map(|row| row.iter().zip(key).map(|(a, b)| a & b).fold(0, |x, y| x ^ y)).collect()
}

/// Polynomial hash by big-integer arithmetic on the padded message.
pub fn polyhash_bigint(k: u64, bits: &[u8]) -> u64 {
    let q = BigUint::from((1u64 << 50) - 27);
    let mut text: String = bits.iter().map(|&b| if b & 1 == 1 { '1' } else { '0' }).collect();
    text.push('1');
    while text.len() % 49 != 0 {
        text.push('0');
    }
    let mut coeffs: Vec<BigUint> =
        text.as_bytes().chunks(49).map(|ch| BigUint::parse_bytes(ch, 2).expect("binary digits")).collect();
    coeffs.push(BigUint::from(bits.len()));
    let kk = BigUint::from(k);
    let top = coeffs.len() - 1;
    let sum = coeffs
        .iter()
        .enumerate()
        .fold(BigUint::from(0u32), |acc, (i, cf)| acc + cf * kk.modpow(&BigUint::from(top - i), &q));
    let r = sum % &q;
    r.to_u64_digits().first().copied().unwrap_or(0)
}

pub fn end_to_end() -> CriterionOutcome {
    let mut c = CriterionOutcome::new(9, "end-to-end key agreement and hashing oracles");
    let source = SourceConfig { train_length: 400_000, ..SourceConfig::default() };
    let channel = ChannelConfig::new(0.0, 0.0);
    let det = [DetectorModel::ideal(1.0, 0.0), DetectorModel::ideal(1.0, 0.0)];
    let cfg = ProtocolConfig { subblocks_per_block: 2, apriori_qber: 0.01, ..ProtocolConfig::default() };
    let mut identical = 0;
    let mut with_key = 0;
    for s in 0..100u64 {
        let log = run_session(&source, &channel, &det, &SessionOptions::new(1, 9000 + s)).expect("valid config");
        let mut asm = BlockAssembler::new(cfg.block_len());
        let Some(block) = asm.push(&log).into_iter().next() else { continue };
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let Ok(r) = run_block(&block, &source, &cfg, &mut rng) else { continue };
        with_key += u32::from(!r.alice_secret.is_empty());
        identical += u32::from(!r.alice_secret.is_empty() && r.alice_secret == r.bob_secret);
    }
    c.check("non-empty keys", with_key == 100, format!("{with_key}/100"));
    c.check("identical keys", identical == 100, format!("{identical}/100"));

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut toeplitz_ok = 0;
    for i in 0..1000 {
        let (l_ver, l_sec) = if i < 5 { (2500, 2000) } else { (rng.gen_range(1..200), rng.gen_range(1..120)) };
        let key: Vec<u8> = (0..l_ver).map(|_| rng.gen_range(0..2)).collect();
        let seed: Vec<u8> = (0..l_ver + l_sec - 1).map(|_| rng.gen_range(0..2)).collect();
        toeplitz_ok += u32::from(privacy_amplify(&key, &seed).ok() == Some(dense_toeplitz(&key, &seed)));
    }
    c.check("Toeplitz vs dense matrix", toeplitz_ok == 1000, format!("{toeplitz_ok}/1000"));

    let mut hash_ok = 0;
    for _ in 0..1000 {
        let len = rng.gen_range(0..2000);
        let bits: Vec<u8> = (0..len).map(|_| rng.gen_range(0..2)).collect();
        let k = rng.gen_range(0..(1u64 << 50) - 27);
        hash_ok += u32::from(polyhash(k, &bits) == polyhash_bigint(k, &bits));
    }
    c.check("PolyHash vs big integers", hash_ok == 1000, format!("{hash_ok}/1000"));
    c
}

pub fn key_rate_monotonicity() -> CriterionOutcome {
    let mut c = CriterionOutcome::new(10, "secret length vs channel loss");
    let source = SourceConfig::default();
    let det = [DetectorModel::ideal(0.1, 1e-6), DetectorModel::ideal(0.1, 1e-6)];
    let cfg = ProtocolConfig::default();
    let mut series = Vec::new();
    let mut loss = 0.0;
    while loss <= 100.0 {
        let l = expected_secret_length(&source, &ChannelConfig::new(loss, 0.01), &det, 1_000_000_000, &cfg)
            .expect("valid config");
        series.push((loss, l));
        if l <= 0 {
            break;
        }
        loss += 0.5;
    }
    let monotone = series.windows(2).all(|w| w[1].1 <= w[0].1);
    c.check("non-increasing", monotone, format!("{} points", series.len()));
    let last = series.last().copied();
    c.check(
        "reaches abort at finite loss",
        last.is_some_and(|(_, l)| l <= 0) && series.first().is_some_and(|&(_, l)| l > 0),
        format!("ends at {last:?}"),
    );
    c
}
