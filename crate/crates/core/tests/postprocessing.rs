use num_bigint::BigUint;
use proptest::prelude::*;
use qkd_workbench::linksim::{
    run_session, Basis, ChannelConfig, ClickFlag, ClickRecord, DetectorModel, Intensity, SessionLog, SessionOptions,
    SourceConfig,
};
use qkd_workbench::postproc::budget::epsilon_budget;
use qkd_workbench::postproc::estimate::{
    binary_entropy, decoy_bounds, estimate, quantile, secret_length, EstimateInputs, Intensities,
};
use qkd_workbench::postproc::polyhash::{collision_probability, polyhash, Q};
use qkd_workbench::postproc::reconcile::{reconcile, ReconcileConfig};
use qkd_workbench::postproc::sift::sift;
use qkd_workbench::postproc::toeplitz::{privacy_amplify, privacy_amplify_to, seed_length};
use qkd_workbench::postproc::verify::verify;
use qkd_workbench::postproc::{DecoyStats, PostprocError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

const SUBBLOCK: usize = 27_200;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_bits(n: usize, r: &mut impl Rng) -> Vec<u8> {
    (0..n).map(|_| u8::from(r.gen::<bool>())).collect()
}

fn flip_with(bits: &[u8], p: f64, r: &mut impl Rng) -> Vec<u8> {
    bits.iter().map(|&b| b ^ u8::from(r.gen::<f64>() < p)).collect()
}

/// Upper normal tail Φ̄(z) = erfc(z/√2)/2, inverted by bisection.
fn upper_tail_inverse(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 0.5 * erfc(mid / std::f64::consts::SQRT_2) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn quantile_examples() {
    assert!(quantile(3.5).unwrap().abs() < 1e-12);
    assert!((quantile(0.07).unwrap() - 2.3263).abs() < 1e-3);
    let z = quantile(1e-12).unwrap();
    assert!((z - upper_tail_inverse(1e-12 / 7.0)).abs() < 1e-6);
    assert!((z - 7.30).abs() < 0.01, "{z}");
    assert!(matches!(quantile(7.5), Err(PostprocError::QuantileDomain(_))));
}

#[test]
fn entropy_examples() {
    assert_eq!(binary_entropy(0.0), 0.0);
    assert_eq!(binary_entropy(0.5), 1.0);
    // −x log2 x − (1−x) log2(1−x) at 0.11, via natural logs.
    let oracle = -(0.11f64 * 0.11f64.ln() + 0.89 * 0.89f64.ln()) / std::f64::consts::LN_2;
    assert!((binary_entropy(0.11) - oracle).abs() < 1e-12);
    assert!((binary_entropy(0.11) - 0.49992).abs() < 1e-5);
}

fn dense(key: &[u8], seed: &[u8], l_sec: usize) -> Vec<u8> {
    let mut out = vec![0u8; l_sec];
    for (i, o) in out.iter_mut().enumerate() {
        for (j, k) in key.iter().enumerate() {
            *o ^= seed[i + j] & k;
        }
    }
    out
}

#[test]
fn toeplitz_small_matches_dense() {
    let mut r = rng(1);
    for _ in 0..50 {
        let key = random_bits(64, &mut r);
        let seed = random_bits(seed_length(64, 16), &mut r);
        assert_eq!(privacy_amplify_to(&key, &seed, 16).unwrap(), dense(&key, &seed, 16));
    }
}

#[test]
fn toeplitz_large_matches_dense() {
    let mut r = rng(2);
    let (l_ver, l_sec) = (2500, 2000);
    let key = random_bits(l_ver, &mut r);
    let seed = random_bits(seed_length(l_ver, l_sec), &mut r);
    assert_eq!(privacy_amplify(&key, &seed).unwrap(), dense(&key, &seed, l_sec));
}

#[test]
fn toeplitz_zero_key_and_bad_seed() {
    let mut r = rng(3);
    let seed = random_bits(seed_length(300, 40), &mut r);
    assert!(privacy_amplify(&[0; 300], &seed).unwrap().iter().all(|&b| b == 0));
    assert!(privacy_amplify_to(&[1; 300], &seed, 41).is_err());
}

proptest! {
    #[test]
    fn toeplitz_is_linear(seed_v in any::<u64>(), l_ver in 1usize..400, l_sec in 1usize..200) {
        let mut r = rng(seed_v);
        let a = random_bits(l_ver, &mut r);
        let b = random_bits(l_ver, &mut r);
        let s = random_bits(seed_length(l_ver, l_sec), &mut r);
        let ab: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
        let lhs = privacy_amplify(&ab, &s).unwrap();
        let rhs: Vec<u8> = privacy_amplify(&a, &s).unwrap().iter()
            .zip(privacy_amplify(&b, &s).unwrap()).map(|(x, y)| x ^ y).collect();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn polyhash_matches_bigint(k in 0..Q, seed_v in any::<u64>(), len in 0usize..400) {
        let bits = random_bits(len, &mut rng(seed_v));
        prop_assert_eq!(polyhash(k, &bits), polyhash_oracle(k, &bits));
        prop_assert_eq!(polyhash(k, &bits), polyhash(k, &bits.clone()));
    }
}

/// Σ c_i k^(top−i) mod q over 49-bit MSB-first blocks of `bits‖1‖0…`, then the length.
fn polyhash_oracle(k: u64, bits: &[u8]) -> u64 {
    let q = BigUint::from(Q);
    let mut padded: Vec<u8> = bits.to_vec();
    padded.push(1);
    padded.resize(padded.len().div_ceil(49) * 49, 0);
    let mut coeffs: Vec<BigUint> = padded
        .chunks(49)
        .map(|c| c.iter().fold(BigUint::from(0u8), |acc, &b| (acc << 1u32) + BigUint::from(b)))
        .collect();
    coeffs.push(BigUint::from(bits.len()));
    let kk = BigUint::from(k);
    let n = coeffs.len();
    let total = coeffs
        .iter()
        .enumerate()
        .fold(BigUint::from(0u8), |acc, (i, c)| acc + c * kk.modpow(&BigUint::from(n - 1 - i), &q));
    u64::try_from(total % q).unwrap()
}

#[test]
fn single_block_tag() {
    let bits = random_bits(30, &mut rng(4));
    let k = 123_456_789_012;
    assert_eq!(polyhash(k, &bits), polyhash_oracle(k, &bits));
}

#[test]
fn collision_bound_for_published_key_length() {
    let len = 1_360_000u64;
    let oracle = ((len as f64 / 49.0).ceil() - 1.0) / ((1u64 << 50) - 27) as f64;
    let eps = collision_probability(len);
    assert!((eps - oracle).abs() / oracle < 1e-12);
    assert!((eps - 2.47e-11).abs() < 0.01e-11);
}

#[test]
fn oracle_mode_leak() {
    let mut r = rng(5);
    let key = random_bits(SUBBLOCK, &mut r);
    let rec = reconcile(&key, &key, 0.0, &ReconcileConfig::oracle(0.5), &mut r).unwrap();
    let ver = verify(&rec, &mut r);
    assert_eq!(ver.xi, 1);
    assert_eq!(rec.leak(&ver.verified, ver.xi), 13_650.0);
}

#[test]
fn clean_subblock_needs_no_decoding() {
    let mut r = rng(6);
    let key = random_bits(SUBBLOCK, &mut r);
    let rec = reconcile(&key, &key, 0.01, &ReconcileConfig::default(), &mut r).unwrap();
    assert_eq!(rec.n_cor(), 1);
    assert_eq!(rec.subblocks[0].iterations, 0);
    assert_eq!(rec.subblocks[0].errors, 0);
}

#[test]
fn three_percent_errors_mostly_corrected() {
    let mut r = rng(7);
    let trials = 100;
    let alice = random_bits(trials * SUBBLOCK, &mut r);
    let bob = flip_with(&alice, 0.03, &mut r);
    let rec = reconcile(&alice, &bob, 0.03, &ReconcileConfig::default(), &mut r).unwrap();
    assert!(rec.n_cor() >= 95, "{} of {trials}", rec.n_cor());
    assert_eq!(rec.alice, rec.bob);
}

fn oracle_outcome(n: usize, seed: u64) -> qkd_workbench::postproc::reconcile::ReconciliationOutcome {
    let mut r = rng(seed);
    let key = random_bits(n * SUBBLOCK, &mut r);
    reconcile(&key, &key, 0.0, &ReconcileConfig::oracle(0.5), &mut r).unwrap()
}

#[test]
fn verify_success_path() {
    let rec = oracle_outcome(4, 8);
    let ver = verify(&rec, &mut rng(9));
    assert_eq!(ver.n_ver, rec.n_cor());
    assert_eq!(ver.xi, 1);
    assert_eq!(ver.eps_ver, collision_probability(rec.l_cor() as u64));
}

#[test]
fn verify_discards_only_the_corrupted_subblock() {
    let mut r = rng(10);
    for trial in 0..20 {
        let mut rec = oracle_outcome(5, 100 + trial);
        let bad = r.gen_range(0..5);
        let pos = bad * SUBBLOCK + r.gen_range(0..SUBBLOCK);
        rec.bob[pos] ^= 1;
        let ver = verify(&rec, &mut r);
        assert_eq!(ver.verified, (0..5).filter(|&i| i != bad).collect::<Vec<_>>());
        assert_eq!(ver.xi, rec.n_cor() as u64 + 1);
        assert_eq!(ver.alice, ver.bob);
    }
}

#[test]
fn verify_all_corrupted() {
    let mut rec = oracle_outcome(3, 11);
    for i in 0..3 {
        rec.bob[i * SUBBLOCK + 7] ^= 1;
    }
    let ver = verify(&rec, &mut rng(12));
    assert_eq!(ver.l_ver, 0);
    assert!(ver.verified.is_empty());
}

const IT: Intensities = Intensities { mu: 0.5, nu1: 0.1, nu2: 0.01 };

#[test]
fn zero_width_wald_interval() {
    let stats = DecoyStats { sent: [800_000, 100_000, 100_000], detected: [4000, 120, 30] };
    let b = decoy_bounds(&stats, &IT, 0.0).unwrap();
    for a in 0..3 {
        assert_eq!(b.q_upper[a], stats.gain(a));
        assert_eq!(b.q_lower[a], stats.gain(a));
    }
}

#[test]
fn vacuum_yield_clamps_at_zero() {
    // ν1·Q_ν2·e^ν2 < ν2·Q_ν1·e^ν1 when the weakest decoy sees nothing.
    let stats = DecoyStats { sent: [1000, 1000, 1000], detected: [300, 80, 0] };
    assert_eq!(decoy_bounds(&stats, &IT, 1.0).unwrap().y0_lower, 0.0);
}

#[test]
fn single_photon_gain_bound_tracks_truth() {
    let d = DetectorModel::ideal(0.1, 1e-6);
    let log = run_session(
        &SourceConfig::default(),
        &ChannelConfig::new(10.0, 0.01),
        &[d.clone(), d],
        &SessionOptions::new(5, 2024),
    )
    .unwrap();
    let s = sift(&log);
    let single_mu = log
        .clicks
        .iter()
        .filter(|c| c.intensity == Intensity::Mu && c.truth.unwrap().photons_sent == 1)
        .count() as f64;
    let n_mu = s.stats.sent[0] as f64;
    let truth = single_mu / n_mu;
    let sigma = (truth * (1.0 - truth) / n_mu).sqrt();
    let b = decoy_bounds(&s.stats, &IT, 0.0).unwrap();
    // The estimate is a lower bound: close below the truth, never above it by more than noise.
    assert!(b.q1_lower <= truth + 3.0 * sigma, "bound {} truth {truth} σ {sigma}", b.q1_lower);
    assert!(b.q1_lower >= 0.85 * truth, "bound {} truth {truth}", b.q1_lower);
}

fn base_inputs() -> EstimateInputs {
    EstimateInputs {
        q1_lower: 0.003,
        q_mu_upper: 0.006,
        y0_lower: 1e-6,
        l_ver: 1_000_000,
        e_mu: 0.0,
        n_mu: 100_000_000,
        mu: 0.5,
        leak: 0.0,
        z: 0.0,
        eps_pa: 1e-12,
    }
}

#[test]
fn no_errors_costs_only_amplification() {
    let inp = base_inputs();
    let res = secret_length(&inp).unwrap();
    assert_eq!(res.e1_upper, 0.0);
    let m1 = inp.l_ver as f64 * inp.q1_lower / inp.q_mu_upper;
    assert_eq!(res.ell_sec, (m1 - 5.0 * 1e12f64.log2()).floor() as i64);
    assert!((5.0 * 1e12f64.log2() - 199.3).abs() < 0.05);
}

#[test]
fn leak_above_single_photon_count_aborts() {
    let inp = EstimateInputs { leak: 600_000.0, ..base_inputs() };
    assert!(matches!(secret_length(&inp), Err(PostprocError::AbortBlock { .. })));
    assert!(estimate(&inp).unwrap().abort_reason.is_some());
}

#[test]
fn epsilon_accounting() {
    let b = epsilon_budget(1e-12, 2.5e-11, 1e-12, 1);
    assert!((b.eps - 2.7e-11).abs() < 1e-24);
    assert!(b.eps < 3e-11);
    let b2 = epsilon_budget(1e-12, 2.5e-11, 1e-12, 2);
    assert_eq!(b2.eps_round, 2.0 * b.eps);
    let from_verify = epsilon_budget(1e-12, collision_probability(1_360_000), 1e-12, 1);
    assert!((from_verify.eps_ver - 2.47e-11).abs() < 0.01e-11);
}

fn sift_log(bases: impl Iterator<Item = (Basis, Basis)>) -> SessionLog {
    let clicks: Vec<ClickRecord> = bases
        .enumerate()
        .map(|(i, (a, b))| ClickRecord {
            train: 0,
            slot: i as u32,
            detector: 0,
            bob_basis: b,
            bob_bit: 0,
            flag: ClickFlag::Single,
            alice_basis: a,
            alice_bit: 0,
            intensity: Intensity::Mu,
            sent_through: [i as u32 + 1, 0, 0],
            truth: None,
        })
        .collect();
    SessionLog {
        train_length: clicks.len() as u32 + 1,
        n_trains: 1,
        four_state_bob: false,
        train_counts: vec![[clicks.len() as u64, 0, 0]],
        pulses: None,
        clicks,
    }
}

#[test]
fn sifting_by_basis() {
    let same = sift_log((0..500).map(|i| if i % 3 == 0 { (Basis::X, Basis::X) } else { (Basis::Z, Basis::Z) }));
    assert_eq!(sift(&same).len(), 500);
    let opposite = sift_log((0..500).map(|i| if i % 2 == 0 { (Basis::X, Basis::Z) } else { (Basis::Z, Basis::X) }));
    assert_eq!(sift(&opposite).len(), 0);

    let mut r = rng(13);
    let n = 100_000;
    let random = sift_log((0..n).map(|_| (Basis::from_bit(r.gen()), Basis::from_bit(r.gen()))));
    let kept = sift(&random).len() as f64;
    let sigma = (n as f64 * 0.25).sqrt();
    assert!((kept - n as f64 / 2.0).abs() < 3.0 * sigma, "{kept}");
}

proptest! {
    /// A whole-key tag over n subblocks never beats n separate subblock tags.
    #[test]
    fn whole_key_collision_bound_dominates_per_subblock(n in 1u64..60, len in 49u64..100_000) {
        let success = collision_probability(n * len);
        let per = collision_probability(len);
        let fallback = -((n as f64) * (-per).ln_1p()).exp_m1();
        prop_assert!(fallback <= success * (1.0 + 1e-12));
        prop_assert!(success <= (n as f64 * per + (n as f64 - 1.0) / Q as f64) * (1.0 + 1e-12));
    }
}
