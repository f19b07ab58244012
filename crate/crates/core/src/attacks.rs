//! Eve strategies against the simulated link. Each run returns the attacked
//! session log together with metrics measured against an honest baseline
//! drawn from the same seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linksim::{
    run_session, run_session_with, software_deadtime_filter, thin, vulnerable_window_gates, Arrival, Basis,
    ChannelConfig, ClickFlag, Delivery, DetectorModel, GateView, Interceptor, LinkError, SessionLog, SessionOptions,
    SourceConfig,
};
use crate::lossbudget::{db_to_linear, HC_JOULE_METRE};
use crate::postproc::{is_sifted, sift};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("detector is not blinded: {power_w} W is below the {threshold_w} W threshold")]
    NotBlinded { power_w: f64, threshold_w: f64 },
    #[error("invalid attack configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Link(#[from] LinkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    FakedState,
    DeadtimeExploit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Loss between Alice and Eve's interception point.
    pub eve_position_loss_db: f64,
    pub blinding_power_w: f64,
    /// Resent trigger energy; 2·E_never of detector 0 when unset.
    pub trigger_energy_j: Option<f64>,
    /// Faked state: resend only a fraction of detected pulses so that Bob's
    /// sifted rate matches the honest one.
    pub compensate_rate: bool,
    /// Deadtime exploit: gates between forcing pulses. Defaults to the
    /// detectors' full recovery plus the vulnerable window.
    pub period_gates: Option<u32>,
    /// Deadtime exploit: energy of forcing and window pulses.
    pub forcing_energy_j: f64,
    /// Software deadtime filter applied to the attacked log before scoring.
    pub filter_gates: Option<u64>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            eve_position_loss_db: 0.0,
            blinding_power_w: 0.0,
            trigger_energy_j: None,
            compensate_rate: false,
            period_gates: None,
            // About a thousand photons at 1550 nm.
            forcing_energy_j: 1000.0 * HC_JOULE_METRE / 1550e-9,
            filter_gates: None,
        }
    }
}

impl AttackConfig {
    pub fn faked_state(blinding_power_w: f64) -> Self {
        Self { kind: AttackKind::FakedState, blinding_power_w, ..Self::default() }
    }

    pub fn deadtime_exploit() -> Self {
        Self { kind: AttackKind::DeadtimeExploit, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: &str| Err(AttackError::InvalidConfig(m.to_string()));
        if !(self.eve_position_loss_db >= 0.0 && self.eve_position_loss_db.is_finite()) {
            return bad("Eve's position loss must be finite and >= 0 dB");
        }
        if !(self.blinding_power_w >= 0.0) || !(self.forcing_energy_j > 0.0) {
            return bad("blinding power must be >= 0 and forcing energy > 0");
        }
        if self.trigger_energy_j.is_some_and(|e| !(e > 0.0)) {
            return bad("trigger energy must be positive");
        }
        if self.period_gates == Some(0) {
            return bad("forcing period must be at least one gate");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackMetrics {
    pub kind: AttackKind,
    /// Fraction of accepted sifted bits where Eve's guess equals Alice's bit.
    pub eve_bit_agreement: f64,
    /// Binomial standard error of a fair-coin agreement over the same bits.
    pub agreement_sigma: f64,
    pub accepted_sifted: u64,
    pub induced_qber: f64,
    pub honest_qber: f64,
    /// Clicks per gate, attacked over honest.
    pub detection_rate_ratio: f64,
    pub sifted_rate_ratio: f64,
    /// Clicks with no light behind them, per gate.
    pub dark_rate_under_attack: f64,
    pub resends: u64,
    /// Bob's clicks per resent pulse.
    pub detection_per_resend: Option<f64>,
    pub resend_fraction: Option<f64>,
    /// Accepted clicks that happened while only one detector was sensitive.
    pub one_detector_clicks: u64,
    pub filter_gates: Option<u64>,
}

/// Intercept-resend against blinded detectors: Eve measures each pulse in a
/// random basis and resends a bright trigger carrying her result.
struct FakedStateEve {
    t_eve: f64,
    trigger_j: f64,
    resend_fraction: f64,
    power_w: f64,
    resends: u64,
}

fn measure(g: &GateView, basis: Basis, rng: &mut ChaCha8Rng) -> u8 {
    if basis == g.alice_basis {
        g.alice_bit
    } else {
        u8::from(rng.gen::<bool>())
    }
}

impl Interceptor for FakedStateEve {
    fn blinding_power_w(&self) -> f64 {
        self.power_w
    }

    fn deliver(&mut self, g: &GateView, rng: &mut ChaCha8Rng) -> Delivery {
        let mut out = Delivery::passive(Arrival::Vacuum);
        if thin(g.photons_sent, self.t_eve, rng) == 0 {
            return out;
        }
        let basis = Basis::from_bit(rng.gen());
        let bit = measure(g, basis, rng);
        if self.resend_fraction >= 1.0 || rng.gen::<f64>() < self.resend_fraction {
            self.resends += 1;
            out.arrival = Arrival::Bright { energy_j: self.trigger_j, basis, bit };
            out.eve_bit = Some(bit);
            out.intercepted = true;
        }
        out
    }
}

/// Eve blinds nothing; she forces one detector into deadtime with a bright
/// random-state pulse and, while its partner is still live, resends her
/// measurement of Alice's pulse brightly. She blocks every other slot.
struct DeadtimeEve {
    t_eve: f64,
    period: u32,
    window: u32,
    energy_j: f64,
}

impl Interceptor for DeadtimeEve {
    fn deliver(&mut self, g: &GateView, rng: &mut ChaCha8Rng) -> Delivery {
        let k = g.slot % self.period;
        if k == 0 {
            let basis = Basis::from_bit(rng.gen());
            let bit = u8::from(rng.gen::<bool>());
            return Delivery {
                arrival: Arrival::Bright { energy_j: self.energy_j, basis, bit },
                eve_bit: None,
                intercepted: true,
            };
        }
        if k > self.window || thin(g.photons_sent, self.t_eve, rng) == 0 {
            return Delivery::passive(Arrival::Vacuum);
        }
        let basis = Basis::from_bit(rng.gen());
        let bit = measure(g, basis, rng);
        Delivery { arrival: Arrival::Bright { energy_j: self.energy_j, basis, bit }, eve_bit: Some(bit), intercepted: true }
    }
}

fn sifted_count(log: &SessionLog) -> u64 {
    log.clicks.iter().filter(|c| is_sifted(c)).count() as u64
}

fn per_gate(n: u64, log: &SessionLog) -> f64 {
    let g = log.total_gates();
    if g == 0 {
        0.0
    } else {
        n as f64 / g as f64
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Probability that a resent trigger yields a sifted click, given Bob's
/// basis choice and the blinded click response at full and half energy.
fn resend_sift_probability(trigger_j: f64, d: &DetectorModel) -> f64 {
    let full = detect_bright_unchecked(trigger_j, d);
    let half = detect_bright_unchecked(trigger_j / 2.0, d);
    0.5 * (0.5 * full + 0.5 * (1.0 - (1.0 - half) * (1.0 - half)))
}

fn detect_bright_unchecked(e: f64, d: &DetectorModel) -> f64 {
    crate::linksim::detect_bright(e, d, true).unwrap_or(0.0)
}

/// Metrics of `attacked` against `honest`. Clicks where Eve holds no bit are
/// scored with a fair coin drawn from `seed`.
pub fn score(
    kind: AttackKind,
    attacked: &SessionLog,
    honest: &SessionLog,
    seed: u64,
    filter_gates: Option<u64>,
) -> AttackMetrics {
    let mut coin = ChaCha8Rng::seed_from_u64(seed ^ 0x6576_655f_636f_696e);
    let mut agree = 0u64;
    let mut n = 0u64;
    let mut one_detector = 0u64;
    for c in &attacked.clicks {
        if c.truth.is_some_and(|t| t.one_sensitive) {
            one_detector += 1;
        }
        if !is_sifted(c) {
            continue;
        }
        let guess = c.truth.and_then(|t| t.eve_bit).unwrap_or_else(|| u8::from(coin.gen::<bool>()));
        agree += u64::from(guess == c.alice_bit);
        n += 1;
    }
    let dark = attacked.clicks.iter().filter(|c| c.flag == ClickFlag::Dark).count() as u64;
    AttackMetrics {
        kind,
        eve_bit_agreement: if n == 0 { 0.5 } else { agree as f64 / n as f64 },
        agreement_sigma: if n == 0 { 0.5 } else { (0.25 / n as f64).sqrt() },
        accepted_sifted: n,
        induced_qber: sift(attacked).qber(),
        honest_qber: sift(honest).qber(),
        detection_rate_ratio: ratio(
            per_gate(attacked.clicks.len() as u64, attacked),
            per_gate(honest.clicks.len() as u64, honest),
        ),
        sifted_rate_ratio: ratio(per_gate(n, attacked), per_gate(sifted_count(honest), honest)),
        dark_rate_under_attack: per_gate(dark, attacked),
        resends: 0,
        detection_per_resend: None,
        resend_fraction: None,
        one_detector_clicks: one_detector,
        filter_gates,
    }
}

/// Run the faked-state attack. Fails with `NotBlinded` unless the blinding
/// power reaches both detectors' thresholds.
pub fn faked_state_attack(
    source: &SourceConfig,
    channel: &ChannelConfig,
    detectors: &[DetectorModel; 2],
    options: &SessionOptions,
    cfg: &AttackConfig,
) -> Result<(SessionLog, AttackMetrics), AttackError> {
    cfg.validate()?;
    for d in detectors {
        if !d.is_blinded_by(cfg.blinding_power_w) {
            return Err(AttackError::NotBlinded { power_w: cfg.blinding_power_w, threshold_w: d.blinding_power_w });
        }
    }
    let honest = run_session(source, channel, detectors, options)?;
    let t_eve = db_to_linear(cfg.eve_position_loss_db);
    let trigger_j = cfg.trigger_energy_j.unwrap_or(2.0 * detectors[0].e_never_j);

    let resend_fraction = if cfg.compensate_rate {
        let honest_rate = per_gate(sifted_count(&honest), &honest);
        let full = source.p_mu * (1.0 - (-source.mu * t_eve).exp()) * resend_sift_probability(trigger_j, &detectors[0]);
        if full > 0.0 {
            (honest_rate / full).min(1.0)
        } else {
            1.0
        }
    } else {
        1.0
    };

    let mut eve = FakedStateEve { t_eve, trigger_j, resend_fraction, power_w: cfg.blinding_power_w, resends: 0 };
    let log = run_session_with(source, channel, detectors, options, &mut eve)?;
    let mut m = score(AttackKind::FakedState, &log, &honest, options.seed, None);
    let clicked = log.clicks.iter().filter(|c| c.truth.is_some_and(|t| t.intercepted)).count() as u64;
    m.resends = eve.resends;
    m.detection_per_resend = (eve.resends > 0).then(|| clicked as f64 / eve.resends as f64);
    m.resend_fraction = Some(resend_fraction);
    Ok((log, m))
}

/// Run the deadtime exploit, optionally followed by Bob's software filter.
pub fn deadtime_attack(
    source: &SourceConfig,
    channel: &ChannelConfig,
    detectors: &[DetectorModel; 2],
    options: &SessionOptions,
    cfg: &AttackConfig,
) -> Result<(SessionLog, AttackMetrics), AttackError> {
    cfg.validate()?;
    let window = detectors[0].crosslink_delay_gates.max(detectors[1].crosslink_delay_gates);
    let recovery = detectors[0].recovery_gates().max(detectors[1].recovery_gates());
    let period = cfg.period_gates.unwrap_or(recovery + window + 1);
    let honest = run_session(source, channel, detectors, options)?;
    let mut eve = DeadtimeEve { t_eve: db_to_linear(cfg.eve_position_loss_db), period, window, energy_j: cfg.forcing_energy_j };
    let mut log = run_session_with(source, channel, detectors, options, &mut eve)?;
    let mut honest_scored = honest;
    if let Some(n) = cfg.filter_gates {
        log = software_deadtime_filter(&log, n);
        honest_scored = software_deadtime_filter(&honest_scored, n);
    }
    let mut m = score(AttackKind::DeadtimeExploit, &log, &honest_scored, options.seed, cfg.filter_gates);
    m.resends = log.clicks.iter().filter(|c| c.truth.is_some_and(|t| t.intercepted)).count() as u64;
    Ok((log, m))
}

/// Smallest software filter window that hides the deadtime exploit.
pub fn covering_filter_window(detectors: &[DetectorModel; 2]) -> u64 {
    u64::from(vulnerable_window_gates(&detectors[0], &detectors[1]))
}

/// Dispatch on `cfg.kind`; `None` returns the honest run scored against itself.
pub fn run_attack(
    source: &SourceConfig,
    channel: &ChannelConfig,
    detectors: &[DetectorModel; 2],
    options: &SessionOptions,
    cfg: &AttackConfig,
) -> Result<(SessionLog, AttackMetrics), AttackError> {
    match cfg.kind {
        AttackKind::FakedState => faked_state_attack(source, channel, detectors, options, cfg),
        AttackKind::DeadtimeExploit => deadtime_attack(source, channel, detectors, options, cfg),
        AttackKind::None => {
            cfg.validate()?;
            let mut log = run_session(source, channel, detectors, options)?;
            if let Some(n) = cfg.filter_gates {
                log = software_deadtime_filter(&log, n);
            }
            let m = score(AttackKind::None, &log, &log, options.seed, cfg.filter_gates);
            Ok((log, m))
        }
    }
}
