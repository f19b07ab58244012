use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClickFlag, ClickRecord, LinkError, SessionLog};

/// Shape of the blinded-detector click probability between `e_never` and `e_always`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampKind {
    #[default]
    Linear,
    /// Linear in log-energy (i.e. in dB of trigger energy).
    LogEnergy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark_prob: f64,
    #[serde(default = "default_gate_period")]
    pub gate_period_s: f64,
    #[serde(default = "default_deadtime")]
    pub deadtime_s: f64,
    /// Gates between a click and the partner detector entering deadtime.
    #[serde(default = "default_crosslink")]
    pub crosslink_delay_gates: u32,
    /// Relative efficiency for each gate following the deadtime; must end at 1.
    #[serde(default = "default_recovery_profile")]
    pub recovery_profile: Vec<f64>,
    #[serde(default = "default_e_never")]
    pub e_never_j: f64,
    #[serde(default = "default_e_always")]
    pub e_always_j: f64,
    /// Minimum cw power that blinds the detector.
    #[serde(default = "default_blinding_power")]
    pub blinding_power_w: f64,
    #[serde(default)]
    pub ramp: RampKind,
}

fn default_gate_period() -> f64 {
    3.2e-9
}
fn default_deadtime() -> f64 {
    4.5e-6
}
fn default_crosslink() -> u32 {
    2
}
fn default_e_never() -> f64 {
    12e-15
}
fn default_e_always() -> f64 {
    22e-15
}
fn default_blinding_power() -> f64 {
    3e-6
}

/// Linear recovery from 0 at 3.4 µs to 1 at 6 µs after the click, sampled
/// per gate from the end of the 4.5 µs deadtime.
pub fn default_recovery_profile() -> Vec<f64> {
    let gate = default_gate_period();
    let dead = (default_deadtime() / gate).round() as u32;
    let full = (6.0e-6 / gate).round() as u32;
    (dead + 1..=full)
        .map(|k| ((f64::from(k) * gate - 3.4e-6) / (6.0e-6 - 3.4e-6)).clamp(0.0, 1.0))
        .collect()
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            efficiency: 0.1,
            dark_prob: 1e-6,
            gate_period_s: default_gate_period(),
            deadtime_s: default_deadtime(),
            crosslink_delay_gates: default_crosslink(),
            recovery_profile: default_recovery_profile(),
            e_never_j: default_e_never(),
            e_always_j: default_e_always(),
            blinding_power_w: default_blinding_power(),
            ramp: RampKind::Linear,
        }
    }
}

impl DetectorModel {
    /// No deadtime, no recovery tail.
    pub fn ideal(efficiency: f64, dark_prob: f64) -> Self {
        Self { efficiency, dark_prob, deadtime_s: 0.0, crosslink_delay_gates: 0, recovery_profile: vec![], ..Self::default() }
    }

    pub fn deadtime_gates(&self) -> u32 {
        (self.deadtime_s / self.gate_period_s).round() as u32
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        let bad = |m: &str| Err(LinkError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.efficiency) || !(0.0..=1.0).contains(&self.dark_prob) {
            return bad("efficiency and dark probability must lie in [0,1]");
        }
        if !(self.gate_period_s > 0.0) || !(self.deadtime_s >= 0.0) {
            return bad("gate period must be positive and deadtime non-negative");
        }
        if !(self.e_never_j >= 0.0 && self.e_never_j < self.e_always_j) {
            return bad("E_never must be below E_always");
        }
        if self.recovery_profile.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return bad("recovery profile values must lie in [0,1]");
        }
        if self.recovery_profile.last().is_some_and(|&v| v != 1.0) {
            return bad("recovery profile must end at 1");
        }
        if !(self.blinding_power_w >= 0.0) {
            return bad("blinding power must be non-negative");
        }
        Ok(())
    }

    /// Relative sensitivity `k` gates after this detector's deadtime started.
    pub fn sensitivity_after(&self, k: i64) -> f64 {
        let dead = i64::from(self.deadtime_gates());
        if k <= 0 || dead == 0 && self.recovery_profile.is_empty() {
            return 1.0;
        }
        if k <= dead {
            return 0.0;
        }
        let idx = (k - dead - 1) as usize;
        self.recovery_profile.get(idx).copied().unwrap_or(1.0)
    }

    pub fn recovery_gates(&self) -> u32 {
        self.deadtime_gates() + self.recovery_profile.len() as u32
    }

    pub fn is_blinded_by(&self, cw_power_w: f64) -> bool {
        cw_power_w > 0.0 && cw_power_w >= self.blinding_power_w
    }
}

/// Click probability of an unblinded detector hit by `n` photons.
pub fn click_probability(n: u32, efficiency: f64, dark_prob: f64) -> f64 {
    1.0 - (1.0 - efficiency).powi(n as i32) * (1.0 - dark_prob)
}

pub fn detect_single_photon<R: Rng + ?Sized>(n: u32, d: &DetectorModel, rng: &mut R) -> bool {
    rng.gen::<f64>() < click_probability(n, d.efficiency, d.dark_prob)
}

/// Click probability of a blinded detector for a trigger pulse of energy `e_j`.
pub fn detect_bright(e_j: f64, d: &DetectorModel, blinded: bool) -> Result<f64, LinkError> {
    if !blinded {
        return Err(LinkError::NotBlinded);
    }
    Ok(bright_response(e_j, d))
}

pub(crate) fn bright_response(e_j: f64, d: &DetectorModel) -> f64 {
    if e_j <= d.e_never_j {
        return 0.0;
    }
    if e_j >= d.e_always_j {
        return 1.0;
    }
    let frac = match d.ramp {
        RampKind::Linear => (e_j - d.e_never_j) / (d.e_always_j - d.e_never_j),
        RampKind::LogEnergy if d.e_never_j > 0.0 => {
            (e_j / d.e_never_j).ln() / (d.e_always_j / d.e_never_j).ln()
        }
        RampKind::LogEnergy => 1.0,
    };
    frac.clamp(0.0, 1.0)
}

/// Shortest software discard window that hides every click made while only
/// one detector is sensitive: such clicks trail a click by 1..=delay gates.
pub fn vulnerable_window_gates(d0: &DetectorModel, d1: &DetectorModel) -> u32 {
    let delay = d0.crosslink_delay_gates.max(d1.crosslink_delay_gates);
    if delay == 0 {
        0
    } else {
        delay + 1
    }
}

/// Deadtime state of both detectors within one train.
#[derive(Debug, Clone)]
pub struct DeadtimeTracker {
    start: [Option<i64>; 2],
}

impl Default for DeadtimeTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl DeadtimeTracker {
    pub fn new() -> Self {
        Self { start: [None, None] }
    }

    pub fn reset(&mut self) {
        self.start = [None, None];
    }

    pub fn sensitivity(&self, det: usize, gate: i64, d: &DetectorModel) -> f64 {
        match self.start[det] {
            Some(s) => d.sensitivity_after(gate - s),
            None => 1.0,
        }
    }

    /// Register clicks at `gate`. `clicked[i]` tells whether detector i fired.
    pub fn register(&mut self, gate: i64, clicked: [bool; 2], models: [&DetectorModel; 2]) {
        for det in 0..2 {
            if clicked[det] {
                self.start[det] = Some(gate);
            }
        }
        for det in 0..2 {
            if !clicked[det] {
                continue;
            }
            let partner = 1 - det;
            if clicked[partner] {
                continue;
            }
            let delayed = gate + i64::from(models[det].crosslink_delay_gates);
            // A partner that is already fully dead at that point keeps its own cycle.
            let pm = models[partner];
            let already_dead = self.start[partner].is_some_and(|s| {
                let k = delayed - s;
                k >= 1 && k <= i64::from(pm.deadtime_gates())
            });
            if !already_dead {
                self.start[partner] = Some(delayed);
            }
        }
    }
}

/// Apply simultaneous deadtime after the fact to a log recorded without it.
///
/// Each detector taking part in a click survives with probability equal to
/// its current relative sensitivity; trains are independent.
pub fn apply_hardware_deadtime<R: Rng + ?Sized>(
    log: &SessionLog,
    d0: &DetectorModel,
    d1: &DetectorModel,
    rng: &mut R,
) -> SessionLog {
    let models = [d0, d1];
    let mut out = SessionLog { clicks: Vec::with_capacity(log.clicks.len()), ..log.clone() };
    let mut tracker = DeadtimeTracker::new();
    let mut current_train = None;
    for c in &log.clicks {
        if current_train != Some(c.train) {
            tracker.reset();
            current_train = Some(c.train);
        }
        let gate = i64::from(c.slot);
        let involved = match c.flag {
            ClickFlag::Double => [true, true],
            _ => [c.detector == 0, c.detector == 1],
        };
        let mut fired = [false; 2];
        for det in 0..2 {
            if involved[det] {
                let s = tracker.sensitivity(det, gate, models[det]);
                fired[det] = s >= 1.0 || (s > 0.0 && rng.gen::<f64>() < s);
            }
        }
        if !fired[0] && !fired[1] {
            continue;
        }
        let mut rec: ClickRecord = *c;
        if c.flag == ClickFlag::Double && !(fired[0] && fired[1]) {
            let det = if fired[0] { 0 } else { 1 };
            let swapped = c.truth.map(|t| t.swapped).unwrap_or(false);
            rec.detector = det as u8;
            rec.bob_bit = det as u8 ^ u8::from(swapped);
            rec.flag = ClickFlag::Single;
        }
        tracker.register(gate, fired, models);
        out.clicks.push(rec);
    }
    out
}

/// Discard every click that comes fewer than `n_gates` after the previous
/// click, retained or not; a discarded click restarts the window.
pub fn software_deadtime_filter(log: &SessionLog, n_gates: u64) -> SessionLog {
    let mut out = SessionLog { clicks: Vec::new(), ..log.clone() };
    let mut last: Option<u64> = None;
    for c in &log.clicks {
        let g = c.gate(log.train_length);
        let keep = last.is_none_or(|l| g - l >= n_gates);
        last = Some(g);
        if keep {
            out.clicks.push(*c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profile_spans_recovery() {
        let p = default_recovery_profile();
        assert_eq!(p.len(), 1875 - 1406);
        assert_eq!(*p.last().unwrap(), 1.0);
        assert!(p.windows(2).all(|w| w[0] <= w[1]));
        DetectorModel::default().validate().unwrap();
    }

    #[test]
    fn bright_ramp_points() {
        let d = DetectorModel::default();
        assert_eq!(detect_bright(12e-15, &d, true).unwrap(), 0.0);
        assert_eq!(detect_bright(22e-15, &d, true).unwrap(), 1.0);
        assert!((detect_bright(17e-15, &d, true).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(detect_bright(17e-15, &d, false), Err(LinkError::NotBlinded)));
    }

    #[test]
    fn sensitivity_schedule() {
        let d = DetectorModel::default();
        assert_eq!(d.sensitivity_after(0), 1.0);
        assert_eq!(d.sensitivity_after(1), 0.0);
        assert_eq!(d.sensitivity_after(1406), 0.0);
        assert!(d.sensitivity_after(1407) > 0.4);
        assert_eq!(d.sensitivity_after(5000), 1.0);
        let ideal = DetectorModel::ideal(0.1, 0.0);
        assert_eq!(ideal.sensitivity_after(1), 1.0);
    }

    #[test]
    fn tracker_crosslink_window() {
        let d = DetectorModel::default();
        let mut t = DeadtimeTracker::new();
        t.register(100, [true, false], [&d, &d]);
        assert_eq!(t.sensitivity(0, 101, &d), 0.0);
        assert_eq!(t.sensitivity(1, 101, &d), 1.0);
        assert_eq!(t.sensitivity(1, 102, &d), 1.0);
        assert_eq!(t.sensitivity(1, 103, &d), 0.0);
    }
}
