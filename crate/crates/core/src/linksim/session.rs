use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::detector::{bright_response, DeadtimeTracker};
use super::source::{thin, PoissonTable};
use super::{
    Basis, ChannelConfig, ClickFlag, ClickRecord, ClickTruth, DetectorModel, Intensity, LinkError, PulseRecord,
    SessionLog, SourceConfig,
};
use crate::lossbudget::HC_JOULE_METRE;

/// Wavelength used to convert unblinded bright pulses into photon numbers.
const BRIGHT_WAVELENGTH_NM: f64 = 1550.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOptions {
    #[serde(default)]
    pub four_state_bob: bool,
    pub n_trains: u32,
    pub seed: u64,
    #[serde(default)]
    pub record_pulses: bool,
}

impl SessionOptions {
    pub fn new(n_trains: u32, seed: u64) -> Self {
        Self { four_state_bob: false, n_trains, seed, record_pulses: false }
    }

    pub fn four_state(mut self, on: bool) -> Self {
        self.four_state_bob = on;
        self
    }

    pub fn with_pulses(mut self) -> Self {
        self.record_pulses = true;
        self
    }
}

/// Alice's side of one gate, as seen by whoever sits on the channel.
#[derive(Debug, Clone, Copy)]
pub struct GateView {
    pub train: u32,
    pub slot: u32,
    pub alice_basis: Basis,
    pub alice_bit: u8,
    pub intensity: Intensity,
    pub photons_sent: u32,
    pub channel_transmittance: f64,
}

/// What reaches Bob's input in one gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arrival {
    Vacuum,
    /// `n` photons in the BB84 state (`basis`, `bit`).
    Photons { n: u32, basis: Basis, bit: u8 },
    /// A macroscopic pulse of `energy_j`; routed without misalignment.
    Bright { energy_j: f64, basis: Basis, bit: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub arrival: Arrival,
    pub eve_bit: Option<u8>,
    pub intercepted: bool,
}

impl Delivery {
    pub fn passive(arrival: Arrival) -> Self {
        Self { arrival, eve_bit: None, intercepted: false }
    }
}

/// Anything standing between Alice and Bob. The honest channel is one.
pub trait Interceptor {
    /// Continuous-wave power shone onto Bob's detectors.
    fn blinding_power_w(&self) -> f64 {
        0.0
    }

    fn start_train(&mut self, _train: u32) {}

    fn deliver(&mut self, gate: &GateView, rng: &mut ChaCha8Rng) -> Delivery;
}

/// Plain lossy channel.
#[derive(Debug, Clone, Copy, Default)]
pub struct Honest;

impl Interceptor for Honest {
    fn deliver(&mut self, g: &GateView, rng: &mut ChaCha8Rng) -> Delivery {
        Delivery::passive(Arrival::Photons {
            n: thin(g.photons_sent, g.channel_transmittance, rng),
            basis: g.alice_basis,
            bit: g.alice_bit,
        })
    }
}

pub fn run_session(
    source: &SourceConfig,
    channel: &ChannelConfig,
    detectors: &[DetectorModel; 2],
    options: &SessionOptions,
) -> Result<SessionLog, LinkError> {
    run_session_with(source, channel, detectors, options, &mut Honest)
}

/// Simulate `options.n_trains` trains. Train `t` draws from its own ChaCha8
/// stream `t` under `options.seed`, so trains are reproducible independently.
pub fn run_session_with(
    source: &SourceConfig,
    channel: &ChannelConfig,
    detectors: &[DetectorModel; 2],
    options: &SessionOptions,
    eve: &mut dyn Interceptor,
) -> Result<SessionLog, LinkError> {
    source.validate()?;
    channel.validate()?;
    detectors[0].validate()?;
    detectors[1].validate()?;

    let tables: Vec<PoissonTable> = Intensity::ALL.iter().map(|&c| PoissonTable::new(source.intensity(c))).collect();
    let cum = [source.p_mu, source.p_mu + source.p_nu1];
    let t = channel.transmittance();
    let blinded = [
        detectors[0].is_blinded_by(eve.blinding_power_w()),
        detectors[1].is_blinded_by(eve.blinding_power_w()),
    ];
    let models = [&detectors[0], &detectors[1]];
    let photon_energy = HC_JOULE_METRE / (BRIGHT_WAVELENGTH_NM * 1e-9);

    let mut log = SessionLog {
        train_length: source.train_length,
        n_trains: options.n_trains,
        four_state_bob: options.four_state_bob,
        train_counts: Vec::with_capacity(options.n_trains as usize),
        pulses: options.record_pulses.then(Vec::new),
        clicks: Vec::new(),
    };

    let mut tracker = DeadtimeTracker::new();
    for train in 0..options.n_trains {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(u64::from(train));
        tracker.reset();
        eve.start_train(train);
        let mut counts = [0u32; 3];

        for slot in 0..source.train_length {
            let r: u64 = rng.gen();
            let u_class = (r >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let class = if u_class < cum[0] {
                Intensity::Mu
            } else if u_class < cum[1] {
                Intensity::Nu1
            } else {
                Intensity::Nu2
            };
            let alice_basis = Basis::from_bit(r & 1 == 1);
            let alice_bit = ((r >> 1) & 1) as u8;
            let bob_basis = Basis::from_bit((r >> 2) & 1 == 1);
            let swap = options.four_state_bob && (r >> 3) & 1 == 1;
            counts[class.index()] += 1;
            if let Some(p) = log.pulses.as_mut() {
                p.push(PulseRecord { train, slot, basis: alice_basis, bit: alice_bit, intensity: class });
            }

            let photons_sent = tables[class.index()].sample(&mut rng);
            let view = GateView {
                train,
                slot,
                alice_basis,
                alice_bit,
                intensity: class,
                photons_sent,
                channel_transmittance: t,
            };
            let delivery = eve.deliver(&view, &mut rng);

            let gate = i64::from(slot);
            let sens = [tracker.sensitivity(0, gate, models[0]), tracker.sensitivity(1, gate, models[1])];
            if sens[0] == 0.0 && sens[1] == 0.0 {
                continue;
            }

            // Per-output-port load: photon counts, or energies for blinded detectors.
            let mut photons = [0u32; 2];
            let mut energy = [0.0f64; 2];
            match delivery.arrival {
                Arrival::Vacuum => {}
                Arrival::Photons { n, basis, bit } => {
                    for _ in 0..n {
                        let out = if basis == bob_basis {
                            bit ^ u8::from(channel.misalignment > 0.0 && rng.gen::<f64>() < channel.misalignment)
                        } else {
                            u8::from(rng.gen::<bool>())
                        };
                        photons[usize::from(out)] += 1;
                    }
                }
                Arrival::Bright { energy_j, basis, bit } => {
                    if basis == bob_basis {
                        energy[usize::from(bit)] = energy_j;
                    } else {
                        energy = [energy_j / 2.0; 2];
                    }
                    let n = (energy_j / photon_energy).round() as u64;
                    if basis == bob_basis {
                        photons[usize::from(bit)] = n.min(u64::from(u32::MAX)) as u32;
                    } else if n > 0 {
                        let k = Binomial::new(n, 0.5).expect("valid").sample(&mut rng);
                        photons = [k as u32, (n - k) as u32];
                    }
                }
            }

            let mut fired = [false; 2];
            let mut by_photon = [false; 2];
            for det in 0..2 {
                let port = det ^ usize::from(swap);
                let d = models[det];
                if blinded[det] {
                    let p = bright_response(energy[port], d) * sens[det];
                    if p > 0.0 && (p >= 1.0 || rng.gen::<f64>() < p) {
                        fired[det] = true;
                        by_photon[det] = true;
                    }
                    continue;
                }
                let n = photons[port];
                let p_dark = d.dark_prob * sens[det];
                if n == 0 && p_dark == 0.0 {
                    continue;
                }
                let p_photon = 1.0 - (1.0 - d.efficiency * sens[det]).powi(n.min(i32::MAX as u32) as i32);
                let u: f64 = rng.gen();
                if u < p_photon {
                    fired[det] = true;
                    by_photon[det] = true;
                } else if u < p_photon + (1.0 - p_photon) * p_dark {
                    fired[det] = true;
                }
            }
            if !fired[0] && !fired[1] {
                continue;
            }
            tracker.register(gate, fired, models);

            let (detector, bob_bit, flag) = if fired[0] && fired[1] {
                let bit = ((r >> 4) & 1) as u8;
                (bit ^ u8::from(swap), bit, ClickFlag::Double)
            } else {
                let det = if fired[0] { 0u8 } else { 1u8 };
                let flag = if by_photon[usize::from(det)] { ClickFlag::Single } else { ClickFlag::Dark };
                (det, det ^ u8::from(swap), flag)
            };
            log.clicks.push(ClickRecord {
                train,
                slot,
                detector,
                bob_basis,
                bob_bit,
                flag,
                alice_basis,
                alice_bit,
                intensity: class,
                sent_through: counts,
                truth: Some(ClickTruth {
                    photons_sent,
                    swapped: swap,
                    eve_bit: delivery.eve_bit,
                    intercepted: delivery.intercepted,
                    one_sensitive: (sens[0] > 0.0) != (sens[1] > 0.0),
                }),
            });
        }
        log.train_counts.push(counts.map(u64::from));
    }
    Ok(log)
}
