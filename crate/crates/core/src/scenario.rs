//! Scenario files, the stage chain they drive, and the reports they produce.
//!
//! A scenario names any subset of three stages: a loss budget over a
//! component catalog, a link simulation (optionally under attack) and
//! post-processing of the simulated clicks into secret key. Sweeps add
//! two-column data series to the report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attacks::{run_attack, AttackConfig, AttackError, AttackMetrics};
use crate::linksim::{
    detect_bright, expected_link, ChannelConfig, DetectorModel, LinkError, SessionLog, SessionOptions, SourceConfig,
};
use crate::lossbudget::{builtin, evaluate, BudgetError, Catalog, InjectionScenario, LeakageResult, DEFAULT_INPUT_POWER_W};
use crate::postproc::{
    binary_entropy, decoy_bounds, estimate, quantile, run_block, sift, BlockAssembler, BlockReport, DecoyStats,
    EstimateInputs, Intensities, PostprocError, ProtocolConfig,
};

pub const REPORT_SCHEMA: &str = "qkdbench.report/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Colon-separated directories searched for catalog files.
pub const CATALOG_PATH_ENV: &str = "QKDBENCH_CATALOG_PATH";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Postproc(#[from] PostprocError),
    #[error("{0}")]
    Io(String),
}

impl ScenarioError {
    /// Process exit code: 2 for bad configuration, 4 for missing spectral
    /// data, 1 for anything else. Block aborts are reported, not raised; see
    /// [`Report::exit_code`].
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::ConfigInvalid(_)
            | ScenarioError::Link(LinkError::InvalidConfig(_))
            | ScenarioError::Attack(AttackError::InvalidConfig(_))
            | ScenarioError::Postproc(PostprocError::InvalidParameter(_)) => 2,
            ScenarioError::Budget(BudgetError::MissingSpectralData { .. }) => 4,
            ScenarioError::Budget(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for ScenarioError {
    fn from(e: std::io::Error) -> Self {
        ScenarioError::Io(e.to_string())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("report has no series named `{0}`")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetStage {
    /// Bundled catalog name (`table_ii`, `appendix_f`) or a catalog file.
    pub catalog: String,
    /// Path name inside the catalog.
    pub path: String,
    #[serde(default = "default_input_power")]
    pub input_power_w: f64,
    #[serde(default = "default_pulse_rate")]
    pub pulse_rate_hz: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
}

fn default_input_power() -> f64 {
    DEFAULT_INPUT_POWER_W
}
fn default_pulse_rate() -> f64 {
    builtin::SYSTEM_PULSE_RATE_HZ
}
fn default_wavelength() -> f64 {
    builtin::OPERATING_WAVELENGTH_NM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkStage {
    pub source: SourceConfig,
    pub channel: ChannelConfig,
    pub detectors: [DetectorModel; 2],
    pub n_trains: u32,
    #[serde(default)]
    pub four_state_bob: bool,
    /// Keep Alice's full pulse record (needed for the pulse CSV).
    #[serde(default)]
    pub record_pulses: bool,
}

impl LinkStage {
    pub fn options(&self, seed: u64) -> SessionOptions {
        let o = SessionOptions::new(self.n_trains, seed).four_state(self.four_state_bob);
        if self.record_pulses {
            o.with_pulses()
        } else {
            o
        }
    }
}

/// Parameter sweeps that end up as named two-column series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    /// Blinded click probability of detector `detector` vs trigger energy.
    Blinding { detector: usize, e_min_j: f64, e_max_j: f64, points: usize },
    /// Expected secret length vs channel loss for the link stage at
    /// `pulses` sent pulses, stopping at the first aborting loss.
    LsecVsLoss { loss_min_db: f64, loss_max_db: f64, step_db: f64, pulses: u64 },
}

impl Sweep {
    pub fn metric(&self) -> &'static str {
        match self {
            Sweep::Blinding { .. } => "click_probability_vs_trigger_energy",
            Sweep::LsecVsLoss { .. } => "lsec_vs_loss",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub report: Option<PathBuf>,
    pub clicks_csv: Option<PathBuf>,
    pub pulses_csv: Option<PathBuf>,
    pub binary_log: Option<PathBuf>,
    /// Alice's secret key bits, one ASCII digit per bit.
    pub secret_key: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub budget: Option<BudgetStage>,
    #[serde(default)]
    pub link: Option<LinkStage>,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    #[serde(default)]
    pub protocol: Option<ProtocolConfig>,
    #[serde(default)]
    pub sweeps: Vec<Sweep>,
    #[serde(default)]
    pub outputs: Outputs,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::ConfigInvalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    /// SHA-256 over the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::ConfigInvalid(m));
        if self.budget.is_none() && self.link.is_none() && self.sweeps.is_empty() {
            return bad("scenario declares no stage".into());
        }
        if let Some(l) = &self.link {
            l.source.validate()?;
            l.channel.validate()?;
            l.detectors[0].validate()?;
            l.detectors[1].validate()?;
            if l.n_trains == 0 {
                return bad("link stage needs at least one train".into());
            }
        }
        if (self.attack.is_some() || self.protocol.is_some()) && self.link.is_none() {
            return bad("attack and protocol stages need a link stage".into());
        }
        if let Some(a) = &self.attack {
            a.validate()?;
        }
        if let Some(p) = &self.protocol {
            p.validate()?;
        }
        for s in &self.sweeps {
            match *s {
                Sweep::Blinding { detector, e_min_j, e_max_j, points } => {
                    if self.link.is_none() || detector > 1 {
                        return bad("blinding sweep needs a link stage and detector 0 or 1".into());
                    }
                    if !(e_min_j >= 0.0 && e_max_j > e_min_j && points >= 2) {
                        return bad("blinding sweep needs 0 <= e_min < e_max and >= 2 points".into());
                    }
                }
                Sweep::LsecVsLoss { loss_min_db, loss_max_db, step_db, pulses } => {
                    if self.link.is_none() {
                        return bad("loss sweep needs a link stage".into());
                    }
                    if !(loss_min_db >= 0.0 && loss_max_db >= loss_min_db && step_db > 0.0 && pulses > 0) {
                        return bad("loss sweep needs 0 <= min <= max, positive step and pulses".into());
                    }
                }
            }
        }
        Ok(())
    }
}

/// Load a scenario; relative paths inside it resolve against its directory.
pub fn load_scenario(path: &Path) -> Result<(Scenario, PathBuf), ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::ConfigInvalid(format!("cannot read scenario {}: {e}", path.display())))?;
    let scn = Scenario::from_json(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((scn, base))
}

/// Bundled names first, then `base`, then each directory in the catalog
/// search path.
pub fn resolve_catalog(reference: &str, base: &Path) -> Result<Catalog, ScenarioError> {
    if let Some(c) = builtin::by_name(reference) {
        return Ok(c);
    }
    let mut candidates = vec![base.join(reference)];
    if let Ok(dirs) = std::env::var(CATALOG_PATH_ENV) {
        candidates.extend(std::env::split_paths(&dirs).map(|d| d.join(reference)));
    }
    for c in candidates {
        if c.is_file() {
            return Ok(Catalog::load(&c)?);
        }
    }
    Err(ScenarioError::ConfigInvalid(format!("catalog `{reference}` not found")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSummary {
    pub gates: u64,
    pub clicks: u64,
    pub detector_counts: [u64; 2],
    pub sifted_bits: u64,
    pub sifted_qber: f64,
    pub stats: DecoyStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub tool_version: String,
    pub config_hash: String,
    pub scenario: Scenario,
    pub budget: Option<LeakageResult>,
    pub link: Option<LinkSummary>,
    pub attack: Option<AttackMetrics>,
    pub blocks: Vec<BlockReport>,
    pub secret_bits: u64,
    /// Sifted bits left over that did not fill a block.
    pub unused_sifted_bits: u64,
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
    pub notes: Vec<String>,
}

impl Report {
    /// 0 on success; 3 when a protocol stage ran and produced no key.
    pub fn exit_code(&self) -> i32 {
        if self.scenario.protocol.is_some() && self.secret_bits == 0 {
            3
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Everything a scenario run produced, including the material written to
/// the optional output files.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: Report,
    pub log: Option<SessionLog>,
    pub alice_key: Vec<u8>,
    pub bob_key: Vec<u8>,
}

/// Validate, then run each declared stage in order.
pub fn run_scenario(scn: &Scenario, base: &Path) -> Result<RunArtifacts, ScenarioError> {
    scn.validate()?;
    let catalog = scn.budget.as_ref().map(|b| resolve_catalog(&b.catalog, base)).transpose()?;

    let mut report = Report {
        schema: REPORT_SCHEMA.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        config_hash: scn.config_hash(),
        scenario: scn.clone(),
        budget: None,
        link: None,
        attack: None,
        blocks: Vec::new(),
        secret_bits: 0,
        unused_sifted_bits: 0,
        series: BTreeMap::new(),
        notes: Vec::new(),
    };

    if let (Some(stage), Some(catalog)) = (&scn.budget, &catalog) {
        let injection = InjectionScenario {
            input_power_w: stage.input_power_w,
            pulse_rate_hz: stage.pulse_rate_hz,
            wavelength_nm: stage.wavelength_nm,
            path: catalog.path(&stage.path)?.clone(),
        };
        report.budget = Some(evaluate(catalog, &injection)?);
    }

    let mut artifacts = RunArtifacts { report, log: None, alice_key: Vec::new(), bob_key: Vec::new() };
    if let Some(link) = &scn.link {
        let attack = scn.attack.clone().unwrap_or_default();
        let options = link.options(scn.seed);
        let (log, metrics) = run_attack(&link.source, &link.channel, &link.detectors, &options, &attack)?;
        let s = sift(&log);
        artifacts.report.link = Some(LinkSummary {
            gates: log.total_gates(),
            clicks: log.clicks.len() as u64,
            detector_counts: log.detector_counts(),
            sifted_bits: s.len() as u64,
            sifted_qber: s.qber(),
            stats: s.stats,
        });
        if scn.attack.is_some() {
            artifacts.report.attack = Some(metrics);
        }
        if link.four_state_bob {
            artifacts.report.notes.push(
                "four-state Bob is on: no key-rate correction for detector-side leakage is applied".to_string(),
            );
        }
        if let Some(cfg) = &scn.protocol {
            let mut asm = BlockAssembler::new(cfg.block_len());
            let blocks = asm.push(&log);
            artifacts.report.unused_sifted_bits = asm.pending_len() as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
            rng.set_stream(u64::MAX);
            for b in &blocks {
                let r = run_block(b, &link.source, cfg, &mut rng)?;
                artifacts.alice_key.extend_from_slice(&r.alice_secret);
                artifacts.bob_key.extend_from_slice(&r.bob_secret);
                artifacts.report.secret_bits += r.alice_secret.len() as u64;
                artifacts.report.blocks.push(r);
            }
            if blocks.is_empty() {
                artifacts
                    .report
                    .notes
                    .push(format!("only {} sifted bits: not enough for one block", asm.pending_len()));
            }
        }
        artifacts.log = Some(log);
    }

    for sweep in &scn.sweeps {
        let link = scn.link.as_ref().expect("validated");
        let series = run_sweep(sweep, link, scn.protocol.as_ref())?;
        artifacts.report.series.insert(sweep.metric().to_string(), series);
    }
    Ok(artifacts)
}

fn run_sweep(sweep: &Sweep, link: &LinkStage, protocol: Option<&ProtocolConfig>) -> Result<Vec<(f64, f64)>, ScenarioError> {
    match *sweep {
        Sweep::Blinding { detector, e_min_j, e_max_j, points } => {
            let d = &link.detectors[detector];
            Ok((0..points)
                .map(|i| {
                    let e = e_min_j + (e_max_j - e_min_j) * i as f64 / (points - 1) as f64;
                    (e, detect_bright(e, d, true).expect("blinded"))
                })
                .collect())
        }
        Sweep::LsecVsLoss { loss_min_db, loss_max_db, step_db, pulses } => {
            let cfg = protocol.cloned().unwrap_or_default();
            let mut out = Vec::new();
            let mut k = 0u32;
            loop {
                let loss = loss_min_db + f64::from(k) * step_db;
                if loss > loss_max_db + 1e-9 {
                    break;
                }
                let channel = ChannelConfig { loss_db: loss, ..link.channel.clone() };
                let l = expected_secret_length(&link.source, &channel, &link.detectors, pulses, &cfg)?;
                out.push((loss, l.max(0) as f64));
                if l <= 0 {
                    break;
                }
                k += 1;
            }
            Ok(out)
        }
    }
}

/// Secret length for the expected (noise-free) counts of `pulses` sent
/// pulses, with reconciliation leak at the configured efficiency and one
/// verification hash per subblock.
pub fn expected_secret_length(
    source: &SourceConfig,
    channel: &ChannelConfig,
    detectors: &[DetectorModel; 2],
    pulses: u64,
    cfg: &ProtocolConfig,
) -> Result<i64, PostprocError> {
    let exp = expected_link(source, channel, detectors);
    let mut stats = DecoyStats::default();
    for c in 0..3 {
        let sent = (pulses as f64 * [source.p_mu, source.p_nu1, source.p_nu2][c]).round();
        stats.sent[c] = sent as u64;
        stats.detected[c] = (sent * exp.gain[c]).round() as u64;
    }
    let it = Intensities { mu: source.mu, nu1: source.nu1, nu2: source.nu2 };
    let z = quantile(cfg.eps_decoy)?;
    let bounds = decoy_bounds(&stats, &it, z)?;
    let l_ver = (stats.detected[0] as f64 / 2.0).floor();
    let e_mu = exp.qber[0];
    let subblocks = (l_ver / cfg.reconcile.subblock_len() as f64).ceil();
    let leak = cfg.reconcile.efficiency * binary_entropy(e_mu) * l_ver + subblocks * 50.0;
    let est = estimate(&EstimateInputs {
        q1_lower: bounds.q1_lower,
        q_mu_upper: bounds.q_upper[0],
        y0_lower: bounds.y0_lower,
        l_ver: l_ver as u64,
        e_mu,
        n_mu: stats.sent[0],
        mu: it.mu,
        leak,
        z,
        eps_pa: cfg.eps_pa,
    })?;
    Ok(if est.abort_reason.is_some() { 0 } else { est.ell_sec })
}

/// Two-column text series `x y`, one point per line.
pub fn emit_series(report: &Report, metric: &str) -> Result<String, SeriesError> {
    let s = report.series.get(metric).ok_or_else(|| SeriesError::UnknownMetric(metric.to_string()))?;
    let mut out = String::new();
    for (x, y) in s {
        out.push_str(&format!("{x:e} {y:e}\n"));
    }
    Ok(out)
}

/// Write every output the scenario declares. Paths are relative to `base`.
pub fn write_outputs(art: &RunArtifacts, base: &Path) -> Result<(), ScenarioError> {
    let o = &art.report.scenario.outputs;
    let at = |p: &PathBuf| base.join(p);
    if let Some(log) = &art.log {
        if let Some(p) = &o.clicks_csv {
            crate::linksim::write_clicks_csv(log, std::fs::File::create(at(p))?)?;
        }
        if let Some(p) = &o.pulses_csv {
            if log.pulses.is_none() {
                return Err(ScenarioError::ConfigInvalid("pulse log requested but not recorded".into()));
            }
            crate::linksim::write_pulses_csv(log, std::fs::File::create(at(p))?)?;
        }
        if let Some(p) = &o.binary_log {
            crate::linksim::write_binary(log, std::fs::File::create(at(p))?)?;
        }
    }
    if let Some(p) = &o.secret_key {
        let text: String = art.alice_key.iter().map(|&b| char::from(b'0' + b)).collect();
        std::fs::write(at(p), text)?;
    }
    if let Some(p) = &o.report {
        std::fs::write(at(p), art.report.to_json())?;
    }
    Ok(())
}
