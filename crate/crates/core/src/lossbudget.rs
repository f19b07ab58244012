//! Optical loss chains and light-injection budgets.
//!
//! A [`Catalog`] holds per-component spectral insertion-loss tables and named
//! [`OpticalPath`]s through them. From a path and an [`InjectionScenario`] we
//! get either the mean photon number leaking back out of Alice in a
//! Trojan-horse geometry ([`trojan_leakage`]) or the power delivered to an
//! internal component in a single-pass injection ([`delivered_power`]).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Planck constant times speed of light, J·m, rounded the way the source
/// budget rounds it so golden numbers reproduce.
pub const HC_JOULE_METRE: f64 = 1.99e-25;

/// Default injected power: the damage limit of standard telecom fibre.
pub const DEFAULT_INPUT_POWER_W: f64 = 100.0;

/// Wavelength range over which a quartz fibre channel is transparent.
pub const MIN_WAVELENGTH_NM: f64 = 350.0;
pub const MAX_WAVELENGTH_NM: f64 = 2400.0;

const WAVELENGTH_EPS_NM: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum BudgetError {
    #[error("component `{component}` has no loss data at {wavelength_nm} nm")]
    MissingSpectralData { component: String, wavelength_nm: f64 },
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("unknown path `{0}`")]
    UnknownPath(String),
    #[error("invalid component `{component}`: {reason}")]
    InvalidComponent { component: String, reason: String },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("catalog i/o: {0}")]
    Io(String),
}

/// Wavelength-indexed loss table, stored as `(nm, dB)` points sorted by wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct SpectralTable(Vec<(f64, f64)>);

impl SpectralTable {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, String> {
        if points.is_empty() {
            return Err("loss table is empty".into());
        }
        for &(nm, db) in &points {
            if !(MIN_WAVELENGTH_NM..=MAX_WAVELENGTH_NM).contains(&nm) {
                return Err(format!("wavelength {nm} nm outside {MIN_WAVELENGTH_NM}-{MAX_WAVELENGTH_NM} nm"));
            }
            if !db.is_finite() || db < 0.0 {
                return Err(format!("loss {db} dB at {nm} nm is not a finite non-negative value"));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| (w[1].0 - w[0].0).abs() < WAVELENGTH_EPS_NM) {
            return Err("duplicate wavelength in loss table".into());
        }
        Ok(Self(points))
    }

    /// Single-wavelength table.
    pub fn flat(wavelength_nm: f64, loss_db: f64) -> Self {
        Self::new(vec![(wavelength_nm, loss_db)]).expect("valid single point")
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.0
    }

    /// Loss at `wavelength_nm`, linear in dB between bracketing points.
    /// `None` outside the table span.
    pub fn loss_at(&self, wavelength_nm: f64) -> Option<f64> {
        let pts = &self.0;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if wavelength_nm < first.0 - WAVELENGTH_EPS_NM || wavelength_nm > last.0 + WAVELENGTH_EPS_NM {
            return None;
        }
        if let Some(&(_, db)) = pts.iter().find(|(nm, _)| (nm - wavelength_nm).abs() < WAVELENGTH_EPS_NM) {
            return Some(db);
        }
        let upper = pts.iter().position(|&(nm, _)| nm > wavelength_nm)?;
        let (x0, y0) = pts[upper - 1];
        let (x1, y1) = pts[upper];
        Some(y0 + (y1 - y0) * (wavelength_nm - x0) / (x1 - x0))
    }
}

impl TryFrom<Vec<(f64, f64)>> for SpectralTable {
    type Error = String;
    fn try_from(points: Vec<(f64, f64)>) -> Result<Self, String> {
        Self::new(points)
    }
}

impl From<SpectralTable> for Vec<(f64, f64)> {
    fn from(t: SpectralTable) -> Self {
        t.0
    }
}

/// One optical component with direction-dependent insertion loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    pub loss_forward: SpectralTable,
    pub loss_reverse: SpectralTable,
}

impl ComponentSpec {
    /// Reciprocal component with the same loss in both directions.
    pub fn symmetric(name: &str, table: SpectralTable) -> Self {
        Self { name: name.to_string(), loss_forward: table.clone(), loss_reverse: table }
    }

    pub fn asymmetric(name: &str, forward: SpectralTable, reverse: SpectralTable) -> Self {
        Self { name: name.to_string(), loss_forward: forward, loss_reverse: reverse }
    }

    pub fn loss_db(&self, direction: Direction, wavelength_nm: f64) -> Result<f64, BudgetError> {
        let table = match direction {
            Direction::Forward => &self.loss_forward,
            Direction::Reverse => &self.loss_reverse,
        };
        table.loss_at(wavelength_nm).ok_or_else(|| BudgetError::MissingSpectralData {
            component: self.name.clone(),
            wavelength_nm,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Alice's emission direction, towards the channel.
    Forward,
    /// From the channel into Alice.
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub component: String,
    pub direction: Direction,
    #[serde(default = "one_pass")]
    pub passes: u8,
}

fn one_pass() -> u8 {
    1
}

impl Leg {
    pub fn new(component: &str, direction: Direction, passes: u8) -> Self {
        Self { component: component.to_string(), direction, passes }
    }
}

/// Ordered chain of component traversals.
///
/// `reflector` declares total reflection behind the last double-passed
/// element; double passes are only legal when it is set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpticalPath {
    pub legs: Vec<Leg>,
    #[serde(default)]
    pub reflector: bool,
    /// Opt-in loss per component traversal (connector), dB.
    #[serde(default)]
    pub connector_loss_db: f64,
}

impl OpticalPath {
    pub fn single_pass(legs: Vec<Leg>) -> Self {
        Self { legs, reflector: false, connector_loss_db: 0.0 }
    }

    pub fn double_pass(legs: Vec<Leg>) -> Self {
        Self { legs, reflector: true, connector_loss_db: 0.0 }
    }

    pub fn validate(&self) -> Result<(), BudgetError> {
        if let Some(leg) = self.legs.iter().find(|l| l.passes == 0 || l.passes > 2) {
            return Err(BudgetError::InvalidPath(format!(
                "leg `{}` has {} passes, expected 1 or 2",
                leg.component, leg.passes
            )));
        }
        if !self.reflector && self.legs.iter().any(|l| l.passes == 2) {
            return Err(BudgetError::InvalidPath("double pass without a declared reflector".into()));
        }
        if !self.connector_loss_db.is_finite() || self.connector_loss_db < 0.0 {
            return Err(BudgetError::InvalidPath("connector loss must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn is_double_pass(&self) -> bool {
        self.reflector && self.legs.iter().any(|l| l.passes == 2)
    }

    /// Concatenation `self` then `other`.
    pub fn then(&self, other: &OpticalPath) -> OpticalPath {
        let mut legs = self.legs.clone();
        legs.extend(other.legs.iter().cloned());
        OpticalPath {
            legs,
            reflector: self.reflector || other.reflector,
            connector_loss_db: self.connector_loss_db.max(other.connector_loss_db),
        }
    }
}

/// Component tables plus named paths.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub paths: BTreeMap<String, OpticalPath>,
}

impl Catalog {
    pub fn component(&self, name: &str) -> Result<&ComponentSpec, BudgetError> {
        self.components
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| BudgetError::UnknownComponent(name.to_string()))
    }

    pub fn path(&self, name: &str) -> Result<&OpticalPath, BudgetError> {
        self.paths.get(name).ok_or_else(|| BudgetError::UnknownPath(name.to_string()))
    }

    /// Replace (or add) a component, e.g. to load measured or damaged tables.
    pub fn with_component(mut self, spec: ComponentSpec) -> Self {
        match self.components.iter_mut().find(|c| c.name == spec.name) {
            Some(slot) => *slot = spec,
            None => self.components.push(spec),
        }
        self
    }

    pub fn validate(&self) -> Result<(), BudgetError> {
        for (i, c) in self.components.iter().enumerate() {
            if self.components[..i].iter().any(|o| o.name == c.name) {
                return Err(BudgetError::InvalidComponent {
                    component: c.name.clone(),
                    reason: "duplicate name".into(),
                });
            }
        }
        for path in self.paths.values() {
            path.validate()?;
            for leg in &path.legs {
                self.component(&leg.component)?;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, BudgetError> {
        let catalog: Catalog = serde_json::from_str(text).map_err(|e| BudgetError::Io(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: &Path) -> Result<Self, BudgetError> {
        let text = std::fs::read_to_string(path).map_err(|e| BudgetError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serialises")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionScenario {
    #[serde(default = "default_input_power")]
    pub input_power_w: f64,
    pub pulse_rate_hz: f64,
    pub wavelength_nm: f64,
    pub path: OpticalPath,
}

fn default_input_power() -> f64 {
    DEFAULT_INPUT_POWER_W
}

impl InjectionScenario {
    pub fn validate(&self) -> Result<(), BudgetError> {
        if !(self.input_power_w >= 0.0) || !self.input_power_w.is_finite() {
            return Err(BudgetError::InvalidScenario("input power must be finite and >= 0".into()));
        }
        if !(self.pulse_rate_hz > 0.0) {
            return Err(BudgetError::InvalidScenario("pulse rate must be > 0".into()));
        }
        if !(MIN_WAVELENGTH_NM..=MAX_WAVELENGTH_NM).contains(&self.wavelength_nm) {
            return Err(BudgetError::InvalidScenario(format!(
                "wavelength {} nm outside catalog range",
                self.wavelength_nm
            )));
        }
        self.path.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageResult {
    pub total_loss_db: f64,
    pub delivered_power_w: f64,
    pub mean_photons_out: f64,
}

pub fn db_to_linear(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

pub fn linear_to_db(transmittance: f64) -> f64 {
    -10.0 * transmittance.log10()
}

/// Total loss of `path` at `wavelength_nm`: Σ passes × directional loss,
/// plus the connector constant per traversal.
pub fn path_loss(catalog: &Catalog, path: &OpticalPath, wavelength_nm: f64) -> Result<f64, BudgetError> {
    path.validate()?;
    path.legs.iter().try_fold(0.0, |acc, leg| {
        let comp = catalog.component(&leg.component)?;
        let per_pass = comp.loss_db(leg.direction, wavelength_nm)? + path.connector_loss_db;
        Ok(acc + f64::from(leg.passes) * per_pass)
    })
}

/// Photons per pulse carried by `input_power_w` at repetition rate `pulse_rate_hz`.
pub fn photons_per_pulse(input_power_w: f64, pulse_rate_hz: f64, wavelength_nm: f64) -> f64 {
    (input_power_w / pulse_rate_hz) * (wavelength_nm * 1e-9 / HC_JOULE_METRE)
}

/// Mean photon number leaking back out through a double-pass Trojan geometry.
pub fn trojan_leakage(catalog: &Catalog, scn: &InjectionScenario) -> Result<LeakageResult, BudgetError> {
    scn.validate()?;
    if !scn.path.is_double_pass() {
        return Err(BudgetError::InvalidPath("Trojan leakage needs a double-pass path with a reflector".into()));
    }
    let total_loss_db = path_loss(catalog, &scn.path, scn.wavelength_nm)?;
    let t = db_to_linear(total_loss_db);
    Ok(LeakageResult {
        total_loss_db,
        delivered_power_w: scn.input_power_w * t,
        mean_photons_out: t * photons_per_pulse(scn.input_power_w, scn.pulse_rate_hz, scn.wavelength_nm),
    })
}

/// Power reaching the end of a single-pass injection path, in watts.
pub fn delivered_power(catalog: &Catalog, scn: &InjectionScenario) -> Result<f64, BudgetError> {
    Ok(injection_budget(catalog, scn)?.delivered_power_w)
}

/// Single-pass counterpart of [`trojan_leakage`]; `mean_photons_out` is the
/// photon number per pulse period at the end of the path.
pub fn injection_budget(catalog: &Catalog, scn: &InjectionScenario) -> Result<LeakageResult, BudgetError> {
    scn.validate()?;
    if scn.path.legs.iter().any(|l| l.passes != 1) {
        return Err(BudgetError::InvalidPath("delivered power needs a single-pass path".into()));
    }
    let total_loss_db = path_loss(catalog, &scn.path, scn.wavelength_nm)?;
    let t = db_to_linear(total_loss_db);
    Ok(LeakageResult {
        total_loss_db,
        delivered_power_w: scn.input_power_w * t,
        mean_photons_out: t * photons_per_pulse(scn.input_power_w, scn.pulse_rate_hz, scn.wavelength_nm),
    })
}

/// Evaluate whichever budget fits the path geometry.
pub fn evaluate(catalog: &Catalog, scn: &InjectionScenario) -> Result<LeakageResult, BudgetError> {
    if scn.path.is_double_pass() {
        trojan_leakage(catalog, scn)
    } else {
        injection_budget(catalog, scn)
    }
}

pub mod builtin {
    //! Alice and Bob component tables at the operating wavelength, and the
    //! out-of-band substitution set for the alternate-wavelength estimate.

    use super::*;

    /// ITU channel 36.
    pub const OPERATING_WAVELENGTH_NM: f64 = 1548.51;
    pub const SYSTEM_PULSE_RATE_HZ: f64 = 312.5e6;

    fn flat(db: f64) -> SpectralTable {
        SpectralTable::flat(OPERATING_WAVELENGTH_NM, db)
    }

    /// Data-sheet insertion losses at 1548.51 nm. The VOA sits at its
    /// minimum setting.
    pub fn table_ii() -> Catalog {
        let sym = |name: &str, db: f64| ComponentSpec::symmetric(name, flat(db));
        let components = vec![
            sym("IM", 2.7),
            sym("PM1", 2.5),
            sym("BS", 20.0),
            sym("DWDM1", 1.0),
            sym("VOA1", 0.5),
            sym("Att", 20.0),
            sym("DWDM2", 1.0),
            ComponentSpec::asymmetric("Iso1", flat(0.35), flat(28.0)),
            ComponentSpec::asymmetric("Iso2", flat(0.4), flat(48.0)),
            sym("DWDM3", 1.0),
            sym("PC", 0.05),
            sym("PM2", 2.5),
            sym("PBS", 0.5),
        ];
        Catalog { components, paths: alice_paths() }
    }

    /// `table_ii` with the transparent-window substitutions: isolators and
    /// attenuator from broadband data sheets, both DWDMs at their
    /// non-adjacent-channel isolation. The 35 dB DWDM figure is an unverified
    /// guess, so this is a named scenario rather than a default.
    pub fn appendix_f() -> Catalog {
        table_ii()
            .with_component(ComponentSpec::asymmetric("Iso1", flat(0.35), flat(17.0)))
            .with_component(ComponentSpec::asymmetric("Iso2", flat(0.4), flat(26.0)))
            .with_component(ComponentSpec::symmetric("Att", flat(4.0)))
            .with_component(ComponentSpec::symmetric("DWDM1", flat(35.0)))
            .with_component(ComponentSpec::symmetric("DWDM2", flat(35.0)))
    }

    /// Inbound components from the channel to the IM, outermost first.
    const INBOUND: [&str; 7] = ["DWDM2", "Att", "VOA1", "DWDM1", "BS", "PM1", "IM"];

    fn isolators_in() -> Vec<Leg> {
        vec![Leg::new("Iso2", Direction::Reverse, 1), Leg::new("Iso1", Direction::Reverse, 1)]
    }

    fn inbound_until(last: &str) -> Vec<Leg> {
        let mut legs = isolators_in();
        for name in INBOUND {
            legs.push(Leg::new(name, Direction::Reverse, 1));
            if name == last {
                break;
            }
        }
        legs
    }

    pub fn alice_paths() -> BTreeMap<String, OpticalPath> {
        let mut paths = BTreeMap::new();

        // Everything behind the IM reflects totally; isolators are crossed
        // once in each direction.
        let mut trojan = isolators_in();
        trojan.extend(INBOUND.iter().map(|n| Leg::new(n, Direction::Reverse, 2)));
        trojan.push(Leg::new("Iso1", Direction::Forward, 1));
        trojan.push(Leg::new("Iso2", Direction::Forward, 1));
        paths.insert("trojan".to_string(), OpticalPath::double_pass(trojan));

        // Up to the laser: through the whole chain once.
        paths.insert("seeding".to_string(), OpticalPath::single_pass(inbound_until("IM")));

        // Total reflection at the BS towards the power meter.
        let mut meter = isolators_in();
        meter.extend(["DWDM2", "Att", "VOA1", "DWDM1"].iter().map(|n| Leg::new(n, Direction::Reverse, 1)));
        paths.insert("power_meter".to_string(), OpticalPath::single_pass(meter));

        paths.insert("photorefraction_pm1".to_string(), OpticalPath::single_pass(inbound_until("BS")));
        paths.insert("photorefraction_im".to_string(), OpticalPath::single_pass(inbound_until("PM1")));
        paths
    }

    pub fn scenario(path: &OpticalPath) -> InjectionScenario {
        InjectionScenario {
            input_power_w: DEFAULT_INPUT_POWER_W,
            pulse_rate_hz: SYSTEM_PULSE_RATE_HZ,
            wavelength_nm: OPERATING_WAVELENGTH_NM,
            path: path.clone(),
        }
    }

    pub fn by_name(name: &str) -> Option<Catalog> {
        match name {
            "table_ii" => Some(table_ii()),
            "appendix_f" => Some(appendix_f()),
            _ => None,
        }
    }
}
