//! Three-factor risk grading and an append-only issue ledger.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("issue id `{0}` already in ledger")]
    DuplicateId(String),
    #[error("invalid record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("ledger i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("ledger line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

/// The three binary severity parameters. Each is 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RiskFactors {
    pub loophole_likelihood: u8,
    pub current_technology: u8,
    pub key_leakage: u8,
    #[serde(default)]
    pub solved: bool,
}

impl RiskFactors {
    pub const fn new(loophole_likelihood: u8, current_technology: u8, key_leakage: u8) -> Self {
        Self { loophole_likelihood, current_technology, key_leakage, solved: false }
    }

    pub const fn solved() -> Self {
        Self { loophole_likelihood: 0, current_technology: 0, key_leakage: 0, solved: true }
    }

    fn check(&self) -> Result<(), String> {
        if [self.loophole_likelihood, self.current_technology, self.key_leakage].iter().any(|&v| v > 1) {
            return Err("risk factors must be 0 or 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    Solved,
    L,
    M,
    H,
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grade::Solved => "Solved",
            Grade::L => "L",
            Grade::M => "M",
            Grade::H => "H",
        })
    }
}

/// Solved overrides everything; otherwise the sum of the factors decides.
pub fn grade(f: &RiskFactors) -> Grade {
    if f.solved {
        return Grade::Solved;
    }
    match f.loophole_likelihood + f.current_technology + f.key_leakage {
        0 | 1 => Grade::L,
        2 => Grade::M,
        _ => Grade::H,
    }
}

/// Implementation layers, optics (Q1) up to installation and maintenance (Q7).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    Q1,
    Q2,
    Q3,
    Q4,
    Q5,
    Q6,
    Q7,
}

impl Layer {
    pub const ALL: [Layer; 7] = [Layer::Q1, Layer::Q2, Layer::Q3, Layer::Q4, Layer::Q5, Layer::Q6, Layer::Q7];

    pub fn index(self) -> u8 {
        self as u8 + 1
    }

    pub fn description(self) -> &'static str {
        match self {
            Layer::Q1 => "Optics",
            Layer::Q2 => "Analog electronics interface",
            Layer::Q3 => "Driver and calibration algorithms",
            Layer::Q4 => "Operation cycle",
            Layer::Q5 => "Post-processing",
            Layer::Q6 => "Application interface",
            Layer::Q7 => "Installation and maintenance",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.index())
    }
}

impl FromStr for Layer {
    type Err = RiskError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_start_matches(['Q', 'q']);
        match t.parse::<u8>() {
            Ok(i @ 1..=7) => Ok(Layer::ALL[usize::from(i - 1)]),
            _ => Err(RiskError::UnknownLayer(s.to_string())),
        }
    }
}

/// Parse `Q1-5,7`, `Q1,2`, `All` and the like.
pub fn parse_layers(s: &str) -> Result<BTreeSet<Layer>, RiskError> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Layer::ALL.into_iter().collect());
    }
    let mut out = BTreeSet::new();
    for part in s.split(',') {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (a.parse::<Layer>()?, b.parse::<Layer>()?);
                out.extend(Layer::ALL.into_iter().filter(|l| (a..=b).contains(l)));
            }
            None => {
                out.insert(part.parse::<Layer>()?);
            }
        }
    }
    Ok(out)
}

/// Compact rendering: consecutive runs collapse to `a-b`, all seven to `All`.
pub fn format_layers(layers: &BTreeSet<Layer>) -> String {
    if layers.len() == Layer::ALL.len() {
        return "All".into();
    }
    let idx: Vec<u8> = layers.iter().map(|l| l.index()).collect();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && idx[j + 1] == idx[j] + 1 {
            j += 1;
        }
        parts.push(if j > i + 1 {
            format!("{}-{}", idx[i], idx[j])
        } else if j == i + 1 {
            format!("{},{}", idx[i], idx[j])
        } else {
            idx[i].to_string()
        });
        i = j + 1;
    }
    format!("Q{}", parts.join(","))
}

/// A separately assessed target within one issue (e.g. the same attack on
/// Alice and on Bob).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubAssessment {
    pub target: String,
    pub factors: RiskFactors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub id: String,
    pub title: String,
    pub layers: BTreeSet<Layer>,
    pub target_component: String,
    pub factors: RiskFactors,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_assessments: Vec<SubAssessment>,
    pub grade: Grade,
    pub recommendation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addendum: Option<String>,
}

impl IssueRecord {
    pub fn new(
        id: &str,
        title: &str,
        layers: BTreeSet<Layer>,
        target_component: &str,
        factors: RiskFactors,
        recommendation: &str,
    ) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            layers,
            target_component: target_component.into(),
            factors,
            extra_assessments: Vec::new(),
            grade: grade(&factors),
            recommendation: recommendation.into(),
            addendum: None,
        }
    }

    pub fn with_assessment(mut self, target: &str, factors: RiskFactors) -> Self {
        self.extra_assessments.push(SubAssessment { target: target.into(), factors });
        self.grade = self.computed_grade();
        self
    }

    pub fn with_addendum(mut self, text: &str) -> Self {
        self.addendum = Some(text.into());
        self
    }

    /// Worst grade over the primary factors and every sub-assessment.
    pub fn computed_grade(&self) -> Grade {
        self.extra_assessments.iter().map(|a| grade(&a.factors)).fold(grade(&self.factors), Grade::max)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        let bad = |reason: String| RiskError::InvalidRecord { id: self.id.clone(), reason };
        if self.id.trim().is_empty() {
            return Err(bad("empty id".into()));
        }
        if self.layers.is_empty() {
            return Err(bad("no layers".into()));
        }
        self.factors.check().map_err(bad)?;
        for a in &self.extra_assessments {
            a.factors.check().map_err(bad)?;
        }
        let expected = self.computed_grade();
        if self.grade != expected {
            return Err(bad(format!("grade {} does not match factors ({expected})", self.grade)));
        }
        Ok(())
    }
}

/// Issues in insertion order, optionally mirrored to a JSON-lines file.
#[derive(Debug, Default)]
pub struct Ledger {
    records: Vec<IssueRecord>,
    file: Option<PathBuf>,
}

impl Ledger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (or create on first add) a ledger file; existing lines are replayed.
    pub fn open(path: &Path) -> Result<Self, RiskError> {
        let mut ledger = Ledger { records: Vec::new(), file: Some(path.to_path_buf()) };
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: IssueRecord =
                    serde_json::from_str(&line).map_err(|source| RiskError::Parse { line: i + 1, source })?;
                ledger.push(rec)?;
            }
        }
        Ok(ledger)
    }

    fn push(&mut self, rec: IssueRecord) -> Result<(), RiskError> {
        rec.validate()?;
        if self.records.iter().any(|r| r.id == rec.id) {
            return Err(RiskError::DuplicateId(rec.id));
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn add(&mut self, rec: IssueRecord) -> Result<(), RiskError> {
        self.push(rec.clone())?;
        if let Some(path) = &self.file {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{}", serde_json::to_string(&rec).expect("record serialises"))?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[IssueRecord] {
        &self.records
    }

    /// Records tagged with at least one of `layers`; an empty filter matches all.
    pub fn list(&self, layers: &BTreeSet<Layer>) -> Vec<&IssueRecord> {
        self.records
            .iter()
            .filter(|r| layers.is_empty() || !r.layers.is_disjoint(layers))
            .collect()
    }

    pub fn export_json(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serialises"));
            out.push('\n');
        }
        out
    }

    /// Pipe-separated table: issue, layers, target, recommendation, grade.
    pub fn export_table(&self) -> String {
        export_table(self.records.iter())
    }
}

pub fn export_table<'a>(records: impl IntoIterator<Item = &'a IssueRecord>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!(
            "{} | {} | {} | {} | {}\n",
            r.title,
            format_layers(&r.layers),
            r.target_component,
            r.recommendation,
            r.grade
        ));
    }
    out
}

/// The fifteen reference issues of a commercial decoy-BB84 system review.
pub fn reference_issues() -> Vec<IssueRecord> {
    let l = |s: &str| parse_layers(s).expect("static layer spec");
    let f = RiskFactors::new;
    const CHARACTERISE_ALICE: &str =
        "Characterise Alice's components over a wide spectral range; add isolators and possibly spectral filters.";
    vec![
        IssueRecord::new("protocol", "Choice of QKD protocol", l("Q5"), "Protocol", RiskFactors::solved(), "None."),
        IssueRecord::new(
            "superlinear-control",
            "Superlinear detector control",
            l("Q1-5,7"),
            "SPDs",
            f(1, 1, 1),
            "Continue the photocurrent-measurement countermeasure and test it independently.",
        ),
        IssueRecord::new(
            "efficiency-mismatch",
            "Detector efficiency mismatch",
            l("Q1-5"),
            "SPDs, Bob's PM",
            f(1, 1, 1),
            "Update the key rate equation; characterise Bob's components spectrally; address timing attacks.",
        ),
        IssueRecord::new(
            "deadtime",
            "Detector deadtime",
            l("Q1,2,5"),
            "SPDs",
            f(1, 1, 1),
            "Enforce simultaneous deadtime in post-processing as well as in hardware.",
        ),
        IssueRecord::new("trojan-horse", "Trojan-horse", l("Q1,2"), "Alice's optics", f(0, 0, 0), CHARACTERISE_ALICE),
        IssueRecord::new("laser-seeding", "Laser seeding", l("Q1,2"), "Laser", RiskFactors::solved(), "None."),
        IssueRecord::new(
            "power-meter-injection",
            "Light injection into Alice's power meter",
            l("Q1-3"),
            "IM",
            f(1, 0, 0),
            CHARACTERISE_ALICE,
        )
        .with_addendum("A later measurement-device-independent attack on the power meter slightly raises this risk."),
        IssueRecord::new(
            "photorefraction",
            "Induced photorefraction",
            l("Q1-3"),
            "Alice's IM and PM",
            f(0, 1, 1),
            "Characterise Alice's components over a wide spectral range; measure optically.",
        ),
        IssueRecord::new(
            "laser-damage",
            "Laser damage",
            l("Q1"),
            "Alice's & Bob's optics",
            f(1, 0, 1),
            "Install an additional sacrificial isolator at Alice's exit.",
        )
        .with_assessment("Bob", f(0, 1, 1)),
        IssueRecord::new(
            "backflash",
            "APD backflash",
            l("Q1,2"),
            "SPDs",
            f(1, 1, 0),
            "Characterise Bob's components spectrally; measure SPD backflash emission probability.",
        ),
        IssueRecord::new(
            "intersymbol-interference",
            "Intersymbol interference",
            l("Q1-3"),
            "Alice's active components",
            f(1, 0, 0),
            "Perform optical measurements.",
        ),
        IssueRecord::new(
            "state-preparation",
            "Imperfect state preparation",
            l("Q1-3,5"),
            "Alice's optics",
            f(1, 0, 0),
            "Perform optical measurements.",
        ),
        IssueRecord::new(
            "channel-calibration",
            "Calibration via channel Alice-Bob",
            l("Q1-5"),
            "SPDs, IM, PM",
            f(1, 1, 1),
            "Needs a manufacturing-process solution agreed with the vendor.",
        ),
        IssueRecord::new(
            "qrng",
            "Quantum random number generator",
            l("Q5"),
            "Protocol",
            f(1, 0, 0),
            "Implement a quantum random number generator and integrate it.",
        ),
        IssueRecord::new(
            "supply-chain",
            "Compromised supply chain",
            l("All"),
            "Any",
            f(0, 1, 1),
            "Adopt the national cryptography licensing authority's mitigation strategies.",
        ),
    ]
}
