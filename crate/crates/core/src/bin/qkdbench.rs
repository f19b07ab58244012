use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use qkd_workbench::attacks::{run_attack, AttackConfig};
use qkd_workbench::check::criteria;
use qkd_workbench::linksim::{read_binary, read_csv, write_binary, write_clicks_csv, write_pulses_csv, SourceConfig};
use qkd_workbench::lossbudget::{builtin, evaluate, InjectionScenario, DEFAULT_INPUT_POWER_W};
use qkd_workbench::postproc::{run_block, BlockAssembler, ProtocolConfig};
use qkd_workbench::risk::{export_table, parse_layers, reference_issues, IssueRecord, Ledger, RiskFactors};
use qkd_workbench::scenario::{
    emit_series, load_scenario, resolve_catalog, run_scenario, write_outputs, ScenarioError,
};

#[derive(Parser)]
#[command(name = "qkdbench", version, about = "Decoy-state BB84 workbench")]
struct Cli {
    /// Run the acceptance suite and print one PASS/FAIL line per criterion.
    #[arg(long)]
    check: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Loss budget of an injection path through a component catalog.
    Budget(BudgetArgs),
    /// Risk ledger: add, list and export issues.
    Risk {
        #[command(subcommand)]
        action: RiskAction,
    },
    /// Simulate the link of a scenario and write its click log.
    Simulate(SimulateArgs),
    /// Run an attack against the link of a scenario.
    Attack(AttackArgs),
    /// Post-process a click log into secret key.
    Postproc(PostprocArgs),
    /// Run a whole scenario and emit its report.
    Report(ReportArgs),
}

#[derive(Args)]
struct BudgetArgs {
    /// Scenario file with a budget stage.
    scenario: Option<PathBuf>,
    /// Bundled catalog name or catalog file (instead of a scenario).
    #[arg(long)]
    catalog: Option<String>,
    /// Path name inside the catalog.
    #[arg(long)]
    path: Option<String>,
    #[arg(long, default_value_t = DEFAULT_INPUT_POWER_W)]
    power_w: f64,
    #[arg(long, default_value_t = builtin::SYSTEM_PULSE_RATE_HZ)]
    rate_hz: f64,
    #[arg(long, default_value_t = builtin::OPERATING_WAVELENGTH_NM)]
    wavelength_nm: f64,
    /// Print the named catalog as JSON and exit.
    #[arg(long)]
    dump_catalog: Option<String>,
}

#[derive(Subcommand)]
enum RiskAction {
    Add {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        title: String,
        /// Layers, e.g. `Q1-3,5` or `All`.
        #[arg(long)]
        layers: String,
        #[arg(long)]
        target: String,
        /// Loophole likelihood, current technology, key leakage: e.g. `1,0,1`; or `solved`.
        #[arg(long)]
        factors: String,
        #[arg(long)]
        recommendation: String,
        #[arg(long)]
        addendum: Option<String>,
    },
    List {
        /// Ledger file; the reference issue set when absent.
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long)]
        layers: Option<String>,
    },
    Export {
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ExportFormat::Table)]
        format: ExportFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Table,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    scenario: PathBuf,
    #[arg(long)]
    clicks: Option<PathBuf>,
    /// Alice's pulse log; forces pulse recording.
    #[arg(long)]
    pulses: Option<PathBuf>,
    #[arg(long)]
    binary: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AttackArgs {
    scenario: PathBuf,
    /// Attack configuration; overrides the scenario's attack stage.
    #[arg(long)]
    attack: Option<PathBuf>,
    #[arg(long)]
    clicks: Option<PathBuf>,
    #[arg(long)]
    binary: Option<PathBuf>,
}

#[derive(Args)]
struct PostprocArgs {
    /// Source configuration (intensities and probabilities).
    #[arg(long)]
    source: PathBuf,
    /// Protocol configuration; defaults apply when absent.
    #[arg(long)]
    protocol: Option<PathBuf>,
    #[arg(long, requires = "pulses")]
    clicks: Option<PathBuf>,
    #[arg(long)]
    pulses: Option<PathBuf>,
    #[arg(long, conflicts_with = "clicks")]
    binary: Option<PathBuf>,
    #[arg(long)]
    four_state: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Alice's secret key, one ASCII digit per bit.
    #[arg(long)]
    key_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    scenario: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print this two-column series instead of the report.
    #[arg(long)]
    series: Option<String>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Scenario(e) => e.exit_code() as u8,
            CliError::Usage(_) => 2,
            CliError::Other(_) => 1,
        }
    }
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serialises"));
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn budget(a: BudgetArgs) -> Result<u8, CliError> {
    if let Some(name) = a.dump_catalog {
        let cat = builtin::by_name(&name).ok_or_else(|| CliError::Usage(format!("no bundled catalog `{name}`")))?;
        println!("{}", cat.to_json());
        return Ok(0);
    }
    let (catalog, injection) = if let Some(path) = a.scenario {
        let (scn, base) = load_scenario(&path)?;
        let stage = scn.budget.ok_or_else(|| CliError::Usage("scenario has no budget stage".into()))?;
        let cat = resolve_catalog(&stage.catalog, &base)?;
        let p = cat.path(&stage.path).map_err(ScenarioError::from)?.clone();
        let inj = InjectionScenario {
            input_power_w: stage.input_power_w,
            pulse_rate_hz: stage.pulse_rate_hz,
            wavelength_nm: stage.wavelength_nm,
            path: p,
        };
        (cat, inj)
    } else {
        let (Some(c), Some(p)) = (a.catalog, a.path) else {
            return Err(CliError::Usage("give a scenario, or --catalog and --path".into()));
        };
        let cat = resolve_catalog(&c, Path::new("."))?;
        let path = cat.path(&p).map_err(ScenarioError::from)?.clone();
        let inj = InjectionScenario { input_power_w: a.power_w, pulse_rate_hz: a.rate_hz, wavelength_nm: a.wavelength_nm, path };
        (cat, inj)
    };
    print_json(&evaluate(&catalog, &injection).map_err(ScenarioError::from)?);
    Ok(0)
}

fn open_ledger(path: Option<&Path>) -> Result<Ledger, CliError> {
    match path {
        Some(p) => Ledger::open(p).map_err(other),
        None => {
            let mut l = Ledger::in_memory();
            for r in reference_issues() {
                l.add(r).map_err(other)?;
            }
            Ok(l)
        }
    }
}

fn parse_factors(s: &str) -> Result<RiskFactors, CliError> {
    if s.eq_ignore_ascii_case("solved") {
        return Ok(RiskFactors::solved());
    }
    let v: Vec<u8> = s.split(',').map(|x| x.trim().parse::<u8>()).collect::<Result<_, _>>().map_err(other)?;
    match v.as_slice() {
        &[a, b, c] => Ok(RiskFactors::new(a, b, c)),
        _ => Err(CliError::Usage("factors take three comma-separated values".into())),
    }
}

fn risk(action: RiskAction) -> Result<u8, CliError> {
    match action {
        RiskAction::Add { ledger, id, title, layers, target, factors, recommendation, addendum } => {
            let mut l = open_ledger(Some(&ledger))?;
            let layers = parse_layers(&layers).map_err(other)?;
            let mut rec = IssueRecord::new(&id, &title, layers, &target, parse_factors(&factors)?, &recommendation);
            if let Some(a) = addendum {
                rec = rec.with_addendum(&a);
            }
            println!("{id}: grade {}", rec.grade);
            l.add(rec).map_err(other)?;
        }
        RiskAction::List { ledger, layers } => {
            let l = open_ledger(ledger.as_deref())?;
            let filter = layers.map(|s| parse_layers(&s)).transpose().map_err(other)?.unwrap_or_default();
            print!("{}", export_table(l.list(&filter)));
        }
        RiskAction::Export { ledger, format } => {
            let l = open_ledger(ledger.as_deref())?;
            match format {
                ExportFormat::Table => print!("{}", l.export_table()),
                ExportFormat::Json => print!("{}", l.export_json()),
            }
        }
    }
    Ok(0)
}

fn write_log(
    log: &qkd_workbench::linksim::SessionLog,
    clicks: Option<&Path>,
    pulses: Option<&Path>,
    binary: Option<&Path>,
) -> Result<(), CliError> {
    if let Some(p) = clicks {
        write_clicks_csv(log, File::create(p).map_err(other)?).map_err(other)?;
    }
    if let Some(p) = pulses {
        write_pulses_csv(log, File::create(p).map_err(other)?).map_err(other)?;
    }
    if let Some(p) = binary {
        write_binary(log, File::create(p).map_err(other)?).map_err(other)?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<u8, CliError> {
    let (mut scn, _) = load_scenario(&a.scenario)?;
    if let Some(s) = a.seed {
        scn.seed = s;
    }
    scn.attack = None;
    scn.protocol = None;
    scn.sweeps.clear();
    if a.pulses.is_some() {
        if let Some(l) = scn.link.as_mut() {
            l.record_pulses = true;
        }
    }
    if scn.link.is_none() {
        return Err(CliError::Usage("scenario has no link stage".into()));
    }
    let art = run_scenario(&scn, Path::new("."))?;
    let log = art.log.as_ref().expect("link stage ran");
    write_log(log, a.clicks.as_deref(), a.pulses.as_deref(), a.binary.as_deref())?;
    print_json(&art.report.link);
    Ok(0)
}

fn attack(a: AttackArgs) -> Result<u8, CliError> {
    let (scn, _) = load_scenario(&a.scenario)?;
    scn.validate()?;
    let link = scn.link.as_ref().ok_or_else(|| CliError::Usage("scenario has no link stage".into()))?;
    let cfg: AttackConfig = match &a.attack {
        Some(p) => read_json(p)?,
        None => scn.attack.clone().ok_or_else(|| CliError::Usage("no attack configuration".into()))?,
    };
    let (log, metrics) = run_attack(&link.source, &link.channel, &link.detectors, &link.options(scn.seed), &cfg)
        .map_err(ScenarioError::from)?;
    write_log(&log, a.clicks.as_deref(), None, a.binary.as_deref())?;
    print_json(&metrics);
    Ok(0)
}

fn postproc(a: PostprocArgs) -> Result<u8, CliError> {
    let source: SourceConfig = read_json(&a.source)?;
    let cfg: ProtocolConfig = match &a.protocol {
        Some(p) => read_json(p)?,
        None => ProtocolConfig::default(),
    };
    cfg.validate().map_err(ScenarioError::from)?;
    let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())));
    let log = match (&a.clicks, &a.pulses, &a.binary) {
        (Some(c), Some(p), None) => read_csv(open(p)?, open(c)?, a.four_state).map_err(other)?,
        (None, _, Some(b)) => read_binary(open(b)?).map_err(other)?,
        _ => return Err(CliError::Usage("give --clicks with --pulses, or --binary".into())),
    };
    let mut asm = BlockAssembler::new(cfg.block_len());
    let blocks = asm.push(&log);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut reports = Vec::new();
    let mut key = String::new();
    for b in &blocks {
        let r = run_block(b, &source, &cfg, &mut rng).map_err(ScenarioError::from)?;
        key.extend(r.alice_secret.iter().map(|&x| char::from(b'0' + x)));
        reports.push(r);
    }
    if let Some(p) = &a.key_out {
        std::fs::write(p, &key).map_err(other)?;
    }
    print_json(&reports);
    if blocks.is_empty() {
        eprintln!("only {} sifted bits: not enough for one block of {}", asm.pending_len(), cfg.block_len());
    }
    Ok(if key.is_empty() { 3 } else { 0 })
}

fn report(a: ReportArgs) -> Result<u8, CliError> {
    let (scn, base) = load_scenario(&a.scenario)?;
    let art = run_scenario(&scn, &base)?;
    write_outputs(&art, &base)?;
    if let Some(metric) = &a.series {
        print!("{}", emit_series(&art.report, metric).map_err(other)?);
    } else if let Some(out) = &a.out {
        std::fs::write(out, art.report.to_json()).map_err(other)?;
    } else {
        println!("{}", art.report.to_json());
    }
    Ok(art.report.exit_code() as u8)
}

fn run_check() -> u8 {
    let mut failed = 0;
    for c in criteria() {
        let outcome = c();
        println!("{}", outcome.summary_line());
        for s in outcome.subchecks.iter().filter(|s| !s.passed) {
            println!("    MISS {}: {}", s.name, s.detail);
        }
        failed += u8::from(!outcome.passed());
    }
    u8::from(failed > 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.check {
        return ExitCode::from(run_check());
    }
    let Some(command) = cli.command else {
        eprintln!("nothing to do; see --help");
        return ExitCode::from(2);
    };
    let result = match command {
        Command::Budget(a) => budget(a),
        Command::Risk { action } => risk(action),
        Command::Simulate(a) => simulate(a),
        Command::Attack(a) => attack(a),
        Command::Postproc(a) => postproc(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
