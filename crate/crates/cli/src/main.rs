use std::fs;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};
use fairscope::config::{parse_rates, KeyValues};
use fairscope::decision::{ai_sweep, SweepOutcome, SweepPoint};
use fairscope::report::table_number;
use fairscope::{
    load_audit_table, resolve_partition, run_audit, run_screen, AuditConfig, AuditError, AuditReport, AuditTable,
    Flag, Format, SynthSpec, TOOL_VERSION,
};

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_GATE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "fairscope",
    version,
    about = "Bias and fairness audit for scored assessments",
    after_help = "\
Exit codes: 0 success, 1 input or configuration error, 2 compliance gate failed.
Set FAIRSCOPE_NO_COLOR to disable styling of the stderr summary."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full metric suite on one table
    Audit {
        #[command(flatten)]
        common: Common,
        /// Exit 2 when any metric is flagged as a violation
        #[arg(long)]
        gate: bool,
        /// Feature column defining strata for conditional demographic parity
        #[arg(long)]
        strata_col: Option<String>,
        /// Comma-separated columns that must not appear among the features
        #[arg(long)]
        forbidden: Option<String>,
    },
    /// Adverse impact across a range of selection rates
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated selection rates in (0, 1]
        #[arg(long)]
        rates: Option<String>,
    },
    /// Feature-stage checks only (unawareness and group leakage)
    Screen {
        #[command(flatten)]
        common: Common,
        /// Comma-separated columns that must not appear among the features
        #[arg(long)]
        forbidden: Option<String>,
    },
    /// Generate a synthetic audit table from a spec file
    Synth {
        /// Spec file (key = value or JSON)
        #[arg(long)]
        spec: PathBuf,
        /// CSV destination; stdout when omitted
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Audit table (CSV)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Config file (key = value or JSON); flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    group_col: Option<String>,
    #[arg(long)]
    truth_col: Option<String>,
    #[arg(long)]
    pred_col: Option<String>,
    /// Reference and focal group labels, e.g. `--groups men,women`
    #[arg(long, value_name = "A,B")]
    groups: Option<String>,
    #[arg(long, value_name = "json|markdown")]
    format: Option<String>,
    /// Top-k selection rate in (0, 1]
    #[arg(long)]
    select_rate: Option<f64>,
    /// Write the report here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.insert(k.to_string(), v);
            }
        };
        put("group_col", self.group_col.clone());
        put("truth_col", self.truth_col.clone());
        put("pred_col", self.pred_col.clone());
        put("groups", self.groups.clone());
        put("format", self.format.clone());
        put("select_rate", self.select_rate.map(|r| r.to_string()));
        kv
    }
}

fn read(path: &Path) -> Result<String, AuditError> {
    fs::read_to_string(path).map_err(|e| AuditError::Io(format!("{}: {e}", path.display())))
}

/// Defaults, then the config file, then flags. A relative `input` inside a
/// config file is taken relative to that file.
fn load_config(common: &Common, extra: KeyValues) -> Result<AuditConfig, AuditError> {
    let mut config = AuditConfig::default();
    if let Some(path) = &common.config {
        config = AuditConfig::from_text(&read(path)?)?;
        if let (Some(input), Some(dir)) = (&config.input, path.parent()) {
            if input.is_relative() {
                config.input = Some(dir.join(input));
            }
        }
    }
    config.apply(&common.overrides())?;
    config.apply(&extra)?;
    if let Some(input) = &common.input {
        config.input = Some(input.clone());
    }
    config.validate()?;
    Ok(config)
}

fn load_table(config: &AuditConfig) -> Result<AuditTable, AuditError> {
    let path = config
        .input
        .as_ref()
        .ok_or_else(|| AuditError::Config("no input table; pass --input or set `input`".into()))?;
    let file = fs::File::open(path).map_err(|e| AuditError::Io(format!("{}: {e}", path.display())))?;
    load_audit_table(io::BufReader::new(file), &config.roles, config.scale)
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), AuditError> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| AuditError::Io(format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(AuditError::from),
    }
}

fn use_color() -> bool {
    std::env::var_os("FAIRSCOPE_NO_COLOR").is_none() && io::stderr().is_terminal()
}

fn summarize(report: &AuditReport) {
    let color = use_color();
    let paint = |code: &str, s: String| if color { format!("\x1b[{code}m{s}\x1b[0m") } else { s };
    let parts = [
        paint("32", format!("{} ok", report.count(Flag::Ok))),
        paint("33", format!("{} suspect", report.count(Flag::Suspect))),
        paint("31;1", format!("{} violation", report.count(Flag::Violation))),
        paint("2", format!("{} undefined", report.count(Flag::Undefined))),
    ];
    eprintln!("fairscope: {}", parts.join(", "));
}

fn sweep_markdown(points: &[SweepPoint], a: &str, b: &str, threshold: f64) -> String {
    let cell = |o: &SweepOutcome| match o {
        SweepOutcome::Computed(r) if r.ai_ratio < threshold => format!("**{}**", table_number(r.ai_ratio)),
        SweepOutcome::Computed(r) => table_number(r.ai_ratio),
        SweepOutcome::Undefined { .. } => "undefined".to_string(),
    };
    let mut s = format!("# Adverse impact sweep\n\nGroups: `{a}` (A) vs `{b}` (B). Bold ratios fall below {threshold}.\n\n");
    s.push_str("| rate | k | AI (ground truth) | AI (predictions) |\n|---:|---:|---:|---:|\n");
    for p in points {
        s.push_str(&format!("| {} | {} | {} | {} |\n", p.rate, p.k, cell(&p.truth), cell(&p.predicted)));
    }
    s
}

fn run(cli: Cli) -> Result<u8, AuditError> {
    match cli.command {
        Command::Audit { common, gate, strata_col, forbidden } => {
            let mut extra = KeyValues::new();
            if gate {
                extra.insert("gate".into(), "true".into());
            }
            if let Some(s) = strata_col {
                extra.insert("strata_col".into(), s);
            }
            if let Some(f) = forbidden {
                extra.insert("forbidden".into(), f);
            }
            let config = load_config(&common, extra)?;
            let table = load_table(&config)?;
            let report = run_audit(&table, &config)?;
            emit(&report.render(config.format), common.output.as_deref())?;
            summarize(&report);
            if config.gate && report.has_violation() {
                eprintln!("fairscope: compliance gate failed");
                return Ok(EXIT_GATE);
            }
            Ok(EXIT_OK)
        }
        Command::Sweep { common, rates } => {
            let mut extra = KeyValues::new();
            if let Some(r) = rates {
                parse_rates(&r)?;
                extra.insert("sweep_rates".into(), r);
            }
            let config = load_config(&common, extra)?;
            let table = load_table(&config)?;
            let part = resolve_partition(&table, &config)?;
            let points = ai_sweep(&table, &part, &config.sweep_rates)?;
            let text = match config.format {
                Format::Json => {
                    let doc = serde_json::json!({
                        "tool_version": TOOL_VERSION,
                        "group_a": part.group_a_label,
                        "group_b": part.group_b_label,
                        "config": config.echo(),
                        "points": points,
                    });
                    let mut s = serde_json::to_string_pretty(&doc).expect("sweep is serializable");
                    s.push('\n');
                    s
                }
                Format::Markdown => sweep_markdown(
                    &points,
                    &part.group_a_label,
                    &part.group_b_label,
                    config.thresholds.adverse_impact,
                ),
            };
            emit(&text, common.output.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Screen { common, forbidden } => {
            let mut extra = KeyValues::new();
            if let Some(f) = forbidden {
                extra.insert("forbidden".into(), f);
            }
            let config = load_config(&common, extra)?;
            let table = load_table(&config)?;
            let report = run_screen(&table, &config)?;
            emit(&report.render(config.format), common.output.as_deref())?;
            summarize(&report);
            Ok(EXIT_OK)
        }
        Command::Synth { spec, output } => {
            let spec = SynthSpec::from_text(&read(&spec)?)?;
            let s = fairscope::generate(&spec)?;
            emit(&s.table.to_csv_string()?, output.as_deref())?;
            let c = s.clamped;
            if c.truth + c.pred + c.ratings > 0 {
                eprintln!(
                    "fairscope: clamped to scale: {} truth, {} prediction, {} rating values",
                    c.truth, c.pred, c.ratings
                );
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("fairscope: error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
