use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use keyswitch_core::audit::verify_log;
use keyswitch_core::blackbox::{export_snapshot, replay, BlackBox};
use keyswitch_core::command::{Operator, OperatorPolicy, PolicyMode};
use keyswitch_core::conformance::run_conformance;
use keyswitch_core::runner::run_scenario;
use keyswitch_core::sim::scenario::load_scenario;
use keyswitch_core::events::Event;
use keyswitch_core::{
    acoustics_names, activity_names, markings_names, possession_names, CharacteristicVector, Tick,
};

const SCHEMA_ERROR: u8 = 2;
const INVARIANT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "keyswitch", version, about = "Run, replay and audit codified-key safety switch scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OperatorArg {
    Scripted,
    Deny,
    Prompt,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to quiescence and print its compliance report.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_ticks: Option<u64>,
        /// Black-box log output.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Compliance report output (JSON); printed to stdout regardless.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum)]
        operator: Option<OperatorArg>,
    },
    /// Re-derive the summary from a log, or export a snapshot at a tick.
    Replay {
        log: PathBuf,
        #[arg(long)]
        snapshot: Option<u64>,
        /// List every record instead of the summary.
        #[arg(long, conflicts_with = "snapshot")]
        events: bool,
    },
    /// Re-check the safety invariants over a finished log.
    Verify { log: PathBuf },
    /// Run the codec golden-vector suite.
    Conformance {
        #[arg(long, default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/ckss"))]
        corpus: PathBuf,
    },
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("keyswitch: {message}");
    ExitCode::from(code)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn run(
    path: &Path,
    seed: Option<u64>,
    max_ticks: Option<u64>,
    log_path: Option<&Path>,
    report_path: Option<&Path>,
    operator: Option<OperatorArg>,
) -> ExitCode {
    let doc = match fs::read_to_string(path) {
        Ok(d) => d,
        Err(e) => return fail(SCHEMA_ERROR, format!("{}: {e}", path.display())),
    };
    let mut scenario = match load_scenario(&doc) {
        Ok(s) => s,
        Err(e) => return fail(SCHEMA_ERROR, format!("{}: {e}", path.display())),
    };
    if let Some(s) = seed {
        scenario.seed = s;
    }
    if let Some(m) = max_ticks {
        scenario.max_ticks = m;
    }
    let mut policy = scenario.operator.clone();
    match operator {
        Some(OperatorArg::Scripted) => policy.mode = PolicyMode::ScriptedTable,
        Some(OperatorArg::Deny) => policy = OperatorPolicy::always_deny(),
        Some(OperatorArg::Prompt) => policy.mode = PolicyMode::InteractivePrompt,
        None => {}
    }
    let op = if policy.mode == PolicyMode::InteractivePrompt {
        Operator::with_console(policy, Box::new(BufReader::new(io::stdin())), Box::new(io::stderr()))
    } else {
        Operator::new(policy)
    };
    let done = run_scenario(scenario, op);
    if let Some(p) = log_path {
        if let Err(e) = done.log.write_to(p) {
            return fail(1, format!("{}: {e}", p.display()));
        }
    }
    let report = to_json(&done.report());
    println!("{report}");
    if let Some(p) = report_path {
        if let Err(e) = fs::write(p, &report) {
            return fail(1, format!("{}: {e}", p.display()));
        }
    }
    let violations = verify_log(done.log.records());
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{v}");
        }
        return fail(INVARIANT_VIOLATION, format!("{} invariant violation(s)", violations.len()));
    }
    ExitCode::SUCCESS
}

fn flags(cv: &CharacteristicVector) -> String {
    let mut names = activity_names(cv.activity.value);
    names.extend(possession_names(cv.possession.value));
    names.extend(markings_names(cv.markings.value));
    names.extend(acoustics_names(cv.acoustics.value));
    names.join(" ")
}

/// One-line rendering of a record's event.
fn brief(e: &Event) -> String {
    match e {
        Event::ScenarioLoaded { name, seed, entities } => {
            format!("ScenarioLoaded {name} seed {seed} entities {}", entities.len())
        }
        Event::KeyGenerated { key } | Event::KeyReceived { key, .. } => format!(
            "{} {} {} {} {} [{}]",
            e.name(),
            key.triple(),
            key.nature,
            key.status,
            key.role,
            flags(&key.characteristics)
        ),
        Event::Evaluated { key, rules, .. } => format!(
            "Evaluated {} vicinity {}+{} rules {:?}",
            key.triple(),
            key.vicinity_targets.len(),
            key.vicinity_friendlies.len(),
            rules.iter().map(ToString::to_string).collect::<Vec<_>>()
        ),
        Event::Dispatched { action } => {
            format!("Dispatched {} target {:?} by {}", action.kind, action.target, action.caused_by)
        }
        other => format!("{other:?}"),
    }
}

fn read_log(path: &Path) -> Result<BlackBox, ExitCode> {
    BlackBox::read_from(path).map_err(|e| fail(INVARIANT_VIOLATION, format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, seed, max_ticks, log, report, operator } => {
            run(&scenario, seed, max_ticks, log.as_deref(), report.as_deref(), operator)
        }
        Command::Replay { log, snapshot, events } => {
            let log = match read_log(&log) {
                Ok(l) => l,
                Err(code) => return code,
            };
            if let Some(t) = snapshot {
                return match export_snapshot(&log, Tick(t)) {
                    Ok(doc) => {
                        print!("{doc}");
                        ExitCode::SUCCESS
                    }
                    Err(e) => fail(1, e),
                };
            }
            match replay(&log) {
                Ok(r) if events => {
                    for rec in &r.records {
                        println!("{:>6} {:>4} {:<10} {}", rec.seq, rec.tick.0, rec.actor.name, brief(&rec.event));
                    }
                    ExitCode::SUCCESS
                }
                Ok(r) => {
                    println!("{}", to_json(&r.summary));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(INVARIANT_VIOLATION, e),
            }
        }
        Command::Verify { log } => {
            let log = match read_log(&log) {
                Ok(l) => l,
                Err(code) => return code,
            };
            let violations = verify_log(log.records());
            for v in &violations {
                println!("{v}");
            }
            if violations.is_empty() {
                println!("ok: {} records, no violations", log.len());
                ExitCode::SUCCESS
            } else {
                fail(INVARIANT_VIOLATION, format!("{} invariant violation(s)", violations.len()))
            }
        }
        Command::Conformance { corpus } => match run_conformance(&corpus) {
            Ok(report) => {
                for line in &report.lines {
                    println!("{line}");
                }
                if report.failures == 0 {
                    ExitCode::SUCCESS
                } else {
                    fail(1, format!("{} conformance failure(s)", report.failures))
                }
            }
            Err(e) => fail(SCHEMA_ERROR, e),
        },
    }
}
