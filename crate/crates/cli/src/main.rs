//! Command-line front end: validate an input document, compute per-flow
//! delay bounds, sweep buffer sizes, compare analysis modes, and
//! cross-check the bounds against the flit-level simulator.
//!
//! Exit codes: 0 = valid / all flows schedulable; 1 = some flow misses its
//! deadline; 2 = unreadable or invalid input, or an unstable instance;
//! 3 = the simulator observed a latency above an analytic bound (a bug in
//! one of the two). Diagnostics go to stderr; data to stdout or `--output`.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use flitbound::analysis::{analyze_all, AnalysisReport, FlowResult};
use flitbound::blocking::BlockingMode;
use flitbound::config::{parse_document, ParsedInput};
use flitbound::model::{validate, Violation};
use flitbound::sim::{sweep_offsets, SimOutcome};

#[derive(Parser)]
#[command(
    name = "flitbound",
    version,
    about = "Worst-case delay bounds for wormhole-switched networks-on-chip"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum ModeArg {
    BufferAware,
    Conventional,
    Both,
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum SingleModeArg {
    BufferAware,
    Conventional,
}

impl From<SingleModeArg> for BlockingMode {
    fn from(m: SingleModeArg) -> BlockingMode {
        match m {
            SingleModeArg::BufferAware => BlockingMode::BufferAware,
            SingleModeArg::Conventional => BlockingMode::Conventional,
        }
    }
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check a document against the schema and the structural rules.
    Validate {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compute per-flow delay bounds and verdicts.
    Analyze {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::BufferAware)]
        mode: ModeArg,
        /// Override the document's buffer size (bytes).
        #[arg(long)]
        buffer: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Recompute the bounds over a range of buffer sizes.
    Sweep {
        input: PathBuf,
        /// Smallest buffer size (bytes), at least 1.
        #[arg(long)]
        buffer_min: f64,
        /// Largest buffer size (bytes).
        #[arg(long)]
        buffer_max: f64,
        /// Increment between sweep points (bytes), at least 1.
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long, value_enum, default_value_t = SingleModeArg::BufferAware)]
        mode: SingleModeArg,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Analyze in both modes side by side (same as `analyze --mode both`).
    Compare {
        input: PathBuf,
        #[arg(long)]
        buffer: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate and compare observed latencies against the bounds.
    Simulate {
        input: PathBuf,
        /// Override the document's trial count.
        #[arg(long)]
        trials: Option<u32>,
        /// Override the document's random seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Validate { input, format, output } => cmd_validate(&input, format, output),
        Command::Analyze { input, mode, buffer, format, output } => {
            cmd_analyze(&input, mode, buffer, format, output)
        }
        Command::Compare { input, buffer, format, output } => {
            cmd_analyze(&input, ModeArg::Both, buffer, format, output)
        }
        Command::Sweep { input, buffer_min, buffer_max, step, mode, format, output } => {
            cmd_sweep(&input, buffer_min, buffer_max, step, mode.into(), format, output)
        }
        Command::Simulate { input, trials, seed, format, output } => {
            cmd_simulate(&input, trials, seed, format, output)
        }
    }
}

fn load(path: &PathBuf) -> Result<ParsedInput, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_document(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn emit(output: Option<PathBuf>, content: &str) -> Result<(), String> {
    match output {
        Some(path) => {
            fs::write(&path, content).map_err(|e| format!("{}: {e}", path.display()))
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Render a float for humans: up to six decimals, no trailing zeros.
fn num(v: f64) -> String {
    let s = format!("{v:.6}");
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    if trimmed.is_empty() { "0".to_string() } else { trimmed.to_string() }
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), num)
}

/// Gate analysis on structural violations only. Stability violations
/// (overloaded ports, oversubscribed shares) are warned about on stderr and
/// passed through: the analysis itself turns them into "unstable" verdicts,
/// which is more informative than refusing to run.
fn admit(input: &ParsedInput) -> bool {
    let report = validate(&input.model, &input.flows);
    let structural: Vec<&Violation> = report
        .violations
        .iter()
        .filter(|v| {
            matches!(v, Violation::BufferTooSmall { .. } | Violation::CyclicDependency { .. })
        })
        .collect();
    if !structural.is_empty() {
        for v in &structural {
            eprintln!("invalid: {v}");
        }
        return false;
    }
    for v in &report.violations {
        eprintln!("warning: {v}");
    }
    true
}

/// Left-pad every column to its widest cell; two spaces between columns.
fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let joined: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:<width$}", width = widths[i]))
            .collect();
        let _ = writeln!(out, "{}", joined.join("  ").trim_end());
    };
    line(headers.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

fn render_csv(headers: &[&str], rows: &[Vec<String>]) -> Result<String, String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers).map_err(|e| e.to_string())?;
    for row in rows {
        w.write_record(row).map_err(|e| e.to_string())?;
    }
    String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// validate

fn cmd_validate(path: &PathBuf, format: Format, output: Option<PathBuf>) -> Result<u8, String> {
    let input = load(path)?;
    let report = validate(&input.model, &input.flows);
    let content = match format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&report).unwrap()),
        Format::Table => {
            if report.is_valid() {
                "valid\n".to_string()
            } else {
                let rows: Vec<Vec<String>> =
                    report.violations.iter().map(|v| vec![v.to_string()]).collect();
                render_table(&["violation"], &rows)
            }
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> =
                report.violations.iter().map(|v| vec![v.to_string()]).collect();
            render_csv(&["violation"], &rows)?
        }
    };
    emit(output, &content)?;
    if report.is_valid() {
        Ok(0)
    } else {
        eprintln!("invalid: {} violation(s)", report.violations.len());
        Ok(2)
    }
}

// ---------------------------------------------------------------------------
// analyze / compare

const FLOW_COLUMNS: [&str; 7] = ["flow", "D_TR", "D_DB", "D_IB", "D_eed", "deadline", "verdict"];

fn flow_row(f: &FlowResult) -> Vec<String> {
    vec![
        f.flow.clone(),
        num(f.d_tr),
        opt_num(f.d_db),
        opt_num(f.d_ib),
        opt_num(f.d_eed),
        num(f.deadline),
        f.verdict.to_string(),
    ]
}

fn exit_for(reports: &[&AnalysisReport]) -> u8 {
    if reports.iter().any(|r| r.any_unstable()) {
        2
    } else if reports.iter().all(|r| r.all_schedulable()) {
        0
    } else {
        1
    }
}

fn cmd_analyze(
    path: &PathBuf,
    mode: ModeArg,
    buffer: Option<f64>,
    format: Format,
    output: Option<PathBuf>,
) -> Result<u8, String> {
    let input = load(path)?;
    if !admit(&input) {
        return Ok(2);
    }
    let buffer = buffer.unwrap_or(input.model.buffer);
    let analyze = |m: BlockingMode| {
        analyze_all(&input.model, &input.flows, m, buffer).map_err(|e| e.to_string())
    };

    match mode {
        ModeArg::BufferAware | ModeArg::Conventional => {
            let m = if mode == ModeArg::BufferAware {
                BlockingMode::BufferAware
            } else {
                BlockingMode::Conventional
            };
            let report = analyze(m)?;
            let rows: Vec<Vec<String>> = report.flows.iter().map(flow_row).collect();
            let content = match format {
                Format::Table => format!(
                    "mode: {}  buffer: {}\n{}",
                    report.mode,
                    num(report.buffer),
                    render_table(&FLOW_COLUMNS, &rows)
                ),
                Format::Csv => render_csv(&FLOW_COLUMNS, &rows)?,
                Format::Json => {
                    format!("{}\n", serde_json::to_string_pretty(&report).unwrap())
                }
            };
            emit(output, &content)?;
            Ok(exit_for(&[&report]))
        }
        ModeArg::Both => {
            let aware = analyze(BlockingMode::BufferAware)?;
            let conventional = analyze(BlockingMode::Conventional)?;
            let delta_rows: Vec<Vec<String>> = aware
                .flows
                .iter()
                .zip(&conventional.flows)
                .map(|(a, c)| {
                    let delta = match (a.d_eed, c.d_eed) {
                        (Some(x), Some(y)) => Some(y - x),
                        _ => None,
                    };
                    vec![
                        a.flow.clone(),
                        opt_num(a.d_eed),
                        opt_num(c.d_eed),
                        opt_num(delta),
                    ]
                })
                .collect();
            let delta_columns = ["flow", "D_eed_aware", "D_eed_conventional", "delta"];
            let content = match format {
                Format::Table => {
                    let mut s = String::new();
                    for report in [&aware, &conventional] {
                        let rows: Vec<Vec<String>> =
                            report.flows.iter().map(flow_row).collect();
                        let _ = write!(
                            s,
                            "mode: {}  buffer: {}\n{}\n",
                            report.mode,
                            num(report.buffer),
                            render_table(&FLOW_COLUMNS, &rows)
                        );
                    }
                    let _ = write!(s, "{}", render_table(&delta_columns, &delta_rows));
                    s
                }
                Format::Csv => {
                    let mut headers = vec!["mode"];
                    headers.extend(FLOW_COLUMNS);
                    let mut rows = Vec::new();
                    for report in [&aware, &conventional] {
                        for f in &report.flows {
                            let mut row = vec![report.mode.to_string()];
                            row.extend(flow_row(f));
                            rows.push(row);
                        }
                    }
                    render_csv(&headers, &rows)?
                }
                Format::Json => {
                    let combined = serde_json::json!({
                        "buffer_aware": aware,
                        "conventional": conventional,
                    });
                    format!("{}\n", serde_json::to_string_pretty(&combined).unwrap())
                }
            };
            emit(output, &content)?;
            Ok(exit_for(&[&aware, &conventional]))
        }
    }
}

// ---------------------------------------------------------------------------
// sweep

fn cmd_sweep(
    path: &PathBuf,
    buffer_min: f64,
    buffer_max: f64,
    step: f64,
    mode: BlockingMode,
    format: Format,
    output: Option<PathBuf>,
) -> Result<u8, String> {
    if !(buffer_min >= 1.0 && step >= 1.0 && buffer_min <= buffer_max) {
        return Err(format!(
            "sweep range must satisfy min >= 1, step >= 1, min <= max \
             (got min {buffer_min}, max {buffer_max}, step {step})"
        ));
    }
    let input = load(path)?;
    if !admit(&input) {
        return Ok(2);
    }

    let mut buffers = Vec::new();
    let mut b = buffer_min;
    while b <= buffer_max + 1e-9 {
        buffers.push(b);
        b += step;
    }

    let reports: Vec<AnalysisReport> = buffers
        .par_iter()
        .map(|&buffer| analyze_all(&input.model, &input.flows, mode, buffer))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;

    let headers = ["buffer", "flow", "D_eed", "verdict"];
    let mut rows: Vec<Vec<String>> = Vec::new();
    for report in &reports {
        for f in &report.flows {
            rows.push(vec![
                num(report.buffer),
                f.flow.clone(),
                opt_num(f.d_eed),
                f.verdict.to_string(),
            ]);
        }
    }
    let content = match format {
        Format::Csv => render_csv(&headers, &rows)?,
        Format::Table => render_table(&headers, &rows),
        Format::Json => {
            let points: Vec<serde_json::Value> = reports
                .iter()
                .flat_map(|report| {
                    report.flows.iter().map(|f| {
                        serde_json::json!({
                            "buffer": report.buffer,
                            "flow": f.flow,
                            "D_eed": f.d_eed,
                            "verdict": f.verdict,
                        })
                    })
                })
                .collect();
            format!("{}\n", serde_json::to_string_pretty(&points).unwrap())
        }
    };
    emit(output, &content)?;
    if reports.iter().any(|r| r.any_unstable()) {
        eprintln!("instance is unstable; the sweep carries no finite bounds");
        return Ok(2);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// simulate

fn cmd_simulate(
    path: &PathBuf,
    trials: Option<u32>,
    seed: Option<u64>,
    format: Format,
    output: Option<PathBuf>,
) -> Result<u8, String> {
    let input = load(path)?;
    if !admit(&input) {
        return Ok(2);
    }
    let Some(mut settings) = input.sim.clone() else {
        return Err(format!("{}: no sim section in the document", path.display()));
    };
    if let Some(t) = trials {
        settings.trials = t;
    }
    if let Some(s) = seed {
        settings.seed = s;
    }

    let bounds = analyze_all(
        &input.model,
        &input.flows,
        BlockingMode::BufferAware,
        input.model.buffer,
    )
    .map_err(|e| e.to_string())?;
    if bounds.any_unstable() {
        eprintln!("instance is unstable; nothing to compare the simulation against");
        return Ok(2);
    }

    let report = sweep_offsets(&input.model, &input.flows, &settings);
    if let SimOutcome::Deadlock { time, undelivered_flits } = &report.outcome {
        eprintln!(
            "simulation deadlocked at t={} with {} undelivered flit(s); \
             check flit size against buffer sizes",
            num(*time),
            undelivered_flits
        );
        return Ok(2);
    }

    // A contention-free flow sits mathematically ON its bound, and event
    // times accumulate one rounding per flit grant at the magnitude of the
    // absolute clock, so an exactly-tight latency can come out a few
    // hundred ulps above the bound it equals. The guard recognizes that
    // equality; a genuine soundness bug overshoots at flit-time scale,
    // many orders of magnitude larger.
    const FP_NOISE: f64 = 1e-8;
    let mut violation = false;
    let headers = ["flow", "packets", "observed_max", "D_eed", "ratio"];
    let rows: Vec<Vec<String>> = report
        .flows
        .iter()
        .zip(&bounds.flows)
        .map(|(s, b)| {
            let bound = b.d_eed.expect("stability checked above");
            let ratio = s.max_latency.map(|m| m / bound);
            if s.max_latency.is_some_and(|m| m > bound + FP_NOISE) {
                violation = true;
            }
            vec![
                s.flow.clone(),
                s.packets_delivered.to_string(),
                opt_num(s.max_latency),
                num(bound),
                ratio.map_or_else(|| "-".to_string(), |r| format!("{r:.4}")),
            ]
        })
        .collect();

    let content = match format {
        Format::Table => render_table(&headers, &rows),
        Format::Csv => render_csv(&headers, &rows)?,
        Format::Json => {
            let comparison: Vec<serde_json::Value> = report
                .flows
                .iter()
                .zip(&bounds.flows)
                .map(|(s, b)| {
                    let bound = b.d_eed.unwrap();
                    serde_json::json!({
                        "flow": s.flow,
                        "packets": s.packets_delivered,
                        "observed_max": s.max_latency,
                        "D_eed": bound,
                        "ratio": s.max_latency.map(|m| m / bound),
                    })
                })
                .collect();
            let combined = serde_json::json!({
                "simulation": serde_json::to_value(&report).unwrap(),
                "comparison": comparison,
            });
            format!("{}\n", serde_json::to_string_pretty(&combined).unwrap())
        }
    };
    emit(output, &content)?;
    if violation {
        eprintln!("soundness violation: observed latency above an analytic bound");
        return Ok(3);
    }
    Ok(0)
}
