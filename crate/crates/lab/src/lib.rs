//! Experiment harness for the volume-constrained Allen-Cahn laboratory:
//! configuration, experiments, the independent 1D oracle, and report
//! emission.

pub mod align;
pub mod config;
pub mod error;
pub mod experiments;
pub mod oracle;
pub mod plot;
pub mod record;

pub use config::RunConfig;
pub use error::{LabError, LabResult};
pub use experiments::run;
pub use record::{emit_report, Format, Outcome, RunRecord};

use std::path::Path;
use std::time::Instant;

/// Every experiment subcommand, in CLI spelling.
pub const COMMANDS: [&str; 7] = [
    "solve",
    "sweep",
    "degenerate-eps",
    "check-calculus",
    "probe-generic",
    "census",
    "oracle1d",
];

/// Loads (or defaults) the config, resolves it for `command`, runs it, and
/// wraps the outcome into a record with wall-clock timing.
pub fn execute(command: &str, config: Option<&Path>, seed: Option<u64>) -> LabResult<RunRecord> {
    let cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = cfg.resolve(command, seed)?;
    let start = Instant::now();
    let outcome = run(&cfg)?;
    Ok(RunRecord::new(&cfg, outcome, Some(start.elapsed().as_secs_f64())))
}

/// Terminal summary: checks, notes, and tables short enough to read.
pub fn summary_text(record: &RunRecord, max_rows: usize) -> String {
    let mut s = String::new();
    for t in &record.tables {
        if t.rows.len() <= max_rows {
            s.push_str(&t.to_text());
        } else {
            s.push_str(&format!("# {} ({} rows; see {}.csv)\n", t.name, t.rows.len(), t.name));
        }
        s.push('\n');
    }
    for n in &record.notes {
        s.push_str(&format!("note: {n}\n"));
    }
    for c in &record.checks {
        s.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    s
}
