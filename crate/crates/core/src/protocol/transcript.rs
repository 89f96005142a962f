//! Transcript directories: `snapshot_NNN.xml` per snapshot and a
//! line-oriented `report.txt` of `key=value` records.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::engine::{EngineWarning, IterationReport};
use crate::tree::{serialize_partial, XmlTree};

use super::{ProtocolRun, RunFailure, RunStats, RunStatus};

pub fn write_snapshots(dir: &Path, snapshots: &[XmlTree]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (i, t) in snapshots.iter().enumerate() {
        let text = serialize_partial(t)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        fs::write(dir.join(format!("snapshot_{i:03}.xml")), text + "\n")?;
    }
    Ok(())
}

fn iteration_lines(out: &mut String, r: &IterationReport) {
    out.push_str(&r.log_lines());
    match r.q_hat {
        Some(q) => {
            let _ = writeln!(out, "q_hat={q:.12}");
        }
        None => out.push_str("q_hat=none\n"),
    }
    let _ = writeln!(out, "fixed_point={}", r.fixed_point.is_some());
    for w in &r.warnings {
        let _ = match w {
            EngineWarning::NoContractionObserved { step, ratio } => {
                writeln!(out, "warning=no_contraction step={step} ratio={ratio:.12}")
            }
            EngineWarning::PruningShortfall {
                step,
                unresolved,
                resolved,
                required,
            } => writeln!(
                out,
                "warning=pruning_shortfall step={step} unresolved={unresolved} resolved={resolved} required={required}"
            ),
            EngineWarning::BoundViolated { step, observed, bound } => {
                writeln!(out, "warning=bound_violated step={step} observed={observed:.12} bound={bound:.12}")
            }
        };
    }
}

fn stats_lines(out: &mut String, s: &RunStats) {
    let _ = writeln!(out, "rounds={}", s.rounds);
    let _ = writeln!(out, "proposals={}", s.proposals);
    let _ = writeln!(out, "rejected_proposals={}", s.rejected_proposals);
    let _ = writeln!(out, "counterexamples={}", s.counterexamples);
    for w in &s.warnings {
        let _ = writeln!(out, "warning={w}");
    }
}

/// Report for a protocol run that reached its end.
pub fn run_report(kind: &str, run: &ProtocolRun) -> String {
    let mut out = format!("kind={kind}\n");
    match &run.status {
        RunStatus::Answered => out.push_str("status=answered\n"),
        RunStatus::ToolFailed(m) => {
            let _ = writeln!(out, "status=tool_failed\ntool_failure={m}");
        }
    }
    let _ = writeln!(out, "snapshots={}", run.report.iterates.len());
    stats_lines(&mut out, &run.stats);
    iteration_lines(&mut out, &run.report);
    for (name, r) in &run.verdicts {
        let _ = writeln!(out, "invariant={name} holds={}", r.holds);
    }
    if let Some(bus) = &run.bus {
        for m in bus.messages() {
            let consumed = bus.consumed().contains(&m.id);
            let _ = writeln!(
                out,
                "message id={} from={} to={} consumed={consumed}",
                m.id, m.from, m.to
            );
        }
    }
    out.push_str("# summary\n");
    let answered = run.status == RunStatus::Answered;
    let _ = writeln!(out, "result={}", if answered { "ok" } else { "no_answer" });
    out
}

pub fn failure_report(kind: &str, f: &RunFailure) -> String {
    let mut out = format!("kind={kind}\nstatus=error\nerror={}\n", f.error);
    let _ = writeln!(out, "snapshots={}", f.snapshots.len());
    stats_lines(&mut out, &f.stats);
    out.push_str("# summary\nresult=error\n");
    out
}

pub fn iteration_report(kind: &str, r: &IterationReport) -> String {
    let mut out = format!("kind={kind}\n");
    let _ = writeln!(out, "snapshots={}", r.iterates.len());
    let _ = writeln!(out, "steps={}", r.steps);
    iteration_lines(&mut out, r);
    out.push_str("# summary\n");
    let _ = writeln!(
        out,
        "result={}",
        if r.fixed_point.is_some() {
            "ok"
        } else {
            "no_fixed_point"
        }
    );
    out
}
