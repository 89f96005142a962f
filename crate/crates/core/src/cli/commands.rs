use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xmlprompt::engine::{hole_filler, EngineError, IterationReport};
use xmlprompt::grammar::{
    compile_ebnf, constrained_sample, constrained_sample_filtered, token_mask, Grammar,
    SampleError, SampleOutcome, UniformPolicy, Vocabulary,
};
use xmlprompt::invariant::{
    check as check_one, parse_invariants, pruning_filter, Invariant, Verdict,
};
use xmlprompt::metric::{estimate_contraction, MetricConfig};
use xmlprompt::protocol::spec::{self, Execution, Runnable};
use xmlprompt::protocol::transcript::{
    failure_report, iteration_report, run_report, write_snapshots,
};
use xmlprompt::protocol::{ProtocolError, RunStatus};
use xmlprompt::tree::{parse_document, ContentSpec, XmlTree};

use super::config::RunConfig;
use super::{CliError, Outcome};

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// File contents minus one trailing line break, which editors add.
fn read_text(path: &Path) -> Result<String, CliError> {
    let mut s = read(path)?;
    if s.ends_with('\n') {
        s.pop();
        if s.ends_with('\r') {
            s.pop();
        }
    }
    Ok(s)
}

fn load_grammar(path: &Path, start: Option<&str>) -> Result<Arc<Grammar>, CliError> {
    let g = compile_ebnf(&read(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    match start {
        Some(rule) => g
            .with_start(rule)
            .map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(g),
    }
}

fn load_vocab(path: &Path) -> Result<Vocabulary, CliError> {
    Vocabulary::parse(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_invariants(path: &Path) -> Result<Vec<Invariant>, CliError> {
    parse_invariants(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Escapes a text so it fits on one report line.
fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

pub fn validate(grammar: &Path, document: &Path, start: Option<&str>) -> Result<Outcome, CliError> {
    let g = load_grammar(grammar, start)?;
    let doc = read_text(document)?;
    if g.accepts(&doc) {
        return Ok(Outcome::ok("accepted=true\n# summary\nresult=ok\n".into()));
    }
    let mut out = String::from("accepted=false\n");
    match g.first_dead_offset(&doc) {
        Some(off) => {
            let (line, col) = line_col(&doc, off);
            let token = doc[..=off].rfind('<').unwrap_or(off);
            let _ = writeln!(out, "first_dead_offset={off}");
            let _ = writeln!(out, "line={line}\ncolumn={col}");
            let _ = writeln!(out, "token_offset={token}");
            let _ = writeln!(
                out,
                "char={}",
                escape(&doc[off..].chars().next().unwrap_or(' ').to_string())
            );
        }
        None => {
            let _ = writeln!(out, "first_dead_offset=none\nincomplete_at={}", doc.len());
        }
    }
    out.push_str("# summary\nresult=rejected\n");
    Ok(Outcome::failed(out))
}

pub fn mask(grammar: &Path, prefix: &Path, vocab: &Path) -> Result<Outcome, CliError> {
    let g = load_grammar(grammar, None)?;
    let v = load_vocab(vocab)?;
    let prefix = read_text(prefix)?;
    let state = g
        .initial_state()
        .map_err(|e| CliError::Usage(e.to_string()))?
        .advance(&prefix);
    if !state.is_viable() {
        let off = g.first_dead_offset(&prefix).unwrap_or(prefix.len());
        return Err(CliError::Semantic(format!(
            "non-viable prefix: dead at offset {off}"
        )));
    }
    let m = token_mask(&state, &v)
        .map_err(|e| CliError::Semantic(format!("non-viable prefix: {e}")))?;
    let mut out = String::new();
    for i in m.iter() {
        out.push_str(&escape(v.token(i)));
        out.push('\n');
    }
    Ok(Outcome::ok(out))
}

pub fn sample(
    cfg: &RunConfig,
    grammar: &Path,
    vocab: Option<&Path>,
    invariants: Option<&Path>,
) -> Result<Outcome, CliError> {
    let g = load_grammar(grammar, None)?;
    let v = match vocab {
        Some(p) => load_vocab(p)?,
        None => Vocabulary::printable_ascii(),
    };
    let filters = match invariants {
        Some(p) => load_invariants(p)?
            .iter()
            .map(pruning_filter)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => Vec::new(),
    };
    let s = &cfg.sample;
    let mut out = String::new();
    let (mut complete, mut partial, mut failed) = (0, 0, 0);
    for i in 0..s.count {
        let seed = cfg.seed().wrapping_add(i as u64);
        let mut policy = UniformPolicy::new(seed, s.stop_prob);
        let res: Result<SampleOutcome, SampleError> = if filters.is_empty() {
            constrained_sample(&g, &v, &mut policy, s.max_tokens)
        } else {
            let mut keep = |p: &str| filters.iter().all(|f| f.verdict_text(p) != Verdict::Prune);
            constrained_sample_filtered(&g, &v, &mut policy, s.max_tokens, &mut keep)
        };
        match res {
            Ok(o) => {
                let status = if o.is_complete() {
                    complete += 1;
                    "complete"
                } else {
                    partial += 1;
                    "partial"
                };
                let _ = writeln!(
                    out,
                    "sample={i} seed={seed} status={status} text={}",
                    escape(o.text())
                );
            }
            Err(e) => {
                failed += 1;
                let _ = writeln!(
                    out,
                    "sample={i} seed={seed} status=error error={}",
                    escape(&e.to_string())
                );
            }
        }
    }
    let _ = writeln!(
        out,
        "# summary\ncomplete={complete}\npartial={partial}\nerrors={failed}"
    );
    let _ = writeln!(out, "result={}", if failed == 0 { "ok" } else { "error" });
    Ok(if failed == 0 {
        Outcome::ok(out)
    } else {
        Outcome::failed(out)
    })
}

fn engine_code(e: &EngineError) -> CliError {
    match e {
        EngineError::Metric(_) | EngineError::EmptyComposition => CliError::Usage(e.to_string()),
        _ => CliError::Semantic(e.to_string()),
    }
}

fn load_spec(cfg: &RunConfig, path: &Path) -> Result<Runnable, CliError> {
    spec::load(path, &cfg.overrides()).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn iterate(cfg: &RunConfig, spec_path: &Path, out_dir: &Path) -> Result<Outcome, CliError> {
    let mut runnable = load_spec(cfg, spec_path)?;
    let kind = runnable.kind_name();
    let io = |e: std::io::Error| CliError::Usage(format!("{}: {e}", out_dir.display()));
    let (report, snapshots, code) = match runnable.execute() {
        Execution::Protocol(Ok(run)) => {
            let code = u8::from(run.status != RunStatus::Answered);
            (run_report(kind, &run), run.snapshots().to_vec(), code)
        }
        Execution::Protocol(Err(f)) => {
            if matches!(f.error, ProtocolError::Spec(_)) {
                return Err(CliError::Usage(f.error.to_string()));
            }
            (failure_report(kind, &f), f.snapshots, 1)
        }
        Execution::Iteration(Ok(r)) => {
            let code = u8::from(r.fixed_point.is_none());
            (iteration_report(kind, &r), r.iterates, code)
        }
        Execution::Iteration(Err(e)) => {
            let err = engine_code(&e);
            if let (CliError::Semantic(_), EngineError::BudgetExceeded { max_steps, last }) =
                (&err, &e)
            {
                let text = format!("kind={kind}\nstatus=error\nerror={e}\nsteps={max_steps}\n# summary\nresult=error\n");
                write_snapshots(out_dir, std::slice::from_ref(last.as_ref())).map_err(io)?;
                fs::write(out_dir.join("report.txt"), &text).map_err(io)?;
                return Ok(Outcome::failed(text));
            }
            return Err(err);
        }
    };
    write_snapshots(out_dir, &snapshots).map_err(io)?;
    fs::write(out_dir.join("report.txt"), &report).map_err(io)?;
    Ok(Outcome {
        stdout: report,
        code,
    })
}

pub fn check(invariants: &Path, document: &Path) -> Result<Outcome, CliError> {
    let invs = load_invariants(invariants)?;
    let doc = parse_document(&read_text(document)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", document.display())))?;
    let mut out = String::new();
    let mut failing = 0;
    for inv in &invs {
        let r = check_one(inv, &doc);
        let _ = write!(out, "invariant={} holds={}", inv.name, r.holds);
        if let Some(p) = &r.violation {
            failing += 1;
            let _ = write!(out, " violation={p}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "# summary\nchecked={}\nfailing={failing}", invs.len());
    let _ = writeln!(
        out,
        "result={}",
        if failing == 0 { "ok" } else { "violated" }
    );
    Ok(if failing == 0 {
        Outcome::ok(out)
    } else {
        Outcome::failed(out)
    })
}

/// The hole-filler start tree with a random ancestor-closed set of nodes
/// filled: each node whose parent is filled is itself filled with
/// probability one half.
fn random_fill(start: &XmlTree, rng: &mut ChaCha8Rng) -> XmlTree {
    let mut t = start.clone();
    let paths: Vec<_> = t.paths().cloned().collect();
    for p in paths {
        let parent_filled = p
            .parent()
            .is_none_or(|q| t.get(&q).is_some_and(|l| l.content.is_literal()));
        if parent_filled && rng.gen_bool(0.5) {
            if let Some(l) = t.label_mut(&p) {
                l.content = ContentSpec::literal("v");
            }
        }
    }
    t
}

fn q_lines(out: &mut String, r: &IterationReport) {
    match r.q_hat {
        Some(q) => {
            let _ = writeln!(out, "q_hat={q:.12}");
        }
        None => out.push_str("q_hat=none\n"),
    }
    let _ = writeln!(out, "steps={}", r.steps);
}

pub fn estimate_q(cfg: &RunConfig, spec_path: &Path) -> Result<Outcome, CliError> {
    let mut runnable = load_spec(cfg, spec_path)?;
    let kind = runnable.kind_name();
    let mut out = format!("kind={kind}\n");
    let q_hat = match (&runnable, runnable_params(&runnable)) {
        (Runnable::HoleFiller { .. }, Some((arity, depth, metric))) => {
            let _ = writeln!(out, "analytic_q={:.12}", arity as f64 / 4.0);
            let report = match runnable.execute() {
                Execution::Iteration(r) => r.map_err(|e| engine_code(&e))?,
                Execution::Protocol(_) => unreachable!("hole filler runs an iteration"),
            };
            q_lines(&mut out, &report);
            pair_estimate(&mut out, cfg, arity, depth, &metric)?;
            report.q_hat
        }
        _ => {
            let report = match runnable.execute() {
                Execution::Protocol(Ok(run)) => run.report,
                Execution::Protocol(Err(f)) => return Err(CliError::Semantic(f.error.to_string())),
                Execution::Iteration(_) => unreachable!("protocol specs run protocols"),
            };
            q_lines(&mut out, &report);
            report.q_hat
        }
    };
    let contracting = q_hat.is_some_and(|q| q < 1.0);
    let _ = writeln!(
        out,
        "# summary\nresult={}",
        if contracting {
            "contraction"
        } else {
            "no_contraction"
        }
    );
    Ok(if contracting {
        Outcome::ok(out)
    } else {
        Outcome::failed(out)
    })
}

fn runnable_params(r: &Runnable) -> Option<(usize, usize, MetricConfig)> {
    match r {
        Runnable::HoleFiller {
            arity,
            depth,
            metric,
            ..
        } => Some((*arity, *depth, *metric)),
        Runnable::Protocol { .. } => None,
    }
}

fn pair_estimate(
    out: &mut String,
    cfg: &RunConfig,
    arity: usize,
    depth: usize,
    metric: &MetricConfig,
) -> Result<(), CliError> {
    let pairs = cfg.estimate.pairs;
    let _ = writeln!(out, "pairs={pairs}");
    if pairs == 0 {
        return Ok(());
    }
    let (start, t) = hole_filler(arity, depth);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let mut sampler = || (random_fill(&start, &mut rng), random_fill(&start, &mut rng));
    match estimate_contraction(|x: &XmlTree| t.apply(x), &mut sampler, metric, pairs) {
        Ok(est) => {
            let _ = writeln!(out, "pairs_used={}\nq_pairs={:.12}", est.pairs_used, est.q);
        }
        Err(e) => {
            let _ = writeln!(out, "pairs_used=0\nq_pairs=none\npairs_error={e}");
        }
    }
    Ok(())
}
