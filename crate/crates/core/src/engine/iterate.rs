use std::fmt::Write as _;

use crate::metric::{distance, MetricConfig, MetricError};
use crate::tree::{refines, ContentSpec, Node, NodeLabel, XmlTree};

use super::{Action, EngineError, Guard, Resolver, RewriteRule, Transformer};

#[derive(Debug, Clone, PartialEq)]
pub enum EngineWarning {
    /// A consecutive-distance ratio of at least 1 was seen at this step.
    NoContractionObserved { step: usize, ratio: f64 },
    /// A pass resolved fewer holes than the β condition requires.
    PruningShortfall {
        step: usize,
        unresolved: usize,
        resolved: usize,
        required: usize,
    },
    /// The observed distance to the final iterate exceeded the certified bound.
    BoundViolated {
        step: usize,
        observed: f64,
        bound: f64,
    },
}

/// The trace of one iteration run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationReport {
    /// `t_0, t_1, …`; a detected fixed point appears once, at the end.
    pub iterates: Vec<XmlTree>,
    pub fixed_point: Option<XmlTree>,
    /// Number of times the transformer was applied.
    pub steps: usize,
    /// `d(t_n, t_{n+1})` for every application.
    pub distances: Vec<f64>,
    /// Largest ratio of consecutive nonzero distances.
    pub q_hat: Option<f64>,
    /// `q̂^n / (1 − q̂) · d(t_1, t_0)` per iterate; empty unless `q̂ < 1`.
    pub bound_trace: Vec<f64>,
    /// `d(t_n, t_final)` per iterate.
    pub to_final: Vec<f64>,
    pub warnings: Vec<EngineWarning>,
}

impl IterationReport {
    /// Iterates that differ from their predecessor.
    pub fn productive_steps(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    pub fn last(&self) -> &XmlTree {
        self.iterates.last().expect("at least the start tree")
    }

    pub fn no_contraction(&self) -> bool {
        self.warnings
            .iter()
            .any(|w| matches!(w, EngineWarning::NoContractionObserved { .. }))
    }

    /// One line per iterate: index, distance to the next iterate, bound.
    pub fn log_lines(&self) -> String {
        let mut out = String::new();
        for n in 0..self.iterates.len() {
            let _ = write!(out, "step={n}");
            if let Some(d) = self.distances.get(n) {
                let _ = write!(out, " distance={d:.12}");
            }
            if let Some(b) = self.bound_trace.get(n) {
                let _ = write!(out, " bound={b:.12}");
            }
            if let Some(f) = self.to_final.get(n) {
                let _ = write!(out, " to_final={f:.12}");
            }
            out.push('\n');
        }
        out
    }
}

/// Iterates `t` from `start` until `t(x) = x`.
///
/// Every step is recorded; distances use the default metric.
pub fn kleene_iterate(
    t: &Transformer,
    start: XmlTree,
    max_steps: usize,
) -> Result<IterationReport, EngineError> {
    let cfg = MetricConfig::default();
    let mut report = IterationReport {
        iterates: vec![start.clone()],
        ..Default::default()
    };
    let mut cur = start;
    for step in 1..=max_steps {
        let next = t.apply(&cur)?;
        report.steps = step;
        if next == cur {
            report.distances.push(0.0);
            report.fixed_point = Some(cur);
            finish_to_final(&mut report, &cfg);
            return Ok(report);
        }
        report.distances.push(distance(&cur, &next, &cfg)?);
        report.iterates.push(next.clone());
        cur = next;
    }
    Err(EngineError::BudgetExceeded {
        max_steps,
        last: Box::new(cur),
    })
}

fn finish_to_final(report: &mut IterationReport, cfg: &MetricConfig) {
    let last = report.last().clone();
    report.to_final = report
        .iterates
        .iter()
        .map(|x| distance(x, &last, cfg).unwrap_or(f64::NAN))
        .collect();
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BanachOptions {
    /// Each pass must resolve at least `⌈(1 − β)·H⌉` of the `H` open holes.
    pub beta: Option<f64>,
}

fn count_holes(t: &XmlTree) -> usize {
    t.nodes()
        .values()
        .map(|l| {
            usize::from(l.content.is_hole()) + l.attrs.values().filter(|v| v.is_hole()).count()
        })
        .sum()
}

/// Iterates until consecutive iterates are within `eps`, then certifies the
/// tail bound with the observed contraction ratio.
pub fn banach_iterate(
    t: &Transformer,
    start: XmlTree,
    cfg: &MetricConfig,
    eps: f64,
    max_steps: usize,
    opts: BanachOptions,
) -> Result<IterationReport, EngineError> {
    if !(eps > 0.0) {
        return Err(
            crate::metric::MetricError::InvalidConfig("eps must be positive".into()).into(),
        );
    }
    let mut report = IterationReport {
        iterates: vec![start.clone()],
        ..Default::default()
    };
    let mut cur = start;
    for step in 1..=max_steps {
        let next = t.apply(&cur)?;
        report.steps = step;
        let d = distance(&cur, &next, cfg)?;
        report.distances.push(d);
        if let Some(beta) = opts.beta {
            let unresolved = count_holes(&cur);
            if unresolved > 0 {
                let resolved = unresolved.saturating_sub(count_holes(&next));
                let required = ((1.0 - beta) * unresolved as f64).ceil() as usize;
                if resolved < required {
                    report.warnings.push(EngineWarning::PruningShortfall {
                        step,
                        unresolved,
                        resolved,
                        required,
                    });
                }
            }
        }
        if next == cur {
            report.fixed_point = Some(cur);
            break;
        }
        report.iterates.push(next.clone());
        cur = next;
        if d <= eps {
            if t.apply(&cur)? == cur {
                report.fixed_point = Some(cur);
            }
            break;
        }
    }

    certify(&mut report, cfg, eps);
    Ok(report)
}

/// Fills `q_hat`, `to_final` and the tail bound from recorded distances.
fn certify(report: &mut IterationReport, cfg: &MetricConfig, slack: f64) {
    let mut q_hat: Option<f64> = None;
    for (n, w) in report.distances.windows(2).enumerate() {
        if w[0] > 0.0 {
            let ratio = w[1] / w[0];
            if ratio >= 1.0 {
                report
                    .warnings
                    .push(EngineWarning::NoContractionObserved { step: n + 1, ratio });
            }
            q_hat = Some(q_hat.map_or(ratio, |q| q.max(ratio)));
        }
    }
    report.q_hat = q_hat;
    finish_to_final(report, cfg);
    if let Some(q) = q_hat.filter(|q| *q < 1.0) {
        let d0 = report.distances[0];
        report.bound_trace = (0..report.iterates.len())
            .map(|n| q.powi(n as i32) / (1.0 - q) * d0)
            .collect();
        for (n, (&obs, &bound)) in report.to_final.iter().zip(&report.bound_trace).enumerate() {
            if obs > bound + slack + 1e-9 {
                report.warnings.push(EngineWarning::BoundViolated {
                    step: n,
                    observed: obs,
                    bound,
                });
            }
        }
    }
}

/// Builds a report for an externally produced chain of snapshots, such as
/// the rounds of a protocol run.
pub fn trace_report(
    iterates: Vec<XmlTree>,
    reached_fixed_point: bool,
    cfg: &MetricConfig,
) -> Result<IterationReport, MetricError> {
    let mut report = IterationReport {
        steps: iterates.len().saturating_sub(1),
        ..Default::default()
    };
    for w in iterates.windows(2) {
        report.distances.push(distance(&w[0], &w[1], cfg)?);
    }
    if reached_fixed_point {
        report.fixed_point = iterates.last().cloned();
    }
    report.iterates = iterates;
    if report.iterates.is_empty() {
        return Ok(report);
    }
    certify(&mut report, cfg, 0.0);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub checked: usize,
    /// Sampled pairs that were not comparable and so were skipped.
    pub skipped: usize,
    pub counterexample: Option<(XmlTree, XmlTree)>,
}

impl MonotoneReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Checks `t1 ⪯ t2 ⇒ T(t1) ⪯ T(t2)` on `n` sampled pairs. A failed
/// application counts as the top element.
pub fn check_monotone(
    t: &Transformer,
    sampler: &mut dyn FnMut() -> (XmlTree, XmlTree),
    n: usize,
) -> MonotoneReport {
    let mut report = MonotoneReport {
        checked: 0,
        skipped: 0,
        counterexample: None,
    };
    for _ in 0..n {
        let (a, b) = sampler();
        if !refines(&a, &b) {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        let ta = t.apply(&a).unwrap_or_else(|_| XmlTree::top());
        let tb = t.apply(&b).unwrap_or_else(|_| XmlTree::top());
        if !refines(&ta, &tb) {
            report.counterexample = Some((a, b));
            break;
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeastCheck {
    /// Candidates that were post-fixed points.
    pub post_fixed: usize,
    /// Indices of post-fixed candidates not above the claimed least fixed point.
    pub violations: Vec<usize>,
}

/// Checks `lfp ⪯ p` for every candidate `p` with `T(p) ⪯ p`.
pub fn check_least_fixed_point(
    t: &Transformer,
    lfp: &XmlTree,
    candidates: &[XmlTree],
) -> LeastCheck {
    let mut out = LeastCheck {
        post_fixed: 0,
        violations: Vec::new(),
    };
    for (i, p) in candidates.iter().enumerate() {
        let tp = t.apply(p).unwrap_or_else(|_| XmlTree::top());
        if refines(&tp, p) {
            out.post_fixed += 1;
            if !refines(lfp, p) {
                out.violations.push(i);
            }
        }
    }
    out
}

/// A complete `arity`-ary tree of the given depth with every content a hole,
/// and a transformer that fills one level per pass, top-down.
///
/// Under geometric weights with base 4 the consecutive distances shrink by
/// exactly `arity / 4`.
pub fn hole_filler(arity: usize, depth: usize) -> (XmlTree, Transformer) {
    fn build(arity: usize, depth: usize) -> Node {
        let mut n = Node::new(NodeLabel::new("n"));
        if depth > 0 {
            n.children = (0..arity).map(|_| build(arity, depth - 1)).collect();
        }
        n
    }
    let rule = RewriteRule::new(
        "fill",
        Guard::Or(vec![Guard::IsRoot, Guard::ParentLiteral]),
        Action::FillHole(Resolver::Constant(ContentSpec::literal("v"))),
    );
    (
        XmlTree::from_root(build(arity, depth)),
        Transformer::new(vec![rule]),
    )
}
