#![allow(dead_code)]

pub mod cfg;
pub mod mu;
pub mod partial;
pub mod transformers;
pub mod trees;

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xmlprompt::engine::{banach_iterate, hole_filler, BanachOptions};
use xmlprompt::metric::{distance, MetricConfig};
use xmlprompt::tree::{ContentSpec, DeweyPath, NodeLabel, XmlTree};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// Normalized edit distance `2·lev / (|a| + |b| + lev)`.
pub fn oracle_text_delta(a: &str, b: &str) -> f64 {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let lev = levenshtein(&a, &b) as f64;
    if lev == 0.0 {
        0.0
    } else {
        2.0 * lev / ((a.len() + b.len()) as f64 + lev)
    }
}

fn oracle_content_delta(a: &ContentSpec, b: &ContentSpec) -> f64 {
    match (a, b) {
        (ContentSpec::Literal(x), ContentSpec::Literal(y)) => oracle_text_delta(x, y),
        _ if a == b => 0.0,
        _ => 1.0,
    }
}

fn oracle_label_delta(a: &NodeLabel, b: &NodeLabel) -> f64 {
    if a.tag != b.tag {
        return 1.0;
    }
    let content = oracle_content_delta(&a.content, &b.content);
    let names: BTreeSet<&String> = a.attrs.keys().chain(b.attrs.keys()).collect();
    if names.is_empty() {
        return content;
    }
    let attrs = names
        .iter()
        .map(|k| match (a.attrs.get(*k), b.attrs.get(*k)) {
            (Some(x), Some(y)) => oracle_content_delta(x, y),
            _ => 1.0,
        })
        .sum::<f64>()
        / names.len() as f64;
    0.5 * attrs + 0.5 * content
}

/// The default metric computed path by path from its definition.
pub fn oracle_distance(a: &XmlTree, b: &XmlTree) -> f64 {
    let mut paths: BTreeSet<DeweyPath> = a.paths().chain(b.paths()).cloned().collect();
    paths.insert(DeweyPath::root());
    let weight = |p: &DeweyPath| 0.25f64.powi(p.depth() as i32);
    let z: f64 = paths.iter().map(weight).sum();
    paths
        .iter()
        .map(|p| {
            let delta = match (a.get(p), b.get(p)) {
                (Some(x), Some(y)) => oracle_label_delta(x, y),
                (None, None) => 0.0,
                _ => 1.0,
            };
            weight(p) / z * delta
        })
        .sum()
}

/// Metric axioms on one triple, plus agreement with the path-by-path oracle.
pub fn check_metric_axioms([a, b, c]: &[XmlTree; 3], tol: f64) -> Result<(), String> {
    let cfg = MetricConfig::default();
    let d = |x: &XmlTree, y: &XmlTree| distance(x, y, &cfg).map_err(|e| e.to_string());
    let (ab, ba, bc, ac, aa) = (d(a, b)?, d(b, a)?, d(b, c)?, d(a, c)?, d(a, a)?);
    let ctx = || format!("a={a:?} b={b:?} c={c:?}");
    for v in [ab, bc, ac] {
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("distance {v} outside [0, 1]: {}", ctx()));
        }
    }
    if aa.abs() > tol {
        return Err(format!("d(a, a) = {aa}: {}", ctx()));
    }
    if (ab <= tol) != (a == b) {
        return Err(format!(
            "identity of indiscernibles, d(a, b) = {ab}: {}",
            ctx()
        ));
    }
    if (ab - ba).abs() > tol {
        return Err(format!("symmetry {ab} vs {ba}: {}", ctx()));
    }
    if ac > ab + bc + tol {
        return Err(format!("triangle {ac} > {ab} + {bc}: {}", ctx()));
    }
    let o = oracle_distance(a, b);
    if (o - ab).abs() > tol {
        return Err(format!("oracle {o} vs {ab}: {}", ctx()));
    }
    Ok(())
}

pub struct BanachOutcome {
    pub analytic_q: f64,
    pub q_hat: f64,
    pub steps: usize,
    pub worst_slack: f64,
    pub failures: Vec<String>,
}

/// Runs the hole filler of the given arity and compares the trace with the
/// closed form `d(t_k, t_{k+1}) = (arity/4)^k / Σ_j (arity/4)^j`.
pub fn check_banach(arity: usize, depth: usize, tol: f64) -> BanachOutcome {
    let (start, t) = hole_filler(arity, depth);
    let q = arity as f64 / 4.0;
    let mut out = BanachOutcome {
        analytic_q: q,
        q_hat: f64::NAN,
        steps: 0,
        worst_slack: f64::INFINITY,
        failures: Vec::new(),
    };
    let r = match banach_iterate(
        &t,
        start,
        &MetricConfig::default(),
        1e-15,
        100,
        BanachOptions::default(),
    ) {
        Ok(r) => r,
        Err(e) => {
            out.failures.push(format!("banach_iterate failed: {e}"));
            return out;
        }
    };
    out.steps = r.steps;
    out.q_hat = r.q_hat.unwrap_or(f64::NAN);
    if !((out.q_hat - q).abs() <= tol) {
        out.failures
            .push(format!("q_hat {} vs analytic {q}", out.q_hat));
    }
    let z: f64 = (0..=depth).map(|k| q.powi(k as i32)).sum();
    for (k, d) in r.distances.iter().enumerate().take(depth + 1) {
        let expected = q.powi(k as i32) / z;
        if (d - expected).abs() > tol {
            out.failures
                .push(format!("step {k}: distance {d} vs closed form {expected}"));
        }
    }
    if r.bound_trace.len() < r.to_final.len() {
        out.failures.push("bound missing for some iterate".into());
    }
    for (n, (obs, bound)) in r.to_final.iter().zip(&r.bound_trace).enumerate() {
        out.worst_slack = out.worst_slack.min(bound - obs);
        if *obs > bound + tol {
            out.failures.push(format!(
                "step {n}: d(t_n, t*) = {obs} exceeds bound {bound}"
            ));
        }
    }
    if !r.warnings.is_empty() {
        out.failures.push(format!("warnings: {:?}", r.warnings));
    }
    out
}
