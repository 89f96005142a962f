//! A weighted, path-wise distance between trees and empirical contraction
//! estimates for tree maps.

use std::collections::BTreeSet;
use std::fmt::Display;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{ContentSpec, DeweyPath, NodeLabel, XmlTree};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("the top element has no distance")]
    TopNotMetrizable,
    #[error("every sampled pair was at distance zero")]
    DegenerateSample,
    #[error("invalid metric configuration: {0}")]
    InvalidConfig(String),
    #[error("transformer failed: {0}")]
    Transform(String),
}

/// Unnormalized path weight as a function of depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightScheme {
    /// `base^-depth`.
    Geometric {
        base: f64,
    },
    Uniform,
}

impl WeightScheme {
    fn raw(&self, depth: usize) -> f64 {
        match *self {
            WeightScheme::Geometric { base } => base.powi(-(depth as i32)),
            WeightScheme::Uniform => 1.0,
        }
    }
}

/// How Levenshtein distance between two texts is scaled into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditNormalization {
    /// `2·lev / (|a| + |b| + lev)`, which keeps the triangle inequality.
    Metric,
    /// `lev / max(|a|, |b|)`. Simpler, but not a metric on strings.
    MaxLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    /// Paths deeper than this are ignored.
    pub max_depth: usize,
    pub weights: WeightScheme,
    /// Share of the attribute distance at a node that has attributes; the
    /// rest goes to content.
    pub attr_weight: f64,
    pub edit: EditNormalization,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            max_depth: 16,
            weights: WeightScheme::Geometric { base: 4.0 },
            attr_weight: 0.5,
            edit: EditNormalization::Metric,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.max_depth < 1 {
            return Err(MetricError::InvalidConfig(
                "max_depth must be at least 1".into(),
            ));
        }
        if let WeightScheme::Geometric { base } = self.weights {
            if !(base.is_finite() && base > 0.0) {
                return Err(MetricError::InvalidConfig(
                    "geometric base must be positive".into(),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.attr_weight) {
            return Err(MetricError::InvalidConfig(
                "attr_weight must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One path's share of a distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTerm {
    pub path: DeweyPath,
    /// Normalized weight; the weights of one report sum to 1.
    pub weight: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    pub value: f64,
    pub terms: Vec<PathTerm>,
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut prev_diag = row[0];
        row[0] = i + 1;
        for j in 1..=b.len() {
            let tmp = row[j];
            row[j] = (row[j] + 1)
                .min(row[j - 1] + 1)
                .min(prev_diag + usize::from(ca != b[j - 1]));
            prev_diag = tmp;
        }
    }
    row[b.len()]
}

pub fn normalized_edit_distance(a: &str, b: &str, norm: EditNormalization) -> f64 {
    if a == b {
        return 0.0;
    }
    let lev = levenshtein(a, b) as f64;
    let (la, lb) = (a.chars().count() as f64, b.chars().count() as f64);
    match norm {
        EditNormalization::Metric => 2.0 * lev / (la + lb + lev),
        EditNormalization::MaxLength => lev / la.max(lb),
    }
}

/// Literal pairs use edit distance; anything involving a hole or pattern is
/// 0 when equal and 1 otherwise.
pub fn content_delta(a: &ContentSpec, b: &ContentSpec, norm: EditNormalization) -> f64 {
    match (a, b) {
        (ContentSpec::Literal(x), ContentSpec::Literal(y)) => normalized_edit_distance(x, y, norm),
        _ if a == b => 0.0,
        _ => 1.0,
    }
}

pub fn label_delta(a: &NodeLabel, b: &NodeLabel, cfg: &MetricConfig) -> f64 {
    if a.tag != b.tag {
        return 1.0;
    }
    let content = content_delta(&a.content, &b.content, cfg.edit);
    if a.attrs.is_empty() && b.attrs.is_empty() {
        return content;
    }
    let names: BTreeSet<&String> = a.attrs.keys().chain(b.attrs.keys()).collect();
    let attr_sum: f64 = names
        .iter()
        .map(|k| match (a.attrs.get(*k), b.attrs.get(*k)) {
            (Some(x), Some(y)) => content_delta(x, y, cfg.edit),
            _ => 1.0,
        })
        .sum();
    let attrs = attr_sum / names.len() as f64;
    cfg.attr_weight * attrs + (1.0 - cfg.attr_weight) * content
}

/// The distance with its per-path breakdown.
pub fn distance_report(
    t1: &XmlTree,
    t2: &XmlTree,
    cfg: &MetricConfig,
) -> Result<DistanceReport, MetricError> {
    if t1.is_top() || t2.is_top() {
        return Err(MetricError::TopNotMetrizable);
    }
    let mut paths: BTreeSet<&DeweyPath> = t1
        .paths()
        .chain(t2.paths())
        .filter(|p| p.depth() <= cfg.max_depth)
        .collect();
    let root = DeweyPath::root();
    paths.insert(&root);
    let z: f64 = paths.iter().map(|p| cfg.weights.raw(p.depth())).sum();
    let mut value = 0.0;
    let mut terms = Vec::with_capacity(paths.len());
    for p in paths {
        let delta = match (t1.get(p), t2.get(p)) {
            (Some(a), Some(b)) => label_delta(a, b, cfg),
            (None, None) => 0.0,
            _ => 1.0,
        };
        let weight = cfg.weights.raw(p.depth()) / z;
        value += weight * delta;
        terms.push(PathTerm {
            path: p.clone(),
            weight,
            delta,
        });
    }
    Ok(DistanceReport {
        value: value.clamp(0.0, 1.0),
        terms,
    })
}

/// `d(t1, t2) = Σ_p α_p δ(ℓ_t1(p), ℓ_t2(p))` over the paths present in either tree.
pub fn distance(t1: &XmlTree, t2: &XmlTree, cfg: &MetricConfig) -> Result<f64, MetricError> {
    distance_report(t1, t2, cfg).map(|r| r.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionEstimate {
    /// Largest observed `d(T a, T b) / d(a, b)`: a lower bound on the Lipschitz constant.
    pub q: f64,
    /// The pair that attained `q`.
    pub witness: (XmlTree, XmlTree),
    /// Pairs with positive distance that entered the estimate.
    pub pairs_used: usize,
}

/// Samples `n_pairs` pairs and reports the largest distance ratio under `map`.
pub fn estimate_contraction<F, E>(
    mut map: F,
    sampler: &mut dyn FnMut() -> (XmlTree, XmlTree),
    cfg: &MetricConfig,
    n_pairs: usize,
) -> Result<ContractionEstimate, MetricError>
where
    F: FnMut(&XmlTree) -> Result<XmlTree, E>,
    E: Display,
{
    let mut best: Option<(f64, (XmlTree, XmlTree))> = None;
    let mut used = 0;
    for _ in 0..n_pairs {
        let (a, b) = sampler();
        let d = distance(&a, &b, cfg)?;
        if d <= 0.0 {
            continue;
        }
        used += 1;
        let ta = map(&a).map_err(|e| MetricError::Transform(e.to_string()))?;
        let tb = map(&b).map_err(|e| MetricError::Transform(e.to_string()))?;
        let ratio = distance(&ta, &tb, cfg)? / d;
        if best.as_ref().is_none_or(|(q, _)| ratio > *q) {
            best = Some((ratio, (a, b)));
        }
    }
    let (q, witness) = best.ok_or(MetricError::DegenerateSample)?;
    Ok(ContractionEstimate {
        q,
        witness,
        pairs_used: used,
    })
}
