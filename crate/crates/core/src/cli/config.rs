//! The run configuration: one TOML file, then `XMLPROMPT_*` environment
//! variables, then command-line flags, each layer overriding the last.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use xmlprompt::metric::MetricConfig;
use xmlprompt::protocol::spec::Overrides;

use super::CliError;

/// Keys accepted in the `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for every random choice (sampling, random proposers, pair sampling).
    pub seed: Option<u64>,
    /// Depth bound of the tree metric.
    pub max_depth: Option<usize>,
    /// Round budget for protocols, step budget for iterations.
    pub budget: Option<usize>,
    /// Completion endpoint for `http` proposers.
    pub endpoint: Option<String>,
    /// Evidence confidence needed to open the answer gate.
    pub threshold: Option<f64>,
    /// Run protocol branches on threads.
    pub concurrent: Option<bool>,
    pub metric: Option<MetricConfig>,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub count: usize,
    pub max_tokens: usize,
    pub stop_prob: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            count: 1,
            max_tokens: 512,
            stop_prob: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    /// Random pairs drawn for the empirical Lipschitz estimate.
    pub pairs: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig { pairs: 200 }
    }
}

/// Flag (or environment) values, which beat the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlagLayer {
    pub seed: Option<u64>,
    pub max_depth: Option<usize>,
    pub budget: Option<usize>,
    pub endpoint: Option<String>,
    pub threshold: Option<f64>,
    pub concurrent: Option<bool>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply(mut self, flags: &FlagLayer) -> Result<Self, CliError> {
        self.seed = flags.seed.or(self.seed);
        self.max_depth = flags.max_depth.or(self.max_depth);
        self.budget = flags.budget.or(self.budget);
        self.endpoint = flags.endpoint.clone().or(self.endpoint);
        self.threshold = flags.threshold.or(self.threshold);
        self.concurrent = flags.concurrent.or(self.concurrent);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::Usage("threshold must lie in [0, 1]".into()));
            }
        }
        if self.budget == Some(0) {
            return Err(CliError::Usage("budget must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.sample.stop_prob) {
            return Err(CliError::Usage(
                "sample.stop_prob must lie in [0, 1]".into(),
            ));
        }
        self.metric()
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// The metric with the depth bound applied.
    pub fn metric(&self) -> MetricConfig {
        let mut m = self.metric.unwrap_or_default();
        if let Some(d) = self.max_depth {
            m.max_depth = d;
        }
        m
    }

    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            budget: self.budget,
            endpoint: self.endpoint.clone(),
            max_depth: self.max_depth,
            concurrent: self.concurrent,
            threshold: self.threshold,
            metric: self.metric,
        }
    }
}
