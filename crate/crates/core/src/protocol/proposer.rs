//! Sources of fragments: fixture replay, seeded constrained sampling and a
//! remote completion endpoint.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{constrained_sample, Grammar, SampleOutcome, UniformPolicy, Vocabulary};
use crate::tree::{serialize_partial, DeweyPath, XmlTree};

/// The kind of fragment a pass asks for. Each site has its own entry rule in
/// the protocol grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Plan,
    Revise,
    Answer,
    ToolCall,
    Post,
}

impl Site {
    pub const ALL: [Site; 5] = [
        Site::Plan,
        Site::Revise,
        Site::Answer,
        Site::ToolCall,
        Site::Post,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Site::Plan => "plan",
            Site::Revise => "revise",
            Site::Answer => "answer",
            Site::ToolCall => "toolcall",
            Site::Post => "post",
        }
    }

    pub fn from_name(s: &str) -> Option<Site> {
        Site::ALL.into_iter().find(|site| site.name() == s)
    }

    /// Grammar rule that fragments for this site must match.
    pub fn fragment_rule(self) -> &'static str {
        match self {
            Site::Plan => "PlanFragment",
            Site::Revise => "StepFragment",
            Site::Answer => "AnswerText",
            Site::ToolCall => "ToolCallFragment",
            Site::Post => "PostFragment",
        }
    }
}

pub struct ProposalRequest<'a> {
    pub tree: &'a XmlTree,
    /// Where the fragment will be attached.
    pub path: &'a DeweyPath,
    pub grammar: &'a Arc<Grammar>,
    pub site: Site,
    pub round: usize,
    pub branch: Option<&'a str>,
    /// Step index for revisions.
    pub step: Option<u32>,
    /// Zero for the first try, counting up on retries.
    pub attempt: usize,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProposerError {
    #[error("no fixture entry for {0}")]
    NoFixture(String),
    #[error("sampling did not finish: {0}")]
    Sampling(String),
    #[error("remote proposer: {0}")]
    Remote(String),
}

pub trait Proposer: Send {
    fn propose(&mut self, req: &ProposalRequest<'_>) -> Result<String, ProposerError>;
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    branch: Option<String>,
    round: Option<usize>,
    site: Site,
    step: Option<u32>,
    repeat: bool,
    text: String,
    used: bool,
}

impl Block {
    fn matches(&self, req: &ProposalRequest<'_>) -> bool {
        !self.used
            && self.site == req.site
            && self.branch.as_deref().is_none_or(|b| Some(b) == req.branch)
            && self.round.is_none_or(|r| r == req.round)
            && self.step.is_none_or(|s| Some(s) == req.step)
    }
}

/// Replays fragments from a fixture file.
///
/// ```text
/// === round=1 site=plan
/// <plan><step index="1">Draft answer A.</step></plan>
/// === branch=beta site=answer repeat
/// Combined answer for {branch}.
/// ```
///
/// Header keys are `branch`, `round`, `site` (required) and `step`; omitted
/// keys match anything. Blocks are used once each in file order, so
/// repeating a header supplies successive attempts. `repeat` keeps a block
/// available forever. Body lines are trimmed and joined, without separators
/// when the body is markup and with single spaces otherwise. `{branch}`,
/// `{round}` and `{index}` are substituted.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedProposer {
    blocks: Vec<Block>,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("fixture line {line}: {reason}")]
pub struct FixtureError {
    pub line: usize,
    pub reason: String,
}

impl ScriptedProposer {
    pub fn parse(text: &str) -> Result<Self, FixtureError> {
        let mut blocks = Vec::new();
        let mut current: Option<(Block, Vec<&str>)> = None;
        let close = |cur: Option<(Block, Vec<&str>)>, blocks: &mut Vec<Block>| {
            if let Some((mut b, lines)) = cur {
                let parts: Vec<&str> = lines
                    .iter()
                    .map(|l| l.trim())
                    .filter(|l| !l.is_empty())
                    .collect();
                let sep = if parts.first().is_some_and(|l| l.starts_with('<')) {
                    ""
                } else {
                    " "
                };
                b.text = parts.join(sep);
                blocks.push(b);
            }
        };
        for (i, line) in text.lines().enumerate() {
            let err = |reason: String| FixtureError {
                line: i + 1,
                reason,
            };
            if let Some(header) = line.strip_prefix("===") {
                close(current.take(), &mut blocks);
                let mut block = Block {
                    branch: None,
                    round: None,
                    site: Site::Plan,
                    step: None,
                    repeat: false,
                    text: String::new(),
                    used: false,
                };
                let mut site = None;
                for word in header.split_whitespace() {
                    match word.split_once('=') {
                        Some(("branch", v)) => block.branch = Some(v.to_string()),
                        Some(("round", v)) => {
                            block.round =
                                Some(v.parse().map_err(|_| err(format!("bad round {v:?}")))?)
                        }
                        Some(("step", v)) => {
                            block.step =
                                Some(v.parse().map_err(|_| err(format!("bad step {v:?}")))?)
                        }
                        Some(("site", v)) => {
                            site = Some(
                                Site::from_name(v)
                                    .ok_or_else(|| err(format!("unknown site {v:?}")))?,
                            )
                        }
                        None if word == "repeat" => block.repeat = true,
                        _ => return Err(err(format!("unknown header item {word:?}"))),
                    }
                }
                block.site = site.ok_or_else(|| err("header lacks site=".into()))?;
                current = Some((block, Vec::new()));
            } else if let Some((_, lines)) = current.as_mut() {
                lines.push(line);
            } else if !(line.trim().is_empty() || line.trim_start().starts_with('#')) {
                return Err(err("text before the first === header".into()));
            }
        }
        close(current, &mut blocks);
        Ok(ScriptedProposer { blocks })
    }

    /// Number of blocks not yet used.
    pub fn remaining(&self) -> usize {
        self.blocks.iter().filter(|b| !b.used && !b.repeat).count()
    }
}

impl Proposer for ScriptedProposer {
    fn propose(&mut self, req: &ProposalRequest<'_>) -> Result<String, ProposerError> {
        let block = self
            .blocks
            .iter_mut()
            .find(|b| b.matches(req))
            .ok_or_else(|| {
                ProposerError::NoFixture(format!(
                    "branch={} round={} site={}{}",
                    req.branch.unwrap_or("-"),
                    req.round,
                    req.site.name(),
                    req.step.map(|s| format!(" step={s}")).unwrap_or_default()
                ))
            })?;
        if !block.repeat {
            block.used = true;
        }
        Ok(block
            .text
            .replace("{branch}", req.branch.unwrap_or(""))
            .replace("{round}", &req.round.to_string())
            .replace(
                "{index}",
                &req.step.map(|s| s.to_string()).unwrap_or_default(),
            ))
    }
}

/// Samples every fragment from its grammar with a uniform policy whose seed
/// is derived from the run seed and the request coordinates, so results do
/// not depend on the order in which branches are served.
#[derive(Debug, Clone)]
pub struct SeededRandomProposer {
    seed: u64,
    vocab: Vocabulary,
    pub stop_prob: f64,
    pub max_tokens: usize,
}

impl SeededRandomProposer {
    pub fn new(seed: u64) -> Self {
        SeededRandomProposer {
            seed,
            vocab: Vocabulary::new(
                " abcdefghijklmnopqrstuvwxyz0123456789.<>/=\"_"
                    .chars()
                    .map(String::from),
            )
            .expect("distinct tokens"),
            stop_prob: 0.2,
            max_tokens: 2048,
        }
    }

    fn request_seed(&self, req: &ProposalRequest<'_>) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed;
        let mut mix = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        mix(req.branch.unwrap_or("").as_bytes());
        mix(&req.round.to_le_bytes());
        mix(req.site.name().as_bytes());
        mix(&req.step.unwrap_or(0).to_le_bytes());
        mix(&req.attempt.to_le_bytes());
        h
    }
}

impl Proposer for SeededRandomProposer {
    fn propose(&mut self, req: &ProposalRequest<'_>) -> Result<String, ProposerError> {
        let mut policy = UniformPolicy::new(self.request_seed(req), self.stop_prob);
        match constrained_sample(req.grammar, &self.vocab, &mut policy, self.max_tokens) {
            Ok(SampleOutcome::Complete(text)) => Ok(text),
            Ok(other) => Err(ProposerError::Sampling(format!(
                "stopped early after {:?}",
                other.text()
            ))),
            Err(e) => Err(ProposerError::Sampling(e.to_string())),
        }
    }
}

/// JSON body sent to a remote proposer.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HttpRequestBody {
    /// The current tree, serialized with holes marked.
    pub prompt: String,
    /// Source of the protocol grammar.
    pub grammar: String,
    /// Entry rule the fragment must match.
    pub start: String,
    pub path: String,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HttpResponseBody {
    pub text: String,
}

/// Posts each request to a completion endpoint and returns its `text`.
pub struct HttpProposer {
    endpoint: String,
    agent: ureq::Agent,
    pub max_tokens: usize,
}

impl HttpProposer {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(60)))
            .build();
        HttpProposer {
            endpoint: endpoint.into(),
            agent: config.into(),
            max_tokens: 512,
        }
    }

    pub fn body(&self, req: &ProposalRequest<'_>) -> HttpRequestBody {
        HttpRequestBody {
            prompt: serialize_partial(req.tree).unwrap_or_default(),
            grammar: req.grammar.source().to_string(),
            start: req.site.fragment_rule().to_string(),
            path: req.path.to_string(),
            max_tokens: self.max_tokens,
        }
    }
}

impl Proposer for HttpProposer {
    fn propose(&mut self, req: &ProposalRequest<'_>) -> Result<String, ProposerError> {
        let body = self.body(req);
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(&body)
            .map_err(|e| ProposerError::Remote(e.to_string()))?;
        let parsed: HttpResponseBody = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProposerError::Remote(e.to_string()))?;
        Ok(parsed.text)
    }
}
