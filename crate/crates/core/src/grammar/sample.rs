use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{token_mask, Grammar, GrammarError, TokenMask, Vocabulary};

/// What a policy does at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Token(usize),
    Stop,
}

/// Everything a policy may look at when choosing.
pub struct StepContext<'a> {
    pub step: usize,
    pub prefix: &'a str,
    pub mask: &'a TokenMask,
    pub vocab: &'a Vocabulary,
    /// The prefix is already a member of the language, so stopping is allowed.
    pub accepting: bool,
}

/// A next-token chooser. It must pick an allowed token, or stop only when
/// the context says the prefix is accepting.
pub trait Policy {
    fn choose(&mut self, ctx: &StepContext<'_>) -> Choice;
}

impl<F: FnMut(&StepContext<'_>) -> Choice> Policy for F {
    fn choose(&mut self, ctx: &StepContext<'_>) -> Choice {
        self(ctx)
    }
}

/// Uniform over allowed tokens; stops with probability `stop_prob` whenever
/// stopping is allowed.
pub struct UniformPolicy {
    rng: ChaCha8Rng,
    pub stop_prob: f64,
}

impl UniformPolicy {
    pub fn new(seed: u64, stop_prob: f64) -> Self {
        UniformPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
            stop_prob,
        }
    }
}

impl Policy for UniformPolicy {
    fn choose(&mut self, ctx: &StepContext<'_>) -> Choice {
        if ctx.accepting && (ctx.mask.is_empty() || self.rng.gen_bool(self.stop_prob)) {
            return Choice::Stop;
        }
        let n = ctx.mask.count();
        if n == 0 {
            return Choice::Stop;
        }
        let k = self.rng.gen_range(0..n);
        Choice::Token(ctx.mask.iter().nth(k).expect("k < count"))
    }
}

/// Stops as soon as possible; otherwise takes the lexicographically smallest
/// allowed token.
#[derive(Debug, Default, Clone, Copy)]
pub struct SmallestTokenPolicy;

impl Policy for SmallestTokenPolicy {
    fn choose(&mut self, ctx: &StepContext<'_>) -> Choice {
        if ctx.accepting {
            return Choice::Stop;
        }
        ctx.mask
            .iter()
            .min_by(|&a, &b| ctx.vocab.token(a).cmp(ctx.vocab.token(b)))
            .map_or(Choice::Stop, Choice::Token)
    }
}

/// Stops as soon as possible; otherwise takes the allowed token with the
/// lowest id.
#[derive(Debug, Default, Clone, Copy)]
pub struct FirstAllowedPolicy;

impl Policy for FirstAllowedPolicy {
    fn choose(&mut self, ctx: &StepContext<'_>) -> Choice {
        if ctx.accepting {
            return Choice::Stop;
        }
        ctx.mask.iter().next().map_or(Choice::Stop, Choice::Token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SampleOutcome {
    /// An accepted member of the language.
    Complete(String),
    /// The token budget ran out first; the text is a viable prefix.
    PartialOutput(String),
}

impl SampleOutcome {
    pub fn text(&self) -> &str {
        match self {
            SampleOutcome::Complete(s) | SampleOutcome::PartialOutput(s) => s,
        }
    }

    pub fn is_complete(&self) -> bool {
        matches!(self, SampleOutcome::Complete(_))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("no token can continue the prefix {prefix:?} (step {step})")]
    DeadEnd { prefix: String, step: usize },
    #[error("policy chose token {token} outside the mask at step {step}")]
    PolicyViolation { token: usize, step: usize },
    #[error("policy stopped at step {step} before the output was complete")]
    EarlyStop { step: usize },
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// Generates text token by token, masking every step so the output stays a
/// viable prefix.
pub fn constrained_sample(
    g: &Arc<Grammar>,
    v: &Vocabulary,
    policy: &mut dyn Policy,
    max_tokens: usize,
) -> Result<SampleOutcome, SampleError> {
    sample_inner(g, v, policy, max_tokens, None)
}

/// Like [`constrained_sample`], but additionally removes every token whose
/// extended prefix `keep` rejects. Useful for pruning by invariants.
pub fn constrained_sample_filtered(
    g: &Arc<Grammar>,
    v: &Vocabulary,
    policy: &mut dyn Policy,
    max_tokens: usize,
    keep: &mut dyn FnMut(&str) -> bool,
) -> Result<SampleOutcome, SampleError> {
    sample_inner(g, v, policy, max_tokens, Some(keep))
}

fn sample_inner(
    g: &Arc<Grammar>,
    v: &Vocabulary,
    policy: &mut dyn Policy,
    max_tokens: usize,
    mut keep: Option<&mut dyn FnMut(&str) -> bool>,
) -> Result<SampleOutcome, SampleError> {
    let mut state = g.initial_state()?;
    let mut out = String::new();
    for step in 0..max_tokens {
        let mut mask = token_mask(&state, v).expect("state stays viable");
        if let Some(keep) = keep.as_mut() {
            let candidates: Vec<usize> = mask.iter().collect();
            let mut next = out.clone();
            for i in candidates {
                next.truncate(out.len());
                next.push_str(v.token(i));
                if !keep(&next) {
                    mask.clear(i);
                }
            }
        }
        let accepting = state.is_accepting();
        if mask.is_empty() {
            if accepting {
                return Ok(SampleOutcome::Complete(out));
            }
            return Err(SampleError::DeadEnd { prefix: out, step });
        }
        let ctx = StepContext {
            step,
            prefix: &out,
            mask: &mask,
            vocab: v,
            accepting,
        };
        match policy.choose(&ctx) {
            Choice::Stop if accepting => return Ok(SampleOutcome::Complete(out)),
            Choice::Stop => return Err(SampleError::EarlyStop { step }),
            Choice::Token(i) if mask.is_allowed(i) => {
                out.push_str(v.token(i));
                state = state.advance(v.token(i));
            }
            Choice::Token(token) => return Err(SampleError::PolicyViolation { token, step }),
        }
    }
    if state.is_accepting() {
        Ok(SampleOutcome::Complete(out))
    } else {
        Ok(SampleOutcome::PartialOutput(out))
    }
}
