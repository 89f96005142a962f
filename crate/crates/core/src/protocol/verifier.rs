use crate::tree::{DeweyPath, XmlTree};

use super::proposer::FixtureError;

/// What a verifier says about one step.
#[derive(Debug, Clone, PartialEq)]
pub enum VerifierOutcome {
    Evidence { reference: String, conf: f64 },
    Counterexample(String),
}

pub struct VerifyRequest<'a> {
    pub tree: &'a XmlTree,
    pub path: &'a DeweyPath,
    pub branch: Option<&'a str>,
    pub index: u32,
    pub revision: u32,
    pub round: usize,
    pub text: &'a str,
}

/// A total verifier: every call yields evidence or a counterexample.
pub trait Verifier: Send + Sync {
    fn verify(&self, req: &VerifyRequest<'_>) -> VerifierOutcome;
}

/// Accepts everything with a fixed confidence; references are
/// `{prefix}{index}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptingVerifier {
    pub conf: f64,
    pub prefix: String,
}

impl AcceptingVerifier {
    pub fn new(conf: f64) -> Self {
        AcceptingVerifier {
            conf,
            prefix: "v".into(),
        }
    }
}

impl Verifier for AcceptingVerifier {
    fn verify(&self, req: &VerifyRequest<'_>) -> VerifierOutcome {
        VerifierOutcome::Evidence {
            reference: format!("{}{}", self.prefix, req.index),
            conf: self.conf,
        }
    }
}

/// Rejects everything with the same message.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectingVerifier {
    pub reason: String,
}

impl Verifier for RejectingVerifier {
    fn verify(&self, _req: &VerifyRequest<'_>) -> VerifierOutcome {
        VerifierOutcome::Counterexample(self.reason.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct VerdictRule {
    branch: Option<String>,
    step: Option<u32>,
    rev: Option<u32>,
    round: Option<usize>,
    outcome: VerifierOutcome,
}

/// Verdicts looked up from a fixture, one rule per line:
///
/// ```text
/// branch=articleA step=2 rev=1 counterexample Q2 is unanswered.
/// * evidence ref=v{index} conf=0.90
/// ```
///
/// Selectors `branch`, `step`, `rev` and `round` may be omitted (or the line
/// may start with `*`) to match anything. The first matching line wins. A
/// step no line matches gets a counterexample saying so.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedVerifier {
    rules: Vec<VerdictRule>,
}

impl ScriptedVerifier {
    pub fn parse(text: &str) -> Result<Self, FixtureError> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| FixtureError {
                line: i + 1,
                reason,
            };
            let mut rule = VerdictRule {
                branch: None,
                step: None,
                rev: None,
                round: None,
                outcome: VerifierOutcome::Counterexample(String::new()),
            };
            let mut rest = line;
            let mut outcome = None;
            while let Some(word) = rest.split_whitespace().next() {
                let after = rest.trim_start()[word.len()..].trim_start();
                match word.split_once('=') {
                    _ if word == "*" => {}
                    Some(("branch", v)) => rule.branch = Some(v.to_string()),
                    Some(("step", v)) => {
                        rule.step = Some(v.parse().map_err(|_| err(format!("bad step {v:?}")))?)
                    }
                    Some(("rev", v)) => {
                        rule.rev = Some(v.parse().map_err(|_| err(format!("bad rev {v:?}")))?)
                    }
                    Some(("round", v)) => {
                        rule.round = Some(v.parse().map_err(|_| err(format!("bad round {v:?}")))?)
                    }
                    None if word == "counterexample" => {
                        if after.is_empty() {
                            return Err(err("counterexample needs a message".into()));
                        }
                        outcome = Some(VerifierOutcome::Counterexample(after.to_string()));
                        break;
                    }
                    None if word == "evidence" => {
                        let mut reference = None;
                        let mut conf = None;
                        for kv in after.split_whitespace() {
                            match kv.split_once('=') {
                                Some(("ref", v)) => reference = Some(v.to_string()),
                                Some(("conf", v)) => {
                                    let c: f64 =
                                        v.parse().map_err(|_| err(format!("bad conf {v:?}")))?;
                                    if !(0.0..=1.0).contains(&c) {
                                        return Err(err(format!("conf {c} outside [0, 1]")));
                                    }
                                    conf = Some(c);
                                }
                                _ => return Err(err(format!("unknown evidence field {kv:?}"))),
                            }
                        }
                        outcome = Some(VerifierOutcome::Evidence {
                            reference: reference
                                .ok_or_else(|| err("evidence needs ref=".into()))?,
                            conf: conf.ok_or_else(|| err("evidence needs conf=".into()))?,
                        });
                        break;
                    }
                    _ => return Err(err(format!("unexpected {word:?}"))),
                }
                rest = after;
            }
            rule.outcome =
                outcome.ok_or_else(|| err("line has no evidence or counterexample".into()))?;
            rules.push(rule);
        }
        Ok(ScriptedVerifier { rules })
    }
}

impl Verifier for ScriptedVerifier {
    fn verify(&self, req: &VerifyRequest<'_>) -> VerifierOutcome {
        let hit = self.rules.iter().find(|r| {
            r.branch.as_deref().is_none_or(|b| Some(b) == req.branch)
                && r.step.is_none_or(|s| s == req.index)
                && r.rev.is_none_or(|v| v == req.revision)
                && r.round.is_none_or(|n| n == req.round)
        });
        let subst = |s: &str| {
            s.replace("{index}", &req.index.to_string())
                .replace("{branch}", req.branch.unwrap_or(""))
                .replace("{rev}", &req.revision.to_string())
        };
        match hit.map(|r| &r.outcome) {
            Some(VerifierOutcome::Evidence { reference, conf }) => VerifierOutcome::Evidence {
                reference: subst(reference),
                conf: *conf,
            },
            Some(VerifierOutcome::Counterexample(msg)) => {
                VerifierOutcome::Counterexample(subst(msg))
            }
            None => VerifierOutcome::Counterexample(format!(
                "no verdict for step {} revision {}",
                req.index, req.revision
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(branch: Option<&'static str>, index: u32, revision: u32) -> VerifyRequest<'static> {
        static TREE: std::sync::OnceLock<XmlTree> = std::sync::OnceLock::new();
        static PATH: std::sync::OnceLock<DeweyPath> = std::sync::OnceLock::new();
        VerifyRequest {
            tree: TREE.get_or_init(XmlTree::bottom),
            path: PATH.get_or_init(DeweyPath::root),
            branch,
            index,
            revision,
            round: 1,
            text: "",
        }
    }

    #[test]
    fn first_matching_line_wins() {
        let v = ScriptedVerifier::parse(
            "# verdicts\nstep=2 rev=1 counterexample Q2 for {branch} is open.\nbranch=b * evidence ref=b{index} conf=0.92\n* evidence ref=v{index} conf=0.90\n",
        )
        .unwrap();
        assert_eq!(
            v.verify(&req(Some("a"), 2, 1)),
            VerifierOutcome::Counterexample("Q2 for a is open.".into())
        );
        assert_eq!(
            v.verify(&req(Some("a"), 2, 2)),
            VerifierOutcome::Evidence {
                reference: "v2".into(),
                conf: 0.9
            }
        );
        assert_eq!(
            v.verify(&req(Some("b"), 3, 1)),
            VerifierOutcome::Evidence {
                reference: "b3".into(),
                conf: 0.92
            }
        );
        let none = ScriptedVerifier::parse("step=1 evidence ref=x conf=1").unwrap();
        assert!(matches!(
            none.verify(&req(None, 2, 1)),
            VerifierOutcome::Counterexample(_)
        ));
    }

    #[test]
    fn malformed_lines() {
        for bad in [
            "evidence conf=0.9",
            "evidence ref=a conf=1.5",
            "step=x evidence ref=a conf=0.9",
            "counterexample",
            "step=1",
            "maybe",
        ] {
            assert!(ScriptedVerifier::parse(bad).is_err(), "{bad}");
        }
    }
}
