//! API chains and their text format.
//!
//! One step per line: `<api-id> [<arg>=<value|$k>]...`, where `$k` refers
//! to the output of step `k` (0-based) of the same chain. In the exemplar
//! log the same steps are joined by `;` on a single line.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sentinel api id that terminates a chain during planning.
pub const END: &str = "__end__";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("step {step}: argument `{arg}` references step {target}, which is not earlier")]
    ForwardReference { step: usize, arg: String, target: usize },
    #[error("a full chain needs at least one step")]
    EmptyChain,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    Literal(String),
    StepOutput(usize),
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Literal(s) => f.write_str(s),
            Binding::StepOutput(k) => write!(f, "${k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApiCall {
    pub api: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub args: BTreeMap<String, Binding>,
}

impl ApiCall {
    pub fn new(api: impl Into<String>) -> Self {
        Self { api: api.into(), args: BTreeMap::new() }
    }

    pub fn with_arg(mut self, name: impl Into<String>, value: Binding) -> Self {
        self.args.insert(name.into(), value);
        self
    }
}

impl fmt::Display for ApiCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.api)?;
        for (k, v) in &self.args {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// An ordered list of API calls. `partial` marks a chain still being
/// extended by the planner; only partial chains may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ApiChain {
    pub steps: Vec<ApiCall>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub partial: bool,
}

impl ApiChain {
    pub fn full(steps: Vec<ApiCall>) -> Self {
        Self { steps, partial: false }
    }

    pub fn partial(steps: Vec<ApiCall>) -> Self {
        Self { steps, partial: true }
    }

    /// Full chain of argument-free calls.
    pub fn from_ids<S: AsRef<str>>(ids: &[S]) -> Self {
        Self::full(ids.iter().map(|s| ApiCall::new(s.as_ref())).collect())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn api_ids(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.api.as_str()).collect()
    }

    pub fn push(&mut self, call: ApiCall) {
        self.steps.push(call);
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if !self.partial && self.steps.is_empty() {
            return Err(ChainError::EmptyChain);
        }
        for (step, call) in self.steps.iter().enumerate() {
            for (arg, b) in &call.args {
                if let Binding::StepOutput(target) = *b {
                    if target >= step {
                        return Err(ChainError::ForwardReference { step, arg: arg.clone(), target });
                    }
                }
            }
        }
        Ok(())
    }

    /// Multi-line chain-file text.
    pub fn to_text(&self) -> String {
        self.steps.iter().map(|s| format!("{s}\n")).collect()
    }

    /// Single-line form used by the exemplar log.
    pub fn to_inline(&self) -> String {
        self.steps.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
    }
}

impl fmt::Display for ApiChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.api_ids().join(" -> "))
    }
}

fn parse_step(text: &str, line: usize) -> Result<ApiCall, ChainError> {
    let err = |message: String| ChainError::Parse { line, message };
    let mut tokens = text.split_whitespace();
    let api = tokens.next().ok_or_else(|| err("empty step".into()))?;
    if api.contains('=') {
        return Err(err(format!("step must start with an api id, found `{api}`")));
    }
    let mut call = ApiCall::new(api);
    for tok in tokens {
        let (name, value) = tok.split_once('=').ok_or_else(|| err(format!("expected <arg>=<value>, found `{tok}`")))?;
        if name.is_empty() {
            return Err(err(format!("missing argument name in `{tok}`")));
        }
        let binding = match value.strip_prefix('$') {
            Some(k) => Binding::StepOutput(k.parse().map_err(|_| err(format!("invalid step reference `{value}`")))?),
            None => Binding::Literal(value.to_string()),
        };
        if call.args.insert(name.to_string(), binding).is_some() {
            return Err(err(format!("duplicate argument `{name}`")));
        }
    }
    Ok(call)
}

/// Parses a chain file (one step per line). The result is a validated full
/// chain.
pub fn parse_chain(text: &str) -> Result<ApiChain, ChainError> {
    let mut chain = ApiChain::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        chain.push(parse_step(line, idx + 1)?);
    }
    chain.validate()?;
    Ok(chain)
}

/// Parses the `;`-joined single-line form; `line` is reported in errors.
pub fn parse_inline_chain(text: &str, line: usize) -> Result<ApiChain, ChainError> {
    let steps = text
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_step(s, line))
        .collect::<Result<Vec<_>, _>>()?;
    let chain = ApiChain::full(steps);
    chain.validate()?;
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bindings() {
        let c = parse_chain("load_graph\n# find pair\nshortest_path from=a to=c\nreport text=$1\n").unwrap();
        assert_eq!(c.api_ids(), vec!["load_graph", "shortest_path", "report"]);
        assert_eq!(c.steps[1].args["from"], Binding::Literal("a".into()));
        assert_eq!(c.steps[2].args["text"], Binding::StepOutput(1));
        assert_eq!(parse_chain(&c.to_text()).unwrap(), c);
        assert_eq!(parse_inline_chain(&c.to_inline(), 1).unwrap(), c);
    }

    #[test]
    fn rejects_bad_steps() {
        assert!(matches!(parse_chain("a\nb x=$1"), Err(ChainError::ForwardReference { step: 1, target: 1, .. })));
        assert!(matches!(parse_chain("a\nb x=$z"), Err(ChainError::Parse { line: 2, .. })));
        assert!(matches!(parse_chain("a k"), Err(ChainError::Parse { line: 1, .. })));
        assert!(matches!(parse_chain("a k=1 k=2"), Err(ChainError::Parse { .. })));
        assert_eq!(parse_chain("# nothing\n"), Err(ChainError::EmptyChain));
        assert!(ApiChain::partial(vec![]).validate().is_ok());
    }
}
