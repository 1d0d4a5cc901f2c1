use std::fmt;
use std::str::FromStr;

use crate::assistance::{AssistanceResponse, AssistanceSession, LogEntry};

/// What the operator does on one tick while a request is open.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Wait,
    Respond(AssistanceResponse),
    RejectAll,
    /// The link to the operator failed; the vehicle falls back to MRM.
    Abort(String),
}

/// Stand-in for the human operator. Consulted once per tick while the
/// session awaits a response.
pub trait OperatorPolicy {
    fn name(&self) -> String;

    fn decide(&mut self, session: &AssistanceSession, t: f64) -> Decision;

    /// Called after every session transition, in order.
    fn observe(&mut self, _session: &AssistanceSession, _entry: &LogEntry) {}
}

/// Approves candidate `index` with exactly its modifications.
pub fn approve(session: &AssistanceSession, index: usize, operator: &str) -> AssistanceResponse {
    AssistanceResponse {
        candidate_id: index,
        approved_modifications: session
            .candidates()
            .get(index)
            .map(|c| c.odd_modifications.clone())
            .unwrap_or_default(),
        operator_id: operator.to_owned(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScriptedPolicy {
    AcceptPreferred,
    AcceptIndex(usize),
    RejectAll,
    /// Waits this many seconds after the request opens, then accepts the
    /// preferred candidate.
    DelayThenAccept(f64),
}

const OPERATOR: &str = "scripted";

impl OperatorPolicy for ScriptedPolicy {
    fn name(&self) -> String {
        self.to_string()
    }

    fn decide(&mut self, session: &AssistanceSession, t: f64) -> Decision {
        let preferred = || {
            session
                .candidates()
                .iter()
                .position(|c| c.preferred)
                .unwrap_or(0)
        };
        match *self {
            ScriptedPolicy::AcceptPreferred => {
                Decision::Respond(approve(session, preferred(), OPERATOR))
            }
            ScriptedPolicy::AcceptIndex(n) => Decision::Respond(approve(session, n, OPERATOR)),
            ScriptedPolicy::RejectAll => Decision::RejectAll,
            ScriptedPolicy::DelayThenAccept(delay) => {
                let since = session.awaiting_since().unwrap_or(t);
                if t - since >= delay {
                    Decision::Respond(approve(session, preferred(), OPERATOR))
                } else {
                    Decision::Wait
                }
            }
        }
    }
}

impl fmt::Display for ScriptedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptedPolicy::AcceptPreferred => write!(f, "accept_preferred"),
            ScriptedPolicy::AcceptIndex(n) => write!(f, "accept_index_{n}"),
            ScriptedPolicy::RejectAll => write!(f, "reject_all"),
            ScriptedPolicy::DelayThenAccept(d) => write!(f, "delay_then_accept_{d}"),
        }
    }
}

impl FromStr for ScriptedPolicy {
    type Err = String;

    /// `accept_preferred`, `accept_index_<n>`, `reject_all` or
    /// `delay_then_accept_<seconds>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("unknown policy `{s}`");
        match s {
            "accept_preferred" => Ok(ScriptedPolicy::AcceptPreferred),
            "reject_all" => Ok(ScriptedPolicy::RejectAll),
            _ => {
                if let Some(n) = s.strip_prefix("accept_index_") {
                    n.parse()
                        .map(ScriptedPolicy::AcceptIndex)
                        .map_err(|_| bad())
                } else if let Some(d) = s.strip_prefix("delay_then_accept_") {
                    match d.parse::<f64>() {
                        Ok(d) if d >= 0.0 && d.is_finite() => {
                            Ok(ScriptedPolicy::DelayThenAccept(d))
                        }
                        _ => Err(bad()),
                    }
                } else {
                    Err(bad())
                }
            }
        }
    }
}
