//! Wire protocol between assistance sessions and operator clients.
//!
//! Transport-agnostic: frames are UTF-8 JSON text, one message each. A
//! [`Connection`] owns the sequence counters of one client link; payload
//! builders produce unsequenced [`Outbound`] messages that every connection
//! stamps with its own `seq` before sending.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tracing::debug;

use crate::assistance::{
    validate_response, AssistanceError, AssistanceResponse, AssistanceSession, EventKind, LogEntry,
    Mode, SessionState, ASSISTANCE_NOT_VALID,
};
use crate::geometry::{Pose, Vec2};
use crate::map::{LaneletId, LaneletMap};
use crate::odd::OddParameterKind;
use crate::sim::{Decision, OperatorPolicy};

pub const PROTOCOL_VERSION: u32 = 1;
/// Vertex budget of the map excerpt in one message.
pub const MAX_EXCERPT_VERTICES: usize = 1000;
/// Seconds between server heartbeats.
pub const HEARTBEAT_INTERVAL: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Hello,
    SceneSnapshot,
    AssistanceRequest,
    AssistanceResponse,
    SelectionPreview,
    StateUpdate,
    Error,
    Bye,
}

impl MessageType {
    pub const ALL: [MessageType; 8] = [
        MessageType::Hello,
        MessageType::SceneSnapshot,
        MessageType::AssistanceRequest,
        MessageType::AssistanceResponse,
        MessageType::SelectionPreview,
        MessageType::StateUpdate,
        MessageType::Error,
        MessageType::Bye,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageType::Hello => "hello",
            MessageType::SceneSnapshot => "scene_snapshot",
            MessageType::AssistanceRequest => "assistance_request",
            MessageType::AssistanceResponse => "assistance_response",
            MessageType::SelectionPreview => "selection_preview",
            MessageType::StateUpdate => "state_update",
            MessageType::Error => "error",
            MessageType::Bye => "bye",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Types a client may send.
    pub fn from_client(self) -> bool {
        matches!(
            self,
            MessageType::Hello
                | MessageType::AssistanceResponse
                | MessageType::SelectionPreview
                | MessageType::Bye
        )
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub session_id: String,
    pub seq: u64,
    pub payload: Value,
}

impl WireMessage {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("wire message serializes")
    }
}

/// A message before a connection assigns its sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub kind: MessageType,
    pub payload: Value,
}

impl Outbound {
    fn new(kind: MessageType, payload: impl Serialize) -> Result<Self, GatewayError> {
        let payload =
            serde_json::to_value(payload).map_err(|e| GatewayError::Encode(e.to_string()))?;
        Ok(Self { kind, payload })
    }

    fn infallible(kind: MessageType, payload: impl Serialize) -> Self {
        Self::new(kind, payload).expect("payload serializes")
    }

    pub fn error(error: &ErrorPayload) -> Self {
        Self::infallible(MessageType::Error, error)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorReason {
    Malformed,
    UnknownType,
    UnexpectedType,
    UnknownSession,
    StaleSession,
    OutOfSequence,
    AssistanceNotValid,
}

impl ErrorReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorReason::Malformed => "malformed",
            ErrorReason::UnknownType => "unknown_type",
            ErrorReason::UnexpectedType => "unexpected_type",
            ErrorReason::UnknownSession => "unknown_session",
            ErrorReason::StaleSession => "stale_session",
            ErrorReason::OutOfSequence => "out_of_sequence",
            ErrorReason::AssistanceNotValid => "assistance_not_valid",
        }
    }
}

/// Payload of an `error` message. The connection stays open after one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorPayload {
    pub reason: ErrorReason,
    /// Finer reason, e.g. `unknown_candidate` for rejected responses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub message: String,
    /// `seq` of the offending message, when it could be read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<u64>,
}

impl ErrorPayload {
    pub fn new(reason: ErrorReason, message: impl Into<String>) -> Self {
        Self {
            reason,
            detail: None,
            message: message.into(),
            in_reply_to: None,
        }
    }

    fn replying_to(mut self, seq: u64) -> Self {
        self.in_reply_to = Some(seq);
        self
    }
}

impl fmt::Display for ErrorPayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.reason.as_str(), self.message)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GatewayError {
    #[error("session is {0}, not awaiting an operator")]
    NotAwaiting(SessionState),
    #[error("cannot encode payload: {0}")]
    Encode(String),
}

/// Sequence bookkeeping for one client link.
#[derive(Debug, Clone)]
pub struct Connection {
    session_id: String,
    next_out: u64,
    next_in: u64,
}

impl Connection {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            next_out: 1,
            next_in: 1,
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    /// Next `seq` the client must use.
    pub fn expected_seq(&self) -> u64 {
        self.next_in
    }

    pub fn seal(&mut self, out: &Outbound) -> WireMessage {
        let seq = self.next_out;
        self.next_out += 1;
        WireMessage {
            kind: out.kind,
            session_id: self.session_id.clone(),
            seq,
            payload: out.payload.clone(),
        }
    }

    /// Decodes and checks an incoming frame. Only an accepted message
    /// consumes a sequence number, so a rejected frame may be resent.
    pub fn open(&mut self, raw: &str) -> Result<WireMessage, ErrorPayload> {
        let value: Value = serde_json::from_str(raw)
            .map_err(|e| ErrorPayload::new(ErrorReason::Malformed, format!("invalid JSON: {e}")))?;
        let seq = value.get("seq").and_then(Value::as_u64);
        let with_seq = |e: ErrorPayload| match seq {
            Some(s) => e.replying_to(s),
            None => e,
        };
        let kind = value
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| with_seq(ErrorPayload::new(ErrorReason::Malformed, "missing type")))?;
        if MessageType::parse(kind).is_none() {
            return Err(with_seq(ErrorPayload::new(
                ErrorReason::UnknownType,
                format!("unknown message type `{kind}`"),
            )));
        }
        let msg: WireMessage = serde_json::from_value(value)
            .map_err(|e| with_seq(ErrorPayload::new(ErrorReason::Malformed, e.to_string())))?;
        if !msg.kind.from_client() {
            return Err(ErrorPayload::new(
                ErrorReason::UnexpectedType,
                format!("clients may not send `{}`", msg.kind),
            )
            .replying_to(msg.seq));
        }
        if msg.session_id != self.session_id {
            return Err(ErrorPayload::new(
                ErrorReason::UnknownSession,
                format!("unknown session `{}`", msg.session_id),
            )
            .replying_to(msg.seq));
        }
        if msg.seq != self.next_in {
            return Err(ErrorPayload::new(
                ErrorReason::OutOfSequence,
                format!("expected seq {}, got {}", self.next_in, msg.seq),
            )
            .replying_to(msg.seq));
        }
        self.next_in += 1;
        Ok(msg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HelloPayload {
    pub protocol: u32,
    /// `server` or a free-form client name.
    pub agent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heartbeat_interval: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl From<Pose> for WirePose {
    fn from(p: Pose) -> Self {
        Self {
            x: p.x,
            y: p.y,
            heading: p.heading,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireVehicle {
    pub pose: WirePose,
    pub speed: f64,
    pub lanelet: LaneletId,
    pub goal_lanelet: LaneletId,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcerptLanelet {
    pub id: LaneletId,
    pub polygon: Vec<Vec2>,
    pub odd_tags: BTreeSet<OddParameterKind>,
    pub blocked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapExcerpt {
    pub lanelets: Vec<ExcerptLanelet>,
    /// Lanelets left out for the vertex budget.
    pub omitted: usize,
}

impl MapExcerpt {
    pub fn vertex_count(&self) -> usize {
        self.lanelets.iter().map(|l| l.polygon.len()).sum()
    }
}

/// Every `stride`-th vertex, never fewer than three.
fn decimate(vertices: &[Vec2], stride: usize) -> Vec<Vec2> {
    if vertices.len() <= 3 || stride <= 1 {
        return vertices.to_vec();
    }
    let kept: Vec<Vec2> = vertices.iter().step_by(stride).copied().collect();
    if kept.len() >= 3 {
        kept
    } else {
        let n = vertices.len();
        vec![vertices[0], vertices[n / 3], vertices[2 * n / 3]]
    }
}

/// Lanelet polygons nearest to `around` first, thinned so the excerpt holds
/// at most `budget` vertices.
pub fn map_excerpt(map: &LaneletMap, around: Vec2, budget: usize) -> MapExcerpt {
    let total: usize = map.lanelets().map(|l| l.polygon().vertices.len()).sum();
    let stride = total.div_ceil(budget.max(1)).max(1);
    let mut lanelets: Vec<_> = map.lanelets().collect();
    lanelets.sort_by(|a, b| {
        let da = a.polygon().boundary_distance(around)
            * if a.polygon().contains(around) {
                0.0
            } else {
                1.0
            };
        let db = b.polygon().boundary_distance(around)
            * if b.polygon().contains(around) {
                0.0
            } else {
                1.0
            };
        da.total_cmp(&db).then(a.id().cmp(&b.id()))
    });
    let mut out = Vec::new();
    let mut used = 0;
    let mut omitted = 0;
    for l in lanelets {
        let polygon = decimate(&l.polygon().vertices, stride);
        if used + polygon.len() > budget {
            omitted += 1;
            continue;
        }
        used += polygon.len();
        out.push(ExcerptLanelet {
            id: l.id(),
            polygon,
            odd_tags: l.odd_tags().clone(),
            blocked: l.is_blocked(),
        });
    }
    out.sort_by_key(|l| l.id);
    MapExcerpt {
        lanelets: out,
        omitted,
    }
}

fn wire_vehicle(session: &AssistanceSession) -> WireVehicle {
    let v = session.vehicle();
    WireVehicle {
        pose: v.pose.into(),
        speed: v.speed,
        lanelet: v.current_lanelet,
        goal_lanelet: v.goal_lanelet,
        mode: v.mode,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireCandidate {
    pub id: usize,
    pub polyline: Vec<WirePose>,
    pub odd_modifications: BTreeSet<OddParameterKind>,
    pub cost_score: f64,
    pub preferred: bool,
    pub length: f64,
    pub lanelet_ids: Vec<LaneletId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistanceRequestPayload {
    /// Candidate set the ids refer to; echoed back in responses.
    pub generation: u64,
    pub candidates: Vec<WireCandidate>,
    pub map_excerpt: MapExcerpt,
    pub vehicle: WireVehicle,
    pub response_timeout: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub awaiting_since: Option<f64>,
}

/// The operator's answer. Either a selection or `reject_all: true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssistanceResponsePayload {
    /// Generation from the request being answered; checked when present.
    #[serde(default)]
    pub generation: Option<u64>,
    #[serde(default)]
    pub candidate_id: Option<usize>,
    #[serde(default)]
    pub approved_modifications: BTreeSet<OddParameterKind>,
    #[serde(default)]
    pub operator_id: String,
    #[serde(default)]
    pub reject_all: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPreviewPayload {
    pub candidate_id: usize,
    #[serde(default)]
    pub operator_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdatePayload {
    pub state: SessionState,
    pub mode: Mode,
    pub generation: u64,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<EventKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<SessionState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_candidate: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshotPayload {
    pub map_excerpt: MapExcerpt,
    /// The occupancy grid in its file form.
    pub grid: Value,
    pub vehicle: WireVehicle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByePayload {
    pub reason: String,
}

pub fn hello() -> Outbound {
    Outbound::infallible(
        MessageType::Hello,
        HelloPayload {
            protocol: PROTOCOL_VERSION,
            agent: "server".into(),
            heartbeat_interval: Some(HEARTBEAT_INTERVAL),
        },
    )
}

pub fn bye(reason: &str) -> Outbound {
    Outbound::infallible(
        MessageType::Bye,
        ByePayload {
            reason: reason.into(),
        },
    )
}

pub fn scene_snapshot(session: &AssistanceSession) -> Outbound {
    let grid: Value = serde_json::from_str(&session.grid().to_json()).expect("grid file is JSON");
    Outbound::infallible(
        MessageType::SceneSnapshot,
        SceneSnapshotPayload {
            map_excerpt: map_excerpt(
                session.map(),
                session.vehicle().pose.position(),
                MAX_EXCERPT_VERTICES,
            ),
            grid,
            vehicle: wire_vehicle(session),
        },
    )
}

/// Current state, optionally annotated with the transition that led there.
pub fn state_update(session: &AssistanceSession, entry: Option<&LogEntry>) -> Outbound {
    Outbound::infallible(
        MessageType::StateUpdate,
        StateUpdatePayload {
            state: entry.map_or(session.state(), |e| e.to),
            mode: session.vehicle().mode,
            generation: session.generation(),
            t: entry.map_or(0.0, |e| e.t),
            event: entry.map(|e| e.event),
            from: entry.map(|e| e.from),
            selected_candidate: session.selection().map(|r| r.candidate_id),
        },
    )
}

/// The candidate set of an open request.
pub fn publish_request(session: &AssistanceSession) -> Result<Outbound, GatewayError> {
    if session.state() != SessionState::AwaitingOperator {
        return Err(GatewayError::NotAwaiting(session.state()));
    }
    let candidates: Vec<WireCandidate> = session
        .candidates()
        .iter()
        .map(|c| WireCandidate {
            id: c.candidate_id,
            polyline: c.path.poses.iter().map(|p| (*p).into()).collect(),
            odd_modifications: c.odd_modifications.clone(),
            cost_score: c.cost_score,
            preferred: c.preferred,
            length: c.path.length,
            lanelet_ids: c.route.lanelet_ids.clone(),
        })
        .collect();
    // JSON has no NaN or infinity; refuse rather than send nulls
    let finite = candidates.iter().all(|c| {
        c.cost_score.is_finite()
            && c.polyline
                .iter()
                .all(|p| p.x.is_finite() && p.y.is_finite() && p.heading.is_finite())
    });
    if !finite {
        return Err(GatewayError::Encode("non-finite candidate value".into()));
    }
    let v = session.vehicle();
    Outbound::new(
        MessageType::AssistanceRequest,
        AssistanceRequestPayload {
            generation: session.generation(),
            candidates,
            map_excerpt: map_excerpt(session.map(), v.pose.position(), MAX_EXCERPT_VERTICES),
            vehicle: wire_vehicle(session),
            response_timeout: session.config().response_timeout,
            awaiting_since: session.awaiting_since(),
        },
    )
}

/// What an operator answer asks for, once decoded and checked against the
/// open request.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorAnswer {
    Select(AssistanceResponse),
    RejectAll { operator_id: String },
}

/// Decodes a payload object. Serde would also take a positional array for
/// a struct; the protocol does not.
fn payload<T: serde::de::DeserializeOwned>(msg: &WireMessage) -> Result<T, ErrorPayload> {
    if !msg.payload.is_object() {
        return Err(ErrorPayload::new(
            ErrorReason::Malformed,
            "payload must be an object",
        ));
    }
    serde_json::from_value(msg.payload.clone())
        .map_err(|e| ErrorPayload::new(ErrorReason::Malformed, e.to_string()))
}

/// Decodes an `assistance_response` and checks it targets the open request.
pub fn decode_response(
    session: &AssistanceSession,
    msg: &WireMessage,
) -> Result<OperatorAnswer, ErrorPayload> {
    let fail = |e: ErrorPayload| e.replying_to(msg.seq);
    if msg.kind != MessageType::AssistanceResponse {
        return Err(fail(ErrorPayload::new(
            ErrorReason::UnexpectedType,
            format!("expected assistance_response, got {}", msg.kind),
        )));
    }
    if msg.session_id != session.id() {
        return Err(fail(ErrorPayload::new(
            ErrorReason::UnknownSession,
            format!("unknown session `{}`", msg.session_id),
        )));
    }
    let p: AssistanceResponsePayload = payload(msg).map_err(fail)?;
    let stale = session.state() != SessionState::AwaitingOperator
        || p.generation.is_some_and(|g| g != session.generation());
    if stale {
        return Err(fail(ErrorPayload::new(
            ErrorReason::StaleSession,
            format!(
                "no open request for this answer (state {}, generation {})",
                session.state(),
                session.generation()
            ),
        )));
    }
    match (p.reject_all, p.candidate_id) {
        (true, None) => Ok(OperatorAnswer::RejectAll {
            operator_id: p.operator_id,
        }),
        (false, Some(id)) => Ok(OperatorAnswer::Select(AssistanceResponse {
            candidate_id: id,
            approved_modifications: p.approved_modifications,
            operator_id: p.operator_id,
        })),
        _ => Err(fail(ErrorPayload::new(
            ErrorReason::Malformed,
            "give either candidate_id or reject_all",
        ))),
    }
}

fn not_valid(e: &AssistanceError, seq: u64) -> ErrorPayload {
    ErrorPayload {
        reason: ErrorReason::AssistanceNotValid,
        detail: e.reason().map(|r| r.as_str().to_owned()),
        message: ASSISTANCE_NOT_VALID.to_owned(),
        in_reply_to: Some(seq),
    }
}

/// Decodes a selection and hands it to the session. On a rejected answer
/// the request stays open and the error carries the reason.
pub fn ingest_response(
    session: &mut AssistanceSession,
    msg: &WireMessage,
    t: f64,
) -> Result<SessionState, ErrorPayload> {
    match decode_response(session, msg)? {
        OperatorAnswer::Select(response) => session.respond(&response, t).map_err(|e| match e {
            AssistanceError::NotValid(_) => not_valid(&e, msg.seq),
            other => {
                ErrorPayload::new(ErrorReason::StaleSession, other.to_string()).replying_to(msg.seq)
            }
        }),
        OperatorAnswer::RejectAll { .. } => Err(ErrorPayload::new(
            ErrorReason::UnexpectedType,
            "reject_all is handled by the episode loop",
        )
        .replying_to(msg.seq)),
    }
}

/// Operator policy fed by remote clients.
///
/// The host loop hands every opened message to [`GatewayPolicy::submit`] and
/// forwards the returned replies to the sender; messages for all clients
/// accumulate in the broadcast queue. Answers are queued and applied by the
/// episode on its next tick, so the session stays the only author of
/// transitions.
#[derive(Debug, Default)]
pub struct GatewayPolicy {
    pending: VecDeque<(u64, Decision)>,
    broadcast: Vec<Outbound>,
    abort: Option<String>,
}

impl GatewayPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Messages for every connected client, oldest first.
    pub fn take_broadcast(&mut self) -> Vec<Outbound> {
        std::mem::take(&mut self.broadcast)
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    /// Handles one accepted client message and returns the replies for its
    /// sender.
    pub fn submit(&mut self, session: &AssistanceSession, msg: &WireMessage) -> Vec<Outbound> {
        match msg.kind {
            MessageType::Hello => {
                let mut out = vec![
                    hello(),
                    scene_snapshot(session),
                    state_update(session, None),
                ];
                if let Ok(request) = publish_request(session) {
                    out.push(request);
                }
                out
            }
            MessageType::AssistanceResponse => {
                let answer = match decode_response(session, msg) {
                    Ok(a) => a,
                    Err(e) => return vec![Outbound::error(&e)],
                };
                let generation = session.generation();
                match answer {
                    OperatorAnswer::RejectAll { .. } => {
                        self.pending.push_back((generation, Decision::RejectAll));
                        Vec::new()
                    }
                    OperatorAnswer::Select(response) => {
                        let reply = match validate_response(session, &response) {
                            Err(e @ AssistanceError::NotValid(_)) => {
                                vec![Outbound::error(&not_valid(&e, msg.seq))]
                            }
                            _ => Vec::new(),
                        };
                        // invalid answers are applied too so the session logs them
                        self.pending
                            .push_back((generation, Decision::Respond(response)));
                        reply
                    }
                }
            }
            MessageType::SelectionPreview => match payload::<SelectionPreviewPayload>(msg) {
                Ok(p) if p.candidate_id < session.candidates().len() => {
                    self.broadcast
                        .push(Outbound::infallible(MessageType::SelectionPreview, p));
                    Vec::new()
                }
                Ok(p) => vec![Outbound::error(
                    &ErrorPayload::new(
                        ErrorReason::Malformed,
                        format!("no candidate {}", p.candidate_id),
                    )
                    .replying_to(msg.seq),
                )],
                Err(e) => vec![Outbound::error(&e.replying_to(msg.seq))],
            },
            MessageType::Bye => vec![bye("client closed")],
            other => vec![Outbound::error(
                &ErrorPayload::new(
                    ErrorReason::UnexpectedType,
                    format!("clients may not send `{other}`"),
                )
                .replying_to(msg.seq),
            )],
        }
    }
}

impl OperatorPolicy for GatewayPolicy {
    fn name(&self) -> String {
        "remote".into()
    }

    fn decide(&mut self, session: &AssistanceSession, _t: f64) -> Decision {
        if let Some(why) = self.abort.take() {
            return Decision::Abort(why);
        }
        while let Some((generation, decision)) = self.pending.pop_front() {
            if generation == session.generation() {
                return decision;
            }
            debug!(generation, "dropping answer for an old candidate set");
        }
        Decision::Wait
    }

    fn observe(&mut self, session: &AssistanceSession, entry: &LogEntry) {
        self.broadcast.push(state_update(session, Some(entry)));
        if entry.to != SessionState::AwaitingOperator {
            self.pending.clear();
        }
        if entry.event == EventKind::CandidatesReady
            && session.state() == SessionState::AwaitingOperator
        {
            match publish_request(session) {
                Ok(request) => self.broadcast.push(request),
                Err(e) => self.abort = Some(e.to_string()),
            }
        }
    }
}
