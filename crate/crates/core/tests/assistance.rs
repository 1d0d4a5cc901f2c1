use std::collections::{BTreeSet, VecDeque};

use dcpp_core::assistance::{
    find_path_candidates, next_state, replay, validate_response, Actor, AssistanceError,
    AssistanceResponse, AssistanceSession, CandidateRequest, Event, EventKind, InvalidReason,
    LogEntry, Mode, RouteCostScorer, SessionConfig, SessionState, VehicleState,
};
use dcpp_core::fixtures::{self, Fixture};
use dcpp_core::geometry::Vec2;
use dcpp_core::map::{Cell, OrientedRect};
use dcpp_core::motion::PlannerParams;
use dcpp_core::odd::{modifications_for, CostWeights, OddParameterKind, OddProfile};
use proptest::prelude::*;

use OddParameterKind::{ParkingArea, Sidewalk, SolidLineCrossing};

fn vehicle(f: &Fixture) -> VehicleState {
    VehicleState {
        pose: f.start_pose,
        speed: 0.0,
        current_lanelet: f.start_lanelet,
        goal_lanelet: f.goal_lanelet,
        mode: Mode::AwaitingAssistance,
    }
}

fn quick_config() -> SessionConfig {
    SessionConfig {
        planner: PlannerParams {
            max_iterations: 1500,
            ..PlannerParams::default()
        },
        ..SessionConfig::default()
    }
}

fn candidates_for(
    f: &Fixture,
) -> Result<Vec<dcpp_core::assistance::PathCandidate>, AssistanceError> {
    let nominal = OddProfile::nominal();
    let extended = OddProfile::extended();
    let planner = PlannerParams::default();
    let request = CandidateRequest {
        nominal: &nominal,
        extended: &extended,
        weights: CostWeights::default(),
        k: 3,
        planner: &planner,
        block_threshold: 0.5,
    };
    let mut map = f.map.clone();
    find_path_candidates(&vehicle(f), &mut map, &f.grid(), &request, &RouteCostScorer)
        .map(|(c, _)| c)
}

#[test]
fn two_detours_offer_parking_before_sidewalk() {
    let c = candidates_for(&fixtures::two_detours()).unwrap();
    assert_eq!(c.len(), 2);
    assert!(c[0].preferred && !c[1].preferred);
    assert_eq!(c[0].odd_modifications, BTreeSet::from([ParkingArea]));
    assert_eq!(c[1].odd_modifications, BTreeSet::from([Sidewalk]));
    assert!(c[0].cost_score < c[1].cost_score);
    assert_eq!((c[0].candidate_id, c[1].candidate_id), (0, 1));
}

#[test]
fn single_detour_offers_one_candidate_with_two_modifications() {
    let c = candidates_for(&fixtures::single_detour()).unwrap();
    assert_eq!(c.len(), 1);
    assert!(c[0].preferred);
    assert_eq!(
        c[0].odd_modifications,
        BTreeSet::from([ParkingArea, SolidLineCrossing])
    );
}

#[test]
fn modifications_match_brute_force_union() {
    for f in [fixtures::two_detours(), fixtures::single_detour()] {
        for c in candidates_for(&f).unwrap() {
            let mut expected = BTreeSet::new();
            for id in &c.route.lanelet_ids {
                let l = f.map.get(*id).unwrap();
                for tag in l.odd_tags() {
                    if *tag != OddParameterKind::RegularRoad {
                        expected.insert(*tag);
                    }
                }
                assert!(
                    modifications_for(l, &OddProfile::nominal(), &OddProfile::extended())
                        .is_subset(&expected)
                );
            }
            assert_eq!(c.odd_modifications, expected);
        }
    }
}

#[test]
fn unreachable_goal_reports_zero_candidates() {
    let mut f = fixtures::two_detours();
    for y in [-3.5, 3.5] {
        f.obstacles.push(OrientedRect {
            center: Vec2::new(35.0, y),
            length: 4.0,
            width: 3.5,
            heading: 0.0,
        });
    }
    let err = candidates_for(&f).unwrap_err();
    assert_eq!(err, AssistanceError::ZeroCandidates);
    assert_eq!(err.to_string(), "Zero candidates found");
}

#[test]
fn generation_requires_awaiting_assistance() {
    let f = fixtures::two_detours();
    let nominal = OddProfile::nominal();
    let extended = OddProfile::extended();
    let planner = PlannerParams::default();
    let request = CandidateRequest {
        nominal: &nominal,
        extended: &extended,
        weights: CostWeights::default(),
        k: 3,
        planner: &planner,
        block_threshold: 0.5,
    };
    let mut v = vehicle(&f);
    v.mode = Mode::Autonomous;
    let mut map = f.map.clone();
    assert_eq!(
        find_path_candidates(&v, &mut map, &f.grid(), &request, &RouteCostScorer).unwrap_err(),
        AssistanceError::NotAwaitingAssistance
    );
}

fn session(f: &Fixture) -> AssistanceSession {
    let mut v = vehicle(f);
    v.mode = Mode::Autonomous;
    AssistanceSession::new("s-1", f.map.clone(), f.grid(), v, quick_config())
}

fn accept(s: &AssistanceSession, id: usize) -> AssistanceResponse {
    AssistanceResponse {
        candidate_id: id,
        approved_modifications: s
            .candidates()
            .get(id)
            .map(|c| c.odd_modifications.clone())
            .unwrap_or_default(),
        operator_id: "op".into(),
    }
}

#[test]
fn happy_path_resolves_and_reverts_patch() {
    let f = fixtures::two_detours();
    let mut s = session(&f);
    let original_blocked = s.map().blocked_ids();
    assert_eq!(
        s.advance(Event::AssistanceNeeded, 1.0, Actor::Vehicle)
            .unwrap(),
        SessionState::AwaitingOperator
    );
    assert!(!s.map().blocked_ids().is_empty());
    assert_eq!(s.vehicle().mode, Mode::AwaitingAssistance);
    let r = accept(&s, 0);
    assert_eq!(s.respond(&r, 5.0).unwrap(), SessionState::Executing);
    assert_eq!(s.vehicle().mode, Mode::AssistedDriving);
    assert_eq!(s.selected_candidate().unwrap().candidate_id, 0);
    assert_eq!(
        s.advance(Event::TriggerResolved, 20.0, Actor::Vehicle)
            .unwrap(),
        SessionState::Resolved
    );
    assert!(s.map_patch().is_none());
    assert_eq!(s.map().blocked_ids(), original_blocked);
    assert_eq!(s.vehicle().mode, Mode::Autonomous);

    let kinds: Vec<_> = s.event_log().iter().map(|e| e.event).collect();
    assert_eq!(
        kinds,
        [
            EventKind::AssistanceNeeded,
            EventKind::CandidatesReady,
            EventKind::ValidResponse,
            EventKind::TriggerResolved
        ]
    );
    assert_eq!(s.event_log()[2].actor, Actor::Operator("op".into()));
    let parsed: Vec<LogEntry> = s
        .export_log()
        .lines()
        .map(|l| LogEntry::from_json_line(l).unwrap())
        .collect();
    assert_eq!(replay(&parsed).unwrap(), SessionState::Resolved);
}

#[test]
fn invalid_responses_keep_the_request_open() {
    let f = fixtures::two_detours();
    let mut s = session(&f);
    s.advance(Event::AssistanceNeeded, 0.0, Actor::Vehicle)
        .unwrap();

    let unknown = AssistanceResponse {
        candidate_id: 7,
        ..accept(&s, 0)
    };
    let err = s.respond(&unknown, 1.0).unwrap_err();
    assert_eq!(err.to_string(), "Assistance not valid");
    assert_eq!(err.reason(), Some(InvalidReason::UnknownCandidate));
    assert_eq!(s.state(), SessionState::AwaitingOperator);

    let mut missing = accept(&s, 1);
    missing.approved_modifications.remove(&Sidewalk);
    let err = s.respond(&missing, 2.0).unwrap_err();
    assert_eq!(err.to_string(), "Assistance not valid");
    assert_eq!(
        err.reason(),
        Some(InvalidReason::ModificationsNotAcknowledged)
    );

    // a new obstacle on the parking strip makes candidate 0 stale
    let mut grid = s.grid().clone();
    grid.fill_rect(
        &OrientedRect {
            center: Vec2::new(35.0, -3.5),
            length: 2.0,
            width: 2.0,
            heading: 0.0,
        },
        Cell::Occupied,
    );
    s.set_grid(grid);
    let err = s.respond(&accept(&s, 0), 3.0).unwrap_err();
    assert_eq!(err.reason(), Some(InvalidReason::StalePath));
    assert_eq!(s.state(), SessionState::AwaitingOperator);
    // the sidewalk candidate is still fine
    assert_eq!(
        s.respond(&accept(&s, 1), 4.0).unwrap(),
        SessionState::Executing
    );
}

#[test]
fn protocol_violations_leave_state_unchanged() {
    let f = fixtures::straight_corridor(30.0);
    let mut s = session(&f);
    let log_len = s.event_log().len();
    let err = s
        .advance(Event::TriggerResolved, 0.0, Actor::Vehicle)
        .unwrap_err();
    assert!(matches!(err, AssistanceError::Protocol { .. }));
    assert_eq!(s.state(), SessionState::Idle);
    assert_eq!(s.event_log().len(), log_len);
    let err = s.respond(&accept(&s, 0), 0.0).unwrap_err();
    assert!(matches!(err, AssistanceError::Protocol { .. }));
}

#[test]
fn selections_from_an_old_candidate_set_are_refused() {
    let f = fixtures::straight_corridor(30.0);
    let mut s = session(&f);
    s.advance(Event::AssistanceNeeded, 0.0, Actor::Vehicle)
        .unwrap();
    let old = validate_response(&s, &accept(&s, 0)).unwrap();
    s.advance(Event::RejectAll, 1.0, Actor::Operator("op".into()))
        .unwrap();
    assert_eq!(s.state(), SessionState::AwaitingOperator);
    assert!(s
        .advance(Event::ValidResponse(old), 2.0, Actor::Vehicle)
        .is_err());
    assert_eq!(s.state(), SessionState::AwaitingOperator);
}

#[test]
fn response_timeout_moves_to_mrm() {
    let f = fixtures::straight_corridor(30.0);
    let mut s = session(&f);
    s.advance(Event::AssistanceNeeded, 10.0, Actor::Vehicle)
        .unwrap();
    assert_eq!(s.tick(129.9), None);
    // invalid responses do not restart the clock
    let _ = s.respond(
        &AssistanceResponse {
            candidate_id: 9,
            ..accept(&s, 0)
        },
        60.0,
    );
    assert_eq!(s.tick(130.0), Some(SessionState::Mrm));
    assert_eq!(s.event_log().last().unwrap().actor, Actor::Timer);
    assert_eq!(s.vehicle().mode, Mode::Mrm);
    assert_eq!(
        s.advance(Event::ReRequest, 140.0, Actor::Vehicle).unwrap(),
        SessionState::AwaitingOperator
    );
}

#[test]
fn mrm_during_execution_then_re_request() {
    let f = fixtures::two_detours();
    let mut s = session(&f);
    s.advance(Event::AssistanceNeeded, 0.0, Actor::Vehicle)
        .unwrap();
    s.respond(&accept(&s, 0), 1.0).unwrap();
    assert_eq!(
        s.advance(Event::MrmTrigger, 2.0, Actor::Vehicle).unwrap(),
        SessionState::Mrm
    );
    assert_eq!(s.vehicle().speed, 0.0);
    assert_eq!(
        s.advance(Event::ReRequest, 3.0, Actor::Vehicle).unwrap(),
        SessionState::AwaitingOperator
    );
    // the regenerated set comes with a fresh patch on a clean map
    assert_eq!(s.candidates().len(), 2);
    assert!(s.map_patch().is_some());
}

#[test]
fn exhaustive_transition_enumeration() {
    // reachable states from idle
    let mut reachable = BTreeSet::from([SessionState::Idle]);
    let mut queue = VecDeque::from([SessionState::Idle]);
    let mut edges = Vec::new();
    while let Some(s) = queue.pop_front() {
        for e in EventKind::ALL {
            if let Some(t) = next_state(s, e) {
                edges.push((s, e, t));
                if reachable.insert(t) {
                    queue.push_back(t);
                }
            }
        }
    }
    assert_eq!(reachable.len(), SessionState::ALL.len());
    for s in SessionState::ALL {
        assert_eq!(
            next_state(s, EventKind::MrmTrigger),
            Some(SessionState::Mrm)
        );
    }
    for (from, event, to) in &edges {
        if *to == SessionState::Executing {
            assert_eq!(
                (*from, *event),
                (SessionState::AwaitingOperator, EventKind::ValidResponse)
            );
        }
    }
    // executing is unreachable once valid_response edges are removed
    let mut seen = BTreeSet::from([SessionState::Idle]);
    let mut queue = VecDeque::from([SessionState::Idle]);
    while let Some(s) = queue.pop_front() {
        for &(from, event, to) in &edges {
            if from == s && event != EventKind::ValidResponse && seen.insert(to) {
                queue.push_back(to);
            }
        }
    }
    assert!(!seen.contains(&SessionState::Executing));
}

#[derive(Debug, Clone)]
enum Step {
    Need,
    Accept(usize),
    AcceptMissing(usize),
    Reject,
    Resolve,
    Mrm,
    ReRequest,
    Wait(f64),
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        Just(Step::Need),
        (0usize..3).prop_map(Step::Accept),
        (0usize..3).prop_map(Step::AcceptMissing),
        Just(Step::Reject),
        Just(Step::Resolve),
        Just(Step::Mrm),
        Just(Step::ReRequest),
        (1.0f64..200.0).prop_map(Step::Wait),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn session_invariants_hold_under_random_events(steps in prop::collection::vec(step(), 1..12)) {
        let f = fixtures::two_detours();
        let mut config = quick_config();
        config.planner.max_iterations = 600;
        let mut v = vehicle(&f);
        v.mode = Mode::Autonomous;
        let mut s = AssistanceSession::new("p", f.map.clone(), f.grid(), v, config);
        let original = f.map.blocked_ids();
        let mut t = 0.0;
        for st in steps {
            t += 1.0;
            let before_len = s.event_log().len();
            let _ = match st {
                Step::Need => s.advance(Event::AssistanceNeeded, t, Actor::Vehicle),
                Step::Accept(i) => s.respond(&accept(&s, i), t),
                Step::AcceptMissing(i) => {
                    let mut r = accept(&s, i);
                    r.approved_modifications.clear();
                    s.respond(&r, t)
                }
                Step::Reject => s.advance(Event::RejectAll, t, Actor::Operator("op".into())),
                Step::Resolve => s.advance(Event::TriggerResolved, t, Actor::Vehicle),
                Step::Mrm => s.advance(Event::MrmTrigger, t, Actor::Vehicle),
                Step::ReRequest => s.advance(Event::ReRequest, t, Actor::Vehicle),
                Step::Wait(dt) => {
                    t += dt;
                    Ok(s.tick(t).unwrap_or(s.state()))
                }
            };
            let log = s.event_log();
            prop_assert!(log.len() >= before_len);
            prop_assert_eq!(replay(log).unwrap(), s.state());
            for (i, e) in log.iter().enumerate() {
                if e.to == SessionState::Executing {
                    prop_assert_eq!(e.event, EventKind::ValidResponse);
                    prop_assert!(matches!(e.actor, Actor::Operator(_)));
                    prop_assert!(i > 0);
                }
            }
            if s.state() == SessionState::Executing {
                let c = s.selected_candidate().unwrap();
                prop_assert!(c.odd_modifications.is_subset(&s.selection().unwrap().approved_modifications));
            }
            if s.state() == SessionState::Resolved {
                prop_assert!(s.map_patch().is_none());
                prop_assert_eq!(s.map().blocked_ids(), original.clone());
                prop_assert_eq!(s.vehicle().mode, Mode::Autonomous);
            }
        }
    }
}
