//! Run-sleep-run lifecycle state machine.
//!
//! `transition` is a pure table lookup returning the next state and the
//! ordered side effects the engine must perform *before* committing it.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "state", content = "reason", rename_all = "snake_case")]
pub enum EngineState {
    Initializing,
    Running,
    Sleeping,
    ShuttingDown,
    Faulted(String),
}

impl EngineState {
    /// Lower-case name used in JSON and logs (`faulted` drops the reason).
    pub fn name(&self) -> &'static str {
        match self {
            EngineState::Initializing => "initializing",
            EngineState::Running => "running",
            EngineState::Sleeping => "sleeping",
            EngineState::ShuttingDown => "shutting_down",
            EngineState::Faulted(_) => "faulted",
        }
    }

    pub fn fault_reason(&self) -> Option<&str> {
        match self {
            EngineState::Faulted(r) => Some(r),
            _ => None,
        }
    }
}

impl fmt::Display for EngineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineState::Faulted(r) => write!(f, "faulted ({r})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleEvent {
    InitComplete,
    SleepRequested,
    WakeRequested,
    ShutdownRequested,
    FaultRaised(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    StartSource,
    StartPipeline,
    PausePipeline,
    FlushSinks,
    ReleaseSource,
    PersistTracker,
    ReacquireSource,
    RestoreTracker,
    ResumePipeline,
    CloseSinks,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub next: EngineState,
    pub actions: Vec<Action>,
}

impl Transition {
    fn stay(state: &EngineState) -> Self {
        Self {
            next: state.clone(),
            actions: Vec::new(),
        }
    }

    fn to(next: EngineState, actions: &[Action]) -> Self {
        Self {
            next,
            actions: actions.to_vec(),
        }
    }

    /// True when the pair was a no-op (same state, nothing to do).
    pub fn is_noop(&self, from: &EngineState) -> bool {
        &self.next == from && self.actions.is_empty()
    }
}

pub const SLEEP_CLEANUP: [Action; 4] = [
    Action::PausePipeline,
    Action::FlushSinks,
    Action::ReleaseSource,
    Action::PersistTracker,
];
pub const WAKE_RESTORE: [Action; 3] = [
    Action::ReacquireSource,
    Action::RestoreTracker,
    Action::ResumePipeline,
];
pub const START: [Action; 2] = [Action::StartSource, Action::StartPipeline];
pub const SHUTDOWN: [Action; 5] = [
    Action::PausePipeline,
    Action::FlushSinks,
    Action::ReleaseSource,
    Action::PersistTracker,
    Action::CloseSinks,
];
pub const FAULT_CLEANUP: [Action; 3] =
    [Action::PausePipeline, Action::FlushSinks, Action::ReleaseSource];

/// The lifecycle table. Every pair not listed is a no-op:
///
/// | from | event | to | actions |
/// |---|---|---|---|
/// | Initializing | InitComplete | Running | start source, start pipeline |
/// | Running | SleepRequested | Sleeping | pause, flush sinks, release source, persist tracker |
/// | Sleeping | WakeRequested | Running | reacquire source, restore tracker, resume |
/// | any but ShuttingDown | ShutdownRequested | ShuttingDown | sleep cleanup, then close sinks |
/// | Initializing / Running / Sleeping | FaultRaised(r) | Faulted(r) | pause, flush sinks, release source |
pub fn transition(state: &EngineState, event: &LifecycleEvent) -> Transition {
    use EngineState as S;
    use LifecycleEvent as E;
    match (state, event) {
        (S::Initializing, E::InitComplete) => Transition::to(S::Running, &START),
        (S::Running, E::SleepRequested) => Transition::to(S::Sleeping, &SLEEP_CLEANUP),
        (S::Sleeping, E::WakeRequested) => Transition::to(S::Running, &WAKE_RESTORE),
        (S::ShuttingDown, E::ShutdownRequested) => Transition::stay(state),
        (_, E::ShutdownRequested) => Transition::to(S::ShuttingDown, &SHUTDOWN),
        (S::Initializing | S::Running | S::Sleeping, E::FaultRaised(reason)) => {
            Transition::to(S::Faulted(reason.clone()), &FAULT_CLEANUP)
        }
        _ => Transition::stay(state),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sleep_from_running_cleans_up_in_order() {
        let t = transition(&EngineState::Running, &LifecycleEvent::SleepRequested);
        assert_eq!(t.next, EngineState::Sleeping);
        assert_eq!(
            t.actions,
            vec![
                Action::PausePipeline,
                Action::FlushSinks,
                Action::ReleaseSource,
                Action::PersistTracker
            ]
        );
    }

    #[test]
    fn wake_from_sleeping_restores_in_order() {
        let t = transition(&EngineState::Sleeping, &LifecycleEvent::WakeRequested);
        assert_eq!(t.next, EngineState::Running);
        assert_eq!(
            t.actions,
            vec![Action::ReacquireSource, Action::RestoreTracker, Action::ResumePipeline]
        );
    }

    #[test]
    fn repeated_requests_are_noops() {
        let s = EngineState::Sleeping;
        assert!(transition(&s, &LifecycleEvent::SleepRequested).is_noop(&s));
        let r = EngineState::Running;
        assert!(transition(&r, &LifecycleEvent::WakeRequested).is_noop(&r));
    }

    #[test]
    fn faulted_only_leaves_via_shutdown() {
        let f = EngineState::Faulted("camera gone".into());
        for e in [
            LifecycleEvent::InitComplete,
            LifecycleEvent::SleepRequested,
            LifecycleEvent::WakeRequested,
            LifecycleEvent::FaultRaised("again".into()),
        ] {
            assert!(transition(&f, &e).is_noop(&f));
        }
        assert_eq!(
            transition(&f, &LifecycleEvent::ShutdownRequested).next,
            EngineState::ShuttingDown
        );
    }

    #[test]
    fn state_names() {
        assert_eq!(EngineState::ShuttingDown.name(), "shutting_down");
        assert_eq!(EngineState::Faulted("x".into()).to_string(), "faulted (x)");
    }
}
