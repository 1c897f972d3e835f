//! Stochastic discrete-event game model and planner.
//!
//! Player automata compose into a game automaton whose events carry
//! exponential rates and are either controllable (our robots' actions) or
//! uncontrollable (everything else). Unmarked states cost one per second, so
//! minimizing total expected cost is minimizing the expected time to reach
//! the marked (goal-scored) set. The solver uniformizes the continuous-time
//! chain and runs value iteration; uncontrollable events are always active,
//! and per state the policy enables exactly one controllable event per own
//! robot.

pub mod compose;
pub mod export;
pub mod model;
pub mod simulate;
pub mod solve;

pub use compose::compose;
pub use export::export_policy;
pub use model::{parse_model_file, ModelFile};
pub use simulate::{simulate_des, DesSamples};
pub use solve::{solve_policy, Policy, Solution};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    Controllable,
    Uncontrollable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerTeam {
    Ours,
    Theirs,
    World,
}

/// A named event with its class and exponential inter-event rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub name: String,
    pub class: EventClass,
    /// Exponential rate, 1/s. Must be positive.
    pub rate: f64,
    /// Owning player; controllable events must belong to an `Ours` player.
    pub owner: Option<String>,
}

/// One player (or environment component) automaton.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerFsa {
    pub name: String,
    pub team: PlayerTeam,
    pub states: Vec<String>,
    pub initial: usize,
    /// `(state, event index) -> state`; deterministic by construction.
    pub transitions: std::collections::BTreeMap<(usize, usize), usize>,
}

impl PlayerFsa {
    pub fn alphabet(&self) -> std::collections::BTreeSet<usize> {
        self.transitions.keys().map(|&(_, e)| e).collect()
    }
}

/// The composed game automaton, restricted to reachable states.
#[derive(Debug, Clone, PartialEq)]
pub struct GameModel {
    pub player_names: Vec<String>,
    pub player_teams: Vec<PlayerTeam>,
    pub player_states: Vec<Vec<String>>,
    pub events: Vec<EventSpec>,
    /// Component-state tuple per product state.
    pub states: Vec<Vec<usize>>,
    /// Outgoing `(event index, target state)` lists per product state.
    pub transitions: Vec<Vec<(usize, usize)>>,
    pub initial: usize,
    pub marked: Vec<bool>,
}

impl GameModel {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    /// Unit cost on unmarked states, zero on marked ones.
    pub fn cost(&self, state: usize) -> f64 {
        if self.marked[state] {
            0.0
        } else {
            1.0
        }
    }

    /// Human-readable component labels of a product state.
    pub fn state_label(&self, state: usize) -> String {
        self.states[state]
            .iter()
            .enumerate()
            .map(|(p, &s)| self.player_states[p][s].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Indices of `Ours` players.
    pub fn own_players(&self) -> Vec<usize> {
        self.player_teams
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == PlayerTeam::Ours)
            .map(|(i, _)| i)
            .collect()
    }

    /// Every marked-to-unmarked transition (must be empty for a valid
    /// time-to-goal model).
    pub fn validate_marking(&self) -> Vec<MarkingViolation> {
        let mut out = Vec::new();
        for (s, arcs) in self.transitions.iter().enumerate() {
            if !self.marked[s] {
                continue;
            }
            for &(event, target) in arcs {
                if !self.marked[target] {
                    out.push(MarkingViolation {
                        from: s,
                        event,
                        to: target,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarkingViolation {
    pub from: usize,
    pub event: usize,
    pub to: usize,
}

/// Builds one-component models directly from edge lists; used by tests and
/// the randomized property suites.
pub mod builder {
    use super::*;

    pub fn single_component_model(
        states: &[&str],
        events: &[(&str, EventClass, f64)],
        arcs: &[(usize, usize, usize)],
        marked: &[usize],
    ) -> GameModel {
        let n = states.len();
        let mut transitions: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for &(from, event, to) in arcs {
            transitions[from].push((event, to));
        }
        let mut marked_v = vec![false; n];
        for &m in marked {
            marked_v[m] = true;
        }
        GameModel {
            player_names: vec!["us".into()],
            player_teams: vec![PlayerTeam::Ours],
            player_states: vec![states.iter().map(|s| s.to_string()).collect()],
            events: events
                .iter()
                .map(|&(name, class, rate)| EventSpec {
                    name: name.into(),
                    class,
                    rate,
                    owner: if class == EventClass::Controllable {
                        Some("us".into())
                    } else {
                        None
                    },
                })
                .collect(),
            states: (0..n).map(|i| vec![i]).collect(),
            transitions,
            initial: 0,
            marked: marked_v,
        }
    }

    /// A random solvable single-component model: a spanning path to the
    /// marked terminal state plus random extra arcs.
    pub fn random_model(seed: u64, tag: &str) -> GameModel {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(seed, &format!("des-random/{tag}"));
        let n: usize = rng.random_range(3..=8);
        let mut arcs: Vec<(usize, usize, usize)> = Vec::new();
        let mut events: Vec<(String, EventClass, f64)> = Vec::new();
        let add_event = |rng: &mut rand_chacha::ChaCha8Rng,
                             events: &mut Vec<(String, EventClass, f64)>|
         -> (usize, EventClass) {
            let class = if rng.random_range(0.0..1.0) < 0.5 {
                EventClass::Controllable
            } else {
                EventClass::Uncontrollable
            };
            let rate = rng.random_range(0.2..3.0);
            events.push((format!("e{}", events.len()), class, rate));
            (events.len() - 1, class)
        };
        // Spanning path 0 -> 1 -> ... -> n-1 (marked).
        for s in 0..n - 1 {
            let (e, _) = add_event(&mut rng, &mut events);
            arcs.push((s, e, s + 1));
        }
        // Extra random arcs among unmarked states (none leave the marked state).
        let extra = rng.random_range(0..=n);
        for _ in 0..extra {
            let from = rng.random_range(0..n - 1);
            let to = rng.random_range(0..n);
            let (e, _) = add_event(&mut rng, &mut events);
            arcs.push((from, e, to));
        }
        let event_refs: Vec<(&str, EventClass, f64)> = events
            .iter()
            .map(|(n, c, r)| (n.as_str(), *c, *r))
            .collect();
        let states: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let state_refs: Vec<&str> = states.iter().map(String::as_str).collect();
        single_component_model(&state_refs, &event_refs, &arcs, &[n - 1])
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    pub(crate) use super::builder::single_component_model as chain_model;
}

#[derive(Debug, Error, PartialEq)]
pub enum DesError {
    #[error("model file: {0}")]
    Parse(String),
    #[error("duplicate player name {0:?}")]
    DuplicatePlayer(String),
    #[error("player {player:?} references unknown state {state:?}")]
    UnknownState { player: String, state: String },
    #[error("player {player:?} has two transitions on {event:?} from {state:?}")]
    Nondeterministic {
        player: String,
        state: String,
        event: String,
    },
    #[error("player {player:?} state {state:?} is unreachable from the initial state")]
    UnreachableComponentState { player: String, state: String },
    #[error("unknown event {0:?}")]
    UnknownEvent(String),
    #[error("event {0:?} has non-positive rate")]
    NonPositiveRate(String),
    #[error("controllable event {0:?} is not owned by one of our players")]
    ControllableNotOurs(String),
    #[error("sync entry for {event:?} names player {player:?} which lacks that event")]
    SyncEventMissing { event: String, player: String },
    #[error("event {0:?} appears in several alphabets but is not in the sync table")]
    UnsyncedSharedEvent(String),
    #[error("event {0:?} appears in no player alphabet")]
    UnusedEvent(String),
    #[error("marked pattern has {got} entries, expected {expected}")]
    PatternLength { got: usize, expected: usize },
    #[error("model has no marked state")]
    NoMarkedStates,
    #[error("model has {0} marked-to-unmarked transitions")]
    MarkedNotAbsorbing(usize),
    #[error("value iteration did not converge within {0} sweeps")]
    NotConverged(usize),
}
