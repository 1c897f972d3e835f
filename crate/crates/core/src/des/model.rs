//! The structured-text model file: players, events, sync table, marking
//! patterns, and the policy-export mappings.

use super::{DesError, EventClass, EventSpec, PlayerFsa, PlayerTeam};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub name: String,
    pub players: Vec<PlayerDecl>,
    pub events: Vec<EventSpec>,
    #[serde(default)]
    pub sync: Vec<SyncEntry>,
    /// Marked-state patterns: one entry per player, `"*"` matches anything.
    pub marked: Vec<Vec<String>>,
    #[serde(default)]
    pub export: ExportConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerDecl {
    pub name: String,
    pub team: PlayerTeam,
    pub initial: String,
    pub transitions: Vec<TransitionDecl>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionDecl {
    pub from: String,
    pub event: String,
    pub to: String,
}

/// Events shared between players move synchronously in all of them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyncEntry {
    pub event: String,
    pub players: Vec<String>,
}

/// How abstract game states map onto behavior-engine rules.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExportConfig {
    /// Role section the generated rules belong to.
    #[serde(default = "default_role")]
    pub role: String,
    /// Controllable event name -> (player, operator) preference.
    #[serde(default)]
    pub actions: BTreeMap<String, ExportAction>,
    /// Component state label -> behavior predicate.
    #[serde(default)]
    pub predicates: BTreeMap<String, String>,
}

fn default_role() -> String {
    "attacker".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportAction {
    pub player: String,
    pub operator: String,
}

/// Parses and validates a model file.
///
/// Validation covers: positive rates, controllable ownership, deterministic
/// per-event transitions, reachable component states, sync entries naming
/// events their players actually have, and private events living in exactly
/// one alphabet.
pub fn parse_model_file(text: &str) -> Result<(ModelFile, Vec<PlayerFsa>), DesError> {
    let file: ModelFile = toml::from_str(text).map_err(|e| DesError::Parse(e.to_string()))?;
    let fsas = build_players(&file)?;
    Ok((file, fsas))
}

pub fn build_players(file: &ModelFile) -> Result<Vec<PlayerFsa>, DesError> {
    let mut event_index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, ev) in file.events.iter().enumerate() {
        if ev.rate <= 0.0 {
            return Err(DesError::NonPositiveRate(ev.name.clone()));
        }
        event_index.insert(ev.name.as_str(), i);
    }
    // Controllable events must belong to one of our players.
    let ours: BTreeSet<&str> = file
        .players
        .iter()
        .filter(|p| p.team == PlayerTeam::Ours)
        .map(|p| p.name.as_str())
        .collect();
    for ev in &file.events {
        if ev.class == EventClass::Controllable {
            match &ev.owner {
                Some(owner) if ours.contains(owner.as_str()) => {}
                _ => return Err(DesError::ControllableNotOurs(ev.name.clone())),
            }
        }
    }

    let mut seen = BTreeSet::new();
    let mut fsas = Vec::new();
    for decl in &file.players {
        if !seen.insert(decl.name.clone()) {
            return Err(DesError::DuplicatePlayer(decl.name.clone()));
        }
        // Collect the state set from the initial state plus transitions.
        let mut states: Vec<String> = vec![decl.initial.clone()];
        let state_idx = |name: &str, states: &mut Vec<String>| match states
            .iter()
            .position(|s| s == name)
        {
            Some(i) => i,
            None => {
                states.push(name.to_string());
                states.len() - 1
            }
        };
        let mut transitions = BTreeMap::new();
        for t in &decl.transitions {
            let from = state_idx(&t.from, &mut states);
            let to = state_idx(&t.to, &mut states);
            let event = *event_index
                .get(t.event.as_str())
                .ok_or_else(|| DesError::UnknownEvent(t.event.clone()))?;
            if transitions.insert((from, event), to).is_some() {
                return Err(DesError::Nondeterministic {
                    player: decl.name.clone(),
                    state: t.from.clone(),
                    event: t.event.clone(),
                });
            }
        }
        // Reachability of component states from the initial one.
        let mut reach = vec![false; states.len()];
        let mut stack = vec![0usize];
        reach[0] = true;
        while let Some(s) = stack.pop() {
            for (&(from, _), &to) in &transitions {
                if from == s && !reach[to] {
                    reach[to] = true;
                    stack.push(to);
                }
            }
        }
        if let Some(i) = reach.iter().position(|r| !r) {
            return Err(DesError::UnreachableComponentState {
                player: decl.name.clone(),
                state: states[i].clone(),
            });
        }
        fsas.push(PlayerFsa {
            name: decl.name.clone(),
            team: decl.team,
            states,
            initial: 0,
            transitions,
        });
    }

    // Sync sanity: named players exist and carry the event.
    let by_name: BTreeMap<&str, &PlayerFsa> = fsas.iter().map(|f| (f.name.as_str(), f)).collect();
    for entry in &file.sync {
        let event = *event_index
            .get(entry.event.as_str())
            .ok_or_else(|| DesError::UnknownEvent(entry.event.clone()))?;
        for pname in &entry.players {
            let fsa = by_name
                .get(pname.as_str())
                .ok_or_else(|| DesError::UnknownEvent(pname.clone()))?;
            if !fsa.alphabet().contains(&event) {
                return Err(DesError::SyncEventMissing {
                    event: entry.event.clone(),
                    player: pname.clone(),
                });
            }
        }
    }

    // Private events must live in exactly one alphabet; unused events are a
    // modeling error too.
    let synced: BTreeSet<&str> = file.sync.iter().map(|s| s.event.as_str()).collect();
    for (name, &idx) in &event_index {
        let holders = fsas.iter().filter(|f| f.alphabet().contains(&idx)).count();
        if holders == 0 {
            return Err(DesError::UnusedEvent(name.to_string()));
        }
        if holders > 1 && !synced.contains(name) {
            return Err(DesError::UnsyncedSharedEvent(name.to_string()));
        }
    }
    Ok(fsas)
}

/// The 2-vs-2 example shipped with the crate.
pub const EXAMPLE_MODEL: &str = include_str!("../../models/two_v_two.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_model_parses_and_validates() {
        let (file, fsas) = parse_model_file(EXAMPLE_MODEL).unwrap();
        assert_eq!(file.players.len(), 5);
        assert_eq!(fsas.len(), 5);
        assert!(file.events.iter().any(|e| e.name == "shoot_p1"));
    }

    #[test]
    fn bad_rate_is_rejected() {
        let text = r#"
name = "bad"
marked = [["*"]]
[[players]]
name = "p1"
team = "ours"
initial = "a"
transitions = [{ from = "a", event = "e", to = "a" }]
[[events]]
name = "e"
class = "uncontrollable"
rate = 0.0
"#;
        assert_eq!(
            parse_model_file(text).unwrap_err(),
            DesError::NonPositiveRate("e".into())
        );
    }

    #[test]
    fn controllable_must_be_ours() {
        let text = r#"
name = "bad"
marked = [["*"]]
[[players]]
name = "o1"
team = "theirs"
initial = "a"
transitions = [{ from = "a", event = "e", to = "a" }]
[[events]]
name = "e"
class = "controllable"
rate = 1.0
owner = "o1"
"#;
        assert_eq!(
            parse_model_file(text).unwrap_err(),
            DesError::ControllableNotOurs("e".into())
        );
    }

    #[test]
    fn sync_naming_a_missing_event_fails() {
        let text = r#"
name = "bad"
marked = [["*", "*"]]
[[players]]
name = "p1"
team = "ours"
initial = "a"
transitions = [{ from = "a", event = "e", to = "a" }]
[[players]]
name = "p2"
team = "ours"
initial = "b"
transitions = []
[[events]]
name = "e"
class = "uncontrollable"
rate = 1.0
[[sync]]
event = "e"
players = ["p1", "p2"]
"#;
        assert_eq!(
            parse_model_file(text).unwrap_err(),
            DesError::SyncEventMissing {
                event: "e".into(),
                player: "p2".into()
            }
        );
    }
}
