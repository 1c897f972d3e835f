//! Synchronous product of the player automata, restricted to reachable states.

use super::model::{ModelFile, SyncEntry};
use super::{DesError, GameModel, PlayerFsa};
use std::collections::{BTreeMap, HashMap, VecDeque};

/// Composes the player automata into the game model.
///
/// Events in the sync table move all their participants at once and are
/// enabled only when every participant enables them; all other events are
/// private to their single owner component and interleave.
pub fn compose(
    players: &[PlayerFsa],
    events: &[super::EventSpec],
    sync: &[SyncEntry],
    marked_patterns: &[Vec<String>],
) -> Result<GameModel, DesError> {
    let name_to_idx: BTreeMap<&str, usize> = players
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.as_str(), i))
        .collect();
    let event_idx: BTreeMap<&str, usize> = events
        .iter()
        .enumerate()
        .map(|(i, e)| (e.name.as_str(), i))
        .collect();

    // Participants per event: the sync entry if present, else the single
    // component holding the event in its alphabet.
    let mut participants: Vec<Vec<usize>> = vec![Vec::new(); events.len()];
    for entry in sync {
        let e = *event_idx
            .get(entry.event.as_str())
            .ok_or_else(|| DesError::UnknownEvent(entry.event.clone()))?;
        for p in &entry.players {
            let pi = *name_to_idx
                .get(p.as_str())
                .ok_or_else(|| DesError::UnknownEvent(p.clone()))?;
            if !players[pi].alphabet().contains(&e) {
                return Err(DesError::SyncEventMissing {
                    event: entry.event.clone(),
                    player: p.clone(),
                });
            }
            participants[e].push(pi);
        }
    }
    for (e, parts) in participants.iter_mut().enumerate() {
        if parts.is_empty() {
            let holders: Vec<usize> = players
                .iter()
                .enumerate()
                .filter(|(_, p)| p.alphabet().contains(&e))
                .map(|(i, _)| i)
                .collect();
            match holders.len() {
                0 => return Err(DesError::UnusedEvent(events[e].name.clone())),
                1 => *parts = holders,
                _ => return Err(DesError::UnsyncedSharedEvent(events[e].name.clone())),
            }
        }
    }

    for pat in marked_patterns {
        if pat.len() != players.len() {
            return Err(DesError::PatternLength {
                got: pat.len(),
                expected: players.len(),
            });
        }
    }
    let matches_pattern = |tuple: &[usize]| {
        marked_patterns.iter().any(|pat| {
            pat.iter().enumerate().all(|(p, want)| {
                want == "*" || players[p].states[tuple[p]] == *want
            })
        })
    };

    // Breadth-first exploration of the reachable product.
    let initial: Vec<usize> = players.iter().map(|p| p.initial).collect();
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut states = vec![initial.clone()];
    let mut transitions: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    let mut marked = vec![matches_pattern(&initial)];
    index.insert(initial, 0);
    let mut queue = VecDeque::from([0usize]);

    while let Some(s) = queue.pop_front() {
        let tuple = states[s].clone();
        for (e, parts) in participants.iter().enumerate() {
            let enabled = parts
                .iter()
                .all(|&p| players[p].transitions.contains_key(&(tuple[p], e)));
            if !enabled {
                continue;
            }
            let mut next = tuple.clone();
            for &p in parts {
                next[p] = players[p].transitions[&(tuple[p], e)];
            }
            let target = match index.get(&next) {
                Some(&t) => t,
                None => {
                    let t = states.len();
                    index.insert(next.clone(), t);
                    marked.push(matches_pattern(&next));
                    states.push(next);
                    transitions.push(Vec::new());
                    queue.push_back(t);
                    t
                }
            };
            transitions[s].push((e, target));
        }
    }

    Ok(GameModel {
        player_names: players.iter().map(|p| p.name.clone()).collect(),
        player_teams: players.iter().map(|p| p.team).collect(),
        player_states: players.iter().map(|p| p.states.clone()).collect(),
        events: events.to_vec(),
        states,
        transitions,
        initial: 0,
        marked,
    })
}

/// Convenience: parse a model file and compose it.
pub fn compose_file(file: &ModelFile) -> Result<GameModel, DesError> {
    let players = super::model::build_players(file)?;
    compose(&players, &file.events, &file.sync, &file.marked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::des::{EventClass, EventSpec, PlayerTeam};
    use std::collections::BTreeMap;

    fn event(name: &str, class: EventClass, rate: f64, owner: Option<&str>) -> EventSpec {
        EventSpec {
            name: name.into(),
            class,
            rate,
            owner: owner.map(String::from),
        }
    }

    fn fsa(name: &str, team: PlayerTeam, states: &[&str], arcs: &[(usize, usize, usize)]) -> PlayerFsa {
        let mut transitions = BTreeMap::new();
        for &(from, event, to) in arcs {
            transitions.insert((from, event), to);
        }
        PlayerFsa {
            name: name.into(),
            team,
            states: states.iter().map(|s| s.to_string()).collect(),
            initial: 0,
            transitions,
        }
    }

    #[test]
    fn composing_with_a_unit_component_is_identity_shaped() {
        let events = vec![
            event("a", EventClass::Uncontrollable, 1.0, None),
            event("b", EventClass::Uncontrollable, 1.0, None),
        ];
        let m = fsa(
            "m",
            PlayerTeam::Ours,
            &["s0", "s1"],
            &[(0, 0, 1), (1, 1, 0)],
        );
        let unit = fsa("unit", PlayerTeam::World, &["only"], &[]);
        let combined = compose(
            &[m.clone(), unit],
            &events,
            &[],
            &[vec!["s1".into(), "*".into()]],
        )
        .unwrap();
        assert_eq!(combined.state_count(), 2);
        assert_eq!(combined.transitions[0], vec![(0, 1)]);
        assert_eq!(combined.transitions[1], vec![(1, 0)]);
        assert!(combined.marked[1] && !combined.marked[0]);
    }

    #[test]
    fn private_events_interleave_within_product_bound() {
        let events = vec![
            event("x", EventClass::Uncontrollable, 1.0, None),
            event("y", EventClass::Uncontrollable, 1.0, None),
        ];
        // Two 3-state rings on disjoint events: at most 9 product states.
        let a = fsa(
            "a",
            PlayerTeam::World,
            &["0", "1", "2"],
            &[(0, 0, 1), (1, 0, 2), (2, 0, 0)],
        );
        let b = fsa(
            "b",
            PlayerTeam::World,
            &["0", "1", "2"],
            &[(0, 1, 1), (1, 1, 2), (2, 1, 0)],
        );
        let m = compose(&[a, b], &events, &[], &[vec!["2".into(), "2".into()]]).unwrap();
        assert!(m.state_count() <= 9);
        assert_eq!(m.state_count(), 9); // both rings fully explore
    }

    /// Independent breadth-first oracle over explicit tuples for a toy
    /// 2-vs-2 model (per-player far/near/has_ball plus a ball-free flag).
    #[test]
    fn toy_two_v_two_reachability_matches_bfs_oracle() {
        // Players p1, p2 (ours), o1, o2 (theirs): far/near/has_ball.
        // Ball flag: free/held. Getting the ball syncs a player with the
        // flag; losing it syncs back.
        let mut events = Vec::new();
        let mut arcs: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); 5];
        let names = ["p1", "p2", "o1", "o2"];
        for (i, _) in names.iter().enumerate() {
            let approach = events.len();
            events.push(event(
                &format!("approach_{}", names[i]),
                EventClass::Uncontrollable,
                1.0,
                None,
            ));
            let grab = events.len();
            events.push(event(
                &format!("grab_{}", names[i]),
                EventClass::Uncontrollable,
                1.0,
                None,
            ));
            let lose = events.len();
            events.push(event(
                &format!("lose_{}", names[i]),
                EventClass::Uncontrollable,
                1.0,
                None,
            ));
            arcs[i].push((0, approach, 1)); // far -> near
            arcs[i].push((1, grab, 2)); // near -> has_ball (sync with flag)
            arcs[i].push((2, lose, 0)); // has_ball -> far (sync with flag)
            arcs[4].push((0, grab, 1)); // flag free -> held
            arcs[4].push((1, lose, 0)); // flag held -> free
        }
        let players: Vec<PlayerFsa> = (0..4)
            .map(|i| fsa(names[i], if i < 2 { PlayerTeam::Ours } else { PlayerTeam::Theirs },
                         &["far", "near", "has_ball"], &arcs[i]))
            .chain(std::iter::once(fsa(
                "ball",
                PlayerTeam::World,
                &["free", "held"],
                &arcs[4],
            )))
            .collect();
        let sync: Vec<SyncEntry> = (0..4)
            .flat_map(|i| {
                [
                    SyncEntry {
                        event: format!("grab_{}", names[i]),
                        players: vec![names[i].into(), "ball".into()],
                    },
                    SyncEntry {
                        event: format!("lose_{}", names[i]),
                        players: vec![names[i].into(), "ball".into()],
                    },
                ]
            })
            .collect();
        let marked = vec![vec![
            "has_ball".into(),
            "*".into(),
            "*".into(),
            "*".into(),
            "*".into(),
        ]];
        let model = compose(&players, &events, &sync, &marked).unwrap();

        // Oracle: explicit BFS over raw tuples with hand-coded semantics.
        use std::collections::{HashSet, VecDeque};
        let mut seen: HashSet<[usize; 5]> = HashSet::new();
        let start = [0usize, 0, 0, 0, 0];
        seen.insert(start);
        let mut q = VecDeque::from([start]);
        while let Some(t) = q.pop_front() {
            for i in 0..4 {
                let mut nexts = Vec::new();
                if t[i] == 0 {
                    let mut n = t;
                    n[i] = 1;
                    nexts.push(n);
                }
                if t[i] == 1 && t[4] == 0 {
                    let mut n = t;
                    n[i] = 2;
                    n[4] = 1;
                    nexts.push(n);
                }
                if t[i] == 2 && t[4] == 1 {
                    let mut n = t;
                    n[i] = 0;
                    n[4] = 0;
                    nexts.push(n);
                }
                for n in nexts {
                    if seen.insert(n) {
                        q.push_back(n);
                    }
                }
            }
        }
        assert_eq!(model.state_count(), seen.len());
    }

    #[test]
    fn marking_violations_are_reported_exactly() {
        let events = vec![
            event("win", EventClass::Uncontrollable, 1.0, None),
            event("undo", EventClass::Uncontrollable, 1.0, None),
        ];
        let good = fsa("g", PlayerTeam::World, &["play", "scored"], &[(0, 0, 1)]);
        let m = compose(&[good], &events, &[], &[vec!["scored".into()]]);
        // `undo` is in no alphabet: a modeling error.
        assert_eq!(m.unwrap_err(), DesError::UnusedEvent("undo".into()));

        let events = vec![
            event("win", EventClass::Uncontrollable, 1.0, None),
            event("undo", EventClass::Uncontrollable, 1.0, None),
        ];
        let bad = fsa(
            "g",
            PlayerTeam::World,
            &["play", "scored"],
            &[(0, 0, 1), (1, 1, 0)],
        );
        let model = compose(&[bad], &events, &[], &[vec!["scored".into()]]).unwrap();
        let violations = model.validate_marking();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].from, 1);
        assert_eq!(violations[0].to, 0);

        // Brute-force edge scan agrees.
        let mut count = 0;
        for (s, arcs) in model.transitions.iter().enumerate() {
            for &(_, t) in arcs {
                if model.marked[s] && !model.marked[t] {
                    count += 1;
                }
            }
        }
        assert_eq!(count, violations.len());
    }
}
