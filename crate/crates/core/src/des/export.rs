//! Turns a solved policy into behavior-rule hints the behavior engine can
//! load: one rule per (state, chosen action) with predicates derived from the
//! component state labels.

use super::model::ExportConfig;
use super::solve::Policy;
use super::{GameModel, PlayerTeam};
use std::collections::BTreeSet;
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct ExportResult {
    /// A rule-table fragment in the behavior-engine config grammar.
    pub fragment: String,
    pub warnings: Vec<String>,
}

/// Predicate-map key for one component label, seen from the acting player:
/// the actor's own labels key as `self.<label>`, other own-team labels as
/// `mate.<label>`, and world labels as `<component>.<label>` with possession
/// labels folded to `self`/`mate`.
fn predicate_key(
    model: &GameModel,
    component: usize,
    label: &str,
    actor: &str,
    own_names: &BTreeSet<&str>,
) -> String {
    let comp_name = &model.player_names[component];
    if model.player_teams[component] == PlayerTeam::Ours {
        if comp_name == actor {
            format!("self.{label}")
        } else {
            format!("mate.{label}")
        }
    } else if label == actor {
        format!("{comp_name}.self")
    } else if own_names.contains(label) {
        format!("{comp_name}.mate")
    } else {
        format!("{comp_name}.{label}")
    }
}

/// Maps solved states to rule entries.
///
/// For every finite-value state whose policy chooses an exported action, the
/// state's own-player and world labels become predicates; states with labels
/// missing from the predicate map are omitted with a warning.
pub fn export_policy(model: &GameModel, policy: &Policy, cfg: &ExportConfig) -> ExportResult {
    let mut warnings = Vec::new();
    let mut rules: BTreeSet<(Vec<String>, String)> = BTreeSet::new();
    let own_names: BTreeSet<&str> = model
        .own_players()
        .into_iter()
        .map(|p| model.player_names[p].as_str())
        .collect();

    for state in 0..model.state_count() {
        if model.marked[state] {
            continue;
        }
        for &event in policy.chosen(state) {
            let event_name = &model.events[event].name;
            let Some(action) = cfg.actions.get(event_name) else {
                continue;
            };
            let mut predicates = Vec::new();
            let mut unmapped = None;
            for (p, &component_state) in model.states[state].iter().enumerate() {
                if model.player_teams[p] == PlayerTeam::Theirs {
                    continue;
                }
                let label = &model.player_states[p][component_state];
                let key = predicate_key(model, p, label, &action.player, &own_names);
                match cfg.predicates.get(&key) {
                    Some(pred) if !pred.is_empty() => predicates.push(pred.clone()),
                    Some(_) => {} // explicitly mapped to "no predicate"
                    None => {
                        unmapped = Some(key);
                        break;
                    }
                }
            }
            if let Some(key) = unmapped {
                warnings.push(format!(
                    "state {} omitted: no predicate mapping for {:?}",
                    model.state_label(state),
                    key
                ));
                continue;
            }
            predicates.sort();
            predicates.dedup();
            rules.insert((predicates, action.operator.clone()));
        }
    }

    let mut fragment = String::new();
    for (predicates, operator) in rules {
        let when = predicates
            .iter()
            .map(|p| format!("{p:?}"))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(fragment, "[[rules.{}]]", cfg.role);
        let _ = writeln!(fragment, "when = [{when}]");
        let _ = writeln!(fragment, "operator = {operator:?}");
        let _ = writeln!(fragment);
    }
    ExportResult { fragment, warnings }
}

#[cfg(test)]
mod tests {
    use super::super::compose::compose_file;
    use super::super::model::{parse_model_file, EXAMPLE_MODEL};
    use super::super::solve::solve_policy;
    use super::*;

    #[test]
    fn shipped_model_exports_scoring_rules() {
        let (file, _) = parse_model_file(EXAMPLE_MODEL).unwrap();
        let model = compose_file(&file).unwrap();
        let sol = solve_policy(&model, 1e-9).unwrap();
        let out = export_policy(&model, &sol.policy, &file.export);
        assert!(
            out.fragment.contains("operator = \"score\""),
            "fragment:\n{}\nwarnings: {:?}",
            out.fragment,
            out.warnings
        );
        // A shooting rule requires possession.
        assert!(out.fragment.contains("\"has_ball\""));
    }

    #[test]
    fn fragment_round_trips_through_the_rule_grammar() {
        let (file, _) = parse_model_file(EXAMPLE_MODEL).unwrap();
        let model = compose_file(&file).unwrap();
        let sol = solve_policy(&model, 1e-9).unwrap();
        let out = export_policy(&model, &sol.policy, &file.export);
        let table = crate::behavior::rules::RuleTable::parse(&out.fragment)
            .expect("generated fragment must parse under the behavior config grammar");
        assert!(!table.rules_for_role_name("attacker").is_empty());
    }

    #[test]
    fn unmapped_labels_warn_and_are_omitted() {
        let (mut file, _) = parse_model_file(EXAMPLE_MODEL).unwrap();
        file.export.predicates.clear();
        let model = compose_file(&file).unwrap();
        let sol = solve_policy(&model, 1e-9).unwrap();
        let out = export_policy(&model, &sol.policy, &file.export);
        assert!(out.fragment.is_empty());
        assert!(!out.warnings.is_empty());
    }
}
