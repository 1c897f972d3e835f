//! Expected time-to-goal minimization by uniformization and value iteration.

use super::{DesError, EventClass, GameModel, PlayerTeam};

/// Per-state controllable selection: at most one event per own player.
/// States where nothing is controllable (or that are marked) carry an empty
/// choice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub choices: Vec<Vec<usize>>,
}

impl Policy {
    pub fn chosen(&self, state: usize) -> &[usize] {
        &self.choices[state]
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Minimal expected time to the marked set, seconds;
    /// `f64::INFINITY` where no policy reaches it with probability one.
    pub values: Vec<f64>,
    pub policy: Policy,
    /// Uniformization rate used by the iteration.
    pub lambda: f64,
    pub sweeps: usize,
}

/// Enabled transitions of a state under "these controllables are on".
/// Uncontrollable events are always on.
fn active_transitions<'m>(
    model: &'m GameModel,
    state: usize,
    chosen: &[usize],
) -> impl Iterator<Item = (usize, usize)> + 'm {
    let chosen: Vec<usize> = chosen.to_vec();
    model.transitions[state]
        .iter()
        .copied()
        .filter(move |&(e, _)| {
            model.events[e].class == EventClass::Uncontrollable || chosen.contains(&e)
        })
}

/// All controllable-selection options of a state: the cartesian product over
/// our players of their enabled controllable events plus an idle option, so
/// a robot is never forced to issue a harmful action. The empty selection
/// appears when every robot idles or nothing is controllable.
fn choice_options(model: &GameModel, state: usize) -> Vec<Vec<usize>> {
    let own = model.own_players();
    let mut per_player: Vec<Vec<Option<usize>>> = Vec::new();
    for &p in &own {
        let mut events: Vec<usize> = model.transitions[state]
            .iter()
            .filter(|&&(e, _)| {
                model.events[e].class == EventClass::Controllable
                    && model.events[e].owner.as_deref() == Some(model.player_names[p].as_str())
            })
            .map(|&(e, _)| e)
            .collect();
        events.sort_unstable();
        events.dedup();
        if !events.is_empty() {
            let mut options: Vec<Option<usize>> = events.into_iter().map(Some).collect();
            options.push(None);
            per_player.push(options);
        }
    }
    let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
    for options in per_player {
        let mut next = Vec::with_capacity(combos.len() * options.len());
        for combo in &combos {
            for &e in &options {
                let mut c = combo.clone();
                if let Some(e) = e {
                    c.push(e);
                }
                next.push(c);
            }
        }
        combos = next;
    }
    combos
}

/// States from which some policy reaches the marked set with probability 1
/// (the classic nested fixpoint over "stay in Z, make progress into Y").
fn prob1_exists(model: &GameModel) -> Vec<bool> {
    let n = model.state_count();
    let mut z: Vec<bool> = vec![true; n];
    loop {
        // Inner least fixpoint: reach marked while staying inside z.
        let mut y: Vec<bool> = model.marked.clone();
        loop {
            let mut changed = false;
            for s in 0..n {
                if y[s] {
                    continue;
                }
                let ok = choice_options(model, s).into_iter().any(|chosen| {
                    let mut any_into_y = false;
                    let mut all_in_z = true;
                    let mut any_edge = false;
                    for (_, t) in active_transitions(model, s, &chosen) {
                        any_edge = true;
                        if !z[t] {
                            all_in_z = false;
                        }
                        if y[t] {
                            any_into_y = true;
                        }
                    }
                    any_edge && all_in_z && any_into_y
                });
                if ok {
                    y[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if y == z {
            return z;
        }
        z = y;
    }
}

/// Solves the minimal expected hitting time of the marked set.
///
/// The continuous-time chain is uniformized at the maximal total outflow and
/// iterated to a sup-norm residual of `tol`. States that cannot reach the
/// marked set under any policy come back with infinite value and are excluded
/// from the convergence test.
pub fn solve_policy(model: &GameModel, tol: f64) -> Result<Solution, DesError> {
    let n = model.state_count();
    if !model.marked.iter().any(|&m| m) {
        return Err(DesError::NoMarkedStates);
    }
    let violations = model.validate_marking();
    if !violations.is_empty() {
        return Err(DesError::MarkedNotAbsorbing(violations.len()));
    }
    debug_assert!(model
        .player_teams
        .iter()
        .any(|&t| t == PlayerTeam::Ours || t == PlayerTeam::World));

    let finite = prob1_exists(model);
    let state_choices: Vec<Vec<Vec<usize>>> = (0..n).map(|s| choice_options(model, s)).collect();

    // Uniformization rate: the largest total outflow over states and choices.
    let mut lambda: f64 = 0.0;
    for s in 0..n {
        for chosen in &state_choices[s] {
            let total: f64 = active_transitions(model, s, chosen)
                .map(|(e, _)| model.events[e].rate)
                .sum();
            lambda = lambda.max(total);
        }
    }
    if lambda <= 0.0 {
        // No events anywhere; only marked states can be finite.
        let values: Vec<f64> = (0..n)
            .map(|s| if model.marked[s] { 0.0 } else { f64::INFINITY })
            .collect();
        return Ok(Solution {
            values,
            policy: Policy {
                choices: vec![Vec::new(); n],
            },
            lambda: 0.0,
            sweeps: 0,
        });
    }

    let mut values: Vec<f64> = (0..n)
        .map(|s| {
            if model.marked[s] {
                0.0
            } else if finite[s] {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let max_sweeps = 2_000_000;
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut residual: f64 = 0.0;
        let mut next = values.clone();
        for s in 0..n {
            if model.marked[s] || !finite[s] {
                continue;
            }
            let mut best = f64::INFINITY;
            for chosen in &state_choices[s] {
                let mut q = 1.0 / lambda;
                let mut outflow = 0.0;
                let mut ok = true;
                for (e, t) in active_transitions(model, s, chosen) {
                    let rate = model.events[e].rate;
                    outflow += rate;
                    if values[t].is_infinite() {
                        ok = false;
                        break;
                    }
                    q += rate / lambda * values[t];
                }
                if !ok {
                    continue;
                }
                q += (1.0 - outflow / lambda) * values[s];
                best = best.min(q);
            }
            next[s] = best;
            if best.is_finite() {
                residual = residual.max((best - values[s]).abs());
            }
        }
        values = next;
        if residual <= tol {
            break;
        }
        if sweeps >= max_sweeps {
            return Err(DesError::NotConverged(max_sweeps));
        }
    }

    // Policy extraction: per state, the choice minimizing the one-step
    // lookahead; ties break toward the lexicographically smallest tuple.
    let mut choices: Vec<Vec<usize>> = Vec::with_capacity(n);
    for s in 0..n {
        if model.marked[s] || !finite[s] {
            choices.push(Vec::new());
            continue;
        }
        let mut best: Option<(f64, &Vec<usize>)> = None;
        for chosen in &state_choices[s] {
            let mut q = 1.0 / lambda;
            let mut outflow = 0.0;
            let mut ok = true;
            for (e, t) in active_transitions(model, s, chosen) {
                let rate = model.events[e].rate;
                outflow += rate;
                if values[t].is_infinite() {
                    ok = false;
                    break;
                }
                q += rate / lambda * values[t];
            }
            if !ok {
                continue;
            }
            q += (1.0 - outflow / lambda) * values[s];
            let better = match &best {
                None => true,
                Some((bq, bc)) => q < bq - 1e-15 || ((q - bq).abs() <= 1e-15 && chosen < bc),
            };
            if better {
                best = Some((q, chosen));
            }
        }
        choices.push(best.map(|(_, c)| c.clone()).unwrap_or_default());
    }
    Ok(Solution {
        values,
        policy: Policy { choices },
        lambda,
        sweeps,
    })
}

/// Residual of the continuous-time Bellman equations at a solution: for each
/// finite unmarked state, `V(s) - min_c (1 + sum rate*V(t)) / outflow`.
pub fn bellman_residual(model: &GameModel, values: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..model.state_count() {
        if model.marked[s] || values[s].is_infinite() {
            continue;
        }
        let mut best = f64::INFINITY;
        for chosen in choice_options(model, s) {
            let mut acc = 1.0;
            let mut outflow = 0.0;
            let mut ok = true;
            for (e, t) in active_transitions(model, s, &chosen) {
                if values[t].is_infinite() {
                    ok = false;
                    break;
                }
                outflow += model.events[e].rate;
                acc += model.events[e].rate * values[t];
            }
            if ok && outflow > 0.0 {
                best = best.min(acc / outflow);
            }
        }
        if best.is_finite() {
            worst = worst.max((values[s] - best).abs());
        }
    }
    worst
}

/// Expected hitting times of a *fixed* policy by direct linear solve of the
/// first-passage equations (test oracle; dense LU).
pub fn policy_values_linear(model: &GameModel, policy: &Policy) -> Vec<f64> {
    use nalgebra::{DMatrix, DVector};
    let n = model.state_count();
    let finite: Vec<usize> = (0..n).filter(|&s| !model.marked[s]).collect();
    let index: std::collections::BTreeMap<usize, usize> =
        finite.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let m = finite.len();
    if m == 0 {
        return vec![0.0; n];
    }
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    let mut absorbing_ok = vec![false; m];
    for (i, &s) in finite.iter().enumerate() {
        let mut outflow = 0.0;
        for (e, t) in active_transitions(model, s, policy.chosen(s)) {
            let rate = model.events[e].rate;
            outflow += rate;
            if !model.marked[t] {
                a[(i, index[&t])] -= rate;
            }
        }
        a[(i, i)] += outflow;
        b[i] = 1.0;
        absorbing_ok[i] = outflow > 0.0;
    }
    let mut values = vec![0.0; n];
    match a.lu().solve(&b) {
        Some(x) => {
            for (i, &s) in finite.iter().enumerate() {
                values[s] = if absorbing_ok[i] && x[i].is_finite() && x[i] >= 0.0 {
                    x[i]
                } else {
                    f64::INFINITY
                };
            }
        }
        None => {
            for &s in &finite {
                values[s] = f64::INFINITY;
            }
        }
    }
    values
}

/// Every stationary policy of a model (cartesian product of per-state
/// choices). Exponential; only for tiny oracle models.
pub fn enumerate_policies(model: &GameModel) -> Vec<Policy> {
    let n = model.state_count();
    let per_state: Vec<Vec<Vec<usize>>> = (0..n).map(|s| choice_options(model, s)).collect();
    let mut all: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for options in &per_state {
        let mut next = Vec::with_capacity(all.len() * options.len());
        for partial in &all {
            for option in options {
                let mut p = partial.clone();
                p.push(option.clone());
                next.push(p);
            }
        }
        all = next;
    }
    all.into_iter().map(|choices| Policy { choices }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    use crate::des::testutil::chain_model;

    #[test]
    fn single_controllable_event_value_is_inverse_rate() {
        let m = chain_model(
            &["start", "goal"],
            &[("shoot", EventClass::Controllable, 0.5)],
            &[(0, 0, 1)],
            &[1],
        );
        let sol = solve_policy(&m, 1e-9).unwrap();
        assert_abs_diff_eq!(sol.values[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.values[1], 0.0);
        assert_eq!(sol.policy.chosen(0), &[0]);
    }

    #[test]
    fn marked_states_have_zero_value() {
        let m = chain_model(
            &["a", "goal"],
            &[("e", EventClass::Uncontrollable, 1.0)],
            &[(0, 0, 1)],
            &[1],
        );
        let sol = solve_policy(&m, 1e-9).unwrap();
        assert_abs_diff_eq!(sol.values[1], 0.0);
    }

    /// Four-state chain with an uncontrollable hazard: linear solve of the
    /// first-passage equations and exhaustive policy enumeration are the
    /// oracles.
    #[test]
    fn four_state_chain_matches_linear_solve_and_enumeration() {
        // 0 -> 1 -> 2 -> goal(3); from 1 a hazard can knock back to 0.
        // At state 1 we can choose a fast risky advance or a slow safe one.
        let m = chain_model(
            &["s0", "s1", "s2", "goal"],
            &[
                ("advance", EventClass::Controllable, 1.0),
                ("risky", EventClass::Controllable, 2.0),
                ("safe", EventClass::Controllable, 0.7),
                ("hazard", EventClass::Uncontrollable, 0.4),
                ("finish", EventClass::Controllable, 1.5),
            ],
            &[
                (0, 0, 1),
                (1, 1, 2), // risky fast hop
                (1, 2, 2), // safe slow hop
                (1, 3, 0), // hazard pushes back
                (2, 4, 3),
            ],
            &[3],
        );
        let sol = solve_policy(&m, 1e-12).unwrap();

        let mut best_values = vec![f64::INFINITY; m.state_count()];
        for policy in enumerate_policies(&m) {
            let values = policy_values_linear(&m, &policy);
            for (s, v) in values.iter().enumerate() {
                if *v < best_values[s] {
                    best_values[s] = *v;
                }
            }
        }
        for s in 0..m.state_count() {
            assert!(
                (sol.values[s] - best_values[s]).abs() < 1e-8,
                "state {s}: {} vs {}",
                sol.values[s],
                best_values[s]
            );
        }
        // The solver's own policy achieves the optimum exactly.
        let own = policy_values_linear(&m, &sol.policy);
        for s in 0..m.state_count() {
            assert!((own[s] - best_values[s]).abs() < 1e-8);
        }
        assert!(bellman_residual(&m, &sol.values) <= 1e-7);
    }

    #[test]
    fn unreachable_goal_states_are_reported_infinite() {
        // State 2 is a trap with no way out.
        let m = chain_model(
            &["s0", "goal", "trap"],
            &[
                ("win", EventClass::Controllable, 1.0),
                ("fall", EventClass::Uncontrollable, 0.5),
                ("spin", EventClass::Uncontrollable, 1.0),
            ],
            &[(0, 0, 1), (0, 1, 2), (2, 2, 2)],
            &[1],
        );
        let sol = solve_policy(&m, 1e-10).unwrap();
        assert!(sol.values[2].is_infinite());
        // s0 can fall into the trap with positive probability, so its
        // expected time is infinite as well.
        assert!(sol.values[0].is_infinite());
    }

    #[test]
    fn hazard_that_returns_keeps_values_finite() {
        let m = chain_model(
            &["s0", "goal", "detour"],
            &[
                ("win", EventClass::Controllable, 1.0),
                ("fall", EventClass::Uncontrollable, 0.5),
                ("recover", EventClass::Uncontrollable, 2.0),
            ],
            &[(0, 0, 1), (0, 1, 2), (2, 2, 0)],
            &[1],
        );
        let sol = solve_policy(&m, 1e-10).unwrap();
        assert!(sol.values[0].is_finite() && sol.values[2].is_finite());
        // Oracle: V0 = (1 + 0.5*V2)/1.5, V2 = 1/2 + V0.
        let v0 = (1.0 + 0.5 * 0.5) / 1.5 / (1.0 - 0.5 / 1.5);
        assert_abs_diff_eq!(sol.values[0], v0, epsilon = 1e-8);
    }

    #[test]
    fn disabling_a_bad_controllable_is_possible() {
        // A controllable self-sabotage event: optimal policy avoids it when a
        // second controllable exists, by picking the good one.
        let m = chain_model(
            &["s0", "goal", "pit"],
            &[
                ("good", EventClass::Controllable, 0.8),
                ("bad", EventClass::Controllable, 5.0),
                ("climb", EventClass::Uncontrollable, 0.1),
            ],
            &[(0, 0, 1), (0, 1, 2), (2, 2, 0)],
            &[1],
        );
        let sol = solve_policy(&m, 1e-10).unwrap();
        assert_eq!(sol.policy.chosen(0), &[0]);
        assert_abs_diff_eq!(sol.values[0], 1.0 / 0.8, epsilon = 1e-8);
    }

    #[test]
    fn marked_to_unmarked_arc_rejected_by_solver() {
        let m = chain_model(
            &["s0", "goal"],
            &[
                ("win", EventClass::Controllable, 1.0),
                ("undo", EventClass::Uncontrollable, 1.0),
            ],
            &[(0, 0, 1), (1, 1, 0)],
            &[1],
        );
        assert_eq!(
            solve_policy(&m, 1e-9).unwrap_err(),
            DesError::MarkedNotAbsorbing(1)
        );
    }
}
