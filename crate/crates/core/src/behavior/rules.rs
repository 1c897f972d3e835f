//! The basic logic decision unit: per-role ordered rule lists over simple
//! predicates, loaded from configuration. First matching rule wins and a
//! default standby rule always matches.

use crate::behavior::fsa::{OperatorRegistry, WorldView};
use crate::behavior::team::{CommitmentPhase, Role};
use crate::geom::wrap_angle;
use serde::Deserialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    BallKnown,
    BallUnknown,
    BallFree,
    HasBall,
    TeammateHasBall,
    BidWon,
    BallDistLt(f64),
    BallDistGt(f64),
    GoalDistLt(f64),
    GoalDistGt(f64),
    TeammateGoalDistLt(f64),
    AlignedToGoal(f64),
    PassPreferred,
    CommitmentKicker,
    CommitmentReceiver,
    BallOwnHalf,
    BallOppHalf,
}

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("unknown predicate {0:?}")]
    UnknownPredicate(String),
    #[error("predicate {0:?} needs a numeric argument")]
    BadArgument(String),
    #[error("rule tables: {0}")]
    Parse(String),
    #[error("unknown role section {0:?}")]
    UnknownRole(String),
}

impl Predicate {
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let (name, arg) = match text.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (text, None),
        };
        let num = || -> Result<f64, RuleError> {
            arg.and_then(|a| a.parse().ok())
                .ok_or_else(|| RuleError::BadArgument(text.to_string()))
        };
        Ok(match name {
            "ball_known" => Predicate::BallKnown,
            "ball_unknown" => Predicate::BallUnknown,
            "ball_free" => Predicate::BallFree,
            "has_ball" => Predicate::HasBall,
            "teammate_has_ball" => Predicate::TeammateHasBall,
            "bid_won" => Predicate::BidWon,
            "ball_dist_lt" => Predicate::BallDistLt(num()?),
            "ball_dist_gt" => Predicate::BallDistGt(num()?),
            "goal_dist_lt" => Predicate::GoalDistLt(num()?),
            "goal_dist_gt" => Predicate::GoalDistGt(num()?),
            "teammate_goal_dist_lt" => Predicate::TeammateGoalDistLt(num()?),
            "aligned_to_goal" => Predicate::AlignedToGoal(num()?),
            "pass_preferred" => Predicate::PassPreferred,
            "commitment_kicker" => Predicate::CommitmentKicker,
            "commitment_receiver" => Predicate::CommitmentReceiver,
            "ball_own_half" => Predicate::BallOwnHalf,
            "ball_opp_half" => Predicate::BallOppHalf,
            _ => return Err(RuleError::UnknownPredicate(text.to_string())),
        })
    }

    pub fn eval(&self, view: &WorldView) -> bool {
        match self {
            Predicate::BallKnown => view.ball.is_some(),
            Predicate::BallUnknown => view.ball.is_none(),
            Predicate::BallFree => !view.has_ball && view.ball.is_some() && !teammate_has_ball(view),
            Predicate::HasBall => view.has_ball,
            Predicate::TeammateHasBall => teammate_has_ball(view),
            Predicate::BidWon => view.bid_winner == Some(view.id),
            Predicate::BallDistLt(x) => ball_dist(view).is_some_and(|d| d < *x),
            Predicate::BallDistGt(x) => ball_dist(view).is_some_and(|d| d > *x),
            Predicate::GoalDistLt(x) => view
                .distance_to(&view.opponent_goal_center())
                .is_some_and(|d| d < *x),
            Predicate::GoalDistGt(x) => view
                .distance_to(&view.opponent_goal_center())
                .is_some_and(|d| d > *x),
            Predicate::TeammateGoalDistLt(x) => {
                let goal = view.opponent_goal_center();
                view.team_poses.iter().any(|(id, (_, pose))| {
                    *id != view.id && (goal - pose.position()).norm() < *x
                })
            }
            Predicate::AlignedToGoal(tol) => view
                .bearing_to(&view.opponent_goal_center())
                .is_some_and(|b| b.abs() <= *tol),
            Predicate::PassPreferred => pass_preferred(view).is_some(),
            Predicate::CommitmentKicker => view.commitment.as_ref().is_some_and(|c| {
                c.is_kicker
                    && matches!(
                        c.commitment.phase,
                        CommitmentPhase::Proposed | CommitmentPhase::Active
                    )
            }),
            Predicate::CommitmentReceiver => view.commitment.as_ref().is_some_and(|c| {
                !c.is_kicker && c.commitment.phase == CommitmentPhase::Active
            }),
            Predicate::BallOwnHalf => view
                .ball_point()
                .is_some_and(|b| b.x * view.attack_sign() < 0.0),
            Predicate::BallOppHalf => view
                .ball_point()
                .is_some_and(|b| b.x * view.attack_sign() > 0.0),
        }
    }
}

fn ball_dist(view: &WorldView) -> Option<f64> {
    let ball = view.ball_point()?;
    view.distance_to(&ball)
}

fn teammate_has_ball(view: &WorldView) -> bool {
    // Approximated from announced poses: a teammate within holding reach of
    // the estimated ball.
    let Some(ball) = view.ball_point() else {
        return false;
    };
    view.team_poses.iter().any(|(id, (_, pose))| {
        *id != view.id && (ball - pose.position()).norm() < 0.45
    })
}

/// Picks a pass receiver: a teammate meaningfully closer to the opponent
/// goal with a clear corridor. Returns the chosen receiver.
pub fn pass_preferred(view: &WorldView) -> Option<crate::RobotId> {
    if !view.has_ball {
        return None;
    }
    let pose = view.pose?;
    let goal = view.opponent_goal_center();
    let own_goal_dist = (goal - pose.position()).norm();
    let mut best: Option<(f64, crate::RobotId)> = None;
    for (&id, &(_, mate)) in view.team_poses {
        if id == view.id {
            continue;
        }
        if view.roles.get(&id) == Some(&Role::Goalkeeper) {
            continue;
        }
        let gain = own_goal_dist - (goal - mate.position()).norm();
        if gain < 1.0 {
            continue; // not meaningfully better positioned
        }
        let corridor_clear = view.obstacles.iter().all(|o| {
            !crate::geom::segment_intersects_disc(
                &pose.position(),
                &mate.position(),
                &o.center,
                o.radius + 0.15,
            )
        });
        if !corridor_clear {
            continue;
        }
        // Prefer the biggest positional gain; ties to the lower id.
        if best.map_or(true, |(g, bid)| gain > g || (gain == g && id < bid)) {
            best = Some((gain, id));
        }
    }
    best.map(|(_, id)| id)
}

/// Reception pose announced to the receiver: where the receiver stands now,
/// facing the kicker.
pub fn reception_pose(view: &WorldView, receiver: crate::RobotId) -> Option<crate::field::Pose> {
    let (_, mate) = view.team_poses.get(&receiver)?;
    let kicker = view.pose?;
    let rel = kicker.position() - mate.position();
    Some(crate::field::Pose::new(
        mate.x,
        mate.y,
        wrap_angle(rel.y.atan2(rel.x)),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub when: Vec<Predicate>,
    pub operator: String,
}

/// Ordered rule lists per role, parsed from the TOML grammar:
///
/// ```toml
/// [[rules.attacker]]
/// when = ["ball_known", "bid_won"]
/// operator = "go"
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleTable {
    by_role: BTreeMap<String, Vec<Rule>>,
}

#[derive(Debug, Deserialize)]
struct RawTable {
    #[serde(default)]
    rules: BTreeMap<String, Vec<RawRule>>,
}

#[derive(Debug, Deserialize)]
struct RawRule {
    #[serde(default)]
    when: Vec<String>,
    operator: String,
}

impl RuleTable {
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let raw: RawTable = toml::from_str(text).map_err(|e| RuleError::Parse(e.to_string()))?;
        let mut by_role = BTreeMap::new();
        for (role, rules) in raw.rules {
            let mut parsed = Vec::new();
            for r in rules {
                let when = r
                    .when
                    .iter()
                    .map(|p| Predicate::parse(p))
                    .collect::<Result<Vec<_>, _>>()?;
                parsed.push(Rule {
                    when,
                    operator: r.operator,
                });
            }
            by_role.insert(role, parsed);
        }
        Ok(Self { by_role })
    }

    pub fn standard() -> Self {
        Self::parse(DEFAULT_RULES).expect("default rule table parses")
    }

    /// Merges another table's rules ahead of this table's per role (used to
    /// load planner-generated hints with priority).
    pub fn with_overrides(mut self, overrides: RuleTable) -> Self {
        for (role, mut rules) in overrides.by_role {
            let entry = self.by_role.entry(role).or_default();
            rules.extend(entry.drain(..));
            *entry = rules;
        }
        self
    }

    pub fn rules_for(&self, role: Role) -> &[Rule] {
        self.rules_for_role_name(role_section(role))
    }

    pub fn rules_for_role_name(&self, name: &str) -> &[Rule] {
        self.by_role.get(name).map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn role_section(role: Role) -> &'static str {
    match role {
        Role::Goalkeeper => "goalkeeper",
        Role::Defender => "defender",
        Role::Attacker => "attacker",
        Role::FullPlayer => "fullplayer",
    }
}

/// Behavior selection: first matching rule wins; a final standby fallback
/// keeps selection total. A selected operator missing from the registry also
/// falls back to standby with an error note.
pub fn select_behavior(
    view: &WorldView,
    role: Role,
    table: &RuleTable,
    registry: &OperatorRegistry,
) -> (String, Option<String>) {
    for rule in table.rules_for(role) {
        if rule.when.iter().all(|p| p.eval(view)) {
            if registry.contains(&rule.operator) {
                return (rule.operator.clone(), None);
            }
            return (
                "standby".to_string(),
                Some(format!("operator {:?} not installed", rule.operator)),
            );
        }
    }
    ("standby".to_string(), None)
}

pub const DEFAULT_RULES: &str = r#"
[[rules.goalkeeper]]
when = ["ball_known"]
operator = "cover_goal"

[[rules.goalkeeper]]
when = []
operator = "standby"

[[rules.attacker]]
when = ["commitment_kicker"]
operator = "pass_kick"

[[rules.attacker]]
when = ["commitment_receiver"]
operator = "pass_receive"

[[rules.attacker]]
when = ["has_ball", "aligned_to_goal:0.25", "goal_dist_lt:4.5"]
operator = "score"

[[rules.attacker]]
when = ["has_ball", "pass_preferred"]
operator = "pass_kick"

[[rules.attacker]]
when = ["has_ball"]
operator = "dribble"

[[rules.attacker]]
when = ["ball_known", "bid_won"]
operator = "go"

[[rules.attacker]]
when = []
operator = "standby"

[[rules.defender]]
when = ["commitment_receiver"]
operator = "pass_receive"

[[rules.defender]]
when = ["has_ball"]
operator = "dribble"

[[rules.defender]]
when = ["ball_known", "bid_won"]
operator = "go"

[[rules.defender]]
when = ["ball_known"]
operator = "cover"

[[rules.defender]]
when = []
operator = "standby"

[[rules.fullplayer]]
when = ["commitment_kicker"]
operator = "pass_kick"

[[rules.fullplayer]]
when = ["commitment_receiver"]
operator = "pass_receive"

[[rules.fullplayer]]
when = ["has_ball", "aligned_to_goal:0.25", "goal_dist_lt:4.5"]
operator = "score"

[[rules.fullplayer]]
when = ["has_ball", "pass_preferred"]
operator = "pass_kick"

[[rules.fullplayer]]
when = ["has_ball"]
operator = "dribble"

[[rules.fullplayer]]
when = ["ball_known", "bid_won"]
operator = "go"

[[rules.fullplayer]]
when = ["ball_known"]
operator = "cover"

[[rules.fullplayer]]
when = []
operator = "standby"
"#;
