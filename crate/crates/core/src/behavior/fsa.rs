//! Operator state machines: states are primitive tasks, arcs carry guards
//! over the robot's world view, and the first satisfied guard wins (priority
//! by declaration order keeps the machines deterministic).

use crate::behavior::team::{CommitmentPhase, CommitmentState, Role};
use crate::behavior::BehaviorEvent;
use crate::field::{FieldModel, Pose};
use crate::fusion::GaussianEstimate;
use crate::geom::{wrap_angle, Point};
use crate::nav::{GuideMode, Obstacle};
use crate::sim::Team;
use crate::RobotId;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Everything guards, rules, and tasks may look at during one tick.
/// A snapshot: it borrows nothing from the agent that may change mid-tick.
pub struct WorldView<'a> {
    pub now: f64,
    pub id: RobotId,
    pub team: Team,
    pub field: &'a FieldModel,
    pub pose: Option<Pose>,
    pub v: f64,
    pub has_ball: bool,
    /// The ball estimate this robot acts on (team-fused when available).
    pub ball: Option<GaussianEstimate>,
    /// Fresh local sighting this robot made itself.
    pub sees_ball: bool,
    pub obstacles: &'a [Obstacle],
    pub role: Role,
    pub roles: &'a BTreeMap<RobotId, Role>,
    pub team_poses: &'a BTreeMap<RobotId, (f64, Pose)>,
    pub bid_winner: Option<RobotId>,
    pub commitment: Option<CommitmentState>,
}

impl WorldView<'_> {
    pub fn attack_sign(&self) -> f64 {
        self.team.attack_sign()
    }

    pub fn opponent_goal_center(&self) -> Point {
        Point::new(self.attack_sign() * self.field.length / 2.0, 0.0)
    }

    pub fn own_goal_center(&self) -> Point {
        Point::new(-self.attack_sign() * self.field.length / 2.0, 0.0)
    }

    pub fn ball_point(&self) -> Option<Point> {
        self.ball.map(|b| Point::new(b.mean.x, b.mean.y))
    }

    pub fn bearing_to(&self, target: &Point) -> Option<f64> {
        let pose = self.pose?;
        let rel = target - pose.position();
        Some(wrap_angle(rel.y.atan2(rel.x) - pose.theta))
    }

    pub fn distance_to(&self, target: &Point) -> Option<f64> {
        self.pose.map(|p| (target - p.position()).norm())
    }
}

/// Where a task or guard points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Ball,
    OpponentGoal,
    /// Between the ball and the own goal, `fraction` of the way toward the ball.
    BallOwnGoalMidpoint { fraction: f64 },
    /// On the own goal line, tracking the ball laterally.
    GoalLine,
    /// The pass commitment's announced reception pose.
    ReceptionPose,
}

impl Target {
    /// Resolves to a world pose (position plus a natural facing), if the view
    /// has enough information.
    pub fn resolve(&self, view: &WorldView) -> Option<Pose> {
        let face = |from: Point, toward: Point| {
            let d = toward - from;
            Pose::new(from.x, from.y, d.y.atan2(d.x))
        };
        match self {
            Target::Ball => {
                let ball = view.ball_point()?;
                Some(face(ball, view.opponent_goal_center()))
            }
            Target::OpponentGoal => {
                let goal = view.opponent_goal_center();
                Some(face(goal, goal))
            }
            Target::BallOwnGoalMidpoint { fraction } => {
                let ball = view.ball_point()?;
                let own = view.own_goal_center();
                let point = own + (ball - own) * *fraction;
                Some(face(point, ball))
            }
            Target::GoalLine => {
                let ball = view.ball_point()?;
                let own = view.own_goal_center();
                let half = view.field.goal_blue.segment.length() / 2.0 - 0.15;
                let x = own.x + view.attack_sign() * 0.35;
                let point = Point::new(x, ball.y.clamp(-half, half));
                Some(face(point, ball))
            }
            Target::ReceptionPose => view.commitment.as_ref().map(|c| c.reception_pose),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Guard {
    Always,
    HasBall,
    NotHasBall,
    BallKnown,
    /// Body-frame bearing to the target within tolerance.
    AlignedTo(Target, f64),
    /// Seconds spent in the current state.
    TimeInState(f64),
    CommitmentActive,
    CommitmentEnded,
    /// The pass was kicked (receiver-side cue to intercept).
    CommitmentKicked,
}

impl Guard {
    pub fn eval(&self, view: &WorldView, entered_at: f64) -> bool {
        match self {
            Guard::Always => true,
            Guard::HasBall => view.has_ball,
            Guard::NotHasBall => !view.has_ball,
            Guard::BallKnown => view.ball.is_some(),
            Guard::AlignedTo(target, tol) => match target.resolve(view) {
                Some(t) => view
                    .bearing_to(&t.position())
                    .is_some_and(|b| b.abs() <= *tol),
                None => false,
            },
            Guard::TimeInState(secs) => view.now - entered_at >= *secs,
            Guard::CommitmentActive => view
                .commitment
                .as_ref()
                .is_some_and(|c| c.commitment.phase == CommitmentPhase::Active),
            Guard::CommitmentEnded => match &view.commitment {
                None => true,
                Some(c) => matches!(
                    c.commitment.phase,
                    CommitmentPhase::Done | CommitmentPhase::Dropped
                ),
            },
            Guard::CommitmentKicked => view.commitment.as_ref().is_some_and(|c| c.kicked),
        }
    }
}

/// One primitive task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    Stop,
    Go { target: Target, mode: GuideMode },
    Align { target: Target },
    Kick { force: f64 },
    SpinSearch,
    Noop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpState {
    pub name: &'static str,
    pub task: Task,
    /// Whether the state holds (implicit self-loop) when no guard fires.
    pub hold: bool,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpArc {
    pub from: usize,
    pub to: usize,
    pub guard: Guard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorFsa {
    pub name: String,
    pub states: Vec<OpState>,
    pub arcs: Vec<OpArc>,
    pub initial: usize,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FsaError {
    #[error("operator {operator:?}: state {state} unreachable from initial")]
    Unreachable { operator: String, state: usize },
}

impl OperatorFsa {
    /// Validates reachability of every state from the initial one.
    pub fn validated(self) -> Result<Self, FsaError> {
        let mut reach = vec![false; self.states.len()];
        reach[self.initial] = true;
        let mut stack = vec![self.initial];
        while let Some(s) = stack.pop() {
            for arc in &self.arcs {
                if arc.from == s && !reach[arc.to] {
                    reach[arc.to] = true;
                    stack.push(arc.to);
                }
            }
        }
        if let Some(state) = reach.iter().position(|r| !r) {
            return Err(FsaError::Unreachable {
                operator: self.name,
                state,
            });
        }
        Ok(self)
    }
}

/// A live instance of an operator.
#[derive(Debug, Clone)]
pub struct RunningOperator {
    pub def: Arc<OperatorFsa>,
    pub state: usize,
    pub entered_at: f64,
    pub done: bool,
}

impl RunningOperator {
    pub fn new(def: Arc<OperatorFsa>, now: f64) -> Self {
        let state = def.initial;
        Self {
            def,
            state,
            entered_at: now,
            done: false,
        }
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn current(&self) -> &OpState {
        &self.def.states[self.state]
    }

    /// Evaluates guards in priority order; takes at most one transition per
    /// tick. With no satisfied guard and no hold, the operator terminates.
    pub fn advance(&mut self, view: &WorldView, events: &mut Vec<BehaviorEvent>) {
        if self.done {
            return;
        }
        if self.current().terminal {
            self.done = true;
            return;
        }
        let fired = self
            .def
            .arcs
            .iter()
            .find(|arc| arc.from == self.state && arc.guard.eval(view, self.entered_at));
        match fired {
            Some(arc) => {
                self.state = arc.to;
                self.entered_at = view.now;
                if self.current().terminal {
                    self.done = true;
                }
            }
            None if !self.current().hold => {
                self.done = true;
                events.push(BehaviorEvent::OperatorExhausted {
                    robot: view.id,
                    operator: self.def.name.clone(),
                    time: view.now,
                });
            }
            None => {}
        }
    }
}

/// Named plugin set multiplexed by the control micro-agent.
#[derive(Debug, Clone, Default)]
pub struct OperatorRegistry {
    map: BTreeMap<String, Arc<OperatorFsa>>,
}

impl OperatorRegistry {
    pub fn install(&mut self, fsa: OperatorFsa) -> Result<(), FsaError> {
        let fsa = fsa.validated()?;
        self.map.insert(fsa.name.clone(), Arc::new(fsa));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Arc<OperatorFsa>> {
        self.map.get(name).cloned()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.map.keys().map(String::as_str).collect()
    }
}
