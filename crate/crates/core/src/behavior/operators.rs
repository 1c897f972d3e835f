//! The built-in operator plugins and the execution of their primitive tasks.

use crate::behavior::fsa::{
    Guard, OpArc, OpState, OperatorFsa, OperatorRegistry, Target, Task, WorldView,
};
use crate::geom::wrap_angle;
use crate::nav::{
    dribble_limit, ControlParams, DribbleParams, Guide, GuideMode, NavCommand, PotentialParams,
};
use serde::{Deserialize, Serialize};

/// What an operator asks the platform to do this tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PrimitiveCommand {
    Nav(NavCommand),
    Kick(f64),
    Noop,
}

/// The standard plugin set. Installing more operators at configuration time
/// requires no change to the machine rules that reference them by name.
pub fn standard_registry(pass_kick_force: f64) -> OperatorRegistry {
    let mut reg = OperatorRegistry::default();
    for fsa in [
        standby(),
        search(),
        go(),
        dribble(),
        score(),
        cover(),
        cover_goal(),
        pass_kick(pass_kick_force),
        pass_receive(),
    ] {
        reg.install(fsa).expect("built-in operators validate");
    }
    reg
}

fn standby() -> OperatorFsa {
    OperatorFsa {
        name: "standby".into(),
        states: vec![OpState {
            name: "hold",
            task: Task::Stop,
            hold: true,
            terminal: false,
        }],
        arcs: vec![],
        initial: 0,
    }
}

fn search() -> OperatorFsa {
    OperatorFsa {
        name: "search".into(),
        states: vec![OpState {
            name: "spin",
            task: Task::SpinSearch,
            hold: true,
            terminal: false,
        }],
        arcs: vec![],
        initial: 0,
    }
}

fn go() -> OperatorFsa {
    OperatorFsa {
        name: "go".into(),
        states: vec![
            OpState {
                name: "approach",
                task: Task::Go {
                    target: Target::Ball,
                    mode: GuideMode::Free,
                },
                hold: true,
                terminal: false,
            },
            OpState {
                name: "done",
                task: Task::Noop,
                hold: false,
                terminal: true,
            },
        ],
        arcs: vec![OpArc {
            from: 0,
            to: 1,
            guard: Guard::HasBall,
        }],
        initial: 0,
    }
}

fn dribble() -> OperatorFsa {
    OperatorFsa {
        name: "dribble".into(),
        states: vec![
            OpState {
                name: "push",
                task: Task::Go {
                    target: Target::OpponentGoal,
                    mode: GuideMode::Dribble,
                },
                hold: true,
                terminal: false,
            },
            OpState {
                name: "done",
                task: Task::Noop,
                hold: false,
                terminal: true,
            },
        ],
        arcs: vec![OpArc {
            from: 0,
            to: 1,
            guard: Guard::NotHasBall,
        }],
        initial: 0,
    }
}

fn score() -> OperatorFsa {
    OperatorFsa {
        name: "score".into(),
        states: vec![
            OpState {
                name: "align",
                task: Task::Align {
                    target: Target::OpponentGoal,
                },
                hold: true,
                terminal: false,
            },
            OpState {
                name: "kick",
                task: Task::Kick { force: 4.5 },
                hold: true,
                terminal: false,
            },
            OpState {
                name: "done",
                task: Task::Noop,
                hold: false,
                terminal: true,
            },
        ],
        arcs: vec![
            OpArc {
                from: 0,
                to: 2,
                guard: Guard::NotHasBall,
            },
            OpArc {
                from: 0,
                to: 1,
                guard: Guard::AlignedTo(Target::OpponentGoal, 0.12),
            },
            OpArc {
                from: 1,
                to: 2,
                guard: Guard::Always,
            },
        ],
        initial: 0,
    }
}

fn cover() -> OperatorFsa {
    OperatorFsa {
        name: "cover".into(),
        states: vec![OpState {
            name: "shadow",
            task: Task::Go {
                target: Target::BallOwnGoalMidpoint { fraction: 0.45 },
                mode: GuideMode::Free,
            },
            hold: true,
            terminal: false,
        }],
        arcs: vec![],
        initial: 0,
    }
}

fn cover_goal() -> OperatorFsa {
    OperatorFsa {
        name: "cover_goal".into(),
        states: vec![OpState {
            name: "block",
            task: Task::Go {
                target: Target::GoalLine,
                mode: GuideMode::Free,
            },
            hold: true,
            terminal: false,
        }],
        arcs: vec![],
        initial: 0,
    }
}

/// Kicker half of the relational pass. Negotiation and drop handling live in
/// the machine; the operator reads the commitment through its guards.
fn pass_kick(force: f64) -> OperatorFsa {
    OperatorFsa {
        name: "pass_kick".into(),
        states: vec![
            OpState {
                name: "negotiate",
                task: Task::Stop,
                hold: true,
                terminal: false,
            },
            OpState {
                name: "align",
                task: Task::Align {
                    target: Target::ReceptionPose,
                },
                hold: true,
                terminal: false,
            },
            OpState {
                name: "kick",
                task: Task::Kick { force },
                hold: true,
                terminal: false,
            },
            OpState {
                name: "await",
                task: Task::Stop,
                hold: true,
                terminal: false,
            },
            OpState {
                name: "done",
                task: Task::Noop,
                hold: false,
                terminal: true,
            },
        ],
        arcs: vec![
            OpArc {
                from: 0,
                to: 4,
                guard: Guard::CommitmentEnded,
            },
            OpArc {
                from: 0,
                to: 1,
                guard: Guard::CommitmentActive,
            },
            OpArc {
                from: 1,
                to: 4,
                guard: Guard::CommitmentEnded,
            },
            OpArc {
                from: 1,
                to: 4,
                guard: Guard::NotHasBall,
            },
            OpArc {
                from: 1,
                to: 2,
                guard: Guard::AlignedTo(Target::ReceptionPose, 0.08),
            },
            OpArc {
                from: 2,
                to: 3,
                guard: Guard::Always,
            },
            OpArc {
                from: 3,
                to: 4,
                guard: Guard::CommitmentEnded,
            },
        ],
        initial: 0,
    }
}

/// Receiver half: hold the reception pose, chase the ball once it flies.
fn pass_receive() -> OperatorFsa {
    OperatorFsa {
        name: "pass_receive".into(),
        states: vec![
            OpState {
                name: "position",
                task: Task::Align { target: Target::Ball },
                hold: true,
                terminal: false,
            },
            OpState {
                name: "intercept",
                task: Task::Go {
                    target: Target::Ball,
                    mode: GuideMode::Free,
                },
                hold: true,
                terminal: false,
            },
            OpState {
                name: "done",
                task: Task::Noop,
                hold: false,
                terminal: true,
            },
        ],
        arcs: vec![
            OpArc {
                from: 0,
                to: 2,
                guard: Guard::CommitmentEnded,
            },
            OpArc {
                from: 0,
                to: 1,
                guard: Guard::CommitmentKicked,
            },
            OpArc {
                from: 1,
                to: 2,
                guard: Guard::HasBall,
            },
            OpArc {
                from: 1,
                to: 2,
                guard: Guard::CommitmentEnded,
            },
        ],
        initial: 0,
    }
}

/// Executes the current primitive task, producing exactly one command.
pub fn execute_task(
    task: &Task,
    view: &WorldView,
    guide: &mut Guide,
    potential: &PotentialParams,
    dribble_params: &DribbleParams,
    ctl: &ControlParams,
) -> PrimitiveCommand {
    match task {
        Task::Noop => PrimitiveCommand::Noop,
        Task::Stop => {
            let accel = (-view.v / ctl.dt).clamp(-ctl.accel_max, ctl.accel_max);
            PrimitiveCommand::Nav(NavCommand {
                v_cmd: (view.v + accel * ctl.dt).max(0.0),
                omega_cmd: 0.0,
                accel,
            })
        }
        Task::SpinSearch => PrimitiveCommand::Nav(NavCommand {
            v_cmd: 0.0,
            omega_cmd: 0.8,
            accel: (-view.v / ctl.dt).clamp(-ctl.accel_max, ctl.accel_max),
        }),
        Task::Kick { force } => PrimitiveCommand::Kick(*force),
        Task::Align { target } => {
            let Some(resolved) = target.resolve(view) else {
                return PrimitiveCommand::Nav(NavCommand::stop());
            };
            let Some(bearing) = view.bearing_to(&resolved.position()) else {
                return PrimitiveCommand::Nav(NavCommand::stop());
            };
            let accel = (-view.v / ctl.dt).clamp(-ctl.accel_max, ctl.accel_max);
            let mut omega = 2.0 * bearing;
            if view.has_ball {
                // Turning with the ball obeys the dribbling bound.
                let limit = dribble_limit(view.v, accel.max(0.0), dribble_params);
                omega = omega.clamp(-limit, limit);
            }
            PrimitiveCommand::Nav(NavCommand {
                v_cmd: (view.v + accel * ctl.dt).max(0.0),
                omega_cmd: omega,
                accel,
            })
        }
        Task::Go { target, mode } => {
            let Some(resolved) = target.resolve(view) else {
                return PrimitiveCommand::Nav(NavCommand::stop());
            };
            let out = guide.command(
                &resolved,
                *mode,
                view.v,
                view.obstacles,
                potential,
                dribble_params,
                ctl,
            );
            PrimitiveCommand::Nav(out.command)
        }
    }
}

/// Steering error helper shared by tests.
pub fn bearing_error(view: &WorldView, target: &Target) -> Option<f64> {
    let t = target.resolve(view)?;
    let pose = view.pose?;
    let rel = t.position() - pose.position();
    Some(wrap_angle(rel.y.atan2(rel.x) - pose.theta))
}
