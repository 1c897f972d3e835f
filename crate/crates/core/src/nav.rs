//! Modified potential-fields guidance for a differential-drive robot.
//!
//! The potential is the classic attractive/repulsive sum with one change:
//! each obstacle's repulsion is scaled by a directional weight
//! `w(alpha) = ((1 + cos(alpha)) / 2)^beta`, where `alpha` is the obstacle
//! bearing in the body frame. `beta = 0` recovers the isotropic field; larger
//! `beta` concentrates the repulsion on obstacles ahead, which is what a
//! forward-moving robot needs. The negative spatial gradient maps to a linear
//! acceleration along the heading and an angular speed toward the resultant.
//!
//! Dribbling adds the constraint that the angular speed stays below an affine
//! function of the acceleration/speed ratio; [`Guide`] clamps commands to it
//! and trades acceleration to re-admit the desired turn rate when it can.

use crate::field::Pose;
use crate::geom::{wrap_angle, Point, Vec2};
use crate::localize::PoseEstimate;
use serde::{Deserialize, Serialize};

/// One actuation decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavCommand {
    pub v_cmd: f64,
    pub omega_cmd: f64,
    /// Linear acceleration applied over the control period, m/s^2.
    pub accel: f64,
}

impl NavCommand {
    pub fn stop() -> Self {
        Self {
            v_cmd: 0.0,
            omega_cmd: 0.0,
            accel: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PotentialParams {
    pub k_att: f64,
    pub k_rep: f64,
    /// Repulsion cutoff distance from the obstacle surface, meters.
    pub d0: f64,
    /// Front-weighting exponent; 0 is isotropic.
    pub beta: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self {
            k_att: 1.0,
            k_rep: 0.4,
            d0: 1.2,
            beta: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct DribbleParams {
    /// Turn-rate intercept, rad/s.
    pub c0: f64,
    /// Slope on the acceleration/speed ratio, rad.
    pub c1: f64,
    /// Speed floor in the ratio, m/s.
    pub v_min: f64,
}

impl Default for DribbleParams {
    fn default() -> Self {
        // Matched to the simulator's hold model at its defaults:
        // c0 = contact_mu * ball_friction, c1 = contact_mu.
        Self {
            c0: 0.25,
            c1: 0.5,
            v_min: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlParams {
    /// Steering gain mapping resultant bearing to angular speed.
    pub k_omega: f64,
    /// Control period used to integrate acceleration into `v_cmd`.
    pub dt: f64,
    pub v_max: f64,
    pub accel_max: f64,
    /// Inside this distance of the goal the robot brakes to a stop.
    pub stop_radius: f64,
    /// Seconds without progress before the local-minimum escape turns on.
    pub stall_timeout: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            k_omega: 2.0,
            dt: 0.01,
            v_max: 2.0,
            accel_max: 1.5,
            stop_radius: 0.08,
            stall_timeout: 2.0,
        }
    }
}

/// Surface distance from a point to an obstacle, floored away from zero.
fn surface_distance(p: &Point, o: &Obstacle) -> f64 {
    ((p - o.center).norm() - o.radius).max(1e-3)
}

fn front_weight(alpha: f64, beta: f64) -> f64 {
    ((1.0 + alpha.cos()) / 2.0).max(0.0).powf(beta)
}

/// The scalar potential at `(p, theta)`. Public so tests can finite-difference
/// exactly what the analytic gradient differentiates.
pub fn potential_value(
    p: &Point,
    theta: f64,
    goal: &Point,
    obstacles: &[Obstacle],
    params: &PotentialParams,
) -> f64 {
    let mut u = 0.5 * params.k_att * (p - goal).norm_squared();
    for o in obstacles {
        let d = surface_distance(p, o);
        if d >= params.d0 {
            continue;
        }
        let rep = 0.5 * params.k_rep * (1.0 / d - 1.0 / params.d0).powi(2);
        let delta = o.center - p;
        let alpha = wrap_angle(delta.y.atan2(delta.x) - theta);
        u += front_weight(alpha, params.beta) * rep;
    }
    u
}

/// Analytic negative spatial gradient of [`potential_value`] at fixed heading.
fn potential_force(
    p: &Point,
    theta: f64,
    goal: &Point,
    obstacles: &[Obstacle],
    params: &PotentialParams,
) -> Vec2 {
    let mut force = (goal - p) * params.k_att;
    for o in obstacles {
        let delta = o.center - p;
        let dist = delta.norm();
        let d = surface_distance(p, o);
        if d >= params.d0 || dist < 1e-9 {
            continue;
        }
        let gap = 1.0 / d - 1.0 / params.d0;
        let rep = 0.5 * params.k_rep * gap * gap;
        let drep_dd = -params.k_rep * gap / (d * d);
        // grad d = unit vector from the obstacle toward the robot.
        let grad_d = -delta / dist;

        let alpha = wrap_angle(delta.y.atan2(delta.x) - theta);
        let w = front_weight(alpha, params.beta);
        // grad_p alpha for delta = o - p.
        let grad_alpha = Vec2::new(delta.y, -delta.x) / (dist * dist);
        let dw_dalpha = if params.beta == 0.0 {
            0.0
        } else {
            let base = ((1.0 + alpha.cos()) / 2.0).max(1e-12);
            params.beta * base.powf(params.beta - 1.0) * (-alpha.sin() / 2.0)
        };
        force -= grad_d * (w * drep_dd) + grad_alpha * (dw_dalpha * rep);
    }
    force
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialResult {
    pub command: NavCommand,
    /// The goal lies inside an obstacle disc; the command is best-effort.
    pub unreachable_goal: bool,
}

/// Maps the potential's force at the robot to an actuation command:
/// acceleration along the heading, angular speed toward the resultant.
pub fn potential_command(
    pose: &Pose,
    v: f64,
    goal: &Point,
    obstacles: &[Obstacle],
    params: &PotentialParams,
    ctl: &ControlParams,
) -> PotentialResult {
    let p = pose.position();
    let unreachable_goal = obstacles
        .iter()
        .any(|o| (goal - o.center).norm() <= o.radius);
    let to_goal = (goal - p).norm();
    if to_goal <= ctl.stop_radius {
        // Brake to rest at the goal.
        let accel = (-v / ctl.dt).clamp(-ctl.accel_max, ctl.accel_max);
        return PotentialResult {
            command: NavCommand {
                v_cmd: (v + accel * ctl.dt).max(0.0),
                omega_cmd: 0.0,
                accel,
            },
            unreachable_goal,
        };
    }
    let force = potential_force(&p, pose.theta, goal, obstacles, params);
    let accel_raw = force.dot(&pose.heading());
    let omega_raw = if force.norm() < 1e-12 {
        0.0
    } else {
        ctl.k_omega * wrap_angle(force.y.atan2(force.x) - pose.theta)
    };
    let accel = accel_raw.clamp(-ctl.accel_max, ctl.accel_max);
    let v_cmd = (v + accel * ctl.dt).clamp(0.0, ctl.v_max);
    PotentialResult {
        command: NavCommand {
            v_cmd,
            omega_cmd: omega_raw,
            accel,
        },
        unreachable_goal,
    }
}

/// The dribbling bound: `c0 + c1 * a / max(v, v_min)`, floored at zero.
pub fn dribble_limit(v: f64, a: f64, p: &DribbleParams) -> f64 {
    (p.c0 + p.c1 * a / v.max(p.v_min).max(1e-9)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuideMode {
    Free,
    Dribble,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuideOutput {
    pub command: NavCommand,
    /// No pose has ever been available; the command is a standstill.
    pub standby: bool,
    pub unreachable_goal: bool,
}

/// Dead-reckoning guidance loop.
///
/// Keeps an internal pose integrated from odometry deltas and resets it
/// whenever a fresh trusted estimate arrives, so drift is bounded by the
/// localization cadence.
#[derive(Debug, Clone, Default)]
pub struct Guide {
    pose: Option<Pose>,
    stall_clock: f64,
    last_goal_dist: Option<f64>,
    escape_until: f64,
    escape_sign: f64,
    time: f64,
}

impl Guide {
    pub fn new() -> Self {
        Self::default()
    }

    /// The current dead-reckoned pose, if any estimate was ever seen.
    pub fn pose(&self) -> Option<Pose> {
        self.pose
    }

    /// Integrates odometry and applies any fresh estimate.
    /// A trusted estimate replaces the internal pose exactly; an untrusted
    /// one is adopted only when no pose exists at all.
    pub fn observe(&mut self, fresh: Option<&PoseEstimate>, odom_delta: &Pose) {
        if let Some(pose) = self.pose {
            self.pose = Some(pose.compose(odom_delta));
        }
        if let Some(est) = fresh {
            if est.trusted || self.pose.is_none() {
                self.pose = Some(est.pose);
            }
        }
    }

    /// One guidance step toward `target`: integrate odometry, then command.
    pub fn step(
        &mut self,
        fresh: Option<&PoseEstimate>,
        odom_delta: &Pose,
        target: &Pose,
        mode: GuideMode,
        v: f64,
        obstacles: &[Obstacle],
        potential: &PotentialParams,
        dribble: &DribbleParams,
        ctl: &ControlParams,
    ) -> GuideOutput {
        self.observe(fresh, odom_delta);
        self.command(target, mode, v, obstacles, potential, dribble, ctl)
    }

    /// Computes the command from the current internal pose (odometry already
    /// integrated via [`Guide::observe`]).
    #[allow(clippy::too_many_arguments)]
    pub fn command(
        &mut self,
        target: &Pose,
        mode: GuideMode,
        v: f64,
        obstacles: &[Obstacle],
        potential: &PotentialParams,
        dribble: &DribbleParams,
        ctl: &ControlParams,
    ) -> GuideOutput {
        self.time += ctl.dt;
        let Some(pose) = self.pose else {
            return GuideOutput {
                command: NavCommand::stop(),
                standby: true,
                unreachable_goal: false,
            };
        };

        let goal = target.position();
        let result = potential_command(&pose, v, &goal, obstacles, potential, ctl);
        let mut cmd = result.command;

        // Local-minimum escape: with no progress for a while, bias the turn
        // in a deterministic direction until motion resumes.
        let dist = (goal - pose.position()).norm();
        if let Some(last) = self.last_goal_dist {
            if last - dist > 0.005 || dist <= ctl.stop_radius {
                self.stall_clock = 0.0;
            } else {
                self.stall_clock += ctl.dt;
            }
        }
        self.last_goal_dist = Some(dist);
        if self.stall_clock > ctl.stall_timeout && self.time >= self.escape_until {
            self.escape_until = self.time + 0.5;
            self.escape_sign = if (self.time * 997.0) as u64 % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            self.stall_clock = 0.0;
        }
        if self.time < self.escape_until {
            cmd.omega_cmd += self.escape_sign * 1.5;
            cmd.accel = cmd.accel.max(0.3);
            cmd.v_cmd = (v + cmd.accel * ctl.dt).clamp(0.0, ctl.v_max);
        }

        if mode == GuideMode::Dribble {
            let limit = dribble_limit(v, cmd.accel, dribble);
            if cmd.omega_cmd.abs() > limit {
                // Raising the push re-admits a larger turn rate; solve for
                // the acceleration that makes the desired omega legal.
                let needed =
                    (cmd.omega_cmd.abs() - dribble.c0) * v.max(dribble.v_min) / dribble.c1.max(1e-9);
                let accel = needed.clamp(-ctl.accel_max, ctl.accel_max);
                let limit = dribble_limit(v, accel, dribble);
                cmd.accel = accel;
                cmd.v_cmd = (v + accel * ctl.dt).clamp(0.0, ctl.v_max);
                cmd.omega_cmd = cmd.omega_cmd.clamp(-limit, limit);
            }
        }
        GuideOutput {
            command: cmd,
            standby: false,
            unreachable_goal: result.unreachable_goal,
        }
    }
}
