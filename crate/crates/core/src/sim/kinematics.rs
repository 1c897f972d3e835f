//! Differential-drive (unicycle) kinematics with an exact circular-arc update.

use crate::field::Pose;
use crate::geom::wrap_angle;
use serde::{Deserialize, Serialize};

/// Ground-truth state of one robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    /// Linear speed along the heading, m/s.
    pub v: f64,
    /// Angular speed, rad/s.
    pub omega: f64,
    /// Ball currently held against the front.
    pub has_ball: bool,
}

impl RobotState {
    pub fn at(pose: Pose) -> Self {
        Self {
            pose,
            v: 0.0,
            omega: 0.0,
            has_ball: false,
        }
    }
}

/// Platform limits applied to every command.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RobotParams {
    pub radius: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub accel_max: f64,
    /// Odometry noise, per sqrt-second of integration.
    pub odom_xy_sigma: f64,
    pub odom_theta_sigma: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            radius: 0.24,
            v_max: 2.0,
            omega_max: 3.0,
            accel_max: 1.5,
            odom_xy_sigma: 0.01,
            odom_theta_sigma: 0.01,
        }
    }
}

/// What actually happened to a command after clamping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    pub v_clamped: bool,
    pub omega_clamped: bool,
    /// Realized linear acceleration over the step, m/s^2.
    pub accel: f64,
}

/// Advances one robot along an exact arc for `dt` seconds.
///
/// The commanded speed is clamped to the velocity and acceleration limits
/// and then held constant over the step, so the pose moves along a circular
/// arc of curvature `omega/v` (a straight line when `omega` is zero). The
/// body-frame velocity never has a lateral component.
pub fn step_robot(s: &RobotState, v_cmd: f64, omega_cmd: f64, dt: f64, p: &RobotParams) -> (RobotState, StepInfo) {
    debug_assert!(dt > 0.0);
    let v_reachable = (s.v - p.accel_max * dt, s.v + p.accel_max * dt);
    let v = v_cmd
        .clamp(-p.v_max, p.v_max)
        .clamp(v_reachable.0, v_reachable.1);
    let omega = omega_cmd.clamp(-p.omega_max, p.omega_max);
    let info = StepInfo {
        v_clamped: (v - v_cmd).abs() > 1e-12,
        omega_clamped: (omega - omega_cmd).abs() > 1e-12,
        accel: (v - s.v) / dt,
    };

    let theta = s.pose.theta;
    let (x, y) = if omega.abs() < 1e-12 {
        (
            s.pose.x + v * theta.cos() * dt,
            s.pose.y + v * theta.sin() * dt,
        )
    } else {
        let r = v / omega;
        let theta_end = theta + omega * dt;
        (
            s.pose.x + r * (theta_end.sin() - theta.sin()),
            s.pose.y - r * (theta_end.cos() - theta.cos()),
        )
    };
    (
        RobotState {
            pose: Pose::new(x, y, wrap_angle(theta + omega * dt)),
            v,
            omega,
            has_ball: s.has_ball,
        },
        info,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn params() -> RobotParams {
        RobotParams {
            accel_max: 10.0, // wide-open limits for the kinematic examples
            v_max: 10.0,
            omega_max: 10.0,
            ..RobotParams::default()
        }
    }

    #[test]
    fn straight_motion() {
        let s = RobotState::at(Pose::origin());
        let (next, info) = step_robot(&s, 1.0, 0.0, 1.0, &params());
        assert_abs_diff_eq!(next.pose.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(next.pose.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(next.pose.theta, 0.0);
        assert!(!info.v_clamped);
    }

    #[test]
    fn pure_rotation() {
        let s = RobotState::at(Pose::origin());
        let (next, _) = step_robot(&s, 0.0, FRAC_PI_2, 1.0, &params());
        assert_abs_diff_eq!(next.pose.x, 0.0);
        assert_abs_diff_eq!(next.pose.y, 0.0);
        assert_abs_diff_eq!(next.pose.theta, FRAC_PI_2);
    }

    /// Fine-step explicit integration as the independent oracle for the arc
    /// update: midpoint steps converge to the exact arc well inside 1e-6.
    fn integrate_fine(start: &Pose, v: f64, omega: f64, dt: f64, n: usize) -> Pose {
        let h = dt / n as f64;
        let mut x = start.x;
        let mut y = start.y;
        let mut theta = start.theta;
        for _ in 0..n {
            let mid = theta + omega * h / 2.0;
            x += v * mid.cos() * h;
            y += v * mid.sin() * h;
            theta += omega * h;
        }
        Pose::new(x, y, theta)
    }

    #[test]
    fn arc_matches_fine_integration() {
        let start = Pose::new(0.7, -1.3, 0.9);
        let s = RobotState {
            pose: start,
            v: 1.0,
            omega: 1.0,
            has_ball: false,
        };
        let (next, _) = step_robot(&s, 1.0, 1.0, PI, &params());
        let oracle = integrate_fine(&start, 1.0, 1.0, PI, 30_000);
        assert_abs_diff_eq!(next.pose.x, oracle.x, epsilon = 1e-6);
        assert_abs_diff_eq!(next.pose.y, oracle.y, epsilon = 1e-6);
        assert_abs_diff_eq!(next.pose.theta, oracle.theta, epsilon = 1e-6);
    }

    #[test]
    fn commands_are_clamped_and_reported() {
        let p = RobotParams::default();
        let s = RobotState::at(Pose::origin());
        let (next, info) = step_robot(&s, 5.0, 5.0, 0.01, &p);
        assert!(info.v_clamped && info.omega_clamped);
        // From rest the acceleration limit binds before v_max does.
        assert_abs_diff_eq!(next.v, p.accel_max * 0.01);
        assert_abs_diff_eq!(next.omega, p.omega_max);
        assert_abs_diff_eq!(info.accel, p.accel_max);
    }
}
