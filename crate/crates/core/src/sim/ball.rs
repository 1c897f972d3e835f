//! Ball motion: exponential rolling friction, wall reflection, kicks, and the
//! slip model that decides whether a dribbled ball stays held.

use crate::geom::{wrap_angle, Point, Vec2};
use crate::sim::kinematics::RobotState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallState {
    pub position: Point,
    pub velocity: Vec2,
}

impl BallState {
    pub fn at_rest(x: f64, y: f64) -> Self {
        Self {
            position: Point::new(x, y),
            velocity: Vec2::zeros(),
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BallParams {
    pub radius: f64,
    /// Rolling-friction decay rate, 1/s: free speed decays as exp(-friction*t).
    pub friction: f64,
    /// Wall restitution in [0, 1]; the reflected velocity is scaled by it.
    pub restitution: f64,
}

impl Default for BallParams {
    fn default() -> Self {
        Self {
            radius: 0.11,
            friction: 0.5,
            restitution: 0.8,
        }
    }
}

/// Rectangular wall box (inner playable area for the ball center).
#[derive(Debug, Clone, Copy)]
pub struct WallBox {
    pub half_l: f64,
    pub half_w: f64,
}

/// Advances a free ball by `dt`: straight motion, exponential speed decay,
/// then mirror reflection (scaled by restitution) off any wall crossed.
/// Returns the new state and whether a wall was hit.
pub fn step_free_ball(b: &BallState, dt: f64, p: &BallParams, walls: Option<&WallBox>) -> (BallState, bool) {
    debug_assert!(dt > 0.0 && p.friction >= 0.0);
    let mut pos = b.position + b.velocity * dt;
    let mut vel = b.velocity * (-p.friction * dt).exp();
    let mut hit = false;
    if let Some(w) = walls {
        let xb = w.half_l - p.radius;
        let yb = w.half_w - p.radius;
        if pos.x > xb {
            pos.x = 2.0 * xb - pos.x;
            vel.x = -vel.x;
            vel *= p.restitution;
            hit = true;
        } else if pos.x < -xb {
            pos.x = -2.0 * xb - pos.x;
            vel.x = -vel.x;
            vel *= p.restitution;
            hit = true;
        }
        if pos.y > yb {
            pos.y = 2.0 * yb - pos.y;
            vel.y = -vel.y;
            vel *= p.restitution;
            hit = true;
        } else if pos.y < -yb {
            pos.y = -2.0 * yb - pos.y;
            vel.y = -vel.y;
            vel *= p.restitution;
            hit = true;
        }
    }
    (
        BallState {
            position: pos,
            velocity: vel,
        },
        hit,
    )
}

/// Adds a kick impulse along the kicker's heading. Possession is the
/// caller's contract; the engine checks it and logs a warning otherwise.
pub fn kick(b: &BallState, kicker: &RobotState, impulse_speed: f64) -> BallState {
    BallState {
        position: b.position,
        velocity: b.velocity + kicker.pose.heading() * impulse_speed,
    }
}

/// Ball-holding parameters.
///
/// A held ball sits at bearing `beta` on the robot's front arc. Keeping it
/// there through a turn needs lateral contact force; the contact can supply
/// at most `contact_mu * (push acceleration)`, where the push is what keeps
/// the ball rolling against its own ground friction. Lateral demand beyond
/// that budget accumulates as slip until the ball leaves the holding cone,
/// which is what produces the affine angular-speed bound for dribbling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HoldParams {
    /// Holding-cone half angle, rad.
    pub max_bearing: f64,
    /// Extra capture distance beyond touching, m.
    pub capture_slack: f64,
    /// Lateral-to-normal contact force ratio.
    pub contact_mu: f64,
    /// Slip re-grip rate when the lateral budget is not exceeded, 1/s.
    pub slip_damping: f64,
    /// Optional bearing jitter, rad per sqrt-second.
    pub slip_noise_sigma: f64,
}

impl Default for HoldParams {
    fn default() -> Self {
        Self {
            max_bearing: 0.5,
            capture_slack: 0.05,
            contact_mu: 0.5,
            slip_damping: 4.0,
            slip_noise_sigma: 0.0,
        }
    }
}

/// Contact state of a held ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldContact {
    /// Ball bearing in the holder's body frame, rad.
    pub bearing: f64,
    /// Accumulated lateral slip speed, m/s.
    pub slip: f64,
}

pub enum HoldOutcome {
    Held(HoldContact),
    /// Contact broke; the ball separates with the given velocity.
    Lost,
}

/// One time step of the hold model for a robot carrying the ball.
///
/// `accel` is the realized linear acceleration of the holder this step and
/// `noise` an optional bearing perturbation already scaled for `dt`.
pub fn step_hold(
    contact: &HoldContact,
    holder: &RobotState,
    accel: f64,
    dt: f64,
    ball: &BallParams,
    hold: &HoldParams,
    robot_radius: f64,
    noise: f64,
) -> HoldOutcome {
    let d_c = robot_radius + ball.radius;
    // Normal push needed to hold station: overcome ball friction plus the
    // holder's own acceleration. Contact can only push.
    let push = accel + ball.friction * holder.v;
    if push <= 0.0 {
        return HoldOutcome::Lost; // ball rolls ahead of a braking robot
    }
    // Lateral demand of the commanded arc vs. the contact friction budget.
    let demand = (holder.v * holder.omega).abs() + d_c * holder.omega * holder.omega;
    let budget = hold.contact_mu * push;
    let excess = demand - budget;
    let mut slip = contact.slip;
    if excess > 0.0 {
        slip += excess * dt;
    } else {
        slip *= (-hold.slip_damping * dt).exp();
    }
    let drift = -holder.omega.signum() * slip / d_c;
    let bearing = wrap_angle(contact.bearing + drift * dt + noise);
    if bearing.abs() > hold.max_bearing {
        return HoldOutcome::Lost;
    }
    HoldOutcome::Held(HoldContact { bearing, slip })
}

/// Field-frame attachment point of a held ball.
pub fn attach_point(holder: &RobotState, bearing: f64, robot_radius: f64, ball_radius: f64) -> Point {
    let d_c = robot_radius + ball_radius;
    let dir = holder.pose.theta + bearing;
    Point::new(
        holder.pose.x + d_c * dir.cos(),
        holder.pose.y + d_c * dir.sin(),
    )
}

/// Velocity of the attachment point (used when the ball detaches).
pub fn attach_velocity(holder: &RobotState, bearing: f64, robot_radius: f64, ball_radius: f64) -> Vec2 {
    let d_c = robot_radius + ball_radius;
    let dir = holder.pose.theta + bearing;
    let radial = Vec2::new(dir.cos(), dir.sin());
    let tangent = Vec2::new(-radial.y, radial.x);
    holder.pose.heading() * holder.v + tangent * (holder.omega * d_c)
}

/// Whether a free ball sits inside the robot's holding cone.
pub fn in_capture_cone(
    ball: &BallState,
    robot: &RobotState,
    ball_radius: f64,
    robot_radius: f64,
    hold: &HoldParams,
) -> bool {
    let rel = ball.position - robot.pose.position();
    let dist = rel.norm();
    if dist > robot_radius + ball_radius + hold.capture_slack {
        return false;
    }
    let bearing = wrap_angle(rel.y.atan2(rel.x) - robot.pose.theta);
    bearing.abs() <= hold.max_bearing
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Pose;
    use approx::assert_abs_diff_eq;

    #[test]
    fn free_ball_speed_decays_exponentially() {
        let p = BallParams {
            friction: 0.5,
            ..BallParams::default()
        };
        let b = BallState {
            position: Point::new(0.0, 0.0),
            velocity: Vec2::new(2.0, 0.0),
        };
        let dt = 0.37;
        let (next, hit) = step_free_ball(&b, dt, &p, None);
        assert!(!hit);
        assert_abs_diff_eq!(next.speed(), 2.0 * (-0.5 * dt).exp(), epsilon = 1e-12);
    }

    #[test]
    fn stationary_ball_unchanged() {
        let b = BallState::at_rest(1.0, 1.0);
        let (next, hit) = step_free_ball(&b, 0.01, &BallParams::default(), None);
        assert_eq!(next, b);
        assert!(!hit);
    }

    #[test]
    fn wall_reflection_mirrors_and_scales() {
        // 45-degree approach to the +x wall; the oracle is the mirror formula.
        let p = BallParams::default();
        let walls = WallBox {
            half_l: 6.0,
            half_w: 4.0,
        };
        let xb = walls.half_l - p.radius;
        let b = BallState {
            position: Point::new(xb - 0.005, 0.0),
            velocity: Vec2::new(2.0, 2.0),
        };
        let dt = 0.01;
        let (next, hit) = step_free_ball(&b, dt, &p, Some(&walls));
        assert!(hit);
        // Mirror of the unreflected position across x = xb.
        let free_x = b.position.x + b.velocity.x * dt;
        assert_abs_diff_eq!(next.position.x, 2.0 * xb - free_x, epsilon = 1e-12);
        let decayed = 2.0 * (-p.friction * dt).exp();
        assert_abs_diff_eq!(next.velocity.x, -decayed * p.restitution, epsilon = 1e-12);
        assert_abs_diff_eq!(next.velocity.y, decayed * p.restitution, epsilon = 1e-12);
        assert!(next.speed() <= b.speed()); // energy never increases
    }

    #[test]
    fn kick_adds_heading_impulse() {
        let kicker = RobotState {
            pose: Pose::origin(),
            v: 0.0,
            omega: 0.0,
            has_ball: true,
        };
        let held = BallState::at_rest(0.35, 0.0);
        let kicked = kick(&held, &kicker, 4.0);
        assert_abs_diff_eq!(kicked.velocity.x, 4.0);
        assert_abs_diff_eq!(kicked.velocity.y, 0.0);
        // Zero force releases with the velocity unchanged.
        let released = kick(&held, &kicker, 0.0);
        assert_eq!(released.velocity, held.velocity);
    }

    #[test]
    fn hold_survives_gentle_turn_and_loses_sharp_turn() {
        let ball = BallParams::default();
        let hold = HoldParams::default();
        let mk = |omega: f64| RobotState {
            pose: Pose::origin(),
            v: 1.0,
            omega,
            has_ball: true,
        };
        // Budget at v=1, a=0: mu*friction*v = 0.25 m/s^2 of lateral authority.
        let mut contact = HoldContact {
            bearing: 0.0,
            slip: 0.0,
        };
        for _ in 0..400 {
            match step_hold(&contact, &mk(0.15), 0.0, 0.01, &ball, &hold, 0.24, 0.0) {
                HoldOutcome::Held(c) => contact = c,
                HoldOutcome::Lost => panic!("gentle turn should keep the ball"),
            }
        }
        let mut contact = HoldContact {
            bearing: 0.0,
            slip: 0.0,
        };
        let mut lost = false;
        for _ in 0..1200 {
            match step_hold(&contact, &mk(0.8), 0.0, 0.01, &ball, &hold, 0.24, 0.0) {
                HoldOutcome::Held(c) => contact = c,
                HoldOutcome::Lost => {
                    lost = true;
                    break;
                }
            }
        }
        assert!(lost, "sharp turn should shed the ball");
    }
}
