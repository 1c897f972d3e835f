//! Ball-position fusion.
//!
//! Observations become Gaussian estimates in the field frame; estimates from
//! the robot's own sensors fuse locally, and fresh estimates from teammates
//! fuse globally unless the disagreement gate rejects them. Robots that do
//! not see the ball adopt the team result, so everyone knows where it is.

use crate::localize::PoseEstimate;
use crate::sim::sensors::BallObservation;
use crate::RobotId;
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimateSource {
    Robot(RobotId),
    Team,
}

/// Mean and covariance of a ball position, field frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianEstimate {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    pub timestamp: f64,
    pub source: EstimateSource,
}

impl GaussianEstimate {
    pub fn is_fresh(&self, now: f64, staleness: f64) -> bool {
        now - self.timestamp <= staleness
    }

    /// Normalized estimation error squared against a known truth.
    pub fn nees(&self, truth: &Vector2<f64>) -> f64 {
        let d = self.mean - truth;
        let inv = self.cov.try_inverse().unwrap_or_else(Matrix2::identity);
        (d.transpose() * inv * d)[(0, 0)]
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Chi-square bound on the squared Mahalanobis disagreement distance.
    pub gate_threshold: f64,
    /// Estimates older than this are ignored, seconds.
    pub staleness: f64,
    pub local_enabled: bool,
    pub global_enabled: bool,
    /// Covariance multiplier when the observer's pose is untrusted.
    pub untrusted_inflation: f64,
    /// Residual localization error folded into every estimate, meters.
    pub pose_noise_sigma: f64,
    /// Diagonal growth rate while nobody sees the ball, m^2/s.
    pub cov_growth_rate: f64,
    /// Regularization added to near-singular covariances.
    pub epsilon: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            gate_threshold: 9.0,
            staleness: 1.0,
            local_enabled: true,
            global_enabled: true,
            untrusted_inflation: 4.0,
            pose_noise_sigma: 0.03,
            cov_growth_rate: 0.05,
            epsilon: 1e-9,
        }
    }
}

/// Transforms a polar ball observation into a field-frame Gaussian via the
/// unscented transform over `(range, bearing)` noise.
///
/// The observation's `noise_sigma` applies to both coordinates (meters on
/// range, radians on bearing). An untrusted pose inflates the covariance by
/// the configured factor.
pub fn observation_to_estimate(
    obs: &BallObservation,
    robot_pose: &PoseEstimate,
    cfg: &FusionConfig,
) -> GaussianEstimate {
    let sigma = obs.noise_sigma;
    let n: f64 = 2.0;
    let kappa: f64 = 1.0;
    let scale = (n + kappa).sqrt();
    let w0 = kappa / (n + kappa);
    let wi = 1.0 / (2.0 * (n + kappa));

    // Sigma points in (range, bearing).
    let pts = [
        (obs.relative_distance, obs.relative_bearing, w0),
        (obs.relative_distance + scale * sigma, obs.relative_bearing, wi),
        (obs.relative_distance - scale * sigma, obs.relative_bearing, wi),
        (obs.relative_distance, obs.relative_bearing + scale * sigma, wi),
        (obs.relative_distance, obs.relative_bearing - scale * sigma, wi),
    ];
    let pose = robot_pose.pose;
    let to_field = |r: f64, b: f64| {
        let a = pose.theta + b;
        Vector2::new(pose.x + r * a.cos(), pose.y + r * a.sin())
    };
    let mut mean = Vector2::zeros();
    for &(r, b, w) in &pts {
        mean += to_field(r, b) * w;
    }
    let mut cov = Matrix2::zeros();
    for &(r, b, w) in &pts {
        let d = to_field(r, b) - mean;
        cov += d * d.transpose() * w;
    }
    cov += Matrix2::identity() * cfg.pose_noise_sigma.powi(2);
    if !robot_pose.trusted {
        cov *= cfg.untrusted_inflation;
    }
    GaussianEstimate {
        mean,
        cov,
        timestamp: obs.timestamp,
        source: EstimateSource::Robot(obs.observer),
    }
}

/// Result of a pairwise fusion; `regularized` flags a near-singular input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuseOutcome {
    pub estimate: GaussianEstimate,
    pub regularized: bool,
}

fn safe_inverse(m: &Matrix2<f64>, eps: f64) -> (Matrix2<f64>, bool) {
    match m.try_inverse() {
        Some(inv) if m.determinant().abs() > eps => (inv, false),
        _ => {
            let reg = m + Matrix2::identity() * eps.max(1e-12);
            (reg.try_inverse().unwrap_or_else(Matrix2::identity), true)
        }
    }
}

/// Product-of-Gaussians fusion:
/// `cov = (Pa^-1 + Pb^-1)^-1`, `mean = cov * (Pa^-1 a + Pb^-1 b)`.
/// The fused covariance never exceeds either input in the Loewner order.
pub fn fuse_pair(a: &GaussianEstimate, b: &GaussianEstimate, cfg: &FusionConfig) -> FuseOutcome {
    let (ia, ra) = safe_inverse(&a.cov, cfg.epsilon);
    let (ib, rb) = safe_inverse(&b.cov, cfg.epsilon);
    let info = ia + ib;
    let (cov, rc) = safe_inverse(&info, cfg.epsilon);
    let mean = cov * (ia * a.mean + ib * b.mean);
    FuseOutcome {
        estimate: GaussianEstimate {
            mean,
            cov,
            timestamp: a.timestamp.max(b.timestamp),
            source: EstimateSource::Team,
        },
        regularized: ra || rb || rc,
    }
}

/// Squared Mahalanobis disagreement between two estimates.
pub fn disagreement(a: &GaussianEstimate, b: &GaussianEstimate) -> f64 {
    let d = a.mean - b.mean;
    let sum = a.cov + b.cov;
    let inv = sum.try_inverse().unwrap_or_else(Matrix2::identity);
    (d.transpose() * inv * d)[(0, 0)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Fuse,
    KeepOwn,
}

/// Fuse only when the two estimates agree in probabilistic terms.
pub fn disagreement_gate(
    a: &GaussianEstimate,
    b: &GaussianEstimate,
    cfg: &FusionConfig,
) -> GateDecision {
    if disagreement(a, b) <= cfg.gate_threshold {
        GateDecision::Fuse
    } else {
        GateDecision::KeepOwn
    }
}

/// Team-wide fusion output.
#[derive(Debug, Clone, PartialEq)]
pub enum TeamBall {
    /// Per-robot fused estimates plus the shared team estimate.
    PerRobot {
        estimates: BTreeMap<RobotId, GaussianEstimate>,
        team: GaussianEstimate,
    },
    /// Nobody sees the ball: the last team estimate, covariance grown.
    Coasted(GaussianEstimate),
    /// No estimate has ever existed.
    Unknown,
}

/// Combines each robot's fresh local estimate with its teammates' estimates,
/// pairwise in ascending robot-id order, gated by [`disagreement_gate`].
///
/// Robots without a fresh local estimate adopt the teammate fusion result.
/// With global fusion disabled each robot keeps exactly its own estimate.
pub fn team_ball(
    locals: &BTreeMap<RobotId, Option<GaussianEstimate>>,
    last_team: Option<&GaussianEstimate>,
    now: f64,
    cfg: &FusionConfig,
) -> TeamBall {
    let fresh: BTreeMap<RobotId, GaussianEstimate> = locals
        .iter()
        .filter_map(|(&id, est)| {
            est.as_ref()
                .filter(|e| e.is_fresh(now, cfg.staleness))
                .map(|e| (id, *e))
        })
        .collect();

    if fresh.is_empty() {
        return match last_team {
            Some(prev) => TeamBall::Coasted(GaussianEstimate {
                mean: prev.mean,
                cov: prev.cov
                    + Matrix2::identity() * cfg.cov_growth_rate * (now - prev.timestamp).max(0.0),
                timestamp: prev.timestamp,
                source: EstimateSource::Team,
            }),
            None => TeamBall::Unknown,
        };
    }

    if !cfg.global_enabled {
        let team = *fresh.values().next().unwrap();
        return TeamBall::PerRobot {
            estimates: fresh,
            team,
        };
    }

    // Shared team estimate: fold all seers in id order with gating.
    let mut seers = fresh.iter();
    let (_, first) = seers.next().unwrap();
    let mut team = *first;
    for (_, est) in seers {
        if disagreement_gate(&team, est, cfg) == GateDecision::Fuse {
            team = fuse_pair(&team, est, cfg).estimate;
        }
    }

    let mut estimates = BTreeMap::new();
    for (&id, _) in locals {
        match fresh.get(&id) {
            Some(own) => {
                let mut cur = *own;
                for (&jid, est) in &fresh {
                    if jid == id {
                        continue;
                    }
                    if disagreement_gate(&cur, est, cfg) == GateDecision::Fuse {
                        cur = fuse_pair(&cur, est, cfg).estimate;
                    }
                }
                estimates.insert(id, cur);
            }
            None => {
                estimates.insert(
                    id,
                    GaussianEstimate {
                        source: EstimateSource::Team,
                        ..team
                    },
                );
            }
        }
    }
    TeamBall::PerRobot { estimates, team }
}
