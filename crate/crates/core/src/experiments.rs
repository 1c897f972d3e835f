//! Per-module experiment harnesses. Each returns a metrics table with pinned
//! tolerances; the acceptance suite and the CLI `experiment` subcommand both
//! run these.

use crate::des::builder::{random_model, single_component_model};
use crate::des::solve::{bellman_residual, enumerate_policies, policy_values_linear};
use crate::des::{compose, parse_model_file, simulate_des, solve_policy, EventClass};
use crate::field::{FieldModel, Pose};
use crate::fusion::{self, FusionConfig, GaussianEstimate, TeamBall};
use crate::geom::{wrap_angle, Point, Vec2};
use crate::localize::{localize, LocalizerConfig, PoseEstimate};
use crate::nav::{
    dribble_limit, potential_command, potential_value, ControlParams, DribbleParams, Guide,
    GuideMode, Obstacle, PotentialParams,
};
use crate::rng::stream_rng;
use crate::sim::ball::{step_hold, BallParams, HoldContact, HoldOutcome, HoldParams};
use crate::sim::kinematics::{step_robot, RobotParams, RobotState};
use crate::sim::sensors::{scan_transitions, GoalObservation, ScanParams};
use crate::RobotId;
use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub name: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
}

impl MetricsTable {
    fn info(&mut self, name: &str, value: f64, detail: impl Into<String>) {
        self.rows.push(MetricRow {
            name: name.into(),
            value,
            tolerance: None,
            pass: None,
            detail: detail.into(),
        });
    }

    /// A checked metric: pass when `value <= tolerance`.
    fn check_le(&mut self, name: &str, value: f64, tolerance: f64, detail: impl Into<String>) {
        self.rows.push(MetricRow {
            name: name.into(),
            value,
            tolerance: Some(tolerance),
            pass: Some(value <= tolerance),
            detail: detail.into(),
        });
    }

    /// A checked metric: pass when `value >= tolerance`.
    fn check_ge(&mut self, name: &str, value: f64, tolerance: f64, detail: impl Into<String>) {
        self.rows.push(MetricRow {
            name: name.into(),
            value,
            tolerance: Some(tolerance),
            pass: Some(value >= tolerance),
            detail: detail.into(),
        });
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass.unwrap_or(true))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tvalue\ttolerance\tpass\tdetail\n");
        for r in &self.rows {
            let tol = r.tolerance.map_or(String::from("-"), |t| format!("{t}"));
            let pass = r
                .pass
                .map_or(String::from("-"), |p| if p { "pass".into() } else { "FAIL".into() });
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", r.name, r.value, tol, pass, r.detail);
        }
        out
    }
}

fn random_pose(rng: &mut rand_chacha::ChaCha8Rng) -> Pose {
    Pose::new(
        rng.random_range(-5.5..5.5),
        rng.random_range(-3.5..3.5),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

/// One localization trial; returns (position error, orientation error,
/// trusted).
fn localize_once(
    field: &FieldModel,
    truth: Pose,
    scan_params: &ScanParams,
    cfg: &LocalizerConfig,
    noise: Option<&mut rand_chacha::ChaCha8Rng>,
    clutter: Option<&mut rand_chacha::ChaCha8Rng>,
    goal_rng: Option<&mut rand_chacha::ChaCha8Rng>,
) -> (f64, f64, bool) {
    let state = RobotState::at(truth);
    let pixels = scan_transitions(&state, field, scan_params, noise, clutter);
    let goal = crate::sim::sensors::observe_goal(
        &state,
        field,
        &crate::sim::sensors::GoalSensorParams::default(),
        goal_rng,
    );
    let prev = PoseEstimate::untrusted(Pose::origin());
    let est = localize(&pixels, field, goal.as_ref(), &prev, cfg);
    let pos_err = (est.pose.position() - truth.position()).norm();
    let ang_err = crate::geom::angle_dist(est.pose.theta, truth.theta);
    (pos_err, ang_err, est.trusted)
}

/// Localization accuracy over random poses, clean and cluttered.
pub fn localizer_experiment(seed: u64, poses: usize) -> MetricsTable {
    let field = FieldModel::default_field();
    let cfg = LocalizerConfig::default();
    let mut table = MetricsTable::default();

    // Clean scans: no noise, no clutter, goal visible.
    {
        let mut rng = stream_rng(seed, "loc-exp/poses-clean");
        let scan = ScanParams {
            noise_sigma: 0.0,
            clutter_fraction: 0.0,
            ..ScanParams::default()
        };
        let mut within = 0usize;
        let mut pos_errors = Vec::new();
        let mut ang_errors = Vec::new();
        for _ in 0..poses {
            let truth = random_pose(&mut rng);
            let (pe, ae, trusted) = localize_once(&field, truth, &scan, &cfg, None, None, None);
            pos_errors.push(pe);
            ang_errors.push(ae);
            if trusted && pe <= 0.05 && ae <= 2f64.to_radians() {
                within += 1;
            }
        }
        pos_errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ang_errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        table.info(
            "clean_position_error_p50_m",
            pos_errors[poses / 2],
            "median over clean scans",
        );
        table.info(
            "clean_orientation_error_p50_rad",
            ang_errors[poses / 2],
            "median over clean scans",
        );
        table.check_ge(
            "clean_within_tolerance_fraction",
            within as f64 / poses as f64,
            0.95,
            "5 cm / 2 deg, trusted",
        );
    }

    // 30% clutter plus default pixel noise.
    {
        let mut rng = stream_rng(seed, "loc-exp/poses-clutter");
        let mut noise = stream_rng(seed, "loc-exp/noise");
        let mut clutter = stream_rng(seed, "loc-exp/clutter");
        let mut goal_rng = stream_rng(seed, "loc-exp/goal");
        let scan = ScanParams {
            clutter_fraction: 0.30,
            ..ScanParams::default()
        };
        let mut within = 0usize;
        for _ in 0..poses {
            let truth = random_pose(&mut rng);
            let (pe, ae, trusted) = localize_once(
                &field,
                truth,
                &scan,
                &cfg,
                Some(&mut noise),
                Some(&mut clutter),
                Some(&mut goal_rng),
            );
            if trusted && pe <= 0.05 && ae <= 2f64.to_radians() {
                within += 1;
            }
        }
        table.check_ge(
            "clutter_within_tolerance_fraction",
            within as f64 / poses as f64,
            0.90,
            "5 cm / 2 deg with 30% clutter",
        );
    }

    // Rotation covariance within one accumulator bin.
    {
        let mut rng = stream_rng(seed, "loc-exp/rotcov");
        let scan = ScanParams {
            noise_sigma: 0.0,
            clutter_fraction: 0.0,
            ..ScanParams::default()
        };
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let truth = random_pose(&mut rng);
            let delta: f64 = rng.random_range(-1.0..1.0);
            let state = RobotState::at(truth);
            let pixels = scan_transitions(&state, &field, &scan, None, None);
            if pixels.is_empty() {
                continue;
            }
            let goal = crate::sim::sensors::observe_goal(
                &state,
                &field,
                &crate::sim::sensors::GoalSensorParams {
                    bearing_sigma: 0.0,
                    ..Default::default()
                },
                None,
            );
            let prev = PoseEstimate::untrusted(truth);
            let base = localize(&pixels, &field, goal.as_ref(), &prev, &cfg);
            if !base.trusted {
                continue;
            }
            let rotated: Vec<_> = pixels
                .iter()
                .map(|p| {
                    crate::field::TransitionPixel::new(
                        p.x * delta.cos() - p.y * delta.sin(),
                        p.x * delta.sin() + p.y * delta.cos(),
                    )
                })
                .collect();
            let rot_goal = goal.map(|g| GoalObservation {
                color: g.color,
                bearing: wrap_angle(g.bearing + delta),
            });
            let prev_rot =
                PoseEstimate::untrusted(Pose::new(truth.x, truth.y, truth.theta - delta));
            let est = localize(&rotated, &field, rot_goal.as_ref(), &prev_rot, &cfg);
            let expected = wrap_angle(base.pose.theta - delta);
            worst = worst.max(crate::geom::angle_dist(est.pose.theta, expected));
        }
        table.check_le(
            "rotation_covariance_max_dev_rad",
            worst,
            cfg.accumulator.phi_res,
            "output orientation rotates with the pixels",
        );
    }
    table
}

/// Mean per-frame runtime of the full localization pipeline.
pub fn localizer_runtime_experiment(seed: u64, frames: usize) -> MetricsTable {
    let field = FieldModel::default_field();
    let cfg = LocalizerConfig::default();
    let scan_params = ScanParams::default();
    let mut rng = stream_rng(seed, "loc-runtime/poses");
    let mut noise = stream_rng(seed, "loc-runtime/noise");
    let mut clutter = stream_rng(seed, "loc-runtime/clutter");

    // Pre-generate scans so only `localize` is timed.
    let mut cases = Vec::with_capacity(frames);
    for _ in 0..frames {
        let truth = random_pose(&mut rng);
        let state = RobotState::at(truth);
        let pixels = scan_transitions(
            &state,
            &field,
            &scan_params,
            Some(&mut noise),
            Some(&mut clutter),
        );
        let goal = crate::sim::sensors::observe_goal(
            &state,
            &field,
            &crate::sim::sensors::GoalSensorParams::default(),
            Some(&mut rng),
        );
        cases.push((pixels, goal, truth));
    }
    let prev = PoseEstimate::untrusted(Pose::origin());
    let start = std::time::Instant::now();
    let mut acc = 0.0;
    for (pixels, goal, _) in &cases {
        let est = localize(pixels, &field, goal.as_ref(), &prev, &cfg);
        acc += est.pose.x; // keep the optimizer honest
    }
    let elapsed = start.elapsed().as_secs_f64();
    let mean_ms = elapsed / frames as f64 * 1000.0;
    let mut table = MetricsTable::default();
    table.info("frames", frames as f64, format!("checksum {acc:.3}"));
    table.check_le(
        "mean_frame_time_ms",
        mean_ms,
        13.0,
        "full pipeline at default resolutions",
    );
    table
}

/// Ball-fusion experiment: oracle agreement, gate agreement, and the
/// improvement property of team fusion over individual estimates.
pub fn fusion_experiment(seed: u64, frames: usize) -> MetricsTable {
    let mut table = MetricsTable::default();
    let cfg = FusionConfig {
        pose_noise_sigma: 0.0,
        ..FusionConfig::default()
    };

    // Gate vs. explicit closed-form Mahalanobis evaluation.
    {
        let mut rng = stream_rng(seed, "fusion-exp/gate");
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let a = random_estimate(&mut rng, 1);
            let b = random_estimate(&mut rng, 2);
            let d = fusion::disagreement(&a, &b);
            // Closed form via the 2x2 adjugate.
            let s = a.cov + b.cov;
            let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
            let dm = a.mean - b.mean;
            let oracle = (s[(1, 1)] * dm.x * dm.x - 2.0 * s[(0, 1)] * dm.x * dm.y
                + s[(0, 0)] * dm.y * dm.y)
                / det;
            worst = worst.max((d - oracle).abs());
            let agree = (d <= cfg.gate_threshold) == (oracle <= cfg.gate_threshold);
            if !agree {
                worst = f64::INFINITY;
            }
        }
        table.check_le(
            "gate_vs_closed_form_max_dev",
            worst,
            1e-9,
            "squared Mahalanobis distance, 100 random pairs",
        );
    }

    // fuse_pair vs. the dense-grid Bayesian posterior.
    {
        let mut rng = stream_rng(seed, "fusion-exp/grid");
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let a = random_estimate(&mut rng, 1);
            let b = GaussianEstimate {
                mean: a.mean
                    + Vector2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)),
                ..random_estimate(&mut rng, 2)
            };
            let fused = fusion::fuse_pair(&a, &b, &cfg).estimate;
            let (gm, gc) = grid_posterior(&a, &b, &fused.mean);
            worst = worst.max((fused.mean - gm).norm());
            for i in 0..2 {
                for j in 0..2 {
                    worst = worst.max((fused.cov[(i, j)] - gc[(i, j)]).abs());
                }
            }
        }
        table.check_le(
            "fuse_vs_grid_posterior_max_dev",
            worst,
            1e-3,
            "mean and covariance, 100 random pairs",
        );
    }

    // Improvement property over simulated frames, plus NEES consistency.
    {
        let mut rng = stream_rng(seed, "fusion-exp/frames");
        let robots: Vec<(RobotId, Pose)> = vec![
            (1, Pose::new(-3.0, -2.0, 0.5)),
            (2, Pose::new(-1.0, 2.5, -0.7)),
            (3, Pose::new(2.5, 0.0, 2.8)),
        ];
        let sigma = 0.1;
        let mut truth = Vector2::new(0.0, 0.0);
        let mut unfused_err: BTreeMap<RobotId, (f64, usize)> = BTreeMap::new();
        let mut fused_err: BTreeMap<RobotId, (f64, usize)> = BTreeMap::new();
        let mut nees_sum = 0.0;
        let mut nees_n = 0usize;
        for frame in 0..frames {
            let now = frame as f64 * 0.1;
            // Bounded random walk of the true ball.
            truth.x = (truth.x + rng.random_range(-0.1..0.1f64)).clamp(-5.0, 5.0);
            truth.y = (truth.y + rng.random_range(-0.1..0.1f64)).clamp(-3.0, 3.0);
            let mut locals: BTreeMap<RobotId, Option<GaussianEstimate>> = BTreeMap::new();
            for (id, pose) in &robots {
                let sees = rng.random_range(0.0..1.0) < 0.7;
                if !sees {
                    locals.insert(*id, None);
                    continue;
                }
                let rel = Point::new(truth.x, truth.y) - pose.position();
                let r = rel.norm() + rng.random_range(-1.0..1.0) * 0.0; // noise below
                let bearing = wrap_angle(rel.y.atan2(rel.x) - pose.theta);
                let obs = crate::sim::sensors::BallObservation {
                    observer: *id,
                    relative_bearing: wrap_angle(bearing + gaussian(&mut rng, sigma)),
                    relative_distance: (r + gaussian(&mut rng, sigma)).max(0.05),
                    timestamp: now,
                    noise_sigma: sigma,
                };
                let est = fusion::observation_to_estimate(
                    &obs,
                    &PoseEstimate {
                        pose: *pose,
                        score: 1.0,
                        trusted: true,
                    },
                    &cfg,
                );
                let e = unfused_err.entry(*id).or_insert((0.0, 0));
                e.0 += (est.mean - truth).norm();
                e.1 += 1;
                locals.insert(*id, Some(est));
            }
            if let TeamBall::PerRobot { estimates, .. } = fusion::team_ball(&locals, None, now, &cfg)
            {
                for (id, est) in estimates {
                    let e = fused_err.entry(id).or_insert((0.0, 0));
                    e.0 += (est.mean - truth).norm();
                    e.1 += 1;
                    nees_sum += est.nees(&truth);
                    nees_n += 1;
                }
            }
        }
        let mut improvement_ok = true;
        for (id, (sum, n)) in &unfused_err {
            let unfused_mean = sum / *n as f64;
            let (fsum, fn_) = fused_err[id];
            let fused_mean = fsum / fn_ as f64;
            table.info(
                &format!("robot{id}_unfused_mean_error_m"),
                unfused_mean,
                format!("{n} sightings"),
            );
            table.info(
                &format!("robot{id}_fused_mean_error_m"),
                fused_mean,
                format!("{fn_} frames"),
            );
            if fused_mean > unfused_mean {
                improvement_ok = false;
            }
        }
        table.check_ge(
            "fusion_improves_every_robot",
            if improvement_ok { 1.0 } else { 0.0 },
            1.0,
            "fused mean error <= unfused mean error per robot",
        );
        let mean_nees = nees_sum / nees_n as f64;
        let bound = 3.0 * 2.0 / (frames as f64).sqrt();
        table.check_le(
            "nees_mean_abs_dev_from_2",
            (mean_nees - 2.0).abs(),
            bound,
            format!("mean NEES {mean_nees:.3} over {nees_n} samples"),
        );
    }

    // Disabling global fusion isolates robots (the single-robot baseline).
    {
        let iso = FusionConfig {
            global_enabled: false,
            ..cfg
        };
        let mut rng = stream_rng(seed, "fusion-exp/iso");
        let a = random_estimate(&mut rng, 1);
        let mut locals: BTreeMap<RobotId, Option<GaussianEstimate>> = BTreeMap::new();
        locals.insert(1, Some(a));
        locals.insert(2, Some(random_estimate(&mut rng, 2)));
        let ok = match fusion::team_ball(&locals, None, 0.0, &iso) {
            TeamBall::PerRobot { estimates, .. } => estimates[&1] == a,
            _ => false,
        };
        table.check_ge(
            "local_only_mode_isolates",
            if ok { 1.0 } else { 0.0 },
            1.0,
            "global fusion disabled keeps own estimates",
        );
    }
    table
}

fn gaussian(rng: &mut rand_chacha::ChaCha8Rng, sigma: f64) -> f64 {
    use rand_distr::{Distribution, Normal};
    Normal::new(0.0, sigma).unwrap().sample(rng)
}

fn random_estimate(rng: &mut rand_chacha::ChaCha8Rng, id: RobotId) -> GaussianEstimate {
    let sx: f64 = rng.random_range(0.05..0.4);
    let sy: f64 = rng.random_range(0.05..0.4);
    let c: f64 = rng.random_range(-0.6..0.6) * sx * sy;
    GaussianEstimate {
        mean: Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
        cov: Matrix2::new(sx * sx, c, c, sy * sy),
        timestamp: 0.0,
        source: crate::fusion::EstimateSource::Robot(id),
    }
}

fn grid_posterior(
    a: &GaussianEstimate,
    b: &GaussianEstimate,
    center: &Vector2<f64>,
) -> (Vector2<f64>, Matrix2<f64>) {
    let n = 301;
    let span = 1.2;
    let step = 2.0 * span / (n - 1) as f64;
    let ia = a.cov.try_inverse().unwrap();
    let ib = b.cov.try_inverse().unwrap();
    let mut wsum = 0.0;
    let mut mean = Vector2::zeros();
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let p = center + Vector2::new(-span + i as f64 * step, -span + j as f64 * step);
            let da = p - a.mean;
            let db = p - b.mean;
            let w = (-0.5
                * ((da.transpose() * ia * da)[(0, 0)] + (db.transpose() * ib * db)[(0, 0)]))
                .exp();
            wsum += w;
            mean += p * w;
            pts.push((p, w));
        }
    }
    mean /= wsum;
    let mut cov = Matrix2::zeros();
    for (p, w) in pts {
        let d = p - mean;
        cov += d * d.transpose() * (w / wsum);
    }
    (mean, cov)
}

/// Navigation experiment: gradient oracle, isotropy, closed-loop safety,
/// dribble clamp tightness, and the hold-model retention sweep.
pub fn navigation_experiment(seed: u64, scenes: usize) -> MetricsTable {
    let mut table = MetricsTable::default();
    let params = PotentialParams::default();
    let ctl = ControlParams::default();

    // Gradient check against central finite differences.
    {
        let mut rng = stream_rng(seed, "nav-exp/grad");
        let mut worst: f64 = 0.0;
        for _ in 0..scenes {
            let pose = random_pose(&mut rng);
            let goal = Point::new(rng.random_range(-5.0..5.0), rng.random_range(-3.5..3.5));
            if (goal - pose.position()).norm() <= ctl.stop_radius {
                continue;
            }
            let mut obstacles = Vec::new();
            for _ in 0..rng.random_range(0..6usize) {
                let center = Point::new(rng.random_range(-5.0..5.0), rng.random_range(-3.5..3.5));
                if (center - pose.position()).norm() < 0.7 {
                    continue;
                }
                obstacles.push(Obstacle {
                    center,
                    radius: 0.54,
                });
            }
            let v = rng.random_range(0.0..1.2);
            let res = potential_command(&pose, v, &goal, &obstacles, &params, &ctl);
            let h = 1e-6;
            let u = |p: Point| potential_value(&p, pose.theta, &goal, &obstacles, &params);
            let fx = -(u(Point::new(pose.x + h, pose.y)) - u(Point::new(pose.x - h, pose.y)))
                / (2.0 * h);
            let fy = -(u(Point::new(pose.x, pose.y + h)) - u(Point::new(pose.x, pose.y - h)))
                / (2.0 * h);
            let force = Vec2::new(fx, fy);
            let accel_oracle = force.dot(&pose.heading()).clamp(-ctl.accel_max, ctl.accel_max);
            let omega_oracle = if force.norm() < 1e-12 {
                0.0
            } else {
                ctl.k_omega * wrap_angle(force.y.atan2(force.x) - pose.theta)
            };
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
            worst = worst
                .max(rel(res.command.accel, accel_oracle))
                .max(rel(res.command.omega_cmd, omega_oracle));
        }
        table.check_le(
            "gradient_max_relative_dev",
            worst,
            1e-4,
            format!("central differences over {scenes} scenes"),
        );
    }

    // beta = 0 isotropy, exact.
    {
        let iso = PotentialParams {
            beta: 0.0,
            ..params
        };
        let pose = Pose::origin();
        let goal = Point::new(5.0, 0.0);
        let front = vec![Obstacle {
            center: Point::new(0.9, 0.0),
            radius: 0.3,
        }];
        let abeam = vec![Obstacle {
            center: Point::new(0.0, 0.9),
            radius: 0.3,
        }];
        let base = potential_value(&pose.position(), 0.0, &goal, &[], &iso);
        let u_front = potential_value(&pose.position(), 0.0, &goal, &front, &iso) - base;
        let u_abeam = potential_value(&pose.position(), 0.0, &goal, &abeam, &iso) - base;
        table.check_le(
            "beta0_isotropy_dev",
            (u_front - u_abeam).abs(),
            0.0,
            "front and abeam repulsion exactly equal",
        );
    }

    // Closed-loop safety: seeded random scenes, zero contacts allowed.
    {
        let mut rng = stream_rng(seed, "nav-exp/safety");
        let robot_params = RobotParams::default();
        let mut contacts = 0usize;
        let mut reached = 0usize;
        for _ in 0..scenes {
            let start = Pose::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.1..3.1),
            );
            let goal = loop {
                let g = Point::new(rng.random_range(-5.0..5.0), rng.random_range(-3.0..3.0));
                if (g - start.position()).norm() > 2.0 {
                    break g;
                }
            };
            let mut obstacles = Vec::new();
            while obstacles.len() < 4 {
                let c = Point::new(rng.random_range(-5.0..5.0), rng.random_range(-3.0..3.0));
                if (c - start.position()).norm() < 1.0 || (c - goal).norm() < 0.9 {
                    continue;
                }
                obstacles.push(Obstacle { center: c, radius: 0.3 });
            }
            // Inflate by the robot radius for planning; contact is checked
            // against the physical radii.
            let inflated: Vec<Obstacle> = obstacles
                .iter()
                .map(|o| Obstacle {
                    center: o.center,
                    radius: o.radius + robot_params.radius,
                })
                .collect();
            let mut state = RobotState::at(start);
            let mut hit = false;
            for _ in 0..1500 {
                let res =
                    potential_command(&state.pose, state.v, &goal, &inflated, &params, &ctl);
                let (next, _) = step_robot(
                    &state,
                    res.command.v_cmd,
                    res.command.omega_cmd,
                    ctl.dt,
                    &robot_params,
                );
                state = next;
                if obstacles.iter().any(|o| {
                    (state.pose.position() - o.center).norm() < o.radius + robot_params.radius
                }) {
                    hit = true;
                    break;
                }
                if (goal - state.pose.position()).norm() < 0.25 {
                    reached += 1;
                    break;
                }
            }
            if hit {
                contacts += 1;
            }
        }
        table.check_le(
            "safety_contacts",
            contacts as f64,
            0.0,
            format!("{reached}/{scenes} scenes reached the goal"),
        );
    }

    // Dribble clamp tightness through the guide.
    {
        let mut rng = stream_rng(seed, "nav-exp/clamp");
        let dp = DribbleParams::default();
        let mut worst: f64 = 0.0;
        for _ in 0..500 {
            let mut guide = Guide::new();
            let est = PoseEstimate {
                pose: random_pose(&mut rng),
                score: 1.0,
                trusted: true,
            };
            guide.observe(Some(&est), &Pose::origin());
            let target = random_pose(&mut rng);
            let v = rng.random_range(0.1..1.5);
            let out = guide.command(
                &target,
                GuideMode::Dribble,
                v,
                &[],
                &params,
                &dp,
                &ctl,
            );
            let limit = dribble_limit(v, out.command.accel, &dp);
            worst = worst.max(out.command.omega_cmd.abs() - limit);
        }
        table.check_le(
            "dribble_clamp_excess_rad_s",
            worst.max(0.0),
            1e-9,
            "emitted omega never exceeds the bound",
        );
    }

    // Hold-model retention agreement with the affine bound.
    {
        let ball = BallParams::default();
        let hold = HoldParams::default();
        let dp = DribbleParams::default();
        let robot_radius = RobotParams::default().radius;
        let mut trials = 0usize;
        let mut agree = 0usize;
        let dt = 0.01;
        let steps = 300; // 3 s at each operating point
        for &v in &[0.8, 1.1, 1.4, 1.7] {
            for &accel_frac in &[0.0, 0.15, 0.3, 0.5] {
                let a = accel_frac * v;
                let limit = dribble_limit(v, a, &dp);
                // Keep to the small-curvature regime the affine bound covers.
                if limit > 0.55 * v {
                    continue;
                }
                for &(factor, expect_hold) in &[(0.85, true), (1.25, false)] {
                    let omega = factor * limit;
                    let holder = RobotState {
                        pose: Pose::origin(),
                        v,
                        omega,
                        has_ball: true,
                    };
                    let mut contact = HoldContact {
                        bearing: 0.0,
                        slip: 0.0,
                    };
                    let mut held = true;
                    for _ in 0..steps {
                        match step_hold(&contact, &holder, a, dt, &ball, &hold, robot_radius, 0.0)
                        {
                            HoldOutcome::Held(c) => contact = c,
                            HoldOutcome::Lost => {
                                held = false;
                                break;
                            }
                        }
                    }
                    trials += 1;
                    if held == expect_hold {
                        agree += 1;
                    }
                }
            }
        }
        table.check_ge(
            "dribble_retention_agreement",
            agree as f64 / trials.max(1) as f64,
            0.95,
            format!("{agree}/{trials} sweep cells match the affine bound"),
        );
    }
    table
}

/// DES experiment: solver oracles, Monte Carlo agreement, and the scaling
/// and monotonicity properties on randomized models.
pub fn des_experiment(seed: u64) -> MetricsTable {
    let mut table = MetricsTable::default();

    // Trivial 1/lambda case, exact.
    {
        let m = single_component_model(
            &["start", "goal"],
            &[("shoot", EventClass::Controllable, 0.5)],
            &[(0, 0, 1)],
            &[1],
        );
        let sol = solve_policy(&m, 1e-12).unwrap();
        table.check_le(
            "single_event_value_dev",
            (sol.values[0] - 2.0).abs(),
            1e-9,
            "expected hitting time 1/lambda",
        );
    }

    // Oracle suite: linear solve + exhaustive policy enumeration.
    {
        let mut worst_value_dev: f64 = 0.0;
        let mut worst_policy_dev: f64 = 0.0;
        let mut worst_residual: f64 = 0.0;
        for tag in 0..12 {
            let m = random_model(seed, &tag.to_string());
            if m.state_count() > 10 {
                continue;
            }
            let sol = solve_policy(&m, 1e-12).unwrap();
            let mut best = vec![f64::INFINITY; m.state_count()];
            for policy in enumerate_policies(&m) {
                let values = policy_values_linear(&m, &policy);
                for (s, v) in values.iter().enumerate() {
                    if *v < best[s] {
                        best[s] = *v;
                    }
                }
            }
            let own = policy_values_linear(&m, &sol.policy);
            for s in 0..m.state_count() {
                if best[s].is_finite() {
                    worst_value_dev = worst_value_dev.max((sol.values[s] - best[s]).abs());
                    worst_policy_dev = worst_policy_dev.max((own[s] - best[s]).abs());
                }
            }
            worst_residual = worst_residual.max(bellman_residual(&m, &sol.values));
        }
        table.check_le(
            "vi_vs_linear_solve_max_dev",
            worst_value_dev,
            1e-8,
            "value iteration vs first-passage linear solve",
        );
        table.check_le(
            "policy_vs_enumeration_max_dev",
            worst_policy_dev,
            1e-8,
            "solver policy achieves the enumerated optimum",
        );
        table.check_le(
            "bellman_residual",
            worst_residual,
            1e-7,
            "continuous-time Bellman equations at the fixpoint",
        );
    }

    // Monte Carlo agreement on the 4-state chain.
    {
        let m = single_component_model(
            &["s0", "s1", "s2", "goal"],
            &[
                ("advance", EventClass::Controllable, 1.0),
                ("risky", EventClass::Controllable, 2.0),
                ("safe", EventClass::Controllable, 0.7),
                ("hazard", EventClass::Uncontrollable, 0.4),
                ("finish", EventClass::Controllable, 1.5),
            ],
            &[(0, 0, 1), (1, 1, 2), (1, 2, 2), (1, 3, 0), (2, 4, 3)],
            &[3],
        );
        let sol = solve_policy(&m, 1e-12).unwrap();
        let exact = policy_values_linear(&m, &sol.policy)[0];
        let samples = simulate_des(&m, &sol.policy, seed, 100_000, 1e6);
        let z = (samples.mean() - exact).abs() / samples.std_error();
        table.check_le(
            "monte_carlo_z_score",
            z,
            3.0,
            format!(
                "mean {:.4} vs exact {exact:.4}, {} censored",
                samples.mean(),
                samples.censored
            ),
        );
    }

    // Scale covariance: rates * s => values / s, same argmin choices.
    {
        let mut worst: f64 = 0.0;
        let mut policies_match = true;
        for tag in 20..26 {
            let m = random_model(seed, &tag.to_string());
            let sol = solve_policy(&m, 1e-12).unwrap();
            let s = 3.7;
            let mut scaled = m.clone();
            for e in &mut scaled.events {
                e.rate *= s;
            }
            let sol_scaled = solve_policy(&scaled, 1e-12).unwrap();
            for st in 0..m.state_count() {
                if sol.values[st].is_finite() {
                    worst = worst.max((sol_scaled.values[st] - sol.values[st] / s).abs());
                }
            }
            if sol.policy != sol_scaled.policy {
                policies_match = false;
            }
        }
        table.check_le(
            "scale_covariance_max_dev",
            worst,
            1e-6,
            "rates scaled by 3.7",
        );
        table.check_ge(
            "scale_covariance_policy_match",
            if policies_match { 1.0 } else { 0.0 },
            1.0,
            "argmin choices unchanged under scaling",
        );
    }

    // Monotonicity: raising a controllable rate never increases any value.
    {
        let mut worst: f64 = 0.0;
        for tag in 30..36 {
            let m = random_model(seed, &tag.to_string());
            let sol = solve_policy(&m, 1e-12).unwrap();
            let ctrl: Vec<usize> = m
                .events
                .iter()
                .enumerate()
                .filter(|(_, e)| e.class == EventClass::Controllable)
                .map(|(i, _)| i)
                .collect();
            for &e in &ctrl {
                let mut boosted = m.clone();
                boosted.events[e].rate *= 1.5;
                let sol_b = solve_policy(&boosted, 1e-12).unwrap();
                for s in 0..m.state_count() {
                    if sol.values[s].is_finite() {
                        worst = worst.max(sol_b.values[s] - sol.values[s]);
                    }
                }
            }
        }
        table.check_le(
            "monotonicity_max_value_increase",
            worst.max(0.0),
            1e-8,
            "faster controllables never hurt",
        );
    }

    // The shipped 2-vs-2 model: composes, validates, solves, exports.
    {
        let (file, players) = parse_model_file(crate::des::model::EXAMPLE_MODEL).unwrap();
        let model = compose(&players, &file.events, &file.sync, &file.marked).unwrap();
        table.info("example_model_states", model.state_count() as f64, "reachable");
        let violations = model.validate_marking().len();
        table.check_le(
            "example_marked_violations",
            violations as f64,
            0.0,
            "goal states absorbing",
        );
        let sol = solve_policy(&model, 1e-9).unwrap();
        table.info(
            "example_initial_value_s",
            sol.values[model.initial],
            "expected time to goal from kickoff",
        );
        let export = crate::des::export_policy(&model, &sol.policy, &file.export);
        let parses = crate::behavior::RuleTable::parse(&export.fragment).is_ok();
        table.check_ge(
            "export_fragment_parses",
            if parses { 1.0 } else { 0.0 },
            1.0,
            format!("{} warnings", export.warnings.len()),
        );
        // Cooperation: some state prefers the pass.
        let passes = export.fragment.contains("pass_kick");
        table.check_ge(
            "example_policy_contains_pass",
            if passes { 1.0 } else { 0.0 },
            1.0,
            "cooperative action chosen somewhere",
        );
    }
    table
}
