//! Detection-level sensor simulation: sonar ring, ball cameras, goal sightings,
//! and the line-transition scan feeding the localizer.

use crate::field::{FieldModel, GoalColor, TransitionPixel};
use crate::geom::{self, wrap_angle, Point, Vec2};
use crate::sim::ball::BallState;
use crate::sim::kinematics::RobotState;
use crate::RobotId;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

pub const SONAR_BEAMS: usize = 16;

/// One full ring reading; `ranges[k]` is the beam at `k * 2*pi/16` from the
/// robot heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SonarScan {
    pub ranges: [f64; SONAR_BEAMS],
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SonarParams {
    pub r_max: f64,
    pub noise_sigma: f64,
}

impl Default for SonarParams {
    fn default() -> Self {
        Self {
            r_max: 5.0,
            noise_sigma: 0.01,
        }
    }
}

/// The world a sonar ring sees: an enclosing wall plus robot discs.
#[derive(Debug, Clone)]
pub struct SonarWorld {
    pub walls: WallShape,
    pub discs: Vec<(Point, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub enum WallShape {
    Rect { half_l: f64, half_w: f64 },
    Circle { radius: f64 },
}

impl WallShape {
    fn ray_distance(&self, origin: &Point, dir: &Vec2) -> f64 {
        match self {
            WallShape::Circle { radius } => {
                geom::ray_circle_exit_distance(origin, dir, &Point::new(0.0, 0.0), *radius)
            }
            WallShape::Rect { half_l, half_w } => {
                let corners = [
                    Point::new(-half_l, -half_w),
                    Point::new(*half_l, -half_w),
                    Point::new(*half_l, *half_w),
                    Point::new(-half_l, *half_w),
                ];
                let mut best = f64::INFINITY;
                for i in 0..4 {
                    if let Some(d) =
                        geom::ray_segment_distance(origin, dir, &corners[i], &corners[(i + 1) % 4])
                    {
                        best = best.min(d);
                    }
                }
                best
            }
        }
    }
}

/// Casts the sixteen beams and returns the nearest hits, clamped to `r_max`.
/// Noise is zero-mean Gaussian per beam; pass `None` for a noise-free scan.
pub fn simulate_sonar(
    s: &RobotState,
    world: &SonarWorld,
    p: &SonarParams,
    mut rng: Option<&mut ChaCha8Rng>,
) -> SonarScan {
    let origin = s.pose.position();
    let mut ranges = [p.r_max; SONAR_BEAMS];
    for (k, slot) in ranges.iter_mut().enumerate() {
        let angle = s.pose.theta + k as f64 * TAU / SONAR_BEAMS as f64;
        let dir = Vec2::new(angle.cos(), angle.sin());
        let mut best = world.walls.ray_distance(&origin, &dir);
        for (center, radius) in &world.discs {
            if let Some(d) = geom::ray_disc_distance(&origin, &dir, center, *radius) {
                best = best.min(d);
            }
        }
        let mut r = best.min(p.r_max);
        if p.noise_sigma > 0.0 {
            if let Some(rng) = rng.as_deref_mut() {
                let noise = Normal::new(0.0, p.noise_sigma).unwrap();
                r += noise.sample(rng);
            }
        }
        *slot = r.clamp(1e-6, p.r_max);
    }
    SonarScan { ranges }
}

/// A ball sighting in the observer's polar frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallObservation {
    pub observer: RobotId,
    pub relative_bearing: f64,
    pub relative_distance: f64,
    pub timestamp: f64,
    /// One sigma of the sensor noise: meters on range, radians on bearing.
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraParams {
    /// Full field-of-view angle, rad.
    pub fov: f64,
    pub range: f64,
    pub noise_sigma: f64,
}

impl CameraParams {
    pub fn front_default() -> Self {
        Self {
            fov: std::f64::consts::FRAC_PI_2,
            range: 6.0,
            noise_sigma: 0.05,
        }
    }

    pub fn omni_default() -> Self {
        Self {
            fov: TAU,
            range: 4.0,
            noise_sigma: 0.15,
        }
    }
}

/// Returns a noisy observation of the ball if it is inside the camera cone,
/// within range, and not occluded by another robot disc.
pub fn observe_ball(
    s: &RobotState,
    observer: RobotId,
    ball: &BallState,
    occluders: &[(Point, f64)],
    cam: &CameraParams,
    timestamp: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Option<BallObservation> {
    let rel = ball.position - s.pose.position();
    let dist = rel.norm();
    if dist <= 1e-9 || dist > cam.range {
        return None;
    }
    let bearing = wrap_angle(rel.y.atan2(rel.x) - s.pose.theta);
    if bearing.abs() > cam.fov / 2.0 {
        return None;
    }
    // Line-of-sight test, trimmed at both ends so neither the observer's own
    // body nor a holder touching the ball registers as occlusion.
    let dir = rel / dist;
    let start = s.pose.position() + dir * 0.26;
    let end = ball.position - dir * 0.30;
    if (end - start).dot(&dir) > 0.0 {
        for (center, radius) in occluders {
            if geom::segment_intersects_disc(&start, &end, center, *radius) {
                return None;
            }
        }
    }
    let (mut b, mut d) = (bearing, dist);
    if cam.noise_sigma > 0.0 {
        if let Some(rng) = rng.as_deref_mut() {
            let n = Normal::new(0.0, cam.noise_sigma).unwrap();
            d = (d + n.sample(rng)).max(0.05);
            b = wrap_angle(b + n.sample(rng));
        }
    }
    Some(BallObservation {
        observer,
        relative_bearing: b,
        relative_distance: d,
        timestamp,
        noise_sigma: cam.noise_sigma,
    })
}

/// A goal sighting: which color, and at what body-frame bearing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalObservation {
    pub color: GoalColor,
    pub bearing: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GoalSensorParams {
    pub fov: f64,
    pub range: f64,
    pub bearing_sigma: f64,
}

impl Default for GoalSensorParams {
    fn default() -> Self {
        // The up camera sees all around; goals are visible across the field.
        Self {
            fov: TAU,
            range: 15.0,
            bearing_sigma: 0.03,
        }
    }
}

/// Observes the nearer visible goal, if any.
pub fn observe_goal(
    s: &RobotState,
    field: &FieldModel,
    p: &GoalSensorParams,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Option<GoalObservation> {
    let mut best: Option<(f64, GoalObservation)> = None;
    for goal in [&field.goal_blue, &field.goal_yellow] {
        let rel = goal.center() - s.pose.position();
        let dist = rel.norm();
        if dist > p.range || dist < 1e-9 {
            continue;
        }
        let mut bearing = wrap_angle(rel.y.atan2(rel.x) - s.pose.theta);
        if bearing.abs() > p.fov / 2.0 {
            continue;
        }
        if p.bearing_sigma > 0.0 {
            if let Some(rng) = rng.as_deref_mut() {
                let n = Normal::new(0.0, p.bearing_sigma).unwrap();
                bearing = wrap_angle(bearing + n.sample(rng));
            }
        }
        let obs = GoalObservation {
            color: goal.color,
            bearing,
        };
        if best.as_ref().map_or(true, |(d, _)| dist < *d) {
            best = Some((dist, obs));
        }
    }
    best.map(|(_, o)| o)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanParams {
    pub circles: Vec<f64>,
    pub noise_sigma: f64,
    /// Clutter points added, as a fraction of the true transition count.
    pub clutter_fraction: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        // Reaching past half the field width keeps at least two non-parallel
        // lines in range from any interior pose on the standard field.
        Self {
            circles: vec![0.75, 1.5, 2.25, 3.0, 3.75, 4.5],
            noise_sigma: 0.01,
            clutter_fraction: 0.05,
        }
    }
}

/// Collects the robot-frame points where the scan circles cross field lines,
/// with optional Gaussian position noise and uniform clutter.
///
/// `noise_rng` perturbs true transitions; `clutter_rng` draws the outliers.
/// Keeping the two streams separate lets either be replayed alone.
pub fn scan_transitions(
    s: &RobotState,
    field: &FieldModel,
    p: &ScanParams,
    mut noise_rng: Option<&mut ChaCha8Rng>,
    clutter_rng: Option<&mut ChaCha8Rng>,
) -> Vec<TransitionPixel> {
    let center = s.pose.position();
    let mut pixels = Vec::new();
    for &radius in &p.circles {
        debug_assert!(radius > 0.0);
        for seg in &field.segments {
            for hit in geom::segment_circle_intersections(&seg.start(), &seg.end(), &center, radius)
            {
                let mut pix = crate::field::transform_to_robot(&hit, &s.pose);
                if p.noise_sigma > 0.0 {
                    if let Some(rng) = noise_rng.as_deref_mut() {
                        let n = Normal::new(0.0, p.noise_sigma).unwrap();
                        pix.x += n.sample(rng);
                        pix.y += n.sample(rng);
                    }
                }
                pixels.push(pix);
            }
        }
    }
    if p.clutter_fraction > 0.0 && !pixels.is_empty() && !p.circles.is_empty() {
        if let Some(rng) = clutter_rng {
            let n_clutter = (pixels.len() as f64 * p.clutter_fraction).round() as usize;
            for _ in 0..n_clutter {
                let radius = p.circles[rng.random_range(0..p.circles.len())];
                let angle = rng.random_range(0.0..TAU);
                pixels.push(TransitionPixel::new(
                    radius * angle.cos(),
                    radius * angle.sin(),
                ));
            }
        }
    }
    pixels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Pose;
    use crate::field::{FieldConfig, Segment};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn noiseless_sonar() -> SonarParams {
        SonarParams {
            noise_sigma: 0.0,
            ..SonarParams::default()
        }
    }

    #[test]
    fn circular_arena_gives_uniform_ranges() {
        let s = RobotState::at(Pose::new(0.0, 0.0, 0.7));
        let world = SonarWorld {
            walls: WallShape::Circle { radius: 3.0 },
            discs: vec![],
        };
        let scan = simulate_sonar(&s, &world, &noiseless_sonar(), None);
        for r in scan.ranges {
            assert_abs_diff_eq!(r, 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn wall_ahead_hits_beam_zero_only() {
        let s = RobotState::at(Pose::origin());
        let world = SonarWorld {
            walls: WallShape::Rect {
                half_l: 1.0,
                half_w: 4.0,
            },
            discs: vec![],
        };
        let scan = simulate_sonar(&s, &world, &noiseless_sonar(), None);
        assert_abs_diff_eq!(scan.ranges[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(scan.ranges[8], 1.0, epsilon = 1e-9); // wall behind too
        assert_abs_diff_eq!(scan.ranges[4], 4.0, epsilon = 1e-9); // abeam
    }

    /// Independent 1 mm ray-march oracle for a cluttered scene.
    #[test]
    fn sonar_matches_ray_march_oracle() {
        let s = RobotState::at(Pose::new(0.8, -0.4, 0.3));
        let world = SonarWorld {
            walls: WallShape::Rect {
                half_l: 6.0,
                half_w: 4.0,
            },
            discs: vec![
                (Point::new(2.0, 0.2), 0.24),
                (Point::new(-1.0, -1.5), 0.24),
                (Point::new(0.8, 2.0), 0.3),
            ],
        };
        let p = noiseless_sonar();
        let scan = simulate_sonar(&s, &world, &p, None);
        for k in 0..SONAR_BEAMS {
            let angle = s.pose.theta + k as f64 * TAU / 16.0;
            let dir = Vec2::new(angle.cos(), angle.sin());
            let mut d = 0.0;
            let march = loop {
                let pt = s.pose.position() + dir * d;
                let outside = pt.x.abs() > 6.0 || pt.y.abs() > 4.0;
                let in_disc = world
                    .discs
                    .iter()
                    .any(|(c, r)| (pt - c).norm() <= *r);
                if outside || in_disc || d >= p.r_max {
                    break d.min(p.r_max);
                }
                d += 0.001;
            };
            assert!(
                (scan.ranges[k] - march).abs() < 0.01,
                "beam {k}: {} vs oracle {march}",
                scan.ranges[k]
            );
        }
    }

    #[test]
    fn ball_dead_ahead_is_seen_cleanly() {
        let s = RobotState::at(Pose::origin());
        let ball = BallState::at_rest(2.0, 0.0);
        let cam = CameraParams {
            noise_sigma: 0.0,
            ..CameraParams::front_default()
        };
        let obs = observe_ball(&s, 1, &ball, &[], &cam, 0.0, None).unwrap();
        assert_abs_diff_eq!(obs.relative_bearing, 0.0);
        assert_abs_diff_eq!(obs.relative_distance, 2.0);
    }

    #[test]
    fn ball_behind_front_camera_is_missed() {
        let s = RobotState::at(Pose::origin());
        let ball = BallState::at_rest(-2.0, 0.0);
        let cam = CameraParams::front_default();
        assert!(observe_ball(&s, 1, &ball, &[], &cam, 0.0, None).is_none());
    }

    /// Occlusion decision must agree with the segment-disc oracle.
    #[test]
    fn occlusion_matches_segment_disc_oracle() {
        let s = RobotState::at(Pose::origin());
        let cam = CameraParams {
            noise_sigma: 0.0,
            ..CameraParams::front_default()
        };
        let ball = BallState::at_rest(4.0, 0.0);
        let blocker_on = (Point::new(2.0, 0.0), 0.24);
        let blocker_off = (Point::new(2.0, 0.8), 0.24);
        assert!(observe_ball(&s, 1, &ball, &[blocker_on], &cam, 0.0, None).is_none());
        assert!(observe_ball(&s, 1, &ball, &[blocker_off], &cam, 0.0, None).is_some());
        // Oracle on the trimmed sight line.
        let start = Point::new(0.26, 0.0);
        let end = Point::new(4.0 - 0.30, 0.0);
        assert!(geom::segment_intersects_disc(&start, &end, &blocker_on.0, blocker_on.1));
        assert!(!geom::segment_intersects_disc(&start, &end, &blocker_off.0, blocker_off.1));
    }

    #[test]
    fn scan_chord_geometry_on_a_long_line() {
        // One long line 1 m to the left; a radius-2 circle crosses it twice.
        let cfg = FieldConfig {
            segments: vec![
                Segment::new(-5.0, 1.0, 5.0, 1.0),
                Segment::new(-5.0, -1.0, 5.0, -1.0),
            ],
            ..FieldConfig::default()
        };
        let field = FieldModel::from_config(&cfg).unwrap();
        let s = RobotState::at(Pose::origin());
        let p = ScanParams {
            circles: vec![2.0],
            noise_sigma: 0.0,
            clutter_fraction: 0.0,
        };
        let pixels = scan_transitions(&s, &field, &p, None, None);
        // Two lines in range, two crossings each.
        assert_eq!(pixels.len(), 4);
        let on_upper: Vec<_> = pixels.iter().filter(|p| p.y > 0.0).collect();
        assert_eq!(on_upper.len(), 2);
        let half_chord = (4.0_f64 - 1.0).sqrt();
        for pix in on_upper {
            assert_abs_diff_eq!(pix.y, 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(pix.x.abs(), half_chord, epsilon = 1e-9);
        }
    }

    #[test]
    fn scan_far_from_lines_is_empty() {
        let field = FieldModel::default_field();
        let s = RobotState::at(Pose::new(3.0, 0.0, 0.0)); // >= 2 m from every line
        let p = ScanParams {
            circles: vec![0.5, 1.0],
            noise_sigma: 0.0,
            clutter_fraction: 0.0,
        };
        assert!(scan_transitions(&s, &field, &p, None, None).is_empty());
    }

    /// Closed-form oracle: intersections computed in the field frame and then
    /// transformed must reproduce the scan exactly.
    #[test]
    fn scan_matches_field_frame_oracle() {
        let field = FieldModel::default_field();
        let s = RobotState::at(Pose::new(1.3, -2.2, 0.77));
        let p = ScanParams {
            circles: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            noise_sigma: 0.0,
            clutter_fraction: 0.0,
        };
        let pixels = scan_transitions(&s, &field, &p, None, None);
        let mut oracle = Vec::new();
        for &r in &p.circles {
            for seg in &field.segments {
                for hit in geom::segment_circle_intersections(
                    &seg.start(),
                    &seg.end(),
                    &s.pose.position(),
                    r,
                ) {
                    oracle.push(crate::field::transform_to_robot(&hit, &s.pose));
                }
            }
        }
        assert_eq!(pixels.len(), oracle.len());
        for (a, b) in pixels.iter().zip(&oracle) {
            assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-12);
            assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-12);
        }
        // Sanity: every pixel lies on one of the circles.
        for pix in &pixels {
            let r = (pix.x * pix.x + pix.y * pix.y).sqrt();
            assert!(p.circles.iter().any(|c| (c - r).abs() < 1e-9));
        }
    }

    #[test]
    fn goal_is_seen_omnidirectionally() {
        let field = FieldModel::default_field();
        let s = RobotState::at(Pose::new(0.0, 0.0, PI)); // facing the yellow goal
        let p = GoalSensorParams {
            bearing_sigma: 0.0,
            ..GoalSensorParams::default()
        };
        let obs = observe_goal(&s, &field, &p, None).unwrap();
        // Both goals at 6 m; the tie resolves to the blue goal listed first,
        // seen directly behind.
        assert_eq!(obs.color, GoalColor::Blue);
        assert_abs_diff_eq!(obs.bearing.abs(), PI, epsilon = 1e-9);
    }
}
