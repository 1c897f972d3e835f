//! Canonical planar geometry: field description, poses, and the geometric
//! queries every other module shares.
//!
//! Field frame convention: origin at the field center, x axis toward the blue
//! goal. Under this convention the 180-degree field symmetry is the map
//! `(x, y, theta) -> (-x, -y, theta + pi)`.

use crate::geom::{self, Point, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Planar position plus orientation. `theta` is always kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::origin()
    }
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: geom::wrap_angle(theta),
        }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    /// Applies `delta`, expressed in this pose's body frame (odometry step).
    pub fn compose(&self, delta: &Pose) -> Pose {
        let (s, c) = self.theta.sin_cos();
        Pose::new(
            self.x + c * delta.x - s * delta.y,
            self.y + s * delta.x + c * delta.y,
            self.theta + delta.theta,
        )
    }

    /// The pose of `self` as seen from `base` (inverse composition).
    pub fn relative_to(&self, base: &Pose) -> Pose {
        let dx = self.x - base.x;
        let dy = self.y - base.y;
        let (s, c) = base.theta.sin_cos();
        Pose::new(c * dx + s * dy, -s * dx + c * dy, self.theta - base.theta)
    }

    /// The 180-degree field-symmetry twin of this pose.
    pub fn symmetry_twin(&self) -> Pose {
        Pose::new(-self.x, -self.y, self.theta + PI)
    }
}

/// A point where a scan circle crosses a field line, in the robot body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionPixel {
    pub x: f64,
    pub y: f64,
}

impl TransitionPixel {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Transforms a robot-frame pixel into the field frame.
pub fn transform_to_field(p: &TransitionPixel, robot: &Pose) -> Point {
    let (s, c) = robot.theta.sin_cos();
    Point::new(
        robot.x + c * p.x - s * p.y,
        robot.y + s * p.x + c * p.y,
    )
}

/// Inverse of [`transform_to_field`].
pub fn transform_to_robot(p: &Point, robot: &Pose) -> TransitionPixel {
    let dx = p.x - robot.x;
    let dy = p.y - robot.y;
    let (s, c) = robot.theta.sin_cos();
    TransitionPixel::new(c * dx + s * dy, -s * dx + c * dy)
}

/// A line segment in the field frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl Segment {
    pub fn new(ax: f64, ay: f64, bx: f64, by: f64) -> Self {
        Self {
            a: (ax, ay),
            b: (bx, by),
        }
    }

    pub fn start(&self) -> Point {
        Point::new(self.a.0, self.a.1)
    }

    pub fn end(&self) -> Point {
        Point::new(self.b.0, self.b.1)
    }

    pub fn length(&self) -> f64 {
        (self.end() - self.start()).norm()
    }

    /// `(rho, phi)` of the supporting line: `phi` in `[0, pi)`, `rho` signed.
    pub fn line_params(&self) -> (f64, f64) {
        let d = self.end() - self.start();
        let n = Vec2::new(-d.y, d.x).normalize();
        let rho = self.start().coords.dot(&n);
        normalize_line(rho, n.y.atan2(n.x))
    }
}

/// Canonicalizes line parameters to `phi` in `[0, pi)` with signed `rho`.
pub fn normalize_line(rho: f64, phi: f64) -> (f64, f64) {
    let mut r = rho;
    let mut p = phi;
    while p < 0.0 {
        p += PI;
        r = -r;
    }
    while p >= PI {
        p -= PI;
        r = -r;
    }
    (r, p)
}

/// Angular separation of two line orientations, folded to `[0, pi/2]`.
pub fn line_angle_distance(phi_a: f64, phi_b: f64) -> f64 {
    let d = (phi_a - phi_b).abs();
    d.min(PI - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoalColor {
    Blue,
    Yellow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub segment: Segment,
    pub color: GoalColor,
}

impl Goal {
    pub fn center(&self) -> Point {
        Point::new(
            (self.segment.a.0 + self.segment.b.0) / 2.0,
            (self.segment.a.1 + self.segment.b.1) / 2.0,
        )
    }
}

/// An expected relation between a pair of field lines, in Hough terms.
///
/// Parallel pairs carry a pose-invariant separation. Perpendicular pairs do
/// not: the rho gap between two perpendicular lines depends on where the
/// robot stands, so only the angle is checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LineRelation {
    Parallel { separation: f64 },
    Perpendicular,
}

impl LineRelation {
    /// Whether an observed `(delta_phi, delta_rho)` pair matches this relation.
    pub fn matches(&self, delta_phi: f64, delta_rho: f64, phi_tol: f64, rho_tol: f64) -> bool {
        match self {
            LineRelation::Parallel { separation } => {
                delta_phi <= phi_tol && (delta_rho - separation).abs() <= rho_tol
            }
            LineRelation::Perpendicular => (delta_phi - FRAC_PI_2).abs() <= phi_tol,
        }
    }
}

/// Field description used to build a [`FieldModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldConfig {
    pub length: f64,
    pub width: f64,
    /// Extra or replacement line segments; empty means "standard layout".
    #[serde(default)]
    pub segments: Vec<Segment>,
    #[serde(default = "default_goal_width")]
    pub goal_width: f64,
    #[serde(default = "default_goal_area_depth")]
    pub goal_area_depth: f64,
    #[serde(default = "default_goal_area_width")]
    pub goal_area_width: f64,
}

fn default_goal_width() -> f64 {
    2.0
}
fn default_goal_area_depth() -> f64 {
    0.75
}
fn default_goal_area_width() -> f64 {
    5.0
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            length: 12.0,
            width: 8.0,
            segments: Vec::new(),
            goal_width: default_goal_width(),
            goal_area_depth: default_goal_area_depth(),
            goal_area_width: default_goal_area_width(),
        }
    }
}

/// A distinct infinite line supporting one or more model segments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelLine {
    pub rho: f64,
    pub phi: f64,
    /// Indices of the segments lying on this line.
    pub segments: Vec<usize>,
}

/// Immutable field geometry: segments, goals, and the derived inter-line
/// relations used by the localizer's relevance filtering.
#[derive(Debug, Clone)]
pub struct FieldModel {
    pub length: f64,
    pub width: f64,
    pub segments: Vec<Segment>,
    pub goal_blue: Goal,
    pub goal_yellow: Goal,
    relations: Vec<LineRelation>,
    lines: Vec<ModelLine>,
}

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("field dimensions must be positive (got {length} x {width})")]
    NonPositiveDimensions { length: f64, width: f64 },
    #[error("segment {index} is degenerate (identical endpoints)")]
    DegenerateSegment { index: usize },
    #[error("segment {index} extends outside the field rectangle")]
    SegmentOutOfBounds { index: usize },
    #[error("field is not symmetric under 180-degree rotation (segment {index} has no twin)")]
    Asymmetric { index: usize },
}

const GEOM_TOL: f64 = 1e-9;

impl FieldModel {
    /// Builds a field model, validating geometry and deriving line relations.
    ///
    /// The field must be symmetric under 180-degree rotation about its center;
    /// goal-color disambiguation relies on that symmetry being exact.
    pub fn from_config(cfg: &FieldConfig) -> Result<Self, FieldError> {
        if cfg.length <= 0.0 || cfg.width <= 0.0 {
            return Err(FieldError::NonPositiveDimensions {
                length: cfg.length,
                width: cfg.width,
            });
        }
        let segments = if cfg.segments.is_empty() {
            standard_segments(cfg)
        } else {
            cfg.segments.clone()
        };

        let half_l = cfg.length / 2.0 + GEOM_TOL;
        let half_w = cfg.width / 2.0 + GEOM_TOL;
        for (i, s) in segments.iter().enumerate() {
            if s.length() < GEOM_TOL {
                return Err(FieldError::DegenerateSegment { index: i });
            }
            for (x, y) in [s.a, s.b] {
                if x.abs() > half_l || y.abs() > half_w {
                    return Err(FieldError::SegmentOutOfBounds { index: i });
                }
            }
        }

        // 180-degree symmetry: every segment's rotated image must be present.
        for (i, s) in segments.iter().enumerate() {
            let ra = (-s.a.0, -s.a.1);
            let rb = (-s.b.0, -s.b.1);
            let twin_found = segments.iter().any(|t| {
                (close(t.a, ra) && close(t.b, rb)) || (close(t.a, rb) && close(t.b, ra))
            });
            if !twin_found {
                return Err(FieldError::Asymmetric { index: i });
            }
        }

        let lines = dedupe_lines(&segments);
        let relations = derive_relations(&lines);
        let gw = cfg.goal_width / 2.0;
        Ok(Self {
            length: cfg.length,
            width: cfg.width,
            segments,
            goal_blue: Goal {
                segment: Segment::new(cfg.length / 2.0, -gw, cfg.length / 2.0, gw),
                color: GoalColor::Blue,
            },
            goal_yellow: Goal {
                segment: Segment::new(-cfg.length / 2.0, -gw, -cfg.length / 2.0, gw),
                color: GoalColor::Yellow,
            },
            relations,
            lines,
        })
    }

    pub fn default_field() -> Self {
        Self::from_config(&FieldConfig::default()).expect("default field config is valid")
    }

    /// Expected inter-line relations derived from the model segments.
    pub fn line_relations(&self) -> &[LineRelation] {
        &self.relations
    }

    /// The distinct infinite lines of the model, for correlation.
    pub fn model_lines(&self) -> &[ModelLine] {
        &self.lines
    }

    pub fn goal(&self, color: GoalColor) -> &Goal {
        match color {
            GoalColor::Blue => &self.goal_blue,
            GoalColor::Yellow => &self.goal_yellow,
        }
    }

    /// Minimum distance from a field-frame point to any model segment.
    pub fn distance_to_segments(&self, p: &Point) -> f64 {
        self.segments
            .iter()
            .map(|s| geom::point_segment_distance(p, &s.start(), &s.end()))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: &Point, margin: f64) -> bool {
        p.x.abs() <= self.length / 2.0 + margin && p.y.abs() <= self.width / 2.0 + margin
    }
}

fn close(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() < 1e-6 && (a.1 - b.1).abs() < 1e-6
}

/// Standard layout: side lines, goal lines, center line, and two goal areas.
fn standard_segments(cfg: &FieldConfig) -> Vec<Segment> {
    let hl = cfg.length / 2.0;
    let hw = cfg.width / 2.0;
    let gd = cfg.goal_area_depth;
    let gw = cfg.goal_area_width / 2.0;
    vec![
        // side lines
        Segment::new(-hl, -hw, hl, -hw),
        Segment::new(-hl, hw, hl, hw),
        // goal (end) lines
        Segment::new(hl, -hw, hl, hw),
        Segment::new(-hl, -hw, -hl, hw),
        // center line
        Segment::new(0.0, -hw, 0.0, hw),
        // blue goal area
        Segment::new(hl - gd, -gw, hl - gd, gw),
        Segment::new(hl - gd, -gw, hl, -gw),
        Segment::new(hl - gd, gw, hl, gw),
        // yellow goal area
        Segment::new(-hl + gd, -gw, -hl + gd, gw),
        Segment::new(-hl + gd, -gw, -hl, -gw),
        Segment::new(-hl + gd, gw, -hl, gw),
    ]
}

fn dedupe_lines(segments: &[Segment]) -> Vec<ModelLine> {
    let mut lines: Vec<ModelLine> = Vec::new();
    for (i, s) in segments.iter().enumerate() {
        let (rho, phi) = s.line_params();
        match lines.iter_mut().find(|l| {
            line_angle_distance(l.phi, phi) < 1e-6
                && same_line_rho(l.rho, l.phi, rho, phi)
        }) {
            Some(l) => l.segments.push(i),
            None => lines.push(ModelLine {
                rho,
                phi,
                segments: vec![i],
            }),
        }
    }
    lines
}

fn same_line_rho(rho_a: f64, phi_a: f64, rho_b: f64, phi_b: f64) -> bool {
    // Two parameterizations describe one line if rho agrees after accounting
    // for a possible phi fold across the [0, pi) seam.
    if (phi_a - phi_b).abs() < 1e-6 {
        (rho_a - rho_b).abs() < 1e-6
    } else {
        (rho_a + rho_b).abs() < 1e-6
    }
}

fn derive_relations(lines: &[ModelLine]) -> Vec<LineRelation> {
    let mut out: Vec<LineRelation> = Vec::new();
    for j in 0..lines.len() {
        for k in (j + 1)..lines.len() {
            let dphi = line_angle_distance(lines[j].phi, lines[k].phi);
            let rel = if dphi < 1e-6 {
                let sep = if (lines[j].phi - lines[k].phi).abs() < 1e-6 {
                    (lines[j].rho - lines[k].rho).abs()
                } else {
                    (lines[j].rho + lines[k].rho).abs()
                };
                Some(LineRelation::Parallel { separation: sep })
            } else if (dphi - FRAC_PI_2).abs() < 1e-6 {
                Some(LineRelation::Perpendicular)
            } else {
                None // only right-angle structure is recorded
            };
            if let Some(rel) = rel {
                let dup = out.iter().any(|r| match (r, &rel) {
                    (
                        LineRelation::Parallel { separation: a },
                        LineRelation::Parallel { separation: b },
                    ) => (a - b).abs() < 1e-6,
                    (LineRelation::Perpendicular, LineRelation::Perpendicular) => true,
                    _ => false,
                });
                if !dup {
                    out.push(rel);
                }
            }
        }
    }
    out
}
