//! Small planar-geometry toolbox shared by the simulator and the localizer.

use nalgebra::{Point2, Vector2};

pub type Point = Point2<f64>;
pub type Vec2 = Vector2<f64>;

/// Wraps an angle to the half-open interval `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::TAU);
    if r > std::f64::consts::PI {
        r - std::f64::consts::TAU
    } else {
        r
    }
}

/// Absolute angular difference between two directions, in `[0, pi]`.
pub fn angle_dist(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Minimum distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Intersections of the segment `[a, b]` with the circle centered at `c` with
/// radius `r`, returned in increasing parameter order along the segment.
pub fn segment_circle_intersections(a: &Point, b: &Point, c: &Point, r: f64) -> Vec<Point> {
    let d = b - a;
    let f = a - c;
    let qa = d.norm_squared();
    if qa == 0.0 {
        return Vec::new();
    }
    let qb = 2.0 * f.dot(&d);
    let qc = f.norm_squared() - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let mut out = Vec::new();
    for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
        if (0.0..=1.0).contains(&t) {
            out.push(a + d * t);
        }
    }
    if out.len() == 2 && (out[0] - out[1]).norm() < 1e-12 {
        out.pop(); // tangent point counted once
    }
    out
}

/// Distance along the ray `origin + t*dir` (unit `dir`) to the segment
/// `[a, b]`, if the ray hits it.
pub fn ray_segment_distance(origin: &Point, dir: &Vec2, a: &Point, b: &Point) -> Option<f64> {
    let v1 = origin - a;
    let v2 = b - a;
    let denom = dir.x * v2.y - dir.y * v2.x;
    if denom.abs() < 1e-12 {
        return None; // parallel
    }
    let t = (v2.x * v1.y - v2.y * v1.x) / denom;
    let u = (dir.x * v1.y - dir.y * v1.x) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Distance along the ray to the near side of a disc, if the ray hits it.
/// The origin is assumed outside the disc; an origin inside yields `Some(0)`.
pub fn ray_disc_distance(origin: &Point, dir: &Vec2, center: &Point, radius: f64) -> Option<f64> {
    let oc = center - origin;
    if oc.norm() <= radius {
        return Some(0.0);
    }
    let proj = oc.dot(dir);
    if proj < 0.0 {
        return None;
    }
    let perp2 = oc.norm_squared() - proj * proj;
    let r2 = radius * radius;
    if perp2 > r2 {
        return None;
    }
    Some(proj - (r2 - perp2).sqrt())
}

/// Distance along the ray to the inside wall of a circle enclosing the origin.
pub fn ray_circle_exit_distance(origin: &Point, dir: &Vec2, center: &Point, radius: f64) -> f64 {
    let f = origin - center;
    let qb = 2.0 * f.dot(dir);
    let qc = f.norm_squared() - radius * radius;
    let disc = (qb * qb - 4.0 * qc).max(0.0);
    (-qb + disc.sqrt()) / 2.0
}

/// True if the open segment `(a, b)` passes through the disc.
/// Endpoints touching the disc boundary do not count as occlusion.
pub fn segment_intersects_disc(a: &Point, b: &Point, center: &Point, radius: f64) -> bool {
    point_segment_distance(center, a, b) < radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn wrap_covers_boundaries() {
        assert_abs_diff_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI);
        assert_abs_diff_eq!(wrap_angle(-FRAC_PI_2), -FRAC_PI_2);
        assert_abs_diff_eq!(wrap_angle(2.5 * PI), FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn segment_distance_basics() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(2.0, 0.0);
        assert_abs_diff_eq!(point_segment_distance(&Point::new(1.0, 0.0), &a, &b), 0.0);
        assert_abs_diff_eq!(point_segment_distance(&Point::new(1.0, 0.3), &a, &b), 0.3);
        assert_abs_diff_eq!(
            point_segment_distance(&Point::new(3.0, 0.0), &a, &b),
            1.0
        );
    }

    #[test]
    fn circle_chord_has_two_hits() {
        let hits = segment_circle_intersections(
            &Point::new(-5.0, 1.0),
            &Point::new(5.0, 1.0),
            &Point::new(0.0, 0.0),
            2.0,
        );
        assert_eq!(hits.len(), 2);
        let half_chord = (4.0_f64 - 1.0).sqrt();
        assert_abs_diff_eq!(hits[0].x, -half_chord, epsilon = 1e-12);
        assert_abs_diff_eq!(hits[1].x, half_chord, epsilon = 1e-12);
    }

    #[test]
    fn ray_hits_wall_ahead_only() {
        let o = Point::new(0.0, 0.0);
        let wall_a = Point::new(1.0, -5.0);
        let wall_b = Point::new(1.0, 5.0);
        let d = ray_segment_distance(&o, &Vec2::new(1.0, 0.0), &wall_a, &wall_b);
        assert_abs_diff_eq!(d.unwrap(), 1.0);
        assert!(ray_segment_distance(&o, &Vec2::new(-1.0, 0.0), &wall_a, &wall_b).is_none());
    }

    #[test]
    fn disc_ray_distance() {
        let o = Point::new(0.0, 0.0);
        let d = ray_disc_distance(&o, &Vec2::new(1.0, 0.0), &Point::new(3.0, 0.0), 0.5);
        assert_abs_diff_eq!(d.unwrap(), 2.5);
        assert!(ray_disc_distance(&o, &Vec2::new(0.0, 1.0), &Point::new(3.0, 0.0), 0.5).is_none());
    }
}
