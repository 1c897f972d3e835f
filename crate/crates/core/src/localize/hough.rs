//! Line extraction in Hough space.
//!
//! Lines are parameterized as `rho = x*cos(phi) + y*sin(phi)` with `phi` in
//! `[0, pi)` and `rho` signed. The half-plane convention avoids the double
//! cover: `(rho, phi + pi)` and `(-rho, phi)` are the same line, and the
//! accumulator treats the `phi` seam accordingly.

use crate::field::TransitionPixel;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughLine {
    pub rho: f64,
    pub phi: f64,
    pub votes: u32,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AccumulatorConfig {
    /// Rho bin width, meters.
    pub rho_res: f64,
    /// Requested phi bin width, radians; the effective width divides pi evenly.
    pub phi_res: f64,
}

impl Default for AccumulatorConfig {
    fn default() -> Self {
        Self {
            rho_res: 0.02,
            phi_res: PI / 180.0,
        }
    }
}

/// Vote floor applied when peaks are extracted: a cell qualifies when its
/// votes reach both `abs` (capped at the global maximum, so the maximum
/// always qualifies) and `rel` times the global maximum.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VoteFloor {
    pub abs: u32,
    pub rel: f64,
}

impl Default for VoteFloor {
    fn default() -> Self {
        Self { abs: 4, rel: 0.25 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum HoughError {
    #[error("cannot accumulate an empty pixel set")]
    EmptyPixelSet,
    #[error("need at least two lines, got {0}")]
    InsufficientLines(usize),
}

#[derive(Debug, Clone)]
pub struct HoughAccumulator {
    pub rho_bins: usize,
    pub phi_bins: usize,
    pub rho_res: f64,
    pub phi_res: f64,
    rho_center: i64,
    cells: Vec<u32>,
    pixel_count: usize,
}

impl HoughAccumulator {
    #[inline]
    pub fn votes(&self, rho_bin: usize, phi_bin: usize) -> u32 {
        self.cells[phi_bin * self.rho_bins + rho_bin]
    }

    pub fn rho_value(&self, rho_bin: usize) -> f64 {
        (rho_bin as i64 - self.rho_center) as f64 * self.rho_res
    }

    pub fn phi_value(&self, phi_bin: usize) -> f64 {
        phi_bin as f64 * self.phi_res
    }

    pub fn total_votes(&self) -> u64 {
        self.cells.iter().map(|&v| v as u64).sum()
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    pub fn max_votes(&self) -> u32 {
        self.cells.iter().copied().max().unwrap_or(0)
    }
}

/// Builds the accumulator: every pixel votes once in each phi column, into
/// the rho bin nearest `x*cos(phi) + y*sin(phi)`. Total votes are therefore
/// exactly `pixels * phi_bins`.
pub fn hough_accumulate(
    pixels: &[TransitionPixel],
    cfg: &AccumulatorConfig,
) -> Result<HoughAccumulator, HoughError> {
    if pixels.is_empty() {
        return Err(HoughError::EmptyPixelSet);
    }
    debug_assert!(cfg.rho_res > 0.0 && cfg.phi_res > 0.0);
    let phi_bins = (PI / cfg.phi_res).round().max(1.0) as usize;
    let phi_res = PI / phi_bins as f64;
    let extent = pixels
        .iter()
        .map(|p| (p.x * p.x + p.y * p.y).sqrt())
        .fold(0.0f64, f64::max);
    let half_bins = (extent / cfg.rho_res).ceil() as i64 + 1;
    let rho_bins = (2 * half_bins + 1) as usize;
    let mut cells = vec![0u32; rho_bins * phi_bins];

    let trig: Vec<(f64, f64)> = (0..phi_bins)
        .map(|b| (b as f64 * phi_res).sin_cos())
        .collect();
    for p in pixels {
        for (b, (s, c)) in trig.iter().enumerate() {
            let rho = p.x * c + p.y * s;
            let bin = ((rho / cfg.rho_res).round() as i64 + half_bins)
                .clamp(0, rho_bins as i64 - 1) as usize;
            cells[b * rho_bins + bin] += 1;
        }
    }
    Ok(HoughAccumulator {
        rho_bins,
        phi_bins,
        rho_res: cfg.rho_res,
        phi_res,
        rho_center: half_bins,
        cells,
        pixel_count: pixels.len(),
    })
}

/// True if two cells fall in one 3x3 suppression neighborhood, including the
/// mirrored adjacency across the phi seam.
fn in_neighborhood(acc: &HoughAccumulator, a: (usize, usize), b: (usize, usize)) -> bool {
    let (ra, pa) = (a.0 as i64, a.1 as i64);
    let (rb, pb) = (b.0 as i64, b.1 as i64);
    let dphi = (pa - pb).abs();
    if dphi <= 1 && (ra - rb).abs() <= 1 {
        return true;
    }
    // Across the seam phi wraps onto phi - pi with rho negated.
    if acc.phi_bins as i64 - dphi <= 1 {
        let rb_mirror = 2 * acc.rho_center - rb;
        if (ra - rb_mirror).abs() <= 1 {
            return true;
        }
    }
    false
}

/// Picks up to `q` peak cells by descending votes with 3x3 non-maximum
/// suppression, so one physical line yields one entry. Fewer than `q` come
/// back when the accumulator has fewer surviving maxima.
pub fn top_lines_with_floor(acc: &HoughAccumulator, q: usize, floor: &VoteFloor) -> Vec<HoughLine> {
    debug_assert!(q >= 1);
    let max = acc.max_votes();
    if max == 0 {
        return Vec::new();
    }
    let threshold = (floor.abs.min(max)).max((floor.rel * max as f64).ceil() as u32);
    let mut cells: Vec<(u32, usize, usize)> = Vec::new();
    for pb in 0..acc.phi_bins {
        for rb in 0..acc.rho_bins {
            let v = acc.votes(rb, pb);
            if v >= threshold {
                cells.push((v, pb, rb));
            }
        }
    }
    // Descending votes; scan order breaks ties deterministically.
    cells.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut accepted: Vec<(usize, usize)> = Vec::new();
    let mut lines = Vec::new();
    for (v, pb, rb) in cells {
        if lines.len() == q {
            break;
        }
        if accepted
            .iter()
            .any(|&cell| in_neighborhood(acc, (rb, pb), cell))
        {
            continue;
        }
        accepted.push((rb, pb));
        lines.push(HoughLine {
            rho: acc.rho_value(rb),
            phi: acc.phi_value(pb),
            votes: v,
        });
    }
    lines
}

pub fn top_lines(acc: &HoughAccumulator, q: usize) -> Vec<HoughLine> {
    top_lines_with_floor(acc, q, &VoteFloor::default())
}

/// Re-fits a peak line to its supporting pixels by total least squares,
/// recovering sub-bin resolution. Pixels within `gate` of the line count as
/// support; lines with fewer than two supporters are returned unchanged.
pub fn refine_line(line: &HoughLine, pixels: &[TransitionPixel], gate: f64) -> HoughLine {
    let (s, c) = line.phi.sin_cos();
    let inliers: Vec<&TransitionPixel> = pixels
        .iter()
        .filter(|p| (p.x * c + p.y * s - line.rho).abs() <= gate)
        .collect();
    if inliers.len() < 2 {
        return *line;
    }
    let n = inliers.len() as f64;
    let mx = inliers.iter().map(|p| p.x).sum::<f64>() / n;
    let my = inliers.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in &inliers {
        let dx = p.x - mx;
        let dy = p.y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // Direction of largest scatter; the line normal is perpendicular to it.
    let dir = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let normal = dir + std::f64::consts::FRAC_PI_2;
    let (rho, phi) = crate::field::normalize_line(mx * normal.cos() + my * normal.sin(), normal);
    HoughLine {
        rho,
        phi,
        votes: line.votes,
    }
}

/// Hough-space distance between two lines (Eq. 2 quantities).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinePairDistance {
    pub j: usize,
    pub k: usize,
    /// Angular gap folded to `[0, pi/2]`.
    pub delta_phi: f64,
    /// Rho gap; for nearly-parallel pairs this is the line separation.
    pub delta_rho: f64,
}

/// Distances for every unordered line pair.
///
/// When the angular gap folds across the `[0, pi)` seam the rho gap is taken
/// with the sign flip of the fold, so the separation of two nearly-parallel
/// lines straddling the seam comes out right.
pub fn pair_distances(lines: &[HoughLine]) -> Result<Vec<LinePairDistance>, HoughError> {
    if lines.len() < 2 {
        return Err(HoughError::InsufficientLines(lines.len()));
    }
    let mut out = Vec::with_capacity(lines.len() * (lines.len() - 1) / 2);
    for j in 0..lines.len() {
        for k in (j + 1)..lines.len() {
            let raw = (lines[j].phi - lines[k].phi).abs();
            let (delta_phi, delta_rho) = if raw <= PI / 2.0 {
                (raw, (lines[j].rho - lines[k].rho).abs())
            } else {
                (PI - raw, (lines[j].rho + lines[k].rho).abs())
            };
            out.push(LinePairDistance {
                j,
                k,
                delta_phi,
                delta_rho,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn pix(points: &[(f64, f64)]) -> Vec<TransitionPixel> {
        points.iter().map(|&(x, y)| TransitionPixel::new(x, y)).collect()
    }

    fn global_max(acc: &HoughAccumulator) -> (f64, f64, u32) {
        let mut best = (0.0, 0.0, 0);
        for pb in 0..acc.phi_bins {
            for rb in 0..acc.rho_bins {
                let v = acc.votes(rb, pb);
                if v > best.2 {
                    best = (acc.rho_value(rb), acc.phi_value(pb), v);
                }
            }
        }
        best
    }

    #[test]
    fn horizontal_line_peaks_at_expected_cell() {
        let pixels = pix(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)]);
        let acc = hough_accumulate(&pixels, &AccumulatorConfig::default()).unwrap();
        let (rho, phi, votes) = global_max(&acc);
        assert_abs_diff_eq!(rho, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(phi, FRAC_PI_2, epsilon = 1e-9);
        assert_eq!(votes, 3);
    }

    #[test]
    fn single_pixel_votes_once_per_phi_column() {
        let pixels = pix(&[(0.7, -0.3)]);
        let acc = hough_accumulate(&pixels, &AccumulatorConfig::default()).unwrap();
        for pb in 0..acc.phi_bins {
            let col: u32 = (0..acc.rho_bins).map(|rb| acc.votes(rb, pb)).sum();
            assert_eq!(col, 1, "phi column {pb}");
        }
    }

    #[test]
    fn empty_pixel_set_is_an_error() {
        assert_eq!(
            hough_accumulate(&[], &AccumulatorConfig::default()).unwrap_err(),
            HoughError::EmptyPixelSet
        );
    }

    /// Total-least-squares fit of the known inliers is the oracle for the
    /// peak cell of a noisy line with clutter.
    #[test]
    fn noisy_line_peak_is_within_one_bin_of_tls_fit() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(11, "hough-test");
        let true_phi: f64 = 1.1;
        let true_rho = 0.8;
        let (s, c) = (true_phi.sin(), true_phi.cos());
        let mut pixels = Vec::new();
        for i in 0..50 {
            let along = -2.0 + 4.0 * (i as f64 / 49.0);
            // Point on the line, parameterized along its direction.
            let x = true_rho * c - along * s + rng.random_range(-0.005..0.005);
            let y = true_rho * s + along * c + rng.random_range(-0.005..0.005);
            pixels.push(TransitionPixel::new(x, y));
        }
        let inliers = pixels.clone();
        for _ in 0..5 {
            pixels.push(TransitionPixel::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ));
        }
        let cfg = AccumulatorConfig::default();
        let acc = hough_accumulate(&pixels, &cfg).unwrap();
        let lines = top_lines(&acc, 1);
        assert_eq!(lines.len(), 1);
        let fit = refine_line(
            &HoughLine {
                rho: true_rho,
                phi: true_phi,
                votes: 0,
            },
            &inliers,
            0.05,
        );
        assert!((lines[0].rho - fit.rho).abs() <= cfg.rho_res);
        assert!((lines[0].phi - fit.phi).abs() <= acc.phi_res);
    }

    #[test]
    fn one_clean_line_collapses_to_one_entry() {
        let pixels: Vec<TransitionPixel> = (0..30)
            .map(|i| TransitionPixel::new(-1.5 + i as f64 * 0.1, 1.0))
            .collect();
        let acc = hough_accumulate(&pixels, &AccumulatorConfig::default()).unwrap();
        let lines = top_lines(&acc, 3);
        assert_eq!(lines.len(), 1);
        assert_abs_diff_eq!(lines[0].rho, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(lines[0].phi, FRAC_PI_2, epsilon = 1e-9);
    }

    #[test]
    fn two_perpendicular_lines_both_recovered() {
        let mut pixels: Vec<TransitionPixel> = (0..25)
            .map(|i| TransitionPixel::new(-1.2 + i as f64 * 0.1, 1.0))
            .collect();
        pixels.extend((0..25).map(|i| TransitionPixel::new(0.5, -1.2 + i as f64 * 0.1)));
        let cfg = AccumulatorConfig::default();
        let acc = hough_accumulate(&pixels, &cfg).unwrap();
        let lines = top_lines(&acc, 2);
        assert_eq!(lines.len(), 2);
        let horiz = lines
            .iter()
            .find(|l| (l.phi - FRAC_PI_2).abs() <= acc.phi_res)
            .expect("horizontal line found");
        assert!((horiz.rho - 1.0).abs() <= cfg.rho_res);
        let vert = lines.iter().find(|l| l.phi <= acc.phi_res).expect("vertical line");
        assert!((vert.rho - 0.5).abs() <= cfg.rho_res);
    }

    #[test]
    fn q1_returns_the_global_maximum() {
        let pixels = pix(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (0.4, -0.7)]);
        let acc = hough_accumulate(&pixels, &AccumulatorConfig::default()).unwrap();
        let lines = top_lines(&acc, 1);
        let best = global_max(&acc);
        assert_eq!(lines.len(), 1);
        assert_abs_diff_eq!(lines[0].rho, best.0);
        assert_abs_diff_eq!(lines[0].phi, best.1);
        assert_eq!(lines[0].votes, best.2);
    }

    #[test]
    fn pair_distance_examples() {
        let l = |rho: f64, phi: f64| HoughLine { rho, phi, votes: 1 };
        let pairs = pair_distances(&[l(1.0, FRAC_PI_2), l(3.0, FRAC_PI_2)]).unwrap();
        assert_abs_diff_eq!(pairs[0].delta_phi, 0.0);
        assert_abs_diff_eq!(pairs[0].delta_rho, 2.0);

        let pairs = pair_distances(&[l(1.0, 0.0), l(1.0, FRAC_PI_2)]).unwrap();
        assert_abs_diff_eq!(pairs[0].delta_phi, FRAC_PI_2);

        let four: Vec<HoughLine> = (0..4).map(|i| l(i as f64, 0.3 * i as f64)).collect();
        assert_eq!(pair_distances(&four).unwrap().len(), 6);

        assert_eq!(
            pair_distances(&[l(1.0, 0.0)]).unwrap_err(),
            HoughError::InsufficientLines(1)
        );
    }

    #[test]
    fn seam_straddling_parallel_pair_measures_true_separation() {
        // Nearly-vertical lines on either side of the phi seam: x = 1 and
        // x = 3 with a tiny tilt. Their separation is 2.
        let a = HoughLine {
            rho: 1.0,
            phi: 0.005,
            votes: 1,
        };
        let b = HoughLine {
            rho: -3.0,
            phi: PI - 0.005,
            votes: 1,
        };
        let pairs = pair_distances(&[a, b]).unwrap();
        assert!(pairs[0].delta_phi < 0.02);
        assert_abs_diff_eq!(pairs[0].delta_rho, 2.0, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn vote_conservation(
            pts in proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..40)
        ) {
            let pixels: Vec<TransitionPixel> =
                pts.iter().map(|&(x, y)| TransitionPixel::new(x, y)).collect();
            let acc = hough_accumulate(&pixels, &AccumulatorConfig::default()).unwrap();
            prop_assert_eq!(acc.total_votes(), (pixels.len() * acc.phi_bins) as u64);
        }

        #[test]
        fn pair_distances_fold_into_range(
            lines in proptest::collection::vec((-4.0..4.0f64, 0.0..3.14f64), 2..8)
        ) {
            let lines: Vec<HoughLine> = lines
                .iter()
                .map(|&(rho, phi)| HoughLine { rho, phi: phi % PI, votes: 1 })
                .collect();
            let pairs = pair_distances(&lines).unwrap();
            prop_assert_eq!(pairs.len(), lines.len() * (lines.len() - 1) / 2);
            for p in pairs {
                prop_assert!(p.delta_phi >= 0.0 && p.delta_phi <= PI / 2.0 + 1e-12);
                prop_assert!(p.delta_rho >= 0.0);
            }
        }
    }
}
