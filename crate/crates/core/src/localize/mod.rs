//! Vision-based self-localization.
//!
//! The pipeline recovers a robot's pose from the transition pixels of one
//! omnidirectional scan:
//!
//! 1. [`hough::hough_accumulate`] — every pixel votes for the lines through it;
//! 2. [`hough::top_lines`] — peak extraction with non-maximum suppression;
//! 3. [`hough::pair_distances`] — Hough-space distances between all line pairs;
//! 4. [`relevance_filter`] — drop lines whose pairwise structure does not match
//!    the known field geometry;
//! 5. [`correlate_with_field`] — search line-to-model assignments for the pose
//!    candidates that best explain the surviving lines;
//! 6. [`disambiguate`] — break the 180-degree field symmetry with a goal-color
//!    sighting, or mark the estimate untrusted.
//!
//! Every stage is pure; any failure makes [`localize`] fall back to the
//! previous estimate with `trusted = false` rather than abort.

pub mod hough;

pub use hough::{
    hough_accumulate, pair_distances, refine_line, top_lines, top_lines_with_floor,
    AccumulatorConfig, HoughAccumulator, HoughError, HoughLine, LinePairDistance, VoteFloor,
};

use crate::field::{normalize_line, FieldModel, Pose, TransitionPixel};
use crate::geom::{wrap_angle, Vec2};
use crate::sim::sensors::GoalObservation;
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// A pose estimate with its match quality and a trust flag.
///
/// `trusted` implies the correlation score reached the configured threshold
/// and the symmetry disambiguation succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: Pose,
    /// Fraction of observed line votes explained by the field model, in [0,1].
    pub score: f64,
    pub trusted: bool,
}

impl PoseEstimate {
    pub fn untrusted(pose: Pose) -> Self {
        Self {
            pose,
            score: 0.0,
            trusted: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizerConfig {
    pub accumulator: AccumulatorConfig,
    pub top_q: usize,
    pub vote_floor: VoteFloor,
    /// Sub-bin refinement of peak lines by total least squares.
    pub refine: bool,
    /// Inlier gate for refinement, in rho bins.
    pub refine_gate_bins: f64,
    /// Relevance-filter tolerances.
    pub pair_phi_tol: f64,
    pub pair_rho_tol: f64,
    /// Line-match tolerances inside the correlation scoring.
    pub match_phi_tol: f64,
    pub match_rho_tol: f64,
    /// Minimum angle between the two lines a pose hypothesis is solved from.
    pub min_pair_angle: f64,
    /// Acceptable error between predicted and observed goal bearing.
    pub goal_bearing_tol: f64,
    /// Scores at or above this may be marked trusted.
    pub trust_threshold: f64,
    /// Candidate poses may lie at most this far outside the field.
    pub field_margin: f64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            accumulator: AccumulatorConfig::default(),
            top_q: 8,
            vote_floor: VoteFloor::default(),
            refine: true,
            refine_gate_bins: 1.5,
            pair_phi_tol: 4.0f64.to_radians(),
            pair_rho_tol: 0.10,
            match_phi_tol: 3.0f64.to_radians(),
            match_rho_tol: 0.06,
            min_pair_angle: 0.35,
            goal_bearing_tol: 0.35,
            trust_threshold: 0.6,
            field_margin: 0.5,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LocalizeError {
    #[error(transparent)]
    Hough(#[from] HoughError),
    #[error("no lines survived the relevance filter")]
    NoRelevantLines,
    #[error("surviving lines are all parallel; pose is unobservable")]
    AllParallel,
    #[error("no pose candidate matched the field model")]
    NoCandidates,
}

/// Keeps exactly the lines participating in at least one pair whose
/// `(delta_phi, delta_rho)` matches a field line relation within tolerance.
/// Order is preserved, so the filter is idempotent.
pub fn relevance_filter(
    lines: &[HoughLine],
    pairs: &[LinePairDistance],
    field: &FieldModel,
    phi_tol: f64,
    rho_tol: f64,
) -> Result<Vec<HoughLine>, LocalizeError> {
    let mut keep = vec![false; lines.len()];
    for p in pairs {
        let relevant = field
            .line_relations()
            .iter()
            .any(|r| r.matches(p.delta_phi, p.delta_rho, phi_tol, rho_tol));
        if relevant {
            keep[p.j] = true;
            keep[p.k] = true;
        }
    }
    let kept: Vec<HoughLine> = lines
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(l, _)| *l)
        .collect();
    if kept.is_empty() {
        return Err(LocalizeError::NoRelevantLines);
    }
    Ok(kept)
}

fn same_line_rho_close(a: &HoughLine, b: &HoughLine, tol: f64) -> bool {
    if (a.phi - b.phi).abs() <= std::f64::consts::FRAC_PI_2 {
        (a.rho - b.rho).abs() < tol
    } else {
        (a.rho + b.rho).abs() < tol
    }
}

/// Line extraction with sub-bin refinement.
///
/// A line seen far away leaves only a handful of pixels whose votes smear
/// over adjacent rho bins at the quantized angle, so peak votes alone
/// under-rank real structure. This pass takes a generous set of candidate
/// cells, refines each against the pixels, re-ranks by actual pixel support,
/// and dedupes cells that refined to the same physical line.
/// Line extraction by sequential peeling.
///
/// Votes of a line seen far away smear over adjacent rho bins at the
/// quantized angle, so its peak cell can tie with accidental pixel
/// crossings. Peeling resolves that: take the strongest accumulator peak,
/// refine it to sub-bin parameters against the pixels, remove its supporting
/// pixels, and repeat on the residual. Crossings between lines disappear as
/// soon as one of the lines is peeled, so real structure comes out first and
/// nearly junk-free.
/// Public entry for the peeling extraction, used by the pipeline and by
/// offline tools.
pub fn extract_lines(scan: &[TransitionPixel], cfg: &LocalizerConfig) -> Vec<HoughLine> {
    let gate = cfg.refine_gate_bins * cfg.accumulator.rho_res;
    let inlier = |line: &HoughLine, p: &TransitionPixel| {
        let (s, c) = line.phi.sin_cos();
        (p.x * c + p.y * s - line.rho).abs() <= gate
    };
    let line_through = |a: &TransitionPixel, b: &TransitionPixel| -> Option<HoughLine> {
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let norm = (dx * dx + dy * dy).sqrt();
        if norm < 0.2 {
            return None; // too close to define a direction
        }
        let (nx, ny) = (-dy / norm, dx / norm);
        let (rho, phi) = crate::field::normalize_line(a.x * nx + a.y * ny, ny.atan2(nx));
        Some(HoughLine { rho, phi, votes: 2 })
    };
    let mut remaining: Vec<TransitionPixel> = scan.to_vec();
    let mut lines: Vec<HoughLine> = Vec::new();

    // Peel coherent structure (three or more supporting pixels). Accidental
    // crossings lose their support as soon as a real line is peeled.
    while remaining.len() >= 3 && lines.len() < 3 * cfg.top_q {
        let mut seeds: Vec<HoughLine> = Vec::new();
        if remaining.len() <= 16 {
            for i in 0..remaining.len() {
                for j in (i + 1)..remaining.len() {
                    if let Some(seed) = line_through(&remaining[i], &remaining[j]) {
                        seeds.push(seed);
                    }
                }
            }
        } else {
            let Ok(acc) = hough_accumulate(&remaining, &cfg.accumulator) else {
                break;
            };
            let mut cells: Vec<(u32, usize, usize)> = Vec::new();
            for pb in 0..acc.phi_bins {
                for rb in 0..acc.rho_bins {
                    let v = acc.votes(rb, pb);
                    if v >= 2 {
                        cells.push((v, pb, rb));
                    }
                }
            }
            cells.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            cells.truncate(512);
            seeds.extend(cells.into_iter().map(|(v, pb, rb)| HoughLine {
                rho: acc.rho_value(rb),
                phi: acc.phi_value(pb),
                votes: v,
            }));
        }
        let mut best: Option<(u32, HoughLine)> = None;
        for seed in seeds {
            let once = refine_line(&seed, &remaining, gate);
            let line = refine_line(&once, &remaining, gate * 0.6);
            let sup = remaining.iter().filter(|p| inlier(&line, p)).count() as u32;
            let better = match &best {
                None => true,
                Some((bs, bl)) => {
                    sup > *bs || (sup == *bs && (line.phi, line.rho) < (bl.phi, bl.rho))
                }
            };
            if better {
                best = Some((sup, line));
            }
        }
        // Two-pixel ties carry no peel signal; leave them for the tail pass.
        let Some((sup, mut line)) = best else {
            break;
        };
        if sup < 3 {
            break;
        }
        remaining.retain(|p| !inlier(&line, p));
        // Support against the full scan, for downstream weighting.
        line.votes = scan.iter().filter(|p| inlier(&line, p)).count() as u32;
        let dup = lines.iter().any(|d| {
            crate::field::line_angle_distance(d.phi, line.phi) < cfg.accumulator.phi_res
                && same_line_rho_close(d, &line, cfg.accumulator.rho_res)
        });
        if !dup {
            lines.push(line);
        }
    }

    // Tail pass: every line through a residual pixel pair becomes a weak
    // candidate; the relevance filter sorts real structure from crossings.
    if remaining.len() >= 2 && remaining.len() <= 16 {
        for i in 0..remaining.len() {
            for j in (i + 1)..remaining.len() {
                if lines.len() >= 3 * cfg.top_q {
                    break;
                }
                let Some(seed) = line_through(&remaining[i], &remaining[j]) else {
                    continue;
                };
                let mut line = refine_line(&seed, scan, gate * 0.6);
                line.votes = scan.iter().filter(|p| inlier(&line, p)).count() as u32;
                let dup = lines.iter().any(|d| {
                    crate::field::line_angle_distance(d.phi, line.phi) < cfg.accumulator.phi_res
                        && same_line_rho_close(d, &line, cfg.accumulator.rho_res)
                });
                if !dup {
                    lines.push(line);
                }
            }
        }
    }
    lines.sort_by(|a, b| {
        b.votes
            .cmp(&a.votes)
            .then(a.phi.partial_cmp(&b.phi).unwrap())
            .then(a.rho.partial_cmp(&b.rho).unwrap())
    });
    lines
}

/// Folds an angle into `[0, pi)` and reports the rho sign flip of the fold.
fn fold_phi(angle: f64) -> (f64, f64) {
    let mut a = angle.rem_euclid(2.0 * PI);
    let mut sign = 1.0;
    if a >= PI {
        a -= PI;
        sign = -sign;
    }
    (a, sign)
}

/// How a field-frame model line appears from a pose, in `(rho, phi)` robot
/// frame with `phi` in `[0, pi)`.
fn render_model_line(rho_m: f64, phi_m: f64, pose: &Pose) -> (f64, f64) {
    let n = Vec2::new(phi_m.cos(), phi_m.sin());
    let raw_rho = rho_m - (pose.x * n.x + pose.y * n.y);
    normalize_line(raw_rho, phi_m - pose.theta)
}

/// Line-space distance between two `[0, pi)` lines, seam-aware.
fn lines_match(a: (f64, f64), b: (f64, f64), phi_tol: f64, rho_tol: f64) -> bool {
    let raw = (a.1 - b.1).abs();
    if raw <= PI / 2.0 {
        raw <= phi_tol && (a.0 - b.0).abs() <= rho_tol
    } else {
        PI - raw <= phi_tol && (a.0 + b.0).abs() <= rho_tol
    }
}

/// Searches line-to-model assignments for pose candidates.
///
/// Each hypothesis assigns two non-parallel observed lines to two model
/// lines; the orientation follows from the angle gap and the position from a
/// 2x2 solve of the rho constraints. Candidates are scored by the fraction
/// of observed line votes matched by the rendered model and come in
/// 180-degree symmetry pairs with exactly equal scores.
pub fn correlate_with_field(
    lines: &[HoughLine],
    field: &FieldModel,
    cfg: &LocalizerConfig,
) -> Result<Vec<PoseEstimate>, LocalizeError> {
    if lines.len() < 2 {
        return Err(LocalizeError::Hough(HoughError::InsufficientLines(
            lines.len(),
        )));
    }
    let observable = lines.iter().any(|a| {
        lines
            .iter()
            .any(|b| crate::field::line_angle_distance(a.phi, b.phi) >= cfg.min_pair_angle)
    });
    if !observable {
        return Err(LocalizeError::AllParallel);
    }

    let models = field.model_lines();
    let total_votes: u64 = lines.iter().map(|l| l.votes as u64).sum();
    let mut candidates: Vec<PoseEstimate> = Vec::new();

    for i in 0..lines.len() {
        for j in (i + 1)..lines.len() {
            let obs_gap = crate::field::line_angle_distance(lines[i].phi, lines[j].phi);
            if obs_gap < cfg.min_pair_angle {
                continue;
            }
            for (a, ma) in models.iter().enumerate() {
                for (b, mb) in models.iter().enumerate() {
                    if a == b {
                        continue;
                    }
                    let model_gap = crate::field::line_angle_distance(ma.phi, mb.phi);
                    if (model_gap - obs_gap).abs() > cfg.match_phi_tol
                        || model_gap < cfg.min_pair_angle
                    {
                        continue;
                    }
                    let theta_base = ma.phi - lines[i].phi;
                    for theta_cand in [theta_base, theta_base + PI] {
                        // Consistency of the second assignment, then average
                        // the two implied orientations.
                        let (phi_b, _) = fold_phi(mb.phi - theta_cand);
                        let dphi_b = {
                            let d = (phi_b - lines[j].phi).abs();
                            d.min(PI - d)
                        };
                        if dphi_b > cfg.match_phi_tol {
                            continue;
                        }
                        let correction = {
                            let d = phi_b - lines[j].phi;
                            let folded = wrap_angle(2.0 * d) / 2.0; // mod-pi residual
                            folded / 2.0
                        };
                        let theta = wrap_angle(theta_cand + correction);

                        let (_, sign_a) = fold_phi(ma.phi - theta);
                        let (_, sign_b) = fold_phi(mb.phi - theta);
                        let na = Vec2::new(ma.phi.cos(), ma.phi.sin());
                        let nb = Vec2::new(mb.phi.cos(), mb.phi.sin());
                        let m = Matrix2::new(na.x, na.y, nb.x, nb.y);
                        let rhs = Vec2::new(
                            ma.rho - sign_a * lines[i].rho,
                            mb.rho - sign_b * lines[j].rho,
                        );
                        let Some(inv) = m.try_inverse() else {
                            continue;
                        };
                        let t = inv * rhs;
                        if !field.contains(&nalgebra::Point2::new(t.x, t.y), cfg.field_margin) {
                            continue;
                        }
                        let pose = Pose::new(t.x, t.y, theta);

                        // Score: votes of observed lines explained by any
                        // rendered model line. Integer sums keep symmetric
                        // candidates exactly tied.
                        let rendered: Vec<(f64, f64)> = models
                            .iter()
                            .map(|ml| render_model_line(ml.rho, ml.phi, &pose))
                            .collect();
                        let mut matched: u64 = 0;
                        for l in lines {
                            if rendered.iter().any(|&r| {
                                lines_match(r, (l.rho, l.phi), cfg.match_phi_tol, cfg.match_rho_tol)
                            }) {
                                matched += l.votes as u64;
                            }
                        }
                        let score = matched as f64 / total_votes as f64;
                        if score <= 0.0 {
                            continue;
                        }
                        let duplicate = candidates.iter_mut().find(|c| {
                            (c.pose.x - pose.x).abs() < 0.02
                                && (c.pose.y - pose.y).abs() < 0.02
                                && crate::geom::angle_dist(c.pose.theta, pose.theta) < 0.02
                        });
                        match duplicate {
                            Some(existing) => {
                                if score > existing.score {
                                    existing.pose = pose;
                                    existing.score = score;
                                }
                            }
                            None => candidates.push(PoseEstimate {
                                pose,
                                score,
                                trusted: false,
                            }),
                        }
                    }
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(LocalizeError::NoCandidates);
    }
    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.pose.x.partial_cmp(&b.pose.x).unwrap())
            .then(a.pose.y.partial_cmp(&b.pose.y).unwrap())
            .then(a.pose.theta.partial_cmp(&b.pose.theta).unwrap())
    });
    Ok(candidates)
}

/// Breaks the field symmetry with a goal sighting.
///
/// Among the top-scoring candidates, picks the one whose predicted bearing to
/// the observed goal color matches; without a usable sighting, falls back to
/// the candidate nearest the previous estimate and marks it untrusted.
pub fn disambiguate(
    candidates: &[PoseEstimate],
    goal_obs: Option<&GoalObservation>,
    prev: &PoseEstimate,
    field: &FieldModel,
    cfg: &LocalizerConfig,
) -> PoseEstimate {
    if candidates.is_empty() {
        return PoseEstimate {
            trusted: false,
            ..*prev
        };
    }
    let best_score = candidates[0].score;
    let top: Vec<&PoseEstimate> = candidates
        .iter()
        .take_while(|c| best_score - c.score <= 1e-9)
        .collect();

    if let Some(obs) = goal_obs {
        let goal_center = field.goal(obs.color).center();
        let mut best: Option<(f64, &PoseEstimate)> = None;
        for c in &top {
            let rel = goal_center - c.pose.position();
            let predicted = wrap_angle(rel.y.atan2(rel.x) - c.pose.theta);
            let err = wrap_angle(predicted - obs.bearing).abs();
            if best.as_ref().map_or(true, |(e, _)| err < *e) {
                best = Some((err, c));
            }
        }
        let (err, chosen) = best.unwrap();
        if err <= cfg.goal_bearing_tol {
            return PoseEstimate {
                pose: chosen.pose,
                score: chosen.score,
                trusted: chosen.score >= cfg.trust_threshold,
            };
        }
        // The sighting contradicts every top candidate: degrade.
    }

    let nearest = top
        .iter()
        .min_by(|a, b| {
            let da = (a.pose.position() - prev.pose.position()).norm()
                + crate::geom::angle_dist(a.pose.theta, prev.pose.theta);
            let db = (b.pose.position() - prev.pose.position()).norm()
                + crate::geom::angle_dist(b.pose.theta, prev.pose.theta);
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    PoseEstimate {
        pose: nearest.pose,
        score: nearest.score,
        trusted: false,
    }
}

/// The full pipeline. Never fails: on any stage error the previous estimate
/// comes back with `trusted = false`.
pub fn localize(
    scan: &[TransitionPixel],
    field: &FieldModel,
    goal_obs: Option<&GoalObservation>,
    prev: &PoseEstimate,
    cfg: &LocalizerConfig,
) -> PoseEstimate {
    match localize_inner(scan, field, goal_obs, prev, cfg) {
        Ok(est) => est,
        Err(_) => PoseEstimate {
            trusted: false,
            ..*prev
        },
    }
}

fn localize_inner(
    scan: &[TransitionPixel],
    field: &FieldModel,
    goal_obs: Option<&GoalObservation>,
    prev: &PoseEstimate,
    cfg: &LocalizerConfig,
) -> Result<PoseEstimate, LocalizeError> {
    let lines = if cfg.refine {
        if scan.is_empty() {
            return Err(LocalizeError::Hough(HoughError::EmptyPixelSet));
        }
        extract_lines(scan, cfg)
    } else {
        let acc = hough_accumulate(scan, &cfg.accumulator)?;
        top_lines_with_floor(&acc, cfg.top_q, &cfg.vote_floor)
    };
    let pairs = pair_distances(&lines)?;
    let mut relevant =
        relevance_filter(&lines, &pairs, field, cfg.pair_phi_tol, cfg.pair_rho_tol)?;
    // The relevance filter prunes accidental structure; the strongest q
    // survivors go into the correlation search.
    relevant.truncate(cfg.top_q);
    let candidates = correlate_with_field(&relevant, field, cfg)?;
    Ok(disambiguate(&candidates, goal_obs, prev, field, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GoalColor;
    use crate::sim::kinematics::RobotState;
    use crate::sim::sensors::{scan_transitions, ScanParams};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn clean_scan(field: &FieldModel, pose: Pose) -> Vec<TransitionPixel> {
        let s = RobotState::at(pose);
        let p = ScanParams {
            noise_sigma: 0.0,
            clutter_fraction: 0.0,
            ..ScanParams::default()
        };
        scan_transitions(&s, field, &p, None, None)
    }

    fn line(rho: f64, phi: f64, votes: u32) -> HoughLine {
        HoughLine { rho, phi, votes }
    }

    #[test]
    fn relevance_keeps_field_width_pair_and_drops_oddball() {
        let field = FieldModel::default_field();
        let lines = vec![
            line(1.0, FRAC_PI_2, 10),  // side line seen at 1 m
            line(-7.0, FRAC_PI_2, 9),  // the other side line, 8 m away
            line(0.5, 0.9, 3),         // 37-ish degrees to everything
        ];
        let pairs = pair_distances(&lines).unwrap();
        let kept = relevance_filter(&lines, &pairs, &field, 0.05, 0.1).unwrap();
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().all(|l| (l.phi - FRAC_PI_2).abs() < 1e-9));
    }

    #[test]
    fn relevance_error_when_nothing_matches() {
        let field = FieldModel::default_field();
        // Two lines 37 degrees apart at a parallel-impossible separation.
        let lines = vec![line(0.3, 0.2, 3), line(2.2, 0.8, 3)];
        let pairs = pair_distances(&lines).unwrap();
        assert_eq!(
            relevance_filter(&lines, &pairs, &field, 0.05, 0.05).unwrap_err(),
            LocalizeError::NoRelevantLines
        );
    }

    /// Brute-force relation matcher as the oracle for the surviving set.
    #[test]
    fn relevance_matches_exhaustive_oracle() {
        use rand::Rng;
        let field = FieldModel::default_field();
        let mut rng = crate::rng::stream_rng(5, "relevance-oracle");
        for _ in 0..50 {
            let mut lines = Vec::new();
            for _ in 0..8 {
                lines.push(line(
                    rng.random_range(-4.0..4.0),
                    rng.random_range(0.0..PI),
                    rng.random_range(3..20),
                ));
            }
            let pairs = pair_distances(&lines).unwrap();
            let (phi_tol, rho_tol) = (0.05, 0.08);
            let got = relevance_filter(&lines, &pairs, &field, phi_tol, rho_tol);

            let mut keep = vec![false; lines.len()];
            for j in 0..lines.len() {
                for k in 0..lines.len() {
                    if j == k {
                        continue;
                    }
                    let raw = (lines[j].phi - lines[k].phi).abs();
                    let (dphi, drho) = if raw <= PI / 2.0 {
                        (raw, (lines[j].rho - lines[k].rho).abs())
                    } else {
                        (PI - raw, (lines[j].rho + lines[k].rho).abs())
                    };
                    for rel in field.line_relations() {
                        if rel.matches(dphi, drho, phi_tol, rho_tol) {
                            keep[j] = true;
                            keep[k] = true;
                        }
                    }
                }
            }
            let oracle: Vec<HoughLine> = lines
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(l, _)| *l)
                .collect();
            match got {
                Ok(kept) => assert_eq!(kept, oracle),
                Err(_) => assert!(oracle.is_empty()),
            }
        }
    }

    #[test]
    fn relevance_filter_is_idempotent() {
        let field = FieldModel::default_field();
        let lines = vec![
            line(1.0, FRAC_PI_2, 10),
            line(-7.0, FRAC_PI_2, 9),
            line(0.5, 0.0, 8),
            line(0.9, 0.9, 2),
        ];
        let pairs = pair_distances(&lines).unwrap();
        let once = relevance_filter(&lines, &pairs, &field, 0.05, 0.1).unwrap();
        let pairs2 = pair_distances(&once).unwrap();
        let twice = relevance_filter(&once, &pairs2, &field, 0.05, 0.1).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn correlate_recovers_truth_and_twin_from_clean_scan() {
        let field = FieldModel::default_field();
        let truth = Pose::new(1.0, -0.5, 30f64.to_radians());
        let scan = clean_scan(&field, truth);
        let cfg = LocalizerConfig::default();
        let acc = hough_accumulate(&scan, &cfg.accumulator).unwrap();
        let mut lines = top_lines_with_floor(&acc, cfg.top_q, &cfg.vote_floor);
        lines = lines
            .iter()
            .map(|l| refine_line(l, &scan, cfg.refine_gate_bins * cfg.accumulator.rho_res))
            .collect();
        let cands = correlate_with_field(&lines, &field, &cfg).unwrap();
        assert!(cands.len() >= 2);
        let close_to = |p: &Pose| {
            cands.iter().any(|c| {
                (c.pose.x - p.x).abs() < 0.02
                    && (c.pose.y - p.y).abs() < 0.02
                    && crate::geom::angle_dist(c.pose.theta, p.theta) < 1f64.to_radians()
            })
        };
        assert!(close_to(&truth), "true pose missing from {cands:?}");
        assert!(close_to(&truth.symmetry_twin()), "twin missing");
    }

    #[test]
    fn correlate_two_perpendicular_lines_scores_one() {
        let field = FieldModel::default_field();
        // Robot at (1, -2, 0): center line 1 m behind, bottom side line 2 m right.
        let lines = vec![line(-1.0, 0.0, 12), line(-2.0, FRAC_PI_2, 12)];
        let cands = correlate_with_field(&lines, &field, &LocalizerConfig::default()).unwrap();
        assert!((cands[0].score - 1.0).abs() < 1e-12);
        assert!(cands.iter().any(|c| {
            (c.pose.x - 1.0).abs() < 0.02
                && (c.pose.y - -2.0).abs() < 0.02
                && crate::geom::angle_dist(c.pose.theta, 0.0) < 0.02
        }));
    }

    #[test]
    fn correlate_rejects_degenerate_inputs() {
        let field = FieldModel::default_field();
        assert!(matches!(
            correlate_with_field(&[], &field, &LocalizerConfig::default()),
            Err(LocalizeError::Hough(HoughError::InsufficientLines(0)))
        ));
        let parallel = vec![line(1.0, FRAC_PI_2, 5), line(2.0, FRAC_PI_2, 5)];
        assert_eq!(
            correlate_with_field(&parallel, &field, &LocalizerConfig::default()).unwrap_err(),
            LocalizeError::AllParallel
        );
    }

    #[test]
    fn candidates_come_in_equal_score_symmetry_pairs() {
        let field = FieldModel::default_field();
        for truth in [
            Pose::new(1.0, -0.5, 0.5),
            Pose::new(-2.2, 1.8, -1.2),
            Pose::new(4.0, 3.0, 2.4),
        ] {
            let scan = clean_scan(&field, truth);
            let cfg = LocalizerConfig::default();
            let lines = extract_lines(&scan, &cfg);
            let cands = correlate_with_field(&lines, &field, &cfg).unwrap();
            for c in &cands {
                let twin = c.pose.symmetry_twin();
                let mate = cands.iter().find(|d| {
                    (d.pose.x - twin.x).abs() < 0.05
                        && (d.pose.y - twin.y).abs() < 0.05
                        && crate::geom::angle_dist(d.pose.theta, twin.theta) < 0.05
                });
                let mate = mate.unwrap_or_else(|| panic!("no twin for {c:?}"));
                assert!((mate.score - c.score).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn disambiguate_uses_goal_color() {
        let field = FieldModel::default_field();
        let truth = Pose::new(1.0, 0.5, 0.0);
        let twin = truth.symmetry_twin();
        let cands = vec![
            PoseEstimate {
                pose: truth,
                score: 0.9,
                trusted: false,
            },
            PoseEstimate {
                pose: twin,
                score: 0.9,
                trusted: false,
            },
        ];
        // Blue goal (at +x) straight ahead of the true pose.
        let rel = field.goal_blue.center() - truth.position();
        let obs = GoalObservation {
            color: GoalColor::Blue,
            bearing: wrap_angle(rel.y.atan2(rel.x) - truth.theta),
        };
        let prev = PoseEstimate::untrusted(Pose::origin());
        let cfg = LocalizerConfig::default();
        let picked = disambiguate(&cands, Some(&obs), &prev, &field, &cfg);
        assert!(picked.trusted);
        assert_abs_diff_eq!(picked.pose.x, truth.x);

        // No sighting: nearest to the previous estimate, untrusted.
        let prev_near_twin = PoseEstimate::untrusted(Pose::new(twin.x + 0.1, twin.y, twin.theta));
        let picked = disambiguate(&cands, None, &prev_near_twin, &field, &cfg);
        assert!(!picked.trusted);
        assert_abs_diff_eq!(picked.pose.x, twin.x);

        // Sighting that contradicts both twins: untrusted fallback.
        let bad = GoalObservation {
            color: GoalColor::Blue,
            bearing: wrap_angle(obs.bearing + 2.0),
        };
        let picked = disambiguate(&cands, Some(&bad), &prev_near_twin, &field, &cfg);
        assert!(!picked.trusted);
    }

    #[test]
    fn empty_scan_returns_prev_untrusted() {
        let field = FieldModel::default_field();
        let prev = PoseEstimate {
            pose: Pose::new(0.3, 0.4, 0.5),
            score: 0.8,
            trusted: true,
        };
        let out = localize(&[], &field, None, &prev, &LocalizerConfig::default());
        assert_eq!(out.pose, prev.pose);
        assert!(!out.trusted);
    }

    #[test]
    fn clean_scan_localizes_accurately() {
        let field = FieldModel::default_field();
        let cfg = LocalizerConfig::default();
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(3, "loc-accuracy");
        let mut hits = 0;
        let n = 25;
        for _ in 0..n {
            let truth = Pose::new(
                rng.random_range(-5.5..5.5),
                rng.random_range(-3.5..3.5),
                rng.random_range(-PI..PI),
            );
            let scan = clean_scan(&field, truth);
            let state = RobotState::at(truth);
            let goal = crate::sim::sensors::observe_goal(
                &state,
                &field,
                &crate::sim::sensors::GoalSensorParams {
                    bearing_sigma: 0.0,
                    ..Default::default()
                },
                None,
            );
            let prev = PoseEstimate::untrusted(Pose::origin());
            let est = localize(&scan, &field, goal.as_ref(), &prev, &cfg);
            let pos_err = (est.pose.position() - truth.position()).norm();
            let ang_err = crate::geom::angle_dist(est.pose.theta, truth.theta);
            if est.trusted && pos_err <= 0.05 && ang_err <= 2f64.to_radians() {
                hits += 1;
            }
        }
        assert!(hits >= n - 1, "only {hits}/{n} poses within tolerance");
    }

    /// Rotating all pixels (and the goal bearing) by delta rotates the output
    /// orientation by -delta, within one accumulator bin.
    #[test]
    fn rotation_covariance() {
        let field = FieldModel::default_field();
        let cfg = LocalizerConfig::default();
        let truth = Pose::new(1.5, -1.0, 0.4);
        let scan = clean_scan(&field, truth);
        let state = RobotState::at(truth);
        let goal = crate::sim::sensors::observe_goal(
            &state,
            &field,
            &crate::sim::sensors::GoalSensorParams {
                bearing_sigma: 0.0,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        let prev = PoseEstimate::untrusted(truth);
        let base = localize(&scan, &field, Some(&goal), &prev, &cfg);

        let delta: f64 = 0.3;
        let rotated: Vec<TransitionPixel> = scan
            .iter()
            .map(|p| {
                TransitionPixel::new(
                    p.x * delta.cos() - p.y * delta.sin(),
                    p.x * delta.sin() + p.y * delta.cos(),
                )
            })
            .collect();
        let rotated_goal = GoalObservation {
            color: goal.color,
            bearing: wrap_angle(goal.bearing + delta),
        };
        let prev_rot = PoseEstimate::untrusted(Pose::new(truth.x, truth.y, truth.theta - delta));
        let est = localize(&rotated, &field, Some(&rotated_goal), &prev_rot, &cfg);
        let expected_theta = wrap_angle(base.pose.theta - delta);
        assert!(
            crate::geom::angle_dist(est.pose.theta, expected_theta) <= cfg.accumulator.phi_res,
            "{} vs {}",
            est.pose.theta,
            expected_theta
        );
    }
}
