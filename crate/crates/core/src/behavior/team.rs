//! Team-level coordination: go-to-ball bidding, captain election, role
//! assignment from a tactic table, and the joint-commitment pass protocol.

use crate::field::Pose;
use crate::geom::{wrap_angle, Point};
use crate::RobotId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Goalkeeper,
    Defender,
    Attacker,
    FullPlayer,
}

/// Go-to-ball bid; lower fitness is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub robot: RobotId,
    pub fitness: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct BidWeights {
    pub w_dist: f64,
    pub w_behind: f64,
    pub w_align: f64,
}

impl Default for BidWeights {
    fn default() -> Self {
        Self {
            w_dist: 1.0,
            w_behind: 2.0,
            w_align: 0.5,
        }
    }
}

/// The go-to-ball heuristic: penalizes distance to the ball, standing
/// between the ball and the opponent goal, and the turn needed to center the
/// ball on the kicker.
pub fn bid_fitness(pose: &Pose, ball: &Point, attack_sign: f64, goal_x: f64, w: &BidWeights) -> f64 {
    let dist = (ball - pose.position()).norm();
    let behind = if attack_sign > 0.0 {
        pose.x > ball.x && pose.x < goal_x
    } else {
        pose.x < ball.x && pose.x > goal_x
    };
    let rel = ball - pose.position();
    let align = wrap_angle(rel.y.atan2(rel.x) - pose.theta).abs();
    w.w_dist * dist + w.w_behind * f64::from(u8::from(behind)) + w.w_align * align
}

/// Winner of a bid round: minimal fitness, ties to the lower id.
pub fn bid_winner(bids: &BTreeMap<RobotId, (u64, f64)>, round: u64) -> Option<RobotId> {
    bids.iter()
        .filter(|(_, (r, _))| *r == round)
        .min_by(|(ia, (_, fa)), (ib, (_, fb))| {
            fa.partial_cmp(fb).unwrap().then(ia.cmp(ib))
        })
        .map(|(&id, _)| id)
}

#[derive(Debug, Error, PartialEq)]
pub enum TeamError {
    #[error("no robot alive")]
    TeamDown,
}

/// First alive robot in the pre-specified priority list becomes captain.
pub fn elect_captain(alive: &BTreeSet<RobotId>, priority: &[RobotId]) -> Result<RobotId, TeamError> {
    priority
        .iter()
        .copied()
        .find(|id| alive.contains(id))
        .or_else(|| alive.iter().next().copied())
        .ok_or(TeamError::TeamDown)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallHalf {
    Own,
    Opponent,
    Unknown,
}

/// Tactic table: role multisets keyed by ball half and alive count.
#[derive(Debug, Clone, PartialEq)]
pub struct TacticTable {
    rows: BTreeMap<(BallHalf, usize), Vec<Role>>,
}

#[derive(Debug, Deserialize)]
struct RawTactics {
    #[serde(default)]
    tactics: Vec<RawTacticRow>,
}

#[derive(Debug, Deserialize)]
struct RawTacticRow {
    ball: BallHalf,
    alive: usize,
    roles: Vec<Role>,
}

impl TacticTable {
    pub fn parse(text: &str) -> Result<Self, String> {
        let raw: RawTactics = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut rows = BTreeMap::new();
        for row in raw.tactics {
            rows.insert((row.ball, row.alive), row.roles);
        }
        Ok(Self { rows })
    }

    pub fn standard() -> Self {
        Self::parse(DEFAULT_TACTICS).expect("default tactic table parses")
    }

    pub fn row(&self, ball: BallHalf, alive: usize) -> Option<&[Role]> {
        self.rows.get(&(ball, alive)).map(Vec::as_slice)
    }
}

pub const DEFAULT_TACTICS: &str = r#"
[[tactics]]
ball = "opponent"
alive = 4
roles = ["goalkeeper", "defender", "attacker", "attacker"]

[[tactics]]
ball = "own"
alive = 4
roles = ["goalkeeper", "defender", "defender", "attacker"]

[[tactics]]
ball = "unknown"
alive = 4
roles = ["goalkeeper", "defender", "attacker", "attacker"]

[[tactics]]
ball = "opponent"
alive = 3
roles = ["goalkeeper", "attacker", "attacker"]

[[tactics]]
ball = "own"
alive = 3
roles = ["goalkeeper", "defender", "attacker"]

[[tactics]]
ball = "unknown"
alive = 3
roles = ["goalkeeper", "defender", "attacker"]

[[tactics]]
ball = "opponent"
alive = 2
roles = ["goalkeeper", "attacker"]

[[tactics]]
ball = "own"
alive = 2
roles = ["goalkeeper", "defender"]

[[tactics]]
ball = "unknown"
alive = 2
roles = ["goalkeeper", "attacker"]

[[tactics]]
ball = "opponent"
alive = 1
roles = ["goalkeeper"]

[[tactics]]
ball = "own"
alive = 1
roles = ["goalkeeper"]

[[tactics]]
ball = "unknown"
alive = 1
roles = ["goalkeeper"]
"#;

#[derive(Debug, Clone, PartialEq)]
pub struct RoleAssignment {
    pub roles: BTreeMap<RobotId, Role>,
    /// Set when the tactic table had no row and the fallback applied.
    pub fallback: bool,
    /// Set when the defender/attacker swap rule fired.
    pub swapped: Option<(RobotId, RobotId)>,
}

/// Captain-side role assignment.
///
/// Picks the tactic row for (ball half, alive count); the goalkeeper goes to
/// the alive robot nearest the own goal, defenders to the next-nearest, and
/// attackers to the robots closest to the ball. A defender whose last bid
/// beats the best attacker's by `swap_margin` swaps roles with it.
#[allow(clippy::too_many_arguments)]
pub fn assign_roles(
    alive: &BTreeSet<RobotId>,
    poses: &BTreeMap<RobotId, (f64, Pose)>,
    ball: Option<&Point>,
    attack_sign: f64,
    field_length: f64,
    table: &TacticTable,
    bids: &BTreeMap<RobotId, (u64, f64)>,
    bid_round: u64,
    swap_margin: f64,
) -> RoleAssignment {
    let half = match ball {
        None => BallHalf::Unknown,
        Some(b) if b.x * attack_sign < 0.0 => BallHalf::Own,
        Some(_) => BallHalf::Opponent,
    };
    let (row, fallback): (Vec<Role>, bool) = match table.row(half, alive.len()) {
        Some(r) => (r.to_vec(), false),
        None => {
            let mut r = vec![Role::Goalkeeper];
            r.extend(std::iter::repeat(Role::FullPlayer).take(alive.len().saturating_sub(1)));
            (r, true)
        }
    };

    let own_goal = Point::new(-attack_sign * field_length / 2.0, 0.0);
    let dist_to = |id: &RobotId, target: &Point| {
        poses
            .get(id)
            .map(|(_, p)| (target - p.position()).norm())
            .unwrap_or(f64::MAX / 2.0)
    };

    let mut remaining: Vec<RobotId> = alive.iter().copied().collect();
    let mut roles: BTreeMap<RobotId, Role> = BTreeMap::new();

    // Goalkeeper first: nearest own goal, ties to the lower id.
    if !remaining.is_empty() {
        remaining.sort_by(|a, b| {
            dist_to(a, &own_goal)
                .partial_cmp(&dist_to(b, &own_goal))
                .unwrap()
                .then(a.cmp(b))
        });
        let gk = remaining.remove(0);
        roles.insert(gk, Role::Goalkeeper);
    }
    let mut slots: Vec<Role> = row.into_iter().filter(|r| *r != Role::Goalkeeper).collect();
    // Defenders stay near the own goal; attackers chase the ball.
    slots.sort(); // Defender < Attacker < FullPlayer per enum order
    let n_def = slots.iter().filter(|r| **r == Role::Defender).count();
    remaining.sort_by(|a, b| {
        dist_to(a, &own_goal)
            .partial_cmp(&dist_to(b, &own_goal))
            .unwrap()
            .then(a.cmp(b))
    });
    let defenders: Vec<RobotId> = remaining.iter().copied().take(n_def).collect();
    let mut rest: Vec<RobotId> = remaining.iter().copied().skip(n_def).collect();
    if let Some(b) = ball {
        rest.sort_by(|x, y| {
            dist_to(x, b)
                .partial_cmp(&dist_to(y, b))
                .unwrap()
                .then(x.cmp(y))
        });
    }
    for id in defenders {
        roles.insert(id, Role::Defender);
    }
    let attacker_slots: Vec<Role> = slots
        .into_iter()
        .filter(|r| *r != Role::Defender)
        .collect();
    for (id, role) in rest.iter().zip(attacker_slots.iter()) {
        roles.insert(*id, *role);
    }
    for id in rest.iter().skip(attacker_slots.len()) {
        roles.insert(*id, Role::FullPlayer);
    }

    // Dynamic exchange: a defender in a clearly better position to get the
    // ball swaps with the worst-positioned attacker.
    let mut swapped = None;
    let last_round_bid = |id: &RobotId| {
        bids.get(id)
            .filter(|(r, _)| *r == bid_round)
            .map(|(_, f)| *f)
    };
    let best_def = roles
        .iter()
        .filter(|(_, r)| **r == Role::Defender)
        .filter_map(|(id, _)| last_round_bid(id).map(|f| (*id, f)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let worst_att = roles
        .iter()
        .filter(|(_, r)| **r == Role::Attacker)
        .filter_map(|(id, _)| last_round_bid(id).map(|f| (*id, f)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)));
    if let (Some((d, fd)), Some((a, fa))) = (best_def, worst_att) {
        if fd + swap_margin < fa {
            roles.insert(d, Role::Attacker);
            roles.insert(a, Role::Defender);
            swapped = Some((d, a));
        }
    }
    RoleAssignment {
        roles,
        fallback,
        swapped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitmentPhase {
    Proposed,
    Active,
    Done,
    Dropped,
}

/// A bilateral pass agreement (kicker, receiver).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Commitment {
    pub id: u64,
    pub kicker: RobotId,
    pub receiver: RobotId,
    pub phase: CommitmentPhase,
    pub deadline: f64,
}

/// One party's view of a commitment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommitmentState {
    pub commitment: Commitment,
    pub is_kicker: bool,
    pub reception_pose: Pose,
    pub kicked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PassMsg {
    Propose {
        id: u64,
        kicker: RobotId,
        receiver: RobotId,
        reception_pose: Pose,
        deadline: f64,
    },
    Accept { id: u64 },
    Reject { id: u64 },
    Kicked { id: u64 },
    Done { id: u64 },
    Drop { id: u64, reason: String },
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fitness_prefers_the_near_aligned_robot() {
        let w = BidWeights::default();
        let ball = Point::new(0.0, 0.0);
        // R1: 1 m away, aligned, not behind; R2: 3 m away, aligned, not behind.
        let r1 = Pose::new(-1.0, 0.0, 0.0);
        let r2 = Pose::new(-3.0, 0.0, 0.0);
        let f1 = bid_fitness(&r1, &ball, 1.0, 6.0, &w);
        let f2 = bid_fitness(&r2, &ball, 1.0, 6.0, &w);
        assert_abs_diff_eq!(f1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f2, 3.0, epsilon = 1e-12);
        assert!(f1 < f2);
    }

    #[test]
    fn behind_indicator_penalizes_wrong_side() {
        let w = BidWeights::default();
        let ball = Point::new(0.0, 0.0);
        // Robot between the ball and the opponent goal (+x).
        let behind = Pose::new(1.0, 0.0, std::f64::consts::PI);
        let fine = Pose::new(-1.0, 0.0, 0.0);
        let fb = bid_fitness(&behind, &ball, 1.0, 6.0, &w);
        let ff = bid_fitness(&fine, &ball, 1.0, 6.0, &w);
        assert_abs_diff_eq!(fb, 1.0 + 2.0, epsilon = 1e-12); // dist 1 + behind 2, aligned
        assert_abs_diff_eq!(ff, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn winner_rules() {
        let mut bids = BTreeMap::new();
        bids.insert(3, (5, 2.0));
        assert_eq!(bid_winner(&bids, 5), Some(3)); // single bidder wins
        bids.insert(1, (5, 2.0));
        assert_eq!(bid_winner(&bids, 5), Some(1)); // tie goes to lower id
        bids.insert(2, (5, 0.5));
        assert_eq!(bid_winner(&bids, 5), Some(2)); // smallest fitness wins
        assert_eq!(bid_winner(&bids, 6), None); // stale rounds do not count
    }

    #[test]
    fn captain_follows_priority_and_failover() {
        let priority = [1, 2, 3, 4];
        let all: BTreeSet<RobotId> = [1, 2, 3, 4].into();
        assert_eq!(elect_captain(&all, &priority), Ok(1));
        let without_1: BTreeSet<RobotId> = [2, 3, 4].into();
        assert_eq!(elect_captain(&without_1, &priority), Ok(2));
        let none: BTreeSet<RobotId> = BTreeSet::new();
        assert_eq!(elect_captain(&none, &priority), Err(TeamError::TeamDown));
    }

    fn poses_for(ids: &[RobotId]) -> BTreeMap<RobotId, (f64, Pose)> {
        // Spread along x; id 1 deepest in our half (attacking +x).
        ids.iter()
            .map(|&id| (id, (0.0, Pose::new(-5.0 + id as f64, 0.2 * id as f64, 0.0))))
            .collect()
    }

    #[test]
    fn four_alive_opponent_half_gives_gk_def_att_att() {
        let alive: BTreeSet<RobotId> = [1, 2, 3, 4].into();
        let table = TacticTable::standard();
        let out = assign_roles(
            &alive,
            &poses_for(&[1, 2, 3, 4]),
            Some(&Point::new(3.0, 0.0)),
            1.0,
            12.0,
            &table,
            &BTreeMap::new(),
            0,
            1.0,
        );
        assert!(!out.fallback);
        let mut counts = BTreeMap::new();
        for r in out.roles.values() {
            *counts.entry(*r).or_insert(0u32) += 1;
        }
        assert_eq!(counts[&Role::Goalkeeper], 1);
        assert_eq!(counts[&Role::Defender], 1);
        assert_eq!(counts[&Role::Attacker], 2);
        assert_eq!(out.roles[&1], Role::Goalkeeper); // nearest to the own goal
    }

    #[test]
    fn one_alive_is_the_goalkeeper() {
        let alive: BTreeSet<RobotId> = [2].into();
        let out = assign_roles(
            &alive,
            &poses_for(&[2]),
            None,
            1.0,
            12.0,
            &TacticTable::standard(),
            &BTreeMap::new(),
            0,
            1.0,
        );
        assert_eq!(out.roles.len(), 1);
        assert_eq!(out.roles[&2], Role::Goalkeeper);
    }

    #[test]
    fn swap_rule_exchanges_defender_and_attacker() {
        let alive: BTreeSet<RobotId> = [1, 2, 3, 4].into();
        let mut bids = BTreeMap::new();
        bids.insert(2, (7, 0.5)); // robot 2 will be the defender, great bid
        bids.insert(3, (7, 3.0));
        bids.insert(4, (7, 2.8));
        let out = assign_roles(
            &alive,
            &poses_for(&[1, 2, 3, 4]),
            Some(&Point::new(3.0, 0.0)),
            1.0,
            12.0,
            &TacticTable::standard(),
            &bids,
            7,
            1.0,
        );
        let (d, a) = out.swapped.expect("swap fires");
        assert_eq!(out.roles[&d], Role::Attacker);
        assert_eq!(out.roles[&a], Role::Defender);
    }

    #[test]
    fn missing_tactic_row_falls_back() {
        let table = TacticTable::parse("").unwrap();
        let alive: BTreeSet<RobotId> = [1, 2].into();
        let out = assign_roles(
            &alive,
            &poses_for(&[1, 2]),
            None,
            1.0,
            12.0,
            &table,
            &BTreeMap::new(),
            0,
            1.0,
        );
        assert!(out.fallback);
        assert_eq!(out.roles[&1], Role::Goalkeeper);
        assert_eq!(out.roles[&2], Role::FullPlayer);
    }
}
