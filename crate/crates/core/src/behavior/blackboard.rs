//! The distributed blackboard: a per-robot store of typed, timestamped
//! entries. Local keys stay on the robot; team-shared writes go out over the
//! message channel and converge everywhere by last-writer-wins (timestamp,
//! then lower origin id on ties), so every robot applies remote writes to the
//! same result regardless of arrival order.

use crate::behavior::team::Role;
use crate::fusion::GaussianEstimate;
use crate::localize::PoseEstimate;
use crate::nav::Obstacle;
use crate::RobotId;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BbKey {
    /// Own pose estimate (local).
    PoseEstimate,
    /// Obstacles clustered from the sonar ring, field frame (local).
    SonarObstacles,
    /// Own fused ball estimate (local).
    BallLocal,
    /// Team ball estimate adopted by this robot (local).
    BallTeam,
    /// A teammate's announced pose (team-shared).
    TeamPose(RobotId),
    /// Role assignment map, written by the captain (team-shared).
    Roles,
    /// Operator currently selected by the machine (local).
    SelectedOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BbKeyKind {
    PoseEstimate,
    SonarObstacles,
    BallLocal,
    BallTeam,
    TeamPose,
    Roles,
    SelectedOperator,
}

impl BbKey {
    pub fn kind(&self) -> BbKeyKind {
        match self {
            BbKey::PoseEstimate => BbKeyKind::PoseEstimate,
            BbKey::SonarObstacles => BbKeyKind::SonarObstacles,
            BbKey::BallLocal => BbKeyKind::BallLocal,
            BbKey::BallTeam => BbKeyKind::BallTeam,
            BbKey::TeamPose(_) => BbKeyKind::TeamPose,
            BbKey::Roles => BbKeyKind::Roles,
            BbKey::SelectedOperator => BbKeyKind::SelectedOperator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BbValue {
    Pose(PoseEstimate),
    Ball(GaussianEstimate),
    Obstacles(Vec<Obstacle>),
    Roles(BTreeMap<RobotId, Role>),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locality {
    Local,
    TeamShared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub value: BbValue,
    pub timestamp: f64,
    pub origin: RobotId,
}

/// A team-shared write in flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbMessage {
    pub key: BbKey,
    pub entry: Entry,
}

#[derive(Debug, Error, PartialEq)]
pub enum BbError {
    #[error("blackboard key kind {0:?} is not registered")]
    Unregistered(BbKeyKind),
}

#[derive(Debug, Clone)]
pub struct Blackboard {
    origin: RobotId,
    registry: BTreeMap<BbKeyKind, Locality>,
    entries: BTreeMap<BbKey, Entry>,
    outbox: Vec<BbMessage>,
}

impl Blackboard {
    /// A blackboard with the standard key registry.
    pub fn new(origin: RobotId) -> Self {
        let mut registry = BTreeMap::new();
        registry.insert(BbKeyKind::PoseEstimate, Locality::Local);
        registry.insert(BbKeyKind::SonarObstacles, Locality::Local);
        registry.insert(BbKeyKind::BallLocal, Locality::Local);
        registry.insert(BbKeyKind::BallTeam, Locality::Local);
        registry.insert(BbKeyKind::TeamPose, Locality::TeamShared);
        registry.insert(BbKeyKind::Roles, Locality::TeamShared);
        registry.insert(BbKeyKind::SelectedOperator, Locality::Local);
        Self {
            origin,
            registry,
            entries: BTreeMap::new(),
            outbox: Vec::new(),
        }
    }

    /// An empty registry, for tests exercising registration errors.
    pub fn unregistered(origin: RobotId) -> Self {
        Self {
            origin,
            registry: BTreeMap::new(),
            entries: BTreeMap::new(),
            outbox: Vec::new(),
        }
    }

    pub fn register(&mut self, kind: BbKeyKind, locality: Locality) {
        self.registry.insert(kind, locality);
    }

    fn beats(incoming: &Entry, current: &Entry) -> bool {
        incoming.timestamp > current.timestamp
            || (incoming.timestamp == current.timestamp && incoming.origin < current.origin)
    }

    fn apply(&mut self, key: BbKey, entry: Entry) {
        match self.entries.get(&key) {
            Some(cur) if !Self::beats(&entry, cur) => {}
            _ => {
                self.entries.insert(key, entry);
            }
        }
    }

    /// Writes an entry. Team-shared keys are queued for broadcast; the local
    /// copy is applied immediately (atomically per entry).
    pub fn write(&mut self, key: BbKey, value: BbValue, now: f64) -> Result<(), BbError> {
        let locality = *self
            .registry
            .get(&key.kind())
            .ok_or(BbError::Unregistered(key.kind()))?;
        let entry = Entry {
            value,
            timestamp: now,
            origin: self.origin,
        };
        if locality == Locality::TeamShared {
            self.outbox.push(BbMessage {
                key,
                entry: entry.clone(),
            });
        }
        self.apply(key, entry);
        Ok(())
    }

    pub fn read(&self, key: &BbKey) -> Option<&Entry> {
        self.entries.get(key)
    }

    /// Applies a remote team-shared write under the convergence rule.
    pub fn apply_remote(&mut self, msg: BbMessage) {
        self.apply(msg.key, msg.entry);
    }

    pub fn take_outbox(&mut self) -> Vec<BbMessage> {
        std::mem::take(&mut self.outbox)
    }

    /// Stable content hash of all entries (used by determinism audits).
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (key, entry) in &self.entries {
            hasher.update(serde_json::to_vec(key).expect("key serializes"));
            hasher.update(serde_json::to_vec(entry).expect("entry serializes"));
        }
        hex_prefix(&hasher.finalize())
    }
}

pub(crate) fn hex_prefix(bytes: &[u8]) -> String {
    bytes[..16].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Pose;

    fn pose_value(x: f64) -> BbValue {
        BbValue::Pose(PoseEstimate {
            pose: Pose::new(x, 0.0, 0.0),
            score: 1.0,
            trusted: true,
        })
    }

    #[test]
    fn write_then_read_same_tick() {
        let mut bb = Blackboard::new(1);
        bb.write(BbKey::PoseEstimate, pose_value(1.0), 0.5).unwrap();
        let entry = bb.read(&BbKey::PoseEstimate).unwrap();
        assert_eq!(entry.timestamp, 0.5);
        assert_eq!(entry.origin, 1);
    }

    #[test]
    fn unregistered_key_is_a_configuration_error() {
        let mut bb = Blackboard::unregistered(1);
        assert_eq!(
            bb.write(BbKey::PoseEstimate, pose_value(0.0), 0.0),
            Err(BbError::Unregistered(BbKeyKind::PoseEstimate))
        );
    }

    #[test]
    fn team_shared_writes_queue_for_broadcast() {
        let mut bb = Blackboard::new(2);
        bb.write(BbKey::TeamPose(2), pose_value(1.0), 0.0).unwrap();
        bb.write(BbKey::BallLocal, ball_value(1.0, 0.0), 0.0).unwrap();
        let out = bb.take_outbox();
        assert_eq!(out.len(), 1); // only the shared key broadcasts
        assert_eq!(out[0].key, BbKey::TeamPose(2));
        assert!(bb.take_outbox().is_empty());
    }

    fn ball_value(x: f64, t: f64) -> BbValue {
        BbValue::Ball(GaussianEstimate {
            mean: nalgebra::Vector2::new(x, 0.0),
            cov: nalgebra::Matrix2::identity(),
            timestamp: t,
            source: crate::fusion::EstimateSource::Robot(1),
        })
    }

    #[test]
    fn last_writer_wins_with_lower_id_tiebreak() {
        // Same-tick writes from two origins converge identically regardless
        // of arrival order.
        let m_from_1 = BbMessage {
            key: BbKey::Roles,
            entry: Entry {
                value: BbValue::Text("from-1".into()),
                timestamp: 1.0,
                origin: 1,
            },
        };
        let m_from_2 = BbMessage {
            key: BbKey::Roles,
            entry: Entry {
                value: BbValue::Text("from-2".into()),
                timestamp: 1.0,
                origin: 2,
            },
        };
        let mut bb_a = Blackboard::new(3);
        bb_a.apply_remote(m_from_1.clone());
        bb_a.apply_remote(m_from_2.clone());
        let mut bb_b = Blackboard::new(4);
        bb_b.apply_remote(m_from_2);
        bb_b.apply_remote(m_from_1);
        let va = bb_a.read(&BbKey::Roles).unwrap();
        let vb = bb_b.read(&BbKey::Roles).unwrap();
        assert_eq!(va, vb);
        assert_eq!(va.origin, 1); // tie resolves to the lower origin id

        // A later timestamp beats the tie rule.
        let newer = BbMessage {
            key: BbKey::Roles,
            entry: Entry {
                value: BbValue::Text("newer".into()),
                timestamp: 2.0,
                origin: 9,
            },
        };
        bb_a.apply_remote(newer);
        assert_eq!(bb_a.read(&BbKey::Roles).unwrap().origin, 9);
    }

    #[test]
    fn content_hash_tracks_state() {
        let mut a = Blackboard::new(1);
        let mut b = Blackboard::new(1);
        assert_eq!(a.content_hash(), b.content_hash());
        a.write(BbKey::PoseEstimate, pose_value(1.0), 0.1).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        b.write(BbKey::PoseEstimate, pose_value(1.0), 0.1).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
    }
}
