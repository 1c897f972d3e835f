//! The behavior architecture: distributed blackboard, micro-agent pipeline,
//! plugin operators as state machines, rule-based behavior selection,
//! go-to-ball bidding, captain failover, role assignment, and the relational
//! pass commitment.

pub mod blackboard;
pub mod channel;
pub mod fsa;
pub mod operators;
pub mod robot;
pub mod rules;
pub mod team;

pub use blackboard::{BbKey, BbKeyKind, BbMessage, BbValue, Blackboard, Locality};
pub use channel::{Channel, ChannelConfig, Envelope, Message};
pub use fsa::{Guard, OpArc, OpState, OperatorFsa, OperatorRegistry, RunningOperator, Target, Task, WorldView};
pub use operators::{standard_registry, PrimitiveCommand};
pub use robot::{
    BehaviorConfig, DecisionTrace, LocalizationEvent, MicroAgent, OutDest, Outgoing, PassConfig,
    RobotAgent, RobotConfig, SensorBatch, TickOutput,
};
pub use rules::{select_behavior, Predicate, Rule, RuleTable};
pub use team::{
    assign_roles, bid_fitness, bid_winner, elect_captain, BallHalf, Bid, BidWeights, Commitment,
    CommitmentPhase, CommitmentState, PassMsg, Role, TacticTable, TeamError,
};

use crate::RobotId;
use serde::{Deserialize, Serialize};

/// Noteworthy behavior-layer happenings, logged into the match event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum BehaviorEvent {
    OperatorMissing {
        robot: RobotId,
        detail: String,
        time: f64,
    },
    OperatorExhausted {
        robot: RobotId,
        operator: String,
        time: f64,
    },
    TacticFallback {
        robot: RobotId,
        time: f64,
    },
    CaptainChanged {
        robot: RobotId,
        captain: Option<RobotId>,
        time: f64,
    },
    CommitmentEvent {
        robot: RobotId,
        id: u64,
        phase: team::CommitmentPhase,
        time: f64,
    },
    MicroAgentSkipped {
        robot: RobotId,
        stage: robot::MicroAgent,
        time: f64,
    },
}
