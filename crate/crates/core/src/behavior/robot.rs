//! One robot's software stack: the four micro-agents run in a fixed order
//! every control tick — Vision (simulated sensing and self-localization),
//! Fusion (ball estimates), Machine (behavior decision), Control (operator
//! execution). Each stage reads the blackboard state left by the previous
//! stages and publishes its own; team-shared writes go out at tick end.

use crate::behavior::blackboard::{BbKey, BbValue, Blackboard};
use crate::behavior::channel::{Envelope, Message};
use crate::behavior::fsa::{OperatorRegistry, RunningOperator, WorldView};
use crate::behavior::operators::{execute_task, standard_registry, PrimitiveCommand};
use crate::behavior::rules::{pass_preferred, reception_pose, select_behavior, RuleTable};
use crate::behavior::team::{
    assign_roles, bid_fitness, bid_winner, elect_captain, BidWeights, Commitment, CommitmentPhase,
    CommitmentState, PassMsg, Role, TacticTable,
};
use crate::behavior::BehaviorEvent;
use crate::field::{FieldModel, Pose, TransitionPixel};
use crate::fusion::{self, FusionConfig, GaussianEstimate, TeamBall};
use crate::geom::Point;
use crate::localize::{localize, LocalizerConfig, PoseEstimate};
use crate::nav::{ControlParams, DribbleParams, Guide, Obstacle, PotentialParams};
use crate::sim::sensors::{BallObservation, GoalObservation, SonarScan};
use crate::sim::{DriveCommand, Team};
use crate::RobotId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PassConfig {
    /// Proposal reply deadline, seconds.
    pub negotiation_timeout: f64,
    /// Overall commitment deadline, seconds.
    pub commitment_timeout: f64,
    pub kick_force: f64,
}

impl Default for PassConfig {
    fn default() -> Self {
        Self {
            negotiation_timeout: 0.5,
            commitment_timeout: 6.0,
            kick_force: 2.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorConfig {
    /// Decision rounds happen every this many control ticks.
    pub decision_every_ticks: u64,
    /// A robot counts as alive if a heartbeat arrived within this many rounds.
    pub liveness_rounds: u64,
    /// Captain priority list; doubles as the team roster.
    pub captain_priority: Vec<RobotId>,
    pub bid_weights: BidWeights,
    /// Defender/attacker exchange margin on bid fitness.
    pub swap_margin: f64,
    pub pass: PassConfig,
    /// Rule table override (TOML text); the built-in table otherwise.
    pub rules_toml: Option<String>,
    pub tactics_toml: Option<String>,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            decision_every_ticks: 10,
            liveness_rounds: 1,
            captain_priority: vec![1, 2, 3, 4],
            bid_weights: BidWeights::default(),
            swap_margin: 1.0,
            pass: PassConfig::default(),
            rules_toml: None,
            tactics_toml: None,
        }
    }
}

/// Full per-robot parameter bundle.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotConfig {
    pub localizer: LocalizerConfig,
    pub fusion: FusionConfig,
    pub potential: PotentialParams,
    pub dribble: DribbleParams,
    pub control: ControlParams,
    pub behavior: BehaviorConfig,
}

/// Sensor data delivered to one robot for one tick. Fields on slower
/// cadences are `None` between samples.
#[derive(Debug, Clone, Default)]
pub struct SensorBatch {
    pub odom_delta: Pose,
    pub v: f64,
    pub has_ball: bool,
    pub sonar: Option<SonarScan>,
    /// Max sonar range, used to drop at-limit returns while clustering.
    pub sonar_r_max: f64,
    pub front: Option<BallObservation>,
    pub omni: Option<BallObservation>,
    pub goal: Option<GoalObservation>,
    pub scan: Option<Vec<TransitionPixel>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MicroAgent {
    Vision,
    Fusion,
    Machine,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutDest {
    Broadcast,
    To(RobotId),
}

#[derive(Debug, Clone)]
pub struct Outgoing {
    pub dest: OutDest,
    pub msg: Message,
}

/// Behavior-trace record for the match log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub round: u64,
    pub robot: RobotId,
    pub role: Role,
    pub operator: String,
    pub fsa_state: String,
    pub captain: Option<RobotId>,
    pub bid: Option<f64>,
    pub bid_winner: Option<RobotId>,
    pub commitment: Option<(u64, CommitmentPhase)>,
}

/// Localization record sufficient to replay the localizer offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationEvent {
    pub robot: RobotId,
    pub time: f64,
    pub pixels: Vec<TransitionPixel>,
    pub goal: Option<GoalObservation>,
    pub prev: PoseEstimate,
    pub output: PoseEstimate,
}

pub struct TickOutput {
    pub command: DriveCommand,
    pub outgoing: Vec<Outgoing>,
    pub localization: Option<LocalizationEvent>,
    pub decision: Option<DecisionTrace>,
}

#[derive(Debug, Default)]
struct Machine {
    roles: BTreeMap<RobotId, Role>,
    captain: Option<RobotId>,
    heartbeats: BTreeMap<RobotId, u64>,
    bids: BTreeMap<RobotId, (u64, f64)>,
    bid_winner: Option<RobotId>,
    commitment: Option<CommitmentState>,
    commitment_changed: bool,
    current: Option<RunningOperator>,
    pass_inbox: Vec<(RobotId, PassMsg)>,
    last_bid: Option<f64>,
    round: u64,
}

/// One robot's complete onboard stack.
pub struct RobotAgent {
    pub id: RobotId,
    pub team: Team,
    pub cfg: RobotConfig,
    field: Arc<FieldModel>,
    rules: RuleTable,
    tactics: TacticTable,
    registry: OperatorRegistry,
    pub bb: Blackboard,
    guide: Guide,
    pub prev_estimate: PoseEstimate,
    own_ball: Option<GaussianEstimate>,
    mate_estimates: BTreeMap<RobotId, GaussianEstimate>,
    last_team_ball: Option<GaussianEstimate>,
    machine: Machine,
    commit_seq: u64,
    /// (tick, stage) pairs to skip, for degradation tests.
    pub skip_stages: BTreeSet<(u64, MicroAgent)>,
    pub events: Vec<BehaviorEvent>,
}

impl RobotAgent {
    pub fn new(
        id: RobotId,
        team: Team,
        start: Pose,
        field: Arc<FieldModel>,
        cfg: RobotConfig,
    ) -> Self {
        let rules = match &cfg.behavior.rules_toml {
            Some(text) => RuleTable::standard()
                .with_overrides(RuleTable::parse(text).expect("rule override parses")),
            None => RuleTable::standard(),
        };
        let tactics = match &cfg.behavior.tactics_toml {
            Some(text) => TacticTable::parse(text).expect("tactic override parses"),
            None => TacticTable::standard(),
        };
        let registry = standard_registry(cfg.behavior.pass.kick_force);
        // Deterministic initial roles so the team is well-formed from tick 0.
        let alive: BTreeSet<RobotId> = cfg.behavior.captain_priority.iter().copied().collect();
        let initial_roles = assign_roles(
            &alive,
            &BTreeMap::new(),
            None,
            team.attack_sign(),
            field.length,
            &tactics,
            &BTreeMap::new(),
            0,
            cfg.behavior.swap_margin,
        )
        .roles;
        let mut machine = Machine::default();
        machine.roles = initial_roles;
        for &r in &cfg.behavior.captain_priority {
            machine.heartbeats.insert(r, 0);
        }
        Self {
            id,
            team,
            cfg,
            field,
            rules,
            tactics,
            registry,
            bb: Blackboard::new(id),
            guide: Guide::new(),
            prev_estimate: PoseEstimate {
                pose: start,
                score: 0.0,
                trusted: true, // kickoff placement is known
            },
            own_ball: None,
            mate_estimates: BTreeMap::new(),
            last_team_ball: None,
            machine: Machine {
                round: 0,
                ..machine
            },
            commit_seq: 0,
            skip_stages: BTreeSet::new(),
            events: Vec::new(),
        }
    }

    /// Installs an extra operator plugin (configuration-time extension).
    pub fn install_operator(&mut self, fsa: crate::behavior::fsa::OperatorFsa) {
        self.registry.install(fsa).expect("operator validates");
    }

    pub fn role(&self) -> Role {
        self.machine
            .roles
            .get(&self.id)
            .copied()
            .unwrap_or(Role::FullPlayer)
    }

    pub fn captain(&self) -> Option<RobotId> {
        self.machine.captain
    }

    pub fn current_operator(&self) -> Option<&str> {
        self.machine.current.as_deref_name()
    }

    pub fn commitment(&self) -> Option<&CommitmentState> {
        self.machine.commitment.as_ref()
    }

    pub fn believed_pose(&self) -> Option<Pose> {
        self.guide.pose()
    }

    pub fn bb_hash(&self) -> String {
        self.bb.content_hash()
    }

    fn roster(&self) -> &[RobotId] {
        &self.cfg.behavior.captain_priority
    }

    fn skipped(&mut self, tick: u64, stage: MicroAgent, now: f64) -> bool {
        if self.skip_stages.contains(&(tick, stage)) {
            self.events.push(BehaviorEvent::MicroAgentSkipped {
                robot: self.id,
                stage,
                time: now,
            });
            true
        } else {
            false
        }
    }

    /// Runs one control tick. `inbox` holds the channel deliveries due this
    /// tick; the returned messages are handed back to the channel.
    pub fn tick(
        &mut self,
        now: f64,
        tick: u64,
        sensors: &SensorBatch,
        inbox: Vec<Envelope>,
    ) -> TickOutput {
        let mut outgoing: Vec<Outgoing> = Vec::new();
        self.dispatch_inbox(inbox);

        // --- Vision ---------------------------------------------------
        let mut localization = None;
        if !self.skipped(tick, MicroAgent::Vision, now) {
            localization = self.vision(now, sensors, &mut outgoing);
        } else {
            self.guide.observe(None, &sensors.odom_delta);
        }

        // --- Fusion ---------------------------------------------------
        if !self.skipped(tick, MicroAgent::Fusion, now) {
            self.fusion(now, sensors, &mut outgoing);
        }

        // --- Machine --------------------------------------------------
        let mut decision = None;
        if !self.skipped(tick, MicroAgent::Machine, now) {
            decision = self.machine_stage(now, tick, sensors, &mut outgoing);
        }

        // --- Control --------------------------------------------------
        let command = if self.skipped(tick, MicroAgent::Control, now) {
            DriveCommand::default()
        } else {
            self.control_stage(now, sensors, &mut outgoing)
        };

        for msg in self.bb.take_outbox() {
            outgoing.push(Outgoing {
                dest: OutDest::Broadcast,
                msg: Message::Bb(msg),
            });
        }
        TickOutput {
            command,
            outgoing,
            localization,
            decision,
        }
    }

    fn dispatch_inbox(&mut self, inbox: Vec<Envelope>) {
        for env in inbox {
            match env.msg {
                Message::Bb(m) => self.bb.apply_remote(m),
                Message::Heartbeat { round } => {
                    let slot = self.machine.heartbeats.entry(env.from).or_insert(0);
                    *slot = (*slot).max(round);
                }
                Message::Bid { round, fitness } => {
                    let newer = self
                        .machine
                        .bids
                        .get(&env.from)
                        .map_or(true, |(r, _)| *r <= round);
                    if newer {
                        self.machine.bids.insert(env.from, (round, fitness));
                    }
                }
                Message::Estimate(e) => {
                    let newer = self
                        .mate_estimates
                        .get(&env.from)
                        .map_or(true, |old| old.timestamp <= e.timestamp);
                    if newer {
                        self.mate_estimates.insert(env.from, e);
                    }
                }
                Message::Pass(m) => self.machine.pass_inbox.push((env.from, m)),
                Message::Roles(map) => {
                    self.machine.roles = map;
                }
            }
        }
    }

    fn vision(
        &mut self,
        now: f64,
        sensors: &SensorBatch,
        _outgoing: &mut [Outgoing],
    ) -> Option<LocalizationEvent> {
        let mut event = None;
        let fresh = if let Some(scan) = &sensors.scan {
            let prev = self.prev_estimate;
            let est = localize(
                scan,
                &self.field,
                sensors.goal.as_ref(),
                &prev,
                &self.cfg.localizer,
            );
            self.prev_estimate = est;
            let _ = self
                .bb
                .write(BbKey::PoseEstimate, BbValue::Pose(est), now);
            let _ = self
                .bb
                .write(BbKey::TeamPose(self.id), BbValue::Pose(est), now);
            event = Some(LocalizationEvent {
                robot: self.id,
                time: now,
                pixels: scan.clone(),
                goal: sensors.goal,
                prev,
                output: est,
            });
            Some(est)
        } else {
            None
        };
        self.guide.observe(fresh.as_ref(), &sensors.odom_delta);

        if let Some(scan) = &sensors.sonar {
            let obstacles = self.cluster_sonar(scan, sensors.sonar_r_max);
            let _ = self
                .bb
                .write(BbKey::SonarObstacles, BbValue::Obstacles(obstacles), now);
        }
        event
    }

    /// Sonar hits become disc obstacles in the field frame, merged with the
    /// announced teammate poses from the blackboard.
    fn cluster_sonar(&self, scan: &SonarScan, r_max: f64) -> Vec<Obstacle> {
        let Some(pose) = self.guide.pose() else {
            return Vec::new();
        };
        let mut points: Vec<Point> = Vec::new();

        for (k, &range) in scan.ranges.iter().enumerate() {
            if range >= r_max - 0.15 {
                continue;
            }
            let angle = pose.theta + k as f64 * std::f64::consts::TAU / scan.ranges.len() as f64;
            let p = Point::new(pose.x + range * angle.cos(), pose.y + range * angle.sin());
            // Skip wall returns: points at the field boundary are not robots.
            if p.x.abs() > self.field.length / 2.0 - 0.3
                || p.y.abs() > self.field.width / 2.0 - 0.3
            {
                continue;
            }
            points.push(p);
        }
        let mut obstacles: Vec<Obstacle> = Vec::new();
        for p in points {
            match obstacles
                .iter_mut()
                .find(|o| (o.center - p).norm() < 0.5)
            {
                Some(o) => o.center = Point::from((o.center.coords + p.coords) / 2.0),
                None => obstacles.push(Obstacle {
                    center: p,
                    radius: 0.3,
                }),
            }
        }
        for &mate in self.roster() {
            if mate == self.id {
                continue;
            }
            if let Some(entry) = self.bb.read(&BbKey::TeamPose(mate)) {
                if let BbValue::Pose(est) = &entry.value {
                    let p = est.pose.position();
                    if !obstacles.iter().any(|o| (o.center - p).norm() < 0.4) {
                        obstacles.push(Obstacle {
                            center: p,
                            radius: 0.3,
                        });
                    }
                }
            }
        }
        obstacles
    }

    fn current_pose_estimate(&self) -> PoseEstimate {
        match self.guide.pose() {
            Some(pose) => PoseEstimate {
                pose,
                score: self.prev_estimate.score,
                trusted: self.prev_estimate.trusted,
            },
            None => self.prev_estimate,
        }
    }

    fn fusion(&mut self, now: f64, sensors: &SensorBatch, outgoing: &mut Vec<Outgoing>) {
        let pose_est = self.current_pose_estimate();
        let fcfg = self.cfg.fusion;
        if sensors.has_ball {
            // Holding the ball pins its position at the front of the robot.
            let attach = pose_est.pose.position() + pose_est.pose.heading() * 0.35;
            let own = GaussianEstimate {
                mean: nalgebra::Vector2::new(attach.x, attach.y),
                cov: nalgebra::Matrix2::identity() * 0.01,
                timestamp: now,
                source: crate::fusion::EstimateSource::Robot(self.id),
            };
            self.own_ball = Some(own);
            let _ = self.bb.write(BbKey::BallLocal, BbValue::Ball(own), now);
            outgoing.push(Outgoing {
                dest: OutDest::Broadcast,
                msg: Message::Estimate(own),
            });
        } else if sensors.front.is_some() || sensors.omni.is_some() {
            let front = sensors
                .front
                .as_ref()
                .map(|o| fusion::observation_to_estimate(o, &pose_est, &fcfg));
            let omni = sensors
                .omni
                .as_ref()
                .map(|o| fusion::observation_to_estimate(o, &pose_est, &fcfg));
            let own = match (front, omni) {
                (Some(f), Some(o)) if fcfg.local_enabled => {
                    Some(fusion::fuse_pair(&f, &o, &fcfg).estimate)
                }
                (Some(f), _) => Some(f),
                (None, o) => o,
            };
            if let Some(own) = own {
                let own = GaussianEstimate {
                    source: crate::fusion::EstimateSource::Robot(self.id),
                    ..own
                };
                self.own_ball = Some(own);
                let _ = self.bb.write(BbKey::BallLocal, BbValue::Ball(own), now);
                outgoing.push(Outgoing {
                    dest: OutDest::Broadcast,
                    msg: Message::Estimate(own),
                });
            }
        }

        // Team fusion over the roster in id order.
        let mut locals: BTreeMap<RobotId, Option<GaussianEstimate>> = BTreeMap::new();
        for &id in self.roster() {
            if id == self.id {
                locals.insert(id, self.own_ball);
            } else {
                locals.insert(id, self.mate_estimates.get(&id).copied());
            }
        }
        match fusion::team_ball(&locals, self.last_team_ball.as_ref(), now, &fcfg) {
            TeamBall::PerRobot { estimates, team } => {
                self.last_team_ball = Some(team);
                if let Some(mine) = estimates.get(&self.id) {
                    let _ = self.bb.write(BbKey::BallTeam, BbValue::Ball(*mine), now);
                }
            }
            TeamBall::Coasted(est) => {
                let _ = self.bb.write(BbKey::BallTeam, BbValue::Ball(est), now);
            }
            TeamBall::Unknown => {}
        }
    }

    /// The robot's working ball estimate: team-fused if present and not too
    /// stale, otherwise nothing.
    fn working_ball(&self, now: f64) -> Option<GaussianEstimate> {
        let entry = self.bb.read(&BbKey::BallTeam)?;
        if let BbValue::Ball(b) = &entry.value {
            // A coasted estimate stays usable for a few seconds.
            if now - b.timestamp <= 4.0 {
                return Some(*b);
            }
        }
        None
    }

    fn team_poses(&self) -> BTreeMap<RobotId, (f64, Pose)> {
        let mut map = BTreeMap::new();
        for &id in self.roster() {
            if id == self.id {
                if let Some(pose) = self.guide.pose() {
                    map.insert(id, (f64::MAX, pose));
                }
                continue;
            }
            if let Some(entry) = self.bb.read(&BbKey::TeamPose(id)) {
                if let BbValue::Pose(est) = &entry.value {
                    map.insert(id, (entry.timestamp, est.pose));
                }
            }
        }
        map
    }

    fn snapshot(&self, now: f64, sensors: &SensorBatch) -> Snapshot {
        Snapshot {
            now,
            id: self.id,
            team: self.team,
            field: Arc::clone(&self.field),
            pose: self.guide.pose(),
            v: sensors.v,
            has_ball: sensors.has_ball,
            ball: self.working_ball(now),
            sees_ball: self
                .own_ball
                .is_some_and(|b| b.is_fresh(now, self.cfg.fusion.staleness)),
            obstacles: self.read_obstacles(),
            role: self.role(),
            roles: self.machine.roles.clone(),
            team_poses: self.team_poses(),
            bid_winner: self.machine.bid_winner,
            commitment: self.machine.commitment,
        }
    }

    fn read_obstacles(&self) -> Vec<Obstacle> {
        match self.bb.read(&BbKey::SonarObstacles) {
            Some(entry) => match &entry.value {
                BbValue::Obstacles(o) => o.clone(),
                _ => Vec::new(),
            },
            None => Vec::new(),
        }
    }

    fn machine_stage(
        &mut self,
        now: f64,
        tick: u64,
        sensors: &SensorBatch,
        outgoing: &mut Vec<Outgoing>,
    ) -> Option<DecisionTrace> {
        self.process_pass_messages(now, sensors, outgoing);

        let every = self.cfg.behavior.decision_every_ticks.max(1);
        let decision_round = tick % every == 0;
        let mut trace = None;
        if decision_round {
            let round = tick / every;
            self.machine.round = round;
            outgoing.push(Outgoing {
                dest: OutDest::Broadcast,
                msg: Message::Heartbeat { round },
            });
            self.machine.heartbeats.insert(self.id, round);

            // Liveness and captain.
            let alive: BTreeSet<RobotId> = self
                .roster()
                .iter()
                .copied()
                .filter(|id| {
                    *id == self.id
                        || self
                            .machine
                            .heartbeats
                            .get(id)
                            .is_some_and(|&r| r + self.cfg.behavior.liveness_rounds >= round)
                })
                .collect();
            let captain = elect_captain(&alive, &self.cfg.behavior.captain_priority).ok();
            if captain != self.machine.captain {
                self.events.push(BehaviorEvent::CaptainChanged {
                    robot: self.id,
                    captain,
                    time: now,
                });
            }
            self.machine.captain = captain;

            // Organizational level runs on the captain only.
            if captain == Some(self.id) {
                let ball_pt = self.working_ball(now).map(|b| Point::new(b.mean.x, b.mean.y));
                let assignment = assign_roles(
                    &alive,
                    &self.team_poses(),
                    ball_pt.as_ref(),
                    self.team.attack_sign(),
                    self.field.length,
                    &self.tactics,
                    &self.machine.bids,
                    round.saturating_sub(1),
                    self.cfg.behavior.swap_margin,
                );
                if assignment.fallback {
                    self.events.push(BehaviorEvent::TacticFallback {
                        robot: self.id,
                        time: now,
                    });
                }
                self.machine.roles = assignment.roles.clone();
                let _ = self
                    .bb
                    .write(BbKey::Roles, BbValue::Roles(assignment.roles), now);
            } else if let Some(entry) = self.bb.read(&BbKey::Roles) {
                if let BbValue::Roles(map) = &entry.value {
                    self.machine.roles = map.clone();
                }
            }

            // Bidding: robots that see the ball and are not the goalkeeper.
            self.machine.last_bid = None;
            let sees = self
                .own_ball
                .is_some_and(|b| b.is_fresh(now, self.cfg.fusion.staleness));
            if sees && self.role() != Role::Goalkeeper && !sensors.has_ball {
                if let (Some(pose), Some(ball)) = (self.guide.pose(), self.own_ball) {
                    let fitness = bid_fitness(
                        &pose,
                        &Point::new(ball.mean.x, ball.mean.y),
                        self.team.attack_sign(),
                        self.team.attack_sign() * self.field.length / 2.0,
                        &self.cfg.behavior.bid_weights,
                    );
                    self.machine.last_bid = Some(fitness);
                    self.machine.bids.insert(self.id, (round, fitness));
                    outgoing.push(Outgoing {
                        dest: OutDest::Broadcast,
                        msg: Message::Bid { round, fitness },
                    });
                }
            }
            // Winner comes from the completed previous round, which every
            // robot has seen in full by now.
            self.machine.bid_winner = bid_winner(&self.machine.bids, round.saturating_sub(1));

            self.select(now, sensors, outgoing);
            trace = Some(self.trace());
        } else if self.machine.commitment_changed {
            // A commitment ended mid-round: reselect immediately so the peer
            // switches to an individual behavior within one tick.
            self.select(now, sensors, outgoing);
            trace = Some(self.trace());
        }
        self.machine.commitment_changed = false;
        trace
    }

    fn trace(&self) -> DecisionTrace {
        DecisionTrace {
            round: self.machine.round,
            robot: self.id,
            role: self.role(),
            operator: self
                .machine
                .current
                .as_ref()
                .map(|op| op.name().to_string())
                .unwrap_or_else(|| "standby".into()),
            fsa_state: self
                .machine
                .current
                .as_ref()
                .map(|op| op.current().name.to_string())
                .unwrap_or_else(|| "hold".into()),
            captain: self.machine.captain,
            bid: self.machine.last_bid,
            bid_winner: self.machine.bid_winner,
            commitment: self
                .machine
                .commitment
                .as_ref()
                .map(|c| (c.commitment.id, c.commitment.phase)),
        }
    }

    fn select(&mut self, now: f64, sensors: &SensorBatch, outgoing: &mut Vec<Outgoing>) {
        // Drop commitments that reached a terminal phase before reselecting.
        if let Some(c) = &self.machine.commitment {
            if matches!(
                c.commitment.phase,
                CommitmentPhase::Done | CommitmentPhase::Dropped
            ) {
                self.machine.commitment = None;
            }
        }
        let snap = self.snapshot(now, sensors);
        let view = snap.view();
        let role = view.role;
        let (name, error) = select_behavior(&view, role, &self.rules, &self.registry);
        let pass_target = if name == "pass_kick" && self.machine.commitment.is_none() {
            pass_preferred(&view).and_then(|r| reception_pose(&view, r).map(|rp| (r, rp)))
        } else {
            None
        };
        drop(view);
        if let Some(error) = error {
            self.events.push(BehaviorEvent::OperatorMissing {
                robot: self.id,
                detail: error,
                time: now,
            });
        }
        // Pass initiation: selecting pass_kick without a commitment starts
        // the negotiation.
        {
            if let Some((receiver, rp)) = pass_target {
                {
                    self.commit_seq += 1;
                    let id = (u64::from(self.id) << 32) | self.commit_seq;
                    let deadline = now + self.cfg.behavior.pass.negotiation_timeout;
                    self.machine.commitment = Some(CommitmentState {
                        commitment: Commitment {
                            id,
                            kicker: self.id,
                            receiver,
                            phase: CommitmentPhase::Proposed,
                            deadline,
                        },
                        is_kicker: true,
                        reception_pose: rp,
                        kicked: false,
                    });
                    outgoing.push(Outgoing {
                        dest: OutDest::To(receiver),
                        msg: Message::Pass(PassMsg::Propose {
                            id,
                            kicker: self.id,
                            receiver,
                            reception_pose: rp,
                            deadline,
                        }),
                    });
                    self.events.push(BehaviorEvent::CommitmentEvent {
                        robot: self.id,
                        id,
                        phase: CommitmentPhase::Proposed,
                        time: now,
                    });
                }
            }
        }
        let switch = match &self.machine.current {
            Some(op) => op.name() != name || op.done,
            None => true,
        };
        if switch {
            let def = self
                .registry
                .get(&name)
                .or_else(|| self.registry.get("standby"))
                .expect("standby is always installed");
            self.machine.current = Some(RunningOperator::new(def, now));
            let _ = self
                .bb
                .write(BbKey::SelectedOperator, BbValue::Text(name), now);
        }
    }

    fn process_pass_messages(
        &mut self,
        now: f64,
        sensors: &SensorBatch,
        outgoing: &mut Vec<Outgoing>,
    ) {
        let inbox = std::mem::take(&mut self.machine.pass_inbox);
        for (from, msg) in inbox {
            match msg {
                PassMsg::Propose {
                    id,
                    kicker,
                    receiver,
                    reception_pose,
                    deadline,
                } => {
                    // Receiver-side pre-conditions.
                    let acceptable = receiver == self.id
                        && self.machine.commitment.is_none()
                        && self.role() != Role::Goalkeeper
                        && !sensors.has_ball
                        && now < deadline;
                    if acceptable {
                        self.machine.commitment = Some(CommitmentState {
                            commitment: Commitment {
                                id,
                                kicker,
                                receiver,
                                phase: CommitmentPhase::Active,
                                deadline: now + self.cfg.behavior.pass.commitment_timeout,
                            },
                            is_kicker: false,
                            reception_pose,
                            kicked: false,
                        });
                        self.machine.commitment_changed = true;
                        outgoing.push(Outgoing {
                            dest: OutDest::To(kicker),
                            msg: Message::Pass(PassMsg::Accept { id }),
                        });
                        self.events.push(BehaviorEvent::CommitmentEvent {
                            robot: self.id,
                            id,
                            phase: CommitmentPhase::Active,
                            time: now,
                        });
                    } else {
                        outgoing.push(Outgoing {
                            dest: OutDest::To(kicker),
                            msg: Message::Pass(PassMsg::Reject { id }),
                        });
                    }
                }
                PassMsg::Accept { id } => {
                    if let Some(c) = &mut self.machine.commitment {
                        if c.commitment.id == id && c.commitment.phase == CommitmentPhase::Proposed
                        {
                            c.commitment.phase = CommitmentPhase::Active;
                            c.commitment.deadline =
                                now + self.cfg.behavior.pass.commitment_timeout;
                            self.events.push(BehaviorEvent::CommitmentEvent {
                                robot: self.id,
                                id,
                                phase: CommitmentPhase::Active,
                                time: now,
                            });
                        }
                    }
                }
                PassMsg::Reject { id } => {
                    if let Some(c) = &mut self.machine.commitment {
                        if c.commitment.id == id {
                            c.commitment.phase = CommitmentPhase::Dropped;
                            self.machine.commitment_changed = true;
                        }
                    }
                }
                PassMsg::Kicked { id } => {
                    if let Some(c) = &mut self.machine.commitment {
                        if c.commitment.id == id {
                            c.kicked = true;
                        }
                    }
                }
                PassMsg::Done { id } | PassMsg::Drop { id, .. } => {
                    if let Some(c) = &mut self.machine.commitment {
                        if c.commitment.id == id {
                            c.commitment.phase = if matches!(msg, PassMsg::Done { .. }) {
                                CommitmentPhase::Done
                            } else {
                                CommitmentPhase::Dropped
                            };
                            self.machine.commitment_changed = true;
                            self.events.push(BehaviorEvent::CommitmentEvent {
                                robot: self.id,
                                id,
                                phase: c.commitment.phase,
                                time: now,
                            });
                        }
                    }
                    if from == self.id {
                        unreachable!("self-addressed pass message");
                    }
                }
            }
        }

        // Local lifecycle checks.
        let mut drop_reason: Option<String> = None;
        let mut send_done = false;
        if let Some(c) = &mut self.machine.commitment {
            match c.commitment.phase {
                CommitmentPhase::Proposed if now >= c.commitment.deadline => {
                    drop_reason = Some("proposal timeout".into());
                }
                CommitmentPhase::Active => {
                    if now >= c.commitment.deadline {
                        drop_reason = Some("commitment timeout".into());
                    } else if c.is_kicker && !c.kicked && !sensors.has_ball {
                        drop_reason = Some("kicker lost the ball".into());
                    } else if !c.is_kicker && sensors.has_ball {
                        // Reception complete.
                        c.commitment.phase = CommitmentPhase::Done;
                        self.machine.commitment_changed = true;
                        send_done = true;
                    }
                }
                _ => {}
            }
        }
        if let Some(reason) = drop_reason {
            if let Some(c) = &mut self.machine.commitment {
                c.commitment.phase = CommitmentPhase::Dropped;
                self.machine.commitment_changed = true;
                let peer = if c.is_kicker {
                    c.commitment.receiver
                } else {
                    c.commitment.kicker
                };
                let id = c.commitment.id;
                outgoing.push(Outgoing {
                    dest: OutDest::To(peer),
                    msg: Message::Pass(PassMsg::Drop { id, reason }),
                });
                self.events.push(BehaviorEvent::CommitmentEvent {
                    robot: self.id,
                    id,
                    phase: CommitmentPhase::Dropped,
                    time: now,
                });
            }
        }
        if send_done {
            if let Some(c) = &self.machine.commitment {
                outgoing.push(Outgoing {
                    dest: OutDest::To(c.commitment.kicker),
                    msg: Message::Pass(PassMsg::Done {
                        id: c.commitment.id,
                    }),
                });
                self.events.push(BehaviorEvent::CommitmentEvent {
                    robot: self.id,
                    id: c.commitment.id,
                    phase: CommitmentPhase::Done,
                    time: now,
                });
            }
        }
    }

    fn control_stage(
        &mut self,
        now: f64,
        sensors: &SensorBatch,
        outgoing: &mut Vec<Outgoing>,
    ) -> DriveCommand {
        let snap = self.snapshot(now, sensors);
        let mut kick = None;
        let command = {
            let view = snap.view();
            let Some(op) = &mut self.machine.current else {
                return DriveCommand::default();
            };
            op.advance(&view, &mut self.events);
            if op.done {
                PrimitiveCommand::Nav(crate::nav::NavCommand::stop())
            } else {
                execute_task(
                    &op.current().task,
                    &view,
                    &mut self.guide,
                    &self.cfg.potential,
                    &self.cfg.dribble,
                    &self.cfg.control,
                )
            }
        };

        let drive = match command {
            PrimitiveCommand::Noop => DriveCommand::default(),
            PrimitiveCommand::Nav(cmd) => DriveCommand {
                v: cmd.v_cmd,
                omega: cmd.omega_cmd,
                kick: None,
            },
            PrimitiveCommand::Kick(force) => {
                kick = Some(force);
                DriveCommand {
                    v: 0.0,
                    omega: 0.0,
                    kick,
                }
            }
        };

        // A pass kick announces itself so the receiver starts intercepting.
        if kick.is_some() {
            if let Some(c) = &mut self.machine.commitment {
                if c.is_kicker && c.commitment.phase == CommitmentPhase::Active && !c.kicked {
                    c.kicked = true;
                    outgoing.push(Outgoing {
                        dest: OutDest::To(c.commitment.receiver),
                        msg: Message::Pass(PassMsg::Kicked {
                            id: c.commitment.id,
                        }),
                    });
                }
            }
        }
        drive
    }
}

/// Owned view data gathered at a stage boundary, so stages can mutate the
/// agent while the view stays alive.
struct Snapshot {
    now: f64,
    id: RobotId,
    team: Team,
    field: Arc<FieldModel>,
    pose: Option<Pose>,
    v: f64,
    has_ball: bool,
    ball: Option<GaussianEstimate>,
    sees_ball: bool,
    obstacles: Vec<Obstacle>,
    role: Role,
    roles: BTreeMap<RobotId, Role>,
    team_poses: BTreeMap<RobotId, (f64, Pose)>,
    bid_winner: Option<RobotId>,
    commitment: Option<CommitmentState>,
}

impl Snapshot {
    fn view(&self) -> WorldView<'_> {
        WorldView {
            now: self.now,
            id: self.id,
            team: self.team,
            field: &self.field,
            pose: self.pose,
            v: self.v,
            has_ball: self.has_ball,
            ball: self.ball,
            sees_ball: self.sees_ball,
            obstacles: &self.obstacles,
            role: self.role,
            roles: &self.roles,
            team_poses: &self.team_poses,
            bid_winner: self.bid_winner,
            commitment: self.commitment,
        }
    }
}

trait AsDerefName {
    fn as_deref_name(&self) -> Option<&str>;
}

impl AsDerefName for Option<RunningOperator> {
    fn as_deref_name(&self) -> Option<&str> {
        self.as_ref().map(|op| op.name())
    }
}
