//! Line-delimited match log: a header line followed by one JSON record per
//! line, strictly time-ordered. Logs are self-contained: replay and the
//! invariant audits below work from the records alone.

use crate::behavior::{BehaviorEvent, CommitmentPhase, DecisionTrace, LocalizationEvent, Role};
use crate::field::Pose;
use crate::localize::PoseEstimate;
use crate::sim::SimEvent;
use crate::RobotId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use thiserror::Error;

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    pub config_hash: String,
    pub master_seed: u64,
    pub seed_overrides: BTreeMap<String, u64>,
    pub home_ids: Vec<RobotId>,
    pub away_ids: Vec<RobotId>,
    pub decision_period: f64,
    /// Wall-clock creation time; excluded from determinism comparisons.
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    /// Per-robot state at one step.
    Step {
        t: f64,
        robot: RobotId,
        true_pose: Pose,
        est_pose: Option<PoseEstimate>,
        v: f64,
        omega: f64,
        has_ball: bool,
        cmd_v: f64,
        cmd_omega: f64,
    },
    /// Ball truth at one step.
    Ball {
        t: f64,
        x: f64,
        y: f64,
        vx: f64,
        vy: f64,
        holder: Option<RobotId>,
    },
    /// Behavior trace at a decision round.
    Decision { t: f64, trace: DecisionTrace },
    /// Fused ball estimate announced by one robot.
    Estimate {
        t: f64,
        robot: RobotId,
        mean: (f64, f64),
        cov_upper: [f64; 3],
    },
    /// One self-localization frame, with the ground truth for scoring.
    Localization {
        event: LocalizationEvent,
        true_pose: Pose,
    },
    /// Simulator event.
    Sim { event: SimEvent },
    /// Behavior-layer event.
    Behavior { event: BehaviorEvent },
}

impl LogRecord {
    pub fn time(&self) -> f64 {
        match self {
            LogRecord::Step { t, .. }
            | LogRecord::Ball { t, .. }
            | LogRecord::Decision { t, .. }
            | LogRecord::Estimate { t, .. } => *t,
            LogRecord::Localization { event, .. } => event.time,
            LogRecord::Sim { event } => match event {
                SimEvent::Goal { time, .. }
                | SimEvent::Kick { time, .. }
                | SimEvent::KickWithoutBall { time, .. }
                | SimEvent::BallCaptured { time, .. }
                | SimEvent::BallLost { time, .. }
                | SimEvent::Death { time, .. }
                | SimEvent::CommandClamped { time, .. } => *time,
            },
            LogRecord::Behavior { event } => match event {
                BehaviorEvent::OperatorMissing { time, .. }
                | BehaviorEvent::OperatorExhausted { time, .. }
                | BehaviorEvent::TacticFallback { time, .. }
                | BehaviorEvent::CaptainChanged { time, .. }
                | BehaviorEvent::CommitmentEvent { time, .. }
                | BehaviorEvent::MicroAgentSkipped { time, .. } => *time,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchLog {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty log (missing header)")]
    Empty,
    #[error("corrupt record at line {line} (last valid record index {last_valid}): {detail}")]
    Corrupt {
        line: usize,
        last_valid: usize,
        detail: String,
    },
}

impl MatchLog {
    /// Serializes to the line-delimited format (header first).
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), LogError> {
        serde_json::to_writer(&mut w, &self.header).map_err(io_err)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(io_err)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), LogError> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, LogError> {
        let mut lines = r.lines();
        let header_line = lines.next().ok_or(LogError::Empty)??;
        let header: LogHeader =
            serde_json::from_str(&header_line).map_err(|e| LogError::Corrupt {
                line: 1,
                last_valid: 0,
                detail: e.to_string(),
            })?;
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord = serde_json::from_str(&line).map_err(|e| LogError::Corrupt {
                line: i + 2,
                last_valid: records.len(),
                detail: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(Self { header, records })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, LogError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }

    /// The log body (records only), for determinism comparisons that must
    /// ignore the header's wall-clock field.
    pub fn body_json(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn records_of_robot(&self, robot: RobotId) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(move |r| match r {
            LogRecord::Step { robot: rid, .. }
            | LogRecord::Estimate { robot: rid, .. } => *rid == robot,
            LogRecord::Decision { trace, .. } => trace.robot == robot,
            LogRecord::Localization { event, .. } => event.robot == robot,
            _ => false,
        })
    }
}

fn io_err(e: serde_json::Error) -> LogError {
    LogError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Per-team membership helper.
fn team_of(header: &LogHeader, robot: RobotId) -> usize {
    if header.home_ids.contains(&robot) {
        0
    } else {
        1
    }
}

/// Death times per robot, from the sim events.
fn death_times(log: &MatchLog) -> BTreeMap<RobotId, f64> {
    let mut out = BTreeMap::new();
    for r in &log.records {
        if let LogRecord::Sim {
            event: SimEvent::Death { time, robot },
        } = r
        {
            out.entry(*robot).or_insert(*time);
        }
    }
    out
}

/// Summary statistics over a full log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchSummary {
    pub goals_home: u32,
    pub goals_away: u32,
    pub possession_home: f64,
    pub possession_away: f64,
    pub localization_p50: f64,
    pub localization_p90: f64,
    pub localization_frames: usize,
    pub exclusivity_violations: usize,
    pub captain_violations: usize,
    pub role_violations: usize,
    pub commitment_violations: usize,
}

pub fn summarize(log: &MatchLog) -> MatchSummary {
    let mut goals = (0u32, 0u32);
    for r in &log.records {
        if let LogRecord::Sim {
            event: SimEvent::Goal { team, .. },
        } = r
        {
            match team {
                crate::sim::Team::Home => goals.0 += 1,
                crate::sim::Team::Away => goals.1 += 1,
            }
        }
    }
    let mut held = (0usize, 0usize, 0usize); // home, away, total ball records
    for r in &log.records {
        if let LogRecord::Ball { holder, .. } = r {
            held.2 += 1;
            if let Some(h) = holder {
                if team_of(&log.header, *h) == 0 {
                    held.0 += 1;
                } else {
                    held.1 += 1;
                }
            }
        }
    }
    let mut loc_errors: Vec<f64> = log
        .records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Localization { event, true_pose } if event.output.trusted => {
                Some(((event.output.pose.position()) - true_pose.position()).norm())
            }
            _ => None,
        })
        .collect();
    loc_errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| -> f64 {
        if loc_errors.is_empty() {
            f64::NAN
        } else {
            loc_errors[(p * (loc_errors.len() - 1) as f64).round() as usize]
        }
    };
    MatchSummary {
        goals_home: goals.0,
        goals_away: goals.1,
        possession_home: held.0 as f64 / held.2.max(1) as f64,
        possession_away: held.1 as f64 / held.2.max(1) as f64,
        localization_p50: pct(0.5),
        localization_p90: pct(0.9),
        localization_frames: loc_errors.len(),
        exclusivity_violations: audit_go_exclusivity(log),
        captain_violations: audit_captain_uniqueness(log),
        role_violations: audit_role_totality(log),
        commitment_violations: audit_commitment_bilaterality(log),
    }
}

/// Decision rows grouped by (team, round).
fn decisions_by_round(log: &MatchLog) -> BTreeMap<(usize, u64), Vec<&DecisionTrace>> {
    let mut map: BTreeMap<(usize, u64), Vec<&DecisionTrace>> = BTreeMap::new();
    for r in &log.records {
        if let LogRecord::Decision { trace, .. } = r {
            map.entry((team_of(&log.header, trace.robot), trace.round))
                .or_default()
                .push(trace);
        }
    }
    map
}

/// At most one robot per team may run the go-to-ball behavior per round.
pub fn audit_go_exclusivity(log: &MatchLog) -> usize {
    decisions_by_round(log)
        .values()
        .filter(|traces| traces.iter().filter(|t| t.operator == "go").count() > 1)
        .count()
}

/// Exactly one alive robot per team believes itself captain each round; a
/// grace round is allowed right after an injected death.
pub fn audit_captain_uniqueness(log: &MatchLog) -> usize {
    let deaths = death_times(log);
    let period = log.header.decision_period;
    let mut violations = 0;
    for ((_, round), traces) in decisions_by_round(log) {
        let round_start = round as f64 * period;
        let in_grace = deaths
            .values()
            .any(|&t| round_start >= t && round_start < t + 1.5 * period);
        let self_captains = traces
            .iter()
            .filter(|t| t.captain == Some(t.robot))
            .count();
        if self_captains > 1 || (self_captains == 0 && !in_grace && round > 1) {
            violations += 1;
        }
    }
    violations
}

/// Every alive robot carries exactly one role and each team exactly one
/// goalkeeper (grace round after deaths, and one round of startup slack).
pub fn audit_role_totality(log: &MatchLog) -> usize {
    let deaths = death_times(log);
    let period = log.header.decision_period;
    let mut violations = 0;
    for ((_, round), traces) in decisions_by_round(log) {
        if round < 2 {
            continue;
        }
        let round_start = round as f64 * period;
        let in_grace = deaths
            .values()
            .any(|&t| round_start >= t && round_start < t + 2.5 * period);
        if in_grace {
            continue;
        }
        let keepers = traces
            .iter()
            .filter(|t| t.role == Role::Goalkeeper)
            .count();
        if keepers != 1 {
            violations += 1;
        }
    }
    violations
}

/// No commitment may stay active on any party materially past its deadline
/// (deadlock freedom by timeout), and both parties must leave a terminated
/// commitment promptly.
pub fn audit_commitment_bilaterality(log: &MatchLog) -> usize {
    // Track per (robot, commitment id) the rounds spent in Active.
    let mut active_span: BTreeMap<(RobotId, u64), (u64, u64)> = BTreeMap::new();
    for r in &log.records {
        if let LogRecord::Decision { trace, .. } = r {
            if let Some((id, CommitmentPhase::Active)) = trace.commitment {
                let e = active_span
                    .entry((trace.robot, id))
                    .or_insert((trace.round, trace.round));
                e.0 = e.0.min(trace.round);
                e.1 = e.1.max(trace.round);
            }
        }
    }
    let period = log.header.decision_period;
    // Generous bound: the commitment timeout plus negotiation and delivery.
    let max_rounds = ((8.0 / period).ceil() as u64).max(2);
    active_span
        .values()
        .filter(|(start, end)| end - start > max_rounds)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_log() -> MatchLog {
        MatchLog {
            header: LogHeader {
                version: LOG_VERSION,
                config_hash: "abc".into(),
                master_seed: 1,
                seed_overrides: BTreeMap::new(),
                home_ids: vec![1, 2],
                away_ids: vec![3, 4],
                decision_period: 0.1,
                created_at: "test".into(),
            },
            records: vec![
                LogRecord::Ball {
                    t: 0.0,
                    x: 0.0,
                    y: 0.0,
                    vx: 0.0,
                    vy: 0.0,
                    holder: Some(1),
                },
                LogRecord::Step {
                    t: 0.0,
                    robot: 1,
                    true_pose: Pose::new(1.0, 2.0, 0.3),
                    est_pose: None,
                    v: 0.0,
                    omega: 0.0,
                    has_ball: true,
                    cmd_v: 0.5,
                    cmd_omega: 0.0,
                },
            ],
        }
    }

    #[test]
    fn round_trips_through_text() {
        let log = tiny_log();
        let mut buf = Vec::new();
        log.write_to(&mut buf).unwrap();
        let back = MatchLog::read_from(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn corrupt_line_is_located() {
        let log = tiny_log();
        let mut buf = Vec::new();
        log.write_to(&mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("{\"kind\":\"step\",\"broken\n");
        match MatchLog::read_from(std::io::Cursor::new(text.into_bytes())) {
            Err(LogError::Corrupt {
                line, last_valid, ..
            }) => {
                assert_eq!(line, 4);
                assert_eq!(last_valid, 2);
            }
            other => panic!("expected corrupt error, got {other:?}"),
        }
    }

    #[test]
    fn possession_summary_counts_holders() {
        let summary = summarize(&tiny_log());
        assert_eq!(summary.possession_home, 1.0);
        assert_eq!(summary.possession_away, 0.0);
    }

    #[test]
    fn exclusivity_audit_counts_double_go() {
        let mut log = tiny_log();
        for robot in [1u8, 2u8] {
            log.records.push(LogRecord::Decision {
                t: 0.1,
                trace: DecisionTrace {
                    round: 1,
                    robot,
                    role: Role::Attacker,
                    operator: "go".into(),
                    fsa_state: "approach".into(),
                    captain: Some(1),
                    bid: Some(1.0),
                    bid_winner: Some(1),
                    commitment: None,
                },
            });
        }
        assert_eq!(audit_go_exclusivity(&log), 1);
    }
}
