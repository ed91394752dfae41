//! Game replays as JSON lines.
//!
//! A replay starts with a header holding the initial state, then one record
//! per unit action and per phase end (each pinned by the resulting score and
//! state digest), manager decision records where the game had managers, and
//! a trailer with the final score breakdown. Verification re-applies the
//! actions to the initial state and stops at the first record that does not
//! reproduce.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ActionCmd, Event, Faction, GameState, ScoreBreakdown, UnitId};
use crate::play::{GameObserver, ManagerDecision};

pub const REPLAY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Header {
        version: u32,
        blue: String,
        red: String,
        /// Seed of the scenario the game started from.
        scenario_seed: u64,
        /// Seed and stream of the game's random generator.
        game_seed: u64,
        game_index: u64,
        initial: Box<GameState>,
    },
    Action {
        phase: u32,
        unit: UnitId,
        action: ActionCmd,
        score: i64,
        digest: String,
    },
    PhaseEnd {
        phase: u32,
        score: i64,
        digest: String,
    },
    Decision {
        phase: u32,
        faction: Faction,
        manager_id: usize,
        action_index: Option<usize>,
        reward: Option<f64>,
    },
    Trailer {
        phases: u32,
        score: ScoreBreakdown,
        digest: String,
    },
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("record {index}: {reason}")]
    Diverged { index: usize, reason: String },
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Collects records while a game is played.
#[derive(Debug, Default)]
pub struct Recorder {
    pub records: Vec<Record>,
}

impl Recorder {
    pub fn new(header: Record) -> Self {
        Self { records: vec![header] }
    }

    pub fn finish(&mut self, end: &GameState) {
        self.records.push(Record::Trailer {
            phases: end.phase,
            score: end.score,
            digest: end.digest(),
        });
    }
}

impl GameObserver for Recorder {
    fn decisions(&mut self, state: &GameState, faction: Faction, d: &[ManagerDecision]) {
        for d in d {
            self.records.push(Record::Decision {
                phase: state.phase,
                faction,
                manager_id: d.manager_id,
                action_index: d.action_index,
                reward: d.reward,
            });
        }
    }

    fn action(&mut self, after: &GameState, unit: UnitId, action: ActionCmd, _events: &[Event]) {
        self.records.push(Record::Action {
            phase: after.phase,
            unit,
            action,
            score: after.score.total(),
            digest: after.digest(),
        });
    }

    fn phase_end(&mut self, after: &GameState, _events: &[Event]) {
        self.records.push(Record::PhaseEnd {
            phase: after.phase,
            score: after.score.total(),
            digest: after.digest(),
        });
    }
}

pub fn write_replay<W: Write>(records: &[Record], mut w: W) -> Result<(), ReplayError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_replay<R: BufRead>(r: R) -> Result<Vec<Record>, ReplayError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ReplayError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub records: usize,
    pub actions: usize,
    pub decisions: usize,
    pub final_score: ScoreBreakdown,
}

/// Re-simulates the replay; record indices are 0-based positions in the stream.
pub fn verify(records: &[Record]) -> Result<VerifyReport, ReplayError> {
    let diverged = |index: usize, reason: String| ReplayError::Diverged { index, reason };
    let Some(Record::Header { initial, version, .. }) = records.first() else {
        return Err(diverged(0, "missing header".into()));
    };
    if *version != REPLAY_VERSION {
        return Err(diverged(0, format!("unsupported version {version}")));
    }
    let mut state = (**initial).clone();
    let (mut actions, mut decisions) = (0, 0);
    let check = |index: usize, state: &GameState, score: i64, digest: &str| {
        if state.score.total() != score {
            return Err(diverged(index, format!("score {} but record says {score}", state.score.total())));
        }
        if state.digest() != digest {
            return Err(diverged(index, format!("state digest {} but record says {digest}", state.digest())));
        }
        Ok(())
    };
    for (index, r) in records.iter().enumerate().skip(1) {
        match r {
            Record::Header { .. } => return Err(diverged(index, "second header".into())),
            Record::Action {
                phase,
                unit,
                action,
                score,
                digest,
            } => {
                if *phase != state.phase {
                    return Err(diverged(index, format!("phase {phase} but game is in phase {}", state.phase)));
                }
                state
                    .apply(*unit, *action)
                    .map_err(|e| diverged(index, format!("action rejected: {e}")))?;
                check(index, &state, *score, digest)?;
                actions += 1;
            }
            Record::PhaseEnd { phase, score, digest } => {
                state
                    .end_phase()
                    .map_err(|e| diverged(index, format!("phase end rejected: {e}")))?;
                if *phase != state.phase {
                    return Err(diverged(index, format!("phase {phase} but game reached {}", state.phase)));
                }
                check(index, &state, *score, digest)?;
            }
            Record::Decision { .. } => decisions += 1,
            Record::Trailer { phases, score, digest } => {
                if *score != state.score || *phases != state.phase || *digest != state.digest() {
                    return Err(diverged(index, format!("trailer {score:?} but game ended at {:?}", state.score)));
                }
                if !state.is_terminal() {
                    return Err(diverged(index, "trailer before the game ended".into()));
                }
                if index + 1 != records.len() {
                    return Err(diverged(index + 1, "records after trailer".into()));
                }
                return Ok(VerifyReport {
                    records: records.len(),
                    actions,
                    decisions,
                    final_score: state.score,
                });
            }
        }
    }
    Err(diverged(records.len(), "missing trailer".into()))
}
