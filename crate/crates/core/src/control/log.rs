//! Per-episode records: every primitive step, every oracle interaction, every
//! selector decision, and the outcome.

use serde::{Deserialize, Serialize};

use super::penalty::{zeta_f, zeta_l, zeta_ques, PenaltyParams};
use super::selector::{Features, Mask, OptionKind};
use crate::env::{Action, Cell, Pose};
use crate::oracle::Verdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    pub option: OptionKind,
    pub action: Action,
    pub reward: f64,
    pub penalty: f64,
    /// Belief confidence when the action was taken.
    pub confidence: f64,
    /// Ground truth: the target was sounding at `t`.
    pub sound_active: bool,
    /// The selector chose an option at this step.
    pub decision: bool,
    /// Pose after the action.
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Query,
    Question,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub t: u32,
    pub kind: InteractionKind,
    /// 1-based ordinal among queries (for `Query`) or among questions.
    pub index: u32,
    /// Steps since the previous interaction of any kind, `None` if first.
    pub since_interaction: Option<u32>,
    /// Steps since the previous question, `None` if first.
    pub since_question: Option<u32>,
    pub verdict: Verdict,
    pub wrong_question: bool,
    /// Ground-truth judgement of a question.
    pub question_correct: Option<bool>,
    /// The oracle handed out an instruction or action list.
    pub instructed: bool,
    /// The message text the agent sent, for questions.
    pub question: Option<String>,
    /// The instruction text received, if any.
    pub instruction: Option<String>,
    pub confidence: f64,
    pub penalty: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: u32,
    pub features: Features,
    pub mask: Mask,
    pub option: OptionKind,
    /// Selector distribution; `None` for fixed baselines.
    pub probs: Option<[f64; 3]>,
    /// Primitive steps the option lasted.
    pub duration: u32,
    /// Rewards plus penalties over the option, discounted to its first step.
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    pub stopped: bool,
    pub steps: u32,
    /// Cell geodesic to the goal at the end.
    pub final_dtg: u32,
    /// Cells traveled.
    pub path_length: u32,
    /// Actions taken, Stop excluded.
    pub actions: u32,
    pub stopped_while_silent: bool,
    pub final_cell: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub map_id: String,
    pub episode_seed: u64,
    pub budget: u32,
    pub steps: Vec<StepRecord>,
    pub events: Vec<InteractionEvent>,
    pub decisions: Vec<DecisionRecord>,
    pub outcome: Outcome,
    /// Undiscounted sum of rewards and penalties, accumulated by the runner.
    pub total_return: f64,
}

impl EpisodeLog {
    pub fn count(&self, kind: InteractionKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn queries(&self) -> usize {
        self.count(InteractionKind::Query)
    }

    pub fn questions(&self) -> usize {
        self.count(InteractionKind::Question)
    }

    pub fn wrong_questions(&self) -> usize {
        self.events.iter().filter(|e| e.wrong_question).count()
    }

    /// Oracle instructions received: direct queries plus "no" answers.
    pub fn instructions(&self) -> usize {
        self.events.iter().filter(|e| e.instructed).count()
    }

    pub fn within_budget(&self) -> bool {
        self.queries() + self.wrong_questions() <= self.budget as usize
    }

    pub fn logged_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward + s.penalty).sum()
    }

    /// Discounted return from each decision to the end of the episode.
    pub fn decision_returns(&self, gamma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.decisions.len()];
        let mut g = 0.0;
        for (i, d) in self.decisions.iter().enumerate().rev() {
            g = d.reward + gamma.powi(d.duration as i32) * g;
            out[i] = g;
        }
        out
    }
}

/// Penalty each event should carry, recomputed from the params and the event
/// history alone.
pub fn recompute_penalty(e: &InteractionEvent, p: &PenaltyParams) -> f64 {
    let j = e.since_interaction.unwrap_or(u32::MAX);
    let j_q = e.since_question.unwrap_or(u32::MAX);
    match e.kind {
        InteractionKind::Query => zeta_l(e.index, p.k, p) + zeta_f(j, p.tau, p.r_f),
        InteractionKind::Question => zeta_ques(e.index, !e.wrong_question, j_q, p),
    }
}
