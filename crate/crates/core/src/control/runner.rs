//! The episode runner: composes the three options under a selector, charges
//! penalties, enforces the hard budget and records everything.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::log::{
    DecisionRecord, EpisodeLog, InteractionEvent, InteractionKind, Outcome, StepRecord,
};
use super::penalty::{step_reward, zeta_f, zeta_l, zeta_ques, PenaltyParams};
use super::selector::{
    baseline_selector, features, select_option, BaselineKind, Mask, OptionKind, SelectorParams,
};
use crate::agent::{
    absorb_guidance, compose_question, confirm, forecast_trajectory, nav_step, refute, AgentConfig,
    AgentError, AgentState,
};
use crate::env::{observe_audio, step, Action, AudioNoise, World};
use crate::oracle::{Oracle, OracleError, OracleResponse, Request, Verdict};
use crate::rng::{mix, stream, Rng, Stream};

/// Which options the selector may use, and how the oracle answers "no".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchSetup {
    #[default]
    #[serde(rename = "3-branch")]
    ThreeBranch,
    /// Navigation and direct queries.
    #[serde(rename = "2-branch-l")]
    TwoBranchL,
    /// Navigation and questions; "no" comes with an instruction.
    #[serde(rename = "2-branch-ques-with-instr")]
    TwoBranchQuesWithInstr,
    /// Navigation and questions; "no" comes bare.
    #[serde(rename = "2-branch-ques-weak")]
    TwoBranchQuesWeak,
}

impl BranchSetup {
    pub const ALL: [BranchSetup; 4] = [
        BranchSetup::ThreeBranch,
        BranchSetup::TwoBranchL,
        BranchSetup::TwoBranchQuesWithInstr,
        BranchSetup::TwoBranchQuesWeak,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BranchSetup::ThreeBranch => "3-branch",
            BranchSetup::TwoBranchL => "2-branch-l",
            BranchSetup::TwoBranchQuesWithInstr => "2-branch-ques-with-instr",
            BranchSetup::TwoBranchQuesWeak => "2-branch-ques-weak",
        }
    }

    fn allows(self, o: OptionKind) -> bool {
        match (self, o) {
            (_, OptionKind::G) | (BranchSetup::ThreeBranch, _) => true,
            (BranchSetup::TwoBranchL, OptionKind::L) => true,
            (BranchSetup::TwoBranchL, OptionKind::Ques) => false,
            (_, OptionKind::L) => false,
            (_, OptionKind::Ques) => true,
        }
    }

    pub fn weak_oracle(self) -> bool {
        self == BranchSetup::TwoBranchQuesWeak
    }
}

/// Who picks options at decision points.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Learned(SelectorParams),
    Baseline(BaselineKind),
    /// Never interacts.
    NavOnly,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub agent: AgentConfig,
    pub penalty: PenaltyParams,
    pub branch: BranchSetup,
    pub audio_noise: AudioNoise,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Hooks called as an episode unfolds; the session server streams from these.
pub trait EpisodeObserver {
    fn on_step(&mut self, _world: &World, _state: &AgentState, _t: u32) {}
    fn on_end(&mut self, _world: &World, _log: &EpisodeLog) {}
}

struct NoObserver;
impl EpisodeObserver for NoObserver {}

struct Runner<'a> {
    world: &'a World,
    cfg: &'a RunConfig,
    state: AgentState,
    t: u32,
    observed: Option<u32>,
    stopped: bool,
    audio_rng: Rng,
    pending_penalty: f64,
    total: f64,
    steps: Vec<StepRecord>,
    path_length: u32,
    actions: u32,
    observer: &'a mut dyn EpisodeObserver,
}

impl Runner<'_> {
    fn horizon(&self) -> u32 {
        self.world.episode.horizon
    }

    fn running(&self) -> bool {
        !self.stopped && self.t < self.horizon()
    }

    fn dtg(&self) -> u32 {
        self.world
            .goal_distance(self.state.pose.cell())
            .unwrap_or(u32::MAX / 2)
    }

    /// Observes and updates the belief once per step.
    fn sense(&mut self) {
        if self.observed == Some(self.t) {
            return;
        }
        let obs = observe_audio(
            self.state.pose,
            self.world,
            self.t,
            &self.cfg.audio_noise,
            &mut self.audio_rng,
        );
        self.state
            .observe(self.t, obs, &self.world.map, &self.cfg.agent);
        self.observed = Some(self.t);
    }

    fn heard_now(&self) -> bool {
        self.state.belief.last_heard_step == Some(self.t)
    }

    /// Takes one primitive action; returns the reward plus penalty it earned.
    fn act(&mut self, option: OptionKind, action: Action, decision: bool) -> f64 {
        self.sense();
        let map = &self.world.map;
        let prev = self.dtg();
        let confidence = self.state.belief.confidence;
        let out = step(self.state.pose, action, map);
        self.state
            .move_to(out.pose, map, self.cfg.agent.view_radius);
        if out.moved {
            self.path_length += 1;
        }
        if action != Action::Stop {
            self.actions += 1;
        }
        let success_now = out.terminated && self.world.within_goal_radius(out.pose.cell());
        let reward = step_reward(
            f64::from(prev),
            f64::from(self.dtg()),
            action,
            success_now,
            &self.cfg.penalty,
        );
        let penalty = std::mem::take(&mut self.pending_penalty);
        self.total += reward + penalty;
        self.steps.push(StepRecord {
            t: self.t,
            option,
            action,
            reward,
            penalty,
            confidence,
            sound_active: self.world.sound_active(self.t),
            decision,
            pose: out.pose,
        });
        self.observer.on_step(self.world, &self.state, self.t);
        self.stopped = out.terminated;
        self.t += 1;
        reward + penalty
    }

    /// Runs `actions` in order until the episode ends; returns the discounted sum.
    fn run_actions(&mut self, option: OptionKind, actions: &[Action]) -> (f64, u32) {
        let gamma = self.cfg.penalty.gamma;
        let (mut sum, mut n) = (0.0, 0u32);
        for &a in actions {
            if !self.running() {
                break;
            }
            sum += gamma.powi(n as i32) * self.act(option, a, n == 0);
            n += 1;
        }
        (sum, n)
    }

    fn g_step(&mut self, option: OptionKind, decision: bool) -> (f64, u32) {
        self.sense();
        let a = nav_step(&self.state, &self.world.map, &self.cfg.agent);
        (self.act(option, a, decision), 1)
    }
}

/// Guidance in a response, capped at `nu`; `None` if there is nothing to follow.
fn guidance_of(resp: &OracleResponse, nu: usize) -> Option<Vec<Action>> {
    let mut a = resp.guidance_actions()?;
    a.retain(|&x| x != Action::Stop);
    a.truncate(nu);
    (!a.is_empty()).then_some(a)
}

fn since(now: u32, last: Option<u32>) -> Option<u32> {
    last.map(|l| now - l)
}

pub fn run_episode(
    world: &World,
    policy: &Policy,
    oracle: &mut Oracle,
    cfg: &RunConfig,
    seed: u64,
) -> Result<EpisodeLog, RunError> {
    run_episode_observed(world, policy, oracle, cfg, seed, &mut NoObserver)
}

/// Plays one episode. `seed` drives the audio, oracle and selector streams.
pub fn run_episode_observed(
    world: &World,
    policy: &Policy,
    oracle: &mut Oracle,
    cfg: &RunConfig,
    seed: u64,
    observer: &mut dyn EpisodeObserver,
) -> Result<EpisodeLog, RunError> {
    cfg.penalty
        .validate()
        .map_err(|e| RunError::InvalidEpisode(e.to_string()))?;
    let ep = &world.episode;
    if ep.horizon == 0 {
        return Err(RunError::InvalidEpisode("horizon is zero".into()));
    }
    let p = &cfg.penalty;
    let nu = p.nu as usize;
    let seed = mix(seed, ep.seed);
    let mut oracle_rng = stream(seed, Stream::Oracle);
    let mut sel_rng = stream(seed, Stream::Selector);
    let saved_weak = oracle.cfg.weak;
    oracle.cfg.weak |= cfg.branch.weak_oracle();

    let budget = p.budget;
    let target_label = ep.target().label;
    let state = AgentState::new(
        &world.map,
        ep.start,
        target_label,
        budget,
        ep.proximity_radius,
        &cfg.agent,
    );
    let mut r = Runner {
        world,
        cfg,
        state,
        t: 0,
        observed: None,
        stopped: false,
        audio_rng: stream(seed, Stream::Audio),
        pending_penalty: 0.0,
        total: 0.0,
        steps: Vec::new(),
        path_length: 0,
        actions: 0,
        observer,
    };
    let mut events: Vec<InteractionEvent> = Vec::new();
    let mut decisions: Vec<DecisionRecord> = Vec::new();
    let (mut k, mut m) = (0u32, 0u32);
    let (mut last_interaction, mut last_question): (Option<u32>, Option<u32>) = (None, None);
    let diagonal = (world.map.width() + world.map.height()) as f64;

    let result: Result<(), RunError> = (|| {
        while r.running() {
            r.sense();
            let t = r.t;
            let conf = r.state.belief.confidence;
            let j = since(t, last_interaction);
            let forecast = if conf > 0.0 {
                forecast_trajectory(&r.state, &world.map, cfg.agent.forecast_len.min(nu))?
            } else {
                Vec::new()
            };
            let budget_left = r.state.budget_remaining;
            let mask = Mask {
                l: budget_left == 0 || !cfg.branch.allows(OptionKind::L),
                ques: budget_left == 0
                    || forecast.is_empty()
                    || !cfg.branch.allows(OptionKind::Ques),
            };
            let x = features(
                conf,
                r.heard_now(),
                j.unwrap_or(u32::MAX),
                p.tau,
                budget_left,
                budget,
                f64::from(r.state.believed_distance()),
                diagonal,
            );
            let (option, probs) = match policy {
                Policy::Learned(w) => {
                    let (o, pr) = select_option(w, &x, mask, &mut sel_rng);
                    (o, Some(pr))
                }
                Policy::Baseline(kind) => {
                    (baseline_selector(*kind, conf, t, mask, &mut sel_rng), None)
                }
                Policy::NavOnly => (OptionKind::G, None),
            };

            let (reward, duration) = match option {
                OptionKind::G => r.g_step(OptionKind::G, true),
                OptionKind::L => {
                    k += 1;
                    r.state.budget_remaining -= 1;
                    let penalty = zeta_l(k, p.k, p) + zeta_f(j.unwrap_or(u32::MAX), p.tau, p.r_f);
                    last_interaction = Some(t);
                    let resp = oracle.respond(
                        &Request::DirectQuery,
                        world,
                        r.state.pose,
                        r.state.budget_remaining,
                        &mut oracle_rng,
                    )?;
                    let guidance = guidance_of(&resp, nu);
                    events.push(InteractionEvent {
                        t,
                        kind: InteractionKind::Query,
                        index: k,
                        since_interaction: j,
                        since_question: since(t, last_question),
                        verdict: resp.verdict,
                        wrong_question: false,
                        question_correct: None,
                        instructed: guidance.is_some(),
                        question: None,
                        instruction: resp.instruction.as_ref().map(|m| m.to_string()),
                        confidence: conf,
                        penalty,
                        fallback: resp.fallback,
                    });
                    r.pending_penalty = penalty;
                    if resp.at_goal {
                        (r.act(OptionKind::L, Action::Stop, true), 1)
                    } else if let Some(actions) = guidance {
                        let start = r.state.pose;
                        r.state.belief = absorb_guidance(
                            &r.state.belief,
                            start,
                            &actions,
                            nu,
                            false,
                            &world.map,
                            &cfg.agent,
                        );
                        r.run_actions(OptionKind::L, &actions)
                    } else {
                        r.g_step(OptionKind::L, true)
                    }
                }
                OptionKind::Ques => {
                    m += 1;
                    let j_q = since(t, last_question);
                    last_question = Some(t);
                    last_interaction = Some(t);
                    let question = compose_question(&forecast, &r.state, &world.map)?;
                    let resp = oracle.respond(
                        &Request::Question(question.clone()),
                        world,
                        r.state.pose,
                        r.state.budget_remaining,
                        &mut oracle_rng,
                    )?;
                    let yes = resp.verdict == Verdict::Yes;
                    let penalty = zeta_ques(m, yes, j_q.unwrap_or(u32::MAX), p);
                    let guidance = if yes { None } else { guidance_of(&resp, nu) };
                    events.push(InteractionEvent {
                        t,
                        kind: InteractionKind::Question,
                        index: m,
                        since_interaction: j,
                        since_question: j_q,
                        verdict: resp.verdict,
                        wrong_question: !yes,
                        question_correct: resp.question_correct,
                        instructed: guidance.is_some(),
                        question: Some(question.to_string()),
                        instruction: resp.instruction.as_ref().map(|m| m.to_string()),
                        confidence: conf,
                        penalty,
                        fallback: resp.fallback,
                    });
                    r.pending_penalty = penalty;
                    if yes {
                        r.state.belief = confirm(&r.state.belief, &cfg.agent);
                        r.run_actions(OptionKind::Ques, &forecast)
                    } else {
                        r.state.budget_remaining -= 1;
                        if resp.at_goal {
                            (r.act(OptionKind::Ques, Action::Stop, true), 1)
                        } else if let Some(actions) = guidance {
                            let start = r.state.pose;
                            r.state.belief = absorb_guidance(
                                &r.state.belief,
                                start,
                                &actions,
                                nu,
                                true,
                                &world.map,
                                &cfg.agent,
                            );
                            r.run_actions(OptionKind::Ques, &actions)
                        } else {
                            r.state.belief = refute(&r.state.belief, &cfg.agent);
                            r.g_step(OptionKind::Ques, true)
                        }
                    }
                }
            };
            decisions.push(DecisionRecord {
                t,
                features: x,
                mask,
                option,
                probs,
                duration,
                reward,
            });
        }
        Ok(())
    })();
    oracle.cfg.weak = saved_weak;
    result?;
    debug_assert_eq!(r.pending_penalty, 0.0);

    let final_cell = r.state.pose.cell();
    let stop_t = r.t.saturating_sub(1);
    let outcome = Outcome {
        success: r.stopped && world.within_goal_radius(final_cell),
        stopped: r.stopped,
        steps: r.t,
        final_dtg: r.dtg(),
        path_length: r.path_length,
        actions: r.actions,
        stopped_while_silent: r.stopped && !world.sound_active(stop_t),
        final_cell,
    };
    let log = EpisodeLog {
        map_id: ep.map_id.clone(),
        episode_seed: ep.seed,
        budget,
        steps: r.steps,
        events,
        decisions,
        outcome,
        total_return: r.total,
    };
    r.observer.on_end(world, &log);
    Ok(log)
}
