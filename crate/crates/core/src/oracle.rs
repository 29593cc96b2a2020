//! The oracle: judges agent questions against its ground-truth direction range
//! and hands out pathlet instructions. Scripted, noisy, ground-truth-action and
//! human-backed variants.

use std::time::Duration;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Cell, GridMap, Pose, World};
use crate::geodesy::{
    direction_range, sector_center, shortest_pathlet, DistanceField, GeodesyError,
};
use crate::lang::{
    corrupt, decode_direction, encode_pathlet_scaled, parse, CodecError, Kind, Message, NoiseConfig,
};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    Scripted,
    Noisy,
    #[serde(rename = "gt-actions")]
    GTActions,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub mode: OracleMode,
    /// Clause-level corruption applied to instructions in noisy mode.
    pub noise: NoiseConfig,
    /// Probability that a noisy oracle flips its verdict.
    pub p_flip: f64,
    /// Probability that a noisy oracle grounds its instruction on a random target.
    pub p_random_path: f64,
    /// Pathlet span `nu`.
    pub horizon: usize,
    pub tolerance_deg: f64,
    /// A weak oracle answers "no" without guidance.
    pub weak: bool,
    pub human_timeout_secs: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            mode: OracleMode::Scripted,
            noise: NoiseConfig::default(),
            p_flip: 0.25,
            p_random_path: 0.25,
            horizon: 4,
            tolerance_deg: 30.0,
            weak: false,
            human_timeout_secs: 60.0,
        }
    }
}

impl OracleConfig {
    pub fn with_mode(mode: OracleMode) -> Self {
        OracleConfig {
            mode,
            ..OracleConfig::default()
        }
    }

    pub fn human_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.human_timeout_secs.max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Question(Message),
    DirectQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    No,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResponse {
    pub verdict: Verdict,
    pub instruction: Option<Message>,
    pub gt_actions: Option<Vec<Action>>,
    /// The agent is charged for a wrong question: the verdict it received was "no".
    pub wrong_question: bool,
    /// Ground-truth judgement of the question, before any noise.
    pub question_correct: Option<bool>,
    /// The agent already stands on the goal, so there is no pathlet to give.
    pub at_goal: bool,
    /// A human reply was unavailable and the scripted answer was used.
    pub fallback: bool,
}

impl OracleResponse {
    fn empty(verdict: Verdict) -> Self {
        OracleResponse {
            verdict,
            instruction: None,
            gt_actions: None,
            wrong_question: verdict == Verdict::No,
            question_correct: None,
            at_goal: false,
            fallback: false,
        }
    }

    /// Guidance as primitive actions, from either feedback form.
    pub fn guidance_actions(&self) -> Option<Vec<Action>> {
        if let Some(a) = &self.gt_actions {
            return Some(a.clone());
        }
        let msg = self.instruction.as_ref()?;
        crate::lang::decode_actions(msg).ok()
    }

    /// The contract every mode honours.
    pub fn is_well_formed(&self, req: &Request) -> bool {
        let guided = self.instruction.is_some() || self.gt_actions.is_some();
        match (req, self.verdict) {
            (Request::Question(_), Verdict::Yes) => !guided && !self.wrong_question,
            (Request::Question(_), Verdict::No) => self.wrong_question,
            (Request::DirectQuery, Verdict::None) => guided || self.at_goal,
            _ => false,
        }
    }
}

/// Whether the sector decoded from `q` lies within `tolerance_deg` of the
/// oracle's direction range toward `goal`. Questions whose motion decodes to no
/// displacement are judged wrong.
pub fn evaluate_question(
    q: &Message,
    map: &GridMap,
    goal: Cell,
    pose: Pose,
    cfg: &OracleConfig,
) -> Result<bool, OracleError> {
    let sector = match decode_direction(q, map, pose) {
        Ok(s) => s,
        Err(CodecError::DegenerateEndpoint) => return Ok(false),
        Err(e) => return Err(e.into()),
    };
    let range = match direction_range(map, pose, goal, cfg.horizon.max(1)) {
        Ok(r) => r,
        // standing on the goal: any direction is as good as another
        Err(GeodesyError::AtGoal) => return Ok(true),
        Err(e) => return Err(e.into()),
    };
    Ok(range.distance_to(sector_center(sector)) <= cfg.tolerance_deg)
}

fn random_reachable(map: &GridMap, from: Cell, rng: &mut Rng) -> Option<Cell> {
    let field = DistanceField::from_cell(map, from);
    let cells: Vec<Cell> = map
        .free_cells()
        .filter(|&c| c != from && field.get(c).is_some())
        .collect();
    (!cells.is_empty()).then(|| cells[rng.random_range(0..cells.len())])
}

/// The guidance part of a "no" or a direct query.
fn guidance(
    world: &World,
    pose: Pose,
    cfg: &OracleConfig,
    rng: &mut Rng,
    resp: &mut OracleResponse,
) -> Result<(), OracleError> {
    let map = &world.map;
    let mut target = world.goal();
    if cfg.mode == OracleMode::Noisy && rng.random_bool(cfg.p_random_path.clamp(0.0, 1.0)) {
        target = random_reachable(map, pose.cell(), rng).unwrap_or(target);
    }
    let pathlet = shortest_pathlet(map, pose, target, cfg.horizon)?;
    if pathlet.is_empty() {
        resp.at_goal = true;
        return Ok(());
    }
    if cfg.mode == OracleMode::GTActions {
        resp.gt_actions = Some(pathlet);
        return Ok(());
    }
    let mut msg = encode_pathlet_scaled(&pathlet, pose, Kind::Instruction, map.cell_spacing())?;
    if cfg.mode == OracleMode::Noisy {
        msg = corrupt(&msg, &cfg.noise, rng);
    }
    resp.instruction = Some(msg);
    Ok(())
}

/// Answers a request without a human in the loop. Human mode lands here
/// too when it falls back.
pub fn respond(
    req: &Request,
    world: &World,
    pose: Pose,
    cfg: &OracleConfig,
    rng: &mut Rng,
) -> Result<OracleResponse, OracleError> {
    match req {
        Request::DirectQuery => {
            let mut resp = OracleResponse::empty(Verdict::None);
            guidance(world, pose, cfg, rng, &mut resp)?;
            Ok(resp)
        }
        Request::Question(q) => {
            let correct = evaluate_question(q, &world.map, world.goal(), pose, cfg)?;
            let mut yes = correct;
            if cfg.mode == OracleMode::Noisy && rng.random_bool(cfg.p_flip.clamp(0.0, 1.0)) {
                yes = !yes;
            }
            let mut resp = OracleResponse::empty(if yes { Verdict::Yes } else { Verdict::No });
            resp.question_correct = Some(correct);
            if !yes && !cfg.weak {
                guidance(world, pose, cfg, rng, &mut resp)?;
            }
            Ok(resp)
        }
    }
}

/// What a human operator is shown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanRequest {
    /// Question text for an `ask`; `None` for a direct `query`.
    pub question: Option<String>,
    pub pose: Pose,
    pub budget_remaining: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HumanError {
    #[error("no reply within the deadline")]
    Timeout,
    #[error("operator disconnected")]
    Disconnected,
}

/// Carrier for human replies. Implementations block until the operator answers
/// with grammar-valid text or the deadline passes.
pub trait HumanChannel: Send {
    fn request(&mut self, req: &HumanRequest, timeout: Duration) -> Result<String, HumanError>;
}

/// Turns an operator reply into a response, or `None` if it does not fit the request.
pub fn interpret_human_reply(text: &str, req: &Request, map: &GridMap) -> Option<OracleResponse> {
    let msg = parse(text).ok()?;
    match req {
        Request::Question(_) => {
            let yes = msg.verdict()?;
            let mut resp = OracleResponse::empty(if yes { Verdict::Yes } else { Verdict::No });
            if !yes {
                resp.instruction = msg.guidance();
            }
            Some(resp)
        }
        Request::DirectQuery => {
            let ins = msg.guidance().filter(|_| msg.kind == Kind::Instruction)?;
            let _ = map;
            let mut resp = OracleResponse::empty(Verdict::None);
            resp.instruction = Some(ins);
            Some(resp)
        }
    }
}

/// An oracle with an optional human behind it.
pub struct Oracle {
    pub cfg: OracleConfig,
    human: Option<Box<dyn HumanChannel>>,
}

impl Oracle {
    pub fn new(cfg: OracleConfig) -> Self {
        Oracle { cfg, human: None }
    }

    pub fn with_human(cfg: OracleConfig, channel: Box<dyn HumanChannel>) -> Self {
        Oracle {
            cfg,
            human: Some(channel),
        }
    }

    pub fn respond(
        &mut self,
        req: &Request,
        world: &World,
        pose: Pose,
        budget_remaining: u32,
        rng: &mut Rng,
    ) -> Result<OracleResponse, OracleError> {
        if self.cfg.mode != OracleMode::Human {
            return respond(req, world, pose, &self.cfg, rng);
        }
        let scripted = OracleConfig {
            mode: OracleMode::Scripted,
            ..self.cfg
        };
        let Some(channel) = self.human.as_mut() else {
            log::warn!("human mode without an operator channel; answering scripted");
            let mut resp = respond(req, world, pose, &scripted, rng)?;
            resp.fallback = true;
            return Ok(resp);
        };
        let hreq = HumanRequest {
            question: match req {
                Request::Question(q) => Some(q.to_string()),
                Request::DirectQuery => None,
            },
            pose,
            budget_remaining,
        };
        let reply = channel.request(&hreq, self.cfg.human_timeout());
        let parsed = match &reply {
            Ok(text) => interpret_human_reply(text, req, &world.map),
            Err(_) => None,
        };
        match parsed {
            Some(mut resp) => {
                if let Request::Question(q) = req {
                    resp.question_correct =
                        evaluate_question(q, &world.map, world.goal(), pose, &scripted).ok();
                }
                Ok(resp)
            }
            None => {
                match reply {
                    Err(HumanError::Disconnected) => {
                        log::warn!("operator disconnected; scripted answers from here on");
                        self.human = None;
                    }
                    Err(e) => log::warn!("human oracle: {e}; answering scripted"),
                    Ok(text) => log::warn!("unusable operator reply {text:?}; answering scripted"),
                }
                let mut resp = respond(req, world, pose, &scripted, rng)?;
                resp.fallback = true;
                Ok(resp)
            }
        }
    }
}
