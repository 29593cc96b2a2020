//! Agent-side option policies: goal belief, autonomous navigation, trajectory
//! forecasting, question composition and instruction following.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    distance_for_intensity, step, Action, AudioObservation, Cell, ExploredCells, GridMap, Pose,
};
use crate::geodesy::{angular_difference, plan_over, relative_bearing, DistanceField};
use crate::lang::{
    dead_reckon, decode_actions, encode_pathlet_scaled, Clause, CodecError, Kind, Message,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Confidence gain on a heard target: `c + alpha (1 - c)`.
    pub alpha: f64,
    /// Confidence decay per step without the target: `lambda c`.
    pub lambda: f64,
    pub c_stop: f64,
    pub memory: usize,
    pub view_radius: u32,
    /// Forecast length `l`.
    pub forecast_len: usize,
    /// Confidence after re-aiming on oracle guidance.
    pub c_guided: f64,
    /// Confidence when guidance reveals the goal itself.
    pub c_revealed: f64,
    /// Sightings fitted jointly when re-estimating the goal.
    pub fit_window: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            alpha: 0.5,
            lambda: 0.95,
            c_stop: 0.6,
            memory: 32,
            view_radius: 5,
            forecast_len: 4,
            c_guided: 0.5,
            c_revealed: 0.9,
            fit_window: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("belief has zero confidence")]
    DegenerateBelief,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("unparseable instruction: {0}")]
    Unparseable(#[from] crate::lang::ParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub goal_cell: Cell,
    pub confidence: f64,
    pub target_label: u32,
    pub last_heard_step: Option<u32>,
    /// The goal estimate rests on a sighting or a revealed endpoint, not
    /// just a direction. Only an anchored goal can be stopped at.
    #[serde(default)]
    pub anchored: bool,
}

impl Belief {
    /// Nothing heard yet: the goal estimate is the agent's own cell.
    pub fn uninformed(at: Cell, target_label: u32) -> Belief {
        Belief {
            goal_cell: at,
            confidence: 0.0,
            target_label,
            last_heard_step: None,
            anchored: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub pose: Pose,
    pub belief: Belief,
    pub known: ExploredCells,
    pub memory: VecDeque<(u32, AudioObservation)>,
    pub memory_capacity: usize,
    /// Target sightings, newest last, bounded by the memory capacity.
    pub sightings: VecDeque<Sighting>,
    pub steps_since_interaction: u32,
    pub budget_remaining: u32,
    /// Stop radius around the believed goal, in cells.
    pub stop_radius: u32,
}

impl AgentState {
    pub fn new(
        map: &GridMap,
        pose: Pose,
        target_label: u32,
        budget: u32,
        stop_radius: u32,
        cfg: &AgentConfig,
    ) -> Self {
        let mut known = ExploredCells::for_map(map);
        known.reveal(map, pose.cell(), cfg.view_radius);
        AgentState {
            pose,
            belief: Belief::uninformed(pose.cell(), target_label),
            known,
            memory: VecDeque::with_capacity(cfg.memory),
            memory_capacity: cfg.memory,
            sightings: VecDeque::new(),
            steps_since_interaction: 0,
            budget_remaining: budget,
            stop_radius,
        }
    }

    pub fn remember(&mut self, t: u32, obs: AudioObservation) {
        if self.memory_capacity == 0 {
            return;
        }
        if self.memory.len() == self.memory_capacity {
            self.memory.pop_front();
        }
        self.memory.push_back((t, obs));
    }

    /// Updates the belief from an observation at the current pose and stores it.
    pub fn observe(&mut self, t: u32, obs: AudioObservation, map: &GridMap, cfg: &AgentConfig) {
        let recent: Vec<Sighting> = self.sightings.iter().copied().collect();
        self.belief = update_belief(
            &self.belief,
            &obs,
            self.pose,
            t,
            map,
            &self.known,
            &recent,
            cfg,
        );
        if let Some(c) = obs.loudest_with_label(self.belief.target_label) {
            if self.sightings.len() == self.memory_capacity.max(1) {
                self.sightings.pop_front();
            }
            self.sightings.push_back(Sighting {
                pose: self.pose,
                bearing_deg: c.bearing_deg,
                distance: distance_for_intensity(c.intensity),
            });
        }
        self.remember(t, obs);
    }

    /// Moves the agent and extends the explored set from its new cell.
    pub fn move_to(&mut self, pose: Pose, map: &GridMap, view_radius: u32) {
        self.pose = pose;
        self.known.reveal(map, pose.cell(), view_radius);
    }

    pub fn believed_distance(&self) -> u32 {
        self.pose.cell().manhattan(self.belief.goal_cell)
    }
}

fn clamp_to(map: &GridMap, x: f64, y: f64) -> Cell {
    let cx = (x.round() as i64).clamp(0, map.width() as i64 - 1) as i32;
    let cy = (y.round() as i64).clamp(0, map.height() as i64 - 1) as i32;
    Cell::new(cx, cy)
}

/// Cell at `bearing_deg` (relative to `pose`) whose taxicab distance from the
/// pose is `d`: on an open grid the geodesic distance is taxicab, so a
/// noiseless observation inverts exactly there.
pub fn project(pose: Pose, bearing_deg: f64, d: f64, map: &GridMap) -> Cell {
    let world = (bearing_deg + pose.heading.degrees()).to_radians();
    let (c, s) = (world.cos(), world.sin());
    let r = d / (c.abs() + s.abs());
    clamp_to(map, f64::from(pose.x) + r * c, f64::from(pose.y) + r * s)
}

/// A heard target component, kept for re-fitting the goal as the map fills in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sighting {
    pub pose: Pose,
    pub bearing_deg: f64,
    pub distance: u32,
}

/// The cell best explaining a set of sightings, judged on the agent's
/// optimistic view of the map: minimises the summed
/// `(bearing error / 15 deg)^2 + (distance error)^2`. With exact observations
/// and a fully explored map the true source cell scores zero.
pub fn locate_source(sightings: &[Sighting], map: &GridMap, known: &ExploredCells) -> Option<Cell> {
    let latest = sightings.last()?;
    if latest.distance == 0 {
        return Some(latest.pose.cell());
    }
    let passable = |c: Cell| !known.contains(c) || map.is_free(c);
    let mut cost = vec![0.0f64; map.len()];
    for s in sightings {
        let field = DistanceField::over(map.width(), map.height(), s.pose.cell(), passable);
        for (i, slot) in cost.iter_mut().enumerate() {
            let c = map.cell_at(i);
            *slot += match (field.get(c), relative_bearing(s.pose, c)) {
                (Some(g), Some(b)) => {
                    let angle = angular_difference(b, s.bearing_deg) / 15.0;
                    let dist = f64::from(g) - f64::from(s.distance);
                    angle * angle + dist * dist
                }
                (Some(_), None) => 1.0 + f64::from(s.distance).powi(2),
                (None, _) => f64::INFINITY,
            };
        }
    }
    let mut best: Option<(f64, Cell)> = None;
    for (i, &c) in cost.iter().enumerate() {
        if c.is_finite() && best.is_none_or(|(bc, _)| c < bc) {
            best = Some((c, map.cell_at(i)));
        }
    }
    best.map(|(_, c)| c)
}

/// Re-estimates the goal from the loudest component with the target label,
/// fitted jointly with up to `cfg.fit_window` earlier sightings in `recent`.
/// Components with other labels, including mislabelled target components, are ignored.
#[allow(clippy::too_many_arguments)]
pub fn update_belief(
    belief: &Belief,
    obs: &AudioObservation,
    pose: Pose,
    t: u32,
    map: &GridMap,
    known: &ExploredCells,
    recent: &[Sighting],
    cfg: &AgentConfig,
) -> Belief {
    let mut b = *belief;
    match obs.loudest_with_label(belief.target_label) {
        Some(c) => {
            let now = Sighting {
                pose,
                bearing_deg: c.bearing_deg,
                distance: distance_for_intensity(c.intensity),
            };
            let keep = cfg.fit_window.saturating_sub(1).min(recent.len());
            let mut all = recent[recent.len() - keep..].to_vec();
            all.push(now);
            b.goal_cell = locate_source(&all, map, known)
                .unwrap_or_else(|| project(pose, now.bearing_deg, f64::from(now.distance), map));
            b.confidence = belief.confidence + cfg.alpha * (1.0 - belief.confidence);
            b.last_heard_step = Some(t);
            b.anchored = true;
        }
        None => b.confidence = cfg.lambda * belief.confidence,
    }
    b.confidence = b.confidence.clamp(0.0, 1.0);
    b
}

/// Plan toward `goal` over the agent's view of the map: known walls block,
/// unexplored cells are assumed free.
pub fn optimistic_plan(state: &AgentState, map: &GridMap, goal: Cell) -> Option<Vec<Action>> {
    let passable = |c: Cell| !state.known.contains(c) || map.is_free(c);
    plan_over(
        map.width(),
        map.height(),
        state.pose,
        approach_cell(goal, map, passable),
        passable,
    )
}

/// `goal` itself if it may be free, else the nearest cell that may be.
fn approach_cell(goal: Cell, map: &GridMap, passable: impl Fn(Cell) -> bool) -> Cell {
    if passable(goal) {
        return goal;
    }
    let mut best: Option<(i64, Cell)> = None;
    for y in 0..map.height() as i32 {
        for x in 0..map.width() as i32 {
            let c = Cell::new(x, y);
            if passable(c) {
                let (dx, dy) = (i64::from(x - goal.x), i64::from(y - goal.y));
                let d = dx * dx + dy * dy;
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
        }
    }
    best.map_or(goal, |(_, c)| c)
}

/// One step of autonomous navigation toward the believed goal.
pub fn nav_step(state: &AgentState, map: &GridMap, cfg: &AgentConfig) -> Action {
    let b = &state.belief;
    let passable = |c: Cell| !state.known.contains(c) || map.is_free(c);
    let target = approach_cell(b.goal_cell, map, passable);
    if b.anchored
        && state.pose.cell().manhattan(target) <= state.stop_radius
        && b.confidence >= cfg.c_stop
    {
        return Action::Stop;
    }
    match optimistic_plan(state, map, b.goal_cell) {
        Some(plan) if !plan.is_empty() => plan[0],
        // at the believed goal without enough confidence, or no route: rescan
        _ => Action::TurnLeft,
    }
}

pub fn forecast_trajectory(
    state: &AgentState,
    map: &GridMap,
    l: usize,
) -> Result<Vec<Action>, AgentError> {
    if state.belief.confidence <= 0.0 {
        return Err(AgentError::DegenerateBelief);
    }
    let mut plan = optimistic_plan(state, map, state.belief.goal_cell).unwrap_or_default();
    plan.truncate(l);
    Ok(plan)
}

/// Encodes the forecast as a question; a landmark at the forecast endpoint is named.
pub fn compose_question(
    forecast: &[Action],
    state: &AgentState,
    map: &GridMap,
) -> Result<Message, AgentError> {
    let mut msg = encode_pathlet_scaled(forecast, state.pose, Kind::Question, map.cell_spacing())?;
    let end = dead_reckon(state.pose, forecast).cell();
    if let Some(id) = map.landmark_at(end) {
        msg.clauses.push(Clause::Landmark(id.to_string()));
    }
    Ok(msg)
}

/// The primitive actions an instruction asks for, capped at `nu`.
pub fn instruction_actions(msg: &Message, nu: usize) -> Result<Vec<Action>, AgentError> {
    let mut actions = decode_actions(msg)?;
    actions.truncate(nu);
    Ok(actions)
}

/// Executes an instruction (at most `nu` actions) from `pose`. Blocked moves
/// still consume a step. Returns the executed actions and the final pose.
pub fn follow_instruction(
    msg: &Message,
    pose: Pose,
    map: &GridMap,
    nu: usize,
) -> Result<(Vec<Action>, Pose), AgentError> {
    let actions = instruction_actions(msg, nu)?;
    let mut p = pose;
    let mut done = Vec::with_capacity(actions.len());
    for a in actions {
        let out = step(p, a, map);
        p = out.pose;
        done.push(a);
        if out.terminated {
            break;
        }
    }
    Ok((done, p))
}

pub fn parse_instruction(text: &str) -> Result<Message, AgentError> {
    let msg = crate::lang::parse(text)?;
    if msg.kind != Kind::Instruction {
        return Err(CodecError::WrongKind {
            expected: Kind::Instruction,
            found: msg.kind,
        }
        .into());
    }
    Ok(msg)
}

/// Folds oracle guidance into the belief. `start` is where the instruction was
/// received and `actions` what it asked for. An instruction shorter than the
/// span ends at the goal. Otherwise the goal is re-aimed along the pathlet's
/// displacement when the belief is weak, contradicted, or points elsewhere.
pub fn absorb_guidance(
    belief: &Belief,
    start: Pose,
    actions: &[Action],
    nu: usize,
    contradicted: bool,
    map: &GridMap,
    cfg: &AgentConfig,
) -> Belief {
    let mut b = *belief;
    let end = dead_reckon(start, actions).cell();
    if actions.len() < nu && map.is_free(end) {
        b.goal_cell = end;
        b.confidence = b.confidence.max(cfg.c_revealed);
        b.anchored = true;
        return b;
    }
    let Some(path_bearing) = relative_bearing(start, end) else {
        return b;
    };
    let believed = relative_bearing(start, b.goal_cell);
    let disagrees = believed.is_none_or(|t| angular_difference(t, path_bearing) > 45.0);
    if contradicted || b.confidence < cfg.c_guided || disagrees {
        let walked = f64::from(start.cell().manhattan(end));
        let d = f64::from(start.cell().manhattan(b.goal_cell)).max(walked + 1.0);
        b.goal_cell = project(start, path_bearing, d, map);
        b.confidence = if contradicted {
            cfg.c_guided
        } else {
            b.confidence.max(cfg.c_guided)
        };
        b.anchored = false;
    }
    b
}

/// Belief after a "yes": the forecast direction is confirmed.
pub fn confirm(belief: &Belief, cfg: &AgentConfig) -> Belief {
    Belief {
        confidence: belief.confidence + cfg.alpha * (1.0 - belief.confidence),
        ..*belief
    }
}

/// Belief after a bare "no" with no guidance attached.
pub fn refute(belief: &Belief, cfg: &AgentConfig) -> Belief {
    Belief {
        confidence: belief.confidence * (1.0 - cfg.alpha),
        ..*belief
    }
}
