//! Value iteration over options for small, enumerable problems.
//!
//! Each option's reward and multi-time transition
//! `Z(s' | s, o) = sum_j gamma^j P(s', j | s, o)` are estimated by Monte Carlo
//! from a simulator, then backed up until the max residual is below tolerance.

use rand::Rng as _;
use thiserror::Error;

use super::penalty::{step_reward, zeta_l, PenaltyParams};
use crate::env::{step, Action, Cell, GridMap, Heading, Pose};
use crate::geodesy::DistanceField;
use crate::rng::Rng;

/// One sampled execution of an option.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionOutcome {
    /// State the option ended in; `None` if the episode terminated.
    pub next: Option<usize>,
    /// Primitive steps taken.
    pub steps: u32,
    /// Rewards collected, discounted to the option's first step.
    pub reward: f64,
}

/// A simulator exposing enumerated states and options.
pub trait OptionSimulator {
    fn num_states(&self) -> usize;
    fn num_options(&self) -> usize;
    /// Options available in state `s`; must be non-empty.
    fn available(&self, s: usize) -> Vec<usize>;
    fn sample(&self, s: usize, o: usize, gamma: f64, rng: &mut Rng) -> OptionOutcome;
}

/// Estimated reward and multi-time transition of one (state, option) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionModel {
    pub reward: f64,
    /// `(s', Z(s' | s, o))`, sorted by state.
    pub transitions: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    /// `models[s]` holds `(option, model)` for each available option.
    pub models: Vec<Vec<(usize, OptionModel)>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TabularError {
    #[error("value iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: u32, residual: f64 },
    #[error("too many states: {0}")]
    TooManyStates(usize),
    #[error("state {0} has no options")]
    NoOptions(usize),
}

pub const MAX_STATES: usize = 10_000;

pub fn estimate_model<S: OptionSimulator>(
    sim: &S,
    gamma: f64,
    samples: u32,
    rng: &mut Rng,
) -> Result<TabularModel, TabularError> {
    let n = sim.num_states();
    if n > MAX_STATES {
        return Err(TabularError::TooManyStates(n));
    }
    let mut models = Vec::with_capacity(n);
    for s in 0..n {
        let opts = sim.available(s);
        if opts.is_empty() {
            return Err(TabularError::NoOptions(s));
        }
        let mut row = Vec::with_capacity(opts.len());
        for o in opts {
            let mut reward = 0.0;
            let mut z = vec![0.0; n];
            for _ in 0..samples {
                let out = sim.sample(s, o, gamma, rng);
                reward += out.reward;
                if let Some(next) = out.next {
                    z[next] += gamma.powi(out.steps as i32);
                }
            }
            let k = f64::from(samples.max(1));
            let transitions = z
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(i, &v)| (i, v / k))
                .collect();
            row.push((
                o,
                OptionModel {
                    reward: reward / k,
                    transitions,
                },
            ));
        }
        models.push(row);
    }
    Ok(TabularModel { models })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    /// Greedy option per state.
    pub policy: Vec<usize>,
    pub residual: f64,
    pub iterations: u32,
}

fn backup(m: &OptionModel, v: &[f64]) -> f64 {
    m.reward + m.transitions.iter().map(|&(s, z)| z * v[s]).sum::<f64>()
}

pub fn solve_tabular(
    model: &TabularModel,
    tol: f64,
    max_iterations: u32,
) -> Result<Solution, TabularError> {
    let n = model.models.len();
    let mut v = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iterations {
        let next: Vec<f64> = model
            .models
            .iter()
            .map(|row| {
                row.iter()
                    .map(|(_, m)| backup(m, &v))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        residual = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual < tol {
            let policy = model
                .models
                .iter()
                .map(|row| {
                    let mut best = (f64::NEG_INFINITY, row[0].0);
                    for (o, m) in row {
                        let q = backup(m, &v);
                        if q > best.0 {
                            best = (q, *o);
                        }
                    }
                    best.1
                })
                .collect();
            return Ok(Solution {
                values: v,
                policy,
                residual,
                iterations: it,
            });
        }
    }
    Err(TabularError::NonConvergence {
        iterations: max_iterations,
        residual,
    })
}

/// Mean discounted return of following `policy` from `start`, over `episodes` rollouts.
pub fn monte_carlo_value<S: OptionSimulator>(
    sim: &S,
    policy: &[usize],
    start: usize,
    gamma: f64,
    episodes: u32,
    max_options: u32,
    rng: &mut Rng,
) -> f64 {
    let mut total = 0.0;
    for _ in 0..episodes {
        let (mut s, mut discount, mut ret) = (start, 1.0, 0.0);
        for _ in 0..max_options {
            let out = sim.sample(s, policy[s], gamma, rng);
            ret += discount * out.reward;
            discount *= gamma.powi(out.steps as i32);
            match out.next {
                Some(n) => s = n,
                None => break,
            }
        }
        total += ret;
    }
    total / f64::from(episodes.max(1))
}

/// Options of the corridor model.
pub const OPT_G: usize = 0;
pub const OPT_STOP: usize = 1;
pub const OPT_L: usize = 2;

/// An east-facing corridor: states are cells, the goal sits at the east end.
/// `G` moves one cell east (blocked with probability `slip`), `Stop` ends the
/// episode, `L` follows an instruction of up to `nu` forward moves toward the
/// goal that is garbled with probability `p_noise` (the agent then only turns
/// on the spot twice).
#[derive(Debug, Clone)]
pub struct Corridor {
    pub map: GridMap,
    pub goal: Cell,
    pub radius: u32,
    pub slip: f64,
    pub p_noise: f64,
    pub with_query: bool,
    pub params: PenaltyParams,
    field: DistanceField,
}

impl Corridor {
    pub fn new(
        length: usize,
        radius: u32,
        slip: f64,
        p_noise: f64,
        with_query: bool,
        params: PenaltyParams,
    ) -> Self {
        let map = GridMap::open(length, 1);
        let goal = Cell::new(length as i32 - 1, 0);
        let field = DistanceField::from_cell(&map, goal);
        Corridor {
            map,
            goal,
            radius,
            slip,
            p_noise,
            with_query,
            params,
            field,
        }
    }

    fn dtg(&self, x: usize) -> f64 {
        f64::from(self.field.get(Cell::new(x as i32, 0)).unwrap())
    }

    fn pose(x: usize) -> Pose {
        Pose::new(x as i32, 0, Heading::East)
    }

    /// Applies `actions`; returns (final cell, discounted reward, steps).
    fn play(
        &self,
        x: usize,
        actions: &[Action],
        gamma: f64,
        first_penalty: f64,
    ) -> (usize, f64, u32) {
        let mut pose = Self::pose(x);
        let mut ret = first_penalty;
        for (i, &a) in actions.iter().enumerate() {
            let prev = self.dtg(pose.x as usize);
            pose = step(pose, a, &self.map).pose;
            let r = step_reward(prev, self.dtg(pose.x as usize), a, false, &self.params);
            ret += gamma.powi(i as i32) * r;
        }
        (pose.x as usize, ret, actions.len() as u32)
    }
}

impl OptionSimulator for Corridor {
    fn num_states(&self) -> usize {
        self.map.width()
    }

    fn num_options(&self) -> usize {
        if self.with_query {
            3
        } else {
            2
        }
    }

    fn available(&self, _s: usize) -> Vec<usize> {
        (0..self.num_options()).collect()
    }

    fn sample(&self, s: usize, o: usize, gamma: f64, rng: &mut Rng) -> OptionOutcome {
        match o {
            OPT_STOP => {
                let success = self.dtg(s) <= f64::from(self.radius);
                let r = step_reward(
                    self.dtg(s),
                    self.dtg(s),
                    Action::Stop,
                    success,
                    &self.params,
                );
                OptionOutcome {
                    next: None,
                    steps: 1,
                    reward: r,
                }
            }
            OPT_G => {
                let a = if rng.random_bool(self.slip) {
                    Action::TurnLeft
                } else {
                    Action::MoveForward
                };
                // a slipped move is a wasted step that leaves the agent facing east
                let (next, reward, steps) = match a {
                    Action::MoveForward => self.play(s, &[a], gamma, 0.0),
                    _ => (s, -self.params.step_cost, 1),
                };
                OptionOutcome {
                    next: Some(next),
                    steps,
                    reward,
                }
            }
            _ => {
                let penalty = zeta_l(1, self.params.k, &self.params);
                let n = (self.dtg(s) as usize).min(self.params.nu as usize);
                let actions = if n == 0 || rng.random_bool(self.p_noise) {
                    vec![Action::TurnLeft, Action::TurnRight]
                } else {
                    vec![Action::MoveForward; n]
                };
                let (next, reward, steps) = self.play(s, &actions, gamma, penalty);
                OptionOutcome {
                    next: Some(next),
                    steps,
                    reward,
                }
            }
        }
    }
}
