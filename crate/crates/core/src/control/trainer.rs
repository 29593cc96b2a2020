//! Clipped policy-gradient training of the selector weights. Option policies
//! stay fixed; only the 3 x 6 linear softmax is learned.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::log::EpisodeLog;
use super::runner::{run_episode, Policy, RunConfig, RunError};
use super::selector::{Features, Mask, OptionKind, SelectorParams, NUM_FEATURES};
use crate::env::World;
use crate::oracle::{Oracle, OracleConfig};
use crate::rng::{mix, stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub iterations: u32,
    /// Episodes rolled out per iteration.
    pub batch_size: usize,
    /// Gradient passes over each batch.
    pub epochs: u32,
    pub learning_rate: f64,
    pub clip_eps: f64,
    pub gamma: f64,
    pub baseline: BaselineMode,
    /// Weight of the old value in the moving-average baseline.
    pub baseline_decay: f64,
    /// Step size of the linear critic.
    pub critic_rate: f64,
    pub seed: u64,
}

/// What is subtracted from decision returns to form advantages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    /// Exponential moving average of batch-mean returns.
    MovingAverage,
    /// Linear value estimate over the selector features.
    LinearCritic,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            iterations: 200,
            batch_size: 32,
            epochs: 4,
            learning_rate: 0.5,
            clip_eps: 0.2,
            gamma: 0.99,
            baseline: BaselineMode::MovingAverage,
            baseline_decay: 0.9,
            critic_rate: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("no training episodes")]
    EmptyTrainingSet,
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u32,
    pub mean_return: f64,
    pub success_rate: f64,
    pub decisions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub params: SelectorParams,
    pub curve: Vec<IterationStats>,
}

/// One selector decision with its behaviour probabilities and advantage.
#[derive(Debug, Clone, Copy)]
struct Sample {
    x: Features,
    mask: Mask,
    option: OptionKind,
    p_old: f64,
    advantage: f64,
}

/// Rolls out `worlds[i]` with seed `seeds[i]` in parallel; results keep input order.
pub fn rollout(
    worlds: &[&World],
    seeds: &[u64],
    policy: &Policy,
    oracle_cfg: &OracleConfig,
    run_cfg: &RunConfig,
) -> Result<Vec<EpisodeLog>, RunError> {
    worlds
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(w, &s)| run_episode(w, policy, &mut Oracle::new(*oracle_cfg), run_cfg, s))
        .collect()
}

/// Gradient of the clipped surrogate, summed over `samples` in order.
fn surrogate_gradient(
    w: &SelectorParams,
    samples: &[Sample],
    eps: f64,
) -> [[f64; NUM_FEATURES]; 3] {
    let mut grad = [[0.0; NUM_FEATURES]; 3];
    for s in samples {
        let p = w.probabilities(&s.x, s.mask);
        let a = s.option.index();
        let ratio = p[a] / s.p_old;
        let clipped =
            (s.advantage > 0.0 && ratio > 1.0 + eps) || (s.advantage < 0.0 && ratio < 1.0 - eps);
        if clipped {
            continue;
        }
        // d ratio / d w_o = ratio * (1[o = a] - p_o) x
        for o in OptionKind::ALL {
            if !s.mask.allows(o) {
                continue;
            }
            let coef = s.advantage * ratio * (f64::from(u8::from(o.index() == a)) - p[o.index()]);
            for (g, xi) in grad[o.index()].iter_mut().zip(&s.x) {
                *g += coef * xi;
            }
        }
    }
    grad
}

pub fn train_selector(
    train: &[World],
    init: &SelectorParams,
    oracle_cfg: &OracleConfig,
    run_cfg: &RunConfig,
    cfg: &TrainerConfig,
) -> Result<TrainResult, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut w = init.clone();
    let mut curve = Vec::with_capacity(cfg.iterations as usize);
    let mut rng = stream(cfg.seed, Stream::Trainer);
    let mut baseline: Option<f64> = None;
    let mut critic: Features = [0.0; NUM_FEATURES];
    for it in 0..cfg.iterations {
        let picks: Vec<&World> = (0..cfg.batch_size.max(1))
            .map(|_| &train[rng.random_range(0..train.len())])
            .collect();
        let seeds: Vec<u64> = (0..picks.len())
            .map(|i| mix(cfg.seed, (u64::from(it) << 20) | i as u64))
            .collect();
        let logs = rollout(
            &picks,
            &seeds,
            &Policy::Learned(w.clone()),
            oracle_cfg,
            run_cfg,
        )?;

        let mut samples = Vec::new();
        let mut returns = Vec::new();
        for log in &logs {
            let g = log.decision_returns(cfg.gamma);
            for (d, g) in log.decisions.iter().zip(g) {
                let p_old =
                    d.probs.expect("learned policy records probabilities")[d.option.index()];
                samples.push(Sample {
                    x: d.features,
                    mask: d.mask,
                    option: d.option,
                    p_old,
                    advantage: g,
                });
                returns.push(g);
            }
        }
        let n = logs.len() as f64;
        curve.push(IterationStats {
            iteration: it,
            mean_return: logs.iter().map(|l| l.total_return).sum::<f64>() / n,
            success_rate: logs.iter().filter(|l| l.outcome.success).count() as f64 / n,
            decisions: samples.len(),
        });
        if samples.is_empty() {
            continue;
        }
        let batch_mean = returns.iter().sum::<f64>() / returns.len() as f64;
        match cfg.baseline {
            BaselineMode::MovingAverage => {
                let b = *baseline.get_or_insert(batch_mean);
                for s in &mut samples {
                    s.advantage -= b;
                }
                baseline = Some(cfg.baseline_decay * b + (1.0 - cfg.baseline_decay) * batch_mean);
            }
            BaselineMode::LinearCritic => {
                if it == 0 {
                    critic[NUM_FEATURES - 1] = batch_mean;
                }
                let value =
                    |v: &Features, x: &Features| v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                for s in &mut samples {
                    s.advantage -= value(&critic, &s.x);
                }
                // one least-squares gradient step, summed in sample order
                let mut grad = [0.0; NUM_FEATURES];
                for (s, g) in samples.iter().zip(&returns) {
                    let err = g - value(&critic, &s.x);
                    for (gi, xi) in grad.iter_mut().zip(&s.x) {
                        *gi += err * xi;
                    }
                }
                for (c, g) in critic.iter_mut().zip(grad) {
                    *c += cfg.critic_rate * g / samples.len() as f64;
                }
            }
        }
        // forced decisions carry no gradient
        samples.retain(|s| s.mask.allows(OptionKind::L) || s.mask.allows(OptionKind::Ques));
        if samples.is_empty() {
            continue;
        }
        let mean_adv = samples.iter().map(|s| s.advantage).sum::<f64>() / samples.len() as f64;
        let var = samples
            .iter()
            .map(|s| (s.advantage - mean_adv).powi(2))
            .sum::<f64>()
            / samples.len() as f64;
        let sd = var.sqrt().max(1e-8);
        for s in &mut samples {
            s.advantage = (s.advantage - mean_adv) / sd;
        }
        let scale = cfg.learning_rate / samples.len() as f64;
        for _ in 0..cfg.epochs {
            let g = surrogate_gradient(&w, &samples, cfg.clip_eps);
            for (row, grow) in w.weights.iter_mut().zip(&g) {
                for (wi, gi) in row.iter_mut().zip(grow) {
                    *wi += scale * gi;
                }
            }
        }
        debug_assert!(w.is_finite());
    }
    Ok(TrainResult { params: w, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_episode, load_map, EpisodeConfig};

    fn worlds() -> Vec<World> {
        let map = load_map("........\n..##....\n......#.\n.#......\n........").unwrap();
        let cfg = EpisodeConfig {
            horizon: 50,
            ..EpisodeConfig::default()
        };
        (0..6)
            .map(|s| World::new(map.clone(), generate_episode(&map, &cfg, s).unwrap()).unwrap())
            .collect()
    }

    #[test]
    fn empty_set_is_an_error() {
        let r = train_selector(
            &[],
            &SelectorParams::default(),
            &OracleConfig::default(),
            &RunConfig::default(),
            &TrainerConfig::default(),
        );
        assert_eq!(r, Err(TrainError::EmptyTrainingSet));
    }

    #[test]
    fn zero_iterations_leave_weights() {
        let init = SelectorParams {
            weights: [[0.1; 6], [0.2; 6], [0.3; 6]],
        };
        let cfg = TrainerConfig {
            iterations: 0,
            ..TrainerConfig::default()
        };
        let r = train_selector(
            &worlds(),
            &init,
            &OracleConfig::default(),
            &RunConfig::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(r.params, init);
        assert!(r.curve.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainerConfig {
            iterations: 3,
            batch_size: 8,
            ..TrainerConfig::default()
        };
        let run = || {
            train_selector(
                &worlds(),
                &SelectorParams::default(),
                &OracleConfig::default(),
                &RunConfig::default(),
                &cfg,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_ne!(a.params, SelectorParams::default());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let w = SelectorParams {
            weights: [
                [0.3, -0.2, 0.1, 0.0, 0.5, 0.2],
                [0.0, 0.4, -0.3, 0.2, 0.0, -0.1],
                [0.1; 6],
            ],
        };
        let x = [0.4, 1.0, 0.5, 1.0, 0.3, 1.0];
        let mask = Mask::default();
        let s = Sample {
            x,
            mask,
            option: OptionKind::Ques,
            p_old: w.probabilities(&x, mask)[2],
            advantage: 0.7,
        };
        let g = surrogate_gradient(&w, &[s], 0.2);
        let objective = |w: &SelectorParams| w.probabilities(&x, mask)[2] / s.p_old * s.advantage;
        let h = 1e-6;
        #[allow(clippy::needless_range_loop)]
        for o in 0..3 {
            for i in 0..NUM_FEATURES {
                let mut up = w.clone();
                up.weights[o][i] += h;
                let mut down = w.clone();
                down.weights[o][i] -= h;
                let fd = (objective(&up) - objective(&down)) / (2.0 * h);
                assert!((fd - g[o][i]).abs() < 1e-6, "{o} {i}: {fd} vs {}", g[o][i]);
            }
        }
    }
}
