use super::{ExperimentConfig, HarnessError, SelectorSource, Suite};
use crate::control::{
    rollout, train_selector, BranchSetup, EpisodeLog, IterationStats, Policy, RunConfig,
    SelectorParams, TrainResult, TrainerConfig,
};
use crate::env::World;
use crate::metrics::{compute_metrics, MetricsReport};
use crate::oracle::{OracleConfig, OracleMode};
use crate::rng::mix;

/// Test-split logs and metrics of one (setup, seed) pair.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub tag: String,
    pub seed: u64,
    pub logs: Vec<EpisodeLog>,
    pub report: MetricsReport,
}

/// Output of one experiment command.
#[derive(Debug, Clone, Default)]
pub struct Experiment {
    pub evaluations: Vec<Evaluation>,
    /// Weights and learning curve per (tag, seed) that was trained.
    pub trained: Vec<(String, u64, TrainResult)>,
}

impl Experiment {
    /// Evaluations with this tag, in seed order.
    pub fn tagged<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a Evaluation> + 'a {
        self.evaluations.iter().filter(move |e| e.tag == tag)
    }

    pub fn mean_sr(&self, tag: &str) -> Option<f64> {
        let v: Vec<f64> = self.tagged(tag).map(|e| e.report.sr).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Humans cannot be rolled out in batch; training falls back to the scripted oracle.
fn training_oracle(cfg: &OracleConfig) -> OracleConfig {
    if cfg.mode == OracleMode::Human {
        OracleConfig {
            mode: OracleMode::Scripted,
            ..*cfg
        }
    } else {
        *cfg
    }
}

/// The policy for one seed, training it when the config asks for a learned
/// selector without a weights file.
pub fn resolve_policy(
    cfg: &ExperimentConfig,
    suite: &Suite,
    run_cfg: &RunConfig,
    seed: u64,
) -> Result<(Policy, Option<TrainResult>), HarnessError> {
    if let Some(kind) = cfg.selector.baseline() {
        return Ok((Policy::Baseline(kind), None));
    }
    match cfg.selector {
        SelectorSource::NavOnly => Ok((Policy::NavOnly, None)),
        _ => {
            if let Some(w) = cfg.load_weights()? {
                return Ok((Policy::Learned(w), None));
            }
            let tc = TrainerConfig {
                seed: mix(cfg.trainer.seed, seed),
                ..cfg.trainer
            };
            let res = train_selector(
                &suite.train,
                &SelectorParams::default(),
                &training_oracle(&cfg.oracle),
                run_cfg,
                &tc,
            )?;
            log::info!(
                "seed {seed}: trained selector, final batch SR {:.3}",
                res.curve.last().map_or(0.0, |c| c.success_rate)
            );
            Ok((Policy::Learned(res.params.clone()), Some(res)))
        }
    }
}

/// Rolls `policy` out over the test split; episode `i` runs with seed `mix(seed, i)`.
pub fn evaluate(
    test: &[World],
    policy: &Policy,
    oracle: &OracleConfig,
    run_cfg: &RunConfig,
    seed: u64,
    tag: impl Into<String>,
) -> Result<Evaluation, HarnessError> {
    let worlds: Vec<&World> = test.iter().collect();
    let seeds: Vec<u64> = (0..worlds.len() as u64).map(|i| mix(seed, i)).collect();
    let logs = rollout(&worlds, &seeds, policy, oracle, run_cfg)?;
    let report = compute_metrics(&logs, &worlds)?;
    Ok(Evaluation {
        tag: tag.into(),
        seed,
        logs,
        report,
    })
}

fn selector_tag(cfg: &ExperimentConfig) -> String {
    serde_json::to_value(cfg.selector)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn run_per_seed(
    cfg: &ExperimentConfig,
    suite: &Suite,
    run_cfg: &RunConfig,
    tag: &str,
    out: &mut Experiment,
) -> Result<(), HarnessError> {
    for &seed in &cfg.seeds {
        let (policy, trained) = resolve_policy(cfg, suite, run_cfg, seed)?;
        out.evaluations.push(evaluate(
            &suite.test,
            &policy,
            &cfg.oracle,
            run_cfg,
            seed,
            tag,
        )?);
        if let Some(t) = trained {
            out.trained.push((tag.to_string(), seed, t));
        }
    }
    Ok(())
}

/// Evaluates the configured selector once per seed.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    let suite = cfg.suite()?;
    let mut out = Experiment::default();
    run_per_seed(cfg, &suite, &cfg.run_config(), &selector_tag(cfg), &mut out)?;
    Ok(out)
}

/// Trains a selector per seed (ignoring `weights` and `selector`) and evaluates it.
pub fn train(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    let cfg = ExperimentConfig {
        selector: SelectorSource::Trained,
        weights: None,
        ..cfg.clone()
    };
    let suite = cfg.suite()?;
    let mut out = Experiment::default();
    run_per_seed(&cfg, &suite, &cfg.run_config(), "trained", &mut out)?;
    Ok(out)
}

pub fn delta_tag(delta: f64) -> String {
    format!("delta={delta}")
}

/// Retrains and evaluates under each question-penalty weight.
pub fn ablate_delta(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    let suite = cfg.suite()?;
    let mut out = Experiment::default();
    for &d in &cfg.deltas {
        let c = ExperimentConfig {
            penalty: crate::control::PenaltyParams {
                delta_ques: d,
                ..cfg.penalty
            },
            ..cfg.clone()
        };
        run_per_seed(&c, &suite, &c.run_config(), &delta_tag(d), &mut out)?;
    }
    Ok(out)
}

pub const FEEDBACK_LANGUAGE: &str = "feedback=language";
pub const FEEDBACK_GT_ACTIONS: &str = "feedback=gt-actions";

/// Every branch setup, plus the full setup with ground-truth action feedback
/// in place of language instructions.
pub fn ablate_branch(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    let suite = cfg.suite()?;
    let mut out = Experiment::default();
    for b in BranchSetup::ALL {
        let c = ExperimentConfig {
            branch: b,
            ..cfg.clone()
        };
        run_per_seed(&c, &suite, &c.run_config(), b.name(), &mut out)?;
    }
    let c = ExperimentConfig {
        branch: BranchSetup::ThreeBranch,
        ..cfg.clone()
    };
    let run_cfg = c.run_config();
    for &seed in &c.seeds {
        // reuse the full setup's selector for this seed
        let policy = match out
            .trained
            .iter()
            .find(|(t, s, _)| t == BranchSetup::ThreeBranch.name() && *s == seed)
        {
            Some((_, _, r)) => Policy::Learned(r.params.clone()),
            None => resolve_policy(&c, &suite, &run_cfg, seed)?.0,
        };
        let lang = OracleConfig {
            mode: OracleMode::Scripted,
            ..c.oracle
        };
        let gt = OracleConfig {
            mode: OracleMode::GTActions,
            ..c.oracle
        };
        out.evaluations.push(evaluate(
            &suite.test,
            &policy,
            &lang,
            &run_cfg,
            seed,
            FEEDBACK_LANGUAGE,
        )?);
        out.evaluations.push(evaluate(
            &suite.test,
            &policy,
            &gt,
            &run_cfg,
            seed,
            FEEDBACK_GT_ACTIONS,
        )?);
    }
    Ok(out)
}

pub fn limit_tag(budget: u32) -> String {
    format!("B={budget}")
}

/// One selector per seed, evaluated under each hard budget.
pub fn sweep_limit(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    let suite = cfg.suite()?;
    let run_cfg = cfg.run_config();
    let mut out = Experiment::default();
    for &seed in &cfg.seeds {
        let (policy, trained) = resolve_policy(cfg, &suite, &run_cfg, seed)?;
        for &b in &cfg.limits {
            let rc = RunConfig {
                penalty: crate::control::PenaltyParams {
                    budget: b,
                    ..run_cfg.penalty
                },
                ..run_cfg.clone()
            };
            out.evaluations.push(evaluate(
                &suite.test,
                &policy,
                &cfg.oracle,
                &rc,
                seed,
                limit_tag(b),
            )?);
        }
        if let Some(t) = trained {
            out.trained.push(("trained".to_string(), seed, t));
        }
    }
    Ok(out)
}

/// Learning curve rows: `tag,seed,iteration,mean_return,success_rate,decisions`.
pub fn curve_csv(trained: &[(String, u64, TrainResult)]) -> String {
    let mut out = String::from("tag,seed,iteration,mean_return,success_rate,decisions\n");
    for (tag, seed, r) in trained {
        for IterationStats {
            iteration,
            mean_return,
            success_rate,
            decisions,
        } in &r.curve
        {
            out.push_str(&format!(
                "{tag},{seed},{iteration},{mean_return:.6},{success_rate:.6},{decisions}\n"
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            test_episodes_per_map: 2,
            train_episodes_per_map: 2,
            seeds: vec![3],
            trainer: TrainerConfig {
                iterations: 2,
                batch_size: 4,
                ..TrainerConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn benchmark_is_reproducible() {
        let cfg = ExperimentConfig {
            selector: SelectorSource::Uniform,
            ..small()
        };
        let (a, b) = (run_benchmark(&cfg).unwrap(), run_benchmark(&cfg).unwrap());
        assert_eq!(a.evaluations.len(), 1);
        assert_eq!(a.evaluations[0].tag, "uniform");
        assert_eq!(a.evaluations[0].report, b.evaluations[0].report);
        assert!(a.trained.is_empty());
    }

    #[test]
    fn delta_ablation_has_a_row_per_delta() {
        let out = ablate_delta(&small()).unwrap();
        let tags: Vec<&str> = out.evaluations.iter().map(|e| e.tag.as_str()).collect();
        assert_eq!(tags, vec!["delta=0", "delta=0.5", "delta=1"]);
        assert_eq!(out.trained.len(), 3);
    }

    #[test]
    fn weak_branch_gets_no_instructions() {
        let cfg = ExperimentConfig {
            selector: SelectorSource::Uniform,
            ..small()
        };
        let out = ablate_branch(&cfg).unwrap();
        let weak: Vec<&Evaluation> = out.tagged(BranchSetup::TwoBranchQuesWeak.name()).collect();
        assert_eq!(weak.len(), 1);
        assert!(weak[0].logs.iter().all(|l| l.instructions() == 0));
        assert!(out.mean_sr(FEEDBACK_GT_ACTIONS).is_some());
    }

    #[test]
    fn sweep_evaluates_each_limit() {
        let cfg = ExperimentConfig {
            selector: SelectorSource::ModelUncertainty,
            limits: vec![0, 2],
            ..small()
        };
        let out = sweep_limit(&cfg).unwrap();
        let zero = out.tagged("B=0").next().unwrap();
        assert!(zero.logs.iter().all(|l| l.events.is_empty()));
        assert!(out
            .tagged("B=2")
            .next()
            .unwrap()
            .logs
            .iter()
            .all(|l| l.within_budget()));
    }
}
