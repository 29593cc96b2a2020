//! The top-level decision layer: penalties, the option selector, the episode
//! runner, selector training and a tabular solver for small option models.

pub mod log;
pub mod penalty;
pub mod runner;
pub mod selector;
pub mod tabular;
pub mod trainer;

pub use log::{
    recompute_penalty, DecisionRecord, EpisodeLog, InteractionEvent, InteractionKind, Outcome,
    StepRecord,
};
pub use penalty::{step_reward, zeta_f, zeta_l, zeta_ques, ParamError, PenaltyParams};
pub use runner::{
    run_episode, run_episode_observed, BranchSetup, EpisodeObserver, Policy, RunConfig, RunError,
};
pub use selector::{
    baseline_selector, features, select_option, softmax, BaselineKind, Features, Mask, OptionKind,
    SelectorParams, NUM_FEATURES, RANDOM_EARLY_STEPS,
};
pub use tabular::{
    estimate_model, monte_carlo_value, solve_tabular, Corridor, OptionModel, OptionOutcome,
    OptionSimulator, Solution, TabularError, TabularModel,
};
pub use trainer::{
    rollout, train_selector, BaselineMode, IterationStats, TrainError, TrainResult, TrainerConfig,
};
