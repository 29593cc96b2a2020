//! Interaction penalties and the navigation step reward.
//!
//! Penalties are negative numbers added to the return.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyParams {
    pub r_neg: f64,
    pub r_f: f64,
    /// Steps an interaction option spans.
    pub nu: u32,
    /// Window of the frequent-query penalty.
    pub tau: u32,
    /// Soft budget of direct queries.
    pub k: u32,
    /// Soft budget of wrong questions.
    pub k_prime: u32,
    pub eta: u32,
    /// Weight of the question penalty when the answer is "yes".
    pub delta_ques: f64,
    pub tau_ques: u32,
    /// Hard cap on direct queries plus wrong questions per episode.
    pub budget: u32,
    pub gamma: f64,
    pub step_cost: f64,
    pub success_bonus: f64,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        PenaltyParams {
            r_neg: -0.6,
            r_f: -0.5,
            nu: 4,
            tau: 4,
            k: 2,
            k_prime: 1,
            eta: 3,
            delta_ques: 0.0,
            tau_ques: 4,
            budget: 2,
            gamma: 0.99,
            step_cost: 0.01,
            success_bonus: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("k + k_prime must equal eta ({k} + {k_prime} != {eta})")]
    Eta { k: u32, k_prime: u32, eta: u32 },
    #[error("delta_ques must lie in [0, 1], got {0}")]
    Delta(f64),
    #[error("r_neg and r_f must be negative")]
    Sign,
    #[error("gamma must lie in [0, 1], got {0}")]
    Gamma(f64),
    #[error("nu must be at least 1")]
    Nu,
}

impl PenaltyParams {
    /// `delta_ques = 1` is accepted so the ablation grid can include it.
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.k + self.k_prime != self.eta {
            return Err(ParamError::Eta {
                k: self.k,
                k_prime: self.k_prime,
                eta: self.eta,
            });
        }
        if !(0.0..=1.0).contains(&self.delta_ques) {
            return Err(ParamError::Delta(self.delta_ques));
        }
        if !(self.r_neg < 0.0 && self.r_f < 0.0) {
            return Err(ParamError::Sign);
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ParamError::Gamma(self.gamma));
        }
        if self.nu == 0 {
            return Err(ParamError::Nu);
        }
        Ok(())
    }
}

/// Penalty for the `k`-th direct query against soft budget `k_budget`.
pub fn zeta_l(k: u32, k_budget: u32, p: &PenaltyParams) -> f64 {
    if k < k_budget {
        f64::from(k) * (p.r_neg + (-f64::from(p.nu)).exp()) / f64::from(p.nu)
    } else {
        p.r_neg + (-f64::from(k)).exp()
    }
}

/// Frequency penalty `r_f / j` inside a window of `tau` steps; `j = 0` is clamped to `r_f`.
pub fn zeta_f(j: u32, tau: u32, r_f: f64) -> f64 {
    match j {
        0 => r_f,
        j if j <= tau => r_f / f64::from(j),
        _ => 0.0,
    }
}

/// Penalty for the `m`-th question; `j_q` counts steps since the previous question.
pub fn zeta_ques(m: u32, correct: bool, j_q: u32, p: &PenaltyParams) -> f64 {
    let delta = if correct { p.delta_ques } else { 1.0 };
    zeta_l(m, p.k_prime, p) * delta + zeta_f(j_q, p.tau_ques, p.r_f)
}

/// Progress in cells minus the step cost, plus the bonus for a successful Stop.
pub fn step_reward(
    prev_dtg: f64,
    new_dtg: f64,
    action: Action,
    success_now: bool,
    p: &PenaltyParams,
) -> f64 {
    let bonus = if action == Action::Stop && success_now {
        p.success_bonus
    } else {
        0.0
    };
    (prev_dtg - new_dtg) - p.step_cost + bonus
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn p() -> PenaltyParams {
        PenaltyParams::default()
    }

    #[test]
    fn zeta_l_examples() {
        assert_eq!(zeta_l(0, 2, &p()), 0.0);
        assert_abs_diff_eq!(
            zeta_l(1, 2, &p()),
            (-0.6 + (-4f64).exp()) / 4.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(zeta_l(1, 2, &p()), -0.14542, epsilon = 1e-5);
        assert_abs_diff_eq!(zeta_l(3, 2, &p()), -0.55021, epsilon = 1e-5);
    }

    #[test]
    fn zeta_f_examples() {
        assert_eq!(zeta_f(1, 4, -0.5), -0.5);
        assert_eq!(zeta_f(2, 4, -0.5), -0.25);
        assert_eq!(zeta_f(5, 4, -0.5), 0.0);
        assert_eq!(zeta_f(0, 4, -0.5), -0.5);
    }

    #[test]
    fn zeta_ques_examples() {
        assert_eq!(zeta_ques(1, true, 5, &p()), 0.0);
        assert_abs_diff_eq!(zeta_ques(1, false, 5, &p()), -0.23212, epsilon = 1e-5);
        assert_abs_diff_eq!(zeta_ques(1, false, 1, &p()), -0.73212, epsilon = 1e-5);
        let half = PenaltyParams {
            delta_ques: 0.5,
            ..p()
        };
        assert_abs_diff_eq!(
            zeta_ques(1, true, 5, &half),
            0.5 * (-0.6 + (-1f64).exp()),
            epsilon = 1e-15
        );
    }

    #[test]
    fn step_reward_examples() {
        assert_abs_diff_eq!(
            step_reward(5.0, 4.0, Action::MoveForward, false, &p()),
            0.99,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            step_reward(5.0, 5.0, Action::TurnLeft, false, &p()),
            -0.01,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            step_reward(1.0, 1.0, Action::Stop, true, &p()),
            9.99,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            step_reward(1.0, 1.0, Action::Stop, false, &p()),
            -0.01,
            epsilon = 1e-12
        );
    }

    #[test]
    fn validation() {
        assert!(p().validate().is_ok());
        assert!(PenaltyParams { k: 3, ..p() }.validate().is_err());
        assert!(PenaltyParams {
            delta_ques: 1.0,
            ..p()
        }
        .validate()
        .is_ok());
        assert!(PenaltyParams {
            delta_ques: 1.5,
            ..p()
        }
        .validate()
        .is_err());
        assert!(PenaltyParams { r_f: 0.5, ..p() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn zeta_l_is_negative_and_tends_to_r_neg(k in 1u32..60, kb in 0u32..6) {
            let z = zeta_l(k, kb, &p());
            prop_assert!(z < 0.0);
            if k >= kb {
                prop_assert!((z - p().r_neg).abs() < (-f64::from(k)).exp() + 1e-15);
            }
        }

        #[test]
        fn correct_questions_are_free_only_without_delta(m in 0u32..10, j in 5u32..100, delta in 0.0f64..1.0) {
            let q = PenaltyParams { delta_ques: delta, ..p() };
            let z = zeta_ques(m, true, j, &q);
            if delta == 0.0 || m == 0 { prop_assert_eq!(z, 0.0) } else { prop_assert!(z < 0.0) }
        }
    }
}
