//! The option selector: a linear softmax policy over three options, plus the
//! fixed triggering baselines it is compared against.

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    /// Autonomous audio-visual navigation, one step.
    G,
    /// Direct query for an instruction.
    L,
    /// Pose a question about the forecast trajectory.
    Ques,
}

impl OptionKind {
    pub const ALL: [OptionKind; 3] = [OptionKind::G, OptionKind::L, OptionKind::Ques];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OptionKind::G => "g",
            OptionKind::L => "l",
            OptionKind::Ques => "ques",
        }
    }
}

impl fmt::Display for OptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const NUM_FEATURES: usize = 6;
pub type Features = [f64; NUM_FEATURES];

/// `[confidence, audio active, min(j, tau) / tau, budget / B, believed distance / diagonal, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn features(
    confidence: f64,
    audio_active: bool,
    j: u32,
    tau: u32,
    budget: u32,
    cap: u32,
    belief_dist: f64,
    diagonal: f64,
) -> Features {
    let frac = |a: f64, b: f64| {
        if b > 0.0 {
            (a / b).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    [
        confidence,
        f64::from(u8::from(audio_active)),
        frac(f64::from(j.min(tau)), f64::from(tau)),
        frac(f64::from(budget), f64::from(cap)),
        frac(belief_dist, diagonal),
        1.0,
    ]
}

/// Options that may not be chosen at a decision point. `g` is never masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Mask {
    pub l: bool,
    pub ques: bool,
}

impl Mask {
    pub fn allows(&self, o: OptionKind) -> bool {
        match o {
            OptionKind::G => true,
            OptionKind::L => !self.l,
            OptionKind::Ques => !self.ques,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorParams {
    /// One row of weights per option, in `OptionKind::ALL` order.
    pub weights: [[f64; NUM_FEATURES]; 3],
}

impl Default for SelectorParams {
    fn default() -> Self {
        SelectorParams {
            weights: [[0.0; NUM_FEATURES]; 3],
        }
    }
}

impl SelectorParams {
    pub fn logits(&self, x: &Features) -> [f64; 3] {
        self.weights
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
    }

    pub fn probabilities(&self, x: &Features, mask: Mask) -> [f64; 3] {
        softmax(self.logits(x), mask)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().all(|w| w.is_finite())
    }
}

/// Softmax over the unmasked entries; masked entries get probability 0.
pub fn softmax(logits: [f64; 3], mask: Mask) -> [f64; 3] {
    let allowed = OptionKind::ALL.map(|o| mask.allows(o));
    let max = (0..3)
        .filter(|&i| allowed[i])
        .map(|i| logits[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; 3];
    for i in 0..3 {
        if allowed[i] {
            p[i] = (logits[i] - max).exp();
        }
    }
    let z: f64 = p.iter().sum();
    p.map(|v| v / z)
}

fn sample(p: &[f64; 3], rng: &mut Rng) -> OptionKind {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for o in OptionKind::ALL {
        acc += p[o.index()];
        if u < acc && p[o.index()] > 0.0 {
            return o;
        }
    }
    // rounding left u above the cumulative sum: take the last allowed option
    *OptionKind::ALL
        .iter()
        .rev()
        .find(|o| p[o.index()] > 0.0)
        .expect("g is always allowed")
}

/// Samples an option from the selector; returns it with the full distribution.
pub fn select_option(
    params: &SelectorParams,
    x: &Features,
    mask: Mask,
    rng: &mut Rng,
) -> (OptionKind, [f64; 3]) {
    let p = params.probabilities(x, mask);
    (sample(&p, rng), p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Uniform over allowed options at every decision.
    Random,
    /// Random only during the first 50 steps, autonomous afterwards.
    RandomEarly,
    /// Cycles g, ques, l, switching every three steps.
    Uniform,
    /// Thresholds on `1 - confidence` at 1/3 and 2/3.
    ModelUncertainty,
}

pub const RANDOM_EARLY_STEPS: u32 = 50;

/// A masked pick falls back to `g`.
pub fn baseline_selector(
    kind: BaselineKind,
    confidence: f64,
    t: u32,
    mask: Mask,
    rng: &mut Rng,
) -> OptionKind {
    let pick = match kind {
        BaselineKind::Random => sample(&softmax([0.0; 3], mask), rng),
        BaselineKind::RandomEarly if t < RANDOM_EARLY_STEPS => {
            sample(&softmax([0.0; 3], mask), rng)
        }
        BaselineKind::RandomEarly => OptionKind::G,
        BaselineKind::Uniform => {
            [OptionKind::G, OptionKind::Ques, OptionKind::L][(t / 3 % 3) as usize]
        }
        BaselineKind::ModelUncertainty => {
            let u = 1.0 - confidence;
            if u > 2.0 / 3.0 {
                OptionKind::L
            } else if u > 1.0 / 3.0 {
                OptionKind::Ques
            } else {
                OptionKind::G
            }
        }
    };
    if mask.allows(pick) {
        pick
    } else {
        OptionKind::G
    }
}
