//! Parametric stand-in for binaural audio: each active source yields a noisy
//! bearing, a distance-coded intensity and a possibly mislabelled category.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::episode::World;
use super::map::Pose;
use crate::geodesy::{relative_bearing, wrap_deg};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioNoise {
    /// Standard deviation of the bearing error, in degrees.
    pub sigma_bearing_deg: f64,
    /// Probability that a component reports a wrong category.
    pub p_label: f64,
}

impl Default for AudioNoise {
    fn default() -> Self {
        AudioNoise {
            sigma_bearing_deg: 15.0,
            p_label: 0.05,
        }
    }
}

impl AudioNoise {
    pub const NONE: AudioNoise = AudioNoise {
        sigma_bearing_deg: 0.0,
        p_label: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudioComponent {
    pub label: u32,
    /// Counterclockwise from the agent heading, in `[0, 360)`.
    pub bearing_deg: f64,
    /// `1 / (1 + d)` for geodesic distance `d` in cells.
    pub intensity: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AudioObservation {
    pub components: Vec<AudioComponent>,
    pub silent: bool,
}

impl AudioObservation {
    /// The loudest component carrying `label`.
    pub fn loudest_with_label(&self, label: u32) -> Option<&AudioComponent> {
        self.components
            .iter()
            .filter(|c| c.label == label)
            .max_by(|a, b| a.intensity.total_cmp(&b.intensity))
    }
}

/// Intensity law shared by the simulator and the agent's distance inversion.
pub fn intensity_for_distance(d: u32) -> f64 {
    1.0 / (1.0 + f64::from(d))
}

/// Inverse of [`intensity_for_distance`], rounded to whole cells.
pub fn distance_for_intensity(intensity: f64) -> u32 {
    (1.0 / intensity - 1.0).round().max(0.0) as u32
}

pub fn observe_audio(
    pose: Pose,
    world: &World,
    t: u32,
    noise: &AudioNoise,
    rng: &mut Rng,
) -> AudioObservation {
    let bearing_noise = Normal::new(0.0, noise.sigma_bearing_deg.max(0.0)).expect("finite sigma");
    let num_labels = world
        .episode
        .sources
        .iter()
        .map(|s| s.label + 1)
        .max()
        .unwrap_or(1)
        .max(crate::env::DEFAULT_LABELS);
    let mut components = Vec::new();
    for (i, source) in world.episode.sources.iter().enumerate() {
        if !source.schedule.is_active(t) {
            continue;
        }
        let Some(d) = world.source_distance(i, pose.cell()) else {
            continue;
        };
        // draws happen in a fixed order so noiseless and noisy runs stay aligned
        let err = bearing_noise.sample(rng);
        let flip = rng.random_bool(noise.p_label.clamp(0.0, 1.0));
        let other = rng.random_range(0..num_labels - 1);
        let true_bearing = relative_bearing(pose, source.cell).unwrap_or(0.0);
        let label = if flip {
            // uniform over the other labels
            if other >= source.label {
                other + 1
            } else {
                other
            }
        } else {
            source.label
        };
        components.push(AudioComponent {
            label,
            bearing_deg: wrap_deg(true_bearing + err),
            intensity: intensity_for_distance(d),
            active: true,
        });
    }
    let silent = components.is_empty();
    AudioObservation { components, silent }
}
