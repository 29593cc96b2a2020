use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::audio::AudioNoise;
use super::map::{Cell, GridMap, Heading, Pose};
use crate::geodesy::DistanceField;
use crate::rng::{self, Rng, Stream};

/// Number of semantic sound categories.
pub const DEFAULT_LABELS: u32 = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: u32,
    pub duration: u32,
    pub active: bool,
}

/// Contiguous on/off runs of one sound covering `[0, horizon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundSchedule {
    pub segments: Vec<Segment>,
    pub duration_mean: f64,
    pub duration_std: f64,
}

impl SoundSchedule {
    pub fn always_on(horizon: u32) -> SoundSchedule {
        SoundSchedule {
            segments: vec![Segment {
                start: 0,
                duration: horizon.max(1),
                active: true,
            }],
            duration_mean: f64::from(horizon),
            duration_std: 0.0,
        }
    }

    /// Alternating active/silent runs, each `round(Normal(mean, std))` clamped to at least one step.
    pub fn sample(
        horizon: u32,
        active: (f64, f64),
        silent: (f64, f64),
        rng: &mut Rng,
    ) -> SoundSchedule {
        let on = Normal::new(active.0, active.1.max(0.0)).expect("finite duration distribution");
        let off = Normal::new(silent.0, silent.1.max(0.0)).expect("finite duration distribution");
        let mut is_active = rng.random_bool(0.5);
        let mut segments = Vec::new();
        let mut t = 0;
        let horizon = horizon.max(1);
        while t < horizon {
            let draw = if is_active {
                on.sample(rng)
            } else {
                off.sample(rng)
            };
            let duration = (draw.round().max(1.0) as u32).min(horizon - t);
            segments.push(Segment {
                start: t,
                duration,
                active: is_active,
            });
            t += duration;
            is_active = !is_active;
        }
        SoundSchedule {
            segments,
            duration_mean: active.0,
            duration_std: active.1,
        }
    }

    pub fn is_active(&self, t: u32) -> bool {
        // past the horizon the final segment persists
        self.segments
            .iter()
            .find(|s| t >= s.start && t < s.start + s.duration)
            .or(self.segments.last())
            .is_some_and(|s| s.active)
    }

    pub fn horizon(&self) -> u32 {
        self.segments.last().map_or(0, |s| s.start + s.duration)
    }

    /// Fraction of steps on which the sound is active.
    pub fn duty_cycle(&self) -> f64 {
        let on: u32 = self
            .segments
            .iter()
            .filter(|s| s.active)
            .map(|s| s.duration)
            .sum();
        f64::from(on) / f64::from(self.horizon().max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundSource {
    pub cell: Cell,
    pub label: u32,
    pub schedule: SoundSchedule,
    pub is_target: bool,
}

/// Episode generation settings. Loaded from the `[episode]` table of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Maximum number of steps.
    pub horizon: u32,
    /// Success radius around the target, in cells of geodesic distance.
    pub proximity_radius: u32,
    /// Number of non-target sound sources.
    pub distractors: usize,
    /// Target and distractors sound continuously.
    pub always_on: bool,
    pub duration_mean: f64,
    pub duration_std: f64,
    /// Silent gaps between active runs.
    pub silent_mean: f64,
    pub silent_std: f64,
    pub num_labels: u32,
    /// Minimum start-to-target geodesic distance in cells.
    pub min_start_distance: u32,
    /// Upper bound on start-to-target geodesic distance in cells.
    pub max_start_distance: u32,
    pub max_retries: u32,
    pub noise: AudioNoise,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            horizon: 100,
            proximity_radius: 1,
            distractors: 0,
            always_on: false,
            duration_mean: 15.0,
            duration_std: 9.0,
            silent_mean: 15.0,
            silent_std: 9.0,
            num_labels: DEFAULT_LABELS,
            min_start_distance: 2,
            max_start_distance: u32::MAX,
            max_retries: 10_000,
            noise: AudioNoise::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EpisodeError {
    #[error("map needs at least two free cells")]
    TooFewFreeCells,
    #[error("no reachable target placement after {0} retries")]
    NoReachableGoal(u32),
    #[error("need {needed} distinct labels but only {available} exist")]
    TooFewLabels { needed: usize, available: u32 },
    #[error("invalid episode: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub map_id: String,
    pub start: Pose,
    pub sources: Vec<SoundSource>,
    pub horizon: u32,
    pub proximity_radius: u32,
    pub seed: u64,
}

impl Episode {
    pub fn target(&self) -> &SoundSource {
        self.sources
            .iter()
            .find(|s| s.is_target)
            .expect("episode has a target source")
    }

    pub fn goal(&self) -> Cell {
        self.target().cell
    }
}

fn uniform_free(free: &[Cell], rng: &mut Rng) -> Cell {
    free[rng.random_range(0..free.len())]
}

/// Samples start pose, target and distractors uniformly over free cells
/// (rejecting unreachable or too-close targets) and draws their schedules.
pub fn generate_episode(
    map: &GridMap,
    cfg: &EpisodeConfig,
    seed: u64,
) -> Result<Episode, EpisodeError> {
    let free: Vec<Cell> = map.free_cells().collect();
    if free.len() < 2 {
        return Err(EpisodeError::TooFewFreeCells);
    }
    if (cfg.distractors + 1) as u64 > u64::from(cfg.num_labels) {
        return Err(EpisodeError::TooFewLabels {
            needed: cfg.distractors + 1,
            available: cfg.num_labels,
        });
    }
    let mut rng = rng::stream(seed, Stream::Episode);
    let mut placed = None;
    for _ in 0..cfg.max_retries {
        let start = uniform_free(&free, &mut rng);
        let heading = Heading::from_index(rng.random_range(0..4));
        let goal = uniform_free(&free, &mut rng);
        let field = DistanceField::from_cell(map, goal);
        match field.get(start) {
            Some(d)
                if d >= cfg.min_start_distance
                    && d <= cfg.max_start_distance
                    && d <= cfg.horizon =>
            {
                placed = Some((Pose::at(start, heading), goal, field));
                break;
            }
            _ => continue,
        }
    }
    let (start, goal, field) = placed.ok_or(EpisodeError::NoReachableGoal(cfg.max_retries))?;

    let mut labels: Vec<u32> = Vec::with_capacity(cfg.distractors + 1);
    while labels.len() < cfg.distractors + 1 {
        let l = rng.random_range(0..cfg.num_labels);
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    let schedule = |rng: &mut Rng| {
        if cfg.always_on {
            SoundSchedule::always_on(cfg.horizon)
        } else {
            SoundSchedule::sample(
                cfg.horizon,
                (cfg.duration_mean, cfg.duration_std),
                (cfg.silent_mean, cfg.silent_std),
                rng,
            )
        }
    };
    let mut sources = vec![SoundSource {
        cell: goal,
        label: labels[0],
        schedule: schedule(&mut rng),
        is_target: true,
    }];
    for &label in &labels[1..] {
        // distractors sit on reachable cells other than the target
        let mut cell = None;
        for _ in 0..cfg.max_retries {
            let c = uniform_free(&free, &mut rng);
            if c != goal && field.get(c).is_some() {
                cell = Some(c);
                break;
            }
        }
        let cell = cell.ok_or(EpisodeError::NoReachableGoal(cfg.max_retries))?;
        sources.push(SoundSource {
            cell,
            label,
            schedule: schedule(&mut rng),
            is_target: false,
        });
    }
    Ok(Episode {
        map_id: map.id.clone(),
        start,
        sources,
        horizon: cfg.horizon,
        proximity_radius: cfg.proximity_radius,
        seed,
    })
}

/// A map paired with one of its episodes, plus cached distance fields for every source.
#[derive(Debug, Clone)]
pub struct World {
    pub map: GridMap,
    pub episode: Episode,
    fields: Vec<DistanceField>,
}

impl World {
    pub fn new(map: GridMap, episode: Episode) -> Result<World, EpisodeError> {
        let invalid = |m: String| Err(EpisodeError::Invalid(m));
        if episode.map_id != map.id {
            return invalid(format!(
                "episode is for map {:?}, got {:?}",
                episode.map_id, map.id
            ));
        }
        if !map.is_free(episode.start.cell()) {
            return invalid(format!("start {} is not free", episode.start));
        }
        if episode.sources.iter().filter(|s| s.is_target).count() != 1 {
            return invalid("exactly one source must be the target".into());
        }
        let fields: Vec<DistanceField> = episode
            .sources
            .iter()
            .map(|s| DistanceField::from_cell(&map, s.cell))
            .collect();
        for (s, f) in episode.sources.iter().zip(&fields) {
            if !map.is_free(s.cell) {
                return invalid(format!("source at {} is not free", s.cell));
            }
            if f.get(episode.start.cell()).is_none() {
                return invalid(format!(
                    "source at {} is unreachable from the start",
                    s.cell
                ));
            }
        }
        let target = episode.sources.iter().position(|s| s.is_target).unwrap();
        let d = fields[target].get(episode.start.cell()).unwrap();
        if episode.horizon < d {
            return invalid(format!(
                "horizon {} is shorter than the geodesic {d}",
                episode.horizon
            ));
        }
        Ok(World {
            map,
            episode,
            fields,
        })
    }

    pub fn goal(&self) -> Cell {
        self.episode.goal()
    }

    /// Geodesic distance in cells from `cell` to source `i`.
    pub fn source_distance(&self, i: usize, cell: Cell) -> Option<u32> {
        self.fields[i].get(cell)
    }

    pub fn goal_distance(&self, cell: Cell) -> Option<u32> {
        let i = self
            .episode
            .sources
            .iter()
            .position(|s| s.is_target)
            .unwrap();
        self.fields[i].get(cell)
    }

    /// Stopping at `cell` counts as success.
    pub fn within_goal_radius(&self, cell: Cell) -> bool {
        self.goal_distance(cell)
            .is_some_and(|d| d <= self.episode.proximity_radius)
    }

    pub fn sound_active(&self, t: u32) -> bool {
        self.episode.target().schedule.is_active(t)
    }
}
