//! Deterministic grid-world environment.

mod audio;
mod dynamics;
mod episode;
mod map;
mod sensing;

pub use audio::{
    distance_for_intensity, intensity_for_distance, observe_audio, AudioComponent, AudioNoise,
    AudioObservation,
};
pub use dynamics::{action_string, parse_action_string, replay, step, Action, StepOutcome};
pub use episode::{
    generate_episode, Episode, EpisodeConfig, EpisodeError, Segment, SoundSchedule, SoundSource,
    World, DEFAULT_LABELS,
};
pub use map::{load_map, Cell, GridMap, Heading, MapError, Pose, Tile};
pub use sensing::{
    ego_occupancy, ego_occupancy_sized, visible_cells, ExploredCells, OccupancyPatch, PatchTile,
    DEFAULT_VIEW_RADIUS, PATCH_SIDE,
};
