//! Aligning sparse waypoint trajectories onto the grid, and generating
//! (goal vector, actions, message) triples for the language layer.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{action_string, parse_action_string, Action, Cell, GridMap, Heading, Pose};
use crate::geodesy::{
    bearing_sector, relative_bearing_of, shortest_pathlet, shortest_plan, DistanceField,
};
use crate::lang::{
    dead_reckon, decode_actions, decode_direction, encode_pathlet_scaled, parse, Kind, Message,
};
use crate::rng::{mix, stream, Rng, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("snap tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("graph is empty, disconnected or has non-finite coordinates")]
    InvalidGraph,
    #[error("node index {0} out of range")]
    UnknownNode(usize),
    #[error("snapped cells cannot be connected at node {0}")]
    DisconnectedSnap(usize),
    #[error("no maps to sample from")]
    NoMaps,
    #[error("bad corpus record: {0}")]
    BadRecord(String),
}

/// Waypoints in meters with an adjacency list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGraph {
    pub nodes: Vec<(f64, f64)>,
    pub edges: Vec<Vec<usize>>,
}

impl SparseGraph {
    pub fn new(nodes: Vec<(f64, f64)>, edges: Vec<Vec<usize>>) -> Result<Self, CorpusError> {
        let g = SparseGraph { nodes, edges };
        g.validate()?;
        Ok(g)
    }

    /// A path graph through `nodes` in order.
    pub fn chain(nodes: Vec<(f64, f64)>) -> Result<Self, CorpusError> {
        let n = nodes.len();
        let edges = (0..n)
            .map(|i| {
                [i.checked_sub(1), (i + 1 < n).then_some(i + 1)]
                    .into_iter()
                    .flatten()
                    .collect()
            })
            .collect();
        Self::new(nodes, edges)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let n = self.nodes.len();
        if n == 0
            || self.edges.len() != n
            || self
                .nodes
                .iter()
                .any(|(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(CorpusError::InvalidGraph);
        }
        if self.edges.iter().flatten().any(|&j| j >= n) {
            return Err(CorpusError::InvalidGraph);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.edges[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if seen.contains(&false) {
            return Err(CorpusError::InvalidGraph);
        }
        Ok(())
    }

    /// Mean edge length in meters.
    pub fn avg_spacing(&self) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for (i, adj) in self.edges.iter().enumerate() {
            for &j in adj.iter().filter(|&&j| j > i) {
                let (a, b) = (self.nodes[i], self.nodes[j]);
                sum += (a.0 - b.0).hypot(a.1 - b.1);
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

/// Nearest cell center to a point in meters, and the distance to it.
pub fn snap_point(p: (f64, f64), spacing: f64) -> (Cell, f64) {
    let (cx, cy) = ((p.0 / spacing).round(), (p.1 / spacing).round());
    let err = (p.0 - cx * spacing).hypot(p.1 - cy * spacing);
    (Cell::new(cx as i32, cy as i32), err)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Snap {
    Accepted {
        cells: Vec<Cell>,
        actions: Vec<Action>,
        max_error: f64,
    },
    Rejected {
        max_error: f64,
    },
}

/// Snaps each node of `path` to its nearest cell center. The trajectory is
/// rejected if any node lies more than `eps` meters from its center;
/// otherwise the snapped cells are joined by shortest sub-paths from
/// `heading`.
pub fn snap_trajectory(
    graph: &SparseGraph,
    path: &[usize],
    grid: &GridMap,
    eps: f64,
    heading: Heading,
) -> Result<Snap, CorpusError> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(CorpusError::BadTolerance(eps));
    }
    let mut cells = Vec::with_capacity(path.len());
    let mut max_error = 0.0f64;
    for &i in path {
        let &p = graph.nodes.get(i).ok_or(CorpusError::UnknownNode(i))?;
        let (c, err) = snap_point(p, grid.cell_spacing());
        max_error = max_error.max(err);
        cells.push(c);
    }
    if max_error > eps {
        return Ok(Snap::Rejected { max_error });
    }
    let mut actions = Vec::new();
    let Some(&first) = cells.first() else {
        return Ok(Snap::Accepted {
            cells,
            actions,
            max_error,
        });
    };
    if !grid.is_free(first) {
        return Err(CorpusError::DisconnectedSnap(0));
    }
    let mut pose = Pose::at(first, heading);
    for (k, &c) in cells.iter().enumerate().skip(1) {
        let leg = shortest_plan(grid, pose, c).map_err(|_| CorpusError::DisconnectedSnap(k))?;
        pose = dead_reckon(pose, &leg);
        actions.extend(leg);
    }
    Ok(Snap::Accepted {
        cells,
        actions,
        max_error,
    })
}

/// Waypoints placed on the given cells with in-cell offsets drawn from
/// `offset`, chained in order.
pub fn synthetic_graph(
    cells: &[Cell],
    spacing: f64,
    offset: OffsetModel,
    rng: &mut Rng,
) -> Result<SparseGraph, CorpusError> {
    let nodes = cells
        .iter()
        .map(|c| {
            let (dx, dy) = offset.sample(spacing, rng);
            (f64::from(c.x) * spacing + dx, f64::from(c.y) * spacing + dy)
        })
        .collect();
    SparseGraph::chain(nodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetModel {
    /// Uniform over the cell square.
    UniformCell,
    /// Isotropic normal with this standard deviation in meters.
    Gaussian(f64),
}

impl OffsetModel {
    pub fn sample(&self, spacing: f64, rng: &mut Rng) -> (f64, f64) {
        match *self {
            OffsetModel::UniformCell => {
                let h = spacing / 2.0;
                (rng.random_range(-h..h), rng.random_range(-h..h))
            }
            OffsetModel::Gaussian(sd) => {
                let n = rand_distr::Normal::new(0.0, sd.max(0.0)).expect("finite sd");
                (rng.sample(n), rng.sample(n))
            }
        }
    }
}

/// A (goal vector, actions, message) training triple with the pose it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusTriple {
    pub map_id: String,
    pub pose: Pose,
    /// Endpoint displacement: distance in meters, then cosine and sine of its bearing.
    pub goal_vector: (f64, f64, f64),
    pub actions: Vec<Action>,
    pub message: Message,
}

fn goal_vector(pose: Pose, actions: &[Action], spacing: f64) -> (f64, f64, f64) {
    let end = dead_reckon(pose, actions).cell();
    let (dx, dy) = (f64::from(end.x - pose.x), f64::from(end.y - pose.y));
    let d = dx.hypot(dy);
    if d == 0.0 {
        return (0.0, 1.0, 0.0);
    }
    let theta = relative_bearing_of(dx, dy, pose.heading).to_radians();
    (d * spacing, theta.cos(), theta.sin())
}

fn draw_triple(maps: &[GridMap], nu: usize, seed: u64) -> Result<CorpusTriple, CorpusError> {
    let mut rng = stream(seed, Stream::Corpus);
    loop {
        let map = &maps[rng.random_range(0..maps.len())];
        let free: Vec<Cell> = map.free_cells().collect();
        if free.len() < 2 {
            continue;
        }
        let start = free[rng.random_range(0..free.len())];
        let goal = free[rng.random_range(0..free.len())];
        if start == goal || DistanceField::from_cell(map, goal).get(start).is_none() {
            continue;
        }
        let pose = Pose::at(start, Heading::from_index(rng.random_range(0..4)));
        let actions =
            shortest_pathlet(map, pose, goal, nu).map_err(|_| CorpusError::DisconnectedSnap(0))?;
        let message = encode_pathlet_scaled(&actions, pose, Kind::Instruction, map.cell_spacing())
            .map_err(|e| CorpusError::BadRecord(e.to_string()))?;
        return Ok(CorpusTriple {
            map_id: map.id.clone(),
            pose,
            goal_vector: goal_vector(pose, &actions, map.cell_spacing()),
            actions,
            message,
        });
    }
}

/// `n` triples from random (pose, goal) draws. Triple `i` depends only on
/// `(seed, i)`, so generation parallelises without changing the result.
pub fn generate_pairs(
    maps: &[GridMap],
    n: usize,
    nu: usize,
    seed: u64,
) -> Result<Vec<CorpusTriple>, CorpusError> {
    if maps.is_empty() || maps.iter().all(|m| m.free_count() < 2) {
        return Err(CorpusError::NoMaps);
    }
    (0..n)
        .into_par_iter()
        .map(|i| draw_triple(maps, nu.max(1), mix(seed, i as u64)))
        .collect()
}

fn heading_code(h: Heading) -> char {
    match h {
        Heading::East => 'E',
        Heading::North => 'N',
        Heading::West => 'W',
        Heading::South => 'S',
    }
}

impl fmt::Display for CorpusTriple {
    /// `map \t x y H \t d cos sin \t ACTIONS \t message`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (d, c, s) = self.goal_vector;
        write!(
            f,
            "{}\t{} {} {}\t{d:.5} {c:.5} {s:.5}\t{}\t{}",
            self.map_id,
            self.pose.x,
            self.pose.y,
            heading_code(self.pose.heading),
            action_string(&self.actions),
            self.message
        )
    }
}

impl FromStr for CorpusTriple {
    type Err = CorpusError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::BadRecord(line.to_string());
        let fields: Vec<&str> = line.split('\t').collect();
        let [map_id, pose, gv, actions, message] = fields[..] else {
            return Err(bad());
        };
        let p: Vec<&str> = pose.split_whitespace().collect();
        let [x, y, h] = p[..] else {
            return Err(bad());
        };
        let heading = match h {
            "E" => Heading::East,
            "N" => Heading::North,
            "W" => Heading::West,
            "S" => Heading::South,
            _ => return Err(bad()),
        };
        let pose = Pose::new(
            x.parse().map_err(|_| bad())?,
            y.parse().map_err(|_| bad())?,
            heading,
        );
        let g: Vec<f64> = gv
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        let [d, c, s] = g[..] else {
            return Err(bad());
        };
        let actions = parse_action_string(actions).ok_or_else(bad)?;
        let message = parse(message).map_err(|_| bad())?;
        if decode_actions(&message).map_err(|_| bad())? != actions {
            return Err(bad());
        }
        Ok(CorpusTriple {
            map_id: map_id.to_string(),
            pose,
            goal_vector: (d, c, s),
            actions,
            message,
        })
    }
}

/// Fraction of nonzero-displacement triples whose message, re-posed as a
/// question, decodes to the sector of the stored goal vector.
pub fn direction_accuracy(triples: &[CorpusTriple], maps: &[GridMap]) -> f64 {
    let moving: Vec<&CorpusTriple> = triples.iter().filter(|t| t.goal_vector.0 > 0.0).collect();
    if moving.is_empty() {
        return 1.0;
    }
    let hits = moving
        .iter()
        .filter(|t| {
            let Some(map) = maps.iter().find(|m| m.id == t.map_id) else {
                return false;
            };
            let (_, c, s) = t.goal_vector;
            let expected = bearing_sector(relative_bearing_of(c, s, Heading::East));
            let Ok(actions) = decode_actions(&t.message) else {
                return false;
            };
            encode_pathlet_scaled(&actions, t.pose, Kind::Question, map.cell_spacing())
                .ok()
                .and_then(|q| decode_direction(&q, map, t.pose).ok())
                == Some(expected)
        })
        .count();
    hits as f64 / moving.len() as f64
}
