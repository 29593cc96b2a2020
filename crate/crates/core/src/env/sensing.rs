//! What the agent can see: line-of-sight exploration and egocentric occupancy patches.

use serde::{Deserialize, Serialize};

use super::map::{Cell, GridMap, Heading, Pose, Tile};

pub const PATCH_SIDE: usize = 31;
/// Default line-of-sight radius for exploration, in cells.
pub const DEFAULT_VIEW_RADIUS: u32 = 5;

/// Cells the agent has seen so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploredCells {
    width: usize,
    height: usize,
    seen: Vec<bool>,
}

impl ExploredCells {
    pub fn new(width: usize, height: usize) -> Self {
        ExploredCells {
            width,
            height,
            seen: vec![false; width * height],
        }
    }

    pub fn for_map(map: &GridMap) -> Self {
        Self::new(map.width(), map.height())
    }

    pub fn all(map: &GridMap) -> Self {
        ExploredCells {
            width: map.width(),
            height: map.height(),
            seen: vec![true; map.len()],
        }
    }

    fn idx(&self, c: Cell) -> Option<usize> {
        (c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height)
            .then(|| c.y as usize * self.width + c.x as usize)
    }

    pub fn insert(&mut self, c: Cell) {
        if let Some(i) = self.idx(c) {
            self.seen[i] = true;
        }
    }

    pub fn contains(&self, c: Cell) -> bool {
        self.idx(c).is_some_and(|i| self.seen[i])
    }

    pub fn count(&self) -> usize {
        self.seen.iter().filter(|s| **s).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width;
        self.seen
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(move |(i, _)| Cell::new((i % w) as i32, (i / w) as i32))
    }

    /// Marks every cell visible from `from` within `radius`.
    pub fn reveal(&mut self, map: &GridMap, from: Cell, radius: u32) {
        for c in visible_cells(map, from, radius) {
            self.insert(c);
        }
    }
}

/// Cells in a straight line from `a` to `b` (Bresenham), endpoints included.
fn line(a: Cell, b: Cell) -> Vec<Cell> {
    let (mut x, mut y) = (a.x, a.y);
    let dx = (b.x - a.x).abs();
    let dy = -(b.y - a.y).abs();
    let sx = if a.x < b.x { 1 } else { -1 };
    let sy = if a.y < b.y { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = vec![a];
    while (x, y) != (b.x, b.y) {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        out.push(Cell::new(x, y));
    }
    out
}

/// In-bounds cells within Euclidean `radius` whose sight line from `from` is
/// not interrupted by a wall. Walls themselves are visible.
pub fn visible_cells(map: &GridMap, from: Cell, radius: u32) -> Vec<Cell> {
    let r = radius as i32;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let c = from.offset(dx, dy);
            if !map.in_bounds(c) {
                continue;
            }
            let path = line(from, c);
            let inner = if path.len() > 2 {
                &path[1..path.len() - 1]
            } else {
                &[][..]
            };
            let clear = inner.iter().all(|&p| map.is_free(p));
            if clear {
                out.push(c);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatchTile {
    Free,
    Wall,
    Unknown,
}

/// Egocentric occupancy grid centred on the agent with `view_heading` pointing up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyPatch {
    pub side: usize,
    pub view_heading: Heading,
    pub origin: Cell,
    cells: Vec<PatchTile>,
}

impl OccupancyPatch {
    pub fn get(&self, row: usize, col: usize) -> PatchTile {
        self.cells[row * self.side + col]
    }

    pub fn center(&self) -> usize {
        self.side / 2
    }

    /// World cell shown at `(row, col)`; row 0 is the far edge ahead.
    pub fn world_cell(&self, row: usize, col: usize) -> Cell {
        let half = self.center() as i32;
        let ahead = half - row as i32;
        let right = col as i32 - half;
        let (fx, fy) = self.view_heading.delta();
        let (rx, ry) = self.view_heading.right().delta();
        self.origin
            .offset(ahead * fx + right * rx, ahead * fy + right * ry)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[PatchTile]> {
        self.cells.chunks(self.side)
    }
}

/// 31x31 egocentric patch; see [`ego_occupancy_sized`].
pub fn ego_occupancy(
    pose: Pose,
    map: &GridMap,
    view_heading: Heading,
    known: &ExploredCells,
) -> OccupancyPatch {
    ego_occupancy_sized(pose, map, view_heading, known, PATCH_SIDE)
}

/// Cells off the map or not yet explored read as `Unknown`.
pub fn ego_occupancy_sized(
    pose: Pose,
    map: &GridMap,
    view_heading: Heading,
    known: &ExploredCells,
    side: usize,
) -> OccupancyPatch {
    assert!(side % 2 == 1, "patch side must be odd");
    let mut patch = OccupancyPatch {
        side,
        view_heading,
        origin: pose.cell(),
        cells: Vec::with_capacity(side * side),
    };
    for row in 0..side {
        for col in 0..side {
            let c = patch.world_cell(row, col);
            let tile = match map.tile(c) {
                Some(_) if !known.contains(c) => PatchTile::Unknown,
                Some(Tile::Free) => PatchTile::Free,
                Some(Tile::Wall) => PatchTile::Wall,
                None => PatchTile::Unknown,
            };
            patch.cells.push(tile);
        }
    }
    patch
}
