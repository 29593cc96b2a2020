//! Grid maps, cells, headings and poses.
//!
//! Coordinates: `x` grows eastward and `y` grows northward. In the ASCII map
//! format the first line is the northernmost row, so cell `(x, y)` lives on
//! line `height - 1 - y`, column `x`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Cell {
        Cell::new(self.x + dx, self.y + dy)
    }

    /// Euclidean distance in cells.
    pub fn euclid(self, other: Cell) -> f64 {
        let dx = f64::from(other.x - self.x);
        let dy = f64::from(other.y - self.y);
        dx.hypot(dy)
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heading {
    East,
    North,
    West,
    South,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::East, Heading::North, Heading::West, Heading::South];

    /// Counterclockwise angle from East, in degrees.
    pub fn degrees(self) -> f64 {
        match self {
            Heading::East => 0.0,
            Heading::North => 90.0,
            Heading::West => 180.0,
            Heading::South => 270.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Heading {
        Heading::ALL[i % 4]
    }

    pub fn left(self) -> Heading {
        Heading::from_index(self.index() + 1)
    }

    pub fn right(self) -> Heading {
        Heading::from_index(self.index() + 3)
    }

    /// Unit step `(dx, dy)` along the heading.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::East => (1, 0),
            Heading::North => (0, 1),
            Heading::West => (-1, 0),
            Heading::South => (0, -1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub x: i32,
    pub y: i32,
    pub heading: Heading,
}

impl Pose {
    pub const fn new(x: i32, y: i32, heading: Heading) -> Self {
        Pose { x, y, heading }
    }

    pub fn at(cell: Cell, heading: Heading) -> Self {
        Pose::new(cell.x, cell.y, heading)
    }

    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }

    /// The cell one step ahead.
    pub fn ahead(&self) -> Cell {
        let (dx, dy) = self.heading.delta();
        self.cell().offset(dx, dy)
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(({}, {}), {:?})", self.x, self.y, self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tile {
    Free,
    Wall,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("map document is empty")]
    EmptyMap,
    #[error("line {line} has {found} cells, expected {expected}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown character {ch:?} at line {line}, column {column}")]
    UnknownChar {
        line: usize,
        column: usize,
        ch: char,
    },
    #[error("map has no free cells")]
    NoFreeCells,
    #[error("cell spacing must be positive, got {0}")]
    BadSpacing(String),
}

/// The navigable world: a rectangle of free and wall cells with optional landmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub id: String,
    width: usize,
    height: usize,
    tiles: Vec<Tile>,
    cell_spacing: f64,
    landmarks: BTreeMap<Cell, char>,
}

impl GridMap {
    /// An all-free map.
    pub fn open(width: usize, height: usize) -> GridMap {
        assert!(width > 0 && height > 0, "map must be non-empty");
        GridMap {
            id: format!("open{width}x{height}"),
            width,
            height,
            tiles: vec![Tile::Free; width * height],
            cell_spacing: 1.0,
            landmarks: BTreeMap::new(),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_spacing(mut self, spacing: f64) -> Result<Self, MapError> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(MapError::BadSpacing(spacing.to_string()));
        }
        self.cell_spacing = spacing;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_spacing(&self) -> f64 {
        self.cell_spacing
    }

    pub fn landmarks(&self) -> &BTreeMap<Cell, char> {
        &self.landmarks
    }

    pub fn landmark_at(&self, cell: Cell) -> Option<char> {
        self.landmarks.get(&cell).copied()
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0
            && cell.y >= 0
            && (cell.x as usize) < self.width
            && (cell.y as usize) < self.height
    }

    pub fn index(&self, cell: Cell) -> Option<usize> {
        self.in_bounds(cell)
            .then(|| cell.y as usize * self.width + cell.x as usize)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new((index % self.width) as i32, (index / self.width) as i32)
    }

    pub fn tile(&self, cell: Cell) -> Option<Tile> {
        self.index(cell).map(|i| self.tiles[i])
    }

    /// In bounds and not a wall.
    pub fn is_free(&self, cell: Cell) -> bool {
        matches!(self.tile(cell), Some(Tile::Free))
    }

    pub fn set_wall(&mut self, cell: Cell) {
        let i = self.index(cell).expect("cell out of bounds");
        self.tiles[i] = Tile::Wall;
        self.landmarks.remove(&cell);
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.tiles.len())
            .filter(|&i| self.tiles[i] == Tile::Free)
            .map(|i| self.cell_at(i))
    }

    pub fn free_count(&self) -> usize {
        self.tiles.iter().filter(|t| **t == Tile::Free).count()
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    /// Euclidean length of the map diagonal in cells.
    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    /// Renders the map back into the ASCII format accepted by [`load_map`].
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in (0..self.height as i32).rev() {
            for x in 0..self.width as i32 {
                let c = Cell::new(x, y);
                let ch = match (self.tile(c), self.landmark_at(c)) {
                    (Some(Tile::Wall), _) => '#',
                    (_, Some(l)) => l,
                    _ => '.',
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the ASCII map format: `#` is a wall, `.` is free, and a lowercase
/// letter is a free cell carrying that landmark id.
pub fn load_map(text: &str) -> Result<GridMap, MapError> {
    let lines: Vec<&str> = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .collect::<Vec<_>>();
    // tolerate trailing blank lines only
    let end = lines
        .iter()
        .rposition(|l| !l.is_empty())
        .map(|p| p + 1)
        .unwrap_or(0);
    let lines = &lines[..end];
    if lines.is_empty() {
        return Err(MapError::EmptyMap);
    }
    let width = lines[0].chars().count();
    if width == 0 {
        return Err(MapError::EmptyMap);
    }
    let height = lines.len();
    let mut tiles = vec![Tile::Free; width * height];
    let mut landmarks = BTreeMap::new();
    for (line_no, line) in lines.iter().enumerate() {
        let found = line.chars().count();
        if found != width {
            return Err(MapError::Ragged {
                line: line_no,
                expected: width,
                found,
            });
        }
        let y = (height - 1 - line_no) as i32;
        for (column, ch) in line.chars().enumerate() {
            let cell = Cell::new(column as i32, y);
            let idx = y as usize * width + column;
            match ch {
                '#' => tiles[idx] = Tile::Wall,
                '.' => {}
                'a'..='z' => {
                    landmarks.insert(cell, ch);
                }
                _ => {
                    return Err(MapError::UnknownChar {
                        line: line_no,
                        column,
                        ch,
                    })
                }
            }
        }
    }
    if !tiles.contains(&Tile::Free) {
        return Err(MapError::NoFreeCells);
    }
    Ok(GridMap {
        id: String::from("map"),
        width,
        height,
        tiles,
        cell_spacing: 1.0,
        landmarks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three_with_center_wall() {
        let m = load_map("...\n.#.\n...").unwrap();
        assert_eq!((m.width(), m.height()), (3, 3));
        assert_eq!(m.tile(Cell::new(1, 1)), Some(Tile::Wall));
        assert_eq!(m.free_count(), 8);
    }

    #[test]
    fn empty_document_is_rejected() {
        assert_eq!(load_map(""), Err(MapError::EmptyMap));
        assert_eq!(load_map("\n\n"), Err(MapError::EmptyMap));
    }

    #[test]
    fn landmarks_are_recorded_on_free_cells() {
        // parsed by hand: line 0 is y = 4, so 'a' at line 1 col 1 is (1, 3)
        // and 'b' at line 3 col 3 is (3, 1)
        let text = ".....\n.a...\n..#..\n...b.\n.....\n";
        let m = load_map(text).unwrap();
        let expected: BTreeMap<Cell, char> = [(Cell::new(1, 3), 'a'), (Cell::new(3, 1), 'b')]
            .into_iter()
            .collect();
        assert_eq!(m.landmarks(), &expected);
        assert!(m.is_free(Cell::new(1, 3)));
        assert!(!m.is_free(Cell::new(2, 2)));
    }

    #[test]
    fn ragged_and_unknown_characters() {
        assert!(matches!(
            load_map("...\n..\n"),
            Err(MapError::Ragged { line: 1, .. })
        ));
        assert!(matches!(
            load_map("..X\n..."),
            Err(MapError::UnknownChar {
                line: 0,
                column: 2,
                ch: 'X'
            })
        ));
        assert_eq!(load_map("##\n##"), Err(MapError::NoFreeCells));
    }

    #[test]
    fn ascii_round_trip() {
        let text = "..#a\n#...\n..b.\n";
        let m = load_map(text).unwrap();
        assert_eq!(m.to_ascii(), text);
    }

    #[test]
    fn heading_rotation() {
        assert_eq!(Heading::East.left(), Heading::North);
        assert_eq!(Heading::East.right(), Heading::South);
        for h in Heading::ALL {
            assert_eq!(h.left().right(), h);
            assert_eq!(h.left().left().left().left(), h);
        }
    }
}
