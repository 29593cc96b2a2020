//! Ground-truth path knowledge: cell and pose shortest paths, pathlets,
//! bearings and the oracle's direction range.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Cell, GridMap, Heading, Pose};

/// Degrees each side added to the bearing hull of a direction range.
pub const RANGE_PAD_DEG: f64 = 15.0;
pub const SECTOR_COUNT: u8 = 12;
pub const SECTOR_WIDTH_DEG: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeodesyError {
    #[error("cell {0} is a wall or out of bounds")]
    NotFree(Cell),
    #[error("goal {0} is unreachable")]
    Unreachable(Cell),
    #[error("horizon must be at least one step")]
    DegenerateHorizon,
    #[error("agent already stands on the goal")]
    AtGoal,
}

pub const UNREACHABLE: u32 = u32::MAX;

/// Breadth-first distances (4-connected, in cells) from one source cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    dist: Vec<u32>,
}

impl DistanceField {
    pub fn from_cell(map: &GridMap, source: Cell) -> DistanceField {
        DistanceField::over(map.width(), map.height(), source, |c| map.is_free(c))
    }

    /// Distances over an arbitrary passability predicate on a `width` x `height` grid.
    pub fn over(
        width: usize,
        height: usize,
        source: Cell,
        passable: impl Fn(Cell) -> bool,
    ) -> DistanceField {
        let in_bounds =
            |c: Cell| c.x >= 0 && c.y >= 0 && (c.x as usize) < width && (c.y as usize) < height;
        let index = |c: Cell| c.y as usize * width + c.x as usize;
        let mut dist = vec![UNREACHABLE; width * height];
        if in_bounds(source) && passable(source) {
            dist[index(source)] = 0;
            let mut queue = VecDeque::from([source]);
            while let Some(c) = queue.pop_front() {
                let d = dist[index(c)];
                for h in Heading::ALL {
                    let (dx, dy) = h.delta();
                    let n = c.offset(dx, dy);
                    if in_bounds(n) && passable(n) && dist[index(n)] == UNREACHABLE {
                        dist[index(n)] = d + 1;
                        queue.push_back(n);
                    }
                }
            }
        }
        DistanceField {
            width,
            height,
            dist,
        }
    }

    pub fn get(&self, cell: Cell) -> Option<u32> {
        if cell.x < 0
            || cell.y < 0
            || cell.x as usize >= self.width
            || cell.y as usize >= self.height
        {
            return None;
        }
        let d = self.dist[cell.y as usize * self.width + cell.x as usize];
        (d != UNREACHABLE).then_some(d)
    }
}

/// Shortest 4-connected path length in cells; `Ok(None)` when disconnected.
pub fn cell_geodesic(map: &GridMap, a: Cell, b: Cell) -> Result<Option<u32>, GeodesyError> {
    for c in [a, b] {
        if !map.is_free(c) {
            return Err(GeodesyError::NotFree(c));
        }
    }
    Ok(DistanceField::from_cell(map, a).get(b))
}

/// Breadth-first search over poses `(cell, heading)` with unit-cost
/// MoveForward / TurnLeft / TurnRight. Actions are expanded in that order, so
/// among equal-length plans the one preferring MoveForward, then TurnLeft, at
/// the earliest differing step is returned.
pub fn plan_over<F>(
    width: usize,
    height: usize,
    start: Pose,
    goal: Cell,
    passable: F,
) -> Option<Vec<Action>>
where
    F: Fn(Cell) -> bool,
{
    plan_over_edges(width, height, start, goal, |_, to| passable(to))
}

/// [`plan_over`] with a predicate on forward moves `(from, to)`.
pub fn plan_over_edges<F>(
    width: usize,
    height: usize,
    start: Pose,
    goal: Cell,
    can_move: F,
) -> Option<Vec<Action>>
where
    F: Fn(Cell, Cell) -> bool,
{
    if start.cell() == goal {
        return Some(Vec::new());
    }
    let in_bounds =
        |c: Cell| c.x >= 0 && c.y >= 0 && (c.x as usize) < width && (c.y as usize) < height;
    if !in_bounds(start.cell()) {
        return None;
    }
    let key = |p: Pose| (p.y as usize * width + p.x as usize) * 4 + p.heading.index();
    const NONE: u32 = u32::MAX;
    let mut parent = vec![NONE; width * height * 4];
    let mut via = vec![Action::Stop; width * height * 4];
    let start_key = key(start);
    parent[start_key] = start_key as u32;
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        let pk = key(p);
        for action in [Action::MoveForward, Action::TurnLeft, Action::TurnRight] {
            let next = match action {
                Action::MoveForward => {
                    let c = p.ahead();
                    if !in_bounds(c) || !can_move(p.cell(), c) {
                        continue;
                    }
                    Pose::at(c, p.heading)
                }
                Action::TurnLeft => Pose {
                    heading: p.heading.left(),
                    ..p
                },
                _ => Pose {
                    heading: p.heading.right(),
                    ..p
                },
            };
            let nk = key(next);
            if parent[nk] != NONE {
                continue;
            }
            parent[nk] = pk as u32;
            via[nk] = action;
            if next.cell() == goal {
                let mut plan = Vec::new();
                let mut k = nk;
                while k != start_key {
                    plan.push(via[k]);
                    k = parent[k] as usize;
                }
                plan.reverse();
                return Some(plan);
            }
            queue.push_back(next);
        }
    }
    None
}

fn check_free(map: &GridMap, start: Pose, goal: Cell) -> Result<(), GeodesyError> {
    if !map.is_free(goal) {
        return Err(GeodesyError::NotFree(goal));
    }
    if !map.is_free(start.cell()) {
        return Err(GeodesyError::NotFree(start.cell()));
    }
    Ok(())
}

/// Plan with the fewest actions overall, Stop excluded. It may trade extra
/// cells for fewer turns.
pub fn min_action_plan(
    map: &GridMap,
    start: Pose,
    goal: Cell,
) -> Result<Vec<Action>, GeodesyError> {
    check_free(map, start, goal)?;
    plan_over(map.width(), map.height(), start, goal, |c| map.is_free(c))
        .ok_or(GeodesyError::Unreachable(goal))
}

/// The oracle's plan: fewest actions among cell-shortest routes, so every
/// forward move brings the agent one cell closer to the goal.
pub fn shortest_plan(map: &GridMap, start: Pose, goal: Cell) -> Result<Vec<Action>, GeodesyError> {
    check_free(map, start, goal)?;
    let field = DistanceField::from_cell(map, goal);
    plan_over_edges(map.width(), map.height(), start, goal, |from, to| {
        match (field.get(from), field.get(to)) {
            (Some(a), Some(b)) => b + 1 == a,
            _ => false,
        }
    })
    .ok_or(GeodesyError::Unreachable(goal))
}

/// Minimum number of actions (turns included, Stop excluded) to reach `goal`.
pub fn action_geodesic(
    map: &GridMap,
    start: Pose,
    goal: Cell,
) -> Result<Option<u32>, GeodesyError> {
    match min_action_plan(map, start, goal) {
        Ok(p) => Ok(Some(p.len() as u32)),
        Err(GeodesyError::Unreachable(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// The first `min(nu, plan length)` actions of the optimal plan.
pub fn shortest_pathlet(
    map: &GridMap,
    start: Pose,
    goal: Cell,
    nu: usize,
) -> Result<Vec<Action>, GeodesyError> {
    let mut plan = shortest_plan(map, start, goal)?;
    plan.truncate(nu);
    Ok(plan)
}

/// Wraps any angle into `[0, 360)`.
pub fn wrap_deg(theta: f64) -> f64 {
    let w = theta.rem_euclid(360.0);
    // rem_euclid can return 360.0 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Smallest absolute difference between two bearings, in `[0, 180]`.
pub fn angular_difference(a: f64, b: f64) -> f64 {
    let d = wrap_deg(a - b);
    d.min(360.0 - d)
}

/// Bearing of a world-frame displacement relative to `heading`, counterclockwise.
pub fn relative_bearing_of(dx: f64, dy: f64, heading: Heading) -> f64 {
    wrap_deg(dy.atan2(dx).to_degrees() - heading.degrees())
}

/// Bearing from `pose` to `target` relative to the pose heading; `None` for the pose's own cell.
pub fn relative_bearing(pose: Pose, target: Cell) -> Option<f64> {
    let dx = f64::from(target.x - pose.x);
    let dy = f64::from(target.y - pose.y);
    (dx != 0.0 || dy != 0.0).then(|| relative_bearing_of(dx, dy, pose.heading))
}

/// Which of the twelve 30-degree sectors a bearing falls into.
pub fn bearing_sector(theta_deg: f64) -> u8 {
    let s = (wrap_deg(theta_deg) / SECTOR_WIDTH_DEG).floor() as u8;
    s.min(SECTOR_COUNT - 1)
}

pub fn sector_center(sector: u8) -> f64 {
    f64::from(sector % SECTOR_COUNT) * SECTOR_WIDTH_DEG + SECTOR_WIDTH_DEG / 2.0
}

/// A bearing interval traversed counterclockwise from `theta1_deg` to `theta2_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionRange {
    pub theta1_deg: f64,
    pub theta2_deg: f64,
}

impl DirectionRange {
    pub fn width(&self) -> f64 {
        wrap_deg(self.theta2_deg - self.theta1_deg)
    }

    pub fn contains(&self, theta: f64) -> bool {
        wrap_deg(theta - self.theta1_deg) <= self.width()
    }

    /// Angular distance from `theta` to the nearest point of the interval (0 inside).
    pub fn distance_to(&self, theta: f64) -> f64 {
        if self.contains(theta) {
            0.0
        } else {
            angular_difference(theta, self.theta1_deg)
                .min(angular_difference(theta, self.theta2_deg))
        }
    }

    /// Smallest counterclockwise arc covering all bearings, padded by
    /// [`RANGE_PAD_DEG`] on both ends and capped at 180 degrees.
    pub fn covering(bearings: &[f64]) -> Option<DirectionRange> {
        if bearings.is_empty() {
            return None;
        }
        let mut b: Vec<f64> = bearings.iter().map(|&t| wrap_deg(t)).collect();
        b.sort_by(f64::total_cmp);
        // the arc starts right after the largest circular gap
        let n = b.len();
        let mut best_gap = -1.0;
        let mut best = 0;
        for i in 0..n {
            let gap = if i + 1 < n {
                b[i + 1] - b[i]
            } else {
                b[0] + 360.0 - b[n - 1]
            };
            if gap > best_gap {
                best_gap = gap;
                best = i;
            }
        }
        let start = b[(best + 1) % n];
        let end = b[best];
        let mut lo = start - RANGE_PAD_DEG;
        let mut hi = start + wrap_deg(end - start) + RANGE_PAD_DEG;
        if hi - lo > 180.0 {
            let mid = (lo + hi) / 2.0;
            lo = mid - 90.0;
            hi = mid + 90.0;
        }
        Some(DirectionRange {
            theta1_deg: wrap_deg(lo),
            theta2_deg: wrap_deg(hi),
        })
    }
}

/// The oracle's estimate of the goal direction: the padded bearing hull of the
/// cells visited within `horizon` steps of the optimal plan.
pub fn direction_range(
    map: &GridMap,
    pose: Pose,
    goal: Cell,
    horizon: usize,
) -> Result<DirectionRange, GeodesyError> {
    if horizon == 0 {
        return Err(GeodesyError::DegenerateHorizon);
    }
    let plan = shortest_plan(map, pose, goal)?;
    if plan.is_empty() {
        return Err(GeodesyError::AtGoal);
    }
    let mut cur = pose;
    let mut bearings = Vec::new();
    for (i, &a) in plan.iter().enumerate() {
        let out = crate::env::step(cur, a, map);
        cur = out.pose;
        if out.moved {
            // a plan that only turns within the horizon still needs one waypoint
            if i < horizon || bearings.is_empty() {
                bearings.extend(relative_bearing(pose, cur.cell()));
            }
            if i + 1 >= horizon {
                break;
            }
        }
    }
    Ok(DirectionRange::covering(&bearings).expect("a non-empty plan moves at least once"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{load_map, step};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn e(x: i32, y: i32) -> Pose {
        Pose::new(x, y, Heading::East)
    }

    #[test]
    fn corridor_and_identity() {
        let m = GridMap::open(5, 1);
        assert_eq!(
            cell_geodesic(&m, Cell::new(0, 0), Cell::new(3, 0)),
            Ok(Some(3))
        );
        assert_eq!(
            cell_geodesic(&m, Cell::new(2, 0), Cell::new(2, 0)),
            Ok(Some(0))
        );
    }

    #[test]
    fn wall_endpoints_are_errors() {
        let m = load_map(".#.").unwrap();
        assert_eq!(
            cell_geodesic(&m, Cell::new(1, 0), Cell::new(0, 0)),
            Err(GeodesyError::NotFree(Cell::new(1, 0)))
        );
        assert_eq!(
            cell_geodesic(&m, Cell::new(0, 0), Cell::new(2, 0)),
            Ok(None)
        );
    }

    /// Depth-first enumeration of every simple path up to `limit` cells.
    fn brute_force_shortest(map: &GridMap, a: Cell, b: Cell, limit: u32) -> Option<u32> {
        fn go(
            map: &GridMap,
            c: Cell,
            b: Cell,
            depth: u32,
            limit: u32,
            seen: &mut Vec<Cell>,
            best: &mut Option<u32>,
        ) {
            if c == b {
                *best = Some(best.map_or(depth, |x| x.min(depth)));
                return;
            }
            if depth == limit {
                return;
            }
            for h in Heading::ALL {
                let (dx, dy) = h.delta();
                let n = c.offset(dx, dy);
                if map.is_free(n) && !seen.contains(&n) {
                    seen.push(n);
                    go(map, n, b, depth + 1, limit, seen, best);
                    seen.pop();
                }
            }
        }
        let mut best = None;
        go(map, a, b, 0, limit, &mut vec![a], &mut best);
        best
    }

    #[test]
    fn detour_matches_brute_force_enumeration() {
        let m = load_map(".....\n.###.\n...#.\n.#.#.\n.#...\n").unwrap();
        let a = Cell::new(0, 0);
        let b = Cell::new(2, 0);
        let bfs = cell_geodesic(&m, a, b).unwrap();
        assert_eq!(bfs, brute_force_shortest(&m, a, b, 10));
        assert_eq!(bfs, Some(6));
    }

    #[test]
    fn action_geodesic_examples() {
        let m = GridMap::open(4, 4);
        assert_eq!(action_geodesic(&m, e(0, 0), Cell::new(1, 0)), Ok(Some(1)));
        assert_eq!(action_geodesic(&m, e(0, 0), Cell::new(0, 1)), Ok(Some(2)));
        assert_eq!(action_geodesic(&m, e(0, 0), Cell::new(0, 0)), Ok(Some(0)));
    }

    #[test]
    fn pathlet_examples() {
        use Action::*;
        let m = GridMap::open(5, 5);
        assert_eq!(
            shortest_pathlet(&m, e(0, 0), Cell::new(2, 0), 4),
            Ok(vec![MoveForward, MoveForward])
        );
        assert_eq!(
            shortest_pathlet(&m, e(0, 0), Cell::new(0, 1), 4),
            Ok(vec![TurnLeft, MoveForward])
        );
        assert_eq!(
            shortest_pathlet(&m, e(0, 0), Cell::new(4, 4), 0),
            Ok(vec![])
        );
        assert_eq!(
            shortest_pathlet(&m, e(0, 0), Cell::new(2, 1), 4),
            Ok(vec![MoveForward, MoveForward, TurnLeft, MoveForward])
        );
        // behind: both turn directions tie, TurnLeft wins
        assert_eq!(
            shortest_pathlet(&m, e(2, 2), Cell::new(1, 2), 4),
            Ok(vec![TurnLeft, TurnLeft, MoveForward])
        );
    }

    #[test]
    fn direction_range_examples() {
        let m = GridMap::open(6, 6);
        let r = direction_range(&m, e(0, 0), Cell::new(2, 1), 4).unwrap();
        // waypoints (1,0), (2,0), (2,1): bearings 0, 0, atan2(1,2)
        let hull_hi = 1f64.atan2(2.0).to_degrees();
        assert_abs_diff_eq!(r.theta1_deg, 345.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.theta2_deg, hull_hi + 15.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.theta2_deg, 41.565, epsilon = 1e-3);

        let r = direction_range(&m, e(0, 0), Cell::new(3, 0), 1).unwrap();
        assert_abs_diff_eq!(r.theta1_deg, 345.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.theta2_deg, 15.0, epsilon = 1e-9);

        assert_eq!(
            direction_range(&m, e(0, 0), Cell::new(3, 0), 0),
            Err(GeodesyError::DegenerateHorizon)
        );
    }

    #[test]
    fn turn_only_horizon_still_has_a_waypoint() {
        let m = GridMap::open(6, 6);
        // goal behind: plan L, L, F; horizon 1 covers only a turn
        let r = direction_range(&m, e(3, 3), Cell::new(0, 3), 1).unwrap();
        assert!(r.contains(180.0));
    }

    #[test]
    fn covering_arc_is_capped() {
        let r = DirectionRange::covering(&[0.0, 90.0, 170.0]).unwrap();
        assert_abs_diff_eq!(r.width(), 180.0, epsilon = 1e-9);
        let r = DirectionRange::covering(&[350.0, 10.0]).unwrap();
        assert_abs_diff_eq!(r.theta1_deg, 335.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.theta2_deg, 25.0, epsilon = 1e-9);
    }

    #[test]
    fn sectors() {
        assert_eq!(bearing_sector(0.0), 0);
        assert_eq!(bearing_sector(45.0), 1);
        assert_eq!(bearing_sector(359.9), 11);
        assert_eq!(bearing_sector(360.0), 0);
        assert_eq!(bearing_sector(-30.0), 11);
        assert_abs_diff_eq!(sector_center(0), 15.0, epsilon = 0.0);
        assert_abs_diff_eq!(sector_center(6), 195.0, epsilon = 0.0);
    }

    fn arb_map() -> impl Strategy<Value = GridMap> {
        (2usize..9, 2usize..9).prop_flat_map(|(w, h)| {
            proptest::collection::vec(proptest::bool::weighted(0.25), w * h).prop_map(
                move |walls| {
                    let mut m = GridMap::open(w, h);
                    for (i, wall) in walls.into_iter().enumerate() {
                        if wall && i != 0 {
                            m.set_wall(m.cell_at(i));
                        }
                    }
                    m
                },
            )
        })
    }

    proptest! {
        #[test]
        fn geodesic_is_a_metric(map in arb_map(), picks in proptest::collection::vec(any::<proptest::sample::Index>(), 3)) {
            let free: Vec<Cell> = map.free_cells().collect();
            let [a, b, c] = [0, 1, 2].map(|i| free[picks[i].index(free.len())]);
            let d = |x, y| cell_geodesic(&map, x, y).unwrap();
            prop_assert_eq!(d(a, b), d(b, a));
            if let (Some(ab), Some(bc), Some(ac)) = (d(a, b), d(b, c), d(a, c)) {
                prop_assert!(ac <= ab + bc);
            }
        }

        #[test]
        fn action_geodesic_dominates_cell_geodesic(map in arb_map(), pick in any::<proptest::sample::Index>(), h in 0usize..4) {
            let free: Vec<Cell> = map.free_cells().collect();
            let goal = free[pick.index(free.len())];
            let start = Pose::at(free[0], Heading::from_index(h));
            let cells = cell_geodesic(&map, start.cell(), goal).unwrap();
            let actions = action_geodesic(&map, start, goal).unwrap();
            prop_assert_eq!(cells.is_some(), actions.is_some());
            if let (Some(c), Some(a)) = (cells, actions) {
                prop_assert!(a >= c);
            }
        }

        #[test]
        fn pathlet_replay_makes_progress(map in arb_map(), pick in any::<proptest::sample::Index>(), h in 0usize..4, nu in 0usize..8) {
            let free: Vec<Cell> = map.free_cells().collect();
            let goal = free[pick.index(free.len())];
            let start = Pose::at(free[0], Heading::from_index(h));
            if let Ok(pathlet) = shortest_pathlet(&map, start, goal, nu) {
                prop_assert!(pathlet.len() <= nu);
                let field = DistanceField::from_cell(&map, goal);
                let mut pose = start;
                for a in pathlet {
                    let before = field.get(pose.cell()).unwrap();
                    let out = step(pose, a, &map);
                    if a == Action::MoveForward {
                        prop_assert!(out.moved, "pathlet walked into a wall");
                        prop_assert!(field.get(out.pose.cell()).unwrap() < before);
                    }
                    pose = out.pose;
                }
            }
        }

        #[test]
        fn sectors_partition_the_circle(theta in 0.0f64..360.0) {
            let s = bearing_sector(theta);
            prop_assert!(s < 12);
            let lo = f64::from(s) * 30.0;
            prop_assert!(lo <= theta && theta < lo + 30.0);
        }
    }
}
