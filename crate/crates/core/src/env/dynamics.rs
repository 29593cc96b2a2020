use std::fmt;

use serde::{Deserialize, Serialize};

use super::map::{GridMap, Pose};

/// The four primitive navigation actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::MoveForward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Stop,
    ];

    /// Single-letter code used in action strings (`"FFLF"`).
    pub fn code(self) -> char {
        match self {
            Action::MoveForward => 'F',
            Action::TurnLeft => 'L',
            Action::TurnRight => 'R',
            Action::Stop => 'S',
        }
    }

    pub fn from_code(c: char) -> Option<Action> {
        match c {
            'F' => Some(Action::MoveForward),
            'L' => Some(Action::TurnLeft),
            'R' => Some(Action::TurnRight),
            'S' => Some(Action::Stop),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Renders an action sequence as its letter codes.
pub fn action_string(actions: &[Action]) -> String {
    actions.iter().map(|a| a.code()).collect()
}

pub fn parse_action_string(s: &str) -> Option<Vec<Action>> {
    s.chars().map(Action::from_code).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub pose: Pose,
    pub moved: bool,
    pub terminated: bool,
}

/// Applies one action. Blocked forward moves leave the pose unchanged.
pub fn step(pose: Pose, action: Action, map: &GridMap) -> StepOutcome {
    match action {
        Action::MoveForward => {
            let next = pose.ahead();
            if map.is_free(next) {
                StepOutcome {
                    pose: Pose::at(next, pose.heading),
                    moved: true,
                    terminated: false,
                }
            } else {
                StepOutcome {
                    pose,
                    moved: false,
                    terminated: false,
                }
            }
        }
        Action::TurnLeft => StepOutcome {
            pose: Pose {
                heading: pose.heading.left(),
                ..pose
            },
            moved: false,
            terminated: false,
        },
        Action::TurnRight => StepOutcome {
            pose: Pose {
                heading: pose.heading.right(),
                ..pose
            },
            moved: false,
            terminated: false,
        },
        Action::Stop => StepOutcome {
            pose,
            moved: false,
            terminated: true,
        },
    }
}

/// Replays `actions` from `start`, returning the final pose and how many moves succeeded.
pub fn replay(start: Pose, actions: &[Action], map: &GridMap) -> (Pose, usize) {
    let mut pose = start;
    let mut moves = 0;
    for &a in actions {
        let out = step(pose, a, map);
        pose = out.pose;
        moves += usize::from(out.moved);
        if out.terminated {
            break;
        }
    }
    (pose, moves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::map::{load_map, Heading};
    use proptest::prelude::*;

    #[test]
    fn forward_on_open_map() {
        let m = GridMap::open(4, 4);
        let out = step(Pose::new(0, 0, Heading::East), Action::MoveForward, &m);
        assert_eq!(out.pose, Pose::new(1, 0, Heading::East));
        assert!(out.moved && !out.terminated);
    }

    #[test]
    fn turn_left_from_east_faces_north() {
        let m = GridMap::open(4, 4);
        let out = step(Pose::new(0, 0, Heading::East), Action::TurnLeft, &m);
        assert_eq!(out.pose, Pose::new(0, 0, Heading::North));
        assert!(!out.moved);
    }

    #[test]
    fn blocked_forward_is_a_no_op() {
        let m = load_map(".#\n..").unwrap();
        // (0, 1) faces the wall at (1, 1)
        let p = Pose::new(0, 1, Heading::East);
        let out = step(p, Action::MoveForward, &m);
        assert_eq!(out.pose, p);
        assert!(!out.moved);
        // and the map edge blocks too
        let edge = Pose::new(0, 0, Heading::West);
        assert_eq!(step(edge, Action::MoveForward, &m).pose, edge);
    }

    #[test]
    fn stop_terminates_in_place() {
        let m = GridMap::open(2, 2);
        let p = Pose::new(1, 1, Heading::South);
        let out = step(p, Action::Stop, &m);
        assert_eq!(out.pose, p);
        assert!(out.terminated);
    }

    #[test]
    fn action_codes_round_trip() {
        let s = "FFLRS";
        assert_eq!(action_string(&parse_action_string(s).unwrap()), s);
        assert!(parse_action_string("FX").is_none());
    }

    fn arb_map() -> impl Strategy<Value = GridMap> {
        (2usize..10, 2usize..10).prop_flat_map(|(w, h)| {
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
        fn pose_stays_on_free_cells(map in arb_map(), codes in proptest::collection::vec(0usize..3, 0..60)) {
            let mut pose = Pose::new(0, 0, Heading::East);
            for c in codes {
                let out = step(pose, Action::ALL[c], &map);
                prop_assert!(map.is_free(out.pose.cell()));
                // purity
                prop_assert_eq!(out, step(pose, Action::ALL[c], &map));
                pose = out.pose;
            }
        }
    }
}
