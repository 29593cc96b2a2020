//! Pathlet encoding, action and direction decoding, and message corruption.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grammar::{Clause, Kind, Message, Side};
use crate::env::{step, Action, Cell, GridMap, Pose};
use crate::geodesy::{bearing_sector, relative_bearing, relative_bearing_of};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("empty action list")]
    EmptyActionList,
    #[error("pathlets cannot contain Stop")]
    ContainsStop,
    #[error("expected a {expected:?} message, got {found:?}")]
    WrongKind { expected: Kind, found: Kind },
    #[error("pathlet ends where it starts")]
    DegenerateEndpoint,
}

/// Endpoint of `actions` from `start` by dead reckoning (no walls).
pub fn dead_reckon(start: Pose, actions: &[Action]) -> Pose {
    let mut pose = start;
    for &a in actions {
        match a {
            Action::MoveForward => pose = Pose::at(pose.ahead(), pose.heading),
            Action::TurnLeft => pose.heading = pose.heading.left(),
            Action::TurnRight => pose.heading = pose.heading.right(),
            Action::Stop => break,
        }
    }
    pose
}

/// Run-length encodes forward moves; turns are kept one clause each.
fn motion_clauses(actions: &[Action]) -> Vec<Clause> {
    let mut out = Vec::new();
    for &a in actions {
        match (a, out.last_mut()) {
            (Action::MoveForward, Some(Clause::Forward(n))) => *n += 1,
            (Action::MoveForward, _) => out.push(Clause::Forward(1)),
            (Action::TurnLeft, _) => out.push(Clause::Turn(Side::Left)),
            (Action::TurnRight, _) => out.push(Clause::Turn(Side::Right)),
            (Action::Stop, _) => unreachable!("checked by caller"),
        }
    }
    out
}

/// Encodes with unit cell spacing; see [`encode_pathlet_scaled`].
pub fn encode_pathlet(actions: &[Action], start: Pose, kind: Kind) -> Result<Message, CodecError> {
    encode_pathlet_scaled(actions, start, kind, 1.0)
}

/// Questions get an endpoint clause: distance in meters and the bearing of the
/// endpoint relative to the start heading. A zero displacement encodes as
/// bearing 0.
pub fn encode_pathlet_scaled(
    actions: &[Action],
    start: Pose,
    kind: Kind,
    cell_spacing: f64,
) -> Result<Message, CodecError> {
    if actions.is_empty() {
        return Err(CodecError::EmptyActionList);
    }
    if actions.contains(&Action::Stop) {
        return Err(CodecError::ContainsStop);
    }
    let mut clauses = motion_clauses(actions);
    let kind = match kind {
        Kind::Question => {
            let end = dead_reckon(start, actions).cell();
            let d = start.cell().euclid(end);
            let theta = relative_bearing(start, end).unwrap_or(0.0).to_radians();
            clauses.push(Clause::endpoint(d * cell_spacing, theta.cos(), theta.sin()));
            Kind::Question
        }
        Kind::Instruction | Kind::Answer => Kind::Instruction,
    };
    Ok(Message { kind, clauses })
}

fn motion_actions(msg: &Message) -> Vec<Action> {
    let mut out = Vec::new();
    for c in &msg.clauses {
        match c {
            Clause::Forward(n) => out.extend(std::iter::repeat_n(Action::MoveForward, *n as usize)),
            Clause::Turn(Side::Left) => out.push(Action::TurnLeft),
            Clause::Turn(Side::Right) => out.push(Action::TurnRight),
            _ => {}
        }
    }
    out
}

pub fn decode_actions(msg: &Message) -> Result<Vec<Action>, CodecError> {
    if msg.kind != Kind::Instruction {
        return Err(CodecError::WrongKind {
            expected: Kind::Instruction,
            found: msg.kind,
        });
    }
    Ok(motion_actions(msg))
}

/// Motion clauses of a question re-simulated on `map`; the endpoint clause is not read.
pub fn decoded_endpoint(
    msg: &Message,
    map: &GridMap,
    agent_pose: Pose,
) -> Result<Cell, CodecError> {
    if msg.kind != Kind::Question {
        return Err(CodecError::WrongKind {
            expected: Kind::Question,
            found: msg.kind,
        });
    }
    let mut pose = agent_pose;
    for a in motion_actions(msg) {
        pose = step(pose, a, map).pose;
    }
    Ok(pose.cell())
}

pub fn decode_direction(msg: &Message, map: &GridMap, agent_pose: Pose) -> Result<u8, CodecError> {
    let end = decoded_endpoint(msg, map, agent_pose)?;
    relative_bearing(agent_pose, end)
        .map(bearing_sector)
        .ok_or(CodecError::DegenerateEndpoint)
}

/// Sector named by a message's endpoint clause.
pub fn endpoint_sector(msg: &Message) -> Option<u8> {
    let (d, c, s) = msg.endpoint()?;
    (d > 0.0).then(|| bearing_sector(relative_bearing_of(c, s, crate::env::Heading::East)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub p_corrupt: f64,
    pub token_drop: bool,
    pub token_substitute: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            p_corrupt: 0.0,
            token_drop: true,
            token_substitute: true,
        }
    }
}

impl NoiseConfig {
    pub fn drop_only(p: f64) -> Self {
        NoiseConfig {
            p_corrupt: p,
            token_drop: true,
            token_substitute: false,
        }
    }

    pub fn substitute_only(p: f64) -> Self {
        NoiseConfig {
            p_corrupt: p,
            token_drop: false,
            token_substitute: true,
        }
    }
}

/// With probability `p_corrupt`, drops one clause or perturbs one clause's
/// parameter. Output always satisfies the grammar; a mode with no legal edit
/// leaves the message unchanged.
pub fn corrupt(msg: &Message, noise: &NoiseConfig, rng: &mut Rng) -> Message {
    if !rng.random_bool(noise.p_corrupt.clamp(0.0, 1.0)) {
        return msg.clone();
    }
    let drop = match (noise.token_drop, noise.token_substitute) {
        (true, true) => rng.random_bool(0.5),
        (true, false) => true,
        (false, true) => false,
        (false, false) => return msg.clone(),
    };
    let mut out = msg.clone();
    if drop {
        // endpoints and verdicts carry the message kind, so they stay
        let droppable: Vec<usize> = (0..out.clauses.len())
            .filter(|&i| {
                !matches!(
                    out.clauses[i],
                    Clause::Endpoint { .. } | Clause::Yes | Clause::No
                )
            })
            .collect();
        if out.clauses.len() > 1 && !droppable.is_empty() {
            let i = droppable[rng.random_range(0..droppable.len())];
            out.clauses.remove(i);
        }
    } else {
        let i = rng.random_range(0..out.clauses.len());
        match &mut out.clauses[i] {
            Clause::Forward(n) => {
                let hi = (*n + 2).max(3);
                let mut m = rng.random_range(1..hi);
                if m >= *n {
                    m += 1;
                }
                *n = m;
            }
            Clause::Turn(side) => {
                *side = match side {
                    Side::Left => Side::Right,
                    Side::Right => Side::Left,
                }
            }
            Clause::Endpoint { d_f, .. } => {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                out.clauses[i] = Clause::endpoint(*d_f, theta.cos(), theta.sin());
            }
            Clause::Yes => out.clauses[i] = Clause::No,
            // a "yes" stands alone
            Clause::No => out.clauses = vec![Clause::Yes],
            Clause::Landmark(_) => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{load_map, Heading};
    use crate::lang::parse;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;
    use Action::{MoveForward as F, TurnLeft as L, TurnRight as R};

    #[test]
    fn encode_question_example() {
        let m = encode_pathlet(
            &[F, F, L, F],
            Pose::new(0, 0, Heading::East),
            Kind::Question,
        )
        .unwrap();
        assert_eq!(
            m.clauses,
            vec![
                Clause::Forward(2),
                Clause::Turn(Side::Left),
                Clause::Forward(1),
                Clause::Endpoint {
                    d_f: 2.23607,
                    cos_tf: 0.89443,
                    sin_tf: 0.44721
                }
            ]
        );
        assert_eq!(
            m.to_string(),
            "question forward 2 ; turn left ; forward 1 ; endpoint 2.23607 0.89443 0.44721"
        );
    }

    #[test]
    fn encode_simple_instructions() {
        let p = Pose::new(3, 3, Heading::South);
        assert_eq!(
            encode_pathlet(&[F], p, Kind::Instruction).unwrap().clauses,
            vec![Clause::Forward(1)]
        );
        assert_eq!(
            encode_pathlet(&[L, R], p, Kind::Instruction)
                .unwrap()
                .clauses,
            vec![Clause::Turn(Side::Left), Clause::Turn(Side::Right)]
        );
        assert_eq!(
            encode_pathlet(&[], p, Kind::Instruction),
            Err(CodecError::EmptyActionList)
        );
        assert_eq!(
            encode_pathlet(&[F, Action::Stop], p, Kind::Instruction),
            Err(CodecError::ContainsStop)
        );
    }

    #[test]
    fn endpoint_scales_with_spacing() {
        let m = encode_pathlet_scaled(&[F, F], Pose::new(0, 0, Heading::East), Kind::Question, 0.5)
            .unwrap();
        assert_eq!(m.endpoint(), Some((1.0, 1.0, 0.0)));
    }

    #[test]
    fn decode_actions_examples() {
        let m = Message::instruction(vec![Clause::Forward(2), Clause::Turn(Side::Left)]);
        assert_eq!(decode_actions(&m).unwrap(), vec![F, F, L]);
        assert_eq!(
            decode_actions(&Message::instruction(vec![Clause::Turn(Side::Right)])).unwrap(),
            vec![R]
        );
        let q = parse("question forward 1 ; endpoint 1 1 0").unwrap();
        assert!(matches!(
            decode_actions(&q),
            Err(CodecError::WrongKind { .. })
        ));
    }

    #[test]
    fn decode_direction_examples() {
        let open = GridMap::open(8, 8);
        let start = Pose::new(0, 0, Heading::East);
        let q = encode_pathlet(&[F, F, L, F], start, Kind::Question).unwrap();
        assert_eq!(decode_direction(&q, &open, start), Ok(0));
        let q = encode_pathlet(&[L, F], start, Kind::Question).unwrap();
        assert_eq!(decode_direction(&q, &open, start), Ok(3));
        // walls all around the start cell
        let boxed = load_map(".#.\n#.#\n.#.\n").unwrap();
        let mid = Pose::new(1, 1, Heading::East);
        let q = encode_pathlet(&[F, L, F], mid, Kind::Question).unwrap();
        assert_eq!(
            decode_direction(&q, &boxed, mid),
            Err(CodecError::DegenerateEndpoint)
        );
        assert!(decode_direction(&Message::answer_yes(), &open, start).is_err());
    }

    #[test]
    fn decode_ignores_the_endpoint_clause() {
        let open = GridMap::open(8, 8);
        let start = Pose::new(0, 0, Heading::East);
        // endpoint says due north, motion says due east
        let q = parse("question forward 2 ; endpoint 2 0 1").unwrap();
        assert_eq!(decode_direction(&q, &open, start), Ok(0));
        assert_eq!(endpoint_sector(&q), Some(3));
    }

    #[test]
    fn corrupt_zero_probability_is_identity() {
        let m = parse("forward 2 ; turn left").unwrap();
        let mut rng = stream(3, Stream::Corruption);
        for _ in 0..20 {
            assert_eq!(corrupt(&m, &NoiseConfig::default(), &mut rng), m);
        }
    }

    #[test]
    fn corrupt_drop_removes_one_clause() {
        let m = parse("forward 2 ; turn left").unwrap();
        let out = corrupt(
            &m,
            &NoiseConfig::drop_only(1.0),
            &mut stream(11, Stream::Corruption),
        );
        assert_eq!(out.clauses.len(), 1);
    }

    #[test]
    fn corrupt_substitutes_the_verdict() {
        let out = corrupt(
            &Message::answer_yes(),
            &NoiseConfig::substitute_only(1.0),
            &mut stream(5, Stream::Corruption),
        );
        assert_eq!(out, parse("answer no").unwrap());
    }

    #[test]
    fn corrupt_is_seeded() {
        let m = parse(
            "question forward 3 ; turn right ; forward 1 ; endpoint 3.16228 0.94868 -0.31623",
        )
        .unwrap();
        let noise = NoiseConfig {
            p_corrupt: 0.7,
            ..NoiseConfig::default()
        };
        let a: Vec<Message> = {
            let mut rng = stream(9, Stream::Corruption);
            (0..30).map(|_| corrupt(&m, &noise, &mut rng)).collect()
        };
        let b: Vec<Message> = {
            let mut rng = stream(9, Stream::Corruption);
            (0..30).map(|_| corrupt(&m, &noise, &mut rng)).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().any(|x| *x != m));
    }

    /// Exhaustive over the 4^4 = 256 length-4 sequences of F, L, R and Stop-free
    /// subsequences thereof; the sector is checked against a direct atan2.
    #[test]
    fn all_short_pathlets_round_trip() {
        let open = GridMap::open(11, 11);
        let start = Pose::new(5, 5, Heading::North);
        let alphabet = [F, L, R];
        let mut checked = 0;
        for len in 1..=4u32 {
            for code in 0..3usize.pow(len) {
                let mut c = code;
                let actions: Vec<Action> = (0..len)
                    .map(|_| {
                        let a = alphabet[c % 3];
                        c /= 3;
                        a
                    })
                    .collect();
                let ins = encode_pathlet(&actions, start, Kind::Instruction).unwrap();
                assert_eq!(
                    decode_actions(&parse(&ins.to_string()).unwrap()).unwrap(),
                    actions
                );
                let q = parse(
                    &encode_pathlet(&actions, start, Kind::Question)
                        .unwrap()
                        .to_string(),
                )
                .unwrap();
                let mut end = start;
                for &a in &actions {
                    end = step(end, a, &open).pose;
                }
                let (dx, dy) = (f64::from(end.x - start.x), f64::from(end.y - start.y));
                if dx == 0.0 && dy == 0.0 {
                    assert_eq!(
                        decode_direction(&q, &open, start),
                        Err(CodecError::DegenerateEndpoint)
                    );
                    continue;
                }
                // heading North is 90 degrees; bearings are counterclockwise
                let expected =
                    ((dy.atan2(dx).to_degrees() - 90.0).rem_euclid(360.0) / 30.0).floor() as u8;
                assert_eq!(
                    decode_direction(&q, &open, start),
                    Ok(expected),
                    "{actions:?}"
                );
                assert_eq!(endpoint_sector(&q), Some(expected), "{actions:?}");
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    fn arb_actions() -> impl Strategy<Value = Vec<Action>> {
        prop::collection::vec(prop::sample::select(vec![F, L, R]), 1..12)
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        let pose = (0i32..6, 0i32..6, 0usize..4)
            .prop_map(|(x, y, h)| Pose::new(x, y, Heading::from_index(h)));
        let landmark = prop::option::of(prop::sample::select(vec!["a", "b", "kitchen", "z9"]));
        (arb_actions(), pose, any::<bool>(), landmark).prop_map(|(a, p, question, lm)| {
            let kind = if question {
                Kind::Question
            } else {
                Kind::Instruction
            };
            let mut m = encode_pathlet(&a, p, kind).unwrap();
            if let Some(id) = lm {
                m.clauses.push(Clause::Landmark(id.to_string()));
            }
            m
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(m in arb_message()) {
            prop_assert_eq!(parse(&m.to_string()).unwrap(), m);
        }

        #[test]
        fn instruction_decoding_inverts_encoding(a in arb_actions(), h in 0usize..4) {
            let m = encode_pathlet(&a, Pose::new(0, 0, Heading::from_index(h)), Kind::Instruction).unwrap();
            prop_assert_eq!(decode_actions(&m).unwrap(), a);
        }

        #[test]
        fn corruption_keeps_grammar(m in arb_message(), seed in any::<u64>(), p in 0.0f64..=1.0) {
            let mut rng = stream(seed, Stream::Corruption);
            let out = corrupt(&m, &NoiseConfig { p_corrupt: p, ..NoiseConfig::default() }, &mut rng);
            prop_assert!(parse(&out.to_string()).is_ok(), "{}", out);
            let ans = corrupt(&Message::answer_no(Some(&m).filter(|m| m.kind == Kind::Instruction)), &NoiseConfig::substitute_only(1.0), &mut rng);
            prop_assert!(parse(&ans.to_string()).is_ok(), "{}", ans);
        }
    }
}
