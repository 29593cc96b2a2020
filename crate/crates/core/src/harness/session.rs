//! Human-oracle sessions over a local socket.
//!
//! Records are newline-delimited JSON objects tagged by `type`. The server
//! sends `hello` once, then per episode a `state` every step, an `ask` or
//! `query` whenever the agent interacts, and `episode_end`. The operator
//! sends `reply` records. A reply that fails the grammar, or does not fit the
//! pending request, is answered with `error` and the request is re-issued.
//! The runner blocks on one request at a time, up to the oracle timeout.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::control::{
    run_episode_observed, EpisodeLog, EpisodeObserver, Policy, RunConfig, RunError,
};
use crate::env::{Cell, Pose, World};
use crate::lang::{parse, Kind};
use crate::oracle::{HumanChannel, HumanError, HumanRequest, Oracle, OracleConfig, OracleMode};
use crate::rng::mix;

pub const PROTOCOL_VERSION: u32 = 1;

/// Replies buffered between the socket reader and the runner.
const INBOX_CAPACITY: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Hello {
        version: u32,
        episodes: usize,
    },
    State {
        map_id: String,
        t: u32,
        width: usize,
        height: usize,
        walls: Vec<[i32; 2]>,
        known: Vec<[i32; 2]>,
        goal: [i32; 2],
        pose: Pose,
        trace: Vec<[i32; 2]>,
        budget_remaining: u32,
        sound_active: bool,
    },
    Ask {
        id: u64,
        question: String,
        pose: Pose,
        budget_remaining: u32,
    },
    Query {
        id: u64,
        pose: Pose,
        budget_remaining: u32,
    },
    Reply {
        /// Request being answered; replies without one answer the pending request.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        text: String,
    },
    Error {
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position: Option<usize>,
    },
    EpisodeEnd {
        map_id: String,
        success: bool,
        steps: u32,
        final_dtg: u32,
        queries: usize,
        questions: usize,
        fallbacks: usize,
    },
}

impl Record {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("records serialize");
        s.push('\n');
        s
    }
}

fn xy(c: Cell) -> [i32; 2] {
    [c.x, c.y]
}

/// Write half of the connection; `None` once the operator is gone.
type Outbox = Arc<Mutex<Option<TcpStream>>>;

fn send(out: &Outbox, rec: &Record) -> bool {
    let mut guard = out.lock().unwrap_or_else(|e| e.into_inner());
    let Some(stream) = guard.as_mut() else {
        return false;
    };
    if stream
        .write_all(rec.to_line().as_bytes())
        .and_then(|()| stream.flush())
        .is_err()
    {
        log::warn!("session: write failed; dropping connection");
        *guard = None;
        return false;
    }
    true
}

pub struct SessionServer {
    listener: TcpListener,
}

impl SessionServer {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        Ok(SessionServer {
            listener: TcpListener::bind(addr)?,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Waits for the single operator connection.
    pub fn accept(&self) -> io::Result<Session> {
        let (stream, peer) = self.listener.accept()?;
        log::info!("session: operator connected from {peer}");
        Session::start(stream)
    }
}

/// A live operator connection.
pub struct Session {
    out: Outbox,
    inbox: Receiver<(Option<u64>, String)>,
}

impl Session {
    fn start(stream: TcpStream) -> io::Result<Self> {
        let read = stream.try_clone()?;
        let out: Outbox = Arc::new(Mutex::new(Some(stream)));
        let (tx, inbox) = sync_channel(INBOX_CAPACITY);
        let reader_out = Arc::clone(&out);
        thread::spawn(move || read_loop(read, &reader_out, &tx));
        Ok(Session { out, inbox })
    }

    pub fn send(&self, rec: &Record) -> bool {
        send(&self.out, rec)
    }

    /// Splits the session into the oracle's reply channel and the step observer.
    pub fn split(self) -> (SessionChannel, SessionObserver) {
        let channel = SessionChannel {
            out: Arc::clone(&self.out),
            inbox: self.inbox,
            next_id: 0,
        };
        let observer = SessionObserver {
            out: self.out,
            trace: Vec::new(),
        };
        (channel, observer)
    }
}

fn read_loop(stream: TcpStream, out: &Outbox, tx: &SyncSender<(Option<u64>, String)>) {
    for line in BufReader::new(stream).lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Record>(&line) {
            Ok(Record::Reply { id, text }) => {
                if tx.send((id, text)).is_err() {
                    break;
                }
            }
            Ok(other) => {
                send(
                    out,
                    &Record::Error {
                        message: format!("unexpected record from operator: {other:?}"),
                        position: None,
                    },
                );
            }
            Err(e) => {
                send(
                    out,
                    &Record::Error {
                        message: format!("bad record: {e}"),
                        position: Some(e.column()),
                    },
                );
            }
        }
    }
    log::warn!("session: operator disconnected");
    // dropping `tx` tells the runner
}

/// Why an operator reply was refused, with the token position when the grammar failed.
pub fn check_reply(text: &str, is_question: bool) -> Result<(), (String, Option<usize>)> {
    let msg = parse(text).map_err(|e| (e.to_string(), e.position()))?;
    let fits = if is_question {
        msg.verdict().is_some()
    } else {
        msg.kind == Kind::Instruction && msg.guidance().is_some()
    };
    if fits {
        Ok(())
    } else if is_question {
        Err((
            "a question needs \"answer yes\" or \"answer no ; ...\"".to_string(),
            None,
        ))
    } else {
        Err((
            "a query needs an instruction such as \"forward 2 ; turn left\"".to_string(),
            None,
        ))
    }
}

/// The oracle side of a session.
pub struct SessionChannel {
    out: Outbox,
    inbox: Receiver<(Option<u64>, String)>,
    next_id: u64,
}

impl HumanChannel for SessionChannel {
    fn request(&mut self, req: &HumanRequest, timeout: Duration) -> Result<String, HumanError> {
        self.next_id += 1;
        let id = self.next_id;
        let record = match &req.question {
            Some(q) => Record::Ask {
                id,
                question: q.clone(),
                pose: req.pose,
                budget_remaining: req.budget_remaining,
            },
            None => Record::Query {
                id,
                pose: req.pose,
                budget_remaining: req.budget_remaining,
            },
        };
        if !send(&self.out, &record) {
            return Err(HumanError::Disconnected);
        }
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let (reply_id, text) = match self.inbox.recv_timeout(left) {
                Ok(r) => r,
                Err(RecvTimeoutError::Timeout) => return Err(HumanError::Timeout),
                Err(RecvTimeoutError::Disconnected) => return Err(HumanError::Disconnected),
            };
            if reply_id.is_some_and(|r| r != id) {
                log::debug!("session: dropping stale reply to request {reply_id:?}");
                continue;
            }
            match check_reply(&text, req.question.is_some()) {
                Ok(()) => return Ok(text),
                Err((message, position)) => {
                    send(&self.out, &Record::Error { message, position });
                    if !send(&self.out, &record) {
                        return Err(HumanError::Disconnected);
                    }
                }
            }
        }
    }
}

/// Streams `state` and `episode_end` records.
pub struct SessionObserver {
    out: Outbox,
    trace: Vec<[i32; 2]>,
}

impl EpisodeObserver for SessionObserver {
    fn on_step(&mut self, world: &World, state: &AgentState, t: u32) {
        let here = xy(state.pose.cell());
        if self.trace.last() != Some(&here) {
            self.trace.push(here);
        }
        let map = &world.map;
        let walls = (0..map.len())
            .map(|i| map.cell_at(i))
            .filter(|&c| !map.is_free(c))
            .map(xy)
            .collect();
        send(
            &self.out,
            &Record::State {
                map_id: map.id.clone(),
                t,
                width: map.width(),
                height: map.height(),
                walls,
                known: state.known.iter().map(xy).collect(),
                goal: xy(world.goal()),
                pose: state.pose,
                trace: self.trace.clone(),
                budget_remaining: state.budget_remaining,
                sound_active: world.sound_active(t),
            },
        );
    }

    fn on_end(&mut self, world: &World, log: &EpisodeLog) {
        let fallbacks = log.events.iter().filter(|e| e.fallback).count();
        send(
            &self.out,
            &Record::EpisodeEnd {
                map_id: world.map.id.clone(),
                success: log.outcome.success,
                steps: log.outcome.steps,
                final_dtg: log.outcome.final_dtg,
                queries: log.queries(),
                questions: log.questions(),
                fallbacks,
            },
        );
        self.trace.clear();
    }
}

/// Runs `worlds` in order against one connected operator. A lost operator
/// leaves the remaining interactions to the scripted oracle.
pub fn serve_episodes(
    session: Session,
    worlds: &[World],
    policy: &Policy,
    oracle_cfg: &OracleConfig,
    run_cfg: &RunConfig,
    seed: u64,
) -> Result<Vec<EpisodeLog>, RunError> {
    session.send(&Record::Hello {
        version: PROTOCOL_VERSION,
        episodes: worlds.len(),
    });
    let (channel, mut observer) = session.split();
    let cfg = OracleConfig {
        mode: OracleMode::Human,
        ..*oracle_cfg
    };
    let mut oracle = Oracle::with_human(cfg, Box::new(channel));
    worlds
        .iter()
        .enumerate()
        .map(|(i, w)| {
            run_episode_observed(
                w,
                policy,
                &mut oracle,
                run_cfg,
                mix(seed, i as u64),
                &mut observer,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::BaselineKind;
    use crate::env::{Episode, GridMap, Heading, SoundSchedule, SoundSource};

    fn world() -> World {
        let map = GridMap::open(7, 7).with_id("open7");
        let ep = Episode {
            map_id: "open7".into(),
            start: Pose::new(0, 0, Heading::East),
            sources: vec![SoundSource {
                cell: Cell::new(5, 5),
                label: 0,
                schedule: SoundSchedule::always_on(30),
                is_target: true,
            }],
            horizon: 30,
            proximity_radius: 1,
            seed: 0,
        };
        World::new(map, ep).unwrap()
    }

    fn read_record(r: &mut impl BufRead) -> Option<Record> {
        let mut line = String::new();
        (r.read_line(&mut line).ok()? > 0).then(|| serde_json::from_str(&line).unwrap())
    }

    fn write_record(w: &mut TcpStream, rec: &Record) {
        w.write_all(rec.to_line().as_bytes()).unwrap();
    }

    /// Serves one episode while `operator` drives the client end; returns the log and every record the client saw.
    fn session_run(
        timeout_secs: f64,
        operator: impl FnOnce(&mut BufReader<TcpStream>, &mut TcpStream, &mut Vec<Record>)
            + Send
            + 'static,
    ) -> (EpisodeLog, Vec<Record>) {
        let server = SessionServer::bind("127.0.0.1:0").unwrap();
        let addr = server.local_addr().unwrap();
        let client = thread::spawn(move || {
            let stream = TcpStream::connect(addr).unwrap();
            let mut w = stream.try_clone().unwrap();
            let mut r = BufReader::new(stream);
            let mut seen = Vec::new();
            operator(&mut r, &mut w, &mut seen);
            seen
        });
        let session = server.accept().unwrap();
        let cfg = OracleConfig {
            human_timeout_secs: timeout_secs,
            ..OracleConfig::default()
        };
        let logs = serve_episodes(
            session,
            &[world()],
            &Policy::Baseline(BaselineKind::Uniform),
            &cfg,
            &RunConfig::default(),
            1,
        )
        .unwrap();
        (logs.into_iter().next().unwrap(), client.join().unwrap())
    }

    #[test]
    fn records_round_trip() {
        let recs = [
            Record::Reply {
                id: None,
                text: "answer yes".into(),
            },
            Record::Error {
                message: "x".into(),
                position: Some(1),
            },
            Record::Query {
                id: 3,
                pose: Pose::new(1, 2, Heading::North),
                budget_remaining: 1,
            },
        ];
        for r in recs {
            let line = r.to_line();
            assert!(line.ends_with('\n') && !line.trim_end().contains('\n'));
            assert_eq!(serde_json::from_str::<Record>(&line).unwrap(), r);
        }
        let reply: Record = serde_json::from_str(r#"{"type":"reply","text":"forward 1"}"#).unwrap();
        assert_eq!(
            reply,
            Record::Reply {
                id: None,
                text: "forward 1".into()
            }
        );
    }

    #[test]
    fn reply_validation() {
        assert!(check_reply("answer yes", true).is_ok());
        assert!(check_reply("answer no ; turn left", true).is_ok());
        assert!(check_reply("forward 2 ; turn left", false).is_ok());
        assert!(check_reply("forward 2", true).is_err());
        assert!(check_reply("answer yes", false).is_err());
        let (_, pos) = check_reply("fwd 2", false).unwrap_err();
        assert_eq!(pos, Some(0));
    }

    #[test]
    fn operator_answers_steer_the_episode() {
        let (log, seen) = session_run(10.0, |r, w, seen| {
            let mut bad_sent = false;
            while let Some(rec) = read_record(r) {
                match &rec {
                    Record::Ask { id, .. } if !bad_sent => {
                        bad_sent = true;
                        write_record(
                            w,
                            &Record::Reply {
                                id: Some(*id),
                                text: "fwd 2".into(),
                            },
                        );
                    }
                    Record::Ask { id, .. } => write_record(
                        w,
                        &Record::Reply {
                            id: Some(*id),
                            text: "answer yes".into(),
                        },
                    ),
                    Record::Query { id, .. } => write_record(
                        w,
                        &Record::Reply {
                            id: Some(*id),
                            text: "forward 2 ; turn left".into(),
                        },
                    ),
                    Record::EpisodeEnd { .. } => {
                        seen.push(rec);
                        break;
                    }
                    _ => {}
                }
                seen.push(rec);
            }
        });
        assert!(matches!(
            seen[0],
            Record::Hello {
                version: PROTOCOL_VERSION,
                episodes: 1
            }
        ));
        let err = seen
            .iter()
            .position(|r| matches!(r, Record::Error { .. }))
            .expect("bad reply refused");
        assert!(matches!(
            &seen[err],
            Record::Error {
                position: Some(0),
                ..
            }
        ));
        // the refused ask is re-issued with the same id
        let (Record::Ask { id: a, .. }, Record::Ask { id: b, .. }) =
            (&seen[err - 1], &seen[err + 1])
        else {
            panic!("ask not re-issued: {:?}", &seen[err - 1..=err + 1]);
        };
        assert_eq!(a, b);
        assert!(log.events.iter().all(|e| !e.fallback));
        // the first ask was answered yes, so the agent ran its own forecast
        assert_eq!(
            log.events[0].kind,
            crate::control::InteractionKind::Question
        );
        if let Some(q) = log
            .events
            .iter()
            .find(|e| e.kind == crate::control::InteractionKind::Query)
        {
            let t = q.t as usize;
            let acts: Vec<_> = log.steps[t..t + 3].iter().map(|s| s.action).collect();
            use crate::env::Action::*;
            assert_eq!(acts, vec![MoveForward, MoveForward, TurnLeft]);
        }
        let states = seen
            .iter()
            .filter(|r| matches!(r, Record::State { .. }))
            .count();
        assert_eq!(states as u32, log.outcome.steps);
        assert!(matches!(seen.last(), Some(Record::EpisodeEnd { .. })));
    }

    #[test]
    fn silence_and_disconnect_fall_back_to_script() {
        let (log, _) = session_run(0.05, |r, _w, seen| {
            // ignore the first request, then hang up
            while let Some(rec) = read_record(r) {
                let is_request = matches!(rec, Record::Ask { .. } | Record::Query { .. });
                seen.push(rec);
                if is_request
                    && seen
                        .iter()
                        .filter(|r| matches!(r, Record::Ask { .. } | Record::Query { .. }))
                        .count()
                        == 2
                {
                    break;
                }
            }
        });
        assert!(!log.events.is_empty());
        assert!(log.events.iter().all(|e| e.fallback));
    }
}
