//! Navigation metrics over a set of episode logs, plus the two analysis
//! histograms: confidence at option invocation and interaction timing.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{EpisodeLog, InteractionKind, OptionKind};
use crate::env::World;
use crate::geodesy::action_geodesic;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no episode logs")]
    EmptyLogs,
    #[error("log {index} does not belong to its episode ({detail})")]
    MismatchedEpisode { index: usize, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub map_id: String,
    pub seed: u64,
    pub success: bool,
    /// Shortest cell geodesic from the start.
    pub shortest: u32,
    /// Fewest actions from the start pose.
    pub min_actions: u32,
    pub path_length: u32,
    pub actions: u32,
    pub steps: u32,
    pub final_dtg: u32,
    pub stopped_while_silent: bool,
    pub queries: usize,
    pub questions: usize,
    pub wrong_questions: usize,
}

impl EpisodeRow {
    pub fn spl(&self) -> f64 {
        weighted(self.success, self.shortest, self.path_length)
    }

    pub fn sna(&self) -> f64 {
        weighted(self.success, self.min_actions, self.actions)
    }
}

fn weighted(success: bool, best: u32, taken: u32) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = best.max(taken);
    if denom == 0 {
        1.0
    } else {
        f64::from(best) / f64::from(denom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sr: f64,
    pub spl: f64,
    pub sna: f64,
    pub dtg: f64,
    pub sws: f64,
    pub sni: f64,
    pub sno: f64,
    pub n: usize,
    pub n_l: usize,
    pub n_ques: usize,
    pub n_ques_wrong: usize,
    pub rows: Vec<EpisodeRow>,
}

/// Success per language interaction. With no interactions at all it falls back to `sr`.
pub fn sni(sr: f64, n: usize, n_ques: usize, n_l: usize) -> f64 {
    per_interaction(sr, n, n_ques + n_l)
}

/// Success per oracle instruction (direct queries plus "no" answers).
pub fn sno(sr: f64, n: usize, n_l: usize, n_ques_wrong: usize) -> f64 {
    per_interaction(sr, n, n_l + n_ques_wrong)
}

fn per_interaction(sr: f64, n: usize, count: usize) -> f64 {
    if count == 0 || n == 0 {
        sr
    } else {
        sr / (count as f64 / n as f64)
    }
}

fn row(index: usize, log: &EpisodeLog, world: &World) -> Result<EpisodeRow, MetricsError> {
    let mismatch = |detail: String| MetricsError::MismatchedEpisode { index, detail };
    if log.map_id != world.map.id || log.episode_seed != world.episode.seed {
        return Err(mismatch(format!(
            "log is for {}#{}, episode is {}#{}",
            log.map_id, log.episode_seed, world.map.id, world.episode.seed
        )));
    }
    let start = world.episode.start;
    let shortest = world
        .goal_distance(start.cell())
        .ok_or_else(|| mismatch("goal unreachable".into()))?;
    let min_actions = action_geodesic(&world.map, start, world.goal())
        .ok()
        .flatten()
        .ok_or_else(|| mismatch("goal unreachable".into()))?;
    let final_dtg = world
        .goal_distance(log.outcome.final_cell)
        .ok_or_else(|| mismatch("final cell off the map".into()))?;
    Ok(EpisodeRow {
        map_id: log.map_id.clone(),
        seed: log.episode_seed,
        success: log.outcome.success,
        shortest,
        min_actions,
        path_length: log.outcome.path_length,
        actions: log.outcome.actions,
        steps: log.outcome.steps,
        final_dtg,
        stopped_while_silent: log.outcome.stopped_while_silent,
        queries: log.queries(),
        questions: log.questions(),
        wrong_questions: log.wrong_questions(),
    })
}

/// Aggregates rows in the given order.
pub fn aggregate(rows: Vec<EpisodeRow>) -> Result<MetricsReport, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyLogs);
    }
    let n = rows.len();
    let mean = |f: &dyn Fn(&EpisodeRow) -> f64| rows.iter().map(f).sum::<f64>() / n as f64;
    let sr = mean(&|r| f64::from(u8::from(r.success)));
    let n_l = rows.iter().map(|r| r.queries).sum();
    let n_ques = rows.iter().map(|r| r.questions).sum();
    let n_ques_wrong = rows.iter().map(|r| r.wrong_questions).sum();
    Ok(MetricsReport {
        sr,
        spl: mean(&EpisodeRow::spl),
        sna: mean(&EpisodeRow::sna),
        dtg: mean(&|r| f64::from(r.final_dtg)),
        sws: mean(&|r| f64::from(u8::from(r.success && r.stopped_while_silent))),
        sni: sni(sr, n, n_ques, n_l),
        sno: sno(sr, n, n_l, n_ques_wrong),
        n,
        n_l,
        n_ques,
        n_ques_wrong,
        rows,
    })
}

/// `logs[i]` must be the log of `worlds[i]`.
pub fn compute_metrics(
    logs: &[EpisodeLog],
    worlds: &[&World],
) -> Result<MetricsReport, MetricsError> {
    if logs.is_empty() {
        return Err(MetricsError::EmptyLogs);
    }
    if logs.len() != worlds.len() {
        return Err(MetricsError::MismatchedEpisode {
            index: logs.len().min(worlds.len()),
            detail: format!("{} logs for {} episodes", logs.len(), worlds.len()),
        });
    }
    let rows = logs
        .par_iter()
        .zip(worlds.par_iter())
        .enumerate()
        .map(|(i, (l, w))| row(i, l, w))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate(rows)
}

pub const METRIC_COLUMNS: [&str; 7] = ["SR", "SPL", "SNA", "DTG", "SWS", "SNI", "SNO"];

impl MetricsReport {
    pub fn values(&self) -> [f64; 7] {
        [
            self.sr, self.spl, self.sna, self.dtg, self.sws, self.sni, self.sno,
        ]
    }

    pub fn csv_header() -> String {
        format!("{},N,N_l,N_ques,N_ques_wrong", METRIC_COLUMNS.join(","))
    }

    pub fn csv_row(&self) -> String {
        let v: Vec<String> = self.values().iter().map(|x| format!("{x:.5}")).collect();
        format!(
            "{},{},{},{},{}",
            v.join(","),
            self.n,
            self.n_l,
            self.n_ques,
            self.n_ques_wrong
        )
    }
}

/// An aligned plain-text table, one labelled row per report.
pub fn text_table(rows: &[(String, &MetricsReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:width$}", "setup");
    for c in METRIC_COLUMNS {
        let _ = write!(out, " {c:>8}");
    }
    out.push('\n');
    for (label, r) in rows {
        let _ = write!(out, "{label:width$}");
        for v in r.values() {
            let _ = write!(out, " {v:>8.4}");
        }
        out.push('\n');
    }
    out
}

pub const BINS: usize = 10;

fn bin(v: f64) -> usize {
    ((v * BINS as f64).floor().max(0.0) as usize).min(BINS - 1)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Analysis {
    /// Per option (g, l, ques): counts of decisions by confidence decile.
    pub confidence: [[u64; BINS]; 3],
    /// Confidence at every decision, per option, in log order.
    pub invocations: [Vec<f64>; 3],
    /// Interaction counts by decile of normalised episode time:
    /// direct queries, correct questions, incorrect questions.
    pub timing: [[u64; BINS]; 3],
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

impl Analysis {
    pub fn median_confidence(&self, o: OptionKind) -> Option<f64> {
        median(&self.invocations[o.index()])
    }

    pub fn confidence_csv(&self) -> String {
        let mut out = String::from("option,bin_lo,bin_hi,count\n");
        for o in OptionKind::ALL {
            for (b, c) in self.confidence[o.index()].iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{o},{:.1},{:.1},{c}",
                    b as f64 / BINS as f64,
                    (b + 1) as f64 / BINS as f64
                );
            }
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,query,question_correct,question_wrong\n");
        for b in 0..BINS {
            let _ = writeln!(
                out,
                "{:.1},{:.1},{},{},{}",
                b as f64 / BINS as f64,
                (b + 1) as f64 / BINS as f64,
                self.timing[0][b],
                self.timing[1][b],
                self.timing[2][b]
            );
        }
        out
    }
}

pub fn analyze_logs(logs: &[EpisodeLog]) -> Result<Analysis, MetricsError> {
    if logs.is_empty() {
        return Err(MetricsError::EmptyLogs);
    }
    let mut a = Analysis::default();
    for log in logs {
        for d in &log.decisions {
            let c = d.features[0];
            a.confidence[d.option.index()][bin(c)] += 1;
            a.invocations[d.option.index()].push(c);
        }
        let span = f64::from(log.outcome.steps.max(1));
        for e in &log.events {
            let series = match e.kind {
                InteractionKind::Query => 0,
                InteractionKind::Question if e.question_correct.unwrap_or(!e.wrong_question) => 1,
                InteractionKind::Question => 2,
            };
            a.timing[series][bin(f64::from(e.t) / span)] += 1;
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{
        run_episode, DecisionRecord, InteractionEvent, Mask, Outcome, Policy, RunConfig,
    };
    use crate::env::{generate_episode, load_map, Cell, EpisodeConfig};
    use crate::oracle::{Oracle, OracleConfig, Verdict};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn worked_interaction_ratios() {
        assert_abs_diff_eq!(sni(0.5, 10, 20, 10), 0.5 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sni(0.5, 10, 20, 10), 0.16667, epsilon = 1e-5);
        assert_abs_diff_eq!(sno(0.5, 10, 10, 5), 0.33333, epsilon = 1e-5);
        assert_eq!(sni(0.4, 10, 0, 0), 0.4);
        assert_eq!(sno(0.4, 10, 0, 0), 0.4);
    }

    fn row_with(
        success: bool,
        shortest: u32,
        path: u32,
        min_actions: u32,
        actions: u32,
    ) -> EpisodeRow {
        EpisodeRow {
            map_id: "m".into(),
            seed: 0,
            success,
            shortest,
            min_actions,
            path_length: path,
            actions,
            steps: actions + 1,
            final_dtg: 0,
            stopped_while_silent: false,
            queries: 0,
            questions: 0,
            wrong_questions: 0,
        }
    }

    #[test]
    fn optimal_run_scores_one() {
        let r = aggregate(vec![row_with(true, 6, 6, 8, 8)]).unwrap();
        assert_eq!((r.sr, r.spl, r.sna), (1.0, 1.0, 1.0));
        let r = aggregate(vec![
            row_with(true, 6, 12, 8, 10),
            row_with(false, 3, 3, 3, 3),
        ])
        .unwrap();
        assert_abs_diff_eq!(r.spl, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r.sna, 0.4, epsilon = 1e-12);
    }

    fn episode_logs() -> (Vec<World>, Vec<EpisodeLog>) {
        let map = load_map(".......\n.##.#..\n.......\n..#.#..\n.......").unwrap();
        let cfg = EpisodeConfig {
            horizon: 40,
            ..EpisodeConfig::default()
        };
        let worlds: Vec<World> = (0..8)
            .map(|s| World::new(map.clone(), generate_episode(&map, &cfg, s).unwrap()).unwrap())
            .collect();
        let logs = worlds
            .iter()
            .map(|w| {
                run_episode(
                    w,
                    &Policy::NavOnly,
                    &mut Oracle::new(OracleConfig::default()),
                    &RunConfig::default(),
                    1,
                )
                .unwrap()
            })
            .collect();
        (worlds, logs)
    }

    #[test]
    fn mismatched_and_empty() {
        let (worlds, logs) = episode_logs();
        let refs: Vec<&World> = worlds.iter().collect();
        assert_eq!(compute_metrics(&[], &[]), Err(MetricsError::EmptyLogs));
        assert!(matches!(
            compute_metrics(&logs[..2], &[refs[1], refs[0]]),
            Err(MetricsError::MismatchedEpisode { index: 0, .. })
        ));
        assert!(matches!(
            compute_metrics(&logs[..2], &refs[..1]),
            Err(MetricsError::MismatchedEpisode { .. })
        ));
    }

    #[test]
    fn nav_only_has_no_interaction_histograms() {
        let (_, logs) = episode_logs();
        let a = analyze_logs(&logs).unwrap();
        assert!(a.invocations[1].is_empty() && a.invocations[2].is_empty());
        assert!(a.timing.iter().flatten().all(|&c| c == 0));
        let doubled: Vec<EpisodeLog> = logs.iter().chain(&logs).cloned().collect();
        let b = analyze_logs(&doubled).unwrap();
        for o in 0..3 {
            for k in 0..BINS {
                assert_eq!(b.confidence[o][k], 2 * a.confidence[o][k]);
            }
        }
    }

    fn event(t: u32, kind: InteractionKind, wrong: bool) -> InteractionEvent {
        InteractionEvent {
            t,
            kind,
            index: 1,
            since_interaction: None,
            since_question: None,
            verdict: if kind == InteractionKind::Query {
                Verdict::None
            } else if wrong {
                Verdict::No
            } else {
                Verdict::Yes
            },
            wrong_question: wrong,
            question_correct: Some(!wrong),
            instructed: wrong,
            question: None,
            instruction: None,
            confidence: 0.5,
            penalty: 0.0,
            fallback: false,
        }
    }

    #[test]
    fn hand_built_event_histogram() {
        let outcome = Outcome {
            success: false,
            stopped: false,
            steps: 20,
            final_dtg: 3,
            path_length: 0,
            actions: 20,
            stopped_while_silent: false,
            final_cell: Cell::new(0, 0),
        };
        let decision = |t: u32, option, c: f64| DecisionRecord {
            t,
            features: [c, 0.0, 0.0, 0.0, 0.0, 1.0],
            mask: Mask::default(),
            option,
            probs: None,
            duration: 1,
            reward: 0.0,
        };
        let log = EpisodeLog {
            map_id: "m".into(),
            episode_seed: 0,
            budget: 2,
            steps: vec![],
            events: vec![
                event(0, InteractionKind::Query, false),
                event(5, InteractionKind::Question, false),
                event(19, InteractionKind::Question, true),
            ],
            decisions: vec![
                decision(0, OptionKind::L, 0.0),
                decision(5, OptionKind::Ques, 0.55),
                decision(9, OptionKind::G, 1.0),
            ],
            outcome,
            total_return: 0.0,
        };
        let a = analyze_logs(&[log]).unwrap();
        // t / steps: 0.0 -> bin 0, 0.25 -> bin 2, 0.95 -> bin 9
        assert_eq!(a.timing[0][0], 1);
        assert_eq!(a.timing[1][2], 1);
        assert_eq!(a.timing[2][9], 1);
        assert_eq!(a.timing.iter().flatten().sum::<u64>(), 3);
        assert_eq!(a.confidence[1][0], 1);
        assert_eq!(a.confidence[2][5], 1);
        assert_eq!(a.confidence[0][9], 1);
        assert_eq!(a.median_confidence(OptionKind::Ques), Some(0.55));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    fn arb_row() -> impl Strategy<Value = EpisodeRow> {
        (
            any::<bool>(),
            0u32..30,
            0u32..60,
            0u32..40,
            0u32..80,
            0usize..4,
            0usize..4,
            0usize..4,
        )
            .prop_map(
                |(success, shortest, extra_p, min_actions, extra_a, q, ques, wrong)| EpisodeRow {
                    path_length: shortest + extra_p,
                    actions: min_actions + extra_a,
                    queries: q,
                    questions: ques + wrong,
                    wrong_questions: wrong,
                    ..row_with(success, shortest, 0, min_actions, 0)
                },
            )
    }

    proptest! {
        #[test]
        fn ratios_bounded_by_success(rows in prop::collection::vec(arb_row(), 1..40)) {
            let r = aggregate(rows).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.sr));
            prop_assert!(r.spl <= r.sr + 1e-12);
            prop_assert!(r.sna <= r.sr + 1e-12);
            prop_assert!(r.sni.is_finite() && r.sno.is_finite());
            if r.n_l + r.n_ques > 0 && r.n_l + r.n_ques_wrong > 0 {
                let bound = r.sno * (r.n_l + r.n_ques_wrong) as f64 / (r.n_l + r.n_ques) as f64;
                prop_assert!(r.sni <= bound + 1e-12);
            }
        }

        #[test]
        fn permutation_invariant(rows in prop::collection::vec(arb_row(), 1..30), seed in any::<u64>()) {
            let a = aggregate(rows.clone()).unwrap();
            let mut shuffled = rows;
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = crate::rng::mix(s, i as u64);
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let b = aggregate(shuffled).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
