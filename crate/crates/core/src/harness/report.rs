use std::fmt::Write as _;

use serde::Serialize;

use super::{Experiment, ExperimentConfig};
use crate::metrics::{MetricsReport, METRIC_COLUMNS};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub tag: String,
    pub seed: u64,
    pub metrics: [f64; 7],
    pub n: usize,
    pub n_l: usize,
    pub n_ques: usize,
    pub n_ques_wrong: usize,
}

/// Per-seed metrics of an experiment together with the resolved config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn new(command: &str, config: &ExperimentConfig, exp: &Experiment) -> Self {
        let rows = exp
            .evaluations
            .iter()
            .map(|e| {
                let r: &MetricsReport = &e.report;
                ReportRow {
                    tag: e.tag.clone(),
                    seed: e.seed,
                    metrics: r.values(),
                    n: r.n,
                    n_l: r.n_l,
                    n_ques: r.n_ques,
                    n_ques_wrong: r.n_ques_wrong,
                }
            })
            .collect();
        Report {
            command: command.to_string(),
            config: config.clone(),
            rows,
        }
    }

    /// Tags in first-seen order.
    pub fn tags(&self) -> Vec<&str> {
        let mut tags: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !tags.contains(&r.tag.as_str()) {
                tags.push(&r.tag);
            }
        }
        tags
    }

    /// Mean and sample standard deviation of each metric across seeds.
    pub fn summary(&self, tag: &str) -> Option<([f64; 7], [f64; 7])> {
        let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| r.tag == tag).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; 7];
        let mut sd = [0.0; 7];
        for i in 0..7 {
            mean[i] = rows.iter().map(|r| r.metrics[i]).sum::<f64>() / n;
            if rows.len() > 1 {
                sd[i] = (rows
                    .iter()
                    .map(|r| (r.metrics[i] - mean[i]).powi(2))
                    .sum::<f64>()
                    / (n - 1.0))
                    .sqrt();
            }
        }
        Some((mean, sd))
    }

    fn preamble(&self) -> String {
        let mut out = format!(
            "# echonav {}\n# seeds: {:?}\n# config:\n",
            self.command, self.config.seeds
        );
        for line in self.config.to_toml().lines() {
            let _ = writeln!(out, "#   {line}");
        }
        out
    }

    /// One row per (tag, seed), preceded by the config as `#` comments.
    pub fn to_csv(&self) -> String {
        let mut out = self.preamble();
        let _ = writeln!(out, "tag,seed,{}", MetricsReport::csv_header());
        for r in &self.rows {
            let v: Vec<String> = r.metrics.iter().map(|x| format!("{x:.5}")).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.tag,
                r.seed,
                v.join(","),
                r.n,
                r.n_l,
                r.n_ques,
                r.n_ques_wrong
            );
        }
        out
    }

    /// Seed means with standard deviations, one line per tag.
    pub fn to_text(&self) -> String {
        let mut out = self.preamble();
        let width = self
            .tags()
            .iter()
            .map(|t| t.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let _ = write!(out, "{:width$}", "setup");
        for c in METRIC_COLUMNS {
            let _ = write!(out, " {c:>15}");
        }
        out.push('\n');
        for tag in self.tags() {
            let (mean, sd) = self.summary(tag).expect("tag has rows");
            let _ = write!(out, "{tag:width$}");
            for (m, s) in mean.iter().zip(sd) {
                let _ = write!(out, " {:>15}", format!("{m:.4}±{s:.4}"));
            }
            out.push('\n');
        }
        out
    }
}
