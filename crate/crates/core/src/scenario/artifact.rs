//! CSV and JSON output.
//!
//! `<scenario>.csv` has one row per (episode, step, observer, peer):
//!
//! ```text
//! step,episode,coverage,observer,peer,belief,verdict,tp,tn,fp,fn,f1
//! ```
//!
//! `episode` is the index into the seed list, `coverage` the covered fraction
//! after the step, `verdict` the outcome of that step's consistency check
//! (empty when none was made), and the confusion counts and F1 belong to the
//! observer. `<scenario>.summary.json` is a [`RunSummary`]. Floats are written
//! with 9 significant digits so reruns are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::runner::{EpisodeRecord, RunArtifact};
use super::ScenarioError;
use crate::metrics::f1;
use crate::policy::{AdversaryStrategy, PolicyKind};

pub const CSV_HEADER: &str = "step,episode,coverage,observer,peer,belief,verdict,tp,tn,fp,fn,f1";

/// `%.9g`-style rendering.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_fraction(mantissa);
        return format!("{m}e{exp}");
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_fraction(&format!("{x:.decimals$}")).to_string()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("round trip")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single episode.
    pub stddev: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self {
                mean: 0.0,
                stddev: 0.0,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let stddev = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self {
            mean: round_sig9(mean),
            stddev: round_sig9(stddev),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub mode: String,
    pub config: ScenarioConfig,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub steps: usize,
    pub final_coverage: Stat,
    pub final_cooperative_coverage: Stat,
    pub final_adversary_coverage: Stat,
    /// Mean over episodes of the per-step covered fraction.
    pub mean_coverage_timeline: Vec<f64>,
    /// Mean over episodes of the per-step team F1.
    pub mean_f1_timeline: Vec<f64>,
    pub mean_f1: f64,
    pub notes: Vec<String>,
}

fn column_mean(rows: &[&[f64]]) -> Vec<f64> {
    let len = rows.first().map_or(0, |r| r.len());
    (0..len)
        .map(|k| round_sig9(rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64))
        .collect()
}

impl RunSummary {
    pub fn from_episodes(cfg: &ScenarioConfig, episodes: &[EpisodeRecord]) -> Self {
        let pick = |f: fn(&EpisodeRecord) -> f64| episodes.iter().map(f).collect::<Vec<_>>();
        let coverage: Vec<&[f64]> = episodes
            .iter()
            .map(|e| e.summary.coverage_timeline.as_slice())
            .collect();
        let f1s: Vec<&[f64]> = episodes
            .iter()
            .map(|e| e.summary.f1_timeline.as_slice())
            .collect();
        let mean_f1 = Stat::of(&pick(|e| e.summary.mean_f1)).mean;

        let mut notes = vec![
            "policies are exact finite-horizon value-iteration stand-ins; no training".to_string(),
        ];
        if cfg
            .agents
            .iter()
            .any(|a| a.policy == PolicyKind::SelfInterested(AdversaryStrategy::ConsistentLiar))
        {
            notes.push(
                "readapted adversary approximated by the consistent_liar strategy (acts on its own falsified message)"
                    .to_string(),
            );
        }
        Self {
            scenario: cfg.name.clone(),
            mode: cfg.mode.name().to_string(),
            config: cfg.clone(),
            seeds: cfg.seeds.clone(),
            episodes: episodes.len(),
            steps: cfg.steps,
            final_coverage: Stat::of(&pick(|e| e.summary.final_coverage)),
            final_cooperative_coverage: Stat::of(&pick(|e| e.summary.final_cooperative_coverage)),
            final_adversary_coverage: Stat::of(&pick(|e| e.summary.final_adversary_coverage)),
            mean_coverage_timeline: column_mean(&coverage),
            mean_f1_timeline: column_mean(&f1s),
            mean_f1,
            notes,
        }
    }
}

/// CSV body (header included) for a run.
pub fn render_csv(artifact: &RunArtifact) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (episode, rec) in artifact.episodes.iter().enumerate() {
        let cells = rec.log.cell_count as f64;
        for s in &rec.log.steps {
            let coverage = format_sig9(s.covered_cells as f64 / cells);
            for o in &s.observers {
                let c = &o.confusion;
                let f = format_sig9(f1(c));
                for p in &o.peers {
                    let verdict = p.verdict.map_or("", |v| v.as_str());
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},{},{}",
                        s.step,
                        episode,
                        coverage,
                        o.observer,
                        p.peer,
                        format_sig9(p.belief),
                        verdict,
                        c.tp,
                        c.tn,
                        c.fp,
                        c.fn_,
                        f
                    )
                    .expect("writing to a String");
                }
            }
        }
    }
    out
}

pub fn render_summary(artifact: &RunArtifact) -> Result<String, ScenarioError> {
    let mut s = serde_json::to_string_pretty(&artifact.summary)?;
    s.push('\n');
    Ok(s)
}

/// Writes `<name>.csv` and `<name>.summary.json` into `out_dir`.
pub fn write_artifact(
    artifact: &RunArtifact,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ScenarioError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ScenarioError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let name = &artifact.config.name;
    let csv_path = out_dir.join(format!("{name}.csv"));
    let json_path = out_dir.join(format!("{name}.summary.json"));

    let file = fs::File::create(&csv_path).map_err(io(&csv_path))?;
    let mut w = BufWriter::new(file);
    w.write_all(render_csv(artifact).as_bytes())
        .map_err(io(&csv_path))?;
    w.flush().map_err(io(&csv_path))?;

    fs::write(&json_path, render_summary(artifact)?).map_err(io(&json_path))?;
    Ok(vec![csv_path, json_path])
}
