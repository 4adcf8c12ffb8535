use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CampaignConfig, CampaignOutcome};
use crate::coverage::CoverageState;
use crate::error::{Error, Result};
use crate::sampling::write_corpus_csv;
use crate::search::{GenerationRow, MctsTraceRow};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A fraction in `[0, 1]` as a percentage rounded to one decimal.
pub fn percent(fraction: f64) -> f64 {
    (fraction * 1000.0).round() / 10.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub kmnc: f64,
    pub nbc: f64,
    pub snac: f64,
    pub kmnc_percent: f64,
    pub nbc_percent: f64,
    pub snac_percent: f64,
}

impl CoverageSummary {
    pub fn of(state: &CoverageState) -> Self {
        let v = state.vector();
        CoverageSummary {
            kmnc: v.kmnc,
            nbc: v.nbc,
            snac: v.snac,
            kmnc_percent: percent(v.kmnc),
            nbc_percent: percent(v.nbc),
            snac_percent: percent(v.snac),
        }
    }

    fn fractions(&self) -> [f64; 3] {
        [self.kmnc, self.nbc, self.snac]
    }

    fn percents(&self) -> [f64; 3] {
        [self.kmnc_percent, self.nbc_percent, self.snac_percent]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSummary {
    pub count: u64,
    /// Constraint-satisfying mutants produced; the denominator of `percent`.
    pub mutants: u64,
    pub percent: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ForwardCounts {
    pub profiling: u64,
    /// Initial corpus, run once to label it and measure initial coverage.
    pub corpus: u64,
    pub search: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub initial: usize,
    #[serde(rename = "final")]
    pub final_size: usize,
}

/// One row of `report.csv`. Coverage columns are global, after the batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch: usize,
    pub seeds: usize,
    pub forwards: u64,
    pub mutants: u64,
    pub adversarial: u64,
    /// Mutants added to the corpus.
    pub inserted: usize,
    pub corpus_size: usize,
    pub kmnc: f64,
    pub nbc: f64,
    pub snac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub batch: usize,
    pub generation: usize,
    pub best_kmnc: f64,
    pub best_nbc: f64,
    pub best_snac: f64,
    pub archive_size: usize,
    pub feasible_fraction: f64,
    pub forwards: u64,
}

impl GenerationRecord {
    pub fn new(batch: usize, r: &GenerationRow) -> Self {
        GenerationRecord {
            batch,
            generation: r.generation,
            best_kmnc: r.best_kmnc,
            best_nbc: r.best_nbc,
            best_snac: r.best_snac,
            archive_size: r.archive_size,
            feasible_fraction: r.feasible_fraction,
            forwards: r.forwards,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MctsTraceRecord {
    pub batch: usize,
    pub call: usize,
    pub rollout: usize,
    pub depth: usize,
    pub reward: f64,
}

impl MctsTraceRecord {
    pub fn new(batch: usize, r: &MctsTraceRow) -> Self {
        MctsTraceRecord {
            batch,
            call: r.call,
            rollout: r.rollout,
            depth: r.depth,
            reward: r.reward,
        }
    }
}

/// The deterministic record of a campaign; equal configs give equal reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema_version: u32,
    pub model: String,
    pub neurons: usize,
    pub initial: CoverageSummary,
    #[serde(rename = "final")]
    pub final_coverage: CoverageSummary,
    pub adversarial: AdversarialSummary,
    pub forwards: ForwardCounts,
    pub corpus: CorpusSummary,
    pub batches: Vec<BatchRecord>,
    pub generations: Vec<GenerationRecord>,
    pub config: CampaignConfig,
}

impl CampaignReport {
    /// Checks the report's internal consistency.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invariant(msg));
        let (i, f) = (self.initial.fractions(), self.final_coverage.fractions());
        for (name, (a, b)) in ["kmnc", "nbc", "snac"].iter().zip(i.iter().zip(&f)) {
            if b < a {
                return bad(format!("final {name} {b} is below initial {a}"));
            }
        }
        let pcts = self
            .initial
            .percents()
            .into_iter()
            .chain(self.final_coverage.percents());
        if pcts
            .chain([self.adversarial.percent])
            .any(|p| !(0.0..=100.0).contains(&p))
        {
            return bad("percentage outside [0, 100]".into());
        }
        let mut prev = i;
        for b in &self.batches {
            let cur = [b.kmnc, b.nbc, b.snac];
            if cur.iter().zip(&prev).any(|(c, p)| c < p) {
                return bad(format!("coverage decreased in batch {}", b.batch));
            }
            prev = cur;
        }
        let fw = &self.forwards;
        let per_batch: u64 = self.batches.iter().map(|b| b.forwards).sum();
        if fw.search != per_batch || fw.total != fw.profiling + fw.corpus + fw.search {
            return bad(format!(
                "forward pass totals do not add up: {fw:?}, batches {per_batch}"
            ));
        }
        Ok(())
    }

    /// The plain-text table written to `report.txt`.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let row = |name: &str, s: &CoverageSummary| {
            format!(
                "{:<16}{:>9.1}%{:>9.1}%{:>9.1}%\n",
                name, s.kmnc_percent, s.nbc_percent, s.snac_percent
            )
        };
        let mut t = String::new();
        t += &format!(
            "Model {} ({} neurons, k = {}), sampling {}, search {}, seed {}\n",
            self.model, self.neurons, c.k, c.strategy, c.search, c.rng_seed
        );
        t += &format!(
            "{} batches of {} seeds\n\n",
            self.batches.len(),
            c.batch_size
        );
        t += &format!(
            "{:<16}{:>10}{:>10}{:>10}\n",
            "Criterion", "KMNC", "NBC", "SNAC"
        );
        t += &row("Initial", &self.initial);
        t += &row(c.strategy.name(), &self.final_coverage);
        t += &format!(
            "\nAdversarial samples: {} of {} mutants ({:.1}%)\n",
            self.adversarial.count, self.adversarial.mutants, self.adversarial.percent
        );
        t += &format!(
            "Forward passes: {} total ({} profiling, {} corpus, {} search)\n",
            self.forwards.total,
            self.forwards.profiling,
            self.forwards.corpus,
            self.forwards.search
        );
        t += &format!(
            "Corpus: {} -> {} seeds\n",
            self.corpus.initial, self.corpus.final_size
        );
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub text: PathBuf,
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Output(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| output_err(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    w.write_record(header).map_err(|e| output_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| output_err(path, e))?;
    }
    w.flush().map_err(|e| output_err(path, e))
}

/// Writes `report.json`, `report.csv` (a header plus one row per batch) and
/// `report.txt` into `dir`, creating it if needed.
pub fn emit_report(report: &CampaignReport, dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
    let files = ReportFiles {
        json: dir.join("report.json"),
        csv: dir.join("report.csv"),
        text: dir.join("report.txt"),
    };
    let mut json = serde_json::to_string_pretty(report).map_err(|e| output_err(&files.json, e))?;
    json.push('\n');
    fs::write(&files.json, json).map_err(|e| output_err(&files.json, e))?;
    write_csv(
        &files.csv,
        &report.batches,
        &[
            "batch",
            "seeds",
            "forwards",
            "mutants",
            "adversarial",
            "inserted",
            "corpus_size",
            "kmnc",
            "nbc",
            "snac",
        ],
    )?;
    fs::write(&files.text, report.to_text()).map_err(|e| output_err(&files.text, e))?;
    Ok(files)
}

/// [`emit_report`] plus `generations.csv`, `corpus.csv`, `timing.json`, and
/// `mcts_trace.csv` when a trace was recorded.
pub fn emit_outcome(outcome: &CampaignOutcome, dir: &Path) -> Result<ReportFiles> {
    let files = emit_report(&outcome.report, dir)?;
    write_csv(
        &dir.join("generations.csv"),
        &outcome.report.generations,
        &[
            "batch",
            "generation",
            "best_kmnc",
            "best_nbc",
            "best_snac",
            "archive_size",
            "feasible_fraction",
            "forwards",
        ],
    )?;
    let corpus_path = dir.join("corpus.csv");
    let mut w = create(&corpus_path)?;
    write_corpus_csv(&outcome.corpus, &mut w).map_err(|e| output_err(&corpus_path, e))?;
    w.flush().map_err(|e| output_err(&corpus_path, e))?;
    let timing = dir.join("timing.json");
    let body = serde_json::json!({ "duration_secs": outcome.duration.as_secs_f64() });
    fs::write(&timing, format!("{body}\n")).map_err(|e| output_err(&timing, e))?;
    if outcome.report.config.mcts_trace {
        write_csv(
            &dir.join("mcts_trace.csv"),
            &outcome.mcts_trace,
            &["batch", "call", "rollout", "depth", "reward"],
        )?;
    }
    Ok(files)
}
