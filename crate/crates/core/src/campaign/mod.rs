//! Whole fuzzing campaigns: profile, seed the corpus, then repeatedly
//! sample a batch, search it, and fold the results back into the corpus.

mod dataset;
mod report;

pub use dataset::{
    encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels,
    synthetic_dataset, Labeled, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use report::{
    emit_outcome, emit_report, percent, AdversarialSummary, BatchRecord, CampaignReport,
    CorpusSummary, CoverageSummary, ForwardCounts, GenerationRecord, MctsTraceRecord, ReportFiles,
    REPORT_SCHEMA_VERSION,
};

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{self, CoverageState, NeuronProfile, DEFAULT_K};
use crate::error::{DatasetError, Error, Result};
use crate::mutation::{ConstraintParams, LevelTables, MutationSpace, RegionGrid};
use crate::nn::{generate_fixture_model, load_model, FixtureArch, Model};
use crate::sampling::{
    Sampler, SamplerParams, SamplingStrategy, Seed, SeedOrigin, DEFAULT_CLUSTERS,
};
use crate::search::{BatchSearch, BatchSeed, SearchKind, SearchParams};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSource {
    File {
        path: PathBuf,
    },
    Fixture {
        arch: String,
        #[serde(default)]
        seed: u64,
    },
}

impl ModelSource {
    pub fn load(&self) -> Result<Model> {
        Ok(match self {
            ModelSource::File { path } => load_model(path)?,
            ModelSource::Fixture { arch, seed } => {
                generate_fixture_model(arch.parse::<FixtureArch>()?, *seed)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Synthetic {
        count: usize,
        #[serde(default)]
        seed: u64,
    },
}

/// Loads a dataset; synthetic images take the given shape.
pub fn load_dataset(source: &DatasetSource, shape: &Shape) -> Result<Vec<Labeled>, DatasetError> {
    match source {
        DatasetSource::Idx { images, labels } => load_idx(images, labels),
        DatasetSource::Synthetic { count, seed } => synthetic_dataset(*count, shape, *seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub model: ModelSource,
    pub dataset: DatasetSource,
    #[serde(default = "defaults::strategy")]
    pub strategy: SamplingStrategy,
    #[serde(default = "defaults::search")]
    pub search: SearchKind,
    #[serde(default = "defaults::k")]
    pub k: usize,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    #[serde(default = "defaults::a")]
    pub a: f64,
    #[serde(default = "defaults::b")]
    pub b: f64,
    #[serde(default)]
    pub params: SearchParams,
    #[serde(default = "defaults::batches")]
    pub batches: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    /// Forward passes per batch; `None` means [`SearchParams::default_budget`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    /// No default: a campaign is never seeded from the clock.
    pub rng_seed: u64,
    /// Leading dataset images used only for profiling.
    #[serde(default = "defaults::profiling_size")]
    pub profiling_size: usize,
    #[serde(default = "defaults::corpus_cap")]
    pub corpus_cap: usize,
    #[serde(default = "defaults::clusters")]
    pub clusters: usize,
    #[serde(default)]
    pub levels: LevelTables,
    /// A saved profile to use instead of profiling the leading images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Record one row per tree-search rollout.
    #[serde(default)]
    pub mcts_trace: bool,
}

mod defaults {
    use super::*;

    pub fn strategy() -> SamplingStrategy {
        SamplingStrategy::Frequency
    }
    pub fn search() -> SearchKind {
        SearchKind::Spea2Mcts
    }
    pub fn k() -> usize {
        DEFAULT_K
    }
    pub fn alpha() -> f64 {
        ConstraintParams::default().alpha
    }
    pub fn beta() -> f64 {
        ConstraintParams::default().beta
    }
    pub fn a() -> f64 {
        0.3
    }
    pub fn b() -> f64 {
        -1.0
    }
    pub fn batches() -> usize {
        16
    }
    pub fn batch_size() -> usize {
        64
    }
    pub fn profiling_size() -> usize {
        1000
    }
    pub fn corpus_cap() -> usize {
        10_000
    }
    pub fn clusters() -> usize {
        DEFAULT_CLUSTERS
    }
}

impl CampaignConfig {
    /// Desk-scale defaults around the given sources and seed.
    pub fn new(model: ModelSource, dataset: DatasetSource, rng_seed: u64) -> Self {
        CampaignConfig {
            model,
            dataset,
            strategy: defaults::strategy(),
            search: defaults::search(),
            k: defaults::k(),
            alpha: defaults::alpha(),
            beta: defaults::beta(),
            a: defaults::a(),
            b: defaults::b(),
            params: SearchParams::default(),
            batches: defaults::batches(),
            batch_size: defaults::batch_size(),
            budget: None,
            rng_seed,
            profiling_size: defaults::profiling_size(),
            corpus_cap: defaults::corpus_cap(),
            clusters: defaults::clusters(),
            levels: LevelTables::default(),
            profile: None,
            output_dir: None,
            mcts_trace: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: CampaignConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(1..=1000).contains(&self.k) {
            return fail(format!("k must be in 1..=1000, got {}", self.k));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.batch_size > self.corpus_cap {
            return fail(format!(
                "batch_size {} exceeds corpus_cap {}",
                self.batch_size, self.corpus_cap
            ));
        }
        if self.profile.is_none() && self.profiling_size == 0 {
            return fail("profiling_size must be at least 1 unless a profile file is given".into());
        }
        if self.clusters == 0 {
            return fail("clusters must be at least 1".into());
        }
        if self.budget == Some(0) {
            return fail("budget must be at least 1 forward pass per batch".into());
        }
        ConstraintParams::new(self.alpha, self.beta)?;
        self.levels.validate()?;
        self.params.validate()?;
        self.sampler_params().validate()?;
        Ok(())
    }

    /// Forward passes each batch may spend on search.
    pub fn batch_budget(&self) -> u64 {
        self.budget
            .unwrap_or_else(|| self.params.default_budget(self.batch_size))
    }

    fn sampler_params(&self) -> SamplerParams {
        SamplerParams {
            a: self.a,
            b: self.b,
            ..SamplerParams::new(self.strategy, self.batches.max(1) as u32)
        }
    }
}

/// `(count, percent)` of mutants whose label differs from their source's.
/// `source_labels[i]` is the prediction on the image mutant `i` came from.
pub fn count_adversarial(
    source_labels: &[usize],
    mutant_labels: &[usize],
) -> Result<(u64, f64), DatasetError> {
    if source_labels.len() != mutant_labels.len() {
        return Err(DatasetError::Invalid(format!(
            "{} source labels for {} mutants",
            source_labels.len(),
            mutant_labels.len()
        )));
    }
    let count = source_labels
        .iter()
        .zip(mutant_labels)
        .filter(|(s, m)| s != m)
        .count() as u64;
    let pct = if mutant_labels.is_empty() {
        0.0
    } else {
        count as f64 / mutant_labels.len() as f64 * 100.0
    };
    Ok((count, pct))
}

/// Everything a campaign produced. Only `report` is deterministic; the
/// duration is kept apart so reports from equal seeds compare equal.
#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub report: CampaignReport,
    pub duration: Duration,
    pub corpus: Vec<Seed>,
    pub profile: NeuronProfile,
    pub coverage: CoverageState,
    pub mcts_trace: Vec<MctsTraceRecord>,
}

/// Loads the configured model and dataset, then runs the campaign.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignOutcome> {
    config.validate()?;
    let model = config.model.load()?;
    let data = load_dataset(&config.dataset, model.input_shape())?;
    let profile = match &config.profile {
        Some(path) => Some(coverage::load_profile(path)?),
        None => None,
    };
    run_campaign_on(&model, &data, profile, config)
}

/// Runs a campaign on an already loaded model and dataset. With `profile`
/// set, the leading `profiling_size` images are still held out but not
/// run through the model.
pub fn run_campaign_on(
    model: &Model,
    data: &[Labeled],
    profile: Option<NeuronProfile>,
    config: &CampaignConfig,
) -> Result<CampaignOutcome> {
    let started = Instant::now();
    config.validate()?;
    if let Some((i, (img, _))) = data
        .iter()
        .enumerate()
        .find(|(_, (img, _))| img.shape() != model.input_shape())
    {
        return Err(DatasetError::Invalid(format!(
            "image {i} has shape {}, model expects {}",
            img.shape(),
            model.input_shape()
        ))
        .into());
    }
    let held_out = config.profiling_size.min(data.len());
    if data.len() - held_out < config.batch_size {
        return Err(DatasetError::Invalid(format!(
            "{} images leave {} seeds after the {held_out}-image profiling split; a batch needs {}",
            data.len(),
            data.len() - held_out,
            config.batch_size
        ))
        .into());
    }
    let (profiling, seeds) = data.split_at(held_out);

    let mut forwards = ForwardCounts::default();
    let profile = match profile {
        Some(p) => {
            if p.neuron_count() != model.neuron_count() || p.k() != config.k {
                return Err(Error::Config(format!(
                    "profile covers {} neurons with k = {}, model has {} neurons and k = {}",
                    p.neuron_count(),
                    p.k(),
                    model.neuron_count(),
                    config.k
                )));
            }
            p
        }
        None => {
            let images: Vec<Tensor> = profiling.iter().map(|(t, _)| t.clone()).collect();
            forwards.profiling = images.len() as u64;
            coverage::profile(model, &images, config.k)?
        }
    };

    let image_shape = model.input_shape();
    let (h, w, _) = image_shape
        .as_image()
        .ok_or_else(|| Error::Config(format!("model input {image_shape} is not an image")))?;
    let space = MutationSpace::new(
        RegionGrid::default_for(h, w)?,
        config.levels.clone(),
        ConstraintParams::new(config.alpha, config.beta)?,
    )?;

    // Seed the corpus and measure its coverage.
    let traces = seeds
        .par_iter()
        .map(|(img, _)| model.forward(img))
        .collect::<Result<Vec<_>, _>>()?;
    forwards.corpus = traces.len() as u64;
    let mut global = CoverageState::for_profile(&profile);
    let mut corpus = Vec::with_capacity(config.corpus_cap.max(seeds.len()));
    for (i, ((img, _), trace)) in seeds.iter().zip(&traces).enumerate() {
        global.update_cells(&profile.cells(&trace.values));
        corpus.push(Seed::new(
            i,
            img.clone(),
            trace.predicted_label,
            SeedOrigin::Initial,
        ));
    }
    drop(traces);
    let initial = CoverageSummary::of(&global);

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut sampler = Sampler::new(config.strategy, &corpus, config.clusters, &mut rng);
    let mut sparams = config.sampler_params();
    let budget = config.batch_budget();
    let cells = (profile.neuron_count() * profile.k()) as f64;

    let mut batches = Vec::with_capacity(config.batches);
    let mut generations = Vec::new();
    let mut mcts_trace = Vec::new();
    let mut adversarial = AdversarialSummary::default();
    for batch in 0..config.batches {
        let in_batch = |e: Error| Error::InBatch {
            batch,
            source: Box::new(e),
        };
        sparams.circle = batch as u32;
        let picked = sampler.select_next(&mut corpus, config.batch_size, &sparams, &mut rng);
        let batch_seeds: Vec<BatchSeed> = picked
            .iter()
            .map(|&i| BatchSeed {
                id: corpus[i].id,
                image: corpus[i].image.clone(),
                label: corpus[i].predicted_label,
            })
            .collect();
        let mut search_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let before = global.vector();
        let mut search = BatchSearch::new(
            model,
            &profile,
            &space,
            &batch_seeds,
            &config.params,
            &mut global,
            budget,
        );
        if config.mcts_trace {
            search.mcts_trace = Some(Vec::new());
        }
        search
            .run(config.search, &mut search_rng)
            .map_err(in_batch)?;
        let BatchSearch {
            budget: spent,
            commits,
            log,
            mcts_trace: trace,
            ..
        } = search;
        if spent.used > spent.limit {
            return Err(in_batch(Error::Invariant(format!(
                "search spent {} forward passes of a {} budget",
                spent.used, spent.limit
            ))));
        }
        if commits.mutants > spent.used {
            return Err(in_batch(Error::Invariant(format!(
                "{} mutants committed from {} forward passes",
                commits.mutants, spent.used
            ))));
        }
        let after = global.vector();
        if after.kmnc < before.kmnc || after.nbc < before.nbc || after.snac < before.snac {
            return Err(in_batch(Error::Invariant(
                "global coverage decreased".into(),
            )));
        }

        for (pos, &i) in picked.iter().enumerate() {
            corpus[i].last_gain = commits.seed_gain[pos].sections as f64 / cells;
        }
        let mut inserted = 0;
        for m in &commits.accepted {
            if corpus.len() >= config.corpus_cap {
                break;
            }
            let source = &batch_seeds[m.source].image;
            if !space
                .admits(source, &m.image)
                .map_err(|e| in_batch(e.into()))?
            {
                return Err(in_batch(Error::Invariant(
                    "a mutant breaking the constraint reached the corpus".into(),
                )));
            }
            corpus.push(Seed::new(
                corpus.len(),
                m.image.clone(),
                m.label,
                SeedOrigin::Generated,
            ));
            inserted += 1;
        }

        adversarial.count += commits.adversarial;
        adversarial.mutants += commits.mutants;
        forwards.search += spent.used;
        generations.extend(log.iter().map(|r| GenerationRecord::new(batch, r)));
        if let Some(rows) = trace {
            mcts_trace.extend(rows.iter().map(|r| MctsTraceRecord::new(batch, r)));
        }
        batches.push(BatchRecord {
            batch,
            seeds: picked.len(),
            forwards: spent.used,
            mutants: commits.mutants,
            adversarial: commits.adversarial,
            inserted,
            corpus_size: corpus.len(),
            kmnc: after.kmnc,
            nbc: after.nbc,
            snac: after.snac,
        });
    }

    forwards.total = forwards.profiling + forwards.corpus + forwards.search;
    adversarial.percent = if adversarial.mutants == 0 {
        0.0
    } else {
        adversarial.count as f64 / adversarial.mutants as f64 * 100.0
    };
    let report = CampaignReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model: model.name().to_string(),
        neurons: profile.neuron_count(),
        initial,
        final_coverage: CoverageSummary::of(&global),
        adversarial,
        forwards,
        corpus: CorpusSummary {
            initial: seeds.len(),
            final_size: corpus.len(),
        },
        batches,
        generations,
        config: config.clone(),
    };
    report.check()?;
    Ok(CampaignOutcome {
        report,
        duration: started.elapsed(),
        corpus,
        profile,
        coverage: global,
        mcts_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(search: SearchKind, strategy: SamplingStrategy) -> CampaignConfig {
        let mut c = CampaignConfig::new(
            ModelSource::Fixture {
                arch: "tiny-dense".into(),
                seed: 1,
            },
            DatasetSource::Synthetic { count: 60, seed: 2 },
            11,
        );
        c.search = search;
        c.strategy = strategy;
        c.profiling_size = 20;
        c.batches = 3;
        c.batch_size = 8;
        c.params.population = 4;
        c.params.archive = 4;
        c.params.iterations = 3;
        c.params.mcts.rollouts = 8;
        c
    }

    #[test]
    fn counts_label_flips() {
        let (n, pct) = count_adversarial(&[3, 1, 2], &[5, 1, 2]).unwrap();
        assert_eq!(n, 1);
        assert!((pct - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(count_adversarial(&[], &[]).unwrap(), (0, 0.0));
        assert!(count_adversarial(&[1], &[]).is_err());
    }

    #[test]
    fn zero_batches_keep_initial_coverage() {
        let mut c = tiny_config(SearchKind::Spea2Mcts, SamplingStrategy::Frequency);
        c.batches = 0;
        let out = run_campaign(&c).unwrap();
        assert_eq!(out.report.initial, out.report.final_coverage);
        assert_eq!(out.report.adversarial.count, 0);
        assert_eq!(out.report.forwards.total, 60);
    }

    #[test]
    fn every_pairing_runs_and_accounts_forwards() {
        for search in SearchKind::ALL {
            for strategy in SamplingStrategy::ALL {
                let c = tiny_config(search, strategy);
                let out = run_campaign(&c).unwrap();
                let r = &out.report;
                assert_eq!(r.batches.len(), 3);
                let per_batch: u64 = r.batches.iter().map(|b| b.forwards).sum();
                assert_eq!(r.forwards.total, 20 + 40 + per_batch);
                assert!(r.batches.iter().all(|b| b.forwards <= c.batch_budget()));
                assert_eq!(out.corpus.len(), r.corpus.final_size);
            }
        }
    }

    #[test]
    fn config_needs_a_seed_and_rejects_bad_ranges() {
        let base = r#"
            [model]
            kind = "fixture"
            arch = "mini-lenet"
            [dataset]
            kind = "synthetic"
            count = 2000
        "#;
        assert!(matches!(
            CampaignConfig::from_toml(base),
            Err(Error::Config(_))
        ));
        let ok = CampaignConfig::from_toml(&format!("rng_seed = 4\n{base}")).unwrap();
        assert_eq!(ok.batches, 16);
        assert_eq!(ok.batch_size, 64);
        assert_eq!(ok.params.population, 40);
        assert!(CampaignConfig::from_toml(&format!("rng_seed = 4\nalpha = 1.5\n{base}")).is_err());
        assert!(CampaignConfig::from_toml(&format!("rng_seed = 4\nk = 0\n{base}")).is_err());
        assert!(CampaignConfig::from_toml(&format!("rng_seed = 4\nbogus = 1\n{base}")).is_err());
        let s = CampaignConfig::from_toml(&format!(
            "rng_seed = 4\nstrategy = \"dsf-random\"\nsearch = \"nsga3\"\n{base}"
        ))
        .unwrap();
        assert_eq!(
            (s.strategy, s.search),
            (SamplingStrategy::Random, SearchKind::Nsga3)
        );
    }
}
