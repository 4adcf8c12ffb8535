//! Command-line front end for `nnfuzz-core`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nnfuzz_core::campaign::{
    emit_outcome, encode_idx_images, encode_idx_labels, load_dataset, run_campaign,
    synthetic_dataset, CampaignConfig, CampaignReport, DatasetSource, ModelSource,
};
use nnfuzz_core::coverage::{profile, save_profile};
use nnfuzz_core::error::DatasetError;
use nnfuzz_core::nn::{generate_fixture_model, save_model, FixtureArch};
use nnfuzz_core::sampling::SamplingStrategy;
use nnfuzz_core::search::SearchKind;
use nnfuzz_core::{Error, Result, Shape, Tensor};

/// Default output directory when neither `--output-dir` nor the config names one.
pub const OUT_DIR_ENV: &str = "NNFUZZ_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "nnfuzz",
    version,
    about = "Coverage-guided test generation for small neural networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record per-neuron activation bounds over a profiling set.
    Profile(ProfileArgs),
    /// Run a fuzzing campaign and write its reports.
    Fuzz(Box<FuzzArgs>),
    /// Write a seeded fixture model or synthetic IDX dataset.
    #[command(subcommand)]
    Fixture(FixtureCommand),
    /// Print a saved report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model container file.
    #[arg(long, conflicts_with = "fixture")]
    pub model: Option<PathBuf>,
    /// Built-in fixture architecture instead of a model file.
    #[arg(long)]
    pub fixture: Option<String>,
    #[arg(long)]
    pub fixture_seed: Option<u64>,
}

impl ModelArgs {
    fn source(&self) -> Option<ModelSource> {
        match (&self.model, &self.fixture) {
            (Some(path), _) => Some(ModelSource::File { path: path.clone() }),
            (None, Some(arch)) => Some(ModelSource::Fixture {
                arch: arch.clone(),
                seed: self.fixture_seed.unwrap_or(0),
            }),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// IDX image file; needs `--labels`.
    #[arg(long, requires = "labels", conflicts_with = "synthetic")]
    pub images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    pub labels: Option<PathBuf>,
    /// Number of seeded synthetic images instead of IDX files.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
}

impl DatasetArgs {
    fn source(&self) -> Option<DatasetSource> {
        match (&self.images, &self.labels, self.synthetic) {
            (Some(images), Some(labels), _) => Some(DatasetSource::Idx {
                images: images.clone(),
                labels: labels.clone(),
            }),
            (_, _, Some(count)) => Some(DatasetSource::Synthetic {
                count,
                seed: self.data_seed.unwrap_or(0),
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Leading images to profile on.
    #[arg(long, default_value_t = 1000)]
    pub profiling_size: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuzzArgs {
    /// TOML campaign config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub strategy: Option<SamplingStrategy>,
    #[arg(long)]
    pub search: Option<SearchKind>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub archive: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Forward passes per batch.
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub profiling_size: Option<usize>,
    #[arg(long)]
    pub corpus_cap: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Saved profile to use instead of profiling.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Write one row per tree-search rollout to `mcts_trace.csv`.
    #[arg(long)]
    pub mcts_trace: bool,
    /// Skip printing the report text; files are still written.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum FixtureCommand {
    /// Write a seeded random-weight model.
    Model {
        #[arg(long, default_value = "mini-lenet")]
        arch: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write seeded synthetic 28x28 images as an IDX image/label pair.
    Dataset {
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A `report.json` file or the directory holding it.
    pub path: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Profile(a) => run_profile(&a),
        Command::Fuzz(a) => run_fuzz(&a),
        Command::Fixture(f) => run_fixture(f),
        Command::Report(a) => run_report(&a),
    }
}

fn run_profile(a: &ProfileArgs) -> Result<()> {
    let model = a
        .model
        .source()
        .ok_or_else(|| Error::Config("profile needs --model or --fixture".into()))?
        .load()?;
    let source = a
        .dataset
        .source()
        .ok_or_else(|| Error::Config("profile needs --images/--labels or --synthetic".into()))?;
    let data = load_dataset(&source, model.input_shape())?;
    let n = a.profiling_size.min(data.len());
    let images: Vec<Tensor> = data[..n].iter().map(|(t, _)| t.clone()).collect();
    let p = profile(&model, &images, a.k)?;
    save_profile(&p, &a.out)?;
    println!(
        "profiled {} neurons on {n} images -> {}",
        p.neuron_count(),
        a.out.display()
    );
    Ok(())
}

/// Resolves the campaign config from an optional file plus flag overrides.
pub fn resolve_config(a: &FuzzArgs) -> Result<CampaignConfig> {
    let mut c = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let mut table: toml::Table =
                toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            // Let a flag supply the seed when the file leaves it out.
            if let Some(seed) = a.rng_seed {
                table.insert("rng_seed".into(), toml::Value::Integer(seed as i64));
            }
            CampaignConfig::from_toml(
                &toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?,
            )?
        }
        None => {
            let model = a
                .model
                .source()
                .ok_or_else(|| Error::Config("fuzz needs --config, --model or --fixture".into()))?;
            let dataset = a.dataset.source().ok_or_else(|| {
                Error::Config("fuzz needs --config, --images/--labels or --synthetic".into())
            })?;
            let seed = a
                .rng_seed
                .ok_or_else(|| Error::Config("--rng-seed is required".into()))?;
            CampaignConfig::new(model, dataset, seed)
        }
    };
    if let Some(m) = a.model.source() {
        c.model = m;
    }
    if let Some(d) = a.dataset.source() {
        c.dataset = d;
    }
    macro_rules! set {
        ($($field:ident).+ <- $flag:ident) => {
            if let Some(v) = a.$flag.clone() {
                c.$($field).+ = v;
            }
        };
    }
    set!(strategy <- strategy);
    set!(search <- search);
    set!(k <- k);
    set!(alpha <- alpha);
    set!(beta <- beta);
    set!(a <- a);
    set!(b <- b);
    set!(params.population <- population);
    set!(params.archive <- archive);
    set!(params.iterations <- iterations);
    set!(batches <- batches);
    set!(batch_size <- batch_size);
    set!(rng_seed <- rng_seed);
    set!(profiling_size <- profiling_size);
    set!(corpus_cap <- corpus_cap);
    set!(clusters <- clusters);
    if a.budget.is_some() {
        c.budget = a.budget;
    }
    if a.profile.is_some() {
        c.profile = a.profile.clone();
    }
    if a.output_dir.is_some() {
        c.output_dir = a.output_dir.clone();
    }
    c.mcts_trace |= a.mcts_trace;
    c.validate()?;
    Ok(c)
}

fn output_dir(c: &CampaignConfig) -> PathBuf {
    c.output_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("nnfuzz-out"))
}

fn run_fuzz(a: &FuzzArgs) -> Result<()> {
    let config = resolve_config(a)?;
    let dir = output_dir(&config);
    let outcome = run_campaign(&config)?;
    let files = emit_outcome(&outcome, &dir)?;
    if !a.quiet {
        print!("{}", outcome.report.to_text());
        println!("Wall-clock: {:.1} s", outcome.duration.as_secs_f64());
    }
    eprintln!("wrote {}", files.json.display());
    Ok(())
}

fn run_fixture(f: FixtureCommand) -> Result<()> {
    match f {
        FixtureCommand::Model { arch, seed, out } => {
            let model = generate_fixture_model(arch.parse::<FixtureArch>()?, seed);
            save_model(&model, &out)?;
            println!(
                "{} ({} neurons) -> {}",
                model.name(),
                model.neuron_count(),
                out.display()
            );
        }
        FixtureCommand::Dataset {
            count,
            seed,
            images,
            labels,
        } => {
            let set = synthetic_dataset(count, &Shape::new([28, 28, 1]), seed)?;
            let (imgs, labs): (Vec<Tensor>, Vec<u8>) = set.into_iter().unzip();
            fs::write(&images, encode_idx_images(&imgs)?).map_err(DatasetError::from)?;
            fs::write(&labels, encode_idx_labels(&labs)).map_err(DatasetError::from)?;
            println!(
                "{count} images -> {}, {}",
                images.display(),
                labels.display()
            );
        }
    }
    Ok(())
}

fn read_report(path: &Path) -> Result<CampaignReport> {
    let file = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file)
        .map_err(|e| DatasetError::Invalid(format!("{}: {e}", file.display())))?;
    let report: CampaignReport = serde_json::from_str(&text)
        .map_err(|e| DatasetError::Invalid(format!("{}: {e}", file.display())))?;
    report.check()?;
    Ok(report)
}

fn run_report(a: &ReportArgs) -> Result<()> {
    let report = read_report(&a.path)?;
    match a.format {
        ReportFormat::Text => print!("{}", report.to_text()),
        ReportFormat::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("reports serialize")
            )
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for b in &report.batches {
                w.serialize(b).map_err(|e| Error::Output(e.to_string()))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
