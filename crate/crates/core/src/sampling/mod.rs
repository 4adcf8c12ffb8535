//! Seed scheduling: which corpus entries to fuzz next.
//!
//! The frequency strategy weights each seed by a blend of two terms. Early
//! in a campaign the weight is dominated by a logistic decay in the number
//! of times the seed was already picked; later it shifts toward a term that
//! favours seeds whose last round produced little new coverage.

mod kmeans;

pub use kmeans::{kmeans, pooled_features, KMeans};

use std::io::Write;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SearchError;
use crate::tensor::Tensor;

/// Floor applied to a zero coverage gain before it is used as a divisor.
pub const GAIN_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedOrigin {
    Initial,
    Generated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub id: usize,
    pub image: Tensor,
    /// The model's prediction on this image; the reference for label flips.
    pub predicted_label: usize,
    pub fuzz_count: u32,
    /// Coverage fraction gained the last time this seed was fuzzed.
    pub last_gain: f64,
    pub origin: SeedOrigin,
}

impl Seed {
    pub fn new(id: usize, image: Tensor, predicted_label: usize, origin: SeedOrigin) -> Self {
        Seed {
            id,
            image,
            predicted_label,
            fuzz_count: 0,
            last_gain: 0.0,
            origin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplingStrategy {
    #[serde(rename = "dsf-random", alias = "random")]
    Random,
    #[serde(rename = "dsf-clustered", alias = "clustered")]
    Clustered,
    #[serde(rename = "dsf-prob", alias = "frequency")]
    Frequency,
}

impl SamplingStrategy {
    pub const ALL: [SamplingStrategy; 3] = [
        SamplingStrategy::Random,
        SamplingStrategy::Clustered,
        SamplingStrategy::Frequency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplingStrategy::Random => "dsf-random",
            SamplingStrategy::Clustered => "dsf-clustered",
            SamplingStrategy::Frequency => "dsf-prob",
        }
    }
}

impl std::fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SamplingStrategy {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, SearchError> {
        let plain = match s {
            "random" => "dsf-random",
            "clustered" => "dsf-clustered",
            "frequency" => "dsf-prob",
            other => other,
        };
        Self::ALL
            .into_iter()
            .find(|k| k.name() == plain)
            .ok_or_else(|| SearchError::InvalidParams(format!("unknown sampling strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub a: f64,
    pub b: f64,
    pub total: u32,
    pub circle: u32,
    pub strategy: SamplingStrategy,
}

impl SamplerParams {
    pub fn new(strategy: SamplingStrategy, total: u32) -> Self {
        SamplerParams {
            a: 0.3,
            b: -1.0,
            total,
            circle: 0,
            strategy,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.a > 0.0 && self.a.is_finite()) || !self.b.is_finite() {
            return Err(SearchError::InvalidParams(format!(
                "sampler needs a > 0 and finite b (a {}, b {})",
                self.a, self.b
            )));
        }
        if self.total == 0 || self.circle > self.total {
            return Err(SearchError::InvalidParams(format!(
                "sampler needs 0 <= circle <= total and total >= 1 (circle {}, total {})",
                self.circle, self.total
            )));
        }
        Ok(())
    }
}

/// `1 / (1 + e^(a x + b))`, evaluated without overflow.
pub fn p1(x: u32, a: f64, b: f64) -> f64 {
    let z = a * x as f64 + b;
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// The unclamped late-campaign term. Always at least 1 for gains in `[0, 1]`.
pub fn p2_raw(ncov_new: f64, circle: u32, total: u32) -> f64 {
    let (c, t) = (circle as f64, total as f64);
    (1.0 + c.powi(4) / t.powi(3)) / ncov_new.max(GAIN_FLOOR).sqrt()
}

/// [`p2_raw`] clamped into `(0, 1]`.
pub fn p2(ncov_new: f64, circle: u32, total: u32) -> f64 {
    p2_raw(ncov_new, circle, total).clamp(f64::MIN_POSITIVE, 1.0)
}

pub fn selection_probability(seed: &Seed, params: &SamplerParams) -> f64 {
    let w = params.circle as f64 / params.total as f64;
    let a = p1(seed.fuzz_count, params.a, params.b);
    let b = p2(seed.last_gain, params.circle, params.total);
    if params.circle == 0 {
        a
    } else if params.circle == params.total {
        b
    } else {
        (1.0 - w) * a + w * b
    }
}

/// Picks seeds according to a [`SamplingStrategy`]. Holds the cluster
/// assignment and round-robin cursor for the clustered strategy.
#[derive(Debug, Clone)]
pub struct Sampler {
    strategy: SamplingStrategy,
    clusters: Option<ClusterState>,
}

#[derive(Debug, Clone)]
struct ClusterState {
    model: KMeans,
    members: Vec<Vec<usize>>,
    assigned: usize,
    cursor: usize,
}

/// Default cluster count for the clustered strategy.
pub const DEFAULT_CLUSTERS: usize = 10;

impl Sampler {
    /// For the clustered strategy, clusters `corpus` (the initial seeds)
    /// into `clusters` groups; seeds added later join their nearest cluster.
    pub fn new<R: Rng + ?Sized>(
        strategy: SamplingStrategy,
        corpus: &[Seed],
        clusters: usize,
        rng: &mut R,
    ) -> Self {
        let clusters = (strategy == SamplingStrategy::Clustered && !corpus.is_empty()).then(|| {
            let features: Vec<Vec<f64>> = corpus
                .iter()
                .map(|s| pooled_features(&s.image, 8))
                .collect();
            let model = kmeans(&features, clusters, 50, rng);
            let mut members = vec![Vec::new(); model.centroids.len()];
            for (i, &c) in model.assignment.iter().enumerate() {
                members[c].push(i);
            }
            ClusterState {
                model,
                members,
                assigned: corpus.len(),
                cursor: 0,
            }
        });
        Sampler { strategy, clusters }
    }

    pub fn strategy(&self) -> SamplingStrategy {
        self.strategy
    }

    /// Draws up to `batch_size` distinct seeds, bumps their `fuzz_count`,
    /// and returns their corpus indices in draw order.
    pub fn select_next<R: Rng + ?Sized>(
        &mut self,
        corpus: &mut [Seed],
        batch_size: usize,
        params: &SamplerParams,
        rng: &mut R,
    ) -> Vec<usize> {
        let n = batch_size.min(corpus.len());
        let picked = match self.strategy {
            SamplingStrategy::Random => rand::seq::index::sample(rng, corpus.len(), n).into_vec(),
            SamplingStrategy::Frequency => {
                let weights: Vec<f64> = corpus
                    .iter()
                    .map(|s| selection_probability(s, params))
                    .collect();
                weighted_without_replacement(&weights, n, rng)
            }
            SamplingStrategy::Clustered => self.round_robin(corpus, n, rng),
        };
        for &i in &picked {
            corpus[i].fuzz_count += 1;
        }
        picked
    }

    fn round_robin<R: Rng + ?Sized>(
        &mut self,
        corpus: &[Seed],
        n: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        let Some(cs) = self.clusters.as_mut() else {
            return rand::seq::index::sample(rng, corpus.len(), n).into_vec();
        };
        for (i, seed) in corpus.iter().enumerate().skip(cs.assigned) {
            let c = cs.model.nearest(&pooled_features(&seed.image, 8));
            cs.members[c].push(i);
        }
        cs.assigned = corpus.len();

        let mut remaining: Vec<Vec<usize>> = cs.members.clone();
        let mut picked = Vec::with_capacity(n);
        while picked.len() < n {
            let c = cs.cursor % remaining.len();
            cs.cursor = (cs.cursor + 1) % remaining.len();
            if remaining[c].is_empty() {
                continue;
            }
            let j = rng.gen_range(0..remaining[c].len());
            picked.push(remaining[c].swap_remove(j));
        }
        picked
    }
}

/// Sequential weighted draws, zeroing each winner's weight.
pub fn weighted_without_replacement<R: Rng + ?Sized>(
    weights: &[f64],
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut weights: Vec<f64> = weights.iter().map(|w| w.max(f64::MIN_POSITIVE)).collect();
    let n = n.min(weights.len());
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let mut dist = WeightedIndex::new(&weights).expect("weights are positive and finite");
    loop {
        let i = dist.sample(rng);
        out.push(i);
        if out.len() == n {
            return out;
        }
        weights[i] = 0.0;
        if dist.update_weights(&[(i, &0.0)]).is_err() {
            // Remaining weights underflowed to a zero total; fall back to
            // uniform over what is left.
            let rest: Vec<usize> = (0..weights.len()).filter(|j| !out.contains(j)).collect();
            for j in rand::seq::index::sample(rng, rest.len(), n - out.len()) {
                out.push(rest[j]);
            }
            return out;
        }
    }
}

#[derive(Serialize)]
struct CorpusRow {
    id: usize,
    fuzz_count: u32,
    last_gain: f64,
    origin: SeedOrigin,
}

/// One CSV row per seed: `id,fuzz_count,last_gain,origin`.
pub fn write_corpus_csv(corpus: &[Seed], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in corpus {
        w.serialize(CorpusRow {
            id: s.id,
            fuzz_count: s.fuzz_count,
            last_gain: s.last_gain,
            origin: s.origin,
        })?;
    }
    w.flush()?;
    Ok(())
}
