//! Running one search over one batch of seeds.
//!
//! Every search spends forward passes from a shared [`ForwardBudget`] and
//! commits the constraint-satisfying mutants it evaluated into the global
//! coverage state. Evolutionary searches commit once per generation, so all
//! individuals of a generation are scored against the same frozen snapshot.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decomposition::{decomposition_select, generate_weight_vectors};
use super::nsga3::{nsga3_select, ranks};
use super::pareto::{spea2_fitness, spea2_select, Objectives};
use super::variation::{polynomial_mutation, sbx_crossover, tournament_select};
use super::Chromosome;
use crate::coverage::{CoverageDelta, CoverageState, CoverageVector, NeuronProfile};
use crate::error::{Error, Result, SearchError};
use crate::mcts::{mcts_search, repair_threshold, MctsOutcome, MctsParams, PairGame};
use crate::mutation::{mutate_sequence, MutationSpace};
use crate::nn::Model;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchKind {
    Spea2Mcts,
    Spea2Decomp,
    Nsga3,
    RandomMutation,
    MctsOnly,
}

impl SearchKind {
    pub const ALL: [SearchKind; 5] = [
        SearchKind::Spea2Mcts,
        SearchKind::Spea2Decomp,
        SearchKind::Nsga3,
        SearchKind::RandomMutation,
        SearchKind::MctsOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SearchKind::Spea2Mcts => "spea2-mcts",
            SearchKind::Spea2Decomp => "spea2-decomp",
            SearchKind::Nsga3 => "nsga3",
            SearchKind::RandomMutation => "random-mutation",
            SearchKind::MctsOnly => "mcts-only",
        }
    }
}

impl fmt::Display for SearchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SearchKind {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, SearchError> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SearchError::InvalidParams(format!("unknown search `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchParams {
    pub population: usize,
    pub archive: usize,
    pub iterations: usize,
    pub mutation_prob: f64,
    /// Lattice resolution of the weight vectors.
    pub weight_h: usize,
    /// Step limit of one random mutation walk.
    pub random_max_steps: usize,
    pub mcts: MctsParams,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            population: 40,
            archive: 40,
            iterations: 40,
            mutation_prob: 0.2,
            weight_h: 7,
            random_max_steps: 3,
            mcts: MctsParams::default(),
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.population == 0 || self.archive == 0 {
            return Err(SearchError::InvalidParams(
                "population and archive must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(SearchError::InvalidParams(format!(
                "mutation probability {} outside [0, 1]",
                self.mutation_prob
            )));
        }
        if self.weight_h == 0 || self.random_max_steps == 0 {
            return Err(SearchError::InvalidParams(
                "weight_h and random_max_steps must be at least 1".into(),
            ));
        }
        self.mcts.validate()
    }

    /// Forward passes per batch when no explicit budget is given: what the
    /// evolutionary searches spend evaluating every generation in full.
    pub fn default_budget(&self, batch_size: usize) -> u64 {
        (self.population * self.iterations.max(1) * batch_size) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardBudget {
    pub limit: u64,
    pub used: u64,
}

impl ForwardBudget {
    pub fn new(limit: u64) -> Self {
        ForwardBudget { limit, used: 0 }
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.used
    }

    /// Reserves `n` passes if that many remain.
    pub fn try_take(&mut self, n: u64) -> bool {
        if n <= self.remaining() {
            self.used += n;
            true
        } else {
            false
        }
    }
}

/// One seed of the batch under search.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSeed {
    pub id: usize,
    pub image: Tensor,
    pub label: usize,
}

/// A mutant that was run through the model, waiting to be committed.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedMutant {
    /// Position of the source seed within the batch.
    pub source: usize,
    pub image: Tensor,
    pub label: usize,
    pub cells: Vec<u32>,
}

/// The images a chromosome produces on a batch, before any forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// (batch position, mutant) for mutants that changed and satisfy the constraint.
    pub candidates: Vec<(usize, Tensor)>,
    pub violated: usize,
    pub identical: usize,
}

impl Plan {
    /// Infeasible only when every mutant that changed broke the constraint.
    pub fn feasible(&self) -> bool {
        !self.candidates.is_empty() || self.violated == 0
    }

    pub fn forwards(&self) -> u64 {
        self.candidates.len() as u64
    }
}

pub fn plan(chromosome: &Chromosome, seeds: &[BatchSeed], space: &MutationSpace) -> Result<Plan> {
    let mut p = Plan {
        candidates: Vec::new(),
        violated: 0,
        identical: 0,
    };
    for (pos, seed) in seeds.iter().enumerate() {
        let m = chromosome.apply(&seed.image, space)?;
        if m == seed.image {
            p.identical += 1;
        } else if space.admits(&seed.image, &m)? {
            p.candidates.push((pos, m));
        } else {
            p.violated += 1;
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub feasible: bool,
    /// Every coverage cell hit by the surviving mutants.
    pub footprint: CoverageState,
    pub mutants: Vec<EvaluatedMutant>,
}

pub fn run_plan(plan: Plan, model: &Model, profile: &NeuronProfile) -> Result<Evaluation> {
    let feasible = plan.feasible();
    let mut footprint = CoverageState::for_profile(profile);
    let mut mutants = Vec::with_capacity(plan.candidates.len());
    for (source, image) in plan.candidates {
        let trace = model.forward(&image)?;
        let cells = profile.cells(&trace.values);
        footprint.update_cells(&cells);
        mutants.push(EvaluatedMutant {
            source,
            image,
            label: trace.predicted_label,
            cells,
        });
    }
    Ok(Evaluation {
        feasible,
        footprint,
        mutants,
    })
}

/// Applies `chromosome` to every seed, drops mutants that break the
/// constraint, and measures the coverage the rest add over `snapshot`.
pub fn evaluate(
    chromosome: &Chromosome,
    seeds: &[BatchSeed],
    model: &Model,
    profile: &NeuronProfile,
    space: &MutationSpace,
    snapshot: &CoverageState,
) -> Result<(CoverageVector, Evaluation)> {
    let e = run_plan(plan(chromosome, seeds, space)?, model, profile)?;
    let v = e
        .footprint
        .gain_over(snapshot)
        .as_vector(profile.neuron_count(), profile.k());
    Ok((v, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub id: u64,
    pub chromosome: Chromosome,
    pub objectives: CoverageVector,
    pub fitness: f64,
    pub feasible: bool,
    pub footprint: CoverageState,
}

impl Individual {
    fn rescore(&mut self, snapshot: &CoverageState, profile: &NeuronProfile) {
        self.objectives = self
            .footprint
            .gain_over(snapshot)
            .as_vector(profile.neuron_count(), profile.k());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedMutant {
    pub source: usize,
    pub image: Tensor,
    pub label: usize,
    pub gain: CoverageDelta,
    pub adversarial: bool,
}

/// What the search committed to the global state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommitLog {
    /// Constraint-satisfying mutants committed.
    pub mutants: u64,
    pub adversarial: u64,
    /// Mutants that added coverage or flipped the label.
    pub accepted: Vec<AcceptedMutant>,
    /// Coverage gained per batch position.
    pub seed_gain: Vec<CoverageDelta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub generation: usize,
    pub best_kmnc: f64,
    pub best_nbc: f64,
    pub best_snac: f64,
    pub archive_size: usize,
    pub feasible_fraction: f64,
    pub forwards: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MctsTraceRow {
    pub call: usize,
    pub rollout: usize,
    pub depth: usize,
    pub reward: f64,
}

/// Borrowed inputs plus the mutable bookkeeping of one batch search.
pub struct BatchSearch<'a> {
    pub model: &'a Model,
    pub profile: &'a NeuronProfile,
    pub space: &'a MutationSpace,
    pub seeds: &'a [BatchSeed],
    pub params: &'a SearchParams,
    pub global: &'a mut CoverageState,
    pub budget: ForwardBudget,
    pub commits: CommitLog,
    pub log: Vec<GenerationRow>,
    /// Collected only when set to `Some`.
    pub mcts_trace: Option<Vec<MctsTraceRow>>,
    mcts_calls: usize,
}

impl<'a> BatchSearch<'a> {
    pub fn new(
        model: &'a Model,
        profile: &'a NeuronProfile,
        space: &'a MutationSpace,
        seeds: &'a [BatchSeed],
        params: &'a SearchParams,
        global: &'a mut CoverageState,
        budget: u64,
    ) -> Self {
        BatchSearch {
            model,
            profile,
            space,
            seeds,
            params,
            global,
            budget: ForwardBudget::new(budget),
            commits: CommitLog {
                seed_gain: vec![CoverageDelta::default(); seeds.len()],
                ..CommitLog::default()
            },
            log: Vec::new(),
            mcts_trace: None,
            mcts_calls: 0,
        }
    }

    /// Runs `kind` until its iterations or the budget run out.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        kind: SearchKind,
        rng: &mut R,
    ) -> Result<Option<Individual>> {
        if self.seeds.is_empty() {
            return Ok(None);
        }
        match kind {
            SearchKind::RandomMutation => self.run_random(rng).map(|_| None),
            SearchKind::MctsOnly => self.run_mcts_only(rng).map(|_| None),
            SearchKind::Spea2Mcts | SearchKind::Spea2Decomp | SearchKind::Nsga3 => {
                let mut ga = GaState::init(self, kind, rng)?;
                ga.run(self, self.params.iterations, rng)?;
                Ok(ga.finish(self))
            }
        }
    }

    fn commit(&mut self, m: EvaluatedMutant) {
        let gain = self.global.update_cells(&m.cells);
        let adversarial = m.label != self.seeds[m.source].label;
        self.commits.mutants += 1;
        self.commits.adversarial += u64::from(adversarial);
        self.commits.seed_gain[m.source] += gain;
        if adversarial || !gain.is_empty() {
            self.commits.accepted.push(AcceptedMutant {
                source: m.source,
                image: m.image,
                label: m.label,
                gain,
                adversarial,
            });
        }
    }

    /// Cumulative random walks over the batch seeds in turn.
    fn run_random<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let mut pos = 0;
        let mut idle = 0;
        while self.budget.remaining() > 0 && idle < IDLE_LIMIT * self.seeds.len() {
            let steps = (self.params.random_max_steps as u64).min(self.budget.remaining()) as usize;
            let out = mutate_sequence(
                &self.seeds[pos].image,
                self.model,
                self.profile,
                self.global,
                self.space,
                steps,
                rng,
            )?;
            self.budget.used += out.forwards as u64;
            idle = if out.forwards == 0 { idle + 1 } else { 0 };
            for m in out.mutants {
                self.commit(EvaluatedMutant {
                    source: pos,
                    image: m.image,
                    label: m.trace.predicted_label,
                    cells: m.cells,
                });
            }
            pos = (pos + 1) % self.seeds.len();
        }
        Ok(())
    }

    /// Repeated tree searches over the batch seeds in turn.
    fn run_mcts_only<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let mut pos = 0;
        let mut idle = 0;
        while self.budget.remaining() > 0 && idle < IDLE_LIMIT * self.seeds.len() {
            let before = self.budget.used;
            let (_, found) = self.tree_search(pos, rng)?;
            idle = if self.budget.used == before {
                idle + 1
            } else {
                0
            };
            for m in found {
                self.commit(m);
            }
            pos = (pos + 1) % self.seeds.len();
        }
        Ok(())
    }

    /// One tree search from seed `pos` against the current global state.
    /// Returns the best chromosome and every mutant the search evaluated.
    fn tree_search<R: Rng + ?Sized>(
        &mut self,
        pos: usize,
        rng: &mut R,
    ) -> Result<(Chromosome, Vec<EvaluatedMutant>)> {
        let mut game = ImageGame {
            source: pos,
            seed: &self.seeds[pos].image,
            model: self.model,
            profile: self.profile,
            space: self.space,
            base: self.global,
            budget: &mut self.budget,
            found: Vec::new(),
            error: None,
        };
        let record = self.mcts_trace.is_some();
        let out: MctsOutcome<GameState> = mcts_search(&mut game, &self.params.mcts, record, rng);
        if let Some(e) = game.error.take() {
            return Err(e);
        }
        let found = std::mem::take(&mut game.found);
        if let Some(rows) = self.mcts_trace.as_mut() {
            rows.extend(out.trace.iter().map(|r| MctsTraceRow {
                call: self.mcts_calls,
                rollout: r.rollout,
                depth: r.depth,
                reward: r.reward,
            }));
        }
        self.mcts_calls += 1;
        Ok((Chromosome::from_pairs(self.space, &out.path), found))
    }

    /// Batch position of the seed with the lowest id.
    fn representative(&self) -> usize {
        (0..self.seeds.len())
            .min_by_key(|&i| self.seeds[i].id)
            .unwrap_or(0)
    }
}

/// Consecutive zero-cost attempts per seed before a search gives up on
/// spending the rest of its budget.
const IDLE_LIMIT: usize = 100;

#[derive(Clone)]
struct GameState {
    image: Tensor,
    coverage: CoverageState,
}

struct ImageGame<'s, 'b> {
    source: usize,
    seed: &'s Tensor,
    model: &'s Model,
    profile: &'s NeuronProfile,
    space: &'s MutationSpace,
    base: &'s CoverageState,
    budget: &'b mut ForwardBudget,
    found: Vec<EvaluatedMutant>,
    error: Option<Error>,
}

impl PairGame for ImageGame<'_, '_> {
    type State = GameState;

    fn initial(&self) -> GameState {
        GameState {
            image: self.seed.clone(),
            coverage: self.base.clone(),
        }
    }

    fn regions(&self) -> usize {
        self.space.regions()
    }

    fn ops(&self) -> usize {
        self.space.op_count()
    }

    fn play(&mut self, state: &GameState, region: usize, op: usize) -> Option<(GameState, f64)> {
        let mut image = state.image.clone();
        let step = self
            .space
            .apply_in_place(&mut image, region, self.space.op(op))
            .and_then(|_| self.space.admits(self.seed, &image));
        match step {
            Err(e) => {
                self.error.get_or_insert(e.into());
                return None;
            }
            Ok(false) => return None,
            Ok(true) => {}
        }
        if image == state.image || !self.budget.try_take(1) {
            let coverage = state.coverage.clone();
            return Some((GameState { image, coverage }, 0.0));
        }
        let trace = match self.model.forward(&image) {
            Ok(t) => t,
            Err(e) => {
                self.error.get_or_insert(e.into());
                return None;
            }
        };
        let cells = self.profile.cells(&trace.values);
        let mut coverage = state.coverage.clone();
        let gain = coverage.update_cells(&cells);
        if image != *self.seed {
            self.found.push(EvaluatedMutant {
                source: self.source,
                image: image.clone(),
                label: trace.predicted_label,
                cells,
            });
        }
        let reward = gain
            .as_vector(self.profile.neuron_count(), self.profile.k())
            .sum();
        Some((GameState { image, coverage }, reward))
    }

    fn exhausted(&self) -> bool {
        self.budget.remaining() == 0 || self.error.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Selector {
    Truncation,
    Decomposition,
    Nsga3,
}

/// State of an evolutionary search between generations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaState {
    pub generation: usize,
    /// Most recently evaluated individuals.
    pub population: Vec<Individual>,
    pub archive: Vec<Individual>,
    /// Highest objective sum seen in any archive, with its holder.
    pub best: Option<(f64, Individual)>,
    /// Set once the budget could not cover the next individual.
    pub stopped: bool,
    selector: Selector,
    repair: bool,
    weights: Vec<Objectives>,
    pending: Vec<EvaluatedMutant>,
    next_id: u64,
}

impl GaState {
    /// Evaluates a random initial population against the current state.
    pub fn init<R: Rng + ?Sized>(
        search: &mut BatchSearch<'_>,
        kind: SearchKind,
        rng: &mut R,
    ) -> Result<Self> {
        let (selector, repair) = match kind {
            SearchKind::Spea2Mcts => (Selector::Truncation, true),
            SearchKind::Spea2Decomp => (Selector::Decomposition, false),
            SearchKind::Nsga3 => (Selector::Nsga3, false),
            other => {
                return Err(SearchError::InvalidParams(format!(
                    "{other} is not an evolutionary search"
                ))
                .into());
            }
        };
        let mut ga = GaState {
            generation: 0,
            population: Vec::new(),
            archive: Vec::new(),
            best: None,
            stopped: false,
            selector,
            repair,
            weights: generate_weight_vectors(search.params.weight_h),
            pending: Vec::new(),
            next_id: 0,
        };
        let (regions, levels) = (search.space.regions(), search.space.levels());
        let initial = (0..search.params.population)
            .map(|_| (Chromosome::random(regions, levels, rng), None))
            .collect();
        ga.evaluate(search, initial)?;
        Ok(ga)
    }

    fn evaluate(
        &mut self,
        search: &mut BatchSearch<'_>,
        batch: Vec<(Chromosome, Option<Plan>)>,
    ) -> Result<()> {
        let mut admitted = Vec::with_capacity(batch.len());
        for (c, p) in batch {
            let p = match p {
                Some(p) => p,
                None => plan(&c, search.seeds, search.space)?,
            };
            if !search.budget.try_take(p.forwards()) {
                self.stopped = true;
                break;
            }
            admitted.push((c, p));
        }
        let (model, profile) = (search.model, search.profile);
        let results: Vec<(Chromosome, Evaluation)> = admitted
            .into_par_iter()
            .map(|(c, p)| run_plan(p, model, profile).map(|e| (c, e)))
            .collect::<Result<_>>()?;
        self.population.clear();
        for (chromosome, e) in results {
            self.pending.extend(e.mutants);
            let mut ind = Individual {
                id: self.next_id,
                chromosome,
                objectives: CoverageVector::default(),
                fitness: 0.0,
                feasible: e.feasible,
                footprint: e.footprint,
            };
            ind.rescore(search.global, search.profile);
            self.next_id += 1;
            self.population.push(ind);
        }
        Ok(())
    }

    /// One generation: select from population and archive, commit the
    /// population's mutants, then breed and evaluate the next population.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        search: &mut BatchSearch<'_>,
        rng: &mut R,
    ) -> Result<()> {
        let mut union: Vec<Individual> = std::mem::take(&mut self.archive);
        union.append(&mut self.population.clone());
        if union.is_empty() {
            self.stopped = true;
            return Ok(());
        }
        for ind in &mut union {
            ind.rescore(search.global, search.profile);
        }
        let pts: Vec<Objectives> = union.iter().map(|i| i.objectives.as_array()).collect();
        let ids: Vec<u64> = union.iter().map(|i| i.id).collect();
        let keep = match self.selector {
            Selector::Truncation | Selector::Decomposition => {
                let f = spea2_fitness(&pts);
                for (ind, fit) in union.iter_mut().zip(f.fitness) {
                    ind.fitness = fit;
                }
                if self.selector == Selector::Truncation {
                    spea2_select(
                        &pts,
                        &union.iter().map(|i| i.fitness).collect::<Vec<_>>(),
                        &ids,
                        search.params.archive,
                    )
                } else {
                    decomposition_select(&pts, &ids, &self.weights, search.params.archive).retained
                }
            }
            Selector::Nsga3 => {
                for (ind, r) in union.iter_mut().zip(ranks(&pts)) {
                    ind.fitness = r as f64;
                }
                nsga3_select(&pts, &ids, &self.weights, search.params.population)
            }
        };
        self.archive = keep.into_iter().map(|i| union[i].clone()).collect();

        for ind in &self.archive {
            let score = ind.objectives.sum();
            if self.best.as_ref().is_none_or(|b| score > b.0) {
                self.best = Some((score, ind.clone()));
            }
        }
        let feasible = self.population.iter().filter(|i| i.feasible).count();
        let best_of = |f: fn(&CoverageVector) -> f64| {
            self.archive
                .iter()
                .map(|i| f(&i.objectives))
                .fold(0.0, f64::max)
        };
        search.log.push(GenerationRow {
            generation: self.generation,
            best_kmnc: best_of(|v| v.kmnc),
            best_nbc: best_of(|v| v.nbc),
            best_snac: best_of(|v| v.snac),
            archive_size: self.archive.len(),
            feasible_fraction: if self.population.is_empty() {
                0.0
            } else {
                feasible as f64 / self.population.len() as f64
            },
            forwards: search.budget.used,
        });

        for m in std::mem::take(&mut self.pending) {
            search.commit(m);
        }
        self.generation += 1;
        if self.stopped {
            self.population.clear();
            return Ok(());
        }

        let offspring = self.breed(search, rng)?;
        self.evaluate(search, offspring)
    }

    fn breed<R: Rng + ?Sized>(
        &mut self,
        search: &mut BatchSearch<'_>,
        rng: &mut R,
    ) -> Result<Vec<(Chromosome, Option<Plan>)>> {
        let params = search.params;
        let levels = search.space.levels();
        let fitness: Vec<f64> = self.archive.iter().map(|i| i.fitness).collect();
        let mut children = Vec::with_capacity(params.population);
        while children.len() < params.population {
            let (a, b) = tournament_select(&fitness, rng);
            let (c1, c2) = sbx_crossover(
                &self.archive[a].chromosome,
                &self.archive[b].chromosome,
                levels,
                rng,
            );
            children.push(polynomial_mutation(&c1, params.mutation_prob, levels, rng));
            if children.len() < params.population {
                children.push(polynomial_mutation(&c2, params.mutation_prob, levels, rng));
            }
        }
        let mut out = Vec::with_capacity(children.len());
        for child in children {
            let p = plan(&child, search.seeds, search.space)?;
            if !self.repair || p.feasible() {
                out.push((child, Some(p)));
                continue;
            }
            let threshold = repair_threshold(
                self.generation,
                params.iterations,
                params.mcts.c0,
                params.mcts.c1,
            );
            let replacement = if rng.gen::<f64>() > threshold {
                let (c, found) = search.tree_search(search.representative(), rng)?;
                self.pending.extend(found);
                c
            } else {
                Chromosome::random(search.space.regions(), levels, rng)
            };
            out.push((replacement, None));
        }
        Ok(out)
    }

    pub fn run<R: Rng + ?Sized>(
        &mut self,
        search: &mut BatchSearch<'_>,
        generations: usize,
        rng: &mut R,
    ) -> Result<()> {
        for _ in 0..generations {
            self.step(search, rng)?;
        }
        Ok(())
    }

    /// Commits whatever is still pending and returns the best individual.
    pub fn finish(mut self, search: &mut BatchSearch<'_>) -> Option<Individual> {
        for m in std::mem::take(&mut self.pending) {
            search.commit(m);
        }
        self.best.map(|b| b.1)
    }
}
