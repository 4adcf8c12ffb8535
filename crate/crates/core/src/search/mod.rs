//! Many-objective search over chromosome-encoded mutations.

mod chromosome;
pub mod decomposition;
mod engine;
pub mod nsga3;
pub mod pareto;
pub mod variation;

pub use chromosome::Chromosome;
pub use decomposition::{
    decomposition_select, generate_weight_vectors, perpendicular_distance, DecompositionSelection,
};
pub use engine::{
    evaluate, plan, run_plan, AcceptedMutant, BatchSearch, BatchSeed, CommitLog, EvaluatedMutant,
    Evaluation, ForwardBudget, GaState, GenerationRow, Individual, MctsTraceRow, Plan, SearchKind,
    SearchParams,
};
pub use nsga3::{non_dominated_sort, nsga3_select};
pub use pareto::{dominates, pareto_front, spea2_fitness, spea2_select, Objectives, Spea2Fitness};
pub use variation::{
    polynomial_mutation, polynomial_mutation_counted, sbx_crossover, tournament_select,
};
