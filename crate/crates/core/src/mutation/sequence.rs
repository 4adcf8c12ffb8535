use rand::Rng;

use super::{MutationOp, MutationSpace, OperatorKind};
use crate::coverage::{CoverageDelta, CoverageState, NeuronProfile};
use crate::error::Result;
use crate::nn::{ActivationTrace, Model};
use crate::tensor::Tensor;

/// A constraint-satisfying image that differs from its seed, with its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Mutant {
    pub image: Tensor,
    pub trace: ActivationTrace,
    /// Coverage cell per neuron, as produced by [`NeuronProfile::cells`].
    pub cells: Vec<u32>,
    /// New bits over the state it was measured against.
    pub gain: CoverageDelta,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceOutcome {
    pub mutants: Vec<Mutant>,
    /// Forward passes spent.
    pub forwards: usize,
}

/// Random cumulative mutation of one seed.
///
/// Each step applies a random (region, operator, level) choice on top of the
/// previous step. The walk stops when the result breaks the constraint
/// against `seed`, when a step adds no coverage, or after `max_steps`.
/// Coverage gain of each step is measured against `state` plus the
/// coverage of earlier steps in the same walk; `state` itself is untouched.
///
/// A step that leaves the image unchanged costs no forward pass and ends the
/// walk, since it cannot add coverage.
pub fn mutate_sequence<R: Rng + ?Sized>(
    seed: &Tensor,
    model: &Model,
    profile: &NeuronProfile,
    state: &CoverageState,
    space: &MutationSpace,
    max_steps: usize,
    rng: &mut R,
) -> Result<SequenceOutcome> {
    let mut out = SequenceOutcome::default();
    let mut local = state.clone();
    let mut current = seed.clone();
    for _ in 0..max_steps {
        let region = rng.gen_range(0..space.regions());
        let operator = OperatorKind::ALL[rng.gen_range(0..OperatorKind::COUNT)];
        let level = rng.gen_range(0..space.levels());
        let mut next = current.clone();
        space.apply_in_place(&mut next, region, MutationOp::new(operator, level))?;
        if !space.admits(seed, &next)? || next == current {
            break;
        }
        let trace = model.forward(&next)?;
        out.forwards += 1;
        let cells = profile.cells(&trace.values);
        let gain = local.update_cells(&cells);
        if next != *seed {
            out.mutants.push(Mutant {
                image: next.clone(),
                trace,
                cells,
                gain,
            });
        }
        if gain.is_empty() {
            break;
        }
        current = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::profile;
    use crate::mutation::{ConstraintParams, LevelTables, RegionGrid};
    use crate::nn::{generate_fixture_model, FixtureArch};
    use crate::tensor::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Model, NeuronProfile, Vec<Tensor>) {
        let model = generate_fixture_model(FixtureArch::MiniLenet, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let images: Vec<Tensor> = (0..8)
            .map(|_| {
                let data = (0..784).map(|_| rng.gen_range(0..=255) as f32).collect();
                Tensor::new(Shape::new([28, 28, 1]), data).unwrap()
            })
            .collect();
        let p = profile(&model, &images, 10).unwrap();
        (model, p, images)
    }

    fn space(tables: LevelTables) -> MutationSpace {
        MutationSpace::new(
            RegionGrid::default_for(28, 28).unwrap(),
            tables,
            ConstraintParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn identity_pool_yields_nothing() {
        let (model, p, images) = setup();
        let state = CoverageState::for_profile(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = mutate_sequence(
            &images[0],
            &model,
            &p,
            &state,
            &space(LevelTables::identity(5)),
            10,
            &mut rng,
        )
        .unwrap();
        assert!(out.mutants.is_empty());
        assert_eq!(out.forwards, 0);
    }

    #[test]
    fn single_step_brightness() {
        let (model, p, images) = setup();
        let state = CoverageState::for_profile(&p);
        let tables = LevelTables {
            brightness: vec![20.0],
            blur: vec![1],
            contrast: vec![1.0],
        };
        // Only brightness changes anything; find a draw that picks it.
        let s = space(tables);
        let mut found = false;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = mutate_sequence(&images[1], &model, &p, &state, &s, 1, &mut rng).unwrap();
            assert!(out.mutants.len() <= 1);
            if let Some(m) = out.mutants.first() {
                assert!(!m.gain.is_empty());
                found = true;
            }
        }
        assert!(found);
    }

    #[test]
    fn walk_is_deterministic_and_constrained() {
        let (model, p, images) = setup();
        let state = CoverageState::for_profile(&p);
        let s = space(LevelTables::default());
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            mutate_sequence(&images[2], &model, &p, &state, &s, 6, &mut rng).unwrap()
        };
        for seed in 0..10 {
            let a = run(seed);
            assert_eq!(a, run(seed));
            assert!(a.forwards <= 6 && a.mutants.len() <= a.forwards);
            for m in &a.mutants {
                assert!(s.admits(&images[2], &m.image).unwrap());
                assert_ne!(m.image, images[2]);
                assert_eq!(m.trace, model.forward(&m.image).unwrap());
            }
        }
    }
}
