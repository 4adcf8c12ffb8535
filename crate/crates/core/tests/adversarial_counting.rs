mod common;

use common::{flat_image, mean_threshold_model, ref_admits};
use nnfuzz_core::campaign::count_adversarial;
use nnfuzz_core::coverage::{profile, CoverageState};
use nnfuzz_core::mutation::{
    apply, ConstraintParams, LevelTables, MutationSpace, OperatorKind, RegionGrid,
};
use nnfuzz_core::search::{BatchSearch, BatchSeed, SearchKind, SearchParams};
use nnfuzz_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const THRESHOLD: f64 = 128.0;
/// Closest an analytic mean may come to the threshold before f32
/// accumulation in the model could tip the label.
const MARGIN: f64 = 0.05;

fn analytic_label(mean: f64) -> usize {
    usize::from(mean > THRESHOLD)
}

fn mean(t: &Tensor) -> f64 {
    t.data().iter().map(|&v| v as f64).sum::<f64>() / t.len() as f64
}

#[test]
fn count_matches_the_analytic_flip_count() {
    let model = mean_threshold_model(28, 28, THRESHOLD as f32);
    let space = MutationSpace::new(
        RegionGrid::default_for(28, 28).unwrap(),
        LevelTables::default(),
        ConstraintParams::default(),
    )
    .unwrap();
    let tables = &space.tables;

    let (mut sources, mut mutants) = (Vec::new(), Vec::new());
    let mut expected = 0u64;
    for v in [
        96.0f32, 110.0, 117.0, 122.0, 125.0, 131.0, 134.0, 139.0, 150.0, 165.0,
    ] {
        let seed = flat_image(28, 28, v);
        let seed_label = model.forward(&seed).unwrap().predicted_label;
        assert_eq!(seed_label, analytic_label(v as f64));
        for region in 0..space.regions() {
            let area = space.grid.region(region).area() as f64;
            for op_index in 0..space.op_count() {
                let op = space.op(op_index);
                let level = op.level;
                // Every pixel of the region moves to the same new value.
                let new = match op.operator {
                    OperatorKind::Brightness => (v + tables.brightness[level]).clamp(0.0, 255.0),
                    OperatorKind::Contrast => {
                        (127.5 + (v - 127.5) * tables.contrast[level]).clamp(0.0, 255.0)
                    }
                    // A box blur leaves a flat image unchanged.
                    OperatorKind::Blur => v,
                };
                if new == v {
                    continue;
                }
                let mutated = apply(&seed, space.grid.region(region), op, tables).unwrap();
                let diff = (new - v).abs() as f64;
                let l0 = area as usize;
                // Regions cover well over 2% of the image, so the change
                // must stay below 51 grey levels.
                assert!(l0 as f64 >= 0.02 * 784.0);
                if diff >= 0.2 * 255.0 {
                    assert!(!space.admits(&seed, &mutated).unwrap());
                    continue;
                }
                assert!(space.admits(&seed, &mutated).unwrap());
                let m = v as f64 + area * (new - v) as f64 / 784.0;
                assert!(
                    (m - THRESHOLD).abs() > MARGIN,
                    "v {v} region {region} op {op:?}"
                );
                expected += u64::from(analytic_label(m) != seed_label);
                sources.push(seed_label);
                mutants.push(model.forward(&mutated).unwrap().predicted_label);
            }
        }
    }
    assert!(expected > 0 && (expected as usize) < mutants.len());
    let (count, pct) = count_adversarial(&sources, &mutants).unwrap();
    assert_eq!(count, expected);
    assert!((pct - expected as f64 / mutants.len() as f64 * 100.0).abs() < 1e-12);
}

#[test]
fn searched_adversarial_mutants_are_real_and_admissible() {
    let model = mean_threshold_model(28, 28, THRESHOLD as f32);
    let space = MutationSpace::new(
        RegionGrid::default_for(28, 28).unwrap(),
        LevelTables::default(),
        ConstraintParams::default(),
    )
    .unwrap();
    let levels: Vec<f32> = (0..16).map(|i| 104.0 + 3.0 * i as f32).collect();
    let prof_imgs: Vec<Tensor> = [60.0, 200.0]
        .iter()
        .map(|&v| flat_image(28, 28, v))
        .collect();
    let prof = profile(&model, &prof_imgs, 10).unwrap();
    let seeds: Vec<BatchSeed> = levels
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let image = flat_image(28, 28, v);
            let label = model.forward(&image).unwrap().predicted_label;
            BatchSeed {
                id: i,
                image,
                label,
            }
        })
        .collect();
    let params = SearchParams {
        population: 6,
        archive: 6,
        iterations: 4,
        ..SearchParams::default()
    };

    let mut total_adversarial = 0;
    for kind in [
        SearchKind::Spea2Mcts,
        SearchKind::RandomMutation,
        SearchKind::Nsga3,
    ] {
        let mut global = CoverageState::for_profile(&prof);
        let mut search =
            BatchSearch::new(&model, &prof, &space, &seeds, &params, &mut global, 2000);
        search.run(kind, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let commits = &search.commits;
        let adversarial: Vec<_> = commits.accepted.iter().filter(|m| m.adversarial).collect();
        assert_eq!(adversarial.len() as u64, commits.adversarial, "{kind}");
        let (mut src, mut got) = (Vec::new(), Vec::new());
        for m in &commits.accepted {
            let seed = &seeds[m.source];
            assert!(
                ref_admits(seed.image.data(), m.image.data(), 0.02, 0.2),
                "{kind}: committed mutant breaks the constraint"
            );
            let mu = mean(&m.image);
            if (mu - THRESHOLD).abs() <= MARGIN {
                // Too close to call analytically; trust the model here.
                got.push(m.label);
            } else {
                assert_eq!(m.label, analytic_label(mu), "{kind}");
                got.push(analytic_label(mu));
            }
            src.push(seed.label);
            assert_eq!(m.adversarial, m.label != seed.label);
        }
        let (count, _) = count_adversarial(&src, &got).unwrap();
        assert_eq!(count, commits.adversarial, "{kind}");
        total_adversarial += count;
    }
    assert!(total_adversarial > 0, "no label flips were found at all");
}
