mod common;

use fairnb::data::{fit, Dataset};
use fairnb::learner::{
    build_program, compile_constraint, independent_baseline, learn_fair, LearnOptions, ParamIndex,
};
use fairnb::miner::{brute_force_patterns, Ranking, DEFAULT_BRUTE_FORCE_CAP};
use fairnb::model::{Assignment, DecisionValue, Feature, NaiveBayesModel, Schema};
use fairnb::spsolver::{solve, SolveStatus, SolverOptions};
use fairnb::synthetic::{random_model, sample_rows, three_feature_example, RandomModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pattern<R: Rng>(rng: &mut R, m: &NaiveBayesModel) -> Option<(Assignment, Assignment)> {
    let roles = common::random_prefix(rng, m);
    let (x, y, _) = common::split_roles(&roles);
    (!x.is_empty()).then_some((x, y))
}

#[test]
fn compiled_constraints_hold_iff_pattern_is_fair() {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let mut checked = 0;
    let mut violated = 0;
    while checked < 1000 {
        let spec = RandomModelSpec::random(&mut rng, 5, 3);
        let m = random_model(&mut rng, &spec);
        let Some((x, y)) = random_pattern(&mut rng, &m) else {
            continue;
        };
        let d = common::delta(&m, x.bindings(), y.bindings());
        let delta: f64 = rng.gen_range(0.001..0.5);
        if (d.abs() - delta).abs() < 1e-9 {
            continue;
        }
        checked += 1;
        let c = compile_constraint(m.schema(), &x, &y, delta).unwrap();
        let values = ParamIndex::new(m.schema()).values_of(&m);
        let holds = c.holds(&values).unwrap();
        assert_eq!(holds, d.abs() <= delta, "Δ = {d}, δ = {delta}");
        // Each inequality guards one side.
        let (lower, upper) = c.residuals(&values).unwrap();
        assert_eq!(lower <= 0.0, d >= -delta);
        assert_eq!(upper <= 0.0, d <= delta);
        violated += usize::from(!holds);
    }
    assert!(violated > 50 && violated < 950, "both outcomes are exercised");
}

#[test]
fn constraint_examples_on_the_three_feature_network() {
    let m = three_feature_example();
    let s = m.schema();
    let values = ParamIndex::new(s).values_of(&m);
    let x_bar = s.assignment(&[("X", "~x")]).unwrap();
    let y1 = s.assignment(&[("Y1", "y1")]).unwrap();
    let y1_y2bar = s.assignment(&[("Y1", "y1"), ("Y2", "~y2")]).unwrap();
    assert!(!compile_constraint(s, &x_bar, &y1, 0.1).unwrap().holds(&values).unwrap());
    assert!(compile_constraint(s, &x_bar, &y1_y2bar, 0.2).unwrap().holds(&values).unwrap());

    // Identical conditionals for x give Δ = 0 under any threshold.
    let flat = NaiveBayesModel::from_tables(
        s.clone(),
        0.3,
        vec![
            (vec![0.6, 0.4], vec![0.6, 0.4]),
            (vec![0.7, 0.3], vec![0.1, 0.9]),
            (vec![0.8, 0.2], vec![0.3, 0.7]),
        ],
    )
    .unwrap();
    let fv = ParamIndex::new(s).values_of(&flat);
    for delta in [1e-4, 0.01, 0.5, 0.99] {
        let x = s.assignment(&[("X", "x")]).unwrap();
        assert!(compile_constraint(s, &x, &Assignment::empty(), delta).unwrap().holds(&fv).unwrap());
        assert!(compile_constraint(s, &x, &y1, delta).unwrap().holds(&fv).unwrap());
    }
}

fn dataset_from(model: &NaiveBayesModel, n: usize, seed: u64) -> Dataset {
    let rows = sample_rows(&mut ChaCha8Rng::seed_from_u64(seed), model, n);
    Dataset::from_samples(model.schema().clone(), rows).unwrap()
}

#[test]
fn unconstrained_program_recovers_relative_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(302);
    for seed in 0..5 {
        let spec = RandomModelSpec::random(&mut rng, 5, 4);
        let m = random_model(&mut rng, &spec);
        let data = dataset_from(&m, 800, seed);
        let counts = data.counts().smoothed(1.0);
        let program = build_program(data.schema(), &counts, &[]).unwrap();
        let index = ParamIndex::new(data.schema());
        let start = vec![0.5; index.len()];
        let sol = solve(&program, &start, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        let expected = index.values_of(&fit(data.schema(), &data.counts(), 1.0).unwrap());
        for (got, want) in sol.values.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }
}

#[test]
fn inactive_constraint_leaves_the_solution_unchanged() {
    let m = three_feature_example();
    let data = dataset_from(&m, 3000, 7);
    let counts = data.counts().smoothed(1.0);
    let ml = fit(data.schema(), &data.counts(), 1.0).unwrap();
    let index = ParamIndex::new(data.schema());
    let s = data.schema();
    let x = s.assignment(&[("X", "x")]).unwrap();
    let d = ml.discrimination_score(&x, &Assignment::empty()).unwrap();
    let c = compile_constraint(s, &x, &Assignment::empty(), d.abs() + 0.05).unwrap();
    let program = build_program(s, &counts, &[c]).unwrap();
    let init = index.values_of(&ml);
    let sol = solve(&program, &init, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Converged);
    for (got, want) in sol.values.iter().zip(&init) {
        assert!((got - want).abs() < 1e-5);
    }
    // A perturbed start lands on the same point.
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let perturbed: Vec<f64> = init.iter().map(|v| v * (1.0 + rng.gen_range(-1e-3..1e-3))).collect();
    let again = solve(&program, &perturbed, &SolverOptions::default()).unwrap();
    for (a, b) in again.values.iter().zip(&sol.values) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn all_binary_schema_with_seven_features_has_thirty_parameters() {
    let spec = RandomModelSpec::binary(4, 3);
    let schema = spec.schema();
    assert_eq!(ParamIndex::new(&schema).len(), 30);
    let m = random_model(&mut ChaCha8Rng::seed_from_u64(1), &spec);
    let counts = dataset_from(&m, 500, 1).counts().smoothed(1.0);
    let program = build_program(&schema, &counts, &[]).unwrap();
    assert_eq!(program.variables.len(), 30);
    assert_eq!(program.inequalities.len(), 2 * (1 + 2 * 7));
}

#[test]
fn zero_counts_must_be_smoothed() {
    let m = three_feature_example();
    let data = dataset_from(&m, 5, 1);
    let counts = data.counts();
    if counts.first_zero(data.schema()).is_some() {
        assert!(build_program(data.schema(), &counts, &[]).is_err());
    }
    assert!(build_program(data.schema(), &counts.smoothed(1.0), &[]).is_ok());
}

fn discriminating(model: &NaiveBayesModel, delta: f64) -> usize {
    brute_force_patterns(model, delta, DEFAULT_BRUTE_FORCE_CAP)
        .unwrap()
        .iter()
        .filter(|p| p.is_discriminating(delta))
        .count()
}

#[test]
fn fair_learning_on_the_three_feature_network() {
    let m = three_feature_example();
    let data = dataset_from(&m, 5000, 2024);
    let mut options = LearnOptions::new(0.15, 1, Ranking::Discrimination);
    options.track_remaining = true;
    let report = learn_fair(&data, &options).unwrap();
    assert!(report.fair);
    assert_eq!(discriminating(&report.model, 0.15), 0);
    assert!(report.constraints_added <= report.iterations);
    assert_eq!(report.added_trace.iter().sum::<usize>(), report.constraints_added);
    let remaining = report.remaining_patterns_trace.as_ref().unwrap();
    assert_eq!(*remaining.last().unwrap(), 0);

    let counts = data.counts();
    let ml = fit(data.schema(), &counts, 1.0).unwrap();
    let indep = independent_baseline(data.schema(), &counts, 1.0).unwrap();
    let ll_fair = report.model.log_likelihood(&counts).unwrap();
    let ll_ml = ml.log_likelihood(&counts).unwrap();
    let ll_indep = indep.log_likelihood(&counts).unwrap();
    assert!(ll_indep <= ll_fair, "{ll_indep} > {ll_fair}");
    assert!(ll_fair <= ll_ml + 1e-6, "{ll_fair} > {ll_ml}");

    // Each constraint keeps holding once it has been added.
    let index = ParamIndex::new(data.schema());
    let values = index.values_of(&report.model);
    for doc in &report.constraints {
        let named = |map: &std::collections::BTreeMap<String, String>| {
            let pairs: Vec<(&str, &str)> = map.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
            data.schema().assignment(&pairs).unwrap()
        };
        let c = compile_constraint(data.schema(), &named(&doc.x), &named(&doc.y), 0.15).unwrap();
        let (l, u) = c.residuals(&values).unwrap();
        assert!(l <= 1e-6 && u <= 1e-6);
    }
}

#[test]
fn already_fair_data_needs_no_constraints() {
    let m = three_feature_example();
    let data = dataset_from(&m, 2000, 5);
    let report = learn_fair(&data, &LearnOptions::new(0.6, 3, Ranking::Divergence)).unwrap();
    assert!(report.fair);
    assert_eq!(report.iterations, 1);
    assert_eq!(report.constraints_added, 0);
    let ml = fit(data.schema(), &data.counts(), 1.0).unwrap();
    let index = ParamIndex::new(data.schema());
    for (a, b) in index.values_of(&report.model).iter().zip(index.values_of(&ml)) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn divergence_ranked_learning_with_several_constraints_per_round() {
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    let spec = RandomModelSpec {
        cardinalities: vec![2, 3, 2, 2],
        sensitive: vec![true, true, false, false],
        min_param: 0.05,
    };
    let m = random_model(&mut rng, &spec);
    let data = dataset_from(&m, 3000, 9);
    let delta = 0.05;
    let report = learn_fair(&data, &LearnOptions::new(delta, 3, Ranking::Divergence)).unwrap();
    assert_eq!(report.fair, discriminating(&report.model, delta) == 0);
    assert!(report.fair);
    assert!(report.constraints_added <= 3 * report.iterations);
}

#[test]
fn independent_baseline_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(305);
    for seed in 0..10 {
        let spec = RandomModelSpec::random(&mut rng, 4, 3);
        let m = random_model(&mut rng, &spec);
        let data = dataset_from(&m, 400, seed);
        let counts = data.counts();
        let base = independent_baseline(data.schema(), &counts, 1.0).unwrap();
        for f in data.schema().sensitive_indices() {
            for v in 0..data.schema().cardinality(f) {
                let d = base.discrimination_score(&Assignment::single(f, v), &Assignment::empty()).unwrap();
                assert!(d.abs() < 1e-12);
            }
        }
        let ml = fit(data.schema(), &counts, 1.0).unwrap();
        assert!(base.log_likelihood(&counts).unwrap() <= ml.log_likelihood(&counts).unwrap() + 1e-9);
    }
    // With every feature sensitive the baseline has no patterns at all.
    let schema = Schema::new(
        three_feature_example().schema().decision().clone(),
        vec![Feature::new("A", &["a", "b"], true), Feature::new("B", &["p", "q", "r"], true)],
    )
    .unwrap();
    let m = random_model(
        &mut rng,
        &RandomModelSpec {
            cardinalities: vec![2, 3],
            sensitive: vec![true, true],
            min_param: 0.05,
        },
    );
    let data = Dataset::from_samples(schema.clone(), sample_rows(&mut rng, &m, 300)).unwrap();
    let base = independent_baseline(&schema, &data.counts(), 1.0).unwrap();
    assert_eq!(discriminating(&base, 1e-9), 0);
    let _ = DecisionValue::Positive;
}
