use std::io::Write;

use fairnb::data::{
    accuracy, cross_validate, fit, fold_assignment, load_csv, load_csv_reader, DataError, Dataset, SchemaConfig,
    SufficientStatistics,
};
use fairnb::model::{DecisionValue, DecisionVariable, Feature, NaiveBayesModel, Schema};
use fairnb::synthetic::{sample_rows, three_feature_example};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(decision: &str, positive: &str, sensitive: &[&str]) -> SchemaConfig {
    SchemaConfig {
        decision_column: decision.into(),
        positive_label: positive.into(),
        sensitive: sensitive.iter().map(|s| s.to_string()).collect(),
        numeric: Default::default(),
        default_bins: 2,
        drop: Vec::new(),
        missing_values: vec![String::new(), "?".into(), "NA".into()],
    }
}

fn write_temp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

#[test]
fn toy_csv_has_three_rows() {
    let file = write_temp("sex,job,hired\nf,yes,1\nm,no,0\nf,no,1\n", ".csv");
    let data = load_csv(file.path(), &config("hired", "1", &["sex"])).unwrap();
    assert_eq!(data.len(), 3);
    assert_eq!(data.schema().feature_count(), 2);
    assert!(data.schema().is_sensitive(0));
    assert_eq!(data.decisions()[1], DecisionValue::Negative);
    assert_eq!(data.provenance.rows_read, 3);
}

#[test]
fn unique_and_duplicate_columns_are_dropped_and_logged() {
    let csv = "name,sex,gender,age,y\nann,f,F,30,1\nbob,m,M,41,0\ncid,m,M,25,1\ndee,f,F,52,0\n";
    let mut cfg = config("y", "1", &["sex"]);
    cfg.numeric.insert("age".into(), 2);
    let data = load_csv_reader(csv.as_bytes(), "inline", &cfg).unwrap();
    let names: Vec<&str> = data.schema().features().iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["sex", "age"]);
    let log = data.provenance.log.join("\n");
    assert!(log.contains("all-distinct column `name`"), "{log}");
    assert!(log.contains("`gender` (duplicate of `sex`)"), "{log}");
    // Equal-frequency binning splits the four ages two and two.
    let age: Vec<usize> = data.rows().iter().map(|r| r[1]).collect();
    assert_eq!(age.iter().filter(|&&v| v == 0).count(), 2);
}

#[test]
fn rows_with_missing_cells_are_counted() {
    let csv = "a,b,y\n1,x,1\n?,x,0\n2,,1\n1,z,0\n2,z,1\n";
    let data = load_csv_reader(csv.as_bytes(), "inline", &config("y", "1", &[])).unwrap();
    assert_eq!(data.len(), 3);
    assert_eq!(data.provenance.rows_dropped_missing, 2);
    assert!(data.provenance.log[0].contains("dropped 2 rows"));
}

#[test]
fn ingestion_errors_are_descriptive() {
    let csv = "a,b,y\n1,x,1\n2,z,0\n";
    let err = load_csv_reader(csv.as_bytes(), "inline", &config("label", "1", &[])).unwrap_err();
    assert!(matches!(err, DataError::UnknownColumn(ref c) if c == "label"));

    let err = load_csv_reader(csv.as_bytes(), "inline", &config("y", "1", &["race"])).unwrap_err();
    assert!(matches!(err, DataError::UnknownColumn(_)));

    let mut cfg = config("y", "1", &[]);
    cfg.numeric.insert("b".into(), 2);
    let err = load_csv_reader(csv.as_bytes(), "inline", &cfg).unwrap_err();
    assert!(matches!(err, DataError::Unparseable { ref column, row: 0, .. } if column == "b"));
    assert!(err.to_string().contains("`x`"));

    let err = load_csv_reader("a,y\n?,1\nNA,0\n".as_bytes(), "inline", &config("y", "1", &[])).unwrap_err();
    assert!(matches!(err, DataError::Empty(_)));

    let err = load_csv("/nonexistent/file.csv", &config("y", "1", &[])).unwrap_err();
    assert!(matches!(err, DataError::Io { .. }));
}

#[test]
fn configs_load_from_json_and_toml() {
    let json = write_temp(r#"{"decision_column": "y", "positive_label": "1", "sensitive": ["a"]}"#, ".json");
    let toml = write_temp("decision_column = \"y\"\npositive_label = \"1\"\nsensitive = [\"a\"]\n", ".toml");
    let a = SchemaConfig::from_path(json.path()).unwrap();
    let b = SchemaConfig::from_path(toml.path()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.default_bins, 2);
    let bad = write_temp(r#"{"decision_column": "y", "positive_label": "1", "colour": 3}"#, ".json");
    assert!(matches!(SchemaConfig::from_path(bad.path()), Err(DataError::Config(_))));
}

#[test]
fn ingestion_is_deterministic() {
    let rows = sample_rows(&mut ChaCha8Rng::seed_from_u64(9), &three_feature_example(), 400);
    let mut csv = String::from("X,Y1,Y2,D\n");
    for (values, d) in &rows {
        let label = |f: usize| three_feature_example().schema().feature(f).values[values[f]].clone();
        let dl = if *d == DecisionValue::Positive { "d" } else { "~d" };
        csv.push_str(&format!("{},{},{},{dl}\n", label(0), label(1), label(2)));
    }
    let cfg = config("D", "d", &["X"]);
    let first = write_temp(&csv, ".csv");
    let second = write_temp(&csv, ".csv");
    let a = load_csv(first.path(), &cfg).unwrap();
    let b = load_csv(second.path(), &cfg).unwrap();
    assert_eq!(a.fingerprint(), b.fingerprint());
    assert_eq!(a.fingerprint().len(), 64);
    assert_ne!(a.provenance.source, b.provenance.source);
    let c = load_csv_reader(csv.replacen("\n", "\n~x,y1,y2,d\n", 1).as_bytes(), "x", &cfg).unwrap();
    assert_ne!(a.fingerprint(), c.fingerprint());
    // The same data built directly hashes the same as the parsed file.
    let direct = Dataset::from_samples(three_feature_example().schema().clone(), rows).unwrap();
    assert_eq!(direct.fingerprint(), a.fingerprint());
}

#[test]
fn laplace_smoothing_of_zero_counts() {
    let schema = Schema::new(
        DecisionVariable {
            name: "D".into(),
            positive: "1".into(),
            negative: "0".into(),
        },
        vec![Feature::new("A", &["a", "b"], false)],
    )
    .unwrap();
    let mut counts = SufficientStatistics::zeros(&schema);
    counts.decision = [4.0, 4.0];
    counts.features[0] = vec![[0.0, 2.0], [4.0, 2.0]];
    let m = fit(&schema, &counts, 1.0).unwrap();
    assert!((m.cpts()[0].positive[0] - 1.0 / 6.0).abs() < 1e-15);
    assert!((m.cpts()[0].positive[1] - 5.0 / 6.0).abs() < 1e-15);
    assert!(matches!(fit(&schema, &counts, 0.0), Err(DataError::MustSmooth(_))));
}

#[test]
fn large_sample_recovers_the_generating_network() {
    let truth = three_feature_example();
    let rows = sample_rows(&mut ChaCha8Rng::seed_from_u64(2020), &truth, 100_000);
    let data = Dataset::from_samples(truth.schema().clone(), rows).unwrap();
    let m = fit(data.schema(), &data.counts(), 0.0).unwrap();
    assert!((m.prior() - truth.prior()).abs() < 0.01);
    for (got, want) in m.cpts().iter().zip(truth.cpts()) {
        for (a, b) in got.positive.iter().chain(&got.negative).zip(want.positive.iter().chain(&want.negative)) {
            assert!((a - b).abs() < 0.01, "{a} vs {b}");
        }
    }
}

#[test]
fn evidence_blind_model_scores_its_prior() {
    let truth = three_feature_example();
    let schema = truth.schema().clone();
    let blind = NaiveBayesModel::from_tables(schema.clone(), 0.9, vec![(vec![0.5, 0.5], vec![0.5, 0.5]); 3]).unwrap();
    let mut rows = sample_rows(&mut ChaCha8Rng::seed_from_u64(3), &truth, 100);
    for (i, row) in rows.iter_mut().enumerate() {
        row.1 = if i < 90 { DecisionValue::Positive } else { DecisionValue::Negative };
    }
    let data = Dataset::from_samples(schema, rows).unwrap();
    assert!((accuracy(&blind, &data).unwrap() - 0.9).abs() < 1e-15);
}

#[test]
fn folds_larger_than_the_dataset_are_rejected() {
    let d = vec![DecisionValue::Positive; 3];
    assert!(matches!(fold_assignment(&d, 4, 1), Err(DataError::InvalidFolds { folds: 4, rows: 3 })));
    assert!(matches!(fold_assignment(&d, 1, 1), Err(DataError::InvalidFolds { .. })));
}

fn arbitrary_rows() -> impl Strategy<Value = (Vec<usize>, Vec<(Vec<usize>, bool)>)> {
    prop::collection::vec(2usize..5, 1..5).prop_flat_map(|cards| {
        let row = (cards.iter().map(|&k| 0..k).collect::<Vec<_>>(), any::<bool>());
        (Just(cards), prop::collection::vec(row, 0..60))
    })
}

proptest! {
    #[test]
    fn fitted_columns_sum_to_one((cards, rows) in arbitrary_rows(), alpha in 0.01f64..5.0) {
        let features = cards
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let values: Vec<String> = (0..k).map(|v| format!("v{v}")).collect();
                let refs: Vec<&str> = values.iter().map(String::as_str).collect();
                Feature::new(format!("F{i}"), &refs, i == 0)
            })
            .collect();
        let schema = Schema::new(
            DecisionVariable { name: "D".into(), positive: "+".into(), negative: "-".into() },
            features,
        ).unwrap();
        let mut counts = SufficientStatistics::zeros(&schema);
        for (values, positive) in &rows {
            let d = if *positive { DecisionValue::Positive } else { DecisionValue::Negative };
            counts.add_row(values, d);
        }
        let m = fit(&schema, &counts, alpha).unwrap();
        for cpt in m.cpts() {
            prop_assert!((cpt.positive.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((cpt.negative.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_validation_folds_are_balanced(n in 10usize..300, folds in 2usize..10, seed in 0u64..1000) {
        let truth = three_feature_example();
        let rows = sample_rows(&mut ChaCha8Rng::seed_from_u64(seed), &truth, n);
        let data = Dataset::from_samples(truth.schema().clone(), rows).unwrap();
        let cv = cross_validate(&data, folds, seed, |train: &Dataset| fit(train.schema(), &train.counts(), 1.0)).unwrap();
        let lo = *cv.fold_sizes.iter().min().unwrap();
        let hi = *cv.fold_sizes.iter().max().unwrap();
        prop_assert!(hi - lo <= 1);
        prop_assert_eq!(cv.fold_sizes.iter().sum::<usize>(), n);
        prop_assert_eq!(cv.seed, seed);
        for a in &cv.accuracies {
            prop_assert!((0.0..=1.0).contains(a));
        }
    }
}
