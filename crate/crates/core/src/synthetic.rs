//! Reference networks, random model generation and sampling.
//!
//! Used by the test suites and by the CLI to produce reproducible synthetic
//! workloads.

use rand::Rng;

use crate::model::{DecisionValue, DecisionVariable, Feature, NaiveBayesModel, Schema};

fn binary_decision(name: &str) -> DecisionVariable {
    DecisionVariable {
        name: name.to_string(),
        positive: "d".to_string(),
        negative: "~d".to_string(),
    }
}

/// The three-feature loan example: one sensitive attribute `X` and two
/// non-sensitive attributes `Y1`, `Y2`, all binary, with `P(d) = 0.2`.
///
/// Value 0 of each feature is the positive literal (`x`, `y1`, `y2`), value 1
/// its negation (`~x`, ...).
pub fn three_feature_example() -> NaiveBayesModel {
    let schema = Schema::new(
        binary_decision("D"),
        vec![
            Feature::new("X", &["x", "~x"], true),
            Feature::new("Y1", &["y1", "~y1"], false),
            Feature::new("Y2", &["y2", "~y2"], false),
        ],
    )
    .expect("static schema");
    NaiveBayesModel::from_tables(
        schema,
        0.2,
        vec![
            (vec![0.8, 0.2], vec![0.5, 0.5]),
            (vec![0.7, 0.3], vec![0.1, 0.9]),
            (vec![0.8, 0.2], vec![0.3, 0.7]),
        ],
    )
    .expect("static parameters")
}

/// Shape of a randomly generated model.
#[derive(Debug, Clone)]
pub struct RandomModelSpec {
    /// Cardinality of each feature.
    pub cardinalities: Vec<usize>,
    /// Whether each feature is sensitive.
    pub sensitive: Vec<bool>,
    /// Smallest parameter value that may be drawn; keeps models strictly interior.
    pub min_param: f64,
}

impl RandomModelSpec {
    pub fn binary(sensitive: usize, other: usize) -> Self {
        RandomModelSpec {
            cardinalities: vec![2; sensitive + other],
            sensitive: (0..sensitive + other).map(|i| i < sensitive).collect(),
            min_param: 0.01,
        }
    }

    /// Between 1 and `max_features` features of arity 2..=`max_arity`, at least
    /// one of them sensitive.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_features: usize, max_arity: usize) -> Self {
        let n = rng.gen_range(1..=max_features);
        let cardinalities = (0..n).map(|_| rng.gen_range(2..=max_arity)).collect();
        let mut sensitive: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        if !sensitive.iter().any(|&s| s) {
            let i = rng.gen_range(0..n);
            sensitive[i] = true;
        }
        RandomModelSpec {
            cardinalities,
            sensitive,
            min_param: 0.01,
        }
    }

    pub fn schema(&self) -> Schema {
        let features = self
            .cardinalities
            .iter()
            .zip(&self.sensitive)
            .enumerate()
            .map(|(i, (&k, &s))| Feature {
                name: format!("{}{i}", if s { "S" } else { "Z" }),
                values: (0..k).map(|v| format!("v{v}")).collect(),
                sensitive: s,
            })
            .collect();
        Schema::new(binary_decision("D"), features).expect("generated schema is valid")
    }
}

fn random_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize, min_param: f64) -> Vec<f64> {
    // Exponential spacings give a uniform draw on the simplex; mixing with the
    // uniform vector keeps every entry at least `min_param`.
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = raw.iter().sum();
    let floor = min_param.min(0.5 / k as f64);
    let scale = 1.0 - floor * k as f64;
    let mut p: Vec<f64> = raw.iter().map(|r| floor + scale * r / sum).collect();
    let total: f64 = p.iter().sum();
    for x in &mut p {
        *x /= total;
    }
    p
}

/// Draws a model with the given shape; parameters are uniform on each simplex
/// (floored at `spec.min_param`).
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, spec: &RandomModelSpec) -> NaiveBayesModel {
    let schema = spec.schema();
    let floor = spec.min_param.min(0.25);
    let prior = floor + (1.0 - 2.0 * floor) * rng.gen::<f64>();
    let tables = spec
        .cardinalities
        .iter()
        .map(|&k| {
            (
                random_simplex(rng, k, spec.min_param),
                random_simplex(rng, k, spec.min_param),
            )
        })
        .collect();
    NaiveBayesModel::from_tables(schema, prior, tables).expect("generated parameters are valid")
}

fn draw_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Ancestral sampling of complete rows: `(feature values, decision)`.
pub fn sample_rows<R: Rng + ?Sized>(
    rng: &mut R,
    model: &NaiveBayesModel,
    n: usize,
) -> Vec<(Vec<usize>, DecisionValue)> {
    (0..n)
        .map(|_| {
            let d = if rng.gen::<f64>() < model.prior() {
                DecisionValue::Positive
            } else {
                DecisionValue::Negative
            };
            let values = model
                .cpts()
                .iter()
                .map(|cpt| draw_categorical(rng, cpt.given(d)))
                .collect();
            (values, d)
        })
        .collect()
}
