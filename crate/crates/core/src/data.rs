//! Dataset ingestion, discretisation, sufficient statistics and evaluation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    Assignment, Cpt, DecisionValue, DecisionVariable, Feature, ModelError, NaiveBayesModel, Schema,
};

/// Seed used for fold assignment when none is given.
pub const DEFAULT_CV_SEED: u64 = 2020;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid schema config: {0}")]
    Config(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{column}`, row {row}: cannot parse `{value}` as a number")]
    Unparseable {
        column: String,
        row: usize,
        value: String,
    },
    #[error("dataset is empty after preprocessing: {0}")]
    Empty(String),
    #[error("zero count for {0}; use a positive smoothing pseudo-count")]
    MustSmooth(String),
    #[error("invalid fold count {folds} for {rows} rows")]
    InvalidFolds { folds: usize, rows: usize },
    #[error("invalid row: {0}")]
    InvalidRow(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Counts `n_i` for every parameter of a naive Bayes model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStatistics {
    /// `[n_d, n_d̄]`
    pub decision: [f64; 2],
    /// `features[f][v] = [n_{v,d}, n_{v,d̄}]`
    pub features: Vec<Vec<[f64; 2]>>,
}

impl SufficientStatistics {
    pub fn zeros(schema: &Schema) -> Self {
        SufficientStatistics {
            decision: [0.0; 2],
            features: schema
                .features()
                .iter()
                .map(|f| vec![[0.0; 2]; f.cardinality()])
                .collect(),
        }
    }

    /// Adds one complete example. `values` follows the schema's feature order.
    pub fn add_row(&mut self, values: &[usize], decision: DecisionValue) {
        let c = decision.index();
        self.decision[c] += 1.0;
        for (f, &v) in values.iter().enumerate() {
            self.features[f][v][c] += 1.0;
        }
    }

    /// `N = n_d + n_d̄`.
    pub fn total(&self) -> f64 {
        self.decision[0] + self.decision[1]
    }

    /// Counts with `alpha` added to every cell.
    pub fn smoothed(&self, alpha: f64) -> Self {
        let mut s = self.clone();
        for c in 0..2 {
            s.decision[c] += alpha;
        }
        for per_value in &mut s.features {
            for pair in per_value.iter_mut() {
                pair[0] += alpha;
                pair[1] += alpha;
            }
        }
        s
    }

    /// First parameter whose count is zero, described for error messages.
    pub fn first_zero(&self, schema: &Schema) -> Option<String> {
        let names = [&schema.decision().positive, &schema.decision().negative];
        for dv in DecisionValue::BOTH {
            if self.decision[dv.index()] <= 0.0 {
                return Some(format!("{} = {}", schema.decision().name, names[dv.index()]));
            }
        }
        for (f, per_value) in self.features.iter().enumerate() {
            for (v, pair) in per_value.iter().enumerate() {
                for dv in DecisionValue::BOTH {
                    if pair[dv.index()] <= 0.0 {
                        let feature = schema.feature(f);
                        return Some(format!(
                            "{}={} with {}={}",
                            feature.name,
                            feature.values[v],
                            schema.decision().name,
                            names[dv.index()]
                        ));
                    }
                }
            }
        }
        None
    }

    fn check_shape(&self, schema: &Schema) -> Result<(), DataError> {
        let ok = self.features.len() == schema.feature_count()
            && self
                .features
                .iter()
                .enumerate()
                .all(|(f, pv)| pv.len() == schema.cardinality(f));
        if !ok {
            return Err(ModelError::Dimension("statistics do not match the schema".into()).into());
        }
        Ok(())
    }
}

/// Maximum-likelihood parameters with Laplace pseudo-count `alpha`:
/// `θ_{z|d} = (n_{z,d} + α) / (n_d + α|dom Z|)`.
pub fn fit(
    schema: &Schema,
    counts: &SufficientStatistics,
    alpha: f64,
) -> Result<NaiveBayesModel, DataError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(DataError::Config(format!("smoothing pseudo-count {alpha} must be >= 0")));
    }
    counts.check_shape(schema)?;
    if alpha == 0.0 {
        if let Some(what) = counts.first_zero(schema) {
            return Err(DataError::MustSmooth(what));
        }
    }
    let prior = (counts.decision[0] + alpha) / (counts.total() + 2.0 * alpha);
    let cpts = schema
        .features()
        .iter()
        .zip(&counts.features)
        .map(|(feature, per_value)| {
            let k = per_value.len() as f64;
            let column = |c: usize| -> Vec<f64> {
                let n = counts.decision[c] + alpha * k;
                per_value.iter().map(|pair| (pair[c] + alpha) / n).collect()
            };
            Cpt {
                feature: feature.name.clone(),
                positive: column(0),
                negative: column(1),
            }
        })
        .collect();
    Ok(NaiveBayesModel::new(schema.clone(), prior, cpts)?)
}

/// How a CSV file maps onto a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub decision_column: String,
    /// Raw label that counts as the positive decision.
    pub positive_label: String,
    #[serde(default)]
    pub sensitive: Vec<String>,
    /// Numeric columns to discretise, with their bin count (`0` means the default).
    #[serde(default)]
    pub numeric: BTreeMap<String, usize>,
    /// Bin count used when a numeric column does not specify one.
    #[serde(default = "default_bins")]
    pub default_bins: usize,
    /// Columns to ignore entirely.
    #[serde(default)]
    pub drop: Vec<String>,
    /// Cell values treated as missing; rows containing one are dropped.
    #[serde(default = "default_missing")]
    pub missing_values: Vec<String>,
}

fn default_bins() -> usize {
    2
}

fn default_missing() -> Vec<String> {
    vec![String::new(), "?".into(), "NA".into()]
}

impl SchemaConfig {
    /// Reads a JSON or TOML config, chosen by file extension (`.toml` is TOML,
    /// anything else JSON).
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| DataError::Config(e.to_string()))
        } else {
            serde_json::from_str(&text).map_err(|e| DataError::Config(e.to_string()))
        }
    }
}

/// Where a dataset came from and what preprocessing did to it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub rows_read: usize,
    pub rows_dropped_missing: usize,
    pub log: Vec<String>,
}

/// Fully observed discrete examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<usize>>,
    decisions: Vec<DecisionValue>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        schema: Schema,
        rows: Vec<Vec<usize>>,
        decisions: Vec<DecisionValue>,
    ) -> Result<Self, DataError> {
        if rows.len() != decisions.len() {
            return Err(DataError::InvalidRow(format!(
                "{} rows but {} decisions",
                rows.len(),
                decisions.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.feature_count() {
                return Err(DataError::InvalidRow(format!(
                    "row {i} has {} values, schema has {} features",
                    row.len(),
                    schema.feature_count()
                )));
            }
            for (f, &v) in row.iter().enumerate() {
                if v >= schema.cardinality(f) {
                    return Err(DataError::InvalidRow(format!(
                        "row {i}: value {v} out of range for `{}`",
                        schema.feature(f).name
                    )));
                }
            }
        }
        Ok(Dataset {
            schema,
            rows,
            decisions,
            provenance: Provenance::default(),
        })
    }

    /// Builds a dataset from `(values, decision)` pairs such as those produced
    /// by [`crate::synthetic::sample_rows`].
    pub fn from_samples(
        schema: Schema,
        samples: Vec<(Vec<usize>, DecisionValue)>,
    ) -> Result<Self, DataError> {
        let (rows, decisions) = samples.into_iter().unzip();
        Dataset::new(schema, rows, decisions)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn decisions(&self) -> &[DecisionValue] {
        &self.decisions
    }

    /// Row `i` as full evidence.
    pub fn evidence(&self, i: usize) -> Assignment {
        self.rows[i].iter().copied().enumerate().collect()
    }

    pub fn counts(&self) -> SufficientStatistics {
        let mut s = SufficientStatistics::zeros(&self.schema);
        for (row, &d) in self.rows.iter().zip(&self.decisions) {
            s.add_row(row, d);
        }
        s
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            decisions: indices.iter().map(|&i| self.decisions[i]).collect(),
            provenance: Provenance {
                source: self.provenance.source.clone(),
                rows_read: indices.len(),
                rows_dropped_missing: 0,
                log: vec![format!("subset of {} rows", indices.len())],
            },
        }
    }

    /// SHA-256 of the schema and contents; independent of the source path.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.schema).expect("schema serializes"));
        for (row, d) in self.rows.iter().zip(&self.decisions) {
            for v in row {
                hasher.update((*v as u64).to_le_bytes());
            }
            hasher.update([d.index() as u8]);
        }
        hex::encode(hasher.finalize())
    }
}

/// Reads and preprocesses a CSV file (header row required).
pub fn load_csv(path: impl AsRef<Path>, config: &SchemaConfig) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_csv_reader(file, &path.display().to_string(), config)
}

/// Equal-frequency cut points for `values` (sorted internally).
fn equal_frequency_cuts(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    // A cut at the minimum would leave the first bin empty, so ties at the
    // bottom move the cut up to the next distinct value.
    let above_min = sorted.iter().copied().find(|&v| v > sorted[0]);
    let mut cuts: Vec<f64> = (1..bins)
        .filter_map(|j| {
            let c = sorted[j * n / bins];
            if c > sorted[0] {
                Some(c)
            } else {
                above_min
            }
        })
        .collect();
    cuts.dedup();
    cuts
}

fn bin_labels(cuts: &[f64]) -> Vec<String> {
    if cuts.is_empty() {
        return vec!["all".to_string()];
    }
    let mut labels = vec![format!("<{}", cuts[0])];
    for w in cuts.windows(2) {
        labels.push(format!("[{},{})", w[0], w[1]));
    }
    labels.push(format!(">={}", cuts[cuts.len() - 1]));
    labels
}

/// Same as [`load_csv`] but reads from any reader; `source` is recorded in
/// the provenance.
pub fn load_csv_reader<R: Read>(
    reader: R,
    source: &str,
    config: &SchemaConfig,
) -> Result<Dataset, DataError> {
    if config.default_bins < 2 {
        return Err(DataError::Config("default_bins must be at least 2".into()));
    }
    let mut csv_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = csv_reader.headers()?.iter().map(str::to_string).collect();
    let position = |name: &str| headers.iter().position(|h| h == name);

    let decision_col = position(&config.decision_column)
        .ok_or_else(|| DataError::UnknownColumn(config.decision_column.clone()))?;
    for name in config
        .sensitive
        .iter()
        .chain(config.numeric.keys())
        .chain(&config.drop)
    {
        if position(name).is_none() {
            return Err(DataError::UnknownColumn(name.clone()));
        }
    }
    if config.drop.contains(&config.decision_column) {
        return Err(DataError::Config("the decision column cannot be dropped".into()));
    }
    if config.sensitive.contains(&config.decision_column) {
        return Err(DataError::Config("the decision column cannot be sensitive".into()));
    }
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != decision_col && !config.drop.contains(&headers[c]))
        .collect();

    let mut provenance = Provenance {
        source: source.to_string(),
        ..Provenance::default()
    };
    let missing: BTreeSet<&str> = config.missing_values.iter().map(String::as_str).collect();
    let mut raw: Vec<Vec<String>> = Vec::new();
    for record in csv_reader.records() {
        let record = record?;
        provenance.rows_read += 1;
        let used = std::iter::once(decision_col).chain(feature_cols.iter().copied());
        if used.clone().any(|c| missing.contains(record.get(c).unwrap_or(""))) {
            provenance.rows_dropped_missing += 1;
            continue;
        }
        raw.push(record.iter().map(str::to_string).collect());
    }
    if provenance.rows_dropped_missing > 0 {
        provenance.log.push(format!(
            "dropped {} rows with missing values",
            provenance.rows_dropped_missing
        ));
    }
    if raw.is_empty() {
        return Err(DataError::Empty(format!("no complete rows in {source}")));
    }
    let n = raw.len();

    // Discretise each candidate feature column into (labels, codes).
    let mut columns: Vec<(String, Vec<String>, Vec<usize>)> = Vec::new();
    for &c in &feature_cols {
        let name = headers[c].clone();
        let (labels, codes) = if let Some(&bins) = config.numeric.get(&name) {
            let bins = if bins == 0 { config.default_bins } else { bins };
            let mut values = Vec::with_capacity(n);
            for (row, r) in raw.iter().enumerate() {
                let v: f64 = r[c].parse().map_err(|_| DataError::Unparseable {
                    column: name.clone(),
                    row,
                    value: r[c].clone(),
                })?;
                if !v.is_finite() {
                    return Err(DataError::Unparseable {
                        column: name.clone(),
                        row,
                        value: r[c].clone(),
                    });
                }
                values.push(v);
            }
            let cuts = equal_frequency_cuts(&values, bins);
            let codes = values
                .iter()
                .map(|v| cuts.iter().filter(|&&cut| cut <= *v).count())
                .collect();
            (bin_labels(&cuts), codes)
        } else {
            let labels: Vec<String> = raw
                .iter()
                .map(|r| r[c].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let index: HashMap<&str, usize> =
                labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
            let codes = raw.iter().map(|r| index[r[c].as_str()]).collect();
            (labels, codes)
        };
        columns.push((name, labels, codes));
    }

    // Remove constant, all-distinct and duplicate columns.
    let mut kept: Vec<(String, Vec<String>, Vec<usize>)> = Vec::new();
    let mut seen_partitions: HashMap<Vec<usize>, String> = HashMap::new();
    for (name, labels, codes) in columns {
        let distinct = codes.iter().collect::<BTreeSet<_>>().len();
        if distinct < 2 {
            provenance.log.push(format!("dropped constant column `{name}`"));
            continue;
        }
        if distinct == n && !config.numeric.contains_key(&name) {
            provenance.log.push(format!("dropped all-distinct column `{name}`"));
            continue;
        }
        // Canonical relabelling by first occurrence identifies duplicates up to renaming.
        let mut relabel: HashMap<usize, usize> = HashMap::new();
        let partition: Vec<usize> = codes
            .iter()
            .map(|&v| {
                let next = relabel.len();
                *relabel.entry(v).or_insert(next)
            })
            .collect();
        if let Some(first) = seen_partitions.get(&partition) {
            provenance
                .log
                .push(format!("dropped column `{name}` (duplicate of `{first}`)"));
            continue;
        }
        seen_partitions.insert(partition, name.clone());
        // Drop labels that no row uses (possible after numeric binning).
        let used: BTreeSet<usize> = codes.iter().copied().collect();
        let remap: HashMap<usize, usize> = used.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let labels = used.iter().map(|&v| labels[v].clone()).collect();
        let codes = codes.iter().map(|v| remap[v]).collect();
        kept.push((name, labels, codes));
    }
    if kept.is_empty() {
        return Err(DataError::Empty("no informative feature columns remain".into()));
    }
    for s in &config.sensitive {
        if !kept.iter().any(|(name, _, _)| name == s) {
            provenance
                .log
                .push(format!("sensitive column `{s}` was removed by preprocessing"));
        }
    }

    let decision_labels: BTreeSet<&str> = raw.iter().map(|r| r[decision_col].as_str()).collect();
    let negative = match decision_labels
        .iter()
        .filter(|l| **l != config.positive_label)
        .collect::<Vec<_>>()
        .as_slice()
    {
        [only] => only.to_string(),
        _ => format!("not {}", config.positive_label),
    };
    if negative == config.positive_label {
        return Err(DataError::Config("decision labels collide".into()));
    }
    let decision = DecisionVariable {
        name: config.decision_column.clone(),
        positive: config.positive_label.clone(),
        negative,
    };
    let features = kept
        .iter()
        .map(|(name, labels, _)| Feature {
            name: name.clone(),
            values: labels.clone(),
            sensitive: config.sensitive.contains(name),
        })
        .collect();
    let schema = Schema::new(decision, features)?;
    let rows = (0..n)
        .map(|i| kept.iter().map(|(_, _, codes)| codes[i]).collect())
        .collect();
    let decisions = raw
        .iter()
        .map(|r| {
            if r[decision_col] == config.positive_label {
                DecisionValue::Positive
            } else {
                DecisionValue::Negative
            }
        })
        .collect();
    let mut dataset = Dataset::new(schema, rows, decisions)?;
    dataset.provenance = provenance;
    Ok(dataset)
}

/// Fraction of rows where the model's prediction from the full row matches
/// the label. Posterior exactly 0.5 predicts the negative class.
pub fn accuracy(model: &NaiveBayesModel, dataset: &Dataset) -> Result<f64, DataError> {
    if model.schema() != dataset.schema() {
        return Err(ModelError::Dimension("model and dataset schemas differ".into()).into());
    }
    if dataset.is_empty() {
        return Err(DataError::Empty("cannot score an empty dataset".into()));
    }
    let mut correct = 0usize;
    for i in 0..dataset.len() {
        if model.predict(&dataset.evidence(i))? == dataset.decisions[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Stratified fold index for every row: each label class is shuffled with
/// `seed`, the classes are concatenated and folds are dealt round-robin.
pub fn fold_assignment(
    decisions: &[DecisionValue],
    folds: usize,
    seed: u64,
) -> Result<Vec<usize>, DataError> {
    if folds < 2 || folds > decisions.len() {
        return Err(DataError::InvalidFolds {
            folds,
            rows: decisions.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(decisions.len());
    for dv in DecisionValue::BOTH {
        let mut class: Vec<usize> = (0..decisions.len()).filter(|&i| decisions[i] == dv).collect();
        class.shuffle(&mut rng);
        order.extend(class);
    }
    let mut fold_of = vec![0; decisions.len()];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % folds;
    }
    Ok(fold_of)
}

/// Per-fold accuracies of a learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: usize,
    pub seed: u64,
    pub fold_sizes: Vec<usize>,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

/// k-fold cross-validation: `learner` is trained on every fold's complement
/// and scored on the fold.
pub fn cross_validate<E>(
    dataset: &Dataset,
    folds: usize,
    seed: u64,
    mut learner: impl FnMut(&Dataset) -> Result<NaiveBayesModel, E>,
) -> Result<CrossValidation, E>
where
    E: From<DataError>,
{
    let fold_of = fold_assignment(&dataset.decisions, folds, seed)?;
    let mut fold_sizes = Vec::with_capacity(folds);
    let mut accuracies = Vec::with_capacity(folds);
    for k in 0..folds {
        let test: Vec<usize> = (0..dataset.len()).filter(|&i| fold_of[i] == k).collect();
        let train: Vec<usize> = (0..dataset.len()).filter(|&i| fold_of[i] != k).collect();
        let model = learner(&dataset.subset(&train))?;
        fold_sizes.push(test.len());
        accuracies.push(accuracy(&model, &dataset.subset(&test))?);
    }
    let mean_accuracy = accuracies.iter().sum::<f64>() / folds as f64;
    Ok(CrossValidation {
        folds,
        seed,
        fold_sizes,
        accuracies,
        mean_accuracy,
    })
}
