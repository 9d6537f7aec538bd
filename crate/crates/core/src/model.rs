//! Naive Bayes distributions over a binary decision and categorical features.
//!
//! All queries are answered in log-space and exponentiated once at the end, so
//! evidence over a few dozen features never underflows.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SufficientStatistics;
use crate::math::{log_add_exp, sigmoid};

/// Tolerance on the sum-to-one check of each conditional probability table.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// One of the two values of the decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionValue {
    Positive,
    Negative,
}

impl DecisionValue {
    pub const BOTH: [DecisionValue; 2] = [DecisionValue::Positive, DecisionValue::Negative];

    /// Column used by the `[positive, negative]` pairs stored throughout the crate.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            DecisionValue::Positive => 0,
            DecisionValue::Negative => 1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            DecisionValue::Positive => DecisionValue::Negative,
            DecisionValue::Negative => DecisionValue::Positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionVariable {
    pub name: String,
    pub positive: String,
    pub negative: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub values: Vec<String>,
    #[serde(default)]
    pub sensitive: bool,
}

impl Feature {
    pub fn new(name: impl Into<String>, values: &[&str], sensitive: bool) -> Self {
        Feature {
            name: name.into(),
            values: values.iter().map(|v| v.to_string()).collect(),
            sensitive,
        }
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }
}

/// Variables of the network: a binary decision plus an ordered list of
/// categorical features, some of which are sensitive.
///
/// Features are addressed by their position in [`Schema::features`]; the
/// decision variable has no index and can never appear in an [`Assignment`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDoc", into = "SchemaDoc")]
pub struct Schema {
    decision: DecisionVariable,
    features: Vec<Feature>,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    decision: DecisionVariable,
    features: Vec<Feature>,
}

impl TryFrom<SchemaDoc> for Schema {
    type Error = ModelError;
    fn try_from(doc: SchemaDoc) -> Result<Self, Self::Error> {
        Schema::new(doc.decision, doc.features)
    }
}

impl From<Schema> for SchemaDoc {
    fn from(s: Schema) -> Self {
        SchemaDoc {
            decision: s.decision,
            features: s.features,
        }
    }
}

impl Schema {
    pub fn new(decision: DecisionVariable, features: Vec<Feature>) -> Result<Self, ModelError> {
        if decision.positive == decision.negative {
            return Err(ModelError::InvalidSchema(format!(
                "decision `{}` needs two distinct values",
                decision.name
            )));
        }
        let mut names = BTreeSet::new();
        names.insert(decision.name.as_str());
        for f in &features {
            if !names.insert(f.name.as_str()) {
                return Err(ModelError::InvalidSchema(format!(
                    "duplicate variable name `{}`",
                    f.name
                )));
            }
            if f.values.len() < 2 {
                return Err(ModelError::InvalidSchema(format!(
                    "feature `{}` has {} value(s); at least 2 are required",
                    f.name,
                    f.values.len()
                )));
            }
            let distinct: BTreeSet<&str> = f.values.iter().map(String::as_str).collect();
            if distinct.len() != f.values.len() {
                return Err(ModelError::InvalidSchema(format!(
                    "feature `{}` repeats a value label",
                    f.name
                )));
            }
        }
        Ok(Schema { decision, features })
    }

    pub fn decision(&self) -> &DecisionVariable {
        &self.decision
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &Feature {
        &self.features[index]
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn cardinality(&self, index: usize) -> usize {
        self.features[index].values.len()
    }

    pub fn is_sensitive(&self, index: usize) -> bool {
        self.features[index].sensitive
    }

    pub fn sensitive_indices(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&i| self.features[i].sensitive)
            .collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Builds an assignment from `(variable, value)` label pairs.
    pub fn assignment(&self, pairs: &[(&str, &str)]) -> Result<Assignment, ModelError> {
        let mut bindings = Vec::with_capacity(pairs.len());
        for &(var, value) in pairs {
            if var == self.decision.name {
                return Err(ModelError::InvalidQuery(format!(
                    "`{var}` is the decision variable and cannot be used as evidence"
                )));
            }
            let f = self
                .feature_index(var)
                .ok_or_else(|| ModelError::InvalidQuery(format!("unknown variable `{var}`")))?;
            let v = self.features[f]
                .values
                .iter()
                .position(|x| x == value)
                .ok_or_else(|| {
                    ModelError::InvalidQuery(format!("`{value}` is not a value of `{var}`"))
                })?;
            bindings.push((f, v));
        }
        Assignment::new(bindings)
    }

    /// Checks that every binding of `a` addresses an existing feature value.
    pub fn check_assignment(&self, a: &Assignment) -> Result<(), ModelError> {
        for (var, value) in a.iter() {
            if var >= self.features.len() {
                return Err(ModelError::InvalidQuery(format!(
                    "variable index {var} is not a feature (schema has {} features)",
                    self.features.len()
                )));
            }
            if value >= self.features[var].values.len() {
                return Err(ModelError::InvalidQuery(format!(
                    "value {value} out of range for `{}`",
                    self.features[var].name
                )));
            }
        }
        Ok(())
    }

    /// Human-readable rendering such as `{X=x, Y1=y1}`.
    pub fn describe(&self, a: &Assignment) -> String {
        let parts: Vec<String> = a
            .iter()
            .map(|(f, v)| format!("{}={}", self.features[f].name, self.features[f].values[v]))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

/// A partial joint assignment of feature values, kept sorted by feature index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    bindings: Vec<(usize, usize)>,
}

impl Assignment {
    pub fn empty() -> Self {
        Assignment::default()
    }

    pub fn new(bindings: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, ModelError> {
        let mut bindings: Vec<(usize, usize)> = bindings.into_iter().collect();
        bindings.sort_unstable();
        if bindings.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(ModelError::InvalidQuery(
                "a variable is bound more than once".to_string(),
            ));
        }
        Ok(Assignment { bindings })
    }

    pub fn single(var: usize, value: usize) -> Self {
        Assignment {
            bindings: vec![(var, value)],
        }
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bindings.iter().copied()
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.bindings.iter().map(|&(v, _)| v)
    }

    pub fn bindings(&self) -> &[(usize, usize)] {
        &self.bindings
    }

    pub fn value_of(&self, var: usize) -> Option<usize> {
        self.bindings
            .binary_search_by_key(&var, |&(v, _)| v)
            .ok()
            .map(|i| self.bindings[i].1)
    }

    pub fn binds(&self, var: usize) -> bool {
        self.value_of(var).is_some()
    }

    pub fn overlaps(&self, other: &Assignment) -> bool {
        other.vars().any(|v| self.binds(v))
    }

    /// Returns `self ∪ other`, failing when they share a variable.
    pub fn union(&self, other: &Assignment) -> Result<Assignment, ModelError> {
        if self.overlaps(other) {
            return Err(ModelError::InvalidPattern(
                "assignments bind a common variable".to_string(),
            ));
        }
        let mut bindings = self.bindings.clone();
        bindings.extend_from_slice(&other.bindings);
        bindings.sort_unstable();
        Ok(Assignment { bindings })
    }

    /// Adds one binding; panics if `var` is already bound.
    pub fn with(&self, var: usize, value: usize) -> Assignment {
        let pos = match self.bindings.binary_search_by_key(&var, |&(v, _)| v) {
            Ok(_) => panic!("variable {var} already bound"),
            Err(p) => p,
        };
        let mut bindings = self.bindings.clone();
        bindings.insert(pos, (var, value));
        Assignment { bindings }
    }
}

impl FromIterator<(usize, usize)> for Assignment {
    /// Collects bindings, keeping the last value seen for a repeated variable.
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        let mut bindings: Vec<(usize, usize)> = iter.into_iter().collect();
        bindings.sort_by_key(|&(v, _)| v);
        bindings.dedup_by_key(|b| b.0);
        Assignment { bindings }
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (var, val)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{var}={val}")?;
        }
        write!(f, "}}")
    }
}

/// Conditional distribution of one feature given each decision value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub feature: String,
    /// `P(value | d)` for each value of the feature.
    pub positive: Vec<f64>,
    /// `P(value | d̄)` for each value of the feature.
    pub negative: Vec<f64>,
}

impl Cpt {
    pub fn given(&self, decision: DecisionValue) -> &[f64] {
        match decision {
            DecisionValue::Positive => &self.positive,
            DecisionValue::Negative => &self.negative,
        }
    }
}

/// A naive Bayes network `D → Z_i` with strictly interior parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc", into = "ModelDoc")]
pub struct NaiveBayesModel {
    schema: Schema,
    prior: f64,
    cpts: Vec<Cpt>,
    log_prior: [f64; 2],
    /// `log_cpt[f][v] = [ln P(v|d), ln P(v|d̄)]`
    log_cpt: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    schema: Schema,
    prior: f64,
    cpts: Vec<Cpt>,
}

impl TryFrom<ModelDoc> for NaiveBayesModel {
    type Error = ModelError;
    fn try_from(doc: ModelDoc) -> Result<Self, Self::Error> {
        NaiveBayesModel::new(doc.schema, doc.prior, doc.cpts)
    }
}

impl From<NaiveBayesModel> for ModelDoc {
    fn from(m: NaiveBayesModel) -> Self {
        ModelDoc {
            schema: m.schema,
            prior: m.prior,
            cpts: m.cpts,
        }
    }
}

fn check_interior(what: impl Fn() -> String, p: f64) -> Result<(), ModelError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(ModelError::InvalidParameter(format!(
            "{} = {p} is not strictly inside (0, 1)",
            what()
        )));
    }
    Ok(())
}

impl NaiveBayesModel {
    /// Validates and builds a model. `prior` is `P(d)`; `cpts` must follow the
    /// feature order of `schema`.
    pub fn new(schema: Schema, prior: f64, cpts: Vec<Cpt>) -> Result<Self, ModelError> {
        check_interior(|| "P(d)".to_string(), prior)?;
        if cpts.len() != schema.feature_count() {
            return Err(ModelError::Dimension(format!(
                "{} CPTs for {} features",
                cpts.len(),
                schema.feature_count()
            )));
        }
        let mut log_cpt = Vec::with_capacity(cpts.len());
        for (i, (cpt, feature)) in cpts.iter().zip(schema.features()).enumerate() {
            if cpt.feature != feature.name {
                return Err(ModelError::Dimension(format!(
                    "CPT {i} is for `{}` but feature {i} is `{}`",
                    cpt.feature, feature.name
                )));
            }
            let k = feature.cardinality();
            let mut rows = Vec::with_capacity(k);
            for dv in DecisionValue::BOTH {
                let column = cpt.given(dv);
                if column.len() != k {
                    return Err(ModelError::Dimension(format!(
                        "CPT for `{}` has {} entries, expected {k}",
                        feature.name,
                        column.len()
                    )));
                }
                for (v, &p) in column.iter().enumerate() {
                    check_interior(
                        || format!("P({}={} | {:?})", feature.name, feature.values[v], dv),
                        p,
                    )?;
                }
                let sum: f64 = column.iter().sum();
                if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                    return Err(ModelError::InvalidParameter(format!(
                        "P({} | {:?}) sums to {sum}",
                        feature.name, dv
                    )));
                }
            }
            for v in 0..k {
                rows.push([cpt.positive[v].ln(), cpt.negative[v].ln()]);
            }
            log_cpt.push(rows);
        }
        Ok(NaiveBayesModel {
            log_prior: [prior.ln(), (1.0 - prior).ln()],
            schema,
            prior,
            cpts,
            log_cpt,
        })
    }

    /// Builds a model from `[P(·|d), P(·|d̄)]` tables given in schema order.
    pub fn from_tables(
        schema: Schema,
        prior: f64,
        tables: Vec<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self, ModelError> {
        let cpts = schema
            .features()
            .iter()
            .zip(tables)
            .map(|(f, (positive, negative))| Cpt {
                feature: f.name.clone(),
                positive,
                negative,
            })
            .collect();
        NaiveBayesModel::new(schema, prior, cpts)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// `θ_d = P(d)`.
    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    /// `θ_{value|decision}`.
    pub fn param(&self, feature: usize, value: usize, decision: DecisionValue) -> f64 {
        self.cpts[feature].given(decision)[value]
    }

    #[inline]
    pub fn log_param(&self, feature: usize, value: usize, decision: DecisionValue) -> f64 {
        self.log_cpt[feature][value][decision.index()]
    }

    #[inline]
    pub fn log_prior(&self, decision: DecisionValue) -> f64 {
        self.log_prior[decision.index()]
    }

    /// `ln P(v|d) − ln P(v|d̄)`: how strongly observing `v` favours the positive decision.
    #[inline]
    pub fn log_ratio(&self, feature: usize, value: usize) -> f64 {
        let row = self.log_cpt[feature][value];
        row[0] - row[1]
    }

    /// `ln P(d) − ln P(d̄)`.
    #[inline]
    pub fn prior_log_odds(&self) -> f64 {
        self.log_prior[0] - self.log_prior[1]
    }

    /// `ln P(e | decision)` without validation.
    #[inline]
    pub(crate) fn log_likelihood_of(&self, decision: DecisionValue, evidence: &Assignment) -> f64 {
        let c = decision.index();
        evidence.iter().map(|(f, v)| self.log_cpt[f][v][c]).sum()
    }

    /// Posterior log-odds `ln P(d|e) − ln P(d̄|e)` without validation.
    #[inline]
    pub(crate) fn log_odds_unchecked(&self, evidence: &Assignment) -> f64 {
        self.prior_log_odds() + evidence.iter().map(|(f, v)| self.log_ratio(f, v)).sum::<f64>()
    }

    /// `P(d | evidence)`, marginalising every unobserved feature.
    pub fn posterior(&self, evidence: &Assignment) -> Result<f64, ModelError> {
        self.schema.check_assignment(evidence)?;
        Ok(sigmoid(self.log_odds_unchecked(evidence)))
    }

    /// Posterior log-odds of the positive decision.
    pub fn log_odds(&self, evidence: &Assignment) -> Result<f64, ModelError> {
        self.schema.check_assignment(evidence)?;
        Ok(self.log_odds_unchecked(evidence))
    }

    /// `ln P(decision, evidence)`.
    pub fn log_joint(
        &self,
        decision: DecisionValue,
        evidence: &Assignment,
    ) -> Result<f64, ModelError> {
        self.schema.check_assignment(evidence)?;
        Ok(self.log_prior(decision) + self.log_likelihood_of(decision, evidence))
    }

    /// `P(decision, evidence) = θ_decision Π_e θ_{e|decision}`.
    pub fn joint_probability(
        &self,
        decision: DecisionValue,
        evidence: &Assignment,
    ) -> Result<f64, ModelError> {
        Ok(self.log_joint(decision, evidence)?.exp())
    }

    /// `ln P(evidence)`.
    pub fn log_marginal(&self, evidence: &Assignment) -> Result<f64, ModelError> {
        let pos = self.log_joint(DecisionValue::Positive, evidence)?;
        let neg = self.log_joint(DecisionValue::Negative, evidence)?;
        Ok(log_add_exp(pos, neg))
    }

    /// Checks that `(x, y)` is a well-formed pattern: `x` nonempty and
    /// sensitive-only, `y` disjoint from `x`.
    pub fn check_pattern(&self, x: &Assignment, y: &Assignment) -> Result<(), ModelError> {
        self.schema.check_assignment(x)?;
        self.schema.check_assignment(y)?;
        if x.is_empty() {
            return Err(ModelError::InvalidPattern(
                "the sensitive part x must bind at least one variable".to_string(),
            ));
        }
        if let Some(f) = x.vars().find(|&f| !self.schema.is_sensitive(f)) {
            return Err(ModelError::InvalidPattern(format!(
                "`{}` is not a sensitive attribute",
                self.schema.feature(f).name
            )));
        }
        if x.overlaps(y) {
            return Err(ModelError::InvalidPattern(
                "x and y bind a common variable".to_string(),
            ));
        }
        Ok(())
    }

    /// Degree of discrimination `P(d | x y) − P(d | y)`.
    pub fn discrimination_score(&self, x: &Assignment, y: &Assignment) -> Result<f64, ModelError> {
        self.check_pattern(x, y)?;
        let lo_y = self.log_odds_unchecked(y);
        let lo_xy = lo_y + x.iter().map(|(f, v)| self.log_ratio(f, v)).sum::<f64>();
        Ok(sigmoid(lo_xy) - sigmoid(lo_y))
    }

    /// `Σ_i n_i ln θ_i` over every parameter.
    pub fn log_likelihood(&self, counts: &SufficientStatistics) -> Result<f64, ModelError> {
        if counts.features.len() != self.schema.feature_count() {
            return Err(ModelError::Dimension(format!(
                "statistics cover {} features, model has {}",
                counts.features.len(),
                self.schema.feature_count()
            )));
        }
        let mut ll = 0.0;
        for dv in DecisionValue::BOTH {
            let n = counts.decision[dv.index()];
            if n != 0.0 {
                ll += n * self.log_prior(dv);
            }
        }
        for (f, per_value) in counts.features.iter().enumerate() {
            if per_value.len() != self.schema.cardinality(f) {
                return Err(ModelError::Dimension(format!(
                    "statistics for `{}` have {} values, schema has {}",
                    self.schema.feature(f).name,
                    per_value.len(),
                    self.schema.cardinality(f)
                )));
            }
            for (v, pair) in per_value.iter().enumerate() {
                for dv in DecisionValue::BOTH {
                    let n = pair[dv.index()];
                    if n != 0.0 {
                        ll += n * self.log_param(f, v, dv);
                    }
                }
            }
        }
        Ok(ll)
    }

    /// Most likely decision for fully or partially observed evidence; ties
    /// (posterior exactly 0.5) go to the negative class.
    pub fn predict(&self, evidence: &Assignment) -> Result<DecisionValue, ModelError> {
        Ok(if self.posterior(evidence)? > 0.5 {
            DecisionValue::Positive
        } else {
            DecisionValue::Negative
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::three_feature_example;

    fn assign(m: &NaiveBayesModel, pairs: &[(&str, &str)]) -> Assignment {
        m.schema().assignment(pairs).unwrap()
    }

    #[test]
    fn posterior_of_example_network() {
        let m = three_feature_example();
        let p = m.posterior(&assign(&m, &[("X", "x")])).unwrap();
        assert!((p - 0.2857).abs() < 1e-3);
        let p = m.posterior(&assign(&m, &[("Y1", "y1")])).unwrap();
        assert!((p - 0.6364).abs() < 1e-3);
        assert_eq!(m.posterior(&Assignment::empty()).unwrap(), m.prior());
    }

    #[test]
    fn decision_variable_is_not_evidence() {
        let m = three_feature_example();
        let err = m.schema().assignment(&[("D", "d")]).unwrap_err();
        assert!(matches!(err, ModelError::InvalidQuery(_)));
        let bogus = Assignment::single(7, 0);
        assert!(matches!(m.posterior(&bogus), Err(ModelError::InvalidQuery(_))));
        assert!(matches!(
            m.joint_probability(DecisionValue::Positive, &bogus),
            Err(ModelError::InvalidQuery(_))
        ));
    }

    #[test]
    fn joint_probability_examples() {
        let m = three_feature_example();
        let x = assign(&m, &[("X", "x")]);
        assert!((m.joint_probability(DecisionValue::Positive, &x).unwrap() - 0.16).abs() < 1e-12);
        let e = assign(&m, &[("X", "x"), ("Y1", "y1")]);
        assert!((m.joint_probability(DecisionValue::Negative, &e).unwrap() - 0.04).abs() < 1e-12);
        assert!(
            (m.joint_probability(DecisionValue::Positive, &Assignment::empty()).unwrap() - 0.2)
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn discrimination_scores_of_example() {
        let m = three_feature_example();
        let d = m
            .discrimination_score(&assign(&m, &[("X", "~x")]), &assign(&m, &[("Y1", "y1")]))
            .unwrap();
        assert!((d + 0.225).abs() < 1e-3, "{d}");
        let d = m
            .discrimination_score(
                &assign(&m, &[("X", "~x")]),
                &assign(&m, &[("Y1", "y1"), ("Y2", "~y2")]),
            )
            .unwrap();
        assert!((d + 0.167).abs() < 1e-3, "{d}");
    }

    #[test]
    fn discrimination_rejects_bad_patterns() {
        let m = three_feature_example();
        let x = assign(&m, &[("X", "x")]);
        let overlap = m.discrimination_score(&x, &x);
        assert!(matches!(overlap, Err(ModelError::InvalidPattern(_))));
        let y1 = assign(&m, &[("Y1", "y1")]);
        assert!(matches!(
            m.discrimination_score(&y1, &Assignment::empty()),
            Err(ModelError::InvalidPattern(_))
        ));
        assert!(matches!(
            m.discrimination_score(&Assignment::empty(), &y1),
            Err(ModelError::InvalidPattern(_))
        ));
    }

    #[test]
    fn independent_sensitive_feature_scores_zero() {
        let schema = Schema::new(
            DecisionVariable {
                name: "D".into(),
                positive: "d".into(),
                negative: "~d".into(),
            },
            vec![Feature::new("S", &["a", "b"], true)],
        )
        .unwrap();
        let m = NaiveBayesModel::from_tables(schema, 0.3, vec![(vec![0.4, 0.6], vec![0.4, 0.6])])
            .unwrap();
        let d = m
            .discrimination_score(&Assignment::single(0, 1), &Assignment::empty())
            .unwrap();
        assert!(d.abs() < 1e-15);
    }

    #[test]
    fn constructor_rejects_boundary_parameters() {
        let m = three_feature_example();
        let schema = m.schema().clone();
        let mut tables: Vec<(Vec<f64>, Vec<f64>)> = m
            .cpts()
            .iter()
            .map(|c| (c.positive.clone(), c.negative.clone()))
            .collect();
        assert!(matches!(
            NaiveBayesModel::from_tables(schema.clone(), 1.0, tables.clone()),
            Err(ModelError::InvalidParameter(_))
        ));
        tables[0].0 = vec![1.0, 0.0];
        assert!(matches!(
            NaiveBayesModel::from_tables(schema.clone(), 0.2, tables.clone()),
            Err(ModelError::InvalidParameter(_))
        ));
        tables[0].0 = vec![0.5, 0.6];
        assert!(matches!(
            NaiveBayesModel::from_tables(schema, 0.2, tables),
            Err(ModelError::InvalidParameter(_))
        ));
    }

    #[test]
    fn schema_validation() {
        let d = DecisionVariable {
            name: "D".into(),
            positive: "1".into(),
            negative: "0".into(),
        };
        assert!(Schema::new(d.clone(), vec![Feature::new("A", &["x"], false)]).is_err());
        assert!(Schema::new(
            d.clone(),
            vec![Feature::new("A", &["x", "y"], false), Feature::new("A", &["x", "y"], false)]
        )
        .is_err());
        assert!(Schema::new(d.clone(), vec![Feature::new("D", &["x", "y"], false)]).is_err());
        assert!(Schema::new(d, vec![Feature::new("A", &["x", "y"], true)]).is_ok());
    }

    #[test]
    fn log_likelihood_of_single_example() {
        let m = three_feature_example();
        let mut counts = SufficientStatistics::zeros(m.schema());
        assert_eq!(m.log_likelihood(&counts).unwrap(), 0.0);
        counts.add_row(&[0, 0, 0], DecisionValue::Positive);
        let expected = (0.2f64 * 0.8 * 0.7 * 0.8).ln();
        assert!((m.log_likelihood(&counts).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_dimension_mismatch() {
        let m = three_feature_example();
        let mut counts = SufficientStatistics::zeros(m.schema());
        counts.features.pop();
        assert!(matches!(m.log_likelihood(&counts), Err(ModelError::Dimension(_))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = three_feature_example();
        let back = NaiveBayesModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn json_with_invalid_parameters_is_rejected() {
        let m = three_feature_example();
        let text = m.to_json().replace("0.2,", "0.0,");
        assert!(NaiveBayesModel::from_json(&text).is_err());
    }
}
