//! Branch-and-bound search for discrimination patterns.
//!
//! Variables are visited in a fixed global order. At depth `i` the search
//! either adds variable `order[i]` to the sensitive part `x` (sensitive
//! variables only), adds it to the context `y`, or skips it for good. Every
//! pattern is therefore generated exactly once, when its last variable in the
//! order is bound. A subtree is expanded only when the admissible bounds of
//! [`crate::bounds`] say it can still contain a pattern that matters.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{BoundsError, DivergenceTerms, FeatureExtremes, PrefixStats, BOUND_TOLERANCE};
use crate::math::sigmoid;
use crate::model::{Assignment, DecisionValue, ModelError, NaiveBayesModel, Schema};

/// Largest candidate count [`brute_force_patterns`] accepts by default.
pub const DEFAULT_BRUTE_FORCE_CAP: u64 = 10_000_000;

/// How "proportion of the search space explored" is measured.
pub const EXPLORED_DEFINITION: &str =
    "scored candidate patterns (nonempty x) divided by the number of all candidate patterns";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinerError {
    #[error("delta = {0} is outside [0, 1]")]
    InvalidDelta(f64),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("invalid variable order: {0}")]
    InvalidOrder(String),
    #[error("exhaustive enumeration needs {estimate} candidate patterns, more than the cap of {cap}")]
    TooLarge { estimate: u64, cap: u64 },
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Key by which patterns are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ranking {
    /// Absolute degree of discrimination `|Δ|`.
    Discrimination,
    /// Divergence score.
    Divergence,
}

impl std::str::FromStr for Ranking {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "discrimination" => Ok(Ranking::Discrimination),
            "divergence" => Ok(Ranking::Divergence),
            other => Err(format!("unknown ranking `{other}`")),
        }
    }
}

/// Global branching order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableOrder {
    /// Descending spread `max_v ln(P(v|d)/P(v|d̄)) − min_v ln(P(v|d)/P(v|d̄))`,
    /// ties broken by feature index.
    Spread,
    /// Schema order.
    Natural,
    /// Explicit permutation of feature indices.
    Custom(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    pub order: VariableOrder,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            order: VariableOrder::Spread,
        }
    }
}

/// A scored pair `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub x: Assignment,
    pub y: Assignment,
    /// `Δ(x, y) = P(d | x y) − P(d | y)`.
    pub delta: f64,
    /// Divergence score at the threshold the pattern was mined with.
    pub divergence: f64,
    /// `P(x y)`.
    pub mass: f64,
}

impl Pattern {
    /// Scores `(x, y)` at threshold `delta`. Returns `None` for degenerate
    /// pairs where `x` is implied by `y`, which are never reported.
    pub fn evaluate(
        model: &NaiveBayesModel,
        x: Assignment,
        y: Assignment,
        delta: f64,
    ) -> Result<Option<Pattern>, MinerError> {
        let terms = DivergenceTerms::new(model, &x, &y)?;
        let divergence = match terms.divergence(delta) {
            Ok(v) => v,
            Err(BoundsError::DegeneratePattern) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        Ok(Some(Pattern {
            x,
            y,
            delta: terms.delta_score,
            divergence,
            mass: terms.p_xy(),
        }))
    }

    pub fn is_discriminating(&self, delta: f64) -> bool {
        self.delta.abs() > delta
    }

    pub fn score(&self, ranking: Ranking) -> f64 {
        match ranking {
            Ranking::Discrimination => self.delta.abs(),
            Ranking::Divergence => self.divergence,
        }
    }

    /// Canonical order: `x` bindings, then `y` bindings, lexicographically.
    pub fn canonical_cmp(&self, other: &Pattern) -> Ordering {
        self.x
            .bindings()
            .cmp(other.x.bindings())
            .then_with(|| self.y.bindings().cmp(other.y.bindings()))
    }

    /// Ranking order: higher score first, ties by canonical order.
    pub fn rank_cmp(&self, other: &Pattern, ranking: Ranking) -> Ordering {
        other
            .score(ranking)
            .total_cmp(&self.score(ranking))
            .then_with(|| self.canonical_cmp(other))
    }

    pub fn to_document(&self, schema: &Schema) -> PatternDocument {
        let named = |a: &Assignment| -> BTreeMap<String, String> {
            a.iter()
                .map(|(f, v)| {
                    let feature = schema.feature(f);
                    (feature.name.clone(), feature.values[v].clone())
                })
                .collect()
        };
        PatternDocument {
            x: named(&self.x),
            y: named(&self.y),
            delta: self.delta,
            divergence: self.divergence,
            mass: self.mass,
        }
    }
}

/// Sorts patterns by `ranking`, ties in canonical order.
pub fn sort_patterns(patterns: &mut [Pattern], ranking: Ranking) {
    patterns.sort_by(|a, b| a.rank_cmp(b, ranking));
}

/// Named form of a pattern for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternDocument {
    pub x: BTreeMap<String, String>,
    pub y: BTreeMap<String, String>,
    pub delta: f64,
    pub divergence: f64,
    pub mass: f64,
}

/// Result of a mining run.
#[derive(Debug, Clone, PartialEq)]
pub struct MiningReport {
    pub delta: f64,
    /// `None` when every pattern was requested.
    pub k: Option<usize>,
    pub ranking: Ranking,
    pub patterns: Vec<Pattern>,
    /// Candidate patterns that were scored.
    pub nodes_visited: u64,
    /// Subtrees cut off by a bound.
    pub nodes_pruned: u64,
    pub search_space_size: u64,
    pub certified_fair: bool,
    /// Feature indices in branching order.
    pub variable_order: Vec<usize>,
}

impl MiningReport {
    pub fn explored_fraction(&self) -> f64 {
        if self.search_space_size == 0 {
            0.0
        } else {
            self.nodes_visited as f64 / self.search_space_size as f64
        }
    }

    pub fn to_document(&self, schema: &Schema) -> MiningReportDocument {
        MiningReportDocument {
            delta: self.delta,
            k: self.k,
            ranking: self.ranking,
            certified_fair: self.certified_fair,
            patterns: self.patterns.iter().map(|p| p.to_document(schema)).collect(),
            nodes_visited: self.nodes_visited,
            nodes_pruned: self.nodes_pruned,
            search_space_size: self.search_space_size,
            explored_fraction: self.explored_fraction(),
            explored_definition: EXPLORED_DEFINITION.to_string(),
            variable_order: self
                .variable_order
                .iter()
                .map(|&f| schema.feature(f).name.clone())
                .collect(),
        }
    }

    /// Pretty-printed JSON report.
    pub fn to_json(&self, schema: &Schema) -> String {
        serde_json::to_string_pretty(&self.to_document(schema)).expect("report serializes")
    }
}

/// Serialized form of a [`MiningReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningReportDocument {
    pub delta: f64,
    pub k: Option<usize>,
    pub ranking: Ranking,
    pub certified_fair: bool,
    pub patterns: Vec<PatternDocument>,
    pub nodes_visited: u64,
    pub nodes_pruned: u64,
    pub search_space_size: u64,
    pub explored_fraction: f64,
    pub explored_definition: String,
    pub variable_order: Vec<String>,
}

/// Number of candidate patterns `(x, y)` with nonempty `x`:
/// `Π_{S}(1 + 2|S|) Π_{Z∉S}(1 + |Z|) − Π_{Z}(1 + |Z|)`, saturating at `u64::MAX`.
pub fn search_space_size(schema: &Schema) -> u64 {
    let mut with = 1u128;
    let mut without = 1u128;
    for (f, feature) in schema.features().iter().enumerate() {
        let c = feature.cardinality() as u128;
        let choices = if schema.is_sensitive(f) { 1 + 2 * c } else { 1 + c };
        with = with.saturating_mul(choices);
        without = without.saturating_mul(1 + c);
    }
    u64::try_from(with.saturating_sub(without)).unwrap_or(u64::MAX)
}

fn check_delta(delta: f64) -> Result<(), MinerError> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(MinerError::InvalidDelta(delta));
    }
    Ok(())
}

/// Scores every candidate pattern of `model`, in canonical order. Refuses when
/// the candidate count exceeds `cap`.
pub fn brute_force_patterns(
    model: &NaiveBayesModel,
    delta: f64,
    cap: u64,
) -> Result<Vec<Pattern>, MinerError> {
    check_delta(delta)?;
    let schema = model.schema();
    let estimate = search_space_size(schema);
    if estimate > cap {
        return Err(MinerError::TooLarge { estimate, cap });
    }
    let n = schema.feature_count();
    // state[f] = 0: unbound; 1..=c: in y with value state-1; c+1..=2c: in x.
    let radix: Vec<usize> = (0..n)
        .map(|f| {
            let c = schema.cardinality(f);
            if schema.is_sensitive(f) {
                1 + 2 * c
            } else {
                1 + c
            }
        })
        .collect();
    let mut state = vec![0usize; n];
    let mut out = Vec::with_capacity(estimate as usize);
    loop {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (f, &s) in state.iter().enumerate() {
            let c = schema.cardinality(f);
            match s {
                0 => {}
                s if s <= c => y.push((f, s - 1)),
                s => x.push((f, s - 1 - c)),
            }
        }
        if !x.is_empty() {
            let x = Assignment::new(x)?;
            let y = Assignment::new(y)?;
            if let Some(p) = Pattern::evaluate(model, x, y, delta)? {
                out.push(p);
            }
        }
        // Mixed-radix increment.
        let mut f = 0;
        loop {
            if f == n {
                out.sort_by(|a, b| a.canonical_cmp(b));
                return Ok(out);
            }
            state[f] += 1;
            if state[f] < radix[f] {
                break;
            }
            state[f] = 0;
            f += 1;
        }
    }
}

/// Running sums over the variables `order[i..]`.
#[derive(Debug, Clone, Copy, Default)]
struct SuffixSums {
    min_lr: f64,
    max_lr: f64,
    sens_min_lr: f64,
    sens_max_lr: f64,
    sens_log_min: [f64; 2],
    sens_log_max: [f64; 2],
}

/// What the search keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Goal {
    All,
    TopK(usize),
    /// Stop at the first pattern found.
    Witness,
}

/// A reusable miner bound to one model.
#[derive(Debug, Clone)]
pub struct Miner<'m> {
    model: &'m NaiveBayesModel,
    order: Vec<usize>,
    extremes: Vec<FeatureExtremes>,
    suffix: Vec<SuffixSums>,
}

struct SearchState {
    delta: f64,
    goal: Goal,
    ranking: Ranking,
    found: Vec<Pattern>,
    visited: u64,
    pruned: u64,
    stop: bool,
    x: Vec<(usize, usize)>,
    y: Vec<(usize, usize)>,
}

/// Partial sums for the current `(x, y)`.
#[derive(Debug, Clone, Copy, Default)]
struct Running {
    x_log: [f64; 2],
    y_log: [f64; 2],
    x_min_lr: f64,
    x_max_lr: f64,
}

impl<'m> Miner<'m> {
    pub fn new(model: &'m NaiveBayesModel) -> Self {
        Miner::with_config(model, &MinerConfig::default()).expect("default order is valid")
    }

    pub fn with_config(model: &'m NaiveBayesModel, config: &MinerConfig) -> Result<Self, MinerError> {
        let n = model.schema().feature_count();
        let extremes = FeatureExtremes::all(model);
        let order = match &config.order {
            VariableOrder::Natural => (0..n).collect(),
            VariableOrder::Spread => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| {
                    let sa = extremes[a].max_lr - extremes[a].min_lr;
                    let sb = extremes[b].max_lr - extremes[b].min_lr;
                    sb.total_cmp(&sa).then(a.cmp(&b))
                });
                order
            }
            VariableOrder::Custom(order) => {
                let mut sorted = order.clone();
                sorted.sort_unstable();
                if sorted != (0..n).collect::<Vec<_>>() {
                    return Err(MinerError::InvalidOrder(format!(
                        "{order:?} is not a permutation of 0..{n}"
                    )));
                }
                order.clone()
            }
        };
        let mut suffix = vec![
            SuffixSums {
                sens_log_max: [f64::NEG_INFINITY; 2],
                ..SuffixSums::default()
            };
            n + 1
        ];
        for i in (0..n).rev() {
            let f = order[i];
            let e = &extremes[f];
            let mut s = suffix[i + 1];
            s.min_lr += e.min_lr;
            s.max_lr += e.max_lr;
            if model.schema().is_sensitive(f) {
                s.sens_min_lr += e.min_lr;
                s.sens_max_lr += e.max_lr;
                for c in 0..2 {
                    s.sens_log_min[c] += e.log_min[c];
                    s.sens_log_max[c] = s.sens_log_max[c].max(e.log_max[c]);
                }
            }
            suffix[i] = s;
        }
        Ok(Miner {
            model,
            order,
            extremes,
            suffix,
        })
    }

    /// Feature indices in branching order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Every pattern with `|Δ| > delta`, sorted by `|Δ|` (ties canonical).
    pub fn mine_all(&self, delta: f64) -> Result<MiningReport, MinerError> {
        self.run(delta, Goal::All, Ranking::Discrimination)
    }

    /// The `k` best patterns with `|Δ| > delta` under `ranking`.
    pub fn mine_topk(&self, delta: f64, k: usize, ranking: Ranking) -> Result<MiningReport, MinerError> {
        if k == 0 {
            return Err(MinerError::InvalidK);
        }
        self.run(delta, Goal::TopK(k), ranking)
    }

    /// `(true, None)` iff the model is δ-fair; otherwise the first pattern found.
    pub fn verify_fair(&self, delta: f64) -> Result<(bool, Option<Pattern>), MinerError> {
        let report = self.run(delta, Goal::Witness, Ranking::Discrimination)?;
        let witness = report.patterns.into_iter().next();
        Ok((witness.is_none(), witness))
    }

    fn run(&self, delta: f64, goal: Goal, ranking: Ranking) -> Result<MiningReport, MinerError> {
        check_delta(delta)?;
        let mut st = SearchState {
            delta,
            goal,
            ranking,
            found: Vec::new(),
            visited: 0,
            pruned: 0,
            stop: false,
            x: Vec::new(),
            y: Vec::new(),
        };
        self.search(&mut st, Running::default(), 0)?;
        let mut patterns = st.found;
        if goal == Goal::All {
            sort_patterns(&mut patterns, ranking);
        }
        Ok(MiningReport {
            delta,
            k: match goal {
                Goal::All => None,
                Goal::TopK(k) => Some(k),
                Goal::Witness => Some(1),
            },
            ranking,
            certified_fair: patterns.is_empty(),
            patterns,
            nodes_visited: st.visited,
            nodes_pruned: st.pruned,
            search_space_size: search_space_size(self.model.schema()),
            variable_order: self.order.clone(),
        })
    }

    fn stats(&self, run: &Running, i: usize) -> PrefixStats {
        let s = &self.suffix[i];
        PrefixStats {
            log_prior: [
                self.model.log_prior(DecisionValue::Positive),
                self.model.log_prior(DecisionValue::Negative),
            ],
            x_log: run.x_log,
            y_log: run.y_log,
            x_nonempty: false,
            x_min_lr: run.x_min_lr,
            x_max_lr: run.x_max_lr,
            free_min_lr: s.min_lr,
            free_max_lr: s.max_lr,
            free_sens_min_lr: s.sens_min_lr,
            free_sens_max_lr: s.sens_max_lr,
            free_sens_log_min: s.sens_log_min,
            free_sens_log_max: s.sens_log_max,
        }
    }

    /// Current k-th best score, if the list is full.
    fn kth_score(&self, st: &SearchState) -> Option<f64> {
        match st.goal {
            Goal::TopK(k) if st.found.len() >= k => Some(st.found[k - 1].score(st.ranking)),
            _ => None,
        }
    }

    /// Whether the subtree below `(x, y)` with free variables `order[i..]`
    /// can still contain a useful pattern.
    fn worth_expanding(&self, st: &SearchState, run: &Running, i: usize, x_nonempty: bool) -> bool {
        if i >= self.order.len() {
            return false;
        }
        let mut stats = self.stats(run, i);
        stats.x_nonempty = x_nonempty;
        if !x_nonempty && !stats.has_free_sensitive() {
            return false;
        }
        let disc = stats.discrimination_bound();
        let reach = disc.max_abs();
        if reach <= st.delta - BOUND_TOLERANCE {
            return false;
        }
        match (st.ranking, self.kth_score(st)) {
            (_, None) => true,
            (Ranking::Discrimination, Some(kth)) => reach > kth - BOUND_TOLERANCE,
            (Ranking::Divergence, Some(kth)) => {
                let fair_point = stats.fair_point_divergence_bound();
                let by_delta = stats.delta_divergence_bound(st.delta, disc);
                fair_point.min(by_delta) >= kth - BOUND_TOLERANCE
            }
        }
    }

    fn consider(&self, st: &mut SearchState, run: &Running) -> Result<(), MinerError> {
        st.visited += 1;
        // Cheap filter on the running sums before the canonical evaluation.
        let lo_y = self.model.prior_log_odds() + run.y_log[0] - run.y_log[1];
        let fast = sigmoid(lo_y + run.x_log[0] - run.x_log[1]) - sigmoid(lo_y);
        if fast.abs() <= st.delta - 1e-9 {
            return Ok(());
        }
        let x = Assignment::new(st.x.iter().copied())?;
        let y = Assignment::new(st.y.iter().copied())?;
        let Some(p) = Pattern::evaluate(self.model, x, y, st.delta)? else {
            return Ok(());
        };
        if !p.is_discriminating(st.delta) {
            return Ok(());
        }
        match st.goal {
            Goal::All => st.found.push(p),
            Goal::Witness => {
                st.found.push(p);
                st.stop = true;
            }
            Goal::TopK(k) => {
                let pos = st
                    .found
                    .partition_point(|q| q.rank_cmp(&p, st.ranking) == Ordering::Less);
                if pos < k {
                    st.found.insert(pos, p);
                    st.found.truncate(k);
                }
            }
        }
        Ok(())
    }

    fn search(&self, st: &mut SearchState, run: Running, i: usize) -> Result<(), MinerError> {
        if i >= self.order.len() || st.stop {
            return Ok(());
        }
        let f = self.order[i];
        let model = self.model;
        let sensitive = model.schema().is_sensitive(f);
        let e = &self.extremes[f];
        for v in 0..model.schema().cardinality(f) {
            let lp = [
                model.log_param(f, v, DecisionValue::Positive),
                model.log_param(f, v, DecisionValue::Negative),
            ];
            if sensitive {
                let mut child = run;
                child.x_log[0] += lp[0];
                child.x_log[1] += lp[1];
                child.x_min_lr += e.min_lr;
                child.x_max_lr += e.max_lr;
                st.x.push((f, v));
                self.consider(st, &child)?;
                if st.stop {
                    return Ok(());
                }
                if self.worth_expanding(st, &child, i + 1, true) {
                    self.search(st, child, i + 1)?;
                } else if i + 1 < self.order.len() {
                    st.pruned += 1;
                }
                st.x.pop();
                if st.stop {
                    return Ok(());
                }
            }
            let mut child = run;
            child.y_log[0] += lp[0];
            child.y_log[1] += lp[1];
            st.y.push((f, v));
            let x_nonempty = !st.x.is_empty();
            if x_nonempty {
                self.consider(st, &child)?;
                if st.stop {
                    return Ok(());
                }
            }
            if self.worth_expanding(st, &child, i + 1, x_nonempty) {
                self.search(st, child, i + 1)?;
            } else if i + 1 < self.order.len() {
                st.pruned += 1;
            }
            st.y.pop();
            if st.stop {
                return Ok(());
            }
        }
        if self.worth_expanding(st, &run, i + 1, !st.x.is_empty()) {
            self.search(st, run, i + 1)?;
        } else if i + 1 < self.order.len() {
            st.pruned += 1;
        }
        Ok(())
    }
}

/// Every pattern with `|Δ| > delta`, using the default branching order.
pub fn mine_all(model: &NaiveBayesModel, delta: f64) -> Result<MiningReport, MinerError> {
    Miner::new(model).mine_all(delta)
}

/// The `k` best patterns with `|Δ| > delta` under `ranking`.
pub fn mine_topk(
    model: &NaiveBayesModel,
    delta: f64,
    k: usize,
    ranking: Ranking,
) -> Result<MiningReport, MinerError> {
    Miner::new(model).mine_topk(delta, k, ranking)
}

/// Certifies δ-fairness or returns a witness pattern.
pub fn verify_fair(
    model: &NaiveBayesModel,
    delta: f64,
) -> Result<(bool, Option<Pattern>), MinerError> {
    Miner::new(model).verify_fair(delta)
}

/// One point of the mass/discrimination/divergence scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub x: String,
    pub y: String,
    pub mass: f64,
    pub abs_delta: f64,
    pub divergence: f64,
    pub top_discrimination: bool,
    pub top_divergence: bool,
    /// Among the `k` most probable discriminating patterns.
    pub top_mass: bool,
}

/// All discriminating patterns, sorted by `|Δ|`, with flags marking the
/// top-`k` under each ranking and by probability mass.
pub fn scatter(model: &NaiveBayesModel, delta: f64, k: usize) -> Result<Vec<ScatterPoint>, MinerError> {
    let miner = Miner::new(model);
    let all = miner.mine_all(delta)?;
    let key = |p: &Pattern| (p.x.bindings().to_vec(), p.y.bindings().to_vec());
    let top = |ranking| -> Result<BTreeSet<_>, MinerError> {
        Ok(miner.mine_topk(delta, k, ranking)?.patterns.iter().map(key).collect())
    };
    let by_discrimination = top(Ranking::Discrimination)?;
    let by_divergence = top(Ranking::Divergence)?;
    let mut by_mass: Vec<&Pattern> = all.patterns.iter().collect();
    // Stable sort: equal masses keep their `|Δ|` order.
    by_mass.sort_by(|a, b| b.mass.total_cmp(&a.mass));
    let by_mass: BTreeSet<_> = by_mass.into_iter().take(k).map(key).collect();
    let schema = model.schema();
    Ok(all
        .patterns
        .iter()
        .map(|p| {
            let id = key(p);
            ScatterPoint {
                x: schema.describe(&p.x),
                y: schema.describe(&p.y),
                mass: p.mass,
                abs_delta: p.delta.abs(),
                divergence: p.divergence,
                top_discrimination: by_discrimination.contains(&id),
                top_divergence: by_divergence.contains(&id),
                top_mass: by_mass.contains(&id),
            }
        })
        .collect())
}

/// Writes scatter points as CSV with a header row.
pub fn write_scatter_csv<W: Write>(points: &[ScatterPoint], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::three_feature_example;

    #[test]
    fn example_patterns_at_point_two() {
        let m = three_feature_example();
        let s = m.schema();
        let report = mine_all(&m, 0.2).unwrap();
        assert!(!report.certified_fair);
        let x = s.assignment(&[("X", "~x")]).unwrap();
        let y1 = s.assignment(&[("Y1", "y1")]).unwrap();
        let y12 = s.assignment(&[("Y1", "y1"), ("Y2", "~y2")]).unwrap();
        let hit = report.patterns.iter().find(|p| p.x == x && p.y == y1).unwrap();
        assert!((hit.delta + 0.225).abs() < 1e-3);
        assert!(!report.patterns.iter().any(|p| p.x == x && p.y == y12));
    }

    #[test]
    fn nothing_exceeds_one() {
        let m = three_feature_example();
        let report = mine_all(&m, 1.0).unwrap();
        assert!(report.certified_fair && report.patterns.is_empty());
        assert_eq!(verify_fair(&m, 1.0).unwrap(), (true, None));
    }

    #[test]
    fn verify_example() {
        let m = three_feature_example();
        let (fair, witness) = verify_fair(&m, 0.2).unwrap();
        assert!(!fair);
        assert!(witness.unwrap().delta.abs() > 0.2);
        assert_eq!(verify_fair(&m, 0.3).unwrap(), (true, None));
    }

    #[test]
    fn search_space_sizes() {
        let m = three_feature_example();
        // X: 1 + 4, Y1, Y2: 1 + 2 each; minus 27 patterns with empty x.
        assert_eq!(search_space_size(m.schema()), 5 * 9 - 27);
        let all = brute_force_patterns(&m, 0.0, DEFAULT_BRUTE_FORCE_CAP).unwrap();
        assert_eq!(all.len(), 18);
        assert!(matches!(
            brute_force_patterns(&m, 0.0, 10),
            Err(MinerError::TooLarge { estimate: 18, cap: 10 })
        ));
    }

    #[test]
    fn topk_is_prefix_of_sorted_all() {
        let m = three_feature_example();
        let mut all = brute_force_patterns(&m, 0.05, DEFAULT_BRUTE_FORCE_CAP).unwrap();
        all.retain(|p| p.is_discriminating(0.05));
        for ranking in [Ranking::Discrimination, Ranking::Divergence] {
            sort_patterns(&mut all, ranking);
            let top = mine_topk(&m, 0.05, 3, ranking).unwrap();
            assert_eq!(top.patterns, all[..3].to_vec());
        }
    }

    #[test]
    fn custom_order_must_be_permutation() {
        let m = three_feature_example();
        let bad = MinerConfig {
            order: VariableOrder::Custom(vec![0, 0, 1]),
        };
        assert!(matches!(Miner::with_config(&m, &bad), Err(MinerError::InvalidOrder(_))));
    }
}
