//! Maximum-likelihood learning under fairness constraints.
//!
//! Every model parameter becomes a variable of a signomial program whose
//! objective is the inverse likelihood `Π θ_i^{−n_i}`. A pattern `(x, y)` is
//! kept δ-fair by two signomial inequalities written with the monomials
//!
//! ```text
//! r_x = Π θ_{x|d̄} / Π θ_{x|d}        r_y = θ_d̄ Π θ_{y|d̄} / (θ_d Π θ_{y|d})
//! ```
//!
//! so that `P(d | x y) = 1 / (1 + r_x r_y)` and `P(d | y) = 1 / (1 + r_y)`.
//! [`learn_fair`] alternates between solving the program and mining the
//! current model for patterns that still violate the threshold.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{fit, DataError, Dataset, SufficientStatistics};
use crate::miner::{brute_force_patterns, Miner, MinerConfig, MinerError, PatternDocument, Ranking};
use crate::model::{Assignment, Cpt, DecisionValue, ModelError, NaiveBayesModel, Schema};
use crate::spsolver::{
    solve, Monomial, Signomial, SignomialProgram, SolveStatus, SolverError, SolverOptions, Variable,
};

type Bindings = Vec<(usize, usize)>;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("threshold δ = {0} is not supported: the constraint encoding needs δ > 0")]
    UnsupportedThreshold(f64),
    #[error("threshold δ = {0} must lie in (0, 1)")]
    InvalidThreshold(f64),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("solver could not satisfy the constraints (max violation {max_violation:e}); active: {}", active.join(", "))]
    Infeasible {
        max_violation: f64,
        active: Vec<String>,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Position of every model parameter in the program's variable vector:
/// `θ_d`, `θ_d̄`, then `θ_{v|d}`, `θ_{v|d̄}` for each feature value in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamIndex {
    prior: [usize; 2],
    features: Vec<Vec<[usize; 2]>>,
    len: usize,
}

impl ParamIndex {
    pub fn new(schema: &Schema) -> Self {
        let mut next = 2;
        let features = schema
            .features()
            .iter()
            .map(|f| {
                (0..f.cardinality())
                    .map(|_| {
                        let ids = [next, next + 1];
                        next += 2;
                        ids
                    })
                    .collect()
            })
            .collect();
        ParamIndex {
            prior: [0, 1],
            features,
            len: next,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn prior(&self, d: DecisionValue) -> usize {
        self.prior[d.index()]
    }

    pub fn feature(&self, feature: usize, value: usize, d: DecisionValue) -> usize {
        self.features[feature][value][d.index()]
    }

    /// Variables named `P(D=d)` and `P(Z=v|D=d)`, all bounded by 1.
    pub fn variables(&self, schema: &Schema) -> Vec<Variable> {
        let dec = schema.decision();
        let labels = [&dec.positive, &dec.negative];
        let mut names = vec![String::new(); self.len];
        for d in DecisionValue::BOTH {
            names[self.prior(d)] = format!("P({}={})", dec.name, labels[d.index()]);
            for (f, feature) in schema.features().iter().enumerate() {
                for (v, value) in feature.values.iter().enumerate() {
                    names[self.feature(f, v, d)] =
                        format!("P({}={}|{}={})", feature.name, value, dec.name, labels[d.index()]);
                }
            }
        }
        names
            .into_iter()
            .map(|name| Variable {
                name,
                upper: Some(1.0),
            })
            .collect()
    }

    /// Parameter vector of `model`.
    pub fn values_of(&self, model: &NaiveBayesModel) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        out[self.prior[0]] = model.prior();
        out[self.prior[1]] = 1.0 - model.prior();
        for (f, per_value) in self.features.iter().enumerate() {
            for (v, ids) in per_value.iter().enumerate() {
                for d in DecisionValue::BOTH {
                    out[ids[d.index()]] = model.param(f, v, d);
                }
            }
        }
        out
    }

    /// Rescales every sum-to-one group of `values` to sum to exactly one.
    pub fn renormalize(&self, values: &[f64]) -> Vec<f64> {
        let mut out = values.to_vec();
        let mut scale = |ids: &[usize]| {
            let total: f64 = ids.iter().map(|&i| values[i]).sum();
            for &i in ids {
                out[i] = values[i] / total;
            }
        };
        scale(&self.prior);
        for per_value in &self.features {
            for d in 0..2 {
                let ids: Vec<usize> = per_value.iter().map(|ids| ids[d]).collect();
                scale(&ids);
            }
        }
        out
    }

    /// Model with the (renormalized) parameters in `values`.
    pub fn model_from(&self, schema: &Schema, values: &[f64]) -> Result<NaiveBayesModel, ModelError> {
        let v = self.renormalize(values);
        let cpts = schema
            .features()
            .iter()
            .enumerate()
            .map(|(f, feature)| Cpt {
                feature: feature.name.clone(),
                positive: self.features[f].iter().map(|ids| v[ids[0]]).collect(),
                negative: self.features[f].iter().map(|ids| v[ids[1]]).collect(),
            })
            .collect();
        NaiveBayesModel::new(schema.clone(), v[self.prior[0]], cpts)
    }

    /// `Π θ_{x|d̄} / Π θ_{x|d}` over the bindings of `a`, times `θ_d̄/θ_d` if
    /// `with_prior`.
    fn ratio(&self, a: &Assignment, with_prior: bool) -> Monomial {
        let mut exps = Vec::new();
        if with_prior {
            exps.push((self.prior[1], 1.0));
            exps.push((self.prior[0], -1.0));
        }
        for (f, v) in a.iter() {
            exps.push((self.features[f][v][1], 1.0));
            exps.push((self.features[f][v][0], -1.0));
        }
        Monomial::new(1.0, exps).expect("unit coefficient")
    }

    /// `r_x`.
    pub fn r_x(&self, x: &Assignment) -> Monomial {
        self.ratio(x, false)
    }

    /// `r_y`.
    pub fn r_y(&self, y: &Assignment) -> Monomial {
        self.ratio(y, true)
    }
}

/// The two inequalities that keep one pattern δ-fair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessConstraint {
    /// Bindings of `x` as `(feature, value)` indices.
    pub x: Vec<(usize, usize)>,
    pub y: Vec<(usize, usize)>,
    pub delta: f64,
    /// `Δ ≥ −δ`: `((1−δ)/δ) r_x r_y − ((1+δ)/δ) r_y − r_x r_y² ≤ 1`.
    pub lower: Signomial,
    /// `Δ ≤ δ`: `((1−δ)/δ) r_y − ((1+δ)/δ) r_x r_y − r_x r_y² ≤ 1`.
    pub upper: Signomial,
}

impl FairnessConstraint {
    /// `(lower, upper)` residuals `f(θ) − 1`; both are `≤ 0` iff `|Δ| ≤ δ`.
    pub fn residuals(&self, values: &[f64]) -> Result<(f64, f64), SolverError> {
        Ok((
            self.lower.evaluate(values)? - 1.0,
            self.upper.evaluate(values)? - 1.0,
        ))
    }

    pub fn holds(&self, values: &[f64]) -> Result<bool, SolverError> {
        let (l, u) = self.residuals(values)?;
        Ok(l <= 0.0 && u <= 0.0)
    }
}

/// Compiles the fairness constraint for pattern `(x, y)` at threshold `delta`.
pub fn compile_constraint(
    schema: &Schema,
    x: &Assignment,
    y: &Assignment,
    delta: f64,
) -> Result<FairnessConstraint, LearnError> {
    if delta == 0.0 {
        return Err(LearnError::UnsupportedThreshold(delta));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LearnError::InvalidThreshold(delta));
    }
    schema.check_assignment(x)?;
    schema.check_assignment(y)?;
    if x.is_empty() || x.overlaps(y) || x.vars().any(|f| !schema.is_sensitive(f)) {
        return Err(ModelError::InvalidPattern(format!(
            "x = {} and y = {} do not form a pattern",
            schema.describe(x),
            schema.describe(y)
        ))
        .into());
    }
    let index = ParamIndex::new(schema);
    let rx = index.r_x(x);
    let ry = index.r_y(y);
    let rxry = rx.mul(&ry);
    let rxry2 = rxry.mul(&ry);
    let a = (1.0 - delta) / delta;
    let b = (1.0 + delta) / delta;
    let lower = Signomial::new(vec![rxry.scaled(a), ry.scaled(-b), rxry2.scaled(-1.0)])?;
    let upper = Signomial::new(vec![ry.scaled(a), rxry.scaled(-b), rxry2.scaled(-1.0)])?;
    Ok(FairnessConstraint {
        x: x.bindings().to_vec(),
        y: y.bindings().to_vec(),
        delta,
        lower,
        upper,
    })
}

fn describe_pattern(schema: &Schema, c: &FairnessConstraint) -> String {
    let x = Assignment::new(c.x.iter().copied()).expect("valid bindings");
    let y = Assignment::new(c.y.iter().copied()).expect("valid bindings");
    format!("x={{{}}} y={{{}}}", schema.describe(&x), schema.describe(&y))
}

/// Inverse-likelihood program over `counts` (already smoothed) with the
/// sum-to-one pairs and every constraint in `constraints`.
pub fn build_program(
    schema: &Schema,
    counts: &SufficientStatistics,
    constraints: &[FairnessConstraint],
) -> Result<SignomialProgram, LearnError> {
    if let Some(what) = counts.first_zero(schema) {
        return Err(DataError::MustSmooth(what).into());
    }
    let index = ParamIndex::new(schema);
    let mut exps = Vec::with_capacity(index.len());
    for d in DecisionValue::BOTH {
        exps.push((index.prior(d), -counts.decision[d.index()]));
    }
    for (f, per_value) in counts.features.iter().enumerate() {
        for (v, pair) in per_value.iter().enumerate() {
            for d in DecisionValue::BOTH {
                exps.push((index.feature(f, v, d), -pair[d.index()]));
            }
        }
    }
    let mut program = SignomialProgram::new(index.variables(schema), Monomial::new(1.0, exps)?);

    let add_group = |program: &mut SignomialProgram, label: String, ids: Vec<usize>| -> Result<(), SolverError> {
        let sum = ids.iter().map(|&i| Monomial::var(i).scaled(1.0)).collect();
        program.add_inequality(format!("sum {label}"), Signomial::new(sum)?);
        let mut rev = vec![Monomial::constant(2.0)?.scaled(1.0)];
        rev.extend(ids.iter().map(|&i| Monomial::var(i).scaled(-1.0)));
        program.add_inequality(format!("sum {label} (reverse)"), Signomial::new(rev)?);
        Ok(())
    };
    let dec = schema.decision();
    add_group(
        &mut program,
        dec.name.clone(),
        DecisionValue::BOTH.iter().map(|&d| index.prior(d)).collect(),
    )?;
    let labels = [&dec.positive, &dec.negative];
    for (f, feature) in schema.features().iter().enumerate() {
        for d in DecisionValue::BOTH {
            add_group(
                &mut program,
                format!("{}|{}={}", feature.name, dec.name, labels[d.index()]),
                (0..feature.cardinality()).map(|v| index.feature(f, v, d)).collect(),
            )?;
        }
    }
    for c in constraints {
        let name = describe_pattern(schema, c);
        program.add_inequality(format!("fair {name} (lower)"), c.lower.clone());
        program.add_inequality(format!("fair {name} (upper)"), c.upper.clone());
    }
    Ok(program)
}

/// Settings of [`learn_fair`].
#[derive(Debug, Clone, PartialEq)]
pub struct LearnOptions {
    pub delta: f64,
    /// Constraints added per iteration at most.
    pub k: usize,
    pub ranking: Ranking,
    /// Laplace pseudo-count.
    pub alpha: f64,
    pub max_iterations: usize,
    pub solver: SolverOptions,
    /// Constraints are compiled at `δ − margin` so that solutions within the
    /// solver's feasibility tolerance are still δ-fair.
    pub margin: f64,
    /// Count the remaining discriminating patterns after each iteration by
    /// brute force (small schemas only).
    pub track_remaining: bool,
    pub miner: MinerConfig,
}

impl LearnOptions {
    pub fn new(delta: f64, k: usize, ranking: Ranking) -> Self {
        LearnOptions {
            delta,
            k,
            ranking,
            alpha: 1.0,
            max_iterations: 100,
            solver: SolverOptions::default(),
            margin: 1e-6,
            track_remaining: false,
            miner: MinerConfig::default(),
        }
    }
}

/// Outcome of [`learn_fair`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub model: NaiveBayesModel,
    pub delta: f64,
    pub k: usize,
    pub ranking: Ranking,
    pub iterations: usize,
    pub constraints_added: usize,
    /// Constraints added in each iteration.
    pub added_trace: Vec<usize>,
    /// Log-likelihood of the unsmoothed data after each iteration.
    pub log_likelihood_trace: Vec<f64>,
    /// Discriminating patterns left after each iteration, when tracked.
    pub remaining_patterns_trace: Option<Vec<u64>>,
    pub solver_status_trace: Vec<SolveStatus>,
    /// Patterns constrained, in the order they were added.
    pub constraints: Vec<PatternDocument>,
    pub fair: bool,
    /// Seconds spent in each iteration; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub wall_time_trace: Vec<f64>,
}

impl LearnReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs the cutting-plane loop on `dataset`.
pub fn learn_fair(dataset: &Dataset, options: &LearnOptions) -> Result<LearnReport, LearnError> {
    learn_fair_from_counts(dataset.schema(), &dataset.counts(), options)
}

/// [`learn_fair`] on sufficient statistics.
pub fn learn_fair_from_counts(
    schema: &Schema,
    counts: &SufficientStatistics,
    options: &LearnOptions,
) -> Result<LearnReport, LearnError> {
    let delta = options.delta;
    if delta == 0.0 {
        return Err(LearnError::UnsupportedThreshold(delta));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LearnError::InvalidThreshold(delta));
    }
    if options.k == 0 {
        return Err(LearnError::InvalidK);
    }
    let enforced = delta - options.margin;
    if enforced.is_nan() || enforced <= 0.0 {
        return Err(LearnError::InvalidThreshold(enforced));
    }
    let smoothed = counts.smoothed(options.alpha);
    let index = ParamIndex::new(schema);
    let mut values = index.values_of(&fit(schema, counts, options.alpha)?);
    let mut solver = options.solver;
    let mut constraints: Vec<FairnessConstraint> = Vec::new();
    let mut seen: BTreeSet<(Bindings, Bindings)> = BTreeSet::new();
    let mut documents = Vec::new();
    let mut report = LearnReport {
        model: fit(schema, counts, options.alpha)?,
        delta,
        k: options.k,
        ranking: options.ranking,
        iterations: 0,
        constraints_added: 0,
        added_trace: Vec::new(),
        log_likelihood_trace: Vec::new(),
        remaining_patterns_trace: options.track_remaining.then(Vec::new),
        solver_status_trace: Vec::new(),
        constraints: Vec::new(),
        fair: false,
        wall_time_trace: Vec::new(),
    };

    while report.iterations < options.max_iterations {
        let started = Instant::now();
        report.iterations += 1;
        let program = build_program(schema, &smoothed, &constraints)?;
        let init = index.renormalize(&values);
        let solution = solve(&program, &init, &solver)?;
        if solution.status == SolveStatus::InfeasibleAtTolerance {
            let residuals = program.inequality_residuals(&solution.values)?;
            let active = program
                .inequalities
                .iter()
                .zip(residuals)
                .filter(|(_, r)| *r > -solver.feasibility_tolerance)
                .map(|(c, r)| format!("{} ({r:+.3e})", c.label))
                .collect();
            return Err(LearnError::Infeasible {
                max_violation: solution.max_violation,
                active,
            });
        }
        report.solver_status_trace.push(solution.status);
        values = solution.values;
        let model = index.model_from(schema, &values)?;
        report.log_likelihood_trace.push(model.log_likelihood(counts)?);
        if let Some(trace) = report.remaining_patterns_trace.as_mut() {
            let remaining = brute_force_patterns(&model, delta, crate::miner::DEFAULT_BRUTE_FORCE_CAP)?
                .iter()
                .filter(|p| p.is_discriminating(delta))
                .count();
            trace.push(remaining as u64);
        }

        let miner = Miner::with_config(&model, &options.miner)?;
        let found = miner.mine_topk(delta, options.k, options.ranking)?;
        report.model = model;
        let mut added = 0;
        for p in &found.patterns {
            let key = (p.x.bindings().to_vec(), p.y.bindings().to_vec());
            if seen.insert(key) {
                constraints.push(compile_constraint(schema, &p.x, &p.y, enforced)?);
                documents.push(p.to_document(schema));
                added += 1;
            }
        }
        report.added_trace.push(added);
        report.constraints_added += added;
        report.wall_time_trace.push(started.elapsed().as_secs_f64());
        if found.patterns.is_empty() {
            report.fair = true;
            break;
        }
        if added == 0 {
            // Only already-constrained patterns came back: they sit on the
            // threshold within solver tolerance, so solve more tightly.
            solver.feasibility_tolerance *= 0.1;
        }
    }
    report.constraints = documents;
    Ok(report)
}

/// Model in which every sensitive feature is independent of the decision,
/// with all other parameters at their smoothed maximum-likelihood values.
pub fn independent_baseline(
    schema: &Schema,
    counts: &SufficientStatistics,
    alpha: f64,
) -> Result<NaiveBayesModel, LearnError> {
    let ml = fit(schema, counts, alpha)?;
    let cpts = ml
        .cpts()
        .iter()
        .enumerate()
        .map(|(f, cpt)| {
            if !schema.is_sensitive(f) {
                return cpt.clone();
            }
            let per_value = &counts.features[f];
            let k = per_value.len() as f64;
            let total: f64 = per_value.iter().map(|p| p[0] + p[1]).sum::<f64>() + alpha * k;
            let marginal: Vec<f64> = per_value.iter().map(|p| (p[0] + p[1] + alpha) / total).collect();
            Cpt {
                feature: cpt.feature.clone(),
                positive: marginal.clone(),
                negative: marginal,
            }
        })
        .collect();
    Ok(NaiveBayesModel::new(schema.clone(), ml.prior(), cpts)?)
}
