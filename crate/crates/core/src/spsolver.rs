//! Local solver for signomial programs
//!
//! ```text
//! minimize    f0(x)                  (monomial)
//! subject to  f_i(x) <= 1            (signomials)
//!             g_j(x)  = 1            (monomials)
//!             x > 0, optionally x <= upper
//! ```
//!
//! The solver works in log variables `u = ln x`, where monomials are affine.
//! A signomial constraint `p(x) − q(x) ≤ 1`, with `p` and `q` posynomials, is
//! written as `ln p(u) − ln(1 + q(u)) ≤ 0`: a convex part minus a convex part.
//! Each barrier stage runs damped Newton steps on the exact second-order model
//! when it is positive definite on the equality null space, and otherwise on a
//! shifted or condensed (convex) model. The line search always uses the exact
//! functions.
//!
//! Inequalities are elastic: violations are charged an exact penalty whose
//! slack is eliminated in closed form, so every barrier subproblem has a
//! strictly feasible point. Pairs of the form `p ≤ 1`, `c − (c − 1)·p ≤ 1`
//! pin `p` to one and are solved as the equality `ln p(u) = 0`, together with
//! the monomial equalities, through a Newton–KKT system and an ℓ1 merit.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid initial point: {0}")]
    InvalidInit(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// A signed term `c · Π x_i^{a_i}` (positive `c` for a monomial).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coefficient: f64,
    /// Variable index → exponent; zero exponents are omitted.
    pub exponents: BTreeMap<usize, f64>,
}

impl Term {
    fn check(&self, n: usize) -> Result<(), SolverError> {
        if !self.coefficient.is_finite() || self.coefficient == 0.0 {
            return Err(SolverError::InvalidProgram(format!(
                "coefficient {} must be finite and nonzero",
                self.coefficient
            )));
        }
        for (&v, &a) in &self.exponents {
            if v >= n {
                return Err(SolverError::Schema(format!("undeclared variable index {v}")));
            }
            if !a.is_finite() {
                return Err(SolverError::InvalidProgram(format!("exponent {a} is not finite")));
            }
        }
        Ok(())
    }

    fn log_magnitude(&self, values: &[f64]) -> Result<f64, SolverError> {
        let mut acc = self.coefficient.abs().ln();
        for (&v, &a) in &self.exponents {
            let x = *values
                .get(v)
                .ok_or_else(|| SolverError::Schema(format!("no value for variable index {v}")))?;
            if x.is_nan() || x <= 0.0 {
                return Err(SolverError::InvalidInit(format!("variable {v} = {x} is not positive")));
            }
            acc += a * x.ln();
        }
        Ok(acc)
    }

    /// `c · Π x_i^{a_i}`.
    pub fn evaluate(&self, values: &[f64]) -> Result<f64, SolverError> {
        Ok(self.coefficient.signum() * self.log_magnitude(values)?.exp())
    }
}

/// A monomial `c · Π x_i^{a_i}` with `c > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Term", into = "Term")]
pub struct Monomial(Term);

impl TryFrom<Term> for Monomial {
    type Error = SolverError;
    fn try_from(t: Term) -> Result<Self, Self::Error> {
        Monomial::new(t.coefficient, t.exponents)
    }
}

impl From<Monomial> for Term {
    fn from(m: Monomial) -> Self {
        m.0
    }
}

impl Monomial {
    pub fn new(
        coefficient: f64,
        exponents: impl IntoIterator<Item = (usize, f64)>,
    ) -> Result<Self, SolverError> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(SolverError::InvalidProgram(format!(
                "monomial coefficient {coefficient} must be positive"
            )));
        }
        let mut map = BTreeMap::new();
        for (v, a) in exponents {
            *map.entry(v).or_insert(0.0) += a;
        }
        map.retain(|_, a| *a != 0.0);
        Ok(Monomial(Term {
            coefficient,
            exponents: map,
        }))
    }

    /// The constant `c`.
    pub fn constant(c: f64) -> Result<Self, SolverError> {
        Monomial::new(c, [])
    }

    /// The single variable `x_v`.
    pub fn var(v: usize) -> Self {
        Monomial::new(1.0, [(v, 1.0)]).expect("unit monomial")
    }

    pub fn coefficient(&self) -> f64 {
        self.0.coefficient
    }

    pub fn exponents(&self) -> &BTreeMap<usize, f64> {
        &self.0.exponents
    }

    pub fn term(&self) -> &Term {
        &self.0
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let exps = self
            .0
            .exponents
            .iter()
            .chain(&other.0.exponents)
            .map(|(&v, &a)| (v, a));
        Monomial::new(self.0.coefficient * other.0.coefficient, exps).expect("product of monomials")
    }

    pub fn powf(&self, p: f64) -> Monomial {
        Monomial::new(
            self.0.coefficient.powf(p),
            self.0.exponents.iter().map(|(&v, &a)| (v, a * p)),
        )
        .expect("power of a monomial")
    }

    /// Signed multiple, as a signomial term.
    pub fn scaled(&self, c: f64) -> Term {
        Term {
            coefficient: self.0.coefficient * c,
            exponents: self.0.exponents.clone(),
        }
    }

    pub fn evaluate(&self, values: &[f64]) -> Result<f64, SolverError> {
        self.0.evaluate(values)
    }

    /// `ln` of the value, exact for values that overflow `f64`.
    pub fn log_evaluate(&self, values: &[f64]) -> Result<f64, SolverError> {
        self.0.log_magnitude(values)
    }
}

/// A sum of signed terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signomial {
    pub terms: Vec<Term>,
}

impl Signomial {
    pub fn new(terms: Vec<Term>) -> Result<Self, SolverError> {
        if terms.is_empty() {
            return Err(SolverError::InvalidProgram("a signomial needs at least one term".into()));
        }
        Ok(Signomial { terms })
    }

    /// Sum of the terms, each evaluated in log space.
    pub fn evaluate(&self, values: &[f64]) -> Result<f64, SolverError> {
        let mut pos = 0.0;
        let mut neg = 0.0;
        for t in &self.terms {
            let v = t.log_magnitude(values)?.exp();
            if t.coefficient > 0.0 {
                pos += v;
            } else {
                neg += v;
            }
        }
        Ok(pos - neg)
    }
}

/// A positive variable, optionally bounded above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub upper: Option<f64>,
}

/// Named signomial constraint `lhs ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub label: String,
    pub lhs: Signomial,
}

/// Named monomial constraint `lhs = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equality {
    pub label: String,
    pub lhs: Monomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignomialProgram {
    pub variables: Vec<Variable>,
    pub objective: Monomial,
    pub inequalities: Vec<Inequality>,
    pub equalities: Vec<Equality>,
}

impl SignomialProgram {
    pub fn new(variables: Vec<Variable>, objective: Monomial) -> Self {
        SignomialProgram {
            variables,
            objective,
            inequalities: Vec::new(),
            equalities: Vec::new(),
        }
    }

    pub fn add_inequality(&mut self, label: impl Into<String>, lhs: Signomial) {
        self.inequalities.push(Inequality {
            label: label.into(),
            lhs,
        });
    }

    pub fn add_equality(&mut self, label: impl Into<String>, lhs: Monomial) {
        self.equalities.push(Equality {
            label: label.into(),
            lhs,
        });
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Checks that every expression references declared variables.
    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.variables.len();
        self.objective.0.check(n)?;
        for c in &self.inequalities {
            if c.lhs.terms.is_empty() {
                return Err(SolverError::InvalidProgram(format!("constraint `{}` is empty", c.label)));
            }
            for t in &c.lhs.terms {
                t.check(n)?;
            }
        }
        for e in &self.equalities {
            e.lhs.0.check(n)?;
        }
        for v in &self.variables {
            if let Some(u) = v.upper {
                if u.is_nan() || u <= 0.0 {
                    return Err(SolverError::InvalidProgram(format!(
                        "upper bound {u} of `{}` must be positive",
                        v.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Residual `f_i(x) − 1` of every inequality.
    pub fn inequality_residuals(&self, values: &[f64]) -> Result<Vec<f64>, SolverError> {
        self.inequalities
            .iter()
            .map(|c| Ok(c.lhs.evaluate(values)? - 1.0))
            .collect()
    }

    /// Largest violation over inequalities, equalities and upper bounds.
    pub fn max_violation(&self, values: &[f64]) -> Result<f64, SolverError> {
        let mut worst: f64 = 0.0;
        for r in self.inequality_residuals(values)? {
            worst = worst.max(r);
        }
        for e in &self.equalities {
            worst = worst.max((e.lhs.evaluate(values)? - 1.0).abs());
        }
        for (v, x) in self.variables.iter().zip(values) {
            if let Some(u) = v.upper {
                worst = worst.max(x - u);
            }
        }
        Ok(worst)
    }

    fn format_term(&self, out: &mut String, t: &Term, first: bool) {
        let c = t.coefficient;
        if first {
            let _ = write!(out, "{c}");
        } else if c < 0.0 {
            let _ = write!(out, " - {}", -c);
        } else {
            let _ = write!(out, " + {c}");
        }
        for (&v, &a) in &t.exponents {
            let _ = write!(out, "*{}^{a}", self.variables[v].name);
        }
    }

    /// Plain-text dump: one line per constraint, terms as `coef*var^exp*…`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str("variables:");
        for v in &self.variables {
            match v.upper {
                Some(u) => {
                    let _ = write!(out, " {}<={u}", v.name);
                }
                None => {
                    let _ = write!(out, " {}", v.name);
                }
            }
        }
        out.push_str("\nminimize: ");
        self.format_term(&mut out, self.objective.term(), true);
        out.push('\n');
        for c in &self.inequalities {
            let _ = write!(out, "{}: ", c.label);
            for (i, t) in c.lhs.terms.iter().enumerate() {
                self.format_term(&mut out, t, i == 0);
            }
            out.push_str(" <= 1\n");
        }
        for e in &self.equalities {
            let _ = write!(out, "{}: ", e.label);
            self.format_term(&mut out, e.lhs.term(), true);
            out.push_str(" = 1\n");
        }
        out
    }
}

impl fmt::Display for SignomialProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

/// Smallest trust-region radius reached by shrinking.
const MIN_TRUST_RADIUS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Largest accepted constraint residual.
    pub feasibility_tolerance: f64,
    /// Newton steps shorter than this (in `‖Δu‖∞`) count as converged.
    pub step_tolerance: f64,
    /// Cap on outer iterations (barrier stages, each re-solved after condensation).
    pub max_outer_iterations: usize,
    /// Cap on Newton steps within one stage.
    pub max_newton_steps: usize,
    /// Initial exact-penalty weight, relative to the normalised objective.
    pub initial_penalty: f64,
    /// Largest penalty tried before reporting infeasibility.
    pub max_penalty: f64,
    /// Barrier parameter of the first stage. Warm starts near the optimum can
    /// skip the early, loosely centred stages by starting higher.
    pub initial_barrier_weight: f64,
    /// Factor applied to the barrier parameter after each stage.
    pub barrier_decrease: f64,
    /// Stop once the barrier gap falls below this.
    pub gap_tolerance: f64,
    /// Initial trust-region radius on `‖Δu‖∞`.
    pub trust_radius: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feasibility_tolerance: 1e-6,
            step_tolerance: 1e-8,
            max_outer_iterations: 200,
            max_newton_steps: 100,
            initial_penalty: 1e3,
            max_penalty: 1e12,
            initial_barrier_weight: 1.0,
            barrier_decrease: 0.2,
            gap_tolerance: 1e-11,
            trust_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    InfeasibleAtTolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub values: Vec<f64>,
    /// `ln f0(x)`; the objective itself over- or underflows on realistic counts.
    pub log_objective: f64,
    pub max_violation: f64,
    /// Outer iterations (barrier stages).
    pub iterations: usize,
    pub newton_steps: usize,
    pub status: SolveStatus,
    /// Log objective of the incumbent after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Penalty weight in force at the end.
    pub penalty: f64,
}

impl Solution {
    pub fn objective(&self) -> f64 {
        self.log_objective.exp()
    }

    pub fn named_values(&self, program: &SignomialProgram) -> BTreeMap<String, f64> {
        program
            .variables
            .iter()
            .zip(&self.values)
            .map(|(v, &x)| (v.name.clone(), x))
            .collect()
    }
}

/// Term in log space: `ln c + a·u`.
#[derive(Debug, Clone)]
struct LogTerm {
    log_coef: f64,
    exps: Vec<(usize, f64)>,
}

impl LogTerm {
    fn from_term(t: &Term) -> Self {
        LogTerm {
            log_coef: t.coefficient.abs().ln(),
            exps: t.exponents.iter().map(|(&v, &a)| (v, a)).collect(),
        }
    }

    fn value(&self, u: &[f64]) -> f64 {
        self.log_coef + self.exps.iter().map(|&(v, a)| a * u[v]).sum::<f64>()
    }
}

/// `ln Σ exp(term)` with gradient and (optionally) Hessian.
struct Lse {
    value: f64,
    grad: Vec<f64>,
}

fn lse(terms: &[LogTerm], constant_one: bool, u: &[f64], hess: Option<(&mut DMatrix<f64>, f64)>) -> Lse {
    let n = u.len();
    let mut z: Vec<f64> = terms.iter().map(|t| t.value(u)).collect();
    if constant_one {
        z.push(0.0);
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let value = max + total.ln();
    let mut grad = vec![0.0; n];
    for (t, wk) in terms.iter().zip(&w) {
        let p = wk / total;
        for &(v, a) in &t.exps {
            grad[v] += p * a;
        }
    }
    if let Some((h, scale)) = hess {
        // Σ p_k a_k a_kᵀ − g gᵀ
        for (t, wk) in terms.iter().zip(&w) {
            let p = scale * wk / total;
            for &(i, ai) in &t.exps {
                for &(j, aj) in &t.exps {
                    h[(i, j)] += p * ai * aj;
                }
            }
        }
        let nz: Vec<usize> = (0..n).filter(|&i| grad[i] != 0.0).collect();
        for &i in &nz {
            for &j in &nz {
                h[(i, j)] -= scale * grad[i] * grad[j];
            }
        }
    }
    Lse { value, grad }
}

/// `ln p(u) − ln(1 + q(u))` for one inequality.
#[derive(Debug, Clone)]
struct LogConstraint {
    pos: Vec<LogTerm>,
    neg: Vec<LogTerm>,
}

impl LogConstraint {
    fn value(&self, u: &[f64]) -> f64 {
        lse(&self.pos, false, u, None).value - lse(&self.neg, true, u, None).value
    }
}

/// Exact-penalty barrier for one elastic constraint `f ≤ s`, `s ≥ 0`, with
/// the slack minimised out: `ψ(f) = min_s a s − ln(s − f) − ln s`.
/// Returns `(ψ, ψ', ψ'')`.
fn elastic_barrier(f: f64, a: f64) -> (f64, f64, f64) {
    let af = a * f;
    let root = (af * af + 4.0).sqrt();
    let gap = if af > 0.0 {
        (2.0 + 4.0 / (root + af)) / (2.0 * a)
    } else {
        (2.0 - af + root) / (2.0 * a)
    };
    let s = if f >= 0.0 { gap + f } else { 1.0 / (a - 1.0 / gap) };
    let psi = a * s - gap.ln() - s.ln();
    let d1 = 1.0 / gap;
    let ig2 = 1.0 / (gap * gap);
    let is2 = 1.0 / (s * s);
    // ψ'' = (1 − ds/df)/gap², with 1 − ds/df written without cancellation.
    let d2 = is2 / (ig2 + is2) * ig2;
    (psi, d1, d2)
}

struct Compiled {
    n: usize,
    objective: Vec<f64>,
    objective_scale: f64,
    constraints: Vec<LogConstraint>,
    /// `ln p(u) = 0` for posynomials `p`; monomial equalities are the
    /// single-term case and are affine.
    equalities: Vec<Vec<LogTerm>>,
    upper: Vec<Option<f64>>,
}

/// Terms of a posynomial `p` keyed for exact comparison.
fn term_key(terms: &[&Term], scale: f64) -> Vec<(u64, Vec<(usize, u64)>)> {
    let mut key: Vec<_> = terms
        .iter()
        .map(|t| {
            (
                (t.coefficient.abs() / scale).to_bits(),
                t.exponents.iter().map(|(&v, &a)| (v, a.to_bits())).collect(),
            )
        })
        .collect();
    key.sort();
    key
}

/// Finds inequality pairs `p ≤ 1`, `c − (c − 1) p ≤ 1` that together pin the
/// posynomial `p` to one. Returns `(upper, reverse)` index pairs.
fn pinned_pairs(program: &SignomialProgram) -> Vec<(usize, usize)> {
    let mut uppers = std::collections::HashMap::new();
    for (i, c) in program.inequalities.iter().enumerate() {
        if c.lhs.terms.iter().all(|t| t.coefficient > 0.0) {
            let terms: Vec<&Term> = c.lhs.terms.iter().collect();
            uppers.entry(term_key(&terms, 1.0)).or_insert(i);
        }
    }
    let mut pairs = Vec::new();
    let mut used = vec![false; program.inequalities.len()];
    for (j, c) in program.inequalities.iter().enumerate() {
        let constants: Vec<&Term> = c
            .lhs
            .terms
            .iter()
            .filter(|t| t.coefficient > 0.0)
            .collect();
        let [constant] = constants.as_slice() else {
            continue;
        };
        if !constant.exponents.is_empty() || constant.coefficient <= 1.0 {
            continue;
        }
        let negative: Vec<&Term> = c.lhs.terms.iter().filter(|t| t.coefficient < 0.0).collect();
        if negative.is_empty() {
            continue;
        }
        let key = term_key(&negative, constant.coefficient - 1.0);
        if let Some(&i) = uppers.get(&key) {
            if !used[i] && !used[j] {
                used[i] = true;
                used[j] = true;
                pairs.push((i, j));
            }
        }
    }
    pairs
}

impl Compiled {
    fn new(program: &SignomialProgram) -> Self {
        let n = program.variables.len();
        let mut objective = vec![0.0; n];
        for (&v, &a) in program.objective.exponents() {
            objective[v] += a;
        }
        let norm: f64 = objective.iter().map(|a| a.abs()).sum();
        let objective_scale = if norm > 0.0 { norm } else { 1.0 };
        for a in &mut objective {
            *a /= objective_scale;
        }
        let pairs = pinned_pairs(program);
        let mut skip = vec![false; program.inequalities.len()];
        let mut equalities: Vec<Vec<LogTerm>> = Vec::new();
        for &(i, j) in &pairs {
            skip[i] = true;
            skip[j] = true;
            equalities.push(program.inequalities[i].lhs.terms.iter().map(LogTerm::from_term).collect());
        }
        for e in &program.equalities {
            equalities.push(vec![LogTerm::from_term(e.lhs.term())]);
        }
        let constraints = program
            .inequalities
            .iter()
            .zip(&skip)
            .filter(|(_, s)| !**s)
            .filter_map(|(c, _)| {
                let pos: Vec<LogTerm> = c
                    .lhs
                    .terms
                    .iter()
                    .filter(|t| t.coefficient > 0.0)
                    .map(LogTerm::from_term)
                    .collect();
                let neg: Vec<LogTerm> = c
                    .lhs
                    .terms
                    .iter()
                    .filter(|t| t.coefficient < 0.0)
                    .map(LogTerm::from_term)
                    .collect();
                // Without positive terms the constraint holds everywhere.
                (!pos.is_empty()).then_some(LogConstraint { pos, neg })
            })
            .collect();
        let mut upper: Vec<Option<f64>> = program.variables.iter().map(|v| v.upper.map(f64::ln)).collect();
        // A pinned posynomial `Σ c_k x_k^{a_k} = 1` already keeps each of its
        // single-variable terms below one, so the matching box bound is implied.
        for &(i, _) in &pairs {
            for t in &program.inequalities[i].lhs.terms {
                if let [(v, a)] = t.exponents.iter().map(|(&v, &a)| (v, a)).collect::<Vec<_>>()[..] {
                    if a > 0.0 {
                        let implied = -t.coefficient.ln() / a;
                        if upper[v].is_some_and(|b| implied <= b) {
                            upper[v] = None;
                        }
                    }
                }
            }
        }
        Compiled {
            n,
            objective,
            objective_scale,
            constraints,
            equalities,
            upper,
        }
    }

    fn barrier_count(&self) -> f64 {
        (2 * self.constraints.len() + self.upper.iter().filter(|u| u.is_some()).count()) as f64
    }

    fn inside_box(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(&self.upper)
            .all(|(x, ub)| ub.is_none_or(|b| *x < b))
    }

    fn equality_residuals(&self, u: &[f64]) -> Vec<f64> {
        self.equalities
            .iter()
            .map(|terms| lse(terms, false, u, None).value)
            .collect()
    }

    /// Barrier merit `t·c·u + Σ ψ(f_i) − Σ ln(1 − x/upper)`; `None` outside the box.
    fn merit(&self, u: &[f64], t: f64, penalty: f64) -> Option<f64> {
        if !self.inside_box(u) {
            return None;
        }
        let mut m = t * self.objective.iter().zip(u).map(|(c, x)| c * x).sum::<f64>();
        for c in &self.constraints {
            m += elastic_barrier(c.value(u), t * penalty).0;
        }
        for (x, ub) in u.iter().zip(&self.upper) {
            if let Some(b) = ub {
                m -= (-(x - b).exp_m1()).ln();
            }
        }
        Some(m)
    }

    /// Gradient of the barrier merit, the convex and concave parts of its
    /// Hessian (the exact Hessian is their difference, with the concave parts
    /// coming from the condensed `1 + q` terms), the equality residuals and
    /// their Jacobian. Equality curvature enters with the multipliers `nu`.
    fn model(&self, u: &[f64], t: f64, penalty: f64, nu: &[f64]) -> Model {
        let n = self.n;
        let mut g = DVector::from_iterator(n, self.objective.iter().map(|c| t * c));
        let mut convex = DMatrix::zeros(n, n);
        let mut concave = DMatrix::zeros(n, n);
        for c in &self.constraints {
            let f = c.value(u);
            let (_, d1, d2) = elastic_barrier(f, t * penalty);
            let p = lse(&c.pos, false, u, Some((&mut convex, d1)));
            let q = lse(&c.neg, true, u, Some((&mut concave, d1)));
            let grad: Vec<f64> = p.grad.iter().zip(&q.grad).map(|(a, b)| a - b).collect();
            let nz: Vec<usize> = (0..n).filter(|&i| grad[i] != 0.0).collect();
            for &i in &nz {
                g[i] += d1 * grad[i];
                for &j in &nz {
                    convex[(i, j)] += d2 * grad[i] * grad[j];
                }
            }
        }
        for (i, ub) in self.upper.iter().enumerate() {
            if let Some(b) = ub {
                // −ln(1 − w) with w = x / upper = e^{u − b}
                let w = (u[i] - b).exp();
                let gap = -(u[i] - b).exp_m1();
                g[i] += w / gap;
                convex[(i, i)] += w / (gap * gap);
            }
        }
        let m = self.equalities.len();
        let mut jac = DMatrix::zeros(m, n);
        let mut residual = DVector::zeros(m);
        for (r, terms) in self.equalities.iter().enumerate() {
            // Multipliers of the wrong sign would add negative curvature.
            let weight = nu.get(r).copied().unwrap_or(0.0).max(0.0);
            let h = lse(terms, false, u, (weight > 0.0).then_some((&mut convex, weight)));
            residual[r] = h.value;
            for (i, gi) in h.grad.iter().enumerate() {
                jac[(r, i)] = *gi;
            }
        }
        Model {
            g,
            convex,
            concave,
            jac,
            residual,
        }
    }

    /// Least-squares equality multipliers `argmin ‖g + Jᵀν‖`.
    fn multiplier_estimate(&self, u: &[f64], t: f64, penalty: f64) -> Vec<f64> {
        let model = self.model(u, t, penalty, &[]);
        let jjt = &model.jac * model.jac.transpose();
        let rhs = -(&model.jac * &model.g);
        match jjt.lu().solve(&rhs) {
            Some(nu) if nu.iter().all(|v| v.is_finite()) => nu.iter().copied().collect(),
            _ => vec![0.0; self.equalities.len()],
        }
    }

    /// Whether `h` is positive definite on the null space of `jac`.
    fn positive_definite(&self, h: &DMatrix<f64>, jac: &DMatrix<f64>) -> bool {
        let n = self.n;
        let max_diag = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max);
        let mut test = h.clone();
        if jac.nrows() > 0 {
            test += jac.transpose() * jac * (1.0 + max_diag);
        }
        for i in 0..n {
            test[(i, i)] += 1e-13 * (1.0 + max_diag);
        }
        test.cholesky().is_some()
    }

    /// Exact Hessian, shifted towards positive definiteness when needed, or
    /// the condensed (convex) model when no small shift suffices.
    fn curvature(&self, model: &Model) -> DMatrix<f64> {
        let exact = &model.convex - &model.concave;
        if self.positive_definite(&exact, &model.jac) {
            return exact;
        }
        let n = self.n;
        let max_diag = (0..n).map(|i| model.convex[(i, i)].abs()).fold(0.0, f64::max);
        let mut shift = 1e-8 * (1.0 + max_diag);
        while shift < max_diag {
            let mut h = exact.clone();
            for i in 0..n {
                h[(i, i)] += shift;
            }
            if self.positive_definite(&h, &model.jac) {
                return h;
            }
            shift *= 10.0;
        }
        model.convex.clone()
    }

    /// `x − Jᵀ(J Jᵀ)⁻¹ h(x)`: a least-norm step cancelling the equality
    /// residuals at `x` to first order, with `J` taken from the current point.
    fn second_order_correction(&self, jac: &DMatrix<f64>, x: &[f64]) -> Option<Vec<f64>> {
        if jac.nrows() == 0 {
            return None;
        }
        let residual = DVector::from_vec(self.equality_residuals(x));
        let y = (jac * jac.transpose()).cholesky()?.solve(&residual);
        let step = jac.transpose() * y;
        Some(x.iter().zip(step.iter()).map(|(v, s)| v - s).collect())
    }

    /// Newton step `d` with `J d = −h` and the new equality multipliers.
    fn direction(&self, model: &Model, h: &DMatrix<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = self.n;
        let m = model.jac.nrows();
        let max_diag = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max);
        let mut reg = 1e-12 * (1.0 + max_diag);
        for _ in 0..12 {
            let mut hr = h.clone();
            for i in 0..n {
                hr[(i, i)] += reg;
            }
            if m == 0 {
                if let Some(ch) = hr.cholesky() {
                    return Some((ch.solve(&(-&model.g)), DVector::zeros(0)));
                }
            } else {
                let mut kkt = DMatrix::zeros(n + m, n + m);
                kkt.view_mut((0, 0), (n, n)).copy_from(&hr);
                kkt.view_mut((n, 0), (m, n)).copy_from(&model.jac);
                kkt.view_mut((0, n), (n, m)).copy_from(&model.jac.transpose());
                let mut rhs = DVector::zeros(n + m);
                rhs.rows_mut(0, n).copy_from(&(-&model.g));
                rhs.rows_mut(n, m).copy_from(&(-&model.residual));
                let lu = kkt.clone().lu();
                if let Some(mut sol) = lu.solve(&rhs) {
                    // The system mixes O(t) curvature with O(1) Jacobian rows;
                    // a few rounds of iterative refinement recover the digits
                    // the factorisation loses.
                    for _ in 0..3 {
                        let r = &rhs - &kkt * &sol;
                        match lu.solve(&r) {
                            Some(c) => sol += c,
                            None => break,
                        }
                    }
                    if sol.iter().all(|v| v.is_finite()) {
                        return Some((sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()));
                    }
                }
            }
            reg *= 100.0;
        }
        None
    }
}

struct Model {
    g: DVector<f64>,
    convex: DMatrix<f64>,
    concave: DMatrix<f64>,
    jac: DMatrix<f64>,
    residual: DVector<f64>,
}

/// Solves `program` locally from `init` (strictly positive, equalities within 1e-3).
pub fn solve(
    program: &SignomialProgram,
    init: &[f64],
    options: &SolverOptions,
) -> Result<Solution, SolverError> {
    program.validate()?;
    let n = program.variables.len();
    if init.len() != n {
        return Err(SolverError::InvalidInit(format!(
            "{} initial values for {n} variables",
            init.len()
        )));
    }
    if let Some((i, x)) = init.iter().enumerate().find(|(_, x)| !(**x > 0.0 && x.is_finite())) {
        return Err(SolverError::InvalidInit(format!(
            "`{}` = {x} is not strictly positive",
            program.variables[i].name
        )));
    }
    for e in &program.equalities {
        let r = e.lhs.log_evaluate(init)?;
        if r.abs() > 1e-3 {
            return Err(SolverError::InvalidInit(format!(
                "equality `{}` is off by {r:e} in log terms",
                e.label
            )));
        }
    }
    let compiled = Compiled::new(program);
    let mut u: Vec<f64> = init.iter().map(|x| x.ln()).collect();
    for (i, ub) in compiled.upper.iter().enumerate() {
        if let Some(b) = ub {
            if u[i] >= *b {
                u[i] = b - 1e-6;
            }
        }
    }

    let values = |u: &[f64]| -> Vec<f64> { u.iter().map(|x| x.exp()).collect() };
    let log_objective = |x: &[f64]| -> Result<f64, SolverError> { program.objective.log_evaluate(x) };

    // Incumbent: best point meeting the feasibility tolerance.
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let consider = |x: Vec<f64>, incumbent: &mut Option<(f64, Vec<f64>)>| -> Result<(), SolverError> {
        if program.max_violation(&x)? <= options.feasibility_tolerance {
            let obj = log_objective(&x)?;
            if incumbent.as_ref().is_none_or(|(best, _)| obj < *best) {
                *incumbent = Some((obj, x));
            }
        }
        Ok(())
    };
    consider(init.to_vec(), &mut incumbent)?;

    let scale = compiled.objective_scale;
    let mut penalty = options.initial_penalty;
    let mut t = options.initial_barrier_weight;
    let mut radius = options.trust_radius;
    let mut nu = vec![0.0; compiled.equalities.len()];
    let mut rho = 1.0;
    let mut iterations = 0;
    let mut newton_steps = 0;
    let mut trace = Vec::new();
    let mut status = SolveStatus::IterationLimit;
    let l1 = |r: &[f64]| r.iter().map(|v| v.abs()).sum::<f64>();

    'outer: while iterations < options.max_outer_iterations {
        iterations += 1;
        // One barrier stage: damped Newton with per-step condensation.
        let violation_before = program.max_violation(&values(&u))?;
        let mut stalled = false;
        let mut centered = false;
        for _ in 0..options.max_newton_steps {
            if newton_steps == 0 && !nu.is_empty() {
                nu = compiled.multiplier_estimate(&u, t, penalty);
            }
            let model = compiled.model(&u, t, penalty, &nu);
            let h = compiled.curvature(&model);
            let Some((mut d, new_nu)) = compiled.direction(&model, &h) else {
                return Err(SolverError::Numerical("singular Newton system".into()));
            };
            let decrement = d.dot(&(&h * &d));
            let infeasibility = model.residual.amax();
            if !decrement.is_finite() {
                return Err(SolverError::Numerical("non-finite Newton decrement".into()));
            }
            nu = new_nu.iter().copied().collect();
            // Centred once the model predicts less than 1e-12 of (normalised)
            // objective to gain.
            if decrement <= 2e-12 * t.max(1.0) && d.amax() <= 1e-5 && infeasibility <= 1e-12 {
                centered = true;
                break;
            }
            // ℓ1 merit: the penalty must dominate the equality multipliers.
            let max_nu = new_nu.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if rho < 1.5 * max_nu {
                rho = 2.0 * max_nu;
            }
            let norm = d.amax();
            if norm > radius {
                d *= radius / norm;
            }
            let current_h = l1(model.residual.as_slice());
            let slope = model.g.dot(&d) - rho * current_h * (d.amax() / norm.max(f64::MIN_POSITIVE));
            if slope >= 0.0 {
                // Rounding in the KKT solve dominates: no descent left to find.
                stalled = true;
                break;
            }
            let current = compiled.merit(&u, t, penalty).expect("iterate stays inside the box") + rho * current_h;
            // Merits grow with t; allow for rounding in the comparison.
            let noise = 1e-14 * (current.abs() + 1.0);
            let merit_at = |x: &[f64]| {
                compiled
                    .merit(x, t, penalty)
                    .map(|m| m + rho * l1(&compiled.equality_residuals(x)))
            };
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = u.iter().zip(d.iter()).map(|(x, s)| x + alpha * s).collect();
                let target = current + 1e-4 * alpha * slope + noise;
                if merit_at(&trial).is_some_and(|m| m <= target) {
                    accepted = Some(trial);
                    break;
                }
                if alpha == 1.0 {
                    // The ℓ1 merit can reject good full steps because of the
                    // curvature of the equalities; retry with a second-order
                    // correction back towards the constraint manifold.
                    if let Some(corrected) = compiled.second_order_correction(&model.jac, &trial) {
                        if merit_at(&corrected).is_some_and(|m| m <= target) {
                            accepted = Some(corrected);
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            newton_steps += 1;
            let Some(next) = accepted else {
                stalled = true;
                break;
            };
            let step = alpha * d.amax();
            u = next;
            if step < options.step_tolerance {
                // A full short step means the stage is centred; a heavily
                // damped one means the merit is flat to working precision.
                if alpha == 1.0 {
                    centered = true;
                } else {
                    stalled = true;
                }
                break;
            }
        }
        // Condensation is only locally valid: if the stage made the
        // constraints worse, take shorter steps in the next one.
        let violation = program.max_violation(&values(&u))?;
        if violation > violation_before && violation > options.feasibility_tolerance {
            radius = (radius * 0.5).max(MIN_TRUST_RADIUS);
        } else {
            radius = options.trust_radius;
        }
        consider(values(&u), &mut incumbent)?;
        trace.push(incumbent.as_ref().map_or(f64::NAN, |(o, _)| *o));

        let gap = compiled.barrier_count() / t;
        if (gap <= options.gap_tolerance && centered) || stalled {
            let violation = program.max_violation(&values(&u))?;
            if violation <= options.feasibility_tolerance {
                status = SolveStatus::Converged;
                break 'outer;
            }
            if penalty >= options.max_penalty {
                status = SolveStatus::InfeasibleAtTolerance;
                break 'outer;
            }
            penalty = (penalty * 10.0).min(options.max_penalty);
            continue;
        }
        if centered || gap > options.gap_tolerance {
            t = (t / options.barrier_decrease).min(compiled.barrier_count() / options.gap_tolerance);
        }
    }

    let last = values(&u);
    let last_violation = program.max_violation(&last)?;
    let last_obj = log_objective(&last)?;
    // Prefer the final iterate unless it is worse than the incumbent by more
    // than rounding in the scaled objective.
    let (values, log_objective) = match incumbent {
        Some((obj, x)) if last_violation > options.feasibility_tolerance || last_obj > obj + 1e-10 * scale => {
            (x, obj)
        }
        _ => (last, last_obj),
    };
    let max_violation = program.max_violation(&values)?;
    if status == SolveStatus::IterationLimit && max_violation > options.feasibility_tolerance {
        status = SolveStatus::InfeasibleAtTolerance;
    }
    Ok(Solution {
        values,
        log_objective,
        max_violation,
        iterations,
        newton_steps,
        status,
        objective_trace: trace,
        penalty,
    })
}
