//! Independent oracles shared by the integration tests.
//!
//! Everything here recomputes quantities directly in probability space,
//! without the log-odds machinery used by the library.

#![allow(dead_code)]

use fairnb::model::{Assignment, DecisionValue, NaiveBayesModel};
use rand::Rng;

/// `(feature, value)` pairs of one assignment.
pub type Bindings = Vec<(usize, usize)>;

/// `P(d, e)` and `P(d̄, e)` as plain products.
pub fn joint_pair(model: &NaiveBayesModel, e: &[(usize, usize)]) -> (f64, f64) {
    let mut pos = model.prior();
    let mut neg = 1.0 - model.prior();
    for &(f, v) in e {
        pos *= model.param(f, v, DecisionValue::Positive);
        neg *= model.param(f, v, DecisionValue::Negative);
    }
    (pos, neg)
}

pub fn posterior(model: &NaiveBayesModel, e: &[(usize, usize)]) -> f64 {
    let (p, n) = joint_pair(model, e);
    p / (p + n)
}

/// `Δ(x, y)` from two direct posteriors.
pub fn delta(model: &NaiveBayesModel, x: &[(usize, usize)], y: &[(usize, usize)]) -> f64 {
    let xy: Vec<_> = x.iter().chain(y).copied().collect();
    posterior(model, &xy) - posterior(model, y)
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let m = 0.5 * (a + b);
    let candidates = [(a, f(a)), (b, f(b)), (m, f(m))];
    candidates
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap()
}

/// Divergence score by numerically minimising the KL objective over every
/// mass shift `r` that makes the pattern δ-fair.
pub fn divergence_numeric(
    model: &NaiveBayesModel,
    x: &[(usize, usize)],
    y: &[(usize, usize)],
    delta_threshold: f64,
) -> f64 {
    let xy: Vec<_> = x.iter().chain(y).copied().collect();
    let (p_dxy, p_nxy) = joint_pair(model, &xy);
    let (p_dy, p_ny) = joint_pair(model, y);
    let p_xy = p_dxy + p_nxy;
    let p_y = p_dy + p_ny;
    let d = p_dxy / p_xy - p_dy / p_y;
    if d.abs() <= delta_threshold {
        return 0.0;
    }
    let g = |r: f64| -> f64 {
        let a = p_dxy + r;
        let b = p_nxy - r;
        if a <= 0.0 || b <= 0.0 {
            return f64::INFINITY;
        }
        p_dxy * (p_dxy / a).ln() + p_nxy * (p_nxy / b).ln()
    };
    // Moving r from d̄xy to dxy changes Δ by r (1/P(xy) − 1/P(y)).
    let slope = 1.0 / p_xy - 1.0 / p_y;
    let lo = ((-delta_threshold - d) / slope).max(-p_dxy);
    let hi = ((delta_threshold - d) / slope).min(p_nxy);
    golden_section(g, lo, hi, 1e-14).1
}

/// Role of a variable in a random search prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    X(usize),
    Y(usize),
    Excluded,
    Free,
}

/// Draws a random prefix `(x, y, excluded)`.
pub fn random_prefix<R: Rng>(rng: &mut R, model: &NaiveBayesModel) -> Vec<Role> {
    let schema = model.schema();
    (0..schema.feature_count())
        .map(|f| {
            let k = schema.cardinality(f);
            match rng.gen_range(0..4) {
                0 if schema.is_sensitive(f) => Role::X(rng.gen_range(0..k)),
                1 => Role::Y(rng.gen_range(0..k)),
                2 => Role::Excluded,
                _ => Role::Free,
            }
        })
        .collect()
}

pub fn split_roles(roles: &[Role]) -> (Assignment, Assignment, Vec<usize>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut excluded = Vec::new();
    for (f, r) in roles.iter().enumerate() {
        match *r {
            Role::X(v) => x.push((f, v)),
            Role::Y(v) => y.push((f, v)),
            Role::Excluded => excluded.push(f),
            Role::Free => {}
        }
    }
    (
        Assignment::new(x).unwrap(),
        Assignment::new(y).unwrap(),
        excluded,
    )
}

/// Every extension `(x x', y y')` of a prefix over its free variables, as raw
/// binding lists. Extensions with empty `x x'` are skipped.
pub fn extensions(
    model: &NaiveBayesModel,
    roles: &[Role],
) -> Vec<(Bindings, Bindings)> {
    let mut out = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (f, r) in roles.iter().enumerate() {
        match *r {
            Role::X(v) => x.push((f, v)),
            Role::Y(v) => y.push((f, v)),
            _ => {}
        }
    }
    fn rec(
        model: &NaiveBayesModel,
        roles: &[Role],
        f: usize,
        x: &mut Vec<(usize, usize)>,
        y: &mut Vec<(usize, usize)>,
        out: &mut Vec<(Bindings, Bindings)>,
    ) {
        let schema = model.schema();
        if f == roles.len() {
            if !x.is_empty() {
                out.push((x.clone(), y.clone()));
            }
            return;
        }
        if roles[f] != Role::Free {
            rec(model, roles, f + 1, x, y, out);
            return;
        }
        rec(model, roles, f + 1, x, y, out);
        for v in 0..schema.cardinality(f) {
            if schema.is_sensitive(f) {
                x.push((f, v));
                rec(model, roles, f + 1, x, y, out);
                x.pop();
            }
            y.push((f, v));
            rec(model, roles, f + 1, x, y, out);
            y.pop();
        }
    }
    rec(model, roles, 0, &mut x, &mut y, &mut out);
    out
}

/// Every candidate pattern of a model, with `(x, y, Δ)` computed directly.
pub fn all_patterns(
    model: &NaiveBayesModel,
) -> Vec<(Bindings, Bindings, f64)> {
    let roles = vec![Role::Free; model.schema().feature_count()];
    extensions(model, &roles)
        .into_iter()
        .map(|(x, y)| {
            let d = delta(model, &x, &y);
            (x, y, d)
        })
        .collect()
}
