//! Closed-form scores and admissible bounds used to prune the pattern search.
//!
//! Everything here works with posterior log-odds. Writing `t = logit P(d | y)`
//! and `ρ = ln(P(x|d) / P(x|d̄))`, the degree of discrimination of `(x, y)` is
//! `σ(t + ρ) − σ(t)`, which is the relaxation `Δ̃(α, β, γ)` with `γ = σ(t)`.
//! Its stationary point is `t* = −ρ/2`, where it takes the value `tanh(ρ/4)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{log_sigmoid, logit, sigmoid};
use crate::model::{Assignment, DecisionValue, ModelError, NaiveBayesModel};

/// Absolute slack used when comparing scores against bounds or thresholds.
pub const BOUND_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("P(x|d) and P(x|d̄) are both zero; P(d | x y) is undefined")]
    UndefinedQuery,
    #[error("invalid interval [{lower}, {upper}]")]
    InvalidInterval { lower: f64, upper: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate pattern: x is implied by y, so P(x y) = P(y)")]
    DegeneratePattern,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

/// Extremum of `Δ̃(α, β, ·)` over an interval of `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaTildeExtremum {
    pub gamma_opt: f64,
    pub value: f64,
    /// The optimum sits on the interval boundary instead of the interior
    /// stationary point.
    pub clamped: bool,
}

/// Interval `[lower, upper]` on a signed score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBound {
    pub lower: f64,
    pub upper: f64,
}

impl ScoreBound {
    /// Largest absolute score inside the interval.
    pub fn max_abs(&self) -> f64 {
        self.lower.abs().max(self.upper.abs())
    }

    pub fn contains(&self, value: f64, tol: f64) -> bool {
        value >= self.lower - tol && value <= self.upper + tol
    }
}

fn check_unit(name: &str, v: f64) -> Result<(), BoundsError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(BoundsError::InvalidArgument(format!("{name} = {v} is outside [0, 1]")));
    }
    Ok(())
}

/// `Δ̃(α, β, γ) = αγ / (αγ + β(1−γ)) − γ`.
pub fn delta_tilde(alpha: f64, beta: f64, gamma: f64) -> Result<f64, BoundsError> {
    check_unit("alpha", alpha)?;
    check_unit("beta", beta)?;
    check_unit("gamma", gamma)?;
    if alpha == 0.0 && beta == 0.0 {
        return Err(BoundsError::UndefinedQuery);
    }
    if alpha == beta {
        return Ok(0.0);
    }
    if alpha == 0.0 {
        return Ok(-gamma);
    }
    if beta == 0.0 {
        return Ok(1.0 - gamma);
    }
    Ok(delta_tilde_log_odds(alpha.ln() - beta.ln(), logit(gamma)))
}

/// `Δ̃` in log-odds form: `σ(t + ρ) − σ(t)` for `ρ = ln(α/β)` and `t = logit γ`.
#[inline]
pub fn delta_tilde_log_odds(log_ratio: f64, log_odds: f64) -> f64 {
    if log_odds.is_infinite() {
        return 0.0;
    }
    sigmoid(log_odds + log_ratio) - sigmoid(log_odds)
}

/// Extremum over a log-odds interval `[lo, hi]`; returns `(t_opt, value, clamped)`.
pub(crate) fn extremum_log_odds(
    log_ratio: f64,
    lo: f64,
    hi: f64,
    direction: Direction,
) -> (f64, f64, bool) {
    if log_ratio == 0.0 {
        return (lo, 0.0, false);
    }
    // Concave (positive) for ρ > 0 and convex (negative) for ρ < 0; only the
    // matching direction has an interior optimum.
    let interior = match direction {
        Direction::Max => log_ratio > 0.0,
        Direction::Min => log_ratio < 0.0,
    };
    if interior {
        let t_star = -0.5 * log_ratio;
        if t_star < lo {
            (lo, delta_tilde_log_odds(log_ratio, lo), true)
        } else if t_star > hi {
            (hi, delta_tilde_log_odds(log_ratio, hi), true)
        } else {
            (t_star, (0.25 * log_ratio).tanh(), false)
        }
    } else {
        let at_lo = delta_tilde_log_odds(log_ratio, lo);
        let at_hi = delta_tilde_log_odds(log_ratio, hi);
        let pick_lo = match direction {
            Direction::Max => at_lo >= at_hi,
            Direction::Min => at_lo <= at_hi,
        };
        if pick_lo {
            (lo, at_lo, true)
        } else {
            (hi, at_hi, true)
        }
    }
}

/// Minimises or maximises `Δ̃(α, β, γ)` over `γ ∈ [l, u]`.
pub fn delta_tilde_extremum(
    alpha: f64,
    beta: f64,
    l: f64,
    u: f64,
    direction: Direction,
) -> Result<DeltaTildeExtremum, BoundsError> {
    check_unit("alpha", alpha)?;
    check_unit("beta", beta)?;
    check_unit("l", l)?;
    check_unit("u", u)?;
    if l > u {
        return Err(BoundsError::InvalidInterval { lower: l, upper: u });
    }
    if alpha == 0.0 && beta == 0.0 {
        return Err(BoundsError::UndefinedQuery);
    }
    if alpha == beta {
        return Ok(DeltaTildeExtremum {
            gamma_opt: l,
            value: 0.0,
            clamped: false,
        });
    }
    if alpha == 0.0 || beta == 0.0 {
        // Δ̃ is −γ or 1−γ: decreasing, so the max is at l and the min at u.
        let gamma = match direction {
            Direction::Max => l,
            Direction::Min => u,
        };
        let value = if alpha == 0.0 { -gamma } else { 1.0 - gamma };
        return Ok(DeltaTildeExtremum {
            gamma_opt: gamma,
            value,
            clamped: true,
        });
    }
    let (t, value, clamped) =
        extremum_log_odds(alpha.ln() - beta.ln(), logit(l), logit(u), direction);
    let gamma_opt = if clamped {
        if t == logit(l) {
            l
        } else {
            u
        }
    } else {
        sigmoid(t)
    };
    Ok(DeltaTildeExtremum {
        gamma_opt,
        value,
        clamped,
    })
}

/// Completion of `free` that maximises (or minimises) `P(d | fixed ∪ result)`,
/// chosen one variable at a time by the likelihood ratio `P(v|d)/P(v|d̄)`.
/// Ties go to the lowest value index.
pub fn extremal_extension(
    model: &NaiveBayesModel,
    fixed: &Assignment,
    free: &[usize],
    direction: Direction,
) -> Result<Assignment, BoundsError> {
    model.schema().check_assignment(fixed)?;
    let mut bindings = Vec::with_capacity(free.len());
    for &f in free {
        if f >= model.schema().feature_count() {
            return Err(ModelError::InvalidQuery(format!("variable index {f} is not a feature")).into());
        }
        if fixed.binds(f) {
            return Err(BoundsError::InvalidArgument(format!(
                "free variable `{}` is already fixed",
                model.schema().feature(f).name
            )));
        }
        bindings.push((f, extremal_value(model, f, direction)));
    }
    Ok(Assignment::new(bindings)?)
}

/// Value of `feature` with the largest (or smallest) likelihood ratio.
pub(crate) fn extremal_value(model: &NaiveBayesModel, feature: usize, direction: Direction) -> usize {
    let k = model.schema().cardinality(feature);
    let mut best = 0;
    let mut best_lr = model.log_ratio(feature, 0);
    for v in 1..k {
        let lr = model.log_ratio(feature, v);
        let better = match direction {
            Direction::Max => lr > best_lr,
            Direction::Min => lr < best_lr,
        };
        if better {
            best = v;
            best_lr = lr;
        }
    }
    best
}

/// Per-feature summaries the bounds need, precomputed once per model.
#[derive(Debug, Clone)]
pub(crate) struct FeatureExtremes {
    pub max_lr: f64,
    pub min_lr: f64,
    /// `ln min_v P(v|·)` for `[d, d̄]`.
    pub log_min: [f64; 2],
    /// `ln max_v P(v|·)` for `[d, d̄]`.
    pub log_max: [f64; 2],
}

impl FeatureExtremes {
    pub fn of(model: &NaiveBayesModel, f: usize) -> Self {
        let k = model.schema().cardinality(f);
        let mut e = FeatureExtremes {
            max_lr: f64::NEG_INFINITY,
            min_lr: f64::INFINITY,
            log_min: [f64::INFINITY; 2],
            log_max: [f64::NEG_INFINITY; 2],
        };
        for v in 0..k {
            let lr = model.log_ratio(f, v);
            e.max_lr = e.max_lr.max(lr);
            e.min_lr = e.min_lr.min(lr);
            for dv in DecisionValue::BOTH {
                let lp = model.log_param(f, v, dv);
                let c = dv.index();
                e.log_min[c] = e.log_min[c].min(lp);
                e.log_max[c] = e.log_max[c].max(lp);
            }
        }
        e
    }

    pub fn all(model: &NaiveBayesModel) -> Vec<Self> {
        (0..model.schema().feature_count())
            .map(|f| FeatureExtremes::of(model, f))
            .collect()
    }
}

/// Sufficient summary of a search prefix `(x, y)` and its free variables for
/// evaluating every bound in constant time.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PrefixStats {
    pub log_prior: [f64; 2],
    /// `Σ_x ln P(x_i | ·)`.
    pub x_log: [f64; 2],
    /// `Σ_y ln P(y_i | ·)`.
    pub y_log: [f64; 2],
    pub x_nonempty: bool,
    /// Sums over the variables of `x` of their min / max log-ratio.
    pub x_min_lr: f64,
    pub x_max_lr: f64,
    /// Sums over all free variables.
    pub free_min_lr: f64,
    pub free_max_lr: f64,
    /// Sums over free sensitive variables.
    pub free_sens_min_lr: f64,
    pub free_sens_max_lr: f64,
    pub free_sens_log_min: [f64; 2],
    /// Max over free sensitive variables of `ln max_v P(v|·)`; `-inf` if none.
    pub free_sens_log_max: [f64; 2],
}

impl PrefixStats {
    pub fn from_parts(
        model: &NaiveBayesModel,
        extremes: &[FeatureExtremes],
        x: &Assignment,
        y: &Assignment,
        free: impl Iterator<Item = usize>,
    ) -> Self {
        let mut s = PrefixStats {
            log_prior: [
                model.log_prior(DecisionValue::Positive),
                model.log_prior(DecisionValue::Negative),
            ],
            x_log: [0.0; 2],
            y_log: [0.0; 2],
            x_nonempty: !x.is_empty(),
            x_min_lr: 0.0,
            x_max_lr: 0.0,
            free_min_lr: 0.0,
            free_max_lr: 0.0,
            free_sens_min_lr: 0.0,
            free_sens_max_lr: 0.0,
            free_sens_log_min: [0.0; 2],
            free_sens_log_max: [f64::NEG_INFINITY; 2],
        };
        for (f, v) in x.iter() {
            for dv in DecisionValue::BOTH {
                s.x_log[dv.index()] += model.log_param(f, v, dv);
            }
            s.x_min_lr += extremes[f].min_lr;
            s.x_max_lr += extremes[f].max_lr;
        }
        for (f, v) in y.iter() {
            for dv in DecisionValue::BOTH {
                s.y_log[dv.index()] += model.log_param(f, v, dv);
            }
        }
        for f in free {
            let e = &extremes[f];
            s.free_min_lr += e.min_lr;
            s.free_max_lr += e.max_lr;
            if model.schema().is_sensitive(f) {
                s.free_sens_min_lr += e.min_lr;
                s.free_sens_max_lr += e.max_lr;
                for c in 0..2 {
                    s.free_sens_log_min[c] += e.log_min[c];
                    s.free_sens_log_max[c] = s.free_sens_log_max[c].max(e.log_max[c]);
                }
            }
        }
        s
    }

    #[inline]
    pub fn y_log_odds(&self) -> f64 {
        self.log_prior[0] - self.log_prior[1] + self.y_log[0] - self.y_log[1]
    }

    #[inline]
    pub fn x_log_ratio(&self) -> f64 {
        self.x_log[0] - self.x_log[1]
    }

    #[inline]
    pub fn has_free_sensitive(&self) -> bool {
        self.free_sens_log_max[0] > f64::NEG_INFINITY
    }

    /// Interval on the degree of discrimination of every extension.
    pub fn discrimination_bound(&self) -> ScoreBound {
        if !self.x_nonempty && !self.has_free_sensitive() {
            return ScoreBound {
                lower: 0.0,
                upper: 0.0,
            };
        }
        let lo_y = self.y_log_odds();
        let t_lo = lo_y + self.free_min_lr;
        let t_hi = lo_y + self.free_max_lr;
        let x_lr = self.x_log_ratio();
        let (_, upper, _) =
            extremum_log_odds(x_lr + self.free_sens_max_lr, t_lo, t_hi, Direction::Max);
        let (_, lower, _) =
            extremum_log_odds(x_lr + self.free_sens_min_lr, t_lo, t_hi, Direction::Min);
        ScoreBound { lower, upper }
    }

    fn log_joint_xy(&self, c: usize) -> f64 {
        self.log_prior[c] + self.x_log[c] + self.y_log[c]
    }

    /// Divergence bound obtained from the always-feasible fair point `Δ_Q = 0`.
    pub fn fair_point_divergence_bound(&self) -> f64 {
        if !self.x_nonempty && !self.has_free_sensitive() {
            return 0.0;
        }
        let lo_y = self.y_log_odds();
        let lo_xy = lo_y + self.x_log_ratio();
        let max_xy = lo_xy + self.free_max_lr;
        let min_xy = lo_xy + self.free_min_lr;
        let max_y = lo_y + self.x_max_lr + self.free_max_lr;
        let min_y = lo_y + self.x_min_lr + self.free_min_lr;
        let pos = self.log_joint_xy(0).exp() * (log_sigmoid(max_xy) - log_sigmoid(min_y));
        let neg = self.log_joint_xy(1).exp() * (log_sigmoid(-min_xy) - log_sigmoid(-max_y));
        pos.max(0.0) + neg.max(0.0)
    }

    /// Divergence bound built from the discrimination interval.
    pub fn delta_divergence_bound(&self, delta: f64, disc: ScoreBound) -> f64 {
        let c_upper = if disc.upper > delta { delta - disc.upper } else { 0.0 };
        let c_lower = if disc.lower < -delta { -delta - disc.lower } else { 0.0 };
        if c_upper == 0.0 && c_lower == 0.0 {
            return 0.0;
        }
        let lo_y = self.y_log_odds();
        let lo_xy = lo_y + self.x_log_ratio();
        let max_xy = lo_xy + self.free_max_lr;
        let min_xy = lo_xy + self.free_min_lr;
        let gamma_lo = sigmoid(lo_y + self.free_min_lr);
        let gamma_hi = sigmoid(lo_y + self.free_max_lr);

        // Range of P(x x' | y y') = γ P(x x'|d) + (1−γ) P(x x'|d̄).
        let upper_given = |c: usize| -> f64 {
            if self.x_nonempty {
                self.x_log[c].exp()
            } else {
                self.free_sens_log_max[c].exp()
            }
        };
        let lower_given = |c: usize| -> f64 { (self.x_log[c] + self.free_sens_log_min[c]).exp() };
        let (ud, un) = (upper_given(0), upper_given(1));
        let (ld, ln) = (lower_given(0), lower_given(1));
        let mix = |g: f64, a: f64, b: f64| g * a + (1.0 - g) * b;
        let max_px = mix(gamma_lo, ud, un).max(mix(gamma_hi, ud, un)).min(1.0);
        let min_px = mix(gamma_lo, ld, ln).min(mix(gamma_hi, ld, ln)).max(0.0);

        let mut bound: f64 = 0.0;
        if c_upper < 0.0 {
            let a_max = sigmoid(max_xy) * (1.0 - min_px);
            let a_min = sigmoid(min_xy) * (1.0 - max_px);
            let denom = a_min + c_upper;
            let term = if denom <= 0.0 {
                f64::INFINITY
            } else {
                self.log_joint_xy(0).exp() * (a_max / denom).ln()
            };
            bound = bound.max(term);
        }
        if c_lower > 0.0 {
            let b_max = sigmoid(-min_xy) * (1.0 - min_px);
            let b_min = sigmoid(-max_xy) * (1.0 - max_px);
            let denom = b_min - c_lower;
            let term = if denom <= 0.0 {
                f64::INFINITY
            } else {
                self.log_joint_xy(1).exp() * (b_max / denom).ln()
            };
            bound = bound.max(term);
        }
        bound
    }
}

fn check_prefix(
    model: &NaiveBayesModel,
    x: &Assignment,
    y: &Assignment,
    excluded: &[usize],
) -> Result<Vec<usize>, BoundsError> {
    let schema = model.schema();
    schema.check_assignment(x)?;
    schema.check_assignment(y)?;
    if x.overlaps(y) {
        return Err(ModelError::InvalidPattern("x and y bind a common variable".into()).into());
    }
    if let Some(f) = x.vars().find(|&f| !schema.is_sensitive(f)) {
        return Err(ModelError::InvalidPattern(format!(
            "`{}` is not a sensitive attribute",
            schema.feature(f).name
        ))
        .into());
    }
    for &e in excluded {
        if e >= schema.feature_count() {
            return Err(ModelError::InvalidQuery(format!("variable index {e} is not a feature")).into());
        }
        if x.binds(e) || y.binds(e) {
            return Err(BoundsError::InvalidArgument(format!(
                "excluded variable `{}` is bound by the pattern",
                schema.feature(e).name
            )));
        }
    }
    Ok((0..schema.feature_count())
        .filter(|&f| !x.binds(f) && !y.binds(f) && !excluded.contains(&f))
        .collect())
}

fn prefix_stats(
    model: &NaiveBayesModel,
    x: &Assignment,
    y: &Assignment,
    excluded: &[usize],
) -> Result<PrefixStats, BoundsError> {
    let free = check_prefix(model, x, y, excluded)?;
    let extremes = FeatureExtremes::all(model);
    Ok(PrefixStats::from_parts(model, &extremes, x, y, free.into_iter()))
}

/// Bounds the degree of discrimination of every extension `(x x', y y')`
/// whose new variables avoid `excluded`. `x` may be empty (the bound then
/// covers extensions that introduce a sensitive component).
pub fn discrimination_bound(
    model: &NaiveBayesModel,
    x: &Assignment,
    y: &Assignment,
    excluded: &[usize],
) -> Result<ScoreBound, BoundsError> {
    Ok(prefix_stats(model, x, y, excluded)?.discrimination_bound())
}

/// Quantities entering the divergence score of a single pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceTerms {
    /// `P(d x y)`
    pub p_dxy: f64,
    /// `P(d̄ x y)`
    pub p_nxy: f64,
    /// `P(y)`
    pub p_y: f64,
    /// `Δ(x, y)`
    pub delta_score: f64,
    /// `P(x | y)`, kept separately for precision when it is close to 1.
    pub x_given_y: f64,
}

impl DivergenceTerms {
    pub fn new(model: &NaiveBayesModel, x: &Assignment, y: &Assignment) -> Result<Self, BoundsError> {
        let delta_score = model.discrimination_score(x, y)?;
        let xy = x.union(y)?;
        let log_dxy = model.log_joint(DecisionValue::Positive, &xy)?;
        let log_nxy = model.log_joint(DecisionValue::Negative, &xy)?;
        let log_y = model.log_marginal(y)?;
        let log_xy = crate::math::log_add_exp(log_dxy, log_nxy);
        Ok(DivergenceTerms {
            p_dxy: log_dxy.exp(),
            p_nxy: log_nxy.exp(),
            p_y: log_y.exp(),
            delta_score,
            x_given_y: (log_xy - log_y).exp(),
        })
    }

    pub fn p_xy(&self) -> f64 {
        self.p_dxy + self.p_nxy
    }

    /// `1/P(xy) − 1/P(y)`: how fast shifting mass onto `d x y` moves `Δ`.
    pub fn sensitivity(&self) -> f64 {
        1.0 / self.p_xy() - 1.0 / self.p_y
    }

    /// KL divergence after moving `r` units of mass from `d̄ x y` to `d x y`.
    pub fn g(&self, r: f64) -> f64 {
        let a = self.p_dxy + r;
        let b = self.p_nxy - r;
        if a <= 0.0 || b <= 0.0 {
            return f64::INFINITY;
        }
        self.p_dxy * (self.p_dxy / a).ln() + self.p_nxy * (self.p_nxy / b).ln()
    }

    /// Smallest mass shift that brings `|Δ|` within `delta`.
    pub fn optimal_shift(&self, delta: f64) -> Result<f64, BoundsError> {
        if self.delta_score.abs() <= delta {
            return Ok(0.0);
        }
        if self.x_given_y >= 1.0 {
            return Err(BoundsError::DegeneratePattern);
        }
        let c = if self.delta_score > delta {
            delta - self.delta_score
        } else {
            -delta - self.delta_score
        };
        Ok(c * self.p_xy() / (1.0 - self.x_given_y))
    }

    /// Divergence score `g(r*)`, evaluated in a scale-free form.
    pub fn divergence(&self, delta: f64) -> Result<f64, BoundsError> {
        if self.delta_score.abs() <= delta {
            return Ok(0.0);
        }
        let one_minus = 1.0 - self.x_given_y;
        if one_minus <= 0.0 {
            return Err(BoundsError::DegeneratePattern);
        }
        let c = if self.delta_score > delta {
            delta - self.delta_score
        } else {
            -delta - self.delta_score
        };
        let p_xy = self.p_xy();
        let pd = self.p_dxy / p_xy;
        let pn = self.p_nxy / p_xy;
        let shift_d = c / (pd * one_minus);
        let shift_n = -c / (pn * one_minus);
        if shift_d <= -1.0 || shift_n <= -1.0 {
            return Ok(f64::INFINITY);
        }
        let value = p_xy * (pd * -shift_d.ln_1p() + pn * -shift_n.ln_1p());
        Ok(value.max(0.0))
    }
}

fn check_delta(delta: f64) -> Result<(), BoundsError> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(BoundsError::InvalidArgument(format!("delta = {delta} is outside [0, 1]")));
    }
    Ok(())
}

/// Minimum KL divergence to a distribution that is fair on `(x, y)` and agrees
/// with the model everywhere outside `x y`; zero when `|Δ(x, y)| ≤ delta`.
pub fn divergence_score(
    model: &NaiveBayesModel,
    x: &Assignment,
    y: &Assignment,
    delta: f64,
) -> Result<f64, BoundsError> {
    check_delta(delta)?;
    DivergenceTerms::new(model, x, y)?.divergence(delta)
}

/// Upper bound on the divergence score of every extension of `(x, y)`, from
/// the feasible point that makes the pattern exactly fair.
pub fn divergence_bound_fair_point(
    model: &NaiveBayesModel,
    x: &Assignment,
    y: &Assignment,
) -> Result<f64, BoundsError> {
    Ok(prefix_stats(model, x, y, &[])?.fair_point_divergence_bound())
}

/// Upper bound on the divergence score of every extension of `(x, y)` that
/// avoids `excluded`, derived from the discrimination interval.
pub fn divergence_bound_delta(
    model: &NaiveBayesModel,
    x: &Assignment,
    y: &Assignment,
    excluded: &[usize],
    delta: f64,
) -> Result<f64, BoundsError> {
    check_delta(delta)?;
    let stats = prefix_stats(model, x, y, excluded)?;
    Ok(stats.delta_divergence_bound(delta, stats.discrimination_bound()))
}
