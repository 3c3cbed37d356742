//! Utility models: quasilinear, normalized risk-averse transforms, budgets,
//! and the mean minus standard deviation lottery evaluator.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A concave, non-decreasing transform `h` applied to the quasilinear term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConcaveTransform {
    /// `h(x) = x`.
    Linear,
    /// `h(x) = 1 - e^(-x)`.
    Exponential,
    /// `h(x) = x` for `x >= 0` and `slope * x` for `x < 0`.
    PiecewiseLinear { slope: f64 },
    /// Monotone piecewise-linear interpolation through `knots`, extended
    /// linearly beyond the first and last knot.
    Tabulated { knots: Vec<(f64, f64)> },
}

impl ConcaveTransform {
    pub fn piecewise(slope: f64) -> Result<Self> {
        let t = ConcaveTransform::PiecewiseLinear { slope };
        t.validate()?;
        Ok(t)
    }

    pub fn tabulated(knots: Vec<(f64, f64)>) -> Result<Self> {
        let t = ConcaveTransform::Tabulated { knots };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConcaveTransform::Linear | ConcaveTransform::Exponential => Ok(()),
            ConcaveTransform::PiecewiseLinear { slope } => {
                if slope.is_finite() && *slope >= 1.0 {
                    Ok(())
                } else {
                    Err(invalid(format!("piecewise slope must be >= 1, got {slope}")))
                }
            }
            ConcaveTransform::Tabulated { knots } => {
                if knots.len() < 2 {
                    return Err(invalid("tabulated transform needs at least two knots"));
                }
                for w in knots.windows(2) {
                    let ((x0, y0), (x1, y1)) = (w[0], w[1]);
                    if !(x0 < x1) || !(y0 <= y1) || !y0.is_finite() || !y1.is_finite() {
                        return Err(invalid(
                            "tabulated knots must have increasing x and non-decreasing h",
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ConcaveTransform::Linear => x,
            ConcaveTransform::Exponential => -(-x).exp_m1(),
            ConcaveTransform::PiecewiseLinear { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            ConcaveTransform::Tabulated { knots } => interpolate(knots, x),
        }
    }

    /// Left derivative of `h` at zero.
    pub fn left_slope_at_zero(&self) -> f64 {
        match self {
            ConcaveTransform::Linear | ConcaveTransform::Exponential => 1.0,
            ConcaveTransform::PiecewiseLinear { slope } => *slope,
            ConcaveTransform::Tabulated { knots } => {
                // slope of the segment that ends at or straddles zero from the left
                let idx = knots.partition_point(|&(x, _)| x < 0.0);
                let i = idx.clamp(1, knots.len() - 1);
                let ((x0, y0), (x1, y1)) = (knots[i - 1], knots[i]);
                (y1 - y0) / (x1 - x0)
            }
        }
    }
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    let i = knots.partition_point(|&(kx, _)| kx <= x).clamp(1, knots.len() - 1);
    let ((x0, y0), (x1, y1)) = (knots[i - 1], knots[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// How a scaled risk-averse model treats a zero reference value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroValuePolicy {
    /// Any non-zero payment at a zero reference value is a domain error.
    #[default]
    Reject,
    /// `u = -p * h'(0-)`.
    LeftSlope,
}

/// A player's utility as a function of allocation value and payment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityModel {
    Quasilinear,
    /// `u(x, p) = h(v(x) - p) * r / h(r)` where `r` is `v(x)` when positive
    /// and the player's reference (winning) value otherwise.
    ScaledRiskAverse {
        transform: ConcaveTransform,
        #[serde(default)]
        zero_value: ZeroValuePolicy,
    },
    /// `inner` while the payment fits in the budget, infeasible otherwise.
    Budgeted { inner: Box<UtilityModel>, budget: f64 },
}

/// Utility value, with an explicit marker for budget-infeasible payments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Utility {
    Finite(f64),
    Infeasible,
}

impl Utility {
    pub fn finite(self) -> Option<f64> {
        match self {
            Utility::Finite(u) => Some(u),
            Utility::Infeasible => None,
        }
    }

    pub fn is_infeasible(self) -> bool {
        matches!(self, Utility::Infeasible)
    }

    /// `-inf` for infeasible outcomes; for inequality checks only.
    pub fn or_neg_infinity(self) -> f64 {
        self.finite().unwrap_or(f64::NEG_INFINITY)
    }
}

impl UtilityModel {
    pub fn risk_averse(transform: ConcaveTransform) -> Self {
        UtilityModel::ScaledRiskAverse { transform, zero_value: ZeroValuePolicy::Reject }
    }

    pub fn exponential() -> Self {
        Self::risk_averse(ConcaveTransform::Exponential)
    }

    pub fn budgeted(inner: UtilityModel, budget: f64) -> Self {
        UtilityModel::Budgeted { inner: Box::new(inner), budget }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            UtilityModel::Quasilinear => Ok(()),
            UtilityModel::ScaledRiskAverse { transform, .. } => transform.validate(),
            UtilityModel::Budgeted { inner, budget } => {
                if budget.is_nan() || *budget < 0.0 {
                    return Err(invalid(format!("budget must be non-negative, got {budget}")));
                }
                inner.validate()
            }
        }
    }

    /// The budget this model enforces (`+inf` when unconstrained).
    pub fn budget(&self) -> f64 {
        match self {
            UtilityModel::Budgeted { inner, budget } => budget.min(inner.budget()),
            _ => f64::INFINITY,
        }
    }

    /// The model with any budget wrappers removed.
    pub fn unbudgeted(&self) -> &UtilityModel {
        match self {
            UtilityModel::Budgeted { inner, .. } => inner.unbudgeted(),
            m => m,
        }
    }

    /// Utility of an outcome worth `value` at payment `payment`, normalized by
    /// the outcome's own value.
    pub fn eval(&self, value: f64, payment: f64) -> Result<Utility> {
        self.eval_with_reference(value, payment, value)
    }

    /// Utility where a zero-value outcome (losing) is normalized by
    /// `reference`, the player's value for winning.
    pub fn eval_with_reference(&self, value: f64, payment: f64, reference: f64) -> Result<Utility> {
        if !payment.is_finite() {
            return Err(invalid(format!("payment must be finite, got {payment}")));
        }
        match self {
            UtilityModel::Quasilinear => Ok(Utility::Finite(value - payment)),
            UtilityModel::ScaledRiskAverse { transform, zero_value } => {
                let scale = if value > 0.0 { value } else { reference };
                if scale > 0.0 {
                    let u = transform.eval(value - payment) * scale / transform.eval(scale);
                    return Ok(Utility::Finite(u));
                }
                if payment == 0.0 {
                    return Ok(Utility::Finite(value.max(0.0)));
                }
                match zero_value {
                    ZeroValuePolicy::Reject => Err(Error::UtilityDomain { value, payment }),
                    ZeroValuePolicy::LeftSlope => {
                        Ok(Utility::Finite(-payment * transform.left_slope_at_zero()))
                    }
                }
            }
            UtilityModel::Budgeted { inner, budget } => {
                if payment > *budget {
                    Ok(Utility::Infeasible)
                } else {
                    inner.eval_with_reference(value, payment, reference)
                }
            }
        }
    }
}

/// Which normalization property failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationProperty {
    Monotonicity,
    ZeroAtFullPayment,
    ValueAtZeroPayment,
    RelaxedConcavity,
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationViolation {
    pub property: NormalizationProperty,
    pub value: f64,
    pub payment: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NormalizationReport {
    Pass { points_checked: usize },
    Violation(NormalizationViolation),
}

impl NormalizationReport {
    pub fn passed(&self) -> bool {
        matches!(self, NormalizationReport::Pass { .. })
    }
}

const NORMALIZATION_TOL: f64 = 1e-12;

/// Checks the four normalization properties of `model` on a value × payment grid.
pub fn check_normalization(model: &UtilityModel, values: &[f64], payments: &[f64]) -> NormalizationReport {
    check_normalization_with(
        |v, p| model.eval(v, p).ok().and_then(Utility::finite),
        values,
        payments,
    )
}

/// Same as [`check_normalization`] for an arbitrary utility function of
/// `(value, payment)`; `None` marks an undefined point.
///
/// Points are visited value by value in ascending payment order, with `p = v`
/// inserted when it is not already on the grid; the first failure is returned.
pub fn check_normalization_with<F>(utility: F, values: &[f64], payments: &[f64]) -> NormalizationReport
where
    F: Fn(f64, f64) -> Option<f64>,
{
    let mut sorted: Vec<f64> = payments.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut checked = 0;
    for &v in values {
        let mut ps = sorted.clone();
        if !ps.contains(&v) {
            let at = ps.partition_point(|&p| p < v);
            ps.insert(at, v);
        }
        let tol = NORMALIZATION_TOL * v.abs().max(1.0);
        let mut prev: Option<f64> = None;
        for &p in &ps {
            checked += 1;
            let violation = |property, utility| {
                NormalizationReport::Violation(NormalizationViolation { property, value: v, payment: p, utility })
            };
            let Some(u) = utility(v, p) else {
                return violation(NormalizationProperty::Undefined, f64::NAN);
            };
            if let Some(prev_u) = prev {
                if u > prev_u + tol {
                    return violation(NormalizationProperty::Monotonicity, u);
                }
            }
            prev = Some(u);
            if p == 0.0 && (u - v).abs() > tol {
                return violation(NormalizationProperty::ValueAtZeroPayment, u);
            }
            let quasi = v - p;
            let ok = if (0.0..=v).contains(&p) { u >= quasi - tol } else { u <= quasi + tol };
            if !ok {
                return violation(NormalizationProperty::RelaxedConcavity, u);
            }
            if p == v && u.abs() > tol {
                return violation(NormalizationProperty::ZeroAtFullPayment, u);
            }
        }
    }
    NormalizationReport::Pass { points_checked: checked }
}

/// Pointwise `min{v(x), B(x)}` over outcomes.
pub fn cap_valuation(values: &[f64], budgets: &[f64]) -> Result<Vec<f64>> {
    if values.len() != budgets.len() {
        return Err(Error::WrongArity { expected: values.len(), got: budgets.len() });
    }
    values
        .iter()
        .zip(budgets)
        .map(|(&v, &b)| {
            if v < 0.0 || b < 0.0 || v.is_nan() || b.is_nan() {
                Err(invalid(format!("capping needs non-negative inputs, got v={v}, B={b}")))
            } else {
                Ok(v.min(b))
            }
        })
        .collect()
}

/// A finite lottery over money amounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lottery {
    outcomes: Vec<(f64, f64)>,
}

impl Lottery {
    /// Builds a lottery from `(probability, value)` pairs.
    pub fn new(outcomes: Vec<(f64, f64)>) -> Result<Self> {
        let mut total = 0.0;
        for &(p, x) in &outcomes {
            if !(p >= 0.0) || !x.is_finite() {
                return Err(invalid(format!("bad lottery outcome ({p}, {x})")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("lottery probabilities sum to {total}")));
        }
        Ok(Lottery { outcomes })
    }

    pub fn certain(x: f64) -> Self {
        Lottery { outcomes: vec![(1.0, x)] }
    }

    pub fn outcomes(&self) -> &[(f64, f64)] {
        &self.outcomes
    }

    pub fn mean(&self) -> f64 {
        self.outcomes.iter().map(|&(p, x)| p * x).sum()
    }

    pub fn variance(&self) -> Result<f64> {
        moments_variance(&self.outcomes)
    }
}

/// `E[x^2] - E[x]^2` with a guard for rounding below zero.
pub(crate) fn moments_variance(outcomes: &[(f64, f64)]) -> Result<f64> {
    let (mut m1, mut m2) = (0.0, 0.0);
    for &(p, x) in outcomes {
        m1 += p * x;
        m2 += p * x * x;
    }
    let var = m2 - m1 * m1;
    if var >= 0.0 {
        Ok(var)
    } else if var >= -1e-12 {
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance(var))
    }
}

/// `E[l] - gamma * sd(l)`.
pub fn variance_adjusted(lottery: &Lottery, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let mean = lottery.mean();
    if gamma == 0.0 {
        return Ok(mean);
    }
    Ok(mean - gamma * lottery.variance()?.sqrt())
}
