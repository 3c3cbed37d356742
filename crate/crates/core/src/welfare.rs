//! Social welfare, optimal welfare under general utilities, and liquid welfare.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{Allocation, OutcomeRecord, Valuation, WeightedOutcome};
use crate::par;
use crate::utility::{Utility, UtilityModel};

/// A player's valuation together with the utility model applied to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Player {
    pub valuation: Valuation,
    pub model: UtilityModel,
}

impl Player {
    pub fn new(valuation: Valuation, model: UtilityModel) -> Self {
        Player { valuation, model }
    }

    pub fn single(value: f64, model: UtilityModel) -> Self {
        Player::new(Valuation::single(value), model)
    }

    pub fn quasilinear(value: f64) -> Self {
        Player::single(value, UtilityModel::Quasilinear)
    }

    pub fn validate(&self) -> Result<()> {
        self.valuation.validate()?;
        self.model.validate()
    }

    /// Utility of receiving `allocation` at `payment`.
    pub fn utility(&self, allocation: Allocation, payment: f64) -> Result<Utility> {
        let v = self.valuation.value(allocation);
        self.model.eval_with_reference(v, payment, self.valuation.reference())
    }
}

/// Payment grid used by the OPT searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaymentGrid {
    pub points: usize,
    /// Golden-section refinement around the best grid point.
    pub refine: bool,
}

impl Default for PaymentGrid {
    fn default() -> Self {
        PaymentGrid { points: 512, refine: true }
    }
}

impl PaymentGrid {
    pub fn coarse(points: usize) -> Self {
        PaymentGrid { points, refine: false }
    }

    fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::InvalidParameter("payment grid needs at least two points".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub sw: Utility,
    pub value_welfare: f64,
    pub opt: f64,
    pub opt_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub liquid_opt: Option<f64>,
}

/// Argmax of an OPT search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub value: f64,
    pub allocation: Vec<Allocation>,
    pub payments: Vec<f64>,
    /// Change in `value` when the payment grid is doubled.
    pub grid_delta: f64,
}

/// `Σ u_i + Σ p_i` for one outcome; infeasible if any player's payment
/// breaks her budget.
pub fn social_welfare(players: &[Player], outcome: &OutcomeRecord) -> Result<Utility> {
    check_arity(players.len(), outcome.allocation.len())?;
    check_arity(players.len(), outcome.payments.len())?;
    let mut total = 0.0;
    for (i, p) in players.iter().enumerate() {
        match p.utility(outcome.allocation[i], outcome.payments[i])? {
            Utility::Finite(u) => total += u + outcome.payments[i],
            Utility::Infeasible => return Ok(Utility::Infeasible),
        }
    }
    Ok(Utility::Finite(total))
}

/// Expected social welfare of an outcome distribution.
pub fn expected_social_welfare(players: &[Player], outcomes: &[WeightedOutcome]) -> Result<Utility> {
    let mut total = 0.0;
    for o in outcomes {
        let rec = OutcomeRecord { allocation: o.allocation.clone(), payments: o.payments.clone() };
        match social_welfare(players, &rec)? {
            Utility::Finite(sw) => total += o.probability * sw,
            Utility::Infeasible => return Ok(Utility::Infeasible),
        }
    }
    Ok(Utility::Finite(total))
}

/// `Σ v_i(x_i)`.
pub fn value_welfare(players: &[Player], allocation: &[Allocation]) -> f64 {
    players.iter().zip(allocation).map(|(p, &x)| p.valuation.value(x)).sum()
}

fn check_arity(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::WrongArity { expected, got });
    }
    Ok(())
}

/// Every way to hand a single item to one of `n` players.
pub fn single_item_outcomes(n: usize) -> Vec<Vec<Allocation>> {
    (0..n)
        .map(|w| (0..n).map(|i| if i == w { Some(0) } else { None }).collect())
        .collect()
}

/// Every feasible assignment of two items to two unit-demand players.
pub fn two_item_outcomes() -> Vec<Vec<Allocation>> {
    let opts = [None, Some(0), Some(1)];
    let mut out = Vec::new();
    for a in opts {
        for b in opts {
            if a.is_none() || a != b {
                out.push(vec![a, b]);
            }
        }
    }
    out
}

/// `ÔPT = max_x Σ v_i(x)`.
pub fn opt_hat(players: &[Player], outcomes: &[Vec<Allocation>]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomeSpace);
    }
    Ok(outcomes
        .iter()
        .map(|x| value_welfare(players, x))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Maximizes `objective(p)` over `[0, hi]`: grid scan, then golden-section
/// search inside the bracket around the best grid point. The objectives used
/// here are concave in `p`.
fn maximize_payment<F>(objective: F, hi: f64, grid: PaymentGrid) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    if hi <= 0.0 {
        return Ok((objective(0.0)?, 0.0));
    }
    let n = grid.points;
    let step = hi / (n - 1) as f64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut best_k = 0;
    for k in 0..n {
        let p = if k + 1 == n { hi } else { k as f64 * step };
        let val = objective(p)?;
        if val > best.0 {
            best = (val, p);
            best_k = k;
        }
    }
    if !grid.refine {
        return Ok(best);
    }
    let mut a = best_k.saturating_sub(1) as f64 * step;
    let mut b = ((best_k + 1).min(n - 1) as f64 * step).min(hi);
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = objective(c)?;
    let mut fd = objective(d)?;
    for _ in 0..80 {
        if (b - a) <= 1e-15 * hi.max(1.0) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = objective(d)?;
        }
    }
    for (val, p) in [(fc, c), (fd, d)] {
        if val > best.0 {
            best = (val, p);
        }
    }
    Ok(best)
}

/// `max_p u(x, p) + p` over `p ∈ [0, min(v(x), B)]`, the per-player part of
/// OPT for a fixed allocation.
fn best_surplus(player: &Player, x: Allocation, grid: PaymentGrid) -> Result<(f64, f64)> {
    let v = player.valuation.value(x);
    let hi = v.min(player.model.budget()).max(0.0);
    if player.model.unbudgeted() == &UtilityModel::Quasilinear {
        // u + p = v exactly; avoid rounding in (v - p) + p
        return Ok((v, 0.0));
    }
    maximize_payment(|p| Ok(player.utility(x, p)?.or_neg_infinity() + p), hi, grid)
}

fn best_liquid(player: &Player, x: Allocation, grid: PaymentGrid) -> Result<(f64, f64)> {
    let v = player.valuation.value(x);
    let b = player.model.budget();
    let hi = v.min(b).max(0.0);
    if player.model.unbudgeted() == &UtilityModel::Quasilinear {
        return Ok((v.min(b), 0.0));
    }
    maximize_payment(|p| Ok((player.utility(x, p)?.or_neg_infinity() + p).min(b)), hi, grid)
}

type Surplus = fn(&Player, Allocation, PaymentGrid) -> Result<(f64, f64)>;

fn separable_max(
    players: &[Player],
    outcomes: &[Vec<Allocation>],
    grid: PaymentGrid,
    surplus: Surplus,
) -> Result<(f64, usize, Vec<f64>)> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomeSpace);
    }
    grid.validate()?;
    for x in outcomes {
        check_arity(players.len(), x.len())?;
    }
    let per_outcome = par::map(outcomes, |x| -> Result<(f64, Vec<f64>)> {
        let mut total = 0.0;
        let mut pays = Vec::with_capacity(players.len());
        for (p, &xi) in players.iter().zip(x) {
            let (s, pay) = surplus(p, xi, grid)?;
            total += s;
            pays.push(pay);
        }
        Ok((total, pays))
    });
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for (k, r) in per_outcome.into_iter().enumerate() {
        let (v, pays) = r?;
        if best.as_ref().map_or(true, |b| v > b.0) {
            best = Some((v, k, pays));
        }
    }
    Ok(best.expect("outcome space is non-empty"))
}

fn opt_with_delta(
    players: &[Player],
    outcomes: &[Vec<Allocation>],
    grid: PaymentGrid,
    surplus: Surplus,
) -> Result<OptResult> {
    let (value, k, payments) = separable_max(players, outcomes, grid, surplus)?;
    let fine = PaymentGrid { points: 2 * grid.points, ..grid };
    let (fine_value, _, _) = separable_max(players, outcomes, fine, surplus)?;
    Ok(OptResult {
        value,
        allocation: outcomes[k].clone(),
        payments,
        grid_delta: (fine_value - value).abs(),
    })
}

/// `max_{x,p} SW(x, p)`, searching payments in `[0, v_i(x)]` per player.
pub fn optimal_welfare(players: &[Player], outcomes: &[Vec<Allocation>], grid: PaymentGrid) -> Result<OptResult> {
    opt_with_delta(players, outcomes, grid, best_surplus)
}

/// `max_{x,p} Σ min(u_i + p_i, B_i)`.
pub fn liquid_welfare(players: &[Player], outcomes: &[Vec<Allocation>], grid: PaymentGrid) -> Result<OptResult> {
    opt_with_delta(players, outcomes, grid, best_liquid)
}

/// Welfare accounting for one realized outcome.
pub fn welfare_report(
    players: &[Player],
    outcome: &OutcomeRecord,
    outcomes: &[Vec<Allocation>],
    grid: PaymentGrid,
    with_liquid: bool,
) -> Result<WelfareReport> {
    let liquid_opt = if with_liquid { Some(liquid_welfare(players, outcomes, grid)?.value) } else { None };
    Ok(WelfareReport {
        sw: social_welfare(players, outcome)?,
        value_welfare: value_welfare(players, &outcome.allocation),
        opt: optimal_welfare(players, outcomes, grid)?.value,
        opt_hat: opt_hat(players, outcomes)?,
        liquid_opt,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub opt: f64,
    pub opt_hat: f64,
    pub upper_holds: bool,
    pub lower_holds: bool,
}

impl Lemma1Report {
    pub fn passed(&self) -> bool {
        self.upper_holds && self.lower_holds
    }
}

/// Checks `ÔPT <= OPT <= 2 ÔPT + 1e-9`.
pub fn check_lemma1(players: &[Player], outcomes: &[Vec<Allocation>], grid: PaymentGrid) -> Result<Lemma1Report> {
    let opt = optimal_welfare(players, outcomes, grid)?.value;
    let hat = opt_hat(players, outcomes)?;
    Ok(Lemma1Report {
        opt,
        opt_hat: hat,
        upper_holds: opt <= 2.0 * hat + 1e-9,
        lower_holds: opt >= hat - 1e-12 * hat.max(1.0),
    })
}
