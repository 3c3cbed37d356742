//! Smoothness certificates on finite type and bid grids, PoA bounds, and the
//! quasilinear-to-risk-averse and budget transfers.

use serde::{Deserialize, Serialize};

use crate::equilibria::view_moments;
use crate::error::{Error, Result};
use crate::mechanisms::{for_each_profile, willingness_to_pay, Action, Mechanism, MechanismKind};
use crate::par;
use crate::quadrature::adaptive_simpson;
use crate::utility::UtilityModel;
use crate::welfare::{liquid_welfare, optimal_welfare, single_item_outcomes, PaymentGrid, Player};

/// Verdicts tolerate this much negative slack.
pub const SLACK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessParams {
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakSmoothnessParams {
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl SmoothnessParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        let p = SmoothnessParams { lambda, mu };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        check_param("lambda", self.lambda)?;
        check_param("mu", self.mu)
    }
}

impl WeakSmoothnessParams {
    pub fn new(lambda: f64, mu1: f64, mu2: f64) -> Result<Self> {
        let p = WeakSmoothnessParams { lambda, mu1, mu2 };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        check_param("lambda", self.lambda)?;
        check_param("mu1", self.mu1)?;
        check_param("mu2", self.mu2)
    }
}

impl From<SmoothnessParams> for WeakSmoothnessParams {
    fn from(p: SmoothnessParams) -> Self {
        WeakSmoothnessParams { lambda: p.lambda, mu1: p.mu, mu2: 0.0 }
    }
}

fn check_param(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::InvalidParameter(format!("{name} must be finite and non-negative, got {x}")));
    }
    Ok(())
}

/// `λ / max(1, μ)`
pub fn poa_bound(p: SmoothnessParams) -> Result<f64> {
    p.validate()?;
    if p.lambda <= 0.0 {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    Ok(p.lambda / p.mu.max(1.0))
}

/// `λ / (μ₂ + max(1, μ₁))`
pub fn weak_poa_bound(p: WeakSmoothnessParams) -> Result<f64> {
    p.validate()?;
    if p.lambda <= 0.0 {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    Ok(p.lambda / (p.mu2 + p.mu1.max(1.0)))
}

/// Smoothness with respect to normalized risk-averse utilities obtained from
/// quasilinear smoothness: `(C·λ/2, C·μ)`, with `C = 1` for the normalized
/// class. Each application halves `λ` again.
pub fn risk_transfer(p: SmoothnessParams, relaxation: f64) -> Result<SmoothnessParams> {
    p.validate()?;
    if !(relaxation > 0.0 && relaxation <= 1.0) {
        return Err(Error::InvalidParameter(format!("relaxation must lie in (0, 1], got {relaxation}")));
    }
    Ok(SmoothnessParams { lambda: relaxation * p.lambda / 2.0, mu: relaxation * p.mu })
}

/// Whether a certified equilibrium's welfare meets `λ/max(1,μ)·OPT − Σε_i`.
pub fn welfare_bound_holds(sw: f64, opt: f64, p: SmoothnessParams, total_regret: f64) -> Result<bool> {
    Ok(sw >= poa_bound(p)? * opt - total_regret - 1e-12 * opt.abs().max(1.0))
}

/// How each player deviates given the type profile and her current bid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DeviationRule {
    /// The highest-value player (lowest index among ties) bids half her
    /// value, everybody else bids zero.
    HalfValueTopBidder,
    /// The highest-value player bids uniformly on `[0, v_h]`, everybody else
    /// bids zero.
    UniformTopBidder,
    /// Every player bids her value.
    TruthfulBid,
    /// Explicit finite supports; unmatched players bid `default_bid`.
    CustomTable { entries: Vec<CustomDeviation>, default_bid: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomDeviation {
    pub player: usize,
    pub value: f64,
    /// Current bid this entry applies to; any bid when absent.
    #[serde(default)]
    pub current: Option<f64>,
    /// `(bid, probability)` pairs.
    pub support: Vec<(f64, f64)>,
}

impl DeviationRule {
    pub fn name(&self) -> &'static str {
        match self {
            DeviationRule::HalfValueTopBidder => "half-value-top-bidder",
            DeviationRule::UniformTopBidder => "uniform-top-bidder",
            DeviationRule::TruthfulBid => "truthful",
            DeviationRule::CustomTable { .. } => "custom-table",
        }
    }

    /// Deviation of player `i` when types are `values` and she bids `current`.
    pub fn deviation(&self, values: &[f64], i: usize, current: f64) -> Deviation {
        let top = top_index(values);
        match self {
            DeviationRule::HalfValueTopBidder => Deviation::Point(if i == top { values[i] / 2.0 } else { 0.0 }),
            DeviationRule::UniformTopBidder => {
                if i == top && values[i] > 0.0 {
                    Deviation::Uniform { lo: 0.0, hi: values[i] }
                } else {
                    Deviation::Point(0.0)
                }
            }
            DeviationRule::TruthfulBid => Deviation::Point(values[i]),
            DeviationRule::CustomTable { entries, default_bid } => entries
                .iter()
                .find(|e| e.player == i && e.value == values[i] && e.current.map_or(true, |c| c == current))
                .map_or(Deviation::Point(*default_bid), |e| Deviation::Finite(e.support.clone())),
        }
    }

    fn depends_on_current(&self) -> bool {
        matches!(self, DeviationRule::CustomTable { entries, .. } if entries.iter().any(|e| e.current.is_some()))
    }

    fn validate(&self) -> Result<()> {
        if let DeviationRule::CustomTable { entries, default_bid } = self {
            check_param("default bid", *default_bid)?;
            for e in entries {
                let total: f64 = e.support.iter().map(|(_, p)| p).sum();
                if e.support.is_empty() || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!("deviation support sums to {total}")));
                }
                for (b, p) in &e.support {
                    check_param("deviation bid", *b)?;
                    check_param("deviation probability", *p)?;
                }
            }
        }
        Ok(())
    }
}

fn top_index(values: &[f64]) -> usize {
    let mut top = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[top] {
            top = i;
        }
    }
    top
}

/// A randomized bid.
#[derive(Debug, Clone, PartialEq)]
pub enum Deviation {
    Point(f64),
    Uniform { lo: f64, hi: f64 },
    Finite(Vec<(f64, f64)>),
}

/// Which OPT the smoothness inequality is measured against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    /// `max_x Σ v_i(x)`
    #[default]
    OptHat,
    /// OPT under the instance's utility models.
    RiskAverseOpt,
    /// `max_{x,p} Σ min(u_i + p_i, B_i)`
    Liquid,
}

/// Single-item instance: every player's type ranges over `values`, every
/// player bids on `bids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessInstance {
    pub mechanism: Mechanism,
    pub models: Vec<UtilityModel>,
    pub values: Vec<f64>,
    pub bids: Vec<f64>,
    #[serde(default)]
    pub benchmark: Benchmark,
}

impl SmoothnessInstance {
    pub fn quasilinear(kind: MechanismKind, n_players: usize, values: Vec<f64>, bids: Vec<f64>) -> Result<Self> {
        Ok(SmoothnessInstance {
            mechanism: Mechanism::single_item(kind, n_players)?,
            models: vec![UtilityModel::Quasilinear; n_players],
            values,
            bids,
            benchmark: Benchmark::OptHat,
        })
    }

    fn validate(&self) -> Result<()> {
        if !self.mechanism.kind.is_single_item() {
            return Err(Error::UnsupportedMechanism(self.mechanism.kind.to_string()));
        }
        if self.models.len() != self.mechanism.n_players {
            return Err(Error::WrongArity { expected: self.mechanism.n_players, got: self.models.len() });
        }
        if self.values.is_empty() || self.bids.is_empty() {
            return Err(Error::InvalidParameter("value and bid grids must be non-empty".into()));
        }
        for &v in self.values.iter().chain(&self.bids) {
            check_param("grid point", v)?;
        }
        for m in &self.models {
            m.validate()?;
        }
        Ok(())
    }

    fn n(&self) -> usize {
        self.mechanism.n_players
    }

    fn type_profiles(&self) -> Vec<Vec<f64>> {
        let grids: Vec<&[f64]> = vec![&self.values[..]; self.n()];
        let mut out = Vec::new();
        for_each_profile(&grids, |p| out.push(p.to_vec()));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_players: usize,
    pub values: Vec<f64>,
    pub bids: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub types: Vec<f64>,
    pub bids: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub params: WeakSmoothnessParams,
    pub deviation: String,
    pub benchmark: Benchmark,
    pub grid: GridSpec,
    pub profiles_checked: u64,
    pub min_slack: f64,
    pub certified: bool,
    /// First violating profile in lexicographic (types, bids) order.
    pub counterexample: Option<Counterexample>,
}

/// Per-player quasilinear expected utility of a deviation, its exact
/// expectation over tie-breaks and (for uniform deviations) over the bid.
fn deviation_utility(
    m: &Mechanism,
    player: &Player,
    i: usize,
    dev: &Deviation,
    profile: &mut [Action],
) -> Result<f64> {
    let saved = profile[i];
    let out = match dev {
        Deviation::Point(b) => point_utility(m, player, i, *b, profile),
        Deviation::Finite(support) => {
            let mut acc = 0.0;
            for &(b, p) in support {
                acc += p * point_utility(m, player, i, b, profile)?;
            }
            Ok(acc)
        }
        Deviation::Uniform { lo, hi } => uniform_utility(m, player, i, *lo, *hi, profile),
    };
    profile[i] = saved;
    out
}

fn point_utility(m: &Mechanism, player: &Player, i: usize, b: f64, profile: &mut [Action]) -> Result<f64> {
    profile[i] = Action::Bid(b);
    Ok(view_moments(player, &m.player_view(i, profile))?.mean)
}

/// `(1/(hi−lo)) ∫ u(b) db` split at the opponents' bids, with the win/lose
/// outcome fixed on each piece (ties have measure zero).
fn uniform_utility(m: &Mechanism, player: &Player, i: usize, lo: f64, hi: f64, profile: &mut [Action]) -> Result<f64> {
    if hi <= lo {
        return point_utility(m, player, i, lo, profile);
    }
    let others: Vec<f64> = profile
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, a)| a.bid().unwrap_or(0.0))
        .collect();
    let max_other = others.iter().copied().fold(0.0, f64::max);
    let mut breaks = vec![lo, hi];
    breaks.extend(others.iter().copied().filter(|&x| x > lo && x < hi));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let kind = m.kind;
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let wins = (a + b) / 2.0 > max_other || others.is_empty();
        let f = |x: f64| -> f64 {
            let (alloc, pay) = match (kind, wins) {
                (MechanismKind::SecondPrice, true) => (Some(0), max_other),
                (MechanismKind::SecondPrice, false) => (None, 0.0),
                (MechanismKind::AllPay, false) => (None, x),
                (_, true) => (Some(0), x),
                (_, false) => (None, 0.0),
            };
            player.utility(alloc, pay).map_or(f64::NAN, |u| u.or_neg_infinity())
        };
        total += adaptive_simpson(f, a, b, 1e-13 * (b - a).max(1e-300))?;
    }
    Ok(total / (hi - lo))
}

struct Scan<'a> {
    inst: &'a SmoothnessInstance,
    rule: &'a DeviationRule,
    params: WeakSmoothnessParams,
    benchmark: Benchmark,
    /// Budgets used to cap the values the deviations and benchmark see.
    caps: Option<Vec<f64>>,
}

struct ThetaResult {
    min_slack: f64,
    first: Option<Counterexample>,
    checked: u64,
}

impl<'a> Scan<'a> {
    fn run(&self) -> Result<Certificate> {
        let inst = self.inst;
        let n = inst.n();
        let w_table = if self.params.mu2 != 0.0 { Some(self.willingness_table()?) } else { None };
        let thetas = inst.type_profiles();
        let results = par::map(&thetas, |theta| self.scan_theta(theta, w_table.as_deref()));
        let mut min_slack = f64::INFINITY;
        let mut first = None;
        let mut checked = 0u64;
        for r in results {
            let r = r?;
            min_slack = min_slack.min(r.min_slack);
            checked += r.checked;
            if first.is_none() {
                first = r.first;
            }
        }
        Ok(Certificate {
            params: self.params,
            deviation: self.rule.name().to_string(),
            benchmark: self.benchmark,
            grid: GridSpec { n_players: n, values: inst.values.clone(), bids: inst.bids.clone() },
            profiles_checked: checked,
            min_slack,
            certified: first.is_none(),
            counterexample: first,
        })
    }

    /// `w[i][k] = (W_i(b_k, win), W_i(b_k, lose))`, NaN where unreachable.
    fn willingness_table(&self) -> Result<Vec<Vec<(f64, f64)>>> {
        let inst = self.inst;
        let grid: Vec<Action> = inst.bids.iter().map(|&b| Action::Bid(b)).collect();
        let mut out = Vec::with_capacity(inst.n());
        for i in 0..inst.n() {
            let mut row = Vec::with_capacity(grid.len());
            for &a in &grid {
                let get = |x| match willingness_to_pay(&inst.mechanism, i, a, x, &grid) {
                    Ok(w) => Ok(w),
                    Err(Error::AllocationUnreachable { .. }) => Ok(f64::NAN),
                    Err(e) => Err(e),
                };
                row.push((get(Some(0))?, get(None)?));
            }
            out.push(row);
        }
        Ok(out)
    }

    fn benchmark_value(&self, theta: &[f64]) -> Result<f64> {
        let inst = self.inst;
        let bench_values: Vec<f64> = match &self.caps {
            Some(c) => theta.iter().zip(c).map(|(v, b)| v.min(*b)).collect(),
            None => theta.to_vec(),
        };
        let players: Vec<Player> =
            bench_values.iter().zip(&inst.models).map(|(&v, m)| Player::single(v, m.clone())).collect();
        let outcomes = single_item_outcomes(inst.n());
        Ok(match self.benchmark {
            Benchmark::OptHat => bench_values.iter().copied().fold(0.0, f64::max),
            Benchmark::RiskAverseOpt => optimal_welfare(&players, &outcomes, PaymentGrid::default())?.value,
            Benchmark::Liquid => liquid_welfare(&players, &outcomes, PaymentGrid::default())?.value,
        })
    }

    fn scan_theta(&self, theta: &[f64], w_table: Option<&[Vec<(f64, f64)>]>) -> Result<ThetaResult> {
        let inst = self.inst;
        let n = inst.n();
        let m = &inst.mechanism;
        let players: Vec<Player> = theta.iter().zip(&inst.models).map(|(&v, md)| Player::single(v, md.clone())).collect();
        let dev_values: Vec<f64> = match &self.caps {
            Some(c) => theta.iter().zip(c).map(|(v, b)| v.min(*b)).collect(),
            None => theta.to_vec(),
        };
        let opt = self.benchmark_value(theta)?;
        let p = self.params;
        let bid_index: Vec<usize> = (0..inst.bids.len()).collect();
        let grids: Vec<&[usize]> = vec![&bid_index[..]; n];
        let fixed_devs: Option<Vec<Deviation>> = if self.rule.depends_on_current() {
            None
        } else {
            Some((0..n).map(|i| self.rule.deviation(&dev_values, i, 0.0)).collect())
        };
        let mut res = ThetaResult { min_slack: f64::INFINITY, first: None, checked: 0 };
        let mut profile = vec![Action::Bid(0.0); n];
        let mut err = None;
        for_each_profile(&grids, |idx| {
            if err.is_some() {
                return;
            }
            for (a, &k) in profile.iter_mut().zip(idx) {
                *a = Action::Bid(inst.bids[k]);
            }
            let mut lhs = 0.0;
            for i in 0..n {
                let dev = match &fixed_devs {
                    Some(d) => d[i].clone(),
                    None => self.rule.deviation(&dev_values, i, inst.bids[idx[i]]),
                };
                match deviation_utility(m, &players[i], i, &dev, &mut profile) {
                    Ok(u) => lhs += u,
                    Err(e) => {
                        err = Some(e);
                        return;
                    }
                }
            }
            let revenue = m.expected_revenue(&profile);
            let mut rhs = p.lambda * opt - p.mu1 * revenue;
            if let Some(w) = w_table {
                let mut total_w = 0.0;
                for i in 0..n {
                    let (w_win, w_lose) = w[i][idx[i]];
                    for o in m.player_view(i, &profile) {
                        total_w += o.prob * if o.allocation.is_some() { w_win } else { w_lose };
                    }
                }
                rhs -= p.mu2 * total_w;
            }
            let slack = lhs - rhs;
            res.checked += 1;
            res.min_slack = res.min_slack.min(slack);
            if slack < -SLACK_TOLERANCE && res.first.is_none() {
                res.first = Some(Counterexample {
                    types: theta.to_vec(),
                    bids: idx.iter().map(|&k| inst.bids[k]).collect(),
                    lhs,
                    rhs,
                    slack,
                });
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(res),
        }
    }
}

/// Checks `Σ u_i(a*_i, a_−i) ≥ λ·OPT(θ) − μ·Σ p_i(a)` at every type profile
/// and bid profile of the instance grid.
pub fn certify_smoothness(inst: &SmoothnessInstance, rule: &DeviationRule, params: SmoothnessParams) -> Result<Certificate> {
    certify_weak_smoothness(inst, rule, params.into())
}

/// As [`certify_smoothness`] with the extra `− μ₂·Σ W_i(a_i, X(a))` term;
/// the term is not evaluated at all when `μ₂ = 0`.
pub fn certify_weak_smoothness(
    inst: &SmoothnessInstance,
    rule: &DeviationRule,
    params: WeakSmoothnessParams,
) -> Result<Certificate> {
    inst.validate()?;
    rule.validate()?;
    params.validate()?;
    Scan { inst, rule, params, benchmark: inst.benchmark, caps: None }.run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonnegViolation {
    pub types: Vec<f64>,
    pub player: usize,
    pub deviation_bid: f64,
    pub opponents: Vec<f64>,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum NonnegReport {
    Pass { checked: u64 },
    Violation(NonnegViolation),
}

impl NonnegReport {
    pub fn passed(&self) -> bool {
        matches!(self, NonnegReport::Pass { .. })
    }
}

/// Points of a deviation's support at which non-negativity is checked;
/// uniform deviations are sampled at 65 evenly spaced bids.
fn support_points(dev: &Deviation) -> Vec<f64> {
    match dev {
        Deviation::Point(b) => vec![*b],
        Deviation::Finite(s) => s.iter().filter(|(_, p)| *p > 0.0).map(|(b, _)| *b).collect(),
        Deviation::Uniform { lo, hi } => (0..=64).map(|k| lo + (hi - lo) * k as f64 / 64.0).collect(),
    }
}

/// Checks that every deviation bid has non-negative quasilinear utility
/// (for every tie-break outcome) against every opponent bid profile.
pub fn check_nonneg_deviation_utility(inst: &SmoothnessInstance, rule: &DeviationRule) -> Result<NonnegReport> {
    inst.validate()?;
    rule.validate()?;
    nonneg_scan(inst, rule, None)
}

fn nonneg_scan(inst: &SmoothnessInstance, rule: &DeviationRule, caps: Option<&[f64]>) -> Result<NonnegReport> {
    let n = inst.n();
    let thetas = inst.type_profiles();
    let currents: Vec<f64> = if rule.depends_on_current() { inst.bids.clone() } else { vec![0.0] };
    let results = par::map(&thetas, |theta| -> Option<NonnegViolation> {
        let values: Vec<f64> = match caps {
            Some(c) => theta.iter().zip(c).map(|(v, b)| v.min(*b)).collect(),
            None => theta.clone(),
        };
        let opp_grid: Vec<&[f64]> = vec![&inst.bids[..]; n - 1];
        for i in 0..n {
            for &cur in &currents {
                for b in support_points(&rule.deviation(&values, i, cur)) {
                    let mut found = None;
                    for_each_profile(&opp_grid, |opp| {
                        if found.is_some() {
                            return;
                        }
                        let mut profile: Vec<Action> = opp.iter().map(|&x| Action::Bid(x)).collect();
                        profile.insert(i, Action::Bid(b));
                        for o in inst.mechanism.player_view(i, &profile) {
                            let u = if o.allocation.is_some() { values[i] } else { 0.0 } - o.payment;
                            if u < -1e-12 {
                                found = Some(NonnegViolation {
                                    types: theta.clone(),
                                    player: i,
                                    deviation_bid: b,
                                    opponents: opp.to_vec(),
                                    utility: u,
                                });
                                return;
                            }
                        }
                    });
                    if found.is_some() {
                        return found;
                    }
                }
            }
        }
        None
    });
    let checked = thetas.len() as u64;
    Ok(match results.into_iter().flatten().next() {
        Some(v) => NonnegReport::Violation(v),
        None => NonnegReport::Pass { checked },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuationClass {
    SingleItem,
    UnitDemand,
    Additive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum BudgetTransferOutcome {
    Checked(Certificate),
    PreconditionFailed(NonnegViolation),
}

impl BudgetTransferOutcome {
    pub fn certified(&self) -> bool {
        matches!(self, BudgetTransferOutcome::Checked(c) if c.certified)
    }
}

/// With budgets `B_i` taken from the instance's (budgeted) models: deviations
/// are computed from capped values `min(θ_i, B_i)` and the inequality is
/// checked with parameters `(λ/2, μ)` against the liquid welfare of the
/// capped instance.
pub fn budget_transfer_check(
    inst: &SmoothnessInstance,
    class: ValuationClass,
    rule: &DeviationRule,
    params: SmoothnessParams,
) -> Result<BudgetTransferOutcome> {
    if class == ValuationClass::Additive {
        return Err(Error::NotClosedUnderCapping("additive".into()));
    }
    inst.validate()?;
    rule.validate()?;
    let caps: Vec<f64> = inst.models.iter().map(UtilityModel::budget).collect();
    if let NonnegReport::Violation(v) = nonneg_scan(inst, rule, Some(&caps))? {
        return Ok(BudgetTransferOutcome::PreconditionFailed(v));
    }
    let transferred = risk_transfer(params, 1.0)?;
    let scan = Scan { inst, rule, params: transferred.into(), benchmark: Benchmark::Liquid, caps: Some(caps) };
    Ok(BudgetTransferOutcome::Checked(scan.run()?))
}
