//! Explicit instances: the all-pay lower bound, the variance-aversion
//! examples, and closed-form bounds.

mod allpay;

pub use allpay::{
    beta_bid, beta_inverse, g_prime, g_value, player3_utility, verify_theorem6, AllPayLowerBoundInstance, BetaFunction,
    Theorem6Checks, Theorem6Config, Theorem6Report, ValuePoint,
};

use serde::{Deserialize, Serialize};

use crate::equilibria::{ce_regret, dist_welfare, CorrelatedDist, Game, Moments};
use crate::error::{Error, Result};
use crate::mechanisms::{Action, Mechanism, MechanismKind, TieBreak, Valuation};
use crate::quadrature::adaptive_simpson;
use crate::utility::UtilityModel;
use crate::welfare::{opt_hat, two_item_outcomes, Player};

pub fn f_density(t: f64, m: f64) -> Result<f64> {
    AllPayLowerBoundInstance::new(m)?.density(t)
}

pub fn f_cdf(t: f64, m: f64) -> Result<f64> {
    AllPayLowerBoundInstance::new(m)?.cdf(t)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::OutOfRange { name: "gamma".into(), value: gamma, lo: 0.0, hi: 1.0 });
    }
    Ok(())
}

/// Objective `E − γσ` of player `i` under the whole distribution.
fn unconditional_objective(game: &Game, dist: &CorrelatedDist, i: usize, gamma: f64) -> Result<f64> {
    let mut m = Moments::default();
    for (p, q) in &dist.entries {
        let x = game.moments(i, p)?;
        m.mean += q * x.mean;
        m.second += q * x.second;
        m.payment += q * x.payment;
    }
    m.objective(gamma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation1Report {
    pub gamma: f64,
    pub ce_regret: f64,
    pub sw: f64,
    pub player_utility: Vec<f64>,
    pub certified: bool,
}

/// The anti-coordinated second-price distribution with two value-1 bidders.
pub fn observation1_dist() -> CorrelatedDist {
    CorrelatedDist {
        entries: vec![
            (vec![Action::Bid(1.0), Action::Bid(0.0)], 0.5),
            (vec![Action::Bid(0.0), Action::Bid(1.0)], 0.5),
        ],
    }
}

pub fn observation1_game() -> Result<Game> {
    let m = Mechanism::single_item(MechanismKind::SecondPrice, 2)?;
    let players = vec![Player::quasilinear(1.0), Player::quasilinear(1.0)];
    Game::with_bid_grid(m, players, &[0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0])
}

/// Certifies the distribution as a correlated equilibrium of the variance
/// model with parameter `gamma`. All quantities are dyadic, so the
/// arithmetic is exact.
pub fn observation1_verify(gamma: f64) -> Result<Observation1Report> {
    check_gamma(gamma)?;
    let game = observation1_game()?;
    let dist = observation1_dist();
    let r = ce_regret(&game, &dist, gamma)?;
    let player_utility = (0..2).map(|i| unconditional_objective(&game, &dist, i, gamma)).collect::<Result<_>>()?;
    Ok(Observation1Report {
        gamma,
        ce_regret: r.max_regret,
        sw: dist_welfare(&game, &dist, gamma)?,
        player_utility,
        certified: r.max_regret == 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoItemInstance {
    pub gamma: f64,
    pub c: f64,
    pub q: f64,
    pub eps1: f64,
}

impl TwoItemInstance {
    /// `c = 4/γ² + 3`, `q = c − 1`.
    pub fn new(gamma: f64, eps1: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::OutOfRange { name: "gamma".into(), value: gamma, lo: 0.0, hi: 1.0 });
        }
        if !(eps1 > 0.0 && eps1.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps1 must be positive, got {eps1}")));
        }
        let c = 4.0 / (gamma * gamma) + 3.0;
        Ok(TwoItemInstance { gamma, c, q: c - 1.0, eps1 })
    }

    /// `(c+q−1)/q − γ√((c−1)²(q−1)/q²)`
    pub fn u2_closed_form(&self) -> f64 {
        let (c, q) = (self.c, self.q);
        (c + q - 1.0) / q - self.gamma * ((c - 1.0).powi(2) * (q - 1.0) / (q * q)).sqrt()
    }

    /// `2 − γ√(c−2)`, the closed form at `q = c − 1`.
    pub fn u2_simplified(&self) -> f64 {
        2.0 - self.gamma * (self.c - 2.0).sqrt()
    }

    pub fn game(&self) -> Result<Game> {
        let m = Mechanism::new(MechanismKind::TwoItemPreference, TieBreak::default(), 2)?;
        let players = vec![
            Player::new(Valuation::unit_demand(vec![self.eps1, self.eps1]), UtilityModel::Quasilinear),
            Player::new(Valuation::unit_demand(vec![self.c, 1.0]), UtilityModel::Quasilinear),
        ];
        let grids = vec![
            vec![Action::Claim(0), Action::Claim(1), Action::OptOut],
            vec![Action::Claim(0), Action::OptOut],
        ];
        Game::new(m, players, grids)
    }

    /// Player 1 claims item 1 with probability `(q−1)/q` and item 2
    /// otherwise; player 2 plays `second`.
    pub fn dist(&self, second: Action) -> Result<CorrelatedDist> {
        CorrelatedDist::new(vec![
            (vec![Action::Claim(0), second], (self.q - 1.0) / self.q),
            (vec![Action::Claim(1), second], 1.0 / self.q),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoItemReport {
    pub gamma: f64,
    pub eps1: f64,
    pub c: f64,
    pub q: f64,
    pub u2_closed_form: f64,
    pub u2_simplified: f64,
    /// Participation utility from enumerating the lottery.
    pub u2_participate: f64,
    pub ne_regret: f64,
    pub ne_certified: bool,
    pub sw_eq: f64,
    /// Welfare of the optimal allocation as stated (`c`).
    pub opt: f64,
    /// `c + ε₁`, both players served.
    pub opt_exact: f64,
    /// `opt / sw_eq`
    pub ratio: f64,
}

pub fn two_item_verify(gamma: f64, eps1: f64) -> Result<TwoItemReport> {
    let inst = TwoItemInstance::new(gamma, eps1)?;
    let game = inst.game()?;
    let eq = inst.dist(Action::OptOut)?;
    let u2_participate = unconditional_objective(&game, &inst.dist(Action::Claim(0))?, 1, gamma)?;
    // a product distribution is a Nash equilibrium iff it has zero CE regret
    let r = ce_regret(&game, &eq, gamma)?;
    let sw_eq = dist_welfare(&game, &eq, gamma)?;
    let opt_exact = opt_hat(&game.players, &two_item_outcomes())?;
    Ok(TwoItemReport {
        gamma,
        eps1,
        c: inst.c,
        q: inst.q,
        u2_closed_form: inst.u2_closed_form(),
        u2_simplified: inst.u2_simplified(),
        u2_participate,
        ne_regret: r.max_regret,
        ne_certified: r.max_regret <= 1e-12,
        sw_eq,
        opt: inst.c,
        opt_exact,
        ratio: inst.c / sw_eq,
    })
}

/// PoA bound `4(C+1)` for all-pay auctions whose transform is linear with
/// slope `C` below zero. Values of `C` below 1 are extrapolation.
pub fn bounded_slope_poa_bound(c: f64) -> Result<f64> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("slope must be non-negative, got {c}")));
    }
    if c < 1.0 {
        log::warn!("slope {c} below 1: the bound is extrapolated");
    }
    Ok(4.0 * (c + 1.0))
}

/// A value distribution with a density on a bounded interval.
pub trait ValueDensity: Sync {
    fn support(&self) -> (f64, f64);
    fn density(&self, t: f64) -> f64;
    /// Points where the density may be non-smooth, inside the support.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn mean(&self, tol: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        integrate_moment(self, lo, hi, tol)
    }
}

fn integrate_moment<D: ValueDensity + ?Sized>(d: &D, lo: f64, x: f64, tol: f64) -> Result<f64> {
    let mut breaks = vec![lo];
    breaks.extend(d.breakpoints().into_iter().filter(|&b| b > lo && b < x));
    breaks.push(x);
    let share = tol / (breaks.len() - 1) as f64;
    let mut total = 0.0;
    for w in breaks.windows(2) {
        // sample each piece from inside so jumps at the edges are not seen
        let (a, b) = (w[0], w[1]);
        let inside = |t: f64| t * d.density(t.clamp(a.next_up(), b.next_down()));
        total += adaptive_simpson(inside, a, b, share)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformDensity {
    pub lo: f64,
    pub hi: f64,
}

impl ValueDensity for UniformDensity {
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn density(&self, t: f64) -> f64 {
        if (self.lo..=self.hi).contains(&t) {
            1.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }
}

/// Piecewise-constant density on consecutive `edges`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramDensity {
    edges: Vec<f64>,
    heights: Vec<f64>,
}

impl HistogramDensity {
    /// `weights[k]` is the mass of `[edges[k], edges[k+1])`; weights are
    /// normalized.
    pub fn new(edges: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if edges.len() != weights.len() + 1 || weights.is_empty() {
            return Err(Error::InvalidParameter("need one more edge than weights".into()));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) || edges[0] < 0.0 {
            return Err(Error::InvalidParameter("edges must be increasing and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || !(total > 0.0) {
            return Err(Error::InvalidParameter("weights must be non-negative with positive sum".into()));
        }
        let heights = weights.iter().zip(edges.windows(2)).map(|(w, e)| w / total / (e[1] - e[0])).collect();
        Ok(HistogramDensity { edges, heights })
    }
}

impl ValueDensity for HistogramDensity {
    fn support(&self) -> (f64, f64) {
        (self.edges[0], *self.edges.last().unwrap())
    }

    fn density(&self, t: f64) -> f64 {
        let (lo, hi) = self.support();
        if t < lo || t > hi {
            return 0.0;
        }
        let k = self.edges.partition_point(|&e| e <= t).clamp(1, self.heights.len());
        self.heights[k - 1]
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.edges[1..self.edges.len() - 1].to_vec()
    }
}

/// Symmetric quasilinear all-pay equilibrium bid `∫₀ˣ t f(t) dt`.
pub fn quasilinear_allpay_beta<D: ValueDensity + ?Sized>(d: &D, x: f64, tol: f64) -> Result<f64> {
    let (lo, hi) = d.support();
    if lo < 0.0 {
        return Err(Error::InvalidParameter("support must be non-negative".into()));
    }
    if !(x >= 0.0 && x <= hi) {
        return Err(Error::OutOfRange { name: "value".into(), value: x, lo: 0.0, hi });
    }
    if x <= lo {
        return Ok(0.0);
    }
    integrate_moment(d, lo, x, tol)
}
