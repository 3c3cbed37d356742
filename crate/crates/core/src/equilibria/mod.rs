//! Expected utilities, equilibrium regret, and no-regret learners.

mod bayes;
mod learn;
mod poa;

pub use bayes::{
    bne_regret, bne_welfare, expected_utility_bayes, BayesStrategy, BayesianGame, MixedAction, TypeDist,
};
pub use learn::{learn_hedge, learn_regret_matching, Dynamics, HedgeConfig, HedgeOutcome, LearningRate, RegretMatchingConfig, RegretMatchingOutcome, TracePoint};
pub use poa::{empirical_poa, EquilibriumSource, GameFamily, PoaRow, PoaTable};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{Action, Mechanism, PlayerView};
use crate::welfare::Player;

/// Complete-information game on finite action grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Game {
    pub mechanism: Mechanism,
    pub players: Vec<Player>,
    pub action_grids: Vec<Vec<Action>>,
}

/// Moments of one player's utility at a profile, over the tie-break lottery.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub mean: f64,
    pub second: f64,
    pub payment: f64,
}

impl Moments {
    fn accumulate(&mut self, w: f64, m: Moments) {
        self.mean += w * m.mean;
        self.second += w * m.second;
        self.payment += w * m.payment;
    }

    /// `E - γσ` of the accumulated distribution.
    pub fn objective(&self, gamma: f64) -> Result<f64> {
        if gamma == 0.0 {
            return Ok(self.mean);
        }
        let var = clamp_variance(self.second - self.mean * self.mean, self.second)?;
        Ok(self.mean - gamma * var.sqrt())
    }
}

fn clamp_variance(var: f64, scale: f64) -> Result<f64> {
    let tol = 1e-12 * scale.abs().max(1.0);
    // raw moments cannot resolve anything below a few ulps of E[u²]
    if var.abs() <= 16.0 * f64::EPSILON * scale.abs() {
        Ok(0.0)
    } else if var >= 0.0 {
        Ok(var)
    } else if var >= -tol {
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance(var))
    }
}

pub(crate) fn view_moments(player: &Player, view: &PlayerView) -> Result<Moments> {
    let mut m = Moments::default();
    for o in view {
        let u = player.utility(o.allocation, o.payment)?.or_neg_infinity();
        m.mean += o.prob * u;
        m.second += o.prob * u * u;
        m.payment += o.prob * o.payment;
    }
    Ok(m)
}

impl Game {
    pub fn new(mechanism: Mechanism, players: Vec<Player>, action_grids: Vec<Vec<Action>>) -> Result<Self> {
        let n = mechanism.n_players;
        if players.len() != n {
            return Err(Error::WrongArity { expected: n, got: players.len() });
        }
        if action_grids.len() != n {
            return Err(Error::WrongArity { expected: n, got: action_grids.len() });
        }
        for p in &players {
            p.validate()?;
        }
        for g in &action_grids {
            if g.is_empty() {
                return Err(Error::InvalidParameter("empty action grid".into()));
            }
            for a in g {
                mechanism.validate_action(a)?;
            }
        }
        Ok(Game { mechanism, players, action_grids })
    }

    /// All players share one bid grid.
    pub fn with_bid_grid(mechanism: Mechanism, players: Vec<Player>, bids: &[f64]) -> Result<Self> {
        let grid: Vec<Action> = bids.iter().map(|&b| Action::Bid(b)).collect();
        let n = players.len();
        Self::new(mechanism, players, vec![grid; n])
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    /// Largest value any player has for any item.
    pub fn v_max(&self) -> f64 {
        self.players.iter().map(|p| p.valuation.reference()).fold(0.0, f64::max)
    }

    pub fn moments(&self, i: usize, profile: &[Action]) -> Result<Moments> {
        view_moments(&self.players[i], &self.mechanism.player_view(i, profile))
    }

    fn validate_dist(&self, dist: &CorrelatedDist) -> Result<()> {
        for (profile, _) in &dist.entries {
            self.mechanism.validate_profile(profile)?;
        }
        Ok(())
    }
}

/// A distribution over action profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedDist {
    pub entries: Vec<(Vec<Action>, f64)>,
}

impl CorrelatedDist {
    pub fn new(entries: Vec<(Vec<Action>, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("empty distribution".into()));
        }
        let mut total = 0.0;
        for (_, p) in &entries {
            if !(*p >= 0.0) {
                return Err(Error::InvalidParameter(format!("negative probability {p}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}")));
        }
        Ok(CorrelatedDist { entries })
    }

    pub fn point(profile: Vec<Action>) -> Self {
        CorrelatedDist { entries: vec![(profile, 1.0)] }
    }

    /// Probability that player `i` plays `a`.
    pub fn marginal(&self, i: usize, a: Action) -> f64 {
        self.entries.iter().filter(|(p, _)| p[i] == a).map(|(_, q)| q).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    None,
    OwnAction(Action),
    OwnType(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Exact,
    MonteCarlo { seed: u64, samples: usize },
}

/// A mean with its standard error (zero in exact mode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// `E[u_i]` under `dist`, optionally conditioned on player `i`'s own action.
/// Tie-breaks are always averaged exactly.
pub fn expected_utility(
    game: &Game,
    dist: &CorrelatedDist,
    player: usize,
    condition: Condition,
    mode: EvalMode,
) -> Result<Estimate> {
    game.validate_dist(dist)?;
    if player >= game.n_players() {
        return Err(Error::InvalidParameter(format!("no player {player}")));
    }
    let support: Vec<(&Vec<Action>, f64)> = match condition {
        Condition::None => dist.entries.iter().map(|(p, q)| (p, *q)).collect(),
        Condition::OwnAction(a) => dist.entries.iter().filter(|(p, _)| p[player] == a).map(|(p, q)| (p, *q)).collect(),
        Condition::OwnType(_) => {
            return Err(Error::InvalidParameter("type conditioning needs a Bayesian game".into()))
        }
    };
    let mass: f64 = support.iter().map(|(_, q)| q).sum();
    if mass <= 0.0 {
        return Err(Error::ZeroProbabilityCondition);
    }
    match mode {
        EvalMode::Exact => {
            let mut m = 0.0;
            for (p, q) in &support {
                m += q * game.moments(player, p)?.mean;
            }
            Ok(Estimate { mean: m / mass, std_error: 0.0 })
        }
        EvalMode::MonteCarlo { seed, samples } => {
            let values: Vec<f64> = support
                .iter()
                .map(|(p, _)| game.moments(player, p).map(|m| m.mean))
                .collect::<Result<_>>()?;
            let weights: Vec<f64> = support.iter().map(|(_, q)| q / mass).collect();
            monte_carlo(&values, &weights, seed, samples)
        }
    }
}

pub(crate) fn monte_carlo(values: &[f64], weights: &[f64], seed: u64, samples: usize) -> Result<Estimate> {
    if samples < 2 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least two samples".into()));
    }
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cum.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let r: f64 = rng.gen::<f64>() * acc;
        let k = cum.partition_point(|&c| c <= r).min(values.len() - 1);
        s += values[k];
        s2 += values[k] * values[k];
    }
    let n = samples as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(Estimate { mean, std_error: (var / n).sqrt() })
}

/// One conditional deviation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretEntry {
    pub player: usize,
    pub condition: Condition,
    /// Probability of the conditioning event.
    pub probability: f64,
    pub objective: f64,
    pub best_deviation: Action,
    pub best_objective: f64,
    /// `best_objective - objective`, clipped at zero.
    pub gain: f64,
    /// `gain` divided by the player's value (Bayesian checks only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    /// Per-player regret.
    pub player_regret: Vec<f64>,
    pub max_regret: f64,
    /// (Variance-adjusted) social welfare of the candidate.
    pub welfare: f64,
    pub entries: Vec<RegretEntry>,
}

impl RegretReport {
    pub fn max_relative_regret(&self) -> Option<f64> {
        self.entries.iter().filter_map(|e| e.relative_gain).reduce(f64::max)
    }

    pub fn total_regret(&self) -> f64 {
        self.player_regret.iter().sum()
    }
}

fn swap_profile(profile: &[Action], i: usize, a: Action) -> Vec<Action> {
    let mut p = profile.to_vec();
    p[i] = a;
    p
}

/// Welfare `Σ (E u_i − γ σ_i) + Σ E p_i` of a correlated distribution.
pub fn dist_welfare(game: &Game, dist: &CorrelatedDist, gamma: f64) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..game.n_players() {
        let mut m = Moments::default();
        for (p, q) in &dist.entries {
            m.accumulate(*q, game.moments(i, p)?);
        }
        total += m.objective(gamma)? + m.payment;
    }
    Ok(total)
}

/// Correlated-equilibrium regret. For every recommended action `a_i` the best
/// conditional deviation is found over the player's grid; a player's regret is
/// `Σ_{a_i} P(a_i) · max(0, best conditional gain)`.
pub fn ce_regret(game: &Game, dist: &CorrelatedDist, gamma: f64) -> Result<RegretReport> {
    check_gamma(gamma)?;
    game.validate_dist(dist)?;
    let n = game.n_players();
    let mut entries = Vec::new();
    let mut player_regret = vec![0.0; n];
    for i in 0..n {
        let mut recommended: Vec<Action> = Vec::new();
        for (p, _) in &dist.entries {
            if !recommended.contains(&p[i]) {
                recommended.push(p[i]);
            }
        }
        for &a in &recommended {
            let cond: Vec<(&Vec<Action>, f64)> =
                dist.entries.iter().filter(|(p, _)| p[i] == a).map(|(p, q)| (p, *q)).collect();
            let mass: f64 = cond.iter().map(|(_, q)| q).sum();
            if mass <= 0.0 {
                continue;
            }
            let eval = |dev: Action| -> Result<f64> {
                let mut m = Moments::default();
                for (p, q) in &cond {
                    m.accumulate(q / mass, game.moments(i, &swap_profile(p, i, dev))?);
                }
                m.objective(gamma)
            };
            let current = eval(a)?;
            let (best_a, best) = best_over(&game.action_grids[i], eval)?;
            let gain = (best - current).max(0.0);
            player_regret[i] += mass * gain;
            entries.push(RegretEntry {
                player: i,
                condition: Condition::OwnAction(a),
                probability: mass,
                objective: current,
                best_deviation: best_a,
                best_objective: best,
                gain,
                relative_gain: None,
            });
        }
    }
    Ok(RegretReport {
        max_regret: player_regret.iter().copied().fold(0.0, f64::max),
        player_regret,
        welfare: dist_welfare(game, dist, gamma)?,
        entries,
    })
}

/// Coarse correlated-equilibrium regret: unconditional deviations only.
pub fn cce_regret(game: &Game, dist: &CorrelatedDist, gamma: f64) -> Result<RegretReport> {
    check_gamma(gamma)?;
    game.validate_dist(dist)?;
    let n = game.n_players();
    let mut entries = Vec::new();
    let mut player_regret = vec![0.0; n];
    for i in 0..n {
        let mut cur = Moments::default();
        for (p, q) in &dist.entries {
            cur.accumulate(*q, game.moments(i, p)?);
        }
        let current = cur.objective(gamma)?;
        let (best_a, best) = best_over(&game.action_grids[i], |dev| {
            let mut m = Moments::default();
            for (p, q) in &dist.entries {
                m.accumulate(*q, game.moments(i, &swap_profile(p, i, dev))?);
            }
            m.objective(gamma)
        })?;
        let gain = (best - current).max(0.0);
        player_regret[i] = gain;
        entries.push(RegretEntry {
            player: i,
            condition: Condition::None,
            probability: 1.0,
            objective: current,
            best_deviation: best_a,
            best_objective: best,
            gain,
            relative_gain: None,
        });
    }
    Ok(RegretReport {
        max_regret: player_regret.iter().copied().fold(0.0, f64::max),
        player_regret,
        welfare: dist_welfare(game, dist, gamma)?,
        entries,
    })
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    Ok(())
}

/// First maximizer of `eval` over `grid`.
pub(crate) fn best_over(grid: &[Action], eval: impl Fn(Action) -> Result<f64>) -> Result<(Action, f64)> {
    let mut best = (grid[0], f64::NEG_INFINITY);
    for &a in grid {
        let v = eval(a)?;
        if v > best.1 {
            best = (a, v);
        }
    }
    Ok(best)
}
