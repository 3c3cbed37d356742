//! Discretized Bayesian games with independent types.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{best_over, check_gamma, view_moments, Condition, Estimate, EvalMode, Moments, RegretEntry, RegretReport};
use crate::error::{Error, Result};
use crate::mechanisms::{Action, Allocation, Mechanism, MechanismKind, TieBreak, Valuation};
use crate::par;
use crate::utility::UtilityModel;
use crate::welfare::Player;

/// A player's type grid with probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDist {
    pub types: Vec<Valuation>,
    pub probs: Vec<f64>,
}

impl TypeDist {
    pub fn new(types: Vec<Valuation>, probs: Vec<f64>) -> Result<Self> {
        let d = TypeDist { types, probs };
        d.validate()?;
        Ok(d)
    }

    /// Single-item values with the given probabilities.
    pub fn values(values: &[f64], probs: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Valuation::single(v)).collect(), probs.to_vec())
    }

    pub fn uniform(values: &[f64]) -> Result<Self> {
        let p = 1.0 / values.len() as f64;
        Self::values(values, &vec![p; values.len()])
    }

    fn validate(&self) -> Result<()> {
        if self.types.is_empty() || self.types.len() != self.probs.len() {
            return Err(Error::InvalidParameter("type grid and probabilities must be non-empty and aligned".into()));
        }
        if self.probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidParameter("type probabilities must be non-negative".into()));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("type probabilities sum to {total}")));
        }
        for t in &self.types {
            t.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesianGame {
    pub mechanism: Mechanism,
    pub models: Vec<UtilityModel>,
    pub type_dists: Vec<TypeDist>,
    pub action_grids: Vec<Vec<Action>>,
}

pub type MixedAction = Vec<(Action, f64)>;

/// `actions[i][t]` is player `i`'s (mixed) action at type `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesStrategy {
    pub actions: Vec<Vec<MixedAction>>,
}

impl BayesStrategy {
    pub fn pure(actions: Vec<Vec<Action>>) -> Self {
        BayesStrategy { actions: actions.into_iter().map(|v| v.into_iter().map(|a| vec![(a, 1.0)]).collect()).collect() }
    }
}

impl BayesianGame {
    pub fn new(
        mechanism: Mechanism,
        models: Vec<UtilityModel>,
        type_dists: Vec<TypeDist>,
        action_grids: Vec<Vec<Action>>,
    ) -> Result<Self> {
        let n = mechanism.n_players;
        for len in [models.len(), type_dists.len(), action_grids.len()] {
            if len != n {
                return Err(Error::WrongArity { expected: n, got: len });
            }
        }
        for m in &models {
            m.validate()?;
        }
        for d in &type_dists {
            d.validate()?;
        }
        for g in &action_grids {
            if g.is_empty() {
                return Err(Error::InvalidParameter("empty action grid".into()));
            }
            for a in g {
                mechanism.validate_action(a)?;
            }
        }
        Ok(BayesianGame { mechanism, models, type_dists, action_grids })
    }

    pub fn n_players(&self) -> usize {
        self.mechanism.n_players
    }

    pub fn player(&self, i: usize, t: usize) -> Player {
        Player::new(self.type_dists[i].types[t].clone(), self.models[i].clone())
    }

    fn validate_strategy(&self, s: &BayesStrategy) -> Result<()> {
        if s.actions.len() != self.n_players() {
            return Err(Error::WrongArity { expected: self.n_players(), got: s.actions.len() });
        }
        for (i, per_type) in s.actions.iter().enumerate() {
            if per_type.len() != self.type_dists[i].types.len() {
                return Err(Error::InvalidParameter(format!("strategy of player {i} does not cover every type")));
            }
            for mixed in per_type {
                let total: f64 = mixed.iter().map(|(_, p)| p).sum();
                if mixed.is_empty() || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!("mixed action of player {i} sums to {total}")));
                }
                for (a, _) in mixed {
                    self.mechanism.validate_action(a)?;
                }
            }
        }
        Ok(())
    }

    /// Player `j`'s marginal action distribution.
    fn marginal(&self, s: &BayesStrategy, j: usize) -> Vec<(Action, f64)> {
        let mut out: Vec<(Action, f64)> = Vec::new();
        for (t, mixed) in s.actions[j].iter().enumerate() {
            let pt = self.type_dists[j].probs[t];
            for &(a, q) in mixed {
                match out.iter_mut().find(|(b, _)| *b == a) {
                    Some(e) => e.1 += pt * q,
                    None => out.push((a, pt * q)),
                }
            }
        }
        out
    }
}

/// Discrete bid distribution with an exact CDF.
#[derive(Debug, Clone)]
struct DiscreteBids {
    points: Vec<f64>,
    cum: Vec<f64>,
}

impl DiscreteBids {
    fn new(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points = Vec::new();
        let mut cum = Vec::new();
        let mut acc = 0.0;
        for (x, p) in atoms {
            acc += p;
            if points.last() == Some(&x) {
                *cum.last_mut().unwrap() = acc;
            } else {
                points.push(x);
                cum.push(acc);
            }
        }
        DiscreteBids { points, cum }
    }

    fn cdf(&self, x: f64) -> f64 {
        let k = self.points.partition_point(|&p| p <= x);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1].min(1.0)
        }
    }

    fn cdf_below(&self, x: f64) -> f64 {
        let k = self.points.partition_point(|&p| p < x);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1].min(1.0)
        }
    }
}

/// Player `i`'s view of the opponents at the interim stage.
struct Interim<'a> {
    game: &'a BayesianGame,
    i: usize,
    bids: Vec<(usize, DiscreteBids)>,
    marginals: Vec<(usize, Vec<(Action, f64)>)>,
}

type Outcome = (f64, Allocation, f64);

impl<'a> Interim<'a> {
    fn new(game: &'a BayesianGame, s: &BayesStrategy, i: usize) -> Self {
        let others: Vec<usize> = (0..game.n_players()).filter(|&j| j != i).collect();
        let marginals: Vec<(usize, Vec<(Action, f64)>)> = others.iter().map(|&j| (j, game.marginal(s, j))).collect();
        let bids = if game.mechanism.kind.is_single_item() {
            marginals
                .iter()
                .map(|(j, m)| (*j, DiscreteBids::new(m.iter().map(|(a, p)| (a.bid().unwrap_or(0.0), *p)).collect())))
                .collect()
        } else {
            Vec::new()
        };
        Interim { game, i, bids, marginals }
    }

    /// Outcome lottery `(probability, allocation, payment)` of action `a`.
    fn outcomes(&self, a: Action) -> Vec<Outcome> {
        if self.game.mechanism.kind.is_single_item() {
            self.single_item(a.bid().unwrap_or(0.0))
        } else {
            self.enumerate(a)
        }
    }

    fn single_item(&self, b: f64) -> Vec<Outcome> {
        let kind = self.game.mechanism.kind;
        let lose_pay = if kind == MechanismKind::AllPay { b } else { 0.0 };
        if self.bids.is_empty() {
            let pay = if kind == MechanismKind::SecondPrice { 0.0 } else { b };
            return vec![(1.0, Some(0), pay)];
        }
        let below: f64 = self.bids.iter().map(|(_, d)| d.cdf_below(b)).product();
        let win = match self.game.mechanism.tie_break {
            TieBreak::LowestIndex => self
                .bids
                .iter()
                .map(|(j, d)| if *j < self.i { d.cdf_below(b) } else { d.cdf(b) })
                .product(),
            TieBreak::UniformRandom => {
                // poly[k] = P(all others <= b, exactly k of them at b)
                let mut poly = vec![1.0];
                for (_, d) in &self.bids {
                    let lo = d.cdf_below(b);
                    let at = d.cdf(b) - lo;
                    let mut next = vec![0.0; poly.len() + 1];
                    for (k, &c) in poly.iter().enumerate() {
                        next[k] += c * lo;
                        next[k + 1] += c * at;
                    }
                    poly = next;
                }
                poly.iter().enumerate().map(|(k, c)| c / (k + 1) as f64).sum()
            }
        };
        let mut out = Vec::new();
        match kind {
            MechanismKind::SecondPrice => {
                let mut pts: Vec<f64> =
                    self.bids.iter().flat_map(|(_, d)| d.points.iter().copied().filter(|&x| x < b)).collect();
                pts.sort_by(f64::total_cmp);
                pts.dedup();
                let mut prev = 0.0;
                for m in pts {
                    let g: f64 = self.bids.iter().map(|(_, d)| d.cdf(m)).product();
                    if g > prev {
                        out.push((g - prev, Some(0), m));
                    }
                    prev = g;
                }
                if win - below > 0.0 {
                    out.push((win - below, Some(0), b));
                }
            }
            _ => {
                if win > 0.0 {
                    out.push((win, Some(0), b));
                }
            }
        }
        if win < 1.0 {
            out.push((1.0 - win, None, lose_pay));
        }
        out
    }

    fn enumerate(&self, a: Action) -> Vec<Outcome> {
        let n = self.game.n_players();
        let mut out = Vec::new();
        let mut profile = vec![a; n];
        self.enumerate_rec(0, 1.0, &mut profile, &mut out);
        out
    }

    fn enumerate_rec(&self, k: usize, prob: f64, profile: &mut Vec<Action>, out: &mut Vec<Outcome>) {
        if k == self.marginals.len() {
            for o in self.game.mechanism.player_view(self.i, profile) {
                out.push((prob * o.prob, o.allocation, o.payment));
            }
            return;
        }
        let (j, m) = &self.marginals[k];
        for &(b, q) in m {
            profile[*j] = b;
            self.enumerate_rec(k + 1, prob * q, profile, out);
        }
    }

    fn moments(&self, player: &Player, a: Action) -> Result<Moments> {
        let mut m = Moments::default();
        for (p, x, pay) in self.outcomes(a) {
            let u = player.utility(x, pay)?.or_neg_infinity();
            m.mean += p * u;
            m.second += p * u * u;
            m.payment += p * pay;
        }
        Ok(m)
    }

    fn mixed_moments(&self, player: &Player, mixed: &MixedAction) -> Result<Moments> {
        let mut m = Moments::default();
        for &(a, q) in mixed {
            m.accumulate(q, self.moments(player, a)?);
        }
        Ok(m)
    }
}

/// Interim regret of `s` for every player and type; a player's regret is the
/// largest over her types.
pub fn bne_regret(game: &BayesianGame, s: &BayesStrategy, gamma: f64) -> Result<RegretReport> {
    check_gamma(gamma)?;
    game.validate_strategy(s)?;
    let n = game.n_players();
    let jobs: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..game.type_dists[i].types.len()).map(move |t| (i, t))).collect();
    let contexts: Vec<Interim> = (0..n).map(|i| Interim::new(game, s, i)).collect();
    let entries = par::map(&jobs, |&(i, t)| -> Result<RegretEntry> {
        let ctx = &contexts[i];
        let player = game.player(i, t);
        let current = ctx.mixed_moments(&player, &s.actions[i][t])?.objective(gamma)?;
        let (best_a, best) = best_over(&game.action_grids[i], |a| ctx.moments(&player, a)?.objective(gamma))?;
        let gain = (best - current).max(0.0);
        let v = player.valuation.reference();
        Ok(RegretEntry {
            player: i,
            condition: Condition::OwnType(t),
            probability: game.type_dists[i].probs[t],
            objective: current,
            best_deviation: best_a,
            best_objective: best,
            gain,
            relative_gain: Some(if v > 0.0 { gain / v } else { gain }),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut player_regret = vec![0.0f64; n];
    for e in &entries {
        player_regret[e.player] = player_regret[e.player].max(e.gain);
    }
    Ok(RegretReport {
        max_regret: player_regret.iter().copied().fold(0.0, f64::max),
        player_regret,
        welfare: welfare_with(game, s, gamma, &contexts)?,
        entries,
    })
}

/// Ex-ante welfare `Σ (E u_i − γ σ_i) + Σ E p_i` of a Bayesian strategy profile.
pub fn bne_welfare(game: &BayesianGame, s: &BayesStrategy, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    game.validate_strategy(s)?;
    let contexts: Vec<Interim> = (0..game.n_players()).map(|i| Interim::new(game, s, i)).collect();
    welfare_with(game, s, gamma, &contexts)
}

fn welfare_with(game: &BayesianGame, s: &BayesStrategy, gamma: f64, contexts: &[Interim]) -> Result<f64> {
    let mut total = 0.0;
    for (i, ctx) in contexts.iter().enumerate() {
        let mut m = Moments::default();
        for (t, &pt) in game.type_dists[i].probs.iter().enumerate() {
            m.accumulate(pt, ctx.mixed_moments(&game.player(i, t), &s.actions[i][t])?);
        }
        total += m.objective(gamma)? + m.payment;
    }
    Ok(total)
}

/// Interim (`OwnType`) or ex-ante (`None`) expected utility of player `i`.
pub fn expected_utility_bayes(
    game: &BayesianGame,
    s: &BayesStrategy,
    player: usize,
    condition: Condition,
    mode: EvalMode,
) -> Result<Estimate> {
    game.validate_strategy(s)?;
    if player >= game.n_players() {
        return Err(Error::InvalidParameter(format!("no player {player}")));
    }
    let types: Vec<(usize, f64)> = match condition {
        Condition::None => game.type_dists[player].probs.iter().copied().enumerate().collect(),
        Condition::OwnType(t) => {
            let p = *game.type_dists[player]
                .probs
                .get(t)
                .ok_or_else(|| Error::InvalidParameter(format!("no type {t}")))?;
            if p <= 0.0 {
                return Err(Error::ZeroProbabilityCondition);
            }
            vec![(t, 1.0)]
        }
        Condition::OwnAction(_) => {
            return Err(Error::InvalidParameter("action conditioning needs a correlated distribution".into()))
        }
    };
    match mode {
        EvalMode::Exact => {
            let ctx = Interim::new(game, s, player);
            let mut mean = 0.0;
            for (t, w) in types {
                mean += w * ctx.mixed_moments(&game.player(player, t), &s.actions[player][t])?.mean;
            }
            Ok(Estimate { mean, std_error: 0.0 })
        }
        EvalMode::MonteCarlo { seed, samples } => {
            if samples < 2 {
                return Err(Error::InvalidParameter("Monte Carlo needs at least two samples".into()));
            }
            let n = game.n_players();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let own_probs: Vec<f64> = types.iter().map(|(_, w)| *w).collect();
            let own_types: Vec<usize> = types.iter().map(|(t, _)| *t).collect();
            let (mut s1, mut s2) = (0.0, 0.0);
            let mut profile = vec![Action::Bid(0.0); n];
            for _ in 0..samples {
                let mut own_t = 0;
                for j in 0..n {
                    let t = if j == player {
                        own_t = own_types[draw(&mut rng, &own_probs)];
                        own_t
                    } else {
                        draw(&mut rng, &game.type_dists[j].probs)
                    };
                    let mixed = &s.actions[j][t];
                    let w: Vec<f64> = mixed.iter().map(|(_, q)| *q).collect();
                    profile[j] = mixed[draw(&mut rng, &w)].0;
                }
                let view = game.mechanism.player_view(player, &profile);
                let u = view_moments(&game.player(player, own_t), &view)?.mean;
                s1 += u;
                s2 += u * u;
            }
            let k = samples as f64;
            let mean = s1 / k;
            let var = ((s2 - k * mean * mean) / (k - 1.0)).max(0.0);
            Ok(Estimate { mean, std_error: (var / k).sqrt() })
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let r = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if r < acc {
            return k;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bids(xs: &[f64]) -> Vec<Action> {
        xs.iter().map(|&b| Action::Bid(b)).collect()
    }

    #[test]
    fn truthful_second_price_has_no_regret() {
        let values = [0.2, 0.5, 0.9];
        let m = Mechanism::single_item(MechanismKind::SecondPrice, 3).unwrap();
        let grid = bids(&[0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0]);
        let g = BayesianGame::new(
            m,
            vec![UtilityModel::Quasilinear; 3],
            vec![TypeDist::uniform(&values).unwrap(); 3],
            vec![grid; 3],
        )
        .unwrap();
        let s = BayesStrategy::pure(vec![bids(&values); 3]);
        let r = bne_regret(&g, &s, 0.0).unwrap();
        assert!(r.max_regret <= 1e-12, "{}", r.max_regret);
    }

    #[test]
    fn interim_matches_enumeration() {
        // compare the order-statistics route against brute-force enumeration
        for kind in [MechanismKind::FirstPrice, MechanismKind::SecondPrice, MechanismKind::AllPay] {
            for tie in [TieBreak::UniformRandom, TieBreak::LowestIndex] {
                let m = Mechanism::new(kind, tie, 3).unwrap();
                let grid = bids(&[0.0, 0.25, 0.5, 0.75]);
                let g = BayesianGame::new(
                    m,
                    vec![UtilityModel::exponential(); 3],
                    vec![TypeDist::values(&[0.5, 1.0], &[0.3, 0.7]).unwrap(); 3],
                    vec![grid.clone(); 3],
                )
                .unwrap();
                let s = BayesStrategy {
                    actions: vec![
                        vec![vec![(Action::Bid(0.25), 1.0)], vec![(Action::Bid(0.5), 0.5), (Action::Bid(0.25), 0.5)]],
                        vec![vec![(Action::Bid(0.0), 1.0)], vec![(Action::Bid(0.5), 1.0)]],
                        vec![vec![(Action::Bid(0.25), 1.0)], vec![(Action::Bid(0.75), 0.2), (Action::Bid(0.5), 0.8)]],
                    ],
                };
                for i in 0..3 {
                    let ctx = Interim::new(&g, &s, i);
                    for &a in &grid {
                        let fast = ctx.moments(&g.player(i, 1), a).unwrap();
                        let mut brute = Moments::default();
                        let mut profile = vec![a; 3];
                        let mut outs = Vec::new();
                        ctx.enumerate_rec(0, 1.0, &mut profile, &mut outs);
                        for (p, x, pay) in outs {
                            let u = g.player(i, 1).utility(x, pay).unwrap().or_neg_infinity();
                            brute.mean += p * u;
                            brute.second += p * u * u;
                            brute.payment += p * pay;
                        }
                        assert!((fast.mean - brute.mean).abs() < 1e-12, "{kind:?} {tie:?} {i} {a:?}");
                        assert!((fast.second - brute.second).abs() < 1e-12);
                        assert!((fast.payment - brute.payment).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn monte_carlo_agrees() {
        let m = Mechanism::single_item(MechanismKind::FirstPrice, 2).unwrap();
        let g = BayesianGame::new(
            m,
            vec![UtilityModel::Quasilinear; 2],
            vec![TypeDist::uniform(&[0.4, 1.0]).unwrap(); 2],
            vec![bids(&[0.0, 0.2, 0.4]); 2],
        )
        .unwrap();
        let s = BayesStrategy::pure(vec![bids(&[0.2, 0.4]); 2]);
        let exact = expected_utility_bayes(&g, &s, 0, Condition::None, EvalMode::Exact).unwrap();
        let mc = expected_utility_bayes(&g, &s, 0, Condition::None, EvalMode::MonteCarlo { seed: 5, samples: 50_000 })
            .unwrap();
        assert!((exact.mean - mc.mean).abs() <= 4.0 * mc.std_error);
    }
}
