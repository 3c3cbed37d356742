//! Allocation and payment rules over discrete action profiles.

use arrayvec::ArrayVec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Item index received by a player, `None` for nothing.
pub type Allocation = Option<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    FirstPrice,
    SecondPrice,
    AllPay,
    /// Two items, no payments: player 0 receives the item she claims, player 1
    /// receives the other one unless she opts out.
    TwoItemPreference,
}

impl MechanismKind {
    pub fn is_single_item(self) -> bool {
        !matches!(self, MechanismKind::TwoItemPreference)
    }
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MechanismKind::FirstPrice => "first-price",
            MechanismKind::SecondPrice => "second-price",
            MechanismKind::AllPay => "all-pay",
            MechanismKind::TwoItemPreference => "two-item-preference",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    UniformRandom,
    LowestIndex,
}

/// A player's action: a bid in the auctions, an item claim or opt-out in the
/// two-item mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Bid(f64),
    Claim(usize),
    OptOut,
}

impl Action {
    pub fn bid(self) -> Option<f64> {
        match self {
            Action::Bid(b) => Some(b),
            _ => None,
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Bid(b) => write!(f, "bid({b})"),
            Action::Claim(i) => write!(f, "claim(item{})", i + 1),
            Action::OptOut => f.write_str("opt-out"),
        }
    }
}

/// Unit-demand valuation; a single-item valuation has one entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Valuation {
    pub item_values: Vec<f64>,
}

impl Valuation {
    pub fn single(v: f64) -> Self {
        Valuation { item_values: vec![v] }
    }

    pub fn unit_demand(item_values: Vec<f64>) -> Self {
        Valuation { item_values }
    }

    pub fn value(&self, allocation: Allocation) -> f64 {
        allocation.map_or(0.0, |k| self.item_values.get(k).copied().unwrap_or(0.0))
    }

    /// The largest item value, used to normalize losing outcomes.
    pub fn reference(&self) -> f64 {
        self.item_values.iter().copied().fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.item_values.is_empty() {
            return Err(Error::InvalidParameter("valuation has no items".into()));
        }
        if let Some(v) = self.item_values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!("item value must be finite and non-negative, got {v}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mechanism {
    pub kind: MechanismKind,
    #[serde(default)]
    pub tie_break: TieBreak,
    pub n_players: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub allocation: Vec<Allocation>,
    pub payments: Vec<f64>,
}

impl OutcomeRecord {
    pub fn revenue(&self) -> f64 {
        self.payments.iter().sum()
    }
}

/// One outcome of a distribution, as serialized: `(allocation, payments, probability)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedOutcome {
    pub allocation: Vec<Allocation>,
    pub payments: Vec<f64>,
    pub probability: f64,
}

/// How to resolve the tie-break lottery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieResolution {
    /// Enumerate every tie-break outcome with its probability.
    Exhaustive,
    /// Draw one outcome from the given seed.
    Seeded(u64),
}

/// A single player's outcome, with its probability under the tie-break.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayerOutcome {
    pub allocation: Allocation,
    pub payment: f64,
    pub prob: f64,
}

/// A player's marginal outcome distribution for one action profile (at most
/// a win branch and a lose branch).
pub type PlayerView = ArrayVec<PlayerOutcome, 2>;

impl Mechanism {
    pub fn new(kind: MechanismKind, tie_break: TieBreak, n_players: usize) -> Result<Self> {
        if n_players == 0 {
            return Err(Error::InvalidParameter("mechanism needs at least one player".into()));
        }
        if kind == MechanismKind::TwoItemPreference && n_players != 2 {
            return Err(Error::InvalidParameter("two-item mechanism has exactly two players".into()));
        }
        Ok(Mechanism { kind, tie_break, n_players })
    }

    pub fn single_item(kind: MechanismKind, n_players: usize) -> Result<Self> {
        Self::new(kind, TieBreak::UniformRandom, n_players)
    }

    pub fn validate_profile(&self, actions: &[Action]) -> Result<()> {
        if actions.len() != self.n_players {
            return Err(Error::WrongArity { expected: self.n_players, got: actions.len() });
        }
        for a in actions {
            self.validate_action(a)?;
        }
        Ok(())
    }

    pub fn validate_action(&self, a: &Action) -> Result<()> {
        let ok = match (self.kind, a) {
            (MechanismKind::TwoItemPreference, Action::Claim(i)) => *i < 2,
            (MechanismKind::TwoItemPreference, Action::OptOut) => true,
            (_, Action::Bid(b)) if self.kind.is_single_item() => {
                if *b < 0.0 {
                    return Err(Error::NegativeBid(*b));
                }
                b.is_finite()
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidAction { action: a.to_string(), mechanism: self.kind.to_string() })
        }
    }

    /// Runs the mechanism on a validated profile, returning the outcome
    /// distribution induced by the tie-break.
    pub fn run(&self, actions: &[Action]) -> Result<Vec<WeightedOutcome>> {
        self.validate_profile(actions)?;
        Ok(self.outcomes_unchecked(actions))
    }

    /// Runs the mechanism and resolves ties as requested.
    pub fn run_with(&self, actions: &[Action], ties: TieResolution) -> Result<Vec<WeightedOutcome>> {
        let all = self.run(actions)?;
        match ties {
            TieResolution::Exhaustive => Ok(all),
            TieResolution::Seeded(seed) => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let draw: f64 = rng.gen();
                let mut acc = 0.0;
                let mut chosen = all.len() - 1;
                for (k, o) in all.iter().enumerate() {
                    acc += o.probability;
                    if draw < acc {
                        chosen = k;
                        break;
                    }
                }
                let mut o = all[chosen].clone();
                o.probability = 1.0;
                Ok(vec![o])
            }
        }
    }

    fn outcomes_unchecked(&self, actions: &[Action]) -> Vec<WeightedOutcome> {
        let n = self.n_players;
        if self.kind == MechanismKind::TwoItemPreference {
            let first = match actions[0] {
                Action::Claim(i) => Some(i),
                _ => None,
            };
            let second = match actions[1] {
                Action::OptOut => None,
                _ => Some(match first {
                    Some(i) => 1 - i,
                    None => 0,
                }),
            };
            return vec![WeightedOutcome {
                allocation: vec![first, second],
                payments: vec![0.0, 0.0],
                probability: 1.0,
            }];
        }
        let bids: Vec<f64> = actions.iter().map(|a| a.bid().unwrap_or(0.0)).collect();
        let top = bids.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = (0..n).filter(|&i| bids[i] == top).collect();
        let winners: Vec<(usize, f64)> = match self.tie_break {
            TieBreak::LowestIndex => vec![(tied[0], 1.0)],
            TieBreak::UniformRandom => {
                let p = 1.0 / tied.len() as f64;
                tied.iter().map(|&w| (w, p)).collect()
            }
        };
        winners
            .into_iter()
            .map(|(w, prob)| {
                let mut allocation = vec![None; n];
                allocation[w] = Some(0);
                let payments = (0..n)
                    .map(|i| self.single_item_payment(&bids, i, i == w))
                    .collect();
                WeightedOutcome { allocation, payments, probability: prob }
            })
            .collect()
    }

    fn single_item_payment(&self, bids: &[f64], i: usize, wins: bool) -> f64 {
        match self.kind {
            MechanismKind::FirstPrice => {
                if wins {
                    bids[i]
                } else {
                    0.0
                }
            }
            MechanismKind::AllPay => bids[i],
            MechanismKind::SecondPrice => {
                if wins {
                    bids.iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, &b)| b)
                        .fold(0.0, f64::max)
                } else {
                    0.0
                }
            }
            MechanismKind::TwoItemPreference => 0.0,
        }
    }

    /// Player `i`'s marginal outcome distribution, without allocating the
    /// full outcome list. The profile must already be valid.
    pub fn player_view(&self, i: usize, actions: &[Action]) -> PlayerView {
        let mut view = PlayerView::new();
        if self.kind == MechanismKind::TwoItemPreference {
            let alloc = match (i, actions[0], actions[1]) {
                (0, Action::Claim(k), _) => Some(k),
                (0, _, _) => None,
                (_, _, Action::OptOut) => None,
                (_, Action::Claim(k), _) => Some(1 - k),
                (_, _, _) => Some(0),
            };
            view.push(PlayerOutcome { allocation: alloc, payment: 0.0, prob: 1.0 });
            return view;
        }
        let own = actions[i].bid().unwrap_or(0.0);
        let mut max_other = f64::NEG_INFINITY;
        let mut ties = 0usize;
        let mut lower_tied = false;
        for (j, a) in actions.iter().enumerate() {
            if j == i {
                continue;
            }
            let b = a.bid().unwrap_or(0.0);
            if b > max_other {
                max_other = b;
            }
            if b == own {
                ties += 1;
                if j < i {
                    lower_tied = true;
                }
            }
        }
        let win_prob = if own > max_other {
            1.0
        } else if own < max_other {
            0.0
        } else {
            match self.tie_break {
                TieBreak::UniformRandom => 1.0 / (ties + 1) as f64,
                TieBreak::LowestIndex => {
                    if lower_tied {
                        0.0
                    } else {
                        1.0
                    }
                }
            }
        };
        let max_other = max_other.max(0.0);
        let (pay_win, pay_lose) = match self.kind {
            MechanismKind::FirstPrice => (own, 0.0),
            MechanismKind::AllPay => (own, own),
            MechanismKind::SecondPrice => (max_other, 0.0),
            MechanismKind::TwoItemPreference => unreachable!(),
        };
        if win_prob > 0.0 {
            view.push(PlayerOutcome { allocation: Some(0), payment: pay_win, prob: win_prob });
        }
        if win_prob < 1.0 {
            view.push(PlayerOutcome { allocation: None, payment: pay_lose, prob: 1.0 - win_prob });
        }
        view
    }

    /// Expected total payment of a valid profile.
    pub fn expected_revenue(&self, actions: &[Action]) -> f64 {
        (0..self.n_players)
            .map(|i| self.player_view(i, actions).iter().map(|o| o.prob * o.payment).sum::<f64>())
            .sum()
    }
}

/// Visits every profile of `grids` (one grid per player) in lexicographic order.
pub(crate) fn for_each_profile<T: Copy>(grids: &[&[T]], mut f: impl FnMut(&[T])) {
    if grids.iter().any(|g| g.is_empty()) {
        return;
    }
    let n = grids.len();
    let mut idx = vec![0usize; n];
    let mut profile: Vec<T> = grids.iter().map(|g| g[0]).collect();
    loop {
        f(&profile);
        let mut k = n;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < grids[k].len() {
                profile[k] = grids[k][idx[k]];
                break;
            }
            idx[k] = 0;
            profile[k] = grids[k][0];
        }
    }
}

/// Maximum payment player `player` can face with action `own` given that she
/// receives `allocation`, over all opponent profiles drawn from `opponent_grid`.
pub fn willingness_to_pay(
    m: &Mechanism,
    player: usize,
    own: Action,
    allocation: Allocation,
    opponent_grid: &[Action],
) -> Result<f64> {
    m.validate_action(&own)?;
    if player >= m.n_players {
        return Err(Error::InvalidParameter(format!("no player {player}")));
    }
    for a in opponent_grid {
        m.validate_action(a)?;
    }
    let grids: Vec<&[Action]> = (0..m.n_players)
        .map(|j| if j == player { std::slice::from_ref(&own) } else { opponent_grid })
        .collect();
    let mut best: Option<f64> = None;
    for_each_profile(&grids, |profile| {
        for o in m.player_view(player, profile) {
            if o.allocation == allocation && o.prob > 0.0 {
                best = Some(best.map_or(o.payment, |b: f64| b.max(o.payment)));
            }
        }
    });
    best.ok_or(Error::AllocationUnreachable { player })
}

/// A player action that could be charged more than its value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverbiddingViolation {
    pub player: usize,
    pub action: Action,
    pub allocation: Allocation,
    pub willingness_to_pay: f64,
    pub value: f64,
}

/// Checks `W_i(a_i, x) <= v_i(x)` for every support action and every
/// allocation reachable on the opponent grid.
///
/// `values[i][k]` is player `i`'s value for item `k`.
pub fn check_pointwise_no_overbidding(
    m: &Mechanism,
    support: &[Vec<Action>],
    values: &[Vec<f64>],
    opponent_grid: &[Action],
) -> Result<Option<OverbiddingViolation>> {
    if support.len() != m.n_players || values.len() != m.n_players {
        return Err(Error::WrongArity { expected: m.n_players, got: support.len().min(values.len()) });
    }
    let items = if m.kind.is_single_item() { 1 } else { 2 };
    let allocations: Vec<Allocation> = std::iter::once(None).chain((0..items).map(Some)).collect();
    for (i, acts) in support.iter().enumerate() {
        for &a in acts {
            for &x in &allocations {
                let w = match willingness_to_pay(m, i, a, x, opponent_grid) {
                    Ok(w) => w,
                    Err(Error::AllocationUnreachable { .. }) => continue,
                    Err(e) => return Err(e),
                };
                let v = x.map_or(0.0, |k| values[i].get(k).copied().unwrap_or(0.0));
                if w > v {
                    return Ok(Some(OverbiddingViolation {
                        player: i,
                        action: a,
                        allocation: x,
                        willingness_to_pay: w,
                        value: v,
                    }));
                }
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bids(b: &[f64]) -> Vec<Action> {
        b.iter().map(|&x| Action::Bid(x)).collect()
    }

    fn mech(kind: MechanismKind) -> Mechanism {
        Mechanism::single_item(kind, 2).unwrap()
    }

    #[test]
    fn first_price() {
        let out = mech(MechanismKind::FirstPrice).run(&bids(&[3.0, 2.0])).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].allocation, vec![Some(0), None]);
        assert_eq!(out[0].payments, vec![3.0, 0.0]);
    }

    #[test]
    fn second_price() {
        let out = mech(MechanismKind::SecondPrice).run(&bids(&[3.0, 2.0])).unwrap();
        assert_eq!(out[0].payments, vec![2.0, 0.0]);
    }

    #[test]
    fn all_pay() {
        let out = mech(MechanismKind::AllPay).run(&bids(&[3.0, 2.0])).unwrap();
        assert_eq!(out[0].allocation, vec![Some(0), None]);
        assert_eq!(out[0].payments, vec![3.0, 2.0]);
    }

    #[test]
    fn two_item_preference() {
        let m = Mechanism::new(MechanismKind::TwoItemPreference, TieBreak::UniformRandom, 2).unwrap();
        let out = m.run(&[Action::Claim(0), Action::Claim(0)]).unwrap();
        assert_eq!(out[0].allocation, vec![Some(0), Some(1)]);
        assert_eq!(out[0].payments, vec![0.0, 0.0]);
        let out = m.run(&[Action::Claim(1), Action::OptOut]).unwrap();
        assert_eq!(out[0].allocation, vec![Some(1), None]);
        assert!(m.run(&[Action::Bid(1.0), Action::OptOut]).is_err());
    }

    #[test]
    fn errors() {
        let m = mech(MechanismKind::FirstPrice);
        assert!(matches!(m.run(&bids(&[1.0])), Err(Error::WrongArity { .. })));
        assert!(matches!(m.run(&bids(&[1.0, -1.0])), Err(Error::NegativeBid(_))));
        assert!(matches!(m.run(&[Action::OptOut, Action::Bid(1.0)]), Err(Error::InvalidAction { .. })));
    }

    #[test]
    fn uniform_ties_are_fair() {
        let m = Mechanism::single_item(MechanismKind::FirstPrice, 3).unwrap();
        let out = m.run(&bids(&[2.0, 2.0, 2.0])).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|o| o.probability == 1.0 / 3.0));
        let lowest = Mechanism::new(MechanismKind::FirstPrice, TieBreak::LowestIndex, 3).unwrap();
        let out = lowest.run(&bids(&[1.0, 2.0, 2.0])).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].allocation, vec![None, Some(0), None]);
    }

    #[test]
    fn seeded_resolution_is_deterministic() {
        let m = Mechanism::single_item(MechanismKind::FirstPrice, 3).unwrap();
        let a = m.run_with(&bids(&[1.0, 1.0, 1.0]), TieResolution::Seeded(9)).unwrap();
        let b = m.run_with(&bids(&[1.0, 1.0, 1.0]), TieResolution::Seeded(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].probability, 1.0);
    }

    #[test]
    fn player_view_matches_run() {
        let m = Mechanism::single_item(MechanismKind::SecondPrice, 3).unwrap();
        let p = bids(&[1.0, 3.0, 3.0]);
        let out = m.run(&p).unwrap();
        for i in 0..3 {
            let view = m.player_view(i, &p);
            let win: f64 = view.iter().filter(|o| o.allocation.is_some()).map(|o| o.prob).sum();
            let win_run: f64 = out.iter().filter(|o| o.allocation[i].is_some()).map(|o| o.probability).sum();
            assert_eq!(win, win_run);
            let pay: f64 = view.iter().map(|o| o.prob * o.payment).sum();
            let pay_run: f64 = out.iter().map(|o| o.probability * o.payments[i]).sum();
            assert!((pay - pay_run).abs() < 1e-15);
        }
    }

    #[test]
    fn willingness_examples() {
        let grid = bids(&[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
        let fp = mech(MechanismKind::FirstPrice);
        assert_eq!(willingness_to_pay(&fp, 0, Action::Bid(3.0), Some(0), &grid).unwrap(), 3.0);
        let sp = mech(MechanismKind::SecondPrice);
        assert_eq!(willingness_to_pay(&sp, 0, Action::Bid(3.0), Some(0), &grid).unwrap(), 3.0);
        let ap = mech(MechanismKind::AllPay);
        assert_eq!(willingness_to_pay(&ap, 0, Action::Bid(3.0), None, &grid).unwrap(), 3.0);
        let high = bids(&[1.0, 2.0]);
        assert!(matches!(
            willingness_to_pay(&fp, 0, Action::Bid(0.0), Some(0), &high),
            Err(Error::AllocationUnreachable { .. })
        ));
    }

    #[test]
    fn no_overbidding_examples() {
        let grid: Vec<Action> = (0..=20).map(|k| Action::Bid(k as f64 * 0.5)).collect();
        let sp = mech(MechanismKind::SecondPrice);
        let vals = vec![vec![5.0], vec![5.0]];
        let ok = check_pointwise_no_overbidding(&sp, &[bids(&[3.0]), bids(&[0.0])], &vals, &grid).unwrap();
        assert!(ok.is_none());
        let bad = check_pointwise_no_overbidding(&sp, &[bids(&[6.0]), bids(&[0.0])], &vals, &grid).unwrap();
        let bad = bad.expect("overbidding must be detected");
        assert_eq!(bad.player, 0);
        assert_eq!(bad.action, Action::Bid(6.0));
        let fp = mech(MechanismKind::FirstPrice);
        let under = bids(&[0.0, 1.0, 2.5, 5.0]);
        let ok = check_pointwise_no_overbidding(&fp, &[under.clone(), under], &vals, &grid).unwrap();
        assert!(ok.is_none());
    }
}
