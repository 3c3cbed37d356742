//! Empirical price of anarchy over randomized game families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    cce_regret, ce_regret, dist_welfare, learn_hedge, learn_regret_matching, Dynamics, Game, HedgeConfig, LearningRate,
    RegretMatchingConfig,
};
use crate::error::{Error, Result};
use crate::mechanisms::{Mechanism, MechanismKind};
use crate::par;
use crate::utility::UtilityModel;
use crate::welfare::{opt_hat, optimal_welfare, single_item_outcomes, PaymentGrid, Player};

/// Single-item games with i.i.d. uniform values and a shared bid grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFamily {
    pub mechanism: MechanismKind,
    pub n_players: usize,
    pub model: UtilityModel,
    pub value_lo: f64,
    pub value_hi: f64,
    /// Bid grid: this many evenly spaced points on `[0, value_hi]`.
    pub bid_points: usize,
}

impl GameFamily {
    pub fn validate(&self) -> Result<()> {
        if self.n_players == 0 || self.bid_points < 2 {
            return Err(Error::InvalidParameter("family needs players and at least two bids".into()));
        }
        if !(0.0 < self.value_lo && self.value_lo <= self.value_hi && self.value_hi.is_finite()) {
            return Err(Error::InvalidParameter("value range must satisfy 0 < lo <= hi".into()));
        }
        self.model.validate()
    }

    pub fn bid_grid(&self) -> Vec<f64> {
        let step = self.value_hi / (self.bid_points - 1) as f64;
        (0..self.bid_points).map(|k| k as f64 * step).collect()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<Game> {
        let players = (0..self.n_players)
            .map(|_| Player::single(rng.gen_range(self.value_lo..=self.value_hi), self.model.clone()))
            .collect();
        let m = Mechanism::single_item(self.mechanism, self.n_players)?;
        Game::with_bid_grid(m, players, &self.bid_grid())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquilibriumSource {
    /// Correlated equilibria certified with `ce_regret`.
    RegretMatching {
        iterations: usize,
        #[serde(default)]
        dynamics: Dynamics,
    },
    /// Coarse correlated equilibria certified with `cce_regret`.
    Hedge { iterations: usize, rate: LearningRate },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoaRow {
    pub instance_id: usize,
    pub sw_eq: f64,
    pub opt: f64,
    pub opt_hat: f64,
    /// `opt / sw_eq`
    pub ratio: f64,
    pub regret: f64,
    pub threshold: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoaTable {
    /// Certified instances only.
    pub rows: Vec<PoaRow>,
    pub excluded: Vec<PoaRow>,
    pub max_ratio: f64,
}

impl PoaTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("instance_id,sw_eq,opt,opt_hat,ratio\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.instance_id,
                crate::fmt_f64(r.sw_eq),
                crate::fmt_f64(r.opt),
                crate::fmt_f64(r.opt_hat),
                crate::fmt_f64(r.ratio)
            ));
        }
        s
    }
}

/// Seed of the `k`-th instance; instances are independent of evaluation order.
pub(crate) fn instance_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Samples `n_instances` games, learns an equilibrium of each, and tabulates
/// welfare against OPT. Runs whose regret exceeds `relative_threshold · v_max`
/// are excluded and logged.
pub fn empirical_poa(
    family: &GameFamily,
    source: EquilibriumSource,
    n_instances: usize,
    seed: u64,
    relative_threshold: f64,
) -> Result<PoaTable> {
    family.validate()?;
    let rows = par::map_range(n_instances, |k| -> Result<PoaRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(seed, k));
        let game = family.sample(&mut rng)?;
        let learner_seed: u64 = rng.gen();
        let (dist, regret) = match source {
            EquilibriumSource::RegretMatching { iterations, dynamics } => {
                let cfg = RegretMatchingConfig { dynamics, ..RegretMatchingConfig::new(iterations, learner_seed) };
                let out = learn_regret_matching(&game, &cfg)?;
                let r = ce_regret(&game, &out.dist, 0.0)?;
                (out.dist, r.max_regret)
            }
            EquilibriumSource::Hedge { iterations, rate } => {
                let cfg = HedgeConfig { rate, ..HedgeConfig::new(iterations, learner_seed) };
                let out = learn_hedge(&game, &cfg)?;
                let r = cce_regret(&game, &out.dist, 0.0)?;
                (out.dist, r.max_regret)
            }
        };
        let sw_eq = dist_welfare(&game, &dist, 0.0)?;
        let outcomes = single_item_outcomes(game.n_players());
        let opt = optimal_welfare(&game.players, &outcomes, PaymentGrid::default())?.value;
        let hat = opt_hat(&game.players, &outcomes)?;
        let threshold = relative_threshold * game.v_max();
        Ok(PoaRow {
            instance_id: k,
            sw_eq,
            opt,
            opt_hat: hat,
            ratio: if sw_eq > 0.0 { opt / sw_eq } else { f64::INFINITY },
            regret,
            threshold,
            certified: regret <= threshold,
        })
    });
    let mut table = PoaTable { rows: Vec::new(), excluded: Vec::new(), max_ratio: 0.0 };
    for r in rows {
        let r = r?;
        if r.certified {
            table.max_ratio = table.max_ratio.max(r.ratio);
            table.rows.push(r);
        } else {
            log::warn!("instance {} excluded: regret {} above {}", r.instance_id, r.regret, r.threshold);
            table.excluded.push(r);
        }
    }
    Ok(table)
}
