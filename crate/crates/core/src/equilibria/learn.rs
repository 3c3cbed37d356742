//! Seeded no-regret learners with full-information counterfactuals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorrelatedDist, Game};
use crate::error::{Error, Result};
use crate::mechanisms::Action;
use crate::par;

/// Expected utility of every player at every profile of the game's grids.
struct PayoffTable {
    dims: Vec<usize>,
    strides: Vec<usize>,
    /// `values[profile * n + i]`
    values: Vec<f64>,
}

impl PayoffTable {
    fn build(game: &Game) -> Result<Self> {
        let n = game.n_players();
        let dims: Vec<usize> = game.action_grids.iter().map(Vec::len).collect();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let total: usize = dims.iter().product();
        let rows = par::map_range(total, |idx| -> Result<Vec<f64>> {
            let profile: Vec<Action> = (0..n).map(|i| game.action_grids[i][(idx / strides[i]) % dims[i]]).collect();
            (0..n).map(|i| game.moments(i, &profile).map(|m| m.mean)).collect()
        });
        let mut values = Vec::with_capacity(total * n);
        for r in rows {
            values.extend(r?);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("learners need finite payoffs on the whole grid".into()));
        }
        Ok(PayoffTable { dims, strides, values })
    }

    fn n(&self) -> usize {
        self.dims.len()
    }

    fn get(&self, profile: usize, i: usize) -> f64 {
        self.values[profile * self.n() + i]
    }

    fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    fn range(&self, i: usize) -> f64 {
        let (lo, hi) = (0..self.values.len() / self.n())
            .map(|p| self.get(p, i))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        (hi - lo).max(1e-12)
    }

    fn to_dist(&self, game: &Game, counts: &[f64]) -> CorrelatedDist {
        let total: f64 = counts.iter().sum();
        let entries = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0.0)
            .map(|(p, &c)| {
                let profile = (0..self.n()).map(|i| game.action_grids[i][(p / self.strides[i]) % self.dims[i]]).collect();
                (profile, c / total)
            })
            .collect();
        CorrelatedDist { entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub regret: f64,
}

const DEFAULT_INERTIA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretMatchingConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Number of trace checkpoints.
    pub checkpoints: usize,
    /// Optional correlation device: each round's reference actions are drawn
    /// from it instead of the previous round's play.
    pub warm_start: Option<CorrelatedDist>,
    /// Switching normalizer `μ` as a multiple of the player's payoff range.
    pub inertia: f64,
    pub dynamics: Dynamics,
}

/// How regret matching turns regrets into play.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// Sampled play with conditional switching probabilities; the output is
    /// the empirical distribution of the sampled profiles.
    #[default]
    Sampled,
    /// Each player plays the stationary distribution of her positive
    /// swap regrets (regret matching+ per recommended action) against the
    /// opponents' mixed strategies; the output is the exact average of the
    /// product distributions played.
    Expected,
}

impl RegretMatchingConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        RegretMatchingConfig { iterations, seed, checkpoints: 100, warm_start: None, inertia: DEFAULT_INERTIA, dynamics: Dynamics::Sampled }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretMatchingOutcome {
    /// Empirical distribution of play.
    pub dist: CorrelatedDist,
    /// Largest per-player swap regret of the empirical play over time.
    pub trace: Vec<TracePoint>,
    /// Final per-player swap regret, `Σ_j max_k R_jk^+ / T`.
    pub player_regret: Vec<f64>,
    pub reported_regret: f64,
}

fn validate_iterations(iterations: usize) -> Result<()> {
    if iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be positive".into()));
    }
    Ok(())
}

fn checkpoint_every(iterations: usize, checkpoints: usize) -> usize {
    (iterations / checkpoints.max(1)).max(1)
}

fn swap_regret(r: &[f64], m: usize, t: f64) -> f64 {
    (0..m)
        .map(|j| r[j * m..(j + 1) * m].iter().copied().fold(0.0, f64::max))
        .sum::<f64>()
        / t
}

/// Conditional regret matching: a player who last played `j` switches to `k`
/// with probability `R_jk^+ / (μ t)`, where `R_jk` is the cumulative gain of
/// having played `k` whenever she played `j`. The empirical joint play
/// approaches the set of correlated equilibria.
pub fn learn_regret_matching(game: &Game, cfg: &RegretMatchingConfig) -> Result<RegretMatchingOutcome> {
    validate_iterations(cfg.iterations)?;
    let table = PayoffTable::build(game)?;
    match cfg.dynamics {
        Dynamics::Sampled => sampled_regret_matching(game, &table, cfg),
        Dynamics::Expected => {
            if cfg.warm_start.is_some() {
                return Err(Error::InvalidParameter("warm start needs sampled dynamics".into()));
            }
            expected_regret_matching(game, &table, cfg)
        }
    }
}

fn sampled_regret_matching(game: &Game, table: &PayoffTable, cfg: &RegretMatchingConfig) -> Result<RegretMatchingOutcome> {
    let n = table.n();
    let dims = table.dims.clone();
    if !(cfg.inertia > 0.0) {
        return Err(Error::InvalidParameter("inertia must be positive".into()));
    }
    let mu: Vec<f64> = (0..n).map(|i| cfg.inertia * table.range(i)).collect();
    let mut regrets: Vec<Vec<f64>> = dims.iter().map(|&m| vec![0.0; m * m]).collect();
    let mut counts = vec![0.0f64; table.values.len() / n];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let warm: Option<(Vec<Vec<usize>>, Vec<f64>)> = match &cfg.warm_start {
        None => None,
        Some(d) => {
            let mut idxs = Vec::new();
            let mut cum = Vec::new();
            let mut acc = 0.0;
            for (profile, q) in &d.entries {
                let mut idx = Vec::with_capacity(n);
                for (i, a) in profile.iter().enumerate() {
                    let k = game.action_grids[i]
                        .iter()
                        .position(|b| b == a)
                        .ok_or_else(|| Error::InvalidParameter(format!("warm-start action {a} is off the grid")))?;
                    idx.push(k);
                }
                acc += q;
                idxs.push(idx);
                cum.push(acc);
            }
            Some((idxs, cum))
        }
    };
    let draw_warm = |rng: &mut ChaCha8Rng| -> Option<Vec<usize>> {
        warm.as_ref().map(|(idxs, cum)| {
            let r = rng.gen::<f64>() * cum[cum.len() - 1];
            idxs[cum.partition_point(|&c| c <= r).min(idxs.len() - 1)].clone()
        })
    };

    let mut reference: Vec<usize> = match draw_warm(&mut rng) {
        Some(idx) => idx,
        None => dims.iter().map(|&m| rng.gen_range(0..m)).collect(),
    };
    let mut played = reference.clone();
    let every = checkpoint_every(cfg.iterations, cfg.checkpoints);
    let mut trace = Vec::new();
    for t in 1..=cfg.iterations {
        // choose this round's actions from the reference actions
        for i in 0..n {
            let m = dims[i];
            let j = reference[i];
            let row = &regrets[i][j * m..(j + 1) * m];
            let positive: f64 = row.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &g)| g.max(0.0)).sum();
            // switching mass above one is renormalized
            let r: f64 = rng.gen::<f64>() * (mu[i] * t as f64).max(positive);
            let mut acc = 0.0;
            played[i] = j;
            for (k, &g) in row.iter().enumerate() {
                if k == j || g <= 0.0 {
                    continue;
                }
                acc += g;
                if r < acc {
                    played[i] = k;
                    break;
                }
            }
        }
        let p = table.index(&played);
        counts[p] += 1.0;
        for i in 0..n {
            let m = dims[i];
            let j = played[i];
            let base = p - j * table.strides[i];
            let uj = table.get(p, i);
            let row = &mut regrets[i][j * m..(j + 1) * m];
            for (k, r) in row.iter_mut().enumerate() {
                *r += table.get(base + k * table.strides[i], i) - uj;
            }
        }
        if t % every == 0 || t == cfg.iterations {
            let worst = (0..n).map(|i| swap_regret(&regrets[i], dims[i], t as f64)).fold(0.0, f64::max);
            trace.push(TracePoint { iteration: t, regret: worst });
        }
        reference = match draw_warm(&mut rng) {
            Some(idx) => idx,
            None => played.clone(),
        };
    }
    let tf = cfg.iterations as f64;
    let player_regret: Vec<f64> = (0..n).map(|i| swap_regret(&regrets[i], dims[i], tf)).collect();
    Ok(RegretMatchingOutcome {
        dist: table.to_dist(game, &counts),
        trace,
        reported_regret: player_regret.iter().copied().fold(0.0, f64::max),
        player_regret,
    })
}

/// `kron(qs[0], qs[1], ...)` in profile index order.
fn kron(qs: &[Vec<f64>], out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    for q in qs {
        let prev = std::mem::take(out);
        out.reserve(prev.len() * q.len());
        for a in &prev {
            for b in q {
                out.push(a * b);
            }
        }
    }
}

/// Stationary distribution of the row-stochastic matrix `m` (size `k × k`),
/// by Gaussian elimination on `π (M − I) = 0, Σ π = 1`, falling back to
/// power iteration from `start` when the system is singular.
fn stationary(m: &[f64], k: usize, start: &[f64]) -> Vec<f64> {
    // a[r][c] = (M^T − I)[r][c], last row replaced by ones
    let mut a = vec![0.0; k * (k + 1)];
    for r in 0..k {
        for c in 0..k {
            a[r * (k + 1) + c] = m[c * k + r] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..k {
        a[(k - 1) * (k + 1) + c] = 1.0;
    }
    a[(k - 1) * (k + 1) + k] = 1.0;
    let w = k + 1;
    let mut ok = true;
    for col in 0..k {
        let piv = (col..k).max_by(|&x, &y| a[x * w + col].abs().total_cmp(&a[y * w + col].abs())).unwrap();
        if a[piv * w + col].abs() < 1e-13 {
            ok = false;
            break;
        }
        if piv != col {
            for c in 0..w {
                a.swap(piv * w + c, col * w + c);
            }
        }
        let d = a[col * w + col];
        for r in 0..k {
            if r != col {
                let f = a[r * w + col] / d;
                if f != 0.0 {
                    for c in col..w {
                        a[r * w + c] -= f * a[col * w + c];
                    }
                }
            }
        }
    }
    if ok {
        let pi: Vec<f64> = (0..k).map(|r| (a[r * w + k] / a[r * w + r]).max(0.0)).collect();
        let s: f64 = pi.iter().sum();
        if s > 0.0 && s.is_finite() {
            return pi.into_iter().map(|x| x / s).collect();
        }
    }
    let mut pi = start.to_vec();
    let mut next = vec![0.0; k];
    for _ in 0..1000 {
        next.iter_mut().for_each(|x| *x = 0.0);
        for r in 0..k {
            for c in 0..k {
                next[c] += 0.5 * pi[r] * (m[r * k + c] + if r == c { 1.0 } else { 0.0 });
            }
        }
        std::mem::swap(&mut pi, &mut next);
    }
    pi
}

fn expected_regret_matching(game: &Game, table: &PayoffTable, cfg: &RegretMatchingConfig) -> Result<RegretMatchingOutcome> {
    let n = table.n();
    let dims = table.dims.clone();
    let total = table.values.len() / n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q: Vec<Vec<f64>> = dims
        .iter()
        .map(|&m| {
            let w: Vec<f64> = (0..m).map(|_| 0.5 + rng.gen::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let mut plus: Vec<Vec<f64>> = dims.iter().map(|&m| vec![0.0; m * m]).collect();
    let mut plain: Vec<Vec<f64>> = dims.iter().map(|&m| vec![0.0; m * m]).collect();
    let mut joint = vec![0.0; total];
    let mut prod = Vec::with_capacity(total);
    let (mut before, mut after) = (Vec::new(), Vec::new());
    let mut u: Vec<Vec<f64>> = dims.iter().map(|&m| vec![0.0; m]).collect();
    let mut markov: Vec<f64> = Vec::new();
    let mut markov_prev: Vec<Vec<f64>> = vec![Vec::new(); n];
    let every = checkpoint_every(cfg.iterations, cfg.checkpoints);
    let mut trace = Vec::new();
    for t in 1..=cfg.iterations {
        // linear averaging: round t carries weight t
        let wt = t as f64;
        kron(&q, &mut prod);
        for (j, p) in joint.iter_mut().zip(&prod) {
            *j += wt * p;
        }
        for i in 0..n {
            kron(&q[..i], &mut before);
            kron(&q[i + 1..], &mut after);
            let m = dims[i];
            let stride = table.strides[i];
            for (k, uk) in u[i].iter_mut().enumerate() {
                let mut acc = 0.0;
                for (o, wa) in before.iter().enumerate() {
                    let base = o * m * stride + k * stride;
                    let mut inner = 0.0;
                    for (r, wb) in after.iter().enumerate() {
                        inner += wb * table.get(base + r, i);
                    }
                    acc += wa * inner;
                }
                *uk = acc;
            }
        }
        for i in 0..n {
            let m = dims[i];
            for j in 0..m {
                let qj = q[i][j];
                // base learner j played row j of the previous Markov matrix
                let played: f64 = if markov_prev[i].is_empty() {
                    u[i].iter().sum::<f64>() / m as f64
                } else {
                    markov_prev[i][j * m..(j + 1) * m].iter().zip(&u[i]).map(|(a, b)| a * b).sum()
                };
                for k in 0..m {
                    plain[i][j * m + k] += wt * qj * (u[i][k] - u[i][j]);
                    let r = &mut plus[i][j * m + k];
                    *r = (*r + qj * (u[i][k] - played)).max(0.0);
                }
            }
            markov.clear();
            for j in 0..m {
                let row = &plus[i][j * m..(j + 1) * m];
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    markov.extend(row.iter().map(|x| x / s));
                } else {
                    markov.extend(std::iter::repeat(1.0 / m as f64).take(m));
                }
            }
            q[i] = stationary(&markov, m, &q[i]);
            markov_prev[i].clone_from(&markov);
        }
        let weight_sum = wt * (wt + 1.0) / 2.0;
        if t % every == 0 || t == cfg.iterations {
            let worst = (0..n).map(|i| swap_regret(&plain[i], dims[i], weight_sum)).fold(0.0, f64::max);
            trace.push(TracePoint { iteration: t, regret: worst });
        }
    }
    let tf = cfg.iterations as f64;
    let weight_sum = tf * (tf + 1.0) / 2.0;
    let player_regret: Vec<f64> = (0..n).map(|i| swap_regret(&plain[i], dims[i], weight_sum)).collect();
    let cut = 1e-15 * weight_sum;
    for j in joint.iter_mut() {
        if *j < cut {
            *j = 0.0;
        }
    }
    Ok(RegretMatchingOutcome {
        dist: table.to_dist(game, &joint),
        trace,
        reported_regret: player_regret.iter().copied().fold(0.0, f64::max),
        player_regret,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    Constant { eta: f64 },
    /// `eta / sqrt(t)`
    InverseSqrt { eta: f64 },
}

impl LearningRate {
    fn at(&self, t: usize) -> f64 {
        match *self {
            LearningRate::Constant { eta } => eta,
            LearningRate::InverseSqrt { eta } => eta / (t as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeConfig {
    pub iterations: usize,
    pub seed: u64,
    pub rate: LearningRate,
    pub checkpoints: usize,
}

impl HedgeConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        HedgeConfig { iterations, seed, rate: LearningRate::InverseSqrt { eta: 1.0 }, checkpoints: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeOutcome {
    /// Time-averaged mixed strategy of each player over her grid.
    pub mixed: Vec<Vec<f64>>,
    /// Empirical distribution of the sampled joint play.
    pub dist: CorrelatedDist,
    /// Largest per-player external regret of the sampled play over time.
    pub trace: Vec<TracePoint>,
    pub player_regret: Vec<f64>,
    pub reported_regret: f64,
}

/// Multiplicative weights on payoffs rescaled to unit range; the empirical
/// joint play approaches the set of coarse correlated equilibria.
pub fn learn_hedge(game: &Game, cfg: &HedgeConfig) -> Result<HedgeOutcome> {
    validate_iterations(cfg.iterations)?;
    let table = PayoffTable::build(game)?;
    let n = table.n();
    let dims = table.dims.clone();
    let scale: Vec<f64> = (0..n).map(|i| table.range(i)).collect();
    let mut cumulative: Vec<Vec<f64>> = dims.iter().map(|&m| vec![0.0; m]).collect();
    let mut realized = vec![0.0f64; n];
    let mut avg_mixed: Vec<Vec<f64>> = dims.iter().map(|&m| vec![0.0; m]).collect();
    let mut counts = vec![0.0f64; table.values.len() / n];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut played = vec![0usize; n];
    let mut weights: Vec<Vec<f64>> = dims.iter().map(|&m| vec![0.0; m]).collect();
    let every = checkpoint_every(cfg.iterations, cfg.checkpoints);
    let mut trace = Vec::new();
    for t in 1..=cfg.iterations {
        let eta = cfg.rate.at(t);
        for i in 0..n {
            let top = cumulative[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (w, &c) in weights[i].iter_mut().zip(&cumulative[i]) {
                *w = (eta * (c - top) / scale[i]).exp();
                total += *w;
            }
            let r = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            played[i] = dims[i] - 1;
            for (k, w) in weights[i].iter().enumerate() {
                acc += w;
                if r < acc {
                    played[i] = k;
                    break;
                }
            }
            for (a, w) in avg_mixed[i].iter_mut().zip(&weights[i]) {
                *a += w / total;
            }
        }
        let p = table.index(&played);
        counts[p] += 1.0;
        for i in 0..n {
            let base = p - played[i] * table.strides[i];
            realized[i] += table.get(p, i);
            for (k, c) in cumulative[i].iter_mut().enumerate() {
                *c += table.get(base + k * table.strides[i], i);
            }
        }
        if t % every == 0 || t == cfg.iterations {
            let worst = (0..n)
                .map(|i| external_regret(&cumulative[i], realized[i], t as f64))
                .fold(0.0, f64::max);
            trace.push(TracePoint { iteration: t, regret: worst });
        }
    }
    let tf = cfg.iterations as f64;
    let player_regret: Vec<f64> = (0..n).map(|i| external_regret(&cumulative[i], realized[i], tf)).collect();
    for row in &mut avg_mixed {
        for a in row.iter_mut() {
            *a /= tf;
        }
    }
    Ok(HedgeOutcome {
        mixed: avg_mixed,
        dist: table.to_dist(game, &counts),
        trace,
        reported_regret: player_regret.iter().copied().fold(0.0, f64::max),
        player_regret,
    })
}

fn external_regret(cumulative: &[f64], realized: f64, t: f64) -> f64 {
    let best = cumulative.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ((best - realized) / t).max(0.0)
}
