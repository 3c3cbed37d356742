//! Subcommands: parameters (config block + flag overrides) and runners.

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use riskpoa_core::constructions::{
    bounded_slope_poa_bound, observation1_dist, two_item_verify, verify_theorem6, Observation1Report, Theorem6Config,
};
use riskpoa_core::equilibria::{
    cce_regret, ce_regret, empirical_poa, learn_hedge, learn_regret_matching, CorrelatedDist, Dynamics,
    EquilibriumSource, Game, GameFamily, HedgeConfig, LearningRate, RegretMatchingConfig, TracePoint,
};
use riskpoa_core::mechanisms::{Mechanism, MechanismKind};
use riskpoa_core::smoothness::{
    certify_smoothness, certify_weak_smoothness, Benchmark, DeviationRule, SmoothnessInstance, SmoothnessParams,
    WeakSmoothnessParams,
};
use riskpoa_core::utility::{check_normalization, ConcaveTransform, UtilityModel};
use riskpoa_core::welfare::{check_lemma1, opt_hat, single_item_outcomes, PaymentGrid, Player};
use riskpoa_core::{constructions, fmt_f64};

use crate::config::{self, emit, parse_deviation, parse_mechanism, parse_range, parse_utility, Grid, Run, Status};

/// Copies every flag that was given onto the parameter block.
macro_rules! overlay {
    ($p:ident, $a:ident; $($f:ident),* $(,)?) => {
        $( if let Some(v) = $a.$f.clone() { $p.$f = v; } )*
    };
}

macro_rules! overlay_opt {
    ($p:ident, $a:ident; $($f:ident),* $(,)?) => {
        $( if let Some(v) = $a.$f.clone() { $p.$f = Some(v); } )*
    };
}

fn trace_csv(trace: &[TracePoint]) -> String {
    let mut s = String::from("iteration,regret\n");
    for t in trace {
        s.push_str(&format!("{},{}\n", t.iteration, fmt_f64(t.regret)));
    }
    s
}

// verify-theorem6 -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theorem6Params {
    pub m: f64,
    /// Quadrature tolerance.
    pub tol: f64,
    /// Value grid size, split evenly between `[1/2, 1)` and `[1, M]`.
    pub grid_values: usize,
    /// Extra uniform bids.
    pub grid_bids: usize,
    pub player3_bids: usize,
    pub regret_threshold: f64,
    pub out: Option<PathBuf>,
}

impl Default for Theorem6Params {
    fn default() -> Self {
        let c = Theorem6Config::new(8.0);
        Theorem6Params {
            m: c.m,
            tol: c.quad_tol,
            grid_values: c.low_values + c.high_values,
            grid_bids: c.extra_bids,
            player3_bids: c.player3_bids,
            regret_threshold: c.regret_threshold,
            out: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct Theorem6Args {
    /// Support parameter M (> 5).
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    grid_values: Option<usize>,
    #[arg(long)]
    grid_bids: Option<usize>,
    #[arg(long)]
    player3_bids: Option<usize>,
    #[arg(long)]
    regret_threshold: Option<f64>,
    /// JSON report path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn verify_theorem6_cmd(base: Option<Theorem6Params>, a: &Theorem6Args) -> Result<Status> {
    let mut p = base.unwrap_or_default();
    overlay!(p, a; m, tol, grid_values, grid_bids, player3_bids, regret_threshold);
    overlay_opt!(p, a; out);
    let run = Run::new("verify-theorem6", &p)?;
    let cfg = Theorem6Config {
        m: p.m,
        low_values: p.grid_values / 2,
        high_values: p.grid_values - p.grid_values / 2,
        extra_bids: p.grid_bids,
        player3_bids: p.player3_bids,
        regret_threshold: p.regret_threshold,
        quad_tol: p.tol,
    };
    let report = verify_theorem6(&cfg)?;
    log::info!("M={}: ratio lower bound {}, passed {}", report.m, report.ratio_lower, report.passed);
    let status = if report.passed { Status::Pass } else { Status::Falsified };
    emit(p.out.as_ref(), &run.json(status, &report)?)?;
    Ok(status)
}

// learn -----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    RegretMatching,
    Hedge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsArg {
    Sampled,
    Expected,
}

impl From<DynamicsArg> for Dynamics {
    fn from(d: DynamicsArg) -> Self {
        match d {
            DynamicsArg::Sampled => Dynamics::Sampled,
            DynamicsArg::Expected => Dynamics::Expected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    /// Anti-coordinated (1, 0) / (0, 1) second-price play.
    Observation1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnParams {
    pub mechanism: MechanismKind,
    pub utility: UtilityModel,
    /// Variance weight used when certifying.
    pub gamma: f64,
    pub values: Vec<f64>,
    /// Shared bid grid; 21 points on `[0, max value]` when absent.
    pub bids: Option<Grid>,
    pub learner: Learner,
    pub dynamics: DynamicsArg,
    pub iters: usize,
    pub seed: u64,
    pub warm_start: Option<WarmStart>,
    /// Certification threshold as a fraction of the largest value.
    pub threshold: f64,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

impl Default for LearnParams {
    fn default() -> Self {
        LearnParams {
            mechanism: MechanismKind::FirstPrice,
            utility: UtilityModel::Quasilinear,
            gamma: 0.0,
            values: vec![1.0, 1.0],
            bids: None,
            learner: Learner::RegretMatching,
            dynamics: DynamicsArg::Sampled,
            iters: 100_000,
            seed: 0,
            warm_start: None,
            threshold: 1e-3,
            out: None,
            trace: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// first-price, second-price or all-pay.
    #[arg(long, value_parser = parse_mechanism)]
    mechanism: Option<MechanismKind>,
    /// quasilinear, exponential or piecewise:<slope>.
    #[arg(long, value_parser = parse_utility)]
    utility: Option<UtilityModel>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated player values.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    values: Option<Vec<f64>>,
    /// Bid grid as lo:hi:points[:geometric].
    #[arg(long)]
    bids: Option<Grid>,
    #[arg(long, value_enum)]
    learner: Option<Learner>,
    #[arg(long, value_enum)]
    dynamics: Option<DynamicsArg>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    warm_start: Option<WarmStart>,
    #[arg(long)]
    threshold: Option<f64>,
    /// JSON report path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV path for the regret trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct LearnReport {
    learner: Learner,
    reported_regret: f64,
    learner_player_regret: Vec<f64>,
    /// `ce` for regret matching, `cce` for hedge.
    certificate_kind: &'static str,
    player_regret: Vec<f64>,
    max_regret: f64,
    threshold: f64,
    certified: bool,
    welfare: f64,
    opt_hat: f64,
    distribution: CorrelatedDist,
}

pub fn learn_cmd(base: Option<LearnParams>, a: &LearnArgs) -> Result<Status> {
    let mut p = base.unwrap_or_default();
    overlay!(p, a; mechanism, utility, gamma, values, learner, dynamics, iters, seed, threshold);
    overlay_opt!(p, a; bids, warm_start, out, trace);
    let run = Run::new("learn", &p)?;

    ensure!(!p.values.is_empty(), "at least one player value is required");
    ensure!(p.threshold >= 0.0, "threshold must be non-negative");
    let v_max = p.values.iter().copied().fold(0.0, f64::max);
    let bids = p.bids.clone().unwrap_or_else(|| Grid::new(0.0, v_max, 21)).build()?;
    let players: Vec<Player> = p.values.iter().map(|&v| Player::single(v, p.utility.clone())).collect();
    let game = Game::with_bid_grid(Mechanism::single_item(p.mechanism, players.len())?, players, &bids)?;

    let (dist, trace, reported, learner_regret) = match p.learner {
        Learner::RegretMatching => {
            let mut cfg = RegretMatchingConfig::new(p.iters, p.seed);
            cfg.dynamics = p.dynamics.into();
            cfg.warm_start = p.warm_start.map(|WarmStart::Observation1| observation1_dist());
            let out = learn_regret_matching(&game, &cfg)?;
            (out.dist, out.trace, out.reported_regret, out.player_regret)
        }
        Learner::Hedge => {
            ensure!(p.warm_start.is_none(), "warm start is only available for regret matching");
            let out = learn_hedge(&game, &HedgeConfig::new(p.iters, p.seed))?;
            (out.dist, out.trace, out.reported_regret, out.player_regret)
        }
    };
    let (kind, cert) = match p.learner {
        Learner::RegretMatching => ("ce", ce_regret(&game, &dist, p.gamma)?),
        Learner::Hedge => ("cce", cce_regret(&game, &dist, p.gamma)?),
    };
    let threshold = p.threshold * game.v_max();
    let certified = cert.max_regret <= threshold;
    if !certified {
        log::warn!("{kind} regret {} exceeds threshold {threshold}", cert.max_regret);
    }
    let report = LearnReport {
        learner: p.learner,
        reported_regret: reported,
        learner_player_regret: learner_regret,
        certificate_kind: kind,
        player_regret: cert.player_regret.clone(),
        max_regret: cert.max_regret,
        threshold,
        certified,
        welfare: cert.welfare,
        opt_hat: opt_hat(&game.players, &single_item_outcomes(game.n_players()))?,
        distribution: dist,
    };
    let status = if certified { Status::Pass } else { Status::Uncertified };
    if let Some(path) = &p.trace {
        emit(Some(path), &run.csv(&trace_csv(&trace)))?;
    }
    emit(p.out.as_ref(), &run.json(status, &report)?)?;
    Ok(status)
}

// certify ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyParams {
    pub mechanism: MechanismKind,
    pub players: usize,
    pub utility: UtilityModel,
    pub values: Grid,
    /// Bid grid.
    pub grid: Grid,
    pub deviation: DeviationRule,
    pub benchmark: Benchmark,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Default for CertifyParams {
    fn default() -> Self {
        CertifyParams {
            mechanism: MechanismKind::FirstPrice,
            players: 2,
            utility: UtilityModel::Quasilinear,
            values: Grid::new(0.2, 1.0, 5),
            grid: Grid::new(0.0, 1.0, 11),
            deviation: DeviationRule::HalfValueTopBidder,
            benchmark: Benchmark::OptHat,
            lambda: None,
            mu: None,
            mu1: None,
            mu2: None,
            out: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, value_parser = parse_mechanism)]
    mechanism: Option<MechanismKind>,
    #[arg(long)]
    players: Option<usize>,
    #[arg(long, value_parser = parse_utility)]
    utility: Option<UtilityModel>,
    /// Type grid as lo:hi:points.
    #[arg(long)]
    values: Option<Grid>,
    /// Bid grid as lo:hi:points[:geometric].
    #[arg(long)]
    grid: Option<Grid>,
    /// half-value, uniform or truthful.
    #[arg(long, value_parser = parse_deviation)]
    deviation: Option<DeviationRule>,
    #[arg(long, value_enum)]
    benchmark: Option<BenchmarkArg>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, conflicts_with_all = ["mu1", "mu2"])]
    mu: Option<f64>,
    #[arg(long, requires = "mu2")]
    mu1: Option<f64>,
    #[arg(long, requires = "mu1")]
    mu2: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BenchmarkArg {
    OptHat,
    RiskAverseOpt,
    Liquid,
}

pub fn certify_cmd(base: Option<CertifyParams>, a: &CertifyArgs) -> Result<Status> {
    let mut p = base.unwrap_or_default();
    overlay!(p, a; mechanism, players, utility, values, grid, deviation);
    if let Some(b) = a.benchmark {
        p.benchmark = match b {
            BenchmarkArg::OptHat => Benchmark::OptHat,
            BenchmarkArg::RiskAverseOpt => Benchmark::RiskAverseOpt,
            BenchmarkArg::Liquid => Benchmark::Liquid,
        };
    }
    if a.mu.is_some() {
        (p.mu1, p.mu2) = (None, None);
    }
    if a.mu1.is_some() {
        p.mu = None;
    }
    overlay_opt!(p, a; lambda, mu, mu1, mu2, out);
    let run = Run::new("certify", &p)?;

    let mut inst = SmoothnessInstance::quasilinear(p.mechanism, p.players, p.values.build()?, p.grid.build()?)?;
    inst.models = vec![p.utility.clone(); p.players];
    inst.benchmark = p.benchmark;
    let lambda = p.lambda.context("--lambda is required")?;
    let cert = match (p.mu, p.mu1, p.mu2) {
        (Some(mu), None, None) => certify_smoothness(&inst, &p.deviation, SmoothnessParams::new(lambda, mu)?)?,
        (None, Some(mu1), Some(mu2)) => {
            certify_weak_smoothness(&inst, &p.deviation, WeakSmoothnessParams::new(lambda, mu1, mu2)?)?
        }
        _ => bail!("give either --mu or both --mu1 and --mu2"),
    };
    match &cert.counterexample {
        Some(c) => log::info!("counterexample types {:?} bids {:?} slack {}", c.types, c.bids, c.slack),
        None => log::info!("certified, min slack {}", cert.min_slack),
    }
    let status = if cert.certified { Status::Pass } else { Status::Falsified };
    emit(p.out.as_ref(), &run.json(status, &cert)?)?;
    Ok(status)
}

// poa-sweep -------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoaSweepParams {
    pub family: GameFamily,
    pub learner: Learner,
    pub dynamics: DynamicsArg,
    pub iters: usize,
    pub n: usize,
    pub seed: u64,
    pub threshold: f64,
    /// CSV table path (stdout if omitted).
    pub out: Option<PathBuf>,
    /// JSON summary path.
    pub report: Option<PathBuf>,
}

impl Default for PoaSweepParams {
    fn default() -> Self {
        PoaSweepParams {
            family: GameFamily {
                mechanism: MechanismKind::AllPay,
                n_players: 2,
                model: UtilityModel::Quasilinear,
                value_lo: 0.2,
                value_hi: 1.0,
                bid_points: 21,
            },
            learner: Learner::RegretMatching,
            dynamics: DynamicsArg::Expected,
            iters: 20_000,
            n: 10,
            seed: 0,
            threshold: 1e-3,
            out: None,
            report: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct PoaSweepArgs {
    /// Mechanism of the game family.
    #[arg(long, value_parser = parse_mechanism)]
    family: Option<MechanismKind>,
    #[arg(long)]
    players: Option<usize>,
    #[arg(long, value_parser = parse_utility)]
    utility: Option<UtilityModel>,
    /// Value range as lo:hi.
    #[arg(long, value_parser = parse_range)]
    values: Option<(f64, f64)>,
    #[arg(long)]
    bid_points: Option<usize>,
    #[arg(long, value_enum)]
    learner: Option<Learner>,
    #[arg(long, value_enum)]
    dynamics: Option<DynamicsArg>,
    #[arg(long)]
    iters: Option<usize>,
    /// Number of sampled instances.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PoaSummary {
    certified: usize,
    excluded: usize,
    max_ratio: f64,
    /// `4(C+1)` for all-pay families with piecewise-linear transforms.
    bound: Option<f64>,
    excluded_rows: Vec<riskpoa_core::equilibria::PoaRow>,
}

/// Slope `C` below zero when the transform is linear there.
fn negative_slope(model: &UtilityModel) -> Option<f64> {
    match model {
        UtilityModel::Quasilinear => Some(1.0),
        UtilityModel::ScaledRiskAverse { transform: ConcaveTransform::Linear, .. } => Some(1.0),
        UtilityModel::ScaledRiskAverse { transform: ConcaveTransform::PiecewiseLinear { slope }, .. } => Some(*slope),
        _ => None,
    }
}

pub fn poa_sweep_cmd(base: Option<PoaSweepParams>, a: &PoaSweepArgs) -> Result<Status> {
    let mut p = base.unwrap_or_default();
    overlay!(p, a; learner, dynamics, iters, n, seed, threshold);
    overlay_opt!(p, a; out, report);
    if let Some(m) = a.family {
        p.family.mechanism = m;
    }
    if let Some(n) = a.players {
        p.family.n_players = n;
    }
    if let Some(u) = &a.utility {
        p.family.model = u.clone();
    }
    if let Some((lo, hi)) = a.values {
        (p.family.value_lo, p.family.value_hi) = (lo, hi);
    }
    if let Some(b) = a.bid_points {
        p.family.bid_points = b;
    }
    let run = Run::new("poa-sweep", &p)?;
    ensure!(p.n > 0, "--n must be positive");

    let source = match p.learner {
        Learner::RegretMatching => EquilibriumSource::RegretMatching { iterations: p.iters, dynamics: p.dynamics.into() },
        Learner::Hedge => EquilibriumSource::Hedge { iterations: p.iters, rate: LearningRate::InverseSqrt { eta: 1.0 } },
    };
    let table = empirical_poa(&p.family, source, p.n, p.seed, p.threshold)?;
    let bound = match (p.family.mechanism, negative_slope(&p.family.model)) {
        (MechanismKind::AllPay, Some(c)) => Some(bounded_slope_poa_bound(c)?),
        _ => None,
    };
    let status = if bound.is_some_and(|b| table.max_ratio > b) {
        Status::Falsified
    } else if table.rows.is_empty() || !table.excluded.is_empty() {
        Status::Uncertified
    } else {
        Status::Pass
    };
    log::info!("{} certified, {} excluded, max ratio {}", table.rows.len(), table.excluded.len(), table.max_ratio);
    if let Some(path) = &p.report {
        let summary = PoaSummary {
            certified: table.rows.len(),
            excluded: table.excluded.len(),
            max_ratio: table.max_ratio,
            bound,
            excluded_rows: table.excluded.clone(),
        };
        emit(Some(path), &run.json(status, &summary)?)?;
    }
    emit(p.out.as_ref(), &run.csv(&table.to_csv()))?;
    Ok(status)
}

// check-normalization ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationParams {
    pub utility: UtilityModel,
    pub values: Grid,
    pub payments: Grid,
    pub out: Option<PathBuf>,
}

impl Default for NormalizationParams {
    fn default() -> Self {
        NormalizationParams {
            utility: UtilityModel::exponential(),
            values: Grid::new(0.1, 2.0, 20),
            payments: Grid::new(0.0, 4.0, 81),
            out: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct NormalizationArgs {
    #[arg(long, value_parser = parse_utility)]
    utility: Option<UtilityModel>,
    #[arg(long)]
    values: Option<Grid>,
    #[arg(long)]
    payments: Option<Grid>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn check_normalization_cmd(base: Option<NormalizationParams>, a: &NormalizationArgs) -> Result<Status> {
    let mut p = base.unwrap_or_default();
    overlay!(p, a; utility, values, payments);
    overlay_opt!(p, a; out);
    let run = Run::new("check-normalization", &p)?;
    p.utility.validate()?;
    let report = check_normalization(&p.utility, &p.values.build()?, &p.payments.build()?);
    let status = if report.passed() { Status::Pass } else { Status::Falsified };
    emit(p.out.as_ref(), &run.json(status, &report)?)?;
    Ok(status)
}

// verify-observation1 ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Observation1Params {
    pub gamma: f64,
    pub out: Option<PathBuf>,
}

impl Default for Observation1Params {
    fn default() -> Self {
        Observation1Params { gamma: 1.0, out: None }
    }
}

#[derive(Debug, Args)]
pub struct Observation1Args {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn verify_observation1_cmd(base: Option<Observation1Params>, a: &Observation1Args) -> Result<Status> {
    let mut p = base.unwrap_or_default();
    overlay!(p, a; gamma);
    overlay_opt!(p, a; out);
    let run = Run::new("verify-observation1", &p)?;
    let report: Observation1Report = constructions::observation1_verify(p.gamma)?;
    let status = if report.certified { Status::Pass } else { Status::Falsified };
    emit(p.out.as_ref(), &run.json(status, &report)?)?;
    Ok(status)
}

// verify-two-item -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoItemParams {
    pub gamma: f64,
    pub eps1: f64,
    pub out: Option<PathBuf>,
}

impl Default for TwoItemParams {
    fn default() -> Self {
        TwoItemParams { gamma: 1.0, eps1: 0.01, out: None }
    }
}

#[derive(Debug, Args)]
pub struct TwoItemArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn verify_two_item_cmd(base: Option<TwoItemParams>, a: &TwoItemArgs) -> Result<Status> {
    let mut p = base.unwrap_or_default();
    overlay!(p, a; gamma, eps1);
    overlay_opt!(p, a; out);
    let run = Run::new("verify-two-item", &p)?;
    let r = two_item_verify(p.gamma, p.eps1)?;
    let closed_form_ok = (r.u2_closed_form - r.u2_participate).abs() <= 1e-9 * r.u2_closed_form.abs().max(1.0);
    let status = if r.ne_certified && closed_form_ok { Status::Pass } else { Status::Falsified };
    emit(p.out.as_ref(), &run.json(status, &r)?)?;
    Ok(status)
}

// lemma1-test -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma1Params {
    pub utility: UtilityModel,
    pub players: usize,
    pub value_lo: f64,
    pub value_hi: f64,
    pub n: usize,
    pub seed: u64,
    pub payment_points: usize,
    /// JSON report path (stdout if omitted).
    pub out: Option<PathBuf>,
    /// CSV table path.
    pub trace: Option<PathBuf>,
}

impl Default for Lemma1Params {
    fn default() -> Self {
        Lemma1Params {
            utility: UtilityModel::exponential(),
            players: 3,
            value_lo: 0.1,
            value_hi: 2.0,
            n: 100,
            seed: 0,
            payment_points: PaymentGrid::default().points,
            out: None,
            trace: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct Lemma1Args {
    #[arg(long, value_parser = parse_utility)]
    utility: Option<UtilityModel>,
    #[arg(long)]
    players: Option<usize>,
    /// Value range as lo:hi.
    #[arg(long, value_parser = parse_range)]
    values: Option<(f64, f64)>,
    /// Number of random instances.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    payment_points: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV path for the per-instance table.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Lemma1Row {
    instance_id: usize,
    values: Vec<f64>,
    opt: f64,
    opt_hat: f64,
    ratio: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct Lemma1Summary {
    instances: usize,
    failures: usize,
    max_ratio: f64,
    min_ratio: f64,
    rows: Vec<Lemma1Row>,
}

pub fn lemma1_test_cmd(base: Option<Lemma1Params>, a: &Lemma1Args) -> Result<Status> {
    let mut p = base.unwrap_or_default();
    overlay!(p, a; utility, players, n, seed, payment_points);
    overlay_opt!(p, a; out, trace);
    if let Some((lo, hi)) = a.values {
        (p.value_lo, p.value_hi) = (lo, hi);
    }
    let run = Run::new("lemma1-test", &p)?;
    ensure!(p.players > 0 && p.n > 0, "--players and --n must be positive");
    config::check_positive("value_lo", p.value_lo)?;
    ensure!(p.value_lo <= p.value_hi && p.value_hi.is_finite(), "value range must satisfy lo <= hi");
    p.utility.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let outcomes = single_item_outcomes(p.players);
    let grid = PaymentGrid { points: p.payment_points, refine: true };
    let mut rows = Vec::with_capacity(p.n);
    for k in 0..p.n {
        let values: Vec<f64> = (0..p.players).map(|_| rng.gen_range(p.value_lo..=p.value_hi)).collect();
        let players: Vec<Player> = values.iter().map(|&v| Player::single(v, p.utility.clone())).collect();
        let r = check_lemma1(&players, &outcomes, grid)?;
        rows.push(Lemma1Row { instance_id: k, values, opt: r.opt, opt_hat: r.opt_hat, ratio: r.opt / r.opt_hat, passed: r.passed() });
    }
    let failures = rows.iter().filter(|r| !r.passed).count();
    let summary = Lemma1Summary {
        instances: rows.len(),
        failures,
        max_ratio: rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max),
        min_ratio: rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min),
        rows,
    };
    let status = if failures == 0 { Status::Pass } else { Status::Falsified };
    if let Some(path) = &p.trace {
        let mut csv = String::from("instance_id,opt,opt_hat,ratio,passed\n");
        for r in &summary.rows {
            csv.push_str(&format!("{},{},{},{},{}\n", r.instance_id, fmt_f64(r.opt), fmt_f64(r.opt_hat), fmt_f64(r.ratio), r.passed));
        }
        emit(Some(path), &run.csv(&csv))?;
    }
    emit(p.out.as_ref(), &run.json(status, &summary)?)?;
    Ok(status)
}
