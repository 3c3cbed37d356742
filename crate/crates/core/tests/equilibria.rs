use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskpoa_core::equilibria::*;
use riskpoa_core::mechanisms::{Action, Mechanism, MechanismKind};
use riskpoa_core::smoothness::{welfare_bound_holds, SmoothnessParams};
use riskpoa_core::utility::{ConcaveTransform, UtilityModel};
use riskpoa_core::welfare::{opt_hat, single_item_outcomes, Player};

fn grid(hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| hi * k as f64 / (n - 1) as f64).collect()
}

fn game(kind: MechanismKind, players: Vec<Player>, bids: &[f64]) -> Game {
    let m = Mechanism::single_item(kind, players.len()).unwrap();
    Game::with_bid_grid(m, players, bids).unwrap()
}

fn ql(values: &[f64]) -> Vec<Player> {
    values.iter().map(|&v| Player::quasilinear(v)).collect()
}

fn hat(g: &Game) -> f64 {
    opt_hat(&g.players, &single_item_outcomes(g.n_players())).unwrap()
}

#[test]
fn expected_utility_examples() {
    let g = game(MechanismKind::FirstPrice, ql(&[1.0]), &[0.0, 1.0]);
    let d = CorrelatedDist::point(vec![Action::Bid(0.0)]);
    assert_eq!(expected_utility(&g, &d, 0, Condition::None, EvalMode::Exact).unwrap().mean, 1.0);

    let g = game(MechanismKind::SecondPrice, ql(&[1.0, 1.0]), &[0.0, 1.0]);
    let d = CorrelatedDist::new(vec![
        (vec![Action::Bid(1.0), Action::Bid(0.0)], 0.5),
        (vec![Action::Bid(0.0), Action::Bid(1.0)], 0.5),
    ])
    .unwrap();
    let e = expected_utility(&g, &d, 0, Condition::OwnAction(Action::Bid(1.0)), EvalMode::Exact).unwrap();
    assert_eq!(e.mean, 1.0);
    let r = expected_utility(&g, &d, 0, Condition::OwnAction(Action::Bid(0.5)), EvalMode::Exact);
    assert!(r.is_err());
}

#[test]
fn ce_regret_examples() {
    let g = game(MechanismKind::SecondPrice, ql(&[1.0, 1.0]), &[0.0, 1.0]);
    let zero = CorrelatedDist::point(vec![Action::Bid(0.0), Action::Bid(0.0)]);
    let r = ce_regret(&g, &zero, 0.0).unwrap();
    assert_eq!(r.max_regret, 0.5);

    let g = game(MechanismKind::FirstPrice, ql(&[1.0, 0.4]), &[0.3]);
    let only = CorrelatedDist::point(vec![Action::Bid(0.3), Action::Bid(0.3)]);
    assert_eq!(ce_regret(&g, &only, 0.0).unwrap().max_regret, 0.0);
}

#[test]
fn truthful_second_price_bne() {
    let values = [0.2, 0.5, 0.9];
    let bids: Vec<Action> = values.iter().map(|&v| Action::Bid(v)).chain([Action::Bid(0.0), Action::Bid(1.2)]).collect();
    let m = Mechanism::single_item(MechanismKind::SecondPrice, 2).unwrap();
    let td = TypeDist::uniform(&values).unwrap();
    let g = BayesianGame::new(m, vec![UtilityModel::Quasilinear; 2], vec![td.clone(), td], vec![bids.clone(), bids])
        .unwrap();
    let truthful: Vec<Action> = values.iter().map(|&v| Action::Bid(v)).collect();
    let r = bne_regret(&g, &BayesStrategy::pure(vec![truthful.clone(), truthful]), 0.0).unwrap();
    assert_eq!(r.max_regret, 0.0);
}

#[test]
fn bne_permutation_invariance() {
    let values = [0.25, 0.5, 1.0];
    let bids: Vec<Action> = grid(1.0, 9).into_iter().map(Action::Bid).collect();
    let m = Mechanism::single_item(MechanismKind::FirstPrice, 3).unwrap();
    let td = TypeDist::values(&values, &[0.2, 0.5, 0.3]).unwrap();
    let g = BayesianGame::new(m, vec![UtilityModel::exponential(); 3], vec![td; 3], vec![bids; 3]).unwrap();
    let s: Vec<Vec<Action>> = vec![
        vec![Action::Bid(0.0), Action::Bid(0.25), Action::Bid(0.5)],
        vec![Action::Bid(0.125), Action::Bid(0.25), Action::Bid(0.375)],
        vec![Action::Bid(0.0), Action::Bid(0.375), Action::Bid(0.625)],
    ];
    let base = bne_regret(&g, &BayesStrategy::pure(s.clone()), 0.0).unwrap();
    for perm in [[1, 0, 2], [2, 1, 0], [1, 2, 0]] {
        let ps: Vec<Vec<Action>> = perm.iter().map(|&k| s[k].clone()).collect();
        let r = bne_regret(&g, &BayesStrategy::pure(ps), 0.0).unwrap();
        assert_eq!(r.max_regret.to_bits(), base.max_regret.to_bits());
        for (slot, &k) in perm.iter().enumerate() {
            assert!((r.player_regret[slot] - base.player_regret[k]).abs() <= 1e-15);
        }
    }
}

fn random_game(rng: &mut ChaCha8Rng) -> (Game, CorrelatedDist) {
    let kinds = [MechanismKind::FirstPrice, MechanismKind::SecondPrice, MechanismKind::AllPay];
    let kind = kinds[rng.gen_range(0..3)];
    let values = [rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)];
    let g = game(kind, values.iter().map(|&v| Player::single(v, UtilityModel::exponential())).collect(), &[0.0, 0.5]);
    let mut entries = Vec::new();
    for a in [0.0, 0.5] {
        for b in [0.0, 0.5] {
            entries.push((vec![Action::Bid(a), Action::Bid(b)], rng.gen_range(0.05..1.0)));
        }
    }
    let total: f64 = entries.iter().map(|e| e.1).sum();
    entries.iter_mut().for_each(|e| e.1 /= total);
    (g, CorrelatedDist::new(entries).unwrap())
}

#[test]
fn monte_carlo_matches_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..100 {
        let (g, d) = random_game(&mut rng);
        let exact = expected_utility(&g, &d, 0, Condition::None, EvalMode::Exact).unwrap().mean;
        let mc = expected_utility(&g, &d, 0, Condition::None, EvalMode::MonteCarlo { seed: k, samples: 20_000 }).unwrap();
        assert!((mc.mean - exact).abs() <= 4.0 * mc.std_error + 1e-12, "game {k}: {} vs {exact}", mc.mean);
    }
}

#[test]
fn gamma_zero_objective_is_conditional_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (g, d) = random_game(&mut rng);
        let r = ce_regret(&g, &d, 0.0).unwrap();
        for e in &r.entries {
            let eu = expected_utility(&g, &d, e.player, e.condition, EvalMode::Exact).unwrap().mean;
            assert!((e.objective - eu).abs() <= 1e-12);
        }
    }
}

#[test]
fn learner_regret_is_certified_by_ce_regret() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..4 {
        let values: Vec<f64> = (0..2).map(|_| rng.gen_range(0.2..1.0)).collect();
        let g = game(MechanismKind::FirstPrice, ql(&values), &grid(1.0, 6));
        for dynamics in [Dynamics::Sampled, Dynamics::Expected] {
            let cfg = RegretMatchingConfig { dynamics, ..RegretMatchingConfig::new(5_000, seed) };
            let out = learn_regret_matching(&g, &cfg).unwrap();
            let r = ce_regret(&g, &out.dist, 0.0).unwrap();
            assert!(r.max_regret <= out.reported_regret + 1e-9, "{dynamics:?}: {} > {}", r.max_regret, out.reported_regret);
        }
    }
}

#[test]
fn one_player_learners_find_argmax() {
    let g = game(MechanismKind::FirstPrice, ql(&[1.0]), &[0.0, 0.5, 1.0]);
    let out = learn_regret_matching(&g, &RegretMatchingConfig::new(2_000, 1)).unwrap();
    assert!(out.dist.marginal(0, Action::Bid(0.0)) > 0.99);
    assert!(ce_regret(&g, &out.dist, 0.0).unwrap().max_regret < 1e-2);
    let h = learn_hedge(&g, &HedgeConfig::new(2_000, 1)).unwrap();
    assert!(h.mixed[0][0] > 0.95, "{:?}", h.mixed);
    assert!(learn_regret_matching(&g, &RegretMatchingConfig::new(0, 1)).is_err());
}

#[test]
fn first_price_regret_matching() {
    let g = game(MechanismKind::FirstPrice, ql(&[1.0, 1.0]), &grid(1.0, 21));
    let out = learn_regret_matching(&g, &RegretMatchingConfig::new(100_000, 7)).unwrap();
    assert!(ce_regret(&g, &out.dist, 0.0).unwrap().max_regret <= 0.02);

    let ex: Vec<Player> = [1.0, 1.0].iter().map(|&v| Player::single(v, UtilityModel::exponential())).collect();
    let g = game(MechanismKind::FirstPrice, ex, &grid(1.0, 21));
    let out = learn_regret_matching(&g, &RegretMatchingConfig::new(100_000, 7)).unwrap();
    let sw = dist_welfare(&g, &out.dist, 0.0).unwrap();
    let bound = (1.0 - (-1.0f64).exp()) / 2.0 * hat(&g) - 0.05;
    assert!(sw >= bound, "{sw} < {bound}");
}

#[test]
fn all_pay_hedge() {
    let g = game(MechanismKind::AllPay, ql(&[1.0, 1.0]), &grid(1.0, 21));
    let out = learn_hedge(&g, &HedgeConfig::new(100_000, 3)).unwrap();
    let sw = dist_welfare(&g, &out.dist, 0.0).unwrap();
    assert!(sw >= 0.5 * hat(&g) - 0.05, "{sw}");
    let again = learn_hedge(&g, &HedgeConfig::new(100_000, 3)).unwrap();
    assert_eq!(out, again);
    let other = learn_hedge(&g, &HedgeConfig::new(100_000, 4)).unwrap();
    assert_ne!(out.trace, other.trace);
}

#[test]
fn smoothness_bound_on_learned_equilibria() {
    // first price is (1/2, 1)-smooth on grids containing every half value
    let p = SmoothnessParams::new(0.5, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..5 {
        let values: Vec<f64> = (0..2).map(|_| rng.gen_range(1..=10) as f64 / 10.0).collect();
        let g = game(MechanismKind::FirstPrice, ql(&values), &grid(1.0, 21));
        let out = learn_regret_matching(&g, &RegretMatchingConfig::new(20_000, seed)).unwrap();
        let r = ce_regret(&g, &out.dist, 0.0).unwrap();
        let sw = dist_welfare(&g, &out.dist, 0.0).unwrap();
        assert!(welfare_bound_holds(sw, hat(&g), p, r.total_regret()).unwrap());
    }
}

#[test]
fn empirical_poa_examples() {
    let family = |mechanism, model, n| GameFamily {
        mechanism,
        n_players: n,
        model,
        value_lo: 0.2,
        value_hi: 1.0,
        bid_points: 11,
    };
    let source = EquilibriumSource::RegretMatching { iterations: 20_000, dynamics: Dynamics::Expected };
    let e = std::f64::consts::E;
    let fp = empirical_poa(&family(MechanismKind::FirstPrice, UtilityModel::Quasilinear, 2), source, 4, 1, 1e-2).unwrap();
    assert!(!fp.rows.is_empty());
    assert!(fp.max_ratio <= e / (e - 1.0) + 0.1, "{}", fp.max_ratio);

    let c1 = UtilityModel::risk_averse(ConcaveTransform::PiecewiseLinear { slope: 1.0 });
    let ap = empirical_poa(&family(MechanismKind::AllPay, c1, 2), source, 4, 1, 1e-2).unwrap();
    assert!(ap.max_ratio <= 8.0, "{}", ap.max_ratio);

    let solo = empirical_poa(&family(MechanismKind::FirstPrice, UtilityModel::Quasilinear, 1), source, 3, 1, 1e-2).unwrap();
    assert!(solo.rows.iter().all(|r| (r.ratio - 1.0).abs() < 1e-12), "{:?}", solo.rows);
    assert!(solo.to_csv().starts_with("instance_id,sw_eq,opt,opt_hat,ratio\n"));
}
