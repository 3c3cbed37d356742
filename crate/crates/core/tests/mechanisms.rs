use proptest::prelude::*;
use riskpoa_core::mechanisms::*;
use riskpoa_core::Error;

fn bids(b: &[f64]) -> Vec<Action> {
    b.iter().map(|&x| Action::Bid(x)).collect()
}

fn single(kind: MechanismKind, b: &[f64]) -> WeightedOutcome {
    let m = Mechanism::single_item(kind, b.len()).unwrap();
    let out = m.run(&bids(b)).unwrap();
    assert_eq!(out.len(), 1);
    out.into_iter().next().unwrap()
}

#[test]
fn spec_examples() {
    let o = single(MechanismKind::FirstPrice, &[3.0, 2.0]);
    assert_eq!(o.allocation, vec![Some(0), None]);
    assert_eq!(o.payments, vec![3.0, 0.0]);
    let o = single(MechanismKind::SecondPrice, &[3.0, 2.0]);
    assert_eq!(o.allocation, vec![Some(0), None]);
    assert_eq!(o.payments, vec![2.0, 0.0]);
    let o = single(MechanismKind::AllPay, &[3.0, 2.0]);
    assert_eq!(o.allocation, vec![Some(0), None]);
    assert_eq!(o.payments, vec![3.0, 2.0]);

    let m = Mechanism::new(MechanismKind::TwoItemPreference, TieBreak::UniformRandom, 2).unwrap();
    let out = m.run(&[Action::Claim(0), Action::Claim(0)]).unwrap();
    assert_eq!(out[0].allocation, vec![Some(0), Some(1)]);
    assert_eq!(out[0].payments, vec![0.0, 0.0]);
}

#[test]
fn errors() {
    let m = Mechanism::single_item(MechanismKind::FirstPrice, 2).unwrap();
    assert!(matches!(m.run(&bids(&[1.0])), Err(Error::WrongArity { .. })));
    assert!(matches!(m.run(&bids(&[1.0, -0.5])), Err(Error::NegativeBid(_))));
    assert!(m.run(&[Action::Bid(1.0), Action::OptOut]).is_err());
}

#[test]
fn willingness_examples() {
    let grid = bids(&[0.0, 1.0, 2.0, 3.0]);
    let fp = Mechanism::single_item(MechanismKind::FirstPrice, 2).unwrap();
    assert_eq!(willingness_to_pay(&fp, 0, Action::Bid(3.0), Some(0), &grid).unwrap(), 3.0);
    let sp = Mechanism::single_item(MechanismKind::SecondPrice, 2).unwrap();
    assert_eq!(willingness_to_pay(&sp, 0, Action::Bid(3.0), Some(0), &grid).unwrap(), 3.0);
    let ap = Mechanism::single_item(MechanismKind::AllPay, 2).unwrap();
    assert_eq!(willingness_to_pay(&ap, 0, Action::Bid(3.0), None, &grid).unwrap(), 3.0);
    // bid 3 always beats a grid topping out at 2
    let low = bids(&[0.0, 1.0, 2.0]);
    let lowest = Mechanism::new(MechanismKind::FirstPrice, TieBreak::LowestIndex, 2).unwrap();
    assert!(matches!(
        willingness_to_pay(&lowest, 0, Action::Bid(3.0), None, &low),
        Err(Error::AllocationUnreachable { player: 0 })
    ));
}

#[test]
fn overbidding_examples() {
    let grid = bids(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let sp = Mechanism::single_item(MechanismKind::SecondPrice, 2).unwrap();
    let ok = check_pointwise_no_overbidding(&sp, &[vec![Action::Bid(3.0)], vec![Action::Bid(0.0)]], &[vec![5.0], vec![5.0]], &grid)
        .unwrap();
    assert!(ok.is_none());
    let bad = check_pointwise_no_overbidding(&sp, &[vec![Action::Bid(6.0)], vec![Action::Bid(0.0)]], &[vec![5.0], vec![5.0]], &grid)
        .unwrap()
        .unwrap();
    assert_eq!((bad.player, bad.action), (0, Action::Bid(6.0)));
    let fp = Mechanism::single_item(MechanismKind::FirstPrice, 2).unwrap();
    let support = vec![bids(&[0.0, 2.0, 5.0]), bids(&[1.0, 4.0])];
    assert!(check_pointwise_no_overbidding(&fp, &support, &[vec![5.0], vec![4.0]], &grid).unwrap().is_none());
}

fn bid_profile() -> impl Strategy<Value = Vec<f64>> {
    // a coarse lattice makes ties common
    prop::collection::vec((0u32..6).prop_map(|k| k as f64 * 0.5), 1..6)
}

fn kinds() -> impl Strategy<Value = MechanismKind> {
    prop_oneof![Just(MechanismKind::FirstPrice), Just(MechanismKind::SecondPrice), Just(MechanismKind::AllPay)]
}

proptest! {
    #[test]
    fn revenue_identities(b in bid_profile(), kind in kinds()) {
        let m = Mechanism::single_item(kind, b.len()).unwrap();
        let top = b.iter().copied().fold(0.0, f64::max);
        let sum: f64 = b.iter().sum();
        let out = m.run_with(&bids(&b), TieResolution::Exhaustive).unwrap();
        let total: f64 = out.iter().map(|o| o.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for o in &out {
            prop_assert_eq!(o.allocation.iter().filter(|a| a.is_some()).count(), 1);
            prop_assert!(o.payments.iter().all(|&p| p >= 0.0));
            let revenue: f64 = o.payments.iter().sum();
            match kind {
                MechanismKind::FirstPrice => prop_assert_eq!(revenue, top),
                MechanismKind::AllPay => prop_assert!((revenue - sum).abs() < 1e-12),
                MechanismKind::SecondPrice => prop_assert!(revenue <= top),
                MechanismKind::TwoItemPreference => unreachable!(),
            }
        }
    }

    #[test]
    fn uniform_ties_are_fair(b in bid_profile(), kind in kinds()) {
        let m = Mechanism::single_item(kind, b.len()).unwrap();
        let top = b.iter().copied().fold(0.0, f64::max);
        let tied: Vec<usize> = (0..b.len()).filter(|&i| b[i] == top).collect();
        let out = m.run_with(&bids(&b), TieResolution::Exhaustive).unwrap();
        let mut win = vec![0.0f64; b.len()];
        for o in &out {
            for (i, a) in o.allocation.iter().enumerate() {
                if a.is_some() {
                    win[i] += o.probability;
                }
            }
        }
        for (i, &w) in win.iter().enumerate() {
            if tied.contains(&i) {
                // every tied bidder gets the same share, bit for bit
                prop_assert_eq!(w.to_bits(), win[tied[0]].to_bits());
                prop_assert!((w * tied.len() as f64 - 1.0).abs() < 1e-15);
            } else {
                prop_assert_eq!(w, 0.0);
            }
        }
    }

    #[test]
    fn willingness_monotone_in_own_bid(kind in kinds(), lo in 0u32..8, step in 0u32..8, won in any::<bool>()) {
        let grid = bids(&(0..9).map(|k| k as f64 * 0.5).collect::<Vec<_>>());
        let m = Mechanism::single_item(kind, 2).unwrap();
        let x = if won { Some(0) } else { None };
        let a = lo as f64 * 0.5;
        let b = (lo + step) as f64 * 0.5;
        let wa = willingness_to_pay(&m, 0, Action::Bid(a), x, &grid);
        let wb = willingness_to_pay(&m, 0, Action::Bid(b), x, &grid);
        if let (Ok(wa), Ok(wb)) = (wa, wb) {
            prop_assert!(wa <= wb, "{} {} -> {} {}", a, b, wa, wb);
        }
    }

    #[test]
    fn two_items_never_bundled(c in 0usize..3, d in 0usize..3) {
        let act = |k: usize| match k { 0 => Action::Claim(0), 1 => Action::Claim(1), _ => Action::OptOut };
        let m = Mechanism::new(MechanismKind::TwoItemPreference, TieBreak::UniformRandom, 2).unwrap();
        if let Ok(out) = m.run(&[act(c), act(d)]) {
            for o in out {
                if let (Some(a), Some(b)) = (o.allocation[0], o.allocation[1]) {
                    prop_assert_ne!(a, b);
                }
                prop_assert!(o.payments.iter().all(|&p| p == 0.0));
            }
        }
    }
}
