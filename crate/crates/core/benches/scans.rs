//! Rayon pool vs. a single worker on the main parallel scans.
//!
//! Build with `--no-default-features` to benchmark the sequential backend; the
//! two pools then run identical code.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPool;

use riskpoa_core::constructions::{verify_theorem6, Theorem6Config};
use riskpoa_core::equilibria::{empirical_poa, Dynamics, EquilibriumSource, GameFamily};
use riskpoa_core::mechanisms::MechanismKind;
use riskpoa_core::smoothness::{certify_smoothness, DeviationRule, SmoothnessInstance, SmoothnessParams};
use riskpoa_core::utility::{ConcaveTransform, UtilityModel};

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn smoothness(c: &mut Criterion) {
    let inst = SmoothnessInstance::quasilinear(MechanismKind::AllPay, 3, grid(0.1, 1.0, 10), grid(0.0, 1.0, 11)).unwrap();
    let half = SmoothnessParams::new(0.5, 1.0).unwrap();
    let mut g = c.benchmark_group("certify_smoothness");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new(name, "allpay-3x10x11"), |b| {
            b.iter(|| pool.install(|| certify_smoothness(&inst, &DeviationRule::UniformTopBidder, half).unwrap()))
        });
    }
    g.finish();
}

fn theorem6(c: &mut Criterion) {
    let cfg = Theorem6Config::new(1e3);
    let mut g = c.benchmark_group("verify_theorem6");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new(name, "M=1e3"), |b| b.iter(|| pool.install(|| verify_theorem6(&cfg).unwrap())));
    }
    g.finish();
}

fn poa(c: &mut Criterion) {
    let family = GameFamily {
        mechanism: MechanismKind::AllPay,
        n_players: 2,
        model: UtilityModel::risk_averse(ConcaveTransform::PiecewiseLinear { slope: 2.0 }),
        value_lo: 0.2,
        value_hi: 1.0,
        bid_points: 11,
    };
    let source = EquilibriumSource::RegretMatching { iterations: 2_000, dynamics: Dynamics::Expected };
    let mut g = c.benchmark_group("empirical_poa");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new(name, "allpay-8"), |b| {
            b.iter(|| pool.install(|| empirical_poa(&family, source, 8, 1, 1e-3).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, smoothness, theorem6, poa);
criterion_main!(benches);
