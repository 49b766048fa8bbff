//! Measures the per-atom averaging loop: the library path (rayon under the
//! default `parallel` feature, plain iteration without it) against an
//! explicit sequential fold in atom order. Building with
//! `--no-default-features` turns the library path into a second sequential
//! run, which bounds the feature's overhead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use ensemble_oc::costs::{
    averaged_cost, total_cost, CostSpec, InputPenalty, StateCost, TerminalCost,
};
use ensemble_oc::ensemble::{ControlSequence, InitialStateMap, SystemFamily};
use ensemble_oc::measures::{empirical_measure, DiscreteMeasure, ThetaDistribution};
use ensemble_oc::EnsembleProblem;

const HORIZON: usize = 20;

fn pendulum_problem() -> EnsembleProblem {
    let system = SystemFamily::pendulum_euler(0.1, 0.2, 9.81, None).unwrap();
    let cost = CostSpec::new(
        InputPenalty::power(0.1, 2.0, 2.0, None).unwrap(),
        StateCost::zero(),
        TerminalCost::quadratic(vec![vec![1.0, 0.0], vec![0.0, 0.1]]).unwrap(),
    )
    .unwrap();
    EnsembleProblem::new(system, InitialStateMap::constant(vec![0.3, 0.0]), cost, HORIZON)
        .unwrap()
}

fn atoms(k: usize) -> DiscreteMeasure {
    let dist = ThetaDistribution::Uniform {
        bounds: vec![[0.9, 1.1], [0.9, 1.1]],
    };
    empirical_measure(&dist, k, 42).unwrap()
}

fn control() -> ControlSequence {
    let flat: Vec<f64> = (0..HORIZON).map(|n| 0.1 * (n as f64).sin()).collect();
    ControlSequence::from_flat(&flat, 1).unwrap()
}

fn sequential_fold(problem: &EnsembleProblem, u: &ControlSequence, mu: &DiscreteMeasure) -> f64 {
    mu.atoms()
        .iter()
        .zip(mu.weights())
        .map(|(theta, w)| w * total_cost(problem, u, theta).unwrap())
        .sum()
}

fn bench_averaged_cost(c: &mut Criterion) {
    let problem = pendulum_problem();
    let u = control();

    let mut group = c.benchmark_group("averaged_cost");
    group.sample_size(20);
    for k in [64usize, 512, 4096] {
        let mu = atoms(k);
        group.throughput(Throughput::Elements(k as u64));
        group.bench_with_input(BenchmarkId::new("library", k), &mu, |b, mu| {
            b.iter(|| averaged_cost(black_box(&problem), black_box(&u), black_box(mu)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential_fold", k), &mu, |b, mu| {
            b.iter(|| sequential_fold(black_box(&problem), black_box(&u), black_box(mu)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_averaged_cost);
criterion_main!(benches);
