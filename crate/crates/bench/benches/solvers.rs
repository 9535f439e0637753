use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use pbm_core::env::{preset, Environment};
use pbm_core::learner::Learner;
use pbm_core::polytope::{complete_to_doubly_stochastic, linmin};
use pbm_core::sampler::decompose;
use pbm_core::solver::{solve, FwStep, Route, SolverConfig};
use pbm_core::{Allocation, CumulativeLoss, Matrix, ProblemDims};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cumulative loss resembling round `t` of a stochastic run.
fn loss_at(dims: ProblemDims, t: f64, rng: &mut ChaCha8Rng) -> CumulativeLoss {
    CumulativeLoss::new(Matrix::from_fn(dims.n(), dims.m(), |_, _| rng.gen_range(0.2..1.0) * t)).unwrap()
}

fn solvers(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dims = ProblemDims::new(10, 5).unwrap();
    let mut group = c.benchmark_group("solve_10x5");
    let routes = [
        ("cbp", SolverConfig::default()),
        ("fw_open_loop", SolverConfig::default().with_route(Route::Fw)),
        (
            "fw_pairwise",
            SolverConfig {
                fw_step: FwStep::Pairwise,
                ..SolverConfig::default().with_route(Route::Fw)
            },
        ),
    ];
    for t in [10.0, 10_000.0] {
        let l = loss_at(dims, t, &mut rng);
        let eta = 0.5 / t.sqrt();
        let warm = Allocation::uniform(dims);
        for (name, cfg) in &routes {
            group.bench_with_input(BenchmarkId::new(*name, t), &l, |b, l| {
                b.iter(|| solve(black_box(l), eta, cfg, &warm).unwrap())
            });
        }
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dims = ProblemDims::new(10, 5).unwrap();
    let x = solve(&loss_at(dims, 100.0, &mut rng), 0.05, &SolverConfig::default(), &Allocation::uniform(dims))
        .unwrap()
        .x;
    let w = complete_to_doubly_stochastic(&x);
    c.bench_function("decompose_10x10", |b| b.iter(|| decompose(black_box(&w)).unwrap()));
    let r = Matrix::from_fn(10, 5, |_, _| rng.gen::<f64>());
    c.bench_function("linmin_10x5", |b| b.iter(|| linmin(black_box(&r), dims).unwrap()));
}

fn rounds(c: &mut Criterion) {
    let p = preset("synthetic_003").unwrap();
    let env = Environment::Stochastic(p.clone());
    c.bench_function("learner_100_rounds", |b| {
        b.iter(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut learner = Learner::new(p.dims(), SolverConfig::default()).unwrap();
            for t in 1..=100 {
                let loss = env.draw_loss(t, &mut rng);
                learner.step(&loss, &mut rng).unwrap();
            }
        })
    });
}

criterion_group!(benches, solvers, sampling, rounds);
criterion_main!(benches);
