use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dreem_core::baselines::{exhaustive_onoff, ExhaustiveObjective};
use dreem_core::env::{FadingMatrix, ScenarioConfig};
use dreem_core::lp::{allocate_power, feasibility_value};
use dreem_core::nn::{backward, forward, init_mlp};
use dreem_core::powermodel::ModeDecision;

fn desk_instance(m: usize, k: usize, seed: u64) -> (FadingMatrix, ScenarioConfig, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = ScenarioConfig::desk();
    cfg.m = m;
    cfg.k = k;
    cfg.r_min = vec![0.2; k];
    let beta: Vec<f64> = (0..m * k)
        .map(|_| 10f64.powf(rng.gen_range(-9.5..-7.0)))
        .collect();
    let h = FadingMatrix::new(m, k, beta).unwrap();
    let sigma2 = dreem_core::env::noise_power(&cfg);
    (h, cfg, sigma2)
}

fn bench_lp(c: &mut Criterion) {
    let (h, cfg, sigma2) = desk_instance(6, 2, 1);
    let alpha = ModeDecision::all_on(6);
    c.bench_function("allocate_power_m6_k2", |b| {
        b.iter(|| allocate_power(black_box(&h), &alpha, &cfg.r_min, sigma2, &cfg).unwrap())
    });
    c.bench_function("feasibility_value_m6_k2", |b| {
        b.iter(|| feasibility_value(black_box(&h), &alpha, &cfg.r_min, sigma2, &cfg).unwrap())
    });
}

fn bench_exhaustive(c: &mut Criterion) {
    let (h, cfg, sigma2) = desk_instance(6, 2, 2);
    let prev = ModeDecision::all_on(6);
    c.bench_function("exhaustive_onoff_m6_k2", |b| {
        b.iter(|| {
            exhaustive_onoff(
                black_box(&h),
                &cfg.r_min,
                sigma2,
                &prev,
                &cfg,
                ExhaustiveObjective::WithTransition,
            )
            .unwrap()
        })
    });
}

fn bench_nn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = init_mlp(&[32, 64, 64, 64, 64, 64], &mut rng).unwrap();
    let x: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
    c.bench_function("mlp_forward_desk_head", |b| {
        b.iter(|| forward(black_box(&params), &x).unwrap())
    });
    let (_, cache) = forward(&params, &x).unwrap();
    let mut dy = vec![0.0; 64];
    dy[5] = 1.0;
    c.bench_function("mlp_backward_desk_head", |b| {
        b.iter(|| backward(black_box(&params), &cache, &dy))
    });
}

criterion_group!(benches, bench_lp, bench_exhaustive, bench_nn);
criterion_main!(benches);
