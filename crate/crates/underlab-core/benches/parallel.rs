//! Sequential vs data-parallel execution of representative workloads.
//!
//! `exec::map_indexed` is the rayon-backed path (when the default `parallel`
//! feature is on); `exec::map_indexed_seq` is the fallback. The workloads are
//! the two inner loops that dominate real sweeps: SIR ensemble fits and
//! random-features replicate cells.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use underlab_core::activation::Activation;
use underlab_core::rf::empirical::{estimate_risk, sample_dataset, train_predictor, RfConfig};
use underlab_core::rng::derive_rng;
use underlab_core::sir::{fit_sir, simulate_sir, SirFitConfig, SirParams, SirScenario};
use underlab_core::{exec, sir};

fn sir_member(d0: f64) -> f64 {
    let scenario = SirScenario { n_pop: 1e6, i0: 10.0, r0: 0.0, dt: 0.05 };
    let truth = SirParams::new(0.4, 5.0, scenario.n_pop).unwrap();
    let traj = simulate_sir(&truth, &scenario.init(), 25.0, scenario.dt).unwrap();
    let config = SirFitConfig {
        t_obs: 25.0,
        step_size: 1e-4,
        max_iters: 300,
        d0_init: d0,
        beta_init: None,
        tol: 0.0,
    };
    let fit = fit_sir(&traj.i, &scenario, &config).unwrap();
    sir::growth_rate(&fit.params)
}

fn rf_replicate(rep: usize) -> f64 {
    let config = RfConfig {
        d: 40,
        n: 80,
        width: 160,
        r: 1.0,
        s: 0.0,
        lambda: 0.0,
        activation: Activation::Relu,
    };
    let mut rng_data = derive_rng(17, "bench.rf.data", rep as u64);
    let mut rng_w = derive_rng(17, "bench.rf.w", rep as u64);
    let mut rng_eval = derive_rng(17, "bench.rf.eval", rep as u64);
    let data = sample_dataset(&config, &mut rng_data).unwrap();
    let pred = train_predictor(&config, &data, &mut rng_w).unwrap();
    estimate_risk(&pred, &data.beta0.view(), 0.0, 2000, &mut rng_eval).unwrap().mean
}

fn bench_sir_ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("sir_ensemble_fits");
    group.sample_size(10);
    let d0s: Vec<f64> = (0..8).map(|i| 1.0 + 2.5 * i as f64).collect();
    group.bench_function(BenchmarkId::new("sequential", d0s.len()), |b| {
        b.iter(|| exec::map_indexed_seq(d0s.len(), |i| sir_member(d0s[i])))
    });
    group.bench_function(BenchmarkId::new("parallel", d0s.len()), |b| {
        b.iter(|| exec::map_indexed(d0s.len(), |i| sir_member(d0s[i])))
    });
    group.finish();
}

fn bench_rf_replicates(c: &mut Criterion) {
    let mut group = c.benchmark_group("rf_replicates");
    group.sample_size(10);
    let reps = 8;
    group.bench_function(BenchmarkId::new("sequential", reps), |b| {
        b.iter(|| exec::map_indexed_seq(reps, rf_replicate))
    });
    group.bench_function(BenchmarkId::new("parallel", reps), |b| {
        b.iter(|| exec::map_indexed(reps, rf_replicate))
    });
    group.finish();
}

criterion_group!(benches, bench_sir_ensemble, bench_rf_replicates);
criterion_main!(benches);
