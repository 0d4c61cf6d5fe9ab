//! Compares the rayon-backed batch runner against the sequential fallback
//! on the two hottest sampling loops. Both paths produce bit-identical
//! results (asserted below before measuring), so the benchmark isolates the
//! scheduling cost alone.
//!
//! Run with `cargo bench -p geoflow`.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use geoflow::curves::AnalyticCurve;
use geoflow::exec::{self, BatchStats, BATCH_SIZE};
use geoflow::extadj::{build_adjoint, build_exterior, rep_unipotent};
use geoflow::homsim::{flow_point, standard_bumps, Mat2, Model};
use geoflow::lingroup::QuadraticSpace;
use geoflow::sl2rep::{kappa_estimate, kappa_violations};

const SAMPLES: u64 = 200_000;
const SEED: u64 = 7;

fn birkhoff_batch(batch: u64, total: u64) -> BatchStats {
    let curve = AnalyticCurve::from_polynomials(vec![vec![0.0, 1.0]], (0.0, 1.0)).unwrap();
    let bump = &standard_bumps(Model::Sl2R)[0];
    let base = Mat2::identity();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    rng.set_stream(batch);
    let len = exec::batch_len(batch, total);
    let mut stats = BatchStats::default();
    for _ in 0..len {
        let s = rng.gen_range(0.0..1.0);
        let p = flow_point(Model::Sl2R, &curve, s, 12.0, &base).unwrap();
        stats.push(bump.eval(&p));
    }
    stats
}

fn bench_birkhoff(c: &mut Criterion) {
    let batches = SAMPLES.div_ceil(BATCH_SIZE);
    // Equality of the two paths, once, before timing.
    let par = BatchStats::merge_all(&exec::map_batches(batches, |b| birkhoff_batch(b, SAMPLES)));
    let seq =
        BatchStats::merge_all(&exec::map_batches_seq(batches, |b| birkhoff_batch(b, SAMPLES)));
    assert_eq!(par.mean(), seq.mean(), "parallel and sequential must agree bitwise");

    let mut group = c.benchmark_group("birkhoff_monte_carlo");
    group.sample_size(20);
    group.bench_with_input(BenchmarkId::new("parallel", SAMPLES), &SAMPLES, |b, &n| {
        b.iter(|| {
            let batches = n.div_ceil(BATCH_SIZE);
            let parts = exec::map_batches(batches, |i| birkhoff_batch(i, n));
            black_box(BatchStats::merge_all(&parts).mean())
        })
    });
    group.bench_with_input(BenchmarkId::new("sequential", SAMPLES), &SAMPLES, |b, &n| {
        b.iter(|| {
            let batches = n.div_ceil(BATCH_SIZE);
            let parts = exec::map_batches_seq(batches, |i| birkhoff_batch(i, n));
            black_box(BatchStats::merge_all(&parts).mean())
        })
    });
    group.finish();
}

fn kappa_objective_batch(
    weights: &[i64],
    unipotent: &nalgebra::DMatrix<f64>,
    kappa: f64,
    batch: u64,
) -> u64 {
    let dim = weights.len();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    rng.set_stream(batch);
    let mut bad = 0;
    for _ in 0..BATCH_SIZE {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x /= norm);
        let mut plus = 0.0;
        let mut uplus0 = 0.0;
        for i in 0..dim {
            if weights[i] > 0 {
                plus += v[i] * v[i];
            }
            if weights[i] >= 0 {
                let mut row = 0.0;
                for j in 0..dim {
                    row += unipotent[(i, j)] * v[j];
                }
                uplus0 += row * row;
            }
        }
        if plus.sqrt().max(uplus0.sqrt()) < kappa {
            bad += 1;
        }
    }
    bad
}

fn bench_kappa(c: &mut Criterion) {
    let adjoint = build_adjoint(&QuadraticSpace::new(3)).unwrap();
    let rep = adjoint.direct_sum(&build_exterior(&adjoint, 2).unwrap());
    let unipotent = rep_unipotent(&rep, &[1.0, 0.0]);
    let batches = 100_000u64.div_ceil(BATCH_SIZE);

    let mut group = c.benchmark_group("kappa_sampling");
    group.sample_size(20);
    group.bench_function("objective_sweep_parallel", |b| {
        b.iter(|| {
            let parts = exec::map_batches(batches, |i| {
                kappa_objective_batch(&rep.weights, &unipotent, 0.01, i)
            });
            black_box(parts.iter().sum::<u64>())
        })
    });
    group.bench_function("objective_sweep_sequential", |b| {
        b.iter(|| {
            let parts = exec::map_batches_seq(batches, |i| {
                kappa_objective_batch(&rep.weights, &unipotent, 0.01, i)
            });
            black_box(parts.iter().sum::<u64>())
        })
    });
    group.bench_function("estimator_end_to_end", |b| {
        b.iter(|| {
            black_box(
                kappa_estimate(&rep.weights, &unipotent, 50_000, 11)
                    .unwrap()
                    .kappa_hat,
            )
        })
    });
    group.bench_function("violation_scan_end_to_end", |b| {
        b.iter(|| black_box(kappa_violations(&rep.weights, &unipotent, 0.01, 50_000, 12)))
    });
    group.finish();
}

criterion_group!(benches, bench_birkhoff, bench_kappa);
criterion_main!(benches);
