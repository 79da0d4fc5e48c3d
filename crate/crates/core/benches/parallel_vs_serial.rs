use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use repcause::estimators::EstimatorSpec;
use repcause::intrinsic_dim::knn;
use repcause::learners::{LearnerSpec, Penalty};
use repcause::par;
use repcause::simulate::{gen_synthetic_manifold, run_coverage_experiment, ConfoundingSpec, LabelScenario, ManifoldSpec};
use repcause::transforms::{sparsity_rotation_curve, CurveTarget};

fn coverage(c: &mut Criterion) {
    let scenario = LabelScenario::new(1000, &ManifoldSpec::new(32, 3, 7).with_label(2.0, 0.1), &ConfoundingSpec::default()).unwrap();
    let specs = [
        EstimatorSpec::aipw(LearnerSpec::Ols, LearnerSpec::LogisticL2 { lambda: 0.0 }),
        EstimatorSpec::Naive,
    ];
    let run = || run_coverage_experiment(&scenario, &specs, 16, 1, 0.95).unwrap();
    let mut group = c.benchmark_group("coverage_16_reps");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("mode", "parallel"), |b| b.iter(run));
    group.bench_function(BenchmarkId::new("mode", "serial"), |b| b.iter(|| par::serial(run)));
    group.finish();
}

fn neighbours(c: &mut Criterion) {
    let z = gen_synthetic_manifold(2000, &ManifoldSpec::new(50, 5, 3), 1).unwrap().z;
    let mut group = c.benchmark_group("knn_2000x50");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("mode", "parallel"), |b| b.iter(|| knn(&z, 10).unwrap()));
    group.bench_function(BenchmarkId::new("mode", "serial"), |b| b.iter(|| par::serial(|| knn(&z, 10).unwrap())));
    group.finish();
}

fn rotation_curve(c: &mut Criterion) {
    let sample = gen_synthetic_manifold(500, &ManifoldSpec::new(30, 3, 5).with_label(1.0, 0.1), 2).unwrap();
    let y: Vec<f64> = sample.labels.iter().map(|&l| l as f64).collect();
    let set = repcause::RepresentationSet::new(sample.z, None, Some(y), None).unwrap();
    let run = || sparsity_rotation_curve(&set, CurveTarget::Outcome, 4, &Penalty::cv(), 1).unwrap();
    let mut group = c.benchmark_group("rotation_curve_4");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("mode", "parallel"), |b| b.iter(run));
    group.bench_function(BenchmarkId::new("mode", "serial"), |b| b.iter(|| par::serial(run)));
    group.finish();
}

criterion_group!(benches, coverage, neighbours, rotation_curve);
criterion_main!(benches);
