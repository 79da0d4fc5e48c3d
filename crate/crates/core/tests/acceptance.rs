use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use repcause::estimators::{evaluate_score, EstimatorSpec};
use repcause::intrinsic_dim::{estimate, knn, IdMethod};
use repcause::learners::{fit, fit_lasso, fit_ols, Activation, ForestConfig, LearnerSpec, MlpConfig, Network, Penalty, Task};
use repcause::rng::{normals, seeded};
use repcause::simulate::*;
use repcause::stats::{mean, sample_variance};
use repcause::transforms::{sample_orthogonal, sparsity_rotation_curve, CurveTarget};
use repcause::RepresentationSet;

const TRUE_ATE: f64 = 2.0;
const SUPPORT_TOL: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn ols_logistic() -> EstimatorSpec {
    EstimatorSpec::aipw(LearnerSpec::Ols, LearnerSpec::LogisticL2 { lambda: 0.0 })
}

fn label_manifold() -> ManifoldSpec {
    ManifoldSpec::new(64, 3, 7).with_label(2.0, 0.1)
}

/// Same manifold and label strength, but the label is coordinate 0 of the raw
/// features and every reported feature is rotated by one fixed Haar matrix.
fn sparse_rotated_manifold() -> ManifoldSpec {
    let mut m = label_manifold();
    m.label_axis = true;
    m.rotate = true;
    m
}

fn label_scenario(manifold: &ManifoldSpec) -> LabelScenario {
    LabelScenario::new(2000, manifold, &ConfoundingSpec::default()).unwrap()
}

fn label_recovery() -> Outcome {
    let start = Instant::now();
    let scenario = label_scenario(&label_manifold());
    let report = run_coverage_experiment(&scenario, &[ols_logistic(), EstimatorSpec::Naive], 200, 1, 0.95).unwrap();
    let elapsed = start.elapsed();
    let dml = report.summary_for(&ols_logistic().label()).unwrap();
    let naive = report.summary_for("naive").unwrap();
    let pass = dml.mean_bias.abs() < 0.05
        && (0.90..=0.99).contains(&dml.coverage)
        && naive.mean_bias < -0.5
        && naive.coverage < 0.2
        && elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "dml bias {:.4} coverage {:.3}; naive bias {:.3} coverage {:.3}; {:.1}s",
            dml.mean_bias,
            dml.coverage,
            naive.mean_bias,
            naive.coverage,
            elapsed.as_secs_f64()
        ),
    )
}

fn non_invariant_learners() -> Outcome {
    let scenario = label_scenario(&sparse_rotated_manifold());
    let lasso = EstimatorSpec::aipw(
        LearnerSpec::Lasso { penalty: Penalty::cv() },
        LearnerSpec::LogisticL1 { penalty: Penalty::cv() },
    );
    let report = run_coverage_experiment(&scenario, &[ols_logistic(), lasso.clone()], 100, 2, 0.95).unwrap();
    let ols = report.summary_for(&ols_logistic().label()).unwrap();
    let l1 = report.summary_for(&lasso.label()).unwrap();
    outcome(
        l1.coverage < 0.7 && ols.coverage >= 0.90,
        format!(
            "lasso coverage {:.3} (bias {:.4}); ols coverage {:.3} (bias {:.4})",
            l1.coverage, l1.mean_bias, ols.coverage, ols.mean_bias
        ),
    )
}

fn exact_invariance() -> Outcome {
    let scenario = label_scenario(&sparse_rotated_manifold());
    let data = scenario.draw(3).unwrap();
    let set = data.set.without_label();
    let base = ols_logistic().run(&set, 4, 0.95).unwrap().estimate;
    let y = set.outcome().unwrap();
    let lasso = LearnerSpec::Lasso { penalty: Penalty::cv() };
    let base_support = fit(&lasso, set.z(), y, 4).unwrap().linear().unwrap().support(SUPPORT_TOL);
    let mut max_gap = 0.0f64;
    let mut differing = 0;
    for i in 0..10 {
        let q = sample_orthogonal(set.d(), 500 + i).unwrap();
        let rotated = q.apply(&set).unwrap();
        let est = ols_logistic().run(&rotated, 4, 0.95).unwrap().estimate;
        max_gap = max_gap.max((est - base).abs());
        let support = fit(&lasso, rotated.z(), y, 4).unwrap().linear().unwrap().support(SUPPORT_TOL);
        if support != base_support {
            differing += 1;
        }
    }
    outcome(
        max_gap <= 1e-5 && differing >= 8,
        format!(
            "max |estimate gap| {max_gap:.2e}; lasso support differs for {differing}/10 (raw support size {})",
            base_support.len()
        ),
    )
}

fn three_sparse(seed: u64) -> RepresentationSet {
    let mut rng = seeded(seed);
    let (n, d) = (500, 50);
    let z = DMatrix::from_vec(n, d, normals(&mut rng, n * d));
    let noise = normals(&mut rng, n);
    let y = (0..n)
        .map(|i| 2.0 * z[(i, 0)] - 1.5 * z[(i, 1)] + z[(i, 2)] + 0.1 * noise[i])
        .collect();
    RepresentationSet::new(z, None, Some(y), None).unwrap()
}

fn sparsity_rotation() -> Outcome {
    let (mut at0, mut at5) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let curve = sparsity_rotation_curve(&three_sparse(seed), CurveTarget::Outcome, 5, &Penalty::cv(), seed).unwrap();
        at0.push(curve[0].nonzero_count as f64);
        at5.push(curve[5].nonzero_count as f64);
    }
    let (a, b) = (mean(&at0), mean(&at5));
    outcome(b >= 3.0 * a, format!("mean nonzero r=0 {a:.2}, r=5 {b:.2}, ratio {:.2}", b / a))
}

fn double_robustness() -> Outcome {
    let scenario = label_scenario(&label_manifold());
    let reps = 200;
    let runs: Vec<(f64, f64)> = (0..reps)
        .map(|r| {
            let data = scenario.draw(1000 + r).unwrap();
            let (t, y) = data.set.observed().unwrap();
            let n = t.len();
            let truth = &data.truth;
            let wrong_m = vec![0.5; n];
            let wrong_g = vec![0.0; n];
            let bad_m = mean(&evaluate_score(t, y, &truth.g1, &truth.g0, &wrong_m).unwrap()) - truth.ate;
            let bad_g = mean(&evaluate_score(t, y, &wrong_g, &wrong_g, &truth.m).unwrap()) - truth.ate;
            (bad_m, bad_g)
        })
        .collect();
    let check = |v: Vec<f64>| {
        let se = (sample_variance(&v) / v.len() as f64).sqrt();
        let b = mean(&v);
        (b.abs() < 4.0 * se, b, se)
    };
    let (ok_m, bm, sm) = check(runs.iter().map(|r| r.0).collect());
    let (ok_g, bg, sg) = check(runs.iter().map(|r| r.1).collect());
    outcome(
        ok_m && ok_g,
        format!("true g, constant m: bias {bm:.4} (mc se {sm:.4}); true m, zero g: bias {bg:.4} (mc se {sg:.4})"),
    )
}

/// The label coordinate carries no feature noise here, so both linear
/// nuisance models are correctly specified.
fn asymptotic_normality() -> Outcome {
    let mut manifold = label_manifold();
    manifold.label_axis = true;
    let scenario = label_scenario(&manifold);
    let dml = run_normality_experiment(&scenario, &ols_logistic(), 200, 11).unwrap();
    let naive = run_normality_experiment(&scenario, &EstimatorSpec::Naive, 200, 11).unwrap();
    outcome(
        dml.p_value > 0.01 && naive.p_value < 0.01,
        format!("dml KS p {:.3}; naive KS p {:.2e}", dml.p_value, naive.p_value),
    )
}

fn intrinsic_dimension() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, dm) in [1usize, 2, 5].into_iter().enumerate() {
        let z = gen_synthetic_manifold(2000, &ManifoldSpec::new(50, dm, 20 + i as u64), 30 + i as u64)
            .unwrap()
            .z;
        let qz = sample_orthogonal(50, 40 + i as u64).unwrap().apply_matrix(&z).unwrap();
        for (method, k) in [(IdMethod::Mle, 5), (IdMethod::Ess, 25), (IdMethod::Lpca, 50)] {
            let v = estimate(&z, method, Some(k), None).unwrap().value;
            let w = estimate(&qz, method, Some(k), None).unwrap().value;
            pass &= (v - dm as f64).abs() <= 1.0 && (v - w).abs() <= 1e-8;
            parts.push(format!("{method:?}({dm})={v:.2}/{:.0e}", (v - w).abs()));
        }
    }
    outcome(pass, parts.join(" "))
}

fn complex_confounding() -> Outcome {
    let start = Instant::now();
    let z = gen_synthetic_manifold(3000, &ManifoldSpec::new(64, 5, 11).with_label(0.0, 0.1), 5)
        .unwrap()
        .z;
    let ae = repcause::learners::AutoencoderConfig {
        hidden: vec![64, 32],
        ..repcause::learners::AutoencoderConfig::new(5)
    };
    let scenario = ComplexConfounding::new(&z, &ConfoundingSpec::of_kind(ConfoundingKind::Complex), &ae).unwrap();
    let mlp = MlpConfig::default();
    let dml = EstimatorSpec::aipw(LearnerSpec::MlpReg(mlp.clone()), LearnerSpec::LogisticL2 { lambda: 0.0 });
    let forest = EstimatorSpec::aipw(
        LearnerSpec::ForestReg(ForestConfig::default()),
        LearnerSpec::ForestClf(ForestConfig::default()),
    );
    let s_learner = EstimatorSpec::SLearner { learner: LearnerSpec::MlpReg(mlp) };
    let report = run_coverage_experiment(&scenario, &[dml.clone(), forest.clone(), s_learner.clone()], 100, 1, 0.95).unwrap();
    let elapsed = start.elapsed();
    let (d, f, s) = (
        report.summary_for(&dml.label()).unwrap(),
        report.summary_for(&forest.label()).unwrap(),
        report.summary_for(&s_learner.label()).unwrap(),
    );
    outcome(
        d.coverage >= 0.85 && d.mean_bias.abs() < 0.1 && f.coverage < 0.7 && s.coverage < 0.7 && elapsed < Duration::from_secs(1800),
        format!(
            "dml(mlp) bias {:.4} coverage {:.3}; forest coverage {:.3}; s-learner coverage {:.3}; encoding share {:.3}; {:.0}s",
            d.mean_bias,
            d.coverage,
            f.coverage,
            s.coverage,
            scenario.reconstruction_share.unwrap_or(f64::NAN),
            elapsed.as_secs_f64()
        ),
    )
}

fn rate_experiment() -> Outcome {
    let hcm = HcmSpec::balanced(2, 2, 2, 2.0);
    let spec = RateSpec::default();
    let report = run_rate_experiment(&hcm, &spec, 1).unwrap();
    let last = *spec.n_grid.last().unwrap();
    let first = spec.n_grid[0];
    let ratio = report.mse(10, last).unwrap() / report.mse(100, last).unwrap();
    let mut pass = (0.5..=2.0).contains(&ratio);
    for &(d, slope) in &report.slopes {
        pass &= slope < 0.0 && report.mse(d, last).unwrap() < report.mse(d, first).unwrap();
    }
    let slopes: Vec<String> = report.slopes.iter().map(|(d, s)| format!("d={d} slope {s:.2}")).collect();
    outcome(pass, format!("terminal ratio {ratio:.2}; {}", slopes.join(", ")))
}

fn every_estimator() -> Vec<EstimatorSpec> {
    let mlp = MlpConfig::default();
    let forest = ForestConfig::default();
    vec![
        EstimatorSpec::Naive,
        EstimatorSpec::SLearner { learner: LearnerSpec::Ols },
        EstimatorSpec::SLearner { learner: LearnerSpec::MlpReg(mlp.clone()) },
        EstimatorSpec::SLearner { learner: LearnerSpec::ForestReg(forest.clone()) },
        ols_logistic(),
        EstimatorSpec::aipw(
            LearnerSpec::Lasso { penalty: Penalty::cv() },
            LearnerSpec::LogisticL1 { penalty: Penalty::cv() },
        ),
        EstimatorSpec::aipw(LearnerSpec::MlpReg(mlp.clone()), LearnerSpec::MlpClf(mlp.clone())),
        EstimatorSpec::aipw(LearnerSpec::ForestReg(forest.clone()), LearnerSpec::ForestClf(forest)),
        EstimatorSpec::partialling_out(LearnerSpec::Ols, LearnerSpec::LogisticL2 { lambda: 0.0 }),
        EstimatorSpec::partialling_out(LearnerSpec::MlpReg(mlp.clone()), LearnerSpec::MlpClf(mlp)),
    ]
}

fn curse_of_dimensionality() -> Outcome {
    let z = gen_synthetic_manifold(2000, &ManifoldSpec::new(64, 64, 3), 4).unwrap().z;
    let sim = ProductConfounding::new(&z, &ConfoundingSpec::of_kind(ConfoundingKind::HcmProduct)).unwrap();
    let data = sim.draw(9).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for spec in every_estimator() {
        let r = spec.run(&data.set, 5, 0.95).unwrap();
        let bias = r.estimate - TRUE_ATE;
        pass &= bias.abs() > 4.0 * r.std_error;
        parts.push(format!("{} {bias:.3} (se {:.3})", spec.label(), r.std_error));
    }
    outcome(pass, format!("bias: {}", parts.join(", ")))
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    v.signum() * (v.abs() - lambda).max(0.0)
}

/// Centred, unit-variance orthogonal columns from a QR factorization.
fn orthonormal_design(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    let mut a = DMatrix::from_vec(n, d + 1, normals(&mut rng, n * (d + 1)));
    a.column_mut(0).fill(1.0);
    let q = a.qr().q();
    DMatrix::from_fn(n, d, |i, j| q[(i, j + 1)] * (n as f64).sqrt())
}

fn lasso_oracle() -> f64 {
    let (n, d) = (200, 8);
    let x = orthonormal_design(n, d, 1);
    let mut rng = seeded(2);
    let y: Vec<f64> = normals(&mut rng, n).iter().enumerate().map(|(i, e)| x[(i, 0)] - 0.5 * x[(i, 3)] + e).collect();
    let mut worst = 0.0f64;
    for lambda in [0.0, 0.05, 0.2, 0.6] {
        let fitted = fit_lasso(&x, &y, &Penalty::Fixed(lambda), 0).unwrap();
        let coef = &fitted.linear().unwrap().coef;
        for j in 0..d {
            let xty = (0..n).map(|i| x[(i, j)] * y[i]).sum::<f64>() / n as f64;
            worst = worst.max((coef[j] - soft_threshold(xty, lambda)).abs());
        }
    }
    worst
}

fn ols_oracle() -> f64 {
    let (n, d) = (300, 6);
    let mut rng = seeded(3);
    let x = DMatrix::from_vec(n, d, normals(&mut rng, n * d));
    let y: Vec<f64> = normals(&mut rng, n).iter().enumerate().map(|(i, e)| 1.0 + 2.0 * x[(i, 1)] + e).collect();
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let rhs = design.transpose() * DVector::from_vec(y.clone());
    let beta = (design.transpose() * &design).cholesky().unwrap().solve(&rhs);
    let model = fit_ols(&x, &y).unwrap();
    let m = model.linear().unwrap();
    let mut worst = (m.intercept - beta[0]).abs();
    for j in 0..d {
        worst = worst.max((m.coef[j] - beta[j + 1]).abs());
    }
    worst
}

fn gradient_oracle() -> f64 {
    let mut worst = 0.0f64;
    for (probe, task) in [(0u64, Task::Regression), (1, Task::Classification)] {
        let mut rng = seeded(50 + probe);
        let mut net = Network::new(&[3, 6, 6, 1], &[Activation::Relu, Activation::Relu, Activation::Identity], &mut rng);
        let len = net.params().len();
        net.params_mut().copy_from_slice(&normals(&mut rng, len));
        let x = DMatrix::from_vec(10, 3, normals(&mut rng, 30));
        let y = match task {
            Task::Regression => DMatrix::from_vec(10, 1, normals(&mut rng, 10)),
            Task::Classification => DMatrix::from_fn(10, 1, |_, _| rng.random_range(0..2) as f64),
        };
        let (_, grad) = net.loss_and_gradient(&x, &y, task);
        let h = 1e-6;
        for k in 0..len {
            let mut up = net.clone();
            up.params_mut()[k] += h;
            let mut down = net.clone();
            down.params_mut()[k] -= h;
            let fd = (up.loss(&x, &y, task) - down.loss(&x, &y, task)) / (2.0 * h);
            let scale = grad[k].abs().max(fd.abs());
            if scale > 1e-7 {
                worst = worst.max((grad[k] - fd).abs() / scale);
            }
        }
    }
    worst
}

fn knn_mismatches() -> usize {
    let mut rng = seeded(4);
    let (n, d, k) = (150, 5, 7);
    let z = DMatrix::from_vec(n, d, normals(&mut rng, n * d));
    let nb = knn(&z, k).unwrap();
    let mut bad = 0;
    for i in 0..n {
        let mut all: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((z.row(i) - z.row(j)).norm(), j))
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect: Vec<usize> = all[..k].iter().map(|p| p.1).collect();
        if expect != nb.indices[i] {
            bad += 1;
        }
    }
    bad
}

fn numerical_oracles() -> Outcome {
    let (lasso, ols, grad, knn_bad) = (lasso_oracle(), ols_oracle(), gradient_oracle(), knn_mismatches());
    outcome(
        lasso <= 1e-6 && ols <= 1e-8 && grad <= 1e-4 && knn_bad == 0,
        format!("lasso {lasso:.1e}; ols {ols:.1e}; gradient rel {grad:.1e}; knn mismatched rows {knn_bad}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("label-confounding recovery", label_recovery),
        ("non-invariant learners fail", non_invariant_learners),
        ("exact rotation invariance", exact_invariance),
        ("sparsity lost under rotation", sparsity_rotation),
        ("double robustness", double_robustness),
        ("asymptotic normality", asymptotic_normality),
        ("intrinsic dimension recovery", intrinsic_dimension),
        ("complex confounding", complex_confounding),
        ("rate independent of ambient dimension", rate_experiment),
        ("product confounding defeats every estimator", curse_of_dimensionality),
        ("numerical oracles", numerical_oracles),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let status = if out.pass { "PASS" } else { "FAIL" };
        if !out.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {status} {name} [{:.1}s]: {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            out.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
