mod config;
mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use repcause::data::{load_representations, save_representations};
use repcause::estimators::EstimatorSpec;
use repcause::intrinsic_dim::{self, IdMethod};
use repcause::learners::Penalty;
use repcause::simulate::{run_coverage_experiment, run_rate_experiment, ConfoundingKind};
use repcause::stats::ks_test_normal;
use repcause::transforms::{sparsity_rotation_curve, CurveTarget};
use repcause::{par, RepresentationSet};

use config::{check_estimator, check_level, learner, load, Role};
use output::{emit, Header};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(name = "repcause", version, about = "Treatment effects from pre-trained representations")]
struct Cli {
    /// TOML file with the subcommand's settings; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything serially.
    #[arg(long, global = true, env = "REPCAUSE_THREADS")]
    threads: Option<usize>,
    /// Output file (standard output when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the ATE on a representation file.
    Estimate(EstimateArgs),
    /// Draw one dataset from a confounding design and save it.
    Simulate(SimulateArgs),
    /// Repeated draws with coverage and normality summaries.
    Experiment(ExperimentArgs),
    /// Intrinsic dimension of the features.
    Id(IdArgs),
    /// Nonzero L1 coefficients after composing random rotations.
    Rotate(RotateArgs),
    /// MLP test error against training size for several ambient dimensions.
    Rate(RateArgs),
    /// Load a representation file and report its shape.
    Validate { data: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Naive,
    Oracle,
    SLearner,
    DmlAipw,
    #[value(alias = "dml-partialling-out")]
    DmlPo,
}

#[derive(Args)]
struct EstimateArgs {
    data: PathBuf,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Outcome learner for DML-AIPW: ols, lasso, mlp, forest.
    #[arg(long)]
    g: Option<String>,
    /// Propensity learner: logistic, logistic-l1, mlp, forest.
    #[arg(long)]
    m: Option<String>,
    /// Outcome learner for partialling-out.
    #[arg(long)]
    l: Option<String>,
    /// Learner for the S-learner.
    #[arg(long)]
    learner: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    level: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Label,
    Complex,
    Product,
}

impl From<KindArg> for ConfoundingKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Label => ConfoundingKind::Label,
            KindArg::Complex => ConfoundingKind::Complex,
            KindArg::Product => ConfoundingKind::HcmProduct,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    n: Option<usize>,
    /// Use the features of this file instead of the manifold generator.
    #[arg(long)]
    features: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Also write the JSON summary here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IdMethodArg {
    Mle,
    Ess,
    Lpca,
}

impl From<IdMethodArg> for IdMethod {
    fn from(m: IdMethodArg) -> Self {
        match m {
            IdMethodArg::Mle => IdMethod::Mle,
            IdMethodArg::Ess => IdMethod::Ess,
            IdMethodArg::Lpca => IdMethod::Lpca,
        }
    }
}

#[derive(Args)]
struct IdArgs {
    data: PathBuf,
    #[arg(long, value_enum)]
    method: Option<IdMethodArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Write per-point local estimates as CSV.
    #[arg(long)]
    per_point: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TargetArg {
    Outcome,
    Treatment,
}

#[derive(Args)]
struct RotateArgs {
    data: PathBuf,
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
    #[arg(long)]
    rotations: Option<usize>,
    /// Fixed L1 penalty instead of cross-validation.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    test_n: Option<usize>,
}

fn load_data(path: &Path) -> Result<RepresentationSet, CliError> {
    load_representations(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

struct Ctx {
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<Format>,
}

impl Ctx {
    fn config(&self) -> Option<&Path> {
        self.config.as_deref()
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }
}

fn choose(flag: &Option<String>, key: &str, role: Role, current: &mut repcause::learners::LearnerSpec) -> Result<(), CliError> {
    if let Some(name) = flag {
        *current = learner(name, role, key)?;
    }
    Ok(())
}

fn resolve_estimator(base: EstimatorSpec, a: &EstimateArgs) -> Result<EstimatorSpec, CliError> {
    use repcause::learners::LearnerSpec;
    let mut spec = match a.method {
        None => base,
        Some(MethodArg::Naive) => EstimatorSpec::Naive,
        Some(MethodArg::Oracle) => EstimatorSpec::Oracle,
        Some(MethodArg::SLearner) => EstimatorSpec::SLearner { learner: LearnerSpec::Ols },
        Some(MethodArg::DmlAipw) => EstimatorSpec::aipw(LearnerSpec::Ols, LearnerSpec::LogisticL2 { lambda: 0.0 }),
        Some(MethodArg::DmlPo) => {
            EstimatorSpec::partialling_out(LearnerSpec::Ols, LearnerSpec::LogisticL2 { lambda: 0.0 })
        }
    };
    let mut used = Vec::new();
    match &mut spec {
        EstimatorSpec::Naive | EstimatorSpec::Oracle => {}
        EstimatorSpec::SLearner { learner } => {
            choose(&a.learner, "--learner", Role::Outcome, learner)?;
            used.push("learner");
        }
        EstimatorSpec::DmlAipw { g, m, folds, clip_eps } => {
            choose(&a.g, "--g", Role::Outcome, g)?;
            choose(&a.m, "--m", Role::Propensity, m)?;
            *folds = a.k.unwrap_or(*folds);
            *clip_eps = a.clip.unwrap_or(*clip_eps);
            used.extend(["g", "m", "k", "clip"]);
        }
        EstimatorSpec::DmlPartiallingOut { l, m, folds } => {
            choose(&a.l, "--l", Role::Outcome, l)?;
            choose(&a.m, "--m", Role::Propensity, m)?;
            *folds = a.k.unwrap_or(*folds);
            used.extend(["l", "m", "k"]);
        }
    }
    let given = [
        ("g", a.g.is_some()),
        ("m", a.m.is_some()),
        ("l", a.l.is_some()),
        ("learner", a.learner.is_some()),
        ("k", a.k.is_some()),
        ("clip", a.clip.is_some()),
    ];
    if let Some((flag, _)) = given.iter().find(|(f, set)| *set && !used.contains(f)) {
        return Err(CliError::Usage(format!("--{flag} does not apply to {}", spec.label())));
    }
    Ok(spec)
}

fn estimate(ctx: &Ctx, a: &EstimateArgs) -> Result<(), CliError> {
    let mut cfg: config::EstimateConfig = load(ctx.config())?;
    cfg.seed = ctx.seed.unwrap_or(cfg.seed);
    cfg.level = a.level.unwrap_or(cfg.level);
    cfg.estimator = resolve_estimator(cfg.estimator, a)?;
    check_level(cfg.level, "level")?;
    check_estimator(&cfg.estimator, "estimator")?;
    let set = load_data(&a.data)?;
    let report = cfg.estimator.run(&set, cfg.seed, cfg.level).map_err(runtime)?;
    let header = Header::new("estimate", Some(cfg.seed), &cfg);
    let text = match ctx.format.unwrap_or(Format::Json) {
        Format::Json => header.wrap(&report),
        Format::Csv => format!(
            "{}estimator,estimate,std_error,ci_low,ci_high,level,n\n{},{},{},{},{},{},{}\n",
            header.csv_lines(),
            cfg.estimator.label(),
            report.estimate,
            report.std_error,
            report.ci_low,
            report.ci_high,
            report.level,
            report.n
        ),
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    emit(ctx.out(), &text)
}

fn features(path: &Option<PathBuf>) -> Result<Option<RepresentationSet>, CliError> {
    path.as_deref().map(load_data).transpose()
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<(), CliError> {
    let mut cfg: config::SimulateConfig = load(ctx.config())?;
    cfg.seed = ctx.seed.unwrap_or(cfg.seed);
    if let Some(kind) = a.kind {
        cfg.scenario.confounding.kind = kind.into();
    }
    cfg.scenario.n = a.n.unwrap_or(cfg.scenario.n);
    if a.features.is_some() {
        cfg.features = a.features.clone();
    }
    let out = ctx
        .out()
        .ok_or_else(|| CliError::Usage("--out is required: simulate writes a PTRZ or CSV dataset".into()))?;
    let scenario = cfg.scenario.build(features(&cfg.features)?).map_err(runtime)?;
    let data = scenario.draw(cfg.seed).map_err(runtime)?;
    save_representations(&data.set, out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let header = Header::new("simulate", Some(cfg.seed), &cfg);
    let meta = json!({
        "path": out,
        "n": data.set.n(),
        "d": data.set.d(),
        "true_ate": data.truth.ate,
        "label": data.set.label().is_some(),
        "warnings": data.warnings,
    });
    emit(None, &header.wrap(meta))
}

fn experiment(ctx: &Ctx, a: &ExperimentArgs) -> Result<(), CliError> {
    let mut cfg: config::ExperimentConfig = load(ctx.config())?;
    cfg.seed = ctx.seed.unwrap_or(cfg.seed);
    cfg.reps = a.reps.unwrap_or(cfg.reps);
    cfg.level = a.level.unwrap_or(cfg.level);
    if let Some(kind) = a.kind {
        cfg.scenario.confounding.kind = kind.into();
    }
    if a.features.is_some() {
        cfg.features = a.features.clone();
    }
    check_level(cfg.level, "level")?;
    if cfg.reps < 2 {
        return Err(CliError::Usage(format!("reps: need at least 2, got {}", cfg.reps)));
    }
    if cfg.estimators.is_empty() {
        return Err(CliError::Usage("estimators: empty list".into()));
    }
    for (i, e) in cfg.estimators.iter().enumerate() {
        check_estimator(e, &format!("estimators[{i}]"))?;
    }
    let scenario = cfg.scenario.build(features(&cfg.features)?).map_err(runtime)?;
    let report = run_coverage_experiment(scenario.as_ref(), &cfg.estimators, cfg.reps, cfg.seed, cfg.level)
        .map_err(runtime)?;
    let normality: Vec<_> = report
        .summary
        .iter()
        .map(|s| {
            let z: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| r.estimator == s.estimator)
                .map(|r| (r.estimate - report.true_ate) / r.se)
                .collect();
            let (ks, p) = ks_test_normal(&z);
            json!({"estimator": s.estimator, "ks_statistic": ks, "p_value": p})
        })
        .collect();
    let header = Header::new("experiment", Some(cfg.seed), &cfg);
    let summary = header.wrap(json!({
        "true_ate": report.true_ate,
        "level": report.level,
        "reps": report.reps,
        "summary": report.summary,
        "normality": normality,
    }));
    if let Some(path) = &a.summary {
        emit(Some(path), &summary)?;
    }
    match ctx.format.unwrap_or(Format::Csv) {
        Format::Csv => emit(ctx.out(), &(header.csv_lines() + &report.to_csv().map_err(runtime)?)),
        Format::Json => emit(ctx.out(), &summary),
    }
}

fn id(ctx: &Ctx, a: &IdArgs) -> Result<(), CliError> {
    let mut cfg: config::IdConfig = load(ctx.config())?;
    if let Some(m) = a.method {
        cfg.method = m.into();
    }
    cfg.k = a.k.or(cfg.k);
    cfg.alpha = a.alpha.or(cfg.alpha);
    if let Some(alpha) = cfg.alpha {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CliError::Usage(format!("alpha: {alpha} outside (0, 1)")));
        }
    }
    let set = load_data(&a.data)?;
    let est = intrinsic_dim::estimate(set.z(), cfg.method, cfg.k, cfg.alpha).map_err(runtime)?;
    let header = Header::new("id", None, &cfg);
    if let Some(path) = &a.per_point {
        let mut text = header.csv_lines() + "point,local_estimate\n";
        for (i, v) in est.per_point.iter().enumerate() {
            writeln!(text, "{i},{v}").unwrap();
        }
        emit(Some(path), &text)?;
    }
    for w in &est.warnings {
        eprintln!("warning: {w}");
    }
    let text = match ctx.format.unwrap_or(Format::Json) {
        Format::Json => header.wrap(json!({"method": est.method, "k": est.k, "estimate": est.value})),
        Format::Csv => {
            let method = serde_json::to_value(est.method).unwrap();
            format!("{}method,k,estimate\n{},{},{}\n", header.csv_lines(), method.as_str().unwrap(), est.k, est.value)
        }
    };
    emit(ctx.out(), &text)
}

fn rotate(ctx: &Ctx, a: &RotateArgs) -> Result<(), CliError> {
    let mut cfg: config::RotateConfig = load(ctx.config())?;
    cfg.seed = ctx.seed.unwrap_or(cfg.seed);
    match a.target {
        Some(TargetArg::Outcome) => cfg.target = CurveTarget::Outcome,
        Some(TargetArg::Treatment) => cfg.target = CurveTarget::Treatment,
        None => {}
    }
    cfg.rotations = a.rotations.unwrap_or(cfg.rotations);
    cfg.lambda = a.lambda.or(cfg.lambda);
    let penalty = match cfg.lambda {
        Some(l) if !(l >= 0.0) => return Err(CliError::Usage(format!("lambda: {l} < 0"))),
        Some(l) => Penalty::Fixed(l),
        None => Penalty::cv(),
    };
    let set = load_data(&a.data)?;
    let curve = sparsity_rotation_curve(&set, cfg.target, cfg.rotations, &penalty, cfg.seed).map_err(runtime)?;
    let header = Header::new("rotate", Some(cfg.seed), &cfg);
    let text = match ctx.format.unwrap_or(Format::Csv) {
        Format::Json => header.wrap(&curve),
        Format::Csv => {
            let mut t = header.csv_lines() + "rotations,nonzero_count\n";
            for p in &curve {
                writeln!(t, "{},{}", p.rotations, p.nonzero_count).unwrap();
            }
            t
        }
    };
    emit(ctx.out(), &text)
}

fn rate(ctx: &Ctx, a: &RateArgs) -> Result<(), CliError> {
    let mut cfg: config::RateConfig = load(ctx.config())?;
    cfg.seed = ctx.seed.unwrap_or(cfg.seed);
    cfg.experiment.replicates = a.replicates.unwrap_or(cfg.experiment.replicates);
    cfg.experiment.test_n = a.test_n.unwrap_or(cfg.experiment.test_n);
    let report = run_rate_experiment(&cfg.target, &cfg.experiment, cfg.seed).map_err(|e| match e {
        repcause::Error::InvalidSpec(msg) => CliError::Usage(format!("experiment: {msg}")),
        other => runtime(other),
    })?;
    let header = Header::new("rate", Some(cfg.seed), &cfg);
    let text = match ctx.format.unwrap_or(Format::Csv) {
        Format::Json => header.wrap(&report),
        Format::Csv => {
            let mut t = header.csv_lines();
            for (d, slope) in &report.slopes {
                writeln!(t, "# slope d={d}: {slope}").unwrap();
            }
            t.push_str("ambient_dim,n,test_mse\n");
            for r in &report.rows {
                writeln!(t, "{},{},{}", r.ambient_dim, r.n, r.test_mse).unwrap();
            }
            t
        }
    };
    emit(ctx.out(), &text)
}

fn validate(ctx: &Ctx, data: &Path) -> Result<(), CliError> {
    let set = load_data(data)?;
    let (t, y, label) = (set.t().is_some(), set.y().is_some(), set.label().is_some());
    let text = match ctx.format.unwrap_or(Format::Csv) {
        Format::Json => format!(
            "{}\n",
            json!({"path": data, "n": set.n(), "d": set.d(), "t": t, "y": y, "label": label})
        ),
        Format::Csv => format!("n={} d={} t={t} y={y} label={label}\n", set.n(), set.d()),
    };
    emit(ctx.out(), &text)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("threads: must be at least 1".into()));
        }
        par::init_threads(threads);
    }
    let ctx = Ctx {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        format: cli.format,
    };
    match &cli.command {
        Command::Estimate(a) => estimate(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Experiment(a) => experiment(&ctx, a),
        Command::Id(a) => id(&ctx, a),
        Command::Rotate(a) => rotate(&ctx, a),
        Command::Rate(a) => rate(&ctx, a),
        Command::Validate { data } => validate(&ctx, data),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("usage error: {msg}"),
                CliError::Runtime(msg) => eprintln!("error: {msg}"),
            }
            ExitCode::from(e.code())
        }
    }
}
