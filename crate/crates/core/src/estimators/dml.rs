use super::{AteReport, Method, DEFAULT_CLIP, DEFAULT_FOLDS, DEFAULT_LEVEL, OVERLAP_WARN_FRACTION};
use crate::data::{make_folds, FoldAssignment, RepresentationSet};
use crate::error::{Error, Result};
use crate::learners::{fit, LearnerSpec};
use crate::par;
use crate::rng::derive;
use crate::stats::{mean, sample_variance};

/// Settings shared by both cross-fitted estimators. For partialling-out,
/// `outcome` is the learner for `E[Y | Z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DmlConfig {
    pub outcome: LearnerSpec,
    pub propensity: LearnerSpec,
    pub folds: usize,
    pub clip_eps: f64,
    pub seed: u64,
    pub level: f64,
}

impl DmlConfig {
    pub fn new(outcome: LearnerSpec, propensity: LearnerSpec) -> Self {
        Self {
            outcome,
            propensity,
            folds: DEFAULT_FOLDS,
            clip_eps: DEFAULT_CLIP,
            seed: 0,
            level: DEFAULT_LEVEL,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Orthogonal score
/// `ρ = g1 − g0 + t (y − g1) / m − (1 − t)(y − g0) / (1 − m)`.
pub fn evaluate_score(t: &[u8], y: &[f64], g1: &[f64], g0: &[f64], m: &[f64]) -> Result<Vec<f64>> {
    let n = t.len();
    for len in [y.len(), g1.len(), g0.len(), m.len()] {
        if len != n {
            return Err(Error::Dimension { expected: n, found: len });
        }
    }
    if let Some(bad) = m.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InvalidSpec(format!("propensity {bad} outside (0, 1)")));
    }
    Ok((0..n)
        .map(|i| {
            let ti = t[i] as f64;
            g1[i] - g0[i] + ti * (y[i] - g1[i]) / m[i] - (1.0 - ti) * (y[i] - g0[i]) / (1.0 - m[i])
        })
        .collect())
}

fn check_folds(t: &[u8], folds: &FoldAssignment) -> Result<()> {
    let k = folds.k();
    let treated = t.iter().filter(|&&v| v == 1).count();
    let control = t.len() - treated;
    for (arm, count) in [(1u8, treated), (0u8, control)] {
        if count == 0 {
            return Err(Error::EmptyArm { arm });
        }
        if count < 2 * k {
            return Err(Error::FoldTooSmall {
                fold: 0,
                reason: format!("arm t={arm} has {count} units, need at least {}", 2 * k),
            });
        }
    }
    for fold in 0..k {
        let train = folds.out_of_fold(fold);
        let tr = train.iter().filter(|&&i| t[i] == 1).count();
        if tr == 0 || tr == train.len() {
            return Err(Error::FoldTooSmall {
                fold,
                reason: "training part lacks one treatment arm".into(),
            });
        }
    }
    Ok(())
}

fn as_f64(t: &[u8]) -> Vec<f64> {
    t.iter().map(|&v| v as f64).collect()
}

/// Out-of-fold nuisance predictions for every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct AipwPredictions {
    pub folds: FoldAssignment,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    /// Unclipped propensity predictions.
    pub m: Vec<f64>,
}

/// Fits arm-specific outcome models and a propensity model on the
/// complement of each fold and predicts on the fold.
pub fn cross_fit_aipw(set: &RepresentationSet, cfg: &DmlConfig) -> Result<AipwPredictions> {
    cfg.outcome.validate()?;
    cfg.propensity.validate()?;
    let (t, y) = set.observed()?;
    let n = set.n();
    let folds = make_folds(n, cfg.folds, cfg.seed)?;
    check_folds(t, &folds)?;
    let tf = as_f64(t);
    let z = set.z();

    let per_fold = par::try_map(folds.k(), |fold| -> Result<_> {
        let train = folds.out_of_fold(fold);
        let test = folds.in_fold(fold);
        let zt = z.select_rows(&test);
        let arm_fit = |arm: u8, salt: u64| -> Result<Vec<f64>> {
            let rows: Vec<usize> = train.iter().copied().filter(|&i| t[i] == arm).collect();
            let target: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let model = fit(&cfg.outcome, &z.select_rows(&rows), &target, derive(cfg.seed, salt))?;
            model.predict(&zt)
        };
        let base = 3 * fold as u64;
        let g0 = arm_fit(0, base + 1)?;
        let g1 = arm_fit(1, base + 2)?;
        let target: Vec<f64> = train.iter().map(|&i| tf[i]).collect();
        let m_model = fit(&cfg.propensity, &z.select_rows(&train), &target, derive(cfg.seed, base + 3))?;
        let m = m_model.predict(&zt)?;
        Ok((test, g0, g1, m))
    })?;

    let mut out = AipwPredictions {
        folds: folds.clone(),
        g0: vec![0.0; n],
        g1: vec![0.0; n],
        m: vec![0.0; n],
    };
    for (test, g0, g1, m) in per_fold {
        for (pos, &i) in test.iter().enumerate() {
            out.g0[i] = g0[pos];
            out.g1[i] = g1[pos];
            out.m[i] = m[pos];
        }
    }
    Ok(out)
}

/// AIPW report from given nuisance values; `m` is clipped to
/// `[clip_eps, 1 − clip_eps]` here. Per-fold means are reported when `folds`
/// is supplied.
pub fn aipw_from_predictions(
    t: &[u8],
    y: &[f64],
    g1: &[f64],
    g0: &[f64],
    m: &[f64],
    clip_eps: f64,
    folds: Option<&FoldAssignment>,
    level: f64,
) -> Result<AteReport> {
    if !(clip_eps > 0.0 && clip_eps < 0.5) {
        return Err(Error::InvalidSpec(format!("clip_eps {clip_eps} outside (0, 0.5)")));
    }
    if m.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerics("non-finite propensity prediction".into()));
    }
    let clipped: Vec<f64> = m.iter().map(|p| p.clamp(clip_eps, 1.0 - clip_eps)).collect();
    let n_clipped = m.iter().filter(|&&p| p < clip_eps || p > 1.0 - clip_eps).count();
    let scores = evaluate_score(t, y, g1, g0, &clipped)?;
    let n = scores.len();
    let est = mean(&scores);
    let se = (sample_variance(&scores) / n as f64).sqrt();
    let mut report = AteReport::new(Method::DmlAipw, est, se, n, level)?;
    let share = n_clipped as f64 / n as f64;
    if share > OVERLAP_WARN_FRACTION {
        report
            .warnings
            .push(format!("overlap: {:.1}% of propensities clipped", 100.0 * share));
    }
    if let Some(f) = folds {
        report.folds = f.k();
        report.per_fold = (0..f.k())
            .map(|k| mean(&f.in_fold(k).iter().map(|&i| scores[i]).collect::<Vec<_>>()))
            .collect();
    }
    Ok(report)
}

/// Cross-fitted AIPW estimate with arm-specific outcome models.
pub fn dml_aipw_ate(set: &RepresentationSet, cfg: &DmlConfig) -> Result<AteReport> {
    let p = cross_fit_aipw(set, cfg)?;
    let (t, y) = set.observed()?;
    aipw_from_predictions(t, y, &p.g1, &p.g0, &p.m, cfg.clip_eps, Some(&p.folds), cfg.level)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlrPredictions {
    pub folds: FoldAssignment,
    /// Out-of-fold predictions of `E[Y | Z]`.
    pub l: Vec<f64>,
    /// Out-of-fold predictions of `E[T | Z]`.
    pub m: Vec<f64>,
}

pub fn cross_fit_partialling_out(set: &RepresentationSet, cfg: &DmlConfig) -> Result<PlrPredictions> {
    cfg.outcome.validate()?;
    cfg.propensity.validate()?;
    let (t, y) = set.observed()?;
    let n = set.n();
    let folds = make_folds(n, cfg.folds, cfg.seed)?;
    check_folds(t, &folds)?;
    let tf = as_f64(t);
    let z = set.z();
    let per_fold = par::try_map(folds.k(), |fold| -> Result<_> {
        let train = folds.out_of_fold(fold);
        let test = folds.in_fold(fold);
        let ztr = z.select_rows(&train);
        let zt = z.select_rows(&test);
        let pick = |v: &[f64]| train.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let base = 3 * fold as u64;
        let l = fit(&cfg.outcome, &ztr, &pick(y), derive(cfg.seed, base + 1))?.predict(&zt)?;
        let m = fit(&cfg.propensity, &ztr, &pick(&tf), derive(cfg.seed, base + 3))?.predict(&zt)?;
        Ok((test, l, m))
    })?;
    let mut out = PlrPredictions {
        folds: folds.clone(),
        l: vec![0.0; n],
        m: vec![0.0; n],
    };
    for (test, l, m) in per_fold {
        for (pos, &i) in test.iter().enumerate() {
            out.l[i] = l[pos];
            out.m[i] = m[pos];
        }
    }
    Ok(out)
}

/// Residual-on-residual slope `Σ T̃Ỹ / Σ T̃²` with the sandwich standard error
/// `sqrt(Σ (T̃ (Ỹ − T̃ θ̂))²) / Σ T̃²`.
pub fn partialling_out_from_predictions(
    t: &[u8],
    y: &[f64],
    l: &[f64],
    m: &[f64],
    folds: Option<&FoldAssignment>,
    level: f64,
) -> Result<AteReport> {
    let n = t.len();
    for len in [y.len(), l.len(), m.len()] {
        if len != n {
            return Err(Error::Dimension { expected: n, found: len });
        }
    }
    let tr: Vec<f64> = (0..n).map(|i| t[i] as f64 - m[i]).collect();
    let yr: Vec<f64> = (0..n).map(|i| y[i] - l[i]).collect();
    let sum_tt: f64 = tr.iter().map(|v| v * v).sum();
    if !(sum_tt >= 1e-10) {
        return Err(Error::DegenerateResidualization(sum_tt));
    }
    let theta = tr.iter().zip(&yr).map(|(a, b)| a * b).sum::<f64>() / sum_tt;
    let meat: f64 = tr.iter().zip(&yr).map(|(a, b)| (a * (b - a * theta)).powi(2)).sum();
    let se = meat.sqrt() / sum_tt;
    let mut report = AteReport::new(Method::DmlPartiallingOut, theta, se, n, level)?;
    if let Some(f) = folds {
        report.folds = f.k();
        report.per_fold = (0..f.k())
            .map(|k| {
                let idx = f.in_fold(k);
                let num: f64 = idx.iter().map(|&i| tr[i] * yr[i]).sum();
                let den: f64 = idx.iter().map(|&i| tr[i] * tr[i]).sum();
                num / den
            })
            .collect();
    }
    Ok(report)
}

/// Cross-fitted partialling-out estimate; fold sums are pooled.
pub fn dml_partialling_out_ate(set: &RepresentationSet, cfg: &DmlConfig) -> Result<AteReport> {
    let p = cross_fit_partialling_out(set, cfg)?;
    let (t, y) = set.observed()?;
    partialling_out_from_predictions(t, y, &p.l, &p.m, Some(&p.folds), cfg.level)
}
