//! Navigation, calibration and consistency metrics. Everything here is a
//! pure function of run logs.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::mppi::Variant;
use crate::sim::{EpisodeConfig, Regime, RunLog, Status};
use crate::{Error, Mat2, Result, Vec2};

pub const DEFAULT_LL_EPS: f64 = 1e-6;
/// Regularization added to singular covariances before inversion.
pub const NEES_REG: f64 = 1e-12;
pub const L2_RANGE: f64 = 12.0;
pub const L2_BINS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavSummary {
    pub success: bool,
    pub td: f64,
    pub av: f64,
    pub cr: f64,
    pub sf: f64,
    /// Set when the log stops before the goal region.
    pub truncated: bool,
}

/// Task duration, average speed, collision percentage and cumulative
/// robot-induced social force of a run.
pub fn nav_metrics(log: &RunLog) -> NavSummary {
    let steps = &log.steps;
    let success = log.status == Status::Success;
    let td = steps.last().map_or(0.0, |s| s.t);
    let mut prev = log.config.world.start();
    let mut path = 0.0;
    for s in steps {
        let p = s.true_position();
        path += (p - prev).norm();
        prev = p;
    }
    let collisions = steps.iter().filter(|s| s.collision != 0).count();
    NavSummary {
        success,
        td,
        av: if td > 0.0 { path / td } else { 0.0 },
        cr: if steps.is_empty() {
            0.0
        } else {
            100.0 * collisions as f64 / steps.len() as f64
        },
        sf: steps.iter().map(|s| s.robot_social_force).sum(),
        truncated: !success,
    }
}

fn check_pair(preds: &[f64], outcomes: &[bool]) -> Result<()> {
    if preds.len() != outcomes.len() {
        return Err(Error::Contract(format!("{} predictions for {} outcomes", preds.len(), outcomes.len())));
    }
    if preds.is_empty() {
        return Err(Error::Contract("empty prediction batch".into()));
    }
    Ok(())
}

/// Mean squared error between predicted probabilities and outcomes.
pub fn brier(preds: &[f64], outcomes: &[bool]) -> Result<f64> {
    check_pair(preds, outcomes)?;
    let s: f64 = preds
        .iter()
        .zip(outcomes)
        .map(|(&p, &c)| (p - f64::from(u8::from(c))).powi(2))
        .sum();
    Ok(s / preds.len() as f64)
}

/// Mean negative log-likelihood with predictions clamped to `[eps, 1−eps]`.
pub fn log_loss(preds: &[f64], outcomes: &[bool], eps: f64) -> Result<f64> {
    check_pair(preds, outcomes)?;
    let s: f64 = preds
        .iter()
        .zip(outcomes)
        .map(|(&p, &c)| {
            let q = p.clamp(eps, 1.0 - eps);
            if c {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum();
    Ok(s / preds.len() as f64)
}

/// Average predicted risk.
pub fn apr(preds: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Contract("empty prediction batch".into()));
    }
    Ok(preds.iter().sum::<f64>() / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibSummary {
    pub apr: f64,
    pub bs: f64,
    pub ll: f64,
    pub n: usize,
}

impl CalibSummary {
    pub fn from_pairs(preds: &[f64], outcomes: &[bool]) -> Result<Self> {
        Ok(Self {
            apr: apr(preds)?,
            bs: brier(preds, outcomes)?,
            ll: log_loss(preds, outcomes, DEFAULT_LL_EPS)?,
            n: preds.len(),
        })
    }
}

/// Squared Mahalanobis norm of a 2D error.
pub fn nees(error: Vec2, cov: &Mat2) -> f64 {
    let reg = cov + Mat2::identity() * NEES_REG;
    match reg.try_inverse() {
        Some(inv) => (error.transpose() * inv * error)[(0, 0)].max(0.0),
        None => f64::INFINITY,
    }
}

pub fn nees_series(est: &[Vec2], truth: &[Vec2], covs: &[Mat2]) -> Result<Vec<f64>> {
    if est.len() != truth.len() || est.len() != covs.len() {
        return Err(Error::Contract("nees inputs differ in length".into()));
    }
    Ok(est.iter().zip(truth).zip(covs).map(|((e, t), c)| nees(e - t, c)).collect())
}

pub fn chi2_2_pdf(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        0.5 * (-0.5 * x).exp()
    }
}

/// Histogram density over `[0, L2_RANGE]`; out-of-range values count toward
/// the total but fall in no bin.
pub fn histogram_density(values: &[f64], bins: usize) -> Vec<(f64, f64)> {
    let width = L2_RANGE / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if (0.0..L2_RANGE).contains(&v) {
            counts[((v / width) as usize).min(bins - 1)] += 1;
        } else if v == L2_RANGE {
            counts[bins - 1] += 1;
        }
    }
    let n = values.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| ((i as f64 + 0.5) * width, c as f64 / (n * width)))
        .collect()
}

/// Integrated squared difference between the empirical density and the χ²₂
/// density evaluated at bin centres.
pub fn l2_divergence(values: &[f64], bins: usize) -> Result<f64> {
    if values.len() < 100 {
        return Err(Error::Contract(format!("need at least 100 values, got {}", values.len())));
    }
    if bins == 0 {
        return Err(Error::Contract("need at least one bin".into()));
    }
    let width = L2_RANGE / bins as f64;
    Ok(histogram_density(values, bins)
        .iter()
        .map(|(c, d)| (d - chi2_2_pdf(*c)).powi(2) * width)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub label: String,
    pub count: usize,
    pub mean_nees: f64,
    pub l2: f64,
    /// `(bin centre, empirical density, χ²₂ density)`.
    pub histogram: Vec<(f64, f64, f64)>,
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl ConsistencyReport {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let l2 = l2_divergence(&values, L2_BINS)?;
        let histogram = histogram_density(&values, L2_BINS)
            .into_iter()
            .map(|(c, d)| (c, d, chi2_2_pdf(c)))
            .collect();
        Ok(Self {
            label: label.into(),
            count: values.len(),
            mean_nees: values.iter().sum::<f64>() / values.len() as f64,
            l2,
            histogram,
            values,
        })
    }
}

/// Outcome of a one-sided Mann–Whitney U test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MannWhitney {
    pub u: f64,
    pub z: f64,
    pub p: f64,
}

fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// Tests whether `a` tends to exceed `b` (normal approximation with tie and
/// continuity correction).
pub fn mann_whitney_greater(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("Mann-Whitney needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Contract("Mann-Whitney samples contain NaN".into()));
    }
    let mut all: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut rank_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_a += all[i..=j].iter().filter(|x| x.1).count() as f64 * avg;
        i = j + 1;
    }
    let u = rank_a - n1 * (n1 + 1.0) / 2.0;
    let nf = n as f64;
    let var = n1 * n2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(MannWhitney { u, z: 0.0, p: 1.0 });
    }
    let z = (u - n1 * n2 / 2.0 - 0.5) / var.sqrt();
    Ok(MannWhitney { u, z, p: normal_sf(z) })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Per-run record written next to the step CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub variant: Variant,
    pub loc: Regime,
    pub pred: Regime,
    pub seed: u64,
    pub status: Status,
    pub success: bool,
    pub td: f64,
    pub av: f64,
    pub cr: f64,
    pub sf: f64,
    pub apr: f64,
    pub bs: f64,
    pub ll: f64,
    pub steps: usize,
    pub fallback_steps: usize,
    pub config: EpisodeConfig,
}

impl RunSummary {
    pub fn from_log(log: &RunLog) -> Self {
        let nav = nav_metrics(log);
        let preds: Vec<f64> = log.steps.iter().map(|s| s.executed_risk).collect();
        let outcomes: Vec<bool> = log.steps.iter().map(|s| s.collision != 0).collect();
        let calib = CalibSummary::from_pairs(&preds, &outcomes).unwrap_or(CalibSummary {
            apr: 0.0,
            bs: 0.0,
            ll: 0.0,
            n: 0,
        });
        Self {
            scenario: log.spec.scenario.clone(),
            variant: log.spec.variant,
            loc: log.spec.loc,
            pred: log.spec.pred,
            seed: log.spec.seed,
            status: log.status,
            success: nav.success,
            td: nav.td,
            av: nav.av,
            cr: nav.cr,
            sf: nav.sf,
            apr: calib.apr,
            bs: calib.bs,
            ll: calib.ll,
            steps: log.steps.len(),
            fallback_steps: log.steps.iter().filter(|s| s.all_rejected_flag != 0).count(),
            config: log.config,
        }
    }
}

/// Sample mean and standard deviation (`n − 1` denominator).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row of the aggregate table. Navigation metrics average successful
/// runs only; calibration metrics are given over successful and all runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub variant: Variant,
    pub loc: Regime,
    pub pred: Regime,
    pub runs: usize,
    pub successes: usize,
    pub sr: f64,
    pub td_mean: f64,
    pub td_std: f64,
    pub av_mean: f64,
    pub av_std: f64,
    pub cr_mean: f64,
    pub cr_std: f64,
    pub sf_mean: f64,
    pub sf_std: f64,
    pub apr_mean: f64,
    pub apr_std: f64,
    pub bs_mean: f64,
    pub bs_std: f64,
    pub ll_mean: f64,
    pub ll_std: f64,
    pub apr_all_mean: f64,
    pub apr_all_std: f64,
    pub bs_all_mean: f64,
    pub bs_all_std: f64,
    pub ll_all_mean: f64,
    pub ll_all_std: f64,
    pub fallback_steps: usize,
}

/// Groups runs by `(scenario, variant, loc, pred)` in sorted order.
pub fn aggregate(runs: &[RunSummary]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, &str, &str, &str), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((r.scenario.clone(), r.variant.as_str(), r.loc.as_str(), r.pred.as_str()))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let ok: Vec<&RunSummary> = g.iter().copied().filter(|r| r.success).collect();
            let col = |rs: &[&RunSummary], f: fn(&RunSummary) -> f64| mean_std(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (td_mean, td_std) = col(&ok, |r| r.td);
            let (av_mean, av_std) = col(&ok, |r| r.av);
            let (cr_mean, cr_std) = col(&ok, |r| r.cr);
            let (sf_mean, sf_std) = col(&ok, |r| r.sf);
            let (apr_mean, apr_std) = col(&ok, |r| r.apr);
            let (bs_mean, bs_std) = col(&ok, |r| r.bs);
            let (ll_mean, ll_std) = col(&ok, |r| r.ll);
            let (apr_all_mean, apr_all_std) = col(&g, |r| r.apr);
            let (bs_all_mean, bs_all_std) = col(&g, |r| r.bs);
            let (ll_all_mean, ll_all_std) = col(&g, |r| r.ll);
            let first = g[0];
            AggregateRow {
                scenario: first.scenario.clone(),
                variant: first.variant,
                loc: first.loc,
                pred: first.pred,
                runs: g.len(),
                successes: ok.len(),
                sr: 100.0 * ok.len() as f64 / g.len() as f64,
                td_mean,
                td_std,
                av_mean,
                av_std,
                cr_mean,
                cr_std,
                sf_mean,
                sf_std,
                apr_mean,
                apr_std,
                bs_mean,
                bs_std,
                ll_mean,
                ll_std,
                apr_all_mean,
                apr_all_std,
                bs_all_mean,
                bs_all_std,
                ll_all_mean,
                ll_all_std,
                fallback_steps: g.iter().map(|r| r.fallback_steps).sum(),
            }
        })
        .collect()
}
