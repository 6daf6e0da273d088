//! Acceptance suite. Prints one line per criterion and exits non-zero when a
//! criterion fails that is not listed in `KNOWN_RED`.
//!
//! `DUCCT_ACCEPTANCE=1,4,5` restricts the run to the listed criteria.

use std::time::Instant;

use ducct_core::cli::{bench_cycle, run_specs, ExperimentConfig};
use ducct_core::dynamics::{step, ut_propagate_tube, Control, RobotState, StateBelief, UtParams};
use ducct_core::metrics::{self, apr, brier, log_loss, mann_whitney_greater, median, ConsistencyReport};
use ducct_core::mppi::{apply_risk, min_max_risk_rollout, weights, MppiConfig, Variant};
use ducct_core::occupancy::{occ_prob, PositionBelief};
use ducct_core::prediction::GaussianTube;
use ducct_core::risk::{draw_samples, joint_point_occupancy, rollout_collision_prob, RiskProfile, SampleRegion};
use ducct_core::sim::verify::{localizer_sweep, SweepSize};
use ducct_core::sim::{run_episode, EpisodeConfig, Regime, RunSpec};
use ducct_core::{Mat2, Mat3, Vec2};
use nalgebra::{Rotation2, Vector3};
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Criteria expected to stay red on this machine; see README.
const KNOWN_RED: &[u32] = &[2, 8, 10];

const L_COMBINED: f64 = 0.8;
const HALF: f64 = 0.4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Desk-scale controller: paper settings except rollouts and sample counts.
fn desk_config() -> EpisodeConfig {
    let mut c = EpisodeConfig::default();
    c.mppi.rollouts = 32;
    c.risk.n_mc = 500;
    c
}

/// Gauss–Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss–Legendre rule on [a, b].
fn composite(a: f64, b: f64, panels: usize, rule: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * rule.len());
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for &(x, w) in rule {
            out.push((c + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

fn random_spd<R: Rng>(rng: &mut R, sd_lo: f64, sd_hi: f64) -> Mat2 {
    let s1: f64 = rng.random_range(sd_lo..sd_hi);
    let s2: f64 = rng.random_range(sd_lo..sd_hi);
    let r = Rotation2::new(rng.random_range(0.0..std::f64::consts::PI)).into_inner();
    r * Mat2::from_diagonal(&Vec2::new(s1 * s1, s2 * s2)) * r.transpose()
}

fn gaussian_pdf(p: Vec2, mean: Vec2, cov: &Mat2) -> f64 {
    let inv = cov.try_inverse().unwrap();
    let d = p - mean;
    (-0.5 * (d.transpose() * inv * d)[0]).exp() / (2.0 * std::f64::consts::PI * cov.determinant().sqrt())
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let rule = gauss_legendre(8);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mean = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let cov = random_spd(&mut rng, 0.02, 0.6);
        let belief = PositionBelief::new(mean, cov);
        let r = HALF + 8.0 * cov.symmetric_eigenvalues().max().sqrt();
        let xs = composite(mean.x - r, mean.x + r, 48, &rule);
        let ys = composite(mean.y - r, mean.y + r, 48, &rule);
        let mut total = 0.0;
        for &(x, wx) in &xs {
            for &(y, wy) in &ys {
                total += wx * wy * occ_prob(Vec2::new(x, y), &belief, HALF).unwrap();
            }
        }
        worst = worst.max((total - L_COMBINED * L_COMBINED).abs() / (L_COMBINED * L_COMBINED));
    }
    outcome(worst <= 0.005, format!("max relative error {worst:.2e} (tol 5e-3)"))
}

struct RiskCase {
    mean: Vec2,
    cov: Mat2,
    obstacles: Vec<(Vec2, Mat2)>,
}

impl RiskCase {
    fn tubes(&self) -> Vec<GaussianTube> {
        self.obstacles
            .iter()
            .map(|&(m, c)| GaussianTube {
                means: vec![m],
                covs: vec![c],
            })
            .collect()
    }

    /// Support of the robot coverage kernel: outside `L + 4σ` per axis lies
    /// less than 1e-4 of its mass.
    fn region(&self) -> SampleRegion {
        let r = HALF + 4.0 * self.cov.symmetric_eigenvalues().max().sqrt();
        SampleRegion::new(self.mean.x - r, self.mean.x + r, self.mean.y - r, self.mean.y + r).unwrap()
    }

    fn estimate(&self, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = draw_samples(self.region(), n, &mut rng).unwrap();
        let joint = joint_point_occupancy(&samples, &self.tubes(), 0).unwrap();
        rollout_collision_prob(self.mean, &self.cov, &samples, &joint, HALF).unwrap()
    }

    /// `E_p[1 − ∏ₒ(1 − massₒ(square(p)))]` and the largest per-square mass seen.
    fn oracle(&self, outer: &[(f64, f64)], inner: &[(f64, f64)]) -> (f64, f64) {
        let chol = self.cov.cholesky().unwrap().l();
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut total = 0.0;
        let mut max_mass: f64 = 0.0;
        for &(z1, w1) in outer {
            for &(z2, w2) in outer {
                let p = self.mean + chol * Vec2::new(z1, z2);
                let mut free = 1.0;
                for (m, c) in &self.obstacles {
                    let mut mass = 0.0;
                    for &(u, wu) in inner {
                        for &(v, wv) in inner {
                            let q = p + Vec2::new(u * HALF, v * HALF);
                            mass += wu * wv * HALF * HALF * gaussian_pdf(q, *m, c);
                        }
                    }
                    max_mass = max_mass.max(mass);
                    free *= 1.0 - mass;
                }
                total += w1 * w2 * phi(z1) * phi(z2) * (1.0 - free);
            }
        }
        (total, max_mass)
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let outer = composite(-6.0, 6.0, 6, &gauss_legendre(8));
    let inner = gauss_legendre(16);
    let mut cases = Vec::new();
    let mut rejected = 0;
    while cases.len() < 50 {
        let mean = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let cov = random_spd(&mut rng, 0.05, 0.3);
        let n_obs = rng.random_range(1..=3);
        let obstacles = (0..n_obs)
            .map(|_| {
                let d: f64 = rng.random_range(0.3..2.0);
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                (mean + Vec2::new(d * a.cos(), d * a.sin()), random_spd(&mut rng, 0.5, 1.2))
            })
            .collect();
        let case = RiskCase { mean, cov, obstacles };
        let (oracle, max_mass) = case.oracle(&outer, &inner);
        if max_mass > 0.2 {
            rejected += 1;
            continue;
        }
        cases.push((case, oracle));
    }
    let results: Vec<(f64, f64, f64, usize)> = cases
        .par_iter()
        .enumerate()
        .map(|(i, (case, oracle))| {
            let linear: f64 = case
                .obstacles
                .iter()
                .map(|&o| {
                    RiskCase {
                        mean: case.mean,
                        cov: case.cov,
                        obstacles: vec![o],
                    }
                    .oracle(&outer, &inner)
                    .0
                })
                .sum();
            (case.estimate(20_000, 1000 + i as u64), *oracle, linear, case.obstacles.len())
        })
        .collect();
    let within = |est: f64, target: f64| (est - target).abs() <= (0.05 * target).max(0.005);
    let failures = results.iter().filter(|r| !within(r.0, r.1)).count();
    let multi = results.iter().filter(|r| !within(r.0, r.1) && r.3 > 1).count();
    let lin_failures = results.iter().filter(|r| !within(r.0, r.2)).count();
    let gap = results.iter().map(|r| (r.2 - r.1) / r.1).fold(0.0, f64::max);
    let probe = &cases[0].0;
    let spread = |n: usize| {
        let v: Vec<f64> = (0..200).into_par_iter().map(|r| probe.estimate(n, 50_000 + r)).collect();
        metrics::mean_std(&v).1
    };
    let (s1, s4, s16) = (spread(1000), spread(4000), spread(16000));
    let (r1, r2) = (s1 / s4, s4 / s16);
    let scaling = [r1, r2].iter().all(|&r| r >= 2.0 / 1.5 && r <= 2.0 * 1.5);
    outcome(
        failures == 0 && scaling,
        format!(
            "{failures}/50 outside max(5%, 0.005) of the product oracle ({multi} with several obstacles; \
             {rejected} draws above mass 0.2 redrawn); against the summed single-obstacle masses {lin_failures}/50, \
             largest sum/product gap {:.1}%; spread ratios 1k/4k {r1:.2}, 4k/16k {r2:.2} (want 2 within x1.5)",
            100.0 * gap
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let dt = 0.05;
    let steps = 40;
    let n = 1_000_000;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let pos = random_spd(&mut rng, 0.05, 0.3);
        let sd_psi: f64 = rng.random_range(0.02..0.25);
        let mut cov = Mat3::zeros();
        cov.fixed_view_mut::<2, 2>(0, 0).copy_from(&pos);
        cov[(2, 2)] = sd_psi * sd_psi;
        let c02 = rng.random_range(-0.3..0.3) * (pos[(0, 0)] * cov[(2, 2)]).sqrt();
        cov[(0, 2)] = c02;
        cov[(2, 0)] = c02;
        let mean = RobotState::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-3.0..3.0));
        let controls: Vec<Control> = (0..steps)
            .map(|_| Control::new(rng.random_range(0.2..1.0), rng.random_range(-1.5..1.5)))
            .collect();
        let belief = StateBelief::new(mean, cov).unwrap();
        let tube = ut_propagate_tube(&belief, &controls, dt, &UtParams::default()).unwrap();

        let chol = cov.cholesky().unwrap().l();
        let chunks = 16;
        let per = n / chunks;
        let sums: Vec<Vec<[f64; 5]>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut r = ChaCha8Rng::seed_from_u64(9000 + c as u64);
                let mut acc = vec![[0.0; 5]; steps + 1];
                for _ in 0..per {
                    let z = Vector3::new(r.sample(StandardNormal), r.sample(StandardNormal), r.sample(StandardNormal));
                    let d = chol * z;
                    let mut s = RobotState::new(mean.x + d.x, mean.y + d.y, mean.psi + d.z);
                    for t in 0..=steps {
                        if t > 0 {
                            s = step(&s, &controls[t - 1], dt).unwrap();
                        }
                        let a = &mut acc[t];
                        a[0] += s.x;
                        a[1] += s.y;
                        a[2] += s.x * s.x;
                        a[3] += s.x * s.y;
                        a[4] += s.y * s.y;
                    }
                }
                acc
            })
            .collect();
        for t in 1..=steps {
            let mut a = [0.0; 5];
            for c in &sums {
                for i in 0..5 {
                    a[i] += c[t][i];
                }
            }
            let m = (per * chunks) as f64;
            let (mx, my) = (a[0] / m, a[1] / m);
            let mc = Mat2::new(a[2] / m - mx * mx, a[3] / m - mx * my, a[3] / m - mx * my, a[4] / m - my * my);
            let err = (tube.positional(t) - mc).norm() / mc.norm();
            worst = worst.max(err);
        }
    }
    let zero = StateBelief::new(RobotState::new(0.0, 0.0, 0.3), Mat3::zeros()).unwrap();
    let zt = ut_propagate_tube(&zero, &[Control::new(0.8, 0.5); 40], dt, &UtParams::default()).unwrap();
    let exact_zero = zt.covs.iter().all(|c| c.iter().all(|&v| v == 0.0));
    outcome(
        worst <= 0.05 && exact_zero,
        format!("max relative Frobenius error {worst:.4} (tol 0.05); zero input gives zero tube: {exact_zero}"),
    )
}

fn criterion_4() -> Outcome {
    let mut runner = TestRunner::new(PtConfig {
        cases: 100_000,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let cfg = MppiConfig::default();
    let threshold = cfg.risk_reject_threshold();
    let strategy = (1usize..48).prop_flat_map(|k| {
        (
            proptest::collection::vec(-(1i64 << 20)..(1i64 << 20), k),
            proptest::collection::vec(any::<bool>(), k),
            proptest::collection::vec(0.0f64..0.2, k * 5),
            -(1i64 << 20)..(1i64 << 20),
            0.01f64..10.0,
        )
    });
    let res = runner.run(&strategy, |(raw, rej, risk, shift, temp)| {
        let k = raw.len();
        let costs: Vec<f64> = raw.iter().map(|&c| c as f64 / 1024.0).collect();
        let shifted: Vec<f64> = costs.iter().map(|&c| c + shift as f64 / 1024.0).collect();
        match weights(&costs, &rej, temp) {
            Some(w) => {
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                for (wk, &r) in w.iter().zip(&rej) {
                    prop_assert!(*wk >= 0.0);
                    if r {
                        prop_assert_eq!(*wk, 0.0);
                    }
                }
                let w2 = weights(&shifted, &rej, temp).unwrap();
                prop_assert_eq!(w, w2);
            }
            None => prop_assert!(rej.iter().all(|&r| r)),
        }
        let columns: Vec<Vec<f64>> = (0..5).map(|t| (0..k).map(|i| risk[i * 5 + t]).collect()).collect();
        let profile = RiskProfile::from_columns(k, &columns).unwrap();
        let (_, flags) = apply_risk(&costs, &profile, &cfg, Variant::Ducct).unwrap();
        for (i, &f) in flags.iter().enumerate() {
            prop_assert_eq!(f, profile.max_risk(i) > threshold);
        }
        if let Some(w) = weights(&costs, &flags, temp) {
            for (wk, &f) in w.iter().zip(&flags) {
                if f {
                    prop_assert_eq!(*wk, 0.0);
                }
            }
        } else {
            let best = min_max_risk_rollout(&profile);
            let brute = (0..k)
                .min_by(|&a, &b| profile.max_risk(a).total_cmp(&profile.max_risk(b)).then(a.cmp(&b)))
                .unwrap();
            prop_assert_eq!(best, brute);
        }
        Ok(())
    });
    match res {
        Ok(()) => outcome(true, "100000 cases: normalisation, shift invariance, rejection, fallback"),
        Err(e) => outcome(false, format!("{e}")),
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..200);
        let preds: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random(),
            })
            .collect();
        let outs: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let eps = 10f64.powf(rng.random_range(-9.0..-2.0));
        let mut b = 0.0;
        let mut l = 0.0;
        let mut a = 0.0;
        for (&p, &c) in preds.iter().zip(&outs) {
            let y = if c { 1.0 } else { 0.0 };
            b += (p - y) * (p - y);
            let q = p.max(eps).min(1.0 - eps);
            l -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
            a += p;
        }
        let nf = n as f64;
        worst = worst
            .max((brier(&preds, &outs).unwrap() - b / nf).abs())
            .max((log_loss(&preds, &outs, eps).unwrap() - l / nf).abs())
            .max((apr(&preds).unwrap() - a / nf).abs());
    }
    let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    let mut proper = true;
    for &q in &grid {
        let expected = |f: &dyn Fn(f64, bool) -> f64, p: f64| q * f(p, true) + (1.0 - q) * f(p, false);
        let bs = |p: f64, c: bool| brier(&[p], &[c]).unwrap();
        let ll = |p: f64, c: bool| log_loss(&[p], &[c], metrics::DEFAULT_LL_EPS).unwrap();
        for f in [&bs as &dyn Fn(f64, bool) -> f64, &ll] {
            let best = grid
                .iter()
                .copied()
                .min_by(|&x, &y| expected(f, x).total_cmp(&expected(f, y)))
                .unwrap();
            proper &= (best - q).abs() < 1e-12;
        }
    }
    outcome(
        worst <= 1e-12 && proper,
        format!("max deviation {worst:.1e} over 10000 batches; propriety grid minimum at truth: {proper}"),
    )
}

fn criterion_6() -> Outcome {
    let cfg = EpisodeConfig::default();
    let size = SweepSize::default();
    let mut reports = Vec::new();
    for r in Regime::ALL {
        let v = localizer_sweep(&cfg.localizer, r, cfg.mppi.dt, size, 606).unwrap();
        reports.push((r, ConsistencyReport::new(r.as_str(), v).unwrap()));
    }
    let get = |r: Regime| &reports.iter().find(|(x, _)| *x == r).unwrap().1;
    let (s, o, u) = (get(Regime::Standard), get(Regime::Over), get(Regime::Under));
    let pass = (1.85..=2.15).contains(&s.mean_nees) && o.mean_nees > 3.0 && u.mean_nees < 1.2 && s.l2 < o.l2 && s.l2 < u.l2;
    outcome(
        pass,
        format!(
            "{} steps/regime; mean NEES std {:.3} over {:.1} under {:.3}; L2 std {:.4} over {:.4} under {:.4}",
            s.count, s.mean_nees, o.mean_nees, u.mean_nees, s.l2, o.l2, u.l2
        ),
    )
}

fn cell(scenario: &str, variant: Variant, loc: Regime, pred: Regime, seeds: std::ops::Range<u64>) -> Vec<RunSpec> {
    seeds
        .map(|seed| RunSpec {
            scenario: scenario.into(),
            variant,
            loc,
            pred,
            seed,
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let cfg = desk_config();
    let empty = run_specs(&cell("empty", Variant::Ducct, Regime::Standard, Regime::Standard, 0..20), &cfg, None).unwrap();
    let min_av = empty.iter().map(|s| s.av).fold(f64::INFINITY, f64::min);
    let empty_ok = empty.iter().all(|s| s.success) && min_av >= 0.7 * cfg.mppi.v_max;
    let c3 = run_specs(&cell("c3p3", Variant::Ducct, Regime::Standard, Regime::Standard, 0..30), &cfg, None).unwrap();
    let sr = 100.0 * c3.iter().filter(|s| s.success).count() as f64 / c3.len() as f64;
    outcome(
        empty_ok && sr >= 80.0,
        format!(
            "empty: {}/20 success, min AV {min_av:.3} m/s (want >= {:.2}); c3p3 SR {sr:.1}% (want >= 80)",
            empty.iter().filter(|s| s.success).count(),
            0.7 * cfg.mppi.v_max
        ),
    )
}

fn criterion_8() -> Outcome {
    let cfg = desk_config();
    let seeds = 0..30;
    let run = |loc, pred| run_specs(&cell("c9p9", Variant::Ducct, loc, pred, seeds.clone()), &cfg, None).unwrap();
    let std_std = run(Regime::Standard, Regime::Standard);
    let over_under = run(Regime::Over, Regime::Under);
    let under_under = run(Regime::Under, Regime::Under);
    let std_over = run(Regime::Standard, Regime::Over);
    let col = |runs: &[metrics::RunSummary], f: fn(&metrics::RunSummary) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
    let sr = |runs: &[metrics::RunSummary]| 100.0 * runs.iter().filter(|s| s.success).count() as f64 / runs.len() as f64;

    let ll_over = col(&std_over, |s| s.ll);
    let ll_under: Vec<f64> = col(&over_under, |s| s.ll).into_iter().chain(col(&under_under, |s| s.ll)).collect();
    let a = mann_whitney_greater(&ll_over, &ll_under).unwrap();
    let pass_a = a.p < 0.05;

    let td_fr = col(&over_under, |s| s.td);
    let td_std = col(&std_std, |s| s.td);
    let ratio = median(&td_fr) / median(&td_std);
    let b = mann_whitney_greater(&td_fr, &td_std).unwrap();
    let pass_b = ratio >= 1.15 && b.p < 0.05;

    let apr_uu = col(&under_under, |s| s.apr);
    let apr_ou = col(&over_under, |s| s.apr);
    let c = mann_whitney_greater(&apr_ou, &apr_uu).unwrap();
    let (sr_uu, sr_ou) = (sr(&under_under), sr(&over_under));
    let pass_c = c.p < 0.05 && sr_uu < sr_ou;

    println!(
        "    8a LL pred=over median {:.4} vs pred=under median {:.4}, p={:.2e}: {}",
        median(&ll_over),
        median(&ll_under),
        a.p,
        verdict(pass_a)
    );
    println!(
        "    8b median TD (loc over, pred under) {:.2} s vs standard {:.2} s, ratio {ratio:.3} (want >= 1.15), p={:.2e}: {}",
        median(&td_fr),
        median(&td_std),
        b.p,
        verdict(pass_b)
    );
    println!(
        "    8c mean APR (under,under) {:.4}% vs (loc over, pred under) {:.4}%, p={:.2e}; SR {sr_uu:.1}% vs {sr_ou:.1}%: {}",
        100.0 * metrics::mean_std(&apr_uu).0,
        100.0 * metrics::mean_std(&apr_ou).0,
        c.p,
        verdict(pass_c)
    );
    println!(
        "    SR std/std {:.1}%, std/over {:.1}%",
        sr(&std_std),
        sr(&std_over)
    );
    outcome(
        pass_a && pass_b && pass_c,
        format!("a {} b {} c {}", verdict(pass_a), verdict(pass_b), verdict(pass_c)),
    )
}

fn criterion_9() -> Outcome {
    let mut cfg = desk_config();
    cfg.limits.timeout = 10.0;
    let specs = vec![
        cell("c3p3", Variant::Ducct, Regime::Standard, Regime::Standard, 5..6),
        cell("c9p9", Variant::Dra, Regime::Over, Regime::Under, 6..7),
        cell("c6p6", Variant::Vanilla, Regime::Under, Regime::Over, 7..8),
    ]
    .concat();
    let bytes = |threads: usize| -> Vec<(Vec<u8>, Vec<u8>)> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            specs
                .par_iter()
                .map(|s| {
                    let log = run_episode(s, &cfg).unwrap();
                    (log.csv_bytes().unwrap(), serde_json::to_vec_pretty(&log.summary()).unwrap())
                })
                .collect()
        })
    };
    let a = bytes(1);
    let b = bytes(1);
    let c = bytes(8);
    let same = a == b && a == c;
    outcome(
        same,
        format!("{} runs, repeat and 1 vs 8 workers byte-identical: {same}", specs.len()),
    )
}

fn criterion_10() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.controller = Variant::Ducct;
    let r = bench_cycle(&cfg, 18, 5).unwrap();
    outcome(
        r.median_ms <= 50.0,
        format!(
            "K={} T={} N_MC={} 18 peds on {} worker(s): median {:.1} ms, p95 {:.1} ms, risk stage {:.1} ms (target <= 50 ms)",
            cfg.mppi.rollouts,
            cfg.mppi.horizon,
            cfg.risk.n_mc,
            rayon::current_num_threads(),
            r.median_ms,
            r.p95_ms,
            r.risk_median_ms
        ),
    )
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "occupancy identity", criterion_1),
        (2, "risk estimator consistency", criterion_2),
        (3, "UT tube fidelity", criterion_3),
        (4, "MPPI algebra", criterion_4),
        (5, "scoring-rule oracles", criterion_5),
        (6, "consistency regimes", criterion_6),
        (7, "closed-loop sanity", criterion_7),
        (8, "miscalibration phenomenology", criterion_8),
        (9, "determinism", criterion_9),
        (10, "cycle latency", criterion_10),
    ];
    let only: Option<Vec<u32>> = std::env::var("DUCCT_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let r = f();
        let secs = t0.elapsed().as_secs_f64();
        let known = KNOWN_RED.contains(&id);
        println!(
            "criterion {id:>2} {name}: {}{} ({secs:.1} s) {}",
            verdict(r.pass),
            if !r.pass && known { " [known red]" } else { "" },
            r.detail
        );
        if !r.pass && !known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
