//! Monte Carlo joint collision risk.
//!
//! Per horizon step one uniform sample set is drawn over the box spanned by
//! all rollout positions (inflated by the footprint half side) and shared by
//! every rollout. Each sample carries the joint obstacle occupancy of its
//! cell; a rollout's risk is the occupancy-weighted sum over samples, where
//! the weight is the closed-form robot coverage probability.
//!
//! Cell-mass convention: a sample stands for the obstacle probability mass
//! `pdf · Area/N` of its cell (clamped to 1), so the weighted sum estimates
//! the probability mass swept by the uncertain footprint.

use rand::Rng;

use crate::occupancy::{eig2, OccupancyKernel};
use crate::prediction::GaussianTube;
use crate::{Error, Mat2, Result, Vec2};

/// Obstacle variances are floored here before the density is formed.
pub const MIN_OBSTACLE_VAR: f64 = 1e-12;
/// Obstacles whose ellipse at this many sigmas misses the region are skipped.
pub const OBSTACLE_SKIP_SIGMAS: f64 = 6.0;
/// Squared Mahalanobis distance beyond which an obstacle density is taken as
/// zero (`exp(−q/2) < 1e-26`).
pub const PDF_CUTOFF_MAHALANOBIS2: f64 = 120.0;
/// Samples whose joint occupancy is below this are dropped by [`RiskField`].
pub const JOINT_PRUNE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRegion {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl SampleRegion {
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Result<Self> {
        if !(x_hi > x_lo && y_hi > y_lo) {
            return Err(Error::Contract(format!(
                "degenerate sample region [{x_lo}, {x_hi}]×[{y_lo}, {y_hi}]"
            )));
        }
        Ok(Self { x_lo, x_hi, y_lo, y_hi })
    }

    pub fn area(&self) -> f64 {
        (self.x_hi - self.x_lo) * (self.y_hi - self.y_lo)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_lo && p.x <= self.x_hi && p.y >= self.y_lo && p.y <= self.y_hi
    }

    fn intersects_box(&self, c: Vec2, hx: f64, hy: f64) -> bool {
        c.x + hx >= self.x_lo && c.x - hx <= self.x_hi && c.y + hy >= self.y_lo && c.y - hy <= self.y_hi
    }
}

/// Bounding box of the rollout positions at one step, inflated by `half_side`.
pub fn sample_region(positions: &[Vec2], half_side: f64) -> Result<SampleRegion> {
    if positions.is_empty() {
        return Err(Error::Contract("sample region needs at least one rollout".into()));
    }
    if !(half_side > 0.0) {
        return Err(Error::Contract("half side must be positive".into()));
    }
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    for p in positions {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(Error::InvalidState("non-finite rollout position".into()));
        }
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    SampleRegion::new(lo.x - half_side, hi.x + half_side, lo.y - half_side, hi.y + half_side)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskSampleSet {
    pub points: Vec<Vec2>,
    pub region: SampleRegion,
    pub cell_area: f64,
}

/// Draws `n` uniform points over `region` from `rng`.
pub fn draw_samples<R: Rng + ?Sized>(region: SampleRegion, n: usize, rng: &mut R) -> Result<RiskSampleSet> {
    if n == 0 {
        return Err(Error::Contract("need at least one risk sample".into()));
    }
    let (w, h) = (region.x_hi - region.x_lo, region.y_hi - region.y_lo);
    let points = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            Vec2::new(region.x_lo + u * w, region.y_lo + v * h)
        })
        .collect();
    Ok(RiskSampleSet {
        points,
        region,
        cell_area: region.area() / n as f64,
    })
}

/// Gaussian density of one obstacle at one step, with floored variances.
#[derive(Debug, Clone, Copy)]
pub struct ObstacleDensity {
    mean: Vec2,
    rot: Mat2,
    inv_var: [f64; 2],
    norm: f64,
    half_extent: Vec2,
}

impl ObstacleDensity {
    pub fn new(mean: Vec2, cov: &Mat2) -> Result<Self> {
        let frame = eig2(cov)?;
        let l1 = frame.lambda1.max(MIN_OBSTACLE_VAR);
        let l2 = frame.lambda2.max(MIN_OBSTACLE_VAR);
        let sxx = cov[(0, 0)].max(MIN_OBSTACLE_VAR);
        let syy = cov[(1, 1)].max(MIN_OBSTACLE_VAR);
        Ok(Self {
            mean,
            rot: frame.rotation,
            inv_var: [1.0 / l1, 1.0 / l2],
            norm: 1.0 / (2.0 * std::f64::consts::PI * (l1 * l2).sqrt()),
            half_extent: Vec2::new(sxx.sqrt(), syy.sqrt()) * OBSTACLE_SKIP_SIGMAS,
        })
    }

    #[inline]
    pub fn pdf(&self, p: Vec2) -> f64 {
        let d = p - self.mean;
        let u = self.rot[(0, 0)] * d.x + self.rot[(1, 0)] * d.y;
        let v = self.rot[(0, 1)] * d.x + self.rot[(1, 1)] * d.y;
        let q = u * u * self.inv_var[0] + v * v * self.inv_var[1];
        if q > PDF_CUTOFF_MAHALANOBIS2 {
            return 0.0;
        }
        self.norm * (-0.5 * q).exp()
    }

    fn touches(&self, region: &SampleRegion) -> bool {
        region.intersects_box(self.mean, self.half_extent.x, self.half_extent.y)
    }
}

/// Joint obstacle occupancy `1 − ∏ₒ(1 − pₒ(xⱼ))` at every sample, with
/// `pₒ = min(1, pdfₒ · cell_area)`.
pub fn joint_point_occupancy(samples: &RiskSampleSet, tubes: &[GaussianTube], t: usize) -> Result<Vec<f64>> {
    let mut densities = Vec::with_capacity(tubes.len());
    for tube in tubes {
        let (Some(mean), Some(cov)) = (tube.means.get(t), tube.covs.get(t)) else {
            return Err(Error::Contract(format!("tube has no step {t}")));
        };
        let d = ObstacleDensity::new(*mean, cov)?;
        if d.touches(&samples.region) {
            densities.push(d);
        }
    }
    Ok(joint_from_densities(samples, &densities))
}

pub(crate) fn joint_from_densities(samples: &RiskSampleSet, densities: &[ObstacleDensity]) -> Vec<f64> {
    let cell = samples.cell_area;
    samples
        .points
        .iter()
        .map(|&p| {
            let mut free = 1.0;
            for d in densities {
                let po = (d.pdf(p) * cell).min(1.0);
                free *= 1.0 - po;
            }
            1.0 - free
        })
        .collect()
}

/// Reference estimator: `clamp(Σⱼ jointⱼ · P_occ(xⱼ), 0, 1)` over all samples.
pub fn rollout_collision_prob(
    position: Vec2,
    pos_cov: &Mat2,
    samples: &RiskSampleSet,
    joint: &[f64],
    half_side: f64,
) -> Result<f64> {
    if joint.len() != samples.points.len() {
        return Err(Error::Contract(format!(
            "{} joint values for {} samples",
            joint.len(),
            samples.points.len()
        )));
    }
    let kernel = OccupancyKernel::new(pos_cov, half_side)?;
    let sum: f64 = samples
        .points
        .iter()
        .zip(joint)
        .map(|(&p, &j)| if j > 0.0 { j * kernel.prob(p, position) } else { 0.0 })
        .sum();
    Ok(sum.clamp(0.0, 1.0))
}

/// Samples with non-negligible joint occupancy for one horizon step, stored
/// in the principal frame of the shared robot coverage kernel and bucketed on
/// a uniform grid there, so each rollout only visits samples within reach.
///
/// Skipped terms are either pruned joint values below [`JOINT_PRUNE`] or
/// coverage probabilities below 1e-15, so with a closed-form kernel the result
/// agrees with [`rollout_collision_prob`] to within `N·1e-15`.
#[derive(Debug, Clone)]
pub struct RiskField {
    kernel: OccupancyKernel,
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    us: Vec<f64>,
    vs: Vec<f64>,
    joint: Vec<f64>,
}

impl RiskField {
    pub fn new(samples: &RiskSampleSet, joint: &[f64], kernel: OccupancyKernel, cell: f64) -> Result<Self> {
        if joint.len() != samples.points.len() {
            return Err(Error::Contract("joint/sample length mismatch".into()));
        }
        let cell = cell.max(1e-3);
        let active: Vec<(usize, [f64; 2])> = (0..joint.len())
            .filter(|&j| joint[j] >= JOINT_PRUNE)
            .map(|j| (j, kernel.to_frame(samples.points[j])))
            .collect();
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (_, u) in &active {
            for a in 0..2 {
                lo[a] = lo[a].min(u[a]);
                hi[a] = hi[a].max(u[a]);
            }
        }
        if active.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize + 1).max(1);
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize + 1).max(1);
        let index = |u: &[f64; 2]| -> usize {
            let ix = (((u[0] - lo[0]) / cell) as usize).min(nx - 1);
            let iy = (((u[1] - lo[1]) / cell) as usize).min(ny - 1);
            iy * nx + ix
        };
        let mut counts = vec![0u32; nx * ny + 1];
        for (_, u) in &active {
            counts[index(u) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let n = active.len();
        let (mut us, mut vs, mut js) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for (j, u) in &active {
            let c = index(u);
            let slot = fill[c] as usize;
            fill[c] += 1;
            us[slot] = u[0];
            vs[slot] = u[1];
            js[slot] = joint[*j];
        }
        Ok(Self {
            kernel,
            origin: lo,
            cell,
            nx,
            ny,
            starts,
            us,
            vs,
            joint: js,
        })
    }

    pub fn active_samples(&self) -> usize {
        self.joint.len()
    }

    pub fn kernel(&self) -> &OccupancyKernel {
        &self.kernel
    }

    /// Risk of a rollout centred at `position`.
    pub fn collision_prob(&self, position: Vec2) -> f64 {
        if self.joint.is_empty() {
            return 0.0;
        }
        let c = self.kernel.to_frame(position);
        let reach = self.kernel.reach_axes();
        let span = |c: f64, h: f64, o: f64, n: usize| -> Option<(usize, usize)> {
            let lo = ((c - h - o) / self.cell).floor();
            let hi = ((c + h - o) / self.cell).floor();
            if hi < 0.0 || lo >= n as f64 {
                None
            } else {
                Some((lo.max(0.0) as usize, (hi as usize).min(n - 1)))
            }
        };
        let (Some((lo_x, hi_x)), Some((lo_y, hi_y))) = (
            span(c[0], reach[0], self.origin[0], self.nx),
            span(c[1], reach[1], self.origin[1], self.ny),
        ) else {
            return 0.0;
        };
        let mut sum = 0.0;
        for iy in lo_y..=hi_y {
            let row = iy * self.nx;
            let (a, b) = (self.starts[row + lo_x] as usize, self.starts[row + hi_x + 1] as usize);
            for s in a..b {
                let p = self.kernel.prob_frame([self.us[s] - c[0], self.vs[s] - c[1]]);
                if p > 0.0 {
                    sum += self.joint[s] * p;
                }
            }
        }
        sum.clamp(0.0, 1.0)
    }
}

/// Per-rollout, per-step risks, row-major `K × T`. Column `t` holds the risk
/// at horizon step `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskProfile {
    rollouts: usize,
    steps: usize,
    data: Vec<f64>,
}

impl RiskProfile {
    pub fn zeros(rollouts: usize, steps: usize) -> Self {
        Self {
            rollouts,
            steps,
            data: vec![0.0; rollouts * steps],
        }
    }

    pub fn from_columns(rollouts: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let steps = columns.len();
        let mut p = Self::zeros(rollouts, steps);
        for (t, col) in columns.iter().enumerate() {
            if col.len() != rollouts {
                return Err(Error::Contract("risk column length mismatch".into()));
            }
            for (k, &r) in col.iter().enumerate() {
                p.set(k, t, r);
            }
        }
        Ok(p)
    }

    pub fn rollouts(&self) -> usize {
        self.rollouts
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn get(&self, k: usize, t: usize) -> f64 {
        self.data[k * self.steps + t]
    }

    pub fn set(&mut self, k: usize, t: usize, r: f64) {
        self.data[k * self.steps + t] = r.clamp(0.0, 1.0);
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.steps..(k + 1) * self.steps]
    }

    pub fn max_risk(&self, k: usize) -> f64 {
        self.row(k).iter().copied().fold(0.0, f64::max)
    }

    pub fn first_step(&self) -> Vec<f64> {
        (0..self.rollouts).map(|k| if self.steps > 0 { self.get(k, 0) } else { 0.0 }).collect()
    }
}

/// Importance-weighted first-step risk `Σₖ wₖ·riskₖ`.
pub fn executed_step_risk(weights: &[f64], risks_step1: &[f64]) -> Result<f64> {
    if weights.len() != risks_step1.len() {
        return Err(Error::Contract("weights and risks differ in length".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("weights sum to {total}")));
    }
    let r: f64 = weights.iter().zip(risks_step1).map(|(w, r)| w * r).sum();
    Ok(r.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tube_at(mean: Vec2, cov: Mat2) -> GaussianTube {
        GaussianTube {
            means: vec![mean; 3],
            covs: vec![cov; 3],
        }
    }

    #[test]
    fn region_examples() {
        let r = sample_region(&[Vec2::zeros()], 0.4).unwrap();
        assert_eq!((r.x_lo, r.x_hi, r.y_lo, r.y_hi), (-0.4, 0.4, -0.4, 0.4));
        let r = sample_region(&[Vec2::zeros(), Vec2::new(1.0, 2.0)], 0.4).unwrap();
        assert_abs_diff_eq!(r.x_lo, -0.4);
        assert_abs_diff_eq!(r.x_hi, 1.4);
        assert_abs_diff_eq!(r.y_lo, -0.4);
        assert_abs_diff_eq!(r.y_hi, 2.4);
        assert!(sample_region(&[], 0.4).is_err());
    }

    #[test]
    fn samples_cell_area_and_determinism() {
        let region = SampleRegion::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let s = draw_samples(region, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.cell_area, 0.25);
        let a = draw_samples(region, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = draw_samples(region, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.points.iter().all(|p| region.contains(*p)));
        assert!(draw_samples(region, 0, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
    }

    #[test]
    fn joint_examples() {
        let region = SampleRegion::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let s = draw_samples(region, 50, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(joint_point_occupancy(&s, &[], 1).unwrap().iter().all(|&j| j == 0.0));

        let tube = tube_at(Vec2::new(0.1, 0.0), Mat2::identity() * 0.2);
        let joint = joint_point_occupancy(&s, std::slice::from_ref(&tube), 1).unwrap();
        let d = ObstacleDensity::new(tube.means[1], &tube.covs[1]).unwrap();
        for (p, j) in s.points.iter().zip(&joint) {
            assert_abs_diff_eq!(*j, (d.pdf(*p) * s.cell_area).min(1.0), epsilon = 1e-15);
        }

        // a point where each of two obstacles has p = 0.5 → 0.75
        let one = RiskSampleSet {
            points: vec![Vec2::zeros()],
            region,
            cell_area: 0.0,
        };
        let d = ObstacleDensity::new(Vec2::zeros(), &(Mat2::identity() * 0.1)).unwrap();
        let cell = 0.5 / d.pdf(Vec2::zeros());
        let one = RiskSampleSet { cell_area: cell, ..one };
        let j = joint_from_densities(&one, &[d, d]);
        assert_abs_diff_eq!(j[0], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn joint_clamps_delta_obstacles() {
        let region = SampleRegion::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let s = RiskSampleSet {
            points: vec![Vec2::zeros()],
            region,
            cell_area: 0.01,
        };
        let j = joint_point_occupancy(&s, &[tube_at(Vec2::zeros(), Mat2::zeros())], 0).unwrap();
        assert_eq!(j[0], 1.0);
    }

    #[test]
    fn far_obstacle_is_skipped() {
        let region = SampleRegion::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let s = draw_samples(region, 200, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let tube = tube_at(Vec2::new(10.0, 0.0), Mat2::identity() * 0.25);
        let joint = joint_point_occupancy(&s, &[tube], 1).unwrap();
        assert!(joint.iter().all(|&j| j == 0.0));
        let r = rollout_collision_prob(Vec2::zeros(), &(Mat2::identity() * 0.04), &s, &joint, 0.4).unwrap();
        assert!(r < 1e-6);
    }

    #[test]
    fn zero_obstacles_zero_risk() {
        let region = SampleRegion::new(-1.0, 1.0, -1.0, 1.0).unwrap();
        let s = draw_samples(region, 100, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let joint = joint_point_occupancy(&s, &[], 0).unwrap();
        assert_eq!(rollout_collision_prob(Vec2::zeros(), &Mat2::zeros(), &s, &joint, 0.4).unwrap(), 0.0);
        assert!(rollout_collision_prob(Vec2::zeros(), &Mat2::zeros(), &s, &joint[1..], 0.4).is_err());
    }

    #[test]
    fn field_matches_reference_sum() {
        let region = SampleRegion::new(-2.0, 3.0, -1.5, 2.0).unwrap();
        let s = draw_samples(region, 3000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let tubes = [
            tube_at(Vec2::new(0.5, 0.2), Mat2::new(0.3, 0.05, 0.05, 0.2)),
            tube_at(Vec2::new(2.0, -1.0), Mat2::identity() * 1e-4),
        ];
        let joint = joint_point_occupancy(&s, &tubes, 1).unwrap();
        for cov in [Mat2::zeros(), Mat2::identity() * 1e-8, Mat2::new(0.09, 0.03, 0.03, 0.04)] {
            let exact = RiskField::new(&s, &joint, OccupancyKernel::new(&cov, 0.4).unwrap(), 0.25).unwrap();
            let table = RiskField::new(&s, &joint, OccupancyKernel::tabulated(&cov, 0.4).unwrap(), 0.25).unwrap();
            for pos in [Vec2::new(0.4, 0.1), Vec2::new(2.0, -1.0), Vec2::new(-1.9, 1.9), Vec2::new(8.0, 8.0)] {
                let slow = rollout_collision_prob(pos, &cov, &s, &joint, 0.4).unwrap();
                assert_abs_diff_eq!(exact.collision_prob(pos), slow, epsilon = 1e-12);
                assert!((table.collision_prob(pos) - slow).abs() <= 1e-6 * slow + 1e-10);
            }
        }
    }

    #[test]
    fn executed_risk_examples() {
        assert_abs_diff_eq!(executed_step_risk(&[0.25; 4], &[0.2; 4]).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(executed_step_risk(&[1.0, 0.0], &[0.3, 0.9]).unwrap(), 0.3);
        assert_abs_diff_eq!(executed_step_risk(&[0.25, 0.75], &[0.0, 0.1]).unwrap(), 0.075, epsilon = 1e-15);
        assert!(executed_step_risk(&[0.5, 0.4], &[0.0, 0.1]).is_err());
        assert!(executed_step_risk(&[1.0], &[0.0, 0.1]).is_err());
    }

    #[test]
    fn profile_accessors() {
        let p = RiskProfile::from_columns(2, &[vec![0.1, 0.2], vec![0.5, 0.0]]).unwrap();
        assert_eq!(p.row(0), &[0.1, 0.5]);
        assert_eq!(p.max_risk(1), 0.2);
        assert_eq!(p.first_step(), vec![0.1, 0.2]);
    }
}
