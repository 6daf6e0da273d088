//! Closed-form probability that a point is covered by the robot's square
//! footprint when the robot position is Gaussian.
//!
//! In the principal frame of the positional covariance the square is
//! separable, so the coverage probability factors into two differences of
//! error functions.

use serde::{Deserialize, Serialize};

use crate::{Error, Mat2, Result, Vec2};

/// Eigenvalues below this are a consistency error; between it and zero they
/// are floored to zero.
pub const EIGEN_FLOOR_TOL: f64 = 1e-9;

/// Beyond this many standard deviations past the half side the coverage
/// factor is below 1e-15 and is treated as zero.
pub const TAIL_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionBelief {
    pub mean: Vec2,
    pub cov: Mat2,
}

impl PositionBelief {
    pub fn new(mean: Vec2, cov: Mat2) -> Self {
        Self { mean, cov }
    }
}

/// Robot and pedestrian footprint sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootprintSpec {
    l_robot: f64,
    l_person: f64,
    l_combined: f64,
    half_side: f64,
}

impl FootprintSpec {
    /// Square of side `l_robot + l_person`.
    pub fn new(l_robot: f64, l_person: f64) -> Result<Self> {
        Self::with_side_factor(l_robot, l_person, 1.0)
    }

    /// Square of side `2·(l_robot + l_person)`, which circumscribes the
    /// circular collision region of radius `l_combined`.
    pub fn circumscribing(l_robot: f64, l_person: f64) -> Result<Self> {
        Self::with_side_factor(l_robot, l_person, 2.0)
    }

    fn with_side_factor(l_robot: f64, l_person: f64, factor: f64) -> Result<Self> {
        if !(l_robot > 0.0 && l_person > 0.0) || !l_robot.is_finite() || !l_person.is_finite() {
            return Err(Error::Config(format!(
                "footprint radii must be positive, got {l_robot} and {l_person}"
            )));
        }
        let l_combined = l_robot + l_person;
        Ok(Self {
            l_robot,
            l_person,
            l_combined,
            half_side: factor * l_combined / 2.0,
        })
    }

    pub fn l_robot(&self) -> f64 {
        self.l_robot
    }

    pub fn l_person(&self) -> f64 {
        self.l_person
    }

    /// Combined radius, also the ground-truth collision distance.
    pub fn l_combined(&self) -> f64 {
        self.l_combined
    }

    /// Half side `L` of the planning square.
    pub fn half_side(&self) -> f64 {
        self.half_side
    }
}

/// Eigendecomposition `cov = R·diag(λ₁, λ₂)·Rᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalFrame {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Columns are the eigenvectors for `lambda1` and `lambda2`.
    pub rotation: Mat2,
}

/// Closed-form symmetric 2×2 eigendecomposition.
///
/// Eigenvalues are ordered `λ₁ ≥ λ₂`. The first eigenvector has its first
/// nonzero component positive; the second is the first rotated by +90° so
/// that `det R = +1`. Repeated eigenvalues give the identity rotation.
pub fn eig2(cov: &Mat2) -> Result<PrincipalFrame> {
    let (a, b, c) = (cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]);
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(Error::Consistency("non-finite covariance".into()));
    }
    let scale = a.abs().max(c.abs()).max(b.abs());
    if (cov[(0, 1)] - cov[(1, 0)]).abs() > EIGEN_FLOOR_TOL * scale.max(1.0) {
        return Err(Error::Consistency("covariance is not symmetric".into()));
    }
    let half_tr = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let disc = half_diff.hypot(b);
    let (mut l1, mut l2) = (half_tr + disc, half_tr - disc);
    let rotation = if disc <= 4.0 * f64::EPSILON * scale {
        Mat2::identity()
    } else {
        // two candidate eigenvectors for λ₁; take the better conditioned one
        let v1 = Vec2::new(b, l1 - a);
        let v2 = Vec2::new(l1 - c, b);
        let mut e = if v1.norm_squared() >= v2.norm_squared() { v1 } else { v2 };
        e /= e.norm();
        if e.x < 0.0 || (e.x == 0.0 && e.y < 0.0) {
            e = -e;
        }
        Mat2::new(e.x, -e.y, e.y, e.x)
    };
    for l in [&mut l1, &mut l2] {
        if *l < -EIGEN_FLOOR_TOL {
            return Err(Error::Consistency(format!("negative eigenvalue {l:e}")));
        }
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    Ok(PrincipalFrame {
        lambda1: l1,
        lambda2: l2,
        rotation,
    })
}

/// Coverage factor along one principal axis:
/// `erf((ξ+L)/√(2λ)) − erf((ξ−L)/√(2λ))`, with the exact indicator limit
/// `2·𝟙(|ξ| ≤ L)` for `λ = 0`.
#[inline]
pub fn axis_factor(xi: f64, half_side: f64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return if xi.abs() <= half_side { 2.0 } else { 0.0 };
    }
    let inv = 1.0 / (2.0 * lambda).sqrt();
    let hi = (xi + half_side) * inv;
    let lo = (xi - half_side) * inv;
    // use erfc on the tail side so no cancellation occurs
    if lo >= 0.0 {
        erfc_fast(lo) - erfc_fast(hi)
    } else if hi <= 0.0 {
        erfc_fast(-hi) - erfc_fast(-lo)
    } else {
        erf_fast(hi) - erf_fast(lo)
    }
}

/// `erf` with a shortcut where the result is 1 to within 2e-17.
#[inline]
fn erf_fast(x: f64) -> f64 {
    if x > 6.0 {
        1.0
    } else if x < -6.0 {
        -1.0
    } else {
        libm::erf(x)
    }
}

/// `erfc` for non-negative arguments; zero where it underflows below 1e-300.
#[inline]
fn erfc_fast(x: f64) -> f64 {
    if x > 26.0 {
        0.0
    } else {
        libm::erfc(x)
    }
}

/// Node spacing of tabulated axis factors, in units of the axis deviation.
pub const TABLE_STEP_SIGMAS: f64 = 1.0 / 32.0;
/// Axes that would need more nodes than this are evaluated directly.
pub const TABLE_MAX_NODES: usize = 8192;

/// Even axis factor sampled on `[0, reach]` and interpolated with cubic
/// Hermite splines using the analytic derivative, stored as per-interval
/// polynomial coefficients.
#[derive(Debug, Clone)]
struct AxisTable {
    inv_h: f64,
    coeffs: Vec<[f64; 4]>,
}

impl AxisTable {
    fn build(half_side: f64, lambda: f64, reach: f64) -> Option<Self> {
        let sigma = lambda.sqrt();
        let h_target = sigma * TABLE_STEP_SIGMAS;
        if !(h_target > 0.0) {
            return None;
        }
        let intervals = (reach / h_target).ceil() as usize + 1;
        if intervals + 1 > TABLE_MAX_NODES {
            return None;
        }
        let h = reach / (intervals - 1) as f64;
        let c = 1.0 / (2.0 * lambda).sqrt();
        let k = 2.0 * c / std::f64::consts::PI.sqrt();
        let node = |i: usize| {
            let x = i as f64 * h;
            let a = (x + half_side) * c;
            let b = (x - half_side) * c;
            (axis_factor(x, half_side, lambda), k * ((-a * a).exp() - (-b * b).exp()) * h)
        };
        let mut coeffs = Vec::with_capacity(intervals);
        let (mut p0, mut m0) = node(0);
        for i in 0..intervals {
            let (p1, m1) = node(i + 1);
            coeffs.push([p0, m0, 3.0 * (p1 - p0) - 2.0 * m0 - m1, 2.0 * (p0 - p1) + m0 + m1]);
            (p0, m0) = (p1, m1);
        }
        Some(Self { inv_h: 1.0 / h, coeffs })
    }

    #[inline(always)]
    fn eval(&self, x: f64) -> f64 {
        let u = x.abs() * self.inv_h;
        let i = (u as usize).min(self.coeffs.len() - 1);
        let t = u - i as f64;
        let c = &self.coeffs[i];
        c[0] + t * (c[1] + t * (c[2] + t * c[3]))
    }
}

/// Precomputed principal frame of one positional covariance, reusable for
/// many queries and many means sharing that covariance.
#[derive(Debug, Clone)]
pub struct OccupancyKernel {
    frame: PrincipalFrame,
    half_side: f64,
    reach: [f64; 2],
    tables: [Option<AxisTable>; 2],
}

impl OccupancyKernel {
    /// Kernel evaluated with the closed form on every query.
    pub fn new(cov: &Mat2, half_side: f64) -> Result<Self> {
        if !(half_side > 0.0) {
            return Err(Error::Contract(format!("half side must be positive, got {half_side}")));
        }
        let frame = eig2(cov)?;
        let reach = [
            half_side + TAIL_SIGMAS * frame.lambda1.sqrt(),
            half_side + TAIL_SIGMAS * frame.lambda2.sqrt(),
        ];
        Ok(Self {
            frame,
            half_side,
            reach,
            tables: [None, None],
        })
    }

    /// Kernel whose axis factors are interpolated from tables (relative error
    /// below 1e-6, absolute below 1e-8). Axes too narrow to tabulate use the
    /// closed form.
    pub fn tabulated(cov: &Mat2, half_side: f64) -> Result<Self> {
        let mut k = Self::new(cov, half_side)?;
        k.tables = [
            AxisTable::build(half_side, k.frame.lambda1, k.reach[0]),
            AxisTable::build(half_side, k.frame.lambda2, k.reach[1]),
        ];
        Ok(k)
    }

    pub fn frame(&self) -> &PrincipalFrame {
        &self.frame
    }

    /// Radius beyond which the coverage is negligible in every direction.
    pub fn reach(&self) -> f64 {
        self.reach[0].max(self.reach[1])
    }

    /// Per-axis reach in the principal frame.
    pub fn reach_axes(&self) -> [f64; 2] {
        self.reach
    }

    /// Query expressed in the principal frame, `ξ = Rᵀ(q − mean)`.
    #[inline]
    pub fn to_frame(&self, d: Vec2) -> [f64; 2] {
        let r = &self.frame.rotation;
        [
            r[(0, 0)] * d.x + r[(1, 0)] * d.y,
            r[(0, 1)] * d.x + r[(1, 1)] * d.y,
        ]
    }

    /// Coverage probability of `query` for a robot centred at `mean`.
    #[inline]
    pub fn prob(&self, query: Vec2, mean: Vec2) -> f64 {
        self.prob_frame(self.to_frame(query - mean))
    }

    #[inline(always)]
    fn axis(&self, j: usize, xi: f64) -> f64 {
        match &self.tables[j] {
            Some(t) => t.eval(xi),
            None => {
                let lambda = if j == 0 { self.frame.lambda1 } else { self.frame.lambda2 };
                axis_factor(xi, self.half_side, lambda)
            }
        }
    }

    /// Coverage probability for a query already in the principal frame.
    #[inline]
    pub fn prob_frame(&self, xi: [f64; 2]) -> f64 {
        if xi[0].abs() > self.reach[0] || xi[1].abs() > self.reach[1] {
            return 0.0;
        }
        let f1 = self.axis(0, xi[0]);
        if f1 == 0.0 {
            return 0.0;
        }
        let f2 = self.axis(1, xi[1]);
        (0.25 * f1 * f2).clamp(0.0, 1.0)
    }
}

/// Probability that `query` lies inside the square of half side `half_side`
/// centred on the uncertain robot position.
pub fn occ_prob(query: Vec2, belief: &PositionBelief, half_side: f64) -> Result<f64> {
    if !(query.x.is_finite() && query.y.is_finite() && belief.mean.x.is_finite() && belief.mean.y.is_finite()) {
        return Err(Error::InvalidState("non-finite occupancy query".into()));
    }
    let kernel = OccupancyKernel::new(&belief.cov, half_side)?;
    let xi = kernel.to_frame(query - belief.mean);
    let f1 = axis_factor(xi[0], half_side, kernel.frame.lambda1);
    let f2 = axis_factor(xi[1], half_side, kernel.frame.lambda2);
    Ok((0.25 * f1 * f2).clamp(0.0, 1.0))
}

// 8-point Gauss-Legendre on [-1, 1]
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Integral of [`occ_prob`] over the plane by composite Gauss–Legendre
/// quadrature on the box `mean ± (L + 8σ_max)`, taken in the principal frame
/// where the integrand is separable in its support. Verification only.
pub fn occ_mass(belief: &PositionBelief, half_side: f64) -> Result<f64> {
    let kernel = OccupancyKernel::new(&belief.cov, half_side)?;
    let frame = kernel.frame;
    let sigma_max = frame.lambda1.sqrt();
    let half = half_side + TAIL_SIGMAS * sigma_max;
    // panel edges at ±L so that degenerate (indicator) factors integrate exactly
    let panels = 48usize;
    let mut edges = Vec::with_capacity(panels + 3);
    for i in 0..=panels {
        edges.push(-half + 2.0 * half * i as f64 / panels as f64);
    }
    edges.push(-half_side);
    edges.push(half_side);
    edges.sort_by(|a, b| a.total_cmp(b));
    edges.dedup();
    let rot = frame.rotation;
    let mut total = 0.0;
    for wu in edges.windows(2) {
        let (u0, u1) = (wu[0], wu[1]);
        let (cu, hu) = (0.5 * (u0 + u1), 0.5 * (u1 - u0));
        for (nu, wgu) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let u = cu + hu * nu;
            for wv in edges.windows(2) {
                let (v0, v1) = (wv[0], wv[1]);
                let (cv, hv) = (0.5 * (v0 + v1), 0.5 * (v1 - v0));
                for (nv, wgv) in GL_NODES.iter().zip(GL_WEIGHTS) {
                    let v = cv + hv * nv;
                    let q = belief.mean + rot * Vec2::new(u, v);
                    total += wgu * wgv * hu * hv * occ_prob(q, belief, half_side)?;
                }
            }
        }
    }
    Ok(total)
}
