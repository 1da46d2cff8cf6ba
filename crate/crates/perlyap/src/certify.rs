//! Numerical verification of Lyapunov certificates on a sampled ball, and
//! class-membership constants for noise models.
//!
//! The checks here are sound for the sampled points only: a passing report
//! says the inequalities held on every sample, not that they hold everywhere.
//! The report states this explicitly.

use rayon::prelude::*;

use crate::mat;
use crate::model::{DynamicalSystem, LyapunovCertificate, NoiseClass, NoiseModel};
use crate::special::probit;
use crate::{Error, Result};

/// Default absolute tolerance on inequality margins.
pub const DEFAULT_MARGIN_TOL: f64 = 1e-9;
/// Cap on stored violation records (total count is always reported).
const MAX_STORED_VIOLATIONS: usize = 10_000;

/// Radial-shell x quasi-uniform-direction x time-grid sampling of a ball.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    /// Number of radial shells; radii are `r0 * k / shells`, `k = 1..=shells`.
    pub shells: usize,
    /// Directions per shell, drawn from a low-discrepancy sequence.
    pub directions_per_shell: usize,
    /// Times at which the inequalities are checked.
    pub time_grid: Vec<f64>,
    /// Include the origin as an extra sample point.
    pub include_origin: bool,
    /// Offsets the low-discrepancy direction sequence; fixed seed, fixed grid.
    pub seed: u64,
    /// Absolute margin tolerance.
    pub tolerance: f64,
}

impl SamplingPlan {
    /// Default plan: 32 shells, `64 n` directions, tolerance 1e-9, and a time
    /// grid `{0, 0.5, ..., 50}` (one slice at `t = 0` when `autonomous`).
    pub fn new(dim: usize, autonomous: bool) -> Self {
        let time_grid = if autonomous {
            vec![0.0]
        } else {
            (0..=100).map(|k| k as f64 * 0.5).collect()
        };
        Self {
            shells: 32,
            directions_per_shell: 64 * dim,
            time_grid,
            include_origin: true,
            seed: 0,
            tolerance: DEFAULT_MARGIN_TOL,
        }
    }

    /// Plan suited to a certificate (single time slice when autonomous).
    pub fn for_certificate(cert: &LyapunovCertificate) -> Self {
        Self::new(cert.dim(), cert.is_autonomous())
    }

    /// Plan for noise-class estimation: always covers the time axis.
    pub fn for_noise(dim: usize) -> Self {
        Self::new(dim, false)
    }

    fn is_empty(&self) -> bool {
        self.shells == 0 || self.directions_per_shell == 0 || self.time_grid.is_empty()
    }

    /// Spatial sample points of the ball `|x| <= radius`.
    pub fn spatial_points(&self, dim: usize, radius: f64) -> Vec<Vec<f64>> {
        let mut pts = Vec::with_capacity(self.shells * self.directions_per_shell + 1);
        if self.include_origin {
            pts.push(vec![0.0; dim]);
        }
        let dirs = quasi_uniform_directions(dim, self.directions_per_shell, self.seed);
        for k in 1..=self.shells {
            let r = radius * k as f64 / self.shells as f64;
            for d in &dirs {
                pts.push(d.iter().map(|c| c * r).collect());
            }
        }
        pts
    }
}

/// Quasi-uniform directions on the unit sphere: an additive Kronecker
/// sequence in the unit cube, pushed through the normal quantile and
/// normalized.
pub fn quasi_uniform_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    // Generalized golden ratio: unique positive root of x^(d+1) = x + 1.
    let mut phi = 1.5f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=dim).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
    let offset = (seed as f64 * 0.618_033_988_749_894_9).fract();
    let mut dirs = Vec::with_capacity(count);
    for k in 0..count {
        let mut z: Vec<f64> = (0..dim)
            .map(|j| {
                let u = (0.5 + offset + (k as f64 + 1.0) * alphas[j]).fract();
                probit(u.clamp(1e-12, 1.0 - 1e-12))
            })
            .collect();
        let r = mat::norm(&z);
        if r < 1e-9 {
            z = vec![0.0; dim];
            z[0] = 1.0;
        } else {
            z.iter_mut().for_each(|c| *c /= r);
        }
        dirs.push(z);
    }
    dirs
}

/// The individual certificate inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inequality {
    SandwichLower,
    SandwichUpper,
    Gradient,
    Hessian,
    Decay,
}

impl std::fmt::Display for Inequality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Inequality::SandwichLower => "sandwich-lower",
            Inequality::SandwichUpper => "sandwich-upper",
            Inequality::Gradient => "gradient",
            Inequality::Hessian => "hessian",
            Inequality::Decay => "decay",
        };
        f.write_str(s)
    }
}

/// Minimal slack observed for each certificate inequality (the two sandwich
/// sides are folded into one entry).
#[derive(Debug, Clone, Copy)]
pub struct MarginSummary {
    pub sandwich: f64,
    pub gradient: f64,
    pub hessian: f64,
    pub decay: f64,
}

impl MarginSummary {
    fn min(&self) -> f64 {
        self.sandwich.min(self.gradient).min(self.hessian).min(self.decay)
    }
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub x: Vec<f64>,
    pub t: f64,
    pub inequality: Inequality,
    pub margin: f64,
}

/// Outcome of a certificate verification run.
#[derive(Debug, Clone)]
pub struct CertReport {
    pub passed: bool,
    pub worst_margins: MarginSummary,
    pub violations: Vec<Violation>,
    pub total_violations: usize,
    pub sampled_points: usize,
    pub tolerance: f64,
}

impl CertReport {
    /// Key: value text rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("passed: {}\n", self.passed));
        s.push_str(&format!("sampled_points: {}\n", self.sampled_points));
        s.push_str(&format!("tolerance: {}\n", self.tolerance));
        s.push_str(&format!("margin.sandwich: {}\n", self.worst_margins.sandwich));
        s.push_str(&format!("margin.gradient: {}\n", self.worst_margins.gradient));
        s.push_str(&format!("margin.hessian: {}\n", self.worst_margins.hessian));
        s.push_str(&format!("margin.decay: {}\n", self.worst_margins.decay));
        s.push_str(&format!("violations: {}\n", self.total_violations));
        s.push_str(
            "note: margins are minima over the sampled grid; this is a sampled check, not a proof\n",
        );
        s
    }

    /// CSV of violation points: `t,x_1..x_n,inequality,margin`.
    pub fn violations_csv(&self, dim: usize) -> String {
        let mut s = String::from("t");
        for i in 1..=dim {
            s.push_str(&format!(",x_{i}"));
        }
        s.push_str(",inequality,margin\n");
        for v in &self.violations {
            s.push_str(&format!("{}", v.t));
            for c in &v.x {
                s.push_str(&format!(",{c}"));
            }
            s.push_str(&format!(",{},{}\n", v.inequality, v.margin));
        }
        s
    }
}

struct PointMargins {
    index: usize,
    margins: [f64; 5],
}

const INEQUALITIES: [Inequality; 5] = [
    Inequality::SandwichLower,
    Inequality::SandwichUpper,
    Inequality::Gradient,
    Inequality::Hessian,
    Inequality::Decay,
];

/// Checks the certificate inequalities at every sample point of the plan.
///
/// Deterministic for a fixed plan (the reduction is order independent).
pub fn verify_certificate(
    cert: &LyapunovCertificate,
    system: &DynamicalSystem,
    plan: &SamplingPlan,
) -> Result<CertReport> {
    if plan.is_empty() {
        return Err(Error::Config("sampling plan is empty".into()));
    }
    if system.dim() != cert.dim() {
        return Err(Error::Dimension { expected: cert.dim(), got: system.dim() });
    }
    let c = *cert.constants();
    if c.decay_rate < 0.0 {
        return Err(Error::Config("decay rate must be nonnegative".into()));
    }
    let n = cert.dim();
    let spatial = plan.spatial_points(n, c.radius);
    let mut points: Vec<(usize, &Vec<f64>, f64)> = Vec::new();
    let mut idx = 0;
    for &t in &plan.time_grid {
        for x in &spatial {
            points.push((idx, x, t));
            idx += 1;
        }
    }

    let per_point: Vec<PointMargins> = points
        .par_iter()
        .map(|&(index, x, t)| {
            let v = cert.value(x, t);
            let r2 = mat::dot(x, x);
            let grad = cert.gradient(x, t);
            let grad2 = mat::dot(&grad, &grad);
            let hess = cert.hessian(x, t);
            let flow = cert.flow_derivative(system, x, t);
            PointMargins {
                index,
                margins: [
                    v - r2,
                    c.quad_upper * r2 - v,
                    c.grad_bound * r2 - grad2,
                    c.hess_bound - hess.max_abs_entry(),
                    -c.decay_rate * v - flow,
                ],
            }
        })
        .collect();

    let mut worst = [f64::INFINITY; 5];
    let mut violations = Vec::new();
    let mut total_violations = 0usize;
    for pm in &per_point {
        for (i, &m) in pm.margins.iter().enumerate() {
            if m < worst[i] {
                worst[i] = m;
            }
            if m < -plan.tolerance {
                total_violations += 1;
                if violations.len() < MAX_STORED_VIOLATIONS {
                    let (_, x, t) = points[pm.index];
                    violations.push(Violation {
                        x: x.clone(),
                        t,
                        inequality: INEQUALITIES[i],
                        margin: m,
                    });
                }
            }
        }
    }

    let worst_margins = MarginSummary {
        sandwich: worst[0].min(worst[1]),
        gradient: worst[2],
        hessian: worst[3],
        decay: worst[4],
    };
    Ok(CertReport {
        passed: worst_margins.min() >= -plan.tolerance,
        worst_margins,
        violations,
        total_violations,
        sampled_points: points.len(),
        tolerance: plan.tolerance,
    })
}

/// Largest max-entry norm of `sigma(y, t)` over the sampled ball and time
/// grid. A lower estimate of the true supremum (samples only).
pub fn estimate_h(noise: &NoiseModel, r0: f64, plan: &SamplingPlan) -> f64 {
    let spatial = plan.spatial_points(noise.rows(), r0);
    plan.time_grid
        .par_iter()
        .map(|&t| {
            spatial
                .iter()
                .map(|y| noise.sigma_norm(y, t).unwrap_or(f64::NAN))
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Outcome of a damped-class membership check.
#[derive(Debug, Clone)]
pub struct DampedClassReport {
    pub passed: bool,
    /// `int_0^inf zeta`, as evaluated (quadrature to the horizon plus
    /// declared analytic tail).
    pub integral: f64,
    /// Min over samples of `zeta(t) - ||sigma(y,t)||`.
    pub worst_envelope_margin: f64,
    pub envelope_ok: bool,
    pub integral_ok: bool,
    pub diagnostic: Option<String>,
}

/// Checks damped-class membership: `||sigma(y,t)|| <= zeta(t)` on the
/// sampled ball, and `int_0^inf zeta <= h` via adaptive quadrature to
/// `quad_horizon` plus the declared analytic tail (if any).
pub fn verify_damped_class(
    noise: &NoiseModel,
    r0: f64,
    plan: &SamplingPlan,
    quad_horizon: f64,
) -> Result<DampedClassReport> {
    let NoiseClass::Damped { envelope, h } = noise.class() else {
        return Err(Error::Config(
            "noise model is not tagged as damped; only damped noise carries an envelope".into(),
        ));
    };
    if quad_horizon <= 0.0 {
        return Err(Error::Config("quadrature horizon must be positive".into()));
    }
    let tol = plan.tolerance;

    let spatial = plan.spatial_points(noise.rows(), r0);
    let mut worst_envelope_margin = f64::INFINITY;
    for &t in &plan.time_grid {
        let z = (envelope.zeta)(t);
        for y in &spatial {
            let margin = z - noise.sigma_norm(y, t)?;
            if margin < worst_envelope_margin {
                worst_envelope_margin = margin;
            }
        }
    }
    let envelope_ok = worst_envelope_margin >= -tol;

    let mut diagnostic = None;
    let quad = adaptive_simpson(|t| (envelope.zeta)(t), 0.0, quad_horizon, 1e-10, 50);
    let (mut integral, mut integral_ok) = match quad {
        Ok(v) => (v, true),
        Err(e) => {
            diagnostic = Some(format!("quadrature of the envelope failed: {e}"));
            (f64::NAN, false)
        }
    };
    if integral_ok {
        match &envelope.tail {
            Some(tail) => {
                let tv = tail(quad_horizon);
                if tv.is_finite() && tv >= 0.0 {
                    integral += tv;
                } else {
                    integral_ok = false;
                    diagnostic =
                        Some(format!("declared tail integral is not finite/nonnegative: {tv}"));
                }
            }
            None => {
                let z_end = (envelope.zeta)(quad_horizon);
                if !z_end.is_finite() || z_end > 1e-10 {
                    integral_ok = false;
                    diagnostic = Some(format!(
                        "envelope is {z_end:e} at the quadrature horizon {quad_horizon} and \
                         declares no analytic tail; cannot conclude integrability"
                    ));
                }
            }
        }
    }
    if integral_ok && integral > h + tol {
        integral_ok = false;
        diagnostic = Some(format!("integral of the envelope {integral} exceeds the bound h = {h}"));
    }
    if !envelope_ok && diagnostic.is_none() {
        diagnostic = Some(format!(
            "sigma exceeds the envelope somewhere on the sampled ball \
             (worst margin {worst_envelope_margin:e})"
        ));
    }

    Ok(DampedClassReport {
        passed: envelope_ok && integral_ok,
        integral,
        worst_envelope_margin,
        envelope_ok,
        integral_ok,
        diagnostic,
    })
}

/// Adaptive Simpson quadrature with an absolute tolerance.
pub fn adaptive_simpson(
    f: impl Fn(f64) -> f64 + Copy,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: impl Fn(f64) -> f64 + Copy,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        if !(flm.is_finite() && frm.is_finite()) {
            return Err(Error::NonConvergence(format!(
                "envelope is not finite inside [{a}, {b}]"
            )));
        }
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let err = left + right - whole;
        if err.abs() <= 15.0 * tol {
            return Ok(left + right + err / 15.0);
        }
        if depth == 0 {
            return Err(Error::NonConvergence(format!(
                "quadrature did not converge on [{a}, {b}] (residual {err:e})"
            )));
        }
        Ok(recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
    }
    let fa = f(a);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let fb = f(b);
    if !(fa.is_finite() && fm.is_finite() && fb.is_finite()) {
        return Err(Error::NonConvergence("integrand is not finite".into()));
    }
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Matrix;
    use crate::model::{CertConstants, NoiseEnvelope, NoiseShape};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn cubic_system() -> DynamicalSystem {
        DynamicalSystem::new(
            1,
            2.0,
            1.0,
            Arc::new(|x: &[f64], _t, out: &mut [f64]| {
                let y = x[0];
                out[0] = -y * (1.0 - y * y) / (1.0 + y * y);
            }),
        )
        .unwrap()
    }

    fn quadratic_cert(c: CertConstants) -> LyapunovCertificate {
        LyapunovCertificate::new(1, Arc::new(|x: &[f64], _t| x[0] * x[0]), c)
            .unwrap()
            .with_gradient(Arc::new(|x: &[f64], _t, out: &mut [f64]| out[0] = 2.0 * x[0]))
            .with_hessian(Arc::new(|_x: &[f64], _t, out: &mut Matrix| out.set(0, 0, 2.0)))
    }

    const CUBIC_CONSTANTS: CertConstants = CertConstants {
        quad_upper: 1.0,
        grad_bound: 4.0,
        hess_bound: 2.0,
        decay_rate: 1.0,
        radius: 0.577_350_269_189_625_8, // 1/sqrt(3)
    };

    #[test]
    fn cubic_certificate_passes_on_certified_ball() {
        let cert = quadratic_cert(CUBIC_CONSTANTS);
        let report =
            verify_certificate(&cert, &cubic_system(), &SamplingPlan::for_certificate(&cert))
                .unwrap();
        assert!(report.passed, "margins: {:?}", report.worst_margins);
        assert_eq!(report.total_violations, 0);
    }

    #[test]
    fn cubic_certificate_fails_on_unit_ball() {
        // The decay inequality fails near |x| = 1 where the drift vanishes:
        // dV/dt = -2x^2(1-x^2)/(1+x^2) > -x^2 for x close to 1.
        let mut c = CUBIC_CONSTANTS;
        c.radius = 1.0;
        let cert = quadratic_cert(c);
        let report =
            verify_certificate(&cert, &cubic_system(), &SamplingPlan::for_certificate(&cert))
                .unwrap();
        assert!(!report.passed);
        assert!(report.worst_margins.decay < -1e-3);
        assert!(report
            .violations
            .iter()
            .all(|v| v.inequality == Inequality::Decay));
    }

    #[test]
    fn zero_drift_zero_decay_passes() {
        let zero =
            DynamicalSystem::new(1, 0.0, 0.0, Arc::new(|_x, _t, _o: &mut [f64]| {})).unwrap();
        let mut c = CUBIC_CONSTANTS;
        c.decay_rate = 0.0;
        c.radius = 1.0;
        let cert = quadratic_cert(c);
        let report =
            verify_certificate(&cert, &zero, &SamplingPlan::for_certificate(&cert)).unwrap();
        assert!(report.passed);
    }

    #[test]
    fn empty_plan_is_rejected() {
        let cert = quadratic_cert(CUBIC_CONSTANTS);
        let mut plan = SamplingPlan::for_certificate(&cert);
        plan.shells = 0;
        assert!(matches!(
            verify_certificate(&cert, &cubic_system(), &plan),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sharpness_of_each_constant() {
        // Tightening any constant past its analytic value flips the verdict.
        let system = cubic_system();
        let tighten: [(&str, CertConstants); 4] = [
            ("quad_upper", CertConstants { quad_upper: 0.95, ..CUBIC_CONSTANTS }),
            ("grad_bound", CertConstants { grad_bound: 3.8, ..CUBIC_CONSTANTS }),
            ("hess_bound", CertConstants { hess_bound: 1.9, ..CUBIC_CONSTANTS }),
            ("decay_rate", CertConstants { decay_rate: 1.05, ..CUBIC_CONSTANTS }),
        ];
        for (name, c) in tighten {
            let cert = quadratic_cert(c);
            let report =
                verify_certificate(&cert, &system, &SamplingPlan::for_certificate(&cert)).unwrap();
            assert!(!report.passed, "tightened {name} should fail");
        }
    }

    #[test]
    fn refining_the_grid_never_raises_margins() {
        let mut c = CUBIC_CONSTANTS;
        c.radius = 1.0; // failing configuration has informative margins
        let cert = quadratic_cert(c);
        let system = cubic_system();
        let coarse = SamplingPlan { shells: 8, ..SamplingPlan::for_certificate(&cert) };
        let fine = SamplingPlan {
            shells: 16,
            directions_per_shell: 128,
            ..SamplingPlan::for_certificate(&cert)
        };
        let rc = verify_certificate(&cert, &system, &coarse).unwrap();
        let rf = verify_certificate(&cert, &system, &fine).unwrap();
        assert!(rf.worst_margins.sandwich <= rc.worst_margins.sandwich + 1e-12);
        assert!(rf.worst_margins.gradient <= rc.worst_margins.gradient + 1e-12);
        assert!(rf.worst_margins.hessian <= rc.worst_margins.hessian + 1e-12);
        assert!(rf.worst_margins.decay <= rc.worst_margins.decay + 1e-12);
    }

    fn scaled_noise(scale: f64) -> NoiseModel {
        NoiseModel::new(
            1,
            1,
            NoiseShape::Scalar,
            NoiseClass::UniformlyBounded { h: scale * scale / 2.0 },
            Arc::new(move |_y, _t, out: &mut Matrix| out.set(0, 0, scale)),
        )
        .unwrap()
    }

    #[test]
    fn estimate_h_constant_and_state_dependent() {
        let plan = SamplingPlan::for_noise(1);
        assert_relative_eq!(estimate_h(&scaled_noise(1.0), 0.5, &plan), 0.5);
        assert_eq!(estimate_h(&scaled_noise(0.0), 0.5, &plan), 0.0);

        // G(y) = 1 + y on |y| <= 1/sqrt(3): sup (1+y)^2/2 = (1 + 1/sqrt(3))^2/2.
        let affine = NoiseModel::new(
            1,
            1,
            NoiseShape::Scalar,
            NoiseClass::UniformlyBounded { h: 1.3 },
            Arc::new(|y: &[f64], _t, out: &mut Matrix| out.set(0, 0, 1.0 + y[0])),
        )
        .unwrap();
        let r0 = 1.0 / 3f64.sqrt();
        let h = estimate_h(&affine, r0, &plan);
        assert_relative_eq!(h, 1.244_016_935_856_292_4, max_relative = 1e-12);
    }

    #[test]
    fn estimate_h_monotone_in_radius() {
        let affine = NoiseModel::new(
            1,
            1,
            NoiseShape::Scalar,
            NoiseClass::UniformlyBounded { h: 10.0 },
            Arc::new(|y: &[f64], _t, out: &mut Matrix| out.set(0, 0, 1.0 + y[0])),
        )
        .unwrap();
        let plan = SamplingPlan::for_noise(1);
        let mut last = 0.0;
        for r in [0.1, 0.3, 0.7, 1.0, 2.0] {
            let h = estimate_h(&affine, r, &plan);
            assert!(h >= last, "h({r}) = {h} < {last}");
            last = h;
        }
    }

    fn damped_noise(sigma_scale: f64) -> NoiseModel {
        // G = sqrt(2 sigma_scale) e^{-t/2} so sigma = sigma_scale * e^{-t};
        // envelope zeta(t) = e^{-t}, integral 1, analytic tail e^{-T}.
        NoiseModel::new(
            1,
            1,
            NoiseShape::Scalar,
            NoiseClass::Damped {
                envelope: NoiseEnvelope {
                    zeta: Arc::new(|t: f64| (-t).exp()),
                    tail: Some(Arc::new(|t: f64| (-t).exp())),
                },
                h: 1.0,
            },
            Arc::new(move |_y, t: f64, out: &mut Matrix| {
                out.set(0, 0, (2.0 * sigma_scale).sqrt() * (-t / 2.0).exp())
            }),
        )
        .unwrap()
    }

    #[test]
    fn damped_class_accepts_matching_envelope() {
        let report =
            verify_damped_class(&damped_noise(0.5), 1.0, &SamplingPlan::for_noise(1), 50.0)
                .unwrap();
        assert!(report.passed, "{report:?}");
        assert_relative_eq!(report.integral, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn damped_class_rejects_sigma_above_envelope() {
        // sigma = 0.6 constant exceeds e^{-t} for t > ln(1/0.6).
        let noise = NoiseModel::new(
            1,
            1,
            NoiseShape::Scalar,
            NoiseClass::Damped {
                envelope: NoiseEnvelope {
                    zeta: Arc::new(|t: f64| (-t).exp()),
                    tail: Some(Arc::new(|t: f64| (-t).exp())),
                },
                h: 1.0,
            },
            Arc::new(|_y, _t, out: &mut Matrix| out.set(0, 0, 1.2f64.sqrt())),
        )
        .unwrap();
        let report =
            verify_damped_class(&noise, 1.0, &SamplingPlan::for_noise(1), 50.0).unwrap();
        assert!(!report.passed);
        assert!(!report.envelope_ok);
    }

    #[test]
    fn damped_class_rejects_non_integrable_envelope() {
        // zeta = 1/(1+t) has no declared tail and does not vanish at the
        // horizon: the check must refuse to conclude integrability.
        let noise = NoiseModel::new(
            1,
            1,
            NoiseShape::Scalar,
            NoiseClass::Damped {
                envelope: NoiseEnvelope { zeta: Arc::new(|t: f64| 1.0 / (1.0 + t)), tail: None },
                h: 100.0,
            },
            Arc::new(|_y, _t, out: &mut Matrix| out.set(0, 0, 0.0)),
        )
        .unwrap();
        let report =
            verify_damped_class(&noise, 1.0, &SamplingPlan::for_noise(1), 1000.0).unwrap();
        assert!(!report.passed);
        assert!(report.diagnostic.is_some());
    }

    #[test]
    fn damped_class_requires_damped_tag() {
        let report = verify_damped_class(&scaled_noise(1.0), 1.0, &SamplingPlan::for_noise(1), 50.0);
        assert!(matches!(report, Err(Error::Config(_))));
    }

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(|t| t * t, 0.0, 3.0, 1e-12, 40).unwrap();
        assert_relative_eq!(v, 9.0, max_relative = 1e-10);
        let v = adaptive_simpson(|t| (-t).exp(), 0.0, 40.0, 1e-12, 50).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn directions_are_unit_and_cover_signs() {
        let dirs = quasi_uniform_directions(1, 64, 0);
        assert!(dirs.iter().all(|d| (mat::norm(d) - 1.0).abs() < 1e-12));
        assert!(dirs.iter().any(|d| d[0] > 0.0) && dirs.iter().any(|d| d[0] < 0.0));
        let dirs3 = quasi_uniform_directions(3, 128, 1);
        for d in &dirs3 {
            assert!((mat::norm(d) - 1.0).abs() < 1e-12);
        }
    }
}
