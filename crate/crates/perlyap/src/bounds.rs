//! Perturbed-Lyapunov constructions and the exit-probability bounds they
//! imply.
//!
//! Given a certificate `V` with constants `(A, B, C, gamma, r0)` and a noise
//! model with diffusion bound `h`, the order-`N` construction is the
//! recursion
//!
//! ```text
//! V_1(y, t; T) = V(y, t) + mu^2 n^2 h C (T - t)
//! V_k(y, t; T) = V(y, t)^k + mu^2 a_{k-1} V_{k-1}(y, t; T),   k = 2..N
//! a_k          = (k + 1) n^2 h (B + C) / gamma
//! ```
//!
//! `V_N(y(s_t), s_t; T)` is a nonnegative supermartingale along the stopped
//! perturbed process, so the supremum of `|y|` over `[0, T]` obeys
//!
//! ```text
//! P(sup |y(t)| >= eps) <= V_N(y0, 0; T) / eps^(2N)
//! ```
//!
//! on the horizon `T = mu^(-2N+kappa)` (or a scaled / explicit variant). For
//! damped noise there is a companion construction valid uniformly in time.

use crate::model::{ExperimentParams, HorizonMode, LyapunovCertificate, NoiseClass, NoiseModel,
                   TimeFn};
use crate::{Error, Result};

/// Relative slack applied when returning admissible parameters so the
/// defining inequalities survive floating-point round-trips (the guarantees
/// are strict inequalities in `|y0| < delta`, `mu < Delta` anyway).
const ADMISSIBLE_SHRINK: f64 = 1.0 - 1e-9;

/// Coefficient `a_k = (k+1) n^2 h (B+C) / gamma` of the construction.
pub fn coefficient_a(
    k: u32,
    dim: usize,
    h: f64,
    grad_bound: f64,
    hess_bound: f64,
    decay_rate: f64,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("coefficient index k starts at 1".into()));
    }
    if h < 0.0 {
        return Err(Error::Config("noise bound h must be nonnegative".into()));
    }
    if decay_rate <= 0.0 {
        return Err(Error::ZeroDecayRate(
            "the construction coefficients are undefined for gamma = 0; use the damped-noise \
             bound (theorem2) or the explicit-horizon advisory with N = 1"
                .into(),
        ));
    }
    let n2 = (dim * dim) as f64;
    Ok((k as f64 + 1.0) * n2 * h * (grad_bound + hess_bound) / decay_rate)
}

/// The order-`N` perturbed Lyapunov function attached to a certificate,
/// noise bound, intensity and horizon.
#[derive(Debug, Clone)]
pub struct PerturbedLyapunov {
    cert: LyapunovCertificate,
    order: u32,
    noise_bound: f64,
    mu: f64,
    horizon: f64,
    /// `a_1 .. a_{N-1}`.
    coeffs: Vec<f64>,
}

impl PerturbedLyapunov {
    pub fn new(
        cert: LyapunovCertificate,
        order: u32,
        noise_bound: f64,
        mu: f64,
        horizon: f64,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("order N must be at least 1".into()));
        }
        if noise_bound < 0.0 {
            return Err(Error::Config("noise bound h must be nonnegative".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!(
                "horizon must be positive and finite, got {horizon} \
                 (mu may be too small for the requested order)"
            )));
        }
        if mu < 0.0 {
            return Err(Error::Config("mu must be nonnegative".into()));
        }
        let c = cert.constants();
        let mut coeffs = Vec::new();
        for k in 1..order {
            coeffs.push(coefficient_a(
                k,
                cert.dim(),
                noise_bound,
                c.grad_bound,
                c.hess_bound,
                c.decay_rate,
            )?);
        }
        Ok(Self { cert, order, noise_bound, mu, horizon, coeffs })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn noise_bound(&self) -> f64 {
        self.noise_bound
    }

    pub fn certificate(&self) -> &LyapunovCertificate {
        &self.cert
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Evaluates `V_N(y, t; T)`.
    pub fn value(&self, y: &[f64], t: f64) -> Result<f64> {
        if y.len() != self.cert.dim() {
            return Err(Error::Dimension { expected: self.cert.dim(), got: y.len() });
        }
        self.value_from_base(self.cert.value(y, t), t)
    }

    /// Evaluates the recursion with the base value `v = V(y, t)` supplied
    /// directly (used for worst-case admissibility checks where only the
    /// sandwich bound on `V(y0, 0)` is known).
    pub fn value_from_base(&self, v: f64, t: f64) -> Result<f64> {
        if t < 0.0 || t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "t = {t} outside [0, T] with T = {}",
                self.horizon
            )));
        }
        if v < 0.0 {
            return Err(Error::Domain(format!("certificate value must be nonnegative, got {v}")));
        }
        let n2 = (self.cert.dim() * self.cert.dim()) as f64;
        let mu2 = self.mu * self.mu;
        let hess_bound = self.cert.constants().hess_bound;
        let mut vk = v + mu2 * n2 * self.noise_bound * hess_bound * (self.horizon - t);
        for k in 2..=self.order {
            vk = v.powi(k as i32) + mu2 * self.coeffs[(k - 2) as usize] * vk;
        }
        Ok(vk)
    }
}

/// Which stability statement produced a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Finite horizon `mu^(-2N+kappa)` (or an explicit cap), `gamma > 0`.
    Theorem1,
    /// Horizon `mu^(-2N) lambda(|y0|)`.
    Remark1,
    /// Damped noise, valid uniformly for `t >= 0`.
    Theorem2,
    /// `gamma = 0` with bounded noise: explicit-horizon advisory, `N = 1`.
    Remark2,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::Theorem1 => "theorem1",
            Regime::Remark1 => "remark1",
            Regime::Theorem2 => "theorem2",
            Regime::Remark2 => "remark2",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem1" => Ok(Regime::Theorem1),
            "remark1" => Ok(Regime::Remark1),
            "theorem2" => Ok(Regime::Theorem2),
            "remark2" => Ok(Regime::Remark2),
            other => Err(Error::Config(format!("unknown regime '{other}'"))),
        }
    }
}

/// A theoretical exit-probability bound together with the parameters that
/// produced it and the admissible `(delta, Delta)` region (when one exists).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub mu: f64,
    pub order: u32,
    pub kappa: Option<f64>,
    pub epsilon: f64,
    pub nu: Option<f64>,
    pub y0_norm: f64,
    /// Horizon of validity; infinite for the damped-noise regime.
    pub horizon: f64,
    /// `V_N(y0, 0; T)` (or the damped-noise initial value).
    pub v_initial: f64,
    /// `min(1, v_initial / eps^(2N))`.
    pub bound: f64,
    pub delta: Option<f64>,
    pub delta_cap: Option<f64>,
    pub regime: Regime,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str =
        "mu,N,kappa,epsilon,nu,y0_norm,T,v_n_initial,bound,delta,Delta,regime";

    pub fn to_csv_row(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x}")).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.mu,
            self.order,
            opt(self.kappa),
            self.epsilon,
            opt(self.nu),
            self.y0_norm,
            self.horizon,
            self.v_initial,
            self.bound,
            opt(self.delta),
            opt(self.delta_cap),
            self.regime
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::Config(format!(
                "expected 12 fields in a bound row, got {}",
                fields.len()
            )));
        }
        fn req(s: &str, name: &str) -> Result<f64> {
            s.parse().map_err(|_| Error::Config(format!("bad {name} field '{s}'")))
        }
        fn opt(s: &str, name: &str) -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                req(s, name).map(Some)
            }
        }
        Ok(Self {
            mu: req(fields[0], "mu")?,
            order: fields[1]
                .parse()
                .map_err(|_| Error::Config(format!("bad N field '{}'", fields[1])))?,
            kappa: opt(fields[2], "kappa")?,
            epsilon: req(fields[3], "epsilon")?,
            nu: opt(fields[4], "nu")?,
            y0_norm: req(fields[5], "y0_norm")?,
            horizon: req(fields[6], "T")?,
            v_initial: req(fields[7], "v_n_initial")?,
            bound: req(fields[8], "bound")?,
            delta: opt(fields[9], "delta")?,
            delta_cap: opt(fields[10], "Delta")?,
            regime: fields[11].parse()?,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("regime: {}\n", self.regime));
        s.push_str(&format!("mu: {}\n", self.mu));
        s.push_str(&format!("N: {}\n", self.order));
        if let Some(k) = self.kappa {
            s.push_str(&format!("kappa: {k}\n"));
        }
        s.push_str(&format!("epsilon: {}\n", self.epsilon));
        if let Some(nu) = self.nu {
            s.push_str(&format!("nu: {nu}\n"));
        }
        s.push_str(&format!("y0_norm: {}\n", self.y0_norm));
        s.push_str(&format!("T: {}\n", self.horizon));
        s.push_str(&format!("v_n_initial: {}\n", self.v_initial));
        s.push_str(&format!("bound: {}\n", self.bound));
        if let Some(d) = self.delta {
            s.push_str(&format!("delta: {d}\n"));
        }
        if let Some(d) = self.delta_cap {
            s.push_str(&format!("Delta: {d}\n"));
        }
        s
    }
}

/// Horizon of the scaled-horizon variant: `T = mu^(-2N) * lambda(|y0|)`.
///
/// `lambda` must be positive with `lambda(z) -> 0` as `z -> 0`; this is
/// spot-checked at `z = 1e-3` and `z = 1e-6`.
pub fn remark1_horizon(mu: f64, order: u32, lambda: &TimeFn, y0_norm: f64) -> Result<f64> {
    if !(0.0 < mu && mu < 1.0) {
        return Err(Error::Config(format!("mu must lie in (0,1), got {mu}")));
    }
    if order == 0 {
        return Err(Error::Config("order N must be at least 1".into()));
    }
    let (l3, l6) = (lambda(1e-3), lambda(1e-6));
    if !(l3 > 0.0 && l6 > 0.0 && l6 < l3) {
        return Err(Error::Config(format!(
            "lambda must be positive and decay toward 0: lambda(1e-3) = {l3}, lambda(1e-6) = {l6}"
        )));
    }
    let l = lambda(y0_norm);
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::Config(format!(
            "lambda(|y0|) = {l} yields a non-positive horizon"
        )));
    }
    Ok(mu.powi(-2 * order as i32) * l)
}

fn horizon_for(params: &ExperimentParams) -> Result<f64> {
    match &params.horizon_mode {
        HorizonMode::Theorem1 => {
            Ok(params.mu.powf(-2.0 * params.order as f64 + params.kappa))
        }
        HorizonMode::Remark1(lambda) => {
            remark1_horizon(params.mu, params.order, lambda, params.y0_norm())
        }
        HorizonMode::Explicit(t) => Ok(*t),
    }
}

/// Finite-horizon exit-probability bound for uniformly bounded noise:
/// `P(sup_{[0,T]} |y| >= eps) <= min(1, V_N(y0, 0; T) / eps^(2N))`.
///
/// Requires `gamma > 0`; with `gamma = 0` callers are redirected to
/// [`theorem2_bound`] (damped noise) or [`remark2_bound`] (explicit horizon).
pub fn theorem1_bound(
    cert: &LyapunovCertificate,
    noise_h: f64,
    params: &ExperimentParams,
) -> Result<BoundReport> {
    let c = cert.constants();
    if c.decay_rate <= 0.0 {
        return Err(Error::ZeroDecayRate(
            "the finite-horizon bound needs gamma > 0; with gamma = 0 use the damped-noise bound \
             or the explicit-horizon advisory (stability only on horizons short of mu^-2)"
                .into(),
        ));
    }
    if params.y0.len() != cert.dim() {
        return Err(Error::Dimension { expected: cert.dim(), got: params.y0.len() });
    }
    if params.epsilon > c.radius {
        return Err(Error::Config("epsilon exceeds the certified radius".into()));
    }
    let horizon = horizon_for(params)?;
    let pl = PerturbedLyapunov::new(cert.clone(), params.order, noise_h, params.mu, horizon)?;
    let v_initial = pl.value(&params.y0, 0.0)?;
    let bound = (v_initial / params.epsilon.powi(2 * params.order as i32)).min(1.0);
    let (delta, delta_cap) = match admissible_region(
        cert,
        noise_h,
        params.order,
        params.epsilon,
        params.nu,
        params.kappa,
    ) {
        Ok((d, dc)) => (Some(d), Some(dc)),
        Err(Error::Infeasible(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(BoundReport {
        mu: params.mu,
        order: params.order,
        kappa: Some(params.kappa),
        epsilon: params.epsilon,
        nu: Some(params.nu),
        y0_norm: params.y0_norm(),
        horizon,
        v_initial,
        bound,
        delta,
        delta_cap,
        regime: match params.horizon_mode {
            HorizonMode::Remark1(_) => Regime::Remark1,
            _ => Regime::Theorem1,
        },
    })
}

/// Exit-probability bound for damped noise, valid uniformly for `t >= 0`:
/// `P(sup_{t>=0} |y| >= eps) <= min(1, (V(y0,0) + mu^2 n^2 C h) / eps^2)`.
pub fn theorem2_bound(
    cert: &LyapunovCertificate,
    noise: &NoiseModel,
    mu: f64,
    epsilon: f64,
    y0: &[f64],
) -> Result<BoundReport> {
    let NoiseClass::Damped { h, .. } = noise.class() else {
        return Err(Error::Config(
            "the uniform-in-time bound requires damped noise (an integrable envelope)".into(),
        ));
    };
    let h = *h;
    if y0.len() != cert.dim() {
        return Err(Error::Dimension { expected: cert.dim(), got: y0.len() });
    }
    if noise.rows() != cert.dim() {
        return Err(Error::Dimension { expected: cert.dim(), got: noise.rows() });
    }
    let c = cert.constants();
    if !(epsilon > 0.0 && epsilon <= c.radius) {
        return Err(Error::Config(format!(
            "epsilon must lie in (0, r0] with r0 = {}, got {epsilon}",
            c.radius
        )));
    }
    if mu < 0.0 {
        return Err(Error::Config("mu must be nonnegative".into()));
    }
    let n2 = (cert.dim() * cert.dim()) as f64;
    let v_initial = cert.value(y0, 0.0) + mu * mu * n2 * c.hess_bound * h;
    let bound = (v_initial / (epsilon * epsilon)).min(1.0);
    Ok(BoundReport {
        mu,
        order: 1,
        kappa: None,
        epsilon,
        nu: None,
        y0_norm: crate::mat::norm(y0),
        horizon: f64::INFINITY,
        v_initial,
        bound,
        delta: None,
        delta_cap: None,
        regime: Regime::Theorem2,
    })
}

/// Exit-probability bound for `gamma = 0` with uniformly bounded noise on an
/// explicitly supplied horizon (`N = 1` construction). The guarantee
/// degrades as the horizon approaches `mu^-2`; this is an advisory path.
pub fn remark2_bound(
    cert: &LyapunovCertificate,
    noise_h: f64,
    mu: f64,
    epsilon: f64,
    y0: &[f64],
    horizon: f64,
) -> Result<BoundReport> {
    if y0.len() != cert.dim() {
        return Err(Error::Dimension { expected: cert.dim(), got: y0.len() });
    }
    let c = cert.constants();
    if !(epsilon > 0.0 && epsilon <= c.radius) {
        return Err(Error::Config(format!(
            "epsilon must lie in (0, r0] with r0 = {}, got {epsilon}",
            c.radius
        )));
    }
    let pl = PerturbedLyapunov::new(cert.clone(), 1, noise_h, mu, horizon)?;
    let v_initial = pl.value(y0, 0.0)?;
    let bound = (v_initial / (epsilon * epsilon)).min(1.0);
    Ok(BoundReport {
        mu,
        order: 1,
        kappa: None,
        epsilon,
        nu: None,
        y0_norm: crate::mat::norm(y0),
        horizon,
        v_initial,
        bound,
        delta: None,
        delta_cap: None,
        regime: Regime::Remark2,
    })
}

/// Admissible `(delta, Delta)`: initial radii below `delta` and intensities
/// below `Delta` keep the exit probability below `nu` on the horizon
/// `mu^(-2N+kappa)`.
///
/// Closed forms for `N = 1` and `N = 2` (equal budget split across terms);
/// for `N >= 3` the intensity threshold is found by bisection on the
/// directly evaluated sufficient condition `V_N <= eps^(2N) nu`, with the
/// worst-case initial value `A delta^2`. The returned pair is re-verified by
/// direct evaluation before being returned.
pub fn admissible_region(
    cert: &LyapunovCertificate,
    noise_h: f64,
    order: u32,
    epsilon: f64,
    nu: f64,
    kappa: f64,
) -> Result<(f64, f64)> {
    let c = *cert.constants();
    if order == 0 {
        return Err(Error::Config("order N must be at least 1".into()));
    }
    if !(0.0 < nu && nu < 1.0) {
        return Err(Error::Config(format!("nu must lie in (0,1), got {nu}")));
    }
    if !(0.0 < kappa && kappa < 1.0) {
        return Err(Error::Config(format!("kappa must lie in (0,1), got {kappa}")));
    }
    if !(epsilon > 0.0 && epsilon <= c.radius) {
        return Err(Error::Config(format!(
            "epsilon must lie in (0, r0] with r0 = {}, got {epsilon}",
            c.radius
        )));
    }
    if noise_h < 0.0 {
        return Err(Error::Config("noise bound h must be nonnegative".into()));
    }
    if order >= 2 && c.decay_rate <= 0.0 {
        return Err(Error::ZeroDecayRate(
            "admissible regions for N >= 2 need gamma > 0".into(),
        ));
    }
    let n2 = (cert.dim() * cert.dim()) as f64;
    let budget = epsilon.powi(2 * order as i32) * nu;
    if !(budget.is_normal() && budget > 0.0) {
        return Err(Error::Infeasible(format!(
            "eps^(2N) nu = {budget:e} underflows; no representable region"
        )));
    }

    let (delta, delta_cap) = match order {
        1 => {
            let delta = (epsilon * epsilon * nu / (2.0 * c.quad_upper)).sqrt();
            let denom = 2.0 * n2 * noise_h * c.hess_bound;
            let cap = if denom > 0.0 {
                (epsilon * epsilon * nu / denom).powf(1.0 / kappa).min(1.0)
            } else {
                1.0
            };
            (delta, cap)
        }
        2 => {
            let a1 = coefficient_a(1, cert.dim(), noise_h, c.grad_bound, c.hess_bound,
                                   c.decay_rate)?;
            // Split the budget eps^4 nu equally across the three terms of
            // 3 A^2 d^4 / 2 + D^4 a1^2 / 2 + D^kappa a1 n^2 h C <= eps^4 nu.
            let third = budget / 3.0;
            let delta = (2.0 * third / (3.0 * c.quad_upper * c.quad_upper)).powf(0.25);
            let cap = if a1 > 0.0 {
                let d1 = (2.0 * third / (a1 * a1)).powf(0.25);
                let d2 = (third / (a1 * n2 * noise_h * c.hess_bound)).powf(1.0 / kappa);
                d1.min(d2).min(1.0)
            } else {
                1.0
            };
            (delta, cap)
        }
        _ => {
            // Let the initial term consume half the budget, then bisect on
            // the largest mu for which the worst-case V_N stays within it.
            let delta =
                epsilon * (nu / 2.0).powf(1.0 / (2.0 * order as f64)) / c.quad_upper.sqrt();
            let base = c.quad_upper * delta * delta;
            let feasible = |mu: f64| -> Result<bool> {
                let t = mu.powf(-2.0 * order as f64 + kappa);
                let pl =
                    PerturbedLyapunov::new(cert.clone(), order, noise_h, mu, t)?;
                Ok(pl.value_from_base(base, 0.0)? <= budget)
            };
            // Smallest mu whose horizon mu^(-2N+kappa) is still representable.
            let mu_floor = 1e-280f64.powf(1.0 / (2.0 * order as f64 - kappa));
            if !feasible(mu_floor)? {
                return Err(Error::Infeasible(
                    "even vanishing intensities violate the budget".into(),
                ));
            }
            let mut cap = if feasible(1.0)? {
                1.0
            } else {
                let (mut lo, mut hi) = (mu_floor, 1.0f64);
                for _ in 0..200 {
                    let mid = (lo * hi).sqrt(); // geometric: the scale is unknown
                    if feasible(mid)? {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
            if !(cap.is_normal() && cap > 0.0) {
                return Err(Error::Infeasible(format!(
                    "intensity threshold collapsed to {cap:e}"
                )));
            }
            cap = cap.min(1.0);
            (delta, cap)
        }
    };

    let mut delta = delta * ADMISSIBLE_SHRINK;
    let mut cap = delta_cap * ADMISSIBLE_SHRINK;
    if !cap.powf(-2.0 * order as f64 + kappa).is_finite() {
        return Err(Error::Infeasible(format!(
            "Delta = {cap:e} puts the horizon Delta^(-2N+kappa) beyond f64 range; \
             the region cannot be re-verified"
        )));
    }
    // Contract: the returned pair satisfies V_N(worst, 0; T) <= budget as
    // evaluated. Shrink a little further if rounding still trips it.
    for _ in 0..8 {
        let t = cap.powf(-2.0 * order as f64 + kappa);
        let pl = PerturbedLyapunov::new(cert.clone(), order, noise_h, cap, t)?;
        let worst = pl.value_from_base(c.quad_upper * delta * delta, 0.0)?;
        if worst <= budget {
            return Ok((delta, cap));
        }
        delta *= 1.0 - 1e-9;
        cap *= 1.0 - 1e-9;
    }
    Err(Error::Infeasible(
        "re-verification of the admissible pair failed after shrinking".into(),
    ))
}

/// Admissible `(delta, Delta)` for the damped-noise regime: equal split of
/// `A delta^2 + Delta^2 n^2 C h <= eps^2 nu`.
pub fn damped_admissible_region(
    cert: &LyapunovCertificate,
    noise_h: f64,
    epsilon: f64,
    nu: f64,
) -> Result<(f64, f64)> {
    let c = cert.constants();
    if !(0.0 < nu && nu < 1.0) {
        return Err(Error::Config(format!("nu must lie in (0,1), got {nu}")));
    }
    if !(epsilon > 0.0 && epsilon <= c.radius) {
        return Err(Error::Config("epsilon must lie in (0, r0]".into()));
    }
    let n2 = (cert.dim() * cert.dim()) as f64;
    let half = epsilon * epsilon * nu / 2.0;
    let delta = (half / c.quad_upper).sqrt() * ADMISSIBLE_SHRINK;
    let denom = n2 * c.hess_bound * noise_h;
    let cap = if denom > 0.0 { (half / denom).sqrt().min(1.0) } else { 1.0 } * ADMISSIBLE_SHRINK;
    Ok((delta, cap))
}
