//! C ABI for the perlyap stability toolkit.
//!
//! Conventions:
//!
//! * Every function returns a [`PerlyapStatus`]; results are written through
//!   out-pointers. On any non-Ok status a thread-local message is set and
//!   can be fetched with [`perlyap_last_error_message`].
//! * Systems, noise models and certificates are opaque handles created by
//!   `perlyap_*_new`-style constructors and released with the matching
//!   `perlyap_*_free`. Handles are immutable and safe to share across
//!   threads.
//! * Panics never cross the boundary; they are caught and reported as
//!   [`PerlyapStatus::Panic`].
//!
//! The header `include/perlyap.h` is generated by cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, c_void};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use perlyap::bounds::{self, Regime};
use perlyap::certify::{self, SamplingPlan};
use perlyap::model::{CertConstants, DynamicalSystem, ExperimentParams, HorizonMode,
                     LyapunovCertificate, NoiseModel};
use perlyap::montecarlo;
use perlyap::oracles;
use perlyap::presets;
use perlyap::simulate::IntegratorConfig;
use perlyap::Error;

/// Status codes returned by every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerlyapStatus {
    Ok = 0,
    /// Invalid configuration or arguments.
    ConfigError = 1,
    /// Arguments outside an operation's domain.
    DomainError = 2,
    /// No representable admissible region exists.
    Infeasible = 3,
    /// A required pointer was null.
    NullPointer = 4,
    /// An internal panic was caught.
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend_from_slice(msg.as_bytes());
    });
}

fn status_of(err: &Error) -> PerlyapStatus {
    match err {
        Error::Config(_) | Error::Dimension { .. } | Error::ZeroDecayRate(_) => {
            PerlyapStatus::ConfigError
        }
        Error::Domain(_) | Error::NonConvergence(_) => PerlyapStatus::DomainError,
        Error::Infeasible(_) => PerlyapStatus::Infeasible,
    }
}

/// Copies the last error message on this thread into `buf` (truncated to
/// `cap - 1` bytes, always NUL-terminated when `cap > 0`) and returns the
/// full message length in bytes.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (then only the
/// length is returned).
#[no_mangle]
pub unsafe extern "C" fn perlyap_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = e.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(e.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        e.len()
    })
}

fn guard<F: FnOnce() -> PerlyapStatus>(f: F) -> PerlyapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            PerlyapStatus::Panic
        }
    }
}

macro_rules! nonnull {
    ($ptr:expr) => {
        if $ptr.is_null() {
            set_error(concat!("null pointer: ", stringify!($ptr)));
            return PerlyapStatus::NullPointer;
        }
    };
}

macro_rules! try_ffi {
    ($expr:expr) => {
        match $expr {
            Ok(v) => v,
            Err(e) => {
                set_error(&e.to_string());
                return status_of(&e);
            }
        }
    };
}

// ---------------------------------------------------------------------------
// Opaque handles
// ---------------------------------------------------------------------------

/// Opaque drift-field handle.
pub struct PerlyapSystem(DynamicalSystem);
/// Opaque noise-model handle.
pub struct PerlyapNoise(NoiseModel);
/// Opaque Lyapunov-certificate handle.
pub struct PerlyapCertificate(LyapunovCertificate);

unsafe fn boxed<T>(value: T, out: *mut *mut T) -> PerlyapStatus {
    unsafe { *out = Box::into_raw(Box::new(value)) };
    PerlyapStatus::Ok
}

/// Frees a system handle (null is a no-op).
///
/// # Safety
/// `p` must have been returned by a `perlyap_system_*` constructor and not
/// freed before.
#[no_mangle]
pub unsafe extern "C" fn perlyap_system_free(p: *mut PerlyapSystem) {
    if !p.is_null() {
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Frees a noise handle (null is a no-op).
///
/// # Safety
/// `p` must have been returned by a `perlyap_noise_*` constructor and not
/// freed before.
#[no_mangle]
pub unsafe extern "C" fn perlyap_noise_free(p: *mut PerlyapNoise) {
    if !p.is_null() {
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Frees a certificate handle (null is a no-op).
///
/// # Safety
/// `p` must have been returned by a certificate constructor and not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn perlyap_certificate_free(p: *mut PerlyapCertificate) {
    if !p.is_null() {
        drop(unsafe { Box::from_raw(p) });
    }
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

/// Zero drift in one dimension (the pure-noise system).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perlyap_system_pure_noise(out: *mut *mut PerlyapSystem) -> PerlyapStatus {
    guard(|| {
        nonnull!(out);
        unsafe { boxed(PerlyapSystem(presets::pure_noise().system), out) }
    })
}

/// The bistable cubic drift `-y (1 - y^2) / (1 + y^2)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perlyap_system_cubic_bistable(
    out: *mut *mut PerlyapSystem,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(out);
        unsafe { boxed(PerlyapSystem(presets::cubic_bistable().system), out) }
    })
}

/// Linear mean reversion `-theta y`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perlyap_system_linear_ou(
    theta: f64,
    out: *mut *mut PerlyapSystem,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(out);
        let preset = try_ffi!(presets::linear_ou(theta));
        unsafe { boxed(PerlyapSystem(preset.system), out) }
    })
}

/// Drift callback: write `f(x, t)` (dim entries) into `out`.
///
/// The callback is invoked concurrently from worker threads and must be
/// thread-safe; `ctx` is passed through untouched.
pub type PerlyapDriftFn =
    Option<unsafe extern "C" fn(x: *const f64, dim: usize, t: f64, out: *mut f64, ctx: *mut c_void)>;

struct CtxPtr(*mut c_void);
// The API contract requires the callback and its context to be thread-safe.
unsafe impl Send for CtxPtr {}
unsafe impl Sync for CtxPtr {}

/// Builds a system from a C drift callback. The drift must vanish at the
/// origin (checked numerically on a time grid).
///
/// # Safety
/// `drift` must be callable from any thread with the documented signature
/// for the lifetime of the handle, and `ctx` must stay valid that long.
#[no_mangle]
pub unsafe extern "C" fn perlyap_system_custom(
    dim: usize,
    drift: PerlyapDriftFn,
    ctx: *mut c_void,
    lipschitz: f64,
    growth: f64,
    out: *mut *mut PerlyapSystem,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(out);
        let Some(callback) = drift else {
            set_error("null pointer: drift");
            return PerlyapStatus::NullPointer;
        };
        let ctx = Arc::new(CtxPtr(ctx));
        let field: perlyap::model::VectorField = Arc::new(move |x, t, o: &mut [f64]| unsafe {
            callback(x.as_ptr(), x.len(), t, o.as_mut_ptr(), ctx.0);
        });
        let system = try_ffi!(DynamicalSystem::new(dim, lipschitz, growth, field));
        unsafe { boxed(PerlyapSystem(system), out) }
    })
}

/// Constant scalar noise `G = scale` (diffusion bound `scale^2 / 2`).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perlyap_noise_scalar(
    scale: f64,
    out: *mut *mut PerlyapNoise,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(out);
        unsafe { boxed(PerlyapNoise(presets::scaled_noise(scale)), out) }
    })
}

/// Exponentially damped scalar noise `G = scale e^(-rate t / 2)` with its
/// integrable envelope.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perlyap_noise_damped_exp(
    rate: f64,
    scale: f64,
    out: *mut *mut PerlyapNoise,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(out);
        let noise = try_ffi!(presets::damped_exp_noise(rate, scale));
        unsafe { boxed(PerlyapNoise(noise), out) }
    })
}

/// One-dimensional quadratic certificate `V = x^2` with explicit constants.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perlyap_certificate_quadratic(
    quad_upper: f64,
    grad_bound: f64,
    hess_bound: f64,
    decay_rate: f64,
    radius: f64,
    out: *mut *mut PerlyapCertificate,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(out);
        let base = presets::quadratic_certificate_1d(decay_rate.max(0.0), radius.max(1e-300));
        let cert = try_ffi!(base.with_constants(CertConstants {
            quad_upper,
            grad_bound,
            hess_bound,
            decay_rate,
            radius,
        }));
        unsafe { boxed(PerlyapCertificate(cert), out) }
    })
}

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------

/// Summary of a certificate verification run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PerlyapCertSummary {
    pub passed: bool,
    /// Minimal slack of the two-sided quadratic sandwich.
    pub sandwich_margin: f64,
    pub gradient_margin: f64,
    pub hessian_margin: f64,
    pub decay_margin: f64,
    pub sampled_points: usize,
    pub violations: usize,
}

/// Verifies the certificate inequalities on the default sampled ball.
///
/// # Safety
/// All pointers must be valid handles / writable memory.
#[no_mangle]
pub unsafe extern "C" fn perlyap_verify_certificate(
    cert: *const PerlyapCertificate,
    system: *const PerlyapSystem,
    out: *mut PerlyapCertSummary,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(cert);
        nonnull!(system);
        nonnull!(out);
        let (cert, system) = unsafe { (&(*cert).0, &(*system).0) };
        let report = try_ffi!(certify::verify_certificate(
            cert,
            system,
            &SamplingPlan::for_certificate(cert)
        ));
        unsafe {
            *out = PerlyapCertSummary {
                passed: report.passed,
                sandwich_margin: report.worst_margins.sandwich,
                gradient_margin: report.worst_margins.gradient,
                hessian_margin: report.worst_margins.hessian,
                decay_margin: report.worst_margins.decay,
                sampled_points: report.sampled_points,
                violations: report.total_violations,
            };
        }
        PerlyapStatus::Ok
    })
}

/// Largest sampled max-entry norm of the diffusion matrix over the ball of
/// the given radius.
///
/// # Safety
/// `noise` must be a valid handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn perlyap_estimate_h(
    noise: *const PerlyapNoise,
    radius: f64,
    out: *mut f64,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(noise);
        nonnull!(out);
        let noise = unsafe { &(*noise).0 };
        let h = certify::estimate_h(noise, radius, &SamplingPlan::for_noise(noise.rows()));
        unsafe { *out = h };
        PerlyapStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

/// Which stability statement produced a bound.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerlyapRegime {
    Theorem1 = 0,
    Remark1 = 1,
    Theorem2 = 2,
    Remark2 = 3,
}

/// A theoretical exit-probability bound. Optional fields (`kappa`, `nu`,
/// `delta`, `delta_cap`) are NaN when absent; `horizon` is +infinity for
/// the uniform-in-time regime.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PerlyapBound {
    pub mu: f64,
    pub order: u32,
    pub kappa: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub y0_norm: f64,
    pub horizon: f64,
    pub v_initial: f64,
    pub bound: f64,
    pub delta: f64,
    pub delta_cap: f64,
    pub regime: PerlyapRegime,
}

fn bound_out(report: &bounds::BoundReport) -> PerlyapBound {
    PerlyapBound {
        mu: report.mu,
        order: report.order,
        kappa: report.kappa.unwrap_or(f64::NAN),
        epsilon: report.epsilon,
        nu: report.nu.unwrap_or(f64::NAN),
        y0_norm: report.y0_norm,
        horizon: report.horizon,
        v_initial: report.v_initial,
        bound: report.bound,
        delta: report.delta.unwrap_or(f64::NAN),
        delta_cap: report.delta_cap.unwrap_or(f64::NAN),
        regime: match report.regime {
            Regime::Theorem1 => PerlyapRegime::Theorem1,
            Regime::Remark1 => PerlyapRegime::Remark1,
            Regime::Theorem2 => PerlyapRegime::Theorem2,
            Regime::Remark2 => PerlyapRegime::Remark2,
        },
    }
}

/// Finite-horizon bound on `T = mu^(-2N+kappa)` for bounded noise
/// (requires a certificate with positive decay rate).
///
/// # Safety
/// `cert` must be a valid handle; `y0` must hold `dim` doubles; `out`
/// writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn perlyap_theorem1_bound(
    cert: *const PerlyapCertificate,
    noise_bound: f64,
    mu: f64,
    order: u32,
    kappa: f64,
    epsilon: f64,
    nu: f64,
    y0: *const f64,
    dim: usize,
    out: *mut PerlyapBound,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(cert);
        nonnull!(y0);
        nonnull!(out);
        let cert = unsafe { &(*cert).0 };
        let y0 = unsafe { std::slice::from_raw_parts(y0, dim) };
        let params = try_ffi!(ExperimentParams::new(
            mu,
            order,
            kappa,
            epsilon,
            nu,
            y0.to_vec(),
            HorizonMode::Theorem1,
            cert.constants().radius,
        ));
        let report = try_ffi!(bounds::theorem1_bound(cert, noise_bound, &params));
        unsafe { *out = bound_out(&report) };
        PerlyapStatus::Ok
    })
}

/// Uniform-in-time bound for damped noise (`gamma = 0` certificates).
///
/// # Safety
/// Handles must be valid; `y0` must hold `dim` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn perlyap_theorem2_bound(
    cert: *const PerlyapCertificate,
    noise: *const PerlyapNoise,
    mu: f64,
    epsilon: f64,
    y0: *const f64,
    dim: usize,
    out: *mut PerlyapBound,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(cert);
        nonnull!(noise);
        nonnull!(y0);
        nonnull!(out);
        let (cert, noise) = unsafe { (&(*cert).0, &(*noise).0) };
        let y0 = unsafe { std::slice::from_raw_parts(y0, dim) };
        let report = try_ffi!(bounds::theorem2_bound(cert, noise, mu, epsilon, y0));
        unsafe { *out = bound_out(&report) };
        PerlyapStatus::Ok
    })
}

/// Admissible initial radius `delta` and intensity threshold `Delta` for
/// the finite-horizon guarantee.
///
/// # Safety
/// `cert` must be a valid handle; `delta`/`delta_cap` writable.
#[no_mangle]
pub unsafe extern "C" fn perlyap_admissible_region(
    cert: *const PerlyapCertificate,
    noise_bound: f64,
    order: u32,
    epsilon: f64,
    nu: f64,
    kappa: f64,
    delta: *mut f64,
    delta_cap: *mut f64,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(cert);
        nonnull!(delta);
        nonnull!(delta_cap);
        let cert = unsafe { &(*cert).0 };
        let (d, cap) =
            try_ffi!(bounds::admissible_region(cert, noise_bound, order, epsilon, nu, kappa));
        unsafe {
            *delta = d;
            *delta_cap = cap;
        }
        PerlyapStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Integration controls for Monte Carlo runs.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PerlyapSimConfig {
    /// Step size; pass 0 for the default `min(1e-2, eps^2/(100 mu^2))`.
    pub dt: f64,
    pub bridge_correction: bool,
    pub max_steps: u64,
    pub seed: u64,
}

/// Exit-probability estimate with a Wilson interval.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PerlyapEstimate {
    pub n_trajectories: u64,
    pub n_exited: u64,
    pub aborted: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub unreliable: bool,
}

/// Estimates `P(sup_{[0,T]} |y| >= epsilon)` over `n_trajectories` stopped
/// trajectories.
///
/// # Safety
/// Handles must be valid; `y0` must hold `dim` doubles; `config` and `out`
/// must be valid pointers.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn perlyap_estimate_exit_probability(
    system: *const PerlyapSystem,
    noise: *const PerlyapNoise,
    mu: f64,
    y0: *const f64,
    dim: usize,
    epsilon: f64,
    horizon: f64,
    n_trajectories: u64,
    ci_level: f64,
    config: *const PerlyapSimConfig,
    out: *mut PerlyapEstimate,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(system);
        nonnull!(noise);
        nonnull!(y0);
        nonnull!(config);
        nonnull!(out);
        let (system, noise) = unsafe { (&(*system).0, &(*noise).0) };
        let y0 = unsafe { std::slice::from_raw_parts(y0, dim) };
        let c = unsafe { &*config };
        let dt = if c.dt > 0.0 { c.dt } else { IntegratorConfig::default_dt(epsilon, mu) };
        let mut cfg = IntegratorConfig::new(dt, c.seed);
        cfg.bridge_correction = c.bridge_correction;
        cfg.max_steps = c.max_steps;
        let est = try_ffi!(montecarlo::estimate_exit_probability(
            system,
            noise,
            mu,
            y0,
            epsilon,
            horizon,
            n_trajectories,
            ci_level,
            &cfg,
        ));
        unsafe {
            *out = PerlyapEstimate {
                n_trajectories: est.n_trajectories,
                n_exited: est.n_exited,
                aborted: est.aborted,
                p_hat: est.p_hat,
                ci_low: est.ci_low,
                ci_high: est.ci_high,
                level: est.level,
                unreliable: est.unreliable,
            };
        }
        PerlyapStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

/// Truncated series evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PerlyapSeries {
    pub value: f64,
    pub terms_used: u32,
    pub truncation_error_estimate: f64,
}

/// Two-sided Wiener supremum distribution `P(sup |w| >= c)` on `[0, T]`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perlyap_brownian_sup_prob(
    c: f64,
    t: f64,
    tol: f64,
    out: *mut PerlyapSeries,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(out);
        let r = try_ffi!(oracles::brownian_sup_prob(c, t, tol));
        unsafe {
            *out = PerlyapSeries {
                value: r.value,
                terms_used: r.terms_used,
                truncation_error_estimate: r.truncation_error_estimate,
            };
        }
        PerlyapStatus::Ok
    })
}

/// Intensity threshold for the pure-noise system (see the CLI docs).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn perlyap_example1_threshold(
    epsilon: f64,
    nu: f64,
    kappa: f64,
    out: *mut f64,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(out);
        let v = try_ffi!(oracles::example1_threshold(epsilon, nu, kappa));
        unsafe { *out = v };
        PerlyapStatus::Ok
    })
}

/// Mean and variance of the linear mean-reverting process at time `t`.
///
/// # Safety
/// `mean` and `variance` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn perlyap_ou_moments(
    theta: f64,
    mu: f64,
    t: f64,
    y0: f64,
    mean: *mut f64,
    variance: *mut f64,
) -> PerlyapStatus {
    guard(|| {
        nonnull!(mean);
        nonnull!(variance);
        let (m, v) = try_ffi!(oracles::ou_moments(theta, mu, t, y0));
        unsafe {
            *mean = m;
            *variance = v;
        }
        PerlyapStatus::Ok
    })
}
