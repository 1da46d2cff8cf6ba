//! Built-in systems, noise models and certificates used by the CLI and the
//! validation suite.

use std::sync::Arc;

use crate::mat::Matrix;
use crate::model::{CertConstants, DynamicalSystem, LyapunovCertificate, NoiseClass,
                   NoiseEnvelope, NoiseModel, NoiseShape};
use crate::{Error, Result};

/// A named system with its default noise model and certificate.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub system: DynamicalSystem,
    pub noise: NoiseModel,
    pub certificate: LyapunovCertificate,
}

/// Quadratic certificate `V = |x|^2` in one dimension with the given decay
/// rate and radius (constants `A = 1`, `B = 4`, `C = 2` are exact for it).
pub fn quadratic_certificate_1d(decay_rate: f64, radius: f64) -> LyapunovCertificate {
    LyapunovCertificate::new(
        1,
        Arc::new(|x: &[f64], _t| x[0] * x[0]),
        CertConstants { quad_upper: 1.0, grad_bound: 4.0, hess_bound: 2.0, decay_rate, radius },
    )
    .expect("constants are valid")
    .with_gradient(Arc::new(|x: &[f64], _t, out: &mut [f64]| out[0] = 2.0 * x[0]))
    .with_hessian(Arc::new(|_x: &[f64], _t, out: &mut Matrix| out.set(0, 0, 2.0)))
}

/// Constant scalar noise `G = scale` (diffusion `sigma = scale^2 / 2`).
pub fn scaled_noise(scale: f64) -> NoiseModel {
    NoiseModel::new(
        1,
        1,
        NoiseShape::Scalar,
        NoiseClass::UniformlyBounded { h: scale * scale / 2.0 },
        Arc::new(move |_y, _t, out: &mut Matrix| out.set(0, 0, scale)),
    )
    .expect("dimensions are valid")
}

/// Exponentially damped scalar noise `G = scale * e^(-rate t / 2)`:
/// `sigma(t) = scale^2 e^(-rate t) / 2`, with the matching envelope and
/// analytic tail, and `h = scale^2 / (2 rate)`.
pub fn damped_exp_noise(rate: f64, scale: f64) -> Result<NoiseModel> {
    if rate.is_nan() || rate <= 0.0 {
        return Err(Error::Config(format!("decay rate must be positive, got {rate}")));
    }
    let s2 = scale * scale;
    NoiseModel::new(
        1,
        1,
        NoiseShape::Scalar,
        NoiseClass::Damped {
            envelope: NoiseEnvelope {
                zeta: Arc::new(move |t: f64| s2 * (-rate * t).exp() / 2.0),
                tail: Some(Arc::new(move |t: f64| s2 * (-rate * t).exp() / (2.0 * rate))),
            },
            h: s2 / (2.0 * rate),
        },
        Arc::new(move |_y, t: f64, out: &mut Matrix| out.set(0, 0, scale * (-rate * t / 2.0).exp())),
    )
}

/// `dy = mu dw`: no drift, unit noise, quadratic certificate with zero
/// decay (the origin is stable but not asymptotically stable).
pub fn pure_noise() -> Preset {
    Preset {
        name: "pure-noise",
        description: "zero drift, unit scalar noise, V = x^2 with gamma = 0",
        system: DynamicalSystem::new(1, 0.0, 0.0, Arc::new(|_x, _t, _out: &mut [f64]| {}))
            .expect("origin is an equilibrium"),
        noise: scaled_noise(1.0),
        certificate: quadratic_certificate_1d(0.0, 1.0),
    }
}

/// `dy = -y (1 - y^2) / (1 + y^2) dt + mu G dw`: three equilibria at
/// -1, 0, 1; the origin is exponentially stable and `V = x^2` decays at
/// rate 1 on the ball of radius `1/sqrt(3)`.
pub fn cubic_bistable() -> Preset {
    Preset {
        name: "cubic-bistable",
        description: "drift -y(1-y^2)/(1+y^2), V = x^2, gamma = 1, r0 = 1/sqrt(3)",
        system: DynamicalSystem::new(
            1,
            2.0,
            1.0,
            Arc::new(|x: &[f64], _t, out: &mut [f64]| {
                let y = x[0];
                out[0] = -y * (1.0 - y * y) / (1.0 + y * y);
            }),
        )
        .expect("origin is an equilibrium"),
        noise: scaled_noise(1.0),
        certificate: quadratic_certificate_1d(1.0, 1.0 / 3f64.sqrt()),
    }
}

/// `dy = -theta y dt + mu dw`: linear mean reversion, used to validate the
/// integrator against closed-form moments.
pub fn linear_ou(theta: f64) -> Result<Preset> {
    if theta.is_nan() || theta <= 0.0 {
        return Err(Error::Config(format!("theta must be positive, got {theta}")));
    }
    Ok(Preset {
        name: "linear-ou",
        description: "drift -theta y, unit scalar noise, V = x^2 with gamma = 2 theta",
        system: DynamicalSystem::new(
            1,
            theta,
            theta,
            Arc::new(move |x: &[f64], _t, out: &mut [f64]| out[0] = -theta * x[0]),
        )
        .expect("origin is an equilibrium"),
        noise: scaled_noise(1.0),
        certificate: quadratic_certificate_1d(2.0 * theta, 1.0),
    })
}

/// The catalog of built-in presets (with default parameters).
pub fn builtin_systems() -> Vec<Preset> {
    vec![pure_noise(), cubic_bistable(), linear_ou(1.0).expect("theta = 1 is valid")]
}

/// Looks up a preset by name; `theta` parameterizes `linear-ou`.
pub fn builtin(name: &str, theta: f64) -> Result<Preset> {
    match name {
        "pure-noise" => Ok(pure_noise()),
        "cubic-bistable" => Ok(cubic_bistable()),
        "linear-ou" => linear_ou(theta),
        other => Err(Error::Config(format!(
            "unknown system '{other}' (available: pure-noise, cubic-bistable, linear-ou)"
        ))),
    }
}
