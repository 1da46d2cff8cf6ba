//! Experiment runner: certification, bound computation, simulation, sweeps,
//! bound-versus-empirical comparison, and the long-horizon escape demo.
//!
//! Exit codes: 0 on success, 1 on a verification or comparison failure
//! (certificate rejected, a bound not dominating the data), 2 on
//! configuration errors.

use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::bounds::{self, BoundReport, PerturbedLyapunov};
use crate::certify::{self, SamplingPlan};
use crate::config::{reference_page, Settings};
use crate::model::{CertConstants, ExperimentParams, HorizonMode, LyapunovCertificate,
                   NoiseClass, NoiseModel, TimeFn};
use crate::montecarlo::{self, McEstimate};
use crate::presets::{self, Preset};
use crate::simulate::{self, IntegratorConfig};
use crate::{Error, Result};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "PERLYAP_WORKERS";

#[derive(Parser)]
#[command(
    name = "perlyap",
    about = "Stability of stochastically perturbed systems: theoretical exit-probability \
             bounds versus stopped-process Monte Carlo",
    after_help = "Run `perlyap defaults` for the full key/default reference. Config files \
                  hold `key = value` lines with the same keys as the flags."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify the certificate inequalities on a sampled ball and estimate
    /// noise-class constants.
    Certify(CommonArgs),
    /// Compute the theoretical exit-probability bound for one parameter set.
    Bound(CommonArgs),
    /// Estimate the exit probability by Monte Carlo.
    Simulate(CommonArgs),
    /// Cross-product of parameter lists, one bound per CSV row.
    Sweep(CommonArgs),
    /// Sweep with Monte Carlo estimates joined in, flagging bound violations.
    Compare(CommonArgs),
    /// Long-horizon trajectories illustrating eventual escape from any ball.
    EscapeDemo(CommonArgs),
    /// Print the configuration reference (all keys, defaults, descriptions).
    Defaults,
}

/// Flags mirror config keys; any flag overrides the config file.
#[derive(Args, Default)]
struct CommonArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Master seed [config: seed]
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = available parallelism [config: workers]
    #[arg(long)]
    workers: Option<usize>,
    /// Output CSV path [config: out]
    #[arg(long)]
    out: Option<String>,
    /// Builtin system [config: system]
    #[arg(long)]
    system: Option<String>,
    /// linear-ou mean reversion [config: system.theta]
    #[arg(long)]
    theta: Option<f64>,
    /// Noise model [config: noise]
    #[arg(long)]
    noise: Option<String>,
    /// Noise scale [config: noise.scale]
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Damped-noise decay rate [config: noise.rate]
    #[arg(long)]
    noise_rate: Option<f64>,
    /// Certificate constant A [config: cert.quad-upper]
    #[arg(long)]
    cert_quad_upper: Option<f64>,
    /// Certificate constant B [config: cert.grad-bound]
    #[arg(long)]
    cert_grad_bound: Option<f64>,
    /// Certificate constant C [config: cert.hess-bound]
    #[arg(long)]
    cert_hess_bound: Option<f64>,
    /// Certificate decay rate gamma [config: cert.decay-rate]
    #[arg(long, alias = "gamma")]
    cert_decay_rate: Option<f64>,
    /// Certificate radius r0 [config: cert.radius]
    #[arg(long)]
    cert_radius: Option<f64>,
    /// Diffusion bound h [config: h]
    #[arg(long)]
    h: Option<f64>,
    /// Noise intensity [config: mu]
    #[arg(long)]
    mu: Option<f64>,
    /// Construction order N [config: order]
    #[arg(long, alias = "n")]
    order: Option<u32>,
    /// Horizon exponent offset [config: kappa]
    #[arg(long)]
    kappa: Option<f64>,
    /// Exit-ball radius [config: epsilon]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Target exit probability [config: nu]
    #[arg(long)]
    nu: Option<f64>,
    /// Initial state, comma-separated [config: y0]
    #[arg(long)]
    y0: Option<String>,
    /// Horizon mode or explicit value [config: horizon]
    #[arg(long)]
    horizon: Option<String>,
    /// remark1 lambda choice [config: lambda]
    #[arg(long)]
    lambda: Option<String>,
    /// Step size or 'auto' [config: integrator.dt]
    #[arg(long)]
    dt: Option<String>,
    /// Bridge correction [config: integrator.bridge]
    #[arg(long)]
    bridge: Option<bool>,
    /// Max steps per trajectory [config: integrator.max-steps]
    #[arg(long)]
    max_steps: Option<u64>,
    /// Path-dump stride, 0 = off [config: path.stride]
    #[arg(long)]
    path_stride: Option<u64>,
    /// Monte Carlo batch size [config: trajectories]
    #[arg(long)]
    trajectories: Option<u64>,
    /// Wilson confidence level [config: ci-level]
    #[arg(long)]
    ci_level: Option<f64>,
    /// Supermartingale checkpoints [config: checkpoints]
    #[arg(long)]
    checkpoints: Option<String>,
    /// Envelope quadrature horizon [config: quad-horizon]
    #[arg(long)]
    quad_horizon: Option<f64>,
    /// Sweep list for mu [config: sweep.mu]
    #[arg(long)]
    sweep_mu: Option<String>,
    /// Sweep list for N [config: sweep.order]
    #[arg(long)]
    sweep_order: Option<String>,
    /// Sweep list for y0 [config: sweep.y0]
    #[arg(long)]
    sweep_y0: Option<String>,
    /// Horizon cap in steps for sweep/compare [config: cap-steps]
    #[arg(long)]
    cap_steps: Option<u64>,
    /// escape-demo path count [config: demo.trajectories]
    #[arg(long)]
    demo_trajectories: Option<u64>,
}

impl CommonArgs {
    fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            s.apply_file(&text)?;
        }
        macro_rules! over {
            ($field:expr, $key:literal) => {
                if let Some(v) = &$field {
                    s.set($key, v.to_string());
                }
            };
        }
        over!(self.seed, "seed");
        over!(self.workers, "workers");
        over!(self.out, "out");
        over!(self.system, "system");
        over!(self.theta, "system.theta");
        over!(self.noise, "noise");
        over!(self.noise_scale, "noise.scale");
        over!(self.noise_rate, "noise.rate");
        over!(self.cert_quad_upper, "cert.quad-upper");
        over!(self.cert_grad_bound, "cert.grad-bound");
        over!(self.cert_hess_bound, "cert.hess-bound");
        over!(self.cert_decay_rate, "cert.decay-rate");
        over!(self.cert_radius, "cert.radius");
        over!(self.h, "h");
        over!(self.mu, "mu");
        over!(self.order, "order");
        over!(self.kappa, "kappa");
        over!(self.epsilon, "epsilon");
        over!(self.nu, "nu");
        over!(self.y0, "y0");
        over!(self.horizon, "horizon");
        over!(self.lambda, "lambda");
        over!(self.dt, "integrator.dt");
        over!(self.bridge, "integrator.bridge");
        over!(self.max_steps, "integrator.max-steps");
        over!(self.path_stride, "path.stride");
        over!(self.trajectories, "trajectories");
        over!(self.ci_level, "ci-level");
        over!(self.checkpoints, "checkpoints");
        over!(self.quad_horizon, "quad-horizon");
        over!(self.sweep_mu, "sweep.mu");
        over!(self.sweep_order, "sweep.order");
        over!(self.sweep_y0, "sweep.y0");
        over!(self.cap_steps, "cap-steps");
        over!(self.demo_trajectories, "demo.trajectories");
        Ok(s)
    }
}

/// Everything a subcommand needs, resolved from settings.
struct Experiment {
    settings: Settings,
    preset: Preset,
    noise: NoiseModel,
    cert: LyapunovCertificate,
}

impl Experiment {
    fn resolve(settings: Settings) -> Result<Self> {
        let preset = presets::builtin(settings.raw("system"), settings.f64_of("system.theta")?)?;
        let noise = match settings.raw("noise") {
            "unit" => presets::scaled_noise(1.0),
            "scaled" => presets::scaled_noise(settings.f64_of("noise.scale")?),
            "damped-exp" => presets::damped_exp_noise(
                settings.f64_of("noise.rate")?,
                settings.f64_of("noise.scale")?,
            )?,
            other => {
                return Err(Error::Config(format!(
                    "unknown noise '{other}' (available: unit, scaled, damped-exp)"
                )))
            }
        };
        let base = *preset.certificate.constants();
        let constants = CertConstants {
            quad_upper: settings.f64_opt("cert.quad-upper")?.unwrap_or(base.quad_upper),
            grad_bound: settings.f64_opt("cert.grad-bound")?.unwrap_or(base.grad_bound),
            hess_bound: settings.f64_opt("cert.hess-bound")?.unwrap_or(base.hess_bound),
            decay_rate: settings.f64_opt("cert.decay-rate")?.unwrap_or(base.decay_rate),
            radius: settings.f64_opt("cert.radius")?.unwrap_or(base.radius),
        };
        let cert = preset.certificate.clone().with_constants(constants)?;
        Ok(Self { settings, preset, noise, cert })
    }

    fn y0(&self) -> Result<Vec<f64>> {
        let y0 = self.settings.f64_list("y0")?;
        if y0.len() != self.preset.system.dim() {
            return Err(Error::Config(format!(
                "y0 has {} coordinates but the system has dimension {}",
                y0.len(),
                self.preset.system.dim()
            )));
        }
        Ok(y0)
    }

    fn lambda_fn(&self) -> Result<TimeFn> {
        Ok(match self.settings.raw("lambda") {
            "identity" => Arc::new(|z: f64| z),
            "sqrt" => Arc::new(|z: f64| z.sqrt()),
            "square" => Arc::new(|z: f64| z * z),
            other => {
                return Err(Error::Config(format!(
                    "unknown lambda '{other}' (available: identity, sqrt, square)"
                )))
            }
        })
    }

    fn horizon_mode(&self) -> Result<HorizonMode> {
        match self.settings.raw("horizon") {
            "theorem1" => Ok(HorizonMode::Theorem1),
            "remark1" => Ok(HorizonMode::Remark1(self.lambda_fn()?)),
            raw => {
                let t: f64 = raw.parse().map_err(|_| {
                    Error::Config(format!(
                        "horizon must be 'theorem1', 'remark1' or a number, got '{raw}'"
                    ))
                })?;
                Ok(HorizonMode::Explicit(t))
            }
        }
    }

    /// Concrete horizon T for simulation runs.
    fn resolved_horizon(&self, mu: f64, order: u32) -> Result<f64> {
        match self.horizon_mode()? {
            HorizonMode::Theorem1 => {
                Ok(mu.powf(-2.0 * order as f64 + self.settings.f64_of("kappa")?))
            }
            HorizonMode::Remark1(lambda) => {
                bounds::remark1_horizon(mu, order, &lambda, crate::mat::norm(&self.y0()?))
            }
            HorizonMode::Explicit(t) => Ok(t),
        }
    }

    fn dt(&self, epsilon: f64, mu: f64) -> Result<f64> {
        match self.settings.raw("integrator.dt") {
            "auto" | "" => Ok(IntegratorConfig::default_dt(epsilon, mu)),
            raw => raw
                .parse()
                .map_err(|_| Error::Config(format!("integrator.dt: bad number '{raw}'"))),
        }
    }

    fn integrator_config(&self, epsilon: f64, mu: f64) -> Result<IntegratorConfig> {
        let mut cfg = IntegratorConfig::new(self.dt(epsilon, mu)?, self.settings.u64_of("seed")?);
        cfg.bridge_correction = self.settings.bool_of("integrator.bridge")?;
        cfg.max_steps = self.settings.u64_of("integrator.max-steps")?;
        let stride = self.settings.u64_of("path.stride")?;
        cfg.path_stride = (stride > 0).then_some(stride);
        Ok(cfg)
    }

    /// Diffusion bound: explicit override, or the sampled estimate over the
    /// certified ball.
    fn noise_bound(&self) -> Result<f64> {
        if let Some(h) = self.settings.f64_opt("h")? {
            return Ok(h);
        }
        Ok(certify::estimate_h(
            &self.noise,
            self.cert.constants().radius,
            &SamplingPlan::for_noise(self.noise.rows()),
        ))
    }

    fn params(&self, mu: f64, order: u32, y0: Vec<f64>) -> Result<ExperimentParams> {
        ExperimentParams::new(
            mu,
            order,
            self.settings.f64_of("kappa")?,
            self.settings.f64_of("epsilon")?,
            self.settings.f64_of("nu")?,
            y0,
            self.horizon_mode()?,
            self.cert.constants().radius,
        )
    }
}

fn init_workers(settings: &Settings) -> Result<()> {
    let mut n = settings.usize_of("workers")?;
    if n == 0 {
        if let Ok(env) = std::env::var(WORKERS_ENV) {
            n = env
                .parse()
                .map_err(|_| Error::Config(format!("{WORKERS_ENV}: bad integer '{env}'")))?;
        }
    }
    if n > 0 {
        // Ignore the error when a pool already exists (tests, repeat calls).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn write_output(settings: &Settings, content: &str) -> Result<()> {
    let path = settings.raw("out");
    if path.is_empty() {
        print!("{content}");
        Ok(())
    } else {
        std::fs::write(path, content)
            .map_err(|e| Error::Config(format!("cannot write {path}: {e}")))
    }
}

/// One row of a compare run: the bound report joined with the empirical
/// estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub report: BoundReport,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
    pub dominated: bool,
}

impl CompareRow {
    pub const CSV_HEADER: &'static str =
        "mu,N,kappa,epsilon,nu,y0_norm,T,v_n_initial,bound,delta,Delta,regime,p_hat,ci_low,ci_high,n,dominated";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.report.to_csv_row(),
            self.p_hat,
            self.ci_low,
            self.ci_high,
            self.n,
            self.dominated
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 17 {
            return Err(Error::Config(format!(
                "expected 17 fields in a compare row, got {}",
                fields.len()
            )));
        }
        let report = BoundReport::from_csv_row(&fields[..12].join(","))?;
        let parse = |s: &str, name: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Config(format!("bad {name} field '{s}'")))
        };
        Ok(Self {
            report,
            p_hat: parse(fields[12], "p_hat")?,
            ci_low: parse(fields[13], "ci_low")?,
            ci_high: parse(fields[14], "ci_high")?,
            n: fields[15]
                .parse()
                .map_err(|_| Error::Config(format!("bad n field '{}'", fields[15])))?,
            dominated: fields[16]
                .parse()
                .map_err(|_| Error::Config(format!("bad dominated field '{}'", fields[16])))?,
        })
    }
}

fn cmd_certify(exp: &Experiment) -> Result<i32> {
    let plan = SamplingPlan::for_certificate(&exp.cert);
    let report = certify::verify_certificate(&exp.cert, &exp.preset.system, &plan)?;
    print!("{}", report.to_text());
    let h = certify::estimate_h(
        &exp.noise,
        exp.cert.constants().radius,
        &SamplingPlan::for_noise(exp.noise.rows()),
    );
    println!("estimated_h: {h}");
    let mut passed = report.passed;
    if matches!(exp.noise.class(), NoiseClass::Damped { .. }) {
        let damped = certify::verify_damped_class(
            &exp.noise,
            exp.cert.constants().radius,
            &SamplingPlan::for_noise(exp.noise.rows()),
            exp.settings.f64_of("quad-horizon")?,
        )?;
        println!("damped.passed: {}", damped.passed);
        println!("damped.integral: {}", damped.integral);
        if let Some(d) = &damped.diagnostic {
            println!("damped.diagnostic: {d}");
        }
        passed &= damped.passed;
    }
    if exp.settings.is_set("out") {
        write_output(&exp.settings, &report.violations_csv(exp.cert.dim()))?;
    }
    Ok(if passed { 0 } else { 1 })
}

fn cmd_bound(exp: &Experiment) -> Result<i32> {
    let mu = exp.settings.f64_of("mu")?;
    let order = exp.settings.u32_of("order")?;
    let epsilon = exp.settings.f64_of("epsilon")?;
    let y0 = exp.y0()?;
    let gamma = exp.cert.constants().decay_rate;

    let report = if gamma > 0.0 {
        bounds::theorem1_bound(&exp.cert, exp.noise_bound()?, &exp.params(mu, order, y0)?)?
    } else if let NoiseClass::Damped { h, .. } = exp.noise.class() {
        let mut r = bounds::theorem2_bound(&exp.cert, &exp.noise, mu, epsilon, &y0)?;
        let nu = exp.settings.f64_of("nu")?;
        if let Ok((d, cap)) = bounds::damped_admissible_region(&exp.cert, *h, epsilon, nu) {
            r.delta = Some(d);
            r.delta_cap = Some(cap);
            r.nu = Some(nu);
        }
        println!("note: damped noise with gamma = 0; the bound holds uniformly for t >= 0");
        r
    } else {
        // gamma = 0 with bounded noise: only the short-horizon advisory path
        // exists, and only for the order-1 construction.
        if order != 1 {
            return Err(Error::ZeroDecayRate(format!(
                "N = {order} needs gamma > 0; with gamma = 0 and bounded noise only N = 1 on an \
                 explicit horizon far below mu^-2 is available"
            )));
        }
        let HorizonMode::Explicit(t) = exp.horizon_mode()? else {
            return Err(Error::ZeroDecayRate(
                "gamma = 0 with bounded noise guarantees stability only on horizons short of \
                 mu^-2; pass an explicit horizon to get the advisory bound"
                    .into(),
            ));
        };
        println!(
            "note: gamma = 0 advisory bound; the guarantee degrades as T approaches mu^-2 = {}",
            (mu * mu).recip()
        );
        bounds::remark2_bound(&exp.cert, exp.noise_bound()?, mu, epsilon, &y0, t)?
    };
    print!("{}", report.to_text());
    if exp.settings.is_set("out") {
        write_output(
            &exp.settings,
            &format!("{}\n{}\n", BoundReport::CSV_HEADER, report.to_csv_row()),
        )?;
    }
    Ok(0)
}

fn cmd_simulate(exp: &Experiment) -> Result<i32> {
    let mu = exp.settings.f64_of("mu")?;
    let order = exp.settings.u32_of("order")?;
    let epsilon = exp.settings.f64_of("epsilon")?;
    let y0 = exp.y0()?;
    let horizon = exp.resolved_horizon(mu, order)?;
    let config = exp.integrator_config(epsilon, mu)?;
    let n = exp.settings.u64_of("trajectories")?;
    let level = exp.settings.f64_of("ci-level")?;
    let est = montecarlo::estimate_exit_probability(
        &exp.preset.system,
        &exp.noise,
        mu,
        &y0,
        epsilon,
        horizon,
        n,
        level,
        &config,
    )?;
    print!("{}", estimate_text(&est));
    if est.unreliable {
        println!("warning: more than 1% of trajectories aborted; estimate is unreliable");
    }
    if exp.settings.is_set("out") {
        if config.path_stride.is_some() {
            // Path dump mode: write one decimated trajectory instead of the
            // estimate row.
            write_output(&exp.settings, &path_dump(exp, mu, &y0, epsilon, horizon, &config)?)?;
        } else {
            write_output(
                &exp.settings,
                &format!("{}\n{}\n", McEstimate::CSV_HEADER, est.to_csv_row()),
            )?;
        }
    }
    Ok(0)
}

fn estimate_text(est: &McEstimate) -> String {
    let mut s = String::new();
    s.push_str(&format!("n_trajectories: {}\n", est.n_trajectories));
    s.push_str(&format!("n_exited: {}\n", est.n_exited));
    s.push_str(&format!("aborted: {}\n", est.aborted));
    s.push_str(&format!("p_hat: {}\n", est.p_hat));
    s.push_str(&format!("ci_low: {}\n", est.ci_low));
    s.push_str(&format!("ci_high: {}\n", est.ci_high));
    s.push_str(&format!("level: {}\n", est.level));
    s
}

/// CSV dump of one decimated trajectory: `t, y_1.., V, V_N`.
fn path_dump(
    exp: &Experiment,
    mu: f64,
    y0: &[f64],
    epsilon: f64,
    horizon: f64,
    config: &IntegratorConfig,
) -> Result<String> {
    let traj = simulate::run_stopped_trajectory(
        &exp.preset.system,
        &exp.noise,
        mu,
        y0,
        epsilon,
        horizon,
        config,
    )?;
    let order = if exp.cert.constants().decay_rate > 0.0 {
        exp.settings.u32_of("order")?
    } else {
        1
    };
    let pl = PerturbedLyapunov::new(exp.cert.clone(), order, exp.noise_bound()?, mu, horizon)?;
    let n = exp.cert.dim();
    let mut s = String::from("t");
    for i in 1..=n {
        s.push_str(&format!(",y_{i}"));
    }
    s.push_str(",V,V_N\n");
    for (t, y) in traj.path_samples.iter().flatten() {
        s.push_str(&format!("{t}"));
        for c in y {
            s.push_str(&format!(",{c}"));
        }
        s.push_str(&format!(",{},{}\n", exp.cert.value(y, *t), pl.value(y, *t)?));
    }
    Ok(s)
}

struct SweepGrid {
    mus: Vec<f64>,
    orders: Vec<u32>,
    y0s: Vec<f64>,
}

fn sweep_grid(exp: &Experiment) -> Result<SweepGrid> {
    let mut mus = exp.settings.f64_list("sweep.mu")?;
    if mus.is_empty() {
        mus = vec![exp.settings.f64_of("mu")?];
    }
    let mut orders = exp.settings.u32_list("sweep.order")?;
    if orders.is_empty() {
        orders = vec![exp.settings.u32_of("order")?];
    }
    let mut y0s = exp.settings.f64_list("sweep.y0")?;
    if y0s.is_empty() {
        y0s = vec![exp.y0()?[0]];
    }
    if exp.preset.system.dim() != 1 {
        return Err(Error::Config("sweeps drive scalar initial values; dim must be 1".into()));
    }
    Ok(SweepGrid { mus, orders, y0s })
}

/// Horizon for one sweep cell: the theorem horizon capped at
/// `cap-steps * dt` so desk-scale runs stay feasible.
fn capped_horizon(exp: &Experiment, mu: f64, order: u32, dt: f64) -> Result<f64> {
    let t = exp.resolved_horizon(mu, order)?;
    let cap = exp.settings.u64_of("cap-steps")? as f64 * dt;
    Ok(t.min(cap))
}

/// Theoretical bound for one sweep cell, routed by regime: finite-horizon
/// when `gamma > 0`, uniform-in-time for damped noise, the order-1
/// explicit-horizon advisory for bounded noise with `gamma = 0`.
fn bound_for_cell(
    exp: &Experiment,
    h: f64,
    mu: f64,
    order: u32,
    y0: f64,
    horizon: f64,
) -> Result<BoundReport> {
    let gamma = exp.cert.constants().decay_rate;
    let epsilon = exp.settings.f64_of("epsilon")?;
    if gamma > 0.0 {
        let mut params = exp.params(mu, order, vec![y0])?;
        params.horizon_mode = HorizonMode::Explicit(horizon);
        return bounds::theorem1_bound(&exp.cert, h, &params);
    }
    if matches!(exp.noise.class(), NoiseClass::Damped { .. }) {
        return bounds::theorem2_bound(&exp.cert, &exp.noise, mu, epsilon, &[y0]);
    }
    if order != 1 {
        return Err(Error::ZeroDecayRate(format!(
            "N = {order} needs gamma > 0; with gamma = 0 and bounded noise only the N = 1 \
             advisory bound on a capped horizon is available"
        )));
    }
    bounds::remark2_bound(&exp.cert, h, mu, epsilon, &[y0], horizon)
}

fn sweep_rows(exp: &Experiment) -> Result<Vec<BoundReport>> {
    let grid = sweep_grid(exp)?;
    let h = exp.noise_bound()?;
    let epsilon = exp.settings.f64_of("epsilon")?;
    let mut rows = Vec::new();
    for &mu in &grid.mus {
        for &order in &grid.orders {
            for &y0 in &grid.y0s {
                let dt = exp.dt(epsilon, mu)?;
                let horizon = capped_horizon(exp, mu, order, dt)?;
                rows.push(bound_for_cell(exp, h, mu, order, y0, horizon)?);
            }
        }
    }
    Ok(rows)
}

fn cmd_sweep(exp: &Experiment) -> Result<i32> {
    let rows = sweep_rows(exp)?;
    let mut csv = String::from(BoundReport::CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.to_csv_row());
        csv.push('\n');
    }
    write_output(&exp.settings, &csv)?;
    Ok(0)
}

fn cmd_compare(exp: &Experiment) -> Result<i32> {
    let grid = sweep_grid(exp)?;
    let h = exp.noise_bound()?;
    let epsilon = exp.settings.f64_of("epsilon")?;
    let n = exp.settings.u64_of("trajectories")?;
    let level = exp.settings.f64_of("ci-level")?;
    let mut rows = Vec::new();
    let mut all_dominated = true;
    let mut combo: u64 = 0;
    for &mu in &grid.mus {
        for &order in &grid.orders {
            for &y0 in &grid.y0s {
                let dt = exp.dt(epsilon, mu)?;
                let horizon = capped_horizon(exp, mu, order, dt)?;
                let report = bound_for_cell(exp, h, mu, order, y0, horizon)?;
                let mut config = exp.integrator_config(epsilon, mu)?;
                config.dt = dt;
                // Disjoint index ranges decorrelate cells under one seed.
                config.trajectory_index = combo * n;
                combo += 1;
                let est = montecarlo::estimate_exit_probability(
                    &exp.preset.system,
                    &exp.noise,
                    mu,
                    &[y0],
                    epsilon,
                    horizon,
                    n,
                    level,
                    &config,
                )?;
                let cmp = montecarlo::compare_bound(&est, &report)?;
                all_dominated &= cmp.dominated;
                rows.push(CompareRow {
                    report,
                    p_hat: est.p_hat,
                    ci_low: est.ci_low,
                    ci_high: est.ci_high,
                    n: est.n_trajectories,
                    dominated: cmp.dominated,
                });
            }
        }
    }
    let mut csv = String::from(CompareRow::CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.to_csv_row());
        csv.push('\n');
    }
    write_output(&exp.settings, &csv)?;
    if !all_dominated {
        eprintln!("comparison failure: at least one bound does not dominate its estimate");
    }
    Ok(if all_dominated { 0 } else { 1 })
}

fn cmd_escape_demo(exp: &Experiment) -> Result<i32> {
    let mu = exp.settings.f64_of("mu")?;
    let order = exp.settings.u32_of("order")?;
    let epsilon = exp.settings.f64_of("epsilon")?;
    let y0 = exp.y0()?;
    let horizon = exp.resolved_horizon(mu, order)?;
    let config = exp.integrator_config(epsilon, mu)?;
    let n = exp.settings.u64_of("demo.trajectories")?;
    let mut exits = 0u64;
    let mut lines = String::from("trajectory,exited,stop_time,final_norm,sup_norm\n");
    for i in 0..n {
        let mut cfg = config.clone();
        cfg.trajectory_index = i;
        let traj = simulate::run_stopped_trajectory(
            &exp.preset.system,
            &exp.noise,
            mu,
            &y0,
            epsilon,
            horizon,
            &cfg,
        )?;
        exits += traj.exited() as u64;
        lines.push_str(&format!(
            "{i},{},{},{},{}\n",
            traj.exited(),
            traj.stop_time,
            crate::mat::norm(&traj.final_state),
            traj.sup_norm_observed
        ));
    }
    println!(
        "escape demo: {exits}/{n} trajectories left the ball of radius {epsilon} before T = {horizon}"
    );
    println!(
        "under persistent noise every bounded domain is eventually left; the bounds above only \
         hold on finite horizons"
    );
    if exp.settings.is_set("out") {
        write_output(&exp.settings, &lines)?;
    }
    Ok(0)
}

/// Parses `argv` and runs the requested subcommand, returning the process
/// exit code (0 success, 1 verification/comparison failure, 2 configuration
/// error).
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let args = match &cli.cmd {
        Cmd::Defaults => {
            print!("{}", reference_page());
            return 0;
        }
        Cmd::Certify(a)
        | Cmd::Bound(a)
        | Cmd::Simulate(a)
        | Cmd::Sweep(a)
        | Cmd::Compare(a)
        | Cmd::EscapeDemo(a) => a,
    };
    let outcome = (|| -> Result<i32> {
        let settings = args.settings()?;
        init_workers(&settings)?;
        let exp = Experiment::resolve(settings)?;
        match &cli.cmd {
            Cmd::Certify(_) => cmd_certify(&exp),
            Cmd::Bound(_) => cmd_bound(&exp),
            Cmd::Simulate(_) => cmd_simulate(&exp),
            Cmd::Sweep(_) => cmd_sweep(&exp),
            Cmd::Compare(_) => cmd_compare(&exp),
            Cmd::EscapeDemo(_) => cmd_escape_demo(&exp),
            Cmd::Defaults => unreachable!(),
        }
    })();
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::Regime;

    #[test]
    fn compare_row_round_trips() {
        let report = BoundReport {
            mu: 0.1,
            order: 2,
            kappa: Some(0.5),
            epsilon: 0.3,
            nu: Some(0.1),
            y0_norm: 0.05,
            horizon: 100.0,
            v_initial: 0.064,
            bound: 1.0,
            delta: Some(0.0670820393),
            delta_cap: Some(2.025e-5),
            regime: Regime::Theorem1,
        };
        let row = CompareRow {
            report,
            p_hat: 0.01,
            ci_low: 0.005,
            ci_high: 0.02,
            n: 10_000,
            dominated: true,
        };
        let parsed = CompareRow::from_csv_row(&row.to_csv_row()).unwrap();
        assert_eq!(row, parsed);
    }

    #[test]
    fn settings_flags_override_defaults() {
        let args = CommonArgs { mu: Some(0.25), ..Default::default() };
        let s = args.settings().unwrap();
        assert_eq!(s.f64_of("mu").unwrap(), 0.25);
        assert_eq!(s.f64_of("kappa").unwrap(), 0.5);
    }
}
