//! Batch estimation of exit probabilities with Wilson confidence intervals,
//! supermartingale path testing, and bound-versus-empirical comparison.
//!
//! Work is partitioned by trajectory index; every trajectory is a pure
//! function of `(seed, index)`, and all reductions are order independent, so
//! results are identical for any worker count under the same master seed.

use rayon::prelude::*;

use crate::bounds::{BoundReport, PerturbedLyapunov};
use crate::model::{DynamicalSystem, NoiseModel};
use crate::simulate::{run_with_checkpoints, IntegratorConfig, TimedState, TrajectoryStatus};
use crate::special::probit;
use crate::{Error, Result};

/// Parameters a batch was run with, carried along so comparisons can detect
/// mismatched experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunKey {
    pub mu: f64,
    pub epsilon: f64,
    pub horizon: f64,
    pub y0_norm: f64,
}

impl RunKey {
    fn matches(&self, other: &RunKey) -> bool {
        fn close(a: f64, b: f64) -> bool {
            (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
        }
        close(self.mu, other.mu)
            && close(self.epsilon, other.epsilon)
            && close(self.horizon, other.horizon)
            && close(self.y0_norm, other.y0_norm)
    }
}

/// Mergeable tally of a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExitCounts {
    pub n: u64,
    pub exited: u64,
    pub aborted: u64,
}

impl ExitCounts {
    pub fn merge(self, other: ExitCounts) -> ExitCounts {
        ExitCounts {
            n: self.n + other.n,
            exited: self.exited + other.exited,
            aborted: self.aborted + other.aborted,
        }
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, level: f64) -> (f64, f64) {
    assert!(trials > 0, "empty sample");
    assert!(0.0 < level && level < 1.0, "level must lie in (0,1)");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = probit(0.5 + level / 2.0);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Exit-probability estimate over a batch of stopped trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub n_trajectories: u64,
    pub n_exited: u64,
    pub aborted: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Confidence level of the interval (default 0.99).
    pub level: f64,
    /// More than 1% of trajectories aborted; treat the estimate with care.
    pub unreliable: bool,
    pub run: RunKey,
}

impl McEstimate {
    pub fn from_counts(counts: ExitCounts, level: f64, run: RunKey) -> Self {
        let (ci_low, ci_high) = wilson_interval(counts.exited, counts.n, level);
        McEstimate {
            n_trajectories: counts.n,
            n_exited: counts.exited,
            aborted: counts.aborted,
            p_hat: counts.exited as f64 / counts.n as f64,
            ci_low,
            ci_high,
            level,
            unreliable: counts.aborted * 100 > counts.n,
            run,
        }
    }

    pub fn counts(&self) -> ExitCounts {
        ExitCounts { n: self.n_trajectories, exited: self.n_exited, aborted: self.aborted }
    }

    /// Merges two half-batches of the same run into the full-batch estimate.
    pub fn merge(&self, other: &McEstimate) -> Result<McEstimate> {
        if !self.run.matches(&other.run) || self.level != other.level {
            return Err(Error::Config("cannot merge estimates from different runs".into()));
        }
        Ok(McEstimate::from_counts(self.counts().merge(other.counts()), self.level, self.run))
    }

    pub const CSV_HEADER: &'static str =
        "mu,epsilon,T,y0_norm,n,exited,aborted,p_hat,ci_low,ci_high,level";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.run.mu,
            self.run.epsilon,
            self.run.horizon,
            self.run.y0_norm,
            self.n_trajectories,
            self.n_exited,
            self.aborted,
            self.p_hat,
            self.ci_low,
            self.ci_high,
            self.level
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 11 {
            return Err(Error::Config(format!(
                "expected 11 fields in an estimate row, got {}",
                f.len()
            )));
        }
        let num = |s: &str, name: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Config(format!("bad {name} field '{s}'")))
        };
        let int = |s: &str, name: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::Config(format!("bad {name} field '{s}'")))
        };
        let counts =
            ExitCounts { n: int(f[4], "n")?, exited: int(f[5], "exited")?, aborted: int(f[6], "aborted")? };
        let run = RunKey {
            mu: num(f[0], "mu")?,
            epsilon: num(f[1], "epsilon")?,
            horizon: num(f[2], "T")?,
            y0_norm: num(f[3], "y0_norm")?,
        };
        let est = McEstimate::from_counts(counts, num(f[10], "level")?, run);
        // The derived fields are recomputed; check they match what was written.
        for (got, field, name) in
            [(est.p_hat, f[7], "p_hat"), (est.ci_low, f[8], "ci_low"), (est.ci_high, f[9], "ci_high")]
        {
            let want = num(field, name)?;
            if (got - want).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "inconsistent {name} in estimate row: recomputed {got}, stored {want}"
                )));
            }
        }
        Ok(est)
    }
}

/// Runs `n_trajectories` stopped trajectories with indices
/// `first_index .. first_index + n` and tallies exits.
#[allow(clippy::too_many_arguments)]
pub fn exit_counts_range(
    system: &DynamicalSystem,
    noise: &NoiseModel,
    mu: f64,
    y0: &[f64],
    epsilon: f64,
    horizon: f64,
    first_index: u64,
    n_trajectories: u64,
    config: &IntegratorConfig,
) -> Result<ExitCounts> {
    let counts: Vec<ExitCounts> = (0..n_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut cfg = config.clone();
            cfg.trajectory_index = first_index + i;
            cfg.path_stride = None;
            let traj = crate::simulate::run_stopped_trajectory(
                system, noise, mu, y0, epsilon, horizon, &cfg,
            )?;
            Ok(ExitCounts {
                n: 1,
                exited: traj.exited() as u64,
                aborted: (traj.status == TrajectoryStatus::Aborted) as u64,
            })
        })
        .collect::<Result<_>>()?;
    Ok(counts.into_iter().fold(ExitCounts::default(), ExitCounts::merge))
}

/// Estimates `P(sup_{[0,T]} |y(t)| >= epsilon)` over independent stopped
/// trajectories, with a Wilson interval at the given level.
#[allow(clippy::too_many_arguments)]
pub fn estimate_exit_probability(
    system: &DynamicalSystem,
    noise: &NoiseModel,
    mu: f64,
    y0: &[f64],
    epsilon: f64,
    horizon: f64,
    n_trajectories: u64,
    level: f64,
    config: &IntegratorConfig,
) -> Result<McEstimate> {
    if n_trajectories < 100 {
        return Err(Error::Config(format!(
            "need at least 100 trajectories for an estimate, got {n_trajectories}"
        )));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Config(format!("confidence level must lie in (0,1), got {level}")));
    }
    let counts = exit_counts_range(
        system,
        noise,
        mu,
        y0,
        epsilon,
        horizon,
        config.trajectory_index,
        n_trajectories,
        config,
    )?;
    let run = RunKey { mu, epsilon, horizon, y0_norm: crate::mat::norm(y0) };
    Ok(McEstimate::from_counts(counts, level, run))
}

/// Stopped states sampled at fixed checkpoint times across a batch.
#[derive(Debug, Clone)]
pub struct CheckpointBatch {
    pub checkpoints: Vec<f64>,
    /// One row per (non-aborted) trajectory: `(s_t, y(s_t))` per checkpoint.
    pub rows: Vec<Vec<TimedState>>,
    pub aborted: u64,
}

/// Simulates a batch with checkpoint sampling (see
/// [`run_with_checkpoints`]); aborted trajectories are dropped and counted.
#[allow(clippy::too_many_arguments)]
pub fn sample_checkpoint_states(
    system: &DynamicalSystem,
    noise: &NoiseModel,
    mu: f64,
    y0: &[f64],
    epsilon: f64,
    horizon: f64,
    n_trajectories: u64,
    config: &IntegratorConfig,
    checkpoints: &[f64],
) -> Result<CheckpointBatch> {
    if checkpoints.is_empty() {
        return Err(Error::Config("need at least one checkpoint".into()));
    }
    let results: Vec<Option<Vec<TimedState>>> = (0..n_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut cfg = config.clone();
            cfg.trajectory_index = config.trajectory_index + i;
            cfg.path_stride = None;
            let (traj, recorded) = run_with_checkpoints(
                system, noise, mu, y0, epsilon, horizon, &cfg, checkpoints,
            )?;
            Ok((traj.status != TrajectoryStatus::Aborted).then_some(recorded))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(results.len());
    let mut aborted = 0;
    for r in results {
        match r {
            Some(row) => rows.push(row),
            None => aborted += 1,
        }
    }
    Ok(CheckpointBatch { checkpoints: checkpoints.to_vec(), rows, aborted })
}

/// Verdict of the supermartingale test: sample means of
/// `V_N(y(s_t), s_t; T)` across checkpoints must be nonincreasing within
/// confidence-interval slack.
#[derive(Debug, Clone)]
pub struct SupermartingaleReport {
    pub verdict: bool,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Fewer than 1000 trajectories: the test has little power.
    pub underpowered: bool,
}

/// CI slack multiplier: means may rise by up to `3 * (se_i + se_{i+1})`
/// before the verdict flips, absorbing multiple comparisons at desk-scale
/// batch sizes.
const SUPERMARTINGALE_SLACK: f64 = 3.0;

pub fn supermartingale_test(
    pl: &PerturbedLyapunov,
    batch: &CheckpointBatch,
) -> Result<SupermartingaleReport> {
    if batch.rows.is_empty() {
        return Err(Error::Config("batch holds no usable trajectories".into()));
    }
    let k = batch.checkpoints.len();
    if !batch.checkpoints.windows(2).all(|w| w[0] <= w[1]) {
        return Err(Error::Config("checkpoints must be ascending".into()));
    }
    if batch.checkpoints.iter().any(|&c| c < 0.0 || c > pl.horizon() * (1.0 + 1e-12)) {
        return Err(Error::Config("checkpoints must lie in [0, T]".into()));
    }
    let n = batch.rows.len();
    let mut means = vec![0.0; k];
    let mut std_errors = vec![0.0; k];
    for j in 0..k {
        let mut values = Vec::with_capacity(n);
        for row in &batch.rows {
            let (s_t, state) = &row[j];
            values.push(pl.value(state, *s_t)?);
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (n.saturating_sub(1).max(1)) as f64;
        means[j] = mean;
        std_errors[j] = (var / n as f64).sqrt();
    }
    let verdict = (0..k.saturating_sub(1)).all(|j| {
        means[j + 1] <= means[j] + SUPERMARTINGALE_SLACK * (std_errors[j] + std_errors[j + 1])
    });
    Ok(SupermartingaleReport { verdict, means, std_errors, underpowered: n < 1000 })
}

/// Does the theoretical bound dominate the empirical estimate?
#[derive(Debug, Clone, Copy)]
pub struct BoundComparison {
    /// `ci_low <= bound`: the bound is consistent with the data.
    pub dominated: bool,
    /// `bound - p_hat`.
    pub margin: f64,
}

/// Compares an empirical estimate with a theoretical bound computed for the
/// same parameters (an infinite-horizon bound accepts any finite empirical
/// horizon).
pub fn compare_bound(empirical: &McEstimate, report: &BoundReport) -> Result<BoundComparison> {
    let want = RunKey {
        mu: report.mu,
        epsilon: report.epsilon,
        horizon: if report.horizon.is_infinite() {
            empirical.run.horizon
        } else {
            report.horizon
        },
        y0_norm: report.y0_norm,
    };
    if !empirical.run.matches(&want) {
        return Err(Error::Config(format!(
            "estimate parameters {:?} do not match the bound report (mu={}, eps={}, T={}, |y0|={})",
            empirical.run, report.mu, report.epsilon, report.horizon, report.y0_norm
        )));
    }
    Ok(BoundComparison {
        dominated: empirical.ci_low <= report.bound,
        margin: report.bound - empirical.p_hat,
    })
}
