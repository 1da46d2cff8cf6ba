//! Property tests for the structural invariants: diffusion matrices are
//! PSD, the perturbed construction dominates the certificate power, the
//! supremum law scales like Brownian motion, and report rows survive CSV
//! round trips.

use std::sync::Arc;

use proptest::prelude::*;

use perlyap::bounds::{BoundReport, PerturbedLyapunov, Regime};
use perlyap::certify::{estimate_h, SamplingPlan};
use perlyap::mat::Matrix;
use perlyap::model::{CertConstants, LyapunovCertificate, NoiseClass, NoiseModel, NoiseShape};
use perlyap::montecarlo::wilson_interval;
use perlyap::oracles::brownian_sup_prob;

fn quad_cert(decay_rate: f64) -> LyapunovCertificate {
    LyapunovCertificate::new(
        1,
        Arc::new(|x: &[f64], _t| x[0] * x[0]),
        CertConstants {
            quad_upper: 1.0,
            grad_bound: 4.0,
            hess_bound: 2.0,
            decay_rate,
            radius: 1.0,
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// sigma = G G^T / 2 is positive semidefinite at every evaluation point.
    #[test]
    fn sigma_is_positive_semidefinite(
        rows in 1usize..5,
        cols in 1usize..5,
        entries in proptest::collection::vec(-3.0f64..3.0, 16),
        y in proptest::collection::vec(-2.0f64..2.0, 4),
        t in 0.0f64..10.0,
    ) {
        let e = entries.clone();
        let (r, c) = (rows, cols);
        let noise = NoiseModel::new(
            rows,
            cols,
            NoiseShape::General,
            NoiseClass::UniformlyBounded { h: 100.0 },
            Arc::new(move |_y, _t, out: &mut Matrix| {
                for i in 0..r {
                    for j in 0..c {
                        out.set(i, j, e[i * 4 + j]);
                    }
                }
            }),
        ).unwrap();
        let sigma = noise.eval_sigma(&y[..rows], t).unwrap();
        prop_assert!(sigma.is_psd_within(1e-10));
        // Exactly symmetric by construction.
        for i in 0..rows {
            for j in 0..rows {
                prop_assert_eq!(sigma.get(i, j), sigma.get(j, i));
            }
        }
    }

    /// V_N >= V^N >= 0 for every state, time and parameter draw.
    #[test]
    fn construction_dominates_power(
        order in 1u32..6,
        x in -0.999f64..0.999,
        mu in 0.0f64..0.95,
        h in 0.0f64..2.0,
        decay in 0.05f64..3.0,
        horizon in 0.1f64..200.0,
        t_frac in 0.0f64..1.0,
    ) {
        let pl = PerturbedLyapunov::new(quad_cert(decay), order, h, mu, horizon).unwrap();
        let t = t_frac * horizon;
        let vn = pl.value(&[x], t).unwrap();
        let vpow = (x * x).powi(order as i32);
        prop_assert!(vn >= vpow - 1e-15);
        prop_assert!(vn >= 0.0);
    }

    /// Brownian scaling: sup over [0, T/s] of |w| >= c/sqrt(s) has the same
    /// probability.
    #[test]
    fn supremum_law_scales(
        c in 0.2f64..4.0,
        t in 0.1f64..50.0,
        s in 0.05f64..20.0,
    ) {
        let a = brownian_sup_prob(c, t, 1e-14).unwrap().value;
        let b = brownian_sup_prob(c / s.sqrt(), t / s, 1e-14).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-30).max(b.abs()));
    }

    /// Wilson intervals are ordered and clipped to [0, 1].
    #[test]
    fn wilson_interval_is_ordered(k_frac in 0.0f64..=1.0, n in 1u64..10_000, level in 0.5f64..0.999) {
        let k = ((n as f64) * k_frac).round() as u64;
        let k = k.min(n);
        let (lo, hi) = wilson_interval(k, n, level);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }

    /// Enlarging the sampled ball never decreases the diffusion-bound
    /// estimate.
    #[test]
    fn estimate_h_monotone_in_radius(a in -2.0f64..2.0, b in -2.0f64..2.0, r1 in 0.05f64..1.0, grow in 1.0f64..4.0) {
        let noise = NoiseModel::new(
            1,
            1,
            NoiseShape::Scalar,
            NoiseClass::UniformlyBounded { h: 100.0 },
            Arc::new(move |y: &[f64], _t, out: &mut Matrix| out.set(0, 0, a + b * y[0])),
        ).unwrap();
        let plan = SamplingPlan::for_noise(1);
        let h1 = estimate_h(&noise, r1, &plan);
        let h2 = estimate_h(&noise, r1 * grow, &plan);
        prop_assert!(h2 >= h1 - 1e-12);
    }

    /// Bound-report CSV rows are lossless.
    #[test]
    fn bound_report_round_trips(
        mu in 1e-6f64..0.99,
        order in 1u32..6,
        kappa in proptest::option::of(1e-3f64..0.999),
        epsilon in 1e-3f64..1.0,
        nu in proptest::option::of(1e-3f64..0.999),
        y0 in 0.0f64..0.5,
        horizon in 0.1f64..1e9,
        v in 0.0f64..10.0,
        bound_frac in 0.0f64..=1.0,
        delta in proptest::option::of(1e-9f64..1.0),
    ) {
        let report = BoundReport {
            mu,
            order,
            kappa,
            epsilon,
            nu,
            y0_norm: y0,
            horizon,
            v_initial: v,
            bound: bound_frac,
            delta,
            delta_cap: delta.map(|d| d / 2.0),
            regime: Regime::Theorem1,
        };
        let parsed = BoundReport::from_csv_row(&report.to_csv_row()).unwrap();
        prop_assert_eq!(report, parsed);
    }
}
