//! Exercises the C ABI from Rust: handle lifecycles, status codes, error
//! messages, callback-backed systems, and agreement with the core library.
//! A final test compiles and runs a small C program against the generated
//! header and the static library.

use std::ffi::c_void;
use std::ptr;

use approx::assert_relative_eq;

use perlyap_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0u8; 512];
    let n = unsafe { perlyap_last_error_message(buf.as_mut_ptr().cast(), buf.len()) };
    buf.truncate(n.min(511));
    String::from_utf8(buf).unwrap()
}

#[test]
fn oracle_functions_match_library_values() {
    let mut series = PerlyapSeries { value: 0.0, terms_used: 0, truncation_error_estimate: 0.0 };
    let status = unsafe { perlyap_brownian_sup_prob(3.0, 10.0, 1e-12, &mut series) };
    assert_eq!(status, PerlyapStatus::Ok);
    assert_relative_eq!(series.value, 0.676_714_573_389_491, max_relative = 1e-12);

    let mut threshold = 0.0;
    let status = unsafe { perlyap_example1_threshold(1.0, 0.1, 0.5, &mut threshold) };
    assert_eq!(status, PerlyapStatus::Ok);
    assert_relative_eq!(threshold, 5.594_839_541_155_953e-3, max_relative = 1e-12);

    let (mut mean, mut var) = (0.0, 0.0);
    let status = unsafe { perlyap_ou_moments(1.0, 0.1, 1.0, 1.0, &mut mean, &mut var) };
    assert_eq!(status, PerlyapStatus::Ok);
    assert_relative_eq!(mean, (-1f64).exp(), max_relative = 1e-14);

    // Domain error carries a message.
    let status = unsafe { perlyap_example1_threshold(1.0, 5.0, 0.5, &mut threshold) };
    assert_eq!(status, PerlyapStatus::DomainError);
    assert!(last_error().contains("nu"), "{}", last_error());
}

#[test]
fn null_pointers_are_rejected() {
    let status = unsafe { perlyap_brownian_sup_prob(1.0, 1.0, 1e-12, ptr::null_mut()) };
    assert_eq!(status, PerlyapStatus::NullPointer);
    assert!(last_error().contains("null pointer"));
    let status = unsafe { perlyap_system_pure_noise(ptr::null_mut()) };
    assert_eq!(status, PerlyapStatus::NullPointer);
}

#[test]
fn certificate_and_bounds_through_the_abi() {
    unsafe {
        let mut system = ptr::null_mut();
        assert_eq!(perlyap_system_cubic_bistable(&mut system), PerlyapStatus::Ok);
        let mut cert = ptr::null_mut();
        let r0 = 1.0 / 3f64.sqrt();
        assert_eq!(
            perlyap_certificate_quadratic(1.0, 4.0, 2.0, 1.0, r0, &mut cert),
            PerlyapStatus::Ok
        );

        let mut summary = PerlyapCertSummary {
            passed: false,
            sandwich_margin: 0.0,
            gradient_margin: 0.0,
            hessian_margin: 0.0,
            decay_margin: 0.0,
            sampled_points: 0,
            violations: 0,
        };
        assert_eq!(perlyap_verify_certificate(cert, system, &mut summary), PerlyapStatus::Ok);
        assert!(summary.passed);
        assert_eq!(summary.violations, 0);

        let mut noise = ptr::null_mut();
        assert_eq!(perlyap_noise_scalar(1.0, &mut noise), PerlyapStatus::Ok);
        let mut h = 0.0;
        assert_eq!(perlyap_estimate_h(noise, r0, &mut h), PerlyapStatus::Ok);
        assert_relative_eq!(h, 0.5, max_relative = 1e-12);

        let y0 = [0.05f64];
        let mut bound = std::mem::zeroed::<PerlyapBound>();
        assert_eq!(
            perlyap_theorem1_bound(cert, h, 0.1, 1, 0.5, 0.3, 0.1, y0.as_ptr(), 1, &mut bound),
            PerlyapStatus::Ok
        );
        assert_relative_eq!(bound.v_initial, 0.318_727_766_016_837_93, max_relative = 1e-12);
        assert_eq!(bound.bound, 1.0);
        assert_eq!(bound.regime, PerlyapRegime::Theorem1);
        assert_relative_eq!(bound.delta, 0.067_082_039_324_993_7, max_relative = 1e-6);

        // gamma = 0 certificate routes theorem1 to a config error.
        let mut flat_cert = ptr::null_mut();
        assert_eq!(
            perlyap_certificate_quadratic(1.0, 4.0, 2.0, 0.0, 1.0, &mut flat_cert),
            PerlyapStatus::Ok
        );
        assert_eq!(
            perlyap_theorem1_bound(flat_cert, h, 0.1, 1, 0.5, 0.3, 0.1, y0.as_ptr(), 1, &mut bound),
            PerlyapStatus::ConfigError
        );
        assert!(last_error().contains("gamma"));

        // Damped noise powers the uniform-in-time bound.
        let mut damped = ptr::null_mut();
        assert_eq!(perlyap_noise_damped_exp(1.0, 2f64.sqrt(), &mut damped), PerlyapStatus::Ok);
        assert_eq!(
            perlyap_theorem2_bound(flat_cert, damped, 0.1, 0.3, y0.as_ptr(), 1, &mut bound),
            PerlyapStatus::Ok
        );
        assert_relative_eq!(bound.bound, 0.25, max_relative = 1e-12);
        assert!(bound.horizon.is_infinite());
        assert_eq!(bound.regime, PerlyapRegime::Theorem2);

        let (mut delta, mut cap) = (0.0, 0.0);
        assert_eq!(
            perlyap_admissible_region(cert, 0.5, 1, 0.3, 0.1, 0.5, &mut delta, &mut cap),
            PerlyapStatus::Ok
        );
        assert_relative_eq!(delta, 0.067_082_039_324_993_7, max_relative = 1e-6);
        assert_relative_eq!(cap, 2.025e-5, max_relative = 1e-6);

        perlyap_noise_free(damped);
        perlyap_noise_free(noise);
        perlyap_certificate_free(flat_cert);
        perlyap_certificate_free(cert);
        perlyap_system_free(system);
    }
}

unsafe extern "C" fn linear_drift(x: *const f64, dim: usize, _t: f64, out: *mut f64, ctx: *mut c_void) {
    let theta = unsafe { *ctx.cast::<f64>() };
    for i in 0..dim {
        unsafe { *out.add(i) = -theta * *x.add(i) };
    }
}

#[test]
fn callback_system_simulates_deterministically() {
    unsafe {
        let mut theta = 1.0f64;
        let mut system = ptr::null_mut();
        assert_eq!(
            perlyap_system_custom(
                1,
                Some(linear_drift),
                (&mut theta as *mut f64).cast(),
                1.0,
                1.0,
                &mut system,
            ),
            PerlyapStatus::Ok
        );
        let mut noise = ptr::null_mut();
        assert_eq!(perlyap_noise_scalar(1.0, &mut noise), PerlyapStatus::Ok);
        let config =
            PerlyapSimConfig { dt: 1e-3, bridge_correction: true, max_steps: 10_000, seed: 7 };
        let mut est = std::mem::zeroed::<PerlyapEstimate>();
        let y0 = [0.0f64];
        assert_eq!(
            perlyap_estimate_exit_probability(
                system,
                noise,
                0.1,
                y0.as_ptr(),
                1,
                0.3,
                5.0,
                500,
                0.99,
                &config,
                &mut est,
            ),
            PerlyapStatus::Ok
        );
        assert_eq!(est.n_trajectories, 500);
        assert!(est.ci_low <= est.p_hat && est.p_hat <= est.ci_high);
        // Stationary sd is mu/sqrt(2) = 0.07; exits past 0.3 are rare.
        assert!(est.p_hat < 0.05, "p_hat = {}", est.p_hat);
        let mut est2 = std::mem::zeroed::<PerlyapEstimate>();
        assert_eq!(
            perlyap_estimate_exit_probability(
                system,
                noise,
                0.1,
                y0.as_ptr(),
                1,
                0.3,
                5.0,
                500,
                0.99,
                &config,
                &mut est2,
            ),
            PerlyapStatus::Ok
        );
        assert_eq!(est.p_hat, est2.p_hat, "same seed must reproduce");

        // A drift that does not vanish at the origin is rejected.
        unsafe extern "C" fn biased(
            _x: *const f64,
            dim: usize,
            _t: f64,
            out: *mut f64,
            _ctx: *mut c_void,
        ) {
            for i in 0..dim {
                unsafe { *out.add(i) = 1.0 };
            }
        }
        let mut bad = ptr::null_mut();
        assert_eq!(
            perlyap_system_custom(1, Some(biased), ptr::null_mut(), 1.0, 1.0, &mut bad),
            PerlyapStatus::ConfigError
        );

        perlyap_noise_free(noise);
        perlyap_system_free(system);
    }
}

/// Compiles and runs a small C program against the generated header and the
/// freshly built static library.
#[test]
fn c_program_links_against_the_header() {
    let manifest = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    if !include.join("perlyap.h").exists() {
        panic!("header missing; build.rs should have generated include/perlyap.h");
    }
    // The static library lands next to this test's own artifacts.
    let mut lib_dir = std::env::current_exe().unwrap();
    lib_dir.pop(); // test binary
    lib_dir.pop(); // deps/
    let lib = lib_dir.join("libperlyap_ffi.a");
    if !lib.exists() {
        panic!("static library not found at {}", lib.display());
    }
    let cc = ["cc", "gcc", "clang"]
        .iter()
        .find(|c| {
            std::process::Command::new(c)
                .arg("--version")
                .output()
                .is_ok_and(|o| o.status.success())
        })
        .copied();
    let Some(cc) = cc else {
        // No C compiler in this environment; the ABI is still covered by the
        // Rust-side tests above.
        eprintln!("skipping: no C compiler found");
        return;
    };

    let dir = std::env::temp_dir().join(format!("perlyap-capi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <math.h>
#include "perlyap.h"

int main(void) {
    PerlyapSeries series;
    if (perlyap_brownian_sup_prob(3.0, 10.0, 1e-12, &series) != PerlyapStatus_Ok) return 1;
    if (fabs(series.value - 0.676714573389491) > 1e-9) return 2;

    PerlyapSystem *system = NULL;
    PerlyapNoise *noise = NULL;
    PerlyapCertificate *cert = NULL;
    if (perlyap_system_cubic_bistable(&system) != PerlyapStatus_Ok) return 3;
    if (perlyap_noise_scalar(1.0, &noise) != PerlyapStatus_Ok) return 4;
    if (perlyap_certificate_quadratic(1.0, 4.0, 2.0, 1.0, 0.5773502691896258, &cert)
        != PerlyapStatus_Ok) return 5;

    PerlyapCertSummary summary;
    if (perlyap_verify_certificate(cert, system, &summary) != PerlyapStatus_Ok) return 6;
    if (!summary.passed) return 7;

    double y0 = 0.05;
    PerlyapBound bound;
    if (perlyap_theorem1_bound(cert, 0.5, 0.1, 1, 0.5, 0.3, 0.1, &y0, 1, &bound)
        != PerlyapStatus_Ok) return 8;
    if (bound.regime != PerlyapRegime_Theorem1) return 9;
    if (fabs(bound.bound - 1.0) > 1e-12) return 10;

    char msg[256];
    if (perlyap_theorem1_bound(NULL, 0.5, 0.1, 1, 0.5, 0.3, 0.1, &y0, 1, &bound)
        != PerlyapStatus_NullPointer) return 11;
    size_t len = perlyap_last_error_message(msg, sizeof msg);
    if (len == 0) return 12;

    perlyap_certificate_free(cert);
    perlyap_noise_free(noise);
    perlyap_system_free(system);
    printf("ok\n");
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.join("smoke");
    let compile = std::process::Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .expect("compiler runs");
    assert!(
        compile.status.success(),
        "C compile failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = std::process::Command::new(&exe).output().expect("smoke test runs");
    assert!(
        run.status.success(),
        "smoke test exited with {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stdout)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
    let _ = std::fs::remove_dir_all(&dir);
}
