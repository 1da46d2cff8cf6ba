//! Flat key-value experiment configuration.
//!
//! Config files are plain text: one `key = value` per line, `#` comments,
//! dotted section prefixes (`integrator.dt = 0.01`). Every key is declared
//! in [`KEYS`] with its default and description; unknown keys are an error
//! that lists the offenders rather than being silently ignored. Flags
//! override file values, which override defaults.

use std::collections::BTreeMap;

use crate::{Error, Result};

pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub description: &'static str,
}

/// The full key registry: defaults documented here drive `--help` and the
/// `defaults` subcommand.
pub const KEYS: &[KeySpec] = &[
    KeySpec { key: "system", default: "cubic-bistable",
        description: "builtin system: pure-noise | cubic-bistable | linear-ou" },
    KeySpec { key: "system.theta", default: "1.0",
        description: "mean-reversion rate for linear-ou" },
    KeySpec { key: "noise", default: "unit",
        description: "noise model: unit | scaled | damped-exp" },
    KeySpec { key: "noise.scale", default: "1.0",
        description: "scalar multiplier applied to G" },
    KeySpec { key: "noise.rate", default: "1.0",
        description: "decay rate of damped-exp noise (G = scale * e^(-rate t / 2))" },
    KeySpec { key: "cert.quad-upper", default: "",
        description: "override certificate constant A (default: preset value)" },
    KeySpec { key: "cert.grad-bound", default: "",
        description: "override certificate constant B" },
    KeySpec { key: "cert.hess-bound", default: "",
        description: "override certificate constant C" },
    KeySpec { key: "cert.decay-rate", default: "",
        description: "override certificate decay rate gamma" },
    KeySpec { key: "cert.radius", default: "",
        description: "override certificate radius r0" },
    KeySpec { key: "h", default: "",
        description: "diffusion bound h (default: estimated from samples over the certified ball)" },
    KeySpec { key: "mu", default: "0.1", description: "noise intensity, in (0,1)" },
    KeySpec { key: "order", default: "1", description: "construction order N >= 1" },
    KeySpec { key: "kappa", default: "0.5", description: "horizon exponent offset, in (0,1)" },
    KeySpec { key: "epsilon", default: "0.3", description: "exit-ball radius, must be <= r0" },
    KeySpec { key: "nu", default: "0.1", description: "target exit probability, in (0,1)" },
    KeySpec { key: "y0", default: "0.05", description: "initial state (comma-separated coordinates)" },
    KeySpec { key: "horizon", default: "theorem1",
        description: "theorem1 (T = mu^(-2N+kappa)) | remark1 (T = mu^(-2N) lambda(|y0|)) | explicit T value" },
    KeySpec { key: "lambda", default: "identity",
        description: "remark1 scaling: identity | sqrt | square" },
    KeySpec { key: "integrator.dt", default: "auto",
        description: "step size; auto = min(1e-2, eps^2 / (100 mu^2))" },
    KeySpec { key: "integrator.bridge", default: "true",
        description: "Brownian-bridge exit correction between steps" },
    KeySpec { key: "integrator.max-steps", default: "10000000",
        description: "hard cap on steps per trajectory (dt * max-steps must cover T)" },
    KeySpec { key: "path.stride", default: "0",
        description: "record every k-th grid point for path dumps (0 = off)" },
    KeySpec { key: "trajectories", default: "10000", description: "Monte Carlo batch size" },
    KeySpec { key: "ci-level", default: "0.99", description: "Wilson confidence level" },
    KeySpec { key: "checkpoints", default: "",
        description: "supermartingale checkpoint times (comma-separated; empty = 0,T/4,..,T)" },
    KeySpec { key: "quad-horizon", default: "50.0",
        description: "quadrature horizon for damped-noise envelope checks" },
    KeySpec { key: "sweep.mu", default: "", description: "sweep values of mu (comma-separated)" },
    KeySpec { key: "sweep.order", default: "", description: "sweep values of N" },
    KeySpec { key: "sweep.y0", default: "", description: "sweep initial values (first coordinate)" },
    KeySpec { key: "cap-steps", default: "1000000",
        description: "sweep/compare horizon cap: T <= cap-steps * dt" },
    KeySpec { key: "demo.trajectories", default: "100", description: "escape-demo path count" },
    KeySpec { key: "seed", default: "42", description: "master seed" },
    KeySpec { key: "workers", default: "0",
        description: "Monte Carlo worker threads (0 = available parallelism; env PERLYAP_WORKERS)" },
    KeySpec { key: "out", default: "", description: "output CSV path (empty = stdout)" },
];

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|k| k.key == key)
}

/// Merged configuration: defaults, then file, then flag overrides.
#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        let values =
            KEYS.iter().map(|k| (k.key.to_string(), k.default.to_string())).collect();
        Self { values }
    }
}

impl Settings {
    /// Parses `key = value` lines and overlays them; unknown keys are
    /// collected and reported together.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        let mut unknown = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if !is_known(key) {
                unknown.push(key.to_string());
                continue;
            }
            self.values.insert(key.to_string(), value.to_string());
        }
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        Ok(())
    }

    /// Sets a single key (flag override). The key must be registered.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        assert!(is_known(key), "unregistered key '{key}'");
        self.values.insert(key.to_string(), value.into());
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.raw(key).is_empty()
    }

    pub fn f64_of(&self, key: &str) -> Result<f64> {
        let raw = self.raw(key);
        raw.parse().map_err(|_| Error::Config(format!("key '{key}': bad number '{raw}'")))
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        if self.is_set(key) {
            self.f64_of(key).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn u64_of(&self, key: &str) -> Result<u64> {
        let raw = self.raw(key);
        raw.parse().map_err(|_| Error::Config(format!("key '{key}': bad integer '{raw}'")))
    }

    pub fn u32_of(&self, key: &str) -> Result<u32> {
        let raw = self.raw(key);
        raw.parse().map_err(|_| Error::Config(format!("key '{key}': bad integer '{raw}'")))
    }

    pub fn usize_of(&self, key: &str) -> Result<usize> {
        let raw = self.raw(key);
        raw.parse().map_err(|_| Error::Config(format!("key '{key}': bad integer '{raw}'")))
    }

    pub fn bool_of(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            other => Err(Error::Config(format!("key '{key}': bad boolean '{other}'"))),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.raw(key);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("key '{key}': bad number '{s}'")))
            })
            .collect()
    }

    pub fn u32_list(&self, key: &str) -> Result<Vec<u32>> {
        let raw = self.raw(key);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("key '{key}': bad integer '{s}'")))
            })
            .collect()
    }
}

/// The generated reference page: every key, its default and description.
pub fn reference_page() -> String {
    let mut s = String::from("key\tdefault\tdescription\n");
    for k in KEYS {
        let default = if k.default.is_empty() { "(empty)" } else { k.default };
        s.push_str(&format!("{}\t{}\t{}\n", k.key, default, k.description));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_every_key() {
        let s = Settings::default();
        assert_eq!(s.raw("system"), "cubic-bistable");
        assert_eq!(s.f64_of("mu").unwrap(), 0.1);
        assert_eq!(s.u32_of("order").unwrap(), 1);
        assert!(s.bool_of("integrator.bridge").unwrap());
        assert_eq!(s.f64_list("y0").unwrap(), vec![0.05]);
        assert!(s.f64_list("sweep.mu").unwrap().is_empty());
    }

    #[test]
    fn file_overlays_and_comments() {
        let mut s = Settings::default();
        s.apply_file("# comment\nmu = 0.2\ninteg\n").unwrap_err();
        let mut s2 = Settings::default();
        s2.apply_file("mu = 0.2 # inline comment\nintegrator.dt = 0.005\nsweep.mu = 0.05, 0.1\n")
            .unwrap();
        assert_eq!(s2.f64_of("mu").unwrap(), 0.2);
        assert_eq!(s2.raw("integrator.dt"), "0.005");
        assert_eq!(s2.f64_list("sweep.mu").unwrap(), vec![0.05, 0.1]);
    }

    #[test]
    fn unknown_keys_are_listed() {
        let mut s = Settings::default();
        let err = s.apply_file("mu = 0.2\nbogus = 1\nalso.bad = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("also.bad"), "{msg}");
    }

    #[test]
    fn reference_page_mentions_every_key() {
        let page = reference_page();
        for k in KEYS {
            assert!(page.contains(k.key));
        }
    }
}
