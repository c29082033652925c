//! Run configuration: flat sections of `key = value` pairs, UTF-8.
//!
//! ```text
//! [kernel]
//! d = 1
//! alpha = 0.5
//! tilde_k = sign
//!
//! [phi]
//! family = signed_power
//! p = 2
//! ```
//!
//! Unknown keys are rejected with the offending `section.key` named, and the
//! consistency `p = d/(d−alpha)` is enforced at load.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mazyalab_core::kernel::{BandRange, ConvMethod, KernelSpec, SphereProfile};
use mazyalab_core::phi::{PhiFamily, PhiSpec, SphereQuadrature};
use mazyalab_core::verify::{StatementId, SuiteConfig, VerifyParams};

#[derive(Debug, Clone)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value, got {raw:?}", lineno + 1))?;
            if current.is_empty() {
                bail!("line {}: key {key:?} outside any [section]", lineno + 1);
            }
            sections
                .get_mut(&current)
                .unwrap()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { sections })
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(|s| s.as_str())
    }

    fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key)
            .ok_or_else(|| anyhow!("missing required key {section}.{key}"))
    }

    fn parse_num<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse::<T>()
                .map_err(|e| anyhow!("bad value for {section}.{key}: {v:?} ({e})")),
        }
    }

    fn parse_list<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|item| {
                    item.trim()
                        .parse::<T>()
                        .map_err(|e| anyhow!("bad value in {section}.{key}: {item:?} ({e})"))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

/// Everything a run needs, decoded and validated.
#[derive(Debug)]
pub struct LabSetup {
    pub kernel: KernelSpec,
    pub phi: PhiSpec,
    pub quad: SphereQuadrature,
    pub suite: SuiteConfig,
    pub verify: VerifyParams,
    pub extremize_bumps: usize,
    pub extremize_budget: u64,
    pub extremize_seed: u64,
    pub formats: Vec<String>,
    pub digest: u64,
}

pub fn load(path: &Path, seed_override: Option<u64>) -> Result<LabSetup> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let raw = RawConfig::parse(&text)?;

    let d: usize = raw.parse_num("kernel", "d", 1)?;
    let alpha: f64 = raw
        .require("kernel", "alpha")?
        .parse()
        .map_err(|e| anyhow!("bad value for kernel.alpha ({e})"))?;
    let tilde_k = raw.require("kernel", "tilde_k")?;
    let lipschitz: f64 = raw.parse_num("kernel", "lipschitz_bound", 1.0)?;
    let (profile, ell) = match tilde_k {
        "sign" => (SphereProfile::Sign, 1),
        "identity" => (SphereProfile::Identity, d),
        other => bail!("kernel.tilde_k: unknown profile {other:?} (built-ins: sign, identity)"),
    };
    let ell: usize = raw.parse_num("kernel", "ell", ell)?;
    let kernel = KernelSpec::new(d, ell, alpha, profile, lipschitz)
        .map_err(|e| anyhow!("kernel section: {e}"))?;

    let p_kernel = kernel.p();
    let p: f64 = raw.parse_num("phi", "p", p_kernel)?;
    if (p - p_kernel).abs() > 1e-12 {
        bail!("phi.p = {p} is inconsistent with d/(d-alpha) = {p_kernel}");
    }
    let family_name = raw.require("phi", "family")?;
    let family = match family_name {
        "signed_power" => PhiFamily::SignedPower,
        "quadratic_form" => PhiFamily::QuadraticForm {
            a11: raw.parse_num("phi", "a11", 1.0)?,
            a12: raw.parse_num("phi", "a12", 0.0)?,
            a22: raw.parse_num("phi", "a22", -1.0)?,
        },
        "norm_power_signed" => {
            let u = raw
                .parse_list::<f64>("phi", "u")?
                .ok_or_else(|| anyhow!("missing required key phi.u for norm_power_signed"))?;
            PhiFamily::NormPowerSigned { u }
        }
        "square" => PhiFamily::Custom {
            name: "square".into(),
            eval: std::sync::Arc::new(|v: &[f64]| v.iter().map(|&c| c * c).sum()),
        },
        other => bail!(
            "phi.family: unknown family {other:?} \
             (built-ins: signed_power, quadratic_form, norm_power_signed, square)"
        ),
    };
    let phi_lip: f64 = raw.parse_num("phi", "lipschitz_bound", p.max(2.0))?;
    let phi = PhiSpec::new(ell, p, family, phi_lip).map_err(|e| anyhow!("phi section: {e}"))?;

    let quad_seed_cfg: u64 = raw.parse_num("quadrature", "seed", 0)?;
    let quad_seed = seed_override.unwrap_or(quad_seed_cfg);
    let scheme = raw.get("quadrature", "scheme").unwrap_or("default");
    let quad = match scheme {
        "default" => mazyalab_core::phi::default_quadrature(d, quad_seed)
            .map_err(|e| anyhow!("quadrature section: {e}"))?,
        "two_point" => SphereQuadrature::two_point(),
        "uniform_circle" => {
            let nodes: usize = raw.parse_num("quadrature", "nodes", 256)?;
            SphereQuadrature::uniform_circle(nodes).map_err(|e| anyhow!("quadrature section: {e}"))?
        }
        "product_angles" => {
            let polar: usize = raw.parse_num("quadrature", "polar", 32)?;
            let azimuth: usize = raw.parse_num("quadrature", "azimuth", 16)?;
            SphereQuadrature::product_angles(polar, azimuth)
                .map_err(|e| anyhow!("quadrature section: {e}"))?
        }
        "monte_carlo" => {
            let samples: usize = raw.parse_num("quadrature", "samples", 1 << 16)?;
            SphereQuadrature::monte_carlo(d, samples, quad_seed)
                .map_err(|e| anyhow!("quadrature section: {e}"))?
        }
        other => bail!("quadrature.scheme: unknown scheme {other:?}"),
    };
    if quad.d != d {
        bail!("quadrature.scheme {scheme:?} has dimension {} but kernel.d = {d}", quad.d);
    }

    let mut suite = SuiteConfig::default_for(d);
    suite.grid_half_width = raw.parse_num("grid", "half_width", suite.grid_half_width)?;
    suite.cells_per_axis = raw.parse_num("grid", "cells_per_axis", suite.cells_per_axis)?;
    if let Some(widths) = raw.parse_list::<f64>("suite", "widths")? {
        suite.dipole_widths = widths;
    }
    suite.dipole_offset = raw.parse_num("suite", "dipole_offset", suite.dipole_offset)?;
    if let Some(ns) = raw.parse_list::<i32>("suite", "ns")? {
        suite.band_indices = ns;
    }
    suite.main2_n = raw.parse_num("suite", "main2_n", suite.main2_n)?;
    suite.remainder_n = raw.parse_num("suite", "remainder_n", suite.remainder_n)?;
    suite.random_bumps = raw.parse_num("suite", "random_bumps", suite.random_bumps)?;
    suite.seed = seed_override.unwrap_or(raw.parse_num("suite", "seed", suite.seed)?);
    let lambda: f64 = raw.parse_num("suite", "lambda_duplicate", 3.0)?;
    suite.lambda_duplicate = if lambda == 0.0 { None } else { Some(lambda) };
    if let Some(names) = raw.parse_list::<String>("suite", "statements")? {
        let mut statements = Vec::new();
        for name in names {
            let name = name.trim();
            if name.is_empty() {
                continue;
            }
            statements
                .push(StatementId::parse(name).map_err(|e| anyhow!("suite.statements: {e}"))?);
        }
        suite.statements = statements;
    }

    let mut verify = VerifyParams::default_for(d);
    verify.quad_seed = quad_seed;
    let lo: i32 = raw.parse_num("bands", "lo", verify.bands.lo.unwrap_or(-12))?;
    let hi: i32 = raw.parse_num("bands", "hi", verify.bands.hi)?;
    verify.bands = BandRange::bounded(lo, hi).map_err(|e| anyhow!("bands section: {e}"))?;
    verify.grid_cap = raw.parse_num("tolerances", "grid_cap", verify.grid_cap)?;
    verify.growth_factor = raw.parse_num("tolerances", "growth_factor", verify.growth_factor)?;
    verify.cancellation_rel =
        raw.parse_num("tolerances", "cancellation_rel", verify.cancellation_rel)?;
    match raw.get("bands", "method").unwrap_or("fast") {
        "fast" => verify.method = ConvMethod::Fast,
        "direct" => verify.method = ConvMethod::Direct,
        other => bail!("bands.method: unknown method {other:?} (fast, direct)"),
    }

    let extremize_bumps: usize = raw.parse_num("extremize", "bumps", 2)?;
    let extremize_budget: u64 = raw.parse_num("extremize", "budget", 400)?;
    let extremize_seed: u64 =
        seed_override.unwrap_or(raw.parse_num("extremize", "seed", 11)?);

    let formats = raw
        .parse_list::<String>("output", "formats")?
        .unwrap_or_else(|| vec!["csv".to_string()]);

    let mut digest = fnv1a64(text.as_bytes());
    if let Some(seed) = seed_override {
        digest = fnv1a64_with(digest, &seed.to_le_bytes());
    }

    Ok(LabSetup {
        kernel,
        phi,
        quad,
        suite,
        verify,
        extremize_bumps,
        extremize_budget,
        extremize_seed,
        formats,
        digest,
    })
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_with(0xcbf29ce484222325, bytes)
}

fn fnv1a64_with(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX1: &str = "\
[kernel]
d = 1
alpha = 0.5
tilde_k = sign

[phi]
family = signed_power
p = 2

[grid]
half_width = 1
cells_per_axis = 512

[suite]
statements = cancellation, main_ratio
widths = 0.125, 0.0625
";

    #[test]
    fn parses_minimal_config() {
        let raw = RawConfig::parse(EX1).unwrap();
        assert_eq!(raw.get("kernel", "alpha"), Some("0.5"));
        assert_eq!(raw.get("phi", "family"), Some("signed_power"));
    }

    #[test]
    fn rejects_inconsistent_p() {
        let bad = EX1.replace("p = 2", "p = 3");
        let dir = std::env::temp_dir().join("mazyalab_cfg_test_p");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.cfg");
        std::fs::write(&path, bad).unwrap();
        let err = load(&path, None).unwrap_err();
        assert!(err.to_string().contains("inconsistent"), "{err}");
    }

    #[test]
    fn error_names_offending_key() {
        let bad = EX1.replace("tilde_k = sign", "tilde_k = wiggle");
        let dir = std::env::temp_dir().join("mazyalab_cfg_test_key");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.cfg");
        std::fs::write(&path, bad).unwrap();
        let err = load(&path, None).unwrap_err();
        assert!(err.to_string().contains("kernel.tilde_k"), "{err}");
    }

    #[test]
    fn digest_stable_and_seed_sensitive() {
        let dir = std::env::temp_dir().join("mazyalab_cfg_test_digest");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ex1.cfg");
        std::fs::write(&path, EX1).unwrap();
        let a = load(&path, None).unwrap().digest;
        let b = load(&path, None).unwrap().digest;
        let c = load(&path, Some(5)).unwrap().digest;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
