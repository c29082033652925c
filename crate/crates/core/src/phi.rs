//! Positively p-homogeneous functionals and sphere cancellation integrals.
//!
//! A functional `Φ: ℝ^ℓ → ℝ` with `Φ(tv) = t^p Φ(v)` for `t > 0` enters the
//! main inequality through the two cancellation conditions
//!
//! ```text
//! ∫_{S^{d−1}} Φ(K̃(ζ)) dσ(ζ) = 0     and     ∫_{S^{d−1}} Φ(−K̃(ζ)) dσ(ζ) = 0,
//! ```
//!
//! which are in general independent and are therefore always reported as two
//! separate residuals.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Shared evaluator for custom functionals.
pub type PhiFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Built-in and custom functional families.
#[derive(Clone)]
pub enum PhiFamily {
    /// `t ↦ t|t|^{p−1}` on ℝ; for `p = 2` this is `t|t|`.
    SignedPower,
    /// `v ↦ a11 v₁² + a12 v₁v₂ + a22 v₂²` on ℝ², requires `p = 2`.
    QuadraticForm { a11: f64, a12: f64, a22: f64 },
    /// `v ↦ |v|^{p−1} ⟨v, u⟩` for a fixed unit vector `u`; reduces to the
    /// signed power for `ℓ = 1`, `u = 1`.
    NormPowerSigned { u: Vec<f64> },
    /// User evaluator with declared homogeneity degree.
    Custom { name: String, eval: PhiFn },
}

impl fmt::Debug for PhiFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiFamily::SignedPower => write!(f, "SignedPower"),
            PhiFamily::QuadraticForm { a11, a12, a22 } => {
                write!(f, "QuadraticForm {{ a11: {a11}, a12: {a12}, a22: {a22} }}")
            }
            PhiFamily::NormPowerSigned { u } => write!(f, "NormPowerSigned {{ u: {u:?} }}"),
            PhiFamily::Custom { name, .. } => write!(f, "Custom {{ name: {name:?} }}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhiSpec {
    pub ell: usize,
    /// Homogeneity degree, > 1.
    pub p: f64,
    pub family: PhiFamily,
    /// Asserted local Lipschitz constant on the unit sphere of ℝ^ℓ.
    pub lipschitz_bound: f64,
}

impl PhiSpec {
    pub fn new(ell: usize, p: f64, family: PhiFamily, lipschitz_bound: f64) -> Result<Self> {
        if ell == 0 {
            return Err(Error::InvalidParameter("ell must be positive".into()));
        }
        if p <= 1.0 || !p.is_finite() {
            return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
        }
        match &family {
            PhiFamily::SignedPower if ell != 1 => {
                return Err(Error::DimensionMismatch("signed_power requires ell = 1".into()))
            }
            PhiFamily::QuadraticForm { .. } if ell != 2 => {
                return Err(Error::DimensionMismatch("quadratic_form requires ell = 2".into()))
            }
            PhiFamily::QuadraticForm { .. } if p != 2.0 => {
                return Err(Error::InvalidParameter("quadratic_form requires p = 2".into()))
            }
            PhiFamily::NormPowerSigned { u } => {
                if u.len() != ell {
                    return Err(Error::DimensionMismatch("direction must have length ell".into()));
                }
                let n = u.iter().map(|&c| c * c).sum::<f64>().sqrt();
                if (n - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter("direction must be a unit vector".into()));
                }
            }
            _ => {}
        }
        let spec = Self { ell, p, family, lipschitz_bound };
        // Custom evaluators declare p; verify homogeneity at load, fail fast.
        if matches!(spec.family, PhiFamily::Custom { .. }) {
            let dev = spec.check_homogeneity(256, 0x5EED);
            if dev > 1e-9 {
                return Err(Error::Precondition(format!(
                    "custom functional is not {p}-homogeneous (deviation {dev:.3e})"
                )));
            }
        }
        Ok(spec)
    }

    /// The functional of Example 1: `Φ(t) = t|t|`, `p = 2`.
    pub fn example1() -> Self {
        Self::new(1, 2.0, PhiFamily::SignedPower, 2.0).expect("valid built-in")
    }

    /// The quadratic functional of Example 2.
    pub fn example2(a11: f64, a12: f64, a22: f64) -> Self {
        Self::new(2, 2.0, PhiFamily::QuadraticForm { a11, a12, a22 }, 1.0).expect("valid built-in")
    }

    pub fn family_name(&self) -> &str {
        match &self.family {
            PhiFamily::SignedPower => "signed_power",
            PhiFamily::QuadraticForm { .. } => "quadratic_form",
            PhiFamily::NormPowerSigned { .. } => "norm_power_signed",
            PhiFamily::Custom { name, .. } => name,
        }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.ell);
        match &self.family {
            PhiFamily::SignedPower => {
                let t = v[0];
                if t == 0.0 {
                    0.0
                } else {
                    t.signum() * t.abs().powf(self.p)
                }
            }
            PhiFamily::QuadraticForm { a11, a12, a22 } => {
                a11 * v[0] * v[0] + a12 * v[0] * v[1] + a22 * v[1] * v[1]
            }
            PhiFamily::NormPowerSigned { u } => {
                let n2: f64 = v.iter().map(|&c| c * c).sum();
                if n2 == 0.0 {
                    return 0.0;
                }
                let dot: f64 = v.iter().zip(u).map(|(&a, &b)| a * b).sum();
                n2.sqrt().powf(self.p - 1.0) * dot
            }
            PhiFamily::Custom { eval, .. } => eval(v),
        }
    }

    /// Upper bound for `|Φ|` on the unit sphere, used by tail estimates.
    pub fn sup_unit_bound(&self) -> f64 {
        match &self.family {
            PhiFamily::SignedPower => 1.0,
            PhiFamily::QuadraticForm { a11, a12, a22 } => a11.abs() + a12.abs() + a22.abs(),
            PhiFamily::NormPowerSigned { .. } => 1.0,
            PhiFamily::Custom { eval, .. } => {
                // Sampled sup with a margin; a zero sampled sup means Φ ≡ 0
                // by homogeneity.
                let mut rng = ChaCha8Rng::seed_from_u64(0xB0B);
                let mut best = 0.0f64;
                for _ in 0..4096 {
                    let v = random_direction(&mut rng, self.ell);
                    best = best.max(eval(&v).abs());
                }
                if best == 0.0 {
                    0.0
                } else {
                    2.0 * best
                }
            }
        }
    }

    /// Constant `L` with `|Φ(a) − Φ(b)| ≤ L·max(|a|,|b|)^{p−1}|a−b|`, used by
    /// truncation bounds.
    pub fn pair_lipschitz_bound(&self) -> f64 {
        match &self.family {
            PhiFamily::SignedPower => self.p,
            PhiFamily::QuadraticForm { a11, a12, a22 } => 2.0 * (a11.abs() + a12.abs() + a22.abs()),
            PhiFamily::NormPowerSigned { .. } => self.p,
            PhiFamily::Custom { .. } => {
                let sup = self.sup_unit_bound();
                if sup == 0.0 {
                    0.0
                } else {
                    2.0 * self.lipschitz_bound.max(1.0) * self.p * sup.max(1.0)
                }
            }
        }
    }

    /// Max relative deviation of `Φ(tv) − t^p Φ(v)` over seeded samples with
    /// `t ∈ [1/8, 8]`. Built-ins report at most ~1e−12.
    pub fn check_homogeneity(&self, samples: usize, seed: u64) -> f64 {
        assert!(samples >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let v: Vec<f64> = (0..self.ell).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            let t = 0.125 * (64.0f64).powf(rng.random::<f64>());
            let scaled: Vec<f64> = v.iter().map(|&c| t * c).collect();
            let lhs = self.eval(&scaled);
            let rhs = t.powf(self.p) * self.eval(&v);
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
        worst
    }
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        // Box-Muller pairs, normalized.
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-16);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let n = v.iter().map(|&c| c * c).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.iter().map(|&c| c / n).collect();
        }
    }
}

/// Quadrature rule on `S^{d−1}` with weights summing to the surface measure.
#[derive(Clone, Debug)]
pub struct SphereQuadrature {
    pub d: usize,
    pub scheme: String,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// Estimated quadrature error scale for smooth integrands (0 = exact).
    pub error_estimate_hint: f64,
}

impl SphereQuadrature {
    /// `S^0 = {−1, 1}` with the counting measure; exact for every integrand.
    pub fn two_point() -> Self {
        Self {
            d: 1,
            scheme: "two_point".into(),
            nodes: vec![vec![1.0], vec![-1.0]],
            weights: vec![1.0, 1.0],
            error_estimate_hint: 0.0,
        }
    }

    /// Equispaced nodes on the circle; integrates trigonometric polynomials of
    /// degree < n exactly.
    pub fn uniform_circle(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidParameter("need at least 4 circle nodes".into()));
        }
        let w = 2.0 * std::f64::consts::PI / n as f64;
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let theta = w * i as f64;
            nodes.push(vec![theta.cos(), theta.sin()]);
        }
        Ok(Self {
            d: 2,
            scheme: format!("uniform_circle_{n}"),
            nodes,
            weights: vec![w; n],
            error_estimate_hint: (2.0 * std::f64::consts::PI) * 1e-15 * n as f64,
        })
    }

    /// Product rule on `S²`: Gauss–Legendre in the polar cosine, equispaced in
    /// azimuth. Defaults are (32, 16).
    pub fn product_angles(n_polar: usize, n_azimuth: usize) -> Result<Self> {
        if n_polar < 2 || n_azimuth < 4 {
            return Err(Error::InvalidParameter("product rule needs more nodes".into()));
        }
        let (gl_nodes, gl_weights) = gauss_legendre(n_polar);
        let wphi = 2.0 * std::f64::consts::PI / n_azimuth as f64;
        let mut nodes = Vec::with_capacity(n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(n_polar * n_azimuth);
        for (ct, wt) in gl_nodes.iter().zip(&gl_weights) {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            for j in 0..n_azimuth {
                let phi = wphi * j as f64;
                nodes.push(vec![st * phi.cos(), st * phi.sin(), *ct]);
                weights.push(wt * wphi);
            }
        }
        Ok(Self {
            d: 3,
            scheme: format!("product_angles_{n_polar}x{n_azimuth}"),
            nodes,
            weights,
            error_estimate_hint: 4.0 * std::f64::consts::PI * 1e-14,
        })
    }

    /// Seeded Monte Carlo on `S^{d−1}`, with the standard error reported as
    /// the accuracy hint.
    pub fn monte_carlo(d: usize, samples: usize, seed: u64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter("monte_carlo requires d >= 2".into()));
        }
        if samples == 0 {
            return Err(Error::InvalidParameter("need at least one sample".into()));
        }
        let area = sphere_area(d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes: Vec<Vec<f64>> = (0..samples).map(|_| random_direction(&mut rng, d)).collect();
        let w = area / samples as f64;
        Ok(Self {
            d,
            scheme: format!("monte_carlo_{samples}_seed{seed}"),
            nodes,
            weights: vec![w; samples],
            error_estimate_hint: area / (samples as f64).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.nodes.iter().map(|n| n.as_slice()).zip(self.weights.iter().copied())
    }

    /// `Σ w_i g(ζ_i)`, fixed summation order.
    pub fn integrate(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut acc = crate::gridfn::Accumulator::new();
        for (node, w) in self.nodes() {
            acc.push(w * g(node));
        }
        acc.finish()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Surface measure of `S^{d−1}`: 2 for d=1, 2π for d=2, 4π for d=3, …
pub fn sphere_area(d: usize) -> f64 {
    let df = d as f64;
    2.0 * std::f64::consts::PI.powf(df / 2.0) / gamma(df / 2.0)
}

fn gamma(x: f64) -> f64 {
    // Γ at half-integers via recursion; enough for sphere areas.
    if (x - 0.5).abs() < 1e-12 {
        std::f64::consts::PI.sqrt()
    } else if (x - 1.0).abs() < 1e-12 {
        1.0
    } else {
        (x - 1.0) * gamma(x - 1.0)
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1] via Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0f64;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Residuals of the two cancellation integrals plus a normalizer for relative
/// judgment.
#[derive(Clone, Debug)]
pub struct CancellationReport {
    pub residual_plus: f64,
    pub residual_minus: f64,
    /// Quadrature of `|Φ∘K̃| + |Φ∘(−K̃)|`.
    pub normalizer: f64,
    pub quad_error_hint: f64,
}

impl CancellationReport {
    /// Verdict with the configured relative threshold; the residual counts as
    /// cancelling when it is below `max(rel · normalizer, quadrature hint)`.
    pub fn cancels(&self, rel_threshold: f64) -> bool {
        let tol = (rel_threshold * self.normalizer).max(self.quad_error_hint);
        self.residual_plus.abs() <= tol && self.residual_minus.abs() <= tol
    }
}

/// Quadrature of `Φ(±K̃)` over the sphere.
pub fn check_cancellation(
    phi: &PhiSpec,
    spec: &KernelSpec,
    quad: &SphereQuadrature,
) -> Result<CancellationReport> {
    if phi.ell != spec.ell {
        return Err(Error::DimensionMismatch(format!(
            "phi has ell = {}, kernel has ell = {}",
            phi.ell, spec.ell
        )));
    }
    if quad.d != spec.d {
        return Err(Error::DimensionMismatch(format!(
            "quadrature dimension {} vs kernel dimension {}",
            quad.d, spec.d
        )));
    }
    if (phi.p - spec.p()).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "p mismatch: phi.p = {} vs d/(d-alpha) = {}",
            phi.p,
            spec.p()
        )));
    }
    let mut buf = vec![0.0; spec.ell];
    let mut neg = vec![0.0; spec.ell];
    let mut plus = crate::gridfn::Accumulator::new();
    let mut minus = crate::gridfn::Accumulator::new();
    let mut norm = crate::gridfn::Accumulator::new();
    for (node, w) in quad.nodes() {
        spec.eval_profile(node, &mut buf);
        for (n, b) in neg.iter_mut().zip(&buf) {
            *n = -b;
        }
        let vp = phi.eval(&buf);
        let vm = phi.eval(&neg);
        plus.push(w * vp);
        minus.push(w * vm);
        norm.push(w * (vp.abs() + vm.abs()));
    }
    Ok(CancellationReport {
        residual_plus: plus.finish(),
        residual_minus: minus.finish(),
        normalizer: norm.finish(),
        quad_error_hint: quad.error_estimate_hint,
    })
}

/// Default quadrature for a kernel dimension.
pub fn default_quadrature(d: usize, seed: u64) -> Result<SphereQuadrature> {
    match d {
        1 => Ok(SphereQuadrature::two_point()),
        2 => SphereQuadrature::uniform_circle(256),
        3 => SphereQuadrature::product_angles(32, 16),
        _ => SphereQuadrature::monte_carlo(d, 1 << 16, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn signed_power_values() {
        let phi = PhiSpec::example1();
        assert_eq!(phi.eval(&[-3.0]), -9.0);
        assert_eq!(phi.eval(&[0.0]), 0.0);
        assert_eq!(phi.eval(&[2.0]), 4.0);
    }

    #[test]
    fn quadratic_form_value() {
        // 1·4 + 0 − 1·1 = 3 by direct arithmetic.
        let phi = PhiSpec::example2(1.0, 0.0, -1.0);
        assert_eq!(phi.eval(&[2.0, 1.0]), 3.0);
    }

    #[test]
    fn norm_power_signed_at_zero() {
        let phi = PhiSpec::new(
            2,
            1.5,
            PhiFamily::NormPowerSigned { u: vec![1.0, 0.0] },
            2.0,
        )
        .unwrap();
        assert_eq!(phi.eval(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn homogeneity_of_builtins() {
        assert!(PhiSpec::example1().check_homogeneity(2000, 3) <= 1e-12);
        assert!(PhiSpec::example2(1.0, 0.7, -1.0).check_homogeneity(2000, 4) <= 1e-12);
        let norm_phi = PhiSpec::new(
            3,
            1.5,
            PhiFamily::NormPowerSigned { u: vec![0.0, 0.0, 1.0] },
            2.0,
        )
        .unwrap();
        assert!(norm_phi.check_homogeneity(2000, 5) <= 1e-12);
    }

    #[test]
    fn homogeneity_detects_broken_functional() {
        // Φ(v) = |v|^p + 1 is deliberately inhomogeneous: at t = 2 and
        // Φ(v) = 2 the defect is |t^p − 1| · 1 / |t^p·2 + 1| ≈ 0.33 > 0.1.
        let p = 2.0;
        let broken = PhiSpec {
            ell: 1,
            p,
            family: PhiFamily::Custom {
                name: "broken".into(),
                eval: Arc::new(move |v: &[f64]| v[0].abs().powf(p) + 1.0),
            },
            lipschitz_bound: 2.0,
        };
        assert!(broken.check_homogeneity(2000, 6) > 0.1);
        // And the constructor refuses it.
        assert!(PhiSpec::new(1, p, broken.family.clone(), 2.0).is_err());
    }

    #[test]
    fn custom_homogeneous_accepted() {
        let p = 1.5;
        let phi = PhiSpec::new(
            2,
            p,
            PhiFamily::Custom {
                name: "norm_p".into(),
                eval: Arc::new(move |v: &[f64]| {
                    v.iter().map(|&c| c * c).sum::<f64>().sqrt().powf(p)
                }),
            },
            2.0,
        )
        .unwrap();
        assert!(phi.check_homogeneity(2000, 7) <= 1e-12);
    }

    #[test]
    fn two_point_cancellation_is_exact() {
        // Ex. 1: Φ(1) + Φ(−1) = 0, normalizer 4.
        let report =
            check_cancellation(&PhiSpec::example1(), &KernelSpec::example1(), &SphereQuadrature::two_point())
                .unwrap();
        assert_eq!(report.residual_plus, 0.0);
        assert_eq!(report.residual_minus, 0.0);
        assert_eq!(report.normalizer, 4.0);
        assert!(report.cancels(1e-8));
    }

    #[test]
    fn two_point_non_cancelling() {
        // Φ(t) = t²: Φ(1) + Φ(−1) = 2.
        let phi = PhiSpec::new(
            1,
            2.0,
            PhiFamily::Custom { name: "square".into(), eval: Arc::new(|v: &[f64]| v[0] * v[0]) },
            2.0,
        )
        .unwrap();
        let report =
            check_cancellation(&phi, &KernelSpec::example1(), &SphereQuadrature::two_point()).unwrap();
        assert_eq!(report.residual_plus, 2.0);
        assert_eq!(report.residual_minus, 2.0);
        assert!(!report.cancels(1e-8));
    }

    #[test]
    fn circle_cancellation_iff_trace_vanishes() {
        let quad = SphereQuadrature::uniform_circle(256).unwrap();
        let spec = KernelSpec::example2();
        // a11 + a22 = 0 cancels regardless of a12.
        let good = check_cancellation(&PhiSpec::example2(1.0, 0.4, -1.0), &spec, &quad).unwrap();
        assert!(good.residual_plus.abs() <= 1e-10);
        assert!(good.residual_minus.abs() <= 1e-10);
        // a11 + a22 = 1 leaves residual π(a11 + a22).
        let bad = check_cancellation(&PhiSpec::example2(0.75, 0.0, 0.25), &spec, &quad).unwrap();
        assert_relative_eq!(bad.residual_plus, PI, max_relative = 1e-10);
        assert_relative_eq!(bad.residual_minus, PI, max_relative = 1e-10);
    }

    #[test]
    fn sphere_integrate_circle_basics() {
        let quad = SphereQuadrature::uniform_circle(64).unwrap();
        assert_relative_eq!(quad.integrate(|_| 1.0), 2.0 * PI, max_relative = 1e-12);
        assert!(quad.integrate(|z| z[0]).abs() < 1e-14);
        // ∫ cos² over the circle = π.
        assert_relative_eq!(quad.integrate(|z| z[0] * z[0]), PI, max_relative = 1e-12);
    }

    #[test]
    fn circle_trig_exactness() {
        let quad = SphereQuadrature::uniform_circle(32).unwrap();
        for k in 1..16u32 {
            let v = quad.integrate(|z| {
                let theta = z[1].atan2(z[0]);
                (k as f64 * theta).cos()
            });
            assert!(v.abs() <= 1e-12, "k = {k}: {v}");
        }
    }

    #[test]
    fn quadrature_weights_sum_to_area() {
        assert_relative_eq!(SphereQuadrature::two_point().total_weight(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(
            SphereQuadrature::uniform_circle(100).unwrap().total_weight(),
            2.0 * PI,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            SphereQuadrature::product_angles(32, 16).unwrap().total_weight(),
            4.0 * PI,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            SphereQuadrature::monte_carlo(4, 1000, 1).unwrap().total_weight(),
            sphere_area(4),
            epsilon = 1e-10
        );
    }

    #[test]
    fn product_rule_integrates_low_harmonics() {
        let quad = SphereQuadrature::product_angles(32, 16).unwrap();
        // ∫ z₃² over S² = 4π/3.
        assert_relative_eq!(
            quad.integrate(|z| z[2] * z[2]),
            4.0 * PI / 3.0,
            max_relative = 1e-12
        );
        assert!(quad.integrate(|z| z[0] * z[1]).abs() < 1e-13);
    }

    #[test]
    fn cancellation_scales_by_lambda_p() {
        // Residual under K̃ → λK̃ picks up exactly λ^p.
        let lambda = 1.7;
        let spec = KernelSpec::example1();
        let scaled = KernelSpec::new(
            1,
            1,
            0.5,
            crate::kernel::SphereProfile::Custom {
                name: "scaled_sign".into(),
                ell: 1,
                eval: Arc::new(move |z: &[f64], out: &mut [f64]| out[0] = lambda * z[0]),
            },
            0.0,
        )
        .unwrap();
        let phi = PhiSpec::new(
            1,
            2.0,
            PhiFamily::Custom { name: "square".into(), eval: Arc::new(|v: &[f64]| v[0] * v[0]) },
            2.0,
        )
        .unwrap();
        let quad = SphereQuadrature::two_point();
        let base = check_cancellation(&phi, &spec, &quad).unwrap();
        let scaled_rep = check_cancellation(&phi, &scaled, &quad).unwrap();
        let factor = lambda.powf(2.0);
        assert_relative_eq!(scaled_rep.residual_plus, factor * base.residual_plus, max_relative = 1e-13);
    }

    #[test]
    fn phi_perturbation_ratio_bounded() {
        // |Φ(a+b) − Φ(a)| ≲ |a|^{p−1}|b| over random pairs with |b| ≤ 2|a|,
        // for every built-in family.
        let builtins = [
            PhiSpec::example1(),
            PhiSpec::new(1, 1.5, PhiFamily::SignedPower, 2.0).unwrap(),
            PhiSpec::example2(1.0, 0.5, -1.0),
            PhiSpec::new(2, 1.5, PhiFamily::NormPowerSigned { u: vec![0.6, 0.8] }, 2.0).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for phi in builtins {
            let mut worst = 0.0f64;
            let mut cases = 0;
            while cases < 10_000 {
                let a: Vec<f64> = (0..phi.ell).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
                let an = a.iter().map(|&c| c * c).sum::<f64>().sqrt();
                if an < 1e-9 {
                    continue;
                }
                let raw: Vec<f64> = (0..phi.ell).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
                let rn = raw.iter().map(|&c| c * c).sum::<f64>().sqrt();
                if rn == 0.0 {
                    continue;
                }
                let scale = rng.random::<f64>() * 2.0 * an / rn;
                let b: Vec<f64> = raw.iter().map(|&c| c * scale).collect();
                let bn = b.iter().map(|&c| c * c).sum::<f64>().sqrt();
                if bn == 0.0 {
                    continue;
                }
                let sum: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| x + y).collect();
                let lhs = (phi.eval(&sum) - phi.eval(&a)).abs();
                let rhs = an.powf(phi.p - 1.0) * bn;
                worst = worst.max(lhs / rhs);
                cases += 1;
            }
            assert!(
                worst.is_finite() && worst < 20.0,
                "{}: worst ratio {worst}",
                phi.family_name()
            );
        }
    }
}
