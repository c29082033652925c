//! Homogeneous kernels and their dyadic band decomposition.
//!
//! A kernel is determined by a Lipschitz sphere profile `K̃: S^{d−1} → ℝ^ℓ`
//! and a homogeneity parameter `α ∈ (0, d)`:
//!
//! ```text
//! K(x) = |x|^{α−d} K̃(x/|x|),        x ≠ 0.
//! ```
//!
//! The band `K_n` is `K` restricted to the closed dyadic annulus
//! `2^{−n−1} ≤ |x| ≤ 2^{−n}`; bands satisfy `K_n(x) = 2^{(d−α)n} K_0(2^n x)`
//! and have disjoint supports up to the shared dyadic spheres. Partial sums
//! over a [`BandRange`] restrict `K` to a larger annulus. The induced
//! integrability exponent is `p = d/(d−α)`.

mod conv;

pub use conv::{convolve, convolve_with, ConvMethod, ConvParams, Convolution};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Shared evaluator for custom sphere profiles: fills `out` with `K̃(ζ)`.
pub type ProfileFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Angular part `K̃` restricted to the unit sphere.
#[derive(Clone)]
pub enum SphereProfile {
    /// `ζ ↦ ζ` with `ℓ = d`.
    Identity,
    /// `ζ ↦ ζ` on `S^0 = {−1, 1}`, scalar-valued (`d = ℓ = 1`).
    Sign,
    /// User-supplied evaluator with declared codomain dimension.
    Custom { name: String, ell: usize, eval: ProfileFn },
}

impl fmt::Debug for SphereProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SphereProfile::Identity => write!(f, "Identity"),
            SphereProfile::Sign => write!(f, "Sign"),
            SphereProfile::Custom { name, ell, .. } => {
                write!(f, "Custom {{ name: {name:?}, ell: {ell} }}")
            }
        }
    }
}

impl SphereProfile {
    pub fn name(&self) -> &str {
        match self {
            SphereProfile::Identity => "identity",
            SphereProfile::Sign => "sign",
            SphereProfile::Custom { name, .. } => name,
        }
    }
}

/// A homogeneous kernel specification `(d, ℓ, α, K̃)`.
#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub d: usize,
    pub ell: usize,
    pub alpha: f64,
    pub tilde_k: SphereProfile,
    /// Asserted Lipschitz constant of `K̃` on the sphere, used by tail bounds.
    pub lipschitz_bound: f64,
}

impl KernelSpec {
    pub fn new(
        d: usize,
        ell: usize,
        alpha: f64,
        tilde_k: SphereProfile,
        lipschitz_bound: f64,
    ) -> Result<Self> {
        if d == 0 || ell == 0 {
            return Err(Error::InvalidParameter("d and ell must be positive".into()));
        }
        if !(alpha > 0.0 && alpha < d as f64) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, d); got alpha = {alpha}, d = {d}"
            )));
        }
        match &tilde_k {
            SphereProfile::Identity if ell != d => {
                return Err(Error::DimensionMismatch(format!(
                    "identity profile requires ell = d, got ell = {ell}, d = {d}"
                )))
            }
            SphereProfile::Sign if d != 1 || ell != 1 => {
                return Err(Error::DimensionMismatch(
                    "sign profile requires d = ell = 1".into(),
                ))
            }
            SphereProfile::Custom { ell: pe, .. } if *pe != ell => {
                return Err(Error::DimensionMismatch(format!(
                    "profile declares ell = {pe}, spec says ell = {ell}"
                )))
            }
            _ => {}
        }
        if !(lipschitz_bound >= 0.0 && lipschitz_bound.is_finite()) {
            return Err(Error::InvalidParameter(
                "lipschitz_bound must be finite and non-negative".into(),
            ));
        }
        Ok(Self { d, ell, alpha, tilde_k, lipschitz_bound })
    }

    /// The kernel from Example 1: `d = 1`, `α = 1/2`, `K̃ = sign`, so that
    /// `K(y) = sign(y) |y|^{−1/2}` and `p = 2`.
    pub fn example1() -> Self {
        Self::new(1, 1, 0.5, SphereProfile::Sign, 0.0).expect("valid built-in")
    }

    /// The kernel from Example 2: `d = 2`, `α = 1`, `K̃(ζ) = ζ`, `p = 2`.
    pub fn example2() -> Self {
        Self::new(2, 2, 1.0, SphereProfile::Identity, 1.0).expect("valid built-in")
    }

    /// Integrability exponent `p = d/(d−α)`, always in `(1, ∞)`.
    pub fn p(&self) -> f64 {
        self.d as f64 / (self.d as f64 - self.alpha)
    }

    /// Evaluate `K̃` at a unit vector.
    pub fn eval_profile(&self, zeta: &[f64], out: &mut [f64]) {
        debug_assert_eq!(zeta.len(), self.d);
        debug_assert_eq!(out.len(), self.ell);
        match &self.tilde_k {
            SphereProfile::Identity => out.copy_from_slice(zeta),
            SphereProfile::Sign => out[0] = zeta[0],
            SphereProfile::Custom { eval, .. } => eval(zeta, out),
        }
    }

    /// `K(x) = |x|^{α−d} K̃(x/|x|)`; fails at the singular point `x = 0`.
    pub fn eval_kernel(&self, x: &[f64]) -> Result<Vec<f64>> {
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::KernelSingularAtOrigin);
        }
        let mut out = vec![0.0; self.ell];
        self.eval_kernel_into(x, r, &mut out);
        Ok(out)
    }

    fn eval_kernel_into(&self, x: &[f64], r: f64, out: &mut [f64]) {
        let radial = r.powf(self.alpha - self.d as f64);
        let zeta: Vec<f64> = x.iter().map(|&c| c / r).collect();
        self.eval_profile(&zeta, out);
        for v in out.iter_mut() {
            *v *= radial;
        }
    }

    /// `K_n(x)`: the kernel on the closed annulus `2^{−n−1} ≤ |x| ≤ 2^{−n}`,
    /// zero elsewhere (in particular at `x = 0`).
    pub fn eval_band(&self, n: i32, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ell];
        let r = norm(x);
        if r >= band_inner(n) && r <= band_outer(n) && r > 0.0 {
            self.eval_kernel_into(x, r, &mut out);
        }
        out
    }

    /// `Σ_{k ∈ range} K_k(x)`. For `x ≠ 0` at most one band is active, and on
    /// a shared dyadic sphere the sum short-circuits to `K(x)` so the overlap
    /// is never double counted.
    pub fn eval_band_sum(&self, range: BandRange, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ell];
        let r = norm(x);
        if r == 0.0 {
            return out;
        }
        let inner = band_inner(range.hi);
        let in_annulus = match range.lo {
            Some(lo) => r >= inner && r <= band_outer(lo),
            None => r >= inner,
        };
        if in_annulus {
            self.eval_kernel_into(x, r, &mut out);
        }
        out
    }
}

/// Inclusive band index range; `lo = None` stands for `−∞`, i.e. `K_{≤hi}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BandRange {
    pub lo: Option<i32>,
    pub hi: i32,
}

impl BandRange {
    pub fn bounded(lo: i32, hi: i32) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidParameter(format!(
                "band range requires lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo: Some(lo), hi })
    }

    /// `K_{≤hi}`.
    pub fn up_to(hi: i32) -> Self {
        Self { lo: None, hi }
    }

    /// The single band `K_n`.
    pub fn single(n: i32) -> Self {
        Self { lo: Some(n), hi: n }
    }

    /// Inner radius `2^{−hi−1}` of the covered annulus.
    pub fn inner_radius(&self) -> f64 {
        band_inner(self.hi)
    }

    /// Outer radius `2^{−lo}`, or `None` when the range is unbounded below.
    pub fn outer_radius(&self) -> Option<f64> {
        self.lo.map(band_outer)
    }

    pub fn contains(&self, n: i32) -> bool {
        n <= self.hi && self.lo.is_none_or(|lo| n >= lo)
    }
}

impl fmt::Display for BandRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.lo {
            Some(lo) => write!(f, "[{lo},{}]", self.hi),
            None => write!(f, "(-inf,{}]", self.hi),
        }
    }
}

/// Inner radius `2^{−n−1}` of band `n`.
pub fn band_inner(n: i32) -> f64 {
    exp2i(-n - 1)
}

/// Outer radius `2^{−n}` of band `n`.
pub fn band_outer(n: i32) -> f64 {
    exp2i(-n)
}

/// Exact power of two as f64.
pub fn exp2i(e: i32) -> f64 {
    (e as f64).exp2()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|&c| c * c).sum::<f64>().sqrt()
}
