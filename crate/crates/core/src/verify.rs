//! Inequality reports: each check assembles a kernel, a functional and a test
//! function into one measurable statement `lhs ≲ rhs` and reports both sides,
//! their ratio, and an analytic bound on what the truncation left out.
//!
//! The checks never assert a hidden constant: ratios are reported and verdicts
//! concern structure (cancellation thresholds, growth across a family,
//! vacuous cases), matching the fact that the underlying inequalities hold
//! with unspecified uniform constants.

use crate::dyadic::m_p_auto;
use crate::error::{Error, Result};
use crate::gridfn::{chunked_sum_by, make_dipole, Accumulator, DipoleSpec, GridFunction};
use crate::kernel::{
    band_inner, band_outer, convolve_with, BandRange, ConvMethod, ConvParams, Convolution,
    KernelSpec,
};
use crate::phi::{
    check_cancellation, default_quadrature, CancellationReport, PhiSpec, SphereQuadrature,
};

/// Stable identifiers for everything the suite can check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StatementId {
    Cancellation,
    MainRatio,
    FirstLemma,
    SecondLemma,
    Main2Partial,
    RemainderPartial,
    MedianBound,
    LocalMain2,
    AuxK1,
    AuxK2,
    AuxK3,
    AuxPhi1,
    PointMassCancellation,
    NecessityProbe,
}

pub const ALL_STATEMENTS: [StatementId; 14] = [
    StatementId::Cancellation,
    StatementId::MainRatio,
    StatementId::FirstLemma,
    StatementId::SecondLemma,
    StatementId::Main2Partial,
    StatementId::RemainderPartial,
    StatementId::MedianBound,
    StatementId::LocalMain2,
    StatementId::AuxK1,
    StatementId::AuxK2,
    StatementId::AuxK3,
    StatementId::AuxPhi1,
    StatementId::PointMassCancellation,
    StatementId::NecessityProbe,
];

impl StatementId {
    pub fn as_str(&self) -> &'static str {
        match self {
            StatementId::Cancellation => "cancellation",
            StatementId::MainRatio => "main_ratio",
            StatementId::FirstLemma => "first_lemma",
            StatementId::SecondLemma => "second_lemma",
            StatementId::Main2Partial => "main2_partial",
            StatementId::RemainderPartial => "remainder_partial",
            StatementId::MedianBound => "median_bound",
            StatementId::LocalMain2 => "local_main2",
            StatementId::AuxK1 => "aux_k1",
            StatementId::AuxK2 => "aux_k2",
            StatementId::AuxK3 => "aux_k3",
            StatementId::AuxPhi1 => "aux_phi1",
            StatementId::PointMassCancellation => "point_mass_cancellation",
            StatementId::NecessityProbe => "necessity_probe",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ALL_STATEMENTS
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown statement id {s:?}")))
    }
}

impl std::fmt::Display for StatementId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Info,
    Vacuous,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Info => "info",
            Verdict::Vacuous => "vacuous",
        }
    }
}

/// One row of an experiment output.
#[derive(Clone, Debug)]
pub struct InequalityReport {
    pub statement: StatementId,
    pub kernel_id: String,
    pub phi_id: String,
    pub f_id: String,
    pub n: Option<i32>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub tail_bound: f64,
    pub verdict: Verdict,
    pub notes: String,
}

impl InequalityReport {
    fn new(statement: StatementId, spec: &KernelSpec, phi_label: &str, f_id: &str) -> Self {
        Self {
            statement,
            kernel_id: kernel_id(spec),
            phi_id: phi_label.to_string(),
            f_id: f_id.to_string(),
            n: None,
            lhs: 0.0,
            rhs: 0.0,
            ratio: 0.0,
            tail_bound: 0.0,
            verdict: Verdict::Info,
            notes: String::new(),
        }
    }

    fn with_sides(mut self, lhs: f64, rhs: f64) -> Self {
        self.lhs = lhs;
        self.rhs = rhs;
        if rhs > 0.0 {
            self.ratio = lhs / rhs;
        } else if lhs == 0.0 {
            self.ratio = 0.0;
            self.verdict = Verdict::Vacuous;
        } else {
            self.ratio = f64::INFINITY;
        }
        self
    }
}

pub fn kernel_id(spec: &KernelSpec) -> String {
    format!("d{}_a{}_{}", spec.d, spec.alpha, spec.tilde_k.name())
}

pub fn phi_id(phi: &PhiSpec) -> String {
    format!("{}_p{}", phi.family_name(), phi.p)
}

/// Truncation and discretization defaults for the checks.
#[derive(Clone, Debug)]
pub struct VerifyParams {
    pub bands: BandRange,
    /// Cap on convolution output half-widths.
    pub grid_cap: f64,
    pub max_cells: usize,
    pub method: ConvMethod,
    pub quad_seed: u64,
    /// Allowed factor between successive family members before a
    /// boundedness verdict fails.
    pub growth_factor: f64,
    /// Relative cancellation threshold.
    pub cancellation_rel: f64,
}

impl VerifyParams {
    /// Desk-scale defaults per dimension.
    pub fn default_for(d: usize) -> Self {
        let grid_cap = match d {
            1 => 8.0,
            2 => 4.0,
            _ => 2.0,
        };
        Self {
            bands: BandRange { lo: Some(-12), hi: 12 },
            grid_cap,
            max_cells: 1 << 24,
            method: ConvMethod::Fast,
            quad_seed: 0,
            growth_factor: 1.25,
            cancellation_rel: 1e-8,
        }
    }

    fn conv_params(&self) -> ConvParams {
        ConvParams { lo_min: -20, grid_cap: Some(self.grid_cap), max_cells: self.max_cells }
    }

    fn conv_params_uncapped(&self) -> ConvParams {
        ConvParams { lo_min: -20, grid_cap: None, max_cells: self.max_cells }
    }

    /// The configured band range clamped to what the grid of `f` resolves
    /// (band `n` needs `h ≤ 2^{−n−1}/4`); the clamped-away fine bands are
    /// charged to the inner tail bound.
    fn bands_for(&self, f: &GridFunction) -> BandRange {
        let hi_max = (-f.h().log2()).floor() as i32 - 3;
        BandRange { lo: self.bands.lo, hi: self.bands.hi.min(hi_max) }
    }
}

/// Analytic constants of the kernel derived from its sphere profile.
#[derive(Clone, Copy, Debug)]
struct KernelConstants {
    /// `sup |K̃|` over quadrature nodes.
    sup_profile: f64,
    /// `∫_{S^{d−1}} |K̃| dσ`.
    abs_integral: f64,
    /// Gradient constant `(d−α)·sup|K̃| + Lip(K̃)`.
    grad: f64,
    /// `‖K_0‖_{L₁} = abs_integral · (1 − 2^{−α})/α`.
    band0_l1: f64,
}

fn kernel_constants(spec: &KernelSpec, quad: &SphereQuadrature) -> KernelConstants {
    let mut buf = vec![0.0; spec.ell];
    let mut sup: f64 = 0.0;
    let abs_integral = {
        let mut acc = Accumulator::new();
        for (node, w) in quad.nodes() {
            spec.eval_profile(node, &mut buf);
            let m = buf.iter().map(|&v| v * v).sum::<f64>().sqrt();
            sup = sup.max(m);
            acc.push(w * m);
        }
        acc.finish()
    };
    let grad = (spec.d as f64 - spec.alpha) * sup + spec.lipschitz_bound;
    let band0_l1 = abs_integral * (1.0 - (-spec.alpha).exp2()) / spec.alpha;
    KernelConstants { sup_profile: sup, abs_integral, grad, band0_l1 }
}

/// Integral of a cellwise scalar field over its grid.
fn grid_integral(g: &GridFunction, field: &[f64]) -> f64 {
    g.cell_volume() * chunked_sum_by(field, |v| v)
}

/// `Φ` applied cell by cell to a vector-valued grid function.
fn phi_cellwise(phi: &PhiSpec, g: &GridFunction) -> Vec<f64> {
    let n = g.num_cells();
    let ell = g.components();
    let mut out = vec![0.0f64; n];
    let mut v = vec![0.0f64; ell];
    for (cell, slot_out) in out.iter_mut().enumerate() {
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = g.values()[c * n + cell];
        }
        *slot_out = phi.eval(&v);
    }
    out
}

/// Euclidean norm across components, cell by cell.
fn norm_cellwise(g: &GridFunction) -> Vec<f64> {
    let n = g.num_cells();
    let ell = g.components();
    (0..n)
        .map(|cell| {
            (0..ell)
                .map(|c| {
                    let v = g.values()[c * n + cell];
                    v * v
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn add_grids(a: &GridFunction, b: &GridFunction) -> GridFunction {
    assert_eq!(a.cells_per_axis(), b.cells_per_axis());
    assert_eq!(a.components(), b.components());
    let mut out = a.clone();
    for (o, v) in out.values_mut().iter_mut().zip(b.values()) {
        *o += v;
    }
    out
}

fn require_consistency(spec: &KernelSpec, phi: &PhiSpec) -> Result<()> {
    if phi.ell != spec.ell {
        return Err(Error::DimensionMismatch(format!(
            "phi.ell = {} vs kernel ell = {}",
            phi.ell, spec.ell
        )));
    }
    if (phi.p - spec.p()).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "p mismatch: phi.p = {} vs d/(d-alpha) = {}",
            phi.p,
            spec.p()
        )));
    }
    Ok(())
}

/// The zero function counts as zero-mean; checks report it as vacuous.
fn require_zero_mean(f: &GridFunction) -> Result<()> {
    if f.components() != 1 {
        return Err(Error::InvalidParameter("expected a scalar test function".into()));
    }
    if f.l1_norm() > 0.0 && !f.is_zero_mean() {
        return Err(Error::Precondition("test function must have zero integral".into()));
    }
    Ok(())
}

/// Grid value and analytic truncation bound for `∫ Φ(K_range * f)`.
#[derive(Clone, Debug)]
pub struct PhiIntegral {
    pub value: f64,
    /// Bound on the part of `∫ Φ(K_range*f)` living beyond the output grid.
    pub tail_bound: f64,
    pub half_width: f64,
    pub effective_range: BandRange,
}

pub fn phi_integral(
    spec: &KernelSpec,
    phi: &PhiSpec,
    f: &GridFunction,
    range: BandRange,
    params: &VerifyParams,
) -> Result<PhiIntegral> {
    require_consistency(spec, phi)?;
    require_zero_mean(f)?;
    let conv = convolve_with(spec, range, f, params.method, &params.conv_params())?;
    let field = phi_cellwise(phi, &conv.out);
    let value = grid_integral(&conv.out, &field);
    let tail = outer_tail_bound(spec, phi.sup_unit_bound(), f, &conv, params)?;
    Ok(PhiIntegral {
        value,
        tail_bound: tail,
        half_width: conv.out.half_width(),
        effective_range: conv.effective_range,
    })
}

/// Bound `∫_{|x| > R} |g(K_range*f)| dx` for `|g(v)| ≤ L|v|^p`, via the
/// zero-mean gradient mechanism `|K_range*f(x)| ≤ C_∇ (|x|−r_f)^{α−d−1} m₁`,
/// plus a crude shell term when the outermost kept sphere lies beyond the
/// grid and its jump shell must be crossed.
fn outer_tail_bound(
    spec: &KernelSpec,
    l_phi: f64,
    f: &GridFunction,
    conv: &Convolution,
    params: &VerifyParams,
) -> Result<f64> {
    let d = spec.d as f64;
    let p = spec.p();
    let alpha = spec.alpha;
    let big_r = conv.out.half_width();
    let r_f = f.support_radius();
    if f.l1_norm() == 0.0 {
        return Ok(0.0);
    }
    let resolved = conv.resolved_range;
    let outer = band_outer(resolved.lo.unwrap());
    if outer + r_f <= big_r {
        // The band reach ends on the grid; nothing lives outside.
        return Ok(0.0);
    }
    let quad = default_quadrature(spec.d, params.quad_seed)?;
    let consts = kernel_constants(spec, &quad);
    let inner = band_inner(resolved.hi);
    if big_r < 2.0 * r_f + 2.0 * inner {
        return Err(Error::Precondition(format!(
            "grid half-width {big_r} too small for a tail bound (support radius {r_f})"
        )));
    }
    let m1 = f.min_first_moment()?.value;
    let sigma = crate::phi::sphere_area(spec.d);
    // ∫_R^∞ (ρ − r_f)^{(α−d−1)p} ρ^{d−1} dρ with ρ^{d−1} ≤ κ (ρ−r_f)^{d−1}.
    let expo = (alpha - d - 1.0) * p + d;
    debug_assert!(expo < 0.0);
    let kappa = (big_r / (big_r - r_f)).powf(d - 1.0) / (-expo);
    let main = l_phi * (consts.grad * m1).powf(p) * sigma * kappa * (big_r - r_f).powf(expo);
    // Jump shell of the outermost kept sphere, if it lies beyond the grid.
    let mut shell = 0.0;
    if let Some(rout) = conv.effective_range.outer_radius() {
        if rout > big_r - r_f && rout > 4.0 * r_f {
            let reach = (rout - 2.0 * r_f).max(rout / 2.0);
            let amp = consts.sup_profile * reach.powf(alpha - d) * f.l1_norm();
            let vol = sigma * (rout + r_f).powf(d - 1.0) * 2.0 * r_f;
            shell = l_phi * amp.powf(p) * vol;
        }
    }
    Ok(main + shell)
}

/// Bound on `|∫Φ(K*f) − ∫Φ(K_{≤hi}*f)|` from the missing fine bands
/// `n > hi`: pointwise they add at most
/// `‖f‖_∞ ‖K₀‖₁ 2^{−α(hi+1)} / (1 − 2^{−α})`.
fn inner_band_tail(
    spec: &KernelSpec,
    phi: &PhiSpec,
    f: &GridFunction,
    banded: &GridFunction,
    hi: i32,
    params: &VerifyParams,
) -> Result<f64> {
    let quad = default_quadrature(spec.d, params.quad_seed)?;
    let consts = kernel_constants(spec, &quad);
    let alpha = spec.alpha;
    let p = spec.p();
    let delta =
        f.sup_norm() * consts.band0_l1 * (-alpha * (hi as f64 + 1.0)).exp2() / (1.0 - (-alpha).exp2());
    let l_pair = phi.pair_lipschitz_bound();
    let norms = norm_cellwise(banded);
    let weighted = chunked_sum_by(&norms, |v| (v + delta).powf(p - 1.0));
    Ok(l_pair * delta * banded.cell_volume() * weighted)
}

/// `|∫Φ(K*f)| ≲ ‖f‖₁^p`, the main inequality, as a measured ratio.
pub fn main_ratio(
    spec: &KernelSpec,
    phi: &PhiSpec,
    f: &GridFunction,
    f_id: &str,
    params: &VerifyParams,
) -> Result<InequalityReport> {
    require_consistency(spec, phi)?;
    require_zero_mean(f)?;
    let bands = params.bands_for(f);
    let conv = convolve_with(spec, bands, f, params.method, &params.conv_params())?;
    let field = phi_cellwise(phi, &conv.out);
    let value = grid_integral(&conv.out, &field);
    let outer = outer_tail_bound(spec, phi.sup_unit_bound(), f, &conv, params)?;
    let inner = inner_band_tail(spec, phi, f, &conv.out, bands.hi, params)?;
    let lhs = value.abs();
    let rhs = f.l1_norm().powf(spec.p());
    let mut rep =
        InequalityReport::new(StatementId::MainRatio, spec, &phi_id(phi), f_id).with_sides(lhs, rhs);
    rep.tail_bound = outer + inner;
    rep.notes = format!("bands {} grid R={}", conv.effective_range, conv.out.half_width());
    Ok(rep)
}

/// `∫ |K_{≤0}*f|^p ≲ ‖f‖₁^p` for zero-mean `f` supported in `B_{1/2}(0)`.
pub fn first_lemma_check(
    spec: &KernelSpec,
    f: &GridFunction,
    f_id: &str,
    params: &VerifyParams,
) -> Result<InequalityReport> {
    if f.components() == 1 && f.l1_norm() == 0.0 {
        let mut rep =
            InequalityReport::new(StatementId::FirstLemma, spec, "-", f_id).with_sides(0.0, 0.0);
        rep.notes = "zero function: vacuous".into();
        return Ok(rep);
    }
    require_zero_mean(f)?;
    let r_f = f.support_radius();
    if r_f > 0.5 {
        return Err(Error::Precondition(format!("support radius {r_f} exceeds 1/2")));
    }
    let p = spec.p();
    let conv = convolve_with(spec, BandRange::up_to(0), f, params.method, &params.conv_params())?;
    let norms = norm_cellwise(&conv.out);
    let value = conv.out.cell_volume() * chunked_sum_by(&norms, |v| v.powf(p));
    let tail = outer_tail_bound(spec, 1.0, f, &conv, params)?;
    let mut rep = InequalityReport::new(StatementId::FirstLemma, spec, "-", f_id)
        .with_sides(value, f.l1_norm().powf(p));
    rep.tail_bound = tail;
    Ok(rep)
}

/// `K_{≤n}*f` and `K_{n+1}*f` on one shared grid.
fn band_pair(
    spec: &KernelSpec,
    f: &GridFunction,
    n: i32,
    params: &VerifyParams,
) -> Result<(GridFunction, GridFunction)> {
    let a = convolve_with(spec, BandRange::up_to(n), f, params.method, &params.conv_params())?;
    let b = convolve_with(
        spec,
        BandRange::single(n + 1),
        f,
        params.method,
        &params.conv_params_uncapped(),
    )?;
    let hw = a.out.half_width().max(b.out.half_width());
    Ok((a.out.embed_into(hw)?, b.out.embed_into(hw)?))
}

/// The band-increment bound: `|∫Φ(K_{≤n+1}*f) − ∫Φ(K_{≤n}*f)|` against
/// `|∫Φ(K_{n+1}*f)| + ∫ M_p(|K_{≤n}*f|, |K_{n+1}*f|)`.
pub fn second_lemma_check(
    spec: &KernelSpec,
    phi: &PhiSpec,
    f: &GridFunction,
    f_id: &str,
    n: i32,
    params: &VerifyParams,
) -> Result<InequalityReport> {
    require_consistency(spec, phi)?;
    require_zero_mean(f)?;
    let p = spec.p();
    if p > 2.0 {
        return Err(Error::Precondition(
            "p > 2: the min-form M_p does not apply; use the x^{p-1}y + xy^{p-1} paths".into(),
        ));
    }
    if n < 0 {
        return Err(Error::InvalidParameter("n must be non-negative".into()));
    }
    let (a, b) = band_pair(spec, f, n, params)?;
    let sum = add_grids(&a, &b);
    let phi_sum = grid_integral(&sum, &phi_cellwise(phi, &sum));
    let phi_a = grid_integral(&a, &phi_cellwise(phi, &a));
    let phi_b = grid_integral(&b, &phi_cellwise(phi, &b));
    let na = norm_cellwise(&a);
    let nb = norm_cellwise(&b);
    let cross = a.cell_volume() * {
        let mut acc = Accumulator::new();
        for (x, y) in na.iter().zip(&nb) {
            acc.push(m_p_auto(p, *x, *y));
        }
        acc.finish()
    };
    let lhs = (phi_sum - phi_a).abs();
    let rhs = phi_b.abs() + cross;
    let mut rep = InequalityReport::new(StatementId::SecondLemma, spec, &phi_id(phi), f_id)
        .with_sides(lhs, rhs);
    rep.n = Some(n);
    Ok(rep)
}

/// Partial sum of `Σ_{n≥1} |∫Φ(K_n*f)| ≲ ‖f‖₁^p` up to `N`, with a geometric
/// bound on the discarded fine bands.
pub fn main2_partial(
    spec: &KernelSpec,
    phi: &PhiSpec,
    f: &GridFunction,
    f_id: &str,
    n_max: i32,
    params: &VerifyParams,
) -> Result<InequalityReport> {
    require_consistency(spec, phi)?;
    require_zero_mean(f)?;
    let p = spec.p();
    // Bands past the grid resolution are charged to the tail.
    let n_eff = n_max.min(params.bands_for(f).hi);
    let mut lhs = 0.0;
    for n in 1..=n_eff {
        let conv = convolve_with(
            spec,
            BandRange::single(n),
            f,
            params.method,
            &params.conv_params_uncapped(),
        )?;
        let v = grid_integral(&conv.out, &phi_cellwise(phi, &conv.out));
        lhs += v.abs();
    }
    let quad = default_quadrature(spec.d, params.quad_seed)?;
    let consts = kernel_constants(spec, &quad);
    // Σ_{n > N} |∫Φ(K_n*f)| ≤ L Σ (2^{−αn}‖K₀‖₁)^p ‖f‖_∞^{p−1} ‖f‖₁.
    let q = (-spec.alpha * p).exp2();
    let tail = phi.sup_unit_bound()
        * consts.band0_l1.powf(p)
        * f.sup_norm().powf(p - 1.0)
        * f.l1_norm()
        * q.powi(n_eff + 1)
        / (1.0 - q);
    let mut rep = InequalityReport::new(StatementId::Main2Partial, spec, &phi_id(phi), f_id)
        .with_sides(lhs, f.l1_norm().powf(p));
    rep.n = Some(n_eff);
    rep.tail_bound = tail;
    rep.notes = format!("partial sum over n in [1,{n_eff}]");
    Ok(rep)
}

/// Partial sum of `Σ_{n≥0} ∫ M_p(|K_{≤n}*f|, |K_{n+1}*f|) ≲ ‖f‖₁^p`; the
/// min-form is used for `p ≤ 2` and the sum-form beyond.
pub fn remainder_partial(
    spec: &KernelSpec,
    f: &GridFunction,
    f_id: &str,
    n_max: i32,
    p: f64,
    params: &VerifyParams,
) -> Result<InequalityReport> {
    require_zero_mean(f)?;
    if (p - spec.p()).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "p = {p} does not match the kernel exponent {}",
            spec.p()
        )));
    }
    let mut lhs = 0.0;
    for n in 0..=n_max {
        let (a, b) = band_pair(spec, f, n, params)?;
        let na = norm_cellwise(&a);
        let nb = norm_cellwise(&b);
        let mut acc = Accumulator::new();
        for (x, y) in na.iter().zip(&nb) {
            acc.push(m_p_auto(p, *x, *y));
        }
        lhs += a.cell_volume() * acc.finish();
    }
    let quad = default_quadrature(spec.d, params.quad_seed)?;
    let consts = kernel_constants(spec, &quad);
    let alpha = spec.alpha;
    // sup_n ‖K_{≤n}*f‖_∞ via a near/far split at ρ = (‖f‖₁/‖f‖_∞)^{1/d}.
    let c_sup = if f.l1_norm() == 0.0 {
        0.0
    } else {
        let rho = (f.l1_norm() / f.sup_norm()).powf(1.0 / spec.d as f64);
        f.sup_norm() * consts.abs_integral * rho.powf(alpha) / alpha
            + consts.sup_profile * rho.powf(alpha - spec.d as f64) * f.l1_norm()
    };
    let q = (-alpha).exp2();
    let tail = if p <= 2.0 {
        // M_p(x, y) ≤ x^{p−1} y.
        c_sup.powf(p - 1.0) * consts.band0_l1 * f.l1_norm() * q.powi(n_max + 2) / (1.0 - q)
    } else {
        let qp = (-alpha * (p - 1.0)).exp2();
        c_sup.powf(p - 1.0) * consts.band0_l1 * f.l1_norm() * q.powi(n_max + 2) / (1.0 - q)
            + c_sup
                * (consts.band0_l1 * f.sup_norm()).powf(p - 2.0)
                * consts.band0_l1
                * f.l1_norm()
                * qp.powi(n_max + 2)
                / (1.0 - qp)
    };
    let mut rep = InequalityReport::new(StatementId::RemainderPartial, spec, "-", f_id)
        .with_sides(lhs, f.l1_norm().powf(p));
    rep.n = Some(n_max);
    rep.tail_bound = tail;
    rep.notes = format!("partial sum over n in [0,{n_max}]");
    Ok(rep)
}

/// `|∫Φ(K_n*f)| ≲ 2^n ‖f‖₁^{p−1} inf_c ∫|x−c||f|`.
pub fn median_bound_check(
    spec: &KernelSpec,
    phi: &PhiSpec,
    f: &GridFunction,
    f_id: &str,
    n: i32,
    params: &VerifyParams,
) -> Result<InequalityReport> {
    require_consistency(spec, phi)?;
    if f.l1_norm() == 0.0 {
        let mut rep = InequalityReport::new(StatementId::MedianBound, spec, &phi_id(phi), f_id)
            .with_sides(0.0, 0.0);
        rep.n = Some(n);
        return Ok(rep);
    }
    let conv = convolve_with(
        spec,
        BandRange::single(n),
        f,
        params.method,
        &params.conv_params_uncapped(),
    )?;
    let lhs = grid_integral(&conv.out, &phi_cellwise(phi, &conv.out)).abs();
    let moment = f.min_first_moment()?;
    let rhs = (n as f64).exp2() * f.l1_norm().powf(spec.p() - 1.0) * moment.value;
    let mut rep = InequalityReport::new(StatementId::MedianBound, spec, &phi_id(phi), f_id)
        .with_sides(lhs, rhs);
    rep.n = Some(n);
    Ok(rep)
}

/// `|∫Φ(K_{n+1}*f)| ≲ 2^n Σ_j ‖f‖_{L₁(3^d Q_{n,j})}^{p−1}
/// inf_c ∫_{3^d Q_{n,j}} |x−c||f|` over the dyadic lattice cubes meeting
/// `supp f`.
pub fn local_main2_check(
    spec: &KernelSpec,
    phi: &PhiSpec,
    f: &GridFunction,
    f_id: &str,
    n: i32,
    params: &VerifyParams,
) -> Result<InequalityReport> {
    require_consistency(spec, phi)?;
    if n < 0 {
        return Err(Error::InvalidParameter("n must be non-negative".into()));
    }
    if f.l1_norm() == 0.0 {
        let mut rep = InequalityReport::new(StatementId::LocalMain2, spec, &phi_id(phi), f_id)
            .with_sides(0.0, 0.0);
        rep.n = Some(n);
        return Ok(rep);
    }
    let conv = convolve_with(
        spec,
        BandRange::single(n + 1),
        f,
        params.method,
        &params.conv_params_uncapped(),
    )?;
    let lhs = grid_integral(&conv.out, &phi_cellwise(phi, &conv.out)).abs();

    let d = spec.d;
    let p = spec.p();
    let side = (-(n as f64)).exp2();
    let dilation = 3usize.pow(d as u32) as f64;
    let jmax = (f.half_width() / side).ceil() as i64;
    let mut rhs_sum = 0.0;
    let mut counted = 0usize;
    let mut j = vec![-jmax; d];
    'cubes: loop {
        // 3^d Q_{n,j}: same center as Q_{n,j}, side 3^d · 2^{−n}.
        let corner: Vec<f64> = j
            .iter()
            .map(|&ja| (ja as f64 + 0.5) * side - 0.5 * dilation * side)
            .collect();
        let restricted = f.restrict_to_box(&corner, dilation * side)?;
        let mass = restricted.l1_norm();
        if mass > 0.0 {
            let moment = restricted.min_first_moment()?;
            rhs_sum += mass.powf(p - 1.0) * moment.value;
            counted += 1;
        }
        for a in (0..d).rev() {
            j[a] += 1;
            if j[a] < jmax {
                continue 'cubes;
            }
            j[a] = -jmax;
        }
        break;
    }
    let rhs = (n as f64).exp2() * rhs_sum;
    let mut rep = InequalityReport::new(StatementId::LocalMain2, spec, &phi_id(phi), f_id)
        .with_sides(lhs, rhs);
    rep.n = Some(n);
    rep.notes = format!("{counted} lattice cubes meet supp f");
    Ok(rep)
}

/// Cancellation residuals as a report row.
pub fn cancellation_report(
    spec: &KernelSpec,
    phi: &PhiSpec,
    quad: &SphereQuadrature,
    params: &VerifyParams,
) -> Result<(InequalityReport, CancellationReport)> {
    let rep = check_cancellation(phi, spec, quad)?;
    let mut row = InequalityReport::new(StatementId::Cancellation, spec, &phi_id(phi), "-");
    row.lhs = rep.residual_plus.abs().max(rep.residual_minus.abs());
    row.rhs = rep.normalizer;
    row.ratio = if rep.normalizer > 0.0 { row.lhs / rep.normalizer } else { 0.0 };
    row.verdict = if rep.cancels(params.cancellation_rel) { Verdict::Pass } else { Verdict::Fail };
    row.notes = format!(
        "residual_plus={:e} residual_minus={:e} scheme={}",
        rep.residual_plus, rep.residual_minus, quad.scheme
    );
    Ok((row, rep))
}

/// `∫Φ(K_n * (unit cell mass))` must vanish relative to `∫|Φ(K_n * ...)|`
/// (the per-band cancellation identity at a point mass).
pub fn point_mass_cancellation(
    spec: &KernelSpec,
    phi: &PhiSpec,
    n: i32,
    half_width: f64,
    cells: usize,
    params: &VerifyParams,
) -> Result<InequalityReport> {
    require_consistency(spec, phi)?;
    let mut f = GridFunction::zeros(spec.d, 1, half_width, cells)?;
    let mid = cells / 2;
    let idx = vec![mid; spec.d];
    let flat = f.flat_index(&idx);
    let vol = f.cell_volume();
    f.values_mut()[flat] = 1.0 / vol;
    let conv = convolve_with(
        spec,
        BandRange::single(n),
        &f,
        params.method,
        &params.conv_params_uncapped(),
    )?;
    let field = phi_cellwise(phi, &conv.out);
    let signed = grid_integral(&conv.out, &field);
    let absolute = conv.out.cell_volume() * chunked_sum_by(&field, |v| v.abs());
    let mut rep =
        InequalityReport::new(StatementId::PointMassCancellation, spec, &phi_id(phi), "point_mass");
    rep.n = Some(n);
    rep.lhs = signed.abs();
    rep.rhs = absolute;
    rep.ratio = if absolute > 0.0 { signed.abs() / absolute } else { 0.0 };
    rep.verdict =
        if signed.abs() <= 1e-6 * absolute.max(1e-300) { Verdict::Pass } else { Verdict::Fail };
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeVerdict {
    /// Ratios grow strictly across the last widths: necessity exhibited.
    DivergenceObserved,
    /// Ratios stay within the growth factor: bounded family.
    Bounded,
    /// Neither clean growth nor boundedness at this resolution.
    Undecided,
    /// Φ satisfies the cancellation conditions; the probe proves nothing.
    InconclusiveCancelling,
}

impl ProbeVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProbeVerdict::DivergenceObserved => "divergence_observed",
            ProbeVerdict::Bounded => "bounded",
            ProbeVerdict::Undecided => "undecided",
            ProbeVerdict::InconclusiveCancelling => "inconclusive_cancelling",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProbeResult {
    pub rows: Vec<InequalityReport>,
    pub ratios: Vec<f64>,
    pub widths: Vec<f64>,
    pub verdict: ProbeVerdict,
}

/// Sweep delta-mimicking dipoles of shrinking width through the main ratio.
/// For a non-cancelling Φ the ratios must grow without bound (strict growth
/// across the last three widths is the divergence criterion); for a
/// cancelling Φ the sweep is reported but inconclusive by design.
pub fn cancellation_necessity_probe(
    spec: &KernelSpec,
    phi: &PhiSpec,
    widths: &[f64],
    dipole_offset: f64,
    cells: usize,
    params: &VerifyParams,
) -> Result<ProbeResult> {
    if widths.len() < 3 {
        return Err(Error::InvalidParameter("need at least three widths".into()));
    }
    let quad = default_quadrature(spec.d, params.quad_seed)?;
    let cancels = check_cancellation(phi, spec, &quad)?.cancels(params.cancellation_rel);
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for &w in widths {
        let mut z = vec![0.0; spec.d];
        z[0] = dipole_offset;
        let f = make_dipole(&DipoleSpec { z, width: w }, spec.d, 1.0, cells)?;
        let f_id = format!("dipole_w{w:.9}");
        let mut rep = main_ratio(spec, phi, &f, &f_id, params)?;
        rep.statement = StatementId::NecessityProbe;
        ratios.push(rep.ratio);
        rows.push(rep);
    }
    let k = ratios.len();
    let strictly_growing = ratios[k - 3] < ratios[k - 2] && ratios[k - 2] < ratios[k - 1];
    let bounded = ratios
        .windows(2)
        .all(|w| w[1] <= params.growth_factor * w[0].max(1e-300) || w[1] <= w[0]);
    let verdict = if cancels {
        ProbeVerdict::InconclusiveCancelling
    } else if strictly_growing {
        ProbeVerdict::DivergenceObserved
    } else if bounded {
        ProbeVerdict::Bounded
    } else {
        ProbeVerdict::Undecided
    };
    for row in &mut rows {
        row.verdict = if verdict == ProbeVerdict::Undecided { Verdict::Fail } else { Verdict::Pass };
        row.notes = format!("probe verdict {}", verdict.as_str());
    }
    Ok(ProbeResult { rows, ratios, widths: widths.to_vec(), verdict })
}

/// Maximum observed ratio of one auxiliary bound over deterministic grids
/// plus seeded draws.
fn aux_report(
    statement: StatementId,
    spec: &KernelSpec,
    phi_label: &str,
    max_ratio: f64,
    cases: usize,
    notes: String,
) -> InequalityReport {
    let mut rep = InequalityReport::new(statement, spec, phi_label, "-");
    rep.lhs = max_ratio;
    rep.rhs = 1.0;
    rep.ratio = max_ratio;
    rep.verdict = if max_ratio.is_finite() { Verdict::Pass } else { Verdict::Fail };
    rep.notes = format!("max ratio over {cases} cases; {notes}");
    rep
}

/// Kernel difference bound `|K_{≤0}(x−y) − K_{≤0}(x)| ≲ |y|/|x|^{d−α+1}`
/// for `|x| ≥ 2`, `|y| ≤ 1`.
pub fn aux_k1_check(spec: &KernelSpec, params: &VerifyParams) -> Result<InequalityReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.quad_seed ^ 0xA1);
    let quad = default_quadrature(spec.d, params.quad_seed)?;
    let dirs: Vec<Vec<f64>> = quad.nodes().map(|(node, _)| node.to_vec()).take(64).collect();
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    let range = BandRange::up_to(0);
    let mut check = |x: &[f64], y: &[f64]| {
        let ynorm = crate::kernel::norm(y);
        if ynorm == 0.0 {
            return;
        }
        let shifted: Vec<f64> = x.iter().zip(y).map(|(&a, &b)| a - b).collect();
        let kx = spec.eval_band_sum(range, x);
        let kxy = spec.eval_band_sum(range, &shifted);
        let diff = kx
            .iter()
            .zip(&kxy)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let xnorm = crate::kernel::norm(x);
        let bound = ynorm / xnorm.powf(spec.d as f64 - spec.alpha + 1.0);
        worst = worst.max(diff / bound);
        cases += 1;
    };
    // Deterministic sweep: log-spaced radii, quadrature directions.
    for i in 0..9 {
        let r = 2.0 * 8.0f64.powf(i as f64 / 8.0);
        for dir in &dirs {
            let x: Vec<f64> = dir.iter().map(|&c| c * r).collect();
            for frac in [0.1, 0.5, 1.0] {
                let y: Vec<f64> = dir.iter().map(|&c| -c * frac).collect();
                check(&x, &y);
            }
        }
    }
    // Seeded draws.
    for _ in 0..2000 {
        let r = 2.0 * 8.0f64.powf(rng.random::<f64>());
        let xdir = &dirs[rng.random_range(0..dirs.len())];
        let x: Vec<f64> = xdir.iter().map(|&c| c * r).collect();
        let y: Vec<f64> = (0..spec.d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let ynorm = crate::kernel::norm(&y);
        if ynorm > 1.0 || ynorm == 0.0 {
            continue;
        }
        check(&x, &y);
    }
    Ok(aux_report(StatementId::AuxK1, spec, "-", worst, cases, "|x| in [2,16], |y| <= 1".into()))
}

/// `|K_{≤0}|*|K_1|(x) ≲ |x|(1+|x|)^{−d/2−1}` for `p = 2`, by direct
/// quadrature; the anchor value at `x = 0` must vanish identically because
/// the two kernels are supported outside and inside `B_{1/2}(0)`.
pub fn aux_k2_check(spec: &KernelSpec, params: &VerifyParams) -> Result<InequalityReport> {
    if (spec.p() - 2.0).abs() > 1e-12 {
        return Err(Error::Precondition("the convolution bound is stated for p = 2".into()));
    }
    let d = spec.d;
    // |K_1| lives on 1/4 ≤ |y| ≤ 1/2; integrate over that ball by midpoints.
    let cells = if d == 1 { 1 << 12 } else { 1 << 8 };
    let grid = GridFunction::zeros(d, 1, 0.5, cells)?;
    let h = grid.h();
    let mut worst = 0.0f64;
    let mut at_zero = 0.0f64;
    let mut cases = 0usize;
    let quad = default_quadrature(d, params.quad_seed)?;
    let dirs: Vec<Vec<f64>> = quad.nodes().map(|(node, _)| node.to_vec()).take(8).collect();
    let mut radii = vec![0.0];
    for i in 0..12 {
        radii.push(0.05 * 1.6f64.powi(i));
    }
    for r in radii {
        for dir in &dirs {
            let x: Vec<f64> = dir.iter().map(|&c| c * r).collect();
            let mut acc = Accumulator::new();
            let mut idx = vec![0usize; d];
            for _ in 0..grid.num_cells() {
                let y: Vec<f64> = idx.iter().map(|&i| grid.axis_center(i)).collect();
                let k1 = spec.eval_band(1, &y);
                let k1n = k1.iter().map(|v| v * v).sum::<f64>().sqrt();
                if k1n > 0.0 {
                    let shifted: Vec<f64> = x.iter().zip(&y).map(|(&a, &b)| a - b).collect();
                    let k0 = spec.eval_band_sum(BandRange::up_to(0), &shifted);
                    let k0n = k0.iter().map(|v| v * v).sum::<f64>().sqrt();
                    acc.push(k0n * k1n);
                }
                crate::gridfn::increment_index(&mut idx, cells);
            }
            let value = acc.finish() * h.powi(d as i32);
            if r == 0.0 {
                at_zero = at_zero.max(value.abs());
            } else {
                let bound = r * (1.0 + r).powf(-(d as f64) / 2.0 - 1.0);
                worst = worst.max(value / bound);
            }
            cases += 1;
            if r == 0.0 {
                break; // all directions coincide at the origin
            }
        }
    }
    if at_zero != 0.0 {
        return Err(Error::Precondition(format!(
            "disjoint supports must force the anchor value 0, got {at_zero:e}"
        )));
    }
    Ok(aux_report(StatementId::AuxK2, spec, "-", worst, cases, "anchor at x=0 is exactly 0".into()))
}

/// `∫ |K_0(x−z) − K_0(x−y)| dx ≲ |z−y|`, with sub-cell refinement on the
/// jump shells of both shifted kernels.
pub fn aux_k3_check(spec: &KernelSpec, params: &VerifyParams) -> Result<InequalityReport> {
    use rand::{Rng, SeedableRng};
    let d = spec.d;
    let cells = if d == 1 { 1 << 12 } else { 1 << 8 };
    let grid = GridFunction::zeros(d, 1, 2.0, cells)?;
    let h = grid.h();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.quad_seed ^ 0xA3);
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    let mut offsets: Vec<Vec<f64>> = vec![];
    for i in 1..=4 {
        let mut y = vec![0.0; d];
        y[0] = 0.025 * i as f64;
        offsets.push(y);
    }
    for _ in 0..4 {
        let y: Vec<f64> = (0..d).map(|_| 0.1 * (2.0 * rng.random::<f64>() - 1.0)).collect();
        if crate::kernel::norm(&y) > 1e-3 {
            offsets.push(y);
        }
    }
    for y in offsets {
        let ynorm = crate::kernel::norm(&y);
        let mut acc = Accumulator::new();
        let mut idx = vec![0usize; d];
        for _ in 0..grid.num_cells() {
            let x: Vec<f64> = idx.iter().map(|&i| grid.axis_center(i)).collect();
            acc.push(k3_cell_value(spec, &x, &y, 0.5 * h, 0));
            crate::gridfn::increment_index(&mut idx, cells);
        }
        let integral = acc.finish() * h.powi(d as i32);
        worst = worst.max(integral / ynorm);
        cases += 1;
    }
    Ok(aux_report(StatementId::AuxK3, spec, "-", worst, cases, "jump shells refined".into()))
}

fn k3_cell_value(spec: &KernelSpec, center: &[f64], y: &[f64], half: f64, depth: usize) -> f64 {
    let d = center.len();
    let straddle = |c: &[f64]| {
        let mut near2 = 0.0;
        let mut far2 = 0.0;
        for &v in c {
            let lo = (v.abs() - half).max(0.0);
            let hi = v.abs() + half;
            near2 += lo * lo;
            far2 += hi * hi;
        }
        let (near, far) = (near2.sqrt(), far2.sqrt());
        (near < 0.5 && 0.5 < far) || (near < 1.0 && 1.0 < far)
    };
    let shifted: Vec<f64> = center.iter().zip(y).map(|(&a, &b)| a - b).collect();
    if depth < 3 && (straddle(center) || straddle(&shifted)) {
        let sub = 4usize.pow(d as u32);
        let mut total = 0.0;
        let mut child = vec![0.0; d];
        for k in 0..sub {
            let mut rem = k;
            for a in (0..d).rev() {
                let q = (rem % 4) as f64;
                rem /= 4;
                child[a] = center[a] + (q - 1.5) * half / 2.0;
            }
            total += k3_cell_value(spec, &child, y, half / 4.0, depth + 1);
        }
        return total / sub as f64;
    }
    let k0x = spec.eval_band(0, center);
    let k0xy = spec.eval_band(0, &shifted);
    k0x.iter().zip(&k0xy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `|Φ(a+b) − Φ(a)| ≲ |a|^{p−1}|b|` over seeded draws with `|b| ≤ 2|a|`.
pub fn aux_phi1_check(
    spec: &KernelSpec,
    phi: &PhiSpec,
    params: &VerifyParams,
) -> Result<InequalityReport> {
    use rand::{Rng, SeedableRng};
    require_consistency(spec, phi)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.quad_seed ^ 0xF1);
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    while cases < 10_000 {
        let a: Vec<f64> = (0..phi.ell).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
        let an = crate::kernel::norm(&a);
        if an < 1e-9 {
            continue;
        }
        let raw: Vec<f64> = (0..phi.ell).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let rn = crate::kernel::norm(&raw);
        if rn == 0.0 {
            continue;
        }
        let scale = rng.random::<f64>() * 2.0 * an / rn;
        let b: Vec<f64> = raw.iter().map(|&c| c * scale).collect();
        let bn = crate::kernel::norm(&b);
        if bn == 0.0 {
            continue;
        }
        let sum: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| x + y).collect();
        let lhs = (phi.eval(&sum) - phi.eval(&a)).abs();
        let rhs = an.powf(phi.p - 1.0) * bn;
        worst = worst.max(lhs / rhs);
        cases += 1;
    }
    Ok(aux_report(StatementId::AuxPhi1, spec, &phi_id(phi), worst, cases, "|b| <= 2|a|".into()))
}

/// The auxiliary lemma family applicable to this kernel/functional pair.
pub fn aux_lemma_suite(
    spec: &KernelSpec,
    phi: &PhiSpec,
    params: &VerifyParams,
) -> Result<Vec<InequalityReport>> {
    let mut out = vec![aux_k1_check(spec, params)?];
    if (spec.p() - 2.0).abs() <= 1e-12 {
        out.push(aux_k2_check(spec, params)?);
    }
    out.push(aux_k3_check(spec, params)?);
    out.push(aux_phi1_check(spec, phi, params)?);
    Ok(out)
}

/// What the batched suite should run, and on which test-function family.
#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub statements: Vec<StatementId>,
    pub dipole_widths: Vec<f64>,
    pub dipole_offset: f64,
    pub random_bumps: usize,
    pub seed: u64,
    pub band_indices: Vec<i32>,
    pub main2_n: i32,
    pub remainder_n: i32,
    pub grid_half_width: f64,
    pub cells_per_axis: usize,
    /// Also evaluate every f scaled by this factor, exposing the ratio
    /// invariance in the output rows.
    pub lambda_duplicate: Option<f64>,
}

impl SuiteConfig {
    pub fn default_for(d: usize) -> Self {
        let cells = match d {
            1 => 1 << 10,
            2 => 1 << 8,
            _ => 1 << 6,
        };
        // Keep default dipole widths resolvable (>= 2h) on the default grid.
        let dipole_widths = if d <= 2 {
            vec![0.125, 0.0625, 0.03125]
        } else {
            vec![0.25, 0.125]
        };
        Self {
            statements: vec![
                StatementId::Cancellation,
                StatementId::MainRatio,
                StatementId::FirstLemma,
                StatementId::SecondLemma,
                StatementId::Main2Partial,
                StatementId::RemainderPartial,
                StatementId::MedianBound,
                StatementId::LocalMain2,
                StatementId::AuxK1,
                StatementId::AuxK2,
                StatementId::AuxK3,
                StatementId::AuxPhi1,
                StatementId::PointMassCancellation,
            ],
            dipole_widths,
            dipole_offset: 0.5,
            random_bumps: 1,
            seed: 7,
            band_indices: vec![0, 1, 2],
            main2_n: 8,
            remainder_n: 5,
            grid_half_width: 1.0,
            cells_per_axis: cells,
            lambda_duplicate: Some(3.0),
        }
    }
}

/// The suite's test-function family, with stable identifiers.
pub fn suite_functions(spec: &KernelSpec, cfg: &SuiteConfig) -> Result<Vec<(String, GridFunction)>> {
    let mut out = Vec::new();
    for &w in &cfg.dipole_widths {
        let mut z = vec![0.0; spec.d];
        z[0] = cfg.dipole_offset;
        let f = make_dipole(
            &DipoleSpec { z, width: w },
            spec.d,
            cfg.grid_half_width,
            cfg.cells_per_axis,
        )?;
        out.push((format!("dipole_w{w:.9}"), f));
    }
    for i in 0..cfg.random_bumps {
        let seed = cfg.seed.wrapping_add(i as u64);
        let f = crate::gridfn::make_random_bumps(
            4,
            seed,
            spec.d,
            cfg.grid_half_width,
            cfg.cells_per_axis,
        )?;
        out.push((format!("bumps_s{seed}"), f));
    }
    if let Some(lambda) = cfg.lambda_duplicate {
        let scaled: Vec<(String, GridFunction)> = out
            .iter()
            .map(|(id, f)| (format!("{id}_x{lambda}"), f.scaled(lambda)))
            .collect();
        out.extend(scaled);
    }
    Ok(out)
}

/// Run every selected statement over the family; rows come back sorted by
/// `(statement, f_id, n)`.
pub fn run_suite(
    spec: &KernelSpec,
    phi: &PhiSpec,
    cfg: &SuiteConfig,
    params: &VerifyParams,
) -> Result<Vec<InequalityReport>> {
    let functions = suite_functions(spec, cfg)?;
    let mut rows: Vec<InequalityReport> = Vec::new();
    for statement in &cfg.statements {
        match statement {
            StatementId::Cancellation => {
                let quad = default_quadrature(spec.d, params.quad_seed)?;
                let (row, _) = cancellation_report(spec, phi, &quad, params)?;
                rows.push(row);
            }
            StatementId::MainRatio => {
                for (f_id, f) in &functions {
                    rows.push(main_ratio(spec, phi, f, f_id, params)?);
                }
            }
            StatementId::FirstLemma => {
                // Needs supp f inside B_{1/2}: use shrunk dipoles, skipping
                // widths the grid cannot resolve after shrinking.
                let h = 2.0 * cfg.grid_half_width / cfg.cells_per_axis as f64;
                for &w in &cfg.dipole_widths {
                    let w4 = w / 4.0;
                    if w4 < 2.0 * h {
                        continue;
                    }
                    let mut z = vec![0.0; spec.d];
                    z[0] = cfg.dipole_offset / 4.0;
                    let f = make_dipole(
                        &DipoleSpec { z, width: w4 },
                        spec.d,
                        cfg.grid_half_width,
                        cfg.cells_per_axis,
                    )?;
                    rows.push(first_lemma_check(spec, &f, &format!("dipole_q_w{w4:.9}"), params)?);
                }
            }
            StatementId::SecondLemma => {
                if spec.p() <= 2.0 {
                    for (f_id, f) in &functions {
                        for &n in &cfg.band_indices {
                            rows.push(second_lemma_check(spec, phi, f, f_id, n, params)?);
                        }
                    }
                }
            }
            StatementId::Main2Partial => {
                for (f_id, f) in &functions {
                    rows.push(main2_partial(spec, phi, f, f_id, cfg.main2_n, params)?);
                }
            }
            StatementId::RemainderPartial => {
                for (f_id, f) in &functions {
                    rows.push(remainder_partial(spec, f, f_id, cfg.remainder_n, spec.p(), params)?);
                }
            }
            StatementId::MedianBound => {
                for (f_id, f) in &functions {
                    for &n in &cfg.band_indices {
                        rows.push(median_bound_check(spec, phi, f, f_id, n, params)?);
                    }
                }
            }
            StatementId::LocalMain2 => {
                for (f_id, f) in &functions {
                    for &n in &cfg.band_indices {
                        rows.push(local_main2_check(spec, phi, f, f_id, n, params)?);
                    }
                }
            }
            StatementId::AuxK1 => rows.push(aux_k1_check(spec, params)?),
            StatementId::AuxK2 => {
                if (spec.p() - 2.0).abs() <= 1e-12 {
                    rows.push(aux_k2_check(spec, params)?);
                }
            }
            StatementId::AuxK3 => rows.push(aux_k3_check(spec, params)?),
            StatementId::AuxPhi1 => rows.push(aux_phi1_check(spec, phi, params)?),
            StatementId::PointMassCancellation => {
                let hi_max = ((cfg.cells_per_axis as f64 / (2.0 * cfg.grid_half_width)).log2()
                    as i32
                    - 3)
                    .min(4);
                for n in 0..=hi_max.max(0) {
                    rows.push(point_mass_cancellation(
                        spec,
                        phi,
                        n,
                        cfg.grid_half_width,
                        cfg.cells_per_axis,
                        params,
                    )?);
                }
            }
            StatementId::NecessityProbe => {
                let probe = cancellation_necessity_probe(
                    spec,
                    phi,
                    &cfg.dipole_widths,
                    cfg.dipole_offset,
                    cfg.cells_per_axis,
                    params,
                )?;
                rows.extend(probe.rows);
            }
        }
    }
    rows.sort_by(|a, b| (a.statement, &a.f_id, a.n).cmp(&(b.statement, &b.f_id, b.n)));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phi::PhiFamily;
    use std::sync::Arc;

    fn ex1() -> (KernelSpec, PhiSpec, VerifyParams) {
        (KernelSpec::example1(), PhiSpec::example1(), VerifyParams::default_for(1))
    }

    fn small_dipole(cells: usize) -> GridFunction {
        make_dipole(&DipoleSpec { z: vec![0.5], width: 0.0625 }, 1, 1.0, cells).unwrap()
    }

    #[test]
    fn phi_integral_zero_cases() {
        let (spec, phi, params) = ex1();
        // Φ = 0 gives 0.
        let zero_phi = PhiSpec::new(
            1,
            2.0,
            PhiFamily::Custom { name: "zero".into(), eval: Arc::new(|_: &[f64]| 0.0) },
            0.0,
        )
        .unwrap();
        let f = small_dipole(512);
        // An unbounded-below range engages the tail formula; Φ = 0 still
        // yields an exact (0, 0).
        let pi = phi_integral(&spec, &zero_phi, &f, BandRange::up_to(4), &params).unwrap();
        assert_eq!(pi.value, 0.0);
        assert_eq!(pi.tail_bound, 0.0);
        let _ = phi;
        // zero f integrates to zero with zero tail
        let z = GridFunction::zeros(1, 1, 1.0, 512).unwrap();
        let pz = phi_integral(&spec, &zero_phi, &z, BandRange::bounded(-2, 4).unwrap(), &params).unwrap();
        assert_eq!(pz.value, 0.0);
        assert_eq!(pz.tail_bound, 0.0);
        // unresolvable fine bands propagate the convolve guard
        assert!(matches!(
            phi_integral(&spec, &zero_phi, &f, BandRange::bounded(-2, 12).unwrap(), &params),
            Err(Error::BandUnresolved { .. })
        ));
    }

    #[test]
    fn main_ratio_scale_invariant() {
        let (spec, phi, params) = ex1();
        let f = small_dipole(1024);
        let a = main_ratio(&spec, &phi, &f, "f", &params).unwrap();
        let b = main_ratio(&spec, &phi, &f.scaled(3.0), "3f", &params).unwrap();
        assert!(
            (a.ratio - b.ratio).abs() <= 1e-10 * a.ratio.abs().max(1e-300),
            "{} vs {}",
            a.ratio,
            b.ratio
        );
    }

    #[test]
    fn main_ratio_dilation_invariant() {
        // L₁-preserving dilation leaves both sides unchanged up to the grid.
        let (spec, phi, params) = ex1();
        let f = small_dipole(1024);
        let a = main_ratio(&spec, &phi, &f, "f", &params).unwrap();
        let b = main_ratio(&spec, &phi, &f.dilate_l1(1), "f_dil", &params).unwrap();
        assert!(
            (a.ratio - b.ratio).abs() <= 0.02 * a.ratio.abs(),
            "{} vs {}",
            a.ratio,
            b.ratio
        );
    }

    #[test]
    fn phi_integral_band_widening_within_tail() {
        let (spec, phi, params) = ex1();
        let f = small_dipole(1024);
        let narrow = main_ratio_with_bands(&spec, &phi, &f, BandRange::bounded(-6, 4).unwrap(), &params);
        let wide = main_ratio_with_bands(&spec, &phi, &f, BandRange::bounded(-9, 6).unwrap(), &params);
        assert!(
            (narrow.0 - wide.0).abs() <= narrow.1 + wide.1,
            "narrow {:?} wide {:?}",
            narrow,
            wide
        );
    }

    fn main_ratio_with_bands(
        spec: &KernelSpec,
        phi: &PhiSpec,
        f: &GridFunction,
        bands: BandRange,
        params: &VerifyParams,
    ) -> (f64, f64) {
        let mut p = params.clone();
        p.bands = bands;
        let conv = convolve_with(spec, bands, f, p.method, &p.conv_params()).unwrap();
        let field = phi_cellwise(phi, &conv.out);
        let value = grid_integral(&conv.out, &field);
        let outer = outer_tail_bound(spec, phi.sup_unit_bound(), f, &conv, &p).unwrap();
        let inner = inner_band_tail(spec, phi, f, &conv.out, bands.hi, &p).unwrap();
        (value, outer + inner)
    }

    #[test]
    fn second_lemma_inequality_structure() {
        let (spec, phi, params) = ex1();
        let f = small_dipole(512);
        for n in 0..3 {
            let rep = second_lemma_check(&spec, &phi, &f, "f", n, &params).unwrap();
            assert!(rep.lhs.is_finite() && rep.rhs >= 0.0);
        }
        // Zero Φ: lhs = 0 trivially.
        let zero_phi = PhiSpec::new(
            1,
            2.0,
            PhiFamily::Custom { name: "zero".into(), eval: Arc::new(|_: &[f64]| 0.0) },
            0.0,
        )
        .unwrap();
        let rep = second_lemma_check(&spec, &zero_phi, &f, "f", 1, &params).unwrap();
        assert!(rep.lhs == 0.0);
    }

    #[test]
    fn second_lemma_rejects_high_p() {
        // p = 3 kernel: d = 1, α = 2/3.
        let spec = KernelSpec::new(1, 1, 2.0 / 3.0, crate::kernel::SphereProfile::Sign, 0.0).unwrap();
        let phi = PhiSpec::new(1, 3.0, PhiFamily::SignedPower, 3.0).unwrap();
        let f = small_dipole(512);
        let params = VerifyParams::default_for(1);
        assert!(second_lemma_check(&spec, &phi, &f, "f", 0, &params).is_err());
    }

    #[test]
    fn main2_partial_converges_in_n() {
        let (spec, phi, params) = ex1();
        let f = small_dipole(4096);
        let a = main2_partial(&spec, &phi, &f, "f", 6, &params).unwrap();
        let b = main2_partial(&spec, &phi, &f, "f", 8, &params).unwrap();
        assert_eq!(b.n, Some(8));
        // The N=8 sum exceeds the N=6 sum by at most the reported N=6 tail.
        assert!(b.lhs >= a.lhs - 1e-12);
        assert!(b.lhs - a.lhs <= a.tail_bound, "delta {} tail {}", b.lhs - a.lhs, a.tail_bound);
    }

    #[test]
    fn remainder_partial_scale_invariant_ratio() {
        let (spec, _phi, params) = ex1();
        let f = small_dipole(512);
        let a = remainder_partial(&spec, &f, "f", 4, 2.0, &params).unwrap();
        let b = remainder_partial(&spec, &f.scaled(3.0), "3f", 4, 2.0, &params).unwrap();
        assert!((a.ratio - b.ratio).abs() <= 1e-10 * a.ratio.max(1e-300));
    }

    #[test]
    fn median_bound_point_mass_vacuous() {
        let (spec, phi, params) = ex1();
        let mut f = GridFunction::zeros(1, 1, 1.0, 512).unwrap();
        f.values_mut()[256] = 1.0;
        let rep = median_bound_check(&spec, &phi, &f, "pm", 2, &params).unwrap();
        // Both sides vanish: lhs by per-band cancellation, rhs since the
        // moment of a point mass is 0.
        assert!(rep.rhs <= 1e-12);
        assert!(rep.lhs <= 1e-9, "lhs = {}", rep.lhs);
    }

    #[test]
    fn local_main2_runs_and_scales() {
        let (spec, phi, params) = ex1();
        let f = small_dipole(512);
        let a = local_main2_check(&spec, &phi, &f, "f", 1, &params).unwrap();
        let b = local_main2_check(&spec, &phi, &f.scaled(3.0), "3f", 1, &params).unwrap();
        assert!(a.lhs > 0.0 && a.rhs > 0.0);
        assert!((a.ratio - b.ratio).abs() <= 1e-10 * a.ratio.max(1e-300));
    }

    #[test]
    fn point_mass_cancellation_examples() {
        let (spec, phi, params) = ex1();
        for n in 0..4 {
            let rep = point_mass_cancellation(&spec, &phi, n, 1.0, 512, &params).unwrap();
            assert_eq!(rep.verdict, Verdict::Pass, "n = {n}: ratio {}", rep.ratio);
        }
        let spec2 = KernelSpec::example2();
        let phi2 = PhiSpec::example2(1.0, 0.5, -1.0);
        let params2 = VerifyParams::default_for(2);
        let rep = point_mass_cancellation(&spec2, &phi2, 1, 1.0, 128, &params2).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass, "ratio {}", rep.ratio);
    }

    #[test]
    fn point_mass_cancellation_3d() {
        // d = 3, alpha = 3/2, identity profile with the odd functional
        // |v| <v, e3>: the polar integral of Φ(K̃(ζ)) = ζ₃ vanishes.
        let spec =
            KernelSpec::new(3, 3, 1.5, crate::kernel::SphereProfile::Identity, 1.0).unwrap();
        let phi = PhiSpec::new(
            3,
            2.0,
            crate::phi::PhiFamily::NormPowerSigned { u: vec![0.0, 0.0, 1.0] },
            2.0,
        )
        .unwrap();
        let mut params = VerifyParams::default_for(3);
        params.method = ConvMethod::Direct;
        let quad = default_quadrature(3, 0).unwrap();
        let (row, _) = cancellation_report(&spec, &phi, &quad, &params).unwrap();
        assert_eq!(row.verdict, Verdict::Pass, "residual ratio {}", row.ratio);
        let rep = point_mass_cancellation(&spec, &phi, 1, 0.5, 32, &params).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass, "ratio {}", rep.ratio);
    }

    #[test]
    fn probe_detects_noncancelling_square() {
        let spec = KernelSpec::example1();
        let square = PhiSpec::new(
            1,
            2.0,
            PhiFamily::Custom { name: "square".into(), eval: Arc::new(|v: &[f64]| v[0] * v[0]) },
            2.0,
        )
        .unwrap();
        let params = VerifyParams::default_for(1);
        let widths = [0.125, 0.0625, 0.03125, 0.015625];
        let probe =
            cancellation_necessity_probe(&spec, &square, &widths, 0.5, 1024, &params).unwrap();
        assert_eq!(probe.verdict, ProbeVerdict::DivergenceObserved, "ratios {:?}", probe.ratios);
    }

    #[test]
    fn probe_reports_cancelling_as_inconclusive() {
        let (spec, phi, params) = ex1();
        let widths = [0.125, 0.0625, 0.03125];
        let probe = cancellation_necessity_probe(&spec, &phi, &widths, 0.5, 1024, &params).unwrap();
        assert_eq!(probe.verdict, ProbeVerdict::InconclusiveCancelling);
    }

    #[test]
    fn aux_suite_finite() {
        let (spec, phi, params) = ex1();
        for rep in aux_lemma_suite(&spec, &phi, &params).unwrap() {
            assert_eq!(rep.verdict, Verdict::Pass, "{}: {}", rep.statement, rep.ratio);
            assert!(rep.ratio.is_finite());
        }
    }

    #[test]
    fn zero_input_rows_are_vacuous() {
        let (spec, phi, params) = ex1();
        let zero = GridFunction::zeros(1, 1, 1.0, 512).unwrap();
        let main = main_ratio(&spec, &phi, &zero, "zero", &params).unwrap();
        assert_eq!(main.verdict, Verdict::Vacuous);
        assert_eq!(main.lhs, 0.0);
        let m2 = main2_partial(&spec, &phi, &zero, "zero", 4, &params).unwrap();
        assert_eq!(m2.lhs, 0.0);
        let rem = remainder_partial(&spec, &zero, "zero", 3, 2.0, &params).unwrap();
        assert_eq!(rem.lhs, 0.0);
        assert!(rem.tail_bound == 0.0);
        let med = median_bound_check(&spec, &phi, &zero, "zero", 1, &params).unwrap();
        assert_eq!(med.verdict, Verdict::Vacuous);
        let loc = local_main2_check(&spec, &phi, &zero, "zero", 1, &params).unwrap();
        assert_eq!(loc.verdict, Verdict::Vacuous);
        let sl = second_lemma_check(&spec, &phi, &zero, "zero", 0, &params).unwrap();
        assert_eq!(sl.lhs, 0.0);
    }

    #[test]
    fn phi_integral_translation_invariant() {
        // Shifting f by whole cells leaves the integral unchanged within the
        // discretization tolerance.
        let (spec, phi, params) = ex1();
        let base = make_dipole(&DipoleSpec { z: vec![0.5], width: 0.0625 }, 1, 1.0, 1024).unwrap();
        let mut shifted = GridFunction::zeros(1, 1, 1.0, 1024).unwrap();
        let offset = 37usize;
        for i in 0..1024 - offset {
            shifted.values_mut()[i + offset] = base.values()[i];
        }
        // Fully on-grid range: the shift is an exact reindexing.
        let range = BandRange::bounded(-2, 4).unwrap();
        let a = phi_integral(&spec, &phi, &base, range, &params).unwrap();
        let b = phi_integral(&spec, &phi, &shifted, range, &params).unwrap();
        let scale = a.value.abs().max(1e-300);
        assert!((a.value - b.value).abs() <= 1e-10 * scale, "{} vs {}", a.value, b.value);

        // A range reaching past the grid shifts only within the tail bounds.
        let wide = BandRange::bounded(-4, 4).unwrap();
        let aw = phi_integral(&spec, &phi, &base, wide, &params).unwrap();
        let bw = phi_integral(&spec, &phi, &shifted, wide, &params).unwrap();
        assert!(
            (aw.value - bw.value).abs() <= aw.tail_bound + bw.tail_bound + 1e-10 * scale,
            "{} vs {} (tails {} {})",
            aw.value,
            bw.value,
            aw.tail_bound,
            bw.tail_bound
        );
    }

    #[test]
    fn phi_integral_self_convergence() {
        // The integral is stable to three digits under band widening and grid
        // refinement together.
        let (spec, phi, _) = ex1();
        let mut values = Vec::new();
        for (cells, lo, hi) in [(1 << 13, -8, 9), (1 << 14, -8, 10), (1 << 15, -9, 11)] {
            let f =
                make_dipole(&DipoleSpec { z: vec![0.5], width: 0.0625 }, 1, 1.0, cells).unwrap();
            let mut params = VerifyParams::default_for(1);
            params.grid_cap = 16.0;
            params.max_cells = 1 << 23;
            let pi =
                phi_integral(&spec, &phi, &f, BandRange::bounded(lo, hi).unwrap(), &params).unwrap();
            values.push(pi.value);
        }
        let scale = values[2].abs();
        assert!((values[0] - values[2]).abs() <= 1e-3 * scale, "{values:?}");
        assert!((values[1] - values[2]).abs() <= 1e-3 * scale, "{values:?}");
    }

    #[test]
    fn median_bound_sharpness_scan() {
        // The bound is tightest when the band scale matches the support
        // scale: scanning n, the ratio peaks early and decays afterwards.
        let (spec, phi, params) = ex1();
        let f = make_dipole(&DipoleSpec { z: vec![0.25], width: 1.0 / 32.0 }, 1, 1.0, 1024).unwrap();
        let mut ratios = Vec::new();
        for n in 0..=6 {
            let rep = median_bound_check(&spec, &phi, &f, "dipole", n, &params).unwrap();
            ratios.push(rep.ratio);
        }
        let (argmax, max) = ratios
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc });
        assert!(max.is_finite() && max > 0.0);
        assert!(argmax <= 3, "peak at n = {argmax}, ratios {ratios:?}");
        assert!(ratios[6] < max, "no decay after the peak: {ratios:?}");
    }

    #[test]
    fn suite_rows_sorted_and_complete() {
        let (spec, phi, params) = ex1();
        let mut cfg = SuiteConfig::default_for(1);
        cfg.statements = vec![StatementId::MainRatio, StatementId::MedianBound];
        cfg.dipole_widths = vec![0.125, 0.0625];
        cfg.random_bumps = 0;
        let rows = run_suite(&spec, &phi, &cfg, &params).unwrap();
        assert!(!rows.is_empty());
        let mut sorted = rows.clone();
        sorted.sort_by(|a, b| (a.statement, &a.f_id, a.n).cmp(&(b.statement, &b.f_id, b.n)));
        for (x, y) in rows.iter().zip(&sorted) {
            assert_eq!(x.f_id, y.f_id);
            assert_eq!(x.statement, y.statement);
        }
    }
}
