//! Derivative-free search for the largest observed main-inequality ratio over
//! a parameterized family of zero-mean bump sums — an empirical lower bound on
//! the best constant.
//!
//! The objective (`main_ratio` over grid functions) is nonsmooth through the
//! absolute values and the min inside `M_p`-adjacent quantities, so the search
//! is a restarted Nelder–Mead simplex with standard coefficients rather than
//! anything gradient-based. Zero mean is maintained by projecting the weight
//! vector onto the sum-zero hyperplane after every proposal, so every
//! evaluation is feasible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gridfn::{add_bump, GridFunction};
use crate::kernel::KernelSpec;
use crate::phi::{check_cancellation, default_quadrature, PhiSpec};
use crate::verify::{main_ratio, VerifyParams};

/// Search space: `bump_count` tensor B-spline bumps with free centers,
/// log-widths and weights; weights are projected to sum to zero.
#[derive(Clone, Debug)]
pub struct FamilySpec {
    pub bump_count: usize,
    pub seed: u64,
    pub d: usize,
    pub grid_half_width: f64,
    pub cells_per_axis: usize,
}

impl FamilySpec {
    /// Parameters per bump: d center coordinates, one log-width, one weight.
    pub fn dim(&self) -> usize {
        self.bump_count * (self.d + 2)
    }

    fn width_bounds(&self, h: f64) -> Result<(f64, f64)> {
        let wmin = 8.0 * h;
        let wmax = self.grid_half_width / 2.0;
        if wmin > wmax {
            return Err(Error::InvalidParameter(format!(
                "grid too coarse for resolved bumps: 8h = {wmin} exceeds R/2 = {wmax}"
            )));
        }
        Ok((wmin.ln(), wmax.ln()))
    }

    /// Clamp parameters into the feasible region and build the zero-mean
    /// grid function. Weights sum to zero exactly, so the integral vanishes.
    pub fn realize(&self, params: &[f64]) -> Result<GridFunction> {
        assert_eq!(params.len(), self.dim());
        let mut f = GridFunction::zeros(self.d, 1, self.grid_half_width, self.cells_per_axis)?;
        let h = f.h();
        let (log_wmin, log_wmax) = self.width_bounds(h)?;
        let stride = self.d + 2;
        let mean_weight: f64 =
            (0..self.bump_count).map(|i| params[i * stride + self.d + 1]).sum::<f64>()
                / self.bump_count as f64;
        for i in 0..self.bump_count {
            let chunk = &params[i * stride..(i + 1) * stride];
            let log_w = chunk[self.d].clamp(log_wmin, log_wmax);
            let w = log_w.exp();
            let margin = 2.0 * w;
            let center: Vec<f64> = chunk[..self.d]
                .iter()
                .map(|&c| c.clamp(-(self.grid_half_width - margin), self.grid_half_width - margin))
                .collect();
            let weight = chunk[self.d + 1] - mean_weight;
            if weight != 0.0 {
                add_bump(&mut f, &center, w, weight);
            }
        }
        Ok(f)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TracePoint {
    pub evaluations: u64,
    pub best_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchResult {
    pub best_params: Vec<f64>,
    pub best_ratio: f64,
    pub evaluations: u64,
    pub restarts: usize,
    /// Monotone best-so-far trace across restarts in index order.
    pub trace: Vec<TracePoint>,
}

const RESTARTS: usize = 8;
const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Maximize the main-inequality ratio over the family.
///
/// Requires the cancellation conditions to hold (otherwise the objective is
/// expected to be unbounded and the search is refused) unless `force` is set.
pub fn search(
    spec: &KernelSpec,
    phi: &PhiSpec,
    family: &FamilySpec,
    budget: u64,
    params: &VerifyParams,
    force: bool,
) -> Result<SearchResult> {
    if family.bump_count < 2 {
        return Err(Error::InvalidParameter("need at least two bumps for zero mean".into()));
    }
    if family.d != spec.d {
        return Err(Error::DimensionMismatch(format!(
            "family dimension {} vs kernel dimension {}",
            family.d, spec.d
        )));
    }
    let dim = family.dim();
    let simplex_size = (dim + 1) as u64;
    if budget < simplex_size {
        return Err(Error::InvalidParameter(format!(
            "budget {budget} is below the simplex size {simplex_size}"
        )));
    }
    let quad = default_quadrature(spec.d, params.quad_seed)?;
    if !check_cancellation(phi, spec, &quad)?.cancels(params.cancellation_rel) && !force {
        return Err(Error::Precondition(
            "cancellation residual above threshold: the ratio is expected to be unbounded \
             (pass force to search anyway)"
                .into(),
        ));
    }
    // Probe the grid before spending budget.
    family.realize(&vec![0.0; dim])?;

    let restarts = RESTARTS.min((budget / simplex_size) as usize).max(1);
    let per_restart = budget / restarts as u64;

    let objective = |x: &[f64]| -> f64 {
        let f = match family.realize(x) {
            Ok(f) => f,
            Err(_) => return 0.0,
        };
        if f.l1_norm() == 0.0 {
            return 0.0;
        }
        match main_ratio(spec, phi, &f, "candidate", params) {
            Ok(rep) => rep.ratio,
            Err(_) => 0.0,
        }
    };

    let runs: Vec<RestartOutcome> = (0..restarts)
        .into_par_iter()
        .map(|r| nelder_mead_restart(family, &objective, r, per_restart))
        .collect();

    // Deterministic merge: max ratio, ties to the lowest restart index.
    let mut best_idx = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.best_ratio > runs[best_idx].best_ratio {
            best_idx = i;
        }
    }
    let mut trace = Vec::new();
    let mut offset = 0u64;
    let mut best_so_far = f64::NEG_INFINITY;
    for run in &runs {
        for tp in &run.trace {
            if tp.best_ratio > best_so_far {
                best_so_far = tp.best_ratio;
                trace.push(TracePoint {
                    evaluations: offset + tp.evaluations,
                    best_ratio: best_so_far,
                });
            }
        }
        offset += run.evaluations;
    }
    let best = &runs[best_idx];
    // The reported ratio must reproduce on re-evaluation.
    let recheck = objective(&best.best_params);
    debug_assert!((recheck - best.best_ratio).abs() <= 1e-12 * best.best_ratio.abs().max(1.0));
    Ok(SearchResult {
        best_params: best.best_params.clone(),
        best_ratio: recheck,
        evaluations: offset,
        restarts,
        trace,
    })
}

struct RestartOutcome {
    best_params: Vec<f64>,
    best_ratio: f64,
    evaluations: u64,
    trace: Vec<TracePoint>,
}

fn initial_simplex(family: &FamilySpec, restart: usize) -> Vec<Vec<f64>> {
    let dim = family.dim();
    let r = family.grid_half_width;
    let mut rng = ChaCha8Rng::seed_from_u64(family.seed ^ ((restart as u64) << 32));
    let stride = family.d + 2;
    let log_w0 = (r / 8.0).ln();
    let mut x0 = vec![0.0; dim];
    if restart == 0 {
        // Baseline: a symmetric dipole on the first two bumps.
        for i in 0..family.bump_count {
            let chunk = &mut x0[i * stride..(i + 1) * stride];
            chunk[family.d] = log_w0;
            match i {
                0 => chunk[family.d + 1] = 1.0,
                1 => {
                    chunk[0] = r / 2.0;
                    chunk[family.d + 1] = -1.0;
                }
                _ => chunk[0] = -r / 2.0,
            }
        }
    } else {
        for i in 0..family.bump_count {
            let chunk = &mut x0[i * stride..(i + 1) * stride];
            for c in chunk.iter_mut().take(family.d) {
                *c = 0.6 * r * (2.0 * rng.random::<f64>() - 1.0);
            }
            chunk[family.d] = log_w0 + rng.random::<f64>() - 0.5;
            chunk[family.d + 1] = 2.0 * rng.random::<f64>() - 1.0;
        }
    }
    let mut simplex = vec![x0.clone()];
    for k in 0..dim {
        let mut xk = x0.clone();
        let within = k % stride;
        let step = if within < family.d {
            0.15 * r
        } else if within == family.d {
            0.4
        } else {
            0.6
        };
        xk[k] += step * if rng.random::<bool>() { 1.0 } else { -1.0 };
        simplex.push(xk);
    }
    simplex
}

fn nelder_mead_restart(
    family: &FamilySpec,
    objective: &(impl Fn(&[f64]) -> f64 + Sync),
    restart: usize,
    budget: u64,
) -> RestartOutcome {
    let dim = family.dim();
    let mut evaluations = 0u64;
    let mut trace = Vec::new();
    let mut best_ratio = f64::NEG_INFINITY;
    let mut best_params = vec![0.0; dim];

    // Minimize the negated ratio.
    let mut points = initial_simplex(family, restart);
    let mut values = Vec::with_capacity(points.len());
    for p in &points {
        let ratio = objective(p);
        evaluations += 1;
        if ratio > best_ratio {
            best_ratio = ratio;
            best_params = p.clone();
            trace.push(TracePoint { evaluations, best_ratio });
        }
        values.push(-ratio);
        if evaluations >= budget {
            return RestartOutcome { best_params, best_ratio, evaluations, trace };
        }
    }

    let eval = |x: &[f64],
                evaluations: &mut u64,
                best_ratio: &mut f64,
                best_params: &mut Vec<f64>,
                trace: &mut Vec<TracePoint>|
     -> f64 {
        let ratio = objective(x);
        *evaluations += 1;
        if ratio > *best_ratio {
            *best_ratio = ratio;
            *best_params = x.to_vec();
            trace.push(TracePoint { evaluations: *evaluations, best_ratio: *best_ratio });
        }
        -ratio
    };

    while evaluations < budget {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let reordered: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();
        let revals: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        points = reordered;
        values = revals;

        let spread = values[dim] - values[0];
        if spread.abs() < 1e-12 {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|c| points[..dim].iter().map(|p| p[c]).sum::<f64>() / dim as f64)
            .collect();
        let worst = points[dim].clone();
        let towards =
            |t: f64| -> Vec<f64> { centroid.iter().zip(&worst).map(|(&c, &w)| c + t * (c - w)).collect() };

        let reflected = towards(REFLECT);
        let fr = eval(&reflected, &mut evaluations, &mut best_ratio, &mut best_params, &mut trace);
        if evaluations >= budget {
            break;
        }
        if fr < values[0] {
            let expanded = towards(EXPAND);
            let fe = eval(&expanded, &mut evaluations, &mut best_ratio, &mut best_params, &mut trace);
            if fe < fr {
                points[dim] = expanded;
                values[dim] = fe;
            } else {
                points[dim] = reflected;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            points[dim] = reflected;
            values[dim] = fr;
        } else {
            let contracted = if fr < values[dim] { towards(CONTRACT) } else { towards(-CONTRACT) };
            let fc = eval(&contracted, &mut evaluations, &mut best_ratio, &mut best_params, &mut trace);
            if fc < values[dim].min(fr) {
                points[dim] = contracted;
                values[dim] = fc;
            } else {
                // Shrink toward the best vertex.
                for i in 1..=dim {
                    let shrunk: Vec<f64> = points[0]
                        .iter()
                        .zip(&points[i])
                        .map(|(&b, &p)| b + SHRINK * (p - b))
                        .collect();
                    let fs =
                        eval(&shrunk, &mut evaluations, &mut best_ratio, &mut best_params, &mut trace);
                    points[i] = shrunk;
                    values[i] = fs;
                    if evaluations >= budget {
                        break;
                    }
                }
            }
        }
        if evaluations >= budget {
            break;
        }
    }
    RestartOutcome { best_params, best_ratio, evaluations, trace }
}

/// One row of the batched best-ratio table.
#[derive(Clone, Debug, Serialize)]
pub struct ConstantRow {
    pub kernel_id: String,
    pub phi_id: String,
    pub best_ratio: f64,
    pub evaluations: u64,
}

/// Batched search over several (kernel, functional, family) triples; rows
/// sorted by identifier. Deterministic given seeds and budget.
pub fn constant_table(
    entries: &[(KernelSpec, PhiSpec, FamilySpec)],
    budget: u64,
    params: &VerifyParams,
    force: bool,
) -> Result<Vec<ConstantRow>> {
    let mut rows = Vec::with_capacity(entries.len());
    for (spec, phi, family) in entries {
        let result = search(spec, phi, family, budget, params, force)?;
        rows.push(ConstantRow {
            kernel_id: crate::verify::kernel_id(spec),
            phi_id: crate::verify::phi_id(phi),
            best_ratio: result.best_ratio,
            evaluations: result.evaluations,
        });
    }
    rows.sort_by(|a, b| (&a.kernel_id, &a.phi_id).cmp(&(&b.kernel_id, &b.phi_id)));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phi::PhiFamily;
    use std::sync::Arc;

    fn family() -> FamilySpec {
        FamilySpec { bump_count: 2, seed: 11, d: 1, grid_half_width: 1.0, cells_per_axis: 256 }
    }

    fn quick_params() -> VerifyParams {
        let mut p = VerifyParams::default_for(1);
        p.grid_cap = 4.0;
        p
    }

    #[test]
    fn budget_guard_and_minimal_run() {
        let spec = KernelSpec::example1();
        let phi = PhiSpec::example1();
        let fam = family();
        let params = quick_params();
        assert!(search(&spec, &phi, &fam, 3, &params, false).is_err());
        // Exactly one simplex worth of evaluations: best initial vertex.
        let r = search(&spec, &phi, &fam, fam.dim() as u64 + 1, &params, false).unwrap();
        assert_eq!(r.evaluations, fam.dim() as u64 + 1);
        assert!(r.best_ratio > 0.0);
    }

    #[test]
    fn zero_phi_gives_zero_ratio() {
        let spec = KernelSpec::example1();
        let zero_phi = PhiSpec::new(
            1,
            2.0,
            PhiFamily::Custom { name: "zero".into(), eval: Arc::new(|_: &[f64]| 0.0) },
            0.0,
        )
        .unwrap();
        let fam = family();
        let r = search(&spec, &zero_phi, &fam, 40, &quick_params(), false).unwrap();
        assert_eq!(r.best_ratio, 0.0);
    }

    #[test]
    fn beats_dipole_baseline() {
        let spec = KernelSpec::example1();
        let phi = PhiSpec::example1();
        let fam = family();
        let params = quick_params();
        // The baseline dipole sits in restart 0's initial simplex.
        let baseline = {
            let simplex = initial_simplex(&fam, 0);
            let f = fam.realize(&simplex[0]).unwrap();
            main_ratio(&spec, &phi, &f, "baseline", &params).unwrap().ratio
        };
        let r = search(&spec, &phi, &fam, 200, &params, false).unwrap();
        assert!(r.best_ratio >= baseline - 1e-12, "best {} < baseline {baseline}", r.best_ratio);
    }

    #[test]
    fn refuses_noncancelling_without_force() {
        let spec = KernelSpec::example1();
        let square = PhiSpec::new(
            1,
            2.0,
            PhiFamily::Custom { name: "square".into(), eval: Arc::new(|v: &[f64]| v[0] * v[0]) },
            2.0,
        )
        .unwrap();
        let fam = family();
        let params = quick_params();
        assert!(search(&spec, &square, &fam, 100, &params, false).is_err());
        assert!(search(&spec, &square, &fam, 100, &params, true).is_ok());
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = KernelSpec::example1();
        let phi = PhiSpec::example1();
        let fam = family();
        let params = quick_params();
        let a = search(&spec, &phi, &fam, 120, &params, false).unwrap();
        let b = search(&spec, &phi, &fam, 120, &params, false).unwrap();
        assert_eq!(a.best_params, b.best_params);
        assert_eq!(a.best_ratio, b.best_ratio);
        assert_eq!(a.evaluations, b.evaluations);
    }

    #[test]
    fn objective_invariant_under_weight_rescale() {
        let fam = family();
        let params = quick_params();
        let spec = KernelSpec::example1();
        let phi = PhiSpec::example1();
        let simplex = initial_simplex(&fam, 0);
        let x = &simplex[0];
        let mut x2 = x.clone();
        let stride = fam.d + 2;
        for i in 0..fam.bump_count {
            x2[i * stride + fam.d + 1] *= 2.0;
        }
        let f = fam.realize(x).unwrap();
        let g = fam.realize(&x2).unwrap();
        let a = main_ratio(&spec, &phi, &f, "a", &params).unwrap().ratio;
        let b = main_ratio(&spec, &phi, &g, "b", &params).unwrap().ratio;
        assert!((a - b).abs() <= 1e-10 * a.max(1e-300));
    }

    #[test]
    fn constant_table_rows() {
        let params = quick_params();
        assert!(constant_table(&[], 100, &params, false).unwrap().is_empty());
        let entries = vec![(KernelSpec::example1(), PhiSpec::example1(), family())];
        let rows = constant_table(&entries, 60, &params, false).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].best_ratio.is_finite());
    }

    #[test]
    fn constant_table_planar_quadratics() {
        // Trace-free quadratics over a12 in {0, 1}: two finite rows.
        let mut params = VerifyParams::default_for(2);
        params.grid_cap = 2.0;
        let fam2 = FamilySpec { bump_count: 2, seed: 7, d: 2, grid_half_width: 1.0, cells_per_axis: 32 };
        let entries = vec![
            (KernelSpec::example2(), PhiSpec::example2(1.0, 0.0, -1.0), fam2.clone()),
            (KernelSpec::example2(), PhiSpec::example2(1.0, 1.0, -1.0), fam2.clone()),
        ];
        let budget = fam2.dim() as u64 + 1;
        let rows = constant_table(&entries, budget, &params, false).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!(row.best_ratio.is_finite(), "{row:?}");
        }
    }
}
