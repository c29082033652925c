//! Banded convolution `K_range * f` on cell-centered grids.
//!
//! The output grid reuses the input cell size and extends the box so that
//! `supp f` dilated by the band's outer radius fits; with an unbounded range
//! the outer radius is capped by [`ConvParams::lo_min`] and optionally by a
//! grid cap, in which case only bands that can reach the capped box are kept
//! (the kept values are exact, the rest lives outside the grid).
//!
//! The kernel is tabulated on the displacement lattice once per call. A cell
//! whose interior crosses a band-boundary sphere is averaged by 4^d sub-cell
//! midpoint refinement down to depth 3; all other cells use their midpoint.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::gridfn::GridFunction;
use crate::kernel::{band_inner, band_outer, BandRange, KernelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvMethod {
    /// Nested summation over nonzero input cells.
    Direct,
    /// Zero-padded circular convolution via FFT.
    Fast,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvParams {
    /// Bands below this index are dropped when the range is unbounded below.
    pub lo_min: i32,
    /// Cap on the output half-width; `None` extends to the full band reach.
    pub grid_cap: Option<f64>,
    /// Hard bound on output cells.
    pub max_cells: usize,
}

impl Default for ConvParams {
    fn default() -> Self {
        Self { lo_min: -20, grid_cap: None, max_cells: 1 << 24 }
    }
}

/// Convolution output together with what was actually computed.
#[derive(Clone, Debug)]
pub struct Convolution {
    pub out: GridFunction,
    /// Bands that contribute to the computed grid.
    pub effective_range: BandRange,
    /// The requested range after resolving `lo = −∞` to `lo_min`.
    pub resolved_range: BandRange,
}

pub fn convolve(
    spec: &KernelSpec,
    range: BandRange,
    f: &GridFunction,
    method: ConvMethod,
) -> Result<GridFunction> {
    convolve_with(spec, range, f, method, &ConvParams::default()).map(|c| c.out)
}

pub fn convolve_with(
    spec: &KernelSpec,
    range: BandRange,
    f: &GridFunction,
    method: ConvMethod,
    params: &ConvParams,
) -> Result<Convolution> {
    if f.components() != 1 {
        return Err(Error::InvalidParameter(
            "convolution input must be a scalar function".into(),
        ));
    }
    if f.d() != spec.d {
        return Err(Error::DimensionMismatch(format!(
            "grid dimension {} vs kernel dimension {}",
            f.d(),
            spec.d
        )));
    }
    let h = f.h();
    let resolution_limit = band_inner(range.hi) / 4.0;
    if h > resolution_limit {
        return Err(Error::BandUnresolved { h, limit: resolution_limit, band: range.hi });
    }

    let lo0 = range.lo.unwrap_or(params.lo_min);
    let resolved = BandRange::bounded(lo0.min(range.hi), range.hi)?;
    let r_f = f.support_radius();
    let d = spec.d;

    // Extend by whole power-of-two factors so cell centers stay aligned.
    let needed = r_f + band_outer(resolved.lo.unwrap());
    let mut r_out = f.half_width();
    while r_out < needed {
        r_out *= 2.0;
    }
    if let Some(cap) = params.grid_cap {
        while r_out > f.half_width() && r_out > cap {
            r_out /= 2.0;
        }
    }
    let n_out = (2.0 * r_out / h).round() as usize;
    let cells_out = n_out
        .checked_pow(d as u32)
        .filter(|&c| c <= params.max_cells)
        .ok_or(Error::MemoryBound { cells: usize::MAX, limit: params.max_cells })?;
    if cells_out > params.max_cells {
        return Err(Error::MemoryBound { cells: cells_out, limit: params.max_cells });
    }

    // Bands whose inner sphere lies beyond the box cannot touch the grid.
    let reach = r_out * (d as f64).sqrt() + r_f;
    let mut lo_eff = resolved.lo.unwrap();
    while lo_eff < range.hi && band_inner(lo_eff) > reach {
        lo_eff += 1;
    }
    let effective = BandRange::bounded(lo_eff, range.hi)?;

    let n_f = f.cells_per_axis();
    let table = KernelTable::build(spec, effective, h, n_f, n_out);

    let mut out = GridFunction::zeros(d, spec.ell, r_out, n_out)?;
    match method {
        ConvMethod::Direct => direct_convolve(f, &table, &mut out),
        ConvMethod::Fast => fast_convolve(f, &table, &mut out),
    }
    Ok(Convolution { out, effective_range: effective, resolved_range: resolved })
}

/// Banded kernel averaged over displacement cells.
///
/// Displacements run over `t = i − j − s` per axis with `s = (R_out − R_f)/h`;
/// the table is indexed by `u = i − j + n_f − 1 ∈ [0, n_out + n_f − 1)`.
pub(crate) struct KernelTable {
    pub ell: usize,
    pub len: usize,
    pub d: usize,
    /// Component-major planes of size `len^d`.
    pub values: Vec<f64>,
}

impl KernelTable {
    fn build(spec: &KernelSpec, range: BandRange, h: f64, n_f: usize, n_out: usize) -> Self {
        let d = spec.d;
        let len = n_out + n_f - 1;
        // t for u = 0 is -(n_f - 1) - s; the displacement coordinate is
        // t*h - but expressed via the actual grids: x_i - y_j with
        // x_i = -R_out + (i + 1/2) h and y_j = -R_f + (j + 1/2) h, i.e.
        // z(u) = (u - (n_f - 1)) * h - (R_out - R_f). Both grids share h, so
        // z(u) = (u - (n_f - 1) - s) * h with integer s; we fold s into the
        // offset below.
        let r_out = 0.5 * n_out as f64 * h;
        let r_f = 0.5 * n_f as f64 * h;
        let offset = -((n_f - 1) as f64) * h - (r_out - r_f);

        let averager = CellAverager {
            spec,
            range,
            radii: [range.inner_radius(), range.outer_radius().unwrap()],
        };
        let count: usize = len.pow(d as u32);
        let ell = spec.ell;
        let mut cellwise = vec![0.0f64; count * ell];
        cellwise
            .par_chunks_mut(ell)
            .enumerate()
            .for_each_init(Scratch::new, |scratch, (flat, out)| {
                let mut rem = flat;
                let mut z = vec![0.0f64; d];
                for a in (0..d).rev() {
                    z[a] = offset + (rem % len) as f64 * h;
                    rem /= len;
                }
                averager.averaged_value(&z, 0.5 * h, 0, scratch, out);
            });
        // Transpose to component-major planes.
        let mut values = vec![0.0f64; count * ell];
        for cell in 0..count {
            for c in 0..ell {
                values[c * count + cell] = cellwise[cell * ell + c];
            }
        }
        Self { ell, len, d, values }
    }

    fn plane(&self, c: usize) -> &[f64] {
        let n = self.len.pow(self.d as u32);
        &self.values[c * n..(c + 1) * n]
    }
}

struct Scratch {
    zeta: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new() -> Self {
        Self { zeta: Vec::new(), tmp: Vec::new() }
    }
}

const REFINE_DEPTH: usize = 3;

/// Cell averaging of the banded kernel against its jump spheres.
struct CellAverager<'a> {
    spec: &'a KernelSpec,
    range: BandRange,
    radii: [f64; 2],
}

impl CellAverager<'_> {
    fn averaged_value(&self, center: &[f64], half: f64, depth: usize, scratch: &mut Scratch, out: &mut [f64]) {
        if depth < REFINE_DEPTH && straddles(center, half, &self.radii) {
            out.iter_mut().for_each(|v| *v = 0.0);
            let d = center.len();
            let sub = 4usize.pow(d as u32);
            scratch.tmp.resize(out.len(), 0.0);
            let mut tmp = std::mem::take(&mut scratch.tmp);
            let mut child = vec![0.0f64; d];
            for k in 0..sub {
                let mut rem = k;
                for a in (0..d).rev() {
                    let q = (rem % 4) as f64;
                    rem /= 4;
                    child[a] = center[a] + (q - 1.5) * half / 2.0;
                }
                self.averaged_value(&child, half / 4.0, depth + 1, scratch, &mut tmp);
                for (o, t) in out.iter_mut().zip(tmp.iter()) {
                    *o += t;
                }
            }
            scratch.tmp = tmp;
            let w = 1.0 / sub as f64;
            out.iter_mut().for_each(|v| *v *= w);
            return;
        }
        self.point_value(center, scratch, out);
    }

    fn point_value(&self, z: &[f64], scratch: &mut Scratch, out: &mut [f64]) {
        let r = crate::kernel::norm(z);
        if r < self.range.inner_radius() || r > self.range.outer_radius().unwrap() || r == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        scratch.zeta.resize(z.len(), 0.0);
        for (s, &c) in scratch.zeta.iter_mut().zip(z.iter()) {
            *s = c / r;
        }
        self.spec.eval_profile(&scratch.zeta, out);
        let radial = r.powf(self.spec.alpha - self.spec.d as f64);
        out.iter_mut().for_each(|v| *v *= radial);
    }
}

/// Whether the open cube `center ± half` crosses one of the spheres.
fn straddles(center: &[f64], half: f64, radii: &[f64; 2]) -> bool {
    let mut near2 = 0.0;
    let mut far2 = 0.0;
    for &c in center {
        let lo = (c.abs() - half).max(0.0);
        let hi = c.abs() + half;
        near2 += lo * lo;
        far2 += hi * hi;
    }
    let (near, far) = (near2.sqrt(), far2.sqrt());
    radii.iter().any(|&rho| near < rho && rho < far)
}

fn direct_convolve(f: &GridFunction, table: &KernelTable, out: &mut GridFunction) {
    let d = f.d();
    let n_f = f.cells_per_axis();
    let n_out = out.cells_per_axis();
    let scale = f.cell_volume();
    let nz: Vec<(Vec<usize>, f64)> = (0..f.num_cells())
        .filter(|&j| f.values()[j] != 0.0)
        .map(|j| (f.multi_index(j), f.values()[j]))
        .collect();
    let ncells_out = out.num_cells();
    let len = table.len;
    let ell = table.ell;

    let planes: Vec<&[f64]> = (0..ell).map(|c| table.plane(c)).collect();
    let results: Vec<Vec<f64>> = (0..ncells_out)
        .into_par_iter()
        .map(|flat| {
            let mut idx = vec![0usize; d];
            let mut rem = flat;
            for a in (0..d).rev() {
                idx[a] = rem % n_out;
                rem /= n_out;
            }
            let mut acc = vec![0.0f64; ell];
            for (j, value) in &nz {
                let mut u = 0usize;
                for a in 0..d {
                    u = u * len + (idx[a] + n_f - 1 - j[a]);
                }
                for (c, plane) in planes.iter().enumerate() {
                    acc[c] += plane[u] * value;
                }
            }
            acc.iter_mut().for_each(|v| *v *= scale);
            acc
        })
        .collect();
    for (flat, acc) in results.into_iter().enumerate() {
        for (c, v) in acc.into_iter().enumerate() {
            out.values_mut()[c * ncells_out + flat] = v;
        }
    }
}

fn fast_convolve(f: &GridFunction, table: &KernelTable, out: &mut GridFunction) {
    let d = f.d();
    let n_f = f.cells_per_axis();
    let n_out = out.cells_per_axis();
    let lin = n_out + n_f - 1;
    let len = lin.next_power_of_two();
    let total = len.pow(d as u32);
    let scale = f.cell_volume();

    // Input padded at the origin corner.
    let mut fpad = vec![Complex64::new(0.0, 0.0); total];
    for j in 0..f.num_cells() {
        let v = f.values()[j];
        if v != 0.0 {
            let mut idx = vec![0usize; d];
            let mut rem = j;
            for a in (0..d).rev() {
                idx[a] = rem % n_f;
                rem /= n_f;
            }
            let mut flat = 0usize;
            for &i in &idx {
                flat = flat * len + i;
            }
            fpad[flat] = Complex64::new(v, 0.0);
        }
    }
    fft_all_axes(&mut fpad, len, d, false);

    let ncells_out = out.num_cells();
    for c in 0..table.ell {
        // out(i) = Σ_j f(j) G(i − j) with G(k) = table(u = k + n_f − 1),
        // wrapped circularly on the padded grid.
        let plane = table.plane(c);
        let mut gpad = vec![Complex64::new(0.0, 0.0); total];
        for (u_flat, &v) in plane.iter().enumerate() {
            if v != 0.0 {
                let mut rem = u_flat;
                let mut flat = 0usize;
                let mut idx = vec![0usize; d];
                for a in (0..d).rev() {
                    idx[a] = rem % table.len;
                    rem /= table.len;
                }
                for &u in &idx {
                    // k = u − (n_f − 1), wrapped mod len
                    let k = (u + len - (n_f - 1)) % len;
                    flat = flat * len + k;
                }
                gpad[flat] = Complex64::new(v, 0.0);
            }
        }
        fft_all_axes(&mut gpad, len, d, false);
        for (g, fv) in gpad.iter_mut().zip(fpad.iter()) {
            *g *= fv;
        }
        fft_all_axes(&mut gpad, len, d, true);
        let norm = scale / total as f64;
        for flat_out in 0..ncells_out {
            let mut rem = flat_out;
            let mut idx = vec![0usize; d];
            for a in (0..d).rev() {
                idx[a] = rem % n_out;
                rem /= n_out;
            }
            let mut flat = 0usize;
            for &i in &idx {
                flat = flat * len + i;
            }
            out.values_mut()[c * ncells_out + flat_out] = gpad[flat].re * norm;
        }
    }
}

/// In-place d-dimensional FFT on a cube of side `len`: transform the
/// contiguous last axis, rotate axes, repeat d times.
fn fft_all_axes(data: &mut [Complex64], len: usize, d: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
    for _pass in 0..d {
        data.par_chunks_mut(len).for_each_init(
            || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, line| {
                fft.process_with_scratch(line, scratch);
            },
        );
        if d > 1 {
            rotate_axes_right(data, len);
        }
    }
}

/// Move the last axis to the front: `new[i_d, i_1, …, i_{d−1}] = old[i_1, …, i_d]`.
fn rotate_axes_right(data: &mut [Complex64], len: usize) {
    let total = data.len();
    let stride = total / len; // len^{d-1}
    let mut next = vec![Complex64::new(0.0, 0.0); total];
    for (old, &v) in data.iter().enumerate() {
        let last = old % len;
        let rest = old / len;
        next[last * stride + rest] = v;
    }
    data.copy_from_slice(&next);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridfn::{make_dipole, make_random_bumps, DipoleSpec};

    fn rel_gap(a: &GridFunction, b: &GridFunction) -> f64 {
        let scale = a
            .values()
            .iter()
            .chain(b.values())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            / scale
    }

    #[test]
    fn point_mass_reproduces_kernel_band() {
        let spec = KernelSpec::example1();
        let mut f = GridFunction::zeros(1, 1, 1.0, 256).unwrap();
        let h = f.h();
        let j0 = 128usize;
        f.values_mut()[j0] = 1.0 / h; // unit mass
        let y0 = f.axis_center(j0);
        let out = convolve(&spec, BandRange::single(0), &f, ConvMethod::Direct).unwrap();
        // Away from the band boundary spheres the table is a midpoint value.
        for i in 0..out.cells_per_axis() {
            let x = out.axis_center(i);
            let z = x - y0;
            if (z.abs() - 0.5).abs() > h && (z.abs() - 1.0).abs() > h {
                let expect = spec.eval_band(0, &[z])[0];
                let got = out.values()[i];
                assert!(
                    (got - expect).abs() <= 1e-12 * expect.abs().max(1.0),
                    "x={x} got={got} expect={expect}"
                );
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let spec = KernelSpec::example2();
        let f = GridFunction::zeros(2, 1, 0.5, 64).unwrap();
        let out = convolve(&spec, BandRange::bounded(0, 3).unwrap(), &f, ConvMethod::Fast).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn direct_and_fast_agree_1d() {
        let spec = KernelSpec::example1();
        let f = make_dipole(&DipoleSpec { z: vec![0.25], width: 1.0 / 16.0 }, 1, 0.5, 64).unwrap();
        let range = BandRange::bounded(-1, 2).unwrap();
        let a = convolve(&spec, range, &f, ConvMethod::Direct).unwrap();
        let b = convolve(&spec, range, &f, ConvMethod::Fast).unwrap();
        assert!(rel_gap(&a, &b) < 1e-10, "gap = {}", rel_gap(&a, &b));
    }

    #[test]
    fn direct_and_fast_agree_2d() {
        let spec = KernelSpec::example2();
        let f = make_random_bumps(3, 17, 2, 0.5, 32).unwrap();
        let range = BandRange::bounded(0, 2).unwrap();
        let a = convolve(&spec, range, &f, ConvMethod::Direct).unwrap();
        let b = convolve(&spec, range, &f, ConvMethod::Fast).unwrap();
        assert!(rel_gap(&a, &b) < 1e-10, "gap = {}", rel_gap(&a, &b));
    }

    #[test]
    fn convolution_is_linear() {
        let spec = KernelSpec::example1();
        let f = make_dipole(&DipoleSpec { z: vec![0.25], width: 1.0 / 16.0 }, 1, 0.5, 64).unwrap();
        let range = BandRange::bounded(0, 2).unwrap();
        let a = convolve(&spec, range, &f, ConvMethod::Direct).unwrap();
        let b = convolve(&spec, range, &f.scaled(2.5), ConvMethod::Direct).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((2.5 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn band_unresolved_guard() {
        let spec = KernelSpec::example1();
        let f = GridFunction::zeros(1, 1, 1.0, 64).unwrap();
        // h = 1/32; band 5 needs h <= 2^{-6}/4 = 2^{-8}.
        let err = convolve(&spec, BandRange::single(5), &f, ConvMethod::Direct).unwrap_err();
        assert!(matches!(err, Error::BandUnresolved { .. }));
    }

    #[test]
    fn translation_equivariance() {
        let spec = KernelSpec::example1();
        let mut f = GridFunction::zeros(1, 1, 1.0, 256).unwrap();
        let h = f.h();
        for (off, val) in [(0usize, 1.0), (3, -0.5), (7, 2.0)] {
            f.values_mut()[100 + off] = val / h;
        }
        let mut g = GridFunction::zeros(1, 1, 1.0, 256).unwrap();
        for (off, val) in [(0usize, 1.0), (3, -0.5), (7, 2.0)] {
            g.values_mut()[110 + off] = val / h;
        }
        let range = BandRange::bounded(1, 3).unwrap();
        let fa = convolve(&spec, range, &f, ConvMethod::Direct).unwrap();
        let ga = convolve(&spec, range, &g, ConvMethod::Direct).unwrap();
        assert_eq!(fa.cells_per_axis(), ga.cells_per_axis());
        for i in 0..fa.cells_per_axis() - 10 {
            let x = fa.values()[i];
            let y = ga.values()[i + 10];
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "i = {i}");
        }
    }
}
