//! Compactly supported test functions sampled on uniform box grids.
//!
//! A [`GridFunction`] holds cell-center samples of an `ℝ^c`-valued function on
//! `[−R, R]^d`, where both the half-width `R` and the cells-per-axis count are
//! powers of two so that dyadic cubes align with cell boundaries. Scalar
//! functions (`c = 1`) play the role of the convolution inputs `f`;
//! multi-component functions arise as convolution outputs.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell-centered samples on `[−R, R]^d`.
///
/// Values are stored row-major with shape `(components, n, n, …, n)`: the
/// slowest index is the component, the fastest the last spatial axis.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    d: usize,
    components: usize,
    half_width: f64,
    cells_per_axis: usize,
    values: Vec<f64>,
}

/// JSON sidecar mirroring the binary header.
#[derive(Debug, Serialize, Deserialize)]
pub struct GridMeta {
    pub d: u64,
    pub components: u64,
    pub cells_per_axis: u64,
    pub half_width: f64,
}

fn is_pow2(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

fn is_pow2_f64(x: f64) -> bool {
    x > 0.0 && x.log2().fract() == 0.0
}

impl GridFunction {
    pub fn zeros(d: usize, components: usize, half_width: f64, cells_per_axis: usize) -> Result<Self> {
        if d == 0 || components == 0 {
            return Err(Error::InvalidParameter("d and components must be positive".into()));
        }
        if !is_pow2(cells_per_axis) {
            return Err(Error::InvalidParameter(format!(
                "cells_per_axis must be a power of two, got {cells_per_axis}"
            )));
        }
        if !is_pow2_f64(half_width) {
            return Err(Error::InvalidParameter(format!(
                "half_width must be a power of two, got {half_width}"
            )));
        }
        let ncells = cells_per_axis.checked_pow(d as u32).ok_or(Error::MemoryBound {
            cells: usize::MAX,
            limit: usize::MAX,
        })?;
        Ok(Self {
            d,
            components,
            half_width,
            cells_per_axis,
            values: vec![0.0; components * ncells],
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    /// Cell size `h = 2R / n`, itself a power of two.
    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.cells_per_axis as f64
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_axis.pow(self.d as u32)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Samples of one component, a slice of length `num_cells`.
    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.num_cells();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.num_cells();
        &mut self.values[c * n..(c + 1) * n]
    }

    /// Row-major flat index of a multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.d);
        let mut flat = 0;
        for &i in idx {
            debug_assert!(i < self.cells_per_axis);
            flat = flat * self.cells_per_axis + i;
        }
        flat
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.d];
        for a in (0..self.d).rev() {
            idx[a] = flat % self.cells_per_axis;
            flat /= self.cells_per_axis;
        }
        idx
    }

    /// Coordinate of the center of cell `i` along one axis: `−R + (i + 1/2) h`.
    pub fn axis_center(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.h()
    }

    pub fn cell_center(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.axis_center(i)).collect()
    }

    /// `∫ f` for scalar functions: `h^d Σ values`.
    pub fn integral(&self) -> f64 {
        assert_eq!(self.components, 1, "integral is defined for scalar functions");
        self.cell_volume() * chunked_sum(&self.values)
    }

    /// `‖f‖_{L₁} = h^d Σ |f|`, with the Euclidean norm across components.
    pub fn l1_norm(&self) -> f64 {
        let n = self.num_cells();
        let sum = if self.components == 1 {
            chunked_sum_by(&self.values, |v| v.abs())
        } else {
            let mut acc = Accumulator::new();
            for cell in 0..n {
                let mut sq = 0.0;
                for c in 0..self.components {
                    let v = self.values[c * n + cell];
                    sq += v * v;
                }
                acc.push(sq.sqrt());
            }
            acc.finish()
        };
        self.cell_volume() * sum
    }

    /// Pointwise sup of the Euclidean norm across components.
    pub fn sup_norm(&self) -> f64 {
        let n = self.num_cells();
        let mut best = 0.0f64;
        for cell in 0..n {
            let mut sq = 0.0;
            for c in 0..self.components {
                let v = self.values[c * n + cell];
                sq += v * v;
            }
            best = best.max(sq.sqrt());
        }
        best
    }

    /// Whether `∫ f` vanishes up to `1e−12 ‖f‖₁`.
    pub fn is_zero_mean(&self) -> bool {
        self.integral().abs() <= 1e-12 * self.l1_norm()
    }

    /// Radius of the support: max over nonzero cells of `|center| + h√d/2`.
    pub fn support_radius(&self) -> f64 {
        let n = self.num_cells();
        let halfdiag = 0.5 * self.h() * (self.d as f64).sqrt();
        let mut best = 0.0f64;
        for cell in 0..n {
            let nonzero = (0..self.components).any(|c| self.values[c * n + cell] != 0.0);
            if nonzero {
                let idx = self.multi_index(cell);
                let r: f64 = idx
                    .iter()
                    .map(|&i| {
                        let x = self.axis_center(i);
                        x * x
                    })
                    .sum::<f64>()
                    .sqrt();
                best = best.max(r + halfdiag);
            }
        }
        best
    }

    pub fn scaled(&self, lambda: f64) -> GridFunction {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= lambda;
        }
        out
    }

    /// Subtract the mean of `f` over its support cells so the integral
    /// vanishes; the support is unchanged.
    pub fn project_zero_mean(&self) -> Result<GridFunction> {
        assert_eq!(self.components, 1, "projection is defined for scalar functions");
        if self.l1_norm() == 0.0 {
            return Err(Error::ZeroFunction);
        }
        if self.is_zero_mean() {
            return Ok(self.clone());
        }
        let support: Vec<usize> = (0..self.num_cells()).filter(|&i| self.values[i] != 0.0).collect();
        if support.len() <= 1 {
            return Err(Error::SupportTooSmall);
        }
        let first = self.values[support[0]];
        if support.iter().all(|&i| self.values[i] == first) {
            return Err(Error::ProjectionAnnihilates);
        }
        let mean = support.iter().map(|&i| self.values[i]).sum::<f64>() / support.len() as f64;
        let mut out = self.clone();
        for &i in &support {
            out.values[i] -= mean;
        }
        Ok(out)
    }

    /// `h^d Σ |x_i − c| |f(x_i)|` with the Euclidean distance.
    pub fn first_moment(&self, c: &[f64]) -> f64 {
        assert_eq!(c.len(), self.d);
        let n = self.num_cells();
        let mut acc = Accumulator::new();
        let mut idx = vec![0usize; self.d];
        for cell in 0..n {
            let mut mag2 = 0.0;
            for comp in 0..self.components {
                let v = self.values[comp * n + cell];
                mag2 += v * v;
            }
            if mag2 != 0.0 {
                let mut dist2 = 0.0;
                for (a, &i) in idx.iter().enumerate() {
                    let dx = self.axis_center(i) - c[a];
                    dist2 += dx * dx;
                }
                acc.push(dist2.sqrt() * mag2.sqrt());
            }
            increment_index(&mut idx, self.cells_per_axis);
        }
        self.cell_volume() * acc.finish()
    }

    /// Approximate minimizer of `c ↦ ∫ |x−c||f(x)| dx` over cell centers:
    /// coordinate-wise weighted median as initializer, then coordinate descent
    /// until no single-axis move improves. The returned value is an upper
    /// bound on the true infimum and never exceeds the initializer value.
    pub fn min_first_moment(&self) -> Result<MomentMin> {
        if self.l1_norm() == 0.0 {
            return Err(Error::ZeroFunction);
        }
        let n = self.cells_per_axis;
        let ncells = self.num_cells();

        // Marginal |f| mass per axis slot, for the weighted median.
        let mut marginals = vec![vec![0.0f64; n]; self.d];
        let mut idx = vec![0usize; self.d];
        for cell in 0..ncells {
            let mut mag2 = 0.0;
            for comp in 0..self.components {
                let v = self.values[comp * ncells + cell];
                mag2 += v * v;
            }
            if mag2 != 0.0 {
                let w = mag2.sqrt();
                for (a, &i) in idx.iter().enumerate() {
                    marginals[a][i] += w;
                }
            }
            increment_index(&mut idx, n);
        }
        let mut at: Vec<usize> = marginals.iter().map(|m| weighted_median(m)).collect();
        let center_of = |at: &[usize]| -> Vec<f64> { at.iter().map(|&i| self.axis_center(i)).collect() };
        let init_value = self.first_moment(&center_of(&at));
        let mut best = init_value;

        // The objective is convex in c, hence unimodal along every axis;
        // ternary search over cell centers is exact up to plateaus.
        let mut improved = true;
        let mut sweeps = 0;
        while improved && sweeps < 8 * self.d + 8 {
            improved = false;
            sweeps += 1;
            for a in 0..self.d {
                let eval = |i: usize, at: &[usize]| -> f64 {
                    let mut probe = at.to_vec();
                    probe[a] = i;
                    self.first_moment(&center_of(&probe))
                };
                let (mut lo, mut hi) = (0usize, n - 1);
                while hi - lo > 2 {
                    let m1 = lo + (hi - lo) / 3;
                    let m2 = hi - (hi - lo) / 3;
                    if eval(m1, &at) <= eval(m2, &at) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                let (mut bi, mut bv) = (at[a], best);
                for i in lo..=hi {
                    let v = eval(i, &at);
                    if v < bv {
                        bv = v;
                        bi = i;
                    }
                }
                if bi != at[a] && bv < best {
                    at[a] = bi;
                    best = bv;
                    improved = true;
                }
            }
        }
        Ok(MomentMin { center: center_of(&at), value: best, init_value })
    }

    /// Zero-pad into a concentric box of larger power-of-two half-width with
    /// the same cell size; cell centers are preserved exactly.
    pub fn embed_into(&self, half_width: f64) -> Result<GridFunction> {
        if half_width == self.half_width {
            return Ok(self.clone());
        }
        let factor = half_width / self.half_width;
        if factor < 1.0 || factor.log2().fract() != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "embedding target {half_width} is not a power-of-two multiple of {}",
                self.half_width
            )));
        }
        let cells = self.cells_per_axis * factor as usize;
        let mut out = GridFunction::zeros(self.d, self.components, half_width, cells)?;
        let shift = (cells - self.cells_per_axis) / 2;
        let n_in = self.num_cells();
        let n_out = out.num_cells();
        let mut idx = vec![0usize; self.d];
        for cell in 0..n_in {
            let mut flat = 0usize;
            for &i in idx.iter() {
                flat = flat * cells + (i + shift);
            }
            for c in 0..self.components {
                out.values[c * n_out + flat] = self.values[c * n_in + cell];
            }
            increment_index(&mut idx, self.cells_per_axis);
        }
        Ok(out)
    }

    /// `f_n(x) = 2^{nd} f(2^n x)` realized exactly on the rescaled grid; the
    /// `L₁` norm is preserved bit-for-bit.
    pub fn dilate_l1(&self, n: i32) -> GridFunction {
        let factor = ((self.d as i32 * n) as f64).exp2();
        let mut out = self.clone();
        out.half_width = self.half_width * (-n as f64).exp2();
        for v in out.values.iter_mut() {
            *v *= factor;
        }
        out
    }

    /// Restriction `f·χ_B` to an axis-aligned closed box, selecting cells by
    /// their centers. The box must align with cell boundaries.
    pub fn restrict_to_box(&self, corner: &[f64], side: f64) -> Result<GridFunction> {
        let h = self.h();
        for &c in corner {
            let steps = (c + self.half_width) / h;
            if (steps - steps.round()).abs() > 1e-9 {
                return Err(Error::MisalignedGrid(format!(
                    "box corner {c} does not lie on the cell lattice (h = {h})"
                )));
            }
        }
        let span = side / h;
        if (span - span.round()).abs() > 1e-9 {
            return Err(Error::MisalignedGrid(format!(
                "box side {side} is not a whole number of cells (h = {h})"
            )));
        }
        let n = self.num_cells();
        let mut out = self.clone();
        let mut idx = vec![0usize; self.d];
        for cell in 0..n {
            let inside = idx.iter().enumerate().all(|(a, &i)| {
                let x = self.axis_center(i);
                x > corner[a] && x < corner[a] + side
            });
            if !inside {
                for comp in 0..self.components {
                    out.values[comp * n + cell] = 0.0;
                }
            }
            increment_index(&mut idx, self.cells_per_axis);
        }
        Ok(out)
    }

    /// Binary layout: little-endian header `(d, components, cells_per_axis)`
    /// as u64 plus `half_width` as f64, then the values row-major as f64.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&(self.d as u64).to_le_bytes())?;
        w.write_all(&(self.components as u64).to_le_bytes())?;
        w.write_all(&(self.cells_per_axis as u64).to_le_bytes())?;
        w.write_all(&self.half_width.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let mut buf8 = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut buf8)?;
            Ok(u64::from_le_bytes(buf8))
        };
        let d = read_u64(r)? as usize;
        let components = read_u64(r)? as usize;
        let cells = read_u64(r)? as usize;
        let mut hwbuf = [0u8; 8];
        r.read_exact(&mut hwbuf)?;
        let half_width = f64::from_le_bytes(hwbuf);
        let mut out = GridFunction::zeros(d, components, half_width, cells)
            .map_err(|e| Error::MalformedFile(format!("bad header: {e}")))?;
        let mut vbuf = [0u8; 8];
        for v in out.values.iter_mut() {
            r.read_exact(&mut vbuf)?;
            *v = f64::from_le_bytes(vbuf);
            if !v.is_finite() {
                return Err(Error::MalformedFile("non-finite value".into()));
            }
        }
        Ok(out)
    }

    /// Write the binary payload to `path` and a JSON sidecar to
    /// `path.with_extension("json")`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        self.write_binary(&mut file)?;
        let meta = GridMeta {
            d: self.d as u64,
            components: self.components as u64,
            cells_per_axis: self.cells_per_axis as u64,
            half_width: self.half_width,
        };
        let sidecar = path.with_extension("json");
        let body = serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::MalformedFile(e.to_string()))?;
        std::fs::write(sidecar, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path)?;
        Self::read_binary(&mut file)
    }
}

/// Result of the first-moment minimization.
#[derive(Clone, Debug)]
pub struct MomentMin {
    pub center: Vec<f64>,
    pub value: f64,
    /// Objective at the weighted-median initializer, bracketing the descent.
    pub init_value: f64,
}

/// Mollified dipole `δ_0 − δ_z` with a tensor cubic B-spline profile.
#[derive(Clone, Debug)]
pub struct DipoleSpec {
    /// Displacement of the negative pole.
    pub z: Vec<f64>,
    /// Mollification scale; the bump is supported in `[−2w, 2w]^d`.
    pub width: f64,
}

/// Cubic B-spline bump, supported on `[−2, 2]`.
pub fn bspline(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        2.0 / 3.0 - a * a + 0.5 * a * a * a
    } else if a <= 2.0 {
        let b = 2.0 - a;
        b * b * b / 6.0
    } else {
        0.0
    }
}

/// Add `weight` times a unit-mass tensor B-spline bump centered at `z` with
/// scale `w`; a no-op when the bump misses every cell.
pub fn add_bump(f: &mut GridFunction, z: &[f64], w: f64, weight: f64) {
    let n = f.cells_per_axis();
    let ncells = f.num_cells();
    let mut raw = vec![0.0f64; ncells];
    let mut idx = vec![0usize; f.d()];
    let mut total = 0.0;
    for value in raw.iter_mut() {
        let mut b = 1.0;
        for (a, &i) in idx.iter().enumerate() {
            b *= bspline((f.axis_center(i) - z[a]) / w);
            if b == 0.0 {
                break;
            }
        }
        *value = b;
        total += b;
        increment_index(&mut idx, n);
    }
    if total == 0.0 {
        return;
    }
    let scale = weight / (total * f.cell_volume());
    for (dst, src) in f.values_mut().iter_mut().zip(raw.iter()) {
        *dst += scale * src;
    }
}

/// Build the mollified dipole: a positive unit-mass bump at the origin and a
/// negative unit-mass bump at `z`. The weights are antisymmetric, so the
/// integral is exactly zero and, with disjoint pole supports, `‖f‖₁ = 2`.
pub fn make_dipole(spec: &DipoleSpec, d: usize, half_width: f64, cells: usize) -> Result<GridFunction> {
    if spec.z.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "dipole displacement has {} coordinates, d = {d}",
            spec.z.len()
        )));
    }
    let mut f = GridFunction::zeros(d, 1, half_width, cells)?;
    let h = f.h();
    if spec.width < 2.0 * h {
        return Err(Error::WidthUnresolved { width: spec.width, min: 2.0 * h });
    }
    let reach = 2.0 * spec.width;
    for (a, &za) in spec.z.iter().enumerate() {
        if reach > half_width || za.abs() + reach > half_width {
            return Err(Error::Geometry(format!(
                "pole support exceeds the box along axis {a}"
            )));
        }
    }
    let sep = spec.z.iter().map(|&c| c.abs()).fold(0.0f64, f64::max);
    if sep < 2.0 * reach {
        return Err(Error::Geometry(format!(
            "pole supports overlap: max |z_a| = {sep} < 4w = {}",
            2.0 * reach
        )));
    }
    add_bump(&mut f, &vec![0.0; d], spec.width, 1.0);
    add_bump(&mut f, &spec.z, spec.width, -1.0);
    Ok(f)
}

/// Zero-mean sum of seeded random B-spline bumps.
pub fn make_random_bumps(
    count: usize,
    seed: u64,
    d: usize,
    half_width: f64,
    cells: usize,
) -> Result<GridFunction> {
    if count == 0 {
        return Err(Error::InvalidParameter("bump count must be positive".into()));
    }
    let mut f = GridFunction::zeros(d, 1, half_width, cells)?;
    let h = f.h();
    let wmin = 2.0 * h;
    let wmax = (half_width / 4.0).max(wmin);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let w = wmin * (wmax / wmin).powf(rng.random::<f64>());
        let reach = 2.0 * w;
        let z: Vec<f64> = (0..d)
            .map(|_| (half_width - reach) * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let weight = 2.0 * rng.random::<f64>() - 1.0;
        add_bump(&mut f, &z, w, weight);
    }
    f.project_zero_mean()
}

pub(crate) fn increment_index(idx: &mut [usize], n: usize) {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < n {
            return;
        }
        idx[a] = 0;
    }
}

fn weighted_median(w: &[f64]) -> usize {
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    for (i, &x) in w.iter().enumerate() {
        acc += x;
        if acc >= 0.5 * total {
            return i;
        }
    }
    w.len().saturating_sub(1)
}

/// Fixed-order chunked summation, bit-reproducible regardless of threading.
pub(crate) struct Accumulator {
    partials: Vec<f64>,
    current: f64,
    in_chunk: usize,
}

const CHUNK: usize = 1024;

impl Accumulator {
    pub fn new() -> Self {
        Self { partials: Vec::new(), current: 0.0, in_chunk: 0 }
    }

    pub fn push(&mut self, v: f64) {
        self.current += v;
        self.in_chunk += 1;
        if self.in_chunk == CHUNK {
            self.partials.push(self.current);
            self.current = 0.0;
            self.in_chunk = 0;
        }
    }

    pub fn finish(mut self) -> f64 {
        if self.in_chunk > 0 {
            self.partials.push(self.current);
        }
        self.partials.iter().sum()
    }
}

pub(crate) fn chunked_sum(values: &[f64]) -> f64 {
    chunked_sum_by(values, |v| v)
}

pub(crate) fn chunked_sum_by(values: &[f64], map: impl Fn(f64) -> f64) -> f64 {
    let mut acc = Accumulator::new();
    for &v in values {
        acc.push(map(v));
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant_one(d: usize, half_width: f64, cells: usize) -> GridFunction {
        let mut f = GridFunction::zeros(d, 1, half_width, cells).unwrap();
        // 1 on [-1, 1], 0 outside.
        let n = f.cells_per_axis();
        let mut idx = vec![0usize; d];
        for cell in 0..f.num_cells() {
            let inside = idx.iter().all(|&i| f.axis_center(i).abs() < 1.0);
            if inside {
                f.values_mut()[cell] = 1.0;
            }
            increment_index(&mut idx, n);
        }
        f
    }

    #[test]
    fn l1_of_unit_indicator() {
        for cells in [64usize, 256] {
            let f = constant_one(1, 2.0, cells);
            assert_relative_eq!(f.l1_norm(), 2.0, max_relative = 1e-13);
            assert_relative_eq!(f.integral(), 2.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn l1_of_single_cell() {
        let mut f = GridFunction::zeros(2, 1, 1.0, 16).unwrap();
        f.values_mut()[37] = -3.0;
        let h = f.h();
        assert_relative_eq!(f.l1_norm(), 3.0 * h * h, max_relative = 1e-15);
    }

    #[test]
    fn dipole_mass_and_mean() {
        let spec = DipoleSpec { z: vec![0.5], width: 1.0 / 16.0 };
        let f = make_dipole(&spec, 1, 1.0, 512).unwrap();
        assert!(f.integral().abs() <= 1e-12 * f.l1_norm());
        assert_relative_eq!(f.l1_norm(), 2.0, max_relative = 1e-12);
        assert!(f.is_zero_mean());
    }

    #[test]
    fn dipole_width_guard() {
        let spec = DipoleSpec { z: vec![0.5], width: 1.0 / 512.0 };
        let err = make_dipole(&spec, 1, 1.0, 256).unwrap_err();
        assert!(matches!(err, Error::WidthUnresolved { .. }));
    }

    #[test]
    fn dipole_overlap_guard() {
        let spec = DipoleSpec { z: vec![0.1], width: 1.0 / 8.0 };
        let err = make_dipole(&spec, 1, 1.0, 256).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn random_bumps_deterministic() {
        let a = make_random_bumps(4, 99, 2, 1.0, 32).unwrap();
        let b = make_random_bumps(4, 99, 2, 1.0, 32).unwrap();
        assert_eq!(a, b);
        assert!(a.is_zero_mean());
    }

    #[test]
    fn projection_cases() {
        // Zero-mean input is unchanged.
        let spec = DipoleSpec { z: vec![0.5], width: 1.0 / 16.0 };
        let f = make_dipole(&spec, 1, 1.0, 256).unwrap();
        let g = f.project_zero_mean().unwrap();
        assert_eq!(f, g);

        // Single-cell support degenerates.
        let mut one = GridFunction::zeros(1, 1, 1.0, 32).unwrap();
        one.values_mut()[5] = 2.0;
        assert!(matches!(one.project_zero_mean(), Err(Error::SupportTooSmall)));

        // A constant on its own support would be annihilated.
        let mut ind = GridFunction::zeros(1, 1, 2.0, 64).unwrap();
        for i in 32..48 {
            ind.values_mut()[i] = 1.0;
        }
        assert!(matches!(ind.project_zero_mean(), Err(Error::ProjectionAnnihilates)));

        let zero = GridFunction::zeros(1, 1, 1.0, 32).unwrap();
        assert!(matches!(zero.project_zero_mean(), Err(Error::ZeroFunction)));
    }

    #[test]
    fn first_moment_point_masses() {
        let mut f = GridFunction::zeros(1, 1, 1.0, 64).unwrap();
        let h = f.h();
        // Unit masses at two cell centers.
        f.values_mut()[8] = 1.0 / h;
        f.values_mut()[40] = 1.0 / h;
        let x8 = f.axis_center(8);
        let x40 = f.axis_center(40);
        assert_relative_eq!(f.first_moment(&[x8]), x40 - x8, max_relative = 1e-12);

        let mut point = GridFunction::zeros(1, 1, 1.0, 64).unwrap();
        point.values_mut()[8] = 1.0 / h;
        assert_eq!(point.first_moment(&[x8]), 0.0);
        let mm = point.min_first_moment().unwrap();
        assert_eq!(mm.value, 0.0);
        assert_relative_eq!(mm.center[0], x8, max_relative = 1e-15);
    }

    #[test]
    fn first_moment_of_indicator_midpoint_oracle() {
        // ∫_{-1}^{1} |x| dx = 1, midpoint rule converges at O(h²).
        let f = constant_one(1, 2.0, 512);
        let v = f.first_moment(&[0.0]);
        let h = f.h();
        assert!((v - 1.0).abs() <= 4.0 * h * h, "v = {v}");
    }

    #[test]
    fn min_first_moment_flat_segment() {
        // Two equal masses: the objective is constant between them; assert the
        // value, not the minimizer.
        let mut f = GridFunction::zeros(1, 1, 1.0, 128).unwrap();
        let h = f.h();
        f.values_mut()[16] = 1.0 / h;
        f.values_mut()[80] = 1.0 / h;
        let gap = f.axis_center(80) - f.axis_center(16);
        let mm = f.min_first_moment().unwrap();
        assert_relative_eq!(mm.value, gap, max_relative = 1e-12);
        assert!(mm.value <= mm.init_value + 1e-15);
    }

    #[test]
    fn min_first_moment_symmetric_dipole() {
        let spec = DipoleSpec { z: vec![0.5], width: 1.0 / 16.0 };
        let f = make_dipole(&spec, 1, 1.0, 512).unwrap();
        // |f| has equal mass around 0 and z: the objective is flat between
        // the pole supports, so assert the value and plateau membership.
        let mm = f.min_first_moment().unwrap();
        assert!(
            mm.center[0] >= 2.0 * spec.width - f.h() && mm.center[0] <= 0.5 - 2.0 * spec.width + f.h(),
            "center = {:?}",
            mm.center
        );
        let at_mid = f.first_moment(&[0.25]);
        assert_relative_eq!(mm.value, at_mid, max_relative = 1e-10);
        assert!(mm.value <= mm.init_value + 1e-15);
    }

    #[test]
    fn moments_scale_linearly() {
        let spec = DipoleSpec { z: vec![0.25, 0.0], width: 1.0 / 32.0 };
        let f = make_dipole(&spec, 2, 1.0, 128).unwrap();
        let g = f.scaled(3.0);
        assert_relative_eq!(g.l1_norm(), 3.0 * f.l1_norm(), max_relative = 1e-13);
        assert_relative_eq!(
            g.first_moment(&[0.1, -0.2]),
            3.0 * f.first_moment(&[0.1, -0.2]),
            max_relative = 1e-13
        );
    }

    #[test]
    fn dilation_preserves_l1() {
        let spec = DipoleSpec { z: vec![0.5], width: 1.0 / 16.0 };
        let f = make_dipole(&spec, 1, 1.0, 512).unwrap();
        for n in [-2, -1, 1, 2, 3] {
            let g = f.dilate_l1(n);
            assert_relative_eq!(g.l1_norm(), f.l1_norm(), max_relative = 1e-12);
        }
    }

    #[test]
    fn first_moment_convex_on_lines() {
        let f = make_random_bumps(3, 5, 1, 1.0, 256).unwrap();
        let mut prev = f.first_moment(&[-0.9]);
        let mut cur = f.first_moment(&[-0.8]);
        let mut x = -0.7;
        while x <= 0.9 {
            let next = f.first_moment(&[x]);
            let second = next - 2.0 * cur + prev;
            assert!(second >= -1e-12 * next.abs().max(1.0));
            prev = cur;
            cur = next;
            x += 0.1;
        }
    }

    #[test]
    fn binary_round_trip() {
        let f = make_random_bumps(3, 11, 2, 1.0, 32).unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let g = GridFunction::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(f, g);
    }
}
