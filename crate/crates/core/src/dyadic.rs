//! Dyadic cube machinery: energies, telescoping, greedy mass chains,
//! shifted-lattice covers, and the `M_p` function family.
//!
//! For a cube `Q` and a grid function `f`, the generation-`n` energy is
//!
//! ```text
//! E_{Q,n}[f] = Σ_{Q' ∈ 𝒟_n(Q)} ( ∫_{Q'} |f| )^p,
//! ```
//!
//! non-increasing in `n`, with the telescoping identity
//! `‖f‖_{L₁(Q)}^p − E_{Q,N}[f] = Σ_{n<N} (E_{Q,n} − E_{Q,n+1})` whose
//! increments are all non-negative.

use crate::error::{Error, Result};
use crate::gridfn::{increment_index, GridFunction, MomentMin};

/// Axis-aligned cube `Π_a [corner_a, corner_a + side]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeBox {
    pub corner: Vec<f64>,
    pub side: f64,
}

impl CubeBox {
    pub fn new(corner: Vec<f64>, side: f64) -> Self {
        Self { corner, side }
    }

    pub fn unit(d: usize) -> Self {
        Self { corner: vec![0.0; d], side: 1.0 }
    }

    pub fn d(&self) -> usize {
        self.corner.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.corner.iter().map(|&c| c + 0.5 * self.side).collect()
    }
}

/// Dyadic subcube `Q_{k,j}` of a root cube: generation `k`, integer corner
/// index `j ∈ [0, 2^k)^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicCube {
    pub root: CubeBox,
    pub k: u32,
    pub j: Vec<u64>,
}

impl DyadicCube {
    pub fn root_cube(root: CubeBox) -> Self {
        let d = root.d();
        Self { root, k: 0, j: vec![0; d] }
    }

    pub fn d(&self) -> usize {
        self.root.d()
    }

    pub fn side(&self) -> f64 {
        self.root.side * (-(self.k as f64)).exp2()
    }

    pub fn region(&self) -> CubeBox {
        let side = self.side();
        let corner = self
            .root
            .corner
            .iter()
            .zip(&self.j)
            .map(|(&c, &j)| c + j as f64 * side)
            .collect();
        CubeBox { corner, side }
    }

    /// The `2^d` children, in lexicographic offset order.
    pub fn children(&self) -> Vec<DyadicCube> {
        let d = self.d();
        (0..(1usize << d))
            .map(|mask| {
                let j = self
                    .j
                    .iter()
                    .enumerate()
                    .map(|(a, &ja)| 2 * ja + ((mask >> (d - 1 - a)) & 1) as u64)
                    .collect();
                DyadicCube { root: self.root.clone(), k: self.k + 1, j }
            })
            .collect()
    }

    /// All cubes of `𝒟_n(Q)` relative to this cube; `n = 0` is the cube
    /// itself.
    pub fn cubes_at(&self, n: u32) -> Vec<DyadicCube> {
        let d = self.d();
        let per_axis = 1u64 << n;
        let mut out = Vec::with_capacity((per_axis as usize).pow(d as u32));
        let mut offset = vec![0u64; d];
        loop {
            let j = self
                .j
                .iter()
                .zip(&offset)
                .map(|(&ja, &oa)| ja * per_axis + oa)
                .collect();
            out.push(DyadicCube { root: self.root.clone(), k: self.k + n, j });
            // lexicographic increment
            let mut a = d;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                offset[a] += 1;
                if offset[a] < per_axis {
                    break;
                }
                offset[a] = 0;
            }
        }
    }
}

/// Grid-aligned view of a cube: per-axis start cell and cells-per-side.
struct AlignedCube {
    start: Vec<i64>,
    cells_per_side: usize,
}

fn align(f: &GridFunction, region: &CubeBox) -> Result<AlignedCube> {
    let h = f.h();
    let span = region.side / h;
    if (span - span.round()).abs() > 1e-9 || span.round() < 1.0 {
        return Err(Error::MisalignedGrid(format!(
            "cube side {} is not a whole positive number of cells (h = {h})",
            region.side
        )));
    }
    let mut start = Vec::with_capacity(region.d());
    for &c in &region.corner {
        let s = (c + f.half_width()) / h;
        if (s - s.round()).abs() > 1e-9 {
            return Err(Error::MisalignedGrid(format!(
                "cube corner {c} does not lie on the cell lattice (h = {h})"
            )));
        }
        start.push(s.round() as i64);
    }
    Ok(AlignedCube { start, cells_per_side: span.round() as usize })
}

/// `∫_{Q}|f|` summed exactly over the grid cells inside the cube.
pub fn cube_mass(f: &GridFunction, cube: &DyadicCube) -> Result<f64> {
    let masses = subcube_masses(f, cube, 0)?;
    Ok(masses[0])
}

/// Per-subcube `L₁` masses over `𝒟_n(cube)`, row-major in the subcube index.
pub fn subcube_masses(f: &GridFunction, cube: &DyadicCube, n: u32) -> Result<Vec<f64>> {
    assert_eq!(f.components(), 1, "energies are defined for scalar functions");
    let d = f.d();
    let region = cube.region();
    let aligned = align(f, &region)?;
    let per_axis = 1usize << n;
    let sub_cells = aligned.cells_per_side / per_axis;
    if sub_cells * per_axis != aligned.cells_per_side {
        return Err(Error::MisalignedGrid(format!(
            "generation {n} subcubes of a {}-cell cube are not whole cells",
            aligned.cells_per_side
        )));
    }
    let vol = f.cell_volume();
    let grid_n = f.cells_per_axis() as i64;
    let mut masses = vec![0.0f64; per_axis.pow(d as u32)];
    let mut offset = vec![0usize; d];
    let total = aligned.cells_per_side.pow(d as u32);
    for _ in 0..total {
        let mut in_grid = true;
        let mut flat = 0usize;
        let mut sub = 0usize;
        for (start, &off) in aligned.start.iter().zip(offset.iter()) {
            let cell = start + off as i64;
            if cell < 0 || cell >= grid_n {
                in_grid = false;
                break;
            }
            flat = flat * grid_n as usize + cell as usize;
            sub = sub * per_axis + off / sub_cells;
        }
        if in_grid {
            let v = f.values()[flat];
            if v != 0.0 {
                masses[sub] += vol * v.abs();
            }
        }
        increment_index(&mut offset, aligned.cells_per_side);
    }
    Ok(masses)
}

/// `E_{Q,n}[f] = Σ (subcube mass)^p`.
pub fn energy(f: &GridFunction, cube: &DyadicCube, n: u32, p: f64) -> Result<f64> {
    let masses = subcube_masses(f, cube, n)?;
    Ok(masses.iter().map(|&m| m.powf(p)).sum())
}

/// Energies of one cube across generations, `E_{Q,0}[f], …, E_{Q,N}[f]`;
/// non-increasing in the generation.
#[derive(Clone, Debug)]
pub struct EnergyProfile {
    pub cube: DyadicCube,
    pub p: f64,
    pub values: Vec<f64>,
}

impl EnergyProfile {
    pub fn compute(f: &GridFunction, cube: &DyadicCube, p: f64, depth: u32) -> Result<Self> {
        let values = energy_profile(f, cube, p, depth)?;
        Ok(Self { cube: cube.clone(), p, values })
    }

    /// Largest relative monotonicity violation (0 when non-increasing).
    pub fn monotonicity_defect(&self) -> f64 {
        let scale = self.values.first().copied().unwrap_or(0.0).max(1e-300);
        self.values
            .windows(2)
            .fold(0.0f64, |worst, w| worst.max((w[1] - w[0]) / scale))
    }
}

/// Energies `E_{Q,0..=depth}[f]`, computed from the finest masses upward.
pub fn energy_profile(f: &GridFunction, cube: &DyadicCube, p: f64, depth: u32) -> Result<Vec<f64>> {
    let d = f.d();
    let mut masses = subcube_masses(f, cube, depth)?;
    let mut per_axis = 1usize << depth;
    let mut energies = vec![0.0f64; depth as usize + 1];
    energies[depth as usize] = masses.iter().map(|&m| m.powf(p)).sum();
    for n in (0..depth).rev() {
        let half = per_axis / 2;
        let mut coarser = vec![0.0f64; half.pow(d as u32)];
        let mut idx = vec![0usize; d];
        for m in &masses {
            let mut parent = 0usize;
            for &i in idx.iter() {
                parent = parent * half + i / 2;
            }
            coarser[parent] += m;
            increment_index(&mut idx, per_axis);
        }
        masses = coarser;
        per_axis = half;
        energies[n as usize] = masses.iter().map(|&m| m.powf(p)).sum();
    }
    Ok(energies)
}

/// Telescoping diagnostics for `‖f‖_{L₁(Q)}^p − E_{Q,N} = Σ increments`.
#[derive(Clone, Debug)]
pub struct TelescopeReport {
    pub energies: Vec<f64>,
    pub increments: Vec<f64>,
    /// Relative defect of the telescoping identity.
    pub defect: f64,
    /// Most negative relative increment (0 when all are non-negative).
    pub worst_increment: f64,
}

pub fn telescope_check(f: &GridFunction, cube: &DyadicCube, p: f64, depth: u32) -> Result<TelescopeReport> {
    let energies = energy_profile(f, cube, p, depth)?;
    let increments: Vec<f64> = energies.windows(2).map(|w| w[0] - w[1]).collect();
    let total: f64 = increments.iter().sum();
    let e0 = energies[0];
    let scale = e0.abs().max(1e-300);
    let defect = ((e0 - energies[depth as usize]) - total).abs() / scale;
    let worst_increment = increments.iter().fold(0.0f64, |w, &i| w.min(i / scale));
    Ok(TelescopeReport { energies, increments, defect, worst_increment })
}

/// `M_p(x, y) = min(x^{p−1} y, x y^{p−1})` for `p ∈ (1, 2]`.
pub fn m_p(p: f64, x: f64, y: f64) -> Result<f64> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidParameter(format!("m_p requires p in (1, 2], got {p}")));
    }
    if x < 0.0 || y < 0.0 {
        return Err(Error::InvalidParameter("m_p requires non-negative arguments".into()));
    }
    Ok(m_p_raw(p, x, y))
}

/// The p > 2 replacement `x^{p−1} y + x y^{p−1}`.
pub fn m_p_highp(p: f64, x: f64, y: f64) -> Result<f64> {
    if p <= 2.0 || !p.is_finite() {
        return Err(Error::InvalidParameter(format!("m_p_highp requires p > 2, got {p}")));
    }
    if x < 0.0 || y < 0.0 {
        return Err(Error::InvalidParameter("m_p_highp requires non-negative arguments".into()));
    }
    Ok(m_p_highp_raw(p, x, y))
}

pub(crate) fn m_p_raw(p: f64, x: f64, y: f64) -> f64 {
    if x == 0.0 || y == 0.0 {
        return 0.0;
    }
    (x.powf(p - 1.0) * y).min(x * y.powf(p - 1.0))
}

pub(crate) fn m_p_highp_raw(p: f64, x: f64, y: f64) -> f64 {
    if x == 0.0 || y == 0.0 {
        return 0.0;
    }
    x.powf(p - 1.0) * y + x * y.powf(p - 1.0)
}

/// Dispatch on the exponent: the min-form for `p ≤ 2`, the sum-form beyond.
pub fn m_p_auto(p: f64, x: f64, y: f64) -> f64 {
    if p <= 2.0 {
        m_p_raw(p, x, y)
    } else {
        m_p_highp_raw(p, x, y)
    }
}

/// Greedy chain of nested cubes, each the child with maximal `∫|f|` (ties to
/// the lexicographically smallest index).
#[derive(Clone, Debug)]
pub struct GreedyChain {
    pub cubes: Vec<DyadicCube>,
    /// Center of the deepest cube, standing in for the common point.
    pub limit_point: Vec<f64>,
    /// First-moment error of that stand-in: `diam(R_depth) · ‖f‖₁`.
    pub center_error_bound: f64,
}

pub fn greedy_chain(f: &GridFunction, cube: &DyadicCube, depth: u32) -> Result<GreedyChain> {
    let total = cube_mass(f, cube)?;
    if total <= 0.0 {
        return Err(Error::ZeroFunction);
    }
    let mut cubes = vec![cube.clone()];
    let mut current = cube.clone();
    for _ in 0..depth {
        let mut best: Option<(f64, DyadicCube)> = None;
        for child in current.children() {
            let mass = cube_mass(f, &child)?;
            let better = match &best {
                None => true,
                Some((bm, _)) => mass > *bm,
            };
            if better {
                best = Some((mass, child));
            }
        }
        current = best.expect("cube has children").1;
        cubes.push(current.clone());
    }
    let region = current.region();
    let limit_point = region.center();
    let diam = region.side * (f.d() as f64).sqrt();
    Ok(GreedyChain { cubes, limit_point, center_error_bound: diam * total })
}

/// Both sides of the energy-increment bound
/// `‖f‖_{L₁(Q)}^{p−1} inf_c ∫_Q |x−c|/ℓ(Q) |f| ≲ Σ (1−ε)^n (E_{Q,n}−E_{Q,n+1})`.
#[derive(Clone, Debug)]
pub struct EnergyIncrementReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub moment: MomentMin,
    pub eps: f64,
}

/// Default `δ` for the greedy-chain argument, solving `2(1−δ)^{p−1} = 1.02`;
/// the certified decay rate is then `ε = 1 − 1/1.02`.
pub fn default_greedy_delta(p: f64) -> f64 {
    1.0 - (0.51f64).powf(1.0 / (p - 1.0))
}

pub fn energy_increment_check(
    f: &GridFunction,
    cube: &DyadicCube,
    p: f64,
    depth: u32,
    eps: f64,
) -> Result<EnergyIncrementReport> {
    let region = cube.region();
    let restricted = f.restrict_to_box(&region.corner, region.side)?;
    let l1 = restricted.l1_norm();
    if l1 == 0.0 {
        return Err(Error::ZeroFunction);
    }
    let moment = restricted.min_first_moment()?;
    let lhs = l1.powf(p - 1.0) * moment.value / region.side;
    let energies = energy_profile(&restricted, cube, p, depth)?;
    let mut rhs = 0.0;
    let mut w = 1.0;
    for pair in energies.windows(2) {
        rhs += w * (pair[0] - pair[1]);
        w *= 1.0 - eps;
    }
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(EnergyIncrementReport { lhs, rhs, ratio, moment, eps })
}

/// Shifted-lattice cover: `s = λ^d` cubes of side `λ·ℓ(Q)` such that the
/// `λ`-fold dilate of every dyadic subcube of `Q` is dyadic in one of them,
/// where `λ = 3` plainly and `λ = 3^d` iterated.
#[derive(Clone, Debug)]
pub struct ThreeLatticeCover {
    pub cubes: Vec<CubeBox>,
    pub dilation: u64,
    pub verified_depth: u32,
    /// Side ratio `ℓ(Q^i)/ℓ(Q)` actually realized.
    pub size_ratio: f64,
}

impl ThreeLatticeCover {
    /// Index of the cover cube whose dyadic grid contains `λR`, together with
    /// the integer subcube coordinates.
    pub fn locate(&self, root: &CubeBox, k: u32, j: &[u64]) -> Option<(usize, Vec<u64>)> {
        let d = root.d();
        let lam = self.dilation as i64;
        let two_k = 1i64 << k;
        let half = (lam - 1) / 2;
        let mut omegas = vec![0i64; d];
        let mut ts = vec![0u64; d];
        for a in 0..d {
            let mut found = false;
            for om in 0..lam {
                let numer = j[a] as i64 - half + om * two_k;
                if numer.rem_euclid(lam) == 0 {
                    let t = numer / lam;
                    if t < 0 || t >= two_k {
                        return None;
                    }
                    omegas[a] = om;
                    ts[a] = t as u64;
                    found = true;
                    break;
                }
            }
            if !found {
                return None;
            }
        }
        let mut index = 0usize;
        for &om in &omegas {
            index = index * lam as usize + om as usize;
        }
        Some((index, ts))
    }
}

pub fn three_lattice_cover(root: &CubeBox, iterated: bool, verify_depth: u32) -> Result<ThreeLatticeCover> {
    let d = root.d();
    let lam: u64 = if iterated { 3u64.pow(d as u32) } else { 3 };
    let count = (lam as usize).pow(d as u32);
    let mut cubes = Vec::with_capacity(count);
    let mut omega = vec![0u64; d];
    for _ in 0..count {
        let corner = root
            .corner
            .iter()
            .zip(&omega)
            .map(|(&c, &om)| c - om as f64 * root.side)
            .collect();
        cubes.push(CubeBox { corner, side: lam as f64 * root.side });
        // increment omega lexicographically
        for a in (0..d).rev() {
            omega[a] += 1;
            if omega[a] < lam {
                break;
            }
            omega[a] = 0;
        }
    }
    let cover = ThreeLatticeCover {
        cubes,
        dilation: lam,
        verified_depth: verify_depth,
        size_ratio: lam as f64,
    };
    verify_cover(&cover, root, verify_depth)?;
    Ok(cover)
}

/// Exhaustive membership check of the covering property down to `depth`.
fn verify_cover(cover: &ThreeLatticeCover, root: &CubeBox, depth: u32) -> Result<()> {
    let d = root.d();
    let lam = cover.dilation as f64;
    for k in 0..=depth {
        let per_axis = 1u64 << k;
        let mut j = vec![0u64; d];
        let total = (per_axis as usize).pow(d as u32);
        for _ in 0..total {
            let (index, ts) = cover.locate(root, k, &j).ok_or_else(|| {
                Error::CoverVerification(format!("no cover cube for generation {k}, index {j:?}"))
            })?;
            // Geometric re-check: the dilated cube must coincide with the
            // located dyadic subcube of the cover cube.
            let host = &cover.cubes[index];
            let side_r = root.side * (-(k as f64)).exp2();
            let sub_side = host.side * (-(k as f64)).exp2();
            let tol = 1e-12 * host.side;
            if (sub_side - lam * side_r).abs() > tol {
                return Err(Error::CoverVerification("side mismatch".into()));
            }
            for a in 0..d {
                let r_center = root.corner[a] + (j[a] as f64 + 0.5) * side_r;
                let dilated_corner = r_center - 0.5 * lam * side_r;
                let host_corner = host.corner[a] + ts[a] as f64 * sub_side;
                if (dilated_corner - host_corner).abs() > tol {
                    return Err(Error::CoverVerification(format!(
                        "corner mismatch at generation {k}, index {j:?}, axis {a}"
                    )));
                }
            }
            for a in (0..d).rev() {
                j[a] += 1;
                if j[a] < per_axis {
                    break;
                }
                j[a] = 0;
            }
        }
    }
    Ok(())
}

/// Result of a brute-force infimum scan over the probability simplex.
#[derive(Clone, Debug)]
pub struct SimplexScan {
    pub infimum: f64,
    pub argmin: Vec<f64>,
    pub points: usize,
}

/// Measured constant in `(Σ z)^p − Σ z^p ≥ C (Σ z)^{p−1} min_j Σ_{i≠j} z_i`,
/// scanned over the simplex at the given resolution, skipping degenerate
/// points where the right-hand side vanishes.
pub fn energy_bound_infimum(p: f64, n: usize, resolution: usize) -> SimplexScan {
    let mut best = f64::INFINITY;
    let mut argmin = Vec::new();
    let mut points = 0usize;
    for z in compositions(n, resolution) {
        let zf: Vec<f64> = z.iter().map(|&k| k as f64 / resolution as f64).collect();
        let zmax = zf.iter().cloned().fold(0.0f64, f64::max);
        let denom = 1.0 - zmax;
        if denom <= 0.0 {
            continue;
        }
        let lhs = 1.0 - zf.iter().map(|&v| v.powf(p)).sum::<f64>();
        points += 1;
        let ratio = lhs / denom;
        if ratio < best {
            best = ratio;
            argmin = zf;
        }
    }
    SimplexScan { infimum: best, argmin, points }
}

/// Same scan against `M_p(Σ_{A} z, Σ_{∉A} z)` over all proper subsets `A`.
pub fn energy_bound2_infimum(p: f64, n: usize, resolution: usize) -> SimplexScan {
    let mut best = f64::INFINITY;
    let mut argmin = Vec::new();
    let mut points = 0usize;
    for z in compositions(n, resolution) {
        let zf: Vec<f64> = z.iter().map(|&k| k as f64 / resolution as f64).collect();
        let lhs = 1.0 - zf.iter().map(|&v| v.powf(p)).sum::<f64>();
        for mask in 1..((1usize << n) - 1) {
            let sa: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| zf[i]).sum();
            let denom = m_p_auto(p, sa, 1.0 - sa);
            if denom <= 0.0 {
                continue;
            }
            points += 1;
            let ratio = lhs / denom;
            if ratio < best {
                best = ratio;
                argmin = zf.clone();
            }
        }
    }
    SimplexScan { infimum: best, argmin, points }
}

/// All `z ∈ ℕ^n` with `Σ z = total`, lexicographic.
fn compositions(n: usize, total: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, pos: usize, left: usize) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur[pos] = k;
            rec(out, cur, pos + 1, left - k);
        }
    }
    rec(&mut out, &mut cur, 0, total);
    out
}
