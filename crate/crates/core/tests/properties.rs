//! Property-based checks of the algebraic invariants.

use proptest::prelude::*;

use mazyalab_core::dyadic::{m_p, m_p_auto, telescope_check, CubeBox, DyadicCube};
use mazyalab_core::gridfn::GridFunction;
use mazyalab_core::kernel::{exp2i, KernelSpec};

fn sparse_grid_function(seed: u64, cells: usize) -> GridFunction {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut f = GridFunction::zeros(1, 1, 1.0, cells).unwrap();
    let count = 3 + (seed % 13) as usize;
    for _ in 0..count {
        let i = rng.random_range(0..cells);
        f.values_mut()[i] = 4.0 * rng.random::<f64>() - 2.0;
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn band_homogeneity(radius in 1e-3..1e3f64, angle in 0.0..std::f64::consts::TAU, n in -8..=8i32) {
        let spec = KernelSpec::example2();
        let x = [radius * angle.cos(), radius * angle.sin()];
        let lhs = spec.eval_band(n, &x);
        let scaled = [exp2i(n) * x[0], exp2i(n) * x[1]];
        let base = spec.eval_band(0, &scaled);
        let factor = ((spec.d as f64 - spec.alpha) * n as f64).exp2();
        for (l, b) in lhs.iter().zip(&base) {
            let rhs = factor * b;
            let scale = l.abs().max(rhs.abs()).max(1e-300);
            prop_assert!((l - rhs).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn m_p_symmetry_homogeneity_scaling(
        p in 1.01..=2.0f64,
        x in 0.0..100.0f64,
        y in 0.0..100.0f64,
        t in 0.01..10.0f64,
        lambda in 0.0..1.0f64,
    ) {
        let direct = m_p(p, x, y).unwrap();
        let swapped = m_p(p, y, x).unwrap();
        prop_assert_eq!(direct, swapped);

        let scaled = m_p(p, t * x, t * y).unwrap();
        let factor = t.powf(p) * direct;
        prop_assert!((scaled - factor).abs() <= 1e-12 * scaled.abs().max(factor.abs()).max(1e-300));

        // M_p(x, λy) ≤ λ^{p−1} M_p(x, y) for λ < 1.
        let damped = m_p(p, x, lambda * y).unwrap();
        prop_assert!(damped <= lambda.powf(p - 1.0) * direct + 1e-12 * direct.max(1.0));
    }

    #[test]
    fn m_p_subadditive_in_first_argument(
        p in 1.01..2.0f64,
        parts in proptest::collection::vec(0.0..10.0f64, 1..6),
        b in 0.001..10.0f64,
    ) {
        let total: f64 = parts.iter().sum();
        let lhs = m_p_auto(p, total, b);
        let rhs: f64 = parts.iter().map(|&a| m_p_auto(p, a, b)).sum();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15, "lhs {lhs} rhs {rhs}");

        // Cross-check through the θ-representation M_p(x, y) = y^p θ(x/y)
        // with θ(t) = min(t, t^{p−1}).
        let theta = |t: f64| t.min(t.powf(p - 1.0));
        let via_theta = b.powf(p) * theta(total / b);
        prop_assert!((via_theta - lhs).abs() <= 1e-10 * lhs.max(via_theta).max(1e-300));
    }

    #[test]
    fn m_p_concave_in_second_argument(p in 1.01..=2.0f64, x in 0.01..10.0f64, y in 0.1..9.0f64, step in 0.001..0.5f64) {
        let f0 = m_p_auto(p, x, y - step);
        let f1 = m_p_auto(p, x, y);
        let f2 = m_p_auto(p, x, y + step);
        let second = f2 - 2.0 * f1 + f0;
        prop_assert!(second <= 1e-12 * f1.abs().max(1.0));
    }

    #[test]
    fn telescoping_for_random_functions(seed in 0u64..500, p_idx in 0usize..3) {
        let p = [1.5, 2.0, 3.0][p_idx];
        let f = sparse_grid_function(seed, 256);
        if f.l1_norm() == 0.0 {
            return Ok(());
        }
        let cube = DyadicCube::root_cube(CubeBox { corner: vec![-1.0], side: 2.0 });
        let rep = telescope_check(&f, &cube, p, 6).unwrap();
        prop_assert!(rep.defect <= 1e-12, "defect {}", rep.defect);
        prop_assert!(rep.worst_increment >= -1e-12, "increment {}", rep.worst_increment);
    }

    #[test]
    fn norms_scale_exactly(seed in 0u64..200, lambda in 0.01..50.0f64) {
        let f = sparse_grid_function(seed, 128);
        let g = f.scaled(lambda);
        let a = lambda * f.l1_norm();
        let b = g.l1_norm();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(b).max(1e-300));
    }

    #[test]
    fn dilation_preserves_l1_exactly(seed in 0u64..200, n in -3..=3i32) {
        let f = sparse_grid_function(seed, 128);
        let g = f.dilate_l1(n);
        let (a, b) = (f.l1_norm(), g.l1_norm());
        prop_assert!((a - b).abs() <= 1e-12 * a.max(b).max(1e-300));
    }
}
