//! Property tests for the structural invariants: expression round-trips,
//! jet/finite-difference agreement, direction-independence of slant angles,
//! and the exact gap identity of the inequality expansion.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use slantlab_core::ambient::{standard_basis, Structure};
use slantlab_core::exprmap;
use slantlab_core::geometry::{DomainBox, ImmersionChart};
use slantlab_core::slant;
use slantlab_core::warped::{frame_level_expansion, FrameLevelInstance};
use slantlab_core::{DMat, DVec};

fn slant_plane(alpha: f64) -> ImmersionChart {
    let params = ["x1", "x2"];
    let comps = [
        "x1".to_string(),
        format!("x2*cos({alpha})"),
        format!("x2*sin({alpha})"),
        "0".to_string(),
    ]
    .iter()
    .map(|s| exprmap::parse(s, &params).unwrap())
    .collect();
    ImmersionChart::new(
        params.iter().map(|s| s.to_string()).collect(),
        comps,
        DomainBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        standard_basis(1).unwrap(),
    )
    .unwrap()
}

proptest! {
    /// Parsing the pretty-printed form reproduces the tree exactly.
    #[test]
    fn expression_round_trip(seed in 0u64..5000) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let expr = exprmap::random_expression(&mut rng, &["x1", "x2"], 3);
        let printed = expr.pretty();
        let reparsed = exprmap::parse(&printed, &["x1", "x2"])
            .unwrap_or_else(|e| panic!("`{printed}` failed to reparse: {e}"));
        prop_assert_eq!(&reparsed, &expr, "round trip changed `{}`", printed);
    }

    /// Jet gradients and Hessians agree with value-only central differences.
    #[test]
    fn jets_match_finite_differences(seed in 0u64..800) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_mul(2654435761).wrapping_add(1));
        let expr = exprmap::random_expression(&mut rng, &["x1", "x2"], 3);
        use rand::Rng;
        let x = DVec::from_row_slice(&[
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ]);
        let Ok(jet) = expr.eval_jet2(&x) else { return Ok(()) };
        let eval = |p: &DVec| expr.eval_value(p);
        if eval(&x).map(|v| v.abs() > 100.0).unwrap_or(true) {
            return Ok(());
        }
        let h = 1e-4;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        for i in 0..2usize {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let (Ok(fp), Ok(fm), Ok(f0)) = (eval(&xp), eval(&xm), eval(&x)) else {
                return Ok(());
            };
            if fp.abs() > 100.0 || fm.abs() > 100.0 {
                return Ok(());
            }
            prop_assert!(rel(jet.gradient[i], (fp - fm) / (2.0 * h)) < 1e-5,
                "gradient mismatch on `{}`", expr.pretty());
            prop_assert!(rel(jet.hessian[(i, i)], (fp - 2.0 * f0 + fm) / (h * h)) < 1e-5,
                "diagonal Hessian mismatch on `{}`", expr.pretty());
        }
    }

    /// The slant angle is independent of the direction within D2, and of the
    /// sign of the direction.
    #[test]
    fn slant_angle_direction_independence(
        alpha in 0.2f64..1.4,
        mix in 0.0f64..std::f64::consts::TAU,
        px in -0.9f64..0.9,
        py in -0.9f64..0.9,
    ) {
        let chart = slant_plane(alpha);
        let pg = chart.frame_at(&DVec::from_row_slice(&[px, py])).unwrap();
        let tensors = slant::decompose(&pg, chart.basis(), Structure::I).unwrap();
        // any unit direction in the (2-dimensional, fully slant) tangent space
        let x = DVec::from_row_slice(&[mix.cos(), mix.sin()]);
        let theta = tensors.slant_angle(&x).unwrap();
        let theta_neg = tensors.slant_angle(&(-x)).unwrap();
        prop_assert!((theta - alpha).abs() < 1e-10);
        prop_assert!((theta - theta_neg).abs() < 1e-12);
    }

    /// The inequality expansion's gap equals the fiber coefficient sum
    /// exactly, for any admissible instance.
    #[test]
    fn frame_level_gap_identity(seed in 0u64..2000) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_mul(97).wrapping_add(13));
        let inst = FrameLevelInstance::random(&mut rng, 2, 3);
        let out = frame_level_expansion(&inst).unwrap();
        prop_assert!(out.gap >= -1e-10);
        prop_assert!((out.gap - out.fiber_sum).abs() < 1e-10);
        prop_assert!(out.cross_structure_spread < 1e-10);
    }

    /// Projectors coming out of a split are idempotent, complementary, and
    /// the tensor identities hold, for arbitrary tilted planes.
    #[test]
    fn split_projector_invariants(alpha in 0.1f64..1.47, px in -0.9f64..0.9) {
        let chart = slant_plane(alpha);
        let pg = chart.frame_at(&DVec::from_row_slice(&[px, 0.3])).unwrap();
        for which in Structure::ALL {
            let sa = slant::analyze(&pg, chart.basis(), which, 1e-6).unwrap();
            let n = sa.tensors.tangent_dim();
            let id = DMat::identity(n, n);
            prop_assert!(((&sa.d1_projector * &sa.d1_projector) - &sa.d1_projector).abs().max() < 1e-10);
            prop_assert!(((&sa.d1_projector + &sa.d2_projector) - id).abs().max() < 1e-10);
            for (name, r) in slant::identity_residuals(&sa) {
                prop_assert!(r < 1e-8, "{name} residual {r:.3e}");
            }
        }
    }
}
