//! Acceptance suite: one test per criterion, each printing a pass line and
//! asserting its tolerances and runtime budget.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use slantlab_cli::{config, emit, runner};
use slantlab_core::ambient::{
    ambient_params, quaternionic_residual, rotated_basis, standard_basis, Structure,
};
use slantlab_core::calculus::{self, NormalField, TangentField};
use slantlab_core::catalog;
use slantlab_core::exprmap::{self, Expression};
use slantlab_core::geometry::ImmersionChart;
use slantlab_core::report::Status;
use slantlab_core::slant::{self, CLUSTER_TOL};
use slantlab_core::warped::{self, FrameLevelInstance};
use slantlab_core::{DMat, DVec};

const FRAC_PI_2: f64 = std::f64::consts::FRAC_PI_2;

fn finish(number: u32, name: &str, start: Instant, budget_secs: f64) {
    let elapsed = start.elapsed().as_secs_f64();
    println!("ACCEPTANCE {number} ({name}): PASS ({elapsed:.2} s)");
    assert!(
        elapsed < budget_secs,
        "criterion {number} exceeded its {budget_secs} s budget: {elapsed:.2} s"
    );
}

fn catalog_chart(name: &str) -> ImmersionChart {
    catalog::build(name).unwrap().chart.clone()
}

fn grid_of(name: &str) -> Vec<DVec> {
    let built = catalog::build(name).unwrap();
    built.chart.domain().grid(&built.default_grid).unwrap()
}

#[test]
fn criterion_01_structure_algebra() {
    let start = Instant::now();
    // standard bases: integer matrices, relations hold exactly
    for m in [1usize, 2, 4] {
        let basis = standard_basis(m).unwrap();
        let origin = DVec::zeros(4 * m);
        let [i, j, k] = basis.triple_at(&origin).unwrap();
        assert_eq!(
            quaternionic_residual(&i, &j, &k),
            0.0,
            "standard basis m={m} must satisfy the relations exactly"
        );
    }
    // rotated basis at 100 random points
    let base = standard_basis(2).unwrap();
    let y = ambient_params(8);
    let y_refs: Vec<&str> = y.iter().map(|s| s.as_str()).collect();
    let f = exprmap::parse("y1", &y_refs).unwrap();
    let rot = rotated_basis(&base, f).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    for _ in 0..100 {
        let mut p = DVec::from_iterator(8, (0..8).map(|_| rng.random_range(-2.0..2.0)));
        p[0] = rng.random_range(0.0..1.5);
        let [i, j, k] = rot.triple_at(&p).unwrap();
        let residual = quaternionic_residual(&i, &j, &k);
        assert!(residual < 1e-12, "rotated residual {residual:.3e} at a random point");
    }
    finish(1, "structure algebra", start, 1.0);
}

#[test]
fn criterion_02_example_7_5_reproduction() {
    let start = Instant::now();
    let chart = catalog_chart("example_7_5");
    let grid = grid_of("example_7_5");
    let d1_i = DMat::from_diagonal(&DVec::from_row_slice(&[1.0, 0.0, 1.0, 0.0]));
    let d1_j = DMat::zeros(4, 4);
    let d1_k = DMat::from_diagonal(&DVec::from_row_slice(&[0.0, 1.0, 0.0, 1.0]));
    for x in &grid {
        let class = slant::classify_point(&chart, x, CLUSTER_TOL).unwrap();
        for sa in &class.analyses {
            let theta = sa.theta.unwrap();
            assert!(
                (theta - FRAC_PI_2).abs() < 1e-10,
                "theta_{} = {theta} != pi/2",
                sa.structure().label()
            );
        }
        assert!((&class.analyses[0].d1_projector - &d1_i).abs().max() < 1e-10);
        assert!((&class.analyses[1].d1_projector - &d1_j).abs().max() < 1e-10);
        assert!((&class.analyses[2].d1_projector - &d1_k).abs().max() < 1e-10);
    }
    finish(2, "Example 7.5 reproduction", start, 1.0);
}

#[test]
fn criterion_03_example_7_6_reproduction() {
    let start = Instant::now();
    let built = catalog::build("example_7_6").unwrap();
    let grid = built.chart.domain().grid(&built.default_grid).unwrap();
    let y = ambient_params(8);
    let y_refs: Vec<&str> = y.iter().map(|s| s.as_str()).collect();

    let cases: Vec<(String, Expression)> = vec![
        ("constant pi/6".into(), exprmap::parse("pi/6", &y_refs).unwrap()),
        ("constant pi/3".into(), exprmap::parse("pi/3", &y_refs).unwrap()),
        ("coordinate y4".into(), exprmap::parse("y4", &y_refs).unwrap()),
    ];
    for (label, f) in cases {
        let basis = rotated_basis(&standard_basis(2).unwrap(), f.clone()).unwrap();
        let chart = built.chart.clone().with_basis(basis).unwrap();
        for x in &grid {
            let p = chart.point(x).unwrap();
            let expected = f.eval_value(&p).unwrap();
            let class = slant::classify_point(&chart, x, CLUSTER_TOL).unwrap();
            let t_i = class.analyses[0].theta.unwrap();
            let t_j = class.analyses[1].theta.unwrap();
            let t_k = class.analyses[2].theta.unwrap();
            assert!((t_i - expected).abs() < 1e-8, "{label}: theta_I = {t_i}, f = {expected}");
            assert!(
                (t_j - (FRAC_PI_2 - expected)).abs() < 1e-8,
                "{label}: theta_J = {t_j}"
            );
            assert!((t_k - FRAC_PI_2).abs() < 1e-8, "{label}: theta_K = {t_k}");
            assert!(class.shared_d1, "{label}: D1 must be shared");
            assert_eq!(class.analyses[0].d1_dim, 4, "{label}: dim D1 = 4");
        }
    }
    finish(3, "Example 7.6 reproduction", start, 5.0);
}

#[test]
fn criterion_04_tensor_identities_on_catalog() {
    let start = Instant::now();
    for (name, _) in catalog::listing() {
        let built = catalog::build(name).unwrap();
        let grid = built.chart.domain().grid(&built.default_grid).unwrap();
        assert!(grid.len() >= 27, "{name} grid has {} points", grid.len());
        for x in &grid {
            let class = slant::classify_point(&built.chart, x, CLUSTER_TOL).unwrap();
            for sa in &class.analyses {
                for (label, residual) in slant::identity_residuals(sa) {
                    assert!(
                        residual < 1e-8,
                        "{name}: {label} ({}) residual {residual:.3e}",
                        sa.structure().label()
                    );
                }
            }
        }
    }
    finish(4, "pointwise tensor identities and bilinear slant relations", start, 10.0);
}

#[test]
fn criterion_05_covariant_identities_on_curved_charts() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(55);
    let mut curved_checked = 0;
    for name in ["sphere_patch", "curved_slant_surface", "graph_paraboloid"] {
        let chart = catalog_chart(name);
        let n = chart.param_dim();
        let grid = chart.domain().grid(&vec![3; n]).unwrap();
        // confirm the chart is genuinely curved
        let center = chart.domain().center();
        let h_norm = chart
            .second_fundamental_form(&center)
            .unwrap()
            .sff_norm_squared()
            .unwrap();
        assert!(h_norm > 1e-4, "{name} should have nonzero h, got {h_norm:.3e}");
        let z_field = NormalField::random_normal(&mut rng, &chart);
        for x in &grid {
            let data = calculus::point_data(&chart, x, CLUSTER_TOL).unwrap();
            for which in Structure::ALL {
                for a in 0..n {
                    for b in 0..n {
                        let xf = TangentField::coordinate(a, n);
                        let yf = TangentField::coordinate(b, n);
                        for (label, residual) in calculus::covariant_identity_residuals(
                            &chart, &data, which, &xf, &yf, &z_field, x,
                        )
                        .unwrap()
                        {
                            assert!(
                                residual < 1e-5,
                                "{name}: {label} residual {residual:.3e} at {:?}",
                                x.as_slice()
                            );
                        }
                    }
                }
            }
        }
        curved_checked += 1;
    }
    assert!(curved_checked >= 2);
    finish(5, "covariant-derivative identities on curved charts", start, 30.0);
}

#[test]
fn criterion_06_omega_closedness() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(66);
    let mut proper_charts = 0;
    for (name, _) in catalog::listing() {
        let built = catalog::build(name).unwrap();
        if built.role != catalog::ChartRole::Plain || !built.chart.basis().is_parallel() {
            continue;
        }
        let full = built.chart.domain().grid(&built.default_grid).unwrap();
        let grid: Vec<DVec> = full
            .iter()
            .step_by(full.len().div_ceil(18).max(1))
            .cloned()
            .collect();
        // proper pointwise almost h-slant everywhere?
        let proper = grid.iter().all(|x| {
            slant::classify_point(&built.chart, x, CLUSTER_TOL)
                .map(|c| c.proper && c.analyses.iter().all(|a| a.is_pointwise_slant()))
                .unwrap_or(false)
        });
        if !proper {
            continue;
        }
        proper_charts += 1;
        let entries =
            calculus::omega_closedness_check(&built.chart, &grid, &mut rng, 3, CLUSTER_TOL, 1e-4)
                .unwrap();
        for e in &entries {
            assert_eq!(
                e.status,
                Status::Pass,
                "{name}: dOmega residual {:.3e} labels {:?}",
                e.residual,
                e.labels
            );
        }
    }
    assert!(
        proper_charts >= 3,
        "expected several proper pointwise almost h-slant catalog charts, found {proper_charts}"
    );
    finish(6, "closedness of the fundamental 2-forms", start, 30.0);
}

#[test]
fn criterion_07_frame_level_oracle() {
    let start = Instant::now();
    let worked = FrameLevelInstance::new(
        std::f64::consts::FRAC_PI_4,
        1,
        1,
        DVec::from_row_slice(&[1.0, 0.0, 0.0, 0.0]),
        vec![0.0; 8],
    )
    .unwrap();
    let out = warped::frame_level_expansion(&worked).unwrap();
    assert!((out.lhs - 12.0).abs() < 1e-12, "worked value lhs = {}", out.lhs);
    assert!(out.gap.abs() < 1e-12);

    let mut rng = ChaCha12Rng::seed_from_u64(77);
    for i in 0..1000 {
        let inst = FrameLevelInstance::random(&mut rng, 2, 3);
        let out = warped::frame_level_expansion(&inst).unwrap();
        assert!(out.gap >= 0.0, "instance {i}: gap {} < 0", out.gap);
        assert!(
            (out.gap - out.fiber_sum).abs() < 1e-10,
            "instance {i}: |gap - sum coeffs^2| = {:.3e}",
            (out.gap - out.fiber_sum).abs()
        );
    }
    finish(7, "frame-level inequality oracle", start, 1.0);
}

#[test]
fn criterion_08_orthogonality_identities() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(88);
    for _ in 0..1000 {
        let n1 = rng.random_range(1..=2usize);
        let v = DVec::from_iterator(4 * n1, (0..4 * n1).map(|_| rng.random_range(-3.0..3.0)));
        for which in Structure::ALL {
            let (s1, s2) = warped::quaternionic_frame_sums(which, &v).unwrap();
            assert!(s1.abs() < 1e-12, "sum <Re_i, v><e_i, v> = {s1:.3e}");
            assert!(
                (s2 - v.norm_squared()).abs() < 1e-12,
                "sum <Re_i, v>^2 - |v|^2 = {:.3e}",
                s2 - v.norm_squared()
            );
        }
    }
    finish(8, "quaternionic frame orthogonality sums", start, 1.0);
}

#[test]
fn criterion_09_conformal_invariance() {
    let start = Instant::now();
    for name in ["curved_slant_surface", "sphere_patch"] {
        let chart = catalog_chart(name);
        let grid = chart.domain().grid(&[4, 4]).unwrap();
        let y = ambient_params(chart.ambient_dim());
        let y_refs: Vec<&str> = y.iter().map(|s| s.as_str()).collect();
        let fields = vec![
            Expression::constant(0.0, &y_refs),
            Expression::constant(1.0, &y_refs),
            exprmap::parse("0.2*y1 - 0.15*y3", &y_refs).unwrap(),
        ];
        let entries =
            slant::conformal_invariance_check(&chart, &grid, &fields, CLUSTER_TOL, 1e-10).unwrap();
        for e in &entries {
            assert_eq!(
                e.status,
                Status::Pass,
                "{name}: residual {:.3e} labels {:?}",
                e.residual,
                e.labels
            );
            // all three angles are interior on these charts, so the check
            // never fell back to comparing the squared-cosine ratio
            assert!(!e.labels.iter().any(|l| l.contains("cos^2 theta")));
        }
    }
    finish(9, "conformal invariance of slant angles", start, 10.0);
}

#[test]
fn criterion_10_jet_finite_difference_agreement() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(1010);
    let step = 1e-4;
    let names = ["x1", "x2", "x3"];
    let mut checked = 0usize;
    let mut attempts = 0usize;
    while checked < 500 {
        attempts += 1;
        assert!(attempts < 20_000, "generator starved");
        let nvars = rng.random_range(1..=3usize);
        let params = &names[..nvars];
        let expr = exprmap::random_expression(&mut rng, params, 3);
        let x = DVec::from_iterator(nvars, (0..nvars).map(|_| rng.random_range(-1.0..1.0)));
        let Ok(jet) = expr.eval_jet2(&x) else { continue };

        // independent oracle: central differences of plain values
        let eval = |p: &DVec| expr.eval_value(p);
        let mut ok = eval(&x).map(|v| v.abs() < 100.0).unwrap_or(false);
        let mut grad_fd = DVec::zeros(nvars);
        let mut hess_fd = DMat::zeros(nvars, nvars);
        if ok {
            'outer: for i in 0..nvars {
                let mut xp = x.clone();
                xp[i] += step;
                let mut xm = x.clone();
                xm[i] -= step;
                let (Ok(fp), Ok(fm), Ok(f0)) = (eval(&xp), eval(&xm), eval(&x)) else {
                    ok = false;
                    break;
                };
                if fp.abs() > 100.0 || fm.abs() > 100.0 {
                    ok = false;
                    break;
                }
                grad_fd[i] = (fp - fm) / (2.0 * step);
                hess_fd[(i, i)] = (fp - 2.0 * f0 + fm) / (step * step);
                for j in 0..i {
                    let mut xpp = x.clone();
                    xpp[i] += step;
                    xpp[j] += step;
                    let mut xpm = x.clone();
                    xpm[i] += step;
                    xpm[j] -= step;
                    let mut xmp = x.clone();
                    xmp[i] -= step;
                    xmp[j] += step;
                    let mut xmm = x.clone();
                    xmm[i] -= step;
                    xmm[j] -= step;
                    let (Ok(a), Ok(b), Ok(c), Ok(d)) =
                        (eval(&xpp), eval(&xpm), eval(&xmp), eval(&xmm))
                    else {
                        ok = false;
                        break 'outer;
                    };
                    let mixed = (a - b - c + d) / (4.0 * step * step);
                    hess_fd[(i, j)] = mixed;
                    hess_fd[(j, i)] = mixed;
                }
            }
        }
        if !ok {
            continue;
        }
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        for i in 0..nvars {
            assert!(
                rel(jet.gradient[i], grad_fd[i]) < 1e-5,
                "gradient mismatch on `{}`: jet {} vs fd {}",
                expr.pretty(),
                jet.gradient[i],
                grad_fd[i]
            );
            for j in 0..nvars {
                assert!(
                    rel(jet.hessian[(i, j)], hess_fd[(i, j)]) < 1e-5,
                    "hessian mismatch on `{}`: jet {} vs fd {}",
                    expr.pretty(),
                    jet.hessian[(i, j)],
                    hess_fd[(i, j)]
                );
            }
        }
        checked += 1;
    }
    finish(10, "jet vs finite-difference agreement", start, 5.0);
}

#[test]
fn criterion_11_deterministic_reports() {
    let start = Instant::now();
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/full_catalog.cfg"
    ))
    .unwrap();
    let run = || {
        let cfg = config::parse_config(&text).unwrap();
        let report = runner::run_catalog(&cfg);
        emit::to_json_bytes(&report)
    };
    let first = run();
    let second = run();
    assert_eq!(first, second, "same config and seed must give identical bytes");
    assert!(!first.is_empty());
    finish(11, "byte-identical reports", start, 600.0);
}
