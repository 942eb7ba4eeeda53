#![allow(clippy::excessive_precision)]

//! Frozen end-to-end oracle values.
//!
//! Expected numbers were computed by an independent implementation of the
//! frame/tensor pipeline (separate language, separate linear algebra) and
//! are asserted here against the library path: jets -> Gram-Schmidt ->
//! projectors -> decomposition tensors -> eigensplit / second fundamental
//! form / 2-form.

use slantlab_core::ambient::Structure;
use slantlab_core::calculus::omega_form;
use slantlab_core::catalog;
use slantlab_core::slant::{self, CLUSTER_TOL};
use slantlab_core::DVec;

struct Frozen {
    chart: &'static str,
    x: &'static [f64],
    theta: [f64; 3],
    sff2: f64,
    h_norm: f64,
    omega_i_01: f64,
}

const CASES: &[Frozen] = &[
    Frozen {
        chart: "curved_slant_surface",
        x: &[0.3, -0.4],
        theta: [
            0.263_575_855_925_507_1,
            1.3719551683182933,
            1.400089675020153,
        ],
        sff2: 0.0015948105961434951,
        h_norm: 0.017_895_878_954_994_42,
        omega_i_01: 2.4438,
    },
    Frozen {
        chart: "sphere_patch",
        x: &[0.5, 0.7],
        theta: [
            1.0707963267948966,
            0.969_933_713_892_887_8,
            0.834_953_481_198_419,
        ],
        sff2: 2.0,
        h_norm: 1.0,
        omega_i_01: -0.420_735_492_403_948_3,
    },
];

#[test]
fn pipeline_matches_independent_implementation() {
    for case in CASES {
        let built = catalog::build(case.chart).unwrap();
        let x = DVec::from_row_slice(case.x);
        let class = slant::classify_point(&built.chart, &x, CLUSTER_TOL).unwrap();
        for (idx, expected) in case.theta.iter().enumerate() {
            let got = class.analyses[idx].theta.unwrap();
            assert!(
                (got - expected).abs() < 1e-13,
                "{}: theta[{idx}] = {got:.17}, expected {expected:.17}",
                case.chart
            );
        }
        let pg = built.chart.second_fundamental_form(&x).unwrap();
        let sff2 = pg.sff_norm_squared().unwrap();
        assert!(
            (sff2 - case.sff2).abs() < 1e-13,
            "{}: sff2 = {sff2:.17}",
            case.chart
        );
        let h_norm = pg.mean_curvature.as_ref().unwrap().norm();
        assert!(
            (h_norm - case.h_norm).abs() < 1e-13,
            "{}: |H| = {h_norm:.17}",
            case.chart
        );
        let form = omega_form(&built.chart, &x, Structure::I).unwrap();
        assert!(
            (form.coord_matrix[(0, 1)] - case.omega_i_01).abs() < 1e-13,
            "{}: Omega_I(d1, d2) = {:.17}",
            case.chart,
            form.coord_matrix[(0, 1)]
        );
    }
}
