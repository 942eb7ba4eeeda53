//! Built-in chart corpus: the worked immersion examples plus derived test
//! charts that exercise every check.
//!
//! Charts are referenced by name, optionally with arguments:
//! `slant_plane(alpha=pi/3)` or `scaled_circle(r=2)`. Argument values are
//! constant expressions.

use crate::ambient::{ambient_params, rotated_basis, standard_basis, QuaternionicBasis};
use crate::error::{Error, Result};
use crate::exprmap::{self, Expression};
use crate::geometry::{DomainBox, ImmersionChart};
use crate::warped::WarpedChart;

/// How a chart participates in checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChartRole {
    /// Ordinary immersion.
    Plain,
    /// Warped product with base = invariant block, fiber = slant.
    Warped,
    /// Role-reversed warped candidate (slant base, would-be invariant
    /// fiber); only the non-existence probe targets these.
    WarpedReversed,
}

/// A built chart with its defaults.
#[derive(Debug, Clone)]
pub struct CatalogChart {
    pub name: String,
    pub chart: ImmersionChart,
    pub warped: Option<WarpedChart>,
    pub role: ChartRole,
    pub default_grid: Vec<usize>,
}

/// Name and one-line description of every built-in chart.
pub fn listing() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "example_7_5",
            "linear 4-submanifold of R^8 with theta_I = theta_J = theta_K = pi/2 and per-structure splits",
        ),
        (
            "example_7_6",
            "linear 6-submanifold of R^8 under the rotated basis (default f = y4): theta_I = f, theta_J = pi/2 - f",
        ),
        (
            "slant_plane",
            "plane tilted by alpha (default pi/3): pointwise slant with theta_I = alpha",
        ),
        (
            "strict_slant_plane",
            "plane tilted equally against I, J, K: all three slant functions equal arccos(1/sqrt(3))",
        ),
        ("circle", "unit circle in the first complex line; |H| = 1"),
        ("scaled_circle", "circle of radius r (default 2); ||h||^2 = 1/r^2"),
        (
            "sphere_patch",
            "round 2-sphere patch inside an invariant block; totally umbilic",
        ),
        (
            "sphere_s3",
            "round 3-sphere patch in the first block of R^8; umbilic with nonzero D1 and mu",
        ),
        ("graph_paraboloid", "graph of x1^2 + x2^2; curved, non-umbilic"),
        (
            "curved_slant_surface",
            "curved surface, proper pointwise almost h-slant with varying slant functions",
        ),
        ("identity_r4", "full-dimensional chart of R^4 (empty normal bundle)"),
        (
            "invariant_block",
            "first quaternionic block of R^8; invariant (theta = 0, split ambiguous)",
        ),
        ("circle_line", "cylinder: circle x line; curved, not umbilic"),
        (
            "warped_trivial",
            "trivial warp over an invariant base block with a spherical slant fiber; pointwise h-semi-slant",
        ),
        (
            "warped_exp",
            "exponentially warped base block with spherical fiber; breaks D1 invariance",
        ),
        (
            "warped_reversed",
            "role-reversed warped candidate (slant base, 3-sphere fiber) for the non-existence probe",
        ),
    ]
}

/// Build a chart from a catalog reference like `slant_plane(alpha=pi/3)`.
pub fn build(spec: &str) -> Result<CatalogChart> {
    let (name, args) = parse_spec(spec)?;
    let get = |key: &str, default: f64| -> Result<f64> {
        for (k, v) in &args {
            if k == key {
                return Ok(*v);
            }
        }
        Ok(default)
    };
    for (k, _) in &args {
        let known = match name.as_str() {
            "slant_plane" => k == "alpha",
            "scaled_circle" => k == "r",
            _ => false,
        };
        if !known {
            return Err(Error::Contract(format!(
                "catalog chart `{name}` does not take an argument `{k}`"
            )));
        }
    }

    match name.as_str() {
        "example_7_5" => plain(
            spec,
            2,
            &["x1", "x2", "x3", "x4"],
            &["0", "0", "x3", "x1", "0", "x4", "x2", "0"],
            vec![-1.0; 4],
            vec![1.0; 4],
            vec![3, 3, 3, 3],
        ),
        "example_7_6" => {
            let mut built = plain(
                spec,
                2,
                &["x1", "x2", "x3", "x4", "x5", "x6"],
                &["0", "0", "x4", "x1", "x5", "x2", "x6", "x3"],
                vec![0.15, -1.0, -1.0, -1.0, -1.0, -1.0],
                vec![1.25, 1.0, 1.0, 1.0, 1.0, 1.0],
                vec![3, 2, 2, 2, 2, 2],
            )?;
            let y = ambient_params(8);
            let y_refs: Vec<&str> = y.iter().map(|s| s.as_str()).collect();
            let f = exprmap::parse("y4", &y_refs)?;
            let basis = rotated_basis(&standard_basis(2)?, f)?;
            built.chart = built.chart.with_basis(basis)?;
            Ok(built)
        }
        "slant_plane" => {
            let alpha = get("alpha", std::f64::consts::FRAC_PI_3)?;
            plain(
                spec,
                1,
                &["x1", "x2"],
                &[
                    "x1",
                    &format!("x2*cos({alpha})"),
                    &format!("x2*sin({alpha})"),
                    "0",
                ],
                vec![-1.0, -1.0],
                vec![1.0, 1.0],
                vec![6, 6],
            )
        }
        "strict_slant_plane" => plain(
            spec,
            1,
            &["x1", "x2"],
            &[
                "x1",
                "x2/sqrt(3)",
                "x2/sqrt(3)",
                "x2/sqrt(3)",
            ],
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
            vec![6, 6],
        ),
        "circle" => plain(
            spec,
            1,
            &["x1"],
            &["cos(x1)", "sin(x1)", "0", "0"],
            vec![0.0],
            vec![6.2],
            vec![27],
        ),
        "scaled_circle" => {
            let r = get("r", 2.0)?;
            if r <= 0.0 {
                return Err(Error::Contract("scaled_circle needs r > 0".into()));
            }
            plain(
                spec,
                1,
                &["x1"],
                &[
                    &format!("{r}*cos(x1)"),
                    &format!("{r}*sin(x1)"),
                    "0",
                    "0",
                ],
                vec![0.0],
                vec![6.2],
                vec![27],
            )
        }
        "sphere_patch" => plain(
            spec,
            1,
            &["x1", "x2"],
            &["cos(x1)*cos(x2)", "cos(x1)*sin(x2)", "sin(x1)", "0"],
            vec![0.2, 0.1],
            vec![1.2, 1.1],
            vec![6, 6],
        ),
        "sphere_s3" => plain(
            spec,
            2,
            &["x1", "x2", "x3"],
            &[
                "cos(x1)",
                "sin(x1)*cos(x2)",
                "sin(x1)*sin(x2)*cos(x3)",
                "sin(x1)*sin(x2)*sin(x3)",
                "0",
                "0",
                "0",
                "0",
            ],
            vec![0.4, 0.4, 0.1],
            vec![1.2, 1.2, 1.1],
            vec![3, 3, 3],
        ),
        "graph_paraboloid" => plain(
            spec,
            1,
            &["x1", "x2"],
            &["x1", "x2", "x1^2 + x2^2", "0"],
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
            vec![6, 6],
        ),
        "curved_slant_surface" => plain(
            spec,
            1,
            &["x1", "x2"],
            &[
                "x1",
                "x2",
                "x1 + 0.3*x2 + 0.05*x1^2",
                "0.2*x1 + 1.5*x2 + 0.05*x2^2",
            ],
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
            vec![6, 6],
        ),
        "identity_r4" => plain(
            spec,
            1,
            &["x1", "x2", "x3", "x4"],
            &["x1", "x2", "x3", "x4"],
            vec![-1.0; 4],
            vec![1.0; 4],
            vec![3, 3, 3, 3],
        ),
        "invariant_block" => plain(
            spec,
            2,
            &["x1", "x2", "x3", "x4"],
            &["x1", "x2", "x3", "x4", "0", "0", "0", "0"],
            vec![-1.0; 4],
            vec![1.0; 4],
            vec![3, 3, 3, 3],
        ),
        "circle_line" => plain(
            spec,
            1,
            &["x1", "x2"],
            &["cos(x1)", "sin(x1)", "x2", "0"],
            vec![0.0, -1.0],
            vec![3.0, 1.0],
            vec![6, 6],
        ),
        "warped_trivial" => warped_block_sphere(spec, "1.7", ChartRole::Warped),
        "warped_exp" => warped_block_sphere(spec, "exp(0.25*b1)", ChartRole::Warped),
        "warped_reversed" => warped_reversed(spec),
        other => Err(Error::Contract(format!("unknown catalog chart `{other}`"))),
    }
}

fn parse_spec(spec: &str) -> Result<(String, Vec<(String, f64)>)> {
    let spec = spec.trim();
    let Some(open) = spec.find('(') else {
        return Ok((spec.to_string(), Vec::new()));
    };
    if !spec.ends_with(')') {
        return Err(Error::Contract(format!(
            "malformed catalog reference `{spec}` (missing `)`)"
        )));
    }
    let name = spec[..open].trim().to_string();
    let body = &spec[open + 1..spec.len() - 1];
    let mut args = Vec::new();
    for part in body.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let Some(eq) = part.find('=') else {
            return Err(Error::Contract(format!(
                "catalog argument `{part}` is not key=value"
            )));
        };
        let key = part[..eq].trim().to_string();
        let value_src = part[eq + 1..].trim();
        let value_expr = exprmap::parse(value_src, &[])?;
        let value = value_expr.eval_value(&crate::DVec::zeros(0))?;
        args.push((key, value));
    }
    Ok((name, args))
}

fn plain(
    name: &str,
    m: usize,
    params: &[&str],
    components: &[&str],
    lo: Vec<f64>,
    hi: Vec<f64>,
    grid: Vec<usize>,
) -> Result<CatalogChart> {
    let comps: Result<Vec<Expression>> = components
        .iter()
        .map(|s| exprmap::parse(s, params))
        .collect();
    let chart = ImmersionChart::new(
        params.iter().map(|s| s.to_string()).collect(),
        comps?,
        DomainBox::new(lo, hi)?,
        standard_basis(m)?,
    )?;
    Ok(CatalogChart {
        name: name.to_string(),
        chart,
        warped: None,
        role: ChartRole::Plain,
        default_grid: grid,
    })
}

fn warped_block_sphere(name: &str, warp_src: &str, role: ChartRole) -> Result<CatalogChart> {
    let base_params: Vec<String> = (1..=4).map(|i| format!("b{i}")).collect();
    let b_refs: Vec<&str> = base_params.iter().map(|s| s.as_str()).collect();
    let base_components: Vec<Expression> = (0..8)
        .map(|i| {
            if i < 4 {
                Expression::variable(i, &b_refs)
            } else {
                Expression::constant(0.0, &b_refs)
            }
        })
        .collect();
    let fiber_params = vec!["t1".to_string(), "t2".to_string()];
    let f_refs: Vec<&str> = fiber_params.iter().map(|s| s.as_str()).collect();
    let fiber_components: Result<Vec<Expression>> = [
        "0",
        "0",
        "0",
        "0",
        "cos(t1)*cos(t2)",
        "cos(t1)*sin(t2)",
        "sin(t1)",
        "0",
    ]
    .iter()
    .map(|s| exprmap::parse(s, &f_refs))
    .collect();
    let warp = exprmap::parse(warp_src, &b_refs)?;
    let domain = DomainBox::new(
        vec![-0.5, -0.5, -0.5, -0.5, 0.2, 0.1],
        vec![0.5, 0.5, 0.5, 0.5, 1.2, 1.1],
    )?;
    let wc = WarpedChart::new(
        base_params,
        base_components,
        fiber_params,
        fiber_components?,
        warp,
        domain,
        standard_basis(2)?,
    )?;
    Ok(CatalogChart {
        name: name.to_string(),
        chart: wc.chart().clone(),
        warped: Some(wc),
        role,
        default_grid: vec![2, 2, 2, 2, 2, 2],
    })
}

fn warped_reversed(name: &str) -> Result<CatalogChart> {
    let base_params: Vec<String> = vec!["b1".into(), "b2".into()];
    let b_refs: Vec<&str> = base_params.iter().map(|s| s.as_str()).collect();
    let base_components: Result<Vec<Expression>> = [
        "b1",
        "b2*cos(1.0)",
        "b2*sin(1.0)",
        "0",
        "0",
        "0",
        "0",
        "0",
    ]
    .iter()
    .map(|s| exprmap::parse(s, &b_refs))
    .collect();
    let fiber_params: Vec<String> = vec!["t1".into(), "t2".into(), "t3".into()];
    let f_refs: Vec<&str> = fiber_params.iter().map(|s| s.as_str()).collect();
    let fiber_components: Result<Vec<Expression>> = [
        "0",
        "0",
        "0",
        "0",
        "cos(t1)",
        "sin(t1)*cos(t2)",
        "sin(t1)*sin(t2)*cos(t3)",
        "sin(t1)*sin(t2)*sin(t3)",
    ]
    .iter()
    .map(|s| exprmap::parse(s, &f_refs))
    .collect();
    let warp = exprmap::parse("exp(0.2*b1)", &b_refs)?;
    let domain = DomainBox::new(
        vec![-0.5, 0.2, 0.4, 0.4, 0.4],
        vec![0.5, 1.0, 1.2, 1.2, 1.2],
    )?;
    let wc = WarpedChart::new(
        base_params,
        base_components?,
        fiber_params,
        fiber_components?,
        warp,
        domain,
        standard_basis(2)?,
    )?;
    Ok(CatalogChart {
        name: name.to_string(),
        chart: wc.chart().clone(),
        warped: Some(wc),
        role: ChartRole::WarpedReversed,
        default_grid: vec![2, 2, 2, 2, 2],
    })
}

/// Swap the ambient basis of a built catalog chart (and its warped data, if
/// any) for a replacement with matching dimension.
pub fn with_basis(built: &CatalogChart, basis: QuaternionicBasis) -> Result<CatalogChart> {
    let mut out = built.clone();
    out.chart = out.chart.with_basis(basis.clone())?;
    if let Some(wc) = &built.warped {
        // rebuild the combined chart's basis in place
        let mut new_wc = wc.clone();
        new_wc.set_basis(basis)?;
        out.warped = Some(new_wc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_chart_builds() {
        for (name, _) in listing() {
            let built = build(name).unwrap();
            assert_eq!(built.default_grid.len(), built.chart.param_dim());
            let grid = built.chart.domain().grid(&built.default_grid).unwrap();
            assert!(grid.len() >= 27 || built.role != ChartRole::Plain,
                "{name} grid too small: {}", grid.len());
            // frames must exist everywhere on the default grid
            for x in grid.iter().take(8) {
                built.chart.frame_at(x).unwrap();
            }
        }
    }

    #[test]
    fn parameterized_references() {
        let built = build("slant_plane(alpha=pi/6)").unwrap();
        assert_eq!(built.name, "slant_plane(alpha=pi/6)");
        let built = build("scaled_circle(r=3)").unwrap();
        let x = crate::DVec::from_row_slice(&[0.4]);
        let g = built.chart.second_fundamental_form(&x).unwrap();
        assert!((g.sff_norm_squared().unwrap() - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_name_and_bad_args() {
        assert!(build("nonexistent").is_err());
        assert!(build("slant_plane(beta=1)").is_err());
        assert!(build("slant_plane(alpha=pi/3").is_err());
    }

    #[test]
    fn strict_slant_plane_has_equal_angles() {
        let built = build("strict_slant_plane").unwrap();
        let x = crate::DVec::from_row_slice(&[0.3, -0.5]);
        let class = crate::slant::classify_point(&built.chart, &x, 1e-6).unwrap();
        let expected = (1.0f64 / 3.0f64.sqrt()).acos();
        for sa in &class.analyses {
            assert!((sa.theta.unwrap() - expected).abs() < 1e-12);
            assert!(sa.is_pointwise_slant());
        }
        assert!(class.strictly, "equal angles with a shared split");
        assert!(class.proper);
        assert!(class
            .labels()
            .iter()
            .any(|l| l == "strictly-semi-slant"));
    }

    #[test]
    fn curved_slant_surface_is_proper_slant_with_varying_theta() {
        let built = build("curved_slant_surface").unwrap();
        let grid = built
            .chart
            .domain()
            .grid(&built.default_grid)
            .unwrap();
        let mut theta_min = [f64::INFINITY; 3];
        let mut theta_max = [f64::NEG_INFINITY; 3];
        for x in &grid {
            let class = crate::slant::classify_point(&built.chart, x, 1e-6).unwrap();
            assert!(class.proper, "not proper at {:?}", x.as_slice());
            for (i, a) in class.analyses.iter().enumerate() {
                assert!(a.is_pointwise_slant());
                let t = a.theta.unwrap();
                theta_min[i] = theta_min[i].min(t);
                theta_max[i] = theta_max[i].max(t);
            }
        }
        // the slant functions genuinely vary over the domain
        assert!(theta_max[0] - theta_min[0] > 1e-3);
    }
}
