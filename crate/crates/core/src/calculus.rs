//! Differential-identity verification: tangent fields, Lie brackets,
//! covariant derivatives of the structure tensors, integrability and
//! totally-geodesic-foliation criteria, umbilic analysis, and the
//! fundamental 2-forms with their closedness.
//!
//! The induced connection is the tangential projection of the ambient
//! directional derivative (the ambient space is flat, so this is the
//! Levi-Civita connection of the induced metric). All third-order quantities
//! are central differences of exact second-order jets with step 1e-5, which
//! budgets identity tolerances at 1e-5 for frame-local identities and 1e-4
//! for the exterior derivative of the 2-forms.

use std::sync::Arc;

use crate::ambient::Structure;
use crate::error::Result;
use crate::geometry::{ImmersionChart, PointGeometry};
use crate::report::{CheckEntry, ResidualMax, Status};
use crate::slant::{self, PointClassification, SlantAnalysis, SlantKind};
use crate::{DMat, DVec};

/// Shared closure type for parameter-dependent vector data.
type VecField = Arc<dyn Fn(&DVec) -> Result<DVec> + Send + Sync>;

/// Central-difference step for all field derivatives.
pub const FD_STEP: f64 = 1e-5;
/// Default tolerance for frame-local differential identities.
pub const IDENTITY_TOL: f64 = 1e-5;
/// Default tolerance for the six-term exterior-derivative evaluation.
pub const D_OMEGA_TOL: f64 = 1e-4;
/// Slant angles below this count as zero for theorem preconditions.
pub const THETA_FLOOR: f64 = 1e-3;

/// A tangent vector field given by its coefficients against the coordinate
/// fields of the chart: `X = sum_i u_i(x) d_i Phi`.
#[derive(Clone)]
pub struct TangentField {
    coeffs: VecField,
}

impl std::fmt::Debug for TangentField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TangentField")
    }
}

impl TangentField {
    pub fn from_fn<F>(f: F) -> TangentField
    where
        F: Fn(&DVec) -> Result<DVec> + Send + Sync + 'static,
    {
        TangentField {
            coeffs: Arc::new(f),
        }
    }

    /// Constant-coefficient field.
    pub fn constant(u: DVec) -> TangentField {
        TangentField::from_fn(move |_| Ok(u.clone()))
    }

    /// The `k`-th coordinate field.
    pub fn coordinate(k: usize, n: usize) -> TangentField {
        let mut u = DVec::zeros(n);
        u[k] = 1.0;
        TangentField::constant(u)
    }

    /// Field with random constant, linear, and quadratic coefficient terms.
    pub fn random_polynomial<R: rand::Rng>(rng: &mut R, n: usize) -> TangentField {
        let c0 = DVec::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..1.0)));
        let lin = DMat::from_iterator(n, n, (0..n * n).map(|_| rng.random_range(-0.5..0.5)));
        let quad: Vec<DMat> = (0..n)
            .map(|_| {
                let m =
                    DMat::from_iterator(n, n, (0..n * n).map(|_| rng.random_range(-0.25..0.25)));
                &m + m.transpose()
            })
            .collect();
        TangentField::from_fn(move |x| {
            let mut u = &c0 + &lin * x;
            for (i, q) in quad.iter().enumerate() {
                u[i] += (x.transpose() * q * x)[(0, 0)];
            }
            Ok(u)
        })
    }

    pub fn coeffs_at(&self, x: &DVec) -> Result<DVec> {
        (self.coeffs)(x)
    }
}

/// An ambient-vector-valued field over the parameter domain (used for normal
/// fields).
#[derive(Clone)]
pub struct NormalField {
    values: VecField,
}

impl NormalField {
    pub fn from_fn<F>(f: F) -> NormalField
    where
        F: Fn(&DVec) -> Result<DVec> + Send + Sync + 'static,
    {
        NormalField {
            values: Arc::new(f),
        }
    }

    /// Normal projection of a random polynomial ambient field; smooth and
    /// normal by construction.
    pub fn random_normal<R: rand::Rng>(
        rng: &mut R,
        chart: &ImmersionChart,
    ) -> NormalField {
        let dim = chart.ambient_dim();
        let n = chart.param_dim();
        let c0 = DVec::from_iterator(dim, (0..dim).map(|_| rng.random_range(-1.0..1.0)));
        let lin = DMat::from_iterator(dim, n, (0..dim * n).map(|_| rng.random_range(-0.5..0.5)));
        let chart = chart.clone();
        NormalField::from_fn(move |x| {
            let raw = &c0 + &lin * x;
            let pg = chart.frame_at(x)?;
            Ok(&pg.normal_projector * raw)
        })
    }

    pub fn value_at(&self, x: &DVec) -> Result<DVec> {
        (self.values)(x)
    }
}

/// Lie bracket `[X, Y]` in parameter coordinates at `x`:
/// `(Du_Y) u_X - (Du_X) u_Y` by central differences.
pub fn lie_bracket(x_field: &TangentField, y_field: &TangentField, x: &DVec) -> Result<DVec> {
    let ux = x_field.coeffs_at(x)?;
    let uy = y_field.coeffs_at(x)?;
    let dy_along_x = directional_coeff_derivative(y_field, x, &ux)?;
    let dx_along_y = directional_coeff_derivative(x_field, x, &uy)?;
    Ok(dy_along_x - dx_along_y)
}

fn directional_coeff_derivative(field: &TangentField, x: &DVec, dir: &DVec) -> Result<DVec> {
    let plus = field.coeffs_at(&(x + dir * FD_STEP))?;
    let minus = field.coeffs_at(&(x - dir * FD_STEP))?;
    Ok((plus - minus) / (2.0 * FD_STEP))
}

/// Pointwise geometry plus full classification, the working set for every
/// differential check.
pub struct PointData {
    pub pg: PointGeometry,
    pub class: PointClassification,
}

pub fn point_data(chart: &ImmersionChart, x: &DVec, cluster_tol: f64) -> Result<PointData> {
    let pg = chart.second_fundamental_form(x)?;
    let class = slant::classify_geometry(&pg, chart.basis(), cluster_tol)?;
    Ok(PointData { pg, class })
}

// ---------------------------------------------------------------------------
// field-level building blocks
// ---------------------------------------------------------------------------

/// Ambient vector of a tangent field at `x`.
pub fn ambient_of(chart: &ImmersionChart, field: &TangentField, x: &DVec) -> Result<DVec> {
    let u = field.coeffs_at(x)?;
    Ok(chart.jets(x)?.jacobian * u)
}

fn ambient_derivative(
    chart: &ImmersionChart,
    field: &TangentField,
    x: &DVec,
    dir: &DVec,
) -> Result<DVec> {
    let plus = ambient_of(chart, field, &(x + dir * FD_STEP))?;
    let minus = ambient_of(chart, field, &(x - dir * FD_STEP))?;
    Ok((plus - minus) / (2.0 * FD_STEP))
}

/// Induced connection `nabla_X Y` at `x` as an ambient (tangent) vector.
pub fn nabla(
    chart: &ImmersionChart,
    pg: &PointGeometry,
    x_field: &TangentField,
    y_field: &TangentField,
    x: &DVec,
) -> Result<DVec> {
    let dir = x_field.coeffs_at(x)?;
    let derivative = ambient_derivative(chart, y_field, x, &dir)?;
    Ok(&pg.tangent_projector * derivative)
}

/// Normal connection `D_X Z` of an ambient-valued field at `x`.
pub fn normal_connection_of(
    pg: &PointGeometry,
    x_field: &TangentField,
    z_field: &NormalField,
    x: &DVec,
) -> Result<DVec> {
    let dir = x_field.coeffs_at(x)?;
    let plus = z_field.value_at(&(x + &dir * FD_STEP))?;
    let minus = z_field.value_at(&(x - &dir * FD_STEP))?;
    let derivative = (plus - minus) / (2.0 * FD_STEP);
    Ok(&pg.normal_projector * derivative)
}

/// Solve `R u = c` for upper triangular `R` (frame coords -> coordinate
/// coefficients).
fn solve_upper(r: &DMat, c: &DVec) -> DVec {
    let n = r.nrows();
    let mut u = c.clone();
    for row in (0..n).rev() {
        for k in row + 1..n {
            let v = u[k];
            u[row] -= r[(row, k)] * v;
        }
        u[row] /= r[(row, row)];
    }
    u
}

/// The field `phi_R Y` as a tangent field.
pub fn phi_field(chart: &ImmersionChart, which: Structure, y_field: &TangentField) -> TangentField {
    let chart = chart.clone();
    let y_field = y_field.clone();
    TangentField::from_fn(move |x| {
        let pg = chart.frame_at(x)?;
        let t = slant::decompose(&pg, chart.basis(), which)?;
        let u = y_field.coeffs_at(x)?;
        let frame_coords = &pg.gs_upper * u;
        let phi_coords = &t.phi * frame_coords;
        Ok(solve_upper(&pg.gs_upper, &phi_coords))
    })
}

/// The normal field `omega_R Y`.
pub fn omega_field(chart: &ImmersionChart, which: Structure, y_field: &TangentField) -> NormalField {
    let chart = chart.clone();
    let y_field = y_field.clone();
    NormalField::from_fn(move |x| {
        let pg = chart.frame_at(x)?;
        let t = slant::decompose(&pg, chart.basis(), which)?;
        let u = y_field.coeffs_at(x)?;
        let frame_coords = &pg.gs_upper * u;
        Ok(pg.from_normal_coords(&(&t.omega * frame_coords)))
    })
}

/// The tangent field `B_R Z` of a normal field `Z`.
pub fn b_field(chart: &ImmersionChart, which: Structure, z_field: &NormalField) -> TangentField {
    let chart = chart.clone();
    let z_field = z_field.clone();
    TangentField::from_fn(move |x| {
        let pg = chart.frame_at(x)?;
        let t = slant::decompose(&pg, chart.basis(), which)?;
        let z = z_field.value_at(x)?;
        let frame_coords = &t.b * pg.to_normal_coords(&z);
        Ok(solve_upper(&pg.gs_upper, &frame_coords))
    })
}

/// The normal field `C_R Z` of a normal field `Z`.
pub fn c_field(chart: &ImmersionChart, which: Structure, z_field: &NormalField) -> NormalField {
    let chart = chart.clone();
    let z_field = z_field.clone();
    NormalField::from_fn(move |x| {
        let pg = chart.frame_at(x)?;
        let t = slant::decompose(&pg, chart.basis(), which)?;
        let z = z_field.value_at(x)?;
        Ok(pg.from_normal_coords(&(&t.c * pg.to_normal_coords(&z))))
    })
}

/// Project a tangent field onto `D1` or `D2` of the given structure,
/// pointwise. Near cluster-merging points the projector field is
/// discontinuous; callers exclude such points.
pub fn distribution_field(
    chart: &ImmersionChart,
    which: Structure,
    first: bool,
    cluster_tol: f64,
    base: &TangentField,
) -> TangentField {
    let chart = chart.clone();
    let base = base.clone();
    TangentField::from_fn(move |x| {
        let pg = chart.frame_at(x)?;
        let sa = slant::analyze(&pg, chart.basis(), which, cluster_tol)?;
        let u = base.coeffs_at(x)?;
        let frame_coords = &pg.gs_upper * u;
        let projected = if first {
            &sa.d1_projector * frame_coords
        } else {
            &sa.d2_projector * frame_coords
        };
        Ok(solve_upper(&pg.gs_upper, &projected))
    })
}

// ---------------------------------------------------------------------------
// pointwise applications of the decomposition tensors
// ---------------------------------------------------------------------------

/// Convenience wrapper for applying the decomposition tensors at one point.
pub struct Tensors<'a> {
    pub pg: &'a PointGeometry,
    pub sa: &'a SlantAnalysis,
}

impl<'a> Tensors<'a> {
    pub fn new(pg: &'a PointGeometry, sa: &'a SlantAnalysis) -> Tensors<'a> {
        Tensors { pg, sa }
    }

    pub fn phi_ambient(&self, tangent: &DVec) -> DVec {
        let c = self.pg.to_frame_coords(tangent);
        self.pg.from_frame_coords(&(&self.sa.tensors.phi * c))
    }

    pub fn omega_ambient(&self, tangent: &DVec) -> DVec {
        let c = self.pg.to_frame_coords(tangent);
        self.pg.from_normal_coords(&(&self.sa.tensors.omega * c))
    }

    pub fn b_ambient(&self, normal: &DVec) -> DVec {
        let c = self.pg.to_normal_coords(normal);
        self.pg.from_frame_coords(&(&self.sa.tensors.b * c))
    }

    pub fn c_ambient(&self, normal: &DVec) -> DVec {
        let c = self.pg.to_normal_coords(normal);
        self.pg.from_normal_coords(&(&self.sa.tensors.c * c))
    }

    pub fn h_ambient(&self, u: &DVec, v: &DVec) -> Result<DVec> {
        self.pg.h_apply(
            &self.pg.to_frame_coords(u),
            &self.pg.to_frame_coords(v),
        )
    }

    /// `A_Z X` as an ambient tangent vector.
    pub fn shape_ambient(&self, z: &DVec, x_tangent: &DVec) -> Result<DVec> {
        let a = self.pg.shape_operator(z)?;
        let coords = a * self.pg.to_frame_coords(x_tangent);
        Ok(self.pg.from_frame_coords(&coords))
    }
}

/// `(nabla_X phi_R) Y` at `x` as an ambient tangent vector.
pub fn nabla_phi(
    chart: &ImmersionChart,
    data: &PointData,
    which: Structure,
    x_field: &TangentField,
    y_field: &TangentField,
    x: &DVec,
) -> Result<DVec> {
    let t = Tensors::new(&data.pg, data.class.for_structure(which));
    let phi_y = phi_field(chart, which, y_field);
    let first = nabla(chart, &data.pg, x_field, &phi_y, x)?;
    let nxy = nabla(chart, &data.pg, x_field, y_field, x)?;
    Ok(first - t.phi_ambient(&nxy))
}

/// `(D_X omega_R) Y` at `x` as an ambient normal vector.
pub fn d_omega_tensor(
    chart: &ImmersionChart,
    data: &PointData,
    which: Structure,
    x_field: &TangentField,
    y_field: &TangentField,
    x: &DVec,
) -> Result<DVec> {
    let t = Tensors::new(&data.pg, data.class.for_structure(which));
    let omega_y = omega_field(chart, which, y_field);
    let first = normal_connection_of(&data.pg, x_field, &omega_y, x)?;
    let nxy = nabla(chart, &data.pg, x_field, y_field, x)?;
    Ok(first - t.omega_ambient(&nxy))
}

/// Residuals of the four covariant-derivative identities:
///
/// ```text
/// (nabla_X phi) Y = A_{omega Y} X + B h(X, Y)
/// (D_X omega) Y   = -h(X, phi Y) + C h(X, Y)
/// -phi A_Z X + B D_X Z = nabla_X (B Z) - A_{C Z} X
/// -omega A_Z X + C D_X Z = h(X, B Z) + D_X (C Z)
/// ```
pub fn covariant_identity_residuals(
    chart: &ImmersionChart,
    data: &PointData,
    which: Structure,
    x_field: &TangentField,
    y_field: &TangentField,
    z_field: &NormalField,
    x: &DVec,
) -> Result<Vec<(String, f64)>> {
    let t = Tensors::new(&data.pg, data.class.for_structure(which));
    let r = which.label();
    let mut out = Vec::with_capacity(4);

    let x_amb = ambient_of(chart, x_field, x)?;
    let y_amb = ambient_of(chart, y_field, x)?;

    let lhs = nabla_phi(chart, data, which, x_field, y_field, x)?;
    let a_term = t.shape_ambient(&t.omega_ambient(&y_amb), &x_amb)?;
    let b_term = t.b_ambient(&t.h_ambient(&x_amb, &y_amb)?);
    out.push((
        format!("(nabla_X phi_{r})Y - A_{{omega Y}}X - B h(X,Y)"),
        (lhs - a_term - b_term).norm(),
    ));

    let lhs = d_omega_tensor(chart, data, which, x_field, y_field, x)?;
    let h_phi = t.h_ambient(&x_amb, &t.phi_ambient(&y_amb))?;
    let c_term = t.c_ambient(&t.h_ambient(&x_amb, &y_amb)?);
    out.push((
        format!("(D_X omega_{r})Y + h(X, phi Y) - C h(X,Y)"),
        (lhs + h_phi - c_term).norm(),
    ));

    let z0 = z_field.value_at(x)?;
    let a_z_x = t.shape_ambient(&z0, &x_amb)?;
    let d_x_z = normal_connection_of(&data.pg, x_field, z_field, x)?;
    let bz = b_field(chart, which, z_field);
    let cz = c_field(chart, which, z_field);

    let lhs = t.b_ambient(&d_x_z) - t.phi_ambient(&a_z_x);
    let rhs = nabla(chart, &data.pg, x_field, &bz, x)?
        - t.shape_ambient(&t.c_ambient(&z0), &x_amb)?;
    out.push((
        format!("-phi_{r} A_Z X + B D_X Z - nabla_X(B Z) + A_{{C Z}}X"),
        (lhs - rhs).norm(),
    ));

    let lhs = t.c_ambient(&d_x_z) - t.omega_ambient(&a_z_x);
    let bz_amb = ambient_of(chart, &bz, x)?;
    let rhs = t.h_ambient(&x_amb, &bz_amb)? + normal_connection_of(&data.pg, x_field, &cz, x)?;
    out.push((
        format!("-omega_{r} A_Z X + C D_X Z - h(X, B Z) - D_X(C Z)"),
        (lhs - rhs).norm(),
    ));

    Ok(out)
}

/// Lemma-level check over a grid: evaluates all four covariant identities on
/// coordinate field pairs and a smooth random normal field.
pub fn covariant_identities_check<R: rand::Rng>(
    chart: &ImmersionChart,
    grid: &[DVec],
    rng: &mut R,
    cluster_tol: f64,
    tolerance: f64,
) -> Result<Vec<CheckEntry>> {
    let n = chart.param_dim();
    if !chart.basis().is_parallel() {
        return Ok(all_skipped(grid.len(), "non-parallel basis (not hyperkähler)"));
    }
    let z_field = NormalField::random_normal(rng, chart);
    let mut entries = Vec::with_capacity(grid.len());
    for (idx, x) in grid.iter().enumerate() {
        let data = match point_data(chart, x, cluster_tol) {
            Ok(d) => d,
            Err(err) => {
                entries.push(CheckEntry::skipped(idx, err.to_string()));
                continue;
            }
        };
        let mut worst = ResidualMax::default();
        for which in Structure::ALL {
            for a in 0..n {
                let x_f = TangentField::coordinate(a, n);
                for b in 0..n {
                    let y_f = TangentField::coordinate(b, n);
                    for (name, value) in covariant_identity_residuals(
                        chart, &data, which, &x_f, &y_f, &z_field, x,
                    )? {
                        worst.update(&format!("{name} (X=d{a}, Y=d{b})"), value);
                    }
                }
            }
        }
        entries.push(
            worst
                .entry(idx, tolerance)
                .with_theta(data.class.theta_triple())
                .finalize(),
        );
    }
    Ok(entries)
}

fn all_skipped(count: usize, reason: &str) -> Vec<CheckEntry> {
    (0..count.max(1))
        .map(|idx| CheckEntry::skipped(idx, reason))
        .collect()
}

// ---------------------------------------------------------------------------
// integrability of the two distributions
// ---------------------------------------------------------------------------

/// Pick distribution-projected coordinate fields that are non-degenerate at
/// `x` (projected norm above 0.5).
fn distribution_fields_at(
    chart: &ImmersionChart,
    which: Structure,
    first: bool,
    cluster_tol: f64,
    x: &DVec,
) -> Result<Vec<TangentField>> {
    let n = chart.param_dim();
    let mut fields = Vec::new();
    for k in 0..n {
        let base = TangentField::coordinate(k, n);
        let projected = distribution_field(chart, which, first, cluster_tol, &base);
        let coeffs = projected.coeffs_at(x)?;
        if coeffs.norm() > 0.5 {
            fields.push(projected);
        }
    }
    Ok(fields)
}

/// Integrability of the invariant distribution `D1` (direct bracket test
/// against the two displayed criterion expressions, all three structures).
pub fn integrability_check_d1(
    chart: &ImmersionChart,
    grid: &[DVec],
    cluster_tol: f64,
    tolerance: f64,
) -> Result<Vec<CheckEntry>> {
    integrability_check(chart, grid, cluster_tol, tolerance, true)
}

/// Integrability of the slant distribution `D2`.
pub fn integrability_check_d2(
    chart: &ImmersionChart,
    grid: &[DVec],
    cluster_tol: f64,
    tolerance: f64,
) -> Result<Vec<CheckEntry>> {
    integrability_check(chart, grid, cluster_tol, tolerance, false)
}

fn integrability_check(
    chart: &ImmersionChart,
    grid: &[DVec],
    cluster_tol: f64,
    tolerance: f64,
    first_distribution: bool,
) -> Result<Vec<CheckEntry>> {
    if !chart.basis().is_parallel() {
        return Ok(all_skipped(grid.len(), "non-parallel basis (not hyperkähler)"));
    }
    let mut entries = Vec::with_capacity(grid.len());
    for (idx, x) in grid.iter().enumerate() {
        let data = match point_data(chart, x, cluster_tol) {
            Ok(d) => d,
            Err(err) => {
                entries.push(CheckEntry::skipped(idx, err.to_string()));
                continue;
            }
        };
        if data
            .class
            .analyses
            .iter()
            .any(|a| a.kind == SlantKind::NonConforming)
        {
            entries.push(CheckEntry::non_conforming(idx, "eigenvalue clustering"));
            continue;
        }
        if data.class.analyses.iter().any(|a| a.split_ambiguous) {
            entries.push(CheckEntry::skipped(
                idx,
                "split ambiguous (theta near 0); projector field not smooth",
            ));
            continue;
        }

        let mut verdicts: Vec<(Structure, f64, f64)> = Vec::new();
        let mut insufficient: Vec<Structure> = Vec::new();
        for which in Structure::ALL {
            let sa = data.class.for_structure(which);
            let dist_dim = if first_distribution { sa.d1_dim } else { sa.d2_dim };
            if dist_dim < 2 {
                verdicts.push((which, 0.0, 0.0));
                continue;
            }
            let fields =
                distribution_fields_at(chart, which, first_distribution, cluster_tol, x)?;
            if fields.len() < 2 {
                // the distribution is at least 2-dimensional but the fixed
                // coordinate fields under-span it after projection; measuring
                // nothing must not read as integrable
                insufficient.push(which);
                continue;
            }
            let t = Tensors::new(&data.pg, sa);
            let mut direct_max: f64 = 0.0;
            let mut criterion_max: f64 = 0.0;
            for i in 0..fields.len() {
                for j in i + 1..fields.len() {
                    let (xf, yf) = (&fields[i], &fields[j]);

                    // direct: the complementary part of the bracket
                    let bracket = lie_bracket(xf, yf, x)?;
                    let frame_coords = &data.pg.gs_upper * bracket;
                    let complement = if first_distribution {
                        &sa.d2_projector * &frame_coords
                    } else {
                        &sa.d1_projector * &frame_coords
                    };
                    direct_max = direct_max.max(complement.norm());

                    // criterion: Q(nabla_X(phi Y) - nabla_Y(phi X)
                    //              + A_{omega X} Y - A_{omega Y} X)
                    let x_amb = ambient_of(chart, xf, x)?;
                    let y_amb = ambient_of(chart, yf, x)?;
                    let phi_x = phi_field(chart, which, xf);
                    let phi_y = phi_field(chart, which, yf);
                    let tangential = nabla(chart, &data.pg, xf, &phi_y, x)?
                        - nabla(chart, &data.pg, yf, &phi_x, x)?
                        + t.shape_ambient(&t.omega_ambient(&x_amb), &y_amb)?
                        - t.shape_ambient(&t.omega_ambient(&y_amb), &x_amb)?;
                    let tangential_coords = data.pg.to_frame_coords(&tangential);
                    let projected = if first_distribution {
                        &sa.d2_projector * tangential_coords
                    } else {
                        &sa.d1_projector * tangential_coords
                    };
                    criterion_max = criterion_max.max(projected.norm());

                    if first_distribution {
                        // the D1 criterion also demands the normal expression
                        // h(X, phi Y) - h(Y, phi X) + D_X(omega Y) - D_Y(omega X)
                        let omega_x = omega_field(chart, which, xf);
                        let omega_y = omega_field(chart, which, yf);
                        let phi_y_amb = ambient_of(chart, &phi_y, x)?;
                        let phi_x_amb = ambient_of(chart, &phi_x, x)?;
                        let normal_expr = t.h_ambient(&x_amb, &phi_y_amb)?
                            - t.h_ambient(&y_amb, &phi_x_amb)?
                            + normal_connection_of(&data.pg, xf, &omega_y, x)?
                            - normal_connection_of(&data.pg, yf, &omega_x, x)?;
                        criterion_max = criterion_max.max(normal_expr.norm());
                    }
                }
            }
            verdicts.push((which, direct_max, criterion_max));
        }

        if !insufficient.is_empty() {
            entries.push(CheckEntry::skipped(
                idx,
                format!(
                    "projected coordinate fields under-span the distribution for {}",
                    insufficient
                        .iter()
                        .map(|s| s.label())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            ));
            continue;
        }
        // the theorem asserts equivalence of the direct bracket test and the
        // criterion; the entry residual is meaningful only when both claim
        // the distribution integrable
        let equivalent = verdicts
            .iter()
            .all(|(_, d, c)| (*d < tolerance) == (*c < tolerance));
        let cross_structure = if data.class.shared_d1 {
            let first = verdicts.first().map(|(_, d, _)| *d < tolerance);
            verdicts.iter().all(|(_, d, _)| Some(*d < tolerance) == first)
        } else {
            true
        };
        let all_hold = verdicts
            .iter()
            .all(|(_, d, c)| *d < tolerance && *c < tolerance);
        let residual = if all_hold {
            verdicts
                .iter()
                .map(|(_, d, c)| d.max(*c))
                .fold(0.0f64, f64::max)
        } else {
            0.0
        };
        let mut entry = CheckEntry::from_residual(idx, residual, tolerance);
        entry.status = if equivalent && cross_structure {
            Status::Pass
        } else {
            Status::Fail
        };
        for (which, direct, criterion) in &verdicts {
            entry = entry.with_label(format!(
                "{}: integrable={} (direct {:.3e}, criterion {:.3e})",
                which.label(),
                *direct < tolerance,
                direct,
                criterion
            ));
        }
        if !all_hold && equivalent {
            entry = entry.with_label("not integrable; direct and criterion agree");
        }
        if !cross_structure {
            entry = entry.with_label("cross-structure disagreement between criteria");
        }
        entries.push(entry.with_theta(data.class.theta_triple()).finalize());
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// totally geodesic foliations
// ---------------------------------------------------------------------------

/// Which distribution a foliation check targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dist {
    D1,
    D2,
}

/// Totally-geodesic-foliation criterion via the weighted identity
/// `sin^2 theta <nabla_X Y, Z> = -<h(X,Y), omega phi Z> + <h(X,RY), omega Z>`
/// (D1 version; the D2 version swaps the roles), which ties the tangential
/// connection to shape-operator pairings whenever the slant functions are
/// nonzero.
pub fn foliation_check(
    chart: &ImmersionChart,
    grid: &[DVec],
    which_dist: Dist,
    cluster_tol: f64,
    tolerance: f64,
) -> Result<Vec<CheckEntry>> {
    if !chart.basis().is_parallel() {
        return Ok(all_skipped(grid.len(), "non-parallel basis (not hyperkähler)"));
    }
    let mut entries = Vec::with_capacity(grid.len());
    for (idx, x) in grid.iter().enumerate() {
        let data = match point_data(chart, x, cluster_tol) {
            Ok(d) => d,
            Err(err) => {
                entries.push(CheckEntry::skipped(idx, err.to_string()));
                continue;
            }
        };
        if !data.class.shared_d1 {
            entries.push(CheckEntry::skipped(
                idx,
                "not pointwise h-semi-slant (no shared D1)",
            ));
            continue;
        }
        if data
            .class
            .analyses
            .iter()
            .any(|a| a.theta.map(|t| t < THETA_FLOOR).unwrap_or(true))
        {
            entries.push(CheckEntry::skipped(
                idx,
                "precondition violated: some slant function vanishes on the grid",
            ));
            continue;
        }
        let sa0 = &data.class.analyses[0];
        if sa0.d1_dim == 0 || sa0.d2_dim == 0 {
            entries.push(CheckEntry::skipped(idx, "one distribution is trivial"));
            continue;
        }

        let mut worst = ResidualMax::default();
        let mut under_spanned = false;
        for which in Structure::ALL {
            let sa = data.class.for_structure(which);
            let theta = sa.theta.unwrap();
            let sin2 = theta.sin() * theta.sin();
            let t = Tensors::new(&data.pg, sa);
            let d1_fields = distribution_fields_at(chart, which, true, cluster_tol, x)?;
            let d2_fields = distribution_fields_at(chart, which, false, cluster_tol, x)?;
            if d1_fields.is_empty() || d2_fields.is_empty() {
                under_spanned = true;
                continue;
            }

            match which_dist {
                Dist::D1 => {
                    for xf in &d1_fields {
                        for yf in &d1_fields {
                            let nxy = nabla(chart, &data.pg, xf, yf, x)?;
                            let x_amb = ambient_of(chart, xf, x)?;
                            let y_amb = ambient_of(chart, yf, x)?;
                            let ry = t.phi_ambient(&y_amb); // RY tangent on D1
                            for zf in &d2_fields {
                                let z_amb = ambient_of(chart, zf, x)?;
                                let direct = nxy.dot(&z_amb);
                                let h_xy = t.h_ambient(&x_amb, &y_amb)?;
                                let h_xry = t.h_ambient(&x_amb, &ry)?;
                                let omega_z = t.omega_ambient(&z_amb);
                                let omega_phi_z = t.omega_ambient(&t.phi_ambient(&z_amb));
                                let identity = sin2 * direct + h_xy.dot(&omega_phi_z)
                                    - h_xry.dot(&omega_z);
                                worst.update(
                                    &format!("weighted foliation identity D1 ({})", which.label()),
                                    identity,
                                );
                            }
                        }
                    }
                }
                Dist::D2 => {
                    for zf in &d2_fields {
                        for wf in &d2_fields {
                            let nzw = nabla(chart, &data.pg, zf, wf, x)?;
                            let z_amb = ambient_of(chart, zf, x)?;
                            let w_amb = ambient_of(chart, wf, x)?;
                            let omega_w = t.omega_ambient(&w_amb);
                            let omega_phi_w = t.omega_ambient(&t.phi_ambient(&w_amb));
                            for xf in &d1_fields {
                                let x_amb = ambient_of(chart, xf, x)?;
                                let rx = t.phi_ambient(&x_amb);
                                let direct = nzw.dot(&x_amb);
                                let h_zx = t.h_ambient(&z_amb, &x_amb)?;
                                let h_zrx = t.h_ambient(&z_amb, &rx)?;
                                let identity = sin2 * direct - omega_phi_w.dot(&h_zx)
                                    + omega_w.dot(&h_zrx);
                                worst.update(
                                    &format!("weighted foliation identity D2 ({})", which.label()),
                                    identity,
                                );
                            }
                        }
                    }
                }
            }
        }
        if under_spanned {
            entries.push(CheckEntry::skipped(
                idx,
                "projected coordinate fields under-span a distribution",
            ));
            continue;
        }
        entries.push(
            worst
                .entry(idx, tolerance)
                .with_theta(data.class.theta_triple())
                .finalize(),
        );
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// umbilic analysis
// ---------------------------------------------------------------------------

/// Measure the umbilicity defect and, on umbilic charts, verify the mean
/// curvature lies in `omega(D2)` for every structure; if some slant function
/// vanishes, verify total geodesy.
#[allow(clippy::needless_range_loop)]
pub fn umbilic_check(
    chart: &ImmersionChart,
    grid: &[DVec],
    cluster_tol: f64,
    tolerance: f64,
) -> Result<Vec<CheckEntry>> {
    let mut entries = Vec::with_capacity(grid.len());
    for (idx, x) in grid.iter().enumerate() {
        let data = match point_data(chart, x, cluster_tol) {
            Ok(d) => d,
            Err(err) => {
                entries.push(CheckEntry::skipped(idx, err.to_string()));
                continue;
            }
        };
        let n = data.pg.tangent_dim();
        let h = data.pg.h_tensor.as_ref().expect("h computed");
        let mean = data.pg.mean_curvature.as_ref().expect("H computed");
        let mut defect: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let expected = if a == b { mean.clone() } else { DVec::zeros(data.pg.ambient_dim()) };
                defect = defect.max((&h[a][b] - expected).norm());
            }
        }
        if defect >= tolerance {
            entries.push(
                CheckEntry::skipped(idx, format!("not umbilic (defect {defect:.3e})"))
                    .with_theta(data.class.theta_triple())
                    .finalize(),
            );
            continue;
        }

        let mut worst = ResidualMax::default();
        let mut vacuous: Vec<&'static str> = Vec::new();
        worst.update("umbilicity defect", defect);
        for sa in &data.class.analyses {
            // Lemma: H has no component in mu_R. The derivation pairs two
            // fields inside D1, so a trivial D1 makes it vacuous (and the
            // conclusion can genuinely fail there, e.g. for a circle).
            if sa.d1_dim == 0 {
                vacuous.push(sa.structure().label());
                continue;
            }
            let h_normal = data.pg.to_normal_coords(mean);
            let mu = slant::mu_basis(&sa.tensors);
            for (k, v) in mu.iter().enumerate() {
                worst.update(
                    &format!("H component in mu_{} basis vector {k}", sa.structure().label()),
                    v.dot(&h_normal),
                );
            }
            // a vanishing slant function on an umbilic chart forces h = 0
            if let Some(theta) = sa.theta {
                if theta < THETA_FLOOR {
                    worst.update(
                        &format!(
                            "||h|| with theta_{} = 0 (totally geodesic)",
                            sa.structure().label()
                        ),
                        data.pg.sff_norm_squared()?.sqrt(),
                    );
                }
            }
        }
        let mut entry = worst.entry(idx, tolerance).with_label("umbilic");
        for label in &vacuous {
            entry = entry.with_label(format!(
                "mean-curvature lemma vacuous for {label} (D1 trivial)"
            ));
        }
        entries.push(entry.with_theta(data.class.theta_triple()).finalize());
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// fundamental 2-forms and their closedness
// ---------------------------------------------------------------------------

/// The 2-form `Omega_R(X, Y) = g(phi_R X, Y)` at a point, in the coordinate
/// basis, together with its frame-basis representation.
#[derive(Debug, Clone)]
pub struct TwoForm {
    /// `Omega(d_i, d_j)` in the coordinate basis; skew.
    pub coord_matrix: DMat,
    /// `Omega(e_a, e_b)` in the orthonormal frame (equals `-phi`).
    pub frame_matrix: DMat,
    /// Smallest singular value of the frame matrix (non-degeneracy measure).
    pub smallest_singular_value: f64,
}

/// Evaluate `Omega_R` at `x`.
pub fn omega_form(chart: &ImmersionChart, x: &DVec, which: Structure) -> Result<TwoForm> {
    let jets = chart.jets(x)?;
    let r = chart.basis().structure_at(which, &jets.value)?;
    let rj = &r * &jets.jacobian;
    let coord_matrix = rj.transpose() * &jets.jacobian;
    let pg = chart.frame_at(x)?;
    let t = slant::decompose(&pg, chart.basis(), which)?;
    let frame_matrix = -&t.phi;
    let svd = frame_matrix.clone().svd(false, false);
    let smallest = if svd.singular_values.is_empty() {
        0.0
    } else {
        svd.singular_values.min()
    };
    Ok(TwoForm {
        coord_matrix,
        frame_matrix,
        smallest_singular_value: smallest,
    })
}

/// Scalar `Omega_R(Y, Z)` at a parameter point (used inside derivative
/// stencils).
fn omega_scalar(
    chart: &ImmersionChart,
    which: Structure,
    y_field: &TangentField,
    z_field: &TangentField,
    x: &DVec,
) -> Result<f64> {
    let jets = chart.jets(x)?;
    let r = chart.basis().structure_at(which, &jets.value)?;
    let y_amb = &jets.jacobian * y_field.coeffs_at(x)?;
    let z_amb = &jets.jacobian * z_field.coeffs_at(x)?;
    // Omega(Y, Z) = g(phi Y, Z) = g(R Y, Z) for tangent Z
    Ok((r * y_amb).dot(&z_amb))
}

/// Six-term evaluation of `d Omega_R (X, Y, Z)` at `x` with directional
/// finite differences.
pub fn d_omega_form(
    chart: &ImmersionChart,
    x: &DVec,
    which: Structure,
    x_field: &TangentField,
    y_field: &TangentField,
    z_field: &TangentField,
) -> Result<f64> {
    let directional = |along: &TangentField,
                       f: &TangentField,
                       g: &TangentField|
     -> Result<f64> {
        let dir = along.coeffs_at(x)?;
        let plus = omega_scalar(chart, which, f, g, &(x + &dir * FD_STEP))?;
        let minus = omega_scalar(chart, which, f, g, &(x - &dir * FD_STEP))?;
        Ok((plus - minus) / (2.0 * FD_STEP))
    };
    let bracket_term = |a: &TangentField, b: &TangentField, c: &TangentField| -> Result<f64> {
        let w = lie_bracket(a, b, x)?;
        let bracket = TangentField::constant(w);
        omega_scalar(chart, which, &bracket, c, x)
    };

    Ok(directional(x_field, y_field, z_field)?
        - directional(y_field, x_field, z_field)?
        + directional(z_field, x_field, y_field)?
        - bracket_term(x_field, y_field, z_field)?
        + bracket_term(x_field, z_field, y_field)?
        - bracket_term(y_field, z_field, x_field)?)
}

/// Closedness of the fundamental 2-forms on proper pointwise almost h-slant
/// charts: `d Omega_R = 0` within tolerance on random smooth field triples,
/// plus non-degeneracy of the form.
pub fn omega_closedness_check<R: rand::Rng>(
    chart: &ImmersionChart,
    grid: &[DVec],
    rng: &mut R,
    triples_per_point: usize,
    cluster_tol: f64,
    tolerance: f64,
) -> Result<Vec<CheckEntry>> {
    if !chart.basis().is_parallel() {
        return Ok(all_skipped(grid.len(), "non-parallel basis (not hyperkähler)"));
    }
    let n = chart.param_dim();
    // hypothesis sweep first: proper pointwise almost h-slant everywhere
    for x in grid {
        let class = slant::classify_point(chart, x, cluster_tol)?;
        let slant_everywhere = class.analyses.iter().all(|a| a.is_pointwise_slant());
        let proper = class.analyses.iter().all(|a| a.proper);
        if !slant_everywhere || !proper {
            return Ok(all_skipped(
                grid.len(),
                "not a proper pointwise almost h-slant chart on this grid",
            ));
        }
    }

    let mut entries = Vec::with_capacity(grid.len());
    for (idx, x) in grid.iter().enumerate() {
        let class = slant::classify_point(chart, x, cluster_tol)?;
        let mut worst = ResidualMax::default();
        for which in Structure::ALL {
            let form = omega_form(chart, x, which)?;
            let skew = (&form.coord_matrix + form.coord_matrix.transpose())
                .abs()
                .max();
            worst.update(&format!("skewness of Omega_{}", which.label()), skew / 1e6);
            // non-degeneracy: smallest singular value of the frame form
            // against cos(theta); recorded as a label below
            for _ in 0..triples_per_point {
                let xf = TangentField::random_polynomial(rng, n);
                let yf = TangentField::random_polynomial(rng, n);
                let zf = TangentField::random_polynomial(rng, n);
                let value = d_omega_form(chart, x, which, &xf, &yf, &zf)?;
                worst.update(&format!("dOmega_{}", which.label()), value);
            }
        }
        let mut entry = worst.entry(idx, tolerance);
        for which in Structure::ALL {
            let form = omega_form(chart, x, which)?;
            let sa = class.for_structure(which);
            if let Some(theta) = sa.theta {
                let bound = theta.cos() * (1.0 - 1e-6);
                entry = entry.with_label(format!(
                    "Omega_{} sigma_min {:.6e} (bound {:.6e}) nondegenerate={}",
                    which.label(),
                    form.smallest_singular_value,
                    bound,
                    form.smallest_singular_value >= bound
                ));
            }
        }
        entries.push(entry.with_theta(class.theta_triple()).finalize());
    }
    Ok(entries)
}
