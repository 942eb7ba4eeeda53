//! Warped-product charts, the warp identities, the fiber/base shape-operator
//! lemmas, and the second-fundamental-form inequality
//!
//! ```text
//! || h ||^2 >= 4 n2 (csc^2 theta_R + cot^2 theta_R) || grad(ln f) ||^2
//! ```
//!
//! together with a frame-level oracle that reproduces the inequality's exact
//! expansion
//!
//! ```text
//! || h ||^2 = sum_{i,j,k} <h(f_i, f_j), w_k>^2
//!           + 4 n2 (csc^2 theta + cot^2 theta) || grad(ln f) ||^2
//! ```
//!
//! on synthetic adapted-frame data, so the inequality is exercised even when
//! no concrete chart satisfies every hypothesis at once.
//!
//! Warped charts are built as `Phi(b, t) = base(b) + f(b) * fiber(t)` with the
//! base and fiber writing into the ambient space and the fiber image lying on
//! a unit sphere, which makes the induced metric exactly `g_B + f^2 g_F`.

use crate::ambient::{standard_basis, QuaternionicBasis, Structure};
use crate::calculus::THETA_FLOOR;
use crate::error::{Error, Result};
use crate::exprmap::{self, Expression};
use crate::geometry::{DomainBox, ImmersionChart, PointGeometry};
use crate::report::{CheckEntry, ResidualMax, Status};
use crate::slant::{self, SlantAnalysis, SlantKind};
use crate::{DMat, DVec};

/// Tolerance for the block structure of the induced metric.
pub const METRIC_BLOCK_TOL: f64 = 1e-8;
/// Tolerance for the fiber block against `f^2 g_F`.
pub const FIBER_BLOCK_TOL: f64 = 1e-6;
/// Tolerance for first-order warp identities.
pub const WARP_CONNECTION_TOL: f64 = 1e-4;
/// Tolerance for the curvature-level warp identities (three derivative
/// orders).
pub const WARP_CURVATURE_TOL: f64 = 1e-3;
/// Finite-difference step for frame-field derivatives.
const FD_STEP: f64 = 1e-5;

/// A warped-product chart `B x_f F` immersed as
/// `Phi(b, t) = base(b) + f(b) * fiber(t)`.
#[derive(Debug, Clone)]
pub struct WarpedChart {
    fiber_components: Vec<Expression>,
    /// Warping function over the base parameters; positive.
    warp: Expression,
    /// The combined immersion over `(b, t)`.
    chart: ImmersionChart,
    n_base: usize,
    n_fiber: usize,
}

impl WarpedChart {
    /// Assemble the combined chart. `base_components` and `fiber_components`
    /// are full ambient component lists over the base and fiber parameters
    /// respectively; `warp` is an expression over the base parameters.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base_params: Vec<String>,
        base_components: Vec<Expression>,
        fiber_params: Vec<String>,
        fiber_components: Vec<Expression>,
        warp: Expression,
        domain: DomainBox,
        basis: QuaternionicBasis,
    ) -> Result<WarpedChart> {
        let n_base = base_params.len();
        let n_fiber = fiber_params.len();
        let dim = basis.dim_ambient();
        if base_components.len() != dim || fiber_components.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: base_components.len().max(fiber_components.len()),
                context: "warped chart component count".into(),
            });
        }
        let combined_params: Vec<String> = base_params
            .iter()
            .cloned()
            .chain(fiber_params.iter().cloned())
            .collect();
        let combined_refs: Vec<&str> = combined_params.iter().map(|s| s.as_str()).collect();
        let base_map: Vec<usize> = (0..n_base).collect();
        let fiber_map: Vec<usize> = (n_base..n_base + n_fiber).collect();
        let warp_embedded = warp.embed(&combined_refs, &base_map);
        let components: Vec<Expression> = base_components
            .iter()
            .zip(&fiber_components)
            .map(|(b, f)| {
                let b_emb = b.embed(&combined_refs, &base_map);
                let f_emb = f.embed(&combined_refs, &fiber_map);
                b_emb.add(&warp_embedded.mul(&f_emb))
            })
            .collect();
        let chart = ImmersionChart::new(combined_params, components, domain, basis)?;
        Ok(WarpedChart {
            fiber_components,
            warp,
            chart,
            n_base,
            n_fiber,
        })
    }

    pub fn chart(&self) -> &ImmersionChart {
        &self.chart
    }

    /// Swap the ambient basis of the combined chart.
    pub fn set_basis(&mut self, basis: QuaternionicBasis) -> Result<()> {
        self.chart = self.chart.clone().with_basis(basis)?;
        Ok(())
    }

    pub fn n_base(&self) -> usize {
        self.n_base
    }

    pub fn n_fiber(&self) -> usize {
        self.n_fiber
    }

    /// `n1` from the theorem's `dim B = 4 n1`, when the base conforms.
    pub fn quaternionic_base_lines(&self) -> Option<usize> {
        (self.n_base.is_multiple_of(4) && self.n_base > 0).then_some(self.n_base / 4)
    }

    /// `n2` from `dim F = 2 n2`, when the fiber conforms.
    pub fn fiber_pairs(&self) -> Option<usize> {
        (self.n_fiber.is_multiple_of(2) && self.n_fiber > 0).then_some(self.n_fiber / 2)
    }

    pub fn warp(&self) -> &Expression {
        &self.warp
    }

    /// True when the warping function is constant (trivial warped product).
    pub fn trivial_warp(&self) -> bool {
        self.warp.is_constant()
    }

    fn split_point(&self, x: &DVec) -> (DVec, DVec) {
        let b = DVec::from_iterator(self.n_base, (0..self.n_base).map(|i| x[i]));
        let t = DVec::from_iterator(
            self.n_fiber,
            (self.n_base..self.n_base + self.n_fiber).map(|i| x[i]),
        );
        (b, t)
    }

    /// Warp value at a combined parameter point.
    pub fn warp_at(&self, x: &DVec) -> Result<f64> {
        let (b, _) = self.split_point(x);
        self.warp.eval_value(&b)
    }

    /// Gradient of `ln f` in base parameter coordinates (exact jets).
    pub fn ln_warp_gradient(&self, x: &DVec) -> Result<DVec> {
        let (b, _) = self.split_point(x);
        let jet = self.warp.eval_jet2(&b)?;
        if jet.value <= 0.0 {
            return Err(Error::WarpedStructure {
                point: format!("{:?}", x.as_slice()),
                detail: format!("warping function non-positive ({})", jet.value),
            });
        }
        Ok(jet.gradient / jet.value)
    }

    /// Verify the induced-metric block structure `g = g_B + f^2 g_F` at every
    /// grid point.
    pub fn verify_structure(&self, grid: &[DVec]) -> Result<()> {
        for x in grid {
            let jets = self.chart.jets(x)?;
            let g = jets.jacobian.transpose() * &jets.jacobian;
            let (b, t) = self.split_point(x);
            let f = self.warp.eval_value(&b)?;
            if f <= 0.0 {
                return Err(Error::WarpedStructure {
                    point: format!("{:?}", x.as_slice()),
                    detail: format!("warping function non-positive ({f})"),
                });
            }
            let mut cross: f64 = 0.0;
            for i in 0..self.n_base {
                for j in self.n_base..self.n_base + self.n_fiber {
                    cross = cross.max(g[(i, j)].abs());
                }
            }
            if cross > METRIC_BLOCK_TOL {
                return Err(Error::WarpedStructure {
                    point: format!("{:?}", x.as_slice()),
                    detail: format!("base-fiber metric coupling {cross:.3e}"),
                });
            }
            let fiber_jets = exprmap::eval_vector_map(&self.fiber_components, &t)?;
            let g_f = fiber_jets.jacobian.transpose() * &fiber_jets.jacobian;
            let mut fiber_dev: f64 = 0.0;
            for i in 0..self.n_fiber {
                for j in 0..self.n_fiber {
                    let got = g[(self.n_base + i, self.n_base + j)];
                    fiber_dev = fiber_dev.max((got - f * f * g_f[(i, j)]).abs());
                }
            }
            if fiber_dev > FIBER_BLOCK_TOL {
                return Err(Error::WarpedStructure {
                    point: format!("{:?}", x.as_slice()),
                    detail: format!("fiber block deviates from f^2 g_F by {fiber_dev:.3e}"),
                });
            }
        }
        Ok(())
    }

    /// Orthonormal base frame at `x` as parameter-coefficient columns
    /// (Gram-Schmidt of the base coordinate lifts in the induced metric).
    fn base_frame_coeffs(&self, x: &DVec) -> Result<DMat> {
        let jets = self.chart.jets(x)?;
        let g = jets.jacobian.transpose() * &jets.jacobian;
        let n = self.n_base + self.n_fiber;
        let mut cols: Vec<DVec> = Vec::with_capacity(self.n_base);
        for k in 0..self.n_base {
            let mut v = DVec::zeros(n);
            v[k] = 1.0;
            for _ in 0..2 {
                for w in &cols {
                    let proj = (w.transpose() * &g * &v)[(0, 0)];
                    v -= w * proj;
                }
            }
            let norm = (v.transpose() * &g * &v)[(0, 0)].sqrt();
            if norm < 1e-12 {
                return Err(Error::Degenerate {
                    point: format!("{:?}", x.as_slice()),
                    detail: "base frame collapse".into(),
                });
            }
            cols.push(v / norm);
        }
        let mut out = DMat::zeros(n, self.n_base);
        for (k, c) in cols.iter().enumerate() {
            out.set_column(k, c);
        }
        Ok(out)
    }

    /// Directional derivative of `ln f` along a tangent vector given in
    /// parameter coordinates.
    fn direction_ln_warp(&self, x: &DVec, dir: &DVec) -> Result<f64> {
        let grad = self.ln_warp_gradient(&x.clone())?;
        let mut acc = 0.0;
        for i in 0..self.n_base {
            acc += grad[i] * dir[i];
        }
        Ok(acc)
    }
}

/// Sectional curvature of the plane spanned by two ambient tangent vectors,
/// from the Gauss equation in a flat ambient space:
/// `K = (<h(U,U), h(V,V)> - |h(U,V)|^2) / (|U|^2 |V|^2 - <U,V>^2)`.
pub fn sectional_curvature_gauss(pg: &PointGeometry, u: &DVec, v: &DVec) -> Result<f64> {
    let cu = pg.to_frame_coords(u);
    let cv = pg.to_frame_coords(v);
    let huu = pg.h_apply(&cu, &cu)?;
    let hvv = pg.h_apply(&cv, &cv)?;
    let huv = pg.h_apply(&cu, &cv)?;
    let denom = u.norm_squared() * v.norm_squared() - u.dot(v).powi(2);
    if denom < 1e-12 {
        return Err(Error::Contract("degenerate plane for sectional curvature".into()));
    }
    Ok((huu.dot(&hvv) - huv.norm_squared()) / denom)
}

// ---------------------------------------------------------------------------
// warp identities
// ---------------------------------------------------------------------------

/// Check the metric block form, the warp connection identity
/// `nabla_X Y = (X ln f) Y` (against `connection_tol`), and the Laplacian /
/// sectional-curvature identities over the grid.
#[allow(clippy::needless_range_loop)]
pub fn warp_identities_check(
    wc: &WarpedChart,
    grid: &[DVec],
    connection_tol: f64,
) -> Result<Vec<CheckEntry>> {
    wc.verify_structure(grid)?;
    let chart = wc.chart();
    let n = chart.param_dim();
    let nb = wc.n_base();
    let nf = wc.n_fiber();
    let mut entries = Vec::with_capacity(grid.len());

    for (idx, x) in grid.iter().enumerate() {
        let pg = chart.second_fundamental_form(x)?;
        let jets = chart.jets(x)?;
        let mut worst = ResidualMax::default();

        // warp connection: nabla_X Y = (X ln f) Y for base coordinate lifts X and
        // fiber coordinate lifts Y; nabla_X Y is the tangential part of the
        // coordinate second derivative, exact from jets.
        for i in 0..nb {
            let mut x_dir = DVec::zeros(n);
            x_dir[i] = 1.0;
            let x_lnf = wc.direction_ln_warp(x, &x_dir)?;
            for j in nb..n {
                let mut w = DVec::zeros(chart.ambient_dim());
                for c in 0..chart.ambient_dim() {
                    w[c] = jets.hessians[c][(i, j)];
                }
                let nabla_xy = &pg.tangent_projector * w;
                let y_amb = jets.jacobian.column(j).into_owned();
                worst.update(
                    &format!("nabla_{{d b{i}}} d t{} - (X ln f) Y", j - nb),
                    (nabla_xy - y_amb * x_lnf).norm(),
                );
            }
        }
        let connection_entry_residual = worst.worst;

        // curvature-level identities need the orthonormal base frame field
        let frame = wc.base_frame_coeffs(x)?;
        let mut laplacian = 0.0;
        let mut k_row_sums = vec![0.0f64; nf];
        let mut curvature_worst = ResidualMax::default();
        let f_val = wc.warp_at(x)?;
        for i in 0..nb {
            let e_i = frame.column(i).into_owned();
            // E_i f as a scalar field, differentiated again along E_i
            let scalar_e_f = |xx: &DVec| -> Result<f64> {
                let frame_xx = wc.base_frame_coeffs(xx)?;
                let (b, _) = wc.split_point(xx);
                let jet = wc.warp.eval_jet2(&b)?;
                let mut acc = 0.0;
                for k in 0..nb {
                    acc += jet.gradient[k] * frame_xx[(k, i)];
                }
                Ok(acc)
            };
            let e_i2_f = {
                let plus = scalar_e_f(&(x + &e_i * FD_STEP))?;
                let minus = scalar_e_f(&(x - &e_i * FD_STEP))?;
                (plus - minus) / (2.0 * FD_STEP)
            };
            // nabla_{E_i} E_i: tangential derivative of the ambient frame field
            let ambient_field = |xx: &DVec| -> Result<DVec> {
                let frame_xx = wc.base_frame_coeffs(xx)?;
                Ok(chart.jets(xx)?.jacobian * frame_xx.column(i).into_owned())
            };
            let derivative =
                (ambient_field(&(x + &e_i * FD_STEP))? - ambient_field(&(x - &e_i * FD_STEP))?)
                    / (2.0 * FD_STEP);
            let nabla_ee = &pg.tangent_projector * derivative;
            // (nabla_{E_i} E_i) f: pair the parameter coordinates with the
            // warp gradient
            let coords = pg.to_frame_coords(&nabla_ee);
            let param_coords = solve_upper(&pg.gs_upper, &coords);
            let nabla_ee_f = {
                let (b, _) = wc.split_point(x);
                let jet = wc.warp.eval_jet2(&b)?;
                let mut acc = 0.0;
                for k in 0..nb {
                    acc += jet.gradient[k] * param_coords[k];
                }
                acc
            };
            let contribution = nabla_ee_f - e_i2_f;
            laplacian += contribution;

            // sectional curvature identity:
            // K(E_i ^ Y_j) = (1/f)((nabla_{E_i} E_i) f - E_i^2 f)
            let rhs = contribution / f_val;
            let e_i_amb = &jets.jacobian * &e_i;
            for j in 0..nf {
                let y_amb = jets.jacobian.column(nb + j).into_owned();
                let k_gauss = sectional_curvature_gauss(&pg, &e_i_amb, &y_amb)?;
                k_row_sums[j] += k_gauss;
                curvature_worst.update(
                    &format!("K(E_{i} ^ dt{j}) vs warp Hessian"),
                    k_gauss - rhs,
                );
            }
        }
        // Laplacian identity: (triangle f) / f = sum_i K(e_i ^ e_j) per fiber j
        for (j, sum) in k_row_sums.iter().enumerate() {
            curvature_worst.update(
                &format!("Laplacian identity for fiber direction {j}"),
                laplacian / f_val - sum,
            );
        }

        let mut entry = CheckEntry::from_residual(idx, connection_entry_residual, connection_tol);
        if curvature_worst.worst > WARP_CURVATURE_TOL {
            entry = entry.force_fail(format!(
                "curvature identity residual {:.3e} ({})",
                curvature_worst.worst, curvature_worst.worst_name
            ));
        }
        entry = entry
            .with_label(format!(
                "curvature identities residual {:.3e} (tol {WARP_CURVATURE_TOL:.0e})",
                curvature_worst.worst
            ))
            .with_label(if wc.trivial_warp() {
                "trivial warp (product metric)".to_string()
            } else {
                format!("warping function {}", wc.warp().pretty())
            });
        entries.push(entry.finalize());
    }
    Ok(entries)
}

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

// ---------------------------------------------------------------------------
// semi-slant hypothesis verification
// ---------------------------------------------------------------------------

/// Per-point verification that the warped chart is pointwise h-semi-slant
/// with `TB = D1` and `TF = D2`.
struct SemiSlantData {
    pg: PointGeometry,
    analyses: [SlantAnalysis; 3],
}

enum HypothesisOutcome {
    Met(Box<SemiSlantData>),
    NotMet(String),
}

fn verify_semi_slant(wc: &WarpedChart, x: &DVec, cluster_tol: f64) -> Result<HypothesisOutcome> {
    let chart = wc.chart();
    let pg = chart.second_fundamental_form(x)?;
    let class = slant::classify_geometry(&pg, chart.basis(), cluster_tol)?;
    if class
        .analyses
        .iter()
        .any(|a| a.kind == SlantKind::NonConforming)
    {
        return Ok(HypothesisOutcome::NotMet(
            "eigenvalue clustering non-conforming".into(),
        ));
    }
    if !class.shared_d1 {
        return Ok(HypothesisOutcome::NotMet(
            "D1 differs across structures (not h-semi-slant)".into(),
        ));
    }
    // TB = D1: the D1 projector must match the base coordinate block of the
    // frame (Gram-Schmidt preserves the base-first column order).
    let n = chart.param_dim();
    let mut expected = DMat::zeros(n, n);
    for i in 0..wc.n_base() {
        expected[(i, i)] = 1.0;
    }
    let deviation = (&class.analyses[0].d1_projector - &expected).abs().max();
    if deviation > 1e-6 {
        return Ok(HypothesisOutcome::NotMet(format!(
            "TB != D1 (projector deviation {deviation:.3e})"
        )));
    }
    if class.analyses[0].d1_dim != wc.n_base() {
        return Ok(HypothesisOutcome::NotMet(format!(
            "dim D1 = {} but dim B = {}",
            class.analyses[0].d1_dim,
            wc.n_base()
        )));
    }
    if class
        .analyses
        .iter()
        .any(|a| a.theta.map(|t| t < THETA_FLOOR).unwrap_or(true))
    {
        return Ok(HypothesisOutcome::NotMet(
            "some slant function vanishes".into(),
        ));
    }
    Ok(HypothesisOutcome::Met(Box::new(SemiSlantData {
        pg,
        analyses: class.analyses,
    })))
}

fn analysis_for(data: &SemiSlantData, which: Structure) -> &SlantAnalysis {
    match which {
        Structure::I => &data.analyses[0],
        Structure::J => &data.analyses[1],
        Structure::K => &data.analyses[2],
    }
}

// ---------------------------------------------------------------------------
// warped-product shape-operator identities
// ---------------------------------------------------------------------------

/// Evaluate the five displayed identities of the warped-product lemmas as
/// residuals for every structure and frame combination.
pub fn warped_lemma_residuals(
    wc: &WarpedChart,
    grid: &[DVec],
    cluster_tol: f64,
    tolerance: f64,
) -> Result<Vec<CheckEntry>> {
    wc.verify_structure(grid)?;
    let chart = wc.chart();
    if !chart.basis().is_parallel() {
        return Ok((0..grid.len())
            .map(|idx| CheckEntry::skipped(idx, "non-parallel basis (not hyperkähler)"))
            .collect());
    }
    let nb = wc.n_base();
    let nf = wc.n_fiber();
    let mut entries = Vec::with_capacity(grid.len());
    for (idx, x) in grid.iter().enumerate() {
        let data = match verify_semi_slant(wc, x, cluster_tol)? {
            HypothesisOutcome::Met(d) => d,
            HypothesisOutcome::NotMet(reason) => {
                entries.push(CheckEntry::skipped(idx, format!("hypotheses not met: {reason}")));
                continue;
            }
        };
        let pg = &data.pg;
        let mut worst = ResidualMax::default();
        for which in Structure::ALL {
            let sa = analysis_for(&data, which);
            let t = crate::calculus::Tensors::new(pg, sa);
            let theta = sa.theta.unwrap();
            let cos2 = theta.cos() * theta.cos();
            let r = which.label();

            // ambient frame vectors: base X_i, fiber V_j
            let base: Vec<DVec> = (0..nb).map(|i| pg.tangent_frame.column(i).into_owned()).collect();
            let fiber: Vec<DVec> = (0..nf)
                .map(|j| pg.tangent_frame.column(nb + j).into_owned())
                .collect();
            // X ln f and RX ln f per base frame vector
            let x_lnf: Vec<f64> = base
                .iter()
                .map(|xv| {
                    let coords = pg.to_frame_coords(xv);
                    let params = solve_upper(&pg.gs_upper, &coords);
                    wc.direction_ln_warp(x, &params)
                })
                .collect::<Result<_>>()?;
            let rx_lnf: Vec<f64> = base
                .iter()
                .map(|xv| {
                    let rx = t.phi_ambient(xv);
                    let coords = pg.to_frame_coords(&rx);
                    let params = solve_upper(&pg.gs_upper, &coords);
                    wc.direction_ln_warp(x, &params)
                })
                .collect::<Result<_>>()?;

            for (vi, v) in fiber.iter().enumerate() {
                let omega_v = t.omega_ambient(v);
                for (wi, w) in fiber.iter().enumerate() {
                    let omega_w = t.omega_ambient(w);
                    let phi_w = t.phi_ambient(w);
                    let omega_phi_w = t.omega_ambient(&phi_w);
                    let g_vw = v.dot(w);
                    let g_v_phiw = v.dot(&phi_w);
                    for (xi, xv) in base.iter().enumerate() {
                        // fiber shape symmetry:
                        // g(A_{omega V} W, X) = g(A_{omega W} V, X)
                        let lhs = t.shape_ambient(&omega_v, w)?.dot(xv);
                        let rhs = t.shape_ambient(&omega_w, v)?.dot(xv);
                        worst.update(
                            &format!("shape symmetry {r} V{vi} W{wi} X{xi}"),
                            lhs - rhs,
                        );

                        // g(A_{omega phi W} V, X)
                        //   = -RX(ln f) g(phi W, V) - X(ln f) cos^2 theta g(V, W)
                        let lhs = t.shape_ambient(&omega_phi_w, v)?.dot(xv);
                        let rhs = -rx_lnf[xi] * phi_w.dot(v) - x_lnf[xi] * cos2 * g_vw;
                        worst.update(
                            &format!("shape vs warp gradient (phi) {r} V{vi} W{wi} X{xi}"),
                            lhs - rhs,
                        );

                        // g(A_{omega W} V, RX)
                        //   = X(ln f) g(W, V) + RX(ln f) g(V, phi W)
                        let rx = t.phi_ambient(xv);
                        let lhs = t.shape_ambient(&omega_w, v)?.dot(&rx);
                        let rhs = x_lnf[xi] * g_vw + rx_lnf[xi] * g_v_phiw;
                        worst.update(
                            &format!("shape vs warp gradient (R) {r} V{vi} W{wi} X{xi}"),
                            lhs - rhs,
                        );

                        // mixed h against the warp gradient:
                        // g(h(X, V), omega W)
                        //   = -RX(ln f) g(V, W) + X(ln f) g(V, phi W)
                        let h_xv = t.h_ambient(xv, v)?;
                        let lhs = h_xv.dot(&omega_w);
                        let rhs = -rx_lnf[xi] * g_vw + x_lnf[xi] * g_v_phiw;
                        worst.update(
                            &format!("mixed h vs warp gradient {r} V{vi} W{wi} X{xi}"),
                            lhs - rhs,
                        );
                    }
                }
                // base h has no omega component: g(h(X, Y), omega V) = 0
                for (xi, xv) in base.iter().enumerate() {
                    for (yi, yv) in base.iter().enumerate() {
                        let h_xy = t.h_ambient(xv, yv)?;
                        worst.update(
                            &format!("base h omega component {r} X{xi} Y{yi} V{vi}"),
                            h_xy.dot(&omega_v),
                        );
                    }
                }
            }
        }
        let theta = ThetaOf(&data).triple();
        entries.push(worst.entry(idx, tolerance).with_theta(theta).finalize());
    }
    Ok(entries)
}

struct ThetaOf<'a>(&'a SemiSlantData);

impl<'a> ThetaOf<'a> {
    fn triple(&self) -> crate::report::ThetaTriple {
        crate::report::ThetaTriple {
            i: self.0.analyses[0].theta,
            j: self.0.analyses[1].theta,
            k: self.0.analyses[2].theta,
        }
    }
}

// ---------------------------------------------------------------------------
// the squared-norm inequality
// ---------------------------------------------------------------------------

/// Check `||h||^2 >= 4 n2 (csc^2 + cot^2)(theta_R) ||grad ln f||^2` for each
/// structure at each grid point, with the equality characterization.
pub fn inequality_check(
    wc: &WarpedChart,
    grid: &[DVec],
    cluster_tol: f64,
    slack: f64,
) -> Result<Vec<CheckEntry>> {
    wc.verify_structure(grid)?;
    let chart = wc.chart();
    let mut entries = Vec::with_capacity(grid.len());

    let structural_reason = if !chart.basis().is_parallel() {
        Some("non-parallel basis (not hyperkähler)".to_string())
    } else if wc.trivial_warp() {
        Some("trivial warp (theorem requires a non-trivial warped product)".to_string())
    } else if wc.quaternionic_base_lines().is_none() {
        Some(format!("dim B = {} is not 4 n1", wc.n_base()))
    } else if wc.fiber_pairs().is_none() {
        Some(format!("dim F = {} is not 2 n2", wc.n_fiber()))
    } else {
        None
    };
    if let Some(reason) = structural_reason {
        return Ok((0..grid.len())
            .map(|idx| CheckEntry::skipped(idx, reason.clone()))
            .collect());
    }
    let n2 = wc.fiber_pairs().unwrap();

    for (idx, x) in grid.iter().enumerate() {
        let data = match verify_semi_slant(wc, x, cluster_tol)? {
            HypothesisOutcome::Met(d) => d,
            HypothesisOutcome::NotMet(reason) => {
                entries.push(CheckEntry::skipped(idx, format!("hypotheses not met: {reason}")));
                continue;
            }
        };
        if data.analyses.iter().any(|a| a.mu_dim() != 0) {
            entries.push(CheckEntry::skipped(
                idx,
                format!(
                    "mu_R nonzero (dims {:?})",
                    data.analyses.iter().map(|a| a.mu_dim()).collect::<Vec<_>>()
                ),
            ));
            continue;
        }
        let pg = &data.pg;
        let lhs = pg.sff_norm_squared()?;
        // ||grad ln f||^2 in the orthonormal base frame
        let mut grad_sq = 0.0;
        for i in 0..wc.n_base() {
            let xv = pg.tangent_frame.column(i).into_owned();
            let coords = pg.to_frame_coords(&xv);
            let params = solve_upper(&pg.gs_upper, &coords);
            let d = wc.direction_ln_warp(x, &params)?;
            grad_sq += d * d;
        }
        let mut worst_violation: f64 = 0.0;
        let mut labels = Vec::new();
        let mut equality_checked = false;
        for which in Structure::ALL {
            let sa = analysis_for(&data, which);
            let theta = sa.theta.unwrap();
            let csc2 = 1.0 / (theta.sin() * theta.sin());
            let cot2 = csc2 * theta.cos() * theta.cos();
            let rhs = 4.0 * n2 as f64 * (csc2 + cot2) * grad_sq;
            let gap = lhs - rhs;
            worst_violation = worst_violation.max(-gap);
            labels.push(format!("{}: gap {:.6e}", which.label(), gap));
            if gap.abs() < slack && !equality_checked {
                equality_checked = true;
                // equality characterization: h has no fiber-fiber normal part
                let mut fiber_h: f64 = 0.0;
                let t = crate::calculus::Tensors::new(pg, sa);
                for vi in 0..wc.n_fiber() {
                    for wi in 0..wc.n_fiber() {
                        let v = pg.tangent_frame.column(wc.n_base() + vi).into_owned();
                        let w = pg.tangent_frame.column(wc.n_base() + wi).into_owned();
                        fiber_h = fiber_h.max(t.h_ambient(&v, &w)?.norm());
                    }
                }
                labels.push(format!("equality case: max |h(V,W)| = {fiber_h:.3e}"));
                let h_norm = pg.mean_curvature.as_ref().map(|h| h.norm()).unwrap_or(0.0);
                labels.push(format!(
                    "minimality ||H|| = {:.3e} ({})",
                    h_norm,
                    if h_norm < 1e-5 { "minimal" } else { "not minimal" }
                ));
            }
        }
        let mut entry = CheckEntry::from_residual(idx, worst_violation, slack);
        for l in labels {
            entry = entry.with_label(l);
        }
        entries.push(entry.with_theta(ThetaOf(&data).triple()).finalize());
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// frame-level expansion oracle
// ---------------------------------------------------------------------------

/// Synthetic adapted-frame data for the inequality's exact expansion. The
/// base frame is the quaternionic frame `(e_i, I e_i, J e_i, K e_i)` per
/// line; the fiber frame is `(f_j, sec theta phi f_j)` with the normal frame
/// `w_j = csc theta omega f_j`.
#[derive(Debug, Clone)]
pub struct FrameLevelInstance {
    pub theta: f64,
    pub n1: usize,
    pub n2: usize,
    /// `grad(ln f)` in the base frame, length `4 n1`, ordered per
    /// quaternionic line.
    pub grad_lnf: DVec,
    /// `g(h(f_i, f_j), w_k)` for `i, j, k` in `1..=2 n2`, flattened with `k`
    /// fastest; symmetric in `(i, j)`.
    pub fiber_h_coeffs: Vec<f64>,
}

impl FrameLevelInstance {
    pub fn new(theta: f64, n1: usize, n2: usize, grad_lnf: DVec, fiber_h_coeffs: Vec<f64>) -> Result<FrameLevelInstance> {
        if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Contract(format!(
                "theta = {theta} must lie strictly inside (0, pi/2)"
            )));
        }
        if n1 == 0 || n2 == 0 {
            return Err(Error::Contract("n1 and n2 must be positive".into()));
        }
        if grad_lnf.len() != 4 * n1 {
            return Err(Error::DimensionMismatch {
                expected: 4 * n1,
                got: grad_lnf.len(),
                context: "grad(ln f) length".into(),
            });
        }
        let d = 2 * n2;
        if fiber_h_coeffs.len() != d * d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d * d,
                got: fiber_h_coeffs.len(),
                context: "fiber h coefficient count".into(),
            });
        }
        let inst = FrameLevelInstance {
            theta,
            n1,
            n2,
            grad_lnf,
            fiber_h_coeffs,
        };
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let a = inst.coeff(i, j, k);
                    let b = inst.coeff(j, i, k);
                    if (a - b).abs() > 1e-12 {
                        return Err(Error::Contract(format!(
                            "fiber h coefficients not symmetric at ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        Ok(inst)
    }

    pub fn coeff(&self, i: usize, j: usize, k: usize) -> f64 {
        let d = 2 * self.n2;
        self.fiber_h_coeffs[(i * d + j) * d + k]
    }

    /// Random instance: `theta` uniform in `[0.1, 1.4]`, coefficients
    /// standard normal (symmetrized), gradient standard normal.
    pub fn random<R: rand::Rng>(rng: &mut R, max_n1: usize, max_n2: usize) -> FrameLevelInstance {
        let n1 = rng.random_range(1..=max_n1);
        let n2 = rng.random_range(1..=max_n2);
        let theta = rng.random_range(0.1..1.4);
        let normal = |rng: &mut R| -> f64 {
            // Box-Muller
            let u1: f64 = rng.random_range(1e-12..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let grad_lnf = DVec::from_iterator(4 * n1, (0..4 * n1).map(|_| normal(rng)));
        let d = 2 * n2;
        let mut coeffs = vec![0.0; d * d * d];
        for i in 0..d {
            for j in 0..=i {
                for k in 0..d {
                    let v = normal(rng);
                    coeffs[(i * d + j) * d + k] = v;
                    coeffs[(j * d + i) * d + k] = v;
                }
            }
        }
        FrameLevelInstance::new(theta, n1, n2, grad_lnf, coeffs).expect("valid random instance")
    }
}

/// Result of the frame-level expansion.
#[derive(Debug, Clone)]
pub struct ExpansionResult {
    /// `||h||^2` assembled from its term-by-term decomposition.
    pub lhs: f64,
    /// `4 n2 (csc^2 theta + cot^2 theta) ||grad ln f||^2`.
    pub rhs: f64,
    /// `lhs - rhs`; equals the fiber coefficient sum exactly.
    pub gap: f64,
    /// `sum of fiber coefficients squared` (the exact gap).
    pub fiber_sum: f64,
    /// Largest deviation of the literal expansion across `I, J, K`.
    pub cross_structure_spread: f64,
}

/// Assemble `||h||^2` from its term-by-term decomposition: base-base
/// terms vanish, mixed terms expand through the displayed shape-operator
/// formula, fiber-fiber terms are the free coefficients.
pub fn frame_level_expansion(inst: &FrameLevelInstance) -> Result<ExpansionResult> {
    let basis = standard_basis(inst.n1)?;
    let origin = DVec::zeros(4 * inst.n1);
    let d = 2 * inst.n2;
    let theta = inst.theta;
    let (sin_t, cos_t) = theta.sin_cos();
    let csc2 = 1.0 / (sin_t * sin_t);

    // g(f_j, phi f_k) in the adapted fiber frame
    let mut g_phi = DMat::zeros(d, d);
    for k in 0..inst.n2 {
        g_phi[(inst.n2 + k, k)] = cos_t;
        g_phi[(k, inst.n2 + k)] = -cos_t;
    }

    let mut fiber_sum = 0.0;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                fiber_sum += inst.coeff(i, j, k).powi(2);
            }
        }
    }

    let mut per_structure = [0.0f64; 3];
    for (s_idx, which) in Structure::ALL.iter().enumerate() {
        let r = basis.structure_at(*which, &origin)?;
        // Re_i(ln f) = <grad, R e_i>
        let r_grad = r.transpose() * &inst.grad_lnf;
        let mut mixed = 0.0;
        for i in 0..4 * inst.n1 {
            let re_lnf = r_grad[i];
            let e_lnf = inst.grad_lnf[i];
            for j in 0..d {
                for k in 0..d {
                    let delta = if j == k { 1.0 } else { 0.0 };
                    let term = -re_lnf * delta + e_lnf * g_phi[(j, k)];
                    mixed += term * term;
                }
            }
        }
        per_structure[s_idx] = fiber_sum + 2.0 * csc2 * mixed;
    }

    let lhs = per_structure[0];
    let spread = per_structure
        .iter()
        .map(|v| (v - lhs).abs())
        .fold(0.0f64, f64::max);
    let cot2 = csc2 * cos_t * cos_t;
    let rhs = 4.0 * inst.n2 as f64 * (csc2 + cot2) * inst.grad_lnf.norm_squared();
    Ok(ExpansionResult {
        lhs,
        rhs,
        gap: lhs - rhs,
        fiber_sum,
        cross_structure_spread: spread,
    })
}

/// The two orthogonality sums behind the expansion, evaluated literally for
/// a quaternionic frame of `R^{4 n1}`:
/// `sum_i <R e_i, v><e_i, v>` (zero) and `sum_i <R e_i, v>^2` (`|v|^2`).
pub fn quaternionic_frame_sums(which: Structure, v: &DVec) -> Result<(f64, f64)> {
    if !v.len().is_multiple_of(4) || v.is_empty() {
        return Err(Error::InvalidDimension(format!(
            "vector length {} is not a positive multiple of 4",
            v.len()
        )));
    }
    let basis = standard_basis(v.len() / 4)?;
    let r = basis.structure_at(which, &DVec::zeros(v.len()))?;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for i in 0..v.len() {
        let re_i = r.column(i);
        let a = re_i.dot(v);
        s1 += a * v[i];
        s2 += a * a;
    }
    Ok((s1, s2))
}

/// Adapted tangent frame of the slant distribution: pairs
/// `(f_j, sec theta phi f_j)` spanning `D2` and the normal vectors
/// `w_j = csc theta omega f_j`, all in frame coordinates.
#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    /// `2 n2` tangent vectors in frame coordinates.
    pub fiber: Vec<DVec>,
    /// `2 n2` normal vectors in normal-frame coordinates.
    pub normal: Vec<DVec>,
}

/// Construct the adapted frame at a point from a slant analysis with a
/// proper, nonzero slant angle on an even-dimensional `D2`.
pub fn adapted_frame(sa: &SlantAnalysis) -> Result<AdaptedFrame> {
    let theta = sa.theta.ok_or_else(|| {
        Error::Contract("adapted frame needs a conforming slant angle".into())
    })?;
    if !(THETA_FLOOR..=std::f64::consts::FRAC_PI_2 - THETA_FLOOR).contains(&theta) {
        return Err(Error::Contract(format!(
            "adapted frame needs theta strictly interior, got {theta}"
        )));
    }
    if !sa.d2_dim.is_multiple_of(2) || sa.d2_dim == 0 {
        return Err(Error::Contract(format!(
            "adapted frame needs even-dimensional D2, got {}",
            sa.d2_dim
        )));
    }
    let n = sa.tensors.tangent_dim();
    let sec_t = 1.0 / theta.cos();
    let csc_t = 1.0 / theta.sin();
    let mut fiber: Vec<DVec> = Vec::with_capacity(sa.d2_dim);
    // seed candidates: columns of the D2 projector
    for seed in 0..n {
        if fiber.len() == sa.d2_dim {
            break;
        }
        let mut v = sa.d2_projector.column(seed).into_owned();
        for _ in 0..2 {
            for w in &fiber {
                let proj = w.dot(&v);
                v -= w * proj;
            }
        }
        if v.norm() < 1e-6 {
            continue;
        }
        v /= v.norm();
        let phi_v = &sa.tensors.phi * &v;
        let partner = phi_v * sec_t;
        fiber.push(v);
        fiber.push(partner);
    }
    if fiber.len() != sa.d2_dim {
        return Err(Error::Contract(
            "adapted frame construction exhausted seeds".into(),
        ));
    }
    let normal: Vec<DVec> = fiber
        .iter()
        .map(|f| (&sa.tensors.omega * f) * csc_t)
        .collect();
    Ok(AdaptedFrame { fiber, normal })
}

// ---------------------------------------------------------------------------
// non-existence probe (role-reversed candidates)
// ---------------------------------------------------------------------------

/// Consistency probe for candidates with slant base and invariant fiber
/// (`TB = D2`, `TF = D1`): verifies that every candidate violates at least
/// one hypothesis. Absence of counterexamples is reported; non-existence is
/// never asserted.
pub fn nonexistence_probe(
    wc: &WarpedChart,
    grid: &[DVec],
    cluster_tol: f64,
) -> Result<Vec<CheckEntry>> {
    let chart = wc.chart();
    let mut entries = Vec::with_capacity(grid.len());
    for (idx, x) in grid.iter().enumerate() {
        let mut flags: Vec<String> = Vec::new();
        if wc.trivial_warp() {
            flags.push("excluded: trivial warp".into());
        }
        if let Err(err) = wc.verify_structure(std::slice::from_ref(x)) {
            flags.push(format!("metric block form violated: {err}"));
        }
        match chart.frame_at(x).and_then(|pg| {
            slant::classify_geometry(&pg, chart.basis(), cluster_tol)
        }) {
            Err(err) => flags.push(format!("classification failed: {err}")),
            Ok(class) => {
                if !class.shared_d1 {
                    flags.push("no shared D1 across structures".into());
                }
                // TF = D1 requires the D1 projector to match the fiber block
                let n = chart.param_dim();
                let mut expected = DMat::zeros(n, n);
                for i in wc.n_base()..n {
                    expected[(i, i)] = 1.0;
                }
                let deviation = (&class.analyses[0].d1_projector - &expected).abs().max();
                if deviation > 1e-6 {
                    flags.push(format!("TF != D1 (projector deviation {deviation:.3e})"));
                }
                if class
                    .analyses
                    .iter()
                    .any(|a| a.theta.map(|t| t < THETA_FLOOR).unwrap_or(true))
                {
                    flags.push("base slant angle vanishes or is undefined".into());
                }
                if class.analyses.iter().any(|a| a.kind == SlantKind::NonConforming) {
                    flags.push("non-conforming eigenvalue clusters".into());
                }
            }
        }
        let mut entry = if flags.is_empty() {
            // a candidate satisfying every hypothesis would contradict the
            // non-existence statement; surface it loudly
            CheckEntry::from_residual(idx, 1.0, 0.0)
                .with_label("candidate satisfies all hypotheses - counterexample?")
        } else {
            let mut e = CheckEntry::from_residual(idx, 0.0, 0.0);
            e.status = Status::Pass;
            for f in &flags {
                e = e.with_label(format!("contradiction: {f}"));
            }
            e
        };
        entry = entry.with_label("probe only: non-existence is not asserted");
        entries.push(entry.finalize());
    }
    Ok(entries)
}
