//! Pointwise extrinsic geometry of an immersion: orthonormal frames,
//! projectors, second fundamental form, shape operators, mean curvature.
//!
//! Frames come from Gram-Schmidt on the jacobian columns in fixed parameter
//! order, so they are deterministic and, on rank-stable charts, smooth in the
//! parameters. The normal frame completes the tangent frame with standard
//! basis vectors taken in index order, skipping near-dependent candidates.
//! Second derivatives come from exact jets; only derivatives of frame fields
//! and user-supplied normal fields use finite differences.

use crate::ambient::QuaternionicBasis;
use crate::error::{Error, Result};
use crate::exprmap::{self, Expression, VectorJet};
use crate::{DMat, DVec};

/// Relative singular-value threshold below which the jacobian is considered
/// rank deficient.
pub const RANK_TOL: f64 = 1e-8;
/// Residual threshold for accepting a standard basis vector into the normal
/// completion.
pub const COMPLETION_TOL: f64 = 1e-8;
/// Central-difference step for derivatives of frame and normal fields.
pub const FD_STEP: f64 = 1e-5;

/// Axis-aligned box in parameter space.
#[derive(Debug, Clone)]
pub struct DomainBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<DomainBox> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
                context: "domain bounds".into(),
            });
        }
        for (axis, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            // also rejects NaN bounds
            if l.partial_cmp(&h) != Some(std::cmp::Ordering::Less) {
                return Err(Error::Contract(format!(
                    "domain axis {axis} has empty range [{l}, {h}]"
                )));
            }
        }
        Ok(DomainBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &DVec) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l - 1e-12 && v <= h + 1e-12)
    }

    pub fn center(&self) -> DVec {
        DVec::from_iterator(
            self.dim(),
            self.lo.iter().zip(&self.hi).map(|(&l, &h)| 0.5 * (l + h)),
        )
    }

    /// Uniform grid including both endpoints on each axis; `resolution[k] >= 2`.
    /// Points are ordered with the last axis varying fastest.
    pub fn grid(&self, resolution: &[usize]) -> Result<Vec<DVec>> {
        if resolution.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: resolution.len(),
                context: "grid resolution".into(),
            });
        }
        if resolution.iter().any(|&r| r < 2) {
            return Err(Error::Contract(
                "grid resolution must be at least 2 per axis".into(),
            ));
        }
        let total: usize = resolution.iter().product();
        let mut points = Vec::with_capacity(total);
        let mut index = vec![0usize; self.dim()];
        for _ in 0..total {
            let coords: Vec<f64> = index
                .iter()
                .enumerate()
                .map(|(axis, &i)| {
                    let t = i as f64 / (resolution[axis] - 1) as f64;
                    self.lo[axis] + t * (self.hi[axis] - self.lo[axis])
                })
                .collect();
            points.push(DVec::from_vec(coords));
            for axis in (0..self.dim()).rev() {
                index[axis] += 1;
                if index[axis] < resolution[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        Ok(points)
    }
}

/// A parametrized submanifold of `R^{4m}` with its ambient structure triple.
#[derive(Debug, Clone)]
pub struct ImmersionChart {
    params: Vec<String>,
    components: Vec<Expression>,
    domain: DomainBox,
    basis: QuaternionicBasis,
}

impl ImmersionChart {
    pub fn new(
        params: Vec<String>,
        components: Vec<Expression>,
        domain: DomainBox,
        basis: QuaternionicBasis,
    ) -> Result<ImmersionChart> {
        let n = params.len();
        if domain.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: domain.dim(),
                context: "domain dimension".into(),
            });
        }
        if components.len() != basis.dim_ambient() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim_ambient(),
                got: components.len(),
                context: "component count (must equal 4m)".into(),
            });
        }
        if n > basis.dim_ambient() {
            return Err(Error::Contract(format!(
                "parameter count {n} exceeds ambient dimension {}",
                basis.dim_ambient()
            )));
        }
        for comp in &components {
            if comp.param_count() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: comp.param_count(),
                    context: "component expression parameter count".into(),
                });
            }
        }
        Ok(ImmersionChart {
            params,
            components,
            domain,
            basis,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.params.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.dim_ambient()
    }

    pub fn codim(&self) -> usize {
        self.ambient_dim() - self.param_dim()
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn components(&self) -> &[Expression] {
        &self.components
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn basis(&self) -> &QuaternionicBasis {
        &self.basis
    }

    /// Replace the ambient basis (used when a config overrides a catalog
    /// chart's default structure triple).
    pub fn with_basis(mut self, basis: QuaternionicBasis) -> Result<ImmersionChart> {
        if basis.dim_ambient() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                got: basis.dim_ambient(),
                context: "replacement basis dimension".into(),
            });
        }
        self.basis = basis;
        Ok(self)
    }

    /// Evaluate the immersion with first and second derivatives.
    pub fn jets(&self, x: &DVec) -> Result<VectorJet> {
        exprmap::eval_vector_map(&self.components, x)
    }

    /// Ambient image of a parameter point.
    pub fn point(&self, x: &DVec) -> Result<DVec> {
        let mut out = DVec::zeros(self.ambient_dim());
        for (row, comp) in self.components.iter().enumerate() {
            out[row] = comp.eval_value(x)?;
        }
        Ok(out)
    }

    /// Frames and projectors at `x` (no second fundamental form).
    pub fn frame_at(&self, x: &DVec) -> Result<PointGeometry> {
        let jets = self.jets(x)?;
        self.geometry_from_jets(x, jets, false)
    }

    /// Full pointwise geometry at `x` including the second fundamental form
    /// and mean curvature.
    pub fn second_fundamental_form(&self, x: &DVec) -> Result<PointGeometry> {
        let jets = self.jets(x)?;
        self.geometry_from_jets(x, jets, true)
    }

    #[allow(clippy::needless_range_loop)]
    fn geometry_from_jets(&self, x: &DVec, jets: VectorJet, with_h: bool) -> Result<PointGeometry> {
        let n = self.param_dim();
        let dim = self.ambient_dim();

        if n > 0 {
            let svd = jets.jacobian.clone().svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smin < RANK_TOL * smax {
                return Err(Error::Degenerate {
                    point: format!("{:?}", x.as_slice()),
                    detail: format!(
                        "jacobian singular values span [{smin:.3e}, {smax:.3e}]"
                    ),
                });
            }
        }

        let (tangent_frame, gs_upper) = gram_schmidt(&jets.jacobian)?;
        let normal_frame = complete_frame(&tangent_frame, dim)?;
        let tangent_projector = &tangent_frame * tangent_frame.transpose();
        let normal_projector = DMat::identity(dim, dim) - &tangent_projector;

        let mut geom = PointGeometry {
            x: x.clone(),
            p: jets.value.clone(),
            tangent_frame,
            normal_frame,
            gs_upper,
            tangent_projector,
            normal_projector,
            h_tensor: None,
            mean_curvature: None,
        };

        if with_h {
            // coordinate second derivatives as ambient vectors
            let mut h_coord = vec![vec![DVec::zeros(dim); n]; n];
            for i in 0..n {
                for j in 0..n {
                    let mut w = DVec::zeros(dim);
                    for c in 0..dim {
                        w[c] = jets.hessians[c][(i, j)];
                    }
                    h_coord[i][j] = &geom.normal_projector * w;
                }
            }
            // change of basis to the orthonormal tangent frame:
            // e_a = sum_i Rinv[i,a] d_i
            let rinv = invert_upper_triangular(&geom.gs_upper);
            let mut h_frame = vec![vec![DVec::zeros(dim); n]; n];
            for a in 0..n {
                for b in 0..=a {
                    let mut acc = DVec::zeros(dim);
                    for i in 0..n {
                        let cia = rinv[(i, a)];
                        if cia == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            let cjb = rinv[(j, b)];
                            if cjb != 0.0 {
                                acc += &h_coord[i][j] * (cia * cjb);
                            }
                        }
                    }
                    h_frame[a][b] = acc.clone();
                    h_frame[b][a] = acc;
                }
            }
            let mut mean = DVec::zeros(dim);
            for (a, row) in h_frame.iter().enumerate() {
                mean += &row[a];
            }
            if n > 0 {
                mean /= n as f64;
            }
            geom.h_tensor = Some(h_frame);
            geom.mean_curvature = Some(mean);
        }

        Ok(geom)
    }

    /// Normal connection `D_X Z` at `x`: the normal projection of the
    /// directional derivative of the normal field `Z` along the parameter
    /// direction `direction`, by central differences.
    ///
    /// `field` maps parameter points to ambient vectors and must be normal
    /// (within 1e-6) throughout the sampled neighborhood.
    pub fn normal_connection(
        &self,
        x: &DVec,
        direction: &DVec,
        field: &dyn Fn(&DVec) -> Result<DVec>,
    ) -> Result<DVec> {
        let geom = self.frame_at(x)?;
        let plus_x = x + direction * FD_STEP;
        let minus_x = x - direction * FD_STEP;
        for sample in [x, &plus_x, &minus_x] {
            let z = field(sample)?;
            let g = self.frame_at(sample)?;
            let tangential = (&g.tangent_projector * &z).norm();
            if tangential > 1e-6 * z.norm().max(1.0) {
                return Err(Error::Contract(format!(
                    "field is not normal near the base point (tangential norm {tangential:.3e})"
                )));
            }
        }
        let derivative = (field(&plus_x)? - field(&minus_x)?) / (2.0 * FD_STEP);
        Ok(&geom.normal_projector * derivative)
    }
}

/// Second fundamental form in an orthonormal tangent frame: `h[a][b]` is the
/// ambient (normal) vector `h(e_a, e_b)`.
pub type HTensor = Vec<Vec<DVec>>;

/// Immutable snapshot of the geometry at one parameter point.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    /// Parameter point.
    pub x: DVec,
    /// Ambient image.
    pub p: DVec,
    /// `4m x n`, orthonormal columns spanning the tangent space.
    pub tangent_frame: DMat,
    /// `4m x (4m - n)`, orthonormal columns spanning the normal space.
    pub normal_frame: DMat,
    /// Upper-triangular factor with `jacobian = tangent_frame * gs_upper`.
    pub gs_upper: DMat,
    /// Symmetric idempotent projector onto the tangent space.
    pub tangent_projector: DMat,
    /// Symmetric idempotent projector onto the normal space.
    pub normal_projector: DMat,
    /// Second fundamental form in the tangent frame, when computed.
    pub h_tensor: Option<HTensor>,
    /// Mean curvature vector `H = (1/n) trace h`, when computed.
    pub mean_curvature: Option<DVec>,
}

impl PointGeometry {
    pub fn tangent_dim(&self) -> usize {
        self.tangent_frame.ncols()
    }

    pub fn normal_dim(&self) -> usize {
        self.normal_frame.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.tangent_frame.nrows()
    }

    fn h(&self) -> Result<&HTensor> {
        self.h_tensor
            .as_ref()
            .ok_or_else(|| Error::Contract("second fundamental form not computed".into()))
    }

    /// `h(u, v)` for tangent vectors given in frame coordinates.
    pub fn h_apply(&self, u: &DVec, v: &DVec) -> Result<DVec> {
        let h = self.h()?;
        let n = self.tangent_dim();
        let mut acc = DVec::zeros(self.ambient_dim());
        for a in 0..n {
            if u[a] == 0.0 {
                continue;
            }
            for b in 0..n {
                let w = u[a] * v[b];
                if w != 0.0 {
                    acc += &h[a][b] * w;
                }
            }
        }
        Ok(acc)
    }

    /// Shape operator `A_Z` in the tangent frame for a normal vector `Z`.
    pub fn shape_operator(&self, z: &DVec) -> Result<DMat> {
        if z.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                got: z.len(),
                context: "shape operator direction".into(),
            });
        }
        let tangential = (&self.tangent_projector * z).norm();
        if tangential > 1e-8 * z.norm().max(1.0) {
            return Err(Error::Contract(format!(
                "shape operator direction is not normal (tangential norm {tangential:.3e})"
            )));
        }
        let h = self.h()?;
        let n = self.tangent_dim();
        let mut a_z = DMat::zeros(n, n);
        for a in 0..n {
            for b in 0..=a {
                let val = h[a][b].dot(z);
                a_z[(a, b)] = val;
                a_z[(b, a)] = val;
            }
        }
        Ok(a_z)
    }

    /// Squared norm of the second fundamental form.
    pub fn sff_norm_squared(&self) -> Result<f64> {
        let h = self.h()?;
        let mut acc = 0.0;
        for row in h {
            for v in row {
                acc += v.norm_squared();
            }
        }
        Ok(acc)
    }

    /// Frame coordinates of an ambient vector's tangential part.
    pub fn to_frame_coords(&self, v: &DVec) -> DVec {
        self.tangent_frame.transpose() * v
    }

    /// Ambient vector from tangent frame coordinates.
    pub fn from_frame_coords(&self, c: &DVec) -> DVec {
        &self.tangent_frame * c
    }

    /// Normal-frame coordinates of an ambient vector's normal part.
    pub fn to_normal_coords(&self, v: &DVec) -> DVec {
        self.normal_frame.transpose() * v
    }

    /// Ambient vector from normal frame coordinates.
    pub fn from_normal_coords(&self, c: &DVec) -> DVec {
        &self.normal_frame * c
    }

    /// Re-express the second fundamental form after mixing the tangent frame
    /// by an orthogonal matrix `q` (columns of the new frame in terms of the
    /// old). Used to verify frame independence of invariants.
    pub fn remix_frame(&self, q: &DMat) -> Result<PointGeometry> {
        let n = self.tangent_dim();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q.nrows(),
                context: "frame remix".into(),
            });
        }
        let mut out = self.clone();
        out.tangent_frame = &self.tangent_frame * q;
        if let Some(h) = &self.h_tensor {
            let mut new_h = vec![vec![DVec::zeros(self.ambient_dim()); n]; n];
            for a in 0..n {
                for b in 0..n {
                    let mut acc = DVec::zeros(self.ambient_dim());
                    for i in 0..n {
                        for j in 0..n {
                            let w = q[(i, a)] * q[(j, b)];
                            if w != 0.0 {
                                acc += &h[i][j] * w;
                            }
                        }
                    }
                    new_h[a][b] = acc;
                }
            }
            out.h_tensor = Some(new_h);
        }
        Ok(out)
    }
}

/// Modified Gram-Schmidt with one reorthogonalization sweep. Returns `(Q, R)`
/// with `A = Q R`, `R` upper triangular with positive diagonal.
pub fn gram_schmidt(a: &DMat) -> Result<(DMat, DMat)> {
    let (rows, cols) = (a.nrows(), a.ncols());
    let mut q = a.clone();
    let mut r = DMat::zeros(cols, cols);
    for k in 0..cols {
        let mut col = q.column(k).into_owned();
        // two projection passes keep orthogonality near machine precision
        for _ in 0..2 {
            for j in 0..k {
                let proj = q.column(j).dot(&col);
                r[(j, k)] += proj;
                col -= q.column(j) * proj;
            }
        }
        let norm = col.norm();
        if norm < 1e-14 {
            return Err(Error::Degenerate {
                point: String::new(),
                detail: format!("column {k} dependent in Gram-Schmidt"),
            });
        }
        r[(k, k)] = norm;
        col /= norm;
        q.set_column(k, &col);
    }
    debug_assert_eq!(q.nrows(), rows);
    Ok((q, r))
}

fn invert_upper_triangular(r: &DMat) -> DMat {
    let n = r.nrows();
    let mut inv = DMat::identity(n, n);
    for col in 0..n {
        for row in (0..n).rev() {
            let mut sum = inv[(row, col)];
            for k in row + 1..n {
                sum -= r[(row, k)] * inv[(k, col)];
            }
            inv[(row, col)] = sum / r[(row, row)];
        }
    }
    inv
}

/// Complete an orthonormal column set to a full orthonormal basis of
/// `R^{dim}` using standard basis vectors in index order; returns only the
/// new columns.
fn complete_frame(frame: &DMat, dim: usize) -> Result<DMat> {
    let have = frame.ncols();
    let need = dim - have;
    let mut cols: Vec<DVec> = (0..have).map(|c| frame.column(c).into_owned()).collect();
    let mut fresh: Vec<DVec> = Vec::with_capacity(need);
    for idx in 0..dim {
        if fresh.len() == need {
            break;
        }
        let mut v = DVec::zeros(dim);
        v[idx] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dot(&v);
                v -= c * proj;
            }
        }
        let norm = v.norm();
        if norm > COMPLETION_TOL {
            v /= norm;
            cols.push(v.clone());
            fresh.push(v);
        }
    }
    if fresh.len() != need {
        return Err(Error::Degenerate {
            point: String::new(),
            detail: "normal completion failed to reach full dimension".into(),
        });
    }
    let mut out = DMat::zeros(dim, need);
    for (k, v) in fresh.iter().enumerate() {
        out.set_column(k, v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::standard_basis;
    use crate::exprmap::parse;

    fn chart(params: &[&str], comps: &[&str], lo: &[f64], hi: &[f64], m: usize) -> ImmersionChart {
        let components = comps
            .iter()
            .map(|s| parse(s, params).unwrap())
            .collect();
        ImmersionChart::new(
            params.iter().map(|s| s.to_string()).collect(),
            components,
            DomainBox::new(lo.to_vec(), hi.to_vec()).unwrap(),
            standard_basis(m).unwrap(),
        )
        .unwrap()
    }

    fn circle() -> ImmersionChart {
        chart(
            &["x1"],
            &["cos(x1)", "sin(x1)", "0", "0"],
            &[0.0],
            &[6.2],
            1,
        )
    }

    #[test]
    fn grid_is_deterministic_and_inclusive() {
        let bx = DomainBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let pts = bx.grid(&[2, 3]).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].as_slice(), &[0.0, -1.0]);
        assert_eq!(pts[1].as_slice(), &[0.0, 0.0]);
        assert_eq!(pts[5].as_slice(), &[1.0, 1.0]);
        assert!(bx.grid(&[1, 3]).is_err());
    }

    #[test]
    fn example_7_5_frame_is_coordinate() {
        let ch = chart(
            &["x1", "x2", "x3", "x4"],
            &["0", "0", "x3", "x1", "0", "x4", "x2", "0"],
            &[-1.0; 4],
            &[1.0; 4],
            2,
        );
        let g = ch
            .frame_at(&DVec::from_row_slice(&[0.3, -0.2, 0.9, 0.1]))
            .unwrap();
        // columns land in ambient slots y4, y7, y3, y6
        for (col, slot) in [(0usize, 3usize), (1, 6), (2, 2), (3, 5)] {
            assert!((g.tangent_frame[(slot, col)] - 1.0).abs() < 1e-14);
        }
        let combined_ok = (&g.tangent_projector + &g.normal_projector
            - DMat::identity(8, 8))
        .abs()
        .max();
        assert!(combined_ok < 1e-12);
    }

    #[test]
    fn full_dimensional_chart_has_empty_normal_frame() {
        let ch = chart(
            &["x1", "x2", "x3", "x4"],
            &["x1", "x2", "x3", "x4"],
            &[-1.0; 4],
            &[1.0; 4],
            1,
        );
        let g = ch.frame_at(&DVec::from_row_slice(&[0.0; 4])).unwrap();
        assert_eq!(g.normal_dim(), 0);
        assert!((&g.tangent_projector - DMat::identity(4, 4)).abs().max() < 1e-14);
    }

    #[test]
    fn graph_chart_frame_matches_qr() {
        let ch = chart(
            &["x1", "x2"],
            &["x1", "x2", "x1^2 + x2^2", "0"],
            &[-2.0, -2.0],
            &[2.0, 2.0],
            1,
        );
        let x = DVec::from_row_slice(&[1.0, 0.0]);
        let g = ch.frame_at(&x).unwrap();
        let jac = ch.jets(&x).unwrap().jacobian;
        // QR oracle via nalgebra
        let qr = jac.clone().qr();
        let q = qr.q();
        for col in 0..2 {
            let mine = g.tangent_frame.column(col).into_owned();
            let oracle = q.column(col).into_owned();
            let sign = if mine.dot(&oracle) < 0.0 { -1.0 } else { 1.0 };
            assert!((mine - oracle * sign).norm() < 1e-12);
        }
        let gram = g.tangent_frame.transpose() * &g.tangent_frame;
        assert!((gram - DMat::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn rank_deficiency_detected() {
        let ch = chart(
            &["x1", "x2"],
            &["x1", "x1", "0", "0"],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            1,
        );
        let err = ch.frame_at(&DVec::from_row_slice(&[0.5, 0.5])).unwrap_err();
        assert!(matches!(err, Error::Degenerate { .. }), "{err}");
    }

    #[test]
    fn linear_chart_is_totally_geodesic() {
        let ch = chart(
            &["x1", "x2", "x3", "x4"],
            &["0", "0", "x3", "x1", "0", "x4", "x2", "0"],
            &[-1.0; 4],
            &[1.0; 4],
            2,
        );
        let g = ch
            .second_fundamental_form(&DVec::from_row_slice(&[0.1, 0.2, 0.3, 0.4]))
            .unwrap();
        assert!(g.sff_norm_squared().unwrap() < 1e-28);
        assert!(g.mean_curvature.as_ref().unwrap().norm() < 1e-14);
    }

    #[test]
    fn circle_curvature_oracle() {
        let ch = circle();
        for t in [0.0, 0.7, 2.1, 4.4] {
            let g = ch
                .second_fundamental_form(&DVec::from_row_slice(&[t]))
                .unwrap();
            let h_vec = g.mean_curvature.clone().unwrap();
            assert!((h_vec.norm() - 1.0).abs() < 1e-12);
            // points radially inward
            let radial = DVec::from_row_slice(&[t.cos(), t.sin(), 0.0, 0.0]);
            assert!((h_vec + &radial).norm() < 1e-12);
            assert!((g.sff_norm_squared().unwrap() - 1.0).abs() < 1e-12);

            let a = g.shape_operator(&(-radial)).unwrap();
            assert!((a[(0, 0)] - 1.0).abs() < 1e-12);
            let zero = DVec::zeros(4);
            assert!(g.shape_operator(&zero).unwrap().abs().max() == 0.0);
        }
    }

    #[test]
    fn scaled_circle_curvature_scaling() {
        let r = 2.5;
        let ch = chart(
            &["x1"],
            &[&format!("{r}*cos(x1)"), &format!("{r}*sin(x1)"), "0", "0"],
            &[0.0],
            &[6.2],
            1,
        );
        let g = ch
            .second_fundamental_form(&DVec::from_row_slice(&[1.1]))
            .unwrap();
        assert!((g.sff_norm_squared().unwrap() - 1.0 / (r * r)).abs() < 1e-12);
    }

    #[test]
    fn sphere_mean_curvature_oracle() {
        let ch = chart(
            &["x1", "x2"],
            &[
                "cos(x1)*cos(x2)",
                "cos(x1)*sin(x2)",
                "sin(x1)",
                "0",
            ],
            &[0.02, 0.0],
            &[0.4, 1.0],
            1,
        );
        let g = ch
            .second_fundamental_form(&DVec::from_row_slice(&[0.05, 0.3]))
            .unwrap();
        let h_norm = g.mean_curvature.as_ref().unwrap().norm();
        assert!((h_norm - 1.0).abs() < 1e-6, "sphere |H| = 1, got {h_norm}");
    }

    #[test]
    fn shape_operator_rejects_tangent_direction() {
        let ch = circle();
        let x = DVec::from_row_slice(&[0.4]);
        let g = ch.second_fundamental_form(&x).unwrap();
        let tangent = g.tangent_frame.column(0).into_owned();
        assert!(matches!(
            g.shape_operator(&tangent),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn gauss_formula_residual() {
        // d_i d_j Phi = tangential part + h(d_i, d_j) reconstructs exactly
        let ch = chart(
            &["x1", "x2"],
            &["x1", "x2", "x1^2 + x2^2", "x1*x2"],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            1,
        );
        let x = DVec::from_row_slice(&[0.3, -0.6]);
        let jets = ch.jets(&x).unwrap();
        let g = ch.second_fundamental_form(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut w = DVec::zeros(4);
                for c in 0..4 {
                    w[c] = jets.hessians[c][(i, j)];
                }
                let tangential = &g.tangent_projector * &w;
                // h in coordinate basis: contract frame h with gs_upper
                let ei = g.gs_upper.column(i).into_owned();
                let ej = g.gs_upper.column(j).into_owned();
                let h_ij = g.h_apply(&ei, &ej).unwrap();
                assert!((w - tangential - h_ij).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn normal_connection_constant_field_on_linear_chart() {
        let ch = chart(
            &["x1", "x2"],
            &["x1", "x2", "0", "0"],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            1,
        );
        let x = DVec::from_row_slice(&[0.2, -0.4]);
        let dir = DVec::from_row_slice(&[1.0, 0.0]);
        let field = |_: &DVec| -> Result<DVec> {
            Ok(DVec::from_row_slice(&[0.0, 0.0, 0.7, -0.3]))
        };
        let d = ch.normal_connection(&x, &dir, &field).unwrap();
        assert!(d.norm() < 1e-12);
    }

    #[test]
    fn normal_connection_circle_radial_field() {
        let ch = circle();
        let x = DVec::from_row_slice(&[0.8]);
        let dir = DVec::from_row_slice(&[1.0]);
        // radial normal field, smooth in parameters
        let field = |xx: &DVec| -> Result<DVec> {
            Ok(DVec::from_row_slice(&[xx[0].cos(), xx[0].sin(), 0.0, 0.0]))
        };
        let d = ch.normal_connection(&x, &dir, &field).unwrap();
        assert!(d.norm() < 1e-6, "plane curve normal bundle is flat, got {}", d.norm());
    }

    #[test]
    fn normal_connection_rejects_tangent_field() {
        let ch = circle();
        let x = DVec::from_row_slice(&[0.8]);
        let dir = DVec::from_row_slice(&[1.0]);
        let field = |xx: &DVec| -> Result<DVec> {
            Ok(DVec::from_row_slice(&[-xx[0].sin(), xx[0].cos(), 0.0, 0.0]))
        };
        assert!(ch.normal_connection(&x, &dir, &field).is_err());
    }

    #[test]
    fn weingarten_reconstruction() {
        let ch = chart(
            &["x1", "x2"],
            &["x1", "x2", "x1^2 + x2^2", "x1*x2"],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            1,
        );
        let x = DVec::from_row_slice(&[0.25, -0.4]);
        // smooth normal field: normal-projected constant vector
        let field = |xx: &DVec| -> Result<DVec> {
            let g = ch.frame_at(xx)?;
            let raw = DVec::from_row_slice(&[0.3, -0.7, 1.1, 0.4]);
            Ok(&g.normal_projector * raw)
        };
        let g = ch.second_fundamental_form(&x).unwrap();
        let z = field(&x).unwrap();

        for dir_idx in 0..2 {
            let mut dir = DVec::zeros(2);
            dir[dir_idx] = 1.0;
            let plus = &x + &dir * FD_STEP;
            let minus = &x - &dir * FD_STEP;
            let dz = (field(&plus).unwrap() - field(&minus).unwrap()) / (2.0 * FD_STEP);
            let d_normal = ch.normal_connection(&x, &dir, &field).unwrap();
            // A_Z X for X = coordinate direction: frame coords of d_dir
            let x_frame = g.to_frame_coords(&(ch.jets(&x).unwrap().jacobian.column(dir_idx).into_owned()));
            let a_z = g.shape_operator(&z).unwrap();
            let a_z_x = g.from_frame_coords(&(&a_z * x_frame));
            let residual = (dz + a_z_x - d_normal).norm();
            assert!(residual < 1e-5, "Weingarten residual {residual}");
        }
    }

    #[test]
    fn sff_norm_frame_independent() {
        let ch = chart(
            &["x1", "x2"],
            &["x1", "x2", "x1^2 - x2^2", "2*x1*x2"],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            1,
        );
        let g = ch
            .second_fundamental_form(&DVec::from_row_slice(&[0.4, 0.2]))
            .unwrap();
        let base = g.sff_norm_squared().unwrap();
        let angle: f64 = 0.73;
        let q = DMat::from_row_slice(
            2,
            2,
            &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()],
        );
        let mixed = g.remix_frame(&q).unwrap();
        assert!((mixed.sff_norm_squared().unwrap() - base).abs() < 1e-9);
    }
}
