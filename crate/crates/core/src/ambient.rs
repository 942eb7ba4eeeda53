//! Quaternionic Hermitian structures on flat `R^{4m}`.
//!
//! The standard triple acts blockwise on each quaternionic line
//! `(y_{4k+1}, ..., y_{4k+4})` (1-based here to match the usual coordinate
//! labels; storage is 0-based):
//!
//! ```text
//! I: y1 -> y2, y2 -> -y1, y3 ->  y4, y4 -> -y3
//! J: y1 -> y3, y2 -> -y4, y3 -> -y1, y4 ->  y2
//! K: y1 -> y4, y2 ->  y3, y3 -> -y2, y4 -> -y1
//! ```
//!
//! A rotated basis replaces `(I, J)` by the pointwise rotation
//! `(cos f * I - sin f * J, sin f * I + cos f * J)` for a scalar angle field
//! `f` with values in `[0, pi/2]`, and keeps `K`. The triple stays
//! quaternionic Hermitian at every point; it is parallel exactly when `f` is
//! constant.

use crate::error::{Error, Result};
use crate::exprmap::Expression;
use crate::{DMat, DVec};

/// Selects one structure of a quaternionic triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Structure {
    I,
    J,
    K,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::I, Structure::J, Structure::K];

    pub fn label(self) -> &'static str {
        match self {
            Structure::I => "I",
            Structure::J => "J",
            Structure::K => "K",
        }
    }
}

/// Angle threshold below which `sin f` or `cos f` makes a rotated structure
/// numerically indistinguishable from the unrotated or quarter-turned one.
/// Such points are flagged in reports rather than rejected.
pub const ROTATION_DEGENERACY_EPS: f64 = 1e-9;

/// A quaternionic Hermitian triple on `R^{4m}`, possibly point-dependent.
#[derive(Debug, Clone)]
pub struct QuaternionicBasis {
    dim_ambient: usize,
    i_mat: DMat,
    j_mat: DMat,
    k_mat: DMat,
    /// Rotation angle as a scalar field over ambient points (`y1..y{4m}`),
    /// radians in `[0, pi/2]`; `None` for the unrotated basis.
    rotation_angle: Option<Expression>,
}

/// Build the standard parallel triple on `R^{4m}`.
pub fn standard_basis(m: usize) -> Result<QuaternionicBasis> {
    if m == 0 {
        return Err(Error::InvalidDimension(
            "m must be at least 1 (ambient dimension 4m)".into(),
        ));
    }
    let dim = 4 * m;
    let mut i_mat = DMat::zeros(dim, dim);
    let mut j_mat = DMat::zeros(dim, dim);
    let mut k_mat = DMat::zeros(dim, dim);
    for k in 0..m {
        let b = 4 * k;
        // columns hold the images of the block basis vectors
        i_mat[(b + 1, b)] = 1.0;
        i_mat[(b, b + 1)] = -1.0;
        i_mat[(b + 3, b + 2)] = 1.0;
        i_mat[(b + 2, b + 3)] = -1.0;

        j_mat[(b + 2, b)] = 1.0;
        j_mat[(b + 3, b + 1)] = -1.0;
        j_mat[(b, b + 2)] = -1.0;
        j_mat[(b + 1, b + 3)] = 1.0;

        k_mat[(b + 3, b)] = 1.0;
        k_mat[(b + 2, b + 1)] = 1.0;
        k_mat[(b + 1, b + 2)] = -1.0;
        k_mat[(b, b + 3)] = -1.0;
    }
    Ok(QuaternionicBasis {
        dim_ambient: dim,
        i_mat,
        j_mat,
        k_mat,
        rotation_angle: None,
    })
}

/// Rotate a basis by the angle field `f` (an expression over the ambient
/// coordinates `y1..y{4m}` with values in `[0, pi/2]`).
pub fn rotated_basis(base: &QuaternionicBasis, f: Expression) -> Result<QuaternionicBasis> {
    if base.is_rotated() {
        return Err(Error::Contract(
            "base of a rotation must be an unrotated triple".into(),
        ));
    }
    let residual = quaternionic_residual(&base.i_mat, &base.j_mat, &base.k_mat);
    if residual > 1e-12 {
        return Err(Error::Contract(format!(
            "base triple violates the quaternionic relations (residual {residual:.3e})"
        )));
    }
    if f.param_count() != base.dim_ambient {
        return Err(Error::DimensionMismatch {
            expected: base.dim_ambient,
            got: f.param_count(),
            context: "rotation angle field parameter count".into(),
        });
    }
    Ok(QuaternionicBasis {
        dim_ambient: base.dim_ambient,
        i_mat: base.i_mat.clone(),
        j_mat: base.j_mat.clone(),
        k_mat: base.k_mat.clone(),
        rotation_angle: Some(f),
    })
}

/// Ambient parameter names `y1..y{4m}` used by rotation-angle fields.
pub fn ambient_params(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("y{i}")).collect()
}

impl QuaternionicBasis {
    pub fn dim_ambient(&self) -> usize {
        self.dim_ambient
    }

    pub fn blocks(&self) -> usize {
        self.dim_ambient / 4
    }

    /// True when the triple is parallel (constant over the ambient space),
    /// i.e. the structure qualifies as hyperkähler. Rotations by a constant
    /// angle stay parallel.
    pub fn is_parallel(&self) -> bool {
        match &self.rotation_angle {
            None => true,
            Some(f) => f.is_constant(),
        }
    }

    pub fn is_rotated(&self) -> bool {
        self.rotation_angle.is_some()
    }

    /// Evaluate the rotation angle at an ambient point, enforcing the
    /// `[0, pi/2]` range.
    pub fn rotation_angle_at(&self, point: &DVec) -> Result<Option<f64>> {
        match &self.rotation_angle {
            None => Ok(None),
            Some(f) => {
                let angle = f.eval_value(point)?;
                if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&angle) {
                    return Err(Error::Domain {
                        expr: f.pretty(),
                        reason: format!(
                            "rotation angle {angle} outside [0, pi/2] at sampled point"
                        ),
                    });
                }
                Ok(Some(angle))
            }
        }
    }

    /// Whether the rotation is within [`ROTATION_DEGENERACY_EPS`] of an
    /// endpoint of `[0, pi/2]` at this point.
    pub fn rotation_degenerate_at(&self, point: &DVec) -> Result<bool> {
        Ok(match self.rotation_angle_at(point)? {
            None => false,
            Some(angle) => {
                angle.sin().abs() < ROTATION_DEGENERACY_EPS
                    || angle.cos().abs() < ROTATION_DEGENERACY_EPS
            }
        })
    }

    /// The matrix of one structure evaluated at an ambient point.
    pub fn structure_at(&self, which: Structure, point: &DVec) -> Result<DMat> {
        self.check_vector(point, "ambient point")?;
        match self.rotation_angle_at(point)? {
            None => Ok(match which {
                Structure::I => self.i_mat.clone(),
                Structure::J => self.j_mat.clone(),
                Structure::K => self.k_mat.clone(),
            }),
            Some(angle) => {
                let (s, c) = angle.sin_cos();
                Ok(match which {
                    Structure::I => &self.i_mat * c - &self.j_mat * s,
                    Structure::J => &self.i_mat * s + &self.j_mat * c,
                    Structure::K => self.k_mat.clone(),
                })
            }
        }
    }

    /// All three structure matrices at an ambient point.
    pub fn triple_at(&self, point: &DVec) -> Result<[DMat; 3]> {
        Ok([
            self.structure_at(Structure::I, point)?,
            self.structure_at(Structure::J, point)?,
            self.structure_at(Structure::K, point)?,
        ])
    }

    /// Apply the selected structure at `point` to the ambient vector `v`.
    pub fn apply(&self, which: Structure, point: &DVec, v: &DVec) -> Result<DVec> {
        self.check_vector(v, "vector")?;
        Ok(self.structure_at(which, point)? * v)
    }

    fn check_vector(&self, v: &DVec, context: &str) -> Result<()> {
        if v.len() != self.dim_ambient {
            return Err(Error::DimensionMismatch {
                expected: self.dim_ambient,
                got: v.len(),
                context: context.into(),
            });
        }
        Ok(())
    }
}

/// Largest violation of the quaternionic Hermitian relations by a triple:
/// `R^2 = -Id`, `IJ = -JI = K` (and cyclic), and orthogonality of each
/// structure.
pub fn quaternionic_residual(i: &DMat, j: &DMat, k: &DMat) -> f64 {
    let dim = i.nrows();
    let id = DMat::identity(dim, dim);
    let mut worst: f64 = 0.0;
    let mut track = |m: DMat| {
        worst = worst.max(m.abs().max());
    };
    track(i * i + &id);
    track(j * j + &id);
    track(k * k + &id);
    track(i * j - k);
    track(j * k - i);
    track(k * i - j);
    track(j * i + k);
    track(i.transpose() * i - &id);
    track(j.transpose() * j - &id);
    track(k.transpose() * k - &id);
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprmap;

    #[test]
    fn rejects_m_zero() {
        assert!(matches!(standard_basis(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn standard_action_table_block_one() {
        let basis = standard_basis(1).unwrap();
        // I(y1) = y2 and K(y4) = -y1, 1-based; entries are exact integers.
        assert_eq!(basis.i_mat[(1, 0)], 1.0);
        assert_eq!(basis.k_mat[(0, 3)], -1.0);
    }

    #[test]
    fn quaternion_relation_exact() {
        for m in [1usize, 2, 4] {
            let basis = standard_basis(m).unwrap();
            let prod = &basis.i_mat * &basis.j_mat - &basis.k_mat;
            assert_eq!(prod.abs().max(), 0.0, "IJ - K must vanish exactly");
            assert_eq!(
                quaternionic_residual(&basis.i_mat, &basis.j_mat, &basis.k_mat),
                0.0
            );
        }
    }

    #[test]
    fn apply_matches_block_table() {
        let basis = standard_basis(2).unwrap();
        let origin = DVec::zeros(8);
        let mut e5 = DVec::zeros(8);
        e5[4] = 1.0;
        let image = basis.apply(Structure::I, &origin, &e5).unwrap();
        let mut e6 = DVec::zeros(8);
        e6[5] = 1.0;
        assert_eq!(image, e6);

        let basis1 = standard_basis(1).unwrap();
        let mut e2 = DVec::zeros(4);
        e2[1] = 1.0;
        let image = basis1.apply(Structure::J, &DVec::zeros(4), &e2).unwrap();
        let mut expect = DVec::zeros(4);
        expect[3] = -1.0;
        assert_eq!(image, expect);

        let zero = DVec::zeros(8);
        assert_eq!(basis.apply(Structure::K, &origin, &zero).unwrap(), zero);
    }

    #[test]
    fn apply_dimension_mismatch() {
        let basis = standard_basis(1).unwrap();
        let bad = DVec::zeros(5);
        assert!(basis.apply(Structure::I, &DVec::zeros(4), &bad).is_err());
    }

    #[test]
    fn rotation_by_zero_is_identity_rotation() {
        let base = standard_basis(1).unwrap();
        let f = exprmap::Expression::constant(0.0, &["y1", "y2", "y3", "y4"]);
        let rot = rotated_basis(&base, f).unwrap();
        let p = DVec::zeros(4);
        assert_eq!(rot.structure_at(Structure::I, &p).unwrap(), base.i_mat);
        assert_eq!(rot.structure_at(Structure::J, &p).unwrap(), base.j_mat);
        assert!(rot.is_parallel());
    }

    #[test]
    fn rotation_by_quarter_turn_swaps() {
        let base = standard_basis(1).unwrap();
        let f = exprmap::parse("pi/2", &["y1", "y2", "y3", "y4"]).unwrap();
        let rot = rotated_basis(&base, f).unwrap();
        let p = DVec::zeros(4);
        let i_bar = rot.structure_at(Structure::I, &p).unwrap();
        let j_bar = rot.structure_at(Structure::J, &p).unwrap();
        assert!((i_bar + &base.j_mat).abs().max() < 1e-15);
        assert!((j_bar - &base.i_mat).abs().max() < 1e-15);
    }

    #[test]
    fn rotated_squares_to_minus_identity() {
        let base = standard_basis(1).unwrap();
        let f = exprmap::parse("y1", &["y1", "y2", "y3", "y4"]).unwrap();
        let rot = rotated_basis(&base, f).unwrap();
        let p = DVec::from_row_slice(&[std::f64::consts::FRAC_PI_4, 0.0, 0.0, 0.0]);
        let i_bar = rot.structure_at(Structure::I, &p).unwrap();
        let expect = (&base.i_mat - &base.j_mat) * (0.5f64.sqrt());
        assert!((&i_bar - expect).abs().max() < 1e-12);
        let id = DMat::identity(4, 4);
        assert!((&i_bar * &i_bar + id).abs().max() < 1e-12);
        assert!(!rot.is_parallel());
    }

    #[test]
    fn rotation_angle_out_of_range() {
        let base = standard_basis(1).unwrap();
        let f = exprmap::parse("y1", &["y1", "y2", "y3", "y4"]).unwrap();
        let rot = rotated_basis(&base, f).unwrap();
        let p = DVec::from_row_slice(&[2.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            rot.structure_at(Structure::I, &p),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn degenerate_rotation_flag() {
        let base = standard_basis(1).unwrap();
        let f = exprmap::parse("y1", &["y1", "y2", "y3", "y4"]).unwrap();
        let rot = rotated_basis(&base, f).unwrap();
        let origin = DVec::zeros(4);
        assert!(rot.rotation_degenerate_at(&origin).unwrap());
        let interior = DVec::from_row_slice(&[0.7, 0.0, 0.0, 0.0]);
        assert!(!rot.rotation_degenerate_at(&interior).unwrap());
    }
}
