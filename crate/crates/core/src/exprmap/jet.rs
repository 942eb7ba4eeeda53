//! Second-order forward-mode arithmetic.
//!
//! A [`Jet2`] carries a value, a gradient, and a symmetric Hessian through
//! every arithmetic operation. Propagation follows the exact second-order
//! chain rules, so the derivatives are exact up to floating round-off.

use crate::{DMat, DVec};

/// Value, gradient, and Hessian of a scalar quantity with respect to the
/// declared parameters.
#[derive(Debug, Clone)]
pub struct Jet2 {
    pub value: f64,
    pub gradient: DVec,
    pub hessian: DMat,
}

impl Jet2 {
    pub fn constant(value: f64, dim: usize) -> Self {
        Jet2 {
            value,
            gradient: DVec::zeros(dim),
            hessian: DMat::zeros(dim, dim),
        }
    }

    /// Seed jet for the `index`-th variable.
    pub fn variable(value: f64, index: usize, dim: usize) -> Self {
        let mut gradient = DVec::zeros(dim);
        gradient[index] = 1.0;
        Jet2 {
            value,
            gradient,
            hessian: DMat::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn add(&self, rhs: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value + rhs.value,
            gradient: &self.gradient + &rhs.gradient,
            hessian: &self.hessian + &rhs.hessian,
        }
    }

    pub fn sub(&self, rhs: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value - rhs.value,
            gradient: &self.gradient - &rhs.gradient,
            hessian: &self.hessian - &rhs.hessian,
        }
    }

    pub fn neg(&self) -> Jet2 {
        Jet2 {
            value: -self.value,
            gradient: -&self.gradient,
            hessian: -&self.hessian,
        }
    }

    pub fn mul(&self, rhs: &Jet2) -> Jet2 {
        let outer = &self.gradient * rhs.gradient.transpose();
        let hessian =
            &self.hessian * rhs.value + &rhs.hessian * self.value + &outer + outer.transpose();
        Jet2 {
            value: self.value * rhs.value,
            gradient: &self.gradient * rhs.value + &rhs.gradient * self.value,
            hessian,
        }
    }

    /// Reciprocal; caller guarantees a nonzero value.
    pub fn recip(&self) -> Jet2 {
        let v = self.value;
        let inv = 1.0 / v;
        let inv2 = inv * inv;
        let outer = &self.gradient * self.gradient.transpose();
        Jet2 {
            value: inv,
            gradient: &self.gradient * (-inv2),
            hessian: &self.hessian * (-inv2) + outer * (2.0 * inv2 * inv),
        }
    }

    /// Integer power with the direct chain rule; caller guards `0^k`, k < 0.
    pub fn powi(&self, k: i32) -> Jet2 {
        match k {
            0 => Jet2::constant(1.0, self.dim()),
            1 => self.clone(),
            _ => {
                let kf = k as f64;
                let v1 = self.value.powi(k - 1);
                let v2 = self.value.powi(k - 2);
                let outer = &self.gradient * self.gradient.transpose();
                Jet2 {
                    value: self.value.powi(k),
                    gradient: &self.gradient * (kf * v1),
                    hessian: &self.hessian * (kf * v1) + outer * (kf * (kf - 1.0) * v2),
                }
            }
        }
    }

    /// Apply a scalar function given its value and first two derivatives at
    /// `self.value`.
    pub fn chain(&self, value: f64, d1: f64, d2: f64) -> Jet2 {
        let outer = &self.gradient * self.gradient.transpose();
        Jet2 {
            value,
            gradient: &self.gradient * d1,
            hessian: &self.hessian * d1 + outer * d2,
        }
    }
}
