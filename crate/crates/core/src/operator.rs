//! Constitutive law of the double-phase equation.
//!
//! The flux is `A(x, ξ) = |ξ|^{p-2} ξ + a(x) |ξ|^{q-2} ξ` and the density is
//! `H(x, ξ) = |ξ|^p + a(x) |ξ|^q`. Newton-based solvers work with the
//! regularized modulus `m_δ(ξ) = (|ξ|² + δ²)^{1/2}` in place of `|ξ|`; every
//! measurement (energies, modulars) uses `δ = 0`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Physical point. One-dimensional problems use `[x, 0.0]`.
pub type Point = [f64; 2];

/// Gradient-like vector in one or two dimensions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradVec {
    c: [f64; 2],
    dim: usize,
}

impl GradVec {
    /// Builds a vector from one or two components.
    ///
    /// Panics if `components` does not have length 1 or 2.
    pub fn new(components: &[f64]) -> Self {
        match *components {
            [x] => Self::d1(x),
            [x, y] => Self::d2(x, y),
            _ => panic!("GradVec supports dimension 1 or 2, got {}", components.len()),
        }
    }

    pub fn d1(x: f64) -> Self {
        GradVec { c: [x, 0.0], dim: 1 }
    }

    pub fn d2(x: f64, y: f64) -> Self {
        GradVec { c: [x, y], dim: 2 }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 1 || dim == 2, "dimension must be 1 or 2");
        GradVec { c: [0.0; 2], dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[f64] {
        &self.c[..self.dim]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.components()[i]
    }

    pub fn norm_sq(&self) -> f64 {
        self.c[0] * self.c[0] + self.c[1] * self.c[1]
    }

    pub fn norm(&self) -> f64 {
        self.c[0].hypot(self.c[1])
    }

    pub fn dot(&self, other: &GradVec) -> f64 {
        self.c[0] * other.c[0] + self.c[1] * other.c[1]
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }
}

impl Add for GradVec {
    type Output = GradVec;
    fn add(self, rhs: GradVec) -> GradVec {
        GradVec {
            c: [self.c[0] + rhs.c[0], self.c[1] + rhs.c[1]],
            dim: self.dim.max(rhs.dim),
        }
    }
}

impl Sub for GradVec {
    type Output = GradVec;
    fn sub(self, rhs: GradVec) -> GradVec {
        GradVec {
            c: [self.c[0] - rhs.c[0], self.c[1] - rhs.c[1]],
            dim: self.dim.max(rhs.dim),
        }
    }
}

impl Mul<f64> for GradVec {
    type Output = GradVec;
    fn mul(self, s: f64) -> GradVec {
        GradVec {
            c: [self.c[0] * s, self.c[1] * s],
            dim: self.dim,
        }
    }
}

impl Neg for GradVec {
    type Output = GradVec;
    fn neg(self) -> GradVec {
        self * -1.0
    }
}

/// Symmetric `n × n` matrix, `n ∈ {1, 2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMatrix {
    m: [[f64; 2]; 2],
    dim: usize,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 1 || dim == 2, "dimension must be 1 or 2");
        SymMatrix { m: [[0.0; 2]; 2], dim }
    }

    pub fn identity(dim: usize) -> Self {
        let mut s = Self::zeros(dim);
        for i in 0..dim {
            s.m[i][i] = 1.0;
        }
        s
    }

    pub fn d1(xx: f64) -> Self {
        SymMatrix {
            m: [[xx, 0.0], [0.0, 0.0]],
            dim: 1,
        }
    }

    pub fn d2(xx: f64, xy: f64, yy: f64) -> Self {
        SymMatrix {
            m: [[xx, xy], [xy, yy]],
            dim: 2,
        }
    }

    /// Rank-one matrix `v ⊗ v`.
    pub fn outer(v: &GradVec) -> Self {
        let c = v.c;
        SymMatrix {
            m: [[c[0] * c[0], c[0] * c[1]], [c[1] * c[0], c[1] * c[1]]],
            dim: v.dim,
        }
        .truncated()
    }

    fn truncated(mut self) -> Self {
        if self.dim == 1 {
            self.m[0][1] = 0.0;
            self.m[1][0] = 0.0;
            self.m[1][1] = 0.0;
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.dim && j < self.dim, "index out of range");
        self.m[i][j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.m[i][i]).sum()
    }

    /// `⟨M v, v⟩`.
    pub fn quad(&self, v: &GradVec) -> f64 {
        let c = v.c;
        self.m[0][0] * c[0] * c[0] + 2.0 * self.m[0][1] * c[0] * c[1] + self.m[1][1] * c[1] * c[1]
    }

    pub fn apply(&self, v: &GradVec) -> GradVec {
        let c = v.c;
        GradVec {
            c: [
                self.m[0][0] * c[0] + self.m[0][1] * c[1],
                self.m[1][0] * c[0] + self.m[1][1] * c[1],
            ],
            dim: self.dim,
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.m[0][1] - self.m[1][0]).abs() <= tol
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn plus(&self, other: &SymMatrix) -> Self {
        let mut out = *self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] += other.m[i][j];
            }
        }
        out.dim = self.dim.max(other.dim);
        out
    }
}

type ScalarFn = dyn Fn(Point) -> f64 + Send + Sync;
type VectorFn = dyn Fn(Point) -> [f64; 2] + Send + Sync;

/// The coefficient `a(x) ≥ 0` in front of the `q`-phase.
#[derive(Clone)]
pub enum CoefficientField {
    Constant(f64),
    /// Closure for `a(x)` together with its analytic gradient.
    Analytic {
        value: Arc<ScalarFn>,
        gradient: Arc<VectorFn>,
    },
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientField::Constant(a) => write!(f, "Constant({a})"),
            CoefficientField::Analytic { .. } => write!(f, "Analytic(..)"),
        }
    }
}

impl CoefficientField {
    pub fn constant(a0: f64) -> Self {
        CoefficientField::Constant(a0)
    }

    pub fn analytic<F, G>(value: F, gradient: G) -> Self
    where
        F: Fn(Point) -> f64 + Send + Sync + 'static,
        G: Fn(Point) -> [f64; 2] + Send + Sync + 'static,
    {
        CoefficientField::Analytic {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CoefficientField::Constant(_))
    }

    /// Evaluates `a(x)`, rejecting negative or non-finite values.
    pub fn eval(&self, x: Point) -> Result<f64> {
        let value = match self {
            CoefficientField::Constant(a) => *a,
            CoefficientField::Analytic { value, .. } => value(x),
        };
        if value.is_finite() && value >= 0.0 {
            Ok(value)
        } else {
            Err(Error::Coefficient {
                x: x[0],
                y: x[1],
                value,
            })
        }
    }

    pub fn gradient(&self, x: Point) -> [f64; 2] {
        match self {
            CoefficientField::Constant(_) => [0.0; 2],
            CoefficientField::Analytic { gradient, .. } => gradient(x),
        }
    }
}

/// Exponents, Hölder exponent, coefficient and flux regularization.
#[derive(Clone, Debug)]
pub struct DoublePhaseParams {
    p: f64,
    q: f64,
    alpha: f64,
    coeff: CoefficientField,
    delta: f64,
}

impl DoublePhaseParams {
    pub fn new(p: f64, q: f64, alpha: f64, coeff: CoefficientField) -> Result<Self> {
        if !(p.is_finite() && q.is_finite()) || !(p > 1.0 && p <= q) {
            return Err(Error::InvalidParams(format!(
                "exponents must satisfy 1 < p <= q < inf, got p = {p}, q = {q}"
            )));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "Hölder exponent must lie in (0, 1], got {alpha}"
            )));
        }
        if let CoefficientField::Constant(a0) = coeff {
            if !(a0.is_finite() && a0 >= 0.0) {
                return Err(Error::InvalidParams(format!("a(x) >= 0 required, got {a0}")));
            }
        }
        Ok(DoublePhaseParams {
            p,
            q,
            alpha,
            coeff,
            delta: 0.0,
        })
    }

    /// Convenience constructor for a constant coefficient.
    pub fn constant(p: f64, q: f64, a0: f64) -> Result<Self> {
        Self::new(p, q, 1.0, CoefficientField::Constant(a0))
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidParams(format!("delta >= 0 required, got {delta}")));
        }
        self.delta = delta;
        Ok(self)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn coeff(&self) -> &CoefficientField {
        &self.coeff
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExponentMode {
    /// `q/p ≤ 1 + α/n`.
    Standard,
    /// `q/p ≤ min{p, 1 + α/n}`, the bound needed for the vanishing-source limit.
    RegularizedLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExponentVerdict {
    pub passed: bool,
    pub ratio: f64,
    pub bound: f64,
    /// Name of the first violated bound, if any.
    pub violated: Option<&'static str>,
    pub explanation: String,
}

pub fn validate_exponents(params: &DoublePhaseParams, n: usize, mode: ExponentMode) -> ExponentVerdict {
    let ratio = params.q / params.p;
    let gap_bound = 1.0 + params.alpha / n as f64;
    // small slack so that q/p computed in floating point is not rejected at equality
    let slack = 1e-14;
    if ratio > gap_bound * (1.0 + slack) {
        return ExponentVerdict {
            passed: false,
            ratio,
            bound: gap_bound,
            violated: Some("q/p <= 1 + alpha/n"),
            explanation: format!("q/p = {ratio} exceeds 1 + alpha/n = {gap_bound}"),
        };
    }
    if mode == ExponentMode::RegularizedLimit && ratio > params.p * (1.0 + slack) {
        return ExponentVerdict {
            passed: false,
            ratio,
            bound: params.p.min(gap_bound),
            violated: Some("q/p <= p"),
            explanation: format!("q/p = {ratio} exceeds p = {}", params.p),
        };
    }
    let bound = match mode {
        ExponentMode::Standard => gap_bound,
        ExponentMode::RegularizedLimit => gap_bound.min(params.p),
    };
    ExponentVerdict {
        passed: true,
        ratio,
        bound,
        violated: None,
        explanation: format!("q/p = {ratio} <= {bound}"),
    }
}

/// `H(x, ξ) = |ξ|^p + a(x)|ξ|^q`, never regularized.
pub fn h_eval(params: &DoublePhaseParams, x: Point, xi: &GradVec) -> Result<f64> {
    let a = params.coeff.eval(x)?;
    Ok(density(params.p, params.q, a, xi.norm()))
}

pub(crate) fn density(p: f64, q: f64, a: f64, t: f64) -> f64 {
    let t = t.abs();
    t.powf(p) + a * t.powf(q)
}

/// Regularized flux `m_δ^{p-2} ξ + a(x) m_δ^{q-2} ξ`.
pub fn a_flux(params: &DoublePhaseParams, x: Point, xi: &GradVec) -> Result<GradVec> {
    let a = params.coeff.eval(x)?;
    Ok(flux_with(params.p, params.q, a, params.delta, xi))
}

pub(crate) fn flux_with(p: f64, q: f64, a: f64, delta: f64, xi: &GradVec) -> GradVec {
    let m2 = xi.norm_sq() + delta * delta;
    if m2 == 0.0 {
        return GradVec::zeros(xi.dim());
    }
    let m = m2.sqrt();
    *xi * flux_modulus(p, q, a, m)
}

/// Scalar factor `m^{p-2} + a m^{q-2}`.
#[inline]
pub(crate) fn flux_modulus(p: f64, q: f64, a: f64, m: f64) -> f64 {
    let qp = if a == 0.0 { 0.0 } else { a * m.powf(q - 2.0) };
    m.powf(p - 2.0) + qp
}

/// `∂A/∂ξ`.
pub fn a_flux_jacobian(params: &DoublePhaseParams, x: Point, xi: &GradVec) -> Result<SymMatrix> {
    let a = params.coeff.eval(x)?;
    jacobian_with(params.p, params.q, a, params.delta, xi)
}

pub(crate) fn jacobian_with(p: f64, q: f64, a: f64, delta: f64, xi: &GradVec) -> Result<SymMatrix> {
    let dim = xi.dim();
    let m2 = xi.norm_sq() + delta * delta;
    if m2 == 0.0 {
        let singular = p < 2.0 || (a > 0.0 && q < 2.0);
        if singular {
            return Err(Error::SingularJacobian);
        }
        // limit at the origin: identity for exponent 2, zero above
        let mut s = 0.0;
        if p == 2.0 {
            s += 1.0;
        }
        if q == 2.0 {
            s += a;
        }
        return Ok(SymMatrix::identity(dim).scaled(s));
    }
    let m = m2.sqrt();
    let iso_p = m.powf(p - 2.0);
    let iso_q = if a == 0.0 { 0.0 } else { a * m.powf(q - 2.0) };
    let rank_one = iso_p * (p - 2.0) / m2 + iso_q * (q - 2.0) / m2;
    Ok(SymMatrix::identity(dim)
        .scaled(iso_p + iso_q)
        .plus(&SymMatrix::outer(xi).scaled(rank_one)))
}

/// `⟨A(x, ξ1) − A(x, ξ2), ξ1 − ξ2⟩` for the unregularized flux.
pub fn monotonicity_gap(params: &DoublePhaseParams, x: Point, xi1: &GradVec, xi2: &GradVec) -> Result<f64> {
    let a = params.coeff.eval(x)?;
    let f1 = flux_with(params.p, params.q, a, 0.0, xi1);
    let f2 = flux_with(params.p, params.q, a, 0.0, xi2);
    Ok((f1 - f2).dot(&(*xi1 - *xi2)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VectorInequality {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Elementary vector inequality for `ξ ↦ |ξ|^{t-2} ξ`, checked as an upper bound.
///
/// For `t ≥ 2` the bound is `(t−1)|ξ1−ξ2|(|ξ1|^{t−2}+|ξ2|^{t−2})`; for `1 < t < 2`
/// it is `2^{2−t}|ξ1−ξ2|^{t−1}`.
pub fn vector_inequality_check(t: f64, xi1: &GradVec, xi2: &GradVec) -> VectorInequality {
    assert!(t > 1.0, "exponent must exceed 1");
    let power_map = |v: &GradVec| {
        let r = v.norm();
        if r == 0.0 {
            GradVec::zeros(v.dim())
        } else {
            *v * r.powf(t - 2.0)
        }
    };
    let lhs = (power_map(xi1) - power_map(xi2)).norm();
    let diff = (*xi1 - *xi2).norm();
    let rhs = if t >= 2.0 {
        (t - 1.0) * diff * (xi1.norm().powf(t - 2.0) + xi2.norm().powf(t - 2.0))
    } else {
        2f64.powf(2.0 - t) * diff.powf(t - 1.0)
    };
    VectorInequality {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, q: f64, a: f64) -> DoublePhaseParams {
        DoublePhaseParams::constant(p, q, a).unwrap()
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(DoublePhaseParams::constant(1.0, 2.0, 0.0).is_err());
        assert!(DoublePhaseParams::constant(3.0, 2.0, 0.0).is_err());
        assert!(DoublePhaseParams::constant(2.0, 2.0, -1.0).is_err());
        assert!(DoublePhaseParams::new(2.0, 2.0, 0.0, CoefficientField::Constant(1.0)).is_err());
        assert!(params(2.0, 2.0, 0.0).with_delta(-1.0).is_err());
    }

    #[test]
    fn exponent_verdicts() {
        let v = validate_exponents(&params(2.0, 2.5, 1.0), 2, ExponentMode::Standard);
        assert!(v.passed);
        assert!((v.ratio - 1.25).abs() < 1e-15);
        for n in 1..=3 {
            for mode in [ExponentMode::Standard, ExponentMode::RegularizedLimit] {
                assert!(validate_exponents(&params(1.7, 1.7, 1.0), n, mode).passed);
            }
        }
        let v = validate_exponents(&params(2.0, 4.0, 1.0), 3, ExponentMode::Standard);
        assert!(!v.passed);
        assert_eq!(v.violated, Some("q/p <= 1 + alpha/n"));
        // passes the gap bound but not q/p <= p
        let v = validate_exponents(&params(1.1, 1.3, 1.0), 1, ExponentMode::RegularizedLimit);
        assert!(!v.passed);
        assert_eq!(v.violated, Some("q/p <= p"));
        assert!(validate_exponents(&params(1.1, 1.3, 1.0), 1, ExponentMode::Standard).passed);
    }

    #[test]
    fn density_values() {
        let x = [0.3, 0.1];
        assert_eq!(h_eval(&params(2.0, 4.0, 1.0), x, &GradVec::d2(0.0, 0.0)).unwrap(), 0.0);
        let h = h_eval(&params(2.0, 4.0, 1.0), x, &GradVec::d2(0.6, 0.8)).unwrap();
        assert!((h - 2.0).abs() < 1e-14);
        let h = h_eval(&params(3.0, 3.0, 0.5), x, &GradVec::d1(-2.0)).unwrap();
        assert!((h - 12.0).abs() < 1e-12);
    }

    #[test]
    fn flux_values() {
        let x = [0.0, 0.0];
        let z = a_flux(&params(1.5, 3.0, 1.0), x, &GradVec::d2(0.0, 0.0)).unwrap();
        assert_eq!(z, GradVec::zeros(2));
        let xi = GradVec::d2(0.3, -1.2);
        assert_eq!(a_flux(&params(2.0, 2.0, 0.0), x, &xi).unwrap(), xi);
        let f = a_flux(&params(2.0, 4.0, 1.0), x, &GradVec::d2(1.0, 0.0)).unwrap();
        assert!((f.get(0) - 2.0).abs() < 1e-15 && f.get(1) == 0.0);
    }

    #[test]
    fn jacobian_values() {
        let x = [0.0, 0.0];
        let j = a_flux_jacobian(&params(2.0, 2.0, 0.0), x, &GradVec::d2(0.4, 0.7)).unwrap();
        assert_eq!(j, SymMatrix::identity(2));
        let j = a_flux_jacobian(&params(4.0, 4.0, 0.0), x, &GradVec::d2(1.0, 0.0)).unwrap();
        assert!((j.get(0, 0) - 3.0).abs() < 1e-14);
        assert!((j.get(1, 1) - 1.0).abs() < 1e-14);
        assert_eq!(j.get(0, 1), 0.0);
        assert!(matches!(
            a_flux_jacobian(&params(1.5, 2.0, 0.0), x, &GradVec::d2(0.0, 0.0)),
            Err(Error::SingularJacobian)
        ));
        let reg = params(1.5, 2.0, 0.0).with_delta(1e-3).unwrap();
        assert!(a_flux_jacobian(&reg, x, &GradVec::d2(0.0, 0.0)).is_ok());
    }

    #[test]
    fn gap_and_inequality_examples() {
        let x = [0.0, 0.0];
        let xi = GradVec::d2(0.2, 0.9);
        assert_eq!(monotonicity_gap(&params(1.5, 3.0, 1.0), x, &xi, &xi).unwrap(), 0.0);
        let eta = GradVec::d2(-0.5, 0.1);
        let g = monotonicity_gap(&params(2.0, 2.0, 0.0), x, &xi, &eta).unwrap();
        assert!((g - (xi - eta).norm_sq()).abs() < 1e-14);

        let same = vector_inequality_check(1.5, &xi, &xi);
        assert_eq!(same.lhs, 0.0);
        assert!(same.holds);
        let c = vector_inequality_check(3.0, &GradVec::d2(1.0, 0.0), &GradVec::d2(0.0, 0.0));
        assert!((c.lhs - 1.0).abs() < 1e-15 && (c.rhs - 2.0).abs() < 1e-15 && c.holds);
    }

    #[test]
    fn variable_coefficient_rejects_negative_values() {
        let coeff = CoefficientField::analytic(|x| x[0] - 0.5, |_| [1.0, 0.0]);
        let params = DoublePhaseParams::new(2.0, 3.0, 1.0, coeff).unwrap();
        assert!(h_eval(&params, [0.2, 0.0], &GradVec::d1(1.0)).is_err());
        assert!(h_eval(&params, [0.7, 0.0], &GradVec::d1(1.0)).is_ok());
    }
}
