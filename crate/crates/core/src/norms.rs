//! Musielak-Orlicz modulars and Luxemburg norms of P1 fields.
//!
//! Integrals use the one-point barycentric rule: the integrand is evaluated at
//! each element centroid, with `u` replaced by its centroid value and `Du` by
//! the (elementwise constant) P1 gradient.

use crate::error::{Error, Result};
use crate::mesh::NodalField;
use crate::operator::{density, DoublePhaseParams};

/// `∫_Ω H(x, ·) dx` as computed by the grid quadrature.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ModularValue(f64);

impl ModularValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Whether a norm or modular measures the field values or its gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measured {
    Values,
    Gradient,
}

/// Per-element `(weight, a(x_c), |integrand argument|)`.
struct Samples {
    p: f64,
    q: f64,
    items: Vec<(f64, f64, f64)>,
}

impl Samples {
    fn collect(field: &NodalField, params: &DoublePhaseParams, which: Measured, min_depth: usize) -> Result<Self> {
        let grid = field.grid();
        let values = field.values();
        let mut items = Vec::with_capacity(grid.elements().len());
        for e in grid.elements() {
            if min_depth > 0 && e.nodes().iter().any(|&n| grid.depth(n) < min_depth) {
                continue;
            }
            let a = params.coeff().eval(e.centroid())?;
            let t = match which {
                Measured::Values => e.centroid_value(values).abs(),
                Measured::Gradient => e.gradient(values).norm(),
            };
            items.push((e.measure(), a, t));
        }
        Ok(Samples {
            p: params.p(),
            q: params.q(),
            items,
        })
    }

    fn modular_scaled(&self, inv_lambda: f64) -> f64 {
        self.items
            .iter()
            .map(|&(w, a, t)| w * density(self.p, self.q, a, t * inv_lambda))
            .sum()
    }

    fn is_zero(&self) -> bool {
        self.items.iter().all(|&(w, _, t)| w * t == 0.0)
    }
}

/// `ϱ_H(u) = ∫ |u|^p + a(x)|u|^q dx`.
pub fn modular(field: &NodalField, params: &DoublePhaseParams) -> Result<ModularValue> {
    let s = Samples::collect(field, params, Measured::Values, 0)?;
    Ok(ModularValue(s.modular_scaled(1.0)))
}

/// `ϱ_H(Du) = ∫ |Du|^p + a(x)|Du|^q dx`.
pub fn gradient_modular(field: &NodalField, params: &DoublePhaseParams) -> Result<ModularValue> {
    let s = Samples::collect(field, params, Measured::Gradient, 0)?;
    Ok(ModularValue(s.modular_scaled(1.0)))
}

/// Gradient modular restricted to elements whose nodes all lie at least
/// `min_depth` nodes away from the boundary.
pub fn gradient_modular_interior(field: &NodalField, params: &DoublePhaseParams, min_depth: usize) -> Result<ModularValue> {
    let s = Samples::collect(field, params, Measured::Gradient, min_depth)?;
    Ok(ModularValue(s.modular_scaled(1.0)))
}

const MAX_BRACKET_STEPS: usize = 200;
const BISECTION_STEPS: usize = 60;

/// `inf{λ > 0 : ϱ_H(u/λ) ≤ 1}` by bracketing from `λ = 1` and bisection.
pub fn luxemburg_norm(field: &NodalField, params: &DoublePhaseParams, which: Measured) -> Result<f64> {
    let s = Samples::collect(field, params, which, 0)?;
    luxemburg_from_samples(&s)
}

fn luxemburg_from_samples(s: &Samples) -> Result<f64> {
    if s.is_zero() {
        return Ok(0.0);
    }
    let rho = |lambda: f64| s.modular_scaled(1.0 / lambda);
    // lo: ϱ(u/lo) ≥ 1, hi: ϱ(u/hi) ≤ 1
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    let r1 = rho(1.0);
    if !r1.is_finite() {
        return Err(Error::BracketFailure);
    }
    let mut steps = 0;
    if r1 > 1.0 {
        while rho(hi) > 1.0 {
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > MAX_BRACKET_STEPS {
                return Err(Error::BracketFailure);
            }
        }
    } else {
        while rho(lo) < 1.0 {
            hi = lo;
            lo *= 0.5;
            steps += 1;
            if steps > MAX_BRACKET_STEPS {
                return Err(Error::BracketFailure);
            }
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rho(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick the endpoint whose modular is closer to the unit level
    let (rl, rh) = (rho(lo), rho(hi));
    Ok(if (rl - 1.0).abs() < (rh - 1.0).abs() { lo } else { hi })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormModularCheck {
    pub norm: f64,
    pub modular: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

/// Checks `min{‖u‖^p, ‖u‖^q} ≤ ϱ_H(u) ≤ max{‖u‖^p, ‖u‖^q}` with relative slack `1e-9`.
pub fn norm_modular_bounds_check(field: &NodalField, params: &DoublePhaseParams, which: Measured) -> Result<NormModularCheck> {
    let s = Samples::collect(field, params, which, 0)?;
    let modular = s.modular_scaled(1.0);
    let norm = luxemburg_from_samples(&s)?;
    let (a, b) = (norm.powf(params.p()), norm.powf(params.q()));
    let (low, high) = (a.min(b), a.max(b));
    let slack = 1e-9;
    Ok(NormModularCheck {
        norm,
        modular,
        lower_ok: low <= modular * (1.0 + slack) + f64::MIN_POSITIVE,
        upper_ok: modular <= high * (1.0 + slack) + f64::MIN_POSITIVE,
    })
}

/// `‖u‖ / ‖Du‖` for a field vanishing on the boundary; 0 for the zero field.
pub fn poincare_ratio(field: &NodalField, params: &DoublePhaseParams) -> Result<f64> {
    let grid = field.grid();
    for &n in grid.boundary_nodes() {
        let v = field.value(n);
        if v != 0.0 {
            return Err(Error::NotVanishingOnBoundary { node: n, value: v });
        }
    }
    let grad = luxemburg_norm(field, params, Measured::Gradient)?;
    if grad == 0.0 {
        return Ok(0.0);
    }
    Ok(luxemburg_norm(field, params, Measured::Values)? / grad)
}
