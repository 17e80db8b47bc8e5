//! Viscosity side: the expanded non-divergence operator, a monotone
//! finite-difference Gauss-Seidel solver, touch tests and the doubling penalty.
//!
//! The operator is
//!
//! ```text
//! F(x, η, X) = −|η|^{p−2}(tr X + (p−2)⟨Xe, e⟩)
//!              − a(x)|η|^{q−2}(tr X + (q−2)⟨Xe, e⟩)
//!              − |η|^{q−2} ⟨η, ∇a(x)⟩,            e = η/|η|.
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{Grid, NodalField};
use crate::operator::{flux_with, DoublePhaseParams, GradVec, Point, SymMatrix};
use crate::variational::{boundary_start, harmonic_extension, ProblemSpec, SolveReport};

/// Point, gradient and Hessian of a test function.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrderJet {
    x: Point,
    eta: GradVec,
    hess: SymMatrix,
}

impl SecondOrderJet {
    pub fn new(x: Point, eta: GradVec, hess: SymMatrix) -> Result<Self> {
        if eta.dim() != hess.dim() {
            return Err(Error::InvalidParams("jet gradient and Hessian dimensions differ".into()));
        }
        if !hess.is_symmetric(1e-12) {
            return Err(Error::InvalidParams("jet Hessian is not symmetric".into()));
        }
        Ok(SecondOrderJet { x, eta, hess })
    }

    pub fn x(&self) -> Point {
        self.x
    }

    pub fn eta(&self) -> &GradVec {
        &self.eta
    }

    pub fn hessian(&self) -> &SymMatrix {
        &self.hess
    }
}

/// One phase `−|η|^{r−2}(tr X + (r−2)⟨Xe, e⟩)`; `None` when undefined at `η = 0`.
fn phase_term(r: f64, eta: &GradVec, hess: &SymMatrix) -> Option<f64> {
    let t = eta.norm();
    if t == 0.0 {
        return if r > 2.0 {
            Some(0.0)
        } else if r == 2.0 {
            Some(-hess.trace())
        } else {
            None
        };
    }
    let e = *eta * (1.0 / t);
    Some(-t.powf(r - 2.0) * (hess.trace() + (r - 2.0) * hess.quad(&e)))
}

/// Evaluates `F(x, η, X)`.
///
/// At `η = 0` the degenerate phases (`r > 2`) vanish, `r = 2` gives `−tr X`,
/// and a singular phase (`r < 2` with nonzero weight) is an error.
pub fn nondiv_eval(params: &DoublePhaseParams, jet: &SecondOrderJet) -> Result<f64> {
    let a = params.coeff().eval(jet.x)?;
    let t = jet.eta.norm();
    let f1 = phase_term(params.p(), &jet.eta, &jet.hess).ok_or(Error::DegenerateGradient(t))?;
    let f2 = if a == 0.0 {
        0.0
    } else {
        a * phase_term(params.q(), &jet.eta, &jet.hess).ok_or(Error::DegenerateGradient(t))?
    };
    let f3 = if t == 0.0 {
        0.0
    } else {
        let ga = params.coeff().gradient(jet.x);
        let dot: f64 = jet.eta.components().iter().zip(ga).map(|(e, g)| e * g).sum();
        -t.powf(params.q() - 2.0) * dot
    };
    Ok(f1 + f2 + f3)
}

/// A `C²` function with exact derivatives.
pub trait SmoothFunction {
    fn dim(&self) -> usize;
    fn value(&self, x: Point) -> f64;
    fn gradient(&self, x: Point) -> GradVec;
    fn hessian(&self, x: Point) -> SymMatrix;

    fn jet(&self, x: Point) -> SecondOrderJet {
        SecondOrderJet {
            x,
            eta: self.gradient(x),
            hess: self.hessian(x),
        }
    }
}

/// `φ(x) = c + b·(x − x₀) + ½ (x − x₀)ᵀ M (x − x₀)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub center: Point,
    pub c: f64,
    pub b: GradVec,
    pub m: SymMatrix,
}

impl Quadratic {
    fn offset(&self, x: Point) -> GradVec {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        GradVec::new(&d[..self.b.dim()])
    }
}

impl SmoothFunction for Quadratic {
    fn dim(&self) -> usize {
        self.b.dim()
    }

    fn value(&self, x: Point) -> f64 {
        let d = self.offset(x);
        self.c + self.b.dot(&d) + 0.5 * self.m.quad(&d)
    }

    fn gradient(&self, x: Point) -> GradVec {
        self.b + self.m.apply(&self.offset(x))
    }

    fn hessian(&self, _x: Point) -> SymMatrix {
        self.m
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub divergence: f64,
    pub nondivergence: f64,
    /// `|divergence − nondivergence| / (1 + |nondivergence|)`.
    pub gap: f64,
}

const FD_STEP: f64 = 1e-3;

/// Compares `−div A(x, ∇φ)` (fourth-order central differences of the exact
/// flux field, `δ = 0`) with `F` on the exact jet of `φ` at `x`.
pub fn consistency_check(params: &DoublePhaseParams, phi: &dyn SmoothFunction, x: Point) -> Result<ConsistencyReport> {
    let g0 = phi.gradient(x);
    if g0.norm() == 0.0 {
        return Err(Error::DegenerateGradient(0.0));
    }
    let flux = |y: Point| -> Result<GradVec> {
        let a = params.coeff().eval(y)?;
        Ok(flux_with(params.p(), params.q(), a, 0.0, &phi.gradient(y)))
    };
    let h = FD_STEP;
    let mut div = 0.0;
    for k in 0..phi.dim() {
        let at = |s: f64| {
            let mut y = x;
            y[k] += s * h;
            flux(y).map(|f| f.get(k))
        };
        div += (-at(2.0)? + 8.0 * at(1.0)? - 8.0 * at(-1.0)? + at(-2.0)?) / (12.0 * h);
    }
    let divergence = -div;
    let nondivergence = nondiv_eval(params, &phi.jet(x))?;
    Ok(ConsistencyReport {
        divergence,
        nondivergence,
        gap: (divergence - nondivergence).abs() / (1.0 + nondivergence.abs()),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViscosityOptions {
    /// Stop once the largest nodal change in a sweep is at most this.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Run with a non-constant coefficient anyway; the report is marked experimental.
    pub allow_variable_coefficient: bool,
    /// Gradient floor `δ_v`; defaults to the largest grid spacing.
    pub gradient_floor: Option<f64>,
}

impl Default for ViscosityOptions {
    fn default() -> Self {
        ViscosityOptions {
            tolerance: 1e-10,
            max_sweeps: 100_000,
            allow_variable_coefficient: false,
            gradient_floor: None,
        }
    }
}

/// Frozen local stencil at one node: `u_i = (Σ w_k u_k + rhs) / diag`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalStencil {
    pub diag: f64,
    /// `(neighbor node, weight)`.
    pub weights: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// The monotone finite-difference discretization of `F(x, Du, D²u) = ε`.
///
/// The gradient is centered and floored at `δ_v` in modulus; the mixed
/// derivative uses the seven-point stencil aligned with the sign of the
/// off-diagonal coefficient, so neighbor weights are nonnegative whenever the
/// coefficient matrix is diagonally dominant.
pub struct FdScheme<'a> {
    grid: &'a Grid,
    p: f64,
    q: f64,
    a_node: Vec<f64>,
    grad_a: Vec<[f64; 2]>,
    epsilon: f64,
    floor: f64,
}

impl<'a> FdScheme<'a> {
    pub fn new(spec: &'a ProblemSpec, opts: &ViscosityOptions) -> Result<Self> {
        let grid = spec.grid().as_ref();
        let coeff = spec.params().coeff();
        let mut a_node = Vec::with_capacity(grid.node_count());
        let mut grad_a = Vec::with_capacity(grid.node_count());
        for i in 0..grid.node_count() {
            let x = grid.node_coord(i);
            a_node.push(coeff.eval(x)?);
            grad_a.push(coeff.gradient(x));
        }
        Ok(FdScheme {
            grid,
            p: spec.params().p(),
            q: spec.params().q(),
            a_node,
            grad_a,
            epsilon: spec.epsilon(),
            floor: opts.gradient_floor.unwrap_or_else(|| grid.h()),
        })
    }

    /// Stencil at interior `node` with coefficients frozen at the current neighbors.
    pub fn stencil(&self, u: &[f64], node: usize) -> Result<LocalStencil> {
        let st = self.local(u, node);
        Ok(LocalStencil {
            diag: st.diag,
            weights: st.weights[..st.len].to_vec(),
            rhs: st.rhs,
        })
    }

    fn local(&self, u: &[f64], node: usize) -> Frozen {
        let g = self.grid;
        let (ix, iy) = g.node_ij(node);
        let [hx, hy] = g.spacing();
        let a = self.a_node[node];
        let (p, q) = (self.p, self.q);
        let at = |dx: i64, dy: i64| g.node_index((ix as i64 + dx) as usize, (iy as i64 + dy) as usize);
        let weight = |r: f64, rho: f64| if r == 2.0 { 1.0 } else { rho.powf(r - 2.0) };

        if g.dim() == 1 {
            let (w, e) = (at(-1, 0), at(1, 0));
            let eta = (u[e] - u[w]) / (2.0 * hx);
            let rho = eta.abs().max(self.floor);
            let c = weight(p, rho) * (p - 1.0) + if a == 0.0 { 0.0 } else { a * weight(q, rho) * (q - 1.0) };
            let f3 = -weight(q, rho) * eta * self.grad_a[node][0];
            let s = c / (hx * hx);
            let mut weights = [(0, 0.0); 6];
            weights[0] = (w, s);
            weights[1] = (e, s);
            return Frozen {
                diag: 2.0 * s,
                weights,
                len: 2,
                rhs: self.epsilon - f3,
            };
        }

        let (w, e, s, n) = (at(-1, 0), at(1, 0), at(0, -1), at(0, 1));
        let eta = [(u[e] - u[w]) / (2.0 * hx), (u[n] - u[s]) / (2.0 * hy)];
        let t = (eta[0] * eta[0] + eta[1] * eta[1]).sqrt();
        let rho = t.max(self.floor);
        // e eᵀ, with the isotropic average I/2 at a vanishing gradient
        let ee = if t > 0.0 {
            let v = [eta[0] / t, eta[1] / t];
            [v[0] * v[0], v[0] * v[1], v[1] * v[1]]
        } else {
            [0.5, 0.0, 0.5]
        };
        let (wp, wq) = (weight(p, rho), if a == 0.0 { 0.0 } else { a * weight(q, rho) });
        let cxx = wp * (1.0 + (p - 2.0) * ee[0]) + wq * (1.0 + (q - 2.0) * ee[0]);
        let cyy = wp * (1.0 + (p - 2.0) * ee[2]) + wq * (1.0 + (q - 2.0) * ee[2]);
        let cxy = wp * (p - 2.0) * ee[1] + wq * (q - 2.0) * ee[1];
        let f3 = -weight(q, rho) * (eta[0] * self.grad_a[node][0] + eta[1] * self.grad_a[node][1]);

        let (ax, ay, axy) = (cxx / (hx * hx), cyy / (hy * hy), cxy.abs() / (hx * hy));
        let (d1, d2) = if cxy >= 0.0 { (at(1, 1), at(-1, -1)) } else { (at(-1, 1), at(1, -1)) };
        Frozen {
            diag: 2.0 * ax + 2.0 * ay - 2.0 * axy,
            weights: [
                (w, ax - axy),
                (e, ax - axy),
                (s, ay - axy),
                (n, ay - axy),
                (d1, axy),
                (d2, axy),
            ],
            len: 6,
            rhs: self.epsilon - f3,
        }
    }

    /// Value at `node` that solves the local equation with the neighbors held fixed.
    pub fn update(&self, u: &[f64], node: usize) -> Result<f64> {
        let st = self.local(u, node);
        if !(st.diag > 0.0) {
            return Err(Error::NonMonotoneStencil(node));
        }
        let s: f64 = st.weights[..st.len].iter().map(|&(k, w)| w * u[k]).sum();
        Ok((s + st.rhs) / st.diag)
    }
}

struct Frozen {
    diag: f64,
    weights: [(usize, f64); 6],
    len: usize,
    rhs: f64,
}

const STALL_SWEEPS: usize = 200;
const MIN_RELAXATION: f64 = 1.0 / 64.0;

/// Solves `F(x, Du, D²u) = ε` with Dirichlet data by nonlinear Gauss-Seidel
/// (row-major node order), starting from the discrete harmonic extension.
pub fn solve_viscosity(spec: &ProblemSpec, opts: &ViscosityOptions) -> Result<(NodalField, SolveReport)> {
    if spec.obstacle().is_some() {
        return Err(Error::Precondition("the viscosity solver has no obstacle mode".into()));
    }
    let constant = spec.params().coeff().is_constant();
    if !constant && !opts.allow_variable_coefficient {
        return Err(Error::VariableCoefficient);
    }
    spec.check_exponents()?;
    let grid = spec.grid();
    let (mut u, fixed) = boundary_start(spec)?;
    harmonic_extension(grid, &mut u, &fixed)?;
    let scheme = FdScheme::new(spec, opts)?;
    let interior = grid.interior_nodes();
    let mut report = SolveReport {
        experimental: !constant,
        ..Default::default()
    };
    // The local solve is exact, but coupled frozen coefficients can cycle when
    // p < 2. Relax the update whenever the sweep change stops improving.
    let mut omega = 1.0f64;
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    for _ in 0..opts.max_sweeps {
        let mut change = 0.0f64;
        for &i in &interior {
            let v = scheme.update(&u, i)?;
            let step = omega * (v - u[i]);
            change = change.max((v - u[i]).abs());
            u[i] += step;
        }
        report.iterations += 1;
        report.residual_norm = change;
        if !change.is_finite() {
            break;
        }
        if change < best {
            best = change;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_SWEEPS && omega > MIN_RELAXATION {
                omega *= 0.5;
                since_best = 0;
                best = change;
            }
        }
        if change <= opts.tolerance {
            report.converged = true;
            return Ok((NodalField::new(grid.clone(), u)?, report));
        }
    }
    Err(Error::NonConvergence {
        reason: format!(
            "Gauss-Seidel stopped after {} sweeps with last update {:e}",
            report.iterations, report.residual_norm
        ),
        report: Box::new(report),
    })
}

/// Concave quadratics touching the nodal field from below at `node`:
/// `φ(x) = u(x₀) + b·(x − x₀) − (K/2)|x − x₀|²` with `φ < u − 1e-12` at every
/// other node and `K` the smallest value achieving that.
///
/// The first slope is the centered difference gradient; further slopes are
/// seeded perturbations of it by at most 25% per component of its length.
pub fn generate_touching_quadratics(field: &NodalField, node: usize, count: usize, seed: u64) -> Result<Vec<Quadratic>> {
    let grid = field.grid();
    if grid.is_boundary(node) {
        return Err(Error::Precondition(format!("touch node {node} is on the boundary")));
    }
    let g = centered_gradient(field, node);
    if !(g.norm() > 1e-12) {
        return Err(Error::NoTouchFound(node));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = grid.node_coord(node);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let b = if k == 0 {
            g
        } else {
            let mut c = [0.0; 2];
            for (ci, gi) in c.iter_mut().zip(g.components()) {
                *ci = gi + 0.25 * g.norm() * rng.gen_range(-1.0..1.0);
            }
            GradVec::new(&c[..g.dim()])
        };
        let kappa = minimal_curvature(field, node, &b);
        if !kappa.is_finite() {
            return Err(Error::NoTouchFound(node));
        }
        let dim = g.dim();
        out.push(Quadratic {
            center: x0,
            c: field.value(node),
            b,
            m: SymMatrix::identity(dim).scaled(-kappa),
        });
    }
    Ok(out)
}

const TOUCH_MARGIN: f64 = 1e-12;

fn minimal_curvature(field: &NodalField, node: usize, b: &GradVec) -> f64 {
    let grid = field.grid();
    let x0 = grid.node_coord(node);
    let u0 = field.value(node);
    let mut kappa = 0.0f64;
    for m in 0..grid.node_count() {
        if m == node {
            continue;
        }
        let y = grid.node_coord(m);
        let d = GradVec::new(&[y[0] - x0[0], y[1] - x0[1]][..b.dim()]);
        let need = 2.0 * (u0 + b.dot(&d) - field.value(m) + TOUCH_MARGIN) / d.norm_sq();
        kappa = kappa.max(need);
    }
    kappa
}

fn centered_gradient(field: &NodalField, node: usize) -> GradVec {
    let grid = field.grid();
    let (ix, iy) = grid.node_ij(node);
    let [hx, hy] = grid.spacing();
    let u = |a: usize, b: usize| field.value(grid.node_index(a, b));
    let gx = (u(ix + 1, iy) - u(ix - 1, iy)) / (2.0 * hx);
    if grid.dim() == 1 {
        GradVec::d1(gx)
    } else {
        GradVec::d2(gx, (u(ix, iy + 1) - u(ix, iy - 1)) / (2.0 * hy))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TouchReport {
    pub node: usize,
    pub x0: Point,
    pub slope: GradVec,
    pub curvature: f64,
    pub gradient_norm: f64,
    /// Max of `F` over the punctured 1-ring of the touch node.
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Supersolution touch tests on a solved field: `count` seeded touches at
/// random interior nodes, each passing when the neighbor maximum of
/// `−div A(x, ∇φ(x))` is at least `ε − C_tol·h`, `C_tol = 10(1 + |u|_max)`.
pub fn touch_test(field: &NodalField, params: &DoublePhaseParams, epsilon: f64, count: usize, seed: u64) -> Result<Vec<TouchReport>> {
    let grid = field.grid();
    let interior = grid.interior_nodes();
    if interior.is_empty() {
        return Err(Error::Precondition("grid has no interior nodes".into()));
    }
    let tol = 10.0 * (1.0 + field.max_abs()) * grid.h();
    let threshold = epsilon - tol;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 100 * count.max(1) {
            return Err(Error::NoTouchFound(interior[0]));
        }
        let node = interior[rng.gen_range(0..interior.len())];
        let quad = match generate_touching_quadratics(field, node, 2, rng.gen()) {
            Ok(mut v) => v.pop().expect("two quadratics"),
            Err(Error::NoTouchFound(_)) => continue,
            Err(e) => return Err(e),
        };
        let mut best = f64::NEG_INFINITY;
        for m in grid.ring_neighbors(node) {
            match nondiv_eval(params, &quad.jet(grid.node_coord(m))) {
                Ok(f) => best = best.max(f),
                Err(Error::DegenerateGradient(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if best == f64::NEG_INFINITY {
            continue;
        }
        out.push(TouchReport {
            node,
            x0: quad.center,
            slope: quad.b,
            curvature: -quad.m.get(0, 0),
            gradient_norm: quad.b.norm(),
            value: best,
            threshold,
            passed: best >= threshold,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyReport {
    pub x_node: usize,
    pub y_node: usize,
    pub x: Point,
    pub y: Point,
    pub psi_max: f64,
    pub distance: f64,
    /// `j |x_j − y_j|^{s−1}`.
    pub scaled: f64,
    /// `j |x_j − y_j|^{s−1+σ}`.
    pub scaled_sigma: f64,
}

/// Maximizes `Ψ_j(x, y) = u(x) − v(y) − (j/s)|x − y|^s` over all node pairs,
/// ties going to the lexicographically smallest `(x, y)` index pair.
pub fn doubling_penalty(
    u: &NodalField,
    v: &NodalField,
    params: &DoublePhaseParams,
    j: f64,
    s: f64,
    sigma: f64,
) -> Result<PenaltyReport> {
    let (p, q) = (params.p(), params.q());
    let bound = 2f64.max(p / (p - 1.0)).max(q / (q - 1.0));
    if !(s > bound) || !s.is_finite() {
        return Err(Error::InvalidExponent { s, bound });
    }
    if !(j > 0.0 && j.is_finite()) || !(sigma > 0.0) {
        return Err(Error::InvalidParams("penalty weight and sigma must be positive".into()));
    }
    u.check_same_grid(v)?;
    let grid = u.grid();
    let [nx, ny] = grid.counts();
    let [hx, hy] = grid.spacing();
    // penalty by absolute index offset
    let mut table = vec![0.0; nx * ny];
    for dy in 0..ny {
        for dx in 0..nx {
            let d2 = (dx as f64 * hx).powi(2) + (dy as f64 * hy).powi(2);
            table[dy * nx + dx] = j / s * d2.powf(0.5 * s);
        }
    }
    let (uv, vv) = (u.values(), v.values());
    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for xi in 0..grid.node_count() {
        let (ax, ay) = grid.node_ij(xi);
        for yi in 0..grid.node_count() {
            let (bx, by) = grid.node_ij(yi);
            let pen = table[ay.abs_diff(by) * nx + ax.abs_diff(bx)];
            let val = uv[xi] - vv[yi] - pen;
            if val > best.0 {
                best = (val, xi, yi);
            }
        }
    }
    let (psi_max, xn, yn) = best;
    let (x, y) = (grid.node_coord(xn), grid.node_coord(yn));
    let distance = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
    Ok(PenaltyReport {
        x_node: xn,
        y_node: yn,
        x,
        y,
        psi_max,
        distance,
        scaled: j * distance.powf(s - 1.0),
        scaled_sigma: j * distance.powf(s - 1.0 + sigma),
    })
}
