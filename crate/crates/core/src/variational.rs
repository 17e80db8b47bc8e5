//! Variational (distributional) solver: P1 minimization of the double-phase
//! energy with an optional constant source `ε` and an optional lower obstacle.
//!
//! The discrete problem is `min Σ_e |e| [ m^p/p + a_e m^q/q ] − ε ∫ u` over P1
//! fields with nodal Dirichlet data, where `a_e` is the coefficient at the
//! element centroid. Newton steps use the `δ`-regularized density and walk a
//! fixed continuation schedule in `δ`; the step is damped by Armijo
//! backtracking on the regularized energy.

use std::sync::Arc;

use crate::banded::BandedSpd;
use crate::error::{Error, Result};
use crate::mesh::{BoundaryData, Grid, NodalField};
use crate::operator::{flux_modulus, jacobian_with, validate_exponents, DoublePhaseParams, ExponentMode, Point};

/// Everything a solve needs.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    grid: Arc<Grid>,
    params: DoublePhaseParams,
    boundary: BoundaryData,
    epsilon: f64,
    obstacle: Option<NodalField>,
    strict_validation: bool,
}

impl ProblemSpec {
    pub fn new(grid: Arc<Grid>, params: DoublePhaseParams, boundary: BoundaryData) -> Self {
        ProblemSpec {
            grid,
            params,
            boundary,
            epsilon: 0.0,
            obstacle: None,
            strict_validation: false,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidParams(format!("epsilon >= 0 required, got {epsilon}")));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    /// Attaches a lower obstacle; it must lie below the boundary data on the boundary.
    pub fn with_obstacle(mut self, obstacle: NodalField) -> Result<Self> {
        obstacle.check_grid(&self.grid)?;
        let g = self.boundary.values_on(&self.grid)?;
        for (&n, gv) in self.grid.boundary_nodes().iter().zip(&g) {
            let psi = obstacle.value(n);
            if psi > *gv {
                return Err(Error::InfeasibleObstacle(format!(
                    "obstacle {psi} exceeds boundary datum {gv} at node {n}"
                )));
            }
        }
        self.obstacle = Some(obstacle);
        Ok(self)
    }

    /// Obstacle problem whose boundary datum is the obstacle itself.
    pub fn obstacle_problem(grid: Arc<Grid>, params: DoublePhaseParams, obstacle: NodalField) -> Result<Self> {
        let boundary = BoundaryData::from_field(&obstacle);
        ProblemSpec::new(grid, params, boundary).with_obstacle(obstacle)
    }

    pub fn with_strict_validation(mut self, strict: bool) -> Self {
        self.strict_validation = strict;
        self
    }

    pub fn with_boundary(mut self, boundary: BoundaryData) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_params(mut self, params: DoublePhaseParams) -> Self {
        self.params = params;
        self
    }

    /// Same problem on another grid; an attached obstacle is dropped.
    pub fn with_grid(mut self, grid: Arc<Grid>) -> Self {
        self.grid = grid;
        self.obstacle = None;
        self
    }

    pub fn without_obstacle(mut self) -> Self {
        self.obstacle = None;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn params(&self) -> &DoublePhaseParams {
        &self.params
    }

    pub fn boundary(&self) -> &BoundaryData {
        &self.boundary
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn obstacle(&self) -> Option<&NodalField> {
        self.obstacle.as_ref()
    }

    pub fn strict_validation(&self) -> bool {
        self.strict_validation
    }

    pub(crate) fn check_exponents(&self) -> Result<()> {
        if self.strict_validation {
            let verdict = validate_exponents(&self.params, self.grid.dim(), ExponentMode::Standard);
            if !verdict.passed {
                return Err(Error::ExponentViolation(verdict.explanation));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Max-norm tolerance on the discrete residual.
    pub tolerance: f64,
    pub delta_schedule: Vec<f64>,
    pub max_newton_per_stage: usize,
    pub max_active_set_cycles: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-9,
            delta_schedule: vec![1e-2, 1e-4, 1e-6, 1e-8],
            max_newton_per_stage: 200,
            max_active_set_cycles: 50,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub converged: bool,
    /// Newton steps (variational) or Gauss-Seidel sweeps (viscosity).
    pub iterations: usize,
    pub residual_norm: f64,
    pub energy: f64,
    pub delta_schedule: Vec<f64>,
    pub residual_history: Vec<f64>,
    /// Energies after each accepted Newton step, per stage.
    pub energy_history: Vec<f64>,
    pub active_set_size: Option<usize>,
    pub active_set_cycles: usize,
    /// Set when a solver ran outside its validated regime by explicit override.
    pub experimental: bool,
}

/// Element data frozen for the Newton loop.
pub(crate) struct Discretization<'a> {
    grid: &'a Grid,
    p: f64,
    q: f64,
    a_elem: Vec<f64>,
    lumped: Vec<f64>,
    epsilon: f64,
}

impl<'a> Discretization<'a> {
    pub(crate) fn new(grid: &'a Grid, params: &DoublePhaseParams, epsilon: f64) -> Result<Self> {
        let a_elem = grid
            .elements()
            .iter()
            .map(|e| params.coeff().eval(e.centroid()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Discretization {
            grid,
            p: params.p(),
            q: params.q(),
            a_elem,
            lumped: grid.lumped_measure(),
            epsilon,
        })
    }

    fn laplace(grid: &'a Grid) -> Self {
        Discretization {
            grid,
            p: 2.0,
            q: 2.0,
            a_elem: vec![0.0; grid.elements().len()],
            lumped: grid.lumped_measure(),
            epsilon: 0.0,
        }
    }

    /// Regularized energy; at `δ = 0` the double-phase energy with source.
    pub(crate) fn energy(&self, u: &[f64], delta: f64) -> f64 {
        let (p, q) = (self.p, self.q);
        let (dp, dq) = (delta.powf(p), delta.powf(q));
        let mut total = 0.0;
        for (e, &a) in self.grid.elements().iter().zip(&self.a_elem) {
            let m = (e.gradient(u).norm_sq() + delta * delta).sqrt();
            let mut dens = (m.powf(p) - dp) / p;
            if a != 0.0 {
                dens += a * (m.powf(q) - dq) / q;
            }
            total += e.measure() * dens;
        }
        if self.epsilon != 0.0 {
            total -= self.epsilon * u.iter().zip(&self.lumped).map(|(v, w)| v * w).sum::<f64>();
        }
        total
    }

    /// Gradient of `energy` with respect to every nodal value.
    pub(crate) fn residual(&self, u: &[f64], delta: f64, out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(&self.lumped) {
            *o = -self.epsilon * w;
        }
        for (e, &a) in self.grid.elements().iter().zip(&self.a_elem) {
            let g = e.gradient(u);
            let m2 = g.norm_sq() + delta * delta;
            if m2 == 0.0 {
                continue;
            }
            let flux = g * flux_modulus(self.p, self.q, a, m2.sqrt());
            for (&n, bg) in e.nodes().iter().zip(e.basis_gradients()) {
                out[n] += e.measure() * flux.dot(bg);
            }
        }
    }

    /// Newton matrix; rows and columns of `fixed` nodes are replaced by identity.
    fn jacobian(&self, u: &[f64], delta: f64, fixed: &[bool]) -> Result<BandedSpd> {
        let n = self.grid.node_count();
        let bw = if self.grid.dim() == 1 { 1 } else { self.grid.counts()[0] + 1 };
        let mut k = BandedSpd::new(n, bw);
        for (e, &a) in self.grid.elements().iter().zip(&self.a_elem) {
            let j = jacobian_with(self.p, self.q, a, delta, &e.gradient(u))?;
            let nodes = e.nodes();
            let grads = e.basis_gradients();
            for (ia, &na) in nodes.iter().enumerate() {
                if fixed[na] {
                    continue;
                }
                let jg = j.apply(&grads[ia]);
                for (ib, &nb) in nodes.iter().enumerate() {
                    if fixed[nb] || nb > na {
                        continue;
                    }
                    k.add(na, nb, e.measure() * jg.dot(&grads[ib]));
                }
            }
        }
        for (i, &f) in fixed.iter().enumerate() {
            if f {
                k.add(i, i, 1.0);
            }
        }
        Ok(k)
    }
}

fn max_free(r: &[f64], fixed: &[bool]) -> f64 {
    r.iter()
        .zip(fixed)
        .filter(|(_, &f)| !f)
        .fold(0.0f64, |m, (v, _)| m.max(v.abs()))
}

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;

/// Damped Newton at one regularization level.
fn newton_stage(
    disc: &Discretization<'_>,
    u: &mut [f64],
    fixed: &[bool],
    delta: f64,
    opts: &SolverOptions,
    report: &mut SolveReport,
) -> Result<()> {
    let n = u.len();
    let mut r = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; n];
    disc.residual(u, delta, &mut r);
    let mut rn = max_free(&r, fixed);
    let mut energy = disc.energy(u, delta);
    for _ in 0..opts.max_newton_per_stage {
        report.residual_history.push(rn);
        report.residual_norm = rn;
        if rn <= opts.tolerance {
            return Ok(());
        }
        let mut k = disc.jacobian(u, delta, fixed)?;
        k.factor()?;
        let mut d: Vec<f64> = r.iter().zip(fixed).map(|(v, &f)| if f { 0.0 } else { -v }).collect();
        k.solve(&mut d);
        let slope: f64 = r.iter().zip(&d).zip(fixed).filter(|(_, &f)| !f).map(|((a, b), _)| a * b).sum();

        let mut t = 1.0;
        let accepted = loop {
            for i in 0..n {
                trial[i] = u[i] + t * d[i];
            }
            let e1 = disc.energy(&trial, delta);
            if e1.is_finite() && e1 <= energy + ARMIJO_C * t * slope {
                break Some(e1);
            }
            // near the minimizer energy differences drop below round-off;
            // fall back to residual decrease there
            if e1.is_finite() && (e1 - energy).abs() <= 1e-12 * (1.0 + energy.abs()) {
                disc.residual(&trial, delta, &mut r_trial);
                if max_free(&r_trial, fixed) < rn {
                    break Some(e1);
                }
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some(e1) = accepted else {
            report.converged = false;
            return Err(Error::NonConvergence {
                reason: format!("line search failed at delta = {delta:e} with residual {rn:e}"),
                report: Box::new(report.clone()),
            });
        };
        u.copy_from_slice(&trial);
        energy = e1;
        report.energy_history.push(energy);
        report.iterations += 1;
        disc.residual(u, delta, &mut r);
        rn = max_free(&r, fixed);
    }
    report.residual_norm = rn;
    if rn <= opts.tolerance {
        return Ok(());
    }
    report.converged = false;
    Err(Error::NonConvergence {
        reason: format!(
            "{} Newton steps at delta = {delta:e} left residual {rn:e}",
            opts.max_newton_per_stage
        ),
        report: Box::new(report.clone()),
    })
}

fn newton_continuation(
    disc: &Discretization<'_>,
    u: &mut [f64],
    fixed: &[bool],
    opts: &SolverOptions,
    report: &mut SolveReport,
) -> Result<()> {
    for &delta in &opts.delta_schedule {
        newton_stage(disc, u, fixed, delta, opts, report)?;
    }
    Ok(())
}

/// Discrete harmonic extension of the fixed values, used as the initial guess.
pub(crate) fn harmonic_extension(grid: &Grid, u: &mut [f64], fixed: &[bool]) -> Result<()> {
    let disc = Discretization::laplace(grid);
    let mut r = vec![0.0; u.len()];
    disc.residual(u, 0.0, &mut r);
    let mut k = disc.jacobian(u, 0.0, fixed)?;
    k.factor()?;
    let mut d: Vec<f64> = r.iter().zip(fixed).map(|(v, &f)| if f { 0.0 } else { -v }).collect();
    k.solve(&mut d);
    for (ui, di) in u.iter_mut().zip(&d) {
        *ui += di;
    }
    Ok(())
}

pub(crate) fn boundary_start(spec: &ProblemSpec) -> Result<(Vec<f64>, Vec<bool>)> {
    let grid = &spec.grid;
    let g = spec.boundary.values_on(grid)?;
    let mut u = vec![0.0; grid.node_count()];
    let mut fixed = vec![false; grid.node_count()];
    for (&n, v) in grid.boundary_nodes().iter().zip(&g) {
        u[n] = *v;
        fixed[n] = true;
    }
    Ok((u, fixed))
}

/// Double-phase energy (`δ = 0`) including the source term `−ε ∫ u`.
pub fn energy(field: &NodalField, spec: &ProblemSpec) -> Result<f64> {
    energy_at(field, spec, 0.0)
}

/// Energy with the `δ`-regularized density.
pub fn energy_at(field: &NodalField, spec: &ProblemSpec, delta: f64) -> Result<f64> {
    field.check_grid(&spec.grid)?;
    let disc = Discretization::new(&spec.grid, &spec.params, spec.epsilon)?;
    Ok(disc.energy(field.values(), delta))
}

/// Weak-form residual `Σ_e ⟨A(x_e, Du), Dφ_i⟩ |e| − ε ∫ φ_i` at interior nodes,
/// in the order of `Grid::interior_nodes`, using the flux regularization of
/// `spec.params()`.
pub fn residual(field: &NodalField, spec: &ProblemSpec) -> Result<Vec<f64>> {
    residual_at(field, spec, spec.params.delta())
}

pub fn residual_at(field: &NodalField, spec: &ProblemSpec, delta: f64) -> Result<Vec<f64>> {
    let full = full_residual(field, spec, delta)?;
    Ok(spec.grid.interior_nodes().into_iter().map(|i| full[i]).collect())
}

/// Residual at every node (boundary entries included).
pub fn full_residual(field: &NodalField, spec: &ProblemSpec, delta: f64) -> Result<Vec<f64>> {
    field.check_grid(&spec.grid)?;
    let disc = Discretization::new(&spec.grid, &spec.params, spec.epsilon)?;
    let mut r = vec![0.0; spec.grid.node_count()];
    disc.residual(field.values(), delta, &mut r);
    Ok(r)
}

/// Solves `−div A(x, Du) = ε` with Dirichlet data.
pub fn solve_dirichlet(spec: &ProblemSpec, opts: &SolverOptions) -> Result<(NodalField, SolveReport)> {
    if spec.obstacle.is_some() {
        return Err(Error::Precondition("solve_dirichlet called with an obstacle".into()));
    }
    spec.check_exponents()?;
    let (mut u, fixed) = boundary_start(spec)?;
    let disc = Discretization::new(&spec.grid, &spec.params, spec.epsilon)?;
    let mut report = SolveReport {
        delta_schedule: opts.delta_schedule.clone(),
        ..Default::default()
    };
    harmonic_extension(&spec.grid, &mut u, &fixed)?;
    newton_continuation(&disc, &mut u, &fixed, opts, &mut report)?;
    report.converged = true;
    report.energy = disc.energy(&u, 0.0);
    Ok((NodalField::new(spec.grid.clone(), u)?, report))
}

/// Active nodes leave the set once their residual drops below `-LEAVE_TOL`.
const LEAVE_TOL: f64 = 1e-10;

/// Solves the obstacle problem `u ≥ ψ`, `u = ψ` on the boundary, by a primal
/// active-set iteration wrapped around the continuation Newton solver.
///
/// On return every node satisfies `u ≥ ψ`; free nodes satisfy the equation to
/// the solver tolerance and active nodes carry a nonnegative residual (the
/// discrete supersolution property).
pub fn solve_obstacle(spec: &ProblemSpec, opts: &SolverOptions) -> Result<(NodalField, SolveReport)> {
    let psi = spec
        .obstacle
        .as_ref()
        .ok_or_else(|| Error::Precondition("solve_obstacle requires an obstacle".into()))?;
    psi.check_grid(&spec.grid)?;
    spec.check_exponents()?;
    let grid = &spec.grid;
    let psi = psi.values();
    let disc = Discretization::new(grid, &spec.params, spec.epsilon)?;
    let mut report = SolveReport {
        delta_schedule: opts.delta_schedule.clone(),
        ..Default::default()
    };

    let mut u = vec![0.0; grid.node_count()];
    let mut fixed = vec![false; grid.node_count()];
    for &n in grid.boundary_nodes() {
        u[n] = psi[n];
        fixed[n] = true;
    }
    harmonic_extension(grid, &mut u, &fixed)?;
    newton_continuation(&disc, &mut u, &fixed, opts, &mut report)?;

    let interior = grid.interior_nodes();
    let mut active: Vec<bool> = vec![false; grid.node_count()];
    for &i in &interior {
        active[i] = u[i] < psi[i];
    }
    let final_delta = opts.delta_schedule.last().copied().unwrap_or(0.0);
    let mut r = vec![0.0; u.len()];
    let mut cycles = 0;
    while active.iter().any(|&a| a) {
        if cycles == opts.max_active_set_cycles {
            report.converged = false;
            report.active_set_cycles = cycles;
            return Err(Error::NonConvergence {
                reason: format!("active set did not settle in {cycles} cycles"),
                report: Box::new(report),
            });
        }
        cycles += 1;
        for &i in &interior {
            fixed[i] = active[i];
            if active[i] {
                u[i] = psi[i];
            }
        }
        newton_continuation(&disc, &mut u, &fixed, opts, &mut report)?;
        disc.residual(&u, final_delta, &mut r);
        let mut changed = false;
        for &i in &interior {
            let next = if active[i] { r[i] >= -LEAVE_TOL } else { u[i] < psi[i] };
            changed |= next != active[i];
            active[i] = next;
        }
        if !changed {
            break;
        }
    }
    report.converged = true;
    report.active_set_cycles = cycles;
    report.active_set_size = Some(active.iter().filter(|&&a| a).count());
    report.energy = disc.energy(&u, 0.0);
    Ok((NodalField::new(grid.clone(), u)?, report))
}

/// One level of the increasing obstacle approximation.
#[derive(Clone, Debug)]
pub struct ApproximationLevel {
    pub obstacle: NodalField,
    pub solution: NodalField,
    pub report: SolveReport,
    /// Weight `w` of the quadratic inf-convolution `min_y u*(y) + w |x − y|²`.
    pub weight: f64,
}

/// Quadratic inf-convolution of nodal values over all nodes; lies below `values`
/// and increases with `weight`.
pub fn inf_convolution(grid: &Grid, values: &[f64], weight: f64) -> Vec<f64> {
    let coords: Vec<Point> = (0..grid.node_count()).map(|i| grid.node_coord(i)).collect();
    coords
        .iter()
        .map(|x| {
            coords.iter().zip(values).fold(f64::INFINITY, |m, (y, &v)| {
                let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
                m.min(v + weight * d2)
            })
        })
        .collect()
}

/// Increasing obstacles `ψ_1 ≤ … ≤ ψ_k ≤ u*` built as inf-convolutions of the
/// nodal target with weights `4^j / diam²`, each followed by an obstacle solve.
pub fn approximation_sequence<F>(
    spec: &ProblemSpec,
    target: F,
    levels: usize,
    opts: &SolverOptions,
) -> Result<Vec<ApproximationLevel>>
where
    F: Fn(Point) -> f64,
{
    let grid = spec.grid.clone();
    let nodal = crate::mesh::interpolate(&grid, target)?;
    let base = 1.0 / grid.diameter().powi(2);
    let mut out = Vec::with_capacity(levels);
    for j in 1..=levels {
        let weight = base * 4f64.powi(j as i32);
        let psi = NodalField::new(grid.clone(), inf_convolution(&grid, nodal.values(), weight))?;
        let level_spec = ProblemSpec::obstacle_problem(grid.clone(), spec.params.clone(), psi.clone())?
            .with_epsilon(spec.epsilon)?
            .with_strict_validation(spec.strict_validation);
        let (solution, report) = solve_obstacle(&level_spec, opts)?;
        out.push(ApproximationLevel {
            obstacle: psi,
            solution,
            report,
            weight,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::interpolate;

    fn line_spec(p: f64, q: f64, a: f64, n: usize) -> ProblemSpec {
        let g = Grid::line(0.0, 1.0, n).unwrap();
        ProblemSpec::new(
            g,
            DoublePhaseParams::constant(p, q, a).unwrap(),
            BoundaryData::function(|x| x[0]),
        )
    }

    #[test]
    fn energy_examples() {
        let spec = line_spec(2.0, 4.0, 1.0, 17);
        let z = NodalField::zeros(spec.grid().clone());
        assert_eq!(energy(&z, &spec).unwrap(), 0.0);
        let u = interpolate(spec.grid(), |x| x[0]).unwrap();
        assert!((energy(&u, &spec).unwrap() - 0.75).abs() < 1e-13);
        let spec = spec.with_epsilon(0.1).unwrap();
        assert_eq!(energy(&z, &spec).unwrap(), 0.0);
    }

    #[test]
    fn residual_examples() {
        let spec = line_spec(2.5, 3.0, 0.7, 9);
        let u = interpolate(spec.grid(), |x| 0.3 + 2.0 * x[0]).unwrap();
        assert!(residual(&u, &spec).unwrap().iter().all(|r| r.abs() <= 1e-12));

        let g = Grid::unit_square(5).unwrap();
        let spec = ProblemSpec::new(
            g.clone(),
            DoublePhaseParams::constant(1.5, 3.0, 1.0).unwrap(),
            BoundaryData::function(|_| 0.0),
        )
        .with_epsilon(0.2)
        .unwrap();
        let r = residual(&NodalField::zeros(g.clone()), &spec).unwrap();
        let lumped = g.lumped_measure();
        for (ri, i) in r.iter().zip(g.interior_nodes()) {
            assert!((ri + 0.2 * lumped[i]).abs() < 1e-15 && *ri < 0.0);
        }
    }

    #[test]
    fn linear_case_residual_is_stiffness_action() {
        let g = Grid::unit_square(4).unwrap();
        let spec = ProblemSpec::new(
            g.clone(),
            DoublePhaseParams::constant(2.0, 2.0, 0.0).unwrap(),
            BoundaryData::function(|_| 0.0),
        );
        let u = interpolate(&g, |x| (x[0] * 3.0).sin() * x[1]).unwrap();
        let r = residual(&u, &spec).unwrap();
        // five-point stencil (diagonal triangulation of a uniform square grid)
        for (ri, i) in r.iter().zip(g.interior_nodes()) {
            let (ix, iy) = g.node_ij(i);
            let v = |a: usize, b: usize| u.value(g.node_index(a, b));
            let stencil = 4.0 * v(ix, iy) - v(ix - 1, iy) - v(ix + 1, iy) - v(ix, iy - 1) - v(ix, iy + 1);
            assert!((ri - stencil).abs() < 1e-13);
        }
    }

    #[test]
    fn linear_solution_in_one_dimension() {
        let spec = line_spec(2.5, 3.0, 1.0, 33);
        let (u, report) = solve_dirichlet(&spec, &SolverOptions::default()).unwrap();
        assert!(report.converged && report.residual_norm <= 1e-9);
        for i in 0..33 {
            assert!((u.value(i) - spec.grid().node_coord(i)[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn solve_rejects_obstacle_and_strict_violations() {
        let g = Grid::unit_square(5).unwrap();
        let spec = ProblemSpec::new(
            g.clone(),
            DoublePhaseParams::constant(1.5, 3.0, 1.0).unwrap(),
            BoundaryData::function(|x| x[0]),
        )
        .with_strict_validation(true);
        assert!(matches!(
            solve_dirichlet(&spec, &SolverOptions::default()),
            Err(Error::ExponentViolation(_))
        ));
        let psi = NodalField::constant(g.clone(), -1.0);
        let spec = spec.with_strict_validation(false).with_obstacle(psi).unwrap();
        assert!(matches!(solve_dirichlet(&spec, &SolverOptions::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn obstacle_above_boundary_is_rejected() {
        let g = Grid::line(0.0, 1.0, 9).unwrap();
        let spec = ProblemSpec::new(
            g.clone(),
            DoublePhaseParams::constant(2.0, 2.0, 0.0).unwrap(),
            BoundaryData::function(|_| 0.0),
        );
        let psi = NodalField::constant(g, 0.5);
        assert!(matches!(spec.with_obstacle(psi), Err(Error::InfeasibleObstacle(_))));
    }

    #[test]
    fn inf_convolution_is_below_and_increasing() {
        let g = Grid::unit_square(7).unwrap();
        let t = interpolate(&g, |x| (4.0 * x[0]).sin() + x[1] * x[1]).unwrap();
        let a = inf_convolution(&g, t.values(), 2.0);
        let b = inf_convolution(&g, t.values(), 8.0);
        for i in 0..g.node_count() {
            assert!(a[i] <= b[i] && b[i] <= t.value(i));
        }
    }
}
