//! Studies that run both solvers and turn the results into tables with
//! threshold verdicts. A verdict is a pure function of the table rows, so a
//! table read back from CSV can be re-checked without solving anything.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryData, Grid, NodalField};
use crate::norms::{gradient_modular, gradient_modular_interior};
use crate::operator::{density, validate_exponents, DoublePhaseParams, ExponentMode, Point};
use crate::variational::{approximation_sequence, solve_dirichlet, ProblemSpec, SolverOptions};
use crate::viscosity::{solve_viscosity, ViscosityOptions};

/// Threshold checks a verdict is made of.
#[derive(Clone, Debug, PartialEq)]
pub enum Check {
    /// Column strictly decreasing down the rows.
    StrictlyDecreasing(&'static str),
    /// Last value at most half the first.
    Halved(&'static str),
    /// Every value at most the limit.
    AtMost(&'static str, f64),
    /// Column nonincreasing down the rows, up to an absolute slack.
    NonIncreasing(&'static str, f64),
    /// All values finite and the per-`h` maxima within the factor of each other.
    StableMax(&'static str, f64),
    /// Max at most the factor times the median.
    MaxOverMedian(&'static str, f64),
}

impl Check {
    fn column(&self) -> &'static str {
        match self {
            Check::StrictlyDecreasing(c)
            | Check::Halved(c)
            | Check::AtMost(c, _)
            | Check::NonIncreasing(c, _)
            | Check::StableMax(c, _)
            | Check::MaxOverMedian(c, _) => c,
        }
    }

    fn holds(&self, h: &[f64], col: &[f64]) -> bool {
        match *self {
            Check::StrictlyDecreasing(_) => col.windows(2).all(|w| w[1] < w[0]),
            Check::Halved(_) => match (col.first(), col.last()) {
                (Some(a), Some(b)) => *b <= 0.5 * a,
                _ => false,
            },
            Check::AtMost(_, limit) => col.iter().all(|v| *v <= limit),
            Check::NonIncreasing(_, slack) => col.windows(2).all(|w| w[1] <= w[0] + slack),
            Check::StableMax(_, factor) => {
                if col.iter().any(|v| !v.is_finite()) {
                    return false;
                }
                let mut maxima: Vec<f64> = Vec::new();
                let mut last_h = f64::NAN;
                for (hv, v) in h.iter().zip(col) {
                    if *hv != last_h {
                        maxima.push(*v);
                        last_h = *hv;
                    } else if let Some(m) = maxima.last_mut() {
                        *m = m.max(*v);
                    }
                }
                maxima.windows(2).all(|w| w[1] <= factor * w[0] && w[0] <= factor * w[1])
            }
            Check::MaxOverMedian(_, factor) => {
                if col.is_empty() {
                    return false;
                }
                let mut s = col.to_vec();
                s.sort_by(f64::total_cmp);
                let median = if s.len() % 2 == 1 {
                    s[s.len() / 2]
                } else {
                    0.5 * (s[s.len() / 2 - 1] + s[s.len() / 2])
                };
                s[s.len() - 1] <= factor * median
            }
        }
    }
}

const ORDER_TOL: f64 = 1e-9;

/// The checks behind each named study.
pub fn checks_for(study: &str) -> Result<Vec<Check>> {
    Ok(match study {
        "equivalence" => vec![Check::StrictlyDecreasing("D"), Check::Halved("D")],
        "comparison" => vec![
            Check::AtMost("var_violation", ORDER_TOL),
            Check::AtMost("visc_violation", ORDER_TOL),
        ],
        "caccioppoli" => vec![Check::StableMax("ratio", 2.0)],
        "regularization" => vec![
            Check::AtMost("monotonicity_violation", ORDER_TOL),
            Check::StrictlyDecreasing("distance"),
        ],
        "obstacle_approximation" => vec![
            Check::AtMost("monotonicity_violation", ORDER_TOL),
            Check::AtMost("above_target", ORDER_TOL),
            Check::MaxOverMedian("gradient_modular", 10.0),
            Check::NonIncreasing("modular_distance", 1e-12),
        ],
        other => return Err(Error::Table(format!("unknown study '{other}'"))),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub h: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyTable {
    pub name: String,
    /// Metric names, not including the leading `h` column.
    pub columns: Vec<String>,
    pub rows: Vec<StudyRow>,
    pub verdict: bool,
    pub metadata: BTreeMap<String, String>,
}

impl StudyTable {
    fn new(name: &str, columns: &[&str]) -> Self {
        StudyTable {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            verdict: false,
            metadata: BTreeMap::new(),
        }
    }

    fn push(&mut self, h: f64, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(StudyRow { h, values });
    }

    fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }

    fn finish(mut self) -> Result<Self> {
        // stable, so rows with equal h keep construction order
        self.rows.sort_by(|a, b| b.h.total_cmp(&a.h));
        self.verdict = self.recompute_verdict()?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }

    /// Verdict from the rows alone.
    pub fn recompute_verdict(&self) -> Result<bool> {
        let h: Vec<f64> = self.rows.iter().map(|r| r.h).collect();
        let mut ok = true;
        for check in checks_for(&self.name)? {
            let col = self
                .column(check.column())
                .ok_or_else(|| Error::Table(format!("missing column '{}'", check.column())))?;
            ok &= check.holds(&h, &col);
        }
        Ok(ok)
    }

    /// Failing checks, for diagnostics.
    pub fn failed_checks(&self) -> Result<Vec<Check>> {
        let h: Vec<f64> = self.rows.iter().map(|r| r.h).collect();
        let mut out = Vec::new();
        for check in checks_for(&self.name)? {
            match self.column(check.column()) {
                Some(col) if check.holds(&h, &col) => {}
                _ => out.push(check),
            }
        }
        Ok(out)
    }

    /// Writes the table as CSV. The first line is a comment with the version,
    /// the configuration hash and the seed; metadata follows as comments.
    pub fn write_csv<W: Write>(&self, mut out: W, config_hash: &str) -> Result<()> {
        let seed = self.metadata.get("seed").map(String::as_str).unwrap_or("none");
        writeln!(
            out,
            "# dphase {} config={} seed={} study={}",
            env!("CARGO_PKG_VERSION"),
            config_hash,
            seed,
            self.name
        )?;
        for (k, v) in &self.metadata {
            if k != "seed" {
                writeln!(out, "# {k}={v}")?;
            }
        }
        writeln!(out, "# verdict={}", if self.verdict { "pass" } else { "fail" })?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["h".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![format!("{:e}", row.h)];
            rec.extend(row.values.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by `write_csv`; the verdict is recomputed from the rows.
    pub fn from_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut name = None;
        let mut metadata = BTreeMap::new();
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            if let Some(c) = line.strip_prefix('#') {
                for tok in c.split_whitespace() {
                    if let Some((k, v)) = tok.split_once('=') {
                        match k {
                            "study" => name = Some(v.to_string()),
                            "config" | "verdict" => {}
                            _ => {
                                metadata.insert(k.to_string(), v.to_string());
                            }
                        }
                    }
                }
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let name = name.ok_or_else(|| Error::Table("missing study name".into()))?;
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let header = reader.headers()?.clone();
        if header.get(0) != Some("h") {
            return Err(Error::Table("first column must be h".into()));
        }
        let columns: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::Table(format!("bad number '{s}'")));
            let h = parse(&rec[0])?;
            let values = rec.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
            if values.len() != columns.len() {
                return Err(Error::Table("row length differs from header".into()));
            }
            rows.push(StudyRow { h, values });
        }
        let mut table = StudyTable {
            name,
            columns,
            rows,
            verdict: false,
            metadata,
        };
        table.verdict = table.recompute_verdict()?;
        Ok(table)
    }
}

/// Solver settings shared by the studies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StudyOptions {
    pub solver: SolverOptions,
    pub viscosity: ViscosityOptions,
    pub seed: u64,
}

fn describe(table: &mut StudyTable, spec: &ProblemSpec, seed: u64) {
    let p = spec.params();
    table.meta("p", p.p());
    table.meta("q", p.q());
    table.meta("alpha", p.alpha());
    table.meta("coefficient", format!("{:?}", p.coeff()).replace(' ', ""));
    table.meta("epsilon", spec.epsilon());
    let [nx, ny] = spec.grid().counts();
    table.meta("nodes", if spec.grid().dim() == 1 { nx.to_string() } else { format!("{nx}x{ny}") });
    table.meta("seed", seed);
}

/// The grid with `2^level` times as many cells per axis.
pub fn refined(grid: &Grid, level: u32) -> Result<Arc<Grid>> {
    let f = 1usize << level;
    let [nx, ny] = grid.counts();
    let (lo, hi) = (grid.lo(), grid.hi());
    if grid.dim() == 1 {
        Grid::line(lo[0], hi[0], (nx - 1) * f + 1)
    } else {
        Grid::rectangle([lo[0], hi[0]], [lo[1], hi[1]], (nx - 1) * f + 1, (ny - 1) * f + 1)
    }
}

/// `D(h) = max |u_var − u_visc|` on the problem grid and `refinements − 1` halvings.
pub fn equivalence_study(spec: &ProblemSpec, refinements: usize, opts: &StudyOptions) -> Result<StudyTable> {
    if !spec.params().coeff().is_constant() && !opts.viscosity.allow_variable_coefficient {
        return Err(Error::VariableCoefficient);
    }
    let mut table = StudyTable::new("equivalence", &["D"]);
    describe(&mut table, spec, opts.seed);
    table.meta("refinements", refinements);
    for level in 0..refinements {
        let s = spec.clone().with_grid(refined(spec.grid(), level as u32)?);
        let (uv, _) = solve_dirichlet(&s, &opts.solver)?;
        let (uc, _) = solve_viscosity(&s, &opts.viscosity)?;
        table.push(s.grid().h(), vec![uv.minus(&uc)?.max_abs()]);
    }
    table.finish()
}

/// Smooth random function: a trigonometric series of total degree at most 4
/// in the coordinates rescaled to `[0, π]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigSeries {
    lo: Point,
    hi: Point,
    terms: Vec<(f64, f64, f64, f64)>,
}

impl TrigSeries {
    pub fn random<R: Rng>(grid: &Grid, rng: &mut R) -> Self {
        let ly = if grid.dim() == 1 { 0 } else { 4 };
        let mut terms = Vec::new();
        for k in 0..=4 {
            for l in 0..=ly {
                if k + l > 4 {
                    continue;
                }
                let scale = 0.5 / (1.0 + (k + l) as f64);
                terms.push((k as f64, l as f64, scale * rng.gen_range(-1.0..1.0), scale * rng.gen_range(-1.0..1.0)));
            }
        }
        TrigSeries {
            lo: grid.lo(),
            hi: grid.hi(),
            terms,
        }
    }

    pub fn eval(&self, x: Point) -> f64 {
        let s = |i: usize| {
            let w = self.hi[i] - self.lo[i];
            if w > 0.0 {
                PI * (x[i] - self.lo[i]) / w
            } else {
                0.0
            }
        };
        let (sx, sy) = (s(0), s(1));
        self.terms
            .iter()
            .map(|&(k, l, a, b)| {
                let t = k * sx + l * sy;
                a * t.cos() + b * t.sin()
            })
            .sum()
    }
}

/// Seeded pairs of ordered boundary data `g₁ ≤ g₂`, both solvers, nodal ordering of the solutions.
pub fn comparison_study(spec: &ProblemSpec, trials: usize, opts: &StudyOptions) -> Result<StudyTable> {
    let mut table = StudyTable::new("comparison", &["trial", "shift", "var_violation", "visc_violation", "visc_run"]);
    describe(&mut table, spec, opts.seed);
    table.meta("trials", trials);
    let grid = spec.grid().clone();
    let run_visc = spec.params().coeff().is_constant();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for trial in 0..trials {
        let t1 = TrigSeries::random(&grid, &mut rng);
        let t2 = TrigSeries::random(&grid, &mut rng);
        let shift = rng.gen_range(0.05..0.5);
        let b = grid.boundary_nodes();
        let g1: Vec<f64> = b.iter().map(|&n| t1.eval(grid.node_coord(n))).collect();
        let lift = b
            .iter()
            .map(|&n| t1.eval(grid.node_coord(n)) - t2.eval(grid.node_coord(n)))
            .fold(f64::NEG_INFINITY, f64::max);
        let g2: Vec<f64> = b.iter().map(|&n| t2.eval(grid.node_coord(n)) + lift + shift).collect();
        let s1 = spec.clone().with_boundary(BoundaryData::Values(g1));
        let s2 = spec.clone().with_boundary(BoundaryData::Values(g2));
        let (u1, _) = solve_dirichlet(&s1, &opts.solver)?;
        let (u2, _) = solve_dirichlet(&s2, &opts.solver)?;
        let var_violation = max_excess(&u1, &u2);
        let visc_violation = if run_visc {
            let (v1, _) = solve_viscosity(&s1, &opts.viscosity)?;
            let (v2, _) = solve_viscosity(&s2, &opts.viscosity)?;
            max_excess(&v1, &v2)
        } else {
            0.0
        };
        table.push(
            grid.h(),
            vec![trial as f64, shift, var_violation, visc_violation, if run_visc { 1.0 } else { 0.0 }],
        );
    }
    table.finish()
}

/// `max(0, max_i (u_i − v_i))`.
pub fn max_excess(u: &NodalField, v: &NodalField) -> f64 {
    u.values().iter().zip(v.values()).fold(0.0f64, |m, (a, b)| m.max(a - b))
}

/// Radial polynomial bump `ζ = (1 − |x − c|²/r²)_+^k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpCutoff {
    pub center: Point,
    pub radius: f64,
    pub power: i32,
}

impl BumpCutoff {
    pub fn value(&self, x: Point) -> f64 {
        let s = 1.0 - self.r2(x) / (self.radius * self.radius);
        if s <= 0.0 {
            0.0
        } else {
            s.powi(self.power)
        }
    }

    pub fn gradient(&self, x: Point) -> [f64; 2] {
        let r2 = self.radius * self.radius;
        let s = 1.0 - self.r2(x) / r2;
        if s <= 0.0 {
            return [0.0; 2];
        }
        let c = -2.0 * self.power as f64 * s.powi(self.power - 1) / r2;
        [c * (x[0] - self.center[0]), c * (x[1] - self.center[1])]
    }

    fn r2(&self, x: Point) -> f64 {
        (x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2)
    }

    /// Random bump supported at distance at least `margin` from the boundary.
    pub fn random<R: Rng>(grid: &Grid, margin: f64, rng: &mut R) -> Self {
        let (lo, hi) = (grid.lo(), grid.hi());
        let axes = grid.dim();
        let mut center = [0.0; 2];
        for i in 0..axes {
            center[i] = lo[i] + (hi[i] - lo[i]) * rng.gen_range(0.3..0.7);
        }
        let room = (0..axes)
            .map(|i| (center[i] - lo[i]).min(hi[i] - center[i]))
            .fold(f64::INFINITY, f64::min)
            - margin;
        BumpCutoff {
            center,
            radius: room * rng.gen_range(0.5..1.0),
            power: rng.gen_range(2..=4),
        }
    }
}

/// `(∫ ζ^q H(x, Du), ∫ H(x, u Dζ))` with the one-point element rule.
pub fn caccioppoli_sides(field: &NodalField, params: &DoublePhaseParams, zeta: &dyn Fn(Point) -> (f64, [f64; 2])) -> Result<(f64, f64)> {
    let (p, q) = (params.p(), params.q());
    let values = field.values();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for e in field.grid().elements() {
        let xc = e.centroid();
        let a = params.coeff().eval(xc)?;
        let (z, dz) = zeta(xc);
        let du = e.gradient(values).norm();
        let u = e.centroid_value(values);
        lhs += e.measure() * z.powf(q) * density(p, q, a, du);
        rhs += e.measure() * density(p, q, a, u * (dz[0] * dz[0] + dz[1] * dz[1]).sqrt());
    }
    Ok((lhs, rhs))
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Caccioppoli ratios for `cutoffs` seeded bumps on the problem grid and one refinement.
pub fn caccioppoli_study(spec: &ProblemSpec, cutoffs: usize, opts: &StudyOptions) -> Result<StudyTable> {
    let mut table = StudyTable::new("caccioppoli", &["cutoff", "lhs", "rhs", "ratio"]);
    describe(&mut table, spec, opts.seed);
    table.meta("cutoffs", cutoffs);
    let base = spec.clone().with_epsilon(0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let margin = 0.1 * base.grid().diameter();
    let bumps: Vec<BumpCutoff> = (0..cutoffs).map(|_| BumpCutoff::random(base.grid(), margin, &mut rng)).collect();
    for level in 0..2 {
        let s = base.clone().with_grid(refined(base.grid(), level)?);
        let (u, _) = solve_dirichlet(&s, &opts.solver)?;
        for (k, bump) in bumps.iter().enumerate() {
            let (lhs, rhs) = caccioppoli_sides(&u, s.params(), &|x| (bump.value(x), bump.gradient(x)))?;
            table.push(s.grid().h(), vec![k as f64, lhs, rhs, ratio(lhs, rhs)]);
        }
    }
    table.finish()
}

/// Interior sup-distance over nodes at depth at least 2.
pub fn interior_sup_distance(u: &NodalField, v: &NodalField) -> Result<f64> {
    let d = u.minus(v)?;
    let grid = u.grid();
    Ok((0..grid.node_count())
        .filter(|&i| grid.depth(i) >= 2)
        .fold(0.0f64, |m, i| m.max(d.value(i).abs())))
}

/// `u_ε → u` as `ε ↓ 0`: ordering in `ε` and decreasing interior distance.
pub fn regularization_study(spec: &ProblemSpec, epsilons: &[f64], opts: &StudyOptions) -> Result<StudyTable> {
    let verdict = validate_exponents(spec.params(), spec.grid().dim(), ExponentMode::RegularizedLimit);
    if !verdict.passed {
        return Err(Error::ExponentViolation(verdict.explanation));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) || epsilons.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::InvalidParams("epsilons must be nonnegative and strictly decreasing".into()));
    }
    let mut table = StudyTable::new(
        "regularization",
        &["epsilon", "distance", "monotonicity_violation", "gradient_modular_gap", "rate"],
    );
    describe(&mut table, spec, opts.seed);
    let (u0, _) = solve_dirichlet(&spec.clone().with_epsilon(0.0)?, &opts.solver)?;
    let h = spec.grid().h();
    let mut prev: Option<(f64, f64, NodalField)> = None;
    for &eps in epsilons {
        let (u, _) = solve_dirichlet(&spec.clone().with_epsilon(eps)?, &opts.solver)?;
        let distance = interior_sup_distance(&u, &u0)?;
        // smaller source, smaller solution
        let mut violation = max_excess(&u0, &u);
        let mut rate = f64::NAN;
        if let Some((pe, pd, pu)) = &prev {
            violation = violation.max(max_excess(&u, pu));
            if eps > 0.0 && distance > 0.0 && *pd > 0.0 {
                rate = (pd / distance).ln() / (pe / eps).ln();
            }
        }
        let gap = gradient_modular(&u0.minus(&u)?, spec.params())?.value();
        table.push(h, vec![eps, distance, violation, gap, rate]);
        prev = Some((eps, distance, u));
    }
    table.finish()
}

/// Increasing obstacle approximations of `target` from below.
pub fn obstacle_approximation_study<F>(spec: &ProblemSpec, target: F, levels: usize, opts: &StudyOptions) -> Result<StudyTable>
where
    F: Fn(Point) -> f64,
{
    let mut table = StudyTable::new(
        "obstacle_approximation",
        &[
            "level",
            "weight",
            "monotonicity_violation",
            "above_target",
            "gradient_modular",
            "modular_distance",
        ],
    );
    describe(&mut table, spec, opts.seed);
    table.meta("levels", levels);
    let grid = spec.grid().clone();
    let nodal = crate::mesh::interpolate(&grid, &target)?;
    let seq = approximation_sequence(spec, &target, levels, &opts.solver)?;
    let mut prev: Option<&NodalField> = None;
    for (j, level) in seq.iter().enumerate() {
        let u = &level.solution;
        let mono = prev.map(|p| max_excess(p, u)).unwrap_or(0.0);
        let above = max_excess(u, &nodal);
        let gm = gradient_modular(u, spec.params())?.value();
        let dist = gradient_modular_interior(&nodal.minus(u)?, spec.params(), 2)?.value();
        table.push(grid.h(), vec![(j + 1) as f64, level.weight, mono, above, gm, dist]);
        prev = Some(u);
    }
    table.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::interpolate;

    fn spec1d(p: f64, q: f64) -> ProblemSpec {
        ProblemSpec::new(
            Grid::line(0.0, 1.0, 17).unwrap(),
            DoublePhaseParams::constant(p, q, 1.0).unwrap(),
            BoundaryData::function(|x| x[0]),
        )
    }

    #[test]
    fn checks_behave() {
        let h = [0.5, 0.25, 0.125];
        assert!(Check::StrictlyDecreasing("x").holds(&h, &[3.0, 2.0, 1.0]));
        assert!(!Check::StrictlyDecreasing("x").holds(&h, &[3.0, 3.0, 1.0]));
        assert!(Check::Halved("x").holds(&h, &[3.0, 2.0, 1.5]));
        assert!(!Check::Halved("x").holds(&h, &[3.0, 2.0, 1.6]));
        assert!(Check::StableMax("x", 2.0).holds(&[0.5, 0.5, 0.25, 0.25], &[1.0, 3.0, 2.0, 1.0]));
        assert!(!Check::StableMax("x", 2.0).holds(&[0.5, 0.25], &[1.0, 2.5]));
        assert!(!Check::StableMax("x", 2.0).holds(&[0.5, 0.25], &[1.0, f64::INFINITY]));
        assert!(Check::MaxOverMedian("x", 10.0).holds(&h, &[1.0, 2.0, 9.0]));
        assert!(!Check::MaxOverMedian("x", 10.0).holds(&h, &[1.0, 1.0, 11.0]));
    }

    #[test]
    fn csv_round_trip_recomputes_verdict() {
        let mut t = StudyTable::new("equivalence", &["D"]);
        t.meta("seed", 42);
        t.meta("p", 2.5);
        t.push(0.25, vec![1e-3]);
        t.push(0.0625, vec![1.0 / 3.0 * 1e-4]);
        t.push(0.125, vec![2e-4]);
        let t = t.finish().unwrap();
        assert!(t.verdict);
        assert_eq!(t.rows[1].h, 0.125);
        let mut buf = Vec::new();
        t.write_csv(&mut buf, "abc").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# dphase "));
        assert!(text.lines().next().unwrap().contains("config=abc seed=42"));
        let back = StudyTable::from_csv(&buf[..]).unwrap();
        assert_eq!(back, t);

        let tampered = text.replace("2e-4", "2e-3");
        assert!(!StudyTable::from_csv(tampered.as_bytes()).unwrap().verdict);
    }

    #[test]
    fn equal_and_shifted_data_compare_exactly() {
        let s = spec1d(2.5, 3.0);
        let opts = StudyOptions::default();
        let (u1, _) = solve_dirichlet(&s, &opts.solver).unwrap();
        let s2 = s.clone().with_boundary(BoundaryData::function(|x| x[0] + 1.0));
        let (u2, _) = solve_dirichlet(&s2, &opts.solver).unwrap();
        for i in 0..u1.values().len() {
            assert!((u2.value(i) - u1.value(i) - 1.0).abs() < 1e-10);
        }
        assert_eq!(max_excess(&u1, &u1), 0.0);
    }

    #[test]
    fn zero_cutoff_and_constant_field() {
        let g = Grid::unit_square(9).unwrap();
        let pr = DoublePhaseParams::constant(2.0, 3.0, 1.0).unwrap();
        let u = interpolate(&g, |x| x[0] * x[1]).unwrap();
        let (l, r) = caccioppoli_sides(&u, &pr, &|_| (0.0, [0.0, 0.0])).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        let c = NodalField::constant(g.clone(), 2.0);
        let bump = BumpCutoff {
            center: [0.5, 0.5],
            radius: 0.3,
            power: 2,
        };
        let (l, r) = caccioppoli_sides(&c, &pr, &|x| (bump.value(x), bump.gradient(x))).unwrap();
        assert_eq!(l, 0.0);
        assert!(r > 0.0);
    }

    #[test]
    fn bump_gradient_matches_differences() {
        let b = BumpCutoff {
            center: [0.4, 0.6],
            radius: 0.3,
            power: 3,
        };
        let x = [0.5, 0.55];
        let h = 1e-6;
        let g = b.gradient(x);
        let dx = (b.value([x[0] + h, x[1]]) - b.value([x[0] - h, x[1]])) / (2.0 * h);
        let dy = (b.value([x[0], x[1] + h]) - b.value([x[0], x[1] - h])) / (2.0 * h);
        assert!((g[0] - dx).abs() < 1e-8 && (g[1] - dy).abs() < 1e-8);
    }

    #[test]
    fn regularization_with_zero_epsilon_only() {
        let t = regularization_study(&spec1d(2.0, 2.5), &[0.0], &StudyOptions::default()).unwrap();
        assert_eq!(t.column("distance").unwrap(), vec![0.0]);
        assert!(matches!(
            regularization_study(&spec1d(2.0, 2.5), &[0.1, 0.2], &StudyOptions::default()),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn constant_target_levels_are_exact() {
        let g = Grid::unit_square(7).unwrap();
        let s = ProblemSpec::new(
            g,
            DoublePhaseParams::constant(2.5, 3.0, 1.0).unwrap(),
            BoundaryData::function(|_| 0.3),
        );
        let t = obstacle_approximation_study(&s, |_| 0.3, 2, &StudyOptions::default()).unwrap();
        assert!(t.verdict);
        assert!(t.column("above_target").unwrap().iter().all(|v| *v <= 1e-12));
    }

    #[test]
    fn equivalence_refuses_variable_coefficient() {
        let coeff = crate::operator::CoefficientField::analytic(|x| 1.0 + x[0], |_| [1.0, 0.0]);
        let s = ProblemSpec::new(
            Grid::unit_square(5).unwrap(),
            DoublePhaseParams::new(2.5, 3.0, 1.0, coeff).unwrap(),
            BoundaryData::function(|x| x[0]),
        );
        assert!(matches!(
            equivalence_study(&s, 2, &StudyOptions::default()),
            Err(Error::VariableCoefficient)
        ));
    }
}
