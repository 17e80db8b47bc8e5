//! Run configuration: `[section]` headers, `key = value` lines, `#` comments.
//!
//! ```text
//! [problem]
//! dimension = 2
//! x = 0 1
//! y = 0 1
//! nodes = 33
//! p = 2.5
//! q = 3
//! coefficient = 1
//! boundary = exp(x) * sin(y)
//!
//! [study]
//! refinements = 3
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use dphase_core::harness::StudyOptions;
use dphase_core::mesh::{interpolate, BoundaryData, Grid, NodalField};
use dphase_core::operator::{CoefficientField, DoublePhaseParams};
use dphase_core::variational::{ProblemSpec, SolverOptions};
use dphase_core::viscosity::ViscosityOptions;

use crate::expr::{self, Expr, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    /// 1-based; 0 when the problem is a missing key.
    pub line: usize,
    pub key: String,
    pub reason: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "`{}`: {}", self.key, self.reason)
        } else {
            write!(f, "line {}, `{}`: {}", self.line, self.key, self.reason)
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("configuration could not be parsed:\n{}", list(.0))]
    Parse(Vec<Diagnostic>),
    #[error("configuration is invalid:\n{}", list(.0))]
    Validation(Vec<Diagnostic>),
}

impl ConfigError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            ConfigError::Parse(d) | ConfigError::Validation(d) => d,
        }
    }
}

fn list(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// A parsed expression together with its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct Formula {
    pub text: String,
    pub expr: Expr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub dimension: usize,
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nodes: [usize; 2],
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub coefficient: Formula,
    pub epsilon: f64,
    pub boundary: Formula,
    pub obstacle: Option<Formula>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub newton: f64,
    pub max_newton: usize,
    pub active_set_cycles: usize,
    pub viscosity: f64,
    pub max_sweeps: usize,
    pub gradient_floor: Option<f64>,
    pub strict: bool,
    pub allow_variable_coefficient: bool,
}

impl Default for Tolerances {
    fn default() -> Self {
        let s = SolverOptions::default();
        let v = ViscosityOptions::default();
        Tolerances {
            newton: s.tolerance,
            max_newton: s.max_newton_per_stage,
            active_set_cycles: s.max_active_set_cycles,
            viscosity: v.tolerance,
            max_sweeps: v.max_sweeps,
            gradient_floor: v.gradient_floor,
            strict: false,
            allow_variable_coefficient: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub prefix: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub refinements: usize,
    pub trials: usize,
    pub cutoffs: usize,
    pub epsilons: Vec<f64>,
    pub levels: usize,
    /// Target of the obstacle approximation study; defaults to the boundary formula.
    pub target: Option<Formula>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            refinements: 3,
            trials: 100,
            cutoffs: 50,
            epsilons: vec![1e-1, 1e-2, 1e-3, 1e-4],
            levels: 5,
            target: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub tolerances: Tolerances,
    pub output: OutputConfig,
    pub study: StudyConfig,
    pub seed: u64,
}

struct Entry {
    line: usize,
    value: String,
}

const KEYS: &[(&str, &[&str])] = &[
    (
        "problem",
        &["dimension", "x", "y", "nodes", "p", "q", "alpha", "coefficient", "epsilon", "boundary", "obstacle"],
    ),
    (
        "tolerances",
        &[
            "newton",
            "max_newton",
            "active_set_cycles",
            "viscosity",
            "max_sweeps",
            "gradient_floor",
            "strict",
            "allow_variable_coefficient",
        ],
    ),
    ("output", &["directory", "prefix"]),
    ("study", &["refinements", "trials", "cutoffs", "epsilons", "levels", "target", "seed"]),
];

/// Lexical pass: sections and key/value pairs, keyed by `section.key`.
fn scan(text: &str) -> Result<HashMap<String, Entry>, ConfigError> {
    let mut diags = Vec::new();
    let mut entries: HashMap<String, Entry> = HashMap::new();
    let mut section: Option<&str> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                diags.push(diag(line, body, "section header is missing `]`"));
                continue;
            };
            let name = name.trim();
            match KEYS.iter().find(|(s, _)| *s == name) {
                Some((s, _)) => section = Some(s),
                None => {
                    diags.push(diag(line, name, "unknown section"));
                    section = None;
                }
            }
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            diags.push(diag(line, body, "expected `key = value`"));
            continue;
        };
        let key = key.trim();
        let Some(sec) = section else {
            diags.push(diag(line, key, "key outside a known section"));
            continue;
        };
        let allowed = KEYS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            diags.push(diag(line, key, &format!("unknown key in [{sec}]")));
            continue;
        }
        let full = format!("{sec}.{key}");
        if let Some(prev) = entries.get(&full) {
            diags.push(diag(line, key, &format!("duplicate key (first set on line {})", prev.line)));
            continue;
        }
        entries.insert(
            full,
            Entry {
                line,
                value: value.trim().to_string(),
            },
        );
    }
    if diags.is_empty() {
        Ok(entries)
    } else {
        Err(ConfigError::Parse(diags))
    }
}

fn diag(line: usize, key: &str, reason: &str) -> Diagnostic {
    Diagnostic {
        line,
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

/// Typed lookups that record diagnostics instead of failing fast.
struct Reader {
    entries: HashMap<String, Entry>,
    diags: Vec<Diagnostic>,
}

impl Reader {
    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        let e = self.entries.get(key)?;
        Some((e.line, e.value.clone()))
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn short(key: &str) -> &str {
        key.rsplit('.').next().unwrap_or(key)
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let (line, v) = self.raw(key)?;
        match v.parse() {
            Ok(t) => Some(t),
            Err(_) => {
                self.diags.push(diag(line, Self::short(key), &format!("expected {what}, found `{v}`")));
                None
            }
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<Vec<T>> {
        let (line, v) = self.raw(key)?;
        let out: Result<Vec<T>, _> = v.split_whitespace().map(str::parse).collect();
        match out {
            Ok(items) if !items.is_empty() => Some(items),
            _ => {
                self.diags.push(diag(line, Self::short(key), &format!("expected {what}, found `{v}`")));
                None
            }
        }
    }

    fn formula(&mut self, key: &str) -> Option<Formula> {
        let (line, text) = self.raw(key)?;
        match expr::parse(&text) {
            Ok(expr) => Some(Formula { text, expr }),
            Err(e) => {
                self.diags.push(diag(line, Self::short(key), &format!("expression error at {e}")));
                None
            }
        }
    }

    fn require<T>(&mut self, key: &str, v: Option<T>) -> Option<T> {
        if v.is_none() && !self.entries.contains_key(key) {
            self.diags.push(diag(0, key, "required key is missing"));
        }
        v
    }

    fn invalid(&mut self, key: &str, reason: &str) {
        let line = self.line(key);
        self.diags.push(diag(line, Self::short(key), reason));
    }
}

fn constant_formula(v: f64) -> Formula {
    Formula {
        text: v.to_string(),
        expr: Expr::Num(v),
    }
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let entries = scan(text)?;
    let mut r = Reader {
        entries,
        diags: Vec::new(),
    };

    let dimension = r.parsed::<usize>("problem.dimension", "1 or 2");
    let dimension = r.require("problem.dimension", dimension);
    let x = r.list::<f64>("problem.x", "two numbers `lo hi`");
    let y = r.list::<f64>("problem.y", "two numbers `lo hi`");
    let nodes = r.list::<usize>("problem.nodes", "one or two node counts");
    let nodes = r.require("problem.nodes", nodes);
    let p = r.parsed::<f64>("problem.p", "a number");
    let p = r.require("problem.p", p);
    let q = r.parsed::<f64>("problem.q", "a number");
    let q = r.require("problem.q", q);
    let alpha = r.parsed::<f64>("problem.alpha", "a number").unwrap_or(1.0);
    let coefficient = r.formula("problem.coefficient");
    let epsilon = r.parsed::<f64>("problem.epsilon", "a number").unwrap_or(0.0);
    let boundary = r.formula("problem.boundary");
    let boundary = r.require("problem.boundary", boundary);
    let obstacle = r.formula("problem.obstacle");

    let mut tol = Tolerances::default();
    if let Some(v) = r.parsed("tolerances.newton", "a number") {
        tol.newton = v;
    }
    if let Some(v) = r.parsed("tolerances.max_newton", "a count") {
        tol.max_newton = v;
    }
    if let Some(v) = r.parsed("tolerances.active_set_cycles", "a count") {
        tol.active_set_cycles = v;
    }
    if let Some(v) = r.parsed("tolerances.viscosity", "a number") {
        tol.viscosity = v;
    }
    if let Some(v) = r.parsed("tolerances.max_sweeps", "a count") {
        tol.max_sweeps = v;
    }
    if let Some(v) = r.parsed::<f64>("tolerances.gradient_floor", "a number") {
        tol.gradient_floor = Some(v);
    }
    if let Some(v) = r.parsed("tolerances.strict", "true or false") {
        tol.strict = v;
    }
    if let Some(v) = r.parsed("tolerances.allow_variable_coefficient", "true or false") {
        tol.allow_variable_coefficient = v;
    }

    let output = OutputConfig {
        directory: r.raw("output.directory").map_or_else(|| PathBuf::from("out"), |(_, v)| PathBuf::from(v)),
        prefix: r.raw("output.prefix").map_or_else(|| "run".to_string(), |(_, v)| v),
    };

    let mut study = StudyConfig::default();
    if let Some(v) = r.parsed("study.refinements", "a count") {
        study.refinements = v;
    }
    if let Some(v) = r.parsed("study.trials", "a count") {
        study.trials = v;
    }
    if let Some(v) = r.parsed("study.cutoffs", "a count") {
        study.cutoffs = v;
    }
    if let Some(v) = r.list("study.epsilons", "a list of numbers") {
        study.epsilons = v;
    }
    if let Some(v) = r.parsed("study.levels", "a count") {
        study.levels = v;
    }
    study.target = r.formula("study.target");
    let seed = r.parsed::<u64>("study.seed", "an unsigned integer").unwrap_or(0);

    if !r.diags.is_empty() {
        return Err(ConfigError::Parse(r.diags));
    }
    // every required value is present from here on
    let (dimension, nodes, p, q, boundary) = (dimension.unwrap(), nodes.unwrap(), p.unwrap(), q.unwrap(), boundary.unwrap());

    if dimension != 1 && dimension != 2 {
        r.invalid("problem.dimension", "dimension must be 1 or 2");
    }
    let axis = |v: Option<Vec<f64>>| v.map(|v| if v.len() == 2 { Some([v[0], v[1]]) } else { None });
    let x = match axis(x) {
        None => Some([0.0, 1.0]),
        Some(None) => {
            r.invalid("problem.x", "expected exactly two numbers `lo hi`");
            None
        }
        Some(e) => e,
    };
    let y = match axis(y) {
        None => Some([0.0, 1.0]),
        Some(None) => {
            r.invalid("problem.y", "expected exactly two numbers `lo hi`");
            None
        }
        Some(e) => e,
    };
    for (key, e) in [("problem.x", x), ("problem.y", y)] {
        if let Some([lo, hi]) = e {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                r.invalid(key, "extent must satisfy lo < hi");
            }
        }
    }
    let nodes = match nodes.as_slice() {
        [n] => [*n, *n],
        [nx, ny] if dimension == 2 => [*nx, *ny],
        _ => {
            r.invalid("problem.nodes", "expected one count, or two counts in 2D");
            [0, 0]
        }
    };
    if nodes[0] < 3 || (dimension == 2 && nodes[1] < 3) {
        r.invalid("problem.nodes", "at least 3 nodes per axis are required");
    }
    if !(p > 1.0 && p <= q && q.is_finite()) {
        r.invalid(if p > q { "problem.q" } else { "problem.p" }, &format!("exponents must satisfy 1 < p <= q < inf (p = {p}, q = {q})"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        r.invalid("problem.alpha", "alpha must lie in (0, 1]");
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        r.invalid("problem.epsilon", "epsilon must be >= 0");
    }
    let coefficient = coefficient.unwrap_or_else(|| constant_formula(0.0));
    if coefficient.expr.is_constant() {
        let a = coefficient.expr.eval([0.0, 0.0]);
        if !(a >= 0.0 && a.is_finite()) {
            r.invalid("problem.coefficient", &format!("a(x) >= 0 required, found {a}"));
        }
    }
    if !(tol.newton > 0.0) || !(tol.viscosity > 0.0) {
        r.invalid(if tol.newton > 0.0 { "tolerances.viscosity" } else { "tolerances.newton" }, "tolerances must be positive");
    }
    if let Some(f) = tol.gradient_floor {
        if !(f > 0.0) {
            r.invalid("tolerances.gradient_floor", "gradient floor must be positive");
        }
    }
    if study.epsilons.iter().any(|e| !(*e >= 0.0)) {
        r.invalid("study.epsilons", "epsilons must be >= 0");
    }
    if !r.diags.is_empty() {
        return Err(ConfigError::Validation(r.diags));
    }

    Ok(RunConfig {
        problem: ProblemConfig {
            dimension,
            x: x.unwrap(),
            y: y.unwrap(),
            nodes: if dimension == 1 { [nodes[0], 1] } else { nodes },
            p,
            q,
            alpha,
            coefficient,
            epsilon,
            boundary,
            obstacle,
        },
        tolerances: tol,
        output,
        study,
        seed,
    })
}

/// Failure while turning a valid configuration into solver inputs.
#[derive(Debug, thiserror::Error)]
#[error("{key}: {reason}")]
pub struct BuildError {
    pub key: &'static str,
    pub reason: String,
}

fn build_err(key: &'static str, reason: impl ToString) -> BuildError {
    BuildError {
        key,
        reason: reason.to_string(),
    }
}

impl RunConfig {
    pub fn grid(&self) -> Result<Arc<Grid>, BuildError> {
        let pr = &self.problem;
        let g = if pr.dimension == 1 {
            Grid::line(pr.x[0], pr.x[1], pr.nodes[0])
        } else {
            Grid::rectangle(pr.x, pr.y, pr.nodes[0], pr.nodes[1])
        };
        g.map_err(|e| build_err("nodes", e))
    }

    pub fn params(&self) -> Result<DoublePhaseParams, BuildError> {
        let pr = &self.problem;
        let coeff = if pr.coefficient.expr.is_constant() {
            CoefficientField::constant(pr.coefficient.expr.eval([0.0, 0.0]))
        } else {
            let a = pr.coefficient.expr.clone();
            let (ax, ay) = (a.derivative(Var::X), a.derivative(Var::Y));
            CoefficientField::analytic(move |x| a.eval(x), move |x| [ax.eval(x), ay.eval(x)])
        };
        DoublePhaseParams::new(pr.p, pr.q, pr.alpha, coeff).map_err(|e| build_err("p/q", e))
    }

    /// Problem without obstacle.
    pub fn spec(&self) -> Result<ProblemSpec, BuildError> {
        let grid = self.grid()?;
        let params = self.params()?;
        // a(x) >= 0 is checked at every node up front so that errors name the key
        for i in 0..grid.node_count() {
            params.coeff().eval(grid.node_coord(i)).map_err(|e| build_err("coefficient", e))?;
        }
        let g = self.problem.boundary.expr.closure();
        for &b in grid.boundary_nodes() {
            let v = g(grid.node_coord(b));
            if !v.is_finite() {
                let x = grid.node_coord(b);
                return Err(build_err("boundary", format!("not finite at ({}, {})", x[0], x[1])));
            }
        }
        ProblemSpec::new(grid, params, BoundaryData::Function(g))
            .with_epsilon(self.problem.epsilon)
            .map(|s| s.with_strict_validation(self.tolerances.strict))
            .map_err(|e| build_err("epsilon", e))
    }

    /// Nodal obstacle; boundary data are taken from it.
    pub fn obstacle_spec(&self) -> Result<ProblemSpec, BuildError> {
        let Some(obstacle) = &self.problem.obstacle else {
            return Err(build_err("obstacle", "solve-obstacle needs `obstacle` in [problem]"));
        };
        let base = self.spec()?;
        let psi: NodalField =
            interpolate(base.grid(), |x| obstacle.expr.eval(x)).map_err(|e| build_err("obstacle", e))?;
        ProblemSpec::obstacle_problem(base.grid().clone(), base.params().clone(), psi)
            .and_then(|s| s.with_epsilon(self.problem.epsilon))
            .map(|s| s.with_strict_validation(self.tolerances.strict))
            .map_err(|e| build_err("obstacle", e))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.tolerances.newton,
            max_newton_per_stage: self.tolerances.max_newton,
            max_active_set_cycles: self.tolerances.active_set_cycles,
            ..Default::default()
        }
    }

    pub fn viscosity_options(&self) -> ViscosityOptions {
        ViscosityOptions {
            tolerance: self.tolerances.viscosity,
            max_sweeps: self.tolerances.max_sweeps,
            allow_variable_coefficient: self.tolerances.allow_variable_coefficient,
            gradient_floor: self.tolerances.gradient_floor,
        }
    }

    pub fn study_options(&self) -> StudyOptions {
        StudyOptions {
            solver: self.solver_options(),
            viscosity: self.viscosity_options(),
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_1D: &str = "[problem]\ndimension = 1\nnodes = 17\np = 2.5\nq = 3\nboundary = x\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL_1D).unwrap();
        assert_eq!(c.problem.dimension, 1);
        assert_eq!(c.problem.x, [0.0, 1.0]);
        assert_eq!(c.problem.alpha, 1.0);
        assert_eq!(c.problem.epsilon, 0.0);
        assert_eq!(c.problem.coefficient.expr, Expr::Num(0.0));
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(c.study, StudyConfig::default());
        assert_eq!(c.output.prefix, "run");
        assert_eq!(c.seed, 0);
        assert_eq!(c.grid().unwrap().node_count(), 17);
    }

    #[test]
    fn exponent_order_is_validated() {
        let text = MINIMAL_1D.replace("p = 2.5", "p = 3.5");
        let e = parse_config(&text).unwrap_err();
        let ConfigError::Validation(d) = &e else { panic!("{e:?}") };
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].line, d[0].key.as_str()), (5, "q"));
        assert!(d[0].reason.contains("1 < p <= q"));
    }

    #[test]
    fn negative_coefficient_is_rejected() {
        let text = format!("{MINIMAL_1D}coefficient = -0.5\n");
        let e = parse_config(&text).unwrap_err();
        assert!(matches!(&e, ConfigError::Validation(_)));
        assert!(e.diagnostics()[0].reason.contains("a(x) >= 0"));
        assert_eq!(e.diagnostics()[0].line, 7);
    }

    #[test]
    fn negative_variable_coefficient_fails_at_build() {
        let text = format!("{MINIMAL_1D}coefficient = x - 0.5\n");
        let c = parse_config(&text).unwrap();
        let e = c.spec().unwrap_err();
        assert_eq!(e.key, "coefficient");
    }

    #[test]
    fn lexical_problems_are_all_reported() {
        let text = "[problem]\ndimension = 1\nnodes = 17\nnodes = 9\nbogus = 1\n[extra]\np 2\n";
        let e = parse_config(text).unwrap_err();
        let ConfigError::Parse(d) = &e else { panic!("{e:?}") };
        let lines: Vec<usize> = d.iter().map(|d| d.line).collect();
        assert_eq!(lines, vec![4, 5, 6, 7]);
        assert!(e.to_string().contains("line 4, `nodes`: duplicate key"));
    }

    #[test]
    fn missing_and_malformed_values() {
        let e = parse_config("[problem]\ndimension = two\nnodes = 9\np = 2\nboundary = sin(\n").unwrap_err();
        let d = e.diagnostics();
        assert!(d.iter().any(|d| d.line == 2 && d.key == "dimension"));
        assert!(d.iter().any(|d| d.line == 0 && d.key == "problem.q"));
        assert!(d.iter().any(|d| d.line == 5 && d.reason.contains("expression error")));
    }

    #[test]
    fn variable_coefficient_gets_symbolic_gradient() {
        let text = "[problem]\ndimension = 2\nnodes = 5 7\np = 2\nq = 3\ncoefficient = 1 + x*y^2\nboundary = 0\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.grid().unwrap().counts(), [5, 7]);
        let p = c.params().unwrap();
        assert!(!p.coeff().is_constant());
        assert_eq!(p.coeff().gradient([0.5, 2.0]), [4.0, 2.0]);
    }

    #[test]
    fn obstacle_spec_needs_an_obstacle() {
        let c = parse_config(MINIMAL_1D).unwrap();
        assert_eq!(c.obstacle_spec().unwrap_err().key, "obstacle");
        let c = parse_config(&format!("{MINIMAL_1D}obstacle = 0.5 - abs(x - 0.5)\n")).unwrap();
        assert!(c.obstacle_spec().unwrap().obstacle().is_some());
    }
}
