//! Structured 1D/2D grids, P1 nodal fields and the plain-text field format.
//!
//! Nodes are numbered row-major with `x` fastest. In 2D every cell is split
//! along its lower-left to upper-right diagonal into two right triangles.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operator::{GradVec, Point};

#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    nodes: [usize; 3],
    count: usize,
    measure: f64,
    grads: [GradVec; 3],
    centroid: Point,
}

impl Element {
    pub fn nodes(&self) -> &[usize] {
        &self.nodes[..self.count]
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    /// Gradients of the hat functions of `nodes()`, restricted to this element.
    pub fn basis_gradients(&self) -> &[GradVec] {
        &self.grads[..self.count]
    }

    pub fn centroid(&self) -> Point {
        self.centroid
    }

    /// Element gradient of the P1 interpolant of `values`.
    pub fn gradient(&self, values: &[f64]) -> GradVec {
        let mut g = GradVec::zeros(self.grads[0].dim());
        for (&n, grad) in self.nodes().iter().zip(self.basis_gradients()) {
            g = g + *grad * values[n];
        }
        g
    }

    /// Mean of the nodal values, i.e. the P1 interpolant at the centroid.
    pub fn centroid_value(&self, values: &[f64]) -> f64 {
        self.nodes().iter().map(|&n| values[n]).sum::<f64>() / self.count as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    counts: [usize; 2],
    elements: Vec<Element>,
    boundary: Vec<usize>,
    on_boundary: Vec<bool>,
}

impl Grid {
    /// Uniform grid of `n` nodes on `[lo, hi]`.
    pub fn line(lo: f64, hi: f64, n: usize) -> Result<Arc<Grid>> {
        Self::build(1, [lo, 0.0], [hi, 0.0], [n, 1])
    }

    /// Uniform `nx × ny` node grid on `[x_lo, x_hi] × [y_lo, y_hi]`.
    pub fn rectangle(x: [f64; 2], y: [f64; 2], nx: usize, ny: usize) -> Result<Arc<Grid>> {
        Self::build(2, [x[0], y[0]], [x[1], y[1]], [nx, ny])
    }

    pub fn unit_square(n: usize) -> Result<Arc<Grid>> {
        Self::rectangle([0.0, 1.0], [0.0, 1.0], n, n)
    }

    fn build(dim: usize, lo: [f64; 2], hi: [f64; 2], counts: [usize; 2]) -> Result<Arc<Grid>> {
        for axis in 0..dim {
            if counts[axis] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} has {} nodes, at least 3 required",
                    counts[axis]
                )));
            }
            if !(lo[axis].is_finite() && hi[axis].is_finite() && hi[axis] > lo[axis]) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} extent [{}, {}] must be finite and positive",
                    lo[axis], hi[axis]
                )));
            }
        }
        let mut grid = Grid {
            dim,
            lo,
            hi,
            counts,
            elements: Vec::new(),
            boundary: Vec::new(),
            on_boundary: Vec::new(),
        };
        grid.elements = grid.make_elements();
        grid.on_boundary = (0..grid.node_count()).map(|i| grid.depth(i) == 0).collect();
        grid.boundary = (0..grid.node_count()).filter(|&i| grid.on_boundary[i]).collect();
        Ok(Arc::new(grid))
    }

    fn make_elements(&self) -> Vec<Element> {
        let [nx, ny] = self.counts;
        if self.dim == 1 {
            let h = self.spacing()[0];
            return (0..nx - 1)
                .map(|i| {
                    let a = self.node_coord(i)[0];
                    Element {
                        nodes: [i, i + 1, 0],
                        count: 2,
                        measure: h,
                        grads: [GradVec::d1(-1.0 / h), GradVec::d1(1.0 / h), GradVec::zeros(1)],
                        centroid: [a + 0.5 * h, 0.0],
                    }
                })
                .collect();
        }
        let mut out = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
        for iy in 0..ny - 1 {
            for ix in 0..nx - 1 {
                let ll = self.node_index(ix, iy);
                let lr = self.node_index(ix + 1, iy);
                let ur = self.node_index(ix + 1, iy + 1);
                let ul = self.node_index(ix, iy + 1);
                out.push(self.triangle([ll, lr, ur]));
                out.push(self.triangle([ll, ur, ul]));
            }
        }
        out
    }

    fn triangle(&self, nodes: [usize; 3]) -> Element {
        let [p0, p1, p2] = nodes.map(|n| self.node_coord(n));
        let area2 = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let grads = [
            GradVec::d2((p1[1] - p2[1]) / area2, (p2[0] - p1[0]) / area2),
            GradVec::d2((p2[1] - p0[1]) / area2, (p0[0] - p2[0]) / area2),
            GradVec::d2((p0[1] - p1[1]) / area2, (p1[0] - p0[0]) / area2),
        ];
        Element {
            nodes,
            count: 3,
            measure: 0.5 * area2,
            grads,
            centroid: [(p0[0] + p1[0] + p2[0]) / 3.0, (p0[1] + p1[1] + p2[1]) / 3.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per axis; the second entry is 1 for 1D grids.
    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn lo(&self) -> [f64; 2] {
        self.lo
    }

    pub fn hi(&self) -> [f64; 2] {
        self.hi
    }

    pub fn node_count(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn spacing(&self) -> [f64; 2] {
        let mut h = [0.0; 2];
        for (axis, slot) in h.iter_mut().enumerate().take(self.dim) {
            *slot = (self.hi[axis] - self.lo[axis]) / (self.counts[axis] - 1) as f64;
        }
        h
    }

    /// Largest grid spacing.
    pub fn h(&self) -> f64 {
        let s = self.spacing();
        s[0].max(s[1])
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.counts[0] + ix
    }

    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node % self.counts[0], node / self.counts[0])
    }

    pub fn node_coord(&self, node: usize) -> Point {
        let (ix, iy) = self.node_ij(node);
        let h = self.spacing();
        // the last node sits exactly on `hi`
        let coord = |axis: usize, i: usize| {
            if i + 1 == self.counts[axis] {
                self.hi[axis]
            } else {
                self.lo[axis] + i as f64 * h[axis]
            }
        };
        if self.dim == 1 {
            [coord(0, ix), 0.0]
        } else {
            [coord(0, ix), coord(1, iy)]
        }
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.on_boundary[node]
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| !self.on_boundary[i]).collect()
    }

    /// Distance to the boundary counted in nodes (0 on the boundary).
    pub fn depth(&self, node: usize) -> usize {
        let (ix, iy) = self.node_ij(node);
        let mut d = ix.min(self.counts[0] - 1 - ix);
        if self.dim == 2 {
            d = d.min(iy).min(self.counts[1] - 1 - iy);
        }
        d
    }

    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|a| self.hi[a] - self.lo[a]).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim)
            .map(|a| (self.hi[a] - self.lo[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `∫ φ_i dx` for every hat function.
    pub fn lumped_measure(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.node_count()];
        for e in &self.elements {
            let share = e.measure / e.count as f64;
            for &n in e.nodes() {
                m[n] += share;
            }
        }
        m
    }

    /// Grid neighbours of `node` within the 1-ring (8 in 2D, 2 in 1D), `node` excluded.
    pub fn ring_neighbors(&self, node: usize) -> Vec<usize> {
        let (ix, iy) = self.node_ij(node);
        let mut out = Vec::with_capacity(8);
        let dy_range: &[i64] = if self.dim == 1 { &[0] } else { &[-1, 0, 1] };
        for &dy in dy_range {
            for dx in [-1i64, 0, 1] {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let jx = ix as i64 + dx;
                let jy = iy as i64 + dy;
                if jx >= 0 && jy >= 0 && (jx as usize) < self.counts[0] && (jy as usize) < self.counts[1] {
                    out.push(self.node_index(jx as usize, jy as usize));
                }
            }
        }
        out
    }
}

/// Real value per node of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl NodalField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::CountMismatch {
                expected: grid.node_count(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        Ok(NodalField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.node_count();
        NodalField {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.node_count();
        NodalField {
            grid,
            values: vec![c; n],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Nodewise `self − other`.
    pub fn minus(&self, other: &NodalField) -> Result<NodalField> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        NodalField::new(self.grid.clone(), values)
    }

    pub fn scaled(&self, s: f64) -> Result<NodalField> {
        NodalField::new(self.grid.clone(), self.values.iter().map(|v| v * s).collect())
    }

    pub fn check_same_grid(&self, other: &NodalField) -> Result<()> {
        same_grid(&self.grid, &other.grid)
    }

    pub fn check_grid(&self, grid: &Arc<Grid>) -> Result<()> {
        same_grid(&self.grid, grid)
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

type BoundaryFn = dyn Fn(Point) -> f64 + Send + Sync;

/// Dirichlet datum, either as a closure or as values on `Grid::boundary_nodes`.
#[derive(Clone)]
pub enum BoundaryData {
    Function(Arc<BoundaryFn>),
    Values(Vec<f64>),
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryData::Function(_) => write!(f, "Function(..)"),
            BoundaryData::Values(v) => write!(f, "Values({} nodes)", v.len()),
        }
    }
}

impl BoundaryData {
    pub fn function<F>(g: F) -> Self
    where
        F: Fn(Point) -> f64 + Send + Sync + 'static,
    {
        BoundaryData::Function(Arc::new(g))
    }

    /// Boundary values of an existing field.
    pub fn from_field(field: &NodalField) -> Self {
        BoundaryData::Values(field.grid.boundary.iter().map(|&n| field.values[n]).collect())
    }

    /// Values in the order of `grid.boundary_nodes()`.
    pub fn values_on(&self, grid: &Grid) -> Result<Vec<f64>> {
        let values = match self {
            BoundaryData::Function(g) => grid.boundary.iter().map(|&n| g(grid.node_coord(n))).collect(),
            BoundaryData::Values(v) => {
                if v.len() != grid.boundary.len() {
                    return Err(Error::CountMismatch {
                        expected: grid.boundary.len(),
                        found: v.len(),
                    });
                }
                v.clone()
            }
        };
        if let Some(k) = values.iter().position(|v: &f64| !v.is_finite()) {
            return Err(Error::InvalidField(format!(
                "boundary datum is not finite at node {}",
                grid.boundary[k]
            )));
        }
        Ok(values)
    }
}

/// Exact gradient of the linear interpolant of `field` on element `element`.
///
/// Panics if `element` is out of range.
pub fn p1_gradient(field: &NodalField, element: usize) -> GradVec {
    field.grid.elements[element].gradient(&field.values)
}

/// Nodal sampling of `g`.
pub fn interpolate<F>(grid: &Arc<Grid>, g: F) -> Result<NodalField>
where
    F: Fn(Point) -> f64,
{
    let values: Vec<f64> = (0..grid.node_count()).map(|i| g(grid.node_coord(i))).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidField(format!(
            "sample at node {i} ({:?}) is not finite",
            grid.node_coord(i)
        )));
    }
    Ok(NodalField {
        grid: grid.clone(),
        values,
    })
}

const FIELD_MAGIC: &str = "DPFIELD v1";

/// Writes the plain-text field format: magic line, `dim nx [ny]`, axis bounds
/// `lo hi` per axis, then one value per line with 17 significant digits.
pub fn write_field<W: Write>(field: &NodalField, mut out: W) -> Result<()> {
    let g = &field.grid;
    writeln!(out, "{FIELD_MAGIC}")?;
    if g.dim == 1 {
        writeln!(out, "1 {}", g.counts[0])?;
        writeln!(out, "{:.16e} {:.16e}", g.lo[0], g.hi[0])?;
    } else {
        writeln!(out, "2 {} {}", g.counts[0], g.counts[1])?;
        writeln!(out, "{:.16e} {:.16e} {:.16e} {:.16e}", g.lo[0], g.hi[0], g.lo[1], g.hi[1])?;
    }
    for v in &field.values {
        writeln!(out, "{v:.16e}")?;
    }
    Ok(())
}

pub fn read_field<R: BufRead>(input: R) -> Result<NodalField> {
    let mut lines = input.lines();
    let mut next_line = |what: &str| -> Result<String> {
        match lines.next() {
            Some(line) => Ok(line?),
            None => Err(Error::MalformedHeader(format!("missing {what} line"))),
        }
    };
    let magic = next_line("magic")?;
    if magic.trim() != FIELD_MAGIC {
        return Err(Error::MalformedHeader(format!("expected `{FIELD_MAGIC}`, found `{}`", magic.trim())));
    }
    let dims: Vec<usize> = parse_tokens(&next_line("dimension")?)?;
    let bounds: Vec<f64> = parse_tokens(&next_line("extent")?)?;
    let grid = match (dims.as_slice(), bounds.as_slice()) {
        ([1, nx], [lo, hi]) => Grid::line(*lo, *hi, *nx),
        ([2, nx, ny], [xl, xh, yl, yh]) => Grid::rectangle([*xl, *xh], [*yl, *yh], *nx, *ny),
        _ => {
            return Err(Error::MalformedHeader(format!(
                "inconsistent dimension line {dims:?} / extents {bounds:?}"
            )))
        }
    }
    .map_err(|e| Error::MalformedHeader(e.to_string()))?;

    let expected = grid.node_count();
    let mut values = Vec::with_capacity(expected);
    for line in lines {
        let line = line?;
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        let v: f64 = token
            .parse()
            .map_err(|_| Error::InvalidField(format!("cannot parse value `{token}`")))?;
        if !v.is_finite() {
            return Err(Error::NonFiniteValue(values.len()));
        }
        values.push(v);
    }
    if values.len() != expected {
        return Err(Error::CountMismatch {
            expected,
            found: values.len(),
        });
    }
    NodalField::new(grid, values)
}

fn parse_tokens<T: std::str::FromStr>(line: &str) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| Error::MalformedHeader(format!("cannot parse header token `{t}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid::line(0.0, 1.0, 2).is_err());
        assert!(Grid::line(1.0, 1.0, 5).is_err());
        assert!(Grid::rectangle([0.0, 1.0], [0.0, -1.0], 4, 4).is_err());
    }

    #[test]
    fn measures_sum_to_domain() {
        let g = Grid::rectangle([1.0, 2.0], [-0.5, 0.25], 7, 5).unwrap();
        let total: f64 = g.elements().iter().map(|e| e.measure()).sum();
        assert!((total - g.measure()).abs() <= 1e-12 * g.measure());
        assert!(g.elements().iter().all(|e| e.measure() > 0.0));
        let lumped: f64 = g.lumped_measure().iter().sum();
        assert!((lumped - g.measure()).abs() < 1e-12);
    }

    #[test]
    fn boundary_tagging() {
        let g = Grid::unit_square(5).unwrap();
        assert_eq!(g.boundary_nodes().len(), 16);
        assert_eq!(g.interior_nodes().len(), 9);
        let l = Grid::line(0.0, 1.0, 9).unwrap();
        assert_eq!(l.boundary_nodes(), &[0, 8]);
        assert_eq!(l.node_coord(8), [1.0, 0.0]);
    }

    #[test]
    fn gradients_of_simple_fields() {
        let g = Grid::unit_square(6).unwrap();
        let c = NodalField::constant(g.clone(), 3.0);
        for e in 0..g.elements().len() {
            assert_eq!(p1_gradient(&c, e).norm(), 0.0);
        }
        let f = interpolate(&g, |x| 2.0 * x[0] - x[1]).unwrap();
        for e in 0..g.elements().len() {
            let d = p1_gradient(&f, e);
            assert!((d.get(0) - 2.0).abs() < 1e-13 && (d.get(1) + 1.0).abs() < 1e-13);
        }
        let l = Grid::line(0.0, 1.0, 11).unwrap();
        let f = interpolate(&l, |x| x[0]).unwrap();
        assert_eq!(f.values(), (0..11).map(|i| l.node_coord(i)[0]).collect::<Vec<_>>().as_slice());
        for e in 0..10 {
            assert!((p1_gradient(&f, e).get(0) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn interpolation_guards() {
        let g = Grid::rectangle([1.0, 2.0], [1.0, 2.0], 5, 5).unwrap();
        let f = interpolate(&g, |x| x[0].hypot(x[1]).sqrt()).unwrap();
        assert!(f.values().iter().all(|v| *v > 0.0));
        let bad = Grid::unit_square(5).unwrap();
        assert!(matches!(
            interpolate(&bad, |x| (x[0] - 0.5).ln()),
            Err(Error::InvalidField(_))
        ));
    }

    #[test]
    fn io_errors() {
        assert!(matches!(read_field("".as_bytes()), Err(Error::MalformedHeader(_))));
        let text = "DPFIELD v1\n1 4\n0 1\n0.0\n1.0\n";
        assert!(matches!(
            read_field(text.as_bytes()),
            Err(Error::CountMismatch { expected: 4, found: 2 })
        ));
        let text = "DPFIELD v1\n1 3\n0 1\n0.0\nNaN\n1.0\n";
        assert!(matches!(read_field(text.as_bytes()), Err(Error::NonFiniteValue(1))));
        let text = "DPFIELD v2\n1 3\n0 1\n0\n0\n0\n";
        assert!(matches!(read_field(text.as_bytes()), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn writes_seventeen_digits() {
        let g = Grid::line(0.0, 1.0, 3).unwrap();
        let f = NodalField::new(g, vec![0.1, 1.0 / 3.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let value_line = text.lines().nth(4).unwrap();
        let mantissa: String = value_line.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).collect();
        assert_eq!(mantissa.len(), 17);
        assert_eq!(read_field(text.as_bytes()).unwrap(), f);
    }
}
