//! Uniform grids on boxes in one or two dimensions, node data, and node sets.
//!
//! Nodes are numbered with the first axis varying fastest. Node coordinates
//! are always `lo + i * h` with `h = (hi - lo) / (resolution - 1)`, so two
//! grids built from the same parameters agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expression;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    resolution: [usize; 2],
}

impl Grid {
    /// Builds a grid; `lo`, `hi` and `resolution` must have `dim` entries.
    pub fn new(dim: usize, lo: &[f64], hi: &[f64], resolution: &[usize]) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::Dimension(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if lo.len() != dim || hi.len() != dim || resolution.len() != dim {
            return Err(Error::Dimension(format!(
                "expected {dim} bounds and resolutions, got lo {}, hi {}, resolution {}",
                lo.len(),
                hi.len(),
                resolution.len()
            )));
        }
        let mut g = Grid { dim, lo: [0.0; 2], hi: [0.0; 2], resolution: [1; 2] };
        for axis in 0..dim {
            // `!(lo < hi)` also rejects NaN bounds.
            if !(lo[axis] < hi[axis]) || !lo[axis].is_finite() || !hi[axis].is_finite() {
                return Err(Error::DegenerateBox { axis, lo: lo[axis], hi: hi[axis] });
            }
            if resolution[axis] < 2 {
                return Err(Error::Resolution { axis, resolution: resolution[axis] });
            }
            g.lo[axis] = lo[axis];
            g.hi[axis] = hi[axis];
            g.resolution[axis] = resolution[axis];
        }
        Ok(g)
    }

    pub fn line(lo: f64, hi: f64, resolution: usize) -> Result<Grid> {
        Grid::new(1, &[lo], &[hi], &[resolution])
    }

    pub fn square(lo: f64, hi: f64, resolution: usize) -> Result<Grid> {
        Grid::new(2, &[lo, lo], &[hi, hi], &[resolution, resolution])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.lo[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.hi[axis]
    }

    pub fn resolution(&self, axis: usize) -> usize {
        self.resolution[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.resolution[axis] - 1) as f64
    }

    /// Largest spacing over the axes.
    pub fn h(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.resolution[0] * self.resolution[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + i as f64 * self.spacing(axis)
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.resolution[axis]).map(|i| self.coord(axis, i)).collect()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + j * self.resolution[0]
    }

    pub fn multi_index(&self, node: usize) -> (usize, usize) {
        (node % self.resolution[0], node / self.resolution[0])
    }

    /// Coordinates of a node; the second entry is 0 in one dimension.
    pub fn point(&self, node: usize) -> [f64; 2] {
        let (i, j) = self.multi_index(node);
        if self.dim == 1 {
            [self.coord(0, i), 0.0]
        } else {
            [self.coord(0, i), self.coord(1, j)]
        }
    }

    /// Number of nodes between `node` and the nearest box face (0 on the boundary).
    pub fn depth(&self, node: usize) -> usize {
        let (i, j) = self.multi_index(node);
        let mut d = i.min(self.resolution[0] - 1 - i);
        if self.dim == 2 {
            d = d.min(j).min(self.resolution[1] - 1 - j);
        }
        d
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.depth(node) == 0
    }

    /// Volume of a single grid cell (length in 1D, area in 2D).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Same box with every axis resampled at `resolution` nodes.
    pub fn with_resolution(&self, resolution: usize) -> Result<Grid> {
        let res = vec![resolution; self.dim];
        Grid::new(self.dim, &self.lo[..self.dim], &self.hi[..self.dim], &res)
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Finite real values attached to the nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            let p = grid.point(node);
            return Err(Error::NonFinite { node, coords: p[..grid.dim()].to_vec(), value: values[node] });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Result<GridFunction> {
        let values = (0..grid.len()).map(|n| f(grid.point(n))).collect();
        GridFunction::new(grid.clone(), values)
    }

    pub fn constant(grid: &Grid, c: f64) -> Result<GridFunction> {
        GridFunction::new(grid.clone(), vec![c; grid.len()])
    }

    pub fn grid(&self) -> &Grid {
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

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Pointwise `op(self, other)`; errors on grid mismatch or non-finite output.
    pub fn zip_with(&self, other: &GridFunction, op: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| op(a, b)).collect();
        GridFunction::new(self.grid.clone(), values)
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> Result<GridFunction> {
        GridFunction::new(self.grid.clone(), self.values.iter().map(|&v| op(v)).collect())
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn shift(&self, c: f64) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| v + c).collect() }
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn pointwise_max(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, f64::max)
    }

    /// Largest `|self - other|` over all nodes.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Largest difference quotient in absolute value along grid lines.
    pub fn lipschitz(&self) -> f64 {
        let g = &self.grid;
        let mut lip: f64 = 0.0;
        for axis in 0..g.dim() {
            let h = g.spacing(axis);
            let stride = if axis == 0 { 1 } else { g.resolution(0) };
            for n in 0..g.len() {
                let (i, j) = g.multi_index(n);
                let k = if axis == 0 { i } else { j };
                if k + 1 < g.resolution(axis) {
                    lip = lip.max(((self.values[n + stride] - self.values[n]) / h).abs());
                }
            }
        }
        lip
    }

    /// Largest absolute second difference along grid lines (not divided by `h^2`).
    pub fn max_second_difference(&self) -> f64 {
        let mut m: f64 = 0.0;
        self.for_each_second_difference(|_, _, d| m = m.max(d.abs()));
        m
    }

    /// Calls `visit(axis, centre_node, second_difference)` for every interior triple on a grid line.
    pub(crate) fn for_each_second_difference(&self, mut visit: impl FnMut(usize, usize, f64)) {
        let g = &self.grid;
        for axis in 0..g.dim() {
            let stride = if axis == 0 { 1 } else { g.resolution(0) };
            for n in 0..g.len() {
                let (i, j) = g.multi_index(n);
                let k = if axis == 0 { i } else { j };
                if k >= 1 && k + 1 < g.resolution(axis) {
                    let v = &self.values;
                    visit(axis, n, v[n + stride] - 2.0 * v[n] + v[n - stride]);
                }
            }
        }
    }
}

/// Evaluates `expr` at every node of `grid`.
pub fn sample(expr: &Expression, grid: &Grid) -> Result<GridFunction> {
    if grid.dim() == 1 && expr.uses_y() {
        return Err(Error::InvalidArgument(format!("expression '{expr}' uses y on a one-dimensional grid")));
    }
    let values = (0..grid.len())
        .map(|n| {
            let [x, y] = grid.point(n);
            expr.eval(x, y)
        })
        .collect();
    GridFunction::new(grid.clone(), values)
}

/// Nodewise minimum of a nonempty list of functions on a common grid.
pub fn pointwise_min(fs: &[GridFunction]) -> Result<GridFunction> {
    let (first, rest) = fs.split_first().ok_or(Error::Empty("pointwise_min needs at least one function"))?;
    let mut out = first.clone();
    for f in rest {
        out = out.zip_with(f, f64::min)?;
    }
    Ok(out)
}

/// Boolean mask over the nodes of a grid, tagged with the tolerance used to build it.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSet {
    grid: Grid,
    mask: Vec<bool>,
    tolerance: f64,
}

impl NodeSet {
    pub fn new(grid: Grid, mask: Vec<bool>, tolerance: f64) -> Result<NodeSet> {
        if mask.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "mask of length {} for a grid with {} nodes",
                mask.len(),
                grid.len()
            )));
        }
        Ok(NodeSet { grid, mask, tolerance })
    }

    pub fn all(grid: &Grid) -> NodeSet {
        NodeSet { grid: grid.clone(), mask: vec![true; grid.len()], tolerance: 0.0 }
    }

    pub fn none(grid: &Grid) -> NodeSet {
        NodeSet { grid: grid.clone(), mask: vec![false; grid.len()], tolerance: 0.0 }
    }

    pub fn from_predicate(grid: &Grid, tolerance: f64, pred: impl Fn(usize) -> bool) -> NodeSet {
        NodeSet { grid: grid.clone(), mask: (0..grid.len()).map(pred).collect(), tolerance }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn contains(&self, node: usize) -> bool {
        self.mask[node]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(n, _)| n)
    }

    fn combine(&self, other: &NodeSet, op: impl Fn(bool, bool) -> bool) -> Result<NodeSet> {
        self.grid.check_same(&other.grid)?;
        Ok(NodeSet {
            grid: self.grid.clone(),
            mask: self.mask.iter().zip(&other.mask).map(|(&a, &b)| op(a, b)).collect(),
            tolerance: self.tolerance.max(other.tolerance),
        })
    }

    pub fn intersection(&self, other: &NodeSet) -> Result<NodeSet> {
        self.combine(other, |a, b| a && b)
    }

    pub fn union(&self, other: &NodeSet) -> Result<NodeSet> {
        self.combine(other, |a, b| a || b)
    }

    pub fn difference(&self, other: &NodeSet) -> Result<NodeSet> {
        self.combine(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> NodeSet {
        NodeSet { grid: self.grid.clone(), mask: self.mask.iter().map(|b| !b).collect(), tolerance: self.tolerance }
    }

    pub fn is_subset(&self, other: &NodeSet) -> Result<bool> {
        self.grid.check_same(&other.grid)?;
        Ok(self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b))
    }

    /// Nodes whose whole `radius`-node neighbourhood (sup norm) lies in the set.
    pub fn eroded(&self, radius: usize) -> NodeSet {
        let g = &self.grid;
        let r = radius as isize;
        let (nx, ny) = (g.resolution(0) as isize, g.resolution(1) as isize);
        let mask = (0..g.len())
            .map(|n| {
                let (i, j) = g.multi_index(n);
                let (i, j) = (i as isize, j as isize);
                let dj = if g.dim() == 2 { r } else { 0 };
                (-r..=r).all(|a| {
                    (-dj..=dj).all(|b| {
                        let (p, q) = (i + a, j + b);
                        p >= 0 && q >= 0 && p < nx && q < ny && self.mask[g.index(p as usize, q as usize)]
                    })
                })
            })
            .collect();
        NodeSet { grid: g.clone(), mask, tolerance: self.tolerance }
    }

    /// Axis-aligned bounding box of the member nodes, or `None` if empty.
    pub fn bounding_box(&self) -> Option<([f64; 2], [f64; 2])> {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for n in self.iter() {
            let p = self.grid.point(n);
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo[0] <= hi[0]).then_some((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_dimensional_nodes() {
        let g = Grid::new(1, &[-1.0], &[1.0], &[3]).unwrap();
        assert_eq!(g.axis_coords(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(g.spacing(0), 1.0);
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn two_dimensional_nodes() {
        let g = Grid::new(2, &[-2.0, -2.0], &[2.0, 2.0], &[5, 5]).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!((g.spacing(0), g.spacing(1)), (1.0, 1.0));
        assert_eq!(g.point(g.index(4, 1)), [2.0, -1.0]);
        assert!(g.is_boundary(g.index(0, 2)));
        assert_eq!(g.depth(g.index(2, 2)), 2);
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let err = Grid::new(1, &[1.0], &[1.0], &[3]).unwrap_err();
        assert!(err.to_string().contains("degenerate box"));
        assert!(matches!(Grid::line(0.0, 1.0, 1), Err(Error::Resolution { .. })));
        assert!(Grid::new(3, &[0.0; 3], &[1.0; 3], &[2; 3]).is_err());
    }

    #[test]
    fn sample_examples() {
        let g = Grid::line(-2.0, 2.0, 5).unwrap();
        let f = sample(&Expression::parse("x^2").unwrap(), &g).unwrap();
        assert_eq!(f.values(), &[4.0, 1.0, 0.0, 1.0, 4.0]);
        let g = Grid::line(-1.0, 1.0, 3).unwrap();
        let f = sample(&Expression::parse("abs(x)").unwrap(), &g).unwrap();
        assert_eq!(f.values(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn sample_names_failing_node() {
        let g = Grid::line(-1.0, 1.0, 3).unwrap();
        match sample(&Expression::parse("1/x").unwrap(), &g).unwrap_err() {
            Error::NonFinite { node, coords, .. } => {
                assert_eq!(node, 1);
                assert_eq!(coords, vec![0.0]);
            }
            other => panic!("unexpected {other}"),
        }
        assert!(sample(&Expression::parse("y").unwrap(), &g).is_err());
    }

    #[test]
    fn pointwise_min_examples() {
        let g = Grid::line(-1.0, 1.0, 5).unwrap();
        let f1 = sample(&Expression::parse("x^2").unwrap(), &g).unwrap();
        let f2 = sample(&Expression::parse("(x-1)^2").unwrap(), &g).unwrap();
        let m = pointwise_min(&[f1.clone(), f2]).unwrap();
        assert_eq!(m.value(3), 0.25);
        assert_eq!(pointwise_min(std::slice::from_ref(&f1)).unwrap(), f1);
        let f3 = f1.scale(2.0);
        assert_eq!(pointwise_min(&[f1.clone(), f3]).unwrap(), f1);
        assert!(pointwise_min(&[]).is_err());
        let other = GridFunction::constant(&Grid::line(-1.0, 1.0, 7).unwrap(), 0.0).unwrap();
        assert!(matches!(pointwise_min(&[f1, other]), Err(Error::GridMismatch)));
    }

    #[test]
    fn erosion_shrinks_interval() {
        let g = Grid::line(0.0, 1.0, 11).unwrap();
        let s = NodeSet::from_predicate(&g, 0.0, |n| (2..=8).contains(&n));
        let e = s.eroded(2);
        assert_eq!(e.iter().collect::<Vec<_>>(), vec![4, 5, 6]);
    }

    fn arb_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, n)
    }

    proptest! {
        #[test]
        fn rebuilt_grid_is_identical(lo in -5.0f64..0.0, w in 0.1f64..5.0, n in 2usize..200) {
            let a = Grid::line(lo, lo + w, n).unwrap();
            let b = Grid::line(lo, lo + w, n).unwrap();
            prop_assert_eq!(a.axis_coords(0), b.axis_coords(0));
        }

        #[test]
        fn min_is_a_lattice_operation(a in arb_values(9), b in arb_values(9), c in arb_values(9)) {
            let g = Grid::line(0.0, 1.0, 9).unwrap();
            let f = |v: &Vec<f64>| GridFunction::new(g.clone(), v.clone()).unwrap();
            let (fa, fb, fc) = (f(&a), f(&b), f(&c));
            prop_assert_eq!(pointwise_min(&[fa.clone(), fa.clone()]).unwrap(), fa.clone());
            prop_assert_eq!(pointwise_min(&[fa.clone(), fb.clone()]).unwrap(), pointwise_min(&[fb.clone(), fa.clone()]).unwrap());
            let left = pointwise_min(&[pointwise_min(&[fa.clone(), fb.clone()]).unwrap(), fc.clone()]).unwrap();
            let right = pointwise_min(&[fa, pointwise_min(&[fb, fc]).unwrap()]).unwrap();
            prop_assert_eq!(left, right);
        }
    }
}
