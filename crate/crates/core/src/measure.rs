//! Discrete Monge-Ampere measures.
//!
//! The mass at a node is the size of its subdifferential cell (an interval
//! in one dimension, a polygon in two) read off the lower convex hull of the
//! lifted samples and clipped to the class polytope. Mass at boundary nodes
//! is not attributed to the node; it is summed into `boundary_deficit`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, NodeSet};
use crate::hull::{cells, Cell};
use crate::polytope::{polygon_area, GradientPolytope};

/// Relative tolerance on negative second differences accepted as convex.
pub const CONVEXITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    grid: Grid,
    mass: Vec<f64>,
    boundary_deficit: f64,
}

impl DiscreteMeasure {
    pub fn new(grid: Grid, mass: Vec<f64>, boundary_deficit: f64) -> Result<DiscreteMeasure> {
        if mass.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(n) = mass.iter().position(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "mass {} at node {n} is not a finite nonnegative number",
                mass[n]
            )));
        }
        Ok(DiscreteMeasure { grid, mass, boundary_deficit })
    }

    pub fn zero(grid: &Grid) -> DiscreteMeasure {
        DiscreteMeasure { grid: grid.clone(), mass: vec![0.0; grid.len()], boundary_deficit: 0.0 }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn mass(&self, node: usize) -> f64 {
        self.mass[node]
    }

    pub fn boundary_deficit(&self) -> f64 {
        self.boundary_deficit
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Mass of the nodes in `s`.
    pub fn total_on(&self, s: &NodeSet) -> Result<f64> {
        self.grid.check_same(s.grid())?;
        Ok(s.iter().map(|n| self.mass[n]).sum())
    }

    /// The measure with every node outside `s` zeroed (and no boundary deficit).
    pub fn restrict(&self, s: &NodeSet) -> Result<DiscreteMeasure> {
        self.grid.check_same(s.grid())?;
        let mass = self.mass.iter().zip(s.mask()).map(|(&m, &keep)| if keep { m } else { 0.0 }).collect();
        Ok(DiscreteMeasure { grid: self.grid.clone(), mass, boundary_deficit: 0.0 })
    }

    /// Sums of mass over square bins of `width` nodes per axis, in row-major bin order.
    pub fn binned(&self, width: usize) -> Vec<f64> {
        bin_sums(&self.grid, &self.mass, width)
    }
}

/// Bin of a node for square bins of `width` nodes per axis.
pub fn bin_of(grid: &Grid, node: usize, width: usize) -> usize {
    let w = width.max(1);
    let (i, j) = grid.multi_index(node);
    let bx = grid.resolution(0).div_ceil(w);
    i / w + bx * (j / w)
}

pub fn bin_count(grid: &Grid, width: usize) -> usize {
    let w = width.max(1);
    (0..grid.dim()).map(|a| grid.resolution(a).div_ceil(w)).product()
}

/// Per-bin sums of node values.
pub fn bin_sums(grid: &Grid, values: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; bin_count(grid, width)];
    for (n, v) in values.iter().enumerate() {
        out[bin_of(grid, n, width)] += v;
    }
    out
}

fn check_dims(u: &GridFunction, q: &GradientPolytope) -> Result<()> {
    if u.grid().dim() != q.dim() {
        return Err(Error::Dimension(format!(
            "{}-d function measured against a {}-d polytope",
            u.grid().dim(),
            q.dim()
        )));
    }
    Ok(())
}

fn check_convex(u: &GridFunction) -> Result<()> {
    let scale = u.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = -CONVEXITY_TOL * scale;
    let mut bad: Option<(usize, usize, f64)> = None;
    u.for_each_second_difference(|axis, node, d| {
        if d < tol && bad.is_none_or(|(_, _, w)| d < w) {
            bad = Some((axis, node, d));
        }
    });
    match bad {
        None => Ok(()),
        Some((axis, node, d)) => {
            let (i, j) = u.grid().multi_index(node);
            let line = match (u.grid().dim(), axis) {
                (1, _) => "the x axis".to_string(),
                (_, 0) => format!("row j = {j}"),
                _ => format!("column i = {i}"),
            };
            Err(Error::NonConvex { line, node, second_difference: d })
        }
    }
}

fn alexandrov(u: &GridFunction, q: &GradientPolytope) -> Result<DiscreteMeasure> {
    check_dims(u, q)?;
    let grid = u.grid();
    let mut mass = vec![0.0; grid.len()];
    let mut deficit = 0.0;
    if grid.dim() == 2 && !q.is_full_dimensional() {
        return Ok(DiscreteMeasure { grid: grid.clone(), mass, boundary_deficit: 0.0 });
    }
    for (n, cell) in cells(grid, u.values(), q.radius()).into_iter().enumerate() {
        let m = match cell {
            Cell::Empty => 0.0,
            Cell::Interval(a, b) => q.clip_interval_length(a, b),
            Cell::Polygon(p) => polygon_area(&q.clip_polygon(&p)).abs(),
        };
        if grid.is_boundary(n) {
            deficit += m;
        } else {
            mass[n] = m;
        }
    }
    Ok(DiscreteMeasure { grid: grid.clone(), mass, boundary_deficit: deficit })
}

/// Monge-Ampere measure of a grid-convex `u` with gradients clipped to `q`.
pub fn ma(u: &GridFunction, q: &GradientPolytope) -> Result<DiscreteMeasure> {
    check_convex(u)?;
    alexandrov(u, q)
}

/// Measure of the convex minorant of the samples, with no convexity check.
///
/// This is the measure used for obstacles: where the obstacle is locally
/// convex it agrees with `ma`, and nodes strictly above their convex
/// minorant carry no mass.
pub fn barrier_ma(f: &GridFunction, q: &GradientPolytope) -> Result<DiscreteMeasure> {
    alexandrov(f, q)
}

/// Bounding box of all axis difference quotients of `f`, slightly inflated.
///
/// Every subgradient of the convex minorant at an interior hull vertex lies
/// in this box, so measuring against it clips nothing in the interior.
pub fn gradient_bounds(f: &GridFunction) -> Result<GradientPolytope> {
    let g = f.grid();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for axis in 0..g.dim() {
        let h = g.spacing(axis);
        let stride = if axis == 0 { 1 } else { g.resolution(0) };
        for n in 0..g.len() {
            let (i, j) = g.multi_index(n);
            let k = if axis == 0 { i } else { j };
            if k + 1 < g.resolution(axis) {
                let d = (f.value(n + stride) - f.value(n)) / h;
                lo[axis] = lo[axis].min(d);
                hi[axis] = hi[axis].max(d);
            }
        }
    }
    let pad = |a: usize| 1e-9 * (1.0 + lo[a].abs().max(hi[a].abs()));
    if g.dim() == 1 {
        GradientPolytope::interval(lo[0] - pad(0), hi[0] + pad(0))
    } else {
        // Keep degenerate directions degenerate: a zero-width range means a
        // genuinely lower-dimensional gradient image.
        let grow = |a: usize| if hi[a] > lo[a] { pad(a) } else { 0.0 };
        GradientPolytope::rectangle([lo[0] - grow(0), lo[1] - grow(1)], [hi[0] + grow(0), hi[1] + grow(1)])
    }
}

/// One subgradient per node of the convex minorant, or `None` where the node is not a hull vertex.
///
/// In one dimension this is the mean of the adjacent difference quotients
/// (one-sided at the ends). In two it is the centroid of the cell for
/// interior nodes and the mean of the surrounding facet gradients otherwise.
pub fn subgradients(u: &GridFunction) -> Result<Vec<Option<[f64; 2]>>> {
    let g = u.grid();
    if g.dim() == 1 {
        let h = g.spacing(0);
        let v = u.values();
        let n = v.len();
        return Ok((0..n)
            .map(|i| {
                let left = (i > 0).then(|| (v[i] - v[i - 1]) / h);
                let right = (i + 1 < n).then(|| (v[i + 1] - v[i]) / h);
                let s = match (left, right) {
                    (Some(a), Some(b)) => 0.5 * (a + b),
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => 0.0,
                };
                Some([s, 0.0])
            })
            .collect());
    }
    Ok(cells(g, u.values(), 0.0)
        .into_iter()
        .enumerate()
        .map(|(n, c)| match c {
            Cell::Polygon(p) if !g.is_boundary(n) && polygon_area(&p) > 0.0 => Some(centroid(&p)),
            Cell::Polygon(p) => {
                // Boundary cells end with three far points closing them off.
                let pts = if g.is_boundary(n) { facet_part(&p, p.len() - 3) } else { p };
                let s = pts.iter().fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
                Some([s[0] / pts.len() as f64, s[1] / pts.len() as f64])
            }
            _ => None,
        })
        .collect())
}

fn centroid(p: &[[f64; 2]]) -> [f64; 2] {
    let n = p.len();
    let (mut cx, mut cy, mut a) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (u, v) = (p[i], p[(i + 1) % n]);
        let w = u[0] * v[1] - v[0] * u[1];
        a += w;
        cx += (u[0] + v[0]) * w;
        cy += (u[1] + v[1]) * w;
    }
    [cx / (3.0 * a), cy / (3.0 * a)]
}

/// The finite (facet-gradient) vertices of a boundary cell, which has exactly three far points.
fn facet_part(p: &[[f64; 2]], k: usize) -> Vec<[f64; 2]> {
    // The cell may have been reversed for orientation; far points are the three largest in norm.
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[a][0].hypot(p[a][1]).total_cmp(&p[b][0].hypot(p[b][1])));
    idx.truncate(k);
    idx.sort_unstable();
    idx.into_iter().map(|i| p[i]).collect()
}

/// Result of a polarized mixed measure.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedMeasure {
    pub measure: DiscreteMeasure,
    /// Total negative mass removed by clamping the polarization at zero.
    pub clamped_total: f64,
    /// Most negative raw per-node value before clamping (0 if none).
    pub min_raw: f64,
}

fn polarize(uv: DiscreteMeasure, u: DiscreteMeasure, v: DiscreteMeasure) -> MixedMeasure {
    let mut clamped = 0.0;
    let mut min_raw: f64 = 0.0;
    let mass = (0..uv.mass.len())
        .map(|n| {
            let m = 0.5 * (uv.mass[n] - u.mass[n] - v.mass[n]);
            min_raw = min_raw.min(m);
            if m < 0.0 {
                clamped -= m;
                0.0
            } else {
                m
            }
        })
        .collect();
    let deficit = (0.5 * (uv.boundary_deficit - u.boundary_deficit - v.boundary_deficit)).max(0.0);
    MixedMeasure {
        measure: DiscreteMeasure { grid: uv.grid, mass, boundary_deficit: deficit },
        clamped_total: clamped,
        min_raw,
    }
}

fn mixed_with(
    u: &GridFunction,
    v: &GridFunction,
    qu: &GradientPolytope,
    qv: &GradientPolytope,
    measure: fn(&GridFunction, &GradientPolytope) -> Result<DiscreteMeasure>,
) -> Result<MixedMeasure> {
    if u.grid().dim() != 2 {
        return Err(Error::Dimension("mixed measures are defined in two dimensions only".into()));
    }
    let sum = u.add(v)?;
    let qs = qu.minkowski_sum(qv)?;
    Ok(polarize(measure(&sum, &qs)?, measure(u, qu)?, measure(v, qv)?))
}

/// Mixed Monge-Ampere measure `MA(u, v) = (MA(u + v) - MA(u) - MA(v)) / 2`,
/// with the sum measured against `qu + qv`.
pub fn mixed_ma(
    u: &GridFunction,
    v: &GridFunction,
    qu: &GradientPolytope,
    qv: &GradientPolytope,
) -> Result<MixedMeasure> {
    mixed_with(u, v, qu, qv, ma)
}

/// Mixed measure of two obstacles, built from `barrier_ma`.
pub fn mixed_barrier_ma(
    f1: &GridFunction,
    f2: &GridFunction,
    q1: &GradientPolytope,
    q2: &GradientPolytope,
) -> Result<MixedMeasure> {
    mixed_with(f1, f2, q1, q2, barrier_ma)
}

/// Mixed area `(vol(a + b) - vol(a) - vol(b)) / 2` of two polygons.
pub fn mixed_volume(a: &GradientPolytope, b: &GradientPolytope) -> Result<f64> {
    Ok(0.5 * (a.minkowski_sum(b)?.volume() - a.volume() - b.volume()))
}

/// `ma(max(u, V - k))` restricted to the nodes where `u > V - k` holds on the
/// node and all its grid neighbours.
///
/// On that set `max(u, V - k)` coincides with `u` around the node, so in one
/// dimension the node carries exactly the mass of `ma(u)`. Without the extra
/// node, a kink of `V - k` falling between two nodes leaves part of its slope
/// jump on the inner node.
pub fn truncated_ma(u: &GridFunction, v: &GridFunction, k: f64, q: &GradientPolytope) -> Result<DiscreteMeasure> {
    if !(k >= 0.0) {
        return Err(Error::InvalidArgument(format!("truncation level {k} must be nonnegative")));
    }
    let lowered = v.shift(-k);
    let w = u.pointwise_max(&lowered)?;
    let m = ma(&w, q)?;
    let strict = NodeSet::from_predicate(u.grid(), 1e-12, |n| u.value(n) - lowered.value(n) > 1e-12).eroded(1);
    m.restrict(&strict)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonPluripolar {
    /// Truncated measure at the last level of the schedule.
    pub measure: DiscreteMeasure,
    /// Total mass changed by less than `1e-9` over the last step.
    pub stabilized: bool,
    /// First schedule index whose total differs from the previous one by less than `1e-9`.
    pub stabilized_at: Option<usize>,
    pub totals: Vec<f64>,
    /// Largest per-node decrease seen between consecutive levels (0 if none).
    pub max_drop: f64,
}

/// Truncated measures along an increasing schedule of levels.
///
/// Fails if any node loses more than `1e-12` mass between consecutive levels.
pub fn nonpluripolar_ma(
    u: &GridFunction,
    v: &GridFunction,
    q: &GradientPolytope,
    schedule: &[f64],
) -> Result<NonPluripolar> {
    if schedule.is_empty() {
        return Err(Error::Empty("truncation schedule"));
    }
    if schedule.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("truncation schedule must be strictly increasing".into()));
    }
    let mut prev: Option<DiscreteMeasure> = None;
    let mut totals = Vec::with_capacity(schedule.len());
    let mut max_drop: f64 = 0.0;
    let mut stabilized_at = None;
    for (step, &k) in schedule.iter().enumerate() {
        let m = truncated_ma(u, v, k, q)?;
        if let Some(p) = &prev {
            for n in 0..m.mass.len() {
                let drop = p.mass[n] - m.mass[n];
                max_drop = max_drop.max(drop);
                if drop > 1e-12 {
                    return Err(Error::Monotonicity { node: n, step: step - 1, next: step, drop });
                }
            }
            let change = (m.total_mass() - p.total_mass()).abs();
            if change < 1e-9 {
                stabilized_at.get_or_insert(step);
            } else {
                stabilized_at = None;
            }
        }
        totals.push(m.total_mass());
        prev = Some(m);
    }
    let n = totals.len();
    let stabilized = n >= 2 && (totals[n - 1] - totals[n - 2]).abs() < 1e-9;
    Ok(NonPluripolar { measure: prev.expect("schedule is nonempty"), stabilized, stabilized_at, totals, max_drop })
}
