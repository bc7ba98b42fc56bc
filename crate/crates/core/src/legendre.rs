//! Discrete Legendre-Fenchel transforms and gradient-constrained biconjugation.
//!
//! The transform `u*(y) = max_x <x, y> - u(x)` is computed one axis at a
//! time. Along a line, the maximiser is a vertex of the lower convex hull of
//! the points `(x_i, u_i)` and moves monotonically with `y`, so a hull pass
//! followed by a merge over the sorted dual coordinates is linear in the
//! number of points.
//!
//! In two dimensions the inner product is accumulated as
//! `x2*y2 + (x1*y1 - u)`; oracles that want bitwise agreement must use the
//! same association.

use rayon::prelude::*;
use robust::{orient2d, Coord};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::polytope::{GradientPolytope, GEOMETRY_TOL};

pub const DEFAULT_DUAL_RESOLUTION_1D: usize = 1025;
pub const DEFAULT_DUAL_RESOLUTION_2D: usize = 257;

pub fn default_dual_resolution(dim: usize) -> usize {
    if dim == 1 {
        DEFAULT_DUAL_RESOLUTION_1D
    } else {
        DEFAULT_DUAL_RESOLUTION_2D
    }
}

/// Dual resolution for `q` against `grid`: the default, raised so the dual
/// spacing is at most half the finest primal spacing. Coarser slope sampling
/// lets the envelope sag between tangent points by more than the contact
/// tolerance on wide polytopes.
pub fn dual_resolution_for(grid: &Grid, q: &GradientPolytope) -> usize {
    let (lo, hi) = q.bounding_box();
    let width = (0..q.dim()).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    let h = (0..grid.dim()).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min);
    let cap = if grid.dim() == 1 { 1 << 17 } else { 1025 };
    let need = (2.0 * width / h).ceil() as usize + 1;
    default_dual_resolution(grid.dim()).max(need.min(cap))
}

/// Sample grid over the bounding box of a gradient polytope.
///
/// Axes along which the polytope has zero extent carry a single node.
#[derive(Clone, Debug, PartialEq)]
pub struct DualGrid {
    axes: Vec<Vec<f64>>,
    inside: Vec<bool>,
}

impl DualGrid {
    pub fn new(q: &GradientPolytope, resolution: usize) -> Result<DualGrid> {
        if resolution < 2 {
            return Err(Error::DualResolution(resolution));
        }
        let (lo, hi) = q.bounding_box();
        let axes: Vec<Vec<f64>> = (0..q.dim())
            .map(|a| {
                if hi[a] > lo[a] {
                    let h = (hi[a] - lo[a]) / (resolution - 1) as f64;
                    (0..resolution).map(|i| lo[a] + i as f64 * h).collect()
                } else {
                    vec![lo[a]]
                }
            })
            .collect();
        let mut dual = DualGrid { axes, inside: Vec::new() };
        dual.inside = (0..dual.len()).map(|n| q.contains(dual.point(n), GEOMETRY_TOL)).collect();
        if !dual.inside.iter().any(|&b| b) {
            return Err(Error::Polytope("no dual node falls inside the polytope; raise the dual resolution".into()));
        }
        Ok(dual)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, n: usize) -> [f64; 2] {
        let n0 = self.axes[0].len();
        if self.axes.len() == 1 {
            [self.axes[0][n], 0.0]
        } else {
            [self.axes[0][n % n0], self.axes[1][n / n0]]
        }
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    /// Largest node spacing over the axes (0 for a single-node dual).
    pub fn spacing(&self) -> f64 {
        self.axes.iter().map(|a| if a.len() > 1 { a[1] - a[0] } else { 0.0 }).fold(0.0, f64::max)
    }
}

/// Values of a transform on the nodes of a dual grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DualFunction {
    pub dual: DualGrid,
    pub values: Vec<f64>,
}

fn coord(x: f64, u: f64) -> Coord<f64> {
    Coord { x, y: u }
}

/// `out[k] = max_i (xs[i]*ys[k] - us[i])`, skipping `us[i] = +inf`; `-inf` when every entry is skipped.
///
/// `xs` and `ys` must be nondecreasing.
pub(crate) fn conjugate_line(xs: &[f64], us: &[f64], ys: &[f64], out: &mut [f64], hull: &mut Vec<usize>) {
    hull.clear();
    for (i, (&x, &u)) in xs.iter().zip(us).enumerate() {
        if u == f64::INFINITY {
            continue;
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if orient2d(coord(xs[a], us[a]), coord(xs[b], us[b]), coord(x, u)) > 0.0 {
                break;
            }
            hull.pop();
        }
        hull.push(i);
    }
    if hull.is_empty() {
        out.fill(f64::NEG_INFINITY);
        return;
    }
    let val = |i: usize, y: f64| xs[i] * y - us[i];
    let mut k = 0;
    for (o, &y) in out.iter_mut().zip(ys) {
        let mut best = val(hull[k], y);
        while k + 1 < hull.len() {
            let next = val(hull[k + 1], y);
            if next < best {
                break;
            }
            best = next;
            k += 1;
        }
        *o = best;
    }
}

/// Separable transform between tensor grids; `src_vals` may hold `+inf` to exclude nodes.
pub(crate) fn transform(src_axes: &[&[f64]], src_vals: &[f64], dst_axes: &[&[f64]]) -> Vec<f64> {
    match src_axes.len() {
        1 => {
            let mut out = vec![0.0; dst_axes[0].len()];
            conjugate_line(src_axes[0], src_vals, dst_axes[0], &mut out, &mut Vec::new());
            out
        }
        _ => {
            let (nx, ny) = (src_axes[0].len(), src_axes[1].len());
            let (my1, my2) = (dst_axes[0].len(), dst_axes[1].len());
            // Pass 1 along the first axis, one source row at a time; stored transposed
            // so pass 2 reads contiguous columns.
            let mut partial = vec![0.0; ny * my1];
            let rows: Vec<Vec<f64>> = (0..ny)
                .into_par_iter()
                .map_init(Vec::new, |hull, j| {
                    let mut row = vec![0.0; my1];
                    conjugate_line(src_axes[0], &src_vals[j * nx..(j + 1) * nx], dst_axes[0], &mut row, hull);
                    row
                })
                .collect();
            for (j, row) in rows.iter().enumerate() {
                for (p, &v) in row.iter().enumerate() {
                    // -(-inf) = +inf marks rows that had no admissible node.
                    partial[p * ny + j] = -v;
                }
            }
            let cols: Vec<Vec<f64>> = (0..my1)
                .into_par_iter()
                .map_init(Vec::new, |hull, p| {
                    let mut col = vec![0.0; my2];
                    conjugate_line(src_axes[1], &partial[p * ny..(p + 1) * ny], dst_axes[1], &mut col, hull);
                    col
                })
                .collect();
            let mut out = vec![0.0; my1 * my2];
            for (p, col) in cols.iter().enumerate() {
                for (q, &v) in col.iter().enumerate() {
                    out[p + q * my1] = v;
                }
            }
            out
        }
    }
}

fn primal_axes(grid: &Grid) -> Vec<Vec<f64>> {
    (0..grid.dim()).map(|a| grid.axis_coords(a)).collect()
}

/// Legendre-Fenchel transform of `u` sampled on the nodes of `dual`.
pub fn legendre(u: &GridFunction, dual: &DualGrid) -> Result<DualFunction> {
    if u.grid().dim() != dual.dim() {
        return Err(Error::GridMismatch);
    }
    let xs = primal_axes(u.grid());
    let src: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let dst: Vec<&[f64]> = (0..dual.dim()).map(|a| dual.axis(a)).collect();
    Ok(DualFunction { dual: dual.clone(), values: transform(&src, u.values(), &dst) })
}

/// Largest grid function below `f` whose gradients lie in `q`, computed as
/// `P(x) = max_{y in Q} <x, y> - f*(y)` over the dual nodes inside `q`.
pub fn constrained_biconjugate(f: &GridFunction, q: &GradientPolytope, dual_resolution: usize) -> Result<GridFunction> {
    if f.grid().dim() != q.dim() {
        return Err(Error::Dimension(format!(
            "grid has dimension {} but the polytope has dimension {}",
            f.grid().dim(),
            q.dim()
        )));
    }
    let dual = DualGrid::new(q, dual_resolution)?;
    let conj = legendre(f, &dual)?;
    let masked: Vec<f64> =
        conj.values.iter().zip(dual.inside()).map(|(&v, &inside)| if inside { v } else { f64::INFINITY }).collect();
    let xs = primal_axes(f.grid());
    let src: Vec<&[f64]> = (0..dual.dim()).map(|a| dual.axis(a)).collect();
    let dst: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    GridFunction::new(f.grid().clone(), transform(&src, &masked, &dst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;
    use crate::grid::sample;
    use crate::harness::oracle::brute_force_legendre;
    use proptest::prelude::*;

    fn f(text: &str, grid: &Grid) -> GridFunction {
        sample(&Expression::parse(text).unwrap(), grid).unwrap()
    }

    #[test]
    fn half_square_is_self_dual() {
        let g = Grid::line(-3.0, 3.0, 601).unwrap();
        let h = g.spacing(0);
        let q = GradientPolytope::interval(-3.0, 3.0).unwrap();
        let dual = DualGrid::new(&q, 301).unwrap();
        let conj = legendre(&f("0.5*x^2", &g), &dual).unwrap();
        for (n, v) in conj.values.iter().enumerate() {
            let y = dual.point(n)[0];
            assert!((v - 0.5 * y * y).abs() <= 2.0 * h * h, "y = {y}");
        }
    }

    #[test]
    fn affine_conjugate() {
        let g = Grid::line(-2.0, 2.0, 41).unwrap();
        let q = GradientPolytope::interval(-1.0, 3.0).unwrap();
        let dual = DualGrid::new(&q, 5).unwrap();
        let conj = legendre(&f("2*x + 0.5", &g), &dual).unwrap();
        // Dual nodes are -1, 0, 1, 2, 3; at y = 2 the conjugate is -b.
        assert_eq!(conj.values[3], -0.5);
        // Away from the slope it grows at the box radius 2.
        assert!((conj.values[4] - (2.0 * 1.0 - 0.5)).abs() < 1e-14);
        assert!((conj.values[0] - (2.0 * 3.0 - 0.5)).abs() < 1e-14);
    }

    #[test]
    fn square_conjugate_at_one() {
        // Direct maximisation of x - x^2 over the grid: attained at x = 1/2.
        let g = Grid::line(-2.0, 2.0, 9).unwrap();
        let u = f("x^2", &g);
        let brute = (0..g.len()).map(|n| g.coord(0, n) - u.value(n)).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(brute, 0.25);
        let q = GradientPolytope::interval(-1.0, 1.0).unwrap();
        let dual = DualGrid::new(&q, 3).unwrap();
        let conj = legendre(&u, &dual).unwrap();
        assert_eq!(conj.values[2], 0.25);
    }

    #[test]
    fn envelope_of_square_with_unit_slopes() {
        // Analytic envelope: x^2 on |x| <= 1/2, |x| - 1/4 beyond.
        let g = Grid::line(-2.0, 2.0, 2049).unwrap();
        let h = g.spacing(0);
        let q = GradientPolytope::interval(-1.0, 1.0).unwrap();
        let p = constrained_biconjugate(&f("x^2", &g), &q, DEFAULT_DUAL_RESOLUTION_1D).unwrap();
        for (x, want) in [(0.0, 0.0), (1.0, 0.75), (2.0, 1.75)] {
            let n = ((x + 2.0) / h).round() as usize;
            assert!((p.value(n) - want).abs() <= 2.0 * h, "P({x}) = {}", p.value(n));
        }
    }

    #[test]
    fn admissible_affine_is_fixed() {
        let g = Grid::line(-1.0, 1.0, 101).unwrap();
        let q = GradientPolytope::interval(-1.0, 1.0).unwrap();
        let u = f("0.5*x - 0.25", &g);
        let p = constrained_biconjugate(&u, &q, 1025).unwrap();
        assert!(p.sup_distance(&u).unwrap() < 1e-13);
    }

    #[test]
    fn separable_two_dimensional_envelope() {
        let g1 = Grid::line(-2.0, 2.0, 65).unwrap();
        let g2 = Grid::square(-2.0, 2.0, 65).unwrap();
        let q1 = GradientPolytope::interval(-1.0, 1.0).unwrap();
        let q2 = GradientPolytope::unit_box(2, 1.0);
        let p1 = constrained_biconjugate(&f("x^2", &g1), &q1, 257).unwrap();
        let p2 = constrained_biconjugate(&f("x^2 + y^2", &g2), &q2, 257).unwrap();
        for n in 0..g2.len() {
            let (i, j) = g2.multi_index(n);
            let want = p1.value(i) + p1.value(j);
            assert!((p2.value(n) - want).abs() < 1e-12, "node ({i},{j})");
        }
    }

    #[test]
    fn segment_class_in_two_dimensions() {
        let g = Grid::square(-1.0, 1.0, 33).unwrap();
        let q = GradientPolytope::segment([-1.0, 0.0], [1.0, 0.0]).unwrap();
        let p = constrained_biconjugate(&f("x^2 + y^2", &g), &q, 257).unwrap();
        // Admissible functions depend on x alone, so P(x, y) = P(x, 0) = x^2 for |x| <= 1/2.
        let n = g.index(8, 3);
        assert!((p.value(n) - 0.25).abs() < 1e-12);
        let point = GradientPolytope::point([0.0, 0.0]).unwrap();
        let p0 = constrained_biconjugate(&f("x^2 + y^2", &g), &point, 257).unwrap();
        assert!(p0.values().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn rejects_small_dual_resolution() {
        let g = Grid::line(-1.0, 1.0, 11).unwrap();
        let q = GradientPolytope::interval(-1.0, 1.0).unwrap();
        assert!(matches!(constrained_biconjugate(&f("x", &g), &q, 1), Err(Error::DualResolution(1))));
    }

    #[test]
    fn fast_transform_matches_brute_force_on_structured_input() {
        for (text, res) in [("x^2", 513), ("abs(x)", 257), ("min(x^2, (x-1)^2)", 301), ("0", 64), ("x^4 - x^2", 200)] {
            let g = Grid::line(-2.0, 3.0, res).unwrap();
            let u = f(text, &g);
            let q = GradientPolytope::interval(-7.0, 5.0).unwrap();
            let dual = DualGrid::new(&q, 777).unwrap();
            assert_eq!(legendre(&u, &dual).unwrap(), brute_force_legendre(&u, &dual).unwrap(), "{text}");
        }
        let g = Grid::square(-1.0, 1.5, 40).unwrap();
        let u = f("x^2 + x*y + y^2 + abs(x - y)", &g);
        let q = GradientPolytope::polygon(vec![[-2.0, -1.0], [2.0, -2.0], [0.5, 3.0]]).unwrap();
        let dual = DualGrid::new(&q, 51).unwrap();
        assert_eq!(legendre(&u, &dual).unwrap(), brute_force_legendre(&u, &dual).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fast_transform_matches_brute_force(values in proptest::collection::vec(-5.0f64..5.0, 2..80), ylo in -6.0f64..0.0, yw in 0.0f64..8.0) {
            let g = Grid::line(-1.3, 2.1, values.len()).unwrap();
            let u = GridFunction::new(g, values).unwrap();
            let q = GradientPolytope::interval(ylo, ylo + yw).unwrap();
            let dual = DualGrid::new(&q, 97).unwrap();
            prop_assert_eq!(legendre(&u, &dual).unwrap(), brute_force_legendre(&u, &dual).unwrap());
        }

        #[test]
        fn fast_transform_matches_brute_force_2d(values in proptest::collection::vec(-3.0f64..3.0, 36), s in 0.1f64..4.0) {
            let g = Grid::square(-1.0, 1.0, 6).unwrap();
            let u = GridFunction::new(g, values).unwrap();
            let q = GradientPolytope::polygon(vec![[-s, -s], [s, -0.5 * s], [0.0, s]]).unwrap();
            let dual = DualGrid::new(&q, 23).unwrap();
            prop_assert_eq!(legendre(&u, &dual).unwrap(), brute_force_legendre(&u, &dual).unwrap());
        }

        #[test]
        fn fenchel_young(values in proptest::collection::vec(-5.0f64..5.0, 2..60)) {
            let g = Grid::line(-1.0, 1.0, values.len()).unwrap();
            let u = GridFunction::new(g.clone(), values).unwrap();
            let q = GradientPolytope::interval(-4.0, 4.0).unwrap();
            let dual = DualGrid::new(&q, 41).unwrap();
            let conj = legendre(&u, &dual).unwrap();
            for n in 0..g.len() {
                for (k, &c) in conj.values.iter().enumerate() {
                    let (x, y) = (g.coord(0, n), dual.point(k)[0]);
                    prop_assert!(u.value(n) + c >= x * y - u.value(n) + u.value(n) - 1e-12);
                }
            }
        }
    }
}
