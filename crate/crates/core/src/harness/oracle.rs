//! Direct, quadratic-cost reference implementations used to validate the
//! fast paths. None of these share code with the code they check.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::legendre::{DualFunction, DualGrid};
use crate::measure::DiscreteMeasure;
use crate::polytope::{GradientPolytope, GEOMETRY_TOL};

/// `u*(y) = max_x <x, y> - u(x)` by exhaustive search, accumulated as
/// `x2*y2 + (x1*y1 - u)` so that it agrees bitwise with the fast transform.
pub fn brute_force_legendre(u: &GridFunction, dual: &DualGrid) -> Result<DualFunction> {
    let grid = u.grid();
    if grid.dim() != dual.dim() {
        return Err(Error::GridMismatch);
    }
    let pts: Vec<[f64; 2]> = (0..grid.len()).map(|n| grid.point(n)).collect();
    let values = (0..dual.len())
        .into_par_iter()
        .map(|k| {
            let y = dual.point(k);
            pts.iter()
                .zip(u.values())
                .map(|(x, v)| if grid.dim() == 1 { x[0] * y[0] - v } else { x[1] * y[1] + (x[0] * y[0] - v) })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(DualFunction { dual: dual.clone(), values })
}

fn sample_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi > lo {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    } else {
        vec![lo]
    }
}

/// Slopes sampled on a uniform lattice over the bounding box of `q`, keeping those inside.
fn slope_samples(q: &GradientPolytope, per_axis: usize) -> Vec<[f64; 2]> {
    let (lo, hi) = q.bounding_box();
    let xs = sample_axis(lo[0], hi[0], per_axis);
    if q.dim() == 1 {
        return xs.into_iter().map(|x| [x, 0.0]).collect();
    }
    let ys = sample_axis(lo[1], hi[1], per_axis);
    ys.iter().flat_map(|&y| xs.iter().map(move |&x| [x, y])).filter(|&p| q.contains(p, GEOMETRY_TOL)).collect()
}

/// `P(x) = max_y [min_j (f(x_j) - <y, x_j>) + <y, x>]` over `samples` slopes per axis in `q`.
pub fn brute_force_envelope(f: &GridFunction, q: &GradientPolytope, samples: usize) -> Result<GridFunction> {
    if samples < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 slope samples per axis, got {samples}")));
    }
    let grid = f.grid();
    if grid.dim() != q.dim() {
        return Err(Error::Dimension("obstacle and class differ in dimension".into()));
    }
    let pts: Vec<[f64; 2]> = (0..grid.len()).map(|n| grid.point(n)).collect();
    let ys = slope_samples(q, samples);
    if ys.is_empty() {
        return Err(Error::Polytope("no slope sample falls inside the class".into()));
    }
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    // Intercept of the best supporting plane with each sampled slope.
    let intercepts: Vec<f64> = ys
        .par_iter()
        .map(|&y| pts.iter().zip(f.values()).map(|(&x, v)| v - dot(y, x)).fold(f64::INFINITY, f64::min))
        .collect();
    let values = pts
        .par_iter()
        .map(|&x| ys.iter().zip(&intercepts).map(|(&y, c)| c + dot(y, x)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    GridFunction::new(grid.clone(), values)
}

/// Alexandrov measure by counting: each cell-centred slope sample in `q` is
/// assigned to the node minimising `u(x_j) - <y, x_j>` (lowest index on
/// ties) and contributes its cell volume there.
pub fn brute_force_ma(u: &GridFunction, q: &GradientPolytope, y_resolution: usize) -> Result<DiscreteMeasure> {
    if y_resolution < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 slope samples per axis, got {y_resolution}")));
    }
    let grid = u.grid();
    if grid.dim() != q.dim() {
        return Err(Error::Dimension("function and class differ in dimension".into()));
    }
    let (lo, hi) = q.bounding_box();
    let dims = grid.dim();
    if (0..dims).any(|a| hi[a] <= lo[a]) {
        return Ok(DiscreteMeasure::zero(grid));
    }
    let step: Vec<f64> = (0..dims).map(|a| (hi[a] - lo[a]) / y_resolution as f64).collect();
    let cell: f64 = step.iter().product();
    let centre = |a: usize, i: usize| lo[a] + (i as f64 + 0.5) * step[a];
    let pts: Vec<[f64; 2]> = (0..grid.len()).map(|n| grid.point(n)).collect();
    let rows = if dims == 1 { 1 } else { y_resolution };
    let counts = (0..rows)
        .into_par_iter()
        .fold(
            || vec![0usize; grid.len()],
            |mut acc, r| {
                for c in 0..y_resolution {
                    let y = if dims == 1 { [centre(0, c), 0.0] } else { [centre(0, c), centre(1, r)] };
                    if !q.contains(y, GEOMETRY_TOL) {
                        continue;
                    }
                    let mut best = 0;
                    let mut best_v = f64::INFINITY;
                    for (j, (x, v)) in pts.iter().zip(u.values()).enumerate() {
                        let w = v - (y[0] * x[0] + y[1] * x[1]);
                        if w < best_v {
                            best_v = w;
                            best = j;
                        }
                    }
                    acc[best] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0usize; grid.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let mut mass = vec![0.0; grid.len()];
    let mut deficit = 0.0;
    for (n, c) in counts.into_iter().enumerate() {
        let m = c as f64 * cell;
        if grid.is_boundary(n) {
            deficit += m;
        } else {
            mass[n] = m;
        }
    }
    DiscreteMeasure::new(grid.clone(), mass, deficit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;
    use crate::grid::{sample, Grid};

    fn f(text: &str, grid: &Grid) -> GridFunction {
        sample(&Expression::parse(text).unwrap(), grid).unwrap()
    }

    #[test]
    fn counting_a_kink() {
        let g = Grid::line(-1.0, 1.0, 21).unwrap();
        let m = brute_force_ma(&f("abs(x)", &g), &GradientPolytope::interval(-1.0, 1.0).unwrap(), 4001).unwrap();
        assert!((m.mass(10) - 2.0).abs() <= 2.0 / 4000.0);
    }

    #[test]
    fn counting_an_affine_function() {
        let g = Grid::line(-1.0, 1.0, 21).unwrap();
        let m = brute_force_ma(&f("0.5*x", &g), &GradientPolytope::interval(-1.0, 1.0).unwrap(), 100).unwrap();
        assert_eq!(m.total_mass(), 0.0);
        assert!((m.boundary_deficit() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn counting_a_pyramid() {
        let g = Grid::square(-1.0, 1.0, 21).unwrap();
        let m = brute_force_ma(&f("max(abs(x), abs(y))", &g), &GradientPolytope::unit_box(2, 1.0), 401).unwrap();
        assert!((m.mass(g.index(10, 10)) - 2.0).abs() <= 0.04);
    }

    #[test]
    fn envelope_of_admissible_affine() {
        let g = Grid::line(-2.0, 2.0, 41).unwrap();
        let a = f("0.5*x - 1", &g);
        let p = brute_force_envelope(&a, &GradientPolytope::interval(-1.0, 1.0).unwrap(), 5).unwrap();
        assert!(p.sup_distance(&a).unwrap() < 1e-12);
    }

    #[test]
    fn envelope_grows_with_the_class() {
        let g = Grid::line(-2.0, 2.0, 81).unwrap();
        let obstacle = f("x^2", &g);
        let small = brute_force_envelope(&obstacle, &GradientPolytope::interval(-0.5, 0.5).unwrap(), 101).unwrap();
        let big = brute_force_envelope(&obstacle, &GradientPolytope::interval(-1.0, 1.0).unwrap(), 201).unwrap();
        assert!(small.values().iter().zip(big.values()).all(|(a, b)| *a <= b + 1e-12));
    }
}
