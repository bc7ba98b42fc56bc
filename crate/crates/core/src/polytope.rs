//! Convex polytopes of admissible gradients.
//!
//! A class is represented by the set `Q` of gradients its potentials may
//! take: an interval in one dimension, a convex polygon (possibly a segment
//! or a single point) in two. `Q` nonempty corresponds to a pseudoeffective
//! class, full-dimensional `Q` to a big one, and `volume(Q)` is the total
//! Monge-Ampère mass available to the class.

use robust::{orient2d, Coord};

use crate::error::{Error, Result};

/// Tolerance for convexity and membership tests on vertex data.
pub const GEOMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum GradientPolytope {
    Interval {
        lo: f64,
        hi: f64,
    },
    /// Counterclockwise vertices; one vertex is a point, two a segment.
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
}

fn coord(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

pub(crate) fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull with exact orientation tests; counterclockwise, collinear points dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2
                && orient2d(coord(hull[hull.len() - 2]), coord(hull[hull.len() - 1]), coord(p)) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 2 {
        // All points collinear: the chain collapses; keep the two extremes.
        return vec![pts[0], pts[pts.len() - 1]];
    }
    hull
}

impl GradientPolytope {
    pub fn interval(lo: f64, hi: f64) -> Result<GradientPolytope> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Polytope(format!("interval [{lo}, {hi}] is empty or not finite")));
        }
        Ok(GradientPolytope::Interval { lo, hi })
    }

    /// Convex polygon from counterclockwise vertices. Collinear input collapses to a segment.
    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<GradientPolytope> {
        if vertices.is_empty() {
            return Err(Error::Polytope("polygon needs at least one vertex".into()));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Polytope("polygon vertices must be finite".into()));
        }
        let n = vertices.len();
        if n >= 3 {
            let scale = vertices.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                let (a, b, c) = (vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
                if cross(a, b, c) < -GEOMETRY_TOL * scale * scale {
                    return Err(Error::Polytope(format!(
                        "vertices are not a counterclockwise convex polygon (turn at vertex {})",
                        (i + 1) % n
                    )));
                }
            }
        }
        Ok(GradientPolytope::Polygon { vertices: convex_hull(&vertices) })
    }

    pub fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> Result<GradientPolytope> {
        if !(lo[0] <= hi[0] && lo[1] <= hi[1]) {
            return Err(Error::Polytope(format!("rectangle {lo:?}..{hi:?} is empty")));
        }
        GradientPolytope::polygon(vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    }

    pub fn segment(a: [f64; 2], b: [f64; 2]) -> Result<GradientPolytope> {
        GradientPolytope::polygon(vec![a, b])
    }

    pub fn point(p: [f64; 2]) -> Result<GradientPolytope> {
        GradientPolytope::polygon(vec![p])
    }

    /// The polytope `{0}` of the given dimension.
    pub fn origin(dim: usize) -> GradientPolytope {
        match dim {
            1 => GradientPolytope::Interval { lo: 0.0, hi: 0.0 },
            _ => GradientPolytope::Polygon { vertices: vec![[0.0, 0.0]] },
        }
    }

    /// `[-r, r]` or `[-r, r]^2`.
    pub fn unit_box(dim: usize, r: f64) -> GradientPolytope {
        match dim {
            1 => GradientPolytope::Interval { lo: -r, hi: r },
            _ => GradientPolytope::Polygon { vertices: convex_hull(&[[-r, -r], [r, -r], [r, r], [-r, r]]) },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            GradientPolytope::Interval { .. } => 1,
            GradientPolytope::Polygon { .. } => 2,
        }
    }

    /// Vertices as planar points (second coordinate 0 in one dimension).
    pub fn vertices(&self) -> Vec<[f64; 2]> {
        match self {
            GradientPolytope::Interval { lo, hi } => vec![[*lo, 0.0], [*hi, 0.0]],
            GradientPolytope::Polygon { vertices } => vertices.clone(),
        }
    }

    /// Length in 1D, area in 2D; zero for lower-dimensional polytopes.
    pub fn volume(&self) -> f64 {
        match self {
            GradientPolytope::Interval { lo, hi } => hi - lo,
            GradientPolytope::Polygon { vertices } => polygon_area(vertices).abs(),
        }
    }

    pub fn is_full_dimensional(&self) -> bool {
        self.volume() > 0.0
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            GradientPolytope::Interval { lo, hi } => ([*lo, 0.0], [*hi, 0.0]),
            GradientPolytope::Polygon { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for a in 0..2 {
                        lo[a] = lo[a].min(v[a]);
                        hi[a] = hi[a].max(v[a]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Largest Euclidean norm of a point of the polytope.
    pub fn radius(&self) -> f64 {
        self.vertices().iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)
    }

    /// `sup_{y in Q} <x, y>`.
    pub fn support(&self, x: [f64; 2]) -> f64 {
        match self {
            GradientPolytope::Interval { lo, hi } => (lo * x[0]).max(hi * x[0]),
            GradientPolytope::Polygon { vertices } => {
                vertices.iter().map(|v| v[0] * x[0] + v[1] * x[1]).fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    /// Membership with boundary slack `tol`.
    pub fn contains(&self, y: [f64; 2], tol: f64) -> bool {
        match self {
            GradientPolytope::Interval { lo, hi } => y[0] >= lo - tol && y[0] <= hi + tol,
            GradientPolytope::Polygon { vertices } => match vertices.len() {
                1 => (y[0] - vertices[0][0]).hypot(y[1] - vertices[0][1]) <= tol,
                2 => segment_distance(vertices[0], vertices[1], y) <= tol,
                n => (0..n).all(|i| {
                    let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
                    cross(a, b, y) >= -tol * len
                }),
            },
        }
    }

    pub fn contains_polytope(&self, other: &GradientPolytope, tol: f64) -> bool {
        self.dim() == other.dim() && other.vertices().iter().all(|&v| self.contains(v, tol))
    }

    pub fn minkowski_sum(&self, other: &GradientPolytope) -> Result<GradientPolytope> {
        match (self, other) {
            (GradientPolytope::Interval { lo: a, hi: b }, GradientPolytope::Interval { lo: c, hi: d }) => {
                GradientPolytope::interval(a + c, b + d)
            }
            (GradientPolytope::Polygon { vertices: p }, GradientPolytope::Polygon { vertices: q }) => {
                let sums: Vec<[f64; 2]> =
                    p.iter().flat_map(|u| q.iter().map(move |v| [u[0] + v[0], u[1] + v[1]])).collect();
                Ok(GradientPolytope::Polygon { vertices: convex_hull(&sums) })
            }
            _ => Err(Error::Dimension("Minkowski sum of polytopes of different dimension".into())),
        }
    }

    pub fn scaled(&self, s: f64) -> Result<GradientPolytope> {
        if !(s >= 0.0) {
            return Err(Error::Polytope(format!("scale factor {s} must be nonnegative")));
        }
        Ok(match self {
            GradientPolytope::Interval { lo, hi } => GradientPolytope::Interval { lo: lo * s, hi: hi * s },
            GradientPolytope::Polygon { vertices } => GradientPolytope::Polygon {
                vertices: convex_hull(&vertices.iter().map(|v| [v[0] * s, v[1] * s]).collect::<Vec<_>>()),
            },
        })
    }

    pub fn translated(&self, t: [f64; 2]) -> GradientPolytope {
        match self {
            GradientPolytope::Interval { lo, hi } => GradientPolytope::Interval { lo: lo + t[0], hi: hi + t[0] },
            GradientPolytope::Polygon { vertices } => {
                GradientPolytope::Polygon { vertices: vertices.iter().map(|v| [v[0] + t[0], v[1] + t[1]]).collect() }
            }
        }
    }

    /// Length of `[a, b] ∩ Q` for an interval class.
    pub fn clip_interval_length(&self, a: f64, b: f64) -> f64 {
        match self {
            GradientPolytope::Interval { lo, hi } => (b.min(*hi) - a.max(*lo)).max(0.0),
            GradientPolytope::Polygon { .. } => 0.0,
        }
    }

    /// Intersection of a convex polygon with `Q` (Sutherland-Hodgman). Empty unless `Q` has area.
    pub fn clip_polygon(&self, poly: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let GradientPolytope::Polygon { vertices: q } = self else {
            return Vec::new();
        };
        if q.len() < 3 {
            return Vec::new();
        }
        let mut out: Vec<[f64; 2]> = poly.to_vec();
        let n = q.len();
        for i in 0..n {
            if out.is_empty() {
                break;
            }
            let (a, b) = (q[i], q[(i + 1) % n]);
            let input = std::mem::take(&mut out);
            let m = input.len();
            for k in 0..m {
                let (p, r) = (input[k], input[(k + 1) % m]);
                let (sp, sr) = (cross(a, b, p), cross(a, b, r));
                if sp >= 0.0 {
                    out.push(p);
                }
                if (sp >= 0.0) != (sr >= 0.0) {
                    let t = sp / (sp - sr);
                    out.push([p[0] + t * (r[0] - p[0]), p[1] + t * (r[1] - p[1])]);
                }
            }
        }
        out
    }
}

/// Signed shoelace area (positive for counterclockwise order).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s
}

fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volumes() {
        assert_eq!(GradientPolytope::interval(-1.0, 1.0).unwrap().volume(), 2.0);
        let tri = GradientPolytope::polygon(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(tri.volume(), 0.5);
        let seg = GradientPolytope::segment([-1.0, 0.0], [1.0, 0.0]).unwrap();
        assert_eq!(seg.volume(), 0.0);
        assert!(!seg.is_full_dimensional());
        assert_eq!(GradientPolytope::point([0.0, 0.0]).unwrap().volume(), 0.0);
    }

    #[test]
    fn rejects_clockwise_and_empty() {
        assert!(GradientPolytope::polygon(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).is_err());
        assert!(GradientPolytope::polygon(vec![]).is_err());
        assert!(GradientPolytope::interval(1.0, -1.0).is_err());
    }

    #[test]
    fn collinear_vertices_collapse_to_segment() {
        let q = GradientPolytope::polygon(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        assert_eq!(q.vertices(), vec![[0.0, 0.0], [2.0, 2.0]]);
        assert!(q.contains([1.0, 1.0], GEOMETRY_TOL));
        assert!(!q.contains([1.0, 1.1], GEOMETRY_TOL));
    }

    #[test]
    fn support_function_of_simplex() {
        let tri = GradientPolytope::polygon(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(tri.support([-1.0, 2.0]), 2.0);
        assert_eq!(tri.support([-1.0, -2.0]), 0.0);
    }

    #[test]
    fn minkowski_sum_of_segments_is_square() {
        let a = GradientPolytope::segment([-1.0, 0.0], [1.0, 0.0]).unwrap();
        let b = GradientPolytope::segment([0.0, -1.0], [0.0, 1.0]).unwrap();
        let s = a.minkowski_sum(&b).unwrap();
        assert_eq!(s.volume(), 4.0);
        assert_eq!(s.vertices().len(), 4);
    }

    #[test]
    fn clipping_a_square_by_a_triangle() {
        let tri = GradientPolytope::polygon(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]).unwrap();
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let clipped = tri.clip_polygon(&square);
        assert!((polygon_area(&clipped) - 1.0).abs() < 1e-15);
        let far = [[5.0, 5.0], [6.0, 5.0], [6.0, 6.0]];
        assert!(tri.clip_polygon(&far).len() < 3);
    }

    #[test]
    fn inclusion_by_vertices() {
        let q = GradientPolytope::interval(-1.0, 1.0).unwrap();
        assert!(q.contains_polytope(&GradientPolytope::interval(0.0, 1.0).unwrap(), GEOMETRY_TOL));
        assert!(!q.contains_polytope(&GradientPolytope::interval(0.0, 2.0).unwrap(), GEOMETRY_TOL));
    }
}
