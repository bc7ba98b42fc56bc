//! Lower convex hulls of lifted grid data and the subdifferential cells they induce.
//!
//! In two dimensions the lower hull of `{(x_i, u_i)}` is built as a regular
//! triangulation by incremental insertion: a node whose lift lies strictly
//! below the current surface carves out the triangles whose planes pass
//! above it and is joined to the horizon; a node on or above the surface is
//! not a hull vertex and is skipped. All orientation decisions use exact
//! predicates, so ties (coplanar lifts from affine regions) are resolved
//! the same way every time: earlier nodes in the insertion order win.
//! Coplanar vertices that survive have cells of zero area, so the measures
//! do not depend on which of them were kept.
//!
//! The subdifferential cell of a hull vertex is the polygon of facet
//! gradients around it; cells of boundary vertices are unbounded and are
//! closed off with far points placed beyond the clipping polytope.

use robust::{orient2d, orient3d, Coord, Coord3D};

use crate::grid::Grid;
use crate::polytope::polygon_area;

const NONE: u32 = u32::MAX;

/// Per-node subdifferential cell of the lower hull.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    /// The node is not a vertex of the lower hull.
    Empty,
    /// Interval of slopes (one dimension); bounds may be infinite.
    Interval(f64, f64),
    /// Counterclockwise polygon of gradients (two dimensions).
    Polygon(Vec<[f64; 2]>),
}

/// Lower-hull subdifferential cells of grid data. `far` must exceed the norm
/// of every gradient that will later be clipped against.
pub fn cells(grid: &Grid, z: &[f64], far: f64) -> Vec<Cell> {
    match grid.dim() {
        1 => cells_1d(&grid.axis_coords(0), z),
        _ => Triangulation::build(grid, z).cells(far),
    }
}

fn cells_1d(xs: &[f64], z: &[f64]) -> Vec<Cell> {
    let c = |i: usize| Coord { x: xs[i], y: z[i] };
    let mut hull: Vec<usize> = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        while hull.len() >= 2 && orient2d(c(hull[hull.len() - 2]), c(hull[hull.len() - 1]), c(i)) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    let slope = |a: usize, b: usize| (z[b] - z[a]) / (xs[b] - xs[a]);
    let mut out = vec![Cell::Empty; xs.len()];
    for (k, &i) in hull.iter().enumerate() {
        let left = if k == 0 { f64::NEG_INFINITY } else { slope(hull[k - 1], i) };
        let right = if k + 1 == hull.len() { f64::INFINITY } else { slope(i, hull[k + 1]) };
        out[i] = Cell::Interval(left, right);
    }
    out
}

struct Triangulation<'a> {
    pts: Vec<[f64; 2]>,
    z: &'a [f64],
    tri: Vec<[u32; 3]>,
    nbr: Vec<[u32; 3]>,
    alive: Vec<bool>,
    free: Vec<u32>,
    stamp: Vec<u32>,
    last: u32,
}

impl<'a> Triangulation<'a> {
    fn c2(&self, v: u32) -> Coord<f64> {
        let p = self.pts[v as usize];
        Coord { x: p[0], y: p[1] }
    }

    fn c3(&self, v: u32) -> Coord3D<f64> {
        let p = self.pts[v as usize];
        Coord3D { x: p[0], y: p[1], z: self.z[v as usize] }
    }

    /// True when the lift of `p` lies strictly below the plane of triangle `t`.
    fn below(&self, t: u32, p: u32) -> bool {
        let [a, b, c] = self.tri[t as usize];
        orient3d(self.c3(a), self.c3(b), self.c3(c), self.c3(p)) > 0.0
    }

    fn new_tri(&mut self, v: [u32; 3], n: [u32; 3]) -> u32 {
        if let Some(t) = self.free.pop() {
            self.tri[t as usize] = v;
            self.nbr[t as usize] = n;
            self.alive[t as usize] = true;
            t
        } else {
            self.tri.push(v);
            self.nbr.push(n);
            self.alive.push(true);
            self.stamp.push(0);
            (self.tri.len() - 1) as u32
        }
    }

    fn build(grid: &Grid, z: &'a [f64]) -> Triangulation<'a> {
        let (nx, ny) = (grid.resolution(0), grid.resolution(1));
        let pts: Vec<[f64; 2]> = (0..grid.len()).map(|n| grid.point(n)).collect();
        let mut tr = Triangulation {
            pts,
            z,
            tri: Vec::with_capacity(2 * grid.len()),
            nbr: Vec::with_capacity(2 * grid.len()),
            alive: Vec::with_capacity(2 * grid.len()),
            free: Vec::new(),
            stamp: Vec::with_capacity(2 * grid.len()),
            last: 0,
        };
        let c = [
            grid.index(0, 0) as u32,
            grid.index(nx - 1, 0) as u32,
            grid.index(nx - 1, ny - 1) as u32,
            grid.index(0, ny - 1) as u32,
        ];
        // Split the box along the diagonal that keeps the surface convex.
        if orient3d(tr.c3(c[0]), tr.c3(c[1]), tr.c3(c[2]), tr.c3(c[3])) > 0.0 {
            tr.new_tri([c[0], c[1], c[3]], [1, NONE, NONE]);
            tr.new_tri([c[1], c[2], c[3]], [NONE, 0, NONE]);
        } else {
            tr.new_tri([c[0], c[1], c[2]], [NONE, 1, NONE]);
            tr.new_tri([c[0], c[2], c[3]], [NONE, NONE, 0]);
        }
        let mut done = vec![false; grid.len()];
        for &v in &c {
            done[v as usize] = true;
        }
        // Coarse-to-fine insertion keeps cavities and walks short.
        let mut stride = 1usize;
        while stride * 2 < nx.max(ny) {
            stride *= 2;
        }
        let mut step = 0u32;
        loop {
            for j in (0..ny).step_by(stride) {
                for i in (0..nx).step_by(stride) {
                    let v = grid.index(i, j);
                    if !done[v] {
                        done[v] = true;
                        step += 1;
                        tr.insert(v as u32, step);
                    }
                }
            }
            if stride == 1 {
                break;
            }
            stride /= 2;
        }
        tr
    }

    fn locate(&self, p: u32) -> u32 {
        let mut t = self.last;
        let pc = self.c2(p);
        // Rotating the first edge tested keeps the walk from cycling.
        let mut rot = 0usize;
        'walk: loop {
            let v = self.tri[t as usize];
            for s in 0..3 {
                let k = (s + rot) % 3;
                let (a, b) = (v[(k + 1) % 3], v[(k + 2) % 3]);
                if orient2d(self.c2(a), self.c2(b), pc) < 0.0 {
                    let n = self.nbr[t as usize][k];
                    debug_assert!(n != NONE, "walked out of the domain");
                    t = n;
                    rot = (rot + 1) % 3;
                    continue 'walk;
                }
            }
            return t;
        }
    }

    fn insert(&mut self, p: u32, step: u32) {
        let t0 = self.locate(p);
        if !self.below(t0, p) {
            return;
        }
        let mut cavity = vec![t0];
        self.stamp[t0 as usize] = step;
        let mut k = 0;
        while k < cavity.len() {
            let t = cavity[k];
            k += 1;
            for s in 0..3 {
                let n = self.nbr[t as usize][s];
                if n != NONE && self.stamp[n as usize] != step && self.below(n, p) {
                    self.stamp[n as usize] = step;
                    cavity.push(n);
                }
            }
        }
        // Horizon edges (a, b), oriented as in their cavity triangle, with the outside neighbour.
        let mut horizon: Vec<(u32, u32, u32)> = Vec::new();
        for &t in &cavity {
            let v = self.tri[t as usize];
            for s in 0..3 {
                let n = self.nbr[t as usize][s];
                if n == NONE || self.stamp[n as usize] != step {
                    horizon.push((v[(s + 1) % 3], v[(s + 2) % 3], n));
                }
            }
        }
        for &t in &cavity {
            self.alive[t as usize] = false;
            self.free.push(t);
        }
        // Pending half-edges (from, to) -> (triangle, slot) waiting for their twin.
        let mut pending: Vec<(u32, u32, u32, usize)> = Vec::with_capacity(2 * horizon.len());
        let mut created = NONE;
        for (a, b, outside) in horizon {
            let o = orient2d(self.c2(a), self.c2(b), self.c2(p));
            if o == 0.0 {
                // `p` splits a boundary edge; nothing to create there.
                debug_assert!(outside == NONE, "collinear interior horizon edge");
                continue;
            }
            debug_assert!(o > 0.0, "cavity is not star-shaped from the new point");
            let t = self.new_tri([a, b, p], [NONE, NONE, outside]);
            self.stamp[t as usize] = 0;
            created = t;
            if outside != NONE {
                let slot = (0..3).find(|&s| {
                    let w = self.tri[outside as usize];
                    w[(s + 1) % 3] == b && w[(s + 2) % 3] == a
                });
                if let Some(s) = slot {
                    self.nbr[outside as usize][s] = t;
                }
            }
            // Edge (b, p) sits opposite `a` (slot 0); edge (p, a) opposite `b` (slot 1).
            for (from, to, slot) in [(b, p, 0usize), (p, a, 1usize)] {
                if let Some(pos) = pending.iter().position(|&(f, g, _, _)| f == to && g == from) {
                    let (_, _, other, oslot) = pending.swap_remove(pos);
                    self.nbr[t as usize][slot] = other;
                    self.nbr[other as usize][oslot] = t;
                } else {
                    pending.push((from, to, t, slot));
                }
            }
        }
        if created != NONE {
            self.last = created;
        }
    }

    fn gradient(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.tri[t];
        let (pa, pb, pc) = (self.pts[a as usize], self.pts[b as usize], self.pts[c as usize]);
        let (za, zb, zc) = (self.z[a as usize], self.z[b as usize], self.z[c as usize]);
        let (d1x, d1y, dz1) = (pb[0] - pa[0], pb[1] - pa[1], zb - za);
        let (d2x, d2y, dz2) = (pc[0] - pa[0], pc[1] - pa[1], zc - za);
        let det = d1x * d2y - d1y * d2x;
        [(dz1 * d2y - dz2 * d1y) / det, (d1x * dz2 - d2x * dz1) / det]
    }

    fn cells(&self, far: f64) -> Vec<Cell> {
        let n = self.pts.len();
        let mut incident = vec![NONE; n];
        let mut grads = vec![[0.0; 2]; self.tri.len()];
        let mut max_norm: f64 = 0.0;
        for t in 0..self.tri.len() {
            if !self.alive[t] {
                continue;
            }
            grads[t] = self.gradient(t);
            max_norm = max_norm.max(grads[t][0].hypot(grads[t][1]));
            for &v in &self.tri[t] {
                incident[v as usize] = t as u32;
            }
        }
        let r = 2.0 * (far + max_norm) + 1.0;
        let slot_of = |t: u32, v: u32| self.tri[t as usize].iter().position(|&w| w == v).unwrap_or(0);
        let mut out = vec![Cell::Empty; n];
        for v in 0..n {
            let start = incident[v];
            if start == NONE {
                continue;
            }
            let v32 = v as u32;
            // Rotate clockwise to the first triangle, or all the way round for interior vertices.
            let mut first = start;
            let mut boundary = false;
            loop {
                let k = slot_of(first, v32);
                let prev = self.nbr[first as usize][(k + 2) % 3];
                if prev == NONE {
                    boundary = true;
                    break;
                }
                first = prev;
                if first == start {
                    break;
                }
            }
            let mut poly = Vec::new();
            let mut t = first;
            let last = loop {
                poly.push(grads[t as usize]);
                let k = slot_of(t, v32);
                let next = self.nbr[t as usize][(k + 1) % 3];
                if next == NONE || next == first {
                    break t;
                }
                t = next;
            };
            if boundary {
                let pv = self.pts[v];
                let outward = |from: [f64; 2], to: [f64; 2]| {
                    let d = [to[0] - from[0], to[1] - from[1]];
                    let len = d[0].hypot(d[1]);
                    [d[1] / len, -d[0] / len]
                };
                let kf = slot_of(first, v32);
                let a = self.pts[self.tri[first as usize][(kf + 1) % 3] as usize];
                let n_first = outward(pv, a);
                let kl = slot_of(last, v32);
                let b = self.pts[self.tri[last as usize][(kl + 2) % 3] as usize];
                let n_last = outward(b, pv);
                let g1 = poly[0];
                let gm = poly[poly.len() - 1];
                poly.push([gm[0] + r * n_last[0], gm[1] + r * n_last[1]]);
                let mid = [
                    0.5 * (g1[0] + gm[0]) + r * (n_first[0] + n_last[0]),
                    0.5 * (g1[1] + gm[1]) + r * (n_first[1] + n_last[1]),
                ];
                poly.push(mid);
                poly.push([g1[0] + r * n_first[0], g1[1] + r * n_first[1]]);
            }
            if polygon_area(&poly) < 0.0 {
                poly.reverse();
            }
            out[v] = Cell::Polygon(poly);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..grid.len())
            .map(|n| {
                let p = grid.point(n);
                f(p[0], p[1])
            })
            .collect()
    }

    fn area(c: &Cell) -> f64 {
        match c {
            Cell::Polygon(p) => polygon_area(p),
            _ => 0.0,
        }
    }

    #[test]
    fn one_dimensional_cells_follow_slope_jumps() {
        let xs = [-1.0, 0.0, 1.0, 2.0];
        let z = [1.0, 0.0, 1.0, 2.0];
        let c = cells_1d(&xs, &z);
        assert_eq!(c[0], Cell::Interval(f64::NEG_INFINITY, -1.0));
        assert_eq!(c[1], Cell::Interval(-1.0, 1.0));
        // Collinear with its neighbours: not a strict vertex.
        assert_eq!(c[2], Cell::Empty);
        assert_eq!(c[3], Cell::Interval(1.0, f64::INFINITY));
    }

    #[test]
    fn pyramid_apex_cell_is_a_diamond() {
        let g = Grid::square(-1.0, 1.0, 9).unwrap();
        let z = sampled(&g, |x, y| x.abs().max(y.abs()));
        let c = cells(&g, &z, 2.0);
        let centre = g.index(4, 4);
        assert!((area(&c[centre]) - 2.0).abs() < 1e-12);
        let interior_mass: f64 = (0..g.len()).filter(|&n| !g.is_boundary(n) && n != centre).map(|n| area(&c[n])).sum();
        assert!(interior_mass.abs() < 1e-12);
    }

    #[test]
    fn paraboloid_cells_are_grid_squares() {
        let g = Grid::square(-1.0, 1.0, 17).unwrap();
        let h = g.spacing(0);
        let z = sampled(&g, |x, y| 0.5 * (x * x + y * y));
        let c = cells(&g, &z, 2.0);
        for n in 0..g.len() {
            if !g.is_boundary(n) {
                assert!((area(&c[n]) - h * h).abs() < 1e-12, "node {n}");
            }
        }
    }

    #[test]
    fn saddle_points_above_the_hull_are_dropped() {
        let g = Grid::square(-1.0, 1.0, 5).unwrap();
        let z = sampled(&g, |x, y| -x * y);
        let c = cells(&g, &z, 2.0);
        assert_eq!(c[g.index(2, 2)], Cell::Empty);
    }
}
