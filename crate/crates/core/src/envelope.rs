//! Gradient-constrained envelopes: the largest convex minorant of an obstacle
//! whose subgradients stay in a class polytope, rooftop envelopes of several
//! obstacles, maximal envelopes for model singularity types, and generators
//! for test potentials.

use crate::error::{Error, Result};
use crate::grid::{pointwise_min, Grid, GridFunction, NodeSet};
use crate::harness::contact_set;
use crate::legendre::{constrained_biconjugate, dual_resolution_for, DualGrid};
use crate::measure::subgradients;
use crate::polytope::{GradientPolytope, GEOMETRY_TOL};
use crate::rng::SplitMix64;

/// Width in nodes of the boundary layer excluded from measures.
pub const HALO_WIDTH: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeDiagnostics {
    pub dual_resolution: usize,
    pub dual_spacing: f64,
    /// Largest `envelope - obstacle` over the nodes (clamped at 0).
    pub max_violation: f64,
    pub halo_width: usize,
    pub contact_tolerance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeResult {
    pub envelope: GridFunction,
    /// Contact set against the obstacle (the pointwise minimum for rooftops).
    pub contact: NodeSet,
    /// One contact set per obstacle for rooftop envelopes; empty otherwise.
    pub obstacle_contacts: Vec<NodeSet>,
    pub diagnostics: EnvelopeDiagnostics,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnvelopeOptions {
    pub dual_resolution: Option<usize>,
    pub contact_tolerance: Option<f64>,
}

/// Default contact tolerance for an obstacle: a quarter of its largest
/// positive second difference plus a relative float floor.
///
/// The envelope detaches from a smooth obstacle quadratically, one node
/// past the contact boundary the gap is about half a second difference, so
/// this keeps the detected set within a node of the true one. Concave kinks
/// are ignored because the envelope never touches there.
pub fn default_contact_tolerance(f: &GridFunction) -> f64 {
    let mut m: f64 = 0.0;
    f.for_each_second_difference(|_, _, d| m = m.max(d));
    let scale = f.values().iter().fold(1.0f64, |a, v| a.max(v.abs()));
    0.25 * m + 1e-12 * scale
}

pub fn envelope(f: &GridFunction, q: &GradientPolytope) -> Result<EnvelopeResult> {
    envelope_with(f, q, &EnvelopeOptions::default())
}

pub fn envelope_with(f: &GridFunction, q: &GradientPolytope, opts: &EnvelopeOptions) -> Result<EnvelopeResult> {
    let res = opts.dual_resolution.unwrap_or_else(|| dual_resolution_for(f.grid(), q));
    let env = constrained_biconjugate(f, q, res)?;
    let eps = opts.contact_tolerance.unwrap_or_else(|| default_contact_tolerance(f));
    let contact = contact_set(&env, f, eps)?;
    let max_violation = env.values().iter().zip(f.values()).map(|(p, v)| p - v).fold(0.0, f64::max);
    let dual_spacing = DualGrid::new(q, res)?.spacing();
    Ok(EnvelopeResult {
        envelope: env,
        contact,
        obstacle_contacts: Vec::new(),
        diagnostics: EnvelopeDiagnostics {
            dual_resolution: res,
            dual_spacing,
            max_violation,
            halo_width: HALO_WIDTH,
            contact_tolerance: eps,
        },
    })
}

/// Envelope of the pointwise minimum of several obstacles.
pub fn rooftop(fs: &[GridFunction], q: &GradientPolytope) -> Result<EnvelopeResult> {
    rooftop_with(fs, q, &EnvelopeOptions::default())
}

pub fn rooftop_with(fs: &[GridFunction], q: &GradientPolytope, opts: &EnvelopeOptions) -> Result<EnvelopeResult> {
    let m = pointwise_min(fs)?;
    let eps = opts.contact_tolerance.unwrap_or_else(|| fs.iter().map(default_contact_tolerance).fold(0.0, f64::max));
    let mut out = envelope_with(&m, q, &EnvelopeOptions { contact_tolerance: Some(eps), ..*opts })?;
    out.obstacle_contacts = fs.iter().map(|f| contact_set(&out.envelope, f, eps)).collect::<Result<_>>()?;
    Ok(out)
}

/// Support function of `q` at every node: the potential with the smallest
/// singularities in the class.
pub fn model_potential(q: &GradientPolytope, grid: &Grid) -> Result<GridFunction> {
    if q.dim() != grid.dim() {
        return Err(Error::Dimension(format!("polytope of dimension {} on a {}-d grid", q.dim(), grid.dim())));
    }
    GridFunction::from_fn(grid, |p| q.support(p))
}

/// Envelope with gradients confined to the singularity polytope `q_sing`,
/// which must lie inside the class `q`.
pub fn maximal_envelope(f: &GridFunction, q: &GradientPolytope, q_sing: &GradientPolytope) -> Result<EnvelopeResult> {
    maximal_envelope_with(f, q, q_sing, &EnvelopeOptions::default())
}

pub fn maximal_envelope_with(
    f: &GridFunction,
    q: &GradientPolytope,
    q_sing: &GradientPolytope,
    opts: &EnvelopeOptions,
) -> Result<EnvelopeResult> {
    check_singularity(q, q_sing)?;
    envelope_with(f, q_sing, opts)
}

pub(crate) fn check_singularity(q: &GradientPolytope, q_sing: &GradientPolytope) -> Result<()> {
    if q.dim() != q_sing.dim() {
        return Err(Error::Dimension("class and singularity polytopes differ in dimension".into()));
    }
    if !q.contains_polytope(q_sing, GEOMETRY_TOL) {
        return Err(Error::SingularityExceedsClass(format!(
            "vertices {:?} are not all inside {:?}",
            q_sing.vertices(),
            q.vertices()
        )));
    }
    Ok(())
}

/// Random slope drawn from `q`: uniform on an interval, a Dirichlet(1)
/// combination of the vertices of a polygon.
fn random_slope(q: &GradientPolytope, rng: &mut SplitMix64) -> [f64; 2] {
    match q {
        GradientPolytope::Interval { lo, hi } => [rng.uniform(*lo, *hi), 0.0],
        GradientPolytope::Polygon { vertices } => {
            let w: Vec<f64> = vertices.iter().map(|_| rng.exponential()).collect();
            let total: f64 = w.iter().sum();
            let mut g = [0.0; 2];
            for (v, wi) in vertices.iter().zip(&w) {
                g[0] += v[0] * wi / total;
                g[1] += v[1] * wi / total;
            }
            g
        }
    }
}

/// Maximum of `pieces` affine functions with slopes drawn from `q`.
///
/// Offsets are uniform in `[-s, 0]` with `s = (1 + radius(q) * radius(box)) / 2`,
/// so that several pieces are typically active.
pub fn random_theta_psh(q: &GradientPolytope, grid: &Grid, seed: u64, pieces: usize) -> Result<GridFunction> {
    if pieces == 0 {
        return Err(Error::InvalidArgument("random potentials need at least one affine piece".into()));
    }
    if q.dim() != grid.dim() {
        return Err(Error::Dimension(format!("polytope of dimension {} on a {}-d grid", q.dim(), grid.dim())));
    }
    let mut rng = SplitMix64::new(seed);
    let box_radius = (0..grid.dim()).map(|a| grid.lo(a).abs().max(grid.hi(a).abs()).powi(2)).sum::<f64>().sqrt();
    let spread = 0.5 * (1.0 + q.radius() * box_radius);
    let planes: Vec<([f64; 2], f64)> = (0..pieces)
        .map(|_| {
            let g = random_slope(q, &mut rng);
            (g, -spread * rng.next_f64())
        })
        .collect();
    GridFunction::from_fn(grid, |p| {
        planes.iter().map(|(g, c)| g[0] * p[0] + g[1] * p[1] + c).fold(f64::NEG_INFINITY, f64::max)
    })
}

/// `min(phi, f)`: below the barrier, and equal to `phi` wherever `phi <= f`.
pub fn below_barrier(phi: &GridFunction, f: &GridFunction) -> Result<GridFunction> {
    phi.zip_with(f, f64::min)
}

/// Shifts `phi` down (or up) so that it touches `f` from below at its closest node.
pub fn touching_shift(phi: &GridFunction, f: &GridFunction) -> Result<GridFunction> {
    let gap = phi.zip_with(f, |a, b| a - b)?.max();
    Ok(phi.shift(-gap))
}

/// Maximum of supporting affine functions of `u` at the nodes of `at`.
///
/// The slope at a node is a point of its discrete subdifferential: the mean of
/// the adjacent slopes in one dimension, the vertex average of the clipped
/// hull cell in two. Nodes with an empty cell are skipped. Returns `None`
/// when no node contributes.
pub fn tangent_minorant(u: &GridFunction, at: &NodeSet) -> Result<Option<GridFunction>> {
    u.grid().check_same(at.grid())?;
    let grads = subgradients(u)?;
    let grid = u.grid();
    let planes: Vec<([f64; 2], [f64; 2], f64)> =
        at.iter().filter_map(|n| grads[n].map(|g| (g, grid.point(n), u.value(n)))).collect();
    if planes.is_empty() {
        return Ok(None);
    }
    GridFunction::from_fn(grid, |p| {
        planes
            .iter()
            .map(|(g, x, v)| v + (g[0] * (p[0] - x[0]) + g[1] * (p[1] - x[1])))
            .fold(f64::NEG_INFINITY, f64::max)
    })
    .map(Some)
}

/// `max(u - c, T)` with `T` the tangent minorant of `u` over `region`.
///
/// When `u` is an envelope of `f` and `region` lies inside its contact set,
/// the result touches `f` exactly on `region` (up to the contact tolerance)
/// and sits below `u` elsewhere.
pub fn tangent_max(u: &GridFunction, region: &NodeSet, c: f64) -> Result<GridFunction> {
    if c <= 0.0 {
        return Err(Error::InvalidArgument(format!("tangent-max shift must be positive, got {c}")));
    }
    let lowered = u.shift(-c);
    match tangent_minorant(u, region)? {
        Some(t) => lowered.pointwise_max(&t),
        None => Ok(lowered),
    }
}

/// Rooftop of `f` and a random affine maximum lifted to cross it.
///
/// The lift puts the random potential a fraction `alpha` of the way between
/// touching `f` from below and lying entirely above it, so the envelope
/// follows `f` on part of the box and the affine pieces elsewhere.
pub fn random_rooftop_potential(
    f: &GridFunction,
    q: &GradientPolytope,
    seed: u64,
    pieces: usize,
) -> Result<GridFunction> {
    let r = random_theta_psh(q, f.grid(), seed, pieces)?;
    let gap = f.zip_with(&r, |a, b| a - b)?;
    let mut rng = SplitMix64::new(seed ^ 0xA5A5_A5A5_A5A5_A5A5);
    let alpha = rng.uniform(0.1, 0.5);
    let lift = gap.min() + alpha * (gap.max() - gap.min());
    Ok(rooftop(&[f.clone(), r.shift(lift)], q)?.envelope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;
    use crate::grid::sample;
    use proptest::prelude::*;

    fn f(text: &str, grid: &Grid) -> GridFunction {
        sample(&Expression::parse(text).unwrap(), grid).unwrap()
    }

    fn e1() -> (Grid, GridFunction, GradientPolytope) {
        let g = Grid::line(-2.0, 2.0, 2049).unwrap();
        let obstacle = f("x^2", &g);
        (g, obstacle, GradientPolytope::interval(-1.0, 1.0).unwrap())
    }

    #[test]
    fn e1_contact_interval() {
        let (g, obstacle, q) = e1();
        let r = envelope(&obstacle, &q).unwrap();
        let (lo, hi) = r.contact.bounding_box().unwrap();
        let h = g.spacing(0);
        assert!((lo[0] + 0.5).abs() <= h + 1e-12, "{lo:?}");
        assert!((hi[0] - 0.5).abs() <= h + 1e-12, "{hi:?}");
        assert_eq!(r.contact.count(), 513);
        assert!(r.diagnostics.max_violation <= 1e-9);
    }

    #[test]
    fn admissible_obstacle_is_its_own_envelope() {
        let g = Grid::line(-1.0, 1.0, 201).unwrap();
        let obstacle = f("0.5*x^2", &g);
        let r = envelope(&obstacle, &GradientPolytope::interval(-2.0, 2.0).unwrap()).unwrap();
        assert!(r.envelope.sup_distance(&obstacle).unwrap() < 1e-12);
        assert_eq!(r.contact.count(), g.len());
    }

    #[test]
    fn relative_extremal_analogue() {
        let g = Grid::line(-2.0, 2.0, 401).unwrap();
        let obstacle = GridFunction::from_fn(&g, |p| if p[0].abs() <= 0.5 { -1.0 } else { 0.0 }).unwrap();
        let r = envelope(&obstacle, &GradientPolytope::interval(-1.0, 1.0).unwrap()).unwrap();
        for n in 0..g.len() {
            let x = g.point(n)[0];
            assert!(r.envelope.value(n) <= 1e-12);
            if x.abs() < 0.5 {
                assert!((r.envelope.value(n) + 1.0).abs() < 1e-12, "x = {x}");
            }
        }
    }

    #[test]
    fn rooftop_pair_common_tangent() {
        let g = Grid::line(-2.0, 3.0, 1001).unwrap();
        let fs = [f("x^2", &g), f("(x-1)^2", &g)];
        let r = rooftop(&fs, &GradientPolytope::interval(-6.0, 6.0).unwrap()).unwrap();
        let h = g.spacing(0);
        for n in 0..g.len() {
            let x = g.point(n)[0];
            let expected = if x <= 0.0 {
                x * x
            } else if x >= 1.0 {
                (x - 1.0) * (x - 1.0)
            } else {
                0.0
            };
            assert!((r.envelope.value(n) - expected).abs() <= 2.0 * h * h + 1e-12, "x = {x}");
        }
        assert_eq!(r.obstacle_contacts.len(), 2);
        assert!(r.obstacle_contacts[0].contains(0));
        assert!(!r.obstacle_contacts[0].contains(g.len() - 1));
    }

    #[test]
    fn rooftop_of_dominated_pair_is_plain_envelope() {
        let (g, obstacle, q) = e1();
        let fs = [obstacle.clone(), f("2*x^2", &g)];
        let a = rooftop(&fs, &q).unwrap();
        let b = envelope(&obstacle, &q).unwrap();
        assert_eq!(a.envelope, b.envelope);
    }

    #[test]
    fn model_potentials() {
        let g = Grid::line(-2.0, 2.0, 5).unwrap();
        let v = model_potential(&GradientPolytope::interval(-1.0, 1.0).unwrap(), &g).unwrap();
        assert_eq!(v.values(), &[2.0, 1.0, 0.0, 1.0, 2.0]);
        let g2 = Grid::square(-1.0, 1.0, 5).unwrap();
        let simplex = GradientPolytope::polygon(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let v = model_potential(&simplex, &g2).unwrap();
        for n in 0..g2.len() {
            let [x, y] = g2.point(n);
            assert_eq!(v.value(n), 0.0f64.max(x).max(y));
        }
        let zero = model_potential(&GradientPolytope::origin(2), &g2).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maximal_envelope_with_half_class() {
        let (g, obstacle, q) = e1();
        let q_sing = GradientPolytope::interval(0.0, 1.0).unwrap();
        let m = maximal_envelope(&obstacle, &q, &q_sing).unwrap();
        let h = g.spacing(0);
        for n in 0..g.len() {
            let x = g.point(n)[0];
            let expected = if x <= 0.0 {
                0.0
            } else if x <= 0.5 {
                x * x
            } else {
                x - 0.25
            };
            assert!((m.envelope.value(n) - expected).abs() <= 2.0 * h, "x = {x}");
        }
        let (lo, hi) = m.contact.bounding_box().unwrap();
        assert!(lo[0].abs() <= h + 1e-12 && (hi[0] - 0.5).abs() <= h + 1e-12);
    }

    #[test]
    fn maximal_envelope_rejects_larger_singularity_type() {
        let (_, obstacle, q) = e1();
        let err = maximal_envelope(&obstacle, &q, &GradientPolytope::interval(0.0, 2.0).unwrap()).unwrap_err();
        assert!(err.to_string().contains("singularity type exceeds class"));
    }

    #[test]
    fn maximal_envelope_extreme_cases() {
        let (g, obstacle, q) = e1();
        let same = maximal_envelope(&obstacle, &q, &q).unwrap();
        assert_eq!(same.envelope, envelope(&obstacle, &q).unwrap().envelope);
        let point = maximal_envelope(&obstacle, &q, &GradientPolytope::origin(1)).unwrap();
        assert!(point.envelope.values().iter().all(|&v| v.abs() < 1e-12));
        let _ = g;
    }

    #[test]
    fn random_potential_is_reproducible() {
        let g = Grid::line(-2.0, 2.0, 101).unwrap();
        let q = GradientPolytope::interval(-1.0, 1.0).unwrap();
        let a = random_theta_psh(&q, &g, 42, 5).unwrap();
        let b = random_theta_psh(&q, &g, 42, 5).unwrap();
        assert_eq!(a.values(), b.values());
        let c = random_theta_psh(&GradientPolytope::origin(1), &g, 3, 1).unwrap();
        assert!(c.values().iter().all(|&v| v == c.value(0)));
        assert!(random_theta_psh(&q, &g, 1, 0).is_err());
    }

    #[test]
    fn random_potential_difference_quotients_stay_in_class() {
        let g = Grid::square(-1.0, 1.0, 21).unwrap();
        let h = g.spacing(0);
        let q = GradientPolytope::polygon(vec![[-1.0, 0.0], [1.0, -0.5], [0.5, 1.0]]).unwrap();
        let (lo, hi) = q.bounding_box();
        for seed in 0..100 {
            let u = random_theta_psh(&q, &g, seed, 4).unwrap();
            for j in 0..21 {
                for i in 0..20 {
                    let d = (u.value(g.index(i + 1, j)) - u.value(g.index(i, j))) / h;
                    assert!(d >= lo[0] - 1e-9 && d <= hi[0] + 1e-9);
                    let d = (u.value(g.index(j, i + 1)) - u.value(g.index(j, i))) / h;
                    assert!(d >= lo[1] - 1e-9 && d <= hi[1] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn below_barrier_cases() {
        let (g, obstacle, q) = e1();
        let p = envelope(&obstacle, &q).unwrap().envelope;
        assert_eq!(below_barrier(&p, &obstacle).unwrap(), p);
        assert_eq!(below_barrier(&obstacle.shift(1.0), &obstacle).unwrap(), obstacle);
        let region = NodeSet::from_predicate(&g, 0.0, |n| g.point(n)[0].abs() <= 0.25);
        let t = tangent_minorant(&p, &region).unwrap().unwrap();
        assert_eq!(below_barrier(&t, &obstacle).unwrap(), t);
        let eps = default_contact_tolerance(&obstacle);
        assert!(contact_set(&t, &obstacle, eps).unwrap().count() > 0);
    }

    #[test]
    fn tangent_max_touches_exactly_on_region() {
        let (g, obstacle, q) = e1();
        let p = envelope(&obstacle, &q).unwrap().envelope;
        let region = NodeSet::from_predicate(&g, 0.0, |n| {
            let x = g.point(n)[0];
            (-0.2..=0.1).contains(&x)
        });
        let phi = tangent_max(&p, &region, 0.1).unwrap();
        let eps = default_contact_tolerance(&obstacle);
        let c = contact_set(&phi, &obstacle, eps).unwrap();
        assert_eq!(c, NodeSet::new(g.clone(), region.mask().to_vec(), eps).unwrap());
        assert!(phi.values().iter().zip(obstacle.values()).all(|(a, b)| a <= b));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn chain_of_envelopes(values in proptest::collection::vec(-2.0f64..2.0, 65), a in -1.0f64..0.0, b in 0.0f64..1.0) {
            let g = Grid::line(-1.0, 1.0, 65).unwrap();
            let obstacle = GridFunction::new(g, values).unwrap();
            let q = GradientPolytope::interval(-1.0, 1.0).unwrap();
            let q_sing = GradientPolytope::interval(a, b).unwrap();
            let p = envelope(&obstacle, &q).unwrap().envelope;
            let m = maximal_envelope(&obstacle, &q, &q_sing).unwrap().envelope;
            // Slopes of q_sing need not lie on the dual lattice of q; a slope off by
            // half a dual spacing moves an affine minorant by at most that times the box width.
            let lattice = 1e-9 + DualGrid::new(&q, 1025).unwrap().spacing() * 2.0;
            for n in 0..65 {
                prop_assert!(m.value(n) <= p.value(n) + lattice);
                prop_assert!(p.value(n) <= obstacle.value(n) + 1e-9);
            }
            // Composition: maximal envelopes only see the envelope of the obstacle.
            // `p` carries its own lattice error, which passes through unchanged.
            let m2 = maximal_envelope(&p, &q, &q_sing).unwrap().envelope;
            let slack = lattice + 2.0 * DualGrid::new(&q_sing, 1025).unwrap().spacing();
            prop_assert!(m.sup_distance(&m2).unwrap() <= slack);
        }

        #[test]
        fn model_potential_is_envelope_of_a_big_constant_pinned_at_the_origin(c in 20.0f64..50.0, d in -1.0f64..1.0) {
            // On a bounded box the envelope of a constant is that constant; pinning
            // the obstacle to `d` at the origin recovers the support function plus `d`.
            let g = Grid::line(-2.0, 2.0, 129).unwrap();
            let q = GradientPolytope::interval(-1.0, 0.5).unwrap();
            let v = model_potential(&q, &g).unwrap();
            let obstacle = GridFunction::from_fn(&g, |p| if p[0] == 0.0 { d } else { c }).unwrap();
            let p = envelope(&obstacle, &q).unwrap().envelope;
            let h_dual = DualGrid::new(&q, 1025).unwrap().spacing();
            for n in 1..128 {
                prop_assert!((p.value(n) - v.value(n) - d).abs() <= 1e-9 + 4.0 * h_dual);
            }
        }

        #[test]
        fn contact_factorization(seed in 0u64..1000) {
            let g = Grid::line(-2.0, 2.0, 257).unwrap();
            let q = GradientPolytope::interval(-1.0, 1.0).unwrap();
            let obstacle = f("x^2", &g);
            let phi = random_rooftop_potential(&obstacle, &q, seed, 4).unwrap();
            let p = envelope(&obstacle, &q).unwrap().envelope;
            let eps = default_contact_tolerance(&obstacle);
            let left = contact_set(&phi, &obstacle, eps).unwrap();
            let right = contact_set(&phi, &p, eps).unwrap().intersection(&contact_set(&p, &obstacle, eps).unwrap()).unwrap();
            prop_assert!(left.is_subset(&right).unwrap());
            let half = contact_set(&phi, &p, eps / 2.0).unwrap().intersection(&contact_set(&p, &obstacle, eps / 2.0).unwrap()).unwrap();
            prop_assert!(half.is_subset(&left).unwrap());
        }
    }
}
