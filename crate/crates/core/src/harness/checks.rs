use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::envelope::{
    default_contact_tolerance, envelope_with, maximal_envelope_with, rooftop_with, tangent_max, EnvelopeOptions,
};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, NodeSet};
use crate::measure::{
    barrier_ma, bin_count, bin_of, bin_sums, gradient_bounds, ma, mixed_barrier_ma, mixed_ma, mixed_volume,
    nonpluripolar_ma, DiscreteMeasure,
};
use crate::polytope::GradientPolytope;

use super::oracle::{brute_force_envelope, brute_force_ma};
use super::{
    compare_restricted, contact_set, CheckReport, PartitionCells, PlotData, Residual, Tolerances, DEFAULT_BIN_WIDTH,
};

/// Default identity threshold (relative).
pub const IDENTITY_TOL: f64 = 0.05;
/// Default threshold for oracle agreement of measures (relative binned total variation).
pub const ORACLE_TOL: f64 = 0.02;
/// Default bound on monotonicity violations.
pub const MONOTONE_TOL: f64 = 1e-9;
/// Default relative tolerance on mass budgets.
pub const MASS_TOL: f64 = 0.03;

/// Settings shared by every check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOptions {
    pub tol: Tolerances,
    /// Bin width in nodes per axis.
    pub bin_width: usize,
    pub dual_resolution: Option<usize>,
    pub expected_failure: bool,
}

impl Default for CheckOptions {
    fn default() -> CheckOptions {
        CheckOptions {
            tol: Tolerances::new(),
            bin_width: DEFAULT_BIN_WIDTH,
            dual_resolution: None,
            expected_failure: false,
        }
    }
}

impl CheckOptions {
    fn envelope_options(&self) -> EnvelopeOptions {
        EnvelopeOptions { dual_resolution: self.dual_resolution, contact_tolerance: self.tol.get_opt("contact") }
    }

    fn eps(&self, f: &GridFunction) -> f64 {
        self.tol.get_opt("contact").unwrap_or_else(|| default_contact_tolerance(f))
    }
}

/// Which statement about maximal envelopes to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corollary {
    /// The envelope measure is the obstacle measure on the contact set.
    I,
    /// Same for the maximal envelope of a singularity type.
    II,
    /// The measure of a potential lives where it touches the obstacle or sits below the maximal envelope.
    III,
    /// Vanishing mass off the maximal envelope iff zero measure or equality.
    IV,
    /// Zero obstacle mass on the untouched contact set iff equality.
    V,
}

impl std::str::FromStr for Corollary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Corollary> {
        match s {
            "i" => Ok(Corollary::I),
            "ii" => Ok(Corollary::II),
            "iii" => Ok(Corollary::III),
            "iv" => Ok(Corollary::IV),
            "v" => Ok(Corollary::V),
            _ => Err(Error::InvalidArgument(format!("unknown corollary '{s}', expected one of i, ii, iii, iv, v"))),
        }
    }
}

impl std::fmt::Display for Corollary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Corollary::I => "i",
            Corollary::II => "ii",
            Corollary::III => "iii",
            Corollary::IV => "iv",
            Corollary::V => "v",
        })
    }
}

/// Short content hash of grid values.
pub fn fingerprint(u: &GridFunction) -> String {
    let mut h = Sha256::new();
    for v in u.values() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn describe_grid(g: &Grid) -> String {
    let axes: Vec<String> = (0..g.dim()).map(|a| format!("[{}, {}]/{}", g.lo(a), g.hi(a), g.resolution(a))).collect();
    axes.join(" x ")
}

pub fn describe_polytope(q: &GradientPolytope) -> String {
    match q {
        GradientPolytope::Interval { lo, hi } => format!("[{lo}, {hi}]"),
        GradientPolytope::Polygon { vertices } => format!("{vertices:?}"),
    }
}

fn run(name: &str, opts: &CheckOptions, body: impl FnOnce(&mut CheckReport) -> Result<()>) -> CheckReport {
    let start = Instant::now();
    let mut r = CheckReport::new(name);
    r.expected_failure = opts.expected_failure;
    if let Err(e) = body(&mut r) {
        r.error = Some(e.to_string());
    }
    r.runtime = start.elapsed();
    r.finish()
}

fn check_below(phi: &GridFunction, f: &GridFunction) -> Result<()> {
    phi.grid().check_same(f.grid())?;
    let (node, excess) = phi
        .values()
        .iter()
        .zip(f.values())
        .enumerate()
        .map(|(n, (a, b))| (n, a - b))
        .fold((0, f64::NEG_INFINITY), |m, x| if x.1 > m.1 { x } else { m });
    if excess > 1e-9 {
        return Err(Error::AboveBarrier { node, excess });
    }
    Ok(())
}

fn check_dim(f: &GridFunction, q: &GradientPolytope) -> Result<()> {
    if f.grid().dim() != q.dim() {
        return Err(Error::Dimension(format!("{}-d grid with a {}-d class", f.grid().dim(), q.dim())));
    }
    Ok(())
}

/// Relative residual with the usual normalisation `max(mu(S), nu(S), volume)`.
fn normalised(abs: f64, mu: f64, nu: f64, volume: f64) -> f64 {
    let denom = mu.max(nu).max(volume);
    if abs == 0.0 {
        0.0
    } else {
        abs / denom.max(f64::MIN_POSITIVE)
    }
}

/// Signed per-node values to per-bin sums.
fn signed_bins(grid: &Grid, values: &[f64], width: usize) -> Vec<f64> {
    bin_sums(grid, values, width)
}

fn restricted_values(m: &DiscreteMeasure, s: &NodeSet) -> Vec<f64> {
    m.masses().iter().zip(s.mask()).map(|(&v, &k)| if k { v } else { 0.0 }).collect()
}

/// Columns `x[, y], obstacle, potential, binned measure of the potential,
/// binned obstacle measure on the contact set`, with bin totals repeated on
/// each node of the bin.
fn plot_columns(
    f: &GridFunction,
    u: &GridFunction,
    mu: &DiscreteMeasure,
    nu_on_contact: &[f64],
    width: usize,
    potential_name: &str,
) -> PlotData {
    let g = f.grid();
    let mu_bins = mu.binned(width);
    let nu_bins = bin_sums(g, nu_on_contact, width);
    let mut columns = vec![("x".to_string(), (0..g.len()).map(|n| g.point(n)[0]).collect::<Vec<_>>())];
    if g.dim() == 2 {
        columns.push(("y".to_string(), (0..g.len()).map(|n| g.point(n)[1]).collect()));
    }
    columns.push(("f".to_string(), f.values().to_vec()));
    columns.push((potential_name.to_string(), u.values().to_vec()));
    columns.push((format!("ma_{potential_name}_bin"), (0..g.len()).map(|n| mu_bins[bin_of(g, n, width)]).collect()));
    columns.push(("contact_ma_f_bin".to_string(), (0..g.len()).map(|n| nu_bins[bin_of(g, n, width)]).collect()));
    PlotData { columns }
}

fn obstacle_measure(f: &GridFunction) -> Result<DiscreteMeasure> {
    barrier_ma(f, &gradient_bounds(f)?)
}

/// `1_{phi = f} MA(phi) = 1_{phi = f} MA(f)` on the contact set of a potential below a smooth obstacle.
pub fn check_main(phi: &GridFunction, f: &GridFunction, q: &GradientPolytope, opts: &CheckOptions) -> CheckReport {
    run("main", opts, |r| {
        check_dim(f, q)?;
        check_below(phi, f)?;
        r.input("grid", describe_grid(f.grid()))
            .input("class", describe_polytope(q))
            .input("phi", fingerprint(phi))
            .input("f", fingerprint(f));
        let eps = opts.eps(f);
        let mu = ma(phi, q)?;
        let nu = obstacle_measure(f)?;
        let s = contact_set(phi, f, eps)?;
        let vol = q.volume();
        let cmp = compare_restricted(&mu, &nu, &s, opts.bin_width, vol * 1e-3)?;
        let identity = normalised(cmp.absolute, cmp.mu_mass, cmp.nu_mass, vol);
        r.push(Residual::at_most("identity", identity, opts.tol.get("identity", IDENTITY_TOL)));
        r.primary = Some("identity".into());
        // Every contact node of (phi, f) is also a contact node of (phi, P) and of (P, f).
        let p = envelope_with(f, q, &opts.envelope_options())?.envelope;
        let both = contact_set(phi, &p, eps)?.intersection(&contact_set(&p, f, eps)?)?;
        let defects = s.difference(&both)?.count();
        r.push(Residual::at_most("factorization_defects", defects as f64, 0.0));
        r.push(Residual::info("identity_abs", cmp.absolute))
            .push(Residual::info("relative", cmp.relative))
            .push(Residual::info("mu_contact", cmp.mu_mass))
            .push(Residual::info("nu_contact", cmp.nu_mass))
            .push(Residual::info("contact_nodes", s.count() as f64))
            .push(Residual::info("contact_tolerance", eps));
        r.plot = Some(plot_columns(f, phi, &mu, &restricted_values(&nu, &s), opts.bin_width, "phi"));
        Ok(())
    })
}

/// `MA(P(f1, f2)) = 1_{P=f1} MA(f1) + 1_{P=f2} MA(f2) - 1_{P=f1=f2} MA(f_j)` for both choices of `j`.
pub fn check_rooftop_decomposition(
    f1: &GridFunction,
    f2: &GridFunction,
    q: &GradientPolytope,
    opts: &CheckOptions,
) -> CheckReport {
    run("rooftop", opts, |r| {
        check_dim(f1, q)?;
        if !q.is_full_dimensional() {
            return Err(Error::InvalidArgument("the rooftop decomposition needs a full-dimensional class".into()));
        }
        r.input("grid", describe_grid(f1.grid()))
            .input("class", describe_polytope(q))
            .input("f1", fingerprint(f1))
            .input("f2", fingerprint(f2));
        let fs = [f1.clone(), f2.clone()];
        let env = rooftop_with(&fs, q, &opts.envelope_options())?;
        let grid = f1.grid();
        let mu = ma(&env.envelope, q)?;
        let nu1 = obstacle_measure(f1)?;
        let nu2 = obstacle_measure(f2)?;
        let (c1, c2) = (&env.obstacle_contacts[0], &env.obstacle_contacts[1]);
        let c12 = c1.intersection(c2)?;
        let t1 = restricted_values(&nu1, c1);
        let t2 = restricted_values(&nu2, c2);
        let t12 = [restricted_values(&nu1, &c12), restricted_values(&nu2, &c12)];
        let scale = mu.total_mass().max(q.volume());
        let w = opts.bin_width;
        let mut combos = Vec::new();
        for (j, tj) in t12.iter().enumerate() {
            let diff: Vec<f64> = (0..grid.len()).map(|n| mu.mass(n) - (t1[n] + t2[n] - tj[n])).collect();
            let res: f64 = signed_bins(grid, &diff, w).iter().map(|d| d.abs()).sum();
            r.push(Residual::at_most(
                &format!("decomposition_j{}", j + 1),
                res / scale,
                opts.tol.get("decomposition", MASS_TOL),
            ));
            combos.push(diff);
        }
        r.primary = Some("decomposition_j1".into());
        let gap = signed_bins(grid, &t12[0].iter().zip(&t12[1]).map(|(a, b)| a - b).collect::<Vec<_>>(), w);
        let noisy = gap.iter().filter(|d| d.abs() > opts.tol.get("agreement", 1e-9)).count();
        r.push(Residual::at_most("agreement_bins", noisy as f64, 2.0));
        r.push(Residual::info("agreement_abs", gap.iter().map(|d| d.abs()).sum()));
        let negative = t1.iter().chain(&t2).chain(&t12[0]).chain(&t12[1]).fold(0.0f64, |m, &v| m.max(-v));
        r.push(Residual::at_most("negative_mass", negative, 0.0));
        r.push(Residual::info("mass_envelope", mu.total_mass()))
            .push(Residual::info("mass_1", t1.iter().sum()))
            .push(Residual::info("mass_2", t2.iter().sum()))
            .push(Residual::info("mass_12", t12[0].iter().sum()));
        Ok(())
    })
}

/// Partition of the rooftop contact set by the obstacles attaining the minimum, and `MA(P) = sum_I mu_I`.
pub fn check_partition(fs: &[GridFunction], q: &GradientPolytope, opts: &CheckOptions) -> CheckReport {
    run("partition", opts, |r| {
        if fs.is_empty() {
            return Err(Error::Empty("partition obstacles"));
        }
        check_dim(&fs[0], q)?;
        r.input("grid", describe_grid(fs[0].grid())).input("class", describe_polytope(q));
        for (i, f) in fs.iter().enumerate() {
            r.input(&format!("f{}", i + 1), fingerprint(f));
        }
        let env = rooftop_with(fs, q, &opts.envelope_options())?;
        let eps = env.diagnostics.contact_tolerance;
        let cells = PartitionCells::classify(fs, &env.contact, eps)?;
        let grid = fs[0].grid();
        let mu = ma(&env.envelope, q)?;
        let nus: Vec<DiscreteMeasure> = fs.iter().map(obstacle_measure).collect::<Result<_>>()?;
        let w = opts.bin_width;
        let scale = mu.total_mass().max(q.volume());
        let mut worst_pair: f64 = 0.0;
        let mut sum = vec![0.0; grid.len()];
        for (key, cell) in &cells.cells {
            let parts: Vec<Vec<f64>> = key.iter().map(|&i| restricted_values(&nus[i], cell)).collect();
            for a in 0..parts.len() {
                for b in a + 1..parts.len() {
                    let d: Vec<f64> = parts[a].iter().zip(&parts[b]).map(|(x, y)| x - y).collect();
                    worst_pair = worst_pair.max(signed_bins(grid, &d, w).iter().map(|v| v.abs()).sum::<f64>() / scale);
                }
            }
            for (s, v) in sum.iter_mut().zip(&parts[0]) {
                *s += v;
            }
            let label = PartitionCells::label(key);
            r.push(Residual::info(&format!("nodes_{label}"), cell.count() as f64));
            r.push(Residual::info(&format!("mass_{label}"), parts[0].iter().sum()));
        }
        let identity = opts.tol.get("identity", IDENTITY_TOL);
        r.push(Residual::at_most("cell_agreement", worst_pair, identity));
        let diff: Vec<f64> = (0..grid.len()).map(|n| mu.mass(n) - sum[n]).collect();
        let res: f64 = signed_bins(grid, &diff, w).iter().map(|d| d.abs()).sum();
        r.push(Residual::at_most("sum_formula", res / scale, identity));
        r.primary = Some("sum_formula".into());
        let (overlap, missing) = cells.defects(&env.contact);
        r.push(Residual::at_most("partition_defects", (overlap + missing) as f64, 0.0));
        r.push(Residual::info("mass_envelope", mu.total_mass()));
        Ok(())
    })
}

/// Statements i) to v) about envelopes and maximal envelopes.
///
/// iv) and v) are biconditionals; they are exercised on constructed
/// instances where each side is known, and the report says so.
pub fn check_corollary(
    which: Corollary,
    phi: Option<&GridFunction>,
    f: &GridFunction,
    q: &GradientPolytope,
    q_sing: Option<&GradientPolytope>,
    opts: &CheckOptions,
) -> CheckReport {
    run(&format!("corollary_{which}"), opts, |r| {
        check_dim(f, q)?;
        r.input("grid", describe_grid(f.grid())).input("class", describe_polytope(q)).input("f", fingerprint(f));
        if let Some(qs) = q_sing {
            r.input("singularity", describe_polytope(qs));
        }
        let need_sing =
            || q_sing.ok_or_else(|| Error::InvalidArgument(format!("corollary {which} needs a singularity polytope")));
        let eo = opts.envelope_options();
        let eps = opts.eps(f);
        let identity = opts.tol.get("identity", IDENTITY_TOL);
        let w = opts.bin_width;
        match which {
            Corollary::I | Corollary::II => {
                let (env, budget) = match which {
                    Corollary::I => (envelope_with(f, q, &eo)?, q.clone()),
                    _ => {
                        let qs = need_sing()?;
                        (maximal_envelope_with(f, q, qs, &eo)?, qs.clone())
                    }
                };
                let mu = ma(&env.envelope, q)?;
                let nu = obstacle_measure(f)?;
                let s = contact_set(&env.envelope, f, eps)?;
                let nu_s = nu.restrict(&s)?;
                let all = NodeSet::all(f.grid());
                let cmp = compare_restricted(&mu, &nu_s, &all, w, budget.volume() * 1e-3)?;
                let nu_total = nu.total_mass();
                if budget.is_full_dimensional() {
                    let rel = normalised(cmp.absolute, cmp.mu_mass, cmp.nu_mass, budget.volume());
                    r.push(Residual::at_most("identity", rel, identity));
                    r.primary = Some("identity".into());
                    if which == Corollary::II {
                        let v = budget.volume();
                        let tot = opts.tol.get("total", 0.02);
                        r.push(Residual::at_most("mass_envelope", (cmp.mu_mass - v).abs() / v, tot));
                        r.push(Residual::at_most("mass_contact", (cmp.nu_mass - v).abs() / v, tot));
                    }
                } else {
                    // Lower-dimensional class: no envelope mass, so the contact set must be obstacle-null.
                    r.push(Residual::at_most("envelope_mass", cmp.mu_mass, 1e-12));
                    let frac = if nu_total > 0.0 { cmp.nu_mass / nu_total } else { 0.0 };
                    r.push(Residual::at_most("contact_fraction", frac, opts.tol.get("nonbig", 0.01)));
                    r.primary = Some("contact_fraction".into());
                }
                r.push(Residual::info("identity_abs", cmp.absolute))
                    .push(Residual::info("mu_total", cmp.mu_mass))
                    .push(Residual::info("nu_contact", cmp.nu_mass))
                    .push(Residual::info("nu_total", nu_total))
                    .push(Residual::info("contact_nodes", s.count() as f64));
                let name = if which == Corollary::I { "P" } else { "M" };
                r.plot = Some(plot_columns(f, &env.envelope, &mu, nu_s.masses(), w, name));
            }
            Corollary::III => {
                let qs = need_sing()?;
                let phi = phi.ok_or_else(|| Error::InvalidArgument("corollary iii needs a potential".into()))?;
                check_below(phi, f)?;
                r.input("phi", fingerprint(phi));
                let m = maximal_envelope_with(f, q, qs, &eo)?.envelope;
                let p = envelope_with(f, q, &eo)?.envelope;
                let mu = ma(phi, q)?;
                let touching = contact_set(phi, f, eps)?;
                let below = NodeSet::from_predicate(f.grid(), eps, |n| m.value(n) - phi.value(n) > eps);
                let support = touching.union(&below)?;
                let off = mu.total_on(&support.complement())?;
                let scale = mu.total_mass().max(q.volume() * 1e-3);
                r.push(Residual::at_most("off_support_mass", normalised(off, 0.0, 0.0, scale), identity));
                r.primary = Some("off_support_mass".into());
                for (label, other) in [("identity_P", &p), ("identity_M", &m)] {
                    let s = contact_set(phi, other, eps)?;
                    let cmp = compare_restricted(&ma(other, q)?, &mu, &s, w, q.volume() * 1e-3)?;
                    r.push(Residual::at_most(
                        label,
                        normalised(cmp.absolute, cmp.mu_mass, cmp.nu_mass, q.volume()),
                        identity,
                    ));
                }
                r.push(Residual::info("phi_total", mu.total_mass()));
            }
            Corollary::IV | Corollary::V => {
                let qs = need_sing()?;
                let m = maximal_envelope_with(f, q, qs, &eo)?.envelope;
                let c = opts.tol.get("shift", 0.1);
                let grid = f.grid();
                let mut instances: Vec<(&str, GridFunction)> = vec![("maximal", m.clone()), ("shifted", m.shift(-c))];
                if which == Corollary::IV {
                    let vs = qs.vertices();
                    let g = vs
                        .iter()
                        .fold([0.0, 0.0], |a, v| [a[0] + v[0] / vs.len() as f64, a[1] + v[1] / vs.len() as f64]);
                    let lin = GridFunction::from_fn(grid, |p| g[0] * p[0] + g[1] * p[1])?;
                    let b = m.sub(&lin)?.min() - c;
                    instances.push(("affine", lin.shift(b)));
                } else {
                    let contact = contact_set(&m, f, eps)?;
                    if let Some((lo, hi)) = contact.bounding_box() {
                        let region = NodeSet::from_predicate(grid, eps, |n| {
                            let p = grid.point(n);
                            contact.contains(n)
                                && (0..grid.dim()).all(|a| {
                                    let mid = 0.5 * (lo[a] + hi[a]);
                                    (p[a] - mid).abs() <= 0.25 * (hi[a] - lo[a])
                                })
                        });
                        if !region.is_empty() {
                            instances.push(("tangent_max", tangent_max(&m, &region, c)?));
                        }
                    }
                }
                let vol = q.volume().max(f64::MIN_POSITIVE);
                let small = opts.tol.get("null_mass", 0.01) * vol;
                let nu = obstacle_measure(f)?;
                let m_contact = contact_set(&m, f, eps)?;
                let mut inconsistent = 0usize;
                for (label, phi) in &instances {
                    let equal = phi.sup_distance(&m)? <= eps;
                    let (lhs, rhs) = if which == Corollary::IV {
                        let mu = ma(phi, q)?;
                        let off = NodeSet::from_predicate(grid, eps, |n| m.value(n) - phi.value(n) > eps);
                        (mu.total_on(&off)? <= small, mu.total_mass() <= small || equal)
                    } else {
                        let untouched = NodeSet::from_predicate(grid, eps, |n| f.value(n) - phi.value(n) > eps);
                        (nu.total_on(&m_contact.intersection(&untouched)?)? <= small, equal)
                    };
                    if lhs != rhs {
                        inconsistent += 1;
                    }
                    r.note(format!(
                        "instance {label}: condition 1 {lhs}, condition 2 {rhs} -> {}",
                        if lhs == rhs { "consistent" } else { "inconsistent" }
                    ));
                }
                r.note("biconditional verified on constructed instances only");
                r.push(Residual::at_most("inconsistent_instances", inconsistent as f64, 0.0));
                r.push(Residual::info("instances", instances.len() as f64));
            }
        }
        Ok(())
    })
}

/// `MA(P(f)) <= 1_{P=f} MA(f)` bin by bin, for possibly non-smooth obstacles.
pub fn check_inequality_dd(f: &GridFunction, q: &GradientPolytope, opts: &CheckOptions) -> CheckReport {
    run("inequality", opts, |r| {
        check_dim(f, q)?;
        r.input("grid", describe_grid(f.grid())).input("class", describe_polytope(q)).input("f", fingerprint(f));
        let env = envelope_with(f, q, &opts.envelope_options())?;
        let mu = ma(&env.envelope, q)?;
        let nu = obstacle_measure(f)?.restrict(&env.contact)?;
        let w = opts.bin_width;
        let excess: f64 = mu.binned(w).iter().zip(nu.binned(w)).map(|(a, b)| (a - b).max(0.0)).sum();
        let scale = mu.total_mass().max(q.volume());
        r.push(Residual::at_most(
            "excess",
            normalised(excess, 0.0, 0.0, scale),
            opts.tol.get("identity", IDENTITY_TOL),
        ));
        r.primary = Some("excess".into());
        r.push(Residual::info("mu_total", mu.total_mass())).push(Residual::info("nu_contact", nu.total_mass()));
        r.plot = Some(plot_columns(f, &env.envelope, &mu, nu.masses(), w, "P"));
        Ok(())
    })
}

fn kink_grid(resolution: usize) -> Result<Grid> {
    Grid::line(-2.0, 2.0, resolution)
}

/// Fixed kinked instance `phi = 0`, `f = |x|`, `Q = [-1, 1]` on `[-2, 2]`: the
/// identity must fail with residual at least the floor.
pub fn check_counterexample_kink(resolution: usize, opts: &CheckOptions) -> CheckReport {
    let mut opts = opts.clone();
    opts.expected_failure = true;
    run("kink", &opts, |r| {
        let grid = kink_grid(resolution)?;
        let q = GradientPolytope::interval(-1.0, 1.0)?;
        let phi = GridFunction::constant(&grid, 0.0)?;
        let f = GridFunction::from_fn(&grid, |p| p[0].abs())?;
        r.input("grid", describe_grid(&grid)).input("class", describe_polytope(&q)).input("f", "abs(x)");
        let eps = opts.eps(&f);
        let mu = ma(&phi, &q)?;
        let nu = obstacle_measure(&f)?;
        let s = contact_set(&phi, &f, eps)?;
        let cmp = compare_restricted(&mu, &nu, &s, opts.bin_width, q.volume() * 1e-3)?;
        let floor = opts.tol.get("floor", 1.9);
        r.push(Residual::at_least("identity_abs", cmp.absolute, floor));
        r.primary = Some("identity_abs".into());
        let wide = opts.tol.get("widened", 0.05);
        let s_wide = contact_set(&phi, &f, wide)?;
        let cmp_wide = compare_restricted(&mu, &nu, &s_wide, opts.bin_width, q.volume() * 1e-3)?;
        r.push(Residual::at_least("widened_identity_abs", cmp_wide.absolute, floor));
        r.push(Residual::info("contact_nodes", s.count() as f64))
            .push(Residual::info("widened_nodes", s_wide.count() as f64));
        r.note("convex-model analogue of the failure for merely continuous obstacles");
        Ok(())
    })
}

/// The kinked instance with `|x|` replaced by its Huber smoothing of width `delta`
/// (`x^2 / (2 delta)` near 0, `|x| - delta / 2` beyond): the identity holds.
pub fn check_smoothed_kink(resolution: usize, delta: f64, opts: &CheckOptions) -> CheckReport {
    run("smoothed_kink", opts, |r| {
        if !(delta > 0.0) {
            return Err(Error::InvalidArgument(format!("smoothing width {delta} must be positive")));
        }
        let grid = kink_grid(resolution)?;
        let q = GradientPolytope::interval(-1.0, 1.0)?;
        let phi = GridFunction::constant(&grid, 0.0)?;
        let f = GridFunction::from_fn(&grid, |p| {
            let x = p[0].abs();
            if x <= delta {
                x * x / (2.0 * delta)
            } else {
                x - 0.5 * delta
            }
        })?;
        r.input("grid", describe_grid(&grid)).input("class", describe_polytope(&q)).input("delta", delta);
        let eps = opts.eps(&f);
        let mu = ma(&phi, &q)?;
        let nu = obstacle_measure(&f)?;
        let s = contact_set(&phi, &f, eps)?;
        let cmp = compare_restricted(&mu, &nu, &s, opts.bin_width, q.volume() * 1e-3)?;
        let rel = normalised(cmp.absolute, cmp.mu_mass, cmp.nu_mass, q.volume());
        r.push(Residual::at_most("identity", rel, opts.tol.get("identity", IDENTITY_TOL)));
        r.primary = Some("identity".into());
        r.push(Residual::info("identity_abs", cmp.absolute)).push(Residual::info("contact_nodes", s.count() as f64));
        Ok(())
    })
}

/// Levels `1, 2, 4, ...` up to and including `j_max`.
fn dyadic_levels(j_max: usize) -> Vec<usize> {
    let mut js = Vec::new();
    let mut j = 1;
    while j < j_max {
        js.push(j);
        j *= 2;
    }
    js.push(j_max.max(1));
    js
}

/// `psi_j = P(min(phi + 1/j, f))` decreases to the envelope of `phi`, with
/// converging measures and contact sets containing that of `phi`.
pub fn check_monotone_approx(
    phi: &GridFunction,
    f: &GridFunction,
    q: &GradientPolytope,
    j_max: usize,
    opts: &CheckOptions,
) -> CheckReport {
    run("monotone", opts, |r| {
        check_dim(f, q)?;
        check_below(phi, f)?;
        if j_max < 2 {
            return Err(Error::InvalidArgument("the monotone approximation needs j_max >= 2".into()));
        }
        r.input("grid", describe_grid(f.grid()))
            .input("class", describe_polytope(q))
            .input("phi", fingerprint(phi))
            .input("f", fingerprint(f))
            .input("j_max", j_max);
        let eo = opts.envelope_options();
        let eps = opts.eps(f);
        let base = contact_set(phi, f, eps)?;
        let js = dyadic_levels(j_max);
        let mut psis: Vec<GridFunction> = Vec::with_capacity(js.len());
        let mut violation: f64 = 0.0;
        let mut inclusion = 0usize;
        for &j in &js {
            let lifted = phi.shift(1.0 / j as f64);
            let psi = rooftop_with(&[lifted, f.clone()], q, &eo)?.envelope;
            if let Some(prev) = psis.last() {
                violation =
                    violation.max(psi.values().iter().zip(prev.values()).map(|(a, b)| a - b).fold(0.0, f64::max));
            }
            inclusion += base.difference(&contact_set(&psi, f, eps)?)?.count();
            psis.push(psi);
        }
        r.push(Residual::at_most("monotone_violation", violation, opts.tol.get("monotone", MONOTONE_TOL)));
        let closure = envelope_with(phi, q, &eo)?.envelope;
        let last = psis.last().expect("at least two levels");
        let j_last = *js.last().expect("at least two levels") as f64;
        r.push(Residual::at_most("limit_gap", last.sup_distance(&closure)?, 1.0 / j_last + 1e-9));
        let w = opts.bin_width;
        let m_last = ma(last, q)?;
        let m_prev = ma(&psis[psis.len() - 2], q)?;
        let diff: f64 = m_last.binned(w).iter().zip(m_prev.binned(w)).map(|(a, b)| (a - b).abs()).sum();
        let scale = q.volume().max(m_last.total_mass()).max(m_prev.total_mass());
        r.push(Residual::at_most("cauchy", normalised(diff, 0.0, 0.0, scale), opts.tol.get("cauchy", 0.01)));
        r.primary = Some("cauchy".into());
        r.push(Residual::at_most("inclusion_defects", inclusion as f64, 0.0));
        let m_closure = ma(&closure, q)?;
        let to_limit: f64 = m_last.binned(w).iter().zip(m_closure.binned(w)).map(|(a, b)| (a - b).abs()).sum();
        r.push(Residual::info("distance_to_limit", normalised(to_limit, 0.0, 0.0, scale)));
        r.push(Residual::info("levels", js.len() as f64));
        Ok(())
    })
}

/// Per-axis Huber function: `x^2 / 2` on `[-1, 1]`, `|x| - 1/2` beyond. Its gradients fill the unit box.
fn huber(grid: &Grid) -> Result<GridFunction> {
    let h = |x: f64| if x.abs() <= 1.0 { 0.5 * x * x } else { x.abs() - 0.5 };
    GridFunction::from_fn(grid, |p| if grid.dim() == 1 { h(p[0]) } else { h(p[0]) + h(p[1]) })
}

/// Least-squares coefficients of a degree-`deg` polynomial through `(ts, ys)`.
fn polyfit(ts: &[f64], ys: &[f64], deg: usize) -> Vec<f64> {
    let k = deg + 1;
    let mut a = vec![vec![0.0; k + 1]; k];
    for (t, y) in ts.iter().zip(ys) {
        let pw: Vec<f64> = (0..k).map(|m| t.powi(m as i32)).collect();
        for i in 0..k {
            for j in 0..k {
                a[i][j] += pw[i] * pw[j];
            }
            a[i][k] += pw[i] * y;
        }
    }
    solve(a)
}

/// Gaussian elimination with partial pivoting on an augmented square system.
fn solve(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let k = a.len();
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap_or(c);
        a.swap(c, p);
        let d = a[c][c];
        if d == 0.0 {
            continue;
        }
        for i in 0..k {
            if i != c {
                let m = a[i][c] / d;
                for j in c..=k {
                    a[i][j] -= m * a[c][j];
                }
            }
        }
    }
    (0..k).map(|i| if a[i][i] != 0.0 { a[i][k] / a[i][i] } else { 0.0 }).collect()
}

/// The identity for `phi + t rho` against `f + t rho` in the class `Q + tB`,
/// with the signed bin differences fitted by a polynomial in `t`.
pub fn check_scaling_family(
    phi: &GridFunction,
    f: &GridFunction,
    q: &GradientPolytope,
    t_list: &[f64],
    opts: &CheckOptions,
) -> CheckReport {
    run("scaling", opts, |r| {
        check_dim(f, q)?;
        check_below(phi, f)?;
        let n = f.grid().dim();
        let mut sorted = t_list.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate t values".into()));
        }
        if sorted.len() < n + 2 || sorted[0] != 0.0 || sorted.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need at least {} distinct finite t values >= 0 including 0",
                n + 2
            )));
        }
        r.input("grid", describe_grid(f.grid()))
            .input("class", describe_polytope(q))
            .input("phi", fingerprint(phi))
            .input("f", fingerprint(f))
            .input("t", format!("{t_list:?}"));
        let grid = f.grid();
        let rho = huber(grid)?;
        let unit = GradientPolytope::unit_box(n, 1.0);
        let t_max = *sorted.last().expect("nonempty");
        let v_ref = q.minkowski_sum(&unit.scaled(t_max)?)?.volume();
        let eps = opts.eps(f);
        let s = contact_set(phi, f, eps)?;
        let w = opts.bin_width;
        let identity = opts.tol.get("identity", IDENTITY_TOL);
        let mut table: Vec<Vec<f64>> = Vec::new();
        for &t in t_list {
            let qt = if t == 0.0 { q.clone() } else { q.minkowski_sum(&unit.scaled(t)?)? };
            let u_t = phi.add(&rho.scale(t))?;
            let f_t = f.add(&rho.scale(t))?;
            let mu = ma(&u_t, &qt)?;
            let nu = obstacle_measure(&f_t)?;
            let diff: Vec<f64> =
                (0..grid.len()).map(|k| if s.contains(k) { mu.mass(k) - nu.mass(k) } else { 0.0 }).collect();
            let bins = signed_bins(grid, &diff, w);
            let abs: f64 = bins.iter().map(|d| d.abs()).sum();
            let volume = if qt.volume() > 0.0 { qt.volume() } else { v_ref };
            let rel = normalised(abs, mu.total_on(&s)?, nu.total_on(&s)?, volume);
            r.push(Residual::at_most(&format!("r_t{t}"), rel, identity));
            table.push(bins);
        }
        r.primary = Some("r_t0".into());
        let fit_tol = opts.tol.get("fit", IDENTITY_TOL);
        let mut coef = vec![0.0; n + 1];
        for b in 0..bin_count(grid, w) {
            let ys: Vec<f64> = table.iter().map(|row| row[b]).collect();
            for (m, c) in polyfit(t_list, &ys, n).into_iter().enumerate() {
                coef[m] += c.abs();
            }
        }
        for (m, c) in coef.iter().enumerate() {
            r.push(Residual::at_most(&format!("coefficient_{m}"), c / v_ref.max(f64::MIN_POSITIVE), fit_tol));
        }
        Ok(())
    })
}

/// Mixed identity `1_S MA(phi1, phi2) = 1_S MA(f1, f2)` on the joint contact set (two dimensions).
#[allow(clippy::too_many_arguments)]
pub fn check_mixed_main(
    phi1: &GridFunction,
    phi2: &GridFunction,
    f1: &GridFunction,
    f2: &GridFunction,
    q1: &GradientPolytope,
    q2: &GradientPolytope,
    opts: &CheckOptions,
) -> CheckReport {
    run("mixed", opts, |r| {
        if f1.grid().dim() != 2 {
            return Err(Error::Dimension("mixed identities are two-dimensional".into()));
        }
        check_below(phi1, f1)?;
        check_below(phi2, f2)?;
        r.input("grid", describe_grid(f1.grid()))
            .input("class1", describe_polytope(q1))
            .input("class2", describe_polytope(q2))
            .input("f1", fingerprint(f1))
            .input("f2", fingerprint(f2));
        let mu = mixed_ma(phi1, phi2, q1, q2)?;
        let nu = mixed_barrier_ma(f1, f2, &gradient_bounds(f1)?, &gradient_bounds(f2)?)?;
        let s = contact_set(phi1, f1, opts.eps(f1))?.intersection(&contact_set(phi2, f2, opts.eps(f2))?)?;
        let vol = mixed_volume(q1, q2)?;
        let cmp = compare_restricted(&mu.measure, &nu.measure, &s, opts.bin_width, vol * 1e-3)?;
        let rel = normalised(cmp.absolute, cmp.mu_mass, cmp.nu_mass, vol);
        r.push(Residual::at_most("identity", rel, opts.tol.get("identity", IDENTITY_TOL)));
        r.primary = Some("identity".into());
        r.push(Residual::info("identity_abs", cmp.absolute))
            .push(Residual::info("mu_contact", cmp.mu_mass))
            .push(Residual::info("nu_contact", cmp.nu_mass))
            .push(Residual::info("clamped_potential", mu.clamped_total))
            .push(Residual::info("clamped_obstacle", nu.clamped_total))
            .push(Residual::info("contact_nodes", s.count() as f64));
        Ok(())
    })
}

/// Polarization identities of the mixed measure and the quadratic dependence
/// of `MA(l1 u + l2 v)` on `(l1, l2)`.
pub fn check_polarization(
    u: &GridFunction,
    v: &GridFunction,
    qu: &GradientPolytope,
    qv: &GradientPolytope,
    expected_total: Option<f64>,
    opts: &CheckOptions,
) -> CheckReport {
    run("polarization", opts, |r| {
        if u.grid().dim() != 2 {
            return Err(Error::Dimension("polarization checks are two-dimensional".into()));
        }
        r.input("grid", describe_grid(u.grid()))
            .input("class_u", describe_polytope(qu))
            .input("class_v", describe_polytope(qv))
            .input("u", fingerprint(u))
            .input("v", fingerprint(v));
        let grid = u.grid();
        let diag = mixed_ma(u, u, qu, qu)?;
        let plain = ma(u, qu)?;
        let d = (0..grid.len()).map(|n| (diag.measure.mass(n) - plain.mass(n)).abs()).fold(0.0, f64::max);
        r.push(Residual::at_most("diagonal", d, opts.tol.get("polarization", 1e-9)));
        let a = mixed_ma(u, v, qu, qv)?;
        let b = mixed_ma(v, u, qv, qu)?;
        let d = (0..grid.len()).map(|n| (a.measure.mass(n) - b.measure.mass(n)).abs()).fold(0.0, f64::max);
        r.push(Residual::at_most("symmetry", d, opts.tol.get("symmetry", 1e-12)));
        let lambdas = [0.5, 1.0, 1.5];
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for &l1 in &lambdas {
            for &l2 in &lambdas {
                let w = u.scale(l1).add(&v.scale(l2))?;
                let qw = qu.scaled(l1)?.minkowski_sum(&qv.scaled(l2)?)?;
                ys.push(ma(&w, &qw)?.total_mass());
                rows.push([l1 * l1, l1 * l2, l2 * l2]);
            }
        }
        let mut normal = vec![vec![0.0; 4]; 3];
        for (row, y) in rows.iter().zip(&ys) {
            for i in 0..3 {
                for j in 0..3 {
                    normal[i][j] += row[i] * row[j];
                }
                normal[i][3] += row[i] * y;
            }
        }
        let coef = solve(normal);
        let mixed = a.measure.total_mass();
        let fit = if mixed > 0.0 { (coef[1] - 2.0 * mixed).abs() / (2.0 * mixed) } else { coef[1].abs() };
        r.push(Residual::at_most("lambda_fit", fit, opts.tol.get("lambda_fit", 0.02)));
        r.primary = Some("lambda_fit".into());
        if let Some(expected) = expected_total {
            r.push(Residual::at_most("mixed_total", (mixed - expected).abs() / expected, opts.tol.get("total", 0.02)));
        }
        r.push(Residual::info("mixed_mass", mixed))
            .push(Residual::info("cross_coefficient", coef[1]))
            .push(Residual::info("clamped", a.clamped_total));
        Ok(())
    })
}

/// Total mass plus boundary deficit equals the class volume; optionally the interior alone does too.
pub fn check_mass_bounds(
    u: &GridFunction,
    q: &GradientPolytope,
    expect_full: bool,
    opts: &CheckOptions,
) -> CheckReport {
    run("mass", opts, |r| {
        check_dim(u, q)?;
        r.input("grid", describe_grid(u.grid())).input("class", describe_polytope(q)).input("u", fingerprint(u));
        let m = ma(u, q)?;
        let vol = q.volume();
        let tol = opts.tol.get("mass", MASS_TOL);
        if vol > 0.0 {
            let budget = (m.total_mass() + m.boundary_deficit() - vol).abs() / vol;
            r.push(Residual::at_most("budget", budget, tol));
            r.primary = Some("budget".into());
            if expect_full {
                r.push(Residual::at_most("interior_shortfall", 1.0 - m.total_mass() / vol, tol));
            }
        } else {
            r.push(Residual::at_most("total", m.total_mass() + m.boundary_deficit(), 1e-12));
            r.note("class has no volume");
        }
        r.push(Residual::info("interior_mass", m.total_mass()))
            .push(Residual::info("boundary_deficit", m.boundary_deficit()));
        Ok(())
    })
}

/// Fast envelope against the direct sup formula.
pub fn check_oracle_envelope(
    f: &GridFunction,
    q: &GradientPolytope,
    samples: usize,
    opts: &CheckOptions,
) -> CheckReport {
    run("oracle_envelope", opts, |r| {
        check_dim(f, q)?;
        r.input("grid", describe_grid(f.grid()))
            .input("class", describe_polytope(q))
            .input("f", fingerprint(f))
            .input("samples", samples);
        let fast = envelope_with(f, q, &opts.envelope_options())?.envelope;
        let slow = brute_force_envelope(f, q, samples)?;
        let h = f.grid().h();
        r.push(Residual::at_most("sup_difference", fast.sup_distance(&slow)?, opts.tol.get("oracle_h", 2.0) * h));
        r.primary = Some("sup_difference".into());
        Ok(())
    })
}

/// Hull-based measure against subdifferential counting.
pub fn check_oracle_ma(
    u: &GridFunction,
    q: &GradientPolytope,
    y_resolution: usize,
    opts: &CheckOptions,
) -> CheckReport {
    run("oracle_ma", opts, |r| {
        check_dim(u, q)?;
        r.input("grid", describe_grid(u.grid()))
            .input("class", describe_polytope(q))
            .input("u", fingerprint(u))
            .input("y_resolution", y_resolution);
        let fast = ma(u, q)?;
        let slow = brute_force_ma(u, q, y_resolution)?;
        let w = opts.bin_width;
        let tv: f64 = fast.binned(w).iter().zip(slow.binned(w)).map(|(a, b)| (a - b).abs()).sum();
        let scale = fast.total_mass().max(slow.total_mass());
        r.push(Residual::at_most("binned_tv", normalised(tv, 0.0, 0.0, scale), opts.tol.get("oracle", ORACLE_TOL)));
        r.primary = Some("binned_tv".into());
        r.push(Residual::info("fast_total", fast.total_mass())).push(Residual::info("oracle_total", slow.total_mass()));
        Ok(())
    })
}

/// Truncated measures of random potentials against the model potential:
/// monotone in the level, and stabilised once the truncation is inactive.
pub fn check_truncation(
    q: &GradientPolytope,
    grid: &Grid,
    seed: u64,
    count: usize,
    pieces: usize,
    opts: &CheckOptions,
) -> CheckReport {
    run("truncation", opts, |r| {
        r.input("grid", describe_grid(grid))
            .input("class", describe_polytope(q))
            .input("seed", seed)
            .input("count", count)
            .input("pieces", pieces);
        let v = crate::envelope::model_potential(q, grid)?;
        let mut worst: f64 = 0.0;
        let mut unstable = 0usize;
        for s in 0..count as u64 {
            let u = crate::envelope::random_theta_psh(q, grid, seed.wrapping_add(s), pieces)?;
            let sup = v.sub(&u)?.max().max(1e-3);
            let schedule: Vec<f64> = (1..=8).map(|i| sup * i as f64 / 6.0).collect();
            match nonpluripolar_ma(&u, &v, q, &schedule) {
                Ok(run) => {
                    worst = worst.max(run.max_drop);
                    if !run.stabilized {
                        unstable += 1;
                    }
                }
                Err(Error::Monotonicity { drop, .. }) => {
                    worst = worst.max(drop);
                    unstable += 1;
                }
                Err(e) => return Err(e),
            }
        }
        r.push(Residual::at_most("max_violation", worst, opts.tol.get("truncation", 1e-12)));
        r.push(Residual::at_most("unstabilized", unstable as f64, 0.0));
        r.primary = Some("max_violation".into());
        Ok(())
    })
}

/// Values of `u` at given points (nearest nodes) against expected values.
pub fn check_probe(u: &GridFunction, points: &[[f64; 2]], expected: &[f64], opts: &CheckOptions) -> CheckReport {
    run("probe", opts, |r| {
        if points.len() != expected.len() || points.is_empty() {
            return Err(Error::InvalidArgument("probe needs matching, nonempty point and value lists".into()));
        }
        let g = u.grid();
        r.input("grid", describe_grid(g)).input("u", fingerprint(u)).input("points", format!("{points:?}"));
        let mut worst: f64 = 0.0;
        for (p, e) in points.iter().zip(expected) {
            let n = nearest_node(g, *p);
            worst = worst.max((u.value(n) - e).abs());
        }
        r.push(Residual::at_most("max_error", worst, opts.tol.get("probe", 2.0 * g.h())));
        Ok(())
    })
}

pub fn nearest_node(g: &Grid, p: [f64; 2]) -> usize {
    let idx = |a: usize| (((p[a] - g.lo(a)) / g.spacing(a)).round().max(0.0) as usize).min(g.resolution(a) - 1);
    if g.dim() == 1 {
        idx(0)
    } else {
        g.index(idx(0), idx(1))
    }
}

/// Bounding box of a contact set against an expected box, in nodes.
pub fn check_contact(contact: &NodeSet, lo: [f64; 2], hi: [f64; 2], opts: &CheckOptions) -> CheckReport {
    run("contact", opts, |r| {
        let g = contact.grid();
        r.input("grid", describe_grid(g)).input("expected", format!("{lo:?}..{hi:?}"));
        let (blo, bhi) = contact.bounding_box().ok_or(Error::Empty("contact set"))?;
        let off = (0..g.dim())
            .map(|a| ((blo[a] - lo[a]).abs().max((bhi[a] - hi[a]).abs())) / g.spacing(a))
            .fold(0.0, f64::max);
        r.push(Residual::at_most("offset_nodes", off, opts.tol.get("contact_nodes", 1.0) + 1e-9));
        r.push(Residual::info("contact_nodes", contact.count() as f64));
        Ok(())
    })
}
