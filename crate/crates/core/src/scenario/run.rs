use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::envelope::{
    default_contact_tolerance, envelope_with, maximal_envelope_with, model_potential, random_rooftop_potential,
    random_theta_psh, tangent_max, EnvelopeOptions,
};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::grid::{pointwise_min, sample, Grid, GridFunction, NodeSet};
use crate::harness::*;
use crate::measure::gradient_bounds;
use crate::polytope::GradientPolytope;

use super::report::{AggregateVerdict, Report, Timing};
use super::{CheckKind, CheckSpec, ClassRef, PotentialKind, PotentialSpec, Scenario, Target};

const DEFAULT_PIECES: usize = 6;

/// A scenario sampled on its grid.
#[derive(Clone, Debug)]
pub struct Instance {
    pub grid: Grid,
    pub class: GradientPolytope,
    pub singularity: Option<GradientPolytope>,
    pub barriers: Vec<(String, GridFunction)>,
}

impl Instance {
    pub fn build(s: &Scenario) -> Result<Instance> {
        let grid = s.grid.build()?;
        let class = s.class.build()?;
        let singularity = s.singularity.as_ref().map(|q| q.build()).transpose()?;
        let barriers = s
            .barriers
            .iter()
            .map(|b| Ok((b.name.clone(), sample(&Expression::parse(&b.expr)?, &grid)?)))
            .collect::<Result<_>>()?;
        Ok(Instance { grid, class, singularity, barriers })
    }

    pub fn barrier(&self, name: &str) -> Result<&GridFunction> {
        self.barriers
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, f)| f)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown barrier '{name}'")))
    }

    fn first_barrier(&self) -> Result<&GridFunction> {
        self.barriers.first().map(|(_, f)| f).ok_or(Error::Empty("barriers"))
    }

    fn singularity(&self) -> Result<&GradientPolytope> {
        self.singularity.as_ref().ok_or_else(|| Error::InvalidArgument("no singularity polytope".into()))
    }
}

/// One potential of a (possibly batched) recipe.
#[derive(Clone, Debug)]
struct Potential {
    seed: Option<u64>,
    phi: GridFunction,
}

fn envelope_options(s: &Scenario) -> EnvelopeOptions {
    EnvelopeOptions {
        dual_resolution: s.settings.dual_resolution,
        contact_tolerance: s.settings.tol.get_opt("contact"),
    }
}

fn build_potentials(s: &Scenario, inst: &Instance) -> Result<Vec<Potential>> {
    let spec = s.potential.clone().unwrap_or_default();
    let f = match &spec.barrier {
        Some(name) => Some(inst.barrier(name)?),
        None => inst.barriers.first().map(|(_, f)| f),
    };
    let need_f = || f.ok_or(Error::Empty("barriers"));
    let eo = envelope_options(s);
    let random = matches!(spec.kind, PotentialKind::Random | PotentialKind::ThetaPsh);
    let count = if random { spec.count.unwrap_or(1) } else { 1 };
    let first_seed = spec.seed.unwrap_or(s.seed);
    let q = match spec.class.unwrap_or_default() {
        ClassRef::Class => &inst.class,
        ClassRef::Singularity => inst.singularity()?,
    };
    (0..count as u64)
        .map(|i| {
            let seed = first_seed.wrapping_add(i);
            let pieces = spec.pieces.unwrap_or(DEFAULT_PIECES);
            let phi = match spec.kind {
                PotentialKind::Envelope => envelope_with(need_f()?, q, &eo)?.envelope,
                PotentialKind::Maximal => {
                    maximal_envelope_with(need_f()?, &inst.class, inst.singularity()?, &eo)?.envelope
                }
                PotentialKind::Expression => {
                    let text = spec.expr.as_deref().ok_or_else(|| Error::InvalidArgument("missing expr".into()))?;
                    sample(&Expression::parse(text)?, &inst.grid)?
                }
                PotentialKind::Random => random_rooftop_potential(need_f()?, q, seed, pieces)?,
                PotentialKind::ThetaPsh => random_theta_psh(q, &inst.grid, seed, pieces)?,
                PotentialKind::TangentMax => tangent_potential(&spec, need_f()?, inst, &eo)?,
                PotentialKind::Model => model_potential(&inst.class, &inst.grid)?,
            };
            let phi = match (spec.kind, spec.shift) {
                (PotentialKind::TangentMax, _) | (_, None) => phi,
                (_, Some(c)) => phi.shift(-c),
            };
            Ok(Potential { seed: random.then_some(seed), phi })
        })
        .collect()
}

fn tangent_potential(
    spec: &PotentialSpec,
    f: &GridFunction,
    inst: &Instance,
    eo: &EnvelopeOptions,
) -> Result<GridFunction> {
    let region = spec.region.as_ref().ok_or_else(|| Error::InvalidArgument("tangent_max needs a region".into()))?;
    let g = &inst.grid;
    let inside = NodeSet::from_predicate(g, 0.0, |n| {
        let p = g.point(n);
        (0..g.dim()).all(|a| p[a] >= region.lo[a] - 1e-12 && p[a] <= region.hi[a] + 1e-12)
    });
    let p = envelope_with(f, &inst.class, eo)?.envelope;
    tangent_max(&p, &inside, spec.shift.unwrap_or(0.1))
}

/// Barriers a check uses, by name, in declared order.
fn used_barriers<'a>(c: &CheckSpec, inst: &'a Instance) -> Result<Vec<&'a GridFunction>> {
    match &c.barriers {
        Some(names) => names.iter().map(|n| inst.barrier(n)).collect(),
        None => Ok(inst.barriers.iter().map(|(_, f)| f).collect()),
    }
}

/// The barrier a potential-based check compares against.
fn potential_barrier<'a>(s: &Scenario, c: &CheckSpec, inst: &'a Instance) -> Result<&'a GridFunction> {
    if let Some(name) = c.barriers.as_ref().and_then(|b| b.first()) {
        return inst.barrier(name);
    }
    match s.potential.as_ref().and_then(|p| p.barrier.as_ref()) {
        Some(name) => inst.barrier(name),
        None => inst.first_barrier(),
    }
}

fn check_options(s: &Scenario, c: &CheckSpec) -> CheckOptions {
    CheckOptions {
        tol: s.settings.tol.merged(&c.tol),
        bin_width: s.settings.bin_width,
        dual_resolution: s.settings.dual_resolution,
        expected_failure: c.expected_failure,
    }
}

fn to_point(p: &[f64]) -> [f64; 2] {
    [p[0], p.get(1).copied().unwrap_or(0.0)]
}

fn run_check(s: &Scenario, inst: &Instance, c: &CheckSpec, phi: Option<&GridFunction>) -> Result<CheckReport> {
    let kind = c.parsed_kind()?;
    let opts = check_options(s, c);
    let q = &inst.class;
    let need_phi = || phi.ok_or_else(|| Error::InvalidArgument("check needs a potential".into()));
    let used = || used_barriers(c, inst);
    let min_of_used = || -> Result<GridFunction> {
        let fs: Vec<GridFunction> = used()?.into_iter().cloned().collect();
        pointwise_min(&fs)
    };
    let target = |c: &CheckSpec| -> Result<GridFunction> {
        match c.target.unwrap_or_default() {
            Target::Potential => need_phi().cloned(),
            Target::Envelope => Ok(envelope_with(&min_of_used()?, q, &envelope_options(s))?.envelope),
        }
    };
    Ok(match kind {
        CheckKind::Main => check_main(need_phi()?, potential_barrier(s, c, inst)?, q, &opts),
        CheckKind::Rooftop => {
            let fs = used()?;
            check_rooftop_decomposition(fs[0], fs[1], q, &opts)
        }
        CheckKind::Partition => {
            let fs: Vec<GridFunction> = used()?.into_iter().cloned().collect();
            check_partition(&fs, q, &opts)
        }
        CheckKind::Corollary(which) => {
            check_corollary(which, phi, potential_barrier(s, c, inst)?, q, inst.singularity.as_ref(), &opts)
        }
        CheckKind::Inequality => check_inequality_dd(&min_of_used()?, q, &opts),
        CheckKind::Kink => check_counterexample_kink(inst.grid.resolution(0), &opts),
        CheckKind::SmoothedKink => check_smoothed_kink(inst.grid.resolution(0), c.delta.unwrap_or(0.25), &opts),
        CheckKind::Monotone => {
            check_monotone_approx(need_phi()?, potential_barrier(s, c, inst)?, q, c.j_max.unwrap_or(64), &opts)
        }
        CheckKind::Scaling => {
            check_scaling_family(need_phi()?, potential_barrier(s, c, inst)?, q, c.t.as_deref().unwrap_or(&[]), &opts)
        }
        CheckKind::Mixed => {
            let fs = used()?;
            let q2 = match &c.class2 {
                Some(spec) => spec.build()?,
                None => q.clone(),
            };
            let eo = envelope_options(s);
            let p1 = envelope_with(fs[0], q, &eo)?.envelope;
            let p2 = envelope_with(fs[1], &q2, &eo)?.envelope;
            check_mixed_main(&p1, &p2, fs[0], fs[1], q, &q2, &opts)
        }
        CheckKind::Polarization => {
            let fs = used()?;
            check_polarization(
                fs[0],
                fs[1],
                &gradient_bounds(fs[0])?,
                &gradient_bounds(fs[1])?,
                c.expected_total,
                &opts,
            )
        }
        CheckKind::Mass => check_mass_bounds(&target(c)?, q, c.expect_full.unwrap_or(false), &opts),
        CheckKind::OracleEnvelope => {
            let samples = c.samples.unwrap_or(if inst.grid.dim() == 1 { 10_000 } else { 101 });
            check_oracle_envelope(&min_of_used()?, q, samples, &opts)
        }
        CheckKind::OracleMa => check_oracle_ma(&target(c)?, q, c.y_resolution.unwrap_or(401), &opts),
        CheckKind::Truncation => {
            check_truncation(q, &inst.grid, s.seed, c.count.unwrap_or(50), c.pieces.unwrap_or(DEFAULT_PIECES), &opts)
        }
        CheckKind::Probe => {
            let pts: Vec<[f64; 2]> = c.points.iter().flatten().map(|p| to_point(p)).collect();
            check_probe(need_phi()?, &pts, c.values.as_deref().unwrap_or(&[]), &opts)
        }
        CheckKind::Contact => {
            let f = potential_barrier(s, c, inst)?;
            let eps = opts.tol.get_opt("contact").unwrap_or_else(|| default_contact_tolerance(f));
            let set = contact_set(need_phi()?, f, eps)?;
            let lo = to_point(c.lo.as_deref().unwrap_or(&[0.0]));
            let hi = to_point(c.hi.as_deref().unwrap_or(&[0.0]));
            check_contact(&set, lo, hi, &opts)
        }
    })
}

struct Job<'a> {
    spec: &'a CheckSpec,
    name: String,
    potential: Option<usize>,
}

/// Runs every check of a scenario. Checks run in parallel; reports keep the declared order.
pub fn run_scenario(s: &Scenario) -> Result<Report> {
    s.validate()?;
    let start = Instant::now();
    let names: Vec<String> = s.checks.iter().map(CheckSpec::display_name).collect();
    let built = Instance::build(s);
    let needs_potential = s
        .checks
        .iter()
        .zip(&names)
        .any(|(c, _)| c.parsed_kind().is_ok_and(|k| k.uses_potential(c.target.unwrap_or_default())));
    let potentials = match (&built, needs_potential) {
        (Ok(inst), true) => build_potentials(s, inst),
        _ => Ok(Vec::new()),
    };
    let mut checks = Vec::new();
    match (&built, &potentials) {
        (Ok(inst), Ok(pots)) => {
            let mut jobs = Vec::new();
            for (c, name) in s.checks.iter().zip(&names) {
                let kind = c.parsed_kind()?;
                if kind.uses_potential(c.target.unwrap_or_default()) && pots.len() > 1 {
                    for (i, p) in pots.iter().enumerate() {
                        let label = p.seed.map_or(format!("{name}[{i}]"), |seed| format!("{name}[seed={seed}]"));
                        jobs.push(Job { spec: c, name: label, potential: Some(i) });
                    }
                } else {
                    jobs.push(Job { spec: c, name: name.clone(), potential: (!pots.is_empty()).then_some(0) });
                }
            }
            checks = jobs
                .par_iter()
                .map(|job| {
                    let t = Instant::now();
                    let phi = job.potential.map(|i| &pots[i].phi);
                    let mut r = run_check(s, inst, job.spec, phi).unwrap_or_else(|e| CheckReport::failed(&job.name, e));
                    r.name = job.name.clone();
                    r.input("scenario", &s.name);
                    if let Some(seed) = job.potential.and_then(|i| pots[i].seed) {
                        r.input("seed", seed);
                    }
                    for b in &s.barriers {
                        r.input(&format!("barrier:{}", b.name), &b.expr);
                    }
                    if r.runtime.is_zero() {
                        r.runtime = t.elapsed();
                    }
                    r
                })
                .collect();
        }
        (Err(e), _) | (_, Err(e)) => {
            for (c, name) in s.checks.iter().zip(&names) {
                let mut r = CheckReport::failed(name, e);
                r.expected_failure = c.expected_failure;
                checks.push(r);
            }
        }
    }
    let verdict = if checks.iter().all(CheckReport::is_ok) { AggregateVerdict::Pass } else { AggregateVerdict::Fail };
    let mut per_check = BTreeMap::new();
    for r in &checks {
        per_check.insert(r.name.clone(), r.runtime.as_secs_f64());
    }
    Ok(Report::new(s, checks, verdict, Timing { wall_clock_seconds: start.elapsed().as_secs_f64(), checks: per_check }))
}
