//! Declarative scenarios: a TOML (or JSON) file naming a grid, a gradient
//! class, barrier formulas, a potential recipe and a list of checks.
//!
//! ```toml
//! name = "e1"
//! seed = 7
//!
//! [grid]
//! dim = 1
//! lo = -2.0
//! hi = 2.0
//! resolution = 2049
//!
//! [class]
//! interval = [-1.0, 1.0]
//!
//! [[barriers]]
//! name = "f"
//! expr = "x^2"
//!
//! [[checks]]
//! kind = "main"
//! tol = { identity = 0.05 }
//! ```
//!
//! Every validation problem in a file is reported at once.

mod corpus;
mod report;
mod run;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::grid::Grid;
use crate::harness::{Corollary, Tolerances};
use crate::polytope::{GradientPolytope, GEOMETRY_TOL};

pub use corpus::{corpus, CorpusEntry};
pub use report::{
    emit, sweep_resolution, AggregateVerdict, ConvergenceReport, Format, Report, Series, Timing, MIN_ORDER,
};
pub use run::{run_scenario, Instance};

/// Minimum distance, in nodes, between a declared contact region and the box boundary.
pub const BOUNDARY_MARGIN: usize = 3;

/// A scalar applied to every axis, or one value per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAxis<T> {
    Same(T),
    Each(Vec<T>),
}

impl<T: Copy> PerAxis<T> {
    pub fn expand(&self, dim: usize) -> std::result::Result<Vec<T>, String> {
        match self {
            PerAxis::Same(v) => Ok(vec![*v; dim]),
            PerAxis::Each(v) if v.len() == dim => Ok(v.clone()),
            PerAxis::Each(v) => Err(format!("expected {dim} values, got {}", v.len())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub lo: PerAxis<f64>,
    pub hi: PerAxis<f64>,
    pub resolution: PerAxis<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        let bad = |what: &str, e: String| Error::InvalidArgument(format!("grid {what}: {e}"));
        let lo = self.lo.expand(self.dim).map_err(|e| bad("lo", e))?;
        let hi = self.hi.expand(self.dim).map_err(|e| bad("hi", e))?;
        let res = self.resolution.expand(self.dim).map_err(|e| bad("resolution", e))?;
        Grid::new(self.dim, &lo, &hi, &res)
    }
}

/// `interval = [a, b]` in one dimension, `vertices = [[x, y], ...]` (counterclockwise) in two.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<[f64; 2]>>,
}

impl PolytopeSpec {
    pub fn build(&self) -> Result<GradientPolytope> {
        match (&self.interval, &self.vertices) {
            (Some([a, b]), None) => GradientPolytope::interval(*a, *b),
            (None, Some(v)) => GradientPolytope::polygon(v.clone()),
            _ => Err(Error::Polytope("give exactly one of 'interval' or 'vertices'".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    /// Bounded second differences.
    #[default]
    Smooth,
    Kinked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSpec {
    pub name: String,
    pub expr: String,
    #[serde(default)]
    pub smoothness: Smoothness,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// Envelope of the barrier.
    #[default]
    Envelope,
    /// Envelope with gradients in the singularity polytope.
    Maximal,
    /// An explicit formula.
    Expression,
    /// Random potential touching the barrier on a set of positive measure.
    Random,
    /// Random maximum of affine functions with slopes in the class.
    ThetaPsh,
    /// Envelope lowered by `shift`, maxed with a tangent plane over `region`.
    TangentMax,
    /// Support function of the class.
    Model,
}

/// Which polytope a potential recipe draws its slopes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassRef {
    #[default]
    Class,
    Singularity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub kind: PotentialKind,
    /// Barrier the potential is built from; the first barrier by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<usize>,
    /// Seed of the first instance; the scenario seed by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Number of random instances (consecutive seeds); checks on the potential run once per instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Constant subtracted from the potential (the tangent-max offset for `tangent_max`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionSpec>,
    /// Polytope used by `envelope`, `random` and `theta_psh`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassRef>,
}

/// What the measure checks look at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[default]
    Envelope,
    Potential,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub kind: String,
    /// Report name; the kind by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub tol: Tolerances,
    #[serde(default)]
    pub expected_failure: bool,
    /// Barriers used by the check, by name; all barriers by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barriers: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_full: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_total: Option<f64>,
    /// Class of the second potential in mixed checks; the scenario class by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class2: Option<PolytopeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Bin width in nodes per axis.
    #[serde(default = "default_bin_width")]
    pub bin_width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_resolution: Option<usize>,
    /// Tolerances applied to every check, under per-check overrides.
    #[serde(default)]
    pub tol: Tolerances,
}

fn default_bin_width() -> usize {
    crate::harness::DEFAULT_BIN_WIDTH
}

impl Default for Settings {
    fn default() -> Settings {
        Settings { bin_width: default_bin_width(), dual_resolution: None, tol: Tolerances::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    pub class: PolytopeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singularity: Option<PolytopeSpec>,
    #[serde(default)]
    pub barriers: Vec<BarrierSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub settings: Settings,
    pub checks: Vec<CheckSpec>,
}

/// Parsed check kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckKind {
    Main,
    Rooftop,
    Partition,
    Corollary(Corollary),
    Inequality,
    Kink,
    SmoothedKink,
    Monotone,
    Scaling,
    Mixed,
    Polarization,
    Mass,
    OracleEnvelope,
    OracleMa,
    Truncation,
    Probe,
    Contact,
}

pub const CHECK_NAMES: &[&str] = &[
    "main",
    "rooftop",
    "partition",
    "corollary:i",
    "corollary:ii",
    "corollary:iii",
    "corollary:iv",
    "corollary:v",
    "inequality",
    "kink",
    "smoothed_kink",
    "monotone",
    "scaling",
    "mixed",
    "polarization",
    "mass",
    "oracle_envelope",
    "oracle_ma",
    "truncation",
    "probe",
    "contact",
];

impl std::str::FromStr for CheckKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<CheckKind> {
        Ok(match s {
            "main" => CheckKind::Main,
            "rooftop" => CheckKind::Rooftop,
            "partition" => CheckKind::Partition,
            "inequality" => CheckKind::Inequality,
            "kink" => CheckKind::Kink,
            "smoothed_kink" => CheckKind::SmoothedKink,
            "monotone" => CheckKind::Monotone,
            "scaling" => CheckKind::Scaling,
            "mixed" => CheckKind::Mixed,
            "polarization" => CheckKind::Polarization,
            "mass" => CheckKind::Mass,
            "oracle_envelope" => CheckKind::OracleEnvelope,
            "oracle_ma" => CheckKind::OracleMa,
            "truncation" => CheckKind::Truncation,
            "probe" => CheckKind::Probe,
            "contact" => CheckKind::Contact,
            _ => match s.strip_prefix("corollary:") {
                Some(which) => CheckKind::Corollary(which.parse()?),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown check '{s}'; valid checks: {}",
                        CHECK_NAMES.join(", ")
                    )))
                }
            },
        })
    }
}

impl CheckKind {
    /// Checks of an identity that only holds for smooth barriers.
    pub fn needs_smooth_barriers(self) -> bool {
        matches!(
            self,
            CheckKind::Main
                | CheckKind::Rooftop
                | CheckKind::Partition
                | CheckKind::Corollary(_)
                | CheckKind::Monotone
                | CheckKind::Scaling
                | CheckKind::Mixed
        )
    }

    /// Checks that run once per potential instance.
    pub fn uses_potential(self, target: Target) -> bool {
        match self {
            CheckKind::Main
            | CheckKind::Monotone
            | CheckKind::Scaling
            | CheckKind::Probe
            | CheckKind::Contact
            | CheckKind::Corollary(Corollary::III) => true,
            CheckKind::Mass | CheckKind::OracleMa => target == Target::Potential,
            _ => false,
        }
    }

    fn needs_singularity(self) -> bool {
        matches!(self, CheckKind::Corollary(Corollary::II | Corollary::III | Corollary::IV | Corollary::V))
    }
}

impl CheckSpec {
    pub fn parsed_kind(&self) -> Result<CheckKind> {
        self.kind.parse()
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.clone())
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// Same grid with `resolution` nodes on every axis.
    pub fn with_resolution(&self, resolution: usize) -> Scenario {
        let mut s = self.clone();
        s.grid.resolution = PerAxis::Same(resolution);
        s
    }

    pub fn with_seed(&self, seed: u64) -> Scenario {
        let mut s = self.clone();
        s.seed = seed;
        if let Some(p) = s.potential.as_mut() {
            p.seed = None;
        }
        s
    }

    /// Global tolerance overrides, taking precedence over the file.
    pub fn with_tolerances(&self, tol: &Tolerances) -> Scenario {
        let mut s = self.clone();
        s.settings.tol = s.settings.tol.merged(tol);
        for c in &mut s.checks {
            c.tol = c.tol.merged(tol);
        }
        s
    }

    /// Canonical JSON used for digests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }

    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        let grid = match self.grid.build() {
            Ok(g) => Some(g),
            Err(e) => {
                errs.push(e.to_string());
                None
            }
        };
        let dim = self.grid.dim;
        let class = match self.class.build() {
            Ok(q) if q.dim() != dim => {
                errs.push(format!("class is {}-dimensional on a {dim}-d grid", q.dim()));
                None
            }
            Ok(q) => Some(q),
            Err(e) => {
                errs.push(format!("class: {e}"));
                None
            }
        };
        if let Some(spec) = &self.singularity {
            match spec.build() {
                Ok(qs) => {
                    if let Some(q) = &class {
                        if qs.dim() != q.dim() {
                            errs.push("singularity and class polytopes differ in dimension".into());
                        } else if !q.contains_polytope(&qs, GEOMETRY_TOL) {
                            errs.push(format!(
                                "singularity type exceeds class: {:?} is not inside {:?}",
                                qs.vertices(),
                                q.vertices()
                            ));
                        }
                    }
                }
                Err(e) => errs.push(format!("singularity: {e}")),
            }
        }
        let mut names: Vec<&str> = Vec::new();
        for b in &self.barriers {
            if names.contains(&b.name.as_str()) {
                errs.push(format!("barrier '{}' is defined twice", b.name));
            }
            names.push(&b.name);
            match Expression::parse(&b.expr) {
                Ok(e) if dim == 1 && e.uses_y() => errs.push(format!("barrier '{}' uses y on a 1-d grid", b.name)),
                Ok(_) => {}
                Err(e) => errs.push(format!("barrier '{}': {e}", b.name)),
            }
        }
        let smooth = |n: &str| self.barriers.iter().any(|b| b.name == n && b.smoothness == Smoothness::Smooth);
        let near_boundary = |what: &str, lo: &[f64], hi: &[f64], errs: &mut Vec<String>| {
            let Some(g) = &grid else { return };
            if lo.len() != dim || hi.len() != dim {
                errs.push(format!("{what}: expected {dim} coordinates per corner"));
                return;
            }
            for a in 0..dim {
                let margin = BOUNDARY_MARGIN as f64 * g.spacing(a) - 1e-12;
                if lo[a] - g.lo(a) < margin || g.hi(a) - hi[a] < margin {
                    errs.push(format!(
                        "{what} [{}, {}] on axis {a} sits within {BOUNDARY_MARGIN} nodes of the boundary of [{}, {}]",
                        lo[a],
                        hi[a],
                        g.lo(a),
                        g.hi(a)
                    ));
                }
            }
        };
        if let Some(p) = &self.potential {
            if let Some(b) = &p.barrier {
                if !names.contains(&b.as_str()) {
                    errs.push(format!("potential refers to unknown barrier '{b}'"));
                }
            }
            let needs_barrier =
                !matches!(p.kind, PotentialKind::Expression | PotentialKind::ThetaPsh | PotentialKind::Model);
            if needs_barrier && self.barriers.is_empty() {
                errs.push("potential needs a barrier".into());
            }
            match p.kind {
                PotentialKind::Expression => match &p.expr {
                    None => errs.push("expression potential needs 'expr'".into()),
                    Some(text) => {
                        if let Err(e) = Expression::parse(text) {
                            errs.push(format!("potential: {e}"));
                        }
                    }
                },
                PotentialKind::Maximal if self.singularity.is_none() => {
                    errs.push("maximal potential needs a singularity polytope".into())
                }
                PotentialKind::TangentMax => match &p.region {
                    None => errs.push("tangent_max potential needs a 'region'".into()),
                    Some(r) => near_boundary("tangent region", &r.lo, &r.hi, &mut errs),
                },
                PotentialKind::Random | PotentialKind::ThetaPsh if p.pieces == Some(0) => {
                    errs.push("random potentials need at least one piece".into())
                }
                _ => {}
            }
            if p.class == Some(ClassRef::Singularity) && self.singularity.is_none() {
                errs.push("potential draws from the singularity polytope but none is given".into());
            }
            if p.count == Some(0) {
                errs.push("potential count must be positive".into());
            }
        }
        if self.checks.is_empty() {
            errs.push("scenario has no checks".into());
        }
        if self.settings.bin_width == 0 {
            errs.push("bin width must be positive".into());
        }
        for (i, c) in self.checks.iter().enumerate() {
            let label = format!("check {} ({})", i + 1, c.kind);
            let kind = match c.parsed_kind() {
                Ok(k) => k,
                Err(e) => {
                    errs.push(format!("{label}: {}", e.to_string().trim_start_matches("invalid argument: ")));
                    continue;
                }
            };
            let used: Vec<String> =
                c.barriers.clone().unwrap_or_else(|| self.barriers.iter().map(|b| b.name.clone()).collect());
            for b in &used {
                if !names.contains(&b.as_str()) {
                    errs.push(format!("{label}: unknown barrier '{b}'"));
                }
            }
            let needs_barriers = !matches!(kind, CheckKind::Kink | CheckKind::SmoothedKink | CheckKind::Truncation);
            if needs_barriers && used.is_empty() && !(kind == CheckKind::Mass && c.target == Some(Target::Potential)) {
                errs.push(format!("{label}: needs at least one barrier"));
            }
            if kind.needs_smooth_barriers() && !c.expected_failure {
                for b in used.iter().filter(|b| names.contains(&b.as_str()) && !smooth(b)) {
                    errs.push(format!(
                        "{label}: barrier '{b}' is kinked; declare expected_failure to run this identity on it"
                    ));
                }
            }
            if kind.needs_singularity() && self.singularity.is_none() {
                errs.push(format!("{label}: needs a singularity polytope"));
            }
            match kind {
                CheckKind::Rooftop if used.len() != 2 => errs.push(format!("{label}: needs exactly two barriers")),
                CheckKind::Mixed | CheckKind::Polarization if used.len() != 2 => {
                    errs.push(format!("{label}: needs exactly two barriers"))
                }
                CheckKind::Mixed | CheckKind::Polarization if dim != 2 => {
                    errs.push(format!("{label}: only defined in two dimensions"))
                }
                CheckKind::Scaling if c.t.is_none() => errs.push(format!("{label}: needs a list 't'")),
                CheckKind::Monotone if c.j_max.is_none() => errs.push(format!("{label}: needs 'j_max'")),
                CheckKind::Contact => match (&c.lo, &c.hi) {
                    (Some(lo), Some(hi)) => near_boundary(&format!("{label}: contact region"), lo, hi, &mut errs),
                    _ => errs.push(format!("{label}: needs 'lo' and 'hi' of the expected contact region")),
                },
                CheckKind::Probe => match (&c.points, &c.values) {
                    (Some(p), Some(v)) if p.len() == v.len() && p.iter().all(|x| x.len() == dim) => {}
                    _ => errs.push(format!("{label}: needs 'points' ({dim} coordinates each) and matching 'values'")),
                },
                CheckKind::Kink | CheckKind::SmoothedKink if dim != 1 => {
                    errs.push(format!("{label}: the kinked instance is one-dimensional"))
                }
                _ => {}
            }
            if let Some(spec) = &c.class2 {
                if let Err(e) = spec.build() {
                    errs.push(format!("{label}: class2: {e}"));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario(errs))
        }
    }
}

/// Reads and validates a scenario; `.json` files are read as JSON, everything else as TOML.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        Scenario::from_json(&text)
    } else {
        Scenario::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const E1: &str = r#"
name = "e1"
[grid]
dim = 1
lo = -2.0
hi = 2.0
resolution = 2049
[class]
interval = [-1.0, 1.0]
[[barriers]]
name = "f"
expr = "x^2"
[[checks]]
kind = "main"
"#;

    #[test]
    fn loads_a_minimal_file() {
        let s = Scenario::from_toml(E1).unwrap();
        assert_eq!(s.grid.build().unwrap().resolution(0), 2049);
        assert_eq!(s.checks[0].parsed_kind().unwrap(), CheckKind::Main);
    }

    #[test]
    fn singularity_outside_class_is_rejected() {
        let text = format!("{E1}\n[singularity]\ninterval = [0.0, 2.0]\n");
        let err = Scenario::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("singularity type exceeds class"), "{err}");
    }

    #[test]
    fn unknown_check_lists_valid_names() {
        let text = E1.replace("kind = \"main\"", "kind = \"mian\"");
        let err = Scenario::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("unknown check 'mian'") && err.contains("corollary:iv"), "{err}");
    }

    #[test]
    fn all_problems_are_reported_together() {
        let text = E1.replace("kind = \"main\"", "kind = \"nope\"").replace("x^2", "x^")
            + "\n[singularity]\ninterval = [0.0, 2.0]\n";
        match Scenario::from_toml(&text).unwrap_err() {
            Error::Scenario(errs) => assert_eq!(errs.len(), 3, "{errs:?}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn contact_region_near_the_boundary_is_rejected() {
        let text = format!("{E1}\n[[checks]]\nkind = \"contact\"\nlo = [-0.5]\nhi = [1.999]\n");
        let err = Scenario::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("within 3 nodes"), "{err}");
    }

    #[test]
    fn kinked_barriers_need_expected_failure() {
        let text = E1.replace("expr = \"x^2\"", "expr = \"abs(x)\"\nsmoothness = \"kinked\"");
        let err = Scenario::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("kinked"), "{err}");
        let ok = text.replace("kind = \"main\"", "kind = \"main\"\nexpected_failure = true");
        Scenario::from_toml(&ok).unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = E1.replace("name = \"e1\"", "name = \"e1\"\ncolour = 3");
        assert!(Scenario::from_toml(&text).is_err());
    }

    #[test]
    fn json_input_is_accepted() {
        let s = Scenario::from_toml(E1).unwrap();
        let back = Scenario::from_json(&s.canonical_json()).unwrap();
        assert_eq!(s, back);
    }
}
