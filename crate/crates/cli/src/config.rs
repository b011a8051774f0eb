//! Plain-text experiment configuration.
//!
//! Format: one `key = value` per line, `#` starts a comment, `[name]` opens
//! a section. Keys set before the first section are shared defaults; each
//! section inherits them and may override. A file without sections defines a
//! single experiment.
//!
//! Recognized keys: `alpha`, `beta`, `gamma`, `rho`, `mu`, `delta`, `Lop`,
//! `structure`, `methods`, `engines`, `tau_grid`, `sigma_rule`. Parameters
//! are the inverse-smoothness conventions used throughout: `f` is
//! `alpha^-1`-smooth and `rho`-strongly convex, `g` is `beta^-1`-smooth and
//! `mu`-strongly convex, `h` is `gamma^-1`-smooth (with `beta` accepted as a
//! fallback spelling) and `delta`-strongly convex, and `Lop` bounds the
//! operator norm.

use std::collections::BTreeMap;
use std::fmt;

use anyhow::{anyhow, bail, Context, Result};
use pep_core::model::{
    CompositeProblem, FunctionClass, MethodKind, OperatorBound, ProblemConfig, SumProblem,
};

/// Which structured problem form an experiment sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    Sum,
    Composite,
    PrimalDual,
}

impl Structure {
    fn parse(s: &str) -> Result<Structure> {
        match s {
            "sum" => Ok(Structure::Sum),
            "composite" => Ok(Structure::Composite),
            "primal_dual" | "primal-dual" => Ok(Structure::PrimalDual),
            other => bail!("unknown structure {other:?} (expected sum | composite | primal_dual)"),
        }
    }
}

/// Rate engine responsible for a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Engine {
    Pep,
    ClosedForm,
    QuadOracle,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Pep => "pep",
            Engine::ClosedForm => "closed_form",
            Engine::QuadOracle => "quad_oracle",
        }
    }

    fn parse(s: &str) -> Result<Engine> {
        match s {
            "pep" => Ok(Engine::Pep),
            "closed_form" => Ok(Engine::ClosedForm),
            "quad_oracle" => Ok(Engine::QuadOracle),
            other => bail!("unknown engine {other:?} (expected pep | closed_form | quad_oracle)"),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A step-size grid, `log(lo, hi, n)` or `lin(lo, hi, n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub log: bool,
}

impl TauGrid {
    pub fn parse(s: &str) -> Result<TauGrid> {
        let (log, rest) = if let Some(r) = s.strip_prefix("log") {
            (true, r)
        } else if let Some(r) = s.strip_prefix("lin") {
            (false, r)
        } else {
            bail!("tau_grid must look like log(lo, hi, n) or lin(lo, hi, n), got {s:?}");
        };
        let inner = rest
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| anyhow!("tau_grid arguments must be parenthesized, got {s:?}"))?;
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            bail!("tau_grid takes exactly (lo, hi, n), got {s:?}");
        }
        let lo: f64 = parts[0].parse().with_context(|| format!("tau_grid lo {:?}", parts[0]))?;
        let hi: f64 = parts[1].parse().with_context(|| format!("tau_grid hi {:?}", parts[1]))?;
        let n: usize = parts[2].parse().with_context(|| format!("tau_grid n {:?}", parts[2]))?;
        let grid = TauGrid { lo, hi, n, log };
        grid.check()?;
        Ok(grid)
    }

    fn check(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo > 0.0 && self.hi > self.lo) {
            bail!("tau_grid needs 0 < lo < hi < inf, got ({}, {})", self.lo, self.hi);
        }
        if self.n < 2 {
            bail!("tau_grid needs at least 2 points, got {}", self.n);
        }
        Ok(())
    }

    /// The grid points, strictly increasing with both endpoints exact.
    pub fn points(&self) -> Vec<f64> {
        let last = self.n - 1;
        (0..self.n)
            .map(|i| {
                if i == 0 {
                    self.lo
                } else if i == last {
                    self.hi
                } else if self.log {
                    self.lo * (self.hi / self.lo).powf(i as f64 / last as f64)
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / last as f64
                }
            })
            .collect()
    }
}

/// Dual step-size rule for primal-dual sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaRule {
    /// `sigma = 1 / (tau L^2)`.
    CpmBoundary,
    /// `sigma = 1 / (tau L^2) - L_f / (2 L^2)`.
    CvmBoundary,
    /// A fixed numeric `sigma`.
    Numeric(f64),
}

impl SigmaRule {
    fn parse(s: &str) -> Result<SigmaRule> {
        match s {
            "cpm_boundary" => Ok(SigmaRule::CpmBoundary),
            "cvm_boundary" => Ok(SigmaRule::CvmBoundary),
            other => match other.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => Ok(SigmaRule::Numeric(v)),
                _ => bail!(
                    "sigma_rule must be cpm_boundary, cvm_boundary, or a positive number, \
                     got {other:?}"
                ),
            },
        }
    }

    /// Resolves the dual step for a given `tau`. Returns `None` when the
    /// rule yields a nonpositive value (the sample is then skipped).
    pub fn sigma(&self, tau: f64, problem: &ProblemConfig<f64>) -> Option<f64> {
        let l = problem.operator().map(|op| op.norm_bound()).unwrap_or(1.0);
        let s = match self {
            SigmaRule::CpmBoundary => 1.0 / (tau * l * l),
            SigmaRule::CvmBoundary => {
                1.0 / (tau * l * l) - problem.f_class().lipschitz() / (2.0 * l * l)
            }
            SigmaRule::Numeric(v) => *v,
        };
        (s.is_finite() && s > 0.0).then_some(s)
    }
}

/// One parsed experiment: a problem, the methods to sweep, and how.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// Section name; empty for a sectionless config.
    pub name: String,
    pub structure: Structure,
    pub problem: ProblemConfig<f64>,
    pub methods: Vec<MethodKind>,
    pub engines: Vec<Engine>,
    /// Explicit grid; per-method defaults apply when absent.
    pub tau_grid: Option<TauGrid>,
    pub sigma_rule: Option<SigmaRule>,
}

const KNOWN_KEYS: [&str; 12] = [
    "alpha", "beta", "gamma", "rho", "mu", "delta", "lop", "structure", "methods", "engines",
    "tau_grid", "sigma_rule",
];

/// Parses a config file into its experiments (one per section; exactly one
/// for a sectionless file).
pub fn parse_config(text: &str) -> Result<Vec<Experiment>> {
    let mut root: BTreeMap<String, String> = BTreeMap::new();
    let mut sections: Vec<(String, BTreeMap<String, String>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| anyhow!("line {lineno}: unterminated section header {line:?}"))?
                .trim();
            if name.is_empty() {
                bail!("line {lineno}: empty section name");
            }
            if sections.iter().any(|(n, _)| n == name) {
                bail!("line {lineno}: duplicate section [{name}]");
            }
            sections.push((name.to_string(), root.clone()));
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {lineno}: expected key = value, got {line:?}"))?;
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            bail!("line {lineno}: unknown key {key:?}");
        }
        if value.is_empty() {
            bail!("line {lineno}: empty value for {key:?}");
        }
        match sections.last_mut() {
            Some((_, map)) => map.insert(key, value),
            None => root.insert(key, value),
        };
    }

    if sections.is_empty() {
        return Ok(vec![build_experiment(String::new(), &root)?]);
    }
    sections
        .into_iter()
        .map(|(name, map)| {
            build_experiment(name.clone(), &map).with_context(|| format!("section [{name}]"))
        })
        .collect()
}

fn get_f64(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => {
            let x: f64 =
                v.parse().with_context(|| format!("key {key}: not a number: {v:?}"))?;
            if x.is_nan() {
                bail!("key {key}: NaN is not a valid value");
            }
            Ok(Some(x))
        }
    }
}

fn require_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    get_f64(map, key)?.ok_or_else(|| anyhow!("missing required key {key:?}"))
}

/// `1/x` with the extended-value convention `1/0 = inf`, `1/inf = 0`.
fn recip(x: f64) -> f64 {
    if x == 0.0 {
        f64::INFINITY
    } else if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

fn build_experiment(name: String, map: &BTreeMap<String, String>) -> Result<Experiment> {
    let structure = Structure::parse(
        map.get("structure").map(String::as_str).unwrap_or("sum"),
    )?;

    let rho = require_f64(map, "rho")?;
    let alpha = require_f64(map, "alpha")?;
    let f = FunctionClass::new(rho, recip(alpha)).map_err(|e| anyhow!("f class: {e}"))?;

    let problem = match structure {
        Structure::Sum => {
            let mu = get_f64(map, "mu")?.unwrap_or(0.0);
            let beta = require_f64(map, "beta")?;
            let g = FunctionClass::new(mu, recip(beta)).map_err(|e| anyhow!("g class: {e}"))?;
            ProblemConfig::Sum(SumProblem { f, g })
        }
        Structure::Composite | Structure::PrimalDual => {
            let delta = get_f64(map, "delta")?.unwrap_or(0.0);
            let gamma = match get_f64(map, "gamma")? {
                Some(g) => g,
                None => require_f64(map, "beta").context("composite needs gamma (or beta)")?,
            };
            let h =
                FunctionClass::new(delta, recip(gamma)).map_err(|e| anyhow!("h class: {e}"))?;
            let op = OperatorBound::new(require_f64(map, "lop")?)
                .map_err(|e| anyhow!("operator bound: {e}"))?;
            ProblemConfig::Composite(CompositeProblem { f, h, op })
        }
    };

    let methods: Vec<MethodKind> = map
        .get("methods")
        .ok_or_else(|| anyhow!("missing required key \"methods\""))?
        .split(',')
        .map(|s| {
            let s = s.trim();
            MethodKind::parse(s).ok_or_else(|| anyhow!("unknown method {s:?}"))
        })
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        bail!("methods list is empty");
    }
    for (i, m) in methods.iter().enumerate() {
        if methods[..i].contains(m) {
            bail!("method {m} listed twice");
        }
        let pd_method = m.is_primal_dual();
        let pd_structure = structure == Structure::PrimalDual;
        if pd_method != pd_structure {
            bail!("method {m} does not fit structure {structure:?}");
        }
    }

    let engines: Vec<Engine> = match map.get("engines") {
        None => vec![Engine::Pep],
        Some(v) => {
            let list: Vec<Engine> =
                v.split(',').map(|s| Engine::parse(s.trim())).collect::<Result<_>>()?;
            if list.is_empty() {
                bail!("engines list is empty");
            }
            list
        }
    };

    let tau_grid = map.get("tau_grid").map(|v| TauGrid::parse(v)).transpose()?;
    let sigma_rule = map.get("sigma_rule").map(|v| SigmaRule::parse(v)).transpose()?;
    if structure == Structure::PrimalDual && sigma_rule.is_none() {
        bail!("primal_dual experiments need a sigma_rule");
    }

    Ok(Experiment { name, structure, problem, methods, engines, tau_grid, sigma_rule })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_flat_sum_config() {
        let text = "\
# comment line
alpha = 1      # trailing comment
beta = 5
rho = 0.9
methods = gm, fbs1, prs
engines = pep, closed_form
tau_grid = log(0.05, 20, 50)
";
        let exps = parse_config(text).unwrap();
        assert_eq!(exps.len(), 1);
        let e = &exps[0];
        assert_eq!(e.name, "");
        assert_eq!(e.structure, Structure::Sum);
        assert_eq!(e.methods, vec![MethodKind::Gm, MethodKind::Fbs1, MethodKind::Prs]);
        assert_eq!(e.engines, vec![Engine::Pep, Engine::ClosedForm]);
        let g = e.tau_grid.unwrap();
        assert_eq!((g.lo, g.hi, g.n, g.log), (0.05, 20.0, 50, true));
        match &e.problem {
            ProblemConfig::Sum(p) => {
                assert_eq!(p.f.mu(), 0.9);
                assert_eq!(p.f.lipschitz(), 1.0);
                assert_eq!(p.g.mu(), 0.0);
                assert_eq!(p.g.lipschitz(), 0.2);
            }
            _ => panic!("expected a sum problem"),
        }
    }

    #[test]
    fn sections_inherit_and_override() {
        let text = "\
alpha = 1
rho = 0.1
methods = drs
tau_grid = lin(1, 3, 3)

[composite]
structure = composite
gamma = 5
delta = 0.1
Lop = 1

[sum]
structure = sum
beta = 5
";
        let exps = parse_config(text).unwrap();
        assert_eq!(exps.len(), 2);
        assert_eq!(exps[0].name, "composite");
        assert!(matches!(exps[0].problem, ProblemConfig::Composite(_)));
        assert_eq!(exps[1].name, "sum");
        assert!(matches!(exps[1].problem, ProblemConfig::Sum(_)));
        // Inherited grid.
        assert_eq!(exps[1].tau_grid.unwrap().points(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn grid_points_hit_endpoints_exactly() {
        let g = TauGrid::parse("log(0.1, 100, 50)").unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 50);
        assert_eq!(pts[0], 0.1);
        assert_eq!(pts[49], 100.0);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn sigma_rules_resolve() {
        let text = "\
structure = primal_dual
alpha = 1
rho = 0.1
beta = 5
Lop = 1
methods = cpm
sigma_rule = cpm_boundary
";
        let e = &parse_config(text).unwrap()[0];
        let rule = e.sigma_rule.unwrap();
        assert_eq!(rule.sigma(0.5, &e.problem), Some(2.0));
        let cvm = SigmaRule::parse("cvm_boundary").unwrap();
        assert_eq!(cvm.sigma(0.5, &e.problem), Some(2.0 - 0.5));
        // Past tau = 2 alpha the cvm rule goes nonpositive.
        assert_eq!(cvm.sigma(2.0, &e.problem), None);
        assert!(matches!(SigmaRule::parse("0.75"), Ok(SigmaRule::Numeric(v)) if v == 0.75));
    }

    #[test]
    fn rejects_malformed_input() {
        let base = "alpha = 1\nbeta = 5\nrho = 0.1\nmethods = gm\n";
        for (text, needle) in [
            ("bogus = 1", "unknown key"),
            ("alpha 1", "expected key = value"),
            ("[unclosed\nalpha = 1", "unterminated"),
            (&format!("{base}tau_grid = log(5, 1, 10)"), "lo < hi"),
            (&format!("{base}engines = fancy"), "unknown engine"),
            (&format!("{base}methods = gm, gm"), "listed twice"),
            (&format!("{base}methods = cpm"), "does not fit"),
            ("alpha = 1\nbeta = 5\nmethods = gm", "missing required key \"rho\""),
        ] {
            let err = parse_config(text).unwrap_err();
            assert!(
                format!("{err:#}").contains(needle),
                "expected {needle:?} in error for {text:?}, got {err:#}"
            );
        }
    }

    #[test]
    fn primal_dual_requires_a_rule() {
        let text = "\
structure = primal_dual
alpha = 1
rho = 0.1
gamma = 5
Lop = 1
methods = cpm
";
        assert!(format!("{:#}", parse_config(text).unwrap_err()).contains("sigma_rule"));
    }
}
