//! Rate sweeps across step-size grids, per-method best-step search, and the
//! class-rescaling helper.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use anyhow::{bail, Result};
use pep_core::closed_form::{exact_rate, rate_drs_corner, rate_drs_upper};
use pep_core::model::{
    admissible_step_range, FunctionClass, MethodKind, MethodSpec, ProblemConfig,
    StepAdmissibility,
};
use pep_core::quad_oracle::quad_worst_rate;
use pep_core::sdp::{run_pep, SolveStatus};
use pep_core::Error as CoreError;

use crate::config::{Engine, Experiment};

/// Box resolution handed to the quadratic oracle per sample.
const ORACLE_GRID: usize = 17;

/// How a single (method, engine, tau) sample ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Rate(f64),
    /// Inadmissible step for this method; recorded, not dropped.
    Skipped(String),
    /// The engine ran and did not produce a usable value.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tau: f64,
    pub sigma: Option<f64>,
    pub outcome: Outcome,
}

impl Sample {
    pub fn rate(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Rate(r) => Some(r),
            _ => None,
        }
    }
}

/// One emitted data series: a method under one engine (closed-form bounds
/// for DRS split into an upper and a corner series).
#[derive(Debug, Clone)]
pub struct RateCurve {
    pub method: MethodKind,
    pub engine: Engine,
    /// Engine column label in the CSV; distinguishes the DRS corner series.
    pub label: &'static str,
    pub samples: Vec<Sample>,
    /// Hash of the problem parameters, for provenance checks.
    pub fingerprint: u64,
}

/// Hash of the problem parameters (structure tag plus all moduli).
pub fn fingerprint(problem: &ProblemConfig<f64>) -> u64 {
    let mut h = DefaultHasher::new();
    match problem {
        ProblemConfig::Sum(p) => {
            0u8.hash(&mut h);
            for v in [p.f.mu(), p.f.lipschitz(), p.g.mu(), p.g.lipschitz()] {
                v.to_bits().hash(&mut h);
            }
        }
        ProblemConfig::Composite(p) => {
            1u8.hash(&mut h);
            for v in
                [p.f.mu(), p.f.lipschitz(), p.h.mu(), p.h.lipschitz(), p.op.norm_bound()]
            {
                v.to_bits().hash(&mut h);
            }
        }
    }
    h.finish()
}

/// The engine variants a curve can be computed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Pep,
    ClosedFormUpper,
    ClosedFormCorner,
    QuadOracle,
}

impl Variant {
    fn engine(self) -> Engine {
        match self {
            Variant::Pep => Engine::Pep,
            Variant::ClosedFormUpper | Variant::ClosedFormCorner => Engine::ClosedForm,
            Variant::QuadOracle => Engine::QuadOracle,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Variant::Pep => "pep",
            Variant::ClosedFormUpper => "closed_form",
            Variant::ClosedFormCorner => "closed_form_corner",
            Variant::QuadOracle => "quad_oracle",
        }
    }
}

/// Internal sample state; `Unsupported` marks engine/method combinations
/// with no defined value at all (the whole curve is dropped).
enum Computed {
    Done(Outcome),
    Unsupported,
}

/// Default grid for a method when the config gives none: 50 log-spaced
/// points inside the admissible range (capped at 100 when unbounded).
pub fn default_grid(kind: MethodKind, problem: &ProblemConfig<f64>) -> Result<Vec<f64>> {
    let hi = match admissible_step_range(kind, problem).map_err(|e| anyhow::anyhow!("{e}"))? {
        StepAdmissibility::Tau(range) if range.hi.is_finite() => {
            range.hi * if range.hi_closed { 1.0 } else { 0.995 }
        }
        _ => 100.0,
    };
    if !(hi > 0.0) {
        bail!("{kind} admits no step size on this problem");
    }
    let grid = crate::config::TauGrid { lo: hi / 2e3, hi, n: 50, log: true };
    Ok(grid.points())
}

fn classify(err: CoreError) -> Computed {
    match err {
        CoreError::StepOutOfRange(m) => Computed::Done(Outcome::Skipped(m)),
        CoreError::UnsupportedMethod(_) => Computed::Unsupported,
        other => Computed::Done(Outcome::Failed(other.to_string())),
    }
}

fn compute(exp: &Experiment, variant: Variant, kind: MethodKind, tau: f64, tol: f64) -> Sample {
    let sigma = if kind.is_primal_dual() {
        match exp.sigma_rule.as_ref().and_then(|r| r.sigma(tau, &exp.problem)) {
            Some(s) => Some(s),
            None => {
                return Sample {
                    tau,
                    sigma: None,
                    outcome: Outcome::Skipped("sigma rule yields no positive value".into()),
                }
            }
        }
    } else {
        None
    };

    let result: Result<f64, CoreError> = match variant {
        Variant::Pep => {
            let spec = match sigma {
                Some(s) => MethodSpec::primal_dual(kind, tau, s),
                None => MethodSpec::new(kind, tau),
            };
            run_pep(&spec, &exp.problem, tol).and_then(|run| match &run.solution.status {
                SolveStatus::Optimal => Ok(run.rate()),
                SolveStatus::Infeasible => {
                    Err(CoreError::SolverFailure("program reported infeasible".into()))
                }
                SolveStatus::NumericalFailure(m) => Err(CoreError::SolverFailure(m.clone())),
            })
        }
        Variant::ClosedFormUpper => {
            let sum = exp.problem.effective_sum();
            match kind {
                MethodKind::Drs => rate_drs_upper(tau, &sum).map(|b| b.value),
                k if k.is_primal_dual() => {
                    Err(CoreError::UnsupportedMethod("no closed form".into()))
                }
                k => exact_rate(k, tau, &sum).map(|b| b.value),
            }
        }
        Variant::ClosedFormCorner => match kind {
            MethodKind::Drs => {
                rate_drs_corner(tau, &exp.problem.effective_sum()).map(|b| b.value)
            }
            _ => Err(CoreError::UnsupportedMethod("corner series is DRS-only".into())),
        },
        Variant::QuadOracle => {
            quad_worst_rate(kind, tau, sigma, &exp.problem, ORACLE_GRID).map(|(v, _)| v)
        }
    };

    let outcome = match result {
        Ok(r) => Outcome::Rate(r),
        Err(e) => match classify(e) {
            Computed::Done(o) => o,
            // Curve-level gaps are filtered out before this point; a stray
            // one degrades to a recorded skip.
            Computed::Unsupported => Outcome::Skipped("not defined for this method".into()),
        },
    };
    Sample { tau, sigma, outcome }
}

/// True when `variant` has any defined value for `kind` on this experiment
/// (checked structurally, independent of the step size).
fn variant_defined(exp: &Experiment, variant: Variant, kind: MethodKind) -> bool {
    match variant {
        Variant::Pep | Variant::QuadOracle => true,
        Variant::ClosedFormUpper => {
            if kind.is_primal_dual() {
                return false;
            }
            if kind == MethodKind::Drs {
                // The averaged-reflection bound needs mu_g = 0.
                return exp.problem.effective_sum().g.mu() == 0.0;
            }
            true
        }
        Variant::ClosedFormCorner => kind == MethodKind::Drs,
    }
}

/// Runs every (method, engine, tau) sample of the experiment.
///
/// Samples are independent and may be computed on `workers` threads; the
/// output is ordered by construction and identical for any worker count.
pub fn sweep(exp: &Experiment, tol: f64, workers: Option<usize>) -> Result<Vec<RateCurve>> {
    let fp = fingerprint(&exp.problem);
    let mut curves: Vec<(MethodKind, Variant, Vec<f64>)> = Vec::new();
    for &kind in &exp.methods {
        let taus = match &exp.tau_grid {
            Some(g) => g.points(),
            None => default_grid(kind, &exp.problem)?,
        };
        for &engine in &exp.engines {
            let variants: &[Variant] = match engine {
                Engine::Pep => &[Variant::Pep],
                Engine::ClosedForm => &[Variant::ClosedFormUpper, Variant::ClosedFormCorner],
                Engine::QuadOracle => &[Variant::QuadOracle],
            };
            for &v in variants {
                if variant_defined(exp, v, kind) {
                    curves.push((kind, v, taus.clone()));
                }
            }
        }
    }

    let jobs: Vec<(usize, f64, MethodKind, Variant)> = curves
        .iter()
        .enumerate()
        .flat_map(|(ci, (kind, v, taus))| taus.iter().map(move |&t| (ci, t, *kind, *v)))
        .collect();

    let run_all = || -> Vec<(usize, Sample)> {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(ci, tau, kind, v)| (ci, compute(exp, v, kind, tau, tol)))
            .collect()
    };
    let computed = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| anyhow::anyhow!("worker pool: {e}"))?
            .install(run_all),
        None => run_all(),
    };

    let mut out: Vec<RateCurve> = curves
        .iter()
        .map(|(kind, v, _)| RateCurve {
            method: *kind,
            engine: v.engine(),
            label: v.label(),
            samples: Vec::new(),
            fingerprint: fp,
        })
        .collect();
    // Jobs were emitted grid-ordered per curve; indexed collection keeps
    // that order regardless of scheduling.
    for ((ci, sample), &(ci2, _, _, _)) in computed.into_iter().zip(&jobs) {
        debug_assert_eq!(ci, ci2);
        out[ci].samples.push(sample);
    }
    Ok(out)
}

/// Result of [`find_best`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Best {
    pub method: MethodKind,
    pub tau: f64,
    pub rate: f64,
}

/// Finds the (method, tau) pair with the smallest PEP rate.
///
/// Coarse log-spaced scan over `interval` (clipped to each method's
/// admissible range) followed by golden-section refinement down to
/// `resolution` in tau. Ties go to the smaller tau, then to the method
/// listed first.
pub fn find_best(
    exp: &Experiment,
    interval: (f64, f64),
    coarse_n: usize,
    resolution: f64,
    tol: f64,
) -> Result<Best> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
        bail!("empty search interval ({lo}, {hi})");
    }
    if coarse_n < 3 || !(resolution > 0.0) {
        bail!("need at least 3 coarse points and a positive resolution");
    }

    let mut best: Option<Best> = None;
    for &kind in &exp.methods {
        let rate_at = |tau: f64| -> Option<f64> {
            compute(exp, Variant::Pep, kind, tau, tol).rate()
        };

        let (mlo, mhi) = match admissible_step_range(kind, &exp.problem) {
            Ok(StepAdmissibility::Tau(range)) => {
                let cap = if range.hi.is_finite() {
                    range.hi * if range.hi_closed { 1.0 } else { 1.0 - 1e-9 }
                } else {
                    f64::INFINITY
                };
                (lo, hi.min(cap))
            }
            _ => (lo, hi),
        };
        if !(mhi > mlo) {
            continue;
        }

        let record = |tau: f64, rate: Option<f64>, b: &mut Option<Best>| {
            let Some(rate) = rate else { return };
            let better = match b {
                None => true,
                Some(cur) => {
                    rate < cur.rate
                        || (rate == cur.rate && cur.method == kind && tau < cur.tau)
                }
            };
            if better {
                *b = Some(Best { method: kind, tau, rate });
            }
        };

        // Coarse scan.
        let mut method_best: Option<Best> = None;
        let mut coarse: Vec<(f64, Option<f64>)> = Vec::with_capacity(coarse_n);
        for i in 0..coarse_n {
            let t = mlo * (mhi / mlo).powf(i as f64 / (coarse_n - 1) as f64);
            let r = rate_at(t);
            record(t, r, &mut method_best);
            coarse.push((t, r));
        }
        let Some(anchor) = method_best else { continue };

        // Golden-section refinement around the coarse winner.
        let idx = coarse
            .iter()
            .position(|&(t, _)| t == anchor.tau)
            .unwrap_or(0);
        let mut a = if idx > 0 { coarse[idx - 1].0 } else { coarse[idx].0 };
        let mut b = if idx + 1 < coarse.len() { coarse[idx + 1].0 } else { coarse[idx].0 };
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut x1 = b - (b - a) * INV_PHI;
        let mut x2 = a + (b - a) * INV_PHI;
        let mut f1 = rate_at(x1);
        let mut f2 = rate_at(x2);
        record(x1, f1, &mut method_best);
        record(x2, f2, &mut method_best);
        while b - a > resolution {
            if f1.unwrap_or(f64::INFINITY) <= f2.unwrap_or(f64::INFINITY) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - (b - a) * INV_PHI;
                f1 = rate_at(x1);
                record(x1, f1, &mut method_best);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + (b - a) * INV_PHI;
                f2 = rate_at(x2);
                record(x2, f2, &mut method_best);
            }
        }

        if let Some(mb) = method_best {
            let better = match &best {
                None => true,
                Some(cur) => {
                    mb.rate < cur.rate || (mb.rate == cur.rate && mb.tau < cur.tau)
                }
            };
            if better {
                best = Some(mb);
            }
        }
    }
    best.ok_or_else(|| anyhow::anyhow!("no admissible (method, tau) pair in the interval"))
}

/// Scales a class as `g = lambda * h` does: both moduli multiply by
/// `lambda`.
pub fn rescale_class(class: &FunctionClass<f64>, lambda: f64) -> Result<FunctionClass<f64>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        bail!("rescale factor must be finite and positive, got {lambda}");
    }
    FunctionClass::new(lambda * class.mu(), lambda * class.lipschitz())
        .map_err(|e| anyhow::anyhow!("{e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn fig1a_gm() -> Experiment {
        parse_config(
            "alpha = 1\nbeta = 5\nrho = 0.9\nmethods = gm\nengines = pep\n\
             tau_grid = log(0.1, 1.6, 6)",
        )
        .unwrap()
        .remove(0)
    }

    #[test]
    fn sweep_fills_every_grid_point_in_order() {
        let exp = fig1a_gm();
        let curves = sweep(&exp, 1e-8, None).unwrap();
        assert_eq!(curves.len(), 1);
        let c = &curves[0];
        assert_eq!(c.samples.len(), 6);
        assert!(c.samples.windows(2).all(|w| w[0].tau < w[1].tau));
        assert!(c.samples.iter().all(|s| s.rate().is_some()));
        assert_eq!(c.fingerprint, fingerprint(&exp.problem));
    }

    #[test]
    fn inadmissible_steps_are_recorded_not_dropped() {
        let mut exp = fig1a_gm();
        // GM admits tau < 2/1.2 = 1.667 here; the last points must skip.
        exp.tau_grid = Some(crate::config::TauGrid { lo: 1.0, hi: 3.0, n: 3, log: false });
        let curves = sweep(&exp, 1e-8, None).unwrap();
        let outcomes: Vec<bool> =
            curves[0].samples.iter().map(|s| s.rate().is_some()).collect();
        assert_eq!(outcomes, vec![true, false, false]);
        assert!(matches!(
            curves[0].samples[2].outcome,
            Outcome::Skipped(_)
        ));
    }

    #[test]
    fn closed_form_splits_drs_into_upper_and_corner() {
        let exp = parse_config(
            "alpha = 1\nbeta = 5\nrho = 0.1\nmethods = drs\n\
             engines = pep, closed_form\ntau_grid = lin(1, 2, 2)",
        )
        .unwrap()
        .remove(0);
        let curves = sweep(&exp, 1e-8, None).unwrap();
        let labels: Vec<&str> = curves.iter().map(|c| c.label).collect();
        assert_eq!(labels, vec!["pep", "closed_form", "closed_form_corner"]);
        // Sandwich at every grid point.
        for i in 0..2 {
            let pep = curves[0].samples[i].rate().unwrap();
            let upper = curves[1].samples[i].rate().unwrap();
            let corner = curves[2].samples[i].rate().unwrap();
            assert!(corner - 1e-6 <= pep && pep <= upper + 1e-6);
        }
    }

    #[test]
    fn doubly_strongly_convex_drops_the_drs_upper_series() {
        let exp = parse_config(
            "alpha = 1\nbeta = 5\nrho = 0.1\nmu = 0.1\nmethods = drs\n\
             engines = closed_form\ntau_grid = lin(1, 2, 2)",
        )
        .unwrap()
        .remove(0);
        let curves = sweep(&exp, 1e-8, None).unwrap();
        let labels: Vec<&str> = curves.iter().map(|c| c.label).collect();
        assert_eq!(labels, vec!["closed_form_corner"]);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let exp = fig1a_gm();
        let one = sweep(&exp, 1e-8, Some(1)).unwrap();
        let four = sweep(&exp, 1e-8, Some(4)).unwrap();
        for (a, b) in one.iter().zip(&four) {
            assert_eq!(a.samples, b.samples);
        }
    }

    #[test]
    fn best_balances_the_gm_branches() {
        // On the fig1a classes the GM rate max{|1-0.9t|, |1-1.2t|} bottoms
        // out at t = 2/2.1 with value 1/7.
        let mut exp = fig1a_gm();
        exp.tau_grid = None;
        let best = find_best(&exp, (0.1, 1.6), 9, 1e-4, 1e-8).unwrap();
        assert_eq!(best.method, MethodKind::Gm);
        assert!((best.tau - 2.0 / 2.1).abs() < 5e-3, "tau {}", best.tau);
        assert!((best.rate - 1.0 / 7.0).abs() < 1e-3, "rate {}", best.rate);
    }

    #[test]
    fn best_rejects_degenerate_intervals() {
        let exp = fig1a_gm();
        assert!(find_best(&exp, (2.0, 1.0), 9, 1e-4, 1e-8).is_err());
        assert!(find_best(&exp, (0.0, 1.0), 9, 1e-4, 1e-8).is_err());
    }

    #[test]
    fn rescale_multiplies_both_moduli() {
        let g = FunctionClass::new(0.0, 1.0).unwrap();
        let r = rescale_class(&g, 5.0).unwrap();
        assert_eq!((r.mu(), r.lipschitz()), (0.0, 5.0));
        let s = FunctionClass::new(0.3, 2.0).unwrap();
        let r = rescale_class(&s, 1.0).unwrap();
        assert_eq!(r, s);
        let back = rescale_class(&rescale_class(&s, 4.0).unwrap(), 0.25).unwrap();
        assert!((back.mu() - s.mu()).abs() < 1e-15);
        assert!((back.lipschitz() - s.lipschitz()).abs() < 1e-15);
        assert!(rescale_class(&s, 0.0).is_err());
        assert!(rescale_class(&s, -1.0).is_err());
    }
}
