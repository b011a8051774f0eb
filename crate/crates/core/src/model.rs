//! Problem and method descriptions: function classes, operator bounds,
//! structured problems, and step-size admissibility.

use std::fmt;

use crate::{Error, Scalar};

/// The analyzed splitting methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodKind {
    /// Gradient method on `f + g`: `x+ = x - tau (grad f(x) + grad g(x))`.
    Gm,
    /// Forward-backward with the forward step on `f`.
    Fbs1,
    /// Forward-backward with the forward step on the second function.
    Fbs2,
    /// Peaceman-Rachford splitting (full reflections).
    Prs,
    /// Douglas-Rachford splitting (averaged reflections).
    Drs,
    /// Chambolle-Pock primal-dual method (prox step on `f`).
    Cpm,
    /// Condat-Vu primal-dual method (gradient step on `f`).
    Cvm,
}

impl MethodKind {
    pub const ALL: [MethodKind; 7] = [
        MethodKind::Gm,
        MethodKind::Fbs1,
        MethodKind::Fbs2,
        MethodKind::Prs,
        MethodKind::Drs,
        MethodKind::Cpm,
        MethodKind::Cvm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Gm => "gm",
            MethodKind::Fbs1 => "fbs1",
            MethodKind::Fbs2 => "fbs2",
            MethodKind::Prs => "prs",
            MethodKind::Drs => "drs",
            MethodKind::Cpm => "cpm",
            MethodKind::Cvm => "cvm",
        }
    }

    pub fn parse(s: &str) -> Option<MethodKind> {
        let lower = s.trim().to_ascii_lowercase();
        MethodKind::ALL.into_iter().find(|k| k.name() == lower)
    }

    /// Primal-dual methods iterate on a primal/dual pair and take a second
    /// step size `sigma`.
    pub fn is_primal_dual(self) -> bool {
        matches!(self, MethodKind::Cpm | MethodKind::Cvm)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The class of `mu`-strongly convex functions whose gradients are
/// `lipschitz`-Lipschitz, with `0 <= mu < lipschitz <= +inf`.
///
/// `lipschitz = +inf` encodes a nonsmooth (proper closed convex, possibly
/// strongly convex) class; subgradients then stand in for gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionClass<S> {
    mu: S,
    lipschitz: S,
}

impl<S: Scalar> FunctionClass<S> {
    pub fn new(mu: S, lipschitz: S) -> Result<Self, Error> {
        if !mu.is_finite() || mu < S::zero() {
            return Err(Error::InvalidClass(format!(
                "strong convexity modulus must be finite and nonnegative, got {mu}"
            )));
        }
        if lipschitz.is_nan() || lipschitz <= S::zero() {
            return Err(Error::InvalidClass(format!(
                "gradient Lipschitz modulus must be positive (or +inf), got {lipschitz}"
            )));
        }
        if mu >= lipschitz {
            return Err(Error::InvalidClass(format!(
                "need mu < lipschitz, got mu = {mu}, lipschitz = {lipschitz}"
            )));
        }
        Ok(FunctionClass { mu, lipschitz })
    }

    pub fn mu(&self) -> S {
        self.mu
    }

    pub fn lipschitz(&self) -> S {
        self.lipschitz
    }

    pub fn is_smooth(&self) -> bool {
        self.lipschitz.is_finite()
    }

    /// Class of `lambda * f(x)` for `f` in this class (`lambda > 0`).
    pub fn scaled(&self, lambda: S) -> Result<Self, Error> {
        if !lambda.is_finite() || lambda <= S::zero() {
            return Err(Error::InvalidInput(format!(
                "class scaling factor must be finite and positive, got {lambda}"
            )));
        }
        FunctionClass::new(self.mu * lambda, self.lipschitz * lambda)
    }
}

/// A linear operator known only through the bound `||M|| <= norm_bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorBound<S> {
    norm_bound: S,
}

impl<S: Scalar> OperatorBound<S> {
    pub fn new(norm_bound: S) -> Result<Self, Error> {
        if !norm_bound.is_finite() || norm_bound <= S::zero() {
            return Err(Error::InvalidOperatorBound(format!(
                "operator norm bound must be finite and positive, got {norm_bound}"
            )));
        }
        Ok(OperatorBound { norm_bound })
    }

    pub fn norm_bound(&self) -> S {
        self.norm_bound
    }
}

/// Minimize `f(x) + g(x)` with `f`, `g` drawn from two function classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumProblem<S> {
    pub f: FunctionClass<S>,
    pub g: FunctionClass<S>,
}

/// Minimize `f(x) + h(Mx)` with a norm-bounded linear operator `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeProblem<S> {
    pub f: FunctionClass<S>,
    pub h: FunctionClass<S>,
    pub op: OperatorBound<S>,
}

/// Either structured problem form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemConfig<S> {
    Sum(SumProblem<S>),
    Composite(CompositeProblem<S>),
}

impl<S: Scalar> ProblemConfig<S> {
    pub fn f_class(&self) -> &FunctionClass<S> {
        match self {
            ProblemConfig::Sum(p) => &p.f,
            ProblemConfig::Composite(p) => &p.f,
        }
    }

    /// The second function class: `g` for a sum, `h` for a composite.
    pub fn second_class(&self) -> &FunctionClass<S> {
        match self {
            ProblemConfig::Sum(p) => &p.g,
            ProblemConfig::Composite(p) => &p.h,
        }
    }

    pub fn operator(&self) -> Option<&OperatorBound<S>> {
        match self {
            ProblemConfig::Sum(_) => None,
            ProblemConfig::Composite(p) => Some(&p.op),
        }
    }

    /// Sum-form view used by primal methods: a composite contributes
    /// `g = h(M.)`, which over `||M|| <= L_M` is exactly the class
    /// `(0, L_M^2 * L_h)` (the operator may vanish, so no strong convexity
    /// survives; curvature is inflated by at most `L_M^2`).
    pub fn effective_sum(&self) -> SumProblem<S> {
        match self {
            ProblemConfig::Sum(p) => *p,
            ProblemConfig::Composite(p) => {
                let l_eff = p.op.norm_bound() * p.op.norm_bound() * p.h.lipschitz();
                let g = FunctionClass::new(S::zero(), l_eff)
                    .expect("effective class of a valid composite is valid");
                SumProblem { f: p.f, g }
            }
        }
    }
}

/// A concrete method instance: kind, step size(s), and iteration count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSpec<S> {
    pub kind: MethodKind,
    pub tau: S,
    /// Dual step size; present exactly for primal-dual kinds.
    pub sigma: Option<S>,
    /// Number of method steps encoded per trajectory (`>= 1`).
    pub k_steps: usize,
}

impl<S: Scalar> MethodSpec<S> {
    pub fn new(kind: MethodKind, tau: S) -> Self {
        MethodSpec { kind, tau, sigma: None, k_steps: 1 }
    }

    pub fn primal_dual(kind: MethodKind, tau: S, sigma: S) -> Self {
        MethodSpec { kind, tau, sigma: Some(sigma), k_steps: 1 }
    }

    pub fn with_steps(mut self, k_steps: usize) -> Self {
        self.k_steps = k_steps;
        self
    }

    /// Checks that the spec is well formed and admissible on `problem`.
    pub fn validate(&self, problem: &ProblemConfig<S>) -> Result<(), Violation> {
        if self.k_steps == 0 {
            return Err(Violation::new("k_steps must be at least 1"));
        }
        if self.kind.is_primal_dual() {
            if self.sigma.is_none() {
                return Err(Violation::new(format!("{} requires sigma", self.kind)));
            }
        } else if self.sigma.is_some() {
            return Err(Violation::new(format!(
                "{} takes no dual step size, but sigma is set",
                self.kind
            )));
        }
        let admissibility = admissible_step_range(self.kind, problem)
            .map_err(|e| Violation::new(e.to_string()))?;
        admissibility.admits(self.kind, self.tau, self.sigma)
    }
}

/// A reported reason why a method spec is rejected for a problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(String);

impl Violation {
    pub fn new(msg: impl Into<String>) -> Self {
        Violation(msg.into())
    }

    pub fn message(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An interval of admissible primal step sizes, open at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRange<S> {
    pub hi: S,
    /// Whether `tau = hi` itself is admissible.
    pub hi_closed: bool,
}

impl<S: Scalar> StepRange<S> {
    fn open(hi: S) -> Self {
        StepRange { hi, hi_closed: false }
    }

    pub fn contains(&self, tau: S) -> bool {
        tau > S::zero() && (tau < self.hi || (self.hi_closed && tau == self.hi))
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= S::zero()
    }
}

impl<S: Scalar> fmt::Display for StepRange<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let close = if self.hi_closed { ']' } else { ')' };
        write!(f, "(0, {}{close}", self.hi)
    }
}

/// Admissibility condition on the step size(s) of a method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepAdmissibility<S> {
    /// Primal methods: `tau` must lie in an interval.
    Tau(StepRange<S>),
    /// Chambolle-Pock: `sigma > 0` and `sigma * tau * L_M^2 <= 1`.
    CpmPair { norm_bound: S },
    /// Condat-Vu: `sigma > 0` and `1/tau - sigma * L_M^2 >= L_f / 2`.
    CvmPair { norm_bound: S, f_lipschitz: S },
}

impl<S: Scalar> StepAdmissibility<S> {
    /// Checks a concrete `(tau, sigma)` pair against the condition.
    ///
    /// Boundary conditions are checked with a few-ulp slack so that step
    /// sizes computed *from* the boundary rule (e.g. `sigma = 1/(tau L^2)`)
    /// are not rejected for floating-point rounding.
    pub fn admits(&self, kind: MethodKind, tau: S, sigma: Option<S>) -> Result<(), Violation> {
        let slack = S::epsilon() * S::of(64.0);
        if !(tau.is_finite() && tau > S::zero()) {
            return Err(Violation::new(format!(
                "{kind} needs a finite positive tau, got {tau}"
            )));
        }
        match *self {
            StepAdmissibility::Tau(range) => {
                if range.is_empty() {
                    return Err(Violation::new(format!(
                        "{kind} has an empty admissible range on this problem \
                         (a class it takes explicit gradient steps on is nonsmooth)"
                    )));
                }
                if !range.contains(tau) {
                    return Err(Violation::new(format!(
                        "tau = {tau} outside admissible range {range} for {kind}"
                    )));
                }
                Ok(())
            }
            StepAdmissibility::CpmPair { norm_bound } => {
                let sigma = positive_sigma(kind, sigma)?;
                let product = sigma * tau * norm_bound * norm_bound;
                if product > S::one() + slack {
                    return Err(Violation::new(format!(
                        "{kind} needs sigma * tau * L_M^2 <= 1, got {product}"
                    )));
                }
                Ok(())
            }
            StepAdmissibility::CvmPair { norm_bound, f_lipschitz } => {
                let sigma = positive_sigma(kind, sigma)?;
                if !f_lipschitz.is_finite() {
                    return Err(Violation::new(format!("{kind} requires a smooth f")));
                }
                let lhs = tau.recip() - sigma * norm_bound * norm_bound;
                let rhs = f_lipschitz / S::of(2.0);
                let scale = S::one() + lhs.abs() + rhs.abs();
                if lhs < rhs - slack * scale {
                    return Err(Violation::new(format!(
                        "{kind} needs 1/tau - sigma * L_M^2 >= L_f/2, got {lhs} < {rhs}"
                    )));
                }
                Ok(())
            }
        }
    }
}

fn positive_sigma<S: Scalar>(kind: MethodKind, sigma: Option<S>) -> Result<S, Violation> {
    match sigma {
        Some(s) if s.is_finite() && s > S::zero() => Ok(s),
        Some(s) => Err(Violation::new(format!(
            "{kind} needs a finite positive sigma, got {s}"
        ))),
        None => Err(Violation::new(format!("{kind} requires sigma"))),
    }
}

/// The admissibility condition of `kind` on `problem`.
///
/// Primal methods on a composite problem are judged against the sum-form
/// view ([`ProblemConfig::effective_sum`]). Errors on combinations that are
/// not defined at all (primal-dual kinds on a plain sum).
pub fn admissible_step_range<S: Scalar>(
    kind: MethodKind,
    problem: &ProblemConfig<S>,
) -> Result<StepAdmissibility<S>, Error> {
    if kind.is_primal_dual() {
        let comp = match problem {
            ProblemConfig::Composite(c) => c,
            ProblemConfig::Sum(_) => {
                return Err(Error::UnsupportedMethod(format!(
                    "{kind} is defined on composite problems only"
                )))
            }
        };
        let norm_bound = comp.op.norm_bound();
        return Ok(match kind {
            MethodKind::Cpm => StepAdmissibility::CpmPair { norm_bound },
            MethodKind::Cvm => StepAdmissibility::CvmPair {
                norm_bound,
                f_lipschitz: comp.f.lipschitz(),
            },
            _ => unreachable!(),
        });
    }
    let sum = problem.effective_sum();
    let two = S::of(2.0);
    let range = match kind {
        // An explicit gradient step on a nonsmooth class leaves an empty
        // range: 2 / inf = 0.
        MethodKind::Gm => StepRange::open(two / (sum.f.lipschitz() + sum.g.lipschitz())),
        MethodKind::Fbs1 => StepRange::open(two / sum.f.lipschitz()),
        MethodKind::Fbs2 => StepRange {
            hi: two / sum.g.lipschitz(),
            hi_closed: true,
        },
        MethodKind::Prs | MethodKind::Drs => StepRange {
            hi: S::infinity(),
            hi_closed: false,
        },
        MethodKind::Cpm | MethodKind::Cvm => unreachable!(),
    };
    Ok(StepAdmissibility::Tau(range))
}
