//! Closed-form contraction-rate expressions.
//!
//! Parameters are read off the problem's function classes: `f` contributes
//! `(rho, L_f) = (f.mu, f.lipschitz)` and `g` contributes `(mu, L_g)`. The
//! GM/FBS/PRS formulas are exact worst-case factors (the doubly strongly
//! convex forms are stated as attained lower bounds and verified against
//! the semidefinite lifting by the acceptance tests, which is the available
//! evidence for their exactness); DRS gets a genuine upper bound (valid for
//! `mu = 0` only) and a corner lower bound from quadratic instances.

use crate::model::{admissible_step_range, MethodKind, ProblemConfig, StepAdmissibility, SumProblem};
use crate::{Error, Scalar};

/// Whether a bound is exact, an overestimate, or an underestimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    Exact,
    Upper,
    Lower,
}

/// A contraction-rate bound (finite, nonnegative).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBound<S> {
    pub value: S,
    pub kind: RateKind,
}

fn check_tau<S: Scalar>(kind: MethodKind, tau: S, problem: &SumProblem<S>) -> Result<(), Error> {
    let cfg = ProblemConfig::Sum(*problem);
    match admissible_step_range(kind, &cfg)? {
        StepAdmissibility::Tau(range) => {
            if !(tau.is_finite() && range.contains(tau)) {
                return Err(Error::StepOutOfRange(format!(
                    "tau = {tau} outside admissible range {range} for {kind}"
                )));
            }
            Ok(())
        }
        _ => unreachable!("primal kinds have interval admissibility"),
    }
}

/// `|1 - tau c| / (1 + tau c)`, the reflected-resolvent factor; equals 1 in
/// the limits `c = 0` and `c = +inf`.
fn reflection_factor<S: Scalar>(tau: S, c: S) -> S {
    if c == S::zero() || c == S::infinity() {
        S::one()
    } else {
        (S::one() - tau * c).abs() / (S::one() + tau * c)
    }
}

/// `(1 + tau^2 a b) / ((1 + tau a)(1 + tau b))` with its `a, b -> +inf`
/// limits (`tau b / (1 + tau b)`, resp. 1) taken exactly.
fn corner_term<S: Scalar>(tau: S, a: S, b: S) -> S {
    match (a == S::infinity(), b == S::infinity()) {
        (true, true) => S::one(),
        (true, false) => tau * b / (S::one() + tau * b),
        (false, true) => tau * a / (S::one() + tau * a),
        (false, false) => {
            (S::one() + tau * tau * a * b) / ((S::one() + tau * a) * (S::one() + tau * b))
        }
    }
}

/// Maximum of the DRS corner expression over explicit curvature corner sets.
pub fn drs_corner_over<S: Scalar>(tau: S, a_corners: &[S], b_corners: &[S]) -> S {
    let mut best = S::zero();
    for &a in a_corners {
        for &b in b_corners {
            best = best.max(corner_term(tau, a, b));
        }
    }
    best
}

/// Gradient method: `max{|1 - tau (rho + mu)|, |1 - tau (L_f + L_g)|}`.
pub fn rate_gm<S: Scalar>(tau: S, problem: &SumProblem<S>) -> Result<RateBound<S>, Error> {
    check_tau(MethodKind::Gm, tau, problem)?;
    let lo = problem.f.mu() + problem.g.mu();
    let hi = problem.f.lipschitz() + problem.g.lipschitz();
    let value = (S::one() - tau * lo).abs().max((S::one() - tau * hi).abs());
    Ok(RateBound { value, kind: RateKind::Exact })
}

/// Forward-backward with the gradient step on `f`:
/// `max{|1 - tau rho|, |1 - tau L_f|} / (1 + tau mu)`.
pub fn rate_fbs1<S: Scalar>(tau: S, problem: &SumProblem<S>) -> Result<RateBound<S>, Error> {
    check_tau(MethodKind::Fbs1, tau, problem)?;
    let fwd = (S::one() - tau * problem.f.mu())
        .abs()
        .max((S::one() - tau * problem.f.lipschitz()).abs());
    let value = fwd / (S::one() + tau * problem.g.mu());
    Ok(RateBound { value, kind: RateKind::Exact })
}

/// Forward-backward with the gradient step on `g`:
/// `max{|1 - tau mu|, |1 - tau L_g|} / (1 + tau rho)`.
pub fn rate_fbs2<S: Scalar>(tau: S, problem: &SumProblem<S>) -> Result<RateBound<S>, Error> {
    check_tau(MethodKind::Fbs2, tau, problem)?;
    let fwd = (S::one() - tau * problem.g.mu())
        .abs()
        .max((S::one() - tau * problem.g.lipschitz()).abs());
    let value = fwd / (S::one() + tau * problem.f.mu());
    Ok(RateBound { value, kind: RateKind::Exact })
}

/// Peaceman-Rachford: maximum over curvature corners
/// `a in {rho, L_f}, b in {mu, L_g}` of the product of reflection factors.
pub fn rate_prs<S: Scalar>(tau: S, problem: &SumProblem<S>) -> Result<RateBound<S>, Error> {
    check_tau(MethodKind::Prs, tau, problem)?;
    let mut value = S::zero();
    for a in [problem.f.mu(), problem.f.lipschitz()] {
        for b in [problem.g.mu(), problem.g.lipschitz()] {
            value = value.max(reflection_factor(tau, a) * reflection_factor(tau, b));
        }
    }
    Ok(RateBound { value, kind: RateKind::Exact })
}

/// Douglas-Rachford upper bound (only available when `mu = 0`), combining
/// the averaged-reflection bound `(1 + r_PRS)/2` with the
/// `(rho, L_g)`-quadratic envelope `(1 + tau^2 rho L_g) / ((1 + tau rho)(1 + tau L_g))`.
///
/// Since `DRS = (id + R_g R_f)/2`, the averaged bound is always valid, and
/// a short computation shows it dominates the envelope at every `tau`; the
/// combination is kept for structural clarity. The bound is conservative:
/// the lifted program finds strictly smaller exact rates at large steps.
pub fn rate_drs_upper<S: Scalar>(tau: S, problem: &SumProblem<S>) -> Result<RateBound<S>, Error> {
    if problem.g.mu() != S::zero() {
        return Err(Error::UnsupportedMethod(
            "the DRS upper bound is only available when g has no strong convexity".into(),
        ));
    }
    check_tau(MethodKind::Drs, tau, problem)?;
    let averaged = (S::one() + rate_prs(tau, problem)?.value) / S::of(2.0);
    let envelope = corner_term(tau, problem.f.mu(), problem.g.lipschitz());
    Ok(RateBound { value: averaged.max(envelope), kind: RateKind::Upper })
}

/// Douglas-Rachford corner lower bound: maximum of
/// `(1 + tau^2 a b) / ((1 + tau a)(1 + tau b))` over curvature corners.
pub fn rate_drs_corner<S: Scalar>(tau: S, problem: &SumProblem<S>) -> Result<RateBound<S>, Error> {
    check_tau(MethodKind::Drs, tau, problem)?;
    let value = drs_corner_over(
        tau,
        &[problem.f.mu(), problem.f.lipschitz()],
        &[problem.g.mu(), problem.g.lipschitz()],
    );
    Ok(RateBound { value, kind: RateKind::Lower })
}

/// Dispatch for the methods with an exact closed form.
pub fn exact_rate<S: Scalar>(
    kind: MethodKind,
    tau: S,
    problem: &SumProblem<S>,
) -> Result<RateBound<S>, Error> {
    match kind {
        MethodKind::Gm => rate_gm(tau, problem),
        MethodKind::Fbs1 => rate_fbs1(tau, problem),
        MethodKind::Fbs2 => rate_fbs2(tau, problem),
        MethodKind::Prs => rate_prs(tau, problem),
        _ => Err(Error::UnsupportedMethod(format!(
            "{kind} has no exact closed-form rate"
        ))),
    }
}
