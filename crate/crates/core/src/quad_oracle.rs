//! Independent worst-case oracle over quadratic instances.
//!
//! Every primal method acts on the pair `f = a x^2 / 2`, `g = b x^2 / 2` as
//! multiplication by an explicit scalar, and the primal-dual methods act on
//! `f = a x^2 / 2`, `h = b w^2 / 2`, `M = m` as an explicit 2x2 linear map.
//! Maximizing the factor (or the spectral norm) over the curvature box gives
//! a ground-truth lower bound on the class-worst contraction rate that is
//! computed without any semidefinite machinery, which makes it a useful
//! cross-check for both the closed forms and the lifted programs.

use crate::model::{
    admissible_step_range, MethodKind, ProblemConfig, StepAdmissibility, SumProblem,
};
use crate::{Error, Scalar};

/// A quadratic instance: curvature `a` for `f`, curvature `b` for `g` (or
/// `h`), and the operator scalar `m` (zero for plain sum problems).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint<S> {
    pub a: S,
    pub b: S,
    pub m: S,
}

fn signed_reflection<S: Scalar>(tau: S, c: S) -> S {
    (S::one() - tau * c) / (S::one() + tau * c)
}

/// The signed per-iteration factor of a primal method on the instance
/// `f = a x^2 / 2`, `g = b x^2 / 2` (both proxes and gradients are linear,
/// so one step is multiplication by this scalar).
pub fn scalar_map<S: Scalar>(kind: MethodKind, tau: S, point: QuadPoint<S>) -> Result<S, Error> {
    let QuadPoint { a, b, .. } = point;
    let one = S::one();
    match kind {
        MethodKind::Gm => Ok(one - tau * (a + b)),
        MethodKind::Fbs1 => Ok((one - tau * a) / (one + tau * b)),
        MethodKind::Fbs2 => Ok((one - tau * b) / (one + tau * a)),
        MethodKind::Prs => Ok(signed_reflection(tau, a) * signed_reflection(tau, b)),
        MethodKind::Drs => {
            Ok((one + tau * tau * a * b) / ((one + tau * a) * (one + tau * b)))
        }
        MethodKind::Cpm | MethodKind::Cvm => Err(Error::UnsupportedMethod(format!(
            "{kind} is a primal-dual method; use matrix_map"
        ))),
    }
}

/// Factor multiplying the dual prox input: `prox_{sigma h*}(z) = z b/(b+sigma)`
/// for `b > 0`, with the `b = 0` (prox collapses to zero) and `b = +inf`
/// (prox is the identity) limits taken as explicit branches.
fn dual_prox_factor<S: Scalar>(sigma: S, b: S) -> S {
    if b == S::zero() {
        S::zero()
    } else if b == S::infinity() {
        S::one()
    } else {
        b / (b + sigma)
    }
}

fn pd_point_admissible<S: Scalar>(kind: MethodKind, tau: S, sigma: S, a: S, m: S) -> bool {
    if !(tau.is_finite() && tau > S::zero() && sigma.is_finite() && sigma > S::zero()) {
        return false;
    }
    let slack = S::of(64.0) * S::epsilon();
    match kind {
        MethodKind::Cpm => sigma * tau * m * m <= S::one() + slack,
        MethodKind::Cvm => {
            let lhs = tau.recip() - sigma * m * m;
            let rhs = a / S::of(2.0);
            lhs >= rhs - slack * S::one().max(rhs.abs()).max(tau.recip())
        }
        _ => false,
    }
}

fn pd_map_unchecked<S: Scalar>(
    kind: MethodKind,
    tau: S,
    sigma: S,
    point: QuadPoint<S>,
) -> [[S; 2]; 2] {
    let QuadPoint { a, b, m } = point;
    let one = S::one();
    let two = S::of(2.0);
    let c = dual_prox_factor(sigma, b);
    match kind {
        MethodKind::Cpm => {
            // x+ = (x - tau m u) / (1 + tau a); u+ = prox(u + sigma m (2x+ - x)).
            let p = (one + tau * a).recip();
            [
                [p, -tau * m * p],
                [c * sigma * m * (two * p - one), c * (one - two * sigma * tau * m * m * p)],
            ]
        }
        MethodKind::Cvm => {
            // x+ = x - tau (a x + m u); u+ = prox(u + sigma m (2x+ - x)).
            [
                [one - tau * a, -tau * m],
                [c * sigma * m * (one - two * tau * a), c * (one - two * sigma * tau * m * m)],
            ]
        }
        _ => unreachable!("pd_map_unchecked is only called for primal-dual kinds"),
    }
}

/// The 2x2 linear map `(x, u) -> (x+, u+)` of one CPM or CVM step on the
/// instance `f = a x^2 / 2`, `h = b w^2 / 2`, `M = m`.
pub fn matrix_map<S: Scalar>(
    kind: MethodKind,
    tau: S,
    sigma: S,
    point: QuadPoint<S>,
) -> Result<[[S; 2]; 2], Error> {
    if !kind.is_primal_dual() {
        return Err(Error::UnsupportedMethod(format!(
            "{kind} is a primal method; use scalar_map"
        )));
    }
    if !pd_point_admissible(kind, tau, sigma, point.a, point.m) {
        return Err(Error::StepOutOfRange(format!(
            "(tau, sigma) = ({tau}, {sigma}) is not admissible for {kind} at m = {}",
            point.m
        )));
    }
    Ok(pd_map_unchecked(kind, tau, sigma, point))
}

/// Largest singular value of a 2x2 matrix, from the closed form
/// `s_max^2 = (t + sqrt(t^2 - 4 d^2)) / 2` with `t` the squared Frobenius
/// norm and `d` the determinant.
pub fn spectral_norm_2x2<S: Scalar>(t: &[[S; 2]; 2]) -> S {
    let frob2 = t[0][0] * t[0][0] + t[0][1] * t[0][1] + t[1][0] * t[1][0] + t[1][1] * t[1][1];
    let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    let disc = (frob2 * frob2 - S::of(4.0) * det * det).max(S::zero());
    ((frob2 + disc.sqrt()) / S::of(2.0)).max(S::zero()).sqrt()
}

#[derive(Clone, Copy)]
struct Axis<S> {
    lo: S,
    hi: S,
}

impl<S: Scalar> Axis<S> {
    fn grid_point(&self, i: usize, n: usize) -> S {
        if i + 1 == n {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * S::of(i as f64) / S::of((n - 1) as f64)
        }
    }
}

/// Exhaustive grid scan (first maximizer wins ties) followed by a clamped
/// coordinate-descent ascent with step halving down to 1e-8.
fn box_maximize<S: Scalar>(
    axes: &[Axis<S>],
    grid_n: usize,
    objective: &dyn Fn(&[S]) -> S,
) -> (S, Vec<S>) {
    let dims = axes.len();
    let mut best_value = S::neg_infinity();
    let mut best = vec![S::zero(); dims];
    let mut index = vec![0usize; dims];
    'grid: loop {
        let x: Vec<S> = index
            .iter()
            .zip(axes)
            .map(|(&i, ax)| ax.grid_point(i, grid_n))
            .collect();
        let v = objective(&x);
        if v > best_value {
            best_value = v;
            best = x;
        }
        // Row-major increment, so ties resolve to the lowest grid index.
        for d in (0..dims).rev() {
            index[d] += 1;
            if index[d] < grid_n {
                continue 'grid;
            }
            index[d] = 0;
            if d == 0 {
                break 'grid;
            }
        }
        if dims == 0 {
            break;
        }
    }

    let tol = S::of(1e-8);
    let mut step: Vec<S> = axes
        .iter()
        .map(|ax| (ax.hi - ax.lo) / S::of((grid_n - 1) as f64))
        .collect();
    loop {
        let mut improved = false;
        for d in 0..dims {
            if axes[d].hi == axes[d].lo {
                continue;
            }
            for sign in [S::one(), -S::one()] {
                let mut candidate = best.clone();
                candidate[d] = (best[d] + sign * step[d]).max(axes[d].lo).min(axes[d].hi);
                if candidate[d] == best[d] {
                    continue;
                }
                let v = objective(&candidate);
                if v > best_value {
                    best_value = v;
                    best = candidate;
                    improved = true;
                }
            }
        }
        if !improved {
            let mut all_below = true;
            for s in step.iter_mut() {
                *s = *s / S::of(2.0);
                if *s >= tol {
                    all_below = false;
                }
            }
            if all_below {
                break;
            }
        }
    }
    (best_value, best)
}

fn finite_box<S: Scalar>(lo: S, hi: S, what: &str) -> Result<Axis<S>, Error> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(Axis { lo, hi })
    } else {
        Err(Error::InvalidInput(format!(
            "the quadratic oracle needs a finite curvature box for {what}, got [{lo}, {hi}]"
        )))
    }
}

fn check_primal_step<S: Scalar>(
    kind: MethodKind,
    tau: S,
    problem: &SumProblem<S>,
) -> Result<(), Error> {
    match admissible_step_range(kind, &ProblemConfig::Sum(*problem))? {
        StepAdmissibility::Tau(range) => {
            if tau.is_finite() && range.contains(tau) {
                Ok(())
            } else {
                Err(Error::StepOutOfRange(format!(
                    "tau = {tau} outside admissible range {range} for {kind}"
                )))
            }
        }
        _ => unreachable!("primal kinds have interval admissibility"),
    }
}

/// Worst contraction factor of `kind` over the quadratic instances in the
/// class box, together with the maximizing instance. Primal methods maximize
/// the absolute scalar factor (on composite problems the curvature seen
/// through the operator is `b m^2`); CPM/CVM maximize the spectral norm of
/// the 2x2 step map and require `sigma`.
pub fn quad_worst_rate<S: Scalar>(
    kind: MethodKind,
    tau: S,
    sigma: Option<S>,
    problem: &ProblemConfig<S>,
    grid_n: usize,
) -> Result<(S, QuadPoint<S>), Error> {
    if grid_n < 2 {
        return Err(Error::InvalidInput(format!(
            "grid_n must be at least 2, got {grid_n}"
        )));
    }
    let f = problem.f_class();
    let a_axis = finite_box(f.mu(), f.lipschitz(), "f")?;
    match (problem, kind.is_primal_dual()) {
        (ProblemConfig::Sum(p), false) => {
            check_primal_step(kind, tau, p)?;
            let b_axis = finite_box(p.g.mu(), p.g.lipschitz(), "g")?;
            let (value, x) = box_maximize(&[a_axis, b_axis], grid_n, &|x| {
                scalar_map(kind, tau, QuadPoint { a: x[0], b: x[1], m: S::zero() })
                    .map(S::abs)
                    .unwrap_or(S::neg_infinity())
            });
            Ok((value, QuadPoint { a: x[0], b: x[1], m: S::zero() }))
        }
        (ProblemConfig::Sum(_), true) => Err(Error::UnsupportedMethod(format!(
            "{kind} needs a composite problem"
        ))),
        (ProblemConfig::Composite(c), false) => {
            check_primal_step(kind, tau, &problem.effective_sum())?;
            let b_axis = finite_box(c.h.mu(), c.h.lipschitz(), "h")?;
            let m_axis = Axis { lo: S::zero(), hi: c.op.norm_bound() };
            let (value, x) = box_maximize(&[a_axis, b_axis, m_axis], grid_n, &|x| {
                let effective = QuadPoint { a: x[0], b: x[1] * x[2] * x[2], m: S::zero() };
                scalar_map(kind, tau, effective)
                    .map(S::abs)
                    .unwrap_or(S::neg_infinity())
            });
            Ok((value, QuadPoint { a: x[0], b: x[1], m: x[2] }))
        }
        (ProblemConfig::Composite(c), true) => {
            let sigma = sigma.ok_or_else(|| {
                Error::InvalidInput(format!("{kind} needs a dual step sigma"))
            })?;
            admissible_step_range(kind, problem)?
                .admits(kind, tau, Some(sigma))
                .map_err(|v| Error::StepOutOfRange(v.message().into()))?;
            let b_axis = finite_box(c.h.mu(), c.h.lipschitz(), "h")?;
            let m_axis = Axis { lo: S::zero(), hi: c.op.norm_bound() };
            let (value, x) = box_maximize(&[a_axis, b_axis, m_axis], grid_n, &|x| {
                let point = QuadPoint { a: x[0], b: x[1], m: x[2] };
                spectral_norm_2x2(&pd_map_unchecked(kind, tau, sigma, point))
            });
            Ok((value, QuadPoint { a: x[0], b: x[1], m: x[2] }))
        }
    }
}
