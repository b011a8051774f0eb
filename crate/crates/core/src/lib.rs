//! Exact worst-case contraction analysis of proximal first-order methods.
//!
//! Given a structured monotone-operator problem built from smooth strongly
//! convex function classes (a sum `f + g`, or a composite `f + h(Mx)` with a
//! norm-bounded linear operator), this crate computes the exact per-iteration
//! contraction factor of a splitting method three independent ways:
//!
//! * [`sdp`] — solve the performance-estimation semidefinite program obtained
//!   by lifting two coupled trajectories into a Gram matrix and imposing
//!   interpolation constraints ([`interp`], [`encoder`]);
//! * [`closed_form`] — evaluate known closed-form rate expressions;
//! * [`quad_oracle`] — brute-force the worst quadratic instance, on which
//!   every method reduces to a small linear map.
//!
//! All core types are generic over the floating-point scalar through the
//! [`Scalar`] trait; `f64` aliases live at the crate root.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

pub mod closed_form;
pub mod encoder;
pub mod expr;
pub mod interp;
pub mod model;
pub mod quad_oracle;
pub mod sdp;

/// Floating-point scalar the whole analysis is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + Sum
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must be representable")
    }

    /// `1/x` with the conventions `1/0 = +inf` and `1/inf = 0`.
    fn recip_ext(self) -> Self {
        if self == Self::zero() {
            Self::infinity()
        } else if self == Self::infinity() {
            Self::zero()
        } else {
            self.recip()
        }
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + NumAssign
        + Sum
        + Send
        + Sync
        + fmt::Debug
        + fmt::Display
        + fmt::LowerExp
        + 'static
{
}

/// Errors produced across the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A function class violates `0 <= mu < L`.
    InvalidClass(String),
    /// An operator norm bound is not finite and positive.
    InvalidOperatorBound(String),
    /// A method/problem combination or method parameter set is not defined.
    UnsupportedMethod(String),
    /// A step size lies outside the method's admissible range.
    StepOutOfRange(String),
    /// An encoder operation was applied to incompatible inputs.
    EncoderMisuse(String),
    /// A malformed argument outside the categories above.
    InvalidInput(String),
    /// The SDP backend failed to return a usable solution.
    SolverFailure(String),
    /// A certificate was requested from a solution that is not optimal.
    NonOptimal(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidClass(msg) => write!(f, "invalid function class: {msg}"),
            Error::InvalidOperatorBound(msg) => write!(f, "invalid operator bound: {msg}"),
            Error::UnsupportedMethod(msg) => write!(f, "unsupported method: {msg}"),
            Error::StepOutOfRange(msg) => write!(f, "step out of range: {msg}"),
            Error::EncoderMisuse(msg) => write!(f, "encoder misuse: {msg}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::SolverFailure(msg) => write!(f, "solver failure: {msg}"),
            Error::NonOptimal(msg) => write!(f, "solution is not optimal: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

/// Double-precision aliases for the common case.
pub type FunctionClass64 = model::FunctionClass<f64>;
pub type OperatorBound64 = model::OperatorBound<f64>;
pub type SumProblem64 = model::SumProblem<f64>;
pub type CompositeProblem64 = model::CompositeProblem<f64>;
pub type ProblemConfig64 = model::ProblemConfig<f64>;
pub type MethodSpec64 = model::MethodSpec<f64>;
pub type RateBound64 = closed_form::RateBound<f64>;
pub type QuadPoint64 = quad_oracle::QuadPoint<f64>;
pub type GramProblem64 = sdp::GramProblem<f64>;
pub type Solution64 = sdp::Solution<f64>;
