//! Gram-matrix lifting of the contraction problem and its semidefinite
//! solution.
//!
//! The worst case over a function class is an optimization over
//! infinite-dimensional objects, but every constraint produced by the
//! encoder and the interpolation module is affine in the Gram matrix of the
//! atom basis and in the function values. Maximizing the squared output
//! distance subject to a unit squared start distance is therefore a small
//! semidefinite program; its optimal value is the squared contraction
//! factor, and factorizing the optimal Gram matrix yields an explicit
//! worst-case instance.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::encoder::ContractionSetup;
use crate::expr::{AffineConstraint, AffineExpr, PsdBlock, SymMatrix};
use crate::interp::{class_constraints, operator_constraints};
use crate::model::{MethodSpec, ProblemConfig};
use crate::{Error, Scalar};

/// Default duality-gap / feasibility tolerance for [`solve`].
pub fn default_tol<S: Scalar>() -> S {
    S::of(1e-8)
}

/// All interpolation-type constraints of a contraction setup: function-class
/// inequalities, operator adjoint-consistency equalities, and operator norm
/// PSD blocks.
#[derive(Debug, Clone, Default)]
pub struct ConstraintSet<S> {
    pub equalities: Vec<AffineConstraint<S>>,
    pub inequalities: Vec<AffineConstraint<S>>,
    pub psd_blocks: Vec<PsdBlock<S>>,
}

/// Collects the interpolation constraints for every function role of the
/// setup, plus the operator constraints when one is present.
pub fn interpolation_constraints<S: Scalar>(
    setup: &ContractionSetup<S>,
) -> Result<ConstraintSet<S>, Error> {
    let mut out = ConstraintSet {
        equalities: Vec::new(),
        inequalities: Vec::new(),
        psd_blocks: Vec::new(),
    };
    for function in &setup.functions {
        out.inequalities
            .extend(class_constraints(&function.records, &function.class));
    }
    if let Some(op) = &setup.operator {
        let oc = operator_constraints(&setup.forward_records, &setup.adjoint_records, op)?;
        out.equalities.extend(oc.equalities);
        out.psd_blocks.extend(oc.blocks);
    }
    Ok(out)
}

/// A lifted program over `(Gram, values)`: maximize `objective` subject to
/// the affine constraints and the PSD blocks (the first block is always the
/// main `n x n` Gram matrix itself).
#[derive(Debug, Clone)]
pub struct GramProblem<S> {
    /// Atom-basis size (the main Gram block is `n x n`).
    pub n: usize,
    /// Number of value variables.
    pub m: usize,
    pub objective: AffineExpr<S>,
    pub eq_constraints: Vec<AffineConstraint<S>>,
    pub ineq_constraints: Vec<AffineConstraint<S>>,
    pub psd_blocks: Vec<PsdBlock<S>>,
}

/// The PSD block expressing `Gram >= 0` itself.
pub fn main_gram_block<S: Scalar>(n: usize) -> PsdBlock<S> {
    PsdBlock::from_fn(n, "gram", |i, j| {
        let mut e = AffineExpr::zero();
        e.add_gram(i, j, S::one());
        e
    })
}

fn check_basis(
    what: &str,
    max_atom: Option<usize>,
    max_value: Option<usize>,
    n: usize,
    m: usize,
) -> Result<(), Error> {
    if max_atom.is_some_and(|a| a >= n) {
        return Err(Error::InvalidInput(format!(
            "{what} references atom {} outside the basis of size {n}",
            max_atom.unwrap()
        )));
    }
    if max_value.is_some_and(|v| v >= m) {
        return Err(Error::InvalidInput(format!(
            "{what} references value {} outside the value set of size {m}",
            max_value.unwrap()
        )));
    }
    Ok(())
}

/// [`assemble_scaled`] with the canonical unit bound on the squared start
/// distance.
pub fn assemble<S: Scalar>(
    setup: &ContractionSetup<S>,
    constraints: &ConstraintSet<S>,
) -> Result<GramProblem<S>, Error> {
    assemble_scaled(setup, constraints, S::one())
}

/// Builds the lifted program: maximize the squared output distance subject
/// to squared start distance `<= start_bound`, the given interpolation
/// constraints, and positive semidefiniteness.
pub fn assemble_scaled<S: Scalar>(
    setup: &ContractionSetup<S>,
    constraints: &ConstraintSet<S>,
    start_bound: S,
) -> Result<GramProblem<S>, Error> {
    if !(start_bound.is_finite() && start_bound > S::zero()) {
        return Err(Error::InvalidInput(format!(
            "start bound must be finite positive, got {start_bound}"
        )));
    }
    let n = setup.n_atoms();
    let m = setup.n_values();

    let mut objective = AffineExpr::zero();
    for diff in &setup.output_diffs {
        objective = objective + AffineExpr::sq_norm(diff);
    }
    let mut start = AffineExpr::constant(start_bound);
    for diff in &setup.start_diffs {
        start = start - AffineExpr::sq_norm(diff);
    }

    let mut ineq_constraints = Vec::with_capacity(1 + constraints.inequalities.len());
    ineq_constraints.push(AffineConstraint::ge(start, "start distance"));
    ineq_constraints.extend(constraints.inequalities.iter().cloned());

    let mut psd_blocks = Vec::with_capacity(1 + constraints.psd_blocks.len());
    psd_blocks.push(main_gram_block(n));
    psd_blocks.extend(constraints.psd_blocks.iter().cloned());

    check_basis("objective", objective.max_atom(), objective.max_value(), n, m)?;
    for c in ineq_constraints.iter().chain(&constraints.equalities) {
        check_basis(&c.label, c.expr.max_atom(), c.expr.max_value(), n, m)?;
    }
    for b in &psd_blocks {
        check_basis("psd block", b.max_atom(), b.max_value(), n, m)?;
    }

    Ok(GramProblem {
        n,
        m,
        objective,
        eq_constraints: constraints.equalities.clone(),
        ineq_constraints,
        psd_blocks,
    })
}

/// Termination classification of [`solve`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// The constraints admit no PSD solution; a valid contraction program is
    /// never infeasible (zero functions satisfy everything), so this signals
    /// an encoding bug in the caller's hands.
    Infeasible,
    NumericalFailure(String),
}

/// Constraint multipliers reported by the solver, in constraint order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Duals<S> {
    pub equalities: Vec<S>,
    pub inequalities: Vec<S>,
}

/// Solver output: optimal value, the Gram/value certificate, and duals.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<S> {
    pub value: S,
    pub gram: SymMatrix<S>,
    pub values: Vec<S>,
    pub duals: Duals<S>,
    pub status: SolveStatus,
    /// Tolerance the interior-point method actually met; equals the requested
    /// tolerance unless an ill-conditioned instance forced a relaxed retry.
    pub achieved_tol: S,
}

/// Column-major upper-triangle packing with unit diagonal scale and
/// `sqrt(2)` off-diagonal scale (`i <= j`).
fn svec_index(i: usize, j: usize) -> usize {
    j * (j + 1) / 2 + i
}

fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Decision-vector coefficients of the linear part of `expr` (Gram entries
/// first in svec coordinates, then value variables).
fn expr_row<S: Scalar>(expr: &AffineExpr<S>, n: usize) -> Vec<(usize, S)> {
    let sqrt2 = S::of(std::f64::consts::SQRT_2);
    let offset = svec_len(n);
    let mut row = Vec::new();
    for ((i, j), c) in expr.gram_terms() {
        let coef = if i == j { c } else { c / sqrt2 };
        row.push((svec_index(i, j), coef));
    }
    for (k, c) in expr.value_terms() {
        row.push((offset + k, c));
    }
    row
}

struct ConicData<S> {
    columns: Vec<BTreeMap<usize, S>>,
    rhs: Vec<S>,
    cones: Vec<SupportedConeT<S>>,
    n_eq: usize,
    n_ineq: usize,
}

impl<S: Scalar> ConicData<S> {
    fn push_row(&mut self, coeffs: &[(usize, S)], negate: bool, rhs: S) {
        let row = self.rhs.len();
        self.rhs.push(rhs);
        for &(col, v) in coeffs {
            if v == S::zero() {
                continue;
            }
            let v = if negate { -v } else { v };
            *self.columns[col].entry(row).or_insert(S::zero()) += v;
        }
    }
}

/// Lowers the program to `A z + s = b`, `s in (zero, nonneg, psd...)` over
/// `z = (svec(Gram), values)`, with `extra_ineq` appended to the
/// nonnegative section when present.
fn conic_data<S: Scalar>(
    problem: &GramProblem<S>,
    extra_ineq: Option<&AffineConstraint<S>>,
) -> ConicData<S> {
    let n = problem.n;
    let ncols = svec_len(n) + problem.m;
    let sqrt2 = S::of(std::f64::consts::SQRT_2);
    let mut data = ConicData {
        columns: vec![BTreeMap::new(); ncols],
        rhs: Vec::new(),
        cones: Vec::new(),
        n_eq: problem.eq_constraints.len(),
        n_ineq: problem.ineq_constraints.len() + usize::from(extra_ineq.is_some()),
    };

    // Equalities: expr = 0 lowers to A z = -const with a zero slack.
    for c in &problem.eq_constraints {
        let row = expr_row(&c.expr, n);
        data.push_row(&row, false, -c.expr.constant_term());
    }
    data.cones.push(SupportedConeT::ZeroConeT(data.n_eq));

    // Inequalities: expr >= 0 lowers to s = expr, i.e. -A z has the linear
    // part and b the constant.
    for c in problem.ineq_constraints.iter().chain(extra_ineq) {
        let row = expr_row(&c.expr, n);
        data.push_row(&row, true, c.expr.constant_term());
    }
    data.cones.push(SupportedConeT::NonnegativeConeT(data.n_ineq));

    // PSD blocks: the slack is the svec of the block value.
    for block in &problem.psd_blocks {
        let d = block.dim();
        for j in 0..d {
            for i in 0..=j {
                let entry = block.entry(i, j);
                let scale = if i == j { S::one() } else { sqrt2 };
                let row: Vec<(usize, S)> = expr_row(entry, n)
                    .into_iter()
                    .map(|(col, v)| (col, v * scale))
                    .collect();
                data.push_row(&row, true, entry.constant_term() * scale);
            }
        }
        data.cones.push(SupportedConeT::PSDTriangleConeT(d));
    }
    data
}

fn to_csc<S: Scalar + clarabel::algebra::FloatT>(data: &ConicData<S>) -> CscMatrix<S> {
    let mut colptr = Vec::with_capacity(data.columns.len() + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for column in &data.columns {
        for (&row, &v) in column {
            rowval.push(row);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(data.rhs.len(), data.columns.len(), colptr, rowval, nzval)
}

fn run_clarabel<S: Scalar + clarabel::algebra::FloatT>(
    cost: &[S],
    data: &ConicData<S>,
    tol: S,
) -> Result<clarabel::solver::DefaultSolution<S>, Error> {
    let a = to_csc(data);
    let p = CscMatrix::zeros((cost.len(), cost.len()));
    let settings = DefaultSettings {
        verbose: false,
        max_iter: 200,
        tol_gap_abs: tol,
        tol_gap_rel: tol,
        tol_feas: tol,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p, cost, &a, &data.rhs, &data.cones, settings)
        .map_err(|e| Error::SolverFailure(format!("solver setup failed: {e}")))?;
    solver.solve();
    Ok(solver.solution)
}

/// Runs the solver, relaxing the tolerance by up to three factors of 10 when
/// badly scaled instances (large steps, extreme curvature ratios) stall
/// short of the termination criteria. Returns the solution together with the
/// tolerance of the final attempt.
fn run_clarabel_relaxing<S: Scalar + clarabel::algebra::FloatT>(
    cost: &[S],
    data: &ConicData<S>,
    tol: S,
) -> Result<(clarabel::solver::DefaultSolution<S>, S), Error> {
    let mut achieved = tol;
    let mut sol = run_clarabel(cost, data, achieved)?;
    for _ in 0..3 {
        if sol.status == SolverStatus::Solved || sol.status == SolverStatus::PrimalInfeasible {
            break;
        }
        achieved = achieved * S::of(10.0);
        sol = run_clarabel(cost, data, achieved)?;
    }
    Ok((sol, achieved))
}

fn gram_from_x<S: Scalar>(x: &[S], n: usize) -> SymMatrix<S> {
    let sqrt2 = S::of(std::f64::consts::SQRT_2);
    let mut gram = SymMatrix::zeros(n);
    for j in 0..n {
        for i in 0..=j {
            let v = x[svec_index(i, j)];
            gram.set(i, j, if i == j { v } else { v / sqrt2 });
        }
    }
    gram
}

/// Solves the lifted program to the given duality-gap/feasibility tolerance.
/// If the interior-point method stalls short of it, each pass is retried at
/// up to 1000x its tolerance before reporting failure; `achieved_tol`
/// records the loosest criterion that contributed to the result.
///
/// The optimizer runs twice: the first pass finds the optimal value and the
/// constraint multipliers; the second re-solves with the objective pinned to
/// (within `5 tol` of) that value while minimizing the trace of the Gram
/// matrix. Interior-point iterates converge to maximal-rank points of the
/// optimal face, which is translation-degenerate for contraction programs;
/// the trace pass selects a minimal instance from the same face so that
/// certificate extraction is deterministic and low-rank. If the second pass
/// fails numerically the first-pass certificate is kept.
pub fn solve<S>(problem: &GramProblem<S>, tol: S) -> Result<Solution<S>, Error>
where
    S: Scalar + clarabel::algebra::FloatT,
{
    if !(tol.is_finite() && tol > S::zero()) {
        return Err(Error::InvalidInput(format!(
            "tolerance must be finite positive, got {tol}"
        )));
    }
    let n = problem.n;
    let ncols = svec_len(n) + problem.m;

    // Phase 1: maximize the objective (minimize its negation).
    let mut cost = vec![S::zero(); ncols];
    for (col, v) in expr_row(&problem.objective, n) {
        cost[col] += -v;
    }
    let data = conic_data(problem, None);
    let (first, mut achieved_tol) = run_clarabel_relaxing(&cost, &data, tol)?;

    let failed = |status: SolverStatus| Solution {
        value: S::nan(),
        gram: SymMatrix::zeros(n),
        values: vec![S::zero(); problem.m],
        duals: Duals::default(),
        status: SolveStatus::NumericalFailure(format!("solver returned {status:?}")),
        achieved_tol,
    };
    match first.status {
        SolverStatus::Solved => {}
        SolverStatus::PrimalInfeasible => {
            return Ok(Solution {
                status: SolveStatus::Infeasible,
                ..failed(first.status)
            })
        }
        status => return Ok(failed(status)),
    }

    let value = -first.obj_val + problem.objective.constant_term();
    let duals = Duals {
        equalities: first.z[..data.n_eq].to_vec(),
        inequalities: first.z[data.n_eq..data.n_eq + data.n_ineq].to_vec(),
    };

    // Phase 2: pin the objective, minimize trace(Gram).
    let pin = AffineConstraint::ge(
        problem.objective.clone() - AffineExpr::constant(value - S::of(5.0) * achieved_tol),
        "objective pin",
    );
    let mut trace_cost = vec![S::zero(); ncols];
    for i in 0..n {
        trace_cost[svec_index(i, i)] = S::one();
    }
    let second_data = conic_data(problem, Some(&pin));
    let (second, second_tol) = run_clarabel_relaxing(&trace_cost, &second_data, achieved_tol)?;
    let x = if second.status == SolverStatus::Solved {
        // The reported tolerance covers the certificate, not just the value.
        achieved_tol = num_traits::Float::max(achieved_tol, second_tol);
        &second.x
    } else {
        &first.x
    };

    let gram = gram_from_x(x, n);
    let values = x[svec_len(n)..].to_vec();
    Ok(Solution {
        value,
        gram,
        values,
        duals,
        status: SolveStatus::Optimal,
        achieved_tol,
    })
}

/// Smallest eigenvalue of a symmetric matrix (feasibility checks).
pub fn min_eigenvalue<S: Scalar + nalgebra::RealField>(mat: &SymMatrix<S>) -> S {
    let n = mat.n();
    if n == 0 {
        return S::zero();
    }
    let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| mat.get(i, j));
    let eigen = dense.symmetric_eigen();
    let mut min = eigen.eigenvalues[0];
    for k in 1..n {
        if eigen.eigenvalues[k] < min {
            min = eigen.eigenvalues[k];
        }
    }
    min
}

/// Factorizes `gram ~= V^T V`, keeping eigenvalues above
/// `max(1e-6 * lambda_max, noise_floor)` and normalizing each eigenvector's
/// sign (largest-magnitude component positive) for determinism. Returns the
/// rank and one coordinate row per atom. `noise_floor` is an absolute cutoff
/// for spurious modes a relaxed solve can leave in the certificate; pass
/// zero for a purely relative threshold.
pub fn gram_factor<S: Scalar + nalgebra::RealField>(
    gram: &SymMatrix<S>,
    noise_floor: S,
) -> (usize, Vec<Vec<S>>) {
    let n = gram.n();
    if n == 0 {
        return (0, Vec::new());
    }
    let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| gram.get(i, j));
    let eigen = dense.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .expect("eigenvalues of a finite symmetric matrix are comparable")
    });
    let lambda_max = num_traits::Float::max(eigen.eigenvalues[order[0]], S::zero());
    let threshold = num_traits::Float::max(S::of(1e-6) * lambda_max, noise_floor);

    let mut kept: Vec<(S, Vec<S>)> = Vec::new();
    for &k in &order {
        let lambda = eigen.eigenvalues[k];
        if !(lambda > threshold && lambda > S::zero()) {
            continue;
        }
        let column: Vec<S> = (0..n).map(|i| eigen.eigenvectors[(i, k)]).collect();
        let mut pivot = 0;
        for (i, v) in column.iter().enumerate() {
            if num_traits::Float::abs(*v) > num_traits::Float::abs(column[pivot]) {
                pivot = i;
            }
        }
        let flip = column[pivot] < S::zero();
        let scale = num_traits::Float::sqrt(lambda);
        kept.push((
            lambda,
            column
                .into_iter()
                .map(|v| if flip { -v * scale } else { v * scale })
                .collect(),
        ));
    }

    let rank = kept.len();
    let coords: Vec<Vec<S>> = (0..n)
        .map(|i| kept.iter().map(|(_, col)| col[i]).collect())
        .collect();
    (rank, coords)
}

/// An explicit worst-case instance recovered from an optimal solution:
/// concrete coordinates (one row of dimension `rank` per atom), the function
/// values, and the contraction ratio those coordinates realize.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase<S> {
    pub rank: usize,
    pub atom_coords: Vec<Vec<S>>,
    pub values: Vec<S>,
    pub ratio: S,
}

/// Factorizes the optimal Gram matrix into explicit atom coordinates and
/// recomputes the contraction ratio from them.
pub fn extract_worst_case<S>(
    solution: &Solution<S>,
    setup: &ContractionSetup<S>,
) -> Result<WorstCase<S>, Error>
where
    S: Scalar + nalgebra::RealField,
{
    if solution.status != SolveStatus::Optimal {
        return Err(Error::NonOptimal(format!(
            "cannot extract a worst case from a {:?} solution",
            solution.status
        )));
    }
    // Eigenvalues at the scale of the solver's feasibility error are
    // certificate noise, not worst-case dimensions.
    let (rank, atom_coords) = gram_factor(&solution.gram, S::of(10.0) * solution.achieved_tol);
    let dim = rank.max(1);
    let mut num = S::zero();
    for diff in &setup.output_diffs {
        for c in diff.eval_coords(&atom_coords, dim) {
            num += c * c;
        }
    }
    let mut den = S::zero();
    for diff in &setup.start_diffs {
        for c in diff.eval_coords(&atom_coords, dim) {
            den += c * c;
        }
    }
    let ratio = num_traits::Float::sqrt(num / den);
    Ok(WorstCase {
        rank,
        atom_coords,
        values: solution.values.clone(),
        ratio,
    })
}

/// Renders the program in a plain-text sparse triplet format, one entry per
/// line:
///
/// ```text
/// problem <n> <m>
/// objective gram <i> <j> <coeff> | objective value <k> <coeff> | objective const <c>
/// eq <idx> <label> ...          (same triplet forms, then "const")
/// ineq <idx> <label> ...
/// psd <idx> <dim> <label>; entries as "entry <i> <j> gram/value/const ..."
/// ```
///
/// Gram triplets address the upper triangle (`i <= j`) with the convention
/// that the coefficient multiplies the single symmetric entry `G_ij`.
pub fn dump_problem<S: Scalar>(problem: &GramProblem<S>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "problem {} {}", problem.n, problem.m);
    let expr_lines = |out: &mut String, head: &str, e: &AffineExpr<S>| {
        for ((i, j), c) in e.gram_terms() {
            let _ = writeln!(out, "{head} gram {i} {j} {c:e}");
        }
        for (k, c) in e.value_terms() {
            let _ = writeln!(out, "{head} value {k} {c:e}");
        }
        if e.constant_term() != S::zero() {
            let _ = writeln!(out, "{head} const {:e}", e.constant_term());
        }
    };
    expr_lines(&mut out, "objective", &problem.objective);
    for (idx, c) in problem.eq_constraints.iter().enumerate() {
        let _ = writeln!(out, "eq {idx} # {}", c.label);
        expr_lines(&mut out, &format!("eq {idx}"), &c.expr);
    }
    for (idx, c) in problem.ineq_constraints.iter().enumerate() {
        let _ = writeln!(out, "ineq {idx} # {}", c.label);
        expr_lines(&mut out, &format!("ineq {idx}"), &c.expr);
    }
    for (idx, block) in problem.psd_blocks.iter().enumerate() {
        let _ = writeln!(out, "psd {idx} {} # {}", block.dim(), block.label);
        for j in 0..block.dim() {
            for i in 0..=j {
                expr_lines(&mut out, &format!("psd {idx} entry {i} {j}"), block.entry(i, j));
            }
        }
    }
    out
}

/// A complete performance-estimation run: the encoded setup, the lifted
/// program, and its solution.
#[derive(Debug, Clone)]
pub struct PepRun<S> {
    pub setup: ContractionSetup<S>,
    pub problem: GramProblem<S>,
    pub solution: Solution<S>,
}

impl<S: Scalar> PepRun<S> {
    /// The contraction factor `r = sqrt(max(value, 0))`.
    pub fn rate(&self) -> S {
        self.solution.value.max(S::zero()).sqrt()
    }
}

/// Encodes, assembles, and solves the contraction program of `method` on
/// `problem`.
pub fn run_pep<S>(
    method: &MethodSpec<S>,
    problem: &ProblemConfig<S>,
    tol: S,
) -> Result<PepRun<S>, Error>
where
    S: Scalar + clarabel::algebra::FloatT,
{
    let setup = crate::encoder::contraction_setup(method, problem)?;
    let constraints = interpolation_constraints(&setup)?;
    let gram_problem = assemble(&setup, &constraints)?;
    let solution = solve(&gram_problem, tol)?;
    Ok(PepRun {
        setup,
        problem: gram_problem,
        solution,
    })
}
