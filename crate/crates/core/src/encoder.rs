//! Symbolic method encodings.
//!
//! Running a method on abstract problem data means allocating a fresh atom
//! for every quantity the method queries (a gradient, a prox gradient, an
//! operator image) and remembering the [`EvalRecord`]/[`OperatorRecord`]
//! that ties the atom to its defining relation. A prox step
//! `y = prox_{t f}(q)` is encoded through its optimality condition
//! `y = q - t g` with `g` a (sub)gradient of `f` at `y`; nothing is ever
//! memoized, so repeated evaluations at the same expression get distinct
//! atoms (the interpolation constraints are what identify them when that is
//! actually forced).

use crate::expr::{AtomId, FuncId, LinearExpr, ValueId};
use crate::interp::{conjugate_class, EvalRecord, OperatorRecord, OperatorSide};
use crate::model::{
    admissible_step_range, FunctionClass, MethodKind, MethodSpec, OperatorBound, ProblemConfig,
};
use crate::{Error, Scalar};

/// Function role of `f` in either problem form.
pub const FUNC_F: FuncId = FuncId(0);
/// Function role of the second function: `g` for a sum, `h` for a composite
/// under primal methods, `h*` under primal-dual methods.
pub const FUNC_SECOND: FuncId = FuncId(1);

/// Allocates atoms/values and records method evaluations against a problem.
#[derive(Debug)]
pub struct Encoder<'p, S> {
    problem: &'p ProblemConfig<S>,
    atom_labels: Vec<String>,
    value_labels: Vec<String>,
}

impl<'p, S: Scalar> Encoder<'p, S> {
    pub fn new(problem: &'p ProblemConfig<S>) -> Self {
        Encoder { problem, atom_labels: Vec::new(), value_labels: Vec::new() }
    }

    pub fn problem(&self) -> &'p ProblemConfig<S> {
        self.problem
    }

    pub fn n_atoms(&self) -> usize {
        self.atom_labels.len()
    }

    pub fn n_values(&self) -> usize {
        self.value_labels.len()
    }

    pub fn atom_labels(&self) -> &[String] {
        &self.atom_labels
    }

    pub fn value_labels(&self) -> &[String] {
        &self.value_labels
    }

    pub fn fresh_atom(&mut self, label: impl Into<String>) -> AtomId {
        self.atom_labels.push(label.into());
        AtomId(self.atom_labels.len() - 1)
    }

    fn fresh_value(&mut self, label: impl Into<String>) -> ValueId {
        self.value_labels.push(label.into());
        ValueId(self.value_labels.len() - 1)
    }

    /// Evaluates a (sub)gradient of function `func` at `point`: a fresh
    /// gradient atom and a fresh value variable.
    pub fn encode_gradient_eval(
        &mut self,
        func: FuncId,
        point: &LinearExpr<S>,
    ) -> (LinearExpr<S>, EvalRecord<S>) {
        let g = self.fresh_atom(format!("g{}_{}", func.0, self.atom_labels.len()));
        let value = self.fresh_value(format!("f{}_{}", func.0, self.value_labels.len()));
        let grad = LinearExpr::atom(g);
        let record = EvalRecord { point: point.clone(), grad: grad.clone(), value, func };
        (grad, record)
    }

    /// Encodes `y = prox_{step * func}(input)` through its optimality
    /// condition `y = input - step * g`, `g` a (sub)gradient at `y`.
    pub fn encode_prox_step(
        &mut self,
        func: FuncId,
        input: &LinearExpr<S>,
        step: S,
    ) -> Result<(LinearExpr<S>, EvalRecord<S>), Error> {
        if !(step.is_finite() && step > S::zero()) {
            return Err(Error::EncoderMisuse(format!(
                "prox step must be finite and positive, got {step}"
            )));
        }
        let g = self.fresh_atom(format!("g{}_{}", func.0, self.atom_labels.len()));
        let value = self.fresh_value(format!("f{}_{}", func.0, self.value_labels.len()));
        let grad = LinearExpr::atom(g);
        let output = input.clone() - grad.clone().scaled(step);
        let record = EvalRecord { point: output.clone(), grad: grad.clone(), value, func };
        Ok((output, record))
    }

    /// Applies the linear operator (or its adjoint) to `input`, producing a
    /// fresh image atom. Only defined for composite problems.
    pub fn encode_operator(
        &mut self,
        input: &LinearExpr<S>,
        side: OperatorSide,
    ) -> Result<(LinearExpr<S>, OperatorRecord<S>), Error> {
        if self.problem.operator().is_none() {
            return Err(Error::EncoderMisuse(
                "operator application requires a composite problem".into(),
            ));
        }
        let name = match side {
            OperatorSide::Forward => "Mx",
            OperatorSide::Adjoint => "MTu",
        };
        let out = self.fresh_atom(format!("{name}_{}", self.atom_labels.len()));
        let output = LinearExpr::atom(out);
        let record = OperatorRecord { input: input.clone(), output: output.clone(), side };
        Ok((output, record))
    }
}

/// One encoded method run: symbolic start/output and everything recorded
/// along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub start: LinearExpr<S>,
    /// Dual starting point (primal-dual methods only).
    pub dual_start: Option<LinearExpr<S>>,
    pub output: LinearExpr<S>,
    pub dual_output: Option<LinearExpr<S>>,
    /// Evaluation records grouped by function role (`[f, second]`).
    pub eval_records: [Vec<EvalRecord<S>>; 2],
    pub operator_records: Vec<OperatorRecord<S>>,
    /// Atom ids introduced for this trajectory, in creation order.
    pub atom_basis: Vec<AtomId>,
}

impl<S: Scalar> Trajectory<S> {
    fn push_eval(&mut self, record: EvalRecord<S>) {
        self.atom_basis.push(record.grad.single_atom().expect("gradient atoms are fresh"));
        self.eval_records[record.func.0].push(record);
    }

    fn push_operator(&mut self, record: OperatorRecord<S>) {
        // The fresh atom is the output for plain applications and may be a
        // pre-allocated atom (already in the basis) for prox-internal ones.
        if let Some(a) = record.output.single_atom() {
            if !self.atom_basis.contains(&a) {
                self.atom_basis.push(a);
            }
        }
        self.operator_records.push(record);
    }
}

/// Encodes `method.k_steps` iterations from the given start atom(s).
///
/// The caller allocates the starting atoms; everything else is fresh. For
/// primal-dual methods a dual start is required and the second function's
/// records sample the conjugate `h*`.
pub fn encode_method<S: Scalar>(
    enc: &mut Encoder<'_, S>,
    method: &MethodSpec<S>,
    start: AtomId,
    dual_start: Option<AtomId>,
) -> Result<Trajectory<S>, Error> {
    // Pairing errors (e.g. primal-dual on a plain sum) keep their own
    // category; everything else from validation is a parameter rejection.
    admissible_step_range(method.kind, enc.problem())?;
    method
        .validate(enc.problem())
        .map_err(|v| Error::StepOutOfRange(v.to_string()))?;
    if method.kind.is_primal_dual() && dual_start.is_none() {
        return Err(Error::EncoderMisuse(format!(
            "{} needs a dual start atom",
            method.kind
        )));
    }

    let tau = method.tau;
    let half = S::of(0.5);
    let mut traj = Trajectory {
        start: LinearExpr::atom(start),
        dual_start: dual_start.map(LinearExpr::atom),
        output: LinearExpr::zero(),
        dual_output: None,
        eval_records: [Vec::new(), Vec::new()],
        operator_records: Vec::new(),
        atom_basis: Vec::new(),
    };
    traj.atom_basis.push(start);
    if let Some(u) = dual_start {
        traj.atom_basis.push(u);
    }

    let mut x = traj.start.clone();
    let mut u = traj.dual_start.clone();

    for _ in 0..method.k_steps {
        match method.kind {
            MethodKind::Gm => {
                let gf = grad_f(enc, &mut traj, &x);
                let gg = second_gradient(enc, &mut traj, &x)?;
                x = x - (gf + gg).scaled(tau);
            }
            MethodKind::Fbs1 => {
                let gf = grad_f(enc, &mut traj, &x);
                let forward = x - gf.scaled(tau);
                x = second_prox(enc, &mut traj, &forward, tau)?;
            }
            MethodKind::Fbs2 => {
                let gg = second_gradient(enc, &mut traj, &x)?;
                let forward = x - gg.scaled(tau);
                x = prox_f(enc, &mut traj, &forward, tau)?;
            }
            MethodKind::Prs | MethodKind::Drs => {
                let yf = prox_f(enc, &mut traj, &x, tau)?;
                let rf = yf.scaled(S::of(2.0)) - x.clone();
                let yg = second_prox(enc, &mut traj, &rf, tau)?;
                let rg = yg.scaled(S::of(2.0)) - rf;
                x = match method.kind {
                    MethodKind::Prs => rg,
                    _ => (x + rg).scaled(half),
                };
            }
            MethodKind::Cpm | MethodKind::Cvm => {
                let sigma = method.sigma.expect("validated above");
                let u_cur = u.clone().expect("dual start checked above");
                let (v, adj) = enc.encode_operator(&u_cur, OperatorSide::Adjoint)?;
                traj.push_operator(adj);
                let x_next = match method.kind {
                    MethodKind::Cpm => {
                        prox_f(enc, &mut traj, &(x.clone() - v.scaled(tau)), tau)?
                    }
                    _ => {
                        let gf = grad_f(enc, &mut traj, &x);
                        x.clone() - (gf + v).scaled(tau)
                    }
                };
                let over = x_next.clone().scaled(S::of(2.0)) - x;
                let (w, fwd) = enc.encode_operator(&over, OperatorSide::Forward)?;
                traj.push_operator(fwd);
                let (u_next, rec) =
                    enc.encode_prox_step(FUNC_SECOND, &(u_cur + w.scaled(sigma)), sigma)?;
                traj.push_eval(rec);
                x = x_next;
                u = Some(u_next);
            }
        }
    }
    traj.output = x;
    traj.dual_output = u;
    Ok(traj)
}

fn grad_f<S: Scalar>(
    enc: &mut Encoder<'_, S>,
    traj: &mut Trajectory<S>,
    x: &LinearExpr<S>,
) -> LinearExpr<S> {
    let (g, rec) = enc.encode_gradient_eval(FUNC_F, x);
    traj.push_eval(rec);
    g
}

fn prox_f<S: Scalar>(
    enc: &mut Encoder<'_, S>,
    traj: &mut Trajectory<S>,
    input: &LinearExpr<S>,
    step: S,
) -> Result<LinearExpr<S>, Error> {
    let (y, rec) = enc.encode_prox_step(FUNC_F, input, step)?;
    traj.push_eval(rec);
    Ok(y)
}

/// Gradient of the second function at `x`: direct for a sum, chain rule
/// `M^T grad h(M x)` for a composite.
fn second_gradient<S: Scalar>(
    enc: &mut Encoder<'_, S>,
    traj: &mut Trajectory<S>,
    x: &LinearExpr<S>,
) -> Result<LinearExpr<S>, Error> {
    match enc.problem() {
        ProblemConfig::Sum(_) => {
            let (g, rec) = enc.encode_gradient_eval(FUNC_SECOND, x);
            traj.push_eval(rec);
            Ok(g)
        }
        ProblemConfig::Composite(_) => {
            let (w, fwd) = enc.encode_operator(x, OperatorSide::Forward)?;
            traj.push_operator(fwd);
            let (s, rec) = enc.encode_gradient_eval(FUNC_SECOND, &w);
            traj.push_eval(rec);
            let (v, adj) = enc.encode_operator(&s, OperatorSide::Adjoint)?;
            traj.push_operator(adj);
            Ok(v)
        }
    }
}

/// Prox of the second function: direct for a sum; for a composite the prox
/// of `h(M.)` is encoded through `y = q - t M^T s`, `s` a subgradient of
/// `h` at `M y` (its exact optimality condition).
fn second_prox<S: Scalar>(
    enc: &mut Encoder<'_, S>,
    traj: &mut Trajectory<S>,
    input: &LinearExpr<S>,
    step: S,
) -> Result<LinearExpr<S>, Error> {
    match enc.problem() {
        ProblemConfig::Sum(_) => {
            let (y, rec) = enc.encode_prox_step(FUNC_SECOND, input, step)?;
            traj.push_eval(rec);
            Ok(y)
        }
        ProblemConfig::Composite(_) => {
            if !(step.is_finite() && step > S::zero()) {
                return Err(Error::EncoderMisuse(format!(
                    "prox step must be finite and positive, got {step}"
                )));
            }
            let v_atom = enc.fresh_atom(format!("MTs_{}", enc.n_atoms()));
            traj.atom_basis.push(v_atom);
            let v = LinearExpr::atom(v_atom);
            let y = input.clone() - v.clone().scaled(step);
            let (w, fwd) = enc.encode_operator(&y, OperatorSide::Forward)?;
            traj.push_operator(fwd);
            let (s, rec) = enc.encode_gradient_eval(FUNC_SECOND, &w);
            traj.push_eval(rec);
            traj.push_operator(OperatorRecord {
                input: s,
                output: v,
                side: OperatorSide::Adjoint,
            });
            Ok(y)
        }
    }
}

/// Per-role function data: the class and every record sampled from it
/// across both trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionData<S> {
    pub class: FunctionClass<S>,
    pub records: Vec<EvalRecord<S>>,
}

/// Two coupled trajectories of one method plus everything needed to state
/// the contraction performance-estimation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionSetup<S> {
    pub method: MethodSpec<S>,
    pub problem: ProblemConfig<S>,
    pub traj_a: Trajectory<S>,
    pub traj_b: Trajectory<S>,
    /// Interpolated functions by role, with merged records.
    pub functions: Vec<FunctionData<S>>,
    pub forward_records: Vec<OperatorRecord<S>>,
    pub adjoint_records: Vec<OperatorRecord<S>>,
    pub operator: Option<OperatorBound<S>>,
    /// Differences whose squared norms bound the starting distance.
    pub start_diffs: Vec<LinearExpr<S>>,
    /// Differences whose squared norms the objective maximizes.
    pub output_diffs: Vec<LinearExpr<S>>,
    pub atom_labels: Vec<String>,
    pub value_labels: Vec<String>,
}

impl<S: Scalar> ContractionSetup<S> {
    pub fn n_atoms(&self) -> usize {
        self.atom_labels.len()
    }

    pub fn n_values(&self) -> usize {
        self.value_labels.len()
    }
}

/// Encodes the two-trajectory contraction setup of `method` on `problem`.
///
/// Both runs share the problem data (same function identities, same
/// operator), start from distinct free atoms, and for primal-dual methods
/// the distance metric couples primal and dual parts with unit weights.
pub fn contraction_setup<S: Scalar>(
    method: &MethodSpec<S>,
    problem: &ProblemConfig<S>,
) -> Result<ContractionSetup<S>, Error> {
    let mut enc = Encoder::new(problem);
    let pd = method.kind.is_primal_dual();

    let xa = enc.fresh_atom("x_a");
    let ua = pd.then(|| enc.fresh_atom("u_a"));
    let traj_a = encode_method(&mut enc, method, xa, ua)?;
    let xb = enc.fresh_atom("x_b");
    let ub = pd.then(|| enc.fresh_atom("u_b"));
    let traj_b = encode_method(&mut enc, method, xb, ub)?;

    let second_class = match problem {
        ProblemConfig::Sum(p) => p.g,
        ProblemConfig::Composite(p) if pd => conjugate_class(&p.h),
        ProblemConfig::Composite(p) => p.h,
    };
    let functions = vec![
        FunctionData {
            class: *problem.f_class(),
            records: [&traj_a, &traj_b]
                .iter()
                .flat_map(|t| t.eval_records[FUNC_F.0].iter().cloned())
                .collect(),
        },
        FunctionData {
            class: second_class,
            records: [&traj_a, &traj_b]
                .iter()
                .flat_map(|t| t.eval_records[FUNC_SECOND.0].iter().cloned())
                .collect(),
        },
    ];

    let mut forward_records = Vec::new();
    let mut adjoint_records = Vec::new();
    for t in [&traj_a, &traj_b] {
        for r in &t.operator_records {
            match r.side {
                OperatorSide::Forward => forward_records.push(r.clone()),
                OperatorSide::Adjoint => adjoint_records.push(r.clone()),
            }
        }
    }

    let mut start_diffs = vec![traj_a.start.clone() - traj_b.start.clone()];
    let mut output_diffs = vec![traj_a.output.clone() - traj_b.output.clone()];
    if pd {
        start_diffs.push(
            traj_a.dual_start.clone().unwrap() - traj_b.dual_start.clone().unwrap(),
        );
        output_diffs.push(
            traj_a.dual_output.clone().unwrap() - traj_b.dual_output.clone().unwrap(),
        );
    }

    Ok(ContractionSetup {
        method: *method,
        problem: *problem,
        traj_a,
        traj_b,
        functions,
        forward_records,
        adjoint_records,
        operator: problem.operator().copied(),
        start_diffs,
        output_diffs,
        atom_labels: enc.atom_labels,
        value_labels: enc.value_labels,
    })
}
