//! Interpolation conditions: the exact constraints under which sampled
//! first-order data extends to a function of a given class, or sampled
//! input/output pairs extend to a linear operator of bounded norm.
//!
//! These conditions are what make the semidefinite lifting *exact* rather
//! than a relaxation: a Gram matrix satisfies them if and only if concrete
//! functions/operators realizing the worst case exist.

use crate::expr::{AffineConstraint, AffineExpr, FuncId, LinearExpr, PsdBlock, ValueId};
use crate::model::{FunctionClass, OperatorBound};
use crate::{Error, Scalar};

/// One first-order evaluation: `grad` is a (sub)gradient of function `func`
/// at `point`, where the function value is `value`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord<S> {
    pub point: LinearExpr<S>,
    pub grad: LinearExpr<S>,
    pub value: ValueId,
    pub func: FuncId,
}

/// Which map of the operator pair a record samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorSide {
    /// `output = M input`.
    Forward,
    /// `output = M^T input`.
    Adjoint,
}

/// One sampled application of the linear operator or its adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorRecord<S> {
    pub input: LinearExpr<S>,
    pub output: LinearExpr<S>,
    pub side: OperatorSide,
}

/// Interpolation constraints for `records` all belonging to one function of
/// `class`: one inequality per ordered pair of distinct records.
///
/// For records `i != j` with data `(x, g, f)` the constraint is
///
/// ```text
/// f_i - f_j - <g_j, x_i - x_j>
///   - [ (1/L)||g_i - g_j||^2 + mu ||x_i - x_j||^2
///       - (2 mu / L) <g_i - g_j, x_i - x_j> ] / (2 (1 - mu/L))  >=  0,
/// ```
///
/// and `L = +inf` drops the `1/L` terms exactly (leaving the strongly
/// convex subgradient inequality).
pub fn class_constraints<S: Scalar>(
    records: &[EvalRecord<S>],
    class: &FunctionClass<S>,
) -> Vec<AffineConstraint<S>> {
    let mu = class.mu();
    let inv_l = class.lipschitz().recip_ext();
    let half_inv_denom = (S::of(2.0) * (S::one() - mu * inv_l)).recip();

    let mut out = Vec::with_capacity(records.len().saturating_sub(1) * records.len());
    for (i, ri) in records.iter().enumerate() {
        for (j, rj) in records.iter().enumerate() {
            if i == j {
                continue;
            }
            let dx = ri.point.clone() - rj.point.clone();
            let dg = ri.grad.clone() - rj.grad.clone();
            let mut expr = AffineExpr::value(ri.value) - AffineExpr::value(rj.value)
                - AffineExpr::inner(&rj.grad, &dx);
            let bracket = AffineExpr::sq_norm(&dg) * inv_l
                + AffineExpr::sq_norm(&dx) * mu
                - AffineExpr::inner(&dg, &dx) * (S::of(2.0) * mu * inv_l);
            expr = expr - bracket * half_inv_denom;
            out.push(AffineConstraint::ge(
                expr,
                format!("f{} interp ({i},{j})", ri.func.0),
            ));
        }
    }
    out
}

/// Constraints under which operator records extend to a single linear map
/// `M` with `||M|| <= op.norm_bound()`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorConstraints<S> {
    /// `<y_i, u_j> = <x_i, v_j>` for every forward pair `(x_i, y_i)` and
    /// adjoint pair `(u_j, v_j)` (consistency of `M` with `M^T`).
    pub equalities: Vec<AffineConstraint<S>>,
    /// `L^2 Gram(inputs) - Gram(outputs) >= 0` per side (norm bound).
    pub blocks: Vec<PsdBlock<S>>,
}

pub fn operator_constraints<S: Scalar>(
    forward: &[OperatorRecord<S>],
    adjoint: &[OperatorRecord<S>],
    op: &OperatorBound<S>,
) -> Result<OperatorConstraints<S>, Error> {
    if forward.iter().any(|r| r.side != OperatorSide::Forward) {
        return Err(Error::EncoderMisuse(
            "adjoint record passed in the forward list".into(),
        ));
    }
    if adjoint.iter().any(|r| r.side != OperatorSide::Adjoint) {
        return Err(Error::EncoderMisuse(
            "forward record passed in the adjoint list".into(),
        ));
    }
    let l2 = op.norm_bound() * op.norm_bound();

    let mut equalities = Vec::with_capacity(forward.len() * adjoint.len());
    for (i, fwd) in forward.iter().enumerate() {
        for (j, adj) in adjoint.iter().enumerate() {
            let expr = AffineExpr::inner(&fwd.output, &adj.input)
                - AffineExpr::inner(&fwd.input, &adj.output);
            equalities.push(AffineConstraint::eq(expr, format!("adjoint consistency ({i},{j})")));
        }
    }

    let mut blocks = Vec::new();
    for (records, name) in [(forward, "forward"), (adjoint, "adjoint")] {
        if records.is_empty() {
            continue;
        }
        blocks.push(PsdBlock::from_fn(records.len(), format!("{name} norm bound"), |i, j| {
            AffineExpr::inner(&records[i].input, &records[j].input) * l2
                - AffineExpr::inner(&records[i].output, &records[j].output)
        }));
    }
    Ok(OperatorConstraints { equalities, blocks })
}

/// Class of the convex conjugate: `(mu, L)* = (1/L, 1/mu)` with the
/// conventions `1/inf = 0` and `1/0 = +inf`.
pub fn conjugate_class<S: Scalar>(class: &FunctionClass<S>) -> FunctionClass<S> {
    FunctionClass::new(class.lipschitz().recip_ext(), class.mu().recip_ext())
        .expect("conjugate of a valid class is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{AtomId, SymMatrix};
    use crate::model::FunctionClass;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn class(mu: f64, l: f64) -> FunctionClass<f64> {
        FunctionClass::new(mu, l).unwrap()
    }

    /// Records for the 1-D quadratic `a x^2 / 2` at the given points, using
    /// one atom per point and per gradient.
    ///
    /// Returns `(records, gram, values)` ready for residual evaluation.
    fn quad_records_1d(a: f64, points: &[f64]) -> (Vec<EvalRecord<f64>>, SymMatrix<f64>, Vec<f64>) {
        let mut vecs = Vec::new();
        let mut records = Vec::new();
        let mut values = Vec::new();
        for (k, &x) in points.iter().enumerate() {
            vecs.push(vec![x]);
            vecs.push(vec![a * x]);
            records.push(EvalRecord {
                point: LinearExpr::atom(AtomId(2 * k)),
                grad: LinearExpr::atom(AtomId(2 * k + 1)),
                value: ValueId(k),
                func: FuncId(0),
            });
            values.push(a * x * x / 2.0);
        }
        (records, SymMatrix::gram_of(&vecs), values)
    }

    fn residuals(
        records: &[EvalRecord<f64>],
        cls: &FunctionClass<f64>,
        gram: &SymMatrix<f64>,
        values: &[f64],
    ) -> Vec<f64> {
        class_constraints(records, cls)
            .iter()
            .map(|c| c.residual(gram, values))
            .collect()
    }

    #[test]
    fn pair_count_is_n_times_n_minus_1() {
        let (records, _, _) = quad_records_1d(1.0, &[0.0, 1.0, -2.0, 0.5]);
        assert_eq!(class_constraints(&records, &class(0.0, 2.0)).len(), 12);
        let (one, _, _) = quad_records_1d(1.0, &[3.0]);
        assert!(class_constraints(&one, &class(0.0, 2.0)).is_empty());
    }

    #[test]
    fn extreme_quadratics_are_tight() {
        // Curvature exactly mu or exactly L makes every pair inequality an
        // equality; strictly interior curvature makes them strict.
        let cls = class(0.5, 2.0);
        for a in [0.5, 2.0] {
            let (records, gram, values) = quad_records_1d(a, &[-1.0, 0.7, 2.0]);
            for r in residuals(&records, &cls, &gram, &values) {
                assert!(r.abs() < 1e-12, "a = {a}: residual {r}");
            }
        }
        let (records, gram, values) = quad_records_1d(1.1, &[-1.0, 0.7, 2.0]);
        for r in residuals(&records, &cls, &gram, &values) {
            assert!(r > 1e-6, "interior curvature should be strictly feasible");
        }
    }

    #[test]
    fn out_of_class_curvature_is_detected() {
        let cls = class(0.5, 2.0);
        for a in [0.4, 2.2] {
            let (records, gram, values) = quad_records_1d(a, &[0.0, 1.0]);
            let rs = residuals(&records, &cls, &gram, &values);
            assert!(
                rs.iter().any(|&r| r < -1e-9),
                "a = {a} should violate some pair, got {rs:?}"
            );
        }
    }

    #[test]
    fn nonsmooth_class_keeps_strong_convexity_term() {
        // L = inf reduces to f_i - f_j - <g_j, dx> - (mu/2)||dx||^2 >= 0.
        let cls = class(0.5, f64::INFINITY);
        let (records, gram, values) = quad_records_1d(0.5, &[-1.0, 2.0]);
        for r in residuals(&records, &cls, &gram, &values) {
            assert!(r.abs() < 1e-12, "curvature mu should be tight, got {r}");
        }
        let (records, gram, values) = quad_records_1d(5.0, &[-1.0, 2.0]);
        for r in residuals(&records, &cls, &gram, &values) {
            assert!(r > 0.0);
        }
        let (records, gram, values) = quad_records_1d(0.4, &[-1.0, 2.0]);
        assert!(residuals(&records, &cls, &gram, &values).iter().any(|&r| r < -1e-9));
    }

    /// Multi-dimensional quadratic `x^T A x / 2` with `A = Q diag(eigs) Q^T`
    /// for a random rotation `Q`; returns per-point `(x, g, f)` data.
    fn quad_records_nd(
        eigs: &[f64],
        points: &[Vec<f64>],
        rng: &mut StdRng,
    ) -> (Vec<EvalRecord<f64>>, SymMatrix<f64>, Vec<f64>) {
        let d = eigs.len();
        // Random orthogonal Q via Gram-Schmidt on a random matrix.
        let mut q: Vec<Vec<f64>> = Vec::new();
        while q.len() < d {
            let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            for u in &q {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= dot * ui;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for vi in &mut v {
                    *vi /= norm;
                }
                q.push(v);
            }
        }
        let apply_a = |x: &[f64]| -> Vec<f64> {
            // A x = sum_k eig_k <q_k, x> q_k
            let mut out = vec![0.0; d];
            for (k, qk) in q.iter().enumerate() {
                let dot: f64 = qk.iter().zip(x).map(|(a, b)| a * b).sum();
                for (o, qi) in out.iter_mut().zip(qk) {
                    *o += eigs[k] * dot * qi;
                }
            }
            out
        };

        let mut vecs = Vec::new();
        let mut records = Vec::new();
        let mut values = Vec::new();
        for (k, x) in points.iter().enumerate() {
            let g = apply_a(x);
            let f: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / 2.0;
            vecs.push(x.clone());
            vecs.push(g);
            records.push(EvalRecord {
                point: LinearExpr::atom(AtomId(2 * k)),
                grad: LinearExpr::atom(AtomId(2 * k + 1)),
                value: ValueId(k),
                func: FuncId(0),
            });
            values.push(f);
        }
        (records, SymMatrix::gram_of(&vecs), values)
    }

    #[test]
    fn random_in_class_quadratics_are_feasible() {
        let mut rng = StdRng::seed_from_u64(7);
        let cls = class(0.3, 2.5);
        for _ in 0..50 {
            let d = rng.random_range(2..5);
            let eigs: Vec<f64> = (0..d).map(|_| rng.random_range(0.3..2.5)).collect();
            let points: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let (records, gram, values) = quad_records_nd(&eigs, &points, &mut rng);
            for c in class_constraints(&records, &cls) {
                let r = c.residual(&gram, &values);
                assert!(r >= -1e-9, "{}: residual {r}", c.label);
            }
        }
    }

    #[test]
    fn random_out_of_class_quadratics_are_detected() {
        // Diagonal quadratic with one eigenvalue pushed outside the class;
        // including two points along the offending axis guarantees a violated
        // pair, because restricted to that axis the function is 1-D with
        // out-of-range curvature.
        let mut rng = StdRng::seed_from_u64(8);
        let cls = class(0.3, 2.5);
        for trial in 0..50 {
            let d = rng.random_range(2..5usize);
            let mut eigs: Vec<f64> = (0..d).map(|_| rng.random_range(0.3..2.5)).collect();
            eigs[0] = if trial % 2 == 0 { 2.5 * 1.2 } else { 0.3 * 0.8 };
            let mut along_axis = vec![0.0; d];
            along_axis[0] = rng.random_range(0.5..2.0);
            let mut points = vec![vec![0.0; d], along_axis];
            points.push((0..d).map(|_| rng.random_range(-2.0..2.0)).collect());

            let mut vecs = Vec::new();
            let mut records = Vec::new();
            let mut values = Vec::new();
            for (k, x) in points.iter().enumerate() {
                let g: Vec<f64> = x.iter().zip(&eigs).map(|(xi, ei)| xi * ei).collect();
                let f: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / 2.0;
                vecs.push(x.clone());
                vecs.push(g);
                records.push(EvalRecord {
                    point: LinearExpr::atom(AtomId(2 * k)),
                    grad: LinearExpr::atom(AtomId(2 * k + 1)),
                    value: ValueId(k),
                    func: FuncId(0),
                });
                values.push(f);
            }
            let gram = SymMatrix::gram_of(&vecs);
            let rs = residuals(&records, &cls, &gram, &values);
            assert!(
                rs.iter().any(|&r| r < -1e-9),
                "trial {trial}: expected a violation, got {rs:?}"
            );
        }
    }

    fn op_record(
        input_atom: usize,
        output_atom: usize,
        side: OperatorSide,
    ) -> OperatorRecord<f64> {
        OperatorRecord {
            input: LinearExpr::atom(AtomId(input_atom)),
            output: LinearExpr::atom(AtomId(output_atom)),
            side,
        }
    }

    fn min_eig(m: &SymMatrix<f64>) -> f64 {
        let n = m.n();
        let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| m.get(i, j));
        dm.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn operator_constraint_structure() {
        let op = OperatorBound::new(2.0).unwrap();
        let fwd = vec![op_record(0, 1, OperatorSide::Forward)];
        let adj = vec![op_record(2, 3, OperatorSide::Adjoint)];
        let oc = operator_constraints(&fwd, &adj, &op).unwrap();
        assert_eq!(oc.equalities.len(), 1);
        assert_eq!(oc.blocks.len(), 2);
        assert_eq!(oc.blocks[0].dim(), 1);

        // Sides are checked.
        assert!(matches!(
            operator_constraints(&adj, &fwd, &op),
            Err(Error::EncoderMisuse(_))
        ));

        // Forward-only data yields no equalities and one block.
        let oc = operator_constraints(&fwd, &[], &op).unwrap();
        assert!(oc.equalities.is_empty());
        assert_eq!(oc.blocks.len(), 1);
    }

    /// Evaluates operator records on a concrete matrix `M` (2x2 here),
    /// building coordinates for atoms `x0, y0=Mx0, u0, v0=M^T u0, ...`.
    #[test]
    fn concrete_operator_data_is_feasible_iff_norm_bounded() {
        let m = [[1.0, 0.8], [0.0, 1.2]];
        let mt = [[m[0][0], m[1][0]], [m[0][1], m[1][1]]];
        let matvec = |a: &[[f64; 2]; 2], x: &[f64]| {
            vec![a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
        };
        let xs = [vec![1.0, 0.0], vec![0.3, -0.7]];
        let us = [vec![0.5, 0.5]];
        let mut vecs = Vec::new();
        let mut fwd = Vec::new();
        let mut adj = Vec::new();
        for x in &xs {
            let i = vecs.len();
            vecs.push(x.clone());
            vecs.push(matvec(&m, x));
            fwd.push(op_record(i, i + 1, OperatorSide::Forward));
        }
        for u in &us {
            let i = vecs.len();
            vecs.push(u.clone());
            vecs.push(matvec(&mt, u));
            adj.push(op_record(i, i + 1, OperatorSide::Adjoint));
        }
        let gram = SymMatrix::gram_of(&vecs);

        // ||M|| ~= 1.583 for this matrix, so bound 1.6 is feasible...
        let oc = operator_constraints(&fwd, &adj, &OperatorBound::new(1.6).unwrap()).unwrap();
        for eq in &oc.equalities {
            assert!(eq.residual(&gram, &[]).abs() < 1e-12);
        }
        for b in &oc.blocks {
            assert!(min_eig(&b.eval(&gram, &[])) >= -1e-12);
        }

        // ...and bound 1.2 is not: some norm block loses semidefiniteness.
        let oc = operator_constraints(&fwd, &adj, &OperatorBound::new(1.2).unwrap()).unwrap();
        let worst = oc
            .blocks
            .iter()
            .map(|b| min_eig(&b.eval(&gram, &[])))
            .fold(f64::INFINITY, f64::min);
        assert!(worst < -1e-6, "expected violation, min eig {worst}");
    }

    #[test]
    fn conjugate_class_examples() {
        let c = conjugate_class(&class(0.0, 0.2));
        assert_eq!(c.mu(), 5.0);
        assert_eq!(c.lipschitz(), f64::INFINITY);
        let c = conjugate_class(&class(0.5, 2.0));
        assert_eq!(c.mu(), 0.5);
        assert_eq!(c.lipschitz(), 2.0);
    }

    proptest! {
        #[test]
        fn conjugate_is_an_involution(mu in 0.0f64..5.0, gap in 1e-3f64..10.0, inf in proptest::bool::ANY) {
            // Double reciprocation of a finite modulus costs at most a couple
            // of ulps, so the round trip is compared relatively.
            fn close(a: f64, b: f64) -> bool {
                if a == b {
                    return true; // covers 0 and infinity exactly
                }
                (a - b).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs())
            }
            let l = if inf { f64::INFINITY } else { mu + gap };
            let cls = class(mu, l);
            let back = conjugate_class(&conjugate_class(&cls));
            prop_assert!(close(back.mu(), cls.mu()));
            prop_assert!(close(back.lipschitz(), cls.lipschitz()));
        }

        #[test]
        fn constraint_count_always_pairs(n in 1usize..6) {
            let points: Vec<f64> = (0..n).map(|k| k as f64).collect();
            let (records, _, _) = quad_records_1d(1.0, &points);
            prop_assert_eq!(
                class_constraints(&records, &class(0.1, 3.0)).len(),
                n * (n - 1)
            );
        }
    }
}
