//! Symbolic vectors over an atom basis and affine functionals of the
//! induced Gram matrix and function-value variables.
//!
//! An *atom* is an abstract vector of unknown dimension (a starting point, a
//! gradient, or an operator image). Everything a method produces is a
//! [`LinearExpr`] in atoms, and every scalar quantity the analysis
//! constrains — inner products, squared norms, function values — is an
//! [`AffineExpr`] in the Gram entries `G[i][j] = <atom_i, atom_j>` and the
//! value variables.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use crate::Scalar;

/// Index of a basis vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtomId(pub usize);

/// Index of a scalar function-value variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueId(pub usize);

/// Identity of a function shared across coupled trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FuncId(pub usize);

/// A vector written as a finite linear combination of atoms.
///
/// Zero coefficients are never stored, so equality of the term maps is
/// equality of the expressions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearExpr<S> {
    terms: BTreeMap<AtomId, S>,
}

impl<S: Scalar> LinearExpr<S> {
    pub fn zero() -> Self {
        LinearExpr { terms: BTreeMap::new() }
    }

    pub fn atom(id: AtomId) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(id, S::one());
        LinearExpr { terms }
    }

    pub fn coeff(&self, id: AtomId) -> S {
        self.terms.get(&id).copied().unwrap_or_else(S::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (AtomId, S)> + '_ {
        self.terms.iter().map(|(&a, &c)| (a, c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The atom id if the expression is exactly one atom with coefficient 1.
    pub fn single_atom(&self) -> Option<AtomId> {
        let mut it = self.terms.iter();
        match (it.next(), it.next()) {
            (Some((&a, &c)), None) if c == S::one() => Some(a),
            _ => None,
        }
    }

    pub fn scaled(&self, factor: S) -> Self {
        let mut out = LinearExpr::zero();
        for (&a, &c) in &self.terms {
            out.accumulate(a, c * factor);
        }
        out
    }

    /// Largest atom index used, if any.
    pub fn max_atom(&self) -> Option<usize> {
        self.terms.keys().next_back().map(|a| a.0)
    }

    fn accumulate(&mut self, id: AtomId, c: S) {
        let entry = self.terms.entry(id).or_insert_with(S::zero);
        *entry += c;
        if *entry == S::zero() {
            self.terms.remove(&id);
        }
    }

    /// Evaluates the expression given concrete coordinates per atom.
    pub fn eval_coords(&self, coords: &[Vec<S>], dim: usize) -> Vec<S> {
        let mut out = vec![S::zero(); dim];
        for (&AtomId(a), &c) in &self.terms {
            for (o, &x) in out.iter_mut().zip(&coords[a]) {
                *o += c * x;
            }
        }
        out
    }
}

impl<S: Scalar> Add for LinearExpr<S> {
    type Output = LinearExpr<S>;
    fn add(mut self, rhs: LinearExpr<S>) -> LinearExpr<S> {
        for (a, c) in rhs.terms {
            self.accumulate(a, c);
        }
        self
    }
}

impl<S: Scalar> Sub for LinearExpr<S> {
    type Output = LinearExpr<S>;
    fn sub(mut self, rhs: LinearExpr<S>) -> LinearExpr<S> {
        for (a, c) in rhs.terms {
            self.accumulate(a, -c);
        }
        self
    }
}

impl<S: Scalar> Neg for LinearExpr<S> {
    type Output = LinearExpr<S>;
    fn neg(self) -> LinearExpr<S> {
        self.scaled(-S::one())
    }
}

impl<S: Scalar> Mul<S> for LinearExpr<S> {
    type Output = LinearExpr<S>;
    fn mul(self, rhs: S) -> LinearExpr<S> {
        self.scaled(rhs)
    }
}

/// A dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> SymMatrix<S> {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![S::zero(); n * n] }
    }

    /// Gram matrix of concrete vectors: `G[i][j] = <vecs[i], vecs[j]>`.
    pub fn gram_of(vecs: &[Vec<S>]) -> Self {
        let n = vecs.len();
        let mut g = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let dot = vecs[i].iter().zip(&vecs[j]).map(|(&a, &b)| a * b).sum();
                g.set(i, j, dot);
            }
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn trace(&self) -> S {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

/// An affine functional `sum c_ij G[i][j] + sum d_k value_k + constant`.
///
/// Gram keys are stored with `i <= j`; a coefficient on `(i, j)` multiplies
/// the single symmetric entry `G[i][j]` (so `sq_norm` puts `2 c_i c_j` on
/// off-diagonal keys).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr<S> {
    gram: BTreeMap<(usize, usize), S>,
    values: BTreeMap<usize, S>,
    constant: S,
}

impl<S: Scalar> Default for AffineExpr<S> {
    fn default() -> Self {
        AffineExpr::zero()
    }
}

impl<S: Scalar> AffineExpr<S> {
    pub fn zero() -> Self {
        AffineExpr {
            gram: BTreeMap::new(),
            values: BTreeMap::new(),
            constant: S::zero(),
        }
    }

    pub fn constant(c: S) -> Self {
        let mut e = AffineExpr::zero();
        e.constant = c;
        e
    }

    pub fn value(id: ValueId) -> Self {
        let mut e = AffineExpr::zero();
        e.add_value(id, S::one());
        e
    }

    /// `<x, y>` as a functional of the Gram entries.
    pub fn inner(x: &LinearExpr<S>, y: &LinearExpr<S>) -> Self {
        let mut e = AffineExpr::zero();
        for (ax, cx) in x.terms() {
            for (ay, cy) in y.terms() {
                e.add_gram(ax.0, ay.0, cx * cy);
            }
        }
        e
    }

    /// `||x||^2` as a functional of the Gram entries.
    pub fn sq_norm(x: &LinearExpr<S>) -> Self {
        AffineExpr::inner(x, x)
    }

    pub fn add_gram(&mut self, i: usize, j: usize, c: S) {
        if c == S::zero() {
            return;
        }
        let key = if i <= j { (i, j) } else { (j, i) };
        let entry = self.gram.entry(key).or_insert_with(S::zero);
        *entry += c;
        if *entry == S::zero() {
            self.gram.remove(&key);
        }
    }

    pub fn add_value(&mut self, id: ValueId, c: S) {
        if c == S::zero() {
            return;
        }
        let entry = self.values.entry(id.0).or_insert_with(S::zero);
        *entry += c;
        if *entry == S::zero() {
            self.values.remove(&id.0);
        }
    }

    pub fn add_constant(&mut self, c: S) {
        self.constant += c;
    }

    pub fn scaled(&self, factor: S) -> Self {
        let mut out = AffineExpr::zero();
        for (&(i, j), &c) in &self.gram {
            out.add_gram(i, j, c * factor);
        }
        for (&k, &c) in &self.values {
            out.add_value(ValueId(k), c * factor);
        }
        out.constant = self.constant * factor;
        out
    }

    pub fn gram_terms(&self) -> impl Iterator<Item = ((usize, usize), S)> + '_ {
        self.gram.iter().map(|(&k, &c)| (k, c))
    }

    pub fn value_terms(&self) -> impl Iterator<Item = (usize, S)> + '_ {
        self.values.iter().map(|(&k, &c)| (k, c))
    }

    pub fn constant_term(&self) -> S {
        self.constant
    }

    /// Largest atom index referenced by the Gram part, if any.
    pub fn max_atom(&self) -> Option<usize> {
        self.gram.keys().map(|&(_, j)| j).max()
    }

    pub fn max_value(&self) -> Option<usize> {
        self.values.keys().next_back().copied()
    }

    pub fn eval(&self, gram: &SymMatrix<S>, values: &[S]) -> S {
        let mut acc = self.constant;
        for (&(i, j), &c) in &self.gram {
            acc += c * gram.get(i, j);
        }
        for (&k, &c) in &self.values {
            acc += c * values[k];
        }
        acc
    }
}

impl<S: Scalar> Add for AffineExpr<S> {
    type Output = AffineExpr<S>;
    fn add(mut self, rhs: AffineExpr<S>) -> AffineExpr<S> {
        for (&(i, j), &c) in &rhs.gram {
            self.add_gram(i, j, c);
        }
        for (&k, &c) in &rhs.values {
            self.add_value(ValueId(k), c);
        }
        self.constant += rhs.constant;
        self
    }
}

impl<S: Scalar> Sub for AffineExpr<S> {
    type Output = AffineExpr<S>;
    fn sub(self, rhs: AffineExpr<S>) -> AffineExpr<S> {
        self + rhs.scaled(-S::one())
    }
}

impl<S: Scalar> Neg for AffineExpr<S> {
    type Output = AffineExpr<S>;
    fn neg(self) -> AffineExpr<S> {
        self.scaled(-S::one())
    }
}

impl<S: Scalar> Mul<S> for AffineExpr<S> {
    type Output = AffineExpr<S>;
    fn mul(self, rhs: S) -> AffineExpr<S> {
        self.scaled(rhs)
    }
}

/// Constraint sense: the expression is pinned to zero or kept nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Ge,
}

/// A scalar affine constraint `expr == 0` or `expr >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint<S> {
    pub expr: AffineExpr<S>,
    pub sense: Sense,
    pub label: String,
}

impl<S: Scalar> AffineConstraint<S> {
    pub fn eq(expr: AffineExpr<S>, label: impl Into<String>) -> Self {
        AffineConstraint { expr, sense: Sense::Eq, label: label.into() }
    }

    pub fn ge(expr: AffineExpr<S>, label: impl Into<String>) -> Self {
        AffineConstraint { expr, sense: Sense::Ge, label: label.into() }
    }

    /// Signed residual at a concrete point (feasible iff `== 0` / `>= 0`).
    pub fn residual(&self, gram: &SymMatrix<S>, values: &[S]) -> S {
        self.expr.eval(gram, values)
    }
}

/// A symmetric-matrix-valued affine map required to be positive
/// semidefinite; entries are stored for `i <= j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock<S> {
    dim: usize,
    entries: Vec<AffineExpr<S>>,
    pub label: String,
}

impl<S: Scalar> PsdBlock<S> {
    pub fn from_fn(
        dim: usize,
        label: impl Into<String>,
        mut f: impl FnMut(usize, usize) -> AffineExpr<S>,
    ) -> Self {
        let mut entries = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in i..dim {
                entries.push(f(i, j));
            }
        }
        PsdBlock { dim, entries, label: label.into() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> &AffineExpr<S> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        &self.entries[i * self.dim - i * (i + 1) / 2 + j]
    }

    pub fn eval(&self, gram: &SymMatrix<S>, values: &[S]) -> SymMatrix<S> {
        let mut m = SymMatrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in i..self.dim {
                m.set(i, j, self.entry(i, j).eval(gram, values));
            }
        }
        m
    }

    pub fn max_atom(&self) -> Option<usize> {
        self.entries.iter().filter_map(|e| e.max_atom()).max()
    }

    pub fn max_value(&self) -> Option<usize> {
        self.entries.iter().filter_map(|e| e.max_value()).max()
    }
}
