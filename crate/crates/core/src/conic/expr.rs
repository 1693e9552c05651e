//! Affine scalar and symmetric-matrix expressions and the problem builder.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Handle to a scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Affine scalar expression `constant + Σ a_i y_i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub(crate) constant: f64,
    pub(crate) terms: BTreeMap<usize, f64>,
}

impl LinExpr {
    pub fn constant(value: f64) -> Self {
        Self {
            constant: value,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    /// Coefficients in increasing variable order.
    pub fn terms(&self) -> impl Iterator<Item = (Var, f64)> + '_ {
        self.terms.iter().map(|(i, a)| (Var(*i), *a))
    }

    pub fn coefficient(&self, var: Var) -> f64 {
        self.terms.get(&var.0).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(i, a)| a * values[*i]).sum::<f64>()
    }

    fn add_term(&mut self, index: usize, coeff: f64) {
        *self.terms.entry(index).or_insert(0.0) += coeff;
    }

    fn scaled(mut self, s: f64) -> Self {
        self.constant *= s;
        for a in self.terms.values_mut() {
            *a *= s;
        }
        self
    }
}

impl From<f64> for LinExpr {
    fn from(v: f64) -> Self {
        LinExpr::constant(v)
    }
}

impl From<Var> for LinExpr {
    fn from(v: Var) -> Self {
        let mut e = LinExpr::default();
        e.add_term(v.0, 1.0);
        e
    }
}

impl From<&LinExpr> for LinExpr {
    fn from(e: &LinExpr) -> Self {
        e.clone()
    }
}

impl<T: Into<LinExpr>> Add<T> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: T) -> LinExpr {
        self += rhs;
        self
    }
}

impl<T: Into<LinExpr>> AddAssign<T> for LinExpr {
    fn add_assign(&mut self, rhs: T) {
        let rhs = rhs.into();
        self.constant += rhs.constant;
        for (i, a) in rhs.terms {
            self.add_term(i, a);
        }
    }
}

impl<T: Into<LinExpr>> Sub<T> for LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: T) -> LinExpr {
        self + rhs.into().scaled(-1.0)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, s: f64) -> LinExpr {
        self.scaled(s)
    }
}

impl Mul<LinExpr> for f64 {
    type Output = LinExpr;
    fn mul(self, e: LinExpr) -> LinExpr {
        e.scaled(self)
    }
}

impl Mul<f64> for Var {
    type Output = LinExpr;
    fn mul(self, s: f64) -> LinExpr {
        LinExpr::from(self).scaled(s)
    }
}

impl Mul<Var> for f64 {
    type Output = LinExpr;
    fn mul(self, v: Var) -> LinExpr {
        LinExpr::from(v).scaled(self)
    }
}

impl<T: Into<LinExpr>> Add<T> for Var {
    type Output = LinExpr;
    fn add(self, rhs: T) -> LinExpr {
        LinExpr::from(self) + rhs
    }
}

impl<T: Into<LinExpr>> Sub<T> for Var {
    type Output = LinExpr;
    fn sub(self, rhs: T) -> LinExpr {
        LinExpr::from(self) - rhs
    }
}

impl Neg for Var {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        LinExpr::from(self).scaled(-1.0)
    }
}

/// Sum of scalar expressions.
pub fn sum<I, T>(items: I) -> LinExpr
where
    I: IntoIterator<Item = T>,
    T: Into<LinExpr>,
{
    items.into_iter().fold(LinExpr::default(), |acc, e| acc + e)
}

/// Affine square-matrix expression `C + Σ y_i A_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    pub(crate) constant: DMatrix<f64>,
    pub(crate) terms: BTreeMap<usize, DMatrix<f64>>,
}

impl MatExpr {
    pub fn constant(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "matrix expressions must be square");
        Self {
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    /// `var · coeff`.
    pub fn term(var: Var, coeff: DMatrix<f64>) -> Self {
        let n = coeff.nrows();
        let mut e = Self::zeros(n);
        e.terms.insert(var.0, coeff);
        e
    }

    /// Affine `1×1` expression.
    pub fn scalar(e: impl Into<LinExpr>) -> Self {
        let e = e.into();
        let mut m = Self::constant(DMatrix::from_element(1, 1, e.constant));
        for (i, a) in e.terms {
            m.terms.insert(i, DMatrix::from_element(1, 1, a));
        }
        m
    }

    /// `e · coeff` for a scalar affine `e` and a constant matrix.
    pub fn scaled_matrix(e: impl Into<LinExpr>, coeff: &DMatrix<f64>) -> Self {
        let e = e.into();
        let mut m = Self::constant(coeff * e.constant);
        for (i, a) in e.terms {
            m.terms.insert(i, coeff * a);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn constant_part(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (Var, &DMatrix<f64>)> + '_ {
        self.terms.iter().map(|(i, a)| (Var(*i), a))
    }

    pub fn eval(&self, values: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (i, a) in &self.terms {
            m += a * values[*i];
        }
        m
    }

    pub fn entry(&self, i: usize, j: usize) -> LinExpr {
        let mut e = LinExpr::constant(self.constant[(i, j)]);
        for (v, a) in &self.terms {
            if a[(i, j)] != 0.0 {
                e.add_term(*v, a[(i, j)]);
            }
        }
        e
    }

    pub fn trace(&self) -> LinExpr {
        let mut e = LinExpr::constant(self.constant.trace());
        for (v, a) in &self.terms {
            e.add_term(*v, a.trace());
        }
        e
    }

    /// Frobenius product `⟨C, X⟩ = tr(Cᵀ X)`.
    pub fn dot(&self, c: &DMatrix<f64>) -> LinExpr {
        let f = |a: &DMatrix<f64>| a.iter().zip(c.iter()).map(|(x, y)| x * y).sum::<f64>();
        let mut e = LinExpr::constant(f(&self.constant));
        for (v, a) in &self.terms {
            e.add_term(*v, f(a));
        }
        e
    }

    /// `A X Bᵀ`-style congruence `L X R` with constant factors.
    pub fn sandwich(&self, left: &DMatrix<f64>, right: &DMatrix<f64>) -> Self {
        Self {
            constant: left * &self.constant * right,
            terms: self.terms.iter().map(|(i, a)| (*i, left * a * right)).collect(),
        }
    }

    /// Symmetric part `(X + Xᵀ)/2`.
    pub fn symmetrize(&self) -> Self {
        let s = |a: &DMatrix<f64>| (a + a.transpose()) * 0.5;
        Self {
            constant: s(&self.constant),
            terms: self.terms.iter().map(|(i, a)| (*i, s(a))).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            constant: self.constant.transpose(),
            terms: self.terms.iter().map(|(i, a)| (*i, a.transpose())).collect(),
        }
    }

    /// Largest asymmetry `max |X − Xᵀ|` over the constant and every coefficient.
    pub fn asymmetry(&self) -> f64 {
        std::iter::once(&self.constant)
            .chain(self.terms.values())
            .map(|a| (a - a.transpose()).amax())
            .fold(0.0, f64::max)
    }

    /// Block matrix from a square grid of equally partitioned blocks.
    /// Off-diagonal blocks may be rectangular; they are passed as
    /// [`Block`]s so their shapes can differ from the diagonal ones.
    pub fn blocks(grid: &[Vec<Block>]) -> Result<Self> {
        let n_blocks = grid.len();
        let mut rows = vec![0usize; n_blocks];
        let mut cols = vec![0usize; n_blocks];
        for (bi, row) in grid.iter().enumerate() {
            if row.len() != n_blocks {
                return Err(Error::MalformedProblem("block grid must be square".into()));
            }
            for (bj, b) in row.iter().enumerate() {
                let (r, c) = b.shape();
                if let Some((r, c)) = r.zip(c) {
                    for (slot, v) in [(&mut rows[bi], r), (&mut cols[bj], c)] {
                        if *slot != 0 && *slot != v {
                            return Err(Error::MalformedProblem(format!(
                                "block ({bi}, {bj}) has inconsistent shape {r}x{c}"
                            )));
                        }
                        *slot = v;
                    }
                }
            }
        }
        if rows != cols || rows.contains(&0) {
            return Err(Error::MalformedProblem(format!(
                "block grid has row sizes {rows:?} and column sizes {cols:?}"
            )));
        }
        let n: usize = rows.iter().sum();
        let starts: Vec<usize> = rows
            .iter()
            .scan(0, |acc, &r| {
                let s = *acc;
                *acc += r;
                Some(s)
            })
            .collect();
        let mut out = Self::zeros(n);
        for (bi, row) in grid.iter().enumerate() {
            for (bj, b) in row.iter().enumerate() {
                let place = |target: &mut DMatrix<f64>, m: &DMatrix<f64>| {
                    target
                        .view_mut((starts[bi], starts[bj]), (m.nrows(), m.ncols()))
                        .copy_from(m);
                };
                match b {
                    Block::Zero => {}
                    Block::Const(m) => place(&mut out.constant, m),
                    Block::Expr(e) => {
                        place(&mut out.constant, &e.constant);
                        for (i, a) in &e.terms {
                            let t = out.terms.entry(*i).or_insert_with(|| DMatrix::zeros(n, n));
                            place(t, a);
                        }
                    }
                    Block::Affine { constant, terms } => {
                        place(&mut out.constant, constant);
                        for (i, a) in terms {
                            let t = out.terms.entry(i.0).or_insert_with(|| DMatrix::zeros(n, n));
                            place(t, a);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Block-diagonal matrix `diag(a, b)`.
    pub fn block_diag(a: &MatExpr, b: &MatExpr) -> Self {
        Self::blocks(&[
            vec![Block::Expr(a.clone()), Block::Zero],
            vec![Block::Zero, Block::Expr(b.clone())],
        ])
        .expect("diagonal blocks are square")
    }
}

/// One cell of a block grid passed to [`MatExpr::blocks`].
#[derive(Debug, Clone)]
pub enum Block {
    Zero,
    Const(DMatrix<f64>),
    Expr(MatExpr),
    /// Rectangular affine block `constant + Σ y_i A_i`.
    Affine {
        constant: DMatrix<f64>,
        terms: Vec<(Var, DMatrix<f64>)>,
    },
}

impl Block {
    fn shape(&self) -> (Option<usize>, Option<usize>) {
        match self {
            Block::Zero => (None, None),
            Block::Const(m) => (Some(m.nrows()), Some(m.ncols())),
            Block::Expr(e) => (Some(e.dim()), Some(e.dim())),
            Block::Affine { constant, .. } => (Some(constant.nrows()), Some(constant.ncols())),
        }
    }
}

impl Add for MatExpr {
    type Output = MatExpr;
    fn add(mut self, rhs: MatExpr) -> MatExpr {
        assert_eq!(self.dim(), rhs.dim(), "matrix expression dimensions differ");
        self.constant += rhs.constant;
        for (i, a) in rhs.terms {
            match self.terms.get_mut(&i) {
                Some(t) => *t += a,
                None => {
                    self.terms.insert(i, a);
                }
            }
        }
        self
    }
}

impl Sub for MatExpr {
    type Output = MatExpr;
    fn sub(self, rhs: MatExpr) -> MatExpr {
        self + (-rhs)
    }
}

impl Neg for MatExpr {
    type Output = MatExpr;
    fn neg(self) -> MatExpr {
        self * -1.0
    }
}

impl Mul<f64> for MatExpr {
    type Output = MatExpr;
    fn mul(mut self, s: f64) -> MatExpr {
        self.constant *= s;
        for a in self.terms.values_mut() {
            *a *= s;
        }
        self
    }
}

/// Handle to a symmetric `n×n` matrix variable, stored as its upper
/// triangle in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymVar {
    n: usize,
    vars: Vec<Var>,
}

impl SymVar {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn slot(&self, i: usize, j: usize) -> Var {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // Row i of the upper triangle starts after Σ_{r<i} (n − r) entries.
        let start = i * self.n - i * i.saturating_sub(1) / 2;
        self.vars[start + j - i]
    }

    pub fn at(&self, i: usize, j: usize) -> Var {
        self.slot(i, j)
    }

    pub fn expr(&self) -> MatExpr {
        let n = self.n;
        let mut e = MatExpr::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut a = DMatrix::zeros(n, n);
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
                e.terms.insert(self.slot(i, j).0, a);
            }
        }
        e
    }

    pub fn value(&self, values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| values[self.slot(i, j).0])
    }
}

/// A labelled PSD constraint `expr ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lmi {
    pub label: String,
    pub expr: MatExpr,
}

/// A labelled scalar constraint `expr ≥ 0` or `expr = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub label: String,
    pub expr: LinExpr,
}

/// Immutable conic program: minimize `objective` subject to every LMI being
/// PSD, every inequality being non-negative and every equality vanishing.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub(crate) names: Vec<String>,
    pub(crate) objective: LinExpr,
    pub(crate) lmis: Vec<Lmi>,
    pub(crate) inequalities: Vec<Linear>,
    pub(crate) equalities: Vec<Linear>,
}

impl ConicProblem {
    pub fn variable_count(&self) -> usize {
        self.names.len()
    }

    pub fn variable_name(&self, var: Var) -> &str {
        &self.names[var.0]
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn lmis(&self) -> &[Lmi] {
        &self.lmis
    }

    pub fn inequalities(&self) -> &[Linear] {
        &self.inequalities
    }

    pub fn equalities(&self) -> &[Linear] {
        &self.equalities
    }
}

/// Incremental builder for a [`ConicProblem`].
#[derive(Debug, Clone, Default)]
pub struct ProblemBuilder {
    names: Vec<String>,
    objective: LinExpr,
    lmis: Vec<Lmi>,
    inequalities: Vec<Linear>,
    equalities: Vec<Linear>,
}

impl ProblemBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scalar(&mut self, name: impl Into<String>) -> Var {
        self.names.push(name.into());
        Var(self.names.len() - 1)
    }

    /// Scalar variable constrained to be non-negative.
    pub fn nonneg(&mut self, name: impl Into<String>) -> Var {
        let name = name.into();
        let v = self.scalar(name.clone());
        self.ge(format!("{name} >= 0"), v, 0.0);
        v
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> SymVar {
        let mut vars = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                vars.push(self.scalar(format!("{name}[{i},{j}]")));
            }
        }
        SymVar { n, vars }
    }

    pub fn psd(&mut self, label: impl Into<String>, expr: MatExpr) {
        self.lmis.push(Lmi {
            label: label.into(),
            expr,
        });
    }

    /// `lhs ≥ rhs`.
    pub fn ge(&mut self, label: impl Into<String>, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) {
        self.inequalities.push(Linear {
            label: label.into(),
            expr: lhs.into() - rhs.into(),
        });
    }

    /// `lhs ≤ rhs`.
    pub fn le(&mut self, label: impl Into<String>, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) {
        self.inequalities.push(Linear {
            label: label.into(),
            expr: rhs.into() - lhs.into(),
        });
    }

    /// `lhs = rhs`.
    pub fn eq(&mut self, label: impl Into<String>, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) {
        self.equalities.push(Linear {
            label: label.into(),
            expr: lhs.into() - rhs.into(),
        });
    }

    pub fn minimize(&mut self, objective: impl Into<LinExpr>) {
        self.objective = objective.into();
    }

    pub fn build(self) -> Result<ConicProblem> {
        let n = self.names.len();
        let check_vars = |label: &str, mut it: Box<dyn Iterator<Item = usize> + '_>| {
            if let Some(i) = it.find(|&i| i >= n) {
                return Err(Error::MalformedProblem(format!(
                    "{label}: references unknown variable {i}"
                )));
            }
            Ok(())
        };
        check_vars("objective", Box::new(self.objective.terms.keys().copied()))?;
        for lmi in &self.lmis {
            let d = lmi.expr.dim();
            if d == 0 {
                return Err(Error::MalformedProblem(format!("{}: empty LMI", lmi.label)));
            }
            if lmi.expr.terms.values().any(|a| a.nrows() != d || a.ncols() != d) {
                return Err(Error::MalformedProblem(format!(
                    "{}: coefficient dimensions differ from {d}x{d}",
                    lmi.label
                )));
            }
            let scale = std::iter::once(&lmi.expr.constant)
                .chain(lmi.expr.terms.values())
                .map(|a| a.amax())
                .fold(1.0, f64::max);
            let asym = lmi.expr.asymmetry();
            if asym > 1e-12 * scale {
                return Err(Error::MalformedProblem(format!(
                    "{}: LMI expression is not symmetric (asymmetry {asym:e})",
                    lmi.label
                )));
            }
            check_vars(&lmi.label, Box::new(lmi.expr.terms.keys().copied()))?;
        }
        for c in self.inequalities.iter().chain(&self.equalities) {
            check_vars(&c.label, Box::new(c.expr.terms.keys().copied()))?;
            if !c.expr.constant.is_finite() || c.expr.terms.values().any(|a| !a.is_finite()) {
                return Err(Error::MalformedProblem(format!("{}: non-finite coefficient", c.label)));
            }
        }
        let lmis = self.lmis.into_iter().map(|l| Lmi {
            expr: l.expr.symmetrize(),
            label: l.label,
        });
        Ok(ConicProblem {
            names: self.names,
            objective: self.objective,
            lmis: lmis.collect(),
            inequalities: self.inequalities,
            equalities: self.equalities,
        })
    }
}
