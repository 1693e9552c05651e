//! Log-barrier interior-point method for small dense block SDPs.
//!
//! The problem is reduced to `min cᵀw s.t. F_b(w) ⪰ 0, h + G w ≥ 0` by
//! eliminating linear equalities through a nullspace basis, then equilibrated
//! (congruence scaling per block, row scaling of the linear part, column
//! scaling of the variables). A phase-I problem `min s s.t. F_b(w) + sI ⪰ 0`
//! finds a strictly feasible start or produces a dual certificate of
//! infeasibility. The phase-II path-following loop centers with Newton steps
//! whose backtracking is floored at the damped length `1/(1+λ)`, which the
//! self-concordance of the barrier turns into guaranteed progress even when
//! function values stop being informative. A large box `|w_i| ≤ R` keeps
//! every Hessian nonsingular and turns unbounded problems into a diagnosable
//! failure.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::expr::ConicProblem;
use super::{Residuals, SolveReport, SolverOptions, Status};

struct Block {
    f0: DMatrix<f64>,
    coeffs: Vec<(usize, DMatrix<f64>)>,
}

impl Block {
    fn size(&self) -> usize {
        self.f0.nrows()
    }

    fn at(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut f = self.f0.clone();
        for (j, a) in &self.coeffs {
            f += a * w[*j];
        }
        f
    }
}

/// Reduced, scaled problem in the `w` coordinates.
struct Reduced {
    blocks: Vec<Block>,
    h: DVector<f64>,
    g: DMatrix<f64>,
    c: DVector<f64>,
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl Reduced {
    fn n(&self) -> usize {
        self.c.len()
    }

    fn barrier_dim(&self) -> usize {
        self.blocks.iter().map(Block::size).sum::<usize>() + self.h.len()
    }

    fn feasible(&self, w: &DVector<f64>) -> bool {
        if w.iter().any(|x| !x.is_finite()) {
            return false;
        }
        let v = &self.h + &self.g * w;
        if v.iter().any(|x| !(*x > 0.0)) {
            return false;
        }
        self.blocks.iter().all(|b| Cholesky::new(b.at(w)).is_some())
    }

    fn value(&self, w: &DVector<f64>) -> Option<f64> {
        let mut value = 0.0;
        for b in &self.blocks {
            let chol = Cholesky::new(b.at(w))?;
            value -= 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        let v = &self.h + &self.g * w;
        if v.iter().any(|x| !(*x > 0.0)) || w.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some(value - v.iter().map(|x| x.ln()).sum::<f64>())
    }

    fn eval(&self, w: &DVector<f64>) -> Option<Eval> {
        let n = self.n();
        let mut value = 0.0;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for b in &self.blocks {
            let chol = Cholesky::new(b.at(w))?;
            let k = b.size();
            value -= 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let linv = chol.l().solve_lower_triangular(&DMatrix::identity(k, k))?;
            let scaled: Vec<(usize, DMatrix<f64>)> = b
                .coeffs
                .iter()
                .map(|(j, a)| (*j, &linv * a * linv.transpose()))
                .collect();
            for (p, (j, gj)) in scaled.iter().enumerate() {
                grad[*j] -= gj.trace();
                for (q, gk) in scaled[..=p].iter() {
                    let v = gj.dot(gk);
                    hess[(*j, *q)] += v;
                    if q != j {
                        hess[(*q, *j)] += v;
                    }
                }
            }
        }
        if !self.h.is_empty() {
            let v = &self.h + &self.g * w;
            if v.iter().any(|x| !(*x > 0.0)) {
                return None;
            }
            value -= v.iter().map(|x| x.ln()).sum::<f64>();
            let inv = v.map(|x| 1.0 / x);
            grad -= self.g.transpose() * &inv;
            let weighted = DMatrix::from_fn(self.g.nrows(), n, |i, j| self.g[(i, j)] * inv[i]);
            hess += weighted.transpose() * weighted;
        }
        Some(Eval { value, grad, hess })
    }
}

fn newton_direction(hess: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    // Jacobi scaling before the factorization keeps the pivots comparable.
    let d = hess.diagonal().map(|x| if x > 0.0 { 1.0 / x.sqrt() } else { 1.0 });
    let n = hess.nrows();
    let scaled = DMatrix::from_fn(n, n, |i, j| hess[(i, j)] * d[i] * d[j]);
    let b = rhs.component_mul(&d);
    let mut reg = 0.0;
    loop {
        let m = if reg > 0.0 {
            &scaled + DMatrix::identity(n, n) * reg
        } else {
            scaled.clone()
        };
        if let Some(ch) = Cholesky::<f64, Dyn>::new(m) {
            return Some(ch.solve(&b).component_mul(&d));
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
        if reg > 1e-4 {
            return None;
        }
    }
}

enum Centering {
    Centered,
    Stopped,
}

/// Newton centering at barrier weight `t`. `stop` allows an early exit
/// after any step.
fn center(
    p: &Reduced,
    w: &mut DVector<f64>,
    t: f64,
    opts: &SolverOptions,
    iterations: &mut usize,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<Centering, String> {
    let mut steps = 0usize;
    let mut previous = f64::INFINITY;
    loop {
        let ev = p
            .eval(w)
            .ok_or_else(|| "iterate left the interior of the cone".to_string())?;
        let grad = &p.c * t + ev.grad;
        let dx = newton_direction(&ev.hess, &(-&grad))
            .ok_or_else(|| "barrier Hessian is numerically singular".to_string())?;
        let lam = (-grad.dot(&dx)).max(0.0).sqrt();
        // Below 1e-4 a decrement that stops shrinking has hit the rounding
        // floor of the Newton system.
        if lam <= 1e-7 || (lam < 1e-4 && lam > 0.5 * previous) {
            return Ok(Centering::Centered);
        }
        previous = lam;
        if steps >= opts.max_centering_steps {
            return if lam < 1e-2 {
                Ok(Centering::Centered)
            } else {
                Err(format!(
                    "centering did not converge at t = {t:.3e} (Newton decrement {lam:.3e})"
                ))
            };
        }
        if *iterations >= opts.max_iterations {
            return Err(format!("iteration limit {} reached", opts.max_iterations));
        }
        // Backtracking on the barrier objective, never shorter than the
        // damped step 1/(1+λ) that self-concordance guarantees.
        let damped = if lam > 0.25 { 1.0 / (1.0 + lam) } else { 1.0 };
        let f0 = t * p.c.dot(w) + ev.value;
        let mut alpha = 1.0;
        let mut next = &*w + &dx * alpha;
        while alpha > damped {
            match p.value(&next) {
                Some(v) if t * p.c.dot(&next) + v <= f0 - 0.25 * alpha * lam * lam => break,
                _ => {}
            }
            alpha *= 0.5;
            next = &*w + &dx * alpha;
        }
        if alpha < damped {
            alpha = damped;
            next = &*w + &dx * alpha;
        }
        while !p.feasible(&next) {
            alpha *= 0.5;
            if alpha < 1e-14 {
                if lam < 1e-4 {
                    return Ok(Centering::Centered);
                }
                return Err(format!(
                    "no feasible Newton step at t = {t:.3e} (Newton decrement {lam:.3e})"
                ));
            }
            next = &*w + &dx * alpha;
        }
        *w = next;
        steps += 1;
        *iterations += 1;
        if stop(w) {
            return Ok(Centering::Stopped);
        }
    }
}

/// Problem after equality elimination and scaling, with the maps back to the
/// original variables and constraint blocks.
struct Prepared {
    reduced: Reduced,
    y0: DVector<f64>,
    /// `y = y0 + basis · w`.
    basis: DMatrix<f64>,
    /// Per-LMI congruence scaling vectors.
    block_scale: Vec<DVector<f64>>,
    /// Number of linear rows coming from the problem (the rest are box rows).
    problem_rows: usize,
    objective_scale: f64,
}

fn prepare(problem: &ConicProblem, opts: &SolverOptions) -> Result<Prepared, (Status, String)> {
    let n_y = problem.variable_count();

    // Equality elimination.
    let (y0, null) = if problem.equalities.is_empty() {
        (DVector::zeros(n_y), DMatrix::identity(n_y, n_y))
    } else {
        let m = problem.equalities.len();
        let mut a = DMatrix::zeros(m, n_y);
        let mut b = DVector::zeros(m);
        for (i, e) in problem.equalities.iter().enumerate() {
            for (v, coeff) in e.expr.terms() {
                a[(i, v.index())] = coeff;
            }
            b[i] = -e.expr.constant_part();
        }
        let svd = a.clone().svd(true, true);
        let top = svd.singular_values.amax();
        let y0 = svd
            .solve(&b, 1e-12 * top.max(f64::MIN_POSITIVE))
            .map_err(|e| (Status::NumericalFailure, e.to_string()))?;
        let resid = (&a * &y0 - &b).amax();
        if resid > 1e-9 * (1.0 + b.amax()) {
            let worst = (0..m)
                .max_by(|&i, &j| {
                    let ri = ((&a * &y0)[i] - b[i]).abs();
                    let rj = ((&a * &y0)[j] - b[j]).abs();
                    ri.total_cmp(&rj)
                })
                .unwrap_or(0);
            return Err((
                Status::Infeasible,
                format!(
                    "linear equalities are inconsistent (residual {resid:.3e}, worst row '{}')",
                    problem.equalities[worst].label
                ),
            ));
        }
        let gram = SymmetricEigen::new(a.transpose() * &a);
        let gtop = gram.eigenvalues.amax();
        let cols: Vec<DVector<f64>> = (0..n_y)
            .filter(|&i| gram.eigenvalues[i] <= 1e-12 * gtop.max(f64::MIN_POSITIVE))
            .map(|i| gram.eigenvectors.column(i).into_owned())
            .collect();
        let null = if cols.is_empty() {
            DMatrix::zeros(n_y, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        (y0, null)
    };
    let n = null.ncols();

    // Reduced blocks.
    let mut blocks = Vec::with_capacity(problem.lmis.len());
    for lmi in &problem.lmis {
        let mut f0 = lmi.expr.eval(y0.as_slice());
        f0 = (&f0 + f0.transpose()) * 0.5;
        let k = f0.nrows();
        let mut dense = vec![DMatrix::<f64>::zeros(k, k); n];
        for (v, a) in lmi.expr.terms() {
            for j in 0..n {
                let coeff = null[(v.index(), j)];
                if coeff != 0.0 {
                    dense[j] += a * coeff;
                }
            }
        }
        let coeffs = dense.into_iter().enumerate().filter(|(_, a)| a.amax() > 0.0).collect();
        blocks.push(Block { f0, coeffs });
    }
    let m_lin = problem.inequalities.len();
    let mut h = DVector::zeros(m_lin);
    let mut g = DMatrix::zeros(m_lin, n);
    for (i, e) in problem.inequalities.iter().enumerate() {
        h[i] = e.expr.eval(y0.as_slice());
        for (v, coeff) in e.expr.terms() {
            for j in 0..n {
                g[(i, j)] += coeff * null[(v.index(), j)];
            }
        }
    }
    let mut c_y = DVector::zeros(n_y);
    for (v, coeff) in problem.objective.terms() {
        c_y[v.index()] = coeff;
    }
    let mut c = null.transpose() * c_y;

    // Ruiz-style equilibration.
    let mut block_scale: Vec<DVector<f64>> = blocks.iter().map(|b| DVector::from_element(b.size(), 1.0)).collect();
    let mut col_scale = DVector::from_element(n, 1.0);
    for _ in 0..opts.equilibration_passes {
        for (b, s) in blocks.iter_mut().zip(block_scale.iter_mut()) {
            let k = b.size();
            let mut r = DVector::from_fn(k, |i, _| b.f0.row(i).amax());
            for (_, a) in &b.coeffs {
                for i in 0..k {
                    r[i] = r[i].max(a.row(i).amax());
                }
            }
            let d = r.map(|x| if x > 0.0 { 1.0 / x.sqrt() } else { 1.0 });
            let apply = |m: &mut DMatrix<f64>| {
                for i in 0..k {
                    for j in 0..k {
                        m[(i, j)] *= d[i] * d[j];
                    }
                }
            };
            apply(&mut b.f0);
            for (_, a) in b.coeffs.iter_mut() {
                apply(a);
            }
            s.component_mul_assign(&d);
        }
        for i in 0..m_lin {
            let r = h[i].abs().max(g.row(i).amax());
            if r > 0.0 {
                h[i] /= r;
                g.row_mut(i).unscale_mut(r);
            }
        }
        let mut col = DVector::from_fn(n, |j, _| if m_lin > 0 { g.column(j).amax() } else { 0.0 });
        for b in &blocks {
            for (j, a) in &b.coeffs {
                col[*j] = col[*j].max(a.amax());
            }
        }
        for j in 0..n {
            if col[j] > 0.0 {
                let d = 1.0 / col[j];
                for b in blocks.iter_mut() {
                    for (jj, a) in b.coeffs.iter_mut() {
                        if *jj == j {
                            *a *= d;
                        }
                    }
                }
                g.column_mut(j).scale_mut(d);
                c[j] *= d;
                col_scale[j] *= d;
            }
        }
    }
    let objective_scale = c.amax();
    if objective_scale > 0.0 {
        c.unscale_mut(objective_scale);
    }

    // Box rows R ± w_j ≥ 0.
    let r = opts.box_radius;
    let mut h_full = DVector::zeros(m_lin + 2 * n);
    let mut g_full = DMatrix::zeros(m_lin + 2 * n, n);
    h_full.rows_mut(0, m_lin).copy_from(&h);
    g_full.view_mut((0, 0), (m_lin, n)).copy_from(&g);
    for j in 0..n {
        h_full[m_lin + 2 * j] = r;
        g_full[(m_lin + 2 * j, j)] = 1.0;
        h_full[m_lin + 2 * j + 1] = r;
        g_full[(m_lin + 2 * j + 1, j)] = -1.0;
    }

    let basis = null * DMatrix::from_diagonal(&col_scale);
    Ok(Prepared {
        reduced: Reduced {
            blocks,
            h: h_full,
            g: g_full,
            c,
        },
        y0,
        basis,
        block_scale,
        problem_rows: m_lin,
        objective_scale,
    })
}

/// Smallest eigenvalue across blocks and smallest linear slack at `w`.
fn min_slack(p: &Reduced, w: &DVector<f64>) -> f64 {
    let mut s = f64::INFINITY;
    for b in &p.blocks {
        s = s.min(crate::linalg::min_eigenvalue(&b.at(w)));
    }
    let v = &p.h + &p.g * w;
    v.iter().fold(s, |acc, x| acc.min(*x))
}

enum PhaseOne {
    Feasible(DVector<f64>),
    Infeasible { message: String },
    Failed(String),
}

fn phase_one(prep: &Prepared, problem: &ConicProblem, opts: &SolverOptions, iterations: &mut usize) -> PhaseOne {
    let p = &prep.reduced;
    let n = p.n();
    let w0 = DVector::zeros(n);
    let start_slack = min_slack(p, &w0);
    if start_slack > opts.interior_margin && p.feasible(&w0) {
        return PhaseOne::Feasible(w0);
    }

    // Augmented problem over (w, s).
    let s_idx = n;
    let blocks = p
        .blocks
        .iter()
        .map(|b| {
            let mut coeffs = b.coeffs.clone();
            coeffs.push((s_idx, DMatrix::identity(b.size(), b.size())));
            Block {
                f0: b.f0.clone(),
                coeffs,
            }
        })
        .collect();
    let m = p.h.len();
    let mut h = DVector::zeros(m + 1);
    let mut g = DMatrix::zeros(m + 1, n + 1);
    h.rows_mut(0, m).copy_from(&p.h);
    g.view_mut((0, 0), (m, n)).copy_from(&p.g);
    for i in 0..prep.problem_rows {
        g[(i, s_idx)] = 1.0;
    }
    // s ≥ −1 keeps phase I bounded once a margin of one is reached.
    h[m] = 1.0;
    g[(m, s_idx)] = 1.0;
    let mut c = DVector::zeros(n + 1);
    c[s_idx] = 1.0;
    let aug = Reduced { blocks, h, g, c };

    let mut z = DVector::zeros(n + 1);
    z[s_idx] = 1.0 - start_slack.min(0.0) + 1.0;
    if !aug.feasible(&z) {
        return PhaseOne::Failed("could not construct a phase-I starting point".into());
    }
    let target = -opts.interior_margin;
    let mut t = initial_weight(&aug, &z).max(1.0);
    let dim = aug.barrier_dim() as f64;
    loop {
        // The shift s only bounds the violation; the original constraints may
        // become strictly feasible well before s turns negative.
        let stop = |z: &DVector<f64>| min_slack(p, &z.rows(0, n).into_owned()) > 1e-6;
        match center(&aug, &mut z, t, opts, iterations, &stop) {
            Err(e) => return PhaseOne::Failed(format!("phase I: {e}")),
            Ok(Centering::Stopped) => return PhaseOne::Feasible(z.rows(0, n).into_owned()),
            Ok(Centering::Centered) => {}
        }
        if z[s_idx] < target {
            return PhaseOne::Feasible(z.rows(0, n).into_owned());
        }
        if dim / t < 1e-3 * opts.interior_margin {
            break;
        }
        t *= opts.barrier_growth;
    }

    // Certificate: normalized dual weights of the shifted constraints.
    let s = z[s_idx];
    let mut weights: Vec<(String, f64)> = Vec::new();
    for (lmi, b) in problem.lmis.iter().zip(&aug.blocks) {
        let f = b.at(&z);
        let w = f
            .clone()
            .cholesky()
            .map(|ch| ch.inverse().trace() / t)
            .unwrap_or(f64::INFINITY);
        weights.push((lmi.label.clone(), w));
    }
    let v = &aug.h + &aug.g * &z;
    for (i, lin) in problem.inequalities.iter().enumerate() {
        weights.push((lin.label.clone(), 1.0 / (t * v[i])));
    }
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    weights.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top: Vec<String> = weights
        .iter()
        .take(3)
        .filter(|(_, w)| *w > 0.0)
        .map(|(l, w)| format!("'{l}' ({:.2})", w / total))
        .collect();
    let kind = if s > 1e3 * opts.interior_margin {
        "infeasible"
    } else {
        "not strictly feasible"
    };
    PhaseOne::Infeasible {
        message: format!(
            "problem is {kind}: minimal uniform violation {s:.3e}; certificate weights on {}",
            top.join(", ")
        ),
    }
}

pub(super) fn solve(problem: &ConicProblem, opts: &SolverOptions) -> SolveReport {
    let n_y = problem.variable_count();
    let fail = |status: Status, message: String, iterations: usize| SolveReport {
        status,
        optimum: f64::NAN,
        assignment: vec![f64::NAN; n_y],
        residuals: Residuals::default(),
        iterations,
        message,
        lmi_duals: Vec::new(),
    };
    let prep = match prepare(problem, opts) {
        Ok(p) => p,
        Err((status, message)) => return fail(status, message, 0),
    };
    let mut iterations = 0usize;
    let mut w = match phase_one(&prep, problem, opts, &mut iterations) {
        PhaseOne::Feasible(w) => w,
        PhaseOne::Infeasible { message } => return fail(Status::Infeasible, message, iterations),
        PhaseOne::Failed(m) => return fail(Status::NumericalFailure, m, iterations),
    };
    let p = &prep.reduced;
    let to_y = |w: &DVector<f64>| &prep.y0 + &prep.basis * w;
    let objective = |w: &DVector<f64>| problem.objective.eval(to_y(w).as_slice());
    let dim = (p.blocks.iter().map(Block::size).sum::<usize>() + prep.problem_rows) as f64;

    let mut t = if prep.objective_scale > 0.0 {
        initial_weight(p, &w)
    } else {
        1.0
    };
    let no_stop = |_: &DVector<f64>| false;
    loop {
        if let Err(e) = center(p, &mut w, t, opts, &mut iterations, &no_stop) {
            return fail(Status::NumericalFailure, format!("phase II: {e}"), iterations);
        }
        if w.iter().any(|x| x.abs() > 0.5 * opts.box_radius) {
            return fail(
                Status::NumericalFailure,
                "objective appears unbounded below (iterate reached the safeguard box)".into(),
                iterations,
            );
        }
        if prep.objective_scale == 0.0 {
            break;
        }
        let target = opts.tol * (1.0 + objective(&w).abs());
        if dim / t * prep.objective_scale <= target {
            let (_, dual, gap) = newton_duals(p, &w, t, prep.problem_rows);
            if gap * prep.objective_scale <= target && dual <= opts.tol {
                break;
            }
        }
        t *= opts.barrier_growth;
    }

    let y = to_y(&w);
    let optimum = problem.objective.eval(y.as_slice());
    let scale = prep.objective_scale;
    let (scaled_duals, dual, gap_scaled) = newton_duals(p, &w, t, prep.problem_rows);

    // Z_b in original coordinates: S Z S, times the objective scale.
    let lmi_duals = scaled_duals
        .iter()
        .zip(&prep.block_scale)
        .map(|(zs, s)| DMatrix::from_fn(zs.nrows(), zs.ncols(), |i, j| zs[(i, j)] * s[i] * s[j] * scale))
        .collect();

    let mut primal: f64 = 0.0;
    for lmi in &problem.lmis {
        let ev = crate::linalg::min_eigenvalue(&lmi.expr.eval(y.as_slice()));
        primal = primal.max(-ev);
    }
    for lin in &problem.inequalities {
        primal = primal.max(-lin.expr.eval(y.as_slice()));
    }
    for eq in &problem.equalities {
        primal = primal.max(eq.expr.eval(y.as_slice()).abs());
    }
    let gap = if scale > 0.0 {
        gap_scaled * scale / (1.0 + optimum.abs())
    } else {
        0.0
    };
    SolveReport {
        status: Status::Optimal,
        optimum,
        assignment: y.iter().copied().collect(),
        residuals: Residuals {
            primal: primal.max(0.0),
            dual,
            gap,
        },
        iterations,
        message: format!("optimal after {iterations} Newton steps"),
        lmi_duals,
    }
}

/// Dual estimate from one Newton step at `(w, t)`:
/// `Z_b = (F⁻¹ − F⁻¹ ΔF F⁻¹)/t`, `λ_i = (1 − Δv_i/v_i)/(t v_i)`, which
/// satisfies stationarity up to the accuracy of the Newton solve. Returns the
/// block duals, the stationarity residual and the gap `Σ⟨Z, F⟩ + λᵀv`.
fn newton_duals(p: &Reduced, w: &DVector<f64>, t: f64, problem_rows: usize) -> (Vec<DMatrix<f64>>, f64, f64) {
    let fallback = || {
        let z = p.blocks.iter().map(|b| DMatrix::zeros(b.size(), b.size())).collect();
        (z, f64::INFINITY, f64::INFINITY)
    };
    let Some(ev) = p.eval(w) else { return fallback() };
    let grad = &p.c * t + &ev.grad;
    let Some(dx) = newton_direction(&ev.hess, &(-&grad)) else {
        return fallback();
    };
    let mut stationarity = p.c.clone();
    let mut gap = 0.0;
    let mut duals = Vec::with_capacity(p.blocks.len());
    for b in &p.blocks {
        let f = b.at(w);
        let Some(finv) = Cholesky::new(f.clone()).map(|c| c.inverse()) else {
            return fallback();
        };
        let mut df = DMatrix::zeros(b.size(), b.size());
        for (j, a) in &b.coeffs {
            df += a * dx[*j];
        }
        let z = (&finv - &finv * df * &finv) / t;
        let z = (&z + z.transpose()) * 0.5;
        for (j, a) in &b.coeffs {
            stationarity[*j] -= z.dot(a);
        }
        gap += z.dot(&f);
        duals.push(z);
    }
    let v = &p.h + &p.g * w;
    let dv = &p.g * &dx;
    let lam = DVector::from_fn(v.len(), |i, _| (1.0 - dv[i] / v[i]) / (t * v[i]));
    stationarity -= p.g.transpose() * &lam;
    gap += lam.rows(0, problem_rows).dot(&v.rows(0, problem_rows));
    // Box multipliers are reported as part of the gap so it stays an upper
    // bound for the unboxed problem.
    gap += lam
        .rows(problem_rows, v.len() - problem_rows)
        .dot(&v.rows(problem_rows, v.len() - problem_rows));
    (duals, stationarity.amax(), gap)
}

/// Barrier weight balancing the objective against the barrier gradient in
/// the Hessian norm at the starting point.
fn initial_weight(p: &Reduced, w: &DVector<f64>) -> f64 {
    let Some(ev) = p.eval(w) else { return 1.0 };
    let (Some(hc), Some(hg)) = (newton_direction(&ev.hess, &p.c), newton_direction(&ev.hess, &ev.grad)) else {
        return 1.0;
    };
    let t = -p.c.dot(&hg) / p.c.dot(&hc);
    if t.is_finite() && t > 0.0 {
        t.clamp(1e-6, 1e6)
    } else {
        1.0
    }
}
