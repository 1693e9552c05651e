//! Plain-text dump in the SDPA sparse format for cross-checking against
//! external solvers.
//!
//! SDPA solves `min Σ c_i x_i s.t. Σ x_i F_i − F_0 ⪰ 0`. An LMI
//! `C + Σ y_i A_i ⪰ 0` is written with `F_0 = −C` and `F_i = A_i`. All linear
//! inequalities share one diagonal block (negative size in the block
//! structure line), and every equality becomes a pair of opposite
//! inequalities in that block. Entries are `matno blkno i j value` over the
//! upper triangle, 1-based. The objective constant is reported in the
//! comment line only.

use std::fmt::Write;

use super::expr::{ConicProblem, LinExpr};

pub fn write_sdpa(problem: &ConicProblem) -> String {
    let m = problem.variable_count();
    let mut rows: Vec<&LinExpr> = problem.inequalities.iter().map(|l| &l.expr).collect();
    let negated: Vec<LinExpr> = problem.equalities.iter().map(|l| -l.expr.clone()).collect();
    for e in &problem.equalities {
        rows.push(&e.expr);
    }
    rows.extend(negated.iter());

    let mut out = String::new();
    let _ = writeln!(
        out,
        "\"uav-isac conic problem: {} LMIs, {} linear rows, objective constant {:e}",
        problem.lmis.len(),
        rows.len(),
        problem.objective.constant_part()
    );
    let n_blocks = problem.lmis.len() + usize::from(!rows.is_empty());
    let _ = writeln!(out, "{m}");
    let _ = writeln!(out, "{n_blocks}");
    let mut sizes: Vec<String> = problem.lmis.iter().map(|l| l.expr.dim().to_string()).collect();
    if !rows.is_empty() {
        sizes.push(format!("-{}", rows.len()));
    }
    let _ = writeln!(out, "{}", sizes.join(" "));
    let c: Vec<String> = (0..m)
        .map(|i| format!("{:e}", problem.objective.coefficient(super::Var(i))))
        .collect();
    let _ = writeln!(out, "{}", c.join(" "));

    let mut entry = |mat: usize, blk: usize, i: usize, j: usize, v: f64| {
        if v != 0.0 {
            let _ = writeln!(out, "{mat} {blk} {} {} {v:e}", i + 1, j + 1);
        }
    };
    for (b, lmi) in problem.lmis.iter().enumerate() {
        let k = lmi.expr.dim();
        for i in 0..k {
            for j in i..k {
                entry(0, b + 1, i, j, -lmi.expr.constant_part()[(i, j)]);
            }
        }
        for (v, a) in lmi.expr.terms() {
            for i in 0..k {
                for j in i..k {
                    entry(v.index() + 1, b + 1, i, j, a[(i, j)]);
                }
            }
        }
    }
    let lp = problem.lmis.len() + 1;
    for (r, e) in rows.iter().enumerate() {
        entry(0, lp, r, r, -e.constant_part());
        for (v, a) in e.terms() {
            entry(v.index() + 1, lp, r, r, a);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{MatExpr, ProblemBuilder};
    use nalgebra::DMatrix;

    #[test]
    fn dumps_small_problem() {
        let mut b = ProblemBuilder::new();
        let x = b.scalar("x");
        let lmi = MatExpr::scaled_matrix(x, &DMatrix::identity(2, 2))
            + MatExpr::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        b.psd("det", lmi);
        b.ge("x >= 0", x, 0.0);
        b.minimize(x);
        let text = write_sdpa(&b.build().unwrap());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "1");
        assert_eq!(lines[2], "2");
        assert_eq!(lines[3], "2 -1");
        assert_eq!(lines[4], "1e0");
        assert!(lines.contains(&"0 1 1 2 -1e0"));
        assert!(lines.contains(&"1 1 1 1 1e0"));
        assert!(lines.contains(&"1 1 2 2 1e0"));
        assert!(lines.contains(&"1 2 1 1 1e0"));
    }
}
