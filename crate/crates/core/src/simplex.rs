//! Exact rational linear programming: dense-tableau two-phase primal
//! simplex with Bland's anti-cycling rule.
//!
//! Problems are minimization over x >= 0 with rows `a.x = b`, `a.x <= b`,
//! or `a.x >= b`. Solutions carry the primal point, the dual row values,
//! and the final basis, all exact, so optimality can be re-verified
//! independently of the pivoting path (`verify_solution`).
//!
//! Dual convention: `duals[i] = y_i` satisfies `c - y.A >= 0`
//! componentwise over structural columns, `y_i <= 0` on `<=` rows,
//! `y_i >= 0` on `>=` rows, and `y.b` equals the optimal objective.

use thiserror::Error;

use crate::rational::Rat;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("constraint {row} references variable {var}, problem has {n_vars}")]
    BadColumn { row: usize, var: usize, n_vars: usize },
    #[error("objective has {got} coefficients, problem has {n_vars} variables")]
    BadObjective { got: usize, n_vars: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Le,
    Ge,
}

/// One row: sparse coefficients, comparison, right-hand side.
#[derive(Debug, Clone)]
pub struct LpConstraint {
    pub coeffs: Vec<(usize, Rat)>,
    pub cmp: Cmp,
    pub rhs: Rat,
}

/// Minimization problem over non-negative variables.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub n_vars: usize,
    pub objective: Vec<Rat>,
    pub constraints: Vec<LpConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Exact solution with basis certificate.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values; empty unless optimal.
    pub primal: Vec<Rat>,
    /// Optimal objective; zero unless optimal.
    pub objective: Rat,
    /// Dual value per constraint row; empty unless optimal.
    pub duals: Vec<Rat>,
    /// Final basic column per row, in the extended column space
    /// (structural, then slack, then artificial columns).
    pub basis: Vec<usize>,
    /// On infeasibility: y with y.b > 0 and y.A <= 0 over the extended
    /// columns (a Farkas-style certificate row).
    pub farkas: Option<Vec<Rat>>,
}

struct Tableau {
    /// rows x ncols coefficient matrix.
    a: Vec<Vec<Rat>>,
    b: Vec<Rat>,
    /// Reduced-cost row for the current phase.
    cost: Vec<Rat>,
    /// Objective value of the current basic solution.
    z: Rat,
    basis: Vec<usize>,
    n_struct: usize,
    n_slack: usize,
}

impl Tableau {
    fn ncols(&self) -> usize {
        self.n_struct + self.n_slack + self.b.len()
    }

    fn art_start(&self) -> usize {
        self.n_struct + self.n_slack
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let inv = self.a[row][col].recip();
        if !inv.is_one() {
            for v in self.a[row].iter_mut() {
                *v *= &inv;
            }
            self.b[row] *= &inv;
        }
        let (pivot_row, pivot_b) = (self.a[row].clone(), self.b[row].clone());
        for r in 0..self.a.len() {
            if r == row || self.a[r][col].is_zero() {
                continue;
            }
            let factor = self.a[r][col].clone();
            for (v, pv) in self.a[r].iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &factor * pv;
                }
            }
            self.b[r] -= &factor * &pivot_b;
        }
        if !self.cost[col].is_zero() {
            let factor = self.cost[col].clone();
            for (v, pv) in self.cost.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &factor * pv;
                }
            }
            self.z -= factor * pivot_b;
        }
        self.basis[row] = col;
    }

    /// Runs Bland-rule pivots until optimal or unbounded. `allowed`
    /// limits the columns that may enter.
    fn run(&mut self, allowed_max_col: usize) -> LpStatus {
        loop {
            // Entering: smallest column index with negative reduced cost.
            let Some(col) = (0..allowed_max_col).find(|&j| self.cost[j].is_negative()) else {
                return LpStatus::Optimal;
            };
            // Leaving: minimum ratio; ties broken by smallest basic column.
            let mut best: Option<(usize, Rat)> = None;
            for r in 0..self.a.len() {
                if !self.a[r][col].is_positive() {
                    continue;
                }
                let ratio = &self.b[r] / &self.a[r][col];
                match &best {
                    None => best = Some((r, ratio)),
                    Some((br, bratio)) => {
                        if ratio < *bratio
                            || (ratio == *bratio && self.basis[r] < self.basis[*br])
                        {
                            best = Some((r, ratio));
                        }
                    }
                }
            }
            match best {
                Some((row, _)) => self.pivot(row, col),
                None => return LpStatus::Unbounded,
            }
        }
    }
}

/// Solves the problem exactly. The returned solution always passes
/// `verify_solution` when optimal.
pub fn simplex_solve(problem: &LpProblem) -> Result<LpSolution, LpError> {
    let n = problem.n_vars;
    if problem.objective.len() != n {
        return Err(LpError::BadObjective {
            got: problem.objective.len(),
            n_vars: n,
        });
    }
    let m = problem.constraints.len();
    let n_slack = problem
        .constraints
        .iter()
        .filter(|c| c.cmp != Cmp::Eq)
        .count();

    // Row signs: flip rows to make b >= 0, remembering the flip so dual
    // values can be reported for the original orientation.
    let mut flipped = vec![false; m];
    let ncols = n + n_slack + m;
    let mut a = vec![vec![Rat::zero(); ncols]; m];
    let mut b = Vec::with_capacity(m);
    let mut slack_col_of_row = vec![usize::MAX; m];
    let mut slack_idx = 0;
    for (i, c) in problem.constraints.iter().enumerate() {
        for (var, coeff) in &c.coeffs {
            if *var >= n {
                return Err(LpError::BadColumn {
                    row: i,
                    var: *var,
                    n_vars: n,
                });
            }
            a[i][*var] += coeff;
        }
        match c.cmp {
            Cmp::Eq => {}
            Cmp::Le => {
                a[i][n + slack_idx] = Rat::one();
                slack_col_of_row[i] = n + slack_idx;
                slack_idx += 1;
            }
            Cmp::Ge => {
                a[i][n + slack_idx] = -Rat::one();
                slack_col_of_row[i] = n + slack_idx;
                slack_idx += 1;
            }
        }
        let mut rhs = c.rhs.clone();
        if rhs.is_negative() {
            flipped[i] = true;
            rhs = -rhs;
            for v in a[i].iter_mut() {
                if !v.is_zero() {
                    *v = -v.clone();
                }
            }
        }
        b.push(rhs);
    }
    // Artificial columns form the initial identity basis.
    let art_start = n + n_slack;
    let mut basis = Vec::with_capacity(m);
    for (i, row) in a.iter_mut().enumerate() {
        row[art_start + i] = Rat::one();
        basis.push(art_start + i);
    }

    // Phase I: minimize the sum of artificials. The initial reduced-cost
    // row is -(sum of constraint rows) on non-artificial columns.
    let mut cost = vec![Rat::zero(); ncols];
    let mut z = Rat::zero();
    for i in 0..m {
        for j in 0..art_start {
            if !a[i][j].is_zero() {
                let d = a[i][j].clone();
                cost[j] -= d;
            }
        }
        z += &b[i];
    }
    let mut tab = Tableau {
        a,
        b,
        cost,
        z,
        basis,
        n_struct: n,
        n_slack,
    };
    let phase1 = tab.run(art_start);
    debug_assert_eq!(phase1, LpStatus::Optimal, "phase I cannot be unbounded");
    if tab.z.is_positive() {
        // Infeasible. Phase-I duals: reduced cost of artificial i equals
        // 1 - y_i here (artificials cost 1), so y_i = 1 - redcost.
        let mut y = Vec::with_capacity(m);
        for i in 0..m {
            let mut yi = Rat::one() - &tab.cost[art_start + i];
            if flipped[i] {
                yi = -yi;
            }
            y.push(yi);
        }
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            primal: Vec::new(),
            objective: Rat::zero(),
            duals: Vec::new(),
            basis: tab.basis.clone(),
            farkas: Some(y),
        });
    }

    // Phase II: original costs; artificials stay at zero and are barred
    // from entering.
    let mut cost = vec![Rat::zero(); tab.ncols()];
    cost[..n].clone_from_slice(&problem.objective);
    let mut z = Rat::zero();
    for (r, &bcol) in tab.basis.iter().enumerate() {
        if cost[bcol].is_zero() {
            continue;
        }
        let factor = cost[bcol].clone();
        let row = tab.a[r].clone();
        for (v, pv) in cost.iter_mut().zip(&row) {
            if !pv.is_zero() {
                *v -= &factor * pv;
            }
        }
        z -= factor * &tab.b[r];
    }
    tab.cost = cost;
    tab.z = z;
    let status = tab.run(art_start);
    if status == LpStatus::Unbounded {
        return Ok(LpSolution {
            status,
            primal: Vec::new(),
            objective: Rat::zero(),
            duals: Vec::new(),
            basis: tab.basis.clone(),
            farkas: None,
        });
    }

    let mut primal = vec![Rat::zero(); n];
    for (r, &bcol) in tab.basis.iter().enumerate() {
        if bcol < n {
            primal[bcol] = tab.b[r].clone();
        }
    }
    // z tracks cost_row_0 - objective drift; the basic objective value is
    // -z offset... recompute directly for clarity and exactness.
    let objective: Rat = problem
        .objective
        .iter()
        .zip(&primal)
        .map(|(c, x)| c * x)
        .sum();
    // Duals: artificial column i started as e_i, so its final reduced
    // cost is 0 - y_i. Undo row flips.
    let mut duals = Vec::with_capacity(m);
    for i in 0..m {
        let mut yi = -tab.cost[art_start + i].clone();
        if flipped[i] {
            yi = -yi;
        }
        duals.push(yi);
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        primal,
        objective,
        duals,
        basis: tab.basis.clone(),
        farkas: None,
    })
}

/// Exact re-verification of an optimal solution: primal feasibility, dual
/// feasibility, complementary slackness, and matching objective values.
/// Independent of the pivoting path.
pub fn verify_solution(problem: &LpProblem, sol: &LpSolution) -> Result<(), String> {
    if sol.status != LpStatus::Optimal {
        return Err(format!("status {:?} is not optimal", sol.status));
    }
    let n = problem.n_vars;
    if sol.primal.len() != n || sol.duals.len() != problem.constraints.len() {
        return Err("solution dimensions do not match the problem".to_string());
    }
    for x in &sol.primal {
        if x.is_negative() {
            return Err("negative primal value".to_string());
        }
    }
    // Row activities and primal feasibility.
    let mut row_slack = Vec::with_capacity(problem.constraints.len());
    for (i, c) in problem.constraints.iter().enumerate() {
        let activity: Rat = c.coeffs.iter().map(|(j, v)| v * &sol.primal[*j]).sum();
        let slack = &c.rhs - &activity;
        let ok = match c.cmp {
            Cmp::Eq => slack.is_zero(),
            Cmp::Le => !slack.is_negative(),
            Cmp::Ge => !slack.is_positive(),
        };
        if !ok {
            return Err(format!("row {i} violated: activity {activity}, rhs {}", c.rhs));
        }
        row_slack.push(slack);
    }
    // Dual sign conditions.
    for (i, c) in problem.constraints.iter().enumerate() {
        match c.cmp {
            Cmp::Eq => {}
            Cmp::Le => {
                if sol.duals[i].is_positive() {
                    return Err(format!("dual of <= row {i} must be <= 0"));
                }
            }
            Cmp::Ge => {
                if sol.duals[i].is_negative() {
                    return Err(format!("dual of >= row {i} must be >= 0"));
                }
            }
        }
        // Complementary slackness on rows.
        if !sol.duals[i].is_zero() && !row_slack[i].is_zero() {
            return Err(format!("row {i}: nonzero dual with nonzero slack"));
        }
    }
    // Reduced costs over structural columns.
    let mut reduced = problem.objective.clone();
    for (i, c) in problem.constraints.iter().enumerate() {
        if sol.duals[i].is_zero() {
            continue;
        }
        for (j, v) in &c.coeffs {
            reduced[*j] -= &sol.duals[i] * v;
        }
    }
    for (j, r) in reduced.iter().enumerate() {
        if r.is_negative() {
            return Err(format!("negative reduced cost at column {j}"));
        }
        if !sol.primal[j].is_zero() && !r.is_zero() {
            return Err(format!("column {j}: positive value with nonzero reduced cost"));
        }
    }
    // Strong duality.
    let dual_obj: Rat = problem
        .constraints
        .iter()
        .zip(&sol.duals)
        .map(|(c, y)| y * &c.rhs)
        .sum();
    if dual_obj != sol.objective {
        return Err(format!(
            "duality gap: primal {} vs dual {}",
            sol.objective, dual_obj
        ));
    }
    let primal_obj: Rat = problem
        .objective
        .iter()
        .zip(&sol.primal)
        .map(|(c, x)| c * x)
        .sum();
    if primal_obj != sol.objective {
        return Err("stored objective does not match the primal point".to_string());
    }
    Ok(())
}

/// Checks a Farkas certificate against the problem: y.b > 0 while
/// y.A <= 0 on every structural column and y respects slack signs.
pub fn verify_farkas(problem: &LpProblem, y: &[Rat]) -> Result<(), String> {
    if y.len() != problem.constraints.len() {
        return Err("certificate length mismatch".to_string());
    }
    let mut combo = vec![Rat::zero(); problem.n_vars];
    let mut rhs = Rat::zero();
    for (c, yi) in problem.constraints.iter().zip(y) {
        match c.cmp {
            Cmp::Le => {
                if yi.is_positive() {
                    return Err("certificate must be <= 0 on <= rows".to_string());
                }
            }
            Cmp::Ge => {
                if yi.is_negative() {
                    return Err("certificate must be >= 0 on >= rows".to_string());
                }
            }
            Cmp::Eq => {}
        }
        for (j, v) in &c.coeffs {
            combo[*j] += yi * v;
        }
        rhs += yi * &c.rhs;
    }
    if !rhs.is_positive() {
        return Err("certificate has y.b <= 0".to_string());
    }
    for (j, v) in combo.iter().enumerate() {
        if v.is_positive() {
            return Err(format!("certificate has positive combination at column {j}"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn le(coeffs: Vec<(usize, Rat)>, rhs: Rat) -> LpConstraint {
        LpConstraint { coeffs, cmp: Cmp::Le, rhs }
    }

    fn eq(coeffs: Vec<(usize, Rat)>, rhs: Rat) -> LpConstraint {
        LpConstraint { coeffs, cmp: Cmp::Eq, rhs }
    }

    #[test]
    fn single_variable_equality() {
        let p = LpProblem {
            n_vars: 1,
            objective: vec![Rat::one()],
            constraints: vec![eq(vec![(0, Rat::one())], Rat::one())],
        };
        let sol = simplex_solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective, Rat::one());
        assert_eq!(sol.primal, vec![Rat::one()]);
        verify_solution(&p, &sol).unwrap();
    }

    #[test]
    fn degenerate_tie_terminates_with_certificate() {
        // Two identical binding rows create a degenerate vertex; Bland's
        // rule must still terminate and the certificate must verify.
        let p = LpProblem {
            n_vars: 2,
            objective: vec![-Rat::one(), -Rat::one()],
            constraints: vec![
                le(vec![(0, Rat::one()), (1, Rat::one())], Rat::one()),
                le(vec![(0, Rat::one()), (1, Rat::one())], Rat::one()),
                le(vec![(0, Rat::one())], rat(1, 2)),
            ],
        };
        let sol = simplex_solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective, -Rat::one());
        verify_solution(&p, &sol).unwrap();
    }

    #[test]
    fn classic_two_variable_lp() {
        // min -(3x + 5y) s.t. x <= 4, 2y <= 12, 3x + 2y <= 18.
        // Optimum at (2, 6) with value -36.
        let p = LpProblem {
            n_vars: 2,
            objective: vec![Rat::from_int(-3), Rat::from_int(-5)],
            constraints: vec![
                le(vec![(0, Rat::one())], Rat::from_int(4)),
                le(vec![(1, Rat::from_int(2))], Rat::from_int(12)),
                le(vec![(0, Rat::from_int(3)), (1, Rat::from_int(2))], Rat::from_int(18)),
            ],
        };
        let sol = simplex_solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective, Rat::from_int(-36));
        assert_eq!(sol.primal, vec![Rat::from_int(2), Rat::from_int(6)]);
        verify_solution(&p, &sol).unwrap();
    }

    #[test]
    fn infeasible_has_farkas_certificate() {
        // x  = 1 and x <= 1/2 cannot hold together.
        let p = LpProblem {
            n_vars: 1,
            objective: vec![Rat::zero()],
            constraints: vec![
                eq(vec![(0, Rat::one())], Rat::one()),
                le(vec![(0, Rat::one())], rat(1, 2)),
            ],
        };
        let sol = simplex_solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
        verify_farkas(&p, sol.farkas.as_ref().unwrap()).unwrap();
    }

    #[test]
    fn unbounded_is_detected() {
        let p = LpProblem {
            n_vars: 1,
            objective: vec![-Rat::one()],
            constraints: vec![LpConstraint {
                coeffs: vec![(0, Rat::one())],
                cmp: Cmp::Ge,
                rhs: Rat::one(),
            }],
        };
        let sol = simplex_solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn negative_rhs_rows_are_handled() {
        // min x + y s.t. -x - y <= -2  (i.e. x + y >= 2).
        let p = LpProblem {
            n_vars: 2,
            objective: vec![Rat::one(), Rat::one()],
            constraints: vec![le(
                vec![(0, -Rat::one()), (1, -Rat::one())],
                Rat::from_int(-2),
            )],
        };
        let sol = simplex_solve(&p).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective, Rat::from_int(2));
        verify_solution(&p, &sol).unwrap();
    }

    #[test]
    fn duals_recover_lagrange_multipliers() {
        // min x s.t. x >= 3. Dual of the >= row must be 1.
        let p = LpProblem {
            n_vars: 1,
            objective: vec![Rat::one()],
            constraints: vec![LpConstraint {
                coeffs: vec![(0, Rat::one())],
                cmp: Cmp::Ge,
                rhs: Rat::from_int(3),
            }],
        };
        let sol = simplex_solve(&p).unwrap();
        assert_eq!(sol.objective, Rat::from_int(3));
        assert_eq!(sol.duals, vec![Rat::one()]);
        verify_solution(&p, &sol).unwrap();
    }

    /// Brute-force oracle: enumerate all basic solutions of {Ax = b (after
    /// slacks), x >= 0} by choosing basis sets, and take the best feasible
    /// objective. Exact, factorial in size, fine for tiny LPs.
    fn brute_force_optimum(p: &LpProblem) -> Option<Rat> {
        // Convert to equalities with slack variables.
        let n = p.n_vars;
        let n_slack = p.constraints.iter().filter(|c| c.cmp != Cmp::Eq).count();
        let total = n + n_slack;
        let m = p.constraints.len();
        let mut a = vec![vec![Rat::zero(); total]; m];
        let mut b = Vec::new();
        let mut cost = vec![Rat::zero(); total];
        cost[..n].clone_from_slice(&p.objective);
        let mut si = 0;
        for (i, c) in p.constraints.iter().enumerate() {
            for (j, v) in &c.coeffs {
                a[i][*j] += v;
            }
            match c.cmp {
                Cmp::Eq => {}
                Cmp::Le => {
                    a[i][n + si] = Rat::one();
                    si += 1;
                }
                Cmp::Ge => {
                    a[i][n + si] = -Rat::one();
                    si += 1;
                }
            }
            b.push(c.rhs.clone());
        }
        // Enumerate column subsets of size m, solve the square system by
        // Gaussian elimination, keep feasible ones.
        let mut best: Option<Rat> = None;
        let cols: Vec<usize> = (0..total).collect();
        let mut choose = vec![0usize; m];
        fn rec(
            cols: &[usize],
            k: usize,
            start: usize,
            choose: &mut Vec<usize>,
            a: &Vec<Vec<Rat>>,
            b: &Vec<Rat>,
            cost: &Vec<Rat>,
            total: usize,
            best: &mut Option<Rat>,
        ) {
            let m = b.len();
            if k == m {
                // Solve A_B x_B = b exactly.
                let mut mat: Vec<Vec<Rat>> =
                    (0..m).map(|i| choose.iter().map(|&j| a[i][j].clone()).collect()).collect();
                let mut rhs = b.clone();
                for col in 0..m {
                    let Some(pr) = (col..m).find(|&r| !mat[r][col].is_zero()) else {
                        return;
                    };
                    mat.swap(col, pr);
                    rhs.swap(col, pr);
                    let inv = mat[col][col].recip();
                    for v in mat[col].iter_mut() {
                        *v *= &inv;
                    }
                    rhs[col] *= &inv;
                    for r in 0..m {
                        if r != col && !mat[r][col].is_zero() {
                            let f = mat[r][col].clone();
                            let prow = mat[col].clone();
                            for (v, pv) in mat[r].iter_mut().zip(&prow) {
                                *v -= &f * pv;
                            }
                            let pb = rhs[col].clone();
                            rhs[r] -= &f * &pb;
                        }
                    }
                }
                let mut x = vec![Rat::zero(); total];
                for (i, &j) in choose.iter().enumerate() {
                    if rhs[i].is_negative() {
                        return;
                    }
                    x[j] = rhs[i].clone();
                }
                let obj: Rat = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
                match best {
                    None => *best = Some(obj),
                    Some(cur) => {
                        if obj < *cur {
                            *best = Some(obj);
                        }
                    }
                }
                return;
            }
            for i in start..cols.len() {
                choose[k] = cols[i];
                rec(cols, k + 1, i + 1, choose, a, b, cost, total, best);
            }
        }
        rec(&cols, 0, 0, &mut choose, &a, &b, &cost, total, &mut best);
        best
    }

    #[test]
    fn agrees_with_basic_solution_enumeration() {
        let problems = vec![
            LpProblem {
                n_vars: 3,
                objective: vec![rat(2, 1), rat(-1, 2), rat(1, 3)],
                constraints: vec![
                    eq(vec![(0, Rat::one()), (1, Rat::one()), (2, Rat::one())], Rat::one()),
                    le(vec![(1, Rat::one())], rat(2, 3)),
                ],
            },
            LpProblem {
                n_vars: 2,
                objective: vec![rat(1, 1), rat(3, 1)],
                constraints: vec![
                    LpConstraint {
                        coeffs: vec![(0, Rat::one()), (1, rat(2, 1))],
                        cmp: Cmp::Ge,
                        rhs: rat(3, 1),
                    },
                    le(vec![(0, Rat::one())], rat(5, 2)),
                ],
            },
        ];
        for p in problems {
            let sol = simplex_solve(&p).unwrap();
            assert_eq!(sol.status, LpStatus::Optimal);
            verify_solution(&p, &sol).unwrap();
            assert_eq!(Some(sol.objective.clone()), brute_force_optimum(&p));
        }
    }
}
