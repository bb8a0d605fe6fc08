//! Dense phase-one simplex for feasibility of `A x (≤ | ≥ | =) b, x ≥ 0`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self { coeffs, relation, rhs }
    }

    /// Amount by which `x` violates the constraint.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    /// Phase-one optimum: sum of artificial variables left at the end.
    Infeasible {
        residual: f64,
    },
    IterationLimit,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
/// Consecutive degenerate pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 50;

/// Minimizes the sum of artificial variables; the system is feasible when
/// that optimum is at most `tol · (1 + ‖b‖₁)`.
pub fn phase_one(vars: usize, constraints: &[Constraint], max_iterations: usize, tol: f64) -> Result<Feasibility> {
    for (i, c) in constraints.iter().enumerate() {
        if c.coeffs.len() != vars {
            return Err(Error::DimensionMismatch {
                context: "simplex row",
                expected: vars,
                actual: c.coeffs.len(),
            });
        }
        if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("simplex row {i} is not finite")));
        }
    }
    let m = constraints.len();
    // Normalize to non-negative right-hand sides.
    let rows: Vec<(Vec<f64>, Relation, f64)> = constraints
        .iter()
        .map(|c| {
            if c.rhs < 0.0 {
                let flipped = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (c.coeffs.iter().map(|v| -v).collect(), flipped, -c.rhs)
            } else {
                (c.coeffs.clone(), c.relation, c.rhs)
            }
        })
        .collect();
    let slacks = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let artificials = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let first_art = vars + slacks;
    let width = vars + slacks + artificials + 1;
    let rhs_col = width - 1;

    let mut tab = vec![0.0; m * width];
    let mut basis = vec![0usize; m];
    let (mut s, mut a) = (vars, first_art);
    for (i, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        let row = &mut tab[i * width..(i + 1) * width];
        row[..vars].copy_from_slice(coeffs);
        row[rhs_col] = *rhs;
        match rel {
            Relation::Le => {
                row[s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Relation::Ge => {
                row[s] = -1.0;
                s += 1;
                row[a] = 1.0;
                basis[i] = a;
                a += 1;
            }
            Relation::Eq => {
                row[a] = 1.0;
                basis[i] = a;
                a += 1;
            }
        }
    }
    // Reduced costs of the phase-one objective.
    let mut cost = vec![0.0; width];
    for i in 0..m {
        if basis[i] >= first_art {
            for j in 0..width {
                cost[j] -= tab[i * width + j];
            }
        }
    }
    for j in first_art..rhs_col {
        cost[j] += 1.0;
    }

    let b_norm: f64 = rows.iter().map(|r| r.2).sum();
    let mut stalled = 0;
    let mut bland = false;
    let mut iterations = 0;
    loop {
        let entering = if bland {
            (0..first_art).find(|&j| cost[j] < -COST_TOL)
        } else {
            (0..first_art)
                .filter(|&j| cost[j] < -COST_TOL)
                .min_by(|&x, &y| cost[x].total_cmp(&cost[y]))
        };
        let Some(col) = entering else { break };
        if iterations == max_iterations {
            return Ok(Feasibility::IterationLimit);
        }
        iterations += 1;

        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let aij = tab[i * width + col];
            if aij > PIVOT_TOL {
                let ratio = tab[i * width + rhs_col] / aij;
                let better = match leave {
                    None => true,
                    Some((r, best)) => ratio < best - 1e-12 || (ratio <= best + 1e-12 && basis[i] < basis[r]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        // Phase one is bounded below by zero, so a column with no
        // positive entry cannot improve it further.
        let Some((row, ratio)) = leave else { break };
        if ratio <= 1e-12 {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                bland = true;
            }
        } else {
            stalled = 0;
        }
        pivot(&mut tab, width, row, col);
        let factor = cost[col];
        for j in 0..width {
            cost[j] -= factor * tab[row * width + j];
        }
        basis[row] = col;
    }

    let residual: f64 = (0..m)
        .filter(|&i| basis[i] >= first_art)
        .map(|i| tab[i * width + rhs_col])
        .sum();
    if residual > tol * (1.0 + b_norm) {
        return Ok(Feasibility::Infeasible { residual });
    }
    let mut x = vec![0.0; vars];
    for i in 0..m {
        if basis[i] < vars {
            x[basis[i]] = tab[i * width + rhs_col].max(0.0);
        }
    }
    Ok(Feasibility::Feasible(x))
}

fn pivot(tab: &mut [f64], width: usize, row: usize, col: usize) {
    let p = tab[row * width + col];
    for j in 0..width {
        tab[row * width + j] /= p;
    }
    let pivot_row: Vec<f64> = tab[row * width..(row + 1) * width].to_vec();
    for (i, chunk) in tab.chunks_mut(width).enumerate() {
        if i == row {
            continue;
        }
        let f = chunk[col];
        if f != 0.0 {
            for (v, p) in chunk.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    use proptest::prelude::*;

    fn check(vars: usize, cons: &[Constraint]) -> Feasibility {
        phase_one(vars, cons, 10_000, 1e-9).unwrap()
    }

    #[test]
    fn simple_feasible_box() {
        let cons = vec![
            Constraint::new(vec![1.0, 1.0], Relation::Ge, 1.0),
            Constraint::new(vec![1.0, 0.0], Relation::Le, 0.7),
            Constraint::new(vec![1.0, -1.0], Relation::Eq, 0.0),
        ];
        let Feasibility::Feasible(x) = check(2, &cons) else {
            panic!()
        };
        assert!(cons.iter().all(|c| c.violation(&x) < 1e-9));
    }

    #[test]
    fn contradiction_is_infeasible() {
        let cons = vec![
            Constraint::new(vec![1.0], Relation::Ge, 2.0),
            Constraint::new(vec![1.0], Relation::Le, 1.0),
        ];
        assert!(matches!(check(1, &cons), Feasibility::Infeasible { .. }));
    }

    #[test]
    fn negative_rhs_is_flipped() {
        let cons = vec![Constraint::new(vec![-1.0, -2.0], Relation::Le, -3.0)];
        let Feasibility::Feasible(x) = check(2, &cons) else {
            panic!()
        };
        assert!(x[0] + 2.0 * x[1] >= 3.0 - 1e-9);
    }

    #[test]
    fn iteration_cap_reported() {
        let cons: Vec<_> = (0..5)
            .map(|i| {
                let mut c = vec![0.0; 5];
                c[i] = 1.0;
                Constraint::new(c, Relation::Ge, 1.0)
            })
            .collect();
        assert_eq!(phase_one(5, &cons, 2, 1e-9).unwrap(), Feasibility::IterationLimit);
    }

    fn minilp_feasible(vars: usize, cons: &[Constraint]) -> bool {
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let xs: Vec<_> = (0..vars).map(|_| p.add_var(0.0, (0.0, f64::INFINITY))).collect();
        for c in cons {
            let expr: Vec<_> = xs.iter().zip(&c.coeffs).map(|(v, a)| (*v, *a)).collect();
            let op = match c.relation {
                Relation::Le => ComparisonOp::Le,
                Relation::Ge => ComparisonOp::Ge,
                Relation::Eq => ComparisonOp::Eq,
            };
            p.add_constraint(expr.as_slice(), op, c.rhs);
        }
        p.solve().is_ok()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn agrees_with_reference_solver(
            seed in prop::collection::vec(-3.0f64..3.0, 4 * 6),
            rhs in prop::collection::vec(-2.0f64..2.0, 6),
            rels in prop::collection::vec(0u8..3, 6),
        ) {
            let cons: Vec<Constraint> = (0..6)
                .map(|i| {
                    let relation = match rels[i] { 0 => Relation::Le, 1 => Relation::Ge, _ => Relation::Eq };
                    Constraint::new(seed[i * 4..(i + 1) * 4].to_vec(), relation, rhs[i])
                })
                .collect();
            let ours = check(4, &cons);
            prop_assert_eq!(ours.is_feasible(), minilp_feasible(4, &cons));
            if let Feasibility::Feasible(x) = ours {
                prop_assert!(cons.iter().all(|c| c.violation(&x) < 1e-7));
            }
        }
    }
}
