//! Small dense two-phase simplex with Bland's rule.
//!
//! Only meant for oracle-sized problems (a few hundred rows); every pivot
//! touches the whole tableau.

use crate::error::{Error, Result};

const EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

/// `maximize c.x` subject to `eq` rows (`a.x = b`), `le` rows (`a.x <= b`), `x >= 0`.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub le: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.ncols]
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = col;
    }

    /// Maximizes `cost` over columns `< allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        for _ in 0..MAX_PIVOTS {
            // Bland: lowest index with positive reduced profit
            let entering = (0..allowed).find(|&j| {
                let z: f64 = self.basis.iter().zip(&self.rows).map(|(&b, row)| cost[b] * row[j]).sum();
                cost[j] - z > EPS
            });
            let Some(col) = entering else {
                return Ok(());
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[col] > EPS {
                    let ratio = row[self.ncols] / row[col];
                    let better = match best {
                        None => true,
                        Some((r, _, b)) => ratio < r - EPS || (ratio <= r + EPS && self.basis[i] < b),
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            let Some((_, r, _)) = best else {
                return Err(Error::Invalid("linear program is unbounded".into()));
            };
            self.pivot(r, col);
        }
        Err(Error::Consistency("simplex pivot limit reached".into()))
    }
}

pub fn maximize(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.objective.len();
    let n_le = lp.le.len();
    let m = lp.eq.len() + n_le;
    let n_real = n + n_le;
    let ncols = n_real + m;
    let mut rows = Vec::with_capacity(m);
    for (k, (a, b)) in lp.le.iter().chain(&lp.eq).enumerate() {
        assert_eq!(a.len(), n, "row length must match the objective");
        let mut row = vec![0.0; ncols + 1];
        row[..n].copy_from_slice(a);
        if k < n_le {
            row[n + k] = 1.0;
        }
        row[ncols] = *b;
        if *b < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        row[n_real + k] = 1.0;
        rows.push(row);
    }
    let mut tab = Tableau {
        rows,
        basis: (n_real..ncols).collect(),
        ncols,
    };

    let mut phase1 = vec![0.0; ncols];
    for c in phase1.iter_mut().skip(n_real) {
        *c = -1.0;
    }
    tab.optimize(&phase1, n_real)?;
    let infeasibility: f64 = (0..m).filter(|&i| tab.basis[i] >= n_real).map(|i| tab.rhs(i)).sum();
    if infeasibility > 1e-9 {
        return Err(Error::Invalid(format!(
            "linear program is infeasible (phase one residual {infeasibility:e})"
        )));
    }
    for i in 0..m {
        if tab.basis[i] >= n_real {
            if let Some(j) = (0..n_real).find(|&j| tab.rows[i][j].abs() > 1e-9) {
                tab.pivot(i, j);
            }
        }
    }

    let mut cost = vec![0.0; ncols];
    cost[..n].copy_from_slice(&lp.objective);
    tab.optimize(&cost, n_real)?;
    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rhs(i);
        }
    }
    let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
    Ok(LpSolution { objective, x })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let lp = LinearProgram {
            objective: vec![3.0, 5.0],
            eq: vec![],
            le: vec![(vec![1.0, 0.0], 4.0), (vec![0.0, 2.0], 12.0), (vec![3.0, 2.0], 18.0)],
        };
        let s = maximize(&lp).unwrap();
        assert!((s.objective - 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_infeasibility() {
        // max x - y, x + y = 1, x <= 0.25
        let lp = LinearProgram {
            objective: vec![1.0, -1.0],
            eq: vec![(vec![1.0, 1.0], 1.0)],
            le: vec![(vec![1.0, 0.0], 0.25)],
        };
        let s = maximize(&lp).unwrap();
        assert!((s.objective + 0.5).abs() < 1e-12);
        let bad = LinearProgram {
            objective: vec![1.0],
            eq: vec![(vec![1.0], 2.0)],
            le: vec![(vec![1.0], 1.0)],
        };
        assert!(maximize(&bad).is_err());
    }

    #[test]
    fn unbounded() {
        let lp = LinearProgram {
            objective: vec![1.0, 0.0],
            eq: vec![(vec![0.0, 1.0], 1.0)],
            le: vec![],
        };
        assert!(maximize(&lp).is_err());
    }
}
