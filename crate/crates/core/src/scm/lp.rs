//! Small dense two-phase simplex with Bland's rule.
//!
//! Solves `min cᵀx` subject to `G x ≥ h` and `0 ≤ x ≤ u`.

use crate::error::{Error, Result};

const EPS: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

struct Tableau {
    rows: usize,
    cols: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.t[r * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.t[pr * w + pc];
        for c in 0..w {
            self.t[pr * w + c] /= p;
        }
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                for c in 0..w {
                    self.t[r * w + c] -= f * self.t[pr * w + c];
                }
            }
        }
        self.basis[pr] = pc;
    }

    /// Minimizes `cost·x` over the current feasible basis; `allowed` masks entering columns.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<()> {
        for _ in 0..10_000 {
            let mut enter = None;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut red = cost[j];
                for r in 0..self.rows {
                    red -= cost[self.basis[r]] * self.at(r, j);
                }
                if red < -EPS {
                    enter = Some(j);
                    break;
                }
            }
            let Some(pc) = enter else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > EPS {
                    let ratio = self.rhs(r) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lv)) => ratio < lv - EPS || (ratio <= lv + EPS && self.basis[r] < self.basis[lr]),
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((pr, _)) = leave else { return Err(Error::Lp("unbounded".into())) };
            self.pivot(pr, pc);
        }
        Err(Error::Lp("iteration limit".into()))
    }
}

/// Minimizes `cᵀx` with `g·x ≥ h` and `0 ≤ x ≤ ub`.
pub fn minimize(c: &[f64], g: &[Vec<f64>], h: &[f64], ub: &[f64]) -> Result<LpSolution> {
    let n = c.len();
    let mg = g.len();
    if h.len() != mg || ub.len() != n || g.iter().any(|r| r.len() != n) {
        return Err(Error::Lp("inconsistent problem dimensions".into()));
    }
    let rows = mg + n;
    // Columns: x (n), surplus (mg), upper slack (n), artificial (rows).
    let cols = n + mg + n + rows;
    let w = cols + 1;
    let mut t = vec![0.0; rows * w];
    for (r, (row, &hr)) in g.iter().zip(h).enumerate() {
        let sign = if hr < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[r * w + j] = sign * row[j];
        }
        t[r * w + n + r] = -sign;
        t[r * w + cols] = sign * hr;
    }
    for i in 0..n {
        let r = mg + i;
        t[r * w + i] = 1.0;
        t[r * w + n + mg + i] = 1.0;
        t[r * w + cols] = ub[i];
    }
    for r in 0..rows {
        t[r * w + n + mg + n + r] = 1.0;
    }
    let basis = (0..rows).map(|r| n + mg + n + r).collect();
    let mut tab = Tableau { rows, cols, t, basis };
    let art0 = n + mg + n;
    let mut phase1 = vec![0.0; cols];
    for v in phase1.iter_mut().skip(art0) {
        *v = 1.0;
    }
    tab.optimize(&phase1, &vec![true; cols])?;
    let infeas: f64 = (0..rows).filter(|&r| tab.basis[r] >= art0).map(|r| tab.rhs(r)).sum();
    let scale = 1.0 + h.iter().chain(ub).fold(0.0f64, |m, v| m.max(v.abs()));
    if infeas > 1e-9 * scale {
        return Err(Error::Lp(format!("infeasible (phase one residual {infeas:e})")));
    }
    for r in 0..rows {
        if tab.basis[r] >= art0 {
            if let Some(j) = (0..art0).find(|&j| tab.at(r, j).abs() > EPS && !tab.basis.contains(&j)) {
                tab.pivot(r, j);
            }
        }
    }
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    let mut allowed = vec![true; cols];
    for a in allowed.iter_mut().skip(art0) {
        *a = false;
    }
    tab.optimize(&cost, &allowed)?;
    let mut x = vec![0.0; n];
    for r in 0..rows {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs(r).clamp(0.0, ub[tab.basis[r]]);
        }
    }
    let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(LpSolution { x, objective })
}
