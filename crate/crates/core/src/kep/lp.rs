//! Dense revised simplex for packing relaxations
//! `max c.x  s.t.  sum_{j covers r} x_j <= b_r for every row r,  x >= 0`
//! with `b >= 0`.
//!
//! Rows are pairs (b = 1) or odd-set cuts, columns are cycles. The
//! all-slack basis is feasible, so
//! only phase two is needed. Dantzig pricing, with Bland's rule while
//! stalling on degenerate pivots.

const PRICE_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_STREAK: usize = 30;

#[derive(Clone, Debug)]
pub struct LpSolution {
    /// Primal objective of the final basis.
    pub objective: f64,
    /// Upper bound on the relaxation optimum derived from a scaled
    /// dual-feasible point; never below `objective` beyond rounding.
    pub bound: f64,
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    /// Reduced cost `c_j - y.A_j` of column `j` (non-positive at optimum).
    pub fn reduced_cost(&self, col: &[usize], cost: f64) -> f64 {
        cost - col.iter().map(|&r| self.duals[r]).sum::<f64>()
    }

    pub fn is_integral(&self) -> bool {
        self.x.iter().all(|&v| v < 1e-7 || v > 1.0 - 1e-7)
    }
}

struct Simplex<'a, C> {
    m: usize,
    rhs: &'a [f64],
    n: usize,
    cols: &'a [C],
    costs: &'a [f64],
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    beta: Vec<f64>,
}

impl<'a, C: AsRef<[usize]>> Simplex<'a, C> {
    fn cost(&self, var: usize) -> f64 {
        if var < self.n {
            self.costs[var]
        } else {
            0.0
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (k, &var) in self.basis.iter().enumerate() {
            let c = self.cost(var);
            if c != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for (yi, b) in y.iter_mut().zip(row) {
                    *yi += c * b;
                }
            }
        }
        y
    }

    fn column(&self, var: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        if var < self.n {
            for (k, a) in alpha.iter_mut().enumerate() {
                let row = &self.binv[k * m..(k + 1) * m];
                *a = self.cols[var].as_ref().iter().map(|&r| row[r]).sum();
            }
        } else {
            let i = var - self.n;
            for (k, a) in alpha.iter_mut().enumerate() {
                *a = self.binv[k * m + i];
            }
        }
        alpha
    }

    /// Recomputes the basis inverse by Gauss-Jordan elimination.
    fn refactor(&mut self) {
        let m = self.m;
        let mut b: Vec<f64> = vec![0.0; m * m];
        for (k, &var) in self.basis.iter().enumerate() {
            if var < self.n {
                for &r in self.cols[var].as_ref() {
                    b[r * m + k] = 1.0;
                }
            } else {
                b[(var - self.n) * m + k] = 1.0;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m).max_by(|&a, &b2| b[a * m + c].abs().total_cmp(&b[b2 * m + c].abs())).unwrap();
            if b[p * m + c].abs() < 1e-12 {
                // singular basis; keep the current inverse
                return;
            }
            if p != c {
                for j in 0..m {
                    b.swap(p * m + j, c * m + j);
                    inv.swap(p * m + j, c * m + j);
                }
            }
            let piv = b[c * m + c];
            for j in 0..m {
                b[c * m + j] /= piv;
                inv[c * m + j] /= piv;
            }
            for r in 0..m {
                if r != c {
                    let f = b[r * m + c];
                    if f != 0.0 {
                        for j in 0..m {
                            b[r * m + j] -= f * b[c * m + j];
                            inv[r * m + j] -= f * inv[c * m + j];
                        }
                    }
                }
            }
        }
        // inv is B^{-1} with rows indexed by basis position
        self.binv = inv;
        for k in 0..m {
            let v: f64 = self.binv[k * m..(k + 1) * m].iter().zip(self.rhs).map(|(a, b)| a * b).sum();
            self.beta[k] = v.max(0.0);
        }
    }

    fn pivot(&mut self, p: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let ap = alpha[p];
        for j in 0..m {
            self.binv[p * m + j] /= ap;
        }
        self.beta[p] /= ap;
        let (prow, bp) = (self.binv[p * m..(p + 1) * m].to_vec(), self.beta[p]);
        for k in 0..m {
            if k != p && alpha[k] != 0.0 {
                let f = alpha[k];
                let row = &mut self.binv[k * m..(k + 1) * m];
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                self.beta[k] -= f * bp;
                if self.beta[k] < 0.0 {
                    self.beta[k] = 0.0;
                }
            }
        }
        self.is_basic[self.basis[p]] = false;
        self.is_basic[q] = true;
        self.basis[p] = q;
    }
}

/// Solves the packing relaxation with right-hand sides `rhs`. `cols[j]`
/// lists the rows covered by column `j`, with objective coefficient
/// `costs[j]`.
pub fn solve_packing_lp<C: AsRef<[usize]>>(rhs: &[f64], cols: &[C], costs: &[f64]) -> LpSolution {
    assert_eq!(cols.len(), costs.len());
    let (m, n) = (rhs.len(), cols.len());
    let mut binv = vec![0.0; m * m];
    for i in 0..m {
        binv[i * m + i] = 1.0;
    }
    let mut is_basic = vec![false; n + m];
    for flag in &mut is_basic[n..] {
        *flag = true;
    }
    let mut s = Simplex { m, rhs, n, cols, costs, basis: (n..n + m).collect(), is_basic, binv, beta: rhs.to_vec() };

    let max_iters = 50 * (n + m) + 1000;
    let mut iterations = 0;
    let mut streak = 0;
    let mut y = s.duals();
    while iterations < max_iters {
        let bland = streak >= DEGENERATE_STREAK;
        let mut entering: Option<(usize, f64)> = None;
        for var in 0..n + m {
            if s.is_basic[var] {
                continue;
            }
            let d =
                if var < n { costs[var] - cols[var].as_ref().iter().map(|&r| y[r]).sum::<f64>() } else { -y[var - n] };
            if d > PRICE_TOL {
                if bland {
                    entering = Some((var, d));
                    break;
                }
                if entering.is_none_or(|(_, best)| d > best) {
                    entering = Some((var, d));
                }
            }
        }
        let Some((q, dq)) = entering else { break };
        let alpha = s.column(q);
        let mut leave: Option<(usize, f64)> = None;
        for k in 0..m {
            if alpha[k] > PIVOT_TOL {
                let ratio = s.beta[k] / alpha[k];
                leave = match leave {
                    None => Some((k, ratio)),
                    Some((lk, lr)) => {
                        let better = if (ratio - lr).abs() <= 1e-12 {
                            if bland {
                                s.basis[k] < s.basis[lk]
                            } else {
                                alpha[k] > alpha[lk]
                            }
                        } else {
                            ratio < lr
                        };
                        if better {
                            Some((k, ratio))
                        } else {
                            Some((lk, lr))
                        }
                    }
                };
            }
        }
        // bounded by construction: every column covers at least one row
        let Some((p, theta)) = leave else { break };
        streak = if theta <= 1e-12 { streak + 1 } else { 0 };
        s.pivot(p, q, &alpha);
        iterations += 1;
        if iterations % REFACTOR_EVERY == 0 {
            s.refactor();
            y = s.duals();
        } else {
            for (yi, b) in y.iter_mut().zip(&s.binv[p * m..(p + 1) * m]) {
                *yi += dq * b;
            }
        }
    }

    let mut x = vec![0.0; n];
    for (k, &var) in s.basis.iter().enumerate() {
        if var < n {
            x[var] = s.beta[k];
        }
    }
    let objective: f64 = x.iter().zip(costs).map(|(a, c)| a * c).sum();
    let y = s.duals();
    let bound = dual_bound(&y, rhs, cols, costs);
    LpSolution { objective, bound: bound.max(objective), x, duals: y, iterations }
}

/// Scales the non-negative part of `y` until it covers every column; the
/// scaled dual objective bounds the relaxation from above.
fn dual_bound<C: AsRef<[usize]>>(y: &[f64], rhs: &[f64], cols: &[C], costs: &[f64]) -> f64 {
    let y: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    let mut scale: f64 = 1.0;
    for (col, &c) in cols.iter().zip(costs) {
        if c <= 0.0 {
            continue;
        }
        let cover: f64 = col.as_ref().iter().map(|&r| y[r]).sum();
        if cover <= 0.0 {
            return costs.iter().filter(|c| **c > 0.0).sum();
        }
        scale = scale.max(c / cover);
    }
    scale * y.iter().zip(rhs).map(|(a, b)| a * b).sum::<f64>() * (1.0 + 1e-12)
}
