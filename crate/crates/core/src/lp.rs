//! Dense two-phase simplex with Bland's rule, sized for the small programs
//! that show up in minmax and equilibrium computations.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("pivot limit reached")]
    PivotLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// `min c.x  s.t.  eq rows, <= rows, x >= 0`.
#[derive(Debug, Clone)]
pub struct Lp {
    n: usize,
    c: Vec<f64>,
    eq: Vec<(Vec<f64>, f64)>,
    le: Vec<(Vec<f64>, f64)>,
}

impl Lp {
    pub fn new(n: usize) -> Self {
        Lp {
            n,
            c: vec![0.0; n],
            eq: Vec::new(),
            le: Vec::new(),
        }
    }

    pub fn minimize(&mut self, c: Vec<f64>) -> &mut Self {
        assert_eq!(c.len(), self.n);
        self.c = c;
        self
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        assert_eq!(row.len(), self.n);
        self.eq.push((row, rhs));
        self
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        assert_eq!(row.len(), self.n);
        self.le.push((row, rhs));
        self
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_le(row.into_iter().map(|v| -v).collect(), -rhs)
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.n;
        let n_slack = self.le.len();
        let m = self.eq.len() + n_slack;
        let n_art = m;
        let width = n + n_slack + n_art;
        let rhs = width;

        let mut t: Vec<Vec<f64>> = Vec::with_capacity(m);
        for (k, (row, b)) in self.eq.iter().chain(self.le.iter()).enumerate() {
            let mut r = vec![0.0; width + 1];
            r[..n].copy_from_slice(row);
            if k >= self.eq.len() {
                r[n + k - self.eq.len()] = 1.0;
            }
            r[rhs] = *b;
            if *b < 0.0 {
                for v in r.iter_mut() {
                    *v = -*v;
                }
            }
            r[n + n_slack + k] = 1.0;
            t.push(r);
        }
        let mut basis: Vec<usize> = (0..m).map(|k| n + n_slack + k).collect();

        // Phase 1: minimise the sum of artificials.
        let mut obj = vec![0.0; width + 1];
        for r in &t {
            for j in 0..n + n_slack {
                obj[j] -= r[j];
            }
            obj[rhs] -= r[rhs];
        }
        run(&mut t, &mut basis, &mut obj, width)?;
        let scale = 1.0 + t.iter().map(|r| r[rhs].abs()).fold(0.0, f64::max);
        if -obj[rhs] > FEAS_TOL * scale {
            return Err(LpError::Infeasible);
        }

        // Drive artificials out of the basis, dropping redundant rows.
        let mut i = 0;
        while i < t.len() {
            if basis[i] >= n + n_slack {
                match (0..n + n_slack).find(|&j| t[i][j].abs() > PIVOT_TOL) {
                    Some(j) => {
                        pivot(&mut t, &mut obj, i, j);
                        basis[i] = j;
                    }
                    None => {
                        t.remove(i);
                        basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }

        // Phase 2.
        let mut obj = vec![0.0; width + 1];
        obj[..n].copy_from_slice(&self.c);
        for (r, &b) in t.iter().zip(&basis) {
            let cb = if b < n { self.c[b] } else { 0.0 };
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(r) {
                    *o -= cb * v;
                }
            }
        }
        run(&mut t, &mut basis, &mut obj, n + n_slack)?;

        let mut x = vec![0.0; n];
        for (r, &b) in t.iter().zip(&basis) {
            if b < n {
                x[b] = r[rhs].max(0.0);
            }
        }
        let objective = self.c.iter().zip(&x).map(|(c, x)| c * x).sum();
        Ok(LpSolution { x, objective })
    }
}

fn pivot(t: &mut [Vec<f64>], obj: &mut [f64], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i == row {
            continue;
        }
        let f = r[col];
        if f != 0.0 {
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            r[col] = 0.0;
        }
    }
    let f = obj[col];
    if f != 0.0 {
        for (v, pv) in obj.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
        obj[col] = 0.0;
    }
}

/// Bland's rule: lowest-index entering column, ties in the ratio test broken
/// by lowest basic variable.
fn run(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    obj: &mut [f64],
    allowed: usize,
) -> Result<(), LpError> {
    let rhs = obj.len() - 1;
    for _ in 0..MAX_PIVOTS {
        let Some(enter) = (0..allowed).find(|&j| obj[j] < -PIVOT_TOL) else {
            return Ok(());
        };
        let mut leave: Option<(usize, f64)> = None;
        for (i, r) in t.iter().enumerate() {
            if r[enter] > PIVOT_TOL {
                let ratio = r[rhs].max(0.0) / r[enter];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((l, best)) => {
                        if ratio < best - 1e-12 || (ratio <= best + 1e-12 && basis[i] < basis[l]) {
                            Some((i, ratio))
                        } else {
                            Some((l, best))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else {
            return Err(LpError::Unbounded);
        };
        pivot(t, obj, row, enter);
        basis[row] = enter;
    }
    Err(LpError::PivotLimit)
}
