//! Dense two-phase simplex with Bland's rule.
//!
//! Solves `max c.x  s.t.  A x = b, x >= 0`. Primal values and row duals are
//! recomputed from the final basis with an LU solve on the original data.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg, Error, Result};

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per row; rows found redundant get 0.
    pub duals: Vec<f64>,
    pub dual_objective: f64,
    /// `max_j (c_j - y.A_j)`; non-positive up to rounding at an optimum.
    pub dual_infeasibility: f64,
    pub redundant_rows: Vec<usize>,
}

impl LpSolution {
    fn not_optimal(status: LpStatus, n: usize, m: usize) -> Self {
        Self {
            status,
            x: vec![0.0; n],
            objective: f64::NAN,
            duals: vec![0.0; m],
            dual_objective: f64::NAN,
            dual_infeasibility: f64::NAN,
            redundant_rows: Vec::new(),
        }
    }
}

struct Tableau {
    width: usize,
    rows: Vec<f64>,
    rhs_col: usize,
    basis: Vec<usize>,
    d: Vec<f64>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.rows[i * self.width + j]
    }

    fn n_rows(&self) -> usize {
        self.basis.len()
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let pv = self.at(r, e);
        for v in &mut self.rows[r * w..(r + 1) * w] {
            *v /= pv;
        }
        let prow: Vec<f64> = self.rows[r * w..(r + 1) * w].to_vec();
        for i in 0..self.n_rows() {
            if i == r {
                continue;
            }
            let f = self.rows[i * w + e];
            if f != 0.0 {
                for (v, p) in self.rows[i * w..(i + 1) * w].iter_mut().zip(&prow) {
                    *v -= f * p;
                }
                self.rows[i * w + e] = 0.0;
            }
        }
        let f = self.d[e];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(&prow) {
                *v -= f * p;
            }
            self.d[e] = 0.0;
        }
        self.basis[r] = e;
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let w = self.width;
        self.d = cost.to_vec();
        self.d.resize(w, 0.0);
        for i in 0..self.n_rows() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    self.d[j] -= cb * self.rows[i * w + j];
                }
            }
        }
    }

    /// Bland iterations over columns `< allowed`. Returns false if unbounded.
    fn run(&mut self, allowed: usize, pivots: &mut usize) -> Result<bool> {
        loop {
            let Some(e) = (0..allowed).find(|&j| self.d[j] > COST_TOL) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.n_rows() {
                let t = self.at(i, e);
                if t <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.at(i, self.rhs_col).max(0.0) / t;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        if ratio < best - 1e-13 || (ratio <= best + 1e-13 && self.basis[i] < self.basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            self.pivot(r, e);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(Error::Numerical("simplex pivot limit reached".into()));
            }
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let (m, n) = lp.a.shape();
    if lp.b.len() != m || lp.c.len() != n {
        return arg("linear program dimensions disagree");
    }
    if lp.a.iter().chain(&lp.b).chain(&lp.c).any(|v| !v.is_finite()) {
        return arg("linear program has non-finite data");
    }
    let width = n + m + 1;
    let rhs_col = n + m;
    let mut rows = vec![0.0; m * width];
    for i in 0..m {
        let sign = if lp.b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            rows[i * width + j] = sign * lp.a[(i, j)];
        }
        rows[i * width + n + i] = 1.0;
        rows[i * width + rhs_col] = sign * lp.b[i];
    }
    let mut tab = Tableau { width, rows, rhs_col, basis: (n..n + m).collect(), d: Vec::new() };
    let mut pivots = 0;

    let mut phase1 = vec![0.0; n + m];
    phase1[n..].fill(-1.0);
    tab.set_costs(&phase1);
    tab.run(n + m, &mut pivots)?;
    let infeas: f64 = (0..m).filter(|&i| tab.basis[i] >= n).map(|i| tab.at(i, rhs_col)).sum();
    let scale = lp.b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if infeas > FEAS_TOL * scale {
        return Ok(LpSolution::not_optimal(LpStatus::Infeasible, n, m));
    }

    // Drive artificials out of the basis; rows where that is impossible are redundant.
    let mut redundant = Vec::new();
    for i in 0..m {
        if tab.basis[i] < n {
            continue;
        }
        let best = (0..n)
            .map(|j| (j, tab.at(i, j).abs()))
            .filter(|&(_, v)| v > 1e-9)
            .max_by(|x, y| x.1.total_cmp(&y.1));
        match best {
            Some((j, _)) => tab.pivot(i, j),
            None => redundant.push(i),
        }
    }
    if !redundant.is_empty() {
        let keep: Vec<usize> = (0..m).filter(|i| !redundant.contains(i)).collect();
        let mut rows = Vec::with_capacity(keep.len() * width);
        for &i in &keep {
            rows.extend_from_slice(&tab.rows[i * width..(i + 1) * width]);
        }
        tab.rows = rows;
        tab.basis = keep.iter().map(|&i| tab.basis[i]).collect();
    }

    let mut cost = lp.c.clone();
    cost.resize(n + m, 0.0);
    tab.set_costs(&cost);
    if !tab.run(n, &mut pivots)? {
        return Ok(LpSolution::not_optimal(LpStatus::Unbounded, n, m));
    }

    let keep: Vec<usize> = (0..m).filter(|i| !redundant.contains(i)).collect();
    let k = keep.len();
    let basis = tab.basis.clone();
    let bmat = DMatrix::from_fn(k, k, |i, j| lp.a[(keep[i], basis[j])]);
    let rhs = DVector::from_fn(k, |i, _| lp.b[keep[i]]);
    let cb = DVector::from_fn(k, |j, _| lp.c[basis[j]]);
    let lu = bmat.clone().lu();
    let xb = lu.solve(&rhs);
    let y = bmat.transpose().lu().solve(&cb);
    let (Some(xb), Some(y)) = (xb, y) else {
        return Err(Error::Numerical("final simplex basis is singular".into()));
    };
    let mut x = vec![0.0; n];
    for (j, &col) in basis.iter().enumerate() {
        let v = xb[j];
        if v < -1e-7 {
            return Err(Error::Numerical(format!("basic variable {col} is {v:.3e} after refinement")));
        }
        x[col] = v.max(0.0);
    }
    let mut duals = vec![0.0; m];
    for (i, &row) in keep.iter().enumerate() {
        duals[row] = y[i];
    }
    let objective: f64 = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    let dual_objective: f64 = duals.iter().zip(&lp.b).map(|(y, b)| y * b).sum();
    let dual_infeasibility = (0..n)
        .map(|j| lp.c[j] - (0..m).map(|i| duals[i] * lp.a[(i, j)]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        duals,
        dual_objective,
        dual_infeasibility,
        redundant_rows: redundant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(a: &[&[f64]], b: &[f64], c: &[f64]) -> LinearProgram {
        let m = a.len();
        let n = a[0].len();
        LinearProgram { a: DMatrix::from_fn(m, n, |i, j| a[i][j]), b: b.to_vec(), c: c.to_vec() }
    }

    #[test]
    fn textbook_max() {
        // max 3x + 5y, x + s1 = 4, 2y + s2 = 12, 3x + 2y + s3 = 18 -> (2, 6), 36
        let p = lp(
            &[&[1., 0., 1., 0., 0.], &[0., 2., 0., 1., 0.], &[3., 2., 0., 0., 1.]],
            &[4., 12., 18.],
            &[3., 5., 0., 0., 0.],
        );
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        assert!((s.dual_objective - 36.0).abs() < 1e-12);
        assert!(s.dual_infeasibility <= 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let p = lp(&[&[1., 1.]], &[-1.], &[1., 0.]);
        assert_eq!(solve(&p).unwrap().status, LpStatus::Infeasible);
        let p = lp(&[&[1., -1.]], &[1.], &[1., 0.]);
        assert_eq!(solve(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_row_is_dropped() {
        let p = lp(&[&[1., 1., 0.], &[2., 2., 0.], &[0., 1., 1.]], &[1., 2., 1.], &[1., 2., 0.]);
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.redundant_rows.len(), 1);
        assert!((s.objective - 2.0).abs() < 1e-12);
        assert!((s.objective - s.dual_objective).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example, which cycles under the largest-coefficient rule.
        let p = lp(
            &[
                &[0.25, -8., -1., 9., 1., 0., 0.],
                &[0.5, -12., -0.5, 3., 0., 1., 0.],
                &[0., 0., 1., 0., 0., 0., 1.],
            ],
            &[0., 0., 1.],
            &[0.75, -20., 0.5, -6., 0., 0., 0.],
        );
        let s = solve(&p).unwrap();
        assert!((s.objective - 1.25).abs() < 1e-12, "{}", s.objective);
    }
}
