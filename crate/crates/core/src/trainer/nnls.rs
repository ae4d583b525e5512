//! Lawson-Hanson active-set solver for `min ||A x - b||` subject to `x >= 0`.
//!
//! Columns and the target are rescaled by powers of two before solving, so
//! the scaling itself is exact. Convergence and the reported KKT residual
//! use the gradient normalized by column and target norms, which makes the
//! tolerance dimensionless.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    /// Columns that are identically zero; their entry is fixed at 0.
    pub zero_columns: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

fn pow2_scale(norm: f64) -> f64 {
    if norm > 0.0 && norm.is_finite() {
        2f64.powi(norm.log2().round() as i32)
    } else {
        1.0
    }
}

struct Scaled {
    a: DMatrix<f64>,
    b: DVector<f64>,
    col_scale: Vec<f64>,
    b_scale: f64,
    col_norm: Vec<f64>,
    b_norm: f64,
}

impl Scaled {
    fn new(a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        let mut a = a.clone();
        let mut col_scale = Vec::with_capacity(a.ncols());
        let mut col_norm = Vec::with_capacity(a.ncols());
        for j in 0..a.ncols() {
            let s = pow2_scale(a.column(j).norm());
            a.column_mut(j).scale_mut(1.0 / s);
            col_scale.push(s);
            col_norm.push(a.column(j).norm());
        }
        let b_scale = pow2_scale(b.norm());
        let b = b / b_scale;
        let b_norm = b.norm();
        Scaled {
            a,
            b,
            col_scale,
            b_scale,
            col_norm,
            b_norm,
        }
    }

    /// Negative gradient `A^T (b - A y)`, normalized per column.
    fn dual(&self, y: &DVector<f64>) -> Vec<f64> {
        let r = &self.b - &self.a * y;
        let g = self.a.tr_mul(&r);
        g.iter()
            .zip(&self.col_norm)
            .map(|(&gj, &cn)| {
                if cn > 0.0 && self.b_norm > 0.0 {
                    gj / (cn * self.b_norm)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Unconstrained least squares on the passive columns, one refinement
    /// step included. Entries outside `passive` are zero.
    fn solve_passive(&self, passive: &[usize]) -> DVector<f64> {
        let n = self.a.ncols();
        let mut z = DVector::zeros(n);
        if passive.is_empty() {
            return z;
        }
        let sub = self.a.select_columns(passive);
        let qr = sub.clone().qr();
        let r = qr.r();
        let solve = |rhs: &DVector<f64>| -> DVector<f64> {
            let mut qtb = rhs.clone();
            qr.q_tr_mul(&mut qtb);
            let k = passive.len();
            let top = qtb.rows(0, k).into_owned();
            r.solve_upper_triangular(&top)
                .unwrap_or_else(|| DVector::from_element(k, f64::NAN))
        };
        let mut sol = solve(&self.b);
        let residual = &self.b - &sub * &sol;
        let correction = solve(&residual);
        if correction.iter().all(|c| c.is_finite()) {
            sol += correction;
        }
        for (pos, &j) in passive.iter().enumerate() {
            z[j] = sol[pos];
        }
        z
    }
}

fn kkt_residual(dual: &[f64], passive: &[bool], active_zero: &[bool]) -> f64 {
    dual.iter()
        .zip(passive)
        .zip(active_zero)
        .map(|((&w, &p), &zero_col)| {
            if zero_col {
                0.0
            } else if p {
                w.abs()
            } else {
                w.max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Solves the nonnegative least squares problem.
///
/// `tol` bounds the normalized KKT residual at termination; `max_iterations`
/// caps the number of variables moved into the passive set. When the cap is
/// hit the current feasible iterate is returned with `converged = false`.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iterations: usize) -> NnlsSolution {
    let n = a.ncols();
    let scaled = Scaled::new(a, b);
    let zero_columns: Vec<bool> = scaled.col_norm.iter().map(|&c| c == 0.0).collect();

    let mut y = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let mut blocked = vec![false; n];
    let mut iterations = 0;
    let mut converged = false;
    let inner_cap = 3 * n + 10;

    while iterations < max_iterations {
        let dual = scaled.dual(&y);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !zero_columns[j] && !blocked[j])
            .filter(|&j| dual[j] > tol)
            .fold(None, |best: Option<usize>, j| match best {
                Some(b) if dual[b] >= dual[j] => Some(b),
                _ => Some(j),
            });
        let Some(t) = candidate else {
            converged = true;
            break;
        };
        iterations += 1;
        passive[t] = true;

        let mut first = true;
        for _ in 0..inner_cap {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let z = scaled.solve_passive(&idx);
            if first && !(z[t] > 0.0) {
                // Numerically dependent column: reject and try the next one.
                passive[t] = false;
                blocked[t] = true;
                break;
            }
            first = false;
            if idx.iter().all(|&j| z[j] > 0.0) {
                y = z;
                blocked.iter_mut().for_each(|b| *b = false);
                break;
            }
            // Step back towards y until the first passive entry hits zero.
            let (blocking, alpha) = idx
                .iter()
                .filter(|&&j| !(z[j] > 0.0))
                .map(|&j| (j, y[j] / (y[j] - z[j])))
                .fold((usize::MAX, f64::INFINITY), |best, cur| {
                    if cur.1 < best.1 {
                        cur
                    } else {
                        best
                    }
                });
            for &j in &idx {
                y[j] += alpha * (z[j] - y[j]);
            }
            if blocking != usize::MAX {
                y[blocking] = 0.0;
            }
            for &j in &idx {
                if y[j] <= 0.0 {
                    y[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }

    for j in 0..n {
        if !passive[j] {
            y[j] = 0.0;
        }
    }
    let dual = scaled.dual(&y);
    let kkt = kkt_residual(&dual, &passive, &zero_columns);
    if converged && kkt > tol {
        converged = false;
    }
    let x = (0..n)
        .map(|j| {
            let v = y[j] * scaled.b_scale / scaled.col_scale[j];
            if v > 0.0 {
                v
            } else {
                0.0
            }
        })
        .collect();
    NnlsSolution {
        x,
        zero_columns,
        iterations,
        converged,
        kkt_residual: kkt,
    }
}
