//! Over-dispersed Poisson GLM on incremental values:
//! `log m_ik = c + α_i + β_k` with `α_1 = β_1 = 0`, fitted by IRLS.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::chain_ladder::RunOff;

const TOLERANCE: f64 = 1e-8;
const MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub intercept: f64,
    /// Origin effects, `origin[0] = 0`.
    pub origin: Vec<f64>,
    /// Development effects, `development[0] = 0`.
    pub development: Vec<f64>,
    /// Pearson χ² / (N − p); `None` when the fit is saturated.
    pub dispersion: Option<f64>,
    /// Fitted means on the observed cells.
    pub fitted: Vec<Vec<f64>>,
    pub deviance: f64,
    pub iterations: usize,
    /// Observed cumulative values followed by cumulated predictions.
    pub completed: Vec<Vec<f64>>,
}

impl GlmFit {
    pub fn mean(&self, i: usize, k: usize) -> f64 {
        (self.intercept + self.origin[i] + self.development[k]).exp()
    }

    pub fn ultimate(&self, i: usize) -> f64 {
        *self.completed[i].last().expect("rows are nonempty")
    }

    pub fn reserves(&self, data: &RunOff) -> Vec<f64> {
        (0..data.origins()).map(|i| self.ultimate(i) - data.latest(i)).collect()
    }

    pub fn total_reserve(&self, data: &RunOff) -> f64 {
        self.reserves(data).iter().sum()
    }
}

fn column_name(j: usize, origins: usize) -> String {
    match j {
        0 => "intercept".to_string(),
        j if j < origins => format!("origin {}", j + 1),
        j => format!("development period {}", j - origins + 2),
    }
}

/// Modified Gram–Schmidt over the design columns; returns the first column
/// lying in the span of its predecessors.
fn first_aliased(x: &DMatrix<f64>) -> Option<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..x.ncols() {
        let mut v = x.column(j).into_owned();
        let norm0 = v.norm();
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            return Some(j);
        }
        basis.push(v / norm);
    }
    None
}

fn deviance(y: &[f64], mu: &[f64]) -> f64 {
    2.0 * y
        .iter()
        .zip(mu)
        .map(|(&y, &m)| {
            let t = if y > 0.0 { y * (y / m).ln() } else { 0.0 };
            t - (y - m)
        })
        .sum::<f64>()
}

pub fn odp_glm(data: &RunOff) -> Result<GlmFit> {
    let (m, dev) = (data.origins(), data.dev_periods());
    let mut cells = Vec::new();
    let mut y = Vec::new();
    for i in 0..m {
        for (k, v) in data.incrementals(i).into_iter().enumerate() {
            if v < 0.0 {
                return Err(Error::invalid(format!(
                    "origin {} has a negative incremental value at development period {}",
                    i + 1,
                    k + 1
                )));
            }
            cells.push((i, k));
            y.push(v);
        }
    }
    let n = y.len();
    let p = m + dev - 1;
    let mut x = DMatrix::<f64>::zeros(n, p);
    for (r, &(i, k)) in cells.iter().enumerate() {
        x[(r, 0)] = 1.0;
        if i > 0 {
            x[(r, i)] = 1.0;
        }
        if k > 0 {
            x[(r, m + k - 1)] = 1.0;
        }
    }
    if let Some(j) = first_aliased(&x) {
        return Err(Error::invalid(format!(
            "design matrix is rank deficient: {} is aliased",
            column_name(j, m)
        )));
    }
    let yv = DVector::from_column_slice(&y);

    let mut mu: Vec<f64> = y.iter().map(|v| v + 0.1).collect();
    let mut eta = DVector::from_iterator(n, mu.iter().map(|v| v.ln()));
    let mut dev_trail = vec![deviance(&y, &mu)];
    let mut b = DVector::zeros(p);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let w = DVector::from_column_slice(&mu);
        let z = DVector::from_fn(n, |r, _| eta[r] + (yv[r] - mu[r]) / mu[r]);
        let mut xtw = x.transpose();
        for (mut col, &wi) in xtw.column_iter_mut().zip(w.iter()) {
            col *= wi;
        }
        let lhs = &xtw * &x;
        let rhs = &xtw * z;
        b = match lhs.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => lhs
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::numerical("IRLS weighted normal equations are singular"))?,
        };
        eta = &x * &b;
        mu = eta.iter().map(|e| e.exp()).collect();
        let d = deviance(&y, &mu);
        let prev = *dev_trail.last().expect("trail is nonempty");
        dev_trail.push(d);
        if !d.is_finite() {
            break;
        }
        if (d - prev).abs() / (d.abs() + 0.1) < TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        let tail: Vec<String> = dev_trail
            .iter()
            .rev()
            .take(5)
            .rev()
            .map(|d| format!("{d:.6e}"))
            .collect();
        return Err(Error::numerical(format!(
            "IRLS did not converge after {iterations} iterations; deviance trail [{}]",
            tail.join(", ")
        )));
    }

    let intercept = b[0];
    let mut origin = vec![0.0; m];
    origin[1..].copy_from_slice(&b.as_slice()[1..m]);
    let mut development = vec![0.0; dev];
    development[1..].copy_from_slice(&b.as_slice()[m..]);

    let chi2: f64 = y.iter().zip(&mu).map(|(y, m)| (y - m) * (y - m) / m).sum();
    let dispersion = (n > p).then(|| chi2 / (n - p) as f64);

    let mut fitted = vec![Vec::new(); m];
    for (&(i, _), &v) in cells.iter().zip(&mu) {
        fitted[i].push(v);
    }
    let mut fit = GlmFit {
        intercept,
        origin,
        development,
        dispersion,
        fitted,
        deviance: *dev_trail.last().expect("trail is nonempty"),
        iterations,
        completed: Vec::new(),
    };
    fit.completed = (0..m)
        .map(|i| {
            let mut row = data.row(i).to_vec();
            let mut acc = data.latest(i);
            for k in row.len()..dev {
                acc += fit.mean(i, k);
                row.push(acc);
            }
            row
        })
        .collect();
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::chain_ladder::chain_ladder;

    fn from_effects(c: f64, a: &[f64], b: &[f64], staircase: bool) -> RunOff {
        let (m, d) = (a.len(), b.len());
        let rows = (0..m)
            .map(|i| {
                let len = if staircase { (m - i).min(d) } else { d };
                let mut acc = 0.0;
                (0..len)
                    .map(|k| {
                        acc += (c + a[i] + b[k]).exp();
                        acc
                    })
                    .collect()
            })
            .collect();
        RunOff::from_cumulative(d, rows).unwrap()
    }

    #[test]
    fn recovers_generating_effects() {
        let a = [0.0, 0.3, -0.2, 0.1, 0.5, -0.4];
        let b = [0.0, -0.5, -1.2, -2.0];
        let data = from_effects(3.0, &a, &b, true);
        let fit = odp_glm(&data).unwrap();
        assert!((fit.intercept - 3.0).abs() < 1e-6);
        for (x, y) in fit.origin.iter().zip(a) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
        for (x, y) in fit.development.iter().zip(b) {
            assert!((x - y).abs() < 1e-6);
        }
        assert_eq!((fit.origin[0], fit.development[0]), (0.0, 0.0));
        assert!(fit.deviance < 1e-8);
    }

    #[test]
    fn matches_chain_ladder_reserve() {
        let rows = vec![
            vec![12.0, 30.0, 41.0, 45.0],
            vec![9.0, 26.0, 33.0, 38.0],
            vec![15.0, 31.0, 44.0, 47.0],
            vec![11.0, 28.0, 37.0],
            vec![14.0, 35.0],
            vec![10.0],
        ];
        let data = RunOff::from_cumulative(4, rows).unwrap();
        let glm = odp_glm(&data).unwrap();
        let cl = chain_ladder(&data).unwrap();
        let (g, c) = (glm.total_reserve(&data), cl.total_reserve(&data));
        assert!((g - c).abs() < 1e-6 * c, "{g} vs {c}");
        for i in 0..data.origins() {
            assert!((glm.ultimate(i) - cl.ultimate(i)).abs() < 1e-6 * cl.ultimate(i));
        }
        assert!(glm.dispersion.unwrap() > 0.0);
    }

    #[test]
    fn complete_rectangle_has_no_reserve() {
        let data = from_effects(1.0, &[0.0, 0.2, 0.4], &[0.0, -0.3], false);
        let fit = odp_glm(&data).unwrap();
        assert_eq!(fit.total_reserve(&data), 0.0);
        assert!((fit.origin[2] - 0.4).abs() < 1e-6);
    }

    #[test]
    fn single_cell_rows_are_rank_deficient() {
        let data = RunOff::from_cumulative(3, vec![vec![4.0], vec![5.0], vec![6.0]]).unwrap();
        let err = odp_glm(&data).unwrap_err();
        assert!(err.to_string().contains("development period 2"), "{err}");
    }

    #[test]
    fn unobserved_development_period_is_named() {
        let data = RunOff::from_cumulative(4, vec![vec![4.0, 6.0], vec![5.0, 8.0], vec![1.0]]).unwrap();
        let err = odp_glm(&data).unwrap_err();
        assert!(err.to_string().contains("development period 3 is aliased"), "{err}");
    }

    #[test]
    fn zero_cells_are_allowed() {
        let rows = vec![vec![3.0, 3.0, 5.0], vec![0.0, 2.0, 2.0], vec![4.0, 6.0], vec![2.0]];
        let data = RunOff::from_cumulative(3, rows).unwrap();
        let glm = odp_glm(&data).unwrap();
        let cl = chain_ladder(&data).unwrap();
        assert!((glm.total_reserve(&data) - cl.total_reserve(&data)).abs() < 1e-6 * cl.total_reserve(&data));
    }
}
