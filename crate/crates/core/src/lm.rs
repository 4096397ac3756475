//! Small dense Levenberg-Marquardt solver with Marquardt scaling and a
//! forward-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop once the relative cost decrease of an accepted step falls below
    /// this.
    pub tol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-12, initial_lambda: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub cost: f64,
    pub iterations: usize,
    /// `false` only when `max_iter` was exhausted.
    pub converged: bool,
}

const MAX_DAMPING_TRIES: usize = 60;

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn jacobian<F>(residuals: &F, p: &[f64], r0: &[f64]) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut jac = DMatrix::<f64>::zeros(r0.len(), p.len());
    let mut q = p.to_vec();
    for i in 0..p.len() {
        let h = 1e-7 * p[i].abs().max(1e-8);
        q[i] = p[i] + h;
        let ri = residuals(&q)?;
        q[i] = p[i];
        for (row, (a, b)) in ri.iter().zip(r0).enumerate() {
            jac[(row, i)] = (a - b) / h;
        }
    }
    jac.iter().all(|v| v.is_finite()).then_some(jac)
}

/// Minimises `sum r(p)^2`. `residuals` returns `None` where the model is
/// undefined; such points are treated as infinitely bad.
///
/// Returns `None` if the starting point itself is undefined.
pub fn minimize<F>(residuals: F, p0: &[f64], opts: &LmOptions) -> Option<LmOutcome>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut p = p0.to_vec();
    let mut r = residuals(&p)?;
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return None;
    }
    let mut lambda = opts.initial_lambda;

    for iter in 0..opts.max_iter {
        if cost == 0.0 {
            return Some(LmOutcome { params: p, cost, iterations: iter, converged: true });
        }
        let Some(jac) = jacobian(&residuals, &p, &r) else {
            return Some(LmOutcome { params: p, cost, iterations: iter, converged: true });
        };
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);
        let diag_floor = jtj.diagonal().max() * 1e-300;
        let diag: Vec<f64> = jtj.diagonal().iter().map(|d| d.max(diag_floor)).collect();

        let mut accepted = None;
        for _ in 0..MAX_DAMPING_TRIES {
            let mut lhs = jtj.clone();
            for (i, d) in diag.iter().enumerate() {
                lhs[(i, i)] += lambda * d;
            }
            let step = lhs.lu().solve(&(-&grad));
            if let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) {
                let q: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                if let Some(rq) = residuals(&q) {
                    let cq = cost_of(&rq);
                    if cq.is_finite() && cq < cost {
                        accepted = Some((q, rq, cq));
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }

        // No damping level improves the cost: a stationary point.
        let Some((q, rq, cq)) = accepted else {
            return Some(LmOutcome { params: p, cost, iterations: iter, converged: true });
        };
        let rel = (cost - cq) / cost.max(f64::MIN_POSITIVE);
        p = q;
        r = rq;
        cost = cq;
        lambda = (lambda / 10.0).max(1e-12);
        if rel < opts.tol {
            return Some(LmOutcome { params: p, cost, iterations: iter + 1, converged: true });
        }
    }
    Some(LmOutcome { params: p, cost, iterations: opts.max_iter, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |p: &[f64]| Some(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]);
        let out = minimize(f, &[-1.2, 1.0], &LmOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 1.0).abs() < 1e-6 && (out.params[1] - 1.0).abs() < 1e-6);
        assert!(out.cost < 1e-12);
    }

    #[test]
    fn exponential_fit() {
        let ts: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let data: Vec<f64> = ts.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let f = |p: &[f64]| Some(ts.iter().zip(&data).map(|(t, y)| p[0] * (-p[1] * t).exp() - y).collect());
        let out = minimize(f, &[1.0, 0.5], &LmOptions::default()).unwrap();
        assert!((out.params[0] - 2.5).abs() < 1e-8 && (out.params[1] - 1.3).abs() < 1e-8);
    }

    #[test]
    fn undefined_start_and_region() {
        assert!(minimize(|_: &[f64]| None, &[1.0], &LmOptions::default()).is_none());
        // sqrt is undefined below zero; the solver must not step there.
        let f = |p: &[f64]| (p[0] >= 0.0).then(|| vec![p[0].sqrt() - 0.5]);
        let out = minimize(f, &[4.0], &LmOptions::default()).unwrap();
        assert!((out.params[0] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn iteration_cap_reported() {
        let f = |p: &[f64]| Some(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]);
        let out = minimize(f, &[-1.2, 1.0], &LmOptions { max_iter: 2, ..Default::default() }).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }
}
