//! Derivative-free minimization by linear approximation on a simplex
//! (unconstrained COBYLA).
//!
//! Two radii are kept: the resolution `ρ`, which only decreases, and the
//! trust radius `Δ ≥ ρ`, which follows the reduction ratio of each step.

use crate::error::{QstError, Result};

pub const DEFAULT_RHOEND: f64 = 1e-4;

const ACCEPT_RATIO: f64 = 0.1;
const EXPAND_RATIO: f64 = 0.7;
const FAR_FACTOR: f64 = 2.1;
const FLAT_FACTOR: f64 = 0.25;
const GEOMETRY_STEP: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct CobylaOutput {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    /// Best value seen after each evaluation.
    pub history: Vec<f64>,
}

struct Evaluator<F> {
    f: F,
    evals: usize,
    best: f64,
    history: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Evaluator<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        let v = (self.f)(x);
        // Non-finite values are treated as very poor points.
        let v = if v.is_nan() { f64::INFINITY } else { v };
        self.evals += 1;
        self.best = self.best.min(v);
        self.history.push(self.best);
        v
    }
}

/// Inverse of a square matrix stored row-major, or `None` if singular.
fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..n {
            if i != col && a[i][col] != 0.0 {
                let factor = a[i][col];
                for j in 0..n {
                    a[i][j] -= factor * a[col][j];
                    inv[i][j] -= factor * inv[col][j];
                }
            }
        }
    }
    if inv.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    Some(inv)
}

fn reduce_rho(rho: f64, rhoend: f64) -> f64 {
    let r = rho / rhoend;
    if r > 250.0 {
        0.1 * rho
    } else if r > 16.0 {
        (rho * rhoend).sqrt()
    } else {
        rhoend
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes `f` from `x0` with initial trust radius `rhobeg`, stopping when
/// the radius falls below `rhoend` or after `maxiter` evaluations. The
/// returned point is the best one evaluated, so `fx ≤ f(x0)`.
pub fn cobyla_minimize<F>(f: F, x0: &[f64], rhobeg: f64, rhoend: f64, maxiter: usize) -> Result<CobylaOutput>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Err(QstError::InvalidArgument("no variables to optimize".into()));
    }
    if maxiter < n + 2 {
        return Err(QstError::InvalidArgument(format!(
            "maxiter {maxiter} cannot cover the {}-point initial simplex plus one step",
            n + 1
        )));
    }
    if !(rhobeg > 0.0) || !(rhoend > 0.0) || rhoend > rhobeg {
        return Err(QstError::InvalidArgument(format!(
            "need 0 < rhoend <= rhobeg, got rhobeg {rhobeg}, rhoend {rhoend}"
        )));
    }
    let mut ev = Evaluator {
        f,
        evals: 0,
        best: f64::INFINITY,
        history: Vec::with_capacity(maxiter),
    };
    let mut xb = x0.to_vec();
    let mut fb = ev.call(&xb);
    if !fb.is_finite() {
        return Err(QstError::InvalidArgument("objective is not finite at x0".into()));
    }
    let mut rho = rhobeg;
    let mut delta = rhobeg;

    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut fv: Vec<f64> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = xb.clone();
        v[j] += rho;
        fv.push(ev.call(&v));
        verts.push(v);
    }
    let promote = |xb: &mut Vec<f64>, fb: &mut f64, verts: &mut Vec<Vec<f64>>, fv: &mut Vec<f64>| {
        if let Some(j) = (0..fv.len()).filter(|&j| fv[j] < *fb).min_by(|&a, &b| fv[a].total_cmp(&fv[b])) {
            std::mem::swap(xb, &mut verts[j]);
            std::mem::swap(fb, &mut fv[j]);
        }
    };
    promote(&mut xb, &mut fb, &mut verts, &mut fv);

    while ev.evals < maxiter {
        let edges: Vec<Vec<f64>> = verts
            .iter()
            .map(|v| v.iter().zip(&xb).map(|(a, b)| a - b).collect())
            .collect();
        let inv = match invert(&edges) {
            Some(inv) => inv,
            None => {
                // Degenerate simplex: rebuild it around the best point.
                for j in 0..n {
                    if ev.evals >= maxiter {
                        break;
                    }
                    let mut v = xb.clone();
                    v[j] += rho;
                    fv[j] = ev.call(&v);
                    verts[j] = v;
                }
                promote(&mut xb, &mut fb, &mut verts, &mut fv);
                continue;
            }
        };
        // Linear model gradient: edges · g = fv - fb.
        let diffs: Vec<f64> = fv.iter().map(|v| v - fb).collect();
        let g: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| inv[i][j] * diffs[j]).sum())
            .collect();
        let gnorm = norm(&g);

        let mut dnorm = 0.0;
        if gnorm > 0.0 && gnorm.is_finite() {
            dnorm = delta;
            let d: Vec<f64> = g.iter().map(|gi| -delta * gi / gnorm).collect();
            let x: Vec<f64> = xb.iter().zip(&d).map(|(a, b)| a + b).collect();
            let fx = ev.call(&x);
            let predicted = delta * gnorm;
            let ratio = (fb - fx) / predicted;
            let good_step = ratio > ACCEPT_RATIO;
            delta = if !good_step {
                0.5 * dnorm
            } else if ratio <= EXPAND_RATIO {
                (0.5 * delta).max(dnorm)
            } else {
                (0.5 * delta).max(2.0 * dnorm)
            };
            if delta <= 1.5 * rho {
                delta = rho;
            }

            // σ = E⁻ᵀ d gives the volume factor for replacing each vertex.
            let target = (0..n)
                .map(|j| {
                    let sigma: f64 = (0..n).map(|i| inv[i][j] * d[i]).sum();
                    let dist = norm(&verts[j].iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
                    (j, sigma.abs() * (dist / delta).max(1.0).powi(2))
                })
                .max_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((j, score)) = target {
                if fx < fb {
                    verts[j] = std::mem::replace(&mut xb, x);
                    fv[j] = std::mem::replace(&mut fb, fx);
                } else if score > 0.0 && fx.is_finite() {
                    verts[j] = x;
                    fv[j] = fx;
                }
            }
            if good_step {
                continue;
            }
        }
        if dnorm == 0.0 {
            // Flat model: no step was tried, so tighten the trust radius.
            delta = if 0.5 * delta <= 1.5 * rho { rho } else { 0.5 * delta };
        }
        if ev.evals >= maxiter {
            break;
        }

        // Geometry check before shrinking the radii.
        let edges: Vec<Vec<f64>> = verts
            .iter()
            .map(|v| v.iter().zip(&xb).map(|(a, b)| a - b).collect())
            .collect();
        if let Some(inv) = invert(&edges) {
            let far = (0..n)
                .map(|j| (j, norm(&edges[j])))
                .filter(|&(_, len)| len > FAR_FACTOR * delta)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            let flat = || {
                (0..n)
                    .map(|j| {
                        let col: Vec<f64> = (0..n).map(|i| inv[i][j]).collect();
                        (j, 1.0 / norm(&col))
                    })
                    .filter(|&(_, h)| h < FLAT_FACTOR * delta)
                    .min_by(|a, b| a.1.total_cmp(&b.1))
            };
            if let Some((j, _)) = far.or_else(flat) {
                let col: Vec<f64> = (0..n).map(|i| inv[i][j]).collect();
                let cn = norm(&col);
                let slope: f64 = col.iter().zip(&g).map(|(a, b)| a * b).sum();
                let sign = if slope > 0.0 { -1.0 } else { 1.0 };
                let v: Vec<f64> = xb
                    .iter()
                    .zip(&col)
                    .map(|(a, c)| a + sign * GEOMETRY_STEP * delta * c / cn)
                    .collect();
                let fnew = ev.call(&v);
                if fnew < fb {
                    verts[j] = std::mem::replace(&mut xb, v);
                    fv[j] = std::mem::replace(&mut fb, fnew);
                } else {
                    verts[j] = v;
                    fv[j] = fnew;
                }
                continue;
            }
        }
        if delta.max(dnorm) > rho {
            continue;
        }
        if rho <= rhoend {
            break;
        }
        let next = reduce_rho(rho, rhoend);
        delta = (0.5 * rho).max(next);
        rho = next;
    }

    Ok(CobylaOutput {
        x: xb,
        fx: fb,
        evals: ev.evals,
        history: ev.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_from_three_four() {
        let out = cobyla_minimize(|x| x[0] * x[0] + x[1] * x[1], &[3.0, 4.0], 1.0, DEFAULT_RHOEND, 150)
            .unwrap();
        assert!(out.fx < 1e-3, "f* = {}", out.fx);
        assert!(out.evals <= 150);
    }

    #[test]
    fn constant_objective_returns_start() {
        let x0 = [0.3, -1.2, 2.0];
        let out = cobyla_minimize(|_| 5.0, &x0, 0.5, DEFAULT_RHOEND, 100).unwrap();
        assert_eq!(out.x, x0.to_vec());
        assert_eq!(out.fx, 5.0);
    }

    #[test]
    fn budget_is_honoured() {
        let mut count = 0;
        let out = cobyla_minimize(
            |x| {
                count += 1;
                x.iter().map(|v| v.sin()).sum::<f64>()
            },
            &[0.1; 6],
            30.0,
            DEFAULT_RHOEND,
            150,
        )
        .unwrap();
        assert!(out.evals <= 150);
        assert_eq!(out.evals, count);
        assert_eq!(out.history.len(), out.evals);
    }

    #[test]
    fn too_small_budget_is_rejected() {
        assert!(cobyla_minimize(|x| x[0], &[0.0, 0.0], 1.0, DEFAULT_RHOEND, 3).is_err());
        assert!(cobyla_minimize(|x| x[0], &[0.0, 0.0], 1.0, DEFAULT_RHOEND, 4).is_ok());
    }

    #[test]
    fn never_worse_than_start() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let x0 = [-1.2, 1.0];
        let short = cobyla_minimize(rosen, &x0, 0.5, DEFAULT_RHOEND, 20).unwrap();
        assert!(short.fx <= rosen(&x0));
        let long = cobyla_minimize(rosen, &x0, 0.5, 1e-6, 3000).unwrap();
        assert!(long.fx < 0.1, "f* = {}", long.fx);
    }

    #[test]
    fn shifted_quadratic_in_higher_dimension() {
        let f = |x: &[f64]| {
            x.iter()
                .enumerate()
                .map(|(i, v)| (i as f64 + 1.0) * (v - 0.5).powi(2))
                .sum::<f64>()
        };
        let out = cobyla_minimize(f, &[0.0; 8], 1.0, 1e-6, 2000).unwrap();
        assert!(out.fx < 1e-6, "f* = {}", out.fx);
    }
}
