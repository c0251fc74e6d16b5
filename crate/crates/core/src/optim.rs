//! Unconstrained minimizers used by the cell solver.

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub initial_grad_norm: f64,
    pub converged: bool,
}

/// Conjugate gradients for a quadratic energy started at zero.
///
/// `grad` returns the gradient of the energy at a point; `hess_vec` applies
/// the (symmetric positive semidefinite) Hessian. Stops once
/// `|∇E| ≤ tol (1 + |∇E(0)|)`.
pub fn conjugate_gradient(
    n: usize,
    grad: impl Fn(&[f64], &mut [f64]),
    hess_vec: impl Fn(&[f64], &mut [f64]),
    tol: f64,
    max_iters: usize,
) -> Outcome {
    let mut x = vec![0.0; n];
    let mut r = vec![0.0; n];
    grad(&x, &mut r);
    r.iter_mut().for_each(|v| *v = -*v);
    let g0 = norm(&r);
    let target = tol * (1.0 + g0);
    let mut p = r.clone();
    let mut hp = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while rr.sqrt() > target && iterations < max_iters {
        hess_vec(&p, &mut hp);
        let php = dot(&p, &hp);
        if !(php > 0.0) {
            break;
        }
        let step = rr / php;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * hp[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        iterations += 1;
        // Refresh the recursive residual to stop drift.
        if iterations % 50 == 0 {
            grad(&x, &mut r);
            r.iter_mut().for_each(|v| *v = -*v);
            rr = dot(&r, &r);
        }
    }
    let mut g = vec![0.0; n];
    grad(&x, &mut g);
    let grad_norm = norm(&g);
    Outcome { converged: grad_norm <= target, x, iterations, grad_norm, initial_grad_norm: g0 }
}

/// Limited-memory BFGS with Armijo backtracking.
///
/// `value_grad` writes the gradient and returns the energy.
pub fn lbfgs(
    x0: Vec<f64>,
    mut value_grad: impl FnMut(&[f64], &mut [f64]) -> f64,
    tol: f64,
    max_iters: usize,
    memory: usize,
) -> Outcome {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = value_grad(&x, &mut g);
    let g0 = norm(&g);
    let target = tol * (1.0 + g0);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut alpha = vec![0.0; memory];

    while norm(&g) > target && iterations < max_iters {
        // Two-loop recursion.
        dir.copy_from_slice(&g);
        let k = s_hist.len();
        for i in (0..k).rev() {
            alpha[i] = rho_hist[i] * dot(&s_hist[i], &dir);
            for j in 0..n {
                dir[j] -= alpha[i] * y_hist[i][j];
            }
        }
        let gamma = if k > 0 {
            dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1])
        } else {
            1.0 / norm(&g).max(1e-300)
        };
        dir.iter_mut().for_each(|v| *v *= gamma);
        for i in 0..k {
            let b = rho_hist[i] * dot(&y_hist[i], &dir);
            for j in 0..n {
                dir[j] += s_hist[i][j] * (alpha[i] - b);
            }
        }
        dir.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            for j in 0..n {
                dir[j] = -g[j] / norm(&g);
            }
            slope = dot(&dir, &g);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..n {
                x_new[j] = x[j] + step * dir[j];
            }
            let f_new = value_grad(&x_new, &mut g_new);
            if f_new <= fx + 1e-4 * step * slope {
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if s_hist.is_empty() {
                break;
            }
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            continue;
        }
        let s: Vec<f64> = (0..n).map(|j| x_new[j] - x[j]).collect();
        let y: Vec<f64> = (0..n).map(|j| g_new[j] - g[j]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if s_hist.len() == memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        iterations += 1;
    }
    let grad_norm = norm(&g);
    Outcome { converged: grad_norm <= target, x, iterations, grad_norm, initial_grad_norm: g0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 1D Laplacian-like SPD system: E(x) = ½ xᵀAx - bᵀx.
    fn apply(x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let left = if i > 0 { x[i - 1] } else { 0.0 };
            let right = if i + 1 < n { x[i + 1] } else { 0.0 };
            out[i] = 2.0 * x[i] - left - right;
        }
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let out = conjugate_gradient(
            n,
            |x, g| {
                apply(x, g);
                for i in 0..n {
                    g[i] -= b[i];
                }
            },
            apply,
            1e-12,
            1000,
        );
        assert!(out.converged);
        let mut ax = vec![0.0; n];
        apply(&out.x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn lbfgs_minimizes_smooth_convex_function() {
        // Σ √(1 + (x_i - i/10)²) + ½|x|²
        let n = 20;
        let out = lbfgs(
            vec![0.0; n],
            |x, g| {
                let mut f = 0.0;
                for i in 0..n {
                    let d = x[i] - i as f64 / 10.0;
                    let r = (1.0 + d * d).sqrt();
                    f += r + 0.5 * x[i] * x[i];
                    g[i] = d / r + x[i];
                }
                f
            },
            1e-10,
            500,
            8,
        );
        assert!(out.converged, "{out:?}");
        assert!(out.grad_norm <= 1e-10 * (1.0 + out.initial_grad_norm));
    }
}
