//! Limited-memory BFGS with Armijo backtracking, for the smooth penalized
//! control problems of the rate computations.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `max_i |grad_i| <= grad_tol`.
    pub grad_tol: f64,
    /// Stop when the relative decrease of one step falls below this.
    pub f_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 500,
            grad_tol: 1e-10,
            f_tol: 1e-15,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`; `fg(x, grad)` returns `f(x)` and writes the gradient.
pub(crate) fn minimize(
    mut x: Vec<f64>,
    opts: LbfgsOptions,
    mut fg: impl FnMut(&[f64], &mut [f64]) -> f64,
) -> (Vec<f64>, f64) {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];

    for _ in 0..opts.max_iter {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= opts.grad_tol {
            break;
        }
        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
            history.clear();
        }

        let mut step = if history.is_empty() {
            (1.0 / dir.iter().map(|v| v * v).sum::<f64>().sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = x[i] + step * dir[i];
            }
            let f_trial = fg(&trial, &mut g_trial);
            if f_trial.is_finite() && f_trial <= f + 1e-4 * step * slope {
                accepted = Some(f_trial);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else { break };

        let s: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_trial[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        let decrease = f - f_new;
        f = f_new;
        if decrease <= opts.f_tol * f.abs().max(1e-300) {
            break;
        }
    }
    (x, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let (x, f) = minimize(vec![-1.2, 1.0], LbfgsOptions::default(), |x, g| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        });
        assert!(f < 1e-12, "f = {f}");
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn quadratic_exact() {
        let diag = [1.0, 10.0, 100.0];
        let (x, _) = minimize(vec![1.0; 3], LbfgsOptions::default(), |x, g| {
            let mut f = 0.0;
            for i in 0..3 {
                g[i] = diag[i] * (x[i] - i as f64);
                f += 0.5 * diag[i] * (x[i] - i as f64).powi(2);
            }
            f
        });
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - i as f64).abs() < 1e-8);
        }
    }
}
