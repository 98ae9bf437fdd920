//! Limited-memory BFGS with a backtracking (Armijo) line search and a
//! steepest-descent fallback. Only strictly decreasing steps are accepted, so
//! the recorded loss history is monotone.

use std::collections::VecDeque;
use std::time::Instant;

/// Loss/gradient evaluation split so line-search probes skip the backward
/// pass.
pub trait Objective {
    fn value(&mut self, x: &[f64]) -> f64;
    /// Returns the loss and writes the gradient into `grad`.
    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Clone, Copy, Debug)]
pub struct LbfgsParams {
    pub history: usize,
    pub max_steps: usize,
    pub grad_tol: f64,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Step length (relative to the gradient's sup-norm) tried when the
    /// curvature direction fails its line search.
    pub fallback_step: f64,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        Self {
            history: 10,
            max_steps: 500,
            grad_tol: 1e-12,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 25,
            fallback_step: 1e-3,
        }
    }
}

pub struct Minimized {
    pub x: Vec<f64>,
    /// Loss at the start plus one entry per accepted step; strictly
    /// decreasing.
    pub losses: Vec<f64>,
    /// Wall time per accepted step.
    pub step_seconds: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Two-loop recursion: returns the quasi-Newton direction `-H g`.
fn direction(grad: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = hist.back() {
        let gamma = dot(s, y) / dot(y, y).max(f64::MIN_POSITIVE);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

pub fn minimize<O: Objective>(obj: &mut O, x0: Vec<f64>, params: &LbfgsParams) -> Minimized {
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut loss = obj.value_grad(&x, &mut grad);
    let mut losses = vec![loss];
    let mut step_seconds = Vec::new();
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();

    for _ in 0..params.max_steps {
        let gnorm = inf_norm(&grad);
        if gnorm < params.grad_tol {
            break;
        }
        let started = Instant::now();

        let mut dir = direction(&grad, &hist);
        let mut dg = dot(&dir, &grad);
        if !(dg < 0.0) {
            dir = grad.iter().map(|&g| -g).collect();
            dg = -dot(&grad, &grad);
            hist.clear();
        }

        let mut t = if hist.is_empty() {
            (1.0 / inf_norm(&dir).max(f64::MIN_POSITIVE)).min(1.0)
        } else {
            1.0
        };
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for _ in 0..params.max_backtracks {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
            let f = obj.value(&cand);
            if f <= loss + params.armijo_c1 * t * dg {
                accepted = Some((cand, f));
                break;
            }
            t *= params.backtrack;
        }

        let (x_new, f_new) = match accepted {
            Some(v) => v,
            None => {
                // Plain gradient step for this step only.
                hist.clear();
                let mut t = params.fallback_step / gnorm.max(f64::MIN_POSITIVE);
                let mut found = None;
                for _ in 0..params.max_backtracks {
                    let cand: Vec<f64> =
                        x.iter().zip(&grad).map(|(xi, gi)| xi - t * gi).collect();
                    let f = obj.value(&cand);
                    if f < loss {
                        found = Some((cand, f));
                        break;
                    }
                    t *= 0.5;
                }
                match found {
                    Some(v) => v,
                    None => break, // no descent found at any scale: stop
                }
            }
        };

        let mut grad_new = vec![0.0; n];
        obj.value_grad(&x_new, &mut grad_new);

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        let s_norm = dot(&s, &s).sqrt();
        let y_norm = dot(&yv, &yv).sqrt();
        if sy > 1e-12 * s_norm * y_norm {
            if hist.len() == params.history {
                hist.pop_front();
            }
            hist.push_back((s, yv, 1.0 / sy));
        }

        x = x_new;
        grad = grad_new;
        loss = f_new;
        losses.push(loss);
        step_seconds.push(started.elapsed().as_secs_f64());
    }

    Minimized {
        x,
        losses,
        step_seconds,
    }
}
