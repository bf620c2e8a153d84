//! Quasi-Newton minimization with a strong-Wolfe line search.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::abs;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BfgsConfig {
    pub max_iterations: usize,
    /// Stop once the infinity norm of the gradient falls below this.
    pub gradient_tolerance: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            gradient_tolerance: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
}

impl BfgsResult {
    pub fn gradient_norm(&self) -> f64 {
        inf_norm(&self.gradient)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(abs(*x)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Objective returning `f(x)` and writing `grad f(x)`. Non-finite values
/// are treated as "too far" by the line search.
pub trait Objective {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Objective for F {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

/// Sufficient decrease, or its derivative form when `f` is flat to within
/// rounding near `f0`.
fn decreases(p: &Point, f0: f64, g0: f64) -> bool {
    let flat = 1e-12 * abs(f0).max(1.0);
    p.value <= f0 + C1 * p.alpha * g0 || (p.value <= f0 + flat && p.slope <= (2.0 * C1 - 1.0) * g0)
}

struct LineSearch<'a, O: Objective> {
    f: &'a mut O,
    x: &'a [f64],
    dir: &'a [f64],
    trial: Vec<f64>,
    grad: Vec<f64>,
}

impl<O: Objective> LineSearch<'_, O> {
    fn probe(&mut self, alpha: f64) -> Point {
        for ((t, x), d) in self.trial.iter_mut().zip(self.x).zip(self.dir) {
            *t = x + alpha * d;
        }
        let value = self.f.eval(&self.trial, &mut self.grad);
        let slope = dot(&self.grad, self.dir);
        if value.is_finite() && slope.is_finite() {
            Point { alpha, value, slope }
        } else {
            Point {
                alpha,
                value: f64::INFINITY,
                slope: f64::NAN,
            }
        }
    }

    /// Strong Wolfe conditions with `c1 = 1e-4`, `c2 = 0.9`.
    fn search(&mut self, f0: f64, g0: f64, mut alpha: f64) -> Option<Point> {
        let mut prev = Point {
            alpha: 0.0,
            value: f0,
            slope: g0,
        };
        for i in 0..60 {
            let cur = self.probe(alpha);
            if !cur.value.is_finite() {
                alpha = 0.5 * (prev.alpha + alpha);
                continue;
            }
            if !decreases(&cur, f0, g0) || (i > 0 && cur.value >= prev.value && cur.slope >= 0.0) {
                return self.zoom(f0, g0, prev, cur);
            }
            if abs(cur.slope) <= -C2 * g0 {
                return Some(cur);
            }
            if cur.slope >= 0.0 {
                return self.zoom(f0, g0, cur, prev);
            }
            let next = 2.0 * alpha;
            prev = cur;
            alpha = next;
        }
        None
    }

    fn zoom(&mut self, f0: f64, g0: f64, mut lo: Point, mut hi: Point) -> Option<Point> {
        for _ in 0..60 {
            let width = hi.alpha - lo.alpha;
            // safeguarded cubic interpolation, falling back to bisection
            let mut alpha = cubic_min(&lo, &hi).unwrap_or(lo.alpha + 0.5 * width);
            let (a, b) = if lo.alpha < hi.alpha { (lo.alpha, hi.alpha) } else { (hi.alpha, lo.alpha) };
            let margin = 0.1 * (b - a);
            if !(alpha > a + margin && alpha < b - margin) {
                alpha = 0.5 * (a + b);
            }
            if abs(width) < 1e-16 * abs(lo.alpha).max(1.0) {
                return (lo.alpha > 0.0 && lo.value <= f0).then_some(lo);
            }
            let cur = self.probe(alpha);
            let flat = cur.value <= f0 + 1e-12 * abs(f0).max(1.0);
            if !cur.value.is_finite() || !decreases(&cur, f0, g0) || (cur.value >= lo.value && !flat) {
                hi = cur;
            } else {
                if abs(cur.slope) <= -C2 * g0 {
                    return Some(cur);
                }
                if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        (lo.alpha > 0.0 && lo.value <= f0).then_some(lo)
    }
}

fn cubic_min(a: &Point, b: &Point) -> Option<f64> {
    if !b.value.is_finite() || !b.slope.is_finite() {
        return None;
    }
    let d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * libm::sqrt(disc);
    let denom = b.slope - a.slope + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
    t.is_finite().then_some(t)
}

/// Minimizes `f` from `x0` with BFGS updates of the inverse Hessian.
///
/// Fails when the line search cannot make progress while the gradient is
/// still above tolerance, or when the iteration limit is reached.
pub fn bfgs_minimize<O: Objective>(f: &mut O, x0: &[f64], config: &BfgsConfig) -> Result<BfgsResult> {
    let k = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; k];
    let mut value = f.eval(&x, &mut grad);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::OptimizerFailure {
            iterations: 0,
            reason: "objective not finite at the starting point",
            gradient_norm: f64::NAN,
        });
    }
    let mut hinv = identity(k);
    let mut fresh = true;
    let mut dir = vec![0.0; k];
    for iter in 0..config.max_iterations {
        if inf_norm(&grad) < config.gradient_tolerance {
            return Ok(BfgsResult {
                x,
                value,
                gradient: grad,
                iterations: iter,
            });
        }
        for i in 0..k {
            dir[i] = -dot(&hinv[i * k..(i + 1) * k], &grad);
        }
        let mut g0 = dot(&grad, &dir);
        if !(g0 < 0.0) {
            hinv = identity(k);
            dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
            g0 = dot(&grad, &dir);
            fresh = true;
        }
        let initial = if fresh { (1.0 / inf_norm(&dir)).min(1.0) } else { 1.0 };
        let found = {
            let mut ls = LineSearch {
                f,
                x: &x,
                dir: &dir,
                trial: vec![0.0; k],
                grad: vec![0.0; k],
            };
            ls.search(value, g0, initial)
        };
        let Some(point) = found else {
            if !fresh {
                hinv = identity(k);
                fresh = true;
                continue;
            }
            return Err(Error::OptimizerFailure {
                iterations: iter,
                reason: "line search failed",
                gradient_norm: inf_norm(&grad),
            });
        };
        let s: Vec<f64> = dir.iter().map(|d| point.alpha * d).collect();
        let new_x: Vec<f64> = x.iter().zip(&s).map(|(x, s)| x + s).collect();
        let mut new_grad = vec![0.0; k];
        let new_value = f.eval(&new_x, &mut new_grad);
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * libm::sqrt(dot(&s, &s) * dot(&y, &y)) {
            if fresh {
                let scale = sy / dot(&y, &y);
                hinv = identity(k);
                hinv.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut hinv, &s, &y, sy);
            fresh = false;
        }
        let improvement = value - new_value;
        x = new_x;
        grad = new_grad;
        value = new_value;
        if improvement.abs() <= f64::EPSILON * value.abs() && inf_norm(&grad) < 1e3 * config.gradient_tolerance {
            return Ok(BfgsResult {
                x,
                value,
                gradient: grad,
                iterations: iter + 1,
            });
        }
    }
    if inf_norm(&grad) < config.gradient_tolerance {
        return Ok(BfgsResult {
            x,
            value,
            gradient: grad,
            iterations: config.max_iterations,
        });
    }
    Err(Error::OptimizerFailure {
        iterations: config.max_iterations,
        reason: "iteration limit reached",
        gradient_norm: inf_norm(&grad),
    })
}

fn identity(k: usize) -> Vec<f64> {
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        m[i * k + i] = 1.0;
    }
    m
}

/// `H <- (I - rho s y') H (I - rho y s') + rho s s'`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let k = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..k).map(|i| dot(&h[i * k..(i + 1) * k], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..k {
        for j in 0..k {
            h[i * k + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
