//! Primal solvers for the soft-margin linear SVM
//!
//! ```text
//! minimize  1/2 |w|^2 + sum_i c_i * max(0, 1 - y_i (w . x_i + b))
//! ```
//!
//! with an unregularized bias. Both solvers are deterministic for a fixed
//! configuration and finish with an exact bias refit.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Smoothed-hinge Newton continuation.
    Newton,
    /// Epoch-based stochastic subgradient with a 1/t step and iterate averaging.
    Subgradient,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Newton => "newton",
            SolverKind::Subgradient => "subgradient",
        })
    }
}

impl FromStr for SolverKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "newton" => Ok(SolverKind::Newton),
            "subgradient" => Ok(SolverKind::Subgradient),
            other => Err(format!("unknown solver `{other}`")),
        }
    }
}

/// Dense training problem; `y` is +1/-1, `cost` the per-instance hinge weight.
pub struct Problem<'a, T> {
    pub x: &'a [Vec<T>],
    pub y: &'a [T],
    pub cost: &'a [T],
}

impl<T: Scalar> Problem<'_, T> {
    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    fn score(&self, w: &[T], b: T, i: usize) -> T {
        dot(w, &self.x[i]) + b
    }

    pub fn objective(&self, w: &[T], b: T) -> T {
        let reg = dot(w, w) / T::lit(2.0);
        (0..self.x.len()).fold(reg, |acc, i| {
            let z = T::one() - self.y[i] * self.score(w, b, i);
            acc + self.cost[i] * z.max(T::zero())
        })
    }

    /// Bias minimizing the objective for fixed `w`: the loss is convex piecewise
    /// linear in `b`, so an optimum sits at a breakpoint `b = y_i - w . x_i`.
    pub fn best_bias(&self, w: &[T]) -> T {
        let n = self.x.len();
        if n == 0 {
            return T::zero();
        }
        let base: Vec<T> = (0..n).map(|i| dot(w, &self.x[i])).collect();
        let mut knots: Vec<(T, usize)> = (0..n).map(|i| (self.y[i] - base[i], i)).collect();
        knots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // slope of the loss in b just left of every knot; positives contribute
        // -c while their margin is violated (b below their knot), negatives +c
        // once b passes their knot.
        let mut slope = (0..n).fold(T::zero(), |acc, i| if self.y[i] > T::zero() { acc - self.cost[i] } else { acc });
        for &(knot, i) in &knots {
            // crossing knot i: a positive stops contributing -c, a negative starts +c
            slope = slope + self.cost[i];
            if slope >= T::zero() {
                return knot;
            }
        }
        knots.last().unwrap().0
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Quadratically smoothed hinge of `z = 1 - margin`: value and first derivative.
fn smooth_hinge<T: Scalar>(z: T, h: T) -> (T, T) {
    if z <= T::zero() {
        (T::zero(), T::zero())
    } else if z < h {
        (z * z / (T::lit(2.0) * h), z / h)
    } else {
        (z - h / T::lit(2.0), T::one())
    }
}

fn smoothed_objective<T: Scalar>(p: &Problem<'_, T>, w: &[T], b: T, h: T) -> T {
    let reg = dot(w, w) / T::lit(2.0);
    (0..p.x.len()).fold(reg, |acc, i| {
        let z = T::one() - p.y[i] * p.score(w, b, i);
        acc + p.cost[i] * smooth_hinge(z, h).0
    })
}

/// Solves `a x = rhs` by Gaussian elimination with partial pivoting.
fn solve_dense<T: Scalar>(mut a: Vec<Vec<T>>, mut rhs: Vec<T>) -> Option<Vec<T>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() <= T::epsilon() {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != T::zero() {
                let (top, bottom) = a.split_at_mut(row);
                for (x, v) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x = *x - f * *v;
                }
                rhs[row] = rhs[row] - f * rhs[col];
            }
        }
    }
    let mut out = vec![T::zero(); n];
    for row in (0..n).rev() {
        let s = (row + 1..n).fold(rhs[row], |acc, k| acc - a[row][k] * out[k]);
        out[row] = s / a[row][row];
    }
    Some(out)
}

/// Newton's method on the smoothed objective for a decreasing sequence of
/// smoothing widths, warm-started; the smoothing gap is at most `sum c_i * h / 2`.
pub fn solve_newton<T: Scalar>(p: &Problem<'_, T>, max_iter: usize) -> (Vec<T>, T) {
    let d = p.dim();
    let n = p.x.len();
    let mut w = vec![T::zero(); d];
    let mut b = T::zero();
    let two = T::lit(2.0);
    let mut h = T::one();
    let h_min = T::lit(1e-9).max(T::epsilon() * T::lit(16.0));
    let ridge = T::lit(1e-10);
    loop {
        for _ in 0..max_iter {
            let mut gw = w.clone();
            let mut gb = T::zero();
            let mut hess = vec![vec![T::zero(); d + 1]; d + 1];
            for (j, row) in hess.iter_mut().enumerate().take(d) {
                row[j] = T::one();
            }
            for i in 0..n {
                let z = T::one() - p.y[i] * p.score(&w, b, i);
                let (_, dz) = smooth_hinge(z, h);
                if dz == T::zero() {
                    continue;
                }
                let g = p.cost[i] * dz * p.y[i];
                for (gj, xj) in gw.iter_mut().zip(&p.x[i]) {
                    *gj = *gj - g * *xj;
                }
                gb = gb - g;
                if z < h {
                    let c = p.cost[i] / h;
                    let xi = &p.x[i];
                    for r in 0..=d {
                        let xr = if r < d { xi[r] } else { T::one() };
                        for (s, cell) in hess[r].iter_mut().enumerate() {
                            let xs = if s < d { xi[s] } else { T::one() };
                            *cell = *cell + c * xr * xs;
                        }
                    }
                }
            }
            hess[d][d] = hess[d][d] + ridge;
            let gnorm = (dot(&gw, &gw) + gb * gb).sqrt();
            if gnorm <= T::lit(1e-12) * (T::one() + p.cost.iter().fold(T::zero(), |a, c| a + *c)) {
                break;
            }
            let rhs: Vec<T> = gw.iter().map(|g| -*g).chain(std::iter::once(-gb)).collect();
            let Some(step) = solve_dense(hess, rhs) else { break };
            let f0 = smoothed_objective(p, &w, b, h);
            let slope = dot(&gw, &step[..d]) + gb * step[d];
            let mut t = T::one();
            let mut moved = false;
            for _ in 0..60 {
                let cw: Vec<T> = w.iter().zip(&step).map(|(a, s)| *a + t * *s).collect();
                let cb = b + t * step[d];
                let f1 = smoothed_objective(p, &cw, cb, h);
                if f1 <= f0 + T::lit(1e-4) * t * slope {
                    moved = f0 - f1 > T::lit(1e-13) * f0.abs().max(T::epsilon());
                    w = cw;
                    b = cb;
                    break;
                }
                t = t / two;
            }
            if !moved {
                break;
            }
        }
        if h <= h_min * T::lit(1.5) {
            break;
        }
        h = (h / T::lit(10.0)).max(h_min);
    }
    let b = p.best_bias(&w);
    (w, b)
}

/// Stochastic subgradient descent on `lambda/2 |w|^2 + mean_i c_i' hinge_i` with
/// `lambda = 1 / sum(c)` (same minimizer), step `1/(lambda t)`, fixed-seed
/// shuffling per epoch and averaging of `w` over the second half of the run.
/// The bias is refit exactly at the start of every epoch.
pub fn solve_subgradient<T: Scalar>(p: &Problem<'_, T>, epochs: usize, seed: u64) -> (Vec<T>, T) {
    let d = p.dim();
    let n = p.x.len();
    if n == 0 {
        return (vec![T::zero(); d], T::zero());
    }
    let total_cost = p.cost.iter().fold(T::zero(), |a, c| a + *c);
    let nt = T::from_count(n);
    let lambda = T::one() / total_cost;
    let mut w = vec![T::zero(); d];
    let mut b;
    let mut avg_w = vec![T::zero(); d];
    let mut averaged = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0usize;
    let start_avg = epochs / 2;
    for epoch in 0..epochs {
        b = p.best_bias(&w);
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = T::one() / (lambda * T::from_count(t));
            let violated = p.y[i] * p.score(&w, b, i) < T::one();
            let shrink = T::one() - eta * lambda;
            for wj in w.iter_mut() {
                *wj = *wj * shrink;
            }
            if violated {
                // c_i' = n c_i / sum(c) keeps the mean weight at one
                let g = eta * p.y[i] * p.cost[i] * nt / total_cost;
                for (wj, xj) in w.iter_mut().zip(&p.x[i]) {
                    *wj = *wj + g * *xj;
                }
            }
            if epoch >= start_avg {
                averaged += 1;
                let k = T::from_count(averaged);
                for (a, v) in avg_w.iter_mut().zip(&w) {
                    *a = *a + (*v - *a) / k;
                }
            }
        }
    }
    let w = if averaged > 0 { avg_w } else { w };
    let b = p.best_bias(&w);
    (w, b)
}
