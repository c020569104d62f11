//! Reference optimizer for small linear SVM problems: the dual
//!
//!   max  sum a_i - 1/2 sum_ij a_i a_j y_i y_j x_i.x_j
//!   s.t. 0 <= a_i <= c_i,  sum a_i y_i = 0
//!
//! solved by SMO with maximal-violating-pair selection. Independent of the
//! primal solvers under test; the duality gap certifies its own answer.

pub struct Reference {
    pub w: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn primal_objective(x: &[Vec<f64>], y: &[f64], c: &[f64], w: &[f64], b: f64) -> f64 {
    0.5 * dot(w, w)
        + (0..x.len())
            .map(|i| c[i] * (1.0 - y[i] * (dot(w, &x[i]) + b)).max(0.0))
            .sum::<f64>()
}

/// Exhaustive bias: the optimum lies at one of the hinge breakpoints.
fn best_bias_scan(x: &[Vec<f64>], y: &[f64], c: &[f64], w: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| y[i] - dot(w, &x[i]))
        .map(|b| (primal_objective(x, y, c, w, b), b))
        .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc })
        .1
}

pub fn solve(x: &[Vec<f64>], y: &[f64], c: &[f64]) -> Reference {
    let n = x.len();
    let k: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dot(&x[i], &x[j])).collect()).collect();
    let mut a = vec![0.0; n];
    // gradient of the (minimized) negative dual: G_i = sum_j Q_ij a_j - 1
    let mut g = vec![-1.0; n];
    for _ in 0..2_000_000 {
        // I_up / I_low sets as in LIBSVM
        let mut i_best = None;
        let mut g_max = f64::NEG_INFINITY;
        let mut g_min = f64::INFINITY;
        let mut j_best = None;
        for t in 0..n {
            let v = -y[t] * g[t];
            let up = (y[t] > 0.0 && a[t] < c[t]) || (y[t] < 0.0 && a[t] > 0.0);
            let low = (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c[t]);
            if up && v > g_max {
                g_max = v;
                i_best = Some(t);
            }
            if low && v < g_min {
                g_min = v;
                j_best = Some(t);
            }
        }
        let (Some(i), Some(j)) = (i_best, j_best) else { break };
        if g_max - g_min < 1e-13 {
            break;
        }
        let quad = (k[i][i] + k[j][j] - 2.0 * k[i][j]).max(1e-15);
        // move along direction d_i = y_i, d_j = -y_j
        let mut step = (g_max - g_min) / quad;
        let room_i = if y[i] > 0.0 { c[i] - a[i] } else { a[i] };
        let room_j = if y[j] > 0.0 { a[j] } else { c[j] - a[j] };
        step = step.min(room_i).min(room_j);
        let di = y[i] * step;
        let dj = -y[j] * step;
        a[i] += di;
        a[j] += dj;
        for t in 0..n {
            g[t] += y[t] * (y[i] * k[t][i] * di + y[j] * k[t][j] * dj);
        }
    }
    let d = x[0].len();
    let mut w = vec![0.0; d];
    for i in 0..n {
        for (wj, xj) in w.iter_mut().zip(&x[i]) {
            *wj += a[i] * y[i] * xj;
        }
    }
    let dual = a.iter().sum::<f64>() - 0.5 * dot(&w, &w);
    let b = best_bias_scan(x, y, c, &w);
    Reference { primal: primal_objective(x, y, c, &w, b), dual, w }
}
