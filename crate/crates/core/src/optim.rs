//! Box-constrained limited-memory BFGS (L-BFGS-B).
//!
//! Each iteration finds the generalized Cauchy point along the projected
//! steepest-descent path of the quadratic model, minimizes the model over
//! the variables left free there (truncated to stay feasible), then runs a
//! backtracking Armijo search toward that point. The limited-memory matrix
//! `B = θI − W M Wᵀ` is formed densely; problems here have at most a few
//! hundred variables.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsbConfig {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once the projected gradient's ∞-norm falls below this.
    pub tol: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsbConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 500,
            tol: 1e-6,
            armijo: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    /// No acceptable step could be found; the best point so far is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsbResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
    /// Objective at every accepted iterate, starting with `x0`.
    pub trace: Vec<f64>,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&x, &g), (&l, &u))| ((x - g).clamp(l, u) - x).abs())
        .fold(0.0, f64::max)
}

struct Memory {
    s: Vec<DVector<f64>>,
    y: Vec<DVector<f64>>,
    cap: usize,
    theta: f64,
}

impl Memory {
    fn new(cap: usize) -> Self {
        Self {
            s: Vec::new(),
            y: Vec::new(),
            cap,
            theta: 1.0,
        }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.theta = 1.0;
    }

    /// Stores the pair unless the curvature condition is too weak.
    fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        let sy = s.dot(&y);
        let yy = y.dot(&y);
        if sy <= f64::EPSILON * yy || sy <= 0.0 {
            return;
        }
        if self.s.len() == self.cap {
            self.s.remove(0);
            self.y.remove(0);
        }
        self.theta = yy / sy;
        self.s.push(s);
        self.y.push(y);
    }

    /// Dense `B = θI − W M Wᵀ` with `W = [Y, θS]`.
    fn matrix(&self, n: usize) -> DMatrix<f64> {
        let theta = self.theta;
        let mut b = DMatrix::<f64>::identity(n, n) * theta;
        let k = self.s.len();
        if k == 0 {
            return b;
        }
        let s = DMatrix::from_columns(&self.s);
        let y = DMatrix::from_columns(&self.y);
        let sy = s.transpose() * &y;
        let mut mid = DMatrix::<f64>::zeros(2 * k, 2 * k);
        for i in 0..k {
            mid[(i, i)] = -sy[(i, i)];
            for j in 0..i {
                // L holds the strictly lower part of SᵀY.
                mid[(k + i, j)] = sy[(i, j)];
                mid[(j, k + i)] = sy[(i, j)];
            }
        }
        let ss = s.transpose() * &s * theta;
        mid.view_mut((k, k), (k, k)).copy_from(&ss);
        let Some(m) = mid.try_inverse() else {
            return b;
        };
        let mut w = DMatrix::<f64>::zeros(n, 2 * k);
        w.view_mut((0, 0), (n, k)).copy_from(&y);
        w.view_mut((0, k), (n, k)).copy_from(&(s * theta));
        b -= &w * m * w.transpose();
        b
    }
}

/// Generalized Cauchy point of `q(x + z) = gᵀz + ½ zᵀBz` along the
/// projected gradient path. Returns the point and which variables it fixed.
fn cauchy_point(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64], b: &DMatrix<f64>) -> (Vec<f64>, Vec<bool>) {
    let n = x.len();
    let mut breaks: Vec<(f64, usize)> = Vec::new();
    let mut d = DVector::<f64>::zeros(n);
    let mut fixed = vec![false; n];
    for i in 0..n {
        let t = if g[i] < 0.0 {
            (x[i] - upper[i]) / g[i]
        } else if g[i] > 0.0 {
            (x[i] - lower[i]) / g[i]
        } else {
            f64::INFINITY
        };
        if t > 0.0 {
            d[i] = -g[i];
            if t.is_finite() {
                breaks.push((t, i));
            }
        } else {
            fixed[i] = true;
        }
    }
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gv = DVector::from_column_slice(g);
    let mut z = DVector::<f64>::zeros(n);
    let mut t_old = 0.0;
    let mut next = 0;
    loop {
        let bd = b * &d;
        let fp = gv.dot(&d) + z.dot(&bd);
        let fpp = d.dot(&bd);
        if fp >= 0.0 || d.iter().all(|v| *v == 0.0) {
            break;
        }
        let dt_min = if fpp > 0.0 { -fp / fpp } else { f64::INFINITY };
        let t_next = breaks.get(next).map(|b| b.0).unwrap_or(f64::INFINITY);
        if dt_min < t_next - t_old {
            z += &d * dt_min;
            break;
        }
        if !t_next.is_finite() {
            // Unbounded descent along a free direction: should not happen
            // for positive definite B.
            break;
        }
        z += &d * (t_next - t_old);
        t_old = t_next;
        while next < breaks.len() && breaks[next].0 <= t_next {
            let i = breaks[next].1;
            z[i] = if d[i] > 0.0 { upper[i] - x[i] } else { lower[i] - x[i] };
            d[i] = 0.0;
            fixed[i] = true;
            next += 1;
        }
    }
    let mut xc: Vec<f64> = x.iter().zip(z.iter()).map(|(a, b)| a + b).collect();
    project(&mut xc, lower, upper);
    (xc, fixed)
}

/// Newton step of the model over the free variables, truncated to the box.
fn subspace_min(
    x: &[f64],
    g: &[f64],
    xc: &[f64],
    fixed: &[bool],
    lower: &[f64],
    upper: &[f64],
    b: &DMatrix<f64>,
) -> Vec<f64> {
    let n = x.len();
    let free: Vec<usize> = (0..n)
        .filter(|&i| !fixed[i] && xc[i] > lower[i] && xc[i] < upper[i])
        .collect();
    if free.is_empty() {
        return xc.to_vec();
    }
    let zc = DVector::from_iterator(n, xc.iter().zip(x).map(|(a, b)| a - b));
    let grad_q = DVector::from_column_slice(g) + b * zc;
    let k = free.len();
    let bff = DMatrix::from_fn(k, k, |i, j| b[(free[i], free[j])]);
    let rhs = DVector::from_iterator(k, free.iter().map(|&i| -grad_q[i]));
    let Some(chol) = bff.cholesky() else {
        return xc.to_vec();
    };
    let du = chol.solve(&rhs);
    let mut alpha: f64 = 1.0;
    for (j, &i) in free.iter().enumerate() {
        if du[j] > 0.0 {
            alpha = alpha.min((upper[i] - xc[i]) / du[j]);
        } else if du[j] < 0.0 {
            alpha = alpha.min((lower[i] - xc[i]) / du[j]);
        }
    }
    let mut out = xc.to_vec();
    for (j, &i) in free.iter().enumerate() {
        out[i] += alpha * du[j];
    }
    project(&mut out, lower, upper);
    out
}

/// Minimizes `f` over the box `[lower, upper]`. `f(x, grad)` returns the
/// value and writes the gradient. A non-finite value makes the line search
/// back off.
pub fn lbfgsb_minimize(
    mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    cfg: &LbfgsbConfig,
) -> LbfgsbResult {
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n, "bounds must match x0");
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut trace = vec![fx];
    let mut mem = Memory::new(cfg.memory.max(1));
    let mut status = Status::MaxIterations;
    let mut iterations = 0;
    if !fx.is_finite() {
        return LbfgsbResult {
            x,
            value: fx,
            iterations,
            evaluations,
            status: Status::LineSearchFailed,
            trace,
        };
    }
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    while iterations < cfg.max_iter {
        if projected_gradient_norm(&x, &g, lower, upper) < cfg.tol {
            status = Status::Converged;
            break;
        }
        iterations += 1;
        let b = mem.matrix(n);
        let (xc, fixed) = cauchy_point(&x, &g, lower, upper, &b);
        let target = subspace_min(&x, &g, &xc, &fixed, lower, upper, &b);
        let mut d: Vec<f64> = target.iter().zip(&x).map(|(a, b)| a - b).collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            // Model direction unusable: restart from projected steepest descent.
            mem.clear();
            d = x
                .iter()
                .zip(&g)
                .zip(lower.iter().zip(upper))
                .map(|((&x, &g), (&l, &u))| (x - g).clamp(l, u) - x)
                .collect();
            slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                status = Status::Converged;
                break;
            }
        }
        let mut step = if mem.s.is_empty() {
            let dnorm = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (1.0 / dnorm).min(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        for _ in 0..cfg.max_backtracks {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            project(&mut x_new, lower, upper);
            let f_new = f(&x_new, &mut g_new);
            evaluations += 1;
            if f_new.is_finite() && f_new <= fx + cfg.armijo * step * slope {
                let s = DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
                let y = DVector::from_iterator(n, g_new.iter().zip(&g).map(|(a, b)| a - b));
                mem.push(s, y);
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                fx = f_new;
                trace.push(fx);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if !mem.s.is_empty() {
                mem.clear();
                continue;
            }
            status = Status::LineSearchFailed;
            break;
        }
    }
    if status == Status::MaxIterations && projected_gradient_norm(&x, &g, lower, upper) < cfg.tol {
        status = Status::Converged;
    }
    LbfgsbResult {
        x,
        value: fx,
        iterations,
        evaluations,
        status,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(a: Vec<f64>) -> impl FnMut(&[f64], &mut [f64]) -> f64 {
        move |x, g| {
            let mut v = 0.0;
            for i in 0..x.len() {
                g[i] = 2.0 * (x[i] - a[i]);
                v += (x[i] - a[i]).powi(2);
            }
            v
        }
    }

    #[test]
    fn interior_quadratic() {
        let a = vec![0.3, -0.7, 0.1];
        let r = lbfgsb_minimize(quad(a.clone()), &[0.0; 3], &[-1.0; 3], &[1.0; 3], &LbfgsbConfig::default());
        assert_eq!(r.status, Status::Converged);
        for (x, a) in r.x.iter().zip(&a) {
            assert!((x - a).abs() < 1e-8);
        }
    }

    #[test]
    fn active_bound() {
        let r = lbfgsb_minimize(quad(vec![2.0]), &[0.0], &[-1.0], &[1.0], &LbfgsbConfig::default());
        assert_eq!(r.x, vec![1.0]);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let cfg = LbfgsbConfig {
            tol: 1e-10,
            ..LbfgsbConfig::default()
        };
        let r = lbfgsb_minimize(f, &[-1.2, 1.0], &[-5.0; 2], &[5.0; 2], &cfg);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?} {:?}", r.x, r.status);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bounded_rosenbrock_stops_on_the_box() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let r = lbfgsb_minimize(f, &[-1.2, 0.5], &[-2.0, -2.0], &[0.5, 2.0], &LbfgsbConfig::default());
        assert!((r.x[0] - 0.5).abs() < 1e-9, "{:?}", r.x);
        assert!((r.x[1] - 0.25).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn non_finite_start_is_flagged() {
        let r = lbfgsb_minimize(|_, _| f64::NAN, &[0.0], &[-1.0], &[1.0], &LbfgsbConfig::default());
        assert_eq!(r.status, Status::LineSearchFailed);
    }

    #[test]
    fn recovers_from_non_finite_region() {
        // NaN for x > 0.5 forces backtracking on the first step.
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] > 0.5 {
                return f64::NAN;
            }
            g[0] = 2.0 * (x[0] - 0.4);
            (x[0] - 0.4).powi(2)
        };
        let r = lbfgsb_minimize(f, &[-3.0], &[-5.0], &[5.0], &LbfgsbConfig::default());
        assert!((r.x[0] - 0.4).abs() < 1e-6, "{:?}", r);
    }
}
