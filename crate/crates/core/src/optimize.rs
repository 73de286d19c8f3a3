//! Local minimizers used by the fitting routines.
//!
//! All minimizers record the best cost after every iteration in
//! [`Minimum::history`]; acceptance is monotone so the history never
//! increases.

use nalgebra::{DMatrix, DVector};

/// Box constraints, one interval per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        debug_assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h));
        Bounds { lo, hi }
    }

    pub fn unbounded(n: usize) -> Self {
        Bounds::new(vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, &l), &h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(l, h);
        }
    }
}

/// Result of a local minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub cost: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Best cost after each iteration.
    pub history: Vec<f64>,
}

/// Brent's parabolic/golden-section minimization of `f` on `[a, b]`.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-300;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Stop when every vertex is within `x_tol` of the best one (sup norm).
    pub x_tol: f64,
    /// ... and the cost spread is below `f_tol_abs + f_tol_rel · |best|`.
    pub f_tol_abs: f64,
    pub f_tol_rel: f64,
    /// Initial simplex edge along each coordinate.
    pub initial_step: Vec<f64>,
}

impl NelderMeadOptions {
    pub fn new(n: usize) -> Self {
        NelderMeadOptions {
            max_evaluations: 200 * n.max(1),
            x_tol: 1e-8,
            f_tol_abs: 1e-14,
            f_tol_rel: 1e-12,
            initial_step: vec![0.05; n],
        }
    }
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Nelder–Mead simplex descent inside a box, with the dimension-adaptive
/// coefficients of Gao and Han. Trial points are projected onto the box.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> Minimum {
    let n = x0.len();
    assert_eq!(bounds.len(), n);
    let nf = n as f64;
    let (alpha, beta, gamma, delta) =
        if n >= 2 { (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf) } else { (1.0, 2.0, 0.5, 0.5) };

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        finite_or_inf(f(x))
    };

    let mut start = x0.to_vec();
    bounds.project(&mut start);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(&start, &mut evals);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut v = start.clone();
        let step = opts.initial_step[i];
        v[i] += step;
        if v[i] > bounds.hi[i] {
            v[i] = start[i] - step;
        }
        bounds.project(&mut v);
        if v[i] == start[i] {
            // Box degenerate in this coordinate; nudge inward if possible.
            v[i] = 0.5 * (bounds.lo[i] + bounds.hi[i]);
        }
        let fv = eval(&v, &mut evals);
        simplex.push((v, fv));
    }

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while evals < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(simplex[0].1);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = (worst - best).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol_abs + opts.f_tol_rel * best.abs() && diameter <= opts.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect();
            bounds.project(&mut p);
            p
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(alpha * beta);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(alpha * gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // Shrink toward the best vertex.
        let best_x = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            for (x, b) in v.iter_mut().zip(&best_x) {
                *x = b + delta * (*x - b);
            }
            bounds.project(v);
            *fv = eval(v, &mut evals);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    if history.last() != Some(&simplex[0].1) {
        history.push(simplex[0].1);
    }
    let (x, cost) = simplex.swap_remove(0);
    Minimum { x, cost, evaluations: evals, iterations, converged, history }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost reduction below which an accepted step counts as stalled.
    pub f_tol: f64,
    /// Stop once the cost itself drops below this.
    pub cost_floor: f64,
    /// Stop when the step is below `x_tol` in every coordinate.
    pub x_tol: f64,
    /// Forward-difference step (absolute, in the optimizer's coordinates).
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 200, f_tol: 1e-12, cost_floor: 1e-28, x_tol: 1e-12, fd_step: 1e-7 }
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Projected Levenberg–Marquardt on `Σ rᵢ(x)²` with a forward-difference
/// Jacobian. Coordinates pinned at a bound with the gradient pointing
/// outward are frozen for that iteration. `residuals` returns `None` for
/// infeasible points, which are treated as rejected steps.
pub fn levenberg_marquardt<F: FnMut(&[f64]) -> Option<Vec<f64>>>(
    mut residuals: F,
    x0: &[f64],
    bounds: &Bounds,
    opts: &LmOptions,
) -> Option<Minimum> {
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut evals = 1;
    let mut r = residuals(&x)?;
    let mut cost = sum_sq(&r);
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut stalls = 0;

    while iterations < opts.max_iterations {
        if cost <= opts.cost_floor {
            converged = true;
            break;
        }
        iterations += 1;
        let m = r.len();
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut h = opts.fd_step * x[j].abs().max(1.0);
            if xp[j] + h > bounds.hi[j] {
                h = -h;
            }
            xp[j] += h;
            evals += 1;
            let Some(rp) = residuals(&xp) else {
                continue;
            };
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let rv = DVector::from_vec(r.clone());
        let grad = jac.transpose() * &rv;
        let free: Vec<usize> = (0..n)
            .filter(|&j| {
                let at_lo = x[j] <= bounds.lo[j] && grad[j] > 0.0;
                let at_hi = x[j] >= bounds.hi[j] && grad[j] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        if free.is_empty() {
            converged = true;
            break;
        }
        let jf = jac.select_columns(&free);
        let jtj = jf.transpose() * &jf;
        let g = jf.transpose() * &rv;
        let dmax = jtj.diagonal().max().max(1e-300);

        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..free.len() {
                a[(k, k)] += lambda * a[(k, k)].max(1e-12 * dmax);
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => match a.lu().solve(&(-&g)) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                },
            };
            let mut xn = x.clone();
            for (k, &j) in free.iter().enumerate() {
                xn[j] += step[k];
            }
            bounds.project(&mut xn);
            let moved = xn.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            evals += 1;
            let candidate = residuals(&xn).map(|rn| (sum_sq(&rn), rn));
            match candidate {
                Some((cn, rn)) if cn.is_finite() && cn < cost => {
                    let rel = (cost - cn) / cost.max(1e-300);
                    x = xn;
                    r = rn;
                    cost = cn;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if rel < opts.f_tol || moved < opts.x_tol {
                        stalls += 1;
                    } else {
                        stalls = 0;
                    }
                    break;
                }
                _ => {
                    lambda *= 4.0;
                    if moved < opts.x_tol && lambda > 1e6 {
                        break;
                    }
                }
            }
        }
        history.push(cost);
        if !accepted || stalls >= 3 {
            converged = true;
            break;
        }
    }
    Some(Minimum { x, cost, evaluations: evals, iterations, converged, history })
}
