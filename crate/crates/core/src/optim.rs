//! Smooth unconstrained minimization (BFGS with backtracking) and the
//! quadratic-penalty / multiplier loop used for two-sided constraints.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the infinity norm of the gradient falls below this.
    pub grad_tol: f64,
    /// Also stop after `stall_iters` consecutive iterations whose relative
    /// objective decrease is below `f_tol`.
    pub f_tol: f64,
    pub stall_iters: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 1000, grad_tol: 1e-6, f_tol: 1e-15, stall_iters: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl Minimum {
    pub fn grad_inf_norm(&self) -> f64 {
        inf_norm(&self.grad)
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`. The objective returns `None` outside its domain, which the
/// line search treats as an infinitely bad point.
pub fn bfgs<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x).ok_or_else(|| Error::InvalidSpec("optimizer started outside the objective domain".into()))?;
    let mut evals = 1;
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut first = true;
    let mut stall = 0;

    for iter in 0..opts.max_iter {
        if inf_norm(&g) <= opts.grad_tol {
            return Ok(Minimum { x, f: fx, grad: g, iterations: iter, evaluations: evals, converged: true });
        }
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            // lost descent: restart from steepest descent
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            first = true;
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut t = if first {
            (1.0 / inf_norm(&d)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            evals += 1;
            if let Some((ft, gt)) = f(&xt) {
                if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                    accepted = Some((xt, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            // no acceptable step along a descent direction: numerically stationary
            let conv = inf_norm(&g) <= opts.grad_tol * 100.0;
            return Ok(Minimum { x, f: fx, grad: g, iterations: iter, evaluations: evals, converged: conv });
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first {
                let scale = sy / dot(&y, &y);
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] = if i == j { scale } else { 0.0 };
                    }
                }
                first = false;
            }
            // H+ = (I - rho s y') H (I - rho y s') + rho s s'
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        let rel = (fx - fnew).abs() / fx.abs().max(1.0);
        stall = if rel < opts.f_tol { stall + 1 } else { 0 };
        x = xn;
        fx = fnew;
        g = gn;
        if stall >= opts.stall_iters {
            let conv = inf_norm(&g) <= opts.grad_tol * 100.0;
            return Ok(Minimum { x, f: fx, grad: g, iterations: iter + 1, evaluations: evals, converged: conv });
        }
    }
    let conv = inf_norm(&g) <= opts.grad_tol;
    Ok(Minimum { x, f: fx, grad: g, iterations: opts.max_iter, evaluations: evals, converged: conv })
}

/// Settings for [`minimize_in_band`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyOptions {
    pub initial_weight: f64,
    pub growth: f64,
    pub max_weight: f64,
    pub feasibility_tol: f64,
    pub max_outer: usize,
    pub inner: BfgsOptions,
}

impl Default for PenaltyOptions {
    fn default() -> Self {
        Self {
            initial_weight: 10.0,
            growth: 10.0,
            max_weight: 1e12,
            feasibility_tol: 1e-6,
            max_outer: 60,
            inner: BfgsOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PenaltyOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub constraint: f64,
    pub violation: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub penalty_weight: f64,
}

/// Distance of `g` from the band `[lower, upper]`.
pub fn band_violation(g: f64, lower: f64, upper: f64) -> f64 {
    (g - upper).max(lower - g).max(0.0)
}

/// Minimizes `objective` subject to `lower <= constraint <= upper` with an
/// exterior quadratic penalty whose weight grows geometrically. Multiplier
/// estimates shift the penalty centre between rounds (method of
/// multipliers), so feasibility is reached without driving the weight to
/// extreme values.
///
/// Both closures return value and gradient, or `None` outside the domain.
pub fn minimize_in_band<F, G>(
    mut objective: F,
    mut constraint: G,
    lower: f64,
    upper: f64,
    x0: &[f64],
    opts: &PenaltyOptions,
) -> Result<PenaltyOutcome>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    G: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    let mut mu = opts.initial_weight;
    // multipliers of g - upper <= 0 and lower - g <= 0
    let (mut nu_u, mut nu_l) = (0.0f64, 0.0f64);
    let (g0, _) = constraint(&x).ok_or_else(|| Error::InvalidSpec("constraint undefined at start".into()))?;
    let mut viol = band_violation(g0, lower, upper);
    let mut inner_total = 0;

    for outer in 0..opts.max_outer {
        let m = bfgs(
            |z| penalized(&mut objective, &mut constraint, z, lower, upper, mu, nu_l, nu_u),
            &x,
            &opts.inner,
        )?;
        inner_total += m.iterations;
        x = m.x;
        let (g, _) = constraint(&x).ok_or_else(|| Error::InvalidSpec("constraint undefined".into()))?;
        let new_viol = band_violation(g, lower, upper);
        nu_u = (nu_u + mu * (g - upper)).max(0.0);
        nu_l = (nu_l + mu * (lower - g)).max(0.0);
        if new_viol <= opts.feasibility_tol && m.converged {
            let (f, _) = objective(&x).ok_or_else(|| Error::InvalidSpec("objective undefined".into()))?;
            return Ok(PenaltyOutcome {
                x,
                objective: f,
                constraint: g,
                violation: new_viol,
                outer_iterations: outer + 1,
                inner_iterations: inner_total,
                penalty_weight: mu,
            });
        }
        if new_viol > 0.25 * viol {
            mu = (mu * opts.growth).min(opts.max_weight);
        }
        viol = new_viol;
    }
    Err(Error::NonConvergence {
        what: "penalized constrained likelihood".into(),
        iterations: opts.max_outer,
        residual: viol,
    })
}

/// Augmented objective `f + (1/2mu) sum_k [max(0, nu_k + mu h_k)^2 - nu_k^2]`
/// for `h_u = g - upper`, `h_l = lower - g`.
#[allow(clippy::too_many_arguments)]
fn penalized<F, G>(
    objective: &mut F,
    constraint: &mut G,
    x: &[f64],
    lower: f64,
    upper: f64,
    mu: f64,
    nu_l: f64,
    nu_u: f64,
) -> Option<(f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    G: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let (f, mut grad) = objective(x)?;
    let (g, gg) = constraint(x)?;
    let su = (nu_u + mu * (g - upper)).max(0.0);
    let sl = (nu_l + mu * (lower - g)).max(0.0);
    let value = f + (su * su - nu_u * nu_u + sl * sl - nu_l * nu_l) / (2.0 * mu);
    let coef = su - sl;
    for (a, b) in grad.iter_mut().zip(&gg) {
        *a += coef * b;
    }
    Some((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Some((f, g))
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let m = bfgs(rosenbrock, &[-1.2, 1.0], &BfgsOptions { grad_tol: 1e-8, ..Default::default() }).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn bfgs_respects_domain() {
        // -log(x) + x on x > 0, minimum at 1
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                None
            } else {
                Some((-x[0].ln() + x[0], vec![-1.0 / x[0] + 1.0]))
            }
        };
        let m = bfgs(f, &[5.0], &BfgsOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn band_constrained_quadratic() {
        // min (x-3)^2 + (y-1)^2 s.t. -0.5 <= x + y <= 0.5 -> optimum (1.25, -0.75) on x+y=0.5
        let f = |z: &[f64]| Some(((z[0] - 3.0).powi(2) + (z[1] - 1.0).powi(2), vec![2.0 * (z[0] - 3.0), 2.0 * (z[1] - 1.0)]));
        let g = |z: &[f64]| Some((z[0] + z[1], vec![1.0, 1.0]));
        let out = minimize_in_band(f, g, -0.5, 0.5, &[3.0, 1.0], &PenaltyOptions::default()).unwrap();
        assert!(out.violation <= 1e-6);
        assert!((out.x[0] - 1.25).abs() < 1e-5 && (out.x[1] + 0.75).abs() < 1e-5, "{:?}", out.x);

        // band containing the unconstrained optimum is inactive
        let out = minimize_in_band(f, g, -10.0, 10.0, &[0.0, 0.0], &PenaltyOptions::default()).unwrap();
        assert!((out.x[0] - 3.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }
}
