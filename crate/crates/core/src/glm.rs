//! Parametric factors of the observed-data likelihood: logistic models for
//! the binary variables and a Gaussian linear model for the outcome.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Graph};
use crate::design::{Covariates, DesignSpec};
use crate::el::ElState;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
#[inline]
pub fn log1p_exp(eta: f64) -> f64 {
    if eta > 35.0 {
        eta
    } else if eta < -35.0 {
        eta.exp()
    } else {
        eta.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub design: DesignSpec,
    pub coef: Vec<f64>,
}

impl LogisticModel {
    pub fn new(design: DesignSpec, coef: Vec<f64>) -> Self {
        assert_eq!(design.len(), coef.len(), "coefficient length must match design");
        Self { design, coef }
    }

    #[inline]
    pub fn eta(&self, c: &Covariates) -> f64 {
        self.design.dot(&self.coef, c)
    }

    /// `P(response = 1 | c)`.
    #[inline]
    pub fn prob(&self, c: &Covariates) -> f64 {
        expit(self.eta(c))
    }

    /// `P(response = value | c)` for a binary value.
    #[inline]
    pub fn prob_of(&self, c: &Covariates, value: f64) -> f64 {
        let p = self.prob(c);
        if value > 0.5 {
            p
        } else {
            1.0 - p
        }
    }

    #[inline]
    pub fn log_prob_of(&self, c: &Covariates, value: f64) -> f64 {
        let eta = self.eta(c);
        value * eta - log1p_exp(eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub design: DesignSpec,
    pub coef: Vec<f64>,
    pub sigma: f64,
}

impl LinearModel {
    pub fn new(design: DesignSpec, coef: Vec<f64>, sigma: f64) -> Self {
        assert_eq!(design.len(), coef.len(), "coefficient length must match design");
        Self { design, coef, sigma }
    }

    #[inline]
    pub fn mean(&self, c: &Covariates) -> f64 {
        self.design.dot(&self.coef, c)
    }

    #[inline]
    pub fn log_density(&self, c: &Covariates, y: f64) -> f64 {
        let z = (y - self.mean(c)) / self.sigma;
        -0.5 * LN_2PI - self.sigma.ln() - 0.5 * z * z
    }
}

/// Fitted (or true) factor models `p(A|X)`, `p(M|A,X)`, optionally
/// `p(L|A,X,M)`, and the outcome regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmParams {
    pub a: LogisticModel,
    pub m: LogisticModel,
    pub l: Option<LogisticModel>,
    pub y: LinearModel,
}

/// Which factors of the likelihood participate in an optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Factors {
    pub a: bool,
    pub m: bool,
    pub l: bool,
    pub y: bool,
}

impl Factors {
    pub const ALL: Factors = Factors { a: true, m: true, l: true, y: true };
}

/// Positions of each factor's coefficients in the flat parameter vector.
/// The outcome noise scale enters as `ln(sigma)` in the last slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub a: Range<usize>,
    pub m: Range<usize>,
    pub l: Option<Range<usize>>,
    pub y: Range<usize>,
    pub log_sigma: usize,
    pub dim: usize,
}

impl Layout {
    /// Flat indices belonging to the selected factors.
    pub fn indices(&self, f: Factors) -> Vec<usize> {
        let mut out = Vec::new();
        if f.a {
            out.extend(self.a.clone());
        }
        if f.m {
            out.extend(self.m.clone());
        }
        if f.l {
            if let Some(r) = &self.l {
                out.extend(r.clone());
            }
        }
        if f.y {
            out.extend(self.y.clone());
            out.push(self.log_sigma);
        }
        out
    }
}

impl GlmParams {
    pub fn graph(&self) -> Graph {
        if self.l.is_some() {
            Graph::TwoMediator
        } else {
            Graph::OneMediator
        }
    }

    pub fn layout(&self) -> Layout {
        let a = 0..self.a.coef.len();
        let m = a.end..a.end + self.m.coef.len();
        let (l, after) = match &self.l {
            Some(lm) => (Some(m.end..m.end + lm.coef.len()), m.end + lm.coef.len()),
            None => (None, m.end),
        };
        let y = after..after + self.y.coef.len();
        let log_sigma = y.end;
        Layout { a, m, l, y, log_sigma, dim: log_sigma + 1 }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout().dim);
        v.extend(&self.a.coef);
        v.extend(&self.m.coef);
        if let Some(l) = &self.l {
            v.extend(&l.coef);
        }
        v.extend(&self.y.coef);
        v.push(self.y.sigma.ln());
        v
    }

    pub fn set_from_vec(&mut self, theta: &[f64]) {
        let lay = self.layout();
        assert_eq!(theta.len(), lay.dim);
        self.a.coef.copy_from_slice(&theta[lay.a.clone()]);
        self.m.coef.copy_from_slice(&theta[lay.m.clone()]);
        if let (Some(l), Some(r)) = (self.l.as_mut(), lay.l.clone()) {
            l.coef.copy_from_slice(&theta[r]);
        }
        self.y.coef.copy_from_slice(&theta[lay.y.clone()]);
        self.y.sigma = theta[lay.log_sigma].exp();
    }

    pub fn with_vec(&self, theta: &[f64]) -> Self {
        let mut p = self.clone();
        p.set_from_vec(theta);
        p
    }

    pub fn check_compatible(&self, ds: &Dataset) -> Result<()> {
        if self.l.is_some() != ds.l().is_some() {
            return Err(Error::Dimension(format!(
                "parameters are for the {} graph but the data are {}",
                self.graph(),
                ds.graph()
            )));
        }
        if !(self.y.sigma > 0.0) {
            return Err(Error::InvalidSpec("outcome sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Designs used for each fitted factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDesigns {
    pub a: DesignSpec,
    pub m: DesignSpec,
    pub l: Option<DesignSpec>,
    pub y: DesignSpec,
}

impl ModelDesigns {
    /// Correctly specified designs matching the simulation processes.
    pub fn default_for(graph: Graph) -> Self {
        match graph {
            Graph::OneMediator => Self {
                a: DesignSpec::treatment_default(),
                m: DesignSpec::mediator_default(),
                l: None,
                y: DesignSpec::outcome_one_mediator(),
            },
            Graph::TwoMediator => Self {
                a: DesignSpec::treatment_default(),
                m: DesignSpec::mediator_default(),
                l: Some(DesignSpec::second_mediator_default()),
                y: DesignSpec::outcome_two_mediator(),
            },
        }
    }

    /// Factor-wise maximum likelihood: `A`, `M` and `L` models on all rows,
    /// the outcome model on rows with an observed outcome.
    pub fn fit(&self, ds: &Dataset) -> Result<GlmParams> {
        if self.l.is_some() != ds.l().is_some() {
            return Err(Error::Dimension("designs do not match the dataset graph".into()));
        }
        let rows = ds.rows();
        let a = fit_logistic(&self.a, &rows, ds.a())
            .map_err(|e| relabel(e, "p(A|X)"))?;
        let m = fit_logistic(&self.m, &rows, ds.m())
            .map_err(|e| relabel(e, "p(M|A,X)"))?;
        let l = match (&self.l, ds.l()) {
            (Some(d), Some(lv)) => Some(LogisticModel::new(
                d.clone(),
                fit_logistic(d, &rows, lv).map_err(|e| relabel(e, "p(L|A,X,M)"))?,
            )),
            _ => None,
        };
        let (obs_rows, obs_y): (Vec<Covariates>, Vec<f64>) = (0..ds.n())
            .filter_map(|i| ds.y()[i].map(|y| (rows[i], y)))
            .unzip();
        let (coef, sigma) = fit_linear(&self.y, &obs_rows, &obs_y)
            .map_err(|e| relabel(e, "E[Y|A,M,X]"))?;
        Ok(GlmParams {
            a: LogisticModel::new(self.a.clone(), a),
            m: LogisticModel::new(self.m.clone(), m),
            l,
            y: LinearModel::new(self.y.clone(), coef, sigma),
        })
    }
}

fn relabel(e: Error, what: &str) -> Error {
    match e {
        Error::Separation(_) => Error::Separation(what.into()),
        Error::Singular(_) => Error::Singular(what.into()),
        Error::RankDeficient(_) => Error::RankDeficient(what.into()),
        Error::NonConvergence { iterations, residual, .. } => Error::NonConvergence {
            what: format!("logistic fit of {what}"),
            iterations,
            residual,
        },
        other => other,
    }
}

const SEPARATION_BOUND: f64 = 40.0;

/// Logistic maximum likelihood by Newton's method with step halving.
pub fn fit_logistic(design: &DesignSpec, rows: &[Covariates], response: &[u8]) -> Result<Vec<f64>> {
    if rows.len() != response.len() {
        return Err(Error::Dimension("rows and response differ in length".into()));
    }
    if rows.is_empty() {
        return Err(Error::NoRows);
    }
    let p = design.len();
    let x: Vec<f64> = rows.iter().flat_map(|c| design.row(c)).collect();
    let yv: Vec<f64> = response.iter().map(|&v| f64::from(v)).collect();

    let loglik = |beta: &[f64]| -> f64 {
        x.chunks_exact(p)
            .zip(&yv)
            .map(|(xi, &yi)| {
                let eta: f64 = xi.iter().zip(beta).map(|(a, b)| a * b).sum();
                yi * eta - log1p_exp(eta)
            })
            .sum()
    };

    let mut beta = vec![0.0; p];
    let mut ll = loglik(&beta);
    let mut grad_norm = f64::INFINITY;
    for iter in 0..200 {
        let mut g = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        for (xi, &yi) in x.chunks_exact(p).zip(&yv) {
            let eta: f64 = xi.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = expit(eta);
            let w = mu * (1.0 - mu);
            for j in 0..p {
                g[j] += (yi - mu) * xi[j];
                let wx = w * xi[j];
                for k in 0..=j {
                    info[(j, k)] += wx * xi[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                info[(k, j)] = info[(j, k)];
            }
        }
        grad_norm = g.norm();
        if grad_norm <= 1e-8 {
            return separation_check(beta, &x, &yv, p);
        }
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => {
                if beta.iter().any(|b| b.abs() > SEPARATION_BOUND / 2.0) {
                    return Err(Error::Separation(String::new()));
                }
                return Err(Error::Singular(String::new()));
            }
        };
        // Newton decrement: half the attainable log-likelihood gain
        let decrement = g.dot(&step);
        if decrement <= 1e-24 {
            return separation_check(beta, &x, &yv, p);
        }
        if decrement <= 1e-8 {
            // inside the quadratic-convergence region the full step is
            // taken; the line search would only see rounding noise
            for (b, s) in beta.iter_mut().zip(step.iter()) {
                *b += s;
            }
            ll = loglik(&beta);
            continue;
        }
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..50 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let ll_c = loglik(&cand);
            if ll_c >= ll {
                beta = cand;
                improved = ll_c > ll || t == 1.0;
                ll = ll_c;
                break;
            }
            t *= 0.5;
        }
        if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            return Err(Error::Separation(String::new()));
        }
        if !improved && grad_norm <= 1e-6 {
            return separation_check(beta, &x, &yv, p);
        }
        if !improved && iter > 0 {
            break;
        }
    }
    if grad_norm <= 1e-6 {
        return separation_check(beta, &x, &yv, p);
    }
    Err(Error::NonConvergence { what: "logistic fit".into(), iterations: 200, residual: grad_norm })
}

/// Rejects a stationary point that reproduces every response almost
/// exactly: the likelihood has no finite maximizer there.
fn separation_check(beta: Vec<f64>, x: &[f64], y: &[f64], p: usize) -> Result<Vec<f64>> {
    let worst = x
        .chunks_exact(p)
        .zip(y)
        .map(|(xi, yi)| {
            let eta: f64 = xi.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yi - expit(eta)).abs()
        })
        .fold(0.0, f64::max);
    if worst < 1e-6 {
        return Err(Error::Separation(String::new()));
    }
    Ok(beta)
}

/// Ordinary least squares with the maximum-likelihood noise scale
/// (divisor `n`).
pub fn fit_linear(design: &DesignSpec, rows: &[Covariates], response: &[f64]) -> Result<(Vec<f64>, f64)> {
    if rows.len() != response.len() {
        return Err(Error::Dimension("rows and response differ in length".into()));
    }
    if rows.is_empty() {
        return Err(Error::NoRows);
    }
    let p = design.len();
    let x: Vec<f64> = rows.iter().flat_map(|c| design.row(c)).collect();
    let coef = least_squares(&x, p, response)?;
    let rss: f64 = x
        .chunks_exact(p)
        .zip(response)
        .map(|(xi, y)| {
            let fit: f64 = xi.iter().zip(&coef).map(|(a, b)| a * b).sum();
            (y - fit).powi(2)
        })
        .sum();
    Ok((coef, (rss / rows.len() as f64).sqrt()))
}

/// Least squares on a row-major `n x p` matrix. Fails on rank deficiency.
pub fn least_squares(x: &[f64], p: usize, y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    debug_assert_eq!(x.len(), n * p);
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for (xi, &yi) in x.chunks_exact(p).zip(y) {
        for j in 0..p {
            xty[j] += xi[j] * yi;
            for k in 0..=j {
                xtx[(j, k)] += xi[j] * xi[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            xtx[(k, j)] = xtx[(j, k)];
        }
    }
    // Column scaling keeps the rank test meaningful for mixed-scale terms.
    let scale: Vec<f64> = (0..p).map(|j| xtx[(j, j)].sqrt()).collect();
    if scale.iter().any(|s| *s == 0.0 || !s.is_finite()) {
        return Err(Error::RankDeficient(String::new()));
    }
    let scaled = DMatrix::from_fn(p, p, |j, k| xtx[(j, k)] / (scale[j] * scale[k]));
    let svd = scaled.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-11 * smax {
        return Err(Error::RankDeficient(String::new()));
    }
    let rhs = DVector::from_fn(p, |j, _| xty[j] / scale[j]);
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|_| Error::RankDeficient(String::new()))?;
    Ok((0..p).map(|j| sol[j] / scale[j]).collect())
}

/// Observed-data log-likelihood under outcomes missing at random:
/// `sum_i log p(A|X) + log p(M|A,X) [+ log p(L|..)] + R_i log p(Y|..)`,
/// plus `sum_i log p_i` when empirical-likelihood weights are supplied.
pub fn observed_data_loglik(ds: &Dataset, params: &GlmParams, weights: Option<&ElState>) -> f64 {
    let mut total = 0.0;
    for i in 0..ds.n() {
        let c = ds.covariates(i);
        total += params.a.log_prob_of(&c, c.a);
        total += params.m.log_prob_of(&c, c.m);
        if let Some(l) = &params.l {
            total += l.log_prob_of(&c, c.l);
        }
        if let Some(y) = ds.y()[i] {
            total += params.y.log_density(&c, y);
        }
    }
    if let Some(el) = weights {
        total += el.weights.iter().map(|p| p.ln()).sum::<f64>();
    }
    total
}

/// Log-likelihood of the selected factors and its gradient in the flat
/// [`Layout`]. Gradient entries of excluded factors are left at zero.
pub fn loglik_with_grad(ds: &Dataset, params: &GlmParams, factors: Factors, grad: &mut [f64]) -> f64 {
    let lay = params.layout();
    debug_assert_eq!(grad.len(), lay.dim);
    grad.fill(0.0);
    let mut total = 0.0;
    let mut buf = vec![0.0; 16];
    let inv_s2 = 1.0 / (params.y.sigma * params.y.sigma);
    let ln_sigma = params.y.sigma.ln();
    for i in 0..ds.n() {
        let c = ds.covariates(i);
        if factors.a {
            total += logistic_term(&params.a, &c, c.a, &mut grad[lay.a.clone()], &mut buf);
        }
        if factors.m {
            total += logistic_term(&params.m, &c, c.m, &mut grad[lay.m.clone()], &mut buf);
        }
        if factors.l {
            if let (Some(l), Some(r)) = (&params.l, lay.l.clone()) {
                total += logistic_term(l, &c, c.l, &mut grad[r], &mut buf);
            }
        }
        if factors.y {
            if let Some(y) = ds.y()[i] {
                let d = &mut buf[..params.y.design.len()];
                params.y.design.row_into(&c, d);
                let mu: f64 = d.iter().zip(&params.y.coef).map(|(a, b)| a * b).sum();
                let resid = y - mu;
                let z2 = resid * resid * inv_s2;
                total += -0.5 * LN_2PI - ln_sigma - 0.5 * z2;
                for (g, dj) in grad[lay.y.clone()].iter_mut().zip(d.iter()) {
                    *g += resid * inv_s2 * dj;
                }
                grad[lay.log_sigma] += z2 - 1.0;
            }
        }
    }
    total
}

#[inline]
fn logistic_term(model: &LogisticModel, c: &Covariates, v: f64, grad: &mut [f64], buf: &mut [f64]) -> f64 {
    let d = &mut buf[..model.design.len()];
    model.design.row_into(c, d);
    let eta: f64 = d.iter().zip(&model.coef).map(|(a, b)| a * b).sum();
    let mu = expit(eta);
    for (g, dj) in grad.iter_mut().zip(d.iter()) {
        *g += (v - mu) * dj;
    }
    v * eta - log1p_exp(eta)
}
