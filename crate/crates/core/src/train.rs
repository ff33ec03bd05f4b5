//! The five training procedures and batch prediction for rows whose outcome
//! is missing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Graph};
use crate::design::Covariates;
use crate::effects::{estimate, per_unit_with_grad, Estimator, Paths, PseFunctional};
use crate::el::{solve_lambda, weights_from_lambda, ElState};
use crate::error::{Error, Result};
use crate::glm::{loglik_with_grad, observed_data_loglik, Factors, GlmParams, ModelDesigns};
use crate::optim::{bfgs, inf_norm, minimize_in_band, BfgsOptions, PenaltyOptions};
use crate::reparam::ReparamOutcomeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Unconstrained maximum likelihood.
    M0,
    /// Likelihood maximized subject to the estimated effect lying in the band.
    M1,
    /// Reparameterized outcome model with the effect coefficient at zero.
    M2,
    /// Parametric factors plus empirical-likelihood covariate weights.
    M3,
    /// Reparameterized outcome model with empirical-likelihood weights.
    M4,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::M0, Method::M1, Method::M2, Method::M3, Method::M4];

    pub fn is_constrained(self) -> bool {
        self != Method::M0
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m0" | "unconstrained" => Ok(Method::M0),
            "m1" | "constrained" | "constrained-standard" => Ok(Method::M1),
            "m2" | "reparam" => Ok(Method::M2),
            "m3" | "hybrid" => Ok(Method::M3),
            "m4" | "hybrid-reparam" => Ok(Method::M4),
            _ => Err(Error::InvalidSpec(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    /// Effect estimator constrained by M1 and reported by M0.
    pub estimator: Estimator,
    pub epsilon: (f64, f64),
    pub graph: Graph,
    pub paths: Paths,
    pub designs: ModelDesigns,
    pub bfgs: BfgsOptions,
    pub penalty: PenaltyOptions,
    pub max_outer_iters: usize,
    pub outer_tol: f64,
}

impl TrainConfig {
    pub fn new(method: Method, graph: Graph) -> Self {
        Self {
            method,
            estimator: Estimator::GFormula,
            epsilon: (-0.05, 0.05),
            graph,
            paths: Paths::default_for(graph),
            designs: ModelDesigns::default_for(graph),
            bfgs: BfgsOptions::default(),
            penalty: PenaltyOptions::default(),
            max_outer_iters: 200,
            outer_tol: 1e-6,
        }
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_epsilon(mut self, lower: f64, upper: f64) -> Self {
        self.epsilon = (lower, upper);
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn functional(&self) -> Result<PseFunctional> {
        PseFunctional::new(self.graph, self.paths, self.estimator)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.epsilon;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidSpec(format!("epsilon band ({lo}, {hi}) is not an interval")));
        }
        if self.designs.l.is_some() != self.graph.has_l() {
            return Err(Error::InvalidSpec("designs do not match the graph".into()));
        }
        if self.outer_tol <= 0.0 || self.max_outer_iters == 0 {
            return Err(Error::InvalidSpec("outer iteration settings must be positive".into()));
        }
        self.functional()?;
        Ok(())
    }

    /// The point of the band closest to zero; the empirical-likelihood
    /// methods constrain the weighted effect to equal it.
    fn target(&self) -> f64 {
        0.0f64.clamp(self.epsilon.0, self.epsilon.1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Distance of the fitted effect from the band (M1) or the weighted
    /// moment residual (M3, M4).
    pub constraint_residual: f64,
    pub penalty_weight: Option<f64>,
    pub lambda: Option<f64>,
    /// Update norms of the M4 outer loop.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    pub estimator: Estimator,
    /// Fitted factors; for M2/M4 the outcome regression is the ordinary form
    /// of the reparameterized mean.
    pub params: GlmParams,
    pub reparam: Option<ReparamOutcomeModel>,
    pub el: Option<ElState>,
    /// Parametric observed-data log-likelihood plus `sum_i ln(n p_i)`, the
    /// log empirical likelihood ratio of the covariate weights (zero for
    /// uniform weights).
    pub loglik: f64,
    pub effect_at_fit: f64,
    /// `(row, prediction)` for each row without an observed outcome.
    pub predictions: Vec<(usize, f64)>,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    /// Covariate weights of the fit: the empirical-likelihood weights when
    /// present, otherwise uniform.
    pub fn x_weights(&self, n: usize) -> Vec<f64> {
        match &self.el {
            Some(el) => el.weights.clone(),
            None => vec![1.0 / n as f64; n],
        }
    }
}

/// Fits with the procedure selected in `config`.
pub fn fit(ds: &Dataset, config: &TrainConfig) -> Result<FitResult> {
    match config.method {
        Method::M0 => fit_unconstrained(ds, config),
        Method::M1 => fit_constrained_standard(ds, config),
        Method::M2 => fit_reparam(ds, config),
        Method::M3 => fit_hybrid(ds, config),
        Method::M4 => fit_hybrid_reparam(ds, config),
    }
}

fn check_inputs(ds: &Dataset, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if ds.graph() != config.graph {
        return Err(Error::InvalidSpec(format!("data are {} but the configuration is {}", ds.graph(), config.graph)));
    }
    Ok(())
}

fn el_ratio(el: &ElState) -> f64 {
    let n = el.weights.len() as f64;
    el.weights.iter().map(|p| (n * p).ln()).sum()
}

fn finish(
    ds: &Dataset,
    method: Method,
    estimator: Estimator,
    params: GlmParams,
    reparam: Option<ReparamOutcomeModel>,
    el: Option<ElState>,
    effect_at_fit: f64,
    diagnostics: Diagnostics,
) -> FitResult {
    let loglik = observed_data_loglik(ds, &params, None) + el.as_ref().map_or(0.0, el_ratio);
    let mut out = FitResult {
        method,
        estimator,
        params,
        reparam,
        el,
        loglik,
        effect_at_fit,
        predictions: Vec::new(),
        diagnostics,
    };
    out.predictions = predict(ds, &out);
    out
}

/// M0: factor-wise maximum likelihood.
pub fn fit_unconstrained(ds: &Dataset, config: &TrainConfig) -> Result<FitResult> {
    check_inputs(ds, config)?;
    let params = config.designs.fit(ds)?;
    let effect = estimate(ds, &params, &config.functional()?)?.value;
    let diag = Diagnostics { converged: true, ..Default::default() };
    Ok(finish(ds, Method::M0, config.estimator, params, None, None, effect, diag))
}

/// Factors whose parameters enter the estimator.
fn estimator_factors(estimator: Estimator) -> Factors {
    match estimator {
        Estimator::GFormula => Factors { a: false, m: true, l: true, y: true },
        Estimator::Ipw => Factors { a: true, m: true, l: false, y: false },
        Estimator::Mixed => Factors { a: true, m: false, l: false, y: true },
        Estimator::Aipw => Factors { a: true, m: true, l: false, y: true },
    }
}

/// A coordinate subspace of the flat parameter vector around a base point.
struct Subspace {
    base: GlmParams,
    theta: Vec<f64>,
    idx: Vec<usize>,
}

impl Subspace {
    fn new(base: &GlmParams, factors: Factors) -> Self {
        let lay = base.layout();
        Self { base: base.clone(), theta: base.to_vec(), idx: lay.indices(factors) }
    }

    fn start(&self) -> Vec<f64> {
        self.idx.iter().map(|&i| self.theta[i]).collect()
    }

    fn expand(&self, z: &[f64]) -> GlmParams {
        let mut t = self.theta.clone();
        for (&i, &v) in self.idx.iter().zip(z) {
            t[i] = v;
        }
        self.base.with_vec(&t)
    }

    fn restrict(&self, g: &[f64]) -> Vec<f64> {
        self.idx.iter().map(|&i| g[i]).collect()
    }
}

/// Negative mean log-likelihood of the selected factors and its gradient.
fn neg_loglik(ds: &Dataset, params: &GlmParams, factors: Factors, sub: &Subspace) -> (f64, Vec<f64>) {
    let n = ds.n() as f64;
    let mut g = vec![0.0; params.layout().dim];
    let ll = loglik_with_grad(ds, params, factors, &mut g);
    (-ll / n, sub.restrict(&g).iter().map(|v| -v / n).collect())
}

/// M1: penalized maximum likelihood with the estimated effect held in the
/// band. Only the factors that enter the estimator move; the others stay at
/// their maximum-likelihood values.
pub fn fit_constrained_standard(ds: &Dataset, config: &TrainConfig) -> Result<FitResult> {
    check_inputs(ds, config)?;
    let functional = config.functional()?;
    let mle = config.designs.fit(ds)?;
    let factors = estimator_factors(config.estimator);
    let sub = Subspace::new(&mle, factors);
    let n = ds.n();
    let unit_w = vec![1.0 / n as f64; n];

    let objective = |z: &[f64]| Some(neg_loglik(ds, &sub.expand(z), factors, &sub));
    let constraint = |z: &[f64]| {
        let p = sub.expand(z);
        let (units, grad) = per_unit_with_grad(ds, &p, &functional, &unit_w).ok()?;
        let value = units.iter().sum::<f64>() / n as f64;
        Some((value, sub.restrict(&grad)))
    };
    let opts = PenaltyOptions { inner: config.bfgs, ..config.penalty };
    let out = minimize_in_band(objective, constraint, config.epsilon.0, config.epsilon.1, &sub.start(), &opts)?;
    let params = sub.expand(&out.x);
    let diag = Diagnostics {
        iterations: out.inner_iterations,
        converged: true,
        constraint_residual: out.violation,
        penalty_weight: Some(out.penalty_weight),
        ..Default::default()
    };
    Ok(finish(ds, Method::M1, config.estimator, params, None, None, out.constraint, diag))
}

/// M2: nuisance factors at their maximum-likelihood values, outcome model
/// in the reparameterized form with the effect coefficient fixed at zero.
pub fn fit_reparam(ds: &Dataset, config: &TrainConfig) -> Result<FitResult> {
    check_inputs(ds, config)?;
    let nuisance = config.designs.fit(ds)?;
    let uniform = vec![1.0 / ds.n() as f64; ds.n()];
    let r = ReparamOutcomeModel::fit(ds, &config.designs.y, config.paths, &nuisance, &uniform, Some(0.0))?;
    let params = r.params_with(&nuisance);
    let diag = Diagnostics { converged: true, ..Default::default() };
    Ok(finish(ds, Method::M2, Estimator::GFormula, params, Some(r), None, 0.0, diag))
}

/// M3: maximizes the hybrid likelihood `sum_i [ln p_i + parametric_i]`
/// subject to `sum_i p_i = 1`, `sum_i p_i m(X_i) = t`. The weights are
/// profiled out through the multiplier, leaving a smooth problem in the
/// parametric coefficients; its gradient follows from the envelope theorem.
pub fn fit_hybrid(ds: &Dataset, config: &TrainConfig) -> Result<FitResult> {
    check_inputs(ds, config)?;
    let functional = PseFunctional::new(config.graph, config.paths, Estimator::GFormula)?;
    let mle = config.designs.fit(ds)?;
    let factors = estimator_factors(Estimator::GFormula);
    let sub = Subspace::new(&mle, factors);
    let n = ds.n();
    let nf = n as f64;
    let target = config.target();

    let shifted = |p: &GlmParams| -> Option<Vec<f64>> {
        let est = estimate(ds, p, &functional).ok()?;
        Some(est.per_unit_m.iter().map(|v| v - target).collect())
    };
    {
        let m0 = shifted(&mle).ok_or(Error::InfeasibleConstraint)?;
        solve_lambda(&m0)?;
    }
    let objective = |z: &[f64]| -> Option<(f64, Vec<f64>)> {
        let p = sub.expand(z);
        let m = shifted(&p)?;
        let lambda = solve_lambda(&m).ok()?;
        let mut el_term = 0.0;
        let mut w = Vec::with_capacity(n);
        for &v in &m {
            let d = 1.0 + lambda * v;
            if d <= 0.0 {
                return None;
            }
            el_term += d.ln();
            w.push(lambda / d);
        }
        let (nll, mut g) = neg_loglik(ds, &p, factors, &sub);
        let (_, gm) = per_unit_with_grad(ds, &p, &functional, &w).ok()?;
        for (gi, gmi) in g.iter_mut().zip(sub.restrict(&gm)) {
            *gi += gmi / nf;
        }
        Some((nll + el_term / nf, g))
    };
    let min = bfgs(objective, &sub.start(), &config.bfgs)?;
    if !min.converged {
        return Err(Error::NonConvergence {
            what: "hybrid likelihood".into(),
            iterations: min.iterations,
            residual: min.grad_inf_norm(),
        });
    }
    let params = sub.expand(&min.x);
    let est = estimate(ds, &params, &functional)?;
    let m: Vec<f64> = est.per_unit_m.iter().map(|v| v - target).collect();
    let el = ElState::from_constraint(&m)?;
    let effect = el.mean_of(&est.per_unit_m);
    let diag = Diagnostics {
        iterations: min.iterations,
        converged: true,
        constraint_residual: el.mean_of(&m),
        lambda: Some(el.lambda),
        ..Default::default()
    };
    Ok(finish(ds, Method::M3, Estimator::GFormula, params, None, Some(el), effect, diag))
}

/// Outcome coefficients compared between M4 iterations.
fn outcome_vector(r: &ReparamOutcomeModel) -> Vec<f64> {
    let mut v = r.alpha.clone();
    v.push(r.w0);
    v.push(r.sigma);
    v
}

const OSCILLATION_WINDOW: usize = 20;

/// M4: alternates between empirical-likelihood weights for the current
/// per-covariate effects and a refit of the reparameterized outcome model
/// whose correction terms use those weights, starting from the M2 fit.
pub fn fit_hybrid_reparam(ds: &Dataset, config: &TrainConfig) -> Result<FitResult> {
    check_inputs(ds, config)?;
    let nuisance = config.designs.fit(ds)?;
    let n = ds.n();
    let mut p = vec![1.0 / n as f64; n];
    let mut r = ReparamOutcomeModel::fit(ds, &config.designs.y, config.paths, &nuisance, &p, Some(0.0))?;
    let mut trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut lambda = 0.0;
    let mut converged = false;

    for _ in 0..config.max_outer_iters {
        let m = r.per_unit_m(&nuisance, ds)?;
        lambda = solve_lambda(&m)?;
        let p_next = weights_from_lambda(&m, lambda)?;
        let r_next = ReparamOutcomeModel::fit(ds, &config.designs.y, config.paths, &nuisance, &p_next, Some(0.0))?;
        let dp = inf_norm(&p.iter().zip(&p_next).map(|(a, b)| a - b).collect::<Vec<_>>());
        let da = inf_norm(
            &outcome_vector(&r)
                .iter()
                .zip(outcome_vector(&r_next))
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        let delta = dp.max(da);
        trace.push(delta);
        p = p_next;
        r = r_next;
        if delta <= config.outer_tol {
            converged = true;
            break;
        }
        if delta < best {
            best = delta;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= OSCILLATION_WINDOW {
                return Err(Error::NonConvergence {
                    what: format!("hybrid reparameterized iteration (update norms {trace:?})"),
                    iterations: trace.len(),
                    residual: delta,
                });
            }
        }
    }
    let params = r.params_with(&nuisance);
    let m = r.per_unit_m(&nuisance, ds)?;
    let el = ElState { lambda, weights: p };
    let residual = el.mean_of(&m);
    let diag = Diagnostics {
        iterations: trace.len(),
        converged,
        constraint_residual: residual,
        lambda: Some(lambda),
        trace,
        ..Default::default()
    };
    let effect = r.pse_of();
    Ok(finish(ds, Method::M4, Estimator::GFormula, params, Some(r), Some(el), effect, diag))
}

/// Prediction for one covariate row under the averaging rule of the fit.
pub fn predict_row(fit: &FitResult, c: &Covariates) -> f64 {
    let p = &fit.params;
    let mu = |a: f64, m: f64, l: f64| p.y.mean(&Covariates::new(c.x, a, m, l));
    // sum over (M[, L]) given A = a
    let mediated = |a: f64| -> f64 {
        let q = p.m.prob(&Covariates::new(c.x, a, 0.0, 0.0));
        [(0.0, 1.0 - q), (1.0, q)]
            .iter()
            .map(|&(m, pm)| {
                let inner = match &p.l {
                    None => mu(a, m, 0.0),
                    Some(lm) => {
                        let r = lm.prob(&Covariates::new(c.x, a, m, 0.0));
                        mu(a, m, 0.0) * (1.0 - r) + mu(a, m, 1.0) * r
                    }
                };
                pm * inner
            })
            .sum()
    };
    let direct = || mu(c.a, c.m, c.l);
    match fit.method {
        Method::M0 | Method::M3 | Method::M4 => direct(),
        Method::M2 => mediated(c.a),
        Method::M1 => match fit.estimator {
            Estimator::GFormula => mediated(c.a),
            Estimator::Ipw | Estimator::Aipw => {
                let pi = p.a.prob(c);
                (1.0 - pi) * mediated(0.0) + pi * mediated(1.0)
            }
            Estimator::Mixed => {
                let pi = p.a.prob(c);
                let mut num = 0.0;
                let mut den = 0.0;
                for (a, pa) in [(0.0, 1.0 - pi), (1.0, pi)] {
                    let w = p.m.prob_of(&Covariates::new(c.x, a, 0.0, 0.0), c.m) * pa;
                    num += w * mu(a, c.m, c.l);
                    den += w;
                }
                num / den
            }
        },
    }
}

/// Predictions for the rows of `ds` without an observed outcome.
pub fn predict(ds: &Dataset, fit: &FitResult) -> Vec<(usize, f64)> {
    ds.masked_rows().into_iter().map(|i| (i, predict_row(fit, &ds.covariates(i)))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{simulate_masked, DgpSpec};

    fn data(n: usize, seed: u64) -> Dataset {
        simulate_masked(&DgpSpec::new(Graph::OneMediator, n, seed)).unwrap().0
    }

    #[test]
    fn method_and_estimator_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        for e in Estimator::ALL {
            assert_eq!(e.to_string().parse::<Estimator>().unwrap(), e);
        }
    }

    #[test]
    fn invalid_band_is_rejected() {
        let ds = data(200, 1);
        let cfg = TrainConfig::new(Method::M1, Graph::OneMediator).with_epsilon(0.1, -0.1);
        assert!(matches!(fit(&ds, &cfg), Err(Error::InvalidSpec(_))));
        let cfg = TrainConfig::new(Method::M0, Graph::TwoMediator);
        assert!(fit(&ds, &cfg).is_err());
    }

    #[test]
    fn wide_band_leaves_the_mle_unchanged() {
        let ds = data(800, 2);
        let m0 = fit(&ds, &TrainConfig::new(Method::M0, Graph::OneMediator)).unwrap();
        let m1 = fit(&ds, &TrainConfig::new(Method::M1, Graph::OneMediator).with_epsilon(-10.0, 10.0)).unwrap();
        for (a, b) in m0.params.to_vec().iter().zip(m1.params.to_vec()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constrained_fits_respect_the_band() {
        let ds = data(1000, 3);
        let m0 = fit(&ds, &TrainConfig::new(Method::M0, Graph::OneMediator)).unwrap();
        for est in Estimator::ALL {
            let cfg = TrainConfig::new(Method::M1, Graph::OneMediator).with_estimator(est);
            let r = fit(&ds, &cfg).unwrap();
            assert!(r.effect_at_fit.abs() <= 0.05 + 1e-6, "{est}: {}", r.effect_at_fit);
            let recomputed = estimate(&ds, &r.params, &cfg.functional().unwrap()).unwrap().value;
            assert!((recomputed - r.effect_at_fit).abs() < 1e-12);
            assert!(r.loglik <= m0.loglik + 1e-8);
        }
    }

    #[test]
    fn reparam_fits_have_zero_effect() {
        let ds = data(1000, 4);
        let m2 = fit(&ds, &TrainConfig::new(Method::M2, Graph::OneMediator)).unwrap();
        assert_eq!(m2.effect_at_fit, 0.0);
        let g = estimate(&ds, &m2.params, &PseFunctional::default_for(Graph::OneMediator, Estimator::GFormula).unwrap())
            .unwrap()
            .value;
        assert!(g.abs() < 1e-10);
        let m4 = fit(&ds, &TrainConfig::new(Method::M4, Graph::OneMediator)).unwrap();
        assert_eq!(m4.effect_at_fit, 0.0);
        assert!(m4.diagnostics.converged);
        assert!(m4.diagnostics.constraint_residual.abs() < 1e-8);
    }

    #[test]
    fn hybrid_fit_satisfies_weighted_constraint() {
        let ds = data(1000, 5);
        let m0 = fit(&ds, &TrainConfig::new(Method::M0, Graph::OneMediator)).unwrap();
        let m3 = fit(&ds, &TrainConfig::new(Method::M3, Graph::OneMediator)).unwrap();
        let el = m3.el.as_ref().unwrap();
        assert!(m3.effect_at_fit.abs() < 1e-8);
        assert!((el.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(el.weights.iter().all(|&p| p > 0.0));
        assert!(m3.loglik <= m0.loglik + 1e-8);
    }

    #[test]
    fn null_effect_data_leave_weights_near_uniform() {
        // outcome without any A terms: the direct effect is zero
        let mut truth = Graph::OneMediator.true_params();
        for (c, t) in truth.y.coef.iter_mut().zip(truth.y.design.clone().terms()) {
            if t.has_a() {
                *c = 0.0;
            }
        }
        let full = crate::dataset::simulate_from(&truth, 5000, 6);
        let ds = crate::dataset::mask_outcomes_mar(&full, 0.2, 6).unwrap();
        let m4 = fit(&ds, &TrainConfig::new(Method::M4, Graph::OneMediator)).unwrap();
        assert!(m4.diagnostics.iterations <= 3);
        let n = ds.n() as f64;
        assert!(m4.el.unwrap().weights.iter().all(|p| (p - 1.0 / n).abs() < 5.0 / n));
        let m3 = fit(&ds, &TrainConfig::new(Method::M3, Graph::OneMediator)).unwrap();
        assert!(m3.el.unwrap().weights.iter().all(|p| (p - 1.0 / n).abs() < 5.0 / n));
    }

    #[test]
    fn predictions_cover_masked_rows_and_mixed_weights_normalize() {
        let ds = data(500, 7);
        let r = fit(&ds, &TrainConfig::new(Method::M0, Graph::OneMediator)).unwrap();
        assert_eq!(r.predictions.len(), ds.n() - ds.observed_count());
        for &(i, yhat) in &r.predictions {
            assert!(ds.y()[i].is_none());
            assert!((yhat - r.params.y.mean(&ds.covariates(i))).abs() < 1e-12);
        }
        let mut mixed = r.clone();
        mixed.method = Method::M1;
        mixed.estimator = Estimator::Mixed;
        // with an outcome that ignores A the posterior average is the mean itself
        for (c, t) in mixed.params.y.coef.iter_mut().zip(mixed.params.y.design.clone().terms()) {
            if t.has_a() {
                *c = 0.0;
            }
        }
        let c = ds.covariates(0);
        assert!((predict_row(&mixed, &c) - mixed.params.y.mean(&c)).abs() < 1e-12);
    }

    #[test]
    fn fits_are_deterministic() {
        let ds = data(600, 8);
        for m in Method::ALL {
            let cfg = TrainConfig::new(m, Graph::OneMediator);
            let a = fit(&ds, &cfg).unwrap();
            let b = fit(&ds, &cfg).unwrap();
            assert_eq!(a, b, "{m}");
        }
    }
}
