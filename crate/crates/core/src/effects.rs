//! Path-specific effect functionals and their estimators.
//!
//! Every estimator is an average of per-unit contributions, so the same code
//! path produces the estimate, the per-unit values used by the empirical
//! likelihood, and (optionally) the gradient with respect to the flat
//! parameter vector of [`GlmParams`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Graph};
use crate::design::Covariates;
use crate::error::{Error, Result};
use crate::glm::{GlmParams, Layout};

/// Probabilities below this trigger a positivity error.
pub const POSITIVITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    GFormula,
    Ipw,
    Mixed,
    Aipw,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::GFormula, Estimator::Ipw, Estimator::Mixed, Estimator::Aipw];
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::GFormula => "g-formula",
            Estimator::Ipw => "ipw",
            Estimator::Mixed => "mixed",
            Estimator::Aipw => "aipw",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "g-formula" | "gformula" | "g" => Ok(Estimator::GFormula),
            "ipw" => Ok(Estimator::Ipw),
            "mixed" => Ok(Estimator::Mixed),
            "aipw" => Ok(Estimator::Aipw),
            _ => Err(Error::InvalidSpec(format!("unknown estimator {s:?}"))),
        }
    }
}

/// The bundle of unfair paths. Edges out of `A` that lie on a selected path
/// see the active value `a = 1`, the remaining edges see `a' = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paths {
    /// `A -> Y`. Must be set: the reparameterization only covers effects
    /// that include the direct edge.
    pub direct: bool,
    /// `A -> M` (paths through the first mediator).
    pub through_m: bool,
    /// `A -> L` (paths entering the second mediator directly from `A`).
    pub through_l: bool,
}

impl Paths {
    /// Natural direct effect: only `A -> Y`.
    pub fn nde() -> Self {
        Self { direct: true, through_m: false, through_l: false }
    }

    /// All proper paths: the total effect.
    pub fn total() -> Self {
        Self { direct: true, through_m: true, through_l: true }
    }

    /// NDE for one mediator; `{A -> Y, A -> M -> ... -> Y}` for two.
    pub fn default_for(graph: Graph) -> Self {
        match graph {
            Graph::OneMediator => Self::nde(),
            Graph::TwoMediator => Self { direct: true, through_m: true, through_l: false },
        }
    }

    #[inline]
    pub fn mediator_arm(self, a: f64) -> f64 {
        if self.through_m {
            a
        } else {
            0.0
        }
    }

    #[inline]
    pub fn second_arm(self, a: f64) -> f64 {
        if self.through_l {
            a
        } else {
            0.0
        }
    }
}

/// An effect functional together with the estimator used for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseFunctional {
    pub graph: Graph,
    pub paths: Paths,
    pub estimator: Estimator,
    /// Weights of the empirical covariate distribution; uniform when absent.
    pub x_weights: Option<Vec<f64>>,
}

impl PseFunctional {
    pub fn new(graph: Graph, paths: Paths, estimator: Estimator) -> Result<Self> {
        let f = Self { graph, paths, estimator, x_weights: None };
        f.validate()?;
        Ok(f)
    }

    pub fn default_for(graph: Graph, estimator: Estimator) -> Result<Self> {
        Self::new(graph, Paths::default_for(graph), estimator)
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Self {
        self.x_weights = Some(w);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.paths.direct {
            return Err(Error::Unsupported("the path bundle must include the direct edge A -> Y".into()));
        }
        if self.graph == Graph::OneMediator && self.paths.through_l {
            return Err(Error::Unsupported("no second mediator in the one-mediator graph".into()));
        }
        if self.estimator != Estimator::GFormula && (self.graph != Graph::OneMediator || self.paths != Paths::nde()) {
            return Err(Error::Unsupported(format!(
                "the {} estimator is only defined for the natural direct effect",
                self.estimator
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub value: f64,
    pub per_unit_m: Vec<f64>,
    pub estimator: Estimator,
}

/// Accumulates scaled design rows into a gradient laid out as
/// [`GlmParams::layout`].
pub(crate) struct GradSink<'a> {
    pub g: &'a mut [f64],
    lay: Layout,
    buf: [f64; 16],
}

impl<'a> GradSink<'a> {
    pub fn new(params: &GlmParams, g: &'a mut [f64]) -> Self {
        Self { g, lay: params.layout(), buf: [0.0; 16] }
    }

    #[inline]
    fn add(&mut self, which: Block, params: &GlmParams, c: &Covariates, w: f64) {
        if w == 0.0 {
            return;
        }
        let (design, range) = match which {
            Block::A => (&params.a.design, self.lay.a.clone()),
            Block::M => (&params.m.design, self.lay.m.clone()),
            Block::L => match (&params.l, &self.lay.l) {
                (Some(l), Some(r)) => (&l.design, r.clone()),
                _ => return,
            },
            Block::Y => (&params.y.design, self.lay.y.clone()),
        };
        let d = &mut self.buf[..design.len()];
        design.row_into(c, d);
        for (gj, dj) in self.g[range].iter_mut().zip(d.iter()) {
            *gj += w * dj;
        }
    }
}

#[derive(Clone, Copy)]
enum Block {
    A,
    M,
    L,
    Y,
}

#[inline]
fn cov(x: f64, a: f64, m: f64, l: f64) -> Covariates {
    Covariates { x, a, m, l }
}

/// Edge g-formula mean `sum_{m,l} E[Y|a_y,m,l,x] p(l|a_l,m,x) p(m|a_m,x)` at
/// one covariate value; `l` is dropped for the one-mediator graph. With a
/// sink, adds `scale * gradient`.
pub(crate) fn edge_mean(
    params: &GlmParams,
    x: f64,
    a_y: f64,
    a_m: f64,
    a_l: f64,
    mut sink: Option<(&mut GradSink, f64)>,
) -> f64 {
    let cm = cov(x, a_m, 0.0, 0.0);
    let q = params.m.prob(&cm);
    let mut inner = [0.0; 2];
    for m in 0..2 {
        let mv = m as f64;
        let pm = if m == 1 { q } else { 1.0 - q };
        match &params.l {
            None => {
                let c = cov(x, a_y, mv, 0.0);
                inner[m] = params.y.mean(&c);
                if let Some((s, scale)) = sink.as_mut() {
                    s.add(Block::Y, params, &c, *scale * pm);
                }
            }
            Some(lmodel) => {
                let cl = cov(x, a_l, mv, 0.0);
                let r = lmodel.prob(&cl);
                let mu0 = params.y.mean(&cov(x, a_y, mv, 0.0));
                let mu1 = params.y.mean(&cov(x, a_y, mv, 1.0));
                inner[m] = mu0 * (1.0 - r) + mu1 * r;
                if let Some((s, scale)) = sink.as_mut() {
                    s.add(Block::Y, params, &cov(x, a_y, mv, 0.0), *scale * pm * (1.0 - r));
                    s.add(Block::Y, params, &cov(x, a_y, mv, 1.0), *scale * pm * r);
                    s.add(Block::L, params, &cl, *scale * pm * (mu1 - mu0) * r * (1.0 - r));
                }
            }
        }
    }
    if let Some((s, scale)) = sink.as_mut() {
        s.add(Block::M, params, &cm, *scale * (inner[1] - inner[0]) * q * (1.0 - q));
    }
    inner[0] * (1.0 - q) + inner[1] * q
}

/// `eta(a, a', x) = sum_m E[Y|a,m,x] p(m|a',x)`.
pub fn eta(params: &GlmParams, a: f64, a_prime: f64, x: f64) -> f64 {
    edge_mean(params, x, a, a_prime, 0.0, None)
}

/// Per-covariate g-formula integrand `m(x)`: the edge g-formula mean with
/// the path bundle switched on minus the same with everything at `a' = 0`.
pub fn m_of_x(params: &GlmParams, x: f64, spec: &PseFunctional) -> Result<f64> {
    if spec.estimator != Estimator::GFormula {
        return Err(Error::Unsupported("m(x) is defined for the g-formula only".into()));
    }
    spec.validate()?;
    Ok(gformula_unit(params, x, spec.paths, None))
}

fn gformula_unit(params: &GlmParams, x: f64, paths: Paths, mut sink: Option<(&mut GradSink, f64)>) -> f64 {
    let on = edge_mean(
        params,
        x,
        1.0,
        paths.mediator_arm(1.0),
        paths.second_arm(1.0),
        sink.as_mut().map(|(s, w)| (&mut **s, *w)),
    );
    let off = edge_mean(params, x, 0.0, 0.0, 0.0, sink.map(|(s, w)| (s, -w)));
    on - off
}

fn positivity(p: f64, context: &'static str) -> Result<()> {
    if p < POSITIVITY_FLOOR || !p.is_finite() {
        return Err(Error::Positivity { value: p, context });
    }
    Ok(())
}

struct UnitContext {
    /// Inverse fraction of rows with an observed outcome.
    inv_rbar: f64,
}

fn unit_context(ds: &Dataset, estimator: Estimator) -> Result<UnitContext> {
    let obs = ds.observed_count();
    if obs == 0 && matches!(estimator, Estimator::Ipw | Estimator::Aipw) {
        return Err(Error::InvalidSpec("no observed outcomes".into()));
    }
    Ok(UnitContext { inv_rbar: ds.n() as f64 / obs.max(1) as f64 })
}

/// Per-unit contribution of row `i`. Outcome-bearing terms are restricted
/// to rows with an observed outcome and rescaled by `n / n_observed`.
fn unit(
    ds: &Dataset,
    params: &GlmParams,
    f: &PseFunctional,
    ctx: &UnitContext,
    i: usize,
    mut sink: Option<(&mut GradSink, f64)>,
) -> Result<f64> {
    let c = ds.covariates(i);
    let x = c.x;
    match f.estimator {
        Estimator::GFormula => Ok(gformula_unit(params, x, f.paths, sink)),
        Estimator::Ipw => {
            let pi = params.a.prob(&c);
            positivity(pi, "p(A=1|X)")?;
            positivity(1.0 - pi, "p(A=0|X)")?;
            let Some(y) = ds.y()[i] else {
                return Ok(0.0);
            };
            let s = ctx.inv_rbar;
            if c.a > 0.5 {
                let c0 = cov(x, 0.0, 0.0, 0.0);
                let c1 = cov(x, 1.0, 0.0, 0.0);
                let (q0, q1) = (params.m.prob(&c0), params.m.prob(&c1));
                let pm0 = if c.m > 0.5 { q0 } else { 1.0 - q0 };
                let pm1 = if c.m > 0.5 { q1 } else { 1.0 - q1 };
                positivity(pm1, "p(M|A=1,X)")?;
                let t = s * (pm0 / pm1) * y / pi;
                if let Some((sk, w)) = sink.as_mut() {
                    sk.add(Block::A, params, &c, -*w * t * (1.0 - pi));
                    sk.add(Block::M, params, &c0, *w * t * (c.m - q0));
                    sk.add(Block::M, params, &c1, -*w * t * (c.m - q1));
                }
                Ok(t)
            } else {
                let t = -s * y / (1.0 - pi);
                if let Some((sk, w)) = sink.as_mut() {
                    sk.add(Block::A, params, &c, *w * t * pi);
                }
                Ok(t)
            }
        }
        Estimator::Mixed => {
            let pi = params.a.prob(&c);
            positivity(1.0 - pi, "p(A=0|X)")?;
            positivity(pi, "p(A=1|X)")?;
            if c.a > 0.5 {
                return Ok(0.0);
            }
            let w0 = 1.0 / (1.0 - pi);
            let c1 = cov(x, 1.0, c.m, 0.0);
            let c0 = cov(x, 0.0, c.m, 0.0);
            let t = w0 * (params.y.mean(&c1) - params.y.mean(&c0));
            if let Some((sk, w)) = sink.as_mut() {
                sk.add(Block::Y, params, &c1, *w * w0);
                sk.add(Block::Y, params, &c0, -*w * w0);
                sk.add(Block::A, params, &c, *w * t * pi);
            }
            Ok(t)
        }
        Estimator::Aipw => {
            let pi = params.a.prob(&c);
            positivity(pi, "p(A=1|X)")?;
            positivity(1.0 - pi, "p(A=0|X)")?;
            let s = if ds.y()[i].is_some() { ctx.inv_rbar } else { 0.0 };
            let y = ds.y()[i].unwrap_or(0.0);
            let c1m = cov(x, 1.0, c.m, 0.0);
            let mu1m = params.y.mean(&c1m);
            let eta10 = edge_mean(params, x, 1.0, 0.0, 0.0, None);
            let eta00 = edge_mean(params, x, 0.0, 0.0, 0.0, None);

            let (mut w1, mut w0) = (0.0, 0.0);
            let (c0, c1) = (cov(x, 0.0, 0.0, 0.0), cov(x, 1.0, 0.0, 0.0));
            let (q0, q1) = (params.m.prob(&c0), params.m.prob(&c1));
            if c.a > 0.5 {
                let pm0 = if c.m > 0.5 { q0 } else { 1.0 - q0 };
                let pm1 = if c.m > 0.5 { q1 } else { 1.0 - q1 };
                positivity(pm1, "p(M|A=1,X)")?;
                w1 = pm0 / pm1 / pi;
            } else {
                w0 = 1.0 / (1.0 - pi);
            }
            let value = s * w1 * (y - mu1m) + w0 * (mu1m - eta10) + eta10 - s * w0 * (y - eta00) - eta00;

            if let Some((sk, w)) = sink.as_mut() {
                let w = *w;
                if c.a > 0.5 {
                    let k1 = w * s * (y - mu1m);
                    sk.add(Block::A, params, &c, -k1 * w1 * (1.0 - pi));
                    sk.add(Block::M, params, &c0, k1 * w1 * (c.m - q0));
                    sk.add(Block::M, params, &c1, -k1 * w1 * (c.m - q1));
                } else {
                    let k0 = w * ((mu1m - eta10) - s * (y - eta00));
                    sk.add(Block::A, params, &c, k0 * w0 * pi);
                }
                sk.add(Block::Y, params, &c1m, w * (w0 - s * w1));
                edge_mean(params, x, 1.0, 0.0, 0.0, Some((&mut **sk, w * (1.0 - w0))));
                edge_mean(params, x, 0.0, 0.0, 0.0, Some((&mut **sk, w * (s * w0 - 1.0))));
            }
            Ok(value)
        }
    }
}

fn weights_for(ds: &Dataset, f: &PseFunctional) -> Result<Vec<f64>> {
    match &f.x_weights {
        Some(w) if w.len() != ds.n() => Err(Error::Dimension("x_weights length differs from n".into())),
        Some(w) => Ok(w.clone()),
        None => Ok(vec![1.0 / ds.n() as f64; ds.n()]),
    }
}

/// Estimate of the functional with the configured estimator.
pub fn estimate(ds: &Dataset, params: &GlmParams, f: &PseFunctional) -> Result<EffectEstimate> {
    f.validate()?;
    params.check_compatible(ds)?;
    let ctx = unit_context(ds, f.estimator)?;
    let per_unit = (0..ds.n())
        .map(|i| unit(ds, params, f, &ctx, i, None))
        .collect::<Result<Vec<_>>>()?;
    let w = weights_for(ds, f)?;
    let value = w.iter().zip(&per_unit).map(|(a, b)| a * b).sum();
    Ok(EffectEstimate { value, per_unit_m: per_unit, estimator: f.estimator })
}

/// Per-unit contributions together with `sum_i grad_weights[i] * d unit_i / d theta`.
pub fn per_unit_with_grad(
    ds: &Dataset,
    params: &GlmParams,
    f: &PseFunctional,
    grad_weights: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let ctx = unit_context(ds, f.estimator)?;
    let mut grad = vec![0.0; params.layout().dim];
    let mut sink = GradSink::new(params, &mut grad);
    let mut out = Vec::with_capacity(ds.n());
    for (i, &w) in grad_weights.iter().enumerate().take(ds.n()) {
        out.push(unit(ds, params, f, &ctx, i, Some((&mut sink, w)))?);
    }
    Ok((out, grad))
}

/// Plug-in estimator of the natural direct effect (outcome and mediator
/// models).
pub fn nde_gformula(ds: &Dataset, params: &GlmParams) -> Result<EffectEstimate> {
    estimate(ds, params, &PseFunctional::new(Graph::OneMediator, Paths::nde(), Estimator::GFormula)?)
}

/// Weighted estimator of the natural direct effect (treatment and mediator
/// models).
pub fn nde_ipw(ds: &Dataset, params: &GlmParams) -> Result<EffectEstimate> {
    estimate(ds, params, &PseFunctional::new(Graph::OneMediator, Paths::nde(), Estimator::Ipw)?)
}

/// Treatment-weighted outcome-model estimator of the natural direct effect.
pub fn nde_mixed(ds: &Dataset, params: &GlmParams) -> Result<EffectEstimate> {
    estimate(ds, params, &PseFunctional::new(Graph::OneMediator, Paths::nde(), Estimator::Mixed)?)
}

/// Augmented weighted estimator using all three models.
pub fn nde_aipw(ds: &Dataset, params: &GlmParams) -> Result<EffectEstimate> {
    estimate(ds, params, &PseFunctional::new(Graph::OneMediator, Paths::nde(), Estimator::Aipw)?)
}

/// Edge g-formula effect along `{A -> Y, A -> M -> ... -> Y}` in the
/// two-mediator graph.
pub fn pse_edge_gformula(ds: &Dataset, params: &GlmParams) -> Result<EffectEstimate> {
    estimate(ds, params, &PseFunctional::default_for(Graph::TwoMediator, Estimator::GFormula)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{mask_outcomes_mar, simulate_from};
    use crate::design::DesignSpec;
    use crate::glm::{LinearModel, LogisticModel};
    use rand::{Rng, SeedableRng};

    fn zero_logistic(d: DesignSpec) -> LogisticModel {
        let k = d.len();
        LogisticModel::new(d, vec![0.0; k])
    }

    fn toy_params(y_coef: Vec<f64>) -> GlmParams {
        GlmParams {
            a: zero_logistic(DesignSpec::treatment_default()),
            m: zero_logistic(DesignSpec::mediator_default()),
            l: None,
            y: LinearModel::new(DesignSpec::outcome_one_mediator(), y_coef, 1.0),
        }
    }

    #[test]
    fn a_free_outcome_gives_zero() {
        // outcome coefficients on 1, X, M, XM only
        let p = toy_params(vec![1.0, 2.0, 0.0, 0.0, 3.0, -1.0, 0.0, 0.0]);
        let f = PseFunctional::default_for(Graph::OneMediator, Estimator::GFormula).unwrap();
        for x in [-2.0, 0.0, 1.5] {
            assert_eq!(m_of_x(&p, x, &f).unwrap(), 0.0);
        }
        let ds = simulate_from(&Graph::OneMediator.true_params(), 50, 1);
        assert_eq!(nde_gformula(&ds, &p).unwrap().value, 0.0);
    }

    #[test]
    fn enumerable_nde_equals_one() {
        // Y = A + M with all logistic coefficients zero: NDE = 1 for every x
        let p = toy_params(vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let f = PseFunctional::default_for(Graph::OneMediator, Estimator::GFormula).unwrap();
        for x in [-1.0, 0.3, 2.0] {
            assert!((m_of_x(&p, x, &f).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gformula_matches_two_point_enumeration() {
        let mut p = Graph::OneMediator.true_params();
        p.m.coef = vec![0.2, -0.7, 0.4, 0.9];
        let xs = [-0.8, 1.3];
        let ds = Dataset::from_columns(xs.to_vec(), vec![0, 1], vec![1, 0], None, vec![Some(0.0), Some(1.0)]).unwrap();
        let est = nde_gformula(&ds, &p).unwrap();
        // enumeration with the data-generating formula
        let ey = |a: f64, m: f64, x: f64| 1.0 + x + 2.0 * a - 2.0 * a * x + m + 3.0 * x * m + a * m + x * a * m;
        let mut oracle = 0.0;
        for &x in &xs {
            let q0 = 1.0 / (1.0 + (-(0.2 - 0.7 * x)).exp());
            for (m, pm) in [(0.0, 1.0 - q0), (1.0, q0)] {
                oracle += 0.5 * (ey(1.0, m, x) - ey(0.0, m, x)) * pm;
            }
        }
        assert!((est.value - oracle).abs() < 1e-12);
        let weighted: f64 = est.per_unit_m.iter().map(|v| v / 2.0).sum();
        assert!((weighted - est.value).abs() < 1e-15);
    }

    #[test]
    fn eta_with_m_free_outcome_is_conditional_mean() {
        let p = toy_params(vec![0.5, 1.0, 2.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        for x in [-1.0, 0.7] {
            for a in [0.0, 1.0] {
                let direct = p.y.mean(&Covariates::new(x, a, 0.0, 0.0));
                assert!((eta(&p, a, 0.0, x) - direct).abs() < 1e-14);
                assert!((eta(&p, a, 1.0, x) - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn weighted_estimators_reduce_to_arm_difference_without_confounding() {
        // A independent of X and M independent of A: weights are constant
        let mut p = toy_params(vec![0.0; 8]);
        p.a.coef = vec![0.3, 0.0];
        p.m.coef = vec![-0.2, 0.0, 0.0, 0.0];
        let truth = {
            let mut t = p.clone();
            t.y.coef = vec![1.0, 1.0, 2.0, 0.0, 1.0, 0.0, 0.0, 0.0];
            t
        };
        let ds = simulate_from(&truth, 2000, 3);
        let (mut s1, mut n1, mut s0, mut n0) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..ds.n() {
            let y = ds.y()[i].unwrap();
            if ds.a()[i] == 1 {
                s1 += y;
                n1 += 1.0;
            } else {
                s0 += y;
                n0 += 1.0;
            }
        }
        let pi = 1.0 / (1.0 + (-0.3f64).exp());
        let n = ds.n() as f64;
        let expected = s1 / (n * pi) - s0 / (n * (1.0 - pi));
        let ipw = nde_ipw(&ds, &p).unwrap().value;
        assert!((ipw - expected).abs() < 1e-10);
        // with the empirical arm shares the weighted form is the plain mean difference
        let mut pe = p.clone();
        pe.a.coef = vec![(n1 / n0).ln(), 0.0];
        let ipw_e = nde_ipw(&ds, &pe).unwrap().value;
        assert!((ipw_e - (s1 / n1 - s0 / n0)).abs() < 1e-10);
    }

    #[test]
    fn positivity_violation_is_an_error() {
        let mut p = Graph::OneMediator.true_params();
        p.a.coef = vec![-30.0, 0.0];
        let ds = simulate_from(&Graph::OneMediator.true_params(), 20, 1);
        assert!(matches!(nde_ipw(&ds, &p), Err(Error::Positivity { .. })));
        assert!(matches!(nde_mixed(&ds, &p), Err(Error::Positivity { .. })));
        assert!(matches!(nde_aipw(&ds, &p), Err(Error::Positivity { .. })));
    }

    #[test]
    fn unsupported_functionals_rejected() {
        assert!(PseFunctional::new(Graph::TwoMediator, Paths::default_for(Graph::TwoMediator), Estimator::Ipw).is_err());
        let no_direct = Paths { direct: false, through_m: true, through_l: false };
        assert!(PseFunctional::new(Graph::OneMediator, no_direct, Estimator::GFormula).is_err());
        assert!(PseFunctional::new(Graph::OneMediator, Paths::total(), Estimator::GFormula).is_err());
    }

    #[test]
    fn all_paths_equal_total_effect_contrast() {
        // tiny discrete instance: two X values, enumerate by brute force
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut p = Graph::TwoMediator.true_params();
        for c in p.m.coef.iter_mut().chain(p.l.as_mut().unwrap().coef.iter_mut()).chain(p.y.coef.iter_mut()) {
            *c = rng.random_range(-1.0..1.0);
        }
        let xs = [-0.4, 0.9];
        let ds = Dataset::from_columns(xs.to_vec(), vec![0, 1], vec![0, 1], Some(vec![1, 0]), vec![Some(0.0), Some(0.0)]).unwrap();
        let f = PseFunctional::new(Graph::TwoMediator, Paths { direct: true, through_m: true, through_l: true }, Estimator::GFormula).unwrap();
        let est = estimate(&ds, &p, &f).unwrap();
        let lm = p.l.clone().unwrap();
        let mut total = 0.0;
        for &x in &xs {
            for (a, sign) in [(1.0, 1.0), (0.0, -1.0)] {
                for m in [0.0, 1.0] {
                    for l in [0.0, 1.0] {
                        let pm = p.m.prob_of(&Covariates::new(x, a, 0.0, 0.0), m);
                        let pl = lm.prob_of(&Covariates::new(x, a, m, 0.0), l);
                        total += sign * 0.5 * p.y.mean(&Covariates::new(x, a, m, l)) * pm * pl;
                    }
                }
            }
        }
        assert!((est.value - total).abs() < 1e-12);
    }

    fn check_gradient(ds: &Dataset, p: &GlmParams, f: &PseFunctional) {
        let n = ds.n();
        let w = vec![1.0 / n as f64; n];
        let (_, grad) = per_unit_with_grad(ds, p, f, &w).unwrap();
        let theta = p.to_vec();
        for k in 0..theta.len() {
            let h = 1e-5;
            let mut tp = theta.clone();
            tp[k] += h;
            let mut tm = theta.clone();
            tm[k] -= h;
            let fp = estimate(ds, &p.with_vec(&tp), f).unwrap().value;
            let fm = estimate(ds, &p.with_vec(&tm), f).unwrap().value;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(1e-3);
            assert!(rel < 1e-4, "{:?} component {k}: analytic {} fd {fd}", f.estimator, grad[k]);
        }
    }

    #[test]
    fn estimator_gradients_match_finite_differences() {
        let truth = Graph::OneMediator.true_params();
        let ds = mask_outcomes_mar(&simulate_from(&truth, 300, 5), 0.2, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut theta = truth.to_vec();
        for t in theta.iter_mut() {
            *t += rng.random_range(-0.2..0.2);
        }
        let p = truth.with_vec(&theta);
        for est in Estimator::ALL {
            check_gradient(&ds, &p, &PseFunctional::default_for(Graph::OneMediator, est).unwrap());
        }

        let truth2 = Graph::TwoMediator.true_params();
        let ds2 = mask_outcomes_mar(&simulate_from(&truth2, 300, 6), 0.2, 6).unwrap();
        let mut theta2 = truth2.to_vec();
        for t in theta2.iter_mut() {
            *t += rng.random_range(-0.2..0.2);
        }
        let p2 = truth2.with_vec(&theta2);
        check_gradient(&ds2, &p2, &PseFunctional::default_for(Graph::TwoMediator, Estimator::GFormula).unwrap());
        check_gradient(&ds2, &p2, &PseFunctional::new(Graph::TwoMediator, Paths::total(), Estimator::GFormula).unwrap());
    }
}
