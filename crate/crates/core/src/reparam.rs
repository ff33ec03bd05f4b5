//! Outcome regression rewritten so that the path-specific effect is a single
//! coefficient.
//!
//! Split the outcome design into the intercept, the `A` main effect and the
//! remaining terms `t_j`. The reparameterized mean is
//!
//! ```text
//! E[Y | A, M, L, X] = wa * A + sum_j alpha_j (t_j - c_j(A)) + w0
//! ```
//!
//! where `c_j(a)` averages `t_j` over the covariate distribution and the
//! mediator laws with every edge out of `A` set as the path bundle dictates.
//! Under this mean the edge g-formula effect equals `wa` for any `alpha`,
//! any mediator models and any covariate weights used in `c_j`.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::design::{Covariates, DesignSpec, Term};
use crate::effects::{Estimator, Paths, PseFunctional};
use crate::error::{Error, Result};
use crate::glm::{least_squares, GlmParams, LinearModel};

/// `c_j(0)` and `c_j(1)` for each non-intercept, non-`A` term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTable {
    pub c0: Vec<f64>,
    pub c1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReparamOutcomeModel {
    pub design: DesignSpec,
    pub paths: Paths,
    pub wa: f64,
    pub w0: f64,
    /// Coefficients of the `f` terms, in design order.
    pub alpha: Vec<f64>,
    pub sigma: f64,
    pub correction: CorrectionTable,
    one: usize,
    a: usize,
    f: Vec<usize>,
}

/// Positions of the intercept, the `A` term and the remaining terms.
fn split_design(design: &DesignSpec) -> Result<(usize, usize, Vec<usize>)> {
    let terms = design.terms();
    let one = terms
        .iter()
        .position(|t| t.is_intercept())
        .ok_or_else(|| Error::InvalidSpec("outcome design needs an intercept".into()))?;
    let a = terms
        .iter()
        .position(|&t| t == Term::A)
        .ok_or_else(|| Error::InvalidSpec("outcome design needs an A main effect".into()))?;
    let f = (0..terms.len()).filter(|&j| j != one && j != a).collect();
    Ok((one, a, f))
}

/// `sum_{m,l} row(x, a_y, m, l) p(l | a_l, m, x) p(m | a_m, x)`.
pub fn expected_row(
    design: &DesignSpec,
    nuisance: &GlmParams,
    x: f64,
    a_y: f64,
    a_m: f64,
    a_l: f64,
    out: &mut [f64],
) {
    out.fill(0.0);
    let mut row = vec![0.0; design.len()];
    let q = nuisance.m.prob(&Covariates::new(x, a_m, 0.0, 0.0));
    for (mv, pm) in [(0.0, 1.0 - q), (1.0, q)] {
        match &nuisance.l {
            None => {
                design.row_into(&Covariates::new(x, a_y, mv, 0.0), &mut row);
                for (o, r) in out.iter_mut().zip(&row) {
                    *o += pm * r;
                }
            }
            Some(lm) => {
                let r1 = lm.prob(&Covariates::new(x, a_l, mv, 0.0));
                for (lv, pl) in [(0.0, 1.0 - r1), (1.0, r1)] {
                    design.row_into(&Covariates::new(x, a_y, mv, lv), &mut row);
                    for (o, r) in out.iter_mut().zip(&row) {
                        *o += pm * pl * r;
                    }
                }
            }
        }
    }
}

/// Correction table for covariate support `xs` with weights `p`.
pub fn correction_table(
    design: &DesignSpec,
    paths: Paths,
    nuisance: &GlmParams,
    xs: &[f64],
    p: &[f64],
) -> Result<CorrectionTable> {
    if xs.len() != p.len() {
        return Err(Error::Dimension("covariate weights differ in length from the sample".into()));
    }
    let (_, _, f) = split_design(design)?;
    let mut c = [vec![0.0; f.len()], vec![0.0; f.len()]];
    let mut buf = vec![0.0; design.len()];
    for (arm, ca) in c.iter_mut().enumerate() {
        let a = arm as f64;
        for (&x, &w) in xs.iter().zip(p) {
            expected_row(design, nuisance, x, a, paths.mediator_arm(a), paths.second_arm(a), &mut buf);
            for (cj, &j) in ca.iter_mut().zip(&f) {
                *cj += w * buf[j];
            }
        }
    }
    let [c0, c1] = c;
    Ok(CorrectionTable { c0, c1 })
}

impl ReparamOutcomeModel {
    /// Re-expresses an ordinary outcome regression. The resulting `wa` is the
    /// edge g-formula effect of `lin` under `nuisance` and weights `p`.
    pub fn from_linear(lin: &LinearModel, paths: Paths, nuisance: &GlmParams, xs: &[f64], p: &[f64]) -> Result<Self> {
        let (one, a, f) = split_design(&lin.design)?;
        let correction = correction_table(&lin.design, paths, nuisance, xs, p)?;
        let alpha: Vec<f64> = f.iter().map(|&j| lin.coef[j]).collect();
        let dot = |c: &[f64]| alpha.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
        let w0 = lin.coef[one] + dot(&correction.c0);
        let wa = lin.coef[a] + dot(&correction.c1) - dot(&correction.c0);
        Ok(Self { design: lin.design.clone(), paths, wa, w0, alpha, sigma: lin.sigma, correction, one, a, f })
    }

    /// Maximum likelihood for `(alpha, w0, sigma)` on rows with an observed
    /// outcome, with `wa` fixed when given and estimated otherwise.
    pub fn fit(
        ds: &Dataset,
        design: &DesignSpec,
        paths: Paths,
        nuisance: &GlmParams,
        p: &[f64],
        wa: Option<f64>,
    ) -> Result<Self> {
        let (one, a, f) = split_design(design)?;
        if p.len() != ds.n() {
            return Err(Error::Dimension("covariate weights differ in length from the sample".into()));
        }
        let correction = correction_table(design, paths, nuisance, ds.x(), p)?;
        let k = f.len() + 1 + usize::from(wa.is_none());
        let mut xmat = Vec::new();
        let mut resp = Vec::new();
        let mut row = vec![0.0; design.len()];
        for i in 0..ds.n() {
            let Some(y) = ds.y()[i] else { continue };
            let c = ds.covariates(i);
            design.row_into(&c, &mut row);
            let corr = if c.a > 0.5 { &correction.c1 } else { &correction.c0 };
            xmat.extend(f.iter().zip(corr).map(|(&j, cj)| row[j] - cj));
            xmat.push(1.0);
            match wa {
                Some(w) => resp.push(y - w * c.a),
                None => {
                    xmat.push(c.a);
                    resp.push(y);
                }
            }
        }
        if resp.is_empty() {
            return Err(Error::NoRows);
        }
        let coef = least_squares(&xmat, k, &resp).map_err(|_| Error::RankDeficient("reparameterized outcome".into()))?;
        let rss: f64 = xmat
            .chunks_exact(k)
            .zip(&resp)
            .map(|(xi, y)| (y - xi.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>()).powi(2))
            .sum();
        let sigma = (rss / resp.len() as f64).sqrt();
        let alpha = coef[..f.len()].to_vec();
        let w0 = coef[f.len()];
        let wa = match wa {
            Some(w) => w,
            None => coef[f.len() + 1],
        };
        Ok(Self { design: design.clone(), paths, wa, w0, alpha, sigma, correction, one, a, f })
    }

    /// The effect encoded by the parameterization.
    pub fn pse_of(&self) -> f64 {
        self.wa
    }

    pub fn mean(&self, c: &Covariates) -> f64 {
        let corr = if c.a > 0.5 { &self.correction.c1 } else { &self.correction.c0 };
        let terms = self.design.terms();
        let fpart: f64 = self
            .f
            .iter()
            .zip(&self.alpha)
            .zip(corr)
            .map(|((&j, al), cj)| al * (terms[j].eval(c) - cj))
            .sum();
        self.wa * c.a + fpart + self.w0
    }

    /// The same mean as an ordinary regression on the outcome design.
    pub fn to_linear(&self) -> LinearModel {
        let mut coef = vec![0.0; self.design.len()];
        let dot = |c: &[f64]| self.alpha.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
        coef[self.one] = self.w0 - dot(&self.correction.c0);
        coef[self.a] = self.wa - dot(&self.correction.c1) + dot(&self.correction.c0);
        for (&j, &al) in self.f.iter().zip(&self.alpha) {
            coef[j] = al;
        }
        LinearModel::new(self.design.clone(), coef, self.sigma)
    }

    /// Recomputes the correction for new covariate weights, keeping
    /// `(wa, w0, alpha)`.
    pub fn reweighted(&self, nuisance: &GlmParams, xs: &[f64], p: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.correction = correction_table(&self.design, self.paths, nuisance, xs, p)?;
        Ok(out)
    }

    /// Nuisance models with the outcome regression replaced by this one.
    pub fn params_with(&self, nuisance: &GlmParams) -> GlmParams {
        let mut p = nuisance.clone();
        p.y = self.to_linear();
        p
    }

    /// Per-covariate g-formula integrand `m(x_i)` under this outcome model.
    pub fn per_unit_m(&self, nuisance: &GlmParams, ds: &Dataset) -> Result<Vec<f64>> {
        let params = self.params_with(nuisance);
        let f = PseFunctional::new(ds.graph(), self.paths, Estimator::GFormula)?;
        ds.x().iter().map(|&x| crate::effects::m_of_x(&params, x, &f)).collect()
    }
}
