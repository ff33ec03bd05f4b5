//! Metrics against the known data-generating process and the seeded
//! replication runner.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{simulate_from, simulate_masked, Dataset, DgpSpec, Graph, HeldOut};
use crate::effects::Estimator;
use crate::error::{Error, Result};
use crate::glm::GlmParams;
use crate::rng::derive_seed;
use crate::train::{fit, FitResult, Method, TrainConfig};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlScope {
    /// `p(Y, M, [L,] A | X)`.
    ConditionalGivenX,
    /// The full joint including the covariate distribution.
    FullJoint,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub effect: f64,
    pub loglik: f64,
    pub kl: f64,
    pub mse: f64,
}

/// Log density of the observed row under the factor models, without the
/// covariate term.
fn conditional_log_density(p: &GlmParams, ds: &Dataset, i: usize) -> f64 {
    let c = ds.covariates(i);
    let mut v = p.a.log_prob_of(&c, c.a) + p.m.log_prob_of(&c, c.m);
    if let Some(l) = &p.l {
        v += l.log_prob_of(&c, c.l);
    }
    if let Some(y) = ds.y()[i] {
        v += p.y.log_density(&c, y);
    }
    v
}

/// Weighted Gaussian kernel density estimate on the real line, tabulated
/// on a fine grid from linearly binned weights.
#[derive(Debug, Clone)]
pub struct WeightedKde {
    xs: Vec<f64>,
    ws: Vec<f64>,
    h: f64,
    lo: f64,
    step: f64,
    grid: Vec<f64>,
}

const GRID_PER_BANDWIDTH: f64 = 50.0;
const KERNEL_RADIUS: f64 = 8.0;

fn weighted_quantile(sorted: &[(f64, f64)], q: f64) -> f64 {
    let mut acc = 0.0;
    for &(x, w) in sorted {
        acc += w;
        if acc >= q {
            return x;
        }
    }
    sorted.last().map_or(0.0, |v| v.0)
}

impl WeightedKde {
    /// Silverman's rule on the weighted sample with Kish's effective size.
    pub fn new(xs: &[f64], weights: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::NoRows);
        }
        if xs.len() != weights.len() {
            return Err(Error::Dimension("weights differ in length from the sample".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidSpec("kernel weights must be non-negative with positive sum".into()));
        }
        let ws: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mean: f64 = xs.iter().zip(&ws).map(|(x, w)| x * w).sum();
        let var: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mean).powi(2)).sum();
        let mut sorted: Vec<(f64, f64)> = xs.iter().copied().zip(ws.iter().copied()).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let iqr = weighted_quantile(&sorted, 0.75) - weighted_quantile(&sorted, 0.25);
        let n_eff = 1.0 / ws.iter().map(|w| w * w).sum::<f64>();
        let spread = if iqr > 0.0 { var.sqrt().min(iqr / 1.34) } else { var.sqrt() };
        let h = if spread > 0.0 { 0.9 * spread * n_eff.powf(-0.2) } else { 1.0 };

        let lo = sorted[0].0 - KERNEL_RADIUS * h;
        let hi = sorted[sorted.len() - 1].0 + KERNEL_RADIUS * h;
        let step = h / GRID_PER_BANDWIDTH;
        let len = ((hi - lo) / step).ceil() as usize + 1;
        let mut bins = vec![0.0; len];
        for &(x, w) in &sorted {
            let pos = (x - lo) / step;
            let k = (pos.floor() as usize).min(len - 2);
            let frac = pos - k as f64;
            bins[k] += w * (1.0 - frac);
            bins[k + 1] += w * frac;
        }
        let radius = (KERNEL_RADIUS * GRID_PER_BANDWIDTH).ceil() as usize;
        let kernel: Vec<f64> = (0..=radius)
            .map(|j| {
                let z = j as f64 * step / h;
                (-0.5 * z * z - LN_SQRT_2PI).exp() / h
            })
            .collect();
        let mut grid = vec![0.0; len];
        for (k, &b) in bins.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let from = k.saturating_sub(radius);
            let to = (k + radius).min(len - 1);
            for (j, g) in grid[from..=to].iter_mut().enumerate() {
                *g += b * kernel[(from + j).abs_diff(k)];
            }
        }
        Ok(Self { xs: xs.to_vec(), ws, h, lo, step, grid })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    /// Exact log density by log-sum-exp over the sample.
    pub fn ln_density_exact(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .xs
            .iter()
            .zip(&self.ws)
            .filter(|(_, w)| **w > 0.0)
            .map(|(xi, w)| w.ln() - 0.5 * ((x - xi) / self.h).powi(2))
            .collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln() - LN_SQRT_2PI - self.h.ln()
    }

    /// Log density, interpolated inside the grid and exact outside it.
    pub fn ln_density(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.step;
        if pos < 0.0 || pos >= (self.grid.len() - 1) as f64 {
            return self.ln_density_exact(x);
        }
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        let d = self.grid[k] * (1.0 - frac) + self.grid[k + 1] * frac;
        if d > 1e-300 {
            d.ln()
        } else {
            self.ln_density_exact(x)
        }
    }
}

/// Monte Carlo estimate of `KL(truth || fit)` over `eval` (a fresh sample
/// from the true process). For the full joint, the fitted covariate density
/// is the kernel-smoothed (weighted) training covariates in `train`.
pub fn kl_estimate(
    train: &Dataset,
    truth: &GlmParams,
    fit: &FitResult,
    eval: &Dataset,
    scope: KlScope,
) -> Result<f64> {
    if eval.observed_count() != eval.n() {
        return Err(Error::InvalidSpec("evaluation sample must be complete".into()));
    }
    let kde = match scope {
        KlScope::ConditionalGivenX => None,
        KlScope::FullJoint => Some(WeightedKde::new(train.x(), &fit.x_weights(train.n()))?),
    };
    let mut acc = Kahan::default();
    for i in 0..eval.n() {
        let fitted = conditional_log_density(&fit.params, eval, i);
        if !fitted.is_finite() {
            return Err(Error::ZeroDensity(i));
        }
        let mut term = conditional_log_density(truth, eval, i) - fitted;
        if let Some(k) = &kde {
            let x = eval.x()[i];
            let lq = k.ln_density(x);
            if !lq.is_finite() {
                return Err(Error::ZeroDensity(i));
            }
            term += -0.5 * x * x - LN_SQRT_2PI - lq;
        }
        acc.add(term);
    }
    Ok(acc.sum / eval.n() as f64)
}

/// Mean squared error of predictions on the held-out rows.
pub fn mse(held: &HeldOut, predictions: &[(usize, f64)]) -> Result<f64> {
    if held.rows.is_empty() {
        return Err(Error::NoRows);
    }
    let mut acc = Kahan::default();
    let mut it = predictions.iter().peekable();
    for (&row, &y) in held.rows.iter().zip(&held.y) {
        // both lists are in row order; fall back to a search otherwise
        let pred = match it.peek() {
            Some(&&(r, v)) if r == row => {
                it.next();
                v
            }
            _ => predictions
                .iter()
                .find(|(r, _)| *r == row)
                .map(|p| p.1)
                .ok_or(Error::MissingPrediction(row))?,
        };
        acc.add((pred - y).powi(2));
    }
    Ok(acc.sum / held.rows.len() as f64)
}

/// Compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    pub sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// One row of an experiment: a label and the training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub label: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub graph: Graph,
    pub n: usize,
    pub missing_fraction: f64,
    pub reps: usize,
    pub seed: u64,
    pub eval_n: usize,
    pub scope: KlScope,
    pub rows: Vec<ExperimentRow>,
}

fn row(label: &str, method: Method, graph: Graph, estimator: Estimator) -> ExperimentRow {
    ExperimentRow { label: label.into(), config: TrainConfig::new(method, graph).with_estimator(estimator) }
}

impl Experiment {
    fn base(name: &str, graph: Graph, reps: usize, seed: u64, scope: KlScope, rows: Vec<ExperimentRow>) -> Self {
        Self {
            name: name.into(),
            graph,
            n: 5000,
            missing_fraction: 0.2,
            reps,
            seed,
            eval_n: 100_000,
            scope,
            rows,
        }
    }

    /// Unconstrained fit and the standard constrained fit under each of the
    /// four direct-effect estimators; conditional KL.
    pub fn table1(reps: usize, seed: u64) -> Self {
        let g = Graph::OneMediator;
        let rows = vec![
            row("unconstrained", Method::M0, g, Estimator::GFormula),
            row("constrained g-formula", Method::M1, g, Estimator::GFormula),
            row("constrained ipw", Method::M1, g, Estimator::Ipw),
            row("constrained mixed", Method::M1, g, Estimator::Mixed),
            row("constrained aipw", Method::M1, g, Estimator::Aipw),
        ];
        Self::base("table1", g, reps, seed, KlScope::ConditionalGivenX, rows)
    }

    /// All five procedures on the one-mediator process; full-joint KL.
    pub fn table2(reps: usize, seed: u64) -> Self {
        let g = Graph::OneMediator;
        let rows = Method::ALL
            .iter()
            .map(|&m| row(&m.to_string(), m, g, Estimator::GFormula))
            .collect();
        Self::base("table2", g, reps, seed, KlScope::FullJoint, rows)
    }

    /// The two-mediator process with the effect along the direct edge and
    /// the paths through the first mediator.
    pub fn sim3(reps: usize, seed: u64) -> Self {
        let g = Graph::TwoMediator;
        let rows = vec![
            row("unconstrained", Method::M0, g, Estimator::GFormula),
            row("constrained", Method::M1, g, Estimator::GFormula),
            row("reparam", Method::M2, g, Estimator::GFormula),
            row("hybrid", Method::M3, g, Estimator::GFormula),
            row("hybrid-reparam", Method::M4, g, Estimator::GFormula),
        ];
        Self::base("sim3", g, reps, seed, KlScope::FullJoint, rows)
    }

    pub fn by_name(name: &str, reps: usize, seed: u64) -> Result<Self> {
        match name {
            "table1" => Ok(Self::table1(reps, seed)),
            "table2" => Ok(Self::table2(reps, seed)),
            "sim3" => Ok(Self::sim3(reps, seed)),
            _ => Err(Error::InvalidSpec(format!("unknown experiment {name:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.n == 0 || self.eval_n == 0 {
            return Err(Error::InvalidSpec("reps, n and evaluation size must be positive".into()));
        }
        for r in &self.rows {
            r.config.validate()?;
            if r.config.graph != self.graph {
                return Err(Error::InvalidSpec(format!("row {:?} uses a different graph", r.label)));
            }
        }
        Ok(())
    }
}

/// Metrics of one fit.
pub fn evaluate_fit(
    train: &Dataset,
    held: &HeldOut,
    truth: &GlmParams,
    fit: &FitResult,
    eval: &Dataset,
    scope: KlScope,
) -> Result<Metrics> {
    Ok(Metrics {
        effect: fit.effect_at_fit,
        loglik: fit.loglik,
        kl: kl_estimate(train, truth, fit, eval, scope)?,
        mse: mse(held, &fit.predictions)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSummary {
    pub label: String,
    pub method: Method,
    pub estimator: Estimator,
    pub mean: Metrics,
    pub se: Metrics,
    /// Successful replications.
    pub reps: usize,
    pub failures: Vec<Failure>,
    /// Per-replication metrics in replication order (`None` on failure).
    pub per_rep: Vec<Option<Metrics>>,
}

/// Data for replication `rep`: the masked training sample, its held-out
/// outcomes and the evaluation sample.
pub fn replication_data(exp: &Experiment, rep: usize) -> Result<(Dataset, HeldOut, Dataset)> {
    let spec = DgpSpec::new(exp.graph, exp.n, derive_seed(exp.seed, rep as u64, 0)).with_missing(exp.missing_fraction);
    let (train, held) = simulate_masked(&spec)?;
    let eval = simulate_from(&exp.graph.true_params(), exp.eval_n, derive_seed(exp.seed, rep as u64, 1));
    Ok((train, held, eval))
}

fn run_one(exp: &Experiment, rep: usize) -> Result<Vec<std::result::Result<Metrics, String>>> {
    let (train, held, eval) = replication_data(exp, rep)?;
    let truth = exp.graph.true_params();
    Ok(exp
        .rows
        .iter()
        .map(|r| {
            fit(&train, &r.config)
                .and_then(|f| evaluate_fit(&train, &held, &truth, &f, &eval, exp.scope))
                .map_err(|e| e.to_string())
        })
        .collect())
}

fn summarize(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut acc = Kahan::default();
    let mut n = 0usize;
    for v in values.clone() {
        acc.add(v);
        n += 1;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = acc.sum / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let mut sq = Kahan::default();
    for v in values {
        sq.add((v - mean).powi(2));
    }
    (mean, (sq.sum / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

/// Runs every row of `exp` on `exp.reps` independent replications in
/// parallel. Failed fits are recorded per row and excluded from the means.
pub fn run_replications(exp: &Experiment) -> Result<Vec<RowSummary>> {
    exp.validate()?;
    let results: Vec<Vec<std::result::Result<Metrics, String>>> = (0..exp.reps)
        .into_par_iter()
        .map(|rep| run_one(exp, rep).unwrap_or_else(|e| vec![Err(e.to_string()); exp.rows.len()]))
        .collect();
    Ok(exp
        .rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let per_rep: Vec<Option<Metrics>> = results.iter().map(|rr| rr[k].as_ref().ok().copied()).collect();
            let failures = results
                .iter()
                .enumerate()
                .filter_map(|(rep, rr)| rr[k].as_ref().err().map(|e| Failure { rep, error: e.clone() }))
                .collect();
            let ok: Vec<Metrics> = per_rep.iter().flatten().copied().collect();
            let stat = |f: fn(&Metrics) -> f64| summarize(ok.iter().map(f));
            let (effect, se_effect) = stat(|m| m.effect);
            let (loglik, se_loglik) = stat(|m| m.loglik);
            let (kl, se_kl) = stat(|m| m.kl);
            let (mse, se_mse) = stat(|m| m.mse);
            RowSummary {
                label: r.label.clone(),
                method: r.config.method,
                estimator: r.config.estimator,
                mean: Metrics { effect, loglik, kl, mse },
                se: Metrics { effect: se_effect, loglik: se_loglik, kl: se_kl, mse: se_mse },
                reps: ok.len(),
                failures,
                per_rep,
            }
        })
        .collect())
}
