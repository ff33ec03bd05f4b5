//! Empirical likelihood for a single scalar moment constraint
//! `sum_i p_i m_i = 0`, `sum_i p_i = 1`.
//!
//! The normalization multiplier is eliminated in closed form, leaving
//! `p_i = 1 / (n (1 + lambda m_i))` where `lambda` is the root of
//! `sum_i m_i / (1 + lambda m_i) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multiplier and weights of a solved constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElState {
    pub lambda: f64,
    pub weights: Vec<f64>,
}

impl ElState {
    pub fn uniform(n: usize) -> Self {
        Self { lambda: 0.0, weights: vec![1.0 / n as f64; n] }
    }

    /// Solves the multiplier for `m` and recovers the weights.
    pub fn from_constraint(m: &[f64]) -> Result<Self> {
        let lambda = solve_lambda(m)?;
        let weights = weights_from_lambda(m, lambda)?;
        Ok(Self { lambda, weights })
    }

    /// `sum_i p_i v_i`.
    pub fn mean_of(&self, v: &[f64]) -> f64 {
        self.weights.iter().zip(v).map(|(p, x)| p * x).sum()
    }
}

/// `(1/n) sum_i m_i / (1 + lambda m_i)`, which equals `sum_i p_i m_i` for the
/// weights implied by `lambda`.
pub fn residual(m: &[f64], lambda: f64) -> f64 {
    let n = m.len() as f64;
    m.iter().map(|&v| v / (1.0 + lambda * v)).sum::<f64>() / n
}

const RESIDUAL_TOL: f64 = 1e-10;

/// Root of the monotone multiplier equation on the interval where every
/// `1 + lambda m_i` is positive. Safeguarded Newton: a Newton step that
/// leaves the current bracket is replaced by bisection.
pub fn solve_lambda(m: &[f64]) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::NoRows);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSpec("non-finite constraint value".into()));
    }
    if m.iter().all(|&v| v == 0.0) || m.iter().sum::<f64>() == 0.0 {
        return Ok(0.0);
    }
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = m.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min < 0.0 && max > 0.0) {
        return Err(Error::InfeasibleConstraint);
    }
    let margin = 1e-12;
    let mut lo = -1.0 / max;
    let mut hi = -1.0 / min;
    lo += margin * lo.abs();
    hi -= margin * hi.abs();

    let eval = |lambda: f64| -> (f64, f64) {
        let mut g = 0.0;
        let mut dg = 0.0;
        for &v in m {
            let d = 1.0 / (1.0 + lambda * v);
            g += v * d;
            dg -= v * v * d * d;
        }
        let n = m.len() as f64;
        (g / n, dg / n)
    };

    let mut lambda = 0.0;
    let (mut g, mut dg) = eval(lambda);
    for _ in 0..500 {
        if g.abs() <= 0.01 * RESIDUAL_TOL {
            return Ok(lambda);
        }
        // residual is decreasing in lambda
        if g > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let newton = lambda - g / dg;
        let next = if newton > lo && newton < hi && dg < 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == lambda || hi - lo <= 4.0 * f64::EPSILON * lambda.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        lambda = next;
        (g, dg) = eval(lambda);
    }
    if g.abs() <= RESIDUAL_TOL {
        Ok(lambda)
    } else {
        Err(Error::NonConvergence { what: "empirical-likelihood multiplier".into(), iterations: 500, residual: g })
    }
}

/// `p_i = (1/n) / (1 + lambda m_i)`.
pub fn weights_from_lambda(m: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = m.len() as f64;
    m.iter()
        .enumerate()
        .map(|(i, &v)| {
            let d = 1.0 + lambda * v;
            if d > 0.0 {
                Ok(1.0 / (n * d))
            } else {
                Err(Error::NonPositiveDenominator { index: i })
            }
        })
        .collect()
}

/// Dual form of the profile empirical log-likelihood,
/// `-sum_i log(1 + lambda* m_i) - n log n`, equal to `sum_i log p_i`.
pub fn profile_el_logterm(m: &[f64]) -> Result<f64> {
    let lambda = solve_lambda(m)?;
    let n = m.len() as f64;
    Ok(-m.iter().map(|&v| (lambda * v).ln_1p()).sum::<f64>() - n * n.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_pair_has_zero_multiplier() {
        assert_eq!(solve_lambda(&[1.0, -1.0]).unwrap(), 0.0);
        let m = [0.5, -0.5, 2.0, -2.0, 3.0, -3.0];
        assert_eq!(solve_lambda(&m).unwrap(), 0.0);
        assert_eq!(solve_lambda(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn two_point_closed_form() {
        // 2/(1+2l) = 1/(1-l)  =>  l = 1/4
        let lambda = solve_lambda(&[2.0, -1.0]).unwrap();
        assert!((lambda - 0.25).abs() < 1e-12);
        let p = weights_from_lambda(&[2.0, -1.0], 0.25).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[1] - 2.0 / 3.0).abs() < 1e-15);
        let lt = profile_el_logterm(&[2.0, -1.0]).unwrap();
        assert!((lt - ((1.0f64 / 3.0).ln() + (2.0f64 / 3.0).ln())).abs() < 1e-12);
    }

    #[test]
    fn uniform_weights_at_zero_multiplier() {
        let p = weights_from_lambda(&[3.0, -1.0, 5.0, 0.2], 0.0).unwrap();
        assert!(p.iter().all(|&v| v == 0.25));
        let lt = profile_el_logterm(&[0.0; 4]).unwrap();
        assert!((lt + 4.0 * 4.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn infeasible_and_invalid_inputs() {
        assert!(matches!(solve_lambda(&[1.0, 2.0]), Err(Error::InfeasibleConstraint)));
        assert!(matches!(solve_lambda(&[-1.0, -2.0, 0.0]), Err(Error::InfeasibleConstraint)));
        assert!(matches!(weights_from_lambda(&[2.0, -1.0], 1.0), Err(Error::NonPositiveDenominator { index: 1 })));
    }

    #[test]
    fn dual_matches_primal_maximization() {
        // Primal oracle: maximize sum log p_i over the simplex slice
        // {sum p = 1, sum p m = 0} by projected Newton on a 3-dim
        // parameterization (5 points, 2 equality constraints).
        let m = [1.5, -0.4, 0.8, -1.2, 0.3];
        let dual = profile_el_logterm(&m).unwrap();

        // Null-space basis of [1..1; m] via Gram-Schmidt on coordinate vectors.
        let n = m.len();
        let mean: f64 = m.iter().sum::<f64>() / n as f64;
        // orthogonal spanning set of the two constraint rows
        let rows: Vec<Vec<f64>> = vec![vec![1.0; n], m.iter().map(|v| v - mean).collect()];
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for k in 0..n {
            let mut v = vec![0.0; n];
            v[k] = 1.0;
            for r in rows.iter().chain(basis.iter()) {
                let rr: f64 = r.iter().map(|x| x * x).sum();
                let c: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / rr;
                for (vi, ri) in v.iter_mut().zip(r) {
                    *vi -= c * ri;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                basis.push(v.iter().map(|x| x / norm).collect());
            }
            if basis.len() == n - 2 {
                break;
            }
        }
        // feasible start: uniform weights shifted along m's direction
        let mean_m: f64 = m.iter().sum::<f64>() / n as f64;
        let var: f64 = m.iter().map(|v| (v - mean_m).powi(2)).sum::<f64>();
        let mut p: Vec<f64> = m.iter().map(|v| 1.0 / n as f64 - mean_m * (v - mean_m) / var).collect();
        assert!(p.iter().all(|&v| v > 0.0));
        for _ in 0..100 {
            let g: Vec<f64> = basis.iter().map(|b| b.iter().zip(&p).map(|(bi, pi)| bi / pi).sum()).collect();
            let k = basis.len();
            let mut h = nalgebra::DMatrix::<f64>::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    h[(i, j)] = basis[i].iter().zip(&basis[j]).zip(&p).map(|((a, b), pi)| a * b / (pi * pi)).sum();
                }
            }
            let step = h.cholesky().unwrap().solve(&nalgebra::DVector::from_vec(g));
            let mut t = 1.0;
            loop {
                let cand: Vec<f64> = (0..n).map(|i| p[i] + t * (0..k).map(|j| step[j] * basis[j][i]).sum::<f64>()).collect();
                if cand.iter().all(|&v| v > 0.0) {
                    p = cand;
                    break;
                }
                t *= 0.5;
            }
        }
        let primal: f64 = p.iter().map(|v| v.ln()).sum();
        assert!((primal - dual).abs() < 1e-9, "{primal} vs {dual}");
    }

    proptest! {
        #[test]
        fn solved_weights_satisfy_invariants(
            pos in prop::collection::vec(0.01f64..10.0, 1..30),
            neg in prop::collection::vec(-10.0f64..-0.01, 1..30),
            scale in 0.1f64..10.0,
        ) {
            let m: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
            let st = ElState::from_constraint(&m).unwrap();
            prop_assert!(residual(&m, st.lambda).abs() <= 1e-10);
            prop_assert!(st.weights.iter().all(|&p| p > 0.0));
            prop_assert!((st.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            prop_assert!(st.mean_of(&m).abs() <= 1e-8);

            let scaled: Vec<f64> = m.iter().map(|v| v * scale).collect();
            let st2 = ElState::from_constraint(&scaled).unwrap();
            prop_assert!((st2.lambda * scale - st.lambda).abs() <= 1e-6 * st.lambda.abs().max(1.0));
            for (a, b) in st.weights.iter().zip(&st2.weights) {
                prop_assert!((a - b).abs() <= 1e-8);
            }
        }

        #[test]
        fn residual_is_decreasing_on_the_bracket(
            pos in prop::collection::vec(0.01f64..5.0, 1..10),
            neg in prop::collection::vec(-5.0f64..-0.01, 1..10),
        ) {
            let m: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
            let max = m.iter().copied().fold(f64::MIN, f64::max);
            let min = m.iter().copied().fold(f64::MAX, f64::min);
            let (lo, hi) = (-1.0 / max, -1.0 / min);
            let near_lo = lo + 1e-6 * (hi - lo);
            let near_hi = hi - 1e-6 * (hi - lo);
            prop_assert!(residual(&m, near_lo) > 0.0);
            prop_assert!(residual(&m, near_hi) < 0.0);
            let grid: Vec<f64> = (1..50).map(|k| lo + (hi - lo) * k as f64 / 50.0).collect();
            for w in grid.windows(2) {
                prop_assert!(residual(&m, w[0]) > residual(&m, w[1]));
            }
        }
    }
}
