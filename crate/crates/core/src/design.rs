//! Product-term designs over the variables `X`, `A`, `M`, `L`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values of the regressors for one unit (or one counterfactual evaluation).
/// Binary variables are carried as `0.0` / `1.0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Covariates {
    pub x: f64,
    pub a: f64,
    pub m: f64,
    pub l: f64,
}

impl Covariates {
    pub fn new(x: f64, a: f64, m: f64, l: f64) -> Self {
        Self { x, a, m, l }
    }
}

/// A product of distinct variables, encoded as a bitmask. The empty product
/// is the intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Term(u8);

const BIT_X: u8 = 1;
const BIT_A: u8 = 2;
const BIT_M: u8 = 4;
const BIT_L: u8 = 8;

impl Term {
    pub const ONE: Term = Term(0);
    pub const X: Term = Term(BIT_X);
    pub const A: Term = Term(BIT_A);
    pub const M: Term = Term(BIT_M);
    pub const L: Term = Term(BIT_L);

    pub fn times(self, other: Term) -> Term {
        Term(self.0 | other.0)
    }

    pub fn is_intercept(self) -> bool {
        self.0 == 0
    }

    pub fn has_a(self) -> bool {
        self.0 & BIT_A != 0
    }

    pub fn has_m(self) -> bool {
        self.0 & BIT_M != 0
    }

    pub fn has_l(self) -> bool {
        self.0 & BIT_L != 0
    }

    /// True when the term involves some variable other than `A`, i.e. it
    /// vanishes once `X`, `M` and `L` are all zero.
    pub fn has_non_a(self) -> bool {
        self.0 & !BIT_A != 0
    }

    #[inline]
    pub fn eval(self, c: &Covariates) -> f64 {
        let mut v = 1.0;
        if self.0 & BIT_X != 0 {
            v *= c.x;
        }
        if self.0 & BIT_A != 0 {
            v *= c.a;
        }
        if self.0 & BIT_M != 0 {
            v *= c.m;
        }
        if self.0 & BIT_L != 0 {
            v *= c.l;
        }
        v
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_intercept() {
            return f.write_str("1");
        }
        let mut parts = Vec::new();
        for (bit, name) in [(BIT_A, "A"), (BIT_M, "M"), (BIT_L, "L"), (BIT_X, "X")] {
            if self.0 & bit != 0 {
                parts.push(name);
            }
        }
        f.write_str(&parts.join("*"))
    }
}

impl FromStr for Term {
    type Err = Error;

    /// Parses `1`, `X`, `A*X`, `AMX` style terms (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "1" {
            return Ok(Term::ONE);
        }
        let mut bits = 0u8;
        for ch in s.chars().filter(|c| *c != '*' && *c != ':' && !c.is_whitespace()) {
            let bit = match ch.to_ascii_uppercase() {
                'X' => BIT_X,
                'A' => BIT_A,
                'M' => BIT_M,
                'L' => BIT_L,
                _ => return Err(Error::InvalidSpec(format!("unknown variable in term {s:?}"))),
            };
            if bits & bit != 0 {
                return Err(Error::InvalidSpec(format!("repeated variable in term {s:?}")));
            }
            bits |= bit;
        }
        if bits == 0 {
            return Err(Error::InvalidSpec(format!("empty term {s:?}")));
        }
        Ok(Term(bits))
    }
}

/// Ordered list of distinct product terms, always containing the intercept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    terms: Vec<Term>,
}

impl DesignSpec {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if !terms.contains(&Term::ONE) {
            return Err(Error::InvalidSpec("design must include the intercept".into()));
        }
        check_distinct(&terms)?;
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn uses(&self, pred: impl Fn(Term) -> bool) -> bool {
        self.terms.iter().any(|t| pred(*t))
    }

    #[inline]
    pub fn row_into(&self, c: &Covariates, out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(c);
        }
    }

    pub fn row(&self, c: &Covariates) -> Vec<f64> {
        self.terms.iter().map(|t| t.eval(c)).collect()
    }

    #[inline]
    pub fn dot(&self, coef: &[f64], c: &Covariates) -> f64 {
        self.terms.iter().zip(coef).map(|(t, b)| t.eval(c) * b).sum()
    }

    /// Parses a comma separated list such as `1,X,A,A*X`.
    pub fn parse(s: &str) -> Result<Self> {
        let terms = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Term::from_str)
            .collect::<Result<Vec<_>>>()?;
        Self::new(terms)
    }

    /// `logit P(A=1|X)` design.
    pub fn treatment_default() -> Self {
        Self { terms: vec![Term::ONE, Term::X] }
    }

    /// `logit P(M=1|A,X)` design.
    pub fn mediator_default() -> Self {
        Self {
            terms: vec![Term::ONE, Term::X, Term::A, Term::A.times(Term::X)],
        }
    }

    /// `logit P(L=1|A,X,M)` design.
    pub fn second_mediator_default() -> Self {
        let (x, a, m) = (Term::X, Term::A, Term::M);
        Self {
            terms: vec![Term::ONE, x, a, m, a.times(x), a.times(m), a.times(x).times(m)],
        }
    }

    /// Outcome design for the single-mediator graph. Term order matches the
    /// data-generating coefficients `(1, 1, 2, -2, 1, 3, 1, 1)`.
    pub fn outcome_one_mediator() -> Self {
        let (x, a, m) = (Term::X, Term::A, Term::M);
        Self {
            terms: vec![
                Term::ONE,
                x,
                a,
                a.times(x),
                m,
                x.times(m),
                a.times(m),
                a.times(x).times(m),
            ],
        }
    }

    /// Outcome design for the two-mediator graph, ordered as
    /// `1, X, A, M, L, AX, AM, AL, AML`.
    pub fn outcome_two_mediator() -> Self {
        let (x, a, m, l) = (Term::X, Term::A, Term::M, Term::L);
        Self {
            terms: vec![
                Term::ONE,
                x,
                a,
                m,
                l,
                a.times(x),
                a.times(m),
                a.times(l),
                a.times(m).times(l),
            ],
        }
    }
}

pub(crate) fn check_distinct(terms: &[Term]) -> Result<()> {
    for (i, t) in terms.iter().enumerate() {
        if terms[..i].contains(t) {
            return Err(Error::InvalidSpec(format!("duplicate term {t}")));
        }
    }
    Ok(())
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        f.write_str(&names.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn term_parsing_and_display() {
        let t: Term = "X*A*M".parse().unwrap();
        assert_eq!(t.to_string(), "A*M*X");
        assert_eq!("amx".parse::<Term>().unwrap(), t);
        assert!("A*A".parse::<Term>().is_err());
        assert!("Q".parse::<Term>().is_err());
        assert_eq!("1".parse::<Term>().unwrap(), Term::ONE);
    }

    #[test]
    fn term_evaluation() {
        let c = Covariates::new(2.0, 1.0, 0.0, 1.0);
        assert_eq!(Term::ONE.eval(&c), 1.0);
        assert_eq!(Term::X.times(Term::A).eval(&c), 2.0);
        assert_eq!(Term::X.times(Term::M).eval(&c), 0.0);
        assert_eq!(Term::X.times(Term::L).eval(&c), 2.0);
    }

    #[test]
    fn design_requires_intercept_and_distinct_terms() {
        assert!(DesignSpec::new(vec![Term::X]).is_err());
        assert!(DesignSpec::new(vec![Term::ONE, Term::X, Term::X]).is_err());
        let d = DesignSpec::parse("1, X, A*X").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.to_string(), "1,X,A*X");
    }
}
