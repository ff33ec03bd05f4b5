//! Synthetic causal data, outcome masking and CSV storage.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::{Covariates, DesignSpec};
use crate::error::{Error, Result};
use crate::glm::{GlmParams, LinearModel, LogisticModel};
use crate::rng;

/// Causal graph template.
///
/// `OneMediator`: `X -> {A, M, Y}`, `A -> M -> Y`, `A -> Y`.
/// `TwoMediator`: additionally `L` with parents `X, A, M` and child `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Graph {
    OneMediator,
    TwoMediator,
}

impl Graph {
    pub fn has_l(self) -> bool {
        matches!(self, Graph::TwoMediator)
    }

    /// Parameters of the data-generating process, expressed in the default
    /// (correctly specified) designs.
    pub fn true_params(self) -> GlmParams {
        let a = LogisticModel::new(DesignSpec::treatment_default(), vec![-0.5, -0.5]);
        let m = LogisticModel::new(DesignSpec::mediator_default(), vec![-0.5, -1.0, -0.5, 1.0]);
        match self {
            Graph::OneMediator => GlmParams {
                a,
                m,
                l: None,
                y: LinearModel::new(
                    DesignSpec::outcome_one_mediator(),
                    vec![1.0, 1.0, 2.0, -2.0, 1.0, 3.0, 1.0, 1.0],
                    1.0,
                ),
            },
            Graph::TwoMediator => GlmParams {
                a,
                m,
                l: Some(LogisticModel::new(
                    DesignSpec::second_mediator_default(),
                    vec![-0.5, -1.0, -0.5, -0.25, 1.0, 0.5, 0.25],
                )),
                y: LinearModel::new(
                    DesignSpec::outcome_two_mediator(),
                    vec![1.0, 1.0, 2.0, 1.0, 0.5, -2.0, 1.0, 1.0, 1.0],
                    1.0,
                ),
            },
        }
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Graph::OneMediator => "one-mediator",
            Graph::TwoMediator => "two-mediator",
        })
    }
}

impl FromStr for Graph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "one-mediator" | "one" | "onemediator" => Ok(Graph::OneMediator),
            "two-mediator" | "two" | "twomediator" => Ok(Graph::TwoMediator),
            _ => Err(Error::InvalidSpec(format!("unknown graph variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub variant: Graph,
    pub n: usize,
    pub missing_fraction: f64,
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(variant: Graph, n: usize, seed: u64) -> Self {
        Self { variant, n, missing_fraction: 0.20, seed }
    }

    pub fn with_missing(mut self, fraction: f64) -> Self {
        self.missing_fraction = fraction;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be at least 1".into()));
        }
        check_fraction(self.missing_fraction)
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if !(0.0..1.0).contains(&f) {
        return Err(Error::InvalidSpec(format!(
            "missing fraction {f} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Observed rows `(X, A, M, [L], Y, R)`. `y[i]` is `Some` exactly when
/// `r[i] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    a: Vec<u8>,
    m: Vec<u8>,
    l: Option<Vec<u8>>,
    y: Vec<Option<f64>>,
}

/// Ground-truth outcomes of masked rows, kept aside for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOut {
    pub rows: Vec<usize>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn from_columns(
        x: Vec<f64>,
        a: Vec<u8>,
        m: Vec<u8>,
        l: Option<Vec<u8>>,
        y: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(Error::NoRows);
        }
        let same = a.len() == n
            && m.len() == n
            && y.len() == n
            && l.as_ref().is_none_or(|l| l.len() == n);
        if !same {
            return Err(Error::Dimension("dataset columns differ in length".into()));
        }
        let binary = |v: &[u8]| v.iter().all(|b| *b <= 1);
        if !binary(&a) || !binary(&m) || !l.as_deref().is_none_or(binary) {
            return Err(Error::InvalidSpec("a, m and l must be 0/1".into()));
        }
        Ok(Self { x, a, m, l, y })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn graph(&self) -> Graph {
        if self.l.is_some() {
            Graph::TwoMediator
        } else {
            Graph::OneMediator
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn m(&self) -> &[u8] {
        &self.m
    }

    pub fn l(&self) -> Option<&[u8]> {
        self.l.as_deref()
    }

    pub fn y(&self) -> &[Option<f64>] {
        &self.y
    }

    pub fn r(&self, i: usize) -> u8 {
        u8::from(self.y[i].is_some())
    }

    pub fn observed_count(&self) -> usize {
        self.y.iter().filter(|y| y.is_some()).count()
    }

    pub fn masked_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.y[i].is_none()).collect()
    }

    #[inline]
    pub fn covariates(&self, i: usize) -> Covariates {
        Covariates {
            x: self.x[i],
            a: f64::from(self.a[i]),
            m: f64::from(self.m[i]),
            l: self.l.as_ref().map_or(0.0, |l| f64::from(l[i])),
        }
    }

    /// Row-wise covariates.
    pub fn rows(&self) -> Vec<Covariates> {
        (0..self.n()).map(|i| self.covariates(i)).collect()
    }

    pub fn with_outcomes(&self, y: Vec<Option<f64>>) -> Result<Self> {
        Self::from_columns(self.x.clone(), self.a.clone(), self.m.clone(), self.l.clone(), y)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }

    /// Reads the `x,a,m[,l],y,r` format. An empty `y` field marks a masked
    /// outcome and must coincide with `r = 0`.
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let has_l = match names.as_slice() {
            ["x", "a", "m", "y", "r"] => false,
            ["x", "a", "m", "l", "y", "r"] => true,
            [] | [""] => return Err(Error::NoRows),
            _ => {
                return Err(Error::Schema {
                    line: 1,
                    msg: format!("expected header x,a,m[,l],y,r, found {}", names.join(",")),
                })
            }
        };
        let (mut x, mut a, mut m, mut l, mut y) = (vec![], vec![], vec![], vec![], vec![]);
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| Error::Schema { line, msg: e.to_string() })?;
            let field = |j: usize| rec.get(j).unwrap_or("");
            let bin = |j: usize, name: &str| -> Result<u8> {
                match field(j) {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    v => Err(Error::Schema { line, msg: format!("{name} must be 0 or 1, found {v:?}") }),
                }
            };
            let xv: f64 = field(0)
                .parse()
                .map_err(|_| Error::Schema { line, msg: format!("bad x {:?}", field(0)) })?;
            if !xv.is_finite() {
                return Err(Error::Schema { line, msg: "x must be finite".into() });
            }
            x.push(xv);
            a.push(bin(1, "a")?);
            m.push(bin(2, "m")?);
            let off = if has_l {
                l.push(bin(3, "l")?);
                4
            } else {
                3
            };
            let r = bin(off + 1, "r")?;
            let raw = field(off);
            let yv = match (raw.is_empty(), r) {
                (true, 0) => None,
                (false, 1) => Some(raw.parse::<f64>().map_err(|_| Error::Schema {
                    line,
                    msg: format!("bad y {raw:?}"),
                })?),
                (false, _) => {
                    return Err(Error::Schema { line, msg: "y present although r = 0".into() })
                }
                (true, _) => {
                    return Err(Error::Schema { line, msg: "y missing although r = 1".into() })
                }
            };
            y.push(yv);
        }
        if x.is_empty() {
            return Err(Error::NoRows);
        }
        Self::from_columns(x, a, m, has_l.then_some(l), y)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if self.l.is_some() {
            w.write_record(["x", "a", "m", "l", "y", "r"])?;
        } else {
            w.write_record(["x", "a", "m", "y", "r"])?;
        }
        for i in 0..self.n() {
            let mut rec = vec![self.x[i].to_string(), self.a[i].to_string(), self.m[i].to_string()];
            if let Some(l) = &self.l {
                rec.push(l[i].to_string());
            }
            rec.push(self.y[i].map(|v| v.to_string()).unwrap_or_default());
            rec.push(self.r(i).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws a complete dataset (all outcomes observed) from the process in
/// `spec.variant`. The missing fraction is not applied here.
pub fn simulate(spec: &DgpSpec) -> Result<Dataset> {
    spec.validate()?;
    Ok(simulate_from(&spec.variant.true_params(), spec.n, spec.seed))
}

/// Draws `n` complete rows from a process whose factors are the given
/// models, with `X ~ N(0, 1)` and Gaussian outcome noise of scale `y.sigma`.
pub fn simulate_from(truth: &GlmParams, n: usize, seed: u64) -> Dataset {
    let mut rx = rng::stream(seed, rng::STREAM_X);
    let mut ra = rng::stream(seed, rng::STREAM_A);
    let mut rm = rng::stream(seed, rng::STREAM_M);
    let mut rl = rng::stream(seed, rng::STREAM_L);
    let mut ry = rng::stream(seed, rng::STREAM_Y);

    let x: Vec<f64> = (0..n).map(|_| rx.sample(StandardNormal)).collect();
    let mut a = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut l = truth.l.as_ref().map(|_| Vec::with_capacity(n));
    let mut y = Vec::with_capacity(n);
    for &xi in &x {
        let mut c = Covariates { x: xi, ..Default::default() };
        let ai = u8::from(ra.random::<f64>() < truth.a.prob(&c));
        c.a = f64::from(ai);
        let mi = u8::from(rm.random::<f64>() < truth.m.prob(&c));
        c.m = f64::from(mi);
        if let (Some(model), Some(col)) = (&truth.l, l.as_mut()) {
            let li = u8::from(rl.random::<f64>() < model.prob(&c));
            c.l = f64::from(li);
            col.push(li);
        }
        let noise: f64 = ry.sample(StandardNormal);
        y.push(Some(truth.y.mean(&c) + truth.y.sigma * noise));
        a.push(ai);
        m.push(mi);
    }
    Dataset { x, a, m, l, y }
}

/// Simulates and masks `floor(missing_fraction * n)` outcomes.
pub fn simulate_masked(spec: &DgpSpec) -> Result<(Dataset, HeldOut)> {
    let full = simulate(spec)?;
    mask_outcomes_mar_with_truth(&full, spec.missing_fraction, spec.seed)
}

/// Removes exactly `floor(fraction * n)` outcomes chosen uniformly at random,
/// independently of every variable.
pub fn mask_outcomes_mar(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    mask_outcomes_mar_with_truth(ds, fraction, seed).map(|(d, _)| d)
}

pub fn mask_outcomes_mar_with_truth(
    ds: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, HeldOut)> {
    check_fraction(fraction)?;
    if ds.observed_count() != ds.n() {
        return Err(Error::InvalidSpec("masking requires all outcomes observed".into()));
    }
    let n = ds.n();
    let k = (fraction * n as f64).floor() as usize;
    let mut rm = rng::stream(seed, rng::STREAM_MASK);
    let mut rows = rand::seq::index::sample(&mut rm, n, k).into_vec();
    rows.sort_unstable();
    let mut y = ds.y.clone();
    let truth: Vec<f64> = rows.iter().map(|&i| y[i].take().expect("observed")).collect();
    let masked = Dataset { y, ..ds.clone() };
    Ok((masked, HeldOut { rows, y: truth }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, seed: u64) -> DgpSpec {
        DgpSpec::new(Graph::OneMediator, n, seed)
    }

    #[test]
    fn sample_mean_of_x_near_zero() {
        let ds = simulate(&spec(5000, 7)).unwrap();
        let mean = ds.x().iter().sum::<f64>() / 5000.0;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn simulate_is_deterministic() {
        let a = simulate(&spec(300, 11)).unwrap();
        let b = simulate(&spec(300, 11)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&spec(300, 12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn masking_hits_exact_count() {
        let ds = simulate(&spec(5000, 3)).unwrap();
        let (masked, held) = mask_outcomes_mar_with_truth(&ds, 0.2, 3).unwrap();
        assert_eq!(masked.n() - masked.observed_count(), 1000);
        assert_eq!(held.rows.len(), 1000);
        for (&i, &v) in held.rows.iter().zip(&held.y) {
            assert_eq!(ds.y()[i], Some(v));
            assert_eq!(masked.r(i), 0);
        }
        let same = mask_outcomes_mar(&ds, 0.0, 1).unwrap();
        assert_eq!(same, ds);
    }

    #[test]
    fn bad_fraction_rejected() {
        let ds = simulate(&spec(10, 3)).unwrap();
        assert!(mask_outcomes_mar(&ds, 1.0, 1).is_err());
        assert!(mask_outcomes_mar(&ds, -0.1, 1).is_err());
        assert!(simulate(&spec(0, 1)).is_err());
        let masked = mask_outcomes_mar(&ds, 0.5, 1).unwrap();
        assert!(mask_outcomes_mar(&masked, 0.1, 1).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let ds = simulate(&DgpSpec::new(Graph::TwoMediator, 50, 5)).unwrap();
        let ds = mask_outcomes_mar(&ds, 0.2, 5).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);

        let bad = "x,a,m,y,r\n0.1,2,0,1.0,1\n";
        assert!(matches!(Dataset::read_csv(bad.as_bytes()), Err(Error::Schema { line: 2, .. })));
        let bad = "x,a,m,y,r\n0.1,1,0,1.0,0\n";
        assert!(matches!(Dataset::read_csv(bad.as_bytes()), Err(Error::Schema { .. })));
        assert!(matches!(Dataset::read_csv("".as_bytes()), Err(Error::NoRows)));
        assert!(matches!(Dataset::read_csv("x,a,m,y,r\n".as_bytes()), Err(Error::NoRows)));
        let one = "x,a,m,y,r\n0.5,1,0,,0\n-1,0,1,2.5,1\n";
        let ds = Dataset::read_csv(one.as_bytes()).unwrap();
        assert_eq!(ds.y(), &[None, Some(2.5)]);
        assert_eq!(ds.graph(), Graph::OneMediator);
    }
}
