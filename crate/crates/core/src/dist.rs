//! Univariate distributions and the valuation model built from them.
//!
//! All families expose closed-form CDFs, quantiles and partial expectations
//! `E[max(0, X - t)]`. Sums `X + min(Y, cap)` are handled by exact enumeration
//! when either component is discrete and by adaptive quadrature otherwise.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::numeric::{integrate_with_breaks, pairwise_sum};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard deviations kept on each side of a normal; the tail beyond carries < 2e-14.
pub const NORMAL_TAIL_Z: f64 = 7.6;
const EXP_TAIL: f64 = 34.0;
const SUM_CDF_TOL: f64 = 1e-12;
const SUM_PE_TOL: f64 = 1e-11;

pub fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// `E[max(0, Z - t)]` for a standard normal `Z`.
pub fn std_normal_pe(t: f64) -> f64 {
    std_normal_pdf(t) - t * std_normal_cdf(-t)
}

/// Serialized form, tagged by `family`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Normal { mean: f64, var: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    PointMass { value: f64 },
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    // values strictly increasing, probs positive, cum[k] = P(X <= values[k])
    Discrete { values: Vec<f64>, probs: Vec<f64>, cum: Vec<f64> },
    PointMass { value: f64 },
}

/// A validated univariate distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub struct Distribution {
    kind: Kind,
}

impl TryFrom<DistributionSpec> for Distribution {
    type Error = Error;

    fn try_from(s: DistributionSpec) -> Result<Self> {
        match s {
            DistributionSpec::Normal { mean, var } => Distribution::normal(mean, var),
            DistributionSpec::Uniform { lo, hi } => Distribution::uniform(lo, hi),
            DistributionSpec::Exponential { rate } => Distribution::exponential(rate),
            DistributionSpec::Discrete { values, probs } => Distribution::discrete(values, probs),
            DistributionSpec::PointMass { value } => Distribution::point_mass(value),
        }
    }
}

impl From<Distribution> for DistributionSpec {
    fn from(d: Distribution) -> Self {
        match d.kind {
            Kind::Normal { mean, sd } => DistributionSpec::Normal { mean, var: sd * sd },
            Kind::Uniform { lo, hi } => DistributionSpec::Uniform { lo, hi },
            Kind::Exponential { rate } => DistributionSpec::Exponential { rate },
            Kind::Discrete { values, probs, .. } => DistributionSpec::Discrete { values, probs },
            Kind::PointMass { value } => DistributionSpec::PointMass { value },
        }
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!("{name} must be finite, got {v}")))
    }
}

impl Distribution {
    /// Normal with the given mean and variance. A zero variance yields a point mass.
    pub fn normal(mean: f64, var: f64) -> Result<Self> {
        finite("mean", mean)?;
        finite("var", var)?;
        if var < 0.0 {
            return Err(Error::InvalidDistribution(format!("negative variance {var}")));
        }
        if var == 0.0 {
            return Distribution::point_mass(mean);
        }
        Ok(Distribution {
            kind: Kind::Normal {
                mean,
                sd: var.sqrt(),
            },
        })
    }

    pub fn std_normal() -> Self {
        Distribution {
            kind: Kind::Normal { mean: 0.0, sd: 1.0 },
        }
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        finite("lo", lo)?;
        finite("hi", hi)?;
        if !(hi > lo) {
            return Err(Error::InvalidDistribution(format!(
                "uniform needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Distribution {
            kind: Kind::Uniform { lo, hi },
        })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        finite("rate", rate)?;
        if rate <= 0.0 {
            return Err(Error::InvalidDistribution(format!("rate must be positive, got {rate}")));
        }
        Ok(Distribution {
            kind: Kind::Exponential { rate },
        })
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        finite("value", value)?;
        Ok(Distribution {
            kind: Kind::PointMass { value },
        })
    }

    /// Finite discrete distribution. Values are sorted and duplicate values merged;
    /// atoms of zero probability are dropped.
    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "discrete needs equally many values and probs (got {} and {})",
                values.len(),
                probs.len()
            )));
        }
        for (&v, &p) in values.iter().zip(&probs) {
            finite("value", v)?;
            finite("prob", p)?;
            if p < 0.0 {
                return Err(Error::InvalidDistribution(format!("negative probability {p}")));
            }
        }
        let total = pairwise_sum(&probs);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let mut pairs: Vec<(f64, f64)> = values
            .into_iter()
            .zip(probs)
            .filter(|&(_, p)| p > 0.0)
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut vs: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut ps: Vec<f64> = Vec::with_capacity(pairs.len());
        for (v, p) in pairs {
            if vs.last() == Some(&v) {
                *ps.last_mut().unwrap() += p;
            } else {
                vs.push(v);
                ps.push(p);
            }
        }
        let mut cum = Vec::with_capacity(ps.len());
        let mut acc = 0.0;
        for p in &ps {
            acc += p;
            cum.push(acc);
        }
        let last = cum.len() - 1;
        cum[last] = 1.0;
        Ok(Distribution {
            kind: Kind::Discrete {
                values: vs,
                probs: ps,
                cum,
            },
        })
    }

    pub fn spec(&self) -> DistributionSpec {
        self.clone().into()
    }

    pub fn is_normal(&self) -> bool {
        matches!(self.kind, Kind::Normal { .. })
    }

    /// True for distributions with finitely many atoms (discrete or point mass).
    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, Kind::Discrete { .. } | Kind::PointMass { .. })
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            Kind::Normal { mean, .. } => *mean,
            Kind::Uniform { lo, hi } => 0.5 * (lo + hi),
            Kind::Exponential { rate } => 1.0 / rate,
            Kind::Discrete { values, probs, .. } => {
                let t: Vec<f64> = values.iter().zip(probs).map(|(v, p)| v * p).collect();
                pairwise_sum(&t)
            }
            Kind::PointMass { value } => *value,
        }
    }

    pub fn variance(&self) -> f64 {
        match &self.kind {
            Kind::Normal { sd, .. } => sd * sd,
            Kind::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Kind::Exponential { rate } => 1.0 / (rate * rate),
            Kind::Discrete { values, probs, .. } => {
                let m = self.mean();
                let t: Vec<f64> = values
                    .iter()
                    .zip(probs)
                    .map(|(v, p)| (v - m) * (v - m) * p)
                    .collect();
                pairwise_sum(&t)
            }
            Kind::PointMass { .. } => 0.0,
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// `P(X <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Normal { mean, sd } => std_normal_cdf((t - mean) / sd),
            Kind::Uniform { lo, hi } => ((t - lo) / (hi - lo)).clamp(0.0, 1.0),
            Kind::Exponential { rate } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -(-rate * t).exp_m1()
                }
            }
            Kind::Discrete { values, cum, .. } => {
                let k = values.partition_point(|&v| v <= t);
                if k == 0 {
                    0.0
                } else {
                    cum[k - 1]
                }
            }
            Kind::PointMass { value } => {
                if t >= *value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(X < t)`; differs from [`cdf`](Self::cdf) only at atoms.
    pub fn cdf_below(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Discrete { values, cum, .. } => {
                let k = values.partition_point(|&v| v < t);
                if k == 0 {
                    0.0
                } else {
                    cum[k - 1]
                }
            }
            Kind::PointMass { value } => {
                if t > *value {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.cdf(t),
        }
    }

    /// `P(X > t)`, accurate in the upper tail.
    pub fn sf(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Normal { mean, sd } => std_normal_cdf(-(t - mean) / sd),
            Kind::Exponential { rate } => {
                if t <= 0.0 {
                    1.0
                } else {
                    (-rate * t).exp()
                }
            }
            _ => 1.0 - self.cdf(t),
        }
    }

    /// Density of a continuous distribution; zero for discrete ones.
    pub fn pdf(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Normal { mean, sd } => std_normal_pdf((t - mean) / sd) / sd,
            Kind::Uniform { lo, hi } => {
                if t >= *lo && t <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Kind::Exponential { rate } => {
                if t >= 0.0 {
                    rate * (-rate * t).exp()
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    /// Left-continuous inverse CDF for `p` in (0, 1).
    pub fn quantile(&self, p: f64) -> f64 {
        match &self.kind {
            Kind::Normal { mean, sd } => mean + sd * std_normal_quantile(p),
            Kind::Uniform { lo, hi } => lo + p * (hi - lo),
            Kind::Exponential { rate } => -(-p).ln_1p() / rate,
            Kind::Discrete { values, cum, .. } => {
                let k = cum.partition_point(|&c| c < p);
                values[k.min(values.len() - 1)]
            }
            Kind::PointMass { value } => *value,
        }
    }

    /// `E[max(0, X - t)]`.
    pub fn partial_expectation(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Normal { mean, sd } => sd * std_normal_pe((t - mean) / sd),
            Kind::Uniform { lo, hi } => {
                if t <= *lo {
                    0.5 * (lo + hi) - t
                } else if t >= *hi {
                    0.0
                } else {
                    (hi - t) * (hi - t) / (2.0 * (hi - lo))
                }
            }
            Kind::Exponential { rate } => {
                if t <= 0.0 {
                    1.0 / rate - t
                } else {
                    (-rate * t).exp() / rate
                }
            }
            Kind::Discrete { values, probs, .. } => {
                let start = values.partition_point(|&v| v <= t);
                let terms: Vec<f64> = values[start..]
                    .iter()
                    .zip(&probs[start..])
                    .map(|(v, p)| p * (v - t))
                    .collect();
                pairwise_sum(&terms)
            }
            Kind::PointMass { value } => (value - t).max(0.0),
        }
    }

    /// Exact support bounds (possibly infinite).
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            Kind::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Kind::Uniform { lo, hi } => (*lo, *hi),
            Kind::Exponential { .. } => (0.0, f64::INFINITY),
            Kind::Discrete { values, .. } => (values[0], values[values.len() - 1]),
            Kind::PointMass { value } => (*value, *value),
        }
    }

    /// Finite range carrying all but a negligible tail mass; used as integration limits.
    pub fn numeric_range(&self) -> (f64, f64) {
        match &self.kind {
            Kind::Normal { mean, sd } => (mean - NORMAL_TAIL_Z * sd, mean + NORMAL_TAIL_Z * sd),
            Kind::Exponential { rate } => (0.0, EXP_TAIL / rate),
            _ => self.support(),
        }
    }

    /// Points where the CDF is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Normal { .. } => Vec::new(),
            Kind::Uniform { lo, hi } => vec![*lo, *hi],
            Kind::Exponential { .. } => vec![0.0],
            Kind::Discrete { values, .. } => values.clone(),
            Kind::PointMass { value } => vec![*value],
        }
    }

    /// `(value, probability)` pairs for discrete distributions.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match &self.kind {
            Kind::Discrete { values, probs, .. } => {
                Some(values.iter().copied().zip(probs.iter().copied()).collect())
            }
            Kind::PointMass { value } => Some(vec![(*value, 1.0)]),
            _ => None,
        }
    }

    /// `E[phi(X)]`. Discrete distributions are summed exactly; continuous ones are
    /// integrated over [`numeric_range`](Self::numeric_range) split at the kinks
    /// of the distribution and at `breaks`.
    pub fn expect<F: Fn(f64) -> f64>(&self, phi: F, breaks: &[f64], tol: f64) -> f64 {
        if let Some(atoms) = self.atoms() {
            let t: Vec<f64> = atoms.iter().map(|&(v, p)| p * phi(v)).collect();
            return pairwise_sum(&t);
        }
        let (lo, hi) = self.numeric_range();
        self.expect_on(phi, lo, hi, breaks, tol)
    }

    /// `E[phi(X); lo < X < hi]` for a continuous distribution.
    pub fn expect_on<F: Fn(f64) -> f64>(
        &self,
        phi: F,
        lo: f64,
        hi: f64,
        breaks: &[f64],
        tol: f64,
    ) -> f64 {
        let (rlo, rhi) = self.numeric_range();
        let lo = lo.max(rlo);
        let hi = hi.min(rhi);
        let mut all = self.kinks();
        all.extend_from_slice(breaks);
        integrate_with_breaks(&|x| phi(x) * self.pdf(x), lo, hi, &all, tol)
    }
}

fn default_true() -> bool {
    true
}

/// Consumer beliefs: partial valuation `X` and residual `Y`, so that `u = x + y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuationModel {
    pub x: Distribution,
    pub y: Distribution,
    /// Whether `Y` is independent of `X`. Only independent models are supported.
    #[serde(default = "default_true")]
    pub independent: bool,
}

impl ValuationModel {
    pub fn new(x: Distribution, y: Distribution) -> Self {
        ValuationModel {
            x,
            y,
            independent: true,
        }
    }

    pub fn require_independent(&self) -> Result<()> {
        if self.independent {
            Ok(())
        } else {
            Err(Error::UnsupportedDependence)
        }
    }

    pub fn is_fully_discrete(&self) -> bool {
        self.x.is_discrete() && self.y.is_discrete()
    }

    /// `P(min(Y, cap) <= t)`.
    pub fn capped_y_cdf(&self, t: f64, cap: Option<f64>) -> f64 {
        match cap {
            Some(c) if t >= c => 1.0,
            _ => self.y.cdf(t),
        }
    }

    fn capped_y_cdf_below(&self, t: f64, cap: Option<f64>) -> f64 {
        match cap {
            Some(c) if t > c => 1.0,
            _ => self.y.cdf_below(t),
        }
    }

    /// `E[max(0, min(Y, cap) - t)]`.
    pub fn capped_y_pe(&self, t: f64, cap: Option<f64>) -> f64 {
        match cap {
            Some(c) if t >= c => 0.0,
            Some(c) => self.y.partial_expectation(t) - self.y.partial_expectation(c),
            None => self.y.partial_expectation(t),
        }
    }

    /// `P(X + min(Y, cap) <= w)`; with `cap = None` this is the CDF of `X + Y`.
    pub fn sum_cdf(&self, w: f64, cap: Option<f64>) -> f64 {
        if let Some(atoms) = self.x.atoms() {
            let t: Vec<f64> = atoms
                .iter()
                .map(|&(x, p)| p * self.capped_y_cdf(w - x, cap))
                .collect();
            return pairwise_sum(&t);
        }
        if let Some(atoms) = self.y.atoms() {
            let t: Vec<f64> = atoms
                .iter()
                .map(|&(y, q)| {
                    let v = match cap {
                        Some(c) => y.min(c),
                        None => y,
                    };
                    q * self.x.cdf(w - v)
                })
                .collect();
            return pairwise_sum(&t);
        }
        if cap.is_none() && self.x.is_normal() && self.y.is_normal() {
            let m = self.x.mean() + self.y.mean();
            let s = (self.x.variance() + self.y.variance()).sqrt();
            return std_normal_cdf((w - m) / s);
        }
        let (xlo, xhi) = self.x.numeric_range();
        let breaks: Vec<f64> = self.y.kinks().iter().map(|k| w - k).collect();
        match cap {
            Some(c) => {
                let head = self.x.cdf(w - c);
                let from = (w - c).max(xlo);
                let tail = self
                    .x
                    .expect_on(|x| self.y.cdf(w - x), from, xhi, &breaks, SUM_CDF_TOL);
                (head + tail).min(1.0)
            }
            None => self
                .x
                .expect_on(|x| self.y.cdf(w - x), xlo, xhi, &breaks, SUM_CDF_TOL)
                .min(1.0),
        }
    }

    /// `P(X + min(Y, cap) < w)`.
    pub fn sum_cdf_below(&self, w: f64, cap: Option<f64>) -> f64 {
        if let Some(atoms) = self.x.atoms() {
            let t: Vec<f64> = atoms
                .iter()
                .map(|&(x, p)| p * self.capped_y_cdf_below(w - x, cap))
                .collect();
            return pairwise_sum(&t);
        }
        // X continuous: the sum has no atoms.
        self.sum_cdf(w, cap)
    }

    /// Atoms of `X + min(Y, cap)` when both components are discrete, merged and sorted.
    pub fn sum_atoms(&self, cap: Option<f64>) -> Option<Vec<(f64, f64)>> {
        let xa = self.x.atoms()?;
        let ya = self.y.atoms()?;
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(xa.len() * ya.len());
        for &(x, p) in &xa {
            for &(y, q) in &ya {
                let v = match cap {
                    Some(c) => y.min(c),
                    None => y,
                };
                out.push((x + v, p * q));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(out.len());
        for (v, p) in out {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        Some(merged)
    }

    /// `E[max(0, X + min(Y, cap) - z)]`.
    pub fn sum_partial_expectation(&self, z: f64, cap: Option<f64>) -> f64 {
        if let Some(atoms) = self.x.atoms() {
            let t: Vec<f64> = atoms
                .iter()
                .map(|&(x, p)| p * self.capped_y_pe(z - x, cap))
                .collect();
            return pairwise_sum(&t);
        }
        if let Some(atoms) = self.y.atoms() {
            let t: Vec<f64> = atoms
                .iter()
                .map(|&(y, q)| {
                    let v = match cap {
                        Some(c) => y.min(c),
                        None => y,
                    };
                    q * self.x.partial_expectation(z - v)
                })
                .collect();
            return pairwise_sum(&t);
        }
        if cap.is_none() && z <= self.sum_numeric_range(None).0 {
            return self.x.mean() + self.y.mean() - z;
        }
        if cap.is_none() && self.x.is_normal() && self.y.is_normal() {
            let m = self.x.mean() + self.y.mean();
            let s = (self.x.variance() + self.y.variance()).sqrt();
            return s * std_normal_pe((z - m) / s);
        }
        let mut breaks: Vec<f64> = self.y.kinks().iter().map(|k| z - k).collect();
        if let Some(c) = cap {
            breaks.push(z - c);
        }
        let (xlo, xhi) = self.x.numeric_range();
        let from = match cap {
            Some(c) => (z - c).max(xlo),
            None => xlo,
        };
        let inside = self
            .x
            .expect_on(|x| self.capped_y_pe(z - x, cap), from, xhi, &breaks, SUM_PE_TOL);
        // Upper tail of X beyond the numeric range: the integrand grows linearly there.
        let tail = match cap {
            None => self.x.partial_expectation(xhi),
            Some(_) => 0.0,
        };
        inside + tail
    }

    /// Finite range containing `X + min(Y, cap)` up to negligible mass.
    pub fn sum_numeric_range(&self, cap: Option<f64>) -> (f64, f64) {
        let (xlo, xhi) = self.x.numeric_range();
        let (ylo, yhi) = self.y.numeric_range();
        match cap {
            Some(c) => (xlo + ylo.min(c), xhi + yhi.min(c)),
            None => (xlo + ylo, xhi + yhi),
        }
    }

    /// Exact lower support bound of `X + min(Y, cap)`.
    pub fn sum_lower_bound(&self, cap: Option<f64>) -> f64 {
        let ylo = self.y.support().0;
        let v = match cap {
            Some(c) => ylo.min(c),
            None => ylo,
        };
        self.x.support().0 + v
    }

    /// Breakpoints of `w -> P(X + min(Y, cap) <= w)`: sums of a kink of `X`
    /// and a kink of `min(Y, cap)`. Empty when either side is smooth.
    pub fn sum_kinks(&self, cap: Option<f64>) -> Vec<f64> {
        let mut yk: Vec<f64> = self.y.kinks();
        if let Some(c) = cap {
            yk.retain(|&k| k < c);
            yk.push(c);
        }
        let xk = self.x.kinks();
        let mut out: Vec<f64> = xk
            .iter()
            .flat_map(|&a| yk.iter().map(move |&b| a + b))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}
