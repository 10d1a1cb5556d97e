//! Bounds on the discovery index when the mean of the partial valuations is
//! unknown and learned from discovered products.
//!
//! Partial valuations are `N(theta, s^2)` with known `s^2`; beliefs about
//! `theta` are normal. Every value below is translation invariant in the
//! belief mean, so the computations run with prior mean 0 and shift at the end.

use serde::{Deserialize, Serialize};

use crate::dist::{std_normal_cdf, std_normal_pdf, std_normal_pe, Distribution, ValuationModel, NORMAL_TAIL_Z};
use crate::error::{Error, Result};
use crate::numeric::{bracket_decreasing, find_root, gauss_kronrod_with_breaks, RootTolerance};
use crate::reservation::{solve_discovery_value, solve_xi, ProductCount, SearchEnvironment};

/// Normal beliefs about the mean of `X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeliefState {
    pub mean: f64,
    /// Variance of the belief about the mean.
    pub var: f64,
    /// Known variance of `X` around its mean.
    pub sampling_var: f64,
    #[serde(default)]
    pub observations: usize,
}

impl BeliefState {
    pub fn new(mean: f64, var: f64, sampling_var: f64) -> Result<Self> {
        let b = BeliefState {
            mean,
            var,
            sampling_var,
            observations: 0,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() {
            return Err(Error::InvalidArgument("belief mean must be finite".into()));
        }
        if !(self.var.is_finite() && self.var >= 0.0) {
            return Err(Error::InvalidArgument(format!("belief variance must be >= 0, got {}", self.var)));
        }
        if !(self.sampling_var.is_finite() && self.sampling_var > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sampling variance must be > 0, got {}",
                self.sampling_var
            )));
        }
        Ok(())
    }

    /// Predictive distribution of the next partial valuation.
    pub fn predictive(&self) -> Distribution {
        Distribution::normal(self.mean, self.var + self.sampling_var).expect("valid belief")
    }

    /// Weight of a new observation in the posterior mean.
    fn gain(&self) -> f64 {
        self.var / (self.var + self.sampling_var)
    }

    fn posterior_var(&self) -> f64 {
        self.var * self.sampling_var / (self.var + self.sampling_var)
    }
}

/// Conjugate update after observing one partial valuation.
pub fn posterior_update(b: &BeliefState, x: f64) -> BeliefState {
    BeliefState {
        mean: b.mean + b.gain() * (x - b.mean),
        var: b.posterior_var(),
        sampling_var: b.sampling_var,
        observations: b.observations + 1,
    }
}

pub fn posterior_update_all(b: &BeliefState, xs: &[f64]) -> BeliefState {
    xs.iter().fold(b.clone(), |acc, &x| posterior_update(&acc, x))
}

const TOL_INNER: f64 = 1e-13;
const TOL_MID: f64 = 1e-11;
const TOL_OUTER: f64 = 1e-10;

/// `E[phi(X)]` for `X ~ N(mean, sd^2)`.
fn normal_expect<F: Fn(f64) -> f64>(mean: f64, sd: f64, phi: F, breaks: &[f64], tol: f64) -> f64 {
    if sd == 0.0 {
        return phi(mean);
    }
    let mut b: Vec<f64> = [-4.0, -2.0, 0.0, 2.0, 4.0].iter().map(|k| mean + k * sd).collect();
    b.extend_from_slice(breaks);
    let lo = mean - NORMAL_TAIL_Z * sd;
    let hi = mean + NORMAL_TAIL_Z * sd;
    gauss_kronrod_with_breaks(&|x| phi(x) * std_normal_pdf((x - mean) / sd) / sd, lo, hi, &b, tol)
}

/// Shared pieces of the look-ahead and upper-bound computations.
struct Problem<'a> {
    y: &'a Distribution,
    xi: f64,
    c_s: f64,
    c_d: f64,
    s2: f64,
}

impl Problem<'_> {
    /// `E[phi(Y)]`.
    fn y_expect<F: Fn(f64) -> f64>(&self, phi: F, breaks: &[f64], tol: f64) -> f64 {
        if let Some(atoms) = self.y.atoms() {
            return atoms.iter().map(|&(v, p)| p * phi(v)).sum();
        }
        let (lo, hi) = self.y.numeric_range();
        let mut b = self.y.kinks();
        b.extend_from_slice(breaks);
        gauss_kronrod_with_breaks(&|v| phi(v) * self.y.pdf(v), lo, hi, &b, tol)
    }

    /// `E[phi(min(Y, xi))]`.
    fn capped_expect<F: Fn(f64) -> f64>(&self, phi: F, breaks: &[f64], tol: f64) -> f64 {
        if let Some(atoms) = self.y.atoms() {
            return atoms.iter().map(|&(v, p)| p * phi(v.min(self.xi))).sum();
        }
        let (lo, hi) = self.y.numeric_range();
        let top = hi.min(self.xi);
        let mut b = self.y.kinks();
        b.extend_from_slice(breaks);
        let body = gauss_kronrod_with_breaks(&|v| phi(v) * self.y.pdf(v), lo, top, &b, tol);
        body + self.y.sf(self.xi) * phi(self.xi)
    }

    /// `t -> E[max(0, X + min(Y, xi) - t)]` for `X ~ N(0, tau^2)`.
    fn pe_w(&self, tau: f64) -> PeW {
        if let Some(atoms) = self.y.atoms() {
            return PeW::Atoms {
                atoms: atoms.iter().map(|&(v, p)| (v.min(self.xi), p)).collect(),
                tau,
            };
        }
        let (ylo, yhi) = self.y.numeric_range();
        let lo = ylo - NORMAL_TAIL_Z * tau;
        let hi = yhi.min(self.xi) + NORMAL_TAIL_Z * tau;
        let h = (hi - lo) / (PE_TABLE_NODES - 1) as f64;
        let mut vals = Vec::with_capacity(PE_TABLE_NODES);
        let mut ders = Vec::with_capacity(PE_TABLE_NODES);
        for i in 0..PE_TABLE_NODES {
            let t = lo + h * i as f64;
            vals.push(self.capped_expect(|c| tau * std_normal_pe((t - c) / tau), &[], TOL_INNER));
            ders.push(-self.capped_expect(|c| std_normal_cdf((c - t) / tau), &[], TOL_INNER));
        }
        PeW::Table {
            lo,
            h,
            vals,
            ders,
            mean: self.y.mean() - self.c_s,
        }
    }

    /// One-step index for a belief with mean 0 and variance `var`.
    fn z1(&self, var: f64) -> Result<f64> {
        let tau = (var + self.s2).sqrt();
        let pe = self.pe_w(tau);
        self.z1_with(&pe, tau)
    }

    fn z1_with(&self, pe: &PeW, tau: f64) -> Result<f64> {
        let f = |z: f64| pe.eval(z) - self.c_d;
        let center = self.y.mean().min(self.xi);
        let (a, b) = bracket_decreasing(f, center, tau + self.y.sd().max(1e-2), "z_d(1)")?;
        find_root(f, a, b, root_tol(), "z_d(1)")
    }

    /// Value with fallback `v`, one aware product `x`, one discovery left and
    /// belief `(mu, var)`.
    fn v1(&self, v: f64, x: f64, mu: f64, pe: &PeW, z1_post: f64) -> f64 {
        let cont = |u: f64| u + (pe.eval(u - mu) - self.c_d).max(0.0);
        let kink = mu + z1_post;
        let inspect = -self.c_s
            + self.y_expect(|y| cont(v.max(x + y)), &[v - x, kink - x], TOL_MID);
        let discover = -self.c_d
            + self.capped_expect(
                |c| {
                    let m = v.max(x + c);
                    m + pe.eval(m - mu)
                },
                &[v - x],
                TOL_MID,
            );
        v.max(inspect).max(discover)
    }

    /// Two-step look-ahead value for a belief with mean 0 and variance `var`.
    fn z2(&self, var: f64) -> Result<f64> {
        let z1 = self.z1(var)?;
        let tau = (var + self.s2).sqrt();
        let gain = var / (var + self.s2);
        let var1 = var * self.s2 / (var + self.s2);
        let pe_post = self.pe_w((var1 + self.s2).sqrt());
        let z1_post = self.z1_with(&pe_post, (var1 + self.s2).sqrt())?;
        let rhs = |z: f64| {
            -self.c_d
                + normal_expect(0.0, tau, |x| self.v1(z, x, gain * x, &pe_post, z1_post), &[], TOL_OUTER)
                - z
        };
        let (a, b) = bracket_decreasing(rhs, z1, 0.25 * tau, "z_d(2)")?;
        find_root(rhs, a, b, root_tol(), "z_d(2)")
    }

    /// Index when the true mean is revealed right after the next discovery.
    fn upper(&self, var: f64) -> Result<f64> {
        let c0 = self.z1(0.0)?;
        let tau = (var + self.s2).sqrt();
        let gain = var / (var + self.s2);
        let post_sd = (var * self.s2 / (var + self.s2)).sqrt();
        let rhs = |z: f64| {
            let inner = |x: f64| {
                let theta = gain * x;
                self.capped_expect(
                    |c| {
                        let a = z.max(x + c);
                        if post_sd > 0.0 {
                            a + post_sd * std_normal_pe((a - c0 - theta) / post_sd)
                        } else {
                            a.max(theta + c0)
                        }
                    },
                    &[z - x],
                    TOL_MID,
                )
            };
            -self.c_d + normal_expect(0.0, tau, inner, &[], TOL_OUTER) - z
        };
        let (a, b) = bracket_decreasing(rhs, c0, tau, "z_bar")?;
        find_root(rhs, a, b, root_tol(), "z_bar")
    }
}

const PE_TABLE_NODES: usize = 4097;

/// Partial expectation of `X + min(Y, xi)` with normal `X`: exact for discrete
/// `Y`, otherwise a cubic Hermite table (the function is smooth in `t`).
enum PeW {
    Atoms { atoms: Vec<(f64, f64)>, tau: f64 },
    Table { lo: f64, h: f64, vals: Vec<f64>, ders: Vec<f64>, mean: f64 },
}

impl PeW {
    fn eval(&self, t: f64) -> f64 {
        match self {
            PeW::Atoms { atoms, tau } => atoms
                .iter()
                .map(|&(c, p)| p * tau * std_normal_pe((t - c) / tau))
                .sum(),
            PeW::Table { lo, h, vals, ders, mean } => {
                let u = (t - lo) / h;
                if u <= 0.0 {
                    return mean - t;
                }
                let i = u.floor() as usize;
                if i + 1 >= vals.len() {
                    return 0.0;
                }
                let s = u - i as f64;
                let s2 = s * s;
                let s3 = s2 * s;
                (2.0 * s3 - 3.0 * s2 + 1.0) * vals[i]
                    + (s3 - 2.0 * s2 + s) * h * ders[i]
                    + (-2.0 * s3 + 3.0 * s2) * vals[i + 1]
                    + (s3 - s2) * h * ders[i + 1]
            }
        }
    }
}

fn root_tol() -> RootTolerance {
    RootTolerance {
        f_abs: 1e-11,
        ..RootTolerance::default()
    }
}

fn problem<'a>(b: &BeliefState, env: &SearchEnvironment, y: &'a Distribution) -> Result<Problem<'a>> {
    b.validate()?;
    if env.n_d != 1 {
        return Err(Error::InvalidEnvironment("learning bounds assume n_d = 1".into()));
    }
    if !(env.c_s > 0.0 && env.c_d > 0.0) {
        return Err(Error::InvalidEnvironment("costs must be positive".into()));
    }
    Ok(Problem {
        y,
        xi: solve_xi(y, env.c_s)?,
        c_s: env.c_s,
        c_d: env.c_d,
        s2: b.sampling_var,
    })
}

/// Highest look-ahead depth supported.
pub const MAX_LOOKAHEAD: usize = 2;

/// `k`-step look-ahead discovery value: the outside option that leaves the
/// consumer indifferent between stopping and discovering when at most `k - 1`
/// further discoveries follow.
pub fn k_step_lookahead(
    b: &BeliefState,
    env: &SearchEnvironment,
    y: &Distribution,
    k: usize,
) -> Result<f64> {
    let p = problem(b, env, y)?;
    match k {
        1 => {
            let m = ValuationModel::new(b.predictive(), y.clone());
            let mut e = SearchEnvironment::new(env.c_s, env.c_d, 0.0, ProductCount::Infinite);
            e.n_d = 1;
            solve_discovery_value(&e, &m)
        }
        2 => Ok(b.mean + p.z2(b.var)?),
        _ => Err(Error::InvalidArgument(format!(
            "look-ahead depth must be 1..={MAX_LOOKAHEAD}, got {k}"
        ))),
    }
}

/// Upper bound on the discovery index: the value of discovering when the true
/// mean is revealed right after the discovery.
pub fn full_info_upper_bound(b: &BeliefState, env: &SearchEnvironment, y: &Distribution) -> Result<f64> {
    let p = problem(b, env, y)?;
    Ok(b.mean + p.upper(b.var)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsDecision {
    Continue,
    Stop,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub lookahead2: f64,
    pub upper: f64,
}

pub fn bounds(b: &BeliefState, env: &SearchEnvironment, y: &Distribution) -> Result<Bounds> {
    Ok(Bounds {
        lower: k_step_lookahead(b, env, y, 1)?,
        lookahead2: k_step_lookahead(b, env, y, 2)?,
        upper: full_info_upper_bound(b, env, y)?,
    })
}

/// Continue searching when the best available utility is at most the one-step
/// value, stop when it reaches the upper bound.
pub fn bounds_decision(
    b: &BeliefState,
    env: &SearchEnvironment,
    y: &Distribution,
    best_u: f64,
) -> Result<BoundsDecision> {
    let lower = k_step_lookahead(b, env, y, 1)?;
    if best_u <= lower {
        return Ok(BoundsDecision::Continue);
    }
    let upper = full_info_upper_bound(b, env, y)?;
    Ok(if best_u >= upper {
        BoundsDecision::Stop
    } else {
        BoundsDecision::Indeterminate
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn env(c_s: f64, c_d: f64) -> SearchEnvironment {
        SearchEnvironment::new(c_s, c_d, 0.0, ProductCount::Infinite)
    }

    #[test]
    fn conjugate_update() {
        let b = BeliefState::new(0.0, 1.0, 1.0).unwrap();
        let p = posterior_update(&b, 2.0);
        assert_abs_diff_eq!(p.mean, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.var, 0.5, epsilon = 1e-15);
        let d = BeliefState::new(0.3, 0.0, 1.0).unwrap();
        let q = posterior_update(&d, 5.0);
        assert_eq!((q.mean, q.var), (0.3, 0.0));
        let ab = posterior_update_all(&b, &[1.0, -0.5]);
        let ba = posterior_update_all(&b, &[-0.5, 1.0]);
        assert_abs_diff_eq!(ab.mean, ba.mean, epsilon = 1e-15);
        assert_abs_diff_eq!(ab.var, ba.var, epsilon = 1e-15);
        assert!(ab.var < p.var);
    }

    #[test]
    fn one_step_is_baseline_on_predictive() {
        let y = Distribution::normal(0.0, 1.0).unwrap();
        let b = BeliefState::new(0.4, 0.7, 1.3).unwrap();
        let e = env(0.1, 0.05);
        let z1 = k_step_lookahead(&b, &e, &y, 1).unwrap();
        let m = ValuationModel::new(Distribution::normal(0.4, 2.0).unwrap(), y.clone());
        let zd = solve_discovery_value(&e, &m).unwrap();
        assert_abs_diff_eq!(z1, zd, epsilon = 1e-12);
        // the internal solver agrees
        let p = problem(&b, &e, &y).unwrap();
        assert_abs_diff_eq!(0.4 + p.z1(0.7).unwrap(), zd, epsilon = 1e-9);
    }

    #[test]
    fn dogmatic_prior_collapses() {
        let y = Distribution::normal(0.0, 1.0).unwrap();
        let b = BeliefState::new(1.0, 0.0, 1.0).unwrap();
        let e = env(0.1, 0.1);
        let m = ValuationModel::new(Distribution::normal(1.0, 1.0).unwrap(), y.clone());
        let zd = solve_discovery_value(&e, &m).unwrap();
        let bs = bounds(&b, &e, &y).unwrap();
        assert_abs_diff_eq!(bs.lower, zd, epsilon = 1e-9);
        assert_abs_diff_eq!(bs.lookahead2, zd, epsilon = 1e-9);
        assert_abs_diff_eq!(bs.upper, zd, epsilon = 1e-9);
        assert_eq!(bounds_decision(&b, &e, &y, zd - 1e-6).unwrap(), BoundsDecision::Continue);
        assert_eq!(bounds_decision(&b, &e, &y, zd + 1e-6).unwrap(), BoundsDecision::Stop);
    }

    #[test]
    fn sandwich_with_diffuse_prior() {
        let y = Distribution::normal(0.0, 1.0).unwrap();
        let b = BeliefState::new(0.0, 1.0, 1.0).unwrap();
        let e = env(0.1, 0.1);
        let bs = bounds(&b, &e, &y).unwrap();
        assert!(bs.lower <= bs.lookahead2 + 1e-9, "{bs:?}");
        assert!(bs.lookahead2 <= bs.upper + 1e-9, "{bs:?}");
        assert!(bs.upper > bs.lower + 1e-4, "{bs:?}");
        let mid = 0.5 * (bs.lower + bs.upper);
        assert_eq!(bounds_decision(&b, &e, &y, mid).unwrap(), BoundsDecision::Indeterminate);
    }

    #[test]
    fn upper_bound_grows_with_prior_variance() {
        let y = Distribution::discrete(vec![-1.0, 0.0, 1.5], vec![0.3, 0.4, 0.3]).unwrap();
        let e = env(0.05, 0.08);
        let mut last = f64::NEG_INFINITY;
        for var in [0.0, 0.1, 0.5, 1.0, 2.0] {
            let b = BeliefState::new(0.0, var, 0.5).unwrap();
            let u = full_info_upper_bound(&b, &e, &y).unwrap();
            assert!(u >= last - 1e-9, "var {var}: {u} < {last}");
            last = u;
        }
    }

    #[test]
    fn depth_is_capped() {
        let y = Distribution::std_normal();
        let b = BeliefState::new(0.0, 1.0, 1.0).unwrap();
        assert!(k_step_lookahead(&b, &env(0.1, 0.1), &y, 3).is_err());
        assert!(k_step_lookahead(&b, &env(0.1, 0.1), &y, 0).is_err());
        assert!(BeliefState::new(0.0, 1.0, 0.0).is_err());
    }
}
