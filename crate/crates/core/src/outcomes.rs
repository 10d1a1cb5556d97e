//! Effective values, eventual purchases and expected payoffs.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dist::ValuationModel;
use crate::error::{Error, Result};
use crate::numeric::integrate_with_breaks;
use crate::par;
use crate::policy::{ModelDraws, ProductId, ProductSource};
use crate::reservation::{solve_xi, ProductCount, ReservationBundle, SearchEnvironment};
use crate::rng::RandomStream;

/// How a product enters the consumer's information set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    /// Fully known at the start (the outside option).
    InitialConsideration,
    /// Partial valuation known at the start.
    InitialAwareness,
    Discovered,
}

/// Lexicographic ranking key `(base, position_bonus, tiebreak)`; remaining ties go to the lower id.
///
/// Products known at the start carry an infinite bonus so that exact ties on
/// `base` resolve the way the policy resolves them (buy, then inspect, before discover).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankKey {
    pub base: f64,
    pub position_bonus: f64,
    pub tiebreak: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveValue {
    pub id: ProductId,
    pub w_tilde: f64,
    pub key: RankKey,
}

impl EffectiveValue {
    /// `Greater` when `self` ranks above `other`.
    pub fn rank_cmp(&self, other: &EffectiveValue) -> Ordering {
        self.key
            .base
            .total_cmp(&other.key.base)
            .then(self.key.position_bonus.total_cmp(&other.key.position_bonus))
            .then(self.key.tiebreak.total_cmp(&other.key.tiebreak))
            .then(other.id.cmp(&self.id))
    }
}

/// The default strictly decreasing position bonus `1 / (1 + h)`.
pub fn default_bonus(h: usize) -> f64 {
    1.0 / (1.0 + h as f64)
}

pub fn effective_value(
    id: ProductId,
    x: f64,
    y: f64,
    position: usize,
    member: Membership,
    bundle: &ReservationBundle,
    bonus: &dyn Fn(usize) -> f64,
) -> EffectiveValue {
    let w_tilde = x + y.min(bundle.xi);
    let key = match member {
        Membership::InitialConsideration => RankKey {
            base: x + y,
            position_bonus: f64::INFINITY,
            tiebreak: 0.0,
        },
        Membership::InitialAwareness => RankKey {
            base: w_tilde,
            position_bonus: f64::INFINITY,
            tiebreak: 0.0,
        },
        Membership::Discovered if w_tilde < bundle.z_d => RankKey {
            base: w_tilde,
            position_bonus: 0.0,
            tiebreak: 0.0,
        },
        Membership::Discovered => RankKey {
            base: bundle.z_d,
            position_bonus: bonus(position),
            tiebreak: w_tilde,
        },
    };
    EffectiveValue { id, w_tilde, key }
}

/// A product as seen by [`eventual_purchase`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: ProductId,
    pub x: f64,
    pub y: f64,
    pub position: usize,
    pub member: Membership,
}

/// The product with the highest effective value.
pub fn eventual_purchase(
    products: &[Candidate],
    bundle: &ReservationBundle,
    bonus: &dyn Fn(usize) -> f64,
) -> ProductId {
    products
        .iter()
        .map(|c| effective_value(c.id, c.x, c.y, c.position, c.member, bundle, bonus))
        .max_by(|a, b| a.rank_cmp(b))
        .expect("at least the outside option")
        .id
}

/// All candidates of a consumer: the outside option plus products `1..=n` from `source`.
pub fn candidates<S: ProductSource>(
    env: &SearchEnvironment,
    u_outside: f64,
    n: usize,
    source: &mut S,
) -> Vec<Candidate> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(Candidate {
        id: 0,
        x: u_outside,
        y: 0.0,
        position: 0,
        member: Membership::InitialConsideration,
    });
    for j in 1..=n {
        let member = if j <= env.initial_awareness {
            Membership::InitialAwareness
        } else {
            Membership::Discovered
        };
        out.push(Candidate {
            id: j,
            x: source.x(j),
            y: source.y(j),
            position: env.position_of(j),
            member,
        });
    }
    out
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(v: f64) -> Self {
        Estimate { mean: v, se: 0.0 }
    }

    pub(crate) fn from_sums(sum: f64, sum_sq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        if n < 2 {
            return Estimate { mean, se: 0.0 };
        }
        let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
        Estimate {
            mean,
            se: (var / nf).sqrt(),
        }
    }
}

fn payoff_path<S: ProductSource>(
    env: &SearchEnvironment,
    n: usize,
    xi: f64,
    cap: Option<f64>,
    source: &mut S,
) -> f64 {
    let mut best = env.u_0;
    for j in 1..=n {
        let w = source.x(j) + source.y(j).min(xi);
        let w = match cap {
            Some(z) if j > env.initial_awareness => w.min(z),
            _ => w,
        };
        best = best.max(w);
    }
    best
}

/// Expected payoff of the optimal policy as `E[max_j W_hat_j]`, with
/// `W_hat = min(W_tilde, z_d)` for discovered products.
///
/// Path `i` uses stream `(seed, i)`, the same stream a simulated consumer `i` uses.
pub fn expected_payoff(
    env: &SearchEnvironment,
    m: &ValuationModel,
    bundle: &ReservationBundle,
    n_mc: usize,
    seed: u64,
) -> Result<Estimate> {
    match env.num_products {
        ProductCount::Infinite => {
            if env.initial_awareness == 0 {
                return Ok(Estimate::exact(env.u_0.max(bundle.z_d)));
            }
            let k = env.initial_awareness;
            let s = par::chunked_sums(n_mc, 2, |i, acc| {
                let mut d = ModelDraws::new(m, &RandomStream::new(seed, i as u64));
                let mut best = env.u_0.max(bundle.z_d);
                for j in 1..=k {
                    best = best.max(d.x(j) + d.y(j).min(bundle.xi));
                }
                acc[0] = best;
                acc[1] = best * best;
            });
            Ok(Estimate::from_sums(s[0], s[1], n_mc))
        }
        ProductCount::Finite(0) => Ok(Estimate::exact(env.u_0)),
        ProductCount::Finite(n) => {
            if n_mc == 0 {
                return Err(Error::InvalidArgument("n_mc must be positive".into()));
            }
            let s = par::chunked_sums(n_mc, 2, |i, acc| {
                let mut d = ModelDraws::new(m, &RandomStream::new(seed, i as u64));
                let v = payoff_path(env, n, bundle.xi, Some(bundle.z_d), &mut d);
                acc[0] = v;
                acc[1] = v * v;
            });
            Ok(Estimate::from_sums(s[0], s[1], n_mc))
        }
    }
}

/// Exact expected payoff by integrating the CDF of the largest effective value.
pub fn expected_payoff_analytic(
    env: &SearchEnvironment,
    m: &ValuationModel,
    bundle: &ReservationBundle,
) -> Result<f64> {
    m.require_independent()?;
    let n = match env.num_products {
        ProductCount::Infinite if env.initial_awareness == 0 => {
            return Ok(env.u_0.max(bundle.z_d))
        }
        ProductCount::Infinite => {
            return Err(Error::InvalidArgument(
                "analytic payoff with initial awareness needs a finite product count".into(),
            ))
        }
        ProductCount::Finite(n) => n,
    };
    let k0 = env.initial_awareness.min(n) as i32;
    let k1 = (n - env.initial_awareness.min(n)) as i32;
    let xi = bundle.xi;
    let zd = bundle.z_d;
    let (_, whi) = m.sum_numeric_range(Some(xi));
    let upper = if k0 > 0 { whi } else { whi.min(zd) };
    if upper <= env.u_0 {
        return Ok(env.u_0);
    }
    let f = |w: f64| {
        let g = m.sum_cdf(w, Some(xi));
        let capped = if w >= zd { 1.0 } else { g };
        1.0 - g.powi(k0) * capped.powi(k1)
    };
    let mut breaks = m.sum_kinks(Some(xi));
    breaks.push(zd);
    Ok(env.u_0 + integrate_with_breaks(&f, env.u_0, upper, &breaks, 1e-10))
}

/// Expected payoff of random search with reservation `z_rs`: `E[max(u_0, max_j min(X_j + Y_j, z_rs))]`.
pub fn expected_payoff_rs_analytic(
    env: &SearchEnvironment,
    m: &ValuationModel,
    z_rs: f64,
) -> Result<f64> {
    m.require_independent()?;
    let n = env.num_products.finite().ok_or_else(|| {
        Error::InvalidArgument("random-search payoff needs a finite product count".into())
    })?;
    if z_rs <= env.u_0 || n == 0 {
        return Ok(env.u_0);
    }
    let f = |w: f64| 1.0 - m.sum_cdf(w, None).powi(n as i32);
    let breaks = m.sum_kinks(None);
    Ok(env.u_0 + integrate_with_breaks(&f, env.u_0, z_rs, &breaks, 1e-10))
}

/// `p_SD - p_DS` on paired draws, where directed search pays `c_s + h * c_d`
/// to inspect a product at position `h`. `c_d = 0` is allowed and removes the
/// discovery cap.
pub fn payoff_diff_sd_ds(
    env: &SearchEnvironment,
    m: &ValuationModel,
    n_mc: usize,
    seed: u64,
) -> Result<Estimate> {
    m.require_independent()?;
    let n = env.num_products.finite().ok_or_else(|| {
        Error::InvalidArgument("payoff comparison needs a finite product count".into())
    })?;
    if !(env.c_s > 0.0 && env.c_d >= 0.0) {
        return Err(Error::InvalidEnvironment("need c_s > 0 and c_d >= 0".into()));
    }
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be positive".into()));
    }
    let xi = solve_xi(&m.y, env.c_s)?;
    let z_d = if env.c_d > 0.0 {
        let mut e = env.clone();
        e.mode = crate::reservation::SearchMode::Sd;
        Some(crate::reservation::solve_discovery_value(&e, m)?)
    } else {
        None
    };
    let h_max = env.max_position().unwrap_or(0);
    let xi_h: Vec<f64> = (0..=h_max)
        .map(|h| solve_xi(&m.y, env.c_s + h as f64 * env.c_d))
        .collect::<Result<Vec<f64>>>()?;
    let s = par::chunked_sums(n_mc, 2, |i, acc| {
        let mut d = ModelDraws::new(m, &RandomStream::new(seed, i as u64));
        let sd = payoff_path(env, n, xi, z_d, &mut d);
        let mut ds = env.u_0;
        for j in 1..=n {
            ds = ds.max(d.x(j) + d.y(j).min(xi_h[env.position_of(j)]));
        }
        let diff = sd - ds;
        acc[0] = diff;
        acc[1] = diff * diff;
    });
    Ok(Estimate::from_sums(s[0], s[1], n_mc))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// Largest product count at which the inspection-cost cut still wins
    /// (0 when the discovery-cost cut already wins with one product). `None`
    /// if the discovery-cost cut never wins up to `n_max`.
    pub n_star: Option<usize>,
    /// `diffs[J - 1]`: payoff with `c_d - delta` minus payoff with `c_s - delta`, for `J = 1..=n_max`.
    pub diffs: Vec<Estimate>,
    /// Product counts above the threshold where the sign flips back.
    pub violations: Vec<usize>,
    pub monotone: bool,
}

/// Locates the smallest product count at which lowering `c_d` by `delta` is
/// worth strictly more than lowering `c_s` by `delta`.
pub fn welfare_threshold_n_star(
    env: &SearchEnvironment,
    m: &ValuationModel,
    delta: f64,
    n_max: usize,
    n_mc: usize,
    seed: u64,
) -> Result<ThresholdReport> {
    if env.n_d != 1 {
        return Err(Error::InvalidEnvironment("the threshold search assumes n_d = 1".into()));
    }
    if !(delta > 0.0 && delta < env.c_s && delta < env.c_d) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, min(c_s, c_d)), got {delta}"
        )));
    }
    if n_max == 0 || n_mc == 0 {
        return Err(Error::InvalidArgument("n_max and n_mc must be positive".into()));
    }
    let mut cheap_s = env.clone();
    cheap_s.c_s -= delta;
    cheap_s.num_products = ProductCount::Infinite;
    let mut cheap_d = env.clone();
    cheap_d.c_d -= delta;
    cheap_d.num_products = ProductCount::Infinite;
    let xi_s = solve_xi(&m.y, cheap_s.c_s)?;
    let zd_s = crate::reservation::solve_discovery_value(&cheap_s, m)?;
    let xi_d = solve_xi(&m.y, cheap_d.c_s)?;
    let zd_d = crate::reservation::solve_discovery_value(&cheap_d, m)?;
    let k0 = env.initial_awareness;
    let s = par::chunked_sums(n_mc, 2 * n_max, |i, acc| {
        let mut d = ModelDraws::new(m, &RandomStream::new(seed, i as u64));
        let mut best_s = env.u_0;
        let mut best_d = env.u_0;
        for j in 1..=n_max {
            let (x, y) = (d.x(j), d.y(j));
            let mut ws = x + y.min(xi_s);
            let mut wd = x + y.min(xi_d);
            if j > k0 {
                ws = ws.min(zd_s);
                wd = wd.min(zd_d);
            }
            best_s = best_s.max(ws);
            best_d = best_d.max(wd);
            let diff = best_d - best_s;
            acc[2 * (j - 1)] = diff;
            acc[2 * (j - 1) + 1] = diff * diff;
        }
    });
    let diffs: Vec<Estimate> = (0..n_max)
        .map(|k| Estimate::from_sums(s[2 * k], s[2 * k + 1], n_mc))
        .collect();
    let first = diffs.iter().position(|e| e.mean > 0.0);
    let (n_star, violations) = match first {
        Some(k) => {
            let v: Vec<usize> = (k + 1..n_max)
                .filter(|&i| diffs[i].mean <= 0.0)
                .map(|i| i + 1)
                .collect();
            (Some(k), v)
        }
        None => (None, Vec::new()),
    };
    Ok(ThresholdReport {
        n_star,
        monotone: violations.is_empty(),
        diffs,
        violations,
    })
}
