//! Stopping probabilities, demand by position and ranking effects.
//!
//! With one product per discovery and no initially known products, positions
//! coincide with product ids and the sequential modes have closed forms. Other
//! settings, and directed search, are estimated by simulation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dist::ValuationModel;
use crate::error::{Error, Result};
use crate::par;
use crate::policy::{run_policy, ModelDraws};
use crate::reservation::{ProductCount, ReservationBundle, SearchEnvironment, SearchMode};
use crate::rng::RandomStream;

/// Probability that search ends before product `j` is discovered:
/// `1 - P(X + min(Y, xi) < z_d)^(j-1)`.
pub fn stop_prob_sd(m: &ValuationModel, bundle: &ReservationBundle, j: usize) -> f64 {
    let keep = m.sum_cdf_below(bundle.z_d, Some(bundle.xi));
    1.0 - keep.powi(j.saturating_sub(1) as i32)
}

/// Random-search counterpart: `1 - P(X + Y < z_rs)^(j-1)`.
pub fn stop_prob_rs(m: &ValuationModel, z_rs: f64, j: usize) -> f64 {
    let keep = m.sum_cdf_below(z_rs, None);
    1.0 - keep.powi(j.saturating_sub(1) as i32)
}

fn mean_stop(keep: f64, n: usize) -> f64 {
    // sum_{j=1}^{n} keep^(j-1)
    if keep >= 1.0 {
        return n as f64;
    }
    (1.0 - keep.powi(n as i32)) / (1.0 - keep)
}

/// Expected number of products discovered under the index policy (finite `|J|`, no initially known products).
pub fn mean_stop_position_sd(
    env: &SearchEnvironment,
    m: &ValuationModel,
    bundle: &ReservationBundle,
) -> Result<f64> {
    let n = analytic_count(env)?;
    if env.u_0 >= bundle.z_d {
        return Ok(0.0);
    }
    Ok(mean_stop(m.sum_cdf_below(bundle.z_d, Some(bundle.xi)), n))
}

/// Expected number of products revealed under random search.
pub fn mean_stop_position_rs(env: &SearchEnvironment, m: &ValuationModel, z_rs: f64) -> Result<f64> {
    let n = analytic_count(env)?;
    if env.u_0 >= z_rs {
        return Ok(0.0);
    }
    Ok(mean_stop(m.sum_cdf_below(z_rs, None), n))
}

fn analytic_count(env: &SearchEnvironment) -> Result<usize> {
    if env.n_d != 1 || env.initial_awareness != 0 {
        return Err(Error::InvalidEnvironment(
            "closed forms need n_d = 1 and no initially known products".into(),
        ));
    }
    env.num_products
        .finite()
        .ok_or_else(|| Error::InvalidEnvironment("needs a finite product count".into()))
}

/// `P(W >= z) * (P(W < z)^(h-1) - P(W < z)^h)` for the index policy.
pub fn ranking_effect_sd(m: &ValuationModel, bundle: &ReservationBundle, h: usize) -> f64 {
    let keep = m.sum_cdf_below(bundle.z_d, Some(bundle.xi));
    geometric_effect(keep, h)
}

pub fn ranking_effect_rs(m: &ValuationModel, z_rs: f64, h: usize) -> f64 {
    let keep = m.sum_cdf_below(z_rs, None);
    geometric_effect(keep, h)
}

fn geometric_effect(keep: f64, h: usize) -> f64 {
    let stop = 1.0 - keep;
    let a = keep.powi(h as i32 - 1);
    stop * (a - a * keep)
}

/// Cumulative distribution of the per-product stopping value.
struct StopValue<'a> {
    m: &'a ValuationModel,
    cap: Option<f64>,
}

impl StopValue<'_> {
    fn below(&self, w: f64) -> f64 {
        self.m.sum_cdf_below(w, self.cap)
    }

    fn at_most(&self, w: f64) -> f64 {
        self.m.sum_cdf(w, self.cap)
    }

    fn is_continuous(&self) -> bool {
        if !self.m.x.is_discrete() {
            return true;
        }
        self.cap.is_none() && !self.m.y.is_discrete()
    }
}

/// Demand for the product at position `h` when products are bought in the
/// fixed order of discovery: the first product reaching `z` is bought, and if
/// none does, the best one above the outside option is recalled.
fn fixed_order_demand(
    w: &StopValue,
    z: f64,
    u_0: f64,
    n: ProductCount,
    h: usize,
) -> Option<f64> {
    if u_0 >= z {
        return Some(0.0);
    }
    let keep = w.below(z);
    let first = keep.powi(h as i32 - 1) * (1.0 - keep);
    let n = match n {
        ProductCount::Infinite => return Some(first),
        ProductCount::Finite(n) if h > n => return Some(0.0),
        ProductCount::Finite(n) => n,
    };
    let recall = if let Some(atoms) = w.m.sum_atoms(w.cap) {
        // Ties go to the outside option, then to the earliest position.
        atoms
            .iter()
            .filter(|(a, _)| *a > u_0 && *a < z)
            .map(|&(a, p)| p * w.below(a).powi(h as i32 - 1) * w.at_most(a).powi((n - h) as i32))
            .sum()
    } else if w.is_continuous() {
        (keep.powi(n as i32) - w.at_most(u_0).powi(n as i32)).max(0.0) / n as f64
    } else {
        return None;
    };
    Some(first + recall)
}

/// Closed-form demand at position `h` under the index policy, when available.
pub fn demand_sd(
    env: &SearchEnvironment,
    m: &ValuationModel,
    bundle: &ReservationBundle,
    h: usize,
) -> Result<f64> {
    check_position(env, h)?;
    if env.n_d != 1 || env.initial_awareness != 0 {
        return Err(Error::InvalidEnvironment(
            "closed-form demand needs n_d = 1 and no initially known products".into(),
        ));
    }
    let w = StopValue {
        m,
        cap: Some(bundle.xi),
    };
    fixed_order_demand(&w, bundle.z_d, env.u_0, env.num_products, h).ok_or_else(|| {
        Error::InvalidArgument("no closed form for this mix of discrete and continuous valuations".into())
    })
}

/// Closed-form demand at position `h` under random search.
pub fn demand_rs(env: &SearchEnvironment, m: &ValuationModel, z_rs: f64, h: usize) -> Result<f64> {
    check_position(env, h)?;
    let w = StopValue { m, cap: None };
    fixed_order_demand(&w, z_rs, env.u_0, env.num_products, h).ok_or_else(|| {
        Error::InvalidArgument("no closed form for this mix of discrete and continuous valuations".into())
    })
}

fn check_position(env: &SearchEnvironment, h: usize) -> Result<()> {
    if h == 0 {
        return Err(Error::InvalidArgument("positions start at 1".into()));
    }
    if let ProductCount::Finite(n) = env.num_products {
        if h > n {
            return Err(Error::InvalidArgument(format!("position {h} exceeds |J| = {n}")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandCurve {
    pub mode: SearchMode,
    pub num_products: ProductCount,
    pub method: Method,
    /// `demand[h - 1]`: probability of buying a product discovered at position `h`.
    pub demand: Vec<f64>,
    /// `ranking_effect[h - 1] = d(h) - d(h + 1)`.
    pub ranking_effect: Vec<f64>,
    /// Standard errors of `demand`; zero for closed forms.
    pub demand_se: Vec<f64>,
    pub ranking_se: Vec<f64>,
    pub outside: f64,
    /// Demand for initially known products (position 0).
    pub initial: f64,
}

impl DemandCurve {
    pub fn total(&self) -> f64 {
        self.demand.iter().sum::<f64>() + self.outside + self.initial
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    /// Positions reported when `|J|` is infinite.
    pub h_max: usize,
    pub n_mc: usize,
    pub seed: u64,
    /// Simulate even when a closed form exists.
    pub force_mc: bool,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            h_max: 20,
            n_mc: 100_000,
            seed: 1,
            force_mc: false,
        }
    }
}

fn differences(d: &[f64]) -> Vec<f64> {
    (0..d.len())
        .map(|k| d[k] - d.get(k + 1).copied().unwrap_or(0.0))
        .collect()
}

/// Demand and ranking effects by position for `env.mode`.
pub fn demand_curve(
    env: &SearchEnvironment,
    m: &ValuationModel,
    bundle: &ReservationBundle,
    opts: &CurveOptions,
) -> Result<DemandCurve> {
    let plain = env.n_d == 1 && env.initial_awareness == 0;
    let analytic_z = match env.mode {
        SearchMode::Sd if plain => Some((bundle.z_d, Some(bundle.xi))),
        SearchMode::Rs if plain => bundle.z_rs.map(|z| (z, None)),
        _ => None,
    };
    if !opts.force_mc {
        if let Some((z, cap)) = analytic_z {
            let w = StopValue { m, cap };
            let h_max = env.num_products.finite().unwrap_or(opts.h_max);
            let d: Option<Vec<f64>> = (1..=h_max)
                .map(|h| fixed_order_demand(&w, z, env.u_0, env.num_products, h))
                .collect();
            if let Some(d) = d {
                let total: f64 = d.iter().sum();
                let outside = if env.num_products.finite().is_some() {
                    (1.0 - total).max(0.0)
                } else {
                    0.0
                };
                return Ok(DemandCurve {
                    mode: env.mode,
                    num_products: env.num_products,
                    method: Method::Analytic,
                    ranking_effect: differences(&d),
                    demand_se: vec![0.0; d.len()],
                    ranking_se: vec![0.0; d.len()],
                    demand: d,
                    outside,
                    initial: 0.0,
                });
            }
        }
    }
    simulated_curve(env, m, bundle, opts)
}

/// Demand by simulation. Consumer `i` uses stream `(seed, i)`, so curves for
/// different `|J|` or modes share their draws.
pub fn simulated_curve(
    env: &SearchEnvironment,
    m: &ValuationModel,
    bundle: &ReservationBundle,
    opts: &CurveOptions,
) -> Result<DemandCurve> {
    let h_max = env
        .max_position()
        .ok_or_else(|| Error::InvalidEnvironment("simulation needs a finite product count".into()))?;
    if opts.n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be positive".into()));
    }
    // Slot 0: outside option, slot 1: initially known products, slot 1 + h: position h.
    let dim = h_max + 2;
    let failed = std::sync::atomic::AtomicBool::new(false);
    let counts = par::chunked_sums(opts.n_mc, dim, |i, acc| {
        let mut d = ModelDraws::new(m, &RandomStream::new(opts.seed, i as u64));
        match run_policy(env, bundle, env.u_0, &mut d, false) {
            Ok(t) if t.purchased == 0 => acc[0] = 1.0,
            Ok(t) => acc[1 + t.purchased_position] = 1.0,
            Err(_) => failed.store(true, std::sync::atomic::Ordering::Relaxed),
        }
    });
    if failed.into_inner() {
        return Err(Error::InvalidEnvironment("policy simulation failed".into()));
    }
    let n = opts.n_mc as f64;
    let p: Vec<f64> = counts.iter().map(|c| c / n).collect();
    let demand: Vec<f64> = p[2..].to_vec();
    let demand_se = demand.iter().map(|q| (q * (1.0 - q) / n).sqrt()).collect();
    let ranking_effect = differences(&demand);
    let ranking_se = (0..demand.len())
        .map(|k| {
            let a = demand[k];
            let b = demand.get(k + 1).copied().unwrap_or(0.0);
            let r = a - b;
            ((a + b - r * r).max(0.0) / n).sqrt()
        })
        .collect();
    Ok(DemandCurve {
        mode: env.mode,
        num_products: env.num_products,
        method: Method::MonteCarlo,
        demand,
        ranking_effect,
        demand_se,
        ranking_se,
        outside: p[0],
        initial: p[1],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingThreshold {
    /// Smallest position from which `r_SD(h) >= r_RS(h)` holds for all later positions.
    pub h_star: Option<usize>,
    pub stop_sd: f64,
    pub stop_rs: f64,
    pub z_d: f64,
    pub z_rs: f64,
}

/// Position beyond which the index policy's ranking effect dominates random
/// search's, with `c_rs` taken from the environment (default `c_s + c_d`).
pub fn find_ranking_threshold(env: &SearchEnvironment, m: &ValuationModel) -> Result<RankingThreshold> {
    let mut e = env.clone();
    e.mode = SearchMode::Sd;
    let bundle = ReservationBundle::compute(&e, m)?;
    let z_rs = bundle.z_rs.ok_or_else(|| Error::NoBracket {
        what: "z_rs",
        detail: "random search has no reservation value".into(),
    })?;
    let p = 1.0 - m.sum_cdf_below(bundle.z_d, Some(bundle.xi));
    let q = 1.0 - m.sum_cdf_below(z_rs, None);
    let mut out = RankingThreshold {
        h_star: None,
        stop_sd: p,
        stop_rs: q,
        z_d: bundle.z_d,
        z_rs,
    };
    if p <= 0.0 {
        return Ok(out);
    }
    // r_SD(h) / r_RS(h) = (p / q)^2 ((1 - p) / (1 - q))^(h - 1), monotone in h.
    let r_sd = |h: usize| geometric_effect(1.0 - p, h);
    let r_rs = |h: usize| geometric_effect(1.0 - q, h);
    let guess = if q <= p || q >= 1.0 {
        1.0
    } else {
        let num = 2.0 * (q / p).ln();
        let den = ((1.0 - p) / (1.0 - q)).ln();
        1.0 + (num / den).ceil().max(0.0)
    };
    if !guess.is_finite() || guess > 1e7 {
        return Ok(out);
    }
    let mut h = (guess as usize).max(1);
    while h > 1 && r_sd(h - 1) >= r_rs(h - 1) {
        h -= 1;
    }
    while r_sd(h) < r_rs(h) {
        h += 1;
    }
    out.h_star = Some(h);
    Ok(out)
}

/// Writes curves as CSV with columns `mode,h,demand,ranking_effect,se`.
pub fn write_csv<W: Write>(curves: &[DemandCurve], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["mode", "h", "demand", "ranking_effect", "se"])?;
    for c in curves {
        for (k, d) in c.demand.iter().enumerate() {
            wr.write_record([
                c.mode.label().to_string(),
                (k + 1).to_string(),
                d.to_string(),
                c.ranking_effect[k].to_string(),
                c.demand_se[k].to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}
