//! Simulated-panel generation, smoothed simulated maximum likelihood for the
//! SD, DS1, DS2, RS and FI models, and counterfactual simulation.

pub mod likelihood;
pub mod optim;
pub mod panel;

use serde::{Deserialize, Serialize};

pub use likelihood::{model_inequalities, smoothed_likelihood, Likelihood, Params, Reservation};
pub use panel::{simulate_panel, ConsumerRecord, DgpConfig, Moments, PanelData};

use crate::error::{Error, Result};
use crate::policy::{run_policy, FixedProducts, OUTSIDE};
use crate::reservation::{ProductCount, ReservationBundle, SearchEnvironment, SearchMode};
use crate::rng::{derive_seed, RandomStream};
use optim::{nelder_mead, NelderMeadResult};
use panel::{partial_valuation, PRICE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationConfig {
    pub model: SearchMode,
    /// Logistic smoothing parameter.
    pub lambda: f64,
    /// Simulation draws per consumer.
    pub n_draws: usize,
    pub max_iter: usize,
    /// Additional Nelder–Mead runs started from perturbations of the best point.
    pub restarts: usize,
    pub simplex_scale: f64,
    /// Simplex diameter at which a run stops.
    pub tol: f64,
    pub seed: u64,
    pub start: Option<Params>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            model: SearchMode::Ds1,
            lambda: 10.0,
            n_draws: 500,
            max_iter: 2000,
            restarts: 2,
            simplex_scale: 0.5,
            tol: 1e-6,
            seed: 1,
            start: None,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.n_draws == 0 {
            return bad("n_draws must be at least 1".into());
        }
        if !(self.simplex_scale.is_finite() && self.simplex_scale > 0.0) {
            return bad("simplex_scale must be positive".into());
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return bad("tol must be positive".into());
        }
        if let Some(p) = &self.start {
            if p.beta.iter().any(|b| !b.is_finite()) {
                return bad("start beta must be finite".into());
            }
            if has_c_s(self.model) && !(p.c_s > 0.0) || has_c_d(self.model) && !(p.c_d > 0.0) {
                return bad("start costs must be positive".into());
            }
        }
        Ok(())
    }
}

fn has_c_s(m: SearchMode) -> bool {
    m != SearchMode::Fi
}

fn has_c_d(m: SearchMode) -> bool {
    matches!(m, SearchMode::Sd | SearchMode::Ds2)
}

/// Unconstrained coordinates: the three coefficients, then log costs.
fn to_theta(m: SearchMode, p: &Params) -> Vec<f64> {
    let mut t = p.beta.to_vec();
    if has_c_s(m) {
        t.push(p.c_s.ln());
    }
    if has_c_d(m) {
        t.push(p.c_d.ln());
    }
    t
}

fn from_theta(m: SearchMode, t: &[f64]) -> Params {
    let mut p = Params {
        beta: [t[0], t[1], t[2]],
        c_s: 0.0,
        c_d: 0.0,
    };
    let mut k = 3;
    if has_c_s(m) {
        p.c_s = t[k].exp();
        k += 1;
    }
    if has_c_d(m) {
        p.c_d = t[k].exp();
    }
    p
}

/// Coefficients and costs relative to the absolute price coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub beta1: f64,
    pub beta3: f64,
    pub c_s: Option<f64>,
    pub c_d: Option<f64>,
}

impl Ratios {
    pub fn of(m: SearchMode, p: &Params) -> Self {
        let s = p.beta[PRICE].abs();
        Ratios {
            beta1: p.beta[0] / s,
            beta3: p.beta[2] / s,
            c_s: has_c_s(m).then(|| p.c_s / s),
            c_d: has_c_d(m).then(|| p.c_d / s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub model: SearchMode,
    pub params: Params,
    pub log_likelihood: f64,
    pub ratios: Ratios,
    /// One entry per Nelder–Mead run; `x` and `f` are in log-cost coordinates and negative log-likelihood.
    pub runs: Vec<NelderMeadResult>,
    pub converged: bool,
}

fn default_start(m: SearchMode) -> Params {
    Params {
        beta: [1.0, -1.0, 1.0],
        c_s: if has_c_s(m) { 0.1 } else { 0.0 },
        c_d: if has_c_d(m) { 0.1 } else { 0.0 },
    }
}

/// Maximises the smoothed simulated likelihood with multi-start Nelder–Mead.
pub fn estimate(panel: &PanelData, cfg: &EstimationConfig) -> Result<EstimationResult> {
    cfg.validate()?;
    let lik = Likelihood::new(panel, cfg.model, cfg.lambda, cfg.n_draws, cfg.seed)?;
    let m = cfg.model;
    let objective = |t: &[f64]| match lik.evaluate(&from_theta(m, t)) {
        Ok(v) if v.is_finite() => -v,
        _ => f64::INFINITY,
    };
    let start = cfg.start.clone().unwrap_or_else(|| default_start(m));
    let mut x0 = to_theta(m, &start);
    if !objective(&x0).is_finite() {
        return Err(Error::InvalidArgument("likelihood is not finite at the start point".into()));
    }
    let mut jitter = RandomStream::new(derive_seed(cfg.seed, "restarts"), 0);
    let mut runs: Vec<NelderMeadResult> = Vec::new();
    for r in 0..=cfg.restarts {
        if r > 0 {
            let best = runs.iter().min_by(|a, b| a.f.total_cmp(&b.f)).unwrap();
            x0 = best.x.iter().map(|v| v + cfg.simplex_scale * jitter.next_std_normal()).collect();
        }
        runs.push(nelder_mead(objective, &x0, cfg.simplex_scale, cfg.tol, cfg.max_iter));
    }
    let best = runs.iter().min_by(|a, b| a.f.total_cmp(&b.f)).unwrap();
    if !best.f.is_finite() {
        return Err(Error::NoConvergence("simulated maximum likelihood"));
    }
    let params = from_theta(m, &best.x);
    Ok(EstimationResult {
        model: m,
        ratios: Ratios::of(m, &params),
        log_likelihood: -best.f,
        converged: best.converged,
        params,
        runs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Baseline,
    /// All search costs set to zero: every model becomes full information.
    RemoveCosts,
    /// The price of the product listed at `rank` (1-based product id) is multiplied by `factor`.
    PriceCut { rank: usize, factor: f64 },
}

impl Scenario {
    pub fn price_cut_fifth() -> Self {
        Scenario::PriceCut {
            rank: 5,
            factor: 0.99,
        }
    }
}

/// Averages over simulated search paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Consumer surplus: utility of the purchase net of search costs.
    pub cs: f64,
    pub searches: f64,
    pub purchase_share: f64,
    /// `demand[j]` is the share buying product `j`; `demand[0]` is the outside option.
    pub demand: Vec<f64>,
}

impl Outcome {
    pub fn d(&self, j: usize) -> f64 {
        self.demand.get(j).copied().unwrap_or(0.0)
    }
}

fn model_environment(model: SearchMode, p: &Params, n: usize) -> SearchEnvironment {
    let mut env = SearchEnvironment::new(p.c_s, p.c_d, p.beta[2], ProductCount::Finite(n)).with_mode(model);
    env.initial_awareness = 1;
    if model == SearchMode::Ds2 {
        env.ds_cost_slope = p.c_d;
    }
    if model == SearchMode::Rs {
        env.rs_cost = Some(p.c_s);
    }
    env
}

fn model_bundle(model: SearchMode, r: &Reservation) -> ReservationBundle {
    ReservationBundle {
        xi: r.xi[0],
        big_xi: f64::NAN,
        z_d: r.z_d,
        z_rs: Some(r.z_rs),
        xi_by_position: if model == SearchMode::Ds2 { r.xi.clone() } else { Vec::new() },
        z_d_by_position: None,
    }
}

/// Simulates `paths` search paths per consumer under `model` at `p`, with the
/// characteristics of `panel` altered by `scenario`. The residual draws of
/// path `k` of a consumer depend only on `(seed, consumer_id, k)`.
pub fn simulate_outcomes(
    panel: &PanelData,
    model: SearchMode,
    p: &Params,
    moments: &Moments,
    scenario: &Scenario,
    paths: usize,
    seed: u64,
) -> Result<Outcome> {
    panel.validate()?;
    if paths == 0 || paths >= 1 << 24 {
        return Err(Error::InvalidArgument(format!("paths must be in 1..2^24, got {paths}")));
    }
    let n_max = panel.consumers.iter().map(|c| c.num_products()).max().unwrap();
    let run_model = if *scenario == Scenario::RemoveCosts { SearchMode::Fi } else { model };
    let r = Reservation::compute(run_model, p, moments, n_max)?;
    let bundle = model_bundle(run_model, &r);
    let mut consumers = panel.consumers.clone();
    if let Scenario::PriceCut { rank, factor } = scenario {
        if !(factor.is_finite() && *factor > 0.0) || *rank == 0 {
            return Err(Error::InvalidArgument("price cut needs rank >= 1 and factor > 0".into()));
        }
        for c in &mut consumers {
            if let Some(ch) = c.chars.get_mut(rank - 1) {
                ch[PRICE] *= factor;
            }
        }
    }
    let envs: Vec<SearchEnvironment> = (0..=n_max).map(|n| model_environment(run_model, p, n)).collect();
    for c in &consumers {
        let env = &envs[c.num_products()];
        if c.positions.iter().enumerate().any(|(i, &h)| h != env.position_of(i + 1)) {
            return Err(Error::InvalidPanel(format!(
                "consumer {}: simulation assumes one initially known product and one product per discovery",
                c.consumer_id
            )));
        }
    }
    let xs: Vec<Vec<f64>> = consumers
        .iter()
        .map(|c| c.chars.iter().map(|ch| partial_valuation(&p.beta, ch)).collect())
        .collect();
    let base = derive_seed(seed, "paths");
    let dim = 3 + n_max;
    let total = consumers.len() * paths;
    let failed = std::sync::atomic::AtomicBool::new(false);
    let sums = crate::par::chunked_sums(total, dim, |i, acc| {
        let (ci, k) = (i / paths, i % paths);
        let c = &consumers[ci];
        let n = c.num_products();
        let mut s = RandomStream::new(base, (c.consumer_id << 24) | k as u64);
        let ys: Vec<f64> = (0..=n).map(|_| s.next_std_normal()).collect();
        let mut src = FixedProducts {
            xs: &xs[ci],
            ys: &ys[1..],
        };
        match run_policy(&envs[n], &bundle, p.beta[2] + ys[0], &mut src, false) {
            Ok(t) => {
                acc[0] = t.payoff;
                acc[1] = t.inspections() as f64;
                acc[2 + t.purchased] = 1.0;
            }
            Err(_) => failed.store(true, std::sync::atomic::Ordering::Relaxed),
        }
    });
    if failed.into_inner() {
        return Err(Error::InvalidArgument("policy simulation failed".into()));
    }
    let t = total as f64;
    let demand: Vec<f64> = sums[2..].iter().map(|v| v / t).collect();
    Ok(Outcome {
        cs: sums[0] / t,
        searches: sums[1] / t,
        purchase_share: 1.0 - demand[OUTSIDE],
        demand,
    })
}

/// Percentage changes of a scenario against the baseline, on common draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSummary {
    pub model: SearchMode,
    pub scenario: Scenario,
    pub baseline: Outcome,
    pub counterfactual: Outcome,
    pub delta_cs: f64,
    pub delta_d0: f64,
    pub delta_d1: f64,
    pub delta_d5: f64,
}

fn pct(base: f64, new: f64) -> f64 {
    if base == new {
        0.0
    } else {
        100.0 * (new - base) / base.abs()
    }
}

pub fn counterfactual(
    panel: &PanelData,
    model: SearchMode,
    p: &Params,
    moments: &Moments,
    scenario: &Scenario,
    paths: usize,
    seed: u64,
) -> Result<CounterfactualSummary> {
    let baseline = simulate_outcomes(panel, model, p, moments, &Scenario::Baseline, paths, seed)?;
    let counterfactual = simulate_outcomes(panel, model, p, moments, scenario, paths, seed)?;
    Ok(compare(model, scenario, baseline, counterfactual))
}

pub fn compare(
    model: SearchMode,
    scenario: &Scenario,
    baseline: Outcome,
    counterfactual: Outcome,
) -> CounterfactualSummary {
    CounterfactualSummary {
        model,
        scenario: scenario.clone(),
        delta_cs: pct(baseline.cs, counterfactual.cs),
        delta_d0: pct(baseline.d(OUTSIDE), counterfactual.d(OUTSIDE)),
        delta_d1: pct(baseline.d(1), counterfactual.d(1)),
        delta_d5: pct(baseline.d(5), counterfactual.d(5)),
        baseline,
        counterfactual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_roundtrip() {
        for m in [SearchMode::Sd, SearchMode::Ds1, SearchMode::Ds2, SearchMode::Rs, SearchMode::Fi] {
            let p = Params {
                beta: [0.3, -2.0, 1.5],
                c_s: if has_c_s(m) { 0.07 } else { 0.0 },
                c_d: if has_c_d(m) { 0.02 } else { 0.0 },
            };
            let q = from_theta(m, &to_theta(m, &p));
            assert!((q.c_s - p.c_s).abs() < 1e-15 && (q.c_d - p.c_d).abs() < 1e-15);
            assert_eq!(q.beta, p.beta);
        }
    }

    #[test]
    fn remove_costs_under_full_information_changes_nothing() {
        let dgp = DgpConfig::default();
        let panel = simulate_panel(&dgp, 30, 1).unwrap();
        let p = Params {
            beta: [0.9, -0.7, 4.0],
            c_s: 0.0,
            c_d: 0.0,
        };
        let s = counterfactual(&panel, SearchMode::Fi, &p, &panel.moments(), &Scenario::RemoveCosts, 200, 3)
            .unwrap();
        assert_eq!((s.delta_cs, s.delta_d0, s.delta_d1, s.delta_d5), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn baseline_reproduces_generating_process() {
        // Simulated paths at the true parameters match the generating simulator's behaviour.
        let dgp = DgpConfig::default();
        let panel = simulate_panel(&dgp, 300, 8).unwrap();
        let p = Params {
            beta: dgp.beta,
            c_s: dgp.c_s,
            c_d: dgp.c_d,
        };
        let o = simulate_outcomes(&panel, SearchMode::Sd, &p, &dgp.moments(), &Scenario::Baseline, 200, 1)
            .unwrap();
        assert!((o.searches - panel.mean_searches()).abs() < 0.15, "{} vs {}", o.searches, panel.mean_searches());
        assert!((o.purchase_share - panel.purchase_share()).abs() < 0.06);
        let total: f64 = o.demand.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fi_recovers_its_own_coefficients() {
        let dgp = DgpConfig {
            mode: SearchMode::Fi,
            ..DgpConfig::default()
        };
        let panel = simulate_panel(&dgp, 400, 21).unwrap();
        let cfg = EstimationConfig {
            model: SearchMode::Fi,
            n_draws: 100,
            restarts: 0,
            tol: 1e-4,
            ..EstimationConfig::default()
        };
        let r = estimate(&panel, &cfg).unwrap();
        let q = &r.ratios;
        assert!((q.beta1 - 1.0).abs() < 0.1, "{r:?}");
        assert!((q.beta3 - 3.5).abs() < 0.35, "{r:?}");
    }
}
