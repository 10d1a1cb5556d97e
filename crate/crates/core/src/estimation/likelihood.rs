//! Policy inequalities and the logit-smoothed frequency simulator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::policy::OUTSIDE;
use crate::reservation::{
    ds_xi_by_position, solve_discovery_value, solve_rs_reservation, solve_xi, ProductCount,
    SearchEnvironment, SearchMode,
};
use crate::rng::{derive_seed, RandomStream};

use super::panel::{partial_valuation, ConsumerRecord, Moments, PanelData};

/// Structural parameters. Models ignore the costs they do not have.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Coefficients on x1, x2 and the outside dummy.
    pub beta: [f64; 3],
    #[serde(default)]
    pub c_s: f64,
    /// Discovery cost (SD) or inspection-cost slope in position (DS2).
    #[serde(default)]
    pub c_d: f64,
}

/// Reservation values implied by a parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Reservation {
    /// Inspection offset by discovery position; a single entry unless the model is DS2.
    pub xi: Vec<f64>,
    pub z_d: f64,
    pub z_rs: f64,
}

impl Reservation {
    pub fn compute(
        model: SearchMode,
        p: &Params,
        moments: &Moments,
        num_products: usize,
    ) -> Result<Self> {
        let y = crate::dist::Distribution::std_normal();
        let mut r = Reservation {
            xi: vec![f64::INFINITY],
            z_d: f64::NEG_INFINITY,
            z_rs: f64::INFINITY,
        };
        match model {
            SearchMode::Fi => {}
            SearchMode::Ds1 => r.xi = vec![solve_xi(&y, p.c_s)?],
            SearchMode::Ds2 => {
                r.xi = ds_xi_by_position(&y, p.c_s, p.c_d, num_products)
                    .into_iter()
                    .collect::<Result<_>>()?
            }
            SearchMode::Rs => {
                r.z_rs = solve_rs_reservation(&moments.valuation_model(&p.beta)?, p.c_s)?;
            }
            SearchMode::Sd => {
                r.xi = vec![solve_xi(&y, p.c_s)?];
                let mut env = SearchEnvironment::new(
                    p.c_s,
                    p.c_d,
                    0.0,
                    ProductCount::Finite(num_products),
                );
                env.initial_awareness = 1;
                r.z_d = solve_discovery_value(&env, &moments.valuation_model(&p.beta)?)?;
            }
        }
        Ok(r)
    }

    pub fn xi_at(&self, h: usize) -> f64 {
        self.xi[h.min(self.xi.len() - 1)]
    }
}

fn search_value(rec: &ConsumerRecord, p: &Params, r: &Reservation, j: usize) -> f64 {
    partial_valuation(&p.beta, &rec.chars[j - 1]) + r.xi_at(rec.positions[j - 1])
}

/// Products the consumer must have been aware of when buying under SD with one
/// product per discovery. While products remain, a discovered product is either
/// inspected at once or never, so awareness reaches the deepest inspected
/// position. Inspections out of discovery order reveal that every product was
/// discovered first. Returns the aware uninspected products and whether
/// products were left undiscovered.
pub fn sd_awareness(rec: &ConsumerRecord) -> (Vec<usize>, bool) {
    let pos: Vec<usize> = rec.inspected.iter().map(|&j| rec.positions[j - 1]).collect();
    let exhausted = pos.windows(2).any(|w| w[1] < w[0]);
    let depth = if exhausted {
        usize::MAX
    } else {
        pos.iter().copied().max().unwrap_or(0)
    };
    let aware: Vec<usize> = (1..=rec.num_products())
        .filter(|&j| rec.positions[j - 1] <= depth && !rec.inspected.contains(&j))
        .collect();
    let remaining = rec.positions.iter().any(|&h| h > depth);
    (aware, remaining)
}

/// Inequalities `kappa >= 0` implied by `model`'s optimal policy for one consumer
/// and one draw. `ys[j]` is the residual of option `j` (`ys[0]` the outside option's).
pub fn model_inequalities(
    model: SearchMode,
    rec: &ConsumerRecord,
    ys: &[f64],
    p: &Params,
    r: &Reservation,
) -> Vec<f64> {
    let n = rec.num_products();
    let u = |j: usize| {
        if j == OUTSIDE {
            p.beta[2] + ys[0]
        } else {
            partial_valuation(&p.beta, &rec.chars[j - 1]) + ys[j]
        }
    };
    let star = u(rec.purchased);
    let considered: Vec<usize> = std::iter::once(OUTSIDE).chain(rec.inspected.iter().copied()).collect();
    let best = |set: &[usize]| set.iter().map(|&j| u(j)).fold(f64::NEG_INFINITY, f64::max);
    let mut k = Vec::new();
    if model == SearchMode::Fi {
        k.extend((0..=n).filter(|&j| j != rec.purchased).map(|j| star - u(j)));
        return k;
    }
    let all_inspected = rec.inspected.len() == n;
    let umax = best(&considered);
    match model {
        SearchMode::Ds1 | SearchMode::Ds2 => {
            if !all_inspected {
                for m in (1..=n).filter(|j| !rec.inspected.contains(j)) {
                    k.push(umax - search_value(rec, p, r, m));
                }
            }
            for m in 1..rec.inspected.len() {
                k.push(search_value(rec, p, r, rec.inspected[m]) - best(&considered[..=m]));
            }
        }
        SearchMode::Rs => {
            if !all_inspected {
                k.push(umax - r.z_rs);
            }
            for m in 1..rec.inspected.len() {
                k.push(r.z_rs - best(&considered[..=m]));
            }
        }
        SearchMode::Sd => {
            let (aware, remaining) = sd_awareness(rec);
            k.extend(aware.iter().map(|&j| star - search_value(rec, p, r, j)));
            if remaining {
                k.push(star - r.z_d);
            }
        }
        SearchMode::Fi => unreachable!(),
    }
    k.extend(considered.iter().filter(|&&j| j != rec.purchased).map(|&j| star - u(j)));
    k
}

/// `ln(1 + e^a)` without overflow.
fn softplus(a: f64) -> f64 {
    if a > 30.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

/// Log of the smoothed indicator `1 / (1 + sum_k exp(-lambda kappa_k))`.
pub fn smoothed_log_indicator(kappas: &[f64], lambda: f64) -> f64 {
    if kappas.is_empty() {
        return 0.0;
    }
    let e: Vec<f64> = kappas.iter().map(|k| -lambda * k).collect();
    -softplus(crate::numeric::log_sum_exp(e.iter().copied()))
}

struct Prepared {
    rec: ConsumerRecord,
    /// Options whose residual enters the conditions; `cols[0]` is the outside option.
    cols: Vec<usize>,
    /// Row-major `n_draws x cols.len()` residual draws.
    draws: Vec<f64>,
    uninspected: Vec<usize>,
    sd_aware: Vec<usize>,
    sd_remaining: bool,
}

/// Simulated log-likelihood with residual draws fixed at construction, so
/// repeated evaluations at the same parameters are bit-identical.
pub struct Likelihood {
    model: SearchMode,
    lambda: f64,
    n_draws: usize,
    moments: Moments,
    num_products: usize,
    consumers: Vec<Prepared>,
}

impl Likelihood {
    pub fn new(
        panel: &PanelData,
        model: SearchMode,
        lambda: f64,
        n_draws: usize,
        seed: u64,
    ) -> Result<Self> {
        panel.validate()?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
        }
        if n_draws == 0 {
            return Err(Error::InvalidArgument("n_draws must be at least 1".into()));
        }
        let num_products = panel.consumers.iter().map(|c| c.num_products()).max().unwrap_or(0);
        let base = derive_seed(seed, "likelihood");
        let consumers = crate::par::map_slice(&panel.consumers, |rec| {
            let cols: Vec<usize> = if model == SearchMode::Fi {
                (0..=rec.num_products()).collect()
            } else {
                std::iter::once(OUTSIDE).chain(rec.inspected.iter().copied()).collect()
            };
            let mut s = RandomStream::new(base, rec.consumer_id);
            let draws = (0..n_draws * cols.len()).map(|_| s.next_std_normal()).collect();
            let uninspected = (1..=rec.num_products()).filter(|j| !rec.inspected.contains(j)).collect();
            let (sd_aware, sd_remaining) = sd_awareness(rec);
            Prepared {
                rec: rec.clone(),
                cols,
                draws,
                uninspected,
                sd_aware,
                sd_remaining,
            }
        });
        Ok(Likelihood {
            model,
            lambda,
            n_draws,
            moments: panel.moments(),
            num_products,
            consumers,
        })
    }

    pub fn model(&self) -> SearchMode {
        self.model
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    pub fn reservation(&self, p: &Params) -> Result<Reservation> {
        Reservation::compute(self.model, p, &self.moments, self.num_products)
    }

    /// Residuals of draw `d` for consumer `i`, spread over all options (unused ones are 0).
    pub fn draw(&self, i: usize, d: usize) -> Vec<f64> {
        let c = &self.consumers[i];
        let mut ys = vec![0.0; c.rec.num_products() + 1];
        let w = c.cols.len();
        for (k, &j) in c.cols.iter().enumerate() {
            ys[j] = c.draws[d * w + k];
        }
        ys
    }

    pub fn evaluate(&self, p: &Params) -> Result<f64> {
        let r = self.reservation(p)?;
        let per = crate::par::map_slice(&self.consumers, |c| self.consumer_loglik(c, p, &r));
        Ok(pairwise_sum(&per))
    }

    /// Per-consumer contributions, in panel order.
    pub fn contributions(&self, p: &Params) -> Result<Vec<f64>> {
        let r = self.reservation(p)?;
        Ok(crate::par::map_slice(&self.consumers, |c| self.consumer_loglik(c, p, &r)))
    }

    fn consumer_loglik(&self, c: &Prepared, p: &Params, r: &Reservation) -> f64 {
        let lam = self.lambda;
        let rec = &c.rec;
        let w = c.cols.len();
        let v: Vec<f64> = c
            .cols
            .iter()
            .map(|&j| {
                if j == OUTSIDE {
                    p.beta[2]
                } else {
                    partial_valuation(&p.beta, &rec.chars[j - 1])
                }
            })
            .collect();
        let star_col = c.cols.iter().position(|&j| j == rec.purchased).expect("purchase is considered");
        // Stopping terms against a fixed set of reservation values: sum_m exp(lam (z_m - u)).
        let stop_lse = match self.model {
            SearchMode::Ds1 | SearchMode::Ds2 => crate::numeric::log_sum_exp(
                c.uninspected.iter().map(|&m| lam * search_value(rec, p, r, m)),
            ),
            SearchMode::Rs if !c.uninspected.is_empty() => lam * r.z_rs,
            SearchMode::Sd => {
                let zs = c.sd_aware.iter().map(|&j| lam * search_value(rec, p, r, j));
                let zd = c.sd_remaining.then_some(lam * r.z_d);
                crate::numeric::log_sum_exp(zs.chain(zd).collect::<Vec<_>>())
            }
            _ => f64::NEG_INFINITY,
        };
        let next_z: Vec<f64> = match self.model {
            SearchMode::Ds1 | SearchMode::Ds2 => {
                rec.inspected.iter().map(|&j| search_value(rec, p, r, j)).collect()
            }
            SearchMode::Rs => vec![r.z_rs; rec.inspected.len()],
            _ => Vec::new(),
        };
        let mut terms: Vec<f64> = Vec::with_capacity(w + rec.inspected.len() + 1);
        let mut u = vec![0.0; w];
        let mut per_draw = Vec::with_capacity(self.n_draws);
        for d in 0..self.n_draws {
            let row = &c.draws[d * w..(d + 1) * w];
            for k in 0..w {
                u[k] = v[k] + row[k];
            }
            let star = u[star_col];
            terms.clear();
            for (k, &uk) in u.iter().enumerate() {
                if k != star_col {
                    terms.push(lam * (uk - star));
                }
            }
            match self.model {
                SearchMode::Fi => {}
                SearchMode::Sd => terms.push(stop_lse - lam * star),
                _ => {
                    let umax = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    terms.push(stop_lse - lam * umax);
                    // Continuation after m inspections; columns 0..=m are the outside option and the first m.
                    let mut run = u[0];
                    for m in 1..rec.inspected.len() {
                        run = run.max(u[m]);
                        terms.push(lam * (run - next_z[m]));
                    }
                }
            }
            per_draw.push(-softplus(lse(&terms)));
        }
        lse(&per_draw) - (self.n_draws as f64).ln()
    }
}

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// One-shot evaluation of the smoothed simulated log-likelihood.
pub fn smoothed_likelihood(
    panel: &PanelData,
    model: SearchMode,
    p: &Params,
    lambda: f64,
    n_draws: usize,
    seed: u64,
) -> Result<f64> {
    Likelihood::new(panel, model, lambda, n_draws, seed)?.evaluate(p)
}
