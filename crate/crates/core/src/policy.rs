//! The index policy and its random-search, directed-search and full-information
//! counterparts, simulated one consumer at a time.
//!
//! Product ids are 1-based in discovery order; id 0 is the outside option.
//! Valuations are drawn lazily from per-consumer streams: the `j`-th partial
//! valuation and the `j`-th residual always come from the `j`-th draw of their
//! stream, so every mode sees identical products for a given seed.

use serde::{Deserialize, Serialize};

use crate::dist::ValuationModel;
use crate::error::{Error, Result};
use crate::numeric::{mean_and_se, pairwise_sum};
use crate::par;
use crate::reservation::{ReservationBundle, SearchEnvironment, SearchMode};
use crate::rng::RandomStream;

pub type ProductId = usize;

pub const OUTSIDE: ProductId = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "id", rename_all = "lowercase")]
pub enum Action {
    Buy(ProductId),
    Inspect(ProductId),
    Discover,
}

/// What a consumer knows at a point in time.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsumerState {
    /// Products whose full utility is known, in the order they became known. Starts with the outside option.
    pub consideration: Vec<ProductId>,
    /// Products whose partial valuation is known but which are not yet inspected.
    pub awareness: Vec<ProductId>,
    /// Indexed by product id; `revealed_x[0]` holds the outside option's utility.
    pub revealed_x: Vec<f64>,
    pub revealed_y: Vec<Option<f64>>,
    pub positions: Vec<usize>,
    /// Id of the next product a discovery would reveal.
    pub next_product: ProductId,
    pub products_remaining: usize,
}

impl ConsumerState {
    pub fn new(u_outside: f64, num_products: usize) -> Self {
        ConsumerState {
            consideration: vec![OUTSIDE],
            awareness: Vec::new(),
            revealed_x: vec![u_outside],
            revealed_y: vec![Some(0.0)],
            positions: vec![0],
            next_product: 1,
            products_remaining: num_products,
        }
    }

    fn ensure(&mut self, id: ProductId) {
        if self.revealed_x.len() <= id {
            self.revealed_x.resize(id + 1, f64::NAN);
            self.revealed_y.resize(id + 1, None);
            self.positions.resize(id + 1, 0);
        }
    }

    /// Adds the next product to the awareness set with partial valuation `x`.
    pub fn reveal_partial(&mut self, x: f64, position: usize) -> ProductId {
        let id = self.next_product;
        self.ensure(id);
        self.revealed_x[id] = x;
        self.positions[id] = position;
        self.awareness.push(id);
        self.next_product += 1;
        self.products_remaining -= 1;
        id
    }

    /// Reveals `y` for an aware product and moves it to the consideration set.
    pub fn reveal_residual(&mut self, id: ProductId, y: f64) {
        let k = self
            .awareness
            .iter()
            .position(|&a| a == id)
            .expect("inspected product must be in the awareness set");
        self.awareness.swap_remove(k);
        self.revealed_y[id] = Some(y);
        self.consideration.push(id);
    }

    pub fn utility(&self, id: ProductId) -> f64 {
        self.revealed_x[id] + self.revealed_y[id].expect("utility of an uninspected product")
    }

    /// Best product in the consideration set (lowest id among ties).
    pub fn best_considered(&self) -> (ProductId, f64) {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for &id in &self.consideration {
            let u = self.utility(id);
            if u > best.1 || (u == best.1 && id < best.0) {
                best = (id, u);
            }
        }
        best
    }

    /// Aware product with the highest search value `x + xi_h` (lowest id among ties).
    pub fn best_aware(&self, bundle: &ReservationBundle) -> Option<(ProductId, f64)> {
        let mut best: Option<(ProductId, f64)> = None;
        for &id in &self.awareness {
            let z = self.revealed_x[id] + bundle.xi_at(self.positions[id]);
            best = match best {
                Some((bid, bz)) if bz > z || (bz == z && bid < id) => Some((bid, bz)),
                _ => Some((id, z)),
            };
        }
        best
    }
}

/// Reservation values compared at one decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    #[serde(flatten)]
    pub action: Action,
    pub best_buy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_search: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discovery: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: SearchMode,
    /// Empty unless steps were recorded.
    pub steps: Vec<Step>,
    pub purchased: ProductId,
    /// Discovery position of the purchased product (0 for the outside option and initially known products).
    pub purchased_position: usize,
    /// Products inspected, in order. Under random search every revealed product counts.
    pub inspected: Vec<ProductId>,
    pub discoveries: usize,
    /// Products whose partial valuation was revealed.
    pub products_seen: usize,
    pub utility: f64,
    pub search_cost: f64,
    pub payoff: f64,
}

impl Trajectory {
    pub fn inspections(&self) -> usize {
        self.inspected.len()
    }
}

/// Highest-ranked action under the index policy of `mode`.
pub fn choose_action(state: &ConsumerState, bundle: &ReservationBundle, mode: SearchMode) -> Action {
    let (buy_id, u) = state.best_considered();
    debug_assert!(buy_id != usize::MAX, "consideration set always holds the outside option");
    match mode {
        SearchMode::Sd | SearchMode::Ds1 | SearchMode::Ds2 => {
            let s = state.best_aware(bundle);
            let zs = s.map_or(f64::NEG_INFINITY, |(_, z)| z);
            let zd = if mode == SearchMode::Sd && state.products_remaining > 0 {
                bundle.z_d
            } else {
                f64::NEG_INFINITY
            };
            if u >= zs && u >= zd {
                Action::Buy(buy_id)
            } else if zs >= zd {
                Action::Inspect(s.unwrap().0)
            } else {
                Action::Discover
            }
        }
        SearchMode::Rs => {
            let z = bundle.z_rs.expect("random search needs z_rs");
            if u >= z || state.products_remaining == 0 {
                Action::Buy(buy_id)
            } else {
                Action::Discover
            }
        }
        SearchMode::Fi => Action::Buy(buy_id),
    }
}

/// Source of product valuations, indexed by 1-based product id.
pub trait ProductSource {
    fn x(&mut self, j: ProductId) -> f64;
    fn y(&mut self, j: ProductId) -> f64;
}

/// Lazily drawn valuations from a model. Draw `j` of each stream is cached, so
/// the order of requests does not matter.
pub struct ModelDraws<'a> {
    model: &'a ValuationModel,
    xs_stream: RandomStream,
    ys_stream: RandomStream,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl<'a> ModelDraws<'a> {
    pub fn new(model: &'a ValuationModel, stream: &RandomStream) -> Self {
        ModelDraws {
            model,
            xs_stream: stream.fork("x"),
            ys_stream: stream.fork("y"),
            xs: Vec::new(),
            ys: Vec::new(),
        }
    }
}

impl ProductSource for ModelDraws<'_> {
    fn x(&mut self, j: ProductId) -> f64 {
        while self.xs.len() < j {
            let v = self.xs_stream.next_draw(&self.model.x);
            self.xs.push(v);
        }
        self.xs[j - 1]
    }

    fn y(&mut self, j: ProductId) -> f64 {
        while self.ys.len() < j {
            let v = self.ys_stream.next_draw(&self.model.y);
            self.ys.push(v);
        }
        self.ys[j - 1]
    }
}

/// Valuations fixed in advance; `xs[j - 1]`, `ys[j - 1]` belong to product `j`.
pub struct FixedProducts<'a> {
    pub xs: &'a [f64],
    pub ys: &'a [f64],
}

impl ProductSource for FixedProducts<'_> {
    fn x(&mut self, j: ProductId) -> f64 {
        self.xs[j - 1]
    }

    fn y(&mut self, j: ProductId) -> f64 {
        self.ys[j - 1]
    }
}

/// Runs one consumer to a purchase. `u_outside` is the outside option's utility.
pub fn run_policy<S: ProductSource>(
    env: &SearchEnvironment,
    bundle: &ReservationBundle,
    u_outside: f64,
    source: &mut S,
    record: bool,
) -> Result<Trajectory> {
    let n = env.num_products.finite().ok_or_else(|| {
        Error::InvalidEnvironment("the simulator needs a finite product count".into())
    })?;
    let mode = env.mode;
    let mut st = ConsumerState::new(u_outside, n);
    let mut steps = Vec::new();
    let mut inspected = Vec::new();
    let mut discoveries = 0;
    let mut cost = 0.0;

    match mode {
        SearchMode::Sd => {
            for _ in 0..env.initial_awareness.min(n) {
                let id = st.next_product;
                let x = source.x(id);
                st.reveal_partial(x, 0);
            }
        }
        SearchMode::Ds1 | SearchMode::Ds2 => {
            for j in 1..=n {
                let x = source.x(j);
                st.reveal_partial(x, env.position_of(j));
            }
        }
        SearchMode::Fi => {
            for j in 1..=n {
                let x = source.x(j);
                let id = st.reveal_partial(x, env.position_of(j));
                let y = source.y(id);
                st.reveal_residual(id, y);
            }
        }
        SearchMode::Rs => {}
    }

    loop {
        let action = choose_action(&st, bundle, mode);
        if record {
            let (_, u) = st.best_considered();
            let best_search = match mode {
                SearchMode::Sd | SearchMode::Ds1 | SearchMode::Ds2 => {
                    st.best_aware(bundle).map(|(_, z)| z)
                }
                _ => None,
            };
            let discovery = match mode {
                SearchMode::Sd if st.products_remaining > 0 => Some(bundle.z_d),
                SearchMode::Rs => bundle.z_rs,
                _ => None,
            };
            steps.push(Step {
                action,
                best_buy: u,
                best_search,
                discovery,
            });
        }
        match action {
            Action::Buy(id) => {
                let utility = st.utility(id);
                let search_cost = cost;
                return Ok(Trajectory {
                    mode,
                    steps,
                    purchased: id,
                    purchased_position: st.positions[id],
                    inspected,
                    discoveries,
                    products_seen: st.next_product - 1,
                    utility,
                    search_cost,
                    payoff: utility - search_cost,
                });
            }
            Action::Inspect(id) => {
                cost += env.inspection_cost(st.positions[id]);
                let y = source.y(id);
                st.reveal_residual(id, y);
                inspected.push(id);
            }
            Action::Discover => {
                discoveries += 1;
                let position = discoveries;
                if mode == SearchMode::Rs {
                    cost += env.rs_cost();
                    let id = st.next_product;
                    let x = source.x(id);
                    st.reveal_partial(x, position);
                    let y = source.y(id);
                    st.reveal_residual(id, y);
                    inspected.push(id);
                } else {
                    cost += env.c_d;
                    let k = env.n_d.min(st.products_remaining);
                    for _ in 0..k {
                        let id = st.next_product;
                        let x = source.x(id);
                        st.reveal_partial(x, position);
                    }
                }
            }
        }
    }
}

/// One simulated consumer drawing valuations from `m` on stream `rs`.
pub fn simulate_consumer(
    env: &SearchEnvironment,
    m: &ValuationModel,
    bundle: &ReservationBundle,
    rs: &RandomStream,
) -> Result<Trajectory> {
    let mut draws = ModelDraws::new(m, rs);
    run_policy(env, bundle, env.u_0, &mut draws, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub mode: SearchMode,
    pub consumers: usize,
    /// Mean number of inspected products.
    pub mean_searches: f64,
    pub sd_searches: f64,
    pub mean_discoveries: f64,
    /// Share of consumers buying an inside product.
    pub purchase_share: f64,
    pub outside_share: f64,
    /// `share_by_position[h]`: share buying an inside product found at position `h`.
    pub share_by_position: Vec<f64>,
    pub mean_payoff: f64,
    pub se_payoff: f64,
    /// Mean number of products whose partial valuation was revealed.
    pub mean_products_seen: f64,
}

pub struct Population {
    pub trajectories: Vec<Trajectory>,
    pub summary: PopulationSummary,
}

pub fn summarize(mode: SearchMode, trajectories: &[Trajectory]) -> PopulationSummary {
    let n = trajectories.len();
    let searches: Vec<f64> = trajectories.iter().map(|t| t.inspections() as f64).collect();
    let discoveries: Vec<f64> = trajectories.iter().map(|t| t.discoveries as f64).collect();
    let payoffs: Vec<f64> = trajectories.iter().map(|t| t.payoff).collect();
    let seen: Vec<f64> = trajectories.iter().map(|t| t.products_seen as f64).collect();
    let inside: Vec<f64> = trajectories
        .iter()
        .map(|t| if t.purchased == OUTSIDE { 0.0 } else { 1.0 })
        .collect();
    let max_pos = trajectories
        .iter()
        .filter(|t| t.purchased != OUTSIDE)
        .map(|t| t.purchased_position)
        .max()
        .map_or(0, |p| p + 1);
    let mut by_pos = Vec::with_capacity(max_pos);
    for h in 0..max_pos {
        let ind: Vec<f64> = trajectories
            .iter()
            .map(|t| {
                if t.purchased != OUTSIDE && t.purchased_position == h {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        by_pos.push(pairwise_sum(&ind) / n as f64);
    }
    let (mean_searches, se_s) = mean_and_se(&searches);
    let sd_searches = if n > 1 { se_s * (n as f64).sqrt() } else { 0.0 };
    let (mean_payoff, se_payoff) = mean_and_se(&payoffs);
    let purchase_share = pairwise_sum(&inside) / n as f64;
    PopulationSummary {
        mode,
        consumers: n,
        mean_searches,
        sd_searches,
        mean_discoveries: pairwise_sum(&discoveries) / n as f64,
        purchase_share,
        outside_share: 1.0 - purchase_share,
        share_by_position: by_pos,
        mean_payoff,
        se_payoff,
        mean_products_seen: pairwise_sum(&seen) / n as f64,
    }
}

fn simulate_many(
    env: &SearchEnvironment,
    m: &ValuationModel,
    bundle: &ReservationBundle,
    n_consumers: usize,
    base_seed: u64,
    record: bool,
) -> Result<Vec<Trajectory>> {
    if n_consumers == 0 {
        return Err(Error::InvalidArgument("need at least one consumer".into()));
    }
    env.validate()?;
    let results = par::map_indexed(n_consumers, |i| {
        let rs = RandomStream::new(base_seed, i as u64);
        let mut draws = ModelDraws::new(m, &rs);
        run_policy(env, bundle, env.u_0, &mut draws, record)
    });
    results.into_iter().collect()
}

/// Simulates `n_consumers` consumers; consumer `i` uses stream `(base_seed, i)`.
pub fn simulate_population(
    env: &SearchEnvironment,
    m: &ValuationModel,
    bundle: &ReservationBundle,
    n_consumers: usize,
    base_seed: u64,
) -> Result<Population> {
    let trajectories = simulate_many(env, m, bundle, n_consumers, base_seed, true)?;
    let summary = summarize(env.mode, &trajectories);
    Ok(Population {
        trajectories,
        summary,
    })
}

/// Like [`simulate_population`] but without keeping per-step records.
pub fn population_summary(
    env: &SearchEnvironment,
    m: &ValuationModel,
    bundle: &ReservationBundle,
    n_consumers: usize,
    base_seed: u64,
) -> Result<PopulationSummary> {
    let trajectories = simulate_many(env, m, bundle, n_consumers, base_seed, false)?;
    Ok(summarize(env.mode, &trajectories))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Distribution;
    use crate::reservation::ProductCount;

    fn bundle(xi: f64, z_d: f64) -> ReservationBundle {
        ReservationBundle {
            xi,
            big_xi: z_d,
            z_d,
            z_rs: None,
            xi_by_position: Vec::new(),
            z_d_by_position: None,
        }
    }

    #[test]
    fn action_examples() {
        let b = bundle(1.0, 3.0);
        let st = ConsumerState::new(5.0, 3);
        assert_eq!(choose_action(&st, &b, SearchMode::Sd), Action::Buy(0));

        let mut st = ConsumerState::new(1.0, 3);
        st.reveal_partial(4.0, 1);
        assert_eq!(choose_action(&st, &b, SearchMode::Sd), Action::Inspect(1));

        let st = ConsumerState::new(1.0, 3);
        assert_eq!(choose_action(&st, &b, SearchMode::Sd), Action::Discover);
    }

    #[test]
    fn ties_prefer_buy_then_inspect() {
        let b = bundle(1.0, 3.0);
        let mut st = ConsumerState::new(3.0, 2);
        st.reveal_partial(2.0, 1);
        assert_eq!(choose_action(&st, &b, SearchMode::Sd), Action::Buy(0));
        let mut st = ConsumerState::new(0.0, 2);
        st.reveal_partial(2.0, 1);
        assert_eq!(choose_action(&st, &b, SearchMode::Sd), Action::Inspect(1));
        let mut st = ConsumerState::new(0.0, 0);
        st.products_remaining = 0;
        assert_eq!(choose_action(&st, &b, SearchMode::Sd), Action::Buy(0));
    }

    #[test]
    fn no_products_buys_outside() {
        let env = SearchEnvironment::new(0.1, 0.1, 0.7, ProductCount::Finite(0));
        let m = ValuationModel::new(Distribution::std_normal(), Distribution::std_normal());
        let b = ReservationBundle::compute(&env, &m).unwrap();
        let t = simulate_consumer(&env, &m, &b, &RandomStream::new(1, 0)).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.steps[0].action, Action::Buy(0));
        assert_eq!(t.payoff, 0.7);
    }

    #[test]
    fn high_outside_option_stops_immediately() {
        let env = SearchEnvironment::new(0.1, 0.1, 10.0, ProductCount::Finite(5));
        let m = ValuationModel::new(Distribution::std_normal(), Distribution::std_normal());
        let b = ReservationBundle::compute(&env, &m).unwrap();
        let t = simulate_consumer(&env, &m, &b, &RandomStream::new(1, 0)).unwrap();
        assert_eq!(t.purchased, 0);
        assert_eq!(t.search_cost, 0.0);
        assert_eq!(t.discoveries, 0);
    }

    #[test]
    fn seeded_runs_repeat() {
        let env = SearchEnvironment::new(0.05, 0.05, 0.0, ProductCount::Finite(10));
        let m = ValuationModel::new(
            Distribution::normal(0.0, 1.0 / 3.0).unwrap(),
            Distribution::normal(0.0, 2.0 / 3.0).unwrap(),
        );
        let b = ReservationBundle::compute(&env, &m).unwrap();
        let rs = RandomStream::new(9, 4);
        assert_eq!(
            simulate_consumer(&env, &m, &b, &rs).unwrap(),
            simulate_consumer(&env, &m, &b, &rs).unwrap()
        );
    }

    #[test]
    fn singleton_population_summary() {
        let env = SearchEnvironment::new(0.05, 0.05, 0.0, ProductCount::Finite(10));
        let m = ValuationModel::new(Distribution::std_normal(), Distribution::std_normal());
        let b = ReservationBundle::compute(&env, &m).unwrap();
        let pop = simulate_population(&env, &m, &b, 1, 3).unwrap();
        let t = &pop.trajectories[0];
        assert_eq!(pop.summary.mean_payoff, t.payoff);
        assert_eq!(pop.summary.mean_searches, t.inspections() as f64);
        let single = simulate_consumer(&env, &m, &b, &RandomStream::new(3, 0)).unwrap();
        assert_eq!(&single, t);
    }
}
