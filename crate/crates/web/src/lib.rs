//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes a JSON string and returns a JSON string: either
//! `{"ok": ...}` or `{"error": "..."}`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

use sdsearch::demand::{demand_curve, find_ranking_threshold, CurveOptions};
use sdsearch::policy::{simulate_consumer, Action, ModelDraws, ProductSource};
use sdsearch::{Distribution, ProductCount, RandomStream, ReservationBundle, SearchEnvironment, SearchMode, ValuationModel};

/// Normal partial valuations and residuals; the page's sliders map onto these.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoParams {
    pub c_s: f64,
    pub c_d: f64,
    #[serde(default)]
    pub u_0: f64,
    pub num_products: usize,
    #[serde(default)]
    pub x_mean: f64,
    pub x_var: f64,
    pub y_var: f64,
    #[serde(default = "one")]
    pub seed: u64,
}

fn one() -> u64 {
    1
}

impl DemoParams {
    fn parse(s: &str) -> Result<Self, String> {
        serde_json::from_str(s).map_err(|e| e.to_string())
    }

    fn model(&self) -> Result<ValuationModel, String> {
        let x = Distribution::normal(self.x_mean, self.x_var).map_err(|e| e.to_string())?;
        let y = Distribution::normal(0.0, self.y_var).map_err(|e| e.to_string())?;
        Ok(ValuationModel::new(x, y))
    }

    fn env(&self, mode: SearchMode) -> Result<SearchEnvironment, String> {
        let e = SearchEnvironment::new(self.c_s, self.c_d, self.u_0, ProductCount::Finite(self.num_products)).with_mode(mode);
        e.validate().map_err(|e| e.to_string())?;
        Ok(e)
    }
}

fn wrap(r: Result<Value, String>) -> String {
    match r {
        Ok(v) => json!({ "ok": v }).to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

fn reservation(p: &DemoParams) -> Result<Value, String> {
    let b = ReservationBundle::compute(&p.env(SearchMode::Sd)?, &p.model()?).map_err(|e| e.to_string())?;
    Ok(json!({ "xi": b.xi, "Xi": b.big_xi, "z_d": b.z_d, "z_rs": b.z_rs }))
}

#[derive(Serialize)]
struct StepView {
    action: &'static str,
    product: Option<usize>,
    x: Option<f64>,
    y: Option<f64>,
    best_buy: f64,
    best_search: Option<f64>,
    discovery: Option<f64>,
}

fn consumer(p: &DemoParams) -> Result<Value, String> {
    let env = p.env(SearchMode::Sd)?;
    let m = p.model()?;
    let b = ReservationBundle::compute(&env, &m).map_err(|e| e.to_string())?;
    let rs = RandomStream::new(p.seed, 0);
    let t = simulate_consumer(&env, &m, &b, &rs).map_err(|e| e.to_string())?;
    // Same stream, so these are the values the consumer saw.
    let mut d = ModelDraws::new(&m, &rs);
    let mut next = 1;
    let mut steps = Vec::with_capacity(t.steps.len());
    for s in &t.steps {
        let (action, product, x, y) = match s.action {
            Action::Discover => {
                let j = next;
                next += 1;
                ("discover", Some(j), Some(d.x(j)), None)
            }
            Action::Inspect(j) => ("inspect", Some(j), Some(d.x(j)), Some(d.y(j))),
            Action::Buy(0) => ("buy", None, None, None),
            Action::Buy(j) => ("buy", Some(j), Some(d.x(j)), Some(d.y(j))),
        };
        steps.push(StepView {
            action,
            product,
            x,
            y,
            best_buy: s.best_buy,
            best_search: s.best_search,
            discovery: s.discovery,
        });
    }
    Ok(json!({
        "z_d": b.z_d,
        "xi": b.xi,
        "steps": steps,
        "purchased": t.purchased,
        "payoff": t.payoff,
        "search_cost": t.search_cost,
    }))
}

fn demand(p: &DemoParams) -> Result<Value, String> {
    let m = p.model()?;
    let opts = CurveOptions {
        h_max: p.num_products,
        n_mc: 20_000,
        seed: p.seed,
        force_mc: false,
    };
    let mut curves = serde_json::Map::new();
    for mode in [SearchMode::Sd, SearchMode::Rs] {
        let e = p.env(mode)?;
        let b = ReservationBundle::compute(&e, &m).map_err(|e| e.to_string())?;
        let c = demand_curve(&e, &m, &b, &opts).map_err(|e| e.to_string())?;
        curves.insert(
            mode.label().into(),
            json!({ "demand": c.demand, "ranking_effect": c.ranking_effect, "outside": c.outside }),
        );
    }
    let th = find_ranking_threshold(&p.env(SearchMode::Sd)?, &m).map_err(|e| e.to_string())?;
    curves.insert("h_star".into(), json!(th.h_star));
    Ok(Value::Object(curves))
}

/// Reservation values `xi`, `Xi`, `z_d` and `z_rs`.
#[wasm_bindgen]
pub fn reservation_values(params: &str) -> String {
    wrap(DemoParams::parse(params).and_then(|p| reservation(&p)))
}

/// One consumer's search path under the index policy.
#[wasm_bindgen]
pub fn simulate_path(params: &str) -> String {
    wrap(DemoParams::parse(params).and_then(|p| consumer(&p)))
}

/// Demand and ranking effects by position for search and discovery and for random search.
#[wasm_bindgen]
pub fn demand_by_position(params: &str) -> String {
    wrap(DemoParams::parse(params).and_then(|p| demand(&p)))
}
