//! Reservation values: the search value offset `xi`, the discovery value `z_d`,
//! the random-search reservation `z_rs` and position-specific values for
//! directed search.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dist::{Distribution, ValuationModel};
use crate::error::{Error, Result};
use crate::numeric::{bracket_decreasing, find_root, integrate_with_breaks, RootTolerance};

const QD_TOL: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Search and discovery.
    Sd,
    /// Random search: products are revealed fully, one at a time, in position order.
    Rs,
    /// Directed search with a position-independent inspection cost.
    Ds1,
    /// Directed search with inspection cost `c_s + h * ds_cost_slope`.
    Ds2,
    /// Full information.
    Fi,
}

impl SearchMode {
    pub fn is_directed(self) -> bool {
        matches!(self, SearchMode::Ds1 | SearchMode::Ds2)
    }

    pub fn label(self) -> &'static str {
        match self {
            SearchMode::Sd => "sd",
            SearchMode::Rs => "rs",
            SearchMode::Ds1 => "ds1",
            SearchMode::Ds2 => "ds2",
            SearchMode::Fi => "fi",
        }
    }
}

impl std::str::FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sd" => Ok(SearchMode::Sd),
            "rs" => Ok(SearchMode::Rs),
            "ds1" => Ok(SearchMode::Ds1),
            "ds2" => Ok(SearchMode::Ds2),
            "fi" => Ok(SearchMode::Fi),
            other => Err(Error::InvalidArgument(format!("unknown search mode '{other}'"))),
        }
    }
}

/// Number of products beyond the outside option.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProductCount {
    Finite(usize),
    Infinite,
}

impl ProductCount {
    pub fn finite(self) -> Option<usize> {
        match self {
            ProductCount::Finite(n) => Some(n),
            ProductCount::Infinite => None,
        }
    }
}

impl Serialize for ProductCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ProductCount::Finite(n) => s.serialize_u64(*n as u64),
            ProductCount::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for ProductCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(u64),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(n) => Ok(ProductCount::Finite(n as usize)),
            Repr::S(s) if s == "infinite" => Ok(ProductCount::Infinite),
            Repr::S(s) => Err(serde::de::Error::custom(format!(
                "num_products must be a count or \"infinite\", got \"{s}\""
            ))),
        }
    }
}

fn one() -> usize {
    1
}

fn sd_mode() -> SearchMode {
    SearchMode::Sd
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchEnvironment {
    /// Products revealed per discovery.
    #[serde(default = "one")]
    pub n_d: usize,
    pub c_s: f64,
    pub c_d: f64,
    /// Utility of the outside option.
    #[serde(default)]
    pub u_0: f64,
    pub num_products: ProductCount,
    /// Belief that no further products exist. Carried along; the optimal policy does not depend on it.
    #[serde(default)]
    pub q: f64,
    #[serde(default = "sd_mode")]
    pub mode: SearchMode,
    /// Slope of the directed-search cost schedule `c_s + h * slope`.
    #[serde(default)]
    pub ds_cost_slope: f64,
    /// Products the consumer is aware of before the first discovery (positions 1..=k).
    #[serde(default)]
    pub initial_awareness: usize,
    /// Cost of revealing one product under random search; defaults to `c_s + c_d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rs_cost: Option<f64>,
}

impl SearchEnvironment {
    pub fn new(c_s: f64, c_d: f64, u_0: f64, num_products: ProductCount) -> Self {
        SearchEnvironment {
            n_d: 1,
            c_s,
            c_d,
            u_0,
            num_products,
            q: 0.0,
            mode: SearchMode::Sd,
            ds_cost_slope: 0.0,
            initial_awareness: 0,
            rs_cost: None,
        }
    }

    pub fn with_mode(mut self, mode: SearchMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn rs_cost(&self) -> f64 {
        self.rs_cost.unwrap_or(self.c_s + self.c_d)
    }

    /// Inspection cost of a product at discovery position `h`.
    pub fn inspection_cost(&self, h: usize) -> f64 {
        match self.mode {
            SearchMode::Ds2 => self.c_s + h as f64 * self.ds_cost_slope,
            _ => self.c_s,
        }
    }

    /// Discovery position of the product with 1-based id `j` (0 for initially known products).
    pub fn position_of(&self, j: usize) -> usize {
        if j <= self.initial_awareness {
            0
        } else {
            1 + (j - self.initial_awareness - 1) / self.n_d
        }
    }

    /// Number of discovery rounds needed to reveal every product.
    pub fn max_position(&self) -> Option<usize> {
        let n = self.num_products.finite()?;
        let rest = n.saturating_sub(self.initial_awareness);
        Some(rest.div_ceil(self.n_d))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEnvironment(m));
        if !(self.c_s.is_finite() && self.c_s > 0.0) {
            return bad(format!("c_s must be positive, got {}", self.c_s));
        }
        if !(self.c_d.is_finite() && self.c_d > 0.0) {
            return bad(format!("c_d must be positive, got {}", self.c_d));
        }
        if !self.u_0.is_finite() {
            return bad("u_0 must be finite".into());
        }
        if self.n_d == 0 {
            return bad("n_d must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.q) {
            return bad(format!("q must be a probability, got {}", self.q));
        }
        if !(self.ds_cost_slope.is_finite() && self.ds_cost_slope >= 0.0) {
            return bad(format!("ds_cost_slope must be nonnegative, got {}", self.ds_cost_slope));
        }
        if let Some(c) = self.rs_cost {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("rs_cost must be positive, got {c}"));
            }
        }
        if let ProductCount::Finite(n) = self.num_products {
            if self.initial_awareness > n {
                return bad(format!(
                    "initial_awareness {} exceeds num_products {n}",
                    self.initial_awareness
                ));
            }
        }
        Ok(())
    }
}

/// All reservation values needed by the policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReservationBundle {
    pub xi: f64,
    #[serde(rename = "Xi")]
    pub big_xi: f64,
    pub z_d: f64,
    /// `None` when the random-search equation has no admissible root.
    pub z_rs: Option<f64>,
    /// `xi_by_position[h]` for directed search; empty for other modes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub xi_by_position: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_d_by_position: Option<Vec<f64>>,
}

impl ReservationBundle {
    pub fn compute(env: &SearchEnvironment, m: &ValuationModel) -> Result<Self> {
        env.validate()?;
        m.require_independent()?;
        let xi = solve_xi(&m.y, env.c_s)?;
        let z_d = solve_discovery_value_with_xi(env, m, xi)?;
        let z_rs = match solve_rs_reservation(m, env.rs_cost()) {
            Ok(z) => Some(z),
            Err(e) if env.mode == SearchMode::Rs => return Err(e),
            Err(_) => None,
        };
        if env.mode == SearchMode::Rs {
            let z = z_rs.unwrap();
            if env.u_0 >= z {
                return Err(Error::InvalidEnvironment(format!(
                    "random search needs u_0 < z_rs (u_0 = {}, z_rs = {z})",
                    env.u_0
                )));
            }
        }
        let xi_by_position = if env.mode.is_directed() {
            let h_max = env.max_position().ok_or_else(|| {
                Error::InvalidEnvironment("directed search needs a finite product count".into())
            })?;
            let slope = if env.mode == SearchMode::Ds2 {
                env.ds_cost_slope
            } else {
                0.0
            };
            ds_xi_by_position(&m.y, env.c_s, slope, h_max)
                .into_iter()
                .collect::<Result<Vec<f64>>>()?
        } else {
            Vec::new()
        };
        Ok(ReservationBundle {
            xi,
            big_xi: z_d - m.x.mean(),
            z_d,
            z_rs,
            xi_by_position,
            z_d_by_position: None,
        })
    }

    /// Search-value offset for a product at position `h` (directed modes) or `xi`.
    pub fn xi_at(&self, h: usize) -> f64 {
        if self.xi_by_position.is_empty() {
            self.xi
        } else {
            self.xi_by_position[h.min(self.xi_by_position.len() - 1)]
        }
    }
}

/// Myopic net gain of inspecting a product with partial valuation `x` against fallback `z`.
pub fn q_s(x: f64, c_s: f64, z: f64, m: &ValuationModel) -> f64 {
    m.y.partial_expectation(z - x) - c_s
}

/// Solves `E[max(0, Y - xi)] = c` for `xi`.
///
/// Below the support the partial expectation is exactly `E[Y] - t`, so costs
/// larger than `E[Y] - min(Y)` give the root `E[Y] - c` there.
pub fn solve_xi(y: &Distribution, c: f64) -> Result<f64> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidArgument(format!("inspection cost must be positive, got {c}")));
    }
    let lo = y.support().0;
    if lo.is_finite() && c >= y.mean() - lo {
        return Ok(y.mean() - c);
    }
    let f = |t: f64| y.partial_expectation(t) - c;
    let scale = y.sd().max(1e-3);
    let (a, b) = bracket_decreasing(f, y.mean(), scale, "xi")?;
    find_root(f, a, b, RootTolerance::default(), "xi")
}

/// `Q_d(z)`: expected myopic net gain of one more discovery against fallback `z`.
pub fn q_d(env: &SearchEnvironment, m: &ValuationModel, z: f64) -> Result<f64> {
    m.require_independent()?;
    let xi = solve_xi(&m.y, env.c_s)?;
    Ok(q_d_with_xi(env, m, xi, z))
}

pub(crate) fn q_d_with_xi(env: &SearchEnvironment, m: &ValuationModel, xi: f64, z: f64) -> f64 {
    if env.n_d == 1 {
        q_d_single(m, env.c_s, env.c_d, xi, z)
    } else {
        q_d_integral(m, env.n_d, env.c_d, xi, z)
    }
}

/// `E_X[max(0, Q_s(X, c_s, z))] - c_d`, the single-product discovery gain.
pub fn q_d_single(m: &ValuationModel, c_s: f64, c_d: f64, xi: f64, z: f64) -> f64 {
    let gain = |x: f64| (m.y.partial_expectation(z - x) - c_s).max(0.0);
    let v = if m.x.is_discrete() {
        m.x.expect(gain, &[], QD_TOL)
    } else if z - xi <= m.x.numeric_range().0 {
        // Every x gains from inspection, so the truncation at zero is inactive.
        m.sum_partial_expectation(z, None) - c_s
    } else {
        let (_, xhi) = m.x.numeric_range();
        let breaks: Vec<f64> = m.y.kinks().iter().map(|k| z - k).collect();
        m.x.expect_on(gain, z - xi, xhi, &breaks, QD_TOL)
    };
    v - c_d
}

/// `int_z^inf [1 - G(w)^n_d] dw - c_d` where `G` is the CDF of `X + min(Y, xi)`.
pub fn q_d_integral(m: &ValuationModel, n_d: usize, c_d: f64, xi: f64, z: f64) -> f64 {
    let (wlo, whi) = m.sum_numeric_range(Some(xi));
    if z >= whi {
        return -c_d;
    }
    let start = z.max(wlo);
    let head = start - z;
    let n = n_d as i32;
    let f = |w: f64| 1.0 - m.sum_cdf(w, Some(xi)).powi(n);
    let kinks = m.sum_kinks(Some(xi));
    head + integrate_with_breaks(&f, start, whi, &kinks, QD_TOL) - c_d
}

/// Discovery value `z_d`, the unique root of `Q_d`.
pub fn solve_discovery_value(env: &SearchEnvironment, m: &ValuationModel) -> Result<f64> {
    env.validate()?;
    m.require_independent()?;
    let xi = solve_xi(&m.y, env.c_s)?;
    solve_discovery_value_with_xi(env, m, xi)
}

pub(crate) fn solve_discovery_value_with_xi(
    env: &SearchEnvironment,
    m: &ValuationModel,
    xi: f64,
) -> Result<f64> {
    let f = |z: f64| q_d_with_xi(env, m, xi, z);
    let center = m.x.mean() + m.y.mean().min(xi);
    let scale = (m.x.sd() + m.y.sd()).max(1e-2);
    let (a, b) = bracket_decreasing(f, center, scale, "z_d")?;
    let tol = RootTolerance {
        f_abs: 1e-12,
        ..RootTolerance::default()
    };
    find_root(f, a, b, tol, "z_d")
}

/// Random-search reservation value: `E[max(0, X + Y - z)] = c_rs`.
pub fn solve_rs_reservation(m: &ValuationModel, c_rs: f64) -> Result<f64> {
    m.require_independent()?;
    if !(c_rs.is_finite() && c_rs > 0.0) {
        return Err(Error::InvalidArgument(format!("search cost must be positive, got {c_rs}")));
    }
    let lb = m.sum_lower_bound(None);
    if lb.is_finite() {
        let at_lb = m.x.mean() + m.y.mean() - lb;
        if c_rs > at_lb + 1e-15 {
            return Err(Error::NoBracket {
                what: "z_rs",
                detail: format!(
                    "cost {c_rs} exceeds E[X + Y] - min(X + Y) = {at_lb}; the root lies below the support"
                ),
            });
        }
    }
    let f = |z: f64| m.sum_partial_expectation(z, None) - c_rs;
    let center = m.x.mean() + m.y.mean();
    let scale = (m.x.sd() + m.y.sd()).max(1e-2);
    let (a, b) = bracket_decreasing(f, center, scale, "z_rs")?;
    let tol = RootTolerance {
        f_abs: 1e-12,
        ..RootTolerance::default()
    };
    let z = find_root(f, a, b, tol, "z_rs")?;
    Ok(if lb.is_finite() { z.max(lb) } else { z })
}

/// `xi_h` for inspection costs `c_s + h * slope`, positions `0..=h_max`.
pub fn ds_xi_by_position(y: &Distribution, c_s: f64, slope: f64, h_max: usize) -> Vec<Result<f64>> {
    if slope == 0.0 {
        let xi = solve_xi(y, c_s);
        return vec![xi; h_max + 1];
    }
    (0..=h_max)
        .map(|h| solve_xi(y, c_s + h as f64 * slope))
        .collect()
}

/// Discovery values when the partial-valuation distribution changes with the
/// discovery position. `models_by_position[t]` describes the product revealed by
/// discovery `t + 1`; later positions must be stochastically worse.
pub fn position_dependent_discovery_values(
    models_by_position: &[ValuationModel],
    env: &SearchEnvironment,
) -> Result<Vec<f64>> {
    if models_by_position.is_empty() {
        return Err(Error::InvalidArgument("no position models supplied".into()));
    }
    for (t, pair) in models_by_position.windows(2).enumerate() {
        let (a, b) = (&pair[0].x, &pair[1].x);
        let (alo, ahi) = a.numeric_range();
        let (blo, bhi) = b.numeric_range();
        let lo = alo.min(blo);
        let hi = ahi.max(bhi);
        let n = 400;
        for i in 0..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            if a.cdf(x) > b.cdf(x) + 1e-12 {
                return Err(Error::OrderingViolation(t + 1, t + 2));
            }
        }
    }
    let out = models_by_position
        .iter()
        .map(|m| solve_discovery_value(env, m))
        .collect::<Result<Vec<f64>>>()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn exp1() -> Distribution {
        Distribution::exponential(1.0).unwrap()
    }

    fn pm(v: f64) -> Distribution {
        Distribution::point_mass(v).unwrap()
    }

    #[test]
    fn q_s_examples() {
        let m = ValuationModel::new(pm(0.0), exp1());
        assert_abs_diff_eq!(q_s(0.0, 0.1, 0.0, &m), 0.9, epsilon = 1e-15);
        let m = ValuationModel::new(pm(0.0), Distribution::uniform(0.0, 1.0).unwrap());
        assert_abs_diff_eq!(q_s(5.0, 0.125, 5.5, &m), 0.0, epsilon = 1e-15);
        let n = Distribution::normal(0.3, 2.0).unwrap();
        let m = ValuationModel::new(pm(0.0), n.clone());
        let c = n.partial_expectation(0.0);
        assert_abs_diff_eq!(q_s(1.7, c, 1.7, &m), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn xi_closed_forms() {
        assert_abs_diff_eq!(solve_xi(&exp1(), 0.1).unwrap(), 10f64.ln(), epsilon = 1e-10);
        let u = Distribution::uniform(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(solve_xi(&u, 0.125).unwrap(), 0.5, epsilon = 1e-10);
        let n = Distribution::std_normal();
        assert_abs_diff_eq!(
            solve_xi(&n, 0.398_942_280_401_432_7).unwrap(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn xi_below_support_is_linear() {
        assert_abs_diff_eq!(solve_xi(&exp1(), 1.5).unwrap(), -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(solve_xi(&pm(1.0), 0.1).unwrap(), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(solve_xi(&exp1(), 1.0).unwrap(), 0.0, epsilon = 1e-12);
        assert!(solve_xi(&exp1(), 0.0).is_err());
    }

    #[test]
    fn q_d_limits_and_point_mass_reduction() {
        let m = ValuationModel::new(pm(0.0), exp1());
        let env = SearchEnvironment::new(0.05, 0.1, 0.0, ProductCount::Infinite);
        assert_abs_diff_eq!(q_d(&env, &m, 1e6).unwrap(), -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(q_d(&env, &m, 0.0).unwrap(), 0.95 - 0.1, epsilon = 1e-12);
    }

    #[test]
    fn discovery_value_point_mass_x() {
        let m = ValuationModel::new(pm(0.0), exp1());
        let env = SearchEnvironment::new(0.05, 0.05, 0.0, ProductCount::Infinite);
        let z = solve_discovery_value(&env, &m).unwrap();
        assert_abs_diff_eq!(z, 10f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn single_and_integral_forms_agree() {
        let models = [
            ValuationModel::new(
                Distribution::normal(0.5, 1.5).unwrap(),
                Distribution::normal(0.0, 1.0).unwrap(),
            ),
            ValuationModel::new(Distribution::uniform(-1.0, 2.0).unwrap(), exp1()),
            ValuationModel::new(
                Distribution::discrete(vec![0.0, 1.0, 1.5], vec![0.2, 0.5, 0.3]).unwrap(),
                Distribution::normal(0.0, 0.5).unwrap(),
            ),
        ];
        for m in &models {
            let xi = solve_xi(&m.y, 0.07).unwrap();
            for z in [-1.0, 0.2, 1.0, 2.5] {
                let a = q_d_single(m, 0.07, 0.05, xi, z);
                let b = q_d_integral(m, 1, 0.05, xi, z);
                assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn more_products_per_discovery_raise_q_d() {
        let m = ValuationModel::new(Distribution::normal(0.0, 1.0).unwrap(), exp1());
        let mut env = SearchEnvironment::new(0.1, 0.1, 0.0, ProductCount::Infinite);
        let xi = solve_xi(&m.y, 0.1).unwrap();
        for z in [-1.0, 0.0, 1.0, 2.0, 3.0] {
            env.n_d = 1;
            let one = q_d_with_xi(&env, &m, xi, z);
            env.n_d = 2;
            let two = q_d_with_xi(&env, &m, xi, z);
            assert!(two >= one - 1e-10, "z={z}: {two} < {one}");
        }
    }

    #[test]
    fn discovery_value_is_linear_in_mean() {
        let env = SearchEnvironment::new(0.1, 0.05, 0.0, ProductCount::Infinite);
        let y = Distribution::normal(0.0, 1.0).unwrap();
        let a = solve_discovery_value(
            &env,
            &ValuationModel::new(Distribution::uniform(0.0, 1.0).unwrap(), y.clone()),
        )
        .unwrap();
        let b = solve_discovery_value(
            &env,
            &ValuationModel::new(Distribution::uniform(0.7, 1.7).unwrap(), y),
        )
        .unwrap();
        assert_abs_diff_eq!(b - a, 0.7, epsilon = 1e-8);
    }

    #[test]
    fn rs_reservation_cases() {
        let m = ValuationModel::new(pm(0.0), exp1());
        let z = solve_rs_reservation(&m, 0.1).unwrap();
        assert_abs_diff_eq!(z, solve_xi(&exp1(), 0.1).unwrap(), epsilon = 1e-10);
        let m = ValuationModel::new(pm(0.0), pm(1.0));
        assert!(matches!(solve_rs_reservation(&m, 0.1), Err(Error::NoBracket { .. })));
        let m = ValuationModel::new(
            Distribution::normal(1.0, 0.5).unwrap(),
            Distribution::normal(-0.5, 1.5).unwrap(),
        );
        let z = solve_rs_reservation(&m, 0.08).unwrap();
        let xi = solve_xi(&Distribution::normal(0.5, 2.0).unwrap(), 0.08).unwrap();
        assert_abs_diff_eq!(z, xi, epsilon = 1e-10);
    }

    #[test]
    fn ds_positions() {
        let v = ds_xi_by_position(&exp1(), 0.05, 0.05, 4);
        assert_abs_diff_eq!(*v[1].as_ref().unwrap(), 10f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(*v[3].as_ref().unwrap(), 5f64.ln(), epsilon = 1e-10);
        for w in v.windows(2) {
            assert!(w[1].as_ref().unwrap() < w[0].as_ref().unwrap());
        }
        let flat = ds_xi_by_position(&exp1(), 0.05, 0.0, 3);
        let xi = solve_xi(&exp1(), 0.05).unwrap();
        assert!(flat.iter().all(|r| *r.as_ref().unwrap() == xi));
        let deep = ds_xi_by_position(&exp1(), 0.05, 0.05, 20);
        assert_abs_diff_eq!(*deep[20].as_ref().unwrap(), 1.0 - 1.05, epsilon = 1e-15);
        assert!(ds_xi_by_position(&exp1(), 0.05, -1.0, 3)[3].is_err());
    }

    #[test]
    fn position_dependent_values() {
        let env = SearchEnvironment::new(0.1, 0.1, 0.0, ProductCount::Infinite);
        let y = Distribution::std_normal();
        let models: Vec<ValuationModel> = (0..4)
            .map(|t| {
                ValuationModel::new(Distribution::normal(-0.1 * t as f64, 1.0).unwrap(), y.clone())
            })
            .collect();
        let z = position_dependent_discovery_values(&models, &env).unwrap();
        for w in z.windows(2) {
            assert_abs_diff_eq!(w[0] - w[1], 0.1, epsilon = 1e-8);
        }
        let same = vec![models[0].clone(); 3];
        let z = position_dependent_discovery_values(&same, &env).unwrap();
        assert!(z.iter().all(|v| *v == z[0]));
        let reversed: Vec<ValuationModel> = models.into_iter().rev().collect();
        assert!(matches!(
            position_dependent_discovery_values(&reversed, &env),
            Err(Error::OrderingViolation(1, 2))
        ));
    }

    #[test]
    fn bundle_xi_equals_z_d_minus_mean() {
        let env = SearchEnvironment::new(0.03, 0.06, 3.5, ProductCount::Finite(30));
        let m = ValuationModel::new(
            Distribution::normal(-1.5, 10.0).unwrap(),
            Distribution::std_normal(),
        );
        let b = ReservationBundle::compute(&env, &m).unwrap();
        assert_abs_diff_eq!(b.xi, 1.489_73, epsilon = 1e-5);
        assert_abs_diff_eq!(b.z_d, 4.071_52, epsilon = 1e-5);
        assert_abs_diff_eq!(b.big_xi, b.z_d + 1.5, epsilon = 1e-12);
    }

    #[test]
    fn environment_validation_and_serde() {
        let s = r#"{"c_s":0.1,"c_d":0.2,"num_products":"infinite"}"#;
        let env: SearchEnvironment = serde_json::from_str(s).unwrap();
        assert_eq!(env.num_products, ProductCount::Infinite);
        assert_eq!(env.mode, SearchMode::Sd);
        env.validate().unwrap();
        let s = r#"{"c_s":0.1,"c_d":0.2,"num_products":5,"mode":"ds2","extra":1}"#;
        assert!(serde_json::from_str::<SearchEnvironment>(s).is_err());
        let mut bad = env.clone();
        bad.c_s = 0.0;
        assert!(bad.validate().is_err());
        bad = env.clone();
        bad.q = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn positions_follow_discovery_rounds() {
        let mut env = SearchEnvironment::new(0.1, 0.1, 0.0, ProductCount::Finite(7));
        env.initial_awareness = 1;
        env.n_d = 2;
        let pos: Vec<usize> = (1..=7).map(|j| env.position_of(j)).collect();
        assert_eq!(pos, vec![0, 1, 1, 2, 2, 3, 3]);
        assert_eq!(env.max_position(), Some(3));
    }
}
