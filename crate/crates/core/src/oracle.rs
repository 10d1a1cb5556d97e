//! Exact backward induction on small discrete instances, used as ground truth
//! for the index policy and the eventual-purchase rule.
//!
//! Products are i.i.d. across positions. A state is the number of discovered
//! products plus, for each of them, the index of its realized `x` and, once
//! inspected, of its realized `y`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, ValuationModel};
use crate::error::{Error, Result};
use crate::outcomes::{candidates, default_bonus, effective_value, EffectiveValue};
use crate::par;
use crate::policy::{choose_action, run_policy, Action, ConsumerState, FixedProducts};
use crate::reservation::{ProductCount, ReservationBundle, SearchEnvironment};
use crate::rng::RandomStream;

pub const MAX_PRODUCTS: usize = 4;
pub const MAX_SUPPORT: usize = 4;
const UNKNOWN: u8 = u8::MAX;

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteInstance {
    pub x: Distribution,
    pub y: Distribution,
    pub num_products: usize,
    #[serde(default = "one")]
    pub n_d: usize,
    pub c_s: f64,
    pub c_d: f64,
    #[serde(default)]
    pub u_0: f64,
    #[serde(default)]
    pub initial_awareness: usize,
}

impl DiscreteInstance {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        let (Some(ax), Some(ay)) = (self.x.atoms(), self.y.atoms()) else {
            return bad("x and y must be discrete".into());
        };
        if ax.len() > MAX_SUPPORT || ay.len() > MAX_SUPPORT {
            return bad(format!("support sizes are capped at {MAX_SUPPORT}"));
        }
        if self.num_products > MAX_PRODUCTS {
            return bad(format!("at most {MAX_PRODUCTS} products"));
        }
        self.env().validate()
    }

    pub fn env(&self) -> SearchEnvironment {
        let mut env = SearchEnvironment::new(
            self.c_s,
            self.c_d,
            self.u_0,
            ProductCount::Finite(self.num_products),
        );
        env.n_d = self.n_d;
        env.initial_awareness = self.initial_awareness;
        env
    }

    pub fn model(&self) -> ValuationModel {
        ValuationModel::new(self.x.clone(), self.y.clone())
    }

    pub fn bundle(&self) -> Result<ReservationBundle> {
        self.validate()?;
        ReservationBundle::compute(&self.env(), &self.model())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Node {
    xs: Vec<u8>,
    ys: Vec<u8>,
}

impl Node {
    fn discovered(&self) -> usize {
        self.xs.len()
    }
}

/// Continuation values of every action available at one node.
struct ActionValues {
    buy: f64,
    inspect: Vec<(usize, f64)>,
    discover: Option<f64>,
}

impl ActionValues {
    fn best(&self) -> f64 {
        let mut v = self.buy;
        for &(_, q) in &self.inspect {
            v = v.max(q);
        }
        if let Some(q) = self.discover {
            v = v.max(q);
        }
        v
    }

    fn of(&self, a: Action) -> f64 {
        match a {
            Action::Buy(_) => self.buy,
            Action::Inspect(id) => self.inspect.iter().find(|(j, _)| *j == id).unwrap().1,
            Action::Discover => self.discover.unwrap(),
        }
    }
}

/// Backward-induction solver for one instance.
pub struct Solver<'a> {
    inst: &'a DiscreteInstance,
    env: SearchEnvironment,
    xa: Vec<(f64, f64)>,
    ya: Vec<(f64, f64)>,
    values: HashMap<Node, f64>,
}

impl<'a> Solver<'a> {
    pub fn new(inst: &'a DiscreteInstance) -> Result<Self> {
        inst.validate()?;
        Ok(Solver {
            env: inst.env(),
            xa: inst.x.atoms().unwrap(),
            ya: inst.y.atoms().unwrap(),
            inst,
            values: HashMap::new(),
        })
    }

    fn utility(&self, node: &Node, j: usize) -> f64 {
        self.xa[node.xs[j] as usize].0 + self.ya[node.ys[j] as usize].0
    }

    /// All ways to reveal `k` more partial valuations, with probabilities.
    fn extensions(&self, node: &Node, k: usize) -> Vec<(Node, f64)> {
        let mut out = vec![(node.clone(), 1.0)];
        for _ in 0..k {
            let mut next = Vec::with_capacity(out.len() * self.xa.len());
            for (n, p) in &out {
                for (i, &(_, px)) in self.xa.iter().enumerate() {
                    let mut m = n.clone();
                    m.xs.push(i as u8);
                    m.ys.push(UNKNOWN);
                    next.push((m, p * px));
                }
            }
            out = next;
        }
        out
    }

    fn action_values(&mut self, node: &Node) -> ActionValues {
        let mut buy = self.inst.u_0;
        for j in 0..node.discovered() {
            if node.ys[j] != UNKNOWN {
                buy = buy.max(self.utility(node, j));
            }
        }
        let mut inspect = Vec::new();
        for j in 0..node.discovered() {
            if node.ys[j] == UNKNOWN {
                let mut q = -self.inst.c_s;
                for i in 0..self.ya.len() {
                    let mut m = node.clone();
                    m.ys[j] = i as u8;
                    q += self.ya[i].1 * self.value(&m);
                }
                inspect.push((j + 1, q));
            }
        }
        let left = self.inst.num_products - node.discovered();
        let discover = (left > 0).then(|| {
            let mut q = -self.inst.c_d;
            for (m, p) in self.extensions(node, self.inst.n_d.min(left)) {
                q += p * self.value(&m);
            }
            q
        });
        ActionValues {
            buy,
            inspect,
            discover,
        }
    }

    fn value(&mut self, node: &Node) -> f64 {
        if let Some(&v) = self.values.get(node) {
            return v;
        }
        let v = self.action_values(node).best();
        self.values.insert(node.clone(), v);
        v
    }

    fn initial_nodes(&self) -> Vec<(Node, f64)> {
        let root = Node {
            xs: Vec::new(),
            ys: Vec::new(),
        };
        let k0 = self.inst.initial_awareness.min(self.inst.num_products);
        self.extensions(&root, k0)
    }

    /// Optimal expected payoff.
    pub fn dp_value(&mut self) -> f64 {
        let mut v = 0.0;
        for (n, p) in self.initial_nodes() {
            v += p * self.value(&n);
        }
        v
    }

    fn consumer_state(&self, node: &Node) -> ConsumerState {
        let mut st = ConsumerState::new(self.inst.u_0, self.inst.num_products);
        for j in 0..node.discovered() {
            st.reveal_partial(self.xa[node.xs[j] as usize].0, self.env.position_of(j + 1));
        }
        for j in 0..node.discovered() {
            if node.ys[j] != UNKNOWN {
                st.reveal_residual(j + 1, self.ya[node.ys[j] as usize].0);
            }
        }
        st
    }

    /// Expected payoff of the index policy by forward enumeration, collecting
    /// every reached state where its action loses more than `tol` against the optimum.
    fn policy_value(
        &mut self,
        node: &Node,
        bundle: &ReservationBundle,
        tol: f64,
        violations: &mut Vec<Violation>,
    ) -> f64 {
        let st = self.consumer_state(node);
        let action = choose_action(&st, bundle, self.env.mode);
        let av = self.action_values(node);
        let best = av.best();
        let chosen = av.of(action);
        if chosen < best - tol && violations.len() < 32 {
            violations.push(Violation {
                revealed_x: node.xs.iter().map(|&i| self.xa[i as usize].0).collect(),
                revealed_y: node
                    .ys
                    .iter()
                    .map(|&i| (i != UNKNOWN).then(|| self.ya[i as usize].0))
                    .collect(),
                action,
                action_value: chosen,
                optimal_value: best,
            });
        }
        match action {
            Action::Buy(_) => av.buy,
            Action::Inspect(id) => {
                let mut v = -self.inst.c_s;
                for i in 0..self.ya.len() {
                    let mut m = node.clone();
                    m.ys[id - 1] = i as u8;
                    v += self.ya[i].1 * self.policy_value(&m, bundle, tol, violations);
                }
                v
            }
            Action::Discover => {
                let left = self.inst.num_products - node.discovered();
                let mut v = -self.inst.c_d;
                for (m, p) in self.extensions(node, self.inst.n_d.min(left)) {
                    v += p * self.policy_value(&m, bundle, tol, violations);
                }
                v
            }
        }
    }

    pub fn states_solved(&self) -> usize {
        self.values.len()
    }
}

/// Exact optimal expected payoff of `inst`.
pub fn dp_value(inst: &DiscreteInstance) -> Result<f64> {
    Ok(Solver::new(inst)?.dp_value())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub revealed_x: Vec<f64>,
    pub revealed_y: Vec<Option<f64>>,
    pub action: Action,
    pub action_value: f64,
    pub optimal_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub dp_value: f64,
    pub policy_value: f64,
    pub abs_diff: f64,
    pub states: usize,
    /// Reached states where the index policy's action is strictly suboptimal (first 32).
    pub violations: Vec<Violation>,
}

impl OptimalityReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.abs_diff <= tol && self.violations.is_empty()
    }
}

pub fn verify_policy_optimality(
    inst: &DiscreteInstance,
    bundle: &ReservationBundle,
) -> Result<OptimalityReport> {
    let mut s = Solver::new(inst)?;
    let dp = s.dp_value();
    let mut violations = Vec::new();
    let mut pv = 0.0;
    for (n, p) in s.initial_nodes() {
        pv += p * s.policy_value(&n, bundle, 1e-9, &mut violations);
    }
    Ok(OptimalityReport {
        dp_value: dp,
        policy_value: pv,
        abs_diff: (dp - pv).abs(),
        states: s.states_solved(),
        violations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurchaseMismatch {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub policy_purchase: usize,
    pub predicted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventualPurchaseReport {
    pub paths: usize,
    /// Paths where the policy buys a product whose effective value is maximal.
    pub agree: usize,
    /// Paths where the policy buys exactly the product picked by the id tiebreak.
    pub exact_id_agree: usize,
    pub mismatches: Vec<PurchaseMismatch>,
}

impl EventualPurchaseReport {
    pub fn passed(&self) -> bool {
        self.agree == self.paths
    }
}

fn same_rank(a: &EffectiveValue, b: &EffectiveValue) -> bool {
    a.key == b.key
}

/// Checks the eventual-purchase rule on every joint realization of the instance.
///
/// Discrete supports produce exact ties in effective value; a tie is counted as
/// agreement when the purchased product shares the maximal ranking key.
pub fn verify_eventual_purchase(
    inst: &DiscreteInstance,
    bundle: &ReservationBundle,
) -> Result<EventualPurchaseReport> {
    inst.validate()?;
    let env = inst.env();
    let n = inst.num_products;
    let xa = inst.x.atoms().unwrap();
    let ya = inst.y.atoms().unwrap();
    let total = (xa.len() * ya.len()).pow(n as u32);
    let mut report = EventualPurchaseReport {
        paths: total,
        agree: 0,
        exact_id_agree: 0,
        mismatches: Vec::new(),
    };
    for code in 0..total {
        let mut c = code;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            xs.push(xa[c % xa.len()].0);
            c /= xa.len();
            ys.push(ya[c % ya.len()].0);
            c /= ya.len();
        }
        let mut src = FixedProducts { xs: &xs, ys: &ys };
        let t = run_policy(&env, bundle, inst.u_0, &mut src, false)?;
        let cands = candidates(&env, inst.u_0, n, &mut src);
        let evs: Vec<EffectiveValue> = cands
            .iter()
            .map(|c| effective_value(c.id, c.x, c.y, c.position, c.member, bundle, &default_bonus))
            .collect();
        let top = evs.iter().max_by(|a, b| a.rank_cmp(b)).unwrap();
        if top.id == t.purchased {
            report.exact_id_agree += 1;
        }
        if same_rank(&evs[t.purchased], top) {
            report.agree += 1;
        } else if report.mismatches.len() < 32 {
            report.mismatches.push(PurchaseMismatch {
                xs,
                ys,
                policy_purchase: t.purchased,
                predicted: top.id,
            });
        }
    }
    Ok(report)
}

/// One corpus instance with its frozen backward-induction value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub instance: DiscreteInstance,
    pub dp_value: f64,
}

fn grid_distribution(rs: &mut RandomStream, lo: i64, hi: i64, step: f64) -> Distribution {
    let size = 1 + rs.next_below(3) as usize;
    let mut values: Vec<f64> = Vec::with_capacity(size);
    while values.len() < size {
        let v = (lo + rs.next_below((hi - lo + 1) as u64) as i64) as f64 * step;
        if !values.contains(&v) {
            values.push(v);
        }
    }
    let weights: Vec<f64> = (0..size).map(|_| 1.0 + rs.next_below(4) as f64).collect();
    let total: f64 = weights.iter().sum();
    let probs = weights.iter().map(|w| w / total).collect();
    Distribution::discrete(values, probs).expect("valid grid distribution")
}

/// Random instances with at most 3 products and supports of at most 3 points
/// on a coarse grid, so that exact ties occur. Every discovery reveals exactly
/// `n_d` products.
pub fn generate_corpus(seed: u64, count: usize) -> Vec<DiscreteInstance> {
    const COSTS: [f64; 6] = [0.01, 0.05, 0.1, 0.2, 0.35, 0.6];
    let mut rs = RandomStream::new(seed, 0).fork("oracle-corpus");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let num_products = 1 + rs.next_below(3) as usize;
        let initial_awareness = if rs.next_below(4) == 0 { 1 } else { 0 };
        let rest = num_products - initial_awareness.min(num_products);
        let n_d = if rest >= 2 && rest % 2 == 0 && rs.next_below(3) == 0 {
            2
        } else {
            1
        };
        let inst = DiscreteInstance {
            x: grid_distribution(&mut rs, -4, 8, 0.25),
            y: grid_distribution(&mut rs, -4, 8, 0.25),
            num_products,
            n_d,
            c_s: COSTS[rs.next_below(COSTS.len() as u64) as usize],
            c_d: COSTS[rs.next_below(COSTS.len() as u64) as usize],
            u_0: (rs.next_below(9) as f64 - 2.0) * 0.25,
            initial_awareness: initial_awareness.min(num_products),
        };
        if inst.bundle().is_ok() {
            out.push(inst);
        }
    }
    out
}

pub fn corpus_with_values(instances: Vec<DiscreteInstance>) -> Result<Vec<CorpusEntry>> {
    instances
        .into_iter()
        .map(|instance| {
            let dp_value = dp_value(&instance)?;
            Ok(CorpusEntry { instance, dp_value })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceCheck {
    pub index: usize,
    pub optimality: OptimalityReport,
    pub eventual_purchase: EventualPurchaseReport,
    /// Difference between the recomputed and the stored dp value.
    pub stored_diff: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub instances: usize,
    pub passed: usize,
    pub max_abs_diff: f64,
    pub failures: Vec<InstanceCheck>,
}

impl CorpusReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.instances
    }
}

/// Runs every check on every corpus entry; instances are checked in parallel.
pub fn check_corpus(entries: &[CorpusEntry], tol: f64) -> Result<CorpusReport> {
    let checks = par::map_indexed(entries.len(), |i| -> Result<InstanceCheck> {
        let e = &entries[i];
        let bundle = e.instance.bundle()?;
        let optimality = verify_policy_optimality(&e.instance, &bundle)?;
        let eventual_purchase = verify_eventual_purchase(&e.instance, &bundle)?;
        let stored_diff = (optimality.dp_value - e.dp_value).abs();
        let passed =
            optimality.passed(tol) && eventual_purchase.passed() && stored_diff <= tol;
        Ok(InstanceCheck {
            index: i,
            optimality,
            eventual_purchase,
            stored_diff,
            passed,
        })
    });
    let mut report = CorpusReport {
        instances: entries.len(),
        passed: 0,
        max_abs_diff: 0.0,
        failures: Vec::new(),
    };
    for c in checks {
        let c = c?;
        report.max_abs_diff = report.max_abs_diff.max(c.optimality.abs_diff);
        if c.passed {
            report.passed += 1;
        } else {
            report.failures.push(c);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn inst(x: Distribution, y: Distribution, n: usize, c_s: f64, c_d: f64, u_0: f64) -> DiscreteInstance {
        DiscreteInstance {
            x,
            y,
            num_products: n,
            n_d: 1,
            c_s,
            c_d,
            u_0,
            initial_awareness: 0,
        }
    }

    fn two_point() -> Distribution {
        Distribution::discrete(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn no_products() {
        let i = inst(two_point(), two_point(), 0, 0.1, 0.1, 1.0);
        assert_eq!(dp_value(&i).unwrap(), 1.0);
    }

    #[test]
    fn one_product_two_steps() {
        let i = inst(Distribution::point_mass(0.0).unwrap(), two_point(), 1, 0.1, 0.1, 0.0);
        assert_abs_diff_eq!(dp_value(&i).unwrap(), 0.8, epsilon = 1e-15);
        let r = verify_policy_optimality(&i, &i.bundle().unwrap()).unwrap();
        assert!(r.passed(1e-12), "{r:?}");
    }

    #[test]
    fn huge_discovery_cost_never_discovers() {
        let i = inst(two_point(), two_point(), 3, 0.1, 50.0, 0.25);
        assert_abs_diff_eq!(dp_value(&i).unwrap(), 0.25, epsilon = 1e-15);
        let b = i.bundle().unwrap();
        let r = verify_policy_optimality(&i, &b).unwrap();
        assert!(r.passed(1e-12));
        assert_eq!(r.policy_value, 0.25);
    }

    #[test]
    fn frictionless_limit_is_expected_max() {
        // E[max(u_0, max_j (x_j + y_j))] with u = x + y in {0, 2, 4} w.p. 1/4, 1/2, 1/4.
        let i = inst(two_point(), two_point(), 2, 1e-9, 1e-9, 0.0);
        let p4 = 1.0 - 0.75f64.powi(2);
        let p2 = 0.75f64.powi(2) - 0.25f64.powi(2);
        let exact = 4.0 * p4 + 2.0 * p2;
        let r = verify_policy_optimality(&i, &i.bundle().unwrap()).unwrap();
        assert!((r.dp_value - exact).abs() < 1e-8);
        assert!(r.passed(1e-12));
        assert!(verify_eventual_purchase(&i, &i.bundle().unwrap()).unwrap().passed());
    }

    #[test]
    fn static_max_with_full_discovery() {
        // n_d = |J| and (nearly) free inspection: one discovery, then pick the best.
        let mut i = inst(two_point(), two_point(), 2, 1e-9, 0.3, 0.0);
        i.n_d = 2;
        let p4 = 1.0 - 0.75f64.powi(2);
        let p2 = 0.75f64.powi(2) - 0.25f64.powi(2);
        let exact = 4.0 * p4 + 2.0 * p2 - 0.3;
        assert!((dp_value(&i).unwrap() - exact).abs() < 1e-8);
    }

    #[test]
    fn dp_dominates_outside_option_and_is_monotone_in_costs() {
        for (k, i) in generate_corpus(11, 20).into_iter().enumerate() {
            let v = dp_value(&i).unwrap();
            assert!(v >= i.u_0 - 1e-15, "instance {k}");
            let mut dearer = i.clone();
            dearer.c_s *= 1.5;
            dearer.c_d *= 1.5;
            assert!(dp_value(&dearer).unwrap() <= v + 1e-12, "instance {k}");
        }
    }

    #[test]
    fn corpus_is_reproducible() {
        assert_eq!(generate_corpus(3, 15), generate_corpus(3, 15));
    }

    #[test]
    fn rejects_oversized_instances() {
        let d = Distribution::discrete(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0.2; 5]).unwrap();
        let i = inst(d, two_point(), 1, 0.1, 0.1, 0.0);
        assert!(matches!(i.validate(), Err(Error::InvalidInstance(_))));
        let i = inst(two_point(), two_point(), 5, 0.1, 0.1, 0.0);
        assert!(i.validate().is_err());
        let i = inst(Distribution::std_normal(), two_point(), 1, 0.1, 0.1, 0.0);
        assert!(i.validate().is_err());
    }
}
