//! Synthetic consumer panels and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, ValuationModel};
use crate::error::{Error, Result};
use crate::policy::{run_policy, FixedProducts, OUTSIDE};
use crate::reservation::{ProductCount, ReservationBundle, SearchEnvironment, SearchMode};
use crate::rng::{derive_seed, RandomStream};

/// Number of observed product characteristics. Characteristic 1 (0-based) is the price.
pub const NUM_CHARACTERISTICS: usize = 2;
pub const PRICE: usize = 1;

pub type Characteristics = [f64; NUM_CHARACTERISTICS];

/// One consumer's observed search record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsumerRecord {
    pub consumer_id: u64,
    /// `chars[j - 1]` belongs to product `j`.
    pub chars: Vec<Characteristics>,
    /// Discovery position of product `j` at index `j - 1`; 0 for initially known products.
    pub positions: Vec<usize>,
    /// Inspected product ids in inspection order.
    pub inspected: Vec<usize>,
    /// Purchased product id, 0 for the outside option.
    pub purchased: usize,
}

impl ConsumerRecord {
    pub fn num_products(&self) -> usize {
        self.chars.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.chars.len();
        let bad = |m: String| Err(Error::InvalidPanel(format!("consumer {}: {m}", self.consumer_id)));
        if self.positions.len() != n {
            return bad("positions and characteristics differ in length".into());
        }
        if self.chars.iter().flatten().any(|v| !v.is_finite()) {
            return bad("non-finite characteristic".into());
        }
        let mut seen = vec![false; n + 1];
        for &j in &self.inspected {
            if j == 0 || j > n {
                return bad(format!("inspected id {j} out of range"));
            }
            if seen[j] {
                return bad(format!("product {j} inspected twice"));
            }
            seen[j] = true;
        }
        if self.purchased != OUTSIDE && !self.inspected.contains(&self.purchased) {
            return bad(format!("purchased product {} was never inspected", self.purchased));
        }
        Ok(())
    }
}

/// Means and covariance of the product characteristics, used for the distribution of `x'beta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Characteristics,
    pub cov: [[f64; NUM_CHARACTERISTICS]; NUM_CHARACTERISTICS],
}

impl Moments {
    /// Mean and variance of `chars'beta[..2]`.
    pub fn index_mean_var(&self, beta: &[f64; 3]) -> (f64, f64) {
        let mut m = 0.0;
        let mut v = 0.0;
        for a in 0..NUM_CHARACTERISTICS {
            m += beta[a] * self.mean[a];
            for b in 0..NUM_CHARACTERISTICS {
                v += beta[a] * beta[b] * self.cov[a][b];
            }
        }
        (m, v)
    }

    /// Normal partial valuations `x'beta` with standard normal residuals.
    pub fn valuation_model(&self, beta: &[f64; 3]) -> Result<ValuationModel> {
        let (m, v) = self.index_mean_var(beta);
        Ok(ValuationModel::new(
            Distribution::normal(m, v)?,
            Distribution::std_normal(),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelData {
    pub consumers: Vec<ConsumerRecord>,
}

impl PanelData {
    pub fn validate(&self) -> Result<()> {
        if self.consumers.is_empty() {
            return Err(Error::InvalidPanel("no consumers".into()));
        }
        let mut ids: Vec<u64> = self.consumers.iter().map(|c| c.consumer_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidPanel("duplicate consumer id".into()));
        }
        self.consumers.iter().try_for_each(ConsumerRecord::validate)
    }

    /// Sample moments over all products of all consumers.
    pub fn moments(&self) -> Moments {
        let all: Vec<&Characteristics> = self.consumers.iter().flat_map(|c| c.chars.iter()).collect();
        let n = all.len().max(1) as f64;
        let mut mean = [0.0; NUM_CHARACTERISTICS];
        for c in &all {
            for a in 0..NUM_CHARACTERISTICS {
                mean[a] += c[a] / n;
            }
        }
        let mut cov = [[0.0; NUM_CHARACTERISTICS]; NUM_CHARACTERISTICS];
        for c in &all {
            for a in 0..NUM_CHARACTERISTICS {
                for b in 0..NUM_CHARACTERISTICS {
                    cov[a][b] += (c[a] - mean[a]) * (c[b] - mean[b]) / n;
                }
            }
        }
        Moments { mean, cov }
    }

    pub fn mean_searches(&self) -> f64 {
        let s: usize = self.consumers.iter().map(|c| c.inspected.len()).sum();
        s as f64 / self.consumers.len() as f64
    }

    pub fn purchase_share(&self) -> f64 {
        let s = self.consumers.iter().filter(|c| c.purchased != OUTSIDE).count();
        s as f64 / self.consumers.len() as f64
    }

    pub fn empty_consideration_share(&self) -> f64 {
        let s = self.consumers.iter().filter(|c| c.inspected.is_empty()).count();
        s as f64 / self.consumers.len() as f64
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.consumers {
            let rank = |j: usize| c.inspected.iter().position(|&k| k == j).map(|r| r + 1);
            w.serialize(CsvRow {
                consumer_id: c.consumer_id,
                product_id: 0,
                position: 0,
                x1: 0.0,
                x2: 0.0,
                outside_dummy: 1,
                inspected_rank: None,
                purchased: u8::from(c.purchased == OUTSIDE),
            })?;
            for (i, ch) in c.chars.iter().enumerate() {
                let j = i + 1;
                w.serialize(CsvRow {
                    consumer_id: c.consumer_id,
                    product_id: j,
                    position: c.positions[i],
                    x1: ch[0],
                    x2: ch[1],
                    outside_dummy: 0,
                    inspected_rank: rank(j),
                    purchased: u8::from(c.purchased == j),
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format of [`PanelData::write_csv`]. Rows of one consumer must be contiguous.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut consumers: Vec<ConsumerRecord> = Vec::new();
        let mut ranks: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut outside_rows: Vec<usize> = Vec::new();
        for row in r.deserialize() {
            let row: CsvRow = row?;
            let start = consumers.last().is_none_or(|c| c.consumer_id != row.consumer_id);
            if start {
                if consumers.iter().any(|c| c.consumer_id == row.consumer_id) {
                    return Err(Error::InvalidPanel(format!(
                        "rows of consumer {} are not contiguous",
                        row.consumer_id
                    )));
                }
                consumers.push(ConsumerRecord {
                    consumer_id: row.consumer_id,
                    chars: Vec::new(),
                    positions: Vec::new(),
                    inspected: Vec::new(),
                    purchased: OUTSIDE,
                });
                ranks.push(Vec::new());
                outside_rows.push(0);
            }
            let c = consumers.last_mut().unwrap();
            let k = ranks.len() - 1;
            if row.outside_dummy == 1 {
                if row.product_id != 0 {
                    return Err(Error::InvalidPanel("outside option must have product_id 0".into()));
                }
                outside_rows[k] += 1;
                if row.purchased == 1 {
                    c.purchased = OUTSIDE;
                }
                continue;
            }
            if row.product_id != c.chars.len() + 1 {
                return Err(Error::InvalidPanel(format!(
                    "consumer {}: product ids must run 1, 2, ... in order",
                    c.consumer_id
                )));
            }
            c.chars.push([row.x1, row.x2]);
            c.positions.push(row.position);
            if let Some(rk) = row.inspected_rank {
                ranks[k].push((rk, row.product_id));
            }
            if row.purchased == 1 {
                c.purchased = row.product_id;
            }
        }
        for ((c, mut rk), n_out) in consumers.iter_mut().zip(ranks).zip(outside_rows) {
            if n_out != 1 {
                return Err(Error::InvalidPanel(format!(
                    "consumer {} needs exactly one outside row",
                    c.consumer_id
                )));
            }
            rk.sort_unstable();
            if rk.iter().enumerate().any(|(i, &(r, _))| r != i + 1) {
                return Err(Error::InvalidPanel(format!(
                    "consumer {}: inspection ranks must be 1..n",
                    c.consumer_id
                )));
            }
            c.inspected = rk.into_iter().map(|(_, j)| j).collect();
        }
        let panel = PanelData { consumers };
        panel.validate()?;
        Ok(panel)
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    consumer_id: u64,
    product_id: usize,
    position: usize,
    x1: f64,
    x2: f64,
    outside_dummy: u8,
    inspected_rank: Option<usize>,
    purchased: u8,
}

/// Data-generating process. Defaults reproduce the simulation design with
/// `x1 ~ N(2, 3^2)`, `x2 ~ N(3.5, 1)`, `y ~ N(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgpConfig {
    /// Coefficients on x1, x2 and the outside dummy.
    pub beta: [f64; 3],
    pub c_s: f64,
    pub c_d: f64,
    pub num_products: usize,
    pub x_mean: Characteristics,
    pub x_sd: Characteristics,
    /// `Sd` or `Fi`.
    pub mode: SearchMode,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            beta: [1.0, -1.0, 3.5],
            c_s: 0.03,
            c_d: 0.06,
            num_products: 30,
            x_mean: [2.0, 3.5],
            x_sd: [3.0, 1.0],
            mode: SearchMode::Sd,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !matches!(self.mode, SearchMode::Sd | SearchMode::Fi) {
            return bad(format!("panels can be generated under SD or FI, not {}", self.mode.label()));
        }
        if self.num_products == 0 {
            return bad("num_products must be positive".into());
        }
        if self.beta.iter().chain(&self.x_mean).any(|v| !v.is_finite()) {
            return bad("beta and x_mean must be finite".into());
        }
        if self.x_sd.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("x_sd must be positive".into());
        }
        self.environment().validate()
    }

    pub fn moments(&self) -> Moments {
        let mut cov = [[0.0; NUM_CHARACTERISTICS]; NUM_CHARACTERISTICS];
        for (a, row) in cov.iter_mut().enumerate() {
            row[a] = self.x_sd[a] * self.x_sd[a];
        }
        Moments {
            mean: self.x_mean,
            cov,
        }
    }

    /// Search environment of the generating model: one initially known product, one per discovery.
    pub fn environment(&self) -> SearchEnvironment {
        let mut env = SearchEnvironment::new(
            self.c_s,
            self.c_d,
            self.beta[2],
            ProductCount::Finite(self.num_products),
        )
        .with_mode(self.mode);
        env.initial_awareness = 1;
        env
    }

    /// Characteristics and latent residuals of consumer `id`. `ys[0]` is the outside option's.
    pub fn consumer_draws(&self, seed: u64, id: u64) -> (Vec<Characteristics>, Vec<f64>) {
        let root = RandomStream::new(derive_seed(seed, "panel"), id);
        let mut cs = root.fork("characteristics");
        let mut ys = root.fork("residuals");
        let chars = (0..self.num_products)
            .map(|_| {
                let mut c = [0.0; NUM_CHARACTERISTICS];
                for a in 0..NUM_CHARACTERISTICS {
                    c[a] = self.x_mean[a] + self.x_sd[a] * cs.next_std_normal();
                }
                c
            })
            .collect();
        let y = (0..=self.num_products).map(|_| ys.next_std_normal()).collect();
        (chars, y)
    }
}

pub fn partial_valuation(beta: &[f64; 3], c: &Characteristics) -> f64 {
    beta[0] * c[0] + beta[1] * c[1]
}

/// Simulates `n_consumers` searching under the generating model.
pub fn simulate_panel(dgp: &DgpConfig, n_consumers: usize, seed: u64) -> Result<PanelData> {
    dgp.validate()?;
    let env = dgp.environment();
    let model = dgp.moments().valuation_model(&dgp.beta)?;
    let bundle = match dgp.mode {
        SearchMode::Fi => ReservationBundle {
            xi: f64::INFINITY,
            big_xi: f64::INFINITY,
            z_d: f64::INFINITY,
            z_rs: None,
            xi_by_position: Vec::new(),
            z_d_by_position: None,
        },
        _ => ReservationBundle::compute(&env, &model)?,
    };
    let consumers = crate::par::map_indexed(n_consumers, |i| {
        let id = i as u64 + 1;
        let (chars, ys) = dgp.consumer_draws(seed, id);
        let xs: Vec<f64> = chars.iter().map(|c| partial_valuation(&dgp.beta, c)).collect();
        let mut src = FixedProducts { xs: &xs, ys: &ys[1..] };
        let t = run_policy(&env, &bundle, dgp.beta[2] + ys[0], &mut src, false)?;
        // Under full information every product is in the consideration set.
        let inspected = match dgp.mode {
            SearchMode::Fi => (1..=dgp.num_products).collect(),
            _ => t.inspected,
        };
        Ok(ConsumerRecord {
            consumer_id: id,
            positions: (1..=dgp.num_products).map(|j| env.position_of(j)).collect(),
            chars,
            inspected,
            purchased: t.purchased,
        })
    });
    let consumers = consumers.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PanelData { consumers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_is_reproducible_and_roundtrips_csv() {
        let dgp = DgpConfig::default();
        let a = simulate_panel(&dgp, 40, 5).unwrap();
        let b = simulate_panel(&dgp, 40, 5).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let back = PanelData::read_csv(buf.as_slice()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn prohibitive_discovery_cost_keeps_consideration_initial() {
        let dgp = DgpConfig {
            c_d: 1e6,
            ..DgpConfig::default()
        };
        let p = simulate_panel(&dgp, 200, 9).unwrap();
        for c in &p.consumers {
            assert!(c.inspected.iter().all(|&j| j == 1));
            assert!(c.purchased == OUTSIDE || c.purchased == 1);
        }
    }

    #[test]
    fn full_information_panel_considers_everything() {
        let dgp = DgpConfig {
            mode: SearchMode::Fi,
            ..DgpConfig::default()
        };
        let p = simulate_panel(&dgp, 50, 2).unwrap();
        p.validate().unwrap();
        assert!(p.consumers.iter().all(|c| c.inspected.len() == 30));
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let text = "consumer_id,product_id,position,x1,x2,outside_dummy,inspected_rank,purchased\n\
                    1,0,0,0,0,1,,0\n1,1,0,1.0,2.0,0,,1\n";
        assert!(matches!(PanelData::read_csv(text.as_bytes()), Err(Error::InvalidPanel(_))));
    }
}
