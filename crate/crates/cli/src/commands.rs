use std::fs::File;

use serde::Serialize;

use sdsearch::demand::{demand_curve, find_ranking_threshold, CurveOptions};
use sdsearch::estimation::{
    compare, estimate, simulate_outcomes, simulate_panel, CounterfactualSummary, EstimationConfig,
    EstimationResult, Likelihood, Moments, Outcome, PanelData, Params, Ratios, Scenario,
};
use sdsearch::learning::{bounds, bounds_decision};
use sdsearch::oracle::{check_corpus, corpus_with_values, generate_corpus, CorpusEntry};
use sdsearch::outcomes::{expected_payoff, expected_payoff_analytic, expected_payoff_rs_analytic, payoff_diff_sd_ds, welfare_threshold_n_star};
use sdsearch::policy::population_summary;
use sdsearch::rng::derive_seed;
use sdsearch::{ReservationBundle, SearchMode, ValuationModel};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{num, opt, Artifact, Table};

const BUNDLED_CORPUS: &str = include_str!("../../core/tests/fixtures/oracle_corpus.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Reservation,
    Simulate,
    OracleCheck,
    Payoff,
    Demand,
    Bounds,
    Estimate,
    Counterfactual,
    ReplicateTables,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Reservation => "reservation",
            Command::Simulate => "simulate",
            Command::OracleCheck => "oracle-check",
            Command::Payoff => "payoff",
            Command::Demand => "demand",
            Command::Bounds => "bounds",
            Command::Estimate => "estimate",
            Command::Counterfactual => "counterfactual",
            Command::ReplicateTables => "replicate-tables",
        }
    }
}

/// Runs `cmd`. Sub-seeds are derived from `cfg.seed`; derived values are
/// written back into `cfg` so the provenance header shows what was used.
pub fn run(cmd: Command, cfg: &mut ExperimentConfig) -> Result<Artifact, CliError> {
    if let Some(c) = &cfg.command {
        if c != cmd.name() {
            return Err(CliError::Config(format!("config is for '{c}', not '{}'", cmd.name())));
        }
    }
    match cmd {
        Command::Reservation => reservation(cfg),
        Command::Simulate => simulate(cfg),
        Command::OracleCheck => oracle_check(cfg),
        Command::Payoff => payoff(cfg),
        Command::Demand => demand(cfg),
        Command::Bounds => run_bounds(cfg),
        Command::Estimate => run_estimate(cfg),
        Command::Counterfactual => run_counterfactual(cfg),
        Command::ReplicateTables => replicate_tables(cfg),
    }
}

fn model(cfg: &ExperimentConfig) -> Result<ValuationModel, CliError> {
    Ok(ValuationModel::new(cfg.x()?.clone(), cfg.y()?.clone()))
}

fn reservation(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let env = cfg.environment()?;
    env.validate()?;
    let m = model(cfg)?;
    let b = ReservationBundle::compute(env, &m)?;
    let mut t = Table::new("values", &["quantity", "value"]);
    t.push(vec!["xi".into(), num(b.xi)]);
    t.push(vec!["Xi".into(), num(b.big_xi)]);
    t.push(vec!["z_d".into(), num(b.z_d)]);
    t.push(vec!["z_rs".into(), opt(b.z_rs)]);
    for (h, v) in b.xi_by_position.iter().enumerate() {
        t.push(vec![format!("xi_{h}"), num(*v)]);
    }
    Artifact::new(&b, vec![t])
}

fn simulate(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let env = cfg.environment()?;
    env.validate()?;
    let m = model(cfg)?;
    let modes = if cfg.simulate.modes.is_empty() { vec![env.mode] } else { cfg.simulate.modes.clone() };
    let seed = derive_seed(cfg.seed, "simulate");
    let mut t = Table::new(
        "summary",
        &[
            "mode",
            "consumers",
            "mean_searches",
            "sd_searches",
            "mean_discoveries",
            "purchase_share",
            "outside_share",
            "mean_payoff",
            "se_payoff",
            "mean_products_seen",
        ],
    );
    let mut out = Vec::new();
    for mode in modes {
        let e = env.clone().with_mode(mode);
        let b = ReservationBundle::compute(&e, &m)?;
        let s = population_summary(&e, &m, &b, cfg.simulate.consumers, seed)?;
        t.push(vec![
            mode.label().into(),
            s.consumers.to_string(),
            num(s.mean_searches),
            num(s.sd_searches),
            num(s.mean_discoveries),
            num(s.purchase_share),
            num(s.outside_share),
            num(s.mean_payoff),
            num(s.se_payoff),
            num(s.mean_products_seen),
        ]);
        out.push(s);
    }
    Artifact::new(&out, vec![t])
}

fn oracle_check(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let o = &cfg.oracle;
    let entries: Vec<CorpusEntry> = match (&o.corpus, o.generate) {
        (Some(_), Some(_)) => return Err(CliError::Config("oracle: set either corpus or generate, not both".into())),
        (None, Some(n)) => corpus_with_values(generate_corpus(derive_seed(cfg.seed, "oracle"), n))?,
        (Some(path), None) => {
            let f = File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_reader(f).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        (None, None) => serde_json::from_str(BUNDLED_CORPUS).map_err(|e| CliError::Io(e.to_string()))?,
    };
    let report = check_corpus(&entries, o.tol)?;
    let mut summary = Table::new("summary", &["instances", "passed", "failed", "max_abs_diff"]);
    summary.push(vec![
        report.instances.to_string(),
        report.passed.to_string(),
        report.failures.len().to_string(),
        num(report.max_abs_diff),
    ]);
    let mut failures = Table::new(
        "failures",
        &["index", "dp_value", "policy_value", "abs_diff", "stored_diff", "state_violations", "purchase_agree", "purchase_paths"],
    );
    for f in &report.failures {
        failures.push(vec![
            f.index.to_string(),
            num(f.optimality.dp_value),
            num(f.optimality.policy_value),
            num(f.optimality.abs_diff),
            num(f.stored_diff),
            f.optimality.violations.len().to_string(),
            f.eventual_purchase.agree.to_string(),
            f.eventual_purchase.paths.to_string(),
        ]);
    }
    let mut a = Artifact::new(&report, vec![summary, failures])?;
    if !report.all_passed() {
        a.violation = Some(format!("{} of {} instances failed", report.failures.len(), report.instances));
    }
    Ok(a)
}

fn payoff(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    #[derive(Serialize)]
    struct Report {
        sd_monte_carlo: sdsearch::outcomes::Estimate,
        sd_analytic: Option<f64>,
        rs_analytic: Option<f64>,
        sd_minus_ds: Option<sdsearch::outcomes::Estimate>,
        threshold: Option<sdsearch::outcomes::ThresholdReport>,
    }
    let env = cfg.environment()?;
    env.validate()?;
    let m = model(cfg)?;
    let b = ReservationBundle::compute(env, &m)?;
    let p = &cfg.payoff;
    let finite = env.num_products.finite().is_some();
    let sd_mc = expected_payoff(env, &m, &b, p.paths, derive_seed(cfg.seed, "payoff"))?;
    let sd_analytic = if finite { Some(expected_payoff_analytic(env, &m, &b)?) } else { None };
    let rs_analytic = match b.z_rs {
        Some(z) if finite => Some(expected_payoff_rs_analytic(env, &m, z)?),
        _ => None,
    };
    let sd_minus_ds = if finite {
        Some(payoff_diff_sd_ds(env, &m, p.paths, derive_seed(cfg.seed, "payoff-diff"))?)
    } else {
        None
    };
    let threshold = match p.delta {
        Some(d) => Some(welfare_threshold_n_star(env, &m, d, p.n_max, p.paths, derive_seed(cfg.seed, "threshold"))?),
        None => None,
    };
    let mut t = Table::new("payoff", &["quantity", "mean", "se"]);
    t.push(vec!["sd_monte_carlo".into(), num(sd_mc.mean), num(sd_mc.se)]);
    if let Some(v) = sd_analytic {
        t.push(vec!["sd_analytic".into(), num(v), num(0.0)]);
    }
    if let Some(v) = rs_analytic {
        t.push(vec!["rs_analytic".into(), num(v), num(0.0)]);
    }
    if let Some(e) = sd_minus_ds {
        t.push(vec!["sd_minus_ds".into(), num(e.mean), num(e.se)]);
    }
    let mut tables = vec![t];
    if let Some(r) = &threshold {
        let mut th = Table::new("threshold", &["num_products", "diff_mean", "diff_se"]);
        for (k, e) in r.diffs.iter().enumerate() {
            th.push(vec![(k + 1).to_string(), num(e.mean), num(e.se)]);
        }
        tables.push(th);
    }
    let report = Report {
        sd_monte_carlo: sd_mc,
        sd_analytic,
        rs_analytic,
        sd_minus_ds,
        threshold,
    };
    Artifact::new(&report, tables)
}

fn demand(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    #[derive(Serialize)]
    struct Report {
        curves: Vec<sdsearch::demand::DemandCurve>,
        ranking_threshold: sdsearch::demand::RankingThreshold,
    }
    let env = cfg.environment()?;
    env.validate()?;
    let m = model(cfg)?;
    let d = &cfg.demand;
    let opts = CurveOptions {
        h_max: d.h_max,
        n_mc: d.paths,
        seed: derive_seed(cfg.seed, "demand"),
        force_mc: d.force_mc,
    };
    let mut t = Table::new("curves", &["mode", "h", "demand", "ranking_effect", "demand_se", "ranking_se"]);
    let mut curves = Vec::new();
    for &mode in &d.modes {
        let e = env.clone().with_mode(mode);
        let b = ReservationBundle::compute(&e, &m)?;
        let c = demand_curve(&e, &m, &b, &opts)?;
        for k in 0..c.demand.len() {
            t.push(vec![
                mode.label().into(),
                (k + 1).to_string(),
                num(c.demand[k]),
                num(c.ranking_effect[k]),
                num(c.demand_se[k]),
                num(c.ranking_se[k]),
            ]);
        }
        curves.push(c);
    }
    let th = find_ranking_threshold(env, &m)?;
    let mut tt = Table::new("threshold", &["h_star", "stop_sd", "stop_rs", "z_d", "z_rs"]);
    tt.push(vec![
        th.h_star.map(|h| h.to_string()).unwrap_or_default(),
        num(th.stop_sd),
        num(th.stop_rs),
        num(th.z_d),
        num(th.z_rs),
    ]);
    Artifact::new(
        &Report {
            curves,
            ranking_threshold: th,
        },
        vec![t, tt],
    )
}

fn run_bounds(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    #[derive(Serialize)]
    struct Report {
        #[serde(flatten)]
        bounds: sdsearch::learning::Bounds,
        decision: Option<sdsearch::learning::BoundsDecision>,
    }
    let env = cfg.environment()?;
    env.validate()?;
    let y = cfg.y()?;
    let opts = cfg.bounds.as_ref().ok_or_else(|| CliError::Config("missing [bounds] section".into()))?;
    opts.belief.validate()?;
    let b = bounds(&opts.belief, env, y)?;
    let decision = match opts.best_u {
        Some(u) => Some(bounds_decision(&opts.belief, env, y, u)?),
        None => None,
    };
    let mut t = Table::new("bounds", &["lower", "lookahead2", "upper", "decision"]);
    t.push(vec![
        num(b.lower),
        num(b.lookahead2),
        num(b.upper),
        decision.map(|d| format!("{d:?}").to_lowercase()).unwrap_or_default(),
    ]);
    Artifact::new(&Report { bounds: b, decision }, vec![t])
}

fn load_panel(cfg: &ExperimentConfig) -> Result<PanelData, CliError> {
    match &cfg.panel.path {
        Some(path) => {
            let f = File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            Ok(PanelData::read_csv(f)?)
        }
        None => Ok(simulate_panel(&cfg.panel.dgp, cfg.panel.consumers, derive_seed(cfg.seed, "panel"))?),
    }
}

fn estimation_config(cfg: &mut ExperimentConfig) -> EstimationConfig {
    cfg.estimation.seed = derive_seed(cfg.seed, "estimate");
    cfg.estimation.clone()
}

fn fit(panel: &PanelData, est: &EstimationConfig, model: SearchMode) -> Result<EstimationResult, CliError> {
    let c = EstimationConfig {
        model,
        ..est.clone()
    };
    Ok(estimate(panel, &c)?)
}

fn estimate_row(t: &mut Table, r: &EstimationResult) {
    let p = &r.params;
    t.push(vec![
        r.model.label().into(),
        num(p.beta[0]),
        num(p.beta[1]),
        num(p.beta[2]),
        num(p.c_s),
        num(p.c_d),
        num(r.log_likelihood),
        num(r.ratios.beta1),
        num(r.ratios.beta3),
        opt(r.ratios.c_s),
        opt(r.ratios.c_d),
        r.converged.to_string(),
    ]);
}

#[derive(Serialize)]
struct PanelStats {
    consumers: usize,
    mean_searches: f64,
    purchase_share: f64,
}

fn panel_stats(p: &PanelData) -> PanelStats {
    PanelStats {
        consumers: p.consumers.len(),
        mean_searches: p.mean_searches(),
        purchase_share: p.purchase_share(),
    }
}

fn run_estimate(cfg: &mut ExperimentConfig) -> Result<Artifact, CliError> {
    #[derive(Serialize)]
    struct Report {
        panel: PanelStats,
        fit: EstimationResult,
    }
    let est = estimation_config(cfg);
    let panel = load_panel(cfg)?;
    let r = fit(&panel, &est, est.model)?;
    let mut t = Table::new(
        "fit",
        &[
            "model",
            "beta1",
            "beta2",
            "beta3",
            "c_s",
            "c_d",
            "log_likelihood",
            "beta1_ratio",
            "beta3_ratio",
            "c_s_ratio",
            "c_d_ratio",
            "converged",
        ],
    );
    estimate_row(&mut t, &r);
    Artifact::new(
        &Report {
            panel: panel_stats(&panel),
            fit: r,
        },
        vec![t],
    )
}

/// Generating parameters and moments when the panel is simulated.
fn truth(cfg: &ExperimentConfig) -> Option<(Params, Moments)> {
    if cfg.panel.path.is_some() {
        return None;
    }
    let d = &cfg.panel.dgp;
    Some((
        Params {
            beta: d.beta,
            c_s: d.c_s,
            c_d: d.c_d,
        },
        d.moments(),
    ))
}

fn scenario_label(s: &Scenario) -> String {
    match s {
        Scenario::Baseline => "baseline".into(),
        Scenario::RemoveCosts => "remove_costs".into(),
        Scenario::PriceCut { rank, factor } => format!("price_cut_{rank}_{factor}"),
    }
}

fn scenarios(
    panel: &PanelData,
    model: SearchMode,
    p: &Params,
    moments: &Moments,
    list: &[Scenario],
    paths: usize,
    seed: u64,
) -> Result<(Outcome, Vec<CounterfactualSummary>), CliError> {
    let base = simulate_outcomes(panel, model, p, moments, &Scenario::Baseline, paths, seed)?;
    let mut out = Vec::with_capacity(list.len());
    for s in list {
        let o = simulate_outcomes(panel, model, p, moments, s, paths, seed)?;
        out.push(compare(model, s, base.clone(), o));
    }
    Ok((base, out))
}

const DELTA_COLUMNS: [&str; 6] = ["model", "scenario", "delta_cs", "delta_d0", "delta_d1", "delta_d5"];

fn delta_row(s: &CounterfactualSummary) -> Vec<String> {
    vec![
        s.model.label().into(),
        scenario_label(&s.scenario),
        num(s.delta_cs),
        num(s.delta_d0),
        num(s.delta_d1),
        num(s.delta_d5),
    ]
}

/// Parameters and moments for `model`: the truth for SD on a simulated panel, a fit otherwise.
fn model_params(
    cfg: &ExperimentConfig,
    panel: &PanelData,
    est: &EstimationConfig,
    model: SearchMode,
) -> Result<(Params, Moments, Option<EstimationResult>), CliError> {
    if model == SearchMode::Sd {
        if let Some((p, m)) = truth(cfg) {
            return Ok((p, m, None));
        }
    }
    let r = fit(panel, est, model)?;
    Ok((r.params.clone(), panel.moments(), Some(r)))
}

fn run_counterfactual(cfg: &mut ExperimentConfig) -> Result<Artifact, CliError> {
    #[derive(Serialize)]
    struct Report {
        model: SearchMode,
        params: Params,
        fit: Option<EstimationResult>,
        baseline: Outcome,
        scenarios: Vec<CounterfactualSummary>,
    }
    let est = estimation_config(cfg);
    let c = cfg.counterfactual.clone();
    let panel = load_panel(cfg)?;
    let (params, moments, fitted) = match &c.params {
        Some(p) => {
            let m = match truth(cfg) {
                Some((_, m)) if c.model == SearchMode::Sd => m,
                _ => panel.moments(),
            };
            (p.clone(), m, None)
        }
        None => model_params(cfg, &panel, &est, c.model)?,
    };
    let seed = derive_seed(cfg.seed, "counterfactual");
    let (baseline, list) = scenarios(&panel, c.model, &params, &moments, &c.scenarios, c.paths, seed)?;
    let mut t = Table::new("deltas", &DELTA_COLUMNS);
    for s in &list {
        t.push(delta_row(s));
    }
    Artifact::new(
        &Report {
            model: c.model,
            params,
            fit: fitted,
            baseline,
            scenarios: list,
        },
        vec![t],
    )
}

#[derive(Serialize)]
struct Table2Row {
    model: SearchMode,
    params: Params,
    log_likelihood: f64,
    ratios: Ratios,
    searches: f64,
    purchase_share: f64,
    fitted: bool,
}

fn replicate_tables(cfg: &mut ExperimentConfig) -> Result<Artifact, CliError> {
    #[derive(Serialize)]
    struct Report {
        panel: PanelStats,
        table2: Vec<Table2Row>,
        table3: Vec<CounterfactualSummary>,
    }
    let est = estimation_config(cfg);
    let panel = load_panel(cfg)?;
    let seed = derive_seed(cfg.seed, "counterfactual");
    let list = [Scenario::RemoveCosts, Scenario::price_cut_fifth()];
    let mut t2 = Table::new(
        "table2",
        &["model", "log_likelihood", "beta1_ratio", "beta3_ratio", "c_s_ratio", "c_d_ratio", "searches", "purchase_share"],
    );
    t2.push(vec![
        "data".into(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        num(panel.mean_searches()),
        num(panel.purchase_share()),
    ]);
    let mut t3 = Table::new("table3", &DELTA_COLUMNS);
    let mut rows = Vec::new();
    let mut deltas = Vec::new();
    for &model in &cfg.tables.models {
        let (params, moments, fitted) = model_params(cfg, &panel, &est, model)?;
        let log_likelihood = match &fitted {
            Some(r) => r.log_likelihood,
            None => Likelihood::new(&panel, model, est.lambda, est.n_draws, est.seed)?.evaluate(&params)?,
        };
        let (base, cf) = scenarios(&panel, model, &params, &moments, &list, cfg.tables.paths, seed)?;
        let row = Table2Row {
            model,
            ratios: Ratios::of(model, &params),
            params,
            log_likelihood,
            searches: base.searches,
            purchase_share: base.purchase_share,
            fitted: fitted.is_some(),
        };
        t2.push(vec![
            model.label().into(),
            num(row.log_likelihood),
            num(row.ratios.beta1),
            num(row.ratios.beta3),
            opt(row.ratios.c_s),
            opt(row.ratios.c_d),
            num(row.searches),
            num(row.purchase_share),
        ]);
        for s in &cf {
            t3.push(delta_row(s));
        }
        rows.push(row);
        deltas.extend(cf);
    }
    Artifact::new(
        &Report {
            panel: panel_stats(&panel),
            table2: rows,
            table3: deltas,
        },
        vec![t2, t3],
    )
}
