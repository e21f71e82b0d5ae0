//! Monte Carlo experiments on spurious solutions, fixed-point curves on the
//! circle, and CSV summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distributions::DistributionSpec;
use crate::empirical::{self, HaltReason, StoppingRule, DEVIATION_THRESHOLD};
use crate::error::{IcaError, Result};
use crate::fixed_points::{classify, tangential};
use crate::linalg::spectral_norm;
use crate::nonlinearity::Nonlinearity;
use crate::population::{ExpectationEngine, MixingModel, PopulationAnalysis, UnitVector};

/// Default number of Monte Carlo trials per cell.
pub const DEFAULT_TRIALS: usize = 2000;

/// Trials in full-scale mode.
pub const FULL_TRIALS: usize = 10000;

/// Sample sizes of the bad-estimate study.
pub const TABLE2_SIZES: [usize; 6] = [100, 200, 500, 1500, 5000, 10000];

/// How the mixing matrix of an experiment is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MixingSpec {
    #[default]
    Identity,
    /// Haar-like orthogonal matrix from a seeded QR decomposition.
    RandomOrthogonal(u64),
}

impl MixingSpec {
    pub fn build(&self, sources: Vec<DistributionSpec>) -> Result<MixingModel> {
        match *self {
            MixingSpec::Identity => MixingModel::identity(sources),
            MixingSpec::RandomOrthogonal(seed) => MixingModel::random_orthogonal(sources, seed),
        }
    }
}

impl fmt::Display for MixingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MixingSpec::Identity => f.write_str("identity"),
            MixingSpec::RandomOrthogonal(seed) => write!(f, "orthogonal:{seed}"),
        }
    }
}

impl FromStr for MixingSpec {
    type Err = IcaError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "identity" {
            return Ok(MixingSpec::Identity);
        }
        if let Some(seed) = s.strip_prefix("orthogonal:").or_else(|| s.strip_prefix("random:")) {
            let seed = seed
                .trim()
                .parse()
                .map_err(|_| IcaError::Parse(format!("bad mixing seed in `{s}`")))?;
            return Ok(MixingSpec::RandomOrthogonal(seed));
        }
        Err(IcaError::Parse(format!(
            "unknown mixing `{s}` (expected `identity` or `orthogonal:<seed>`)"
        )))
    }
}

/// A stopping rule with the label used in output tables.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedRule {
    pub label: String,
    pub rule: StoppingRule,
}

impl NamedRule {
    pub fn new(label: &str, epsilon: f64, min_iterations: usize) -> Self {
        NamedRule {
            label: label.to_string(),
            rule: StoppingRule { epsilon, min_iterations, ..StoppingRule::default() },
        }
    }
}

/// `ε = 10⁻⁴, 10⁻⁶, 10⁻⁸`, and `ε = 10⁻⁴` with at least ten iterations.
pub fn table1_rules() -> Vec<NamedRule> {
    vec![
        NamedRule::new("1e-4", 1e-4, 1),
        NamedRule::new("1e-6", 1e-6, 1),
        NamedRule::new("1e-8", 1e-8, 1),
        NamedRule::new("x10", 1e-4, 10),
    ]
}

/// Random generator for trial `trial` of cell `cell`: the three counters
/// form the ChaCha key, so any trial can be replayed in isolation.
pub fn trial_rng(master: u64, cell: u64, trial: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master.to_le_bytes());
    key[8..16].copy_from_slice(&cell.to_le_bytes());
    key[16..24].copy_from_slice(&trial.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Outcome of one algorithm run inside a Monte Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub nl: String,
    pub rule: String,
    pub deviation: f64,
    pub iterations: usize,
    pub halted_by: Option<HaltReason>,
    pub mode: Option<empirical::ConvergenceMode>,
    pub matched_source: Option<usize>,
    /// Set when the trial failed; the other fields are then placeholders.
    pub error: Option<String>,
}

impl TrialOutcome {
    pub fn is_bad(&self, threshold: f64) -> bool {
        self.error.is_none() && self.deviation > threshold
    }

    fn failed(trial: usize, nl: &Nonlinearity, rule: &NamedRule, err: &IcaError) -> Self {
        TrialOutcome {
            trial,
            nl: nl.name().to_string(),
            rule: rule.label.clone(),
            deviation: f64::NAN,
            iterations: 0,
            halted_by: None,
            mode: None,
            matched_source: None,
            error: Some(err.to_string()),
        }
    }
}

/// Independent (sample, start) trials for one model. Every nonlinearity and
/// rule in a trial sees the same whitened sample and starting point.
#[derive(Debug, Clone)]
pub struct MonteCarlo {
    pub model: MixingModel,
    pub nls: Vec<Nonlinearity>,
    pub rules: Vec<NamedRule>,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    /// Distinguishes cells sharing the master seed.
    pub cell: u64,
}

impl MonteCarlo {
    fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(IcaError::Config("trials must be at least 1".into()));
        }
        if self.nls.is_empty() || self.rules.is_empty() {
            return Err(IcaError::Config("need at least one nonlinearity and one rule".into()));
        }
        for r in &self.rules {
            r.rule.validate()?;
        }
        Ok(())
    }

    fn trial(&self, t: usize) -> Vec<TrialOutcome> {
        let mut rng = trial_rng(self.seed, self.cell, t as u64);
        let sample_seed = rng.next_u64();
        let w0 = empirical::random_start(self.model.dim(), &mut rng);
        let sample = empirical::generate_sample(&self.model, self.n, sample_seed)
            .and_then(|s| empirical::whiten(&s));
        let mut out = Vec::with_capacity(self.nls.len() * self.rules.len());
        for nl in &self.nls {
            for rule in &self.rules {
                let res = match &sample {
                    Ok(s) => empirical::run(s, nl, &w0, &rule.rule, false),
                    Err(e) => {
                        out.push(TrialOutcome::failed(t, nl, rule, e));
                        continue;
                    }
                };
                out.push(match res {
                    Ok(r) => TrialOutcome {
                        trial: t,
                        nl: nl.name().to_string(),
                        rule: rule.label.clone(),
                        deviation: r.deviation,
                        iterations: r.iterations,
                        halted_by: Some(r.halted_by),
                        mode: Some(r.convergence_mode),
                        matched_source: r.matched_source,
                        error: None,
                    },
                    Err(e) => TrialOutcome::failed(t, nl, rule, &e),
                });
            }
        }
        out
    }

    /// All outcomes, ordered by trial, then nonlinearity, then rule.
    pub fn run(&self) -> Result<Vec<TrialOutcome>> {
        self.validate()?;
        let per_trial: Vec<Vec<TrialOutcome>> =
            (0..self.trials).into_par_iter().map(|t| self.trial(t)).collect();
        Ok(per_trial.into_iter().flatten().collect())
    }
}

/// Bad-outcome count for one (nonlinearity, rule) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellCount {
    pub count: usize,
    pub failures: usize,
    pub trials: usize,
}

/// Counts outcomes with deviation above `threshold`, keyed by (nl, rule).
pub fn count_bad(outcomes: &[TrialOutcome], threshold: f64) -> BTreeMap<(String, String), CellCount> {
    let mut cells: BTreeMap<(String, String), CellCount> = BTreeMap::new();
    for o in outcomes {
        let c = cells.entry((o.nl.clone(), o.rule.clone())).or_default();
        c.trials += 1;
        if o.error.is_some() {
            c.failures += 1;
        } else if o.is_bad(threshold) {
            c.count += 1;
        }
    }
    cells
}

/// Spurious-solution study over iid source laws.
#[derive(Debug, Clone)]
pub struct Table1Config {
    pub distributions: Vec<DistributionSpec>,
    pub nls: Vec<Nonlinearity>,
    pub d: usize,
    pub n: usize,
    pub trials: usize,
    pub rules: Vec<NamedRule>,
    pub threshold: f64,
    pub seed: u64,
    pub mixing: MixingSpec,
    pub engine: ExpectationEngine,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config {
            distributions: [
                "uniform",
                "laplace",
                "gg:3",
                "gg:0.5",
                "bimod:0.9",
                "bpsk",
                "sinus",
                "bimod:-0.4,2",
                "bimod:-0.3,3",
            ]
            .iter()
            .map(|s| s.parse().expect("built-in law"))
            .collect(),
            nls: vec![Nonlinearity::gauss(), Nonlinearity::tanh(), Nonlinearity::kurtosis()],
            d: 2,
            n: 5000,
            trials: DEFAULT_TRIALS,
            rules: table1_rules(),
            threshold: DEVIATION_THRESHOLD,
            seed: 0,
            mixing: MixingSpec::Identity,
            engine: ExpectationEngine::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub distribution: DistributionSpec,
    pub nl: String,
    pub d: usize,
    /// `‖f'(v)‖` at `v = (a₁ + a₂)/√2`.
    pub fprime_plus: f64,
    /// `‖f'(v)‖` at `v = (a₁ - a₂)/√2`; differs from the former for
    /// asymmetric laws.
    pub fprime_minus: f64,
    /// The smaller of the two, the diagonal most likely to attract.
    pub fprime_norm: f64,
    /// Counts per rule, in the order of the configured rules.
    pub counts: Vec<(String, CellCount)>,
}

fn diagonal_fprime(pa: &PopulationAnalysis, sign: f64) -> f64 {
    let v = pa.model().column(0) + pa.model().column(1) * sign;
    UnitVector::new(v)
        .and_then(|v| classify(pa, &v))
        .map(|r| r.fprime_norm)
        .unwrap_or(f64::NAN)
}

/// Population `‖f'‖` at the two diagonals `(a₁ ± a₂)/√2`.
pub fn diagonal_fprime_norms(pa: &PopulationAnalysis) -> (f64, f64) {
    (diagonal_fprime(pa, 1.0), diagonal_fprime(pa, -1.0))
}

pub fn table1(config: &Table1Config) -> Result<Vec<TableRow>> {
    if config.d < 2 {
        return Err(IcaError::Config("table 1 needs d ≥ 2".into()));
    }
    let mut rows = Vec::new();
    for (cell, law) in config.distributions.iter().enumerate() {
        let model = config.mixing.build(vec![*law; config.d])?;
        let mc = MonteCarlo {
            model: model.clone(),
            nls: config.nls.clone(),
            rules: config.rules.clone(),
            n: config.n,
            trials: config.trials,
            seed: config.seed,
            cell: cell as u64,
        };
        let counts = count_bad(&mc.run()?, config.threshold);
        for nl in &config.nls {
            let pa = PopulationAnalysis::new(model.clone(), config.engine, nl.clone())?;
            let (plus, minus) = diagonal_fprime_norms(&pa);
            rows.push(TableRow {
                distribution: *law,
                nl: nl.name().to_string(),
                d: config.d,
                fprime_plus: plus,
                fprime_minus: minus,
                fprime_norm: plus.min(minus),
                counts: config
                    .rules
                    .iter()
                    .map(|r| {
                        let key = (nl.name().to_string(), r.label.clone());
                        (r.label.clone(), counts.get(&key).copied().unwrap_or_default())
                    })
                    .collect(),
            });
        }
    }
    Ok(rows)
}

/// Writes table rows in long format, one line per (row, rule).
pub fn write_table1<W: Write>(rows: &[TableRow], rules: &[NamedRule], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "distribution",
        "nl",
        "d",
        "rule",
        "epsilon",
        "min_iter",
        "fprime_plus",
        "fprime_minus",
        "fprime_norm",
        "count",
        "failures",
        "trials",
    ])?;
    for row in rows {
        for (label, c) in &row.counts {
            let rule = rules
                .iter()
                .find(|r| &r.label == label)
                .ok_or_else(|| IcaError::Config(format!("unknown rule `{label}`")))?;
            w.write_record([
                row.distribution.to_string(),
                row.nl.clone(),
                row.d.to_string(),
                label.clone(),
                fmt_f64(rule.rule.epsilon),
                rule.rule.min_iterations.to_string(),
                fmt_f64(row.fprime_plus),
                fmt_f64(row.fprime_minus),
                fmt_f64(row.fprime_norm),
                c.count.to_string(),
                c.failures.to_string(),
                c.trials.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Source sets of the bad-estimate study: one, two or three Bimod(2, -0.4)
/// sources among five.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    A,
    B,
    C,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::A, Scenario::B, Scenario::C];

    pub fn sources(&self) -> Vec<DistributionSpec> {
        let list = match self {
            Scenario::A => "uniform, laplace, gg:2, gg:3, bimod:2,-0.4",
            Scenario::B => "uniform, laplace, gg:3, bimod:2,-0.4*2",
            Scenario::C => "uniform, laplace, bimod:2,-0.4*3",
        };
        crate::distributions::parse_distribution_list(list).expect("built-in scenario")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::A => "a",
            Scenario::B => "b",
            Scenario::C => "c",
        })
    }
}

impl FromStr for Scenario {
    type Err = IcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Scenario::A),
            "b" => Ok(Scenario::B),
            "c" => Ok(Scenario::C),
            other => Err(IcaError::Parse(format!("unknown scenario `{other}` (expected a, b or c)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table2Config {
    pub scenarios: Vec<Scenario>,
    pub sizes: Vec<usize>,
    pub nls: Vec<Nonlinearity>,
    pub trials: usize,
    pub rule: StoppingRule,
    pub threshold: f64,
    pub seed: u64,
    pub mixing: MixingSpec,
}

impl Default for Table2Config {
    fn default() -> Self {
        Table2Config {
            scenarios: Scenario::ALL.to_vec(),
            sizes: TABLE2_SIZES.to_vec(),
            nls: vec![Nonlinearity::gauss(), Nonlinearity::tanh(), Nonlinearity::kurtosis()],
            trials: DEFAULT_TRIALS,
            rule: StoppingRule::default(),
            threshold: DEVIATION_THRESHOLD,
            seed: 0,
            mixing: MixingSpec::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table2Cell {
    pub scenario: Scenario,
    pub n: usize,
    pub nl: String,
    pub counts: CellCount,
}

pub fn table2(config: &Table2Config) -> Result<Vec<Table2Cell>> {
    let rule = NamedRule { label: "rule".into(), rule: config.rule };
    let mut cells = Vec::new();
    for (si, scenario) in config.scenarios.iter().enumerate() {
        let model = config.mixing.build(scenario.sources())?;
        for (ni, &n) in config.sizes.iter().enumerate() {
            let mc = MonteCarlo {
                model: model.clone(),
                nls: config.nls.clone(),
                rules: vec![rule.clone()],
                n,
                trials: config.trials,
                seed: config.seed,
                cell: ((si as u64) << 32) | ni as u64,
            };
            let counts = count_bad(&mc.run()?, config.threshold);
            for nl in &config.nls {
                let key = (nl.name().to_string(), rule.label.clone());
                cells.push(Table2Cell {
                    scenario: *scenario,
                    n,
                    nl: nl.name().to_string(),
                    counts: counts.get(&key).copied().unwrap_or_default(),
                });
            }
        }
    }
    Ok(cells)
}

pub fn write_table2<W: Write>(cells: &[Table2Cell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "n", "nl", "count", "failures", "trials"])?;
    for c in cells {
        w.write_record([
            c.scenario.to_string(),
            c.n.to_string(),
            c.nl.clone(),
            c.counts.count.to_string(),
            c.counts.failures.to_string(),
            c.counts.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-trial outcomes as CSV.
pub fn write_outcomes<W: Write>(outcomes: &[TrialOutcome], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "trial",
        "nl",
        "rule",
        "deviation",
        "iterations",
        "halted_by",
        "mode",
        "matched_source",
        "error",
    ])?;
    for o in outcomes {
        w.write_record([
            o.trial.to_string(),
            o.nl.clone(),
            o.rule.clone(),
            fmt_f64(o.deviation),
            o.iterations.to_string(),
            o.halted_by.map(|h| h.to_string()).unwrap_or_default(),
            o.mode.map(|m| m.to_string()).unwrap_or_default(),
            o.matched_source.map(|i| i.to_string()).unwrap_or_default(),
            o.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One point of the curves on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub theta: f64,
    pub phi_norm: f64,
    pub fprime_norm: f64,
    pub contrast: f64,
}

/// `‖φ‖`, `‖f'‖` and the contrast at `grid` points of `[0, π]`.
pub fn figure1_data(pa: &PopulationAnalysis, grid: usize) -> Result<Vec<CurvePoint>> {
    if pa.model().dim() != 2 {
        return Err(IcaError::Parameter("curves on the circle need d = 2".into()));
    }
    if grid < 2 {
        return Err(IcaError::Config("grid needs at least 2 points".into()));
    }
    (0..grid)
        .into_par_iter()
        .map(|k| {
            let theta = std::f64::consts::PI * k as f64 / (grid - 1) as f64;
            let w = UnitVector::from_angle(theta);
            let fprime_norm = match pa.f_jacobian(&w) {
                Ok(j) => spectral_norm(&j),
                Err(IcaError::VanishingUpdate { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(CurvePoint {
                theta,
                phi_norm: tangential(pa, theta)?.abs(),
                fprime_norm,
                contrast: pa.contrast(&w)?,
            })
        })
        .collect()
}

pub fn write_curves<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "phi_norm", "fprime_norm", "contrast"])?;
    for p in points {
        w.write_record([
            fmt_f64(p.theta),
            fmt_f64(p.phi_norm),
            fmt_f64(p.fprime_norm),
            fmt_f64(p.contrast),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Angle `θ ∈ [0, π)` of the population iterates from `starts` initial
/// angles spread evenly over `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub start: usize,
    pub iteration: usize,
    pub theta: f64,
}

pub fn population_traces(
    pa: &PopulationAnalysis,
    starts: usize,
    iterations: usize,
) -> Result<Vec<TracePoint>> {
    if pa.model().dim() != 2 {
        return Err(IcaError::Parameter("traces on the circle need d = 2".into()));
    }
    let per_start: Vec<Result<Vec<TracePoint>>> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let theta0 = std::f64::consts::PI * (s as f64 + 0.5) / starts as f64;
            let mut w = UnitVector::from_angle(theta0);
            let mut pts = Vec::with_capacity(iterations + 1);
            for it in 0..=iterations {
                let v = w.as_vector();
                pts.push(TracePoint {
                    start: s,
                    iteration: it,
                    theta: v[1].atan2(v[0]).rem_euclid(std::f64::consts::PI),
                });
                if it < iterations {
                    w = pa.f_map(&w)?;
                }
            }
            Ok(pts)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_start {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_traces<W: Write>(points: &[TracePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["start", "iteration", "theta"])?;
    for p in points {
        w.write_record([p.start.to_string(), p.iteration.to_string(), fmt_f64(p.theta)])?;
    }
    w.flush()?;
    Ok(())
}

/// A rate with its 95% interval; `None` rate marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSummary {
    pub labels: Vec<String>,
    pub count: Option<usize>,
    pub trials: Option<usize>,
    pub rate: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// `p̂ ± 1.96 √(p̂(1 - p̂)/n)`, clipped to `[0, 1]`; for zero counts the
/// exact one-sided bound `[0, 1 - 0.025^{1/n}]` (≈ 3.69/n).
pub fn binomial_interval(count: usize, trials: usize) -> Result<(f64, f64, f64)> {
    if trials == 0 || count > trials {
        return Err(IcaError::Parameter(format!("invalid count {count} of {trials} trials")));
    }
    let n = trials as f64;
    let p = count as f64 / n;
    if count == 0 {
        return Ok((0.0, 0.0, 1.0 - 0.025f64.powf(1.0 / n)));
    }
    let half = 1.96 * (p * (1.0 - p) / n).sqrt();
    Ok((p, (p - half).max(0.0), (p + half).min(1.0)))
}

/// Rates and intervals for every row of a results CSV with `count` and
/// `trials` columns; the remaining columns (except `failures`) are labels.
pub fn summarize<R: Read>(input: R) -> Result<(Vec<String>, Vec<RateSummary>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IcaError::Parse(format!("results file lacks a `{name}` column")))
    };
    let (ci, ti) = (find("count")?, find("trials")?);
    let label_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != ci && i != ti && &headers[i] != "failures")
        .collect();
    let label_names = label_idx.iter().map(|&i| headers[i].to_string()).collect();
    let mut rows = Vec::new();
    for (lineno, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<Option<usize>> {
            let s = rec.get(i).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| {
                IcaError::Parse(format!("row {}: `{s}` is not a count", lineno + 2))
            })
        };
        let (count, trials) = (parse(ci)?, parse(ti)?);
        let interval = match (count, trials) {
            (Some(c), Some(t)) if t > 0 => Some(binomial_interval(c, t).map_err(|e| {
                IcaError::Parse(format!("row {}: {e}", lineno + 2))
            })?),
            _ => None,
        };
        rows.push(RateSummary {
            labels: label_idx.iter().map(|&i| rec.get(i).unwrap_or("").to_string()).collect(),
            count,
            trials,
            rate: interval.map(|x| x.0),
            lower: interval.map(|x| x.1),
            upper: interval.map(|x| x.2),
        });
    }
    Ok((label_names, rows))
}

pub fn write_summary<W: Write>(labels: &[String], rows: &[RateSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = labels.to_vec();
    header.extend(["count", "trials", "rate", "lower", "upper", "status"].map(String::from));
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        let mut rec = r.labels.clone();
        rec.push(r.count.map(|c| c.to_string()).unwrap_or_default());
        rec.push(r.trials.map(|c| c.to_string()).unwrap_or_default());
        rec.push(opt(r.rate));
        rec.push(opt(r.lower));
        rec.push(opt(r.upper));
        rec.push(if r.rate.is_some() { "ok" } else { "missing" }.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip formatting, in exponent form for very small or large
/// magnitudes; stable across runs and platforms.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x.is_nan() {
        String::new()
    } else if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_examples() {
        let (p, lo, hi) = binomial_interval(3218, 10000).unwrap();
        assert!((p - 0.3218).abs() < 1e-15);
        assert!(((hi - lo) / 2.0 - 0.0092).abs() < 5e-5);
        let (p, lo, hi) = binomial_interval(0, 10000).unwrap();
        assert_eq!((p, lo), (0.0, 0.0));
        assert!((hi - 3.69e-4).abs() < 1e-6);
        assert!(binomial_interval(3, 2).is_err());
        assert!(binomial_interval(0, 0).is_err());
    }

    #[test]
    fn summary_flags_missing_cells() {
        let text = "nl,count,failures,trials\ngauss,3218,0,10000\ntanh,,0,10000\nkurtosis,0,0,10000\n";
        let (labels, rows) = summarize(text.as_bytes()).unwrap();
        assert_eq!(labels, ["nl"]);
        assert_eq!(rows.len(), 3);
        assert!(rows[0].rate.is_some());
        assert!(rows[1].rate.is_none());
        assert_eq!(rows[2].rate, Some(0.0));
        assert!(summarize("nl,count\ngauss,3\n".as_bytes()).is_err());
        assert!(summarize("nl,count,trials\ngauss,x,3\n".as_bytes()).is_err());
    }

    #[test]
    fn trial_rng_is_counter_based() {
        let a = trial_rng(1, 2, 3).next_u64();
        assert_eq!(a, trial_rng(1, 2, 3).next_u64());
        assert_ne!(a, trial_rng(1, 2, 4).next_u64());
        assert_ne!(a, trial_rng(1, 3, 3).next_u64());
        assert_ne!(a, trial_rng(2, 2, 3).next_u64());
    }

    #[test]
    fn mixing_and_scenario_parsing() {
        assert_eq!("identity".parse::<MixingSpec>().unwrap(), MixingSpec::Identity);
        let m: MixingSpec = "orthogonal:7".parse().unwrap();
        assert_eq!(m.to_string().parse::<MixingSpec>().unwrap(), m);
        assert!("orthogonal:x".parse::<MixingSpec>().is_err());
        assert_eq!(Scenario::A.sources().len(), 5);
        assert_eq!(Scenario::B.sources().len(), 5);
        assert_eq!(Scenario::C.sources().len(), 5);
        assert_eq!("C".parse::<Scenario>().unwrap(), Scenario::C);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_ordered() {
        let model = MixingModel::identity(vec!["uniform".parse().unwrap(); 2]).unwrap();
        let mc = MonteCarlo {
            model,
            nls: vec![Nonlinearity::kurtosis(), Nonlinearity::tanh()],
            rules: table1_rules(),
            n: 500,
            trials: 20,
            seed: 11,
            cell: 0,
        };
        let a = mc.run().unwrap();
        assert_eq!(a, mc.run().unwrap());
        assert_eq!(a.len(), 20 * 2 * 4);
        assert!(a.windows(2).all(|w| w[0].trial <= w[1].trial));
        let counts = count_bad(&a, DEVIATION_THRESHOLD);
        assert!(counts.values().all(|c| c.trials == 20 && c.count <= c.trials));
    }

    #[test]
    fn uniform_table_row_has_known_norms() {
        let config = Table1Config {
            distributions: vec!["uniform".parse().unwrap()],
            trials: 10,
            n: 500,
            ..Table1Config::default()
        };
        let rows = table1(&config).unwrap();
        assert_eq!(rows.len(), 3);
        assert!((rows[0].fprime_norm - 5.12).abs() < 0.01);
        assert!((rows[2].fprime_norm - 3.0).abs() < 1e-6);
        let mut buf = Vec::new();
        write_table1(&rows, &config.rules, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 4);
    }

    #[test]
    fn curves_on_the_circle() {
        let model = MixingModel::identity(vec!["bimod:-0.4,2".parse().unwrap(); 2]).unwrap();
        let pa = PopulationAnalysis::with_defaults(model, "pow5".parse().unwrap()).unwrap();
        let pts = figure1_data(&pa, 181).unwrap();
        assert_eq!(pts.len(), 181);
        let quarter = &pts[45];
        assert!((quarter.theta - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!(quarter.phi_norm < 1e-10);
        assert!(quarter.fprime_norm < 1.0);
        let best = pts.iter().max_by(|a, b| a.contrast.total_cmp(&b.contrast)).unwrap();
        assert!((best.theta - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        let traces = population_traces(&pa, 10, 5).unwrap();
        assert_eq!(traces.len(), 10 * 6);
    }
}
