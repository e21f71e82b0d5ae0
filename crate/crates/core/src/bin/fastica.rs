//! Command-line front end: fixed-point scans, single runs and Monte Carlo
//! experiments, all emitting CSV.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fastica_fixedpoints::config::Config;
use fastica_fixedpoints::distributions::parse_distribution_list;
use fastica_fixedpoints::empirical::{self, StoppingRule};
use fastica_fixedpoints::experiment::{self, fmt_f64, MixingSpec, NamedRule, Scenario};
use fastica_fixedpoints::fixed_points::{self, FixedPointRecord};
use fastica_fixedpoints::population::{
    EngineMethod, ExpectationEngine, MixingModel, PopulationAnalysis, UnitVector,
};
use fastica_fixedpoints::{DistributionSpec, IcaError, Nonlinearity, Result};

#[derive(Parser)]
#[command(name = "fastica", version, about = "One-unit FastICA fixed points and spurious solutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` file; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// Source laws, comma-separated (e.g. `bimod:-0.4,2*2` or `uniform,laplace`).
    #[arg(long)]
    dist: Option<String>,
    /// `identity` or `orthogonal:<seed>`.
    #[arg(long)]
    mixing: Option<String>,
}

#[derive(Args, Clone, Default)]
struct EngineArgs {
    /// auto, mixture, tensor or qmc.
    #[arg(long)]
    engine: Option<String>,
    /// Quadrature nodes per axis.
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Locate and classify all fixed points on the unit circle (d = 2).
    Scan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        nl: Option<String>,
        /// Grid points on [0, π).
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Classify a given fixed point.
    Classify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        nl: Option<String>,
        /// Candidate vector, comma-separated (normalized automatically).
        #[arg(long, allow_hyphen_values = true)]
        v: Option<String>,
    },
    /// A single run of the empirical algorithm.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        nl: Option<String>,
        /// Sample size.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        min_iter: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Start vector, comma-separated (default: random from the seed).
        #[arg(long, allow_hyphen_values = true)]
        w0: Option<String>,
        /// Emit every iterate as `iter,w1,…,wd,delta`.
        #[arg(long)]
        trace: bool,
    },
    /// Independent trials, one CSV line per (trial, nonlinearity, rule).
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Nonlinearities, comma-separated.
        #[arg(long)]
        nl: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        /// Stopping thresholds, comma-separated.
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        min_iter: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Spurious-solution counts (1) or bad-estimate counts against N (2).
    Table {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        which: Option<u8>,
        #[arg(long)]
        trials: Option<usize>,
        /// Full-scale run with 10000 trials.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Nonlinearities, comma-separated.
        #[arg(long)]
        nl: Option<String>,
        /// Table 1: source laws (each row is iid), comma-separated.
        #[arg(long)]
        dist: Option<String>,
        /// Table 1: dimension.
        #[arg(long)]
        d: Option<usize>,
        /// Table 1: sample size.
        #[arg(long)]
        n: Option<usize>,
        /// Table 2: scenarios among a, b, c.
        #[arg(long)]
        scenario: Option<String>,
        /// Table 2: sample sizes, comma-separated.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        mixing: Option<String>,
    },
    /// Curves of ‖φ‖, ‖f'‖ and the contrast on the circle, or iterate traces.
    Figure1 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        nl: Option<String>,
        #[arg(long)]
        grid: Option<usize>,
        /// Emit population iterate traces from this many starts instead.
        #[arg(long)]
        traces: Option<usize>,
        /// Iterations per trace.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Rates and 95% intervals for a results CSV with `count` and `trials`.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

struct Ctx {
    config: Config,
}

impl Ctx {
    fn new(common: &Common, known: &[&str]) -> Result<Self> {
        let config = match &common.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        config.check_keys(known)?;
        Ok(Ctx { config })
    }

    fn value<T: std::str::FromStr>(&self, cli: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        fastica_fixedpoints::config::resolve(cli, &self.config, key, default)
    }

    fn text(&self, cli: Option<String>, key: &str, default: &str) -> String {
        cli.or_else(|| self.config.raw(key).map(str::to_string))
            .unwrap_or_else(|| default.to_string())
    }

    fn sources(&self, m: &ModelArgs, default: &str) -> Result<Vec<DistributionSpec>> {
        parse_distribution_list(&self.text(m.dist.clone(), "dist", default))
    }

    fn model(&self, m: &ModelArgs, default: &str) -> Result<MixingModel> {
        self.mixing(m.mixing.clone())?.build(self.sources(m, default)?)
    }

    fn mixing(&self, cli: Option<String>) -> Result<MixingSpec> {
        self.text(cli, "mixing", "identity").parse()
    }

    fn engine(&self, e: &EngineArgs) -> Result<ExpectationEngine> {
        let defaults = ExpectationEngine::default();
        let method: EngineMethod = self.text(e.engine.clone(), "engine", "auto").parse()?;
        Ok(ExpectationEngine {
            method,
            nodes: self.value(e.nodes, "nodes", defaults.nodes)?,
            ..defaults
        })
    }

    fn nl(&self, cli: Option<String>, default: &str) -> Result<Nonlinearity> {
        self.text(cli, "nl", default).trim().parse()
    }

    fn nls(&self, cli: Option<String>, default: &str) -> Result<Vec<Nonlinearity>> {
        split_list(&self.text(cli, "nl", default))
    }
}

fn split_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| IcaError::Parse(format!("`{s}`: {e}"))))
        .collect()
}

fn output(common: &Common) -> Result<Box<dyn Write>> {
    Ok(match &common.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_records<W: Write>(records: &[FixedPointRecord], with_theta: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = records.first().map_or(2, |r| r.v.dim());
    let mut header: Vec<String> = Vec::new();
    if with_theta {
        header.push("theta".into());
    }
    header.extend((1..=d).map(|i| format!("v{i}")));
    header.extend(["alpha", "fprime_norm", "class", "residual"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut rec: Vec<String> = Vec::new();
        if with_theta {
            rec.push(r.theta.map(fmt_f64).unwrap_or_default());
        }
        rec.extend(r.v.as_vector().iter().map(|&x| fmt_f64(x)));
        rec.push(fmt_f64(r.alpha));
        rec.push(fmt_f64(r.fprime_norm));
        rec.push(r.class.to_string());
        rec.push(fmt_f64(r.residual));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

const EXAMPLE_LAWS: &str = "bimod:-0.4,2*2";

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Scan { common, model, engine, nl, grid } => {
            let ctx = Ctx::new(&common, &["dist", "mixing", "engine", "nodes", "nl", "grid"])?;
            let pa = PopulationAnalysis::new(
                ctx.model(&model, EXAMPLE_LAWS)?,
                ctx.engine(&engine)?,
                ctx.nl(nl, "pow5")?,
            )?;
            let records = fixed_points::scan_circle(&pa, ctx.value(grid, "grid", 3600)?)?;
            write_records(&records, true, output(&common)?)
        }
        Command::Classify { common, model, engine, nl, v } => {
            let ctx = Ctx::new(&common, &["dist", "mixing", "engine", "nodes", "nl", "v"])?;
            let pa = PopulationAnalysis::new(
                ctx.model(&model, EXAMPLE_LAWS)?,
                ctx.engine(&engine)?,
                ctx.nl(nl, "pow5")?,
            )?;
            let v: Vec<f64> = split_list(&ctx.text(v, "v", "1,1"))?;
            let record = fixed_points::classify(&pa, &UnitVector::from_slice(&v)?)?;
            write_records(&[record], false, output(&common)?)
        }
        Command::Run { common, model, nl, n, eps, min_iter, max_iter, seed, w0, trace } => {
            let ctx = Ctx::new(
                &common,
                &["dist", "mixing", "nl", "n", "eps", "min_iter", "max_iter", "seed", "w0", "trace"],
            )?;
            let model = ctx.model(&model, "uniform,laplace")?;
            let defaults = StoppingRule::default();
            let rule = StoppingRule::new(
                ctx.value(eps, "eps", defaults.epsilon)?,
                ctx.value(min_iter, "min_iter", defaults.min_iterations)?,
                ctx.value(max_iter, "max_iter", defaults.max_iterations)?,
            )?;
            let seed = ctx.value(seed, "seed", 0)?;
            let trace = trace || ctx.value(None, "trace", false)?;
            let mut rng = experiment::trial_rng(seed, 0, 0);
            let sample_seed = rand::RngCore::next_u64(&mut rng);
            let start = match w0.or_else(|| ctx.config.raw("w0").map(str::to_string)) {
                Some(text) => UnitVector::from_slice(&split_list::<f64>(&text)?)?,
                None => empirical::random_start(model.dim(), &mut rng),
            };
            let sample = empirical::whiten(&empirical::generate_sample(
                &model,
                ctx.value(n, "n", 5000)?,
                sample_seed,
            )?)?;
            let res = empirical::run(&sample, &ctx.nl(nl, "tanh")?, &start, &rule, trace)?;
            let d = model.dim();
            let mut w = csv::Writer::from_writer(output(&common)?);
            if let Some(steps) = &res.trace {
                let mut header = vec!["iter".to_string()];
                header.extend((1..=d).map(|i| format!("w{i}")));
                header.push("delta".into());
                w.write_record(&header)?;
                for s in steps {
                    let mut rec = vec![s.iteration.to_string()];
                    rec.extend(s.w.iter().map(|&x| fmt_f64(x)));
                    rec.push(s.delta.map(fmt_f64).unwrap_or_default());
                    w.write_record(&rec)?;
                }
            } else {
                let mut header: Vec<String> =
                    ["iterations", "halted_by", "mode", "deviation", "matched_source"]
                        .map(String::from)
                        .to_vec();
                header.extend((1..=d).map(|i| format!("w{i}")));
                w.write_record(&header)?;
                let mut rec = vec![
                    res.iterations.to_string(),
                    res.halted_by.to_string(),
                    res.convergence_mode.to_string(),
                    fmt_f64(res.deviation),
                    res.matched_source.map(|i| i.to_string()).unwrap_or_default(),
                ];
                rec.extend(res.w_final.as_vector().iter().map(|&x| fmt_f64(x)));
                w.write_record(&rec)?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Montecarlo { common, model, nl, n, trials, eps, min_iter, seed } => {
            let ctx = Ctx::new(
                &common,
                &["dist", "mixing", "nl", "n", "trials", "eps", "min_iter", "seed"],
            )?;
            let min_iter = ctx.value(min_iter, "min_iter", 1)?;
            let eps: Vec<f64> = split_list(&ctx.text(eps, "eps", "1e-8"))?;
            let rules = eps
                .iter()
                .map(|&e| NamedRule::new(&fmt_f64(e), e, min_iter))
                .collect();
            let mc = experiment::MonteCarlo {
                model: ctx.model(&model, "uniform,laplace")?,
                nls: ctx.nls(nl, "gauss,tanh,kurtosis")?,
                rules,
                n: ctx.value(n, "n", 5000)?,
                trials: ctx.value(trials, "trials", experiment::DEFAULT_TRIALS)?,
                seed: ctx.value(seed, "seed", 0)?,
                cell: 0,
            };
            experiment::write_outcomes(&mc.run()?, output(&common)?)
        }
        Command::Table {
            common,
            which,
            trials,
            full,
            seed,
            nl,
            dist,
            d,
            n,
            scenario,
            sizes,
            mixing,
        } => {
            let ctx = Ctx::new(
                &common,
                &[
                    "which", "trials", "full", "seed", "nl", "dist", "d", "n", "scenario", "sizes",
                    "mixing",
                ],
            )?;
            let full = full || ctx.value(None, "full", false)?;
            let default_trials =
                if full { experiment::FULL_TRIALS } else { experiment::DEFAULT_TRIALS };
            let trials = ctx.value(trials, "trials", default_trials)?;
            let seed = ctx.value(seed, "seed", 0)?;
            let mixing = ctx.mixing(mixing)?;
            match ctx.value(which, "which", 1)? {
                1 => {
                    let defaults = experiment::Table1Config::default();
                    let config = experiment::Table1Config {
                        distributions: match dist.or_else(|| ctx.config.raw("dist").map(str::to_string)) {
                            Some(text) => parse_distribution_list(&text)?,
                            None => defaults.distributions.clone(),
                        },
                        nls: ctx.nls(nl, "gauss,tanh,kurtosis")?,
                        d: ctx.value(d, "d", 2)?,
                        n: ctx.value(n, "n", 5000)?,
                        trials,
                        seed,
                        mixing,
                        ..defaults
                    };
                    let rows = experiment::table1(&config)?;
                    experiment::write_table1(&rows, &config.rules, output(&common)?)
                }
                2 => {
                    let defaults = experiment::Table2Config::default();
                    let config = experiment::Table2Config {
                        scenarios: split_list::<Scenario>(&ctx.text(scenario, "scenario", "a,b,c"))?,
                        sizes: match ctx.text(sizes, "sizes", "").as_str() {
                            "" => defaults.sizes.clone(),
                            text => split_list(text)?,
                        },
                        nls: ctx.nls(nl, "gauss,tanh,kurtosis")?,
                        trials,
                        seed,
                        mixing,
                        ..defaults
                    };
                    experiment::write_table2(&experiment::table2(&config)?, output(&common)?)
                }
                other => Err(IcaError::Config(format!("no table {other} (expected 1 or 2)"))),
            }
        }
        Command::Figure1 { common, model, engine, nl, grid, traces, iterations } => {
            let ctx = Ctx::new(
                &common,
                &["dist", "mixing", "engine", "nodes", "nl", "grid", "traces", "iterations"],
            )?;
            let pa = PopulationAnalysis::new(
                ctx.model(&model, EXAMPLE_LAWS)?,
                ctx.engine(&engine)?,
                ctx.nl(nl, "pow5")?,
            )?;
            let traces = match traces {
                Some(t) => Some(t),
                None => ctx.config.get("traces")?,
            };
            match traces {
                Some(starts) => {
                    let its = ctx.value(iterations, "iterations", 20)?;
                    let pts = experiment::population_traces(&pa, starts, its)?;
                    experiment::write_traces(&pts, output(&common)?)
                }
                None => {
                    let pts = experiment::figure1_data(&pa, ctx.value(grid, "grid", 721)?)?;
                    experiment::write_curves(&pts, output(&common)?)
                }
            }
        }
        Command::Summarize { common, input } => {
            let ctx = Ctx::new(&common, &["input"])?;
            let path: PathBuf = match input {
                Some(p) => p,
                None => ctx
                    .config
                    .get("input")?
                    .ok_or_else(|| IcaError::Config("summarize needs --input".into()))?,
            };
            let (labels, rows) = experiment::summarize(File::open(path)?)?;
            experiment::write_summary(&labels, &rows, output(&common)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
