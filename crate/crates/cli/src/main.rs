#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lassocv::diagnostics::{
    concentration_rate, rate_optimal_inputs, noise_tail_check, tail_events, bound_terms, AnRule,
    BoundInputs,
};
use lassocv::report::{self, config::to_json, records::write_consistency};
use lassocv::selection::{GicScaling, SearchGrid};
use lassocv::simulate::{
    consistency_experiment, draw_replication, run_selectors, with_workers, ConditionDesign,
    ConsistencyConfig, PRule, SimOptions, TMaxRule,
};
use lassocv::types::{FoldScheme, NoiseKind, Selector, SimCondition};
use lassocv::{Error, Result};

#[derive(Parser)]
#[command(name = "lassocv", version, about = "Constrained lasso tuning and excess-risk simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Common {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "LASSOCV_WORKERS")]
    workers: Option<usize>,
    /// Use the literal GIC penalty without the 1/n factor.
    #[arg(long, global = true)]
    gic_unnormalized: bool,
}

impl Common {
    fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    fn scaling(&self) -> GicScaling {
        if self.gic_unnormalized {
            GicScaling::Unnormalized
        } else {
            GicScaling::Normalized
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation grid described by a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Excess risk of CV across growing sample sizes.
    Consistency {
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
        n_list: Vec<usize>,
        /// `2n`, `n`, or a fixed integer.
        #[arg(long, default_value = "2n")]
        p_rule: String,
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Select the radius on a CSV data set (header row, response first).
    Select {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "cv")]
        selector: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        grid_size: usize,
        /// Noise variance for AIC and BIC; estimated by SSR when absent.
        #[arg(long)]
        sigma2: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo checks of the inequalities behind the risk bound.
    Diagnose(Diagnose),
    /// Evaluate the two terms of the finite-sample risk bound.
    Bound {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long)]
        cn: usize,
        #[arg(long)]
        an: f64,
        #[arg(long)]
        tn: f64,
        #[arg(long, default_value_t = 0.0)]
        f: f64,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// Use this value in place of `ln p`.
        #[arg(long)]
        log_p: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Concentration,
    Tails,
    Noise,
    Bound,
}

#[derive(Args)]
struct Diagnose {
    #[arg(long, value_enum)]
    check: Check,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    p: usize,
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 5.0)]
    snr: f64,
    #[arg(long, default_value = "gaussian")]
    noise: String,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    /// Sample sizes for the concentration fit.
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,400,800")]
    sizes: Vec<usize>,
    /// Sample sizes for the tail check.
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,400")]
    n_list: Vec<usize>,
    /// `rate` or a fixed positive number.
    #[arg(long, default_value = "rate")]
    a_n: String,
    /// Thresholds for the noise tail check.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    x: Vec<f64>,
    /// Squared sup-norm proxy; defaults to 9 times the SNR.
    #[arg(long)]
    f: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, out, common } => simulate(&config, &out, common),
        Command::Consistency {
            k,
            q,
            n_list,
            p_rule,
            reps,
            delta,
            out,
            common,
        } => {
            let cfg = ConsistencyConfig {
                n_list,
                p_rule: p_rule.parse::<PRule>()?,
                q,
                k,
                reps,
                seed: common.seed.unwrap_or(1),
                delta,
                ..ConsistencyConfig::default()
            };
            let rows = with_workers(common.workers(), || consistency_experiment(&cfg))??;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            let path = out.join("consistency.csv");
            write_consistency(&rows, &path)?;
            println!("n,p,a_n,t_n,median_excess,exceed_fraction");
            for r in &rows {
                println!(
                    "{},{},{:.4},{:.4},{:.6},{:.3}",
                    r.n, r.p, r.a_n, r.t_n, r.median_excess, r.exceed_fraction
                );
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Select {
            data,
            selector,
            k,
            grid_size,
            sigma2,
            common,
        } => select(&data, &selector, k, grid_size, sigma2, common),
        Command::Diagnose(d) => diagnose(d),
        Command::Bound {
            n,
            p,
            q,
            cn,
            an,
            tn,
            f,
            kappa,
            log_p,
            common: _,
        } => {
            let inputs = BoundInputs {
                n,
                p,
                q,
                c_n: cn,
                a_n: an,
                t_n: tn,
                f_const: f,
                kappa,
                log_p,
            };
            let (o1, o2) = bound_terms(&inputs)?;
            println!("omega1 = {o1}");
            println!("omega2 = {o2}");
            Ok(())
        }
    }
}

fn simulate(config: &Path, out: &Path, common: Common) -> Result<()> {
    let mut plan = report::load_config(config)?;
    if let Some(seed) = common.seed {
        plan.seed = seed;
        plan.resolved.insert("seed".into(), seed.into());
        for c in &mut plan.conditions {
            c.seed = seed;
        }
    }
    plan.options.gic_scaling = common.scaling();
    eprintln!("{}", to_json(&plan));
    let output = report::run_simulation(&plan, out, common.workers())?;
    for row in &output.summary {
        println!(
            "{} {:>3} mean={:.4} median={:.4} failures={}",
            row.condition_id, row.selector, row.mean, row.median, row.failures
        );
    }
    println!(
        "wrote {} records to {}",
        output.manifest.record_count,
        out.join("records.csv").display()
    );
    Ok(())
}

fn select(
    data: &Path,
    selector: &str,
    k: usize,
    grid_size: usize,
    sigma2: Option<f64>,
    common: Common,
) -> Result<()> {
    let selector: Selector = selector.parse()?;
    let data = report::read_dataset(data)?;
    let opts = SimOptions {
        k,
        grid_size,
        gic_scaling: common.scaling(),
        ..SimOptions::default()
    };
    opts.validate(data.n())?;
    let folds = FoldScheme::k_fold(data.n(), k, common.seed.unwrap_or(1))?;
    let grid: SearchGrid = TMaxRule::SampleMoment.grid(&data, opts.q, k, grid_size)?;
    let sigma2 = match (sigma2, selector) {
        (Some(s), _) if !(s > 0.0) => return Err(invalid("--sigma2 must be positive")),
        (Some(s), _) => s,
        (None, Selector::Aic | Selector::Bic) => {
            let ssr = lassocv::selection::select_ssr(&data, &opts.solver)?;
            let s = ssr.criterion.last().copied().unwrap_or(0.0).powi(2);
            eprintln!("sigma2 estimated by SSR: {s}");
            if !(s > 0.0) {
                return Err(invalid("SSR noise estimate is zero; pass --sigma2"));
            }
            s
        }
        (None, _) => 1.0,
    };
    let results = with_workers(common.workers(), || {
        run_selectors(&data, &folds, &grid, &[selector], sigma2, &opts)
    })?;
    let (_, result, _) = results.into_iter().next().expect("one selector requested");
    let res = result?;
    println!("selector = {}", res.selector);
    println!("t_hat = {}", res.t_hat);
    println!("converged = {}", res.converged);
    let nonzero: Vec<(usize, f64)> = res
        .beta_hat
        .iter()
        .enumerate()
        .filter(|(_, b)| b.abs() > opts.solver.zero_threshold)
        .map(|(j, &b)| (j, b))
        .collect();
    println!("nonzero = {}", nonzero.len());
    for (j, b) in nonzero {
        println!("beta[{}] = {b}", j + 1);
    }
    Ok(())
}

fn diagnose(d: Diagnose) -> Result<()> {
    let seed = d.common.seed.unwrap_or(1);
    let noise: NoiseKind = d.noise.parse()?;
    let model = || -> Result<_> {
        let cond = SimCondition {
            n: d.n,
            p: d.p,
            rho: d.rho,
            alpha: d.alpha,
            snr: d.snr,
            noise_kind: noise,
            replications: 1,
            seed,
        };
        cond.validate()?;
        Ok(draw_replication(&cond, &ConditionDesign::new(d.p, d.rho)?, 0)?.model)
    };
    let f_const = d.f.unwrap_or(9.0 * d.snr);
    let workers = d.common.workers();
    match d.check {
        Check::Concentration => {
            let model = model()?;
            let fit = with_workers(workers, || concentration_rate(&model, &d.sizes, d.reps, seed))??;
            println!("size,mean_error");
            for (m, e) in fit.sizes.iter().zip(&fit.mean_errors) {
                println!("{m},{e}");
            }
            println!("slope = {:.4} (expected -0.5)", fit.slope);
        }
        Check::Tails => {
            let model = model()?;
            let a_n = match d.a_n.as_str() {
                "rate" => AnRule::RateOptimal { k: d.k, q: d.q },
                other => AnRule::Fixed(other.parse().map_err(|_| invalid(format!("bad --a-n `{other}`")))?),
            };
            let n0 = *d.n_list.first().ok_or_else(|| invalid("--n-list is empty"))?;
            let opts = SimOptions { k: d.k.min(n0).max(2), q: d.q, ..SimOptions::default() };
            let t_n = opts.t_n(n0, d.p)?;
            let rows = with_workers(workers, || {
                tail_events(&model, a_n, t_n, &d.n_list, d.reps, seed, f_const, d.kappa)
            })??;
            println!("n,a_n,upper,freq_upper,freq_lower,bound,within");
            for r in rows {
                println!(
                    "{},{:.4},{:.4},{},{},{:.3e},{}",
                    r.n, r.a_n, r.upper, r.freq_upper, r.freq_lower, r.bound, r.within_bound()
                );
            }
        }
        Check::Noise => {
            let rows = with_workers(workers, || noise_tail_check(noise, d.n, d.reps, seed, &d.x))??;
            println!("x,frequency,bound,se,pass");
            for r in rows {
                println!("{},{},{:.6},{:.6},{}", r.x, r.frequency, r.bound, r.se, r.pass);
            }
        }
        Check::Bound => {
            let inputs = rate_optimal_inputs(d.n, d.p, d.q, d.k, f_const, d.kappa)?;
            let (o1, o2) = bound_terms(&inputs)?;
            println!("a_n = {}", inputs.a_n);
            println!("t_n = {}", inputs.t_n);
            println!("omega1 = {o1}");
            println!("omega2 = {o2}");
        }
    }
    Ok(())
}
