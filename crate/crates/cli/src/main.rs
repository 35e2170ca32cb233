use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cascade_bai::algo::DEFAULT_MAX_STEPS;
use cascade_bai::harness::{
    self, experiment_kscaling, experiment_ordering, experiment_semifeedback, fit_scaling, ExperimentConfig,
    ExperimentName, Scale,
};
use cascade_bai::instance::ItemSpec;
use cascade_bai::{AlgoSpec, FitModel, InstanceSpec, OrderingPolicy};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "cascade-bai", version, about = "Best-arm identification for cascading bandits")]
struct Cli {
    /// TOML file with default values for any flag (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one seeded trial and print the outcome as JSON.
    Run(Opts),
    /// Run a batch of seeded trials and write them as CSV.
    Trials(Opts),
    /// Print the analytic bound quantities as JSON.
    Bounds(Opts),
    /// Run one of the experiment drivers and write summary CSV.
    Experiment(Opts),
    /// Fit c1 K^p + c2 to (K, mean_steps) rows of a CSV file.
    Fit(Opts),
}

/// Every option, shared by all subcommands; each subcommand reads what it needs.
#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Opts {
    /// Comma-separated click probabilities.
    #[arg(long, value_delimiter = ',', num_args = 1.., conflicts_with_all = ["two_prob", "linspace"])]
    weights: Option<Vec<f64>>,
    /// `w*,w',L`: K items at w*, the rest at w'.
    #[arg(long = "two-prob", value_delimiter = ',', conflicts_with = "linspace")]
    #[serde(rename = "two-prob", alias = "two_prob")]
    two_prob: Option<Vec<f64>>,
    /// `w_max,w_min,L`: L linearly spaced probabilities.
    #[arg(long, value_delimiter = ',')]
    linspace: Option<Vec<f64>>,
    /// List size.
    #[arg(long = "K")]
    #[serde(rename = "K")]
    k: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// cascade or batrac.
    #[arg(long)]
    algo: Option<String>,
    /// Batch size for batrac (defaults to K).
    #[arg(long)]
    b: Option<usize>,
    /// tcount, emp-asc, emp-desc, ucb-asc, ucb-desc, lcb-asc or lcb-desc.
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "max-steps")]
    #[serde(rename = "max-steps", alias = "max_steps")]
    max_steps: Option<u64>,
    /// Number of trials.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// ordering, semifeedback or kscaling.
    #[arg(long)]
    name: Option<String>,
    /// desk or paper.
    #[arg(long)]
    scale: Option<String>,
    /// linear or quadratic.
    #[arg(long)]
    model: Option<String>,
    #[arg(long = "in")]
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    /// Only fit rows whose `family` column equals this value.
    #[arg(long)]
    family: Option<String>,
}

macro_rules! overlay {
    ($flags:ident, $file:ident; $($field:ident),*) => {
        Opts { $($field: $flags.$field.or($file.$field)),* }
    };
}

impl Opts {
    fn merged(self, file: Opts) -> Opts {
        let flags = self;
        // an instance given on the command line replaces the file's instance
        let file = if flags.weights.is_some() || flags.two_prob.is_some() || flags.linspace.is_some() {
            Opts { weights: None, two_prob: None, linspace: None, ..file }
        } else {
            file
        };
        overlay!(flags, file; weights, two_prob, linspace, k, delta, eps, algo, b, order, seed,
            max_steps, n, out, jobs, name, scale, model, input, family)
    }

    fn instance(&self) -> Result<InstanceSpec> {
        let k = self.k.ok_or_else(|| anyhow!("--K is required"))?;
        for v in [&self.two_prob, &self.linspace].into_iter().flatten() {
            if v.len() != 3 {
                bail!("expected three comma-separated values, got {}", v.len());
            }
        }
        let items = match (&self.weights, &self.two_prob, &self.linspace) {
            (Some(w), None, None) => ItemSpec::Explicit(w.clone()),
            (None, Some(t), None) => ItemSpec::TwoProb { w_star: t[0], w_prime: t[1], l: as_count(t[2])? },
            (None, None, Some(s)) => ItemSpec::Linspace { w_max: s[0], w_min: s[1], l: as_count(s[2])? },
            (None, None, None) => bail!("one of --weights, --two-prob or --linspace is required"),
            _ => bail!("give exactly one of --weights, --two-prob or --linspace"),
        };
        Ok(InstanceSpec { items, k, epsilon: self.eps.unwrap_or(0.0), delta: self.delta.unwrap_or(0.1) })
    }

    fn algo(&self, k: usize) -> Result<AlgoSpec> {
        let spec = match self.algo.as_deref().unwrap_or("cascade") {
            "cascade" => AlgoSpec::cascade(),
            "batrac" => AlgoSpec::batrac(self.b.unwrap_or(k)),
            other => bail!("unknown --algo {other:?} (expected cascade or batrac)"),
        };
        let order: OrderingPolicy = self.order.as_deref().unwrap_or("tcount").parse()?;
        Ok(spec.with_ordering(order).with_max_steps(self.max_steps.unwrap_or(DEFAULT_MAX_STEPS)))
    }

    fn jobs(&self) -> usize {
        self.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

fn as_count(x: f64) -> Result<usize> {
    if x >= 1.0 && x.fract() == 0.0 {
        Ok(x as usize)
    } else {
        bail!("L must be a positive integer, got {x}")
    }
}

fn load_config(path: Option<&Path>) -> Result<Opts> {
    match path {
        None => Ok(Opts::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_run(o: &Opts) -> Result<()> {
    let spec = o.instance()?;
    let algo = o.algo(spec.k)?;
    let instance = spec.build::<f64>()?;
    let seed = o.seed.unwrap_or(0);
    let r = algo.run(&instance, seed)?;
    let value = json!({
        "algorithm": algo.algorithm.to_string(),
        "ordering": algo.config.ordering.name(),
        "seed": seed,
        "recommended": r.recommended,
        "steps": r.steps,
        "success": r.success,
        "total_observations": r.total_observations,
        "per_item_obs": r.per_item_obs,
        "stop_reason": r.stop_reason.name(),
    });
    emit(o.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&value)?))
}

fn cmd_trials(o: &Opts) -> Result<()> {
    let spec = o.instance()?;
    let algo = o.algo(spec.k)?;
    let records = harness::run_trials(&spec, &algo, o.n.unwrap_or(20), o.seed.unwrap_or(0), o.jobs())?;
    emit(o.out.as_deref(), &harness::to_csv_string(&records)?)
}

fn cmd_bounds(o: &Opts) -> Result<()> {
    let report = harness::bounds_report(&o.instance()?)?;
    emit(o.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&report)?))
}

fn cmd_experiment(o: &Opts) -> Result<()> {
    let name: ExperimentName =
        o.name.as_deref().ok_or_else(|| anyhow!("--name is required"))?.parse().map_err(|e: String| anyhow!(e))?;
    let scale: Scale = o.scale.as_deref().unwrap_or("desk").parse().map_err(|e: String| anyhow!(e))?;
    let mut cfg = ExperimentConfig::preset(name, scale);
    cfg.parallelism = o.jobs();
    cfg.master_seed = o.seed.unwrap_or(cfg.master_seed);
    cfg.n_trials = o.n.unwrap_or(cfg.n_trials);
    cfg.max_steps = o.max_steps.unwrap_or(cfg.max_steps);
    cfg.delta = o.delta.unwrap_or(cfg.delta);
    match name {
        ExperimentName::Ordering => emit(o.out.as_deref(), &harness::to_csv_string(&experiment_ordering(&cfg)?)?),
        ExperimentName::Semifeedback => {
            emit(o.out.as_deref(), &harness::to_csv_string(&experiment_semifeedback(&cfg)?)?)
        }
        ExperimentName::Kscaling => {
            let report = experiment_kscaling(&cfg)?;
            let fits: Vec<_> = report
                .fits
                .iter()
                .map(|f| match &f.fit {
                    Ok(fit) => json!({ "family": f.family.label(), "fit": fit }),
                    Err(e) => json!({ "family": f.family.label(), "error": e.to_string() }),
                })
                .collect();
            emit(o.out.as_deref(), &harness::to_csv_string(&report.rows)?)?;
            let fits = serde_json::to_string_pretty(&fits)?;
            if o.out.is_some() {
                println!("{fits}");
            } else {
                eprintln!("{fits}");
            }
            Ok(())
        }
    }
}

fn cmd_fit(o: &Opts) -> Result<()> {
    let model: FitModel = o.model.as_deref().unwrap_or("linear").parse().map_err(|e: String| anyhow!(e))?;
    let path = o.input.as_deref().ok_or_else(|| anyhow!("--in is required"))?;
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let k_col = col("K").ok_or_else(|| anyhow!("{} has no K column", path.display()))?;
    let y_col = col("mean_steps").ok_or_else(|| anyhow!("{} has no mean_steps column", path.display()))?;
    let family_col = col("family");
    let mut points = Vec::new();
    for row in reader.records() {
        let row = row?;
        if let (Some(want), Some(c)) = (&o.family, family_col) {
            if row.get(c) != Some(want.as_str()) {
                continue;
            }
        }
        let k: f64 = row[k_col].parse().with_context(|| format!("bad K value {:?}", &row[k_col]))?;
        let y: f64 = row[y_col].parse().with_context(|| format!("bad mean_steps value {:?}", &row[y_col]))?;
        points.push((k, y));
    }
    let fit = fit_scaling(&points, model)?;
    emit(o.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&fit)?))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Run(o) => cmd_run(&o.merged(file)),
        Command::Trials(o) => cmd_trials(&o.merged(file)),
        Command::Bounds(o) => cmd_bounds(&o.merged(file)),
        Command::Experiment(o) => cmd_experiment(&o.merged(file)),
        Command::Fit(o) => cmd_fit(&o.merged(file)),
    }
}
