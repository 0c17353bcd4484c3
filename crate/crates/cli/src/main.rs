//! `pbi`: run online estimation experiments and inspect their traces.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use perturbed_bayes::diag::{
    fmt_f64, predict_scores, read_trace_errors, slope_diagnostic, write_checkpoint, TraceWriter,
};
use perturbed_bayes::engine::RunOptions;
use perturbed_bayes::experiment::{preset, ExperimentConfig, PRESETS};
use perturbed_bayes::models::{MixtureLogistic, Model};

#[derive(Parser)]
#[command(name = "pbi", version, about = "Perturbed Bayesian online estimation")]
struct Cli {
    /// Worker threads for likelihood evaluation.
    #[arg(long, global = true, env = "PBI_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its trace.
    Run(RunArgs),
    /// Fit the log-error versus log-t slope of a trace.
    Slope {
        trace: PathBuf,
        /// Window length in decades of t, counted back from the last row.
        #[arg(long, default_value_t = 1.0)]
        window: f64,
    },
    /// Purchase probabilities under a fitted mixture of logistic regressions.
    Predict(PredictArgs),
    /// List presets, or print one as a config file.
    Presets {
        name: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Start from a bundled preset (a config file is applied on top).
    #[arg(long, short)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    /// Grid particles N.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_aux: Option<usize>,
    #[arg(long)]
    t1: Option<u64>,
    /// Comma-separated θ⋆ for the error column.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    truth: Option<Vec<f64>>,
    /// Observations from a CSV file (response first, then covariates).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    shuffle_seed: Option<u64>,
    /// Trace CSV path.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Write the final main particles here.
    #[arg(long)]
    particles: Option<PathBuf>,
    /// Record wall time per observation.
    #[arg(long)]
    timing: bool,
    /// Any config key, e.g. `algo.kappa=0.8` (value in TOML syntax).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Write the resolved config here and exit without running.
    #[arg(long)]
    emit_config: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Covariate CSV with a header and `dx` columns.
    input: PathBuf,
    #[arg(long)]
    components: usize,
    #[arg(long)]
    dx: usize,
    /// Comma-separated parameter vector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "trace")]
    theta: Option<Vec<f64>>,
    /// Take the estimate from the last row of this trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
    let res = match cli.cmd {
        Command::Run(a) => cmd_run(a),
        Command::Slope { trace, window } => cmd_slope(&trace, window),
        Command::Predict(a) => cmd_predict(a),
        Command::Presets { name } => cmd_presets(name.as_deref()),
    };
    if let Err(e) = res {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}

fn set_key(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().ok_or_else(|| anyhow!("empty key"))?;
    let mut table = root;
    for p in parts {
        table = table
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("{key}: {p} is not a section"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if k != "model" && k != "data" => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Preset, then config file, then flags.
fn resolve_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut table = match &a.preset {
        Some(name) => toml::Table::try_from(preset(name)?)?,
        None => toml::Table::new(),
    };
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
        merge(&mut table, file);
    }
    if !table.contains_key("model") {
        bail!("no model: pass --preset or a config file with a [model] section");
    }
    let flag = |t: &mut toml::Table, k: &str, v: Option<toml::Value>| v.map_or(Ok(()), |v| set_key(t, k, v));
    flag(&mut table, "run.seed", a.seed.map(|v| toml::Value::Integer(v as i64)))?;
    flag(&mut table, "run.horizon", a.horizon.map(|v| toml::Value::Integer(v as i64)))?;
    flag(&mut table, "algo.n", a.n.map(|v| toml::Value::Integer(v as i64)))?;
    flag(&mut table, "algo.n_aux", a.n_aux.map(|v| toml::Value::Integer(v as i64)))?;
    flag(&mut table, "algo.t1", a.t1.map(|v| toml::Value::Integer(v as i64)))?;
    flag(&mut table, "run.truth", a.truth.as_ref().map(|t| toml::Value::try_from(t).expect("floats")))?;
    flag(&mut table, "run.output", a.output.as_ref().map(|p| toml::Value::String(p.display().to_string())))?;
    if a.timing {
        set_key(&mut table, "run.timing", toml::Value::Boolean(true))?;
    }
    if let Some(path) = &a.data {
        let mut data = toml::Table::new();
        data.insert("source".into(), "csv".into());
        data.insert("path".into(), toml::Value::String(path.display().to_string()));
        if let Some(s) = a.shuffle_seed {
            data.insert("shuffle_seed".into(), toml::Value::Integer(s as i64));
        }
        table.insert("data".into(), toml::Value::Table(data));
    }
    for s in &a.sets {
        let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {s:?}"))?;
        set_key(&mut table, k.trim(), parse_value(v.trim()))?;
    }
    let cfg: ExperimentConfig = table.try_into().context("invalid configuration")?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let cfg = resolve_config(&a)?;
    if let Some(path) = &a.emit_config {
        std::fs::write(path, toml::to_string(&cfg)?).with_context(|| format!("writing {}", path.display()))?;
        return Ok(());
    }
    let prepared = cfg.prepare()?;
    let d = prepared.model.dim();
    let truth = prepared.truth.clone();
    let mut engine = cfg.engine(&prepared)?;
    let opts = RunOptions {
        horizon: cfg.run.horizon,
        truth: truth.clone(),
        checkpoints: cfg.run.checkpoints.clone(),
        timing: cfg.run.timing,
    };
    let report = engine.run(prepared.stream, &opts)?;

    let output = cfg.run.output.clone().unwrap_or_else(|| PathBuf::from("trace.csv"));
    let mut tw = TraceWriter::new(create(&output)?, d, truth.is_some())?;
    for r in &report.rows {
        tw.write_row(r)?;
    }
    tw.finish()?.flush()?;
    if let Some(path) = &a.particles {
        write_checkpoint(create(path)?, engine.main())?.flush()?;
    }

    let mut out = std::io::stdout().lock();
    writeln!(out, "model: {}", prepared.model.name())?;
    writeln!(out, "observations: {}", report.observations)?;
    writeln!(out, "perturbations: {}", engine.schedule_state().p)?;
    if report.early_stop {
        writeln!(out, "stream ended before the horizon")?;
    }
    if report.rejected > 0 {
        writeln!(
            out,
            "rejected observations: {} (first: {})",
            report.rejected,
            report.first_rejection.as_deref().unwrap_or("")
        )?;
    }
    let est: Vec<String> = report.final_estimate.iter().map(|&v| fmt_f64(v)).collect();
    writeln!(out, "estimate: {}", est.join(","))?;
    if let Some(t) = &truth {
        let err = perturbed_bayes::engine::estimate_distance(t, &report.final_estimate, prepared.model.as_ref());
        writeln!(out, "error: {}", fmt_f64(err))?;
    }
    writeln!(out, "trace: {}", output.display())?;
    Ok(())
}

fn cmd_slope(trace: &Path, window: f64) -> Result<()> {
    let f = File::open(trace).with_context(|| format!("opening {}", trace.display()))?;
    let rows = read_trace_errors(f)?;
    let fit = slope_diagnostic(&rows, window)?;
    if let Some(w) = &fit.warning {
        eprintln!("warning: {w}");
    }
    println!("slope: {}", fmt_f64(fit.slope));
    println!("rows: {}", fit.rows);
    Ok(())
}

fn last_estimate(trace: &Path, d: usize) -> Result<Vec<f64>> {
    let mut rd = csv::Reader::from_path(trace).with_context(|| format!("opening {}", trace.display()))?;
    let header = rd.headers()?.clone();
    let cols: Vec<usize> = (1..=d)
        .map(|i| header.iter().position(|h| h == format!("theta_{i}")).ok_or_else(|| anyhow!("trace lacks theta_{i}")))
        .collect::<Result<_>>()?;
    let last = rd.records().last().ok_or_else(|| anyhow!("trace has no rows"))??;
    cols.iter().map(|&c| last[c].parse::<f64>().map_err(Into::into)).collect()
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    if a.components == 0 || a.components > 16 || a.dx == 0 {
        bail!("need 1..=16 components and dx >= 1");
    }
    let model = MixtureLogistic::new(a.components, a.dx);
    let theta = match (&a.theta, &a.trace) {
        (Some(t), _) => t.clone(),
        (None, Some(path)) => last_estimate(path, model.dim())?,
        (None, None) => bail!("pass --theta or --trace"),
    };
    let mut rd = csv::Reader::from_path(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let cols = rd.headers()?.len();
    if cols != a.dx {
        bail!("input has {cols} columns, expected dx = {}", a.dx);
    }
    let rows: Vec<Vec<f64>> = rd
        .records()
        .map(|r| {
            let r = r?;
            r.iter().map(|f| f.trim().parse::<f64>().map_err(Into::into)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let scores = predict_scores(&model, &theta, &rows)?;
    let sink: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["score"])?;
    for s in scores {
        w.write_record([fmt_f64(s)])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_presets(name: Option<&str>) -> Result<()> {
    match name {
        None => {
            for p in PRESETS {
                let cfg = preset(p)?;
                let d = cfg.model.build()?.dim();
                println!("{p}\td={d}\tN={}\tN_aux={}\thorizon={}", cfg.algo.n, cfg.algo.n_aux, cfg.run.horizon);
            }
        }
        Some(p) => print!("{}", toml::to_string(&preset(p)?)?),
    }
    Ok(())
}
