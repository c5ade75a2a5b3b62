//! Command-line entry points.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use jedi_core::data::{gen_gaussian10d, gen_mixture2d, Gaussian10dSpec, Mixture2dSpec, DEFAULT_SPLIT};
use jedi_core::model::{EtaSchedule, DEFAULT_ETA0};
use jedi_core::teacher::TeacherVariant;

use crate::config::{parse_list, parse_seeds, Config};
use crate::csvio::{read_examples, write_examples, CsvReport};
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, summarize, write_experiment, Bandwidth, DatasetSpec, ExperimentSpec, ManifestEntry, TeacherSetup, MANIFEST};
use crate::service::{serve, Registry, ServiceConfig};
use crate::trace::read_jsonl;

#[derive(Debug, Parser)]
#[command(name = "jedi", version, about = "Memory-aware machine teaching: simulations and a teaching service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Mixture2d,
    Gaussian10d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as `teach.csv` and `eval.csv`.
    Datagen {
        #[arg(long, value_enum)]
        kind: DataKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a teaching simulation over a grid of teachers and seeds.
    Sim(SimArgs),
    /// Summarize the runs written by `sim`.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: ReportFormat,
    },
    /// Host teaching sessions over HTTP.
    Serve(ServeArgs),
}

pub const SIM_KEYS: &[&str] = &[
    "dataset", "teacher", "mode", "beta", "eta0", "eta-c", "max-iter", "seeds", "out", "noise", "bandwidth", "split", "l2", "cold-start",
];

#[derive(Debug, Default, clap::Args)]
pub struct SimArgs {
    /// `mixture2d`, `gaussian10d`, or a CSV path.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Comma-separated teachers among `jedi`, `imt`, `rt`, `sgd`. Without it
    /// the dataset's standard comparison is run.
    #[arg(long)]
    pub teacher: Option<String>,
    /// `omniscient` or `harmonic`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Comma-separated learner decay rates; each teacher runs once per value.
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub eta0: Option<f64>,
    /// Decay constant `c` of `η_t = c/(c+t)·η₀`; constant η when absent.
    #[arg(long = "eta-c")]
    pub eta_c: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// `a..b` (inclusive) or `1,2,3`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// `median` or a positive factor on per-dimension std.
    #[arg(long)]
    pub bandwidth: Option<String>,
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long = "cold-start")]
    pub cold_start: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    /// Directory of datasets: `NAME/teach.csv` + `NAME/eval.csv`, or `NAME.csv`.
    #[arg(long)]
    pub datasets: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Session log directory.
    #[arg(long)]
    pub log: PathBuf,
    /// Browser client files served at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    #[arg(long, default_value = "1.0")]
    pub bandwidth: String,
}

fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn teacher_variant(name: &str, harmonic: bool) -> Result<TeacherVariant> {
    Ok(match (name, harmonic) {
        ("jedi", false) => TeacherVariant::JediOmniscient,
        ("jedi", true) => TeacherVariant::JediHarmonic,
        ("imt", false) => TeacherVariant::ImtOmniscient,
        ("imt", true) => TeacherVariant::ImtHarmonic,
        ("rt", _) => TeacherVariant::Random,
        ("sgd", _) => TeacherVariant::Sgd,
        _ => return Err(validation(format!("unknown teacher `{name}`; expected jedi, imt, rt or sgd"))),
    })
}

/// Resolve flags and config file into an experiment and its output directory.
pub fn sim_spec(args: &SimArgs) -> Result<(ExperimentSpec, PathBuf)> {
    let cfg = match &args.config {
        Some(p) => Config::load(p, SIM_KEYS)?,
        None => Config::default(),
    };
    let dataset_name = cfg.pick(args.dataset.clone(), "dataset")?.ok_or_else(|| validation("--dataset is required"))?;
    let seeds = parse_seeds(&cfg.pick(args.seeds.clone(), "seeds")?.unwrap_or_else(|| "0".into()))?;
    let out: PathBuf = cfg.pick(args.out.clone(), "out")?.ok_or_else(|| validation("--out is required"))?;
    let split: f64 = cfg.pick(args.split, "split")?.unwrap_or(DEFAULT_SPLIT);

    let dataset = match dataset_name.as_str() {
        "mixture2d" | "toy" => DatasetSpec::Mixture2d(Mixture2dSpec::default()),
        "gaussian10d" => DatasetSpec::Gaussian10d(Gaussian10dSpec::default()),
        path if Path::new(path).is_file() => DatasetSpec::Csv {
            path: PathBuf::from(path),
            split,
        },
        other => return Err(validation(format!("dataset `{other}` is neither a builtin nor a readable file"))),
    };
    let harmonic = match cfg.pick(args.mode.clone(), "mode")?.as_deref() {
        None => !matches!(dataset, DatasetSpec::Mixture2d(_)),
        Some("harmonic") => true,
        Some("omniscient") => false,
        Some(m) => return Err(validation(format!("mode must be omniscient or harmonic, got `{m}`"))),
    };

    let teachers = cfg.pick(args.teacher.clone(), "teacher")?;
    let betas: Option<Vec<f64>> = cfg.pick(args.beta.clone(), "beta")?.map(|b| parse_list(&b, "beta")).transpose()?;
    let mut spec = match (&dataset, &teachers) {
        (DatasetSpec::Mixture2d(_), None) if !harmonic && betas.is_none() => ExperimentSpec::toy(seeds),
        (DatasetSpec::Gaussian10d(_), None) if harmonic && betas.is_none() => ExperimentSpec::gaussian10d(seeds),
        _ => {
            let names: Vec<String> = parse_list(teachers.as_deref().unwrap_or("jedi"), "teacher")?;
            let betas = betas.unwrap_or_else(|| vec![0.5]);
            let mut setups = Vec::new();
            for n in &names {
                let v = teacher_variant(n, harmonic)?;
                for &b in &betas {
                    setups.push(TeacherSetup::new(v, b));
                }
            }
            let mut spec = ExperimentSpec::new(dataset, setups, seeds);
            if harmonic {
                spec.noise_std = 0.01;
            }
            spec
        }
    };

    let eta0 = cfg.pick(args.eta0, "eta0")?;
    let c = cfg.pick(args.eta_c, "eta-c")?;
    spec.schedule = match (spec.schedule, eta0, c) {
        (_, e, Some(c)) => EtaSchedule::Decay {
            eta0: e.unwrap_or(DEFAULT_ETA0),
            c,
        },
        (EtaSchedule::Decay { c, .. }, Some(e), None) => EtaSchedule::Decay { eta0: e, c },
        (EtaSchedule::Constant { .. }, Some(e), None) => EtaSchedule::Constant { eta0: e },
        (s, None, None) => s,
    };
    if let Some(n) = cfg.pick(args.max_iter, "max-iter")? {
        spec.max_iter = n;
    }
    if let Some(n) = cfg.pick(args.noise, "noise")? {
        spec.noise_std = n;
    }
    if let Some(b) = cfg.pick::<String>(args.bandwidth.clone(), "bandwidth")? {
        spec.bandwidth = b.parse::<Bandwidth>()?;
    }
    if let Some(l2) = cfg.pick(args.l2, "l2")? {
        spec.l2 = l2;
    }
    if let Some(k) = cfg.pick(args.cold_start, "cold-start")? {
        spec.cold_start = k;
    }
    spec.validate()?;
    Ok((spec, out))
}

fn datagen(kind: DataKind, seed: u64, out: &Path, stdout: &mut dyn Write) -> Result<()> {
    let d = match kind {
        DataKind::Mixture2d => gen_mixture2d(&Mixture2dSpec::default(), seed)?,
        DataKind::Gaussian10d => gen_gaussian10d(&Gaussian10dSpec::default(), seed)?,
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_examples(&out.join("teach.csv"), d.teach.examples())?;
    write_examples(&out.join("eval.csv"), &d.eval)?;
    let r = CsvReport::of(d.teach.examples());
    writeln!(
        stdout,
        "wrote {} teach / {} eval examples (dimension {}) to {}",
        d.teach.len(),
        d.eval.len(),
        r.dimension,
        out.display()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

fn report(runs: &Path, format: ReportFormat, stdout: &mut dyn Write) -> Result<()> {
    let entries: Vec<ManifestEntry> = read_jsonl(&runs.join(MANIFEST))?;
    let records: Vec<_> = entries.into_iter().map(|e| e.record).collect();
    let summary = summarize(&records);
    let io = |e| Error::io("<stdout>", e);
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *stdout, &summary)?;
            writeln!(stdout).map_err(io)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(stdout);
            let cerr = |e: csv::Error| Error::io("<stdout>", std::io::Error::other(e));
            w.write_record(["teacher", "variant", "beta", "runs", "median_unique", "median_final_dist_sq", "mean_eval_accuracy", "median_eval_accuracy"])
                .map_err(cerr)?;
            for s in summary {
                let variant = serde_json::to_value(s.variant)?.as_str().unwrap_or_default().to_string();
                w.write_record([
                    s.teacher,
                    variant,
                    s.beta.to_string(),
                    s.runs.to_string(),
                    s.median_unique.to_string(),
                    s.median_final_dist_sq.to_string(),
                    s.mean_eval_accuracy.to_string(),
                    s.median_eval_accuracy.to_string(),
                ])
                .map_err(cerr)?;
            }
            w.flush().map_err(io)?;
        }
    }
    Ok(())
}

fn serve_cmd(args: &ServeArgs, stdout: &mut dyn Write) -> Result<()> {
    let bandwidth: Bandwidth = args.bandwidth.parse()?;
    let registry = Registry::load_dir(&args.datasets, bandwidth)?;
    for name in registry.names() {
        let d = registry.get(name).expect("listed dataset");
        writeln!(stdout, "dataset {name}: {}", jedi_core::data::describe(&d.teach)).map_err(|e| Error::io("<stdout>", e))?;
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| validation(format!("bad listen address: {e}")))?;
    let config = ServiceConfig {
        log_dir: Some(args.log.clone()),
        static_dir: args.static_dir.clone(),
        assets_dir: Some(args.datasets.clone()),
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    rt.block_on(serve(addr, registry, config)).map_err(|e| Error::io(&args.log, e))
}

/// Run a parsed command, writing human-readable output to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Datagen { kind, seed, out } => datagen(kind, seed, &out, stdout),
        Command::Sim(args) => {
            let (spec, out) = sim_spec(&args)?;
            if let DatasetSpec::Csv { path, .. } = &spec.dataset {
                let r = CsvReport::of(&read_examples(path)?);
                writeln!(
                    stdout,
                    "{}: {} rows, dimension {}, {} positive / {} negative, unit sphere: {} (max deviation {:.3e})",
                    path.display(),
                    r.rows,
                    r.dimension,
                    r.positives,
                    r.negatives,
                    r.unit_sphere,
                    r.max_unit_deviation
                )
                .map_err(|e| Error::io("<stdout>", e))?;
            }
            let exp = run_experiment(&spec)?;
            write_experiment(&out, &exp)?;
            for s in &exp.report.summary {
                writeln!(
                    stdout,
                    "{:<14} runs {:>3}  median unique {:>7.1}  median final dist² {:>10.3e}  mean accuracy {:.4}",
                    s.teacher, s.runs, s.median_unique, s.median_final_dist_sq, s.mean_eval_accuracy
                )
                .map_err(|e| Error::io("<stdout>", e))?;
            }
            Ok(())
        }
        Command::Report { runs, format } => report(&runs, format, stdout),
        Command::Serve(args) => serve_cmd(&args, stdout),
    }
}
