//! The `forgetting` command-line tool.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 I/O error,
//! 4 result carries a warning status (flat calibration objective).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{compare_methods, fit_forgetting_curve, BenchConfig};
use crate::calibration::{calibrate_gamma, CalibrationOptions, CalibrationStatus};
use crate::distribution::Family;
use crate::environments::{
    gen_recall_task, generate, DelayDistribution, EnvConfig, GaussianSegment, MeanProcess, RecallConfig, SegmentSpec,
};
use crate::error::{Error, Result};
use crate::filters::Prior;
use crate::formats;
use crate::pmp::{pmp_sample, ContextItem};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_WARNING: u8 = 4;

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "forgetting", version, about = "Discounted Bayesian filtering, forgetting-rate calibration and recency-weighted context sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EnvKind {
    BiasedDie,
    ShiftingGaussian,
    Recall,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Categorical,
    Gaussian,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic environment trace.
    ///
    /// Defaults: biased-die has 6 faces and 3 segments of 500 steps (T = 1500);
    /// shifting-gaussian is a random walk with step variance 0.01, initial mean 0,
    /// 1500 steps and observation variance 1; recall uses 20 keys, 2000 steps
    /// and probe fraction 0.2.
    Gen {
        #[arg(long, value_enum, default_value = "biased-die")]
        env: EnvKind,
        /// JSON file with the full environment config; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Segments as JSON: [{"duration":500,"probs":[...]}] for biased-die,
        /// [{"duration":100,"mean":0.0}] for a piecewise shifting-gaussian.
        #[arg(long)]
        segments: Option<String>,
        /// Observation variance (shifting-gaussian).
        #[arg(long)]
        obs_variance: Option<f64>,
        /// Random-walk step variance (shifting-gaussian).
        #[arg(long)]
        step_variance: Option<f64>,
        /// Number of steps (random-walk gaussian, recall).
        #[arg(long)]
        len: Option<usize>,
        /// Number of keys and values (recall).
        #[arg(long)]
        vocab_size: Option<u32>,
        /// Probability that a step is a probe (recall).
        #[arg(long)]
        probe_fraction: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; the trace goes to standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find the discount factor that best explains a subject's logged predictives.
    Calibrate {
        /// Subject log: {"t":1,"dist":[...]} or {"t":1,"mean":m,"var":v} per line.
        #[arg(long)]
        subject: PathBuf,
        /// Observations: a trace file or {"t":1,"obs":x} per line.
        #[arg(long)]
        trace: PathBuf,
        /// Model family; inferred from the subject log when omitted.
        #[arg(long, value_enum)]
        family: Option<FamilyArg>,
        /// Prior: comma-separated Dirichlet concentrations (default all ones),
        /// or "mean,variance" for gaussian (default "0,100").
        #[arg(long)]
        prior: Option<String>,
        /// Known observation variance (gaussian).
        #[arg(long, default_value_t = 1.0)]
        obs_variance: f64,
        /// Width at which golden-section refinement stops.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Smallest discount factor searched.
        #[arg(long, default_value_t = 1e-3)]
        gamma_floor: f64,
        /// Write the result here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shape a context file by recency-weighted sampling without replacement.
    Sample {
        /// Context file: {"index":1,"text":"..."} per line.
        #[arg(long)]
        context: PathBuf,
        /// Forgetting rate per item.
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        /// Number of items to keep.
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw a fresh shaped context for every query instead of reusing one.
        #[arg(long)]
        resample: bool,
        /// Number of queries to emit shaped contexts for.
        #[arg(long, default_value_t = 1)]
        queries: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare full-context, window and recency-sampled policies across environments.
    ///
    /// Default config: biased-die, shifting-gaussian and recall environments;
    /// policies full, window(k=50) and pmp(lambda=0.05, k=50); 20 trials.
    Bench {
        /// JSON config file; the built-in defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of trials (overrides the config).
        #[arg(long)]
        seeds: Option<usize>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for report.json and report.csv; the JSON report is
        /// printed to standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run trials sequentially.
        #[arg(long)]
        serial: bool,
    },
    /// Fit exponential and power-law forgetting curves to delay,accuracy pairs.
    FitCurve {
        /// CSV with columns delay,accuracy (a header row is optional).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Run the CLI with `args` (including the program name); returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
            } else {
                let _ = write!(stdout, "{rendered}");
            }
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<u8> {
    match cmd {
        Command::Gen {
            env,
            config,
            segments,
            obs_variance,
            step_variance,
            len,
            vocab_size,
            probe_fraction,
            seed,
            out,
        } => cmd_gen(
            GenArgs {
                env,
                config,
                segments,
                obs_variance,
                step_variance,
                len,
                vocab_size,
                probe_fraction,
                seed,
                out,
            },
            stdout,
            stderr,
        ),
        Command::Calibrate {
            subject,
            trace,
            family,
            prior,
            obs_variance,
            tol,
            gamma_floor,
            out,
        } => cmd_calibrate(&subject, &trace, family, prior.as_deref(), obs_variance, tol, gamma_floor, out.as_deref(), stdout),
        Command::Sample {
            context,
            lambda,
            k,
            seed,
            resample,
            queries,
            out,
        } => cmd_sample(&context, lambda, k, seed, resample, queries, out.as_deref(), stdout),
        Command::Bench {
            config,
            seeds,
            seed,
            out,
            serial,
        } => cmd_bench(config.as_deref(), seeds, seed, out.as_deref(), serial, stdout),
        Command::FitCurve { input, out } => cmd_fit_curve(&input, out.as_deref(), stdout),
    }
}

struct GenArgs {
    env: EnvKind,
    config: Option<PathBuf>,
    segments: Option<String>,
    obs_variance: Option<f64>,
    step_variance: Option<f64>,
    len: Option<usize>,
    vocab_size: Option<u32>,
    probe_fraction: Option<f64>,
    seed: u64,
    out: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_json<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(format!("{what}: {path}: {}", e.into_inner()))
    })
}

fn write_output(out: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e)),
        None => stdout.write_all(bytes).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn summary_sink<'a>(out: Option<&Path>, stdout: &'a mut dyn Write, stderr: &'a mut dyn Write) -> &'a mut dyn Write {
    if out.is_some() {
        stdout
    } else {
        stderr
    }
}

fn stream_config(args: &GenArgs) -> Result<EnvConfig> {
    let mut cfg = match (&args.config, args.env) {
        (Some(path), _) => parse_json::<EnvConfig>("config", &read_text(path)?)?,
        (None, EnvKind::BiasedDie) => EnvConfig::default_biased_die(),
        (None, _) => EnvConfig::default_shifting_gaussian(),
    };
    match &mut cfg {
        EnvConfig::BiasedDie { segments } => {
            if let Some(s) = &args.segments {
                *segments = parse_json::<Vec<SegmentSpec>>("segments", s)?;
            }
        }
        EnvConfig::ShiftingGaussian { process, obs_variance } => {
            if let Some(s) = &args.segments {
                *process = MeanProcess::Piecewise {
                    segments: parse_json::<Vec<GaussianSegment>>("segments", s)?,
                };
            }
            if let Some(v) = args.obs_variance {
                *obs_variance = v;
            }
            if let MeanProcess::RandomWalk { step_variance, len, .. } = process {
                if let Some(v) = args.step_variance {
                    *step_variance = v;
                }
                if let Some(n) = args.len {
                    *len = n;
                }
            }
        }
    }
    let expected = match args.env {
        EnvKind::BiasedDie => Family::Categorical,
        _ => Family::Gaussian,
    };
    if cfg.family() != expected {
        return Err(Error::config(format!(
            "config describes a {} environment but --env asks for {}",
            cfg.family(),
            expected
        )));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_gen(args: GenArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<u8> {
    let mut buf = Vec::new();
    let summary = match args.env {
        EnvKind::Recall => {
            let mut cfg = match &args.config {
                Some(path) => parse_json::<RecallConfig>("config", &read_text(path)?)?,
                None => RecallConfig::default(),
            };
            if let Some(v) = args.vocab_size {
                cfg.vocab_size = v;
            }
            if let Some(n) = args.len {
                cfg.len = n;
            }
            if let Some(p) = args.probe_fraction {
                cfg.probe_fraction = p;
            }
            cfg.validate()?;
            let events = gen_recall_task(&cfg, args.seed)?;
            formats::write_recall_events(&cfg, args.seed, &events, &mut buf)?;
            let probes = events
                .iter()
                .filter(|e| matches!(e, crate::environments::RecallEvent::Probe { .. }))
                .count();
            let delay = match cfg.delay {
                DelayDistribution::UniformKey => "uniform-key",
                DelayDistribution::Geometric { .. } => "geometric",
            };
            format!("T={} family=recall probes={probes} delay={delay} seed={}", events.len(), args.seed)
        }
        _ => {
            let cfg = stream_config(&args)?;
            let trace = generate(&cfg, args.seed)?;
            formats::write_trace(&trace, &mut buf)?;
            format!("T={} family={} seed={}", trace.len(), trace.family(), args.seed)
        }
    };
    write_output(args.out.as_deref(), &buf, stdout)?;
    let sink = summary_sink(args.out.as_deref(), stdout, stderr);
    writeln!(sink, "{summary}").map_err(|e| Error::io("<stdout>", e))?;
    Ok(EXIT_OK)
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("--prior: cannot parse {x:?} as a number")))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_calibrate(
    subject_path: &Path,
    trace_path: &Path,
    family: Option<FamilyArg>,
    prior: Option<&str>,
    obs_variance: f64,
    tol: f64,
    gamma_floor: f64,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<u8> {
    let subject = formats::read_subject(formats::open(subject_path)?)?;
    let observations = formats::read_observations(formats::open(trace_path)?)?;
    let family = match family {
        Some(FamilyArg::Categorical) => Family::Categorical,
        Some(FamilyArg::Gaussian) => Family::Gaussian,
        None => subject.family(),
    };
    let prior = match family {
        Family::Categorical => {
            let k = match &subject {
                crate::calibration::SubjectTrace::Categorical(d) => d[0].len(),
                crate::calibration::SubjectTrace::Gaussian(_) => 0,
            };
            let alpha = match prior {
                Some(p) => parse_floats(p)?,
                None => vec![1.0; k],
            };
            Prior::categorical(alpha)?
        }
        Family::Gaussian => {
            let (m, v) = match prior {
                Some(p) => match parse_floats(p)?.as_slice() {
                    [m, v] => (*m, *v),
                    _ => return Err(Error::config("--prior for gaussian takes \"mean,variance\"")),
                },
                None => (0.0, 100.0),
            };
            Prior::gaussian(m, v, obs_variance)?
        }
    };
    let observations = observations
        .into_iter()
        .map(|o| o.coerce(family))
        .collect::<Result<Vec<_>>>()?;
    let opts = CalibrationOptions {
        tol,
        gamma_floor,
        parallel: true,
    };
    let result = calibrate_gamma(&subject, &observations, &prior, &opts)?;
    let mut json = serde_json::to_vec_pretty(&result).map_err(|e| Error::invalid(e.to_string()))?;
    json.push(b'\n');
    write_output(out, &json, stdout)?;
    Ok(match result.status {
        CalibrationStatus::Converged => EXIT_OK,
        CalibrationStatus::FlatObjective => EXIT_WARNING,
    })
}

#[derive(Serialize)]
struct QueryItem<'a> {
    query: usize,
    index: usize,
    text: &'a str,
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    context: &Path,
    lambda: f64,
    k: usize,
    seed: u64,
    resample: bool,
    queries: usize,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<u8> {
    if queries == 0 {
        return Err(Error::config("--queries must be at least 1"));
    }
    let history = formats::read_context(formats::open(context)?)?;
    let mut rng = crate::environments::rng_from_seed(seed);
    let mut buf = Vec::new();
    if queries == 1 {
        let shaped = pmp_sample(&history, lambda, k, &mut rng)?;
        formats::write_context(shaped.items(), &mut buf)?;
    } else {
        let mut shaped = pmp_sample(&history, lambda, k, &mut rng)?;
        for q in 1..=queries {
            if resample && q > 1 {
                shaped = pmp_sample(&history, lambda, k, &mut rng)?;
            }
            for ContextItem { index, text } in shaped.items() {
                let line = serde_json::to_string(&QueryItem {
                    query: q,
                    index: *index,
                    text,
                })
                .map_err(|e| Error::invalid(e.to_string()))?;
                buf.extend_from_slice(line.as_bytes());
                buf.push(b'\n');
            }
        }
    }
    write_output(out, &buf, stdout)?;
    Ok(EXIT_OK)
}

fn cmd_bench(
    config: Option<&Path>,
    seeds: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
    serial: bool,
    stdout: &mut dyn Write,
) -> Result<u8> {
    let mut cfg = match config {
        Some(path) => BenchConfig::from_json(&read_text(path)?)?,
        None => BenchConfig::default(),
    };
    if let Some(n) = seeds {
        cfg.trials = n;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if serial {
        cfg.parallel = false;
    }
    cfg.validate()?;
    let report = compare_methods(&cfg, &cfg.seeds())?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
            let mut json = report.to_json()?;
            json.push('\n');
            let json_path = dir.join("report.json");
            fs::write(&json_path, json).map_err(|e| Error::io(json_path.display().to_string(), e))?;
            let csv_path = dir.join("report.csv");
            fs::write(&csv_path, report.to_csv()?).map_err(|e| Error::io(csv_path.display().to_string(), e))?;
            for line in report.summary_lines() {
                writeln!(stdout, "{line}").map_err(|e| Error::io("<stdout>", e))?;
            }
        }
        None => {
            let mut json = report.to_json()?;
            json.push('\n');
            write_output(None, json.as_bytes(), stdout)?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_fit_curve(input: &Path, out: Option<&Path>, stdout: &mut dyn Write) -> Result<u8> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(formats::open(input)?);
    let mut points = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 2 columns, found {}", rec.len()),
            });
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(d), Ok(a)) => points.push((d, a)),
            _ if i == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "delay and accuracy must be numbers".into(),
                })
            }
        }
    }
    let fits = fit_forgetting_curve(&points)?;
    let mut json = serde_json::to_vec_pretty(&fits).map_err(|e| Error::invalid(e.to_string()))?;
    json.push(b'\n');
    write_output(out, &json, stdout)?;
    Ok(EXIT_OK)
}
