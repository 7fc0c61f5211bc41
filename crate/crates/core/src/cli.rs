//! Command-line front end. Payloads (JSON or CSV) go to stdout; failures
//! are reported on stderr as `{"code": ..., "message": ...}` with a
//! category exit code.

use crate::error::{Error, Result};
use crate::limitdist::{self, LimitForm, build_limit, p_value};
use crate::model::{builtin_spec, check_conditions, load_sample_path};
use crate::simulate::{self, Alternative, StudyConfig};
use crate::spectral::{self, KernelTag, Spectrum};
use crate::stat_engine::scaled_statistic;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "chargof",
    version,
    about = "Characterization-based goodness-of-fit tests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelArg {
    Star,
    Plain,
}

impl From<KernelArg> for KernelTag {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Star => KernelTag::Star,
            KernelArg::Plain => KernelTag::Plain,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Null,
    Power,
    Ustat,
    Effect,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AltArg {
    Null,
    Weibull,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test a sample from a one-column CSV file.
    Test {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        input: PathBuf,
        /// Spectrum JSON written by `eigen`; computed on the fly otherwise.
        #[arg(long)]
        eigen_cache: Option<PathBuf>,
        #[arg(long = "N", default_value_t = spectral::DEFAULT_NODES)]
        nodes: usize,
        #[arg(long = "K", default_value_t = spectral::DEFAULT_KEEP)]
        keep: usize,
        #[arg(long, default_value_t = limitdist::DEFAULT_DRAWS)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Discretize an operator and write its spectrum as JSON.
    Eigen {
        #[arg(long)]
        spec: String,
        #[arg(long = "N", default_value_t = spectral::DEFAULT_NODES)]
        nodes: usize,
        #[arg(long = "K", default_value_t = spectral::DEFAULT_KEEP)]
        keep: usize,
        #[arg(long, value_enum, default_value_t = KernelArg::Star)]
        kernel: KernelArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quantiles of the V-form limit law of a cached spectrum, as CSV.
    Quantiles {
        #[arg(long)]
        eigen_cache: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = simulate::TABLE_LEVELS.to_vec())]
        levels: Vec<f64>,
        #[arg(long, default_value_t = limitdist::DEFAULT_DRAWS)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte Carlo study of the limit theorems.
    Simulate {
        #[arg(long)]
        spec: String,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Limit-law draws (10⁵ for studies, 10⁶ for `effect` by default).
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long = "N", default_value_t = spectral::DEFAULT_NODES)]
        nodes: usize,
        #[arg(long = "K", default_value_t = spectral::DEFAULT_KEEP)]
        keep: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Data-generating law for `power` mode.
        #[arg(long, value_enum, default_value_t = AltArg::Null)]
        alternative: AltArg,
        #[arg(long, default_value_t = 1.0)]
        shape: f64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Also write the statistic sample as CSV.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Monte Carlo check that the null mean and the influence mean vanish.
    Diagnose {
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Allowed deviation in standard errors.
        #[arg(long, default_value_t = 3.0)]
        tol: f64,
    },
}

#[derive(Debug, Serialize)]
pub struct SpectrumSource {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub kernel_tag: KernelTag,
    pub trace_estimate: f64,
    /// `"inline"` or the cache path.
    pub source: String,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub chargof: &'static str,
}

#[derive(Debug, Serialize)]
pub struct TestReport {
    pub spec_id: String,
    pub n: usize,
    pub estimate: Vec<f64>,
    pub statistic: f64,
    pub scaled_statistic: f64,
    pub p_value: f64,
    pub mc_se: f64,
    pub spectrum: SpectrumSource,
    pub seed: u64,
    pub versions: Versions,
}

fn read_cache(path: &PathBuf) -> Result<Spectrum> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Spectrum::from_json(&text)
}

fn to_json(v: &impl Serialize) -> String {
    // unwrap: report types hold only strings and finite numbers
    serde_json::to_string_pretty(v).unwrap() + "\n"
}

fn cmd_test(
    spec: &str,
    input: &PathBuf,
    cache: Option<&PathBuf>,
    nodes: usize,
    keep: usize,
    draws: usize,
    seed: u64,
) -> Result<String> {
    let spec = builtin_spec(spec)?;
    let sample = load_sample_path(input)?;
    let stat = scaled_statistic(spec, &sample)?;
    let (spectrum, source) = match cache {
        Some(path) => {
            let s = read_cache(path)?;
            if s.spec_id != spec.id {
                return Err(Error::CacheError(format!(
                    "cache holds spec {:?}, expected {:?}",
                    s.spec_id, spec.id
                )));
            }
            (s, path.display().to_string())
        }
        None => (
            spectral::eigenvalues(
                &spectral::discretize(spec, &spec.null_gamma, KernelTag::Star, nodes)?,
                keep,
            )?,
            "inline".to_string(),
        ),
    };
    let model = build_limit(&spectrum, None, LimitForm::V)?;
    let p = p_value(&model, stat.scaled, draws, seed)?;
    Ok(to_json(&TestReport {
        spec_id: spec.id.to_string(),
        n: sample.n(),
        estimate: stat.estimate.values,
        statistic: stat.statistic,
        scaled_statistic: stat.scaled,
        p_value: p.p,
        mc_se: p.mc_se,
        spectrum: SpectrumSource {
            n: spectrum.n,
            k: spectrum.k,
            kernel_tag: spectrum.kernel_tag,
            trace_estimate: spectrum.trace_estimate,
            source,
        },
        seed,
        versions: Versions {
            chargof: env!("CARGO_PKG_VERSION"),
        },
    }))
}

fn cmd_eigen(
    spec: &str,
    nodes: usize,
    keep: usize,
    kernel: KernelArg,
    out: &PathBuf,
) -> Result<String> {
    let s = spectral::builtin_spectrum(spec, kernel.into(), nodes, keep)?;
    std::fs::write(out, s.to_json() + "\n").map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;
    Ok(String::new())
}

fn cmd_quantiles(cache: &PathBuf, levels: &[f64], draws: usize, seed: u64) -> Result<String> {
    let s = read_cache(cache)?;
    let model = build_limit(&s, None, LimitForm::V)?;
    let values = limitdist::quantiles(&model, levels, draws, seed)?;
    let mut buf = Vec::new();
    limitdist::write_quantile_csv(&mut buf, levels, &values)?;
    // unwrap: the CSV writer only emits UTF-8
    Ok(String::from_utf8(buf).unwrap())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    spec: &str,
    mode: Mode,
    n: usize,
    reps: usize,
    seed: u64,
    draws: Option<usize>,
    nodes: usize,
    keep: usize,
    alpha: f64,
    alternative: AltArg,
    shape: f64,
    scale: f64,
    dump: Option<&PathBuf>,
) -> Result<String> {
    if let Mode::Effect = mode {
        let spec = builtin_spec(spec)?;
        let r = simulate::estimation_effect(
            spec,
            nodes,
            keep,
            draws.unwrap_or(limitdist::DEFAULT_DRAWS),
            seed,
        )?;
        return Ok(to_json(&r));
    }
    let mut config = StudyConfig::new(spec, n, reps, seed);
    config.draws = draws.unwrap_or(simulate::DEFAULT_LIMIT_DRAWS);
    config.nodes = nodes;
    config.keep = keep;
    config.alpha = alpha;
    config.alternative = Some(match alternative {
        AltArg::Null => Alternative::Null,
        AltArg::Weibull => Alternative::Weibull { shape, scale },
    });
    let report = match mode {
        Mode::Null => simulate::null_convergence(&config)?,
        Mode::Power => simulate::power_study(&config)?,
        Mode::Ustat => simulate::ustat_convergence(&config)?,
        Mode::Effect => unreachable!("handled above"),
    };
    if let Some(path) = dump {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        report.write_statistics_csv(file)?;
    }
    Ok(report.to_json() + "\n")
}

/// Run a parsed command and return its stdout payload.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Test {
            spec,
            input,
            eigen_cache,
            nodes,
            keep,
            draws,
            seed,
        } => cmd_test(
            &spec,
            &input,
            eigen_cache.as_ref(),
            nodes,
            keep,
            draws,
            seed,
        ),
        Command::Eigen {
            spec,
            nodes,
            keep,
            kernel,
            out,
        } => cmd_eigen(&spec, nodes, keep, kernel, &out),
        Command::Quantiles {
            eigen_cache,
            levels,
            draws,
            seed,
        } => cmd_quantiles(&eigen_cache, &levels, draws, seed),
        Command::Simulate {
            spec,
            mode,
            n,
            reps,
            seed,
            draws,
            nodes,
            keep,
            alpha,
            alternative,
            shape,
            scale,
            dump,
        } => cmd_simulate(
            &spec,
            mode,
            n,
            reps,
            seed,
            draws,
            nodes,
            keep,
            alpha,
            alternative,
            shape,
            scale,
            dump.as_ref(),
        ),
        Command::Diagnose {
            spec,
            reps,
            seed,
            tol,
        } => Ok(to_json(&check_conditions(
            builtin_spec(&spec)?,
            reps,
            seed,
            tol,
        )?)),
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: String,
}

fn fail(code: &str, message: String, exit: i32) -> i32 {
    let body = serde_json::to_string(&ErrorBody { code, message }).unwrap_or_default();
    eprintln!("{body}");
    exit
}

/// Process entry point; returns the exit code.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            return fail("usage", e.to_string().trim().to_string(), 2);
        }
    };
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout
                .write_all(out.as_bytes())
                .and_then(|_| stdout.flush())
                .is_err()
            {
                return fail("IOError", "cannot write to stdout".into(), 5);
            }
            0
        }
        Err(e) => fail(e.code(), e.to_string(), e.exit_code()),
    }
}
