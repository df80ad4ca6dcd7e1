//! Command-line pipeline: ingestion, efficient set, smoothing, measure and
//! risk reports, simulation studies.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::density::KernelId;
use crate::efficient::efficient_set;
use crate::error::{Error, Result};
use crate::measure::{
    implied_survival, smooth_call_curve, var_cvar, Bandwidth, SmootherKind, SmootherSpec,
};
use crate::payoff::{ConvexPayoff, OptionPayoff};
use crate::quotes::{load_quotes, mesh, LoadOptions, MoneynessEdges, QuoteCurve};
use crate::sim::{
    mixture_experiment, run_mc, DensityGrid, McParams, MixtureModel, NoiseModel, SmileModel,
};
use crate::spline::{fit_reference_spline, spline_payoff, DEFAULT_KNOT_INTERVALS};
use crate::superhedge::superhedge_price;

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "SUPERHEDGE_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "superhedge",
    about = "Non-parametric CALL-function estimation by superhedging",
    version
)]
pub struct Cli {
    /// Key-value configuration file; explicit flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct InputArgs {
    /// Quotes CSV with header strike,ask,ask_size,maturity,observed_at.
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Drop quotes with a smaller reported ask size (default 100).
    #[arg(long)]
    pub min_ask_size: Option<u32>,

    /// Maturity to select (YYYY-MM-DD); required when the file mixes several.
    #[arg(long)]
    pub maturity: Option<NaiveDate>,

    /// Quote timestamp to select (YYYY-MM-DDTHH:MM:SS).
    #[arg(long)]
    pub at: Option<NaiveDateTime>,

    /// Underlying ask when the file has no strike-0 row.
    #[arg(long)]
    pub spot: Option<f64>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct SmootherArgs {
    /// Smoother family: spline or normal.
    #[arg(long)]
    pub smoother: Option<String>,

    /// Bandwidth as a multiple of the strike mesh.
    #[arg(long)]
    pub delta: Option<f64>,

    /// Absolute bandwidth; overrides --delta.
    #[arg(long)]
    pub h: Option<f64>,

    /// Knot intervals of the spline smoother.
    #[arg(long, value_name = "N")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Classify quotes as efficient and emit the efficient CALL function.
    EfficientSet {
        #[command(flatten)]
        input: InputArgs,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Superhedge one payoff: price, hedge weights and dual coefficients.
    Price {
        #[command(flatten)]
        input: InputArgs,
        /// Payoff spec: option:K, spline:K,H or density:normal,K,H.
        #[arg(long)]
        payoff: String,
        #[arg(long, value_name = "N")]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Tabulate a smoothed payoff and its derivatives.
    Smoother {
        /// spline or normal.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        k: f64,
        #[arg(long)]
        h: f64,
        #[arg(long, value_name = "N")]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Smooth CALL curve, survival function and density on a strike grid.
    Estimate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        smoother: SmootherArgs,
        /// Grid size for the emitted curve.
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// VaR and CVaR of a long futures position under the implied measure.
    Risk {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        smoother: SmootherArgs,
        /// Comma-separated confidence levels, e.g. 0.025,0.05.
        #[arg(long)]
        levels: Option<String>,
        /// Riskless rate for the futures parity.
        #[arg(long)]
        rate: Option<f64>,
        /// Time to maturity in years for the futures parity.
        #[arg(long)]
        tau: Option<f64>,
        /// Conditioning window lo,hi (default: first to last positive
        /// efficient strike).
        #[arg(long)]
        window: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Monte Carlo study on the smile market with microstructure noise.
    Simulate {
        #[arg(long)]
        sims: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated bandwidth multipliers.
        #[arg(long)]
        delta: Option<String>,
        #[arg(long, value_name = "N")]
        n: Option<usize>,
        /// Report JSON path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Per-strike confidence-band CSV path.
        #[arg(long)]
        bands: Option<PathBuf>,
        /// Also average implied densities on lo,hi,step.
        #[arg(long)]
        density_grid: Option<String>,
    },

    /// Log-normal-mixture experiment: exact prices and extracted density.
    Mixture {
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        grid_step: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Plain key-value configuration: `key = value` lines, `#` comments.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    entries: std::collections::HashMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut entries = std::collections::HashMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: no + 1,
                    message: format!("expected key = value, got `{line}`"),
                });
            };
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(ConfigFile { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::validation(key, format!("cannot parse `{raw}`"))),
        }
    }
}

/// Fully resolved run configuration: flags override config-file entries,
/// which override defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub min_ask_size: u32,
    pub seed: u64,
}

fn env_seed() -> Option<u64> {
    std::env::var(SEED_ENV).ok().and_then(|v| v.parse().ok())
}

pub fn build_config(cli: Cli) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let min_ask_size = file.parse::<u32>("min_ask_size")?.unwrap_or(100);
    let seed = env_seed().or(file.parse::<u64>("seed")?).unwrap_or(0);
    let mut command = cli.command;
    apply_config(&mut command, &file)?;
    Ok(RunConfig {
        command,
        min_ask_size,
        seed,
    })
}

fn apply_config(cmd: &mut Command, file: &ConfigFile) -> Result<()> {
    match cmd {
        Command::Estimate { smoother, points, .. } => {
            merge_smoother(smoother, file)?;
            *points = points.or(file.parse("points")?);
        }
        Command::Risk {
            smoother,
            levels,
            rate,
            tau,
            ..
        } => {
            merge_smoother(smoother, file)?;
            *levels = levels.clone().or(file.get("levels").map(String::from));
            *rate = rate.or(file.parse("rate")?);
            *tau = tau.or(file.parse("tau")?);
        }
        Command::Simulate {
            sims,
            seed,
            delta,
            n,
            ..
        } => {
            *sims = sims.or(file.parse("sims")?);
            *seed = seed.or(file.parse("seed")?);
            *delta = delta.clone().or(file.get("delta").map(String::from));
            *n = n.or(file.parse("n")?);
        }
        Command::Price { n, .. } => {
            *n = n.or(file.parse("n")?);
        }
        Command::Mixture { h, grid_step, .. } => {
            *h = h.or(file.parse("h")?);
            *grid_step = grid_step.or(file.parse("grid_step")?);
        }
        _ => {}
    }
    Ok(())
}

fn merge_smoother(args: &mut SmootherArgs, file: &ConfigFile) -> Result<()> {
    args.smoother = args.smoother.clone().or(file.get("smoother").map(String::from));
    args.delta = args.delta.or(file.parse("delta")?);
    args.h = args.h.or(file.parse("h")?);
    args.n = args.n.or(file.parse("n")?);
    Ok(())
}

fn load_curve(input: &InputArgs, default_min_ask: u32) -> Result<QuoteCurve> {
    let path = input
        .input
        .as_ref()
        .ok_or_else(|| Error::validation("input", "a quotes CSV path is required"))?;
    let file = fs::File::open(path)?;
    let opts = LoadOptions {
        min_ask_size: input.min_ask_size.unwrap_or(default_min_ask),
        maturity: input.maturity,
        at: input.at,
        spot: input.spot,
    };
    load_quotes(file, &opts)
}

fn smoother_spec(args: &SmootherArgs) -> Result<SmootherSpec> {
    let kind = match args.smoother.as_deref().unwrap_or("spline") {
        "spline" => SmootherKind::Spline {
            intervals: args.n.unwrap_or(DEFAULT_KNOT_INTERVALS),
        },
        other => SmootherKind::Density {
            kernel: other.parse::<KernelId>()?,
        },
    };
    let bandwidth = match (args.h, args.delta) {
        (Some(h), _) => Bandwidth::Absolute(h),
        (None, Some(d)) => Bandwidth::Delta(d),
        (None, None) => Bandwidth::Delta(5.0),
    };
    Ok(SmootherSpec { kind, bandwidth })
}

fn parse_levels(raw: Option<&str>) -> Result<Vec<f64>> {
    let raw = raw.unwrap_or("0.025,0.05");
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::validation("levels", format!("cannot parse `{s}`")))
        })
        .collect()
}

fn parse_deltas(raw: Option<&str>) -> Result<Vec<f64>> {
    let raw = raw.unwrap_or("5");
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::validation("delta", format!("cannot parse `{s}`")))
        })
        .collect()
}

fn parse_pair(raw: &str, field: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::validation(field, "expected lo,hi"));
    }
    let lo = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::validation(field, "cannot parse lower edge"))?;
    let hi = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::validation(field, "cannot parse upper edge"))?;
    Ok((lo, hi))
}

fn write_out(out: Option<&PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content)?;
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

/// A payoff given on the command line.
pub fn parse_payoff(
    spec: &str,
    intervals: usize,
) -> Result<Box<dyn ConvexPayoff + Send + Sync>> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| Error::validation("payoff", "expected kind:args"))?;
    let nums: Vec<&str> = rest.split(',').collect();
    let parse_f = |s: &str| -> Result<f64> {
        s.trim()
            .parse()
            .map_err(|_| Error::validation("payoff", format!("cannot parse `{s}`")))
    };
    match kind {
        "option" => {
            if nums.len() != 1 {
                return Err(Error::validation("payoff", "option:K takes one number"));
            }
            Ok(Box::new(OptionPayoff::new(parse_f(nums[0])?)))
        }
        "spline" => {
            if nums.len() != 2 {
                return Err(Error::validation("payoff", "spline:K,H takes two numbers"));
            }
            let reference = fit_reference_spline(intervals, crate::spline::REFERENCE_BANDWIDTH)?;
            Ok(Box::new(spline_payoff(
                &reference,
                parse_f(nums[0])?,
                parse_f(nums[1])?,
            )?))
        }
        "density" => {
            if nums.len() != 3 {
                return Err(Error::validation(
                    "payoff",
                    "density:KERNEL,K,H takes a kernel and two numbers",
                ));
            }
            let kernel = nums[0].trim().parse::<KernelId>()?;
            Ok(Box::new(crate::density::density_payoff(
                parse_f(nums[1])?,
                parse_f(nums[2])?,
                kernel,
            )?))
        }
        other => Err(Error::validation("payoff", format!("unknown payoff kind `{other}`"))),
    }
}

impl ConvexPayoff for Box<dyn ConvexPayoff + Send + Sync> {
    fn value(&self, x: f64) -> f64 {
        (**self).value(x)
    }
    fn deriv(&self, x: f64) -> f64 {
        (**self).deriv(x)
    }
    fn second_deriv(&self, x: f64) -> f64 {
        (**self).second_deriv(x)
    }
    fn asymptotic_slope(&self) -> f64 {
        (**self).asymptotic_slope()
    }
}

/// Execute a resolved configuration; artifacts go to the configured paths.
pub fn run(config: &RunConfig) -> Result<()> {
    match &config.command {
        Command::EfficientSet { input, out } => {
            let curve = load_curve(input, config.min_ask_size)?;
            let eff = efficient_set(&curve)?;
            let mut csv = String::from("strike,ask,efficient,q0\n");
            for (k, a) in curve.strikes().iter().zip(curve.asks()) {
                let q0 = eff.q0_at(*k);
                let is_eff = eff.strikes().contains(k);
                csv.push_str(&format!("{k},{a},{is_eff},{q0}\n"));
            }
            write_out(out.as_ref(), &csv)
        }

        Command::Price {
            input,
            payoff,
            n,
            out,
        } => {
            let curve = load_curve(input, config.min_ask_size)?;
            let eff = efficient_set(&curve)?;
            let f = parse_payoff(payoff, n.unwrap_or(DEFAULT_KNOT_INTERVALS))?;
            let result = superhedge_price(&f, &eff)?;
            let body = serde_json::to_string_pretty(&json!({
                "payoff": payoff,
                "price": result.price,
                "w": result.w,
                "b": result.b,
            }))?;
            write_out(out.as_ref(), &body)
        }

        Command::Smoother { kind, k, h, n, out } => {
            let args = SmootherArgs {
                smoother: kind.clone(),
                delta: None,
                h: Some(*h),
                n: *n,
            };
            let spec = smoother_spec(&args)?;
            let payoff: Box<dyn ConvexPayoff + Send + Sync> = match spec.kind {
                SmootherKind::Spline { intervals } => {
                    let reference =
                        fit_reference_spline(intervals, crate::spline::REFERENCE_BANDWIDTH)?;
                    Box::new(spline_payoff(&reference, *k, *h)?)
                }
                SmootherKind::Density { kernel } => {
                    Box::new(crate::density::density_payoff(*k, *h, kernel)?)
                }
            };
            let mut csv = String::from("x,g,dg,d2g\n");
            let n_pts = 400usize;
            for i in 0..=n_pts {
                let x = (k - 2.0 * h) + 4.0 * h * i as f64 / n_pts as f64;
                if x < 0.0 {
                    continue;
                }
                csv.push_str(&format!(
                    "{x},{},{},{}\n",
                    payoff.value(x),
                    payoff.deriv(x),
                    payoff.second_deriv(x)
                ));
            }
            write_out(out.as_ref(), &csv)
        }

        Command::Estimate {
            input,
            smoother,
            points,
            out,
        } => {
            let curve = load_curve(input, config.min_ask_size)?;
            let eff = efficient_set(&curve)?;
            let stats = mesh(&curve, Some(&eff)).ok();
            let spec = smoother_spec(smoother)?;
            let sc = smooth_call_curve(&eff, &spec, stats.as_ref())?;
            if sc.low_strike_warning() {
                eprintln!(
                    "warning: bandwidth {} reaches below the first positive strike",
                    sc.bandwidth()
                );
            }
            let m = implied_survival(&sc);
            let (j1, jl) = (
                eff.strikes()[1.min(eff.last_index())],
                *eff.strikes().last().unwrap(),
            );
            let n_pts = points.unwrap_or(201).max(2);
            let mut csv = String::from("k,q_delta,survival,density\n");
            for i in 0..n_pts {
                let k = j1 + (jl - j1) * i as f64 / (n_pts - 1) as f64;
                csv.push_str(&format!(
                    "{k},{},{},{}\n",
                    sc.value(k),
                    m.survival(k),
                    m.density(k).unwrap_or(f64::NAN)
                ));
            }
            write_out(out.as_ref(), &csv)
        }

        Command::Risk {
            input,
            smoother,
            levels,
            rate,
            tau,
            window,
            out,
        } => {
            let curve = load_curve(input, config.min_ask_size)?;
            let eff = efficient_set(&curve)?;
            let stats = mesh(&curve, Some(&eff)).ok();
            let spec = smoother_spec(smoother)?;
            let sc = smooth_call_curve(&eff, &spec, stats.as_ref())?;
            let m = implied_survival(&sc);
            let levels = parse_levels(levels.as_deref())?;
            let rate = rate.unwrap_or(0.0);
            let tau = tau.unwrap_or(0.0);
            let position_price = curve.spot() * (rate * tau).exp();
            let window = match window {
                Some(w) => Some(parse_pair(w, "window")?),
                None => None,
            };
            let report = var_cvar(&m, position_price, &levels, window)?;
            let body = serde_json::to_string_pretty(&report)?;
            write_out(out.as_ref(), &body)
        }

        Command::Simulate {
            sims,
            seed,
            delta,
            n,
            report,
            bands,
            density_grid,
        } => {
            let model = SmileModel::default();
            let noise = NoiseModel::default();
            let deltas = parse_deltas(delta.as_deref())?;
            let density_grid = match density_grid {
                Some(raw) => {
                    let parts: Vec<&str> = raw.split(',').collect();
                    if parts.len() != 3 {
                        return Err(Error::validation("density_grid", "expected lo,hi,step"));
                    }
                    let p = |s: &str| -> Result<f64> {
                        s.trim()
                            .parse()
                            .map_err(|_| Error::validation("density_grid", "cannot parse"))
                    };
                    Some(DensityGrid {
                        lo: p(parts[0])?,
                        hi: p(parts[1])?,
                        step: p(parts[2])?,
                    })
                }
                None => None,
            };
            let params = McParams {
                kind: SmootherKind::Spline {
                    intervals: n.unwrap_or(DEFAULT_KNOT_INTERVALS),
                },
                deltas,
                edges: MoneynessEdges::default(),
                density_grid,
            };
            let mc = run_mc(
                &model,
                &noise,
                &params,
                sims.unwrap_or(5000),
                seed.unwrap_or(config.seed),
            )?;
            if let Some(path) = report {
                fs::write(path, serde_json::to_string_pretty(&mc)?)?;
            }
            if let Some(path) = bands {
                let mut csv =
                    String::from("delta,strike,metric,mean,sd,min,q025,q050,q950,q975,max\n");
                for d in &mc.per_delta {
                    for (label, stats) in [
                        ("price", &d.price),
                        ("vol", &d.implied_vol),
                        ("survival", &d.survival),
                    ] {
                        for (i, &k) in mc.strikes.iter().enumerate() {
                            csv.push_str(&format!(
                                "{},{k},{label},{},{},{},{},{},{},{},{}\n",
                                d.delta,
                                stats.mean[i],
                                stats.sd[i],
                                stats.min[i],
                                stats.q025[i],
                                stats.q050[i],
                                stats.q950[i],
                                stats.q975[i],
                                stats.max[i],
                            ));
                        }
                    }
                }
                fs::write(path, csv)?;
            }
            if report.is_none() && bands.is_none() {
                let summary: Vec<_> = mc
                    .per_delta
                    .iter()
                    .map(|d| json!({"delta": d.delta, "mse": d.mse, "mse_compat": d.mse_compat}))
                    .collect();
                let body = serde_json::to_string_pretty(&json!({
                    "sims": mc.sims,
                    "inefficiency_mean_pct": mc.inefficiency.total_mean,
                    "per_delta": summary,
                }))?;
                write_out(None, &body)?;
            }
            Ok(())
        }

        Command::Mixture { h, grid_step, out } => {
            let model = MixtureModel {
                bandwidth: h.unwrap_or(20.0),
                ..Default::default()
            };
            let outcome = mixture_experiment(&model, grid_step.unwrap_or(1.0))?;
            let body = serde_json::to_string_pretty(&outcome)?;
            write_out(out.as_ref(), &body)
        }
    }
}

/// Entry point used by the binary: parse, run, and map an error to the
/// machine-readable JSON contract.
pub fn main_entry() -> std::process::ExitCode {
    let cli = Cli::parse();
    let outcome = build_config(cli).and_then(|config| run(&config));
    match outcome {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            let body = json!({
                "error": {
                    "code": err.code(),
                    "message": err.to_string(),
                    "field": match &err {
                        Error::Validation { field, .. } => Some(field.clone()),
                        _ => None,
                    },
                }
            });
            eprintln!("{body}");
            std::process::ExitCode::FAILURE
        }
    }
}
