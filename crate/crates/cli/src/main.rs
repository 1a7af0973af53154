use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use sobolev_gan::estimators::{empirical_band, estimate, optimal_cutoff, EstimatorConfig, EstimatorKind};
use sobolev_gan::gan::{gan_solve, oracle_check_matched, GanSolution, GeneratorClass, OracleReport, DEFAULT_TOL};
use sobolev_gan::harness::{
    render_report, run_paired_experiment, run_rate_experiment, sample_truth, RateExperimentConfig, ReportFormat,
};
use sobolev_gan::lowerbound::{fano_bound, freq_hypotheses, spatial_bump_family, vg_code, FamilyManifest, FanoBound};
use sobolev_gan::metrics::sobolev_ipm;
use sobolev_gan::networks::{
    covering_bound, dudley_bound, lipschitz_cert, rate_comparison, sobolev_enclosure, DudleyBound, LipschitzCert,
    RateComparison, ReluNetwork,
};
use sobolev_gan::sampling::{SampleSet, Sampler};
use sobolev_gan::spectral::CoefficientField;

#[derive(Parser)]
#[command(name = "sgan", version, about = "Density estimation under adversarial Sobolev metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Sobolev IPM between two coefficient files.
    Ipm {
        mu: PathBuf,
        nu: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long = "L", default_value_t = 1.0)]
        radius: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Fit an estimator to a sample CSV.
    Estimate {
        samples: PathBuf,
        #[arg(long, default_value = "smoothed")]
        estimator: EstimatorKind,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.3)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        cutoff_constant: f64,
        /// Cutoff `M`; the schedule value when omitted.
        #[arg(long = "M")]
        cutoff: Option<usize>,
        /// Band `K`; `M` for smoothed, `⌈n^{1/d}⌉` otherwise when omitted.
        #[arg(long = "K")]
        band: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Draw samples from a density coefficient file.
    Sample {
        density: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "rejection")]
        sampler: Sampler,
        #[command(flatten)]
        common: Common,
    },
    /// Rate-of-convergence experiment from a key = value config.
    Rate {
        config: PathBuf,
        /// Run smoothed and empirical on shared samples.
        #[arg(long)]
        paired: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Project an estimate onto a Sobolev generator class.
    Gan {
        nu_hat: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha_g: f64,
        #[arg(long, default_value_t = 1.0)]
        radius_g: f64,
        /// Generator band; the band of `nu_hat` when omitted.
        #[arg(long)]
        band: Option<usize>,
        #[arg(long)]
        free_mass: bool,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long = "L", default_value_t = 1.0)]
        radius: f64,
        /// True density, for the oracle inequality.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Build and certify a lower-bound hypothesis family.
    Lowerbound {
        #[arg(long, value_enum, default_value = "frequency")]
        family: Family,
        #[arg(long = "M", default_value_t = 7)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long = "L", default_value_t = 1.0)]
        radius: f64,
        /// Kernel amplitude for the spatial family.
        #[arg(long)]
        amplitude: Option<f64>,
        /// Sample size for the Gaussian-sequence Fano bound.
        #[arg(long)]
        n: Option<f64>,
        /// Grid points per axis for spatial certificates.
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Certificates and entropy bounds for a ReLU network file.
    Relu {
        network: PathBuf,
        #[arg(long, default_value_t = 10_000.0)]
        n: f64,
        /// Density smoothness for the rate comparison.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long = "L", default_value_t = 1.0)]
        radius: f64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Frequency,
    Spatial,
}

#[derive(Serialize)]
struct GanOutput {
    solution: GanSolution,
    oracle: Option<OracleReport>,
}

#[derive(Serialize)]
struct LowerboundOutput {
    manifest: FamilyManifest,
    fano: Option<FanoBound>,
}

#[derive(Serialize)]
struct ReluOutput {
    dim: usize,
    depth: usize,
    #[serde(rename = "V")]
    budget: f64,
    lipschitz: LipschitzCert,
    sobolev_enclosure: f64,
    dudley: DudleyBound,
    rates: Option<RateComparison>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// JSON as is, or CSV as `key,value` rows over the flattened document.
fn render<T: Serialize>(value: &T, format: Format) -> Result<String> {
    let v = serde_json::to_value(value)?;
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(&v)? + "\n"),
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", &v, &mut rows);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            for (k, val) in rows {
                w.write_record([k, val])?;
            }
            Ok(String::from_utf8(w.into_inner()?)?)
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ipm { mu, nu, beta, radius, common } => {
            let mu: CoefficientField = read_json(&mu)?;
            let nu: CoefficientField = read_json(&nu)?;
            let r = sobolev_ipm(&mu, &nu, beta, radius)?;
            emit(&render(&r, common.format)?, common.out.as_deref())
        }
        Command::Estimate { samples, estimator, alpha, beta, cutoff_constant, cutoff, band, common } => {
            let s = SampleSet::read_csv(&samples)?;
            let m = cutoff.unwrap_or_else(|| optimal_cutoff(s.n(), alpha, beta, s.dim(), cutoff_constant));
            let k = band.unwrap_or(match estimator {
                EstimatorKind::Smoothed => m,
                _ => empirical_band(s.n(), s.dim()).max(m),
            });
            let cfg = EstimatorConfig::new(m, k, cutoff_constant)?;
            let e = estimate(estimator, &s, &cfg)?;
            emit(&render(&e, common.format)?, common.out.as_deref())
        }
        Command::Sample { density, n, sampler, common } => {
            let f: CoefficientField = read_json(&density)?;
            let s = sample_truth(&f, sampler, n, common.seed.unwrap_or(0))?;
            match (common.format, common.out.as_deref()) {
                (Format::Csv, Some(p)) => Ok(s.write_csv(p)?),
                (Format::Csv, None) => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    w.write_record((1..=s.dim()).map(|i| format!("x{i}")))?;
                    for row in s.rows() {
                        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
                    }
                    Ok(w.flush()?)
                }
                (Format::Json, out) => emit(&render(&s, Format::Json)?, out),
            }
        }
        Command::Rate { config, paired, common } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = RateExperimentConfig::from_kv(&text)?;
            if let Some(seed) = common.seed {
                cfg.base_seed = seed;
            }
            let text = if paired {
                let p = run_paired_experiment(&cfg)?;
                render(&p, common.format)?
            } else {
                let r = run_rate_experiment(&cfg)?;
                let fmt = match common.format {
                    Format::Json => ReportFormat::Json,
                    Format::Csv => ReportFormat::Csv,
                };
                render_report(&r, fmt)?
            };
            emit(&text, common.out.as_deref())
        }
        Command::Gan { nu_hat, alpha_g, radius_g, band, free_mass, beta, radius, truth, common } => {
            let nu_hat: CoefficientField = read_json(&nu_hat)?;
            let gen = GeneratorClass::new(alpha_g, radius_g, band.unwrap_or(nu_hat.band()), !free_mass)?;
            let solution = gan_solve(&nu_hat, &gen, beta, radius, DEFAULT_TOL)?;
            let oracle = match truth {
                Some(p) => {
                    let nu: CoefficientField = read_json(&p)?;
                    Some(oracle_check_matched(&solution.mu, &nu, &nu_hat, &gen, beta, radius)?)
                }
                None => None,
            };
            emit(&render(&GanOutput { solution, oracle }, common.format)?, common.out.as_deref())
        }
        Command::Lowerbound { family, m, alpha, beta, d, radius, amplitude, n, grid, common } => {
            let seed = common.seed.unwrap_or(0);
            let out = match family {
                Family::Frequency => {
                    let h = (m + 1).checked_pow(d as u32).context("index cube overflows")?;
                    let fam = freq_hypotheses(m, alpha, beta, d, radius, vg_code(h, seed)?)?;
                    let fano = match n {
                        Some(n) => {
                            let kl = fam.kl_average(n)?;
                            Some(fano_bound(fam.code.hypotheses(), fam.certified_separation(), kl)?)
                        }
                        None => None,
                    };
                    let pairs = fam.scan_pairs()?;
                    let certified_separation = fam.certified_separation();
                    LowerboundOutput { manifest: FamilyManifest::Frequency { family: fam, pairs, certified_separation }, fano }
                }
                Family::Spatial => {
                    if n.is_some() {
                        bail!("--n applies to the frequency family only");
                    }
                    let h = m.checked_pow(d as u32).context("cell count overflows")?;
                    let fam = spatial_bump_family(m, alpha, beta, d, amplitude, vg_code(h, seed)?)?;
                    let certificates = fam.certify(grid)?;
                    LowerboundOutput { manifest: FamilyManifest::Spatial { family: fam, certificates }, fano: None }
                }
            };
            emit(&render(&out, common.format)?, common.out.as_deref())
        }
        Command::Relu { network, n, alpha, radius, common } => {
            let net: ReluNetwork = read_json(&network)?;
            let (ell, v, d) = (net.depth(), net.budget(), net.dim());
            let out = ReluOutput {
                dim: d,
                depth: ell,
                budget: v,
                lipschitz: lipschitz_cert(&net),
                sobolev_enclosure: sobolev_enclosure(ell, v, d),
                dudley: dudley_bound(|e| covering_bound(e, ell, v, d), n)?,
                rates: if ell >= 2 { Some(rate_comparison(ell, v, d, alpha, radius, n)?) } else { None },
            };
            emit(&render(&out, common.format)?, common.out.as_deref())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
