//! Command-line driver: robustness certification, ED-degree analysis,
//! discriminant probes, Kac-Rice experiments, and the soundness benchmark.
//!
//! All randomness flows from the `--seed` flag; running any subcommand twice
//! with the same seed produces byte-identical primary artifacts (timing
//! files are the one documented exception).

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use pnncert::bench::{self, BenchConfig, BenchReport, BenchmarkSuite};
use pnncert::critsys::build_relaxed;
use pnncert::edanalysis::{
    discriminant_probe_grid, ed_degree_bottleneck, ed_degree_deep_generic,
    ed_degree_numeric_vs_formula, ed_degree_shallow, EdConfig,
};
use pnncert::homotopy::{self, TrackerConfig};
use pnncert::kacrice;
use pnncert::pnn::NetworkParams;
use pnncert::quadric::{extract_quadric, quadric_ed_degree, ConicClass, QuadricTol};
use pnncert::verifier::{self, Verdict, VerifierConfig};
use std::path::{Path, PathBuf};

const EXIT_OK: i32 = 0;
const EXIT_FALSIFIED: i32 = 2;
const EXIT_USAGE: i32 = 64;

#[derive(Parser)]
#[command(
    name = "pnncert",
    version,
    about = "Exact l2 robustness certification and ED-degree analysis for polynomial neural networks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Profile {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Cmd {
    /// Certify an epsilon-ball around a test point (exit 2 when falsified).
    Verify {
        #[arg(long)]
        net: PathBuf,
        /// Comma-separated coordinates, e.g. "-2,0".
        #[arg(long)]
        point: String,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the robustness margin and witness at a test point.
    Margin {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        point: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a per-path solver trace CSV (path_id, t, step, residual).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Numeric ED degree of a decision boundary by sampled datapoints.
    EdDegree {
        #[arg(long)]
        net: PathBuf,
        /// Class pair, e.g. "0,1".
        #[arg(long, default_value = "0,1")]
        classes: String,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Closed-form value to compare against, recorded in the report.
        #[arg(long)]
        formula: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form ED degrees for the supported architecture families.
    EdFormula(EdFormulaArgs),
    /// ED-discriminant tooling.
    #[command(subcommand)]
    Discriminant(DiscriminantCmd),
    /// Degree-2 boundary analysis.
    #[command(subcommand)]
    Quadric(QuadricCmd),
    /// Parameter-discriminant tooling.
    #[command(subcommand)]
    ParamDisc(ParamDiscCmd),
    /// Expected-real-ED-degree formulas and Monte-Carlo validation.
    #[command(subcommand)]
    KacRice(KacRiceCmd),
    /// Soundness benchmark with planted counterexamples.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct EdFormulaArgs {
    /// Shallow network (n, h, d).
    #[arg(long, num_args = 3, value_names = ["N", "H", "D"])]
    shallow: Option<Vec<u64>>,
    /// Width-one bottleneck network (n, s, d).
    #[arg(long, num_args = 3, value_names = ["N", "S", "D"])]
    bottleneck: Option<Vec<u64>>,
    /// Wide deep network (n, s, d).
    #[arg(long, num_args = 3, value_names = ["N", "S", "D"])]
    deep: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum DiscriminantCmd {
    /// Sample real-critical-point counts on a grid, tagged with the
    /// embedded discriminant-fixture sign, as CSV for plotting.
    Probe {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value = "0,1")]
        classes: String,
        #[arg(long, default_value_t = 20)]
        grid: usize,
        #[arg(long, default_value_t = 3.0)]
        range: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum QuadricCmd {
    /// Rank cases, exact ED degree, conic class, and discriminant
    /// components of a degree-2 boundary.
    Analyze {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value = "0,1")]
        classes: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ParamDiscCmd {
    /// Scan a 2D slice of parameter space and emit discriminant components
    /// plus the exact ED degree per grid cell.
    Scan {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value = "0,1")]
        classes: String,
        /// Flat parameter indices to vary (weights row-major then biases,
        /// layer by layer).
        #[arg(long, default_value_t = 0)]
        param_a: usize,
        #[arg(long, default_value_t = 1)]
        param_b: usize,
        #[arg(long, default_value_t = 41)]
        grid: usize,
        #[arg(long, default_value_t = 2.0)]
        span: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum KacRiceCmd {
    /// Closed form d / sqrt(2d - 1).
    Expected {
        #[arg(long)]
        d: u32,
    },
    /// Monte-Carlo real-root counts of finite-width random networks.
    Simulate {
        #[arg(long)]
        d: u32,
        #[arg(long, default_value_t = 2000)]
        width: usize,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Generate a benchmark suite with planted counterexamples.
    Gen {
        #[arg(long, default_value_t = 6)]
        hidden: usize,
        #[arg(long, default_value_t = 2)]
        degree: u32,
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Profile::Desk)]
        profile: Profile,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the dual-objective network on a suite.
    Train {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify every instance; planted instances must falsify.
    Run {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-instance verdict CSV (deterministic).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-instance wall-clock CSV (hardware-bound).
        #[arg(long)]
        timings: Option<PathBuf>,
    },
    /// Summarize a run as one table row (rates and timing statistics).
    Report {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn parse_point(text: &str) -> Result<Vec<f64>> {
    text.replace('\u{2212}', "-")
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad coordinate `{s}` in point"))
        })
        .collect()
}

fn parse_classes(text: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        bail!("expected two comma-separated class indices, got `{text}`");
    }
    Ok((parts[0].trim().parse()?, parts[1].trim().parse()?))
}

fn load_net(path: &Path) -> Result<NetworkParams> {
    NetworkParams::load(path).with_context(|| format!("loading network {}", path.display()))
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{content}"),
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Verify { net, point, eps, seed, out } => {
            let params = load_net(&net)?;
            let xi = parse_point(&point)?;
            let cfg = VerifierConfig { seed, ..VerifierConfig::default() };
            let result = verifier::certify(&params, &xi, eps, &cfg)?;
            emit(&out, &to_json(&result))?;
            Ok(match result.verdict {
                Verdict::Verified => EXIT_OK,
                Verdict::Falsified => EXIT_FALSIFIED,
            })
        }
        Cmd::Margin { net, point, seed, out, trace } => {
            let params = load_net(&net)?;
            let xi = parse_point(&point)?;
            let cfg = VerifierConfig { seed, ..VerifierConfig::default() };
            let report = verifier::compute_margin(&params, &xi, &cfg)?;
            if let Some(trace_path) = trace {
                write_margin_trace(&params, &xi, report.predicted_class, &cfg, &trace_path)?;
            }
            emit(&out, &to_json(&report))?;
            Ok(EXIT_OK)
        }
        Cmd::EdDegree { net, classes, trials, seed, formula, out } => {
            let params = load_net(&net)?;
            let (c, cp) = parse_classes(&classes)?;
            let boundary = params.boundary_polynomial(c, cp)?;
            let report = ed_degree_numeric_vs_formula(
                &boundary,
                trials,
                seed,
                &EdConfig::default(),
                formula,
            )?;
            emit(&out, &to_json(&report))?;
            Ok(EXIT_OK)
        }
        Cmd::EdFormula(args) => {
            let value = if let Some(v) = args.shallow {
                ed_degree_shallow(v[0] as usize, v[1] as usize, v[2] as u32)
            } else if let Some(v) = args.bottleneck {
                ed_degree_bottleneck(v[0] as usize, v[1] as u32, v[2] as u32)
            } else if let Some(v) = args.deep {
                ed_degree_deep_generic(v[0] as usize, v[1] as u32, v[2] as u32)
            } else {
                unreachable!("clap enforces exactly one family");
            };
            println!("{value}");
            Ok(EXIT_OK)
        }
        Cmd::Discriminant(DiscriminantCmd::Probe { net, classes, grid, range, seed, out }) => {
            let params = load_net(&net)?;
            let (c, cp) = parse_classes(&classes)?;
            let boundary = params.boundary_polynomial(c, cp)?;
            if boundary.nvars() != 2 {
                bail!("discriminant probe needs a 2-input network");
            }
            let rows =
                discriminant_probe_grid(&boundary, grid, range, seed, &EdConfig::default())?;
            let mut csv = format!("# seed={seed}\nu1,u2,sign,real_count,max_cluster\n");
            for r in rows {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.u1, r.u2, r.sign, r.real_count, r.max_cluster
                ));
            }
            emit(&out, &csv)?;
            Ok(EXIT_OK)
        }
        Cmd::Quadric(QuadricCmd::Analyze { net, classes, out }) => {
            let params = load_net(&net)?;
            let (c, cp) = parse_classes(&classes)?;
            let boundary = params.boundary_polynomial(c, cp)?;
            let form = extract_quadric(&boundary)?;
            let report = quadric_ed_degree(&form, &QuadricTol::default())?;
            emit(&out, &to_json(&report))?;
            Ok(EXIT_OK)
        }
        Cmd::ParamDisc(ParamDiscCmd::Scan {
            net,
            classes,
            param_a,
            param_b,
            grid,
            span,
            out,
        }) => {
            let params = load_net(&net)?;
            let (c, cp) = parse_classes(&classes)?;
            let base = params.flatten();
            if param_a >= base.len() || param_b >= base.len() || param_a == param_b {
                bail!(
                    "scan indices must be distinct and < {} (network parameter count)",
                    base.len()
                );
            }
            let mut csv = String::from(
                "p_a,p_b,det_a,det_m,eigen_disc,delta,ed_degree,conic_class\n",
            );
            let arch = params.architecture().clone();
            for i in 0..grid {
                for j in 0..grid {
                    let va =
                        base[param_a] - span + 2.0 * span * (i as f64 + 0.5) / grid as f64;
                    let vb =
                        base[param_b] - span + 2.0 * span * (j as f64 + 0.5) / grid as f64;
                    let mut flat = base.clone();
                    flat[param_a] = va;
                    flat[param_b] = vb;
                    let perturbed = NetworkParams::from_flat(&arch, &flat)?;
                    let boundary = perturbed.boundary_polynomial(c, cp)?;
                    let cell = match extract_quadric(&boundary) {
                        Ok(form) => {
                            let report = quadric_ed_degree(&form, &QuadricTol::default())?;
                            let conic = match report.conic_class {
                                Some(ConicClass::Circle) => "circle",
                                Some(ConicClass::Ellipse) => "ellipse",
                                Some(ConicClass::Hyperbola) => "hyperbola",
                                Some(ConicClass::Parabola) => "parabola",
                                Some(ConicClass::Degenerate) => "degenerate",
                                None => "",
                            };
                            format!(
                                "{},{},{},{},{},{},{},{}\n",
                                va,
                                vb,
                                report.components.det_a,
                                report.components.det_m,
                                report.components.eigen_disc,
                                report.components.delta,
                                report.ed_degree,
                                conic
                            )
                        }
                        // Boundary degenerated below degree 2 at this cell.
                        Err(_) => format!("{va},{vb},,,,,,collapsed\n"),
                    };
                    csv.push_str(&cell);
                }
            }
            emit(&out, &csv)?;
            Ok(EXIT_OK)
        }
        Cmd::KacRice(KacRiceCmd::Expected { d }) => {
            println!("{}", kacrice::expected_real_ed(d));
            Ok(EXIT_OK)
        }
        Cmd::KacRice(KacRiceCmd::Simulate { d, width, samples, seed, out }) => {
            let est = kacrice::mc_simulate(d, width, samples, seed)?;
            let mut csv = format!("# seed={seed}\nd,m,sample_id,count\n");
            for (i, count) in est.counts.iter().enumerate() {
                csv.push_str(&format!("{d},{width},{i},{count}\n"));
            }
            csv.push_str(&format!(
                "{d},{width},mean,{}\n",
                est.empirical_mean
            ));
            csv.push_str(&format!("{d},{width},theoretical,{}\n", est.theoretical));
            emit(&out, &csv)?;
            Ok(EXIT_OK)
        }
        Cmd::Bench(BenchCmd::Gen { hidden, degree, eps, seed, profile, out }) => {
            let config = match profile {
                Profile::Desk => BenchConfig::desk(hidden, degree, eps, seed),
                Profile::Paper => BenchConfig::paper(hidden, degree, eps, seed),
            };
            let suite = bench::generate(&config);
            emit(&out, &suite.to_json())?;
            Ok(EXIT_OK)
        }
        Cmd::Bench(BenchCmd::Train { suite, out }) => {
            let suite = load_suite(&suite)?;
            let net = bench::train(&suite, &suite.config.clone())?;
            emit(&out, &net.to_json())?;
            Ok(EXIT_OK)
        }
        Cmd::Bench(BenchCmd::Run { suite, net, seed, out, timings }) => {
            let suite = load_suite(&suite)?;
            let params = load_net(&net)?;
            let report = run_bench(&suite, &params, seed)?;
            let mut csv = format!("# seed={seed}\n");
            csv.push_str(&report.instances_csv());
            emit(&out, &csv)?;
            if let Some(tpath) = timings {
                std::fs::write(&tpath, report.timings_csv())
                    .with_context(|| format!("writing {}", tpath.display()))?;
            }
            Ok(EXIT_OK)
        }
        Cmd::Bench(BenchCmd::Report { suite, net, seed, out }) => {
            let suite = load_suite(&suite)?;
            let params = load_net(&net)?;
            let report = run_bench(&suite, &params, seed)?;
            let mut csv = String::from(BenchReport::SUMMARY_HEADER);
            csv.push_str(&report.summary_csv_row(&suite.config));
            emit(&out, &csv)?;
            Ok(EXIT_OK)
        }
    }
}

fn load_suite(path: &Path) -> Result<BenchmarkSuite> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading suite {}", path.display()))?;
    Ok(BenchmarkSuite::from_json(&text)?)
}

fn run_bench(suite: &BenchmarkSuite, params: &NetworkParams, seed: u64) -> Result<BenchReport> {
    let vcfg = VerifierConfig { seed, ..VerifierConfig::default() };
    Ok(bench::run(suite, params, suite.config.epsilon, &vcfg)?)
}

/// Per-path solver trace of every pairwise relaxed system at `xi`,
/// flattened into one CSV with globally unique path ids.
fn write_margin_trace(
    params: &NetworkParams,
    xi: &[f64],
    predicted: usize,
    cfg: &VerifierConfig,
    out: &Path,
) -> Result<()> {
    let mut csv = format!("# seed={}\npath_id,pair,t,step,residual\n", cfg.seed);
    let k = params.forward(xi)?.len();
    let mut path_id = 0usize;
    for cp in (0..k).filter(|&i| i != predicted) {
        let boundary = params.boundary_polynomial(predicted, cp)?;
        if boundary.is_zero() {
            continue;
        }
        let cs = build_relaxed(&boundary, xi)?;
        let (start, points) = homotopy::total_degree_start(&cs.system, cfg.path_budget)?;
        let gamma = homotopy::gamma_from_seed(cfg.seed ^ (cp as u64));
        let h = homotopy::Homotopy::new(cs.system.clone(), start, gamma)?;
        let tracker = TrackerConfig { record_trace: true, ..cfg.tracker.clone() };
        for z0 in &points {
            let result = homotopy::track_path(&h, z0, &tracker);
            for p in &result.trace {
                csv.push_str(&format!(
                    "{path_id},{cp},{},{},{}\n",
                    p.t, p.step, p.residual
                ));
            }
            path_id += 1;
        }
    }
    std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
