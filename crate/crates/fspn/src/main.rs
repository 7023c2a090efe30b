//! Command-line front end: learning, inference, evaluation, BN compilation,
//! data generation, validation, statistics, and benchmarking.

use clap::{Args, Parser, Subcommand, ValueEnum};
use fspn::compile::{bn_joint, bn_to_fspn, BayesNet};
use fspn::data_io::{generate_synthetic, load_benchmark, load_csv, save_csv, SchemaHints, SyntheticSpec};
use fspn::error::{FspnError, Result};
use fspn::evalharness::{avg_rdc_score, empirical_joint, kl_divergence, scaling_benchmark, JointTable};
use fspn::fmt::sig12;
use fspn::inference::{infer_evidence, infer_marginal, log_likelihood, parse_query_line, Query};
use fspn::learning::{learn_fspn, LearnConfig};
use fspn::manifest::{default_manifest_path, RunManifest};
use fspn::model::{deserialize, deserialize_lenient, serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "fspn", version, about = "Factorize-sum-split-product networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Csv,
}

#[derive(Args)]
struct ManifestArg {
    /// Manifest path; defaults to `<out>.manifest.json` or `fspn-manifest.json`
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a model from a CSV dataset
    Learn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// key=value config file; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed from the config file
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Evaluate marginal or conditional probabilities, one query per line
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        query: PathBuf,
        /// Write probabilities here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Average log-likelihood of a dataset under a model, or of a learned
    /// model on a benchmark train/test triple
    EvalLl {
        #[arg(long, conflicts_with = "bench_dir", requires = "data")]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory holding `<name>.{ts,valid,test}.data`
        #[arg(long, requires = "name")]
        bench_dir: Option<PathBuf>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write per-row log-likelihoods here
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// KL divergence between a true joint (dataset or BN) and a model
    EvalKl {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "bn")]
        data: Option<PathBuf>,
        #[arg(long)]
        bn: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Compile a discrete Bayesian network into an equivalent model
    ConvertBn {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Generate synthetic data from a JSON spec, plus a sidecar spec file
    GenData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Check every structural invariant of a model file
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Node and parameter counts of a model
    Stats {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Inference latency versus model size on synthetic models
    Bench {
        /// Comma-separated ascending node counts, e.g. 100,1000,10000
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        events: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        manifest: ManifestArg,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err}");
        let code = match err {
            FspnError::Usage(_) => 1,
            _ => 2,
        };
        std::process::exit(code);
    }
}

fn load_model(path: &Path) -> Result<fspn::FspnModel> {
    let text = std::fs::read_to_string(path).map_err(|e| FspnError::io(path, e))?;
    deserialize(&text)
}

fn read_config(config: Option<&Path>, seed: Option<u64>) -> Result<LearnConfig> {
    let mut cfg = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| FspnError::io(path, e))?;
            LearnConfig::from_key_value_text(&text)?
        }
        None => LearnConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| FspnError::io(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<()> {
    let start = Instant::now();
    match command {
        Command::Learn { data, out, config, seed, manifest } => {
            let mut run = RunManifest::new("learn");
            let cfg = read_config(config.as_deref(), seed)?;
            run.record_input(&data)?;
            if let Some(c) = &config {
                run.record_input(c)?;
            }
            run.seed = Some(cfg.seed);
            let matrix = load_csv(&data, &SchemaHints::default())?;
            let model = learn_fspn(&matrix, &cfg)?;
            write_text(&out, &serialize(&model))?;
            run.config = Some(cfg);
            run.record_output(&out);
            finish(run, manifest, Some(&out), start)
        }
        Command::Infer { model, query, out, manifest } => {
            let mut run = RunManifest::new("infer");
            run.record_input(&model)?;
            run.record_input(&query)?;
            let m = load_model(&model)?;
            let text = std::fs::read_to_string(&query).map_err(|e| FspnError::io(&query, e))?;
            let mut lines = String::new();
            for raw in text.lines() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let p = match parse_query_line(line, &m.variables)? {
                    Query::Marginal(event) => infer_marginal(&m, &event)?.value(),
                    Query::Conditional { query, evidence } => {
                        infer_evidence(&m, &query, &evidence)?.value()
                    }
                };
                lines.push_str(&sig12(p));
                lines.push('\n');
            }
            emit(out.as_deref(), &lines)?;
            if let Some(o) = &out {
                run.record_output(o);
            }
            finish(run, manifest, out.as_deref(), start)
        }
        Command::EvalLl { model, data, bench_dir, name, config, seed, out, manifest } => {
            let mut run = RunManifest::new("eval-ll");
            let (m, test) = match (&model, &bench_dir) {
                (Some(model_path), None) => {
                    let data_path = data.as_ref().ok_or_else(|| {
                        FspnError::Usage("eval-ll needs --data with --model".into())
                    })?;
                    run.record_input(model_path)?;
                    run.record_input(data_path)?;
                    let m = load_model(model_path)?;
                    let test = load_csv(data_path, &SchemaHints::default())?;
                    (m, test)
                }
                (None, Some(dir)) => {
                    let name = name.as_ref().unwrap();
                    let cfg = read_config(config.as_deref(), seed)?;
                    run.seed = Some(cfg.seed);
                    let (train, _valid, test) = load_benchmark(dir, name)?;
                    for suffix in ["ts", "valid", "test"] {
                        run.record_input(&dir.join(format!("{name}.{suffix}.data")))?;
                    }
                    let m = learn_fspn(&train, &cfg)?;
                    run.config = Some(cfg);
                    (m, test)
                }
                _ => {
                    return Err(FspnError::Usage(
                        "eval-ll needs either --model/--data or --bench-dir/--name".into(),
                    ))
                }
            };
            let (per_row, avg) = log_likelihood(&m, &test)?;
            if let Some(path) = &out {
                let mut text = String::new();
                for v in &per_row {
                    text.push_str(&sig12(*v));
                    text.push('\n');
                }
                write_text(path, &text)?;
                run.record_output(path);
            }
            println!("rows {}", per_row.len());
            println!("average_log_likelihood {}", sig12(avg));
            finish(run, manifest, out.as_deref(), start)
        }
        Command::EvalKl { model, data, bn, out, format, manifest } => {
            let mut run = RunManifest::new("eval-kl");
            run.record_input(&model)?;
            let m = load_model(&model)?;
            let (truth, avg_rdc): (JointTable, Option<f64>) = match (&data, &bn) {
                (Some(path), None) => {
                    run.record_input(path)?;
                    let matrix = load_csv(path, &SchemaHints::default())?;
                    let score = avg_rdc_score(&matrix, &LearnConfig::default())?;
                    (empirical_joint(&matrix)?, Some(score))
                }
                (None, Some(path)) => {
                    run.record_input(path)?;
                    let text =
                        std::fs::read_to_string(path).map_err(|e| FspnError::io(path, e))?;
                    (bn_joint(&BayesNet::parse(&text)?)?, None)
                }
                _ => {
                    return Err(FspnError::Usage(
                        "eval-kl needs exactly one truth source: --data or --bn".into(),
                    ))
                }
            };
            let kl = kl_divergence(&truth, &m)?;
            let stats = m.stats();
            let text = match format {
                OutputFormat::Csv => format!(
                    "avg_rdc_score,n_nodes,n_params,kl_divergence\n{},{},{},{}\n",
                    avg_rdc.map(sig12).unwrap_or_default(),
                    stats.n_nodes,
                    stats.n_params,
                    sig12(kl),
                ),
                OutputFormat::Text => {
                    let mut t = String::new();
                    if let Some(score) = avg_rdc {
                        t.push_str(&format!("avg_rdc_score {}\n", sig12(score)));
                    }
                    t.push_str(&format!("n_nodes {}\n", stats.n_nodes));
                    t.push_str(&format!("n_params {}\n", stats.n_params));
                    t.push_str(&format!("kl_divergence {}\n", sig12(kl)));
                    t
                }
            };
            emit(out.as_deref(), &text)?;
            if let Some(o) = &out {
                run.record_output(o);
            }
            finish(run, manifest, out.as_deref(), start)
        }
        Command::ConvertBn { input, out, manifest } => {
            let mut run = RunManifest::new("convert-bn");
            run.record_input(&input)?;
            let text = std::fs::read_to_string(&input).map_err(|e| FspnError::io(&input, e))?;
            let bn = BayesNet::parse(&text)?;
            let model = bn_to_fspn(&bn)?;
            write_text(&out, &serialize(&model))?;
            run.record_output(&out);
            finish(run, manifest, Some(&out), start)
        }
        Command::GenData { spec, out, manifest } => {
            let mut run = RunManifest::new("gen-data");
            run.record_input(&spec)?;
            let text = std::fs::read_to_string(&spec).map_err(|e| FspnError::io(&spec, e))?;
            let parsed: SyntheticSpec = serde_json::from_str(&text)
                .map_err(|e| FspnError::parse(spec.display().to_string(), e.to_string()))?;
            run.seed = Some(parsed.seed);
            let matrix = generate_synthetic(&parsed)?;
            save_csv(&matrix, &out)?;
            let sidecar = {
                let mut name = out.file_name().unwrap_or_default().to_os_string();
                name.push(".spec.json");
                out.with_file_name(name)
            };
            let mut spec_text = serde_json::to_string_pretty(&parsed)
                .map_err(|e| FspnError::Data(e.to_string()))?;
            spec_text.push('\n');
            write_text(&sidecar, &spec_text)?;
            run.record_output(&out);
            run.record_output(&sidecar);
            finish(run, manifest, Some(&out), start)
        }
        Command::Validate { model, manifest } => {
            let mut run = RunManifest::new("validate");
            run.record_input(&model)?;
            let text = std::fs::read_to_string(&model).map_err(|e| FspnError::io(&model, e))?;
            let (_m, report) = deserialize_lenient(&text)?;
            if report.is_valid() {
                println!("valid");
                finish(run, manifest, None, start)
            } else {
                for v in &report.violations {
                    println!("{}: {}", v.path, v.message);
                }
                finish(run, manifest, None, start)?;
                Err(FspnError::Model(format!(
                    "model failed validation with {} violation(s)",
                    report.violations.len()
                )))
            }
        }
        Command::Stats { model, format, manifest } => {
            let mut run = RunManifest::new("stats");
            run.record_input(&model)?;
            let m = load_model(&model)?;
            let s = m.stats();
            let text = match format {
                OutputFormat::Csv => format!(
                    "n_nodes,n_factorize,n_sum,n_product,n_split,n_unileaf,n_multileaf,n_params,n_bound_params,depth\n{},{},{},{},{},{},{},{},{},{}\n",
                    s.n_nodes, s.n_factorize, s.n_sum, s.n_product, s.n_split,
                    s.n_unileaf, s.n_multileaf, s.n_params, s.n_bound_params, s.depth,
                ),
                OutputFormat::Text => format!(
                    "n_nodes {}\nn_factorize {}\nn_sum {}\nn_product {}\nn_split {}\nn_unileaf {}\nn_multileaf {}\nn_params {}\nn_bound_params {}\ndepth {}\n",
                    s.n_nodes, s.n_factorize, s.n_sum, s.n_product, s.n_split,
                    s.n_unileaf, s.n_multileaf, s.n_params, s.n_bound_params, s.depth,
                ),
            };
            print!("{text}");
            finish(run, manifest, None, start)
        }
        Command::Bench { sizes, events, seed, out, manifest } => {
            let mut run = RunManifest::new("bench");
            run.seed = Some(seed);
            let report = scaling_benchmark(&sizes, events, seed)?;
            let mut csv = String::from("target_nodes,actual_nodes,median_latency_ns\n");
            for row in &report.rows {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    row.target_nodes, row.actual_nodes, row.median_latency_ns
                ));
            }
            emit(out.as_deref(), &csv)?;
            match (report.slope, report.r_squared) {
                (Some(slope), Some(r2)) => {
                    println!("slope {}", sig12(slope));
                    println!("r_squared {}", sig12(r2));
                }
                _ => println!("slope undefined (need at least two sizes)"),
            }
            if let Some(o) = &out {
                run.record_output(o);
            }
            finish(run, manifest, out.as_deref(), start)
        }
    }
}

fn finish(
    mut run: RunManifest,
    manifest: ManifestArg,
    out: Option<&Path>,
    start: Instant,
) -> Result<()> {
    run.wall_clock_ms = start.elapsed().as_secs_f64() * 1e3;
    let path = manifest.manifest.unwrap_or_else(|| default_manifest_path(out));
    run.write(&path)
}
