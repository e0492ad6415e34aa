use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use graph_teaching::fitting::{fit_model, simulate_subject, FitOptions, FitResult, SimParams, UtilityCache};
use graph_teaching::records::{read_datasets, write_datasets, Experiment, TrialFilter};
use graph_teaching::stimuli::{generate_pool, write_stimuli, Congruency, StimulusConfig};
use graph_teaching::teachers::FeatureWeights;
use graph_teaching::ModelName;
use graph_teaching_cli::experiment::{long_sequence, parse_condition, pools, slug};
use graph_teaching_cli::report::write_report;
use graph_teaching_llm::{run_teachers, write_run_log, Decoding, EndpointFile, HttpEndpoint, RateLimiter, RunOptions};
use graph_teaching_service::{router, SessionStore, StimulusPools};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "graph-teaching", version, about = "Graph teaching experiments: stimuli, teachers, fitting, analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Baseline,
    Scaffold,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::Baseline => Experiment::Baseline,
            ExperimentArg::Scaffold => Experiment::Scaffold,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CongruencyArg {
    Congruent,
    Incongruent,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    /// Test trials for scaffold-experiment subjects, all trials otherwise.
    Auto,
    All,
    Train,
    Test,
}

#[derive(clap::Args)]
struct PoolArgs {
    /// Directory of pool files written by `gen-pools`; generated on the fly when absent.
    #[arg(long)]
    stimuli: Option<PathBuf>,
    /// Seed for generated pools.
    #[arg(long, default_value_t = 0)]
    pool_seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one screened stimulus pool as a JSON array.
    GenStimuli {
        #[arg(long, value_delimiter = ',', default_value = "1,3,3,3")]
        layers: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        reward_max: i64,
        #[arg(long)]
        pool_size: usize,
        /// Keep only stimuli of this congruency; unscreened when omitted.
        #[arg(long, value_enum)]
        congruency: Option<CongruencyArg>,
        #[arg(long, default_value_t = 0.5)]
        knowledge_probability: f64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the four pools a session service or experiment run draws from.
    GenPools {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run chat-completion teachers through an experiment.
    RunLlm {
        #[arg(long)]
        endpoint: String,
        /// Endpoint configuration (TOML).
        #[arg(long, default_value = "endpoints.toml")]
        config: PathBuf,
        #[arg(long, value_enum)]
        experiment: ExperimentArg,
        /// Scaffold cell as training/scaffolding, e.g. incongruent/inference.
        #[arg(long)]
        condition: Option<String>,
        #[arg(long, default_value_t = 1)]
        teachers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        pools: PoolArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate cognitive-model teachers.
    Simulate {
        #[arg(long)]
        model: ModelName,
        /// Softmax inverse temperature.
        #[arg(long, conflicts_with_all = ["argmax", "weights"])]
        beta: Option<f64>,
        /// Choose uniformly among the utility maxima.
        #[arg(long)]
        argmax: bool,
        /// Reward and depth weights for the reward_depth model.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        weights: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "baseline")]
        experiment: ExperimentArg,
        #[arg(long)]
        condition: Option<String>,
        #[arg(long, default_value_t = 1)]
        subjects: usize,
        /// Trials per subject; repeated experiment sequences when larger than one.
        #[arg(long, default_value_t = 0)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        pools: PoolArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit teacher models to subject datasets; writes one FitResult per line.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "bot,noip,prior_only,reward,depth,reward_depth,qvalue,path_averaged"
        )]
        models: Vec<ModelName>,
        #[arg(long, value_enum, default_value = "auto")]
        filter: FilterArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Teaching Scores and summary tables.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        /// Fit results from `fit`, for best-fit fractions and BIC differences.
        #[arg(long)]
        fits: Option<PathBuf>,
        /// A second dataset file whose graph-wise profile is correlated with this one.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Serve the session API for human participants.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Session log directory.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        pools: PoolArgs,
        /// Static front end to serve at the root.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::GenStimuli {
            layers,
            reward_max,
            pool_size,
            congruency,
            knowledge_probability,
            threshold,
            seed,
            out,
        } => {
            let cfg = StimulusConfig {
                layer_sizes: layers,
                reward_range: (0, reward_max),
                knowledge_probability,
                incongruency_threshold: threshold,
                ..StimulusConfig::default()
            };
            let congruency = congruency.map(|c| match c {
                CongruencyArg::Congruent => Congruency::Congruent,
                CongruencyArg::Incongruent => Congruency::Incongruent,
            });
            let pool = generate_pool(&cfg, pool_size, congruency, seed)?;
            write_stimuli(&out, &pool)?;
            log::info!("wrote {} stimuli to {}", pool.len(), out.display());
        }
        Command::GenPools { seed, out } => {
            StimulusPools::generate(&StimulusConfig::default(), seed)?.save(&out)?;
            log::info!("wrote pools to {}", out.display());
        }
        Command::RunLlm { endpoint, config, experiment, condition, teachers, seed, pools: p, out } => {
            let condition = parse_condition(experiment.into(), condition.as_deref())?;
            let file = EndpointFile::load(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = file.get(&endpoint)?.clone();
            let opts = RunOptions {
                decoding: Decoding {
                    temperature: cfg.decoding.temperature.or(Decoding::deterministic().temperature),
                    max_tokens: cfg.decoding.max_tokens.or(Decoding::deterministic().max_tokens),
                    ..cfg.decoding.clone()
                },
                limiter: cfg.requests_per_minute.map(|r| Arc::new(RateLimiter::per_minute(r))),
                ..RunOptions::default()
            };
            let client = HttpEndpoint::from_env(cfg)?;
            let pools = pools(p.stimuli.as_deref(), p.pool_seed)?;
            let jobs = (0..teachers)
                .map(|i| {
                    let id = format!("{endpoint}-{}-{i:03}", slug(&condition));
                    Ok((id, pools.sequence(&condition, seed + i as u64)?))
                })
                .collect::<Result<Vec<_>>>()?;
            log::info!("running {teachers} teachers on {endpoint} ({})", condition.label());
            let runs = run_teachers(&client, &jobs, condition, &opts);
            fs::create_dir_all(&out)?;
            let datasets: Vec<_> = runs.iter().map(|r| r.dataset.clone()).collect();
            write_datasets(out.join("datasets.jsonl"), &datasets)?;
            let mut log_file = BufWriter::new(File::create(out.join("run_log.jsonl"))?);
            for r in &runs {
                write_run_log(&mut log_file, &r.log)?;
            }
            log_file.flush()?;
            let missing: usize = datasets.iter().map(|d| d.missing_count()).sum();
            log::info!("wrote {} datasets to {} ({missing} missing answers)", datasets.len(), out.display());
        }
        Command::Simulate {
            model,
            beta,
            argmax,
            weights,
            experiment,
            condition,
            subjects,
            trials,
            seed,
            pools: p,
            out,
        } => {
            let params = match (beta, argmax, weights) {
                (_, _, Some(w)) => SimParams::Weights(FeatureWeights { reward: w[0], depth: w[1] }),
                (_, true, None) => SimParams::Argmax,
                (Some(b), false, None) => SimParams::Beta(b),
                (None, false, None) => bail!("give one of --beta, --argmax or --weights"),
            };
            let condition = parse_condition(experiment.into(), condition.as_deref())?;
            let pools = pools(p.stimuli.as_deref(), p.pool_seed)?;
            let cache = UtilityCache::new();
            let datasets = (0..subjects)
                .into_par_iter()
                .map(|i| {
                    let s = seed + i as u64 * 1000;
                    let sequence = long_sequence(&pools, &condition, s, trials)?;
                    let id = format!("{model}-{}-{i:03}", slug(&condition));
                    Ok(simulate_subject(&id, &sequence, condition, model, params, s, &cache)?)
                })
                .collect::<Result<Vec<_>>>()?;
            write_datasets(&out, &datasets)?;
            log::info!("wrote {} simulated subjects to {}", datasets.len(), out.display());
        }
        Command::Fit { data, models, filter, out } => {
            let datasets = read_datasets(&data).with_context(|| format!("reading {}", data.display()))?;
            let cache = UtilityCache::new();
            let jobs: Vec<_> = datasets.iter().flat_map(|d| models.iter().map(move |&m| (d, m))).collect();
            let fits = jobs
                .par_iter()
                .map(|&(d, m)| {
                    let filter = match (filter, d.condition.experiment) {
                        (FilterArg::Auto, Experiment::Scaffold) | (FilterArg::Test, _) => TrialFilter::Test,
                        (FilterArg::Auto, Experiment::Baseline) | (FilterArg::All, _) => TrialFilter::All,
                        (FilterArg::Train, _) => TrialFilter::Train,
                    };
                    let opts = FitOptions { filter, ..FitOptions::default() };
                    fit_model(d, m, &opts, &cache).with_context(|| format!("fitting {m} to {}", d.subject_id))
                })
                .collect::<Result<Vec<FitResult>>>()?;
            let mut w = BufWriter::new(File::create(&out)?);
            for f in &fits {
                serde_json::to_writer(&mut w, f)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            log::info!("wrote {} fits to {}", fits.len(), out.display());
        }
        Command::Analyze { data, fits, reference, report } => {
            let datasets = read_datasets(&data).with_context(|| format!("reading {}", data.display()))?;
            let fits = fits.as_deref().map(read_fits).transpose()?;
            let reference = reference.as_deref().map(read_datasets).transpose()?;
            let summary = write_report(&report, &datasets, fits.as_deref(), reference.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Serve { port, host, data, pools: p, ui } => {
            let pools = match p.stimuli.as_deref() {
                Some(_) => pools(p.stimuli.as_deref(), p.pool_seed)?,
                None => {
                    let dir = data.join("pools");
                    if dir.exists() {
                        pools(Some(&dir), p.pool_seed)?
                    } else {
                        let generated = pools(None, p.pool_seed)?;
                        generated.save(&dir)?;
                        generated
                    }
                }
            };
            let store = SessionStore::open(&data, pools)?;
            let addr: SocketAddr = format!("{host}:{port}").parse()?;
            serve(addr, router(Arc::new(store), ui))?;
        }
    }
    Ok(())
}

fn read_fits(path: &Path) -> Result<Vec<FitResult>> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut fits = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        fits.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(fits)
}

fn serve(addr: SocketAddr, app: axum::Router) -> Result<()> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok(())
    })
}
