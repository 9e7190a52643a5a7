//! The `cnd` command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use cnd_core::angles::GenerateOptions;
use cnd_core::corpus::BoilerplateConfig;
use cnd_core::newsworthiness::ForestParams;
use cnd_core::relevance::{EmbeddingProvider, StubEmbedder};

use crate::config::{ApiConfig, Endpoints, ProviderMode, ENV_DATA_DIR, ENV_EMBED_URL};
use crate::pipeline::{self, MODEL_FILE};
use crate::providers::{redact, HttpEmbedder};

#[derive(Debug, Parser)]
#[command(name = "cnd", version, about = "News discovery over preprints: ingest, score, generate angles, serve")]
pub struct Cli {
    /// Corpus directory.
    #[arg(long, global = true, env = ENV_DATA_DIR, default_value = "data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the data directory with the default outlet roster.
    Init,
    /// Add preprints or outlet news items to the corpus.
    #[command(subcommand)]
    Ingest(Ingest),
    /// Split article ids at a publication date.
    Partition {
        #[arg(long)]
        cutoff: NaiveDate,
    },
    /// Compute feature vectors for every article.
    Features {
        #[arg(long)]
        taxonomy: PathBuf,
    },
    /// Fit a newsworthiness forest on labeled articles.
    Train(TrainArgs),
    /// Predict newsworthiness for every article with features.
    Score {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Embed articles and outlet news items.
    Embed {
        #[arg(long, default_value = "stub")]
        provider: ProviderMode,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Characters of title and body embedded per item.
        #[arg(long, default_value_t = pipeline::DEFAULT_CHAR_BUDGET)]
        char_budget: usize,
    },
    /// Generate three news angles for an article.
    Angles {
        #[arg(long)]
        article: String,
        /// Ignore any cached angles.
        #[arg(long)]
        fresh: bool,
        #[arg(long, default_value_t = cnd_core::angles::DEFAULT_REDUNDANCY_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value = "http")]
        providers: ProviderMode,
    },
    /// Evaluation statistics.
    #[command(subcommand)]
    Eval(Eval),
    /// Serve the REST API.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum Ingest {
    /// Harvested arXiv OAI-PMH XML.
    Arxiv {
        #[arg(long)]
        input: PathBuf,
    },
    /// Newline-delimited news items for one rostered outlet.
    Outlet {
        #[arg(long)]
        outlet: String,
        #[arg(long)]
        input: PathBuf,
        /// Fraction of items a line must appear in to count as boilerplate.
        #[arg(long, default_value_t = 0.5)]
        boilerplate_threshold: f64,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model output path; defaults to forest.json in the data directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 8)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 2)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 16)]
    pub features_per_split: usize,
}

#[derive(Debug, Subcommand)]
pub enum Eval {
    /// ICC(3,1) of overall quality across raters.
    Icc {
        #[arg(long)]
        ratings: PathBuf,
    },
    /// Precision@K of a ranked id list.
    Pk {
        #[arg(long)]
        ranked: PathBuf,
        #[arg(long)]
        relevant: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Spearman correlation of two score columns.
    Spearman {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    /// `stub` switches both providers to deterministic offline stubs.
    #[arg(long, default_value = "http")]
    pub providers: ProviderMode,
    /// Static console assets served under /ui.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    #[arg(long, default_value_t = cnd_core::query::MAX_PAGE_SIZE)]
    pub page_size_cap: usize,
    /// Generation requests per minute to the remote provider; 0 for no limit.
    #[arg(long, default_value_t = 60)]
    pub llm_rate: u32,
}

fn model_path(data_dir: &Path, model: Option<PathBuf>) -> PathBuf {
    model.unwrap_or_else(|| data_dir.join(MODEL_FILE))
}

pub fn run(cli: Cli) -> Result<()> {
    let data_dir = cli.data_dir.as_path();
    let endpoints = Endpoints::from_env();
    match cli.command {
        Command::Init => {
            let created = pipeline::init(data_dir)?;
            println!("initialized {} ({} files created)", data_dir.display(), created.len());
        }
        Command::Ingest(Ingest::Arxiv { input }) => {
            let r = pipeline::ingest_arxiv(data_dir, &input)?;
            println!(
                "articles: {} added, {} replaced, {} skipped in feed",
                r.report.added, r.report.replaced, r.feed_skipped
            );
        }
        Command::Ingest(Ingest::Outlet {
            outlet,
            input,
            boilerplate_threshold,
        }) => {
            if !(boilerplate_threshold > 0.0 && boilerplate_threshold <= 1.0) {
                bail!("--boilerplate-threshold must lie in (0, 1]");
            }
            let config = BoilerplateConfig {
                threshold: boilerplate_threshold,
                ..Default::default()
            };
            let r = pipeline::ingest_outlet(data_dir, &outlet, &input, config)?;
            println!(
                "{outlet}: {} added, {} replaced, {} skipped",
                r.added, r.replaced, r.skipped
            );
        }
        Command::Partition { cutoff } => {
            let (before, after) = pipeline::partition(data_dir, cutoff)?;
            println!(
                "{before} before {cutoff} -> {}, {after} on or after -> {}",
                pipeline::TRAIN_IDS_FILE,
                pipeline::HOLDOUT_IDS_FILE
            );
        }
        Command::Features { taxonomy } => {
            let r = pipeline::features(data_dir, &taxonomy)?;
            println!("features ({}): {} computed, {} without tokens", r.schema_version, r.computed, r.failed.len());
            for id in &r.failed {
                eprintln!("no tokens: {id}");
            }
        }
        Command::Train(args) => {
            let params = ForestParams {
                n_trees: args.trees,
                max_depth: args.max_depth,
                min_leaf: args.min_leaf,
                bootstrap_seed: args.seed,
                features_per_split: args.features_per_split,
                bootstrap: true,
            };
            let out = model_path(data_dir, args.out);
            let model = pipeline::train(data_dir, &args.labels, &params, &out)?;
            println!("trained {} trees on {} features -> {}", model.trees.len(), model.n_features, out.display());
        }
        Command::Score { model } => {
            let r = pipeline::score(data_dir, &model_path(data_dir, model))?;
            println!("scored {} articles, {} without features", r.scored, r.skipped_no_features);
        }
        Command::Embed {
            provider,
            dim,
            seed,
            char_budget,
        } => {
            let embedder: Box<dyn EmbeddingProvider> = match provider {
                ProviderMode::Stub => Box::new(StubEmbedder {
                    dim: dim.unwrap_or(pipeline::DEFAULT_STUB_DIM),
                    seed,
                }),
                ProviderMode::Http => {
                    let Some(url) = endpoints.embed_url.as_deref() else {
                        bail!("{ENV_EMBED_URL} is not set");
                    };
                    let Some(dim) = dim else {
                        bail!("--dim is required with --provider http");
                    };
                    Box::new(HttpEmbedder::new(url, endpoints.embed_key.clone(), dim).map_err(anyhow::Error::msg)?)
                }
            };
            let seed = (provider == ProviderMode::Stub).then_some(seed);
            let r = pipeline::embed(data_dir, embedder.as_ref(), seed, char_budget)?;
            println!("embedded {} articles and {} outlets at dim {}", r.articles, r.outlets.len(), r.dim);
        }
        Command::Angles {
            article,
            fresh,
            threshold,
            providers,
        } => {
            let provider = pipeline::angle_provider_for(providers, &endpoints, 0)?;
            let embedder = pipeline::embedder_for(providers, &endpoints, data_dir)?;
            let set = pipeline::angles(
                data_dir,
                &article,
                provider.as_ref(),
                embedder.as_ref(),
                GenerateOptions { fresh, threshold },
            )?;
            println!("{}", serde_json::to_string_pretty(&set)?);
        }
        Command::Eval(Eval::Icc { ratings }) => {
            let r = pipeline::eval_icc(&ratings)?;
            println!("ICC(3,1) = {:.4} ({} targets, {} raters)", r.icc, r.targets, r.raters);
        }
        Command::Eval(Eval::Pk { ranked, relevant, k }) => {
            println!("P@{k} = {:.4}", pipeline::eval_pk(&ranked, &relevant, k)?);
        }
        Command::Eval(Eval::Spearman { input }) => {
            println!("spearman = {:.4}", pipeline::eval_spearman(&input)?);
        }
        Command::Serve(args) => {
            let config = ApiConfig {
                bind: args.bind,
                port: args.port,
                data_dir: data_dir.to_path_buf(),
                endpoints,
                providers: args.providers,
                page_size_cap: args.page_size_cap,
                llm_rate_per_minute: args.llm_rate,
                ui_dir: args.ui_dir,
            };
            crate::api::serve(&config)?;
        }
    }
    Ok(())
}

/// Entry point for the `cnd` binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let secrets = Endpoints::from_env().secrets();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", redact(&format!("{e:#}"), &secrets));
            ExitCode::FAILURE
        }
    }
}
