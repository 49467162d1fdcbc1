//! `nli`: native language identification pipeline driver.

mod config;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nli_core::synth::CorpusSpec;
use nli_core::{Error, ErrorClass};

use config::{FeatureSet, Overrides, ENDPOINT_ENV};

#[derive(Parser)]
#[command(name = "nli", version, about = "Native language identification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Output root, overriding `paths.out_dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Grammar service base URL, overriding the file and the environment.
    #[arg(long)]
    grammar_endpoint: Option<String>,
    /// Never contact the grammar service; a cache miss is an error.
    #[arg(long)]
    offline: bool,
    #[arg(long, value_enum)]
    feature_set: Option<FeatureSet>,
    /// Refit linguistic vocabularies inside each cross-validation fold.
    #[arg(long)]
    strict_refit: bool,
    /// Number of held-out chunks for the length analysis.
    #[arg(long)]
    holdout: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize, balance, chunk and split the corpus.
    Prepare(Common),
    /// Fetch grammar-service responses for every experiment and out-of-sample chunk.
    GrammarCache(Common),
    /// Fit vocabularies on the experiment split and write the linguistic feature matrices.
    Features(Common),
    /// Validate embedding files and join them to the chunk store.
    EmbedImport(Common),
    /// Stratified k-fold cross-validation on the experiment split.
    Cv(Common),
    /// Train on the experiment split, score the out-of-sample split.
    Oos(Common),
    /// Accuracy on prefix slices of held-out chunks.
    LengthSense(Common),
    /// Ward clustering of per-label centroids.
    Cluster(Common),
    /// Two-dimensional PCA of per-label centroids.
    Pca(Common),
    /// Results table, JSON report and length-analysis series.
    Report(Common),
    /// Write the seeded synthetic author corpus and tagged corpus.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = CorpusSpec::default().seed)]
        seed: u64,
        /// Scales the pseudo-languages' habits; 1.0 is blatant.
        #[arg(long, default_value_t = CorpusSpec::default().tic_strength)]
        tic_strength: f64,
        /// Sentences in the tagged training corpus.
        #[arg(long, default_value_t = 3000)]
        tagged_sentences: usize,
    },
    /// Write class-correlated synthetic embedding files for a chunk store.
    SynthEmbeddings {
        #[arg(long)]
        chunks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 41)]
        seed: u64,
    },
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        out_dir: c.out_dir.clone(),
        grammar_endpoint: c.grammar_endpoint.clone(),
        offline: c.offline,
        feature_set: c.feature_set,
        strict_refit: c.strict_refit,
        holdout: c.holdout,
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Io => 3,
        ErrorClass::Protocol => 4,
        ErrorClass::Numeric => 5,
    }
}

fn class_name(e: &Error) -> &'static str {
    match e.class() {
        ErrorClass::Config => "config",
        ErrorClass::Io => "io",
        ErrorClass::Protocol => "protocol",
        ErrorClass::Numeric => "numeric",
    }
}

fn run(cli: Cli) -> nli_core::Result<()> {
    let (common, stage): (Common, fn(&config::Loaded) -> nli_core::Result<()>) = match cli.command {
        Command::SynthCorpus {
            out,
            seed,
            tic_strength,
            tagged_sentences,
        } => {
            let spec = CorpusSpec {
                seed,
                tic_strength,
                ..CorpusSpec::default()
            };
            return stages::synth_corpus(&out, &spec, tagged_sentences);
        }
        Command::SynthEmbeddings { chunks, out, seed } => return stages::synth_embeddings(&chunks, &out, seed),
        Command::Prepare(c) => (c, stages::prepare),
        Command::GrammarCache(c) => (c, stages::grammar_cache),
        Command::Features(c) => (c, stages::features),
        Command::EmbedImport(c) => (c, stages::embed_import),
        Command::Cv(c) => (c, stages::cv),
        Command::Oos(c) => (c, stages::oos),
        Command::LengthSense(c) => (c, stages::length_sense),
        Command::Cluster(c) => (c, stages::cluster),
        Command::Pca(c) => (c, stages::pca),
        Command::Report(c) => (c, stages::report),
    };
    let loaded = config::load(&common.config, &overrides(&common), std::env::var(ENDPOINT_ENV).ok())?;
    stage(&loaded)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": class_name(&e), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::from(exit_code(&e))
        }
    }
}
