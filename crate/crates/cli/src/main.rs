mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ck_core::embedding::{Embedder, ProviderDescriptor, DEFAULT_HASH_DIM, HASH_PROVIDER_NAME};
use ck_core::ingest::{
    build_binary_dataset, examples_in, parse_dump_lenient, read_labels, split_conversations, validate_examples,
    write_dump, write_labels, Corpus, LabeledExample, SplitSpec,
};
use ck_core::kernel::{KernelFamily, KernelShape, WindowKind, DEFAULT_WINDOW_SIZE};
use ck_core::metrics::{evaluate, EvalReport};
use ck_core::model::{ConversationKernel, ModelConfig, Prediction, DEFAULT_HIDDEN};
use ck_core::synthetic::{gen_synthetic, SyntheticConfig};
use ck_core::train::{train, Checkpoint, TrainConfig};
use ck_core::tree::Category;
use ck_core::Execution;

use error::{CliError, Kind};

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "ck", version, about = "Conversation-kernel comment classification")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL dump and print corpus statistics.
    Ingest(IngestArgs),
    /// Write a synthetic corpus with a planted signal.
    GenSynthetic(GenArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write a report.
    Eval(EvalArgs),
    /// Print p(y=1) for one target comment.
    Predict(PredictArgs),
    /// Show the windows of one target and how the model weighs them.
    Explain(ExplainArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderKind {
    Hash,
    Remote,
}

#[derive(Args)]
struct ProviderArgs {
    #[arg(long, value_enum)]
    provider: Option<ProviderKind>,
    #[arg(long, env = "CK_REMOTE_URL")]
    remote_url: Option<String>,
    /// Hash backbone dimension.
    #[arg(long, default_value_t = DEFAULT_HASH_DIM)]
    dim: usize,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value = "anc-sib-child")]
    kernel: KernelFamily,
    #[arg(long, default_value_t = DEFAULT_WINDOW_SIZE)]
    window_size: usize,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    dump: PathBuf,
    /// JSONL labels; without it a balanced dataset is built for --category.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    category: Option<Category>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    dump: PathBuf,
    /// Fail on the first malformed record or invalid conversation.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Output directory; receives dump.jsonl and labels.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n_trees: usize,
    #[arg(long, default_value = "ancestor")]
    zone: WindowKind,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = DEFAULT_WINDOW_SIZE)]
    window_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Checkpoint path.
    #[arg(long, default_value = "checkpoint.json")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitName {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitName,
    /// Split seed; defaults to the training seed stored in the checkpoint.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print JSON instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dump: PathBuf,
    #[arg(long)]
    conversation: String,
    #[arg(long)]
    target: String,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    dump: PathBuf,
    #[arg(long)]
    conversation: String,
    #[arg(long)]
    target: String,
    /// Without a checkpoint a freshly initialised model is used.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::usage(e.kind().to_string());
            eprintln!("{}", err.to_line());
            return ExitCode::from(Kind::Usage.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };

    let outcome = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::GenSynthetic(a) => gen(a),
        Command::Train(a) => run_train(a, exec),
        Command::Eval(a) => run_eval(a, exec),
        Command::Predict(a) => predict(a),
        Command::Explain(a) => explain(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            eprintln!("{}", e.to_line());
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    let parsed = parse_dump_lenient(path)?;
    for e in &parsed.errors {
        log::warn!("{}: line {}: {}", path.display(), e.line, e.reason);
    }
    let (corpus, failures) = Corpus::build(parsed);
    for (conv, e) in &failures {
        log::warn!("conversation {conv} skipped: {e}");
    }
    Ok(corpus)
}

fn ingest(a: IngestArgs) -> Result<()> {
    let parsed = parse_dump_lenient(&a.dump)?;
    let n_comments = parsed.n_comments();
    let record_errors = parsed.errors.clone();
    let (corpus, failures) = Corpus::build(parsed);
    if a.strict {
        if let Some(e) = record_errors.first() {
            return Err(CliError::data(format!("line {}: {}", e.line, e.reason)));
        }
        if let Some((conv, e)) = failures.first() {
            return Err(CliError::data(format!("conversation '{conv}': {e}")));
        }
    }
    for e in &record_errors {
        eprintln!("line {}: {}", e.line, e.reason);
    }
    for (conv, e) in &failures {
        eprintln!("conversation {conv}: {e}");
    }
    let n_errors = record_errors.len() + failures.len();
    let n_conversations = corpus.len() + failures.len();
    if a.json {
        let counts: serde_json::Map<String, serde_json::Value> = corpus
            .category_counts()
            .into_iter()
            .map(|(c, n)| (c.as_str().to_owned(), n.into()))
            .collect();
        let out = serde_json::json!({
            "conversations": n_conversations,
            "comments": n_comments,
            "errors": n_errors,
            "valid_conversations": corpus.len(),
            "categories": counts,
        });
        println!("{out}");
    } else {
        println!(
            "{}, {}, {}",
            plural(n_conversations, "conversation"),
            plural(n_comments, "comment"),
            plural(n_errors, "error")
        );
    }
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        n_trees: a.n_trees,
        signal_zone: a.zone,
        label_noise: a.noise,
        window_size: a.window_size,
        seed: a.seed,
        ..Default::default()
    };
    let syn = gen_synthetic(&cfg)?;
    fs::create_dir_all(&a.out)?;
    let dump = a.out.join("dump.jsonl");
    let labels = a.out.join("labels.jsonl");
    write_dump(&dump, syn.corpus.trees())?;
    write_labels(&labels, &syn.examples)?;
    println!(
        "wrote {} ({}) and {} ({})",
        dump.display(),
        plural(syn.corpus.n_comments(), "comment"),
        labels.display(),
        plural(syn.examples.len(), "example")
    );
    Ok(())
}

fn hash_embedder(dim: usize) -> Result<Embedder> {
    Ok(Embedder::hash(dim)?)
}

#[cfg(feature = "remote")]
fn remote_embedder(url: &str) -> Result<Embedder> {
    use ck_core::embedding::{RemoteConfig, RemoteProvider};
    let provider = RemoteProvider::connect(RemoteConfig::new(url))?;
    Ok(Embedder::new(Arc::new(provider)))
}

#[cfg(not(feature = "remote"))]
fn remote_embedder(_url: &str) -> Result<Embedder> {
    Err(CliError::usage("this build has no remote provider support"))
}

fn fresh_embedder(p: &ProviderArgs) -> Result<Embedder> {
    match p.provider.unwrap_or(ProviderKind::Hash) {
        ProviderKind::Hash => hash_embedder(p.dim),
        ProviderKind::Remote => {
            let url = p
                .remote_url
                .as_deref()
                .ok_or_else(|| CliError::usage("--provider remote needs --remote-url or CK_REMOTE_URL"))?;
            remote_embedder(url)
        }
    }
}

/// The backbone a checkpoint was trained against.
fn checkpoint_embedder(desc: &ProviderDescriptor, p: &ProviderArgs) -> Result<Embedder> {
    let embedder = if desc.name == HASH_PROVIDER_NAME {
        hash_embedder(desc.dim)?
    } else {
        let url = p
            .remote_url
            .as_deref()
            .or(desc.url.as_deref())
            .ok_or_else(|| CliError::usage("checkpoint needs a remote provider; pass --remote-url"))?;
        remote_embedder(url)?
    };
    if embedder.dim() != desc.dim {
        return Err(CliError::provider(format!(
            "provider dimension {} does not match the checkpoint's {}",
            embedder.dim(),
            desc.dim
        )));
    }
    Ok(embedder)
}

struct Datasets {
    train: Vec<LabeledExample>,
    validation: Vec<LabeledExample>,
    test: Vec<LabeledExample>,
    source: String,
}

impl Datasets {
    fn get(&self, split: SplitName) -> Vec<LabeledExample> {
        match split {
            SplitName::Train => self.train.clone(),
            SplitName::Validation => self.validation.clone(),
            SplitName::Test => self.test.clone(),
            SplitName::All => [&self.train[..], &self.validation, &self.test].concat(),
        }
    }
}

/// Split conversations 80/10/10; category datasets are balanced within each split.
fn datasets(corpus: &Corpus, data: &DataArgs, seed: u64) -> Result<Datasets> {
    let spec = SplitSpec::standard(seed);
    match (&data.labels, data.category) {
        (Some(path), _) => {
            let examples = read_labels(path)?;
            validate_examples(corpus, &examples)?;
            let split = split_conversations(examples.iter().map(|e| e.conversation_id.as_str()), &spec)?;
            Ok(Datasets {
                train: examples_in(&examples, &split.train),
                validation: examples_in(&examples, &split.validation),
                test: examples_in(&examples, &split.test),
                source: format!("labels:{}", path.display()),
            })
        }
        (None, Some(category)) => {
            let split = split_conversations(corpus.ids(), &spec)?;
            let build = |ids: &[String]| build_binary_dataset(ids.iter().filter_map(|id| corpus.get(id)), category, seed);
            Ok(Datasets {
                train: build(&split.train)?,
                validation: build(&split.validation)?,
                test: build(&split.test)?,
                source: format!("category:{}", category.as_str()),
            })
        }
        (None, None) => Err(CliError::usage("pass --labels or --category")),
    }
}

fn run_train(a: TrainArgs, exec: Execution) -> Result<()> {
    let corpus = load_corpus(&a.data.dump)?;
    let sets = datasets(&corpus, &a.data, a.seed)?;
    log::info!(
        "{} train / {} validation / {} test examples",
        sets.train.len(),
        sets.validation.len(),
        sets.test.len()
    );
    let embedder = fresh_embedder(&a.provider)?;
    let shape = KernelShape::new(a.kernel.kernel, a.kernel.window_size).map_err(|e| CliError::usage(e.to_string()))?;
    let model = ConversationKernel::init(ModelConfig::new(shape, embedder.dim()).with_hidden(a.hidden), a.seed)?;

    let mut config = TrainConfig::for_provider(&embedder.descriptor().name);
    config.seed = a.seed;
    config.execution = exec;
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(lr) = a.lr {
        config.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        config.batch_size = b;
    }

    let state = train(&model, &embedder, &corpus, &sets.train, &sets.validation, &config)?;
    let best = state.best_model(&model);
    let mut ck = Checkpoint::new(&best, embedder.descriptor().clone()).with_training(
        &config,
        &state.history,
        state.best_epoch,
    );
    ck.metadata.insert("dataset".into(), sets.source.clone());
    ck.metadata.insert("split_seed".into(), a.seed.to_string());
    ck.save(&a.out)?;

    for r in &state.history {
        println!(
            "epoch {:>3}  train loss {:.4}  val loss {:.4}  val acc {:.4}  val macro-F1 {:.4}",
            r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.val_macro_f1
        );
    }
    match state.best_epoch {
        Some(e) => println!("best epoch {e}; checkpoint written to {}", a.out.display()),
        None => println!("checkpoint written to {}", a.out.display()),
    }
    Ok(())
}

fn run_eval(a: EvalArgs, exec: Execution) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.model()?;
    let embedder = checkpoint_embedder(&ck.provider, &a.provider)?;
    let corpus = load_corpus(&a.data.dump)?;
    let seed = a.seed.or(ck.train_config.map(|c| c.seed)).unwrap_or(0);
    let examples = datasets(&corpus, &a.data, seed)?.get(a.split);
    let report: EvalReport = evaluate(&model, &embedder, &corpus, &examples, exec)?;
    if let Some(out) = &a.out {
        fs::write(out, report.to_json())?;
    }
    if a.json {
        println!("{}", report.to_json());
    } else {
        print!("{report}");
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.model()?;
    let embedder = checkpoint_embedder(&ck.provider, &a.provider)?;
    let corpus = load_corpus(&a.dump)?;
    let tree = corpus.tree(&a.conversation)?;
    let pred = model.predict(&embedder, tree, &a.target)?;
    if a.json {
        println!("{}", serde_json::to_string(&pred).expect("predictions serialise"));
    } else {
        println!("{}", pred.p_positive);
    }
    Ok(())
}

fn explain(a: ExplainArgs) -> Result<()> {
    let (model, embedder) = match &a.checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let embedder = checkpoint_embedder(&ck.provider, &a.provider)?;
            (ck.model()?, embedder)
        }
        None => {
            let embedder = fresh_embedder(&a.provider)?;
            let shape =
                KernelShape::new(a.kernel.kernel, a.kernel.window_size).map_err(|e| CliError::usage(e.to_string()))?;
            let model = ConversationKernel::init(ModelConfig::new(shape, embedder.dim()).with_hidden(a.hidden), a.seed)?;
            (model, embedder)
        }
    };
    let corpus = load_corpus(&a.dump)?;
    let tree = corpus.tree(&a.conversation)?;
    let pred = model.predict(&embedder, tree, &a.target)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&pred).expect("predictions serialise"));
        return Ok(());
    }
    print_explanation(&model, &pred);
    Ok(())
}

fn print_explanation(model: &ConversationKernel, pred: &Prediction) {
    let shape = model.shape();
    println!(
        "target {}  kernel {} (L={})",
        pred.target_id,
        shape.family.as_str(),
        shape.window_size
    );
    println!("{:<10} {:>9} {:>9}  members", "window", "p(w|x)", "p(y=1|w)");
    for w in &pred.per_window {
        let q = w.p_positive.map_or_else(|| "-".to_owned(), |q| format!("{q:.4}"));
        let members = if w.member_ids.is_empty() {
            "(empty)".to_owned()
        } else {
            w.member_ids.join(", ")
        };
        println!("{:<10} {:>9.4} {:>9}  {}", w.kind.as_str(), w.retrieval_prob, q, members);
    }
    if pred.fallback_used {
        println!("no context; target text alone");
    }
    println!("p(y=1|x) = {:.6}", pred.p_positive);
}
