use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use lexcase::bm25::Bm25Params;
use lexcase::corpus::{load_article_queries, load_articles, load_case_queries, load_gold, load_pairs, EntailPair};
use lexcase::entail::{
    holdout_split, load_feature_file, train_classifier, EntailModel, LexicalContext, PairFeatures, TrainOptions,
};
use lexcase::eval::{accuracy, map_at_k, micro_prf, RunResult};
use lexcase::fixture::{gen_fixture, FixtureSpec, Layout};
use lexcase::fusion::SelectionRule;
use lexcase::persist::{load_embedding, load_index, save_embedding, save_index};
use lexcase::pipeline::{
    default_rule, embedding_corpus, fuse_runs, read_run, read_scores, run_variant, write_run, write_scores, Artifacts,
    Corpus, LexicalIndex, RetrieveConfig, Task, Variant,
};
use lexcase::pvdm::{EmbedConfig, EmbeddingModel};
use lexcase::textprep::{DataTables, PrepConfig, Stage};
use lexcase::Error;

#[derive(Parser)]
#[command(name = "lexcase", version, about = "Legal case retrieval and entailment toolkit")]
struct Cli {
    /// TOML file with default settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding stopwords.txt, negations.txt and stemmer_rules.tsv.
    #[arg(long, global = true, env = "LEXCASE_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the lexical index (BM25 and tf*idf) for a corpus.
    Index(IndexArgs),
    /// Train a paragraph-vector model on a corpus.
    TrainEmbed(TrainEmbedArgs),
    /// Score and select candidates with one model variant.
    Retrieve(RetrieveArgs),
    /// Multiply two score files and apply a selection rule.
    Fuse(FuseArgs),
    /// Score a run file against gold labels.
    Evaluate(EvaluateArgs),
    /// Yes/No entailment classifier.
    #[command(subcommand)]
    Entail(EntailCommand),
    /// Write a seeded synthetic corpus with embedded gold labels.
    GenFixture(GenFixtureArgs),
}

#[derive(Args)]
struct CorpusArgs {
    /// Query root (directory per query).
    corpus: PathBuf,
    #[arg(long, value_enum)]
    task: Task,
    /// Article collection (JSON lines); required for t3.
    #[arg(long)]
    articles: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_enum, default_value = "stage2")]
    prep: Stage,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainEmbedArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RuleArgs {
    /// Relative-threshold fraction of the mean of the top two scores.
    #[arg(long, conflicts_with_all = ["argmax", "top_n"])]
    rel_frac: Option<f64>,
    /// Cap on relative-threshold selections.
    #[arg(long)]
    max_k: Option<usize>,
    #[arg(long, conflicts_with = "top_n")]
    argmax: bool,
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Args)]
struct RetrieveArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    #[command(flatten)]
    rule: RuleArgs,
    /// Prebuilt lexical index; built on the fly when absent.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Trained embedding model; required by d2v and docbm.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    infer_steps: Option<usize>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Run file: one `{"query", "retrieved"}` object per line.
    #[arg(long)]
    out: PathBuf,
    /// Also write the full score lists.
    #[arg(long)]
    scores_out: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[command(flatten)]
    rule: RuleArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scores_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    run: PathBuf,
    /// Query root whose gold.json files hold the relevant ids.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    map_k: Option<usize>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EntailCommand {
    /// Fit the classifier on labeled pairs.
    Train(EntailTrainArgs),
    /// Label pairs with a trained model.
    Predict(EntailPredictArgs),
}

#[derive(Args)]
struct EntailTrainArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Article collection for lexical features.
    #[arg(long, required_unless_present = "features")]
    articles: Option<PathBuf>,
    /// External feature vectors used instead of the lexical ones.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Validation pairs; without it 20% of the training pairs are held out.
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EntailPredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenFixtureArgs {
    #[arg(long)]
    queries: usize,
    #[arg(long)]
    candidates: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "cases")]
    layout: Layout,
    #[arg(long)]
    out: PathBuf,
}

/// Settings read from `--config`. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    data_dir: Option<PathBuf>,
    #[serde(default)]
    bm25: FileBm25,
    #[serde(default)]
    embed: FileEmbed,
    #[serde(default)]
    retrieve: FileRetrieve,
    #[serde(default)]
    evaluate: FileEvaluate,
    #[serde(default)]
    entail: FileEntail,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBm25 {
    k1: Option<f64>,
    b: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEmbed {
    dim: Option<usize>,
    window: Option<usize>,
    epochs: Option<usize>,
    negatives: Option<usize>,
    min_count: Option<usize>,
    lr_start: Option<f64>,
    lr_end: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRetrieve {
    variant: Option<Variant>,
    rel_frac: Option<f64>,
    max_k: Option<usize>,
    top_n: Option<usize>,
    infer_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEvaluate {
    beta: Option<f64>,
    map_k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEntail {
    epochs: Option<usize>,
    lr: Option<f64>,
    l2: Option<f64>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParameter(_) => Failure::Usage(e.to_string()),
            e => Failure::Data(e),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read_config(path: Option<&Path>) -> Result<FileConfig, Failure> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(Error::Config(format!("{}: {e}", path.display()))))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn tables(cli_dir: Option<&Path>, file: &FileConfig) -> Result<DataTables, Failure> {
    match cli_dir.or(file.data_dir.as_deref()) {
        Some(dir) => Ok(DataTables::from_dir(dir)?),
        None => Ok(DataTables::bundled()),
    }
}

fn load_corpus(args: &CorpusArgs) -> Result<Corpus, Failure> {
    match (args.task, &args.articles) {
        (Task::T3, Some(path)) => {
            let articles = load_articles(path)?;
            let queries = load_article_queries(&args.corpus, &articles)?;
            Ok(Corpus::statutes(queries, articles))
        }
        (Task::T3, None) => Err(Failure::Usage("--task t3 needs --articles".into())),
        (task, _) => Ok(Corpus::cases(task, load_case_queries(&args.corpus)?)),
    }
}

fn bm25_params(k1: Option<f64>, b: Option<f64>, file: &FileConfig) -> Result<Bm25Params, Failure> {
    let d = Bm25Params::default();
    Ok(Bm25Params::new(
        k1.or(file.bm25.k1).unwrap_or(d.k1),
        b.or(file.bm25.b).unwrap_or(d.b),
    )?)
}

fn rule_from(args: &RuleArgs, file: &FileRetrieve, fallback: SelectionRule) -> SelectionRule {
    let max_k = args.max_k.or(file.max_k).unwrap_or(10);
    if args.argmax {
        SelectionRule::Argmax
    } else if let Some(n) = args.top_n {
        SelectionRule::TopN { n }
    } else if let Some(rel_frac) = args.rel_frac {
        SelectionRule::TopKRelative { max_k, rel_frac }
    } else if let Some(n) = file.top_n {
        SelectionRule::TopN { n }
    } else if let Some(rel_frac) = file.rel_frac {
        SelectionRule::TopKRelative { max_k, rel_frac }
    } else if let SelectionRule::TopKRelative { rel_frac, .. } = fallback {
        SelectionRule::TopKRelative { max_k, rel_frac }
    } else {
        fallback
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(Error::Config(e.to_string())))?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::Data(Error::Io {
        path: path.to_owned(),
        source: e,
    }))
}

fn report_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

fn cmd_index(args: &IndexArgs, tables: &DataTables) -> CmdResult {
    let corpus = load_corpus(&args.corpus)?;
    let index = LexicalIndex::build(&corpus, &PrepConfig::new(args.prep, tables))?;
    save_index(&args.out, &index)?;
    log::info!("indexed {} collections into {}", index.collections.len(), args.out.display());
    Ok(())
}

fn cmd_train_embed(args: &TrainEmbedArgs, file: &FileConfig, tables: &DataTables) -> CmdResult {
    let corpus = load_corpus(&args.corpus)?;
    let base = match args.corpus.task {
        Task::T1 => EmbedConfig::case_retrieval(),
        _ => EmbedConfig::paragraph_entailment(),
    };
    let e = &file.embed;
    let cfg = EmbedConfig {
        dim: args.dim.or(e.dim).unwrap_or(base.dim),
        window: args.window.or(e.window).unwrap_or(base.window),
        epochs: args.epochs.or(e.epochs).unwrap_or(base.epochs),
        negatives: args.negatives.or(e.negatives).unwrap_or(base.negatives),
        min_count: args.min_count.or(e.min_count).unwrap_or(base.min_count),
        lr_start: e.lr_start.unwrap_or(base.lr_start),
        lr_end: e.lr_end.unwrap_or(base.lr_end),
        seed: args.seed.or(file.seed).unwrap_or(base.seed),
    };
    let docs = embedding_corpus(&corpus, tables);
    let model = EmbeddingModel::train(&docs, &cfg)?;
    save_embedding(&args.out, &model)?;
    write_json(
        &report_path(&args.out),
        &serde_json::json!({ "config": cfg, "documents": docs.len(), "epoch_losses": model.epoch_losses }),
    )
}

fn cmd_retrieve(args: &RetrieveArgs, file: &FileConfig, tables: &DataTables) -> CmdResult {
    let task = args.corpus.task;
    let variant = args
        .variant
        .or(file.retrieve.variant)
        .ok_or_else(|| Failure::Usage("--variant is required (or set retrieve.variant in the config)".into()))?;
    if variant.needs_embedding() && args.model.is_none() {
        return Err(Failure::Usage(format!(
            "variant {} needs a trained embedding model: pass --model (see train-embed)",
            variant.name()
        )));
    }
    let mut cfg = RetrieveConfig::new(task, variant);
    cfg.bm25 = bm25_params(args.k1, args.b, file)?;
    cfg.rule = rule_from(&args.rule, &file.retrieve, default_rule(task, variant));
    cfg.infer_steps = args.infer_steps.or(file.retrieve.infer_steps).unwrap_or(cfg.infer_steps);

    let corpus = load_corpus(&args.corpus)?;
    let index = args.index.as_ref().map(load_index).transpose()?;
    let model = args.model.as_ref().map(load_embedding).transpose()?;
    let out = run_variant(
        &corpus,
        Artifacts {
            index: index.as_ref(),
            embedding: model.as_ref(),
        },
        &cfg,
        tables,
    )?;
    write_run(&args.out, &out.selections)?;
    if let Some(p) = &args.scores_out {
        write_scores(p, &out.scores)?;
    }
    let retrieved: usize = out.selections.values().map(Vec::len).sum();
    write_json(
        &report_path(&args.out),
        &serde_json::json!({
            "config": cfg,
            "queries": out.selections.len(),
            "retrieved": retrieved,
            "index": args.index,
            "model": args.model,
        }),
    )
}

fn cmd_fuse(args: &FuseArgs, file: &FileConfig) -> CmdResult {
    let rule = rule_from(&args.rule, &file.retrieve, SelectionRule::relative(0.8));
    let out = fuse_runs(&read_scores(&args.a)?, &read_scores(&args.b)?, &rule)?;
    write_run(&args.out, &out.selections)?;
    if let Some(p) = &args.scores_out {
        write_scores(p, &out.scores)?;
    }
    write_json(&report_path(&args.out), &serde_json::json!({ "rule": rule, "a": args.a, "b": args.b }))
}

fn cmd_evaluate(args: &EvaluateArgs, file: &FileConfig) -> CmdResult {
    let beta = args.beta.or(file.evaluate.beta).unwrap_or(1.0);
    let k = args.map_k.or(file.evaluate.map_k);
    let run = RunResult::new(read_run(&args.run)?, load_gold(&args.gold)?);
    let mut report = micro_prf(&run, beta)?;
    if let Some(k) = k {
        report.map_at_k = Some(map_at_k(&run, k)?);
        report.k = Some(k);
    }
    if report.zero_division {
        log::warn!("a metric had a zero denominator and is reported as 0");
    }
    let c = report.counts;
    println!("{:<12} {:>8}", "metric", "value");
    println!("{:<12} {:>8.4}", "precision", report.precision);
    println!("{:<12} {:>8.4}", "recall", report.recall);
    println!("{:<12} {:>8.4}", format!("F{beta}"), report.f_beta);
    if let (Some(m), Some(k)) = (report.map_at_k, report.k) {
        println!("{:<12} {:>8.4}", format!("MAP@{k}"), m);
    }
    println!("{:<12} {:>8}", "retrieved", c.retrieved);
    println!("{:<12} {:>8}", "relevant", c.relevant);
    println!("{:<12} {:>8}", "correct", c.correct);
    match &args.report {
        Some(p) => write_json(p, &report),
        None => {
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            Ok(())
        }
    }
}

/// Feature rows for `pairs`, from an external file or the lexical context.
fn pair_features(
    pairs: &[EntailPair],
    external: Option<&BTreeMap<String, Vec<f64>>>,
    context: Option<&LexicalContext>,
    tables: &DataTables,
) -> Result<Vec<Vec<f64>>, Failure> {
    let prep = PrepConfig::new(Stage::Stage2, tables);
    pairs
        .iter()
        .map(|p| match (external, context) {
            (Some(map), _) => map
                .get(&p.id)
                .cloned()
                .ok_or_else(|| Failure::Data(Error::MissingDocument(format!("features for pair {}", p.id)))),
            (None, Some(ctx)) => {
                let f = ctx.featurize(p, &prep, &tables.negations);
                if f.degenerate {
                    log::warn!("pair {} has an empty side after preprocessing", p.id);
                }
                Ok(f.features.to_vec())
            }
            (None, None) => Err(Failure::Usage("model has no lexical context; pass --features".into())),
        })
        .collect()
}

fn labels(pairs: &[EntailPair]) -> Result<Vec<bool>, Failure> {
    pairs
        .iter()
        .map(|p| {
            p.label.ok_or_else(|| {
                Failure::Data(Error::InvalidLabel {
                    id: p.id.clone(),
                    label: "missing".into(),
                })
            })
        })
        .collect()
}

fn cmd_entail_train(args: &EntailTrainArgs, file: &FileConfig, tables: &DataTables) -> CmdResult {
    let pairs = load_pairs(&args.pairs)?;
    let ys = labels(&pairs)?;
    let external = args.features.as_ref().map(load_feature_file).transpose()?;
    let context = match (&external, &args.articles) {
        (None, Some(path)) => Some(LexicalContext::fit(
            &load_articles(path)?,
            &PrepConfig::new(Stage::Stage2, tables),
            bm25_params(None, None, file)?,
        )?),
        _ => None,
    };
    let xs = pair_features(&pairs, external.as_ref(), context.as_ref(), tables)?;
    let names: Vec<String> = match &external {
        Some(_) => (0..xs.first().map_or(0, Vec::len)).map(|i| format!("f{i}")).collect(),
        None => PairFeatures::NAMES.iter().map(|s| s.to_string()).collect(),
    };
    let d = TrainOptions::default();
    let opts = TrainOptions {
        epochs: args.epochs.or(file.entail.epochs).unwrap_or(d.epochs),
        lr: args.lr.or(file.entail.lr).unwrap_or(d.lr),
        l2: args.l2.or(file.entail.l2).unwrap_or(d.l2),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        optimizer: d.optimizer,
    };
    let rows: Vec<(Vec<f64>, bool)> = xs.into_iter().zip(ys).collect();
    let (linear, validation_accuracy) = match &args.dev {
        Some(dev) => {
            let dev_pairs = load_pairs(dev)?;
            let dev_x = pair_features(&dev_pairs, external.as_ref(), context.as_ref(), tables)?;
            let linear = train_classifier(&rows, &names, &opts)?;
            let acc = holdout_accuracy(&linear, &dev_pairs, &dev_x)?;
            (linear, acc)
        }
        None => {
            let (train_idx, val_idx) = holdout_split(rows.len(), opts.seed);
            let train: Vec<(Vec<f64>, bool)> = train_idx.iter().map(|&i| rows[i].clone()).collect();
            let linear = train_classifier(&train, &names, &opts)?;
            let val_pairs: Vec<EntailPair> = val_idx.iter().map(|&i| pairs[i].clone()).collect();
            let val_x: Vec<Vec<f64>> = val_idx.iter().map(|&i| rows[i].0.clone()).collect();
            let acc = holdout_accuracy(&linear, &val_pairs, &val_x)?;
            (linear, acc)
        }
    };
    if let Some(acc) = validation_accuracy {
        eprintln!("validation accuracy {acc:.4}");
    }
    EntailModel {
        linear,
        context,
        validation_accuracy,
    }
    .save(&args.out)?;
    Ok(())
}

fn holdout_accuracy(
    model: &lexcase::entail::LinearModel,
    pairs: &[EntailPair],
    xs: &[Vec<f64>],
) -> Result<Option<f64>, Failure> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let mut preds = BTreeMap::new();
    let mut gold = BTreeMap::new();
    for (p, x) in pairs.iter().zip(xs) {
        if let Some(label) = p.label {
            preds.insert(p.id.clone(), model.predict(x)?.0);
            gold.insert(p.id.clone(), label);
        }
    }
    if preds.is_empty() {
        return Ok(None);
    }
    Ok(Some(accuracy(&preds, &gold)?))
}

fn cmd_entail_predict(args: &EntailPredictArgs, tables: &DataTables) -> CmdResult {
    let model = EntailModel::load(&args.model)?;
    let pairs = load_pairs(&args.pairs)?;
    let external = args.features.as_ref().map(load_feature_file).transpose()?;
    let xs = pair_features(&pairs, external.as_ref(), model.context.as_ref(), tables)?;
    let mut lines = String::new();
    let mut preds = BTreeMap::new();
    let mut gold = BTreeMap::new();
    for (p, x) in pairs.iter().zip(&xs) {
        let (label, _) = model.linear.predict(x)?;
        let row = serde_json::json!({ "id": p.id, "label": if label { "Y" } else { "N" } });
        lines.push_str(&row.to_string());
        lines.push('\n');
        if let Some(g) = p.label {
            preds.insert(p.id.clone(), label);
            gold.insert(p.id.clone(), g);
        }
    }
    std::fs::write(&args.out, lines).map_err(|e| Failure::Data(Error::Io {
        path: args.out.clone(),
        source: e,
    }))?;
    if !preds.is_empty() {
        println!("accuracy {:.4}", accuracy(&preds, &gold)?);
    }
    Ok(())
}

fn cmd_gen_fixture(args: &GenFixtureArgs) -> CmdResult {
    let mut spec = FixtureSpec::new(args.queries, args.candidates, args.seed);
    spec.layout = args.layout;
    gen_fixture(&spec, &args.out)?;
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    let file = read_config(cli.config.as_deref())?;
    let tables = || tables(cli.data_dir.as_deref(), &file);
    match &cli.command {
        Command::Index(a) => cmd_index(a, &tables()?),
        Command::TrainEmbed(a) => cmd_train_embed(a, &file, &tables()?),
        Command::Retrieve(a) => cmd_retrieve(a, &file, &tables()?),
        Command::Fuse(a) => cmd_fuse(a, &file),
        Command::Evaluate(a) => cmd_evaluate(a, &file),
        Command::Entail(EntailCommand::Train(a)) => cmd_entail_train(a, &file, &tables()?),
        Command::Entail(EntailCommand::Predict(a)) => cmd_entail_predict(a, &tables()?),
        Command::GenFixture(a) => cmd_gen_fixture(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
