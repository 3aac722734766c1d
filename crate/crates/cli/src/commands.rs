use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use traitgen_annotate::{records_from_jsonl, router, AnnotationStore, StoreOptions, TaskInput};
use traitgen_core::classifier::{
    load_bundle, save_bundle, train, HashedNgramBackbone, TrainedModelBundle, TrainingStrategy,
};
use traitgen_core::config::{write_sidecar, PipelineConfig, ProviderKind, RunMetadata};
use traitgen_core::datastore::{
    ingest_external, load_corpus, save_corpus, split_holdout, write_atomic, CorpusSource,
    DatasetRecord, Split,
};
use traitgen_core::dialogue_gen::{
    default_user_lines, generate_corpus, read_user_script, CompletionProvider, CorpusPlan,
    LabeledMessage, MockProvider, RemoteProvider,
};
use traitgen_core::evaluation::{
    accuracy_by_trait, binarize_annotations, difficulty_correlation, predict, CorrelationTable,
    DifficultyMode, EvaluationReport, GoldLabel, MessageConsensus, PredictionRecord,
    ProcessedOutputFormula,
};
use traitgen_core::personas::personas_json;

use crate::args::*;
use crate::error::{CliError, Result};

/// Defaults, then the config file, then flags.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => generate(&mut cfg, a),
        Command::Ingest(a) => ingest(&cfg, a),
        Command::Split(a) => split(&mut cfg, a),
        Command::Train(a) => train_cmd(&mut cfg, a),
        Command::Predict(a) => predict_cmd(&mut cfg, a),
        Command::Evaluate(a) => evaluate(&cfg, a),
        Command::Correlate(a) => correlate(&mut cfg, a),
        Command::Serve(a) => serve(&mut cfg, a),
        Command::Report(a) => report(a),
        Command::Personas => {
            println!("{}", personas_json());
            Ok(())
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_toml_string()?);
            Ok(())
        }
    }
}

fn log_config(cfg: &PipelineConfig) {
    match cfg.to_toml_string() {
        Ok(text) => log::info!("resolved configuration:\n{text}"),
        Err(e) => log::warn!("could not render configuration: {e}"),
    }
}

fn sidecar(out: &Path, command: &str, seed: u64, cfg: &PipelineConfig) -> Result<()> {
    write_sidecar(out, &RunMetadata::new(command, seed, cfg)?)?;
    Ok(())
}

fn formula(arg: Option<FormulaArg>, cfg: ProcessedOutputFormula) -> ProcessedOutputFormula {
    match arg {
        Some(FormulaArg::SumOfAbs) => ProcessedOutputFormula::SumOfAbs,
        Some(FormulaArg::AbsDifference) => ProcessedOutputFormula::AbsDifference,
        None => cfg,
    }
}

fn generate(cfg: &mut PipelineConfig, a: GenerateArgs) -> Result<()> {
    let c = &mut cfg.corpus;
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.user_lines {
        c.user_lines = Some(v);
    }
    if let Some(v) = a.scripts {
        c.scripts = v;
    }
    if let Some(v) = a.exchanges {
        c.exchanges = v;
    }
    if let Some(v) = a.workers {
        c.workers = v;
    }
    match a.provider {
        Some(ProviderArg::Mock) => cfg.provider.kind = ProviderKind::Mock,
        Some(ProviderArg::Remote) => cfg.provider.kind = ProviderKind::Remote,
        None => {}
    }
    if a.no_gender_clause {
        cfg.personas.gender_clause = false;
    }
    log_config(cfg);

    let user_lines = match &cfg.corpus.user_lines {
        Some(p) => read_user_script(p)?,
        None => default_user_lines(),
    };
    let provider: Box<dyn CompletionProvider> = match cfg.provider.kind {
        // the mock follows the corpus seed unless pinned separately
        ProviderKind::Mock => Box::new(MockProvider::new(cfg.provider.mock_seed ^ cfg.corpus.seed)),
        ProviderKind::Remote => Box::new(RemoteProvider::from_config(cfg.provider.remote.clone())?),
    };
    let plan = CorpusPlan {
        user_lines,
        scripts: cfg.corpus.scripts,
        exchanges: cfg.corpus.exchanges,
        seed: cfg.corpus.seed,
        header_style: cfg.personas.clone(),
        params: cfg.provider.params.clone(),
        retry: cfg.provider.retry.clone(),
    };
    log::info!(
        "generating {} messages with {} on {} workers",
        plan.message_count(),
        provider.name(),
        cfg.corpus.workers
    );
    let messages = generate_corpus(provider.as_ref(), &plan, cfg.corpus.workers)?;
    let records: Vec<DatasetRecord> = messages
        .into_iter()
        .map(|m| DatasetRecord::new(m, Split::Unassigned))
        .collect();
    save_corpus(&records, &a.out)?;
    sidecar(&a.out, "generate", cfg.corpus.seed, cfg)?;
    println!("wrote {} messages to {}", records.len(), a.out.display());
    Ok(())
}

fn ingest(cfg: &PipelineConfig, a: IngestArgs) -> Result<()> {
    let source = match a.source {
        SourceArg::Movie => CorpusSource::MovieDialogs,
        SourceArg::Multiwoz => CorpusSource::Multiwoz,
        SourceArg::Convai => CorpusSource::Convai,
    };
    let seed = a.seed.unwrap_or(cfg.corpus.seed);
    let sampled = ingest_external(source, &a.input, a.n, seed)?;
    let mut records = if a.append && a.out.exists() {
        load_corpus(&a.out)?
    } else {
        Vec::new()
    };
    let existing: BTreeSet<String> = records.iter().map(|r| r.message.id.clone()).collect();
    let before = records.len();
    records.extend(
        sampled
            .into_iter()
            .filter(|m| !existing.contains(&m.id))
            .map(|m| DatasetRecord::new(m, Split::Test)),
    );
    save_corpus(&records, &a.out)?;
    sidecar(&a.out, "ingest", seed, cfg)?;
    println!(
        "wrote {} {source} utterances to {} ({} total)",
        records.len() - before,
        a.out.display(),
        records.len()
    );
    Ok(())
}

fn split(cfg: &mut PipelineConfig, a: SplitArgs) -> Result<()> {
    if let Some(v) = a.holdout {
        cfg.split.holdout_count = v;
    }
    if let Some(v) = a.seed {
        cfg.split.seed = v;
    }
    let records = load_corpus(&a.input)?;
    let out = split_holdout(&records, cfg.split)?;
    save_corpus(&out, &a.out)?;
    sidecar(&a.out, "split", cfg.split.seed, cfg)?;
    let test = out.iter().filter(|r| r.split == Split::Test).count();
    println!(
        "{} TRAIN, {} TEST -> {}",
        out.len() - test,
        test,
        a.out.display()
    );
    Ok(())
}

fn train_cmd(cfg: &mut PipelineConfig, a: TrainArgs) -> Result<()> {
    let t = &mut cfg.train;
    if let Some(s) = a.strategy {
        t.strategy = match s {
            StrategyArg::Together => TrainingStrategy::Together,
            StrategyArg::Separate => TrainingStrategy::Separate,
            StrategyArg::Adapter => TrainingStrategy::Adapter,
        };
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    t.validate()?;
    log_config(cfg);
    let records = load_corpus(&a.corpus)?;
    let dataset: Vec<LabeledMessage> = records
        .into_iter()
        .filter(|r| r.split == Split::Train)
        .map(|r| r.message)
        .collect();
    if dataset.is_empty() {
        return Err(CliError::Usage(format!(
            "{} has no TRAIN records; run `traitgen split` first",
            a.corpus.display()
        )));
    }
    let backbone = HashedNgramBackbone::new(&cfg.backbone);
    let bundle = train(&dataset, &backbone, &cfg.train)?;
    save_bundle(&bundle, &a.out)?;
    sidecar(&a.out, "train", cfg.train.seed, cfg)?;
    println!(
        "trained {} on {} messages ({} trainable parameters) -> {}",
        model_label(&bundle),
        dataset.len(),
        bundle.trainable_param_count(),
        a.out.display()
    );
    Ok(())
}

fn model_label(bundle: &TrainedModelBundle) -> String {
    format!("{} ({})", bundle.backbone_name, bundle.strategy.short())
}

fn select(records: Vec<DatasetRecord>, split: SplitArg) -> Vec<LabeledMessage> {
    records
        .into_iter()
        .filter(|r| match split {
            SplitArg::Train => r.split == Split::Train,
            SplitArg::Test => r.split == Split::Test,
            SplitArg::All => true,
        })
        .map(|r| r.message)
        .collect()
}

fn write_jsonl(path: &Path, items: &[PredictionRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)?;
    Ok(())
}

fn predict_cmd(cfg: &mut PipelineConfig, a: PredictArgs) -> Result<()> {
    cfg.evaluation.formula = formula(a.formula, cfg.evaluation.formula);
    let bundle = load_bundle(&a.bundle)?;
    let messages = select(load_corpus(&a.corpus)?, a.split);
    let preds = predict(&bundle, &messages, cfg.evaluation.formula)?;
    write_jsonl(&a.out, &preds)?;
    sidecar(&a.out, "predict", bundle.metadata.seed, cfg)?;
    println!("wrote {} predictions to {}", preds.len(), a.out.display());
    Ok(())
}

fn load_consensus(path: &Path) -> Result<BTreeMap<String, MessageConsensus>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(binarize_annotations(&records_from_jsonl(&text)?)?)
}

/// Gold labels by dataset name: generated messages carry their own label,
/// real messages take the annotator consensus when one exists.
fn golds_by_dataset(
    messages: &[LabeledMessage],
    consensus: Option<&BTreeMap<String, MessageConsensus>>,
) -> BTreeMap<&'static str, Vec<GoldLabel>> {
    let mut out: BTreeMap<&'static str, Vec<GoldLabel>> = BTreeMap::new();
    for m in messages {
        let gold = match m.source {
            CorpusSource::Generated => GoldLabel::from_message(m),
            _ => consensus.and_then(|c| c.get(&m.id)).map(|c| c.gold.clone()),
        };
        if let Some(g) = gold {
            out.entry(m.source.short()).or_default().push(g);
        }
    }
    out
}

fn evaluate(cfg: &PipelineConfig, a: EvaluateArgs) -> Result<()> {
    let messages = select(load_corpus(&a.corpus)?, a.split);
    let consensus = a.annotations.as_deref().map(load_consensus).transpose()?;
    let golds = golds_by_dataset(&messages, consensus.as_ref());
    if golds.is_empty() {
        return Err(CliError::Usage(
            "no gold-labeled messages in the selected split".into(),
        ));
    }
    let scored: BTreeSet<&str> = golds
        .values()
        .flatten()
        .map(|g| g.message_id.as_str())
        .collect();
    let to_score: Vec<LabeledMessage> = messages
        .iter()
        .filter(|m| scored.contains(m.id.as_str()))
        .cloned()
        .collect();
    let mut report = EvaluationReport::default();
    for path in &a.bundles {
        let bundle = load_bundle(path)?;
        let preds = predict(&bundle, &to_score, cfg.evaluation.formula)?;
        for (dataset, g) in &golds {
            report.rows.push(accuracy_by_trait(
                &model_label(&bundle),
                dataset,
                &preds,
                g,
                |_| true,
            )?);
        }
    }
    write_atomic(&a.out, report.to_csv()?.as_bytes())?;
    sidecar(&a.out, "evaluate", cfg.train.seed, cfg)?;
    print!("{}", report.render_text("Per-trait accuracy"));
    Ok(())
}

fn correlate(cfg: &mut PipelineConfig, a: CorrelateArgs) -> Result<()> {
    cfg.evaluation.formula = formula(a.formula, cfg.evaluation.formula);
    match a.difficulty {
        Some(DifficultyArg::PerTrait) => cfg.evaluation.difficulty = DifficultyMode::PerTrait,
        Some(DifficultyArg::PerMessage) => cfg.evaluation.difficulty = DifficultyMode::PerMessage,
        None => {}
    }
    let consensus = load_consensus(&a.annotations)?;
    let messages: Vec<LabeledMessage> = load_corpus(&a.corpus)?
        .into_iter()
        .map(|r| r.message)
        .filter(|m| consensus.contains_key(&m.id))
        .collect();
    let mut table = CorrelationTable::default();
    for path in &a.bundles {
        let bundle = load_bundle(path)?;
        let preds = predict(&bundle, &messages, cfg.evaluation.formula)?;
        let cells = difficulty_correlation(&preds, &consensus, cfg.evaluation.difficulty)?;
        table.rows.push((model_label(&bundle), cells));
    }
    write_atomic(&a.out, table.to_csv()?.as_bytes())?;
    sidecar(&a.out, "correlate", cfg.train.seed, cfg)?;
    print!("{}", table.render_text());
    Ok(())
}

fn serve(cfg: &mut PipelineConfig, a: ServeArgs) -> Result<()> {
    if let Some(j) = a.journal {
        cfg.service.journal = j;
    }
    if let Some(r) = a.redundancy {
        cfg.service.redundancy = r;
    }
    let mut addr: SocketAddr = cfg
        .service
        .bind
        .parse()
        .map_err(|e| CliError::Usage(format!("service.bind `{}`: {e}", cfg.service.bind)))?;
    if let Some(p) = a.port {
        addr.set_port(p);
    }
    log_config(cfg);
    let store = AnnotationStore::open(
        &cfg.service.journal,
        StoreOptions {
            redundancy: cfg.service.redundancy,
            annotators: cfg.service.annotators.iter().cloned().collect(),
        },
    )?;
    let tasks: Vec<TaskInput> = select(load_corpus(&a.corpus)?, a.split)
        .into_iter()
        .map(|m| TaskInput {
            message_id: m.id,
            text: m.text,
        })
        .collect();
    let outcome = store.enqueue_tasks(&tasks);
    let progress = store.progress();
    println!(
        "{} tasks ({} duplicates skipped), {} already done; listening on http://{addr}",
        outcome.added, outcome.duplicates, progress.done
    );
    let app = router(Arc::new(store));
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Usage(format!("runtime: {e}")))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Usage(format!("bind {addr}: {e}")))?;
        axum::serve(listener, app)
            .await
            .map_err(|e| CliError::Usage(format!("server: {e}")))
    })
}

fn report(a: ReportArgs) -> Result<()> {
    if a.accuracy.is_empty() && a.correlation.is_empty() {
        return Err(CliError::Usage(
            "give at least one --accuracy or --correlation CSV".into(),
        ));
    }
    let read = |p: &PathBuf| std::fs::read_to_string(p).map_err(|e| CliError::io(p, e));
    let mut out = String::new();
    let mut combined = EvaluationReport::default();
    for p in &a.accuracy {
        combined
            .rows
            .extend(EvaluationReport::from_csv(&read(p)?)?.rows);
    }
    if !combined.rows.is_empty() {
        out.push_str(&combined.render_text("Per-trait accuracy"));
        let mut datasets: Vec<&str> = Vec::new();
        for r in &combined.rows {
            if !datasets.contains(&r.dataset.as_str()) {
                datasets.push(&r.dataset);
            }
        }
        out.push('\n');
        out.push_str(&combined.render_dataset_table(&datasets));
    }
    for p in &a.correlation {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&CorrelationTable::from_csv(&read(p)?)?.render_text());
    }
    print!("{out}");
    if let Some(path) = a.out {
        write_atomic(&path, out.as_bytes())?;
    }
    Ok(())
}
