use std::io::Write;
use std::sync::Arc;

use myopia_core::imagetool::{
    classify, evaluate, read_sidecar, stratified_split, ClassifierBackend, FixtureBackend, FundusImage, GradeLabel,
    GradeProbabilities, HttpClassifier, HttpClassifierSettings, LabeledExample, Split, SplitRatios,
};
use myopia_core::kbindex::{
    build_index, chunk_document, load_corpus_dir, load_index, retrieve, save_index, EmbeddingProvider,
    HttpEmbeddingProvider, HttpEmbeddingSettings, KbError, MockEmbedder,
};
use myopia_core::tokenize::count_tokens;
use myopia_core::Language;
use myopia_service::{AppState, ServiceConfig, StartupError};

use crate::output::{Cell, Table};
use crate::{ClassifyArgs, Cli, CliError, Command, EmbeddingArgs, IngestArgs, QueryArgs, ServeArgs, SplitArgs};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest(a) => ingest(cli, a),
        Command::Query(a) => query(cli, a),
        Command::Classify(a) => classify_cmd(cli, a),
        Command::Split(a) => split(cli, a),
        Command::Eval(e) => emit(cli, &crate::eval_cmd::run(e)?),
        Command::Serve(a) => serve(a),
    }
}

pub fn emit(cli: &Cli, table: &Table) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    table
        .write(cli.format, cli.decimals, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Runtime(format!("cannot write output: {e}")))
}

fn parse_language(s: &str) -> Result<Language, CliError> {
    s.parse().map_err(|_| CliError::Invalid(format!("unsupported language {s:?} (expected en or zh)")))
}

/// Input problems are validation errors; provider and write failures are runtime errors.
fn kb_error(e: KbError) -> CliError {
    match e {
        KbError::Embed(_) => CliError::Runtime(e.to_string()),
        other => CliError::Invalid(other.to_string()),
    }
}

fn embedder(args: &EmbeddingArgs, language: Language) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    match (&args.embedding_endpoint, &args.embedding_model, args.embedding_dim) {
        (Some(endpoint), Some(model), Some(dim)) => Ok(Box::new(
            HttpEmbeddingProvider::new(HttpEmbeddingSettings {
                endpoint: endpoint.clone(),
                model: model.clone(),
                dim,
                language,
                api_key_env: args.api_key_env.clone(),
                timeout_secs: 30,
            })
            .map_err(|e| CliError::Runtime(e.to_string()))?,
        )),
        _ => Ok(Box::new(MockEmbedder::new(language))),
    }
}

fn ingest(cli: &Cli, a: &IngestArgs) -> Result<(), CliError> {
    let language = parse_language(&a.language)?;
    let docs = load_corpus_dir(&a.corpus).map_err(kb_error)?;
    if let Some(d) = docs.iter().find(|d| d.language != language) {
        return Err(CliError::Invalid(format!(
            "document {} is {} but the corpus is being ingested as {language}",
            d.doc_id, d.language
        )));
    }
    let mut chunks = 0;
    for d in &docs {
        chunks += chunk_document(d, a.chunk_size, a.overlap).map_err(kb_error)?.len();
    }
    let tokens: usize = docs.iter().map(|d| count_tokens(&d.body)).sum();
    let embedder = embedder(&a.embedding, language)?;
    let index = build_index(&docs, embedder.as_ref(), a.chunk_size, a.overlap).map_err(kb_error)?;
    debug_assert_eq!(index.len(), chunks);
    save_index(&index, &a.out).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", a.out.display())))?;
    if cli.format == crate::output::Format::Table {
        println!("{} documents, {} chunks, {} tokens", docs.len(), index.len(), tokens);
        return Ok(());
    }
    let mut t = Table::new(&["documents", "chunks", "tokens", "index"]);
    t.push(vec![docs.len().into(), index.len().into(), tokens.into(), a.out.display().to_string().into()]);
    emit(cli, &t)
}

fn index_language(fingerprint: &str) -> Option<Language> {
    fingerprint.rsplit(':').find_map(|part| part.strip_prefix("lang=")).and_then(|l| l.parse().ok())
}

fn query(cli: &Cli, a: &QueryArgs) -> Result<(), CliError> {
    if a.k == 0 {
        return Err(CliError::Invalid("--k must be at least 1".into()));
    }
    let index = load_index(&a.index).map_err(|e| match e {
        KbError::Io(io) => CliError::Invalid(format!("{}: {io}", a.index.display())),
        other => kb_error(other),
    })?;
    let language = match &a.language {
        Some(l) => parse_language(l)?,
        None => index_language(index.fingerprint()).ok_or_else(|| {
            CliError::Invalid(format!("cannot tell the language of index {}; pass --language", a.index.display()))
        })?,
    };
    let embedder = embedder(&a.embedding, language)?;
    let hits = retrieve(&index, &a.question, a.k, embedder.as_ref()).map_err(kb_error)?;
    let mut t = Table::new(&["rank", "score", "citation", "text"]);
    for h in hits {
        let mut text = h.chunk.text.replace('\n', " ");
        if cli.format == crate::output::Format::Table && text.chars().count() > 80 {
            text = text.chars().take(77).collect::<String>() + "...";
        }
        t.push(vec![h.rank.into(), h.score.into(), h.citation_tag().into(), text.into()]);
    }
    emit(cli, &t)
}

fn prob_cells(p: &[f64; 5]) -> Vec<Cell> {
    p.iter().map(|&x| x.into()).collect()
}

fn classify_cmd(cli: &Cli, a: &ClassifyArgs) -> Result<(), CliError> {
    if a.metrics {
        let sidecar = a.sidecar.as_ref().expect("clap requires --sidecar");
        let rows = read_sidecar(sidecar).map_err(CliError::Invalid)?;
        let mut truths = Vec::new();
        let mut probs = Vec::new();
        for r in &rows {
            let p = r.probs.ok_or_else(|| CliError::Invalid(format!("{} has no probabilities", r.image_ref)))?;
            let p = GradeProbabilities::new(p)
                .ok_or_else(|| CliError::Invalid(format!("{} has invalid probabilities", r.image_ref)))?;
            truths.push(r.label);
            probs.push(p);
        }
        let report = evaluate(&truths, &probs).map_err(|e| CliError::Invalid(e.to_string()))?;
        let mut t = Table::new(&[
            "condition",
            "accuracy",
            "sensitivity",
            "specificity",
            "precision",
            "auroc",
            "auprc",
            "f1",
        ]);
        let rows = GradeLabel::ALL
            .iter()
            .map(|g| (g.display_name(), report.per_class[g.index()]))
            .chain([("Overall", report.overall)]);
        for (name, row) in rows {
            let mut cells: Vec<Cell> = vec![name.into()];
            cells.extend(row.fields().map(Cell::from));
            t.push(cells);
        }
        return emit(cli, &t);
    }
    if a.images.is_empty() {
        return Err(CliError::Invalid("give image files to grade, or --metrics with --sidecar".into()));
    }
    let backend: Box<dyn ClassifierBackend> = match (&a.sidecar, &a.endpoint) {
        (Some(s), _) => Box::new(FixtureBackend::load(s).map_err(CliError::Invalid)?),
        (None, Some(endpoint)) => Box::new(
            HttpClassifier::new(HttpClassifierSettings {
                endpoint: endpoint.clone(),
                api_key_env: a.api_key_env.clone(),
                timeout_secs: 30,
            })
            .map_err(|e| CliError::Runtime(e.to_string()))?,
        ),
        (None, None) => return Err(CliError::Invalid("one of --sidecar or --endpoint is required".into())),
    };
    let mut t = Table::new(&["image", "label", "condition", "p0", "p1", "p2", "p3", "p4"]);
    for path in &a.images {
        let bytes = std::fs::read(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        let image = FundusImage::new(name.clone(), bytes);
        let (probs, label) = classify(&image, backend.as_ref()).map_err(|e| match e {
            myopia_core::imagetool::ClassifyError::Transport { .. } => CliError::Runtime(format!("{name}: {e}")),
            _ => CliError::Invalid(format!("{name}: {e}")),
        })?;
        let mut row: Vec<Cell> = vec![name.into(), label.code().into(), label.display_name().into()];
        row.extend(prob_cells(probs.values()));
        t.push(row);
    }
    emit(cli, &t)
}

fn split(cli: &Cli, a: &SplitArgs) -> Result<(), CliError> {
    let rows = read_sidecar(&a.labels).map_err(CliError::Invalid)?;
    let examples: Vec<LabeledExample> = rows
        .into_iter()
        .map(|r| LabeledExample { image_ref: r.image_ref, participant_id: r.participant_id, label: r.label })
        .collect();
    let ratios = SplitRatios { train: a.train, val: a.val, test: a.test };
    let assignment = stratified_split(&examples, ratios, a.seed).map_err(|e| CliError::Invalid(e.to_string()))?;
    for w in &assignment.warnings {
        eprintln!("warning: {w}");
    }
    if a.summary {
        let summary = assignment.summarize(&examples);
        let mut t = Table::new(&["class", "split", "images", "fraction"]);
        for class in GradeLabel::ALL {
            for s in Split::ALL {
                t.push(vec![
                    class.code().into(),
                    s.as_str().into(),
                    summary.counts[class.index()][s as usize].into(),
                    summary.fraction(class, s).into(),
                ]);
            }
        }
        return emit(cli, &t);
    }
    let mut t = Table::new(&["participant_id", "split"]);
    for (pid, s) in &assignment.participants {
        t.push(vec![pid.as_str().into(), s.as_str().into()]);
    }
    emit(cli, &t)
}

fn startup_error(e: StartupError) -> CliError {
    match e {
        StartupError::Store(_) => CliError::Runtime(e.to_string()),
        other => CliError::Invalid(other.to_string()),
    }
}

fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let mut config = ServiceConfig::load(&a.config).map_err(|e| CliError::Invalid(e.to_string()))?;
    if let Some(listen) = &a.listen {
        config.listen = listen.clone();
    }
    let listen = config.listen.clone();
    let state = Arc::new(AppState::from_config(config).map_err(startup_error)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start runtime: {e}")))?;
    let served = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&listen)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot listen on {listen}: {e}")))?;
        eprintln!("listening on {}", listener.local_addr().map_or(listen.clone(), |a| a.to_string()));
        myopia_service::serve(state.clone(), listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Runtime(e.to_string()))
    });
    drop(runtime);
    drop(state);
    served
}

