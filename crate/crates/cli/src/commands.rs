use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use thiserror::Error;

use temprel_core::document::{write_corpus, DocumentError};
use temprel_core::eval::{
    awareness, mcnemar, score_where, AwarenessCounts, Confusion, EvalError, EvalReport, ThresholdPredictor,
};
use temprel_core::features::{LexicalResource, LexiconError};
use temprel_core::inference::{LocalModels, SolverOptions};
use temprel_core::kb::{bootstrap_priors, KbError};
use temprel_core::perceptron::{PerceptronError, PerceptronModel};
use temprel_core::pipeline::{self, InferenceConfig, Mode, PipelineError, TrainOptions};
use temprel_core::synth::{self, SynthConfig};
use temprel_core::{ingest_corpus, Bucket, CompositionTable, Direction, Document, KnowledgeBase, Models, Relation};

use crate::{Command, InferArgs};

const SAME_MODEL: &str = "same.model";
const NEIGHBOR_MODEL: &str = "neighbor.model";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or input data.
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn invalid(e: impl ToString) -> CliError {
    CliError::Invalid(e.to_string())
}

fn internal(e: impl ToString) -> CliError {
    CliError::Internal(e.to_string())
}

impl From<DocumentError> for CliError {
    fn from(e: DocumentError) -> Self {
        match e {
            DocumentError::Io { .. } => internal(e),
            _ => invalid(e),
        }
    }
}

impl From<LexiconError> for CliError {
    fn from(e: LexiconError) -> Self {
        invalid(e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        invalid(e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Pool(_) => internal(e),
            _ => invalid(e),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{}: no such file", path.display())))
    }
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(invalid(format!("{}: no such directory", path.display())))
    }
}

/// The parent of an output path must exist.
fn require_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => require_dir(p),
        _ => Ok(()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn load_lexicon(path: Option<&Path>) -> Result<LexicalResource> {
    match path {
        Some(dir) => Ok(LexicalResource::load(dir)?),
        None => Ok(LexicalResource::default()),
    }
}

fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::load(path).map_err(|e| match e {
        KbError::Io { .. } => internal(e),
        _ => invalid(e),
    })
}

fn load_model(dir: &Path, name: &str, bucket: Bucket) -> Result<PerceptronModel<f64>> {
    let path = dir.join(name);
    require_file(&path)?;
    let model = PerceptronModel::load(&path).map_err(|e| match e {
        PerceptronError::Io { .. } => internal(e),
        _ => invalid(e),
    })?;
    if model.bucket != bucket {
        return Err(invalid(format!(
            "{}: expected a {} model",
            path.display(),
            bucket.name()
        )));
    }
    Ok(model)
}

fn load_documents(path: &Path) -> Result<Vec<Document>> {
    let corpus = ingest_corpus(path)?;
    if !corpus.warnings.is_empty() {
        info!(
            "{}: dropped {} gold pairs beyond distance 1",
            path.display(),
            corpus.dropped_pairs()
        );
    }
    Ok(corpus.documents)
}

/// Frame pairs from a flat `[a1, b1, a2, b2, ...]` argument list.
fn frame_pairs(flat: &[String]) -> Vec<(String, String)> {
    flat.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect()
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { input, out } => ingest(&input, out.as_deref()),
        Command::Train {
            input,
            out,
            lexicon,
            folds,
            seed,
            epochs,
        } => train(&input, &out, lexicon.as_deref(), folds, seed, epochs),
        Command::BuildKb { input, out, infer } => build_kb(&input, &out, &infer),
        Command::Infer {
            input,
            out,
            report,
            infer,
        } => run_infer(&input, &out, report.as_deref(), &infer),
        Command::Eval {
            gold,
            pred,
            pred_b,
            kb,
            tau,
        } => eval(&gold, pred.as_deref(), pred_b.as_deref(), kb.as_deref(), tau),
        Command::Query { kb, pair, top_k } => query(&kb, &frame_pairs(&pair), top_k),
        Command::Stats { kb, tau, min_count } => stats(&kb, tau, min_count),
        Command::Bootstrap {
            input,
            pair,
            folds,
            fraction,
            seed,
        } => bootstrap(&input, &frame_pairs(&pair), folds, fraction, seed),
        Command::Synth {
            out,
            docs,
            seed,
            unlabeled,
        } => write_synth(&out, docs, seed, !unlabeled),
    }
}

fn ingest(input: &Path, out: Option<&Path>) -> Result<()> {
    require_file(input)?;
    if let Some(out) = out {
        require_parent(out)?;
    }
    let corpus = ingest_corpus(input)?;
    let docs = &corpus.documents;
    println!("documents\t{}", docs.len());
    println!("events\t{}", docs.iter().map(|d| d.events.len()).sum::<usize>());
    println!(
        "gold_pairs\t{}",
        docs.iter()
            .map(|d| d.relations.as_ref().map_or(0, Vec::len))
            .sum::<usize>()
    );
    println!(
        "candidate_pairs\t{}",
        docs.iter().map(|d| d.candidate_pairs().len()).sum::<usize>()
    );
    println!("dropped_pairs\t{}", corpus.dropped_pairs());
    if let Some(out) = out {
        let mut w = create(out)?;
        write_corpus(&mut w, docs).and_then(|_| w.flush()).map_err(internal)?;
    }
    Ok(())
}

fn train(input: &Path, out: &Path, lexicon: Option<&Path>, folds: usize, seed: u64, epochs: Vec<usize>) -> Result<()> {
    require_file(input)?;
    require_parent(out)?;
    if let Some(dir) = lexicon {
        require_dir(dir)?;
    }
    let docs = load_documents(input)?;
    let lex = load_lexicon(lexicon)?;
    let options = TrainOptions {
        folds,
        seed,
        epoch_candidates: epochs,
    };
    let models = pipeline::train_models(&docs, &lex, &options)?;
    fs::create_dir_all(out).map_err(|e| internal(format!("{}: {e}", out.display())))?;
    for (name, model) in [(SAME_MODEL, &models.same), (NEIGHBOR_MODEL, &models.neighbor)] {
        model.save(out.join(name)).map_err(internal)?;
    }
    info!("wrote {} and {} to {}", SAME_MODEL, NEIGHBOR_MODEL, out.display());
    Ok(())
}

/// Everything inference needs, validated and loaded.
struct Inference {
    models: Models,
    lexicon: LexicalResource,
    kb: Option<KnowledgeBase>,
    config: InferenceConfig,
    threads: usize,
}

fn prepare_inference(args: &InferArgs) -> Result<Inference> {
    require_dir(&args.model)?;
    if let Some(kb) = &args.kb {
        require_file(kb)?;
    }
    if let Some(dir) = &args.lexicon {
        require_dir(dir)?;
    }
    if args.lambda.is_nan() || args.lambda < 0.0 {
        return Err(invalid(format!("lambda must be non-negative, got {}", args.lambda)));
    }
    if args.mode == Mode::Ilp && args.lambda > 0.0 && args.kb.is_none() {
        return Err(invalid(PipelineError::MissingKb));
    }
    Ok(Inference {
        models: LocalModels {
            same: load_model(&args.model, SAME_MODEL, Bucket::Same)?,
            neighbor: load_model(&args.model, NEIGHBOR_MODEL, Bucket::Neighbor)?,
        },
        lexicon: load_lexicon(args.lexicon.as_deref())?,
        kb: args.kb.as_deref().map(load_kb).transpose()?,
        config: InferenceConfig {
            mode: args.mode,
            lambda: args.lambda,
            solver: SolverOptions {
                node_budget: args.node_budget,
            },
        },
        threads: args.threads,
    })
}

fn build_kb(input: &Path, out: &Path, args: &InferArgs) -> Result<()> {
    require_file(input)?;
    require_parent(out)?;
    let setup = prepare_inference(args)?;
    let docs = load_documents(input)?;
    let (kb, _) = pipeline::build_kb(
        &docs,
        &setup.models,
        &setup.lexicon,
        setup.kb.as_ref(),
        &setup.config,
        setup.threads,
    )?;
    kb.save(out).map_err(internal)?;
    info!(
        "{} frame pairs from {} graphs written to {}",
        kb.pair_count(),
        kb.graph_count(),
        out.display()
    );
    Ok(())
}

fn run_infer(input: &Path, out: &Path, report: Option<&Path>, args: &InferArgs) -> Result<()> {
    require_file(input)?;
    require_parent(out)?;
    if let Some(r) = report {
        require_parent(r)?;
    }
    let setup = prepare_inference(args)?;
    let docs = load_documents(input)?;
    let (results, _) = pipeline::infer_corpus(
        &docs,
        &setup.models,
        &setup.lexicon,
        setup.kb.as_ref(),
        &setup.config,
        setup.threads,
    )?;
    let labeled: Vec<Document> = docs.iter().zip(&results).map(|(d, r)| r.labeled(d)).collect();
    let mut w = create(out)?;
    write_corpus(&mut w, &labeled)
        .and_then(|_| w.flush())
        .map_err(internal)?;
    if let Some(path) = report {
        let mut w = create(path)?;
        for record in results.iter().flat_map(|r| &r.records) {
            let line = serde_json::to_string(record).map_err(internal)?;
            writeln!(w, "{line}").map_err(internal)?;
        }
        w.flush().map_err(internal)?;
    }
    Ok(())
}

fn by_id(docs: Vec<Document>) -> std::collections::HashMap<String, Document> {
    docs.into_iter().map(|d| (d.doc_id.clone(), d)).collect()
}

/// Per gold pair (in gold order): whether `pred` labels it correctly.
fn correctness(gold: &[Document], pred: &std::collections::HashMap<String, Document>) -> Vec<bool> {
    let mut out = Vec::new();
    for g in gold {
        let pg = pred.get(&g.doc_id).map(Document::gold_graph);
        for (m, n, label) in g.gold_graph().edges() {
            let p = pg.as_ref().and_then(|pg| pg.get(m, n)).unwrap_or(Relation::Vague);
            out.push(p == label);
        }
    }
    out
}

fn eval(gold_path: &Path, pred: Option<&Path>, pred_b: Option<&Path>, kb: Option<&Path>, tau: f64) -> Result<()> {
    require_file(gold_path)?;
    for p in [pred, pred_b, kb].into_iter().flatten() {
        require_file(p)?;
    }
    let gold = load_documents(gold_path)?;
    if let Some(kb_path) = kb {
        return eval_threshold(&gold, &load_kb(kb_path)?, tau);
    }
    let pred_path = pred.expect("clap requires --pred without --kb");
    let pred = by_id(load_documents(pred_path)?);
    let table = CompositionTable::shared();
    let mut all = Confusion::default();
    let mut split = [Confusion::default(), Confusion::default()];
    let mut aware = AwarenessCounts::default();
    for g in &gold {
        let Some(p) = pred.get(&g.doc_id) else {
            return Err(invalid(format!(
                "{}: no prediction for document {}",
                pred_path.display(),
                g.doc_id
            )));
        };
        if p.events.len() != g.events.len() {
            return Err(invalid(format!("document {}: event counts differ", g.doc_id)));
        }
        let (pg, gg) = (p.gold_graph(), g.gold_graph());
        all.merge(&score_where(&pg, &gg, |_, _| true)?);
        for (dist, c) in split.iter_mut().enumerate() {
            c.merge(&score_where(&pg, &gg, |m, n| g.sentence_distance(m, n) == dist)?);
        }
        aware.merge(&awareness(&pg, &gg, table).map_err(|e| invalid(format!("document {}: {e}", g.doc_id)))?);
    }
    let report = EvalReport::new(all, Some(aware));
    print!("{}", report.to_tsv());
    println!("\nsplit\tP\tR\tF1");
    for (dist, c) in split.iter().enumerate() {
        println!("dist={dist}\t{}", c.standard());
    }
    if let Some(b_path) = pred_b {
        let b = by_id(load_documents(b_path)?);
        let test = mcnemar(&correctness(&gold, &pred), &correctness(&gold, &b))?;
        println!("\nmcnemar\tb\tc\tp\tmethod");
        let method = if test.exact { "exact" } else { "chi-square" };
        println!("pred vs pred-b\t{}\t{}\t{:.6e}\t{method}", test.b, test.c, test.p_value);
    }
    Ok(())
}

fn eval_threshold(gold: &[Document], kb: &KnowledgeBase, tau: f64) -> Result<()> {
    let predictor = ThresholdPredictor::new(tau)?;
    let mut c = Confusion::default();
    for d in gold {
        for (m, n, label) in d.gold_graph().edges() {
            c.add(label, predictor.predict_one(kb, &d.events[m].frame, &d.events[n].frame));
        }
    }
    println!("threshold\t{tau}");
    print!("{}", EvalReport::new(c, None).to_tsv());
    Ok(())
}

fn query(kb_path: &Path, pairs: &[(String, String)], top_k: usize) -> Result<()> {
    require_file(kb_path)?;
    if top_k == 0 {
        return Err(invalid("--top-k must be at least 1"));
    }
    let kb = load_kb(kb_path)?;
    for (i, (a, b)) in pairs.iter().enumerate() {
        if i > 0 {
            println!();
        }
        let counts = kb.counts(a, b);
        let eta = kb.eta::<f64>(a, b);
        println!("pair\t{a}\t{b}");
        println!("count_before\t{}", counts[Relation::Before.index()]);
        println!("count_after\t{}", counts[Relation::After.index()]);
        println!("eta_before\t{:.4}", eta.before);
        println!("eta_after\t{:.4}", eta.after);
        let prior = kb.prior_distribution::<f64>(a, b);
        for r in Relation::ALL {
            println!("prior_{}\t{:.4}", r.name(), prior.prob(r));
        }
    }
    let mut frames: Vec<&str> = Vec::new();
    for f in pairs.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]) {
        if !frames.contains(&f) {
            frames.push(f);
        }
    }
    for frame in frames {
        for (dir, label) in [(Direction::TBefore, "T-Before"), (Direction::TAfter, "T-After")] {
            let dist = kb.neighbor_distribution::<f64>(frame, dir, top_k);
            println!("\n{frame} {label}\tpermille");
            for (other, p) in &dist.entries {
                println!("{other}\t{:.1}", p * 1000.0);
            }
        }
    }
    Ok(())
}

fn stats(kb_path: &Path, tau: f64, min_count: u64) -> Result<()> {
    require_file(kb_path)?;
    let kb = load_kb(kb_path)?;
    let pairs = kb.extreme_pairs(tau, min_count).map_err(invalid)?;
    println!("v1\tv2\tT-Before\tT-After\teta_before\teta_after");
    for p in pairs {
        println!(
            "{}\t{}\t{}\t{}\t{:.4}\t{:.4}",
            p.frame1, p.frame2, p.before, p.after, p.prior.before, p.prior.after
        );
    }
    Ok(())
}

fn bootstrap(input: &Path, pairs: &[(String, String)], folds: usize, fraction: f64, seed: u64) -> Result<()> {
    require_file(input)?;
    let docs = load_documents(input)?;
    let graphs = pipeline::framed_graphs(&docs);
    let results = bootstrap_priors::<f64>(&graphs, pairs, folds, fraction, seed).map_err(invalid)?;
    println!("v1\tv2\trelation\tmin\tmax\tfolds");
    for pb in results {
        for r in Relation::ALL {
            let (lo, hi) = pb.envelope(r).expect("at least one fold");
            let values: Vec<String> = pb.values(r).iter().map(|v| format!("{v:.4}")).collect();
            println!(
                "{}\t{}\t{}\t{lo:.4}\t{hi:.4}\t{}",
                pb.frame1,
                pb.frame2,
                r.name(),
                values.join(",")
            );
        }
    }
    Ok(())
}

fn write_synth(out: &Path, documents: usize, seed: u64, gold: bool) -> Result<()> {
    require_parent(out)?;
    let docs = synth::generate(&SynthConfig {
        documents,
        seed,
        gold,
        ..SynthConfig::default()
    });
    let mut w = create(out)?;
    write_corpus(&mut w, &docs).and_then(|_| w.flush()).map_err(internal)?;
    Ok(())
}
