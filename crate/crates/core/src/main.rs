use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use bleached::corpus::{read_documents, read_jsonl, write_jsonl};
use bleached::eval::{extract_corpus, format_table, leave_one_out, macro_average, score, score_by_type};
use bleached::model::sha256_hex;
use bleached::recast::recast_corpus;
use bleached::training::{build_vocab, fit, train, train_on_corpus, TrainConfig, TrainingExample};
use bleached::{parse_ontology, Document, Error, Model, ModelConfig, Ontology};

#[derive(Parser)]
#[command(name = "bleached", version, about = "Event extraction with bleached statements")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with optional "model", "train" and "pretrain" sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for extraction and scoring.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    /// Output file; stdout when omitted and the command allows it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON-lines debug logs on stderr, including refinement traces.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse an ontology and summarise its statements.
    Validate { ontology: PathBuf },
    /// Turn parsed QA JSON lines into cloze training examples.
    Recast { input: PathBuf },
    /// Train a fresh model on recast examples.
    Pretrain { examples: PathBuf },
    /// Train on an event corpus, optionally starting from a checkpoint.
    Train {
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Extract events from documents.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Score predictions against gold documents.
    Eval {
        #[arg(long, required_unless_present = "few_shot")]
        predictions: Option<PathBuf>,
        #[arg(long)]
        gold: PathBuf,
        /// Adds per-type rows and their macro average.
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Train on the first N documents of --corpus, then extract and score --gold.
        #[arg(long, requires_all = ["corpus", "ontology"], conflicts_with = "predictions")]
        few_shot: Option<usize>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Leave-one-out evaluation over the ontology's event types.
    Zeroshot {
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct FileConfig {
    model: ModelConfig,
    train: Option<TrainConfig>,
    pretrain: Option<TrainConfig>,
}

struct Run {
    common: Common,
    file: FileConfig,
    config_hash: String,
}

impl Run {
    fn train_config(&self, pre: bool) -> TrainConfig {
        let base = if pre { &self.file.pretrain } else { &self.file.train };
        let mut c = base.clone().unwrap_or_else(|| if pre { TrainConfig::pretrain() } else { TrainConfig::finetune() });
        if let Some(s) = self.common.seed {
            c.seed = s;
        }
        c
    }

    fn output(&self) -> Result<Box<dyn Write>, Error> {
        Ok(match &self.common.out {
            Some(p) => Box::new(File::create(p)?),
            None => Box::new(std::io::stdout().lock()),
        })
    }

    fn require_out(&self) -> Result<&Path, Failure> {
        self.common
            .out
            .as_deref()
            .ok_or_else(|| Failure::Usage("this command needs --out".into()))
    }

    fn training_precision(&self) -> Result<(), Failure> {
        match self.common.precision {
            Precision::F64 => Ok(()),
            Precision::F32 => Err(Failure::Usage("training runs in 64-bit mode; --precision f32 is for extract".into())),
        }
    }

    /// Provenance sidecar `<out>.meta.json`.
    fn write_meta(&self, out: &Path, extra: serde_json::Value) -> Result<(), Error> {
        let mut meta = json!({
            "output_sha256": sha256_hex(&fs::read(out)?),
            "config_sha256": self.config_hash,
            "seed": self.common.seed,
            "precision": self.common.precision,
            "version": env!("CARGO_PKG_VERSION"),
        });
        if let (Some(m), serde_json::Value::Object(e)) = (meta.as_object_mut(), extra) {
            m.extend(e);
        }
        let mut p = out.as_os_str().to_owned();
        p.push(".meta.json");
        fs::write(PathBuf::from(p), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn load_ontology(path: &Path) -> Result<Ontology, Error> {
    let src = fs::read_to_string(path).map_err(|e| Error::Data {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_ontology(&src).map_err(|e| Error::Data {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}

fn cmd_validate(ontology: &Path) -> Result<(), Failure> {
    let o = load_ontology(ontology)?;
    for s in o.statements() {
        let roles: Vec<_> = s.roles().collect();
        println!("{}\t{} tokens\t{} placeholders\t{}", s.event_type, s.len(), roles.len(), roles.join(","));
    }
    println!("{} event types", o.len());
    Ok(())
}

fn cmd_recast(run: &Run, input: &Path) -> Result<(), Failure> {
    let reader = BufReader::new(File::open(input).map_err(Error::from)?);
    let mut w = run.output()?;
    let summary = recast_corpus(reader, |ex| {
        serde_json::to_writer(&mut w, &ex.example)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    w.flush().map_err(Error::from)?;
    drop(w);
    eprintln!("{}", serde_json::to_string(&summary).map_err(Error::from)?);
    if let Some(out) = &run.common.out {
        run.write_meta(out, json!({ "summary": summary }))?;
    }
    Ok(())
}

fn cmd_pretrain(run: &Run, examples: &Path) -> Result<(), Failure> {
    run.training_precision()?;
    let out = run.require_out()?;
    let data: Vec<TrainingExample> = read_jsonl(examples)?;
    let cfg = run.train_config(true);
    let mut vocab = build_vocab(&Ontology::default(), &[], run.file.model.encoder.lowercase);
    for e in &data {
        vocab.extend(e.statement.iter().chain(&e.text).map(String::as_str));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::new(run.file.model.clone(), vocab, &mut rng)?;
    let report = train(&mut model, &data, &cfg)?;
    model.save(out)?;
    run.write_meta(out, json!({ "train": cfg, "epoch_losses": report.epoch_losses }))?;
    Ok(())
}

fn cmd_train(run: &Run, ontology: &Path, corpus: &Path, init: Option<&Path>) -> Result<(), Failure> {
    run.training_precision()?;
    let out = run.require_out()?;
    let o = load_ontology(ontology)?;
    let docs = read_documents(corpus)?;
    let cfg = run.train_config(false);
    let (model, report) = match init {
        None => fit(run.file.model.clone(), &o, &docs, &cfg)?,
        Some(p) => {
            let mut model = Model::load(p)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let lower = run.file.model.encoder.lowercase;
            let added = model.extend_vocab(build_vocab(&o, &docs, lower).words().iter().map(String::as_str), &mut rng);
            info!("initialised from {}; {added} new vocabulary entries", p.display());
            let report = train_on_corpus(&mut model, &o, &docs, &cfg)?;
            (model, report)
        }
    };
    model.save(out)?;
    let init_hash = match init {
        Some(p) => Some(sha256_hex(&fs::read(p).map_err(Error::from)?)),
        None => None,
    };
    run.write_meta(out, json!({ "train": cfg, "epoch_losses": report.epoch_losses, "init_sha256": init_hash }))?;
    Ok(())
}

fn extract_with(run: &Run, model: &Model, o: &Ontology, docs: &[Document]) -> Vec<Document> {
    match run.common.precision {
        Precision::F64 => extract_corpus(model, o, docs),
        Precision::F32 => extract_corpus(&model.predictor::<f32>(), o, docs),
    }
}

fn cmd_extract(run: &Run, model_path: &Path, ontology: &Path, input: &Path) -> Result<(), Failure> {
    let o = load_ontology(ontology)?;
    let model = Model::load(model_path)?;
    let docs = read_documents(input)?;
    let pred = extract_with(run, &model, &o, &docs);
    match &run.common.out {
        Some(out) => {
            write_jsonl(out, &pred)?;
            run.write_meta(out, json!({ "checkpoint_sha256": model.fingerprint()? }))?;
        }
        None => {
            let mut w = run.output()?;
            for d in &pred {
                writeln!(w, "{}", serde_json::to_string(d).map_err(Error::from)?).map_err(Error::from)?;
            }
        }
    }
    Ok(())
}

fn report_out(run: &Run, rows: &[(String, bleached::ScoreReport)], extra: serde_json::Value) -> Result<(), Failure> {
    print!("{}", format_table(rows));
    if let Some(out) = &run.common.out {
        let body = json!({ "rows": rows, "extra": extra });
        fs::write(out, serde_json::to_string_pretty(&body).map_err(Error::from)? + "\n").map_err(Error::from)?;
        run.write_meta(out, json!({}))?;
    }
    Ok(())
}

fn cmd_eval(
    run: &Run,
    predictions: Option<&Path>,
    gold: &Path,
    ontology: Option<&Path>,
    few_shot: Option<(usize, &Path)>,
) -> Result<(), Failure> {
    let gold_docs = read_documents(gold)?;
    let (pred, extra) = match (few_shot, predictions, ontology) {
        (None, Some(p), _) => (read_documents(p)?, json!({})),
        (Some((n, corpus)), _, Some(op)) => {
            let o = load_ontology(op)?;
            let train_docs = read_documents(corpus)?;
            let cfg = run.train_config(false);
            let docs = bleached::eval::truncate_docs(&train_docs, n);
            let (model, _) = fit(run.file.model.clone(), &o, docs, &cfg)?;
            (extract_with(run, &model, &o, &gold_docs), json!({ "few_shot_docs": docs.len() }))
        }
        _ => return Err(Failure::Usage("eval needs --predictions, or --few-shot with --corpus and --ontology".into())),
    };
    let mut rows = vec![("all".to_string(), score(&pred, &gold_docs)?)];
    if let Some(p) = ontology {
        let per = score_by_type(&pred, &gold_docs, &load_ontology(p)?)?;
        if !per.is_empty() {
            let m = macro_average(&per.iter().map(|(_, r)| *r).collect::<Vec<_>>())?;
            rows.extend(per);
            rows.push(("macro".into(), m));
        }
    }
    report_out(run, &rows, extra)
}

fn cmd_zeroshot(run: &Run, ontology: &Path, corpus: &Path) -> Result<(), Failure> {
    let o = load_ontology(ontology)?;
    let docs = read_documents(corpus)?;
    let cfg = run.train_config(false);
    let loo = leave_one_out(&docs, &o, |held, onto, train_docs| {
        let (mut model, _) = fit(run.file.model.clone(), onto, train_docs, &cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        if let Some(s) = o.get(held) {
            model.extend_vocab(s.tokens.iter().map(String::as_str), &mut rng);
        }
        Ok(model)
    })?;
    let mut rows = loo.per_type.clone();
    rows.push(("macro".into(), loo.macro_avg));
    report_out(run, &rows, json!({ "train": cfg }))
}

fn init_logging(verbose: bool) {
    let mut b = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if verbose { "debug" } else { "warn" }));
    if verbose {
        b.format(|buf, rec| {
            let line = json!({
                "level": rec.level().as_str(),
                "target": rec.target(),
                "msg": rec.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    let _ = b.try_init();
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (file, config_hash) = match &cli.common.config {
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| Error::Data {
                context: p.display().to_string(),
                message: e.to_string(),
            })?;
            let cfg: FileConfig = serde_json::from_slice(&bytes).map_err(|e| Error::Data {
                context: p.display().to_string(),
                message: e.to_string(),
            })?;
            (cfg, sha256_hex(&bytes))
        }
        None => (FileConfig::default(), sha256_hex(b"{}")),
    };
    if let Some(n) = cli.common.jobs {
        if n == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let run = Run {
        common: cli.common,
        file,
        config_hash,
    };
    match &cli.cmd {
        Cmd::Validate { ontology } => cmd_validate(ontology),
        Cmd::Recast { input } => cmd_recast(&run, input),
        Cmd::Pretrain { examples } => cmd_pretrain(&run, examples),
        Cmd::Train { ontology, corpus, init } => cmd_train(&run, ontology, corpus, init.as_deref()),
        Cmd::Extract { model, ontology, input } => cmd_extract(&run, model, ontology, input),
        Cmd::Eval {
            predictions,
            gold,
            ontology,
            few_shot,
            corpus,
        } => cmd_eval(
            &run,
            predictions.as_deref(),
            gold,
            ontology.as_deref(),
            few_shot.zip(corpus.as_deref()),
        ),
        Cmd::Zeroshot { ontology, corpus } => cmd_zeroshot(&run, ontology, corpus),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.common.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(2)
        }
    }
}
